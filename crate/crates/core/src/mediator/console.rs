//! `tracer_toplevel`: the interactive command loop run at synchronous stops.

use std::cell::RefCell;
use std::collections::VecDeque;
use std::io::{BufRead, Write};
use std::rc::Rc;
use std::sync::mpsc::Receiver;

use super::{Analysis, Call, Mediator, MediatorError};
use crate::pattern::{format_pattern, parse_patterns, Value};
use crate::trace::{AttrKey, AttrValue, Port};
use crate::wire::{Reply, Request};

pub const STEP_PATTERN: &str = "step: when true do_synchro call(tracer_toplevel)";
pub const SKIPRED_TEMPLATE: &str =
    "sr: when cstr = CId and port in [suspend,reject,entail] dosynchro call(tracer_toplevel)";

/// Stop at the very next event.
pub fn cmd_step(c: &mut Call<'_>) -> Result<(), MediatorError> {
    c.request_ok(Request::Reset)?;
    c.request_ok(Request::Add(STEP_PATTERN.to_string()))?;
    Ok(())
}

/// At an `awake`, stop at the end of that constraint's activation;
/// elsewhere, same as `step`.
pub fn cmd_skip_reductions(c: &mut Call<'_>) -> Result<(), MediatorError> {
    let data = c.request_ok(Request::Current(vec![AttrKey::Cstr, AttrKey::Port]))?;
    let get = |k| {
        data.iter()
            .find(|(key, _)| *key == k)
            .map(|(_, v)| v.clone())
    };
    let awake = get(AttrKey::Port) == Some(AttrValue::Port(Port::Awake));
    match (awake, get(AttrKey::Cstr)) {
        (true, Some(AttrValue::Int(cid))) => {
            c.request_ok(Request::Reset)?;
            let template = parse_patterns(SKIPRED_TEMPLATE).expect("template parses");
            let mut p = template.into_iter().next().unwrap();
            p.cond = p.cond.substitute("CId", &Value::Int(cid));
            c.request_ok(Request::Add(format_pattern(&p)))?;
            Ok(())
        }
        _ => cmd_step(c),
    }
}

pub trait CommandSource {
    /// Next command line; `None` when the user is gone.
    fn next_line(&mut self) -> Option<String>;
}

/// Commands given up front.
#[derive(Debug, Default)]
pub struct ScriptSource(VecDeque<String>);

impl ScriptSource {
    pub fn new(script: &str) -> Self {
        ScriptSource(script.lines().map(str::to_string).collect())
    }
}

impl CommandSource for ScriptSource {
    fn next_line(&mut self) -> Option<String> {
        self.0.pop_front()
    }
}

/// Commands read from a stream (stdin).
pub struct LineSource<R>(pub R);

impl<R: BufRead> CommandSource for LineSource<R> {
    fn next_line(&mut self) -> Option<String> {
        let mut s = String::new();
        match self.0.read_line(&mut s) {
            Ok(0) | Err(_) => None,
            Ok(_) => Some(s.trim_end().to_string()),
        }
    }
}

/// Commands posted by another thread (the UI bridge).
impl CommandSource for Receiver<String> {
    fn next_line(&mut self) -> Option<String> {
        self.recv().ok()
    }
}

pub struct Console {
    source: Box<dyn CommandSource>,
    out: Box<dyn Write>,
    prompt: bool,
    detached: bool,
    /// Chronos of the events the toplevel was entered at.
    pub stops: Vec<u64>,
}

const HELP: &str = "\
commands:
  step              stop at the next event
  skipred           at an awake, stop when the constraint suspends, entails or rejects
  go                resume with the current patterns
  add <pattern>     activate a pattern
  remove <labels>   deactivate patterns
  reset             deactivate every pattern
  current <attrs>   show attributes of the current event
  tree              show the search tree
  stats             show analyzer counters";

enum Outcome {
    Resume,
    Stay,
}

impl Console {
    pub fn new(source: Box<dyn CommandSource>, out: Box<dyn Write>) -> Self {
        Console {
            source,
            out,
            prompt: false,
            detached: false,
            stops: Vec::new(),
        }
    }

    /// Prints `> ` before reading each command.
    pub fn with_prompt(mut self) -> Self {
        self.prompt = true;
        self
    }

    /// Registers the console as `tracer_toplevel`.
    pub fn register(
        self,
        m: &mut Mediator,
        analysis: Rc<RefCell<Analysis>>,
    ) -> Result<Rc<RefCell<Console>>, MediatorError> {
        let me = Rc::new(RefCell::new(self));
        let h = Rc::clone(&me);
        m.register_handler("tracer_toplevel", move |c| {
            h.borrow_mut().toplevel(c, &analysis)
        })?;
        Ok(me)
    }

    fn say(&mut self, s: &str) {
        let _ = writeln!(self.out, "{s}");
    }

    fn toplevel(
        &mut self,
        c: &mut Call<'_>,
        analysis: &RefCell<Analysis>,
    ) -> Result<(), MediatorError> {
        self.stops.push(c.chrono);
        let mut line = format!("[{}] {}", c.chrono, c.label);
        for (k, v) in &c.data {
            line.push_str(&format!(" {k}={v}"));
        }
        self.say(&line);
        if self.detached || !c.sync {
            return Ok(());
        }
        loop {
            if self.prompt {
                let _ = write!(self.out, "> ");
            }
            let _ = self.out.flush();
            let Some(cmd) = self.source.next_line() else {
                // no more input: clear the stops and let the run finish
                self.detached = true;
                c.request_ok(Request::Reset)?;
                return Ok(());
            };
            match self.command(cmd.trim(), c, analysis) {
                Ok(Outcome::Resume) => return Ok(()),
                Ok(Outcome::Stay) => {}
                Err(MediatorError::Rejected(reason)) => self.say(&format!("error: {reason}")),
                Err(e) => return Err(e),
            }
        }
    }

    fn command(
        &mut self,
        cmd: &str,
        c: &mut Call<'_>,
        analysis: &RefCell<Analysis>,
    ) -> Result<Outcome, MediatorError> {
        let (word, rest) = cmd.split_once(char::is_whitespace).unwrap_or((cmd, ""));
        let rest = rest.trim();
        match word {
            "" => {}
            "step" | "s" => {
                cmd_step(c)?;
                return Ok(Outcome::Resume);
            }
            "skipred" | "skip_reductions" => {
                cmd_skip_reductions(c)?;
                return Ok(Outcome::Resume);
            }
            "go" | "continue" | "c" => return Ok(Outcome::Resume),
            "add" => {
                c.request_ok(Request::Add(rest.to_string()))?;
                self.say("ok");
            }
            "remove" => {
                let labels = rest
                    .split(|ch: char| ch == ',' || ch.is_whitespace())
                    .filter(|s| !s.is_empty())
                    .map(str::to_string)
                    .collect();
                c.request_ok(Request::Remove(labels))?;
                self.say("ok");
            }
            "reset" => {
                c.request_ok(Request::Reset)?;
                self.say("ok");
            }
            "current" => {
                let mut keys = Vec::new();
                // accepts `port chrono`, `port, chrono` and `cstr = CId and port = P`
                for w in
                    rest.split(|ch: char| ch == ',' || ch == '(' || ch == ')' || ch.is_whitespace())
                {
                    if w.is_empty()
                        || w == "and"
                        || w == "="
                        || w.starts_with(|ch: char| ch.is_ascii_uppercase())
                    {
                        continue;
                    }
                    let name = w.split('=').next().unwrap();
                    match AttrKey::from_name(name) {
                        Some(k) => keys.push(k),
                        None => {
                            self.say(&format!("error: unknown attribute `{name}`"));
                            return Ok(Outcome::Stay);
                        }
                    }
                }
                if keys.is_empty() {
                    self.say("error: current needs attribute names");
                    return Ok(Outcome::Stay);
                }
                match c.request(Request::Current(keys))? {
                    Reply::Ok { data, unavailable } => {
                        for (k, v) in data {
                            self.say(&format!("  {k} = {v}"));
                        }
                        for k in unavailable {
                            self.say(&format!("  {k} unavailable"));
                        }
                    }
                    Reply::Error { reason } => self.say(&format!("error: {reason}")),
                }
            }
            "tree" => {
                let s = analysis.borrow().tree.render();
                self.say(s.trim_end());
            }
            "stats" => {
                let a = analysis.borrow();
                let s = format!(
                    "stops={} nodes={} solutions={} failures={} constraints={} reductions={}",
                    self.stops.len(),
                    a.tree.node_count(),
                    a.tree.solutions(),
                    a.tree.failures(),
                    a.constraints.len(),
                    a.propagation.values().sum::<u64>()
                );
                drop(a);
                self.say(&s);
            }
            "help" | "?" => self.say(HELP),
            other => self.say(&format!("unknown command `{other}` (try help)")),
        }
        Ok(Outcome::Stay)
    }
}
