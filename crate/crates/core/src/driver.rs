//! The tracer driver: matches each event against the active patterns,
//! emits one message per matched event and serves requests while frozen.

use std::fmt::Write as _;

use smallvec::SmallVec;
use thiserror::Error;

use crate::kernel::{Control, SolverState, Tracer};
use crate::matcher::{ActivePatternSet, MatchError};
use crate::pattern::{load_patterns, Action, Pattern, PatternError};
use crate::trace::{AttrKey, AttrValue, Port, Specifics, TraceEvent, PORT_COUNT};
use crate::wire::{CallTarget, Frame, Link, Reply, Request, TraceMessage, WireError};

#[derive(Debug, Error)]
pub enum DriverError {
    #[error(transparent)]
    Pattern(#[from] PatternError),
    #[error(transparent)]
    Match(#[from] MatchError),
    #[error("request `{0}` is only valid while the execution is frozen")]
    NotFrozen(&'static str),
    #[error(transparent)]
    Wire(#[from] WireError),
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct DriverStats {
    /// Hook calls that reached the matcher.
    pub checked: u64,
    pub messages: u64,
    pub sync_messages: u64,
    pub requests: u64,
    /// Lazily computed attributes, per port of the event they were
    /// computed for.
    pub computed: [u64; PORT_COUNT],
}

/// Builds the message for the patterns at `tagged` positions: labels in
/// activation order, each requested key once.
pub fn build_message(entries: &[(&Pattern, &[AttrKey])], e: &TraceEvent<'_>) -> TraceMessage {
    let mut keys: SmallVec<[AttrKey; 8]> = SmallVec::new();
    let mut labels = Vec::with_capacity(entries.len());
    let mut calls = Vec::new();
    let mut sync = false;
    for (p, pkeys) in entries {
        labels.push(p.label.clone());
        sync |= p.sync;
        for k in pkeys.iter() {
            if !keys.contains(k) {
                keys.push(*k);
            }
        }
        for a in &p.actions {
            if let Action::Call { name, .. } = a {
                calls.push(CallTarget {
                    label: p.label.clone(),
                    proc_name: name.clone(),
                    keys: pkeys.to_vec(),
                });
            }
        }
    }
    let data = keys
        .iter()
        .filter_map(|&k| e.attribute(k).ok().map(|v| (k, v)))
        .collect();
    TraceMessage {
        chrono: e.chrono,
        sync,
        labels,
        data,
        calls,
    }
}

pub struct TracerDriver<L: Link> {
    set: ActivePatternSet,
    link: L,
    check_flags: bool,
    closed: bool,
    stats: DriverStats,
}

impl<L: Link> TracerDriver<L> {
    pub fn new(link: L) -> Self {
        TracerDriver {
            set: ActivePatternSet::new(),
            link,
            check_flags: true,
            closed: false,
            stats: DriverStats::default(),
        }
    }

    pub fn with_set(link: L, set: ActivePatternSet) -> Self {
        let mut d = Self::new(link);
        d.set = set;
        d
    }

    pub fn with_patterns(link: L, src: &str) -> Result<Self, DriverError> {
        let mut d = Self::new(link);
        d.set.add_patterns(load_patterns(src)?)?;
        Ok(d)
    }

    pub fn patterns(&self) -> &ActivePatternSet {
        &self.set
    }

    pub fn patterns_mut(&mut self) -> &mut ActivePatternSet {
        &mut self.set
    }

    /// With the check off, every event goes through the matcher even when
    /// no pattern is relevant to its port.
    pub fn set_flag_check(&mut self, on: bool) {
        self.check_flags = on;
    }

    pub fn stats(&self) -> DriverStats {
        self.stats
    }

    pub fn link(&self) -> &L {
        &self.link
    }

    pub fn hello(&mut self, program: &str) -> Result<(), WireError> {
        self.link.send(Frame::Hello {
            program: program.to_string(),
        })
    }

    /// Sends `bye` and hands back the link.
    pub fn finish(mut self, events: u64) -> (L, DriverStats) {
        if !self.closed {
            let _ = self.link.send(Frame::Bye { events });
        }
        (self.link, self.stats)
    }

    /// Executes a request. `frozen` is the current event when the
    /// execution is frozen on it.
    pub fn execute_request(
        &mut self,
        r: Request,
        frozen: Option<&TraceEvent<'_>>,
    ) -> Result<Reply, DriverError> {
        match r {
            Request::Current(keys) => {
                let e = frozen.ok_or(DriverError::NotFrozen("current"))?;
                let mut data = Vec::new();
                let mut unavailable = Vec::new();
                for k in keys {
                    match e.attribute(k) {
                        Ok(v) => data.push((k, v)),
                        Err(_) => unavailable.push(k),
                    }
                }
                Ok(Reply::Ok { data, unavailable })
            }
            Request::Add(src) => {
                let ps = load_patterns(&src)?;
                self.set.add_patterns(ps)?;
                Ok(Reply::ok())
            }
            Request::Remove(labels) => {
                self.set.remove_patterns(&labels)?;
                Ok(Reply::ok())
            }
            Request::Reset => {
                self.set.reset();
                Ok(Reply::ok())
            }
            Request::Go => Err(DriverError::NotFrozen("go")),
        }
    }

    fn on_event(&mut self, e: &TraceEvent<'_>) -> Result<(), WireError> {
        self.stats.checked += 1;
        let mut tagged: SmallVec<[u32; 8]> = SmallVec::new();
        for &i in self.set.port_index(e.port) {
            if self.set.entries()[i as usize].matches(e) {
                tagged.push(i);
            }
        }
        if tagged.is_empty() {
            return Ok(());
        }
        let msg = {
            let entries = self.set.entries();
            let parts: SmallVec<[(&Pattern, &[AttrKey]); 8]> = tagged
                .iter()
                .map(|&i| {
                    let en = &entries[i as usize];
                    (&en.pattern, en.keys.as_slice())
                })
                .collect();
            build_message(&parts, e)
        };
        let sync = msg.sync;
        self.stats.messages += 1;
        self.link.send(Frame::Event(msg))?;
        if !sync {
            return Ok(());
        }
        self.stats.sync_messages += 1;
        loop {
            let r = self.link.recv()?;
            self.stats.requests += 1;
            if r == Request::Go {
                return Ok(());
            }
            let reply = match self.execute_request(r, Some(e)) {
                Ok(rep) => rep,
                Err(err) => Reply::Error {
                    reason: err.to_string(),
                },
            };
            self.link.send(Frame::Reply(reply))?;
        }
    }
}

impl<L: Link> Tracer for TracerDriver<L> {
    #[inline]
    fn event(&mut self, port: Port, specifics: Specifics, state: &SolverState) -> Control {
        if self.check_flags && !self.set.port_flag(port) {
            return Control::Continue;
        }
        if self.closed {
            return Control::Abort;
        }
        let e = TraceEvent::live(port, &specifics, state);
        let r = self.on_event(&e);
        self.stats.computed[port.index()] += e.computed_attribute_count() as u64;
        match r {
            Ok(()) => Control::Continue,
            Err(err) => {
                log::warn!("mediator link lost at event {}: {err}", e.chrono);
                self.closed = true;
                Control::Abort
            }
        }
    }
}

/// Attributes of the untargeted default trace at `port`: the common ones
/// plus the port's specific ones, except the whole-store attributes.
pub fn default_keys(port: Port) -> Vec<AttrKey> {
    AttrKey::ALL
        .iter()
        .copied()
        .filter(|k| {
            !matches!(k, AttrKey::FullDom | AttrKey::NamedVars) && k.availability().contains(port)
        })
        .collect()
}

/// Sends every event with the default attribute set.
pub struct DefaultTrace<L: Link> {
    link: L,
    keys: Vec<Vec<AttrKey>>,
    closed: bool,
    pub messages: u64,
}

impl<L: Link> DefaultTrace<L> {
    pub fn new(link: L) -> Self {
        DefaultTrace {
            link,
            keys: Port::ALL.iter().map(|&p| default_keys(p)).collect(),
            closed: false,
            messages: 0,
        }
    }

    pub fn into_link(self) -> L {
        self.link
    }
}

impl<L: Link> Tracer for DefaultTrace<L> {
    fn event(&mut self, port: Port, specifics: Specifics, state: &SolverState) -> Control {
        if self.closed {
            return Control::Abort;
        }
        let e = TraceEvent::live(port, &specifics, state);
        let data = self.keys[port.index()]
            .iter()
            .filter_map(|&k| e.attribute(k).ok().map(|v| (k, v)))
            .collect();
        let msg = TraceMessage {
            chrono: e.chrono,
            sync: false,
            labels: vec!["trace".to_string()],
            data,
            calls: vec![],
        };
        self.messages += 1;
        if self.link.send(Frame::Event(msg)).is_err() {
            self.closed = true;
            return Control::Abort;
        }
        Control::Continue
    }
}

/// Largest domain written value by value in text renderings.
const ENUM_LIMIT: u64 = 32;

fn render_domain(v: &AttrValue) -> String {
    match v {
        AttrValue::IntSet(s) if s.len() <= ENUM_LIMIT => format!("[{}]", s.to_value_list()),
        AttrValue::IntSet(s) => format!("[{s}]"),
        other => other.to_string(),
    }
}

/// One human-readable trace line, e.g.
/// `4 reduce c1 v1=[1,2,3] delta=[0,4-268435455]`.
pub fn render_line(e: &TraceEvent<'_>) -> String {
    let mut s = format!("{} {}", e.chrono, e.port.name());
    let sp = e.specifics();
    let state = e.state();
    match e.port {
        Port::NewVariable | Port::Schedule => {
            let v = sp.var().unwrap();
            let dom = e.attribute(AttrKey::Dom).unwrap();
            let _ = write!(s, " v{v}={}", render_domain(&dom));
        }
        Port::NewConstraint | Port::Post => {
            let c = sp.cstr().unwrap();
            let _ = write!(s, " c{c} {}", state.constraint(c).rep());
        }
        Port::Reduce => {
            let (c, v) = (sp.cstr().unwrap(), sp.var().unwrap());
            let dom = e.attribute(AttrKey::Dom).unwrap();
            let delta = e.attribute(AttrKey::Delta).unwrap();
            let _ = write!(s, " c{c} v{v}={} delta={delta}", render_domain(&dom));
        }
        Port::Suspend | Port::Entail | Port::Reject | Port::Awake => {
            let _ = write!(s, " c{}", sp.cstr().unwrap());
        }
        Port::NewChild | Port::JumpTo | Port::Solution | Port::Failure => {
            let _ = write!(s, " node={} depth={}", e.node, e.depth);
        }
        Port::EndOfTrace => {}
    }
    s
}

/// Prints every event as a text line.
pub struct TextTrace<W: std::io::Write> {
    out: W,
}

impl<W: std::io::Write> TextTrace<W> {
    pub fn new(out: W) -> Self {
        TextTrace { out }
    }
}

impl<W: std::io::Write> Tracer for TextTrace<W> {
    fn event(&mut self, port: Port, specifics: Specifics, state: &SolverState) -> Control {
        let e = TraceEvent::new(
            port,
            state.chrono(),
            state.depth(),
            state.node(),
            0,
            &specifics,
            state.view(),
        );
        match writeln!(self.out, "{}", render_line(&e)) {
            Ok(()) => Control::Continue,
            Err(_) => Control::Abort,
        }
    }
}
