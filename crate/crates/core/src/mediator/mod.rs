//! The analyzer mediator: receives trace messages, runs the analyzer
//! procedures named by each matched pattern, and releases the execution
//! with a single `go` once every handler of a synchronous message is done.

mod analysis;
mod bridge;
mod console;

use std::collections::BTreeMap;
use std::io::Write;
use std::thread;

use indexmap::IndexMap;
use thiserror::Error;

use crate::driver::TracerDriver;
use crate::kernel::{solve, Model, SolveOutcome};
use crate::trace::{AttrKey, AttrValue};
use crate::wire::{
    encode_frame, ChannelEndpoint, ChannelLink, Endpoint, Frame, Reply, Request, TraceMessage,
    WireError,
};

pub use analysis::{
    register_builtins, Analysis, ConstraintRow, Leaf, NodeKind, SearchTreeModel, TreeNode,
    VISUALIZATION_PATTERNS,
};
pub use bridge::{accept_ui, ui_command, UiBridge};
pub use console::{
    cmd_skip_reductions, cmd_step, CommandSource, Console, LineSource, ScriptSource,
    SKIPRED_TEMPLATE, STEP_PATTERN,
};

#[derive(Debug, Error)]
pub enum MediatorError {
    #[error("handler `{0}` is already registered")]
    DuplicateName(String),
    #[error("requests can only be issued while the execution is frozen")]
    NotFrozen,
    #[error("`go` is sent by the mediator once all handlers are done")]
    GoFromHandler,
    #[error("protocol error: {0}")]
    Protocol(String),
    #[error("driver replied with an error: {0}")]
    Rejected(String),
    #[error(transparent)]
    Wire(#[from] WireError),
    #[error("{0}")]
    Handler(String),
}

/// Invocation of one analyzer procedure for one matched pattern.
pub struct Call<'a> {
    pub label: &'a str,
    pub chrono: u64,
    pub sync: bool,
    /// This pattern's `current` attributes, in its own order.
    pub data: Vec<(AttrKey, AttrValue)>,
    link: &'a mut dyn Endpoint,
    requests: &'a mut u64,
}

impl Call<'_> {
    pub fn get(&self, key: AttrKey) -> Option<&AttrValue> {
        self.data.iter().find(|(k, _)| *k == key).map(|(_, v)| v)
    }

    pub fn int(&self, key: AttrKey) -> Option<i64> {
        match self.get(key) {
            Some(AttrValue::Int(i)) => Some(*i),
            _ => None,
        }
    }

    /// Sends a request to the frozen driver and waits for its reply.
    pub fn request(&mut self, r: Request) -> Result<Reply, MediatorError> {
        if !self.sync {
            return Err(MediatorError::NotFrozen);
        }
        if r == Request::Go {
            return Err(MediatorError::GoFromHandler);
        }
        *self.requests += 1;
        self.link.send(r)?;
        match self.link.recv()? {
            Some(Frame::Reply(rep)) => Ok(rep),
            Some(other) => Err(MediatorError::Protocol(format!(
                "expected a reply, got {}",
                encode_frame(&other)
            ))),
            None => Err(WireError::ChannelClosed.into()),
        }
    }

    /// Like `request`, turning an error reply into an error.
    pub fn request_ok(&mut self, r: Request) -> Result<Vec<(AttrKey, AttrValue)>, MediatorError> {
        match self.request(r)? {
            Reply::Ok { data, .. } => Ok(data),
            Reply::Error { reason } => Err(MediatorError::Rejected(reason)),
        }
    }
}

pub type Handler = Box<dyn FnMut(&mut Call<'_>) -> Result<(), MediatorError>>;

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct MediatorStats {
    pub messages: u64,
    pub sync_messages: u64,
    pub gos: u64,
    pub requests: u64,
    pub handler_calls: u64,
    pub unresolved: u64,
    pub per_label: BTreeMap<String, u64>,
    pub program: Option<String>,
    /// Event count announced by the driver's `bye`.
    pub events: Option<u64>,
}

/// Endpoint wrapper copying every frame (both directions) to a mirror.
struct Mirrored<'a, E: Endpoint + ?Sized> {
    inner: &'a mut E,
    mirror: Option<Box<dyn Write + Send>>,
}

impl<E: Endpoint + ?Sized> Mirrored<'_, E> {
    fn copy(&mut self, f: &Frame) {
        if let Some(m) = self.mirror.as_mut() {
            let mut line = encode_frame(f);
            line.push('\n');
            if m.write_all(line.as_bytes())
                .and_then(|_| m.flush())
                .is_err()
            {
                log::warn!("mirror closed");
                self.mirror = None;
            }
        }
    }
}

impl<E: Endpoint + ?Sized> Endpoint for Mirrored<'_, E> {
    fn recv(&mut self) -> Result<Option<Frame>, WireError> {
        let f = self.inner.recv()?;
        if let Some(f) = &f {
            self.copy(f);
        }
        Ok(f)
    }

    fn send(&mut self, r: Request) -> Result<(), WireError> {
        self.copy(&Frame::Request(r.clone()));
        self.inner.send(r)
    }
}

#[derive(Default)]
pub struct Mediator {
    handlers: IndexMap<String, Handler>,
    stats: MediatorStats,
    mirror: Option<Box<dyn Write + Send>>,
}

impl Mediator {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn register_handler(
        &mut self,
        name: &str,
        h: impl FnMut(&mut Call<'_>) -> Result<(), MediatorError> + 'static,
    ) -> Result<(), MediatorError> {
        if self.handlers.contains_key(name) {
            return Err(MediatorError::DuplicateName(name.to_string()));
        }
        self.handlers.insert(name.to_string(), Box::new(h));
        Ok(())
    }

    pub fn has_handler(&self, name: &str) -> bool {
        self.handlers.contains_key(name)
    }

    pub fn stats(&self) -> &MediatorStats {
        &self.stats
    }

    /// Copies every frame exchanged with the driver to `w` (the UI bridge).
    pub fn set_mirror(&mut self, w: Box<dyn Write + Send>) {
        self.mirror = Some(w);
    }

    /// Runs the procedures of `m`, label by label, then releases a frozen
    /// execution with exactly one `go`.
    pub fn dispatch(
        &mut self,
        m: &TraceMessage,
        link: &mut dyn Endpoint,
    ) -> Result<(), MediatorError> {
        self.stats.messages += 1;
        if m.sync {
            self.stats.sync_messages += 1;
        }
        for label in &m.labels {
            *self.stats.per_label.entry(label.clone()).or_default() += 1;
            for target in m.calls.iter().filter(|c| &c.label == label) {
                let Some(h) = self.handlers.get_mut(&target.proc_name) else {
                    log::warn!(
                        "pattern `{label}` calls unknown procedure `{}`",
                        target.proc_name
                    );
                    self.stats.unresolved += 1;
                    continue;
                };
                self.stats.handler_calls += 1;
                let mut call = Call {
                    label,
                    chrono: m.chrono,
                    sync: m.sync,
                    data: m.slice(&target.keys),
                    link: &mut *link,
                    requests: &mut self.stats.requests,
                };
                if let Err(e) = h(&mut call) {
                    match e {
                        MediatorError::Wire(_) | MediatorError::Protocol(_) => return Err(e),
                        other => log::warn!("procedure `{}` failed: {other}", target.proc_name),
                    }
                }
            }
        }
        if m.sync {
            self.stats.gos += 1;
            link.send(Request::Go)?;
        }
        Ok(())
    }

    /// Serves one driver connection until `bye` or disconnection.
    pub fn run<E: Endpoint + ?Sized>(
        &mut self,
        link: &mut E,
    ) -> Result<MediatorStats, MediatorError> {
        let mut ep = Mirrored {
            inner: link,
            mirror: self.mirror.take(),
        };
        let result = self.serve(&mut ep);
        self.mirror = ep.mirror;
        result.map(|_| self.stats.clone())
    }

    fn serve(&mut self, ep: &mut dyn Endpoint) -> Result<(), MediatorError> {
        loop {
            match ep.recv()? {
                None => return Ok(()),
                Some(Frame::Hello { program }) => self.stats.program = Some(program),
                Some(Frame::Event(m)) => self.dispatch(&m, ep)?,
                Some(Frame::Bye { events }) => {
                    self.stats.events = Some(events);
                    return Ok(());
                }
                Some(other) => {
                    return Err(MediatorError::Protocol(format!(
                        "unexpected frame {}",
                        encode_frame(&other)
                    )))
                }
            }
        }
    }
}

/// Runs `model` under `driver` on a worker thread and serves it with `m`
/// on the calling thread until the run ends.
pub fn serve_in_process(
    m: &mut Mediator,
    program: &str,
    model: Model,
    mut driver: TracerDriver<ChannelLink>,
    mut ep: ChannelEndpoint,
) -> Result<(SolveOutcome, MediatorStats), MediatorError> {
    let name = program.to_string();
    let worker = thread::spawn(move || {
        let _ = driver.hello(&name);
        let out = solve(&model, &mut driver);
        let _ = driver.finish(out.events);
        out
    });
    let stats = m.run(&mut ep);
    // a solver blocked on a full queue or a request sees the channel close
    drop(ep);
    let out = worker.join().expect("solver thread panicked");
    Ok((out, stats?))
}
