//! Full recording of an execution, for post-hoc filtering.

use std::sync::Arc;

use crate::intset::IntSet;
use crate::kernel::{Constraint, Control, SolverState, Tracer, VarInfo};
use crate::matcher::naive_eval;
use crate::pattern::Pattern;
use crate::trace::{AttrKey, AttrValue, Port, Specifics, StateView, TraceEvent};

#[derive(Debug, Clone)]
pub struct RecordedEvent {
    pub port: Port,
    pub chrono: u64,
    pub depth: u32,
    pub node: u64,
    pub usertime: u64,
    pub specifics: Specifics,
    domains: Arc<Vec<IntSet>>,
}

/// Every event of a run with the domains as they were at that event.
/// Constraints are append-only in the solver, so the final table serves
/// every event.
#[derive(Debug, Clone, Default)]
pub struct RecordedTrace {
    pub vars: Vec<VarInfo>,
    pub constraints: Vec<Arc<Constraint>>,
    pub events: Vec<RecordedEvent>,
}

impl RecordedTrace {
    pub fn len(&self) -> usize {
        self.events.len()
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }

    /// Runs `f` on a fresh (empty-cache) event for record `i`.
    pub fn with_event<R>(&self, i: usize, f: impl FnOnce(&TraceEvent<'_>) -> R) -> R {
        let r = &self.events[i];
        let n = r.domains.len();
        let view = StateView {
            vars: &self.vars[..n],
            domains: &r.domains,
            constraints: &self.constraints,
        };
        let e = TraceEvent::new(
            r.port,
            r.chrono,
            r.depth,
            r.node,
            r.usertime,
            &r.specifics,
            view,
        );
        f(&e)
    }

    pub fn ports(&self) -> Vec<Port> {
        self.events.iter().map(|e| e.port).collect()
    }
}

#[derive(Debug, Default)]
pub struct RecordingTracer {
    trace: RecordedTrace,
    last: Option<Arc<Vec<IntSet>>>,
}

impl RecordingTracer {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn into_trace(self) -> RecordedTrace {
        self.trace
    }
}

impl Tracer for RecordingTracer {
    fn event(&mut self, port: Port, specifics: Specifics, state: &SolverState) -> Control {
        let domains = match &self.last {
            Some(d) if d.as_slice() == state.domains() => Arc::clone(d),
            _ => {
                let d = Arc::new(state.domains().to_vec());
                self.last = Some(Arc::clone(&d));
                d
            }
        };
        let known = self.trace.vars.len();
        self.trace.vars.extend_from_slice(&state.vars()[known..]);
        let known = self.trace.constraints.len();
        self.trace
            .constraints
            .extend(state.constraints()[known..].iter().cloned());
        self.trace.events.push(RecordedEvent {
            port,
            chrono: state.chrono(),
            depth: state.depth(),
            node: state.node(),
            usertime: state.usertime(),
            specifics,
            domains,
        });
        Control::Continue
    }
}

/// What the analyzer receives for one event.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Filtered {
    pub chrono: u64,
    pub labels: Vec<String>,
    pub data: Vec<(AttrKey, AttrValue)>,
}

/// Post-hoc filtering of a recorded trace: every pattern's condition is
/// evaluated directly on every event.
pub fn post_hoc(trace: &RecordedTrace, patterns: &[Pattern]) -> Vec<Filtered> {
    let keys: Vec<Vec<AttrKey>> = patterns.iter().map(Pattern::current_keys).collect();
    let mut out = Vec::new();
    for i in 0..trace.len() {
        trace.with_event(i, |e| {
            let mut labels = Vec::new();
            let mut wanted: Vec<AttrKey> = Vec::new();
            for (p, ks) in patterns.iter().zip(&keys) {
                if naive_eval(&p.cond, e) {
                    labels.push(p.label.clone());
                    for k in ks {
                        if !wanted.contains(k) {
                            wanted.push(*k);
                        }
                    }
                }
            }
            if !labels.is_empty() {
                let data = wanted
                    .into_iter()
                    .filter(|k| e.is_available(*k))
                    .map(|k| (k, e.attribute(k).unwrap()))
                    .collect();
                out.push(Filtered {
                    chrono: e.chrono,
                    labels,
                    data,
                });
            }
        });
    }
    out
}
