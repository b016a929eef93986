//! A small finite-domain solver: propagation over a FIFO awakening queue
//! plus depth-first labeling with binary choice points. Every instrumented
//! site reports to a [`Tracer`].

mod catalog;
mod model;
mod propagators;
mod solver;

use std::cell::Cell;
use std::collections::VecDeque;
use std::fmt::Write as _;
use std::sync::Arc;
use std::time::Instant;

pub use catalog::{catalog_names, program, Program, UnknownProgram};
pub use model::{load_model, ConstraintSpec, Item, Labeling, Model, ModelError, VarDecl, VarOrder};
pub use solver::{solve, SolveOutcome};

use crate::intset::IntSet;
use crate::trace::{Port, Specifics, StateView};

/// Outcome of a hook call.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Control {
    Continue,
    /// Stop the execution; the solver unwinds and emits `endOfTrace`.
    Abort,
}

/// Receiver of execution events. Called synchronously from the solver
/// thread at each of the instrumented sites.
pub trait Tracer {
    fn event(&mut self, port: Port, specifics: Specifics, state: &SolverState) -> Control;
}

impl<T: Tracer + ?Sized> Tracer for &mut T {
    #[inline]
    fn event(&mut self, port: Port, specifics: Specifics, state: &SolverState) -> Control {
        (**self).event(port, specifics, state)
    }
}

/// Both tracers observe every event; either may abort.
impl<A: Tracer, B: Tracer> Tracer for (A, B) {
    fn event(&mut self, port: Port, specifics: Specifics, state: &SolverState) -> Control {
        let a = self.0.event(port, specifics.clone(), state);
        let b = self.1.event(port, specifics, state);
        if a == Control::Abort || b == Control::Abort {
            Control::Abort
        } else {
            Control::Continue
        }
    }
}

/// Hooks disabled.
#[derive(Debug, Default, Clone, Copy)]
pub struct NoTracer;

impl Tracer for NoTracer {
    #[inline(always)]
    fn event(&mut self, _: Port, _: Specifics, _: &SolverState) -> Control {
        Control::Continue
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct VarInfo {
    pub id: u32,
    pub name: Option<String>,
}

impl VarInfo {
    pub fn new(id: u32, name: Option<String>) -> Self {
        VarInfo { id, name }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ConstraintKind {
    XEqY,
    XNeqY,
    XLtY,
    XLteY,
    XEqC,
    XNeqC,
    XGteC,
    XLteC,
    XPlusCNeqY,
    Element,
    AllDiffPairwise,
    LinearEq,
}

impl ConstraintKind {
    pub const ALL: [ConstraintKind; 12] = [
        ConstraintKind::XEqY,
        ConstraintKind::XNeqY,
        ConstraintKind::XLtY,
        ConstraintKind::XLteY,
        ConstraintKind::XEqC,
        ConstraintKind::XNeqC,
        ConstraintKind::XGteC,
        ConstraintKind::XLteC,
        ConstraintKind::XPlusCNeqY,
        ConstraintKind::Element,
        ConstraintKind::AllDiffPairwise,
        ConstraintKind::LinearEq,
    ];

    /// Kernel-internal kind name.
    pub fn name(self) -> &'static str {
        match self {
            ConstraintKind::XEqY => "x_eq_y",
            ConstraintKind::XNeqY => "x_neq_y",
            ConstraintKind::XLtY => "x_lt_y",
            ConstraintKind::XLteY => "x_lte_y",
            ConstraintKind::XEqC => "x_eq_c",
            ConstraintKind::XNeqC => "x_neq_c",
            ConstraintKind::XGteC => "x_gte_c",
            ConstraintKind::XLteC => "x_lte_c",
            ConstraintKind::XPlusCNeqY => "x_plus_c_neq_y",
            ConstraintKind::Element => "fd_element",
            ConstraintKind::AllDiffPairwise => "alldifferent_pairwise",
            ConstraintKind::LinearEq => "linear_eq",
        }
    }

    /// Short spelling used in model files.
    pub fn short_name(self) -> &'static str {
        match self {
            ConstraintKind::XEqY => "eq",
            ConstraintKind::XNeqY => "neq",
            ConstraintKind::XLtY => "lt",
            ConstraintKind::XLteY => "lte",
            ConstraintKind::XEqC => "eqc",
            ConstraintKind::XNeqC => "neqc",
            ConstraintKind::XGteC => "gtec",
            ConstraintKind::XLteC => "ltec",
            ConstraintKind::XPlusCNeqY => "plusneq",
            ConstraintKind::Element => "element",
            ConstraintKind::AllDiffPairwise => "alldiff",
            ConstraintKind::LinearEq => "linear",
        }
    }

    pub fn from_name(s: &str) -> Option<ConstraintKind> {
        ConstraintKind::ALL
            .iter()
            .copied()
            .find(|k| k.name() == s || k.short_name() == s)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Constraint {
    pub id: u32,
    pub kind: ConstraintKind,
    /// Variable ids, in argument order.
    pub vars: Vec<u32>,
    /// Integer parameters: the constant of unary and offset kinds, the
    /// value list of `fd_element`, or the coefficients followed by the
    /// right-hand side of `linear_eq`.
    pub params: Vec<i64>,
    pub name: Option<String>,
    /// Created by the labeling procedure rather than the model.
    pub assign: bool,
}

impl Constraint {
    pub fn new(id: u32, kind: ConstraintKind, vars: Vec<u32>, params: Vec<i64>) -> Self {
        Constraint {
            id,
            kind,
            vars,
            params,
            name: None,
            assign: false,
        }
    }

    /// `cstrType`: `assign` for labeling decisions, the kind name otherwise.
    pub fn type_name(&self) -> &'static str {
        if self.assign {
            "assign"
        } else {
            self.kind.name()
        }
    }

    /// Printable form, e.g. `fd_element([v1,[2,5,7],v2])`.
    pub fn rep(&self) -> String {
        let v = |i: usize| format!("v{}", self.vars[i]);
        let mut s = String::from(self.kind.name());
        s.push_str("([");
        match self.kind {
            ConstraintKind::XEqY
            | ConstraintKind::XNeqY
            | ConstraintKind::XLtY
            | ConstraintKind::XLteY => {
                let _ = write!(s, "{},{}", v(0), v(1));
            }
            ConstraintKind::XEqC
            | ConstraintKind::XNeqC
            | ConstraintKind::XGteC
            | ConstraintKind::XLteC => {
                let _ = write!(s, "{},{}", v(0), self.params[0]);
            }
            ConstraintKind::XPlusCNeqY => {
                let _ = write!(s, "{},{},{}", v(0), self.params[0], v(1));
            }
            ConstraintKind::Element => {
                let list: Vec<String> = self.params.iter().map(i64::to_string).collect();
                let _ = write!(s, "{},[{}],{}", v(0), list.join(","), v(1));
            }
            ConstraintKind::AllDiffPairwise => {
                let vs: Vec<String> = (0..self.vars.len()).map(v).collect();
                s.push_str(&vs.join(","));
            }
            ConstraintKind::LinearEq => {
                let terms: Vec<String> = (0..self.vars.len())
                    .map(|i| format!("{}*{}", self.params[i], v(i)))
                    .collect();
                let _ = write!(s, "[{}],{}", terms.join(","), self.params[self.vars.len()]);
            }
        }
        s.push_str("])");
        s
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum CStatus {
    Suspended,
    Entailed,
    /// Created in an abandoned branch, or not yet activated.
    Dead,
}

/// Live solver state: variables, domains, constraint store and the two
/// propagation queues.
#[derive(Debug, Clone)]
pub struct SolverState {
    pub(crate) vars: Vec<VarInfo>,
    pub(crate) domains: Vec<IntSet>,
    pub(crate) constraints: Vec<Arc<Constraint>>,
    pub(crate) status: Vec<CStatus>,
    /// Posted constraint ids.
    pub(crate) store: Vec<u32>,
    /// Pending domain updates coming from labeling decisions (var ids).
    pub(crate) updates: VecDeque<u32>,
    /// Constraints waiting to be awakened.
    pub(crate) awaken: VecDeque<u32>,
    pub(crate) queued: Vec<bool>,
    pub(crate) dependents: Vec<Vec<u32>>,
    pub(crate) chrono: u64,
    pub(crate) depth: u32,
    pub(crate) node: u64,
    pub(crate) node_counter: u64,
    pub(crate) start: Instant,
    /// Clock reading of the current event, taken on first request.
    pub(crate) now: Cell<Option<u64>>,
}

impl SolverState {
    pub(crate) fn new() -> Self {
        SolverState {
            vars: Vec::new(),
            domains: Vec::new(),
            constraints: Vec::new(),
            status: Vec::new(),
            store: Vec::new(),
            updates: VecDeque::new(),
            awaken: VecDeque::new(),
            queued: Vec::new(),
            dependents: Vec::new(),
            chrono: 0,
            depth: 0,
            node: 0,
            node_counter: 0,
            start: Instant::now(),
            now: Cell::new(None),
        }
    }

    pub fn view(&self) -> StateView<'_> {
        StateView {
            vars: &self.vars,
            domains: &self.domains,
            constraints: &self.constraints,
        }
    }

    /// Number of the event being reported (starts at 1).
    #[inline]
    pub fn chrono(&self) -> u64 {
        self.chrono
    }

    #[inline]
    pub fn depth(&self) -> u32 {
        self.depth
    }

    #[inline]
    pub fn node(&self) -> u64 {
        self.node
    }

    /// Monotonic nanoseconds since the solve started, read once per event
    /// so every observer of the event sees the same value.
    #[inline]
    pub fn usertime(&self) -> u64 {
        match self.now.get() {
            Some(t) => t,
            None => {
                let t = self.start.elapsed().as_nanos() as u64;
                self.now.set(Some(t));
                t
            }
        }
    }

    pub fn domains(&self) -> &[IntSet] {
        &self.domains
    }

    pub fn vars(&self) -> &[VarInfo] {
        &self.vars
    }

    pub fn constraints(&self) -> &[Arc<Constraint>] {
        &self.constraints
    }

    pub fn store(&self) -> &[u32] {
        &self.store
    }

    /// Pending scheduled updates and awakenings.
    pub fn queue_len(&self) -> usize {
        self.updates.len() + self.awaken.len()
    }
}
