use std::sync::Arc;

use super::model::{ConstraintSpec, Item, Model, VarOrder};
use super::propagators::{filter, Filtered, Narrow};
use super::{CStatus, Constraint, ConstraintKind, Control, SolverState, Tracer, VarInfo};
use crate::intset::IntSet;
use crate::trace::{Port, Specifics};

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct SolveOutcome {
    /// Values of every variable, in declaration order, for each solution.
    pub solutions: Vec<Vec<i64>>,
    /// Number of events emitted, `endOfTrace` included.
    pub events: u64,
    pub failures: u64,
    pub aborted: bool,
}

/// Raised when a hook asks to stop the execution.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct Aborted;

type Step<T = ()> = Result<T, Aborted>;

struct Checkpoint {
    domains: Vec<IntSet>,
    status: Vec<CStatus>,
    store_len: usize,
    depth: u32,
    node: u64,
}

struct Solver<'m, T: Tracer> {
    model: &'m Model,
    st: SolverState,
    tracer: T,
    outcome: SolveOutcome,
    /// Constraint currently running its filter.
    active: u32,
}

/// Runs `model` to completion, enumerating every solution and reporting
/// each event to `tracer`.
pub fn solve<T: Tracer>(model: &Model, tracer: T) -> SolveOutcome {
    let mut s = Solver {
        model,
        st: SolverState::new(),
        tracer,
        outcome: SolveOutcome::default(),
        active: 0,
    };
    if s.run().is_err() {
        s.outcome.aborted = true;
    }
    // endOfTrace is emitted even after an abort; its own result is moot.
    let _ = s.emit(Port::EndOfTrace, Specifics::None);
    s.outcome.events = s.st.chrono;
    s.outcome
}

impl<T: Tracer> Narrow for Solver<'_, T> {
    type Err = Aborted;

    #[inline]
    fn dom(&self, var: u32) -> &IntSet {
        &self.st.domains[var as usize - 1]
    }

    fn narrow(&mut self, var: u32, to: IntSet) -> Step<bool> {
        let idx = var as usize - 1;
        if to.is_empty() {
            return Ok(false);
        }
        let old = &self.st.domains[idx];
        if to.len() == old.len() {
            return Ok(true);
        }
        let delta = old.difference(&to);
        self.st.domains[idx] = to;
        let cstr = self.active;
        self.emit(Port::Reduce, Specifics::Reduce { cstr, var, delta })?;
        if self.st.constraints[cstr as usize - 1].assign {
            self.st.updates.push_back(var);
        } else {
            self.wake_dependents(var, cstr);
        }
        Ok(true)
    }
}

impl<T: Tracer> Solver<'_, T> {
    #[inline]
    fn emit(&mut self, port: Port, specifics: Specifics) -> Step {
        self.st.chrono += 1;
        self.st.now.set(None);
        match self.tracer.event(port, specifics, &self.st) {
            Control::Continue => Ok(()),
            Control::Abort => Err(Aborted),
        }
    }

    fn wake_dependents(&mut self, var: u32, except: u32) {
        let st = &mut self.st;
        for &d in &st.dependents[var as usize - 1] {
            let di = d as usize - 1;
            if d != except && st.status[di] == CStatus::Suspended && !st.queued[di] {
                st.queued[di] = true;
                st.awaken.push_back(d);
            }
        }
    }

    fn run(&mut self) -> Step {
        for (i, decl) in self.model.vars.iter().enumerate() {
            let id = i as u32 + 1;
            self.st.vars.push(VarInfo::new(id, Some(decl.name.clone())));
            self.st.domains.push(decl.domain.clone());
            self.st.dependents.push(Vec::new());
            self.emit(Port::NewVariable, Specifics::Variable { var: id })?;
        }
        self.items(0)
    }

    fn add_constraint(&mut self, c: Constraint) -> u32 {
        let id = self.st.constraints.len() as u32 + 1;
        debug_assert_eq!(c.id, id);
        self.st.constraints.push(Arc::new(c));
        self.st.status.push(CStatus::Dead);
        self.st.queued.push(false);
        id
    }

    /// Runs the filter of `c` and emits its closing port.
    fn activate(&mut self, c: u32) -> Step<bool> {
        self.active = c;
        let con = Arc::clone(&self.st.constraints[c as usize - 1]);
        let result = filter(self, con.kind, &con.vars, &con.params)?;
        let ci = c as usize - 1;
        let (port, ok) = match result {
            Filtered::Suspend => {
                self.st.status[ci] = CStatus::Suspended;
                (Port::Suspend, true)
            }
            Filtered::Entail => {
                self.st.status[ci] = CStatus::Entailed;
                (Port::Entail, true)
            }
            Filtered::Reject => (Port::Reject, false),
        };
        self.emit(port, Specifics::Constraint { cstr: c })?;
        Ok(ok)
    }

    /// Declares a model constraint and runs it as the active one.
    fn new_constraint(&mut self, spec: &ConstraintSpec) -> Step<bool> {
        let id = self.st.constraints.len() as u32 + 1;
        let vars: Vec<u32> = spec.vars.iter().map(|&v| v as u32 + 1).collect();
        let mut con = Constraint::new(id, spec.kind, vars.clone(), spec.params.clone());
        con.name = spec.name.clone();
        self.add_constraint(con);
        self.st.status[id as usize - 1] = CStatus::Suspended;
        let mut seen = Vec::new();
        for v in vars {
            if !seen.contains(&v) {
                seen.push(v);
                self.st.dependents[v as usize - 1].push(id);
            }
        }
        self.st.store.push(id);
        self.emit(Port::NewConstraint, Specifics::Constraint { cstr: id })?;
        if !self.activate(id)? {
            self.clear_queues();
            return Ok(false);
        }
        self.propagate()
    }

    /// Posts a labeling decision (`x = v` or `x != v`).
    fn post_assign(&mut self, var: u32, kind: ConstraintKind, value: i64) -> Step<bool> {
        let id = self.st.constraints.len() as u32 + 1;
        let mut con = Constraint::new(id, kind, vec![var], vec![value]);
        con.assign = true;
        self.add_constraint(con);
        self.st.store.push(id);
        self.emit(Port::Post, Specifics::Constraint { cstr: id })?;
        if !self.activate(id)? {
            self.clear_queues();
            return Ok(false);
        }
        self.propagate()
    }

    fn clear_queues(&mut self) {
        for c in self.st.awaken.drain(..) {
            self.st.queued[c as usize - 1] = false;
        }
        self.st.updates.clear();
    }

    /// Drains the queues to a fixed point. Returns false on inconsistency.
    fn propagate(&mut self) -> Step<bool> {
        loop {
            if let Some(c) = self.st.awaken.pop_front() {
                let ci = c as usize - 1;
                self.st.queued[ci] = false;
                if self.st.status[ci] != CStatus::Suspended {
                    continue;
                }
                self.emit(Port::Awake, Specifics::Constraint { cstr: c })?;
                if !self.activate(c)? {
                    self.clear_queues();
                    return Ok(false);
                }
            } else if let Some(var) = self.st.updates.pop_front() {
                self.emit(Port::Schedule, Specifics::Variable { var })?;
                self.wake_dependents(var, 0);
            } else {
                return Ok(true);
            }
        }
    }

    fn checkpoint(&self) -> Checkpoint {
        Checkpoint {
            domains: self.st.domains.clone(),
            status: self.st.status.clone(),
            store_len: self.st.store.len(),
            depth: self.st.depth,
            node: self.st.node,
        }
    }

    fn restore(&mut self, cp: &Checkpoint) {
        self.st.domains.clone_from(&cp.domains);
        let n = cp.status.len();
        self.st.status[..n].copy_from_slice(&cp.status);
        for s in &mut self.st.status[n..] {
            *s = CStatus::Dead;
        }
        for deps in &mut self.st.dependents {
            while deps.last().is_some_and(|&d| d as usize > n) {
                deps.pop();
            }
        }
        self.st.store.truncate(cp.store_len);
        self.st.depth = cp.depth;
        self.st.node = cp.node;
    }

    fn fail(&mut self) -> Step {
        self.outcome.failures += 1;
        self.emit(Port::Failure, Specifics::None)
    }

    fn items(&mut self, from: usize) -> Step {
        let model = self.model;
        for idx in from..model.items.len() {
            match &model.items[idx] {
                Item::Cons(spec) => {
                    if !self.new_constraint(spec)? {
                        return self.fail();
                    }
                }
                Item::Choice(alts) => {
                    let cp = self.checkpoint();
                    for (k, alt) in alts.iter().enumerate() {
                        if k > 0 {
                            self.restore(&cp);
                            self.emit(Port::JumpTo, Specifics::None)?;
                        }
                        if self.new_constraint(alt)? {
                            self.items(idx + 1)?;
                        } else {
                            self.fail()?;
                        }
                    }
                    return Ok(());
                }
            }
        }
        self.label()
    }

    fn select_var(&self) -> Option<u32> {
        let open = self
            .st
            .domains
            .iter()
            .enumerate()
            .filter(|(_, d)| d.value().is_none());
        let idx = match self.model.labeling.order {
            VarOrder::Input => open.map(|(i, _)| i).next(),
            VarOrder::FirstFail => open.min_by_key(|(i, d)| (d.len(), *i)).map(|(i, _)| i),
        };
        idx.map(|i| i as u32 + 1)
    }

    fn open_node(&mut self, parent_depth: u32) -> Step {
        self.st.node_counter += 1;
        self.st.node = self.st.node_counter;
        self.st.depth = parent_depth + 1;
        self.emit(Port::NewChild, Specifics::None)
    }

    fn label(&mut self) -> Step {
        let Some(var) = self.select_var() else {
            self.outcome
                .solutions
                .push(self.st.domains.iter().map(|d| d.min().unwrap()).collect());
            return self.emit(Port::Solution, Specifics::None);
        };
        let value = self.st.domains[var as usize - 1].min().unwrap();
        let cp = self.checkpoint();
        let parent_depth = self.st.depth;

        self.open_node(parent_depth)?;
        if self.post_assign(var, ConstraintKind::XEqC, value)? {
            self.label()?;
        } else {
            self.fail()?;
        }

        self.restore(&cp);
        self.emit(Port::JumpTo, Specifics::None)?;
        self.open_node(parent_depth)?;
        if self.post_assign(var, ConstraintKind::XNeqC, value)? {
            self.label()
        } else {
            self.fail()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernel::{load_model, program, NoTracer};

    struct Ports(Vec<(Port, Specifics)>);

    impl Tracer for Ports {
        fn event(&mut self, port: Port, specifics: Specifics, _: &SolverState) -> Control {
            self.0.push((port, specifics));
            Control::Continue
        }
    }

    #[test]
    fn fig6_first_events() {
        let model = program("figtrace").unwrap().model;
        let mut rec = Ports(Vec::new());
        let out = solve(&model, &mut rec);
        let ports: Vec<Port> = rec.0.iter().map(|e| e.0).collect();
        use Port::*;
        assert_eq!(
            &ports[..12],
            &[
                NewVariable,
                NewVariable,
                NewConstraint,
                Reduce,
                Reduce,
                Suspend,
                NewConstraint,
                Reduce,
                Reduce,
                Suspend,
                Awake,
                Reject
            ]
        );
        assert_eq!(out.solutions, vec![vec![1, 2]]);
        assert_eq!(*ports.last().unwrap(), EndOfTrace);
        assert_eq!(out.events as usize, ports.len());
    }

    #[test]
    fn empty_queue_is_consistent() {
        let model = load_model("var x 0..3\n").unwrap();
        let mut rec = Ports(Vec::new());
        let out = solve(&model, &mut rec);
        assert_eq!(out.solutions.len(), 4);
        // Nothing depends on x, so scheduled updates awaken nothing.
        assert!(!rec.0.iter().any(|e| e.0 == Port::Awake));
        assert!(rec.0.iter().any(|e| e.0 == Port::Schedule));
    }

    #[test]
    fn abort_emits_end_of_trace() {
        struct StopAt(u64, Vec<Port>);
        impl Tracer for StopAt {
            fn event(&mut self, port: Port, _: Specifics, st: &SolverState) -> Control {
                self.1.push(port);
                if st.chrono() == self.0 {
                    Control::Abort
                } else {
                    Control::Continue
                }
            }
        }
        let model = program("queens(4)").unwrap().model;
        let mut t = StopAt(10, Vec::new());
        let out = solve(&model, &mut t);
        assert!(out.aborted);
        assert_eq!(t.1.len(), 11);
        assert_eq!(*t.1.last().unwrap(), Port::EndOfTrace);
    }

    #[test]
    fn no_tracer_matches_recording_tracer() {
        for name in ["queens(5)", "sendmory", "propag(50)", "random(3)"] {
            let model = program(name).unwrap().model;
            let a = solve(&model, NoTracer);
            let mut rec = Ports(Vec::new());
            let b = solve(&model, &mut rec);
            assert_eq!(a, b, "{name}");
        }
    }
}
