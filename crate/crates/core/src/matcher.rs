//! Condition automata and the active pattern set.

use std::fmt::Write as _;

use thiserror::Error;

use crate::pattern::{format_condition, Action, Cond, Op, Pattern, Value};
use crate::trace::{AttrKey, AttrValue, Port, PortSet, TraceEvent, PORT_COUNT};

/// Elementary test with its literal pre-decoded.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Test {
    Port(PortSet),
    Int {
        attr: AttrKey,
        op: Op,
        rhs: i64,
    },
    IntIn {
        attr: AttrKey,
        set: Vec<i64>,
        negate: bool,
    },
    Text {
        attr: AttrKey,
        values: Vec<String>,
        negate: bool,
    },
    /// `contains`: all listed values present; `notcontains`: none present.
    Contains {
        attr: AttrKey,
        values: Vec<i64>,
        all: bool,
    },
    IsNamed(AttrKey),
    /// A leaf whose metavariable was never bound.
    Never,
}

fn ints(v: &Value) -> Vec<i64> {
    match v {
        Value::Int(i) => vec![*i],
        Value::List(vs) => vs
            .iter()
            .filter_map(|x| match x {
                Value::Int(i) => Some(*i),
                _ => None,
            })
            .collect(),
        _ => vec![],
    }
}

fn texts(v: &Value) -> Vec<String> {
    match v {
        Value::Text(s) => vec![s.clone()],
        Value::List(vs) => vs
            .iter()
            .filter_map(|x| match x {
                Value::Text(s) => Some(s.clone()),
                _ => None,
            })
            .collect(),
        _ => vec![],
    }
}

fn ports(v: &Value) -> PortSet {
    match v {
        Value::Port(p) => PortSet::of(&[*p]),
        Value::List(vs) => vs.iter().fold(PortSet::EMPTY, |s, x| match x {
            Value::Port(p) => s.with(*p),
            _ => s,
        }),
        _ => PortSet::EMPTY,
    }
}

impl Test {
    /// Decodes an elementary condition (a `Leaf` or `IsNamed`).
    pub fn from_cond(c: &Cond) -> Test {
        use crate::trace::ValueKind as K;
        let (attr, op, value) = match c {
            Cond::IsNamed(a) => return Test::IsNamed(*a),
            Cond::Leaf { attr, op, value } => (*attr, *op, value),
            _ => panic!("not an elementary condition"),
        };
        if matches!(value, Value::Var(_)) {
            return Test::Never;
        }
        let negate = matches!(op, Op::Ne | Op::NotIn);
        match attr.kind() {
            K::Port => {
                let s = ports(value);
                Test::Port(if negate { s.complement() } else { s })
            }
            K::Int => match op {
                Op::In | Op::NotIn => Test::IntIn {
                    attr,
                    set: ints(value),
                    negate,
                },
                _ => Test::Int {
                    attr,
                    op,
                    rhs: ints(value)[0],
                },
            },
            K::Text => Test::Text {
                attr,
                values: texts(value),
                negate,
            },
            K::IntSet => Test::Contains {
                attr,
                values: ints(value),
                all: op == Op::Contains,
            },
            K::Assoc => Test::Never,
        }
    }

    /// Evaluates on `e`. A test on an attribute undefined at the port is false.
    #[inline]
    pub fn eval(&self, e: &TraceEvent<'_>) -> bool {
        match self {
            Test::Port(s) => s.contains(e.port),
            Test::Int { attr, op, rhs } => {
                let Some(v) = int_attr(e, *attr) else {
                    return false;
                };
                match op {
                    Op::Lt => v < *rhs,
                    Op::Gt => v > *rhs,
                    Op::Eq => v == *rhs,
                    Op::Ne => v != *rhs,
                    Op::Ge => v >= *rhs,
                    Op::Le => v <= *rhs,
                    _ => false,
                }
            }
            Test::IntIn { attr, set, negate } => match int_attr(e, *attr) {
                Some(v) => set.contains(&v) != *negate,
                None => false,
            },
            Test::Text {
                attr,
                values,
                negate,
            } => e
                .with_attribute(*attr, |v| match v {
                    AttrValue::Text(s) => values.iter().any(|x| x == s) != *negate,
                    _ => false,
                })
                .unwrap_or(false),
            Test::Contains { attr, values, all } => e
                .with_attribute(*attr, |v| match v {
                    AttrValue::IntSet(s) => {
                        if *all {
                            values.iter().all(|&x| s.contains(x))
                        } else {
                            !values.iter().any(|&x| s.contains(x))
                        }
                    }
                    _ => false,
                })
                .unwrap_or(false),
            Test::IsNamed(attr) => e.is_named(*attr),
            Test::Never => false,
        }
    }
}

#[inline]
fn int_attr(e: &TraceEvent<'_>, attr: AttrKey) -> Option<i64> {
    match attr {
        AttrKey::Chrono => Some(e.chrono as i64),
        AttrKey::Depth => Some(e.depth as i64),
        AttrKey::Node => Some(e.node as i64),
        AttrKey::Usertime => Some(e.usertime() as i64),
        _ => e
            .with_attribute(attr, |v| match v {
                AttrValue::Int(i) => Some(*i),
                _ => None,
            })
            .ok()
            .flatten(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Target {
    True,
    False,
    State(u32),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct State {
    pub test: Test,
    pub on_true: Target,
    pub on_false: Target,
}

/// Short-circuit evaluation graph of a condition: one state per elementary
/// condition, two shared final states.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Automaton {
    pub states: Vec<State>,
    pub entry: Target,
}

impl Automaton {
    pub fn state_count(&self) -> usize {
        self.states.len()
    }

    #[inline]
    pub fn run(&self, e: &TraceEvent<'_>) -> bool {
        let mut at = self.entry;
        loop {
            match at {
                Target::True => return true,
                Target::False => return false,
                Target::State(i) => {
                    let s = &self.states[i as usize];
                    at = if s.test.eval(e) {
                        s.on_true
                    } else {
                        s.on_false
                    };
                }
            }
        }
    }

    /// Like `run`, also returning the number of states visited.
    pub fn run_counting(&self, e: &TraceEvent<'_>) -> (bool, usize) {
        let (mut at, mut n) = (self.entry, 0);
        loop {
            match at {
                Target::True => return (true, n),
                Target::False => return (false, n),
                Target::State(i) => {
                    n += 1;
                    let s = &self.states[i as usize];
                    at = if s.test.eval(e) {
                        s.on_true
                    } else {
                        s.on_false
                    };
                }
            }
        }
    }
}

pub fn compile(cond: &Cond) -> Automaton {
    fn go(c: &Cond, t: Target, f: Target, states: &mut Vec<State>) -> Target {
        match c {
            Cond::True => t,
            Cond::Leaf { .. } | Cond::IsNamed(_) => {
                states.push(State {
                    test: Test::from_cond(c),
                    on_true: t,
                    on_false: f,
                });
                Target::State(states.len() as u32 - 1)
            }
            Cond::Not(a) => go(a, f, t, states),
            Cond::And(a, b) => {
                let eb = go(b, t, f, states);
                go(a, eb, f, states)
            }
            Cond::Or(a, b) => {
                let eb = go(b, t, f, states);
                go(a, t, eb, states)
            }
        }
    }
    let mut states = Vec::with_capacity(cond.leaf_count());
    let entry = go(cond, Target::True, Target::False, &mut states);
    Automaton { states, entry }
}

/// Direct recursive evaluation; the reference semantics for `compile`.
pub fn naive_eval(cond: &Cond, e: &TraceEvent<'_>) -> bool {
    match cond {
        Cond::True => true,
        Cond::Not(a) => !naive_eval(a, e),
        Cond::And(a, b) => naive_eval(a, e) && naive_eval(b, e),
        Cond::Or(a, b) => naive_eval(a, e) || naive_eval(b, e),
        Cond::IsNamed(a) => e.is_named(*a),
        Cond::Leaf { attr, op, value } => {
            let Ok(v) = e.attribute(*attr) else {
                return false;
            };
            leaf_holds(&v, *op, value)
        }
    }
}

fn scalar_eq(v: &AttrValue, lit: &Value) -> bool {
    match (v, lit) {
        (AttrValue::Int(a), Value::Int(b)) => a == b,
        (AttrValue::Text(a), Value::Text(b)) => a == b,
        (AttrValue::Port(a), Value::Port(b)) => a == b,
        _ => false,
    }
}

fn leaf_holds(v: &AttrValue, op: Op, lit: &Value) -> bool {
    if matches!(lit, Value::Var(_)) {
        return false;
    }
    let list: &[Value] = match lit {
        Value::List(vs) => vs,
        other => std::slice::from_ref(other),
    };
    match op {
        Op::Eq => scalar_eq(v, lit),
        Op::Ne => !scalar_eq(v, lit),
        Op::In => list.iter().any(|x| scalar_eq(v, x)),
        Op::NotIn => !list.iter().any(|x| scalar_eq(v, x)),
        Op::Lt | Op::Gt | Op::Ge | Op::Le => match (v, lit) {
            (AttrValue::Int(a), Value::Int(b)) => match op {
                Op::Lt => a < b,
                Op::Gt => a > b,
                Op::Ge => a >= b,
                _ => a <= b,
            },
            _ => false,
        },
        Op::Contains | Op::NotContains => {
            let AttrValue::IntSet(s) = v else {
                return false;
            };
            let present = |x: &Value| matches!(x, Value::Int(i) if s.contains(*i));
            if op == Op::Contains {
                list.iter().all(present)
            } else {
                !list.iter().any(present)
            }
        }
    }
}

/// Ports at which `cond` may hold (over) and at which it surely holds for
/// every event (under).
fn relevance(cond: &Cond) -> (PortSet, PortSet) {
    match cond {
        Cond::True => (PortSet::ALL, PortSet::ALL),
        Cond::Leaf {
            attr: AttrKey::Port,
            value,
            ..
        } if !matches!(value, Value::Var(_)) => match Test::from_cond(cond) {
            Test::Port(s) => (s, s),
            _ => unreachable!(),
        },
        Cond::Leaf { attr, .. } | Cond::IsNamed(attr) => (attr.availability(), PortSet::EMPTY),
        Cond::Not(a) => {
            let (o, u) = relevance(a);
            (u.complement(), o.complement())
        }
        Cond::And(a, b) => {
            let ((o1, u1), (o2, u2)) = (relevance(a), relevance(b));
            (o1.intersection(o2), u1.intersection(u2))
        }
        Cond::Or(a, b) => {
            let ((o1, u1), (o2, u2)) = (relevance(a), relevance(b));
            (o1.union(o2), u1.union(u2))
        }
    }
}

/// Sound over-approximation of the ports at which `cond` can hold.
pub fn port_relevance(cond: &Cond) -> PortSet {
    relevance(cond).0
}

#[derive(Debug, Clone, Error, PartialEq, Eq)]
pub enum MatchError {
    #[error("pattern label `{0}` is already active")]
    DuplicateLabel(String),
    #[error("no active pattern labeled `{0}`")]
    UnknownLabel(String),
    #[error("pattern `{label}` has unbound variable `{var}`")]
    UnboundVariable { label: String, var: String },
}

#[derive(Debug, Clone)]
pub struct ActiveEntry {
    pub pattern: Pattern,
    pub automaton: Automaton,
    pub relevance: PortSet,
    /// The condition depends on the port only: every event at a relevant
    /// port matches, so the automaton need not run.
    pub port_only: bool,
    pub keys: Vec<AttrKey>,
}

impl ActiveEntry {
    fn new(pattern: Pattern) -> Self {
        let (over, under) = relevance(&pattern.cond);
        ActiveEntry {
            automaton: compile(&pattern.cond),
            relevance: over,
            port_only: over == under,
            keys: pattern.current_keys(),
            pattern,
        }
    }

    #[inline]
    pub fn matches(&self, e: &TraceEvent<'_>) -> bool {
        self.port_only || self.automaton.run(e)
    }
}

#[derive(Debug, Clone, Default)]
pub struct ActivePatternSet {
    entries: Vec<ActiveEntry>,
    port_index: [Vec<u32>; PORT_COUNT],
    flags: PortSet,
}

impl ActivePatternSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entries(&self) -> &[ActiveEntry] {
        &self.entries
    }

    pub fn get(&self, label: &str) -> Option<&ActiveEntry> {
        self.entries.iter().find(|e| e.pattern.label == label)
    }

    #[inline]
    pub fn flags(&self) -> PortSet {
        self.flags
    }

    #[inline]
    pub fn port_flag(&self, p: Port) -> bool {
        self.flags.contains(p)
    }

    /// Entry positions relevant to `p`, insertion order.
    #[inline]
    pub fn port_index(&self, p: Port) -> &[u32] {
        &self.port_index[p.index()]
    }

    pub fn labels_at(&self, p: Port) -> Vec<&str> {
        self.port_index(p)
            .iter()
            .map(|&i| self.entries[i as usize].pattern.label.as_str())
            .collect()
    }

    /// Compiles and activates `ps`; all or nothing.
    pub fn add_patterns(&mut self, ps: Vec<Pattern>) -> Result<(), MatchError> {
        for (k, p) in ps.iter().enumerate() {
            if self.get(&p.label).is_some() || ps[..k].iter().any(|q| q.label == p.label) {
                return Err(MatchError::DuplicateLabel(p.label.clone()));
            }
            if let Some(v) = p.cond.vars().into_iter().next() {
                return Err(MatchError::UnboundVariable {
                    label: p.label.clone(),
                    var: v,
                });
            }
        }
        for p in ps {
            let entry = ActiveEntry::new(p);
            let pos = self.entries.len() as u32;
            for port in entry.relevance.iter() {
                self.port_index[port.index()].push(pos);
            }
            self.flags = self.flags.union(entry.relevance);
            self.entries.push(entry);
        }
        Ok(())
    }

    /// Deactivates the labeled patterns; all or nothing.
    pub fn remove_patterns<S: AsRef<str>>(&mut self, labels: &[S]) -> Result<(), MatchError> {
        for l in labels {
            if self.get(l.as_ref()).is_none() {
                return Err(MatchError::UnknownLabel(l.as_ref().to_string()));
            }
        }
        self.entries
            .retain(|e| !labels.iter().any(|l| l.as_ref() == e.pattern.label));
        self.reindex();
        Ok(())
    }

    pub fn reset(&mut self) {
        self.entries.clear();
        self.reindex();
    }

    fn reindex(&mut self) {
        for ix in &mut self.port_index {
            ix.clear();
        }
        self.flags = PortSet::EMPTY;
        for (pos, e) in self.entries.iter().enumerate() {
            for port in e.relevance.iter() {
                self.port_index[port.index()].push(pos as u32);
            }
            self.flags = self.flags.union(e.relevance);
        }
    }

    /// Per-port table of relevant automata and their actions. Ports with no
    /// relevant pattern are marked `-` and are never handed to the driver.
    pub fn dump(&self) -> String {
        let mut s = String::new();
        for p in Port::ALL {
            let labels = self.port_index(p);
            let mark = if labels.is_empty() { '-' } else { '+' };
            let _ = writeln!(s, "{mark} {}", p.name());
            for &i in labels {
                let e = &self.entries[i as usize];
                let actions: Vec<String> = e
                    .pattern
                    .actions
                    .iter()
                    .map(|a| match a {
                        Action::Current(items) => {
                            let keys: Vec<&str> = items.iter().map(|it| it.key.name()).collect();
                            format!("current({})", keys.join(","))
                        }
                        Action::Call { name, .. } => format!("call({name})"),
                    })
                    .collect();
                let how = if e.port_only {
                    "port only".to_string()
                } else {
                    format!(
                        "{} states: {}",
                        e.automaton.state_count(),
                        format_condition(&e.pattern.cond)
                    )
                };
                let _ = writeln!(
                    s,
                    "    {}{} [{}] -> {}",
                    e.pattern.label,
                    if e.pattern.sync { " (sync)" } else { "" },
                    how,
                    actions.join(", ")
                );
            }
        }
        s
    }
}
