//! Ports, attributes and the per-event lazy attribute provider.
//!
//! Every execution event carries five common attributes (port, chrono,
//! depth, node, usertime) that are copied into the event when it is built;
//! the clock behind usertime is only read when something asks for it.
//! Everything else is derived on request from the port-specific data and
//! the live solver state, then memoized until the event is dropped.

use std::cell::RefCell;
use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use smallvec::SmallVec;
use thiserror::Error;

use crate::intset::IntSet;
use crate::kernel::{Constraint, SolverState, VarInfo};

/// Kind of an execution event.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Port {
    NewVariable,
    NewConstraint,
    Post,
    NewChild,
    JumpTo,
    Solution,
    Failure,
    Reduce,
    Suspend,
    Entail,
    Reject,
    Schedule,
    Awake,
    EndOfTrace,
}

pub const PORT_COUNT: usize = 14;

impl Port {
    pub const ALL: [Port; PORT_COUNT] = [
        Port::NewVariable,
        Port::NewConstraint,
        Port::Post,
        Port::NewChild,
        Port::JumpTo,
        Port::Solution,
        Port::Failure,
        Port::Reduce,
        Port::Suspend,
        Port::Entail,
        Port::Reject,
        Port::Schedule,
        Port::Awake,
        Port::EndOfTrace,
    ];

    #[inline]
    pub fn index(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        match self {
            Port::NewVariable => "newVariable",
            Port::NewConstraint => "newConstraint",
            Port::Post => "post",
            Port::NewChild => "newChild",
            Port::JumpTo => "jumpTo",
            Port::Solution => "solution",
            Port::Failure => "failure",
            Port::Reduce => "reduce",
            Port::Suspend => "suspend",
            Port::Entail => "entail",
            Port::Reject => "reject",
            Port::Schedule => "schedule",
            Port::Awake => "awake",
            Port::EndOfTrace => "endOfTrace",
        }
    }

    /// Control ports deal with the store and the search; the rest describe
    /// propagation.
    pub fn is_control(self) -> bool {
        matches!(
            self,
            Port::NewVariable
                | Port::NewConstraint
                | Port::Post
                | Port::NewChild
                | Port::JumpTo
                | Port::Solution
                | Port::Failure
        )
    }
}

#[derive(Debug, Clone, Error, PartialEq, Eq)]
#[error("unknown port `{0}`")]
pub struct UnknownPort(pub String);

/// Resolves a canonical port name or one of the `choicePoint`/`backTo`
/// aliases.
pub fn port_of_name(name: &str) -> Result<Port, UnknownPort> {
    match name {
        "choicePoint" => return Ok(Port::NewChild),
        "backTo" => return Ok(Port::JumpTo),
        _ => {}
    }
    Port::ALL
        .iter()
        .copied()
        .find(|p| p.name() == name)
        .ok_or_else(|| UnknownPort(name.to_string()))
}

impl fmt::Display for Port {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Port {
    type Err = UnknownPort;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        port_of_name(s)
    }
}

/// Compact set of ports.
#[derive(Clone, Copy, PartialEq, Eq, Hash, Default)]
pub struct PortSet(u16);

impl PortSet {
    pub const EMPTY: PortSet = PortSet(0);
    pub const ALL: PortSet = PortSet((1 << PORT_COUNT) - 1);

    pub fn of(ports: &[Port]) -> PortSet {
        ports.iter().fold(PortSet::EMPTY, |s, &p| s.with(p))
    }

    pub fn with(self, p: Port) -> PortSet {
        PortSet(self.0 | (1 << p.index()))
    }

    #[inline]
    pub fn contains(self, p: Port) -> bool {
        self.0 & (1 << p.index()) != 0
    }

    pub fn union(self, o: PortSet) -> PortSet {
        PortSet(self.0 | o.0)
    }

    pub fn intersection(self, o: PortSet) -> PortSet {
        PortSet(self.0 & o.0)
    }

    pub fn complement(self) -> PortSet {
        PortSet(!self.0 & PortSet::ALL.0)
    }

    pub fn is_empty(self) -> bool {
        self.0 == 0
    }

    pub fn len(self) -> usize {
        self.0.count_ones() as usize
    }

    pub fn iter(self) -> impl Iterator<Item = Port> {
        Port::ALL.into_iter().filter(move |p| self.contains(*p))
    }
}

impl fmt::Debug for PortSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_set().entries(self.iter().map(Port::name)).finish()
    }
}

/// Value kind of an attribute; decides which operators apply to it.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ValueKind {
    Int,
    Text,
    Port,
    IntSet,
    Assoc,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum AttrKey {
    Port,
    Chrono,
    Depth,
    Node,
    Usertime,
    Vident,
    Vname,
    Var,
    Cident,
    Cname,
    Cstr,
    CstrRep,
    CstrType,
    Cinternal,
    Delta,
    Dom,
    FullDom,
    NamedVars,
    VarC,
}

pub const ATTR_COUNT: usize = 19;

const VARIABLE_PORTS: PortSet = PortSet(
    (1 << Port::NewVariable as u16) | (1 << Port::Reduce as u16) | (1 << Port::Schedule as u16),
);
const CONSTRAINT_PORTS: PortSet = PortSet(
    (1 << Port::NewConstraint as u16)
        | (1 << Port::Post as u16)
        | (1 << Port::Reduce as u16)
        | (1 << Port::Suspend as u16)
        | (1 << Port::Entail as u16)
        | (1 << Port::Reject as u16)
        | (1 << Port::Awake as u16),
);

impl AttrKey {
    pub const ALL: [AttrKey; ATTR_COUNT] = [
        AttrKey::Port,
        AttrKey::Chrono,
        AttrKey::Depth,
        AttrKey::Node,
        AttrKey::Usertime,
        AttrKey::Vident,
        AttrKey::Vname,
        AttrKey::Var,
        AttrKey::Cident,
        AttrKey::Cname,
        AttrKey::Cstr,
        AttrKey::CstrRep,
        AttrKey::CstrType,
        AttrKey::Cinternal,
        AttrKey::Delta,
        AttrKey::Dom,
        AttrKey::FullDom,
        AttrKey::NamedVars,
        AttrKey::VarC,
    ];

    pub fn name(self) -> &'static str {
        match self {
            AttrKey::Port => "port",
            AttrKey::Chrono => "chrono",
            AttrKey::Depth => "depth",
            AttrKey::Node => "node",
            AttrKey::Usertime => "usertime",
            AttrKey::Vident => "vident",
            AttrKey::Vname => "vname",
            AttrKey::Var => "var",
            AttrKey::Cident => "cident",
            AttrKey::Cname => "cname",
            AttrKey::Cstr => "cstr",
            AttrKey::CstrRep => "cstrRep",
            AttrKey::CstrType => "cstrType",
            AttrKey::Cinternal => "cinternal",
            AttrKey::Delta => "delta",
            AttrKey::Dom => "dom",
            AttrKey::FullDom => "full_dom",
            AttrKey::NamedVars => "named_vars",
            AttrKey::VarC => "varC",
        }
    }

    pub fn from_name(name: &str) -> Option<AttrKey> {
        AttrKey::ALL.iter().copied().find(|k| k.name() == name)
    }

    #[inline]
    pub fn index(self) -> usize {
        self as usize
    }

    pub fn kind(self) -> ValueKind {
        use AttrKey::*;
        match self {
            Port => ValueKind::Port,
            Chrono | Depth | Node | Usertime | Vident | Cident | Cstr => ValueKind::Int,
            Vname | Var | Cname | CstrRep | CstrType | Cinternal => ValueKind::Text,
            Delta | Dom | FullDom => ValueKind::IntSet,
            NamedVars | VarC => ValueKind::Assoc,
        }
    }

    /// Ports at which the attribute is defined.
    pub fn availability(self) -> PortSet {
        use AttrKey::*;
        match self {
            Port | Chrono | Depth | Node | Usertime | FullDom | NamedVars => PortSet::ALL,
            Vident | Vname | Var | Dom => VARIABLE_PORTS,
            Cident | Cname | Cstr | CstrRep | CstrType | Cinternal | VarC => CONSTRAINT_PORTS,
            Delta => PortSet::of(&[self::Port::Reduce]),
        }
    }

    /// Common attributes are copied into every event up front.
    pub fn is_prematerialized(self) -> bool {
        matches!(
            self,
            AttrKey::Port | AttrKey::Chrono | AttrKey::Depth | AttrKey::Node | AttrKey::Usertime
        )
    }
}

impl fmt::Display for AttrKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum AttrValue {
    Int(i64),
    Text(String),
    Port(Port),
    IntSet(IntSet),
    /// Ordered key/value pairs; values are `Int` or `IntSet`.
    Assoc(Vec<(String, AttrValue)>),
}

impl AttrValue {
    pub fn kind(&self) -> ValueKind {
        match self {
            AttrValue::Int(_) => ValueKind::Int,
            AttrValue::Text(_) => ValueKind::Text,
            AttrValue::Port(_) => ValueKind::Port,
            AttrValue::IntSet(_) => ValueKind::IntSet,
            AttrValue::Assoc(_) => ValueKind::Assoc,
        }
    }
}

impl fmt::Display for AttrValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            AttrValue::Int(v) => write!(f, "{v}"),
            AttrValue::Text(s) => f.write_str(s),
            AttrValue::Port(p) => f.write_str(p.name()),
            AttrValue::IntSet(s) => write!(f, "[{s}]"),
            AttrValue::Assoc(pairs) => {
                f.write_str("[")?;
                for (i, (k, v)) in pairs.iter().enumerate() {
                    if i > 0 {
                        f.write_str(",")?;
                    }
                    write!(f, "{k}={v}")?;
                }
                f.write_str("]")
            }
        }
    }
}

#[derive(Debug, Clone, Error, PartialEq, Eq)]
pub enum AttrError {
    #[error("attribute `{key}` is not available at port {port}")]
    Unavailable { key: AttrKey, port: Port },
}

/// Port-dependent raw data handed over by the solver hook.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub enum Specifics {
    #[default]
    None,
    Variable {
        var: u32,
    },
    Constraint {
        cstr: u32,
    },
    Reduce {
        cstr: u32,
        var: u32,
        delta: IntSet,
    },
}

impl Specifics {
    pub fn var(&self) -> Option<u32> {
        match *self {
            Specifics::Variable { var } | Specifics::Reduce { var, .. } => Some(var),
            _ => None,
        }
    }

    pub fn cstr(&self) -> Option<u32> {
        match *self {
            Specifics::Constraint { cstr } | Specifics::Reduce { cstr, .. } => Some(cstr),
            _ => None,
        }
    }
}

/// Read-only view of the solver state an event refers to.
#[derive(Debug, Clone, Copy)]
pub struct StateView<'a> {
    pub vars: &'a [VarInfo],
    pub domains: &'a [IntSet],
    pub constraints: &'a [Arc<Constraint>],
}

impl<'a> StateView<'a> {
    pub fn var(&self, id: u32) -> &'a VarInfo {
        &self.vars[id as usize - 1]
    }

    pub fn domain(&self, id: u32) -> &'a IntSet {
        &self.domains[id as usize - 1]
    }

    pub fn constraint(&self, id: u32) -> &'a Constraint {
        &self.constraints[id as usize - 1]
    }
}

/// Memoized attribute values of one event. Few attributes are ever
/// computed per event, so a short inline list beats a slot per key.
#[derive(Debug, Default)]
pub struct AttributeCache {
    slots: SmallVec<[(AttrKey, AttrValue); 3]>,
}

/// Source of an event's `usertime`.
#[derive(Debug, Clone, Copy)]
enum Clock<'a> {
    Fixed(u64),
    /// Read from the solver on first use, once per event.
    Live(&'a SolverState),
}

/// One execution event.
#[derive(Debug)]
pub struct TraceEvent<'a> {
    pub port: Port,
    pub chrono: u64,
    pub depth: u32,
    pub node: u64,
    clock: Clock<'a>,
    specifics: &'a Specifics,
    state: StateView<'a>,
    cache: RefCell<AttributeCache>,
}

impl<'a> TraceEvent<'a> {
    pub fn new(
        port: Port,
        chrono: u64,
        depth: u32,
        node: u64,
        usertime: u64,
        specifics: &'a Specifics,
        state: StateView<'a>,
    ) -> Self {
        TraceEvent {
            port,
            chrono,
            depth,
            node,
            clock: Clock::Fixed(usertime),
            specifics,
            state,
            cache: RefCell::new(AttributeCache::default()),
        }
    }

    /// The event the solver is reporting right now.
    #[inline]
    pub fn live(port: Port, specifics: &'a Specifics, st: &'a SolverState) -> Self {
        TraceEvent {
            port,
            chrono: st.chrono(),
            depth: st.depth(),
            node: st.node(),
            clock: Clock::Live(st),
            specifics,
            state: st.view(),
            cache: RefCell::new(AttributeCache::default()),
        }
    }

    #[inline]
    pub fn usertime(&self) -> u64 {
        match self.clock {
            Clock::Fixed(t) => t,
            Clock::Live(st) => st.usertime(),
        }
    }

    pub fn specifics(&self) -> &'a Specifics {
        self.specifics
    }

    pub fn state(&self) -> StateView<'a> {
        self.state
    }

    pub fn is_available(&self, key: AttrKey) -> bool {
        key.availability().contains(self.port)
    }

    /// Returns the attribute value, computing and caching it on first use.
    pub fn attribute(&self, key: AttrKey) -> Result<AttrValue, AttrError> {
        self.with_attribute(key, AttrValue::clone)
    }

    /// Applies `f` to the (possibly freshly computed) attribute value
    /// without cloning it.
    pub fn with_attribute<R>(
        &self,
        key: AttrKey,
        f: impl FnOnce(&AttrValue) -> R,
    ) -> Result<R, AttrError> {
        if !self.is_available(key) {
            return Err(AttrError::Unavailable {
                key,
                port: self.port,
            });
        }
        match key {
            AttrKey::Port => return Ok(f(&AttrValue::Port(self.port))),
            AttrKey::Chrono => return Ok(f(&AttrValue::Int(self.chrono as i64))),
            AttrKey::Depth => return Ok(f(&AttrValue::Int(self.depth as i64))),
            AttrKey::Node => return Ok(f(&AttrValue::Int(self.node as i64))),
            AttrKey::Usertime => return Ok(f(&AttrValue::Int(self.usertime() as i64))),
            _ => {}
        }
        let mut cache = self.cache.borrow_mut();
        let i = match cache.slots.iter().position(|(k, _)| *k == key) {
            Some(i) => i,
            None => {
                let value = self.compute(key);
                cache.slots.push((key, value));
                cache.slots.len() - 1
            }
        };
        Ok(f(&cache.slots[i].1))
    }

    /// Number of distinct lazy attributes computed for this event so far.
    pub fn computed_attribute_count(&self) -> usize {
        self.cache.borrow().slots.len()
    }

    /// `isNamed(key)`: whether the variable or constraint the attribute
    /// refers to carries a source-level name. The attribute itself is
    /// computed (and cached) first; an unavailable attribute is not named.
    pub fn is_named(&self, key: AttrKey) -> bool {
        if self.with_attribute(key, |_| ()).is_err() {
            return false;
        }
        use AttrKey::*;
        match key {
            Vident | Vname | Var | Dom | Delta => self
                .specifics
                .var()
                .is_some_and(|v| self.state.var(v).name.is_some()),
            Cident | Cname | Cstr | CstrRep | CstrType | Cinternal | VarC => self
                .specifics
                .cstr()
                .is_some_and(|c| self.state.constraint(c).name.is_some()),
            _ => false,
        }
    }

    fn var_id(&self) -> u32 {
        self.specifics
            .var()
            .expect("variable attribute requested on an event without a variable")
    }

    fn cstr_id(&self) -> u32 {
        self.specifics
            .cstr()
            .expect("constraint attribute requested on an event without a constraint")
    }

    fn compute(&self, key: AttrKey) -> AttrValue {
        let st = self.state;
        match key {
            AttrKey::Vident => AttrValue::Int(self.var_id() as i64),
            AttrKey::Vname => {
                AttrValue::Text(st.var(self.var_id()).name.clone().unwrap_or_default())
            }
            AttrKey::Var => AttrValue::Text(format!("v{}", self.var_id())),
            AttrKey::Dom => AttrValue::IntSet(st.domain(self.var_id()).clone()),
            AttrKey::Cident | AttrKey::Cstr => AttrValue::Int(self.cstr_id() as i64),
            AttrKey::Cname => AttrValue::Text(
                st.constraint(self.cstr_id())
                    .name
                    .clone()
                    .unwrap_or_default(),
            ),
            AttrKey::CstrRep => AttrValue::Text(st.constraint(self.cstr_id()).rep()),
            AttrKey::CstrType => {
                AttrValue::Text(st.constraint(self.cstr_id()).type_name().to_string())
            }
            AttrKey::Cinternal => {
                AttrValue::Text(st.constraint(self.cstr_id()).kind.name().to_string())
            }
            AttrKey::VarC => AttrValue::Assoc(
                st.constraint(self.cstr_id())
                    .vars
                    .iter()
                    .map(|&v| (format!("v{v}"), AttrValue::Int(v as i64)))
                    .collect(),
            ),
            AttrKey::Delta => match self.specifics {
                Specifics::Reduce { delta, .. } => AttrValue::IntSet(delta.clone()),
                _ => unreachable!("delta is only available at reduce"),
            },
            AttrKey::FullDom => AttrValue::IntSet(
                st.domains
                    .iter()
                    .fold(IntSet::empty(), |acc, d| acc.union(d)),
            ),
            AttrKey::NamedVars => AttrValue::Assoc(
                st.vars
                    .iter()
                    .filter_map(|v| {
                        v.name
                            .as_ref()
                            .map(|n| (n.clone(), AttrValue::IntSet(st.domain(v.id).clone())))
                    })
                    .collect(),
            ),
            AttrKey::Port
            | AttrKey::Chrono
            | AttrKey::Depth
            | AttrKey::Node
            | AttrKey::Usertime => unreachable!("common attributes are pre-materialized"),
        }
    }
}

/// Number of lazily computed attributes of `event`.
pub fn computed_attribute_count(event: &TraceEvent<'_>) -> usize {
    event.computed_attribute_count()
}
