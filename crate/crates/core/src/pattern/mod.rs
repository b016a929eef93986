//! Event patterns: `label: when <condition> do|do_synchro <actions>`.

mod gen;
mod parser;

use std::collections::BTreeSet;
use std::fmt::{self, Write as _};

use thiserror::Error;

use crate::trace::{AttrKey, Port, ValueKind};

pub use gen::{random_condition, random_elementary};
pub use parser::{parse_condition, parse_patterns};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Op {
    Lt,
    Gt,
    Eq,
    Ne,
    Ge,
    Le,
    In,
    NotIn,
    Contains,
    NotContains,
}

impl Op {
    pub const ALL: [Op; 10] = [
        Op::Lt,
        Op::Gt,
        Op::Eq,
        Op::Ne,
        Op::Ge,
        Op::Le,
        Op::In,
        Op::NotIn,
        Op::Contains,
        Op::NotContains,
    ];

    pub fn symbol(self) -> &'static str {
        match self {
            Op::Lt => "<",
            Op::Gt => ">",
            Op::Eq => "=",
            Op::Ne => "\\=",
            Op::Ge => ">=",
            Op::Le => "=<",
            Op::In => "in",
            Op::NotIn => "notin",
            Op::Contains => "contains",
            Op::NotContains => "notcontains",
        }
    }

    fn is_set_op(self) -> bool {
        matches!(self, Op::In | Op::NotIn)
    }
}

impl fmt::Display for Op {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.symbol())
    }
}

/// Right-hand side of an elementary condition.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Value {
    Int(i64),
    Text(String),
    Port(Port),
    /// Capitalized identifier, to be substituted before activation
    /// (`cstr = CId` in a command template).
    Var(String),
    List(Vec<Value>),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Cond {
    True,
    Leaf { attr: AttrKey, op: Op, value: Value },
    IsNamed(AttrKey),
    Not(Box<Cond>),
    And(Box<Cond>, Box<Cond>),
    Or(Box<Cond>, Box<Cond>),
}

impl Cond {
    pub fn leaf(attr: AttrKey, op: Op, value: Value) -> Cond {
        Cond::Leaf { attr, op, value }
    }

    #[allow(clippy::should_implement_trait)]
    pub fn not(c: Cond) -> Cond {
        Cond::Not(Box::new(c))
    }

    pub fn and(a: Cond, b: Cond) -> Cond {
        Cond::And(Box::new(a), Box::new(b))
    }

    pub fn or(a: Cond, b: Cond) -> Cond {
        Cond::Or(Box::new(a), Box::new(b))
    }

    /// Number of elementary conditions (leaves and `isNamed` tests).
    pub fn leaf_count(&self) -> usize {
        match self {
            Cond::True => 0,
            Cond::Leaf { .. } | Cond::IsNamed(_) => 1,
            Cond::Not(a) => a.leaf_count(),
            Cond::And(a, b) | Cond::Or(a, b) => a.leaf_count() + b.leaf_count(),
        }
    }

    /// Metavariables occurring in the condition.
    pub fn vars(&self) -> BTreeSet<String> {
        let mut out = BTreeSet::new();
        self.collect_vars(&mut out);
        out
    }

    fn collect_vars(&self, out: &mut BTreeSet<String>) {
        match self {
            Cond::Leaf {
                value: Value::Var(v),
                ..
            } => {
                out.insert(v.clone());
            }
            Cond::Not(a) => a.collect_vars(out),
            Cond::And(a, b) | Cond::Or(a, b) => {
                a.collect_vars(out);
                b.collect_vars(out);
            }
            _ => {}
        }
    }

    /// Replaces metavariable `name` by `value`.
    pub fn substitute(&self, name: &str, value: &Value) -> Cond {
        match self {
            Cond::Leaf {
                attr,
                op,
                value: Value::Var(v),
            } if v == name => Cond::leaf(*attr, *op, value.clone()),
            Cond::Not(a) => Cond::not(a.substitute(name, value)),
            Cond::And(a, b) => Cond::and(a.substitute(name, value), b.substitute(name, value)),
            Cond::Or(a, b) => Cond::or(a.substitute(name, value), b.substitute(name, value)),
            other => other.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CurrentItem {
    pub key: AttrKey,
    /// `port=P`: the name the analyzer binds the value to.
    pub binder: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Action {
    Current(Vec<CurrentItem>),
    Call { name: String, args: Vec<String> },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Pattern {
    pub label: String,
    pub cond: Cond,
    pub sync: bool,
    pub actions: Vec<Action>,
}

impl Pattern {
    /// Attribute keys requested by `current` actions, first occurrence order.
    pub fn current_keys(&self) -> Vec<AttrKey> {
        let mut keys = Vec::new();
        for a in &self.actions {
            if let Action::Current(items) = a {
                for it in items {
                    if !keys.contains(&it.key) {
                        keys.push(it.key);
                    }
                }
            }
        }
        keys
    }

    pub fn calls(&self) -> impl Iterator<Item = &str> {
        self.actions.iter().filter_map(|a| match a {
            Action::Call { name, .. } => Some(name.as_str()),
            Action::Current(_) => None,
        })
    }
}

#[derive(Debug, Clone, Error, PartialEq, Eq)]
pub enum PatternError {
    #[error("line {line}, column {col}: expected {expected}")]
    Syntax {
        line: usize,
        col: usize,
        expected: String,
    },
    #[error("line {line}, column {col}: unknown attribute `{name}`")]
    UnknownAttribute {
        line: usize,
        col: usize,
        name: String,
    },
    #[error("line {line}, column {col}: unknown port `{name}`")]
    UnknownPortName {
        line: usize,
        col: usize,
        name: String,
    },
    #[error(transparent)]
    Type(#[from] TypeError),
}

#[derive(Debug, Clone, Error, PartialEq, Eq)]
#[error("`{attr} {op}`: {reason}")]
pub struct TypeError {
    pub attr: AttrKey,
    pub op: String,
    pub reason: String,
}

fn type_err(attr: AttrKey, op: &str, reason: impl Into<String>) -> TypeError {
    TypeError {
        attr,
        op: op.to_string(),
        reason: reason.into(),
    }
}

/// Operators applicable to a value kind.
pub fn operators_for(kind: ValueKind) -> &'static [Op] {
    use Op::*;
    match kind {
        ValueKind::Int => &[Lt, Gt, Eq, Ne, Ge, Le, In, NotIn],
        ValueKind::Port | ValueKind::Text => &[Eq, Ne, In, NotIn],
        ValueKind::IntSet => &[Contains, NotContains],
        ValueKind::Assoc => &[],
    }
}

fn scalar_matches(kind: ValueKind, v: &Value) -> bool {
    matches!(
        (kind, v),
        (ValueKind::Int, Value::Int(_))
            | (ValueKind::Text, Value::Text(_))
            | (ValueKind::Port, Value::Port(_))
    )
}

pub fn typecheck(cond: &Cond) -> Result<(), TypeError> {
    match cond {
        Cond::True => Ok(()),
        Cond::IsNamed(attr) => {
            if attr.kind() == ValueKind::Text {
                Ok(())
            } else {
                Err(type_err(
                    *attr,
                    "isNamed",
                    "isNamed applies to text attributes",
                ))
            }
        }
        Cond::Leaf { attr, op, value } => {
            let kind = attr.kind();
            if !operators_for(kind).contains(op) {
                return Err(type_err(
                    *attr,
                    op.symbol(),
                    format!("operator not defined on {kind:?} attributes"),
                ));
            }
            let ok = match (kind, value) {
                (ValueKind::IntSet, Value::Int(_)) => true,
                (ValueKind::IntSet, Value::List(vs)) => {
                    vs.iter().all(|v| matches!(v, Value::Int(_)))
                }
                (ValueKind::IntSet, _) => false,
                (_, Value::List(vs)) if op.is_set_op() => {
                    vs.iter().all(|v| scalar_matches(kind, v))
                }
                (_, _) if op.is_set_op() => false,
                (_, Value::Var(_)) => true,
                (_, v) => scalar_matches(kind, v),
            };
            if ok {
                Ok(())
            } else {
                Err(type_err(
                    *attr,
                    op.symbol(),
                    format!(
                        "value {} does not fit a {kind:?} attribute",
                        format_value(value)
                    ),
                ))
            }
        }
        Cond::Not(a) => typecheck(a),
        Cond::And(a, b) | Cond::Or(a, b) => {
            typecheck(a)?;
            typecheck(b)
        }
    }
}

/// Parses and typechecks.
pub fn load_patterns(src: &str) -> Result<Vec<Pattern>, PatternError> {
    let ps = parse_patterns(src)?;
    for p in &ps {
        typecheck(&p.cond)?;
    }
    Ok(ps)
}

const KEYWORDS: &[&str] = &[
    "when",
    "do",
    "do_synchro",
    "dosynchro",
    "and",
    "or",
    "not",
    "true",
    "in",
    "notin",
    "contains",
    "notcontains",
    "isNamed",
    "current",
    "call",
    "maxInt",
];

fn is_bare_word(s: &str) -> bool {
    let mut chars = s.chars();
    matches!(chars.next(), Some(c) if c.is_ascii_lowercase())
        && chars.all(|c| c.is_ascii_alphanumeric() || c == '_')
        && !KEYWORDS.contains(&s)
}

pub fn format_value(v: &Value) -> String {
    match v {
        Value::Int(i) => i.to_string(),
        Value::Port(p) => p.name().to_string(),
        Value::Var(n) => n.clone(),
        Value::Text(s) if is_bare_word(s) => s.clone(),
        Value::Text(s) => format!("'{}'", s.replace('\\', "\\\\").replace('\'', "\\'")),
        Value::List(vs) => {
            let items: Vec<String> = vs.iter().map(format_value).collect();
            format!("[{}]", items.join(", "))
        }
    }
}

fn prec(c: &Cond) -> u8 {
    match c {
        Cond::Or(..) => 1,
        Cond::And(..) => 2,
        _ => 3,
    }
}

fn write_cond(out: &mut String, c: &Cond, min: u8) {
    let paren = prec(c) < min;
    if paren {
        out.push('(');
    }
    match c {
        Cond::True => out.push_str("true"),
        Cond::Leaf { attr, op, value } => {
            let _ = write!(out, "{attr} {op} {}", format_value(value));
        }
        Cond::IsNamed(attr) => {
            let _ = write!(out, "isNamed({attr})");
        }
        Cond::Not(a) => {
            out.push_str("not ");
            write_cond(out, a, 3);
        }
        Cond::And(a, b) => {
            write_cond(out, a, 2);
            out.push_str(" and ");
            write_cond(out, b, 3);
        }
        Cond::Or(a, b) => {
            write_cond(out, a, 1);
            out.push_str(" or ");
            write_cond(out, b, 2);
        }
    }
    if paren {
        out.push(')');
    }
}

pub fn format_condition(c: &Cond) -> String {
    let mut s = String::new();
    write_cond(&mut s, c, 0);
    s
}

/// Canonical text; parses back to an equal pattern.
pub fn format_pattern(p: &Pattern) -> String {
    let mut s = format!("{}: when {}", p.label, format_condition(&p.cond));
    s.push_str(if p.sync { " do_synchro " } else { " do " });
    let actions: Vec<String> = p
        .actions
        .iter()
        .map(|a| match a {
            Action::Current(items) => {
                let items: Vec<String> = items
                    .iter()
                    .map(|it| match &it.binder {
                        Some(b) => format!("{}={b}", it.key),
                        None => it.key.to_string(),
                    })
                    .collect();
                format!("current({})", items.join(", "))
            }
            Action::Call { name, args } if args.is_empty() => format!("call({name})"),
            Action::Call { name, args } => format!("call {name}({})", args.join(", ")),
        })
        .collect();
    s.push_str(&actions.join(", "));
    s
}

/// Pattern file text: one pattern per paragraph, each ended by a dot.
pub fn format_patterns(ps: &[Pattern]) -> String {
    let mut s = String::new();
    for p in ps {
        s.push_str(&format_pattern(p));
        s.push_str(".\n\n");
    }
    s
}

impl fmt::Display for Pattern {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&format_pattern(self))
    }
}

impl fmt::Display for Cond {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&format_condition(self))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn table() {
        let leaf = |a, o, v| typecheck(&Cond::leaf(a, o, v));
        assert!(leaf(
            AttrKey::Delta,
            Op::NotContains,
            Value::List(vec![Value::Int(268435455)])
        )
        .is_ok());
        assert!(leaf(AttrKey::Port, Op::Contains, Value::List(vec![])).is_err());
        assert!(typecheck(&Cond::IsNamed(AttrKey::Var)).is_ok());
        assert!(typecheck(&Cond::IsNamed(AttrKey::Chrono)).is_err());
        assert!(leaf(AttrKey::Chrono, Op::Eq, Value::Text("x".into())).is_err());
        assert!(leaf(AttrKey::Cstr, Op::Eq, Value::Var("CId".into())).is_ok());
        assert!(leaf(AttrKey::Chrono, Op::In, Value::Int(3)).is_err());
        assert!(leaf(AttrKey::VarC, Op::Eq, Value::Int(3)).is_err());
    }

    #[test]
    fn minimal_parens() {
        let a = Cond::leaf(AttrKey::Depth, Op::Eq, Value::Int(1));
        let b = Cond::leaf(AttrKey::Chrono, Op::Ge, Value::Int(1));
        let c = Cond::leaf(AttrKey::Node, Op::Eq, Value::Int(2));
        let e = Cond::or(a.clone(), Cond::and(b.clone(), c.clone()));
        assert_eq!(
            format_condition(&e),
            "depth = 1 or chrono >= 1 and node = 2"
        );
        let e = Cond::and(Cond::or(a.clone(), b.clone()), c.clone());
        assert_eq!(
            format_condition(&e),
            "(depth = 1 or chrono >= 1) and node = 2"
        );
        let e = Cond::or(a.clone(), Cond::or(b, c));
        assert_eq!(
            format_condition(&e),
            "depth = 1 or (chrono >= 1 or node = 2)"
        );
        assert_eq!(
            format_condition(&Cond::not(Cond::not(a))),
            "not not depth = 1"
        );
    }

    #[test]
    fn text_quoting() {
        assert_eq!(format_value(&Value::Text("assign".into())), "assign");
        assert_eq!(format_value(&Value::Text("and".into())), "'and'");
        assert_eq!(format_value(&Value::Text("Q1".into())), "'Q1'");
        assert_eq!(format_value(&Value::Text("it's".into())), "'it\\'s'");
        assert_eq!(format_value(&Value::Text("".into())), "''");
    }
}
