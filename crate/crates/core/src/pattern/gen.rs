//! Random well-typed conditions, for oracle testing.

use rand::Rng;

use super::{operators_for, Cond, Op, Value};
use crate::intset::MAX_INT;
use crate::trace::{AttrKey, Port, ValueKind};

const TEXTS: &[&str] = &[
    "q1",
    "q2",
    "q5",
    "v1",
    "v3",
    "assign",
    "x_neq_y",
    "x_plus_c_neq_y",
    "fd_element",
    "c1",
    "zork",
];

fn int<R: Rng + ?Sized>(rng: &mut R) -> i64 {
    match rng.gen_range(0..10) {
        0 => MAX_INT,
        1..=6 => rng.gen_range(0..8),
        _ => rng.gen_range(0..4000),
    }
}

fn list<R: Rng + ?Sized>(rng: &mut R, mut one: impl FnMut(&mut R) -> Value) -> Value {
    let n = rng.gen_range(1..=4);
    Value::List((0..n).map(|_| one(rng)).collect())
}

/// One elementary condition over a random attribute.
pub fn random_elementary<R: Rng + ?Sized>(rng: &mut R) -> Cond {
    loop {
        let attr = AttrKey::ALL[rng.gen_range(0..AttrKey::ALL.len())];
        let kind = attr.kind();
        if kind == ValueKind::Assoc {
            continue;
        }
        if kind == ValueKind::Text && rng.gen_bool(0.25) {
            return Cond::IsNamed(attr);
        }
        let ops = operators_for(kind);
        let op = ops[rng.gen_range(0..ops.len())];
        let set_op = matches!(op, Op::In | Op::NotIn);
        let value = match kind {
            ValueKind::Int if set_op => list(rng, |r| Value::Int(int(r))),
            ValueKind::Int => Value::Int(int(rng)),
            ValueKind::Port if set_op => list(rng, |r| {
                Value::Port(Port::ALL[r.gen_range(0..Port::ALL.len())])
            }),
            ValueKind::Port => Value::Port(Port::ALL[rng.gen_range(0..Port::ALL.len())]),
            ValueKind::Text if set_op => list(rng, |r| {
                Value::Text(TEXTS[r.gen_range(0..TEXTS.len())].into())
            }),
            ValueKind::Text => Value::Text(TEXTS[rng.gen_range(0..TEXTS.len())].into()),
            ValueKind::IntSet if rng.gen_bool(0.5) => Value::Int(int(rng)),
            ValueKind::IntSet => list(rng, |r| Value::Int(int(r))),
            ValueKind::Assoc => unreachable!(),
        };
        return Cond::leaf(attr, op, value);
    }
}

/// A condition of nesting at most `depth`; it always typechecks.
pub fn random_condition<R: Rng + ?Sized>(rng: &mut R, depth: u32) -> Cond {
    if depth == 0 || rng.gen_bool(0.3) {
        return if rng.gen_bool(0.03) {
            Cond::True
        } else {
            random_elementary(rng)
        };
    }
    match rng.gen_range(0..5) {
        0 => Cond::not(random_condition(rng, depth - 1)),
        1 | 2 => Cond::and(
            random_condition(rng, depth - 1),
            random_condition(rng, depth - 1),
        ),
        _ => Cond::or(
            random_condition(rng, depth - 1),
            random_condition(rng, depth - 1),
        ),
    }
}
