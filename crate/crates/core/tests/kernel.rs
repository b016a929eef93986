mod common;

use proptest::prelude::*;
use std::collections::BTreeMap;

use tracerforge::intset::{remove_values, IntSet, MAX_INT};
use tracerforge::kernel::{load_model, program, solve, ModelError, NoTracer};
use tracerforge::trace::{AttrKey, AttrValue, Port, Specifics};

use common::record;

#[test]
fn queens4_has_two_solutions() {
    let out = solve(&program("queens(4)").unwrap().model, NoTracer);
    assert_eq!(out.solutions, vec![vec![2, 4, 1, 3], vec![3, 1, 4, 2]]);
}

#[test]
fn queens_counts_match_brute_force() {
    fn brute(n: i64) -> usize {
        let mut count = 0;
        let mut q = vec![1; n as usize];
        loop {
            let ok = (0..q.len()).all(|i| {
                (i + 1..q.len()).all(|j| {
                    let d = (j - i) as i64;
                    q[i] != q[j] && q[i] + d != q[j] && q[j] + d != q[i]
                })
            });
            count += ok as usize;
            let mut k = 0;
            while k < q.len() && q[k] == n {
                q[k] = 1;
                k += 1;
            }
            if k == q.len() {
                return count;
            }
            q[k] += 1;
        }
    }
    for n in 4..=6 {
        let out = solve(&program(&format!("queens({n})")).unwrap().model, NoTracer);
        assert_eq!(out.solutions.len(), brute(n), "queens({n})");
    }
}

#[test]
fn figtrace_first_twelve_ports_and_solution() {
    let t = record("figtrace");
    use Port::*;
    assert_eq!(
        t.ports()[..12],
        [
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
    let out = solve(&program("figtrace").unwrap().model, NoTracer);
    assert_eq!(out.solutions, vec![vec![1, 2]]);
}

#[test]
fn propag_is_infeasible() {
    let t = record("propag(50)");
    let out = solve(&program("propag(50)").unwrap().model, NoTracer);
    assert!(out.solutions.is_empty());
    let reduces = t.ports().iter().filter(|p| **p == Port::Reduce).count();
    assert!(reduces > 50, "long reduce chain expected, got {reduces}");
    assert_eq!(*t.ports().last().unwrap(), Port::EndOfTrace);
}

#[test]
fn remove_values_examples() {
    let (d, delta) = remove_values(
        &IntSet::range(0, MAX_INT),
        &IntSet::range(0, MAX_INT).difference(&IntSet::from_values([1, 2, 3])),
    );
    assert_eq!(d.to_value_list(), "1,2,3");
    assert_eq!(delta, IntSet::from_intervals([(0, 0), (4, MAX_INT)]));
    let (d, delta) = remove_values(
        &IntSet::from_values([2, 5, 7]),
        &IntSet::from_values([5, 7]),
    );
    assert_eq!(d, IntSet::singleton(2));
    assert_eq!(delta, IntSet::from_values([5, 7]));
    let dom = IntSet::from_values([1, 4, 9]);
    assert_eq!(
        remove_values(&dom, &IntSet::empty()),
        (dom.clone(), IntSet::empty())
    );
}

#[test]
fn load_model_examples() {
    let m = load_model(
        tracerforge::kernel::program("figtrace")
            .unwrap()
            .model
            .to_source()
            .as_str(),
    )
    .unwrap();
    assert_eq!(m.vars.len(), 2);
    assert_eq!(m.constraint_count(), 3);
    let empty = load_model("").unwrap();
    assert!(empty.vars.is_empty() && empty.items.is_empty());
    assert_eq!(
        load_model("cons lt x y"),
        Err(ModelError::UndeclaredVariable("x".into()))
    );
}

/// Per-constraint protocol over a whole trace: each activation is a run of
/// reduces closed by exactly one of suspend, entail or reject; every delta
/// is non-empty and disjoint from the domain left behind.
fn check_protocol(id: &str) {
    let t = record(id);
    let mut open: Option<u32> = None;
    for i in 0..t.len() {
        t.with_event(i, |e| {
            match (e.port, e.specifics()) {
                (Port::Awake | Port::Post, Specifics::Constraint { cstr }) => {
                    assert_eq!(
                        open, None,
                        "{id}: activation inside activation at {}",
                        e.chrono
                    );
                    open = Some(*cstr);
                }
                (Port::Reduce, Specifics::Reduce { cstr, var, delta }) => {
                    assert!(!delta.is_empty(), "{id}: empty delta at {}", e.chrono);
                    assert!(delta.intersect(e.state().domain(*var)).is_empty());
                    if let Some(c) = open {
                        assert_eq!(
                            c, *cstr,
                            "{id}: reduce by a foreign constraint at {}",
                            e.chrono
                        );
                    }
                }
                (Port::Suspend | Port::Entail | Port::Reject, Specifics::Constraint { cstr }) => {
                    if let Some(c) = open {
                        assert_eq!(
                            c, *cstr,
                            "{id}: closed the wrong activation at {}",
                            e.chrono
                        );
                    }
                    open = None;
                }
                _ => {}
            }
            assert_eq!(e.chrono, i as u64 + 1);
        });
    }
    assert_eq!(*t.ports().last().unwrap(), Port::EndOfTrace);
    assert_eq!(
        t.ports().iter().filter(|p| **p == Port::EndOfTrace).count(),
        1
    );
}

#[test]
fn port_protocol_holds() {
    for id in [
        "figtrace",
        "queens(5)",
        "sendmory",
        "golomb(4)",
        "subsetsum(8)",
        "random(3)",
    ] {
        check_protocol(id);
    }
}

#[test]
fn depth_follows_the_search() {
    let t = record("queens(5)");
    let mut depth = 0u32;
    for i in 0..t.len() {
        t.with_event(i, |e| {
            if e.port == Port::NewChild {
                assert_eq!(e.depth, depth + 1, "at {}", e.chrono);
            }
            depth = e.depth;
        });
    }
    let leaves = t
        .ports()
        .iter()
        .filter(|p| matches!(p, Port::Solution | Port::Failure))
        .count();
    assert!(leaves > 0);
}

#[test]
fn assign_constraints_are_typed_assign() {
    let t = record("queens(4)");
    let mut assigns = 0;
    for i in 0..t.len() {
        t.with_event(i, |e| {
            if e.port == Port::Post {
                if let Ok(AttrValue::Text(ty)) = e.attribute(AttrKey::CstrType) {
                    assigns += (ty == "assign") as usize;
                }
            }
        });
    }
    assert!(assigns > 0);
}

// Random small models against exhaustive enumeration.

#[derive(Debug, Clone)]
enum C {
    Bin(&'static str, usize, usize),
    Unary(&'static str, usize, i64),
    PlusNeq(usize, i64, usize),
    Element(usize, Vec<i64>, usize),
    Linear(Vec<(i64, usize)>, i64),
    AllDiff(Vec<usize>),
}

impl C {
    fn holds(&self, a: &[i64]) -> bool {
        match self {
            C::Bin(k, x, y) => match *k {
                "eq" => a[*x] == a[*y],
                "neq" => a[*x] != a[*y],
                "lt" => a[*x] < a[*y],
                _ => a[*x] <= a[*y],
            },
            C::Unary(k, x, c) => match *k {
                "eqc" => a[*x] == *c,
                "neqc" => a[*x] != *c,
                "gtec" => a[*x] >= *c,
                _ => a[*x] <= *c,
            },
            C::PlusNeq(x, c, y) => a[*x] + c != a[*y],
            C::Element(i, list, v) => {
                a[*i] >= 1 && (a[*i] as usize) <= list.len() && list[a[*i] as usize - 1] == a[*v]
            }
            C::Linear(terms, rhs) => terms.iter().map(|(c, x)| c * a[*x]).sum::<i64>() == *rhs,
            C::AllDiff(xs) => xs
                .iter()
                .enumerate()
                .all(|(i, x)| xs[i + 1..].iter().all(|y| a[*x] != a[*y])),
        }
    }

    fn source(&self) -> String {
        let v = |i: &usize| format!("x{i}");
        match self {
            C::Bin(k, x, y) => format!("{k} {} {}", v(x), v(y)),
            C::Unary(k, x, c) => format!("{k} {} {c}", v(x)),
            C::PlusNeq(x, c, y) => format!("plusneq {} {c} {}", v(x), v(y)),
            C::Element(i, list, x) => {
                let l: Vec<String> = list.iter().map(i64::to_string).collect();
                format!("element {} {} {}", v(i), l.join(","), v(x))
            }
            C::Linear(terms, rhs) => {
                let t: Vec<String> = terms.iter().map(|(c, x)| format!("{c} {}", v(x))).collect();
                format!("linear {} = {rhs}", t.join(" "))
            }
            C::AllDiff(xs) => format!("alldiff {}", xs.iter().map(v).collect::<Vec<_>>().join(" ")),
        }
    }
}

fn arb_c(n: usize) -> impl Strategy<Value = C> {
    let var = 0..n;
    prop_oneof![
        (
            prop::sample::select(vec!["eq", "neq", "lt", "lte"]),
            var.clone(),
            var.clone()
        )
            .prop_filter("distinct", |(_, x, y)| x != y)
            .prop_map(|(k, x, y)| C::Bin(k, x, y)),
        (
            prop::sample::select(vec!["eqc", "neqc", "gtec", "ltec"]),
            var.clone(),
            0..5i64
        )
            .prop_map(|(k, x, c)| C::Unary(k, x, c)),
        (var.clone(), -2..3i64, var.clone())
            .prop_filter("distinct", |(x, _, y)| x != y)
            .prop_map(|(x, c, y)| C::PlusNeq(x, c, y)),
        (
            var.clone(),
            prop::collection::vec(0..5i64, 1..4),
            var.clone()
        )
            .prop_filter("distinct", |(x, _, y)| x != y)
            .prop_map(|(i, l, x)| C::Element(i, l, x)),
        (
            prop::collection::vec((-2..3i64, var.clone()), 1..4),
            -3..8i64
        )
            .prop_filter("nonzero", |(t, _)| t.iter().all(|(c, _)| *c != 0))
            .prop_map(|(t, r)| C::Linear(t, r)),
        prop::collection::btree_set(var, 2..4).prop_map(|s| C::AllDiff(s.into_iter().collect())),
    ]
}

#[derive(Debug, Clone)]
enum It {
    Cons(C),
    Choice(Vec<C>),
}

fn arb_model() -> impl Strategy<Value = (usize, Vec<i64>, Vec<It>, bool)> {
    (2..5usize).prop_flat_map(|n| {
        let item = prop_oneof![
            3 => arb_c(n).prop_map(It::Cons),
            1 => prop::collection::vec(arb_c(n), 2..4).prop_map(It::Choice),
        ];
        (
            Just(n),
            prop::collection::vec(0..5i64, n),
            prop::collection::vec(item, 0..6),
            any::<bool>(),
        )
    })
}

/// Number of times the solver should report assignment `a`: one per
/// combination of satisfied alternatives.
fn multiplicity(items: &[It], a: &[i64]) -> usize {
    items
        .iter()
        .map(|it| match it {
            It::Cons(c) => c.holds(a) as usize,
            It::Choice(alts) => alts.iter().filter(|c| c.holds(a)).count(),
        })
        .product()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(300))]

    #[test]
    fn solutions_match_enumeration((n, his, items, ff) in arb_model()) {
        let mut src = String::new();
        for (i, hi) in his.iter().enumerate() {
            src.push_str(&format!("var x{i} 0..{hi}\n"));
        }
        for it in &items {
            match it {
                It::Cons(c) => src.push_str(&format!("cons {}\n", c.source())),
                It::Choice(alts) => {
                    let a: Vec<String> = alts.iter().map(C::source).collect();
                    src.push_str(&format!("choice {}\n", a.join(" | ")));
                }
            }
        }
        src.push_str(if ff { "label firstfail asc\n" } else { "label input asc\n" });
        let model = load_model(&src).unwrap();
        let out = solve(&model, NoTracer);

        let mut want: BTreeMap<Vec<i64>, usize> = BTreeMap::new();
        let mut a = vec![0i64; n];
        loop {
            let m = multiplicity(&items, &a);
            if m > 0 {
                want.insert(a.clone(), m);
            }
            let mut k = 0;
            while k < n && a[k] == his[k] {
                a[k] = 0;
                k += 1;
            }
            if k == n {
                break;
            }
            a[k] += 1;
        }
        let mut got: BTreeMap<Vec<i64>, usize> = BTreeMap::new();
        for s in out.solutions {
            *got.entry(s).or_default() += 1;
        }
        prop_assert_eq!(got, want, "model:\n{}", src);
    }
}
