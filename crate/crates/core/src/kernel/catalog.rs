//! Built-in benchmark programs.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use super::model::{load_model, Model};

#[derive(Debug, Clone)]
pub struct Program {
    /// Canonical id, e.g. `queens(8)`.
    pub id: String,
    pub model: Model,
}

#[derive(Debug, Clone, Error, PartialEq, Eq)]
#[error("unknown program `{0}` (known: figtrace, queens(n), propag(n), sendmory, golomb(n), subsetsum(n), random(seed))")]
pub struct UnknownProgram(pub String);

pub fn catalog_names() -> &'static [&'static str] {
    &[
        "figtrace",
        "queens",
        "propag",
        "sendmory",
        "golomb",
        "subsetsum",
        "random",
    ]
}

pub const FIGTRACE: &str = "\
# fd_element(I, [2,5,7], A), (A #= I ; A #= 2)
var i 0..268435455
var a 0..268435455
cons element i 2,5,7 a
choice eq a i | eqc a 2
label input asc
";

fn queens(n: i64) -> String {
    let mut s = String::new();
    for i in 1..=n {
        s.push_str(&format!("var q{i} 1..{n}\n"));
    }
    for i in 1..=n {
        for j in i + 1..=n {
            let d = j - i;
            s.push_str(&format!("cons neq q{i} q{j}\n"));
            s.push_str(&format!("cons plusneq q{i} {d} q{j}\n"));
            s.push_str(&format!("cons plusneq q{j} {d} q{i}\n"));
        }
    }
    s.push_str("label input asc\n");
    s
}

fn propag(n: i64) -> String {
    // 1 <= x, y <= n, x < y, y < x: infeasible, proven by a long bounds
    // ping-pong between the two inequalities.
    format!(
        "var x 0..268435455\nvar y 0..268435455\n\
         cons gtec x 1\ncons ltec y {n}\ncons lt x y\ncons lt y x\nlabel input asc\n"
    )
}

const SENDMORY: &str = "\
# SEND + MORE = MONEY
var s 0..9
var e 0..9
var n 0..9
var d 0..9
var m 0..9
var o 0..9
var r 0..9
var y 0..9
cons alldiff s e n d m o r y
cons neqc s 0
cons neqc m 0
cons linear 1000 s 91 e -90 n 1 d -9000 m -900 o 10 r -1 y = 0
label input asc
";

/// Golomb rulers with `n` marks and length at most `len`: every pairwise
/// distance differs.
fn golomb(n: i64, len: i64) -> String {
    let mut s = String::new();
    for i in 1..=n {
        s.push_str(&format!("var m{i} 0..{len}\n"));
    }
    s.push_str("cons eqc m1 0\n");
    let mut diffs = Vec::new();
    for i in 1..=n {
        for j in i + 1..=n {
            s.push_str(&format!("var d{i}_{j} 1..{len}\n"));
            diffs.push(format!("d{i}_{j}"));
        }
    }
    for i in 1..n {
        s.push_str(&format!("cons lt m{i} m{}\n", i + 1));
    }
    for i in 1..=n {
        for j in i + 1..=n {
            s.push_str(&format!("cons linear 1 m{j} -1 m{i} -1 d{i}_{j} = 0\n"));
        }
    }
    s.push_str(&format!("cons alldiff {}\n", diffs.join(" ")));
    s.push_str("label input asc\n");
    s
}

/// Subsets of `n` fixed weights summing to a third of their total: one long
/// linear constraint, so each event carries a lot of propagation work.
fn subsetsum(n: i64) -> String {
    let w: Vec<i64> = (1..=n).map(|i| 10 + (i * 37) % 29).collect();
    let target = w.iter().sum::<i64>() / 3;
    let mut s = String::new();
    for i in 1..=n {
        s.push_str(&format!("var x{i} 0..1\n"));
    }
    let terms: Vec<String> = w
        .iter()
        .enumerate()
        .map(|(i, c)| format!("{c} x{}", i + 1))
        .collect();
    s.push_str(&format!("cons linear {} = {target}\n", terms.join(" ")));
    s.push_str("label input asc\n");
    s
}

/// Seeded random binary CSP.
fn random(seed: u64) -> String {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (nvars, dmax, ncons) = (9, 5, 13);
    let mut s = String::new();
    for i in 1..=nvars {
        s.push_str(&format!("var x{i} 0..{dmax}\n"));
    }
    let kinds = ["neq", "lt", "lte", "plusneq", "neq"];
    for _ in 0..ncons {
        let a = rng.gen_range(1..=nvars);
        let mut b = rng.gen_range(1..=nvars);
        while b == a {
            b = rng.gen_range(1..=nvars);
        }
        match *kinds.choose(&mut rng).unwrap() {
            "plusneq" => {
                let c = rng.gen_range(1..=2);
                s.push_str(&format!("cons plusneq x{a} {c} x{b}\n"));
            }
            k => s.push_str(&format!("cons {k} x{a} x{b}\n")),
        }
    }
    s.push_str("label firstfail asc\n");
    s
}

fn split_id(id: &str) -> (&str, Option<&str>) {
    let id = id.trim();
    if let Some((name, rest)) = id.split_once('(') {
        return (name, Some(rest.trim_end_matches(')')));
    }
    if let Some((name, arg)) = id.split_once(':') {
        return (name, Some(arg));
    }
    let digits = id.trim_start_matches(|c: char| !c.is_ascii_digit());
    if !digits.is_empty() && digits.len() < id.len() {
        return (&id[..id.len() - digits.len()], Some(digits));
    }
    (id, None)
}

/// Looks up a catalog program by id: `figtrace`, `queens(8)` (also
/// `queens:8`, `queens8`), `propag(100000)`, `sendmory`, `random(7)`.
pub fn program(id: &str) -> Result<Program, UnknownProgram> {
    let unknown = || UnknownProgram(id.to_string());
    let (name, arg) = split_id(id);
    let int_arg = |default: i64| -> Result<i64, UnknownProgram> {
        match arg {
            None => Ok(default),
            Some(a) => a.trim().parse().map_err(|_| unknown()),
        }
    };
    let (canon, src) = match name {
        "figtrace" if arg.is_none() => ("figtrace".to_string(), FIGTRACE.to_string()),
        "sendmory" if arg.is_none() => ("sendmory".to_string(), SENDMORY.to_string()),
        "queens" => {
            let n = int_arg(8)?;
            if !(1..=64).contains(&n) {
                return Err(unknown());
            }
            (format!("queens({n})"), queens(n))
        }
        "propag" => {
            let n = int_arg(70_000_000)?;
            if !(1..=crate::intset::MAX_INT).contains(&n) {
                return Err(unknown());
            }
            (format!("propag({n})"), propag(n))
        }
        "golomb" => {
            // shortest known rulers
            const OPT: [i64; 9] = [0, 0, 1, 3, 6, 11, 17, 25, 34];
            let n = int_arg(6)?;
            if !(2..=8).contains(&n) {
                return Err(unknown());
            }
            (format!("golomb({n})"), golomb(n, OPT[n as usize]))
        }
        "subsetsum" => {
            let n = int_arg(24)?;
            if !(1..=64).contains(&n) {
                return Err(unknown());
            }
            (format!("subsetsum({n})"), subsetsum(n))
        }
        "random" => {
            let seed = int_arg(1)?;
            (format!("random({seed})"), random(seed as u64))
        }
        _ => return Err(unknown()),
    };
    let model = load_model(&src).expect("catalog models are well-formed");
    Ok(Program { id: canon, model })
}
