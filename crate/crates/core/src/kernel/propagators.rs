//! Filtering rules. Inequalities and `linear_eq` reason on bounds; the
//! other kinds remove individual values.

use super::ConstraintKind;
use crate::intset::IntSet;

/// Domain access offered to a filter. `narrow` replaces a domain by a
/// subset of itself and reports whether the result is non-empty.
pub(crate) trait Narrow {
    type Err;
    fn dom(&self, var: u32) -> &IntSet;
    fn narrow(&mut self, var: u32, to: IntSet) -> Result<bool, Self::Err>;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum Filtered {
    Suspend,
    Entail,
    Reject,
}

macro_rules! narrow {
    ($s:expr, $v:expr, $to:expr) => {
        if !$s.narrow($v, $to)? {
            return Ok(Filtered::Reject);
        }
    };
}

fn remove(d: &IntSet, v: i64) -> IntSet {
    if d.contains(v) {
        d.difference(&IntSet::singleton(v))
    } else {
        d.clone()
    }
}

pub(crate) fn filter<S: Narrow>(
    s: &mut S,
    kind: ConstraintKind,
    vars: &[u32],
    params: &[i64],
) -> Result<Filtered, S::Err> {
    use ConstraintKind::*;
    match kind {
        XEqY => {
            // Entailment is only reported when the arguments were already
            // ground on entry; a grounding activation suspends.
            let (x, y) = (vars[0], vars[1]);
            let ground = s.dom(x).value().is_some() && s.dom(y).value().is_some();
            let nx = s.dom(x).intersect(s.dom(y));
            narrow!(s, x, nx);
            let ny = s.dom(y).intersect(s.dom(x));
            narrow!(s, y, ny);
            Ok(if ground {
                Filtered::Entail
            } else {
                Filtered::Suspend
            })
        }
        XNeqY => {
            let (x, y) = (vars[0], vars[1]);
            if let Some(v) = s.dom(x).value() {
                let ny = remove(s.dom(y), v);
                narrow!(s, y, ny);
            }
            if let Some(w) = s.dom(y).value() {
                let nx = remove(s.dom(x), w);
                narrow!(s, x, nx);
            }
            Ok(if s.dom(x).intersect(s.dom(y)).is_empty() {
                Filtered::Entail
            } else {
                Filtered::Suspend
            })
        }
        XLtY | XLteY => {
            let gap = if kind == XLtY { 1 } else { 0 };
            let (x, y) = (vars[0], vars[1]);
            let ymax = s.dom(y).max().unwrap_or(i64::MIN);
            let nx = s.dom(x).clamp(i64::MIN, ymax - gap);
            narrow!(s, x, nx);
            let xmin = s.dom(x).min().unwrap_or(i64::MAX);
            let ny = s.dom(y).clamp(xmin + gap, i64::MAX);
            narrow!(s, y, ny);
            let entailed = s.dom(x).max().unwrap() + gap <= s.dom(y).min().unwrap();
            Ok(if entailed {
                Filtered::Entail
            } else {
                Filtered::Suspend
            })
        }
        XEqC => {
            let nx = s.dom(vars[0]).intersect(&IntSet::singleton(params[0]));
            narrow!(s, vars[0], nx);
            Ok(Filtered::Entail)
        }
        XNeqC => {
            let nx = remove(s.dom(vars[0]), params[0]);
            narrow!(s, vars[0], nx);
            Ok(Filtered::Entail)
        }
        XGteC => {
            let nx = s.dom(vars[0]).clamp(params[0], i64::MAX);
            narrow!(s, vars[0], nx);
            Ok(Filtered::Entail)
        }
        XLteC => {
            let nx = s.dom(vars[0]).clamp(i64::MIN, params[0]);
            narrow!(s, vars[0], nx);
            Ok(Filtered::Entail)
        }
        XPlusCNeqY => {
            // x + c != y
            let (x, y, c) = (vars[0], vars[1], params[0]);
            if let Some(v) = s.dom(x).value() {
                let ny = remove(s.dom(y), v + c);
                narrow!(s, y, ny);
                return Ok(Filtered::Entail);
            }
            if let Some(w) = s.dom(y).value() {
                let nx = remove(s.dom(x), w - c);
                narrow!(s, x, nx);
                return Ok(Filtered::Entail);
            }
            Ok(Filtered::Suspend)
        }
        Element => {
            // list[i] = a, 1-based index
            let (i, a) = (vars[0], vars[1]);
            let n = params.len() as i64;
            let support: Vec<i64> = s
                .dom(i)
                .clamp(1, n)
                .iter()
                .filter(|&k| s.dom(a).contains(params[(k - 1) as usize]))
                .collect();
            narrow!(s, i, IntSet::from_values(support));
            let values = IntSet::from_values(s.dom(i).iter().map(|k| params[(k - 1) as usize]));
            let na = s.dom(a).intersect(&values);
            narrow!(s, a, na);
            Ok(if s.dom(i).value().is_some() {
                Filtered::Entail
            } else {
                Filtered::Suspend
            })
        }
        AllDiffPairwise => {
            let mut done = vec![false; vars.len()];
            loop {
                let mut progress = false;
                for k in 0..vars.len() {
                    if done[k] {
                        continue;
                    }
                    let Some(v) = s.dom(vars[k]).value() else {
                        continue;
                    };
                    done[k] = true;
                    progress = true;
                    for (j, &other) in vars.iter().enumerate() {
                        if j != k && s.dom(other).contains(v) {
                            let nd = remove(s.dom(other), v);
                            narrow!(s, other, nd);
                        }
                    }
                }
                if !progress {
                    break;
                }
            }
            Ok(if done.iter().all(|&d| d) {
                Filtered::Entail
            } else {
                Filtered::Suspend
            })
        }
        LinearEq => {
            let n = vars.len();
            let (coefs, rhs) = (&params[..n], params[n]);
            loop {
                let mut changed = false;
                let bounds: Vec<(i64, i64)> = (0..n)
                    .map(|k| {
                        let d = s.dom(vars[k]);
                        let (lo, hi) = (coefs[k] * d.min().unwrap(), coefs[k] * d.max().unwrap());
                        (lo.min(hi), lo.max(hi))
                    })
                    .collect();
                let sum_lo: i64 = bounds.iter().map(|b| b.0).sum();
                let sum_hi: i64 = bounds.iter().map(|b| b.1).sum();
                for k in 0..n {
                    let c = coefs[k];
                    if c == 0 {
                        continue;
                    }
                    // c * x_k in [rhs - (sum_hi - hi_k), rhs - (sum_lo - lo_k)]
                    let lo = rhs - (sum_hi - bounds[k].1);
                    let hi = rhs - (sum_lo - bounds[k].0);
                    let (xlo, xhi) = if c > 0 {
                        (div_ceil(lo, c), div_floor(hi, c))
                    } else {
                        (div_ceil(hi, c), div_floor(lo, c))
                    };
                    let d = s.dom(vars[k]);
                    if d.min().unwrap() < xlo || d.max().unwrap() > xhi {
                        let nd = d.clamp(xlo, xhi);
                        narrow!(s, vars[k], nd);
                        changed = true;
                        break;
                    }
                }
                if !changed {
                    break;
                }
            }
            if vars.iter().all(|&v| s.dom(v).value().is_some()) {
                let total: i64 = (0..n)
                    .map(|k| coefs[k] * s.dom(vars[k]).value().unwrap())
                    .sum();
                return Ok(if total == rhs {
                    Filtered::Entail
                } else {
                    Filtered::Reject
                });
            }
            Ok(Filtered::Suspend)
        }
    }
}

fn div_floor(a: i64, b: i64) -> i64 {
    let q = a / b;
    if (a % b != 0) && ((a < 0) != (b < 0)) {
        q - 1
    } else {
        q
    }
}

fn div_ceil(a: i64, b: i64) -> i64 {
    let q = a / b;
    if (a % b != 0) && ((a < 0) == (b < 0)) {
        q + 1
    } else {
        q
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    struct Doms(Vec<IntSet>);

    impl Narrow for Doms {
        type Err = ();
        fn dom(&self, var: u32) -> &IntSet {
            &self.0[var as usize]
        }
        fn narrow(&mut self, var: u32, to: IntSet) -> Result<bool, ()> {
            assert!(to.is_subset(&self.0[var as usize]));
            let ok = !to.is_empty();
            self.0[var as usize] = to;
            Ok(ok)
        }
    }

    #[test]
    fn division_rounding() {
        assert_eq!(div_floor(-7, 2), -4);
        assert_eq!(div_ceil(-7, 2), -3);
        assert_eq!(div_floor(7, -2), -4);
        assert_eq!(div_ceil(7, 2), 4);
        assert_eq!(div_floor(6, 3), 2);
    }

    #[test]
    fn element_fig6() {
        let mut d = Doms(vec![IntSet::full(), IntSet::full()]);
        let r = filter(&mut d, ConstraintKind::Element, &[0, 1], &[2, 5, 7]).unwrap();
        assert_eq!(r, Filtered::Suspend);
        assert_eq!(d.0[0].to_value_list(), "1,2,3");
        assert_eq!(d.0[1].to_value_list(), "2,5,7");
        let mut d = Doms(vec![IntSet::singleton(2), IntSet::singleton(2)]);
        let r = filter(&mut d, ConstraintKind::Element, &[0, 1], &[2, 5, 7]).unwrap();
        assert_eq!(r, Filtered::Reject);
    }

    #[test]
    fn lt_bounds() {
        let mut d = Doms(vec![IntSet::range(1, 10), IntSet::range(0, 5)]);
        let r = filter(&mut d, ConstraintKind::XLtY, &[0, 1], &[]).unwrap();
        assert_eq!(r, Filtered::Suspend);
        assert_eq!(d.0[0], IntSet::range(1, 4));
        assert_eq!(d.0[1], IntSet::range(2, 5));
    }

    #[test]
    fn linear_ground_check() {
        let mut d = Doms(vec![IntSet::range(0, 9), IntSet::range(0, 9)]);
        // 2x - y = 3
        let r = filter(&mut d, ConstraintKind::LinearEq, &[0, 1], &[2, -1, 3]).unwrap();
        assert_eq!(r, Filtered::Suspend);
        assert_eq!(d.0[0], IntSet::range(2, 6));
        assert_eq!(d.0[1], IntSet::range(1, 9));
        let mut d = Doms(vec![IntSet::singleton(4), IntSet::singleton(5)]);
        let r = filter(&mut d, ConstraintKind::LinearEq, &[0, 1], &[2, -1, 3]).unwrap();
        assert_eq!(r, Filtered::Entail);
    }
}
