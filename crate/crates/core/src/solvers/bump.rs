use crate::graph::Grid;

use super::SolveError;

/// Nonnegative nodal profile supported inside one edge where `h > 0`.
///
/// Built on the edge with the largest interior value of `h` (lowest index on
/// ties), around the interior argmax `p*`. The support is the run of interior
/// nodes around `p*` with `h > h(p*)/2`, at most half the edge. On the
/// enclosing interval `[α, β]` the profile is 1 on the middle half and falls
/// to 0 at `α`, `β` with a cubic smoothstep.
#[derive(Debug, Clone)]
pub(crate) struct Bump {
    pub values: Vec<f64>,
}

fn smoothstep(x: f64) -> f64 {
    let x = x.clamp(0.0, 1.0);
    x * x * (3.0 - 2.0 * x)
}

impl Bump {
    pub fn new(grid: &Grid, h: &[f64]) -> Result<Self, SolveError> {
        let mut best: Option<(usize, usize, f64)> = None;
        for j in 0..grid.graph().num_edges() {
            for p in 1..grid.cells(j) {
                let v = h[grid.node(j, p)];
                if best.map_or(true, |(_, _, b)| v > b) {
                    best = Some((j, p, v));
                }
            }
        }
        let (j, peak, hmax) = best.ok_or_else(|| SolveError::FeasibilityFailure("grid has no interior nodes".into()))?;
        if !(hmax > 0.0) {
            return Err(SolveError::FeasibilityFailure(
                "h is not positive at any interior node".into(),
            ));
        }
        let n = grid.cells(j);
        let cap = (n / 2).max(1);
        let inside = |p: usize| p >= 1 && p < n && h[grid.node(j, p)] > 0.5 * hmax;
        let (mut lo, mut hi) = (peak, peak);
        while hi - lo + 1 < cap {
            let grow_lo = lo > 1 && inside(lo - 1);
            let grow_hi = inside(hi + 1);
            match (grow_lo, grow_hi) {
                (false, false) => break,
                (true, false) => lo -= 1,
                (false, true) => hi += 1,
                (true, true) => {
                    if peak - lo <= hi - peak {
                        lo -= 1
                    } else {
                        hi += 1
                    }
                }
            }
        }
        let alpha = grid.position(j, lo - 1);
        let beta = grid.position(j, hi + 1);
        let q = 0.25 * (beta - alpha);
        let mut values = vec![0.0; grid.num_dofs()];
        for p in lo..=hi {
            let s = grid.position(j, p);
            values[grid.node(j, p)] = smoothstep((s - alpha) / q).min(smoothstep((beta - s) / q));
        }
        Ok(Self { values })
    }
}

/// Root of a strictly increasing function given value and derivative.
///
/// Brackets by doubling steps from `guess`, then runs Newton safeguarded by
/// bisection. Returns `None` when no sign change is found.
pub(crate) fn increasing_root(f: impl Fn(f64) -> (f64, f64), guess: f64) -> Option<f64> {
    let (f0, _) = f(guess);
    if f0 == 0.0 {
        return Some(guess);
    }
    if !f0.is_finite() {
        return None;
    }
    let dir = if f0 > 0.0 { -1.0 } else { 1.0 };
    let (mut lo, mut hi) = (guess, guess);
    let mut step = 1.0;
    let mut found = false;
    for _ in 0..80 {
        let x = guess + dir * step;
        let (fx, _) = f(x);
        if fx.is_nan() {
            return None;
        }
        if (fx > 0.0) == (dir > 0.0) || fx == 0.0 {
            if dir > 0.0 {
                hi = x;
            } else {
                lo = x;
            }
            found = true;
            break;
        }
        if dir > 0.0 {
            lo = x;
        } else {
            hi = x;
        }
        step *= 2.0;
    }
    if !found {
        return None;
    }
    let mut x = 0.5 * (lo + hi);
    for _ in 0..200 {
        let (fx, dfx) = f(x);
        if fx == 0.0 {
            return Some(x);
        }
        if fx > 0.0 {
            hi = x;
        } else {
            lo = x;
        }
        let newton = x - fx / dfx;
        let next = if newton > lo && newton < hi && newton.is_finite() {
            newton
        } else {
            0.5 * (lo + hi)
        };
        if (next - x).abs() <= 4.0 * f64::EPSILON * x.abs().max(1e-300) || hi - lo <= 4.0 * f64::EPSILON * x.abs() {
            return Some(next);
        }
        x = next;
    }
    Some(x)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{fixtures::*, Resolution};

    #[test]
    fn bump_shape() {
        let g = Grid::new(unit_edge(), &Resolution::Uniform(64)).unwrap();
        let h: Vec<f64> = (0..g.num_dofs())
            .map(|i| {
                let (_, s) = g.locate(i);
                (std::f64::consts::PI * s).cos() - 0.1
            })
            .collect();
        let b = Bump::new(&g, &h).unwrap();
        assert_eq!(b.values[0], 0.0);
        assert_eq!(b.values[1], 0.0);
        let support: Vec<usize> = (0..g.num_dofs()).filter(|&i| b.values[i] > 0.0).collect();
        assert!(!support.is_empty() && support.len() <= 32);
        assert!(support.iter().all(|&i| h[i] > 0.0));
        assert!(b.values.iter().any(|&v| v == 1.0));
    }

    #[test]
    fn bump_needs_positive_h() {
        let g = Grid::new(unit_edge(), &Resolution::Uniform(8)).unwrap();
        assert!(Bump::new(&g, &vec![-1.0; g.num_dofs()]).is_err());
    }

    #[test]
    fn root_finder() {
        let r = increasing_root(|x| (x.exp() - 5.0, x.exp()), 0.0).unwrap();
        assert!((r - 5f64.ln()).abs() < 1e-14);
        let r = increasing_root(|x| (x * x * x + 100.0, 3.0 * x * x), 10.0).unwrap();
        assert!((r + 100f64.cbrt()).abs() < 1e-12);
        assert!(increasing_root(|x| (x.exp() + 1.0, x.exp()), 0.0).is_none());
    }
}
