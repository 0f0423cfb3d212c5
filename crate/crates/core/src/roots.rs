//! Safeguarded Newton iteration for strictly increasing scalar maps.

use crate::error::{Error, Result};

/// Residual tolerance on the target value.
pub const RESIDUAL_TOL: f64 = 1e-12;
pub const MAX_ITER: usize = 200;

/// Solves `g(x) = target` for `x` in `[lo, hi]`, where `g` is strictly
/// increasing and `eval` returns `(g(x), g'(x))`. Requires
/// `g(lo) <= target <= g(hi)`.
///
/// Newton steps that leave the current bracket fall back to bisection. The
/// iteration continues past `RESIDUAL_TOL` until the bracket or step stalls
/// at machine precision, then fails if the residual is still above it.
pub fn solve_increasing<F>(mut eval: F, target: f64, mut lo: f64, mut hi: f64) -> Result<f64>
where
    F: FnMut(f64) -> (f64, f64),
{
    let (g_lo, _) = eval(lo);
    if g_lo == target {
        return Ok(lo);
    }
    let (g_hi, _) = eval(hi);
    if g_hi == target {
        return Ok(hi);
    }
    if !(g_lo < target && target < g_hi) {
        return Err(Error::invalid(format!(
            "target {target} not bracketed by [{g_lo}, {g_hi}]"
        )));
    }

    let mut x = lo + (hi - lo) * ((target - g_lo) / (g_hi - g_lo)).clamp(0.0, 1.0);
    let mut best = (f64::INFINITY, x);
    for _ in 0..MAX_ITER {
        let (g, dg) = eval(x);
        let r = g - target;
        if r.abs() < best.0 {
            best = (r.abs(), x);
        }
        if r == 0.0 {
            return Ok(x);
        }
        if r < 0.0 {
            lo = x;
        } else {
            hi = x;
        }
        let newton = x - r / dg;
        let next = if dg > 0.0 && newton > lo && newton < hi {
            newton
        } else {
            0.5 * (lo + hi)
        };
        if next == x || hi - lo <= f64::EPSILON * hi.abs().max(1e-300) {
            break;
        }
        x = next;
    }
    if best.0 <= RESIDUAL_TOL {
        Ok(best.1)
    } else {
        Err(Error::non_convergence(
            "safeguarded Newton",
            format!("residual {:e} after {MAX_ITER} iterations", best.0),
        ))
    }
}
