//! Particle paths of the wave region.
//!
//! A fluid particle starting at `y` sits at
//! `y_C(y, t) = 1 - Σ_j e^{-f_j t} ∫_y^1 u_j(z, 0) dz` at time `t` (if it has
//! not evaporated). The tail integrals are rescaled by `ρ_j / ∫_0^1 u_j` so
//! that `y_C(0, t)` reproduces the front exactly; the rescaling is within the
//! profile tolerance of one.

use super::{profile::InitialProfile, RateMixture, MAX_INVERTIBLE_Y};
use crate::error::{Error, Result};
use crate::mixture::compensated_sum;
use crate::roots;

/// `U_j(y) = ∫_y^1 u_j(z, 0) dz`, pinned to `ρ_j` at `y = 0`.
pub(crate) fn scaled_tail(p: &InitialProfile, m: &RateMixture, j: usize, y: f64) -> f64 {
    let total = p.total(j);
    let rho = m.components()[j].rho;
    if total > 0.0 {
        (rho * p.tail(j, y) / total).max(0.0)
    } else {
        0.0
    }
}

/// `y + Σ_j U_j(y)(1 - e^{-f_j t})`, which equals the defining sum because
/// `Σ_j U_j(y) = 1 - y`.
pub(crate) fn map_unchecked(p: &InitialProfile, m: &RateMixture, y: f64, t: f64) -> f64 {
    if t == 0.0 {
        return y;
    }
    let moved = compensated_sum(
        m.components()
            .iter()
            .enumerate()
            .map(|(j, c)| -scaled_tail(p, m, j, y) * (-c.f * t).exp_m1()),
    );
    (y + moved).min(1.0)
}

/// `∂y_C(y, t)/∂y = Σ_j e^{-f_j t} u_j(y, 0)` (up to the tail rescaling).
fn map_slope(p: &InitialProfile, m: &RateMixture, y: f64, t: f64) -> f64 {
    let u = p.values(y);
    let mut slope = 1.0;
    for (j, c) in m.components().iter().enumerate() {
        let total = p.total(j);
        if total > 0.0 {
            slope += u[j] * (c.rho / total) * (-c.f * t).exp_m1();
        }
    }
    slope
}

pub(crate) fn inverse_unchecked(p: &InitialProfile, m: &RateMixture, y: f64, t: f64) -> Result<f64> {
    if t == 0.0 {
        return Ok(y);
    }
    let front = m.front_unchecked(t);
    if y <= front {
        return Ok(0.0);
    }
    roots::solve_increasing(
        |z| (map_unchecked(p, m, z, t), map_slope(p, m, z, t)),
        y,
        0.0,
        1.0,
    )
}

fn check_args(y: f64, t: f64) -> Result<()> {
    if !(t >= 0.0 && t.is_finite()) {
        return Err(Error::OutOfDomain {
            what: "t",
            value: t,
            domain: "[0, ∞)".into(),
        });
    }
    if !(y >= 0.0 && y < 1.0) {
        return Err(Error::OutOfDomain {
            what: "y",
            value: y,
            domain: "[0, 1)".into(),
        });
    }
    Ok(())
}

/// Position at time `t` of the particle that started at `y`.
pub fn lagrangian_map(p: &InitialProfile, m: &RateMixture, y: f64, t: f64) -> Result<f64> {
    p.check_consistent(m)?;
    check_args(y, t)?;
    Ok(map_unchecked(p, m, y, t))
}

/// Initial position `ŷ(y, t)` of the particle found at `y >= y_C(t)`.
pub fn lagrangian_inverse(p: &InitialProfile, m: &RateMixture, y: f64, t: f64) -> Result<f64> {
    p.check_consistent(m)?;
    check_args(y, t)?;
    if y > MAX_INVERTIBLE_Y {
        return Err(Error::OutOfDomain {
            what: "y",
            value: y,
            domain: format!("[y_C(t), {MAX_INVERTIBLE_Y}]"),
        });
    }
    let front = m.front_unchecked(t);
    if y < front - roots::RESIDUAL_TOL {
        return Err(Error::OutOfDomain {
            what: "y",
            value: y,
            domain: format!("[y_C(t) = {front}, 1): below the front the stationary branch applies"),
        });
    }
    inverse_unchecked(p, m, y, t)
}
