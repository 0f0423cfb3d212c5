//! Numerical checks of the closed-form solution against the governing
//! equations. None of these use the closed-form derivatives: the PDE residual
//! is built from centred differences, conservation from adaptive quadrature,
//! and the generator check from an explicit Runge–Kutta integration.

use rayon::prelude::*;
use serde::Serialize;

use super::{Branch, SolutionField};
use crate::error::{Error, Result};
use crate::mixture::{RateMixture, MAX_INVERTIBLE_Y};
use crate::{ode, quadrature};

/// Stencil points must stay this many steps away from discontinuities.
const STENCIL_MARGIN: f64 = 10.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ResidualReport {
    /// `max |∂u_i/∂t + ∂(v u_i)/∂y + f_i u_i|` over points and components.
    pub max: f64,
    pub y: f64,
    pub t: f64,
    pub component: usize,
    pub points: usize,
}

/// Serialized output of the `verify` command; keys in this order.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VerifyReport {
    pub residual_max: f64,
    pub conservation: Vec<f64>,
    pub generator_deviation: f64,
}

fn check_stencil(field: &SolutionField, y: f64, t: f64, h: f64) -> Result<Branch> {
    let too_close = |feature| Err(Error::TooClose { y, t, feature });
    if !(h > 0.0 && h.is_finite()) {
        return Err(Error::invalid(format!("step h = {h} must be positive")));
    }
    if !(t - h >= 0.0) || !t.is_finite() {
        return too_close("the initial time");
    }
    if !(y - h >= 0.0 && y + h <= MAX_INVERTIBLE_Y) {
        return too_close("the domain boundary");
    }
    // Features move with speed at most Σ f_j ρ_j, so widen the band for fast flows.
    let margin = STENCIL_MARGIN * h * field.mixture().flux().max(1.0);
    let front = field.mixture().front_unchecked(t);
    if (y - front).abs() <= margin {
        return too_close("the front");
    }
    if y < front {
        return Ok(Branch::Stationary);
    }
    let bps = field.profile().breakpoints();
    for &b in &bps[1..bps.len() - 1] {
        if (y - field.lagrangian(b, t)).abs() <= margin {
            return too_close("the image of a profile breakpoint");
        }
    }
    Ok(Branch::Wave)
}

/// Filters the product grid `ys × ts` down to points whose stencil of step
/// `h` avoids the front and breakpoint images.
pub fn admissible_points(field: &SolutionField, ys: &[f64], ts: &[f64], h: f64) -> Vec<(f64, f64)> {
    ts.iter()
        .flat_map(|&t| ys.iter().map(move |&y| (y, t)))
        .filter(|&(y, t)| check_stencil(field, y, t, h).is_ok())
        .collect()
}

fn residual_at(field: &SolutionField, y: f64, t: f64, h: f64) -> Result<(f64, usize)> {
    check_stencil(field, y, t, h)?;
    let centre = field.density(y, t)?;
    let later = field.density(y, t + h)?;
    let earlier = field.density(y, t - h)?;
    let right = field.density(y + h, t)?;
    let left = field.density(y - h, t)?;
    let v_right = field.velocity(y + h, t)?;
    let v_left = field.velocity(y - h, t)?;
    let mut worst = (0.0f64, 0usize);
    for (i, c) in field.mixture().components().iter().enumerate() {
        let dudt = (later[i] - earlier[i]) / (2.0 * h);
        let dfluxdy = (v_right * right[i] - v_left * left[i]) / (2.0 * h);
        let r = (dudt + dfluxdy + c.f * centre[i]).abs();
        if r > worst.0 {
            worst = (r, i);
        }
    }
    Ok(worst)
}

/// Maximum centred-difference residual of the continuity equation with
/// evaporation over `points`. Points whose stencil comes within `10 h` of the
/// front or of a breakpoint image are rejected.
pub fn verify_pde_residual(
    field: &SolutionField,
    points: &[(f64, f64)],
    h: f64,
) -> Result<ResidualReport> {
    if points.is_empty() {
        return Err(Error::invalid("residual check needs at least one point"));
    }
    let per_point: Vec<(f64, usize)> = points
        .par_iter()
        .map(|&(y, t)| residual_at(field, y, t, h))
        .collect::<Result<_>>()?;
    let (idx, &(max, component)) = per_point
        .iter()
        .enumerate()
        .max_by(|a, b| a.1 .0.total_cmp(&b.1 .0).then(b.0.cmp(&a.0)))
        .expect("non-empty");
    Ok(ResidualReport {
        max,
        y: points[idx].0,
        t: points[idx].1,
        component,
        points: points.len(),
    })
}

/// `|∫_0^1 u_i(z, t) dz - ρ_i|` per component, by adaptive quadrature split at
/// the front and at breakpoint images.
pub fn verify_conservation(field: &SolutionField, t: f64, eps: f64) -> Result<Vec<f64>> {
    if !(eps > 0.0) {
        return Err(Error::invalid("quadrature tolerance must be positive"));
    }
    let front = field.front_position(t)?;
    let upper = MAX_INVERTIBLE_Y;
    let stationary_end = front.min(upper);

    let mut wave_cuts = vec![stationary_end];
    if front < upper {
        let bps = field.profile().breakpoints();
        for &b in &bps[1..bps.len() - 1] {
            let image = field.lagrangian(b, t);
            if image > front && image < upper {
                wave_cuts.push(image);
            }
        }
        wave_cuts.push(upper);
        wave_cuts.sort_by(f64::total_cmp);
        wave_cuts.dedup();
    }

    let k = field.mixture().len();
    (0..k)
        .map(|i| {
            let stationary = quadrature::integrate(
                |z| field.stationary_density(z).map(|u| u[i]).unwrap_or(f64::NAN),
                0.0,
                stationary_end,
                eps,
                0.0,
            )?;
            let wave = if wave_cuts.len() > 1 {
                quadrature::integrate_piecewise(
                    |z| field.wave_density(z, t).map(|u| u[i]).unwrap_or(f64::NAN),
                    &wave_cuts,
                    eps,
                    0.0,
                )?
                .value
            } else {
                0.0
            };
            Ok((stationary.value + wave - field.mixture().components()[i].rho).abs())
        })
        .collect()
}

/// `(A U)_i = (f_i ρ_i / Σ_j f_j ρ_j) Σ_j f_j U_j - f_i U_i`.
pub fn generator_apply(m: &RateMixture, u: &[f64]) -> Vec<f64> {
    let inflow: f64 = m.rates().zip(u).map(|(f, x)| f * x).sum();
    m.components()
        .iter()
        .zip(u)
        .map(|(c, &x)| c.f * c.rho / m.flux() * inflow - c.f * x)
        .collect()
}

/// Integrates `dU/dt = A U` from `U(0) = ρ` over `[0, horizon]` and returns
/// `max_t max_i |U_i(t) - ρ_i|`.
pub fn verify_generator_ode(m: &RateMixture, horizon: f64, tol: f64) -> Result<f64> {
    if !(horizon > 0.0 && horizon.is_finite()) {
        return Err(Error::invalid("horizon must be positive and finite"));
    }
    let rho: Vec<f64> = m.fractions().collect();
    let mut deviation: f64 = 0.0;
    ode::integrate(
        |_, u, du| du.copy_from_slice(&generator_apply(m, u)),
        0.0,
        horizon,
        &rho,
        tol,
        |_, u| {
            for (x, r) in u.iter().zip(&rho) {
                deviation = deviation.max((x - r).abs());
            }
        },
    )?;
    Ok(deviation)
}
