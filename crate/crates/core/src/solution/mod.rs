//! The classical solution of the evaporation-driven mixture equations.
//!
//! Below the front (`y < y_C(t)`) the densities are stationary and depend on
//! `y` only through `t_0(y)`:
//!
//! ```text
//! u_i = e^{-f_i t_0} f_i ρ_i / Σ_j e^{-f_j t_0} f_j ρ_j,     v = Σ_j e^{-f_j t_0} f_j ρ_j
//! ```
//!
//! Above it the initial data is transported along particle paths:
//!
//! ```text
//! u_i = e^{-f_i t} u_i(ŷ, 0) / Σ_j e^{-f_j t} u_j(ŷ, 0),   v = Σ_j f_j e^{-f_j t} ∫_ŷ^1 u_j(z, 0) dz
//! ```
//!
//! with `ŷ = ŷ(y, t)` the initial position of the particle now at `y`.

mod verify;

pub use verify::{
    admissible_points, generator_apply, verify_conservation, verify_generator_ode,
    verify_pde_residual, ResidualReport, VerifyReport,
};

use serde::Serialize;

use crate::error::{Error, Result};
use crate::mixture::{
    lagrangian::{inverse_unchecked, map_unchecked, scaled_tail},
    InitialProfile, RateMixture, MAX_INVERTIBLE_Y,
};

/// Half-width of the band around `y_C(t)` classified as the front.
pub const FRONT_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Branch {
    Stationary,
    Wave,
    Front,
}

impl std::fmt::Display for Branch {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Branch::Stationary => "stationary",
            Branch::Wave => "wave",
            Branch::Front => "front",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StateSample {
    pub y: f64,
    pub t: f64,
    pub u: Vec<f64>,
    pub v: f64,
    pub branch: Branch,
}

/// A validated mixture / initial-profile pair.
#[derive(Debug, Clone)]
pub struct SolutionField {
    mixture: RateMixture,
    profile: InitialProfile,
}

impl SolutionField {
    pub fn new(mixture: RateMixture, profile: InitialProfile) -> Result<Self> {
        profile.check_consistent(&mixture)?;
        Ok(SolutionField { mixture, profile })
    }

    /// Field with constant initial densities `u_i(y, 0) = ρ_i`.
    pub fn uniform(mixture: RateMixture) -> Self {
        let profile = InitialProfile::uniform(&mixture);
        SolutionField { mixture, profile }
    }

    pub fn mixture(&self) -> &RateMixture {
        &self.mixture
    }

    pub fn profile(&self) -> &InitialProfile {
        &self.profile
    }

    pub fn front_position(&self, t: f64) -> Result<f64> {
        self.mixture.front_position(t)
    }

    fn check_args(y: f64, t: f64) -> Result<()> {
        if !(t >= 0.0 && t.is_finite()) {
            return Err(Error::OutOfDomain {
                what: "t",
                value: t,
                domain: "[0, ∞)".into(),
            });
        }
        if !(y >= 0.0 && y <= MAX_INVERTIBLE_Y) {
            return Err(Error::OutOfDomain {
                what: "y",
                value: y,
                domain: format!("[0, {MAX_INVERTIBLE_Y}]"),
            });
        }
        Ok(())
    }

    pub fn branch(&self, y: f64, t: f64) -> Result<Branch> {
        Self::check_args(y, t)?;
        Ok(self.classify(y, t))
    }

    fn classify(&self, y: f64, t: f64) -> Branch {
        let front = self.mixture.front_unchecked(t);
        if (y - front).abs() <= FRONT_TOL {
            Branch::Front
        } else if y < front {
            Branch::Stationary
        } else {
            Branch::Wave
        }
    }

    /// Densities from the stationary formula at `t_0(y)`.
    pub(crate) fn stationary_density(&self, y: f64) -> Result<Vec<f64>> {
        let t0 = self.mixture.front_inverse(y)?;
        Ok(stationary_weights(&self.mixture, t0))
    }

    pub(crate) fn stationary_velocity(&self, y: f64) -> Result<f64> {
        let t0 = self.mixture.front_inverse(y)?;
        Ok(self.mixture.front_speed(t0))
    }

    /// Densities transported from `ŷ(y, t)`.
    pub(crate) fn wave_density(&self, y: f64, t: f64) -> Result<Vec<f64>> {
        let hat = inverse_unchecked(&self.profile, &self.mixture, y, t)?;
        let u0 = self.profile.values(hat);
        Ok(wave_weights(&self.mixture, &u0, t))
    }

    pub(crate) fn wave_velocity(&self, y: f64, t: f64) -> Result<f64> {
        let hat = inverse_unchecked(&self.profile, &self.mixture, y, t)?;
        Ok(self.wave_velocity_at_origin(hat, t))
    }

    fn wave_velocity_at_origin(&self, hat: f64, t: f64) -> f64 {
        crate::mixture::compensated_sum(self.mixture.components().iter().enumerate().map(
            |(j, c)| c.f * (-c.f * t).exp() * scaled_tail(&self.profile, &self.mixture, j, hat),
        ))
    }

    fn off_front(&self, y: f64, t: f64) -> Result<Branch> {
        Self::check_args(y, t)?;
        match self.classify(y, t) {
            Branch::Front => Err(Error::OnFront {
                y,
                t,
                front: self.mixture.front_unchecked(t),
            }),
            b => Ok(b),
        }
    }

    /// Per-component densities `u_i(y, t)`. Points within `1e-12` of the
    /// front are rejected; use [`SolutionField::sample_state`] there.
    pub fn density(&self, y: f64, t: f64) -> Result<Vec<f64>> {
        match self.off_front(y, t)? {
            Branch::Stationary => self.stationary_density(y),
            _ => self.wave_density(y, t),
        }
    }

    /// Velocity `v(y, t) = Σ_j f_j ∫_y^1 u_j(z, t) dz`.
    pub fn velocity(&self, y: f64, t: f64) -> Result<f64> {
        match self.off_front(y, t)? {
            Branch::Stationary => self.stationary_velocity(y),
            _ => self.wave_velocity(y, t),
        }
    }

    /// Densities, velocity and branch. On the front the stationary-side limit
    /// is reported.
    pub fn sample_state(&self, y: f64, t: f64) -> Result<StateSample> {
        Self::check_args(y, t)?;
        let branch = self.classify(y, t);
        let (u, v) = match branch {
            Branch::Stationary => (self.stationary_density(y)?, self.stationary_velocity(y)?),
            Branch::Wave => (self.wave_density(y, t)?, self.wave_velocity(y, t)?),
            Branch::Front => {
                // y_C(t_0) = y_C(t) up to 1e-12; use t directly.
                (
                    stationary_weights(&self.mixture, t),
                    self.mixture.front_speed(t),
                )
            }
        };
        Ok(StateSample { y, t, u, v, branch })
    }

    /// Wave-side limit on the front: the densities transported from `ŷ = 0`.
    pub fn wave_limit_at_front(&self, t: f64) -> Result<Vec<f64>> {
        Self::check_args(0.0, t)?;
        Ok(wave_weights(&self.mixture, &self.profile.values(0.0), t))
    }

    pub(crate) fn lagrangian(&self, y: f64, t: f64) -> f64 {
        map_unchecked(&self.profile, &self.mixture, y, t)
    }
}

/// `e^{-f_i s} f_i ρ_i`, normalized; evaluated with a log shift so large `s`
/// does not underflow every weight.
fn stationary_weights(m: &RateMixture, s: f64) -> Vec<f64> {
    let logs: Vec<f64> = m
        .components()
        .iter()
        .map(|c| {
            if c.f > 0.0 {
                (c.f * c.rho).ln() - c.f * s
            } else {
                f64::NEG_INFINITY
            }
        })
        .collect();
    normalize_logs(&logs)
}

fn wave_weights(m: &RateMixture, u0: &[f64], t: f64) -> Vec<f64> {
    let logs: Vec<f64> = m
        .components()
        .iter()
        .zip(u0)
        .map(|(c, &u)| {
            if u > 0.0 {
                u.ln() - c.f * t
            } else {
                f64::NEG_INFINITY
            }
        })
        .collect();
    normalize_logs(&logs)
}

fn normalize_logs(logs: &[f64]) -> Vec<f64> {
    let max = logs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let w: Vec<f64> = logs.iter().map(|&l| (l - max).exp()).collect();
    let total: f64 = w.iter().sum();
    w.into_iter().map(|x| x / total).collect()
}
