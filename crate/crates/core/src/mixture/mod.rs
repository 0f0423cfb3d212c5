//! Rate spectra of the evaporating mixture and the maps derived from them.
//!
//! A [`RateMixture`] is a finite list of `(f, ρ)` pairs: evaporation rate per
//! unit time and mass fraction. The front
//!
//! ```text
//! y_C(t) = 1 - Σ_j ρ_j e^{-f_j t}
//! ```
//!
//! separates the stationary region refilled from `y = 0` from the region still
//! carrying the initial data. [`RateMixture::front_inverse`] gives the time
//! `t_0(y)` at which the front passes `y`.

pub(crate) mod lagrangian;
mod profile;

pub use lagrangian::{lagrangian_inverse, lagrangian_map};
pub use profile::InitialProfile;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::roots;

/// Tolerance on `Σ ρ_j = 1`.
pub const NORMALIZATION_TOL: f64 = 1e-12;

/// Positions above this are rejected by the inverse maps (`t_0 → ∞`).
pub const MAX_INVERTIBLE_Y: f64 = 1.0 - 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Component {
    pub f: f64,
    pub rho: f64,
}

impl Component {
    pub fn new(f: f64, rho: f64) -> Self {
        Component { f, rho }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawMixture", into = "RawMixture")]
pub struct RateMixture {
    components: Vec<Component>,
    flux: f64,
    stagnant: f64,
}

#[derive(Serialize, Deserialize)]
struct RawMixture {
    components: Vec<Component>,
}

impl TryFrom<RawMixture> for RateMixture {
    type Error = Error;

    fn try_from(raw: RawMixture) -> Result<Self> {
        RateMixture::new(raw.components)
    }
}

impl From<RateMixture> for RawMixture {
    fn from(m: RateMixture) -> Self {
        RawMixture {
            components: m.components,
        }
    }
}

/// Neumaier-compensated sum.
pub(crate) fn compensated_sum<I: IntoIterator<Item = f64>>(values: I) -> f64 {
    let mut sum = 0.0f64;
    let mut comp = 0.0f64;
    for v in values {
        let t = sum + v;
        if sum.abs() >= v.abs() {
            comp += (sum - t) + v;
        } else {
            comp += (v - t) + sum;
        }
        sum = t;
    }
    sum + comp
}

impl RateMixture {
    /// Validates rates `f >= 0` (not all zero), fractions `ρ > 0`, and
    /// `|Σ ρ - 1| <= 1e-12`.
    pub fn new(components: Vec<Component>) -> Result<Self> {
        if components.is_empty() {
            return Err(Error::invalid("mixture needs at least one component"));
        }
        for (i, c) in components.iter().enumerate() {
            if !(c.f >= 0.0 && c.f.is_finite()) {
                return Err(Error::invalid(format!(
                    "component {i}: rate f = {} must be finite and >= 0",
                    c.f
                )));
            }
            if !(c.rho > 0.0 && c.rho.is_finite()) {
                return Err(Error::invalid(format!(
                    "component {i}: fraction rho = {} must be finite and > 0",
                    c.rho
                )));
            }
        }
        let total = compensated_sum(components.iter().map(|c| c.rho));
        if (total - 1.0).abs() > NORMALIZATION_TOL {
            return Err(Error::invalid(format!(
                "mass fractions sum to {total}, expected 1"
            )));
        }
        if components.iter().all(|c| c.f == 0.0) {
            return Err(Error::invalid(
                "all rates are zero: the velocity field vanishes identically",
            ));
        }
        let flux = compensated_sum(components.iter().map(|c| c.f * c.rho));
        let stagnant = compensated_sum(
            components
                .iter()
                .filter(|c| c.f == 0.0)
                .map(|c| c.rho),
        );
        Ok(RateMixture {
            components,
            flux,
            stagnant,
        })
    }

    /// Like [`RateMixture::new`], but rescales positive weights to sum to one.
    pub fn normalized(components: Vec<Component>) -> Result<Self> {
        let total = compensated_sum(components.iter().map(|c| c.rho));
        if !(total > 0.0 && total.is_finite()) {
            return Err(Error::invalid("weights must have a positive finite sum"));
        }
        RateMixture::new(
            components
                .into_iter()
                .map(|c| Component::new(c.f, c.rho / total))
                .collect(),
        )
    }

    pub fn from_pairs(pairs: &[(f64, f64)]) -> Result<Self> {
        RateMixture::new(pairs.iter().map(|&(f, rho)| Component::new(f, rho)).collect())
    }

    pub fn components(&self) -> &[Component] {
        &self.components
    }

    pub fn len(&self) -> usize {
        self.components.len()
    }

    pub fn is_empty(&self) -> bool {
        self.components.is_empty()
    }

    pub fn rates(&self) -> impl Iterator<Item = f64> + '_ {
        self.components.iter().map(|c| c.f)
    }

    pub fn fractions(&self) -> impl Iterator<Item = f64> + '_ {
        self.components.iter().map(|c| c.rho)
    }

    /// `Σ f_j ρ_j`, the front speed at `t = 0` and the velocity at `y = 0`.
    pub fn flux(&self) -> f64 {
        self.flux
    }

    /// `lim_{t→∞} y_C(t) = 1 - Σ_{f_j = 0} ρ_j`.
    pub fn front_limit(&self) -> f64 {
        1.0 - self.stagnant
    }

    fn check_time(t: f64) -> Result<()> {
        if t >= 0.0 && t.is_finite() {
            Ok(())
        } else {
            Err(Error::OutOfDomain {
                what: "t",
                value: t,
                domain: "[0, ∞)".into(),
            })
        }
    }

    pub(crate) fn front_unchecked(&self, t: f64) -> f64 {
        compensated_sum(self.components.iter().map(|c| -c.rho * (-c.f * t).exp_m1()))
    }

    /// `dy_C/dt = Σ_j f_j ρ_j e^{-f_j t}`.
    pub fn front_speed(&self, t: f64) -> f64 {
        compensated_sum(self.components.iter().map(|c| c.f * c.rho * (-c.f * t).exp()))
    }

    /// `y_C(t) = 1 - Σ_j ρ_j e^{-f_j t}`, evaluated as `Σ_j ρ_j (1 - e^{-f_j t})`.
    pub fn front_position(&self, t: f64) -> Result<f64> {
        Self::check_time(t)?;
        Ok(self.front_unchecked(t))
    }

    /// `t_0(y)`, the inverse of [`RateMixture::front_position`].
    pub fn front_inverse(&self, y: f64) -> Result<f64> {
        if !(y >= 0.0 && y <= MAX_INVERTIBLE_Y) {
            return Err(Error::OutOfDomain {
                what: "y",
                value: y,
                domain: format!("[0, {MAX_INVERTIBLE_Y}]"),
            });
        }
        if y == 0.0 {
            return Ok(0.0);
        }
        if y >= self.front_limit() {
            return Err(Error::OutOfDomain {
                what: "y",
                value: y,
                domain: format!(
                    "[0, {}) (never reached by the front: zero-rate mass {})",
                    self.front_limit(),
                    self.stagnant
                ),
            });
        }
        let mut hi = 1.0 / self.flux;
        let mut expansions = 0;
        while self.front_unchecked(hi) < y {
            hi *= 2.0;
            expansions += 1;
            if expansions > 2000 || !hi.is_finite() {
                return Err(Error::non_convergence(
                    "front inversion",
                    format!("could not bracket y = {y}"),
                ));
            }
        }
        roots::solve_increasing(
            |t| (self.front_unchecked(t), self.front_speed(t)),
            y,
            0.0,
            hi,
        )
    }
}
