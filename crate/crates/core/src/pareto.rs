//! Front and rank trajectory for Pareto-distributed rates
//! `f_i = a (N / i)^{1/b}`, `ρ_i = 1/N`.
//!
//! Replacing the sum over `i` by an integral gives, with `p = a t`,
//!
//! ```text
//! 0 < b < 1:   y_C = 1 - e^{-p} + p^b Γ(1-b, p)
//! 1 < b < 2:   y_C = 1 - e^{-p} (1 - p/(b-1)) - p^b Γ(2-b, p) / (b-1)
//! ```
//!
//! which differs from the discrete sum by at most `e^{-p}/N`. Both forms have
//! `dy_C/dp = b p^{b-1} Γ(1-b, p)`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mixture::{Component, RateMixture};
use crate::special::{gamma, upper_incomplete_gamma};

/// Width of the excluded bands around `b = 1` and `b = 2`.
pub const B_BAND: f64 = 1e-9;

/// Beyond this `p = a t` every `e^{-p}` term underflows and `y_C` is pinned to 1.
pub const SATURATION_P: f64 = 700.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ParetoParams {
    /// Population size; integer for the discrete rates, real in fits.
    #[serde(rename = "N")]
    pub n: f64,
    /// Smallest rate, per unit time.
    pub a: f64,
    /// Pareto exponent.
    pub b: f64,
}

impl ParetoParams {
    pub fn new(n: f64, a: f64, b: f64) -> Result<Self> {
        if !(n >= 2.0 && n.is_finite()) {
            return Err(Error::invalid(format!("N = {n} must be finite and >= 2")));
        }
        if !(a > 0.0 && a.is_finite()) {
            return Err(Error::invalid(format!("a = {a} must be positive")));
        }
        if !(b > 0.0 && b.is_finite()) {
            return Err(Error::invalid(format!("b = {b} must be positive")));
        }
        Ok(ParetoParams { n, a, b })
    }
}

/// Which closed form applies to an exponent.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExponentBranch {
    /// `0 < b < 1`
    Below1,
    /// `1 < b < 2`
    Between1And2,
}

pub fn exponent_branch(b: f64) -> Result<ExponentBranch> {
    if !(b > 0.0) {
        return Err(Error::invalid(format!("b = {b} must be positive")));
    }
    if b >= 2.0 {
        return Err(Error::invalid(format!(
            "b = {b}: exponents b >= 2 are not supported"
        )));
    }
    if (b - 1.0).abs() < B_BAND || b > 2.0 - B_BAND {
        return Err(Error::invalid(format!(
            "b = {b} lies within {B_BAND:e} of a singular exponent (1 or 2)"
        )));
    }
    Ok(if b < 1.0 {
        ExponentBranch::Below1
    } else {
        ExponentBranch::Between1And2
    })
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

/// `y_C` as a function of `p = a t` and `b`.
pub fn front_in_p(p: f64, b: f64) -> Result<f64> {
    let branch = exponent_branch(b)?;
    if p == 0.0 {
        return Ok(0.0);
    }
    if p > SATURATION_P {
        return Ok(1.0);
    }
    let decayed = -(-p).exp_m1();
    let y = match branch {
        ExponentBranch::Below1 => decayed + p.powf(b) * upper_incomplete_gamma(1.0 - b, p)?,
        ExponentBranch::Between1And2 => {
            let bm1 = b - 1.0;
            decayed + (-p).exp() * p / bm1
                - p.powf(b) * upper_incomplete_gamma(2.0 - b, p)? / bm1
        }
    };
    Ok(y.clamp(0.0, 1.0))
}

/// `(y_C, ∂y_C/∂p, ∂y_C/∂b)` at `(p, b)`. The `b`-derivative uses a central
/// difference in the order of the incomplete gamma function only.
pub fn front_in_p_with_gradient(p: f64, b: f64) -> Result<(f64, f64, f64)> {
    let branch = exponent_branch(b)?;
    let y = front_in_p(p, b)?;
    if p == 0.0 {
        let slope = match branch {
            ExponentBranch::Below1 => f64::INFINITY,
            ExponentBranch::Between1And2 => b / (b - 1.0),
        };
        return Ok((y, slope, 0.0));
    }
    if p > SATURATION_P {
        return Ok((y, 0.0, 0.0));
    }
    let pb = p.powf(b);
    let ln_p = p.ln();
    let dy_dp = b * pb / p * upper_incomplete_gamma(1.0 - b, p)?;
    let d_order = |s: f64| -> Result<f64> {
        let h = 1e-5;
        Ok((upper_incomplete_gamma(s + h, p)? - upper_incomplete_gamma(s - h, p)?) / (2.0 * h))
    };
    let dy_db = match branch {
        ExponentBranch::Below1 => {
            let s = 1.0 - b;
            pb * ln_p * upper_incomplete_gamma(s, p)? - pb * d_order(s)?
        }
        ExponentBranch::Between1And2 => {
            let bm1 = b - 1.0;
            let s = 2.0 - b;
            let g = upper_incomplete_gamma(s, p)?;
            -(-p).exp() * p / (bm1 * bm1) - (pb * ln_p * g - pb * d_order(s)?) / bm1
                + pb * g / (bm1 * bm1)
        }
    };
    Ok((y, dy_dp, dy_db))
}

/// Continuum front `y_C(t)` for Pareto rates.
pub fn relative_front_pareto(params: &ParetoParams, t: f64) -> Result<f64> {
    check_time(t)?;
    front_in_p(params.a * t, params.b)
}

/// The un-integrated form `1 - b (a t)^b Γ(-b, a t)`, valid for `0 < b < 1`.
pub fn relative_front_pareto_unintegrated(params: &ParetoParams, t: f64) -> Result<f64> {
    check_time(t)?;
    if exponent_branch(params.b)? != ExponentBranch::Below1 {
        return Err(Error::invalid("the un-integrated form needs 0 < b < 1"));
    }
    let p = params.a * t;
    if p == 0.0 {
        return Ok(0.0);
    }
    Ok(1.0 - params.b * p.powf(params.b) * upper_incomplete_gamma(-params.b, p)?)
}

/// Rank trajectory `x_C(t) = 1 + N y_C(t)`.
pub fn rank_trajectory(params: &ParetoParams, t: f64) -> Result<f64> {
    Ok(1.0 + params.n * relative_front_pareto(params, t)?)
}

/// `c = N a^b Γ(1 - b)`, the coefficient of `x_C(t) - 1 ≈ c t^b` for `b < 1`.
pub fn short_time_coefficient(params: &ParetoParams) -> Result<f64> {
    if exponent_branch(params.b)? != ExponentBranch::Below1 {
        return Err(Error::invalid(format!(
            "b = {}: the t^b short-time law needs 0 < b < 1",
            params.b
        )));
    }
    Ok(params.n * params.a.powf(params.b) * gamma(1.0 - params.b))
}

/// Leading short-time behaviour of `y_C(t)`: `a^b Γ(1-b) t^b` for `b < 1`,
/// `(a b/(b-1)) t - Γ(2-b) a^b t^b/(b-1)` for `1 < b < 2`.
pub fn short_time_front(params: &ParetoParams, t: f64) -> Result<f64> {
    check_time(t)?;
    let (a, b) = (params.a, params.b);
    Ok(match exponent_branch(b)? {
        ExponentBranch::Below1 => a.powf(b) * gamma(1.0 - b) * t.powf(b),
        ExponentBranch::Between1And2 => {
            a * b / (b - 1.0) * t - gamma(2.0 - b) * a.powf(b) / (b - 1.0) * t.powf(b)
        }
    })
}

/// Discrete Pareto rates `f_i = a (N/i)^{1/b}` with equal weights `1/N`.
pub fn pareto_rates(params: &ParetoParams) -> Result<RateMixture> {
    let n = params.n;
    if n.fract() != 0.0 || n < 2.0 || n > u32::MAX as f64 {
        return Err(Error::invalid(format!(
            "N = {n} must be an integer >= 2 for discrete rates"
        )));
    }
    let count = n as usize;
    let rho = 1.0 / n;
    let inv_b = 1.0 / params.b;
    let components = (1..=count)
        .map(|i| Component::new(params.a * (n / i as f64).powf(inv_b), rho))
        .collect();
    RateMixture::new(components)
}

/// Largest `t` grid value used by [`pareto_check`]: where `y_C` reaches `level`.
pub fn time_to_reach(params: &ParetoParams, level: f64) -> Result<f64> {
    if !(level > 0.0 && level < 1.0) {
        return Err(Error::invalid(format!("level {level} must lie in (0, 1)")));
    }
    exponent_branch(params.b)?;
    let (mut lo, mut hi) = (1e-300f64.ln(), SATURATION_P.ln());
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if front_in_p(mid.exp(), params.b)? < level {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok((0.5 * (lo + hi)).exp() / params.a)
}

/// Numerical self-checks for one parameter set.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ParetoCheck {
    /// Max relative violation of `Γ(z+1,p) = zΓ(z,p) + p^z e^{-p}` over
    /// `z ∈ {-0.9, …, 0.9}`, `p ∈ [1e-6, 50]`.
    pub gamma_recurrence: f64,
    /// Max relative gap between the two closed forms of `y_C` (only `b < 1`).
    pub partial_integration: Option<f64>,
    /// Max `|N y_C^{gamma} - N y_C^{sum}|` in ranks up to `y_C = 0.99`
    /// (only integer `N`).
    pub discrete_gap: Option<f64>,
    /// `c = N a^b Γ(1-b)` (only `b < 1`).
    pub short_time_coefficient: Option<f64>,
}

fn log_grid(lo: f64, hi: f64, n: usize) -> impl Iterator<Item = f64> {
    let (l, h) = (lo.ln(), hi.ln());
    (0..n).map(move |i| (l + (h - l) * i as f64 / (n - 1) as f64).exp())
}

pub fn pareto_check(params: &ParetoParams) -> Result<ParetoCheck> {
    let branch = exponent_branch(params.b)?;
    let mut recurrence: f64 = 0.0;
    for k in -9..=9 {
        let z = k as f64 / 10.0;
        for p in log_grid(1e-6, 50.0, 60) {
            let lhs = upper_incomplete_gamma(z + 1.0, p)?;
            let rhs = z * upper_incomplete_gamma(z, p)? + p.powf(z) * (-p).exp();
            recurrence = recurrence.max(((lhs - rhs) / lhs).abs());
        }
    }
    let partial_integration = if branch == ExponentBranch::Below1 {
        let mut worst: f64 = 0.0;
        for p in log_grid(1e-6, 10.0, 100) {
            let t = p / params.a;
            let direct = relative_front_pareto(params, t)?;
            let other = relative_front_pareto_unintegrated(params, t)?;
            worst = worst.max(((direct - other) / direct).abs());
        }
        Some(worst)
    } else {
        None
    };
    let discrete_gap = if params.n.fract() == 0.0 {
        let mixture = pareto_rates(params)?;
        let t_max = time_to_reach(params, 0.99)?;
        let mut worst: f64 = 0.0;
        for t in log_grid(1e-6 / params.a, t_max, 200) {
            let gap = params.n * (relative_front_pareto(params, t)? - mixture.front_position(t)?);
            worst = worst.max(gap.abs());
        }
        Some(worst)
    } else {
        None
    };
    Ok(ParetoCheck {
        gamma_recurrence: recurrence,
        partial_integration,
        discrete_gap,
        short_time_coefficient: (branch == ExponentBranch::Below1)
            .then(|| short_time_coefficient(params))
            .transpose()?,
    })
}
