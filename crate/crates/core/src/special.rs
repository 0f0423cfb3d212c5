//! Complete and upper incomplete gamma functions on the ranges the Pareto
//! front formulas need.
//!
//! `upper_incomplete_gamma(z, p)` is `∫_p^∞ e^{-w} w^{z-1} dw` for real `z` in
//! `(-2, 2)` and `p > 0`. Three evaluation routes are used:
//!
//! * `p >= 2`: Legendre continued fraction (modified Lentz), valid for any `z`.
//! * `p < 2`, `-0.5 < z < 2`: `Γ(z) - γ(z, p)` with the lower function summed
//!   as a power series. Near `z = 0` the pole of `Γ(z)` and the leading series
//!   term `p^z / z` are combined analytically, so `z = 0` (the exponential
//!   integral `E_1`) is handled without division by zero.
//! * `z <= -0.5` at small `p`: one downward step of
//!   `Γ(z, p) = (Γ(z + 1, p) - p^z e^{-p}) / z`, which divides by `|z| >= 0.5`.

use crate::error::{Error, Result};

/// Taylor coefficients of `1/Γ(z) = Σ_{k≥1} c_k z^k`, starting at `c_1`.
const RGAMMA_TAYLOR: [f64; 30] = [
    1.0,
    0.577_215_664_901_532_860_6,
    -0.655_878_071_520_253_881_1,
    -0.042_002_635_034_095_235_53,
    0.166_538_611_382_291_489_5,
    -0.042_197_734_555_544_336_75,
    -0.009_621_971_527_876_973_562,
    0.007_218_943_246_663_099_542,
    -0.001_165_167_591_859_065_112,
    -0.000_215_241_674_114_950_972_8,
    0.000_128_050_282_388_116_186_2,
    -0.000_020_134_854_780_788_238_66,
    -0.000_001_250_493_482_142_670_657,
    0.000_001_133_027_231_981_695_882,
    -0.000_000_205_633_841_697_760_710_3,
    0.000_000_006_116_095_104_481_415_818,
    0.000_000_005_002_007_644_469_222_930,
    -0.000_000_001_181_274_570_487_020_145,
    1.043_426_711_691_100_510e-10,
    7.782_263_439_905_071_254e-12,
    -3.696_805_618_642_205_708e-12,
    5.100_370_287_454_475_979e-13,
    -2.058_326_053_566_506_783e-14,
    -5.348_122_539_423_017_982e-15,
    1.226_778_628_238_260_790e-15,
    -1.181_259_301_697_458_770e-16,
    1.186_692_254_751_600_333e-18,
    1.412_380_655_318_031_782e-18,
    -2.298_745_684_435_370_207e-19,
    1.714_406_321_927_337_433e-20,
];

const CF_THRESHOLD: f64 = 2.0;
const MAX_ITER: usize = 10_000;
const EPS: f64 = 1e-16;

/// `Σ_{k≥2} c_k x^{k-2}`, so that `1/Γ(1 + x) = 1 + x · tail(x)`.
fn rgamma1p_tail(x: f64) -> f64 {
    RGAMMA_TAYLOR[1..]
        .iter()
        .rev()
        .fold(0.0, |acc, &c| acc * x + c)
}

/// `1/Γ(1 + x)` for `|x| <= 1`.
fn rgamma1p(x: f64) -> f64 {
    1.0 + x * rgamma1p_tail(x)
}

/// `(Γ(1 + x) - 1) / x` for `|x| <= 0.5`, without cancellation at `x → 0`.
fn gamma1pm1_over_x(x: f64) -> f64 {
    -rgamma1p_tail(x) / rgamma1p(x)
}

/// Complete gamma function for `0 < x < 171`.
pub fn gamma(x: f64) -> f64 {
    if !(x > 0.0) || !x.is_finite() {
        return f64::NAN;
    }
    if x >= 171.7 {
        return f64::INFINITY;
    }
    // Shift into [0.5, 1.5) where the reciprocal series is accurate.
    let mut scale = 1.0;
    let mut y = x;
    while y >= 1.5 {
        y -= 1.0;
        scale *= y;
    }
    let mut div = 1.0;
    while y < 0.5 {
        div *= y;
        y += 1.0;
    }
    scale / (div * rgamma1p(y - 1.0))
}

/// Upper incomplete gamma function `Γ(z, p) = ∫_p^∞ e^{-w} w^{z-1} dw`.
pub fn upper_incomplete_gamma(z: f64, p: f64) -> Result<f64> {
    if !(p > 0.0) || !p.is_finite() {
        return Err(Error::OutOfDomain {
            what: "p",
            value: p,
            domain: "(0, ∞)".into(),
        });
    }
    if !(z > -2.0 && z < 2.0) {
        return Err(Error::OutOfDomain {
            what: "z",
            value: z,
            domain: "(-2, 2)".into(),
        });
    }
    if z <= -1.0 {
        return Ok(step_down(z, p, upper_incomplete_gamma(z + 1.0, p)?));
    }
    if p >= CF_THRESHOLD {
        return continued_fraction(z, p);
    }
    if z <= -0.5 {
        return Ok(step_down(z, p, series(z + 1.0, p)?));
    }
    series(z, p)
}

fn step_down(z: f64, p: f64, upper_next: f64) -> f64 {
    (upper_next - (z * p.ln() - p).exp()) / z
}

/// `-0.5 < z < 2`, `0 < p < 2`.
fn series(z: f64, p: f64) -> Result<f64> {
    let ln_p = p.ln();
    // Γ(z) - p^z / z
    let head = if z.abs() < 0.5 {
        let x = z * ln_p;
        let pz_m1_over_z = if x == 0.0 {
            ln_p
        } else {
            ln_p * x.exp_m1() / x
        };
        gamma1pm1_over_x(z) - pz_m1_over_z
    } else {
        gamma(z) - (z * ln_p).exp() / z
    };

    // Σ_{n≥1} (-p)^n / (n! (z + n))
    let mut term = 1.0;
    let mut sum = 0.0;
    let mut converged = false;
    for n in 1..MAX_ITER {
        let nf = n as f64;
        term *= -p / nf;
        let contrib = term / (z + nf);
        sum += contrib;
        if contrib.abs() <= EPS * sum.abs() {
            converged = true;
            break;
        }
    }
    if !converged {
        return Err(Error::non_convergence(
            "incomplete gamma series",
            format!("z = {z}, p = {p}"),
        ));
    }
    Ok(head - (z * ln_p).exp() * sum)
}

/// Legendre continued fraction, evaluated by the modified Lentz method.
fn continued_fraction(z: f64, p: f64) -> Result<f64> {
    const TINY: f64 = 1e-300;
    let mut b = p + 1.0 - z;
    let mut c = 1.0 / TINY;
    let mut d = 1.0 / b;
    let mut h = d;
    for i in 1..MAX_ITER {
        let fi = i as f64;
        let an = -fi * (fi - z);
        b += 2.0;
        d = an * d + b;
        if d.abs() < TINY {
            d = TINY;
        }
        c = b + an / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        let delta = d * c;
        h *= delta;
        if (delta - 1.0).abs() <= EPS {
            return Ok((z * p.ln() - p).exp() * h);
        }
    }
    Err(Error::non_convergence(
        "incomplete gamma continued fraction",
        format!("z = {z}, p = {p}"),
    ))
}
