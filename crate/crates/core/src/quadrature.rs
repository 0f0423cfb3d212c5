//! Globally adaptive Gauss–Kronrod (7, 15) quadrature.

use crate::error::{Error, Result};

const XGK: [f64; 8] = [
    0.991_455_371_120_812_639_206_854_697_526_329,
    0.949_107_912_342_758_524_526_189_684_047_851,
    0.864_864_423_359_769_072_789_712_788_640_926,
    0.741_531_185_599_394_439_863_864_773_280_788,
    0.586_087_235_467_691_130_294_144_845_693_013,
    0.405_845_151_377_397_166_906_606_412_076_961,
    0.207_784_955_007_898_467_600_689_403_773_245,
    0.000_000_000_000_000_000_000_000_000_000_000,
];

const WGK: [f64; 8] = [
    0.022_935_322_010_529_224_963_732_008_058_970,
    0.063_092_092_629_978_553_290_700_663_189_204,
    0.104_790_010_322_250_183_839_876_322_541_518,
    0.140_653_259_715_525_918_745_189_590_510_238,
    0.169_004_726_639_267_902_826_583_426_598_550,
    0.190_350_578_064_785_409_913_256_402_421_014,
    0.204_432_940_075_298_892_414_161_999_234_649,
    0.209_482_141_084_727_828_012_999_174_891_714,
];

const WG: [f64; 4] = [
    0.129_484_966_168_869_693_270_611_432_679_082,
    0.279_705_391_489_276_667_901_467_771_423_780,
    0.381_830_050_505_118_944_950_369_775_488_975,
    0.417_959_183_673_469_387_755_102_040_816_327,
];

#[derive(Debug, Clone, Copy)]
pub struct Quadrature {
    pub value: f64,
    pub error: f64,
    pub evaluations: usize,
}

#[derive(Debug, Clone, Copy)]
struct Segment {
    a: f64,
    b: f64,
    value: f64,
    error: f64,
}

fn kronrod<F: FnMut(f64) -> f64>(f: &mut F, a: f64, b: f64) -> Segment {
    let center = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    let fc = f(center);
    let mut kronrod = fc * WGK[7];
    let mut gauss = fc * WG[3];
    for j in 0..7 {
        let dx = half * XGK[j];
        let pair = f(center - dx) + f(center + dx);
        kronrod += WGK[j] * pair;
        if j % 2 == 1 {
            gauss += WG[j / 2] * pair;
        }
    }
    Segment {
        a,
        b,
        value: kronrod * half,
        error: ((kronrod - gauss) * half).abs(),
    }
}

/// Integrates `f` over `[a, b]` until the summed error estimate is below
/// `max(abs_tol, rel_tol · |I|)`. Nodes are interior, so integrable endpoint
/// singularities are tolerated.
pub fn integrate<F: FnMut(f64) -> f64>(
    mut f: F,
    a: f64,
    b: f64,
    abs_tol: f64,
    rel_tol: f64,
) -> Result<Quadrature> {
    const MAX_SEGMENTS: usize = 4000;
    if !(a.is_finite() && b.is_finite()) {
        return Err(Error::invalid("quadrature bounds must be finite"));
    }
    if a == b {
        return Ok(Quadrature {
            value: 0.0,
            error: 0.0,
            evaluations: 0,
        });
    }
    let mut segments = vec![kronrod(&mut f, a, b)];
    let mut evaluations = 15;
    loop {
        let value: f64 = segments.iter().map(|s| s.value).sum();
        let error: f64 = segments.iter().map(|s| s.error).sum();
        if !value.is_finite() {
            return Err(Error::non_convergence(
                "adaptive quadrature",
                "integrand produced a non-finite value",
            ));
        }
        if error <= abs_tol.max(rel_tol * value.abs()) {
            return Ok(Quadrature {
                value,
                error,
                evaluations,
            });
        }
        if segments.len() >= MAX_SEGMENTS {
            return Err(Error::non_convergence(
                "adaptive quadrature",
                format!("error estimate {error:e} after {MAX_SEGMENTS} segments"),
            ));
        }
        let (worst, _) = segments
            .iter()
            .enumerate()
            .max_by(|x, y| x.1.error.total_cmp(&y.1.error))
            .expect("non-empty");
        let seg = segments.swap_remove(worst);
        let mid = 0.5 * (seg.a + seg.b);
        if mid <= seg.a || mid >= seg.b {
            return Err(Error::non_convergence(
                "adaptive quadrature",
                format!("interval [{}, {}] cannot be bisected further", seg.a, seg.b),
            ));
        }
        segments.push(kronrod(&mut f, seg.a, mid));
        segments.push(kronrod(&mut f, mid, seg.b));
        evaluations += 30;
    }
}

/// Integrates over consecutive sub-intervals given by sorted `cuts`.
pub fn integrate_piecewise<F: FnMut(f64) -> f64>(
    mut f: F,
    cuts: &[f64],
    abs_tol: f64,
    rel_tol: f64,
) -> Result<Quadrature> {
    let mut total = Quadrature {
        value: 0.0,
        error: 0.0,
        evaluations: 0,
    };
    let pieces = cuts.len().saturating_sub(1).max(1) as f64;
    for w in cuts.windows(2) {
        let q = integrate(&mut f, w[0], w[1], abs_tol / pieces, rel_tol)?;
        total.value += q.value;
        total.error += q.error;
        total.evaluations += q.evaluations;
    }
    Ok(total)
}
