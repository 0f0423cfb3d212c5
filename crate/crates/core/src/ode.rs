//! Dormand–Prince 5(4) embedded Runge–Kutta integrator with adaptive steps.

use crate::error::{Error, Result};

const C: [f64; 7] = [0.0, 1.0 / 5.0, 3.0 / 10.0, 4.0 / 5.0, 8.0 / 9.0, 1.0, 1.0];
const A: [[f64; 6]; 7] = [
    [0.0; 6],
    [1.0 / 5.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [
        19372.0 / 6561.0,
        -25360.0 / 2187.0,
        64448.0 / 6561.0,
        -212.0 / 729.0,
        0.0,
        0.0,
    ],
    [
        9017.0 / 3168.0,
        -355.0 / 33.0,
        46732.0 / 5247.0,
        49.0 / 176.0,
        -5103.0 / 18656.0,
        0.0,
    ],
    [
        35.0 / 384.0,
        0.0,
        500.0 / 1113.0,
        125.0 / 192.0,
        -2187.0 / 6784.0,
        11.0 / 84.0,
    ],
];
const B5: [f64; 7] = [
    35.0 / 384.0,
    0.0,
    500.0 / 1113.0,
    125.0 / 192.0,
    -2187.0 / 6784.0,
    11.0 / 84.0,
    0.0,
];
const B4: [f64; 7] = [
    5179.0 / 57600.0,
    0.0,
    7571.0 / 16695.0,
    393.0 / 640.0,
    -92097.0 / 339200.0,
    187.0 / 2100.0,
    1.0 / 40.0,
];

#[derive(Debug, Clone)]
pub struct OdeStats {
    pub accepted: usize,
    pub rejected: usize,
}

/// Integrates `dy/dt = rhs(t, y)` from `t0` to `t1`, calling `observe(t, y)`
/// after every accepted step (and once at `t0`). The local error per step is
/// held below `tol · (1 + |y|_∞)`.
pub fn integrate<F, O>(
    mut rhs: F,
    t0: f64,
    t1: f64,
    y0: &[f64],
    tol: f64,
    mut observe: O,
) -> Result<(Vec<f64>, OdeStats)>
where
    F: FnMut(f64, &[f64], &mut [f64]),
    O: FnMut(f64, &[f64]),
{
    if !(tol > 0.0) || !(t1 > t0) {
        return Err(Error::invalid("ODE needs tol > 0 and t1 > t0"));
    }
    let n = y0.len();
    let mut y = y0.to_vec();
    let mut k = vec![vec![0.0; n]; 7];
    let mut stage = vec![0.0; n];
    let mut y5 = vec![0.0; n];
    let mut t = t0;
    let mut h = (t1 - t0) * 1e-3;
    let mut stats = OdeStats {
        accepted: 0,
        rejected: 0,
    };
    observe(t, &y);
    rhs(t, &y, &mut k[0]);
    while t < t1 {
        if t + h > t1 {
            h = t1 - t;
        }
        if h <= 1e-14 * t.abs().max(1.0) {
            return Err(Error::StepUnderflow { t, h });
        }
        for s in 1..7 {
            for i in 0..n {
                stage[i] = y[i] + h * (0..s).map(|j| A[s][j] * k[j][i]).sum::<f64>();
            }
            rhs(t + C[s] * h, &stage, &mut k[s]);
        }
        let mut err: f64 = 0.0;
        let mut scale: f64 = 0.0;
        for i in 0..n {
            y5[i] = y[i] + h * (0..7).map(|j| B5[j] * k[j][i]).sum::<f64>();
            let y4 = y[i] + h * (0..7).map(|j| B4[j] * k[j][i]).sum::<f64>();
            err = err.max((y5[i] - y4).abs());
            scale = scale.max(y5[i].abs());
        }
        let bound = tol * (1.0 + scale);
        let ratio = if err == 0.0 { 0.0 } else { err / bound };
        let ratio = if ratio.is_nan() { f64::INFINITY } else { ratio };
        if ratio <= 1.0 {
            t += h;
            std::mem::swap(&mut y, &mut y5);
            // first-same-as-last: stage 7 is f(t + h, y5)
            k.swap(0, 6);
            stats.accepted += 1;
            observe(t, &y);
        } else {
            stats.rejected += 1;
        }
        let factor = if !ratio.is_finite() {
            0.2
        } else if ratio == 0.0 {
            5.0
        } else {
            (0.9 * ratio.powf(-0.2)).clamp(0.2, 5.0)
        };
        h *= factor;
    }
    Ok((y, stats))
}
