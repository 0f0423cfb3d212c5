use serde::{Deserialize, Serialize};

use super::RateMixture;
use crate::error::{Error, Result};

/// Tolerance for `Σ_i u_i(y, 0) = 1` and `∫ u_i(z, 0) dz = ρ_i`.
pub const PROFILE_TOL: f64 = 1e-10;

/// Piecewise-cubic initial densities `u_i(y, 0)` on `[0, 1)`.
///
/// On cell `k`, spanning `[y_k, y_{k+1})`, component `i` is
/// `c0 + c1 s + c2 s² + c3 s³` with the local coordinate `s = y - y_k`.
/// Profiles are right-continuous at breakpoints.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawProfile", into = "RawProfile")]
pub struct InitialProfile {
    breakpoints: Vec<f64>,
    cells: Vec<Vec<[f64; 4]>>,
    // head[k][i] = ∫_0^{y_k} u_i(z, 0) dz
    head: Vec<Vec<f64>>,
}

#[derive(Serialize, Deserialize)]
struct RawProfile {
    breakpoints: Vec<f64>,
    cells: Vec<Vec<[f64; 4]>>,
}

impl TryFrom<RawProfile> for InitialProfile {
    type Error = Error;

    fn try_from(raw: RawProfile) -> Result<Self> {
        InitialProfile::new(raw.breakpoints, raw.cells)
    }
}

impl From<InitialProfile> for RawProfile {
    fn from(p: InitialProfile) -> Self {
        RawProfile {
            breakpoints: p.breakpoints,
            cells: p.cells,
        }
    }
}

fn horner(c: &[f64; 4], s: f64) -> f64 {
    ((c[3] * s + c[2]) * s + c[1]) * s + c[0]
}

/// Antiderivative vanishing at `s = 0`.
fn primitive(c: &[f64; 4], s: f64) -> f64 {
    (((c[3] / 4.0 * s + c[2] / 3.0) * s + c[1] / 2.0) * s + c[0]) * s
}

/// Minimum of the cubic on `[0, h]`.
fn cubic_min(c: &[f64; 4], h: f64) -> f64 {
    let mut m = horner(c, 0.0).min(horner(c, h));
    // critical points: 3 c3 s² + 2 c2 s + c1 = 0
    let (qa, qb, qc) = (3.0 * c[3], 2.0 * c[2], c[1]);
    let mut roots = Vec::with_capacity(2);
    if qa == 0.0 {
        if qb != 0.0 {
            roots.push(-qc / qb);
        }
    } else {
        let disc = qb * qb - 4.0 * qa * qc;
        if disc >= 0.0 {
            let q = -0.5 * (qb + qb.signum() * disc.sqrt());
            if q != 0.0 {
                roots.push(q / qa);
                roots.push(qc / q);
            } else {
                roots.push(0.0);
            }
        }
    }
    for s in roots {
        if s > 0.0 && s < h {
            m = m.min(horner(c, s));
        }
    }
    m
}

impl InitialProfile {
    pub fn new(breakpoints: Vec<f64>, cells: Vec<Vec<[f64; 4]>>) -> Result<Self> {
        if breakpoints.len() < 2 {
            return Err(Error::invalid("profile needs at least two breakpoints"));
        }
        if breakpoints[0] != 0.0 || *breakpoints.last().unwrap() != 1.0 {
            return Err(Error::invalid("breakpoints must start at 0 and end at 1"));
        }
        if breakpoints.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::invalid("breakpoints must be strictly increasing"));
        }
        if cells.len() != breakpoints.len() - 1 {
            return Err(Error::invalid(format!(
                "{} cells given for {} breakpoints",
                cells.len(),
                breakpoints.len()
            )));
        }
        let k = cells[0].len();
        if k == 0 {
            return Err(Error::invalid("profile needs at least one component"));
        }
        for (cell_idx, cell) in cells.iter().enumerate() {
            if cell.len() != k {
                return Err(Error::invalid(format!(
                    "cell {cell_idx} has {} components, expected {k}",
                    cell.len()
                )));
            }
            let h = breakpoints[cell_idx + 1] - breakpoints[cell_idx];
            let mut sum = [0.0; 4];
            for (i, c) in cell.iter().enumerate() {
                if c.iter().any(|v| !v.is_finite()) {
                    return Err(Error::invalid(format!(
                        "cell {cell_idx}, component {i}: non-finite coefficient"
                    )));
                }
                let min = cubic_min(c, h);
                if min < -1e-13 {
                    return Err(Error::invalid(format!(
                        "cell {cell_idx}, component {i}: density reaches {min} < 0"
                    )));
                }
                for (acc, v) in sum.iter_mut().zip(c) {
                    *acc += v;
                }
            }
            let deviation = (sum[0] - 1.0).abs()
                + sum[1].abs() * h
                + sum[2].abs() * h * h
                + sum[3].abs() * h * h * h;
            if deviation > PROFILE_TOL {
                return Err(Error::invalid(format!(
                    "cell {cell_idx}: densities sum to 1 only within {deviation:e}"
                )));
            }
        }

        let mut head = Vec::with_capacity(breakpoints.len());
        head.push(vec![0.0; k]);
        for (cell_idx, cell) in cells.iter().enumerate() {
            let h = breakpoints[cell_idx + 1] - breakpoints[cell_idx];
            let prev = &head[cell_idx];
            let next = cell
                .iter()
                .zip(prev)
                .map(|(c, acc)| acc + primitive(c, h))
                .collect();
            head.push(next);
        }
        Ok(InitialProfile {
            breakpoints,
            cells,
            head,
        })
    }

    /// Constant densities `u_i(y, 0) = ρ_i`.
    pub fn uniform(mixture: &RateMixture) -> Self {
        let cell = mixture.fractions().map(|rho| [rho, 0.0, 0.0, 0.0]).collect();
        InitialProfile::new(vec![0.0, 1.0], vec![cell]).expect("normalized mixture")
    }

    pub fn components(&self) -> usize {
        self.cells[0].len()
    }

    pub fn breakpoints(&self) -> &[f64] {
        &self.breakpoints
    }

    pub fn cells(&self) -> &[Vec<[f64; 4]>] {
        &self.cells
    }

    pub(crate) fn cell_of(&self, y: f64) -> usize {
        let idx = self.breakpoints.partition_point(|&b| b <= y);
        idx.saturating_sub(1).min(self.cells.len() - 1)
    }

    pub fn value(&self, component: usize, y: f64) -> f64 {
        let k = self.cell_of(y);
        horner(&self.cells[k][component], y - self.breakpoints[k])
    }

    pub fn values(&self, y: f64) -> Vec<f64> {
        let k = self.cell_of(y);
        let s = y - self.breakpoints[k];
        self.cells[k].iter().map(|c| horner(c, s)).collect()
    }

    /// `∫_0^1 u_i(z, 0) dz`.
    pub fn total(&self, component: usize) -> f64 {
        self.head[self.cells.len()][component]
    }

    /// `∫_y^1 u_i(z, 0) dz`, exact for the polynomial pieces.
    pub fn tail(&self, component: usize, y: f64) -> f64 {
        let k = self.cell_of(y);
        let c = &self.cells[k][component];
        let h = self.breakpoints[k + 1] - self.breakpoints[k];
        let s = y - self.breakpoints[k];
        let within = primitive(c, h) - primitive(c, s);
        (self.total(component) - self.head[k + 1][component]) + within
    }

    /// Checks component count and `∫ u_i(z, 0) dz = ρ_i` within `1e-10`.
    pub fn check_consistent(&self, mixture: &RateMixture) -> Result<()> {
        if self.components() != mixture.len() {
            return Err(Error::invalid(format!(
                "profile has {} components, mixture has {}",
                self.components(),
                mixture.len()
            )));
        }
        for (i, rho) in mixture.fractions().enumerate() {
            let total = self.total(i);
            if (total - rho).abs() > PROFILE_TOL {
                return Err(Error::invalid(format!(
                    "component {i}: profile mass {total} differs from rho = {rho}"
                )));
            }
        }
        Ok(())
    }
}
