//! Brute-force posterior integration on a dense grid.
//!
//! Small instances of the models (at most three free parameters) can be
//! integrated directly. The results serve as a reference that the sampler
//! has to reproduce.

use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::mcmc::LogDensity;

pub const MIN_POINTS: usize = 11;
pub const MAX_FREE: usize = 3;
pub const MAX_CELLS: u128 = 100_000_000;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum OracleError {
    #[error("grid of {cells} cells exceeds the limit of {MAX_CELLS}")]
    TooLarge { cells: u128 },
    #[error("grid has {0} free parameters, at most {MAX_FREE} are supported")]
    TooManyFree(usize),
    #[error("axis `{name}`: {reason}")]
    BadAxis { name: String, reason: String },
    #[error("log posterior is -inf on every grid cell")]
    NoSupport,
    #[error("HDI mass must lie in (0, 1), got {0}")]
    BadMass(f64),
}

/// One free parameter: `n` equally spaced points from `lo` to `hi`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GridAxis {
    pub name: String,
    /// Position in the parameter vector.
    pub index: usize,
    pub lo: f64,
    pub hi: f64,
    pub n: usize,
}

impl GridAxis {
    pub fn new(name: impl Into<String>, index: usize, lo: f64, hi: f64, n: usize) -> Self {
        Self {
            name: name.into(),
            index,
            lo,
            hi,
            n,
        }
    }

    pub fn spacing(&self) -> f64 {
        (self.hi - self.lo) / (self.n - 1) as f64
    }

    pub fn point(&self, j: usize) -> f64 {
        if j + 1 == self.n {
            self.hi
        } else {
            self.lo + j as f64 * self.spacing()
        }
    }
}

/// Free axes plus a base point that supplies the fixed parameters.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GridSpec {
    pub axes: Vec<GridAxis>,
    pub base: Vec<f64>,
}

impl GridSpec {
    pub fn new(base: Vec<f64>, axes: Vec<GridAxis>) -> Self {
        Self { axes, base }
    }

    pub fn cells(&self) -> u128 {
        self.axes.iter().map(|a| a.n as u128).product()
    }

    pub fn validate(&self) -> Result<(), OracleError> {
        if self.axes.len() > MAX_FREE {
            return Err(OracleError::TooManyFree(self.axes.len()));
        }
        for a in &self.axes {
            let bad = |reason: String| OracleError::BadAxis {
                name: a.name.clone(),
                reason,
            };
            if a.n < MIN_POINTS {
                return Err(bad(format!("needs at least {MIN_POINTS} points, got {}", a.n)));
            }
            if !(a.lo.is_finite() && a.hi.is_finite() && a.lo < a.hi) {
                return Err(bad(format!("invalid range [{}, {}]", a.lo, a.hi)));
            }
            if a.index >= self.base.len() {
                return Err(bad(format!("index {} outside a {}-vector", a.index, self.base.len())));
            }
            if self.axes.iter().filter(|b| b.index == a.index).count() > 1 {
                return Err(bad("parameter appears on two axes".into()));
            }
        }
        let cells = self.cells();
        if cells > MAX_CELLS {
            return Err(OracleError::TooLarge { cells });
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GridMarginal {
    pub name: String,
    pub mean: f64,
    pub variance: f64,
    pub hdi_lo: f64,
    pub hdi_hi: f64,
    /// Grid spacing; the discretization error of the mean is of this order.
    pub spacing: f64,
    /// Normalized marginal mass at each grid point.
    pub mass: Vec<f64>,
}

impl GridMarginal {
    pub fn sd(&self) -> f64 {
        self.variance.sqrt()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GridPosterior {
    pub marginals: Vec<GridMarginal>,
    pub hdi_mass: f64,
    /// log of the sum of exp(log posterior) over all cells.
    pub log_sum: f64,
}

impl GridPosterior {
    pub fn get(&self, name: &str) -> Option<&GridMarginal> {
        self.marginals.iter().find(|m| m.name == name)
    }
}

struct Partial {
    max: f64,
    /// Per axis, per point: Σ exp(lp − max).
    sums: Vec<Vec<f64>>,
}

impl Partial {
    fn empty(axes: &[GridAxis]) -> Self {
        Self {
            max: f64::NEG_INFINITY,
            sums: axes.iter().map(|a| vec![0.0; a.n]).collect(),
        }
    }

    fn merge(mut self, other: Partial) -> Partial {
        if other.max == f64::NEG_INFINITY {
            return self;
        }
        if self.max == f64::NEG_INFINITY {
            return other;
        }
        let (hi, lo) = if self.max >= other.max { (self, other) } else { (other, self) };
        self = hi;
        let scale = (lo.max - self.max).exp();
        for (a, b) in self.sums.iter_mut().zip(&lo.sums) {
            for (x, y) in a.iter_mut().zip(b) {
                *x += y * scale;
            }
        }
        self
    }
}

/// Normalize exp(log posterior) over the grid and report per-parameter
/// marginal moments and grid HDIs of the requested mass.
pub fn grid_posterior<D: LogDensity + ?Sized>(model: &D, grid: &GridSpec, hdi_mass: f64) -> Result<GridPosterior, OracleError> {
    grid.validate()?;
    if !(hdi_mass > 0.0 && hdi_mass < 1.0) {
        return Err(OracleError::BadMass(hdi_mass));
    }
    let axes = &grid.axes;
    if axes.is_empty() {
        let lp = model.log_density(&grid.base);
        if lp == f64::NEG_INFINITY || lp.is_nan() {
            return Err(OracleError::NoSupport);
        }
        return Ok(GridPosterior {
            marginals: Vec::new(),
            hdi_mass,
            log_sum: lp,
        });
    }
    let rest: usize = axes[1..].iter().map(|a| a.n).product();

    // Slices along the first axis are independent; merging rescales each
    // slice to the common maximum so the result does not depend on order.
    let total = (0..axes[0].n)
        .into_par_iter()
        .map(|j0| {
            let mut x = grid.base.clone();
            x[axes[0].index] = axes[0].point(j0);
            let mut lps = Vec::with_capacity(rest);
            let mut idx = vec![0usize; axes.len()];
            idx[0] = j0;
            for flat in 0..rest {
                let mut r = flat;
                for d in (1..axes.len()).rev() {
                    idx[d] = r % axes[d].n;
                    r /= axes[d].n;
                    x[axes[d].index] = axes[d].point(idx[d]);
                }
                let lp = model.log_density(&x);
                lps.push(if lp.is_nan() { f64::NEG_INFINITY } else { lp });
            }
            let mut part = Partial::empty(axes);
            part.max = lps.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            if part.max == f64::NEG_INFINITY {
                return part;
            }
            for (flat, lp) in lps.iter().enumerate() {
                let w = (lp - part.max).exp();
                if w == 0.0 {
                    continue;
                }
                part.sums[0][j0] += w;
                let mut r = flat;
                for d in (1..axes.len()).rev() {
                    part.sums[d][r % axes[d].n] += w;
                    r /= axes[d].n;
                }
            }
            part
        })
        .collect::<Vec<_>>()
        .into_iter()
        .fold(Partial::empty(axes), Partial::merge);

    if total.max == f64::NEG_INFINITY {
        return Err(OracleError::NoSupport);
    }
    let z: f64 = total.sums[0].iter().sum();
    let marginals = axes
        .iter()
        .zip(&total.sums)
        .map(|(axis, sums)| {
            let mass: Vec<f64> = sums.iter().map(|s| s / z).collect();
            let mean: f64 = mass.iter().enumerate().map(|(j, m)| m * axis.point(j)).sum();
            let variance: f64 = mass.iter().enumerate().map(|(j, m)| m * (axis.point(j) - mean).powi(2)).sum();
            let (hdi_lo, hdi_hi) = grid_hdi(axis, &mass, hdi_mass);
            GridMarginal {
                name: axis.name.clone(),
                mean,
                variance,
                hdi_lo,
                hdi_hi,
                spacing: axis.spacing(),
                mass,
            }
        })
        .collect();
    Ok(GridPosterior {
        marginals,
        hdi_mass,
        log_sum: total.max + z.ln(),
    })
}

/// Range of the highest-mass grid points that together reach `mass`.
fn grid_hdi(axis: &GridAxis, masses: &[f64], mass: f64) -> (f64, f64) {
    let mut order: Vec<usize> = (0..masses.len()).collect();
    order.sort_by(|&a, &b| masses[b].total_cmp(&masses[a]).then(a.cmp(&b)));
    let mut acc = 0.0;
    let mut lo = usize::MAX;
    let mut hi = 0;
    for j in order {
        acc += masses[j];
        lo = lo.min(j);
        hi = hi.max(j);
        if acc >= mass {
            break;
        }
    }
    (axis.point(lo), axis.point(hi))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn normal_ln(x: f64, m: f64, s: f64) -> f64 {
        -0.5 * ((x - m) / s).powi(2) - s.ln()
    }

    #[test]
    fn conjugate_normal_mean() {
        let data = [1.2, 0.4, 2.2, 1.9, 0.8, 1.5, 1.1];
        let (sigma, m0, s0) = (1.0, 0.0, 2.0);
        let model = |x: &[f64]| normal_ln(x[0], m0, s0) + data.iter().map(|&d| normal_ln(d, x[0], sigma)).sum::<f64>();
        let grid = GridSpec::new(vec![0.0], vec![GridAxis::new("mu", 0, -3.0, 5.0, 2001)]);
        let post = grid_posterior(&model, &grid, 0.95).unwrap();
        let n = data.len() as f64;
        let prec = 1.0 / (s0 * s0) + n / (sigma * sigma);
        let mean = (m0 / (s0 * s0) + data.iter().sum::<f64>() / (sigma * sigma)) / prec;
        let m = post.get("mu").unwrap();
        assert!((m.mean - mean).abs() < 1e-3, "{} vs {mean}", m.mean);
        assert!((m.variance - 1.0 / prec).abs() < 1e-3);
        let half = 1.959964 / prec.sqrt();
        assert!((m.hdi_lo - (mean - half)).abs() < 2.0 * m.spacing);
        assert!((m.hdi_hi - (mean + half)).abs() < 2.0 * m.spacing);
    }

    #[test]
    fn symmetric_posterior_centered() {
        let model = |x: &[f64]| -(x[0] - 0.3).abs().powf(1.5);
        let grid = GridSpec::new(vec![0.0], vec![GridAxis::new("a", 0, -9.7, 10.3, 401)]);
        let m = &grid_posterior(&model, &grid, 0.9).unwrap().marginals[0];
        assert!((m.mean - 0.3).abs() <= m.spacing);
    }

    #[test]
    fn independent_axes_factorize() {
        let model = |x: &[f64]| normal_ln(x[0], 1.0, 0.5) + normal_ln(x[2], -2.0, 1.5);
        let grid = GridSpec::new(
            vec![0.0, 42.0, 0.0],
            vec![GridAxis::new("a", 0, -2.0, 4.0, 301), GridAxis::new("c", 2, -10.0, 6.0, 301)],
        );
        let post = grid_posterior(&model, &grid, 0.95).unwrap();
        assert!((post.get("a").unwrap().mean - 1.0).abs() < 1e-6);
        assert!((post.get("c").unwrap().mean + 2.0).abs() < 1e-4);
        assert!((post.get("c").unwrap().variance - 2.25).abs() < 1e-3);
        let total: f64 = post.get("a").unwrap().mass.iter().sum();
        assert!((total - 1.0).abs() < 1e-12);
    }

    #[test]
    fn refinement_converges() {
        let model = |x: &[f64]| normal_ln(x[0], 0.37, 0.8) - 0.3 * x[0].powi(4) / 10.0;
        let coarse = GridSpec::new(vec![0.0], vec![GridAxis::new("a", 0, -5.0, 5.0, 101)]);
        let fine = GridSpec::new(vec![0.0], vec![GridAxis::new("a", 0, -5.0, 5.0, 201)]);
        let a = grid_posterior(&model, &coarse, 0.95).unwrap().marginals[0].clone();
        let b = grid_posterior(&model, &fine, 0.95).unwrap().marginals[0].clone();
        assert!((a.mean - b.mean).abs() < a.spacing);
    }

    #[test]
    fn guards() {
        let model = |_: &[f64]| 0.0;
        let big = GridSpec::new(
            vec![0.0; 3],
            (0..3).map(|i| GridAxis::new(format!("p{i}"), i, 0.0, 1.0, 1000)).collect(),
        );
        assert!(matches!(grid_posterior(&model, &big, 0.95), Err(OracleError::TooLarge { .. })));
        let four = GridSpec::new(
            vec![0.0; 4],
            (0..4).map(|i| GridAxis::new(format!("p{i}"), i, 0.0, 1.0, 11)).collect(),
        );
        assert_eq!(grid_posterior(&model, &four, 0.95), Err(OracleError::TooManyFree(4)));
        let sparse = GridSpec::new(vec![0.0], vec![GridAxis::new("a", 0, 0.0, 1.0, 10)]);
        assert!(matches!(grid_posterior(&model, &sparse, 0.95), Err(OracleError::BadAxis { .. })));
        let dead = |_: &[f64]| f64::NEG_INFINITY;
        let ok = GridSpec::new(vec![0.0], vec![GridAxis::new("a", 0, 0.0, 1.0, 11)]);
        assert_eq!(grid_posterior(&dead, &ok, 0.95), Err(OracleError::NoSupport));
    }
}
