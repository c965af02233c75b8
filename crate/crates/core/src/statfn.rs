//! Special functions and the handful of distributions both models need:
//! gamma, regularized incomplete beta, location-scale Student-t, and the
//! normal / uniform / exponential priors.
//!
//! Log-space functions are what the samplers call. The linear-space
//! versions exist for tests and for callers that want densities directly.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Smallest normality parameter the models will sample.
///
/// Below this the gamma ratio in the t density loses precision quickly.
pub const NU_FLOOR: f64 = 0.1;

const LN_PI: f64 = 1.144_729_885_849_400_2;
const LN_SQRT_2PI: f64 = 0.918_938_533_204_672_8;

const BETA_CF_MAX_ITER: usize = 20_000;
const BETA_CF_EPS: f64 = 1e-16;
const BETA_CF_TINY: f64 = 1e-300;

// Lanczos approximation, g = 7, n = 9.
const LANCZOS_G: f64 = 7.0;
const LANCZOS_COEF: [f64; 9] = [
    0.999_999_999_999_809_93,
    676.520_368_121_885_1,
    -1_259.139_216_722_402_8,
    771.323_428_777_653_13,
    -176.615_029_162_140_59,
    12.507_343_278_686_905,
    -0.138_571_095_265_720_12,
    9.984_369_578_019_571_6e-6,
    1.505_632_735_149_311_6e-7,
];

#[derive(Debug, Error, Clone, PartialEq)]
pub enum StatError {
    #[error("{name} is outside its domain: {value} ({reason})")]
    Domain {
        name: &'static str,
        value: f64,
        reason: &'static str,
    },
    #[error("continued fraction did not converge for a={a}, b={b}, x={x}")]
    NoConvergence { a: f64, b: f64, x: f64 },
}

fn domain(name: &'static str, value: f64, reason: &'static str) -> StatError {
    StatError::Domain {
        name,
        value,
        reason,
    }
}

/// Γ(w) for real w > 0.
///
/// Overflows to `+inf` above w ≈ 171.6; use [`ln_gamma`] there.
pub fn gamma_fn(w: f64) -> Result<f64, StatError> {
    check_gamma_arg(w)?;
    Ok(gamma_unchecked(w))
}

/// ln Γ(w) for real w > 0.
pub fn ln_gamma(w: f64) -> Result<f64, StatError> {
    check_gamma_arg(w)?;
    Ok(ln_gamma_unchecked(w))
}

fn check_gamma_arg(w: f64) -> Result<(), StatError> {
    if !w.is_finite() {
        return Err(domain("w", w, "must be finite"));
    }
    if w <= 0.0 {
        return Err(domain("w", w, "must be positive"));
    }
    Ok(())
}

fn lanczos_sum(z: f64) -> f64 {
    // z is the shifted argument (w - 1)
    let mut acc = LANCZOS_COEF[0];
    for (i, c) in LANCZOS_COEF.iter().enumerate().skip(1) {
        acc += c / (z + i as f64);
    }
    acc
}

fn gamma_unchecked(w: f64) -> f64 {
    if w < 0.5 {
        // reflection: Γ(w)Γ(1-w) = π / sin(πw)
        return PI / ((PI * w).sin() * gamma_unchecked(1.0 - w));
    }
    if w == w.floor() && w <= 21.0 {
        // exact factorial for small integers
        return (1..w as u64).fold(1.0, |acc, k| acc * k as f64);
    }
    let z = w - 1.0;
    let t = z + LANCZOS_G + 0.5;
    (2.0 * PI).sqrt() * t.powf(z + 0.5) * (-t).exp() * lanczos_sum(z)
}

pub(crate) fn ln_gamma_unchecked(w: f64) -> f64 {
    if w < 0.5 {
        return LN_PI - (PI * w).sin().ln() - ln_gamma_unchecked(1.0 - w);
    }
    let z = w - 1.0;
    let t = z + LANCZOS_G + 0.5;
    LN_SQRT_2PI + (z + 0.5) * t.ln() - t + lanczos_sum(z).ln()
}

/// ln B(a, b).
pub fn ln_beta(a: f64, b: f64) -> Result<f64, StatError> {
    check_gamma_arg(a)?;
    check_gamma_arg(b)?;
    Ok(ln_beta_unchecked(a, b))
}

fn ln_beta_unchecked(a: f64, b: f64) -> f64 {
    ln_gamma_unchecked(a) + ln_gamma_unchecked(b) - ln_gamma_unchecked(a + b)
}

/// Regularized incomplete beta function I_x(a, b).
pub fn beta_reg(a: f64, b: f64, x: f64) -> Result<f64, StatError> {
    check_gamma_arg(a)?;
    check_gamma_arg(b)?;
    if !(0.0..=1.0).contains(&x) {
        return Err(domain("x", x, "must lie in [0, 1]"));
    }
    let (value, converged) = beta_reg_split(a, b, x, 1.0 - x, ln_beta_unchecked(a, b));
    if converged {
        Ok(value)
    } else {
        Err(StatError::NoConvergence { a, b, x })
    }
}

/// I_x(a, b) taking both `x` and `1 - x` so callers can pass an accurately
/// computed complement. Returns the value and whether the fraction converged.
fn beta_reg_split(a: f64, b: f64, x: f64, one_minus_x: f64, ln_b: f64) -> (f64, bool) {
    if x <= 0.0 {
        return (0.0, true);
    }
    if one_minus_x <= 0.0 {
        return (1.0, true);
    }
    if x > (a + 1.0) / (a + b + 2.0) {
        let (v, ok) = beta_cf(b, a, one_minus_x, x, ln_b);
        (1.0 - v, ok)
    } else {
        beta_cf(a, b, x, one_minus_x, ln_b)
    }
}

/// Modified Lentz evaluation of the incomplete beta continued fraction.
fn beta_cf(a: f64, b: f64, x: f64, one_minus_x: f64, ln_b: f64) -> (f64, bool) {
    let ln_prefix = a * x.ln() + b * one_minus_x.ln() - ln_b;
    let prefix = ln_prefix.exp() / a;

    let qab = a + b;
    let qap = a + 1.0;
    let qam = a - 1.0;

    let mut c = 1.0;
    let mut d = 1.0 - qab * x / qap;
    if d.abs() < BETA_CF_TINY {
        d = BETA_CF_TINY;
    }
    d = 1.0 / d;
    let mut f = d;

    for m in 1..=BETA_CF_MAX_ITER {
        let m = m as f64;
        let m2 = 2.0 * m;

        let even = m * (b - m) * x / ((qam + m2) * (a + m2));
        d = 1.0 + even * d;
        if d.abs() < BETA_CF_TINY {
            d = BETA_CF_TINY;
        }
        c = 1.0 + even / c;
        if c.abs() < BETA_CF_TINY {
            c = BETA_CF_TINY;
        }
        d = 1.0 / d;
        f *= d * c;

        let odd = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
        d = 1.0 + odd * d;
        if d.abs() < BETA_CF_TINY {
            d = BETA_CF_TINY;
        }
        c = 1.0 + odd / c;
        if c.abs() < BETA_CF_TINY {
            c = BETA_CF_TINY;
        }
        d = 1.0 / d;
        let delta = d * c;
        f *= delta;

        if (delta - 1.0).abs() < BETA_CF_EPS {
            return (prefix * f, true);
        }
    }
    (prefix * f, false)
}

/// Location μ, scale τ and normality ν of a Student-t distribution.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TDistParams {
    pub mu: f64,
    pub tau: f64,
    pub nu: f64,
}

impl TDistParams {
    pub fn new(mu: f64, tau: f64, nu: f64) -> Result<Self, StatError> {
        let p = Self { mu, tau, nu };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<(), StatError> {
        if !self.mu.is_finite() {
            return Err(domain("mu", self.mu, "must be finite"));
        }
        if !(self.tau.is_finite() && self.tau > 0.0) {
            return Err(domain("tau", self.tau, "must be finite and positive"));
        }
        // nu = +inf is allowed by the math but not by the gamma ratio
        if !(self.nu.is_finite() && self.nu > 0.0) {
            return Err(domain("nu", self.nu, "must be finite and positive"));
        }
        Ok(())
    }
}

/// Student-t with its normalizing constants precomputed.
///
/// Build one per parameter point and evaluate many densities or CDF values
/// against it; the constructor is where the gamma functions are paid for.
#[derive(Debug, Clone, Copy)]
pub struct StudentT {
    params: TDistParams,
    ln_norm: f64,
    ln_beta_half: f64,
}

impl StudentT {
    pub fn new(params: TDistParams) -> Result<Self, StatError> {
        params.validate()?;
        Ok(Self::new_unchecked(params))
    }

    pub(crate) fn new_unchecked(params: TDistParams) -> Self {
        let TDistParams { tau, nu, .. } = params;
        let ln_ratio = ln_gamma_unchecked(0.5 * (nu + 1.0)) - ln_gamma_unchecked(0.5 * nu);
        let ln_norm = ln_ratio - 0.5 * (nu.ln() + LN_PI) - tau.ln();
        Self {
            params,
            ln_norm,
            ln_beta_half: ln_beta_unchecked(0.5 * nu, 0.5),
        }
    }

    pub fn params(&self) -> TDistParams {
        self.params
    }

    pub fn ln_pdf(&self, x: f64) -> f64 {
        let TDistParams { mu, tau, nu } = self.params;
        let z = (x - mu) / tau;
        self.ln_norm - 0.5 * (nu + 1.0) * (z * z / nu).ln_1p()
    }

    pub fn pdf(&self, x: f64) -> f64 {
        self.ln_pdf(x).exp()
    }

    /// Ψ(u). Infinite arguments return the exact limits 0 and 1.
    pub fn cdf(&self, u: f64) -> f64 {
        if u == f64::NEG_INFINITY {
            return 0.0;
        }
        if u == f64::INFINITY {
            return 1.0;
        }
        let TDistParams { mu, tau, nu } = self.params;
        let t = (u - mu) / tau;
        if t == 0.0 {
            return 0.5;
        }
        let t2 = t * t;
        // x = ν/(ν+t²), 1-x = t²/(ν+t²), both formed without cancellation
        let denom = nu + t2;
        let (tail, _) = beta_reg_split(0.5 * nu, 0.5, nu / denom, t2 / denom, self.ln_beta_half);
        let tail = 0.5 * tail;
        if t < 0.0 {
            tail
        } else {
            1.0 - tail
        }
    }
}

/// The t density f_{μ,τ,ν}(x) written as the gamma-ratio prefactor times
/// the kernel `[1 + (x-μ)²/(τ²ν)]^(-(ν+1)/2)`.
pub fn t_pdf(x: f64, p: &TDistParams) -> Result<f64, StatError> {
    p.validate()?;
    let TDistParams { mu, tau, nu } = *p;
    // ratio taken in log space; Γ alone overflows for ν above ~340
    let ratio = (ln_gamma_unchecked(0.5 * (nu + 1.0)) - ln_gamma_unchecked(0.5 * nu)).exp();
    let prefactor = ratio * (1.0 / (tau * tau * nu * PI)).sqrt();
    let kernel = (1.0 + (x - mu).powi(2) / (tau * tau * nu)).powf(-0.5 * (nu + 1.0));
    Ok(prefactor * kernel)
}

pub fn t_ln_pdf(x: f64, p: &TDistParams) -> Result<f64, StatError> {
    Ok(StudentT::new(*p)?.ln_pdf(x))
}

/// Cumulative t function Ψ_{μ,τ,ν}(u).
pub fn t_cdf(u: f64, p: &TDistParams) -> Result<f64, StatError> {
    if u.is_nan() {
        return Err(domain("u", u, "must not be NaN"));
    }
    Ok(StudentT::new(*p)?.cdf(u))
}

/// Prior families used by the models. The exponential is parameterized by
/// its mean.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Prior {
    Normal { mean: f64, sd: f64 },
    Uniform { lo: f64, hi: f64 },
    Exponential { mean: f64 },
}

impl Prior {
    pub fn normal(mean: f64, sd: f64) -> Result<Self, StatError> {
        if !mean.is_finite() {
            return Err(domain("mean", mean, "must be finite"));
        }
        if !(sd.is_finite() && sd > 0.0) {
            return Err(domain("sd", sd, "must be finite and positive"));
        }
        Ok(Prior::Normal { mean, sd })
    }

    pub fn uniform(lo: f64, hi: f64) -> Result<Self, StatError> {
        if !(lo.is_finite() && hi.is_finite()) {
            return Err(domain("lo/hi", if lo.is_finite() { hi } else { lo }, "must be finite"));
        }
        if lo >= hi {
            return Err(domain("lo", lo, "must be below hi"));
        }
        Ok(Prior::Uniform { lo, hi })
    }

    pub fn exponential(mean: f64) -> Result<Self, StatError> {
        if !(mean.is_finite() && mean > 0.0) {
            return Err(domain("mean", mean, "must be finite and positive"));
        }
        Ok(Prior::Exponential { mean })
    }

    /// Re-check hyperparameters, e.g. after deserializing.
    pub fn validate(&self) -> Result<(), StatError> {
        match *self {
            Prior::Normal { mean, sd } => Prior::normal(mean, sd).map(|_| ()),
            Prior::Uniform { lo, hi } => Prior::uniform(lo, hi).map(|_| ()),
            Prior::Exponential { mean } => Prior::exponential(mean).map(|_| ()),
        }
    }

    pub fn ln_density(&self, x: f64) -> f64 {
        match *self {
            Prior::Normal { mean, sd } => {
                let z = (x - mean) / sd;
                -0.5 * z * z - sd.ln() - LN_SQRT_2PI
            }
            Prior::Uniform { lo, hi } => {
                if (lo..=hi).contains(&x) {
                    -(hi - lo).ln()
                } else {
                    f64::NEG_INFINITY
                }
            }
            Prior::Exponential { mean } => {
                if x >= 0.0 {
                    -mean.ln() - x / mean
                } else {
                    f64::NEG_INFINITY
                }
            }
        }
    }

    pub fn density(&self, x: f64) -> f64 {
        self.ln_density(x).exp()
    }

    /// Support of the density as a closed interval.
    pub fn support(&self) -> (f64, f64) {
        match *self {
            Prior::Normal { .. } => (f64::NEG_INFINITY, f64::INFINITY),
            Prior::Uniform { lo, hi } => (lo, hi),
            Prior::Exponential { .. } => (0.0, f64::INFINITY),
        }
    }
}

/// Which prior family to evaluate in [`prior_density`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PriorKind {
    Normal,
    Uniform,
    Exponential,
}

/// Density of a prior given by kind and raw hyperparameters:
/// `(mean, sd)` for normal, `(lo, hi)` for uniform, `(mean)` for exponential.
pub fn prior_density(kind: PriorKind, hyper: &[f64], x: f64) -> Result<f64, StatError> {
    let need = match kind {
        PriorKind::Exponential => 1,
        _ => 2,
    };
    if hyper.len() != need {
        return Err(domain("hyperparameter count", hyper.len() as f64, "wrong arity"));
    }
    let prior = match kind {
        PriorKind::Normal => Prior::normal(hyper[0], hyper[1])?,
        PriorKind::Uniform => Prior::uniform(hyper[0], hyper[1])?,
        PriorKind::Exponential => Prior::exponential(hyper[0])?,
    };
    Ok(prior.density(x))
}

/// Exponential prior on ν with an optional shift and a hard floor.
///
/// Density is exponential(mean - shift) evaluated at ν - shift, so the prior
/// mean of ν is `mean` either way; support is ν > max(shift, floor).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NuPrior {
    pub mean: f64,
    pub shift: f64,
    pub floor: f64,
}

impl Default for NuPrior {
    fn default() -> Self {
        Self {
            mean: 30.0,
            shift: 0.0,
            floor: NU_FLOOR,
        }
    }
}

impl NuPrior {
    pub fn new(mean: f64, shift: f64, floor: f64) -> Result<Self, StatError> {
        let p = Self { mean, shift, floor };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<(), StatError> {
        if !(self.shift.is_finite() && self.shift >= 0.0) {
            return Err(domain("nu shift", self.shift, "must be finite and non-negative"));
        }
        if !(self.floor.is_finite() && self.floor > 0.0) {
            return Err(domain("nu floor", self.floor, "must be finite and positive"));
        }
        if !(self.mean.is_finite() && self.mean > self.shift) {
            return Err(domain("nu mean", self.mean, "must be finite and above the shift"));
        }
        Ok(())
    }

    pub fn lower_bound(&self) -> f64 {
        self.shift.max(self.floor)
    }

    pub fn ln_density(&self, nu: f64) -> f64 {
        if !(nu > self.lower_bound()) || !nu.is_finite() {
            return f64::NEG_INFINITY;
        }
        let m = self.mean - self.shift;
        -m.ln() - (nu - self.shift) / m
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn cauchy() -> TDistParams {
        TDistParams::new(0.0, 1.0, 1.0).unwrap()
    }

    #[test]
    fn gamma_at_integers_and_half() {
        assert_eq!(gamma_fn(5.0).unwrap(), 24.0);
        assert_eq!(gamma_fn(1.0).unwrap(), 1.0);
        assert_relative_eq!(gamma_fn(0.5).unwrap(), PI.sqrt(), max_relative = 1e-13);
        // Γ(3/2) = √π / 2
        assert_relative_eq!(gamma_fn(1.5).unwrap(), 0.5 * PI.sqrt(), max_relative = 1e-13);
    }

    #[test]
    fn ln_gamma_matches_factorials() {
        let mut ln_fact = 0.0;
        for n in 1..60u32 {
            // ln Γ(n+1) = ln n!
            ln_fact += (n as f64).ln();
            assert_relative_eq!(ln_gamma(n as f64 + 1.0).unwrap(), ln_fact, max_relative = 1e-13);
        }
    }

    #[test]
    fn gamma_rejects_bad_input() {
        assert!(gamma_fn(0.0).is_err());
        assert!(gamma_fn(-2.5).is_err());
        assert!(gamma_fn(f64::NAN).is_err());
        assert!(ln_gamma(f64::INFINITY).is_err());
    }

    #[test]
    fn beta_reg_edges() {
        assert_eq!(beta_reg(2.0, 3.0, 0.0).unwrap(), 0.0);
        assert_eq!(beta_reg(2.0, 3.0, 1.0).unwrap(), 1.0);
        assert_relative_eq!(beta_reg(1.0, 1.0, 0.3).unwrap(), 0.3, max_relative = 1e-13);
        // I_x(a, 1) = x^a
        assert_relative_eq!(beta_reg(2.5, 1.0, 0.4).unwrap(), 0.4f64.powf(2.5), max_relative = 1e-12);
        assert!(beta_reg(1.0, 1.0, 1.5).is_err());
    }

    #[test]
    fn cauchy_density_and_cdf() {
        let p = cauchy();
        assert_relative_eq!(t_pdf(0.0, &p).unwrap(), 1.0 / PI, max_relative = 1e-13);
        assert_relative_eq!(t_cdf(1.0, &p).unwrap(), 0.75, epsilon = 1e-12);
        assert_eq!(t_cdf(0.0, &p).unwrap(), 0.5);
    }

    #[test]
    fn cdf_infinite_limits_are_exact() {
        let p = TDistParams::new(3.0, 0.7, 4.0).unwrap();
        assert_eq!(t_cdf(f64::NEG_INFINITY, &p).unwrap(), 0.0);
        assert_eq!(t_cdf(f64::INFINITY, &p).unwrap(), 1.0);
        assert!(t_cdf(f64::NAN, &p).is_err());
    }

    #[test]
    fn density_peaks_at_location() {
        let p = TDistParams::new(2.0, 1.5, 3.0).unwrap();
        let peak = t_pdf(2.0, &p).unwrap();
        for dx in [-1.0, -0.1, -1e-3, 1e-3, 0.1, 1.0] {
            assert!(t_pdf(2.0 + dx, &p).unwrap() < peak);
        }
    }

    #[test]
    fn large_nu_matches_normal() {
        let p = TDistParams::new(0.0, 1.0, 1e6).unwrap();
        let normal = (-4.5f64).exp() / (2.0 * PI).sqrt();
        assert!((t_pdf(3.0, &p).unwrap() - normal).abs() < 1e-5);
    }

    #[test]
    fn linear_and_log_pdf_agree() {
        for &(mu, tau, nu, x) in &[(0.0, 1.0, 1.0, 0.3), (5.0, 2.0, 10.0, 9.0), (-1.0, 0.2, 0.5, -3.0)] {
            let p = TDistParams::new(mu, tau, nu).unwrap();
            assert_relative_eq!(
                t_ln_pdf(x, &p).unwrap(),
                t_pdf(x, &p).unwrap().ln(),
                max_relative = 1e-12
            );
        }
    }

    #[test]
    fn invalid_params_are_domain_errors() {
        assert!(TDistParams::new(0.0, 0.0, 1.0).is_err());
        assert!(TDistParams::new(0.0, 1.0, -1.0).is_err());
        let bad = TDistParams {
            mu: 0.0,
            tau: -1.0,
            nu: 2.0,
        };
        assert!(t_pdf(0.0, &bad).is_err());
        assert!(t_cdf(0.0, &bad).is_err());
    }

    #[test]
    fn scale_coverage_from_location() {
        // τ covers 50% of the Cauchy and ~68.27% of the normal limit
        let c = cauchy();
        let mass = t_cdf(1.0, &c).unwrap() - t_cdf(-1.0, &c).unwrap();
        assert!((mass - 0.5).abs() < 1e-9);
        let n = TDistParams::new(0.0, 1.0, 1e6).unwrap();
        let mass = t_cdf(1.0, &n).unwrap() - t_cdf(-1.0, &n).unwrap();
        assert!((mass - 0.682_689_492).abs() < 1e-4);
    }

    #[test]
    fn prior_densities() {
        assert_eq!(prior_density(PriorKind::Uniform, &[0.0, 2.0], 3.0).unwrap(), 0.0);
        assert_relative_eq!(prior_density(PriorKind::Uniform, &[0.0, 2.0], 1.0).unwrap(), 0.5);
        assert_relative_eq!(
            prior_density(PriorKind::Exponential, &[30.0], 0.0).unwrap(),
            1.0 / 30.0,
            max_relative = 1e-14
        );
        assert_relative_eq!(
            prior_density(PriorKind::Normal, &[0.0, 1.0], 0.0).unwrap(),
            1.0 / (2.0 * PI).sqrt(),
            max_relative = 1e-14
        );
        assert!(prior_density(PriorKind::Normal, &[0.0, 0.0], 0.0).is_err());
        assert!(prior_density(PriorKind::Uniform, &[2.0, 1.0], 0.0).is_err());
        assert!(prior_density(PriorKind::Exponential, &[-1.0], 0.0).is_err());
        assert!(prior_density(PriorKind::Exponential, &[1.0, 2.0], 0.0).is_err());
    }

    #[test]
    fn nu_prior_shift_and_floor() {
        let plain = NuPrior::default();
        assert_eq!(plain.ln_density(0.05), f64::NEG_INFINITY);
        assert_relative_eq!(plain.ln_density(1.0), -(30f64.ln()) - 1.0 / 30.0);
        let shifted = NuPrior::new(30.0, 1.0, NU_FLOOR).unwrap();
        assert_eq!(shifted.ln_density(0.9), f64::NEG_INFINITY);
        assert_relative_eq!(shifted.ln_density(2.0), -(29f64.ln()) - 1.0 / 29.0);
        assert!(NuPrior::new(1.0, 1.0, 0.1).is_err());
    }
}
