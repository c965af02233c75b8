//! Numerical checks of the t density and CDF against quadrature and closed forms.

use latent_t::statfn::{t_cdf, t_pdf, TDistParams};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Adaptive Simpson quadrature.
fn simpson<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, tol: f64) -> f64 {
    fn rec<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, fa: f64, fm: f64, fb: f64, whole: f64, tol: f64, depth: u32) -> f64 {
        let m = 0.5 * (a + b);
        let (lm, rm) = (0.5 * (a + m), 0.5 * (m + b));
        let (flm, frm) = (f(lm), f(rm));
        let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
        let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
        let delta = left + right - whole;
        if depth == 0 || delta.abs() <= 15.0 * tol {
            return left + right + delta / 15.0;
        }
        rec(f, a, m, fa, flm, fm, left, tol / 2.0, depth - 1) + rec(f, m, b, fm, frm, fb, right, tol / 2.0, depth - 1)
    }
    let m = 0.5 * (a + b);
    let (fa, fm, fb) = (f(a), f(m), f(b));
    rec(f, a, b, fa, fm, fb, (b - a) / 6.0 * (fa + 4.0 * fm + fb), tol, 50)
}

/// Quadrature of the density over [μ − 50τ, μ + 50τ] plus the two tails
/// from the CDF adds up to one. For ν = 1 the tails also come from the
/// closed-form Cauchy CDF.
#[test]
fn density_integrates_to_one() {
    for &nu in &[0.5, 1.0, 4.0, 30.0, 1000.0] {
        let p = TDistParams::new(1.3, 0.7, nu).unwrap();
        let (lo, hi) = (p.mu - 50.0 * p.tau, p.mu + 50.0 * p.tau);
        let f = |x: f64| t_pdf(x, &p).unwrap();
        // split at the peak so the sharp centre is resolved on both sides
        let inner = simpson(&f, lo, p.mu, 1e-12) + simpson(&f, p.mu, hi, 1e-12);
        let tails = t_cdf(lo, &p).unwrap() + 1.0 - t_cdf(hi, &p).unwrap();
        assert!((inner + tails - 1.0).abs() < 1e-8, "nu={nu}: {inner} + {tails}");
        if nu == 1.0 {
            let cauchy_tails = 1.0 - 2.0 * (50.0f64).atan() / std::f64::consts::PI;
            assert!((inner + cauchy_tails - 1.0).abs() < 1e-8);
        }
        if nu >= 30.0 {
            assert!((inner - 1.0).abs() < 1e-8 + tails);
        }
    }
}

#[test]
fn cdf_derivative_matches_density() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..100 {
        let p = TDistParams::new(rng.random_range(-5.0..5.0), rng.random_range(0.2..4.0), rng.random_range(0.5..60.0)).unwrap();
        let x = p.mu + p.tau * rng.random_range(-4.0..4.0);
        let h = 1e-3 * p.tau;
        // five-point stencil, truncation error O(h^4)
        let c = |u: f64| t_cdf(u, &p).unwrap();
        let d = (-c(x + 2.0 * h) + 8.0 * c(x + h) - 8.0 * c(x - h) + c(x - 2.0 * h)) / (12.0 * h);
        let f = t_pdf(x, &p).unwrap();
        assert!(((d - f) / f).abs() < 1e-6, "{p:?} at {x}: {d} vs {f}");
    }
}

#[test]
fn scale_coverage() {
    let wide = TDistParams::new(2.0, 3.0, 1e6).unwrap();
    let cover = t_cdf(5.0, &wide).unwrap() - t_cdf(-1.0, &wide).unwrap();
    assert!((cover - 0.682_689_492).abs() < 1e-4);
    let cauchy = TDistParams::new(2.0, 3.0, 1.0).unwrap();
    let cover = t_cdf(5.0, &cauchy).unwrap() - t_cdf(-1.0, &cauchy).unwrap();
    assert!((cover - 0.5).abs() < 1e-9);
}

proptest! {
    #[test]
    fn cdf_is_monotone(mu in -10.0f64..10.0, tau in 0.01f64..10.0, nu in 0.1f64..1e4, a in -50.0f64..50.0, b in -50.0f64..50.0) {
        let p = TDistParams::new(mu, tau, nu).unwrap();
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        let (clo, chi) = (t_cdf(lo, &p).unwrap(), t_cdf(hi, &p).unwrap());
        prop_assert!(clo <= chi, "{} > {}", clo, chi);
        prop_assert!((0.0..=1.0).contains(&clo) && (0.0..=1.0).contains(&chi));
    }

    #[test]
    fn cdf_is_symmetric(mu in -10.0f64..10.0, tau in 0.01f64..10.0, nu in 0.1f64..1e4, d in 0.0f64..30.0) {
        let p = TDistParams::new(mu, tau, nu).unwrap();
        let s = t_cdf(mu + d, &p).unwrap() + t_cdf(mu - d, &p).unwrap();
        prop_assert!((s - 1.0).abs() < 1e-12);
    }
}
