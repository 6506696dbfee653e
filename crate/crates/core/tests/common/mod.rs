//! Independent numerical oracles shared by the integration tests. Nothing
//! here touches the implementation paths under test: quadrature is adaptive
//! Simpson, special functions come from their asymptotic series.

#![allow(dead_code)]

/// Adaptive Simpson quadrature with Richardson correction.
pub fn adaptive_simpson<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, tol: f64) -> f64 {
    fn simpson(fa: f64, fm: f64, fb: f64, a: f64, b: f64) -> f64 {
        (b - a) / 6.0 * (fa + 4.0 * fm + fb)
    }
    #[allow(clippy::too_many_arguments)]
    fn recurse<F: Fn(f64) -> f64>(
        f: &F,
        a: f64,
        b: f64,
        fa: f64,
        fm: f64,
        fb: f64,
        whole: f64,
        tol: f64,
        depth: u32,
    ) -> f64 {
        let m = 0.5 * (a + b);
        let lm = 0.5 * (a + m);
        let rm = 0.5 * (m + b);
        let flm = f(lm);
        let frm = f(rm);
        let left = simpson(fa, flm, fm, a, m);
        let right = simpson(fm, frm, fb, m, b);
        let delta = left + right - whole;
        if depth == 0 || delta.abs() <= 15.0 * tol {
            left + right + delta / 15.0
        } else {
            recurse(f, a, m, fa, flm, fm, left, tol / 2.0, depth - 1)
                + recurse(f, m, b, fm, frm, fb, right, tol / 2.0, depth - 1)
        }
    }
    let fa = f(a);
    let fb = f(b);
    let m = 0.5 * (a + b);
    let fm = f(m);
    let whole = simpson(fa, fm, fb, a, b);
    recurse(f, a, b, fa, fm, fb, whole, tol, 48)
}

/// Trapezoid rule on a uniform grid, for normalization checks.
pub fn trapezoid<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, m: usize) -> f64 {
    let h = (b - a) / (m as f64 - 1.0);
    let mut acc = 0.5 * (f(a) + f(b));
    for i in 1..m - 1 {
        acc += f(a + i as f64 * h);
    }
    acc * h
}

/// log Gamma via the Stirling series with upward recurrence, independent of
/// any library implementation.
pub fn ln_gamma_series(x: f64) -> f64 {
    assert!(x > 0.0);
    let mut shift = 0.0;
    let mut z = x;
    while z < 16.0 {
        shift -= z.ln();
        z += 1.0;
    }
    let inv = 1.0 / z;
    let inv2 = inv * inv;
    let series = inv
        * (1.0 / 12.0 + inv2 * (-1.0 / 360.0 + inv2 * (1.0 / 1260.0 + inv2 * (-1.0 / 1680.0))));
    (z - 0.5) * z.ln() - z + 0.5 * (2.0 * std::f64::consts::PI).ln() + series + shift
}

/// Digamma via the asymptotic series with upward recurrence.
pub fn digamma_series(x: f64) -> f64 {
    assert!(x > 0.0);
    let mut shift = 0.0;
    let mut z = x;
    while z < 16.0 {
        shift -= 1.0 / z;
        z += 1.0;
    }
    let inv = 1.0 / z;
    let inv2 = inv * inv;
    let tail = inv2 * (1.0 / 12.0 - inv2 * (1.0 / 120.0 - inv2 * (1.0 / 252.0 - inv2 / 240.0)));
    z.ln() - 0.5 * inv - tail + shift
}

/// Closed-form KL between Gamma(shape a1, rate b1) and Gamma(a2, b2).
pub fn gamma_kl(a1: f64, b1: f64, a2: f64, b2: f64) -> f64 {
    (a1 - a2) * digamma_series(a1) - ln_gamma_series(a1) + ln_gamma_series(a2)
        + a2 * (b1 / b2).ln()
        + a1 * (b2 - b1) / b1
}

/// Gamma density with shape/rate parameters, direct formula.
pub fn gamma_pdf(shape: f64, rate: f64, x: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    (shape * rate.ln() - ln_gamma_series(shape) + (shape - 1.0) * x.ln() - rate * x).exp()
}

/// Gaussian density, direct formula.
pub fn gaussian_pdf(mean: f64, variance: f64, x: f64) -> f64 {
    let d = x - mean;
    (-d * d / (2.0 * variance)).exp() / (2.0 * std::f64::consts::PI * variance).sqrt()
}

#[cfg(test)]
mod self_checks {
    use super::*;

    #[test]
    fn ln_gamma_series_matches_factorials() {
        assert!((ln_gamma_series(9.0) - 40320.0f64.ln()).abs() < 1e-12);
        assert!((ln_gamma_series(1.0)).abs() < 1e-12);
        assert!((ln_gamma_series(0.5) - 0.5723649429247001).abs() < 1e-12);
    }

    #[test]
    fn simpson_integrates_polynomial_exactly() {
        let got = adaptive_simpson(&|x: f64| x * x * x - 2.0 * x + 1.0, 0.0, 2.0, 1e-12);
        assert!((got - 2.0).abs() < 1e-10);
    }

    #[test]
    fn digamma_matches_harmonic_numbers() {
        // psi(9) = H_8 - gamma
        let h8: f64 = (1..=8).map(|k| 1.0 / k as f64).sum();
        let gamma_e = 0.5772156649015329;
        assert!((digamma_series(9.0) - (h8 - gamma_e)).abs() < 1e-12);
    }
}
