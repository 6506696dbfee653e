//! Distribution values checked against independent series and quadrature
//! oracles, plus property tests of the core invariants.

mod common;

use common::{ln_gamma_series, trapezoid};
use deconv_core::dist::{NoiseModel, PsiB, ScalarDist};
use proptest::prelude::*;

#[test]
fn gamma_log_pdf_matches_series_oracle() {
    // Frozen: log Gamma(9,1) density at 9 from 40-digit evaluation.
    let d = ScalarDist::gamma(9.0, 1.0).unwrap();
    let frozen = -2.026_806_284_055_495;
    assert!((d.log_pdf(9.0) - frozen).abs() < 1e-12);
    let series = 8.0 * 9.0f64.ln() - ln_gamma_series(9.0) - 9.0;
    assert!((d.log_pdf(9.0) - series).abs() < 1e-12);
}

#[test]
fn log_space_moments_match_quadrature_oracle() {
    // Frozen: E[log a] = 2.2975074513162802, sd[log a] = 0.10129844154860267
    // for a ~ N(10, 1), from 40-digit quadrature. The sampled estimates use
    // 10000 draws, so they land within a few times 1e-3.
    let noise = NoiseModel::analytic(ScalarDist::gaussian(10.0, 1.0).unwrap()).unwrap();
    let log_noise = noise.log_space().unwrap();
    assert!(
        (log_noise.mean() - 2.297_507_451_316_280_2).abs() < 0.01,
        "sampled mean {}",
        log_noise.mean()
    );
    assert!(
        (log_noise.std() - 0.101_298_441_548_602_67).abs() < 0.01,
        "sampled sd {}",
        log_noise.std()
    );
}

#[test]
fn densities_normalize_on_covering_grids() {
    let cases: Vec<(ScalarDist, f64, f64)> = vec![
        {
            let d = ScalarDist::gaussian(3.0, 2.0).unwrap();
            let s = d.variance().sqrt();
            (d.clone(), 3.0 - 8.0 * s, 3.0 + 8.0 * s)
        },
        {
            let d = ScalarDist::gamma(9.0, 1.0).unwrap();
            let s = d.variance().sqrt();
            (d.clone(), 0.0, d.mean() + 12.0 * s)
        },
        {
            let d = ScalarDist::gamma(1.0, 2.0).unwrap();
            let s = d.variance().sqrt();
            (d.clone(), 0.0, d.mean() + 12.0 * s)
        },
        {
            let d = ScalarDist::log_gaussian(0.0, 0.25).unwrap();
            let s = d.variance().sqrt();
            (d.clone(), 0.0, d.mean() + 8.0 * s)
        },
    ];
    for (d, lo, hi) in cases {
        let mass = trapezoid(&|x| d.log_pdf(x).exp(), lo, hi, 20_001);
        assert!(
            (0.999..=1.001).contains(&mass),
            "{d:?} integrates to {mass} on [{lo}, {hi}]"
        );
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn mixture_lse_matches_direct_sum(
        params in proptest::collection::vec((-6.0..6.0f64, 0.05..4.0f64, 0.01..1.0f64), 1..20),
        b in -8.0..8.0f64,
    ) {
        let total: f64 = params.iter().map(|p| p.2).sum();
        let means: Vec<f64> = params.iter().map(|p| p.0).collect();
        let vars: Vec<f64> = params.iter().map(|p| p.1).collect();
        let mut weights: Vec<f64> = params.iter().map(|p| p.2 / total).collect();
        let resid = 1.0 - weights.iter().sum::<f64>();
        weights[0] += resid;
        let psi = PsiB::new(means.clone(), vars.clone(), weights.clone()).unwrap();
        let direct: f64 = means
            .iter()
            .zip(&vars)
            .zip(&weights)
            .map(|((&m, &v), &w)| {
                w * (1.0 / (2.0 * std::f64::consts::PI * v).sqrt())
                    * (-(b - m) * (b - m) / (2.0 * v)).exp()
            })
            .sum();
        prop_assume!(direct > 1e-290);
        let got = psi.mixture_log_pdf(b);
        prop_assert!((got - direct.ln()).abs() < 1e-12);
    }

    #[test]
    fn grid_spacing_is_uniform(
        lo in -100.0..100.0f64,
        span in 1e-3..200.0f64,
        m in 2usize..3000,
    ) {
        let grid = deconv_core::quad::build_grid(lo, lo + span, m).unwrap();
        let d = grid.spacing();
        // Uniform up to rounding: measuring the gap between two nearby grid
        // values loses ulp(|value|) to cancellation, so allow that on top of
        // the 1e-12 relative band.
        let tol = 1e-12 * d + 4.0 * f64::EPSILON * lo.abs().max((lo + span).abs());
        for w in grid.points().windows(2) {
            prop_assert!(((w[1] - w[0]) - d).abs() <= tol);
        }
        prop_assert_eq!(grid.points().len(), m);
        prop_assert_eq!(grid.points()[0], lo);
        prop_assert_eq!(*grid.points().last().unwrap(), lo + span);
    }
}
