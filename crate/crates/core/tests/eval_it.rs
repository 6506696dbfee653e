//! Benchmark plumbing and KL closed-form checks.

mod common;

use common::gamma_kl;
use deconv_core::bayes_gmm::GmmConfig;
use deconv_core::bayes_known::{McmcConfig, ThetaB};
use deconv_core::dist::{NoiseModel, ScalarDist};
use deconv_core::eval::{
    benchmark, gamma_eval_grid, kl_to_ground_truth, BenchmarkSpec, Method, MethodConfigs,
};
use deconv_core::flow::FlowHyper;
use deconv_core::quad::DataModel;
use deconv_core::train::TrainConfig;

fn tiny_configs() -> MethodConfigs {
    MethodConfigs {
        mcmc: McmcConfig { samples: 60, ..Default::default() },
        gmm: GmmConfig {
            components: 8,
            burn_in: 10,
            samples: 40,
            init_steps: 40,
            ..Default::default()
        },
        nf: TrainConfig {
            steps: 12,
            m: 300,
            hyper: FlowHyper { layers: 2, bins: 4, tail_bound: 4.0 },
            ..Default::default()
        },
        quad_m: 1500,
        kl_grid_m: 2001,
    }
}

fn tiny_spec() -> BenchmarkSpec {
    BenchmarkSpec {
        mode: DataModel::Sum,
        noise: NoiseModel::analytic(ScalarDist::gaussian(10.0, 1.0).unwrap()).unwrap(),
        ns: vec![80],
        snrs: vec![9.0],
        beta_b: 1.0,
        methods: vec![Method::Known, Method::Gmm, Method::Nf],
        seeds_per_cell: 1,
        master_seed: 99,
        configs: tiny_configs(),
    }
}

#[test]
fn gamma_kl_closed_form_check() {
    // Frozen: KL(Gamma(9,1) || Gamma(8,1)) = 0.061199936275774068.
    let gt = ThetaB::new(9.0, 1.0).unwrap();
    let q = ThetaB::new(8.0, 1.0).unwrap();
    let grid = gamma_eval_grid(&gt, 20_001);
    let got = kl_to_ground_truth(&gt, |b| q.log_pdf(b), &grid).unwrap();
    assert!((got.kl - 0.061_199_936_275_774_07).abs() < 1e-4, "kl {}", got.kl);
    assert!((gamma_kl(9.0, 1.0, 8.0, 1.0) - 0.061_199_936_275_774_07).abs() < 1e-10);
}

#[test]
fn single_cell_benchmark_produces_finite_kls() {
    let reports = benchmark(&tiny_spec());
    // known and gmm contribute map + reconstruction rows, nf a single row
    assert_eq!(reports.len(), 5);
    let methods: Vec<&str> = reports.iter().map(|r| r.method.as_str()).collect();
    assert_eq!(methods, ["known_map", "known_recon", "gmm_map", "gmm_recon", "nf"]);
    for r in &reports {
        let out = r.outcome.as_ref().expect("cell should succeed");
        assert!(out.kl.is_finite() && out.kl >= -1e-6, "{}: kl {}", r.method, out.kl);
        assert_eq!(r.n, 80);
    }
}

#[test]
fn benchmark_is_deterministic() {
    let a = benchmark(&tiny_spec());
    let b = benchmark(&tiny_spec());
    assert_eq!(a.len(), b.len());
    for (ra, rb) in a.iter().zip(&b) {
        assert_eq!(ra.method, rb.method);
        let (ka, kb) = (
            ra.outcome.as_ref().unwrap().kl,
            rb.outcome.as_ref().unwrap().kl,
        );
        assert_eq!(ka.to_bits(), kb.to_bits(), "method {}", ra.method);
    }
}

#[test]
fn per_cell_failures_are_recorded_not_fatal() {
    // Product mode with noise that has mass at a <= 0: every product fit is
    // refused with NonPositiveSupport, but the benchmark still returns.
    let mut spec = tiny_spec();
    spec.mode = DataModel::Product;
    spec.noise = NoiseModel::analytic(ScalarDist::gaussian(2.0, 1.0).unwrap()).unwrap();
    let reports = benchmark(&spec);
    assert!(!reports.is_empty());
    for r in &reports {
        match &r.outcome {
            Err(name) => assert!(
                name == "NonPositiveSupport" || name == "NonPositiveData",
                "unexpected error name {name}"
            ),
            Ok(_) => panic!("expected failure for {}", r.method),
        }
    }
}
