use deconv_core::bayes_known::{KnownModelProblem, McmcConfig};
use deconv_core::eval::{generate, reference_scenario};
use deconv_core::quad::DataModel;
use deconv_core::dist::{NoiseModel, ScalarDist};
use std::time::Instant;

fn main() {
    let scenario = reference_scenario(DataModel::Sum, 1000);
    let data = generate(&scenario);
    let noise = NoiseModel::analytic(ScalarDist::gaussian(10.0, 1.0).unwrap()).unwrap();
    let t0 = Instant::now();
    let problem = KnownModelProblem::new(&data, &noise, DataModel::Sum, 20_000, 100.0).unwrap();
    println!("problem construction: {:?}", t0.elapsed());

    let theta = deconv_core::bayes_known::ThetaB::new(9.0, 1.0).unwrap();
    let t0 = Instant::now();
    let reps = 50;
    let mut acc = 0.0;
    for _ in 0..reps { acc += problem.log_posterior(&theta); }
    let per = t0.elapsed().as_secs_f64() / reps as f64;
    println!("log_posterior eval: {:.2} ms  (acc {acc:.1})", per * 1e3);
    println!("grid_init estimate: {:.0} s", per * 2500.0);
    println!("chain 10000 estimate: {:.0} s", per * 10000.0);

    let t0 = Instant::now();
    let init = problem.grid_init();
    println!("grid_init actual: {:?} -> alpha {:.3} beta {:.3}", t0.elapsed(), init.alpha(), init.beta());

    let t0 = Instant::now();
    let cfg = McmcConfig { samples: 500, ..Default::default() };
    let chain = problem.run_chain(&cfg, 1);
    println!("500-step chain: {:?} (accept {:.2})", t0.elapsed(), chain.acceptance_rate());
}
