//! Bayesian inference with a truncated Gaussian mixture: gradient-based
//! initialization followed by a three-block Gibbs sweep with
//! Metropolis-Hastings updates (means, variances, weights).
//!
//! In sum mode the Gaussian mixture convolved with Gaussian noise stays a
//! Gaussian mixture, so the likelihood is analytic. In product mode the
//! mixture models log b and the likelihood is evaluated by rectangle rule
//! over log b with integrand p_A(x/b) * (1/b) * mix(log b).

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use statrs::function::gamma::ln_gamma;

use crate::dist::{dirichlet_sample, NoiseModel, PsiB};
use crate::error::{DeconvError, Result};
use crate::likelihood::ConvEvaluator;
use crate::math::{mean_and_var, LOG_2PI};
use crate::mcmc::{mh_accept, thin_indices, PosteriorChain};
use crate::quad::{known_model_grid, DataModel, QuadGrid};
use crate::rng::substream;

/// Weights are floored here after every Dirichlet draw; an exactly zero
/// weight would put the decaying Dirichlet prior at +inf and freeze the
/// chain in that corner.
const WEIGHT_FLOOR: f64 = 1e-12;

/// Concentration floor for the weights proposal (Gamma shapes below this
/// underflow to zero draws).
const CONC_FLOOR: f64 = 1e-6;

/// At most this many chain samples are used when evaluating reconstruction
/// curves; see `mcmc::thin_indices`.
const CURVE_SAMPLES_MAX: usize = 2000;

/// Prior hyperparameters: Gaussian means prior, log-Gaussian variances
/// prior, Dirichlet weights prior with decaying concentrations.
#[derive(Debug, Clone)]
pub struct GmmPriorSpec {
    pub mean_loc: f64,
    pub mean_var: f64,
    pub var_log_loc: f64,
    pub var_log_var: f64,
    pub concentrations: Vec<f64>,
}

impl GmmPriorSpec {
    /// Defaults: mean prior N(0, 50), variance prior logN(0, 1), and
    /// concentrations alpha_i = 10 * 0.9^i / sum_j 0.9^j (i = 1..=I), which
    /// sum to 10 and favor decaying weights.
    pub fn with_components(components: usize) -> Self {
        assert!(components >= 1);
        let geo: Vec<f64> = (1..=components).map(|i| 0.9f64.powi(i as i32)).collect();
        let total: f64 = geo.iter().sum();
        let concentrations = geo.iter().map(|g| 10.0 * g / total).collect();
        GmmPriorSpec {
            mean_loc: 0.0,
            mean_var: 50.0,
            var_log_loc: 0.0,
            var_log_var: 1.0,
            concentrations,
        }
    }

    pub fn components(&self) -> usize {
        self.concentrations.len()
    }
}

/// Sampler configuration, defaults matching the reference setup.
#[derive(Debug, Clone)]
pub struct GmmConfig {
    pub components: usize,
    pub burn_in: usize,
    pub samples: usize,
    pub init_steps: usize,
    pub init_lr: f64,
    pub tau_mu: f64,
    pub tau_sigma: f64,
    pub dirichlet_scale: f64,
    pub corrected_hastings: bool,
}

impl Default for GmmConfig {
    fn default() -> Self {
        GmmConfig {
            components: 20,
            burn_in: 5000,
            samples: 20_000,
            init_steps: 5000,
            init_lr: 1e-3,
            tau_mu: 0.01,
            tau_sigma: 0.01,
            dirichlet_scale: 1e5,
            corrected_hastings: false,
        }
    }
}

/// Sum of the three prior factors.
pub fn gmm_log_prior(psi: &PsiB, spec: &GmmPriorSpec) -> f64 {
    assert_eq!(psi.component_count(), spec.components());
    let mut lp = 0.0;
    for &m in psi.means() {
        let d = m - spec.mean_loc;
        lp += -0.5 * (LOG_2PI + spec.mean_var.ln()) - d * d / (2.0 * spec.mean_var);
    }
    for &v in psi.variances() {
        let lv = v.ln();
        let d = lv - spec.var_log_loc;
        lp += -lv - 0.5 * (LOG_2PI + spec.var_log_var.ln()) - d * d / (2.0 * spec.var_log_var);
    }
    lp += dirichlet_log_pdf(psi.weights(), &spec.concentrations);
    lp
}

/// Dirichlet log-density; weights are clamped away from zero inside the log.
pub fn dirichlet_log_pdf(weights: &[f64], concentrations: &[f64]) -> f64 {
    assert_eq!(weights.len(), concentrations.len());
    let total: f64 = concentrations.iter().sum();
    let mut lp = ln_gamma(total);
    for (&w, &c) in weights.iter().zip(concentrations) {
        lp += (c - 1.0) * w.max(1e-300).ln() - ln_gamma(c);
    }
    lp
}

/// Analytic sum-mode likelihood: each mixture component convolved with
/// Gaussian noise is another Gaussian with shifted mean and added variance.
pub fn gmm_sum_log_likelihood(x: f64, psi: &PsiB, mean_a: f64, var_a: f64) -> f64 {
    let mut acc = crate::math::LseAcc::new();
    for ((&m, &v), &w) in psi.means().iter().zip(psi.variances()).zip(psi.weights()) {
        if w == 0.0 {
            continue;
        }
        let s = v + var_a;
        let d = x - m - mean_a;
        acc.add(w.ln() - 0.5 * (LOG_2PI + s.ln()) - d * d / (2.0 * s));
    }
    acc.value()
}

/// Product-mode likelihood by rectangle rule over phi = log b:
/// lse_m(log dphi + log p_A(x / e^phi) - phi + mix_log(phi)).
pub fn gmm_product_log_likelihood(
    x: f64,
    psi: &PsiB,
    noise: &NoiseModel,
    grid: &QuadGrid,
) -> Result<f64> {
    if x <= 0.0 {
        return Err(DeconvError::NonPositiveData(format!("x = {x}")));
    }
    let mut acc = crate::math::LseAcc::new();
    for &phi in grid.points() {
        let b = phi.exp();
        acc.add(noise.log_pdf(x / b) - phi + psi.mixture_log_pdf(phi));
    }
    let v = acc.value();
    Ok(if v.is_finite() { v + grid.spacing().ln() } else { v })
}

enum LikKernel {
    /// Sum mode with Gaussian noise: analytic convolution.
    SumGaussian { mean_a: f64, var_a: f64 },
    /// Product mode: rectangle rule over log b via the shared evaluator.
    Product { evaluator: ConvEvaluator },
}

/// Dataset, noise, priors, and sampler settings bound together.
pub struct GmmProblem {
    data: Vec<f64>,
    mode: DataModel,
    spec: GmmPriorSpec,
    cfg: GmmConfig,
    kernel: LikKernel,
    /// Moment-matched location/scale of the modelled variable (log b in
    /// product mode), used by the initializer.
    init_loc: f64,
    init_var: f64,
}

/// A finished run with per-block acceptance rates.
pub struct GmmRun {
    pub chain: PosteriorChain<PsiB>,
    pub mean_accept: f64,
    pub var_accept: f64,
    pub weight_accept: f64,
}

impl GmmProblem {
    pub fn new(
        data: &[f64],
        noise: &NoiseModel,
        mode: DataModel,
        cfg: GmmConfig,
        quad_m: usize,
    ) -> Result<Self> {
        if data.is_empty() {
            return Err(DeconvError::InvalidParameter("empty dataset".into()));
        }
        let spec = GmmPriorSpec::with_components(cfg.components);
        let (kernel, init_loc, init_var) = match mode {
            DataModel::Sum => {
                let (mean_a, var_a) = noise.as_gaussian().ok_or_else(|| {
                    DeconvError::InvalidParameter(
                        "sum-mode mixture inference needs Gaussian noise".into(),
                    )
                })?;
                let (mx, vx) = mean_and_var(data);
                (LikKernel::SumGaussian { mean_a, var_a }, mx - mean_a, vx)
            }
            DataModel::Product => {
                if let Some(&bad) = data.iter().find(|x| **x <= 0.0) {
                    return Err(DeconvError::NonPositiveData(format!(
                        "product mode requires x > 0, found {bad}"
                    )));
                }
                let grid = known_model_grid(data, noise, DataModel::Product, quad_m)?;
                let evaluator = ConvEvaluator::new(data, noise, &grid, DataModel::Product);
                let log_noise = noise.log_space()?;
                let logs: Vec<f64> = data.iter().map(|x| x.ln()).collect();
                let (ml, vl) = mean_and_var(&logs);
                (LikKernel::Product { evaluator }, ml - log_noise.mean(), vl)
            }
        };
        if init_var <= 0.0 {
            return Err(DeconvError::InvalidParameter(
                "dataset has zero variance; mixture initialization undefined".into(),
            ));
        }
        Ok(GmmProblem { data: data.to_vec(), mode, spec, cfg, kernel, init_loc, init_var })
    }

    pub fn spec(&self) -> &GmmPriorSpec {
        &self.spec
    }

    pub fn config(&self) -> &GmmConfig {
        &self.cfg
    }

    pub fn mode(&self) -> DataModel {
        self.mode
    }

    pub fn grid(&self) -> Option<&QuadGrid> {
        match &self.kernel {
            LikKernel::Product { evaluator } => Some(evaluator.grid()),
            LikKernel::SumGaussian { .. } => None,
        }
    }

    /// The proposal-dependent integrand values on the product grid:
    /// mix_log(phi) - phi.
    fn product_signal(&self, psi: &PsiB, grid: &QuadGrid) -> Vec<f64> {
        grid.points().iter().map(|&phi| psi.mixture_log_pdf(phi) - phi).collect()
    }

    pub fn log_likelihood(&self, psi: &PsiB) -> f64 {
        match &self.kernel {
            LikKernel::SumGaussian { mean_a, var_a } => self
                .data
                .iter()
                .map(|&x| gmm_sum_log_likelihood(x, psi, *mean_a, *var_a))
                .sum(),
            LikKernel::Product { evaluator } => {
                evaluator.log_lik(&self.product_signal(psi, evaluator.grid()))
            }
        }
    }

    pub fn log_posterior(&self, psi: &PsiB) -> f64 {
        gmm_log_prior(psi, &self.spec) + self.log_likelihood(psi)
    }

    /// Moment-matched starting point: every mean at the data mean less the
    /// noise mean, every variance at the data variance, weights proportional
    /// to the prior concentrations.
    pub fn moment_init(&self) -> PsiB {
        let i = self.spec.components();
        let conc_sum: f64 = self.spec.concentrations.iter().sum();
        let weights: Vec<f64> = self.spec.concentrations.iter().map(|c| c / conc_sum).collect();
        PsiB::new(vec![self.init_loc; i], vec![self.init_var; i], weights)
            .expect("moment init is valid")
    }

    /// Moment init followed by `init_steps` adaptive-moment ascent steps on
    /// the log posterior in an unconstrained parametrization (means raw,
    /// variances via log, weights via softmax).
    pub fn init(&self) -> PsiB {
        let start = self.moment_init();
        if self.cfg.init_steps == 0 {
            return start;
        }
        let i = self.spec.components();
        let mut params = Vec::with_capacity(3 * i);
        params.extend_from_slice(start.means());
        params.extend(start.variances().iter().map(|v| v.ln()));
        params.extend(self.spec.concentrations.iter().map(|c| c.ln()));

        let mut adam = InitAdam::new(self.cfg.init_lr, params.len());
        for _ in 0..self.cfg.init_steps {
            let (_, grad) = self.unconstrained_lp_grad(&params);
            adam.ascend(&mut params, &grad);
        }
        self.psi_from_unconstrained(&params)
    }

    fn psi_from_unconstrained(&self, p: &[f64]) -> PsiB {
        let i = self.spec.components();
        let means = p[..i].to_vec();
        let variances: Vec<f64> = p[i..2 * i].iter().map(|t| t.exp()).collect();
        let weights = softmax(&p[2 * i..3 * i]);
        PsiB::new(means, variances, weights).expect("unconstrained map stays valid")
    }

    /// Log posterior and its gradient in the unconstrained parametrization.
    fn unconstrained_lp_grad(&self, p: &[f64]) -> (f64, Vec<f64>) {
        let i = self.spec.components();
        let psi = self.psi_from_unconstrained(p);
        let means = psi.means();
        let vars = psi.variances();
        let rho = psi.weights();
        let mut grad = vec![0.0; 3 * i];

        // prior terms
        let mut lp = gmm_log_prior(&psi, &self.spec);
        let conc_sum: f64 = self.spec.concentrations.iter().sum();
        for k in 0..i {
            grad[k] += -(means[k] - self.spec.mean_loc) / self.spec.mean_var;
            let t = vars[k].ln();
            grad[i + k] += -1.0 - (t - self.spec.var_log_loc) / self.spec.var_log_var;
            grad[2 * i + k] +=
                (self.spec.concentrations[k] - 1.0) - rho[k] * (conc_sum - i as f64);
        }

        // likelihood terms
        match &self.kernel {
            LikKernel::SumGaussian { mean_a, var_a } => {
                for &x in &self.data {
                    let mut terms = Vec::with_capacity(i);
                    for k in 0..i {
                        let s = vars[k] + var_a;
                        let d = x - means[k] - mean_a;
                        let lt = if rho[k] > 0.0 {
                            rho[k].ln() - 0.5 * (LOG_2PI + s.ln()) - d * d / (2.0 * s)
                        } else {
                            f64::NEG_INFINITY
                        };
                        terms.push(lt);
                    }
                    let lse = crate::math::logsumexp(&terms);
                    lp += lse;
                    for k in 0..i {
                        let r = (terms[k] - lse).exp();
                        let s = vars[k] + var_a;
                        let d = x - means[k] - mean_a;
                        grad[k] += r * d / s;
                        grad[i + k] += r * (d * d / (2.0 * s * s) - 0.5 / s) * vars[k];
                        grad[2 * i + k] += r - rho[k];
                    }
                }
            }
            LikKernel::Product { evaluator } => {
                let grid = evaluator.grid();
                let signal = self.product_signal(&psi, grid);
                let mut logp = vec![0.0; self.data.len()];
                evaluator.per_point_into(&signal, &mut logp);
                lp += logp.iter().sum::<f64>();
                // V_m = sum_n d log p_n / d signal_m, then chain through the
                // mixture responsibilities at each grid point.
                let coeff = vec![1.0; self.data.len()];
                let mut vm = vec![0.0; grid.len()];
                evaluator.accumulate_resp(&signal, &logp, &coeff, &mut vm);
                for (phi, v) in grid.points().iter().zip(vm) {
                    if v == 0.0 {
                        continue;
                    }
                    let mut terms = Vec::with_capacity(i);
                    for k in 0..i {
                        let d = phi - means[k];
                        let lt = if rho[k] > 0.0 {
                            rho[k].ln() - 0.5 * (LOG_2PI + vars[k].ln()) - d * d / (2.0 * vars[k])
                        } else {
                            f64::NEG_INFINITY
                        };
                        terms.push(lt);
                    }
                    let lse = crate::math::logsumexp(&terms);
                    for k in 0..i {
                        let u = (terms[k] - lse).exp();
                        let d = phi - means[k];
                        grad[k] += v * u * d / vars[k];
                        grad[i + k] +=
                            v * u * (d * d / (2.0 * vars[k] * vars[k]) - 0.5 / vars[k]) * vars[k];
                        grad[2 * i + k] += v * (u - rho[k]);
                    }
                }
            }
        }
        (lp, grad)
    }

    /// One Gibbs sweep: a joint means block, a joint variances block, and a
    /// Dirichlet weights draw, each accepted or rejected as a whole.
    ///
    /// The means proposal is symmetric. For the variances and weights blocks
    /// the acceptance uses the posterior ratio only, as printed in the
    /// reference scheme; `corrected_hastings` adds the exact proposal ratios.
    pub fn gibbs_sweep<R: Rng>(
        &self,
        psi: &PsiB,
        current_lp: f64,
        rng: &mut R,
    ) -> (PsiB, f64, [bool; 3]) {
        let mut means = psi.means().to_vec();
        let mut vars = psi.variances().to_vec();
        let mut weights = psi.weights().to_vec();
        let mut lp = current_lp;
        let mut accepted = [false; 3];

        // means block
        {
            let prop_means: Vec<f64> = means
                .iter()
                .map(|m| m + self.cfg.tau_mu * <StandardNormal as Distribution<f64>>::sample(&StandardNormal, rng))
                .collect();
            let cand = PsiB::new(prop_means.clone(), vars.clone(), weights.clone())
                .expect("means proposal stays valid");
            let cand_lp = self.log_posterior(&cand);
            if mh_accept(rng, cand_lp - lp) {
                means = prop_means;
                lp = cand_lp;
                accepted[0] = true;
            }
        }

        // variances block
        {
            let mut log_hastings = 0.0;
            let prop_vars: Vec<f64> = vars
                .iter()
                .map(|v| {
                    let v2 = v * (self.cfg.tau_sigma * <StandardNormal as Distribution<f64>>::sample(&StandardNormal, rng)).exp();
                    log_hastings += (v2 / v).ln();
                    v2
                })
                .collect();
            let cand = PsiB::new(means.clone(), prop_vars.clone(), weights.clone())
                .expect("variance proposal stays valid");
            let cand_lp = self.log_posterior(&cand);
            let correction = if self.cfg.corrected_hastings { log_hastings } else { 0.0 };
            if mh_accept(rng, cand_lp - lp + correction) {
                vars = prop_vars;
                lp = cand_lp;
                accepted[1] = true;
            }
        }

        // weights block
        {
            let conc: Vec<f64> = weights
                .iter()
                .map(|w| (self.cfg.dirichlet_scale * w).max(CONC_FLOOR))
                .collect();
            let mut prop_weights = dirichlet_sample(&conc, rng);
            floor_weights(&mut prop_weights);
            let cand = PsiB::new(means.clone(), vars.clone(), prop_weights.clone())
                .expect("weights proposal stays valid");
            let cand_lp = self.log_posterior(&cand);
            let correction = if self.cfg.corrected_hastings {
                let rev_conc: Vec<f64> = prop_weights
                    .iter()
                    .map(|w| (self.cfg.dirichlet_scale * w).max(CONC_FLOOR))
                    .collect();
                dirichlet_log_pdf(&weights, &rev_conc) - dirichlet_log_pdf(&prop_weights, &conc)
            } else {
                0.0
            };
            if mh_accept(rng, cand_lp - lp + correction) {
                weights = prop_weights;
                lp = cand_lp;
                accepted[2] = true;
            }
        }

        let next = PsiB::new(means, vars, weights).expect("sweep preserves validity");
        (next, lp, accepted)
    }

    /// Initialization, burn-in, and `samples` retained sweeps; deterministic
    /// per seed.
    pub fn run(&self, seed: u64) -> GmmRun {
        let mut rng = substream(seed, "gmm-chain");
        let mut psi = self.init();
        let mut lp = self.log_posterior(&psi);
        for _ in 0..self.cfg.burn_in {
            let (next, next_lp, _) = self.gibbs_sweep(&psi, lp, &mut rng);
            psi = next;
            lp = next_lp;
        }
        let mut samples = Vec::with_capacity(self.cfg.samples);
        let mut lps = Vec::with_capacity(self.cfg.samples);
        let mut accept_counts = [0usize; 3];
        for _ in 0..self.cfg.samples {
            let (next, next_lp, accepted) = self.gibbs_sweep(&psi, lp, &mut rng);
            psi = next;
            lp = next_lp;
            for (c, a) in accept_counts.iter_mut().zip(accepted) {
                if a {
                    *c += 1;
                }
            }
            samples.push(psi.clone());
            lps.push(lp);
        }
        let s = self.cfg.samples as f64;
        GmmRun {
            chain: PosteriorChain::new(samples, lps, 0),
            mean_accept: accept_counts[0] as f64 / s,
            var_accept: accept_counts[1] as f64 / s,
            weight_accept: accept_counts[2] as f64 / s,
        }
    }
}

fn floor_weights(weights: &mut [f64]) {
    for w in weights.iter_mut() {
        *w = w.max(WEIGHT_FLOOR);
    }
    let sum: f64 = weights.iter().sum();
    for w in weights.iter_mut() {
        *w /= sum;
    }
}

fn softmax(logits: &[f64]) -> Vec<f64> {
    let c = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|l| (l - c).exp()).collect();
    let total: f64 = exps.iter().sum();
    exps.iter().map(|e| e / total).collect()
}

struct InitAdam {
    lr: f64,
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

impl InitAdam {
    fn new(lr: f64, n: usize) -> Self {
        InitAdam { lr, m: vec![0.0; n], v: vec![0.0; n], t: 0 }
    }

    /// Gradient ascent step (maximizes the objective).
    fn ascend(&mut self, params: &mut [f64], grads: &[f64]) {
        self.t += 1;
        let bc1 = 1.0 - 0.9f64.powi(self.t);
        let bc2 = 1.0 - 0.999f64.powi(self.t);
        for ((p, g), (m, v)) in params.iter_mut().zip(grads).zip(self.m.iter_mut().zip(self.v.iter_mut())) {
            *m = 0.9 * *m + 0.1 * g;
            *v = 0.999 * *v + 0.001 * g * g;
            *p += self.lr * (*m / bc1) / ((*v / bc2).sqrt() + 1e-8);
        }
    }
}

/// Monte Carlo average of the mixture density across (thinned) chain
/// samples. In product mode the mixture lives over log b and the curve over
/// b carries the 1/b Jacobian.
pub fn gmm_reconstruction(chain: &PosteriorChain<PsiB>, b_grid: &QuadGrid, mode: DataModel) -> Vec<f64> {
    let idx = thin_indices(chain.len(), CURVE_SAMPLES_MAX);
    let mut curve = vec![0.0; b_grid.len()];
    for &s in &idx {
        let psi = &chain.samples()[s];
        for (c, &b) in curve.iter_mut().zip(b_grid.points()) {
            *c += gmm_density_at(psi, b, mode);
        }
    }
    let n = idx.len() as f64;
    for c in &mut curve {
        *c /= n;
    }
    curve
}

/// Mixture density over b for the given data model.
pub fn gmm_density_at(psi: &PsiB, b: f64, mode: DataModel) -> f64 {
    match mode {
        DataModel::Sum => psi.mixture_log_pdf(b).exp(),
        DataModel::Product => {
            if b <= 0.0 {
                0.0
            } else {
                (psi.mixture_log_pdf(b.ln()) - b.ln()).exp()
            }
        }
    }
}

/// The sample with the highest stored log posterior.
pub fn gmm_map(chain: &PosteriorChain<PsiB>) -> PsiB {
    chain.map_sample().clone()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dist::ScalarDist;
    use crate::quad::build_grid;

    fn ref_noise() -> NoiseModel {
        NoiseModel::analytic(ScalarDist::gaussian(10.0, 1.0).unwrap()).unwrap()
    }

    fn uniform_psi(i: usize) -> PsiB {
        let weights = vec![1.0 / i as f64; i];
        PsiB::new(vec![0.0; i], vec![1.0; i], weights).unwrap()
    }

    #[test]
    fn concentrations_sum_to_ten() {
        let spec = GmmPriorSpec::with_components(20);
        let sum: f64 = spec.concentrations.iter().sum();
        assert!((sum - 10.0).abs() < 1e-12);
        assert!(spec.concentrations.windows(2).all(|w| w[0] > w[1]));
    }

    #[test]
    fn prior_matches_direct_formula() {
        let spec = GmmPriorSpec::with_components(3);
        let conc_sum: f64 = spec.concentrations.iter().sum();
        let rho: Vec<f64> = spec.concentrations.iter().map(|c| c / conc_sum).collect();
        let psi = PsiB::new(vec![0.0; 3], vec![1.0; 3], rho.clone()).unwrap();
        let got = gmm_log_prior(&psi, &spec);
        // direct evaluation of the three factors
        let mut want = 0.0;
        for _ in 0..3 {
            want += -(0.5) * (LOG_2PI + 50.0f64.ln());
            want += -(0.5) * LOG_2PI; // log-Gaussian at v=1: -ln v = 0, quad = 0
        }
        want += ln_gamma(conc_sum);
        for (w, c) in rho.iter().zip(&spec.concentrations) {
            want += (c - 1.0) * w.ln() - ln_gamma(*c);
        }
        assert!((got - want).abs() < 1e-10, "got {got} want {want}");
    }

    #[test]
    fn prior_mean_shift_algebra() {
        let spec = GmmPriorSpec::with_components(4);
        let base = uniform_psi(4);
        for &t in &[0.7f64, -2.0, 5.0] {
            let mut means = base.means().to_vec();
            means[2] = t;
            let shifted = PsiB::new(means, base.variances().to_vec(), base.weights().to_vec()).unwrap();
            let got = gmm_log_prior(&shifted, &spec) - gmm_log_prior(&base, &spec);
            assert!((got - (-t * t / 100.0)).abs() < 1e-12);
        }
    }

    #[test]
    fn prior_variance_scale_algebra() {
        let spec = GmmPriorSpec::with_components(4);
        let base = uniform_psi(4);
        let mut vars = base.variances().to_vec();
        vars[1] = std::f64::consts::E;
        let scaled = PsiB::new(base.means().to_vec(), vars, base.weights().to_vec()).unwrap();
        let got = gmm_log_prior(&scaled, &spec) - gmm_log_prior(&base, &spec);
        assert!((got - (-1.5)).abs() < 1e-12, "got {got}");
    }

    #[test]
    fn sum_likelihood_single_component_analytic() {
        let psi = PsiB::new(vec![0.0], vec![1.0], vec![1.0]).unwrap();
        let got = gmm_sum_log_likelihood(10.0, &psi, 10.0, 1.0);
        assert!((got - (-1.265_512_123_484_645_4)).abs() < 1e-12);
    }

    #[test]
    fn sum_likelihood_degenerate_weights_is_single_gaussian() {
        let mut weights = vec![0.0; 5];
        weights[3] = 1.0;
        let psi = PsiB::new(
            vec![-2.0, -1.0, 0.0, 1.5, 3.0],
            vec![0.5, 1.0, 2.0, 0.8, 1.2],
            weights,
        )
        .unwrap();
        let (mean_a, var_a) = (10.0, 1.0);
        let x = 12.0;
        let s: f64 = 0.8 + var_a;
        let d = x - 1.5 - mean_a;
        let want = -0.5 * (LOG_2PI + s.ln()) - d * d / (2.0 * s);
        assert!((gmm_sum_log_likelihood(x, &psi, mean_a, var_a) - want).abs() < 1e-12);
    }

    #[test]
    fn product_likelihood_rejects_nonpositive_x() {
        let psi = uniform_psi(2);
        let grid = build_grid(0.0, 5.0, 100).unwrap();
        let err = gmm_product_log_likelihood(-3.0, &psi, &ref_noise(), &grid).unwrap_err();
        assert!(matches!(err, DeconvError::NonPositiveData(_)));
    }

    #[test]
    fn moment_init_matches_formulas() {
        let noise = ref_noise();
        let data = vec![17.0, 19.0, 21.0];
        let problem =
            GmmProblem::new(&data, &noise, DataModel::Sum, GmmConfig { components: 5, ..Default::default() }, 1000)
                .unwrap();
        let psi = problem.moment_init();
        let (mx, vx) = mean_and_var(&data);
        assert!(psi.means().iter().all(|m| (m - (mx - 10.0)).abs() < 1e-12));
        assert!(psi.variances().iter().all(|v| (v - vx).abs() < 1e-12));
        let conc_sum: f64 = problem.spec().concentrations.iter().sum();
        for (w, c) in psi.weights().iter().zip(&problem.spec().concentrations) {
            assert!((w - c / conc_sum).abs() < 1e-12);
        }
    }

    #[test]
    fn init_with_zero_steps_is_moment_init() {
        let noise = ref_noise();
        let data = vec![17.0, 19.0, 21.0, 18.5];
        let cfg = GmmConfig { components: 4, init_steps: 0, ..Default::default() };
        let problem = GmmProblem::new(&data, &noise, DataModel::Sum, cfg, 1000).unwrap();
        assert_eq!(problem.init(), problem.moment_init());
    }

    #[test]
    fn init_gradient_matches_finite_differences_sum() {
        let noise = ref_noise();
        let data = vec![17.0, 19.5, 22.0, 18.0, 20.5];
        let cfg = GmmConfig { components: 3, ..Default::default() };
        let problem = GmmProblem::new(&data, &noise, DataModel::Sum, cfg, 500).unwrap();
        check_grad(&problem);
    }

    #[test]
    fn init_gradient_matches_finite_differences_product() {
        let noise = ref_noise();
        let data = vec![70.0, 95.0, 120.0, 88.0];
        let cfg = GmmConfig { components: 3, ..Default::default() };
        let problem = GmmProblem::new(&data, &noise, DataModel::Product, cfg, 800).unwrap();
        check_grad(&problem);
    }

    fn check_grad(problem: &GmmProblem) {
        let i = problem.spec().components();
        let mut p = Vec::new();
        p.extend((0..i).map(|k| 1.0 + 0.3 * k as f64));
        p.extend((0..i).map(|k| 0.1 * k as f64 - 0.2));
        p.extend((0..i).map(|k| -0.1 * k as f64));
        let (_, grad) = problem.unconstrained_lp_grad(&p);
        let h = 1e-6;
        for j in 0..3 * i {
            let mut pp = p.clone();
            pp[j] += h;
            let up = problem.unconstrained_lp_grad(&pp).0;
            pp[j] -= 2.0 * h;
            let dn = problem.unconstrained_lp_grad(&pp).0;
            let fd = (up - dn) / (2.0 * h);
            assert!(
                (grad[j] - fd).abs() < 1e-4 * fd.abs().max(1.0),
                "param {j}: analytic {} vs fd {fd}",
                grad[j]
            );
        }
    }

    #[test]
    fn sweep_with_null_proposals_accepts_everything() {
        let noise = ref_noise();
        let data = vec![17.0, 19.0, 21.0];
        let cfg = GmmConfig {
            components: 3,
            tau_mu: 0.0,
            tau_sigma: 0.0,
            dirichlet_scale: 1e12,
            init_steps: 0,
            ..Default::default()
        };
        let problem = GmmProblem::new(&data, &noise, DataModel::Sum, cfg, 500).unwrap();
        let psi = problem.moment_init();
        let lp = problem.log_posterior(&psi);
        let mut rng = substream(7, "gmm-null");
        let (next, _, accepted) = problem.gibbs_sweep(&psi, lp, &mut rng);
        assert!(accepted[0] && accepted[1]);
        assert_eq!(next.means(), psi.means());
        assert_eq!(next.variances(), psi.variances());
        for (a, b) in next.weights().iter().zip(psi.weights()) {
            assert!((a - b).abs() < 1e-4);
        }
    }

    #[test]
    fn weights_stay_on_simplex_through_sweeps() {
        let noise = ref_noise();
        let data = vec![16.0, 18.0, 20.0, 22.0];
        let cfg = GmmConfig { components: 6, init_steps: 0, ..Default::default() };
        let problem = GmmProblem::new(&data, &noise, DataModel::Sum, cfg, 500).unwrap();
        let mut psi = problem.moment_init();
        let mut lp = problem.log_posterior(&psi);
        let mut rng = substream(8, "gmm-simplex");
        for _ in 0..50 {
            let (next, next_lp, _) = problem.gibbs_sweep(&psi, lp, &mut rng);
            psi = next;
            lp = next_lp;
            let sum: f64 = psi.weights().iter().sum();
            assert!((sum - 1.0).abs() < 1e-12);
            assert!(psi.weights().iter().all(|w| *w > 0.0));
            assert!(psi.variances().iter().all(|v| *v > 0.0));
        }
    }

    #[test]
    fn single_sample_run_is_one_sweep_from_init() {
        let noise = ref_noise();
        let data = vec![17.0, 19.0, 21.0];
        let cfg = GmmConfig { components: 3, burn_in: 0, samples: 1, init_steps: 0, ..Default::default() };
        let problem = GmmProblem::new(&data, &noise, DataModel::Sum, cfg, 500).unwrap();
        let run = problem.run(3);
        assert_eq!(run.chain.len(), 1);
        let init = problem.moment_init();
        let lp = problem.log_posterior(&init);
        let mut rng = substream(3, "gmm-chain");
        let (want, want_lp, _) = problem.gibbs_sweep(&init, lp, &mut rng);
        assert_eq!(run.chain.samples()[0], want);
        assert_eq!(run.chain.log_posteriors()[0], want_lp);
    }

    #[test]
    fn runs_are_deterministic_per_seed() {
        let noise = ref_noise();
        let data = vec![17.0, 19.0, 21.0, 20.0];
        let cfg = GmmConfig { components: 4, burn_in: 5, samples: 20, init_steps: 10, ..Default::default() };
        let problem = GmmProblem::new(&data, &noise, DataModel::Sum, cfg, 500).unwrap();
        let a = problem.run(9);
        let b = problem.run(9);
        assert_eq!(a.chain.samples(), b.chain.samples());
        assert_eq!(a.chain.log_posteriors(), b.chain.log_posteriors());
    }

    #[test]
    fn reconstruction_of_constant_chain_is_that_mixture() {
        let psi = PsiB::new(vec![-1.0, 2.0], vec![1.0, 0.5], vec![0.3, 0.7]).unwrap();
        let chain = PosteriorChain::new(vec![psi.clone(), psi.clone()], vec![-1.0, -1.0], 0);
        let grid = build_grid(-5.0, 6.0, 300).unwrap();
        let curve = gmm_reconstruction(&chain, &grid, DataModel::Sum);
        for (c, &b) in curve.iter().zip(grid.points()) {
            assert!((c - psi.mixture_log_pdf(b).exp()).abs() < 1e-14);
        }
    }

    #[test]
    fn map_is_argmax_of_stored_log_posteriors() {
        let p1 = uniform_psi(2);
        let p2 = PsiB::new(vec![1.0, 2.0], vec![1.0, 1.0], vec![0.5, 0.5]).unwrap();
        let chain = PosteriorChain::new(vec![p1, p2.clone()], vec![-10.0, -3.0], 0);
        assert_eq!(gmm_map(&chain), p2);
    }
}
