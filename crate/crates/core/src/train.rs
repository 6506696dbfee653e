//! Maximum-likelihood training of the flow against the convolved likelihood:
//! moment-matched head initialization, rectangle-rule loss with log-sum-exp,
//! a full-batch adaptive-moment loop, and the product-mode log-space wrapper.

use crate::dist::NoiseModel;
use crate::error::{DeconvError, Result};
use crate::flow::{FlowHyper, FlowModel};
use crate::likelihood::ConvEvaluator;
use crate::math::mean_and_var;
use crate::quad::{nf_grid, DataModel, QuadGrid, M_NF_DEFAULT};

/// Training configuration. The loop is full-batch and deterministic; the
/// seed is carried for provenance only.
#[derive(Debug, Clone)]
pub struct TrainConfig {
    pub steps: usize,
    pub lr: f64,
    pub m: usize,
    pub seed: u64,
    pub hyper: FlowHyper,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            steps: 3000,
            lr: 1e-3,
            m: M_NF_DEFAULT,
            seed: 0,
            hyper: FlowHyper::default(),
        }
    }
}

/// Moment-matched affine head: alpha = mean(x) - <a>,
/// beta = sqrt(Var(x) * max(1 - var_a / Var(x), 1/16)).
pub fn init_head(dataset: &[f64], noise: &NoiseModel) -> (f64, f64) {
    let (mean_x, var_x) = mean_and_var(dataset);
    let alpha = mean_x - noise.mean();
    let shrink = (1.0 - noise.variance() / var_x).max(1.0 / 16.0);
    let beta = (var_x * shrink).sqrt();
    (alpha, beta)
}

/// Negative mean convolved log-likelihood of the dataset under the flow,
/// with the flow density evaluated once on the grid and reused for every
/// observation.
pub fn nf_loss(model: &FlowModel, dataset: &[f64], noise: &NoiseModel, grid: &QuadGrid) -> f64 {
    let evaluator = ConvEvaluator::new(dataset, noise, grid, DataModel::Sum);
    nf_loss_with(model, &evaluator)
}

fn signal_on_grid(model: &FlowModel, evaluator: &ConvEvaluator) -> Vec<f64> {
    let prepared = model.prepare();
    evaluator.grid().points().iter().map(|&b| prepared.log_pdf(b)).collect()
}

pub(crate) fn nf_loss_with(model: &FlowModel, evaluator: &ConvEvaluator) -> f64 {
    let signal = signal_on_grid(model, evaluator);
    let mut logp = vec![0.0; evaluator.data().len()];
    evaluator.per_point_into(&signal, &mut logp);
    -logp.iter().sum::<f64>() / logp.len() as f64
}

/// Gradient of `nf_loss` with respect to every unconstrained flow parameter.
pub fn nf_loss_grad(model: &FlowModel, dataset: &[f64], noise: &NoiseModel, grid: &QuadGrid) -> Vec<f64> {
    let evaluator = ConvEvaluator::new(dataset, noise, grid, DataModel::Sum);
    nf_loss_grad_with(model, &evaluator).1
}

/// Returns (loss, gradient) sharing one pass over the data.
fn nf_loss_grad_with(model: &FlowModel, evaluator: &ConvEvaluator) -> (f64, Vec<f64>) {
    let n = evaluator.data().len();
    let signal = signal_on_grid(model, evaluator);
    let mut logp = vec![0.0; n];
    evaluator.per_point_into(&signal, &mut logp);
    let loss = -logp.iter().sum::<f64>() / n as f64;
    // d loss / d signal_m = -(1/N) sum_n v_nm
    let coeff = vec![-1.0 / n as f64; n];
    let mut dsignal = vec![0.0; evaluator.grid().len()];
    evaluator.accumulate_resp(&signal, &logp, &coeff, &mut dsignal);
    let grad = model.weighted_log_pdf_grad(evaluator.grid().points(), &dsignal);
    (loss, grad)
}

struct Adam {
    lr: f64,
    beta1: f64,
    beta2: f64,
    eps: f64,
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

impl Adam {
    fn new(lr: f64, n: usize) -> Self {
        Adam { lr, beta1: 0.9, beta2: 0.999, eps: 1e-8, m: vec![0.0; n], v: vec![0.0; n], t: 0 }
    }

    fn step(&mut self, params: &mut [f64], grads: &[f64]) {
        self.t += 1;
        let bc1 = 1.0 - self.beta1.powi(self.t);
        let bc2 = 1.0 - self.beta2.powi(self.t);
        for ((p, g), (m, v)) in params
            .iter_mut()
            .zip(grads)
            .zip(self.m.iter_mut().zip(self.v.iter_mut()))
        {
            *m = self.beta1 * *m + (1.0 - self.beta1) * g;
            *v = self.beta2 * *v + (1.0 - self.beta2) * g * g;
            let mhat = *m / bc1;
            let vhat = *v / bc2;
            *p -= self.lr * mhat / (vhat.sqrt() + self.eps);
        }
    }
}

/// A completed training run. `losses[i]` is the loss at the parameters after
/// i optimizer steps; the model holds the best recorded parameters.
#[derive(Debug, Clone)]
pub struct NfFit {
    pub model: FlowModel,
    pub losses: Vec<f64>,
    pub grid: QuadGrid,
}

impl NfFit {
    pub fn initial_loss(&self) -> f64 {
        self.losses[0]
    }

    pub fn best_loss(&self) -> f64 {
        self.losses.iter().cloned().fold(f64::INFINITY, f64::min)
    }
}

/// Train the flow on sum-mode data (or on log-transformed product data via
/// [`fit_nf_product`]). Deterministic: the loop is full-batch with fixed
/// reduction order, so identical configs give identical trajectories.
pub fn fit_nf(dataset: &[f64], noise: &NoiseModel, cfg: &TrainConfig) -> Result<NfFit> {
    if dataset.is_empty() {
        return Err(DeconvError::InvalidParameter("empty dataset".into()));
    }
    let grid = nf_grid(dataset, noise, cfg.m)?;
    let (alpha, beta) = init_head(dataset, noise);
    let mut model = FlowModel::identity(cfg.hyper, alpha, beta)?;
    let evaluator = ConvEvaluator::new(dataset, noise, &grid, DataModel::Sum);

    let mut params = model.flat_params().to_vec();
    let mut adam = Adam::new(cfg.lr, params.len());
    let mut losses = Vec::with_capacity(cfg.steps + 1);
    let mut best_params = params.clone();
    let mut best_loss = f64::INFINITY;
    for step in 0..=cfg.steps {
        let (loss, grad) = nf_loss_grad_with(&model, &evaluator);
        losses.push(loss);
        if loss < best_loss {
            best_loss = loss;
            best_params.copy_from_slice(&params);
        }
        if step == cfg.steps {
            break;
        }
        adam.step(&mut params, &grad);
        model.set_flat_params(&params);
    }
    model.set_flat_params(&best_params);
    Ok(NfFit { model, losses, grid })
}

/// The density over b recovered from a flow trained in log space:
/// p(b) = p_log(log b) / |b|.
#[derive(Debug, Clone)]
pub struct ProductDensity {
    log_model: FlowModel,
}

impl ProductDensity {
    pub fn new(log_model: FlowModel) -> Self {
        ProductDensity { log_model }
    }

    pub fn log_model(&self) -> &FlowModel {
        &self.log_model
    }

    pub fn log_pdf(&self, b: f64) -> f64 {
        if b <= 0.0 {
            return f64::NEG_INFINITY;
        }
        let lb = b.ln();
        self.log_model.log_pdf(lb) - lb
    }

    /// Evaluate on many points with the knots constrained once.
    pub fn log_pdf_batch(&self, bs: &[f64]) -> Vec<f64> {
        let prepared = self.log_model.prepare();
        bs.iter()
            .map(|&b| {
                if b <= 0.0 {
                    f64::NEG_INFINITY
                } else {
                    let lb = b.ln();
                    prepared.log_pdf(lb) - lb
                }
            })
            .collect()
    }
}

/// Product-mode training: transform data and noise to log space, run
/// [`fit_nf`] there, and return the b-space density via the 1/|b| Jacobian.
pub fn fit_nf_product(dataset: &[f64], noise: &NoiseModel, cfg: &TrainConfig) -> Result<(ProductDensity, NfFit)> {
    if dataset.is_empty() {
        return Err(DeconvError::InvalidParameter("empty dataset".into()));
    }
    if let Some(&bad) = dataset.iter().find(|x| **x <= 0.0) {
        return Err(DeconvError::NonPositiveData(format!(
            "product mode requires x > 0, found {bad}"
        )));
    }
    let log_noise = noise.log_space()?;
    let logs: Vec<f64> = dataset.iter().map(|x| x.ln()).collect();
    let fit = fit_nf(&logs, &log_noise, cfg)?;
    Ok((ProductDensity::new(fit.model.clone()), fit))
}
