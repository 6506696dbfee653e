//! Bayesian inference of a Gamma signal model by Metropolis-Hastings,
//! with grid-search initialization, posterior-mean reconstruction, and MAP
//! density extraction.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use statrs::function::gamma::ln_gamma;

use crate::dist::NoiseModel;
use crate::error::{DeconvError, Result};
use crate::likelihood::ConvEvaluator;
use crate::math::LOG_2PI;
use crate::mcmc::{metropolis_chain, PosteriorChain};
use crate::quad::{known_model_grid, DataModel, QuadGrid};
use crate::rng::substream;

/// Gamma signal parameters: shape alpha and rate beta, both positive.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ThetaB {
    alpha: f64,
    beta: f64,
}

impl ThetaB {
    pub fn new(alpha: f64, beta: f64) -> Result<Self> {
        if !(alpha.is_finite() && beta.is_finite() && alpha > 0.0 && beta > 0.0) {
            return Err(DeconvError::InvalidParameter(format!(
                "Gamma parameters must be positive, got alpha={alpha}, beta={beta}"
            )));
        }
        Ok(ThetaB { alpha, beta })
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn mean(&self) -> f64 {
        self.alpha / self.beta
    }

    pub fn variance(&self) -> f64 {
        self.alpha / (self.beta * self.beta)
    }

    /// Gamma log-density over b; zero density for b <= 0.
    pub fn log_pdf(&self, b: f64) -> f64 {
        if b <= 0.0 {
            return f64::NEG_INFINITY;
        }
        self.alpha * self.beta.ln() - ln_gamma(self.alpha) + (self.alpha - 1.0) * b.ln()
            - self.beta * b
    }
}

/// Sampler configuration. Defaults follow the reference setup: 10000 samples,
/// log-scale proposal width 0.01, no burn-in, prior width 100.
#[derive(Debug, Clone)]
pub struct McmcConfig {
    pub samples: usize,
    pub sigma_s: f64,
    pub burn_in: usize,
    pub xi: f64,
}

impl Default for McmcConfig {
    fn default() -> Self {
        McmcConfig { samples: 10_000, sigma_s: 0.01, burn_in: 0, xi: 100.0 }
    }
}

/// Lattice used by the grid-search initializer: 50 x 50 points with
/// alpha in [0.001, 10] and beta in [0.001, 6].
pub const INIT_LATTICE: (usize, usize) = (50, 50);
pub const INIT_ALPHA_RANGE: (f64, f64) = (0.001, 10.0);
pub const INIT_BETA_RANGE: (f64, f64) = (0.001, 6.0);

/// Independent log-Gaussian priors on alpha and beta, location 0 and scale
/// `xi` in log space, Jacobians included.
pub fn log_prior(theta: &ThetaB, xi: f64) -> f64 {
    let la = theta.alpha.ln();
    let lb = theta.beta.ln();
    let norm = -0.5 * (LOG_2PI + (xi * xi).ln());
    (norm - la - la * la / (2.0 * xi * xi)) + (norm - lb - lb * lb / (2.0 * xi * xi))
}

/// A dataset, noise model, and integration grid bound together for posterior
/// evaluation.
pub struct KnownModelProblem {
    evaluator: ConvEvaluator,
    mode: DataModel,
    xi: f64,
    /// Signal abscissae (b values) and their logs, precomputed.
    points: Vec<f64>,
    log_points: Vec<f64>,
}

impl KnownModelProblem {
    pub fn new(dataset: &[f64], noise: &NoiseModel, mode: DataModel, m: usize, xi: f64) -> Result<Self> {
        let grid = known_model_grid(dataset, noise, mode, m)?;
        let evaluator = ConvEvaluator::new(dataset, noise, &grid, mode);
        let points = evaluator.signal_points();
        let log_points = points.iter().map(|b| b.ln()).collect();
        Ok(KnownModelProblem { evaluator, mode, xi, points, log_points })
    }

    pub fn grid(&self) -> &QuadGrid {
        self.evaluator.grid()
    }

    pub fn mode(&self) -> DataModel {
        self.mode
    }

    fn signal_log(&self, theta: &ThetaB) -> Vec<f64> {
        let base = theta.alpha * theta.beta.ln() - ln_gamma(theta.alpha);
        self.points
            .iter()
            .zip(&self.log_points)
            .map(|(&b, &lb)| base + (theta.alpha - 1.0) * lb - theta.beta * b)
            .collect()
    }

    /// Unnormalized log posterior: prior plus the summed convolved
    /// log-likelihood over the dataset.
    pub fn log_posterior(&self, theta: &ThetaB) -> f64 {
        log_prior(theta, self.xi) + self.evaluator.log_lik(&self.signal_log(theta))
    }

    /// Grid search over the initialization lattice; ties go to the smallest
    /// (alpha index, beta index).
    pub fn grid_init(&self) -> ThetaB {
        let (na, nb) = INIT_LATTICE;
        let alphas: Vec<f64> = lattice(INIT_ALPHA_RANGE, na);
        let betas: Vec<f64> = lattice(INIT_BETA_RANGE, nb);
        let mut best = ThetaB::new(alphas[0], betas[0]).expect("lattice is positive");
        let mut best_lp = f64::NEG_INFINITY;
        for &a in &alphas {
            for &b in &betas {
                let theta = ThetaB::new(a, b).expect("lattice is positive");
                let lp = self.log_posterior(&theta);
                if lp > best_lp {
                    best_lp = lp;
                    best = theta;
                }
            }
        }
        best
    }

    /// One Metropolis-Hastings step with the multiplicative log-Gaussian
    /// proposal; returns the next state and whether the proposal was taken.
    pub fn mh_step<R: Rng>(
        &self,
        current: &ThetaB,
        current_lp: f64,
        sigma_s: f64,
        rng: &mut R,
    ) -> (ThetaB, f64, bool) {
        let (cand, log_hastings) = propose_log_gaussian(current, sigma_s, rng);
        let cand_lp = self.log_posterior(&cand);
        if crate::mcmc::mh_accept(rng, cand_lp - current_lp + log_hastings) {
            (cand, cand_lp, true)
        } else {
            (*current, current_lp, false)
        }
    }

    /// Run a full chain from the grid-search initialization. Deterministic
    /// for a fixed seed.
    pub fn run_chain(&self, cfg: &McmcConfig, seed: u64) -> PosteriorChain<ThetaB> {
        let init = self.grid_init();
        let mut rng = substream(seed, "known-chain");
        metropolis_chain(
            init,
            |t| self.log_posterior(t),
            |t, r| propose_log_gaussian(t, cfg.sigma_s, r),
            cfg.samples,
            cfg.burn_in,
            &mut rng,
        )
    }
}

fn lattice((lo, hi): (f64, f64), n: usize) -> Vec<f64> {
    let step = (hi - lo) / (n as f64 - 1.0);
    (0..n).map(|i| lo + i as f64 * step).collect()
}

/// Multiplicative log-Gaussian walk on both parameters. The Hastings
/// correction for this asymmetric proposal is log(alpha'/alpha) +
/// log(beta'/beta).
pub fn propose_log_gaussian<R: Rng>(theta: &ThetaB, sigma_s: f64, rng: &mut R) -> (ThetaB, f64) {
    let za: f64 = StandardNormal.sample(rng);
    let zb: f64 = StandardNormal.sample(rng);
    let alpha = theta.alpha * (sigma_s * za).exp();
    let beta = theta.beta * (sigma_s * zb).exp();
    let cand = ThetaB { alpha, beta };
    let log_hastings = (alpha / theta.alpha).ln() + (beta / theta.beta).ln();
    (cand, log_hastings)
}

/// At most this many chain samples enter reconstruction curves; see
/// `mcmc::thin_indices`.
const CURVE_SAMPLES_MAX: usize = 2000;

/// Monte Carlo average of the Gamma density across (thinned) chain samples,
/// evaluated on `b_grid`.
pub fn reconstruction_density(chain: &PosteriorChain<ThetaB>, b_grid: &QuadGrid) -> Vec<f64> {
    let idx = crate::mcmc::thin_indices(chain.len(), CURVE_SAMPLES_MAX);
    let mut curve = vec![0.0f64; b_grid.len()];
    for &s in &idx {
        let theta = &chain.samples()[s];
        for (c, &b) in curve.iter_mut().zip(b_grid.points()) {
            *c += theta.log_pdf(b).exp();
        }
    }
    let n = idx.len() as f64;
    for c in &mut curve {
        *c /= n;
    }
    curve
}

/// The chain sample with the highest recorded log posterior.
pub fn map_density(chain: &PosteriorChain<ThetaB>) -> ThetaB {
    *chain.map_sample()
}
