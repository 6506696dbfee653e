//! Scalar probability distributions: log-densities, samplers, moments, and
//! the log-space change of variables used by the product data model.

use rand::Rng;
use rand_distr::Distribution;
use serde::{Deserialize, Serialize};
use statrs::function::erf::erfc;
use statrs::function::gamma::ln_gamma;

use crate::error::{DeconvError, Result};
use crate::math::{logsumexp, mean_and_var, LOG_2PI};
use crate::rng::{substream, Stream};

/// Number of draws used for sampled moments, after the convention that
/// moment estimates of transformed noise come from 10000 draws.
pub const MOMENT_DRAWS: usize = 10_000;

/// Dedicated seed for sampled-moment estimation. Documented so that grid
/// limits derived from sampled moments are reproducible across runs.
pub const MOMENT_SEED: u64 = 0x6d6f_6d65_6e74; // "moment"

/// A scalar distribution with validated parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ScalarDist {
    Gaussian { mean: f64, variance: f64 },
    Gamma { shape: f64, rate: f64 },
    LogGaussian { log_mean: f64, log_variance: f64 },
}

impl ScalarDist {
    pub fn gaussian(mean: f64, variance: f64) -> Result<Self> {
        let d = ScalarDist::Gaussian { mean, variance };
        d.validate()?;
        Ok(d)
    }

    pub fn gamma(shape: f64, rate: f64) -> Result<Self> {
        let d = ScalarDist::Gamma { shape, rate };
        d.validate()?;
        Ok(d)
    }

    pub fn log_gaussian(log_mean: f64, log_variance: f64) -> Result<Self> {
        let d = ScalarDist::LogGaussian { log_mean, log_variance };
        d.validate()?;
        Ok(d)
    }

    /// Parameter constraints. Deserialized values must pass through here.
    pub fn validate(&self) -> Result<()> {
        let ok = match *self {
            ScalarDist::Gaussian { mean, variance } => mean.is_finite() && variance.is_finite() && variance > 0.0,
            ScalarDist::Gamma { shape, rate } => shape.is_finite() && rate.is_finite() && shape > 0.0 && rate > 0.0,
            ScalarDist::LogGaussian { log_mean, log_variance } => {
                log_mean.is_finite() && log_variance.is_finite() && log_variance > 0.0
            }
        };
        if ok {
            Ok(())
        } else {
            Err(DeconvError::InvalidParameter(format!("{self:?}")))
        }
    }

    /// Exact log-density; `-inf` off the support, never NaN for finite input.
    pub fn log_pdf(&self, x: f64) -> f64 {
        match *self {
            ScalarDist::Gaussian { mean, variance } => {
                let d = x - mean;
                -0.5 * (LOG_2PI + variance.ln()) - d * d / (2.0 * variance)
            }
            ScalarDist::Gamma { shape, rate } => {
                if x <= 0.0 {
                    return f64::NEG_INFINITY;
                }
                shape * rate.ln() - ln_gamma(shape) + (shape - 1.0) * x.ln() - rate * x
            }
            ScalarDist::LogGaussian { log_mean, log_variance } => {
                if x <= 0.0 {
                    return f64::NEG_INFINITY;
                }
                let lx = x.ln();
                let d = lx - log_mean;
                -lx - 0.5 * (LOG_2PI + log_variance.ln()) - d * d / (2.0 * log_variance)
            }
        }
    }

    pub fn mean(&self) -> f64 {
        match *self {
            ScalarDist::Gaussian { mean, .. } => mean,
            ScalarDist::Gamma { shape, rate } => shape / rate,
            ScalarDist::LogGaussian { log_mean, log_variance } => (log_mean + 0.5 * log_variance).exp(),
        }
    }

    pub fn variance(&self) -> f64 {
        match *self {
            ScalarDist::Gaussian { variance, .. } => variance,
            ScalarDist::Gamma { shape, rate } => shape / (rate * rate),
            ScalarDist::LogGaussian { log_mean, log_variance } => {
                (log_variance.exp() - 1.0) * (2.0 * log_mean + log_variance).exp()
            }
        }
    }

    /// P(X <= x), used for support checks.
    pub fn mass_below(&self, x: f64) -> f64 {
        match *self {
            ScalarDist::Gaussian { mean, variance } => {
                0.5 * erfc((mean - x) / (2.0 * variance).sqrt())
            }
            ScalarDist::Gamma { .. } | ScalarDist::LogGaussian { .. } => {
                if x <= 0.0 {
                    0.0
                } else {
                    // Only the x <= 0 case is needed by callers; a full CDF
                    // for positive-support distributions lives in `eval`.
                    unimplemented!("mass_below for positive x of positive-support dist")
                }
            }
        }
    }

    pub fn sample_one<R: Rng>(&self, rng: &mut R) -> f64 {
        match *self {
            ScalarDist::Gaussian { mean, variance } => {
                rand_distr::Normal::new(mean, variance.sqrt()).expect("validated").sample(rng)
            }
            ScalarDist::Gamma { shape, rate } => {
                rand_distr::Gamma::new(shape, 1.0 / rate).expect("validated").sample(rng)
            }
            ScalarDist::LogGaussian { log_mean, log_variance } => {
                rand_distr::Normal::new(log_mean, log_variance.sqrt())
                    .expect("validated")
                    .sample(rng)
                    .exp()
            }
        }
    }

    pub fn sample_n<R: Rng>(&self, rng: &mut R, n: usize) -> Vec<f64> {
        assert!(n >= 1);
        (0..n).map(|_| self.sample_one(rng)).collect()
    }
}

/// How a noise model's moments were obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MomentSource {
    Analytic,
    Sampled,
}

#[derive(Debug, Clone, PartialEq)]
enum NoiseRepr {
    /// The noise variable a itself.
    Direct(ScalarDist),
    /// The variable is l = log a with a drawn from the stored distribution;
    /// density p(l) = e^l * p_a(e^l).
    LogSpace(ScalarDist),
}

/// The known distribution p_A together with its first two moments.
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseModel {
    repr: NoiseRepr,
    mean: f64,
    variance: f64,
    moment_source: MomentSource,
}

impl NoiseModel {
    /// Noise model with closed-form moments.
    pub fn analytic(dist: ScalarDist) -> Result<Self> {
        dist.validate()?;
        let mean = dist.mean();
        let variance = dist.variance();
        Ok(NoiseModel {
            repr: NoiseRepr::Direct(dist),
            mean,
            variance,
            moment_source: MomentSource::Analytic,
        })
    }

    /// Noise model with moments estimated from `MOMENT_DRAWS` seeded draws.
    pub fn sampled(dist: ScalarDist) -> Result<Self> {
        Self::sampled_with(dist, MOMENT_DRAWS)
    }

    /// As `sampled`, with a caller-chosen draw count.
    pub fn sampled_with(dist: ScalarDist, draws: usize) -> Result<Self> {
        dist.validate()?;
        let mut rng = substream(MOMENT_SEED, "noise-moments");
        let xs = dist.sample_n(&mut rng, draws);
        let (mean, variance) = mean_and_var(&xs);
        Ok(NoiseModel {
            repr: NoiseRepr::Direct(dist),
            mean,
            variance,
            moment_source: MomentSource::Sampled,
        })
    }

    pub fn mean(&self) -> f64 {
        self.mean
    }

    pub fn variance(&self) -> f64 {
        self.variance
    }

    pub fn std(&self) -> f64 {
        self.variance.sqrt()
    }

    pub fn moment_source(&self) -> MomentSource {
        self.moment_source
    }

    /// The underlying distribution over a (present also for log-space models,
    /// where the modelled variable is log a).
    pub fn dist(&self) -> &ScalarDist {
        match &self.repr {
            NoiseRepr::Direct(d) | NoiseRepr::LogSpace(d) => d,
        }
    }

    pub fn is_log_space(&self) -> bool {
        matches!(self.repr, NoiseRepr::LogSpace(_))
    }

    /// True when the direct noise is Gaussian (enables analytic convolution
    /// and the fast likelihood kernel).
    pub fn as_gaussian(&self) -> Option<(f64, f64)> {
        match &self.repr {
            NoiseRepr::Direct(ScalarDist::Gaussian { mean, variance }) => Some((*mean, *variance)),
            _ => None,
        }
    }

    /// Log-density of the modelled variable (a, or log a for log-space models).
    pub fn log_pdf(&self, v: f64) -> f64 {
        match &self.repr {
            NoiseRepr::Direct(d) => d.log_pdf(v),
            NoiseRepr::LogSpace(d) => d.log_pdf(v.exp()) + v,
        }
    }

    pub fn sample_one<R: Rng>(&self, rng: &mut R) -> f64 {
        match &self.repr {
            NoiseRepr::Direct(d) => d.sample_one(rng),
            NoiseRepr::LogSpace(d) => d.sample_one(rng).ln(),
        }
    }

    /// The noise model over l = log a, with sampled moments (10000 draws,
    /// log-transformed). Refused when a has non-negligible mass at a <= 0.
    pub fn log_space(&self) -> Result<NoiseModel> {
        self.log_space_with(MOMENT_DRAWS)
    }

    pub fn log_space_with(&self, draws: usize) -> Result<NoiseModel> {
        let dist = match &self.repr {
            NoiseRepr::Direct(d) => d.clone(),
            NoiseRepr::LogSpace(_) => {
                return Err(DeconvError::InvalidParameter(
                    "noise model is already in log space".into(),
                ))
            }
        };
        let mass = dist.mass_below(0.0);
        if mass > 1e-9 {
            return Err(DeconvError::NonPositiveSupport(format!(
                "P(a <= 0) = {mass:.3e} exceeds 1e-9; product mode needs positive noise"
            )));
        }
        let mut rng = substream(MOMENT_SEED, "log-noise-moments");
        let ls: Vec<f64> = (0..draws).map(|_| dist.sample_one(&mut rng).ln()).collect();
        let (mean, variance) = mean_and_var(&ls);
        Ok(NoiseModel {
            repr: NoiseRepr::LogSpace(dist),
            mean,
            variance,
            moment_source: MomentSource::Sampled,
        })
    }
}

/// Parameters of a truncated Gaussian mixture: means, variances, weights.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PsiB {
    means: Vec<f64>,
    variances: Vec<f64>,
    weights: Vec<f64>,
}

impl PsiB {
    pub fn new(means: Vec<f64>, variances: Vec<f64>, weights: Vec<f64>) -> Result<Self> {
        if means.is_empty() || means.len() != variances.len() || means.len() != weights.len() {
            return Err(DeconvError::InvalidParameter(
                "mixture parameter vectors must be non-empty and of equal length".into(),
            ));
        }
        if means.iter().any(|m| !m.is_finite()) {
            return Err(DeconvError::InvalidParameter("non-finite mixture mean".into()));
        }
        if variances.iter().any(|v| !v.is_finite() || *v <= 0.0) {
            return Err(DeconvError::InvalidParameter("mixture variances must be positive".into()));
        }
        if weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(DeconvError::InvalidParameter("mixture weights must be nonnegative".into()));
        }
        let sum: f64 = weights.iter().sum();
        if (sum - 1.0).abs() > 1e-12 {
            return Err(DeconvError::InvalidParameter(format!(
                "mixture weights sum to {sum}, expected 1 within 1e-12"
            )));
        }
        Ok(PsiB { means, variances, weights })
    }

    pub fn component_count(&self) -> usize {
        self.means.len()
    }

    pub fn means(&self) -> &[f64] {
        &self.means
    }

    pub fn variances(&self) -> &[f64] {
        &self.variances
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// log sum_i rho_i N(b; mu_i, var_i), via log-sum-exp.
    pub fn mixture_log_pdf(&self, b: f64) -> f64 {
        let terms: Vec<f64> = self
            .means
            .iter()
            .zip(&self.variances)
            .zip(&self.weights)
            .map(|((&m, &v), &w)| {
                if w == 0.0 {
                    f64::NEG_INFINITY
                } else {
                    let d = b - m;
                    w.ln() - 0.5 * (LOG_2PI + v.ln()) - d * d / (2.0 * v)
                }
            })
            .collect();
        logsumexp(&terms)
    }
}

/// Draw Dirichlet weights via the standard Gamma-normalization construction.
pub fn dirichlet_sample<R: Rng>(concentrations: &[f64], rng: &mut R) -> Vec<f64> {
    assert!(!concentrations.is_empty());
    assert!(
        concentrations.iter().all(|c| c.is_finite() && *c > 0.0),
        "Dirichlet concentrations must be positive"
    );
    let mut draws: Vec<f64> = concentrations
        .iter()
        .map(|&c| rand_distr::Gamma::new(c, 1.0).expect("positive shape").sample(rng))
        .collect();
    let sum: f64 = draws.iter().sum();
    assert!(sum > 0.0, "Dirichlet draw collapsed to zero; concentrations too small");
    for d in &mut draws {
        *d /= sum;
    }
    draws
}

/// Deterministic stream for a distribution draw, exposed for tests.
pub fn seeded_stream(seed: u64) -> Stream {
    substream(seed, "dist")
}
