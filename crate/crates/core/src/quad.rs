//! Equally spaced quadrature grids and rectangle-rule evaluation of the
//! convolved likelihoods for the sum and product data models.
//!
//! Product-mode integrals are always taken over log b: with phi = log b the
//! density of x = a*b is int dphi p_A(x / e^phi) p_B(e^phi), which is the
//! Mellin convolution rewritten without the 1/b weight.

use serde::{Deserialize, Serialize};

use crate::dist::NoiseModel;
use crate::error::{DeconvError, Result};
use crate::math::LseAcc;

/// How observations combine signal and noise.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DataModel {
    Sum,
    Product,
}

impl std::fmt::Display for DataModel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            DataModel::Sum => write!(f, "sum"),
            DataModel::Product => write!(f, "product"),
        }
    }
}

/// Default number of integration points for the MCMC likelihoods.
pub const M_MCMC_DEFAULT: usize = 20_000;
/// Default number of integration points for the flow training loss.
pub const M_NF_DEFAULT: usize = 2_000;

/// Endpoint-inclusive equally spaced abscissae.
///
/// In product mode the stored points are values of log b.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadGrid {
    lo: f64,
    hi: f64,
    points: Vec<f64>,
    spacing: f64,
}

impl QuadGrid {
    pub fn lo(&self) -> f64 {
        self.lo
    }

    pub fn hi(&self) -> f64 {
        self.hi
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn points(&self) -> &[f64] {
        &self.points
    }

    pub fn spacing(&self) -> f64 {
        self.spacing
    }
}

/// Build an endpoint-inclusive grid with spacing (hi - lo) / (m - 1).
pub fn build_grid(lo: f64, hi: f64, m: usize) -> Result<QuadGrid> {
    if !(lo.is_finite() && hi.is_finite()) {
        return Err(DeconvError::DegenerateRange(format!("non-finite range [{lo}, {hi}]")));
    }
    if hi <= lo {
        return Err(DeconvError::DegenerateRange(format!("hi = {hi} <= lo = {lo}")));
    }
    if m < 2 {
        return Err(DeconvError::InvalidParameter(format!("grid needs m >= 2, got {m}")));
    }
    let spacing = (hi - lo) / (m as f64 - 1.0);
    let mut points: Vec<f64> = (0..m).map(|i| lo + i as f64 * spacing).collect();
    points[m - 1] = hi;
    Ok(QuadGrid { lo, hi, points, spacing })
}

/// Integration grid for the known-model MCMC likelihood.
///
/// Sum mode: b in [0.001, max x - mean_a / 2]. Product mode: log b in
/// [min log x - <log a> - 3 s_log_a, max log x + 3 s_log_a], with log-noise
/// moments estimated by sampling.
pub fn known_model_grid(
    dataset: &[f64],
    noise: &NoiseModel,
    mode: DataModel,
    m: usize,
) -> Result<QuadGrid> {
    if dataset.is_empty() {
        return Err(DeconvError::InvalidParameter("empty dataset".into()));
    }
    match mode {
        DataModel::Sum => {
            let max_x = dataset.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let lo = 0.001;
            let hi = max_x - noise.mean() / 2.0;
            build_grid(lo, hi, m)
        }
        DataModel::Product => {
            if let Some(&bad) = dataset.iter().find(|x| **x <= 0.0) {
                return Err(DeconvError::NonPositiveData(format!(
                    "product mode requires x > 0, found {bad}"
                )));
            }
            let log_noise = if noise.is_log_space() { noise.clone() } else { noise.log_space()? };
            let logs: Vec<f64> = dataset.iter().map(|x| x.ln()).collect();
            let min_lx = logs.iter().cloned().fold(f64::INFINITY, f64::min);
            let max_lx = logs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let lo = min_lx - log_noise.mean() - 3.0 * log_noise.std();
            let hi = max_lx + 3.0 * log_noise.std();
            build_grid(lo, hi, m)
        }
    }
}

/// Integration grid for the flow training loss: data range widened by three
/// noise standard deviations on each side, after subtracting the noise mean.
///
/// For product-mode training, call this with log-transformed data and the
/// log-space noise model; the formula is unchanged.
pub fn nf_grid(dataset: &[f64], noise: &NoiseModel, m: usize) -> Result<QuadGrid> {
    if dataset.is_empty() {
        return Err(DeconvError::InvalidParameter("empty dataset".into()));
    }
    let min_x = dataset.iter().cloned().fold(f64::INFINITY, f64::min);
    let max_x = dataset.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let lo = min_x - noise.mean() - 3.0 * noise.std();
    let hi = max_x - noise.mean() + 3.0 * noise.std();
    build_grid(lo, hi, m)
}

/// Rectangle-rule convolved log-likelihood of one observation.
///
/// Sum mode: lse_m(log db + log p_A(x - b_m) + signal_log_pdf(b_m)).
/// Product mode: the grid holds phi = log b and the signal is a density over
/// b itself: lse_m(log dphi + log p_A(x / e^phi_m) + signal_log_pdf(e^phi_m)).
/// Signals given as densities over log b fold their own 1/b Jacobian into the
/// closure (see `bayes_gmm`).
///
/// Returns -inf when every term underflows.
pub fn conv_log_likelihood<F: Fn(f64) -> f64>(
    x: f64,
    noise: &NoiseModel,
    signal_log_pdf: F,
    grid: &QuadGrid,
    mode: DataModel,
) -> f64 {
    let log_spacing = grid.spacing().ln();
    let mut acc = LseAcc::new();
    match mode {
        DataModel::Sum => {
            for &b in grid.points() {
                acc.add(noise.log_pdf(x - b) + signal_log_pdf(b));
            }
        }
        DataModel::Product => {
            for &phi in grid.points() {
                let b = phi.exp();
                acc.add(noise.log_pdf(x / b) + signal_log_pdf(b));
            }
        }
    }
    let v = acc.value();
    if v.is_finite() {
        v + log_spacing
    } else {
        v
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dist::{NoiseModel, ScalarDist};
    use crate::math::LOG_2PI;

    #[test]
    fn build_grid_examples() {
        let g = build_grid(0.0, 1.0, 5).unwrap();
        assert_eq!(g.points(), &[0.0, 0.25, 0.5, 0.75, 1.0]);
        assert_eq!(g.spacing(), 0.25);

        let g = build_grid(0.001, 9.0, 3).unwrap();
        assert!((g.points()[1] - 4.5005).abs() < 1e-12);
        assert_eq!(g.points()[2], 9.0);

        assert!(matches!(build_grid(1.0, 1.0, 10), Err(DeconvError::DegenerateRange(_))));
    }

    #[test]
    fn grid_spacing_uniform() {
        let g = build_grid(-3.2, 17.9, 4001).unwrap();
        let d = g.spacing();
        for w in g.points().windows(2) {
            assert!(((w[1] - w[0]) - d).abs() <= 1e-12 * d.abs());
        }
        assert_eq!(g.points()[0], -3.2);
        assert_eq!(*g.points().last().unwrap(), 17.9);
    }

    #[test]
    fn known_grid_sum_endpoints() {
        let noise = NoiseModel::analytic(ScalarDist::gaussian(10.0, 1.0).unwrap()).unwrap();
        let g = known_model_grid(&[12.0, 25.0], &noise, DataModel::Sum, 100).unwrap();
        assert_eq!(g.lo(), 0.001);
        assert_eq!(g.hi(), 20.0);
    }

    #[test]
    fn known_grid_sum_degenerate() {
        let noise = NoiseModel::analytic(ScalarDist::gaussian(30.0, 1.0).unwrap()).unwrap();
        let err = known_model_grid(&[5.0, 10.0], &noise, DataModel::Sum, 100).unwrap_err();
        assert!(matches!(err, DeconvError::DegenerateRange(_)));
    }

    #[test]
    fn known_grid_product_rejects_nonpositive_data() {
        let noise = NoiseModel::analytic(ScalarDist::gaussian(10.0, 1.0).unwrap()).unwrap();
        let err = known_model_grid(&[3.0, -0.5], &noise, DataModel::Product, 100).unwrap_err();
        assert!(matches!(err, DeconvError::NonPositiveData(_)));
    }

    #[test]
    fn nf_grid_examples() {
        let noise = NoiseModel::analytic(ScalarDist::gaussian(10.0, 1.0).unwrap()).unwrap();
        let g = nf_grid(&[15.0, 25.0], &noise, 2000).unwrap();
        assert_eq!(g.lo(), 2.0);
        assert_eq!(g.hi(), 18.0);
        assert_eq!(g.len(), 2000);

        let g = nf_grid(&[19.0], &noise, M_NF_DEFAULT).unwrap();
        assert_eq!(g.lo(), 6.0);
        assert_eq!(g.hi(), 12.0);
        assert_eq!(g.len(), 2000);
    }

    #[test]
    fn sum_conv_gaussian_closure() {
        // Gaussian noise + Gaussian signal convolve to a Gaussian with summed
        // means and variances.
        let noise = NoiseModel::analytic(ScalarDist::gaussian(10.0, 1.0).unwrap()).unwrap();
        let signal = ScalarDist::gaussian(0.0, 1.0).unwrap();
        let grid = build_grid(-12.0, 12.0, 20_000).unwrap();
        let got = conv_log_likelihood(10.0, &noise, |b| signal.log_pdf(b), &grid, DataModel::Sum);
        let want = -0.5 * (LOG_2PI + 2.0f64.ln()); // log N(10; 10, 2)
        assert!((got - want).abs() < 1e-6, "got {got}, want {want}");
        assert!((want - (-1.265_512_123_484_645_4)).abs() < 1e-12);
    }

    #[test]
    fn conv_underflow_gives_neg_inf() {
        // Every integrand term carries zero signal density: the result is
        // -inf, not an error or NaN.
        let noise = NoiseModel::analytic(ScalarDist::gaussian(0.0, 1.0).unwrap()).unwrap();
        let signal = ScalarDist::gamma(2.0, 1.0).unwrap();
        let grid = build_grid(-5.0, -1.0, 101).unwrap();
        let got = conv_log_likelihood(-2.0, &noise, |b| signal.log_pdf(b), &grid, DataModel::Sum);
        assert_eq!(got, f64::NEG_INFINITY);
    }

    #[test]
    fn lse_stays_finite_within_700_nats() {
        let noise = NoiseModel::analytic(ScalarDist::gaussian(0.0, 1.0).unwrap()).unwrap();
        // Signal is a point-like Gaussian far away: most terms underflow, but
        // the peak term stays within range.
        let signal = ScalarDist::gaussian(30.0, 1e-6).unwrap();
        let grid = build_grid(-40.0, 40.0, 20_001).unwrap();
        let got = conv_log_likelihood(0.0, &noise, |b| signal.log_pdf(b), &grid, DataModel::Sum);
        assert!(got.is_finite());
    }
}
