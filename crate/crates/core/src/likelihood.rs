//! Fast evaluation of rectangle-rule convolved likelihoods.
//!
//! MCMC and flow training evaluate sum_n log p(x_n | signal) thousands of
//! times against a fixed dataset and grid; only the signal values on the grid
//! change between calls. `ConvEvaluator` exploits that split. Three kernel
//! representations are used, all agreeing with `quad::conv_log_likelihood`:
//!
//! - Gaussian noise in sum mode: kernel values along a row follow a two-term
//!   multiplicative recurrence (a Gaussian sampled on a uniform grid), so the
//!   inner loop needs no exp calls.
//! - Cached rows: the data-dependent kernel factor is precomputed per point
//!   in linear space (product mode, or non-Gaussian noise).
//! - Scan: direct log-sum-exp over the whole grid, used when caching would
//!   exceed the memory budget and as the exact fallback whenever a fast row
//!   underflows or its windowed sum is not provably dominant.

use crate::dist::NoiseModel;
use crate::math::LseAcc;
use crate::quad::{DataModel, QuadGrid};

/// Window half-width for the Gaussian recurrence, in noise standard
/// deviations. Terms beyond it are bounded by exp(-W^2/2) relative to the
/// in-window peak; rows where that bound is not negligible fall back to a
/// full scan.
const WINDOW_SIGMAS: f64 = 10.0;

/// Rows are cached only while n * m stays below this (f64 entries).
const MAX_CACHE_ENTRIES: usize = 24_000_000;

enum Kernel {
    GaussRecurrence { mu: f64, var: f64 },
    Cached { rows: Vec<Vec<f64>> },
    Scan,
}

pub struct ConvEvaluator {
    mode: DataModel,
    data: Vec<f64>,
    noise: NoiseModel,
    grid: QuadGrid,
    kernel: Kernel,
    /// exp(phi_m) per grid point in product mode.
    bvals: Vec<f64>,
}

impl ConvEvaluator {
    pub fn new(data: &[f64], noise: &NoiseModel, grid: &QuadGrid, mode: DataModel) -> Self {
        let bvals = match mode {
            DataModel::Product => grid.points().iter().map(|p| p.exp()).collect(),
            DataModel::Sum => Vec::new(),
        };
        let kernel = match (mode, noise.as_gaussian()) {
            (DataModel::Sum, Some((mu, var))) => Kernel::GaussRecurrence { mu, var },
            _ => {
                if data.len().saturating_mul(grid.len()) <= MAX_CACHE_ENTRIES {
                    let rows = data
                        .iter()
                        .map(|&x| {
                            grid.points()
                                .iter()
                                .enumerate()
                                .map(|(m, &p)| match mode {
                                    DataModel::Sum => noise.log_pdf(x - p).exp(),
                                    DataModel::Product => noise.log_pdf(x / bvals[m]).exp(),
                                })
                                .collect()
                        })
                        .collect();
                    Kernel::Cached { rows }
                } else {
                    Kernel::Scan
                }
            }
        };
        ConvEvaluator {
            mode,
            data: data.to_vec(),
            noise: noise.clone(),
            grid: grid.clone(),
            kernel,
            bvals,
        }
    }

    pub fn grid(&self) -> &QuadGrid {
        &self.grid
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    /// Signal abscissae as seen by the signal density: b in sum mode,
    /// b = exp(phi) in product mode.
    pub fn signal_points(&self) -> Vec<f64> {
        match self.mode {
            DataModel::Sum => self.grid.points().to_vec(),
            DataModel::Product => self.bvals.clone(),
        }
    }

    fn kernel_log(&self, x: f64, m: usize) -> f64 {
        match self.mode {
            DataModel::Sum => self.noise.log_pdf(x - self.grid.points()[m]),
            DataModel::Product => self.noise.log_pdf(x / self.bvals[m]),
        }
    }

    /// Exact per-point evaluation by direct log-sum-exp over the grid.
    fn scan_point(&self, x: f64, signal_log: &[f64]) -> f64 {
        let mut acc = LseAcc::new();
        for (m, &s) in signal_log.iter().enumerate() {
            if s == f64::NEG_INFINITY {
                continue;
            }
            acc.add(self.kernel_log(x, m) + s);
        }
        let v = acc.value();
        if v.is_finite() {
            v + self.grid.spacing().ln()
        } else {
            v
        }
    }

    /// log p(x_n | signal) for every data point.
    ///
    /// `signal_log` holds the proposal-dependent log integrand values at the
    /// grid points (signal log-density, plus any Jacobian fold the caller
    /// owns). `out` must have the data length.
    pub fn per_point_into(&self, signal_log: &[f64], out: &mut [f64]) {
        assert_eq!(signal_log.len(), self.grid.len());
        assert_eq!(out.len(), self.data.len());
        let (smax, shat) = normalize_signal(signal_log);
        if smax == f64::NEG_INFINITY {
            out.fill(f64::NEG_INFINITY);
            return;
        }
        let log_spacing = self.grid.spacing().ln();
        match &self.kernel {
            Kernel::Scan => {
                for (n, &x) in self.data.iter().enumerate() {
                    out[n] = self.scan_point(x, signal_log);
                }
            }
            Kernel::Cached { rows } => {
                for (n, &x) in self.data.iter().enumerate() {
                    let acc: f64 = rows[n].iter().zip(&shat).map(|(k, s)| k * s).sum();
                    out[n] = if acc > 1e-280 {
                        log_spacing + smax + acc.ln()
                    } else {
                        self.scan_point(x, signal_log)
                    };
                }
            }
            Kernel::GaussRecurrence { mu, var } => {
                let rec = GaussRows::new(&self.grid, *mu, *var);
                let floor = self.grid.len() as f64 * (-0.5 * WINDOW_SIGMAS * WINDOW_SIGMAS).exp() * 1e12;
                for (n, &x) in self.data.iter().enumerate() {
                    out[n] = match rec.row_sum(x, &shat) {
                        Some(acc) if acc > floor && acc > 1e-280 => {
                            log_spacing + smax + acc.ln() + rec.log_norm
                        }
                        _ => self.scan_point(x, signal_log),
                    };
                }
            }
        }
    }

    /// Sum over data points of the convolved log-likelihood.
    pub fn log_lik(&self, signal_log: &[f64]) -> f64 {
        let mut out = vec![0.0; self.data.len()];
        self.per_point_into(signal_log, &mut out);
        out.iter().sum()
    }

    /// Accumulate responsibility-weighted gradients of the per-point
    /// log-likelihoods with respect to the signal values:
    ///
    ///   out[m] += sum_n coeff[n] * v_nm,
    ///   v_nm = d log p(x_n) / d signal_log[m]
    ///        = spacing * K_nm * exp(signal_log[m]) / p(x_n).
    ///
    /// `logp` must be the output of `per_point_into` for the same signal.
    pub fn accumulate_resp(&self, signal_log: &[f64], logp: &[f64], coeff: &[f64], out: &mut [f64]) {
        assert_eq!(signal_log.len(), self.grid.len());
        assert_eq!(logp.len(), self.data.len());
        assert_eq!(coeff.len(), self.data.len());
        assert_eq!(out.len(), self.grid.len());
        let (smax, shat) = normalize_signal(signal_log);
        if smax == f64::NEG_INFINITY {
            return;
        }
        let log_spacing = self.grid.spacing().ln();
        match &self.kernel {
            Kernel::Scan => {
                for (n, &x) in self.data.iter().enumerate() {
                    if !logp[n].is_finite() {
                        continue;
                    }
                    for (m, &s) in signal_log.iter().enumerate() {
                        if s == f64::NEG_INFINITY {
                            continue;
                        }
                        let v = (log_spacing + self.kernel_log(x, m) + s - logp[n]).exp();
                        out[m] += coeff[n] * v;
                    }
                }
            }
            Kernel::Cached { rows } => {
                for (n, row) in rows.iter().enumerate() {
                    if !logp[n].is_finite() {
                        continue;
                    }
                    let scale = coeff[n] * (log_spacing + smax - logp[n]).exp();
                    for ((o, k), s) in out.iter_mut().zip(row).zip(&shat) {
                        *o += scale * k * s;
                    }
                }
            }
            Kernel::GaussRecurrence { mu, var } => {
                let rec = GaussRows::new(&self.grid, *mu, *var);
                for (n, &x) in self.data.iter().enumerate() {
                    if !logp[n].is_finite() {
                        continue;
                    }
                    let scale = coeff[n] * (log_spacing + smax - logp[n] + rec.log_norm).exp();
                    if !rec.row_accumulate(x, &shat, scale, out) {
                        // exact per-row fallback
                        for (m, &s) in signal_log.iter().enumerate() {
                            if s == f64::NEG_INFINITY {
                                continue;
                            }
                            let v = (log_spacing + self.kernel_log(x, m) + s - logp[n]).exp();
                            out[m] += coeff[n] * v;
                        }
                    }
                }
            }
        }
    }
}

fn normalize_signal(signal_log: &[f64]) -> (f64, Vec<f64>) {
    let mut smax = f64::NEG_INFINITY;
    for &s in signal_log {
        if s > smax {
            smax = s;
        }
    }
    if smax == f64::NEG_INFINITY || smax.is_nan() {
        return (f64::NEG_INFINITY, Vec::new());
    }
    let shat = signal_log.iter().map(|&s| (s - smax).exp()).collect();
    (smax, shat)
}

/// Gaussian kernel rows on a uniform grid, generated by the recurrence
/// K_{m+1} = K_m * rho_m * d, rho_{m+1} = rho_m * d^2 with
/// d = exp(-spacing^2 / (2 var)), rho_m = exp(spacing * t_m / var),
/// t_m = (x - mu - lo) - m * spacing. Exact up to rounding drift of order
/// (window length) * eps.
struct GaussRows {
    lo: f64,
    spacing: f64,
    m_len: usize,
    var: f64,
    mu: f64,
    half_width: f64,
    d: f64,
    w: f64,
    log_norm: f64,
}

impl GaussRows {
    fn new(grid: &QuadGrid, mu: f64, var: f64) -> Self {
        let spacing = grid.spacing();
        let d = (-spacing * spacing / (2.0 * var)).exp();
        GaussRows {
            lo: grid.lo(),
            spacing,
            m_len: grid.len(),
            var,
            mu,
            half_width: WINDOW_SIGMAS * var.sqrt(),
            d,
            w: d * d,
            log_norm: -0.5 * (crate::math::LOG_2PI + var.ln()),
        }
    }

    fn window(&self, x: f64) -> Option<(usize, usize)> {
        let c = x - self.mu - self.lo;
        let m_lo = ((c - self.half_width) / self.spacing).ceil().max(0.0);
        let m_hi = ((c + self.half_width) / self.spacing).floor().min(self.m_len as f64 - 1.0);
        if m_lo > m_hi || m_hi < 0.0 || m_lo >= self.m_len as f64 {
            None
        } else {
            Some((m_lo as usize, m_hi as usize))
        }
    }

    fn row_sum(&self, x: f64, shat: &[f64]) -> Option<f64> {
        let (m0, m1) = self.window(x)?;
        let c = x - self.mu - self.lo;
        let t0 = c - m0 as f64 * self.spacing;
        let mut k = (-t0 * t0 / (2.0 * self.var)).exp();
        let mut rho = (self.spacing * t0 / self.var).exp();
        let mut acc = 0.0;
        for &s in &shat[m0..=m1] {
            acc += k * s;
            k *= rho * self.d;
            rho *= self.w;
        }
        Some(acc)
    }

    fn row_accumulate(&self, x: f64, shat: &[f64], scale: f64, out: &mut [f64]) -> bool {
        let Some((m0, m1)) = self.window(x) else {
            return false;
        };
        let c = x - self.mu - self.lo;
        let t0 = c - m0 as f64 * self.spacing;
        let mut k = (-t0 * t0 / (2.0 * self.var)).exp();
        let mut rho = (self.spacing * t0 / self.var).exp();
        for (o, &s) in out[m0..=m1].iter_mut().zip(&shat[m0..=m1]) {
            *o += scale * k * s;
            k *= rho * self.d;
            rho *= self.w;
        }
        true
    }
}
