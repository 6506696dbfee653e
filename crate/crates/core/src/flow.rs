//! A scalar normalizing flow: elementwise monotone rational-quadratic spline
//! layers composed with an affine head, exposing exact log-density via the
//! change of variables and reverse-mode gradients of that log-density.
//!
//! Parameters are stored unconstrained. Bin widths and heights pass through a
//! softmax onto the spline interval, knot derivatives through a softplus;
//! boundary derivatives are fixed at 1 so each layer continues as the
//! identity outside [-B, B] with a continuous first derivative. The head
//! scale is stored as log(beta), keeping the composite map strictly
//! increasing for every parameter value.
//!
//! All spline arithmetic is generic over [`Scalar`], so the same code path
//! serves plain evaluation (`f64`) and gradient evaluation ([`Var`]).

use serde::{Deserialize, Serialize};

use crate::autodiff::{Scalar, Tape, Var};
use crate::error::{DeconvError, Result};
use crate::math::{softplus_inv, LOG_2PI};

/// Structural hyperparameters of the spline stack.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FlowHyper {
    /// Number of spline layers.
    pub layers: usize,
    /// Bins per layer.
    pub bins: usize,
    /// Half-width B of the spline interval; identity tails outside [-B, B].
    pub tail_bound: f64,
}

impl Default for FlowHyper {
    fn default() -> Self {
        FlowHyper { layers: 4, bins: 8, tail_bound: 4.0 }
    }
}

impl FlowHyper {
    /// Unconstrained parameters per layer: widths, heights, interior knot
    /// derivatives.
    pub fn params_per_layer(&self) -> usize {
        3 * self.bins - 1
    }

    /// Total unconstrained parameter count including the affine head.
    pub fn param_count(&self) -> usize {
        self.layers * self.params_per_layer() + 2
    }
}

const CHECKPOINT_VERSION: u32 = 1;

/// The invertible transform stack with its unconstrained parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlowModel {
    version: u32,
    hyper: FlowHyper,
    /// Flat layout: per layer [widths(K), heights(K), derivs(K-1)], then
    /// alpha, log(beta).
    params: Vec<f64>,
}

impl FlowModel {
    /// A model whose spline layers are exactly the identity, with head
    /// b = alpha + beta * y. Its density is Gaussian(alpha, beta^2).
    pub fn identity(hyper: FlowHyper, alpha: f64, beta: f64) -> Result<Self> {
        if hyper.layers == 0 || hyper.bins < 2 || hyper.tail_bound <= 0.0 {
            return Err(DeconvError::InvalidParameter(format!("bad flow hyperparameters {hyper:?}")));
        }
        if !(beta.is_finite() && beta > 0.0) || !alpha.is_finite() {
            return Err(DeconvError::InvalidParameter(format!(
                "affine head needs finite alpha and beta > 0, got ({alpha}, {beta})"
            )));
        }
        let ppl = hyper.params_per_layer();
        let mut params = vec![0.0; hyper.layers * ppl + 2];
        let deriv_identity = softplus_inv(1.0);
        for l in 0..hyper.layers {
            let d0 = l * ppl + 2 * hyper.bins;
            for d in &mut params[d0..d0 + hyper.bins - 1] {
                *d = deriv_identity;
            }
        }
        let n = params.len();
        params[n - 2] = alpha;
        params[n - 1] = beta.ln();
        Ok(FlowModel { version: CHECKPOINT_VERSION, hyper, params })
    }

    pub fn hyper(&self) -> &FlowHyper {
        &self.hyper
    }

    pub fn alpha(&self) -> f64 {
        self.params[self.params.len() - 2]
    }

    pub fn beta(&self) -> f64 {
        self.params[self.params.len() - 1].exp()
    }

    pub fn param_count(&self) -> usize {
        self.params.len()
    }

    pub fn flat_params(&self) -> &[f64] {
        &self.params
    }

    pub fn set_flat_params(&mut self, params: &[f64]) {
        assert_eq!(params.len(), self.params.len());
        self.params.copy_from_slice(params);
    }

    /// Constrain parameters once for repeated plain evaluation.
    pub fn prepare(&self) -> PreparedFlow {
        PreparedFlow { knots: build_knots::<f64>(&self.hyper, &self.params) }
    }

    pub fn forward(&self, z: f64) -> (f64, f64) {
        self.prepare().forward(z)
    }

    pub fn inverse(&self, b: f64) -> (f64, f64) {
        self.prepare().inverse(b)
    }

    pub fn log_pdf(&self, b: f64) -> f64 {
        self.prepare().log_pdf(b)
    }

    /// Gradient with respect to every unconstrained parameter of
    /// sum_i weights[i] * log_pdf(points[i]).
    pub fn weighted_log_pdf_grad(&self, points: &[f64], weights: &[f64]) -> Vec<f64> {
        assert_eq!(points.len(), weights.len());
        let tape = Tape::with_capacity(points.len() * 64 * self.hyper.layers + 4096);
        let leaves: Vec<Var> = self.params.iter().map(|&v| tape.leaf(v)).collect();
        let knots = build_knots::<Var>(&self.hyper, &leaves);
        let mut total: Option<Var> = None;
        for (&b, &w) in points.iter().zip(weights) {
            if w == 0.0 {
                continue;
            }
            let lp = log_pdf_impl(&knots, tape.leaf(b));
            let term = lp * w;
            total = Some(match total {
                None => term,
                Some(t) => t + term,
            });
        }
        match total {
            None => vec![0.0; self.params.len()],
            Some(t) => {
                let adj = tape.backward(t);
                leaves.iter().map(|v| adj.wrt(*v)).collect()
            }
        }
    }

    /// Reverse-mode gradient of sum_n log_pdf(b_n) over the batch.
    pub fn grad_log_pdf(&self, batch: &[f64]) -> Vec<f64> {
        self.weighted_log_pdf_grad(batch, &vec![1.0; batch.len()])
    }

    /// Versioned checkpoint. serde_json prints floats in shortest round-trip
    /// form, so save/load is bit-exact.
    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("flow model serializes")
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let model: FlowModel = serde_json::from_str(s)
            .map_err(|e| DeconvError::InvalidParameter(format!("flow checkpoint: {e}")))?;
        if model.version != CHECKPOINT_VERSION {
            return Err(DeconvError::InvalidParameter(format!(
                "flow checkpoint version {} unsupported",
                model.version
            )));
        }
        if model.params.len() != model.hyper.param_count() {
            return Err(DeconvError::InvalidParameter(
                "flow checkpoint parameter count mismatch".into(),
            ));
        }
        if model.params.iter().any(|p| !p.is_finite()) {
            return Err(DeconvError::InvalidParameter(
                "flow checkpoint has non-finite parameters".into(),
            ));
        }
        Ok(model)
    }
}

/// Constrained knots of one layer: K+1 x-positions, y-positions, and
/// derivatives (boundary derivatives pinned to 1).
struct Knots<S> {
    xs: Vec<S>,
    ys: Vec<S>,
    ds: Vec<S>,
}

struct FlowKnots<S> {
    layers: Vec<Knots<S>>,
    alpha: S,
    log_beta: S,
    tail: f64,
}

/// Evaluation-ready constrained parameters.
pub struct PreparedFlow {
    knots: FlowKnots<f64>,
}

impl PreparedFlow {
    /// Apply the spline layers and affine head; returns (b, log det of the
    /// forward derivative).
    pub fn forward(&self, z: f64) -> (f64, f64) {
        forward_impl(&self.knots, z)
    }

    /// Exact algebraic inverse; log det is the negative of forward's at the
    /// corresponding z.
    pub fn inverse(&self, b: f64) -> (f64, f64) {
        inverse_impl(&self.knots, b)
    }

    /// log N(z; 0, 1) + log det of the inverse map at b, with z = inverse(b).
    pub fn log_pdf(&self, b: f64) -> f64 {
        log_pdf_impl(&self.knots, b)
    }
}

fn one_minus<S: Scalar>(x: S) -> S {
    -(x - 1.0)
}

/// Softmax onto [-tail, tail] as cumulative knot positions.
fn knot_positions<S: Scalar>(raw: &[S], tail: f64) -> Vec<S> {
    let c = raw.iter().map(|v| v.value()).fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<S> = raw.iter().map(|&v| (v - c).exp()).collect();
    let mut total = exps[0];
    for &e in &exps[1..] {
        total = total + e;
    }
    let mut out = Vec::with_capacity(raw.len() + 1);
    out.push(exps[0].constant(-tail));
    let mut run = exps[0];
    for k in 0..raw.len() {
        if k > 0 {
            run = run + exps[k];
        }
        out.push(run / total * (2.0 * tail) - tail);
    }
    out
}

fn build_knots<S: Scalar>(hyper: &FlowHyper, flat: &[S]) -> FlowKnots<S> {
    let k = hyper.bins;
    let ppl = hyper.params_per_layer();
    assert_eq!(flat.len(), hyper.param_count());
    let mut layers = Vec::with_capacity(hyper.layers);
    for l in 0..hyper.layers {
        let base = l * ppl;
        let widths = &flat[base..base + k];
        let heights = &flat[base + k..base + 2 * k];
        let derivs = &flat[base + 2 * k..base + 3 * k - 1];
        let xs = knot_positions(widths, hyper.tail_bound);
        let ys = knot_positions(heights, hyper.tail_bound);
        let mut ds = Vec::with_capacity(k + 1);
        ds.push(flat[0].constant(1.0));
        for &d in derivs {
            ds.push(d.softplus());
        }
        ds.push(flat[0].constant(1.0));
        layers.push(Knots { xs, ys, ds });
    }
    FlowKnots {
        layers,
        alpha: flat[flat.len() - 2],
        log_beta: flat[flat.len() - 1],
        tail: hyper.tail_bound,
    }
}

fn find_bin<S: Scalar>(knots: &[S], v: f64) -> usize {
    // K is small; a linear scan is cheap and branch-predictable.
    let last = knots.len() - 2;
    for k in 0..last {
        if v < knots[k + 1].value() {
            return k;
        }
    }
    last
}

/// Forward rational-quadratic spline within one layer. Returns the image and
/// the log slope (None outside the interval, where the layer is identity).
fn spline_forward<S: Scalar>(layer: &Knots<S>, x: S, tail: f64) -> (S, Option<S>) {
    let v = x.value();
    if !(-tail..=tail).contains(&v) {
        return (x, None);
    }
    let k = find_bin(&layer.xs, v);
    let (x0, x1) = (layer.xs[k], layer.xs[k + 1]);
    let (y0, y1) = (layer.ys[k], layer.ys[k + 1]);
    let (d0, d1) = (layer.ds[k], layer.ds[k + 1]);
    let w = x1 - x0;
    let h = y1 - y0;
    let s = h / w;
    let xi = (x - x0) / w;
    let q = xi * one_minus(xi);
    let dsum = d1 + d0 - s * 2.0;
    let denom = s + dsum * q;
    let y = y0 + h * (s * xi * xi + d0 * q) / denom;
    let num = s * s * (d1 * xi * xi + s * q * 2.0 + d0 * one_minus(xi) * one_minus(xi));
    let log_slope = num.ln() - denom.ln() * 2.0;
    (y, Some(log_slope))
}

/// Closed-form spline inverse: solves the bin-local quadratic with the
/// root form chosen to avoid cancellation.
fn spline_inverse<S: Scalar>(layer: &Knots<S>, y: S, tail: f64) -> (S, Option<S>) {
    let v = y.value();
    if !(-tail..=tail).contains(&v) {
        return (y, None);
    }
    let k = find_bin(&layer.ys, v);
    let (x0, x1) = (layer.xs[k], layer.xs[k + 1]);
    let (y0, y1) = (layer.ys[k], layer.ys[k + 1]);
    let (d0, d1) = (layer.ds[k], layer.ds[k + 1]);
    let w = x1 - x0;
    let h = y1 - y0;
    let s = h / w;
    let dy = y - y0;
    let dsum = d1 + d0 - s * 2.0;
    // a xi^2 + b xi + c = 0 with exactly one root in [0, 1]
    let a = dy * dsum + h * (s - d0);
    let b = h * d0 - dy * dsum;
    let c = -(s * dy);
    let disc = b * b - a * c * 4.0;
    let disc = if disc.value() < 0.0 { disc.constant(0.0) } else { disc };
    let root = disc.sqrt();
    let xi = if b.value() >= 0.0 {
        (c * 2.0) / (-b - root)
    } else {
        (-b + root) / (a * 2.0)
    };
    let x = x0 + w * xi;
    let q = xi * one_minus(xi);
    let denom = s + dsum * q;
    let num = s * s * (d1 * xi * xi + s * q * 2.0 + d0 * one_minus(xi) * one_minus(xi));
    let log_slope = num.ln() - denom.ln() * 2.0;
    (x, Some(log_slope))
}

fn forward_impl<S: Scalar>(p: &FlowKnots<S>, z: S) -> (S, S) {
    let mut y = z;
    let mut log_det = p.log_beta;
    for layer in &p.layers {
        let (next, ls) = spline_forward(layer, y, p.tail);
        y = next;
        if let Some(ls) = ls {
            log_det = log_det + ls;
        }
    }
    let b = p.alpha + p.log_beta.exp() * y;
    (b, log_det)
}

fn inverse_impl<S: Scalar>(p: &FlowKnots<S>, b: S) -> (S, S) {
    let mut y = (b - p.alpha) * (-p.log_beta).exp();
    let mut log_det = -p.log_beta;
    for layer in p.layers.iter().rev() {
        let (next, ls) = spline_inverse(layer, y, p.tail);
        y = next;
        if let Some(ls) = ls {
            log_det = log_det - ls;
        }
    }
    (y, log_det)
}

fn log_pdf_impl<S: Scalar>(p: &FlowKnots<S>, b: S) -> S {
    let (z, log_det_inv) = inverse_impl(p, b);
    z * z * (-0.5) - 0.5 * LOG_2PI + log_det_inv
}
