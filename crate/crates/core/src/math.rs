//! Small numeric helpers used throughout the crate.

pub const LOG_2PI: f64 = 1.837_877_066_409_345_3;

/// log(sum(exp(x))) with the usual max shift. Empty input gives -inf.
pub fn logsumexp(xs: &[f64]) -> f64 {
    let mut m = f64::NEG_INFINITY;
    for &x in xs {
        if x > m {
            m = x;
        }
    }
    if !m.is_finite() {
        return m;
    }
    let mut s = 0.0;
    for &x in xs {
        s += (x - m).exp();
    }
    m + s.ln()
}

/// Streaming log-sum-exp accumulator, for sums too large to materialize.
#[derive(Clone, Copy, Debug)]
pub struct LseAcc {
    max: f64,
    sum: f64,
}

impl LseAcc {
    pub fn new() -> Self {
        LseAcc {
            max: f64::NEG_INFINITY,
            sum: 0.0,
        }
    }

    pub fn add(&mut self, x: f64) {
        if x == f64::NEG_INFINITY {
            return;
        }
        if x <= self.max {
            self.sum += (x - self.max).exp();
        } else {
            self.sum = self.sum * (self.max - x).exp() + 1.0;
            self.max = x;
        }
    }

    pub fn value(&self) -> f64 {
        if self.max.is_finite() {
            self.max + self.sum.ln()
        } else {
            self.max
        }
    }
}

impl Default for LseAcc {
    fn default() -> Self {
        Self::new()
    }
}

/// Sample mean and population variance (1/N normalization).
pub fn mean_and_var(xs: &[f64]) -> (f64, f64) {
    assert!(!xs.is_empty(), "mean_and_var on empty slice");
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
    (mean, var)
}

/// Median of a slice (averages the middle pair for even lengths).
pub fn median(xs: &[f64]) -> f64 {
    assert!(!xs.is_empty(), "median of empty slice");
    let mut v = xs.to_vec();
    v.sort_by(|a, b| a.partial_cmp(b).expect("median: NaN"));
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Stable log(1 + exp(x)).
pub fn softplus(x: f64) -> f64 {
    if x > 30.0 {
        x
    } else if x < -30.0 {
        x.exp()
    } else {
        x.exp().ln_1p()
    }
}

/// Inverse of `softplus` (x > 0).
pub fn softplus_inv(y: f64) -> f64 {
    assert!(y > 0.0);
    if y > 30.0 {
        y
    } else {
        (y.exp() - 1.0).ln()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn logsumexp_matches_direct_sum() {
        let xs = [-1.0f64, -2.0, -0.5, -3.0];
        let direct: f64 = xs.iter().map(|x| x.exp()).sum::<f64>().ln();
        assert!((logsumexp(&xs) - direct).abs() < 1e-14);
    }

    #[test]
    fn logsumexp_handles_extreme_shifts() {
        let xs = [-1000.0, -1000.5];
        let got = logsumexp(&xs);
        let want = -1000.0 + (1.0 + (-0.5f64).exp()).ln();
        assert!((got - want).abs() < 1e-12);
        assert!(logsumexp(&[]).is_infinite());
    }

    #[test]
    fn streaming_lse_matches_batch() {
        let xs = [-5.0, 3.0, -700.0, 2.9, f64::NEG_INFINITY];
        let mut acc = LseAcc::new();
        for &x in &xs {
            acc.add(x);
        }
        assert!((acc.value() - logsumexp(&xs)).abs() < 1e-12);
    }

    #[test]
    fn softplus_round_trip() {
        for &y in &[1e-6, 0.3, 1.0, 7.5, 40.0] {
            assert!((softplus(softplus_inv(y)) - y).abs() < 1e-12 * y.max(1.0));
        }
    }

    #[test]
    fn median_even_odd() {
        assert_eq!(median(&[3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(&[4.0, 1.0, 2.0, 3.0]), 2.5);
    }
}
