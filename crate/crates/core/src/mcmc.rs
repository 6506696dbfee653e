//! Shared MCMC plumbing: chains, the acceptance primitive, and simple
//! chain statistics.

use rand::Rng;

/// Ordered posterior samples with their unnormalized log-posteriors.
#[derive(Debug, Clone)]
pub struct PosteriorChain<T> {
    samples: Vec<T>,
    log_posteriors: Vec<f64>,
    map_index: usize,
    accepted: usize,
}

impl<T> PosteriorChain<T> {
    /// Ties in the maximum are broken by the earliest sample.
    pub fn new(samples: Vec<T>, log_posteriors: Vec<f64>, accepted: usize) -> Self {
        assert_eq!(samples.len(), log_posteriors.len());
        assert!(!samples.is_empty(), "empty chain");
        let mut map_index = 0;
        for (i, &lp) in log_posteriors.iter().enumerate() {
            if lp > log_posteriors[map_index] {
                map_index = i;
            }
        }
        PosteriorChain { samples, log_posteriors, map_index, accepted }
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn samples(&self) -> &[T] {
        &self.samples
    }

    pub fn log_posteriors(&self) -> &[f64] {
        &self.log_posteriors
    }

    pub fn map_index(&self) -> usize {
        self.map_index
    }

    pub fn map_sample(&self) -> &T {
        &self.samples[self.map_index]
    }

    /// Fraction of proposals accepted while the retained part of the chain
    /// was generated.
    pub fn acceptance_rate(&self) -> f64 {
        if self.samples.len() <= 1 {
            0.0
        } else {
            self.accepted as f64 / (self.samples.len() - 1) as f64
        }
    }
}

/// One Metropolis-Hastings accept/reject decision.
///
/// `log_ratio` is log posterior ratio plus log Hastings correction. Compares
/// against log u so that huge ratios never overflow.
pub fn mh_accept<R: Rng>(rng: &mut R, log_ratio: f64) -> bool {
    if log_ratio >= 0.0 {
        return true;
    }
    let u: f64 = rng.gen::<f64>();
    u.ln() < log_ratio
}

/// Generic Metropolis-Hastings driver.
///
/// `propose` returns a candidate and its log Hastings correction
/// log q(current | candidate) - log q(candidate | current). The chain starts
/// at `init` (which is recorded as the first retained sample after `burn_in`
/// discarded steps) and retains `samples` states in total.
pub fn metropolis_chain<T, R, F, P>(
    init: T,
    log_post: F,
    propose: P,
    samples: usize,
    burn_in: usize,
    rng: &mut R,
) -> PosteriorChain<T>
where
    T: Clone,
    R: Rng,
    F: Fn(&T) -> f64,
    P: Fn(&T, &mut R) -> (T, f64),
{
    assert!(samples >= 1);
    let mut cur = init;
    let mut cur_lp = log_post(&cur);
    let step = |cur: &mut T, cur_lp: &mut f64, rng: &mut R| -> bool {
        let (cand, log_hastings) = propose(cur, rng);
        let cand_lp = log_post(&cand);
        if mh_accept(rng, cand_lp - *cur_lp + log_hastings) {
            *cur = cand;
            *cur_lp = cand_lp;
            true
        } else {
            false
        }
    };
    for _ in 0..burn_in {
        step(&mut cur, &mut cur_lp, rng);
    }
    let mut chain = Vec::with_capacity(samples);
    let mut lps = Vec::with_capacity(samples);
    chain.push(cur.clone());
    lps.push(cur_lp);
    let mut accepted = 0;
    for _ in 1..samples {
        if step(&mut cur, &mut cur_lp, rng) {
            accepted += 1;
        }
        chain.push(cur.clone());
        lps.push(cur_lp);
    }
    PosteriorChain::new(chain, lps, accepted)
}

/// Evenly spaced chain indices, at most `max` of them. Used when evaluating
/// reconstruction curves: with the small-step proposals used here the
/// effective sample size is far below the chain length, so a few thousand
/// evenly spaced samples carry the same information as the full chain.
pub fn thin_indices(len: usize, max: usize) -> Vec<usize> {
    assert!(max >= 1);
    if len <= max {
        (0..len).collect()
    } else {
        (0..max).map(|i| i * len / max).collect()
    }
}

/// Batch-means standard error of the chain mean of `xs`.
///
/// Splits the chain into `batches` contiguous blocks; the standard error of
/// the overall mean is sd(batch means) / sqrt(batches). Robust to
/// autocorrelation as long as batches are longer than the correlation time.
pub fn batch_means_se(xs: &[f64], batches: usize) -> f64 {
    assert!(batches >= 2 && xs.len() >= batches);
    let bs = xs.len() / batches;
    let means: Vec<f64> = (0..batches)
        .map(|b| xs[b * bs..(b + 1) * bs].iter().sum::<f64>() / bs as f64)
        .collect();
    let grand = means.iter().sum::<f64>() / batches as f64;
    let var = means.iter().map(|m| (m - grand) * (m - grand)).sum::<f64>() / (batches as f64 - 1.0);
    (var / batches as f64).sqrt()
}
