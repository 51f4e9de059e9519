//! Seed derivation, per-trial generators and symbol draws.
//!
//! Every Monte Carlo trial owns a generator seeded from
//! `mix_seed(master, trial_index)`, so results do not depend on how trials are
//! scheduled across threads.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

pub type TrialRng = ChaCha8Rng;

/// The SplitMix64 finaliser.
pub fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed of trial `index` under `master`.
pub fn mix_seed(master: u64, index: u64) -> u64 {
    splitmix64(master ^ splitmix64(index))
}

pub fn trial_rng(seed: u64) -> TrialRng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Running sums of `probs`; the last entry is `+∞` so every uniform draw lands.
pub fn cumulative(probs: &[f64]) -> Vec<f64> {
    let mut acc = 0.0;
    let mut cum: Vec<f64> = probs
        .iter()
        .map(|p| {
            acc += p;
            acc
        })
        .collect();
    if let Some(last) = cum.last_mut() {
        *last = f64::INFINITY;
    }
    cum
}

/// Index of the first cumulative entry exceeding `u`.
#[inline]
pub fn inverse_cdf(cum: &[f64], u: f64) -> usize {
    let mut i = 0;
    while u >= cum[i] {
        i += 1;
    }
    i
}

/// Draws symbols with probabilities `p_i` by inverting the CDF of one
/// uniform `f64` per draw.
#[derive(Debug, Clone)]
pub struct SymbolSampler {
    cum: Vec<f64>,
}

impl SymbolSampler {
    pub fn new(probs: &[f64]) -> Self {
        SymbolSampler {
            cum: cumulative(probs),
        }
    }

    #[inline]
    pub fn sample<R: Rng>(&self, rng: &mut R) -> u8 {
        let u: f64 = rng.random();
        inverse_cdf(&self.cum, u) as u8
    }
}

/// Sample mean with standard error (zero for a single sample).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MeanEstimate {
    pub mean: f64,
    pub std_error: f64,
    pub count: usize,
}

impl MeanEstimate {
    pub fn from_samples(samples: &[f64]) -> Self {
        let n = samples.len();
        if n == 0 {
            return MeanEstimate {
                mean: f64::NAN,
                std_error: f64::NAN,
                count: 0,
            };
        }
        let mean = samples.iter().sum::<f64>() / n as f64;
        let std_error = if n < 2 {
            0.0
        } else {
            let var = samples.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
            (var / n as f64).sqrt()
        };
        MeanEstimate {
            mean,
            std_error,
            count: n,
        }
    }

    /// `|mean − value| ≤ k · std_error`.
    pub fn agrees_with(&self, value: f64, k: f64) -> bool {
        (self.mean - value).abs() <= k * self.std_error
    }
}

/// Runs `trials` independent trials in parallel and returns their results in
/// trial order. Trial `k` receives seed `mix_seed(master, k)`.
pub fn run_trials<T, F>(trials: u64, master: u64, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(u64) -> T + Sync + Send,
{
    (0..trials)
        .into_par_iter()
        .map(|k| f(mix_seed(master, k)))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn symbol_frequencies() {
        let probs = [0.25, 0.25, 0.5];
        let sampler = SymbolSampler::new(&probs);
        let mut rng = trial_rng(42);
        let n = 1_000_000;
        let mut counts = [0usize; 3];
        for _ in 0..n {
            counts[sampler.sample(&mut rng) as usize] += 1;
        }
        for (c, p) in counts.iter().zip(probs) {
            let se = (p * (1.0 - p) / n as f64).sqrt();
            assert!((*c as f64 / n as f64 - p).abs() <= 3.0 * se);
        }
    }

    #[test]
    fn first_symbols_are_pinned() {
        // Fixed-seed stream; guards against accidental changes to the draw path.
        let sampler = SymbolSampler::new(&[1.0 / 3.0; 3]);
        let mut rng = trial_rng(2024);
        let first: Vec<u8> = (0..10).map(|_| sampler.sample(&mut rng)).collect();
        let mut rng = trial_rng(2024);
        let again: Vec<u8> = (0..10).map(|_| sampler.sample(&mut rng)).collect();
        assert_eq!(first, again);
        assert_eq!(first, PINNED);
    }

    const PINNED: [u8; 10] = [0, 2, 2, 2, 2, 1, 0, 0, 1, 2];

    #[test]
    fn trial_order_is_stable() {
        let a = run_trials(100, 9, |s| s);
        let b: Vec<u64> = (0..100).map(|k| mix_seed(9, k)).collect();
        assert_eq!(a, b);
    }

    #[test]
    fn mean_estimate_single_sample() {
        let m = MeanEstimate::from_samples(&[5.0]);
        assert_eq!((m.mean, m.std_error), (5.0, 0.0));
    }
}
