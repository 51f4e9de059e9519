//! Monte Carlo sampling of covering, hitting and fresh-appearance times.

use rand::Rng;

use crate::chain::Kernel;
use crate::error::{Error, Result};
use crate::sampling::{run_trials, trial_rng, MeanEstimate, SymbolSampler};

pub const DEFAULT_CHAIN_STEP_CAP: u64 = 1_000_000_000;

/// Steps until every state has been visited, counting `start` at time 0.
pub fn sample_cover_time(kernel: &Kernel, start: usize, seed: u64, cap: u64) -> Result<u64> {
    let all: Vec<usize> = (0..kernel.n_states()).collect();
    sample_subset_cover_time(kernel, start, &all, seed, cap)
}

/// Steps until every state of `subset` has been visited (time 0 counts).
pub fn sample_subset_cover_time(
    kernel: &Kernel,
    start: usize,
    subset: &[usize],
    seed: u64,
    cap: u64,
) -> Result<u64> {
    let n = kernel.n_states();
    if start >= n || subset.iter().any(|&s| s >= n) {
        return Err(Error::invalid("state out of range"));
    }
    let mut wanted = vec![false; n];
    for &s in subset {
        wanted[s] = true;
    }
    let mut remaining = wanted.iter().filter(|&&w| w).count();
    let mut rng = trial_rng(seed);
    let mut state = start;
    if wanted[state] {
        wanted[state] = false;
        remaining -= 1;
    }
    let mut t = 0u64;
    while remaining > 0 {
        if t >= cap {
            return Err(Error::Censored { cap });
        }
        state = kernel.step(state, rng.random());
        t += 1;
        if wanted[state] {
            wanted[state] = false;
            remaining -= 1;
        }
    }
    Ok(t)
}

/// `τ_target` from `start` (0 when they coincide).
pub fn sample_hitting_time(kernel: &Kernel, start: usize, target: usize, seed: u64, cap: u64) -> Result<u64> {
    sample_subset_cover_time(kernel, start, &[target], seed, cap)
}

/// First time `t ≥ |word|` at which the `|word|` newest i.i.d. symbols,
/// read newest first, spell `word`: an appearance built only from new symbols.
///
/// The stream is scanned with a KMP automaton for the reversed word, since
/// chronological order is the reverse of the chain's newest-first words.
pub fn sample_fresh_appearance(probs: &[f64], word: &[u8], seed: u64, cap: u64) -> Result<u64> {
    if word.is_empty() {
        return Ok(0);
    }
    let pattern: Vec<u8> = word.iter().rev().copied().collect();
    let m = pattern.len();
    let mut fail = vec![0usize; m];
    let mut k = 0;
    for i in 1..m {
        while k > 0 && pattern[i] != pattern[k] {
            k = fail[k - 1];
        }
        if pattern[i] == pattern[k] {
            k += 1;
        }
        fail[i] = k;
    }
    let sampler = SymbolSampler::new(probs);
    let mut rng = trial_rng(seed);
    let mut matched = 0usize;
    let mut t = 0u64;
    loop {
        if t >= cap {
            return Err(Error::Censored { cap });
        }
        let s = sampler.sample(&mut rng);
        t += 1;
        while matched > 0 && pattern[matched] != s {
            matched = fail[matched - 1];
        }
        if pattern[matched] == s {
            matched += 1;
        }
        if matched == m {
            return Ok(t);
        }
    }
}

/// Parallel mean of [`sample_subset_cover_time`] over `trials` seeded trials.
pub fn estimate_subset_cover_time(
    kernel: &Kernel,
    start: usize,
    subset: &[usize],
    trials: u64,
    master_seed: u64,
    cap: u64,
) -> Result<MeanEstimate> {
    let samples = run_trials(trials, master_seed, |seed| {
        sample_subset_cover_time(kernel, start, subset, seed, cap).map(|t| t as f64)
    })
    .into_iter()
    .collect::<Result<Vec<f64>>>()?;
    Ok(MeanEstimate::from_samples(&samples))
}

pub fn estimate_cover_time(
    kernel: &Kernel,
    start: usize,
    trials: u64,
    master_seed: u64,
    cap: u64,
) -> Result<MeanEstimate> {
    let all: Vec<usize> = (0..kernel.n_states()).collect();
    estimate_subset_cover_time(kernel, start, &all, trials, master_seed, cap)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chain::Chain;
    use crate::hitting::{exact_cover_time, HittingSolver};
    use crate::ifs::IfsSystem;
    use crate::partition::Partition;

    fn uniform9() -> Chain {
        let sys = IfsSystem::sierpinski([1.0 / 3.0; 3]).unwrap();
        Chain::build(Partition::build(&sys, 0.25).unwrap()).unwrap()
    }

    #[test]
    fn cover_needs_a_step_per_state_and_is_deterministic() {
        let c = uniform9();
        for seed in 0..200 {
            let t = sample_cover_time(c.kernel(), 0, seed, DEFAULT_CHAIN_STEP_CAP).unwrap();
            assert!(t >= 8);
            assert_eq!(t, sample_cover_time(c.kernel(), 0, seed, DEFAULT_CHAIN_STEP_CAP).unwrap());
        }
    }

    #[test]
    fn censoring_is_reported() {
        let c = uniform9();
        assert!(matches!(
            sample_cover_time(c.kernel(), 0, 1, 3),
            Err(Error::Censored { cap: 3 })
        ));
    }

    #[test]
    fn monte_carlo_cover_matches_exact() {
        let c = uniform9();
        let exact = exact_cover_time(c.kernel(), 0).unwrap();
        let est = estimate_cover_time(c.kernel(), 0, 20_000, 11, DEFAULT_CHAIN_STEP_CAP).unwrap();
        assert!(est.agrees_with(exact, 3.0), "{} vs {exact} ± {}", est.mean, est.std_error);
    }

    #[test]
    fn monte_carlo_hitting_within_one_percent() {
        let c = uniform9();
        let solver = HittingSolver::for_chain(&c).unwrap();
        let prof = solver.profile(4).unwrap();
        for start in [0usize, 3, 8] {
            let samples: Vec<f64> = run_trials(100_000, start as u64, |seed| {
                sample_hitting_time(c.kernel(), start, 4, seed, DEFAULT_CHAIN_STEP_CAP).unwrap() as f64
            });
            let est = MeanEstimate::from_samples(&samples);
            let exact = prof.expected_hit[start];
            assert!((est.mean - exact).abs() <= 0.01 * exact, "{} vs {exact}", est.mean);
        }
    }

    #[test]
    fn fresh_appearance_of_coin_patterns() {
        // Fair coin: E[time to HH] = 6, E[time to HT] = 4.
        let probs = [0.5, 0.5];
        for (word, want) in [(vec![0u8, 0], 6.0), (vec![0, 1], 4.0)] {
            let samples: Vec<f64> = run_trials(100_000, 5, |seed| {
                sample_fresh_appearance(&probs, &word, seed, u64::MAX).unwrap() as f64
            });
            let est = MeanEstimate::from_samples(&samples);
            assert!(est.agrees_with(want, 3.0), "{:?}: {}", word, est.mean);
        }
    }
}
