//! Expected hitting, return and covering times, and Matthews-type bounds.
//!
//! Hitting times come from the fundamental matrix `Z = (I − A + 1π)^{-1}`:
//! `E_i τ_j = (Z_jj − Z_ij) / π_j`. One LU factorisation serves every
//! target, and each solved column is checked against the defining system
//! `h_j = 0`, `h_i = 1 + Σ_k a_ik h_k`.

use nalgebra::{DMatrix, DVector, Dyn, LU};

use crate::chain::{Chain, Kernel};
use crate::error::{Error, Result};

/// Default state limit for the dense hitting-time solver.
pub const DEFAULT_SOLVE_LIMIT: usize = 5_000;
/// State limit for [`exact_cover_time`].
pub const EXACT_COVER_LIMIT: usize = 16;

/// Scaled residual allowed on the hitting-time system.
pub const HITTING_RESIDUAL_TOLERANCE: f64 = 1e-10;
pub const RETURN_TIME_TOLERANCE: f64 = 1e-8;
const COVER_RESIDUAL_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub struct HittingProfile {
    pub target: usize,
    /// `E_i τ_target` for every state `i`.
    pub expected_hit: Vec<f64>,
    /// `E_target τ_target^+`.
    pub expected_return: f64,
    /// `max_i |h_i − 1 − Σ_k a_ik h_k|` over `i ≠ target`, divided by `1 + max_i h_i`.
    pub residual: f64,
}

/// Factorised fundamental matrix of one chain.
pub struct HittingSolver<'a> {
    kernel: &'a Kernel,
    pi: &'a [f64],
    lu: LU<f64, Dyn, Dyn>,
}

impl<'a> HittingSolver<'a> {
    pub fn new(kernel: &'a Kernel, pi: &'a [f64]) -> Result<Self> {
        Self::with_limit(kernel, pi, DEFAULT_SOLVE_LIMIT)
    }

    pub fn for_chain(chain: &'a Chain) -> Result<Self> {
        Self::new(chain.kernel(), chain.stationary())
    }

    pub fn with_limit(kernel: &'a Kernel, pi: &'a [f64], limit: usize) -> Result<Self> {
        let n = kernel.n_states();
        if n > limit {
            return Err(Error::BudgetExceeded {
                what: "hitting-time solver states",
                needed: n as u128,
                limit: limit as u128,
            });
        }
        if pi.len() != n {
            return Err(Error::invalid("stationary vector has wrong length"));
        }
        let mut m = DMatrix::<f64>::zeros(n, n);
        for i in 0..n {
            for j in 0..n {
                m[(i, j)] = pi[j];
            }
            m[(i, i)] += 1.0;
            for (t, p) in kernel.row(i) {
                m[(i, t)] -= p;
            }
        }
        Ok(HittingSolver {
            kernel,
            pi,
            lu: m.lu(),
        })
    }

    pub fn n_states(&self) -> usize {
        self.kernel.n_states()
    }

    pub fn profile(&self, target: usize) -> Result<HittingProfile> {
        let n = self.n_states();
        if target >= n {
            return Err(Error::invalid(format!("target {target} out of range")));
        }
        let mut e = DVector::<f64>::zeros(n);
        e[target] = 1.0;
        let z = self.lu.solve(&e).ok_or_else(|| Error::Numeric {
            message: "fundamental matrix is singular".into(),
            residual: f64::NAN,
        })?;
        let pj = self.pi[target];
        let mut h: Vec<f64> = (0..n).map(|i| (z[target] - z[i]) / pj).collect();
        h[target] = 0.0;

        let scale = 1.0 + h.iter().copied().fold(0.0, f64::max);
        let mut residual = 0.0f64;
        for i in (0..n).filter(|&i| i != target) {
            let rhs: f64 = 1.0 + self.kernel.row(i).map(|(k, p)| p * h[k]).sum::<f64>();
            residual = residual.max((h[i] - rhs).abs());
        }
        let residual = residual / scale;
        if residual.is_nan() || residual > HITTING_RESIDUAL_TOLERANCE {
            return Err(Error::Numeric {
                message: format!("hitting-time system for target {target} not solved"),
                residual,
            });
        }
        let expected_return = 1.0 + self.kernel.row(target).map(|(k, p)| p * h[k]).sum::<f64>();
        Ok(HittingProfile {
            target,
            expected_hit: h,
            expected_return,
            residual,
        })
    }

    /// `E_i τ_j` for `i, j ∈ subset`, as `out[a][b] = E_{subset[a]} τ_{subset[b]}`.
    pub fn pairwise(&self, subset: &[usize]) -> Result<Vec<Vec<f64>>> {
        let cols: Vec<Vec<f64>> = subset
            .iter()
            .map(|&j| self.profile(j).map(|p| p.expected_hit))
            .collect::<Result<_>>()?;
        Ok(subset
            .iter()
            .map(|&i| cols.iter().map(|col| col[i]).collect())
            .collect())
    }
}

pub fn hitting_times(chain: &Chain, target: usize) -> Result<HittingProfile> {
    HittingSolver::for_chain(chain)?.profile(target)
}

/// `1 + 1/2 + … + 1/n`.
pub fn harmonic(n: usize) -> f64 {
    (1..=n).map(|k| 1.0 / k as f64).sum()
}

fn normalise_subset(n: usize, subset: &[usize]) -> Result<Vec<usize>> {
    let mut s = subset.to_vec();
    s.sort_unstable();
    s.dedup();
    if s.is_empty() {
        return Err(Error::invalid("subset must be non-empty"));
    }
    if let Some(&bad) = s.iter().find(|&&i| i >= n) {
        return Err(Error::invalid(format!("subset state {bad} out of range")));
    }
    Ok(s)
}

#[derive(Debug, Clone, PartialEq)]
pub struct MatthewsBound {
    pub subset: Vec<usize>,
    /// `max_{i,j ∈ S} E_i τ_j` for the upper bound, `min_{i≠j ∈ S}` for the lower.
    pub extremal_hit: f64,
    pub harmonic: f64,
    pub value: f64,
}

/// `max_{i,j∈S} E_i τ_j · H_{|S|}`, with `S` the whole space when `subset` is `None`.
pub fn matthews_upper(solver: &HittingSolver<'_>, subset: Option<&[usize]>) -> Result<MatthewsBound> {
    let n = solver.n_states();
    let s = match subset {
        Some(s) => normalise_subset(n, s)?,
        None => (0..n).collect(),
    };
    let pw = solver.pairwise(&s)?;
    let extremal_hit = pw.iter().flatten().copied().fold(0.0, f64::max);
    let h = harmonic(s.len());
    Ok(MatthewsBound {
        subset: s,
        extremal_hit,
        harmonic: h,
        value: extremal_hit * h,
    })
}

/// `min_{i≠j∈B} E_i τ_j · H_{|B|−1}`; valid for starts inside `B`.
pub fn matthews_lower(solver: &HittingSolver<'_>, subset: &[usize]) -> Result<MatthewsBound> {
    let s = normalise_subset(solver.n_states(), subset)?;
    if s.len() < 2 {
        return Err(Error::invalid("lower bound needs a subset of at least 2 states"));
    }
    let pw = solver.pairwise(&s)?;
    let mut extremal_hit = f64::INFINITY;
    for (a, row) in pw.iter().enumerate() {
        for (b, &v) in row.iter().enumerate() {
            if a != b {
                extremal_hit = extremal_hit.min(v);
            }
        }
    }
    let h = harmonic(s.len() - 1);
    Ok(MatthewsBound {
        subset: s,
        extremal_hit,
        harmonic: h,
        value: extremal_hit * h,
    })
}

/// Upper bound on `P_i(τ_j < L_δ)` when at least `j` transitions are needed:
/// `p^j/(1−p) + p^ℓ (L − ℓ)`.
pub fn theta_bound(p_max: f64, j: usize, ell: usize, ell_max: usize) -> Result<f64> {
    if !(p_max > 0.0 && p_max < 1.0) {
        return Err(Error::invalid("p_max must lie in (0,1)"));
    }
    if !(j <= ell && ell <= ell_max) {
        return Err(Error::invalid("need j <= ell <= ell_max"));
    }
    Ok(p_max.powi(j as i32) / (1.0 - p_max) + p_max.powi(ell as i32) * (ell_max - ell) as f64)
}

/// `E_start τ_cov`, exactly.
pub fn exact_cover_time(kernel: &Kernel, start: usize) -> Result<f64> {
    let all: Vec<usize> = (0..kernel.n_states()).collect();
    exact_subset_cover_time(kernel, start, &all)
}

/// Expected time until every state of `subset` has been visited (time 0
/// counts), from the linear system on (visited subset, current state) pairs.
/// Visited sets only grow, so the system is solved one set at a time from the
/// full set downwards.
pub fn exact_subset_cover_time(kernel: &Kernel, start: usize, subset: &[usize]) -> Result<f64> {
    let n = kernel.n_states();
    if n > EXACT_COVER_LIMIT {
        return Err(Error::BudgetExceeded {
            what: "exact cover-time states",
            needed: n as u128,
            limit: EXACT_COVER_LIMIT as u128,
        });
    }
    if start >= n {
        return Err(Error::invalid("start state out of range"));
    }
    let subset = normalise_subset(n, subset)?;
    let mut bit = vec![0usize; n];
    for (k, &s) in subset.iter().enumerate() {
        bit[s] = 1 << k;
    }
    let full = (1usize << subset.len()) - 1;
    // value[mask * n + i]; unreachable pairs (i in subset but not in mask) stay 0.
    let mut value = vec![0.0f64; (full + 1) * n];
    let mut worst = 0.0f64;
    for mask in (0..full).rev() {
        let live: Vec<usize> = (0..n).filter(|&i| bit[i] == 0 || mask & bit[i] != 0).collect();
        let pos = |i: usize| live.iter().position(|&x| x == i);
        let m = live.len();
        if m == 0 {
            // Every state is in the subset and none is visited: no chain is here.
            continue;
        }
        let mut a = DMatrix::<f64>::identity(m, m);
        let mut b = DVector::<f64>::from_element(m, 1.0);
        for (r, &i) in live.iter().enumerate() {
            for (k, p) in kernel.row(i) {
                let next = mask | bit[k];
                if next == mask {
                    let c = pos(k).expect("same-mask successor is live");
                    a[(r, c)] -= p;
                } else if next != full {
                    b[r] += p * value[next * n + k];
                }
            }
        }
        let x = a.clone().lu().solve(&b).ok_or_else(|| Error::Numeric {
            message: "cover-time layer system is singular".into(),
            residual: f64::NAN,
        })?;
        let res = (&a * &x - &b).amax() / (1.0 + x.amax());
        worst = worst.max(res);
        for (r, &i) in live.iter().enumerate() {
            value[mask * n + i] = x[r];
        }
    }
    if worst > COVER_RESIDUAL_TOLERANCE {
        return Err(Error::Numeric {
            message: "cover-time system not solved".into(),
            residual: worst,
        });
    }
    let start_mask = bit[start];
    Ok(if start_mask == full {
        0.0
    } else {
        value[start_mask * n + start]
    })
}
