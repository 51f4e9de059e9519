//! The symbolic Markov chain on `P_δ`.
//!
//! From state `w` the chain moves, with probability `p_i`, to the partition
//! word that is a prefix of `i·w`. [`Kernel`] holds any sparse row-stochastic
//! transition structure; [`Chain`] ties one to a [`Partition`].

use std::collections::VecDeque;

use crate::error::{Error, Result};
use crate::partition::Partition;
use crate::report::{csv_line, fmt17};
use crate::sampling::{cumulative, inverse_cdf};

pub const ROW_SUM_TOLERANCE: f64 = 1e-12;
pub const STATIONARY_TOLERANCE: f64 = 1e-10;

/// Sparse transition structure in compressed-row form.
#[derive(Debug, Clone)]
pub struct Kernel {
    row_start: Vec<usize>,
    targets: Vec<u32>,
    probs: Vec<f64>,
    cum: Vec<f64>,
}

impl Kernel {
    /// Rows of `(target, probability)`; zero-probability entries are kept.
    pub fn from_rows(rows: &[Vec<(usize, f64)>]) -> Result<Self> {
        let n = rows.len();
        if n == 0 {
            return Err(Error::invalid("a chain needs at least one state"));
        }
        let mut row_start = Vec::with_capacity(n + 1);
        let mut targets = Vec::new();
        let mut probs = Vec::new();
        let mut cum = Vec::new();
        row_start.push(0);
        for (i, row) in rows.iter().enumerate() {
            if row.is_empty() {
                return Err(Error::invalid(format!("state {i} has no transitions")));
            }
            for &(t, p) in row {
                if t >= n {
                    return Err(Error::invalid(format!("transition {i} -> {t} out of range")));
                }
                if !(p >= 0.0 && p.is_finite()) {
                    return Err(Error::invalid(format!("bad probability {p} on {i} -> {t}")));
                }
                targets.push(t as u32);
                probs.push(p);
            }
            let row_probs: Vec<f64> = row.iter().map(|e| e.1).collect();
            cum.extend(cumulative(&row_probs));
            row_start.push(targets.len());
        }
        Ok(Kernel {
            row_start,
            targets,
            probs,
            cum,
        })
    }

    pub fn n_states(&self) -> usize {
        self.row_start.len() - 1
    }

    pub fn n_entries(&self) -> usize {
        self.targets.len()
    }

    /// `(target, probability)` entries of row `i`, in stored order.
    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let r = self.row_start[i]..self.row_start[i + 1];
        self.targets[r.clone()]
            .iter()
            .zip(&self.probs[r])
            .map(|(&t, &p)| (t as usize, p))
    }

    /// Target of the entry selected by uniform draw `u` (inverse CDF over the row).
    #[inline]
    pub fn step(&self, i: usize, u: f64) -> usize {
        let r = self.row_start[i]..self.row_start[i + 1];
        let k = inverse_cdf(&self.cum[r.clone()], u);
        self.targets[r.start + k] as usize
    }

    /// `max_i |Σ_j a_ij − 1|`.
    pub fn row_sum_residual(&self) -> f64 {
        (0..self.n_states())
            .map(|i| (self.row(i).map(|e| e.1).sum::<f64>() - 1.0).abs())
            .fold(0.0, f64::max)
    }

    /// `max_j |(πA)_j − π_j|`.
    pub fn stationary_residual(&self, pi: &[f64]) -> f64 {
        let mut lhs = vec![0.0; self.n_states()];
        for (i, &pi_i) in pi.iter().enumerate() {
            for (t, p) in self.row(i) {
                lhs[t] += pi_i * p;
            }
        }
        lhs.iter()
            .zip(pi)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    fn successors(&self, i: usize) -> impl Iterator<Item = usize> + '_ {
        self.row(i).filter(|e| e.1 > 0.0).map(|e| e.0)
    }

    /// Component id per state (Tarjan, iterative). Ids are assigned in the
    /// order components are completed.
    pub fn strongly_connected_components(&self) -> Vec<usize> {
        let n = self.n_states();
        const UNSEEN: usize = usize::MAX;
        let mut index = vec![UNSEEN; n];
        let mut low = vec![0; n];
        let mut on_stack = vec![false; n];
        let mut comp = vec![UNSEEN; n];
        let mut stack = Vec::new();
        let mut next_index = 0;
        let mut n_comp = 0;
        // (vertex, position within its adjacency list)
        let mut call: Vec<(usize, usize)> = Vec::new();
        for root in 0..n {
            if index[root] != UNSEEN {
                continue;
            }
            call.push((root, 0));
            index[root] = next_index;
            low[root] = next_index;
            next_index += 1;
            stack.push(root);
            on_stack[root] = true;
            while let Some(&mut (v, ref mut pos)) = call.last_mut() {
                let succ: Vec<usize> = self.successors(v).skip(*pos).take(1).collect();
                if let Some(&w) = succ.first() {
                    *pos += 1;
                    if index[w] == UNSEEN {
                        index[w] = next_index;
                        low[w] = next_index;
                        next_index += 1;
                        stack.push(w);
                        on_stack[w] = true;
                        call.push((w, 0));
                    } else if on_stack[w] {
                        low[v] = low[v].min(index[w]);
                    }
                    continue;
                }
                call.pop();
                if let Some(&(parent, _)) = call.last() {
                    low[parent] = low[parent].min(low[v]);
                }
                if low[v] == index[v] {
                    while let Some(w) = stack.pop() {
                        on_stack[w] = false;
                        comp[w] = n_comp;
                        if w == v {
                            break;
                        }
                    }
                    n_comp += 1;
                }
            }
        }
        comp
    }

    pub fn is_irreducible(&self) -> bool {
        self.strongly_connected_components().iter().all(|&c| c == 0)
    }

    /// Whether every entry of `A^power` is positive, by boolean matrix powering.
    /// Quadratic memory; meant for small chains.
    pub fn power_is_positive(&self, power: usize) -> bool {
        let n = self.n_states();
        let mut reach = vec![false; n * n];
        for i in 0..n {
            reach[i * n + i] = true;
        }
        for _ in 0..power {
            let mut next = vec![false; n * n];
            for i in 0..n {
                for k in 0..n {
                    if reach[i * n + k] {
                        for t in self.successors(k) {
                            next[i * n + t] = true;
                        }
                    }
                }
            }
            reach = next;
        }
        reach.iter().all(|&b| b)
    }

    /// Fewest transitions from `from` to every state (BFS), `None` if unreachable.
    pub fn shortest_transitions(&self, from: usize) -> Vec<Option<usize>> {
        let mut dist = vec![None; self.n_states()];
        dist[from] = Some(0);
        let mut queue = VecDeque::from([from]);
        while let Some(v) = queue.pop_front() {
            let dv = dist[v].unwrap();
            for w in self.successors(v) {
                if dist[w].is_none() {
                    dist[w] = Some(dv + 1);
                    queue.push_back(w);
                }
            }
        }
        dist
    }
}

/// The chain `(X_n^δ)` on the words of a partition.
#[derive(Debug, Clone)]
pub struct Chain {
    partition: Partition,
    kernel: Kernel,
    stationary: Vec<f64>,
}

impl Chain {
    /// Builds the transition structure and checks that it is row-stochastic,
    /// that `π_w = p_w` is stationary and that the chain is irreducible.
    pub fn build(partition: Partition) -> Result<Self> {
        let chain = Self::build_unchecked(partition)?;
        let rows = chain.kernel.row_sum_residual();
        if rows > ROW_SUM_TOLERANCE {
            return Err(Error::Numeric {
                message: "transition rows do not sum to 1".into(),
                residual: rows,
            });
        }
        let st = chain.verify_stationary();
        if st > STATIONARY_TOLERANCE {
            return Err(Error::Numeric {
                message: "p_w is not stationary".into(),
                residual: st,
            });
        }
        if !chain.is_irreducible() {
            return Err(Error::Numeric {
                message: "transition graph is not strongly connected".into(),
                residual: 0.0,
            });
        }
        Ok(chain)
    }

    fn build_unchecked(partition: Partition) -> Result<Self> {
        let n = partition.n_symbols();
        let probs = partition.probs().to_vec();
        let rows: Vec<Vec<(usize, f64)>> = (0..partition.len())
            .map(|w| {
                (0..n)
                    .map(|sym| (partition.successor_index(w, sym as u8), probs[sym]))
                    .collect()
            })
            .collect();
        let kernel = Kernel::from_rows(&rows)?;
        let stationary = partition.words().iter().map(|w| w.prob()).collect();
        Ok(Chain {
            partition,
            kernel,
            stationary,
        })
    }

    pub fn partition(&self) -> &Partition {
        &self.partition
    }

    pub fn kernel(&self) -> &Kernel {
        &self.kernel
    }

    pub fn stationary(&self) -> &[f64] {
        &self.stationary
    }

    pub fn n_states(&self) -> usize {
        self.kernel.n_states()
    }

    /// Target of the transition labelled `symbol` out of `state`.
    #[inline]
    pub fn target(&self, state: usize, symbol: u8) -> usize {
        let start = self.kernel.row_start[state];
        self.kernel.targets[start + symbol as usize] as usize
    }

    pub fn row_sum_residual(&self) -> f64 {
        self.kernel.row_sum_residual()
    }

    /// `max |πA − π|`.
    pub fn verify_stationary(&self) -> f64 {
        self.kernel.stationary_residual(&self.stationary)
    }

    pub fn is_irreducible(&self) -> bool {
        self.kernel.is_irreducible()
    }

    /// Mirrors the positivity argument: `A^{L_δ}` has no zero entry.
    pub fn power_check(&self) -> bool {
        self.kernel
            .power_is_positive(self.partition.length_bounds().ell_max)
    }

    /// `state,symbol,target,prob` rows.
    pub fn dump_csv(&self) -> String {
        let mut out = String::from("state,symbol,target,prob\n");
        for (i, w) in self.partition.words().iter().enumerate() {
            for (sym, (t, p)) in self.kernel.row(i).enumerate() {
                out.push_str(&csv_line([
                    w.label(),
                    (sym + 1).to_string(),
                    self.partition.word(t).label(),
                    fmt17(p),
                ]));
            }
        }
        out
    }

    #[cfg(test)]
    pub(crate) fn perturbed(&self, state: usize, entry: usize, eps: f64) -> Chain {
        let mut c = self.clone();
        let k = c.kernel.row_start[state] + entry;
        c.kernel.probs[k] += eps;
        c
    }
}
