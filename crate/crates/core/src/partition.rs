//! Cylinder partitions of symbol space.
//!
//! `P_δ` is the set of finite words `w` with `r_w ≤ δ < r_{w⁻}`. It is
//! enumerated depth-first from the empty word and stored together with the
//! enumeration tree, so that the successor of a state (prepend a symbol, keep
//! the unique partition word that is a prefix) is a walk down the tree.

use std::collections::{HashMap, HashSet};
use std::fmt;

use crate::error::{Error, Result};
use crate::ifs::IfsSystem;

/// Default cap on `|P_δ|`.
pub const DEFAULT_STATE_BUDGET: usize = 2_000_000;

const MASS_TOLERANCE: f64 = 1e-10;

/// A finite word over `{0, …, N−1}` with its cached ratio and probability
/// products. Symbols are stored zero-based and displayed one-based.
#[derive(Debug, Clone, PartialEq)]
pub struct Word {
    symbols: Vec<u8>,
    ratio: f64,
    prob: f64,
}

impl Word {
    /// Products are accumulated left to right so that the same word always
    /// gets bit-identical cached values.
    pub fn new(system: &IfsSystem, symbols: Vec<u8>) -> Result<Self> {
        let n = system.len();
        if let Some(&s) = symbols.iter().find(|&&s| s as usize >= n) {
            return Err(Error::invalid(format!(
                "symbol {} out of range 1..={n}",
                s as usize + 1
            )));
        }
        let ratios = system.ratios();
        let (ratio, prob) = products(&ratios, system.probs(), &symbols);
        Ok(Word {
            symbols,
            ratio,
            prob,
        })
    }

    /// Parses a one-based word such as `"312"` (or `"3.1.12"` for N > 9).
    pub fn parse(system: &IfsSystem, text: &str) -> Result<Self> {
        let text = text.trim();
        let symbols: Vec<u8> = if text.contains('.') {
            text.split('.')
                .map(|t| parse_symbol(t, system.len()))
                .collect::<Result<_>>()?
        } else {
            text.chars()
                .map(|c| parse_symbol(&c.to_string(), system.len()))
                .collect::<Result<_>>()?
        };
        Word::new(system, symbols)
    }

    pub fn symbols(&self) -> &[u8] {
        &self.symbols
    }

    pub fn len(&self) -> usize {
        self.symbols.len()
    }

    pub fn is_empty(&self) -> bool {
        self.symbols.is_empty()
    }

    pub fn ratio(&self) -> f64 {
        self.ratio
    }

    pub fn prob(&self) -> f64 {
        self.prob
    }

    /// One-based rendering; dot-separated when any symbol exceeds 9.
    pub fn label(&self) -> String {
        format_symbols(&self.symbols)
    }
}

impl fmt::Display for Word {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.label())
    }
}

fn parse_symbol(t: &str, n: usize) -> Result<u8> {
    let v: usize = t
        .parse()
        .map_err(|_| Error::invalid(format!("bad symbol {t:?}")))?;
    if v == 0 || v > n {
        return Err(Error::invalid(format!("symbol {v} out of range 1..={n}")));
    }
    Ok((v - 1) as u8)
}

pub(crate) fn format_symbols(symbols: &[u8]) -> String {
    if symbols.iter().all(|&s| s < 9) {
        symbols.iter().map(|&s| char::from(b'1' + s)).collect()
    } else {
        symbols
            .iter()
            .map(|&s| (s as usize + 1).to_string())
            .collect::<Vec<_>>()
            .join(".")
    }
}

fn products(ratios: &[f64], probs: &[f64], symbols: &[u8]) -> (f64, f64) {
    let mut r = 1.0;
    let mut p = 1.0;
    for &s in symbols {
        r *= ratios[s as usize];
        p *= probs[s as usize];
    }
    (r, p)
}

/// Child slot in the enumeration tree.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Slot {
    Node(u32),
    Leaf(u32),
}

#[derive(Debug, Clone)]
pub struct Partition {
    delta: f64,
    n_symbols: usize,
    ratios: Vec<f64>,
    probs: Vec<f64>,
    s: f64,
    r_min: f64,
    words: Vec<Word>,
    /// `n_symbols` slots per internal node; node 0 is the empty word.
    tree: Vec<Slot>,
    ell: usize,
    ell_max: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LengthBounds {
    /// Shortest word length, `ℓ_δ`.
    pub ell: usize,
    /// Longest word length, `L_δ`.
    pub ell_max: usize,
    /// Smallest `n` with `r_min^n ≤ δ`.
    pub ell_formula: usize,
    /// Smallest `n` with `r_max^n ≤ δ`.
    pub ell_max_formula: usize,
}

impl LengthBounds {
    pub fn consistent(&self) -> bool {
        self.ell == self.ell_formula && self.ell_max == self.ell_max_formula
    }
}

/// Outcome of the Markov partition property check.
#[derive(Debug, Clone, PartialEq)]
pub enum MarkovCheck {
    Holds,
    /// `[w]` is not tiled by cylinders `[w_1 j]`, `j ∈ P_δ`: mass found vs `p_w`.
    Fails {
        witness: Word,
        mass: f64,
        expected: f64,
    },
}

impl MarkovCheck {
    pub fn holds(&self) -> bool {
        matches!(self, MarkovCheck::Holds)
    }
}

impl Partition {
    pub fn build(system: &IfsSystem, delta: f64) -> Result<Self> {
        Self::build_with_budget(system, delta, DEFAULT_STATE_BUDGET)
    }

    /// Depth-first enumeration: a word is extended while its ratio exceeds
    /// `delta` and emitted as soon as its ratio drops to `≤ delta`. Children
    /// are visited in symbol order, so words come out lexicographically sorted.
    pub fn build_with_budget(system: &IfsSystem, delta: f64, budget: usize) -> Result<Self> {
        let r_min = system.r_min();
        if !(delta > 0.0 && delta < r_min) {
            return Err(Error::invalid(format!(
                "delta must lie in (0, r_min = {r_min}), got {delta}"
            )));
        }
        let n = system.len();
        let ratios = system.ratios();
        let probs = system.probs().to_vec();

        struct Frame {
            node: u32,
            prefix: Vec<u8>,
            ratio: f64,
            prob: f64,
            next: usize,
        }

        let mut words: Vec<Word> = Vec::new();
        let mut tree = vec![Slot::Leaf(u32::MAX); n];
        let mut stack = vec![Frame {
            node: 0,
            prefix: Vec::new(),
            ratio: 1.0,
            prob: 1.0,
            next: 0,
        }];
        while let Some(frame) = stack.last_mut() {
            if frame.next == n {
                stack.pop();
                continue;
            }
            let sym = frame.next;
            frame.next += 1;
            let ratio = frame.ratio * ratios[sym];
            let prob = frame.prob * probs[sym];
            let mut symbols = frame.prefix.clone();
            symbols.push(sym as u8);
            let slot = frame.node as usize * n + sym;
            if ratio <= delta {
                if words.len() >= budget {
                    return Err(Error::BudgetExceeded {
                        what: "partition words",
                        needed: budget as u128 + 1,
                        limit: budget as u128,
                    });
                }
                tree[slot] = Slot::Leaf(words.len() as u32);
                words.push(Word {
                    symbols,
                    ratio,
                    prob,
                });
            } else {
                let id = (tree.len() / n) as u32;
                tree.extend(std::iter::repeat_n(Slot::Leaf(u32::MAX), n));
                tree[slot] = Slot::Node(id);
                stack.push(Frame {
                    node: id,
                    prefix: symbols,
                    ratio,
                    prob,
                    next: 0,
                });
            }
        }

        let ell = words.iter().map(Word::len).min().unwrap_or(0);
        let ell_max = words.iter().map(Word::len).max().unwrap_or(0);
        Ok(Partition {
            delta,
            n_symbols: n,
            ratios,
            probs,
            s: system.similarity_dimension(),
            r_min,
            words,
            tree,
            ell,
            ell_max,
        })
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    pub fn n_symbols(&self) -> usize {
        self.n_symbols
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn ratios(&self) -> &[f64] {
        &self.ratios
    }

    pub fn similarity_dimension(&self) -> f64 {
        self.s
    }

    pub fn words(&self) -> &[Word] {
        &self.words
    }

    pub fn word(&self, index: usize) -> &Word {
        &self.words[index]
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    /// Index of the unique partition word that is a prefix of `symbols`, if
    /// `symbols` is long enough to determine it.
    pub fn locate(&self, symbols: &[u8]) -> Option<usize> {
        let n = self.n_symbols;
        let mut node = 0usize;
        for &s in symbols {
            if s as usize >= n {
                return None;
            }
            match self.tree[node * n + s as usize] {
                Slot::Leaf(i) if i != u32::MAX => return Some(i as usize),
                Slot::Leaf(_) => return None,
                Slot::Node(id) => node = id as usize,
            }
        }
        None
    }

    /// Index of `symbols` if it is exactly a partition word.
    pub fn index_of(&self, symbols: &[u8]) -> Option<usize> {
        self.locate(symbols)
            .filter(|&i| self.words[i].symbols.len() == symbols.len())
    }

    /// The unique partition word that is a prefix of `symbol · state`.
    pub fn successor_index(&self, state: usize, symbol: u8) -> usize {
        let n = self.n_symbols;
        let mut node = match self.tree[symbol as usize] {
            Slot::Leaf(i) => return i as usize,
            Slot::Node(id) => id as usize,
        };
        for &s in &self.words[state].symbols {
            match self.tree[node * n + s as usize] {
                Slot::Leaf(i) => return i as usize,
                Slot::Node(id) => node = id as usize,
            }
        }
        unreachable!("symbol·state always has a prefix in the partition")
    }

    pub fn successor(&self, state: &Word, symbol: u8) -> Result<&Word> {
        let idx = self
            .index_of(state.symbols())
            .ok_or_else(|| Error::invalid(format!("{state} is not a partition word")))?;
        if symbol as usize >= self.n_symbols {
            return Err(Error::invalid(format!(
                "symbol {} out of range 1..={}",
                symbol as usize + 1,
                self.n_symbols
            )));
        }
        Ok(&self.words[self.successor_index(idx, symbol)])
    }

    /// The partition word made only of `symbol`.
    pub fn constant_word(&self, symbol: u8) -> usize {
        let run = vec![symbol; self.ell_max + 1];
        self.locate(&run).expect("constant run longer than L_delta")
    }

    pub fn length_bounds(&self) -> LengthBounds {
        let steps = |r: f64| {
            let mut x = 1.0;
            let mut k = 0;
            while x > self.delta {
                x *= r;
                k += 1;
            }
            k
        };
        let r_max = self.ratios.iter().copied().fold(0.0, f64::max);
        LengthBounds {
            ell: self.ell,
            ell_max: self.ell_max,
            ell_formula: steps(self.r_min),
            ell_max_formula: steps(r_max),
        }
    }

    /// Checks that each `[w]` equals the union of the cylinders `[w_1 j]`
    /// (`j ∈ P_δ`) it contains, by comparing probability mass. Uses a plain
    /// word set rather than the enumeration tree.
    pub fn verify_markov_property(&self) -> MarkovCheck {
        let set: HashMap<&[u8], usize> = self
            .words
            .iter()
            .enumerate()
            .map(|(i, w)| (w.symbols.as_slice(), i))
            .collect();
        let mut mass = vec![0.0; self.words.len()];
        let mut key = Vec::new();
        for j in &self.words {
            for i1 in 0..self.n_symbols as u8 {
                key.clear();
                key.push(i1);
                key.extend_from_slice(&j.symbols);
                if let Some(&w) = (1..=key.len()).find_map(|m| set.get(&key[..m])) {
                    mass[w] += self.probs[i1 as usize] * j.prob;
                }
            }
        }
        for (w, m) in self.words.iter().zip(mass) {
            if (m - w.prob).abs() > MASS_TOLERANCE * w.prob {
                return MarkovCheck::Fails {
                    witness: w.clone(),
                    mass: m,
                    expected: w.prob,
                };
            }
        }
        MarkovCheck::Holds
    }

    /// Checks every structural invariant of `P_δ`.
    pub fn validate(&self) -> Result<()> {
        let fail = |message: String, residual: f64| Error::Numeric { message, residual };
        for w in &self.words {
            if w.len() < 2 {
                return Err(fail(format!("word {w} shorter than 2"), 0.0));
            }
            let (parent, _) = products(&self.ratios, &self.probs, &w.symbols[..w.len() - 1]);
            if !(w.ratio <= self.delta && self.delta < parent) {
                return Err(fail(format!("word {w} violates r_w <= delta < r_w-"), 0.0));
            }
        }
        let mut seen = HashSet::new();
        for pair in self.words.windows(2) {
            if pair[0].symbols >= pair[1].symbols {
                return Err(fail("words not strictly sorted".into(), 0.0));
            }
            if pair[1].symbols.starts_with(&pair[0].symbols) {
                return Err(fail(format!("{} is a prefix of {}", pair[0], pair[1]), 0.0));
            }
        }
        for w in &self.words {
            if !seen.insert(w.symbols.as_slice()) {
                return Err(fail(format!("duplicate word {w}"), 0.0));
            }
        }
        let p_sum: f64 = self.words.iter().map(|w| w.prob).sum();
        if (p_sum - 1.0).abs() > MASS_TOLERANCE {
            return Err(fail("probability masses do not sum to 1".into(), p_sum - 1.0));
        }
        let r_sum: f64 = self.words.iter().map(|w| w.ratio.powf(self.s)).sum();
        if (r_sum - 1.0).abs() > MASS_TOLERANCE {
            return Err(fail("natural masses do not sum to 1".into(), r_sum - 1.0));
        }
        let (lo, hi) = self.cardinality_bounds();
        let count = self.words.len() as f64;
        if count < lo * (1.0 - 1e-9) || count > hi * (1.0 + 1e-9) {
            return Err(fail(
                format!("N_delta = {count} outside [{lo}, {hi}]"),
                count,
            ));
        }
        Ok(())
    }

    /// `(δ^{−s}, r_min^{−s} δ^{−s})`.
    pub fn cardinality_bounds(&self) -> (f64, f64) {
        let lo = self.delta.powf(-self.s);
        (lo, self.r_min.powf(-self.s) * lo)
    }

    /// `word,ratio,prob` lines with 17 significant digits.
    pub fn dump(&self) -> String {
        let mut out = String::from("word,ratio,prob\n");
        for w in &self.words {
            out.push_str(&format!(
                "{},{},{}\n",
                w,
                crate::report::fmt17(w.ratio),
                crate::report::fmt17(w.prob)
            ));
        }
        out
    }
}
