//! δ-sweeps, growth-rate predictions, exponent fits and bound reports.

use std::fmt::Write as _;
use std::str::FromStr;

use rand::seq::index;

use crate::chain::Chain;
use crate::cover::{estimate_subset_cover_time, DEFAULT_CHAIN_STEP_CAP};
use crate::error::{Error, Result};
use crate::game::{estimate_mean_waiting, WaitingSample, DEFAULT_STEP_CAP, MAX_NET_RATIO};
use crate::hitting::{exact_subset_cover_time, matthews_lower, matthews_upper, HittingSolver, MatthewsBound, EXACT_COVER_LIMIT};
use crate::ifs::IfsSystem;
use crate::net::ReferenceNet;
use crate::partition::{Partition, Word};
use crate::report::{csv_line, fmt17};
use crate::sampling::{mix_seed, trial_rng};

/// Depth cap for the diameter estimate behind every net.
pub const DIAMETER_DEPTH: u32 = 8;

/// Growth-rate prediction `δ^{−t} log(1/δ)`, or the band
/// `[δ^{−t} log log(1/δ), δ^{−t} (log log(1/δ))²]` when the maximum defining
/// `t` is attained by a single map.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TheoryPrediction {
    pub delta: f64,
    pub t: f64,
    pub unique_max: bool,
    pub lo: f64,
    pub hi: f64,
}

impl TheoryPrediction {
    pub fn point_prediction(&self) -> Option<f64> {
        (!self.unique_max).then_some(self.lo)
    }
}

pub fn theory_prediction(delta: f64, t: f64, unique_max: bool) -> Result<TheoryPrediction> {
    if !(delta > 0.0 && delta < (-1.0f64).exp()) {
        return Err(Error::invalid(format!("delta must lie in (0, 1/e), got {delta}")));
    }
    if !(t > 0.0 && t.is_finite()) {
        return Err(Error::invalid("exponent t must be positive"));
    }
    let scale = delta.powf(-t);
    let log = (1.0 / delta).ln();
    let (lo, hi) = if unique_max {
        let ll = log.ln();
        (scale * ll, scale * ll * ll)
    } else {
        (scale * log, scale * log)
    };
    Ok(TheoryPrediction {
        delta,
        t,
        unique_max,
        lo,
        hi,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub delta: f64,
    pub trials: u64,
    pub mean_w: f64,
    pub std_error: f64,
    pub censored_fraction: f64,
    pub prediction: TheoryPrediction,
    pub n_delta: usize,
    pub t: f64,
    pub s: f64,
    pub samples: Vec<WaitingSample>,
}

pub const SWEEP_CSV_HEADER: &str =
    "delta,trials,mean_W,std_error,censored_fraction,prediction_lo,prediction_hi,N_delta,t,s\n";

impl SweepRow {
    pub fn csv_row(&self) -> String {
        csv_line([
            fmt17(self.delta),
            self.trials.to_string(),
            fmt17(self.mean_w),
            fmt17(self.std_error),
            fmt17(self.censored_fraction),
            fmt17(self.prediction.lo),
            fmt17(self.prediction.hi),
            self.n_delta.to_string(),
            fmt17(self.t),
            fmt17(self.s),
        ])
    }

    pub fn is_censored(&self) -> bool {
        self.censored_fraction > 0.0
    }
}

pub fn sweep_csv(rows: &[SweepRow]) -> String {
    let mut out = String::from(SWEEP_CSV_HEADER);
    for r in rows {
        out.push_str(&r.csv_row());
    }
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepOptions {
    pub trials: u64,
    pub master_seed: u64,
    /// `ρΔ̂ = net_ratio · δ` on every row.
    pub net_ratio: f64,
    pub cap: u64,
    /// Starting point; the fixed point of the first map when `None`.
    pub v0: Option<Vec<f64>>,
}

impl SweepOptions {
    pub fn new(trials: u64, master_seed: u64) -> Self {
        SweepOptions {
            trials,
            master_seed,
            net_ratio: MAX_NET_RATIO,
            cap: DEFAULT_STEP_CAP,
            v0: None,
        }
    }
}

/// Reference net with mesh `ρΔ̂ = net_ratio · δ` based at `base`, where `Δ̂`
/// is the certified upper bound on the diameter (the sampled estimate can fall
/// short of the true diameter).
pub fn net_for_delta(system: &IfsSystem, delta: f64, net_ratio: f64, base: &[f64]) -> Result<ReferenceNet> {
    if !(net_ratio > 0.0 && net_ratio <= MAX_NET_RATIO) {
        return Err(Error::invalid(format!("net ratio must lie in (0, 1/4], got {net_ratio}")));
    }
    let diam = system
        .diameter_estimate(system.affordable_depth(DIAMETER_DEPTH))?
        .upper_bound;
    ReferenceNet::build(system, net_ratio * delta / diam, base, diam)
}

/// One row per δ, in input order; row `k` uses the master seed mixed with `k`.
pub fn run_sweep(system: &IfsSystem, deltas: &[f64], opts: &SweepOptions) -> Result<Vec<SweepRow>> {
    if deltas.is_empty() {
        return Err(Error::invalid("empty delta list"));
    }
    let v0 = opts.v0.clone().unwrap_or_else(|| system.default_base_point());
    let exp = system.exponent_t();
    let s = system.similarity_dimension();
    let mut rows = Vec::with_capacity(deltas.len());
    for (k, &delta) in deltas.iter().enumerate() {
        let prediction = theory_prediction(delta, exp.t, exp.unique_max)?;
        let n_delta = Partition::build(system, delta)?.len();
        let net = net_for_delta(system, delta, opts.net_ratio, &v0)?;
        let est = estimate_mean_waiting(
            system,
            &v0,
            delta,
            &net,
            opts.trials,
            mix_seed(opts.master_seed, k as u64),
            opts.cap,
        )?;
        rows.push(SweepRow {
            delta,
            trials: opts.trials,
            mean_w: est.mean,
            std_error: est.std_error,
            censored_fraction: est.censored_fraction,
            prediction,
            n_delta,
            t: exp.t,
            s,
            samples: est.samples,
        });
    }
    Ok(rows)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FitModel {
    /// `log mean = t·log(1/δ) + c`
    PurePower,
    /// `log mean = t·log(1/δ) + log log(1/δ) + c`
    PowerTimesLog,
}

impl FromStr for FitModel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "pure-power" => Ok(FitModel::PurePower),
            "power-times-log" => Ok(FitModel::PowerTimesLog),
            _ => Err(Error::invalid(format!(
                "unknown fit model {s:?} (expected pure-power or power-times-log)"
            ))),
        }
    }
}

impl std::fmt::Display for FitModel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            FitModel::PurePower => "pure-power",
            FitModel::PowerTimesLog => "power-times-log",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FitResult {
    pub t_hat: f64,
    pub intercept: f64,
    pub residual_rms: f64,
    pub model: FitModel,
    pub rows_used: usize,
}

/// Least-squares fit of the growth exponent over the uncensored rows.
pub fn fit_exponent(rows: &[SweepRow], model: FitModel) -> Result<FitResult> {
    let points: Vec<(f64, f64)> = rows
        .iter()
        .filter(|r| !r.is_censored() && r.mean_w > 0.0)
        .map(|r| (r.delta, r.mean_w))
        .collect();
    fit_points(&points, model)
}

/// Same as [`fit_exponent`] on bare `(δ, mean)` pairs.
pub fn fit_points(points: &[(f64, f64)], model: FitModel) -> Result<FitResult> {
    if points.len() < 3 {
        return Err(Error::invalid(format!(
            "fitting needs at least 3 usable rows, got {}",
            points.len()
        )));
    }
    let xy: Vec<(f64, f64)> = points
        .iter()
        .map(|&(delta, mean)| {
            let x = (1.0 / delta).ln();
            let y = match model {
                FitModel::PurePower => mean.ln(),
                FitModel::PowerTimesLog => mean.ln() - x.ln(),
            };
            (x, y)
        })
        .collect();
    let n = xy.len() as f64;
    let mx = xy.iter().map(|p| p.0).sum::<f64>() / n;
    let my = xy.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = xy.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = xy.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    if sxx.is_nan() || sxx <= 0.0 || !sxy.is_finite() {
        return Err(Error::invalid("fit needs at least two distinct, finite rows"));
    }
    let t_hat = sxy / sxx;
    let intercept = my - t_hat * mx;
    let sse: f64 = xy.iter().map(|p| (p.1 - t_hat * p.0 - intercept).powi(2)).sum();
    Ok(FitResult {
        t_hat,
        intercept,
        residual_rms: (sse / n).sqrt(),
        model,
        rows_used: xy.len(),
    })
}

/// Which states a bounds report is about.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum SubsetSpec {
    All,
    /// Explicit partition words, e.g. `words:11,12,21`.
    Words(Vec<String>),
    /// `random:K:SEED`: K distinct states chosen with a seeded generator.
    Random { size: usize, seed: u64 },
    /// The constant words `i…i`, one per symbol.
    Constant,
}

impl FromStr for SubsetSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        if s == "all" {
            return Ok(SubsetSpec::All);
        }
        if s == "constant" {
            return Ok(SubsetSpec::Constant);
        }
        if let Some(rest) = s.strip_prefix("words:") {
            let words: Vec<String> = rest
                .split(',')
                .map(|w| w.trim().to_string())
                .filter(|w| !w.is_empty())
                .collect();
            if words.is_empty() {
                return Err(Error::invalid("words: subset lists no words"));
            }
            return Ok(SubsetSpec::Words(words));
        }
        if let Some(rest) = s.strip_prefix("random:") {
            let mut parts = rest.split(':');
            let size = parts.next().and_then(|k| k.parse().ok());
            let seed = parts.next().and_then(|k| k.parse().ok());
            if let (Some(size), Some(seed), None) = (size, seed, parts.next()) {
                return Ok(SubsetSpec::Random { size, seed });
            }
        }
        Err(Error::invalid(format!(
            "bad subset spec {s:?} (expected all, constant, words:W1,W2,… or random:K:SEED)"
        )))
    }
}

impl SubsetSpec {
    /// Sorted, de-duplicated state indices.
    pub fn resolve(&self, system: &IfsSystem, partition: &Partition) -> Result<Vec<usize>> {
        let n = partition.len();
        let mut states = match self {
            SubsetSpec::All => (0..n).collect(),
            SubsetSpec::Constant => (0..partition.n_symbols() as u8)
                .map(|sym| partition.constant_word(sym))
                .collect(),
            SubsetSpec::Words(words) => words
                .iter()
                .map(|text| {
                    let w = Word::parse(system, text)?;
                    partition
                        .index_of(w.symbols())
                        .ok_or_else(|| Error::invalid(format!("{text} is not a word of the partition")))
                })
                .collect::<Result<Vec<_>>>()?,
            SubsetSpec::Random { size, seed } => {
                if *size == 0 || *size > n {
                    return Err(Error::invalid(format!(
                        "random subset size must lie in [1, {n}], got {size}"
                    )));
                }
                index::sample(&mut trial_rng(*seed), n, *size).into_vec()
            }
        };
        states.sort_unstable();
        states.dedup();
        Ok(states)
    }
}

/// Matthews bounds on the cover time of a subset, compared with an exact or
/// Monte Carlo estimate started at the subset's first state.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundsReport {
    pub delta: f64,
    pub n_states: usize,
    pub subset: Vec<usize>,
    pub start: usize,
    pub upper: MatthewsBound,
    /// Absent for single-state subsets.
    pub lower: Option<MatthewsBound>,
    pub estimate: f64,
    /// Zero when the estimate is exact.
    pub std_error: f64,
    pub exact: bool,
}

impl BoundsReport {
    /// `lower ≤ estimate + 3·SE`.
    pub fn lower_ok(&self) -> bool {
        self.lower
            .as_ref()
            .is_none_or(|l| l.value <= self.estimate + 3.0 * self.std_error + 1e-9 * l.value)
    }

    /// `estimate − 3·SE ≤ upper`.
    pub fn upper_ok(&self) -> bool {
        self.estimate - 3.0 * self.std_error <= self.upper.value * (1.0 + 1e-9)
    }

    pub fn holds(&self) -> bool {
        self.lower_ok() && self.upper_ok()
    }

    pub fn render(&self, partition: &Partition) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "delta = {}", fmt17(self.delta));
        let _ = writeln!(out, "states = {}", self.n_states);
        let _ = writeln!(out, "subset_size = {}", self.subset.len());
        let _ = writeln!(out, "start = {}", partition.word(self.start).label());
        let _ = writeln!(
            out,
            "matthews_upper = {} (max hit {} x H {})",
            fmt17(self.upper.value),
            fmt17(self.upper.extremal_hit),
            fmt17(self.upper.harmonic)
        );
        match &self.lower {
            Some(l) => {
                let _ = writeln!(
                    out,
                    "matthews_lower = {} (min hit {} x H {})",
                    fmt17(l.value),
                    fmt17(l.extremal_hit),
                    fmt17(l.harmonic)
                );
            }
            None => {
                let _ = writeln!(out, "matthews_lower = n/a");
            }
        }
        let kind = if self.exact { "exact" } else { "monte_carlo" };
        let _ = writeln!(out, "cover_time = {} ({kind})", fmt17(self.estimate));
        let _ = writeln!(out, "std_error = {}", fmt17(self.std_error));
        let _ = writeln!(out, "lower_ok = {}", self.lower_ok());
        let _ = writeln!(out, "upper_ok = {}", self.upper_ok());
        out
    }
}

pub fn bounds_report(chain: &Chain, subset: &[usize], trials: u64, master_seed: u64) -> Result<BoundsReport> {
    let solver = HittingSolver::for_chain(chain)?;
    let upper = matthews_upper(&solver, Some(subset))?;
    let states = upper.subset.clone();
    let lower = if states.len() >= 2 {
        Some(matthews_lower(&solver, &states)?)
    } else {
        None
    };
    let start = states[0];
    let n = chain.n_states();
    let (estimate, std_error, exact) = if n <= EXACT_COVER_LIMIT {
        (exact_subset_cover_time(chain.kernel(), start, &states)?, 0.0, true)
    } else {
        if trials == 0 {
            return Err(Error::invalid("Monte Carlo comparison needs at least one trial"));
        }
        let est = estimate_subset_cover_time(chain.kernel(), start, &states, trials, master_seed, DEFAULT_CHAIN_STEP_CAP)?;
        (est.mean, est.std_error, false)
    };
    Ok(BoundsReport {
        delta: chain.partition().delta(),
        n_states: n,
        subset: states,
        start,
        upper,
        lower,
        estimate,
        std_error,
        exact,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn synthetic(model: FitModel, t: f64, c: f64) -> Vec<(f64, f64)> {
        (3..=8)
            .map(|k| {
                let delta = 2f64.powi(-k);
                let x = (1.0 / delta).ln();
                let mean = match model {
                    FitModel::PurePower => c * delta.powf(-t),
                    FitModel::PowerTimesLog => c * delta.powf(-t) * x,
                };
                (delta, mean)
            })
            .collect()
    }

    #[test]
    fn figure_predictions() {
        let t = 3f64.ln() / 2f64.ln();
        let p = theory_prediction(2f64.powi(-6), t, false).unwrap();
        assert!((p.lo - 3032.0).abs() / 3032.0 < 1e-3, "{}", p.lo);
        assert_eq!(p.point_prediction(), Some(p.lo));
        let q = theory_prediction(2f64.powi(-6), 2.0, false).unwrap();
        assert!((q.lo - 17035.0).abs() / 17035.0 < 1e-3, "{}", q.lo);
    }

    #[test]
    fn unique_band() {
        let p = theory_prediction(2f64.powi(-6), 1.0, true).unwrap();
        let ll = 64f64.ln().ln();
        // ln ln 64 = 1.42525…; the commonly quoted 1.4255 and 2.0321 are rounded up.
        assert!((ll - 1.4255).abs() < 5e-4);
        assert!((ll * ll - 2.0321).abs() < 1e-3);
        assert!((p.lo - 64.0 * ll).abs() < 1e-9);
        assert!((p.hi - 64.0 * ll * ll).abs() < 1e-9);
        assert!(p.lo <= p.hi);
        assert_eq!(p.point_prediction(), None);
    }

    #[test]
    fn prediction_domain() {
        assert!(theory_prediction(0.5, 1.0, false).is_err());
        assert!(theory_prediction(0.0, 1.0, false).is_err());
        assert!(theory_prediction(0.36, 1.0, true).unwrap().lo > 0.0);
    }

    #[test]
    fn noiseless_fits_recover_exponent() {
        let f = fit_points(&synthetic(FitModel::PowerTimesLog, 2.0, 1.0), FitModel::PowerTimesLog).unwrap();
        assert!((f.t_hat - 2.0).abs() < 1e-9);
        assert!(f.intercept.abs() < 1e-9);
        let g = fit_points(&synthetic(FitModel::PurePower, 1.5, 3.0), FitModel::PurePower).unwrap();
        assert!((g.t_hat - 1.5).abs() < 1e-9);
        assert!((g.intercept - 3f64.ln()).abs() < 1e-9);
        assert!(g.residual_rms < 1e-9);
    }

    #[test]
    fn fit_needs_three_rows() {
        let pts = synthetic(FitModel::PurePower, 1.5, 1.0);
        assert!(matches!(fit_points(&pts[..2], FitModel::PurePower), Err(Error::InvalidInput(_))));
    }

    #[test]
    fn model_names_round_trip() {
        for m in [FitModel::PurePower, FitModel::PowerTimesLog] {
            assert_eq!(m.to_string().parse::<FitModel>().unwrap(), m);
        }
        assert!("cubic".parse::<FitModel>().is_err());
    }

    #[test]
    fn subset_specs() {
        let sys = IfsSystem::sierpinski([1.0 / 3.0; 3]).unwrap();
        let part = Partition::build(&sys, 0.25).unwrap();
        assert_eq!("all".parse::<SubsetSpec>().unwrap().resolve(&sys, &part).unwrap().len(), 9);
        assert_eq!(
            "constant".parse::<SubsetSpec>().unwrap().resolve(&sys, &part).unwrap(),
            vec![0, 4, 8]
        );
        assert_eq!(
            "words:12,31".parse::<SubsetSpec>().unwrap().resolve(&sys, &part).unwrap(),
            vec![1, 6]
        );
        let r = "random:4:7".parse::<SubsetSpec>().unwrap().resolve(&sys, &part).unwrap();
        assert_eq!(r.len(), 4);
        assert_eq!(r, "random:4:7".parse::<SubsetSpec>().unwrap().resolve(&sys, &part).unwrap());
        assert!("words:1".parse::<SubsetSpec>().unwrap().resolve(&sys, &part).is_err());
        assert!("random:4".parse::<SubsetSpec>().is_err());
        assert!("random:10:1".parse::<SubsetSpec>().unwrap().resolve(&sys, &part).is_err());
    }

    #[test]
    fn four_state_bounds_bracket_exact() {
        let sys = IfsSystem::new(
            vec![
                crate::ifs::Similitude::homothety(0.5, vec![0.0]).unwrap(),
                crate::ifs::Similitude::homothety(0.5, vec![0.5]).unwrap(),
            ],
            vec![0.5, 0.5],
        )
        .unwrap();
        let chain = Chain::build(Partition::build(&sys, 0.25).unwrap()).unwrap();
        let all: Vec<usize> = (0..4).collect();
        let rep = bounds_report(&chain, &all, 0, 0).unwrap();
        assert!(rep.exact);
        assert!(rep.holds(), "{rep:?}");
        let lower = rep.lower.as_ref().unwrap().value;
        assert!(lower <= rep.estimate && rep.estimate <= rep.upper.value);
    }

    #[test]
    fn single_state_lower_bound_rejected() {
        let chain = crate::chain::tests::uniform9();
        let solver = HittingSolver::for_chain(&chain).unwrap();
        assert!(matches!(matthews_lower(&solver, &[3]), Err(Error::InvalidInput(_))));
        let rep = bounds_report(&chain, &[3], 0, 0).unwrap();
        assert!(rep.lower.is_none());
        assert_eq!(rep.estimate, 0.0);
    }

    #[test]
    fn sweep_single_row_is_reproducible() {
        let sys = IfsSystem::sierpinski([1.0 / 3.0; 3]).unwrap();
        let opts = SweepOptions::new(1, 42);
        let a = run_sweep(&sys, &[0.125], &opts).unwrap();
        let b = run_sweep(&sys, &[0.125], &opts).unwrap();
        assert_eq!(a.len(), 1);
        assert_eq!(sweep_csv(&a), sweep_csv(&b));
        assert_eq!(a[0].n_delta, 27);
        let (lo, hi) = (0.125f64.powf(-a[0].s), 0.125f64.powf(-a[0].s) * 0.5f64.powf(-a[0].s));
        assert!(lo * (1.0 - 1e-9) <= 27.0 && 27.0 <= hi * (1.0 + 1e-9));
        assert!(sweep_csv(&a).starts_with(SWEEP_CSV_HEADER));
    }
}
