//! The chaos game: random iteration `x_n = S_{i_n} x_{n−1}`, δ-density
//! tracking against a reference net, and waiting-time sampling both in space
//! and on the symbolic chain.

use rand::Rng;

use crate::chain::Chain;
use crate::error::{Error, Result};
use crate::ifs::IfsSystem;
use crate::net::ReferenceNet;
use crate::report::{csv_line, fmt17};
use crate::sampling::{run_trials, trial_rng, MeanEstimate, SymbolSampler, TrialRng};

pub const DEFAULT_STEP_CAP: u64 = 100_000_000;
/// Largest allowed `ρΔ̂ / δ`.
pub const MAX_NET_RATIO: f64 = 0.25;

/// One chaos-game orbit.
pub struct Trajectory<'a> {
    system: &'a IfsSystem,
    sampler: SymbolSampler,
    rng: TrialRng,
    point: Vec<f64>,
    scratch: Vec<f64>,
    steps: u64,
}

impl<'a> Trajectory<'a> {
    pub fn new(system: &'a IfsSystem, start: &[f64], seed: u64) -> Result<Self> {
        if start.len() != system.dim() {
            return Err(Error::invalid("starting point has wrong dimension"));
        }
        Ok(Trajectory {
            system,
            sampler: SymbolSampler::new(system.probs()),
            rng: trial_rng(seed),
            point: start.to_vec(),
            scratch: vec![0.0; system.dim()],
            steps: 0,
        })
    }

    /// Draws `i` with probability `p_i` and moves to `S_i(x)`.
    #[inline]
    pub fn run_step(&mut self) -> (u8, &[f64]) {
        let sym = self.sampler.sample(&mut self.rng);
        self.apply_symbol(sym);
        (sym, &self.point)
    }

    /// Moves to `S_sym(x)` without drawing.
    #[inline]
    pub fn apply_symbol(&mut self, sym: u8) {
        self.system.maps()[sym as usize].apply_into(&self.point, &mut self.scratch);
        std::mem::swap(&mut self.point, &mut self.scratch);
        self.steps += 1;
    }

    pub fn point(&self) -> &[f64] {
        &self.point
    }

    pub fn step_count(&self) -> u64 {
        self.steps
    }
}

/// Uniform grid over a point set, for fixed-radius neighbour queries.
#[derive(Debug, Clone)]
pub struct SpatialGrid {
    dim: usize,
    origin: Vec<f64>,
    cell: f64,
    shape: Vec<usize>,
    cell_start: Vec<u32>,
    items: Vec<u32>,
}

const MAX_CELLS_PER_POINT: usize = 4;

impl SpatialGrid {
    /// Cell side is at least `min_cell`, enlarged if the grid would otherwise
    /// hold far more cells than points.
    pub fn new(points: &[f64], dim: usize, min_cell: f64) -> Self {
        let n = points.len() / dim;
        let mut lo = vec![f64::INFINITY; dim];
        let mut hi = vec![f64::NEG_INFINITY; dim];
        for p in points.chunks_exact(dim) {
            for k in 0..dim {
                lo[k] = lo[k].min(p[k]);
                hi[k] = hi[k].max(p[k]);
            }
        }
        if n == 0 {
            lo = vec![0.0; dim];
            hi = vec![0.0; dim];
        }
        let budget = (MAX_CELLS_PER_POINT * n).max(64) as f64;
        let mut cell = min_cell.max(f64::MIN_POSITIVE);
        let shape_for = |cell: f64| -> Vec<usize> {
            (0..dim)
                .map(|k| ((hi[k] - lo[k]) / cell).floor() as usize + 1)
                .collect()
        };
        let mut shape = shape_for(cell);
        while shape.iter().map(|&s| s as f64).product::<f64>() > budget {
            cell *= 1.5;
            shape = shape_for(cell);
        }
        let total: usize = shape.iter().product();
        let mut grid = SpatialGrid {
            dim,
            origin: lo,
            cell,
            shape,
            cell_start: vec![0; total + 1],
            items: vec![0; n],
        };
        let cells: Vec<usize> = points
            .chunks_exact(dim)
            .map(|p| grid.cell_of(p).expect("net points lie inside their own box"))
            .collect();
        for &c in &cells {
            grid.cell_start[c + 1] += 1;
        }
        for c in 0..total {
            grid.cell_start[c + 1] += grid.cell_start[c];
        }
        let mut fill = grid.cell_start.clone();
        for (i, &c) in cells.iter().enumerate() {
            grid.items[fill[c] as usize] = i as u32;
            fill[c] += 1;
        }
        grid
    }

    pub fn cell_side(&self) -> f64 {
        self.cell
    }

    pub fn n_cells(&self) -> usize {
        self.cell_start.len() - 1
    }

    fn coords<'s>(&'s self, x: &'s [f64]) -> impl Iterator<Item = i64> + 's {
        x.iter()
            .zip(&self.origin)
            .map(move |(v, o)| ((v - o) / self.cell).floor() as i64)
    }

    fn cell_of(&self, x: &[f64]) -> Option<usize> {
        let mut idx = 0usize;
        for (k, c) in self.coords(x).enumerate() {
            if c < 0 || c as usize >= self.shape[k] {
                return None;
            }
            idx = idx * self.shape[k] + c as usize;
        }
        Some(idx)
    }

    pub fn cell_items(&self, cell: usize) -> &[u32] {
        &self.items[self.cell_start[cell] as usize..self.cell_start[cell + 1] as usize]
    }

    /// Calls `f(cell)` for every in-range cell within one step of `x`'s cell
    /// along each axis; this covers every point within `cell_side` of `x`.
    pub fn for_each_neighbor_cell(&self, x: &[f64], mut f: impl FnMut(usize)) {
        let d = self.dim;
        let mut base = [0i64; 8];
        let mut heap;
        let center: &mut [i64] = if d <= 8 {
            &mut base[..d]
        } else {
            heap = vec![0i64; d];
            &mut heap[..]
        };
        for (k, c) in self.coords(x).enumerate() {
            center[k] = c;
        }
        let combos = 3usize.pow(d as u32);
        'outer: for code in 0..combos {
            let mut rest = code;
            let mut idx = 0usize;
            for k in 0..d {
                let off = (rest % 3) as i64 - 1;
                rest /= 3;
                let c = center[k] + off;
                if c < 0 || c as usize >= self.shape[k] {
                    continue 'outer;
                }
                idx = idx * self.shape[k] + c as usize;
            }
            f(idx);
        }
    }
}

/// Records which net points have come within `radius` of the orbit.
#[derive(Debug, Clone)]
pub struct CoverTracker<'a> {
    points: &'a [f64],
    dim: usize,
    radius2: f64,
    grid: SpatialGrid,
    covered: Vec<bool>,
    uncovered: usize,
    cell_uncovered: Vec<u32>,
}

impl<'a> CoverTracker<'a> {
    pub fn new(net: &'a ReferenceNet, radius: f64) -> Self {
        Self::from_points(net.points_flat(), net.dim(), radius)
    }

    pub fn from_points(points: &'a [f64], dim: usize, radius: f64) -> Self {
        let grid = SpatialGrid::new(points, dim, radius);
        let cell_uncovered = (0..grid.n_cells())
            .map(|c| grid.cell_items(c).len() as u32)
            .collect();
        let n = points.len() / dim;
        CoverTracker {
            points,
            dim,
            radius2: radius * radius,
            grid,
            covered: vec![false; n],
            uncovered: n,
            cell_uncovered,
        }
    }

    /// Marks every net point within `radius` of `x`; returns how many were new.
    #[inline]
    pub fn mark(&mut self, x: &[f64]) -> usize {
        let before = self.uncovered;
        let d = self.dim;
        let grid = &self.grid;
        let points = self.points;
        let covered = &mut self.covered;
        let cell_uncovered = &mut self.cell_uncovered;
        let r2 = self.radius2;
        let mut newly = 0usize;
        grid.for_each_neighbor_cell(x, |cell| {
            if cell_uncovered[cell] == 0 {
                return;
            }
            for &i in grid.cell_items(cell) {
                let i = i as usize;
                if covered[i] {
                    continue;
                }
                let p = &points[i * d..(i + 1) * d];
                let d2: f64 = p.iter().zip(x).map(|(a, b)| (a - b) * (a - b)).sum();
                if d2 <= r2 {
                    covered[i] = true;
                    cell_uncovered[cell] -= 1;
                    newly += 1;
                }
            }
        });
        self.uncovered -= newly;
        before - self.uncovered
    }

    pub fn uncovered_count(&self) -> usize {
        self.uncovered
    }

    pub fn is_complete(&self) -> bool {
        self.uncovered == 0
    }

    pub fn covered_flags(&self) -> &[bool] {
        &self.covered
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WaitingSample {
    pub steps: u64,
    pub censored: bool,
    pub delta: f64,
    pub seed: u64,
}

impl WaitingSample {
    /// `delta,seed,steps,censored`
    pub fn csv_row(&self) -> String {
        csv_line([
            fmt17(self.delta),
            self.seed.to_string(),
            self.steps.to_string(),
            self.censored.to_string(),
        ])
    }
}

pub const SAMPLE_CSV_HEADER: &str = "delta,seed,steps,censored\n";

fn check_net(system: &IfsSystem, delta: f64, net: &ReferenceNet) -> Result<()> {
    if !(delta > 0.0 && delta < system.r_min()) {
        return Err(Error::invalid(format!(
            "delta must lie in (0, r_min = {}), got {delta}",
            system.r_min()
        )));
    }
    if net.dim() != system.dim() {
        return Err(Error::invalid("net dimension differs from system dimension"));
    }
    if net.density_radius() > MAX_NET_RATIO * delta * (1.0 + 1e-12) {
        return Err(Error::invalid(format!(
            "net too coarse: rho*diam = {} exceeds delta/4 = {}",
            net.density_radius(),
            delta / 4.0
        )));
    }
    Ok(())
}

/// One sample of `W_{δ,v0}`: the first `n ≥ 1` at which `{x_0, …, x_n}` comes
/// within `delta` of every net point.
pub fn waiting_time_sample(
    system: &IfsSystem,
    v0: &[f64],
    delta: f64,
    net: &ReferenceNet,
    seed: u64,
    cap: u64,
) -> Result<WaitingSample> {
    check_net(system, delta, net)?;
    let mut tracker = CoverTracker::new(net, delta);
    let mut traj = Trajectory::new(system, v0, seed)?;
    tracker.mark(v0);
    loop {
        let n = traj.step_count();
        if n >= 1 && tracker.is_complete() {
            return Ok(WaitingSample {
                steps: n,
                censored: false,
                delta,
                seed,
            });
        }
        if n >= cap {
            return Ok(WaitingSample {
                steps: cap,
                censored: true,
                delta,
                seed,
            });
        }
        let (_, x) = traj.run_step();
        tracker.mark(x);
    }
}

/// One sample of the symbolic waiting time: the chain's cover time from `start`.
pub fn symbolic_waiting_time_sample(chain: &Chain, start: usize, seed: u64, cap: u64) -> Result<WaitingSample> {
    if start >= chain.n_states() {
        return Err(Error::invalid("start state out of range"));
    }
    let delta = chain.partition().delta();
    match crate::cover::sample_cover_time(chain.kernel(), start, seed, cap) {
        Ok(steps) => Ok(WaitingSample {
            steps,
            censored: false,
            delta,
            seed,
        }),
        Err(Error::Censored { cap }) => Ok(WaitingSample {
            steps: cap,
            censored: true,
            delta,
            seed,
        }),
        Err(e) => Err(e),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct WaitingEstimate {
    /// Mean over uncensored samples.
    pub mean: f64,
    pub std_error: f64,
    pub censored_fraction: f64,
    pub samples: Vec<WaitingSample>,
}

pub fn estimate_mean_waiting(
    system: &IfsSystem,
    v0: &[f64],
    delta: f64,
    net: &ReferenceNet,
    trials: u64,
    master_seed: u64,
    cap: u64,
) -> Result<WaitingEstimate> {
    if trials == 0 {
        return Err(Error::invalid("need at least one trial"));
    }
    check_net(system, delta, net)?;
    let samples = run_trials(trials, master_seed, |seed| {
        waiting_time_sample(system, v0, delta, net, seed, cap)
    })
    .into_iter()
    .collect::<Result<Vec<_>>>()?;
    let done: Vec<f64> = samples
        .iter()
        .filter(|s| !s.censored)
        .map(|s| s.steps as f64)
        .collect();
    let est = MeanEstimate::from_samples(&done);
    Ok(WaitingEstimate {
        mean: est.mean,
        std_error: est.std_error,
        censored_fraction: (samples.len() - done.len()) as f64 / samples.len() as f64,
        samples,
    })
}

/// Fixture for driving the symbolic chain and two geometric trackers with one
/// shared symbol stream.
pub struct PairedStream<'a> {
    pub system: &'a IfsSystem,
    pub chain: &'a Chain,
    pub start_state: usize,
    pub v0: Vec<f64>,
    /// Net and radius for the lower side, radius `2Δ̂δ`.
    pub coarse: (&'a ReferenceNet, f64),
    /// Net and radius for the upper side, radius `κδ`.
    pub fine: (&'a ReferenceNet, f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PairedOutcome {
    pub coarse_w: u64,
    pub symbolic_w: u64,
    pub fine_w: u64,
    pub censored: bool,
}

impl PairedOutcome {
    pub fn sandwich_holds(&self) -> bool {
        !self.censored && self.coarse_w <= self.symbolic_w && self.symbolic_w <= self.fine_w
    }
}

impl PairedStream<'_> {
    /// Runs until all three waiting times are known. Times count the initial
    /// point/state at step 0 and are reported as `max(n, 1)`.
    pub fn run(&self, seed: u64, cap: u64) -> Result<PairedOutcome> {
        let mut coarse = CoverTracker::new(self.coarse.0, self.coarse.1);
        let mut fine = CoverTracker::new(self.fine.0, self.fine.1);
        let n_states = self.chain.n_states();
        let mut seen = vec![false; n_states];
        let mut state = self.start_state;
        seen[state] = true;
        let mut unseen = n_states - 1;

        let mut traj = Trajectory::new(self.system, &self.v0, seed)?;
        coarse.mark(&self.v0);
        fine.mark(&self.v0);
        let (mut cw, mut sw, mut fw) = (None, None, None);
        let mut n = 0u64;
        loop {
            let m = n.max(1);
            if cw.is_none() && coarse.is_complete() {
                cw = Some(m);
            }
            if sw.is_none() && unseen == 0 {
                sw = Some(m);
            }
            if fw.is_none() && fine.is_complete() {
                fw = Some(m);
            }
            if let (Some(c), Some(s), Some(f)) = (cw, sw, fw) {
                return Ok(PairedOutcome {
                    coarse_w: c,
                    symbolic_w: s,
                    fine_w: f,
                    censored: false,
                });
            }
            if n >= cap {
                return Ok(PairedOutcome {
                    coarse_w: cw.unwrap_or(cap),
                    symbolic_w: sw.unwrap_or(cap),
                    fine_w: fw.unwrap_or(cap),
                    censored: true,
                });
            }
            let (sym, x) = traj.run_step();
            if cw.is_none() {
                coarse.mark(x);
            }
            if fw.is_none() {
                fine.mark(x);
            }
            state = self.chain.target(state, sym);
            if !seen[state] {
                seen[state] = true;
                unseen -= 1;
            }
            n += 1;
        }
    }
}

/// Draws a uniform in `[0,1)`; kept here so tests can reproduce trajectory draws.
pub fn uniform(rng: &mut TrialRng) -> f64 {
    rng.random()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::partition::Partition;
    use rand::SeedableRng;

    fn sierpinski(p: [f64; 3]) -> IfsSystem {
        IfsSystem::sierpinski(p).unwrap()
    }

    fn net_for(system: &IfsSystem, delta: f64) -> ReferenceNet {
        let diam = system.diameter_estimate(8).unwrap().upper_bound;
        let rho = MAX_NET_RATIO * delta / diam;
        ReferenceNet::build(system, rho, &system.default_base_point(), diam).unwrap()
    }

    #[test]
    fn step_applies_the_drawn_map() {
        let sys = sierpinski([1.0 / 3.0; 3]);
        let mut t = Trajectory::new(&sys, &[0.0, 0.0], 3).unwrap();
        t.apply_symbol(1);
        assert_eq!(t.point(), &[0.5, 0.0]);
        for _ in 0..100 {
            let before = t.point().to_vec();
            let (sym, after) = t.run_step();
            let want = sys.maps()[sym as usize].apply(&before);
            assert_eq!(after, &want[..]);
        }
        assert_eq!(t.step_count(), 101);
    }

    #[test]
    fn trajectory_stays_in_bounding_box() {
        let sys = sierpinski([0.25, 0.25, 0.5]);
        let bbox = sys.bounding_box(8).unwrap();
        let mut t = Trajectory::new(&sys, &sys.default_base_point(), 1).unwrap();
        for _ in 0..1_000_000 {
            let (_, x) = t.run_step();
            assert!(bbox.contains(x, 1e-9));
        }
    }

    #[test]
    fn grid_marks_exactly_the_brute_force_set() {
        let sys = sierpinski([1.0 / 3.0; 3]);
        let net = net_for(&sys, 2f64.powi(-4));
        let mut rng = TrialRng::seed_from_u64(99);
        for radius in [0.01, 0.05, 0.2] {
            for _ in 0..200 {
                let x = [uniform(&mut rng) * 1.4 - 0.2, uniform(&mut rng) * 1.2 - 0.2];
                let mut tracker = CoverTracker::new(&net, radius);
                tracker.mark(&x);
                for i in 0..net.len() {
                    let p = net.point(i);
                    let d2 = (p[0] - x[0]).powi(2) + (p[1] - x[1]).powi(2);
                    assert_eq!(tracker.covered_flags()[i], d2 <= radius * radius);
                }
            }
        }
    }

    #[test]
    fn coverage_is_monotone() {
        let sys = sierpinski([1.0 / 3.0; 3]);
        let net = net_for(&sys, 2f64.powi(-4));
        let mut tracker = CoverTracker::new(&net, 2f64.powi(-4));
        let mut t = Trajectory::new(&sys, &[0.0, 0.0], 8).unwrap();
        let mut last = tracker.uncovered_count();
        let mut flags = tracker.covered_flags().to_vec();
        for _ in 0..2000 {
            let (_, x) = t.run_step();
            tracker.mark(x);
            assert!(tracker.uncovered_count() <= last);
            assert!(flags.iter().zip(tracker.covered_flags()).all(|(a, b)| !a || *b));
            assert_eq!(
                tracker.uncovered_count(),
                tracker.covered_flags().iter().filter(|c| !**c).count()
            );
            last = tracker.uncovered_count();
            flags = tracker.covered_flags().to_vec();
        }
    }

    #[test]
    fn waiting_time_is_monotone_in_delta() {
        let sys = sierpinski([1.0 / 3.0; 3]);
        let fine = 2f64.powi(-6);
        let coarse = 2f64.powi(-5);
        // One net fine enough for both radii.
        let net = net_for(&sys, fine);
        for seed in 0..10 {
            let a = waiting_time_sample(&sys, &[0.0, 0.0], coarse, &net, seed, DEFAULT_STEP_CAP).unwrap();
            let b = waiting_time_sample(&sys, &[0.0, 0.0], fine, &net, seed, DEFAULT_STEP_CAP).unwrap();
            assert!(a.steps <= b.steps);
            assert!(!a.censored && !b.censored);
        }
    }

    #[test]
    fn coarse_net_and_bad_delta_rejected() {
        let sys = sierpinski([1.0 / 3.0; 3]);
        let net = net_for(&sys, 2f64.powi(-3));
        assert!(matches!(
            waiting_time_sample(&sys, &[0.0, 0.0], 2f64.powi(-5), &net, 0, 10),
            Err(Error::InvalidInput(_))
        ));
        assert!(matches!(
            waiting_time_sample(&sys, &[0.0, 0.0], 0.6, &net, 0, 10),
            Err(Error::InvalidInput(_))
        ));
    }

    #[test]
    fn censored_samples_are_flagged() {
        let sys = sierpinski([1.0 / 3.0; 3]);
        let delta = 2f64.powi(-5);
        let net = net_for(&sys, delta);
        let s = waiting_time_sample(&sys, &[0.0, 0.0], delta, &net, 0, 10).unwrap();
        assert!(s.censored);
        assert_eq!(s.steps, 10);
    }

    #[test]
    fn mean_estimate_conventions() {
        let sys = sierpinski([1.0 / 3.0; 3]);
        let delta = 2f64.powi(-3);
        let net = net_for(&sys, delta);
        let one = estimate_mean_waiting(&sys, &[0.0, 0.0], delta, &net, 1, 4, DEFAULT_STEP_CAP).unwrap();
        assert_eq!(one.std_error, 0.0);
        assert_eq!(one.mean, one.samples[0].steps as f64);
        let a = estimate_mean_waiting(&sys, &[0.0, 0.0], delta, &net, 50, 4, DEFAULT_STEP_CAP).unwrap();
        let b = estimate_mean_waiting(&sys, &[0.0, 0.0], delta, &net, 50, 4, DEFAULT_STEP_CAP).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.censored_fraction, 0.0);
    }

    #[test]
    fn symbolic_samples_cover_every_state() {
        let sys = sierpinski([1.0 / 3.0; 3]);
        let chain = Chain::build(Partition::build(&sys, 0.25).unwrap()).unwrap();
        for seed in 0..100 {
            let s = symbolic_waiting_time_sample(&chain, 0, seed, DEFAULT_STEP_CAP).unwrap();
            assert!(s.steps >= 8);
        }
    }

    #[test]
    fn symbol_stream_is_shared_between_chain_and_orbit() {
        // The chain sampler and the orbit draw the same symbols from one seed.
        let sys = sierpinski([0.25, 0.25, 0.5]);
        let chain = Chain::build(Partition::build(&sys, 0.125).unwrap()).unwrap();
        let start = chain.partition().constant_word(0);
        let mut rng = trial_rng(17);
        let mut t = Trajectory::new(&sys, &[0.0, 0.0], 17).unwrap();
        let mut state = start;
        for _ in 0..1000 {
            let (sym, _) = t.run_step();
            let via_kernel = chain.kernel().step(state, uniform(&mut rng));
            state = chain.target(state, sym);
            assert_eq!(state, via_kernel);
        }
    }
}
