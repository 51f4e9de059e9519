//! Iterated function systems of contracting similitudes on ℝ^d and the
//! scalar quantities derived from them: similarity dimension, the waiting-time
//! exponent, fixed points and diameter estimates.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Relative tolerance used to decide ties in the exponent maximum.
pub const TIE_TOLERANCE: f64 = 1e-9;

const ORTHOGONALITY_TOLERANCE: f64 = 1e-12;
const PROB_SUM_TOLERANCE: f64 = 1e-12;

/// Default cap on the number of points `S_w(x*)` generated for diameter and
/// bounding-box estimates.
pub const DEFAULT_POINT_BUDGET: usize = 20_000;

/// A similitude `x ↦ scale · Q x + b` with `Q` orthogonal.
#[derive(Debug, Clone, PartialEq)]
pub struct Similitude {
    scale: f64,
    /// Row-major `d × d`.
    orthogonal: Vec<f64>,
    translation: Vec<f64>,
}

impl Similitude {
    pub fn new(scale: f64, orthogonal: Vec<f64>, translation: Vec<f64>) -> Result<Self> {
        let d = translation.len();
        if d == 0 {
            return Err(Error::invalid("similitude needs dimension >= 1"));
        }
        if !(scale > 0.0 && scale < 1.0) {
            return Err(Error::invalid(format!(
                "contraction ratio must lie in (0,1), got {scale}"
            )));
        }
        if orthogonal.len() != d * d {
            return Err(Error::invalid(format!(
                "orthogonal part has {} entries, expected {}",
                orthogonal.len(),
                d * d
            )));
        }
        if orthogonal.iter().chain(&translation).any(|v| !v.is_finite()) {
            return Err(Error::invalid("non-finite similitude coefficient"));
        }
        for i in 0..d {
            for j in 0..d {
                let dot: f64 = (0..d)
                    .map(|k| orthogonal[i * d + k] * orthogonal[j * d + k])
                    .sum();
                let want = if i == j { 1.0 } else { 0.0 };
                if (dot - want).abs() > ORTHOGONALITY_TOLERANCE {
                    return Err(Error::invalid(format!(
                        "linear part is not orthogonal: (Q Qᵀ)[{i}][{j}] = {dot}"
                    )));
                }
            }
        }
        Ok(Similitude {
            scale,
            orthogonal,
            translation,
        })
    }

    /// `x ↦ scale · x + translation`.
    pub fn homothety(scale: f64, translation: Vec<f64>) -> Result<Self> {
        let d = translation.len();
        let mut id = vec![0.0; d * d];
        for i in 0..d {
            id[i * d + i] = 1.0;
        }
        Self::new(scale, id, translation)
    }

    pub fn dim(&self) -> usize {
        self.translation.len()
    }

    pub fn scale(&self) -> f64 {
        self.scale
    }

    pub fn orthogonal(&self) -> &[f64] {
        &self.orthogonal
    }

    pub fn translation(&self) -> &[f64] {
        &self.translation
    }

    /// Writes `S(x)` into `out`. Both slices must have length `d`.
    #[inline]
    pub fn apply_into(&self, x: &[f64], out: &mut [f64]) {
        let d = self.translation.len();
        for i in 0..d {
            let row = &self.orthogonal[i * d..(i + 1) * d];
            let mut acc = 0.0;
            for k in 0..d {
                acc += row[k] * x[k];
            }
            out[i] = self.scale * acc + self.translation[i];
        }
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.dim()];
        self.apply_into(x, &mut out);
        out
    }

    /// The unique fixed point, from `(I − scale·Q) x = b`.
    pub fn fixed_point(&self) -> Vec<f64> {
        let d = self.dim();
        let m = DMatrix::from_fn(d, d, |i, j| {
            let id = if i == j { 1.0 } else { 0.0 };
            id - self.scale * self.orthogonal[i * d + j]
        });
        let b = DVector::from_column_slice(&self.translation);
        // I − rQ has all singular values ≥ 1 − r > 0.
        let x = m
            .lu()
            .solve(&b)
            .expect("I - rQ is invertible for a contraction");
        x.as_slice().to_vec()
    }
}

/// An open ball inside the open set of the open set condition, centred at a
/// point of the attractor. Supplied by the user; never verified.
#[derive(Debug, Clone, PartialEq)]
pub struct OscWitness {
    pub center: Vec<f64>,
    pub radius: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct IfsSystem {
    maps: Vec<Similitude>,
    probs: Vec<f64>,
    dim: usize,
    osc_witness: Option<OscWitness>,
}

/// Result of the exponent maximisation `t = max_i log p_i / log r_i`.
#[derive(Debug, Clone, PartialEq)]
pub struct Exponent {
    pub t: f64,
    /// Zero-based indices attaining the maximum (up to [`TIE_TOLERANCE`]).
    pub argmax: Vec<usize>,
    pub unique_max: bool,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DiameterEstimate {
    /// Max pairwise distance among `S_w(x*)`, `|w| = depth`; a lower bound for diam F.
    pub estimate: f64,
    pub upper_bound: f64,
    pub depth: u32,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BoundingBox {
    pub min: Vec<f64>,
    pub max: Vec<f64>,
}

impl BoundingBox {
    pub fn contains(&self, x: &[f64], slack: f64) -> bool {
        x.iter()
            .zip(self.min.iter().zip(&self.max))
            .all(|(v, (lo, hi))| *v >= lo - slack && *v <= hi + slack)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScalarReport {
    pub s: f64,
    pub t: f64,
    pub argmax_set: Vec<usize>,
    pub unique_max: bool,
    pub r_min: f64,
    pub r_max: f64,
    pub diameter: DiameterEstimate,
}

impl IfsSystem {
    pub fn new(maps: Vec<Similitude>, probs: Vec<f64>) -> Result<Self> {
        if maps.len() < 2 {
            return Err(Error::invalid("an IFS needs at least two maps"));
        }
        if maps.len() > u8::MAX as usize {
            return Err(Error::invalid("at most 255 maps are supported"));
        }
        if maps.len() != probs.len() {
            return Err(Error::invalid(format!(
                "{} maps but {} probabilities",
                maps.len(),
                probs.len()
            )));
        }
        let dim = maps[0].dim();
        if maps.iter().any(|m| m.dim() != dim) {
            return Err(Error::invalid("maps have differing dimensions"));
        }
        if probs.iter().any(|p| !(*p > 0.0 && p.is_finite())) {
            return Err(Error::invalid("probabilities must all be > 0"));
        }
        let total: f64 = probs.iter().sum();
        if (total - 1.0).abs() > PROB_SUM_TOLERANCE {
            return Err(Error::invalid(format!(
                "probabilities sum to {total}, not 1"
            )));
        }
        Ok(IfsSystem {
            maps,
            probs,
            dim,
            osc_witness: None,
        })
    }

    pub fn with_osc_witness(mut self, center: Vec<f64>, radius: f64) -> Result<Self> {
        if center.len() != self.dim {
            return Err(Error::invalid("OSC ball centre has wrong dimension"));
        }
        if !(radius > 0.0 && radius.is_finite()) {
            return Err(Error::invalid("OSC ball radius must be > 0"));
        }
        self.osc_witness = Some(OscWitness { center, radius });
        Ok(self)
    }

    /// Same maps with a different probability vector.
    pub fn with_probs(&self, probs: Vec<f64>) -> Result<Self> {
        let mut sys = IfsSystem::new(self.maps.clone(), probs)?;
        sys.osc_witness = self.osc_witness.clone();
        Ok(sys)
    }

    /// The equilateral Sierpinski triangle with vertices (0,0), (1,0), (1/2, √3/2).
    pub fn sierpinski(probs: [f64; 3]) -> Result<Self> {
        let h = 3f64.sqrt() / 4.0;
        let maps = vec![
            Similitude::homothety(0.5, vec![0.0, 0.0])?,
            Similitude::homothety(0.5, vec![0.5, 0.0])?,
            Similitude::homothety(0.5, vec![0.25, h])?,
        ];
        IfsSystem::new(maps, probs.to_vec())
    }

    pub fn maps(&self) -> &[Similitude] {
        &self.maps
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.maps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.maps.is_empty()
    }

    pub fn osc_witness(&self) -> Option<&OscWitness> {
        self.osc_witness.as_ref()
    }

    pub fn ratios(&self) -> Vec<f64> {
        self.maps.iter().map(Similitude::scale).collect()
    }

    pub fn r_min(&self) -> f64 {
        self.maps.iter().map(Similitude::scale).fold(f64::INFINITY, f64::min)
    }

    pub fn r_max(&self) -> f64 {
        self.maps.iter().map(Similitude::scale).fold(0.0, f64::max)
    }

    pub fn p_max(&self) -> f64 {
        self.probs.iter().copied().fold(0.0, f64::max)
    }

    pub fn p_min(&self) -> f64 {
        self.probs.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn similarity_dimension(&self) -> f64 {
        similarity_dimension(&self.ratios()).expect("ratios validated at construction")
    }

    pub fn exponent_t(&self) -> Exponent {
        let ratios: Vec<f64> = self
            .maps
            .iter()
            .zip(&self.probs)
            .map(|(m, p)| p.ln() / m.scale().ln())
            .collect();
        let t = ratios.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let argmax: Vec<usize> = ratios
            .iter()
            .enumerate()
            .filter(|(_, v)| t - **v <= TIE_TOLERANCE * t.abs())
            .map(|(i, _)| i)
            .collect();
        let unique_max = argmax.len() == 1;
        Exponent {
            t,
            argmax,
            unique_max,
        }
    }

    /// Applies `S_{w_1} ∘ S_{w_2} ∘ … ∘ S_{w_n}` to `point`; symbols are zero-based.
    pub fn apply_word(&self, word: &[u8], point: &[f64]) -> Result<Vec<f64>> {
        if point.len() != self.dim {
            return Err(Error::invalid("point has wrong dimension"));
        }
        if let Some(bad) = word.iter().find(|&&s| s as usize >= self.maps.len()) {
            return Err(Error::invalid(format!(
                "symbol {} out of range 1..={}",
                *bad as usize + 1,
                self.maps.len()
            )));
        }
        let mut x = point.to_vec();
        let mut tmp = vec![0.0; self.dim];
        for &s in word.iter().rev() {
            self.maps[s as usize].apply_into(&x, &mut tmp);
            std::mem::swap(&mut x, &mut tmp);
        }
        Ok(x)
    }

    /// Fixed point of the first map, the default starting point of every
    /// trajectory and the default net base point.
    pub fn default_base_point(&self) -> Vec<f64> {
        self.maps[0].fixed_point()
    }

    /// All points `S_w(base)` for words of exactly `depth` symbols, flat with stride `d`.
    fn level_points(&self, base: &[f64], depth: u32, budget: usize) -> Result<Vec<f64>> {
        let n = self.maps.len() as u128;
        let count = n.checked_pow(depth).unwrap_or(u128::MAX);
        if count > budget as u128 {
            return Err(Error::BudgetExceeded {
                what: "attractor sample points",
                needed: count,
                limit: budget as u128,
            });
        }
        let d = self.dim;
        let mut level = base.to_vec();
        for _ in 0..depth {
            let mut next = Vec::with_capacity(level.len() * self.maps.len());
            let mut out = vec![0.0; d];
            // Outermost map is applied last, so new symbols go on the left.
            for map in &self.maps {
                for x in level.chunks_exact(d) {
                    map.apply_into(x, &mut out);
                    next.extend_from_slice(&out);
                }
            }
            level = next;
        }
        Ok(level)
    }

    pub fn diameter_estimate(&self, depth: u32) -> Result<DiameterEstimate> {
        self.diameter_estimate_with_budget(depth, DEFAULT_POINT_BUDGET)
    }

    pub fn diameter_estimate_with_budget(
        &self,
        depth: u32,
        budget: usize,
    ) -> Result<DiameterEstimate> {
        if depth == 0 {
            return Err(Error::invalid("diameter depth must be >= 1"));
        }
        let d = self.dim;
        let pts = self.level_points(&self.default_base_point(), depth, budget)?;
        let m = pts.len() / d;
        let mut best2 = 0.0f64;
        for a in 0..m {
            let pa = &pts[a * d..(a + 1) * d];
            for b in (a + 1)..m {
                let pb = &pts[b * d..(b + 1) * d];
                let d2: f64 = pa.iter().zip(pb).map(|(x, y)| (x - y) * (x - y)).sum();
                best2 = best2.max(d2);
            }
        }
        let estimate = best2.sqrt();
        let tail = self.r_max().powi(depth as i32);
        let r_max = self.r_max();
        let mut upper_bound = estimate + 2.0 * tail * estimate / (1.0 - r_max);
        // diam F ≤ estimate + 2·r_max^depth·diam F.
        if 2.0 * tail < 1.0 {
            upper_bound = upper_bound.max(estimate / (1.0 - 2.0 * tail));
        }
        Ok(DiameterEstimate {
            estimate,
            upper_bound,
            depth,
        })
    }

    /// An axis-aligned box containing the attractor.
    pub fn bounding_box(&self, depth: u32) -> Result<BoundingBox> {
        let diam = self.diameter_estimate(depth)?;
        let d = self.dim;
        let pts = self.level_points(&self.default_base_point(), depth, DEFAULT_POINT_BUDGET)?;
        let mut min = vec![f64::INFINITY; d];
        let mut max = vec![f64::NEG_INFINITY; d];
        for x in pts.chunks_exact(d) {
            for k in 0..d {
                min[k] = min[k].min(x[k]);
                max[k] = max[k].max(x[k]);
            }
        }
        let pad = self.r_max().powi(depth as i32) * diam.upper_bound;
        for k in 0..d {
            min[k] -= pad;
            max[k] += pad;
        }
        Ok(BoundingBox { min, max })
    }

    /// `κ = r_min · ε` from the OSC witness, if one was supplied.
    pub fn kappa(&self) -> Option<f64> {
        self.osc_witness.as_ref().map(|w| self.r_min() * w.radius)
    }

    /// Largest depth whose point set fits in [`DEFAULT_POINT_BUDGET`], capped at `max_depth`.
    pub fn affordable_depth(&self, max_depth: u32) -> u32 {
        let n = self.maps.len() as u128;
        let mut depth = 1;
        while depth < max_depth && n.pow(depth + 1) <= DEFAULT_POINT_BUDGET as u128 {
            depth += 1;
        }
        depth
    }

    pub fn scalar_report(&self, depth: u32) -> Result<ScalarReport> {
        let exp = self.exponent_t();
        Ok(ScalarReport {
            s: self.similarity_dimension(),
            t: exp.t,
            argmax_set: exp.argmax,
            unique_max: exp.unique_max,
            r_min: self.r_min(),
            r_max: self.r_max(),
            diameter: self.diameter_estimate(depth)?,
        })
    }
}

/// The unique `s ≥ 0` with `Σ r_i^s = 1`, by bisection on `[0, 20]`.
pub fn similarity_dimension(ratios: &[f64]) -> Result<f64> {
    if ratios.is_empty() {
        return Err(Error::invalid("similarity dimension of an empty ratio list"));
    }
    if let Some(r) = ratios.iter().find(|r| !(**r > 0.0 && **r < 1.0)) {
        return Err(Error::invalid(format!("ratio {r} not in (0,1)")));
    }
    let g = |s: f64| ratios.iter().map(|r| r.powf(s)).sum::<f64>() - 1.0;
    let (mut lo, mut hi) = (0.0f64, 20.0f64);
    // g(0) = N − 1 ≥ 0; a single ratio gives s = 0.
    if g(lo) <= 0.0 {
        return Ok(0.0);
    }
    while g(hi) > 0.0 {
        hi *= 2.0;
        if hi > 1e6 {
            return Err(Error::Numeric {
                message: "similarity dimension bracket overflow".into(),
                residual: g(hi),
            });
        }
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if g(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    // Either endpoint is within one ulp; keep the one with the smaller residual.
    Ok(if g(lo).abs() <= g(hi).abs() { lo } else { hi })
}
