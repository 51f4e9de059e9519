//! Finite reference nets `{S_w(x) : w ∈ P_ρ}` used to certify δ-density.

use crate::error::{Error, Result};
use crate::ifs::IfsSystem;
use crate::partition::{Partition, DEFAULT_STATE_BUDGET};

#[derive(Debug, Clone)]
pub struct ReferenceNet {
    rho: f64,
    base: Vec<f64>,
    dim: usize,
    /// Flat, stride `dim`, in partition (lexicographic) order.
    points: Vec<f64>,
    diameter_hat: f64,
}

impl ReferenceNet {
    /// Every point of F lies within `rho · diam F` of some net point.
    pub fn build(system: &IfsSystem, rho: f64, base: &[f64], diameter_hat: f64) -> Result<Self> {
        Self::build_with_budget(system, rho, base, diameter_hat, DEFAULT_STATE_BUDGET)
    }

    pub fn build_with_budget(
        system: &IfsSystem,
        rho: f64,
        base: &[f64],
        diameter_hat: f64,
        budget: usize,
    ) -> Result<Self> {
        if base.len() != system.dim() {
            return Err(Error::invalid("net base point has wrong dimension"));
        }
        if !(diameter_hat > 0.0 && diameter_hat.is_finite()) {
            return Err(Error::invalid("diameter estimate must be positive"));
        }
        let partition = Partition::build_with_budget(system, rho, budget)?;
        let d = system.dim();
        let mut points = Vec::with_capacity(partition.len() * d);
        for w in partition.words() {
            points.extend(system.apply_word(w.symbols(), base)?);
        }
        Ok(ReferenceNet {
            rho,
            base: base.to_vec(),
            dim: d,
            points,
            diameter_hat,
        })
    }

    pub fn rho(&self) -> f64 {
        self.rho
    }

    pub fn base(&self) -> &[f64] {
        &self.base
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.points.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn point(&self, i: usize) -> &[f64] {
        &self.points[i * self.dim..(i + 1) * self.dim]
    }

    pub fn points_flat(&self) -> &[f64] {
        &self.points
    }

    pub fn diameter_hat(&self) -> f64 {
        self.diameter_hat
    }

    /// `ρ · Δ̂`.
    pub fn density_radius(&self) -> f64 {
        self.rho * self.diameter_hat
    }
}
