//! Periodic hyperelastic equilibrium of one unit cell under an imposed
//! macroscopic stretch.

pub mod contact;
pub mod dofs;
pub mod element;
pub mod material;
mod newton;
pub mod sparse;
mod system;

use nalgebra::{Matrix2, Vector2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::{direction, normal};

pub use material::MaterialParams;
pub use system::PeriodicProblem;

/// Macroscopic loading: Green strain `axial` along `d_α`; for biaxial loads
/// also Green strain `lateral` along `n_α`, otherwise the lateral
/// direction is left free.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LoadCase {
    pub alpha: f64,
    pub axial: f64,
    pub lateral: Option<f64>,
    pub penalty_weight: f64,
}

pub const DEFAULT_PENALTY_WEIGHT: f64 = 1e6;

impl LoadCase {
    pub fn uniaxial(alpha: f64, axial: f64) -> Self {
        Self {
            alpha,
            axial,
            lateral: None,
            penalty_weight: DEFAULT_PENALTY_WEIGHT,
        }
    }

    pub fn biaxial(alpha: f64, axial: f64, lateral: f64) -> Self {
        Self {
            alpha,
            axial,
            lateral: Some(lateral),
            penalty_weight: DEFAULT_PENALTY_WEIGHT,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = |e: f64| e > -0.5 && e.is_finite();
        if !ok(self.axial) || !self.lateral.map_or(true, ok) {
            return Err(Error::InvalidInput(
                "load strains must exceed -0.5 (stretch must stay positive)".into(),
            ));
        }
        if !(self.penalty_weight > 0.0) {
            return Err(Error::InvalidInput(
                "penalty_weight must be positive".into(),
            ));
        }
        if !self.alpha.is_finite() {
            return Err(Error::InvalidInput("alpha must be finite".into()));
        }
        Ok(())
    }

    /// Target stretches along `d_α` and `n_α`: `√(1 + 2E)`, so that an
    /// unsheared state reaches the requested Green strain exactly.
    pub fn stretches(&self) -> (f64, Option<f64>) {
        let s = |e: f64| (1.0 + 2.0 * e).sqrt();
        (s(self.axial), self.lateral.map(s))
    }

    /// Symmetric deformation gradient reaching the target; for uniaxial
    /// loads the lateral stretch is `lateral_guess`.
    pub fn target_deformation(&self, lateral_guess: f64) -> Matrix2<f64> {
        let (a, l) = self.stretches();
        let l = l.unwrap_or(lateral_guess);
        let d = direction(self.alpha);
        let n = normal(self.alpha);
        a * d * d.transpose() + l * n * n.transpose()
    }

    pub fn is_biaxial(&self) -> bool {
        self.lateral.is_some()
    }
}

/// Newton solver settings.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverConfig {
    pub tol_abs: f64,
    pub tol_rel: f64,
    pub max_iterations: usize,
    pub max_line_search: usize,
    /// Barrier activation distance as a fraction of the cell size.
    pub dhat_rel: f64,
    /// Initial barrier stiffness; the Young's modulus when unset.
    pub kappa0: Option<f64>,
    pub contact: bool,
    /// Amplitude (fraction of the cell size) of a seeded random
    /// perturbation applied to the initial state.
    pub perturbation: f64,
    pub seed: u64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            tol_abs: 1e-8,
            tol_rel: 1e-6,
            max_iterations: 200,
            max_line_search: 60,
            dhat_rel: 1e-3,
            kappa0: None,
            contact: true,
            perturbation: 0.0,
            seed: 0,
        }
    }
}

/// Positions of root vertices and the two lattice translations.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReducedState {
    pub free_positions: Vec<Vector2<f64>>,
    pub t_ij: Vector2<f64>,
    pub t_kl: Vector2<f64>,
}

impl ReducedState {
    pub fn to_vector(&self) -> Vec<f64> {
        let mut q = Vec::with_capacity(2 * self.free_positions.len() + 4);
        for p in self.free_positions.iter().chain([&self.t_ij, &self.t_kl]) {
            q.push(p.x);
            q.push(p.y);
        }
        q
    }

    pub fn from_vector(q: &[f64]) -> Self {
        let blocks: Vec<Vector2<f64>> = q.chunks(2).map(|c| Vector2::new(c[0], c[1])).collect();
        let n = blocks.len() - 2;
        Self {
            free_positions: blocks[..n].to_vec(),
            t_ij: blocks[n],
            t_kl: blocks[n + 1],
        }
    }

    /// Applies `x ↦ A x` to every position and translation.
    pub fn mapped(&self, a: &Matrix2<f64>) -> Self {
        Self {
            free_positions: self.free_positions.iter().map(|p| a * p).collect(),
            t_ij: a * self.t_ij,
            t_kl: a * self.t_kl,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SolveReport {
    pub state: ReducedState,
    pub elastic_energy: f64,
    pub penalty_energy: f64,
    pub contact_energy: f64,
    pub newton_iterations: usize,
    pub final_gradient_norm: f64,
    /// `‖target residual‖ / ‖target offsets‖` of the stretch constraint.
    pub constraint_violation: f64,
    /// Smallest point–segment distance among pairs within the barrier
    /// range (infinite if none).
    pub min_distance: f64,
    /// Energy after each accepted step, starting with the initial state.
    pub energy_history: Vec<f64>,
}

impl SolveReport {
    pub fn total_energy(&self) -> f64 {
        self.elastic_energy + self.penalty_energy + self.contact_energy
    }
}
