use nalgebra::Matrix2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Isotropic base material. The 2D Lamé constants are chosen so that the
/// small-strain in-plane Young's modulus and Poisson ratio of the 2D
/// energy equal the given values.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MaterialParams {
    pub youngs_modulus: f64,
    pub poisson_ratio: f64,
}

impl Default for MaterialParams {
    fn default() -> Self {
        Self {
            youngs_modulus: 1.0,
            poisson_ratio: 0.45,
        }
    }
}

/// Fourth-order tangent `∂P_ij/∂F_kl`.
pub type Tangent = [[[[f64; 2]; 2]; 2]; 2];

impl MaterialParams {
    pub fn new(youngs_modulus: f64, poisson_ratio: f64) -> Result<Self> {
        let m = Self {
            youngs_modulus,
            poisson_ratio,
        };
        m.validate()?;
        Ok(m)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.youngs_modulus > 0.0) {
            return Err(Error::InvalidInput(
                "youngs_modulus must be positive".into(),
            ));
        }
        if !(0.0..0.5).contains(&self.poisson_ratio) {
            return Err(Error::InvalidInput(
                "poisson_ratio must lie in [0, 0.5)".into(),
            ));
        }
        Ok(())
    }

    pub fn mu(&self) -> f64 {
        self.youngs_modulus / (2.0 * (1.0 + self.poisson_ratio))
    }

    pub fn lambda(&self) -> f64 {
        let nu = self.poisson_ratio;
        self.youngs_modulus * nu / (1.0 - nu * nu)
    }

    /// `Ψ(F) = μ/2 (tr FᵀF − 2) − μ ln J + λ/2 (ln J)²`; `None` if `J ≤ 0`.
    pub fn energy(&self, f: &Matrix2<f64>) -> Option<f64> {
        let j = f.determinant();
        if !(j > 0.0) {
            return None;
        }
        let (mu, lambda) = (self.mu(), self.lambda());
        let lj = j.ln();
        Some(0.5 * mu * (f.norm_squared() - 2.0) - mu * lj + 0.5 * lambda * lj * lj)
    }

    /// First Piola–Kirchhoff stress `P = μ(F − F⁻ᵀ) + λ ln J F⁻ᵀ`.
    pub fn pk1(&self, f: &Matrix2<f64>) -> Matrix2<f64> {
        let j = f.determinant();
        let g = inverse_transpose(f, j);
        self.mu() * (f - g) + self.lambda() * j.ln() * g
    }

    pub fn tangent(&self, f: &Matrix2<f64>) -> Tangent {
        let j = f.determinant();
        let g = inverse_transpose(f, j);
        let (mu, lambda) = (self.mu(), self.lambda());
        let c = mu - lambda * j.ln();
        let mut t = [[[[0.0; 2]; 2]; 2]; 2];
        for i in 0..2 {
            for jj in 0..2 {
                for k in 0..2 {
                    for l in 0..2 {
                        let id = if i == k && jj == l { mu } else { 0.0 };
                        t[i][jj][k][l] =
                            id + c * g[(i, l)] * g[(k, jj)] + lambda * g[(i, jj)] * g[(k, l)];
                    }
                }
            }
        }
        t
    }

    /// Cauchy stress `σ = (μ(FFᵀ − I) + λ ln J I) / J`.
    pub fn cauchy(&self, f: &Matrix2<f64>) -> Matrix2<f64> {
        let j = f.determinant();
        (self.mu() * (f * f.transpose() - Matrix2::identity())
            + self.lambda() * j.ln() * Matrix2::identity())
            / j
    }

    /// Energy density as a function of the Green strain `E`.
    pub fn energy_of_strain(&self, e: &Matrix2<f64>) -> Option<f64> {
        let c = Matrix2::identity() + 2.0 * e;
        let det = c.determinant();
        if !(det > 0.0 && c[(0, 0)] > 0.0) {
            return None;
        }
        let (mu, lambda) = (self.mu(), self.lambda());
        let lj = 0.5 * det.ln();
        Some(0.5 * mu * (c.trace() - 2.0) - mu * lj + 0.5 * lambda * lj * lj)
    }

    /// Second Piola–Kirchhoff stress `S = μ(I − C⁻¹) + λ ln J C⁻¹`.
    pub fn pk2_of_strain(&self, e: &Matrix2<f64>) -> Matrix2<f64> {
        let c = Matrix2::identity() + 2.0 * e;
        let ci = c.try_inverse().unwrap_or_else(Matrix2::zeros);
        let lj = 0.5 * c.determinant().ln();
        self.mu() * (Matrix2::identity() - ci) + self.lambda() * lj * ci
    }
}

pub(crate) fn inverse_transpose(f: &Matrix2<f64>, det: f64) -> Matrix2<f64> {
    Matrix2::new(f[(1, 1)], -f[(1, 0)], -f[(0, 1)], f[(0, 0)]) / det
}
