//! Symmetric 2×2 strain/stress states and the project-wide Voigt convention.
//!
//! Strain vectors are `(exx, eyy, 2 exy)`, stress vectors `(sxx, syy, sxy)`,
//! so a Voigt stiffness maps strain vectors to stress vectors and the
//! compliance is its plain matrix inverse. Double contractions are done on
//! full fourth-order tensors; Voigt form is only used for inversion.

use nalgebra::{Matrix2, Matrix3, Vector2, Vector3};
use serde::{Deserialize, Serialize};

/// Green–Lagrange strain components.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct StrainState {
    pub exx: f64,
    pub eyy: f64,
    pub exy: f64,
}

/// Second Piola–Kirchhoff stress components.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct StressState {
    pub sxx: f64,
    pub syy: f64,
    pub sxy: f64,
}

impl StrainState {
    pub const ZERO: StrainState = StrainState {
        exx: 0.0,
        eyy: 0.0,
        exy: 0.0,
    };

    pub fn new(exx: f64, eyy: f64, exy: f64) -> Self {
        Self { exx, eyy, exy }
    }

    /// Components as fed to an energy model: `(exx, eyy, exy)`, shear once.
    pub fn components(&self) -> [f64; 3] {
        [self.exx, self.eyy, self.exy]
    }

    pub fn from_components(c: [f64; 3]) -> Self {
        Self::new(c[0], c[1], c[2])
    }

    pub fn to_matrix(&self) -> Matrix2<f64> {
        Matrix2::new(self.exx, self.exy, self.exy, self.eyy)
    }

    /// Symmetric part of `m`.
    pub fn from_matrix(m: &Matrix2<f64>) -> Self {
        Self::new(m[(0, 0)], m[(1, 1)], 0.5 * (m[(0, 1)] + m[(1, 0)]))
    }

    /// Green strain of a deformation gradient, `½(FᵀF − I)`.
    pub fn from_deformation(f: &Matrix2<f64>) -> Self {
        Self::from_matrix(&(0.5 * (f.transpose() * f - Matrix2::identity())))
    }

    /// Strain `E` such that `2E + I` is positive definite.
    pub fn is_achievable(&self) -> bool {
        let c = Matrix2::identity() + 2.0 * self.to_matrix();
        c[(0, 0)] > 0.0 && c.determinant() > 0.0
    }

    /// Normal strain along unit direction `d`, `dᵀ E d`.
    pub fn directional(&self, d: &Vector2<f64>) -> f64 {
        (d.transpose() * self.to_matrix() * d)[(0, 0)]
    }

    pub fn voigt(&self) -> Vector3<f64> {
        Vector3::new(self.exx, self.eyy, 2.0 * self.exy)
    }

    pub fn norm(&self) -> f64 {
        self.to_matrix().norm()
    }
}

impl StressState {
    pub const ZERO: StressState = StressState {
        sxx: 0.0,
        syy: 0.0,
        sxy: 0.0,
    };

    pub fn new(sxx: f64, syy: f64, sxy: f64) -> Self {
        Self { sxx, syy, sxy }
    }

    pub fn components(&self) -> [f64; 3] {
        [self.sxx, self.syy, self.sxy]
    }

    pub fn to_matrix(&self) -> Matrix2<f64> {
        Matrix2::new(self.sxx, self.sxy, self.sxy, self.syy)
    }

    pub fn from_matrix(m: &Matrix2<f64>) -> Self {
        Self::new(m[(0, 0)], m[(1, 1)], 0.5 * (m[(0, 1)] + m[(1, 0)]))
    }

    /// Stress from the gradient of an energy w.r.t. `(exx, eyy, exy)`.
    ///
    /// `exy` enters the energy once, so the tensor shear component is half
    /// the partial derivative.
    pub fn from_energy_gradient(g: [f64; 3]) -> Self {
        Self::new(g[0], g[1], 0.5 * g[2])
    }

    pub fn directional(&self, d: &Vector2<f64>) -> f64 {
        (d.transpose() * self.to_matrix() * d)[(0, 0)]
    }

    /// Frobenius norm of the tensor.
    pub fn norm(&self) -> f64 {
        self.to_matrix().norm()
    }

    pub fn voigt(&self) -> Vector3<f64> {
        Vector3::new(self.sxx, self.syy, self.sxy)
    }
}

/// Unit loading direction `d_α = (cos α, sin α)`.
pub fn direction(alpha: f64) -> Vector2<f64> {
    Vector2::new(alpha.cos(), alpha.sin())
}

/// In-plane normal `n_α`, `d_α` rotated by +90°.
pub fn normal(alpha: f64) -> Vector2<f64> {
    Vector2::new(-alpha.sin(), alpha.cos())
}

/// Full fourth-order tensor on 2D, indexed `[i][j][k][l]`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Tensor4(pub [[[[f64; 2]; 2]; 2]; 2]);

const VOIGT: [[usize; 2]; 2] = [[0, 2], [2, 1]];

fn shear_factor(i: usize, j: usize) -> f64 {
    if i == j {
        1.0
    } else {
        2.0
    }
}

impl Tensor4 {
    /// Expands a Voigt stiffness (strain vector → stress vector).
    pub fn from_voigt_stiffness(c: &Matrix3<f64>) -> Self {
        let mut t = [[[[0.0; 2]; 2]; 2]; 2];
        for i in 0..2 {
            for j in 0..2 {
                for k in 0..2 {
                    for l in 0..2 {
                        t[i][j][k][l] = c[(VOIGT[i][j], VOIGT[k][l])];
                    }
                }
            }
        }
        Tensor4(t)
    }

    /// Expands a Voigt compliance (stress vector → strain vector).
    pub fn from_voigt_compliance(s: &Matrix3<f64>) -> Self {
        let mut t = [[[[0.0; 2]; 2]; 2]; 2];
        for i in 0..2 {
            for j in 0..2 {
                for k in 0..2 {
                    for l in 0..2 {
                        t[i][j][k][l] = s[(VOIGT[i][j], VOIGT[k][l])]
                            / (shear_factor(i, j) * shear_factor(k, l));
                    }
                }
            }
        }
        Tensor4(t)
    }

    /// `A : T : B`.
    pub fn double_contract(&self, a: &Matrix2<f64>, b: &Matrix2<f64>) -> f64 {
        let mut s = 0.0;
        for i in 0..2 {
            for j in 0..2 {
                for k in 0..2 {
                    for l in 0..2 {
                        s += a[(i, j)] * self.0[i][j][k][l] * b[(k, l)];
                    }
                }
            }
        }
        s
    }

    /// `T : B`.
    pub fn apply(&self, b: &Matrix2<f64>) -> Matrix2<f64> {
        let mut m = Matrix2::zeros();
        for i in 0..2 {
            for j in 0..2 {
                for k in 0..2 {
                    for l in 0..2 {
                        m[(i, j)] += self.0[i][j][k][l] * b[(k, l)];
                    }
                }
            }
        }
        m
    }

    /// Whether `T_ijkl = T_jikl = T_ijlk`.
    pub fn has_minor_symmetry(&self, tol: f64) -> bool {
        let t = &self.0;
        for i in 0..2 {
            for j in 0..2 {
                for k in 0..2 {
                    for l in 0..2 {
                        if (t[i][j][k][l] - t[j][i][k][l]).abs() > tol
                            || (t[i][j][k][l] - t[i][j][l][k]).abs() > tol
                        {
                            return false;
                        }
                    }
                }
            }
        }
        true
    }
}

/// Voigt stiffness from the Hessian of an energy w.r.t. `(exx, eyy, exy)`.
pub fn voigt_stiffness_from_hessian(h: &Matrix3<f64>) -> Matrix3<f64> {
    let d = Matrix3::from_diagonal(&Vector3::new(1.0, 1.0, 0.5));
    d * h * d
}

#[cfg(test)]
mod tests {
    use super::*;

    fn isotropic_voigt(lambda: f64, mu: f64) -> Matrix3<f64> {
        Matrix3::new(
            lambda + 2.0 * mu,
            lambda,
            0.0,
            lambda,
            lambda + 2.0 * mu,
            0.0,
            0.0,
            0.0,
            mu,
        )
    }

    #[test]
    fn green_strain_of_stretch() {
        let f = Matrix2::new(1.2, 0.0, 0.0, 1.0);
        let e = StrainState::from_deformation(&f);
        assert!((e.exx - 0.22).abs() < 1e-15);
        assert_eq!(e.eyy, 0.0);
    }

    #[test]
    fn stiffness_and_compliance_are_inverse_in_full_form() {
        let c_v = isotropic_voigt(0.7, 0.4);
        let c = Tensor4::from_voigt_stiffness(&c_v);
        let s = Tensor4::from_voigt_compliance(&c_v.try_inverse().unwrap());
        assert!(c.has_minor_symmetry(0.0));
        assert!(s.has_minor_symmetry(1e-15));
        let e = Matrix2::new(0.1, -0.03, -0.03, 0.05);
        let back = s.apply(&c.apply(&e));
        assert!((back - e).norm() < 1e-14);
    }

    #[test]
    fn isotropic_directional_stiffness_is_plane_young_modulus() {
        let (lambda, mu) = (0.7, 0.4);
        let c_v = isotropic_voigt(lambda, mu);
        let s = Tensor4::from_voigt_compliance(&c_v.try_inverse().unwrap());
        let young = 4.0 * mu * (lambda + mu) / (lambda + 2.0 * mu);
        let nu = lambda / (lambda + 2.0 * mu);
        for k in 0..8 {
            let a = k as f64 * 0.4;
            let d = direction(a);
            let n = normal(a);
            let dd = d * d.transpose();
            let nn = n * n.transpose();
            let comp = s.double_contract(&dd, &dd);
            assert!((1.0 / comp - young).abs() < 1e-12);
            assert!((-s.double_contract(&dd, &nn) / comp - nu).abs() < 1e-12);
        }
    }
}
