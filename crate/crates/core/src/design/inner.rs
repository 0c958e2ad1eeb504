//! Equilibrium under a prescribed directional strain.
//!
//! In component variables `x = (exx, eyy, exy)` the constraint
//! `dᵀ E d = E_α` reads `a · x = E_α` with `a = (d₀², d₁², 2 d₀ d₁)`, so
//! every SQP iterate after the first projection stays exactly feasible.

use nalgebra::{DMatrix, Matrix3, Matrix4, SymmetricEigen, Vector3, Vector4};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::EnergyModel;
use crate::tensor::{direction, StrainState};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct InnerConfig {
    pub max_iterations: usize,
    /// Target for `‖∇Φ − λ a‖`.
    pub tolerance: f64,
    /// Eigenvalues of the Hessian below this are lifted to it.
    pub eigen_floor: f64,
}

impl Default for InnerConfig {
    fn default() -> Self {
        Self {
            max_iterations: 100,
            tolerance: 1e-11,
            eigen_floor: 1e-7,
        }
    }
}

/// Largest KKT residual accepted when Newton steps stop making progress
/// before reaching [`InnerConfig::tolerance`].
pub const KKT_CERTIFICATE: f64 = 1e-6;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InnerState {
    pub alpha: f64,
    pub magnitude: f64,
    pub strain: StrainState,
    pub multiplier: f64,
    pub kkt_residual: f64,
    /// `dᵀ E d − E_α`.
    pub constraint: f64,
    pub iterations: usize,
}

/// Constraint row `a` for direction `alpha`.
pub fn constraint_row(alpha: f64) -> Vector3<f64> {
    let d = direction(alpha);
    Vector3::new(d.x * d.x, d.y * d.y, 2.0 * d.x * d.y)
}

fn project(x: Vector3<f64>, a: &Vector3<f64>, b: f64) -> Vector3<f64> {
    x + a * ((b - a.dot(&x)) / a.norm_squared())
}

/// Hessian with eigenvalues lifted to at least `floor`; also reports
/// whether any lifting happened.
pub fn shift_to_definite(h: &Matrix3<f64>, floor: f64) -> (Matrix3<f64>, bool) {
    let eig = SymmetricEigen::new(*h);
    if eig.eigenvalues.min() >= floor {
        return (*h, false);
    }
    let lam = eig.eigenvalues.map(|v| v.max(floor));
    (eig.eigenvectors * Matrix3::from_diagonal(&lam) * eig.eigenvectors.transpose(), true)
}

fn grad_hess(model: &dyn EnergyModel, params: &[f64], x: &Vector3<f64>) -> (f64, Vector3<f64>, Matrix3<f64>) {
    let j = model.jet(params, &StrainState::new(x[0], x[1], x[2]), false);
    (
        j.v,
        Vector3::new(j.grad(0), j.grad(1), j.grad(2)),
        Matrix3::from_fn(|r, c| j.hess(r, c)),
    )
}

/// Minimizes `Φ(T, E)` subject to `dᵀ E d = magnitude` by SQP with an
/// eigenvalue-shifted Hessian and an Armijo line search on `Φ`.
pub fn solve_inner(
    model: &dyn EnergyModel,
    params: &[f64],
    alpha: f64,
    magnitude: f64,
    warm: Option<&InnerState>,
    config: &InnerConfig,
) -> Result<InnerState> {
    crate::model::check_params(model, params)?;
    if !magnitude.is_finite() || !alpha.is_finite() || magnitude <= -0.5 {
        return Err(Error::InvalidInput(format!(
            "directional strain {magnitude} at angle {alpha} is not admissible"
        )));
    }
    let a = constraint_row(alpha);
    let start = match warm {
        Some(w) if (w.alpha - alpha).abs() < 1e-12 => {
            let s = w.strain.components();
            let scale = if w.magnitude.abs() > 1e-12 { magnitude / w.magnitude } else { 1.0 };
            let x = Vector3::new(s[0], s[1], s[2]);
            if scale.is_finite() && scale > 0.0 {
                x * scale
            } else {
                x
            }
        }
        Some(w) => {
            let s = w.strain.components();
            Vector3::new(s[0], s[1], s[2])
        }
        None => {
            let d = direction(alpha);
            Vector3::new(d.x * d.x, d.y * d.y, d.x * d.y) * magnitude
        }
    };
    let mut x = project(start, &a, magnitude);
    let (mut phi, mut g, mut h) = grad_hess(model, params, &x);
    let aa = a.norm_squared();
    let mut lambda = a.dot(&g) / aa;
    let mut res = (g - a * lambda).norm();
    for iter in 0..=config.max_iterations {
        let done = res <= config.tolerance;
        if done || iter == config.max_iterations {
            if !done && res > KKT_CERTIFICATE {
                return Err(Error::SqpNoConvergence {
                    iterations: iter,
                    residual: res,
                });
            }
            return Ok(InnerState {
                alpha,
                magnitude,
                strain: StrainState::new(x[0], x[1], x[2]),
                multiplier: lambda,
                kkt_residual: res,
                constraint: a.dot(&x) - magnitude,
                iterations: iter,
            });
        }
        let (hs, _) = shift_to_definite(&h, config.eigen_floor);
        let mut k = Matrix4::zeros();
        k.fixed_view_mut::<3, 3>(0, 0).copy_from(&hs);
        k.fixed_view_mut::<3, 1>(0, 3).copy_from(&(-a));
        k.fixed_view_mut::<1, 3>(3, 0).copy_from(&(-a.transpose()));
        let rhs = Vector4::new(-g[0], -g[1], -g[2], 0.0);
        let Some(sol) = k.lu().solve(&rhs) else {
            return Err(Error::SqpNoConvergence {
                iterations: iter,
                residual: res,
            });
        };
        let dx = Vector3::new(sol[0], sol[1], sol[2]);
        let slope = g.dot(&dx);
        let mut t = 1.0;
        let mut accepted = false;
        for _ in 0..40 {
            let xt = project(x + dx * t, &a, magnitude);
            let st = StrainState::new(xt[0], xt[1], xt[2]);
            if st.is_achievable() {
                let (pt, gt, ht) = grad_hess(model, params, &xt);
                let lt = a.dot(&gt) / aa;
                let rt = (gt - a * lt).norm();
                // Near the solution Φ stops resolving the decrease; a smaller
                // KKT residual is then accepted instead.
                if pt.is_finite() && (pt <= phi + 1e-4 * t * slope || (rt < res && t == 1.0)) {
                    x = xt;
                    phi = pt;
                    g = gt;
                    h = ht;
                    lambda = lt;
                    res = rt;
                    accepted = true;
                    break;
                }
            }
            t *= 0.5;
        }
        if !accepted {
            if res <= KKT_CERTIFICATE {
                return Ok(InnerState {
                    alpha,
                    magnitude,
                    strain: StrainState::new(x[0], x[1], x[2]),
                    multiplier: lambda,
                    kkt_residual: res,
                    constraint: a.dot(&x) - magnitude,
                    iterations: iter,
                });
            }
            return Err(Error::SqpNoConvergence {
                iterations: iter,
                residual: res,
            });
        }
    }
    unreachable!()
}

/// Derivatives of an inner solution w.r.t. the structure parameters.
#[derive(Clone, Debug, PartialEq)]
pub struct Sensitivity {
    /// `∂x/∂T`, 3 × p.
    pub strain: DMatrix<f64>,
    /// `∂λ/∂T`.
    pub multiplier: Vec<f64>,
}

/// Implicit differentiation of the KKT conditions `∇Φ − λ a = 0`,
/// `a · x = E_α` w.r.t. the parameters.
pub fn sensitivity(model: &dyn EnergyModel, params: &[f64], inner: &InnerState) -> Result<Sensitivity> {
    crate::model::check_params(model, params)?;
    let p = params.len();
    let j = model.jet(params, &inner.strain, true);
    let h = Matrix3::from_fn(|r, c| j.hess(r, c));
    let mixed = DMatrix::from_fn(3, p, |r, c| j.hess(r, 3 + c));
    sensitivity_from(&h, &mixed, &constraint_row(inner.alpha))
}

pub(crate) fn sensitivity_from(h: &Matrix3<f64>, mixed: &DMatrix<f64>, a: &Vector3<f64>) -> Result<Sensitivity> {
    let p = mixed.ncols();
    let mut k = Matrix4::zeros();
    k.fixed_view_mut::<3, 3>(0, 0).copy_from(h);
    k.fixed_view_mut::<3, 1>(0, 3).copy_from(&(-a));
    k.fixed_view_mut::<1, 3>(3, 0).copy_from(&(-a.transpose()));
    let sv = k.singular_values();
    if !(sv.min() > 1e-13 * sv.max()) {
        return Err(Error::SingularKktMatrix);
    }
    let lu = k.lu();
    let mut strain = DMatrix::zeros(3, p);
    let mut multiplier = vec![0.0; p];
    for c in 0..p {
        let rhs = Vector4::new(-mixed[(0, c)], -mixed[(1, c)], -mixed[(2, c)], 0.0);
        let sol = lu.solve(&rhs).ok_or(Error::SingularKktMatrix)?;
        for r in 0..3 {
            strain[(r, c)] = sol[r];
        }
        multiplier[c] = sol[3];
    }
    Ok(Sensitivity { strain, multiplier })
}
