//! Macroscopic strain, stress and energy density of a solved unit cell.

use nalgebra::{Matrix2, Vector2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fem::{LoadCase, PeriodicProblem, ReducedState, SolveReport};
use crate::geometry::{PeriodicMesh, TilingParams};
use crate::tensor::{StrainState, StressState};

type V2 = Vector2<f64>;

/// Kind of macroscopic load a sample was generated with.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LoadKind {
    Uniaxial,
    Biaxial,
}

/// Loading metadata stored with every sample.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LoadMeta {
    pub alpha: f64,
    pub load_kind: LoadKind,
    pub axial: f64,
    pub lateral: Option<f64>,
}

impl From<&LoadCase> for LoadMeta {
    fn from(l: &LoadCase) -> Self {
        Self {
            alpha: l.alpha,
            load_kind: if l.is_biaxial() {
                LoadKind::Biaxial
            } else {
                LoadKind::Uniaxial
            },
            axial: l.axial,
            lateral: l.lateral,
        }
    }
}

/// One homogenized observation `(T, E, S, Ψ)`.
///
/// Serializes flat: `t`, `exx`, `eyy`, `exy`, `sxx`, `syy`, `sxy`, `psi`,
/// `alpha`, `load_kind`, `axial`, `lateral`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HomogenizedSample {
    #[serde(rename = "t")]
    pub params: TilingParams,
    #[serde(flatten)]
    pub strain: StrainState,
    #[serde(flatten)]
    pub stress: StressState,
    #[serde(rename = "psi")]
    pub energy_density: f64,
    #[serde(flatten)]
    pub load: LoadMeta,
}

impl HomogenizedSample {
    pub fn is_finite(&self) -> bool {
        self.strain
            .components()
            .iter()
            .chain(self.stress.components().iter())
            .chain(std::iter::once(&self.energy_density))
            .chain(self.params.values.iter())
            .all(|v| v.is_finite())
    }
}

/// Cauchy stress together with its asymmetry before symmetrization.
#[derive(Clone, Copy, Debug)]
pub struct CauchyStress {
    pub sigma: Matrix2<f64>,
    /// `‖σ − σᵀ‖ / ‖σ‖` of the raw traction estimate.
    pub asymmetry: f64,
}

/// Sample plus convergence diagnostics of the underlying solve.
#[derive(Clone, Debug)]
pub struct Homogenized {
    pub sample: HomogenizedSample,
    pub deformation: Matrix2<f64>,
    pub cauchy: CauchyStress,
    /// `(penalty + contact) / elastic` energy.
    pub enforcement_ratio: f64,
    pub constraint_violation: f64,
    pub newton_iterations: usize,
}

fn rest_offsets(mesh: &PeriodicMesh) -> Result<Matrix2<f64>> {
    let t = Matrix2::from_columns(&mesh.lattice);
    if t.determinant().abs() <= 1e-14 * mesh.lattice[0].norm_squared().max(mesh.lattice[1].norm_squared()) {
        return Err(Error::SingularRestOffsets);
    }
    Ok(t)
}

/// `F = [t_ij | t_kl] · [T_ij | T_kl]⁻¹`.
pub fn deformation_gradient(mesh: &PeriodicMesh, state: &ReducedState) -> Result<Matrix2<f64>> {
    let rest = rest_offsets(mesh)?;
    let def = Matrix2::from_columns(&[state.t_ij, state.t_kl]);
    let f = def * rest.try_inverse().ok_or(Error::SingularRestOffsets)?;
    let j = f.determinant();
    if !(j > 0.0) {
        return Err(Error::NonPositiveJacobian(j));
    }
    Ok(f)
}

/// Cauchy stress from boundary-averaged tractions.
///
/// The net elastic force carried across the side translated by `t_ij` is
/// `∂E/∂t_ij`; dividing by that side's deformed length `|t_kl|` gives the
/// mean traction on a side with outward normal `t_kl` rotated by −90°.
/// Likewise for `t_kl`.
pub fn cauchy_stress(problem: &PeriodicProblem, state: &ReducedState) -> Result<CauchyStress> {
    let q = state.to_vector();
    let mut g = vec![0.0; q.len()];
    problem.elastic(&q, None, Some(&mut g), None)?;
    let block = |b: usize| V2::new(g[2 * b], g[2 * b + 1]);
    let (f0, f1) = (block(problem.dofs.tij_block()), block(problem.dofs.tkl_block()));
    let (l0, l1) = (state.t_kl.norm(), state.t_ij.norm());
    let n0 = V2::new(state.t_kl.y, -state.t_kl.x) / l0;
    let n1 = V2::new(-state.t_ij.y, state.t_ij.x) / l1;
    let tractions = Matrix2::from_columns(&[f0 / l0, f1 / l1]);
    let normals = Matrix2::from_columns(&[n0, n1]);
    let ninv = normals.try_inverse().ok_or(Error::SingularNormals)?;
    let raw = tractions * ninv;
    let sigma = 0.5 * (raw + raw.transpose());
    let norm = sigma.norm();
    let asymmetry = if norm > 0.0 {
        (raw - raw.transpose()).norm() / norm
    } else {
        0.0
    };
    Ok(CauchyStress { sigma, asymmetry })
}

/// `E = ½(FᵀF − I)` and `S = J F⁻¹ σᵀ F⁻ᵀ`.
pub fn pull_back(f: &Matrix2<f64>, sigma: &Matrix2<f64>) -> Result<(StrainState, StressState)> {
    let j = f.determinant();
    if !(j > 0.0) {
        return Err(Error::NonPositiveJacobian(j));
    }
    let fi = f.try_inverse().ok_or(Error::NonPositiveJacobian(j))?;
    let s = j * fi * sigma.transpose() * fi.transpose();
    Ok((StrainState::from_deformation(f), StressState::from_matrix(&s)))
}

/// Inverse of [`pull_back`] for the stress: `σ = F S Fᵀ / J`.
pub fn push_forward(f: &Matrix2<f64>, s: &StressState) -> Matrix2<f64> {
    f * s.to_matrix() * f.transpose() / f.determinant()
}

/// Elastic energy per unit cell area.
///
/// The cell (lattice) area is the volume of the periodic patch, so `Ψ`
/// stays work-conjugate to the traction-based stress for porous cells.
pub fn energy_density(mesh: &PeriodicMesh, report: &SolveReport) -> f64 {
    report.elastic_energy / mesh.cell_area()
}

/// Full post-processing of a converged solve.
pub fn homogenize(
    problem: &PeriodicProblem,
    params: &TilingParams,
    load: &LoadCase,
    report: &SolveReport,
) -> Result<Homogenized> {
    let f = deformation_gradient(&problem.mesh, &report.state)?;
    let cauchy = cauchy_stress(problem, &report.state)?;
    let (strain, stress) = pull_back(&f, &cauchy.sigma)?;
    let psi = energy_density(&problem.mesh, report);
    let enforcement_ratio = if report.elastic_energy > 0.0 {
        (report.penalty_energy + report.contact_energy) / report.elastic_energy
    } else {
        0.0
    };
    Ok(Homogenized {
        sample: HomogenizedSample {
            params: params.clone(),
            strain,
            stress,
            energy_density: psi,
            load: LoadMeta::from(load),
        },
        deformation: f,
        cauchy,
        enforcement_ratio,
        constraint_violation: report.constraint_violation,
        newton_iterations: report.newton_iterations,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pull_back_of_pure_stretch() {
        let f = Matrix2::new(1.2, 0.0, 0.0, 1.0);
        let (e, s) = pull_back(&f, &Matrix2::zeros()).unwrap();
        assert!((e.exx - 0.22).abs() < 1e-15);
        assert_eq!(e.eyy, 0.0);
        assert_eq!(s, StressState::ZERO);
        let (e, _) = pull_back(&Matrix2::identity(), &Matrix2::zeros()).unwrap();
        assert_eq!(e, StrainState::ZERO);
    }

    #[test]
    fn inverted_deformation_is_rejected() {
        let f = Matrix2::new(-1.0, 0.0, 0.0, 1.0);
        assert!(matches!(
            pull_back(&f, &Matrix2::zeros()),
            Err(Error::NonPositiveJacobian(_))
        ));
    }

    #[test]
    fn sample_serializes_flat() {
        let s = HomogenizedSample {
            params: TilingParams::new(vec![0.05]),
            strain: StrainState::new(0.1, 0.0, 0.0),
            stress: StressState::new(1.0, 0.0, 0.0),
            energy_density: 0.2,
            load: LoadMeta::from(&LoadCase::uniaxial(0.0, 0.1)),
        };
        let v: serde_json::Value = serde_json::to_value(&s).unwrap();
        for k in ["t", "exx", "eyy", "exy", "sxx", "syy", "sxy", "psi", "alpha", "load_kind", "axial", "lateral"] {
            assert!(v.get(k).is_some(), "{k}");
        }
        assert_eq!(v["load_kind"], "uniaxial");
        let back: HomogenizedSample = serde_json::from_value(v).unwrap();
        assert_eq!(back, s);
    }
}
