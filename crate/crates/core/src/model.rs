//! Strain-energy models `Φ(T, E)` with exact derivatives.

use nalgebra::Matrix3;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fem::MaterialParams;
use crate::jet::Jet;
use crate::tensor::{voigt_stiffness_from_hessian, StrainState, StressState, Tensor4};

/// An energy density over strain components `(exx, eyy, exy)` (shear fed
/// once) and structure parameters.
pub trait EnergyModel: Send + Sync {
    fn param_count(&self) -> usize;

    /// Parameter box, when the model knows one.
    fn bounds(&self) -> Option<(Vec<f64>, Vec<f64>)> {
        None
    }

    /// Third-order expansion of `Φ`. Variables 0..3 are the strain
    /// components; with `wrt_params` variables `3..3 + p` are the parameters.
    fn jet(&self, params: &[f64], strain: &StrainState, wrt_params: bool) -> Jet;

    fn energy(&self, params: &[f64], strain: &StrainState) -> f64 {
        self.jet(params, strain, false).v
    }

    /// Gradient w.r.t. the components.
    fn gradient(&self, params: &[f64], strain: &StrainState) -> [f64; 3] {
        let j = self.jet(params, strain, false);
        [j.grad(0), j.grad(1), j.grad(2)]
    }

    fn stress(&self, params: &[f64], strain: &StrainState) -> StressState {
        StressState::from_energy_gradient(self.gradient(params, strain))
    }

    /// Hessian w.r.t. the components.
    fn hessian(&self, params: &[f64], strain: &StrainState) -> Matrix3<f64> {
        let j = self.jet(params, strain, false);
        Matrix3::from_fn(|a, b| j.hess(a, b))
    }

    /// Voigt tangent stiffness (strain vector `(exx, eyy, 2exy)` to stress).
    fn tangent_voigt(&self, params: &[f64], strain: &StrainState) -> Matrix3<f64> {
        voigt_stiffness_from_hessian(&self.hessian(params, strain))
    }

    fn tangent_tensor(&self, params: &[f64], strain: &StrainState) -> Tensor4 {
        Tensor4::from_voigt_stiffness(&self.tangent_voigt(params, strain))
    }
}

pub(crate) fn check_params(model: &dyn EnergyModel, params: &[f64]) -> Result<()> {
    if params.len() != model.param_count() {
        return Err(Error::ParamCount {
            expected: model.param_count(),
            got: params.len(),
        });
    }
    Ok(())
}

/// Compressible Neo-Hookean energy of a homogeneous material whose Young's
/// modulus and Poisson ratio depend affinely on the parameters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AnalyticModel {
    pub base: MaterialParams,
    pub youngs_slope: Vec<f64>,
    pub poisson_slope: Vec<f64>,
    pub t_min: Vec<f64>,
    pub t_max: Vec<f64>,
}

impl AnalyticModel {
    /// Parameter-free model of one material.
    pub fn material(base: MaterialParams) -> Self {
        Self {
            base,
            youngs_slope: Vec::new(),
            poisson_slope: Vec::new(),
            t_min: Vec::new(),
            t_max: Vec::new(),
        }
    }

    /// Two-parameter family on `[0, 1]²`: `E = E₀ (1 + T₀)`,
    /// `ν = ν₀ + 0.3 T₁ − 0.15`.
    pub fn two_parameter(base: MaterialParams) -> Self {
        Self {
            base: MaterialParams {
                poisson_ratio: base.poisson_ratio - 0.15,
                ..base
            },
            youngs_slope: vec![base.youngs_modulus, 0.0],
            poisson_slope: vec![0.0, 0.3],
            t_min: vec![0.0, 0.0],
            t_max: vec![1.0, 1.0],
        }
    }

    /// Material constants at `params`.
    pub fn material_at(&self, params: &[f64]) -> MaterialParams {
        let dot = |s: &[f64]| s.iter().zip(params).map(|(a, b)| a * b).sum::<f64>();
        MaterialParams {
            youngs_modulus: self.base.youngs_modulus + dot(&self.youngs_slope),
            poisson_ratio: self.base.poisson_ratio + dot(&self.poisson_slope),
        }
    }
}

impl EnergyModel for AnalyticModel {
    fn param_count(&self) -> usize {
        self.youngs_slope.len()
    }

    fn bounds(&self) -> Option<(Vec<f64>, Vec<f64>)> {
        Some((self.t_min.clone(), self.t_max.clone()))
    }

    fn jet(&self, params: &[f64], strain: &StrainState, wrt_params: bool) -> Jet {
        let p = self.param_count();
        let n = if wrt_params { 3 + p } else { 3 };
        let e: Vec<Jet> = strain
            .components()
            .iter()
            .enumerate()
            .map(|(i, &v)| Jet::var(n, i, v))
            .collect();
        let t: Vec<Jet> = params
            .iter()
            .enumerate()
            .map(|(i, &v)| if wrt_params { Jet::var(n, 3 + i, v) } else { Jet::constant(n, v) })
            .collect();
        let mut young = Jet::constant(n, self.base.youngs_modulus);
        let mut nu = Jet::constant(n, self.base.poisson_ratio);
        for i in 0..p {
            young = young + t[i] * self.youngs_slope[i];
            nu = nu + t[i] * self.poisson_slope[i];
        }
        let mu = young / ((nu + 1.0) * 2.0);
        let lambda = young * nu / (Jet::constant(n, 1.0) - nu * nu);
        let (cxx, cyy, cxy) = (e[0] * 2.0 + 1.0, e[1] * 2.0 + 1.0, e[2] * 2.0);
        let lj = (cxx * cyy - cxy * cxy).ln() * 0.5;
        let tr = cxx + cyy - 2.0;
        mu * tr * 0.5 - mu * lj + lambda * lj * lj * 0.5
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::Matrix2;

    #[test]
    fn matches_material_energy_and_stress() {
        let m = MaterialParams::new(2.0, 0.3).unwrap();
        let model = AnalyticModel::material(m);
        let e = StrainState::new(0.1, -0.04, 0.03);
        let em: Matrix2<f64> = e.to_matrix();
        assert!((model.energy(&[], &e) - m.energy_of_strain(&em).unwrap()).abs() < 1e-14);
        let s = model.stress(&[], &e).to_matrix();
        assert!((s - m.pk2_of_strain(&em)).norm() < 1e-13);
    }

    #[test]
    fn rest_tangent_is_isotropic_plane_stiffness() {
        let m = MaterialParams::default();
        let c = AnalyticModel::material(m).tangent_voigt(&[], &StrainState::ZERO);
        let (mu, lambda) = (m.mu(), m.lambda());
        assert!((c[(0, 0)] - (lambda + 2.0 * mu)).abs() < 1e-12);
        assert!((c[(0, 1)] - lambda).abs() < 1e-12);
        assert!((c[(2, 2)] - mu).abs() < 1e-12);
        assert!(c[(0, 2)].abs() < 1e-14);
    }

    #[test]
    fn parametric_family_moves_constants() {
        let model = AnalyticModel::two_parameter(MaterialParams::default());
        let lo = model.material_at(&[0.0, 0.0]);
        let hi = model.material_at(&[1.0, 1.0]);
        assert!((hi.youngs_modulus - 2.0 * lo.youngs_modulus).abs() < 1e-14);
        assert!((hi.poisson_ratio - lo.poisson_ratio - 0.3).abs() < 1e-14);
        let j = model.jet(&[0.3, 0.6], &StrainState::new(0.05, 0.0, 0.0), true);
        assert_eq!(j.nvars(), 5);
        assert!(j.grad(3) > 0.0);
    }
}
