//! Bi-level inverse design over an energy model.
//!
//! Each target needs the equilibrium strain under a prescribed
//! directional strain (the inner problem, see [`solve_inner`]). The outer
//! problem adjusts the structure parameters inside their box with a
//! projected L-BFGS method, using gradients from implicit differentiation
//! of the inner optimality conditions.

mod inner;
mod lbfgsb;

use nalgebra::{DMatrix, Matrix2, Matrix3, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::EnergyModel;
use crate::tensor::{direction, normal, voigt_stiffness_from_hessian, Tensor4};

pub use inner::{
    constraint_row, sensitivity, shift_to_definite, solve_inner, InnerConfig, InnerState, Sensitivity,
    KKT_CERTIFICATE,
};
pub use lbfgsb::{minimize, LbfgsbConfig, LbfgsbOutcome};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ObjectiveKind {
    /// Directional stress `dᵀ S d` at each prescribed strain.
    UniaxialStress,
    /// `1 / ((ddᵀ) : 𝕊 : (ddᵀ))` per direction.
    DirectionalStiffness,
    /// `−(ddᵀ) : 𝕊 : (nnᵀ) / (ddᵀ) : 𝕊 : (ddᵀ)` per direction.
    PoissonRatio,
}

/// Target profile. `directions` and `magnitudes` hold either one entry
/// shared by all targets or one entry per target.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DesignObjective {
    pub kind: ObjectiveKind,
    pub directions: Vec<f64>,
    pub magnitudes: Vec<f64>,
    pub targets: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub weights: Option<Vec<f64>>,
}

impl DesignObjective {
    pub fn len(&self) -> usize {
        self.targets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.targets.is_empty()
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.targets.len();
        let fits = |v: usize| v == 1 || v == n;
        if n == 0 {
            return Err(Error::InvalidInput("objective has no targets".into()));
        }
        if !fits(self.directions.len()) || !fits(self.magnitudes.len()) {
            return Err(Error::InvalidInput(
                "directions and magnitudes must have one entry or one per target".into(),
            ));
        }
        if let Some(w) = &self.weights {
            if w.len() != n || w.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
                return Err(Error::InvalidInput("weights must be one non-negative value per target".into()));
            }
        }
        let all = self.directions.iter().chain(&self.magnitudes).chain(&self.targets);
        if all.clone().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("objective contains non-finite values".into()));
        }
        if self.magnitudes.iter().any(|&m| m <= -0.5) {
            return Err(Error::InvalidInput("strain magnitudes must exceed -0.5".into()));
        }
        Ok(())
    }

    pub fn direction(&self, i: usize) -> f64 {
        self.directions[if self.directions.len() == 1 { 0 } else { i }]
    }

    pub fn magnitude(&self, i: usize) -> f64 {
        self.magnitudes[if self.magnitudes.len() == 1 { 0 } else { i }]
    }

    pub fn weight(&self, i: usize) -> f64 {
        self.weights.as_ref().map_or(1.0, |w| w[i])
    }

    /// Same load points with targets replaced.
    pub fn with_targets(&self, targets: Vec<f64>) -> Self {
        Self {
            targets,
            ..self.clone()
        }
    }
}

/// Objective file: a [`DesignObjective`] plus optional start point and
/// bound overrides.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ObjectiveFile {
    #[serde(flatten)]
    pub objective: DesignObjective,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub init: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub t_min: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub t_max: Option<Vec<f64>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DesignConfig {
    pub max_iterations: usize,
    pub history: usize,
    pub gradient_tolerance: f64,
    /// Random starts added by [`design_multistart`] when no start is given.
    pub starts: usize,
    pub seed: u64,
    pub inner: InnerConfig,
}

impl Default for DesignConfig {
    fn default() -> Self {
        Self {
            max_iterations: 200,
            history: 10,
            gradient_tolerance: 1e-6,
            starts: 4,
            seed: 0,
            inner: InnerConfig::default(),
        }
    }
}

/// Value of the objective and everything needed to differentiate it.
#[derive(Clone, Debug, PartialEq)]
pub struct Evaluation {
    pub objective: f64,
    pub achieved: Vec<f64>,
    pub inner: Vec<InnerState>,
    pub gradient: Option<Vec<f64>>,
    pub warnings: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DesignResult {
    pub params: Vec<f64>,
    pub objective: f64,
    pub initial_objective: f64,
    pub objective_history: Vec<f64>,
    pub achieved_profile: Vec<f64>,
    pub targets: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
    pub projected_gradient: f64,
    pub start: Vec<f64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
}

fn sym(v: nalgebra::Vector2<f64>) -> Matrix2<f64> {
    v * v.transpose()
}

/// `(ddᵀ) : 𝕊 : (ddᵀ)` and `(ddᵀ) : 𝕊 : (nnᵀ)` from the component Hessian,
/// through the full fourth-order compliance.
pub fn compliance_contractions(h: &Matrix3<f64>, alpha: f64) -> Result<(f64, f64)> {
    let c = voigt_stiffness_from_hessian(h);
    let s = c.try_inverse().ok_or(Error::SingularTangent)?;
    if !s.iter().all(|v| v.is_finite()) {
        return Err(Error::SingularTangent);
    }
    let s4 = Tensor4::from_voigt_compliance(&s);
    let (dd, nn) = (sym(direction(alpha)), sym(normal(alpha)));
    Ok((s4.double_contract(&dd, &dd), s4.double_contract(&dd, &nn)))
}

/// Achieved value of one target from the jet at its inner solution.
fn target_value(kind: ObjectiveKind, alpha: f64, g: &Vector3<f64>, h: &Matrix3<f64>) -> Result<f64> {
    match kind {
        ObjectiveKind::UniaxialStress => {
            let d = direction(alpha);
            Ok(d.x * d.x * g[0] + d.y * d.y * g[1] + d.x * d.y * g[2])
        }
        ObjectiveKind::DirectionalStiffness => {
            let (m, _) = compliance_contractions(h, alpha)?;
            Ok(1.0 / m)
        }
        ObjectiveKind::PoissonRatio => {
            let (m, c) = compliance_contractions(h, alpha)?;
            Ok(-c / m)
        }
    }
}

fn check_tangent(h: &Matrix3<f64>, floor: f64, i: usize, warnings: &mut Vec<String>) -> Matrix3<f64> {
    let (hs, shifted) = shift_to_definite(h, floor);
    if shifted {
        warnings.push(format!("target {i}: indefinite tangent, compliance taken from the shifted Hessian"));
    }
    hs
}

/// Evaluates the objective at `params`; with `with_gradient` also `dO/dT`.
///
/// `warm` holds inner solutions to start from, one per target.
pub fn evaluate_objective(
    model: &dyn EnergyModel,
    params: &[f64],
    objective: &DesignObjective,
    warm: Option<&[InnerState]>,
    with_gradient: bool,
    config: &InnerConfig,
) -> Result<Evaluation> {
    objective.validate()?;
    crate::model::check_params(model, params)?;
    let p = params.len();
    let mut inner = Vec::with_capacity(objective.len());
    let mut achieved = Vec::with_capacity(objective.len());
    let mut warnings = Vec::new();
    let mut total = 0.0;
    let mut grad = vec![0.0; p];
    for i in 0..objective.len() {
        let alpha = objective.direction(i);
        let start = warm.and_then(|w| w.get(i)).or_else(|| inner.last());
        let state = solve_inner(model, params, alpha, objective.magnitude(i), start, config)
            .or_else(|e| if start.is_some() { solve_inner(model, params, alpha, objective.magnitude(i), None, config) } else { Err(e) })
            .map_err(|e| Error::InnerFailure {
                iteration: 0,
                target: i,
                source: Box::new(e),
            })?;
        let j = model.jet(params, &state.strain, with_gradient);
        let g = Vector3::new(j.grad(0), j.grad(1), j.grad(2));
        let h_raw = Matrix3::from_fn(|r, c| j.hess(r, c));
        let h = if objective.kind == ObjectiveKind::UniaxialStress {
            h_raw
        } else {
            check_tangent(&h_raw, config.eigen_floor, i, &mut warnings)
        };
        let v = target_value(objective.kind, alpha, &g, &h)?;
        let w = objective.weight(i);
        let r = v - objective.targets[i];
        total += w * r * r;
        if with_gradient && p > 0 {
            let mixed = DMatrix::from_fn(3, p, |r, c| j.hess(r, 3 + c));
            let sens = inner::sensitivity_from(&h_raw, &mixed, &constraint_row(alpha))?;
            let dv = value_gradient(objective.kind, alpha, &j, &h, &mixed, &sens.strain, p);
            for k in 0..p {
                grad[k] += 2.0 * w * r * dv[k];
            }
        }
        achieved.push(v);
        inner.push(state);
    }
    Ok(Evaluation {
        objective: total,
        achieved,
        inner,
        gradient: with_gradient.then_some(grad),
        warnings,
    })
}

/// `dv/dT` of one target value, chaining through the inner solution.
fn value_gradient(
    kind: ObjectiveKind,
    alpha: f64,
    j: &crate::jet::Jet,
    h: &Matrix3<f64>,
    mixed: &DMatrix<f64>,
    dx: &DMatrix<f64>,
    p: usize,
) -> Vec<f64> {
    let d = direction(alpha);
    match kind {
        ObjectiveKind::UniaxialStress => {
            let w = Vector3::new(d.x * d.x, d.y * d.y, d.x * d.y);
            (0..p)
                .map(|k| {
                    let dg = Vector3::from_fn(|r, _| mixed[(r, k)] + (0..3).map(|c| h[(r, c)] * dx[(c, k)]).sum::<f64>());
                    w.dot(&dg)
                })
                .collect()
        }
        ObjectiveKind::DirectionalStiffness | ObjectiveKind::PoissonRatio => {
            // (ddᵀ):𝕊:(ddᵀ) = aᵀH⁻¹a and (ddᵀ):𝕊:(nnᵀ) = aᵀH⁻¹b with the
            // constraint rows of the two directions.
            let a = constraint_row(alpha);
            let b = constraint_row(alpha + std::f64::consts::FRAC_PI_2);
            let hinv = h.try_inverse().unwrap_or_else(Matrix3::zeros);
            let (u, wv) = (hinv * a, hinv * b);
            let (m, c) = (a.dot(&u), a.dot(&wv));
            (0..p)
                .map(|k| {
                    let dh = Matrix3::from_fn(|r, s| {
                        j.third(r, s, 3 + k) + (0..3).map(|q| j.third(r, s, q) * dx[(q, k)]).sum::<f64>()
                    });
                    let dm = -u.dot(&(dh * u));
                    if kind == ObjectiveKind::DirectionalStiffness {
                        -dm / (m * m)
                    } else {
                        let dc = -u.dot(&(dh * wv));
                        -(dc * m - c * dm) / (m * m)
                    }
                })
                .collect()
        }
    }
}

/// Achieved values of the objective's targets at `params`.
pub fn achieved_profile(
    model: &dyn EnergyModel,
    params: &[f64],
    objective: &DesignObjective,
    config: &InnerConfig,
) -> Result<Vec<f64>> {
    Ok(evaluate_objective(model, params, objective, None, false, config)?.achieved)
}

/// Parameter box: overrides if given, else the model's own bounds.
pub fn resolve_bounds(
    model: &dyn EnergyModel,
    t_min: Option<&[f64]>,
    t_max: Option<&[f64]>,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let p = model.param_count();
    if p == 0 {
        return Err(Error::InvalidInput("model has no structure parameters to design".into()));
    }
    let own = model.bounds();
    let lo = t_min.map(<[f64]>::to_vec).or_else(|| own.as_ref().map(|b| b.0.clone()));
    let hi = t_max.map(<[f64]>::to_vec).or_else(|| own.as_ref().map(|b| b.1.clone()));
    let (Some(lo), Some(hi)) = (lo, hi) else {
        return Err(Error::InvalidInput("parameter bounds are unknown".into()));
    };
    if lo.len() != p || hi.len() != p || lo.iter().zip(&hi).any(|(l, h)| !(l <= h)) {
        return Err(Error::InvalidInput("bounds must be ordered and match the parameter count".into()));
    }
    Ok((lo, hi))
}

/// Runs the outer optimization from `init`.
///
/// `progress` sees every accepted iterate with its objective.
pub fn design(
    model: &dyn EnergyModel,
    objective: &DesignObjective,
    init: &[f64],
    bounds: (&[f64], &[f64]),
    config: &DesignConfig,
    progress: &mut dyn FnMut(usize, &[f64], f64),
) -> Result<DesignResult> {
    objective.validate()?;
    crate::model::check_params(model, init)?;
    let (lo, hi) = bounds;
    for (i, v) in init.iter().enumerate() {
        if !(lo[i] <= *v && *v <= hi[i]) {
            return Err(Error::ParamOutOfBounds {
                index: i,
                value: *v,
                min: lo[i],
                max: hi[i],
            });
        }
    }
    let mut warm: Option<Vec<InnerState>> = None;
    let mut warnings = Vec::new();
    let mut f = |t: &[f64], iteration: usize| -> Result<(f64, Vec<f64>)> {
        let ev = evaluate_objective(model, t, objective, warm.as_deref(), true, &config.inner).map_err(|e| match e {
            Error::InnerFailure { target, source, .. } => Error::InnerFailure {
                iteration,
                target,
                source,
            },
            e => e,
        })?;
        warm = Some(ev.inner);
        for w in ev.warnings {
            if !warnings.contains(&w) {
                warnings.push(w);
            }
        }
        Ok((ev.objective, ev.gradient.unwrap_or_default()))
    };
    let lb = LbfgsbConfig {
        history: config.history,
        max_iterations: config.max_iterations,
        gradient_tolerance: config.gradient_tolerance,
    };
    let out = minimize(&mut f, init, lo, hi, &lb, progress)?;
    let achieved = achieved_profile(model, &out.x, objective, &config.inner)?;
    Ok(DesignResult {
        params: out.x,
        objective: out.f,
        initial_objective: out.history[0],
        objective_history: out.history,
        achieved_profile: achieved,
        targets: objective.targets.clone(),
        iterations: out.iterations,
        converged: out.converged,
        projected_gradient: out.projected_gradient,
        start: init.to_vec(),
        warnings,
    })
}

/// `n` uniformly random points in the box.
pub fn random_starts(lo: &[f64], hi: &[f64], n: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| lo.iter().zip(hi).map(|(l, h)| if h > l { rng.gen_range(*l..*h) } else { *l }).collect())
        .collect()
}

/// Runs [`design`] from every start and keeps the lowest objective; the
/// other runs are returned too, in start order.
pub fn design_multistart(
    model: &dyn EnergyModel,
    objective: &DesignObjective,
    starts: &[Vec<f64>],
    bounds: (&[f64], &[f64]),
    config: &DesignConfig,
    progress: &mut dyn FnMut(usize, usize, f64),
) -> Result<(DesignResult, Vec<DesignResult>)> {
    let mut runs = Vec::new();
    let mut last_err = None;
    for (s, start) in starts.iter().enumerate() {
        match design(model, objective, start, bounds, config, &mut |it, _, o| progress(s, it, o)) {
            Ok(r) => runs.push(r),
            Err(e) => {
                log::warn!("design start {s} failed: {e}");
                last_err = Some(e);
            }
        }
    }
    let best = runs
        .iter()
        .min_by(|a, b| a.objective.total_cmp(&b.objective))
        .cloned()
        .ok_or_else(|| last_err.unwrap_or_else(|| Error::InvalidInput("no start points".into())))?;
    Ok((best, runs))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fem::MaterialParams;
    use crate::model::AnalyticModel;
    use crate::tensor::StrainState;

    #[test]
    fn compliance_matches_closed_form_contractions() {
        let model = AnalyticModel::material(MaterialParams::default());
        let h = model.hessian(&[], &StrainState::new(0.05, -0.01, 0.02));
        for k in 0..6 {
            let alpha = 0.4 * k as f64;
            let (m, c) = compliance_contractions(&h, alpha).unwrap();
            let hinv = h.try_inverse().unwrap();
            let a = constraint_row(alpha);
            let b = constraint_row(alpha + std::f64::consts::FRAC_PI_2);
            assert!((m - a.dot(&(hinv * a))).abs() < 1e-12 * m.abs());
            assert!((c - a.dot(&(hinv * b))).abs() < 1e-12 * m.abs());
        }
    }

    #[test]
    fn rest_stiffness_and_poisson_of_isotropic_material() {
        let mat = MaterialParams::default();
        let h = AnalyticModel::material(mat).hessian(&[], &StrainState::ZERO);
        for k in 0..8 {
            let alpha = 0.3 * k as f64;
            let e = target_value(ObjectiveKind::DirectionalStiffness, alpha, &Vector3::zeros(), &h).unwrap();
            let nu = target_value(ObjectiveKind::PoissonRatio, alpha, &Vector3::zeros(), &h).unwrap();
            assert!((e - mat.youngs_modulus).abs() < 1e-12 * mat.youngs_modulus);
            assert!((nu - mat.poisson_ratio).abs() < 1e-12);
        }
    }

    #[test]
    fn objective_validation() {
        let mut o = DesignObjective {
            kind: ObjectiveKind::UniaxialStress,
            directions: vec![0.0],
            magnitudes: vec![0.05, 0.1],
            targets: vec![0.1, 0.2],
            weights: None,
        };
        assert!(o.validate().is_ok());
        o.magnitudes.push(0.2);
        assert!(o.validate().is_err());
        o.magnitudes = vec![-0.6];
        assert!(o.validate().is_err());
        let json = r#"{"kind":"poisson_ratio","directions":[0,1],"magnitudes":[0.05],"targets":[0.3,0.2],"init":[0.5,0.5]}"#;
        let f: ObjectiveFile = serde_json::from_str(json).unwrap();
        assert_eq!(f.objective.kind, ObjectiveKind::PoissonRatio);
        assert_eq!(f.init, Some(vec![0.5, 0.5]));
    }
}
