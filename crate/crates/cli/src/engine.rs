//! Model loading and the queries shared by the command line and the service.

use std::f64::consts::PI;
use std::path::Path;
use std::sync::Arc;

use metanet_core::design::{
    design_multistart, evaluate_objective, random_starts, resolve_bounds, DesignConfig, DesignObjective, DesignResult,
    InnerConfig, ObjectiveFile, ObjectiveKind,
};
use metanet_core::geometry::FamilySpec;
use metanet_core::model::{AnalyticModel, EnergyModel};
use metanet_core::nmn::{EnergyNet, MODEL_FORMAT};
use metanet_core::{Error, Result};
use serde::{Deserialize, Serialize};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelInfo {
    /// `nmn` or `analytic`.
    pub kind: String,
    pub param_count: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub family: Option<FamilySpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub t_min: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub t_max: Option<Vec<f64>>,
}

/// A model ready to answer queries, shared between threads.
#[derive(Clone)]
pub struct LoadedModel {
    pub model: Arc<dyn EnergyModel>,
    pub net: Option<Arc<EnergyNet>>,
    pub info: ModelInfo,
}

impl LoadedModel {
    pub fn from_net(net: EnergyNet) -> Self {
        let net = Arc::new(net);
        let bounds = net.bounds();
        Self {
            info: ModelInfo {
                kind: "nmn".into(),
                param_count: net.param_count,
                family: net.family.clone(),
                t_min: bounds.as_ref().map(|b| b.0.clone()),
                t_max: bounds.map(|b| b.1),
            },
            model: net.clone(),
            net: Some(net),
        }
    }

    pub fn from_analytic(model: AnalyticModel) -> Self {
        Self {
            info: ModelInfo {
                kind: "analytic".into(),
                param_count: model.param_count(),
                family: None,
                t_min: Some(model.t_min.clone()),
                t_max: Some(model.t_max.clone()),
            },
            model: Arc::new(model),
            net: None,
        }
    }

    pub fn dyn_model(&self) -> &dyn EnergyModel {
        self.model.as_ref()
    }
}

/// Reads a trained network file, or an analytic model given as JSON with a
/// `base` material.
pub fn load_model(path: &Path) -> Result<LoadedModel> {
    let text = std::fs::read_to_string(path)?;
    let value: serde_json::Value =
        serde_json::from_str(&text).map_err(|e| Error::Format(format!("{}: {e}", path.display())))?;
    if value.get("format").and_then(|v| v.as_str()) == Some(MODEL_FORMAT) {
        return Ok(LoadedModel::from_net(EnergyNet::read(text.as_bytes())?));
    }
    if value.get("base").is_some() {
        let m: AnalyticModel =
            serde_json::from_value(value).map_err(|e| Error::Format(format!("analytic model: {e}")))?;
        m.base.validate()?;
        if m.poisson_slope.len() != m.youngs_slope.len()
            || m.t_min.len() != m.youngs_slope.len()
            || m.t_max.len() != m.youngs_slope.len()
        {
            return Err(Error::Format("analytic model: slope and bound lengths differ".into()));
        }
        return Ok(LoadedModel::from_analytic(m));
    }
    Err(Error::Format(format!("{}: not a model file", path.display())))
}

/// Directional stiffness and Poisson ratio over `n` directions spread
/// around the full circle.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PolarProfile {
    pub magnitude: f64,
    pub directions: Vec<f64>,
    pub stiffness: Vec<f64>,
    pub poisson: Vec<f64>,
}

pub fn polar_profile(
    model: &dyn EnergyModel,
    params: &[f64],
    n: usize,
    magnitude: f64,
    inner: &InnerConfig,
) -> Result<PolarProfile> {
    if n == 0 {
        return Err(Error::InvalidInput("profile needs at least one direction".into()));
    }
    let directions: Vec<f64> = (0..n).map(|k| 2.0 * PI * k as f64 / n as f64).collect();
    let objective = DesignObjective {
        kind: ObjectiveKind::DirectionalStiffness,
        directions: directions.clone(),
        magnitudes: vec![magnitude],
        targets: vec![0.0; n],
        weights: None,
    };
    let stiff = evaluate_objective(model, params, &objective, None, false, inner)?;
    let poisson_obj = DesignObjective {
        kind: ObjectiveKind::PoissonRatio,
        ..objective
    };
    let poisson = evaluate_objective(model, params, &poisson_obj, Some(&stiff.inner), false, inner)?;
    Ok(PolarProfile {
        magnitude,
        directions,
        stiffness: stiff.achieved,
        poisson: poisson.achieved,
    })
}

/// Directional stress along `alpha` at each uniaxial strain magnitude.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StressCurve {
    pub alpha: f64,
    pub magnitudes: Vec<f64>,
    pub stress: Vec<f64>,
}

pub fn stress_curve(
    model: &dyn EnergyModel,
    params: &[f64],
    alpha: f64,
    magnitudes: &[f64],
    inner: &InnerConfig,
) -> Result<StressCurve> {
    if magnitudes.is_empty() {
        return Err(Error::InvalidInput("stress curve needs at least one magnitude".into()));
    }
    let objective = DesignObjective {
        kind: ObjectiveKind::UniaxialStress,
        directions: vec![alpha],
        magnitudes: magnitudes.to_vec(),
        targets: vec![0.0; magnitudes.len()],
        weights: None,
    };
    let ev = evaluate_objective(model, params, &objective, None, false, inner)?;
    Ok(StressCurve {
        alpha,
        magnitudes: magnitudes.to_vec(),
        stress: ev.achieved,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DesignOutput {
    pub best: DesignResult,
    /// One entry per start, in start order; failed starts are left out.
    pub runs: Vec<DesignResult>,
}

/// Start points: the file's `init` first, then seeded random points up to
/// `starts` in total.
pub fn design_starts(file: &ObjectiveFile, lo: &[f64], hi: &[f64], starts: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut out = Vec::new();
    if let Some(init) = &file.init {
        out.push(init.clone());
    }
    let extra = starts.max(1).saturating_sub(out.len());
    out.extend(random_starts(lo, hi, extra, seed));
    out
}

/// Multi-start design. `progress` receives `(start, iteration, best
/// objective so far)`, which never increases.
pub fn run_design(
    model: &dyn EnergyModel,
    file: &ObjectiveFile,
    config: &DesignConfig,
    progress: &mut dyn FnMut(usize, usize, f64),
) -> Result<DesignOutput> {
    file.objective.validate()?;
    let (lo, hi) = resolve_bounds(model, file.t_min.as_deref(), file.t_max.as_deref())?;
    let starts = design_starts(file, &lo, &hi, config.starts, config.seed);
    let mut best = f64::INFINITY;
    let (best_run, runs) =
        design_multistart(model, &file.objective, &starts, (&lo, &hi), config, &mut |s, it, o| {
            if o < best {
                best = o;
            }
            progress(s, it, best);
        })?;
    Ok(DesignOutput { best: best_run, runs })
}
