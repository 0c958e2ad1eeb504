//! Two-branch MLP energy density `Φ(T, E; θ)` with exact derivatives in
//! strain and structure parameters, and its trainer.
//!
//! Strain and parameters each pass through their own branch; the branch
//! outputs are concatenated and fed through a trunk ending in a softplus
//! unit, so `Φ ≥ 0`.

mod activation;
mod train;

use nalgebra::{DMatrix, DVector, Matrix3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::io::{Read, Write};

use crate::error::{Error, Result};
use crate::geometry::FamilySpec;
use crate::jet::{Jet, MAX_VARS};
use crate::model::EnergyModel;
use crate::tensor::{StrainState, StressState};

pub use activation::Activation;
pub use train::{evaluate, train, EpochLog, TrainConfig, TrainLog};

pub const MODEL_FORMAT: &str = "metanet-nmn";
pub const MODEL_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NetConfig {
    pub strain_branch_layers: usize,
    pub param_branch_layers: usize,
    pub trunk_layers: usize,
    pub width: usize,
    pub hidden_activation: Activation,
}

impl Default for NetConfig {
    fn default() -> Self {
        Self {
            strain_branch_layers: 3,
            param_branch_layers: 3,
            trunk_layers: 3,
            width: 256,
            hidden_activation: Activation::Swish,
        }
    }
}

impl NetConfig {
    pub fn validate(&self) -> Result<()> {
        if self.width == 0 || self.strain_branch_layers == 0 || self.param_branch_layers == 0 {
            return Err(Error::InvalidInput(
                "width and branch depths must be at least 1".into(),
            ));
        }
        if self.hidden_activation == Activation::Softplus {
            return Err(Error::InvalidInput(
                "softplus is reserved for the output unit".into(),
            ));
        }
        Ok(())
    }
}

/// Per-feature affine input maps and the output energy scale.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Normalization {
    pub strain_mean: [f64; 3],
    pub strain_std: [f64; 3],
    pub param_mean: Vec<f64>,
    pub param_std: Vec<f64>,
    /// `Φ = energy_scale · softplus(z)`.
    pub energy_scale: f64,
}

impl Normalization {
    pub fn identity(param_count: usize) -> Self {
        Self {
            strain_mean: [0.0; 3],
            strain_std: [1.0; 3],
            param_mean: vec![0.0; param_count],
            param_std: vec![1.0; param_count],
            energy_scale: 1.0,
        }
    }
}

/// Dense layer `z = W a + b`.
#[derive(Clone, Debug, PartialEq)]
pub struct Layer {
    pub w: DMatrix<f64>,
    pub b: DVector<f64>,
}

impl Layer {
    fn init(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> Self {
        // Glorot-uniform weights, zero bias.
        let limit = (6.0 / (rows + cols).max(1) as f64).sqrt();
        Self {
            w: DMatrix::from_fn(rows, cols, |_, _| rng.gen_range(-limit..limit)),
            b: DVector::zeros(rows),
        }
    }

    pub fn rows(&self) -> usize {
        self.w.nrows()
    }

    pub fn cols(&self) -> usize {
        self.w.ncols()
    }
}

#[derive(Serialize, Deserialize)]
struct LayerFile {
    rows: usize,
    cols: usize,
    /// Row-major.
    weights: Vec<f64>,
    bias: Vec<f64>,
}

impl From<&Layer> for LayerFile {
    fn from(l: &Layer) -> Self {
        Self {
            rows: l.rows(),
            cols: l.cols(),
            weights: l.w.transpose().as_slice().to_vec(),
            bias: l.b.as_slice().to_vec(),
        }
    }
}

impl TryFrom<LayerFile> for Layer {
    type Error = Error;

    fn try_from(f: LayerFile) -> Result<Self> {
        if f.weights.len() != f.rows * f.cols || f.bias.len() != f.rows {
            return Err(Error::Format("layer blob sizes do not match its shape".into()));
        }
        Ok(Layer {
            w: DMatrix::from_row_slice(f.rows, f.cols, &f.weights),
            b: DVector::from_vec(f.bias),
        })
    }
}

#[derive(Serialize, Deserialize)]
struct ModelFile {
    format: String,
    version: u32,
    config: NetConfig,
    param_count: usize,
    family: Option<FamilySpec>,
    normalization: Normalization,
    strain_branch: Vec<LayerFile>,
    param_branch: Vec<LayerFile>,
    trunk: Vec<LayerFile>,
    head: LayerFile,
}

#[derive(Clone, Debug, PartialEq)]
pub struct EnergyNet {
    pub config: NetConfig,
    pub param_count: usize,
    /// Family the net was trained on; supplies parameter bounds.
    pub family: Option<FamilySpec>,
    pub normalization: Normalization,
    pub strain_branch: Vec<Layer>,
    pub param_branch: Vec<Layer>,
    pub trunk: Vec<Layer>,
    pub head: Layer,
}

/// Derivatives of energy, stress and tangent w.r.t. structure parameters.
#[derive(Clone, Debug, PartialEq)]
pub struct ParamGradients {
    pub energy: Vec<f64>,
    pub stress: Vec<StressState>,
    /// `∂H/∂T_i` of the component Hessian.
    pub hessian: Vec<Matrix3<f64>>,
}

/// Number of Taylor coefficients of a third-order jet in `n` variables.
fn jet_len(n: usize) -> usize {
    1 + n + n * (n + 1) / 2 + n * (n + 1) * (n + 2) / 6
}

fn jet_to_row(j: &Jet, row: &mut [f64]) {
    let n = j.nvars();
    let (n2, n3) = (n * (n + 1) / 2, n * (n + 1) * (n + 2) / 6);
    row[0] = j.v;
    row[1..1 + n].copy_from_slice(&j.d1[..n]);
    row[1 + n..1 + n + n2].copy_from_slice(&j.d2[..n2]);
    row[1 + n + n2..1 + n + n2 + n3].copy_from_slice(&j.d3[..n3]);
}

fn row_to_jet(n: usize, row: &[f64]) -> Jet {
    let (n2, n3) = (n * (n + 1) / 2, n * (n + 1) * (n + 2) / 6);
    let mut j = Jet::constant(n, row[0]);
    j.d1[..n].copy_from_slice(&row[1..1 + n]);
    j.d2[..n2].copy_from_slice(&row[1 + n..1 + n + n2]);
    j.d3[..n3].copy_from_slice(&row[1 + n + n2..1 + n + n2 + n3]);
    j
}

/// Applies a layer and activation to a block of jets stored as rows.
fn jet_layer(layer: &Layer, act: Activation, input: &DMatrix<f64>, n: usize) -> DMatrix<f64> {
    let mut z = &layer.w * input;
    let k = z.ncols();
    let mut row = vec![0.0; k];
    for r in 0..z.nrows() {
        for c in 0..k {
            row[c] = z[(r, c)];
        }
        row[0] += layer.b[r];
        let j = row_to_jet(n, &row);
        let out = j.compose(act.derivs(j.v));
        jet_to_row(&out, &mut row);
        for c in 0..k {
            z[(r, c)] = row[c];
        }
    }
    z
}

impl EnergyNet {
    /// Randomly initialized network.
    pub fn new(config: NetConfig, param_count: usize, seed: u64) -> Result<Self> {
        config.validate()?;
        if param_count + 3 > MAX_VARS {
            return Err(Error::InvalidInput(format!(
                "at most {} structure parameters are supported",
                MAX_VARS - 3
            )));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let w = config.width;
        let branch = |input: usize, depth: usize, rng: &mut ChaCha8Rng| {
            (0..depth)
                .map(|i| Layer::init(w, if i == 0 { input } else { w }, rng))
                .collect::<Vec<_>>()
        };
        let strain_branch = branch(3, config.strain_branch_layers, &mut rng);
        let param_branch = branch(param_count, config.param_branch_layers, &mut rng);
        let trunk = branch(2 * w, config.trunk_layers, &mut rng);
        let head_in = if config.trunk_layers == 0 { 2 * w } else { w };
        let head = Layer::init(1, head_in, &mut rng);
        Ok(Self {
            config,
            param_count,
            family: None,
            normalization: Normalization::identity(param_count),
            strain_branch,
            param_branch,
            trunk,
            head,
        })
    }

    pub fn layers(&self) -> impl Iterator<Item = &Layer> {
        self.strain_branch
            .iter()
            .chain(&self.param_branch)
            .chain(&self.trunk)
            .chain(std::iter::once(&self.head))
    }

    pub(crate) fn layers_mut(&mut self) -> impl Iterator<Item = &mut Layer> {
        self.strain_branch
            .iter_mut()
            .chain(self.param_branch.iter_mut())
            .chain(self.trunk.iter_mut())
            .chain(std::iter::once(&mut self.head))
    }

    pub fn weight_count(&self) -> usize {
        self.layers().map(|l| l.w.len() + l.b.len()).sum()
    }

    fn check(&self, params: &[f64]) {
        assert_eq!(
            params.len(),
            self.param_count,
            "network expects {} structure parameters",
            self.param_count
        );
    }

    /// Taylor expansion of `Φ`; see [`EnergyModel::jet`].
    pub fn eval_jet(&self, params: &[f64], strain: &StrainState, wrt_params: bool) -> Jet {
        self.check(params);
        let p = self.param_count;
        let n = if wrt_params { 3 + p } else { 3 };
        let k = jet_len(n);
        let nm = &self.normalization;
        let act = self.config.hidden_activation;

        let mut a = DMatrix::zeros(3, k);
        for (i, &e) in strain.components().iter().enumerate() {
            let j = Jet::var(n, i, e).add_const(-nm.strain_mean[i]).scale(1.0 / nm.strain_std[i]);
            let mut row = vec![0.0; k];
            jet_to_row(&j, &mut row);
            for c in 0..k {
                a[(i, c)] = row[c];
            }
        }
        let mut b = DMatrix::zeros(p, k);
        for (i, &t) in params.iter().enumerate() {
            let base = if wrt_params { Jet::var(n, 3 + i, t) } else { Jet::constant(n, t) };
            let j = base.add_const(-nm.param_mean[i]).scale(1.0 / nm.param_std[i]);
            let mut row = vec![0.0; k];
            jet_to_row(&j, &mut row);
            for c in 0..k {
                b[(i, c)] = row[c];
            }
        }
        for l in &self.strain_branch {
            a = jet_layer(l, act, &a, n);
        }
        for l in &self.param_branch {
            b = jet_layer(l, act, &b, n);
        }
        let mut h = DMatrix::zeros(a.nrows() + b.nrows(), k);
        h.rows_mut(0, a.nrows()).copy_from(&a);
        h.rows_mut(a.nrows(), b.nrows()).copy_from(&b);
        for l in &self.trunk {
            h = jet_layer(l, act, &h, n);
        }
        let out = jet_layer(&self.head, Activation::Softplus, &h, n);
        row_to_jet(n, out.row(0).transpose().as_slice()).scale(nm.energy_scale)
    }

    pub fn forward(&self, params: &[f64], strain: &StrainState) -> f64 {
        self.forward_value(params, strain)
    }

    /// Value only, without derivative bookkeeping.
    pub fn forward_value(&self, params: &[f64], strain: &StrainState) -> f64 {
        self.check(params);
        let nm = &self.normalization;
        let act = self.config.hidden_activation;
        let dense = |l: &Layer, x: &DVector<f64>, act: Activation| {
            let mut z = &l.w * x + &l.b;
            z.iter_mut().for_each(|v| *v = act.derivs2(*v)[0]);
            z
        };
        let c = strain.components();
        let mut a = DVector::from_fn(3, |i, _| (c[i] - nm.strain_mean[i]) / nm.strain_std[i]);
        let mut b = DVector::from_fn(self.param_count, |i, _| (params[i] - nm.param_mean[i]) / nm.param_std[i]);
        for l in &self.strain_branch {
            a = dense(l, &a, act);
        }
        for l in &self.param_branch {
            b = dense(l, &b, act);
        }
        let mut h = DVector::from_iterator(a.len() + b.len(), a.iter().chain(b.iter()).copied());
        for l in &self.trunk {
            h = dense(l, &h, act);
        }
        nm.energy_scale * dense(&self.head, &h, Activation::Softplus)[0]
    }

    pub fn stress(&self, params: &[f64], strain: &StrainState) -> StressState {
        EnergyModel::stress(self, params, strain)
    }

    /// Component Hessian `∂²Φ/∂e_a∂e_b`.
    pub fn tangent(&self, params: &[f64], strain: &StrainState) -> Matrix3<f64> {
        self.hessian(params, strain)
    }

    pub fn param_gradients(&self, params: &[f64], strain: &StrainState) -> ParamGradients {
        let j = self.eval_jet(params, strain, true);
        let p = self.param_count;
        ParamGradients {
            energy: (0..p).map(|i| j.grad(3 + i)).collect(),
            stress: (0..p)
                .map(|i| StressState::from_energy_gradient([j.hess(0, 3 + i), j.hess(1, 3 + i), j.hess(2, 3 + i)]))
                .collect(),
            hessian: (0..p)
                .map(|i| Matrix3::from_fn(|a, b| j.third(a, b, 3 + i)))
                .collect(),
        }
    }

    pub fn write<W: Write>(&self, w: W) -> Result<()> {
        let file = ModelFile {
            format: MODEL_FORMAT.into(),
            version: MODEL_VERSION,
            config: self.config.clone(),
            param_count: self.param_count,
            family: self.family.clone(),
            normalization: self.normalization.clone(),
            strain_branch: self.strain_branch.iter().map(LayerFile::from).collect(),
            param_branch: self.param_branch.iter().map(LayerFile::from).collect(),
            trunk: self.trunk.iter().map(LayerFile::from).collect(),
            head: LayerFile::from(&self.head),
        };
        serde_json::to_writer(w, &file)?;
        Ok(())
    }

    pub fn read<R: Read>(r: R) -> Result<Self> {
        let file: ModelFile = serde_json::from_reader(r).map_err(|e| Error::Format(format!("model file: {e}")))?;
        if file.format != MODEL_FORMAT || file.version != MODEL_VERSION {
            return Err(Error::Format(format!(
                "unsupported model format {} v{}",
                file.format, file.version
            )));
        }
        let layers = |v: Vec<LayerFile>| v.into_iter().map(Layer::try_from).collect::<Result<Vec<_>>>();
        let net = Self {
            config: file.config,
            param_count: file.param_count,
            family: file.family,
            normalization: file.normalization,
            strain_branch: layers(file.strain_branch)?,
            param_branch: layers(file.param_branch)?,
            trunk: layers(file.trunk)?,
            head: Layer::try_from(file.head)?,
        };
        net.check_shapes()?;
        Ok(net)
    }

    fn check_shapes(&self) -> Result<()> {
        let chain = |layers: &[Layer], input: usize| -> Result<usize> {
            let mut d = input;
            for l in layers {
                if l.cols() != d {
                    return Err(Error::Format("layer shapes do not chain".into()));
                }
                d = l.rows();
            }
            Ok(d)
        };
        let a = chain(&self.strain_branch, 3)?;
        let b = chain(&self.param_branch, self.param_count)?;
        let t = chain(&self.trunk, a + b)?;
        if chain(std::slice::from_ref(&self.head), t)? != 1 {
            return Err(Error::Format("head must have one output".into()));
        }
        let nm = &self.normalization;
        if nm.param_mean.len() != self.param_count || nm.param_std.len() != self.param_count {
            return Err(Error::Format("normalization does not match param_count".into()));
        }
        Ok(())
    }
}

impl EnergyModel for EnergyNet {
    fn param_count(&self) -> usize {
        self.param_count
    }

    fn bounds(&self) -> Option<(Vec<f64>, Vec<f64>)> {
        self.family.as_ref().map(|f| (f.t_min.clone(), f.t_max.clone()))
    }

    fn jet(&self, params: &[f64], strain: &StrainState, wrt_params: bool) -> Jet {
        self.eval_jet(params, strain, wrt_params)
    }

    fn energy(&self, params: &[f64], strain: &StrainState) -> f64 {
        self.forward_value(params, strain)
    }
}
