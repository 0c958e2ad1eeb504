//! Adam training on energies and stresses.
//!
//! The stress term of the loss involves `∂Φ/∂E`, so each batch is pushed
//! forward together with three strain tangents and the loss gradient is
//! taken by reverse mode through that forward-mode computation.

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{Activation, EnergyNet, Layer, NetConfig, Normalization};
use crate::error::{Error, Result};
use crate::sampler::Dataset;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub seed: u64,
    /// Loss denominators are floored at this fraction of the median
    /// training energy (and stress norm).
    pub denominator_floor: f64,
    /// Learning rate at the last epoch relative to the first (exponential
    /// decay in between).
    pub final_lr_factor: f64,
    /// Metrics are computed every `log_every` epochs and at the end.
    pub log_every: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-4,
            batch_size: 4096,
            epochs: 200,
            seed: 0,
            denominator_floor: 1e-3,
            final_lr_factor: 1.0,
            log_every: 10,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0) || self.batch_size == 0 || !(self.final_lr_factor > 0.0) {
            return Err(Error::InvalidInput(
                "learning_rate, batch_size and final_lr_factor must be positive".into(),
            ));
        }
        if !(self.denominator_floor > 0.0) {
            return Err(Error::InvalidInput("denominator_floor must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub loss: f64,
    pub train_energy_error: Option<f64>,
    pub train_gradient_error: Option<f64>,
    pub test_energy_error: Option<f64>,
    pub test_gradient_error: Option<f64>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainLog {
    pub epochs: Vec<EpochLog>,
}

impl TrainLog {
    pub fn last(&self) -> Option<&EpochLog> {
        self.epochs.last()
    }
}

/// Dataset columns in network input units.
struct Columns {
    strain: DMatrix<f64>,
    params: DMatrix<f64>,
    /// Energies divided by the output scale.
    psi: Vec<f64>,
    stress: Vec<[f64; 3]>,
    psi_den: Vec<f64>,
    stress_den2: Vec<f64>,
}

impl Columns {
    fn new(net: &EnergyNet, data: &Dataset, psi_floor: f64, stress_floor: f64) -> Self {
        let nm = &net.normalization;
        let n = data.len();
        let p = net.param_count;
        let strain = DMatrix::from_fn(3, n, |i, j| {
            (data.records[j].strain.components()[i] - nm.strain_mean[i]) / nm.strain_std[i]
        });
        let params = DMatrix::from_fn(p, n, |i, j| {
            (data.records[j].params.values[i] - nm.param_mean[i]) / nm.param_std[i]
        });
        let scale = nm.energy_scale;
        Self {
            strain,
            params,
            psi: data.records.iter().map(|r| r.energy_density / scale).collect(),
            stress: data.records.iter().map(|r| r.stress.components()).collect(),
            psi_den: data
                .records
                .iter()
                .map(|r| r.energy_density.max(psi_floor) / scale)
                .collect(),
            stress_den2: data
                .records
                .iter()
                .map(|r| r.stress.norm().max(stress_floor).powi(2))
                .collect(),
        }
    }

    fn len(&self) -> usize {
        self.psi.len()
    }

    fn gather(&self, idx: &[usize]) -> (DMatrix<f64>, DMatrix<f64>) {
        let s = DMatrix::from_fn(3, idx.len(), |i, j| self.strain[(i, idx[j])]);
        let p = DMatrix::from_fn(self.params.nrows(), idx.len(), |i, j| self.params[(i, idx[j])]);
        (s, p)
    }
}

/// Per-layer values kept for the reverse sweep.
struct Cache {
    input: DMatrix<f64>,
    /// Strain tangents of the input, three blocks of columns side by side.
    input_dot: Option<DMatrix<f64>>,
    z: DMatrix<f64>,
    z_dot: Option<DMatrix<f64>>,
}

fn add_bias(z: &mut DMatrix<f64>, b: &DVector<f64>) {
    for mut col in z.column_iter_mut() {
        col += b;
    }
}

fn layer_forward(
    l: &Layer,
    act: Activation,
    input: DMatrix<f64>,
    input_dot: Option<DMatrix<f64>>,
) -> (DMatrix<f64>, Option<DMatrix<f64>>, Cache) {
    let mut z = &l.w * &input;
    add_bias(&mut z, &l.b);
    let z_dot = input_dot.as_ref().map(|d| &l.w * d);
    let bsz = z.ncols();
    let mut h = z.clone();
    h.iter_mut().for_each(|v| *v = act.derivs2(*v)[0]);
    let h_dot = z_dot.as_ref().map(|zd| {
        let mut hd = zd.clone();
        for k in 0..3 {
            for c in 0..bsz {
                for r in 0..z.nrows() {
                    hd[(r, k * bsz + c)] *= act.derivs2(z[(r, c)])[1];
                }
            }
        }
        hd
    });
    (
        h,
        h_dot,
        Cache {
            input,
            input_dot,
            z,
            z_dot,
        },
    )
}

/// Returns input adjoints (values, tangents) and accumulates weight
/// gradients into `grad`.
fn layer_backward(
    l: &Layer,
    act: Activation,
    cache: &Cache,
    h_bar: &DMatrix<f64>,
    h_dot_bar: Option<&DMatrix<f64>>,
    grad: &mut Layer,
    need_input: bool,
) -> (Option<DMatrix<f64>>, Option<DMatrix<f64>>) {
    let z = &cache.z;
    let (rows, bsz) = z.shape();
    let mut z_bar = h_bar.clone();
    let mut z_dot_bar = h_dot_bar.map(|m| m.clone());
    for c in 0..bsz {
        for r in 0..rows {
            let [_, d1, d2] = act.derivs2(z[(r, c)]);
            let mut v = d1 * h_bar[(r, c)];
            if let (Some(zd), Some(hdb)) = (&cache.z_dot, h_dot_bar) {
                for k in 0..3 {
                    v += d2 * zd[(r, k * bsz + c)] * hdb[(r, k * bsz + c)];
                }
            }
            z_bar[(r, c)] = v;
            if let Some(zdb) = z_dot_bar.as_mut() {
                for k in 0..3 {
                    zdb[(r, k * bsz + c)] *= d1;
                }
            }
        }
    }
    grad.w.gemm(1.0, &z_bar, &cache.input.transpose(), 1.0);
    if let (Some(zdb), Some(ad)) = (&z_dot_bar, &cache.input_dot) {
        grad.w.gemm(1.0, zdb, &ad.transpose(), 1.0);
    }
    for c in 0..bsz {
        grad.b += z_bar.column(c);
    }
    if !need_input {
        return (None, None);
    }
    let wt = l.w.transpose();
    let a_bar = &wt * &z_bar;
    let a_dot_bar = match (&z_dot_bar, &cache.input_dot) {
        (Some(zdb), Some(_)) => Some(&wt * zdb),
        _ => None,
    };
    (Some(a_bar), a_dot_bar)
}

struct Forward {
    caches_strain: Vec<Cache>,
    caches_param: Vec<Cache>,
    caches_trunk: Vec<Cache>,
    cache_head: Cache,
    /// Normalized energy per sample.
    phi: Vec<f64>,
    /// `∂Φ/∂(exx, eyy, exy)` per sample, physical units.
    grad: Vec<[f64; 3]>,
}

fn forward(net: &EnergyNet, strain: DMatrix<f64>, params: DMatrix<f64>) -> Forward {
    let act = net.config.hidden_activation;
    let nm = &net.normalization;
    let bsz = strain.ncols();
    let mut seed = DMatrix::zeros(3, 3 * bsz);
    for k in 0..3 {
        for c in 0..bsz {
            seed[(k, k * bsz + c)] = 1.0 / nm.strain_std[k];
        }
    }
    let (mut a, mut ad) = (strain, Some(seed));
    let mut caches_strain = Vec::new();
    for l in &net.strain_branch {
        let (h, hd, c) = layer_forward(l, act, a, ad);
        caches_strain.push(c);
        a = h;
        ad = hd;
    }
    let mut b = params;
    let mut caches_param = Vec::new();
    for l in &net.param_branch {
        let (h, _, c) = layer_forward(l, act, b, None);
        caches_param.push(c);
        b = h;
    }
    let ad = ad.expect("strain tangents");
    let (na, nb) = (a.nrows(), b.nrows());
    let mut h = DMatrix::zeros(na + nb, bsz);
    h.rows_mut(0, na).copy_from(&a);
    h.rows_mut(na, nb).copy_from(&b);
    let mut hd = DMatrix::zeros(na + nb, 3 * bsz);
    hd.rows_mut(0, na).copy_from(&ad);
    let mut hd = Some(hd);
    let mut caches_trunk = Vec::new();
    for l in &net.trunk {
        let (o, od, c) = layer_forward(l, act, h, hd);
        caches_trunk.push(c);
        h = o;
        hd = od;
    }
    let (out, out_dot, cache_head) = layer_forward(&net.head, Activation::Softplus, h, hd);
    let out_dot = out_dot.expect("head tangents");
    let s = nm.energy_scale;
    Forward {
        caches_strain,
        caches_param,
        caches_trunk,
        cache_head,
        phi: out.row(0).iter().copied().collect(),
        grad: (0..bsz)
            .map(|c| [0, 1, 2].map(|k| s * out_dot[(0, k * bsz + c)]))
            .collect(),
    }
}

fn zero_like(net: &EnergyNet) -> Vec<Layer> {
    net.layers()
        .map(|l| Layer {
            w: DMatrix::zeros(l.rows(), l.cols()),
            b: DVector::zeros(l.rows()),
        })
        .collect()
}

/// Batch loss and its gradient w.r.t. every weight (in [`EnergyNet::layers`] order).
fn loss_and_grad(net: &EnergyNet, cols: &Columns, idx: &[usize]) -> (f64, Vec<Layer>) {
    let (s, p) = cols.gather(idx);
    let f = forward(net, s, p);
    let bsz = idx.len();
    let inv_n = 1.0 / bsz as f64;
    let scale = net.normalization.energy_scale;
    let mut loss = 0.0;
    let mut h_bar = DMatrix::zeros(1, bsz);
    let mut h_dot_bar = DMatrix::zeros(1, 3 * bsz);
    for (c, &i) in idx.iter().enumerate() {
        let de = f.phi[c] - cols.psi[i];
        loss += de * de / cols.psi_den[i];
        h_bar[(0, c)] = 2.0 * de / cols.psi_den[i] * inv_n;
        let g = f.grad[c];
        let t = cols.stress[i];
        let r = [g[0] - t[0], g[1] - t[1], 0.5 * g[2] - t[2]];
        let den = cols.stress_den2[i];
        loss += (r[0] * r[0] + r[1] * r[1] + 2.0 * r[2] * r[2]) / den;
        let gb = [2.0 * r[0] / den, 2.0 * r[1] / den, 2.0 * r[2] / den];
        for k in 0..3 {
            h_dot_bar[(0, k * bsz + c)] = scale * gb[k] * inv_n;
        }
    }
    loss *= inv_n;

    let act = net.config.hidden_activation;
    let mut grads = zero_like(net);
    let ns = net.strain_branch.len();
    let np = net.param_branch.len();
    let nt = net.trunk.len();
    let (head_grad, rest) = grads.split_last_mut().expect("head layer");
    let (mut a_bar, mut a_dot_bar) = layer_backward(
        &net.head,
        Activation::Softplus,
        &f.cache_head,
        &h_bar,
        Some(&h_dot_bar),
        head_grad,
        true,
    );
    for t in (0..nt).rev() {
        let (ab, adb) = layer_backward(
            &net.trunk[t],
            act,
            &f.caches_trunk[t],
            a_bar.as_ref().unwrap(),
            a_dot_bar.as_ref(),
            &mut rest[ns + np + t],
            true,
        );
        a_bar = ab;
        a_dot_bar = adb;
    }
    let a_bar = a_bar.unwrap();
    let a_dot_bar = a_dot_bar.unwrap();
    let w = a_bar.nrows() - f.caches_param.last().map_or(0, |c| c.z.nrows());
    let na = f.caches_strain.last().map_or(3, |c| c.z.nrows());
    debug_assert_eq!(w, na);
    let mut sb = a_bar.rows(0, na).into_owned();
    let mut sdb = Some(a_dot_bar.rows(0, na).into_owned());
    for t in (0..ns).rev() {
        let (ab, adb) = layer_backward(
            &net.strain_branch[t],
            act,
            &f.caches_strain[t],
            &sb,
            sdb.as_ref(),
            &mut rest[t],
            t > 0,
        );
        if t > 0 {
            sb = ab.unwrap();
            sdb = adb;
        }
    }
    let mut pb = a_bar.rows(na, a_bar.nrows() - na).into_owned();
    for t in (0..np).rev() {
        let (ab, _) = layer_backward(
            &net.param_branch[t],
            act,
            &f.caches_param[t],
            &pb,
            None,
            &mut rest[ns + t],
            t > 0,
        );
        if t > 0 {
            pb = ab.unwrap();
        }
    }
    (loss, grads)
}

/// Mean relative energy and stress errors with floored denominators.
fn metrics(net: &EnergyNet, data: &Dataset, psi_floor: f64, stress_floor: f64) -> (f64, f64) {
    if data.is_empty() {
        return (0.0, 0.0);
    }
    let cols = Columns::new(net, data, psi_floor, stress_floor);
    let scale = net.normalization.energy_scale;
    let (mut ee, mut ge) = (0.0, 0.0);
    let chunk = 2048;
    let all: Vec<usize> = (0..cols.len()).collect();
    for idx in all.chunks(chunk) {
        let (s, p) = cols.gather(idx);
        let f = forward(net, s, p);
        for (c, &i) in idx.iter().enumerate() {
            let r = &data.records[i];
            ee += (scale * f.phi[c] - r.energy_density).abs() / r.energy_density.max(psi_floor);
            let g = f.grad[c];
            let t = r.stress.components();
            let d = [g[0] - t[0], g[1] - t[1], 0.5 * g[2] - t[2]];
            let dn = (d[0] * d[0] + d[1] * d[1] + 2.0 * d[2] * d[2]).sqrt();
            ge += dn / r.stress.norm().max(stress_floor);
        }
    }
    let n = data.len() as f64;
    (ee / n, ge / n)
}

/// Relative energy and stress (gradient) errors of `net` on `data`:
/// means of `|Φ − Ψ| / Ψ` and `‖∂Φ/∂E − S‖ / ‖S‖`, with denominators
/// floored at 1e-3 of the dataset medians.
pub fn evaluate(net: &EnergyNet, data: &Dataset) -> (f64, f64) {
    let floor = TrainConfig::default().denominator_floor;
    metrics(
        net,
        data,
        floor * data.median_energy(),
        floor * data.median_stress_norm(),
    )
}

fn normalization(data: &Dataset, param_count: usize) -> Normalization {
    let n = data.len() as f64;
    let stats = |f: &dyn Fn(usize) -> f64| {
        let mean = (0..data.len()).map(f).sum::<f64>() / n;
        let var = (0..data.len()).map(|j| (f(j) - mean).powi(2)).sum::<f64>() / n;
        let sd = var.sqrt();
        (mean, if sd > 1e-12 { sd } else { 1.0 })
    };
    let mut nm = Normalization::identity(param_count);
    for i in 0..3 {
        let (m, s) = stats(&|j| data.records[j].strain.components()[i]);
        nm.strain_mean[i] = m;
        nm.strain_std[i] = s;
    }
    for i in 0..param_count {
        let (m, s) = stats(&|j| data.records[j].params.values[i]);
        nm.param_mean[i] = m;
        nm.param_std[i] = s;
    }
    let med = data.median_energy();
    nm.energy_scale = if med > 0.0 { med } else { 1.0 };
    nm
}

struct Adam {
    m: Vec<Layer>,
    v: Vec<Layer>,
    t: i32,
}

impl Adam {
    const B1: f64 = 0.9;
    const B2: f64 = 0.999;
    const EPS: f64 = 1e-8;

    fn step(&mut self, net: &mut EnergyNet, grads: &[Layer], lr: f64) {
        self.t += 1;
        let c1 = 1.0 - Self::B1.powi(self.t);
        let c2 = 1.0 - Self::B2.powi(self.t);
        for (((layer, g), m), v) in net.layers_mut().zip(grads).zip(&mut self.m).zip(&mut self.v) {
            let upd = |p: &mut [f64], g: &[f64], m: &mut [f64], v: &mut [f64]| {
                for i in 0..p.len() {
                    m[i] = Self::B1 * m[i] + (1.0 - Self::B1) * g[i];
                    v[i] = Self::B2 * v[i] + (1.0 - Self::B2) * g[i] * g[i];
                    p[i] -= lr * (m[i] / c1) / ((v[i] / c2).sqrt() + Self::EPS);
                }
            };
            upd(layer.w.as_mut_slice(), g.w.as_slice(), m.w.as_mut_slice(), v.w.as_mut_slice());
            upd(layer.b.as_mut_slice(), g.b.as_slice(), m.b.as_mut_slice(), v.b.as_mut_slice());
        }
    }
}

/// Trains a fresh network on `train_set`; `test_set` only feeds the log.
///
/// `on_epoch` runs after every epoch (for checkpoints and progress).
pub fn train(
    train_set: &Dataset,
    test_set: Option<&Dataset>,
    net_config: &NetConfig,
    config: &TrainConfig,
    on_epoch: &mut dyn FnMut(&EpochLog, &EnergyNet),
) -> Result<(EnergyNet, TrainLog)> {
    config.validate()?;
    if train_set.is_empty() {
        return Err(Error::InvalidInput("training set is empty".into()));
    }
    let family = &train_set.header.family;
    let mut net = EnergyNet::new(net_config.clone(), family.param_count, config.seed)?;
    net.family = Some(family.clone());
    net.normalization = normalization(train_set, family.param_count);
    let psi_floor = config.denominator_floor * train_set.median_energy();
    let stress_floor = config.denominator_floor * train_set.median_stress_norm();
    let cols = Columns::new(&net, train_set, psi_floor, stress_floor.max(f64::MIN_POSITIVE));
    let mut adam = Adam {
        m: zero_like(&net),
        v: zero_like(&net),
        t: 0,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed ^ 0x9e37_79b9_7f4a_7c15);
    let mut order: Vec<usize> = (0..cols.len()).collect();
    let mut log = TrainLog::default();
    let decay = config.final_lr_factor.ln() / (config.epochs.max(2) - 1) as f64;
    for epoch in 0..config.epochs {
        let lr = config.learning_rate * (decay * epoch as f64).exp();
        order.shuffle(&mut rng);
        let mut total = 0.0;
        for batch in order.chunks(config.batch_size) {
            let (loss, grads) = loss_and_grad(&net, &cols, batch);
            if !loss.is_finite() {
                return Err(Error::NonFiniteLoss { epoch });
            }
            total += loss * batch.len() as f64;
            adam.step(&mut net, &grads, lr);
        }
        let mut entry = EpochLog {
            epoch,
            loss: total / cols.len() as f64,
            train_energy_error: None,
            train_gradient_error: None,
            test_energy_error: None,
            test_gradient_error: None,
        };
        let last = epoch + 1 == config.epochs;
        if last || (config.log_every > 0 && epoch % config.log_every == 0) {
            let (e, g) = metrics(&net, train_set, psi_floor, stress_floor);
            entry.train_energy_error = Some(e);
            entry.train_gradient_error = Some(g);
            if let Some(t) = test_set.filter(|t| !t.is_empty()) {
                let (e, g) = evaluate(&net, t);
                entry.test_energy_error = Some(e);
                entry.test_gradient_error = Some(g);
            }
            log::info!(
                "epoch {epoch}: loss {:.3e}, train errors {e:.4}/{g:.4}",
                entry.loss
            );
        }
        on_epoch(&entry, &net);
        log.epochs.push(entry);
    }
    Ok((net, log))
}
