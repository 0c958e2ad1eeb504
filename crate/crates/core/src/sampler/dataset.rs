use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::io::{BufRead, Write};

use super::{enumerate_loads, SamplingPlan};
use crate::error::{Error, Result};
use crate::fem::{LoadCase, MaterialParams};
use crate::geometry::{FamilySpec, TilingParams};
use crate::homogenize::{HomogenizedSample, LoadMeta};
use crate::tensor::{direction, normal, StrainState, StressState};

pub const FORMAT_VERSION: u32 = 1;

/// First line of a dataset file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetHeader {
    pub format_version: u32,
    /// `simulation` or `analytic`.
    pub source: String,
    pub family: FamilySpec,
    pub material: MaterialParams,
    pub plan: SamplingPlan,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub header: DatasetHeader,
    pub records: Vec<HomogenizedSample>,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    fn check_record(&self, r: &HomogenizedSample, line: usize) -> Result<()> {
        if !r.is_finite() {
            return Err(Error::Format(format!("line {line}: non-finite value")));
        }
        self.header
            .family
            .check_bounds(&r.params)
            .map_err(|e| Error::Format(format!("line {line}: {e}")))
    }

    /// Median energy density; 0 for an empty set.
    pub fn median_energy(&self) -> f64 {
        median(self.records.iter().map(|r| r.energy_density).collect())
    }

    pub fn median_stress_norm(&self) -> f64 {
        median(self.records.iter().map(|r| r.stress.norm()).collect())
    }
}

pub(crate) fn median(mut v: Vec<f64>) -> f64 {
    if v.is_empty() {
        return 0.0;
    }
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Writes the header line followed by one record per line.
pub fn write_dataset<W: Write>(mut w: W, data: &Dataset) -> Result<()> {
    serde_json::to_writer(&mut w, &data.header)?;
    w.write_all(b"\n")?;
    for r in &data.records {
        serde_json::to_writer(&mut w, r)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_dataset<R: BufRead>(r: R) -> Result<Dataset> {
    let mut lines = r.lines().enumerate();
    let header: DatasetHeader = loop {
        match lines.next() {
            Some((_, line)) => {
                let line = line?;
                if !line.trim().is_empty() {
                    break serde_json::from_str(&line)
                        .map_err(|e| Error::Format(format!("bad header: {e}")))?;
                }
            }
            None => return Err(Error::Format("empty dataset file".into())),
        }
    };
    if header.format_version != FORMAT_VERSION {
        return Err(Error::Format(format!(
            "unsupported format version {}",
            header.format_version
        )));
    }
    let mut data = Dataset {
        header,
        records: Vec::new(),
    };
    for (i, line) in lines {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: HomogenizedSample =
            serde_json::from_str(&line).map_err(|e| Error::Format(format!("line {}: {e}", i + 1)))?;
        data.check_record(&rec, i + 1)?;
        data.records.push(rec);
    }
    Ok(data)
}

fn param_key(p: &TilingParams) -> Vec<u64> {
    p.values.iter().map(|v| v.to_bits()).collect()
}

/// Seeded split into `(train, test)`.
///
/// Records are grouped by parameter point and whole groups are assigned to
/// one side. A dataset with a single parameter point is split per record.
pub fn split_dataset(data: &Dataset, test_fraction: f64, seed: u64) -> Result<(Dataset, Dataset)> {
    if !(test_fraction > 0.0 && test_fraction < 1.0) {
        return Err(Error::InvalidInput("test_fraction must lie in (0, 1)".into()));
    }
    let mut groups: BTreeMap<Vec<u64>, Vec<usize>> = BTreeMap::new();
    for (i, r) in data.records.iter().enumerate() {
        groups.entry(param_key(&r.params)).or_default().push(i);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut units: Vec<Vec<usize>> = if groups.len() >= 2 {
        groups.into_values().collect()
    } else {
        (0..data.len()).map(|i| vec![i]).collect()
    };
    units.shuffle(&mut rng);
    let n_test = if units.len() >= 2 {
        ((test_fraction * units.len() as f64).round() as usize).clamp(1, units.len() - 1)
    } else {
        0
    };
    let mut test_idx: Vec<usize> = units[..n_test].iter().flatten().copied().collect();
    let mut train_idx: Vec<usize> = units[n_test..].iter().flatten().copied().collect();
    test_idx.sort_unstable();
    train_idx.sort_unstable();
    let pick = |idx: &[usize]| Dataset {
        header: data.header.clone(),
        records: idx.iter().map(|&i| data.records[i].clone()).collect(),
    };
    Ok((pick(&train_idx), pick(&test_idx)))
}

/// Lateral stretch that leaves the `n_α` direction traction free under a
/// stretch `s` along `d_α`; the material is isotropic so the principal frame
/// is `(d_α, n_α)`.
fn free_lateral_stretch(m: &MaterialParams, s: f64) -> f64 {
    // S_nn in the principal frame for principal stretches (s, l).
    let s_nn = |l: f64| {
        let lj = (s * l).ln();
        m.mu() * (1.0 - 1.0 / (l * l)) + m.lambda() * lj / (l * l)
    };
    let (mut lo, mut hi) = (1e-3, 10.0);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if s_nn(mid) > 0.0 {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Exact homogeneous response of the base material for every load of a
/// plan, without structure parameters.
pub fn analytic_dataset(material: &MaterialParams, plan: &SamplingPlan) -> Result<Dataset> {
    material.validate()?;
    plan.validate()?;
    let mut records = Vec::new();
    for load in enumerate_loads(plan) {
        records.push(analytic_sample(material, &load)?);
    }
    Ok(Dataset {
        header: DatasetHeader {
            format_version: FORMAT_VERSION,
            source: "analytic".into(),
            family: FamilySpec::solid_cell(),
            material: *material,
            plan: plan.clone(),
        },
        records,
    })
}

/// Homogeneous base-material response to one load case.
pub fn analytic_sample(material: &MaterialParams, load: &LoadCase) -> Result<HomogenizedSample> {
    load.validate()?;
    let (s, lat) = load.stretches();
    let l = lat.unwrap_or_else(|| free_lateral_stretch(material, s));
    let (d, n) = (direction(load.alpha), normal(load.alpha));
    let f = s * d * d.transpose() + l * n * n.transpose();
    let strain = StrainState::from_deformation(&f);
    let e = strain.to_matrix();
    let psi = material
        .energy_of_strain(&e)
        .ok_or(Error::NonPositiveJacobian(f.determinant()))?;
    Ok(HomogenizedSample {
        params: TilingParams::empty(),
        strain,
        stress: StressState::from_matrix(&material.pk2_of_strain(&e)),
        energy_density: psi,
        load: LoadMeta::from(load),
    })
}
