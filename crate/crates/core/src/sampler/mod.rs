//! Training-corpus generation: load sweeps over directions and strain
//! magnitudes for a set of structure parameters.

mod dataset;
mod generate;

use rand::{Rng, SeedableRng};
use rand::seq::SliceRandom;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::fem::{LoadCase, SolverConfig};
use crate::geometry::{FamilySpec, TilingParams};

pub use dataset::{
    analytic_dataset, analytic_sample, read_dataset, split_dataset, write_dataset, Dataset, DatasetHeader,
    FORMAT_VERSION,
};
pub use generate::{generate, generate_dataset, solve_from_rest, FailureRecord, Generated, GenerationStats};

/// What to sample and how to simulate it.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SamplingPlan {
    pub n_directions: usize,
    pub uniaxial_range: [f64; 2],
    pub uniaxial_points: usize,
    pub biaxial_range: [f64; 2],
    /// Points per axis of the biaxial grid; 0 disables biaxial loads.
    pub biaxial_grid: usize,
    /// Per-parameter counts of a tensor grid over the bounds. When empty,
    /// `param_samples` Latin-hypercube points are drawn instead.
    pub param_grid: Vec<usize>,
    pub param_samples: usize,
    pub seed: u64,
    pub resolution: usize,
    pub solver: SolverConfig,
}

impl Default for SamplingPlan {
    fn default() -> Self {
        Self {
            n_directions: 8,
            uniaxial_range: [-0.30, 0.50],
            uniaxial_points: 13,
            biaxial_range: [-0.10, 0.20],
            biaxial_grid: 5,
            param_grid: Vec::new(),
            param_samples: 32,
            seed: 0,
            resolution: 1,
            solver: SolverConfig::default(),
        }
    }
}

impl SamplingPlan {
    /// 45 directions with 25 uniaxial and 5×5 biaxial loads each.
    pub fn paper_scale() -> Self {
        Self {
            n_directions: 45,
            uniaxial_points: 25,
            biaxial_grid: 5,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidInput(m.into()));
        if self.n_directions == 0 {
            return bad("n_directions must be at least 1");
        }
        if self.uniaxial_points == 0 && self.biaxial_grid == 0 {
            return bad("plan has no load cases");
        }
        for (name, r) in [("uniaxial_range", self.uniaxial_range), ("biaxial_range", self.biaxial_range)] {
            if !(r[0] <= r[1]) || !(r[0] > -0.5) || !r[1].is_finite() {
                return Err(Error::InvalidInput(format!(
                    "{name} must be ordered and above -0.5"
                )));
            }
        }
        if self.param_grid.iter().any(|&c| c == 0) {
            return bad("param_grid counts must be at least 1");
        }
        if self.param_grid.is_empty() && self.param_samples == 0 {
            return bad("param_samples must be at least 1");
        }
        if self.resolution == 0 {
            return bad("resolution must be at least 1");
        }
        Ok(())
    }

    /// Load cases per parameter sample.
    pub fn loads_per_sample(&self) -> usize {
        self.n_directions * (self.uniaxial_points + self.biaxial_grid * self.biaxial_grid)
    }
}

fn linspace(r: [f64; 2], n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![0.5 * (r[0] + r[1])],
        _ => (0..n)
            .map(|i| {
                let u = i as f64 / (n - 1) as f64;
                (1.0 - u) * r[0] + u * r[1]
            })
            .collect(),
    }
}

/// All load cases of a plan: by direction, uniaxial then biaxial, each in
/// order of increasing magnitude.
pub fn enumerate_loads(plan: &SamplingPlan) -> Vec<LoadCase> {
    let mut out = Vec::with_capacity(plan.loads_per_sample());
    for k in 0..plan.n_directions {
        let alpha = PI * k as f64 / plan.n_directions as f64;
        let mut uni = linspace(plan.uniaxial_range, plan.uniaxial_points);
        uni.sort_by(|a, b| a.abs().total_cmp(&b.abs()).then(b.total_cmp(a)));
        out.extend(uni.into_iter().map(|e| LoadCase::uniaxial(alpha, e)));

        let axis = linspace(plan.biaxial_range, plan.biaxial_grid);
        let mut bi: Vec<(f64, f64)> = axis
            .iter()
            .flat_map(|&a| axis.iter().map(move |&l| (a, l)))
            .collect();
        let key = |p: &(f64, f64)| (p.0.abs().max(p.1.abs()), p.0.abs() + p.1.abs());
        bi.sort_by(|p, q| {
            let (a, b) = (key(p), key(q));
            a.0.total_cmp(&b.0)
                .then(a.1.total_cmp(&b.1))
                .then(q.0.total_cmp(&p.0))
                .then(q.1.total_cmp(&p.1))
        });
        out.extend(bi.into_iter().map(|(a, l)| LoadCase::biaxial(alpha, a, l)));
    }
    out
}

/// Structure-parameter points of a plan.
pub fn parameter_samples(spec: &FamilySpec, plan: &SamplingPlan) -> Result<Vec<TilingParams>> {
    let d = spec.param_count;
    if d == 0 {
        return Ok(vec![TilingParams::empty()]);
    }
    let at = |i: usize, u: f64| {
        (spec.t_min[i] + u * (spec.t_max[i] - spec.t_min[i])).clamp(spec.t_min[i], spec.t_max[i])
    };
    if !plan.param_grid.is_empty() {
        if plan.param_grid.len() != d {
            return Err(Error::ParamCount {
                expected: d,
                got: plan.param_grid.len(),
            });
        }
        let axes: Vec<Vec<f64>> = plan
            .param_grid
            .iter()
            .enumerate()
            .map(|(i, &n)| linspace([0.0, 1.0], n).into_iter().map(|u| at(i, u)).collect())
            .collect();
        let mut out = vec![Vec::new()];
        for axis in &axes {
            out = out
                .into_iter()
                .flat_map(|p| {
                    axis.iter().map(move |&v| {
                        let mut q = p.clone();
                        q.push(v);
                        q
                    })
                })
                .collect();
        }
        return Ok(out.into_iter().map(TilingParams::new).collect());
    }
    // Latin hypercube: one point per stratum along every axis.
    let n = plan.param_samples;
    let mut rng = ChaCha8Rng::seed_from_u64(plan.seed);
    let mut cols: Vec<Vec<f64>> = Vec::with_capacity(d);
    for i in 0..d {
        let mut strata: Vec<usize> = (0..n).collect();
        strata.shuffle(&mut rng);
        cols.push(
            strata
                .into_iter()
                .map(|s| at(i, (s as f64 + rng.gen_range(0.0..1.0)) / n as f64))
                .collect(),
        );
    }
    Ok((0..n)
        .map(|j| TilingParams::new((0..d).map(|i| cols[i][j]).collect()))
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn paper_plan_has_2250_loads() {
        let plan = SamplingPlan::paper_scale();
        assert_eq!(enumerate_loads(&plan).len(), 2250);
        assert_eq!(plan.loads_per_sample(), 2250);
    }

    #[test]
    fn single_direction_uniaxial_only() {
        let plan = SamplingPlan {
            n_directions: 1,
            uniaxial_points: 3,
            biaxial_grid: 0,
            ..SamplingPlan::default()
        };
        let loads = enumerate_loads(&plan);
        assert_eq!(loads.len(), 3);
        assert!(loads.iter().all(|l| l.alpha == 0.0 && !l.is_biaxial()));
    }

    #[test]
    fn magnitudes_grow_outward_within_ranges() {
        let plan = SamplingPlan::default();
        let loads = enumerate_loads(&plan);
        for l in &loads {
            assert!((-0.30..=0.50).contains(&l.axial));
            assert!((0.0..PI).contains(&l.alpha));
        }
        let first: Vec<f64> = loads[..13].iter().map(|l| l.axial.abs()).collect();
        assert!(first.windows(2).all(|w| w[0] <= w[1]));
    }

    #[test]
    fn latin_hypercube_is_stratified_and_seeded() {
        let spec = FamilySpec::honeycomb(2).unwrap();
        let plan = SamplingPlan {
            param_samples: 10,
            seed: 3,
            ..SamplingPlan::default()
        };
        let a = parameter_samples(&spec, &plan).unwrap();
        assert_eq!(a, parameter_samples(&spec, &plan).unwrap());
        for i in 0..2 {
            let mut strata: Vec<usize> = a
                .iter()
                .map(|p| ((p.values[i] - spec.t_min[i]) / (spec.t_max[i] - spec.t_min[i]) * 10.0) as usize)
                .collect();
            strata.sort();
            assert_eq!(strata, (0..10).collect::<Vec<_>>());
        }
    }

    #[test]
    fn grid_covers_bounds() {
        let spec = FamilySpec::honeycomb(2).unwrap();
        let plan = SamplingPlan {
            param_grid: vec![3, 2],
            ..SamplingPlan::default()
        };
        let p = parameter_samples(&spec, &plan).unwrap();
        assert_eq!(p.len(), 6);
        assert_eq!(p[0].values, vec![0.03, -0.1]);
        assert_eq!(p[5].values, vec![0.12, 0.1]);
    }
}
