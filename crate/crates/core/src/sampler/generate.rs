use nalgebra::Matrix2;
use serde::{Deserialize, Serialize};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use super::dataset::{Dataset, DatasetHeader, FORMAT_VERSION};
use super::{enumerate_loads, parameter_samples, SamplingPlan};
use crate::error::{Error, Result};
use crate::fem::{LoadCase, MaterialParams, PeriodicProblem, ReducedState, SolveReport, SolverConfig};
use crate::geometry::{build_mesh, FamilySpec, TilingParams};
use crate::homogenize::{homogenize, HomogenizedSample, LoadMeta};
use crate::tensor::{direction, normal};

/// A solve that produced no record.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FailureRecord {
    pub param_index: usize,
    pub t: Vec<f64>,
    pub load_index: usize,
    #[serde(flatten)]
    pub load: LoadMeta,
    pub error: String,
    pub detail: String,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct GenerationStats {
    pub solves: usize,
    pub failures: usize,
    pub newton_iterations: usize,
    /// Mean Newton iterations of warm-started solves.
    pub mean_warm_iterations: f64,
    pub mean_constraint_violation: f64,
    pub max_enforcement_ratio: f64,
}

pub struct Generated {
    pub dataset: Dataset,
    pub failures: Vec<FailureRecord>,
    pub stats: GenerationStats,
}

impl Generated {
    /// `TooManyFailures` when more than 1% of the solves failed.
    pub fn check_failures(&self) -> Result<()> {
        let total = self.stats.solves;
        if self.failures.len() * 100 > total {
            return Err(Error::TooManyFailures {
                failed: self.failures.len(),
                total,
            });
        }
        Ok(())
    }
}

struct Solved {
    load: LoadCase,
    state: ReducedState,
}

struct ParamResult {
    records: Vec<HomogenizedSample>,
    failures: Vec<FailureRecord>,
    iterations: usize,
    warm_iterations: usize,
    warm_solves: usize,
    violation_sum: f64,
    max_ratio: f64,
}

/// Affine map taking the target stretches of `from` to those of `to`
/// (same direction); fluctuations of a previous solution are kept.
fn rescale(from: &LoadCase, to: &LoadCase) -> Matrix2<f64> {
    let (d, n) = (direction(to.alpha), normal(to.alpha));
    let (sa0, sl0) = from.stretches();
    let (sa1, sl1) = to.stretches();
    let lat = match (sl0, sl1) {
        (Some(a), Some(b)) => b / a,
        _ => 1.0,
    };
    (sa1 / sa0) * d * d.transpose() + lat * n * n.transpose()
}

fn blend(a: &LoadCase, b: &LoadCase, s: f64) -> LoadCase {
    LoadCase {
        axial: a.axial + s * (b.axial - a.axial),
        lateral: match (a.lateral, b.lateral) {
            (Some(x), Some(y)) => Some(x + s * (y - x)),
            _ => b.lateral,
        },
        ..*b
    }
}

/// Solves `to` starting from the solution of `from`, splitting the load
/// increment into more and more substeps on failure.
fn solve_from(
    p: &PeriodicProblem,
    from: &Solved,
    to: &LoadCase,
    config: &SolverConfig,
) -> Result<(SolveReport, usize)> {
    let mut last_err = None;
    for steps in [1usize, 2, 4, 8] {
        let mut cur_load = from.load;
        let mut cur = from.state.clone();
        let mut iters = 0;
        let mut ok = None;
        for k in 1..=steps {
            let next = blend(&from.load, to, k as f64 / steps as f64);
            let init = cur.mapped(&rescale(&cur_load, &next));
            match p.solve(&next, &init, config) {
                Ok(r) => {
                    iters += r.newton_iterations;
                    cur = r.state.clone();
                    cur_load = next;
                    if k == steps {
                        ok = Some(r);
                    }
                }
                Err(e) => {
                    last_err = Some(e);
                    break;
                }
            }
        }
        if let Some(r) = ok {
            return Ok((r, iters));
        }
    }
    Err(last_err.expect("at least one attempt"))
}

/// Solves one load case starting from the rest configuration, with the
/// same substepping fallback the sampler uses.
pub fn solve_from_rest(p: &PeriodicProblem, load: &LoadCase, config: &SolverConfig) -> Result<SolveReport> {
    load.validate()?;
    let rest = Solved {
        load: LoadCase {
            axial: 0.0,
            lateral: load.lateral.map(|_| 0.0),
            ..*load
        },
        state: p.rest_state(),
    };
    solve_from(p, &rest, load, config).map(|(r, _)| r)
}

fn strain_distance(a: &LoadCase, b: &LoadCase) -> f64 {
    let lat = match (a.lateral, b.lateral) {
        (Some(x), Some(y)) => (x - y).abs(),
        _ => 0.0,
    };
    (a.axial - b.axial).abs() + lat
}

fn run_param(
    spec: &FamilySpec,
    plan: &SamplingPlan,
    material: &MaterialParams,
    loads: &[LoadCase],
    index: usize,
    params: &TilingParams,
) -> ParamResult {
    let mut out = ParamResult {
        records: Vec::new(),
        failures: Vec::new(),
        iterations: 0,
        warm_iterations: 0,
        warm_solves: 0,
        violation_sum: 0.0,
        max_ratio: 0.0,
    };
    let fail = |load_index: usize, load: &LoadCase, e: &Error| FailureRecord {
        param_index: index,
        t: params.values.clone(),
        load_index,
        load: LoadMeta::from(load),
        error: e.name().to_string(),
        detail: e.to_string(),
    };
    let problem = build_mesh(spec, params, plan.resolution)
        .and_then(|m| PeriodicProblem::new(m, *material));
    let problem = match problem {
        Ok(p) => p,
        Err(e) => {
            out.failures = loads.iter().enumerate().map(|(i, l)| fail(i, l, &e)).collect();
            return out;
        }
    };
    let rest = Solved {
        load: LoadCase::biaxial(0.0, 0.0, 0.0),
        state: problem.rest_state(),
    };
    // Solutions found so far in the current direction and load kind.
    let mut solved: Vec<Solved> = Vec::new();
    let mut prev_key = None;
    for (li, load) in loads.iter().enumerate() {
        let key = (load.alpha.to_bits(), load.is_biaxial());
        if prev_key != Some(key) {
            solved.clear();
            prev_key = Some(key);
        }
        let source = solved
            .iter()
            .min_by(|a, b| strain_distance(&a.load, load).total_cmp(&strain_distance(&b.load, load)))
            .unwrap_or(&rest);
        let start = Solved {
            load: LoadCase {
                alpha: load.alpha,
                lateral: load.lateral.map(|_| source.load.lateral.unwrap_or(0.0)),
                ..source.load
            },
            state: source.state.clone(),
        };
        let warm = !solved.is_empty();
        let result = solve_from(&problem, &start, load, &plan.solver)
            .and_then(|(r, it)| homogenize(&problem, params, load, &r).map(|h| (r, h, it)));
        match result {
            Ok((r, h, it)) => {
                out.iterations += it;
                if warm {
                    out.warm_iterations += it;
                    out.warm_solves += 1;
                }
                out.violation_sum += r.constraint_violation;
                out.max_ratio = out.max_ratio.max(h.enforcement_ratio);
                out.records.push(h.sample);
                solved.push(Solved {
                    load: *load,
                    state: r.state,
                });
            }
            Err(e) => {
                log::warn!("param {index} load {li}: {e}");
                out.failures.push(fail(li, load, &e));
            }
        }
    }
    out
}

/// Runs every solve of the plan on `workers` threads.
///
/// Output order is by parameter index then load index regardless of the
/// worker count, so a fixed plan always yields the same records.
pub fn generate(
    spec: &FamilySpec,
    plan: &SamplingPlan,
    material: &MaterialParams,
    workers: usize,
) -> Result<Generated> {
    spec.validate()?;
    plan.validate()?;
    material.validate()?;
    let params = parameter_samples(spec, plan)?;
    let loads = enumerate_loads(plan);
    let slots: Mutex<Vec<Option<ParamResult>>> = Mutex::new((0..params.len()).map(|_| None).collect());
    let next = AtomicUsize::new(0);
    let workers = workers.clamp(1, params.len().max(1));
    std::thread::scope(|s| {
        for _ in 0..workers {
            s.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                if i >= params.len() {
                    break;
                }
                let r = run_param(spec, plan, material, &loads, i, &params[i]);
                slots.lock().unwrap()[i] = Some(r);
            });
        }
    });
    let mut records = Vec::new();
    let mut failures = Vec::new();
    let mut stats = GenerationStats {
        solves: params.len() * loads.len(),
        ..Default::default()
    };
    let (mut warm_it, mut warm_n, mut viol) = (0, 0, 0.0);
    for r in slots.into_inner().unwrap().into_iter().flatten() {
        records.extend(r.records);
        failures.extend(r.failures);
        stats.newton_iterations += r.iterations;
        warm_it += r.warm_iterations;
        warm_n += r.warm_solves;
        viol += r.violation_sum;
        stats.max_enforcement_ratio = stats.max_enforcement_ratio.max(r.max_ratio);
    }
    stats.failures = failures.len();
    stats.mean_warm_iterations = warm_it as f64 / warm_n.max(1) as f64;
    stats.mean_constraint_violation = viol / records.len().max(1) as f64;
    Ok(Generated {
        dataset: Dataset {
            header: DatasetHeader {
                format_version: FORMAT_VERSION,
                source: "simulation".into(),
                family: spec.clone(),
                material: *material,
                plan: plan.clone(),
            },
            records,
        },
        failures,
        stats,
    })
}

/// [`generate`] followed by the failure-rate check.
pub fn generate_dataset(
    spec: &FamilySpec,
    plan: &SamplingPlan,
    material: &MaterialParams,
    workers: usize,
) -> Result<Dataset> {
    let g = generate(spec, plan, material, workers)?;
    g.check_failures()?;
    Ok(g.dataset)
}
