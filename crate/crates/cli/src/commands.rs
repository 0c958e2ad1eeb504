use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use metanet_core::design::{DesignConfig, InnerConfig, ObjectiveFile};
use metanet_core::fem::{LoadCase, MaterialParams, PeriodicProblem, SolverConfig};
use metanet_core::geometry::{build_mesh, outline_polylines, write_mesh, FamilySpec, TilingParams};
use metanet_core::homogenize::homogenize;
use metanet_core::nmn::{evaluate, train, EnergyNet, NetConfig, TrainConfig};
use metanet_core::sampler::{analytic_dataset, generate, read_dataset, solve_from_rest, split_dataset, write_dataset, Dataset, SamplingPlan};
use metanet_core::{Error, Result};
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::engine::{load_model, polar_profile, run_design};
use crate::service::{self, ServiceConfig};

#[derive(Parser, Debug)]
#[command(name = "metanet", version, about = "Metamaterial homogenization, neural energy models and inverse design")]
#[command(arg_required_else_help = true)]
pub struct Cli {
    /// Raise log verbosity (repeatable).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(clap::Args, Debug, Clone)]
pub struct MaterialArgs {
    #[arg(long, default_value_t = 1.0)]
    pub youngs: f64,
    #[arg(long, default_value_t = 0.45)]
    pub poisson: f64,
}

impl MaterialArgs {
    fn material(&self) -> Result<MaterialParams> {
        MaterialParams::new(self.youngs, self.poisson)
    }
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Build a periodic cell mesh.
    Mesh {
        #[arg(long)]
        family: String,
        /// Comma-separated structure parameters; the box centre if omitted.
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
        params: Vec<f64>,
        #[arg(long, default_value_t = 1)]
        resolution: usize,
        /// Write the free-surface outline as JSON instead of the mesh.
        #[arg(long)]
        outline: bool,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Solve one load case and print the homogenized response.
    Solve {
        #[arg(long)]
        family: String,
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
        params: Vec<f64>,
        #[arg(long, default_value_t = 1)]
        resolution: usize,
        #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
        alpha: f64,
        #[arg(long, allow_hyphen_values = true)]
        axial: f64,
        /// Lateral strain; uniaxial loading when omitted.
        #[arg(long, allow_hyphen_values = true)]
        lateral: Option<f64>,
        #[command(flatten)]
        material: MaterialArgs,
        /// Solver settings as JSON.
        #[arg(long)]
        solver: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Generate a training dataset.
    Sample {
        #[arg(long)]
        family: String,
        /// Sampling plan as JSON.
        #[arg(long)]
        plan: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 1)]
        workers: usize,
        #[command(flatten)]
        material: MaterialArgs,
        /// Closed-form records of the homogeneous material (solid family only).
        #[arg(long)]
        analytic: bool,
        /// Where to write the failed solves, one JSON object per line.
        #[arg(long)]
        failures: Option<PathBuf>,
    },
    /// Train an energy network on a dataset.
    Train {
        #[arg(long)]
        data: PathBuf,
        /// Training settings as JSON.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        /// Per-epoch log as JSON.
        #[arg(long)]
        log: Option<PathBuf>,
        /// Write `<out>.ckpt` every this many epochs.
        #[arg(long)]
        checkpoint_every: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        epochs: Option<usize>,
    },
    /// Relative energy and gradient errors of a network on a dataset.
    Eval {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        data: PathBuf,
    },
    /// Inverse design against a target profile.
    Design {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        objective: PathBuf,
        /// Design settings as JSON.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        starts: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Polar profile of directional stiffness and Poisson ratio.
    Profile {
        #[arg(long)]
        model: PathBuf,
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
        params: Vec<f64>,
        #[arg(long, default_value_t = 36)]
        directions: usize,
        #[arg(long, default_value_t = 0.05, allow_hyphen_values = true)]
        magnitude: f64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run the HTTP service.
    Serve {
        #[arg(long)]
        model: Option<PathBuf>,
        #[arg(long, default_value = "127.0.0.1:8080")]
        addr: String,
        /// Static files served under `/`.
        #[arg(long)]
        ui_dir: Option<PathBuf>,
        /// Finished design jobs are also written here.
        #[arg(long)]
        jobs_dir: Option<PathBuf>,
        #[arg(long, default_value_t = 1)]
        design_workers: usize,
    },
}

/// Contents of the `train --config` file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainingFile {
    pub net: NetConfig,
    pub train: TrainConfig,
    /// Held-out share of the dataset; 0 trains on everything.
    pub test_fraction: f64,
    pub split_seed: u64,
}

impl Default for TrainingFile {
    fn default() -> Self {
        Self {
            net: NetConfig::default(),
            train: TrainConfig::default(),
            test_fraction: 0.1,
            split_seed: 0,
        }
    }
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let f = File::open(path)?;
    serde_json::from_reader(BufReader::new(f)).map_err(|e| Error::Format(format!("{}: {e}", path.display())))
}

fn read_data(path: &Path) -> Result<Dataset> {
    read_dataset(BufReader::new(File::open(path)?))
}

fn emit(out: Option<&Path>, stdout: &mut dyn Write, value: &serde_json::Value) -> Result<()> {
    match out {
        Some(p) => {
            let mut w = BufWriter::new(File::create(p)?);
            serde_json::to_writer_pretty(&mut w, value)?;
            writeln!(w)?;
            w.flush()?;
        }
        None => {
            serde_json::to_writer_pretty(&mut *stdout, value)?;
            writeln!(stdout)?;
        }
    }
    Ok(())
}

fn family_params(family: &str, params: Vec<f64>) -> Result<(FamilySpec, TilingParams)> {
    let spec: FamilySpec = family.parse()?;
    let params = if params.is_empty() { spec.midpoint() } else { TilingParams::new(params) };
    spec.check_bounds(&params)?;
    Ok((spec, params))
}

fn write_net(net: &EnergyNet, path: &Path) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    net.write(&mut w)?;
    w.flush()?;
    Ok(())
}

pub fn run(cli: Cli, stdout: &mut dyn Write) -> Result<()> {
    match cli.command {
        Command::Mesh {
            family,
            params,
            resolution,
            outline,
            out,
        } => {
            let (spec, params) = family_params(&family, params)?;
            let mesh = build_mesh(&spec, &params, resolution)?;
            if outline {
                let lattice: Vec<[f64; 2]> = mesh.lattice.iter().map(|v| [v.x, v.y]).collect();
                let v = json!({
                    "family": spec,
                    "params": params,
                    "lattice": lattice,
                    "polylines": outline_polylines(&mesh),
                });
                return emit(out.as_deref(), stdout, &v);
            }
            match out {
                Some(p) => {
                    let mut w = BufWriter::new(File::create(p)?);
                    write_mesh(&mesh, &mut w)?;
                    w.flush()?;
                }
                None => write_mesh(&mesh, &mut *stdout)?,
            }
            Ok(())
        }
        Command::Solve {
            family,
            params,
            resolution,
            alpha,
            axial,
            lateral,
            material,
            solver,
            out,
        } => {
            let (spec, params) = family_params(&family, params)?;
            let solver: SolverConfig = solver.as_deref().map(read_json).transpose()?.unwrap_or_default();
            let load = match lateral {
                Some(l) => LoadCase::biaxial(alpha, axial, l),
                None => LoadCase::uniaxial(alpha, axial),
            };
            let problem = PeriodicProblem::new(build_mesh(&spec, &params, resolution)?, material.material()?)?;
            let report = solve_from_rest(&problem, &load, &solver)?;
            let h = homogenize(&problem, &params, &load, &report)?;
            let v = json!({
                "sample": h.sample,
                "deformation": [[h.deformation[(0, 0)], h.deformation[(0, 1)]], [h.deformation[(1, 0)], h.deformation[(1, 1)]]],
                "cauchy_asymmetry": h.cauchy.asymmetry,
                "enforcement_ratio": h.enforcement_ratio,
                "constraint_violation": h.constraint_violation,
                "newton_iterations": report.newton_iterations,
                "min_contact_distance": if report.min_distance.is_finite() { Some(report.min_distance) } else { None },
            });
            emit(out.as_deref(), stdout, &v)
        }
        Command::Sample {
            family,
            plan,
            out,
            workers,
            material,
            analytic,
            failures,
        } => {
            let spec: FamilySpec = family.parse()?;
            let plan: SamplingPlan = plan.as_deref().map(read_json).transpose()?.unwrap_or_default();
            let material = material.material()?;
            let data = if analytic {
                if spec.param_count != 0 {
                    return Err(Error::InvalidInput("analytic sampling needs the solid family".into()));
                }
                analytic_dataset(&material, &plan)?
            } else {
                let g = generate(&spec, &plan, &material, workers)?;
                log::info!(
                    "{} solves, {} failed, {} Newton iterations",
                    g.stats.solves,
                    g.stats.failures,
                    g.stats.newton_iterations
                );
                if let Some(p) = &failures {
                    let mut w = BufWriter::new(File::create(p)?);
                    for f in &g.failures {
                        serde_json::to_writer(&mut w, f)?;
                        writeln!(w)?;
                    }
                    w.flush()?;
                }
                g.check_failures()?;
                g.dataset
            };
            let mut w = BufWriter::new(File::create(&out)?);
            write_dataset(&mut w, &data)?;
            w.flush()?;
            writeln!(stdout, "{} records written to {}", data.len(), out.display())?;
            Ok(())
        }
        Command::Train {
            data,
            config,
            out,
            log: log_path,
            checkpoint_every,
            seed,
            epochs,
        } => {
            let mut cfg: TrainingFile = config.as_deref().map(read_json).transpose()?.unwrap_or_default();
            if let Some(s) = seed {
                cfg.train.seed = s;
            }
            if let Some(e) = epochs {
                cfg.train.epochs = e;
            }
            let data = read_data(&data)?;
            let (train_set, test_set) = if cfg.test_fraction > 0.0 {
                let (a, b) = split_dataset(&data, cfg.test_fraction, cfg.split_seed)?;
                (a, Some(b))
            } else {
                (data, None)
            };
            let ckpt = PathBuf::from(format!("{}.ckpt", out.display()));
            let mut ckpt_err = None;
            let (net, log) = train(&train_set, test_set.as_ref(), &cfg.net, &cfg.train, &mut |e, net| {
                if cfg.train.log_every > 0 && e.epoch % cfg.train.log_every == 0 {
                    log::info!("epoch {} loss {:.4e}", e.epoch, e.loss);
                }
                if let Some(k) = checkpoint_every {
                    if k > 0 && (e.epoch + 1) % k == 0 && ckpt_err.is_none() {
                        ckpt_err = write_net(net, &ckpt).err();
                    }
                }
            })?;
            if let Some(e) = ckpt_err {
                return Err(e);
            }
            write_net(&net, &out)?;
            if let Some(p) = log_path {
                let mut w = BufWriter::new(File::create(p)?);
                serde_json::to_writer_pretty(&mut w, &log)?;
                w.flush()?;
            }
            let last = log.last().cloned();
            emit(None, stdout, &json!({ "model": out, "final": last }))
        }
        Command::Eval { model, data } => {
            let loaded = load_model(&model)?;
            let net = loaded
                .net
                .ok_or_else(|| Error::InvalidInput("eval needs a trained network".into()))?;
            let data = read_data(&data)?;
            let (energy, gradient) = evaluate(&net, &data);
            emit(None, stdout, &json!({ "records": data.len(), "energy_error": energy, "gradient_error": gradient }))
        }
        Command::Design {
            model,
            objective,
            config,
            starts,
            seed,
            out,
        } => {
            let loaded = load_model(&model)?;
            let file: ObjectiveFile = read_json(&objective)?;
            let mut cfg: DesignConfig = config.as_deref().map(read_json).transpose()?.unwrap_or_default();
            if let Some(s) = starts {
                cfg.starts = s;
            }
            if let Some(s) = seed {
                cfg.seed = s;
            }
            let result = run_design(loaded.dyn_model(), &file, &cfg, &mut |s, it, best| {
                log::info!("start {s} iteration {it} best objective {best:.6e}");
            })?;
            emit(out.as_deref(), stdout, &serde_json::to_value(&result)?)
        }
        Command::Profile {
            model,
            params,
            directions,
            magnitude,
            out,
        } => {
            let loaded = load_model(&model)?;
            let profile = polar_profile(loaded.dyn_model(), &params, directions, magnitude, &InnerConfig::default())?;
            emit(out.as_deref(), stdout, &serde_json::to_value(&profile)?)
        }
        Command::Serve {
            model,
            addr,
            ui_dir,
            jobs_dir,
            design_workers,
        } => {
            let loaded = model.as_deref().map(load_model).transpose()?;
            if loaded.is_none() {
                log::warn!("no model loaded; evaluate and design requests will be refused");
            }
            let config = ServiceConfig {
                design_workers,
                jobs_dir,
                ui_dir,
            };
            service::serve(&addr, loaded, config)
        }
    }
}
