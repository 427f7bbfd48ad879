//! The commands behind the CLI. Each reads its inputs from disk, runs one
//! module operation and writes its artifact.

use std::fs;
use std::path::{Path, PathBuf};

use log::{info, warn};
use ndarray::{Array2, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::config::{PathInit, RunConfig};
use crate::datasets::{self, DatasetMetadata, RepresentativeSet, Split, TrajectoryDataset};
use crate::decomposition::{self, Checkpoint, Decomposition, DecompositionModel, LoadedModel};
use crate::evaluation::{
    self, GridSpec, LandscapeGrid, MetricsReport, QuasipotentialMetrics, RolloutReference, RolloutSummary,
};
use crate::systems::{ExactDecomposition, System, SystemKind};
use crate::training::{self, TrainOutcome, TrainingData};
use crate::{Error, Result};

/// Output encoding for commands that support more than one.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Csv,
    Json,
}

impl Format {
    pub fn extension(self) -> &'static str {
        match self {
            Format::Csv => "csv",
            Format::Json => "json",
        }
    }
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    fs::write(path, serde_json::to_string_pretty(value)? + "\n")?;
    Ok(())
}

fn with_suffix(path: &Path, suffix: &str) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(suffix);
    PathBuf::from(s)
}

#[derive(Debug, Clone, PartialEq)]
pub struct GenerateSummary {
    pub n_pairs: usize,
    pub n_trajectories: usize,
    pub metadata: DatasetMetadata,
}

/// Simulates the configured system and writes the dataset and its sidecar.
pub fn cmd_generate(cfg: &RunConfig, out: &Path) -> Result<GenerateSummary> {
    cfg.validate()?;
    let system = cfg.system()?;
    let gen = cfg.data.generation();
    let mut ds = datasets::generate(&system, &gen)?;
    ds.assign_split(cfg.data.split_seed);
    datasets::save_dataset(out, &ds)?;
    let mut meta = DatasetMetadata::describe(&system, &cfg.system.params, &gen, cfg.data.split_seed);
    meta.config_hash = Some(cfg.hash());
    datasets::write_metadata(out, &meta)?;
    info!("wrote {} pairs from {} trajectories to {}", ds.n_pairs(), ds.n_trajectories(), out.display());
    Ok(GenerateSummary {
        n_pairs: ds.n_pairs(),
        n_trajectories: ds.n_trajectories(),
        metadata: meta,
    })
}

/// Representative subsample of the stored states of one split.
pub fn cmd_representatives(input: &Path, split: Split, r: f64, seed: u64, out: &Path) -> Result<RepresentativeSet> {
    let ds = datasets::load_dataset(input)?;
    let states = ds.states(split);
    let set = datasets::representative_sample(states.view(), r, seed)?;
    datasets::save_representatives(out, &set)?;
    info!("kept {} of {} {} states at r = {r}", set.len(), states.nrows(), split.name());
    Ok(set)
}

/// Seed of the validation representatives, derived from the sampling seed.
fn val_reps_seed(cfg: &RunConfig) -> u64 {
    cfg.sampling.seed.wrapping_add(1)
}

/// Assembles the training inputs: train/val pairs, the stored training
/// representatives, validation representatives drawn with the configured
/// radius and the validation rollout reference.
pub fn training_data(ds: &TrajectoryDataset, reps: &RepresentativeSet, cfg: &RunConfig, stride: usize) -> Result<TrainingData> {
    if reps.dim() != ds.dim() {
        return Err(Error::DimensionMismatch {
            what: "representative set",
            expected: ds.dim(),
            actual: reps.dim(),
        });
    }
    let (train_x, train_y) = ds.pairs(Split::Train);
    let (val_x, val_y) = ds.pairs(Split::Val);
    let val_states = ds.states(Split::Val);
    let val_reps = datasets::representative_sample(val_states.view(), cfg.sampling.radius, val_reps_seed(cfg))?;
    let val_rollout = if cfg.train.rollout_trajectories == 0 {
        None
    } else {
        Some(RolloutReference::from_dataset(
            ds,
            Split::Val,
            stride,
            Some(cfg.train.rollout_trajectories),
        )?
        .with_substeps(cfg.eval.rollout_substeps))
    };
    Ok(TrainingData {
        dt: ds.dt(),
        train_x,
        train_y,
        val_x,
        val_y,
        train_reps: reps.points.clone(),
        val_reps: val_reps.points,
        val_rollout,
    })
}

/// `C = 2 min V` over the configured evaluation grid, or over `fallback`
/// when no grid is configured.
pub fn landscape_offset<D: Decomposition + ?Sized>(
    model: &D,
    cfg: &RunConfig,
    system: &System,
    fallback: ArrayView2<'_, f64>,
) -> Result<f64> {
    let v = match &cfg.eval.grid {
        Some(g) => evaluation::sweep_grid(&g.resolve(system), |pts| model.potential_batch(pts))?,
        None => model.potential_batch(fallback)?.to_vec(),
    };
    let min = v.iter().copied().fold(f64::INFINITY, f64::min);
    if !min.is_finite() {
        return Err(Error::invalid("landscape minimum is not finite"));
    }
    Ok(2.0 * min)
}

fn config_echo(cfg: &RunConfig) -> Result<serde_json::Value> {
    let mut echo = serde_json::to_value(cfg)?;
    echo["config_hash"] = serde_json::Value::String(cfg.hash());
    Ok(echo)
}

/// Trains a model and writes the checkpoint (best validation snapshot) plus
/// `<out>.history.csv`. On divergence the last finite parameters go to
/// `<out>.last_good.json` and the error is returned.
pub fn cmd_train(data: &Path, reps: &Path, cfg: &RunConfig, out: &Path) -> Result<TrainOutcome> {
    cfg.validate()?;
    let system = cfg.system()?;
    let ds = datasets::load_dataset(data)?;
    let meta = datasets::read_metadata(data)?;
    if ds.dim() != system.kind().dim() {
        return Err(Error::DimensionMismatch {
            what: "dataset",
            expected: system.kind().dim(),
            actual: ds.dim(),
        });
    }
    let reps = datasets::load_representatives(reps)?;
    let td = training_data(&ds, &reps, cfg, meta.stride)?;
    let mut model = DecompositionModel::init(ds.dim(), cfg.model.hidden_width, cfg.model.rot_activation, cfg.model.seed)?;
    model.fit_center(td.train_x.view())?;
    info!(
        "training {} parameters on {} pairs, {} representatives",
        model.param_count(),
        td.train_x.nrows(),
        td.train_reps.nrows()
    );
    let outcome = match training::train(model, &td, &cfg.loss, &cfg.train) {
        Ok(o) => o,
        Err(Error::Diverged { step, last_good }) => {
            let path = with_suffix(out, ".last_good.json");
            decomposition::save_checkpoint(&path, &Checkpoint::from_model(&last_good, None, config_echo(cfg)?))?;
            warn!("diverged at step {step}; last finite parameters in {}", path.display());
            return Err(Error::Diverged { step, last_good });
        }
        Err(e) => return Err(e),
    };
    let offset = landscape_offset(&outcome.model, cfg, &system, td.train_x.view())?;
    decomposition::save_checkpoint(out, &Checkpoint::from_model(&outcome.model, Some(offset), config_echo(cfg)?))?;
    fs::write(with_suffix(out, ".history.csv"), training::history_csv(&outcome.history))?;
    info!(
        "best validation loss {:e} at step {} ({:.1} s)",
        outcome.best_val_loss, outcome.best_step, outcome.seconds
    );
    Ok(outcome)
}

/// Rollout statistics on the configured split, landscape errors on the grid
/// when the system has an exact quasipotential, and orthogonality over test
/// representatives.
pub fn evaluate(model: &LoadedModel, ds: &TrajectoryDataset, stride: usize, cfg: &RunConfig) -> Result<MetricsReport> {
    let system = cfg.system()?;
    if model.dim() != ds.dim() {
        return Err(Error::DimensionMismatch {
            what: "model",
            expected: ds.dim(),
            actual: model.dim(),
        });
    }
    let mut notes = Vec::new();
    let reference = RolloutReference::from_dataset(ds, cfg.eval.rollout_split, stride, cfg.eval.max_rollout_trajectories)?
        .with_substeps(cfg.eval.rollout_substeps);
    let rollout = if reference.n_trajectories() == 0 {
        notes.push(format!("no {} trajectories to roll out", cfg.eval.rollout_split.name()));
        None
    } else {
        let stats = evaluation::rollout_errors(model, &reference)?;
        if !stats.diverged.is_empty() {
            notes.push(format!("{} rollouts diverged", stats.diverged.len()));
        }
        Some(RolloutSummary::from(&stats))
    };
    let quasipotential = match (system.exact()?, &cfg.eval.grid) {
        (Some(exact), Some(grid)) => {
            let spec: GridSpec = grid.resolve(&system);
            spec.validate()?;
            let cmp = evaluation::grid_quasipotential_errors(model, |x: &[f64]| exact.quasipotential(x), &spec)?;
            Some(QuasipotentialMetrics {
                rrmse: cmp.rrmse,
                rmae: cmp.rmae,
                offset_c: cmp.offset_c,
                grid: spec,
            })
        }
        (None, Some(_)) => {
            notes.push(format!("{} has no exact quasipotential; grid errors skipped", system.name()));
            None
        }
        _ => None,
    };
    let test_states = ds.states(Split::Test);
    let orthogonality = if test_states.nrows() == 0 {
        None
    } else {
        let reps = datasets::representative_sample(test_states.view(), cfg.sampling.radius, cfg.sampling.seed)?;
        Some(evaluation::orthogonality_stats(model, reps.points.view())?)
    };
    Ok(MetricsReport {
        system: system.name().to_string(),
        rollout,
        quasipotential,
        orthogonality,
        notes,
    })
}

pub fn cmd_eval(model: &Path, data: &Path, cfg: &RunConfig, out: &Path) -> Result<MetricsReport> {
    cfg.validate()?;
    let (model, _) = decomposition::load_model(model)?;
    let ds = datasets::load_dataset(data)?;
    let meta = datasets::read_metadata(data)?;
    let report = evaluate(&model, &ds, meta.stride, cfg)?;
    write_json(out, &report)?;
    Ok(report)
}

/// Learned landscape over every configured slice, one file per slice in
/// the `out` directory.
pub fn cmd_landscape(model: &Path, cfg: &RunConfig, out: &Path, format: Format) -> Result<Vec<(String, LandscapeGrid)>> {
    cfg.validate()?;
    let system = cfg.system()?;
    let (model, _) = decomposition::load_model(model)?;
    if cfg.eval.slices.is_empty() {
        return Err(Error::config("eval.slices: no slices configured"));
    }
    fs::create_dir_all(out)?;
    let mut grids = Vec::new();
    for slice in &cfg.eval.slices {
        let spec = slice.resolve(&system)?;
        let grid = evaluation::export_landscape(&model, &spec)?;
        let path = out.join(format!("{}.{}", slice.name(), format.extension()));
        match format {
            Format::Csv => fs::write(&path, grid.to_csv())?,
            Format::Json => write_json(&path, &grid)?,
        }
        info!("{}: minimum at {:?}", slice.name(), grid.argmin());
        grids.push((slice.name().to_string(), grid));
    }
    Ok(grids)
}

#[derive(Debug, Clone, PartialEq)]
pub struct MepOutcome {
    pub path: Array2<f64>,
    pub iterations: usize,
    pub converged: bool,
    pub alpha: Vec<f64>,
    /// Learned `U_θ` along the path, when a model is given.
    pub learned: Option<Vec<f64>>,
    /// Exact `U` along the path, when the system has one.
    pub exact: Option<Vec<f64>>,
    /// Largest image energy after each iteration.
    pub max_energy_trace: Vec<f64>,
    pub relative_barrier_error: Option<f64>,
}

fn default_endpoints(system: &System, exact: Option<&ExactDecomposition>) -> Result<[Vec<f64>; 2]> {
    match exact {
        Some(ExactDecomposition::GinzburgLandau { minus, plus, .. }) => Ok([minus.clone(), plus.clone()]),
        _ => Err(Error::config(format!(
            "eval.mep.endpoints: required for {}",
            system.name()
        ))),
    }
}

/// Minimum energy path between two states by the string method, relaxed on
/// the exact energy (or on the model potential), with the learned and exact
/// landscapes sampled along it. Writes the path CSV to `out`.
pub fn cmd_mep(model: Option<&Path>, cfg: &RunConfig, out: &Path) -> Result<MepOutcome> {
    cfg.validate()?;
    let system = cfg.system()?;
    let mep = cfg.eval.mep.clone().unwrap_or_default();
    let exact = system.exact()?;
    let loaded = match model {
        Some(p) => Some(decomposition::load_model(p)?),
        None => None,
    };
    let [a, b] = match &mep.endpoints {
        Some(e) => e.clone(),
        None => default_endpoints(&system, exact.as_ref())?,
    };
    let n = mep.string.n_images;
    let init = mep.init.unwrap_or(match system.kind() {
        SystemKind::GinzburgLandau(_) => PathInit::Front,
        _ => PathInit::Linear,
    });
    let initial = match (init, system.kind()) {
        (PathInit::Linear, _) => evaluation::linear_path(&a, &b, n),
        (PathInit::Front, SystemKind::GinzburgLandau(gl)) => {
            evaluation::front_path(&gl.nodes(), &a, &b, n, std::f64::consts::SQRT_2 * gl.delta)
        }
        (PathInit::Front, _) => return Err(Error::config("eval.mep.init: front paths need a scalar field system")),
    };
    let step = match (mep.string.step, system.kind()) {
        (Some(s), _) => s,
        (None, SystemKind::GinzburgLandau(gl)) => 0.5 * gl.stable_dt(),
        (None, _) => 1e-3,
    };
    let energy_model: &dyn Decomposition = match (&exact, &loaded) {
        (Some(e), _) if mep.use_exact_energy => e,
        (_, Some((m, _))) => m,
        (Some(e), None) => e,
        (None, None) => {
            return Err(Error::config(
                "eval.mep: no exact energy for this system; pass a model to relax on",
            ))
        }
    };
    let result = evaluation::string_mep(
        |xs| energy_model.components_batch(xs).map(|(g, _)| g),
        Some(|xs: ArrayView2<'_, f64>| energy_model.potential_batch(xs)),
        initial,
        step,
        mep.string.max_iters,
        mep.string.tol,
    )?;
    if !result.converged {
        warn!("string method stopped after {} iterations without converging", result.iterations);
    }
    let path = result.images;
    let exact_u = match &exact {
        Some(e) => Some(path.rows().into_iter().map(|r| e.quasipotential(&r.to_vec())).collect::<Vec<_>>()),
        None => None,
    };
    let learned = match &loaded {
        Some((m, offset)) => {
            let v = m.potential_batch(path.view())?;
            let c = match offset {
                Some(c) => *c,
                None => 2.0 * v.iter().copied().fold(f64::INFINITY, f64::min),
            };
            Some(v.iter().map(|x| 2.0 * x - c).collect::<Vec<_>>())
        }
        None => None,
    };
    let relative_barrier_error = match (&learned, &exact_u) {
        (Some(l), Some(e)) => Some(evaluation::relative_barrier_error(l, e)),
        _ => None,
    };
    // without a model the U_theta column carries the exact landscape
    let shown = learned.clone().or_else(|| exact_u.clone()).unwrap_or_else(|| vec![f64::NAN; path.nrows()]);
    let profile = evaluation::landscape_along_path(path.view(), shown);
    let exact_col = if learned.is_some() { exact_u.as_deref() } else { None };
    fs::write(out, evaluation::mep_csv(path.view(), &profile, exact_col))?;
    Ok(MepOutcome {
        alpha: profile.alpha,
        path,
        iterations: result.iterations,
        converged: result.converged,
        learned,
        exact: exact_u,
        max_energy_trace: result.max_energy_trace,
        relative_barrier_error,
    })
}

/// Per-point `f_θ`, `∇V_θ`, `g_θ` and cosine for the points in a CSV file.
pub fn cmd_decompose(model: &Path, points: &Path, out: &Path, format: Format) -> Result<usize> {
    let (model, _) = decomposition::load_model(model)?;
    let pts = evaluation::parse_points_csv(&fs::read_to_string(points)?, model.dim())?;
    let rows = evaluation::decompose_points(&model, pts.view())?;
    match format {
        Format::Csv => fs::write(out, evaluation::decomposed_csv(&rows))?,
        Format::Json => write_json(out, &rows)?,
    }
    Ok(rows.len())
}
