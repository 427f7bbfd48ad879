//! JSON run configuration driving the whole pipeline.
//!
//! Parsing rejects unknown keys; [`RunConfig::validate`] then checks value
//! ranges and reports every violation at once.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::datasets::{GenerationParams, Split};
use crate::diffcore::Activation;
use crate::evaluation::{GridSpec, SliceSpec, StringConfig};
use crate::systems::{BoxDomain, System, SystemKind, SystemSpec};
use crate::training::{LossConfig, TrainConfig};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataConfig {
    pub n_trajectories: usize,
    pub dt: f64,
    pub t_final: f64,
    pub stride: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub split_seed: u64,
}

impl DataConfig {
    pub fn generation(&self) -> GenerationParams {
        GenerationParams {
            n_trajectories: self.n_trajectories,
            dt: self.dt,
            t_final: self.t_final,
            stride: self.stride,
            seed: self.seed,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SamplingConfig {
    pub radius: f64,
    #[serde(default)]
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub hidden_width: usize,
    #[serde(default = "default_rot_activation")]
    pub rot_activation: Activation,
    #[serde(default)]
    pub seed: u64,
}

fn default_rot_activation() -> Activation {
    Activation::Tanh
}

/// Evaluation grid; a single resolution entry applies to every axis and the
/// domain defaults to the system's box.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    #[serde(default)]
    pub domain: Option<BoxDomain>,
    pub resolution: Vec<usize>,
}

impl GridConfig {
    pub fn resolve(&self, system: &System) -> GridSpec {
        let domain = self.domain.clone().unwrap_or_else(|| system.domain().clone());
        let resolution = if self.resolution.len() == 1 {
            vec![self.resolution[0]; domain.dim()]
        } else {
            self.resolution.clone()
        };
        GridSpec { domain, resolution }
    }
}

/// A two-parameter landscape slice.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum SliceConfig {
    /// Coordinate plane through `base` (origin by default).
    Plane {
        name: String,
        axes: [usize; 2],
        #[serde(default)]
        base: Option<Vec<f64>>,
        range1: [f64; 2],
        range2: [f64; 2],
        resolution: [usize; 2],
    },
    /// Two-field discretizations: `u = u₀ + s₁ cos(kπx)`, `v = v₀ + s₂ cos(kπx)`.
    FieldMode {
        name: String,
        mode: usize,
        base: [f64; 2],
        range1: [f64; 2],
        range2: [f64; 2],
        resolution: [usize; 2],
    },
    Affine {
        name: String,
        #[serde(flatten)]
        spec: SliceSpec,
    },
}

impl SliceConfig {
    pub fn name(&self) -> &str {
        match self {
            SliceConfig::Plane { name, .. } | SliceConfig::FieldMode { name, .. } | SliceConfig::Affine { name, .. } => name,
        }
    }

    pub fn resolve(&self, system: &System) -> Result<SliceSpec> {
        let d = system.kind().dim();
        match self {
            SliceConfig::Plane {
                axes,
                base,
                range1,
                range2,
                resolution,
                ..
            } => {
                let base = base.clone().unwrap_or_else(|| vec![0.0; d]);
                if base.len() != d {
                    return Err(Error::config(format!("slice {}: base has {} entries, expected {d}", self.name(), base.len())));
                }
                SliceSpec::plane(base, axes[0], axes[1], *range1, *range2, *resolution)
            }
            SliceConfig::FieldMode {
                mode,
                base,
                range1,
                range2,
                resolution,
                ..
            } => match system.kind() {
                SystemKind::Brusselator(b) => Ok(SliceSpec::field_mode(&b.nodes(), *mode, *base, *range1, *range2, *resolution)),
                _ => Err(Error::config(format!(
                    "slice {}: field_mode slices need a two-field system",
                    self.name()
                ))),
            },
            SliceConfig::Affine { spec, .. } => Ok(spec.clone()),
        }
    }
}

/// How the minimum energy path is initialized and on which energy it is
/// relaxed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PathInit {
    Linear,
    /// An interface sweeping across the domain between the two states.
    Front,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MepConfig {
    #[serde(flatten)]
    pub string: StringConfig,
    #[serde(default)]
    pub init: Option<PathInit>,
    /// Endpoints; default to the system's two stable states when known.
    #[serde(default)]
    pub endpoints: Option<[Vec<f64>; 2]>,
    /// Relax on the exact energy when the system has one (default), or on
    /// the loaded model's potential.
    #[serde(default = "default_true")]
    pub use_exact_energy: bool,
}

fn default_true() -> bool {
    true
}

impl Default for MepConfig {
    fn default() -> Self {
        Self {
            string: StringConfig::default(),
            init: None,
            endpoints: None,
            use_exact_energy: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvalConfig {
    #[serde(default)]
    pub grid: Option<GridConfig>,
    #[serde(default)]
    pub slices: Vec<SliceConfig>,
    #[serde(default)]
    pub mep: Option<MepConfig>,
    /// Split whose trajectories are rolled out.
    #[serde(default = "default_rollout_split")]
    pub rollout_split: Split,
    #[serde(default)]
    pub max_rollout_trajectories: Option<usize>,
    /// Heun steps of the learned rollout per data step `Δt`.
    #[serde(default = "default_rollout_substeps")]
    pub rollout_substeps: usize,
}

fn default_rollout_substeps() -> usize {
    10
}

fn default_rollout_split() -> Split {
    Split::Test
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            grid: None,
            slices: Vec::new(),
            mep: None,
            rollout_split: Split::Test,
            max_rollout_trajectories: None,
            rollout_substeps: default_rollout_substeps(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub system: SystemSpec,
    pub data: DataConfig,
    pub sampling: SamplingConfig,
    pub model: ModelConfig,
    pub loss: LossConfig,
    #[serde(default)]
    pub train: TrainConfig,
    #[serde(default)]
    pub eval: EvalConfig,
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: RunConfig = serde_json::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&fs::read_to_string(path)?)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes") + "\n"
    }

    /// Every semantic violation, keyed by its JSON path.
    pub fn issues(&self) -> Vec<String> {
        let mut out = Vec::new();
        let system = match System::build(&self.system) {
            Ok(s) => Some(s),
            Err(Error::Config(v)) => {
                out.extend(v);
                None
            }
            Err(e) => {
                out.push(format!("system: {e}"));
                None
            }
        };
        out.extend(self.data.generation().issues("data"));
        if !(self.sampling.radius > 0.0 && self.sampling.radius.is_finite()) {
            out.push(format!("sampling.radius: must be positive, got {}", self.sampling.radius));
        }
        if self.model.hidden_width == 0 {
            out.push("model.hidden_width: must be positive".into());
        }
        out.extend(self.loss.issues("loss"));
        out.extend(self.train.issues("train"));
        if let Some(system) = &system {
            if let Some(g) = &self.eval.grid {
                let spec = g.resolve(system);
                out.extend(spec.issues("eval.grid"));
            }
            for (i, s) in self.eval.slices.iter().enumerate() {
                match s.resolve(system) {
                    Ok(spec) => out.extend(spec.issues(&format!("eval.slices[{i}]"), system.kind().dim())),
                    Err(Error::Config(v)) => out.extend(v.into_iter().map(|m| format!("eval.slices[{i}]: {m}"))),
                    Err(e) => out.push(format!("eval.slices[{i}]: {e}")),
                }
            }
            if let Some(m) = &self.eval.mep {
                if m.string.n_images < 3 {
                    out.push("eval.mep.n_images: need at least 3".into());
                }
                if let Some(step) = m.string.step {
                    if !(step > 0.0 && step.is_finite()) {
                        out.push(format!("eval.mep.step: must be positive, got {step}"));
                    }
                }
                if let Some([a, b]) = &m.endpoints {
                    let d = system.kind().dim();
                    if a.len() != d || b.len() != d {
                        out.push(format!("eval.mep.endpoints: need two states of dimension {d}"));
                    }
                }
            }
        }
        if self.eval.rollout_substeps == 0 {
            out.push("eval.rollout_substeps: must be at least 1".into());
        }
        let mut names: Vec<&str> = self.eval.slices.iter().map(|s| s.name()).collect();
        names.sort_unstable();
        if names.windows(2).any(|w| w[0] == w[1]) {
            out.push("eval.slices: names must be unique".into());
        }
        out
    }

    pub fn validate(&self) -> Result<()> {
        let issues = self.issues();
        if issues.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(issues))
        }
    }

    pub fn system(&self) -> Result<System> {
        System::build(&self.system)
    }

    /// SHA-256 of the canonical JSON form.
    pub fn hash(&self) -> String {
        let canonical = serde_json::to_string(self).expect("config serializes");
        Sha256::digest(canonical.as_bytes())
            .iter()
            .map(|b| format!("{b:02x}"))
            .collect()
    }

    /// Settings of the five numerical examples (`1..=5`). Example 3 has no
    /// rate constants and needs `system.params` filled in before use.
    pub fn example(n: usize) -> Result<Self> {
        // (system, N, Δt, T, m, r, δ₁, λ, width)
        let row = match n {
            1 => ("bistable3d", 2000, 1e-2, 5.0, 10, 0.1, 1.0, 1.0, 50),
            2 => ("limitcycle2d", 2000, 1e-2, 5.0, 10, 0.05, 1.0, 0.02, 50),
            3 => ("yeast3d", 10_000, 1e-2, 50.0, 100, 0.1, 1.0, 0.005, 100),
            4 => ("ginzburg_landau", 10_000, 1e-3, 2.0, 20, 0.2, 1.0, 1.0, 100),
            5 => ("brusselator", 20_000, 1e-4, 2.0, 200, 0.2, 1.0, 0.1, 200),
            _ => return Err(Error::invalid(format!("no example {n}; expected 1 to 5"))),
        };
        let (name, n_traj, dt, t_final, stride, radius, huber_delta, lambda, width) = row;
        let rot_activation = if n >= 4 { Activation::ReluSquared } else { Activation::Tanh };
        Ok(Self {
            system: SystemSpec::named(name),
            data: DataConfig {
                n_trajectories: n_traj,
                dt,
                t_final,
                stride,
                seed: 1,
                split_seed: 2,
            },
            sampling: SamplingConfig { radius, seed: 3 },
            model: ModelConfig {
                hidden_width: width,
                rot_activation,
                seed: 4,
            },
            loss: LossConfig {
                huber_delta,
                orth_negative_weight: 0.1,
                lambda,
            },
            train: TrainConfig {
                seed: 5,
                ..TrainConfig::default()
            },
            eval: example_eval(n),
        })
    }
}

fn example_eval(n: usize) -> EvalConfig {
    let mut eval = EvalConfig::default();
    match n {
        1 | 2 => {
            eval.grid = Some(GridConfig {
                domain: None,
                resolution: vec![101],
            })
        }
        4 => {
            eval.mep = Some(MepConfig::default());
            eval.rollout_substeps = 1;
        }
        5 => {
            eval.slices.push(SliceConfig::FieldMode {
                name: "u0_v0".into(),
                mode: 0,
                base: [1.0, 0.5],
                range1: [0.5, 1.5],
                range2: [0.0, 1.0],
                resolution: [101, 101],
            });
            eval.rollout_substeps = 1;
        }
        _ => {}
    }
    eval
}
