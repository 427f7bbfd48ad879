use std::collections::BTreeMap;
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Context;
use clap::{Parser, Subcommand, ValueEnum};
use log::info;
use quasipot::config::RunConfig;
use quasipot::pipeline::{self, Format};
use quasipot::Split;

#[derive(Parser)]
#[command(name = "quasipot", version, about = "Learn quasipotential landscapes from trajectory data")]
struct Cli {
    /// Worker threads; 1 keeps every output byte-reproducible.
    #[arg(long, global = true, default_value_t = 1)]
    threads: usize,

    /// JSON object of system parameters merged over `system.params` of
    /// every loaded config.
    #[arg(long, global = true)]
    params: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum FormatArg {
    Csv,
    Json,
}

impl From<FormatArg> for Format {
    fn from(f: FormatArg) -> Self {
        match f {
            FormatArg::Csv => Format::Csv,
            FormatArg::Json => Format::Json,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum SplitArg {
    Train,
    Val,
    Test,
}

impl From<SplitArg> for Split {
    fn from(s: SplitArg) -> Self {
        match s {
            SplitArg::Train => Split::Train,
            SplitArg::Val => Split::Val,
            SplitArg::Test => Split::Test,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Print the preset configuration of a numerical example (1 to 5).
    Preset {
        example: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Simulate trajectories and write a pair dataset.
    Generate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Overrides data.seed.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Select representative points from one split of a dataset.
    Representatives {
        #[arg(long = "in")]
        input: PathBuf,
        /// Radius; defaults to sampling.radius of --config.
        #[arg(long)]
        r: Option<f64>,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        /// Defaults to sampling.seed of --config, else 0.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, value_enum, default_value = "train")]
        split: SplitArg,
    },
    /// Train a decomposition model.
    Train {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        reps: PathBuf,
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Overrides model.seed and train.seed.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Rollout, landscape and orthogonality metrics as JSON.
    Eval {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Overrides sampling.seed for the test representatives.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Export the learned landscape over the configured slices.
    Landscape {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        config: PathBuf,
        /// Output directory.
        #[arg(long)]
        out: PathBuf,
        #[arg(long, value_enum, default_value = "csv")]
        format: FormatArg,
    },
    /// Minimum energy path and the landscapes along it.
    Mep {
        #[arg(long)]
        model: Option<PathBuf>,
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Per-point drift, potential gradient, rotational part and cosine.
    Decompose {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        points: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, value_enum, default_value = "csv")]
        format: FormatArg,
    },
}

fn load_config(path: &PathBuf, params: Option<&BTreeMap<String, f64>>) -> anyhow::Result<RunConfig> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
    let mut value: serde_json::Value =
        serde_json::from_str(&text).with_context(|| format!("parsing config {}", path.display()))?;
    if let Some(params) = params {
        let system = value
            .get_mut("system")
            .and_then(|s| s.as_object_mut())
            .context("config has no system object")?;
        let target = system
            .entry("params")
            .or_insert_with(|| serde_json::json!({}))
            .as_object_mut()
            .context("system.params is not an object")?;
        for (k, v) in params {
            target.insert(k.clone(), serde_json::json!(v));
        }
    }
    Ok(RunConfig::from_json(&value.to_string())?)
}

fn load_params(path: &PathBuf) -> anyhow::Result<BTreeMap<String, f64>> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading parameters {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing parameters {}", path.display()))
}

fn run(cli: Cli) -> anyhow::Result<()> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(cli.threads.max(1))
        .build_global()
        .context("setting up the thread pool")?;
    let params = cli.params.as_ref().map(load_params).transpose()?;
    let load_config = |p: &PathBuf| load_config(p, params.as_ref());
    match cli.command {
        Command::Preset { example, out } => {
            let text = RunConfig::example(example)?.to_json();
            match out {
                Some(p) => std::fs::write(&p, text).with_context(|| format!("writing {}", p.display()))?,
                None => print!("{text}"),
            }
        }
        Command::Generate { config, out, seed } => {
            let mut cfg = load_config(&config)?;
            if let Some(s) = seed {
                cfg.data.seed = s;
            }
            let s = pipeline::cmd_generate(&cfg, &out)?;
            info!("{} pairs, {} trajectories", s.n_pairs, s.n_trajectories);
        }
        Command::Representatives {
            input,
            r,
            config,
            out,
            seed,
            split,
        } => {
            let cfg = config.as_ref().map(load_config).transpose()?;
            let r = match (r, &cfg) {
                (Some(r), _) => r,
                (None, Some(c)) => c.sampling.radius,
                (None, None) => anyhow::bail!("--r or --config is required"),
            };
            let seed = seed.or(cfg.map(|c| c.sampling.seed)).unwrap_or(0);
            pipeline::cmd_representatives(&input, split.into(), r, seed, &out)?;
        }
        Command::Train {
            data,
            reps,
            config,
            out,
            seed,
        } => {
            let mut cfg = load_config(&config)?;
            if let Some(s) = seed {
                cfg.model.seed = s;
                cfg.train.seed = s;
            }
            pipeline::cmd_train(&data, &reps, &cfg, &out)?;
        }
        Command::Eval {
            model,
            data,
            config,
            out,
            seed,
        } => {
            let mut cfg = load_config(&config)?;
            if let Some(s) = seed {
                cfg.sampling.seed = s;
            }
            let report = pipeline::cmd_eval(&model, &data, &cfg, &out)?;
            if let Some(r) = &report.rollout {
                info!("rollout error {:e} ± {:e} over {} trajectories", r.mean, r.std, r.n_trajectories);
            }
            if let Some(q) = &report.quasipotential {
                info!("rRMSE {:e}, rMAE {:e}", q.rrmse, q.rmae);
            }
        }
        Command::Landscape {
            model,
            config,
            out,
            format,
        } => {
            let cfg = load_config(&config)?;
            pipeline::cmd_landscape(&model, &cfg, &out, format.into())?;
        }
        Command::Mep { model, config, out } => {
            let cfg = load_config(&config)?;
            let o = pipeline::cmd_mep(model.as_deref(), &cfg, &out)?;
            info!("string method: {} iterations, converged {}", o.iterations, o.converged);
            if let Some(e) = o.relative_barrier_error {
                info!("relative barrier error {e:e}");
            }
        }
        Command::Decompose {
            model,
            points,
            out,
            format,
        } => {
            pipeline::cmd_decompose(&model, &points, &out, format.into())?;
        }
    }
    Ok(())
}

fn error_line(err: &anyhow::Error) -> String {
    let (kind, details) = match err.downcast_ref::<quasipot::Error>() {
        Some(quasipot::Error::Config(v)) => ("config", v.clone()),
        Some(e) => (e.kind(), Vec::new()),
        None => ("error", Vec::new()),
    };
    let value = serde_json::json!({
        "error": kind,
        "message": format!("{err:#}"),
        "details": details,
    });
    value.to_string()
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("QP_LOG", "info")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("{}", error_line(&err));
            ExitCode::FAILURE
        }
    }
}
