//! Acceptance suite: one PASS/FAIL line per criterion.
//!
//! Criteria 1-4 run in-process against the library; 5-10 drive the
//! `quasipot` binary end to end with the configs under `configs/acceptance`.
//! `QP_ACCEPTANCE=1,4,10` restricts the run to the listed criteria.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, ExitCode};
use std::time::Instant;

use ndarray::{Array1, Array2, ArrayView1};
use quasipot::config::RunConfig;
use quasipot::datasets::{self, representative_sample};
use quasipot::decomposition::{self, Decomposition, LoadedModel};
use quasipot::evaluation::{self, RolloutReference};
use quasipot::integrators::{rollout, FnField};
use quasipot::pipeline;
use quasipot::training::{self, flat_params, set_flat_params};
use quasipot::{Activation, DecompositionModel, LossConfig, Method, Mlp, Split};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::Value;

struct Outcome {
    pass: bool,
    detail: String,
}

impl Outcome {
    fn new(pass: bool, detail: impl Into<String>) -> Self {
        Self {
            pass,
            detail: detail.into(),
        }
    }
}

type Check = fn(&Path) -> anyhow::Result<Outcome>;

fn root() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../..")
}

fn config_path(name: &str) -> PathBuf {
    root().join("configs/acceptance").join(name)
}

fn qp(args: &[&str]) -> anyhow::Result<()> {
    let out = Command::new(env!("CARGO_BIN_EXE_quasipot"))
        .args(args)
        .env("QP_LOG", "warn")
        .output()?;
    if !out.status.success() {
        anyhow::bail!(
            "quasipot {} failed: {}",
            args.join(" "),
            String::from_utf8_lossy(&out.stderr).trim()
        );
    }
    Ok(())
}

fn s(p: &Path) -> &str {
    p.to_str().expect("utf-8 path")
}

fn read_json(p: &Path) -> anyhow::Result<Value> {
    Ok(serde_json::from_str(&fs::read_to_string(p)?)?)
}

fn num(v: &Value, path: &[&str]) -> f64 {
    let mut cur = v;
    for k in path {
        cur = &cur[*k];
    }
    cur.as_f64().unwrap_or(f64::NAN)
}

/// generate, representatives, train and eval in `dir`; returns the report.
fn end_to_end(dir: &Path, config: &Path) -> anyhow::Result<Value> {
    let data = dir.join("data.qptd");
    let reps = dir.join("reps.qprs");
    let model = dir.join("model.json");
    let report = dir.join("report.json");
    let c = s(config);
    qp(&["generate", "--config", c, "--out", s(&data)])?;
    qp(&["representatives", "--in", s(&data), "--config", c, "--out", s(&reps)])?;
    qp(&["train", "--data", s(&data), "--reps", s(&reps), "--config", c, "--out", s(&model)])?;
    qp(&["eval", "--model", s(&model), "--data", s(&data), "--config", c, "--out", s(&report)])?;
    read_json(&report)
}

/// rRMSE and rMAE recomputed from a model over a uniform grid, with the
/// learned landscape shifted to grid-minimum zero.
fn grid_errors(model: &LoadedModel, bounds: &[[f64; 2]], per_axis: usize, exact: impl Fn(&[f64]) -> f64) -> (f64, f64) {
    let d = bounds.len();
    let total = per_axis.pow(d as u32);
    let node = |k: usize, i: usize| bounds[k][0] + (bounds[k][1] - bounds[k][0]) * i as f64 / (per_axis - 1) as f64;
    let mut learned = Vec::with_capacity(total);
    let mut reference = Vec::with_capacity(total);
    let chunk = 65536;
    let mut start = 0;
    while start < total {
        let end = (start + chunk).min(total);
        let pts = Array2::from_shape_fn((end - start, d), |(r, k)| {
            let mut flat = start + r;
            let mut idx = 0;
            for axis in (0..d).rev() {
                let i = flat % per_axis;
                flat /= per_axis;
                if axis == k {
                    idx = i;
                }
            }
            node(k, idx)
        });
        learned.extend(model.potential_batch(pts.view()).unwrap().iter().map(|v| 2.0 * v));
        for row in pts.rows() {
            reference.push(exact(row.as_slice().unwrap()));
        }
        start = end;
    }
    let m = learned.iter().copied().fold(f64::INFINITY, f64::min);
    let (mut se, mut s2, mut ae, mut a1) = (0.0, 0.0, 0.0, 0.0);
    for (l, e) in learned.iter().zip(&reference) {
        let diff = e - (l - m);
        se += diff * diff;
        s2 += e * e;
        ae += diff.abs();
        a1 += e.abs();
    }
    ((se / s2).sqrt(), ae / a1)
}

fn at(v: &Value, i: usize) -> f64 {
    v[i].as_f64().unwrap_or(f64::NAN)
}

fn floats(v: &Value) -> Vec<f64> {
    v.as_array().map(|a| a.iter().map(|x| x.as_f64().unwrap_or(f64::NAN)).collect()).unwrap_or_default()
}

fn bistable_u(x: &[f64]) -> f64 {
    (1.0 - x[0] * x[0]).powi(2) + x[1] * x[1] + x[2] * x[2]
}

fn limit_cycle_q(x: &[f64]) -> f64 {
    let (u, v) = (x[0] - 1.0, x[1] - 2.5);
    u * u + u * v + v * v
}

fn limit_cycle_u(x: &[f64]) -> f64 {
    (limit_cycle_q(x) - 0.5).powi(2)
}

// 1. Oracle identity.
fn oracle_identity(dir: &Path) -> anyhow::Result<Outcome> {
    let cfg = RunConfig::example(1)?;
    let data = dir.join("ex1.qptd");
    pipeline::cmd_generate(&cfg, &data)?;
    let ds = datasets::load_dataset(&data)?;
    let fixture = dir.join("fixture.json");
    fs::write(&fixture, r#"{"version": 1, "fixture": "bistable3d"}"#)?;
    let (model, _) = decomposition::load_model(&fixture)?;
    let (x, y) = ds.pairs(Split::Train);
    let reps = representative_sample(ds.states(Split::Train).view(), cfg.sampling.radius, cfg.sampling.seed)?;
    let loss = training::total_loss(&model, x.view(), y.view(), reps.points.view(), ds.dt(), &cfg.loss)?;
    let meta = datasets::read_metadata(&data)?;
    let reference = RolloutReference::from_dataset(&ds, Split::Test, meta.stride, None)?.with_substeps(cfg.eval.rollout_substeps);
    let stats = evaluation::rollout_errors(&model, &reference)?;
    let bounds = [[-2.0, 2.0], [-1.5, 1.5], [-1.5, 1.5]];
    let (rrmse, rmae) = grid_errors(&model, &bounds, 101, bistable_u);
    let pass = loss.orth_loss <= 1e-20 && loss.dyn_loss <= 1e-8 && stats.mean <= 1e-6 && rrmse <= 1e-10 && rmae <= 1e-10;
    Ok(Outcome::new(
        pass,
        format!(
            "L_orth {:.3e} (<= 1e-20), L_dyn {:.3e} (<= 1e-8), rollout {:.3e} (<= 1e-6, {} substeps), rRMSE {:.3e}, rMAE {:.3e} (<= 1e-10)",
            loss.orth_loss, loss.dyn_loss, stats.mean, cfg.eval.rollout_substeps, rrmse, rmae
        ),
    ))
}

fn random_mlp(rng: &mut ChaCha8Rng, d: usize, widths: &[usize], out: usize, act: Activation) -> Mlp {
    let mut net = Mlp::zeros(d, widths, out, act).unwrap();
    net.init_uniform(rng);
    for p in net.params_mut() {
        *p += rng.random_range(-0.3..0.3);
    }
    net
}

fn max_rel(a: &[f64], b: &[f64]) -> f64 {
    let scale = b.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(1e-8);
    a.iter().zip(b).fold(0.0f64, |m, (x, y)| m.max((x - y).abs())) / scale
}

// 2. Gradient suite.
fn gradient_suite(_: &Path) -> anyhow::Result<Outcome> {
    let mut rng = ChaCha8Rng::seed_from_u64(20);
    let configs = 120;
    let (mut worst_in, mut worst_par) = (0.0f64, 0.0f64);
    for case in 0..configs {
        let d = rng.random_range(1..=5);
        let w = rng.random_range(1..=8);
        let act = if case % 2 == 0 { Activation::Tanh } else { Activation::ReluSquared };
        let widths = [w, rng.random_range(1..=8)];
        let net = random_mlp(&mut rng, d, &widths, 1, Activation::Tanh);
        let x: Vec<f64> = (0..d).map(|_| rng.random_range(-1.0..1.0)).collect();
        let g = net.input_gradient(&x)?;
        let h = 1e-6;
        let fd: Vec<f64> = (0..d)
            .map(|k| {
                let (mut a, mut b) = (x.clone(), x.clone());
                a[k] += h;
                b[k] -= h;
                (net.forward(&a).unwrap()[0] - net.forward(&b).unwrap()[0]) / (2.0 * h)
            })
            .collect();
        worst_in = worst_in.max(max_rel(&g, &fd));

        let pot = random_mlp(&mut rng, d, &[w, w], 1, Activation::Tanh);
        let rot = random_mlp(&mut rng, d, &[w, w], d, act);
        let center: Array1<f64> = (0..d).map(|_| rng.random_range(-0.3..0.3)).collect();
        let model = DecompositionModel::from_parts(pot, rot, center)?;
        let n = rng.random_range(1..=8);
        let xs = Array2::from_shape_fn((n, d), |_| rng.random_range(-1.0..1.0));
        let ys = &xs + &Array2::from_shape_fn((n, d), |_| rng.random_range(-0.05..0.05));
        let reps = Array2::from_shape_fn((6, d), |_| rng.random_range(-1.0..1.0));
        let cfg = LossConfig {
            huber_delta: rng.random_range(0.05..1.0),
            orth_negative_weight: 0.1,
            lambda: rng.random_range(0.0..1.0),
        };
        let dt = 0.05;
        let lg = training::loss_and_gradient(&model, xs.view(), ys.view(), reps.view(), dt, &cfg)?;
        let base = flat_params(&model);
        let h = 1e-5;
        let fd: Vec<f64> = (0..base.len())
            .map(|i| {
                let eval = |v: f64| {
                    let mut p = base.clone();
                    p[i] = v;
                    let mut m = model.clone();
                    set_flat_params(&mut m, &p).unwrap();
                    training::total_loss(&m, xs.view(), ys.view(), reps.view(), dt, &cfg).unwrap().total
                };
                (eval(base[i] + h) - eval(base[i] - h)) / (2.0 * h)
            })
            .collect();
        worst_par = worst_par.max(max_rel(&lg.grad, &fd));
    }
    Ok(Outcome::new(
        worst_in <= 1e-6 && worst_par <= 1e-5,
        format!("{configs} configurations: worst input-gradient error {worst_in:.2e} (<= 1e-6), worst loss-gradient error {worst_par:.2e} (<= 1e-5)"),
    ))
}

fn dist(a: ArrayView1<'_, f64>, b: ArrayView1<'_, f64>) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

// 3. Representative sampling properties.
fn algorithm_one(_: &Path) -> anyhow::Result<Outcome> {
    let mut rng = ChaCha8Rng::seed_from_u64(30);
    let mut violations = 0usize;
    let mut sizes = Vec::new();
    for d in 1..=5 {
        let pts = Array2::from_shape_fn((10_000, d), |_| rng.random_range(-1.0..1.0));
        let r = 0.02 * 10f64.powf((d - 1) as f64 / 2.0).min(20.0);
        let set = representative_sample(pts.view(), r, d as u64)?;
        sizes.push(set.len());
        for i in 0..set.len() {
            for j in 0..i {
                if dist(set.points.row(i), set.points.row(j)) < r {
                    violations += 1;
                }
            }
        }
        for p in pts.rows() {
            let covered = set.points.rows().into_iter().any(|q| dist(p, q) < r);
            if !covered {
                violations += 1;
            }
        }
    }
    Ok(Outcome::new(
        violations == 0,
        format!("10^4 points in dims 1-5, representative counts {sizes:?}, {violations} separation/coverage violations"),
    ))
}

// 4. Integrator orders.
fn integrator_orders(_: &Path) -> anyhow::Result<Outcome> {
    let field = FnField::new(1, |x: &[f64], dx: &mut [f64]| dx[0] = -x[0]);
    let exact = (-1.0f64).exp();
    let slopes = |method: Method| -> Vec<f64> {
        let errs: Vec<f64> = [0.1, 0.05, 0.025, 0.0125]
            .iter()
            .map(|&dt: &f64| {
                let n = (1.0 / dt).round() as usize;
                let path = rollout(&field, &[1.0], dt, n, method).unwrap();
                (path[n][0] - exact).abs()
            })
            .collect();
        errs.windows(2).map(|w| (w[0] / w[1]).log2()).collect()
    };
    let rk4 = slopes(Method::Rk4);
    let heun = slopes(Method::Heun);
    let pass = rk4.iter().all(|s| (s - 4.0).abs() <= 0.1) && heun.iter().all(|s| (s - 2.0).abs() <= 0.1);
    Ok(Outcome::new(pass, format!("RK4 slopes {rk4:.3?} (4.0 ± 0.1), Heun slopes {heun:.3?} (2.0 ± 0.1)")))
}

// 5. Example 1 end to end.
fn example_one(dir: &Path) -> anyhow::Result<Outcome> {
    let cfg = config_path("example1.json");
    let report = end_to_end(dir, &cfg)?;
    let rrmse = num(&report, &["quasipotential", "rrmse"]);
    let rmae = num(&report, &["quasipotential", "rmae"]);
    let roll = num(&report, &["rollout", "mean"]);
    let (model, _) = decomposition::load_model(&dir.join("model.json"))?;
    let (r2, m2) = grid_errors(&model, &[[-2.0, 2.0], [-1.5, 1.5], [-1.5, 1.5]], 101, bistable_u);
    let agree = (r2 - rrmse).abs() <= 1e-9 * rrmse.max(1.0) && (m2 - rmae).abs() <= 1e-9 * rmae.max(1.0);
    Ok(Outcome::new(
        rrmse <= 0.02 && rmae <= 0.01 && roll <= 5e-3 && agree,
        format!("rRMSE {rrmse:.4} (<= 0.02), rMAE {rmae:.4} (<= 0.01), rollout {roll:.3e} (<= 5e-3), independent grid recomputation {r2:.4}/{m2:.4}"),
    ))
}

// 6. Example 2 end to end.
fn example_two(dir: &Path) -> anyhow::Result<Outcome> {
    let cfg = config_path("example2.json");
    let report = end_to_end(dir, &cfg)?;
    let rrmse = num(&report, &["quasipotential", "rrmse"]);
    let rmae = num(&report, &["quasipotential", "rmae"]);
    let model = dir.join("model.json");
    let out = dir.join("landscape");
    qp(&["landscape", "--model", s(&model), "--config", s(&cfg), "--out", s(&out), "--format", "json"])?;
    let grid = read_json(&out.join("full.json"))?;
    let coords = grid["coords"].as_array().cloned().unwrap_or_default();
    let values = floats(&grid["values"]);
    let best = (0..values.len()).min_by(|&a, &b| values[a].total_cmp(&values[b])).unwrap_or(0);
    let p = [at(&coords[best], 0), at(&coords[best], 1)];
    // distance to the ellipse from q and |∇q|, against one grid-cell diagonal
    let (u, v) = (p[0] - 1.0, p[1] - 2.5);
    let gq = ((2.0 * u + v).powi(2) + (u + 2.0 * v).powi(2)).sqrt();
    let distance = (limit_cycle_q(&p) - 0.5).abs() / gq.max(1e-12);
    let cell = 3.0 / 100.0 * 2f64.sqrt();
    let (loaded, _) = decomposition::load_model(&model)?;
    let (r2, m2) = grid_errors(&loaded, &[[-0.5, 2.5], [1.0, 4.0]], 101, limit_cycle_u);
    let agree = (r2 - rrmse).abs() <= 1e-9 * rrmse.max(1.0) && (m2 - rmae).abs() <= 1e-9 * rmae.max(1.0);
    Ok(Outcome::new(
        rrmse <= 0.05 && rmae <= 0.03 && distance <= cell && agree,
        format!(
            "rRMSE {rrmse:.4} (<= 0.05), rMAE {rmae:.4} (<= 0.03), landscape minimum at ({:.3}, {:.3}) is {distance:.2e} from q = 1/2 (<= {cell:.3}), independent grid recomputation {r2:.4}/{m2:.4}",
            p[0], p[1]
        ),
    ))
}

fn csv_columns(text: &str) -> BTreeMap<String, Vec<f64>> {
    let mut lines = text.lines();
    let header: Vec<String> = lines.next().unwrap_or("").split(',').map(str::to_string).collect();
    let mut cols: BTreeMap<String, Vec<f64>> = header.iter().map(|h| (h.clone(), Vec::new())).collect();
    for line in lines {
        for (h, v) in header.iter().zip(line.split(',')) {
            cols.get_mut(h).unwrap().push(v.parse().unwrap_or(f64::NAN));
        }
    }
    cols
}

// 7. Example 4 (reduced scale).
fn example_four(dir: &Path) -> anyhow::Result<Outcome> {
    let cfg_path = config_path("example4.json");
    let cfg = RunConfig::load(&cfg_path)?;
    end_to_end(dir, &cfg_path)?;
    let mep = dir.join("mep.csv");
    qp(&["mep", "--model", s(&dir.join("model.json")), "--config", s(&cfg_path), "--out", s(&mep)])?;
    let cols = csv_columns(&fs::read_to_string(&mep)?);
    let mut learned = cols.get("U_theta").cloned().unwrap_or_default();
    let mut exact = cols.get("U_exact").cloned().unwrap_or_default();
    let shift = |v: &mut Vec<f64>| {
        let m = v.iter().copied().fold(f64::INFINITY, f64::min);
        v.iter_mut().for_each(|x| *x -= m);
    };
    shift(&mut learned);
    shift(&mut exact);
    let barrier = exact.iter().copied().fold(0.0f64, f64::max);
    let dev = learned.iter().zip(&exact).map(|(a, b)| (a - b).abs()).fold(0.0f64, f64::max);
    let rel = dev / barrier;

    // the exact-energy string: its converged profile descends monotonically
    // from the saddle to both minima; the max-image energy trace is reported
    let exact_run = pipeline::cmd_mep(None, &cfg, &dir.join("mep_exact.csv"))?;
    let trace = &exact_run.max_energy_trace;
    let scale = trace.iter().copied().fold(0.0f64, |m, v| m.max(v.abs())).max(1.0);
    let low = trace.iter().copied().fold(f64::INFINITY, f64::min);
    let rise = trace.last().copied().unwrap_or(low) - low;
    let profile = exact_run.exact.clone().unwrap_or_default();
    let unimodal = evaluation::is_unimodal(&profile, 1e-10 * scale);
    let scale_note = format!("I = {}, N = {}", cfg.system.params.get("intervals").copied().unwrap_or(f64::NAN), cfg.data.n_trajectories);
    Ok(Outcome::new(
        rel <= 0.05 && unimodal && exact_run.converged,
        format!(
            "{scale_note}: learned MEP profile deviation {:.2}% of barrier {barrier:.4} (<= 5%), exact MEP profile descends from the saddle {unimodal}, converged {} in {} iterations (max-image energy {:.6} -> {:.6}, late reparameterization rise {rise:.1e})",
            100.0 * rel,
            exact_run.converged,
            exact_run.iterations,
            trace.first().copied().unwrap_or(f64::NAN),
            trace.last().copied().unwrap_or(f64::NAN)
        ),
    ))
}

// 8. Example 5 (reduced scale).
fn example_five(dir: &Path) -> anyhow::Result<Outcome> {
    let cfg_path = config_path("example5.json");
    let cfg = RunConfig::load(&cfg_path)?;
    let report = end_to_end(dir, &cfg_path)?;
    let roll = num(&report, &["rollout", "mean"]);
    let out = dir.join("landscape");
    qp(&["landscape", "--model", s(&dir.join("model.json")), "--config", s(&cfg_path), "--out", s(&out), "--format", "json"])?;
    let grid = read_json(&out.join("u0_v0.json"))?;
    let res = &grid["slice"]["resolution"];
    let r1 = &grid["slice"]["range1"];
    let r2 = &grid["slice"]["range2"];
    let cell = [
        (at(r1, 1) - at(r1, 0)) / (at(res, 0) - 1.0),
        (at(r2, 1) - at(r2, 0)) / (at(res, 1) - 1.0),
    ];
    let values = floats(&grid["values"]);
    let coords = grid["coords"].as_array().cloned().unwrap_or_default();
    let best = (0..values.len()).min_by(|&a, &b| values[a].total_cmp(&values[b])).unwrap_or(0);
    let p = [at(&coords[best], 0), at(&coords[best], 1)];
    let within = (p[0] - 1.0).abs() <= cell[0] + 1e-12 && (p[1] - 0.5).abs() <= cell[1] + 1e-12;
    let intervals = cfg.system.params.get("intervals").copied().unwrap_or(f64::NAN);
    Ok(Outcome::new(
        within && roll <= 1e-2,
        format!(
            "I = {intervals}, N = {}: landscape minimum at ({:.3}, {:.3}) vs (1, 0.5), cell {:.3} x {:.3}; rollout {roll:.3e} (<= 1e-2)",
            cfg.data.n_trajectories, p[0], p[1], cell[0], cell[1]
        ),
    ))
}

// 9. Example 3 with a user-supplied parameter file.
fn example_three(dir: &Path) -> anyhow::Result<Outcome> {
    let cfg = config_path("example3.json");
    let params = root().join("configs/yeast_params.json");
    let data = dir.join("data.qptd");
    let reps = dir.join("reps.qprs");
    let model = dir.join("model.json");
    let report = dir.join("report.json");
    let (c, p) = (s(&cfg), s(&params));
    qp(&["--params", p, "generate", "--config", c, "--out", s(&data)])?;
    qp(&["--params", p, "representatives", "--in", s(&data), "--config", c, "--out", s(&reps)])?;
    qp(&["--params", p, "train", "--data", s(&data), "--reps", s(&reps), "--config", c, "--out", s(&model)])?;
    qp(&["--params", p, "eval", "--model", s(&model), "--data", s(&data), "--config", c, "--out", s(&report)])?;
    let report = read_json(&report)?;
    let mean = num(&report, &["rollout", "mean"]);
    let std = num(&report, &["rollout", "std"]);
    let n = num(&report, &["rollout", "n_trajectories"]);
    Ok(Outcome::new(
        mean.is_finite() && std.is_finite() && n > 0.0,
        format!("rollout {mean:.3} ± {std:.3} over {n} test trajectories (reference figure 0.161 ± 0.226, not gated)"),
    ))
}

// 10. Determinism.
fn determinism(dir: &Path) -> anyhow::Result<Outcome> {
    let cfg = config_path("determinism.json");
    let c = s(&cfg);
    let points = dir.join("points.csv");
    fs::write(&points, "x1,x2,x3\n0.1,0.2,0.3\n-1.2,0.4,0.0\n1.5,-1.0,0.7\n")?;
    let run = |tag: &str| -> anyhow::Result<Vec<(String, Vec<u8>)>> {
        let d = dir.join(tag);
        fs::create_dir_all(&d)?;
        let f = |n: &str| d.join(n);
        qp(&["generate", "--config", c, "--out", s(&f("data.qptd"))])?;
        qp(&["representatives", "--in", s(&f("data.qptd")), "--config", c, "--out", s(&f("reps.qprs"))])?;
        qp(&["train", "--data", s(&f("data.qptd")), "--reps", s(&f("reps.qprs")), "--config", c, "--out", s(&f("model.json"))])?;
        qp(&["eval", "--model", s(&f("model.json")), "--data", s(&f("data.qptd")), "--config", c, "--out", s(&f("report.json"))])?;
        qp(&["landscape", "--model", s(&f("model.json")), "--config", c, "--out", s(&f("landscape"))])?;
        qp(&["mep", "--model", s(&f("model.json")), "--config", c, "--out", s(&f("mep.csv"))])?;
        qp(&["decompose", "--model", s(&f("model.json")), "--points", s(&points), "--out", s(&f("decomposed.csv"))])?;
        let mut files = Vec::new();
        let mut stack = vec![d.clone()];
        while let Some(p) = stack.pop() {
            for e in fs::read_dir(&p)? {
                let e = e?.path();
                if e.is_dir() {
                    stack.push(e);
                } else {
                    files.push((e.strip_prefix(&d)?.display().to_string(), fs::read(&e)?));
                }
            }
        }
        files.sort();
        Ok(files)
    };
    let a = run("a")?;
    let b = run("b")?;
    let differing: Vec<&str> = a
        .iter()
        .zip(&b)
        .filter(|(x, y)| x != y)
        .map(|(x, _)| x.0.as_str())
        .collect();
    let names: Vec<&str> = a.iter().map(|x| x.0.as_str()).collect();
    Ok(Outcome::new(
        a.len() == b.len() && differing.is_empty(),
        format!("{} output files compared byte for byte ({}); differing: {differing:?}", a.len(), names.join(", ")),
    ))
}

fn main() -> ExitCode {
    let criteria: [(usize, &str, Check); 10] = [
        (1, "oracle identity", oracle_identity),
        (2, "gradient suite", gradient_suite),
        (3, "representative sampling", algorithm_one),
        (4, "integrator orders", integrator_orders),
        (5, "example 1 end to end", example_one),
        (6, "example 2 end to end", example_two),
        (7, "example 4 minimum energy path", example_four),
        (8, "example 5 landscape and rollout", example_five),
        (9, "example 3 with supplied parameters", example_three),
        (10, "determinism", determinism),
    ];
    let selected: Option<Vec<usize>> = std::env::var("QP_ACCEPTANCE")
        .ok()
        .map(|v| v.split(',').filter_map(|t| t.trim().parse().ok()).collect());
    let mut failed = 0;
    for (id, name, check) in criteria {
        if selected.as_ref().is_some_and(|s| !s.contains(&id)) {
            println!("SKIP [{id:>2}] {name}");
            continue;
        }
        let dir = tempfile::tempdir().expect("temp dir");
        let t = Instant::now();
        let outcome = check(dir.path()).unwrap_or_else(|e| Outcome::new(false, format!("error: {e:#}")));
        let secs = t.elapsed().as_secs_f64();
        let tag = if outcome.pass { "PASS" } else { "FAIL" };
        if !outcome.pass {
            failed += 1;
        }
        println!("{tag} [{id:>2}] {name}: {} [{secs:.1} s]", outcome.detail);
    }
    println!("acceptance: {failed} failing criteria");
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
