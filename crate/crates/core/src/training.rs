//! Loss assembly, Adam with exponential learning-rate decay, and the training
//! loop with best-validation snapshotting.
//!
//! The loss is `L = L_dyn + λ L_orth`. `L_dyn` averages the componentwise
//! Huber loss of `e = (Heun_Δt(x) - x_next) / Δt`; `L_orth` averages
//! `w(cos ∠(∇V, g); δ₂)` over representative points.
//!
//! Gradients are accumulated over fixed-size row chunks and summed in chunk
//! order, so results are bit-identical for any number of worker threads.

use std::time::Instant;

use ndarray::{s, Array2, ArrayView2, Axis, Zip};
use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::decomposition::{Decomposition, DecompositionModel, DriftField, COSINE_GUARD};
use crate::evaluation::{rollout_errors, RolloutReference};
use crate::{rng, Error, Result};

/// Rows per gradient chunk.
pub const CHUNK_ROWS: usize = 512;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LossConfig {
    /// Huber threshold `δ₁`.
    pub huber_delta: f64,
    /// Weight `δ₂` of negative cosines in the orthogonality penalty.
    #[serde(default = "default_delta2")]
    pub orth_negative_weight: f64,
    /// Multiplier `λ` of `L_orth`.
    pub lambda: f64,
}

fn default_delta2() -> f64 {
    0.1
}

impl Default for LossConfig {
    fn default() -> Self {
        Self {
            huber_delta: 1.0,
            orth_negative_weight: 0.1,
            lambda: 1.0,
        }
    }
}

impl LossConfig {
    pub fn issues(&self, path: &str) -> Vec<String> {
        let mut out = Vec::new();
        if !(self.huber_delta > 0.0 && self.huber_delta.is_finite()) {
            out.push(format!("{path}.huber_delta: must be positive, got {}", self.huber_delta));
        }
        if !(self.orth_negative_weight > 0.0 && self.orth_negative_weight <= 1.0) {
            out.push(format!(
                "{path}.orth_negative_weight: must lie in (0, 1], got {}",
                self.orth_negative_weight
            ));
        }
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            out.push(format!("{path}.lambda: must be non-negative, got {}", self.lambda));
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    #[serde(default = "default_batch")]
    pub batch_size: usize,
    #[serde(default = "default_lr0")]
    pub lr0: f64,
    /// Per-step factor; `None` picks `0.1^(1/max_steps)`.
    #[serde(default)]
    pub decay_rate: Option<f64>,
    #[serde(default = "default_max_steps")]
    pub max_steps: usize,
    #[serde(default = "default_eval_every")]
    pub eval_every: usize,
    /// Validation trajectories used for the rollout error in the history.
    #[serde(default = "default_rollout_trajectories")]
    pub rollout_trajectories: usize,
    #[serde(default)]
    pub seed: u64,
}

fn default_batch() -> usize {
    5000
}
fn default_lr0() -> f64 {
    1e-3
}
fn default_max_steps() -> usize {
    100_000
}
fn default_eval_every() -> usize {
    1000
}
fn default_rollout_trajectories() -> usize {
    100
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            batch_size: default_batch(),
            lr0: default_lr0(),
            decay_rate: None,
            max_steps: default_max_steps(),
            eval_every: default_eval_every(),
            rollout_trajectories: default_rollout_trajectories(),
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn decay(&self) -> f64 {
        self.decay_rate
            .unwrap_or_else(|| 0.1f64.powf(1.0 / self.max_steps.max(1) as f64))
    }

    /// `lr0 · decay^t`.
    pub fn learning_rate(&self, t: usize) -> f64 {
        self.lr0 * self.decay().powf(t as f64)
    }

    pub fn issues(&self, path: &str) -> Vec<String> {
        let mut out = Vec::new();
        if self.batch_size == 0 {
            out.push(format!("{path}.batch_size: must be at least 1"));
        }
        if !(self.lr0 > 0.0 && self.lr0.is_finite()) {
            out.push(format!("{path}.lr0: must be positive, got {}", self.lr0));
        }
        if let Some(r) = self.decay_rate {
            if !(r > 0.0 && r <= 1.0) {
                out.push(format!("{path}.decay_rate: must lie in (0, 1], got {r}"));
            }
        }
        if self.eval_every == 0 {
            out.push(format!("{path}.eval_every: must be positive"));
        }
        out
    }
}

/// Componentwise Huber loss.
pub fn huber(e: f64, delta: f64) -> f64 {
    if e.abs() < delta {
        0.5 * e * e
    } else {
        delta * e.abs() - 0.5 * delta * delta
    }
}

pub fn huber_derivative(e: f64, delta: f64) -> f64 {
    if e.abs() < delta {
        e
    } else {
        delta * e.signum()
    }
}

/// Asymmetric penalty `w(y; δ₂) = y²` for `y > 0`, `δ₂ y²` otherwise.
pub fn orth_weight(y: f64, delta2: f64) -> f64 {
    if y > 0.0 {
        y * y
    } else {
        delta2 * y * y
    }
}

fn orth_weight_derivative(y: f64, delta2: f64) -> f64 {
    if y > 0.0 {
        2.0 * y
    } else {
        2.0 * delta2 * y
    }
}

fn check_pairs(x: ArrayView2<'_, f64>, y: ArrayView2<'_, f64>, d: usize) -> Result<()> {
    if x.nrows() == 0 {
        return Err(Error::invalid("empty pair batch"));
    }
    if x.dim() != y.dim() {
        return Err(Error::DimensionMismatch {
            what: "pair batch",
            expected: x.nrows(),
            actual: y.nrows(),
        });
    }
    if x.ncols() != d {
        return Err(Error::DimensionMismatch {
            what: "pair batch width",
            expected: d,
            actual: x.ncols(),
        });
    }
    Ok(())
}

/// Sum over rows of the row-mean Huber loss of `e = (x̂ - y)/Δt`.
fn dyn_residual_sum(pred: &Array2<f64>, y: ArrayView2<'_, f64>, dt: f64, delta: f64, offset: usize) -> Result<f64> {
    let d = y.ncols() as f64;
    let mut total = 0.0;
    for (i, (p, t)) in pred.rows().into_iter().zip(y.rows()).enumerate() {
        let mut row = 0.0;
        for (a, b) in p.iter().zip(t.iter()) {
            let e = (a - b) / dt;
            if !e.is_finite() {
                return Err(Error::NonFinite {
                    context: "dynamics residual",
                    index: offset + i,
                });
            }
            row += huber(e, delta);
        }
        total += row / d;
    }
    Ok(total)
}

/// `L_dyn` for any decomposition: one Heun step of its drift per pair.
pub fn dyn_loss<D: Decomposition + ?Sized>(
    model: &D,
    x: ArrayView2<'_, f64>,
    y: ArrayView2<'_, f64>,
    dt: f64,
    huber_delta: f64,
) -> Result<f64> {
    check_pairs(x, y, model.dim())?;
    let field = DriftField(model);
    let mut total = 0.0;
    for start in (0..x.nrows()).step_by(CHUNK_ROWS) {
        let end = (start + CHUNK_ROWS).min(x.nrows());
        let pred = heun_unchecked(&field, x.slice(s![start..end, ..]), dt);
        total += dyn_residual_sum(&pred, y.slice(s![start..end, ..]), dt, huber_delta, start)?;
    }
    Ok(total / x.nrows() as f64)
}

fn heun_unchecked<F: crate::integrators::OdeField>(field: &F, x: ArrayView2<'_, f64>, dt: f64) -> Array2<f64> {
    let k1 = field.eval_batch(x);
    let x2 = &x + &(&k1 * dt);
    let k2 = field.eval_batch(x2.view());
    &x + &((&k1 + &k2) * (0.5 * dt))
}

/// `L_orth`: mean of `w(cos; δ₂)` over `points`.
pub fn orth_loss<D: Decomposition + ?Sized>(model: &D, points: ArrayView2<'_, f64>, delta2: f64) -> Result<f64> {
    if points.nrows() == 0 {
        return Err(Error::invalid("empty representative batch"));
    }
    let mut total = 0.0;
    for start in (0..points.nrows()).step_by(CHUNK_ROWS) {
        let end = (start + CHUNK_ROWS).min(points.nrows());
        let cos = model.orthogonality_cosines(points.slice(s![start..end, ..]))?;
        total += cos.iter().map(|&c| orth_weight(c, delta2)).sum::<f64>();
    }
    Ok(total / points.nrows() as f64)
}

/// Components of the total loss.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossValue {
    pub total: f64,
    pub dyn_loss: f64,
    pub orth_loss: f64,
}

/// `L_dyn + λ L_orth`.
pub fn total_loss<D: Decomposition + ?Sized>(
    model: &D,
    x: ArrayView2<'_, f64>,
    y: ArrayView2<'_, f64>,
    reps: ArrayView2<'_, f64>,
    dt: f64,
    cfg: &LossConfig,
) -> Result<LossValue> {
    let dyn_loss = dyn_loss(model, x, y, dt, cfg.huber_delta)?;
    let orth_loss = orth_loss(model, reps, cfg.orth_negative_weight)?;
    Ok(LossValue {
        total: dyn_loss + cfg.lambda * orth_loss,
        dyn_loss,
        orth_loss,
    })
}

/// Flat parameter vector: potential parameters followed by rotational ones.
pub fn flat_params(model: &DecompositionModel) -> Vec<f64> {
    let mut p = model.potential_net().params().to_vec();
    p.extend_from_slice(model.rotational_net().params());
    p
}

pub fn set_flat_params(model: &mut DecompositionModel, params: &[f64]) -> Result<()> {
    if params.len() != model.param_count() {
        return Err(Error::DimensionMismatch {
            what: "flat parameters",
            expected: model.param_count(),
            actual: params.len(),
        });
    }
    let (pot, rot) = model.nets_mut();
    let n = pot.params().len();
    pot.params_mut().copy_from_slice(&params[..n]);
    rot.params_mut().copy_from_slice(&params[n..]);
    Ok(())
}

/// Sums of loss terms and their parameter gradient over one chunk.
struct ChunkGrad {
    dyn_sum: f64,
    orth_sum: f64,
    grad: Vec<f64>,
}

/// Gradient of `Σ_rows h̄(e) · scale` through the Heun step.
fn dyn_chunk(
    model: &DecompositionModel,
    x: ArrayView2<'_, f64>,
    y: ArrayView2<'_, f64>,
    dt: f64,
    delta: f64,
    scale: f64,
    offset: usize,
) -> Result<ChunkGrad> {
    let pot = model.potential_net();
    let rot = model.rotational_net();
    let np = pot.params().len();
    let d = x.ncols();
    let center = model.center();

    let u1 = &x - &center;
    let tv1 = pot.tape(u1.view())?;
    let tg1 = rot.tape(u1.view())?;
    let k1 = &tg1.output() - &(&tv1.input_gradient().expect("scalar") + &(&u1 * 2.0));
    let u2 = &u1 + &(&k1 * dt);
    let tv2 = pot.tape(u2.view())?;
    let tg2 = rot.tape(u2.view())?;
    let k2 = &tg2.output() - &(&tv2.input_gradient().expect("scalar") + &(&u2 * 2.0));
    let pred = &x + &((&k1 + &k2) * (0.5 * dt));

    let mut dyn_sum = 0.0;
    let mut ebar = Array2::zeros(pred.raw_dim());
    let inv_d = 1.0 / d as f64;
    for i in 0..pred.nrows() {
        let mut row = 0.0;
        for k in 0..d {
            let e = (pred[[i, k]] - y[[i, k]]) / dt;
            if !e.is_finite() {
                return Err(Error::NonFinite {
                    context: "dynamics residual",
                    index: offset + i,
                });
            }
            row += huber(e, delta);
            // ∂/∂pred of h(e)/d with e = (pred - y)/Δt
            ebar[[i, k]] = huber_derivative(e, delta) * inv_d * scale / dt;
        }
        dyn_sum += row * inv_d;
    }

    // pred = x + Δt/2 (k1 + k2)
    let k2bar = &ebar * (0.5 * dt);
    let mut grad = vec![0.0; model.param_count()];
    let (gp, gr) = grad.split_at_mut(np);
    let neg_k2bar = -&k2bar;
    let hv = tv2
        .backward(None, Some(neg_k2bar.view()), gp, true)?
        .expect("input requested");
    let jg = tg2
        .backward(Some(k2bar.view()), None, gr, true)?
        .expect("input requested");
    // ∂k2/∂u2 contributions plus the 2u term of ∇V
    let u2bar = &neg_k2bar * 2.0 + &hv + &jg;
    let k1bar = &k2bar + &(&u2bar * dt);
    let neg_k1bar = -&k1bar;
    tv1.backward(None, Some(neg_k1bar.view()), gp, false)?;
    tg1.backward(Some(k1bar.view()), None, gr, false)?;
    Ok(ChunkGrad {
        dyn_sum,
        orth_sum: 0.0,
        grad,
    })
}

/// Gradient of `Σ_rows w(cos) · scale`.
fn orth_chunk(model: &DecompositionModel, reps: ArrayView2<'_, f64>, delta2: f64, scale: f64) -> Result<ChunkGrad> {
    let pot = model.potential_net();
    let rot = model.rotational_net();
    let np = pot.params().len();
    let u = &reps - &model.center();
    let tv = pot.tape(u.view())?;
    let tg = rot.tape(u.view())?;
    let gv = &tv.input_gradient().expect("scalar") + &(&u * 2.0);
    let g = tg.output();
    let mut gv_bar = Array2::zeros(gv.raw_dim());
    let mut g_bar = Array2::zeros(gv.raw_dim());
    let mut orth_sum = 0.0;
    for i in 0..gv.nrows() {
        let a = gv.row(i);
        let b = g.row(i);
        let n1 = a.dot(&a).sqrt();
        let n2 = b.dot(&b).sqrt();
        if n1 < COSINE_GUARD || n2 < COSINE_GUARD {
            continue;
        }
        let c = a.dot(&b) / (n1 * n2);
        orth_sum += orth_weight(c, delta2);
        let cbar = orth_weight_derivative(c, delta2) * scale;
        let mut ra = gv_bar.row_mut(i);
        Zip::from(&mut ra)
            .and(&a)
            .and(&b)
            .for_each(|o, &av, &bv| *o = cbar * (bv / (n1 * n2) - c * av / (n1 * n1)));
        let mut rb = g_bar.row_mut(i);
        Zip::from(&mut rb)
            .and(&a)
            .and(&b)
            .for_each(|o, &av, &bv| *o = cbar * (av / (n1 * n2) - c * bv / (n2 * n2)));
    }
    let mut grad = vec![0.0; model.param_count()];
    let (gp, gr) = grad.split_at_mut(np);
    tv.backward(None, Some(gv_bar.view()), gp, false)?;
    tg.backward(Some(g_bar.view()), None, gr, false)?;
    Ok(ChunkGrad {
        dyn_sum: 0.0,
        orth_sum,
        grad,
    })
}

/// Value of the total loss and its gradient with respect to [`flat_params`].
#[derive(Debug, Clone)]
pub struct LossGradient {
    pub value: LossValue,
    pub grad: Vec<f64>,
}

enum Work<'a> {
    Dyn(ArrayView2<'a, f64>, ArrayView2<'a, f64>, usize),
    Orth(ArrayView2<'a, f64>),
}

/// `L_dyn + λ L_orth` and its parameter gradient.
///
/// Chunks are evaluated in parallel on the current rayon pool and reduced in
/// chunk order.
pub fn loss_and_gradient(
    model: &DecompositionModel,
    x: ArrayView2<'_, f64>,
    y: ArrayView2<'_, f64>,
    reps: ArrayView2<'_, f64>,
    dt: f64,
    cfg: &LossConfig,
) -> Result<LossGradient> {
    check_pairs(x, y, model.dim())?;
    let with_orth = reps.nrows() > 0;
    if with_orth && reps.ncols() != model.dim() {
        return Err(Error::DimensionMismatch {
            what: "representative batch width",
            expected: model.dim(),
            actual: reps.ncols(),
        });
    }
    let n = x.nrows();
    let s_count = reps.nrows();
    let mut work = Vec::new();
    for start in (0..n).step_by(CHUNK_ROWS) {
        let end = (start + CHUNK_ROWS).min(n);
        work.push(Work::Dyn(x.slice(s![start..end, ..]), y.slice(s![start..end, ..]), start));
    }
    if with_orth {
        for start in (0..s_count).step_by(CHUNK_ROWS) {
            let end = (start + CHUNK_ROWS).min(s_count);
            work.push(Work::Orth(reps.slice(s![start..end, ..])));
        }
    }
    let dyn_scale = 1.0 / n as f64;
    let orth_scale = if with_orth { cfg.lambda / s_count as f64 } else { 0.0 };
    let parts: Vec<Result<ChunkGrad>> = work
        .par_iter()
        .map(|w| match w {
            Work::Dyn(xc, yc, off) => dyn_chunk(model, *xc, *yc, dt, cfg.huber_delta, dyn_scale, *off),
            Work::Orth(rc) => orth_chunk(model, *rc, cfg.orth_negative_weight, orth_scale),
        })
        .collect();
    let mut grad = vec![0.0; model.param_count()];
    let (mut dyn_sum, mut orth_sum) = (0.0, 0.0);
    for p in parts {
        let p = p?;
        dyn_sum += p.dyn_sum;
        orth_sum += p.orth_sum;
        for (g, v) in grad.iter_mut().zip(&p.grad) {
            *g += v;
        }
    }
    let dyn_loss = dyn_sum / n as f64;
    let orth_loss = if with_orth { orth_sum / s_count as f64 } else { 0.0 };
    Ok(LossGradient {
        value: LossValue {
            total: dyn_loss + cfg.lambda * orth_loss,
            dyn_loss,
            orth_loss,
        },
        grad,
    })
}

/// Adam with `β₁ = 0.9`, `β₂ = 0.999`, `ε = 1e-8` and bias correction.
#[derive(Debug, Clone, PartialEq)]
pub struct Adam {
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub t: u64,
}

pub const ADAM_BETA1: f64 = 0.9;
pub const ADAM_BETA2: f64 = 0.999;
pub const ADAM_EPS: f64 = 1e-8;

impl Adam {
    pub fn new(n: usize) -> Self {
        Self {
            m: vec![0.0; n],
            v: vec![0.0; n],
            t: 0,
        }
    }

    /// One update with learning rate `lr`; rejects non-finite gradients
    /// without modifying any state.
    pub fn step(&mut self, params: &mut [f64], grads: &[f64], lr: f64) -> Result<()> {
        if params.len() != self.m.len() || grads.len() != self.m.len() {
            return Err(Error::DimensionMismatch {
                what: "adam parameters",
                expected: self.m.len(),
                actual: params.len().min(grads.len()),
            });
        }
        if let Some(i) = grads.iter().position(|g| !g.is_finite()) {
            return Err(Error::NonFinite {
                context: "gradient",
                index: i,
            });
        }
        self.t += 1;
        let bc1 = 1.0 - ADAM_BETA1.powf(self.t as f64);
        let bc2 = 1.0 - ADAM_BETA2.powf(self.t as f64);
        for i in 0..params.len() {
            let g = grads[i];
            self.m[i] = ADAM_BETA1 * self.m[i] + (1.0 - ADAM_BETA1) * g;
            self.v[i] = ADAM_BETA2 * self.v[i] + (1.0 - ADAM_BETA2) * g * g;
            let mhat = self.m[i] / bc1;
            let vhat = self.v[i] / bc2;
            params[i] -= lr * mhat / (vhat.sqrt() + ADAM_EPS);
        }
        Ok(())
    }
}

/// Arrays a training run draws from.
#[derive(Debug, Clone)]
pub struct TrainingData {
    pub dt: f64,
    pub train_x: Array2<f64>,
    pub train_y: Array2<f64>,
    pub val_x: Array2<f64>,
    pub val_y: Array2<f64>,
    pub train_reps: Array2<f64>,
    pub val_reps: Array2<f64>,
    /// Validation trajectories for the rollout column of the history.
    pub val_rollout: Option<RolloutReference>,
}

/// One history row.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HistoryRecord {
    pub step: usize,
    pub lr: f64,
    pub train_loss: f64,
    pub train_dyn: f64,
    pub train_orth: f64,
    pub val_loss: f64,
    pub val_dyn: f64,
    pub val_orth: f64,
    /// Mean validation rollout error; NaN when not computed.
    pub val_rollout: f64,
}

pub const HISTORY_HEADER: &str = "step,lr,train_loss,train_dyn,train_orth,val_loss,val_dyn,val_orth,val_rollout";

pub fn history_csv(history: &[HistoryRecord]) -> String {
    let mut out = String::from(HISTORY_HEADER);
    out.push('\n');
    for h in history {
        out.push_str(&format!(
            "{},{:e},{:e},{:e},{:e},{:e},{:e},{:e},{:e}\n",
            h.step, h.lr, h.train_loss, h.train_dyn, h.train_orth, h.val_loss, h.val_dyn, h.val_orth, h.val_rollout
        ));
    }
    out
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    /// Snapshot with the best validation total loss.
    pub model: DecompositionModel,
    /// Parameters after the last step.
    pub final_model: DecompositionModel,
    pub best_step: usize,
    pub best_val_loss: f64,
    pub history: Vec<HistoryRecord>,
    pub seconds: f64,
}

/// Draws mini-batches from a fresh seeded permutation per epoch.
struct Batcher {
    order: Vec<usize>,
    pos: usize,
    batch: usize,
    rng: rand_chacha::ChaCha8Rng,
}

impl Batcher {
    fn new(n: usize, batch: usize, seed: u64, stream: u64) -> Self {
        let mut b = Self {
            order: (0..n).collect(),
            pos: 0,
            batch: batch.min(n),
            rng: rng::stream(seed, stream),
        };
        b.order.shuffle(&mut b.rng);
        b
    }

    fn next(&mut self) -> &[usize] {
        if self.pos + self.batch > self.order.len() {
            self.order.shuffle(&mut self.rng);
            self.pos = 0;
        }
        let out = &self.order[self.pos..self.pos + self.batch];
        self.pos += self.batch;
        out
    }
}

/// Validation loss of `model` on `data`.
pub fn validation_loss(model: &DecompositionModel, data: &TrainingData, cfg: &LossConfig) -> Result<LossValue> {
    if data.val_reps.nrows() == 0 {
        let d = dyn_loss(model, data.val_x.view(), data.val_y.view(), data.dt, cfg.huber_delta)?;
        return Ok(LossValue {
            total: d,
            dyn_loss: d,
            orth_loss: 0.0,
        });
    }
    total_loss(
        model,
        data.val_x.view(),
        data.val_y.view(),
        data.val_reps.view(),
        data.dt,
        cfg,
    )
}

fn mean_rollout(model: &DecompositionModel, data: &TrainingData) -> f64 {
    match &data.val_rollout {
        None => f64::NAN,
        Some(r) => match rollout_errors(model, r) {
            Ok(stats) => stats.mean,
            Err(_) => f64::INFINITY,
        },
    }
}

/// Runs Adam on mini-batches of training pairs (and a random sub-batch of at
/// most `batch_size` training representatives per step), evaluating every
/// `eval_every` steps and keeping the best validation snapshot.
pub fn train(
    mut model: DecompositionModel,
    data: &TrainingData,
    loss: &LossConfig,
    cfg: &TrainConfig,
) -> Result<TrainOutcome> {
    let mut issues = loss.issues("loss");
    issues.extend(cfg.issues("train"));
    if !issues.is_empty() {
        return Err(Error::Config(issues));
    }
    if data.train_x.nrows() == 0 || data.val_x.nrows() == 0 {
        return Err(Error::invalid("training needs non-empty train and validation splits"));
    }
    let started = Instant::now();
    let mut params = flat_params(&model);
    let mut adam = Adam::new(params.len());
    let mut pairs = Batcher::new(data.train_x.nrows(), cfg.batch_size, cfg.seed, 0);
    let mut rep_rng = rng::stream(cfg.seed, 1);
    let n_reps = data.train_reps.nrows();
    let rep_batch = cfg.batch_size.min(n_reps);

    let mut history = Vec::new();
    let mut best = model.clone();
    let mut best_step = 0;
    let mut best_val = f64::INFINITY;
    let mut last = LossValue {
        total: f64::NAN,
        dyn_loss: f64::NAN,
        orth_loss: f64::NAN,
    };

    for step in 0..=cfg.max_steps {
        if step % cfg.eval_every == 0 || step == cfg.max_steps {
            let val = validation_loss(&model, data, loss).map_err(|_| Error::Diverged {
                step,
                last_good: Box::new(best.clone()),
            })?;
            let record = HistoryRecord {
                step,
                lr: cfg.learning_rate(step),
                train_loss: last.total,
                train_dyn: last.dyn_loss,
                train_orth: last.orth_loss,
                val_loss: val.total,
                val_dyn: val.dyn_loss,
                val_orth: val.orth_loss,
                val_rollout: mean_rollout(&model, data),
            };
            log::info!(
                "step {step}: train {:.3e} val {:.3e} (dyn {:.3e}, orth {:.3e}) rollout {:.3e}",
                record.train_loss,
                record.val_loss,
                record.val_dyn,
                record.val_orth,
                record.val_rollout
            );
            history.push(record);
            if val.total < best_val {
                best_val = val.total;
                best = model.clone();
                best_step = step;
            }
        }
        if step == cfg.max_steps {
            break;
        }
        let rows = pairs.next();
        let bx = data.train_x.select(Axis(0), rows);
        let by = data.train_y.select(Axis(0), rows);
        let reps = if rep_batch == 0 {
            Array2::zeros((0, model.dim()))
        } else if rep_batch == n_reps {
            data.train_reps.clone()
        } else {
            let idx = rand::seq::index::sample(&mut rep_rng, n_reps, rep_batch).into_vec();
            data.train_reps.select(Axis(0), &idx)
        };
        let diverged = |model: &DecompositionModel| Error::Diverged {
            step,
            last_good: Box::new(model.clone()),
        };
        let lg = loss_and_gradient(&model, bx.view(), by.view(), reps.view(), data.dt, loss)
            .map_err(|_| diverged(&model))?;
        if !lg.value.total.is_finite() {
            return Err(diverged(&model));
        }
        last = lg.value;
        adam.step(&mut params, &lg.grad, cfg.learning_rate(step))
            .map_err(|_| diverged(&model))?;
        set_flat_params(&mut model, &params)?;
    }
    Ok(TrainOutcome {
        model: best,
        final_model: model,
        best_step,
        best_val_loss: best_val,
        history,
        seconds: started.elapsed().as_secs_f64(),
    })
}

/// One cell of the `(δ₁, λ)` grid search.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridPoint {
    pub huber_delta: f64,
    pub lambda: f64,
    pub val_orth: f64,
    pub val_dyn: f64,
    pub val_rollout: f64,
}

/// Trains one model per `(δ₁, λ)` pair from the same initialization and
/// reports the validation orthogonality loss and rollout error of each.
pub fn grid_search(
    init: &DecompositionModel,
    data: &TrainingData,
    base: &LossConfig,
    deltas: &[f64],
    lambdas: &[f64],
    cfg: &TrainConfig,
) -> Result<Vec<GridPoint>> {
    let mut out = Vec::new();
    for &huber_delta in deltas {
        for &lambda in lambdas {
            let loss = LossConfig {
                huber_delta,
                lambda,
                ..*base
            };
            let outcome = train(init.clone(), data, &loss, cfg)?;
            let val = validation_loss(&outcome.model, data, &loss)?;
            out.push(GridPoint {
                huber_delta,
                lambda,
                val_orth: val.orth_loss,
                val_dyn: val.dyn_loss,
                val_rollout: mean_rollout(&outcome.model, data),
            });
        }
    }
    Ok(out)
}

/// Regression of the network components onto a target decomposition:
/// minimizes the mean of `|∇V_θ - ∇V*|² + |g_θ - g*|²` over `points` with
/// Adam. Returns the final mean squared error.
pub fn prefit<D: Decomposition + ?Sized>(
    model: &mut DecompositionModel,
    target: &D,
    points: ArrayView2<'_, f64>,
    steps: usize,
    lr: f64,
) -> Result<f64> {
    let (gv_t, g_t) = target.components_batch(points)?;
    let mut params = flat_params(model);
    let mut adam = Adam::new(params.len());
    let n = points.nrows() as f64;
    let mut mse = f64::NAN;
    for step in 0..=steps {
        let np = model.potential_net().params().len();
        let u = &points - &model.center();
        let tv = model.potential_net().tape(u.view())?;
        let tg = model.rotational_net().tape(u.view())?;
        let gv = &tv.input_gradient().expect("scalar") + &(&u * 2.0);
        let rv = &gv - &gv_t;
        let rg = &tg.output() - &g_t;
        mse = (rv.iter().map(|v| v * v).sum::<f64>() + rg.iter().map(|v| v * v).sum::<f64>()) / n;
        if step == steps {
            break;
        }
        let mut grad = vec![0.0; params.len()];
        let (gp, gr) = grad.split_at_mut(np);
        tv.backward(None, Some((&rv * (2.0 / n)).view()), gp, false)?;
        tg.backward(Some((&rg * (2.0 / n)).view()), None, gr, false)?;
        adam.step(&mut params, &grad, lr)?;
        set_flat_params(model, &params)?;
    }
    Ok(mse)
}
