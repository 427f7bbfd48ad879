//! Fixed-step explicit integrators.
//!
//! RK4 generates trajectory data; Heun's method (two-stage second-order
//! Runge-Kutta) is the one-step map inside the training loss and the
//! integrator for rollouts of learned dynamics.

use ndarray::{Array2, ArrayView2, Zip};
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// An autonomous vector field `ẋ = f(x)`.
pub trait OdeField: Sync {
    fn dim(&self) -> usize;

    fn eval_into(&self, x: &[f64], dx: &mut [f64]);

    fn eval(&self, x: &[f64]) -> Vec<f64> {
        let mut dx = vec![0.0; self.dim()];
        self.eval_into(x, &mut dx);
        dx
    }

    /// Row-wise evaluation over a `batch × dim` array.
    fn eval_batch(&self, xs: ArrayView2<'_, f64>) -> Array2<f64> {
        let mut out = Array2::zeros(xs.raw_dim());
        Zip::from(out.rows_mut())
            .and(xs.rows())
            .for_each(|mut o, x| {
                let x = x.to_vec();
                self.eval_into(&x, o.as_slice_mut().expect("standard layout"));
            });
        out
    }
}

impl<T: OdeField + ?Sized> OdeField for &T {
    fn dim(&self) -> usize {
        (**self).dim()
    }
    fn eval_into(&self, x: &[f64], dx: &mut [f64]) {
        (**self).eval_into(x, dx)
    }
    fn eval_batch(&self, xs: ArrayView2<'_, f64>) -> Array2<f64> {
        (**self).eval_batch(xs)
    }
}

/// A vector field given by a closure.
pub struct FnField<F> {
    dim: usize,
    f: F,
}

impl<F> FnField<F>
where
    F: Fn(&[f64], &mut [f64]) + Sync,
{
    pub fn new(dim: usize, f: F) -> Self {
        Self { dim, f }
    }
}

impl<F> OdeField for FnField<F>
where
    F: Fn(&[f64], &mut [f64]) + Sync,
{
    fn dim(&self) -> usize {
        self.dim
    }
    fn eval_into(&self, x: &[f64], dx: &mut [f64]) {
        (self.f)(x, dx)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Rk4,
    /// Heun's method, `x + Δt/2 (k₁ + k₂)` with `k₂ = f(x + Δt k₁)`.
    Heun,
}

impl Method {
    fn name(self) -> &'static str {
        match self {
            Method::Rk4 => "rk4",
            Method::Heun => "heun",
        }
    }
}

fn check_dt(dt: f64) -> Result<()> {
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(Error::invalid(format!("time step must be positive, got {dt}")));
    }
    Ok(())
}

fn check_stage(method: Method, stage: usize, row: usize, k: &[f64]) -> Result<()> {
    if k.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::IntegratorStage {
            method: method.name(),
            stage,
            row,
        })
    }
}

pub fn rk4_step<F: OdeField + ?Sized>(field: &F, x: &[f64], dt: f64) -> Result<Vec<f64>> {
    check_dt(dt)?;
    let n = x.len();
    let mut k1 = vec![0.0; n];
    let mut k2 = vec![0.0; n];
    let mut k3 = vec![0.0; n];
    let mut k4 = vec![0.0; n];
    let mut tmp = vec![0.0; n];

    field.eval_into(x, &mut k1);
    check_stage(Method::Rk4, 1, 0, &k1)?;
    for i in 0..n {
        tmp[i] = x[i] + 0.5 * dt * k1[i];
    }
    field.eval_into(&tmp, &mut k2);
    check_stage(Method::Rk4, 2, 0, &k2)?;
    for i in 0..n {
        tmp[i] = x[i] + 0.5 * dt * k2[i];
    }
    field.eval_into(&tmp, &mut k3);
    check_stage(Method::Rk4, 3, 0, &k3)?;
    for i in 0..n {
        tmp[i] = x[i] + dt * k3[i];
    }
    field.eval_into(&tmp, &mut k4);
    check_stage(Method::Rk4, 4, 0, &k4)?;

    let out: Vec<f64> = (0..n)
        .map(|i| x[i] + dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]))
        .collect();
    check_stage(Method::Rk4, 5, 0, &out)?;
    Ok(out)
}

pub fn rk2_step<F: OdeField + ?Sized>(field: &F, x: &[f64], dt: f64) -> Result<Vec<f64>> {
    check_dt(dt)?;
    let n = x.len();
    let mut k1 = vec![0.0; n];
    let mut k2 = vec![0.0; n];
    field.eval_into(x, &mut k1);
    check_stage(Method::Heun, 1, 0, &k1)?;
    let tmp: Vec<f64> = (0..n).map(|i| x[i] + dt * k1[i]).collect();
    field.eval_into(&tmp, &mut k2);
    check_stage(Method::Heun, 2, 0, &k2)?;
    let out: Vec<f64> = (0..n).map(|i| x[i] + 0.5 * dt * (k1[i] + k2[i])).collect();
    check_stage(Method::Heun, 3, 0, &out)?;
    Ok(out)
}

pub fn step<F: OdeField + ?Sized>(field: &F, method: Method, x: &[f64], dt: f64) -> Result<Vec<f64>> {
    match method {
        Method::Rk4 => rk4_step(field, x, dt),
        Method::Heun => rk2_step(field, x, dt),
    }
}

/// `[x0, x1, ..., x_{n_steps}]`.
pub fn rollout<F: OdeField + ?Sized>(
    field: &F,
    x0: &[f64],
    dt: f64,
    n_steps: usize,
    method: Method,
) -> Result<Vec<Vec<f64>>> {
    let mut states = Vec::with_capacity(n_steps + 1);
    states.push(x0.to_vec());
    for s in 0..n_steps {
        let next = step(field, method, &states[s], dt).map_err(|e| Error::RolloutStep {
            step: s,
            source: Box::new(e),
        })?;
        states.push(next);
    }
    Ok(states)
}

fn check_rows(method: Method, stage: usize, k: &Array2<f64>) -> Result<()> {
    for (row, r) in k.rows().into_iter().enumerate() {
        if !r.iter().all(|v| v.is_finite()) {
            return Err(Error::IntegratorStage {
                method: method.name(),
                stage,
                row,
            });
        }
    }
    Ok(())
}

/// One step applied to every row of `xs`, using the field's batched evaluation.
pub fn step_batch<F: OdeField + ?Sized>(
    field: &F,
    method: Method,
    xs: ArrayView2<'_, f64>,
    dt: f64,
) -> Result<Array2<f64>> {
    check_dt(dt)?;
    match method {
        Method::Heun => {
            let k1 = field.eval_batch(xs);
            check_rows(method, 1, &k1)?;
            let x2 = &xs + &(&k1 * dt);
            let k2 = field.eval_batch(x2.view());
            check_rows(method, 2, &k2)?;
            let out = &xs + &((&k1 + &k2) * (0.5 * dt));
            check_rows(method, 3, &out)?;
            Ok(out)
        }
        Method::Rk4 => {
            let k1 = field.eval_batch(xs);
            check_rows(method, 1, &k1)?;
            let k2 = field.eval_batch((&xs + &(&k1 * (0.5 * dt))).view());
            check_rows(method, 2, &k2)?;
            let k3 = field.eval_batch((&xs + &(&k2 * (0.5 * dt))).view());
            check_rows(method, 3, &k3)?;
            let k4 = field.eval_batch((&xs + &(&k3 * dt)).view());
            check_rows(method, 4, &k4)?;
            let mut out = xs.to_owned();
            Zip::from(&mut out)
                .and(&k1)
                .and(&k2)
                .and(&k3)
                .and(&k4)
                .for_each(|o, &a, &b, &c, &d| *o += dt / 6.0 * (a + 2.0 * b + 2.0 * c + d));
            check_rows(method, 5, &out)?;
            Ok(out)
        }
    }
}

/// Integrates every row of `x0s` for `n_steps` and returns the states at
/// steps `0, stride, 2·stride, ...` (inclusive of `n_steps` when divisible).
pub fn rollout_batch_strided<F: OdeField + ?Sized>(
    field: &F,
    x0s: ArrayView2<'_, f64>,
    dt: f64,
    n_steps: usize,
    stride: usize,
    method: Method,
) -> Result<Vec<Array2<f64>>> {
    if stride == 0 {
        return Err(Error::invalid("stride must be positive"));
    }
    let mut out = vec![x0s.to_owned()];
    let mut x = x0s.to_owned();
    for s in 1..=n_steps {
        x = step_batch(field, method, x.view(), dt).map_err(|e| Error::RolloutStep {
            step: s - 1,
            source: Box::new(e),
        })?;
        if s % stride == 0 {
            out.push(x.clone());
        }
    }
    Ok(out)
}
