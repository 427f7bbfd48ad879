//! Metrics and exported artifacts: rollout error of learned dynamics,
//! rRMSE/rMAE against exact quasipotentials, landscape grids over planes or
//! affine embeddings, orthogonality statistics, and minimum energy paths
//! from the simplified string method.

use std::fmt::Write as _;

use ndarray::{s, Array1, Array2, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::datasets::{Split, TrajectoryDataset};
use crate::decomposition::{Decomposition, DriftField};
use crate::integrators::OdeField;
use crate::systems::BoxDomain;
use crate::{Error, Result};

/// Rows evaluated per batch when sweeping grids.
const GRID_CHUNK: usize = 16_384;

/// Reference trajectories sampled every `stride` steps of size `dt`.
#[derive(Debug, Clone, PartialEq)]
pub struct RolloutReference {
    pub dt: f64,
    pub stride: usize,
    /// `states[j]` holds `x(t_j)` of every trajectory, one per row.
    pub states: Vec<Array2<f64>>,
    /// Trajectory ids of the rows.
    pub trajectories: Vec<usize>,
    /// Heun steps per `dt` in the learned rollout, so `Δt_eval = dt / substeps`.
    pub substeps: usize,
}

impl RolloutReference {
    /// Pair-left states of the trajectories in `split` (at most `limit` of
    /// them, lowest ids first), which sit on the `t_j = j·m·Δt` grid.
    pub fn from_dataset(ds: &TrajectoryDataset, split: Split, stride: usize, limit: Option<usize>) -> Result<Self> {
        if stride == 0 {
            return Err(Error::invalid("rollout stride must be positive"));
        }
        let mut ids = ds.trajectories_in(split);
        if let Some(l) = limit {
            ids.truncate(l);
        }
        let per_traj: Vec<Array2<f64>> = ids.iter().map(|&t| ds.trajectory_states(t)).collect();
        let m = per_traj.iter().map(|a| a.nrows()).min().unwrap_or(0);
        if per_traj.iter().any(|a| a.nrows() != m) {
            return Err(Error::Format("trajectories have unequal lengths".into()));
        }
        let d = ds.dim();
        let states = (0..m)
            .map(|j| {
                let mut a = Array2::zeros((ids.len(), d));
                for (r, t) in per_traj.iter().enumerate() {
                    a.row_mut(r).assign(&t.row(j));
                }
                a
            })
            .collect();
        Ok(Self {
            dt: ds.dt(),
            stride,
            states,
            trajectories: ids,
            substeps: 1,
        })
    }

    pub fn with_substeps(mut self, substeps: usize) -> Self {
        self.substeps = substeps.max(1);
        self
    }

    pub fn n_trajectories(&self) -> usize {
        self.trajectories.len()
    }
}

/// Per-trajectory rollout errors and their summary.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RolloutStats {
    pub n_trajectories: usize,
    pub mean: f64,
    pub std: f64,
    pub errors: Vec<f64>,
    /// Trajectory ids in the order of `errors`.
    pub trajectories: Vec<usize>,
    /// Trajectories whose learned rollout became non-finite (error = ∞).
    pub diverged: Vec<usize>,
    /// Set when the comparison window is empty; errors are then 0.
    pub degenerate: bool,
}

fn mean_std(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// Relative L2 error `√Σ_j |x_θ(t_j) - x(t_j)|² / √Σ_j |x(t_j)|²`, `j = 1..M`,
/// where `x_θ` is the Heun rollout of the model's drift from `x(t_0)` with
/// step `dt / substeps`.
pub fn rollout_errors<D: Decomposition + ?Sized>(model: &D, reference: &RolloutReference) -> Result<RolloutStats> {
    let n = reference.n_trajectories();
    let m = reference.states.len();
    if n == 0 || m == 0 {
        return Err(Error::invalid("rollout reference has no trajectories"));
    }
    if reference.states[0].ncols() != model.dim() {
        return Err(Error::DimensionMismatch {
            what: "rollout reference width",
            expected: model.dim(),
            actual: reference.states[0].ncols(),
        });
    }
    if m == 1 {
        return Ok(RolloutStats {
            n_trajectories: n,
            mean: 0.0,
            std: 0.0,
            errors: vec![0.0; n],
            trajectories: reference.trajectories.clone(),
            diverged: vec![],
            degenerate: true,
        });
    }
    let field = DriftField(model);
    let substeps = reference.substeps.max(1);
    let dt = reference.dt / substeps as f64;
    let mut x = reference.states[0].clone();
    let mut num = Array1::<f64>::zeros(n);
    let mut den = Array1::<f64>::zeros(n);
    for j in 1..m {
        for _ in 0..reference.stride * substeps {
            let k1 = field.eval_batch(x.view());
            let x2 = &x + &(&k1 * dt);
            let k2 = field.eval_batch(x2.view());
            x = &x + &((&k1 + &k2) * (0.5 * dt));
        }
        let truth = &reference.states[j];
        for r in 0..n {
            let mut a = 0.0;
            let mut b = 0.0;
            for k in 0..x.ncols() {
                let diff = x[[r, k]] - truth[[r, k]];
                a += diff * diff;
                b += truth[[r, k]] * truth[[r, k]];
            }
            num[r] += a;
            den[r] += b;
        }
    }
    let mut errors = Vec::with_capacity(n);
    let mut diverged = Vec::new();
    for r in 0..n {
        if num[r].is_finite() {
            errors.push(if den[r] > 0.0 { (num[r] / den[r]).sqrt() } else { num[r].sqrt() });
        } else {
            errors.push(f64::INFINITY);
            diverged.push(reference.trajectories[r]);
        }
    }
    let (mean, std) = mean_std(&errors);
    Ok(RolloutStats {
        n_trajectories: n,
        mean,
        std,
        errors,
        trajectories: reference.trajectories.clone(),
        diverged,
        degenerate: false,
    })
}

/// `(rRMSE, rMAE)` between a learned and an exact landscape on shared points.
pub fn quasipotential_errors(learned: &[f64], exact: &[f64]) -> Result<(f64, f64)> {
    if learned.len() != exact.len() {
        return Err(Error::DimensionMismatch {
            what: "landscape values",
            expected: exact.len(),
            actual: learned.len(),
        });
    }
    let (mut se, mut s2, mut ae, mut a1) = (0.0, 0.0, 0.0, 0.0);
    for (l, e) in learned.iter().zip(exact) {
        se += (e - l) * (e - l);
        s2 += e * e;
        ae += (e - l).abs();
        a1 += e.abs();
    }
    Ok(((se / s2).sqrt(), ae / a1))
}

/// Shifts `values` so their minimum is zero.
pub fn normalize_min(values: &mut [f64]) {
    let m = values.iter().copied().fold(f64::INFINITY, f64::min);
    if m.is_finite() {
        values.iter_mut().for_each(|v| *v -= m);
    }
}

/// Uniform tensor grid with `resolution[k]` nodes along axis `k`, endpoints
/// included.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    pub domain: BoxDomain,
    pub resolution: Vec<usize>,
}

impl GridSpec {
    pub fn uniform(domain: BoxDomain, per_axis: usize) -> Self {
        let resolution = vec![per_axis; domain.dim()];
        Self { domain, resolution }
    }

    pub fn issues(&self, path: &str) -> Vec<String> {
        let mut out = self.domain.issues(&format!("{path}.domain"));
        if self.resolution.len() != self.domain.dim() {
            out.push(format!(
                "{path}.resolution: has {} entries for a {}-axis domain",
                self.resolution.len(),
                self.domain.dim()
            ));
        }
        if self.resolution.iter().any(|&r| r == 0) {
            out.push(format!("{path}.resolution: entries must be positive"));
        }
        out
    }

    pub fn validate(&self) -> Result<()> {
        let issues = self.issues("grid");
        if issues.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(issues))
        }
    }

    pub fn len(&self) -> usize {
        self.resolution.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Coordinate of node `i` on `axis`.
    pub fn node(&self, axis: usize, i: usize) -> f64 {
        let n = self.resolution[axis];
        let (lo, hi) = (self.domain.lower(axis), self.domain.upper(axis));
        if n == 1 {
            0.5 * (lo + hi)
        } else {
            lo + (hi - lo) * i as f64 / (n - 1) as f64
        }
    }

    /// Point with flat index `flat`; the last axis varies fastest.
    pub fn point(&self, mut flat: usize, out: &mut [f64]) {
        for axis in (0..self.resolution.len()).rev() {
            let n = self.resolution[axis];
            out[axis] = self.node(axis, flat % n);
            flat /= n;
        }
    }

    /// Points with flat indices `start..end` as rows.
    pub fn points(&self, start: usize, end: usize) -> Array2<f64> {
        let d = self.resolution.len();
        let mut a = Array2::zeros((end - start, d));
        for (r, flat) in (start..end).enumerate() {
            self.point(flat, a.row_mut(r).as_slice_mut().expect("standard layout"));
        }
        a
    }
}

/// Evaluates `f` over the grid in fixed chunks, in flat-index order.
pub fn sweep_grid<F>(grid: &GridSpec, mut f: F) -> Result<Vec<f64>>
where
    F: FnMut(ArrayView2<'_, f64>) -> Result<Array1<f64>>,
{
    grid.validate()?;
    let n = grid.len();
    let mut out = Vec::with_capacity(n);
    for start in (0..n).step_by(GRID_CHUNK) {
        let end = (start + GRID_CHUNK).min(n);
        out.extend(f(grid.points(start, end).view())?);
    }
    Ok(out)
}

/// Learned `U_θ = 2V - C` with `C = 2 min V` over the grid, together with the
/// exact values when supplied.
#[derive(Debug, Clone, PartialEq)]
pub struct GridComparison {
    pub learned: Vec<f64>,
    pub exact: Vec<f64>,
    pub offset_c: f64,
    pub rrmse: f64,
    pub rmae: f64,
}

/// rRMSE/rMAE on a grid, with the learned landscape normalized on that grid.
pub fn grid_quasipotential_errors<D, E>(model: &D, exact: E, grid: &GridSpec) -> Result<GridComparison>
where
    D: Decomposition + ?Sized,
    E: Fn(&[f64]) -> f64,
{
    let v = sweep_grid(grid, |pts| model.potential_batch(pts))?;
    let min_v = v.iter().copied().fold(f64::INFINITY, f64::min);
    let offset_c = 2.0 * min_v;
    let learned: Vec<f64> = v.iter().map(|x| 2.0 * x - offset_c).collect();
    let mut buf = vec![0.0; grid.resolution.len()];
    let exact: Vec<f64> = (0..grid.len())
        .map(|i| {
            grid.point(i, &mut buf);
            exact(&buf)
        })
        .collect();
    let (rrmse, rmae) = quasipotential_errors(&learned, &exact)?;
    Ok(GridComparison {
        learned,
        exact,
        offset_c,
        rrmse,
        rmae,
    })
}

/// Two-parameter affine embedding `x(s₁, s₂) = origin + s₁·dir1 + s₂·dir2`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SliceSpec {
    pub names: [String; 2],
    pub origin: Vec<f64>,
    pub dir1: Vec<f64>,
    pub dir2: Vec<f64>,
    pub range1: [f64; 2],
    pub range2: [f64; 2],
    pub resolution: [usize; 2],
}

impl SliceSpec {
    /// Coordinate plane through `base` spanned by axes `a` and `b`.
    pub fn plane(base: Vec<f64>, a: usize, b: usize, range1: [f64; 2], range2: [f64; 2], resolution: [usize; 2]) -> Result<Self> {
        let d = base.len();
        if a >= d || b >= d || a == b {
            return Err(Error::invalid(format!("plane axes ({a}, {b}) invalid for dimension {d}")));
        }
        let mut origin = base;
        origin[a] = 0.0;
        origin[b] = 0.0;
        let mut dir1 = vec![0.0; d];
        let mut dir2 = vec![0.0; d];
        dir1[a] = 1.0;
        dir2[b] = 1.0;
        Ok(Self {
            names: [format!("x{}", a + 1), format!("x{}", b + 1)],
            origin,
            dir1,
            dir2,
            range1,
            range2,
            resolution,
        })
    }

    /// Two-field state on `nodes` with `u = u₀ + s₁ cos(kπx)`,
    /// `v = v₀ + s₂ cos(kπx)`; `k = 0` gives spatially constant states.
    pub fn field_mode(
        nodes: &[f64],
        mode: usize,
        base: [f64; 2],
        range1: [f64; 2],
        range2: [f64; 2],
        resolution: [usize; 2],
    ) -> Self {
        let n = nodes.len();
        let profile: Vec<f64> = nodes
            .iter()
            .map(|x| (mode as f64 * std::f64::consts::PI * x).cos())
            .collect();
        let mut origin = vec![base[0]; n];
        origin.extend(vec![base[1]; n]);
        let mut dir1 = profile.clone();
        dir1.extend(vec![0.0; n]);
        let mut dir2 = vec![0.0; n];
        dir2.extend(profile);
        if mode == 0 {
            // constant states: the coordinates are the field values themselves
            origin.iter_mut().for_each(|v| *v = 0.0);
        }
        Self {
            names: [format!("u_hat{mode}"), format!("v_hat{mode}")],
            origin,
            dir1,
            dir2,
            range1,
            range2,
            resolution,
        }
    }

    pub fn issues(&self, path: &str, dim: usize) -> Vec<String> {
        let mut out = Vec::new();
        for (name, v) in [("origin", &self.origin), ("dir1", &self.dir1), ("dir2", &self.dir2)] {
            if v.len() != dim {
                out.push(format!("{path}.{name}: has {} entries, expected {dim}", v.len()));
            }
        }
        for (name, r) in [("range1", self.range1), ("range2", self.range2)] {
            if !(r[0].is_finite() && r[1].is_finite() && r[0] <= r[1]) {
                out.push(format!("{path}.{name}: need finite lo <= hi"));
            }
        }
        if self.resolution.contains(&0) {
            out.push(format!("{path}.resolution: entries must be positive"));
        }
        out
    }

    fn coord(range: [f64; 2], n: usize, i: usize) -> f64 {
        if n == 1 {
            0.5 * (range[0] + range[1])
        } else {
            range[0] + (range[1] - range[0]) * i as f64 / (n - 1) as f64
        }
    }

    /// `(s₁, s₂)` of every node, `s₂` varying fastest.
    pub fn coordinates(&self) -> Vec<(f64, f64)> {
        let [n1, n2] = self.resolution;
        let mut out = Vec::with_capacity(n1 * n2);
        for i in 0..n1 {
            for j in 0..n2 {
                out.push((Self::coord(self.range1, n1, i), Self::coord(self.range2, n2, j)));
            }
        }
        out
    }

    pub fn embed(&self, s1: f64, s2: f64) -> Vec<f64> {
        (0..self.origin.len())
            .map(|k| self.origin[k] + s1 * self.dir1[k] + s2 * self.dir2[k])
            .collect()
    }

    pub fn states(&self) -> Array2<f64> {
        let coords = self.coordinates();
        let d = self.origin.len();
        let mut a = Array2::zeros((coords.len(), d));
        for (r, (s1, s2)) in coords.iter().enumerate() {
            let x = self.embed(*s1, *s2);
            a.row_mut(r).assign(&Array1::from(x));
        }
        a
    }
}

/// `U_θ` over a slice, normalized so its minimum on the slice is zero.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LandscapeGrid {
    pub slice: SliceSpec,
    pub offset_c: f64,
    pub coords: Vec<(f64, f64)>,
    pub values: Vec<f64>,
}

impl LandscapeGrid {
    pub fn argmin(&self) -> (f64, f64) {
        let i = self
            .values
            .iter()
            .enumerate()
            .min_by(|a, b| a.1.total_cmp(b.1))
            .map(|(i, _)| i)
            .expect("non-empty grid");
        self.coords[i]
    }

    pub fn to_csv(&self) -> String {
        let mut out = format!("{},{},U\n", self.slice.names[0], self.slice.names[1]);
        for ((a, b), u) in self.coords.iter().zip(&self.values) {
            let _ = writeln!(out, "{a:e},{b:e},{u:e}");
        }
        out
    }
}

pub fn export_landscape<D: Decomposition + ?Sized>(model: &D, slice: &SliceSpec) -> Result<LandscapeGrid> {
    let issues = slice.issues("slice", model.dim());
    if !issues.is_empty() {
        return Err(Error::Config(issues));
    }
    let states = slice.states();
    let mut v = Vec::with_capacity(states.nrows());
    for start in (0..states.nrows()).step_by(GRID_CHUNK) {
        let end = (start + GRID_CHUNK).min(states.nrows());
        v.extend(model.potential_batch(states.slice(s![start..end, ..]))?);
    }
    let min_v = v.iter().copied().fold(f64::INFINITY, f64::min);
    let offset_c = 2.0 * min_v;
    Ok(LandscapeGrid {
        slice: slice.clone(),
        offset_c,
        coords: slice.coordinates(),
        values: v.iter().map(|x| 2.0 * x - offset_c).collect(),
    })
}

/// `|cos ∠(∇V, g)|` statistics over a point set.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OrthogonalityStats {
    pub n_points: usize,
    pub mean_abs_cos: f64,
    pub max_abs_cos: f64,
}

pub fn orthogonality_stats<D: Decomposition + ?Sized>(model: &D, points: ArrayView2<'_, f64>) -> Result<OrthogonalityStats> {
    let mut sum = 0.0;
    let mut max = 0.0f64;
    for start in (0..points.nrows()).step_by(GRID_CHUNK) {
        let end = (start + GRID_CHUNK).min(points.nrows());
        for c in model.orthogonality_cosines(points.slice(s![start..end, ..]))? {
            sum += c.abs();
            max = max.max(c.abs());
        }
    }
    let n = points.nrows();
    Ok(OrthogonalityStats {
        n_points: n,
        mean_abs_cos: if n == 0 { f64::NAN } else { sum / n as f64 },
        max_abs_cos: max,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuasipotentialMetrics {
    pub rrmse: f64,
    pub rmae: f64,
    pub offset_c: f64,
    pub grid: GridSpec,
}

/// Summary written by `eval`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub system: String,
    pub rollout: Option<RolloutSummary>,
    pub quasipotential: Option<QuasipotentialMetrics>,
    pub orthogonality: Option<OrthogonalityStats>,
    #[serde(default)]
    pub notes: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RolloutSummary {
    pub n_trajectories: usize,
    pub mean: f64,
    pub std: f64,
    pub median: f64,
    pub max: f64,
    /// Trajectory id with the largest error.
    pub worst: Option<usize>,
    pub diverged: Vec<usize>,
    pub degenerate: bool,
}

impl From<&RolloutStats> for RolloutSummary {
    fn from(s: &RolloutStats) -> Self {
        let mut sorted = s.errors.clone();
        sorted.sort_by(f64::total_cmp);
        let median = match sorted.len() {
            0 => f64::NAN,
            n if n % 2 == 1 => sorted[n / 2],
            n => 0.5 * (sorted[n / 2 - 1] + sorted[n / 2]),
        };
        Self {
            n_trajectories: s.n_trajectories,
            mean: s.mean,
            std: s.std,
            median,
            max: sorted.last().copied().unwrap_or(f64::NAN),
            worst: (0..s.errors.len())
                .max_by(|&a, &b| s.errors[a].total_cmp(&s.errors[b]))
                .and_then(|i| s.trajectories.get(i).copied()),
            diverged: s.diverged.clone(),
            degenerate: s.degenerate,
        }
    }
}

/// Settings of the simplified string method.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StringConfig {
    #[serde(default = "default_images")]
    pub n_images: usize,
    #[serde(default = "default_string_iters")]
    pub max_iters: usize,
    /// Euler step; `None` leaves the choice to the caller.
    #[serde(default)]
    pub step: Option<f64>,
    #[serde(default = "default_string_tol")]
    pub tol: f64,
}

fn default_images() -> usize {
    50
}
fn default_string_iters() -> usize {
    200_000
}
fn default_string_tol() -> f64 {
    1e-8
}

impl Default for StringConfig {
    fn default() -> Self {
        Self {
            n_images: default_images(),
            max_iters: default_string_iters(),
            step: None,
            tol: default_string_tol(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StringResult {
    /// `n_images × dim`, endpoints included.
    pub images: Array2<f64>,
    pub iterations: usize,
    pub converged: bool,
    /// Largest image energy after each iteration, when an energy is supplied.
    pub max_energy_trace: Vec<f64>,
}

/// Straight line from `a` to `b` with `n` images.
pub fn linear_path(a: &[f64], b: &[f64], n: usize) -> Array2<f64> {
    let d = a.len();
    Array2::from_shape_fn((n, d), |(i, k)| {
        let t = if n == 1 { 0.0 } else { i as f64 / (n - 1) as f64 };
        a[k] + t * (b[k] - a[k])
    })
}

/// Path between two field states on `nodes` in which an interface of the
/// given `width` sweeps from left to right: image `k` takes `plus` left of
/// `s_k` and `minus` right of it, with `s_k` running over `[0, 1]`.
/// Endpoints are exactly `minus` and `plus`.
pub fn front_path(nodes: &[f64], minus: &[f64], plus: &[f64], n: usize, width: f64) -> Array2<f64> {
    let d = nodes.len();
    let mut out = Array2::zeros((n, d));
    for i in 0..n {
        for k in 0..d {
            out[[i, k]] = if i == 0 {
                minus[k]
            } else if i + 1 == n {
                plus[k]
            } else {
                let s = i as f64 / (n - 1) as f64;
                let w = 0.5 * (1.0 + ((s - nodes[k]) / width).tanh());
                w * plus[k] + (1.0 - w) * minus[k]
            };
        }
    }
    out
}

/// Cumulative arc length normalized to `[0, 1]`; `None` for a path of zero
/// length.
pub fn arc_length(path: ArrayView2<'_, f64>) -> Option<Vec<f64>> {
    let n = path.nrows();
    let mut s = vec![0.0; n];
    for i in 1..n {
        let seg = &path.row(i) - &path.row(i - 1);
        s[i] = s[i - 1] + seg.dot(&seg).sqrt();
    }
    let total = *s.last()?;
    if total <= 0.0 || !total.is_finite() {
        return None;
    }
    s.iter_mut().for_each(|v| *v /= total);
    Some(s)
}

/// Redistributes images to equal arc length by piecewise-linear interpolation.
pub fn reparameterize(path: &Array2<f64>) -> Array2<f64> {
    let n = path.nrows();
    let Some(s) = arc_length(path.view()) else {
        return path.clone();
    };
    let mut out = path.clone();
    let mut seg = 1;
    for i in 1..n.saturating_sub(1) {
        let target = i as f64 / (n - 1) as f64;
        while seg < n - 1 && s[seg] < target {
            seg += 1;
        }
        let (s0, s1) = (s[seg - 1], s[seg]);
        let t = if s1 > s0 { (target - s0) / (s1 - s0) } else { 0.0 };
        let row = &path.row(seg - 1) * (1.0 - t) + &path.row(seg) * t;
        out.row_mut(i).assign(&row);
    }
    out
}

/// Simplified string method on the gradient field `grad`: an explicit Euler
/// descent step on each interior image followed by equal-arc-length
/// reparameterization, until the largest image displacement falls below
/// `tol` or `max_iters` is reached. Endpoints stay fixed.
pub fn string_mep<G, E>(
    grad: G,
    energy: Option<E>,
    initial: Array2<f64>,
    step: f64,
    max_iters: usize,
    tol: f64,
) -> Result<StringResult>
where
    G: Fn(ArrayView2<'_, f64>) -> Result<Array2<f64>>,
    E: Fn(ArrayView2<'_, f64>) -> Result<Array1<f64>>,
{
    let n = initial.nrows();
    if n < 3 {
        return Err(Error::invalid(format!("string method needs at least 3 images, got {n}")));
    }
    if !(step > 0.0 && step.is_finite()) {
        return Err(Error::invalid(format!("string step must be positive, got {step}")));
    }
    let mut path = reparameterize(&initial);
    if arc_length(path.view()).is_none() {
        return Ok(StringResult {
            images: path,
            iterations: 0,
            converged: true,
            max_energy_trace: vec![],
        });
    }
    let mut trace = Vec::new();
    for it in 1..=max_iters {
        let interior = path.slice(s![1..n - 1, ..]);
        let g = grad(interior)?;
        let mut next = path.clone();
        {
            let mut inner = next.slice_mut(s![1..n - 1, ..]);
            inner.scaled_add(-step, &g);
        }
        let next = reparameterize(&next);
        if next.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                context: "string image",
                index: it,
            });
        }
        let moved = (&next - &path)
            .rows()
            .into_iter()
            .map(|r| r.dot(&r).sqrt())
            .fold(0.0f64, f64::max);
        path = next;
        if let Some(e) = &energy {
            let v = e(path.view())?;
            trace.push(v.iter().copied().fold(f64::NEG_INFINITY, f64::max));
        }
        if moved < tol {
            return Ok(StringResult {
                images: path,
                iterations: it,
                converged: true,
                max_energy_trace: trace,
            });
        }
    }
    Ok(StringResult {
        images: path,
        iterations: max_iters,
        converged: false,
        max_energy_trace: trace,
    })
}

/// Values of a landscape along a path against normalized arc length.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PathProfile {
    pub alpha: Vec<f64>,
    pub values: Vec<f64>,
    /// Set for zero-length paths, where `α` is reported as 0.
    pub degenerate: bool,
}

pub fn landscape_along_path(path: ArrayView2<'_, f64>, values: Vec<f64>) -> PathProfile {
    match arc_length(path) {
        Some(alpha) => PathProfile {
            alpha,
            values,
            degenerate: false,
        },
        None => PathProfile {
            alpha: vec![0.0; path.nrows()],
            values,
            degenerate: true,
        },
    }
}

/// Largest deviation between two profiles after shifting each to minimum
/// zero, as a fraction of the reference barrier `max - min`.
pub fn relative_barrier_error(learned: &[f64], reference: &[f64]) -> f64 {
    let mut a = learned.to_vec();
    let mut b = reference.to_vec();
    normalize_min(&mut a);
    normalize_min(&mut b);
    let barrier = b.iter().copied().fold(0.0f64, f64::max);
    let dev = a
        .iter()
        .zip(&b)
        .map(|(x, y)| (x - y).abs())
        .fold(0.0f64, f64::max);
    dev / barrier
}

/// True when `values` rise to a single maximum and then fall (within `tol`).
pub fn is_unimodal(values: &[f64], tol: f64) -> bool {
    let Some(peak) = values
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.total_cmp(b.1))
        .map(|(i, _)| i)
    else {
        return true;
    };
    values[..=peak].windows(2).all(|w| w[1] >= w[0] - tol) && values[peak..].windows(2).all(|w| w[1] <= w[0] + tol)
}

/// MEP CSV: `alpha, x1..xd, U_theta[, U_exact]`.
pub fn mep_csv(path: ArrayView2<'_, f64>, profile: &PathProfile, exact: Option<&[f64]>) -> String {
    let d = path.ncols();
    let mut out = String::from("alpha");
    for k in 0..d {
        let _ = write!(out, ",x{}", k + 1);
    }
    out.push_str(",U_theta");
    if exact.is_some() {
        out.push_str(",U_exact");
    }
    out.push('\n');
    for i in 0..path.nrows() {
        let _ = write!(out, "{:e}", profile.alpha[i]);
        for k in 0..d {
            let _ = write!(out, ",{:e}", path[[i, k]]);
        }
        let _ = write!(out, ",{:e}", profile.values[i]);
        if let Some(e) = exact {
            let _ = write!(out, ",{:e}", e[i]);
        }
        out.push('\n');
    }
    out
}

/// Per-point decomposition rows: `f_θ`, `∇V_θ`, `g_θ` and the cosine.
pub fn decompose_points<D: Decomposition + ?Sized>(model: &D, points: ArrayView2<'_, f64>) -> Result<Vec<DecomposedPoint>> {
    let (grad, rot) = model.components_batch(points)?;
    let cos = model.orthogonality_cosines(points)?;
    Ok((0..points.nrows())
        .map(|i| DecomposedPoint {
            x: points.row(i).to_vec(),
            drift: (&rot.row(i) - &grad.row(i)).to_vec(),
            grad_v: grad.row(i).to_vec(),
            rotational: rot.row(i).to_vec(),
            cosine: cos[i],
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecomposedPoint {
    pub x: Vec<f64>,
    pub drift: Vec<f64>,
    pub grad_v: Vec<f64>,
    pub rotational: Vec<f64>,
    pub cosine: f64,
}

pub fn decomposed_csv(rows: &[DecomposedPoint]) -> String {
    let d = rows.first().map(|r| r.x.len()).unwrap_or(0);
    let mut out = String::new();
    let heads = ["x", "f", "gradV", "g"];
    let mut first = true;
    for h in heads {
        for k in 0..d {
            if !first {
                out.push(',');
            }
            first = false;
            let _ = write!(out, "{h}{}", k + 1);
        }
    }
    out.push_str(if d == 0 { "cosine\n" } else { ",cosine\n" });
    for r in rows {
        let vals: Vec<String> = r
            .x
            .iter()
            .chain(&r.drift)
            .chain(&r.grad_v)
            .chain(&r.rotational)
            .chain(std::iter::once(&r.cosine))
            .map(|v| format!("{v:e}"))
            .collect();
        out.push_str(&vals.join(","));
        out.push('\n');
    }
    out
}

/// Reads a points file: CSV rows of numbers, `#`-comments and a non-numeric
/// header line allowed.
pub fn parse_points_csv(text: &str, dim: usize) -> Result<Array2<f64>> {
    let mut rows = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let parsed: std::result::Result<Vec<f64>, _> = line.split(',').map(|t| t.trim().parse::<f64>()).collect();
        match parsed {
            Ok(v) => {
                if v.len() != dim {
                    return Err(Error::Format(format!(
                        "line {}: {} values, expected {dim}",
                        lineno + 1,
                        v.len()
                    )));
                }
                rows.extend(v);
            }
            Err(_) if rows.is_empty() => continue,
            Err(e) => return Err(Error::Format(format!("line {}: {e}", lineno + 1))),
        }
    }
    let n = rows.len() / dim.max(1);
    Array2::from_shape_vec((n, dim), rows).map_err(|e| Error::Format(e.to_string()))
}
