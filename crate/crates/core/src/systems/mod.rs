//! Benchmark dynamical systems: right-hand sides, initial-state samplers and
//! exact decompositions where they are known.

mod bistable;
mod brusselator;
mod ginzburg_landau;
mod limit_cycle;
mod yeast;

use std::collections::BTreeMap;

use ndarray::{Array1, Array2, ArrayView2};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::integrators::{rk4_step, OdeField};
use crate::{Error, Result};

pub use bistable::Bistable3d;
pub use brusselator::Brusselator;
pub use ginzburg_landau::GinzburgLandau;
pub use limit_cycle::LimitCycle2d;
pub use yeast::{Yeast3d, YEAST_PARAMS, YEAST_REFERENCE_STATES};

/// Draws allowed in the yeast rejection sampler before giving up.
pub const MAX_REJECTION_DRAWS: usize = 1_000_000;

/// Axis-aligned box, serialized as a list of `[lo, hi]` pairs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct BoxDomain {
    bounds: Vec<[f64; 2]>,
}

impl BoxDomain {
    pub fn new(bounds: Vec<[f64; 2]>) -> Result<Self> {
        let d = Self { bounds };
        let issues = d.issues("domain");
        if issues.is_empty() {
            Ok(d)
        } else {
            Err(Error::Config(issues))
        }
    }

    pub fn cube(dim: usize, lo: f64, hi: f64) -> Self {
        Self {
            bounds: vec![[lo, hi]; dim],
        }
    }

    pub(crate) fn issues(&self, path: &str) -> Vec<String> {
        let mut out = Vec::new();
        if self.bounds.is_empty() {
            out.push(format!("{path}: must have at least one axis"));
        }
        for (i, [lo, hi]) in self.bounds.iter().enumerate() {
            if !(lo.is_finite() && hi.is_finite() && lo < hi) {
                out.push(format!("{path}[{i}]: need finite lo < hi, got [{lo}, {hi}]"));
            }
        }
        out
    }

    pub fn dim(&self) -> usize {
        self.bounds.len()
    }

    pub fn bounds(&self) -> &[[f64; 2]] {
        &self.bounds
    }

    pub fn lower(&self, axis: usize) -> f64 {
        self.bounds[axis][0]
    }

    pub fn upper(&self, axis: usize) -> f64 {
        self.bounds[axis][1]
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        x.len() == self.dim()
            && x
                .iter()
                .zip(&self.bounds)
                .all(|(v, [lo, hi])| *v >= *lo && *v <= *hi)
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        self.bounds
            .iter()
            .map(|&[lo, hi]| rng.random_range(lo..hi))
            .collect()
    }
}

/// Serialized system selection: name, parameters and sampling box.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemSpec {
    pub name: String,
    #[serde(default)]
    pub params: BTreeMap<String, f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub domain: Option<BoxDomain>,
}

impl SystemSpec {
    pub fn named(name: &str) -> Self {
        Self {
            name: name.to_string(),
            params: BTreeMap::new(),
            domain: None,
        }
    }
}

pub const SYSTEM_NAMES: [&str; 5] = [
    "bistable3d",
    "limitcycle2d",
    "yeast3d",
    "ginzburg_landau",
    "brusselator",
];

#[derive(Debug, Clone, PartialEq)]
pub enum SystemKind {
    Bistable3d(Bistable3d),
    LimitCycle2d(LimitCycle2d),
    Yeast3d(Yeast3d),
    GinzburgLandau(GinzburgLandau),
    Brusselator(Brusselator),
}

/// A built system together with its sampling/evaluation box.
#[derive(Debug, Clone, PartialEq)]
pub struct System {
    kind: SystemKind,
    domain: BoxDomain,
}

/// Reads named parameters, applying defaults and flagging unknown keys.
struct ParamReader<'a> {
    params: &'a BTreeMap<String, f64>,
    seen: Vec<&'static str>,
    issues: Vec<String>,
}

impl<'a> ParamReader<'a> {
    fn new(params: &'a BTreeMap<String, f64>) -> Self {
        Self {
            params,
            seen: Vec::new(),
            issues: Vec::new(),
        }
    }

    fn real(&mut self, key: &'static str, default: f64) -> f64 {
        self.seen.push(key);
        self.params.get(key).copied().unwrap_or(default)
    }

    fn count(&mut self, key: &'static str, default: usize) -> usize {
        self.seen.push(key);
        match self.params.get(key) {
            None => default,
            Some(&v) if v >= 0.0 && v.fract() == 0.0 && v < 1e9 => v as usize,
            Some(&v) => {
                self.issues
                    .push(format!("system.params.{key}: must be a non-negative integer, got {v}"));
                default
            }
        }
    }

    fn finish(mut self, extra: &[&str]) -> Vec<String> {
        for key in self.params.keys() {
            if !self.seen.contains(&key.as_str()) && !extra.contains(&key.as_str()) {
                self.issues.push(format!("system.params.{key}: unknown parameter"));
            }
        }
        self.issues
    }
}

fn merge<T>(built: Result<T>, mut issues: Vec<String>) -> Result<T> {
    match built {
        Ok(v) if issues.is_empty() => Ok(v),
        Ok(_) => Err(Error::Config(issues)),
        Err(Error::Config(more)) => {
            issues.extend(more);
            Err(Error::Config(issues))
        }
        Err(e) => Err(e),
    }
}

impl SystemKind {
    pub fn from_params(name: &str, params: &BTreeMap<String, f64>) -> Result<Self> {
        let mut r = ParamReader::new(params);
        match name {
            "bistable3d" => merge(Ok(SystemKind::Bistable3d(Bistable3d)), r.finish(&[])),
            "limitcycle2d" => {
                let d = LimitCycle2d::default();
                let s = LimitCycle2d {
                    a: r.real("a", d.a),
                    b: r.real("b", d.b),
                };
                merge(Ok(SystemKind::LimitCycle2d(s)), r.finish(&[]))
            }
            "yeast3d" => merge(
                Yeast3d::from_params(params).map(SystemKind::Yeast3d),
                r.finish(&YEAST_PARAMS),
            ),
            "ginzburg_landau" => {
                let d = GinzburgLandau::default();
                let i = r.count("intervals", d.intervals);
                let delta = r.real("delta", d.delta);
                merge(
                    GinzburgLandau::new(i, delta).map(SystemKind::GinzburgLandau),
                    r.finish(&[]),
                )
            }
            "brusselator" => {
                let d = Brusselator::default();
                let i = r.count("intervals", d.intervals);
                let alpha = r.real("alpha", d.alpha);
                let a = r.real("a", d.a);
                merge(Brusselator::new(i, alpha, a).map(SystemKind::Brusselator), r.finish(&[]))
            }
            other => Err(Error::config(format!(
                "system.name: unknown system {other:?} (expected one of {})",
                SYSTEM_NAMES.join(", ")
            ))),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            SystemKind::Bistable3d(_) => "bistable3d",
            SystemKind::LimitCycle2d(_) => "limitcycle2d",
            SystemKind::Yeast3d(_) => "yeast3d",
            SystemKind::GinzburgLandau(_) => "ginzburg_landau",
            SystemKind::Brusselator(_) => "brusselator",
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            SystemKind::Bistable3d(_) | SystemKind::Yeast3d(_) => 3,
            SystemKind::LimitCycle2d(_) => 2,
            SystemKind::GinzburgLandau(g) => g.dim(),
            SystemKind::Brusselator(b) => b.dim(),
        }
    }

    pub fn default_domain(&self) -> BoxDomain {
        match self {
            SystemKind::Bistable3d(_) => BoxDomain {
                bounds: vec![[-2.0, 2.0], [-1.5, 1.5], [-1.5, 1.5]],
            },
            SystemKind::LimitCycle2d(_) => BoxDomain {
                bounds: vec![[-0.5, 2.5], [1.0, 4.0]],
            },
            SystemKind::Yeast3d(_) => BoxDomain::cube(3, 0.0, 5.0),
            SystemKind::GinzburgLandau(g) => BoxDomain::cube(g.dim(), -1.5, 1.5),
            SystemKind::Brusselator(b) => {
                let n = b.nodes_count();
                let mut bounds = vec![[0.5, 1.5]; n];
                bounds.extend(vec![[0.0, 1.0]; n]);
                BoxDomain { bounds }
            }
        }
    }

    pub fn rhs(&self, x: &[f64], dx: &mut [f64]) {
        match self {
            SystemKind::Bistable3d(_) => Bistable3d::rhs(x, dx),
            SystemKind::LimitCycle2d(s) => s.rhs(x, dx),
            SystemKind::Yeast3d(s) => s.rhs(x, dx),
            SystemKind::GinzburgLandau(s) => s.rhs(x, dx),
            SystemKind::Brusselator(s) => s.rhs(x, dx),
        }
    }
}

impl System {
    pub fn build(spec: &SystemSpec) -> Result<Self> {
        let kind = SystemKind::from_params(&spec.name, &spec.params)?;
        let domain = match &spec.domain {
            None => kind.default_domain(),
            Some(d) => {
                let mut issues = d.issues("system.domain");
                if d.dim() != kind.dim() {
                    issues.push(format!(
                        "system.domain: has {} axes but {} has dimension {}",
                        d.dim(),
                        kind.name(),
                        kind.dim()
                    ));
                }
                if !issues.is_empty() {
                    return Err(Error::Config(issues));
                }
                d.clone()
            }
        };
        Ok(Self { kind, domain })
    }

    pub fn named(name: &str) -> Result<Self> {
        Self::build(&SystemSpec::named(name))
    }

    pub fn from_kind(kind: SystemKind) -> Self {
        let domain = kind.default_domain();
        Self { kind, domain }
    }

    pub fn kind(&self) -> &SystemKind {
        &self.kind
    }

    pub fn name(&self) -> &'static str {
        self.kind.name()
    }

    pub fn domain(&self) -> &BoxDomain {
        &self.domain
    }

    /// One initial state drawn from the system's sampler.
    pub fn sample_initial<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<Vec<f64>> {
        match &self.kind {
            SystemKind::Bistable3d(_) | SystemKind::LimitCycle2d(_) => Ok(self.domain.sample(rng)),
            SystemKind::Yeast3d(s) => {
                let mut f = [0.0; 3];
                for _ in 0..MAX_REJECTION_DRAWS {
                    let x = self.domain.sample(rng);
                    s.rhs(&x, &mut f);
                    if f.iter().all(|v| v.abs() < 5.0) {
                        return Ok(x);
                    }
                }
                Err(Error::invalid(format!(
                    "yeast3d rejection sampler accepted nothing in {MAX_REJECTION_DRAWS} draws"
                )))
            }
            SystemKind::GinzburgLandau(g) => Ok(sample_gl(g, rng)),
            SystemKind::Brusselator(b) => Ok(sample_brusselator(b, rng)),
        }
    }

    /// The exact decomposition, when one is known.
    pub fn exact(&self) -> Result<Option<ExactDecomposition>> {
        Ok(match &self.kind {
            SystemKind::Bistable3d(_) => Some(ExactDecomposition::Bistable3d),
            SystemKind::LimitCycle2d(s) => Some(ExactDecomposition::LimitCycle2d(*s)),
            SystemKind::GinzburgLandau(g) => Some(ExactDecomposition::ginzburg_landau(*g)?),
            _ => None,
        })
    }
}

impl OdeField for System {
    fn dim(&self) -> usize {
        self.kind.dim()
    }
    fn eval_into(&self, x: &[f64], dx: &mut [f64]) {
        self.kind.rhs(x, dx)
    }
}

/// Normalizes `values` so that `max |v| = amplitude`; all-zero input stays zero.
fn scale_to_max(values: &mut [f64], amplitude: f64) {
    let m = values.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if m > 0.0 {
        values.iter_mut().for_each(|v| *v *= amplitude / m);
    }
}

fn sample_gl<R: Rng + ?Sized>(g: &GinzburgLandau, rng: &mut R) -> Vec<f64> {
    let coeffs: Vec<f64> = (0..4).map(|_| rng.random_range(-1.0..1.0)).collect();
    let a = rng.random_range(0.0..1.5);
    // boundary nodes are zero, so the max over interior nodes is the grid max
    let mut u: Vec<f64> = g
        .nodes()
        .iter()
        .map(|x| {
            coeffs
                .iter()
                .enumerate()
                .map(|(k, c)| c * ((k + 1) as f64 * std::f64::consts::PI * x).sin())
                .sum()
        })
        .collect();
    scale_to_max(&mut u, a);
    u
}

fn cosine_profile(nodes: &[f64], coeffs: &[f64]) -> Vec<f64> {
    nodes
        .iter()
        .map(|x| {
            coeffs
                .iter()
                .enumerate()
                .map(|(k, c)| c * (k as f64 * std::f64::consts::PI * x).cos())
                .sum()
        })
        .collect()
}

fn sample_brusselator<R: Rng + ?Sized>(b: &Brusselator, rng: &mut R) -> Vec<f64> {
    let uh: Vec<f64> = (0..5).map(|_| rng.random_range(-1.0..1.0)).collect();
    let vh: Vec<f64> = (0..5).map(|_| rng.random_range(-1.0..1.0)).collect();
    let a1 = rng.random_range(0.0..0.5);
    let a2 = rng.random_range(0.5 + a1..1.5 - a1);
    let a3 = rng.random_range(0.0..0.5);
    let a4 = rng.random_range(a3..1.0 - a3);
    let nodes = b.nodes();
    let mut u = cosine_profile(&nodes, &uh);
    let mut v = cosine_profile(&nodes, &vh);
    scale_to_max(&mut u, a1);
    scale_to_max(&mut v, a3);
    u.iter_mut().for_each(|x| *x += a2);
    v.iter_mut().for_each(|x| *x += a4);
    u.extend(v);
    u
}

/// Integrates `field` with RK4 until `‖f(x)‖∞ ≤ tol`.
pub fn relax<F: OdeField + ?Sized>(
    field: &F,
    x0: &[f64],
    dt: f64,
    tol: f64,
    max_steps: usize,
) -> Result<Vec<f64>> {
    let mut x = x0.to_vec();
    let mut f = vec![0.0; field.dim()];
    for _ in 0..max_steps {
        field.eval_into(&x, &mut f);
        if f.iter().all(|v| v.abs() <= tol) {
            return Ok(x);
        }
        x = rk4_step(field, &x, dt)?;
    }
    Err(Error::invalid(format!(
        "relaxation did not reach ‖f‖∞ ≤ {tol} within {max_steps} steps"
    )))
}

/// Exact orthogonal decompositions `f = -∇V + g` with `U = 2V - C`.
#[derive(Debug, Clone, PartialEq)]
pub enum ExactDecomposition {
    Bistable3d,
    LimitCycle2d(LimitCycle2d),
    /// Gradient system: `V = E_h`, `g = 0`, `C = 2E_h[u₋]`.
    GinzburgLandau {
        system: GinzburgLandau,
        minus: Vec<f64>,
        plus: Vec<f64>,
        offset: f64,
    },
}

impl ExactDecomposition {
    pub fn ginzburg_landau(system: GinzburgLandau) -> Result<Self> {
        let (minus, plus) = system.stable_states()?;
        let offset = 2.0 * system.energy(&minus);
        Ok(ExactDecomposition::GinzburgLandau {
            system,
            minus,
            plus,
            offset,
        })
    }

    /// Builds the decomposition named in a fixture pseudo-checkpoint.
    pub fn from_fixture(name: &str, params: &BTreeMap<String, f64>) -> Result<Self> {
        let sys = SystemKind::from_params(name, params).map_err(|e| match e {
            Error::Config(v) => Error::Format(format!("fixture: {}", v.join("; "))),
            other => other,
        })?;
        System::from_kind(sys)
            .exact()?
            .ok_or_else(|| Error::Format(format!("fixture: no exact decomposition for {name}")))
    }

    pub fn dim(&self) -> usize {
        match self {
            ExactDecomposition::Bistable3d => 3,
            ExactDecomposition::LimitCycle2d(_) => 2,
            ExactDecomposition::GinzburgLandau { system, .. } => system.dim(),
        }
    }

    /// The constant `C` making the exact `U = 2V - C` vanish on the attractor.
    pub fn offset(&self) -> f64 {
        match self {
            ExactDecomposition::GinzburgLandau { offset, .. } => *offset,
            _ => 0.0,
        }
    }

    pub fn potential_value(&self, x: &[f64]) -> f64 {
        match self {
            ExactDecomposition::Bistable3d => 0.5 * Bistable3d::quasipotential(x),
            ExactDecomposition::LimitCycle2d(s) => 0.5 * s.quasipotential(x),
            ExactDecomposition::GinzburgLandau { system, .. } => system.energy(x),
        }
    }

    /// Exact quasipotential `U(x)`.
    pub fn quasipotential(&self, x: &[f64]) -> f64 {
        match self {
            ExactDecomposition::Bistable3d => Bistable3d::quasipotential(x),
            ExactDecomposition::LimitCycle2d(s) => s.quasipotential(x),
            ExactDecomposition::GinzburgLandau { .. } => 2.0 * self.potential_value(x) - self.offset(),
        }
    }

    fn check(&self, xs: ArrayView2<'_, f64>) -> Result<()> {
        if xs.ncols() != self.dim() {
            return Err(Error::DimensionMismatch {
                what: "exact decomposition input",
                expected: self.dim(),
                actual: xs.ncols(),
            });
        }
        Ok(())
    }

    pub fn potential_batch(&self, xs: ArrayView2<'_, f64>) -> Result<Array1<f64>> {
        self.check(xs)?;
        Ok(xs
            .rows()
            .into_iter()
            .map(|r| self.potential_value(&r.to_vec()))
            .collect())
    }

    pub fn components_batch(&self, xs: ArrayView2<'_, f64>) -> Result<(Array2<f64>, Array2<f64>)> {
        self.check(xs)?;
        let (n, d) = xs.dim();
        let mut grad = Array2::zeros((n, d));
        let mut rot = Array2::zeros((n, d));
        for (i, r) in xs.rows().into_iter().enumerate() {
            let x = r.to_vec();
            match self {
                ExactDecomposition::Bistable3d => {
                    let (gv, g) = Bistable3d::decomposition(&x);
                    for k in 0..3 {
                        grad[[i, k]] = gv[k];
                        rot[[i, k]] = g[k];
                    }
                }
                ExactDecomposition::LimitCycle2d(s) => {
                    let (gv, g) = s.decomposition(&x);
                    for k in 0..2 {
                        grad[[i, k]] = gv[k];
                        rot[[i, k]] = g[k];
                    }
                }
                ExactDecomposition::GinzburgLandau { system, .. } => {
                    let mut row = grad.row_mut(i);
                    system.energy_gradient(&x, row.as_slice_mut().expect("standard layout"));
                }
            }
        }
        Ok((grad, rot))
    }
}
