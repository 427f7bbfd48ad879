//! The parameterized orthogonal decomposition `f = -∇V + g`.
//!
//! The potential is `V(x) = V̂(x - c) + |x - c|²` with `V̂` a Tanh network,
//! and the rotational part is `g(x) = ĝ(x - c)`, where `c` is the centroid of
//! the training data. The learned landscape is `U(x) = 2V(x) - C`.

use std::fs;
use std::path::Path;

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis, Zip};
use serde::{Deserialize, Serialize};

use crate::diffcore::mlp::row;
use crate::diffcore::{Activation, Mlp};
use crate::integrators::OdeField;
use crate::systems::ExactDecomposition;
use crate::{rng, Error, Result};

/// Norm below which a cosine is reported as zero.
pub const COSINE_GUARD: f64 = 1e-12;

/// Anything that splits a drift into `-∇V + g`.
pub trait Decomposition: Sync {
    fn dim(&self) -> usize;

    /// `V` over a `batch × dim` array.
    fn potential_batch(&self, xs: ArrayView2<'_, f64>) -> Result<Array1<f64>>;

    /// `(∇V, g)` over a batch.
    fn components_batch(&self, xs: ArrayView2<'_, f64>) -> Result<(Array2<f64>, Array2<f64>)>;

    fn drift_batch(&self, xs: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
        let (grad, rot) = self.components_batch(xs)?;
        Ok(rot - grad)
    }

    fn potential(&self, x: &[f64]) -> Result<f64> {
        Ok(self.potential_batch(row(x))?[0])
    }

    fn potential_gradient(&self, x: &[f64]) -> Result<Vec<f64>> {
        Ok(self.components_batch(row(x))?.0.row(0).to_vec())
    }

    fn rotational(&self, x: &[f64]) -> Result<Vec<f64>> {
        Ok(self.components_batch(row(x))?.1.row(0).to_vec())
    }

    fn drift(&self, x: &[f64]) -> Result<Vec<f64>> {
        Ok(self.drift_batch(row(x))?.row(0).to_vec())
    }

    /// Cosine of the angle between `∇V` and `g` at `x`.
    fn orthogonality_cosine(&self, x: &[f64]) -> Result<f64> {
        let (grad, rot) = self.components_batch(row(x))?;
        Ok(cosine(grad.row(0), rot.row(0)))
    }

    /// Row-wise cosines over a batch.
    fn orthogonality_cosines(&self, xs: ArrayView2<'_, f64>) -> Result<Array1<f64>> {
        let (grad, rot) = self.components_batch(xs)?;
        Ok(Zip::from(grad.rows())
            .and(rot.rows())
            .map_collect(|a, b| cosine(a, b)))
    }
}

/// `a·b / (|a||b|)`, or 0 when either norm is below [`COSINE_GUARD`].
pub fn cosine(a: ArrayView1<'_, f64>, b: ArrayView1<'_, f64>) -> f64 {
    let na = a.dot(&a).sqrt();
    let nb = b.dot(&b).sqrt();
    if na < COSINE_GUARD || nb < COSINE_GUARD {
        return 0.0;
    }
    a.dot(&b) / (na * nb)
}

/// Neural decomposition: potential and rotational networks plus input centering.
#[derive(Debug, Clone, PartialEq)]
pub struct DecompositionModel {
    potential_net: Mlp,
    rotational_net: Mlp,
    center: Array1<f64>,
}

impl DecompositionModel {
    /// Fresh model with two hidden layers of `hidden_width` in both networks.
    ///
    /// The potential network always uses Tanh; `rot_activation` applies to the
    /// rotational network. The center starts at the origin.
    pub fn init(dim: usize, hidden_width: usize, rot_activation: Activation, seed: u64) -> Result<Self> {
        if dim == 0 {
            return Err(Error::invalid("model dimension must be positive"));
        }
        if hidden_width == 0 {
            return Err(Error::invalid("hidden width must be positive"));
        }
        let widths = [hidden_width, hidden_width];
        let mut potential_net = Mlp::zeros(dim, &widths, 1, Activation::Tanh)?;
        let mut rotational_net = Mlp::zeros(dim, &widths, dim, rot_activation)?;
        potential_net.init_uniform(&mut rng::stream(seed, 0));
        rotational_net.init_uniform(&mut rng::stream(seed, 1));
        Ok(Self {
            potential_net,
            rotational_net,
            center: Array1::zeros(dim),
        })
    }

    pub fn from_parts(potential_net: Mlp, rotational_net: Mlp, center: Array1<f64>) -> Result<Self> {
        let d = center.len();
        let checks = [
            ("potential input", potential_net.input_dim()),
            ("rotational input", rotational_net.input_dim()),
            ("rotational output", rotational_net.output_dim()),
        ];
        for (what, got) in checks {
            if got != d {
                return Err(Error::DimensionMismatch {
                    what,
                    expected: d,
                    actual: got,
                });
            }
        }
        if potential_net.output_dim() != 1 {
            return Err(Error::DimensionMismatch {
                what: "potential output",
                expected: 1,
                actual: potential_net.output_dim(),
            });
        }
        if potential_net.activation() != Activation::Tanh {
            return Err(Error::invalid("potential network must use tanh"));
        }
        Ok(Self {
            potential_net,
            rotational_net,
            center,
        })
    }

    pub fn potential_net(&self) -> &Mlp {
        &self.potential_net
    }

    pub fn rotational_net(&self) -> &Mlp {
        &self.rotational_net
    }

    pub fn nets_mut(&mut self) -> (&mut Mlp, &mut Mlp) {
        (&mut self.potential_net, &mut self.rotational_net)
    }

    pub fn center(&self) -> ArrayView1<'_, f64> {
        self.center.view()
    }

    pub fn set_center(&mut self, center: Array1<f64>) -> Result<()> {
        if center.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                what: "center",
                expected: self.dim(),
                actual: center.len(),
            });
        }
        self.center = center;
        Ok(())
    }

    /// Sets the center to the mean of the given states.
    pub fn fit_center(&mut self, states: ArrayView2<'_, f64>) -> Result<()> {
        if states.nrows() == 0 {
            return Err(Error::invalid("cannot center on an empty set of states"));
        }
        let mean = states.mean_axis(Axis(0)).expect("non-empty");
        self.set_center(mean)
    }

    pub fn hidden_width(&self) -> usize {
        self.potential_net.hidden_widths()[0]
    }

    pub fn rot_activation(&self) -> Activation {
        self.rotational_net.activation()
    }

    /// `x - c` row-wise.
    pub fn centered(&self, xs: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
        if xs.ncols() != self.dim() {
            return Err(Error::DimensionMismatch {
                what: "model input",
                expected: self.dim(),
                actual: xs.ncols(),
            });
        }
        Ok(&xs - &self.center)
    }

    /// Bound on `|V̂|` from the output-layer weights (Tanh activations lie in
    /// `[-1, 1]`), so `V(c + R u) ≥ R² - bound` for every unit `u`.
    pub fn potential_offset_bound(&self) -> f64 {
        self.potential_net
            .tanh_output_bound()
            .expect("potential network is tanh with scalar output")
    }

    pub fn param_count(&self) -> usize {
        self.potential_net.params().len() + self.rotational_net.params().len()
    }
}

impl Decomposition for DecompositionModel {
    fn dim(&self) -> usize {
        self.center.len()
    }

    fn potential_batch(&self, xs: ArrayView2<'_, f64>) -> Result<Array1<f64>> {
        let u = self.centered(xs)?;
        let vhat = self.potential_net.forward_batch(u.view())?;
        Ok(Zip::from(vhat.column(0))
            .and(u.rows())
            .map_collect(|&v, r| v + r.dot(&r)))
    }

    fn components_batch(&self, xs: ArrayView2<'_, f64>) -> Result<(Array2<f64>, Array2<f64>)> {
        let u = self.centered(xs)?;
        let grad = self.potential_net.input_gradient_batch(u.view())? + &u * 2.0;
        let rot = self.rotational_net.forward_batch(u.view())?;
        Ok((grad, rot))
    }
}

/// Vector field `x ↦ -∇V(x) + g(x)` of a decomposition.
pub struct DriftField<'a, D: ?Sized>(pub &'a D);

impl<D: Decomposition + ?Sized> OdeField for DriftField<'_, D> {
    fn dim(&self) -> usize {
        self.0.dim()
    }

    fn eval_into(&self, x: &[f64], dx: &mut [f64]) {
        let f = self.0.drift(x).expect("state dimension matches model");
        dx.copy_from_slice(&f);
    }

    fn eval_batch(&self, xs: ArrayView2<'_, f64>) -> Array2<f64> {
        self.0.drift_batch(xs).expect("state dimension matches model")
    }
}

/// `U(x) = 2V(x) - C`.
#[derive(Debug, Clone)]
pub struct Landscape<D> {
    pub model: D,
    pub offset_c: f64,
}

impl<D: Decomposition> Landscape<D> {
    pub fn new(model: D, offset_c: f64) -> Self {
        Self { model, offset_c }
    }

    /// Chooses `C = 2 min V` over `points`, so the minimum of `U` there is zero.
    pub fn fit(model: D, points: ArrayView2<'_, f64>) -> Result<Self> {
        let v = model.potential_batch(points)?;
        let min = v.iter().copied().fold(f64::INFINITY, f64::min);
        if !min.is_finite() {
            return Err(Error::invalid("cannot normalize a landscape on an empty or non-finite grid"));
        }
        Ok(Self {
            model,
            offset_c: 2.0 * min,
        })
    }

    pub fn value(&self, x: &[f64]) -> Result<f64> {
        Ok(2.0 * self.model.potential(x)? - self.offset_c)
    }

    pub fn values(&self, xs: ArrayView2<'_, f64>) -> Result<Array1<f64>> {
        Ok(self.model.potential_batch(xs)? * 2.0 - self.offset_c)
    }
}

pub const CHECKPOINT_VERSION: u32 = 1;

/// On-disk form of a trained model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Checkpoint {
    pub version: u32,
    pub dim: usize,
    pub hidden_width: usize,
    pub rot_activation: Activation,
    pub center: Vec<f64>,
    pub potential_params: Vec<f64>,
    pub rotational_params: Vec<f64>,
    #[serde(rename = "offset_C")]
    pub offset_c: Option<f64>,
    #[serde(default)]
    pub training_config_echo: serde_json::Value,
}

impl Checkpoint {
    pub fn from_model(model: &DecompositionModel, offset_c: Option<f64>, echo: serde_json::Value) -> Self {
        Self {
            version: CHECKPOINT_VERSION,
            dim: model.dim(),
            hidden_width: model.hidden_width(),
            rot_activation: model.rot_activation(),
            center: model.center.to_vec(),
            potential_params: model.potential_net.params().to_vec(),
            rotational_params: model.rotational_net.params().to_vec(),
            offset_c,
            training_config_echo: echo,
        }
    }

    pub fn to_model(&self) -> Result<DecompositionModel> {
        if self.version != CHECKPOINT_VERSION {
            return Err(Error::Format(format!(
                "unsupported checkpoint version {}",
                self.version
            )));
        }
        let widths = [self.hidden_width, self.hidden_width];
        let pot = Mlp::with_params(self.dim, &widths, 1, Activation::Tanh, self.potential_params.clone())?;
        let rot = Mlp::with_params(
            self.dim,
            &widths,
            self.dim,
            self.rot_activation,
            self.rotational_params.clone(),
        )?;
        DecompositionModel::from_parts(pot, rot, Array1::from(self.center.clone()))
    }
}

/// Pseudo-checkpoint selecting an exact decomposition shipped with the crate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FixtureFile {
    pub version: u32,
    pub fixture: String,
    #[serde(default)]
    pub params: std::collections::BTreeMap<String, f64>,
    #[serde(rename = "offset_C", default)]
    pub offset_c: Option<f64>,
}

/// A model loaded from disk: either a trained network or an exact fixture.
#[derive(Debug, Clone)]
pub enum LoadedModel {
    Neural(DecompositionModel),
    Exact(ExactDecomposition),
}

impl LoadedModel {
    pub fn neural(&self) -> Option<&DecompositionModel> {
        match self {
            LoadedModel::Neural(m) => Some(m),
            LoadedModel::Exact(_) => None,
        }
    }
}

impl Decomposition for ExactDecomposition {
    fn dim(&self) -> usize {
        ExactDecomposition::dim(self)
    }

    fn potential_batch(&self, xs: ArrayView2<'_, f64>) -> Result<Array1<f64>> {
        ExactDecomposition::potential_batch(self, xs)
    }

    fn components_batch(&self, xs: ArrayView2<'_, f64>) -> Result<(Array2<f64>, Array2<f64>)> {
        ExactDecomposition::components_batch(self, xs)
    }
}

impl Decomposition for LoadedModel {
    fn dim(&self) -> usize {
        match self {
            LoadedModel::Neural(m) => m.dim(),
            LoadedModel::Exact(e) => e.dim(),
        }
    }

    fn potential_batch(&self, xs: ArrayView2<'_, f64>) -> Result<Array1<f64>> {
        match self {
            LoadedModel::Neural(m) => m.potential_batch(xs),
            LoadedModel::Exact(e) => e.potential_batch(xs),
        }
    }

    fn components_batch(&self, xs: ArrayView2<'_, f64>) -> Result<(Array2<f64>, Array2<f64>)> {
        match self {
            LoadedModel::Neural(m) => m.components_batch(xs),
            LoadedModel::Exact(e) => e.components_batch(xs),
        }
    }
}

pub fn save_checkpoint(path: &Path, checkpoint: &Checkpoint) -> Result<()> {
    let text = serde_json::to_string_pretty(checkpoint)?;
    fs::write(path, text + "\n")?;
    Ok(())
}

/// Loads a checkpoint or a fixture pseudo-checkpoint; returns the model and
/// its stored normalizing constant, if any.
pub fn load_model(path: &Path) -> Result<(LoadedModel, Option<f64>)> {
    let text = fs::read_to_string(path)?;
    parse_model(&text)
}

pub fn parse_model(text: &str) -> Result<(LoadedModel, Option<f64>)> {
    let value: serde_json::Value = serde_json::from_str(text)?;
    if value.get("fixture").is_some() {
        let fixture: FixtureFile = serde_json::from_value(value)?;
        if fixture.version != CHECKPOINT_VERSION {
            return Err(Error::Format(format!(
                "unsupported fixture version {}",
                fixture.version
            )));
        }
        let exact = ExactDecomposition::from_fixture(&fixture.fixture, &fixture.params)?;
        return Ok((LoadedModel::Exact(exact), fixture.offset_c));
    }
    let ck: Checkpoint = serde_json::from_value(value)?;
    let offset = ck.offset_c;
    Ok((LoadedModel::Neural(ck.to_model()?), offset))
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn zero_model(d: usize) -> DecompositionModel {
        let pot = Mlp::zeros(d, &[4, 4], 1, Activation::Tanh).unwrap();
        let rot = Mlp::zeros(d, &[4, 4], d, Activation::Tanh).unwrap();
        DecompositionModel::from_parts(pot, rot, Array1::zeros(d)).unwrap()
    }

    #[test]
    fn init_is_deterministic_and_sized() {
        let a = DecompositionModel::init(3, 50, Activation::Tanh, 17).unwrap();
        let b = DecompositionModel::init(3, 50, Activation::Tanh, 17).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.potential_net().params().len(), 2801);
        assert_eq!(a.rotational_net().params().len(), 2903);
        // biases zero, weights bounded by 1/sqrt(fan_in)
        let w0 = a.potential_net().weights(0);
        assert!(w0.iter().all(|w| w.abs() <= 1.0 / 3f64.sqrt()));
        assert!(a.potential_net().bias(1).iter().all(|&b| b == 0.0));
        let c = DecompositionModel::init(3, 50, Activation::Tanh, 18).unwrap();
        assert_ne!(a, c);
        assert!(DecompositionModel::init(0, 50, Activation::Tanh, 1).is_err());
        assert!(DecompositionModel::init(3, 0, Activation::Tanh, 1).is_err());
    }

    #[test]
    fn quadratic_only_potential_and_drift() {
        let mut m = zero_model(2);
        assert_eq!(m.potential(&[1.0, 1.0]).unwrap(), 2.0);
        assert_eq!(m.drift(&[1.0, 2.0]).unwrap(), vec![-2.0, -4.0]);
        assert_eq!(m.potential_gradient(&[1.0, 2.0]).unwrap(), vec![2.0, 4.0]);
        assert_eq!(m.orthogonality_cosine(&[1.0, 2.0]).unwrap(), 0.0);
        m.set_center(array![1.0, 1.0]).unwrap();
        assert_eq!(m.potential(&[1.0, 1.0]).unwrap(), 0.0);
        assert_eq!(m.drift(&[1.0, 1.0]).unwrap(), vec![0.0, 0.0]);
    }

    #[test]
    fn random_model_identities() {
        let mut m = DecompositionModel::init(3, 8, Activation::ReluSquared, 5).unwrap();
        m.set_center(array![0.2, -0.1, 0.4]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..20 {
            let x: Vec<f64> = (0..3).map(|_| rng.random_range(-2.0..2.0)).collect();
            let u: Vec<f64> = x.iter().zip(m.center()).map(|(a, c)| a - c).collect();
            let quad: f64 = u.iter().map(|v| v * v).sum();
            let vhat = m.potential_net().forward(&u).unwrap()[0];
            assert_eq!(m.potential(&x).unwrap() - quad, vhat + quad - quad);
            // drift + ∇V = g exactly (same floating-point assembly)
            let f = m.drift(&x).unwrap();
            let gv = m.potential_gradient(&x).unwrap();
            let g = m.rotational_net().forward(&u).unwrap();
            for i in 0..3 {
                assert_eq!(f[i], g[i] - gv[i]);
                assert!((f[i] + gv[i] - g[i]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn cosine_formula_and_guard() {
        let c = cosine(array![1.0, 0.0].view(), array![1.0, 1.0].view());
        assert!((c - 0.5f64.sqrt()).abs() < 1e-15);
        assert_eq!(cosine(array![1.0, 0.0].view(), array![0.0, 0.0].view()), 0.0);
        assert_eq!(cosine(array![1e-13, 0.0].view(), array![1.0, 0.0].view()), 0.0);
    }

    #[test]
    fn landscape_normalizes_to_grid_minimum() {
        let m = zero_model(2);
        let grid = array![[0.5, 0.5], [1.0, -1.0], [0.1, 0.0]];
        let l = Landscape::fit(m, grid.view()).unwrap();
        assert!((l.offset_c - 0.02).abs() < 1e-15);
        let u = l.values(grid.view()).unwrap();
        assert_eq!(u.iter().copied().fold(f64::INFINITY, f64::min), 0.0);
        assert!((l.value(&[0.0, 0.0]).unwrap() + 0.02).abs() < 1e-15);
    }

    #[test]
    fn radial_growth_bound_holds() {
        let mut m = DecompositionModel::init(3, 16, Activation::Tanh, 9).unwrap();
        // make the net output large so the bound is exercised
        for p in m.nets_mut().0.params_mut() {
            *p *= 5.0;
        }
        let bound = m.potential_offset_bound();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..50 {
            let mut u: Vec<f64> = (0..3).map(|_| rng.random_range(-1.0..1.0)).collect();
            let n = u.iter().map(|v| v * v).sum::<f64>().sqrt();
            u.iter_mut().for_each(|v| *v /= n);
            let r = 20.0;
            let x: Vec<f64> = u.iter().map(|v| v * r).collect();
            assert!(m.potential(&x).unwrap() >= r * r - bound);
        }
    }

    #[test]
    fn checkpoint_round_trip() {
        let mut m = DecompositionModel::init(2, 6, Activation::ReluSquared, 3).unwrap();
        m.set_center(array![0.25, -1.5]).unwrap();
        let ck = Checkpoint::from_model(&m, Some(0.125), serde_json::json!({"lambda": 1.0}));
        let text = serde_json::to_string(&ck).unwrap();
        assert!(text.contains("\"offset_C\":0.125"));
        let (loaded, offset) = parse_model(&text).unwrap();
        assert_eq!(offset, Some(0.125));
        assert_eq!(loaded.neural().unwrap(), &m);
        let bad = text.replace("\"version\":1", "\"version\":9");
        assert!(parse_model(&bad).is_err());
        let unknown = text.replacen('{', "{\"extra\":1,", 1);
        assert!(parse_model(&unknown).is_err());
    }

    #[test]
    fn fixture_pseudo_checkpoint_loads() {
        let (m, off) = parse_model(r#"{"version":1,"fixture":"bistable3d"}"#).unwrap();
        assert!(off.is_none());
        assert_eq!(m.dim(), 3);
        assert_eq!(m.drift(&[1.0, 0.0, 0.0]).unwrap(), vec![0.0, 0.0, 0.0]);
        assert!(parse_model(r#"{"version":1,"fixture":"nope"}"#).is_err());
    }
}
