//! Trajectory-pair datasets, train/validation/test splits, representative
//! sampling and the binary file formats.
//!
//! Each trajectory contributes pairs `(X(t_j), X(t_j + Δt))` at
//! `t_j = j·m·Δt` for `j = 0..=M`, with `M + 1 = ⌊T / (mΔt)⌋` pairs.

use std::collections::{BTreeMap, HashMap};
use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use ndarray::{Array2, ArrayView1, ArrayView2, Axis};
use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::integrators::rk4_step;
use crate::systems::{BoxDomain, System};
use crate::{rng, Error, Result};

pub const DATASET_MAGIC: &[u8; 4] = b"QPTD";
pub const REPRESENTATIVE_MAGIC: &[u8; 4] = b"QPRS";
pub const FORMAT_VERSION: u32 = 1;

const DATASET_HEADER_BYTES: u64 = 4 + 4 + 4 + 8 + 8 + 8;
const REPRESENTATIVE_HEADER_BYTES: u64 = 4 + 4 + 4 + 8 + 8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
    Test,
}

impl Split {
    pub const ALL: [Split; 3] = [Split::Train, Split::Val, Split::Test];

    pub fn name(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        }
    }
}

/// Sampling schedule of one generation run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GenerationParams {
    pub n_trajectories: usize,
    pub dt: f64,
    pub t_final: f64,
    pub stride: usize,
    pub seed: u64,
}

impl GenerationParams {
    /// Pairs per trajectory, `⌊T / (mΔt)⌋`.
    pub fn pairs_per_trajectory(&self) -> usize {
        (self.t_final / (self.stride as f64 * self.dt) + 1e-9).floor() as usize
    }

    pub fn issues(&self, path: &str) -> Vec<String> {
        let mut out = Vec::new();
        if self.n_trajectories == 0 {
            out.push(format!("{path}.n_trajectories: must be positive"));
        }
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            out.push(format!("{path}.dt: must be positive, got {}", self.dt));
        }
        if self.stride == 0 {
            out.push(format!("{path}.stride: must be positive"));
        }
        if !(self.t_final > 0.0 && self.t_final.is_finite()) {
            out.push(format!("{path}.t_final: must be positive, got {}", self.t_final));
        } else if self.stride > 0 && self.dt > 0.0 && self.pairs_per_trajectory() == 0 {
            out.push(format!(
                "{path}.t_final: {} is shorter than one sampling interval m·Δt = {}",
                self.t_final,
                self.stride as f64 * self.dt
            ));
        }
        out
    }
}

/// Pairs `(x, x_next)` from `n_trajectories` trajectories, stored row-wise in
/// trajectory order.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryDataset {
    dt: f64,
    n_trajectories: usize,
    trajectory: Vec<u32>,
    x: Array2<f64>,
    x_next: Array2<f64>,
    split: Option<Vec<Split>>,
}

impl TrajectoryDataset {
    pub fn new(
        dt: f64,
        n_trajectories: usize,
        trajectory: Vec<u32>,
        x: Array2<f64>,
        x_next: Array2<f64>,
    ) -> Result<Self> {
        if x.dim() != x_next.dim() {
            return Err(Error::DimensionMismatch {
                what: "dataset x_next rows",
                expected: x.nrows(),
                actual: x_next.nrows(),
            });
        }
        if trajectory.len() != x.nrows() {
            return Err(Error::DimensionMismatch {
                what: "dataset trajectory ids",
                expected: x.nrows(),
                actual: trajectory.len(),
            });
        }
        if let Some(&bad) = trajectory.iter().find(|&&t| t as usize >= n_trajectories) {
            return Err(Error::Format(format!(
                "trajectory id {bad} out of range for {n_trajectories} trajectories"
            )));
        }
        Ok(Self {
            dt,
            n_trajectories,
            trajectory,
            x,
            x_next,
            split: None,
        })
    }

    pub fn dim(&self) -> usize {
        self.x.ncols()
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn n_pairs(&self) -> usize {
        self.x.nrows()
    }

    pub fn n_trajectories(&self) -> usize {
        self.n_trajectories
    }

    pub fn trajectory_ids(&self) -> &[u32] {
        &self.trajectory
    }

    pub fn x(&self) -> ArrayView2<'_, f64> {
        self.x.view()
    }

    pub fn x_next(&self) -> ArrayView2<'_, f64> {
        self.x_next.view()
    }

    /// Per-trajectory split labels, if assigned.
    pub fn split_labels(&self) -> Option<&[Split]> {
        self.split.as_deref()
    }

    /// Assigns split labels: shuffle trajectory ids with `seed`, first 70%
    /// train, next 20% validation, rest test (rounded to nearest).
    pub fn assign_split(&mut self, seed: u64) {
        self.split = Some(split_labels(self.n_trajectories, seed));
    }

    pub fn split_of(&self, trajectory: usize) -> Option<Split> {
        self.split.as_ref().map(|s| s[trajectory])
    }

    /// Row indices of the pairs belonging to `split`; all rows when unsplit.
    pub fn rows_in(&self, split: Split) -> Vec<usize> {
        match &self.split {
            None => (0..self.n_pairs()).collect(),
            Some(labels) => (0..self.n_pairs())
                .filter(|&i| labels[self.trajectory[i] as usize] == split)
                .collect(),
        }
    }

    /// Trajectory ids in `split`, ascending.
    pub fn trajectories_in(&self, split: Split) -> Vec<usize> {
        match &self.split {
            None => (0..self.n_trajectories).collect(),
            Some(labels) => (0..self.n_trajectories).filter(|&t| labels[t] == split).collect(),
        }
    }

    /// `(x, x_next)` restricted to `split`.
    pub fn pairs(&self, split: Split) -> (Array2<f64>, Array2<f64>) {
        let rows = self.rows_in(split);
        (self.x.select(Axis(0), &rows), self.x_next.select(Axis(0), &rows))
    }

    /// Every stored state of `split`: the `x` rows followed by the `x_next` rows.
    pub fn states(&self, split: Split) -> Array2<f64> {
        let (x, y) = self.pairs(split);
        ndarray::concatenate(Axis(0), &[x.view(), y.view()]).expect("same width")
    }

    /// Pair-left states of one trajectory in time order.
    pub fn trajectory_states(&self, trajectory: usize) -> Array2<f64> {
        let rows: Vec<usize> = (0..self.n_pairs())
            .filter(|&i| self.trajectory[i] as usize == trajectory)
            .collect();
        self.x.select(Axis(0), &rows)
    }
}

/// Per-trajectory labels for `n` trajectories.
pub fn split_labels(n: usize, seed: u64) -> Vec<Split> {
    let mut ids: Vec<usize> = (0..n).collect();
    ids.shuffle(&mut rng::stream(seed, 0));
    let n_train = (0.7 * n as f64).round() as usize;
    let n_val = ((0.2 * n as f64).round() as usize).min(n - n_train);
    let mut labels = vec![Split::Test; n];
    for (rank, &id) in ids.iter().enumerate() {
        labels[id] = if rank < n_train {
            Split::Train
        } else if rank < n_train + n_val {
            Split::Val
        } else {
            Split::Test
        };
    }
    labels
}

/// Samples initial states and integrates each trajectory with RK4.
///
/// Trajectory `i` draws its initial state from stream `i` of `seed`, so the
/// result does not depend on how work is scheduled across threads.
pub fn generate(system: &System, params: &GenerationParams) -> Result<TrajectoryDataset> {
    let issues = params.issues("data");
    if !issues.is_empty() {
        return Err(Error::Config(issues));
    }
    if params.n_trajectories > u32::MAX as usize {
        return Err(Error::config("data.n_trajectories: exceeds u32 range"));
    }
    let d = system.kind().dim();
    let per = params.pairs_per_trajectory();
    let trajectories: Vec<Result<Vec<Vec<f64>>>> = (0..params.n_trajectories)
        .into_par_iter()
        .map(|i| {
            simulate(system, params, per, i as u64).map_err(|e| Error::TrajectoryDiverged {
                trajectory: i,
                source: Box::new(e),
            })
        })
        .collect();
    let n_pairs = per * params.n_trajectories;
    let mut x = Array2::zeros((n_pairs, d));
    let mut x_next = Array2::zeros((n_pairs, d));
    let mut ids = Vec::with_capacity(n_pairs);
    for (i, t) in trajectories.into_iter().enumerate() {
        let states = t?;
        for j in 0..per {
            let row = i * per + j;
            x.row_mut(row).assign(&ArrayView1::from(&states[2 * j][..]));
            x_next.row_mut(row).assign(&ArrayView1::from(&states[2 * j + 1][..]));
            ids.push(i as u32);
        }
    }
    TrajectoryDataset::new(params.dt, params.n_trajectories, ids, x, x_next)
}

/// States `X(t_0), X(t_0+Δt), X(t_1), X(t_1+Δt), …` of one trajectory.
fn simulate(system: &System, params: &GenerationParams, per: usize, index: u64) -> Result<Vec<Vec<f64>>> {
    let mut rng = rng::stream(params.seed, index);
    let mut state = system.sample_initial(&mut rng)?;
    let mut out = Vec::with_capacity(2 * per);
    for j in 0..per {
        if j > 0 {
            for _ in 0..params.stride - 1 {
                state = rk4_step(system, &state, params.dt)?;
            }
        }
        out.push(state.clone());
        state = rk4_step(system, &state, params.dt)?;
        out.push(state.clone());
    }
    Ok(out)
}

/// Points selected by greedy representative sampling with radius `r`.
#[derive(Debug, Clone, PartialEq)]
pub struct RepresentativeSet {
    pub radius: f64,
    pub points: Array2<f64>,
}

impl RepresentativeSet {
    pub fn len(&self) -> usize {
        self.points.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.points.nrows() == 0
    }

    pub fn dim(&self) -> usize {
        self.points.ncols()
    }
}

/// Greedy sampling: repeatedly pick a uniformly random remaining point, keep it
/// and delete every remaining point closer than `r` to it.
pub fn representative_sample(states: ArrayView2<'_, f64>, r: f64, seed: u64) -> Result<RepresentativeSet> {
    let mut order: Vec<usize> = (0..states.nrows()).collect();
    order.shuffle(&mut rng::stream(seed, 0));
    representative_sample_ordered(states, r, &order)
}

/// Greedy sampling with a fixed selection order: the next selected point is the
/// first entry of `order` that has not been deleted.
pub fn representative_sample_ordered(
    states: ArrayView2<'_, f64>,
    r: f64,
    order: &[usize],
) -> Result<RepresentativeSet> {
    if !(r > 0.0 && r.is_finite()) {
        return Err(Error::invalid(format!("radius must be positive, got {r}")));
    }
    let n = states.nrows();
    if order.len() != n {
        return Err(Error::DimensionMismatch {
            what: "selection order",
            expected: n,
            actual: order.len(),
        });
    }
    let d = states.ncols();
    if n == 0 {
        return Ok(RepresentativeSet {
            radius: r,
            points: Array2::zeros((0, d)),
        });
    }
    let index = SpatialHash::build(states, r);
    let r2 = r * r;
    let mut alive = vec![true; n];
    let mut chosen = Vec::new();
    let mut candidates = Vec::new();
    for &i in order {
        if !alive[i] {
            continue;
        }
        chosen.push(i);
        let xi = states.row(i);
        index.neighbours(states.row(i), &mut candidates);
        for &j in &candidates {
            if alive[j] {
                let dist2: f64 = xi
                    .iter()
                    .zip(states.row(j).iter())
                    .map(|(a, b)| (a - b) * (a - b))
                    .sum();
                if dist2 < r2 {
                    alive[j] = false;
                }
            }
        }
        alive[i] = false;
    }
    Ok(RepresentativeSet {
        radius: r,
        points: states.select(Axis(0), &chosen),
    })
}

/// Uniform grid of cell size `r` over up to three highest-variance axes.
struct SpatialHash {
    axes: Vec<usize>,
    inv_cell: f64,
    cells: HashMap<[i64; 3], Vec<usize>>,
}

impl SpatialHash {
    fn build(states: ArrayView2<'_, f64>, r: f64) -> Self {
        let d = states.ncols();
        let mean = states.mean_axis(Axis(0)).expect("non-empty");
        let mut var: Vec<(f64, usize)> = (0..d)
            .map(|k| {
                let v = states
                    .column(k)
                    .iter()
                    .map(|x| (x - mean[k]) * (x - mean[k]))
                    .sum::<f64>();
                (v, k)
            })
            .collect();
        var.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
        let axes: Vec<usize> = var.iter().take(3).map(|&(_, k)| k).collect();
        let mut s = Self {
            axes,
            inv_cell: 1.0 / r,
            cells: HashMap::new(),
        };
        for (i, row) in states.rows().into_iter().enumerate() {
            let key = s.key(row);
            s.cells.entry(key).or_default().push(i);
        }
        s
    }

    fn key(&self, x: ArrayView1<'_, f64>) -> [i64; 3] {
        let mut key = [0i64; 3];
        for (slot, &axis) in self.axes.iter().enumerate() {
            key[slot] = (x[axis] * self.inv_cell).floor() as i64;
        }
        key
    }

    /// Indices in the 3^k block of cells around `x`, ascending.
    fn neighbours(&self, x: ArrayView1<'_, f64>, out: &mut Vec<usize>) {
        out.clear();
        let base = self.key(x);
        let k = self.axes.len();
        let span = |slot: usize| if slot < k { -1..=1 } else { 0..=0 };
        for a in span(0) {
            for b in span(1) {
                for c in span(2) {
                    let key = [base[0] + a, base[1] + b, base[2] + c];
                    if let Some(v) = self.cells.get(&key) {
                        out.extend_from_slice(v);
                    }
                }
            }
        }
        out.sort_unstable();
    }
}

/// Sidecar metadata written next to a dataset file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetMetadata {
    pub format_version: u32,
    pub system: String,
    pub params: BTreeMap<String, f64>,
    pub domain: BoxDomain,
    pub n_trajectories: usize,
    pub dt: f64,
    pub t_final: f64,
    pub stride: usize,
    pub pairs_per_trajectory: usize,
    pub pair_times: String,
    pub integrator: String,
    pub seed: u64,
    pub split_seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub config_hash: Option<String>,
}

impl DatasetMetadata {
    pub fn describe(
        system: &System,
        params: &BTreeMap<String, f64>,
        gen: &GenerationParams,
        split_seed: u64,
    ) -> Self {
        Self {
            format_version: FORMAT_VERSION,
            system: system.name().to_string(),
            params: params.clone(),
            domain: system.domain().clone(),
            n_trajectories: gen.n_trajectories,
            dt: gen.dt,
            t_final: gen.t_final,
            stride: gen.stride,
            pairs_per_trajectory: gen.pairs_per_trajectory(),
            pair_times: "t_j = j*stride*dt and t_j + dt for j = 0..pairs_per_trajectory-1".into(),
            integrator: "rk4".into(),
            seed: gen.seed,
            split_seed,
            config_hash: None,
        }
    }
}

/// Path of the metadata sidecar for a dataset file.
pub fn metadata_path(dataset: &Path) -> PathBuf {
    let mut s = dataset.as_os_str().to_owned();
    s.push(".meta.json");
    PathBuf::from(s)
}

pub fn write_metadata(dataset: &Path, meta: &DatasetMetadata) -> Result<()> {
    fs::write(metadata_path(dataset), serde_json::to_string_pretty(meta)? + "\n")?;
    Ok(())
}

pub fn read_metadata(dataset: &Path) -> Result<DatasetMetadata> {
    let text = fs::read_to_string(metadata_path(dataset))?;
    Ok(serde_json::from_str(&text)?)
}

fn put_f64s<W: Write>(w: &mut W, values: impl Iterator<Item = f64>) -> Result<()> {
    for v in values {
        w.write_all(&v.to_le_bytes())?;
    }
    Ok(())
}

pub fn write_dataset<W: Write>(w: &mut W, ds: &TrajectoryDataset) -> Result<()> {
    let d = u32::try_from(ds.dim()).map_err(|_| Error::invalid("dimension exceeds u32"))?;
    w.write_all(DATASET_MAGIC)?;
    w.write_all(&FORMAT_VERSION.to_le_bytes())?;
    w.write_all(&d.to_le_bytes())?;
    w.write_all(&(ds.n_pairs() as u64).to_le_bytes())?;
    w.write_all(&(ds.n_trajectories as u64).to_le_bytes())?;
    w.write_all(&ds.dt.to_le_bytes())?;
    for i in 0..ds.n_pairs() {
        w.write_all(&ds.trajectory[i].to_le_bytes())?;
        put_f64s(w, ds.x.row(i).iter().copied())?;
        put_f64s(w, ds.x_next.row(i).iter().copied())?;
    }
    Ok(())
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take<const N: usize>(&mut self) -> [u8; N] {
        let out: [u8; N] = self.bytes[self.pos..self.pos + N].try_into().expect("length checked");
        self.pos += N;
        out
    }
    fn u32(&mut self) -> u32 {
        u32::from_le_bytes(self.take())
    }
    fn u64(&mut self) -> u64 {
        u64::from_le_bytes(self.take())
    }
    fn f64(&mut self) -> f64 {
        f64::from_le_bytes(self.take())
    }
}

fn check_magic(bytes: &[u8], magic: &[u8; 4], header: u64) -> Result<()> {
    if (bytes.len() as u64) < header {
        if bytes.len() >= 4 && &bytes[..4] != magic {
            return Err(Error::Format(format!("bad magic, expected {:?}", String::from_utf8_lossy(magic))));
        }
        return Err(Error::Truncated {
            expected: header,
            actual: bytes.len() as u64,
        });
    }
    if &bytes[..4] != magic {
        return Err(Error::Format(format!("bad magic, expected {:?}", String::from_utf8_lossy(magic))));
    }
    let version = u32::from_le_bytes(bytes[4..8].try_into().expect("length checked"));
    if version != FORMAT_VERSION {
        return Err(Error::Format(format!(
            "unsupported version {version}, expected {FORMAT_VERSION}"
        )));
    }
    Ok(())
}

fn check_length(actual: usize, expected: u64) -> Result<()> {
    let actual = actual as u64;
    match actual.cmp(&expected) {
        std::cmp::Ordering::Less => Err(Error::Truncated { expected, actual }),
        std::cmp::Ordering::Greater => Err(Error::Format(format!(
            "{} trailing bytes after payload",
            actual - expected
        ))),
        std::cmp::Ordering::Equal => Ok(()),
    }
}

pub fn parse_dataset(bytes: &[u8]) -> Result<TrajectoryDataset> {
    check_magic(bytes, DATASET_MAGIC, DATASET_HEADER_BYTES)?;
    let mut c = Cursor { bytes, pos: 8 };
    let d = c.u32() as usize;
    let n_pairs = c.u64();
    let n_traj = c.u64();
    let dt = c.f64();
    let per_pair = 4 + 16 * d as u64;
    let expected = n_pairs
        .checked_mul(per_pair)
        .and_then(|p| p.checked_add(DATASET_HEADER_BYTES))
        .ok_or_else(|| Error::Format("header sizes overflow".into()))?;
    check_length(bytes.len(), expected)?;
    let n = n_pairs as usize;
    let mut ids = Vec::with_capacity(n);
    let mut x = Array2::zeros((n, d));
    let mut y = Array2::zeros((n, d));
    for i in 0..n {
        ids.push(c.u32());
        for k in 0..d {
            x[[i, k]] = c.f64();
        }
        for k in 0..d {
            y[[i, k]] = c.f64();
        }
    }
    TrajectoryDataset::new(dt, n_traj as usize, ids, x, y)
}

pub fn save_dataset(path: &Path, ds: &TrajectoryDataset) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    write_dataset(&mut w, ds)?;
    w.flush()?;
    Ok(())
}

/// Loads a dataset file; when a metadata sidecar exists, its split seed is
/// applied.
pub fn load_dataset(path: &Path) -> Result<TrajectoryDataset> {
    let mut bytes = Vec::new();
    BufReader::new(File::open(path)?).read_to_end(&mut bytes)?;
    let mut ds = parse_dataset(&bytes)?;
    if metadata_path(path).exists() {
        let meta = read_metadata(path)?;
        if meta.n_trajectories != ds.n_trajectories {
            return Err(Error::Format(format!(
                "metadata lists {} trajectories, file has {}",
                meta.n_trajectories, ds.n_trajectories
            )));
        }
        ds.assign_split(meta.split_seed);
    }
    Ok(ds)
}

pub fn write_representatives<W: Write>(w: &mut W, set: &RepresentativeSet) -> Result<()> {
    let d = u32::try_from(set.dim()).map_err(|_| Error::invalid("dimension exceeds u32"))?;
    w.write_all(REPRESENTATIVE_MAGIC)?;
    w.write_all(&FORMAT_VERSION.to_le_bytes())?;
    w.write_all(&d.to_le_bytes())?;
    w.write_all(&set.radius.to_le_bytes())?;
    w.write_all(&(set.len() as u64).to_le_bytes())?;
    put_f64s(w, set.points.iter().copied())
}

pub fn parse_representatives(bytes: &[u8]) -> Result<RepresentativeSet> {
    check_magic(bytes, REPRESENTATIVE_MAGIC, REPRESENTATIVE_HEADER_BYTES)?;
    let mut c = Cursor { bytes, pos: 8 };
    let d = c.u32() as usize;
    let radius = c.f64();
    let count = c.u64();
    let expected = count
        .checked_mul(8 * d as u64)
        .and_then(|p| p.checked_add(REPRESENTATIVE_HEADER_BYTES))
        .ok_or_else(|| Error::Format("header sizes overflow".into()))?;
    check_length(bytes.len(), expected)?;
    let n = count as usize;
    let points = Array2::from_shape_fn((n, d), |_| c.f64());
    Ok(RepresentativeSet { radius, points })
}

pub fn save_representatives(path: &Path, set: &RepresentativeSet) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    write_representatives(&mut w, set)?;
    w.flush()?;
    Ok(())
}

pub fn load_representatives(path: &Path) -> Result<RepresentativeSet> {
    let bytes = fs::read(path)?;
    parse_representatives(&bytes)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn ex1_params(n: usize) -> GenerationParams {
        GenerationParams {
            n_trajectories: n,
            dt: 1e-2,
            t_final: 5.0,
            stride: 10,
            seed: 7,
        }
    }

    #[test]
    fn pair_counts() {
        assert_eq!(ex1_params(2000).pairs_per_trajectory(), 50);
        let ex5 = GenerationParams {
            n_trajectories: 20_000,
            dt: 1e-4,
            t_final: 2.0,
            stride: 200,
            seed: 0,
        };
        assert_eq!(ex5.pairs_per_trajectory() * 2 * ex5.n_trajectories, 4_000_000);
        let tiny = GenerationParams {
            n_trajectories: 1,
            dt: 0.1,
            t_final: 0.1,
            stride: 1,
            seed: 0,
        };
        assert_eq!(tiny.pairs_per_trajectory(), 1);
    }

    #[test]
    fn generated_pairs_follow_rk4() {
        let sys = System::named("bistable3d").unwrap();
        let p = ex1_params(5);
        let ds = generate(&sys, &p).unwrap();
        assert_eq!(ds.n_pairs(), 250);
        assert_eq!(ds.trajectory_ids()[49], 0);
        assert_eq!(ds.trajectory_ids()[50], 1);
        for i in 0..ds.n_pairs() {
            let x = ds.x().row(i).to_vec();
            assert_eq!(rk4_step(&sys, &x, p.dt).unwrap(), ds.x_next().row(i).to_vec());
        }
        // consecutive pairs are m steps apart
        let mut s = ds.x().row(3).to_vec();
        for _ in 0..10 {
            s = rk4_step(&sys, &s, p.dt).unwrap();
        }
        assert_eq!(s, ds.x().row(4).to_vec());
        assert_eq!(generate(&sys, &p).unwrap(), ds);
    }

    #[test]
    fn divergence_names_trajectory() {
        let sys = System::named("bistable3d").unwrap();
        let p = GenerationParams {
            n_trajectories: 3,
            dt: 10.0,
            t_final: 1000.0,
            stride: 1,
            seed: 1,
        };
        match generate(&sys, &p) {
            Err(Error::TrajectoryDiverged { trajectory, .. }) => assert_eq!(trajectory, 0),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn split_proportions() {
        let count = |n: usize| {
            let l = split_labels(n, 3);
            Split::ALL.map(|s| l.iter().filter(|&&x| x == s).count())
        };
        assert_eq!(count(10), [7, 2, 1]);
        assert_eq!(count(2000), [1400, 400, 200]);
        assert_eq!(split_labels(100, 9), split_labels(100, 9));
        assert_ne!(split_labels(100, 9), split_labels(100, 10));
    }

    #[test]
    fn algorithm_one_ordered_example() {
        let pts = array![[0.0], [0.05], [0.2]];
        let set = representative_sample_ordered(pts.view(), 0.1, &[0, 1, 2]).unwrap();
        assert_eq!(set.points, array![[0.0], [0.2]]);
        let all = representative_sample(pts.view(), 0.01, 1).unwrap();
        assert_eq!(all.len(), 3);
        let one = representative_sample(pts.view(), 1.0, 1).unwrap();
        assert_eq!(one.len(), 1);
        assert!(representative_sample(pts.view(), 0.0, 1).is_err());
    }

    #[test]
    fn dataset_round_trip_and_errors() {
        let sys = System::named("limitcycle2d").unwrap();
        let ds = generate(&sys, &ex1_params(3)).unwrap();
        let mut bytes = Vec::new();
        write_dataset(&mut bytes, &ds).unwrap();
        assert_eq!(parse_dataset(&bytes).unwrap(), ds);

        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(matches!(parse_dataset(&bad), Err(Error::Format(_))));
        let mut bad = bytes.clone();
        bad[4] = 9;
        assert!(matches!(parse_dataset(&bad), Err(Error::Format(_))));
        assert!(matches!(
            parse_dataset(&bytes[..bytes.len() - 3]),
            Err(Error::Truncated { .. })
        ));
        assert!(matches!(parse_dataset(&bytes[..10]), Err(Error::Truncated { .. })));

        let empty = TrajectoryDataset::new(0.1, 0, vec![], Array2::zeros((0, 2)), Array2::zeros((0, 2))).unwrap();
        let mut bytes = Vec::new();
        write_dataset(&mut bytes, &empty).unwrap();
        assert_eq!(bytes.len() as u64, DATASET_HEADER_BYTES);
        assert_eq!(parse_dataset(&bytes).unwrap(), empty);
    }

    #[test]
    fn representative_round_trip() {
        let set = RepresentativeSet {
            radius: 0.25,
            points: array![[1.0, 2.0], [3.0, -4.5]],
        };
        let mut bytes = Vec::new();
        write_representatives(&mut bytes, &set).unwrap();
        assert_eq!(parse_representatives(&bytes).unwrap(), set);
        assert!(parse_representatives(&bytes[..bytes.len() - 1]).is_err());
        let mut bad = bytes;
        bad[3] = b'D';
        assert!(parse_representatives(&bad).is_err());
    }

    #[test]
    fn file_round_trip_applies_split() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("d.qptd");
        let sys = System::named("bistable3d").unwrap();
        let gen = ex1_params(10);
        let ds = generate(&sys, &gen).unwrap();
        save_dataset(&path, &ds).unwrap();
        write_metadata(&path, &DatasetMetadata::describe(&sys, &BTreeMap::new(), &gen, 5)).unwrap();
        let back = load_dataset(&path).unwrap();
        assert_eq!(back.split_labels().unwrap(), &split_labels(10, 5)[..]);
        assert_eq!(back.x(), ds.x());
        let (x, _) = back.pairs(Split::Test);
        assert_eq!(x.nrows(), 50);
        assert_eq!(back.states(Split::Train).nrows(), 700);
    }
}
