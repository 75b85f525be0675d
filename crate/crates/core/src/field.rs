//! Ground-truth Gaussian random fields on square grids and sampling from them.
//!
//! Fields are zero-mean with the exponential structural covariance
//! `σ²0 exp(−θh)`, simulated by circulant embedding (FFT) of the covariance on
//! a torus of at least twice the grid size. A nugget `c0` is added as
//! independent node-wise Gaussian noise, so each realization keeps both the
//! smooth structured signal and the observed (noisy) node values.

use nalgebra::{DMatrix, Matrix3};
use rand::seq::index;
use rand::Rng;
use rand_distr::StandardNormal;
use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};
use std::sync::Arc;

use crate::error::{invalid_param, GeoError, Result};
use crate::rng::{derive_seed, stream, stream_rng};
use crate::spatial::{Location, Observation, SpatialDataset, VariableId};
use crate::variogram::ExponentialVariogramModel;

/// Largest grid (in nodes) simulated by dense Cholesky when the embedding fails.
pub const CHOLESKY_NODE_LIMIT: usize = 4096;

/// Relative tolerance below which negative embedding eigenvalues are treated as round-off.
const EIGEN_TOLERANCE: f64 = 1e-10;

/// Square regular grid with nodes at `(i·resolution, j·resolution)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Grid {
    pub extent: f64,
    pub resolution: f64,
    /// Nodes per side, `floor(extent / resolution) + 1`.
    pub side: usize,
}

impl Grid {
    pub fn new(extent: f64, resolution: f64) -> Result<Self> {
        if !(extent.is_finite() && extent > 0.0) {
            return Err(invalid_param("extent", format!("{extent} must be > 0")));
        }
        if !(resolution.is_finite() && resolution > 0.0) {
            return Err(invalid_param("resolution", format!("{resolution} must be > 0")));
        }
        // guard against 8000/50 landing a hair under an integer
        let side = ((extent / resolution) * (1.0 + 1e-12)).floor() as usize + 1;
        Ok(Self {
            extent,
            resolution,
            side,
        })
    }

    pub fn node_count(&self) -> usize {
        self.side * self.side
    }

    /// Location of node `k` (row-major, x fastest).
    pub fn location(&self, k: usize) -> Location {
        let (i, j) = (k % self.side, k / self.side);
        Location::new(i as f64 * self.resolution, j as f64 * self.resolution)
    }
}

/// How the structured part of a field was produced.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SimulationMethod {
    CirculantEmbedding { torus_side: usize },
    Cholesky,
}

/// Method selection for [`simulate_grf_with`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum MethodChoice {
    /// Circulant embedding, one doubling retry, then Cholesky if the grid is small enough.
    #[default]
    Auto,
    CirculantOnly,
    Cholesky,
}

/// One simulated field.
#[derive(Debug, Clone, PartialEq)]
pub struct FieldRealization {
    pub grid: Grid,
    pub model: ExponentialVariogramModel,
    pub seed: u64,
    pub method: SimulationMethod,
    /// Observed node values: structured signal plus nugget noise.
    pub values: Vec<f64>,
    /// Structured signal without the nugget noise.
    pub signal: Vec<f64>,
}

impl FieldRealization {
    pub fn node_count(&self) -> usize {
        self.grid.node_count()
    }

    pub fn location(&self, k: usize) -> Location {
        self.grid.location(k)
    }

    /// Dataset of the given nodes, one row per node with `point_id = node`.
    pub fn dataset_at(&self, nodes: &[usize], variable: VariableId) -> SpatialDataset {
        let points = nodes
            .iter()
            .map(|&k| Observation::new(k as u64, self.location(k), self.values[k], variable))
            .collect();
        SpatialDataset::new(points).expect("grid nodes are distinct and finite")
    }
}

/// Simulates a zero-mean field with the given model on a square grid.
pub fn simulate_grf(
    extent: f64,
    resolution: f64,
    model: ExponentialVariogramModel,
    seed: u64,
) -> Result<FieldRealization> {
    simulate_grf_with(extent, resolution, model, seed, MethodChoice::Auto)
}

pub fn simulate_grf_with(
    extent: f64,
    resolution: f64,
    model: ExponentialVariogramModel,
    seed: u64,
    method: MethodChoice,
) -> Result<FieldRealization> {
    model.validate()?;
    let grid = Grid::new(extent, resolution)?;
    let (signal, used) = simulate_signal(&grid, &model, seed, method, CHOLESKY_NODE_LIMIT)?;
    Ok(with_nugget(grid, model, seed, used, signal))
}

fn with_nugget(
    grid: Grid,
    model: ExponentialVariogramModel,
    seed: u64,
    method: SimulationMethod,
    signal: Vec<f64>,
) -> FieldRealization {
    let values = if model.nugget > 0.0 {
        let sd = model.nugget.sqrt();
        let mut rng = stream_rng(seed, stream::NUGGET_NOISE, 0);
        signal
            .iter()
            .map(|s| s + sd * rng.sample::<f64, _>(StandardNormal))
            .collect()
    } else {
        signal.clone()
    };
    FieldRealization {
        grid,
        model,
        seed,
        method,
        values,
        signal,
    }
}

fn simulate_signal(
    grid: &Grid,
    model: &ExponentialVariogramModel,
    seed: u64,
    method: MethodChoice,
    cholesky_limit: usize,
) -> Result<(Vec<f64>, SimulationMethod)> {
    simulate_structured(grid, |h| model.structural_covariance(h), seed, method, cholesky_limit)
}

fn simulate_structured(
    grid: &Grid,
    cov: impl Fn(f64) -> f64 + Copy,
    seed: u64,
    method: MethodChoice,
    cholesky_limit: usize,
) -> Result<(Vec<f64>, SimulationMethod)> {
    if method == MethodChoice::Cholesky {
        return cholesky_field(grid, cov, seed).map(|v| (v, SimulationMethod::Cholesky));
    }
    let base = circulant_side(grid.side);
    let mut worst = f64::NAN;
    for torus_side in [base, 2 * base] {
        let emb = CirculantEmbedding::new(grid, torus_side, cov);
        if emb.is_psd() {
            let noise = complex_noise(torus_side, seed);
            return Ok((
                emb.sample(&noise),
                SimulationMethod::CirculantEmbedding { torus_side },
            ));
        }
        worst = emb.min_eigenvalue;
    }
    if method == MethodChoice::Auto && grid.node_count() <= cholesky_limit {
        return cholesky_field(grid, cov, seed).map(|v| (v, SimulationMethod::Cholesky));
    }
    Err(GeoError::SimulationFailed {
        min_eigenvalue: worst,
        nodes: grid.node_count(),
        cholesky_limit,
    })
}

/// Smallest 5-smooth integer `>= 2 (side − 1)`, and at least 2.
fn circulant_side(side: usize) -> usize {
    let min = (2 * side.saturating_sub(1)).max(2);
    (min..)
        .find(|&n| {
            let mut m = n;
            for p in [2, 3, 5] {
                while m % p == 0 {
                    m /= p;
                }
            }
            m == 1
        })
        .expect("5-smooth numbers are unbounded")
}

fn complex_noise(torus_side: usize, seed: u64) -> Vec<Complex<f64>> {
    let mut rng = stream_rng(seed, stream::FIELD_NOISE, 0);
    (0..torus_side * torus_side)
        .map(|_| {
            let re: f64 = rng.sample(StandardNormal);
            let im: f64 = rng.sample(StandardNormal);
            Complex::new(re, im)
        })
        .collect()
}

/// Spectral factor of the covariance embedded on a `torus_side²` torus.
struct CirculantEmbedding {
    grid_side: usize,
    torus_side: usize,
    /// `sqrt(max(λ, 0) / M)` per frequency.
    amplitude: Vec<f64>,
    min_eigenvalue: f64,
    max_eigenvalue: f64,
    fft: Arc<dyn Fft<f64>>,
}

impl CirculantEmbedding {
    fn new(grid: &Grid, torus_side: usize, cov: impl Fn(f64) -> f64) -> Self {
        let m = torus_side;
        let mut base: Vec<Complex<f64>> = Vec::with_capacity(m * m);
        for j in 0..m {
            let dy = j.min(m - j) as f64 * grid.resolution;
            for i in 0..m {
                let dx = i.min(m - i) as f64 * grid.resolution;
                base.push(Complex::new(cov((dx * dx + dy * dy).sqrt()), 0.0));
            }
        }
        let fft = FftPlanner::new().plan_fft_forward(m);
        fft2(&mut base, m, &fft);
        let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
        for c in &base {
            lo = lo.min(c.re);
            hi = hi.max(c.re);
        }
        let total = (m * m) as f64;
        let amplitude = base.iter().map(|c| (c.re.max(0.0) / total).sqrt()).collect();
        Self {
            grid_side: grid.side,
            torus_side: m,
            amplitude,
            min_eigenvalue: lo,
            max_eigenvalue: hi,
            fft,
        }
    }

    fn is_psd(&self) -> bool {
        self.min_eigenvalue >= -EIGEN_TOLERANCE * self.max_eigenvalue.abs()
    }

    /// Real part of `FFT(amplitude · ξ)` restricted to the grid.
    fn sample(&self, noise: &[Complex<f64>]) -> Vec<f64> {
        let m = self.torus_side;
        let mut data: Vec<Complex<f64>> = noise
            .iter()
            .zip(&self.amplitude)
            .map(|(z, a)| z * *a)
            .collect();
        fft2(&mut data, m, &self.fft);
        let n = self.grid_side;
        let mut out = Vec::with_capacity(n * n);
        for j in 0..n {
            for i in 0..n {
                out.push(data[j * m + i].re);
            }
        }
        out
    }
}

fn fft2(data: &mut [Complex<f64>], m: usize, fft: &Arc<dyn Fft<f64>>) {
    for row in data.chunks_exact_mut(m) {
        fft.process(row);
    }
    let mut col = vec![Complex::new(0.0, 0.0); m];
    for i in 0..m {
        for j in 0..m {
            col[j] = data[j * m + i];
        }
        fft.process(&mut col);
        for j in 0..m {
            data[j * m + i] = col[j];
        }
    }
}

fn cholesky_field(grid: &Grid, cov: impl Fn(f64) -> f64, seed: u64) -> Result<Vec<f64>> {
    let n = grid.node_count();
    let locs: Vec<Location> = (0..n).map(|k| grid.location(k)).collect();
    let c = DMatrix::from_fn(n, n, |a, b| cov(locs[a].distance(&locs[b])));
    let chol = c
        .cholesky()
        .ok_or_else(|| GeoError::NotPositiveDefinite(format!("{n}-node grid covariance")))?;
    let mut rng = stream_rng(seed, stream::FIELD_NOISE, 0);
    let z = nalgebra::DVector::from_fn(n, |_, _| rng.sample::<f64, _>(StandardNormal));
    Ok((chol.l() * z).iter().copied().collect())
}

/// Three fields with pairwise correlation `r` built as `Z = A W` from
/// independent fields `W_k`, where `A` is the lower Cholesky factor of the
/// equicorrelation matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct MultiFieldRealization {
    pub fields: Vec<FieldRealization>,
    pub correlation: f64,
    pub construction: Matrix3<f64>,
    pub seed: u64,
}

impl MultiFieldRealization {
    pub fn grid(&self) -> Grid {
        self.fields[0].grid
    }

    pub fn model(&self) -> ExponentialVariogramModel {
        self.fields[0].model
    }
}

/// Equicorrelation matrix `[1 r r; r 1 r; r r 1]`.
pub fn equicorrelation(r: f64) -> Matrix3<f64> {
    Matrix3::from_fn(|i, j| if i == j { 1.0 } else { r })
}

pub fn simulate_multivariate_grf(
    extent: f64,
    resolution: f64,
    model: ExponentialVariogramModel,
    r: f64,
    seed: u64,
) -> Result<MultiFieldRealization> {
    if !(r.is_finite() && (0.0..1.0).contains(&r)) {
        return Err(invalid_param("r", format!("correlation {r} must lie in [0, 1)")));
    }
    let corr = equicorrelation(r);
    let a = corr
        .cholesky()
        .ok_or_else(|| GeoError::NotPositiveDefinite(format!("equicorrelation matrix r = {r}")))?
        .l();
    let components: Vec<FieldRealization> = (0..3)
        .map(|k| {
            simulate_grf(
                extent,
                resolution,
                model,
                derive_seed(seed, stream::COMPONENT, k as u64),
            )
        })
        .collect::<Result<_>>()?;
    let n = components[0].node_count();
    let fields = (0..3)
        .map(|i| {
            let mix = |pick: fn(&FieldRealization) -> &Vec<f64>| -> Vec<f64> {
                (0..n)
                    .map(|node| (0..=i).map(|k| a[(i, k)] * pick(&components[k])[node]).sum())
                    .collect()
            };
            FieldRealization {
                grid: components[0].grid,
                model,
                seed: derive_seed(seed, stream::COMPONENT, 100 + i as u64),
                method: components[0].method,
                values: mix(|f| &f.values),
                signal: mix(|f| &f.signal),
            }
        })
        .collect();
    Ok(MultiFieldRealization {
        fields,
        correlation: r,
        construction: a,
        seed,
    })
}

/// Fields sharing one grid, one per model (each with its own scale), whose
/// correlation comes from a common white-noise component of weight `shared`.
///
/// Field `i` is `sqrt(shared)·S_i + sqrt(1 − shared)·U_i` where `S_i` is
/// the common noise filtered with model `i`'s spectrum and `U_i` is an
/// independent field with the same model, so every marginal keeps its model
/// exactly. Circulant embedding only.
pub fn simulate_shared_noise_fields(
    extent: f64,
    resolution: f64,
    models: &[ExponentialVariogramModel],
    shared: f64,
    seed: u64,
) -> Result<Vec<FieldRealization>> {
    if !(shared.is_finite() && (0.0..=1.0).contains(&shared)) {
        return Err(invalid_param("shared", format!("{shared} must lie in [0, 1]")));
    }
    let grid = Grid::new(extent, resolution)?;
    let torus_side = circulant_side(grid.side);
    let common = complex_noise(torus_side, derive_seed(seed, stream::COMPONENT, 999));
    models
        .iter()
        .enumerate()
        .map(|(i, model)| {
            model.validate()?;
            let emb = CirculantEmbedding::new(&grid, torus_side, |h| model.structural_covariance(h));
            if !emb.is_psd() {
                return Err(GeoError::SimulationFailed {
                    min_eigenvalue: emb.min_eigenvalue,
                    nodes: grid.node_count(),
                    cholesky_limit: 0,
                });
            }
            let own_seed = derive_seed(seed, stream::COMPONENT, i as u64);
            let s = emb.sample(&common);
            let u = emb.sample(&complex_noise(torus_side, own_seed));
            let (ws, wu) = (shared.sqrt(), (1.0 - shared).sqrt());
            let signal = s.iter().zip(&u).map(|(a, b)| ws * a + wu * b).collect();
            Ok(with_nugget(
                grid,
                *model,
                own_seed,
                SimulationMethod::CirculantEmbedding { torus_side },
                signal,
            ))
        })
        .collect()
}

/// Fixed prediction nodes of a scenario, reserved from observation sampling.
#[derive(Debug, Clone, PartialEq)]
pub struct TestPoints {
    /// Node indices, ascending.
    pub nodes: Vec<usize>,
}

impl TestPoints {
    pub fn none() -> Self {
        Self { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn contains(&self, node: usize) -> bool {
        self.nodes.binary_search(&node).is_ok()
    }

    /// Test points with the true values of `field` attached.
    pub fn dataset(&self, field: &FieldRealization, variable: VariableId) -> SpatialDataset {
        field.dataset_at(&self.nodes, variable)
    }

    pub fn locations(&self, grid: &Grid) -> Vec<Location> {
        self.nodes.iter().map(|&k| grid.location(k)).collect()
    }
}

/// Draws `n` distinct nodes uniformly; depends only on the grid and the seed.
pub fn select_test_points(grid: &Grid, n: usize, seed: u64) -> Result<TestPoints> {
    let total = grid.node_count();
    if n == 0 {
        return Err(invalid_param("n", "need at least one test point"));
    }
    if n > total {
        return Err(GeoError::SampleTooLarge {
            requested: n,
            available: total,
        });
    }
    let mut rng = stream_rng(seed, stream::TEST_POINTS, 0);
    let mut nodes = index::sample(&mut rng, total, n).into_vec();
    nodes.sort_unstable();
    Ok(TestPoints { nodes })
}

/// Draws `n` distinct non-reserved nodes uniformly without replacement, ascending.
pub fn sample_nodes(grid: &Grid, n: usize, reserved: &TestPoints, seed: u64) -> Result<Vec<usize>> {
    let available: Vec<usize> = (0..grid.node_count()).filter(|&k| !reserved.contains(k)).collect();
    if n == 0 {
        return Err(invalid_param("n", "need at least one observation"));
    }
    if n > available.len() {
        return Err(GeoError::SampleTooLarge {
            requested: n,
            available: available.len(),
        });
    }
    let mut rng = stream_rng(seed, stream::SAMPLE, 0);
    let mut nodes: Vec<usize> = index::sample(&mut rng, available.len(), n)
        .into_iter()
        .map(|i| available[i])
        .collect();
    nodes.sort_unstable();
    Ok(nodes)
}

/// Observations of `field` at `n` random non-reserved nodes (variable id 0).
pub fn sample_observations(
    field: &FieldRealization,
    n: usize,
    reserved: &TestPoints,
    seed: u64,
) -> Result<SpatialDataset> {
    let nodes = sample_nodes(&field.grid, n, reserved, seed)?;
    Ok(field.dataset_at(&nodes, 0))
}

/// All variables observed at the same `n` nodes; variable id = field position.
pub fn sample_collocated(
    fields: &[FieldRealization],
    n: usize,
    reserved: &TestPoints,
    seed: u64,
) -> Result<SpatialDataset> {
    let grid = fields
        .first()
        .ok_or_else(|| invalid_param("fields", "need at least one field"))?
        .grid;
    let nodes = sample_nodes(&grid, n, reserved, seed)?;
    let parts: Vec<SpatialDataset> = fields
        .iter()
        .enumerate()
        .map(|(v, f)| f.dataset_at(&nodes, v as VariableId))
        .collect();
    SpatialDataset::concat(&parts)
}

/// Each variable sampled independently with its own size and derived seed.
pub fn sample_heterotopic(
    fields: &[FieldRealization],
    sizes: &[usize],
    reserved: &TestPoints,
    seed: u64,
) -> Result<SpatialDataset> {
    if fields.len() != sizes.len() {
        return Err(GeoError::LengthMismatch {
            left: fields.len(),
            right: sizes.len(),
        });
    }
    let parts: Vec<SpatialDataset> = fields
        .iter()
        .zip(sizes)
        .enumerate()
        .map(|(v, (f, &n))| {
            let nodes = sample_nodes(&f.grid, n, reserved, derive_seed(seed, stream::SAMPLE, v as u64))?;
            Ok(f.dataset_at(&nodes, v as VariableId))
        })
        .collect::<Result<_>>()?;
    SpatialDataset::concat(&parts)
}
