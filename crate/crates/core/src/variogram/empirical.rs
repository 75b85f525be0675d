//! Mathéron semi-variogram and cross-variogram estimation.

use std::collections::HashMap;

use crate::error::{invalid_param, GeoError, Result};
use crate::spatial::{Location, SpatialDataset, SpatialIndex};

/// Lag classes `(e0, e1], (e1, e2], …`; distance-0 pairs never fall in a bin.
#[derive(Debug, Clone, PartialEq)]
pub struct BinSpec {
    edges: Vec<f64>,
}

impl BinSpec {
    /// `n_bins` equal-width bins over `(0, max_dist]`.
    pub fn equal_width(max_dist: f64, n_bins: usize) -> Result<Self> {
        if !(max_dist.is_finite() && max_dist > 0.0) {
            return Err(invalid_param("max_dist", format!("{max_dist} must be > 0")));
        }
        if n_bins == 0 {
            return Err(invalid_param("n_bins", "need at least one bin"));
        }
        let edges = (0..=n_bins)
            .map(|k| max_dist * k as f64 / n_bins as f64)
            .collect();
        Ok(Self { edges })
    }

    /// Explicit ascending edges; the first may be above zero.
    pub fn from_edges(edges: Vec<f64>) -> Result<Self> {
        if edges.len() < 2 {
            return Err(invalid_param("edges", "need at least two edges"));
        }
        if edges[0] < 0.0 || edges.iter().any(|e| !e.is_finite()) {
            return Err(invalid_param("edges", "edges must be finite and non-negative"));
        }
        if edges.windows(2).any(|w| w[1] <= w[0]) {
            return Err(invalid_param("edges", "edges must be strictly increasing"));
        }
        Ok(Self { edges })
    }

    pub fn n_bins(&self) -> usize {
        self.edges.len() - 1
    }

    pub fn max_dist(&self) -> f64 {
        *self.edges.last().expect("at least two edges")
    }

    pub fn edges(&self) -> &[f64] {
        &self.edges
    }

    /// Narrowest bin width.
    pub fn min_width(&self) -> f64 {
        self.edges
            .windows(2)
            .map(|w| w[1] - w[0])
            .fold(f64::INFINITY, f64::min)
    }

    /// Bin holding distance `d`, if any.
    pub fn locate(&self, d: f64) -> Option<usize> {
        if d <= self.edges[0] || d > self.max_dist() {
            return None;
        }
        // first edge >= d is the bin's upper edge
        Some(self.edges.partition_point(|&e| e < d) - 1)
    }
}

/// Which estimator produced an [`EmpiricalVariogram`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EstimatorKind {
    Matheron,
    /// Classical cross-variogram over locations carrying both variables.
    CrossCollocated,
    /// Converted from the sample cross-covariance between the two location sets.
    CrossHeterotopic,
}

impl EstimatorKind {
    pub fn label(&self) -> &'static str {
        match self {
            EstimatorKind::Matheron => "matheron",
            EstimatorKind::CrossCollocated => "collocated",
            EstimatorKind::CrossHeterotopic => "heterotopic",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LagBin {
    pub lower: f64,
    pub upper: f64,
    /// Mean pair distance in the bin, or the bin midpoint when empty.
    pub lag_center: f64,
    /// Estimate; `None` when the bin has no pairs.
    pub gamma: Option<f64>,
    pub n_pairs: usize,
    /// Sample cross-covariance (heterotopic estimator only).
    pub cross_covariance: Option<f64>,
}

/// Pairs at distance zero (duplicate locations), excluded from the bins.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ZeroLagDiagnostic {
    pub n_pairs: usize,
    /// Mean half squared (cross-)difference over those pairs.
    pub half_sq_mean: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EmpiricalVariogram {
    pub bins: Vec<LagBin>,
    pub max_dist: f64,
    pub n_bins: usize,
    pub kind: EstimatorKind,
    pub zero_lag: ZeroLagDiagnostic,
    /// Sample variance of the data (direct), or sample covariance at collocated points (cross).
    pub data_variance: f64,
    pub n_points: usize,
    /// Zero-lag cross-covariance used to convert covariances (heterotopic only).
    pub zero_lag_covariance: Option<f64>,
    /// Set when no pair fell within `max_dist`.
    pub no_pairs_warning: bool,
}

impl EmpiricalVariogram {
    pub fn nonempty_bins(&self) -> impl Iterator<Item = &LagBin> {
        self.bins.iter().filter(|b| b.n_pairs > 0 && b.gamma.is_some())
    }

    pub fn n_nonempty(&self) -> usize {
        self.nonempty_bins().count()
    }

    pub fn min_bin_width(&self) -> f64 {
        self.bins
            .iter()
            .map(|b| b.upper - b.lower)
            .fold(f64::INFINITY, f64::min)
    }

    /// Whether two variograms share the same lag classes.
    pub fn same_binning(&self, other: &EmpiricalVariogram) -> bool {
        self.bins.len() == other.bins.len()
            && self
                .bins
                .iter()
                .zip(&other.bins)
                .all(|(a, b)| a.lower == b.lower && a.upper == b.upper)
    }
}

/// Visits every unordered pair `(i, j)`, `i < j`, with distance `<= max_dist`,
/// in lexicographic `(i, j)` order.
fn for_each_pair(locs: &[Location], max_dist: f64, mut f: impl FnMut(usize, usize, f64)) -> Result<()> {
    let index = SpatialIndex::from_parts(locs.to_vec(), (0..locs.len() as u64).collect())?;
    let mut partners: Vec<(usize, f64)> = Vec::new();
    for (i, &li) in locs.iter().enumerate() {
        partners.clear();
        index.for_each_within(li, max_dist, |j, d| {
            if j > i {
                partners.push((j, d));
            }
        });
        partners.sort_unstable_by_key(|&(j, _)| j);
        for &(j, d) in &partners {
            f(i, j, d);
        }
    }
    Ok(())
}

#[derive(Clone, Copy, Default)]
struct Acc {
    sum: f64,
    dist: f64,
    n: usize,
}

fn finish(
    bins: &BinSpec,
    acc: &[Acc],
    zero: Acc,
    kind: EstimatorKind,
    data_variance: f64,
    n_points: usize,
) -> EmpiricalVariogram {
    let edges = bins.edges();
    let out: Vec<LagBin> = acc
        .iter()
        .enumerate()
        .map(|(k, a)| LagBin {
            lower: edges[k],
            upper: edges[k + 1],
            lag_center: if a.n > 0 {
                a.dist / a.n as f64
            } else {
                0.5 * (edges[k] + edges[k + 1])
            },
            gamma: (a.n > 0).then(|| a.sum / (2.0 * a.n as f64)),
            n_pairs: a.n,
            cross_covariance: None,
        })
        .collect();
    let no_pairs_warning = out.iter().all(|b| b.n_pairs == 0);
    EmpiricalVariogram {
        bins: out,
        max_dist: bins.max_dist(),
        n_bins: bins.n_bins(),
        kind,
        zero_lag: ZeroLagDiagnostic {
            n_pairs: zero.n,
            half_sq_mean: (zero.n > 0).then(|| zero.sum / (2.0 * zero.n as f64)),
        },
        data_variance,
        n_points,
        zero_lag_covariance: None,
        no_pairs_warning,
    }
}

/// Mathéron estimator with `n_bins` equal-width bins over `(0, max_dist]`.
pub fn empirical_variogram(ds: &SpatialDataset, max_dist: f64, n_bins: usize) -> Result<EmpiricalVariogram> {
    empirical_variogram_binned(ds, &BinSpec::equal_width(max_dist, n_bins)?)
}

pub fn empirical_variogram_binned(ds: &SpatialDataset, bins: &BinSpec) -> Result<EmpiricalVariogram> {
    if ds.variables().len() > 1 {
        return Err(GeoError::InvalidDataset(
            "direct variogram needs a single-variable dataset".into(),
        ));
    }
    if ds.len() < 2 {
        return Err(GeoError::InsufficientData(format!(
            "variogram needs at least 2 points, got {}",
            ds.len()
        )));
    }
    let locs = ds.locations();
    let z = ds.values();
    let mut acc = vec![Acc::default(); bins.n_bins()];
    let mut zero = Acc::default();
    for_each_pair(&locs, bins.max_dist(), |i, j, d| {
        let diff = z[i] - z[j];
        let sq = diff * diff;
        if d == 0.0 {
            zero.sum += sq;
            zero.n += 1;
        } else if let Some(k) = bins.locate(d) {
            acc[k].sum += sq;
            acc[k].dist += d;
            acc[k].n += 1;
        }
    })?;
    Ok(finish(bins, &acc, zero, EstimatorKind::Matheron, ds.sample_variance(), ds.len()))
}

/// Estimator selection for [`empirical_cross_variogram`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum CrossMode {
    /// Collocated when at least two locations carry both variables, heterotopic otherwise.
    #[default]
    Auto,
    Collocated,
    Heterotopic,
}

/// Cross-variogram between two single-variable datasets.
///
/// Collocated mode pairs observations by `point_id` at identical locations and
/// averages `(Zi(s) − Zi(s'))(Zj(s) − Zj(s'))`. Heterotopic mode estimates the
/// cross-covariance `Ĉij(h)` between the two location sets (means removed) and
/// reports `Ĉij(0) − Ĉij(h)`, where `Ĉij(0)` is extrapolated from the two
/// shortest non-empty lags.
pub fn empirical_cross_variogram(
    ds_i: &SpatialDataset,
    ds_j: &SpatialDataset,
    bins: &BinSpec,
    mode: CrossMode,
) -> Result<EmpiricalVariogram> {
    let (locs, zi, zj) = collocated_join(ds_i, ds_j);
    let collocated = match mode {
        CrossMode::Collocated => true,
        CrossMode::Heterotopic => false,
        CrossMode::Auto => locs.len() >= 2,
    };
    if collocated {
        if locs.len() < 2 {
            return Err(GeoError::NoUsablePairs {
                mode: "collocated",
                details: format!(
                    "{} collocated locations between {} and {} points",
                    locs.len(),
                    ds_i.len(),
                    ds_j.len()
                ),
            });
        }
        let mut acc = vec![Acc::default(); bins.n_bins()];
        let mut zero = Acc::default();
        for_each_pair(&locs, bins.max_dist(), |a, b, d| {
            let p = (zi[a] - zi[b]) * (zj[a] - zj[b]);
            if d == 0.0 {
                zero.sum += p;
                zero.n += 1;
            } else if let Some(k) = bins.locate(d) {
                acc[k].sum += p;
                acc[k].dist += d;
                acc[k].n += 1;
            }
        })?;
        let cov0 = sample_covariance(&zi, &zj);
        let out = finish(bins, &acc, zero, EstimatorKind::CrossCollocated, cov0, locs.len());
        if out.no_pairs_warning {
            return Err(GeoError::NoUsablePairs {
                mode: "collocated",
                details: format!("{} collocated locations, 0 pairs within max_dist", locs.len()),
            });
        }
        Ok(out)
    } else {
        heterotopic_cross(ds_i, ds_j, bins)
    }
}

fn collocated_join(ds_i: &SpatialDataset, ds_j: &SpatialDataset) -> (Vec<Location>, Vec<f64>, Vec<f64>) {
    let by_id: HashMap<u64, (Location, f64)> = ds_j
        .points()
        .iter()
        .map(|p| (p.point_id, (p.location, p.value)))
        .collect();
    let mut locs = Vec::new();
    let mut zi = Vec::new();
    let mut zj = Vec::new();
    for p in ds_i.points() {
        if let Some(&(loc, v)) = by_id.get(&p.point_id) {
            if loc == p.location {
                locs.push(loc);
                zi.push(p.value);
                zj.push(v);
            }
        }
    }
    (locs, zi, zj)
}

fn sample_covariance(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len();
    if n < 2 {
        return 0.0;
    }
    let ma = a.iter().sum::<f64>() / n as f64;
    let mb = b.iter().sum::<f64>() / n as f64;
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - ma) * (y - mb))
        .sum::<f64>()
        / (n - 1) as f64
}

fn heterotopic_cross(ds_i: &SpatialDataset, ds_j: &SpatialDataset, bins: &BinSpec) -> Result<EmpiricalVariogram> {
    if ds_i.is_empty() || ds_j.is_empty() {
        return Err(GeoError::NoUsablePairs {
            mode: "heterotopic",
            details: format!("{} and {} points", ds_i.len(), ds_j.len()),
        });
    }
    let zi = ds_i.values();
    let zj = ds_j.values();
    let mi = zi.iter().sum::<f64>() / zi.len() as f64;
    let mj = zj.iter().sum::<f64>() / zj.len() as f64;
    let index = SpatialIndex::build(ds_j)?;
    let mut acc = vec![Acc::default(); bins.n_bins()];
    let mut zero = Acc::default();
    let mut partners: Vec<(usize, f64)> = Vec::new();
    for (a, p) in ds_i.points().iter().enumerate() {
        partners.clear();
        index.for_each_within(p.location, bins.max_dist(), |b, d| partners.push((b, d)));
        partners.sort_unstable_by_key(|&(b, _)| b);
        for &(b, d) in &partners {
            let prod = (zi[a] - mi) * (zj[b] - mj);
            if d == 0.0 {
                zero.sum += prod;
                zero.n += 1;
            } else if let Some(k) = bins.locate(d) {
                acc[k].sum += prod;
                acc[k].dist += d;
                acc[k].n += 1;
            }
        }
    }
    let total: usize = acc.iter().map(|a| a.n).sum();
    if total == 0 {
        return Err(GeoError::NoUsablePairs {
            mode: "heterotopic",
            details: format!(
                "{} x {} points, 0 cross pairs within {}",
                ds_i.len(),
                ds_j.len(),
                bins.max_dist()
            ),
        });
    }
    let cov: Vec<Option<(f64, f64)>> = acc
        .iter()
        .map(|a| (a.n > 0).then(|| (a.dist / a.n as f64, a.sum / a.n as f64)))
        .collect();
    let c0 = extrapolate_zero_lag(&cov);
    let edges = bins.edges();
    let out: Vec<LagBin> = acc
        .iter()
        .zip(&cov)
        .enumerate()
        .map(|(k, (a, c))| LagBin {
            lower: edges[k],
            upper: edges[k + 1],
            lag_center: c.map_or(0.5 * (edges[k] + edges[k + 1]), |(h, _)| h),
            gamma: c.map(|(_, v)| c0 - v),
            n_pairs: a.n,
            cross_covariance: c.map(|(_, v)| v),
        })
        .collect();
    Ok(EmpiricalVariogram {
        bins: out,
        max_dist: bins.max_dist(),
        n_bins: bins.n_bins(),
        kind: EstimatorKind::CrossHeterotopic,
        zero_lag: ZeroLagDiagnostic {
            n_pairs: zero.n,
            half_sq_mean: (zero.n > 0).then(|| zero.sum / zero.n as f64),
        },
        data_variance: c0,
        n_points: ds_i.len() + ds_j.len(),
        zero_lag_covariance: Some(c0),
        no_pairs_warning: false,
    })
}

/// Log-linear extrapolation of the two shortest lags when both have the same
/// sign and decay, otherwise the shortest lag's covariance.
fn extrapolate_zero_lag(cov: &[Option<(f64, f64)>]) -> f64 {
    let mut it = cov.iter().flatten();
    let Some(&(h1, c1)) = it.next() else {
        return 0.0;
    };
    if let Some(&(h2, c2)) = it.next() {
        let same_sign = (c1 > 0.0 && c2 > 0.0) || (c1 < 0.0 && c2 < 0.0);
        if same_sign && c2.abs() < c1.abs() && h2 > h1 {
            // capped so a noisy second lag cannot blow up the estimate
            let factor = (c1 / c2).powf(h1 / (h2 - h1)).min(4.0);
            return c1 * factor;
        }
    }
    c1
}
