//! Ordinary kriging and ordinary co-kriging with local neighbourhoods.
//!
//! Both use the covariance form of the kriging system. The nugget enters
//! only where an observation is paired with itself (or, for co-kriging, with
//! another variable measured at the same point), so predictions are smooth
//! and do not reproduce noisy observations exactly when `c0 > 0`.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::error::{invalid_param, GeoError, Result};
use crate::spatial::{Location, SpatialDataset, SpatialIndex, VariableId};
use crate::variogram::{CoregionalizationModel, ExponentialVariogramModel, N_VARS};

/// Which observations enter a local kriging system.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NeighborhoodSpec {
    /// At most this many nearest observations (per variable for co-kriging).
    pub max_points: usize,
    /// Search radius in metres; `f64::INFINITY` for a pure nearest-k search.
    pub max_radius: f64,
    /// Fewer target-variable neighbours than this is an error.
    pub min_points: usize,
}

impl Default for NeighborhoodSpec {
    fn default() -> Self {
        Self {
            max_points: 50,
            max_radius: 1000.0,
            min_points: 1,
        }
    }
}

impl NeighborhoodSpec {
    pub fn new(max_points: usize, max_radius: f64, min_points: usize) -> Result<Self> {
        let spec = Self {
            max_points,
            max_radius,
            min_points,
        };
        spec.validate()?;
        Ok(spec)
    }

    /// The `k` nearest observations regardless of distance.
    pub fn nearest(k: usize) -> Result<Self> {
        Self::new(k, f64::INFINITY, 1)
    }

    pub fn validate(&self) -> Result<()> {
        if self.max_points == 0 {
            return Err(invalid_param("max_points", "must be positive"));
        }
        if self.min_points == 0 || self.min_points > self.max_points {
            return Err(invalid_param(
                "min_points",
                format!("must be in 1..={}, got {}", self.max_points, self.min_points),
            ));
        }
        if !(self.max_radius > 0.0) {
            return Err(invalid_param("max_radius", format!("{} must be > 0", self.max_radius)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KrigingWeight {
    pub point_id: u64,
    pub variable: VariableId,
    pub distance: f64,
    pub weight: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct KrigingPrediction {
    pub target: Location,
    pub variable: VariableId,
    pub predicted_value: f64,
    /// Model-based error variance, clipped at 0.
    pub kriging_variance: f64,
    pub n_neighbors_used: usize,
    /// Multiplier of the target variable's unbiasedness constraint.
    pub lagrange_multiplier: f64,
    pub weights: Vec<KrigingWeight>,
}

/// Model used by [`krige_batch`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum KrigingModel {
    /// Ordinary kriging of each variable on its own observations.
    Univariate(ExponentialVariogramModel),
    /// Co-kriging; variable ids index the rows of the coregionalization matrices.
    Coregionalized(CoregionalizationModel),
}

#[derive(Debug, Clone, Copy)]
struct Entry {
    point_id: u64,
    variable: VariableId,
    location: Location,
    value: f64,
    distance: f64,
}

/// Covariances between observations (`a`, `b`) and towards the target.
trait CovarianceModel {
    fn between(&self, a: &Entry, b: &Entry) -> f64;
    fn to_target(&self, a: &Entry, target_variable: VariableId) -> f64;
    fn target_variance(&self, target_variable: VariableId) -> f64;
}

fn same_point(a: &Entry, b: &Entry) -> bool {
    a.point_id == b.point_id && a.location == b.location
}

impl CovarianceModel for ExponentialVariogramModel {
    fn between(&self, a: &Entry, b: &Entry) -> f64 {
        if same_point(a, b) {
            self.total_sill()
        } else {
            self.structural_covariance(a.location.distance(&b.location))
        }
    }

    fn to_target(&self, a: &Entry, _: VariableId) -> f64 {
        self.structural_covariance(a.distance)
    }

    fn target_variance(&self, _: VariableId) -> f64 {
        self.total_sill()
    }
}

impl CovarianceModel for CoregionalizationModel {
    fn between(&self, a: &Entry, b: &Entry) -> f64 {
        let (i, j) = (a.variable as usize, b.variable as usize);
        let s = self.structural_covariance(i, j, a.location.distance(&b.location));
        if same_point(a, b) {
            s + self.b_nugget[(i, j)]
        } else {
            s
        }
    }

    fn to_target(&self, a: &Entry, t: VariableId) -> f64 {
        self.structural_covariance(a.variable as usize, t as usize, a.distance)
    }

    fn target_variance(&self, t: VariableId) -> f64 {
        self.b_nugget[(t as usize, t as usize)] + self.b_structure[(t as usize, t as usize)]
    }
}

struct Solution {
    weights: Vec<f64>,
    multipliers: Vec<f64>,
    rhs: Vec<f64>,
}

/// Solves the bordered system with one unbiasedness row per variable in
/// `groups` (sorted). Returns `None` when the matrix is numerically singular.
fn solve_system<M: CovarianceModel>(
    entries: &[Entry],
    groups: &[VariableId],
    model: &M,
    target_variable: VariableId,
) -> Option<Solution> {
    let n = entries.len();
    let k = groups.len();
    let mut a = DMatrix::<f64>::zeros(n + k, n + k);
    let mut b = DVector::<f64>::zeros(n + k);
    for (p, ep) in entries.iter().enumerate() {
        for q in p..n {
            let c = model.between(ep, &entries[q]);
            a[(p, q)] = c;
            a[(q, p)] = c;
        }
        let g = groups.binary_search(&ep.variable).expect("variable has a constraint");
        a[(p, n + g)] = 1.0;
        a[(n + g, p)] = 1.0;
        b[p] = model.to_target(ep, target_variable);
    }
    for (g, &v) in groups.iter().enumerate() {
        b[n + g] = if v == target_variable { 1.0 } else { 0.0 };
    }
    let lu = a.lu();
    let u = lu.u();
    let diag: Vec<f64> = u.diagonal().iter().map(|v| v.abs()).collect();
    let max = diag.iter().cloned().fold(0.0, f64::max);
    let min = diag.iter().cloned().fold(f64::INFINITY, f64::min);
    if !(max > 0.0) || min < 1e-12 * max {
        return None;
    }
    let x = lu.solve(&b)?;
    if x.iter().any(|v| !v.is_finite()) {
        return None;
    }
    Some(Solution {
        weights: x.as_slice()[..n].to_vec(),
        multipliers: x.as_slice()[n..].to_vec(),
        rhs: b.as_slice()[..n].to_vec(),
    })
}

/// Replaces observations of one variable sharing a location by their mean.
/// Returns the merged entries and, for each, the originals it stands for.
fn merge_duplicates(entries: &[Entry]) -> (Vec<Entry>, Vec<Vec<usize>>) {
    let mut groups: BTreeMap<(VariableId, u64, u64), Vec<usize>> = BTreeMap::new();
    let mut order = Vec::new();
    for (k, e) in entries.iter().enumerate() {
        let key = (e.variable, e.location.x.to_bits(), e.location.y.to_bits());
        let members = groups.entry(key).or_default();
        if members.is_empty() {
            order.push(key);
        }
        members.push(k);
    }
    let mut merged = Vec::with_capacity(order.len());
    let mut members = Vec::with_capacity(order.len());
    for key in order {
        let idx = groups.remove(&key).expect("key recorded");
        let first = entries[idx[0]];
        let value = idx.iter().map(|&k| entries[k].value).sum::<f64>() / idx.len() as f64;
        merged.push(Entry { value, ..first });
        members.push(idx);
    }
    (merged, members)
}

fn predict<M: CovarianceModel>(
    entries: Vec<Entry>,
    model: &M,
    target: Location,
    target_variable: VariableId,
) -> Result<KrigingPrediction> {
    let mut groups: Vec<VariableId> = entries.iter().map(|e| e.variable).collect();
    groups.sort_unstable();
    groups.dedup();

    let (used, members, sol) = match solve_system(&entries, &groups, model, target_variable) {
        Some(sol) => {
            let members = (0..entries.len()).map(|k| vec![k]).collect();
            (entries.clone(), members, sol)
        }
        None => {
            let (merged, members) = merge_duplicates(&entries);
            let sol = solve_system(&merged, &groups, model, target_variable).ok_or(GeoError::SingularSystem {
                n: merged.len() + groups.len(),
            })?;
            (merged, members, sol)
        }
    };

    let predicted_value = used.iter().zip(&sol.weights).map(|(e, w)| w * e.value).sum();
    let g_t = groups.binary_search(&target_variable).expect("target variable present");
    let mu = sol.multipliers[g_t];
    let explained: f64 = sol.weights.iter().zip(&sol.rhs).map(|(w, c)| w * c).sum();
    let variance = model.target_variance(target_variable) - explained - mu;

    let mut weights = vec![
        KrigingWeight {
            point_id: 0,
            variable: 0,
            distance: 0.0,
            weight: 0.0,
        };
        entries.len()
    ];
    for (w, idx) in sol.weights.iter().zip(&members) {
        let share = w / idx.len() as f64;
        for &k in idx {
            let e = &entries[k];
            weights[k] = KrigingWeight {
                point_id: e.point_id,
                variable: e.variable,
                distance: e.distance,
                weight: share,
            };
        }
    }
    Ok(KrigingPrediction {
        target,
        variable: target_variable,
        predicted_value,
        kriging_variance: variance.max(0.0),
        n_neighbors_used: entries.len(),
        lagrange_multiplier: mu,
        weights,
    })
}

/// Observations of one variable indexed for repeated ordinary-kriging queries.
#[derive(Debug, Clone)]
pub struct OrdinaryKriger {
    observations: SpatialDataset,
    index: SpatialIndex,
    model: ExponentialVariogramModel,
    variable: VariableId,
}

impl OrdinaryKriger {
    pub fn new(observations: &SpatialDataset, model: ExponentialVariogramModel) -> Result<Self> {
        model.validate()?;
        let vars = observations.variables();
        if vars.len() > 1 {
            return Err(GeoError::InvalidDataset(format!(
                "ordinary kriging needs one variable, got {}",
                vars.len()
            )));
        }
        Ok(Self {
            index: SpatialIndex::build(observations)?,
            observations: observations.clone(),
            model,
            variable: vars[0],
        })
    }

    pub fn model(&self) -> &ExponentialVariogramModel {
        &self.model
    }

    pub fn predict(&self, target: Location, nbhd: &NeighborhoodSpec) -> Result<KrigingPrediction> {
        nbhd.validate()?;
        let pts = self.observations.points();
        let entries: Vec<Entry> = self
            .index
            .neighbors_within(target, nbhd.max_radius, Some(nbhd.max_points))
            .into_iter()
            .map(|n| {
                let p = &pts[n.index];
                Entry {
                    point_id: p.point_id,
                    variable: p.variable,
                    location: p.location,
                    value: p.value,
                    distance: n.distance,
                }
            })
            .collect();
        if entries.len() < nbhd.min_points {
            return Err(GeoError::TooFewNeighbors {
                found: entries.len(),
                required: nbhd.min_points,
            });
        }
        predict(entries, &self.model, target, self.variable)
    }
}

/// Ordinary kriging of `target` from a single-variable dataset.
pub fn ordinary_krige(
    obs: &SpatialDataset,
    model: &ExponentialVariogramModel,
    target: Location,
    nbhd: &NeighborhoodSpec,
) -> Result<KrigingPrediction> {
    OrdinaryKriger::new(obs, *model)?.predict(target, nbhd)
}

/// Multivariate observations indexed per variable for co-kriging queries.
#[derive(Debug, Clone)]
pub struct CoKriger {
    model: CoregionalizationModel,
    /// `(variable, its observations, index)` in ascending variable order.
    parts: Vec<(VariableId, SpatialDataset, SpatialIndex)>,
}

impl CoKriger {
    pub fn new(observations: &SpatialDataset, model: CoregionalizationModel) -> Result<Self> {
        if !model.is_psd() {
            return Err(GeoError::NotPositiveDefinite("coregionalization matrices".into()));
        }
        let mut parts = Vec::new();
        for v in observations.variables() {
            if v as usize >= N_VARS {
                return Err(GeoError::InvalidDataset(format!(
                    "variable id {v} outside the {N_VARS}-variable model"
                )));
            }
            let ds = observations.variable(v);
            let index = SpatialIndex::build(&ds)?;
            parts.push((v, ds, index));
        }
        if parts.is_empty() {
            return Err(GeoError::EmptyDataset);
        }
        Ok(Self { model, parts })
    }

    pub fn model(&self) -> &CoregionalizationModel {
        &self.model
    }

    /// Co-kriging of `target_variable` with up to `max_points` neighbours of
    /// every variable. Target-variable weights sum to 1, each auxiliary
    /// variable's weights to 0; auxiliaries without neighbours drop out.
    pub fn predict(
        &self,
        target: Location,
        target_variable: VariableId,
        nbhd: &NeighborhoodSpec,
    ) -> Result<KrigingPrediction> {
        nbhd.validate()?;
        if target_variable as usize >= N_VARS {
            return Err(invalid_param("target_variable", format!("{target_variable} >= {N_VARS}")));
        }
        let mut entries = Vec::new();
        let mut found_target = 0;
        for (v, ds, index) in &self.parts {
            let pts = ds.points();
            let found = index.neighbors_within(target, nbhd.max_radius, Some(nbhd.max_points));
            if *v == target_variable {
                found_target = found.len();
            }
            entries.extend(found.into_iter().map(|n| {
                let p = &pts[n.index];
                Entry {
                    point_id: p.point_id,
                    variable: p.variable,
                    location: p.location,
                    value: p.value,
                    distance: n.distance,
                }
            }));
        }
        if found_target < nbhd.min_points {
            return Err(GeoError::TooFewNeighbors {
                found: found_target,
                required: nbhd.min_points,
            });
        }
        predict(entries, &self.model, target, target_variable)
    }
}

pub fn cokrige(
    obs: &SpatialDataset,
    lmc: &CoregionalizationModel,
    target: Location,
    target_variable: VariableId,
    nbhd: &NeighborhoodSpec,
) -> Result<KrigingPrediction> {
    CoKriger::new(obs, *lmc)?.predict(target, target_variable, nbhd)
}

/// Predicts every target (its location and variable id) in parallel.
/// Failures are reported per target; output order follows `targets`.
pub fn krige_batch(
    obs: &SpatialDataset,
    model: &KrigingModel,
    targets: &SpatialDataset,
    nbhd: &NeighborhoodSpec,
) -> Vec<Result<KrigingPrediction>> {
    let pts = targets.points();
    match model {
        KrigingModel::Univariate(m) => {
            let krigers: BTreeMap<VariableId, Result<OrdinaryKriger>> = targets
                .variables()
                .into_iter()
                .map(|v| (v, OrdinaryKriger::new(&obs.variable(v), *m)))
                .collect();
            pts.par_iter()
                .map(|p| match &krigers[&p.variable] {
                    Ok(k) => k.predict(p.location, nbhd),
                    Err(e) => Err(e.clone()),
                })
                .collect()
        }
        KrigingModel::Coregionalized(lmc) => match CoKriger::new(obs, *lmc) {
            Ok(k) => pts
                .par_iter()
                .map(|p| k.predict(p.location, p.variable, nbhd))
                .collect(),
            Err(e) => pts.iter().map(|_| Err(e.clone())).collect(),
        },
    }
}
