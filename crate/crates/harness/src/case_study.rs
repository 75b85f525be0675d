//! Prediction of a three-variable index on geo-coded point data.
//!
//! Test rows are held out once; the known samples for increasing `n_known`
//! are nested prefixes of a single random permutation of the remaining rows.

use std::path::Path;

use geokrige::rng::stream_rng;
use geokrige::variogram::CROSS_PAIRS;
use geokrige::{
    build_index, empirical_cross_variogram, empirical_variogram_binned, fit_lmc, krige_batch, quintile_breaks,
    reliability, sample_nodes, simulate_shared_noise_fields, BinSpec, CoregionalizationModel, CrossMode,
    EmpiricalVariogram, ExponentialVariogramModel, KrigingModel, Location, NeighborhoodSpec, Observation,
    SpatialDataset, Stats, TestPoints,
};
use rand::seq::SliceRandom;

use crate::config::{CaseStudyConfig, KnownPoints, VariogramSource};
use crate::error::{HarnessError, Result};
use crate::format::{fmt_g, CsvOut};
use crate::records::{screened_fit, VariogramRecord, RECORD_COLUMNS};
use crate::scenario::{resolve_threads, with_pool};

const CASE_STREAM: u64 = 0x6361_7365;

pub const CASE_RESULTS: &str = "case_study_results.csv";
pub const CASE_VARIOGRAMS: &str = "variogram_params.csv";

/// Rows of a case-study input file.
#[derive(Debug, Clone, PartialEq)]
pub struct CaseData {
    pub ids: Vec<u64>,
    pub locations: Vec<Location>,
    pub values: Vec<[f64; 3]>,
}

impl CaseData {
    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    /// Collocated dataset of the selected rows; variable ids 0, 1, 2.
    fn dataset(&self, rows: &[usize]) -> Result<SpatialDataset> {
        let points = (0..3u8)
            .flat_map(|v| {
                rows.iter()
                    .map(move |&r| Observation::new(self.ids[r], self.locations[r], self.values[r][v as usize], v))
            })
            .collect();
        Ok(SpatialDataset::new(points)?)
    }
}

/// Reads `cfg.input`; rows with missing or non-finite fields are reported on
/// stderr and skipped, and the file is rejected when more than 1% are bad.
pub fn read_case_csv(path: &Path, cfg: &CaseStudyConfig) -> Result<CaseData> {
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| HarnessError::data(format!("{}: {e}", path.display())))?;
    let headers = reader.headers()?.clone();
    let col = |name: &str| {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| HarnessError::config(format!("{}: missing column `{name}`", path.display())))
    };
    let id = col(&cfg.id_column)?;
    let x = col(&cfg.x_column)?;
    let y = col(&cfg.y_column)?;
    let vars = [col(&cfg.variables[0])?, col(&cfg.variables[1])?, col(&cfg.variables[2])?];

    let mut data = CaseData {
        ids: Vec::new(),
        locations: Vec::new(),
        values: Vec::new(),
    };
    let mut bad = 0usize;
    let mut total = 0usize;
    for (k, rec) in reader.records().enumerate() {
        total += 1;
        let line = k + 2;
        let parsed = rec.map_err(|e| e.to_string()).and_then(|rec| {
            let num = |i: usize| -> std::result::Result<f64, String> {
                let s = rec.get(i).ok_or("missing field")?;
                let v: f64 = s.parse().map_err(|_| format!("`{s}` is not a number"))?;
                if v.is_finite() {
                    Ok(v)
                } else {
                    Err(format!("`{s}` is not finite"))
                }
            };
            let pid: u64 = rec
                .get(id)
                .ok_or("missing id")?
                .parse()
                .map_err(|_| "point id is not an unsigned integer".to_string())?;
            Ok((pid, Location::new(num(x)?, num(y)?), [num(vars[0])?, num(vars[1])?, num(vars[2])?]))
        });
        match parsed {
            Ok((pid, loc, vals)) => {
                data.ids.push(pid);
                data.locations.push(loc);
                data.values.push(vals);
            }
            Err(msg) => {
                bad += 1;
                eprintln!("{}:{line}: skipped row: {msg}", path.display());
            }
        }
    }
    if bad * 100 > total {
        return Err(HarnessError::data(format!(
            "{}: {bad} of {total} rows are unusable (limit 1%)",
            path.display()
        )));
    }
    let mut seen = std::collections::HashSet::new();
    if let Some(dup) = data.ids.iter().find(|i| !seen.insert(**i)) {
        return Err(HarnessError::data(format!("{}: duplicate point id {dup}", path.display())));
    }
    Ok(data)
}

pub fn write_case_csv(path: &Path, data: &CaseData) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| HarnessError::data(format!("{}: {e}", path.display())))?;
    w.write_record(["point_id", "x_m", "y_m", "var_1", "var_2", "var_3"])?;
    for i in 0..data.len() {
        let [a, b, c] = data.values[i];
        w.write_record([
            data.ids[i].to_string(),
            data.locations[i].x.to_string(),
            data.locations[i].y.to_string(),
            a.to_string(),
            b.to_string(),
            c.to_string(),
        ])?;
    }
    w.flush().map_err(|e| HarnessError::io(path, e))
}

/// Synthetic stand-in for survey data: three correlated exponential fields
/// observed at random grid nodes.
#[derive(Debug, Clone, PartialEq)]
pub struct SurrogateSpec {
    pub n_points: usize,
    pub extent_m: f64,
    pub resolution_m: f64,
    /// Weight of the common noise component, i.e. the structural correlation
    /// for fields of equal scale.
    pub shared: f64,
    pub models: [ExponentialVariogramModel; 3],
}

impl Default for SurrogateSpec {
    /// All-points fits of the three perceived-neighbourhood scores.
    fn default() -> Self {
        let m = |sill, scale| ExponentialVariogramModel::from_scale(0.0, sill, scale).expect("valid generator");
        Self {
            n_points: 7290,
            extent_m: 15000.0,
            resolution_m: 50.0,
            shared: 0.7,
            models: [m(0.489, 249.71), m(0.233, 209.682), m(0.204, 225.641)],
        }
    }
}

pub fn generate_surrogate(spec: &SurrogateSpec, seed: u64) -> Result<CaseData> {
    let fields = simulate_shared_noise_fields(spec.extent_m, spec.resolution_m, &spec.models, spec.shared, seed)?;
    let grid = fields[0].grid;
    let nodes = sample_nodes(&grid, spec.n_points, &TestPoints::none(), seed)?;
    Ok(CaseData {
        ids: (1..=nodes.len() as u64).collect(),
        locations: nodes.iter().map(|&k| grid.location(k)).collect(),
        values: nodes
            .iter()
            .map(|&k| [fields[0].values[k], fields[1].values[k], fields[2].values[k]])
            .collect(),
    })
}

/// Variograms fitted on one set of rows at one maximum distance.
#[derive(Debug, Clone)]
pub struct FittedSet {
    pub univariate: [Option<ExponentialVariogramModel>; 3],
    pub lmc: Option<CoregionalizationModel>,
    pub records: Vec<VariogramRecord>,
}

fn fit_set(ds: &SpatialDataset, max_dist: f64, n_bins: usize, want_lmc: bool) -> Result<FittedSet> {
    let bins = BinSpec::equal_width(max_dist, n_bins)?;
    let parts: Vec<SpatialDataset> = (0..3).map(|v| ds.variable(v)).collect();
    let mut univariate = [None; 3];
    let mut records = Vec::new();
    let mut emps = Vec::new();
    for (v, part) in parts.iter().enumerate() {
        let label = format!("var_{}", v + 1);
        let emp = empirical_variogram_binned(part, &bins)?;
        match screened_fit(&emp, true) {
            Ok(s) => {
                records.push(s.record(label, max_dist));
                univariate[v] = Some(s.fit.model);
            }
            Err(e) => records.push(VariogramRecord::failed(label, max_dist, e.to_string())),
        }
        emps.push(emp);
    }
    let mut lmc = None;
    if want_lmc {
        let direct: [EmpiricalVariogram; 3] = emps.try_into().expect("three variables");
        let cross = CROSS_PAIRS
            .map(|(i, j)| empirical_cross_variogram(&parts[i], &parts[j], &bins, CrossMode::Collocated));
        let [a, b, c] = cross;
        let cross = [a?, b?, c?];
        let mut thetas: Vec<f64> = univariate.iter().flatten().map(|m| m.theta).collect();
        thetas.sort_by(f64::total_cmp);
        let theta0 = thetas.get(thetas.len() / 2).copied().unwrap_or(6.0 / max_dist);
        match fit_lmc(&direct, &cross, theta0) {
            Ok(fit) => {
                records.extend(VariogramRecord::from_lmc(&fit, max_dist));
                lmc = Some(fit.model);
            }
            Err(e) => records.push(VariogramRecord::failed("lmc", max_dist, e.to_string())),
        }
    }
    Ok(FittedSet {
        univariate,
        lmc,
        records,
    })
}

/// One row of `case_study_results.csv`.
#[derive(Debug, Clone, PartialEq)]
pub struct CaseRow {
    pub n_known: usize,
    pub n_known_label: String,
    pub method: &'static str,
    pub prop_correct: f64,
    pub prop_correct_or_neighbor: f64,
    /// Predicted minus true index value.
    pub residual: Stats,
    pub mean_bias_sd_units: f64,
    pub mse: f64,
}

#[derive(Debug, Clone)]
pub struct CaseStudyOutcome {
    pub config: CaseStudyConfig,
    pub rows: Vec<CaseRow>,
    /// `(sample label, fit)`; the label is `all_points` for fits on every row.
    pub fits: Vec<(String, VariogramRecord)>,
    pub sd_true: f64,
}

impl CaseStudyOutcome {
    pub fn row(&self, label: &str, method: &str) -> Option<&CaseRow> {
        self.rows.iter().find(|r| r.n_known_label == label && r.method == method)
    }
}

pub fn run_case_study(cfg: &CaseStudyConfig, data: &CaseData, threads: Option<usize>) -> Result<CaseStudyOutcome> {
    cfg.validate()?;
    if data.len() < cfg.n_test_points + 100 {
        return Err(HarnessError::data(format!(
            "{} rows; need at least {} test points + 100",
            data.len(),
            cfg.n_test_points
        )));
    }
    let threads = resolve_threads(threads)?;
    with_pool(threads, || case_study_inner(cfg, data))?
}

fn case_study_inner(cfg: &CaseStudyConfig, data: &CaseData) -> Result<CaseStudyOutcome> {
    let mut order: Vec<usize> = (0..data.len()).collect();
    order.shuffle(&mut stream_rng(cfg.seed, CASE_STREAM, 0));
    let (tests, rest) = order.split_at(cfg.n_test_points);
    let mut tests = tests.to_vec();
    tests.sort_unstable();

    let truth: Vec<f64> = tests
        .iter()
        .map(|&r| build_index(&data.values[r].map(Some), cfg.index_mode))
        .collect::<geokrige::Result<_>>()?;
    let breaks = quintile_breaks(&truth)?;
    let sd_true = Stats::of(&truth).sd;
    let targets = data.dataset(&tests)?;
    let target_parts: Vec<SpatialDataset> = (0..3).map(|v| targets.variable(v)).collect();
    let nbhd = NeighborhoodSpec::nearest(cfg.n_neighbors)?;

    let sizes: Vec<(String, usize)> = cfg
        .n_known
        .iter()
        .map(|k| match *k {
            KnownPoints::All => Ok(("all".to_string(), rest.len())),
            KnownPoints::Count(n) if n <= rest.len() => Ok((n.to_string(), n)),
            KnownPoints::Count(n) => Err(HarnessError::config(format!(
                "n_known {n} exceeds the {} non-test rows",
                rest.len()
            ))),
        })
        .collect::<Result<_>>()?;

    let mut fits = Vec::new();
    let all_rows: Vec<usize> = (0..data.len()).collect();
    let all_ds = data.dataset(&all_rows)?;
    let mut distances = cfg.max_vgm_dist_m.clone();
    if !distances.contains(&cfg.prediction_vgm_dist_m) {
        distances.push(cfg.prediction_vgm_dist_m);
    }
    let mut all_points_fit = None;
    for &d in &distances {
        let set = fit_set(&all_ds, d, cfg.n_bins, cfg.multivariate)?;
        if d == cfg.prediction_vgm_dist_m {
            all_points_fit = Some(set.clone());
        }
        if cfg.max_vgm_dist_m.contains(&d) {
            fits.extend(set.records.into_iter().map(|r| ("all_points".to_string(), r)));
        }
    }

    let mut rows = Vec::new();
    for (label, n) in &sizes {
        let known = &rest[..*n];
        let obs = data.dataset(known)?;
        let mut sample_fit = None;
        for &d in &distances {
            let set = fit_set(&obs, d, cfg.n_bins, cfg.multivariate)?;
            if d == cfg.prediction_vgm_dist_m {
                sample_fit = Some(set.clone());
            }
            if cfg.max_vgm_dist_m.contains(&d) {
                fits.extend(set.records.into_iter().map(|r| (label.clone(), r)));
            }
        }
        let set = match cfg.variogram_source {
            VariogramSource::AllPoints => all_points_fit.as_ref(),
            VariogramSource::SampledPoints => sample_fit.as_ref(),
        }
        .expect("prediction distance is always fitted");

        let mut predictions: Vec<(&'static str, Vec<f64>)> = Vec::new();
        if cfg.univariate {
            let mut per_var = Vec::new();
            for v in 0..3 {
                let m = set.univariate[v].ok_or_else(|| {
                    HarnessError::data(format!("no variogram for {} at n_known {label}", cfg.variables[v]))
                })?;
                let res = krige_batch(&obs.variable(v as u8), &KrigingModel::Univariate(m), &target_parts[v], &nbhd);
                per_var.push(res.into_iter().collect::<geokrige::Result<Vec<_>>>()?);
            }
            let index = (0..tests.len())
                .map(|i| build_index(&[0, 1, 2].map(|v| Some(per_var[v][i].predicted_value)), cfg.index_mode))
                .collect::<geokrige::Result<_>>()?;
            predictions.push(("univariate", index));
        }
        if cfg.multivariate {
            let lmc = set
                .lmc
                .ok_or_else(|| HarnessError::data(format!("no coregionalization model at n_known {label}")))?;
            let res = krige_batch(&obs, &KrigingModel::Coregionalized(lmc), &targets, &nbhd)
                .into_iter()
                .collect::<geokrige::Result<Vec<_>>>()?;
            let t = tests.len();
            let index = (0..t)
                .map(|i| build_index(&[0, 1, 2].map(|v| Some(res[v * t + i].predicted_value)), cfg.index_mode))
                .collect::<geokrige::Result<_>>()?;
            predictions.push(("multivariate", index));
        }
        for (method, pred) in predictions {
            let rel = reliability(&pred, &truth, &breaks)?;
            let resid: Vec<f64> = pred.iter().zip(&truth).map(|(p, t)| p - t).collect();
            let residual = Stats::of(&resid);
            rows.push(CaseRow {
                n_known: *n,
                n_known_label: label.clone(),
                method,
                prop_correct: rel.prop_correct,
                prop_correct_or_neighbor: rel.prop_correct_or_neighbor,
                mean_bias_sd_units: residual.mean / sd_true,
                mse: resid.iter().map(|r| r * r).sum::<f64>() / resid.len() as f64,
                residual,
            });
        }
    }
    Ok(CaseStudyOutcome {
        config: cfg.clone(),
        rows,
        fits,
        sd_true,
    })
}

pub fn write_case_outputs(dir: &Path, o: &CaseStudyOutcome) -> Result<()> {
    let header = o.config.resolved();
    let mut out = CsvOut::create(
        &dir.join(CASE_RESULTS),
        &header,
        &[
            "n_known",
            "n_known_label",
            "variogram_source",
            "method",
            "prop_correct",
            "prop_correct_or_neighbor",
            "residual_mean",
            "residual_sd",
            "residual_median",
            "mean_bias_sd_units",
            "mse",
        ],
    )?;
    for r in &o.rows {
        out.row([
            r.n_known.to_string(),
            r.n_known_label.clone(),
            o.config.variogram_source.to_string(),
            r.method.to_string(),
            fmt_g(r.prop_correct),
            fmt_g(r.prop_correct_or_neighbor),
            fmt_g(r.residual.mean),
            fmt_g(r.residual.sd),
            fmt_g(r.residual.median),
            fmt_g(r.mean_bias_sd_units),
            fmt_g(r.mse),
        ])?;
    }
    out.finish()?;
    let mut cols = vec!["sample"];
    cols.extend(RECORD_COLUMNS);
    let mut out = CsvOut::create(&dir.join(CASE_VARIOGRAMS), &header, &cols)?;
    for (label, rec) in &o.fits {
        rec.write(&mut out, std::slice::from_ref(label))?;
    }
    out.finish()
}
