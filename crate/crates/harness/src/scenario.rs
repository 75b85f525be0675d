//! Monte-Carlo replication engine for one simulation-design cell.
//!
//! The field(s) and test points are drawn once per scenario; replication `k`
//! draws its sample from a stream addressed by `(seed, k)`, so runs are
//! identical for any thread count and can be extended without recomputing
//! earlier replications.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use geokrige::rng::derive_seed;
use geokrige::variogram::CROSS_PAIRS;
use geokrige::{
    empirical_cross_variogram, empirical_variogram_binned, equicorrelation, fit_lmc, krige_batch, point_metrics,
    quintile_breaks, sample_collocated, sample_heterotopic, sample_observations, select_test_points, simulate_grf,
    simulate_multivariate_grf, summarize, BinSpec, CoregionalizationModel, CrossMode, EmpiricalVariogram,
    ExponentialVariogramModel, FieldRealization, KrigingModel, Location, NeighborhoodSpec, PointSummary,
    QuintileBreaks, ScenarioSummary, SpatialDataset, TestPoints,
};
use rayon::prelude::*;

use crate::config::{Multivariate, QuintileSource, ScenarioConfig, VariogramMode};
use crate::error::{HarnessError, Result};
use crate::format::{fmt_g, fmt_opt, open_csv, read_header, CsvOut};
use crate::records::{screened_fit, VariogramRecord, RECORD_COLUMNS};

const FIELD_STREAM: u64 = 0x6669_656c_64;
const TEST_STREAM: u64 = 0x7465_7374;
const REPLICATION_STREAM: u64 = 0x7265_706c;

pub const SCENARIO_SUMMARY: &str = "scenario_summary.csv";
pub const POINT_SUMMARY: &str = "point_summary.csv";
pub const VARIOGRAM_PARAMS: &str = "variogram_params.csv";
pub const REPLICATIONS: &str = "replications.csv";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    /// Univariate scenario.
    OrdinaryKriging,
    /// Multivariate scenario, each variable kriged on its own.
    Univariate,
    CoKriging,
}

impl Method {
    pub fn label(&self) -> &'static str {
        match self {
            Self::OrdinaryKriging => "ordinary_kriging",
            Self::Univariate => "univariate",
            Self::CoKriging => "cokriging",
        }
    }

    fn parse(s: &str) -> Option<Self> {
        [Self::OrdinaryKriging, Self::Univariate, Self::CoKriging]
            .into_iter()
            .find(|m| m.label() == s)
    }
}

#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    /// Worker threads; falls back to `GEOKRIGE_THREADS`, then to all cores.
    pub threads: Option<usize>,
    /// Directory for the CSV artifacts; nothing is written when unset.
    pub out_dir: Option<PathBuf>,
    /// Reuse replications stored in `out_dir` by an earlier run of the same scenario.
    pub resume: bool,
}

pub fn resolve_threads(threads: Option<usize>) -> Result<usize> {
    match threads {
        Some(t) => Ok(t),
        None => match std::env::var("GEOKRIGE_THREADS") {
            Ok(v) => v
                .trim()
                .parse()
                .map_err(|_| HarnessError::config(format!("GEOKRIGE_THREADS = `{v}` is not a count"))),
            Err(_) => Ok(0),
        },
    }
}

/// Runs `f` on a pool of `threads` workers (0 = rayon default).
pub fn with_pool<T: Send>(threads: usize, f: impl FnOnce() -> T + Send) -> Result<T> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| HarnessError::config(format!("thread pool: {e}")))?;
    Ok(pool.install(f))
}

/// Per-replication predictions at the test points.
#[derive(Debug, Clone, PartialEq)]
struct Replication {
    index: usize,
    /// `[method][test point]`; NaN where prediction failed.
    predicted: Vec<Vec<f64>>,
    kriging_variance: Vec<Vec<f64>>,
    valid: Vec<bool>,
    /// Formatted `variogram_params.csv` fields (without the replication column).
    fit_rows: Vec<Vec<String>>,
}

#[derive(Debug, Clone)]
pub struct ScenarioOutcome {
    pub config: ScenarioConfig,
    pub methods: Vec<Method>,
    pub summaries: Vec<ScenarioSummary>,
    /// `[method][test point]`.
    pub points: Vec<Vec<PointSummary>>,
    pub test_locations: Vec<Location>,
    pub true_quintiles: Vec<u8>,
    pub breaks: QuintileBreaks,
    /// Replications with an invalid fit, per method.
    pub n_invalid: Vec<usize>,
    pub fit_rows: Vec<(usize, Vec<String>)>,
}

impl ScenarioOutcome {
    pub fn summary(&self, method: Method) -> Option<&ScenarioSummary> {
        self.methods.iter().position(|m| *m == method).map(|k| &self.summaries[k])
    }
}

struct Setup {
    fields: Vec<FieldRealization>,
    tests: TestPoints,
    /// One target dataset per variable.
    targets: Vec<SpatialDataset>,
    all_targets: SpatialDataset,
    truth: Vec<f64>,
    sd_true: f64,
    true_model: ExponentialVariogramModel,
    true_lmc: Option<CoregionalizationModel>,
    nbhd: NeighborhoodSpec,
    bins: BinSpec,
}

fn methods_for(cfg: &ScenarioConfig) -> Vec<Method> {
    match cfg.multivariate {
        Multivariate::Off => vec![Method::OrdinaryKriging],
        _ => vec![Method::Univariate, Method::CoKriging],
    }
}

/// The generating model: unit total variance split into nugget and partial sill.
pub fn true_model(cfg: &ScenarioConfig) -> Result<ExponentialVariogramModel> {
    Ok(ExponentialVariogramModel::from_range(cfg.nugget, 1.0 - cfg.nugget, cfg.range_m)?)
}

/// The field realization(s) of a scenario; one per variable.
pub fn simulate_scenario_fields(cfg: &ScenarioConfig) -> Result<Vec<FieldRealization>> {
    let model = true_model(cfg)?;
    let field_seed = derive_seed(cfg.seed, FIELD_STREAM, 0);
    Ok(match cfg.multivariate {
        Multivariate::Off => vec![simulate_grf(cfg.extent_m, cfg.resolution_m, model, field_seed)?],
        _ => simulate_multivariate_grf(cfg.extent_m, cfg.resolution_m, model, cfg.correlation, field_seed)?.fields,
    })
}

fn setup(cfg: &ScenarioConfig) -> Result<Setup> {
    let true_model = true_model(cfg)?;
    let fields = simulate_scenario_fields(cfg)?;
    let true_lmc = match cfg.multivariate {
        Multivariate::Off => None,
        _ => Some(CoregionalizationModel::intrinsic(&true_model, &equicorrelation(cfg.correlation))?),
    };
    let grid = fields[0].grid;
    let tests = select_test_points(&grid, cfg.n_test_points, derive_seed(cfg.seed, TEST_STREAM, 0))?;
    let targets: Vec<SpatialDataset> = fields
        .iter()
        .enumerate()
        .map(|(v, f)| tests.dataset(f, v as u8))
        .collect();
    let all_targets = SpatialDataset::concat(&targets)?;
    let truth: Vec<f64> = (0..tests.len())
        .map(|i| targets.iter().map(|t| t.points()[i].value).sum())
        .collect();
    // total variance is 1 per variable; the index of three equicorrelated
    // variables has variance 3 + 6r
    let sd_true = match cfg.multivariate {
        Multivariate::Off => true_model.total_sill().sqrt(),
        _ => (3.0 + 6.0 * cfg.correlation).sqrt(),
    };
    Ok(Setup {
        fields,
        tests,
        targets,
        all_targets,
        truth,
        sd_true,
        true_model,
        true_lmc,
        nbhd: NeighborhoodSpec::new(cfg.max_neighbors, cfg.max_radius_m, 1)?,
        bins: BinSpec::equal_width(cfg.max_vgm_dist_m, cfg.n_bins)?,
    })
}

fn unpack(results: Vec<geokrige::Result<geokrige::KrigingPrediction>>) -> (Vec<f64>, Vec<f64>) {
    results
        .into_iter()
        .map(|r| match r {
            Ok(p) => (p.predicted_value, p.kriging_variance),
            Err(_) => (f64::NAN, f64::NAN),
        })
        .unzip()
}

/// Per-variable screened fits; `None` where no fit could be computed.
fn fit_variables(
    parts: &[SpatialDataset],
    cfg: &ScenarioConfig,
    setup: &Setup,
    labels: &[&str],
    rows: &mut Vec<Vec<String>>,
) -> (Vec<Option<ExponentialVariogramModel>>, Vec<EmpiricalVariogram>, bool) {
    let mut models = Vec::new();
    let mut emps = Vec::new();
    let mut all_valid = true;
    for (ds, label) in parts.iter().zip(labels) {
        let screened = empirical_variogram_binned(ds, &setup.bins).and_then(|emp| {
            let s = screened_fit(&emp, cfg.refit_fallback)?;
            emps.push(emp);
            Ok(s)
        });
        match screened {
            Ok(s) => {
                all_valid &= s.validity.is_valid();
                rows.push(s.record(*label, cfg.max_vgm_dist_m).fields());
                models.push(Some(s.fit.model));
            }
            Err(e) => {
                all_valid = false;
                rows.push(VariogramRecord::failed(*label, cfg.max_vgm_dist_m, e.to_string()).fields());
                models.push(None);
            }
        }
    }
    (models, emps, all_valid)
}

fn replicate(cfg: &ScenarioConfig, setup: &Setup, index: usize) -> Result<Replication> {
    let seed = derive_seed(cfg.seed, REPLICATION_STREAM, index as u64);
    let n_tests = setup.tests.len();
    let nan = vec![f64::NAN; n_tests];
    let mut fit_rows = Vec::new();
    match cfg.multivariate {
        Multivariate::Off => {
            let obs = sample_observations(&setup.fields[0], cfg.n_sample_points, &setup.tests, seed)?;
            let (model, valid) = match cfg.variogram_mode {
                VariogramMode::Fixed => (Some(setup.true_model), true),
                VariogramMode::Estimated => {
                    let (models, _, valid) = fit_variables(&[obs.clone()], cfg, setup, &["z"], &mut fit_rows);
                    (models[0], valid)
                }
            };
            let (p, v) = match model {
                Some(m) => unpack(krige_batch(&obs, &KrigingModel::Univariate(m), &setup.targets[0], &setup.nbhd)),
                None => (nan.clone(), nan),
            };
            Ok(Replication {
                index,
                predicted: vec![p],
                kriging_variance: vec![v],
                valid: vec![valid],
                fit_rows,
            })
        }
        mode => {
            let obs = if mode == Multivariate::Collocated {
                sample_collocated(&setup.fields, cfg.n_sample_points, &setup.tests, seed)?
            } else {
                sample_heterotopic(&setup.fields, &cfg.per_variable_n, &setup.tests, seed)?
            };
            let parts: Vec<SpatialDataset> = (0..3).map(|v| obs.variable(v)).collect();
            let (models, lmc, uni_valid, lmc_valid) = match cfg.variogram_mode {
                VariogramMode::Fixed => (vec![Some(setup.true_model); 3], setup.true_lmc, true, true),
                VariogramMode::Estimated => {
                    let (models, emps, uni_valid) =
                        fit_variables(&parts, cfg, setup, &["var_1", "var_2", "var_3"], &mut fit_rows);
                    let (lmc, lmc_valid) = estimate_lmc(&parts, emps, &models, setup, cfg, &mut fit_rows);
                    (models, lmc, uni_valid, lmc_valid)
                }
            };
            let mut uni = vec![0.0; n_tests];
            for (v, m) in models.iter().enumerate() {
                let (p, _) = match m {
                    Some(m) => unpack(krige_batch(
                        &parts[v],
                        &KrigingModel::Univariate(*m),
                        &setup.targets[v],
                        &setup.nbhd,
                    )),
                    None => (nan.clone(), nan.clone()),
                };
                uni.iter_mut().zip(p).for_each(|(a, b)| *a += b);
            }
            let cok = match lmc {
                Some(lmc) => {
                    let (p, _) = unpack(krige_batch(
                        &obs,
                        &KrigingModel::Coregionalized(lmc),
                        &setup.all_targets,
                        &setup.nbhd,
                    ));
                    (0..n_tests).map(|i| p[i] + p[n_tests + i] + p[2 * n_tests + i]).collect()
                }
                None => nan.clone(),
            };
            Ok(Replication {
                index,
                predicted: vec![uni, cok],
                kriging_variance: vec![nan.clone(), nan],
                valid: vec![uni_valid, uni_valid && lmc_valid],
                fit_rows,
            })
        }
    }
}

fn estimate_lmc(
    parts: &[SpatialDataset],
    emps: Vec<EmpiricalVariogram>,
    models: &[Option<ExponentialVariogramModel>],
    setup: &Setup,
    cfg: &ScenarioConfig,
    rows: &mut Vec<Vec<String>>,
) -> (Option<CoregionalizationModel>, bool) {
    let fail = |rows: &mut Vec<Vec<String>>, reason: String| {
        rows.push(VariogramRecord::failed("lmc", cfg.max_vgm_dist_m, reason).fields());
        (None, false)
    };
    let Ok(direct) = <[EmpiricalVariogram; 3]>::try_from(emps) else {
        return fail(rows, "direct variogram missing".into());
    };
    let cross: geokrige::Result<Vec<EmpiricalVariogram>> = CROSS_PAIRS
        .iter()
        .map(|&(i, j)| empirical_cross_variogram(&parts[i], &parts[j], &setup.bins, CrossMode::Auto))
        .collect();
    let cross = match cross {
        Ok(c) => <[EmpiricalVariogram; 3]>::try_from(c).expect("three cross pairs"),
        Err(e) => return fail(rows, e.to_string()),
    };
    let mut thetas: Vec<f64> = models.iter().flatten().map(|m| m.theta).collect();
    thetas.sort_by(f64::total_cmp);
    let theta0 = thetas.get(thetas.len() / 2).copied().unwrap_or(6.0 / cfg.max_vgm_dist_m);
    match fit_lmc(&direct, &cross, theta0) {
        Ok(fit) => {
            let recs = VariogramRecord::from_lmc(&fit, cfg.max_vgm_dist_m);
            let valid = recs.iter().all(|r| r.valid);
            rows.extend(recs.iter().map(|r| r.fields()));
            (Some(fit.model), valid)
        }
        Err(e) => fail(rows, e.to_string()),
    }
}

pub fn run_scenario(cfg: &ScenarioConfig, opts: &RunOptions) -> Result<ScenarioOutcome> {
    cfg.validate()?;
    let threads = resolve_threads(opts.threads)?;
    let methods = methods_for(cfg);
    let mut stored = match (&opts.out_dir, opts.resume) {
        (Some(dir), true) => load_replications(&dir.join(REPLICATIONS), &dir.join(VARIOGRAM_PARAMS), cfg, &methods)?,
        _ => BTreeMap::new(),
    };
    stored.retain(|&k, _| k < cfg.n_replications);

    let (setup, fresh) = with_pool(threads, || -> Result<_> {
        let setup = setup(cfg)?;
        let missing: Vec<usize> = (0..cfg.n_replications).filter(|k| !stored.contains_key(k)).collect();
        let fresh: Vec<Replication> = missing
            .par_iter()
            .map(|&k| replicate(cfg, &setup, k))
            .collect::<Result<_>>()?;
        Ok((setup, fresh))
    })??;
    for r in fresh {
        stored.insert(r.index, r);
    }
    let reps: Vec<Replication> = stored.into_values().collect();

    let breaks = match cfg.quintile_source {
        QuintileSource::TestPoints => quintile_breaks(&setup.truth)?,
        QuintileSource::Normal => QuintileBreaks::normal(0.0, setup.sd_true)?,
    };
    let test_locations = setup.tests.locations(&setup.fields[0].grid);
    let mut points = Vec::new();
    let mut summaries = Vec::new();
    let mut n_invalid = Vec::new();
    for (m, method) in methods.iter().enumerate() {
        n_invalid.push(reps.iter().filter(|r| !r.valid[m]).count());
        let used: Vec<&Replication> = reps.iter().filter(|r| r.valid[m] || !cfg.censor_invalid).collect();
        let mut rows = Vec::with_capacity(setup.tests.len());
        for (i, &node) in setup.tests.nodes.iter().enumerate() {
            let mut pred = Vec::with_capacity(used.len());
            let mut var = Vec::with_capacity(used.len());
            for r in &used {
                if r.predicted[m][i].is_finite() {
                    pred.push(r.predicted[m][i]);
                    var.push(r.kriging_variance[m][i]);
                }
            }
            let pm = point_metrics(node as u64, &pred, setup.truth[i], setup.sd_true, &breaks).map_err(|e| {
                HarnessError::data(format!("test point {node} ({}): {e}", method.label()))
            })?;
            let pm = if *method == Method::OrdinaryKriging {
                pm.with_kriging_variances(&var)
            } else {
                pm
            };
            rows.push(pm);
        }
        let mut params = design_parameters(cfg);
        params.insert(0, ("method".into(), method.label().into()));
        summaries.push(summarize(params, &rows)?);
        points.push(rows);
    }
    let fit_rows: Vec<(usize, Vec<String>)> = match cfg.variogram_mode {
        VariogramMode::Fixed => true_records(cfg, &setup)
            .into_iter()
            .map(|r| (usize::MAX, r.fields()))
            .collect(),
        VariogramMode::Estimated => reps
            .iter()
            .flat_map(|r| r.fit_rows.iter().map(move |f| (r.index, f.clone())))
            .collect(),
    };
    let outcome = ScenarioOutcome {
        config: cfg.clone(),
        methods,
        summaries,
        points,
        true_quintiles: setup.truth.iter().map(|&t| breaks.category(t)).collect(),
        test_locations,
        breaks,
        n_invalid,
        fit_rows,
    };
    if let Some(dir) = &opts.out_dir {
        write_outputs(dir, &outcome, &reps)?;
    }
    Ok(outcome)
}

fn true_records(cfg: &ScenarioConfig, setup: &Setup) -> Vec<VariogramRecord> {
    let truth = |label: &str| VariogramRecord::from_model(label, cfg.max_vgm_dist_m, &setup.true_model, true, None, false);
    match cfg.multivariate {
        Multivariate::Off => vec![truth("z")],
        _ => ["var_1", "var_2", "var_3"].into_iter().map(truth).collect(),
    }
}

/// Settings that identify a cell of the design tables.
fn design_parameters(cfg: &ScenarioConfig) -> Vec<(String, String)> {
    let keys = [
        "extent_m",
        "range_m",
        "nugget",
        "n_sample_points",
        "variogram_mode",
        "multivariate",
        "correlation",
    ];
    cfg.resolved().into_iter().filter(|(k, _)| keys.contains(&k.as_str())).collect()
}

const STAT_METRICS: [&str; 7] = [
    "prop_correct",
    "prop_correct_or_neighbor",
    "bias",
    "abs_bias",
    "empirical_se",
    "kriging_se",
    "mse",
];

fn write_outputs(dir: &Path, o: &ScenarioOutcome, reps: &[Replication]) -> Result<()> {
    let header = o.config.resolved();
    let design = design_parameters(&o.config);

    let mut cols: Vec<String> = vec!["method".into()];
    cols.extend(design.iter().map(|(k, _)| k.clone()));
    cols.extend(["n_points", "n_replications", "n_invalid_fits"].map(String::from));
    for m in STAT_METRICS {
        for s in ["mean", "sd", "median"] {
            cols.push(format!("{m}_{s}"));
        }
    }
    let col_refs: Vec<&str> = cols.iter().map(|s| s.as_str()).collect();
    let mut out = CsvOut::create(&dir.join(SCENARIO_SUMMARY), &header, &col_refs)?;
    for (k, s) in o.summaries.iter().enumerate() {
        let mut row = vec![o.methods[k].label().to_string()];
        row.extend(design.iter().map(|(_, v)| v.clone()));
        row.push(s.n_points.to_string());
        row.push(o.config.n_replications.to_string());
        row.push(o.n_invalid[k].to_string());
        let stats = [
            Some(s.prop_correct),
            Some(s.prop_correct_or_neighbor),
            Some(s.bias),
            Some(s.abs_bias),
            Some(s.empirical_se),
            s.kriging_se,
            Some(s.mse),
        ];
        for st in stats {
            match st {
                Some(st) => row.extend([fmt_g(st.mean), fmt_g(st.sd), fmt_g(st.median)]),
                None => row.extend([String::new(), String::new(), String::new()]),
            }
        }
        out.row(row)?;
    }
    out.finish()?;

    let mut out = CsvOut::create(
        &dir.join(POINT_SUMMARY),
        &header,
        &[
            "method",
            "point_id",
            "x_m",
            "y_m",
            "true_value",
            "true_quintile",
            "mean_prediction",
            "bias",
            "bias_raw",
            "empirical_se",
            "mean_kriging_se",
            "mse",
            "prop_correct_quintile",
            "prop_correct_or_neighbor",
            "n_replications",
        ],
    )?;
    for (k, rows) in o.points.iter().enumerate() {
        for (i, p) in rows.iter().enumerate() {
            let loc = o.test_locations[i];
            out.row([
                o.methods[k].label().to_string(),
                p.point_id.to_string(),
                fmt_g(loc.x),
                fmt_g(loc.y),
                fmt_g(p.true_value),
                o.true_quintiles[i].to_string(),
                fmt_g(p.mean_prediction),
                fmt_g(p.bias),
                fmt_g(p.bias_raw),
                fmt_g(p.empirical_se),
                fmt_opt(p.mean_kriging_se),
                fmt_g(p.mse),
                fmt_g(p.prop_correct_quintile),
                fmt_g(p.prop_correct_or_neighbor),
                p.n_replications.to_string(),
            ])?;
        }
    }
    out.finish()?;

    let mut cols = vec!["replication"];
    cols.extend(RECORD_COLUMNS);
    let mut out = CsvOut::create(&dir.join(VARIOGRAM_PARAMS), &header, &cols)?;
    for (rep, fields) in &o.fit_rows {
        let rep = if *rep == usize::MAX { "true".to_string() } else { rep.to_string() };
        out.row(std::iter::once(rep).chain(fields.iter().cloned()))?;
    }
    out.finish()?;

    // checkpoint for resumed runs; full round-trip precision
    let mut out = CsvOut::create(
        &dir.join(REPLICATIONS),
        &header,
        &["replication", "method", "point_id", "predicted", "kriging_variance", "valid"],
    )?;
    for r in reps {
        for (m, method) in o.methods.iter().enumerate() {
            for (i, p) in o.points[m].iter().enumerate() {
                out.row([
                    r.index.to_string(),
                    method.label().to_string(),
                    p.point_id.to_string(),
                    r.predicted[m][i].to_string(),
                    r.kriging_variance[m][i].to_string(),
                    r.valid[m].to_string(),
                ])?;
            }
        }
    }
    out.finish()
}

/// Replications stored by an earlier run whose settings differ from `cfg`
/// at most in `n_replications`.
fn load_replications(
    path: &Path,
    fits_path: &Path,
    cfg: &ScenarioConfig,
    methods: &[Method],
) -> Result<BTreeMap<usize, Replication>> {
    if !path.exists() {
        return Ok(BTreeMap::new());
    }
    let strip = |h: Vec<(String, String)>| -> Vec<(String, String)> {
        h.into_iter().filter(|(k, _)| k != "n_replications").collect()
    };
    if strip(read_header(path)?) != strip(cfg.resolved()) {
        return Err(HarnessError::config(format!(
            "{} was written for different settings; cannot resume",
            path.display()
        )));
    }
    let n_tests = cfg.n_test_points;
    let mut reps: BTreeMap<usize, Replication> = BTreeMap::new();
    let mut slot: BTreeMap<(usize, usize), usize> = BTreeMap::new();
    let bad = |msg: String| HarnessError::data(format!("{}: {msg}", path.display()));
    for rec in open_csv(path)?.records() {
        let rec = rec?;
        let field = |i: usize| rec.get(i).ok_or_else(|| bad(format!("short row {rec:?}")));
        let index: usize = field(0)?.parse().map_err(|_| bad("bad replication index".into()))?;
        let m = Method::parse(field(1)?)
            .and_then(|m| methods.iter().position(|x| *x == m))
            .ok_or_else(|| bad(format!("unexpected method `{}`", field(1).unwrap_or(""))))?;
        let num = |s: &str| s.parse::<f64>().map_err(|_| bad(format!("bad number `{s}`")));
        let r = reps.entry(index).or_insert_with(|| Replication {
            index,
            predicted: vec![Vec::with_capacity(n_tests); methods.len()],
            kriging_variance: vec![Vec::with_capacity(n_tests); methods.len()],
            valid: vec![true; methods.len()],
            fit_rows: Vec::new(),
        });
        r.predicted[m].push(num(field(3)?)?);
        r.kriging_variance[m].push(num(field(4)?)?);
        r.valid[m] = field(5)? == "true";
        *slot.entry((index, m)).or_default() += 1;
    }
    if slot.values().any(|&n| n != n_tests) || reps.values().any(|r| r.predicted.iter().any(|p| p.len() != n_tests)) {
        return Err(bad("incomplete replication rows".into()));
    }
    if cfg.variogram_mode == VariogramMode::Estimated && fits_path.exists() {
        for rec in open_csv(fits_path)?.records() {
            let rec = rec?;
            let Some(Ok(index)) = rec.get(0).map(str::parse::<usize>) else {
                continue;
            };
            if let Some(r) = reps.get_mut(&index) {
                r.fit_rows.push(rec.iter().skip(1).map(String::from).collect());
            }
        }
    }
    Ok(reps)
}
