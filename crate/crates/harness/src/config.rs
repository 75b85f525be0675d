//! Flat `key = value` configuration with command-line overrides.
//!
//! Every config type resolves to an ordered list of `(key, value)` pairs that
//! is written verbatim at the top of each output file, defaults included.

use std::collections::BTreeMap;
use std::fmt::Display;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use geokrige::IndexMode;

use crate::error::{HarnessError, Result};

/// Raw settings in the order they were given; later entries win.
#[derive(Debug, Clone, Default)]
pub struct KeyValues {
    entries: BTreeMap<String, String>,
}

impl KeyValues {
    pub fn parse(text: &str) -> Result<Self> {
        let mut kv = Self::default();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| HarnessError::config(format!("line {}: expected `key = value`, got `{raw}`", lineno + 1)))?;
            kv.set(k.trim(), v.trim())?;
        }
        Ok(kv)
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| HarnessError::config(format!("{}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        if key.is_empty() || key.contains(char::is_whitespace) {
            return Err(HarnessError::config(format!("invalid key `{key}`")));
        }
        self.entries.insert(key.to_string(), value.to_string());
        Ok(())
    }

    /// Applies a `key=value` override string.
    pub fn apply_override(&mut self, assignment: &str) -> Result<()> {
        let (k, v) = assignment
            .split_once('=')
            .ok_or_else(|| HarnessError::config(format!("override `{assignment}` is not key=value")))?;
        self.set(k.trim(), v.trim())
    }

    fn take(&mut self, key: &str) -> Option<String> {
        self.entries.remove(key)
    }

    fn get_or<T: FromStr>(&mut self, key: &str, default: T) -> Result<T>
    where
        T::Err: Display,
    {
        match self.take(key) {
            Some(v) => v
                .parse()
                .map_err(|e| HarnessError::config(format!("`{key}` = `{v}`: {e}"))),
            None => Ok(default),
        }
    }

    fn opt<T: FromStr>(&mut self, key: &str) -> Result<Option<T>>
    where
        T::Err: Display,
    {
        self.take(key)
            .map(|v| v.parse().map_err(|e| HarnessError::config(format!("`{key}` = `{v}`: {e}"))))
            .transpose()
    }

    fn list<T: FromStr>(&mut self, key: &str, default: Vec<T>) -> Result<Vec<T>>
    where
        T::Err: Display,
    {
        match self.take(key) {
            Some(v) => v
                .split(',')
                .map(|s| {
                    s.trim()
                        .parse()
                        .map_err(|e| HarnessError::config(format!("`{key}` item `{s}`: {e}")))
                })
                .collect(),
            None => Ok(default),
        }
    }

    fn finish(self) -> Result<()> {
        match self.entries.keys().next() {
            None => Ok(()),
            Some(_) => Err(HarnessError::config(format!(
                "unknown config keys: {}",
                self.entries.keys().cloned().collect::<Vec<_>>().join(", ")
            ))),
        }
    }
}

macro_rules! keyword_enum {
    ($name:ident { $($variant:ident => $text:literal),+ $(,)? }) => {
        #[derive(Debug, Clone, Copy, PartialEq, Eq)]
        pub enum $name {
            $($variant),+
        }

        impl FromStr for $name {
            type Err = String;
            fn from_str(s: &str) -> std::result::Result<Self, String> {
                match s {
                    $($text => Ok(Self::$variant),)+
                    _ => Err(format!("expected one of: {}", [$($text),+].join(", "))),
                }
            }
        }

        impl Display for $name {
            fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
                f.write_str(match self {
                    $(Self::$variant => $text,)+
                })
            }
        }
    };
}

keyword_enum!(VariogramMode { Estimated => "estimated", Fixed => "fixed" });
keyword_enum!(Multivariate { Off => "off", Collocated => "collocated", Heterotopic => "heterotopic" });
keyword_enum!(QuintileSource { TestPoints => "test_points", Normal => "normal" });
keyword_enum!(VariogramSource { AllPoints => "all_points", SampledPoints => "sampled_points" });

/// One cell of the simulation design.
#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioConfig {
    pub extent_m: f64,
    pub resolution_m: f64,
    pub range_m: f64,
    /// Nugget share of the unit total variance.
    pub nugget: f64,
    pub n_sample_points: usize,
    pub n_test_points: usize,
    pub n_replications: usize,
    pub variogram_mode: VariogramMode,
    pub max_vgm_dist_m: f64,
    pub n_bins: usize,
    pub multivariate: Multivariate,
    pub correlation: f64,
    /// Heterotopic sample size of each variable.
    pub per_variable_n: [usize; 3],
    pub max_neighbors: usize,
    pub max_radius_m: f64,
    pub quintile_source: QuintileSource,
    pub refit_fallback: bool,
    pub censor_invalid: bool,
    pub seed: u64,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            extent_m: 8000.0,
            resolution_m: 50.0,
            range_m: 600.0,
            nugget: 0.0,
            n_sample_points: 2300,
            n_test_points: 200,
            n_replications: 5000,
            variogram_mode: VariogramMode::Estimated,
            max_vgm_dist_m: 1000.0,
            n_bins: 15,
            multivariate: Multivariate::Off,
            correlation: 0.5,
            per_variable_n: [650, 1300, 2300],
            max_neighbors: 50,
            max_radius_m: 1000.0,
            quintile_source: QuintileSource::TestPoints,
            refit_fallback: true,
            censor_invalid: false,
            seed: 1,
        }
    }
}

impl ScenarioConfig {
    pub fn from_kv(mut kv: KeyValues) -> Result<Self> {
        let d = Self::default();
        let multivariate = kv.get_or("multivariate", d.multivariate)?;
        let default_reps = if multivariate == Multivariate::Off { 5000 } else { 1000 };
        let per = kv.list("per_variable_n", d.per_variable_n.to_vec())?;
        let per_variable_n: [usize; 3] = per
            .try_into()
            .map_err(|v: Vec<usize>| HarnessError::config(format!("per_variable_n needs 3 sizes, got {}", v.len())))?;
        let cfg = Self {
            extent_m: kv.get_or("extent_m", d.extent_m)?,
            resolution_m: kv.get_or("resolution_m", d.resolution_m)?,
            range_m: kv.get_or("range_m", d.range_m)?,
            nugget: kv.get_or("nugget", d.nugget)?,
            n_sample_points: kv.get_or("n_sample_points", d.n_sample_points)?,
            n_test_points: kv.get_or("n_test_points", d.n_test_points)?,
            n_replications: kv.get_or("n_replications", default_reps)?,
            variogram_mode: kv.get_or("variogram_mode", d.variogram_mode)?,
            max_vgm_dist_m: kv.get_or("max_vgm_dist_m", d.max_vgm_dist_m)?,
            n_bins: kv.get_or("n_bins", d.n_bins)?,
            multivariate,
            correlation: kv.get_or("correlation", d.correlation)?,
            per_variable_n,
            max_neighbors: kv.get_or("max_neighbors", d.max_neighbors)?,
            max_radius_m: kv.get_or("max_radius_m", d.max_radius_m)?,
            quintile_source: kv.get_or("quintile_source", d.quintile_source)?,
            refit_fallback: kv.get_or("refit_fallback", d.refit_fallback)?,
            censor_invalid: kv.get_or("censor_invalid", d.censor_invalid)?,
            seed: kv.get_or("seed", d.seed)?,
        };
        kv.finish()?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("extent_m", self.extent_m),
            ("resolution_m", self.resolution_m),
            ("range_m", self.range_m),
            ("max_vgm_dist_m", self.max_vgm_dist_m),
            ("max_radius_m", self.max_radius_m),
        ];
        for (k, v) in positive {
            if !(v > 0.0) {
                return Err(HarnessError::config(format!("{k} must be > 0, got {v}")));
            }
        }
        if !(0.0..1.0).contains(&self.nugget) {
            return Err(HarnessError::config(format!("nugget must lie in [0, 1), got {}", self.nugget)));
        }
        if !(0.0..1.0).contains(&self.correlation) {
            return Err(HarnessError::config(format!(
                "correlation must lie in [0, 1), got {}",
                self.correlation
            )));
        }
        let counts = [
            ("n_sample_points", self.n_sample_points),
            ("n_test_points", self.n_test_points),
            ("n_bins", self.n_bins),
            ("max_neighbors", self.max_neighbors),
        ];
        for (k, v) in counts {
            if v == 0 {
                return Err(HarnessError::config(format!("{k} must be positive")));
            }
        }
        if self.n_replications < 2 {
            return Err(HarnessError::config("n_replications must be at least 2"));
        }
        if self.per_variable_n.contains(&0) {
            return Err(HarnessError::config("per_variable_n sizes must be positive"));
        }
        if self.n_test_points < 5 {
            return Err(HarnessError::config("quintiles need at least 5 test points"));
        }
        let grid = geokrige::Grid::new(self.extent_m, self.resolution_m).map_err(|e| HarnessError::config(e.to_string()))?;
        let available = grid.node_count().saturating_sub(self.n_test_points);
        let largest = match self.multivariate {
            Multivariate::Heterotopic => *self.per_variable_n.iter().max().unwrap(),
            _ => self.n_sample_points,
        };
        if self.n_test_points > grid.node_count() || largest > available {
            return Err(HarnessError::config(format!(
                "{largest} sample points and {} test points do not fit on {} grid nodes",
                self.n_test_points,
                grid.node_count()
            )));
        }
        Ok(())
    }

    /// Every setting, defaults included, in a fixed order.
    pub fn resolved(&self) -> Vec<(String, String)> {
        let p = &self.per_variable_n;
        let entries: Vec<(&str, String)> = vec![
            ("extent_m", self.extent_m.to_string()),
            ("resolution_m", self.resolution_m.to_string()),
            ("range_m", self.range_m.to_string()),
            ("nugget", self.nugget.to_string()),
            ("n_sample_points", self.n_sample_points.to_string()),
            ("n_test_points", self.n_test_points.to_string()),
            ("n_replications", self.n_replications.to_string()),
            ("variogram_mode", self.variogram_mode.to_string()),
            ("max_vgm_dist_m", self.max_vgm_dist_m.to_string()),
            ("n_bins", self.n_bins.to_string()),
            ("multivariate", self.multivariate.to_string()),
            ("correlation", self.correlation.to_string()),
            ("per_variable_n", format!("{},{},{}", p[0], p[1], p[2])),
            ("max_neighbors", self.max_neighbors.to_string()),
            ("max_radius_m", self.max_radius_m.to_string()),
            ("quintile_source", self.quintile_source.to_string()),
            ("refit_fallback", self.refit_fallback.to_string()),
            ("censor_invalid", self.censor_invalid.to_string()),
            ("seed", self.seed.to_string()),
        ];
        entries.into_iter().map(|(k, v)| (k.to_string(), v)).collect()
    }
}

/// Settings of the single-dataset `variogram` and `krige` commands.
#[derive(Debug, Clone, PartialEq)]
pub struct PointToolConfig {
    pub max_vgm_dist_m: f64,
    pub n_bins: usize,
    /// Fixed model; fitted from the data when absent.
    pub model: Option<geokrige::ExponentialVariogramModel>,
    pub max_neighbors: usize,
    pub max_radius_m: f64,
    pub min_neighbors: usize,
    pub refit_fallback: bool,
}

impl PointToolConfig {
    pub fn from_kv(mut kv: KeyValues) -> Result<Self> {
        let nugget: f64 = kv.get_or("nugget", 0.0)?;
        let sill: Option<f64> = kv.opt("partial_sill")?;
        let range: Option<f64> = kv.opt("range_m")?;
        let model = match (sill, range) {
            (Some(s), Some(r)) => Some(
                geokrige::ExponentialVariogramModel::from_range(nugget, s, r)
                    .map_err(|e| HarnessError::config(e.to_string()))?,
            ),
            (None, None) => None,
            _ => return Err(HarnessError::config("a fixed model needs both partial_sill and range_m")),
        };
        let cfg = Self {
            max_vgm_dist_m: kv.get_or("max_vgm_dist_m", 1000.0)?,
            n_bins: kv.get_or("n_bins", 15)?,
            model,
            max_neighbors: kv.get_or("max_neighbors", 50)?,
            max_radius_m: kv.get_or("max_radius_m", f64::INFINITY)?,
            min_neighbors: kv.get_or("min_neighbors", 1)?,
            refit_fallback: kv.get_or("refit_fallback", true)?,
        };
        kv.finish()?;
        if !(cfg.max_vgm_dist_m > 0.0) || cfg.n_bins == 0 {
            return Err(HarnessError::config("max_vgm_dist_m and n_bins must be positive"));
        }
        Ok(cfg)
    }

    pub fn resolved(&self) -> Vec<(String, String)> {
        let mut out = vec![
            ("max_vgm_dist_m".to_string(), self.max_vgm_dist_m.to_string()),
            ("n_bins".to_string(), self.n_bins.to_string()),
        ];
        if let Some(m) = &self.model {
            out.push(("nugget".into(), m.nugget.to_string()));
            out.push(("partial_sill".into(), m.partial_sill.to_string()));
            out.push(("range_m".into(), m.practical_range().range3.to_string()));
        }
        out.extend([
            ("max_neighbors".to_string(), self.max_neighbors.to_string()),
            ("max_radius_m".to_string(), self.max_radius_m.to_string()),
            ("min_neighbors".to_string(), self.min_neighbors.to_string()),
            ("refit_fallback".to_string(), self.refit_fallback.to_string()),
        ]);
        out
    }
}

/// Sample size choice of the case study; `All` keeps every non-test row.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum KnownPoints {
    Count(usize),
    All,
}

impl FromStr for KnownPoints {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        if s == "all" {
            return Ok(Self::All);
        }
        s.parse().map(Self::Count).map_err(|_| format!("expected a count or `all`, got `{s}`"))
    }
}

impl Display for KnownPoints {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Self::Count(n) => write!(f, "{n}"),
            Self::All => f.write_str("all"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CaseStudyConfig {
    pub input: PathBuf,
    pub id_column: String,
    pub x_column: String,
    pub y_column: String,
    pub variables: [String; 3],
    pub n_test_points: usize,
    pub n_known: Vec<KnownPoints>,
    pub variogram_source: VariogramSource,
    /// Distances of the parameter table.
    pub max_vgm_dist_m: Vec<f64>,
    /// Distance of the variograms used for prediction.
    pub prediction_vgm_dist_m: f64,
    pub n_bins: usize,
    pub n_neighbors: usize,
    pub univariate: bool,
    pub multivariate: bool,
    pub index_mode: IndexMode,
    pub seed: u64,
}

impl Default for CaseStudyConfig {
    fn default() -> Self {
        Self {
            input: PathBuf::from("points.csv"),
            id_column: "point_id".into(),
            x_column: "x_m".into(),
            y_column: "y_m".into(),
            variables: ["var_1".into(), "var_2".into(), "var_3".into()],
            n_test_points: 200,
            n_known: vec![
                KnownPoints::Count(500),
                KnownPoints::Count(1000),
                KnownPoints::Count(2000),
                KnownPoints::Count(5000),
                KnownPoints::All,
            ],
            variogram_source: VariogramSource::AllPoints,
            max_vgm_dist_m: vec![250.0, 500.0, 756.0, 1000.0, 1250.0],
            prediction_vgm_dist_m: 1000.0,
            n_bins: 15,
            n_neighbors: 50,
            univariate: true,
            multivariate: true,
            index_mode: IndexMode::Mean,
            seed: 1,
        }
    }
}

fn index_mode_name(m: IndexMode) -> &'static str {
    match m {
        IndexMode::Sum => "sum",
        IndexMode::Mean => "mean",
    }
}

impl CaseStudyConfig {
    pub fn from_kv(mut kv: KeyValues) -> Result<Self> {
        let d = Self::default();
        let vars = kv.list("variables", d.variables.to_vec())?;
        let variables: [String; 3] = vars
            .try_into()
            .map_err(|v: Vec<String>| HarnessError::config(format!("variables needs 3 column names, got {}", v.len())))?;
        let index_mode = match kv.take("index_mode").as_deref() {
            None | Some("mean") => IndexMode::Mean,
            Some("sum") => IndexMode::Sum,
            Some(other) => return Err(HarnessError::config(format!("index_mode `{other}`: expected sum or mean"))),
        };
        let cfg = Self {
            input: kv.opt::<PathBuf>("input")?.unwrap_or(d.input),
            id_column: kv.get_or("id_column", d.id_column)?,
            x_column: kv.get_or("x_column", d.x_column)?,
            y_column: kv.get_or("y_column", d.y_column)?,
            variables,
            n_test_points: kv.get_or("n_test_points", d.n_test_points)?,
            n_known: kv.list("n_known", d.n_known)?,
            variogram_source: kv.get_or("variogram_source", d.variogram_source)?,
            max_vgm_dist_m: kv.list("max_vgm_dist_m", d.max_vgm_dist_m)?,
            prediction_vgm_dist_m: kv.get_or("prediction_vgm_dist_m", d.prediction_vgm_dist_m)?,
            n_bins: kv.get_or("n_bins", d.n_bins)?,
            n_neighbors: kv.get_or("n_neighbors", d.n_neighbors)?,
            univariate: kv.get_or("univariate", d.univariate)?,
            multivariate: kv.get_or("multivariate", d.multivariate)?,
            index_mode,
            seed: kv.get_or("seed", d.seed)?,
        };
        kv.finish()?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_test_points < 5 {
            return Err(HarnessError::config("quintiles need at least 5 test points"));
        }
        if self.n_known.is_empty() || self.n_known.contains(&KnownPoints::Count(0)) {
            return Err(HarnessError::config("n_known needs positive sizes"));
        }
        if self.max_vgm_dist_m.iter().chain([&self.prediction_vgm_dist_m]).any(|d| !(*d > 0.0)) {
            return Err(HarnessError::config("variogram distances must be > 0"));
        }
        if self.n_bins == 0 || self.n_neighbors == 0 {
            return Err(HarnessError::config("n_bins and n_neighbors must be positive"));
        }
        if !(self.univariate || self.multivariate) {
            return Err(HarnessError::config("enable univariate and/or multivariate prediction"));
        }
        Ok(())
    }

    pub fn resolved(&self) -> Vec<(String, String)> {
        let join = |v: Vec<String>| v.join(",");
        let entries: Vec<(&str, String)> = vec![
            ("input", self.input.display().to_string()),
            ("id_column", self.id_column.clone()),
            ("x_column", self.x_column.clone()),
            ("y_column", self.y_column.clone()),
            ("variables", self.variables.join(",")),
            ("n_test_points", self.n_test_points.to_string()),
            ("n_known", join(self.n_known.iter().map(|k| k.to_string()).collect())),
            ("variogram_source", self.variogram_source.to_string()),
            ("max_vgm_dist_m", join(self.max_vgm_dist_m.iter().map(|d| d.to_string()).collect())),
            ("prediction_vgm_dist_m", self.prediction_vgm_dist_m.to_string()),
            ("n_bins", self.n_bins.to_string()),
            ("n_neighbors", self.n_neighbors.to_string()),
            ("univariate", self.univariate.to_string()),
            ("multivariate", self.multivariate.to_string()),
            ("index_mode", index_mode_name(self.index_mode).to_string()),
            ("seed", self.seed.to_string()),
        ];
        entries.into_iter().map(|(k, v)| (k.to_string(), v)).collect()
    }
}
