//! Reliability metrics over replicated predictions.

use crate::error::{invalid_param, GeoError, Result};

/// Standard-normal 20% and 40% quantiles.
const Z20: f64 = -0.841_621_233_572_914_3;
const Z40: f64 = -0.253_347_103_135_799_7;

/// Four ascending cuts defining quintile categories 1..=5.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuintileBreaks {
    pub cuts: [f64; 4],
}

impl QuintileBreaks {
    pub fn new(cuts: [f64; 4]) -> Result<Self> {
        if cuts.iter().any(|c| !c.is_finite()) || cuts.windows(2).any(|w| w[1] <= w[0]) {
            return Err(invalid_param("cuts", format!("{cuts:?} must be finite and strictly increasing")));
        }
        Ok(Self { cuts })
    }

    /// Quintiles of `N(mean, sd²)`.
    pub fn normal(mean: f64, sd: f64) -> Result<Self> {
        if !(sd > 0.0) {
            return Err(invalid_param("sd", format!("{sd} must be > 0")));
        }
        Self::new([Z20, Z40, -Z40, -Z20].map(|z| mean + sd * z))
    }

    /// `1 + #{cuts < v}`; a value equal to a cut falls in the lower category.
    pub fn category(&self, v: f64) -> u8 {
        1 + self.cuts.iter().filter(|&&c| c < v).count() as u8
    }
}

/// Percentile by linear interpolation between order statistics
/// (`h = (n − 1) p`).
pub fn percentile(sorted: &[f64], p: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * p;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Empirical 20/40/60/80th percentiles of `values`.
pub fn quintile_breaks(values: &[f64]) -> Result<QuintileBreaks> {
    if values.iter().any(|v| !v.is_finite()) {
        return Err(GeoError::InvalidDataset("non-finite value in quintile input".into()));
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let mut distinct = sorted.clone();
    distinct.dedup();
    if distinct.len() < 5 {
        return Err(GeoError::InsufficientData(format!(
            "quintiles need at least 5 distinct values, got {}",
            distinct.len()
        )));
    }
    let cuts = [0.2, 0.4, 0.6, 0.8].map(|p| percentile(&sorted, p));
    QuintileBreaks::new(cuts).map_err(|_| {
        GeoError::InsufficientData(format!("ties make the quintile cuts {cuts:?} coincide"))
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Reliability {
    pub prop_correct: f64,
    /// Share with `|q_pred − q_true| <= 1`.
    pub prop_correct_or_neighbor: f64,
}

pub fn reliability_from_categories(predicted: &[u8], truth: &[u8]) -> Result<Reliability> {
    if predicted.len() != truth.len() {
        return Err(GeoError::LengthMismatch {
            left: predicted.len(),
            right: truth.len(),
        });
    }
    if predicted.is_empty() {
        return Err(GeoError::EmptyDataset);
    }
    let n = predicted.len() as f64;
    let (mut exact, mut near) = (0usize, 0usize);
    for (&p, &t) in predicted.iter().zip(truth) {
        let d = (p as i16 - t as i16).abs();
        exact += (d == 0) as usize;
        near += (d <= 1) as usize;
    }
    Ok(Reliability {
        prop_correct: exact as f64 / n,
        prop_correct_or_neighbor: near as f64 / n,
    })
}

pub fn reliability(predicted: &[f64], truth: &[f64], breaks: &QuintileBreaks) -> Result<Reliability> {
    let p: Vec<u8> = predicted.iter().map(|&v| breaks.category(v)).collect();
    let t: Vec<u8> = truth.iter().map(|&v| breaks.category(v)).collect();
    reliability_from_categories(&p, &t)
}

/// Metrics of one test point over `R` replications.
///
/// `empirical_se` is the sample SD (divisor `R − 1`) while `mse` averages over
/// `R`, so `mse = se²·(R − 1)/R + bias_raw²`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PointSummary {
    pub point_id: u64,
    pub true_value: f64,
    pub mean_prediction: f64,
    /// `mean(pred − true) / sd_true`.
    pub bias: f64,
    pub bias_raw: f64,
    pub empirical_se: f64,
    pub mse: f64,
    pub prop_correct_quintile: f64,
    pub prop_correct_or_neighbor: f64,
    /// Mean kriging standard error, when supplied.
    pub mean_kriging_se: Option<f64>,
    pub n_replications: usize,
}

pub fn point_metrics(
    point_id: u64,
    predictions: &[f64],
    true_value: f64,
    sd_true: f64,
    breaks: &QuintileBreaks,
) -> Result<PointSummary> {
    let r = predictions.len();
    if r < 2 {
        return Err(GeoError::InsufficientData(format!("point metrics need 2 replications, got {r}")));
    }
    if !(sd_true > 0.0) {
        return Err(invalid_param("sd_true", format!("{sd_true} must be > 0")));
    }
    let n = r as f64;
    let mean = predictions.iter().sum::<f64>() / n;
    let var = predictions.iter().map(|p| (p - mean) * (p - mean)).sum::<f64>() / (n - 1.0);
    let mse = predictions.iter().map(|p| (p - true_value) * (p - true_value)).sum::<f64>() / n;
    let bias_raw = predictions.iter().map(|p| p - true_value).sum::<f64>() / n;
    let truth = vec![true_value; r];
    let rel = reliability(predictions, &truth, breaks)?;
    Ok(PointSummary {
        point_id,
        true_value,
        mean_prediction: mean,
        bias: bias_raw / sd_true,
        bias_raw,
        empirical_se: var.sqrt(),
        mse,
        prop_correct_quintile: rel.prop_correct,
        prop_correct_or_neighbor: rel.prop_correct_or_neighbor,
        mean_kriging_se: None,
        n_replications: r,
    })
}

impl PointSummary {
    /// Attaches the mean of `sqrt(kriging variance)` over replications.
    pub fn with_kriging_variances(mut self, variances: &[f64]) -> Self {
        self.mean_kriging_se = (!variances.is_empty())
            .then(|| variances.iter().map(|v| v.max(0.0).sqrt()).sum::<f64>() / variances.len() as f64);
        self
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Stats {
    pub mean: f64,
    pub sd: f64,
    pub median: f64,
}

impl Stats {
    /// Mean, sample SD and median, summed in input order.
    pub fn of(values: &[f64]) -> Self {
        let n = values.len();
        if n == 0 {
            return Self {
                mean: f64::NAN,
                sd: f64::NAN,
                median: f64::NAN,
            };
        }
        let mean = values.iter().sum::<f64>() / n as f64;
        let sd = if n > 1 {
            (values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1) as f64).sqrt()
        } else {
            0.0
        };
        let mut s = values.to_vec();
        s.sort_by(f64::total_cmp);
        let median = if n % 2 == 1 {
            s[n / 2]
        } else {
            0.5 * (s[n / 2 - 1] + s[n / 2])
        };
        Self { mean, sd, median }
    }
}

/// Aggregates over the test points of one scenario.
#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioSummary {
    /// Resolved scenario settings as `(key, value)` pairs.
    pub parameters: Vec<(String, String)>,
    pub n_points: usize,
    pub bias: Stats,
    pub abs_bias: Stats,
    pub empirical_se: Stats,
    pub mse: Stats,
    pub prop_correct: Stats,
    pub prop_correct_or_neighbor: Stats,
    pub kriging_se: Option<Stats>,
}

pub fn summarize(parameters: Vec<(String, String)>, points: &[PointSummary]) -> Result<ScenarioSummary> {
    if points.is_empty() {
        return Err(GeoError::EmptyDataset);
    }
    let col = |f: &dyn Fn(&PointSummary) -> f64| Stats::of(&points.iter().map(f).collect::<Vec<_>>());
    let kriging: Option<Vec<f64>> = points.iter().map(|p| p.mean_kriging_se).collect();
    Ok(ScenarioSummary {
        parameters,
        n_points: points.len(),
        bias: col(&|p| p.bias),
        abs_bias: col(&|p| p.bias.abs()),
        empirical_se: col(&|p| p.empirical_se),
        mse: col(&|p| p.mse),
        prop_correct: col(&|p| p.prop_correct_quintile),
        prop_correct_or_neighbor: col(&|p| p.prop_correct_or_neighbor),
        kriging_se: kriging.map(|k| Stats::of(&k)),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum IndexMode {
    #[default]
    Sum,
    Mean,
}

/// Unweighted sum or mean of per-variable values at one location.
pub fn build_index(values: &[Option<f64>], mode: IndexMode) -> Result<f64> {
    if values.is_empty() {
        return Err(GeoError::InsufficientData("index needs at least one variable".into()));
    }
    let mut sum = 0.0;
    for (k, v) in values.iter().enumerate() {
        match v {
            Some(v) => sum += v,
            None => return Err(GeoError::InsufficientData(format!("variable {k} missing from index"))),
        }
    }
    Ok(match mode {
        IndexMode::Sum => sum,
        IndexMode::Mean => sum / values.len() as f64,
    })
}
