//! Weighted least-squares fit of the exponential model and validity screening.

use nalgebra::{Matrix3, Vector3};

use super::empirical::EmpiricalVariogram;
use super::model::ExponentialVariogramModel;
use crate::error::{GeoError, Result};

pub const MAX_FIT_ITERATIONS: usize = 200;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FitDiagnostics {
    pub converged: bool,
    pub iterations: usize,
    /// Final `Σ w_b (γ̂_b − γ(h_b))²` in data units.
    pub objective: f64,
    pub bins_used: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FittedVariogram {
    pub model: ExponentialVariogramModel,
    pub diagnostics: FitDiagnostics,
}

/// Default starting point: half the first non-empty bin as nugget, the data
/// variance as total sill and `θ = 3 / (max_dist / 2)`.
pub fn initial_guess(emp: &EmpiricalVariogram) -> ExponentialVariogramModel {
    let first = emp.nonempty_bins().next().and_then(|b| b.gamma).unwrap_or(0.0).max(0.0);
    let last = emp.nonempty_bins().last().and_then(|b| b.gamma).unwrap_or(1.0);
    let sill = if emp.data_variance > 0.0 {
        emp.data_variance
    } else {
        last.abs().max(1e-12)
    };
    let nugget = (0.5 * first).min(0.5 * sill);
    ExponentialVariogramModel {
        nugget,
        partial_sill: (sill - nugget).max(1e-3 * sill),
        theta: 3.0 / (emp.max_dist / 2.0),
    }
}

/// Alternative start used when the default one produces an invalid fit:
/// no nugget, sill from the upper third of the lags and a shorter range.
pub fn fallback_guess(emp: &EmpiricalVariogram) -> ExponentialVariogramModel {
    let gammas: Vec<f64> = emp.nonempty_bins().filter_map(|b| b.gamma).collect();
    let tail = &gammas[gammas.len() * 2 / 3..];
    let mut sill = if tail.is_empty() {
        emp.data_variance
    } else {
        tail.iter().sum::<f64>() / tail.len() as f64
    };
    if !(sill > 0.0) {
        sill = emp.data_variance.abs().max(1e-12);
    }
    ExponentialVariogramModel {
        nugget: 0.0,
        partial_sill: sill,
        theta: 3.0 / (emp.max_dist / 4.0),
    }
}

fn softplus(x: f64) -> f64 {
    if x > 30.0 {
        x
    } else {
        x.exp().ln_1p()
    }
}

fn softplus_inv(y: f64) -> f64 {
    if y > 30.0 {
        y
    } else {
        y.exp_m1().ln()
    }
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

struct Problem {
    h: Vec<f64>,
    y: Vec<f64>,
    w: Vec<f64>,
    allow_nugget: bool,
}

impl Problem {
    /// parameters: (ln σ²0, ln θ, softplus⁻¹ c0) in units of the scaling sill
    fn unpack(&self, p: &Vector3<f64>) -> (f64, f64, f64) {
        let nugget = if self.allow_nugget { softplus(p[2]) } else { 0.0 };
        (nugget, p[0].exp(), p[1].exp())
    }

    fn objective(&self, p: &Vector3<f64>) -> f64 {
        let (c0, s, t) = self.unpack(p);
        self.h
            .iter()
            .zip(&self.y)
            .zip(&self.w)
            .map(|((&h, &y), &w)| {
                let r = y - (c0 + s * (1.0 - (-t * h).exp()));
                w * r * r
            })
            .sum()
    }

    /// Normal equations `JᵀWJ`, `JᵀWr`.
    fn normal_equations(&self, p: &Vector3<f64>) -> (Matrix3<f64>, Vector3<f64>) {
        let (c0, s, t) = self.unpack(p);
        let dc = if self.allow_nugget { sigmoid(p[2]) } else { 0.0 };
        let mut jtj = Matrix3::zeros();
        let mut jtr = Vector3::zeros();
        for ((&h, &y), &w) in self.h.iter().zip(&self.y).zip(&self.w) {
            let e = (-t * h).exp();
            let r = y - (c0 + s * (1.0 - e));
            let j = Vector3::new(s * (1.0 - e), s * t * h * e, dc);
            jtj += w * j * j.transpose();
            jtr += w * r * j;
        }
        (jtj, jtr)
    }
}

/// Fits `γ(h) = c0 + σ²0 (1 − exp(−θh))` to the non-empty bins with weights
/// `n_pairs / h²` by Levenberg–Marquardt over log-transformed `σ²0`, `θ`
/// and softplus-bounded `c0` (fixed at 0 when `allow_nugget` is false).
///
/// Values are scaled by the initial total sill internally, so the fit is
/// equivariant under rescaling of the data. After [`MAX_FIT_ITERATIONS`]
/// the best iterate is returned with `converged = false`.
pub fn fit_exponential_wls(
    emp: &EmpiricalVariogram,
    initial: ExponentialVariogramModel,
    allow_nugget: bool,
) -> Result<FittedVariogram> {
    let bins: Vec<_> = emp
        .nonempty_bins()
        .filter(|b| b.lag_center > 0.0)
        .map(|b| (b.lag_center, b.gamma.unwrap_or(0.0), b.n_pairs))
        .collect();
    if bins.len() < 3 {
        return Err(GeoError::InsufficientData(format!(
            "exponential fit needs at least 3 non-empty bins, got {}",
            bins.len()
        )));
    }
    let scale = initial.total_sill().abs().max(f64::MIN_POSITIVE.sqrt());
    let raw_w: Vec<f64> = bins.iter().map(|&(h, _, n)| n as f64 / (h * h)).collect();
    let w_sum: f64 = raw_w.iter().sum();
    let problem = Problem {
        h: bins.iter().map(|b| b.0).collect(),
        y: bins.iter().map(|b| b.1 / scale).collect(),
        w: raw_w.iter().map(|w| w / w_sum).collect(),
        allow_nugget,
    };
    let c0_start = if allow_nugget {
        (initial.nugget / scale).max(1e-6)
    } else {
        0.0
    };
    let mut p = Vector3::new(
        (initial.partial_sill / scale).max(1e-9).ln(),
        initial.theta.ln(),
        if allow_nugget { softplus_inv(c0_start) } else { 0.0 },
    );
    let mut f = problem.objective(&p);
    let mut lambda = 1e-3;
    let mut converged = false;
    let mut iterations = 0;
    let y_norm: f64 = problem.y.iter().zip(&problem.w).map(|(y, w)| w * y * y).sum();

    while iterations < MAX_FIT_ITERATIONS {
        iterations += 1;
        if f <= 1e-24 * y_norm.max(1e-300) {
            converged = true;
            break;
        }
        let (jtj, jtr) = problem.normal_equations(&p);
        let mut accepted = false;
        while lambda < 1e16 {
            let mut a = jtj;
            for k in 0..3 {
                a[(k, k)] += lambda * jtj[(k, k)].max(1e-12);
            }
            if !allow_nugget {
                a[(2, 2)] = 1.0;
                a[(2, 0)] = 0.0;
                a[(0, 2)] = 0.0;
                a[(2, 1)] = 0.0;
                a[(1, 2)] = 0.0;
            }
            let step = match a.cholesky() {
                Some(c) => c.solve(&jtr),
                None => {
                    lambda *= 4.0;
                    continue;
                }
            };
            let trial = p + step;
            let ft = problem.objective(&trial);
            if ft.is_finite() && ft < f {
                // decrease measured against the data scale, so zero-residual
                // fits and boundary drifts of c0 terminate too
                let rel = (f - ft) / y_norm.max(1e-300);
                let small_step = step.norm() < 1e-10 * (1.0 + p.norm());
                p = trial;
                f = ft;
                lambda = (lambda / 3.0).max(1e-12);
                accepted = true;
                if rel < 1e-14 || small_step {
                    converged = true;
                }
                break;
            }
            lambda *= 4.0;
        }
        if !accepted {
            // no descent direction left: numerically stationary
            converged = true;
        }
        if converged {
            break;
        }
    }
    let (c0, s, t) = problem.unpack(&p);
    Ok(FittedVariogram {
        model: ExponentialVariogramModel {
            nugget: c0 * scale,
            partial_sill: s * scale,
            theta: t,
        },
        diagnostics: FitDiagnostics {
            converged,
            iterations,
            objective: f * w_sum * scale * scale,
            bins_used: bins.len(),
        },
    })
}

/// Why a fitted model was rejected.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InvalidReason {
    NotConverged,
    RangeExceedsMaxDist,
    RangeBelowBinWidth,
    SillExceedsVariance,
    NuggetDominates,
}

impl InvalidReason {
    pub fn describe(&self) -> &'static str {
        match self {
            InvalidReason::NotConverged => "fit did not converge",
            InvalidReason::RangeExceedsMaxDist => "range exceeds 2×max_dist",
            InvalidReason::RangeBelowBinWidth => "range below one bin width",
            InvalidReason::SillExceedsVariance => "total sill exceeds 5× data variance",
            InvalidReason::NuggetDominates => "nugget dominates",
        }
    }
}

impl std::fmt::Display for InvalidReason {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.describe())
    }
}

/// Thresholds of the "reasonable model" screen.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ValidationRules {
    /// Reject when `3/θ > max_range_factor · max_dist`.
    pub max_range_factor: f64,
    /// Reject when total sill exceeds this multiple of the data variance.
    pub max_sill_factor: f64,
    /// Reject when `c0 > max_nugget_share · total sill`.
    pub max_nugget_share: f64,
}

impl Default for ValidationRules {
    fn default() -> Self {
        Self {
            max_range_factor: 2.0,
            max_sill_factor: 5.0,
            max_nugget_share: 0.95,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Validity {
    pub reasons: Vec<InvalidReason>,
}

impl Validity {
    pub fn is_valid(&self) -> bool {
        self.reasons.is_empty()
    }
}

pub fn validate_model(fit: &FittedVariogram, emp: &EmpiricalVariogram) -> Validity {
    validate_model_with(fit, emp, &ValidationRules::default())
}

pub fn validate_model_with(
    fit: &FittedVariogram,
    emp: &EmpiricalVariogram,
    rules: &ValidationRules,
) -> Validity {
    let m = &fit.model;
    let range3 = m.practical_range().range3;
    let mut reasons = Vec::new();
    if !fit.diagnostics.converged {
        reasons.push(InvalidReason::NotConverged);
    }
    if range3 > rules.max_range_factor * emp.max_dist {
        reasons.push(InvalidReason::RangeExceedsMaxDist);
    }
    if range3 < emp.min_bin_width() {
        reasons.push(InvalidReason::RangeBelowBinWidth);
    }
    if emp.data_variance > 0.0 && m.total_sill() > rules.max_sill_factor * emp.data_variance {
        reasons.push(InvalidReason::SillExceedsVariance);
    }
    if m.nugget > rules.max_nugget_share * m.total_sill() {
        reasons.push(InvalidReason::NuggetDominates);
    }
    Validity { reasons }
}
