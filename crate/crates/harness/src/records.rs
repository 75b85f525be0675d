//! Fitted-variogram bookkeeping shared by the scenario and case-study runs.

use geokrige::variogram::{
    fallback_guess, fit_exponential_wls, initial_guess, validate_model, FittedVariogram, Validity,
};
use geokrige::{CoregionalizationModel, EmpiricalVariogram, ExponentialVariogramModel, LmcFit};

use crate::format::{fmt_g, CsvOut};
use crate::error::Result;

/// One row of `variogram_params.csv`.
#[derive(Debug, Clone, PartialEq)]
pub struct VariogramRecord {
    /// Variable label: `z`, `var_1`…, or `lmc_i_j` for coregionalization entries.
    pub variable: String,
    pub max_vgm_dist_m: f64,
    pub nugget: f64,
    pub partial_sill: f64,
    pub theta: f64,
    pub converged: bool,
    pub valid: bool,
    pub refit: bool,
    pub reasons: String,
}

pub const RECORD_COLUMNS: [&str; 12] = [
    "variable",
    "max_vgm_dist_m",
    "nugget",
    "partial_sill",
    "total_sill",
    "scale_m",
    "range3_m",
    "practical_range_m",
    "converged",
    "valid",
    "refit",
    "reasons",
];

impl VariogramRecord {
    pub fn from_model(
        variable: impl Into<String>,
        max_dist: f64,
        m: &ExponentialVariogramModel,
        converged: bool,
        validity: Option<&Validity>,
        refit: bool,
    ) -> Self {
        Self {
            variable: variable.into(),
            max_vgm_dist_m: max_dist,
            nugget: m.nugget,
            partial_sill: m.partial_sill,
            theta: m.theta,
            converged,
            valid: validity.is_none_or(|v| v.is_valid()),
            refit,
            reasons: validity
                .map(|v| v.reasons.iter().map(|r| r.describe()).collect::<Vec<_>>().join("; "))
                .unwrap_or_default(),
        }
    }

    /// Row for a fit that could not be computed at all.
    pub fn failed(variable: impl Into<String>, max_dist: f64, reason: String) -> Self {
        Self {
            variable: variable.into(),
            max_vgm_dist_m: max_dist,
            nugget: f64::NAN,
            partial_sill: f64::NAN,
            theta: f64::NAN,
            converged: false,
            valid: false,
            refit: false,
            reasons: reason,
        }
    }

    /// Rows for every direct and cross entry of a coregionalization fit.
    pub fn from_lmc(fit: &LmcFit, max_dist: f64) -> Vec<Self> {
        let m: &CoregionalizationModel = &fit.model;
        let mut out = Vec::new();
        for i in 0..3 {
            for j in i..3 {
                out.push(Self {
                    variable: format!("lmc_{}_{}", i + 1, j + 1),
                    max_vgm_dist_m: max_dist,
                    nugget: m.b_nugget[(i, j)],
                    partial_sill: m.b_structure[(i, j)],
                    theta: m.theta,
                    converged: fit.converged,
                    valid: fit.converged && m.is_psd(),
                    refit: false,
                    reasons: if fit.converged { String::new() } else { "theta at search boundary".into() },
                });
            }
        }
        out
    }

    pub fn fields(&self) -> Vec<String> {
        let scale = 1.0 / self.theta;
        let log_range = if self.partial_sill > 0.0 {
            (self.partial_sill / 0.05).ln() / self.theta
        } else {
            f64::NAN
        };
        vec![
            self.variable.clone(),
            fmt_g(self.max_vgm_dist_m),
            fmt_g(self.nugget),
            fmt_g(self.partial_sill),
            fmt_g(self.nugget + self.partial_sill),
            fmt_g(scale),
            fmt_g(3.0 * scale),
            fmt_g(log_range),
            self.converged.to_string(),
            self.valid.to_string(),
            self.refit.to_string(),
            self.reasons.clone(),
        ]
    }

    pub fn write(&self, out: &mut CsvOut, leading: &[String]) -> Result<()> {
        out.row(leading.iter().cloned().chain(self.fields()))
    }
}

/// An exponential fit after validity screening.
#[derive(Debug, Clone)]
pub struct ScreenedFit {
    pub fit: FittedVariogram,
    pub validity: Validity,
    pub refit: bool,
}

impl ScreenedFit {
    pub fn record(&self, variable: impl Into<String>, max_dist: f64) -> VariogramRecord {
        VariogramRecord::from_model(
            variable,
            max_dist,
            &self.fit.model,
            self.fit.diagnostics.converged,
            Some(&self.validity),
            self.refit,
        )
    }
}

/// Fits from the default start; an invalid result is re-fitted once from the
/// fallback start, which replaces it when valid or when it fits better.
pub fn screened_fit(emp: &EmpiricalVariogram, refit_fallback: bool) -> geokrige::Result<ScreenedFit> {
    let fit = fit_exponential_wls(emp, initial_guess(emp), true)?;
    let validity = validate_model(&fit, emp);
    let first = ScreenedFit {
        fit,
        validity,
        refit: false,
    };
    if first.validity.is_valid() || !refit_fallback {
        return Ok(first);
    }
    match fit_exponential_wls(emp, fallback_guess(emp), true) {
        Ok(fit) => {
            let validity = validate_model(&fit, emp);
            if validity.is_valid() || fit.diagnostics.objective < first.fit.diagnostics.objective {
                Ok(ScreenedFit {
                    fit,
                    validity,
                    refit: true,
                })
            } else {
                Ok(ScreenedFit { refit: true, ..first })
            }
        }
        Err(_) => Ok(ScreenedFit { refit: true, ..first }),
    }
}
