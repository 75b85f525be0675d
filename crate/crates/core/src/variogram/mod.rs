//! Semi-variogram estimation, exponential-model fitting and the linear model
//! of coregionalization.

mod empirical;
mod fit;
mod lmc;
mod model;

pub use empirical::{
    empirical_cross_variogram, empirical_variogram, empirical_variogram_binned, BinSpec, CrossMode,
    EmpiricalVariogram, EstimatorKind, LagBin, ZeroLagDiagnostic,
};
pub use fit::{
    fallback_guess, fit_exponential_wls, initial_guess, validate_model, validate_model_with, FitDiagnostics,
    FittedVariogram, InvalidReason, ValidationRules, Validity, MAX_FIT_ITERATIONS,
};
pub use lmc::{
    fit_lmc, fit_lmc_with, min_eigenvalue, model_gamma_lmc, project_psd, CoregionalizationModel, LmcFit, LmcOptions,
    CROSS_PAIRS, N_VARS, PSD_TOLERANCE,
};
pub use model::{
    covariance_from_variogram, model_gamma, practical_range, ExponentialVariogramModel, PracticalRange,
    PRACTICAL_RANGE_THRESHOLD,
};
