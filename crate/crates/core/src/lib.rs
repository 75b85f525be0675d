//! Geostatistics on point data: Mathéron semi-variograms, weighted
//! least-squares exponential fits, ordinary kriging, co-kriging under a linear
//! model of coregionalization, Gaussian random field simulation and quintile
//! reliability metrics.
//!
//! ```
//! use geokrige::{ordinary_krige, ExponentialVariogramModel, Location, NeighborhoodSpec, SpatialDataset};
//!
//! let obs = SpatialDataset::univariate([
//!     (1, Location::new(0.0, 0.0), 2.0),
//!     (2, Location::new(200.0, 0.0), 4.0),
//! ])
//! .unwrap();
//! let model = ExponentialVariogramModel::from_range(0.0, 1.0, 600.0).unwrap();
//! let p = ordinary_krige(&obs, &model, Location::new(100.0, 0.0), &NeighborhoodSpec::default()).unwrap();
//! assert!((p.predicted_value - 3.0).abs() < 1e-12);
//! ```

pub mod error;
pub mod evaluation;
pub mod field;
pub mod kriging;
pub mod rng;
pub mod spatial;
pub mod variogram;

pub use error::{GeoError, Result};
pub use evaluation::{
    build_index, point_metrics, quintile_breaks, reliability, reliability_from_categories, summarize, IndexMode,
    PointSummary, QuintileBreaks, Reliability, ScenarioSummary, Stats,
};
pub use field::{
    equicorrelation, sample_collocated, sample_heterotopic, sample_nodes, sample_observations, select_test_points,
    simulate_grf, simulate_grf_with, simulate_multivariate_grf, simulate_shared_noise_fields, FieldRealization, Grid,
    MethodChoice, MultiFieldRealization, SimulationMethod, TestPoints, CHOLESKY_NODE_LIMIT,
};
pub use kriging::{
    cokrige, krige_batch, ordinary_krige, CoKriger, KrigingModel, KrigingPrediction, KrigingWeight, NeighborhoodSpec,
    OrdinaryKriger,
};
pub use spatial::{build_spatial_index, distance, Location, Neighbor, Observation, SpatialDataset, SpatialIndex, VariableId};
pub use variogram::{
    covariance_from_variogram, empirical_cross_variogram, empirical_variogram, empirical_variogram_binned,
    fit_exponential_wls, fit_lmc, model_gamma, practical_range, validate_model, BinSpec, CoregionalizationModel,
    CrossMode, EmpiricalVariogram, ExponentialVariogramModel, FittedVariogram, LmcFit,
};
