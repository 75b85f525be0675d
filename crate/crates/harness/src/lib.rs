//! Scenario runner, case-study pipeline and plot-data emission on top of
//! [`geokrige`].

pub mod case_study;
pub mod config;
pub mod error;
pub mod format;
pub mod plot;
pub mod points;
pub mod records;
pub mod scenario;

pub use case_study::{generate_surrogate, read_case_csv, run_case_study, write_case_csv, CaseData, SurrogateSpec};
pub use config::{CaseStudyConfig, KeyValues, KnownPoints, Multivariate, PointToolConfig, ScenarioConfig, VariogramMode};
pub use error::{HarnessError, Result};
pub use plot::{emit_plot_data, PlotKind};
pub use scenario::{run_scenario, Method, RunOptions, ScenarioOutcome};
