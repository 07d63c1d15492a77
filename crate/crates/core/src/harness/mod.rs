//! Convergence studies, their configuration and CSV output.

mod config;
mod problem;
mod study;

pub use config::{
    parse_dts, parse_key_values, problem_from_settings, sdc_from_settings, study_from_settings, Settings, STUDY_TOLERANCE,
};
pub use problem::{Problem, ProblemKind, ProblemSpec};
pub use study::{
    fit_order, normalized_l2_error, read_csv, run_study, variables_path, write_csv, ConvergenceRow, ReferenceKind,
    StudyConfig, StudyOutcome, CSV_HEADER, ROUND_OFF_FLOOR, STUDY_ROUND_OFF_GUARD,
};
