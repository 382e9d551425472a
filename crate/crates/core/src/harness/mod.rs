//! Experiment configs, level/power studies and CSV output.

pub mod config;
pub mod output;
pub mod study;

pub use config::{
    load_envelope_constants, model_envelope_constants, ExperimentConfig, LevelMode, NullModeKind,
};
pub use output::{
    emit_csv, emit_outcomes, emit_plot_data, emit_power_table, envelope_report, read_csv,
    read_power_table, read_sample_csv, CsvDocument, RateSettings,
};
pub use study::{run_level_power_study, with_jobs, PowerRow, PowerTable, StudyOutput, StudySetup, LEVEL_ROW};
