//! Experiment plumbing: configuration files, runs, sweeps and CSV output.

pub mod config;
pub mod experiment;

pub use config::{parse_config, parse_config_str, CeMode, ConfigError, ResamplerKind, SimConfig};
pub use experiment::{
    channel_output,
    genie_frame_start, osnr_for_subcarrier_snr, phase_profile, run_single, sweep, transmit, write_profile_csv,
    write_runs_csv, write_sweep_csv, CsvOptions, PhaseProfileResult, ProfileRow, RunReport, SweepPoint, SweepResult,
    SweepSpec, SweepVariable, Transmission, CSV_COLUMNS,
};
