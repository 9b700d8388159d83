//! End-to-end experiments: data collection, problem assembly and solve,
//! Monte Carlo validation, and the CSV / JSON artifacts.

mod config;
mod report;
mod run;

pub use config::{Collection, ExperimentConfig, HistogramConfig, InitialConfig, NoiseSchedule, OcpConfig, Samples, Seeds};
pub use run::{
    basis_for, collect_data, initial_draw, mask_violation, mean_std, moment_rows, monte_carlo, path_residual, prepare,
    run_descriptor_example, run_experiment, run_scalar_example, sample_paths, Dataset, ExperimentReport, Histogram,
    InitialDraw, Layout, McInput, McOutcome, MomentCheck, MomentRow, MonteCarloCheck, PathSample, Prepared, SolveDiag,
    MASK_TOL, MEMBERSHIP_TOL, PATH_TOL,
};
pub use report::{validate, write_dataset, write_report, CheckResult, FileEntry, Manifest, ValidationSummary};
