//! Experiment orchestration: one TOML config drives every stage, each stage
//! reads and writes artifacts under a work directory, and results land in
//! CSV tables and SVG plots.
//!
//! Work directory layout:
//!
//! ```text
//! field/                  campaign dataset (full-grid normalized LS)
//! field-pure/             noiseless grids of the campaign, evaluation only
//! ddpm.json               piecewise-trained DDPM
//! ddpm-traditional.json   DDPM trained with full-range forwarding
//! denoised-<mode>/        denoised field samples, SRCNN targets
//! generated-<mode>/       generated grids, SRCNN augmentation
//! srcnn-<scheme>.json     interpolator per learned scheme
//! logs/<stage>.json       run logs: seed, wall time, loss curves
//! nmse.csv, ber.csv       result tables
//! plots/                  one SVG per table
//! ```
//!
//! Datasets carry a `stamp.json` and checkpoints a config hash; a stage
//! refuses inputs produced under different settings.

pub mod config;
pub mod metrics;
pub mod plot;
pub mod schemes;
pub mod stages;

pub use config::{
    hash_of, DatasetSection, DdpmSection, EvalSection, ExperimentConfig, LinkSection, PathsSection, SrcnnSection,
};
pub use metrics::{MetricTable, NmseRow, NMSE_CSV_HEADER};
pub use plot::plot_csv;
pub use schemes::{classical_estimates, learned_estimates, training_pairs, EvalSet, Scheme};
pub use stages::{Pipeline, RunLog, Workspace};
