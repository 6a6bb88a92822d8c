//! Diffusion-model denoising and augmentation for OFDM channel estimation.
//!
//! The crate is organized bottom-up:
//!
//! * [`grid`] simulates tapped-delay-line channels, pilots, AWGN and mixed-SNR
//!   field campaigns.
//! * [`estimators`] holds LS, LMMSE and the NMSE metric.
//! * [`diffusion`] is the DDPM: schedule, SNR-to-step mapping, piecewise
//!   forward training, denoising and generation.
//! * [`srcnn`] interpolates pilot columns to the full grid.
//! * [`link`] is a coded 64-QAM link for BER evaluation.
//! * [`pipeline`] ties the stages together behind a TOML config, with
//!   on-disk datasets, checkpoints, CSV tables and plots.
//!
//! Every stochastic function takes an explicit seed.

pub mod dataset_io;
pub mod diffusion;
pub mod error;
pub mod estimators;
pub mod grid;
pub mod link;
pub mod nn;
pub mod pipeline;
pub mod rng;
pub mod srcnn;

pub use error::{Error, Result};
