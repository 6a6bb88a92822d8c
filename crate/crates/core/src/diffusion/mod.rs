//! Denoising diffusion model over channel grids.
//!
//! The schedule keeps the per-step noise increment constant within each
//! piece, so a received SNR maps directly to a chain step. Field data at
//! SNR k enters the chain at that step; training forwards each SNR group
//! only up to the next group's entry step, and inference either reverses
//! from a sample's own step (denoising) or from T_n (generation).
//!
//! The network output is read as a velocity and converted to a noise
//! prediction, which keeps high-noise steps well conditioned. The public
//! interface deals in noise predictions throughout.

pub mod checkpoint;
pub mod pieces;
pub mod predictor;
pub mod sampler;
pub mod schedule;
pub mod train;

pub use checkpoint::DiffusionCheckpoint;
pub use pieces::{assign_pieces, ForwardMode, ForwardSampler, PieceGroup, PieceMap, SamplerStats, TrainDraw};
pub use predictor::{grids_to_tensor, tensor_to_grids, NoisePredictor, NoisePredictorSpec};
pub use sampler::{
    denoise, eps_from_velocity, forward_sample, generate, posterior_mean, posterior_mean_direct, reverse_step,
    reverse_step_with, DiffusionModel,
};
pub use schedule::{noise_power_of_snr_db, Knot, NoiseSchedule};
pub use train::{train_ddpm, train_ddpm_observed, DdpmHyper, TrainingMeta};
