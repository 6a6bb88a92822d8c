//! Coded 64-QAM link over the simulated channel, for comparing channel
//! estimators by bit error rate.

pub mod ldpc;
pub mod qam;
pub mod sim;

pub use ldpc::{ldpc_decode, ldpc_encode, Decoded, LdpcCode, LLR_CLIP};
pub use qam::{qam_modulate, soft_demap, Qam};
pub use sim::{
    read_ber_csv, run_link, write_ber_csv, BerRecord, LinkChain, LinkConfig, LinkEstimator, LinkModels, Slot,
    BER_CSV_HEADER,
};
