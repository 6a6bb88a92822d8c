//! Coded 64-QAM link over fading channels with LS, LMMSE and genie estimates.
//!
//! cargo run --release --example link_ber

use csi_ddpm::grid::{make_pilot_pattern, GridDims};
use csi_ddpm::link::{run_link, LinkConfig, LinkEstimator};

fn main() -> csi_ddpm::Result<()> {
    let cfg = LinkConfig {
        n_slots: 60,
        estimators: vec![LinkEstimator::Ls, LinkEstimator::Lmmse, LinkEstimator::Genie],
        ..LinkConfig::default()
    };
    let pattern = make_pilot_pattern(GridDims::default(), &[2, 11], 7)?;
    println!("{:>8} {:>8} {:>12} {:>12}", "est", "snr dB", "uncoded", "coded");
    for r in run_link(&cfg, &pattern, None)? {
        println!("{:>8} {:>8} {:>12.3e} {:>12.3e}", r.estimator.to_string(), r.snr_db, r.uncoded_ber(), r.ber());
    }
    Ok(())
}
