//! LS and LMMSE channel estimation with time-linear interpolation.
//!
//! cargo run --release --example classical_estimators

use csi_ddpm::grid::{make_pilot_pattern, GridDims, TdlProfile};
use csi_ddpm::pipeline::{classical_estimates, EvalSet, Scheme};

fn main() -> csi_ddpm::Result<()> {
    let dims = GridDims::default();
    let pattern = make_pilot_pattern(dims, &[2, 11], 7)?;
    for profile in [TdlProfile::profile_a(), TdlProfile::profile_c()] {
        println!("profile {}", profile.name);
        println!("{:>8} {:>10} {:>10}", "snr dB", "LS", "LMMSE");
        for snr in [-5.0, 0.0, 5.0, 10.0, 15.0, 20.0] {
            let set = EvalSet::draw(&profile, &pattern, snr, 300, 3)?;
            let ls = set.nmse_db(&classical_estimates(Scheme::Ls, &set, &profile, &pattern)?)?;
            let lmmse = set.nmse_db(&classical_estimates(Scheme::Lmmse, &set, &profile, &pattern)?)?;
            println!("{snr:>8} {ls:>10.2} {lmmse:>10.2}");
        }
    }
    Ok(())
}
