//! Piecewise-linear noise schedules and the SNR-to-step mapping.
//!
//! cargo run --release --example noise_schedule

use csi_ddpm::diffusion::{assign_pieces, ForwardMode, ForwardSampler, Knot, NoiseSchedule};
use csi_ddpm::rng::rng_from;

fn main() -> csi_ddpm::Result<()> {
    let linear = NoiseSchedule::linear(0.9999, 0.0001, 1000)?;
    let desk = NoiseSchedule::build(
        0.9999,
        0.0001,
        100,
        &[Knot { step: 50, abar: 0.2 }, Knot { step: 80, abar: 0.02 }],
    )?;

    println!("{:>8} {:>14} {:>12}", "snr dB", "linear T=1000", "desk T=100");
    for snr in [-10.0, -5.0, 0.0, 5.0, 10.0, 15.0, 20.0] {
        println!("{snr:>8} {:>14} {:>12}", linear.snr_to_step(snr), desk.snr_to_step(snr));
    }

    let pieces = assign_pieces(&[15.0, 5.0, -5.0], &desk)?;
    println!("\nforward ranges on the desk schedule:");
    for (k, g) in pieces.groups().iter().enumerate() {
        let (lo, hi) = pieces.range(k, ForwardMode::Piecewise);
        let (tlo, thi) = pieces.range(k, ForwardMode::Traditional);
        println!("  {:>5} dB enters at {:>3}: piecewise ({lo}, {hi}], traditional ({tlo}, {thi}]", g.snr_db, g.entry_step);
    }

    let snrs: Vec<f64> = (0..1000).map(|i| [15.0, 5.0, -5.0][i % 3]).collect();
    let mut sampler = ForwardSampler::new(&pieces, ForwardMode::Piecewise, &snrs)?;
    let mut rng = rng_from(1);
    for _ in 0..100_000 {
        sampler.draw(&mut rng);
    }
    let st = sampler.stats();
    println!("\n{} draws, {} out of range, {} steps trained from more than one group", st.draws, st.out_of_range, st.shared_steps());
    Ok(())
}
