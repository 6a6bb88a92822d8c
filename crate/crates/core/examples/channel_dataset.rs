//! Simulate a mixed-SNR field campaign, save it, and load it back.
//!
//! cargo run --release --example channel_dataset

use csi_ddpm::dataset_io::{load_dataset, save_dataset};
use csi_ddpm::grid::{build_dataset, generate_channel, make_pilot_pattern, GridDims, SnrMixture, TdlProfile};

fn main() -> csi_ddpm::Result<()> {
    let dims = GridDims::default();
    for profile in [TdlProfile::profile_a(), TdlProfile::profile_b(), TdlProfile::profile_c()] {
        let power = (0..500u64)
            .map(|i| generate_channel(&profile, dims, i).map(|h| h.mean_power()))
            .sum::<csi_ddpm::Result<f64>>()?
            / 500.0;
        println!(
            "profile {}: {} taps, doppler {} Hz, mean grid power {power:.3}",
            profile.name,
            profile.tap_delays.len(),
            profile.doppler_hz,
        );
    }

    // Pilots on symbols 2 and 11, the layout of ordinary slots.
    let pattern = make_pilot_pattern(dims, &[2, 11], 7)?;
    let (ds, pure) = build_dataset(
        &TdlProfile::profile_a(),
        dims,
        &pattern,
        &SnrMixture::cellular_default(),
        200,
        42,
    )?;
    println!("\n{} samples of {}x{} pilot grids", ds.samples.len(), ds.sample_dims.n_subcarriers, ds.sample_dims.n_symbols);
    for (snr, n) in ds.snr_histogram() {
        println!("  {snr:>5} dB: {n}");
    }
    println!("{} noiseless grids kept for evaluation", pure.len());

    // Grids are stored as f32 pairs, so a reload matches the original to
    // f32 precision and a second save reproduces the files byte for byte.
    let (a, b) = (tempfile::tempdir().expect("temp dir"), tempfile::tempdir().expect("temp dir"));
    save_dataset(a.path(), &ds)?;
    let back = load_dataset(a.path())?;
    save_dataset(b.path(), &back)?;
    let err = ds
        .samples
        .iter()
        .zip(&back.samples)
        .flat_map(|(x, y)| x.grid.values().iter().zip(y.grid.values()).map(|(u, v)| (u - v).norm()))
        .fold(0.0, f64::max);
    let same = |f: &str| std::fs::read(a.path().join(f)).ok() == std::fs::read(b.path().join(f)).ok();
    println!("max reload error {err:.2e}; resaved files identical: {}", same("samples.bin") && same("manifest.json"));
    Ok(())
}
