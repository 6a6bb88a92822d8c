//! Train a small DDPM on mixed-SNR field data, then denoise and generate.
//!
//! cargo run --release --example ddpm_denoise

use csi_ddpm::diffusion::{assign_pieces, train_ddpm_observed, DiffusionModel};
use csi_ddpm::estimators::ensemble_nmse_db;
use csi_ddpm::grid::{build_dataset, NoisySample, Provenance};
use csi_ddpm::pipeline::{EvalSet, ExperimentConfig};

fn main() -> csi_ddpm::Result<()> {
    let mut cfg = ExperimentConfig::desk();
    cfg.ddpm.hyper.epochs = 16;
    let schedule = cfg.schedule()?;
    let (ds, _) = build_dataset(&cfg.profile()?, cfg.dims()?, &cfg.campaign_pattern()?, &cfg.mixture()?, 800, 1)?;
    let pieces = assign_pieces(&cfg.mixture()?.snrs(), &schedule)?;
    for g in pieces.groups() {
        println!("{:>5} dB enters the chain at step {}", g.snr_db, g.entry_step);
    }

    let ckpt = train_ddpm_observed(&ds.samples, &cfg.ddpm.predictor, &schedule, &pieces, &cfg.ddpm.hyper, |e, l| {
        if e % 4 == 3 {
            println!("epoch {:>3} loss {l:.4}", e + 1);
        }
    })?;
    println!("trained in {:.1} s", ckpt.meta.wall_time_s);
    let model = DiffusionModel::from_checkpoint(&ckpt)?;

    // Denoise fresh pilot grids: normalized LS in, estimate of H out.
    let pattern = cfg.pattern()?;
    for snr in [-5.0, 5.0, 15.0] {
        let set = EvalSet::draw(&cfg.profile()?, &pattern, snr, 200, 9)?;
        let truth: Vec<_> = set.truth.iter().map(|h| pattern.extract(h)).collect::<Result<_, _>>()?;
        let noisy: Vec<NoisySample> =
            set.ls.iter().map(|g| NoisySample::new(g.clone(), snr, Provenance::Field, true)).collect::<Result<_, _>>()?;
        let den = model.denoise_batch(&noisy, 3)?;
        let ls = ensemble_nmse_db(set.raw_ls().iter().zip(&truth))?;
        let dn = ensemble_nmse_db(den.iter().map(|s| &s.grid).zip(&truth))?;
        println!("{snr:>5} dB: LS {ls:>7.2} dB, denoised {dn:>7.2} dB ({} reverse steps)", schedule.snr_to_step(snr));
    }

    let gen = model.generate(100, 4)?;
    let power = gen.iter().map(|s| s.grid.mean_power()).sum::<f64>() / gen.len() as f64;
    println!("100 generated grids, mean power {power:.3} (true channels: 1)");
    Ok(())
}
