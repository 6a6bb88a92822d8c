//! SRCNN interpolation from pilot columns to the full grid, against
//! time-linear interpolation.
//!
//! cargo run --release --example srcnn_interpolation

use csi_ddpm::estimators::interpolate_time_linear;
use csi_ddpm::grid::{build_dataset, Provenance};
use csi_ddpm::pipeline::{EvalSet, ExperimentConfig};
use csi_ddpm::srcnn::{train_srcnn_observed, LrHrPair, SrcnnModel};

fn main() -> csi_ddpm::Result<()> {
    let mut cfg = ExperimentConfig::desk();
    cfg.srcnn.hyper.epochs = 30;
    let pattern = cfg.pattern()?;

    // Full-grid field sounding at 15 dB gives the HR targets.
    let mixture = csi_ddpm::grid::SnrMixture::new(&[(15.0, 1.0)])?;
    let (ds, _) = build_dataset(&cfg.profile()?, cfg.dims()?, &cfg.campaign_pattern()?, &mixture, 1000, 2)?;
    let pairs: Vec<LrHrPair> = ds
        .samples
        .iter()
        .map(|s| LrHrPair::from_hr(s.grid.scaled((1.0 + s.noise_var()).sqrt()), &pattern, Provenance::Field))
        .collect::<Result<_, _>>()?;

    let ckpt = train_srcnn_observed(&pairs, &pattern, &cfg.srcnn.spec, &cfg.srcnn.hyper, |e, l| {
        if e % 10 == 9 {
            println!("epoch {:>3} loss {l:.5}", e + 1);
        }
    })?;
    let model = SrcnnModel::from_checkpoint(&ckpt)?;

    for snr in [5.0, 15.0, 25.0] {
        let set = EvalSet::draw(&cfg.profile()?, &pattern, snr, 300, 5)?;
        let raw = set.raw_ls();
        let lin: Vec<_> = raw
            .iter()
            .map(|g| interpolate_time_linear(g, pattern.dims, &pattern.symbol_indices))
            .collect::<Result<_, _>>()?;
        let sr = model.interpolate_batch(&raw)?;
        println!("{snr:>5} dB: linear {:>7.2} dB, SRCNN {:>7.2} dB", set.nmse_db(&lin)?, set.nmse_db(&sr)?);
    }
    Ok(())
}
