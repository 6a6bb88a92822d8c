//! Every pipeline stage on a shrunken config in a temporary work directory.
//! The CLI binary runs the same stages from a TOML file.
//!
//! cargo run --release --example pipeline_end_to_end

use csi_ddpm::link::LinkEstimator;
use csi_ddpm::pipeline::{ExperimentConfig, Pipeline, Scheme};

fn main() -> csi_ddpm::Result<()> {
    let dir = tempfile::tempdir().expect("temp dir");
    let mut cfg = ExperimentConfig::desk();
    cfg.paths.workdir = dir.path().to_path_buf();
    cfg.dataset.n_samples = 300;
    cfg.ddpm.hyper.epochs = 4;
    cfg.srcnn.n_field = 100;
    cfg.srcnn.n_generated = 100;
    cfg.srcnn.hyper.epochs = 4;
    cfg.eval.schemes = vec![Scheme::Ls, Scheme::Lmmse, Scheme::Adt];
    cfg.eval.profiles = vec!["A".into()];
    cfg.eval.snr_db_list = vec![-5.0, 5.0, 15.0];
    cfg.eval.n_eval_samples = 50;
    cfg.link.n_slots = 4;
    cfg.link.estimators = LinkEstimator::ALL.to_vec();

    let p = Pipeline::new(cfg)?;
    p.gen_data()?;
    p.train_ddpm()?;
    p.denoise()?;
    p.augment(None)?;
    p.train_srcnn()?;
    print!("{}", p.eval_nmse()?.to_csv());
    for r in p.run_link()? {
        println!("{} {} dB: BER {:.3e}", r.estimator, r.snr_db, r.ber());
    }
    for svg in p.plot(&[])? {
        println!("wrote {}", svg.display());
    }
    println!("\nartifacts:");
    let mut names: Vec<_> = std::fs::read_dir(dir.path()).expect("work dir").map(|e| e.unwrap().file_name()).collect();
    names.sort();
    for n in names {
        println!("  {}", n.to_string_lossy());
    }
    Ok(())
}
