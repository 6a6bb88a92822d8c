use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use csi_ddpm::pipeline::{ExperimentConfig, Pipeline};

/// Diffusion-model channel estimation experiments, one stage at a time.
///
/// Stages read and write artifacts under the work directory; run them in
/// the order listed. Without --config a built-in preset is used.
#[derive(Parser)]
#[command(name = "csi-pipeline", version)]
struct Cli {
    /// TOML experiment config.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Built-in settings used when no --config is given.
    #[arg(long, value_enum, global = true, default_value = "desk", conflicts_with = "config")]
    preset: Preset,
    /// Overrides paths.workdir.
    #[arg(long, global = true)]
    workdir: Option<PathBuf>,
    /// Derives every seed in the config from this one.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Print training and sweep progress.
    #[arg(short, long, global = true)]
    verbose: bool,
    #[command(subcommand)]
    stage: Stage,
}

#[derive(Clone, Copy, ValueEnum)]
enum Preset {
    /// Single-CPU scale, about an hour end to end.
    Desk,
    /// Full-scale training settings.
    Paper,
}

#[derive(Subcommand)]
enum Stage {
    /// Simulate the field campaign dataset.
    GenData,
    /// Train the DDPM(s) on the field dataset.
    TrainDdpm,
    /// Denoise field samples into SRCNN targets.
    Denoise,
    /// Generate channel grids for SRCNN augmentation.
    Augment {
        /// Number of grids (default srcnn.n_generated).
        #[arg(long)]
        n: Option<usize>,
    },
    /// Train one SRCNN per learned scheme.
    TrainSrcnn,
    /// NMSE sweep, written to nmse.csv.
    EvalNmse,
    /// Coded BER sweep, written to ber.csv.
    RunLink,
    /// Render CSV tables to SVG under plots/.
    Plot {
        /// Tables to plot (default: nmse.csv and ber.csv in the work directory).
        csv: Vec<PathBuf>,
    },
    /// Print the effective config as TOML.
    ShowConfig,
}

impl Stage {
    fn name(&self) -> &'static str {
        match self {
            Stage::GenData => "gen-data",
            Stage::TrainDdpm => "train-ddpm",
            Stage::Denoise => "denoise",
            Stage::Augment { .. } => "augment",
            Stage::TrainSrcnn => "train-srcnn",
            Stage::EvalNmse => "eval-nmse",
            Stage::RunLink => "run-link",
            Stage::Plot { .. } => "plot",
            Stage::ShowConfig => "show-config",
        }
    }
}

fn run(cli: Cli) -> csi_ddpm::Result<()> {
    let mut cfg = match &cli.config {
        Some(p) => ExperimentConfig::load(p)?,
        None => match cli.preset {
            Preset::Desk => ExperimentConfig::desk(),
            Preset::Paper => ExperimentConfig::paper(),
        },
    };
    if let Some(w) = cli.workdir {
        cfg.paths.workdir = w;
    }
    if let Some(s) = cli.seed {
        cfg = cfg.with_seed(s);
    }
    let mut p = Pipeline::new(cfg)?;
    p.verbose = cli.verbose;
    match cli.stage {
        Stage::GenData => {
            let ds = p.gen_data()?;
            println!("wrote {} samples to {}", ds.samples.len(), p.ws.field_dir().display());
        }
        Stage::TrainDdpm => {
            for c in p.train_ddpm()? {
                let last = c.meta.loss_curve.last().copied().unwrap_or(f64::NAN);
                println!("trained {:?} DDPM: final loss {last:.5}, {:.1} s", c.meta.forward_mode, c.meta.wall_time_s);
            }
        }
        Stage::Denoise => {
            for ds in p.denoise()? {
                println!("denoised {} samples", ds.samples.len());
            }
        }
        Stage::Augment { n } => {
            for ds in p.augment(n)? {
                println!("generated {} grids", ds.samples.len());
            }
        }
        Stage::TrainSrcnn => {
            for c in p.train_srcnn()? {
                let last = c.meta.loss_curve.last().copied().unwrap_or(f64::NAN);
                println!("trained SRCNN on {} pairs: final loss {last:.6}", c.meta.n_pairs);
            }
        }
        Stage::EvalNmse => {
            print!("{}", p.eval_nmse()?.to_csv());
        }
        Stage::RunLink => {
            for r in p.run_link()? {
                println!("{} {} dB: BER {:.3e} ({} bits)", r.estimator, r.snr_db, r.ber(), r.bits_total);
            }
        }
        Stage::Plot { csv } => {
            for out in p.plot(&csv)? {
                println!("wrote {}", out.display());
            }
        }
        Stage::ShowConfig => print!("{}", p.cfg.to_toml()?),
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let stage = cli.stage.name();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("csi-pipeline {stage}: {e}");
            ExitCode::FAILURE
        }
    }
}
