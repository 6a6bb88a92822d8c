//! Stage plumbing on a tiny config: artifacts, diagnostics, staleness,
//! determinism and the CLI binary.

use std::path::Path;
use std::process::Command;

use csi_ddpm::dataset_io::load_dataset;
use csi_ddpm::diffusion::{DiffusionCheckpoint, ForwardMode};
use csi_ddpm::estimators::NMSE_FLOOR_DB;
use csi_ddpm::grid::Provenance;
use csi_ddpm::link::LinkEstimator;
use csi_ddpm::pipeline::{EvalSet, ExperimentConfig, MetricTable, Pipeline, Scheme};
use csi_ddpm::srcnn::SrcnnCheckpoint;
use csi_ddpm::Error;

fn tiny(workdir: &Path) -> ExperimentConfig {
    let mut c = ExperimentConfig::desk();
    c.paths.workdir = workdir.to_path_buf();
    c.dataset.n_samples = 60;
    c.ddpm.hyper.epochs = 1;
    c.ddpm.hyper.batch = 16;
    c.srcnn.n_field = 20;
    c.srcnn.n_generated = 10;
    c.srcnn.hyper.epochs = 1;
    c.srcnn.hyper.batch = 8;
    c.eval.schemes = Scheme::ALL.to_vec();
    c.eval.profiles = vec!["A".into(), "C".into()];
    c.eval.snr_db_list = vec![-5.0, 15.0];
    c.eval.n_eval_samples = 6;
    c.link.n_slots = 1;
    c.link.snr_db_list = vec![10.0];
    c.link.estimators = LinkEstimator::ALL.to_vec();
    c
}

fn run_all(p: &Pipeline) {
    p.gen_data().unwrap();
    p.train_ddpm().unwrap();
    p.denoise().unwrap();
    p.augment(None).unwrap();
    p.train_srcnn().unwrap();
    p.eval_nmse().unwrap();
    p.run_link().unwrap();
}

#[test]
fn full_run_is_deterministic_and_complete() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let pa = Pipeline::new(tiny(a.path())).unwrap();
    let pb = Pipeline::new(tiny(b.path())).unwrap();
    run_all(&pa);
    run_all(&pb);
    for f in ["nmse.csv", "ber.csv", "field/samples.bin", "generated-piecewise/samples.bin"] {
        let same = std::fs::read(a.path().join(f)).unwrap() == std::fs::read(b.path().join(f)).unwrap();
        assert!(same, "{f} differs between identical runs");
    }
    // Checkpoints match except for the recorded wall time.
    let (ca, cb) = (pa.ws.ddpm_path(ForwardMode::Traditional), pb.ws.ddpm_path(ForwardMode::Traditional));
    assert!(DiffusionCheckpoint::load(&ca).unwrap().params == DiffusionCheckpoint::load(&cb).unwrap().params);
    let (sa, sb) = (pa.ws.srcnn_path(Scheme::Ad), pb.ws.srcnn_path(Scheme::Ad));
    assert!(SrcnnCheckpoint::load(&sa).unwrap().params == SrcnnCheckpoint::load(&sb).unwrap().params);

    let table = MetricTable::read_csv(&pa.ws.nmse_csv()).unwrap();
    assert_eq!(table.rows().len(), 6 * 2 * 2);
    assert!(table.rows().iter().all(|r| r.n == 6 && r.nmse_db.is_finite()));

    for f in ["ddpm-traditional.json", "denoised-piecewise", "denoised-traditional", "generated-piecewise", "generated-traditional", "logs/train-ddpm-piecewise.json", "logs/eval-nmse.json"] {
        assert!(a.path().join(f).exists(), "missing {f}");
    }

    // The full method trains only on denoised and generated grids.
    let ckpt = SrcnnCheckpoint::load(&pa.ws.srcnn_path(Scheme::Adt)).unwrap();
    let kinds: Vec<Provenance> = ckpt.meta.sources.iter().filter(|(_, n)| *n > 0).map(|(p, _)| *p).collect();
    assert!(kinds.iter().all(|p| matches!(p, Provenance::Denoised | Provenance::Generated)));
    assert_eq!(ckpt.meta.n_pairs, 30);

    let svgs = pa.plot(&[]).unwrap();
    assert_eq!(svgs.len(), 2);
}

#[test]
fn missing_upstream_names_the_stage() {
    let dir = tempfile::tempdir().unwrap();
    let p = Pipeline::new(tiny(dir.path())).unwrap();
    match p.train_ddpm() {
        Err(Error::MissingArtifact { stage, hint, .. }) => {
            assert_eq!(stage, "train-ddpm");
            assert!(hint.contains("gen-data"));
        }
        other => panic!("expected a missing-artifact error, got {other:?}"),
    }
    p.gen_data().unwrap();
    let err = p.denoise().unwrap_err().to_string();
    assert!(err.contains("denoise") && err.contains("train-ddpm"), "{err}");
}

#[test]
fn stale_checkpoints_are_refused() {
    let dir = tempfile::tempdir().unwrap();
    let p = Pipeline::new(tiny(dir.path())).unwrap();
    p.gen_data().unwrap();
    p.train_ddpm().unwrap();
    let mut changed = tiny(dir.path());
    changed.ddpm.hyper.lr *= 2.0;
    let q = Pipeline::new(changed).unwrap();
    assert!(matches!(q.denoise(), Err(Error::Stale { .. })));
    // A changed dataset invalidates the field set for every consumer.
    let mut changed = tiny(dir.path());
    changed.dataset.seed += 1;
    assert!(matches!(Pipeline::new(changed).unwrap().train_ddpm(), Err(Error::Stale { .. })));
}

#[test]
fn gen_data_rerun_is_byte_identical_and_augment_zero_is_valid() {
    let dir = tempfile::tempdir().unwrap();
    let p = Pipeline::new(tiny(dir.path())).unwrap();
    p.gen_data().unwrap();
    let first = std::fs::read(p.ws.field_dir().join("samples.bin")).unwrap();
    p.gen_data().unwrap();
    assert_eq!(first, std::fs::read(p.ws.field_dir().join("samples.bin")).unwrap());

    p.train_ddpm().unwrap();
    let sets = p.augment(Some(0)).unwrap();
    assert!(sets.iter().all(|s| s.samples.is_empty()));
    let back = load_dataset(&p.ws.generated_dir(ForwardMode::Piecewise)).unwrap();
    assert!(back.samples.is_empty());
    // Too few generated grids for the configured SRCNN set is an upstream problem.
    p.denoise().unwrap();
    assert!(matches!(p.train_srcnn(), Err(Error::MissingArtifact { stage: "train-srcnn", .. })));
}

#[test]
fn campaign_dataset_matches_mixture() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = tiny(dir.path());
    cfg.dataset.n_samples = 1000;
    let ds = Pipeline::new(cfg).unwrap().gen_data().unwrap();
    let hist = ds.snr_histogram();
    let count = |snr: f64| hist.iter().find(|(s, _)| *s == snr).map(|(_, n)| *n).unwrap();
    assert_eq!((count(15.0), count(5.0), count(-5.0)), (300, 600, 100));
    assert!(ds.samples.iter().all(|s| !s.pilots_only && s.grid.dims().n_symbols == 14));
}

#[test]
fn exact_estimates_hit_the_floor() {
    let cfg = ExperimentConfig::desk();
    let set = EvalSet::draw(&cfg.profile().unwrap(), &cfg.pattern().unwrap(), 5.0, 4, 0).unwrap();
    assert_eq!(set.nmse_db(&set.truth).unwrap(), NMSE_FLOOR_DB);
}

#[test]
fn config_rejects_unknown_scheme_and_missing_sections() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("c.toml");
    let text = ExperimentConfig::desk().to_toml().unwrap();
    std::fs::write(&path, text.replace("\"a-d-t\"", "\"a-x-t\"")).unwrap();
    assert!(matches!(ExperimentConfig::load(&path), Err(Error::Config(_))));
    std::fs::write(&path, text.split("[eval]").next().unwrap()).unwrap();
    assert!(ExperimentConfig::load(&path).is_err());
    std::fs::write(&path, &text).unwrap();
    assert_eq!(ExperimentConfig::load(&path).unwrap(), ExperimentConfig::desk());
}

#[test]
fn shipped_configs_load() {
    let root = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    assert_eq!(ExperimentConfig::load(&root.join("desk.toml")).unwrap(), ExperimentConfig::desk());
    assert_eq!(ExperimentConfig::load(&root.join("paper.toml")).unwrap(), ExperimentConfig::paper());
}

#[test]
fn cli_exit_codes_and_diagnostics() {
    let dir = tempfile::tempdir().unwrap();
    let cfg_path = dir.path().join("tiny.toml");
    std::fs::write(&cfg_path, tiny(&dir.path().join("work")).to_toml().unwrap()).unwrap();
    let bin = env!("CARGO_BIN_EXE_csi-pipeline");
    let run = |args: &[&str]| Command::new(bin).arg("--config").arg(&cfg_path).args(args).output().unwrap();

    let out = run(&["denoise"]);
    assert!(!out.status.success());
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("csi-pipeline denoise") && err.contains("gen-data"), "{err}");

    assert!(run(&["gen-data"]).status.success());
    assert!(dir.path().join("work/field/manifest.json").exists());

    let other = dir.path().join("other");
    let out = run(&["--workdir", other.to_str().unwrap(), "--seed", "5", "gen-data"]);
    assert!(out.status.success());
    assert_ne!(
        std::fs::read(dir.path().join("work/field/samples.bin")).unwrap(),
        std::fs::read(other.join("field/samples.bin")).unwrap()
    );

    assert!(!run(&["no-such-stage"]).status.success());
}
