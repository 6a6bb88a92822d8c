use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::config::{hash_of, ExperimentConfig};
use super::metrics::{MetricTable, NmseRow};
use super::plot::plot_csv;
use super::schemes::{classical_estimates, learned_estimates, training_pairs, EvalSet, Scheme};
use crate::dataset_io::{load_dataset, read_json, save_dataset, save_eval_store, write_json};
use crate::diffusion::{assign_pieces, train_ddpm_observed, DiffusionCheckpoint, DiffusionModel, ForwardMode};
use crate::error::{Error, Result};
use crate::grid::{build_dataset, DatasetManifest, NoisySample, TdlProfile};
use crate::link::{run_link, write_ber_csv, BerRecord, LinkEstimator, LinkModels};
use crate::rng::tagged_seed;
use crate::srcnn::{train_srcnn_observed, SrcnnCheckpoint, SrcnnModel};

const STAMP_FILE: &str = "stamp.json";

fn mode_tag(mode: ForwardMode) -> &'static str {
    match mode {
        ForwardMode::Piecewise => "piecewise",
        ForwardMode::Traditional => "traditional",
    }
}

/// Paths of every artifact under one work directory.
#[derive(Clone, Debug)]
pub struct Workspace {
    root: PathBuf,
}

impl Workspace {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Self { root: root.into() }
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn field_dir(&self) -> PathBuf {
        self.root.join("field")
    }

    pub fn field_pure_dir(&self) -> PathBuf {
        self.root.join("field-pure")
    }

    pub fn ddpm_path(&self, mode: ForwardMode) -> PathBuf {
        match mode {
            ForwardMode::Piecewise => self.root.join("ddpm.json"),
            ForwardMode::Traditional => self.root.join("ddpm-traditional.json"),
        }
    }

    pub fn denoised_dir(&self, mode: ForwardMode) -> PathBuf {
        self.root.join(format!("denoised-{}", mode_tag(mode)))
    }

    pub fn generated_dir(&self, mode: ForwardMode) -> PathBuf {
        self.root.join(format!("generated-{}", mode_tag(mode)))
    }

    pub fn srcnn_path(&self, scheme: Scheme) -> PathBuf {
        self.root.join(format!("srcnn-{scheme}.json"))
    }

    pub fn log_path(&self, name: &str) -> PathBuf {
        self.root.join("logs").join(format!("{name}.json"))
    }

    pub fn nmse_csv(&self) -> PathBuf {
        self.root.join("nmse.csv")
    }

    pub fn ber_csv(&self) -> PathBuf {
        self.root.join("ber.csv")
    }

    pub fn plots_dir(&self) -> PathBuf {
        self.root.join("plots")
    }
}

/// Record written next to every artifact a stage produces.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunLog {
    pub stage: String,
    pub seed: u64,
    pub config_hash: String,
    pub wall_time_s: f64,
    /// Stage specific: loss curves, sample counts and the like.
    pub details: serde_json::Value,
}

#[derive(Serialize, Deserialize)]
struct Stamp {
    stage: String,
    config_hash: String,
}

/// Runs pipeline stages for one config and work directory.
pub struct Pipeline {
    pub cfg: ExperimentConfig,
    pub ws: Workspace,
    /// Print per-epoch progress to stderr.
    pub verbose: bool,
}

fn missing(stage: &'static str, what: impl Into<String>, producer: &str) -> Error {
    Error::MissingArtifact {
        stage,
        what: what.into(),
        hint: format!("csi-pipeline {producer}"),
    }
}

fn stale(path: &Path, producer: &str) -> Error {
    Error::Stale {
        path: path.to_path_buf(),
        reason: format!("it was produced under different settings; rerun `csi-pipeline {producer}`"),
    }
}

impl Pipeline {
    pub fn new(cfg: ExperimentConfig) -> Result<Self> {
        cfg.validate()?;
        let ws = Workspace::new(cfg.paths.workdir.clone());
        Ok(Self { cfg, ws, verbose: false })
    }

    /// Learned schemes whose interpolators are needed by the NMSE sweep or
    /// the link run.
    pub fn learned_schemes(&self) -> Vec<Scheme> {
        let mut out: Vec<Scheme> = self.cfg.eval.schemes.iter().copied().filter(|s| s.is_learned()).collect();
        if self.cfg.link.estimators.contains(&LinkEstimator::DdpmSrcnn) {
            out.push(Scheme::Adt);
        }
        out.sort();
        out.dedup();
        out
    }

    fn modes_where(&self, keep: impl Fn(Scheme) -> bool) -> Vec<ForwardMode> {
        let mut out = Vec::new();
        for s in self.learned_schemes().into_iter().filter(|&s| keep(s)) {
            let m = s.forward_mode().expect("learned schemes have a DDPM");
            if !out.contains(&m) {
                out.push(m);
            }
        }
        out
    }

    /// DDPMs to train: one per forwarding mode used by a learned scheme.
    pub fn ddpm_modes(&self) -> Vec<ForwardMode> {
        self.modes_where(|_| true)
    }

    fn denoised_hash(&self, mode: ForwardMode) -> String {
        hash_of(&(self.cfg.ddpm_hash(mode), self.cfg.srcnn.n_field))
    }

    fn write_log(&self, name: &str, log: &RunLog) -> Result<()> {
        write_json(&self.ws.log_path(name), log)
    }

    fn save_stamped(&self, dir: &Path, ds: &DatasetManifest, stage: &str, hash: String) -> Result<()> {
        save_dataset(dir, ds)?;
        write_json(
            &dir.join(STAMP_FILE),
            &Stamp {
                stage: stage.into(),
                config_hash: hash,
            },
        )
    }

    fn load_stamped(&self, stage: &'static str, dir: &Path, producer: &str, hash: &str) -> Result<DatasetManifest> {
        let stamp_path = dir.join(STAMP_FILE);
        if !stamp_path.exists() {
            return Err(missing(stage, format!("{}", dir.display()), producer));
        }
        let stamp: Stamp = read_json(&stamp_path)?;
        if stamp.config_hash != hash {
            return Err(stale(dir, producer));
        }
        load_dataset(dir)
    }

    fn field(&self, stage: &'static str) -> Result<DatasetManifest> {
        self.load_stamped(stage, &self.ws.field_dir(), "gen-data", &hash_of(&self.cfg.dataset))
    }

    pub fn load_ddpm(&self, stage: &'static str, mode: ForwardMode) -> Result<DiffusionModel> {
        let path = self.ws.ddpm_path(mode);
        if !path.exists() {
            return Err(missing(stage, format!("{} DDPM checkpoint {}", mode_tag(mode), path.display()), "train-ddpm"));
        }
        let ckpt = DiffusionCheckpoint::load(&path)?;
        if ckpt.config_hash.as_deref() != Some(self.cfg.ddpm_hash(mode).as_str()) {
            return Err(stale(&path, "train-ddpm"));
        }
        ckpt.ensure_schedule(&self.cfg.schedule()?)?;
        DiffusionModel::from_checkpoint(&ckpt)
    }

    pub fn load_srcnn(&self, stage: &'static str, scheme: Scheme) -> Result<SrcnnModel> {
        let path = self.ws.srcnn_path(scheme);
        if !path.exists() {
            return Err(missing(stage, format!("SRCNN checkpoint {}", path.display()), "train-srcnn"));
        }
        let ckpt = SrcnnCheckpoint::load(&path)?;
        if ckpt.config_hash.as_deref() != Some(self.cfg.srcnn_hash(scheme).as_str()) {
            return Err(stale(&path, "train-srcnn"));
        }
        ckpt.ensure_pattern(&self.cfg.pattern()?)?;
        SrcnnModel::from_checkpoint(&ckpt)
    }

    /// Denoised field samples written by `denoise` for `mode`.
    pub fn load_denoised(&self, stage: &'static str, mode: ForwardMode) -> Result<DatasetManifest> {
        self.load_stamped(stage, &self.ws.denoised_dir(mode), "denoise", &self.denoised_hash(mode))
    }

    /// Generated grids written by `augment` for `mode`.
    pub fn load_generated(&self, stage: &'static str, mode: ForwardMode) -> Result<DatasetManifest> {
        self.load_stamped(stage, &self.ws.generated_dir(mode), "augment", &self.cfg.ddpm_hash(mode))
    }

    /// Simulates the field campaign: full-grid sounding at the configured
    /// SNR mixture. Noiseless grids go to `field-pure/` for evaluation.
    pub fn gen_data(&self) -> Result<DatasetManifest> {
        let t0 = Instant::now();
        let d = &self.cfg.dataset;
        let (ds, pure) = build_dataset(
            &self.cfg.profile()?,
            self.cfg.dims()?,
            &self.cfg.campaign_pattern()?,
            &self.cfg.mixture()?,
            d.n_samples,
            d.seed,
        )?;
        let hash = hash_of(d);
        self.save_stamped(&self.ws.field_dir(), &ds, "gen-data", hash.clone())?;
        save_eval_store(&self.ws.field_pure_dir(), &pure, &ds)?;
        self.write_log(
            "gen-data",
            &RunLog {
                stage: "gen-data".into(),
                seed: d.seed,
                config_hash: hash,
                wall_time_s: t0.elapsed().as_secs_f64(),
                details: serde_json::json!({
                    "n_samples": ds.samples.len(),
                    "snr_histogram": ds.snr_histogram(),
                }),
            },
        )?;
        Ok(ds)
    }

    /// Trains one DDPM per forwarding mode in use.
    pub fn train_ddpm(&self) -> Result<Vec<DiffusionCheckpoint>> {
        self.ddpm_modes().into_iter().map(|m| self.train_ddpm_mode(m)).collect()
    }

    pub fn train_ddpm_mode(&self, mode: ForwardMode) -> Result<DiffusionCheckpoint> {
        let ds = self.field("train-ddpm")?;
        let t0 = Instant::now();
        let schedule = self.cfg.schedule()?;
        let pieces = assign_pieces(&self.cfg.mixture()?.snrs(), &schedule)?;
        let mut hyper = self.cfg.ddpm.hyper.clone();
        hyper.forward_mode = mode;
        let verbose = self.verbose;
        let mut ckpt = train_ddpm_observed(&ds.samples, &self.cfg.ddpm.predictor, &schedule, &pieces, &hyper, |e, l| {
            if verbose {
                eprintln!("train-ddpm [{}] epoch {e} loss {l:.5}", mode_tag(mode));
            }
        })?;
        let hash = self.cfg.ddpm_hash(mode);
        ckpt.config_hash = Some(hash.clone());
        ckpt.save(&self.ws.ddpm_path(mode))?;
        self.write_log(
            &format!("train-ddpm-{}", mode_tag(mode)),
            &RunLog {
                stage: "train-ddpm".into(),
                seed: hyper.seed,
                config_hash: hash,
                wall_time_s: t0.elapsed().as_secs_f64(),
                details: serde_json::to_value(&ckpt.meta).map_err(|e| Error::Config(e.to_string()))?,
            },
        )?;
        Ok(ckpt)
    }

    /// Denoises the first `srcnn.n_field` field samples with each DDPM whose
    /// output feeds a denoising scheme.
    pub fn denoise(&self) -> Result<Vec<DatasetManifest>> {
        let ds = self.field("denoise")?;
        let n = self.cfg.srcnn.n_field;
        let mut out = Vec::new();
        for mode in self.modes_where(Scheme::denoises) {
            let model = self.load_ddpm("denoise", mode)?;
            let t0 = Instant::now();
            let seed = tagged_seed(self.cfg.ddpm.hyper.seed, "denoise", mode as u64);
            let den = model.denoise_batch(&ds.samples[..n], seed)?;
            let derived = DatasetManifest::derived(&ds, den, seed);
            let hash = self.denoised_hash(mode);
            self.save_stamped(&self.ws.denoised_dir(mode), &derived, "denoise", hash.clone())?;
            self.write_log(
                &format!("denoise-{}", mode_tag(mode)),
                &RunLog {
                    stage: "denoise".into(),
                    seed,
                    config_hash: hash,
                    wall_time_s: t0.elapsed().as_secs_f64(),
                    details: serde_json::json!({
                        "n": n,
                        "reverse_steps": model.reverse_steps_executed(),
                        "snr_histogram": derived.snr_histogram(),
                    }),
                },
            )?;
            out.push(derived);
        }
        Ok(out)
    }

    /// Generates `n` grids (default `srcnn.n_generated`) with each DDPM whose
    /// output feeds an augmenting scheme.
    pub fn augment(&self, n: Option<usize>) -> Result<Vec<DatasetManifest>> {
        let ds = self.field("augment")?;
        let n = n.unwrap_or(self.cfg.srcnn.n_generated);
        let mut out = Vec::new();
        for mode in self.modes_where(Scheme::augments) {
            let model = self.load_ddpm("augment", mode)?;
            let t0 = Instant::now();
            let seed = tagged_seed(self.cfg.ddpm.hyper.seed, "augment", mode as u64);
            let gen = model.generate(n, seed)?;
            let derived = DatasetManifest::derived(&ds, gen, seed);
            let hash = self.cfg.ddpm_hash(mode);
            self.save_stamped(&self.ws.generated_dir(mode), &derived, "augment", hash.clone())?;
            let power = derived.samples.iter().map(|s| s.grid.mean_power()).sum::<f64>() / n.max(1) as f64;
            self.write_log(
                &format!("augment-{}", mode_tag(mode)),
                &RunLog {
                    stage: "augment".into(),
                    seed,
                    config_hash: hash,
                    wall_time_s: t0.elapsed().as_secs_f64(),
                    details: serde_json::json!({ "n": n, "mean_power": power }),
                },
            )?;
            out.push(derived);
        }
        Ok(out)
    }

    fn srcnn_inputs(&self, scheme: Scheme) -> Result<(Vec<NoisySample>, Vec<NoisySample>)> {
        let mode = scheme.forward_mode().expect("learned scheme");
        let n_field = self.cfg.srcnn.n_field;
        let field = if scheme.denoises() {
            self.load_denoised("train-srcnn", mode)?.samples
        } else {
            let mut s = self.field("train-srcnn")?.samples;
            s.truncate(n_field);
            s
        };
        let mut generated = Vec::new();
        let n_gen = self.cfg.srcnn.n_generated;
        if scheme.augments() && n_gen > 0 {
            let dir = self.ws.generated_dir(mode);
            generated = self.load_generated("train-srcnn", mode)?.samples;
            if generated.len() < n_gen {
                return Err(Error::MissingArtifact {
                    stage: "train-srcnn",
                    what: format!("{n_gen} generated grids in {}, found {}", dir.display(), generated.len()),
                    hint: format!("csi-pipeline augment --n {n_gen}"),
                });
            }
            generated.truncate(n_gen);
        }
        Ok((field, generated))
    }

    /// Trains the interpolator of every learned scheme in use.
    pub fn train_srcnn(&self) -> Result<Vec<SrcnnCheckpoint>> {
        let schemes = self.learned_schemes();
        let mut out = Vec::with_capacity(schemes.len());
        for scheme in schemes {
            out.push(self.train_srcnn_scheme(scheme)?);
        }
        Ok(out)
    }

    pub fn train_srcnn_scheme(&self, scheme: Scheme) -> Result<SrcnnCheckpoint> {
        let pattern = self.cfg.pattern()?;
        let (field, generated) = self.srcnn_inputs(scheme)?;
        let pairs = training_pairs(scheme, &field, &generated, &pattern)?;
        let t0 = Instant::now();
        let verbose = self.verbose;
        let hyper = &self.cfg.srcnn.hyper;
        let mut ckpt = train_srcnn_observed(&pairs, &pattern, &self.cfg.srcnn.spec, hyper, |e, l| {
            if verbose {
                eprintln!("train-srcnn [{scheme}] epoch {e} loss {l:.6}");
            }
        })?;
        let hash = self.cfg.srcnn_hash(scheme);
        ckpt.config_hash = Some(hash.clone());
        ckpt.save(&self.ws.srcnn_path(scheme))?;
        self.write_log(
            &format!("train-srcnn-{scheme}"),
            &RunLog {
                stage: "train-srcnn".into(),
                seed: hyper.seed,
                config_hash: hash,
                wall_time_s: t0.elapsed().as_secs_f64(),
                details: serde_json::to_value(&ckpt.meta).map_err(|e| Error::Config(e.to_string()))?,
            },
        )?;
        Ok(ckpt)
    }

    /// NMSE sweep over the configured schemes, profiles and SNRs. Every
    /// scheme sees the same channels and noise at each point.
    pub fn eval_nmse(&self) -> Result<MetricTable> {
        let t0 = Instant::now();
        let e = &self.cfg.eval;
        let pattern = self.cfg.pattern()?;
        let mut ddpms: Vec<(ForwardMode, DiffusionModel)> = Vec::new();
        let mut srcnns: Vec<(Scheme, SrcnnModel)> = Vec::new();
        for &s in e.schemes.iter().filter(|s| s.is_learned()) {
            let mode = s.forward_mode().expect("learned scheme");
            if s.denoises() && !ddpms.iter().any(|(m, _)| *m == mode) {
                ddpms.push((mode, self.load_ddpm("eval-nmse", mode)?));
            }
            srcnns.push((s, self.load_srcnn("eval-nmse", s)?));
        }
        let mut table = MetricTable::new();
        for profile_name in &e.profiles {
            let profile = TdlProfile::builtin(profile_name)?;
            for (si, &snr_db) in e.snr_db_list.iter().enumerate() {
                let seed = tagged_seed(e.seed, &format!("eval/{profile_name}"), si as u64);
                let set = EvalSet::draw(&profile, &pattern, snr_db, e.n_eval_samples, seed)?;
                for &scheme in &e.schemes {
                    let est = if scheme.is_learned() {
                        let mode = scheme.forward_mode().expect("learned scheme");
                        let ddpm = ddpms.iter().find(|(m, _)| *m == mode).map(|(_, d)| d);
                        let srcnn = &srcnns.iter().find(|(s, _)| *s == scheme).expect("loaded above").1;
                        learned_estimates(scheme, &set, ddpm, srcnn, tagged_seed(seed, "denoise", 0))?
                    } else {
                        classical_estimates(scheme, &set, &profile, &pattern)?
                    };
                    let nmse_db = set.nmse_db(&est)?;
                    if self.verbose {
                        eprintln!("eval-nmse {scheme} {profile_name} {snr_db} dB: {nmse_db:.3} dB");
                    }
                    table.push(NmseRow {
                        scheme,
                        profile: profile_name.clone(),
                        snr_db,
                        nmse_db,
                        n: e.n_eval_samples,
                    })?;
                }
            }
        }
        table.write_csv(&self.ws.nmse_csv())?;
        self.write_log(
            "eval-nmse",
            &RunLog {
                stage: "eval-nmse".into(),
                seed: e.seed,
                config_hash: hash_of(&self.cfg),
                wall_time_s: t0.elapsed().as_secs_f64(),
                details: serde_json::json!({ "rows": table.rows().len() }),
            },
        )?;
        Ok(table)
    }

    /// Coded BER per estimator and SNR.
    pub fn run_link(&self) -> Result<Vec<BerRecord>> {
        let t0 = Instant::now();
        let cfg = self.cfg.link_config()?;
        let pattern = self.cfg.pattern()?;
        let records = if cfg.estimators.contains(&LinkEstimator::DdpmSrcnn) {
            let ddpm = self.load_ddpm("run-link", ForwardMode::Piecewise)?;
            let srcnn = self.load_srcnn("run-link", Scheme::Adt)?;
            run_link(&cfg, &pattern, Some(LinkModels { ddpm: &ddpm, srcnn: &srcnn }))?
        } else {
            run_link(&cfg, &pattern, None)?
        };
        write_ber_csv(&self.ws.ber_csv(), &records)?;
        self.write_log(
            "run-link",
            &RunLog {
                stage: "run-link".into(),
                seed: cfg.seed,
                config_hash: hash_of(&self.cfg),
                wall_time_s: t0.elapsed().as_secs_f64(),
                details: serde_json::json!({
                    "records": records.iter().map(|r| serde_json::json!({
                        "estimator": r.estimator.tag(),
                        "snr_db": r.snr_db,
                        "ber": r.ber(),
                        "uncoded_ber": r.uncoded_ber(),
                    })).collect::<Vec<_>>(),
                }),
            },
        )?;
        Ok(records)
    }

    /// Renders each CSV to `plots/`. With no paths, plots whichever of
    /// `nmse.csv` and `ber.csv` exist.
    pub fn plot(&self, csvs: &[PathBuf]) -> Result<Vec<PathBuf>> {
        let list: Vec<PathBuf> = if csvs.is_empty() {
            [self.ws.nmse_csv(), self.ws.ber_csv()].into_iter().filter(|p| p.exists()).collect()
        } else {
            csvs.to_vec()
        };
        if list.is_empty() {
            return Err(missing("plot", "nmse.csv or ber.csv", "eval-nmse"));
        }
        list.iter().map(|c| plot_csv(c, &self.ws.plots_dir())).collect()
    }
}
