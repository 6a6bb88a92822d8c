use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::schemes::Scheme;
use crate::diffusion::{DdpmHyper, ForwardMode, Knot, NoisePredictorSpec, NoiseSchedule};
use crate::error::{Error, Result};
use crate::grid::{make_pilot_pattern, GridDims, MixtureComponent, PilotPattern, SnrMixture, TdlProfile};
use crate::link::{LinkConfig, LinkEstimator};
use crate::rng::tagged_seed;
use crate::srcnn::{SrcnnHyper, SrcnnSpec};

/// Field measurement campaign.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetSection {
    pub profile: String,
    pub n_subcarriers: usize,
    pub n_symbols: usize,
    /// Pilot symbol columns of ordinary slots; the campaign itself sounds
    /// the full grid.
    pub pilot_symbols: Vec<usize>,
    pub pilot_seed: u64,
    pub mixture: Vec<MixtureComponent>,
    pub n_samples: usize,
    pub seed: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DdpmSection {
    pub t_n: usize,
    pub abar_start: f64,
    pub abar_end: f64,
    /// Interior knots of the piecewise-linear 1 - abar schedule.
    #[serde(default)]
    pub knots: Vec<Knot>,
    pub predictor: NoisePredictorSpec,
    pub hyper: DdpmHyper,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SrcnnSection {
    pub spec: SrcnnSpec,
    pub hyper: SrcnnHyper,
    pub n_generated: usize,
    /// Field samples denoised into training targets.
    pub n_field: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvalSection {
    pub snr_db_list: Vec<f64>,
    pub profiles: Vec<String>,
    pub n_eval_samples: usize,
    pub schemes: Vec<Scheme>,
    pub seed: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LinkSection {
    pub qam_order: usize,
    pub snr_db_list: Vec<f64>,
    pub n_slots: usize,
    pub estimators: Vec<LinkEstimator>,
    pub profile: String,
    pub seed: u64,
    pub ldpc_max_iters: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PathsSection {
    pub workdir: PathBuf,
}

/// Everything an experiment run depends on. All sections are required in
/// the TOML file; fields of the nested `predictor`, `hyper` and `spec`
/// tables fall back to their defaults.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub dataset: DatasetSection,
    pub ddpm: DdpmSection,
    pub srcnn: SrcnnSection,
    pub eval: EvalSection,
    pub link: LinkSection,
    pub paths: PathsSection,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self::paper()
    }
}

impl ExperimentConfig {
    /// Full-scale settings: 3000 field samples, 1000-step linear schedule,
    /// 1000 DDPM epochs and 500 SRCNN epochs at batch 256.
    pub fn paper() -> Self {
        Self {
            dataset: DatasetSection {
                profile: "A".into(),
                n_subcarriers: 48,
                n_symbols: 14,
                pilot_symbols: vec![2, 11],
                pilot_seed: 7,
                mixture: SnrMixture::cellular_default().components,
                n_samples: 3000,
                seed: 1,
            },
            ddpm: DdpmSection {
                t_n: 1000,
                abar_start: 0.9999,
                abar_end: 0.0001,
                knots: Vec::new(),
                predictor: NoisePredictorSpec::default(),
                hyper: DdpmHyper::default(),
            },
            srcnn: SrcnnSection {
                spec: SrcnnSpec::default(),
                hyper: SrcnnHyper::default(),
                n_generated: 2500,
                n_field: 500,
            },
            eval: EvalSection {
                snr_db_list: vec![-5.0, 0.0, 5.0, 10.0, 15.0],
                profiles: vec!["A".into(), "B".into(), "C".into()],
                n_eval_samples: 1000,
                schemes: Scheme::ALL.to_vec(),
                seed: 11,
            },
            link: LinkSection {
                qam_order: 64,
                snr_db_list: vec![5.0, 10.0, 15.0, 20.0],
                n_slots: 500,
                estimators: LinkEstimator::ALL.to_vec(),
                profile: "A".into(),
                seed: 21,
                ldpc_max_iters: 25,
            },
            paths: PathsSection { workdir: "work".into() },
        }
    }

    /// Settings that run end to end on one CPU core in about an hour: 1500
    /// field samples, a 100-step schedule with knots placing the three field
    /// SNRs at steps 3, 16 and 48, and short training runs.
    pub fn desk() -> Self {
        let mut c = Self::paper();
        c.dataset.n_samples = 1500;
        c.ddpm.t_n = 100;
        c.ddpm.knots = vec![Knot { step: 50, abar: 0.2 }, Knot { step: 80, abar: 0.02 }];
        c.ddpm.hyper = DdpmHyper {
            lr: 2e-3,
            epochs: 64,
            batch: 32,
            ..DdpmHyper::default()
        };
        c.srcnn.spec = SrcnnSpec::desk();
        c.srcnn.n_generated = 1000;
        c.srcnn.hyper = SrcnnHyper {
            lr: 1e-3,
            epochs: 20,
            batch: 32,
            ..SrcnnHyper::default()
        };
        c.eval.n_eval_samples = 200;
        c.link.n_slots = 864;
        c
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let cfg: Self = toml::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    /// Replaces every seed with one derived from `seed`.
    pub fn with_seed(mut self, seed: u64) -> Self {
        self.dataset.seed = tagged_seed(seed, "dataset", 0);
        self.ddpm.hyper.seed = tagged_seed(seed, "ddpm", 0);
        self.srcnn.hyper.seed = tagged_seed(seed, "srcnn", 0);
        self.eval.seed = tagged_seed(seed, "eval", 0);
        self.link.seed = tagged_seed(seed, "link", 0);
        self
    }

    pub fn validate(&self) -> Result<()> {
        self.profile()?;
        self.mixture()?;
        self.pattern()?;
        self.schedule()?;
        self.ddpm.predictor.validate()?;
        self.ddpm.hyper.validate()?;
        self.srcnn.spec.validate()?;
        self.srcnn.hyper.validate()?;
        if self.ddpm.hyper.crop_fraction > 0.0 && self.ddpm.hyper.crop_symbols != self.dataset.pilot_symbols {
            return Err(Error::Config(format!(
                "ddpm.hyper.crop_symbols {:?} must equal dataset.pilot_symbols {:?}",
                self.ddpm.hyper.crop_symbols, self.dataset.pilot_symbols
            )));
        }
        if self.dataset.n_samples == 0 {
            return Err(Error::Config("dataset.n_samples must be at least 1".into()));
        }
        if self.srcnn.n_field > self.dataset.n_samples {
            return Err(Error::Config(format!(
                "srcnn.n_field = {} exceeds dataset.n_samples = {}",
                self.srcnn.n_field, self.dataset.n_samples
            )));
        }
        if self.srcnn.n_field + self.srcnn.n_generated == 0 {
            return Err(Error::Config("srcnn needs n_field + n_generated > 0".into()));
        }
        for p in &self.eval.profiles {
            TdlProfile::builtin(p)?;
        }
        if self.eval.snr_db_list.iter().any(|s| !s.is_finite()) || self.eval.n_eval_samples == 0 {
            return Err(Error::Config("eval needs finite SNRs and n_eval_samples > 0".into()));
        }
        self.link_config()?.validate()
    }

    pub fn dims(&self) -> Result<GridDims> {
        GridDims::new(self.dataset.n_subcarriers, self.dataset.n_symbols)
    }

    pub fn profile(&self) -> Result<TdlProfile> {
        TdlProfile::builtin(&self.dataset.profile)
    }

    pub fn mixture(&self) -> Result<SnrMixture> {
        let m = SnrMixture {
            components: self.dataset.mixture.clone(),
        };
        m.validate()?;
        Ok(m)
    }

    /// The sparse pilot pattern of ordinary slots.
    pub fn pattern(&self) -> Result<PilotPattern> {
        make_pilot_pattern(self.dims()?, &self.dataset.pilot_symbols, self.dataset.pilot_seed)
    }

    /// The full-grid sounding pattern used by the field campaign.
    pub fn campaign_pattern(&self) -> Result<PilotPattern> {
        let dims = self.dims()?;
        let all: Vec<usize> = (0..dims.n_symbols).collect();
        make_pilot_pattern(dims, &all, tagged_seed(self.dataset.pilot_seed, "campaign", 0))
    }

    pub fn schedule(&self) -> Result<NoiseSchedule> {
        NoiseSchedule::build(self.ddpm.abar_start, self.ddpm.abar_end, self.ddpm.t_n, &self.ddpm.knots)
    }

    pub fn link_config(&self) -> Result<LinkConfig> {
        Ok(LinkConfig {
            qam_order: self.link.qam_order,
            snr_db_list: self.link.snr_db_list.clone(),
            n_slots: self.link.n_slots,
            estimators: self.link.estimators.clone(),
            profile: TdlProfile::builtin(&self.link.profile)?,
            seed: self.link.seed,
            ldpc_max_iters: self.link.ldpc_max_iters,
        })
    }

    /// Hash of the settings a DDPM checkpoint trained with `mode` depends on.
    pub fn ddpm_hash(&self, mode: ForwardMode) -> String {
        hash_of(&(&self.dataset, &self.ddpm, mode))
    }

    /// Hash of the settings an SRCNN checkpoint for `scheme` depends on.
    pub fn srcnn_hash(&self, scheme: Scheme) -> String {
        hash_of(&(&self.dataset, &self.ddpm, &self.srcnn, scheme))
    }
}

/// Hex SHA-256 of the value's JSON serialization.
pub fn hash_of<T: Serialize>(value: &T) -> String {
    let json = serde_json::to_vec(value).expect("config sections serialize");
    Sha256::digest(&json).iter().map(|b| format!("{b:02x}")).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets_validate_and_round_trip() {
        for cfg in [ExperimentConfig::paper(), ExperimentConfig::desk()] {
            cfg.validate().unwrap();
            let text = cfg.to_toml().unwrap();
            let back: ExperimentConfig = toml::from_str(&text).unwrap();
            assert_eq!(back, cfg);
        }
    }

    #[test]
    fn desk_schedule_places_field_snrs() {
        let cfg = ExperimentConfig::desk();
        let s = cfg.schedule().unwrap();
        let steps: Vec<usize> = [15.0, 5.0, -5.0].iter().map(|&x| s.snr_to_step(x)).collect();
        assert_eq!(steps, vec![3, 16, 48]);
    }

    #[test]
    fn missing_section_is_rejected() {
        let text = ExperimentConfig::desk().to_toml().unwrap();
        let cut = text.split("[link]").next().unwrap();
        assert!(toml::from_str::<ExperimentConfig>(cut).is_err());
    }

    #[test]
    fn hashes_track_relevant_sections() {
        let a = ExperimentConfig::desk();
        let mut b = a.clone();
        b.eval.n_eval_samples += 1;
        let p = ForwardMode::Piecewise;
        assert_eq!(a.ddpm_hash(p), b.ddpm_hash(p));
        assert_ne!(a.ddpm_hash(p), a.ddpm_hash(ForwardMode::Traditional));
        b.ddpm.hyper.epochs += 1;
        assert_ne!(a.ddpm_hash(p), b.ddpm_hash(p));
        assert_ne!(a.srcnn_hash(Scheme::Adt), a.srcnn_hash(Scheme::Ad));
    }

    #[test]
    fn seed_override_changes_every_seed() {
        let a = ExperimentConfig::desk();
        let b = a.clone().with_seed(99);
        assert_ne!(a.dataset.seed, b.dataset.seed);
        assert_ne!(a.ddpm.hyper.seed, b.ddpm.hyper.seed);
        assert_ne!(a.link.seed, b.link.seed);
        assert_eq!(b, a.with_seed(99));
    }
}
