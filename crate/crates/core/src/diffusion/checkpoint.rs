use std::path::Path;

use serde::{Deserialize, Serialize};

use super::pieces::PieceMap;
use super::predictor::{NoisePredictor, NoisePredictorSpec};
use super::schedule::NoiseSchedule;
use super::train::TrainingMeta;
use crate::dataset_io::{read_json, write_json};
use crate::error::{Error, Result};
use crate::grid::GridDims;
use crate::nn::{decode_params, encode_params, Module};

const FORMAT: &str = "csi-ddpm/diffusion-checkpoint";
const VERSION: u32 = 1;

/// Trained predictor plus the schedule and pieces it was trained with.
#[derive(Clone, Debug, PartialEq)]
pub struct DiffusionCheckpoint {
    pub spec: NoisePredictorSpec,
    pub params: Vec<f32>,
    pub schedule: NoiseSchedule,
    pub pieces: PieceMap,
    /// Shape of the training grids, used for generation.
    pub grid_dims: GridDims,
    pub meta: TrainingMeta,
    /// Hash of the config section that produced this checkpoint.
    pub config_hash: Option<String>,
}

#[derive(Serialize, Deserialize)]
struct OnDisk {
    format: String,
    version: u32,
    spec: NoisePredictorSpec,
    schedule: NoiseSchedule,
    pieces: PieceMap,
    grid_dims: GridDims,
    training_meta: TrainingMeta,
    config_hash: Option<String>,
    param_count: usize,
    params: String,
}

impl DiffusionCheckpoint {
    pub fn validate(&self) -> Result<()> {
        self.spec.validate()?;
        self.schedule.validate()?;
        self.pieces.validate()?;
        if self.pieces.t_n() != self.schedule.t_n() {
            return Err(Error::invalid("piece map and schedule disagree on T_n"));
        }
        let want = NoisePredictor::new(&self.spec, self.schedule.t_n(), 0)?.param_count();
        if want != self.params.len() {
            return Err(Error::shape(format!("{want} parameters"), self.params.len()));
        }
        if self.params.iter().any(|p| !p.is_finite()) {
            return Err(Error::Numerical("checkpoint parameters contain NaN or Inf".into()));
        }
        Ok(())
    }

    /// Refuses a schedule different from the one the predictor was trained on.
    pub fn ensure_schedule(&self, schedule: &NoiseSchedule) -> Result<()> {
        if *schedule != self.schedule {
            return Err(Error::Stale {
                path: "<diffusion checkpoint>".into(),
                reason: format!(
                    "checkpoint was trained with T_n = {} and {} knots; the requested schedule differs",
                    self.schedule.t_n(),
                    self.schedule.knots().len()
                ),
            });
        }
        Ok(())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        self.validate()?;
        write_json(
            path,
            &OnDisk {
                format: FORMAT.into(),
                version: VERSION,
                spec: self.spec.clone(),
                schedule: self.schedule.clone(),
                pieces: self.pieces.clone(),
                grid_dims: self.grid_dims,
                training_meta: self.meta.clone(),
                config_hash: self.config_hash.clone(),
                param_count: self.params.len(),
                params: encode_params(&self.params),
            },
        )
    }

    pub fn load(path: &Path) -> Result<Self> {
        let d: OnDisk = read_json(path)?;
        if d.format != FORMAT || d.version != VERSION {
            return Err(Error::format(
                path,
                format!("expected {FORMAT} v{VERSION}, found {} v{}", d.format, d.version),
            ));
        }
        let params = decode_params(&d.params).map_err(|e| Error::format(path, e.to_string()))?;
        if params.len() != d.param_count {
            return Err(Error::format(
                path,
                format!("param_count says {} but blob holds {}", d.param_count, params.len()),
            ));
        }
        let ck = Self {
            spec: d.spec,
            params,
            schedule: d.schedule,
            pieces: d.pieces,
            grid_dims: d.grid_dims,
            meta: d.training_meta,
            config_hash: d.config_hash,
        };
        ck.validate().map_err(|e| Error::format(path, e.to_string()))?;
        Ok(ck)
    }
}
