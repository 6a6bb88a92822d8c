use std::time::Instant;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::checkpoint::DiffusionCheckpoint;
use super::pieces::{ForwardMode, ForwardSampler, PieceMap};
use super::predictor::{NoisePredictor, NoisePredictorSpec, PredictorCache};
use super::schedule::NoiseSchedule;
use crate::error::{Error, Result};
use crate::grid::{GridDims, NoisySample, Provenance};
use crate::nn::{Adam, Module, Tensor};
use crate::rng::{normal, rng_from, tagged_seed};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DdpmHyper {
    pub lr: f64,
    pub epochs: usize,
    pub batch: usize,
    pub seed: u64,
    pub forward_mode: ForwardMode,
    /// Fraction of minibatches cut down to `crop_symbols`, so the same
    /// network also sees pilot-only grids.
    pub crop_fraction: f64,
    pub crop_symbols: Vec<usize>,
    /// Loss weight is 1 / (abar_t + loss_floor): errors at noisy steps are
    /// amplified by 1/sqrt(abar_t) in the clean-grid estimate.
    pub loss_floor: f64,
    /// Cosine learning-rate decay to zero over the run.
    pub cosine_decay: bool,
}

impl Default for DdpmHyper {
    fn default() -> Self {
        Self {
            lr: 5e-4,
            epochs: 1000,
            batch: 256,
            seed: 0,
            forward_mode: ForwardMode::Piecewise,
            crop_fraction: 0.25,
            crop_symbols: vec![2, 11],
            loss_floor: 0.01,
            cosine_decay: true,
        }
    }
}

impl DdpmHyper {
    pub fn validate(&self) -> Result<()> {
        if !(self.lr > 0.0 && self.lr.is_finite()) || self.epochs == 0 || self.batch == 0 {
            return Err(Error::invalid("ddpm lr, epochs and batch must be positive"));
        }
        if !(0.0..=1.0).contains(&self.crop_fraction) || !(self.loss_floor > 0.0) {
            return Err(Error::invalid("crop_fraction must be in [0, 1] and loss_floor positive"));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainingMeta {
    pub epochs: usize,
    pub lr: f64,
    pub batch: usize,
    pub seed: u64,
    pub iterations: usize,
    pub n_samples: usize,
    pub forward_mode: ForwardMode,
    /// Mean minibatch loss per epoch.
    pub loss_curve: Vec<f64>,
    pub wall_time_s: f64,
}

/// Trains the noise predictor on field samples with piecewise (or
/// traditional) forwarding.
///
/// Each draw takes a sample of group k, which sits at step s = entry(k),
/// picks t uniformly in the group's range and forwards s -> t. The target is
/// the incremental noise; since the net's eps estimate describes the total
/// noise since step 0, it is rescaled by sqrt(1 - abar_t/abar_s) /
/// sqrt(1 - abar_t) before comparison.
pub fn train_ddpm(
    samples: &[NoisySample],
    spec: &NoisePredictorSpec,
    schedule: &NoiseSchedule,
    pieces: &PieceMap,
    hyper: &DdpmHyper,
) -> Result<DiffusionCheckpoint> {
    train_ddpm_observed(samples, spec, schedule, pieces, hyper, |_, _| {})
}

/// As [`train_ddpm`], calling `on_epoch(epoch, mean_loss)` after each epoch.
pub fn train_ddpm_observed(
    samples: &[NoisySample],
    spec: &NoisePredictorSpec,
    schedule: &NoiseSchedule,
    pieces: &PieceMap,
    hyper: &DdpmHyper,
    mut on_epoch: impl FnMut(usize, f64),
) -> Result<DiffusionCheckpoint> {
    hyper.validate()?;
    spec.validate()?;
    pieces.validate()?;
    if pieces.t_n() != schedule.t_n() {
        return Err(Error::invalid("piece map was built for a different schedule"));
    }
    let first = samples.first().ok_or_else(|| Error::invalid("training set is empty"))?;
    let dims = first.grid.dims();
    for s in samples {
        if s.provenance() != Provenance::Field {
            return Err(Error::invalid(format!(
                "DDPM trains on field samples only, found provenance `{}`",
                s.provenance()
            )));
        }
        if s.grid.dims() != dims {
            return Err(Error::shape(dims, s.grid.dims()));
        }
    }
    for g in pieces.groups() {
        if schedule.snr_to_step(g.snr_db) != g.entry_step {
            return Err(Error::invalid(format!(
                "piece for {} dB enters at {} but the schedule maps it to {}",
                g.snr_db,
                g.entry_step,
                schedule.snr_to_step(g.snr_db)
            )));
        }
    }
    let snrs: Vec<f64> = samples.iter().map(|s| s.snr_db).collect();
    let mut sampler = ForwardSampler::new(pieces, hyper.forward_mode, &snrs)?;

    let can_crop = hyper.crop_fraction > 0.0
        && !hyper.crop_symbols.is_empty()
        && hyper.crop_symbols.len() < dims.n_symbols
        && hyper.crop_symbols.iter().all(|&c| c < dims.n_symbols);
    let planes: Vec<Vec<f32>> = samples
        .iter()
        .map(|s| s.grid.values().iter().flat_map(|v| [v.re as f32, v.im as f32]).collect())
        .collect();

    let mut net = NoisePredictor::new(spec, schedule.t_n(), tagged_seed(hyper.seed, "ddpm-init", 0))?;
    let mut opt = Adam::new(hyper.lr as f32);
    let mut rng = rng_from(tagged_seed(hyper.seed, "ddpm-train", 0));
    let iters_per_epoch = samples.len().div_ceil(hyper.batch);
    let total = iters_per_epoch * hyper.epochs;
    let mut cache = PredictorCache::default();
    let mut loss_curve = Vec::with_capacity(hyper.epochs);
    let started = Instant::now();
    let mut it = 0;

    for epoch in 0..hyper.epochs {
        let mut epoch_loss = 0.0;
        for _ in 0..iters_per_epoch {
            let crop = can_crop && rng.gen::<f64>() < hyper.crop_fraction;
            let bd = if crop {
                GridDims::new(dims.n_subcarriers, hyper.crop_symbols.len())?
            } else {
                dims
            };
            let per = bd.len() * 2;
            let n = hyper.batch;
            let mut x = Vec::with_capacity(n * per);
            let mut eps = Vec::with_capacity(n * per);
            let mut steps = Vec::with_capacity(n);
            let mut coef = Vec::with_capacity(n);
            for _ in 0..n {
                let d = sampler.draw(&mut rng);
                let src = &planes[d.sample];
                let r = schedule.abar(d.t) / schedule.abar(d.s);
                let (a, b) = (r.sqrt() as f32, (1.0 - r).sqrt() as f32);
                let mut push = |v: f32| {
                    let e = normal(&mut rng) as f32 * std::f32::consts::FRAC_1_SQRT_2;
                    x.push(a * v + b * e);
                    eps.push(e);
                };
                if crop {
                    for sc in 0..dims.n_subcarriers {
                        for &k in &hyper.crop_symbols {
                            let o = (sc * dims.n_symbols + k) * 2;
                            push(src[o]);
                            push(src[o + 1]);
                        }
                    }
                } else {
                    src.iter().for_each(|&v| push(v));
                }
                let ab = schedule.abar(d.t);
                let sigma = (1.0 - ab).sqrt();
                steps.push(d.t);
                // (sigma_t, sqrt(abar_t), incremental rescale c, weight w)
                coef.push((sigma, ab.sqrt(), (1.0 - r).sqrt() / sigma, 1.0 / (ab + hyper.loss_floor)));
            }
            let input = Tensor::from_vec(n, bd.n_subcarriers, bd.n_symbols, 2, x)?;
            let v = net.forward_train(&input, &steps, &mut cache)?;
            // loss = 2/N * sum_i w (c eps_hat - eps)^2, eps_hat = sigma h + sqrt(abar) v;
            // the factor 2 turns per-plane into per-complex-element error.
            let norm = 2.0 / (n * per) as f64;
            let mut loss = 0.0f64;
            let mut dv = vec![0.0f32; v.data.len()];
            for i in 0..n {
                let (sigma, sab, c, w) = coef[i];
                for j in i * per..(i + 1) * per {
                    let eh = sigma * input.data[j] as f64 + sab * v.data[j] as f64;
                    let r = c * eh - eps[j] as f64;
                    loss += w * r * r;
                    dv[j] = (norm * 2.0 * w * r * c * sab) as f32;
                }
            }
            loss *= norm;
            if !loss.is_finite() {
                return Err(Error::Numerical(format!("DDPM loss diverged at iteration {it}")));
            }
            epoch_loss += loss;
            net.zero_grad();
            net.backward(&cache, &Tensor { data: dv, ..v });
            if hyper.cosine_decay {
                let f = 0.5 * (1.0 + (std::f64::consts::PI * it as f64 / total as f64).cos());
                opt.lr = (hyper.lr * f) as f32;
            }
            opt.step(&mut net);
            it += 1;
        }
        let mean = epoch_loss / iters_per_epoch as f64;
        loss_curve.push(mean);
        on_epoch(epoch, mean);
    }

    Ok(DiffusionCheckpoint {
        spec: spec.clone(),
        params: net.export_params(),
        schedule: schedule.clone(),
        pieces: pieces.clone(),
        grid_dims: dims,
        meta: TrainingMeta {
            epochs: hyper.epochs,
            lr: hyper.lr,
            batch: hyper.batch,
            seed: hyper.seed,
            iterations: total,
            n_samples: samples.len(),
            forward_mode: hyper.forward_mode,
            loss_curve,
            wall_time_s: started.elapsed().as_secs_f64(),
        },
        config_hash: None,
    })
}
