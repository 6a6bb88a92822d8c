use std::sync::atomic::{AtomicU64, Ordering};

use num_complex::Complex64;

use super::checkpoint::DiffusionCheckpoint;
use super::predictor::NoisePredictor;
use super::schedule::NoiseSchedule;
use crate::error::{Error, Result};
use crate::grid::{ChannelGrid, GridDims, NoisySample, Provenance};
use crate::nn::{Module, Tensor};
use crate::rng::{complex_normal, normal, rng_from, tagged_seed, SimRng};

/// Forwards `h_s` from step s to step t > s:
/// sqrt(abar_t/abar_s) h_s + sqrt(1 - abar_t/abar_s) eps. Step 0 is the
/// clean grid. Returns the noised grid and the drawn eps.
pub fn forward_sample(
    h_s: &ChannelGrid,
    s: usize,
    t: usize,
    schedule: &NoiseSchedule,
    rng_seed: u64,
) -> Result<(ChannelGrid, ChannelGrid)> {
    if t <= s || t > schedule.t_n() {
        return Err(Error::invalid(format!(
            "forward needs s < t <= {}, got s={s} t={t}",
            schedule.t_n()
        )));
    }
    let r = schedule.abar(t) / schedule.abar(s);
    let (a, b) = (r.sqrt(), (1.0 - r).sqrt());
    let mut rng = rng_from(rng_seed);
    let eps = ChannelGrid::from_fn(h_s.dims(), |_, _| complex_normal(&mut rng));
    let out = ChannelGrid::from_values(
        h_s.dims(),
        h_s.values().iter().zip(eps.values()).map(|(h, e)| h * a + e * b).collect(),
    )?;
    Ok((out, eps))
}

/// Coefficients (on H0_hat, on h_t) of the posterior mean at step t.
pub fn posterior_coefficients(t: usize, schedule: &NoiseSchedule) -> (f64, f64) {
    let ab = schedule.abar(t);
    let ab_prev = schedule.abar(t - 1);
    let a = schedule.alpha(t);
    (ab_prev.sqrt() * (1.0 - a) / (1.0 - ab), a.sqrt() * (1.0 - ab_prev) / (1.0 - ab))
}

/// H0_hat = (h_t - sqrt(1 - abar_t) eps_hat) / sqrt(abar_t).
pub fn h0_from_eps(h_t: Complex64, eps_hat: Complex64, t: usize, schedule: &NoiseSchedule) -> Complex64 {
    let ab = schedule.abar(t);
    (h_t - eps_hat * (1.0 - ab).sqrt()) / ab.sqrt()
}

/// Posterior mean through the H0_hat form.
pub fn posterior_mean(h_t: Complex64, eps_hat: Complex64, t: usize, schedule: &NoiseSchedule) -> Complex64 {
    let (c0, ct) = posterior_coefficients(t, schedule);
    h0_from_eps(h_t, eps_hat, t, schedule) * c0 + h_t * ct
}

/// Posterior mean in the direct form (h_t - (1 - alpha_t)/sqrt(1 - abar_t) eps_hat) / sqrt(alpha_t).
pub fn posterior_mean_direct(h_t: Complex64, eps_hat: Complex64, t: usize, schedule: &NoiseSchedule) -> Complex64 {
    let a = schedule.alpha(t);
    let ab = schedule.abar(t);
    (h_t - eps_hat * ((1.0 - a) / (1.0 - ab).sqrt())) / a.sqrt()
}

/// Reads the network output as a velocity: eps = sqrt(1 - abar) h + sqrt(abar) v.
#[inline]
pub fn eps_from_velocity(h_t: f64, v: f64, abar: f64) -> f64 {
    (1.0 - abar).sqrt() * h_t + abar.sqrt() * v
}

/// One reverse transition given a noise prediction, independent of where
/// the prediction came from.
pub fn reverse_step_with(
    h_t: &ChannelGrid,
    eps_hat: &ChannelGrid,
    t: usize,
    schedule: &NoiseSchedule,
    rng_seed: u64,
) -> Result<ChannelGrid> {
    if t == 0 || t > schedule.t_n() {
        return Err(Error::invalid(format!("step {t} outside [1, {}]", schedule.t_n())));
    }
    if h_t.dims() != eps_hat.dims() {
        return Err(Error::shape(h_t.dims(), eps_hat.dims()));
    }
    let sd = schedule.sigma2(t).sqrt();
    let mut rng = rng_from(rng_seed);
    let values = h_t
        .values()
        .iter()
        .zip(eps_hat.values())
        .map(|(&h, &e)| {
            let mu = posterior_mean(h, e, t, schedule);
            if t > 1 {
                mu + complex_normal(&mut rng) * sd
            } else {
                mu
            }
        })
        .collect();
    ChannelGrid::from_values(h_t.dims(), values)
}

/// A checkpoint instantiated for inference.
#[derive(Debug)]
pub struct DiffusionModel {
    net: NoisePredictor,
    schedule: NoiseSchedule,
    grid_dims: GridDims,
    reverse_steps: AtomicU64,
}

/// Samples per network call during batched reverse runs.
const INFER_BATCH: usize = 16;

impl DiffusionModel {
    pub fn from_checkpoint(ckpt: &DiffusionCheckpoint) -> Result<Self> {
        let mut net = NoisePredictor::new(&ckpt.spec, ckpt.schedule.t_n(), 0)?;
        net.import_params(&ckpt.params)?;
        Ok(Self {
            net,
            schedule: ckpt.schedule.clone(),
            grid_dims: ckpt.grid_dims,
            reverse_steps: AtomicU64::new(0),
        })
    }

    pub fn schedule(&self) -> &NoiseSchedule {
        &self.schedule
    }

    /// Total per-sample reverse steps executed by this instance.
    pub fn reverse_steps_executed(&self) -> u64 {
        self.reverse_steps.load(Ordering::Relaxed)
    }

    /// Predicted eps for a batch of states at step t.
    pub fn predict_eps(&self, states: &[ChannelGrid], t: usize) -> Result<Vec<ChannelGrid>> {
        let mut x: Vec<f64> = Vec::new();
        let dims = states.first().ok_or_else(|| Error::invalid("empty batch"))?.dims();
        for g in states {
            if g.dims() != dims {
                return Err(Error::shape(dims, g.dims()));
            }
            x.extend(g.values().iter().flat_map(|v| [v.re, v.im]));
        }
        let eps = self.eps_planes(&x, states.len(), dims, t)?;
        eps.chunks_exact(dims.len() * 2)
            .map(|c| {
                ChannelGrid::from_values(dims, c.chunks_exact(2).map(|p| Complex64::new(p[0], p[1])).collect())
            })
            .collect()
    }

    fn eps_planes(&self, x: &[f64], n: usize, dims: GridDims, t: usize) -> Result<Vec<f64>> {
        let input = Tensor::from_vec(
            n,
            dims.n_subcarriers,
            dims.n_symbols,
            2,
            x.iter().map(|&v| v as f32).collect(),
        )?;
        let v = self.net.forward(&input, &vec![t; n])?;
        let ab = self.schedule.abar(t);
        Ok(x.iter().zip(&v.data).map(|(&h, &v)| eps_from_velocity(h, v as f64, ab)).collect())
    }

    /// One learned reverse transition from step t.
    pub fn reverse_step(&self, h_t: &ChannelGrid, t: usize, rng_seed: u64) -> Result<ChannelGrid> {
        let eps = self.predict_eps(std::slice::from_ref(h_t), t)?.remove(0);
        self.reverse_steps.fetch_add(1, Ordering::Relaxed);
        reverse_step_with(h_t, &eps, t, &self.schedule, rng_seed)
    }

    /// Runs the reverse chain from `t_start` to 0 for equally sized grids.
    /// Sample i draws its noise from its own stream, so results do not
    /// depend on batching.
    fn reverse_chain(&self, states: Vec<ChannelGrid>, t_start: usize, rng_seed: u64) -> Result<Vec<ChannelGrid>> {
        let Some(first) = states.first() else {
            return Ok(Vec::new());
        };
        let dims = first.dims();
        let per = dims.len() * 2;
        let mut out = Vec::with_capacity(states.len());
        for (b, chunk) in states.chunks(INFER_BATCH).enumerate() {
            let mut x: Vec<f64> = Vec::with_capacity(chunk.len() * per);
            for g in chunk {
                if g.dims() != dims {
                    return Err(Error::shape(dims, g.dims()));
                }
                x.extend(g.values().iter().flat_map(|v| [v.re, v.im]));
            }
            let mut rngs: Vec<SimRng> = (0..chunk.len())
                .map(|i| rng_from(tagged_seed(rng_seed, "reverse", (b * INFER_BATCH + i) as u64)))
                .collect();
            for t in (1..=t_start).rev() {
                let eps = self.eps_planes(&x, chunk.len(), dims, t)?;
                let (c0, ct) = posterior_coefficients(t, &self.schedule);
                let ab = self.schedule.abar(t);
                let (sa, sn) = (ab.sqrt(), (1.0 - ab).sqrt());
                let sd = (self.schedule.sigma2(t) * 0.5).sqrt();
                for (i, rng) in rngs.iter_mut().enumerate() {
                    for j in i * per..(i + 1) * per {
                        let h0 = (x[j] - sn * eps[j]) / sa;
                        x[j] = if t > 1 {
                            c0 * h0 + ct * x[j] + sd * normal(rng)
                        } else {
                            h0
                        };
                    }
                }
                self.reverse_steps.fetch_add(chunk.len() as u64, Ordering::Relaxed);
            }
            for c in x.chunks_exact(per) {
                out.push(ChannelGrid::from_values(
                    dims,
                    c.chunks_exact(2).map(|p| Complex64::new(p[0], p[1])).collect(),
                )?);
            }
        }
        Ok(out)
    }

    /// Denoises a normalized LS estimate by entering the chain at the step
    /// matching its SNR and reversing to 0. Inputs whose step clamps to 1
    /// are returned unchanged.
    pub fn denoise(&self, sample: &NoisySample, rng_seed: u64) -> Result<NoisySample> {
        Ok(self.denoise_batch(std::slice::from_ref(sample), rng_seed)?.remove(0))
    }

    /// Denoises many samples; samples sharing an SNR and shape are batched.
    pub fn denoise_batch(&self, samples: &[NoisySample], rng_seed: u64) -> Result<Vec<NoisySample>> {
        let mut out: Vec<Option<NoisySample>> = vec![None; samples.len()];
        let mut groups: Vec<(usize, GridDims, Vec<usize>)> = Vec::new();
        for (i, s) in samples.iter().enumerate() {
            if s.provenance() != Provenance::Field {
                return Err(Error::invalid(format!(
                    "denoise expects field samples, got provenance `{}`",
                    s.provenance()
                )));
            }
            let t = self.schedule.snr_to_step(s.snr_db);
            match groups.iter_mut().find(|(gt, gd, _)| *gt == t && *gd == s.grid.dims()) {
                Some((_, _, idx)) => idx.push(i),
                None => groups.push((t, s.grid.dims(), vec![i])),
            }
        }
        for (t, _, idx) in groups {
            let grids: Vec<ChannelGrid> = idx.iter().map(|&i| samples[i].grid.clone()).collect();
            let res = if t <= 1 {
                grids
            } else {
                // Tag the stream with the first index so equal groups differ.
                self.reverse_chain(grids, t, tagged_seed(rng_seed, "denoise", idx[0] as u64))?
            };
            for (&i, g) in idx.iter().zip(res) {
                let s = &samples[i];
                out[i] = Some(NoisySample::new(g, s.snr_db, Provenance::Denoised, s.pilots_only)?);
            }
        }
        Ok(out.into_iter().map(|s| s.expect("every sample assigned")).collect())
    }

    /// Draws `n` grids by reversing the full chain from pure noise.
    pub fn generate(&self, n: usize, rng_seed: u64) -> Result<Vec<NoisySample>> {
        let dims = self.grid_dims;
        let start: Vec<ChannelGrid> = (0..n)
            .map(|i| {
                let mut rng = rng_from(tagged_seed(rng_seed, "prior", i as u64));
                ChannelGrid::from_fn(dims, |_, _| complex_normal(&mut rng))
            })
            .collect();
        let grids = self.reverse_chain(start, self.schedule.t_n(), tagged_seed(rng_seed, "generate", 0))?;
        grids
            .into_iter()
            .map(|g| NoisySample::new(g, f64::INFINITY, Provenance::Generated, false))
            .collect()
    }
}

/// One learned reverse step from a checkpoint.
pub fn reverse_step(h_t: &ChannelGrid, t: usize, ckpt: &DiffusionCheckpoint, rng_seed: u64) -> Result<ChannelGrid> {
    DiffusionModel::from_checkpoint(ckpt)?.reverse_step(h_t, t, rng_seed)
}

pub fn denoise(sample: &NoisySample, ckpt: &DiffusionCheckpoint, rng_seed: u64) -> Result<NoisySample> {
    DiffusionModel::from_checkpoint(ckpt)?.denoise(sample, rng_seed)
}

pub fn generate(n: usize, ckpt: &DiffusionCheckpoint, rng_seed: u64) -> Result<Vec<NoisySample>> {
    DiffusionModel::from_checkpoint(ckpt)?.generate(n, rng_seed)
}
