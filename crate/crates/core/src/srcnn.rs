//! Pilot-to-full-grid interpolation with a small super-resolution CNN.
//!
//! The low-resolution image is the channel at the pilot symbol columns. It
//! is first upsampled along time by linear interpolation, then refined by a
//! three-stage conv network (patch extraction, nonlinear mapping,
//! reconstruction) operating on the real and imaginary planes.

use std::path::Path;
use std::time::Instant;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::dataset_io::{read_json, write_json};
use crate::diffusion::{grids_to_tensor, tensor_to_grids};
use crate::error::{Error, Result};
use crate::estimators::interpolate_time_linear;
use crate::grid::{ChannelGrid, GridDims, PilotPattern, Provenance};
use crate::nn::{decode_params, encode_params, relu, relu_backward, Adam, Conv2d, ConvCache, Module, Tensor};
use crate::rng::{rng_from, tagged_seed};

const FORMAT: &str = "csi-ddpm/srcnn-checkpoint";
const VERSION: u32 = 1;
const INFER_BATCH: usize = 16;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct SrcnnSpec {
    /// Output channels of every layer except the last, which emits 2 planes.
    pub layer_channels: Vec<usize>,
    /// Square kernel size per layer; one more entry than `layer_channels`.
    pub kernel_sizes: Vec<usize>,
}

impl Default for SrcnnSpec {
    fn default() -> Self {
        Self {
            layer_channels: vec![64, 32],
            kernel_sizes: vec![9, 1, 5],
        }
    }
}

impl SrcnnSpec {
    /// Half-width layers; enough for 48x14 grids and about 2x cheaper.
    pub fn desk() -> Self {
        Self {
            layer_channels: vec![32, 16],
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.kernel_sizes.len() != self.layer_channels.len() + 1 {
            return Err(Error::invalid(format!(
                "srcnn needs {} kernel sizes for {} hidden layers, got {}",
                self.layer_channels.len() + 1,
                self.layer_channels.len(),
                self.kernel_sizes.len()
            )));
        }
        if self.layer_channels.contains(&0) {
            return Err(Error::invalid("srcnn layer channels must be positive"));
        }
        if self.kernel_sizes.iter().any(|&k| k % 2 == 0) {
            return Err(Error::invalid("srcnn kernel sizes must be odd"));
        }
        Ok(())
    }
}

/// A pilot-column image and the full grid it should be interpolated to.
#[derive(Clone, Debug, PartialEq)]
pub struct LrHrPair {
    pub lr: ChannelGrid,
    pub hr: ChannelGrid,
    pub source: Provenance,
}

impl LrHrPair {
    /// Builds a self-consistent pair by extracting the pilot columns of `hr`.
    pub fn from_hr(hr: ChannelGrid, pattern: &PilotPattern, source: Provenance) -> Result<Self> {
        let lr = extract_lr(&hr, pattern)?;
        Ok(Self { lr, hr, source })
    }

    /// True if `lr` equals `hr` at the pattern's pilot columns.
    pub fn is_consistent(&self, pattern: &PilotPattern) -> bool {
        extract_lr(&self.hr, pattern).is_ok_and(|x| x == self.lr)
    }
}

/// The pilot-position image of a full grid.
pub fn extract_lr(hr: &ChannelGrid, pattern: &PilotPattern) -> Result<ChannelGrid> {
    pattern.extract(hr)
}

/// Places `lr` back at the pilot positions of an otherwise zero grid.
pub fn embed_lr(lr: &ChannelGrid, pattern: &PilotPattern) -> Result<ChannelGrid> {
    if lr.dims() != pattern.pilot_dims() {
        return Err(Error::shape(pattern.pilot_dims(), lr.dims()));
    }
    let mut out = ChannelGrid::zeros(pattern.dims);
    for (i, &sc) in pattern.subcarrier_indices.iter().enumerate() {
        for (j, &sym) in pattern.symbol_indices.iter().enumerate() {
            out.set(sc, sym, lr.get(i, j));
        }
    }
    Ok(out)
}

/// Upsamples along time only, since pilots cover every subcarrier. A single
/// pilot column is replicated.
pub fn upsample_bilinear(lr: &ChannelGrid, target: GridDims, pilot_symbol_indices: &[usize]) -> Result<ChannelGrid> {
    interpolate_time_linear(lr, target, pilot_symbol_indices)
}

#[derive(Clone, Debug)]
struct Srcnn {
    convs: Vec<Conv2d>,
}

#[derive(Default)]
struct SrcnnCache {
    convs: Vec<ConvCache>,
    pre: Vec<Vec<f32>>,
}

impl Srcnn {
    fn new(spec: &SrcnnSpec, seed: u64) -> Result<Self> {
        spec.validate()?;
        let mut rng = rng_from(seed);
        let mut cin = 2;
        let mut convs = Vec::with_capacity(spec.kernel_sizes.len());
        for (i, &k) in spec.kernel_sizes.iter().enumerate() {
            let cout = spec.layer_channels.get(i).copied().unwrap_or(2);
            convs.push(Conv2d::new(cin, cout, (k, k), (1, 1), &mut rng)?);
            cin = cout;
        }
        Ok(Self { convs })
    }

    fn forward(&self, x: &Tensor) -> Result<Tensor> {
        let last = self.convs.len() - 1;
        let mut h = self.convs[0].forward(x)?;
        for conv in &self.convs[1..] {
            h = Tensor { data: relu(&h.data), ..h };
            h = conv.forward(&h)?;
        }
        debug_assert_eq!(h.c, self.convs[last].cout);
        Ok(h)
    }

    fn forward_train(&self, x: &Tensor, cache: &mut SrcnnCache) -> Result<Tensor> {
        let n = self.convs.len();
        cache.convs.resize_with(n, ConvCache::default);
        cache.pre.clear();
        let mut h = self.convs[0].forward_train(x, &mut cache.convs[0])?;
        for i in 1..n {
            let a = Tensor { data: relu(&h.data), ..h };
            cache.pre.push(std::mem::take(&mut h.data));
            h = self.convs[i].forward_train(&a, &mut cache.convs[i])?;
        }
        Ok(h)
    }

    fn backward(&mut self, cache: &SrcnnCache, dout: Tensor) {
        let mut dy = dout;
        for i in (0..self.convs.len()).rev() {
            let Some(dx) = self.convs[i].backward(&cache.convs[i], &dy, i > 0) else {
                break;
            };
            dy = Tensor { data: relu_backward(&cache.pre[i - 1], &dx.data), ..dx };
        }
    }
}

impl Module for Srcnn {
    fn visit_params(&mut self, f: &mut dyn FnMut(&mut [f32], &mut [f32])) {
        self.convs.iter_mut().for_each(|c| c.visit_params(f));
    }

    fn visit_params_ref(&self, f: &mut dyn FnMut(&[f32])) {
        self.convs.iter().for_each(|c| c.visit_params_ref(f));
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SrcnnHyper {
    pub lr: f64,
    pub epochs: usize,
    pub batch: usize,
    pub seed: u64,
    pub cosine_decay: bool,
    /// Pure (noise-free simulator) targets are refused unless set; only
    /// reference experiments that compare against clean training data should
    /// enable this.
    pub allow_pure_targets: bool,
}

impl Default for SrcnnHyper {
    fn default() -> Self {
        Self {
            lr: 5e-4,
            epochs: 500,
            batch: 256,
            seed: 0,
            cosine_decay: true,
            allow_pure_targets: false,
        }
    }
}

impl SrcnnHyper {
    pub fn validate(&self) -> Result<()> {
        if !(self.lr > 0.0 && self.lr.is_finite()) || self.epochs == 0 || self.batch == 0 {
            return Err(Error::invalid("srcnn lr, epochs and batch must be positive"));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SrcnnTrainingMeta {
    pub epochs: usize,
    pub lr: f64,
    pub batch: usize,
    pub seed: u64,
    pub iterations: usize,
    pub n_pairs: usize,
    /// Pair count per provenance, in first-seen order.
    pub sources: Vec<(Provenance, usize)>,
    /// Mean minibatch loss per epoch (mean squared error per real plane).
    pub loss_curve: Vec<f64>,
    pub wall_time_s: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SrcnnCheckpoint {
    pub spec: SrcnnSpec,
    pub params: Vec<f32>,
    pub pattern: PilotPattern,
    pub meta: SrcnnTrainingMeta,
    pub config_hash: Option<String>,
}

#[derive(Serialize, Deserialize)]
struct OnDisk {
    format: String,
    version: u32,
    spec: SrcnnSpec,
    pattern: PilotPattern,
    training_meta: SrcnnTrainingMeta,
    config_hash: Option<String>,
    param_count: usize,
    params: String,
}

impl SrcnnCheckpoint {
    pub fn validate(&self) -> Result<()> {
        self.pattern.validate()?;
        let want = Srcnn::new(&self.spec, 0)?.param_count();
        if want != self.params.len() {
            return Err(Error::shape(format!("{want} parameters"), self.params.len()));
        }
        if self.params.iter().any(|p| !p.is_finite()) {
            return Err(Error::Numerical("checkpoint parameters contain NaN or Inf".into()));
        }
        Ok(())
    }

    /// Refuses a pilot pattern other than the one the network was trained on.
    pub fn ensure_pattern(&self, pattern: &PilotPattern) -> Result<()> {
        if pattern.dims != self.pattern.dims || pattern.symbol_indices != self.pattern.symbol_indices {
            return Err(Error::invalid(format!(
                "srcnn checkpoint expects pilots at symbols {:?} of a {} grid, got {:?} of {}",
                self.pattern.symbol_indices, self.pattern.dims, pattern.symbol_indices, pattern.dims
            )));
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
                pattern: self.pattern.clone(),
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
            pattern: d.pattern,
            meta: d.training_meta,
            config_hash: d.config_hash,
        };
        ck.validate().map_err(|e| Error::format(path, e.to_string()))?;
        Ok(ck)
    }
}

/// Loaded network ready for inference; immutable and shareable.
#[derive(Clone, Debug)]
pub struct SrcnnModel {
    net: Srcnn,
    pattern: PilotPattern,
}

impl SrcnnModel {
    pub fn from_checkpoint(ckpt: &SrcnnCheckpoint) -> Result<Self> {
        ckpt.validate()?;
        let mut net = Srcnn::new(&ckpt.spec, 0)?;
        net.import_params(&ckpt.params)?;
        Ok(Self {
            net,
            pattern: ckpt.pattern.clone(),
        })
    }

    pub fn pattern(&self) -> &PilotPattern {
        &self.pattern
    }

    pub fn interpolate(&self, lr: &ChannelGrid) -> Result<ChannelGrid> {
        Ok(self.interpolate_batch(std::slice::from_ref(lr))?.remove(0))
    }

    pub fn interpolate_batch(&self, lrs: &[ChannelGrid]) -> Result<Vec<ChannelGrid>> {
        let mut out = Vec::with_capacity(lrs.len());
        for chunk in lrs.chunks(INFER_BATCH) {
            let up = chunk
                .iter()
                .map(|lr| {
                    if lr.dims() != self.pattern.pilot_dims() {
                        return Err(Error::shape(self.pattern.pilot_dims(), lr.dims()));
                    }
                    upsample_bilinear(lr, self.pattern.dims, &self.pattern.symbol_indices)
                })
                .collect::<Result<Vec<_>>>()?;
            let y = self.net.forward(&grids_to_tensor(&up)?)?;
            out.extend(tensor_to_grids(&y)?);
        }
        Ok(out)
    }
}

/// Upsamples `lr` and refines it with the checkpoint's network.
pub fn interpolate(lr: &ChannelGrid, ckpt: &SrcnnCheckpoint) -> Result<ChannelGrid> {
    SrcnnModel::from_checkpoint(ckpt)?.interpolate(lr)
}

/// Fits the network to map upsampled pilot images onto full grids.
pub fn train_srcnn(
    pairs: &[LrHrPair],
    pattern: &PilotPattern,
    spec: &SrcnnSpec,
    hyper: &SrcnnHyper,
) -> Result<SrcnnCheckpoint> {
    train_srcnn_observed(pairs, pattern, spec, hyper, |_, _| {})
}

/// As [`train_srcnn`], calling `on_epoch(epoch, mean_loss)` after each epoch.
pub fn train_srcnn_observed(
    pairs: &[LrHrPair],
    pattern: &PilotPattern,
    spec: &SrcnnSpec,
    hyper: &SrcnnHyper,
    mut on_epoch: impl FnMut(usize, f64),
) -> Result<SrcnnCheckpoint> {
    hyper.validate()?;
    spec.validate()?;
    pattern.validate()?;
    if pairs.is_empty() {
        return Err(Error::invalid("srcnn training set is empty"));
    }
    let mut sources: Vec<(Provenance, usize)> = Vec::new();
    for p in pairs {
        if p.source == Provenance::Pure && !hyper.allow_pure_targets {
            return Err(Error::invalid(
                "pure grids may not enter srcnn training; set allow_pure_targets for reference runs",
            ));
        }
        if p.hr.dims() != pattern.dims {
            return Err(Error::shape(pattern.dims, p.hr.dims()));
        }
        if p.lr.dims() != pattern.pilot_dims() {
            return Err(Error::shape(pattern.pilot_dims(), p.lr.dims()));
        }
        match sources.iter_mut().find(|(s, _)| *s == p.source) {
            Some((_, c)) => *c += 1,
            None => sources.push((p.source, 1)),
        }
    }

    let dims = pattern.dims;
    let per = dims.len() * 2;
    let mut inputs = Vec::with_capacity(pairs.len() * per);
    let mut targets = Vec::with_capacity(pairs.len() * per);
    for p in pairs {
        let up = upsample_bilinear(&p.lr, dims, &pattern.symbol_indices)?;
        inputs.extend(up.values().iter().flat_map(|v| [v.re as f32, v.im as f32]));
        targets.extend(p.hr.values().iter().flat_map(|v| [v.re as f32, v.im as f32]));
    }

    let mut net = Srcnn::new(spec, tagged_seed(hyper.seed, "srcnn-init", 0))?;
    let mut opt = Adam::new(hyper.lr as f32);
    let mut rng = rng_from(tagged_seed(hyper.seed, "srcnn-train", 0));
    let mut order: Vec<usize> = (0..pairs.len()).collect();
    let iters_per_epoch = pairs.len().div_ceil(hyper.batch);
    let total = iters_per_epoch * hyper.epochs;
    let mut cache = SrcnnCache::default();
    let mut loss_curve = Vec::with_capacity(hyper.epochs);
    let started = Instant::now();
    let mut it = 0;

    for epoch in 0..hyper.epochs {
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        for batch in order.chunks(hyper.batch) {
            let n = batch.len();
            let mut x = Vec::with_capacity(n * per);
            let mut t = Vec::with_capacity(n * per);
            for &i in batch {
                x.extend_from_slice(&inputs[i * per..(i + 1) * per]);
                t.extend_from_slice(&targets[i * per..(i + 1) * per]);
            }
            let x = Tensor::from_vec(n, dims.n_subcarriers, dims.n_symbols, 2, x)?;
            let y = net.forward_train(&x, &mut cache)?;
            let norm = 1.0 / (n * per) as f64;
            let mut loss = 0.0f64;
            let mut dy = vec![0.0f32; y.data.len()];
            for ((d, &yv), &tv) in dy.iter_mut().zip(&y.data).zip(&t) {
                let r = (yv - tv) as f64;
                loss += r * r;
                *d = (2.0 * norm * r) as f32;
            }
            loss *= norm;
            if !loss.is_finite() {
                return Err(Error::Numerical(format!("srcnn loss diverged at iteration {it}")));
            }
            epoch_loss += loss;
            net.zero_grad();
            net.backward(&cache, Tensor { data: dy, ..y });
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

    Ok(SrcnnCheckpoint {
        spec: spec.clone(),
        params: net.export_params(),
        pattern: pattern.clone(),
        meta: SrcnnTrainingMeta {
            epochs: hyper.epochs,
            lr: hyper.lr,
            batch: hyper.batch,
            seed: hyper.seed,
            iterations: total,
            n_pairs: pairs.len(),
            sources,
            loss_curve,
            wall_time_s: started.elapsed().as_secs_f64(),
        },
        config_hash: None,
    })
}
