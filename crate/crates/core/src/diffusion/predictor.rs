use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{ChannelGrid, GridDims};
use crate::nn::{silu, silu_backward, Conv2d, ConvCache, Linear, Module, Tensor};
use crate::rng::rng_from;

/// Architecture of the time-conditioned predictor.
///
/// The network is fully convolutional: an input convolution lifts the two
/// real planes to `channels`, a stack of residual blocks with dilation along
/// the subcarrier axis widens the receptive field, and an output convolution
/// maps back to two planes. The step embedding is added before every block,
/// and with `global_context` so is a linear map of the block input's mean
/// over all pixels, which lets every position see grid-wide structure that
/// the dilated stack cannot reach.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct NoisePredictorSpec {
    pub in_planes: usize,
    pub channels: usize,
    /// Subcarrier-axis dilation of each residual block.
    pub dilations: Vec<usize>,
    pub kernel_size: usize,
    pub time_embedding_dim: usize,
    pub global_context: bool,
}

impl Default for NoisePredictorSpec {
    fn default() -> Self {
        Self {
            in_planes: 2,
            channels: 16,
            dilations: vec![1, 2, 4, 8, 1],
            kernel_size: 3,
            time_embedding_dim: 32,
            global_context: true,
        }
    }
}

impl NoisePredictorSpec {
    pub fn validate(&self) -> Result<()> {
        if self.in_planes != 2 {
            return Err(Error::invalid("the predictor takes exactly 2 planes (real, imag)"));
        }
        if self.kernel_size % 2 == 0 {
            return Err(Error::invalid(format!("kernel_size must be odd, got {}", self.kernel_size)));
        }
        if self.dilations.is_empty() || self.dilations.contains(&0) {
            return Err(Error::invalid("need at least one residual block with positive dilation"));
        }
        if self.channels == 0 || self.time_embedding_dim < 2 || self.time_embedding_dim % 2 != 0 {
            return Err(Error::invalid("channels must be positive and time_embedding_dim even"));
        }
        Ok(())
    }

    /// Largest hidden width.
    pub fn c_max(&self) -> usize {
        self.channels
    }
}

/// The network. Its output is read as a velocity v; see
/// [`super::sampler::eps_from_velocity`].
#[derive(Clone, Debug)]
pub struct NoisePredictor {
    spec: NoisePredictorSpec,
    t_n: usize,
    temb: Linear,
    conv_in: Conv2d,
    blocks: Vec<Conv2d>,
    block_temb: Vec<Linear>,
    /// Empty unless the spec enables the global context path.
    block_ctx: Vec<Linear>,
    conv_out: Conv2d,
}

/// Forward-pass record needed by [`NoisePredictor::backward`].
#[derive(Clone, Debug, Default)]
pub struct PredictorCache {
    e0: Vec<f32>,
    z: Vec<f32>,
    e: Vec<f32>,
    cin: ConvCache,
    u: Vec<Tensor>,
    ctx: Vec<Vec<f32>>,
    blocks: Vec<ConvCache>,
    h_final: Vec<f32>,
    cout: ConvCache,
}

impl NoisePredictor {
    pub fn new(spec: &NoisePredictorSpec, t_n: usize, seed: u64) -> Result<Self> {
        spec.validate()?;
        let mut rng = rng_from(seed);
        let k = (spec.kernel_size, spec.kernel_size);
        let (c, e) = (spec.channels, spec.time_embedding_dim);
        let temb = Linear::new(e, e, &mut rng);
        let conv_in = Conv2d::new(spec.in_planes, c, k, (1, 1), &mut rng)?;
        let mut blocks = Vec::new();
        let mut block_temb = Vec::new();
        for &d in &spec.dilations {
            blocks.push(Conv2d::new(c, c, k, (d, 1), &mut rng)?);
            block_temb.push(Linear::new(e, c, &mut rng));
        }
        let conv_out = Conv2d::new(c, spec.in_planes, k, (1, 1), &mut rng)?;
        let block_ctx = if spec.global_context {
            spec.dilations.iter().map(|_| Linear::new(c, c, &mut rng)).collect()
        } else {
            Vec::new()
        };
        Ok(Self {
            spec: spec.clone(),
            t_n,
            temb,
            conv_in,
            blocks,
            block_temb,
            block_ctx,
            conv_out,
        })
    }

    pub fn spec(&self) -> &NoisePredictorSpec {
        &self.spec
    }

    /// Sinusoidal features of the step, rescaled so the largest step maps to 1000.
    fn embed_steps(&self, steps: &[usize]) -> Vec<f32> {
        let e = self.spec.time_embedding_dim;
        let half = e / 2;
        let mut out = Vec::with_capacity(steps.len() * e);
        for &t in steps {
            let tau = t as f64 * 1000.0 / self.t_n as f64;
            let (mut s, mut c) = (Vec::with_capacity(half), Vec::with_capacity(half));
            for i in 0..half {
                let f = (-(1000f64).ln() * i as f64 / half as f64).exp();
                s.push((tau * f).sin() as f32);
                c.push((tau * f).cos() as f32);
            }
            out.extend(s);
            out.extend(c);
        }
        out
    }

    fn check(&self, x: &Tensor, steps: &[usize]) -> Result<()> {
        if x.c != self.spec.in_planes || steps.len() != x.n {
            return Err(Error::shape(
                format!("[{}, H, W, {}] with one step per sample", steps.len(), self.spec.in_planes),
                x.shape_string(),
            ));
        }
        if let Some(&t) = steps.iter().find(|&&t| t == 0 || t > self.t_n) {
            return Err(Error::invalid(format!("step {t} outside [1, {}]", self.t_n)));
        }
        Ok(())
    }

    pub fn forward(&self, x: &Tensor, steps: &[usize]) -> Result<Tensor> {
        self.check(x, steps)?;
        let e = silu(&self.temb.forward(&self.embed_steps(steps)));
        let mut h = self.conv_in.forward(x)?;
        for (b, (conv, lin)) in self.blocks.iter().zip(&self.block_temb).enumerate() {
            let mut u = h.clone();
            u.add_per_sample_channel(&lin.forward(&e));
            if let Some(g) = self.block_ctx.get(b) {
                u.add_per_sample_channel(&g.forward(&h.mean_per_sample_channel()));
            }
            let a = Tensor { data: silu(&u.data), ..u };
            h.add_assign(&conv.forward(&a)?);
        }
        let a = Tensor { data: silu(&h.data), ..h };
        self.conv_out.forward(&a)
    }

    pub fn forward_train(&self, x: &Tensor, steps: &[usize], cache: &mut PredictorCache) -> Result<Tensor> {
        self.check(x, steps)?;
        cache.e0 = self.embed_steps(steps);
        cache.z = self.temb.forward(&cache.e0);
        cache.e = silu(&cache.z);
        cache.u.clear();
        cache.ctx.clear();
        cache.blocks.resize(self.blocks.len(), ConvCache::default());
        let mut h = self.conv_in.forward_train(x, &mut cache.cin)?;
        for (b, (conv, lin)) in self.blocks.iter().zip(&self.block_temb).enumerate() {
            let mut u = h.clone();
            u.add_per_sample_channel(&lin.forward(&cache.e));
            if let Some(g) = self.block_ctx.get(b) {
                let m = h.mean_per_sample_channel();
                u.add_per_sample_channel(&g.forward(&m));
                cache.ctx.push(m);
            }
            let a = Tensor { data: silu(&u.data), ..u.clone() };
            h.add_assign(&conv.forward_train(&a, &mut cache.blocks[b])?);
            cache.u.push(u);
        }
        cache.h_final = h.data.clone();
        let a = Tensor { data: silu(&h.data), ..h };
        self.conv_out.forward_train(&a, &mut cache.cout)
    }

    /// Accumulates parameter gradients for dL/d(output) = `dout`.
    pub fn backward(&mut self, cache: &PredictorCache, dout: &Tensor) {
        let da = self.conv_out.backward(&cache.cout, dout, true).expect("dx requested");
        let mut dh = Tensor {
            data: silu_backward(&cache.h_final, &da.data),
            ..da
        };
        let mut de = vec![0.0f32; cache.e.len()];
        for b in (0..self.blocks.len()).rev() {
            let da = self.blocks[b].backward(&cache.blocks[b], &dh, true).expect("dx requested");
            let du = Tensor {
                data: silu_backward(&cache.u[b].data, &da.data),
                ..da
            };
            dh.add_assign(&du);
            let dtb = du.sum_per_sample_channel();
            if let Some(g) = self.block_ctx.get_mut(b) {
                let inv = 1.0 / (du.h * du.w) as f32;
                let dm: Vec<f32> = g.backward(&cache.ctx[b], &dtb).iter().map(|v| v * inv).collect();
                dh.add_per_sample_channel(&dm);
            }
            for (a, g) in de.iter_mut().zip(self.block_temb[b].backward(&cache.e, &dtb)) {
                *a += g;
            }
        }
        let dz = silu_backward(&cache.z, &de);
        self.temb.backward(&cache.e0, &dz);
        self.conv_in.backward(&cache.cin, &dh, false);
    }
}

impl Module for NoisePredictor {
    fn visit_params(&mut self, f: &mut dyn FnMut(&mut [f32], &mut [f32])) {
        self.temb.visit_params(f);
        self.conv_in.visit_params(f);
        for (c, l) in self.blocks.iter_mut().zip(self.block_temb.iter_mut()) {
            c.visit_params(f);
            l.visit_params(f);
        }
        self.conv_out.visit_params(f);
        self.block_ctx.iter_mut().for_each(|g| g.visit_params(f));
    }

    fn visit_params_ref(&self, f: &mut dyn FnMut(&[f32])) {
        self.temb.visit_params_ref(f);
        self.conv_in.visit_params_ref(f);
        for (c, l) in self.blocks.iter().zip(&self.block_temb) {
            c.visit_params_ref(f);
            l.visit_params_ref(f);
        }
        self.conv_out.visit_params_ref(f);
        self.block_ctx.iter().for_each(|g| g.visit_params_ref(f));
    }
}

/// Packs equally sized grids into a `[n, subcarriers, symbols, 2]` tensor.
pub fn grids_to_tensor<'a>(grids: impl IntoIterator<Item = &'a ChannelGrid>) -> Result<Tensor> {
    let mut dims: Option<GridDims> = None;
    let mut data = Vec::new();
    let mut n = 0;
    for g in grids {
        match dims {
            None => dims = Some(g.dims()),
            Some(d) if d != g.dims() => return Err(Error::shape(d, g.dims())),
            _ => {}
        }
        for v in g.values() {
            data.push(v.re as f32);
            data.push(v.im as f32);
        }
        n += 1;
    }
    let d = dims.ok_or_else(|| Error::invalid("no grids to pack"))?;
    Tensor::from_vec(n, d.n_subcarriers, d.n_symbols, 2, data)
}

pub fn tensor_to_grids(t: &Tensor) -> Result<Vec<ChannelGrid>> {
    if t.c != 2 {
        return Err(Error::shape("2 planes", t.shape_string()));
    }
    let dims = GridDims::new(t.h, t.w)?;
    t.data
        .chunks_exact(dims.len() * 2)
        .map(|s| {
            ChannelGrid::from_values(
                dims,
                s.chunks_exact(2).map(|p| Complex64::new(p[0] as f64, p[1] as f64)).collect(),
            )
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::normal;

    fn small() -> NoisePredictor {
        let spec = NoisePredictorSpec {
            channels: 4,
            dilations: vec![1, 2],
            time_embedding_dim: 8,
            ..Default::default()
        };
        NoisePredictor::new(&spec, 50, 7).unwrap()
    }

    fn loss(net: &NoisePredictor, x: &Tensor, steps: &[usize], r: &[f32]) -> f64 {
        let y = net.forward(x, steps).unwrap();
        y.data.iter().zip(r).map(|(a, b)| (*a as f64) * (*b as f64)).sum()
    }

    #[test]
    fn predictor_gradients_match_finite_differences() {
        let mut net = small();
        let mut rng = rng_from(1);
        let x = Tensor::from_vec(2, 6, 3, 2, (0..72).map(|_| normal(&mut rng) as f32).collect()).unwrap();
        let r: Vec<f32> = (0..72).map(|_| normal(&mut rng) as f32).collect();
        let steps = [3, 41];
        let mut cache = PredictorCache::default();
        let y = net.forward_train(&x, &steps, &mut cache).unwrap();
        assert_eq!(y, net.forward(&x, &steps).unwrap());
        net.zero_grad();
        net.backward(&cache, &Tensor { data: r.clone(), ..y });

        let mut grads = Vec::new();
        net.visit_params(&mut |_, g| grads.extend_from_slice(g));
        let params = net.export_params();
        let h = 2e-3f32;
        let mut checked = 0;
        for i in (0..params.len()).step_by(11) {
            let mut p = params.clone();
            p[i] += h;
            let mut np = net.clone();
            np.import_params(&p).unwrap();
            let lp = loss(&np, &x, &steps, &r);
            p[i] -= 2.0 * h;
            np.import_params(&p).unwrap();
            let lm = loss(&np, &x, &steps, &r);
            let fd = (lp - lm) / (2.0 * h as f64);
            let g = grads[i] as f64;
            assert!((fd - g).abs() < 2e-2 * (1.0 + fd.abs().max(g.abs())), "param {i}: fd {fd} vs {g}");
            checked += 1;
        }
        assert!(checked > 20);
    }

    #[test]
    fn grid_tensor_roundtrip() {
        let dims = GridDims::new(3, 2).unwrap();
        let g = ChannelGrid::from_fn(dims, |a, b| Complex64::new(a as f64, -(b as f64) * 0.5));
        let t = grids_to_tensor([&g, &g]).unwrap();
        assert_eq!((t.n, t.h, t.w, t.c), (2, 3, 2, 2));
        assert_eq!(tensor_to_grids(&t).unwrap(), vec![g.clone(), g]);
    }

    #[test]
    fn fully_convolutional_over_widths() {
        let net = small();
        for w in [14, 2] {
            let x = Tensor::zeros(1, 8, w, 2);
            assert_eq!(net.forward(&x, &[5]).unwrap().w, w);
        }
        assert!(net.forward(&Tensor::zeros(1, 8, 2, 2), &[0]).is_err());
    }
}
