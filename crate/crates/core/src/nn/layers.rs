use super::init_uniform;
use super::optim::Module;
use super::tensor::{gemm, Tensor};
use crate::error::{Error, Result};
use crate::rng::SimRng;

/// Stride-1 2-D convolution with "same" zero padding and per-axis dilation.
/// Weights are stored `[ky][kx][cin][cout]`.
#[derive(Clone, Debug)]
pub struct Conv2d {
    pub cin: usize,
    pub cout: usize,
    pub kh: usize,
    pub kw: usize,
    pub dh: usize,
    pub dw: usize,
    pub weight: Vec<f32>,
    pub bias: Vec<f32>,
    pub grad_weight: Vec<f32>,
    pub grad_bias: Vec<f32>,
}

/// What a convolution keeps from its forward pass for backward: the input,
/// from which patches are rebuilt chunk by chunk.
#[derive(Clone, Debug, Default)]
pub struct ConvCache {
    x: Option<Tensor>,
}

/// Patch-matrix floats per chunk; keeps the working set in cache.
const CHUNK_FLOATS: usize = 1 << 17;

impl Conv2d {
    pub fn new(cin: usize, cout: usize, kernel: (usize, usize), dilation: (usize, usize), rng: &mut SimRng) -> Result<Self> {
        let (kh, kw) = kernel;
        if kh % 2 == 0 || kw % 2 == 0 {
            return Err(Error::invalid(format!("kernel must be odd, got {kh}x{kw}")));
        }
        if cin == 0 || cout == 0 || dilation.0 == 0 || dilation.1 == 0 {
            return Err(Error::invalid("conv channels and dilation must be positive"));
        }
        let k = kh * kw * cin;
        let mut weight = vec![0.0; k * cout];
        let mut bias = vec![0.0; cout];
        init_uniform(rng, k, &mut weight);
        init_uniform(rng, k, &mut bias);
        Ok(Self {
            cin,
            cout,
            kh,
            kw,
            dh: dilation.0,
            dw: dilation.1,
            grad_weight: vec![0.0; weight.len()],
            grad_bias: vec![0.0; cout],
            weight,
            bias,
        })
    }

    fn patch_len(&self) -> usize {
        self.kh * self.kw * self.cin
    }

    fn is_pointwise(&self) -> bool {
        self.kh == 1 && self.kw == 1
    }

    fn check_input(&self, x: &Tensor) -> Result<()> {
        if x.c != self.cin {
            return Err(Error::shape(format!("{} input channels", self.cin), x.shape_string()));
        }
        Ok(())
    }

    fn tap_offsets(&self) -> Vec<(isize, isize)> {
        let (ry, rx) = ((self.kh / 2) as isize, (self.kw / 2) as isize);
        let mut taps = Vec::with_capacity(self.kh * self.kw);
        for ky in 0..self.kh {
            for kx in 0..self.kw {
                taps.push(((ky as isize - ry) * self.dh as isize, (kx as isize - rx) * self.dw as isize));
            }
        }
        taps
    }

    /// Pixels per chunk and the chunk count for `p` pixels.
    fn chunking(&self, p: usize) -> usize {
        (CHUNK_FLOATS / self.patch_len()).clamp(1, p.max(1))
    }

    /// Patch rows of pixels `p0..p1`, written pixel-major into `cols`.
    fn im2col_into(&self, x: &Tensor, p0: usize, p1: usize, cols: &mut [f32], taps: &[(isize, isize)]) {
        let (h, w, c) = (x.h, x.w, x.c);
        let k = self.patch_len();
        if self.dw == 1 {
            // Each kernel row reads a contiguous run of the input row.
            let (rx, run) = ((self.kw / 2) as isize, self.kw * c);
            for (px, row) in (p0..p1).zip(cols.chunks_exact_mut(k)) {
                let (n, y, xx) = (px / (h * w), (px / w) % h, px % w);
                let lo = (rx - xx as isize).max(0) as usize;
                let hi = (w as isize - xx as isize + rx).min(self.kw as isize) as usize;
                for (ky, dst) in row.chunks_exact_mut(run).enumerate() {
                    let sy = y as isize + (ky as isize - (self.kh / 2) as isize) * self.dh as isize;
                    if sy < 0 || sy >= h as isize || lo >= hi {
                        dst.fill(0.0);
                        continue;
                    }
                    let sx = (xx as isize - rx) as usize;
                    let src = ((n * h + sy as usize) * w + sx.wrapping_add(lo)) * c;
                    dst[..lo * c].fill(0.0);
                    dst[lo * c..hi * c].copy_from_slice(&x.data[src..src + (hi - lo) * c]);
                    dst[hi * c..].fill(0.0);
                }
            }
            return;
        }
        for (px, row) in (p0..p1).zip(cols.chunks_exact_mut(k)) {
            let (n, y, xx) = (px / (h * w), (px / w) % h, px % w);
            for (dst, &(oy, ox)) in row.chunks_exact_mut(c).zip(taps) {
                let (sy, sx) = (y as isize + oy, xx as isize + ox);
                if sy >= 0 && sy < h as isize && sx >= 0 && sx < w as isize {
                    let src = ((n * h + sy as usize) * w + sx as usize) * c;
                    dst.copy_from_slice(&x.data[src..src + c]);
                } else {
                    dst.fill(0.0);
                }
            }
        }
    }

    /// Scatters patch-row gradients of pixels `p0..p1` back onto `dx`.
    fn col2im_add(&self, dcols: &[f32], p0: usize, p1: usize, dx: &mut Tensor, taps: &[(isize, isize)]) {
        let (h, w, c) = (dx.h, dx.w, dx.c);
        let k = self.patch_len();
        for (px, row) in (p0..p1).zip(dcols.chunks_exact(k)) {
            let (n, y, xx) = (px / (h * w), (px / w) % h, px % w);
            for (src, &(oy, ox)) in row.chunks_exact(c).zip(taps) {
                let (sy, sx) = (y as isize + oy, xx as isize + ox);
                if sy >= 0 && sy < h as isize && sx >= 0 && sx < w as isize {
                    let dst = ((n * h + sy as usize) * w + sx as usize) * c;
                    for (a, b) in dx.data[dst..dst + c].iter_mut().zip(src) {
                        *a += b;
                    }
                }
            }
        }
    }

    /// Few output channels: GEMM tiling wastes most of its work, so the
    /// narrow path uses per-pixel dot products instead.
    fn is_narrow(&self) -> bool {
        self.cout <= 4
    }

    /// Weights as `[cout][patch]`.
    fn weight_t(&self) -> Vec<f32> {
        let k = self.patch_len();
        let mut wt = vec![0.0; k * self.cout];
        for (i, row) in self.weight.chunks_exact(self.cout).enumerate() {
            for (o, &v) in row.iter().enumerate() {
                wt[o * k + i] = v;
            }
        }
        wt
    }

    /// y += cols W for a chunk of patch rows.
    fn matmul_add(&self, cols: &[f32], y: &mut [f32], wt: &[f32]) {
        let k = self.patch_len();
        if self.is_narrow() {
            for (row, out) in cols.chunks_exact(k).zip(y.chunks_exact_mut(self.cout)) {
                for (o, w) in out.iter_mut().zip(wt.chunks_exact(k)) {
                    *o += dot(row, w);
                }
            }
        } else {
            gemm(cols.len() / k, k, self.cout, cols, false, &self.weight, false, y, 1.0);
        }
    }

    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        self.check_input(x)?;
        let p = x.pixels();
        let k = self.patch_len();
        let mut y = Tensor::zeros(x.n, x.h, x.w, self.cout);
        for px in y.data.chunks_exact_mut(self.cout) {
            px.copy_from_slice(&self.bias);
        }
        let wt = if self.is_narrow() { self.weight_t() } else { Vec::new() };
        if self.is_pointwise() {
            self.matmul_add(&x.data, &mut y.data, &wt);
            return Ok(y);
        }
        let taps = self.tap_offsets();
        let chunk = self.chunking(p);
        let mut cols = vec![0.0f32; chunk * k];
        for p0 in (0..p).step_by(chunk) {
            let p1 = (p0 + chunk).min(p);
            let c = &mut cols[..(p1 - p0) * k];
            self.im2col_into(x, p0, p1, c, &taps);
            self.matmul_add(c, &mut y.data[p0 * self.cout..p1 * self.cout], &wt);
        }
        Ok(y)
    }

    /// Forward pass that also records what backward needs.
    pub fn forward_train(&self, x: &Tensor, cache: &mut ConvCache) -> Result<Tensor> {
        let y = self.forward(x)?;
        cache.x = Some(x.clone());
        Ok(y)
    }

    /// Gradient pieces of one chunk: weight gradient and, optionally, patch
    /// gradients written to `dcols`.
    fn backward_chunk(&mut self, cols: &[f32], dy: &[f32], dcols: Option<&mut [f32]>, wt: &[f32], gwt: &mut [f32]) {
        let k = self.patch_len();
        let rows = cols.len() / k;
        if self.is_narrow() {
            for (row, d) in cols.chunks_exact(k).zip(dy.chunks_exact(self.cout)) {
                for (g, &dv) in gwt.chunks_exact_mut(k).zip(d) {
                    axpy(dv, row, g);
                }
            }
        } else {
            gemm(k, rows, self.cout, cols, true, dy, false, &mut self.grad_weight, 1.0);
        }
        if let Some(dcols) = dcols {
            if self.is_narrow() {
                for (row, d) in dcols.chunks_exact_mut(k).zip(dy.chunks_exact(self.cout)) {
                    row.fill(0.0);
                    for (w, &dv) in wt.chunks_exact(k).zip(d) {
                        axpy(dv, w, row);
                    }
                }
            } else {
                gemm(rows, self.cout, k, dy, false, &self.weight, true, dcols, 0.0);
            }
        }
    }

    /// Accumulates parameter gradients and, if asked, returns dL/dx.
    pub fn backward(&mut self, cache: &ConvCache, dy: &Tensor, need_dx: bool) -> Option<Tensor> {
        let x = cache.x.as_ref().expect("backward needs a forward_train pass");
        let p = dy.pixels();
        let k = self.patch_len();
        for px in dy.data.chunks_exact(self.cout) {
            for (g, d) in self.grad_bias.iter_mut().zip(px) {
                *g += d;
            }
        }
        let narrow = self.is_narrow();
        let wt = if narrow { self.weight_t() } else { Vec::new() };
        let mut gwt = if narrow { vec![0.0f32; k * self.cout] } else { Vec::new() };
        let mut dx = need_dx.then(|| Tensor::zeros(x.n, x.h, x.w, x.c));
        if self.is_pointwise() {
            let dcols = dx.as_mut().map(|d| &mut d.data[..]);
            self.backward_chunk(&x.data, &dy.data, dcols, &wt, &mut gwt);
        } else {
            let taps = self.tap_offsets();
            let chunk = self.chunking(p);
            let mut cols = vec![0.0f32; chunk * k];
            let mut dcols = if need_dx { vec![0.0f32; chunk * k] } else { Vec::new() };
            for p0 in (0..p).step_by(chunk) {
                let p1 = (p0 + chunk).min(p);
                let n = (p1 - p0) * k;
                self.im2col_into(x, p0, p1, &mut cols[..n], &taps);
                let dy_chunk = &dy.data[p0 * self.cout..p1 * self.cout];
                let dc = need_dx.then(|| &mut dcols[..n]);
                self.backward_chunk(&cols[..n], dy_chunk, dc, &wt, &mut gwt);
                if let Some(dx) = dx.as_mut() {
                    self.col2im_add(&dcols[..n], p0, p1, dx, &taps);
                }
            }
        }
        if narrow {
            for (o, g) in gwt.chunks_exact(k).enumerate() {
                for (i, &v) in g.iter().enumerate() {
                    self.grad_weight[i * self.cout + o] += v;
                }
            }
        }
        dx
    }
}

impl Module for Conv2d {
    fn visit_params(&mut self, f: &mut dyn FnMut(&mut [f32], &mut [f32])) {
        f(&mut self.weight, &mut self.grad_weight);
        f(&mut self.bias, &mut self.grad_bias);
    }

    fn visit_params_ref(&self, f: &mut dyn FnMut(&[f32])) {
        f(&self.weight);
        f(&self.bias);
    }
}

/// Dense layer, weights stored `[in][out]`.
#[derive(Clone, Debug)]
pub struct Linear {
    pub din: usize,
    pub dout: usize,
    pub weight: Vec<f32>,
    pub bias: Vec<f32>,
    pub grad_weight: Vec<f32>,
    pub grad_bias: Vec<f32>,
}

impl Linear {
    pub fn new(din: usize, dout: usize, rng: &mut SimRng) -> Self {
        let mut weight = vec![0.0; din * dout];
        let mut bias = vec![0.0; dout];
        init_uniform(rng, din, &mut weight);
        init_uniform(rng, din, &mut bias);
        Self {
            din,
            dout,
            grad_weight: vec![0.0; weight.len()],
            grad_bias: vec![0.0; dout],
            weight,
            bias,
        }
    }

    /// `x` is `[rows][din]`; returns `[rows][dout]`.
    pub fn forward(&self, x: &[f32]) -> Vec<f32> {
        let rows = x.len() / self.din;
        let mut y: Vec<f32> = (0..rows).flat_map(|_| self.bias.iter().copied()).collect();
        gemm(rows, self.din, self.dout, x, false, &self.weight, false, &mut y, 1.0);
        y
    }

    pub fn backward(&mut self, x: &[f32], dy: &[f32]) -> Vec<f32> {
        let rows = x.len() / self.din;
        gemm(self.din, rows, self.dout, x, true, dy, false, &mut self.grad_weight, 1.0);
        for r in dy.chunks_exact(self.dout) {
            for (g, d) in self.grad_bias.iter_mut().zip(r) {
                *g += d;
            }
        }
        let mut dx = vec![0.0; rows * self.din];
        gemm(rows, self.dout, self.din, dy, false, &self.weight, true, &mut dx, 0.0);
        dx
    }
}

impl Module for Linear {
    fn visit_params(&mut self, f: &mut dyn FnMut(&mut [f32], &mut [f32])) {
        f(&mut self.weight, &mut self.grad_weight);
        f(&mut self.bias, &mut self.grad_bias);
    }

    fn visit_params_ref(&self, f: &mut dyn FnMut(&[f32])) {
        f(&self.weight);
        f(&self.bias);
    }
}

/// Dot product over eight independent accumulators so it vectorizes.
fn dot(a: &[f32], b: &[f32]) -> f32 {
    let mut acc = [0.0f32; 8];
    let (ca, cb) = (a.chunks_exact(8), b.chunks_exact(8));
    let tail: f32 = ca.remainder().iter().zip(cb.remainder()).map(|(x, y)| x * y).sum();
    for (x, y) in ca.zip(cb) {
        for i in 0..8 {
            acc[i] += x[i] * y[i];
        }
    }
    acc.iter().sum::<f32>() + tail
}

/// y += a x
fn axpy(a: f32, x: &[f32], y: &mut [f32]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += a * xi;
    }
}

/// exp(x) by range reduction to [-ln2/2, ln2/2] and a degree-6 polynomial;
/// relative error below 1e-5 on [-87, 87]. Branch-free so loops vectorize.
#[inline(always)]
fn fast_exp(x: f32) -> f32 {
    // Adding 1.5 * 2^23 rounds to the nearest integer, which then sits in
    // the low mantissa bits; no libm call or float-to-int conversion.
    const MAGIC: f32 = 12_582_912.0;
    let x = x.clamp(-87.0, 87.0);
    let shifted = x * std::f32::consts::LOG2_E + MAGIC;
    let n = shifted - MAGIC;
    let ni = shifted.to_bits().wrapping_sub(MAGIC.to_bits());
    let r = x - n * std::f32::consts::LN_2;
    let p = 1.0
        + r * (1.0 + r * (0.5 + r * (1.0 / 6.0 + r * (1.0 / 24.0 + r * (1.0 / 120.0 + r * (1.0 / 720.0))))));
    p * f32::from_bits(ni.wrapping_add(127) << 23)
}

#[inline(always)]
fn sigmoid(x: f32) -> f32 {
    1.0 / (1.0 + fast_exp(-x))
}

pub fn silu(x: &[f32]) -> Vec<f32> {
    x.iter().map(|&v| v * sigmoid(v)).collect()
}

/// dL/dx of silu given the pre-activation `x` and dL/dy.
pub fn silu_backward(x: &[f32], dy: &[f32]) -> Vec<f32> {
    x.iter()
        .zip(dy)
        .map(|(&v, &d)| {
            let s = sigmoid(v);
            d * s * (1.0 + v * (1.0 - s))
        })
        .collect()
}

pub fn relu(x: &[f32]) -> Vec<f32> {
    x.iter().map(|&v| v.max(0.0)).collect()
}

pub fn relu_backward(x: &[f32], dy: &[f32]) -> Vec<f32> {
    x.iter().zip(dy).map(|(&v, &d)| if v > 0.0 { d } else { 0.0 }).collect()
}
