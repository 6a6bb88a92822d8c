use num_complex::Complex64;

use crate::error::{Error, Result};

/// Gray-mapped square QAM with unit average energy.
///
/// The first half of each symbol's bits selects the in-phase level and the
/// second half the quadrature level. Per axis, the bit group is read as a
/// Gray code g; with i = gray_to_binary(g), the level is (m - 1) - 2i for m
/// levels per axis. So bit 0 maps to the positive side, e.g. QPSK bits 00
/// give (+1 + j)/sqrt(2) and 64-QAM bits 000000 give (7 + 7j)/sqrt(42).
///
/// LLRs use the convention log P(b = 0) / P(b = 1): positive favours 0.
#[derive(Clone, Debug, PartialEq)]
pub struct Qam {
    order: usize,
    bits_per_axis: usize,
    scale: f64,
    /// Level of each axis Gray label, already scaled.
    levels: Vec<f64>,
}

fn gray_to_binary(mut g: usize) -> usize {
    let mut b = g;
    while g > 0 {
        g >>= 1;
        b ^= g;
    }
    b
}

impl Qam {
    pub fn new(order: usize) -> Result<Self> {
        if !matches!(order, 4 | 16 | 64) {
            return Err(Error::invalid(format!("QAM order must be 4, 16 or 64, got {order}")));
        }
        let m = (order as f64).sqrt() as usize;
        let bits_per_axis = m.trailing_zeros() as usize;
        let scale = (2.0 * (order as f64 - 1.0) / 3.0).sqrt().recip();
        let levels = (0..m)
            .map(|g| ((m - 1) as f64 - 2.0 * gray_to_binary(g) as f64) * scale)
            .collect();
        Ok(Self {
            order,
            bits_per_axis,
            scale,
            levels,
        })
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn bits_per_symbol(&self) -> usize {
        2 * self.bits_per_axis
    }

    /// Amplitude normalization, 1/sqrt(42) for 64-QAM.
    pub fn scale(&self) -> f64 {
        self.scale
    }

    fn axis_label(bits: &[u8]) -> usize {
        bits.iter().fold(0, |acc, &b| (acc << 1) | (b & 1) as usize)
    }

    pub fn map_symbol(&self, bits: &[u8]) -> Complex64 {
        let (i, q) = bits.split_at(self.bits_per_axis);
        Complex64::new(self.levels[Self::axis_label(i)], self.levels[Self::axis_label(q)])
    }

    pub fn modulate(&self, bits: &[u8]) -> Result<Vec<Complex64>> {
        let b = self.bits_per_symbol();
        if bits.len() % b != 0 {
            return Err(Error::invalid(format!(
                "{} bits do not fill whole {}-QAM symbols",
                bits.len(),
                self.order
            )));
        }
        if bits.iter().any(|&x| x > 1) {
            return Err(Error::invalid("bits must be 0 or 1"));
        }
        Ok(bits.chunks_exact(b).map(|c| self.map_symbol(c)).collect())
    }

    /// Minimum-distance detection, per axis since the grid is separable.
    pub fn hard_demap(&self, y: Complex64, out: &mut Vec<u8>) {
        for x in [y.re, y.im] {
            let g = (0..self.levels.len())
                .min_by(|&a, &b| (x - self.levels[a]).abs().total_cmp(&(x - self.levels[b]).abs()))
                .unwrap();
            for k in (0..self.bits_per_axis).rev() {
                out.push(((g >> k) & 1) as u8);
            }
        }
    }

    /// Max-log LLRs for `y = h x + n`, equalized as y / h_hat with effective
    /// noise variance noise_var / |h_hat|^2. Appends `bits_per_symbol` values;
    /// a zero `h_hat` yields erasures (all zeros).
    pub fn soft_demap_into(&self, y: Complex64, h_hat: Complex64, noise_var: f64, out: &mut Vec<f64>) {
        let g2 = h_hat.norm_sqr();
        if g2 == 0.0 || !g2.is_finite() {
            out.extend(std::iter::repeat_n(0.0, self.bits_per_symbol()));
            return;
        }
        let z = y / h_hat;
        // Complex noise of variance nv splits nv/2 per axis, so the max-log
        // metric per axis is (d1^2 - d0^2) / nv_eff with nv_eff = nv / |h|^2.
        let inv = g2 / noise_var;
        for x in [z.re, z.im] {
            for k in (0..self.bits_per_axis).rev() {
                let (mut d0, mut d1) = (f64::INFINITY, f64::INFINITY);
                for (g, &l) in self.levels.iter().enumerate() {
                    let d = (x - l) * (x - l);
                    if (g >> k) & 1 == 0 {
                        d0 = d0.min(d);
                    } else {
                        d1 = d1.min(d);
                    }
                }
                out.push((d1 - d0) * inv);
            }
        }
    }
}

pub fn qam_modulate(bits: &[u8], order: usize) -> Result<Vec<Complex64>> {
    Qam::new(order)?.modulate(bits)
}

pub fn soft_demap(y: Complex64, h_hat: Complex64, noise_var: f64, order: usize) -> Result<Vec<f64>> {
    if !(noise_var > 0.0) {
        return Err(Error::invalid(format!("noise variance must be positive, got {noise_var}")));
    }
    let q = Qam::new(order)?;
    let mut out = Vec::with_capacity(q.bits_per_symbol());
    q.soft_demap_into(y, h_hat, noise_var, &mut out);
    Ok(out)
}
