use crate::error::{Error, Result};

/// Dense f32 tensor in NHWC layout.
#[derive(Clone, Debug, PartialEq)]
pub struct Tensor {
    pub n: usize,
    pub h: usize,
    pub w: usize,
    pub c: usize,
    pub data: Vec<f32>,
}

impl Tensor {
    pub fn zeros(n: usize, h: usize, w: usize, c: usize) -> Self {
        Self {
            n,
            h,
            w,
            c,
            data: vec![0.0; n * h * w * c],
        }
    }

    pub fn from_vec(n: usize, h: usize, w: usize, c: usize, data: Vec<f32>) -> Result<Self> {
        if data.len() != n * h * w * c {
            return Err(Error::shape(n * h * w * c, data.len()));
        }
        Ok(Self { n, h, w, c, data })
    }

    pub fn same_shape(&self, other: &Tensor) -> bool {
        (self.n, self.h, self.w, self.c) == (other.n, other.h, other.w, other.c)
    }

    /// Number of pixels over the whole batch.
    pub fn pixels(&self) -> usize {
        self.n * self.h * self.w
    }

    pub fn shape_string(&self) -> String {
        format!("[{}, {}, {}, {}]", self.n, self.h, self.w, self.c)
    }

    pub fn map(&self, f: impl Fn(f32) -> f32) -> Tensor {
        Tensor {
            data: self.data.iter().map(|&v| f(v)).collect(),
            ..*self
        }
    }

    pub fn add_assign(&mut self, other: &Tensor) {
        debug_assert!(self.same_shape(other));
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
    }

    /// Adds `v[n][c]` to every pixel of sample n.
    pub fn add_per_sample_channel(&mut self, v: &[f32]) {
        let hw = self.h * self.w;
        let c = self.c;
        debug_assert_eq!(v.len(), self.n * c);
        for (i, px) in self.data.chunks_exact_mut(c).enumerate() {
            let row = &v[(i / hw) * c..(i / hw + 1) * c];
            for (a, b) in px.iter_mut().zip(row) {
                *a += b;
            }
        }
    }

    /// Sums over pixels of each sample, giving `[n][c]`.
    pub fn sum_per_sample_channel(&self) -> Vec<f32> {
        let hw = self.h * self.w;
        let c = self.c;
        let mut out = vec![0.0; self.n * c];
        for (i, px) in self.data.chunks_exact(c).enumerate() {
            let row = &mut out[(i / hw) * c..(i / hw + 1) * c];
            for (a, b) in row.iter_mut().zip(px) {
                *a += b;
            }
        }
        out
    }

    /// Per-sample channel means over all pixels, `[n][c]`.
    pub fn mean_per_sample_channel(&self) -> Vec<f32> {
        let inv = 1.0 / (self.h * self.w) as f32;
        self.sum_per_sample_channel().into_iter().map(|v| v * inv).collect()
    }

    /// Keeps the listed W (second spatial axis) columns.
    pub fn select_w(&self, cols: &[usize]) -> Tensor {
        let mut out = Tensor::zeros(self.n, self.h, cols.len(), self.c);
        for n in 0..self.n {
            for y in 0..self.h {
                for (j, &x) in cols.iter().enumerate() {
                    let src = ((n * self.h + y) * self.w + x) * self.c;
                    let dst = ((n * self.h + y) * cols.len() + j) * self.c;
                    out.data[dst..dst + self.c].copy_from_slice(&self.data[src..src + self.c]);
                }
            }
        }
        out
    }
}

/// Row-major `C = op(A) * op(B) + beta * C` with `op(A)` of shape m x k and
/// `op(B)` of shape k x n. `ta`/`tb` mean the stored matrix is transposed.
#[allow(clippy::too_many_arguments)]
pub fn gemm(m: usize, k: usize, n: usize, a: &[f32], ta: bool, b: &[f32], tb: bool, c: &mut [f32], beta: f32) {
    assert!(a.len() >= m * k && b.len() >= k * n && c.len() >= m * n, "gemm operand too small");
    let (rsa, csa) = if ta { (1, m as isize) } else { (k as isize, 1) };
    let (rsb, csb) = if tb { (1, k as isize) } else { (n as isize, 1) };
    if m == 0 || n == 0 {
        return;
    }
    // SAFETY: bounds checked above; strides describe row-major matrices of
    // exactly the asserted sizes, and `c` does not alias `a` or `b`.
    unsafe {
        matrixmultiply::sgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            rsa,
            csa,
            b.as_ptr(),
            rsb,
            csb,
            beta,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}
