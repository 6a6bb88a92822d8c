use rand::seq::SliceRandom;

use crate::error::{Error, Result};
use crate::rng::{rng_from, tagged_seed};

/// Channel LLRs are clipped to this magnitude before decoding.
pub const LLR_CLIP: f64 = 40.0;

/// Binary LDPC code with a systematic encoder and a normalized min-sum
/// decoder. Bits are `u8` 0/1; LLRs follow log P(0)/P(1).
#[derive(Clone, Debug)]
pub struct LdpcCode {
    n: usize,
    m: usize,
    /// Variable indices per check row.
    rows: Vec<Vec<usize>>,
    /// Column positions of the message bits inside a codeword.
    info_cols: Vec<usize>,
    /// Column position of the parity bit solved by each reduced row.
    parity_cols: Vec<usize>,
    /// Parity bit r = XOR of message bits selected by `gen_rows[r]`.
    gen_rows: Vec<Vec<u64>>,
    pub max_iters: usize,
    /// Min-sum normalization factor.
    pub scale: f64,
    // Edge layout for decoding: edges grouped by check, each edge's variable
    // and, per variable, the list of its edges.
    edge_var: Vec<usize>,
    row_start: Vec<usize>,
    var_edges: Vec<Vec<usize>>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Decoded {
    pub info: Vec<u8>,
    pub codeword: Vec<u8>,
    pub iterations: usize,
    /// Whether the hard decision satisfies every parity check.
    pub parity_ok: bool,
}

impl LdpcCode {
    /// Column-weight-`col_weight` code with `m` checks on `n` bits, edges
    /// spread by a seeded socket permutation. Seeds are retried until the
    /// parity matrix has full row rank and no repeated edges.
    pub fn random_regular(n: usize, m: usize, col_weight: usize, seed: u64) -> Result<Self> {
        if m == 0 || m >= n || col_weight < 2 || col_weight > m {
            return Err(Error::invalid(format!(
                "need 0 < m < n and 2 <= column weight <= m, got n={n} m={m} w={col_weight}"
            )));
        }
        for attempt in 0..256 {
            let mut rng = rng_from(tagged_seed(seed, "ldpc", attempt));
            let sockets: Vec<usize> = (0..n * col_weight).map(|s| s % m).collect();
            let mut cols: Vec<Vec<usize>> = vec![Vec::with_capacity(col_weight); n];
            let mut perm = sockets.clone();
            perm.shuffle(&mut rng);
            let mut ok = true;
            for (v, chunk) in perm.chunks(col_weight).enumerate() {
                let mut c = chunk.to_vec();
                c.sort_unstable();
                c.dedup();
                if c.len() != col_weight {
                    ok = false;
                    break;
                }
                cols[v] = c;
            }
            if !ok {
                continue;
            }
            let mut rows = vec![Vec::new(); m];
            for (v, c) in cols.iter().enumerate() {
                for &r in c {
                    rows[r].push(v);
                }
            }
            if rows.iter().any(|r| r.len() < 2) {
                continue;
            }
            if let Ok(code) = Self::from_rows(n, rows) {
                return Ok(code);
            }
        }
        Err(Error::Numerical("no full-rank LDPC construction found in 256 attempts".into()))
    }

    /// The link default: n = 1296, m = 717, column weight 3, rate 579/1296.
    pub fn link_default() -> Self {
        Self::random_regular(1296, 717, 3, 0x1d9c).expect("default LDPC construction")
    }

    /// Builds a code from check rows; fails if the rows are dependent.
    pub fn from_rows(n: usize, rows: Vec<Vec<usize>>) -> Result<Self> {
        let m = rows.len();
        if rows.iter().flatten().any(|&v| v >= n) {
            return Err(Error::invalid("check references a bit outside the codeword"));
        }
        let words = n.div_ceil(64);
        let mut h: Vec<Vec<u64>> = rows
            .iter()
            .map(|r| {
                let mut w = vec![0u64; words];
                for &v in r {
                    w[v / 64] ^= 1 << (v % 64);
                }
                w
            })
            .collect();
        // Gauss-Jordan elimination to [I | B] over pivot columns.
        let mut pivots = Vec::with_capacity(m);
        let mut r = 0;
        for col in 0..n {
            if r == m {
                break;
            }
            let bit = |row: &Vec<u64>| (row[col / 64] >> (col % 64)) & 1 == 1;
            let Some(p) = (r..m).find(|&i| bit(&h[i])) else {
                continue;
            };
            h.swap(r, p);
            let pivot = h[r].clone();
            for (i, row) in h.iter_mut().enumerate() {
                if i != r && bit(row) {
                    row.iter_mut().zip(&pivot).for_each(|(a, b)| *a ^= b);
                }
            }
            pivots.push(col);
            r += 1;
        }
        if r < m {
            return Err(Error::Numerical(format!("parity matrix has rank {r} < {m}")));
        }
        let is_pivot = {
            let mut p = vec![false; n];
            pivots.iter().for_each(|&c| p[c] = true);
            p
        };
        let info_cols: Vec<usize> = (0..n).filter(|&c| !is_pivot[c]).collect();
        let k = info_cols.len();
        let gen_rows = h
            .iter()
            .map(|row| {
                let mut g = vec![0u64; k.div_ceil(64)];
                for (j, &c) in info_cols.iter().enumerate() {
                    if (row[c / 64] >> (c % 64)) & 1 == 1 {
                        g[j / 64] |= 1 << (j % 64);
                    }
                }
                g
            })
            .collect();

        let mut edge_var = Vec::new();
        let mut row_start = vec![0];
        let mut var_edges = vec![Vec::new(); n];
        for r in &rows {
            for &v in r {
                var_edges[v].push(edge_var.len());
                edge_var.push(v);
            }
            row_start.push(edge_var.len());
        }
        Ok(Self {
            n,
            m,
            rows,
            info_cols,
            parity_cols: pivots,
            gen_rows,
            max_iters: 25,
            scale: 0.75,
            edge_var,
            row_start,
            var_edges,
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn k(&self) -> usize {
        self.n - self.m
    }

    pub fn rate(&self) -> f64 {
        self.k() as f64 / self.n as f64
    }

    pub fn rows(&self) -> &[Vec<usize>] {
        &self.rows
    }

    /// True if H c = 0 over GF(2).
    pub fn check(&self, codeword: &[u8]) -> bool {
        codeword.len() == self.n && self.rows.iter().all(|r| r.iter().fold(0u8, |a, &v| a ^ codeword[v]) == 0)
    }

    pub fn encode(&self, info: &[u8]) -> Result<Vec<u8>> {
        if info.len() != self.k() {
            return Err(Error::shape(format!("{} info bits", self.k()), info.len()));
        }
        let mut packed = vec![0u64; self.k().div_ceil(64)];
        for (j, &b) in info.iter().enumerate() {
            if b > 1 {
                return Err(Error::invalid("bits must be 0 or 1"));
            }
            packed[j / 64] |= (b as u64) << (j % 64);
        }
        let mut cw = vec![0u8; self.n];
        for (&c, &b) in self.info_cols.iter().zip(info) {
            cw[c] = b;
        }
        for (g, &c) in self.gen_rows.iter().zip(&self.parity_cols) {
            let ones: u32 = g.iter().zip(&packed).map(|(a, b)| (a & b).count_ones()).sum();
            cw[c] = (ones & 1) as u8;
        }
        Ok(cw)
    }

    pub fn info_bits(&self, codeword: &[u8]) -> Vec<u8> {
        self.info_cols.iter().map(|&c| codeword[c]).collect()
    }

    /// Normalized min-sum with flooding schedule and early exit.
    pub fn decode(&self, llrs: &[f64]) -> Result<Decoded> {
        if llrs.len() != self.n {
            return Err(Error::shape(format!("{} LLRs", self.n), llrs.len()));
        }
        let ch: Vec<f64> = llrs
            .iter()
            .map(|&l| if l.is_nan() { 0.0 } else { l.clamp(-LLR_CLIP, LLR_CLIP) })
            .collect();
        let e = self.edge_var.len();
        let mut c2v = vec![0.0f64; e];
        let mut v2c: Vec<f64> = self.edge_var.iter().map(|&v| ch[v]).collect();
        let mut hard: Vec<u8> = ch.iter().map(|&l| (l < 0.0) as u8).collect();
        if self.check(&hard) {
            return Ok(self.finish(hard, 0, true));
        }
        for it in 1..=self.max_iters {
            for r in 0..self.m {
                let span = self.row_start[r]..self.row_start[r + 1];
                let (mut min1, mut min2, mut arg, mut sign) = (f64::INFINITY, f64::INFINITY, 0, 1.0);
                for i in span.clone() {
                    let x = v2c[i];
                    if x < 0.0 {
                        sign = -sign;
                    }
                    let a = x.abs();
                    if a < min1 {
                        min2 = min1;
                        min1 = a;
                        arg = i;
                    } else if a < min2 {
                        min2 = a;
                    }
                }
                for i in span {
                    let mag = if i == arg { min2 } else { min1 };
                    let s = if v2c[i] < 0.0 { -sign } else { sign };
                    c2v[i] = self.scale * s * mag;
                }
            }
            for (v, edges) in self.var_edges.iter().enumerate() {
                let total = ch[v] + edges.iter().map(|&i| c2v[i]).sum::<f64>();
                hard[v] = (total < 0.0) as u8;
                for &i in edges {
                    v2c[i] = total - c2v[i];
                }
            }
            if self.check(&hard) {
                return Ok(self.finish(hard, it, true));
            }
        }
        Ok(self.finish(hard, self.max_iters, false))
    }

    fn finish(&self, codeword: Vec<u8>, iterations: usize, parity_ok: bool) -> Decoded {
        Decoded {
            info: self.info_bits(&codeword),
            codeword,
            iterations,
            parity_ok,
        }
    }
}

pub fn ldpc_encode(bits: &[u8], code: &LdpcCode) -> Result<Vec<u8>> {
    code.encode(bits)
}

pub fn ldpc_decode(llrs: &[f64], code: &LdpcCode) -> Result<Vec<u8>> {
    Ok(code.decode(llrs)?.info)
}
