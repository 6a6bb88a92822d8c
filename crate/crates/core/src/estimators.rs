//! Classical pilot-based estimators (LS and LMMSE) and the NMSE metric.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{delay_phasors, ChannelGrid, GridDims, Numerology, PilotPattern, TdlProfile};

/// NMSE reported for an exact estimate, in place of minus infinity.
pub const NMSE_FLOOR_DB: f64 = -300.0;

#[derive(Clone, Debug, PartialEq)]
pub struct LsEstimate {
    /// Pilot-position estimate; scaled by (1 + noise_var)^(-1/2) when `normalized`.
    pub grid: ChannelGrid,
    pub noise_var: f64,
    pub normalized: bool,
}

impl LsEstimate {
    /// The unnormalized estimate conj(X_p) * Y_p.
    pub fn raw(&self) -> ChannelGrid {
        if self.normalized {
            self.grid.scaled((1.0 + self.noise_var).sqrt())
        } else {
            self.grid.clone()
        }
    }
}

/// Elementwise LS at pilot positions, followed by power normalization so
/// that signal plus noise has unit power.
pub fn ls_estimate(received_pilots: &ChannelGrid, pattern: &PilotPattern, noise_var: f64) -> Result<LsEstimate> {
    if received_pilots.dims() != pattern.pilot_dims() {
        return Err(Error::shape(pattern.pilot_dims(), received_pilots.dims()));
    }
    if !(noise_var >= 0.0 && noise_var.is_finite()) {
        return Err(Error::invalid(format!("noise_var must be finite and >= 0, got {noise_var}")));
    }
    let scale = (1.0 + noise_var).sqrt().recip();
    let values = received_pilots
        .values()
        .iter()
        .zip(&pattern.pilot_values)
        .map(|(y, x)| x.conj() * y * scale)
        .collect();
    Ok(LsEstimate {
        grid: ChannelGrid::from_values(received_pilots.dims(), values)?,
        noise_var,
        normalized: true,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CovSource {
    ExactEnsemble,
    Empirical,
}

/// Autocovariance of the vectorized pilot grid (row-major element order).
#[derive(Clone, Debug, PartialEq)]
pub struct AutoCov {
    matrix: DMatrix<Complex64>,
    source: CovSource,
}

impl AutoCov {
    pub fn new(matrix: DMatrix<Complex64>, source: CovSource) -> Result<Self> {
        if !matrix.is_square() {
            return Err(Error::shape("square matrix", format!("{}x{}", matrix.nrows(), matrix.ncols())));
        }
        let n = matrix.nrows();
        for i in 0..n {
            for j in 0..=i {
                if (matrix[(i, j)] - matrix[(j, i)].conj()).norm() > 1e-10 {
                    return Err(Error::Numerical(format!("autocovariance not Hermitian at ({i}, {j})")));
                }
            }
        }
        let cov = Self { matrix, source };
        let trace = cov.trace();
        let min_eig = cov.min_eigenvalue();
        if min_eig < -1e-8 * trace / n as f64 {
            return Err(Error::Numerical(format!(
                "autocovariance not positive semidefinite (min eigenvalue {min_eig:e})"
            )));
        }
        Ok(cov)
    }

    pub fn matrix(&self) -> &DMatrix<Complex64> {
        &self.matrix
    }

    pub fn source(&self) -> CovSource {
        self.source
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn trace(&self) -> f64 {
        (0..self.dim()).map(|i| self.matrix[(i, i)].re).sum()
    }

    pub fn min_eigenvalue(&self) -> f64 {
        self.eigenvalues().into_iter().fold(f64::INFINITY, f64::min)
    }

    /// Eigenvalues via the real symmetric embedding [[A, -B], [B, A]] of
    /// A + jB, whose spectrum is the Hermitian spectrum with each value doubled.
    pub fn eigenvalues(&self) -> Vec<f64> {
        let n = self.dim();
        let emb = DMatrix::from_fn(2 * n, 2 * n, |i, j| {
            let z = self.matrix[(i % n, j % n)];
            match (i < n, j < n) {
                (true, true) | (false, false) => z.re,
                (true, false) => -z.im,
                (false, true) => z.im,
            }
        });
        let mut ev: Vec<f64> = emb.symmetric_eigenvalues().iter().copied().collect();
        ev.sort_by(f64::total_cmp);
        ev.into_iter().step_by(2).collect()
    }
}

/// Sample autocovariance (1/n) * sum x x^H of vectorized grids,
/// Hermitian-symmetrized. Evaluation-only: the inputs are noiseless grids.
pub fn estimate_autocov(pure_pilot_grids: &[ChannelGrid]) -> Result<AutoCov> {
    if pure_pilot_grids.len() < 2 {
        return Err(Error::invalid(format!(
            "autocovariance needs at least 2 samples, got {}",
            pure_pilot_grids.len()
        )));
    }
    let dims = pure_pilot_grids[0].dims();
    if let Some(g) = pure_pilot_grids.iter().find(|g| g.dims() != dims) {
        return Err(Error::shape(dims, g.dims()));
    }
    let n = dims.len();
    let mut r = DMatrix::<Complex64>::zeros(n, n);
    for g in pure_pilot_grids {
        let x = DVector::from_column_slice(g.values());
        r.gerc(Complex64::new(1.0, 0.0), &x, &x, Complex64::new(1.0, 0.0));
    }
    r /= Complex64::new(pure_pilot_grids.len() as f64, 0.0);
    let r = (&r + r.adjoint()) * Complex64::new(0.5, 0.0);
    AutoCov::new(r, CovSource::Empirical)
}

/// Closed-form ensemble autocovariance of the pilot grid for a profile:
/// R = sum_l p_l exp(-j 2 pi (f - f') tau_l) rho^|k - k'|.
pub fn exact_autocov(profile: &TdlProfile, numerology: &Numerology, pattern: &PilotPattern) -> Result<AutoCov> {
    profile.validate()?;
    pattern.validate()?;
    let powers = profile.normalized_powers();
    let rho = profile.time_correlation(numerology);
    let n_sc_total = pattern.dims.n_subcarriers;
    let phasors = delay_phasors(profile, n_sc_total, numerology);
    let n_taps = powers.len();
    let pd = pattern.pilot_dims();
    let idx = |e: usize| (pattern.subcarrier_indices[e / pd.n_symbols], pattern.symbol_indices[e % pd.n_symbols]);
    let n = pd.len();
    let r = DMatrix::from_fn(n, n, |a, b| {
        let (fa, ka) = idx(a);
        let (fb, kb) = idx(b);
        let freq: Complex64 = (0..n_taps)
            .map(|l| phasors[fa * n_taps + l] * phasors[fb * n_taps + l].conj() * powers[l])
            .sum();
        freq * rho.powi(ka.abs_diff(kb) as i32)
    });
    AutoCov::new(r, CovSource::ExactEnsemble)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LmmseConfig {
    /// Constellation constant; 1 for unit-modulus pilots.
    pub beta: f64,
    pub snr_linear: f64,
}

impl LmmseConfig {
    pub fn new(beta: f64, snr_linear: f64) -> Result<Self> {
        let cfg = Self { beta, snr_linear };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_snr_db(beta: f64, snr_db: f64) -> Result<Self> {
        Self::new(beta, 10f64.powf(snr_db / 10.0))
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.beta > 0.0 && self.beta.is_finite() && self.snr_linear > 0.0 && self.snr_linear.is_finite()) {
            return Err(Error::invalid(format!(
                "LMMSE beta and snr must be finite and positive, got beta={} snr={}",
                self.beta, self.snr_linear
            )));
        }
        Ok(())
    }
}

/// Precomputed W = R (R + (beta/snr) I)^-1, for filtering many estimates.
#[derive(Clone, Debug)]
pub struct LmmseFilter {
    w: DMatrix<Complex64>,
}

impl LmmseFilter {
    pub fn new(cov: &AutoCov, cfg: &LmmseConfig) -> Result<Self> {
        cfg.validate()?;
        let n = cov.dim();
        let lambda = cfg.beta / cfg.snr_linear;
        let a = cov.matrix() + DMatrix::<Complex64>::identity(n, n) * Complex64::new(lambda, 0.0);
        // Both R and A are Hermitian, so W^H = A^-1 R.
        let chol = a.cholesky().ok_or_else(|| {
            Error::Numerical(format!(
                "R + (beta/snr) I is not positive definite (beta/snr = {lambda:e}, trace R = {:e})",
                cov.trace()
            ))
        })?;
        let wh = chol.solve(cov.matrix());
        Ok(Self { w: wh.adjoint() })
    }

    pub fn matrix(&self) -> &DMatrix<Complex64> {
        &self.w
    }

    /// Applies W to the vectorized raw LS grid.
    pub fn apply(&self, raw_ls: &ChannelGrid) -> Result<ChannelGrid> {
        if raw_ls.dims().len() != self.w.nrows() {
            return Err(Error::shape(self.w.nrows(), raw_ls.dims().len()));
        }
        let x = DVector::from_column_slice(raw_ls.values());
        let y = &self.w * x;
        ChannelGrid::from_values(raw_ls.dims(), y.iter().copied().collect())
    }
}

/// LMMSE filtering of an LS estimate over the full vectorized pilot grid.
pub fn lmmse_estimate(ls: &LsEstimate, cov: &AutoCov, cfg: &LmmseConfig) -> Result<ChannelGrid> {
    if cov.dim() != ls.grid.dims().len() {
        return Err(Error::shape(cov.dim(), ls.grid.dims().len()));
    }
    LmmseFilter::new(cov, cfg)?.apply(&ls.raw())
}

/// 10 log10(||estimate - truth||^2 / ||truth||^2), floored at [`NMSE_FLOOR_DB`].
pub fn nmse_db(estimate: &ChannelGrid, truth: &ChannelGrid) -> Result<f64> {
    if estimate.dims() != truth.dims() {
        return Err(Error::shape(truth.dims(), estimate.dims()));
    }
    let num: f64 = estimate
        .values()
        .iter()
        .zip(truth.values())
        .map(|(a, b)| (a - b).norm_sqr())
        .sum();
    let den = truth.energy();
    ratio_db(num, den)
}

/// Ensemble NMSE: total error energy over total truth energy.
pub fn ensemble_nmse_db<'a>(pairs: impl IntoIterator<Item = (&'a ChannelGrid, &'a ChannelGrid)>) -> Result<f64> {
    let (mut num, mut den) = (0.0, 0.0);
    for (est, truth) in pairs {
        if est.dims() != truth.dims() {
            return Err(Error::shape(truth.dims(), est.dims()));
        }
        num += est
            .values()
            .iter()
            .zip(truth.values())
            .map(|(a, b)| (a - b).norm_sqr())
            .sum::<f64>();
        den += truth.energy();
    }
    ratio_db(num, den)
}

fn ratio_db(num: f64, den: f64) -> Result<f64> {
    if den <= 0.0 || !den.is_finite() {
        return Err(Error::invalid("NMSE reference has zero energy"));
    }
    if num == 0.0 {
        return Ok(NMSE_FLOOR_DB);
    }
    Ok((10.0 * (num / den).log10()).max(NMSE_FLOOR_DB))
}

/// Per-subcarrier linear interpolation along time between pilot symbols,
/// held constant beyond the outermost pilots.
pub fn interpolate_time_linear(lr: &ChannelGrid, target: GridDims, pilot_symbols: &[usize]) -> Result<ChannelGrid> {
    let ld = lr.dims();
    if ld.n_symbols != pilot_symbols.len() {
        return Err(Error::shape(
            format!("{} pilot columns", pilot_symbols.len()),
            format!("{} columns", ld.n_symbols),
        ));
    }
    if ld.n_subcarriers != target.n_subcarriers {
        return Err(Error::shape(target.n_subcarriers, ld.n_subcarriers));
    }
    if pilot_symbols.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::invalid("pilot symbols must be sorted and unique"));
    }
    if let Some(&bad) = pilot_symbols.iter().find(|&&s| s >= target.n_symbols) {
        return Err(Error::invalid(format!("pilot symbol {bad} outside target grid {target}")));
    }
    // For each target symbol: (left column, right column, weight on right).
    let plan: Vec<(usize, usize, f64)> = (0..target.n_symbols)
        .map(|k| {
            let right = pilot_symbols.partition_point(|&p| p < k);
            if right == 0 {
                (0, 0, 0.0)
            } else if right == pilot_symbols.len() {
                (right - 1, right - 1, 0.0)
            } else if pilot_symbols[right] == k {
                (right, right, 0.0)
            } else {
                let (a, b) = (pilot_symbols[right - 1], pilot_symbols[right]);
                (right - 1, right, (k - a) as f64 / (b - a) as f64)
            }
        })
        .collect();
    Ok(ChannelGrid::from_fn(target, |sc, k| {
        let (l, r, w) = plan[k];
        lr.get(sc, l) * (1.0 - w) + lr.get(sc, r) * w
    }))
}
