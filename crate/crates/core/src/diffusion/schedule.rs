use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// An interior schedule knot: the value of abar at a given step.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Knot {
    pub step: usize,
    pub abar: f64,
}

/// Noise schedule over steps 1..=T_n. Vectors are indexed by `t - 1`.
///
/// 1 - abar_t is piecewise linear in t, so within a piece every step adds
/// the same noise power.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NoiseSchedule {
    t_n: usize,
    t_d_anchor: usize,
    knots: Vec<Knot>,
    abar: Vec<f64>,
    alpha: Vec<f64>,
    sigma2: Vec<f64>,
}

/// SNR whose step is stored as `t_d_anchor`: equal signal and noise power.
pub const ANCHOR_SNR_DB: f64 = 0.0;

impl NoiseSchedule {
    /// Builds the schedule through (1, abar_start), the interior knots and
    /// (T_n, abar_end).
    pub fn build(abar_start: f64, abar_end: f64, t_n: usize, interior: &[Knot]) -> Result<Self> {
        if !(0.0 < abar_end && abar_end < abar_start && abar_start < 1.0) {
            return Err(Error::invalid(format!(
                "need 0 < abar_end < abar_start < 1, got start={abar_start} end={abar_end}"
            )));
        }
        if t_n < 2 {
            return Err(Error::invalid(format!("T_n must be at least 2, got {t_n}")));
        }
        let mut knots = Vec::with_capacity(interior.len() + 2);
        knots.push(Knot { step: 1, abar: abar_start });
        knots.extend_from_slice(interior);
        knots.push(Knot { step: t_n, abar: abar_end });
        for w in knots.windows(2) {
            if w[1].step <= w[0].step {
                return Err(Error::invalid(format!(
                    "schedule knots must have increasing steps within [1, {t_n}], got {} then {}",
                    w[0].step, w[1].step
                )));
            }
            if !(w[1].abar < w[0].abar) {
                return Err(Error::invalid(format!(
                    "schedule knot values must decrease, got abar {} at step {} then {} at step {}",
                    w[0].abar, w[0].step, w[1].abar, w[1].step
                )));
            }
        }

        let mut abar = Vec::with_capacity(t_n);
        abar.push(abar_start);
        for w in knots.windows(2) {
            let z = (w[0].abar - w[1].abar) / (w[1].step - w[0].step) as f64;
            for t in w[0].step + 1..=w[1].step {
                abar.push(if t == w[1].step {
                    w[1].abar
                } else {
                    w[0].abar - (t - w[0].step) as f64 * z
                });
            }
        }
        Ok(Self::from_abar(abar, interior.to_vec()))
    }

    /// Single-piece linear schedule.
    pub fn linear(abar_start: f64, abar_end: f64, t_n: usize) -> Result<Self> {
        Self::build(abar_start, abar_end, t_n, &[])
    }

    fn from_abar(abar: Vec<f64>, interior: Vec<Knot>) -> Self {
        let t_n = abar.len();
        let mut alpha = Vec::with_capacity(t_n);
        let mut sigma2 = Vec::with_capacity(t_n);
        for t in 1..=t_n {
            let ab = abar[t - 1];
            let ab_prev = if t == 1 { 1.0 } else { abar[t - 2] };
            let a = ab / ab_prev;
            alpha.push(a);
            sigma2.push(if t == 1 { 0.0 } else { (1.0 - a) * (1.0 - ab_prev) / (1.0 - ab) });
        }
        let mut s = Self {
            t_n,
            t_d_anchor: 1,
            knots: interior,
            abar,
            alpha,
            sigma2,
        };
        s.t_d_anchor = s.snr_to_step(ANCHOR_SNR_DB);
        s
    }

    /// Checks the invariants; used when loading a schedule from disk.
    pub fn validate(&self) -> Result<()> {
        let n = self.t_n;
        if n < 2 || self.abar.len() != n || self.alpha.len() != n || self.sigma2.len() != n {
            return Err(Error::invalid("schedule vectors do not match T_n"));
        }
        if self.abar.iter().any(|a| !(*a > 0.0 && *a < 1.0)) {
            return Err(Error::invalid("abar must lie in (0, 1)"));
        }
        if self.abar.windows(2).any(|w| w[1] >= w[0]) {
            return Err(Error::invalid("abar must be strictly decreasing"));
        }
        let rebuilt = Self::build(self.abar[0], self.abar[n - 1], n, &self.knots)?;
        if rebuilt != *self {
            return Err(Error::invalid("schedule vectors disagree with their knots"));
        }
        Ok(())
    }

    pub fn t_n(&self) -> usize {
        self.t_n
    }

    /// Step at which an LS estimate at 0 dB enters the chain.
    pub fn t_d_anchor(&self) -> usize {
        self.t_d_anchor
    }

    pub fn knots(&self) -> &[Knot] {
        &self.knots
    }

    /// abar_t for t in 0..=T_n, with abar_0 = 1.
    #[inline]
    pub fn abar(&self, t: usize) -> f64 {
        if t == 0 {
            1.0
        } else {
            self.abar[t - 1]
        }
    }

    #[inline]
    pub fn alpha(&self, t: usize) -> f64 {
        self.alpha[t - 1]
    }

    #[inline]
    pub fn sigma2(&self, t: usize) -> f64 {
        self.sigma2[t - 1]
    }

    pub fn abar_vec(&self) -> &[f64] {
        &self.abar
    }

    pub fn alpha_vec(&self) -> &[f64] {
        &self.alpha
    }

    pub fn sigma2_vec(&self) -> &[f64] {
        &self.sigma2
    }

    /// Linear SNR abar_t / (1 - abar_t) of the state at step t.
    pub fn snr_of_step(&self, t: usize) -> Result<f64> {
        if t == 0 || t > self.t_n {
            return Err(Error::invalid(format!("step {t} outside [1, {}]", self.t_n)));
        }
        let a = self.abar(t);
        Ok(a / (1.0 - a))
    }

    /// Smallest t whose noise power 1 - abar_t reaches 1/(1 + snr), clamped
    /// to [1, T_n]. `+inf` maps to 1 and `-inf` to T_n.
    pub fn snr_to_step(&self, snr_db: f64) -> usize {
        let p_noise = noise_power_of_snr_db(snr_db);
        let t = self.abar.partition_point(|a| 1.0 - a < p_noise) + 1;
        t.clamp(1, self.t_n)
    }
}

/// P_noise = 1 / (1 + snr) for a unit-power signal-plus-noise mix.
pub fn noise_power_of_snr_db(snr_db: f64) -> f64 {
    if snr_db == f64::INFINITY {
        0.0
    } else if snr_db == f64::NEG_INFINITY {
        1.0
    } else {
        1.0 / (1.0 + 10f64.powf(snr_db / 10.0))
    }
}
