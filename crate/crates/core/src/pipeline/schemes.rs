use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::diffusion::{DiffusionModel, ForwardMode};
use crate::error::{Error, Result};
use crate::estimators::{ensemble_nmse_db, exact_autocov, interpolate_time_linear, LmmseConfig, LmmseFilter};
use crate::grid::{
    generate_channel, observe_ls, snr_db_to_noise_var, ChannelGrid, NoisySample, Numerology, PilotPattern,
    Provenance, TdlProfile,
};
use crate::rng::tagged_seed;
use crate::srcnn::{LrHrPair, SrcnnModel};

/// Estimation schemes compared in the NMSE sweep.
///
/// The learned ones differ in three switches: whether field targets are
/// denoised by the DDPM, whether generated grids augment the SRCNN training
/// set, and whether the DDPM was trained with piecewise forwarding.
///
/// | tag   | denoise | augment | forwarding  |
/// |-------|---------|---------|-------------|
/// | a-t   | no      | yes     | piecewise   |
/// | d-t   | yes     | no      | piecewise   |
/// | a-d   | yes     | yes     | traditional |
/// | a-d-t | yes     | yes     | piecewise   |
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Scheme {
    #[serde(rename = "ls")]
    Ls,
    #[serde(rename = "lmmse")]
    Lmmse,
    #[serde(rename = "a-t")]
    At,
    #[serde(rename = "d-t")]
    Dt,
    #[serde(rename = "a-d")]
    Ad,
    #[serde(rename = "a-d-t")]
    Adt,
}

impl Scheme {
    pub const ALL: [Scheme; 6] = [Self::Ls, Self::Lmmse, Self::At, Self::Dt, Self::Ad, Self::Adt];
    pub const LEARNED: [Scheme; 4] = [Self::At, Self::Dt, Self::Ad, Self::Adt];

    pub fn tag(self) -> &'static str {
        match self {
            Self::Ls => "ls",
            Self::Lmmse => "lmmse",
            Self::At => "a-t",
            Self::Dt => "d-t",
            Self::Ad => "a-d",
            Self::Adt => "a-d-t",
        }
    }

    pub fn is_learned(self) -> bool {
        Self::LEARNED.contains(&self)
    }

    /// Forwarding used to train the scheme's DDPM, if it has one.
    pub fn forward_mode(self) -> Option<ForwardMode> {
        match self {
            Self::Ls | Self::Lmmse => None,
            Self::Ad => Some(ForwardMode::Traditional),
            _ => Some(ForwardMode::Piecewise),
        }
    }

    pub fn denoises(self) -> bool {
        matches!(self, Self::Dt | Self::Ad | Self::Adt)
    }

    pub fn augments(self) -> bool {
        matches!(self, Self::At | Self::Ad | Self::Adt)
    }
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

impl FromStr for Scheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|x| x.tag() == s)
            .ok_or_else(|| Error::invalid(format!("unknown scheme `{s}` (expected ls, lmmse, a-t, d-t, a-d or a-d-t)")))
    }
}

/// SRCNN training pairs for a learned scheme.
///
/// `field` holds full-grid field samples: denoised ones for denoising
/// schemes, raw normalized LS ones (used unnormalized as targets)
/// otherwise. `generated` is used only by augmenting schemes.
pub fn training_pairs(
    scheme: Scheme,
    field: &[NoisySample],
    generated: &[NoisySample],
    pattern: &PilotPattern,
) -> Result<Vec<LrHrPair>> {
    if !scheme.is_learned() {
        return Err(Error::invalid(format!("scheme `{scheme}` has no trained interpolator")));
    }
    let want = if scheme.denoises() { Provenance::Denoised } else { Provenance::Field };
    let mut pairs = Vec::with_capacity(field.len() + generated.len());
    for s in field {
        if s.provenance() != want {
            return Err(Error::invalid(format!(
                "scheme `{scheme}` takes {want} field targets, got {}",
                s.provenance()
            )));
        }
        let hr = if want == Provenance::Field {
            s.grid.scaled((1.0 + s.noise_var()).sqrt())
        } else {
            s.grid.clone()
        };
        pairs.push(LrHrPair::from_hr(hr, pattern, want)?);
    }
    if scheme.augments() {
        for s in generated {
            if s.provenance() != Provenance::Generated {
                return Err(Error::invalid(format!("augmentation sample has provenance {}", s.provenance())));
            }
            pairs.push(LrHrPair::from_hr(s.grid.clone(), pattern, Provenance::Generated)?);
        }
    }
    Ok(pairs)
}

/// Fresh test channels of one profile observed at one SNR.
#[derive(Clone, Debug)]
pub struct EvalSet {
    pub snr_db: f64,
    pub truth: Vec<ChannelGrid>,
    /// Normalized LS estimates at the pattern's pilot positions.
    pub ls: Vec<ChannelGrid>,
}

impl EvalSet {
    pub fn draw(profile: &TdlProfile, pattern: &PilotPattern, snr_db: f64, n: usize, seed: u64) -> Result<Self> {
        let mut truth = Vec::with_capacity(n);
        let mut ls = Vec::with_capacity(n);
        for i in 0..n as u64 {
            let h = generate_channel(profile, pattern.dims, tagged_seed(seed, "eval-channel", i))?;
            ls.push(observe_ls(&h, pattern, snr_db, tagged_seed(seed, "eval-noise", i))?);
            truth.push(h);
        }
        Ok(Self { snr_db, truth, ls })
    }

    pub fn raw_ls(&self) -> Vec<ChannelGrid> {
        let s = (1.0 + snr_db_to_noise_var(self.snr_db)).sqrt();
        self.ls.iter().map(|g| g.scaled(s)).collect()
    }

    pub fn nmse_db(&self, estimates: &[ChannelGrid]) -> Result<f64> {
        if estimates.len() != self.truth.len() {
            return Err(Error::shape(self.truth.len(), estimates.len()));
        }
        ensemble_nmse_db(estimates.iter().zip(&self.truth))
    }
}

/// LS or LMMSE at the pilots, then linear interpolation along time. LMMSE
/// uses the exact ensemble covariance of `profile`.
pub fn classical_estimates(
    scheme: Scheme,
    set: &EvalSet,
    profile: &TdlProfile,
    pattern: &PilotPattern,
) -> Result<Vec<ChannelGrid>> {
    let raw = set.raw_ls();
    let pilots = match scheme {
        Scheme::Ls => raw,
        Scheme::Lmmse => {
            let cov = exact_autocov(profile, &Numerology::default(), pattern)?;
            let f = LmmseFilter::new(&cov, &LmmseConfig::from_snr_db(1.0, set.snr_db)?)?;
            raw.iter().map(|g| f.apply(g)).collect::<Result<_>>()?
        }
        other => return Err(Error::invalid(format!("`{other}` is not a classical scheme"))),
    };
    pilots
        .iter()
        .map(|g| interpolate_time_linear(g, pattern.dims, &pattern.symbol_indices))
        .collect()
}

/// Learned estimate: optional DDPM denoising of the pilot grid, then SRCNN.
pub fn learned_estimates(
    scheme: Scheme,
    set: &EvalSet,
    ddpm: Option<&DiffusionModel>,
    srcnn: &SrcnnModel,
    seed: u64,
) -> Result<Vec<ChannelGrid>> {
    if !scheme.is_learned() {
        return Err(Error::invalid(format!("`{scheme}` is not a learned scheme")));
    }
    let lrs = if scheme.denoises() {
        let m = ddpm.ok_or_else(|| Error::invalid(format!("scheme `{scheme}` needs a DDPM")))?;
        let noisy = set
            .ls
            .iter()
            .map(|g| NoisySample::new(g.clone(), set.snr_db, Provenance::Field, true))
            .collect::<Result<Vec<_>>>()?;
        m.denoise_batch(&noisy, seed)?.into_iter().map(|s| s.grid).collect()
    } else {
        set.raw_ls()
    };
    srcnn.interpolate_batch(&lrs)
}
