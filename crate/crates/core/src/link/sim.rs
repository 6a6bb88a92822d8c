use std::fmt;
use std::io::Write;
use std::path::Path;
use std::str::FromStr;

use num_complex::Complex64;
use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::ldpc::LdpcCode;
use super::qam::Qam;
use crate::diffusion::DiffusionModel;
use crate::error::{Error, Result};
use crate::estimators::{exact_autocov, interpolate_time_linear, LmmseConfig, LmmseFilter};
use crate::grid::{
    generate_channel, observe_ls, snr_db_to_noise_var, ChannelGrid, NoisySample, Numerology, PilotPattern,
    Provenance, TdlProfile,
};
use crate::rng::{complex_normal, rng_from, tagged_seed};
use crate::srcnn::SrcnnModel;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum LinkEstimator {
    #[serde(rename = "ls")]
    Ls,
    #[serde(rename = "lmmse")]
    Lmmse,
    #[serde(rename = "ddpm+srcnn")]
    DdpmSrcnn,
    #[serde(rename = "genie")]
    Genie,
}

impl LinkEstimator {
    pub const ALL: [LinkEstimator; 4] = [Self::Ls, Self::Lmmse, Self::DdpmSrcnn, Self::Genie];

    pub fn tag(self) -> &'static str {
        match self {
            Self::Ls => "ls",
            Self::Lmmse => "lmmse",
            Self::DdpmSrcnn => "ddpm+srcnn",
            Self::Genie => "genie",
        }
    }
}

impl fmt::Display for LinkEstimator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

impl FromStr for LinkEstimator {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|e| e.tag() == s)
            .ok_or_else(|| Error::invalid(format!("unknown link estimator `{s}`")))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LinkConfig {
    pub qam_order: usize,
    pub snr_db_list: Vec<f64>,
    pub n_slots: usize,
    pub estimators: Vec<LinkEstimator>,
    pub profile: TdlProfile,
    pub seed: u64,
    pub ldpc_max_iters: usize,
}

impl Default for LinkConfig {
    fn default() -> Self {
        Self {
            qam_order: 64,
            snr_db_list: vec![5.0, 10.0, 15.0, 20.0],
            n_slots: 864,
            estimators: LinkEstimator::ALL.to_vec(),
            profile: TdlProfile::profile_a(),
            seed: 0,
            ldpc_max_iters: 25,
        }
    }
}

impl LinkConfig {
    pub fn validate(&self) -> Result<()> {
        Qam::new(self.qam_order)?;
        self.profile.validate()?;
        if self.n_slots == 0 {
            return Err(Error::invalid("link n_slots must be at least 1"));
        }
        if self.snr_db_list.is_empty() || self.snr_db_list.iter().any(|s| !s.is_finite()) {
            return Err(Error::invalid("link snr_db_list must be non-empty and finite"));
        }
        if self.estimators.is_empty() {
            return Err(Error::invalid("link needs at least one estimator"));
        }
        Ok(())
    }
}

/// One (estimator, SNR) point. `bits_total` counts information bits after
/// decoding; the uncoded fields count hard decisions on all coded bits.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BerRecord {
    pub estimator: LinkEstimator,
    pub snr_db: f64,
    pub bits_total: u64,
    pub bit_errors: u64,
    pub uncoded_bits_total: u64,
    pub uncoded_bit_errors: u64,
}

impl BerRecord {
    pub fn ber(&self) -> f64 {
        self.bit_errors as f64 / self.bits_total as f64
    }

    pub fn uncoded_ber(&self) -> f64 {
        self.uncoded_bit_errors as f64 / self.uncoded_bits_total as f64
    }
}

pub const BER_CSV_HEADER: &str = "estimator,snr_db,bits_total,bit_errors,ber";

pub fn write_ber_csv(path: &Path, records: &[BerRecord]) -> Result<()> {
    let mut out = format!("{BER_CSV_HEADER}\n");
    for r in records {
        out.push_str(&format!(
            "{},{},{},{},{:.6e}\n",
            r.estimator,
            r.snr_db,
            r.bits_total,
            r.bit_errors,
            r.ber()
        ));
    }
    let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(out.as_bytes()).map_err(|e| Error::io(path, e))
}

/// Reads rows written by [`write_ber_csv`]; uncoded counts are not stored
/// and come back as zero.
pub fn read_ber_csv(path: &Path) -> Result<Vec<BerRecord>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut lines = text.lines();
    if lines.next() != Some(BER_CSV_HEADER) {
        return Err(Error::format(path, format!("expected header `{BER_CSV_HEADER}`")));
    }
    lines
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            let bad = |what: &str| Error::format(path, format!("line {}: bad {what}", i + 2));
            let f: Vec<&str> = l.split(',').collect();
            if f.len() != 5 {
                return Err(bad("field count"));
            }
            Ok(BerRecord {
                estimator: f[0].parse().map_err(|_| bad("estimator"))?,
                snr_db: f[1].parse().map_err(|_| bad("snr_db"))?,
                bits_total: f[2].parse().map_err(|_| bad("bits_total"))?,
                bit_errors: f[3].parse().map_err(|_| bad("bit_errors"))?,
                uncoded_bits_total: 0,
                uncoded_bit_errors: 0,
            })
        })
        .collect()
}

/// Trained models used by the `ddpm+srcnn` estimator.
#[derive(Clone, Copy)]
pub struct LinkModels<'a> {
    pub ddpm: &'a DiffusionModel,
    pub srcnn: &'a SrcnnModel,
}

/// Everything drawn for one slot at one SNR. Shared by all estimators so
/// their comparison is paired.
#[derive(Clone, Debug)]
pub struct Slot {
    pub h: ChannelGrid,
    /// Normalized LS estimate at pilot positions.
    pub ls_pilots: ChannelGrid,
    pub info: Vec<Vec<u8>>,
    /// Coded bits in transmission order (interleaved, padded).
    pub tx_bits: Vec<u8>,
    /// Positions in `tx_bits` of codeword c's bit j: `bit_pos[c * n + j]`.
    pub bit_pos: Vec<usize>,
    pub data_re: Vec<(usize, usize)>,
    pub tx: Vec<Complex64>,
    pub rx: Vec<Complex64>,
    pub noise_var: f64,
}

/// Slot layout: data on every non-pilot RE, as many whole codewords as fit,
/// random filler bits after them, one seeded interleaver over all bits.
pub struct LinkChain {
    pub code: LdpcCode,
    pub qam: Qam,
    pub pattern: PilotPattern,
    pub data_re: Vec<(usize, usize)>,
    pub codewords_per_slot: usize,
    interleaver: Vec<usize>,
}

impl LinkChain {
    pub fn new(cfg: &LinkConfig, pattern: &PilotPattern) -> Result<Self> {
        cfg.validate()?;
        pattern.validate()?;
        let mut code = LdpcCode::link_default();
        code.max_iters = cfg.ldpc_max_iters;
        let qam = Qam::new(cfg.qam_order)?;
        let dims = pattern.dims;
        let data_re: Vec<(usize, usize)> = (0..dims.n_subcarriers)
            .flat_map(|sc| (0..dims.n_symbols).map(move |k| (sc, k)))
            .filter(|(sc, k)| !(pattern.symbol_indices.contains(k) && pattern.subcarrier_indices.contains(sc)))
            .collect();
        let slot_bits = data_re.len() * qam.bits_per_symbol();
        let codewords_per_slot = slot_bits / code.n();
        if codewords_per_slot == 0 {
            return Err(Error::invalid(format!(
                "{slot_bits} data bits per slot cannot carry a {}-bit codeword",
                code.n()
            )));
        }
        let mut interleaver: Vec<usize> = (0..slot_bits).collect();
        interleaver.shuffle(&mut rng_from(tagged_seed(cfg.seed, "interleaver", 0)));
        Ok(Self {
            code,
            qam,
            pattern: pattern.clone(),
            data_re,
            codewords_per_slot,
            interleaver,
        })
    }

    pub fn info_bits_per_slot(&self) -> usize {
        self.codewords_per_slot * self.code.k()
    }

    pub fn draw_slot(&self, profile: &TdlProfile, snr_db: f64, seed: u64) -> Result<Slot> {
        let h = generate_channel(profile, self.pattern.dims, tagged_seed(seed, "channel", 0))?;
        let ls_pilots = observe_ls(&h, &self.pattern, snr_db, tagged_seed(seed, "pilot-noise", 0))?;
        let mut rng = rng_from(tagged_seed(seed, "bits", 0));
        let n = self.code.n();
        let mut coded = Vec::with_capacity(self.interleaver.len());
        let mut info = Vec::with_capacity(self.codewords_per_slot);
        for _ in 0..self.codewords_per_slot {
            let u: Vec<u8> = (0..self.code.k()).map(|_| rng.gen_range(0..2)).collect();
            coded.extend(self.code.encode(&u)?);
            info.push(u);
        }
        while coded.len() < self.interleaver.len() {
            coded.push(rng.gen_range(0..2));
        }
        let mut tx_bits = vec![0u8; coded.len()];
        for (src, &dst) in self.interleaver.iter().enumerate() {
            tx_bits[dst] = coded[src];
        }
        let bit_pos = self.interleaver[..self.codewords_per_slot * n].to_vec();
        let tx = self.qam.modulate(&tx_bits)?;
        let noise_var = snr_db_to_noise_var(snr_db);
        let sd = noise_var.sqrt();
        let mut nrng = rng_from(tagged_seed(seed, "data-noise", 0));
        let rx = self
            .data_re
            .iter()
            .zip(&tx)
            .map(|(&(sc, k), &x)| h.get(sc, k) * x + complex_normal(&mut nrng) * sd)
            .collect();
        Ok(Slot {
            h,
            ls_pilots,
            info,
            tx_bits,
            bit_pos,
            data_re: self.data_re.clone(),
            tx,
            rx,
            noise_var,
        })
    }

    /// Equalizes with `h_hat`, demaps, decodes. Returns (info bit errors,
    /// uncoded bit errors over the codeword bits).
    pub fn receive(&self, slot: &Slot, h_hat: &ChannelGrid) -> Result<(u64, u64)> {
        if h_hat.dims() != self.pattern.dims {
            return Err(Error::shape(self.pattern.dims, h_hat.dims()));
        }
        let mut llr = Vec::with_capacity(slot.tx_bits.len());
        for (&(sc, k), &y) in slot.data_re.iter().zip(&slot.rx) {
            self.qam.soft_demap_into(y, h_hat.get(sc, k), slot.noise_var, &mut llr);
        }
        let n = self.code.n();
        let (mut coded_err, mut raw_err) = (0u64, 0u64);
        let mut cw_llr = vec![0.0; n];
        for (c, u) in slot.info.iter().enumerate() {
            for (j, l) in cw_llr.iter_mut().enumerate() {
                let p = slot.bit_pos[c * n + j];
                *l = llr[p];
                raw_err += ((*l < 0.0) as u8 != slot.tx_bits[p]) as u64;
            }
            let d = self.code.decode(&cw_llr)?;
            coded_err += d.info.iter().zip(u).filter(|(a, b)| a != b).count() as u64;
        }
        Ok((coded_err, raw_err))
    }
}

/// Simulates every (SNR, estimator) point over `cfg.n_slots` slots.
///
/// Slots are seeded by (seed, SNR index, slot index) only, so all estimators
/// see the same channels, bits and noise.
pub fn run_link(cfg: &LinkConfig, pattern: &PilotPattern, models: Option<LinkModels<'_>>) -> Result<Vec<BerRecord>> {
    cfg.validate()?;
    if cfg.estimators.contains(&LinkEstimator::DdpmSrcnn) {
        let m = models.ok_or_else(|| Error::MissingArtifact {
            stage: "run-link",
            what: "DDPM and SRCNN checkpoints for the ddpm+srcnn estimator".into(),
            hint: "train-ddpm and train-srcnn".into(),
        })?;
        m.srcnn
            .pattern()
            .symbol_indices
            .eq(&pattern.symbol_indices)
            .then_some(())
            .ok_or_else(|| Error::invalid("srcnn checkpoint was trained for a different pilot pattern"))?;
    }
    let chain = LinkChain::new(cfg, pattern)?;
    let cov = exact_autocov(&cfg.profile, &Numerology::default(), pattern)?;
    let mut out = Vec::new();
    for (si, &snr_db) in cfg.snr_db_list.iter().enumerate() {
        let lmmse = LmmseFilter::new(&cov, &LmmseConfig::from_snr_db(1.0, snr_db)?)?;
        let slots = (0..cfg.n_slots)
            .map(|i| chain.draw_slot(&cfg.profile, snr_db, tagged_seed(cfg.seed, "slot", (si * cfg.n_slots + i) as u64)))
            .collect::<Result<Vec<_>>>()?;
        let norm = (1.0 + snr_db_to_noise_var(snr_db)).sqrt();
        for &est in &cfg.estimators {
            let estimates: Vec<ChannelGrid> = match est {
                LinkEstimator::Genie => slots.iter().map(|s| s.h.clone()).collect(),
                LinkEstimator::Ls => slots
                    .iter()
                    .map(|s| interpolate_time_linear(&s.ls_pilots.scaled(norm), pattern.dims, &pattern.symbol_indices))
                    .collect::<Result<_>>()?,
                LinkEstimator::Lmmse => slots
                    .iter()
                    .map(|s| {
                        let f = lmmse.apply(&s.ls_pilots.scaled(norm))?;
                        interpolate_time_linear(&f, pattern.dims, &pattern.symbol_indices)
                    })
                    .collect::<Result<_>>()?,
                LinkEstimator::DdpmSrcnn => {
                    let m = models.expect("checked above");
                    let noisy = slots
                        .iter()
                        .map(|s| NoisySample::new(s.ls_pilots.clone(), snr_db, Provenance::Field, true))
                        .collect::<Result<Vec<_>>>()?;
                    let den = m.ddpm.denoise_batch(&noisy, tagged_seed(cfg.seed, "link-denoise", si as u64))?;
                    let lrs: Vec<ChannelGrid> = den.into_iter().map(|d| d.grid).collect();
                    m.srcnn.interpolate_batch(&lrs)?
                }
            };
            let (mut coded, mut raw) = (0u64, 0u64);
            for (s, hh) in slots.iter().zip(&estimates) {
                let (c, r) = chain.receive(s, hh)?;
                coded += c;
                raw += r;
            }
            out.push(BerRecord {
                estimator: est,
                snr_db,
                bits_total: (cfg.n_slots * chain.info_bits_per_slot()) as u64,
                bit_errors: coded,
                uncoded_bits_total: (cfg.n_slots * chain.codewords_per_slot * chain.code.n()) as u64,
                uncoded_bit_errors: raw,
            });
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{make_pilot_pattern, GridDims};

    fn chain() -> LinkChain {
        let p = make_pilot_pattern(GridDims::default(), &[2, 11], 7).unwrap();
        LinkChain::new(&LinkConfig::default(), &p).unwrap()
    }

    #[test]
    fn slot_layout() {
        let c = chain();
        assert_eq!(c.data_re.len(), 576);
        assert_eq!(c.codewords_per_slot, 2);
        assert_eq!(c.info_bits_per_slot(), 1158);
    }

    #[test]
    fn genie_at_high_snr_is_error_free() {
        let c = chain();
        let s = c.draw_slot(&TdlProfile::profile_a(), 40.0, 3).unwrap();
        assert_eq!(c.receive(&s, &s.h).unwrap(), (0, 0));
    }

    #[test]
    fn ddpm_estimator_needs_models() {
        let p = make_pilot_pattern(GridDims::default(), &[2, 11], 7).unwrap();
        let cfg = LinkConfig { n_slots: 1, ..Default::default() };
        assert!(matches!(run_link(&cfg, &p, None), Err(Error::MissingArtifact { .. })));
    }

    #[test]
    fn csv_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("ber.csv");
        let recs = vec![BerRecord {
            estimator: LinkEstimator::DdpmSrcnn,
            snr_db: 5.0,
            bits_total: 1000,
            bit_errors: 17,
            uncoded_bits_total: 0,
            uncoded_bit_errors: 0,
        }];
        write_ber_csv(&path, &recs).unwrap();
        assert_eq!(read_ber_csv(&path).unwrap(), recs);
    }
}
