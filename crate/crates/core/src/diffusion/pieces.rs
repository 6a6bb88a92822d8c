use rand::Rng;
use serde::{Deserialize, Serialize};

use super::schedule::NoiseSchedule;
use crate::error::{Error, Result};

/// One SNR group: data enters the chain at `entry_step` and is forwarded
/// over steps `(entry_step, forward_end_step]` during training.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PieceGroup {
    pub snr_db: f64,
    pub entry_step: usize,
    pub forward_end_step: usize,
}

/// SNR groups sorted by descending SNR; their forward ranges tile
/// `[entry_step(first), T_n]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PieceMap {
    groups: Vec<PieceGroup>,
    t_n: usize,
}

/// How far each group is forwarded during training.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ForwardMode {
    /// Each group stops where the next noisier group enters.
    #[default]
    Piecewise,
    /// Every group is forwarded all the way to T_n (ablation baseline).
    Traditional,
}

/// Maps each distinct SNR to its entry step and assigns forward ranges.
pub fn assign_pieces(snrs_db: &[f64], schedule: &NoiseSchedule) -> Result<PieceMap> {
    if snrs_db.is_empty() {
        return Err(Error::invalid("no SNR groups to assign"));
    }
    if let Some(s) = snrs_db.iter().find(|s| !s.is_finite()) {
        return Err(Error::invalid(format!("group SNR must be finite, got {s}")));
    }
    let mut sorted = snrs_db.to_vec();
    sorted.sort_by(|a, b| b.total_cmp(a));
    if sorted.windows(2).any(|w| w[0] == w[1]) {
        return Err(Error::invalid("mixture SNRs must be distinct"));
    }
    let entries: Vec<usize> = sorted.iter().map(|&s| schedule.snr_to_step(s)).collect();
    for (i, w) in entries.windows(2).enumerate() {
        if w[0] == w[1] {
            return Err(Error::invalid(format!(
                "SNRs {} dB and {} dB both map to step {}; the schedule (T_n = {}) is too coarse to separate them",
                sorted[i],
                sorted[i + 1],
                w[0],
                schedule.t_n()
            )));
        }
    }
    let t_n = schedule.t_n();
    let groups: Vec<PieceGroup> = sorted
        .iter()
        .zip(&entries)
        .enumerate()
        .map(|(k, (&snr_db, &entry_step))| PieceGroup {
            snr_db,
            entry_step,
            forward_end_step: entries.get(k + 1).copied().unwrap_or(t_n),
        })
        .collect();
    let map = PieceMap { groups, t_n };
    map.validate()?;
    Ok(map)
}

impl PieceMap {
    pub fn groups(&self) -> &[PieceGroup] {
        &self.groups
    }

    pub fn t_n(&self) -> usize {
        self.t_n
    }

    pub fn validate(&self) -> Result<()> {
        if self.groups.is_empty() {
            return Err(Error::invalid("piece map has no groups"));
        }
        for (k, g) in self.groups.iter().enumerate() {
            let want_end = self.groups.get(k + 1).map(|n| n.entry_step).unwrap_or(self.t_n);
            if g.forward_end_step != want_end || g.entry_step >= g.forward_end_step || g.entry_step == 0 {
                return Err(Error::invalid(format!(
                    "group {k} ({} dB) has forward range ({}, {}], which does not tile the chain{}",
                    g.snr_db,
                    g.entry_step,
                    g.forward_end_step,
                    if g.entry_step == self.t_n { "; its SNR enters at T_n" } else { "" }
                )));
            }
        }
        Ok(())
    }

    /// Index of the group with this SNR.
    pub fn group_of_snr(&self, snr_db: f64) -> Option<usize> {
        self.groups.iter().position(|g| (g.snr_db - snr_db).abs() < 1e-9)
    }

    /// Training step range `(lo, hi]` of group k.
    pub fn range(&self, k: usize, mode: ForwardMode) -> (usize, usize) {
        let g = &self.groups[k];
        match mode {
            ForwardMode::Piecewise => (g.entry_step, g.forward_end_step),
            ForwardMode::Traditional => (g.entry_step, self.t_n),
        }
    }
}

/// One training tuple: sample index, its group, entry step s and target t.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct TrainDraw {
    pub sample: usize,
    pub group: usize,
    pub s: usize,
    pub t: usize,
}

/// Counters kept by [`ForwardSampler`].
#[derive(Clone, Debug, Default, PartialEq)]
pub struct SamplerStats {
    pub draws: u64,
    /// Draws whose t fell outside the group's piecewise range.
    pub out_of_range: u64,
    pub per_group: Vec<u64>,
    /// For each step, a bitmask of the groups that produced it.
    pub sources_per_step: Vec<u64>,
}

impl SamplerStats {
    /// Steps that were trained from more than one group's data.
    pub fn shared_steps(&self) -> usize {
        self.sources_per_step.iter().filter(|m| m.count_ones() > 1).count()
    }
}

/// Draws (sample, step) training tuples according to a piece map.
#[derive(Clone, Debug)]
pub struct ForwardSampler {
    pieces: PieceMap,
    mode: ForwardMode,
    sample_groups: Vec<usize>,
    stats: SamplerStats,
}

impl ForwardSampler {
    /// `sample_snrs` holds the SNR of every training sample; each must be a
    /// group of `pieces`.
    pub fn new(pieces: &PieceMap, mode: ForwardMode, sample_snrs: &[f64]) -> Result<Self> {
        if pieces.groups.len() > 64 {
            return Err(Error::invalid("at most 64 SNR groups are supported"));
        }
        if sample_snrs.is_empty() {
            return Err(Error::invalid("training set is empty"));
        }
        let sample_groups = sample_snrs
            .iter()
            .map(|&s| {
                pieces.group_of_snr(s).ok_or_else(|| {
                    Error::invalid(format!(
                        "sample SNR {s} dB has no piece; groups are {:?}",
                        pieces.groups.iter().map(|g| g.snr_db).collect::<Vec<_>>()
                    ))
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            stats: SamplerStats {
                per_group: vec![0; pieces.groups.len()],
                sources_per_step: vec![0; pieces.t_n + 1],
                ..Default::default()
            },
            pieces: pieces.clone(),
            mode,
            sample_groups,
        })
    }

    pub fn draw<R: Rng + ?Sized>(&mut self, rng: &mut R) -> TrainDraw {
        let sample = rng.gen_range(0..self.sample_groups.len());
        let group = self.sample_groups[sample];
        let (lo, hi) = self.pieces.range(group, self.mode);
        let t = rng.gen_range(lo + 1..=hi);
        let (plo, phi) = self.pieces.range(group, ForwardMode::Piecewise);
        let st = &mut self.stats;
        st.draws += 1;
        st.per_group[group] += 1;
        st.sources_per_step[t] |= 1 << group;
        if t <= plo || t > phi {
            st.out_of_range += 1;
        }
        TrainDraw { sample, group, s: lo, t }
    }

    pub fn stats(&self) -> &SamplerStats {
        &self.stats
    }

    pub fn mode(&self) -> ForwardMode {
        self.mode
    }
}
