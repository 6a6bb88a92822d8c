//! Time-frequency channel grids: a tapped-delay-line channel generator,
//! pilot patterns, AWGN, and mixed-SNR field datasets.
//!
//! Grids are stored row-major as `[subcarrier][symbol]`.

use num_complex::Complex64;
use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{complex_normal, rng_from, tagged_seed};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct GridDims {
    pub n_subcarriers: usize,
    pub n_symbols: usize,
}

impl GridDims {
    pub fn new(n_subcarriers: usize, n_symbols: usize) -> Result<Self> {
        if n_subcarriers == 0 || n_symbols == 0 {
            return Err(Error::invalid(format!(
                "grid dims must be positive, got {n_subcarriers}x{n_symbols}"
            )));
        }
        Ok(Self {
            n_subcarriers,
            n_symbols,
        })
    }

    /// Number of resource elements.
    pub fn len(&self) -> usize {
        self.n_subcarriers * self.n_symbols
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

impl std::fmt::Display for GridDims {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}x{}", self.n_subcarriers, self.n_symbols)
    }
}

impl Default for GridDims {
    /// 48 subcarriers by 14 symbols (12 data + 2 pilot symbols).
    fn default() -> Self {
        Self {
            n_subcarriers: 48,
            n_symbols: 14,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChannelGrid {
    dims: GridDims,
    values: Vec<Complex64>,
}

impl ChannelGrid {
    pub fn zeros(dims: GridDims) -> Self {
        Self {
            dims,
            values: vec![Complex64::new(0.0, 0.0); dims.len()],
        }
    }

    pub fn from_values(dims: GridDims, values: Vec<Complex64>) -> Result<Self> {
        if values.len() != dims.len() {
            return Err(Error::shape(dims.len(), values.len()));
        }
        if values.iter().any(|v| !v.re.is_finite() || !v.im.is_finite()) {
            return Err(Error::Numerical("channel grid contains NaN or Inf".into()));
        }
        Ok(Self { dims, values })
    }

    pub fn from_fn(dims: GridDims, mut f: impl FnMut(usize, usize) -> Complex64) -> Self {
        let mut values = Vec::with_capacity(dims.len());
        for sc in 0..dims.n_subcarriers {
            for sym in 0..dims.n_symbols {
                values.push(f(sc, sym));
            }
        }
        Self { dims, values }
    }

    pub fn dims(&self) -> GridDims {
        self.dims
    }

    pub fn values(&self) -> &[Complex64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [Complex64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<Complex64> {
        self.values
    }

    #[inline]
    pub fn get(&self, subcarrier: usize, symbol: usize) -> Complex64 {
        self.values[subcarrier * self.dims.n_symbols + symbol]
    }

    #[inline]
    pub fn set(&mut self, subcarrier: usize, symbol: usize, v: Complex64) {
        self.values[subcarrier * self.dims.n_symbols + symbol] = v;
    }

    /// Mean of |h|^2 over all elements.
    pub fn mean_power(&self) -> f64 {
        self.energy() / self.values.len() as f64
    }

    /// Squared Frobenius norm.
    pub fn energy(&self) -> f64 {
        self.values.iter().map(|v| v.norm_sqr()).sum()
    }

    pub fn scaled(&self, s: f64) -> Self {
        Self {
            dims: self.dims,
            values: self.values.iter().map(|v| v * s).collect(),
        }
    }

    /// Sub-grid made of the given symbol columns, all subcarriers kept.
    pub fn select_symbols(&self, symbols: &[usize]) -> Result<Self> {
        if let Some(&bad) = symbols.iter().find(|&&s| s >= self.dims.n_symbols) {
            return Err(Error::invalid(format!(
                "symbol index {bad} outside grid with {} symbols",
                self.dims.n_symbols
            )));
        }
        let dims = GridDims::new(self.dims.n_subcarriers, symbols.len())?;
        Ok(Self::from_fn(dims, |sc, j| self.get(sc, symbols[j])))
    }

    pub fn is_finite(&self) -> bool {
        self.values
            .iter()
            .all(|v| v.re.is_finite() && v.im.is_finite())
    }
}

/// OFDM numerology used to turn tap delays and Doppler into grid correlation.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Numerology {
    pub subcarrier_spacing_hz: f64,
    pub symbol_duration_s: f64,
}

impl Default for Numerology {
    fn default() -> Self {
        Self {
            subcarrier_spacing_hz: 15e3,
            symbol_duration_s: 1e-3 / 14.0,
        }
    }
}

/// Tapped-delay-line power/delay profile.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TdlProfile {
    pub name: String,
    /// Tap delays in seconds, strictly increasing from a non-negative start.
    pub tap_delays: Vec<f64>,
    /// Relative tap powers in dB.
    pub tap_powers_db: Vec<f64>,
    /// Maximum Doppler shift in Hz.
    pub doppler_hz: f64,
}

const DS_NS: f64 = 300.0;

impl TdlProfile {
    pub fn validate(&self) -> Result<()> {
        if self.tap_delays.is_empty() {
            return Err(Error::invalid(format!("profile {}: no taps", self.name)));
        }
        if self.tap_delays.len() != self.tap_powers_db.len() {
            return Err(Error::invalid(format!(
                "profile {}: {} delays but {} powers",
                self.name,
                self.tap_delays.len(),
                self.tap_powers_db.len()
            )));
        }
        if self.tap_delays[0] < 0.0 || !self.tap_delays.iter().all(|d| d.is_finite()) {
            return Err(Error::invalid(format!(
                "profile {}: delays must be finite and non-negative",
                self.name
            )));
        }
        if self.tap_delays.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::invalid(format!(
                "profile {}: delays must be strictly increasing",
                self.name
            )));
        }
        if !self.tap_powers_db.iter().all(|p| p.is_finite()) {
            return Err(Error::invalid(format!(
                "profile {}: tap powers must be finite",
                self.name
            )));
        }
        if !(self.doppler_hz.is_finite() && self.doppler_hz >= 0.0) {
            return Err(Error::invalid(format!(
                "profile {}: doppler must be finite and non-negative",
                self.name
            )));
        }
        Ok(())
    }

    /// Linear tap powers normalized to sum to one.
    pub fn normalized_powers(&self) -> Vec<f64> {
        let lin: Vec<f64> = self
            .tap_powers_db
            .iter()
            .map(|p| 10f64.powf(p / 10.0))
            .collect();
        let total: f64 = lin.iter().sum();
        lin.into_iter().map(|p| p / total).collect()
    }

    /// Per-symbol AR(1) coefficient of the tap gains, J0(2 pi f_d T_sym).
    pub fn time_correlation(&self, numerology: &Numerology) -> f64 {
        bessel_j0(2.0 * std::f64::consts::PI * self.doppler_hz * numerology.symbol_duration_s)
    }

    /// Delay/power shape loosely patterned on CDL-A, 300 ns delay spread.
    pub fn profile_a() -> Self {
        Self::scaled(
            "A",
            &[0.0, 0.38, 0.59, 0.76, 1.54, 2.22, 3.06, 4.46, 5.30, 9.66],
            &[-13.4, 0.0, -4.0, -7.5, -15.9, -16.7, -11.3, -16.2, -19.9, -29.7],
            300.0,
        )
    }

    /// Loosely patterned on CDL-B.
    pub fn profile_b() -> Self {
        Self::scaled(
            "B",
            &[0.0, 0.10, 0.22, 0.29, 0.54, 0.71, 1.12, 1.63, 2.81, 4.78],
            &[0.0, -2.2, -4.0, -3.2, -9.8, -1.2, -3.4, -5.2, -7.6, -12.0],
            200.0,
        )
    }

    /// Loosely patterned on CDL-C.
    pub fn profile_c() -> Self {
        Self::scaled(
            "C",
            &[0.0, 0.21, 0.37, 0.69, 1.01, 1.38, 1.74, 2.43, 3.61, 8.65],
            &[-4.4, -1.2, -3.5, -5.2, -2.5, 0.0, -2.2, -3.9, -7.4, -14.8],
            400.0,
        )
    }

    /// One tap at zero delay, no Doppler: a flat, static channel.
    pub fn flat() -> Self {
        Self {
            name: "flat".into(),
            tap_delays: vec![0.0],
            tap_powers_db: vec![0.0],
            doppler_hz: 0.0,
        }
    }

    pub fn builtin(name: &str) -> Result<Self> {
        match name.to_ascii_uppercase().trim_start_matches("PROFILE-") {
            "A" => Ok(Self::profile_a()),
            "B" => Ok(Self::profile_b()),
            "C" => Ok(Self::profile_c()),
            "FLAT" => Ok(Self::flat()),
            _ => Err(Error::invalid(format!(
                "unknown channel profile `{name}` (expected A, B, C or flat)"
            ))),
        }
    }

    fn scaled(name: &str, normalized_delays: &[f64], powers_db: &[f64], doppler: f64) -> Self {
        Self {
            name: name.into(),
            tap_delays: normalized_delays.iter().map(|d| d * DS_NS * 1e-9).collect(),
            tap_powers_db: powers_db.to_vec(),
            doppler_hz: doppler,
        }
    }
}

/// Bessel function of the first kind, order zero, by Simpson quadrature of
/// (1/pi) * integral_0^pi cos(x sin t) dt. Accurate to ~1e-12 for |x| < 10.
pub fn bessel_j0(x: f64) -> f64 {
    const N: usize = 256;
    let h = std::f64::consts::PI / N as f64;
    let f = |t: f64| (x * t.sin()).cos();
    let mut s = f(0.0) + f(std::f64::consts::PI);
    for i in 1..N {
        let w = if i % 2 == 1 { 4.0 } else { 2.0 };
        s += w * f(i as f64 * h);
    }
    s * h / 3.0 / std::f64::consts::PI
}

/// Draws one channel grid with the default numerology.
pub fn generate_channel(profile: &TdlProfile, dims: GridDims, rng_seed: u64) -> Result<ChannelGrid> {
    generate_channel_with(profile, dims, &Numerology::default(), rng_seed)
}

/// Draws one channel grid: complex-Gaussian tap gains evolving as AR(1)
/// across symbols, mapped to subcarriers by the DFT of the tap delays.
pub fn generate_channel_with(
    profile: &TdlProfile,
    dims: GridDims,
    numerology: &Numerology,
    rng_seed: u64,
) -> Result<ChannelGrid> {
    profile.validate()?;
    let powers = profile.normalized_powers();
    let rho = profile.time_correlation(numerology);
    let innov = (1.0 - rho * rho).max(0.0).sqrt();
    let n_taps = powers.len();
    let mut rng = rng_from(rng_seed);

    // gains[tap][symbol]
    let mut gains = vec![Complex64::new(0.0, 0.0); n_taps * dims.n_symbols];
    for (l, &p) in powers.iter().enumerate() {
        let amp = p.sqrt();
        let mut g = complex_normal(&mut rng);
        for k in 0..dims.n_symbols {
            if k > 0 {
                g = g * rho + complex_normal(&mut rng) * innov;
            }
            gains[l * dims.n_symbols + k] = g * amp;
        }
    }

    let phasors = delay_phasors(profile, dims.n_subcarriers, numerology);
    let grid = ChannelGrid::from_fn(dims, |sc, k| {
        (0..n_taps)
            .map(|l| phasors[sc * n_taps + l] * gains[l * dims.n_symbols + k])
            .sum()
    });
    Ok(grid)
}

/// exp(-j 2 pi f tau_l) for every subcarrier/tap pair, `[subcarrier][tap]`.
pub(crate) fn delay_phasors(
    profile: &TdlProfile,
    n_subcarriers: usize,
    numerology: &Numerology,
) -> Vec<Complex64> {
    let mut out = Vec::with_capacity(n_subcarriers * profile.tap_delays.len());
    for sc in 0..n_subcarriers {
        let f = sc as f64 * numerology.subcarrier_spacing_hz;
        for &tau in &profile.tap_delays {
            out.push(Complex64::from_polar(1.0, -2.0 * std::f64::consts::PI * f * tau));
        }
    }
    out
}

/// Where a sample came from. Set once when the sample is created.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Provenance {
    Field,
    Denoised,
    Generated,
    Pure,
}

impl std::fmt::Display for Provenance {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            Provenance::Field => "field",
            Provenance::Denoised => "denoised",
            Provenance::Generated => "generated",
            Provenance::Pure => "pure",
        };
        f.write_str(s)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NoisySample {
    pub grid: ChannelGrid,
    /// Received SNR in dB; `f64::INFINITY` for noiseless samples.
    pub snr_db: f64,
    provenance: Provenance,
    /// True when `grid` holds only the pilot symbol columns of a slot.
    pub pilots_only: bool,
}

impl NoisySample {
    pub fn new(grid: ChannelGrid, snr_db: f64, provenance: Provenance, pilots_only: bool) -> Result<Self> {
        if snr_db.is_nan() || snr_db == f64::NEG_INFINITY {
            return Err(Error::invalid(format!("sample snr_db must be finite or +inf, got {snr_db}")));
        }
        Ok(Self {
            grid,
            snr_db,
            provenance,
            pilots_only,
        })
    }

    pub fn provenance(&self) -> Provenance {
        self.provenance
    }

    /// Linear noise variance per element implied by `snr_db` at unit signal power.
    pub fn noise_var(&self) -> f64 {
        snr_db_to_noise_var(self.snr_db)
    }
}

pub fn snr_db_to_noise_var(snr_db: f64) -> f64 {
    if snr_db == f64::INFINITY {
        0.0
    } else {
        10f64.powf(-snr_db / 10.0)
    }
}

/// Adds i.i.d. circular complex Gaussian noise of variance 10^(-snr_db/10).
/// `snr_db = +inf` returns the grid unchanged.
pub fn add_awgn(grid: &ChannelGrid, snr_db: f64, rng_seed: u64) -> Result<NoisySample> {
    if snr_db.is_nan() || snr_db == f64::NEG_INFINITY {
        return Err(Error::invalid(format!("snr_db must be finite or +inf, got {snr_db}")));
    }
    let mut out = grid.clone();
    let var = snr_db_to_noise_var(snr_db);
    if var > 0.0 {
        let sd = var.sqrt();
        let mut rng = rng_from(rng_seed);
        for v in out.values_mut() {
            *v += complex_normal(&mut rng) * sd;
        }
    }
    NoisySample::new(out, snr_db, Provenance::Field, false)
}

/// Pilot symbols spanning every subcarrier at a set of symbol columns.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PilotPattern {
    pub dims: GridDims,
    pub symbol_indices: Vec<usize>,
    pub subcarrier_indices: Vec<usize>,
    /// Unit-modulus pilot values, row-major `[subcarrier][pilot symbol]`.
    pub pilot_values: Vec<Complex64>,
}

impl PilotPattern {
    pub fn n_pilots(&self) -> usize {
        self.symbol_indices.len() * self.subcarrier_indices.len()
    }

    /// Shape of the pilot-position grid.
    pub fn pilot_dims(&self) -> GridDims {
        GridDims {
            n_subcarriers: self.subcarrier_indices.len(),
            n_symbols: self.symbol_indices.len(),
        }
    }

    pub fn covers_all_symbols(&self) -> bool {
        self.symbol_indices.len() == self.dims.n_symbols
    }

    pub fn value(&self, sc_idx: usize, sym_idx: usize) -> Complex64 {
        self.pilot_values[sc_idx * self.symbol_indices.len() + sym_idx]
    }

    pub fn validate(&self) -> Result<()> {
        let sorted_unique = |v: &[usize]| v.windows(2).all(|w| w[0] < w[1]);
        if self.symbol_indices.is_empty() || self.subcarrier_indices.is_empty() {
            return Err(Error::invalid("pilot pattern is empty"));
        }
        if !sorted_unique(&self.symbol_indices) || !sorted_unique(&self.subcarrier_indices) {
            return Err(Error::invalid("pilot indices must be sorted and unique"));
        }
        if *self.symbol_indices.last().unwrap() >= self.dims.n_symbols
            || *self.subcarrier_indices.last().unwrap() >= self.dims.n_subcarriers
        {
            return Err(Error::invalid(format!("pilot index outside grid {}", self.dims)));
        }
        if self.pilot_values.len() != self.n_pilots() {
            return Err(Error::shape(self.n_pilots(), self.pilot_values.len()));
        }
        if self.pilot_values.iter().any(|x| (x.norm() - 1.0).abs() > 1e-12) {
            return Err(Error::invalid("pilot values must have unit modulus"));
        }
        Ok(())
    }

    /// Pilot-position channel H_p (all pattern subcarriers, pilot symbols).
    pub fn extract(&self, grid: &ChannelGrid) -> Result<ChannelGrid> {
        if grid.dims() != self.dims {
            return Err(Error::shape(self.dims, grid.dims()));
        }
        Ok(ChannelGrid::from_fn(self.pilot_dims(), |i, j| {
            grid.get(self.subcarrier_indices[i], self.symbol_indices[j])
        }))
    }
}

/// Builds a pattern covering all subcarriers at `pilot_symbol_indices`, with
/// QPSK pilot values drawn from `rng_seed`.
pub fn make_pilot_pattern(dims: GridDims, pilot_symbol_indices: &[usize], rng_seed: u64) -> Result<PilotPattern> {
    let mut symbols = pilot_symbol_indices.to_vec();
    symbols.sort_unstable();
    symbols.dedup();
    if symbols.len() != pilot_symbol_indices.len() {
        return Err(Error::invalid("duplicate pilot symbol index"));
    }
    if symbols.is_empty() {
        return Err(Error::invalid("at least one pilot symbol is required"));
    }
    if let Some(&bad) = symbols.iter().find(|&&s| s >= dims.n_symbols) {
        return Err(Error::invalid(format!(
            "pilot symbol {bad} outside grid with {} symbols",
            dims.n_symbols
        )));
    }
    let mut rng = rng_from(rng_seed);
    let s = std::f64::consts::FRAC_1_SQRT_2;
    let n = dims.n_subcarriers * symbols.len();
    let pilot_values = (0..n)
        .map(|_| {
            let re = if rng.gen::<bool>() { s } else { -s };
            let im = if rng.gen::<bool>() { s } else { -s };
            Complex64::new(re, im)
        })
        .collect();
    let pattern = PilotPattern {
        dims,
        symbol_indices: symbols,
        subcarrier_indices: (0..dims.n_subcarriers).collect(),
        pilot_values,
    };
    pattern.validate()?;
    Ok(pattern)
}

/// A weighted set of received SNRs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SnrMixture {
    pub components: Vec<MixtureComponent>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MixtureComponent {
    pub snr_db: f64,
    pub fraction: f64,
}

impl SnrMixture {
    pub fn new(pairs: &[(f64, f64)]) -> Result<Self> {
        let m = Self {
            components: pairs
                .iter()
                .map(|&(snr_db, fraction)| MixtureComponent { snr_db, fraction })
                .collect(),
        };
        m.validate()?;
        Ok(m)
    }

    /// 30% at 15 dB, 60% at 5 dB, 10% at -5 dB.
    pub fn cellular_default() -> Self {
        Self::new(&[(15.0, 0.3), (5.0, 0.6), (-5.0, 0.1)]).expect("static mixture")
    }

    pub fn validate(&self) -> Result<()> {
        if self.components.is_empty() {
            return Err(Error::invalid("SNR mixture is empty"));
        }
        for c in &self.components {
            if !c.snr_db.is_finite() || !(c.fraction >= 0.0 && c.fraction.is_finite()) {
                return Err(Error::invalid(format!(
                    "mixture component ({}, {}) is not finite and non-negative",
                    c.snr_db, c.fraction
                )));
            }
        }
        let total: f64 = self.components.iter().map(|c| c.fraction).sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::invalid(format!("mixture fractions sum to {total}, not 1")));
        }
        Ok(())
    }

    /// Per-component sample counts: round(fraction * n), with the rounding
    /// remainder assigned to the largest fraction.
    pub fn counts(&self, n: usize) -> Vec<usize> {
        let mut counts: Vec<i64> = self
            .components
            .iter()
            .map(|c| (c.fraction * n as f64).round() as i64)
            .collect();
        let diff = n as i64 - counts.iter().sum::<i64>();
        let largest = self
            .components
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.fraction.total_cmp(&b.1.fraction).then(b.0.cmp(&a.0)))
            .map(|(i, _)| i)
            .unwrap_or(0);
        counts[largest] += diff;
        counts.into_iter().map(|c| c.max(0) as usize).collect()
    }

    pub fn snrs(&self) -> Vec<f64> {
        self.components.iter().map(|c| c.snr_db).collect()
    }
}

/// Noisy field samples plus the generation parameters that produced them.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub profile: String,
    /// Dims of the full slot grid.
    pub slot_dims: GridDims,
    /// Dims of each stored sample grid.
    pub sample_dims: GridDims,
    pub pilot_symbols: Vec<usize>,
    /// SNR mixture for field campaigns; `None` for derived sets.
    pub mixture: Option<SnrMixture>,
    pub seed: u64,
    pub samples: Vec<NoisySample>,
}

impl DatasetManifest {
    /// A dataset derived from `parent` (denoised or generated samples).
    pub fn derived(parent: &DatasetManifest, samples: Vec<NoisySample>, seed: u64) -> Self {
        let sample_dims = samples.first().map(|s| s.grid.dims()).unwrap_or(parent.sample_dims);
        Self {
            profile: parent.profile.clone(),
            slot_dims: parent.slot_dims,
            sample_dims,
            pilot_symbols: parent.pilot_symbols.clone(),
            mixture: None,
            seed,
            samples,
        }
    }

    /// Number of samples per distinct SNR, in first-seen order.
    pub fn snr_histogram(&self) -> Vec<(f64, usize)> {
        let mut out: Vec<(f64, usize)> = Vec::new();
        for s in &self.samples {
            match out.iter_mut().find(|(snr, _)| *snr == s.snr_db) {
                Some((_, c)) => *c += 1,
                None => out.push((s.snr_db, 1)),
            }
        }
        out
    }
}

/// Noiseless grids kept alongside a dataset for evaluation only. Training
/// entry points never accept this type.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct EvalStore {
    pub grids: Vec<ChannelGrid>,
}

impl EvalStore {
    pub fn len(&self) -> usize {
        self.grids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.grids.is_empty()
    }

    pub fn as_samples(&self) -> Vec<NoisySample> {
        self.grids
            .iter()
            .map(|g| NoisySample {
                grid: g.clone(),
                snr_db: f64::INFINITY,
                provenance: Provenance::Pure,
                pilots_only: false,
            })
            .collect()
    }
}

/// Simulates a field measurement campaign.
///
/// Each sample is a fresh channel realization observed through `pattern` at
/// an SNR drawn by `mixture` (exact counts, shuffled order); the stored grid
/// is the normalized LS estimate at pilot positions. The noiseless grids go to the
/// returned [`EvalStore`].
pub fn build_dataset(
    profile: &TdlProfile,
    dims: GridDims,
    pattern: &PilotPattern,
    mixture: &SnrMixture,
    n_samples: usize,
    rng_seed: u64,
) -> Result<(DatasetManifest, EvalStore)> {
    mixture.validate()?;
    profile.validate()?;
    pattern.validate()?;
    if n_samples == 0 {
        return Err(Error::invalid("n_samples must be at least 1"));
    }
    if pattern.dims != dims {
        return Err(Error::shape(dims, pattern.dims));
    }

    let mut snrs: Vec<f64> = Vec::with_capacity(n_samples);
    for (c, count) in mixture.components.iter().zip(mixture.counts(n_samples)) {
        snrs.extend(std::iter::repeat_n(c.snr_db, count));
    }
    snrs.shuffle(&mut rng_from(tagged_seed(rng_seed, "snr-order", 0)));

    let mut samples = Vec::with_capacity(n_samples);
    let mut pure = Vec::with_capacity(n_samples);
    for (i, &snr_db) in snrs.iter().enumerate() {
        let h = generate_channel(profile, dims, tagged_seed(rng_seed, "channel", i as u64))?;
        let ls = observe_ls(&h, pattern, snr_db, tagged_seed(rng_seed, "noise", i as u64))?;
        samples.push(NoisySample::new(ls, snr_db, Provenance::Field, !pattern.covers_all_symbols())?);
        pure.push(h);
    }

    Ok((
        DatasetManifest {
            profile: profile.name.clone(),
            slot_dims: dims,
            sample_dims: pattern.pilot_dims(),
            pilot_symbols: pattern.symbol_indices.clone(),
            mixture: Some(mixture.clone()),
            seed: rng_seed,
            samples,
        },
        EvalStore { grids: pure },
    ))
}

/// Transmits the pilots through `h` with AWGN and returns the normalized LS
/// estimate at pilot positions.
pub fn observe_ls(h: &ChannelGrid, pattern: &PilotPattern, snr_db: f64, rng_seed: u64) -> Result<ChannelGrid> {
    let hp = pattern.extract(h)?;
    let tx = ChannelGrid::from_values(pattern.pilot_dims(), pattern.pilot_values.clone())?;
    let mut rx = hp.clone();
    for (y, x) in rx.values_mut().iter_mut().zip(tx.values()) {
        *y *= x;
    }
    let received = add_awgn(&rx, snr_db, rng_seed)?;
    let ls = crate::estimators::ls_estimate(&received.grid, pattern, received.noise_var())?;
    Ok(ls.grid)
}
