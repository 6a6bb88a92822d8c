//! Acceptance run: one PASS/FAIL line per criterion.
//!
//! Criteria 6 to 9 and 11 train DDPMs and SRCNNs at desk scale for three
//! seeds, which takes well over an hour on one core. Set
//! `CSI_ACCEPTANCE_WORKDIR` to keep artifacts between runs; fresh ones are
//! reused. The exit status is non-zero on any FAIL only when
//! `CSI_ACCEPTANCE_STRICT=1`, so that `cargo test` reports the outcome
//! without aborting the remaining test targets. `CSI_ACCEPTANCE_ONLY=1,2,10`
//! runs a subset.

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::time::Instant;

use csi_ddpm::dataset_io::{load_dataset, save_dataset, BLOB_FILE, MANIFEST_FILE};
use csi_ddpm::diffusion::{
    assign_pieces, forward_sample, posterior_mean, posterior_mean_direct, DiffusionCheckpoint,
    DiffusionModel, ForwardMode, ForwardSampler, NoiseSchedule,
};
use csi_ddpm::estimators::{ensemble_nmse_db, exact_autocov, LmmseConfig, LmmseFilter};
use csi_ddpm::grid::{
    generate_channel, ChannelGrid, DatasetManifest, GridDims, NoisySample, Numerology, PilotPattern, Provenance,
    TdlProfile,
};
use csi_ddpm::link::{BerRecord, LinkChain, LinkEstimator};
use csi_ddpm::pipeline::{
    classical_estimates, hash_of, learned_estimates, training_pairs, EvalSet, ExperimentConfig, Pipeline, Scheme,
};
use csi_ddpm::rng::{rng_from, tagged_seed};
use csi_ddpm::srcnn::{train_srcnn, LrHrPair, SrcnnCheckpoint, SrcnnModel};
use num_complex::Complex64;
use rand::Rng;

type Check = Result<(bool, String), Box<dyn std::error::Error>>;

const SEED: u64 = 0xacce;
/// Test channels per evaluation point.
const N_EVAL: usize = 500;
const LAB_SEEDS: [u64; 3] = [0, 1, 2];
const MIXED_SIZES: [usize; 3] = [500, 1500, 3000];

fn default_schedule() -> NoiseSchedule {
    ExperimentConfig::paper().schedule().unwrap()
}

fn desk_schedule() -> NoiseSchedule {
    ExperimentConfig::desk().schedule().unwrap()
}

fn median(v: &[f64]) -> f64 {
    let mut s = v.to_vec();
    s.sort_by(f64::total_cmp);
    let n = s.len();
    if n % 2 == 1 {
        s[n / 2]
    } else {
        0.5 * (s[n / 2 - 1] + s[n / 2])
    }
}

// ---------------------------------------------------------------- 1 to 5

fn crit1() -> Check {
    let mut worst_d2 = 0.0f64;
    let mut worst_val = 0.0f64;
    let mut worst_alpha = 0.0f64;
    for s in [default_schedule(), desk_schedule()] {
        let n = s.t_n();
        // Knot list including the end points, as (step, abar).
        let mut knots = vec![(1usize, s.abar(1))];
        knots.extend(s.knots().iter().map(|k| (k.step, k.abar)));
        knots.push((n, s.abar(n)));
        for w in knots.windows(2) {
            let ((t0, a0), (t1, a1)) = (w[0], w[1]);
            for t in t0..=t1 {
                let want = 1.0 - (a0 + (a1 - a0) * (t - t0) as f64 / (t1 - t0) as f64);
                worst_val = worst_val.max((1.0 - s.abar(t) - want).abs());
            }
            for t in t0 + 1..t1 {
                let d2 = (1.0 - s.abar(t + 1)) - 2.0 * (1.0 - s.abar(t)) + (1.0 - s.abar(t - 1));
                worst_d2 = worst_d2.max(d2.abs());
            }
        }
        let mut prod = 1.0;
        for t in 1..=n {
            prod *= s.alpha(t);
            worst_alpha = worst_alpha.max((s.abar(t) / s.abar(t - 1) - s.alpha(t)).abs());
            worst_alpha = worst_alpha.max((prod - s.abar(t)).abs());
        }
    }
    let pass = worst_d2 < 1e-12 && worst_val < 1e-12 && worst_alpha < 1e-12;
    Ok((pass, format!("max |d2| {worst_d2:.1e}, max |closed form| {worst_val:.1e}, max alpha/abar {worst_alpha:.1e}")))
}

fn crit2() -> Check {
    let mut rng = rng_from(tagged_seed(SEED, "crit2", 0));
    let mut mismatches = 0;
    let mut monotone = true;
    for s in [default_schedule(), desk_schedule()] {
        let n = s.t_n();
        for t in 1..n {
            monotone &= s.snr_of_step(t + 1)? < s.snr_of_step(t)?;
        }
        for _ in 0..1000 {
            let snr: f64 = rng.gen_range(-20.0..40.0);
            let p = 1.0 / (1.0 + 10f64.powf(snr / 10.0));
            let scan = (1..=n).find(|&t| 1.0 - s.abar(t) >= p).unwrap_or(n);
            mismatches += (s.snr_to_step(snr) != scan) as usize;
        }
    }
    Ok((monotone && mismatches == 0, format!("snr_of_step decreasing: {monotone}, scan mismatches {mismatches}/2000")))
}

/// Per-element mean and second central moment of `draws` grids.
fn moments(draws: &[ChannelGrid]) -> Vec<(Complex64, f64)> {
    let n = draws.len() as f64;
    let len = draws[0].values().len();
    (0..len)
        .map(|j| {
            let mean = draws.iter().map(|g| g.values()[j]).sum::<Complex64>() / n;
            let var = draws.iter().map(|g| (g.values()[j] - mean).norm_sqr()).sum::<f64>() / (n - 1.0);
            (mean, var)
        })
        .collect()
}

/// Number of elements whose moments fall outside 3 sigma of (mu, v).
fn outside_3sigma(m: &[(Complex64, f64)], h: &ChannelGrid, scale: f64, v: f64, n: usize) -> usize {
    let n = n as f64;
    m.iter()
        .zip(h.values())
        .filter(|((mean, var), h)| {
            let mean_ok = (mean - *h * scale).norm() <= 3.0 * (v / n).sqrt();
            let var_ok = (var - v).abs() <= 3.0 * v / n.sqrt();
            !(mean_ok && var_ok)
        })
        .count()
}

fn crit3() -> Check {
    const DRAWS: usize = 100_000;
    let s = default_schedule();
    let mut rng = rng_from(tagged_seed(SEED, "crit3", 0));
    let dims = GridDims::new(2, 2)?;
    let h = ChannelGrid::from_fn(dims, |k, l| Complex64::new(0.8 - 0.5 * k as f64, 0.3 * l as f64 - 0.6));
    let mut bad_direct = 0;
    let mut bad_comp = 0;
    let mut pairs = Vec::new();
    for p in 0..5u64 {
        let s0 = rng.gen_range(0..s.t_n() - 1);
        let t = rng.gen_range(s0 + 2..=s.t_n());
        let m = rng.gen_range(s0 + 1..t);
        let r = s.abar(t) / s.abar(s0);
        let (scale, v) = (r.sqrt(), 1.0 - r);
        let direct: Vec<ChannelGrid> = (0..DRAWS as u64)
            .map(|i| forward_sample(&h, s0, t, &s, tagged_seed(SEED, "crit3-direct", p * 1_000_000 + i)).map(|x| x.0))
            .collect::<Result<_, _>>()?;
        bad_direct += outside_3sigma(&moments(&direct), &h, scale, v, DRAWS);
        let comp: Vec<ChannelGrid> = (0..DRAWS as u64)
            .map(|i| {
                let mid = forward_sample(&h, s0, m, &s, tagged_seed(SEED, "crit3-a", p * 1_000_000 + i))?.0;
                forward_sample(&mid, m, t, &s, tagged_seed(SEED, "crit3-b", p * 1_000_000 + i)).map(|x| x.0)
            })
            .collect::<Result<_, _>>()?;
        bad_comp += outside_3sigma(&moments(&comp), &h, scale, v, DRAWS);
        pairs.push(format!("({s0},{t})"));
    }
    Ok((
        bad_direct == 0 && bad_comp == 0,
        format!("pairs {}: elements outside 3 sigma direct {bad_direct}/20, via mid-chain {bad_comp}/20", pairs.join(" ")),
    ))
}

fn crit4() -> Check {
    let mut rng = rng_from(tagged_seed(SEED, "crit4", 0));
    let mut worst = 0.0f64;
    for s in [default_schedule(), desk_schedule()] {
        for _ in 0..10_000 {
            let t = rng.gen_range(1..=s.t_n());
            let h = Complex64::new(rng.gen_range(-3.0..3.0), rng.gen_range(-3.0..3.0));
            let e = Complex64::new(rng.gen_range(-3.0..3.0), rng.gen_range(-3.0..3.0));
            worst = worst.max((posterior_mean(h, e, t, &s) - posterior_mean_direct(h, e, t, &s)).norm());
        }
    }
    Ok((worst < 1e-9, format!("max |difference| {worst:.2e} over 2 x 10^4 draws")))
}

fn crit5() -> Check {
    let cfg = ExperimentConfig::desk();
    let s = cfg.schedule()?;
    let snrs = cfg.mixture()?.snrs();
    let pieces = assign_pieces(&snrs, &s)?;
    // Independent ranges: each SNR owns (its step, next lower SNR's step].
    let mut order = snrs.clone();
    order.sort_by(|a, b| b.total_cmp(a));
    let oracle = |snr: f64| {
        let i = order.iter().position(|&x| x == snr).unwrap();
        let lo = s.snr_to_step(snr);
        let hi = order.get(i + 1).map(|&x| s.snr_to_step(x)).unwrap_or(s.t_n());
        (lo, hi)
    };
    let samples: Vec<f64> = (0..1000).map(|i| snrs[i % snrs.len()]).collect();
    let mut sampler = ForwardSampler::new(&pieces, ForwardMode::Piecewise, &samples)?;
    let mut rng = rng_from(tagged_seed(SEED, "crit5", 0));
    let mut outside = 0;
    for _ in 0..100_000 {
        let d = sampler.draw(&mut rng);
        let (lo, hi) = oracle(pieces.groups()[d.group].snr_db);
        outside += !(d.s == lo && d.t > lo && d.t <= hi) as usize;
    }
    let st = sampler.stats();
    // Control: full-range forwarding does share steps between groups.
    let mut trad = ForwardSampler::new(&pieces, ForwardMode::Traditional, &samples)?;
    for _ in 0..10_000 {
        trad.draw(&mut rng);
    }
    let pass = outside == 0 && st.out_of_range == 0 && st.shared_steps() == 0 && trad.stats().shared_steps() > 0;
    Ok((
        pass,
        format!(
            "10^5 draws: outside oracle range {outside}, sampler out_of_range {}, shared steps {} (traditional control: {})",
            st.out_of_range,
            st.shared_steps(),
            trad.stats().shared_steps()
        ),
    ))
}

// ---------------------------------------------------------------- labs

/// One desk pipeline run under its own seed and work directory.
struct Lab {
    seed: u64,
    p: Pipeline,
    secs: f64,
}

impl Lab {
    fn config(seed: u64, root: &Path) -> ExperimentConfig {
        let mut c = ExperimentConfig::desk();
        if seed != 0 {
            c = c.with_seed(seed);
        }
        c.paths.workdir = root.join(format!("seed-{seed}"));
        c.eval.schemes = vec![Scheme::Ls, Scheme::Lmmse, Scheme::At, Scheme::Ad, Scheme::Adt];
        c
    }

    /// Runs every stage whose artifacts are missing or stale.
    fn prepare(seed: u64, root: &Path) -> csi_ddpm::Result<Self> {
        let t0 = Instant::now();
        let p = Pipeline::new(Self::config(seed, root))?;
        let log = |what: &str| eprintln!("[acceptance seed {seed}] {what} ({:.0} s)", t0.elapsed().as_secs_f64());
        p.gen_data()?;
        let modes = p.ddpm_modes();
        for &m in &modes {
            if p.load_ddpm("acceptance", m).is_err() {
                p.train_ddpm_mode(m)?;
                log(&format!("trained {m:?} DDPM"));
            }
        }
        if modes.iter().any(|&m| p.load_denoised("acceptance", m).is_err()) {
            p.denoise()?;
            log("denoised");
        }
        let n_gen = p.cfg.srcnn.n_generated;
        if modes.iter().any(|&m| p.load_generated("acceptance", m).map_or(true, |d| d.samples.len() < n_gen)) {
            p.augment(None)?;
            log("generated");
        }
        for s in p.learned_schemes() {
            if p.load_srcnn("acceptance", s).is_err() {
                p.train_srcnn_scheme(s)?;
                log(&format!("trained {s} SRCNN"));
            }
        }
        Ok(Self {
            seed,
            p,
            secs: t0.elapsed().as_secs_f64(),
        })
    }

    fn ddpm(&self, mode: ForwardMode) -> csi_ddpm::Result<DiffusionModel> {
        self.p.load_ddpm("acceptance", mode)
    }

    fn pattern(&self) -> PilotPattern {
        self.p.cfg.pattern().unwrap()
    }

    fn dir(&self) -> PathBuf {
        self.p.ws.root().join("acceptance")
    }

    /// Trains (or reloads) an SRCNN on `pairs`, keyed by `key`.
    fn srcnn_cached(&self, key: &str, pairs: impl FnOnce() -> csi_ddpm::Result<Vec<LrHrPair>>, pure: bool) -> csi_ddpm::Result<SrcnnModel> {
        let path = self.dir().join(format!("srcnn-{key}.json"));
        let hash = hash_of(&(self.p.cfg.srcnn_hash(Scheme::Adt), key));
        if let Ok(c) = SrcnnCheckpoint::load(&path) {
            if c.config_hash.as_deref() == Some(hash.as_str()) {
                return SrcnnModel::from_checkpoint(&c);
            }
        }
        let mut hyper = self.p.cfg.srcnn.hyper.clone();
        hyper.allow_pure_targets = pure;
        let mut ckpt = train_srcnn(&pairs()?, &self.pattern(), &self.p.cfg.srcnn.spec, &hyper)?;
        ckpt.config_hash = Some(hash);
        ckpt.save(&path)?;
        eprintln!("[acceptance seed {}] trained SRCNN {key}", self.seed);
        SrcnnModel::from_checkpoint(&ckpt)
    }

    /// Generated grids: the pipeline's set followed by extra ones up to `n`.
    fn generated(&self, n: usize) -> Result<Vec<NoisySample>, Box<dyn std::error::Error>> {
        let mut out = self.p.load_generated("acceptance", ForwardMode::Piecewise)?.samples;
        if out.len() >= n {
            out.truncate(n);
            return Ok(out);
        }
        let extra = n - out.len();
        let dir = self.dir().join("generated-extra");
        let key = hash_of(&(self.p.cfg.ddpm_hash(ForwardMode::Piecewise), extra));
        let key_path = dir.join("key.txt");
        let fresh = std::fs::read_to_string(&key_path).is_ok_and(|k| k == key);
        let more = if fresh {
            load_dataset(&dir)?.samples
        } else {
            let model = self.ddpm(ForwardMode::Piecewise)?;
            let seed = tagged_seed(self.p.cfg.ddpm.hyper.seed, "acceptance-extra", 0);
            let gen = model.generate(extra, seed)?;
            let parent = load_dataset(&self.p.ws.field_dir())?;
            save_dataset(&dir, &DatasetManifest::derived(&parent, gen.clone(), seed))?;
            std::fs::write(&key_path, &key)?;
            eprintln!("[acceptance seed {}] generated {extra} extra grids", self.seed);
            gen
        };
        out.extend(more);
        Ok(out)
    }
}

/// LS and denoised ensemble NMSE (dB) of pilot grids at one SNR.
fn denoise_gain(model: &DiffusionModel, profile: &TdlProfile, pattern: &PilotPattern, snr: f64, seed: u64) -> csi_ddpm::Result<(f64, f64)> {
    let set = EvalSet::draw(profile, pattern, snr, N_EVAL, seed)?;
    let truth: Vec<ChannelGrid> = set.truth.iter().map(|h| pattern.extract(h)).collect::<Result<_, _>>()?;
    let noisy: Vec<NoisySample> =
        set.ls.iter().map(|g| NoisySample::new(g.clone(), snr, Provenance::Field, true)).collect::<Result<_, _>>()?;
    let den = model.denoise_batch(&noisy, tagged_seed(seed, "denoise", 0))?;
    let ls = ensemble_nmse_db(set.raw_ls().iter().zip(&truth))?;
    let dn = ensemble_nmse_db(den.iter().map(|s| &s.grid).zip(&truth))?;
    Ok((ls, dn))
}

// ---------------------------------------------------------------- 6 to 9

fn crit6(lab: &Lab) -> Check {
    let t0 = Instant::now();
    let model = lab.ddpm(ForwardMode::Piecewise)?;
    let (profile, pattern) = (lab.p.cfg.profile()?, lab.pattern());
    let mut parts = Vec::new();
    let mut pass = true;
    for (i, snr) in [-5.0, 5.0, 15.0].into_iter().enumerate() {
        let (ls, dn) = denoise_gain(&model, &profile, &pattern, snr, tagged_seed(SEED, "crit6", i as u64))?;
        pass &= if snr < 10.0 { ls - dn >= 3.0 } else { dn <= ls + 0.5 };
        parts.push(format!("{snr} dB LS {ls:.2} -> {dn:.2}"));
    }
    Ok((
        pass,
        format!(
            "{} (pipeline {:.0} s, eval {:.0} s)",
            parts.join(", "),
            lab.secs,
            t0.elapsed().as_secs_f64()
        ),
    ))
}

fn crit7(labs: &[&Lab]) -> Check {
    let (mut vs_ad, mut vs_at, mut parts) = (Vec::new(), Vec::new(), Vec::new());
    for lab in labs {
        let (profile, pattern) = (lab.p.cfg.profile()?, lab.pattern());
        let seed = tagged_seed(SEED, "crit7", lab.seed);
        let set = EvalSet::draw(&profile, &pattern, -5.0, N_EVAL, seed)?;
        let pw = lab.ddpm(ForwardMode::Piecewise)?;
        let tr = lab.ddpm(ForwardMode::Traditional)?;
        let nmse = |scheme: Scheme, ddpm: &DiffusionModel| -> csi_ddpm::Result<f64> {
            let srcnn = lab.p.load_srcnn("acceptance", scheme)?;
            set.nmse_db(&learned_estimates(scheme, &set, Some(ddpm), &srcnn, tagged_seed(seed, "denoise", 0))?)
        };
        let (adt, ad, at) = (nmse(Scheme::Adt, &pw)?, nmse(Scheme::Ad, &tr)?, nmse(Scheme::At, &pw)?);
        vs_ad.push(ad - adt);
        vs_at.push(at - adt);
        parts.push(format!("seed {}: a-d-t {adt:.2}, a-d {ad:.2}, a-t {at:.2}", lab.seed));
    }
    let (m_ad, m_at) = (median(&vs_ad), median(&vs_at));
    let inverted = |v: &[f64]| v.iter().all(|&m| m < 0.0);
    let pass = m_ad >= -0.3 && m_at >= -0.3 && !inverted(&vs_ad) && !inverted(&vs_at);
    Ok((pass, format!("{}; median margin vs a-d {m_ad:.2} dB, vs a-t {m_at:.2} dB", parts.join("; "))))
}

fn crit8(labs: &[&Lab]) -> Check {
    let mut mixed = vec![Vec::new(); MIXED_SIZES.len()];
    let mut pure = vec![Vec::new(); MIXED_SIZES.len()];
    for lab in labs {
        let (profile, pattern) = (lab.p.cfg.profile()?, lab.pattern());
        let dims = pattern.dims;
        let seed = tagged_seed(SEED, "crit8", lab.seed);
        let set = EvalSet::draw(&profile, &pattern, 15.0, N_EVAL, seed)?;
        let ddpm = lab.ddpm(ForwardMode::Piecewise)?;
        let denoised = lab.p.load_denoised("acceptance", ForwardMode::Piecewise)?.samples;
        let max = *MIXED_SIZES.iter().max().unwrap();
        let generated = lab.generated(max - denoised.len())?;
        for (i, &n) in MIXED_SIZES.iter().enumerate() {
            let n_gen = n - denoised.len();
            let m = if n_gen == lab.p.cfg.srcnn.n_generated {
                lab.p.load_srcnn("acceptance", Scheme::Adt)?
            } else {
                lab.srcnn_cached(&format!("mixed-{n}"), || training_pairs(Scheme::Adt, &denoised, &generated[..n_gen], &pattern), false)?
            };
            let p = lab.srcnn_cached(
                &format!("pure-{n}"),
                || {
                    (0..n as u64)
                        .map(|j| {
                            let h = generate_channel(&profile, dims, tagged_seed(lab.p.cfg.dataset.seed, "acceptance-pure", j))?;
                            LrHrPair::from_hr(h, &pattern, Provenance::Pure)
                        })
                        .collect()
                },
                true,
            )?;
            let den_seed = tagged_seed(seed, "denoise", 0);
            mixed[i].push(set.nmse_db(&learned_estimates(Scheme::Adt, &set, Some(&ddpm), &m, den_seed)?)?);
            pure[i].push(set.nmse_db(&learned_estimates(Scheme::Adt, &set, Some(&ddpm), &p, den_seed)?)?);
        }
    }
    let mm: Vec<f64> = mixed.iter().map(|v| median(v)).collect();
    let mp: Vec<f64> = pure.iter().map(|v| median(v)).collect();
    let improving = mm.windows(2).all(|w| w[1] < w[0]);
    let (gap_lo, gap_hi) = (mm[0] - mp[0], mm[2] - mp[2]);
    let fmt = |v: &[f64]| v.iter().map(|x| format!("{x:.2}")).collect::<Vec<_>>().join("/");
    Ok((
        improving && gap_hi < gap_lo,
        format!(
            "median NMSE at sizes {:?}: mixed {} dB, pure {} dB; gap {gap_lo:.2} -> {gap_hi:.2} dB",
            MIXED_SIZES,
            fmt(&mm),
            fmt(&mp)
        ),
    ))
}

fn crit9(lab: &Lab) -> Check {
    let model = lab.ddpm(ForwardMode::Piecewise)?;
    let pattern = lab.pattern();
    let (mut any_gain, mut no_harm, mut parts) = (false, true, Vec::new());
    for name in ["B", "C"] {
        let profile = TdlProfile::builtin(name)?;
        let mut gains = true;
        for (i, snr) in [-5.0, 5.0, 15.0].into_iter().enumerate() {
            let (ls, dn) = denoise_gain(&model, &profile, &pattern, snr, tagged_seed(SEED, &format!("crit9/{name}"), i as u64))?;
            if snr < 10.0 {
                gains &= ls - dn >= 3.0;
            }
            no_harm &= dn <= ls + 0.5;
            parts.push(format!("{name} {snr} dB {ls:.2} -> {dn:.2}"));
        }
        any_gain |= gains;
    }
    Ok((any_gain && no_harm, parts.join(", ")))
}

// ---------------------------------------------------------------- 10 to 12

fn crit10() -> Check {
    let cfg = ExperimentConfig::desk();
    let pattern = cfg.pattern()?;
    let mut worst = f64::NEG_INFINITY;
    for name in ["A", "B", "C"] {
        let profile = TdlProfile::builtin(name)?;
        let cov = exact_autocov(&profile, &Numerology::default(), &pattern)?;
        for (i, snr) in [-5.0, 0.0, 5.0, 10.0, 15.0, 20.0].into_iter().enumerate() {
            let set = EvalSet::draw(&profile, &pattern, snr, N_EVAL, tagged_seed(SEED, &format!("crit10/{name}"), i as u64))?;
            let truth: Vec<ChannelGrid> = set.truth.iter().map(|h| pattern.extract(h)).collect::<Result<_, _>>()?;
            let f = LmmseFilter::new(&cov, &LmmseConfig::from_snr_db(1.0, snr)?)?;
            let raw = set.raw_ls();
            let lm: Vec<ChannelGrid> = raw.iter().map(|g| f.apply(g)).collect::<Result<_, _>>()?;
            let pilot_gap = ensemble_nmse_db(lm.iter().zip(&truth))? - ensemble_nmse_db(raw.iter().zip(&truth))?;
            let full_ls = set.nmse_db(&classical_estimates(Scheme::Ls, &set, &profile, &pattern)?)?;
            let full_lm = set.nmse_db(&classical_estimates(Scheme::Lmmse, &set, &profile, &pattern)?)?;
            worst = worst.max(pilot_gap).max(full_lm - full_ls);
        }
    }
    // At SNR 10^6 the filter approaches identity: compare the estimates.
    let snr = 60.0;
    let profile = cfg.profile()?;
    let cov = exact_autocov(&profile, &Numerology::default(), &pattern)?;
    let f = LmmseFilter::new(&cov, &LmmseConfig::from_snr_db(1.0, snr)?)?;
    let set = EvalSet::draw(&profile, &pattern, snr, N_EVAL, tagged_seed(SEED, "crit10-high", 0))?;
    let (mut diff, mut norm) = (0.0, 0.0);
    for g in set.raw_ls() {
        let l = f.apply(&g)?;
        diff += l.values().iter().zip(g.values()).map(|(a, b)| (a - b).norm_sqr()).sum::<f64>();
        norm += g.energy();
    }
    let rel = (diff / norm).sqrt();
    Ok((
        worst <= 0.0 && rel < 1e-3,
        format!("max NMSE(LMMSE) - NMSE(LS) over 3 profiles x 6 SNRs {worst:.2} dB; relative gap at SNR 10^6 {rel:.1e}"),
    ))
}

fn binomial_sigma(r: &BerRecord) -> f64 {
    let p = r.ber();
    (p * (1.0 - p) / r.bits_total as f64).sqrt()
}

/// `a <= b` within 3 combined binomial standard deviations.
fn le_3sigma(a: &BerRecord, b: &BerRecord) -> bool {
    a.ber() <= b.ber() + 3.0 * binomial_sigma(a).hypot(binomial_sigma(b))
}

fn crit11(lab: &Lab) -> Check {
    let t0 = Instant::now();
    let recs = lab.p.run_link()?;
    let secs = t0.elapsed().as_secs_f64();
    let cfg = lab.p.cfg.link_config()?;
    let get = |e: LinkEstimator, snr: f64| recs.iter().find(|r| r.estimator == e && r.snr_db == snr).unwrap();
    let lo = cfg.snr_db_list.iter().copied().fold(f64::INFINITY, f64::min);
    let bits_ok = recs.iter().all(|r| r.bits_total >= 1_000_000);
    let (g, d, l) = (get(LinkEstimator::Genie, lo), get(LinkEstimator::DdpmSrcnn, lo), get(LinkEstimator::Ls, lo));
    let ordered = le_3sigma(g, d) && le_3sigma(d, l);
    let mut sorted = cfg.snr_db_list.clone();
    sorted.sort_by(f64::total_cmp);
    let monotone = cfg.estimators.iter().all(|&e| sorted.windows(2).all(|w| le_3sigma(get(e, w[1]), get(e, w[0]))));

    // Re-draw every slot of the run and check each codeword against H.
    let chain = LinkChain::new(&cfg, &lab.pattern())?;
    let n = chain.code.n();
    let (mut blocks, mut bad) = (0usize, 0usize);
    for si in 0..cfg.snr_db_list.len() {
        for i in 0..cfg.n_slots {
            let seed = tagged_seed(cfg.seed, "slot", (si * cfg.n_slots + i) as u64);
            let slot = chain.draw_slot(&cfg.profile, cfg.snr_db_list[si], seed)?;
            for (c, info) in slot.info.iter().enumerate() {
                let cw: Vec<u8> = (0..n).map(|j| slot.tx_bits[slot.bit_pos[c * n + j]]).collect();
                blocks += 1;
                bad += !(chain.code.check(&cw) && chain.code.info_bits(&cw) == *info) as usize;
            }
        }
    }
    let bers = |e: LinkEstimator| sorted.iter().map(|&s| format!("{:.2e}", get(e, s).ber())).collect::<Vec<_>>().join("/");
    Ok((
        bits_ok && ordered && monotone && bad == 0,
        format!(
            "{} bits per point; BER at {:?} dB genie {}, ddpm+srcnn {}, lmmse {}, ls {}; monotone {monotone}; parity failures {bad}/{blocks} ({secs:.0} s)",
            recs[0].bits_total,
            sorted,
            bers(LinkEstimator::Genie),
            bers(LinkEstimator::DdpmSrcnn),
            bers(LinkEstimator::Lmmse),
            bers(LinkEstimator::Ls),
        ),
    ))
}

fn crit12(lab: &Lab) -> Check {
    let t0 = Instant::now();
    let tmp = tempfile::tempdir()?;
    let read = |p: &Path| std::fs::read(p);
    let mut fails = Vec::new();

    // Dataset: load, save, reload.
    let src = lab.p.ws.field_dir();
    let ds = load_dataset(&src)?;
    let copy = tmp.path().join("field");
    save_dataset(&copy, &ds)?;
    for f in [BLOB_FILE, MANIFEST_FILE] {
        if read(&src.join(f))? != read(&copy.join(f))? {
            fails.push(format!("dataset {f} bytes"));
        }
    }
    if load_dataset(&copy)? != ds {
        fails.push("dataset values".into());
    }

    // Checkpoints: load, save, compare bytes and contents.
    let ddpm_src = lab.p.ws.ddpm_path(ForwardMode::Piecewise);
    let ddpm = DiffusionCheckpoint::load(&ddpm_src)?;
    let ddpm_copy = tmp.path().join("ddpm.json");
    ddpm.save(&ddpm_copy)?;
    if read(&ddpm_src)? != read(&ddpm_copy)? || DiffusionCheckpoint::load(&ddpm_copy)? != ddpm {
        fails.push("ddpm checkpoint".into());
    }
    let srcnn_src = lab.p.ws.srcnn_path(Scheme::Adt);
    let srcnn = SrcnnCheckpoint::load(&srcnn_src)?;
    let srcnn_copy = tmp.path().join("srcnn.json");
    srcnn.save(&srcnn_copy)?;
    if read(&srcnn_src)? != read(&srcnn_copy)? || SrcnnCheckpoint::load(&srcnn_copy)? != srcnn {
        fails.push("srcnn checkpoint".into());
    }

    // Corruptions must surface as errors, not panics or silent garbage.
    let blob = read(&copy.join(BLOB_FILE))?;
    let corruptions: [(&str, Box<dyn Fn(&mut Vec<u8>)>); 3] = [
        ("magic", Box::new(|b: &mut Vec<u8>| b[0] ^= 0xff)),
        ("version", Box::new(|b: &mut Vec<u8>| b[4] = 9)),
        ("truncated", Box::new(|b: &mut Vec<u8>| b.truncate(b.len() - 3))),
    ];
    for (name, corrupt) in &corruptions {
        let mut b = blob.clone();
        corrupt(&mut b);
        std::fs::write(copy.join(BLOB_FILE), &b)?;
        if load_dataset(&copy).is_ok() {
            fails.push(format!("dataset {name} accepted"));
        }
    }
    let text = std::fs::read_to_string(&ddpm_copy)?;
    for (name, bad) in [
        ("format", text.replacen("csi-ddpm", "csi-xxxx", 1)),
        ("truncated", text[..text.len() / 2].to_string()),
    ] {
        std::fs::write(&ddpm_copy, bad)?;
        if DiffusionCheckpoint::load(&ddpm_copy).is_ok() {
            fails.push(format!("ddpm {name} accepted"));
        }
    }
    std::fs::write(&srcnn_copy, b"{\"format\": 1}")?;
    if SrcnnCheckpoint::load(&srcnn_copy).is_ok() {
        fails.push("srcnn header accepted".into());
    }
    let detail = if fails.is_empty() {
        format!("dataset and both checkpoints byte-identical after reload; 6 corruptions rejected ({:.2} s)", t0.elapsed().as_secs_f64())
    } else {
        format!("failures: {}", fails.join(", "))
    };
    Ok((fails.is_empty(), detail))
}

// ---------------------------------------------------------------- driver

struct Report {
    only: Option<Vec<u32>>,
    results: Vec<(u32, bool)>,
}

impl Report {
    fn wants(&self, id: u32) -> bool {
        self.only.as_ref().map_or(true, |o| o.contains(&id))
    }

    fn run(&mut self, id: u32, name: &str, f: impl FnOnce() -> Check) {
        if !self.wants(id) {
            return;
        }
        let t0 = Instant::now();
        let (pass, detail) = match catch_unwind(AssertUnwindSafe(f)) {
            Ok(Ok(x)) => x,
            Ok(Err(e)) => (false, format!("error: {e}")),
            Err(_) => (false, "panicked".into()),
        };
        let verdict = if pass { "PASS" } else { "FAIL" };
        println!("criterion {id:>2} {verdict} {name}: {detail} [{:.1} s]", t0.elapsed().as_secs_f64());
        self.results.push((id, pass));
    }
}

fn main() {
    let kept = std::env::var_os("CSI_ACCEPTANCE_WORKDIR").map(PathBuf::from);
    let tmp = tempfile::tempdir().expect("temporary directory");
    let root = kept.unwrap_or_else(|| tmp.path().to_path_buf());
    let only = std::env::var("CSI_ACCEPTANCE_ONLY")
        .ok()
        .map(|v| v.split(',').filter_map(|x| x.trim().parse().ok()).collect());
    let mut r = Report { only, results: Vec::new() };

    r.run(1, "schedule exactness", crit1);
    r.run(2, "snr/step consistency", crit2);
    r.run(3, "forward-process law", crit3);
    r.run(4, "posterior mean equivalence", crit4);
    r.run(5, "piecewise exclusivity", crit5);

    let n_labs = if [7, 8].iter().any(|&i| r.wants(i)) {
        LAB_SEEDS.len()
    } else if [6, 9, 11, 12].iter().any(|&i| r.wants(i)) {
        1
    } else {
        0
    };
    let labs: Vec<Result<Lab, String>> = LAB_SEEDS[..n_labs]
        .iter()
        .map(|&s| Lab::prepare(s, &root).map_err(|e| format!("seed {s}: {e}")))
        .collect();
    let all_labs = || -> Result<Vec<&Lab>, Box<dyn std::error::Error>> {
        labs.iter().map(|l| l.as_ref().map_err(|e| e.clone().into())).collect()
    };
    let lab0 = || labs[0].as_ref().map_err(|e| Box::<dyn std::error::Error>::from(e.clone()));

    r.run(6, "denoising gain", || crit6(lab0()?));
    r.run(7, "ablation ordering", || {
        let l: Vec<&Lab> = all_labs()?;
        crit7(&l)
    });
    r.run(8, "augmentation trend", || {
        let l: Vec<&Lab> = all_labs()?;
        crit8(&l)
    });
    r.run(9, "cross-profile generalization", || crit9(lab0()?));
    r.run(10, "LMMSE anchors", crit10);
    r.run(11, "link chain", || crit11(lab0()?));
    r.run(12, "persistence", || crit12(lab0()?));

    let passed = r.results.iter().filter(|(_, p)| *p).count();
    println!("acceptance: {passed}/{} criteria passed", r.results.len());
    let strict = std::env::var("CSI_ACCEPTANCE_STRICT").is_ok_and(|v| v == "1");
    if strict && passed < r.results.len() {
        std::process::exit(1);
    }
}
