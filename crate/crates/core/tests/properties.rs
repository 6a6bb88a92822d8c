//! Property tests over the public API.

use csi_ddpm::diffusion::{assign_pieces, noise_power_of_snr_db, ForwardMode, ForwardSampler, Knot, NoiseSchedule};
use csi_ddpm::estimators::{ensemble_nmse_db, interpolate_time_linear, nmse_db};
use csi_ddpm::grid::{make_pilot_pattern, ChannelGrid, GridDims, SnrMixture};
use csi_ddpm::link::{LdpcCode, Qam};
use csi_ddpm::pipeline::{MetricTable, NmseRow, Scheme};
use csi_ddpm::rng::rng_from;
use num_complex::Complex64;
use proptest::prelude::*;

fn schedule_strategy() -> impl Strategy<Value = NoiseSchedule> {
    // Two interior knots at increasing steps with decreasing abar.
    (20usize..300, 0.05f64..0.95, 0.05f64..0.95, 0.1f64..0.9).prop_filter_map("valid knots", |(t_n, f1, f2, a)| {
        let s1 = ((t_n as f64 * f1.min(f2)) as usize).max(2);
        let s2 = ((t_n as f64 * f1.max(f2)) as usize).min(t_n - 1);
        if s2 <= s1 {
            return None;
        }
        let k = [Knot { step: s1, abar: a }, Knot { step: s2, abar: a * 0.3 }];
        NoiseSchedule::build(0.9999, 0.0001, t_n, &k).ok()
    })
}

fn grid_strategy(dims: GridDims) -> impl Strategy<Value = ChannelGrid> {
    prop::collection::vec((-3.0f64..3.0, -3.0f64..3.0), dims.len())
        .prop_map(move |v| ChannelGrid::from_values(dims, v.into_iter().map(|(r, i)| Complex64::new(r, i)).collect()).unwrap())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn abar_decreasing_and_alpha_consistent(s in schedule_strategy()) {
        let n = s.t_n();
        for t in 1..=n {
            prop_assert!(s.abar(t) < s.abar(t - 1));
            prop_assert!((s.abar(t) / s.abar(t - 1) - s.alpha(t)).abs() < 1e-12);
        }
        for t in 1..n {
            prop_assert!(s.snr_of_step(t + 1).unwrap() < s.snr_of_step(t).unwrap());
        }
    }

    #[test]
    fn snr_to_step_matches_scan(s in schedule_strategy(), snr in -30.0f64..50.0) {
        let p = noise_power_of_snr_db(snr);
        let scan = (1..=s.t_n()).find(|&t| 1.0 - s.abar(t) >= p).unwrap_or(s.t_n());
        prop_assert_eq!(s.snr_to_step(snr), scan);
    }

    #[test]
    fn piecewise_draws_stay_in_range(s in schedule_strategy(), seed in any::<u64>()) {
        let snrs = [20.0, 8.0, -3.0];
        let pieces = assign_pieces(&snrs, &s);
        prop_assume!(pieces.is_ok());
        let pieces = pieces.unwrap();
        let samples: Vec<f64> = (0..30).map(|i| snrs[i % 3]).collect();
        let mut sampler = ForwardSampler::new(&pieces, ForwardMode::Piecewise, &samples).unwrap();
        let mut rng = rng_from(seed);
        for _ in 0..500 {
            let d = sampler.draw(&mut rng);
            let (lo, hi) = pieces.range(d.group, ForwardMode::Piecewise);
            prop_assert!(d.s == lo && d.t > lo && d.t <= hi);
        }
        prop_assert_eq!(sampler.stats().out_of_range, 0);
        prop_assert_eq!(sampler.stats().shared_steps(), 0);
    }

    #[test]
    fn mixture_counts_sum_to_n(n in 1usize..5000, a in 0.0f64..1.0, b in 0.0f64..1.0) {
        let (lo, hi) = (a.min(b), a.max(b));
        let m = SnrMixture::new(&[(15.0, lo), (5.0, hi - lo), (-5.0, 1.0 - hi)]).unwrap();
        let c = m.counts(n);
        prop_assert_eq!(c.iter().sum::<usize>(), n);
        for (k, comp) in c.iter().zip(&m.components) {
            prop_assert!((*k as f64 - comp.fraction * n as f64).abs() <= 2.0);
        }
    }

    #[test]
    fn nmse_of_scaled_error(g in grid_strategy(GridDims::new(6, 4).unwrap()), e in 0.01f64..2.0) {
        prop_assume!(g.energy() > 1e-6);
        let est = g.scaled(1.0 + e);
        let want = 20.0 * e.log10();
        prop_assert!((nmse_db(&est, &g).unwrap() - want).abs() < 1e-9);
        prop_assert!((ensemble_nmse_db([(&est, &g), (&est, &g)]).unwrap() - want).abs() < 1e-9);
    }

    #[test]
    fn linear_interpolation_keeps_pilots(lr in grid_strategy(GridDims::new(8, 2).unwrap())) {
        let dims = GridDims::new(8, 14).unwrap();
        let hr = interpolate_time_linear(&lr, dims, &[2, 11]).unwrap();
        for k in 0..8 {
            prop_assert_eq!(hr.get(k, 2), lr.get(k, 0));
            prop_assert_eq!(hr.get(k, 11), lr.get(k, 1));
            // Midpoints lie on the segment, ends are held.
            let mid = (lr.get(k, 0) * 5.0 + lr.get(k, 1) * 4.0) / 9.0;
            prop_assert!((hr.get(k, 6) - mid).norm() < 1e-12);
            prop_assert_eq!(hr.get(k, 0), lr.get(k, 0));
            prop_assert_eq!(hr.get(k, 13), lr.get(k, 1));
        }
    }

    #[test]
    fn qam_hard_round_trip(bits in prop::collection::vec(0u8..2, 6 * 40), order in prop::sample::select(vec![4usize, 16, 64])) {
        let q = Qam::new(order).unwrap();
        let n = bits.len() / q.bits_per_symbol() * q.bits_per_symbol();
        let syms = q.modulate(&bits[..n]).unwrap();
        let mut out = Vec::new();
        for y in syms {
            q.hard_demap(y, &mut out);
        }
        prop_assert_eq!(&out[..], &bits[..n]);
    }

    #[test]
    fn metric_csv_round_trip(vals in prop::collection::vec((-300.0f64..50.0, 1usize..5000), 1..12)) {
        let mut t = MetricTable::new();
        for (i, (nmse_db, n)) in vals.into_iter().enumerate() {
            t.push(NmseRow { scheme: Scheme::ALL[i % 6], profile: "B".into(), snr_db: i as f64, nmse_db, n }).unwrap();
        }
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.csv");
        t.write_csv(&path).unwrap();
        prop_assert_eq!(MetricTable::read_csv(&path).unwrap(), t);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn ldpc_codewords_satisfy_parity(seed in any::<u64>()) {
        let code = LdpcCode::link_default();
        let mut rng = rng_from(seed);
        let info: Vec<u8> = (0..code.k()).map(|_| rand::Rng::gen_range(&mut rng, 0..2)).collect();
        let cw = code.encode(&info).unwrap();
        prop_assert!(code.check(&cw));
        prop_assert_eq!(code.info_bits(&cw), info.clone());
        let llr: Vec<f64> = cw.iter().map(|&b| if b == 0 { 4.0 } else { -4.0 }).collect();
        let dec = code.decode(&llr).unwrap();
        prop_assert!(dec.parity_ok);
        prop_assert_eq!(dec.info, info);
    }

    #[test]
    fn pilot_pattern_values_are_unit_modulus(seed in any::<u64>(), a in 0usize..7, b in 7usize..14) {
        let p = make_pilot_pattern(GridDims::default(), &[a, b], seed).unwrap();
        prop_assert!(p.pilot_values.iter().all(|v| (v.norm() - 1.0).abs() < 1e-12));
        prop_assert_eq!(p.n_pilots(), 96);
    }
}
