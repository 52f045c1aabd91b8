use proptest::prelude::*;

use swssb_core::collapse::{collapse_score, CollapseOptions, Series};
use swssb_core::config_space::{Lattice, Sector, SectorDistribution, DEFAULT_SECTOR_CAP};
use swssb_core::decoders::{height_offset, height_offset_brute, mwpm_minimizers, mwpm_minimizers_brute, wilson_interval, DecodingInstance};
use swssb_core::diagnostics::cmi;
use swssb_core::exact_evolver::{evolve, DiagonalGenerator};
use swssb_core::krylov::KrylovOptions;
use swssb_core::ssep_sampler::sample_trajectory;
use swssb_core::trajectory_io::{read_binary, write_binary};

fn lattice(kind: u8) -> Lattice {
    match kind % 4 {
        0 => Lattice::chain(6),
        1 => Lattice::ring(6),
        2 => Lattice::torus(3, 2),
        _ => Lattice::ladder(2, 3),
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn rank_unrank_bijection(n in 1usize..20, frac in 0.0f64..1.0, pick in 0.0f64..1.0) {
        let k = ((n as f64) * frac) as usize;
        let sec = Sector::new(n, k, DEFAULT_SECTOR_CAP).unwrap();
        let r = ((sec.len() as f64 - 1.0) * pick) as usize;
        let bits = sec.unrank(r);
        prop_assert_eq!(bits.count_ones() as usize, k);
        prop_assert_eq!(sec.rank(bits), r);
    }

    #[test]
    fn evolution_keeps_normalization_and_charge(kind in 0u8..4, weights in prop::collection::vec(0.0f64..1.0, 20), t in 0.0f64..5.0) {
        let lat = lattice(kind);
        let mut w = weights.clone();
        w[0] += 1e-3;
        let total: f64 = w.iter().sum();
        let probs: Vec<f64> = w.iter().map(|x| x / total).collect();
        let dist = SectorDistribution::from_probs(&lat, 3, probs, DEFAULT_SECTOR_CAP).unwrap();
        let gen = DiagonalGenerator::for_distribution(&dist, 0.7, DEFAULT_SECTOR_CAP).unwrap();
        let (out, rep) = evolve(&dist, &gen, t, KrylovOptions::default()).unwrap();
        prop_assert!(rep.defect < 1e-9);
        prop_assert!(out.probs.iter().all(|&p| p >= 0.0));
        let charge: f64 = out.density().iter().sum();
        prop_assert!((charge - 3.0).abs() < 1e-9);
    }

    #[test]
    fn uniform_is_stationary(kind in 0u8..4, t in 0.1f64..10.0) {
        let lat = lattice(kind);
        let u = SectorDistribution::uniform(&lat, 3, DEFAULT_SECTOR_CAP).unwrap();
        let gen = DiagonalGenerator::for_distribution(&u, 1.3, DEFAULT_SECTOR_CAP).unwrap();
        let (out, _) = evolve(&u, &gen, t, KrylovOptions::default()).unwrap();
        prop_assert!(out.total_variation(&u.probs) < 1e-10);
    }

    #[test]
    fn classical_cmi_is_nonnegative(weights in prop::collection::vec(0.0f64..1.0, 20)) {
        let lat = Lattice::chain(6);
        let mut w = weights;
        w[3] += 1e-3;
        let total: f64 = w.iter().sum();
        let dist = SectorDistribution::from_probs(&lat, 3, w.iter().map(|x| x / total).collect(), DEFAULT_SECTOR_CAP).unwrap();
        let v = cmi(&dist, &[0, 1], &[2, 3], &[4, 5]).unwrap();
        prop_assert!(v >= -1e-12);
    }

    #[test]
    fn decoder_shortcuts_match_brute_force(l in 2usize..30, obs in prop::collection::vec(0u8..2, 1..12)) {
        let inst = DecodingInstance { l, gamma: 1.0, t: 1.0, observed: obs, n_a_true: 0 };
        prop_assert_eq!(height_offset(&inst), height_offset_brute(&inst));
        prop_assert_eq!(mwpm_minimizers(&inst), mwpm_minimizers_brute(&inst));
    }

    #[test]
    fn wilson_interval_brackets_estimate(n in 1usize..5000, frac in 0.0f64..=1.0) {
        let s = ((n as f64) * frac) as usize;
        let (lo, hi) = wilson_interval(s, n, 1.96);
        let p = s as f64 / n as f64;
        prop_assert!(0.0 <= lo && lo <= p + 1e-12 && p <= hi + 1e-12 && hi <= 1.0);
    }

    #[test]
    fn identical_curves_collapse_to_zero(ys in prop::collection::vec(0.1f64..2.0, 5), shift in 1.0f64..3.0) {
        let x: Vec<f64> = (1..=5).map(|k| k as f64).collect();
        let a = Series::new(1.0, x.clone(), ys.clone());
        let b = Series::new(shift, x.iter().map(|v| v * shift).collect(), ys);
        let s = collapse_score(&[a, b], 1.0, 0.0, CollapseOptions { bootstrap: 20, ..CollapseOptions::default() }).unwrap();
        prop_assert!(s.score < 1e-12);
    }

    #[test]
    fn trajectory_log_replays(kind in 0u8..4, seed in 0u64..1000, t in 0.0f64..3.0) {
        let lat = lattice(kind);
        let init = vec![1, 0, 1, 0, 1, 0];
        let rec = sample_trajectory(&lat, 1.0, &init, t, seed).unwrap();
        prop_assert_eq!(rec.replay(&lat), rec.final_config.clone());
        let mut buf = Vec::new();
        write_binary(&rec, &lat, &mut buf).unwrap();
        prop_assert_eq!(read_binary(&mut buf.as_slice(), &lat).unwrap(), rec);
    }
}
