use dinfer_core::rng::rng_from;
use dinfer_core::stats::{harmonic_mean_p, std_normal_cdf, welch_one_sided};
use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, Normal};

/// One-sided permutation test of mean(public) > mean(private).
fn permutation_p(public: &[f64], private: &[f64], draws: usize, seed: u64) -> f64 {
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    let observed = mean(public) - mean(private);
    let mut all: Vec<f64> = public.iter().chain(private).copied().collect();
    let mut rng = rng_from(seed);
    let mut hits = 0usize;
    for _ in 0..draws {
        all.shuffle(&mut rng);
        let (a, b) = all.split_at(public.len());
        if mean(a) - mean(b) >= observed - 1e-12 {
            hits += 1;
        }
    }
    (hits + 1) as f64 / (draws + 1) as f64
}

#[test]
fn welch_agrees_with_permutation_oracle() {
    let mut rng = rng_from(7);
    let mut worst: f64 = 0.0;
    for case in 0..50 {
        let n = rng.random_range(15..40);
        let shift = rng.random_range(-0.6..0.6);
        let noise = Normal::new(0.0, 1.0).unwrap();
        let public: Vec<f64> = (0..n).map(|_| shift + noise.sample(&mut rng)).collect();
        let private: Vec<f64> = (0..n).map(|_| noise.sample(&mut rng)).collect();
        let welch = welch_one_sided(&public, &private).unwrap().p_value;
        let perm = permutation_p(&public, &private, 20_000, 1000 + case);
        worst = worst.max((welch - perm).abs());
        assert!((welch - perm).abs() <= 0.03, "case {case}: welch {welch} permutation {perm}");
    }
    eprintln!("largest welch/permutation gap {worst:.4}");
}

#[test]
fn harmonic_mean_hand_cases() {
    assert_eq!(harmonic_mean_p(&[0.5]).unwrap(), 0.5);
    // 2 / (1/0.1 + 1/0.4) = 2 / 12.5
    assert_eq!(harmonic_mean_p(&[0.1, 0.4]).unwrap(), 0.16);
    // 3 / (100 + 10 + 1) = 3 / 111
    assert_eq!(harmonic_mean_p(&[0.01, 0.1, 1.0]).unwrap(), 3.0 / 111.0);
    assert_eq!(harmonic_mean_p(&[0.2; 7]).unwrap(), 0.2);
    assert!(harmonic_mean_p(&[]).is_err());
    assert!(harmonic_mean_p(&[0.0, 0.5]).is_err());
    assert!(harmonic_mean_p(&[1.5]).is_err());
}

#[test]
fn normal_cdf_reference_values() {
    // reference values from high-precision tables
    let table = [
        (0.0, 0.5),
        (1.0, 0.841_344_746_068_542_9),
        (-1.0, 0.158_655_253_931_457_05),
        (1.96, 0.975_002_104_851_779_6),
        (-3.0, 0.001_349_898_031_630_094_6),
        (2.5, 0.993_790_334_674_223_8),
        (-6.0, 9.865_876_450_377e-10),
    ];
    for (z, want) in table {
        let got = std_normal_cdf(z);
        assert!((got - want).abs() <= 1e-7, "Phi({z}) = {got}, want {want}");
    }
    assert_eq!(std_normal_cdf(-40.0), 0.0);
    assert_eq!(std_normal_cdf(40.0), 1.0);
}

proptest! {
    #[test]
    fn welch_p_in_unit_interval_and_antisymmetric(
        a in prop::collection::vec(-5.0f64..5.0, 2..20),
        b in prop::collection::vec(-5.0f64..5.0, 2..20),
    ) {
        let ab = welch_one_sided(&a, &b).unwrap();
        let ba = welch_one_sided(&b, &a).unwrap();
        prop_assert!((0.0..=1.0).contains(&ab.p_value));
        prop_assert!((ab.p_value + ba.p_value - 1.0).abs() < 1e-9);
        prop_assert!((ab.delta_mu + ba.delta_mu).abs() < 1e-9);
    }

    #[test]
    fn welch_invariant_to_common_shift(
        a in prop::collection::vec(-5.0f64..5.0, 3..15),
        b in prop::collection::vec(-5.0f64..5.0, 3..15),
        c in -10.0f64..10.0,
    ) {
        let p = welch_one_sided(&a, &b).unwrap().p_value;
        let a2: Vec<f64> = a.iter().map(|v| v + c).collect();
        let b2: Vec<f64> = b.iter().map(|v| v + c).collect();
        let q = welch_one_sided(&a2, &b2).unwrap().p_value;
        prop_assert!((p - q).abs() < 1e-6);
    }

    #[test]
    fn harmonic_mean_bounded_by_min_and_max(ps in prop::collection::vec(1e-12f64..=1.0, 1..50)) {
        let h = harmonic_mean_p(&ps).unwrap();
        let lo = ps.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = ps.iter().cloned().fold(0.0, f64::max);
        prop_assert!(h >= lo * (1.0 - 1e-12) && h <= hi * (1.0 + 1e-12));
    }

    #[test]
    fn normal_cdf_monotone_and_symmetric(z in -30.0f64..30.0, dz in 0.0f64..2.0) {
        prop_assert!(std_normal_cdf(z + dz) >= std_normal_cdf(z));
        prop_assert!((std_normal_cdf(z) + std_normal_cdf(-z) - 1.0).abs() < 1e-12);
    }
}
