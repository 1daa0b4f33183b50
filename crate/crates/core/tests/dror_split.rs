mod common;

use common::oracles::dror_brute_force;
use common::{random_cloud, split_scene};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use snowsim::dror::{classify_snowfall, dror_filter, dror_mask, DrorConfig, SnowfallClass, SplitConfig};
use snowsim::io::PointCloud;

#[test]
fn mask_equals_brute_force() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let cfg = DrorConfig::default();
    for case in 0..100 {
        let n = rng.random_range(0..=5000);
        let pc = random_cloud(&mut rng, n);
        let want = dror_brute_force(&pc.points, cfg.alpha, cfg.beta, cfg.k_min, cfg.r_min);
        let got = dror_mask(&pc, &cfg).unwrap();
        assert_eq!(got, want, "case {case} ({n} points)");
    }
}

#[test]
fn filter_partitions_the_cloud() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let pc = random_cloud(&mut rng, 3000);
    let (kept, removed) = dror_filter(&pc, &DrorConfig::default()).unwrap();
    assert_eq!(kept.len() + removed.len(), pc.len());
    assert!(!kept.is_empty() && !removed.is_empty());
}

#[test]
fn mask_is_permutation_invariant() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let pc = random_cloud(&mut rng, 4000);
    let cfg = DrorConfig::default();
    let mask = dror_mask(&pc, &cfg).unwrap();
    let mut order: Vec<usize> = (0..pc.len()).collect();
    order.shuffle(&mut rng);
    let shuffled = PointCloud::new(order.iter().map(|&k| pc.points[k]).collect());
    let smask = dror_mask(&shuffled, &cfg).unwrap();
    for (j, &k) in order.iter().enumerate() {
        assert_eq!(smask[j], mask[k]);
    }
}

#[test]
fn thresholds_split_clear_light_heavy() {
    let cfg = DrorConfig::default();
    let split = SplitConfig::default();
    for (n, class) in [
        (0, SnowfallClass::Clear),
        (9, SnowfallClass::Clear),
        (10, SnowfallClass::Light),
        (50, SnowfallClass::Light),
        (79, SnowfallClass::Light),
        (80, SnowfallClass::Heavy),
    ] {
        let pc = split_scene(n);
        assert_eq!(classify_snowfall(&pc, &cfg, &split).unwrap(), (class, n), "{n} clutter points");
    }
}
