use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use savgo_core::diagnostics::{geometry_learnability, spearman, LearnabilitySetup};
use savgo_core::geometry::{cosine, form_pairs, target_similarity, value_gap, BetaScale};

#[test]
fn target_similarity_spans_and_strictly_decreases() {
    for lambda in [0.25, 0.5, 1.0, 1.5, 2.0, 4.0] {
        let ys: Vec<f64> = (0..=100).map(|i| target_similarity(i as f64 / 100.0, lambda).unwrap()).collect();
        assert_eq!(ys[0], 1.0);
        assert_eq!(ys[100], -1.0);
        assert!(ys.iter().all(|y| (-1.0..=1.0).contains(y)));
        assert!(ys.windows(2).all(|w| w[1] < w[0]), "λ={lambda}");
    }
}

#[test]
fn cosine_is_bounded() {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    for _ in 0..10_000 {
        let d = rng.random_range(1..8);
        let u: Vec<f64> = (0..d).map(|_| rng.random_range(-1e3..1e3)).collect();
        let v: Vec<f64> = (0..d).map(|_| rng.random_range(-1e-3..1e-3)).collect();
        assert!(cosine(&u, &v).abs() <= 1.0);
        assert!(cosine(&u, &u).abs() <= 1.0);
    }
}

#[test]
fn derangement_has_no_fixed_points() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for _ in 0..10_000 {
        let b = rng.random_range(2..20);
        let pairs = form_pairs(b, &mut rng).unwrap();
        assert_eq!(pairs.len(), b);
        assert!(pairs.iter().all(|&(i, j)| i != j));
        let mut partners: Vec<usize> = pairs.iter().map(|p| p.1).collect();
        partners.sort_unstable();
        assert_eq!(partners, (0..b).collect::<Vec<_>>());
    }
}

#[test]
fn derangement_partner_marginal_is_uniform() {
    // Partner of each index is uniform over the other 7; count per (i, j)
    // is Binomial(10k, 1/7).
    let b = 8;
    let n = 10_000;
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut counts = vec![vec![0usize; b]; b];
    for _ in 0..n {
        for (i, j) in form_pairs(b, &mut rng).unwrap() {
            counts[i][j] += 1;
        }
    }
    let p = 1.0 / 7.0;
    let mean = n as f64 * p;
    let sigma = (n as f64 * p * (1.0 - p)).sqrt();
    let mut outside = 0;
    for i in 0..b {
        for j in 0..b {
            if i == j {
                assert_eq!(counts[i][j], 0);
                continue;
            }
            let z = (counts[i][j] as f64 - mean).abs() / sigma;
            assert!(z < 4.5, "({i},{j}): z={z}");
            if z > 3.0 {
                outside += 1;
            }
        }
    }
    // 56 cells at 99.73% each: more than 2 misses has probability < 0.1%.
    assert!(outside <= 2, "{outside} cells outside ±3σ");
}

#[test]
fn beta_fixed_point_is_reward_scale_invariant() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let batches: Vec<Vec<f64>> =
        (0..3000).map(|_| (0..32).map(|_| rng.random_range(0.0f64..2.0).powi(2)).collect()).collect();
    let deltas = |c: f64| {
        let mut beta = BetaScale::new(1.0, 0.99, 1e-3).unwrap();
        for b in &batches {
            let scaled: Vec<f64> = b.iter().map(|g| c * g).collect();
            beta.update(&scaled).unwrap();
        }
        // Gaps of the final batch, normalized with the converged scale.
        let last = batches.last().unwrap();
        let mut h = [0usize; 20];
        let mut raw = Vec::new();
        for g in last {
            let d = value_gap(c * g, 0.0, beta.value());
            raw.push(d);
            h[((d * 20.0) as usize).min(19)] += 1;
        }
        (h, raw)
    };
    let (h1, d1) = deltas(1.0);
    let (h10, d10) = deltas(10.0);
    assert_eq!(h1, h10);
    for (a, b) in d1.iter().zip(&d10) {
        assert!((a - b).abs() <= 1e-6, "{a} vs {b}");
    }
}

#[test]
fn spearman_oracle() {
    assert!((spearman(&[1.0, 2.0, 3.0], &[10.0, 20.0, 30.0]) - 1.0).abs() < 1e-15);
    assert!((spearman(&[1.0, 2.0, 3.0], &[3.0, 2.0, 1.0]) + 1.0).abs() < 1e-15);
    // Ranks (1,2,3,4) vs (1.5,1.5,3,4): hand-evaluated Pearson on ranks.
    let r = spearman(&[1.0, 2.0, 3.0, 4.0], &[5.0, 5.0, 6.0, 7.0]);
    assert!((r - 0.948_683_298_050_513_8).abs() < 1e-12, "{r}");
}

#[test]
fn encoder_learns_value_ordering_at_small_scale() {
    let setup = LearnabilitySetup { updates: 600, batch: 32, hidden: 32, embed_dim: 16, learning_rate: 1e-3, ..Default::default() };
    let before = geometry_learnability(0, LearnabilitySetup { updates: 0, ..setup }).unwrap();
    let after = geometry_learnability(0, setup).unwrap();
    assert!(after.spearman > before.spearman + 0.2, "{before:?} → {after:?}");
}

proptest! {
    #[test]
    fn value_gap_in_unit_interval(qi in -1e6f64..1e6, qj in -1e6f64..1e6, beta in 1e-3f64..1e3) {
        let d = value_gap(qi, qj, beta);
        prop_assert!((0.0..=1.0).contains(&d));
        prop_assert_eq!(d, value_gap(qj, qi, beta));
    }

    #[test]
    fn beta_never_below_floor(gaps in prop::collection::vec(0.0f64..100.0, 1..50), steps in 1usize..200) {
        let mut beta = BetaScale::new(1.0, 0.9, 1e-3).unwrap();
        for _ in 0..steps {
            prop_assert!(beta.update(&gaps).unwrap() >= 1e-3);
        }
    }

    #[test]
    fn cosine_scale_invariant(u in prop::collection::vec(-10.0f64..10.0, 3), v in prop::collection::vec(-10.0f64..10.0, 3)) {
        prop_assume!(u.iter().any(|x| *x != 0.0) && v.iter().any(|x| *x != 0.0));
        let u2: Vec<f64> = u.iter().map(|x| 2.0 * x).collect();
        prop_assert_eq!(cosine(&u2, &v), cosine(&u, &v));
    }
}
