use cd_core::numerics::Matrix;
use cd_core::submodular::*;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn unit(rng: &mut ChaCha8Rng, dim: usize) -> Vec<f64> {
    let v: Vec<f64> = (0..dim).map(|_| rng.random_range(-1.0..1.0)).collect();
    let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    v.into_iter().map(|x| x / n).collect()
}

fn instance(seed: u64, n: usize, classes: usize) -> SimilarityCache {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let concepts: Vec<Vec<f64>> = (0..n).map(|_| unit(&mut rng, 6)).collect();
    let class_emb: Vec<Vec<f64>> = (0..classes).map(|_| unit(&mut rng, 6)).collect();
    SimilarityCache::from_embeddings((0..n as u32).collect(), &concepts, &class_emb, Similarity::ShiftedCosine)
        .unwrap()
}

fn cfg(k: usize, lambda: f64) -> SelectionConfig {
    SelectionConfig {
        k,
        lambda,
        ..Default::default()
    }
}

/// Cache with a hand-built similarity matrix and uniform class similarities.
fn toy(phi: Vec<Vec<f64>>) -> SimilarityCache {
    let n = phi.len();
    let rows: Vec<&[f64]> = phi.iter().map(Vec::as_slice).collect();
    SimilarityCache {
        ids: (0..n as u32).collect(),
        class_concept: Matrix::zeros(2, n),
        concept_concept: Matrix::from_rows(&rows),
    }
}

#[test]
fn empty_set_scores_zero() {
    let c = instance(0, 5, 2);
    assert_eq!(diversity_score(&[], &c, &cfg(3, 1.0)), 0.0);
    assert_eq!(coverage_score(&[], &c, &cfg(3, 1.0)), 0.0);
    assert_eq!(objective(&[], &c, &cfg(3, 1.0)), 0.0);
}

#[test]
fn uniform_class_distribution_has_log2_diversity() {
    let c = toy(vec![vec![1.0]]);
    let d = diversity_score(&[0], &c, &cfg(1, 1.0));
    assert!((d - 2f64.ln()).abs() < 1e-12);
}

#[test]
fn concentrated_class_distribution_has_near_zero_diversity() {
    let mut c = toy(vec![vec![1.0]]);
    c.class_concept = Matrix::from_rows(&[&[1.0], &[-1.0]]);
    let sharp = SelectionConfig {
        temperature: 0.01,
        ..cfg(1, 1.0)
    };
    assert!(diversity_score(&[0], &c, &sharp) < 1e-6);
}

#[test]
fn full_set_covers_itself() {
    let c = instance(3, 7, 2);
    let all: Vec<usize> = (0..7).collect();
    assert!((coverage_score(&all, &c, &cfg(7, 1.0)) - 7.0).abs() < 1e-12);
    let single = coverage_score(&[2], &c, &cfg(1, 1.0));
    let col: f64 = (0..7).map(|i| c.concept_concept[(i, 2)]).sum();
    assert!((single - col).abs() < 1e-12);
}

#[test]
fn pairwise_mode_is_a_double_sum() {
    let c = instance(4, 6, 2);
    let pw = SelectionConfig {
        coverage_mode: CoverageMode::PairwiseSum,
        ..cfg(2, 0.0)
    };
    let want: f64 = (0..6).map(|i| c.concept_concept[(i, 1)] + c.concept_concept[(i, 4)]).sum();
    assert!((coverage_score(&[1, 4], &c, &pw) - want).abs() < 1e-12);
}

fn medoid_toy() -> SimilarityCache {
    // Cluster {0, 1, 2} with medoid 1, and a singleton cluster {3}.
    toy(vec![
        vec![1.0, 0.9, 0.6, 0.1],
        vec![0.9, 1.0, 0.9, 0.1],
        vec![0.6, 0.9, 1.0, 0.1],
        vec![0.1, 0.1, 0.1, 1.0],
    ])
}

#[test]
fn medoids_maximize_coverage_on_four_point_toy() {
    let c = medoid_toy();
    let cf = cfg(2, 0.0);
    let mut best = (f64::NEG_INFINITY, vec![]);
    for a in 0..4 {
        for b in (a + 1)..4 {
            let hand: f64 = (0..4)
                .map(|i| c.concept_concept[(i, a)].max(c.concept_concept[(i, b)]))
                .sum();
            assert!((coverage_score(&[a, b], &c, &cf) - hand).abs() < 1e-12);
            if hand > best.0 {
                best = (hand, vec![a as u32, b as u32]);
            }
        }
    }
    assert_eq!(best.1, vec![1, 3]);
    assert!((best.0 - 3.8).abs() < 1e-12);
    assert_eq!(brute_force_opt(&c, "y", &cf).unwrap().ids, vec![1, 3]);
}

#[test]
fn objective_adds_weighted_terms() {
    let c = medoid_toy();
    let cov = 3.8;
    let div = 2.0 * 2f64.ln();
    assert!((objective(&[1, 3], &c, &cfg(2, 0.0)) - cov).abs() < 1e-12);
    assert!((objective(&[1, 3], &c, &cfg(2, 1.0)) - (cov + div)).abs() < 1e-12);
}

#[test]
fn k_at_least_pool_size_returns_everything() {
    let c = instance(5, 6, 2);
    let s = greedy_select(&c, "y", &cfg(10, 1.0)).unwrap();
    let mut ids = s.ids.clone();
    ids.sort();
    assert_eq!(ids, (0..6).collect::<Vec<u32>>());
}

#[test]
fn duplicates_are_not_chosen_before_distinct_candidates() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let a = unit(&mut rng, 6);
    let b = unit(&mut rng, 6);
    let e = unit(&mut rng, 6);
    let concepts = vec![a.clone(), a.clone(), b.clone(), b, e];
    let classes = vec![unit(&mut rng, 6), unit(&mut rng, 6)];
    let c = SimilarityCache::from_embeddings((0..5).collect(), &concepts, &classes, Similarity::ShiftedCosine).unwrap();
    let s = greedy_select(&c, "y", &cfg(3, 0.0)).unwrap();
    let mut groups: Vec<u32> = s.ids.iter().map(|&i| [0, 0, 1, 1, 2][i as usize]).collect();
    groups.sort();
    groups.dedup();
    assert_eq!(groups.len(), 3, "{:?}", s.ids);
}

#[test]
fn empty_class_is_an_error() {
    let c = SimilarityCache {
        ids: vec![],
        class_concept: Matrix::zeros(2, 0),
        concept_concept: Matrix::zeros(0, 0),
    };
    assert!(matches!(greedy_select(&c, "y", &cfg(2, 1.0)), Err(cd_core::Error::EmptyClass(_))));
}

#[test]
fn brute_force_edge_cases() {
    let c = instance(6, 6, 3);
    let one = brute_force_opt(&c, "y", &cfg(1, 1.0)).unwrap();
    let g = greedy_select(&c, "y", &cfg(1, 1.0)).unwrap();
    assert_eq!(one.ids, g.ids);
    let full = brute_force_opt(&c, "y", &cfg(6, 1.0)).unwrap();
    assert_eq!(full.ids, (0..6).collect::<Vec<u32>>());
    let big = instance(7, 40, 2);
    assert!(matches!(brute_force_opt(&big, "y", &cfg(20, 1.0)), Err(cd_core::Error::Budget(_))));
}

#[test]
fn optimum_dominates_greedy_across_seeds() {
    for seed in 0..100 {
        let c = instance(seed, 8, 2);
        let o = brute_force_opt(&c, "y", &cfg(3, 1.0)).unwrap();
        let g = greedy_select(&c, "y", &cfg(3, 1.0)).unwrap();
        assert!(o.objective >= g.objective - 1e-12);
    }
}

#[test]
fn selected_set_serializes_with_spec_fields() {
    let c = instance(2, 5, 2);
    let s = greedy_select(&c, "pos", &cfg(2, 1.0)).unwrap();
    let v: serde_json::Value = serde_json::to_value(&s).unwrap();
    for key in ["class", "k", "ids", "gains", "objective"] {
        assert!(v.get(key).is_some(), "{key}");
    }
}

fn subset(mask: u32, n: usize) -> Vec<usize> {
    (0..n).filter(|i| mask >> i & 1 == 1).collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn monotone_and_diminishing(seed in 0u64..1_000_000, n in 3usize..9, a in 0u32..512, extra in 0u32..512, x in 0usize..9) {
        let c = instance(seed, n, 3);
        let cf = cfg(n, 1.0);
        let full = (1u32 << n) - 1;
        let a_mask = a & full;
        let b_mask = (a | extra) & full;
        let x = x % n;
        let (sa, sb) = (subset(a_mask, n), subset(b_mask, n));
        prop_assert!(objective(&sa, &c, &cf) <= objective(&sb, &c, &cf) + 1e-9);
        if b_mask >> x & 1 == 0 {
            let with = |s: &[usize]| { let mut v = s.to_vec(); v.push(x); v };
            let ga = objective(&with(&sa), &c, &cf) - objective(&sa, &c, &cf);
            let gb = objective(&with(&sb), &c, &cf) - objective(&sb, &c, &cf);
            prop_assert!(ga >= gb - 1e-9);
        }
    }

    #[test]
    fn diversity_is_modular(seed in 0u64..1_000_000, n in 2usize..9, a in 0u32..256) {
        let c = instance(seed, n, 2);
        let cf = cfg(n, 1.0);
        let full = (1u32 << n) - 1;
        let (sa, sb) = (subset(a & full, n), subset(!a & full, n));
        let all: Vec<usize> = (0..n).collect();
        let lhs = diversity_score(&all, &c, &cf);
        let rhs = diversity_score(&sa, &c, &cf) + diversity_score(&sb, &c, &cf);
        prop_assert!((lhs - rhs).abs() < 1e-12);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn greedy_within_bound_and_lazy_matches_naive(seed in 0u64..1_000_000, n in 1usize..=10, k in 1usize..=3, lambda in 0.0f64..2.0) {
        let c = instance(seed, n, 2);
        let cf = cfg(k, lambda);
        let naive = naive_greedy(&c, "y", &cf).unwrap();
        let lazy = lazy_greedy(&c, "y", &cf).unwrap();
        prop_assert_eq!(&naive.ids, &lazy.ids);
        let opt = brute_force_opt(&c, "y", &cf).unwrap();
        let bound = 1.0 - (-1.0f64).exp();
        prop_assert!(naive.objective >= bound * opt.objective - 1e-9);
        for w in naive.gains.windows(2) {
            prop_assert!(w[0] >= w[1] - 1e-9);
        }
    }
}
