use cd_core::attribution::*;
use cd_core::decomposer::{Decomposition, Provenance};
use cd_core::embedding::{Encoder, LabelSet};
use cd_core::numerics::Matrix;
use cd_core::transformer::{Example, ModelConfig, ToyTransformer};
use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn rand_matrix(rows: usize, cols: usize, std: f64, seed: u64) -> Matrix {
    Matrix::random_normal(rows, cols, std, &mut ChaCha8Rng::seed_from_u64(seed))
}

fn model(seed: u64) -> ToyTransformer {
    ToyTransformer::new(ModelConfig {
        d: 16,
        heads: 2,
        ffn_dim: 8,
        vocab_size: 64,
        num_classes: 3,
        init_std: 0.4,
        seed,
        ..Default::default()
    })
    .unwrap()
}

fn decomposition(n_c: usize, n_q: usize, seed: u64) -> Decomposition {
    Decomposition::new(
        rand_matrix(16, n_c, 0.4, seed),
        rand_matrix(n_c, n_q, 1.0, seed + 1),
        (0..n_c as u32).collect(),
        vec![0; n_c],
        Provenance::CdTuned,
    )
    .unwrap()
}

fn example(m: &ToyTransformer, seed: u64) -> Example {
    m.prepare(&rand_matrix(16, 3, 0.5, seed), 0).unwrap()
}

#[test]
fn zero_classifier_gives_zero_scores() {
    let mut m = model(1);
    m.classifier = Matrix::zeros(3, 16);
    let dec = decomposition(4, 2, 1);
    let ex = example(&m, 2);
    let obj = LogitObjective::predicted(&m, &dec, &ex).unwrap();
    assert!(grad_attribution(&obj, &dec.q).unwrap().scores.iter().all(|&s| s == 0.0));
    assert!(integrated_gradients(&obj, &dec.q, 8).unwrap().scores.iter().all(|&s| s == 0.0));
}

#[test]
fn linear_objective_has_closed_form_scores() {
    let q = rand_matrix(5, 3, 1.0, 3);
    let w = vec![0.5, -1.0, 2.0, 0.0, 3.0];
    let obj = LinearObjective { weights: w.clone() };
    let want: Vec<f64> = q.row_sums().iter().zip(&w).map(|(s, w)| s * w).collect();
    let g = grad_attribution(&obj, &q).unwrap();
    for steps in [1, 3, 64] {
        let ig = integrated_gradients(&obj, &q, steps).unwrap();
        for ((a, b), c) in g.scores.iter().zip(&ig.scores).zip(&want) {
            assert!((a - c).abs() < 1e-12);
            assert!((b - c).abs() < 1e-12);
        }
    }
}

#[test]
fn logit_gradient_matches_finite_differences() {
    let m = model(2);
    let dec = decomposition(4, 2, 5);
    let ex = example(&m, 6);
    let obj = LogitObjective::predicted(&m, &dec, &ex).unwrap();
    let g = obj.grad(&dec.q).unwrap();
    let h = 1e-5;
    for p in 0..4 {
        for c in 0..2 {
            let (mut up, mut down) = (dec.q.clone(), dec.q.clone());
            up[(p, c)] += h;
            down[(p, c)] -= h;
            let fd = (obj.value(&up).unwrap() - obj.value(&down).unwrap()) / (2.0 * h);
            let rel = (fd - g[(p, c)]).abs() / fd.abs().max(g[(p, c)].abs()).max(1e-6);
            assert!(rel < 1e-4, "{fd} vs {}", g[(p, c)]);
        }
    }
}

#[test]
fn ig_at_baseline_is_zero() {
    let m = model(3);
    let mut dec = decomposition(3, 2, 7);
    dec.q = Matrix::zeros(3, 2);
    let ex = example(&m, 8);
    let obj = LogitObjective::predicted(&m, &dec, &ex).unwrap();
    assert!(integrated_gradients(&obj, &dec.q, 16).unwrap().scores.iter().all(|&s| s == 0.0));
    assert!(integrated_gradients(&obj, &dec.q, 0).is_err());
}

#[test]
fn ig_is_complete_at_512_steps() {
    for seed in 0..5 {
        let m = model(10 + seed);
        let dec = decomposition(5, 2, 20 + seed);
        let ex = example(&m, 30 + seed);
        let obj = LogitObjective::predicted(&m, &dec, &ex).unwrap();
        let ig = integrated_gradients(&obj, &dec.q, 512).unwrap();
        let gap = ig.scores.iter().sum::<f64>()
            - (obj.value(&dec.q).unwrap() - obj.value(&Matrix::zeros(5, 2)).unwrap());
        assert!(gap.abs() < 1e-3, "{gap}");
    }
}

#[test]
fn single_concept_gets_the_whole_difference() {
    let m = model(4);
    let dec = decomposition(1, 2, 9);
    let ex = example(&m, 10);
    let obj = LogitObjective::predicted(&m, &dec, &ex).unwrap();
    let s = shapley_attribution(&obj, &dec.q, ShapleyMode::Exact).unwrap();
    let want = obj.value(&dec.q).unwrap() - obj.value(&Matrix::zeros(1, 2)).unwrap();
    assert!((s.scores[0] - want).abs() < 1e-12);
}

#[test]
fn symmetric_and_null_concepts() {
    let m = model(5);
    let mut dec = decomposition(4, 2, 11);
    // Concepts 0 and 1 are identical; concept 3 has a zero row.
    let c0 = dec.c.col(0);
    dec.c.set_col(1, &c0);
    let r0 = dec.q.row(0).to_vec();
    dec.q.row_mut(1).copy_from_slice(&r0);
    dec.q.row_mut(3).fill(0.0);
    let ex = example(&m, 12);
    let obj = LogitObjective::predicted(&m, &dec, &ex).unwrap();
    let s = shapley_attribution(&obj, &dec.q, ShapleyMode::Exact).unwrap();
    assert_eq!(s.scores[0], s.scores[1]);
    assert_eq!(s.scores[3], 0.0);
    let eff = s.scores.iter().sum::<f64>() - (obj.value(&dec.q).unwrap() - obj.value(&Matrix::zeros(4, 2)).unwrap());
    assert!(eff.abs() < 1e-9);
}

#[test]
fn exact_shapley_has_a_player_budget() {
    let r = shapley_exact(13, |_| Ok(0.0));
    assert!(matches!(r, Err(cd_core::Error::Budget(_))));
    assert!(shapley_exact(12, |_| Ok(1.0)).is_ok());
}

/// An 8-player game with squared weights, a pairwise interaction, a
/// majority over players 1..4 and a threshold on the weight sum. The last
/// two keep antithetic permutation pairs from being exact.
fn toy_game(members: &[bool]) -> cd_core::Result<f64> {
    let w = [1.0, 2.0, 0.5, -1.0, 3.0, 0.0, 1.5, -0.5];
    let s: f64 = members.iter().zip(&w).filter(|(m, _)| **m).map(|(_, w)| w).sum();
    let pair = if members[0] && members[4] { 2.0 } else { 0.0 };
    let majority = if members[1..4].iter().filter(|m| **m).count() >= 2 { 3.0 } else { 0.0 };
    let threshold = if s >= 3.0 { 1.5 } else { 0.0 };
    Ok(s * s / 4.0 + pair + majority + threshold)
}

#[test]
fn monte_carlo_shapley_approaches_exact() {
    let exact = shapley_exact(8, toy_game).unwrap();
    let (mc, half_width) = shapley_monte_carlo(8, 10_000, 7, toy_game).unwrap();
    // The error of every player stays inside twice the reported half-width.
    for (a, b) in exact.iter().zip(&mc) {
        assert!((a - b).abs() <= 2.0 * half_width, "{a} vs {b} (half-width {half_width})");
    }
    assert!(half_width < 0.1);
    // Each permutation pair telescopes to v(N) - v(empty).
    let total = toy_game(&[true; 8]).unwrap() - toy_game(&[false; 8]).unwrap();
    assert!((mc.iter().sum::<f64>() - total).abs() < 1e-9);
    assert!((exact.iter().sum::<f64>() - total).abs() < 1e-9);
    // Player 5 has zero weight and no interaction.
    assert!(exact[5].abs() < 1e-12);
}

#[test]
fn correlation_of_keys_with_themselves() {
    let keys = vec![3.0, 1.0, 2.0, 5.0];
    let neg: Vec<f64> = keys.iter().map(|k| -k).collect();
    assert!((correlation_top_k(&keys, &keys, 4).unwrap().unwrap() - 1.0).abs() < 1e-12);
    assert!((correlation_top_k(&keys, &neg, 4).unwrap().unwrap() + 1.0).abs() < 1e-12);
    assert_eq!(correlation_top_k(&keys, &[1.0; 4], 4).unwrap(), None);
    assert_eq!(correlation_top_k(&keys, &keys, 1).unwrap(), None);
    assert!(correlation_top_k(&keys, &keys, 5).is_err());
    assert_eq!(top_k_by_key(&[1.0, 2.0, 2.0, 0.0], 3), vec![1, 2, 0]);
}

#[test]
fn correlation_decays_when_noise_sits_in_the_tail() {
    let keys: Vec<f64> = (0..10).map(|i| 10.0 - i as f64).collect();
    let scores: Vec<f64> = keys
        .iter()
        .enumerate()
        .map(|(i, k)| k + if i % 2 == 0 { 1.0 } else { -1.0 } * 0.08 * (i * i) as f64)
        .collect();
    let r3 = correlation_top_k(&keys, &scores, 3).unwrap().unwrap().abs();
    let r5 = correlation_top_k(&keys, &scores, 5).unwrap().unwrap().abs();
    let r10 = correlation_top_k(&keys, &scores, 10).unwrap().unwrap().abs();
    assert!(r3 >= r5 && r5 >= r10, "{r3} {r5} {r10}");
}

#[test]
fn concept_correlation_uses_row_sum_keys() {
    let dec = decomposition(6, 3, 40);
    let keys = dec.q.row_sums();
    assert!((concept_correlation(&dec, &keys, 6).unwrap().unwrap() - 1.0).abs() < 1e-12);
}

#[test]
fn vocab_baseline_orders_by_best_label_cosine() {
    let enc = Encoder::hash(32, 5);
    let labels = LabelSet::new(["sunny", "rainy"]).unwrap();
    let vocab: Vec<String> = (0..100).map(|i| format!("tok{i}")).collect();
    let all = vocab_baseline(&enc, &labels, &vocab, 100).unwrap();
    let score = |t: &str| {
        let e = enc.embed(t).unwrap();
        labels
            .names()
            .iter()
            .map(|l| enc.embed(l).unwrap().iter().zip(&e).map(|(a, b)| a * b).sum::<f64>())
            .fold(f64::NEG_INFINITY, f64::max)
    };
    let mut oracle = vocab.clone();
    oracle.sort_by(|a, b| score(b).partial_cmp(&score(a)).unwrap());
    assert_eq!(all, oracle);
    let top = vocab_baseline(&enc, &labels, &vocab, 10).unwrap();
    assert_eq!(top, oracle[..10]);

    let mut with_label = vocab.clone();
    with_label.push("rainy".into());
    assert_eq!(vocab_baseline(&enc, &labels, &with_label, 1).unwrap(), vec!["rainy".to_string()]);
    assert!(vocab_baseline(&enc, &labels, &[], 0).is_err());
    assert!(vocab_baseline(&enc, &labels, &vocab, 101).is_err());
}

#[test]
fn accuracy_bounds() {
    let m = model(6);
    let prompt = rand_matrix(16, 1, 0.5, 1);
    let pc = m.prompt_cache(&prompt).unwrap();
    let mut data: Vec<Example> = (0..10).map(|s| example(&m, 100 + s)).collect();
    for ex in &mut data {
        ex.label = m.predict(&pc, ex);
    }
    assert_eq!(accuracy(&m, &prompt, &data).unwrap(), 1.0);
    assert!(matches!(accuracy(&m, &prompt, &[]), Err(cd_core::Error::InvalidInput(_))));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn accuracy_ignores_order(seed in 0u64..1000) {
        let m = model(7);
        let prompt = rand_matrix(16, 1, 0.5, seed);
        let mut data: Vec<Example> = (0..12).map(|s| {
            let mut ex = example(&m, seed * 100 + s);
            ex.label = (s % 3) as usize;
            ex
        }).collect();
        let a = accuracy(&m, &prompt, &data).unwrap();
        data.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        prop_assert_eq!(a, accuracy(&m, &prompt, &data).unwrap());
    }

    #[test]
    fn exact_shapley_is_efficient(seed in 0u64..10_000, n in 1usize..8) {
        let q = rand_matrix(n, 2, 1.0, seed);
        let w: Vec<f64> = rand_matrix(n, 1, 1.0, seed + 1).col(0);
        let game = |m: &[bool]| {
            let s: f64 = m.iter().enumerate().filter(|(_, b)| **b).map(|(i, _)| w[i] * (q[(i, 0)] + q[(i, 1)])).sum();
            Ok(s.tanh())
        };
        let phi = shapley_exact(n, game).unwrap();
        let total = game(&vec![true; n]).unwrap() - game(&vec![false; n]).unwrap();
        prop_assert!((phi.iter().sum::<f64>() - total).abs() < 1e-9);
    }
}

#[test]
fn correlation_report_csv_marks_undefined_values() {
    let rows = vec![
        CorrelationRow::from_values("weather", "ig", 3, &[Some(0.5), Some(0.7), None]),
        CorrelationRow::from_values("weather", "grad", 3, &[None, None]),
    ];
    let csv = CorrelationReport { rows }.to_csv();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], "dataset,method,top_k,rho,variance,n");
    assert!(lines[1].starts_with("weather,ig,3,0.600000,"));
    assert!(lines[1].ends_with(",2"));
    assert_eq!(lines[2], "weather,grad,3,n/a,n/a,0");
}
