use cd_core::numerics::{log_softmax, Matrix};
use cd_core::optim::AdamWConfig;
use cd_core::transformer::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn small(seed: u64, activation: Activation, std: f64) -> ToyTransformer {
    ToyTransformer::new(ModelConfig {
        d: 16,
        heads: 2,
        ffn_dim: 8,
        activation,
        vocab_size: 64,
        num_classes: 3,
        init_std: std,
        seed,
        ..Default::default()
    })
    .unwrap()
}

fn rand_matrix(rows: usize, cols: usize, std: f64, seed: u64) -> Matrix {
    Matrix::random_normal(rows, cols, std, &mut ChaCha8Rng::seed_from_u64(seed))
}

#[test]
fn zero_weights_give_zero_logits() {
    let cfg = ModelConfig {
        d: 8,
        heads: 2,
        ffn_dim: 4,
        vocab_size: 16,
        ..Default::default()
    };
    let z = |r, c| Matrix::zeros(r, c);
    let heads = (0..2)
        .map(|_| HeadWeights {
            w_q: z(4, 8),
            w_k: z(4, 8),
            w_v: z(4, 8),
            w_o: z(8, 4),
        })
        .collect();
    let m = ToyTransformer::from_parts(cfg, z(16, 8), heads, z(8, 4), z(8, 4), z(2, 8)).unwrap();
    let (logits, _) = m.forward(&z(8, 1), &z(8, 3)).unwrap();
    assert_eq!(logits, vec![0.0, 0.0]);
}

#[test]
fn single_token_attends_to_itself() {
    let m = ToyTransformer::new(ModelConfig {
        d: 8,
        heads: 1,
        ffn_dim: 4,
        vocab_size: 16,
        readout: Readout::MaskToken,
        ..Default::default()
    })
    .unwrap();
    let (_, trace) = m.forward(&Matrix::zeros(8, 0), &rand_matrix(8, 1, 1.0, 3)).unwrap();
    assert_eq!(trace.attention[0].shape(), (1, 1));
    assert!((trace.attention[0][(0, 0)] - 1.0).abs() < 1e-15);
}

#[test]
fn attention_rows_are_distributions() {
    let m = small(5, Activation::Gelu, 0.3);
    let (_, trace) = m.forward(&rand_matrix(16, 2, 0.5, 1), &rand_matrix(16, 5, 0.5, 2)).unwrap();
    for a in &trace.attention {
        for i in 0..a.rows() {
            assert!(a.row(i).iter().all(|&x| x >= 0.0));
            assert!((a.row(i).iter().sum::<f64>() - 1.0).abs() < 1e-9);
        }
    }
}

#[test]
fn shape_mismatch_is_an_error() {
    let m = small(0, Activation::Gelu, 0.02);
    assert!(m.forward(&Matrix::zeros(15, 1), &Matrix::zeros(16, 2)).is_err());
    assert!(m.forward(&Matrix::zeros(16, 1), &Matrix::zeros(16, 0)).is_err());
    assert!(m.forward(&Matrix::zeros(16, 0), &Matrix::zeros(16, 2)).is_err());
}

/// Straight-line forward pass over plain vectors, written independently of
/// the library's matrix code.
fn reference_logits(m: &ToyTransformer, prompt: &Matrix, input: &Matrix) -> Vec<f64> {
    let d = m.d();
    let mut toks: Vec<Vec<f64>> = Vec::new();
    for j in 0..prompt.cols() {
        toks.push((0..d).map(|r| prompt[(r, j)]).collect());
    }
    for j in 0..input.cols() {
        toks.push((0..d).map(|r| input[(r, j)]).collect());
    }
    let matvec = |w: &Matrix, v: &[f64]| -> Vec<f64> {
        (0..w.rows())
            .map(|i| (0..w.cols()).map(|k| w[(i, k)] * v[k]).sum())
            .collect()
    };
    let t0 = &toks[0];
    let mut x = t0.clone();
    for h in &m.heads {
        let dh = h.w_q.rows();
        let q = matvec(&h.w_q, t0);
        let scores: Vec<f64> = toks
            .iter()
            .map(|t| {
                let k = matvec(&h.w_k, t);
                q.iter().zip(&k).map(|(a, b)| a * b).sum::<f64>() / (dh as f64).sqrt()
            })
            .collect();
        let mx = scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let ex: Vec<f64> = scores.iter().map(|s| (s - mx).exp()).collect();
        let tot: f64 = ex.iter().sum();
        let mut z = vec![0.0; dh];
        for (t, e) in toks.iter().zip(&ex) {
            let v = matvec(&h.w_v, t);
            for i in 0..dh {
                z[i] += e / tot * v[i];
            }
        }
        let o = matvec(&h.w_o, &z);
        for i in 0..d {
            x[i] += o[i];
        }
    }
    let mcols = m.w1.cols();
    let mut y = x.clone();
    for k in 0..mcols {
        let pre: f64 = (0..d).map(|r| m.w1[(r, k)] * x[r]).sum();
        let g = 0.5 * pre * (1.0 + ((2.0 / std::f64::consts::PI).sqrt() * (pre + 0.044715 * pre.powi(3))).tanh());
        for r in 0..d {
            y[r] += g * m.w2[(r, k)];
        }
    }
    matvec(&m.classifier, &y)
}

#[test]
fn seed_42_matches_reference_implementation() {
    let m = small(42, Activation::Gelu, 0.3);
    let prompt = rand_matrix(16, 2, 0.5, 42);
    let input = rand_matrix(16, 3, 0.5, 43);
    let (logits, _) = m.forward(&prompt, &input).unwrap();
    let want = reference_logits(&m, &prompt, &input);
    for (a, b) in logits.iter().zip(&want) {
        assert!((a - b).abs() < 1e-12, "{a} vs {b}");
    }
}

#[test]
fn fast_readout_matches_full_forward() {
    for readout in [Readout::FirstPrompt, Readout::MaskToken] {
        let mut cfg = small(9, Activation::Gelu, 0.3).config().clone();
        cfg.readout = readout;
        let m = ToyTransformer::new(cfg).unwrap();
        let prompt = rand_matrix(16, 3, 0.5, 1);
        let input = rand_matrix(16, 4, 0.5, 2);
        let (full, trace) = m.forward(&prompt, &input).unwrap();
        let ex = m.prepare(&input, 1).unwrap();
        let pc = m.prompt_cache(&prompt).unwrap();
        let st = m.readout(&pc, &ex);
        for (a, b) in full.iter().zip(&st.logits) {
            assert!((a - b).abs() < 1e-12);
        }
        let dl = vec![0.3, -1.0, 0.7];
        let g_fast = m.prompt_grad(&pc, &ex, &st, &dl);
        let g_full = m.backward(&trace, &dl);
        for r in 0..16 {
            for j in 0..3 {
                assert!((g_fast[(r, j)] - g_full[(r, j)]).abs() < 1e-12);
            }
        }
    }
}

#[test]
fn ffn_output_lies_in_span_of_outer_weights() {
    for seed in 0..100 {
        let act = [Activation::Gelu, Activation::Relu, Activation::Identity][seed as usize % 3];
        let m = small(seed, act, 0.3);
        let (_, trace) = m
            .forward(&rand_matrix(16, 2, 0.5, seed + 500), &rand_matrix(16, 4, 0.5, seed + 900))
            .unwrap();
        assert!(verify_span_membership(&trace, &m) < 1e-9);
    }
}

#[test]
fn single_inner_unit_output_is_parallel_to_p1() {
    let m = ToyTransformer::new(ModelConfig {
        d: 8,
        heads: 2,
        ffn_dim: 1,
        vocab_size: 16,
        init_std: 0.4,
        seed: 4,
        ..Default::default()
    })
    .unwrap();
    let (_, trace) = m.forward(&rand_matrix(8, 1, 1.0, 1), &rand_matrix(8, 3, 1.0, 2)).unwrap();
    let p1 = m.w2.col(0);
    let n1 = p1.iter().map(|x| x * x).sum::<f64>().sqrt();
    for i in 0..trace.ffn_out.rows() {
        let f = trace.ffn_out.row(i);
        let nf = f.iter().map(|x| x * x).sum::<f64>().sqrt();
        if nf > 1e-12 {
            let cos: f64 = f.iter().zip(&p1).map(|(a, b)| a * b).sum::<f64>() / (nf * n1);
            assert!((cos.abs() - 1.0).abs() < 1e-12);
        }
    }
}

#[test]
fn two_term_split_is_exact_for_identity() {
    for seed in 0..20 {
        let m = small(seed, Activation::Identity, 0.3);
        let (_, trace) = m.forward(&rand_matrix(16, 2, 0.5, seed), &rand_matrix(16, 3, 0.5, seed + 1)).unwrap();
        assert!(verify_two_term_split(&trace, &m).unwrap() < 1e-9);
    }
    let m = small(0, Activation::Gelu, 0.3);
    let (_, trace) = m.forward(&rand_matrix(16, 1, 0.5, 0), &rand_matrix(16, 2, 0.5, 1)).unwrap();
    assert!(verify_two_term_split(&trace, &m).is_err());
}

#[test]
fn gradients_match_finite_differences() {
    let m = small(42, Activation::Gelu, 0.5);
    let g = gradient_check(&m, &rand_matrix(16, 2, 0.5, 1), &rand_matrix(16, 3, 0.5, 2), 1).unwrap();
    assert!(g.max_rel_error < 1e-4, "{}", g.max_rel_error);

    let m = small(7, Activation::Identity, 0.5);
    let g = gradient_check(&m, &rand_matrix(16, 2, 0.5, 3), &rand_matrix(16, 3, 0.5, 4), 0).unwrap();
    assert!(g.max_rel_error < 1e-6, "{}", g.max_rel_error);

    let mut checked = 0;
    for seed in 0..10 {
        let m = small(seed, Activation::Relu, 0.5);
        let g = gradient_check(&m, &rand_matrix(16, 2, 0.5, seed + 10), &rand_matrix(16, 3, 0.5, seed + 20), 2)
            .unwrap();
        if !g.near_kink {
            assert!(g.max_rel_error < 1e-4, "{}", g.max_rel_error);
            checked += 1;
        }
    }
    assert!(checked > 0);
}

fn ce(m: &ToyTransformer, prompt: &Matrix, input: &Matrix, label: usize) -> f64 {
    -log_softmax(&m.forward(prompt, input).unwrap().0)[label]
}

#[test]
fn weight_gradients_match_finite_differences() {
    let m = small(11, Activation::Gelu, 0.4);
    let prompt = rand_matrix(16, 2, 0.5, 1);
    let input = rand_matrix(16, 3, 0.5, 2);
    let (logits, trace) = m.forward(&prompt, &input).unwrap();
    let mut dl = cd_core::numerics::softmax(&logits, 1.0);
    dl[0] -= 1.0;
    let (grads, _) = m.backward_weights(&trace, &dl);
    let h = 1e-5;
    let probes: Vec<(&str, usize, usize, f64)> = vec![
        ("w1", 3, 2, grads.w1[(3, 2)]),
        ("w2", 5, 7, grads.w2[(5, 7)]),
        ("classifier", 1, 4, grads.classifier[(1, 4)]),
        ("w_q", 2, 9, grads.heads[0].w_q[(2, 9)]),
        ("w_k", 6, 1, grads.heads[1].w_k[(6, 1)]),
        ("w_v", 0, 0, grads.heads[1].w_v[(0, 0)]),
        ("w_o", 12, 3, grads.heads[0].w_o[(12, 3)]),
    ];
    for (name, r, c, analytic) in probes {
        let bump = |delta: f64| {
            let mut mm = m.clone();
            let t = match name {
                "w1" => &mut mm.w1,
                "w2" => &mut mm.w2,
                "classifier" => &mut mm.classifier,
                "w_q" => &mut mm.heads[0].w_q,
                "w_k" => &mut mm.heads[1].w_k,
                "w_v" => &mut mm.heads[1].w_v,
                _ => &mut mm.heads[0].w_o,
            };
            t[(r, c)] += delta;
            ce(&mm, &prompt, &input, 0)
        };
        let fd = (bump(h) - bump(-h)) / (2.0 * h);
        let rel = (fd - analytic).abs() / fd.abs().max(analytic.abs()).max(1e-6);
        assert!(rel < 1e-4, "{name}: {analytic} vs {fd}");
    }
}

#[test]
fn same_seed_same_weights_and_logits() {
    let a = small(3, Activation::Gelu, 0.02);
    let b = small(3, Activation::Gelu, 0.02);
    for ((_, x), (_, y)) in a.tensors().iter().zip(b.tensors()) {
        assert_eq!(x.data(), y.data());
    }
    let p = rand_matrix(16, 1, 0.5, 0);
    let x = rand_matrix(16, 2, 0.5, 1);
    assert_eq!(a.forward(&p, &x).unwrap().0, b.forward(&p, &x).unwrap().0);
}

#[test]
fn checkpoint_round_trip() {
    let m = small(8, Activation::Relu, 0.1);
    let dir = tempfile::tempdir().unwrap();
    save_model(dir.path(), &m).unwrap();
    let back = load_model(dir.path()).unwrap();
    assert_eq!(back.config(), m.config());
    for ((na, a), (nb, b)) in m.tensors().iter().zip(back.tensors()) {
        assert_eq!(na, &nb);
        assert_eq!(a.data(), b.data());
    }
}

fn separable_examples(m: &ToyTransformer, n: usize, seed: u64) -> Vec<Example> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let dir = Matrix::random_normal(16, 1, 1.0, &mut rng).col(0);
    (0..n)
        .map(|i| {
            let label = i % 2;
            let sign = if label == 0 { 1.0 } else { -1.0 };
            let mut x = Matrix::random_normal(16, 2, 0.3, &mut rng);
            for r in 0..16 {
                for c in 0..2 {
                    x[(r, c)] += sign * dir[r];
                }
            }
            m.prepare(&x, label).unwrap()
        })
        .collect()
}

#[test]
fn zero_learning_rate_leaves_prompt_unchanged() {
    let m = small(1, Activation::Gelu, 0.3);
    let data = separable_examples(&m, 20, 0);
    let cfg = TrainConfig {
        optimizer: AdamWConfig {
            lr: 0.0,
            ..Default::default()
        },
        max_epochs: 3,
        seed: 5,
        ..Default::default()
    };
    let r = p_tune(&m, &data, &data, 2, &cfg).unwrap();
    assert_eq!(r.prompt.data(), init_prompt(&m, 2, 5).data());
}

#[test]
fn p_tune_improves_validation_loss() {
    let m = small(2, Activation::Gelu, 0.3);
    let train = separable_examples(&m, 60, 1);
    let val = separable_examples(&m, 20, 2);
    let cfg = TrainConfig {
        optimizer: AdamWConfig {
            lr: 1e-2,
            ..Default::default()
        },
        max_epochs: 30,
        seed: 3,
        ..Default::default()
    };
    let r = p_tune(&m, &train, &val, 1, &cfg).unwrap();
    let first = r.curve[0].val_loss;
    let best = r.curve.iter().map(|p| p.val_loss).fold(f64::INFINITY, f64::min);
    assert!(best <= first);
    let (loss, _) = evaluate_prompt(&m, &r.prompt, &val).unwrap();
    assert!((loss - best).abs() < 1e-12);
}

#[test]
fn empty_evaluation_set_is_an_error() {
    let m = small(0, Activation::Gelu, 0.02);
    assert!(evaluate_prompt(&m, &Matrix::zeros(16, 1), &[]).is_err());
}
