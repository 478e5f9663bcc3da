use super::config::Activation;
use super::model::{AttentionTrace, ToyTransformer};
use crate::error::{Error, Result};
use crate::numerics::{log_softmax, softmax, Matrix};

/// Rebuilds every FFN output as `sum_m phi(r_m^T x_i) p_m` and returns the
/// largest Euclidean distance to the FFN output stored in the trace.
pub fn verify_span_membership(trace: &AttentionTrace, model: &ToyTransformer) -> f64 {
    let d = model.d();
    let m = model.w2.cols();
    let mut worst = 0.0f64;
    for i in 0..trace.output.rows() {
        let mut recon = vec![0.0; d];
        for k in 0..m {
            let coef = trace.hidden[(i, k)];
            for (r, row) in recon.iter_mut().enumerate() {
                *row += coef * model.w2[(r, k)];
            }
        }
        let err: f64 = recon
            .iter()
            .zip(trace.ffn_out.row(i))
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt();
        worst = worst.max(err);
    }
    worst
}

/// With an identity activation, expands each output as
/// `t_i + a_i + sum_h sum_j A^h_ij sum_m (r_m^T W_O^h W_V^h t_j) p_m + sum_m (r_m^T t_i) p_m`
/// and returns the largest distance to the traced output.
pub fn verify_two_term_split(trace: &AttentionTrace, model: &ToyTransformer) -> Result<f64> {
    if model.activation() != Activation::Identity {
        return Err(Error::InvalidInput(
            "the two-term split is exact only for the identity activation".into(),
        ));
    }
    let n = trace.tokens.rows();
    let d = model.d();
    let m = model.w1.cols();
    // u^h_j = W_O^h W_V^h t_j
    let projected: Vec<Matrix> = model
        .heads
        .iter()
        .map(|h| trace.tokens.mul_t(&h.w_v).mul_t(&h.w_o))
        .collect();
    let mut worst = 0.0f64;
    for i in 0..n {
        let mut coef = vec![0.0; m];
        for (hi, u) in projected.iter().enumerate() {
            for j in 0..n {
                let a = trace.attention[hi][(i, j)];
                for (k, c) in coef.iter_mut().enumerate() {
                    let mut s = 0.0;
                    for r in 0..d {
                        s += model.w1[(r, k)] * u[(j, r)];
                    }
                    *c += a * s;
                }
            }
        }
        for (k, c) in coef.iter_mut().enumerate() {
            let mut s = 0.0;
            for r in 0..d {
                s += model.w1[(r, k)] * trace.tokens[(i, r)];
            }
            *c += s;
        }
        let mut y = vec![0.0; d];
        for r in 0..d {
            y[r] = trace.tokens[(i, r)] + trace.attn_out[(i, r)];
            for (k, c) in coef.iter().enumerate() {
                y[r] += c * model.w2[(r, k)];
            }
        }
        let err: f64 = y
            .iter()
            .zip(trace.output.row(i))
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt();
        worst = worst.max(err);
    }
    Ok(worst)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradCheck {
    /// Largest element-wise relative error over prompt and input gradients.
    pub max_rel_error: f64,
    /// A ReLU pre-activation lies within reach of the finite-difference step,
    /// so the comparison is not meaningful at this point.
    pub near_kink: bool,
}

/// Finite-difference step.
pub const FD_STEP: f64 = 1e-5;

fn ce_loss(model: &ToyTransformer, prompt: &Matrix, input: &Matrix, label: usize) -> Result<f64> {
    let (logits, _) = model.forward(prompt, input)?;
    Ok(-log_softmax(&logits)[label])
}

/// Compares the analytic cross-entropy gradient with respect to the prompt
/// and the input embeddings against central differences.
pub fn gradient_check(model: &ToyTransformer, prompt: &Matrix, input: &Matrix, label: usize) -> Result<GradCheck> {
    if label >= model.num_classes() {
        return Err(Error::InvalidInput(format!("label {label} out of range")));
    }
    let (logits, trace) = model.forward(prompt, input)?;
    let mut dlogits = softmax(&logits, 1.0);
    dlogits[label] -= 1.0;
    let grad = model.backward(&trace, &dlogits);

    let nq = prompt.cols();
    let mut analytic = Vec::new();
    let mut numeric = Vec::new();
    for j in 0..grad.cols() {
        for r in 0..grad.rows() {
            analytic.push(grad[(r, j)]);
            let (mut p_plus, mut p_minus) = (prompt.clone(), prompt.clone());
            let (mut x_plus, mut x_minus) = (input.clone(), input.clone());
            if j < nq {
                p_plus.data_mut()[r * nq + j] += FD_STEP;
                p_minus.data_mut()[r * nq + j] -= FD_STEP;
            } else {
                let c = input.cols();
                x_plus.data_mut()[r * c + j - nq] += FD_STEP;
                x_minus.data_mut()[r * c + j - nq] -= FD_STEP;
            }
            let fp = ce_loss(model, &p_plus, &x_plus, label)?;
            let fm = ce_loss(model, &p_minus, &x_minus, label)?;
            numeric.push((fp - fm) / (2.0 * FD_STEP));
        }
    }
    let scale = analytic
        .iter()
        .chain(&numeric)
        .fold(0.0f64, |m, v| m.max(v.abs()));
    let floor = (1e-3 * scale).max(1e-10);
    let max_rel_error = analytic
        .iter()
        .zip(&numeric)
        .map(|(a, f)| (a - f).abs() / a.abs().max(f.abs()).max(floor))
        .fold(0.0, f64::max);

    let near_kink = model.activation() == Activation::Relu
        && trace.pre_activation.data().iter().any(|p| p.abs() < 1e-3);
    Ok(GradCheck {
        max_rel_error,
        near_kink,
    })
}
