//! Readout-only evaluation. A single block means the classifier only needs
//! the output at the readout position, and the keys and values of input
//! tokens do not depend on the prompt, so they are computed once per example.

use super::config::Readout;
use super::model::ToyTransformer;
use crate::error::{Error, Result};
use crate::numerics::{dot, softmax, Matrix};

/// An input sequence with its prompt-independent projections cached.
#[derive(Debug, Clone)]
pub struct Example {
    /// Input tokens, one per row.
    pub tokens: Matrix,
    /// Per head, `W_K t_j` for every input token (`L x d_h`).
    keys: Vec<Matrix>,
    values: Vec<Matrix>,
    pub label: usize,
}

impl Example {
    pub fn len(&self) -> usize {
        self.tokens.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.rows() == 0
    }
}

/// Prompt tokens with their per-head projections.
#[derive(Debug, Clone)]
pub struct PromptCache {
    tokens: Matrix,
    keys: Vec<Matrix>,
    values: Vec<Matrix>,
}

impl PromptCache {
    pub fn len(&self) -> usize {
        self.tokens.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.rows() == 0
    }
}

/// Intermediate values at the readout position, kept for backprop.
#[derive(Debug, Clone)]
pub struct ReadoutState {
    pub logits: Vec<f64>,
    attention: Vec<Vec<f64>>,
    queries: Vec<Vec<f64>>,
    pre: Vec<f64>,
}

impl ToyTransformer {
    /// Caches a `d x L` input sequence.
    pub fn prepare(&self, input: &Matrix, label: usize) -> Result<Example> {
        if input.rows() != self.d() || input.cols() == 0 {
            return Err(Error::Shape(format!(
                "input is {}x{}, expected {} rows and at least one token",
                input.rows(),
                input.cols(),
                self.d()
            )));
        }
        if label >= self.num_classes() {
            return Err(Error::InvalidInput(format!(
                "label {label} out of range for {} classes",
                self.num_classes()
            )));
        }
        let tokens = input.transpose();
        let keys = self.heads.iter().map(|h| tokens.mul_t(&h.w_k)).collect();
        let values = self.heads.iter().map(|h| tokens.mul_t(&h.w_v)).collect();
        Ok(Example {
            tokens,
            keys,
            values,
            label,
        })
    }

    pub fn prepare_text(&self, text: &str, label: usize) -> Result<Example> {
        self.prepare(&self.encode_text(text)?, label)
    }

    pub fn prompt_cache(&self, prompt: &Matrix) -> Result<PromptCache> {
        if prompt.rows() != self.d() {
            return Err(Error::Shape(format!(
                "prompt has {} rows, model width is {}",
                prompt.rows(),
                self.d()
            )));
        }
        if self.cfg.readout == Readout::FirstPrompt && prompt.cols() == 0 {
            return Err(Error::Shape("first-prompt readout needs at least one prompt token".into()));
        }
        let tokens = prompt.transpose();
        let keys = self.heads.iter().map(|h| tokens.mul_t(&h.w_k)).collect();
        let values = self.heads.iter().map(|h| tokens.mul_t(&h.w_v)).collect();
        Ok(PromptCache { tokens, keys, values })
    }

    fn readout_token<'a>(&self, pc: &'a PromptCache, ex: &'a Example) -> &'a [f64] {
        match self.cfg.readout {
            Readout::FirstPrompt => pc.tokens.row(0),
            Readout::MaskToken => ex.tokens.row(ex.len() - 1),
        }
    }

    /// Logits at the readout position plus the state needed for
    /// [`ToyTransformer::prompt_grad`].
    pub fn readout(&self, pc: &PromptCache, ex: &Example) -> ReadoutState {
        let t_r = self.readout_token(pc, ex);
        let scale = 1.0 / (self.cfg.head_dim() as f64).sqrt();
        let nq = pc.len();
        let mut x = t_r.to_vec();
        let mut attention = Vec::with_capacity(self.heads.len());
        let mut queries = Vec::with_capacity(self.heads.len());
        for (hi, h) in self.heads.iter().enumerate() {
            let q = h.w_q.mul_vec(t_r);
            let mut scores = Vec::with_capacity(nq + ex.len());
            for j in 0..nq {
                scores.push(dot(&q, pc.keys[hi].row(j)) * scale);
            }
            for j in 0..ex.len() {
                scores.push(dot(&q, ex.keys[hi].row(j)) * scale);
            }
            let a = softmax(&scores, 1.0);
            let mut z = vec![0.0; q.len()];
            for (j, &w) in a.iter().enumerate() {
                let v = if j < nq {
                    pc.values[hi].row(j)
                } else {
                    ex.values[hi].row(j - nq)
                };
                for (zi, vi) in z.iter_mut().zip(v) {
                    *zi += w * vi;
                }
            }
            for (xi, oi) in x.iter_mut().zip(h.w_o.mul_vec(&z)) {
                *xi += oi;
            }
            attention.push(a);
            queries.push(q);
        }
        let pre = self.w1.t_mul_vec(&x);
        let act = self.cfg.activation;
        let hidden: Vec<f64> = pre.iter().map(|&p| act.apply(p)).collect();
        let f = self.w2.mul_vec(&hidden);
        let y: Vec<f64> = x.iter().zip(&f).map(|(a, b)| a + b).collect();
        let logits = self.classifier.mul_vec(&y);
        ReadoutState {
            logits,
            attention,
            queries,
            pre,
        }
    }

    pub fn logits(&self, pc: &PromptCache, ex: &Example) -> Vec<f64> {
        self.readout(pc, ex).logits
    }

    /// Gradient of `dlogits . logits` with respect to the prompt, `d x N_q`.
    pub fn prompt_grad(&self, pc: &PromptCache, ex: &Example, st: &ReadoutState, dlogits: &[f64]) -> Matrix {
        let d = self.d();
        let nq = pc.len();
        let scale = 1.0 / (self.cfg.head_dim() as f64).sqrt();
        let act = self.cfg.activation;
        let prompt_readout = self.cfg.readout == Readout::FirstPrompt;

        let dy = self.classifier.t_mul_vec(dlogits);
        let w2_dy = self.w2.t_mul_vec(&dy);
        let dpre: Vec<f64> = w2_dy
            .iter()
            .zip(&st.pre)
            .map(|(g, &p)| g * act.derivative(p))
            .collect();
        let w1_dpre = self.w1.mul_vec(&dpre);
        let dx: Vec<f64> = dy.iter().zip(&w1_dpre).map(|(a, b)| a + b).collect();

        // Rows are prompt tokens; transposed at the end.
        let mut dt = Matrix::zeros(nq, d);
        if prompt_readout {
            dt.row_mut(0).copy_from_slice(&dx);
        }
        for (hi, h) in self.heads.iter().enumerate() {
            let a = &st.attention[hi];
            let dz = h.w_o.t_mul_vec(&dx);
            let da: Vec<f64> = (0..a.len())
                .map(|j| {
                    let v = if j < nq {
                        pc.values[hi].row(j)
                    } else {
                        ex.values[hi].row(j - nq)
                    };
                    dot(&dz, v)
                })
                .collect();
            let inner = dot(a, &da);
            let ds: Vec<f64> = a
                .iter()
                .zip(&da)
                .map(|(aj, daj)| aj * (daj - inner) * scale)
                .collect();
            for j in 0..nq {
                let dk: Vec<f64> = st.queries[hi].iter().map(|q| ds[j] * q).collect();
                let dv: Vec<f64> = dz.iter().map(|z| a[j] * z).collect();
                let gk = h.w_k.t_mul_vec(&dk);
                let gv = h.w_v.t_mul_vec(&dv);
                for ((o, k), v) in dt.row_mut(j).iter_mut().zip(&gk).zip(&gv) {
                    *o += k + v;
                }
            }
            if prompt_readout {
                let mut dq = vec![0.0; dz.len()];
                for (j, &s) in ds.iter().enumerate() {
                    let k = if j < nq {
                        pc.keys[hi].row(j)
                    } else {
                        ex.keys[hi].row(j - nq)
                    };
                    for (o, kv) in dq.iter_mut().zip(k) {
                        *o += s * kv;
                    }
                }
                for (o, g) in dt.row_mut(0).iter_mut().zip(h.w_q.t_mul_vec(&dq)) {
                    *o += g;
                }
            }
        }
        dt.transpose()
    }

    /// Predicted class (smallest index on ties).
    pub fn predict(&self, pc: &PromptCache, ex: &Example) -> usize {
        argmax(&self.logits(pc, ex))
    }
}

/// Index of the largest value, the smallest index on ties.
pub fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate() {
        if x > v[best] {
            best = i;
        }
    }
    best
}
