use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::config::{Activation, ModelConfig, Readout};
use crate::embedding::token_ids;
use crate::error::{Error, Result};
use crate::numerics::{dot, softmax, Matrix};

/// Projection weights of one attention head.
#[derive(Debug, Clone, PartialEq)]
pub struct HeadWeights {
    /// `d_h x d`
    pub w_q: Matrix,
    /// `d_h x d`
    pub w_k: Matrix,
    /// `d_h x d`
    pub w_v: Matrix,
    /// `d x d_h`
    pub w_o: Matrix,
}

/// One-block transformer classifier: multi-head attention and a two-layer
/// FFN, each wrapped in a residual connection, no layer norm.
///
/// Sequences are `d x n` with one token per column; the prompt occupies the
/// first `N_q` columns.
#[derive(Debug, Clone, PartialEq)]
pub struct ToyTransformer {
    pub(crate) cfg: ModelConfig,
    /// Token embedding table, `vocab x d`; row 0 is the mask token.
    pub embeddings: Matrix,
    pub heads: Vec<HeadWeights>,
    /// FFN inner weights `W_1`, `d x M`; column `m` is `r_m`.
    pub w1: Matrix,
    /// FFN outer weights `W_2`, `d x M`; column `m` is `p_m`.
    pub w2: Matrix,
    /// Classifier head, `N x d`.
    pub classifier: Matrix,
}

/// Everything computed by a full forward pass. Per-token quantities are
/// stored one token per row.
#[derive(Debug, Clone)]
pub struct AttentionTrace {
    /// Input sequence, `n x d`.
    pub tokens: Matrix,
    /// Per head, `A^h` (`n x n`); row `i` is the distribution of token `i`.
    pub attention: Vec<Matrix>,
    pub queries: Vec<Matrix>,
    pub keys: Vec<Matrix>,
    pub values: Vec<Matrix>,
    /// Per head `z^h`, `n x d_h`.
    pub z: Vec<Matrix>,
    /// Attention block output `sum_h W_O^h z^h`, `n x d`.
    pub attn_out: Matrix,
    /// `t + attn_out`, input to the FFN.
    pub ffn_in: Matrix,
    /// `r_m^T x_i`, `n x M`.
    pub pre_activation: Matrix,
    /// `phi(r_m^T x_i)`, `n x M`.
    pub hidden: Matrix,
    /// FFN output, `n x d`.
    pub ffn_out: Matrix,
    /// Block output `y`, `n x d`.
    pub output: Matrix,
    pub readout: usize,
    pub logits: Vec<f64>,
}

fn rounded_normal(rows: usize, cols: usize, std: f64, rng: &mut ChaCha8Rng) -> Matrix {
    // Round to f32 so CDEM checkpoints reproduce the model exactly.
    let mut m = Matrix::random_normal(rows, cols, std, rng);
    for v in m.data_mut() {
        *v = *v as f32 as f64;
    }
    m
}

impl ToyTransformer {
    /// Seeded Gaussian initialization.
    pub fn new(cfg: ModelConfig) -> Result<Self> {
        cfg.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let (d, dh, m, std) = (cfg.d, cfg.head_dim(), cfg.ffn_dim, cfg.init_std);
        let embeddings = rounded_normal(cfg.vocab_size, d, 1.0 / (d as f64).sqrt(), &mut rng);
        let heads = (0..cfg.heads)
            .map(|_| HeadWeights {
                w_q: rounded_normal(dh, d, std, &mut rng),
                w_k: rounded_normal(dh, d, std, &mut rng),
                w_v: rounded_normal(dh, d, std, &mut rng),
                w_o: rounded_normal(d, dh, std, &mut rng),
            })
            .collect();
        let w1 = rounded_normal(d, m, std, &mut rng);
        let w2 = rounded_normal(d, m, std, &mut rng);
        let classifier = rounded_normal(cfg.num_classes, d, std, &mut rng);
        Ok(ToyTransformer {
            cfg,
            embeddings,
            heads,
            w1,
            w2,
            classifier,
        })
    }

    /// Assembles a model from explicit weights, checking every shape.
    pub fn from_parts(
        cfg: ModelConfig,
        embeddings: Matrix,
        heads: Vec<HeadWeights>,
        w1: Matrix,
        w2: Matrix,
        classifier: Matrix,
    ) -> Result<Self> {
        cfg.validate()?;
        let (d, dh, m) = (cfg.d, cfg.head_dim(), cfg.ffn_dim);
        let check = |name: &str, got: (usize, usize), want: (usize, usize)| {
            if got != want {
                Err(Error::Shape(format!("{name}: got {got:?}, expected {want:?}")))
            } else {
                Ok(())
            }
        };
        check("embeddings", embeddings.shape(), (cfg.vocab_size, d))?;
        if heads.len() != cfg.heads {
            return Err(Error::Shape(format!("{} heads, expected {}", heads.len(), cfg.heads)));
        }
        for (i, h) in heads.iter().enumerate() {
            check(&format!("head {i} w_q"), h.w_q.shape(), (dh, d))?;
            check(&format!("head {i} w_k"), h.w_k.shape(), (dh, d))?;
            check(&format!("head {i} w_v"), h.w_v.shape(), (dh, d))?;
            check(&format!("head {i} w_o"), h.w_o.shape(), (d, dh))?;
        }
        check("w1", w1.shape(), (d, m))?;
        check("w2", w2.shape(), (d, m))?;
        check("classifier", classifier.shape(), (cfg.num_classes, d))?;
        let model = ToyTransformer {
            cfg,
            embeddings,
            heads,
            w1,
            w2,
            classifier,
        };
        for (name, t) in model.tensors() {
            t.ensure_finite(&name)?;
        }
        Ok(model)
    }

    pub fn config(&self) -> &ModelConfig {
        &self.cfg
    }

    pub fn d(&self) -> usize {
        self.cfg.d
    }

    pub fn num_classes(&self) -> usize {
        self.cfg.num_classes
    }

    /// Named weight tensors in a fixed order.
    pub fn tensors(&self) -> Vec<(String, &Matrix)> {
        let mut out = vec![("embeddings".to_string(), &self.embeddings)];
        for (i, h) in self.heads.iter().enumerate() {
            out.push((format!("head{i}.w_q"), &h.w_q));
            out.push((format!("head{i}.w_k"), &h.w_k));
            out.push((format!("head{i}.w_v"), &h.w_v));
            out.push((format!("head{i}.w_o"), &h.w_o));
        }
        out.push(("w1".into(), &self.w1));
        out.push(("w2".into(), &self.w2));
        out.push(("classifier".into(), &self.classifier));
        out
    }

    /// Embeds a text as a `d x L` sequence, appending the mask token when the
    /// readout needs one.
    pub fn encode_text(&self, text: &str) -> Result<Matrix> {
        let mut ids = token_ids(text, self.cfg.vocab_size);
        if self.cfg.readout == Readout::MaskToken {
            ids.push(0);
        }
        if ids.is_empty() {
            return Err(Error::InvalidInput(format!("no tokens in {text:?}")));
        }
        Ok(self.embeddings.select_rows(&ids).transpose())
    }

    pub(crate) fn readout_index(&self, n_total: usize) -> usize {
        match self.cfg.readout {
            Readout::FirstPrompt => 0,
            Readout::MaskToken => n_total - 1,
        }
    }

    pub(crate) fn check_inputs(&self, prompt: &Matrix, input: &Matrix) -> Result<()> {
        let d = self.cfg.d;
        if prompt.rows() != d || input.rows() != d {
            return Err(Error::Shape(format!(
                "prompt is {}x{}, input is {}x{}, model width is {d}",
                prompt.rows(),
                prompt.cols(),
                input.rows(),
                input.cols()
            )));
        }
        if input.cols() == 0 {
            return Err(Error::Shape("input sequence is empty".into()));
        }
        if self.cfg.readout == Readout::FirstPrompt && prompt.cols() == 0 {
            return Err(Error::Shape("first-prompt readout needs at least one prompt token".into()));
        }
        Ok(())
    }

    /// Full forward pass over `[prompt | input]`.
    pub fn forward(&self, prompt: &Matrix, input: &Matrix) -> Result<(Vec<f64>, AttentionTrace)> {
        self.check_inputs(prompt, input)?;
        let tokens = concat_tokens(prompt, input);
        let n = tokens.rows();
        let d = self.cfg.d;
        let scale = 1.0 / (self.cfg.head_dim() as f64).sqrt();

        let mut attn_out = Matrix::zeros(n, d);
        let mut attention = Vec::with_capacity(self.heads.len());
        let mut queries = Vec::with_capacity(self.heads.len());
        let mut keys = Vec::with_capacity(self.heads.len());
        let mut values = Vec::with_capacity(self.heads.len());
        let mut zs = Vec::with_capacity(self.heads.len());
        for h in &self.heads {
            let q = tokens.mul_t(&h.w_q);
            let k = tokens.mul_t(&h.w_k);
            let v = tokens.mul_t(&h.w_v);
            let mut a = q.mul_t(&k);
            for i in 0..n {
                let row: Vec<f64> = a.row(i).iter().map(|s| s * scale).collect();
                a.row_mut(i).copy_from_slice(&softmax(&row, 1.0));
            }
            let z = a.mul_unchecked(&v);
            attn_out.add_assign(&z.mul_t(&h.w_o));
            attention.push(a);
            queries.push(q);
            keys.push(k);
            values.push(v);
            zs.push(z);
        }
        let ffn_in = tokens.add(&attn_out);
        let pre = ffn_in.mul_unchecked(&self.w1);
        let act = self.cfg.activation;
        let mut hidden = pre.clone();
        for v in hidden.data_mut() {
            *v = act.apply(*v);
        }
        let ffn_out = hidden.mul_t(&self.w2);
        let output = ffn_in.add(&ffn_out);
        let r = self.readout_index(n);
        let logits = self.classifier.mul_vec(output.row(r));
        if logits.iter().any(|l| !l.is_finite()) {
            return Err(Error::InvalidInput("forward produced non-finite logits".into()));
        }
        let trace = AttentionTrace {
            tokens,
            attention,
            queries,
            keys,
            values,
            z: zs,
            attn_out,
            ffn_in,
            pre_activation: pre,
            hidden,
            ffn_out,
            output,
            readout: r,
            logits: logits.clone(),
        };
        Ok((logits, trace))
    }

    /// Backpropagates `dlogits` through a trace. Returns the gradient with
    /// respect to every token of the sequence, `d x n`, columns aligned with
    /// `[prompt | input]`.
    pub fn backward(&self, trace: &AttentionTrace, dlogits: &[f64]) -> Matrix {
        let n = trace.tokens.rows();
        let d = self.cfg.d;
        let scale = 1.0 / (self.cfg.head_dim() as f64).sqrt();
        let act = self.cfg.activation;

        let mut dy = Matrix::zeros(n, d);
        dy.row_mut(trace.readout)
            .copy_from_slice(&self.classifier.t_mul_vec(dlogits));

        // y = x + W_2 phi(W_1^T x)
        let mut dpre = dy.mul_unchecked(&self.w2);
        for (g, &p) in dpre.data_mut().iter_mut().zip(trace.pre_activation.data()) {
            *g *= act.derivative(p);
        }
        let dx = dy.add(&dpre.mul_t(&self.w1));

        // x = t + sum_h W_O^h z^h
        let mut dt = dx.clone();
        for (hi, h) in self.heads.iter().enumerate() {
            let a = &trace.attention[hi];
            let dz = dx.mul_unchecked(&h.w_o);
            let da = dz.mul_t(&trace.values[hi]);
            let dv = a.t_mul(&dz);
            let mut ds = Matrix::zeros(n, n);
            for i in 0..n {
                let inner = dot(a.row(i), da.row(i));
                for j in 0..n {
                    ds[(i, j)] = a[(i, j)] * (da[(i, j)] - inner) * scale;
                }
            }
            let dq = ds.mul_unchecked(&trace.keys[hi]);
            let dk = ds.t_mul(&trace.queries[hi]);
            dt.add_assign(&dq.mul_unchecked(&h.w_q));
            dt.add_assign(&dk.mul_unchecked(&h.w_k));
            dt.add_assign(&dv.mul_unchecked(&h.w_v));
        }
        dt.transpose()
    }

    /// Gradients of `dlogits . logits` with respect to every block weight
    /// (the embedding table excluded) and to the input tokens (`d x n`).
    pub fn backward_weights(&self, trace: &AttentionTrace, dlogits: &[f64]) -> (BlockGrads, Matrix) {
        let n = trace.tokens.rows();
        let d = self.cfg.d;
        let scale = 1.0 / (self.cfg.head_dim() as f64).sqrt();
        let act = self.cfg.activation;

        let mut classifier = Matrix::zeros(self.cfg.num_classes, d);
        for (c, &g) in dlogits.iter().enumerate() {
            for (o, &y) in classifier.row_mut(c).iter_mut().zip(trace.output.row(trace.readout)) {
                *o = g * y;
            }
        }
        let mut dy = Matrix::zeros(n, d);
        dy.row_mut(trace.readout)
            .copy_from_slice(&self.classifier.t_mul_vec(dlogits));

        let w2 = dy.t_mul(&trace.hidden);
        let mut dpre = dy.mul_unchecked(&self.w2);
        for (g, &p) in dpre.data_mut().iter_mut().zip(trace.pre_activation.data()) {
            *g *= act.derivative(p);
        }
        let w1 = trace.ffn_in.t_mul(&dpre);
        let dx = dy.add(&dpre.mul_t(&self.w1));

        let mut dt = dx.clone();
        let mut heads = Vec::with_capacity(self.heads.len());
        for (hi, h) in self.heads.iter().enumerate() {
            let a = &trace.attention[hi];
            let w_o = dx.t_mul(&trace.z[hi]);
            let dz = dx.mul_unchecked(&h.w_o);
            let da = dz.mul_t(&trace.values[hi]);
            let dv = a.t_mul(&dz);
            let mut ds = Matrix::zeros(n, n);
            for i in 0..n {
                let inner = dot(a.row(i), da.row(i));
                for j in 0..n {
                    ds[(i, j)] = a[(i, j)] * (da[(i, j)] - inner) * scale;
                }
            }
            let dq = ds.mul_unchecked(&trace.keys[hi]);
            let dk = ds.t_mul(&trace.queries[hi]);
            dt.add_assign(&dq.mul_unchecked(&h.w_q));
            dt.add_assign(&dk.mul_unchecked(&h.w_k));
            dt.add_assign(&dv.mul_unchecked(&h.w_v));
            heads.push(HeadWeights {
                w_q: dq.t_mul(&trace.tokens),
                w_k: dk.t_mul(&trace.tokens),
                w_v: dv.t_mul(&trace.tokens),
                w_o,
            });
        }
        (
            BlockGrads {
                heads,
                w1,
                w2,
                classifier,
            },
            dt.transpose(),
        )
    }

    /// Block weights in the order used by [`BlockGrads`].
    pub(crate) fn block_params(&self) -> Vec<Matrix> {
        let mut out = Vec::new();
        for h in &self.heads {
            out.extend([h.w_q.clone(), h.w_k.clone(), h.w_v.clone(), h.w_o.clone()]);
        }
        out.extend([self.w1.clone(), self.w2.clone(), self.classifier.clone()]);
        out
    }

    pub(crate) fn set_block_params(&mut self, params: Vec<Matrix>) {
        let mut it = params.into_iter();
        for h in &mut self.heads {
            h.w_q = it.next().expect("w_q");
            h.w_k = it.next().expect("w_k");
            h.w_v = it.next().expect("w_v");
            h.w_o = it.next().expect("w_o");
        }
        self.w1 = it.next().expect("w1");
        self.w2 = it.next().expect("w2");
        self.classifier = it.next().expect("classifier");
    }

    pub fn activation(&self) -> Activation {
        self.cfg.activation
    }
}

/// Gradients for the trainable block weights, shaped like the weights.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockGrads {
    pub heads: Vec<HeadWeights>,
    pub w1: Matrix,
    pub w2: Matrix,
    pub classifier: Matrix,
}

impl BlockGrads {
    pub(crate) fn into_vec(self) -> Vec<Matrix> {
        let mut out = Vec::new();
        for h in self.heads {
            out.extend([h.w_q, h.w_k, h.w_v, h.w_o]);
        }
        out.extend([self.w1, self.w2, self.classifier]);
        out
    }
}

/// `[prompt | input]` as an `n x d` row-per-token matrix.
pub(crate) fn concat_tokens(prompt: &Matrix, input: &Matrix) -> Matrix {
    let d = prompt.rows();
    let n = prompt.cols() + input.cols();
    let mut t = Matrix::zeros(n, d);
    for i in 0..d {
        for j in 0..prompt.cols() {
            t[(j, i)] = prompt[(i, j)];
        }
        for j in 0..input.cols() {
            t[(prompt.cols() + j, i)] = input[(i, j)];
        }
    }
    t
}
