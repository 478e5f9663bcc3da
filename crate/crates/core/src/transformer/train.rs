use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::fast::{argmax, Example};
use super::model::ToyTransformer;
use crate::error::{Error, Result};
use crate::numerics::{log_softmax, softmax, Matrix};
use crate::optim::{AdamW, AdamWConfig};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub optimizer: AdamWConfig,
    pub batch_size: usize,
    pub max_epochs: usize,
    /// Stop after this many optimizer steps without a validation improvement.
    pub patience: usize,
    /// Validation loss is measured every this many steps.
    pub eval_every: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            optimizer: AdamWConfig::default(),
            batch_size: 16,
            max_epochs: 50,
            patience: 100,
            eval_every: 10,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.optimizer.lr >= 0.0 && self.optimizer.lr.is_finite()) {
            return Err(Error::InvalidInput("learning rate must be finite and non-negative".into()));
        }
        if self.batch_size == 0 || self.eval_every == 0 {
            return Err(Error::InvalidInput("batch_size and eval_every must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub step: usize,
    /// Mean loss of the most recent batch (the full objective at step 0).
    pub train_loss: f64,
    pub val_loss: f64,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    /// Parameters with the lowest validation loss seen.
    pub params: Vec<Matrix>,
    pub curve: Vec<CurvePoint>,
    pub best_step: usize,
    pub best_val_loss: f64,
    pub steps: usize,
    pub stopped_early: bool,
}

/// Mini-batch AdamW with validation-based early stopping.
///
/// `batch` returns the mean loss and per-parameter gradients on the given
/// training indices; `validate` returns the loss used for model selection.
pub fn train_loop<B, V>(
    init: Vec<Matrix>,
    n_train: usize,
    cfg: &TrainConfig,
    mut batch: B,
    mut validate: V,
) -> Result<TrainOutcome>
where
    B: FnMut(&[Matrix], &[usize]) -> Result<(f64, Vec<Matrix>)>,
    V: FnMut(&[Matrix]) -> Result<f64>,
{
    cfg.validate()?;
    if n_train == 0 {
        return Err(Error::InvalidInput("empty training set".into()));
    }
    let shapes: Vec<_> = init.iter().map(Matrix::shape).collect();
    let mut opt = AdamW::new(cfg.optimizer, &shapes);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut params = init;

    let v0 = finite(validate(&params)?, 0)?;
    let (l0, _) = batch(&params, &(0..n_train).collect::<Vec<_>>())?;
    let mut curve = vec![CurvePoint {
        step: 0,
        train_loss: finite(l0, 0)?,
        val_loss: v0,
    }];
    let mut best = (params.clone(), v0, 0usize);
    let mut step = 0usize;
    let mut stopped_early = false;
    let mut order: Vec<usize> = (0..n_train).collect();

    'epochs: for _ in 0..cfg.max_epochs {
        order.shuffle(&mut rng);
        for chunk in order.chunks(cfg.batch_size) {
            let (loss, grads) = batch(&params, chunk)?;
            let loss = finite(loss, step + 1)?;
            for g in &grads {
                if !g.is_finite() {
                    return Err(Error::Training(format!("non-finite gradient at step {}", step + 1)));
                }
            }
            {
                let mut refs: Vec<&mut Matrix> = params.iter_mut().collect();
                let grefs: Vec<&Matrix> = grads.iter().collect();
                opt.step(&mut refs, &grefs);
            }
            step += 1;
            if step.is_multiple_of(cfg.eval_every) {
                let v = finite(validate(&params)?, step)?;
                curve.push(CurvePoint {
                    step,
                    train_loss: loss,
                    val_loss: v,
                });
                if v < best.1 {
                    best = (params.clone(), v, step);
                }
            }
            if step - best.2 >= cfg.patience {
                stopped_early = true;
                break 'epochs;
            }
        }
    }
    log::debug!(
        "training stopped after {step} steps, best validation loss {:.6} at step {}",
        best.1,
        best.2
    );
    Ok(TrainOutcome {
        params: best.0,
        curve,
        best_step: best.2,
        best_val_loss: best.1,
        steps: step,
        stopped_early,
    })
}

fn finite(v: f64, step: usize) -> Result<f64> {
    if v.is_finite() {
        Ok(v)
    } else {
        Err(Error::Training(format!("loss diverged at step {step}")))
    }
}

/// Mean cross-entropy and accuracy of a prompt on a dataset.
pub fn evaluate_prompt(model: &ToyTransformer, prompt: &Matrix, data: &[Example]) -> Result<(f64, f64)> {
    if data.is_empty() {
        return Err(Error::InvalidInput("empty dataset".into()));
    }
    let pc = model.prompt_cache(prompt)?;
    let mut loss = 0.0;
    let mut correct = 0usize;
    for ex in data {
        let logits = model.logits(&pc, ex);
        loss -= log_softmax(&logits)[ex.label];
        correct += usize::from(argmax(&logits) == ex.label);
    }
    let n = data.len() as f64;
    Ok((loss / n, correct as f64 / n))
}

/// Cross-entropy and its prompt gradient, averaged over `idx`.
pub fn prompt_batch_grad(
    model: &ToyTransformer,
    prompt: &Matrix,
    data: &[Example],
    idx: &[usize],
) -> Result<(f64, Matrix)> {
    let pc = model.prompt_cache(prompt)?;
    let mut grad = Matrix::zeros(prompt.rows(), prompt.cols());
    let mut loss = 0.0;
    for &i in idx {
        let ex = &data[i];
        let st = model.readout(&pc, ex);
        let mut dl = softmax(&st.logits, 1.0);
        loss -= dl[ex.label].max(f64::MIN_POSITIVE).ln();
        dl[ex.label] -= 1.0;
        grad.add_assign(&model.prompt_grad(&pc, ex, &st, &dl));
    }
    let n = idx.len().max(1) as f64;
    Ok((loss / n, grad.scale(1.0 / n)))
}

#[derive(Debug, Clone)]
pub struct PromptTuneResult {
    pub prompt: Matrix,
    pub curve: Vec<CurvePoint>,
    pub best_step: usize,
    pub steps: usize,
}

/// Random prompt with token-scale entries.
pub fn init_prompt(model: &ToyTransformer, n_q: usize, seed: u64) -> Matrix {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5052_4f4d_5054);
    let d = model.d();
    Matrix::random_normal(d, n_q, 1.0 / (d as f64).sqrt(), &mut rng)
}

/// Trains a `d x N_q` prompt with the model frozen.
pub fn p_tune(
    model: &ToyTransformer,
    train: &[Example],
    val: &[Example],
    n_q: usize,
    cfg: &TrainConfig,
) -> Result<PromptTuneResult> {
    if n_q == 0 {
        return Err(Error::InvalidInput("prompt length must be at least 1".into()));
    }
    let val = if val.is_empty() { train } else { val };
    let init = init_prompt(model, n_q, cfg.seed);
    let out = train_loop(
        vec![init],
        train.len(),
        cfg,
        |p, idx| {
            let (l, g) = prompt_batch_grad(model, &p[0], train, idx)?;
            Ok((l, vec![g]))
        },
        |p| Ok(evaluate_prompt(model, &p[0], val)?.0),
    )?;
    Ok(PromptTuneResult {
        prompt: out.params.into_iter().next().expect("one parameter"),
        curve: out.curve,
        best_step: out.best_step,
        steps: out.steps,
    })
}
