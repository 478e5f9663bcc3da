//! Prompt-conditional backbone training.
//!
//! Before a prompt is tuned the block is trained on a small family of tasks
//! over the same inputs: every input carries one label per task. Each
//! training item pairs an input with a random prompt, and the task is
//! whichever row of a fixed random key matrix `U` scores highest against the
//! mean prompt column. The frozen block thus reads its instructions from the
//! prompt, and a prompt for a new task has to be found by tuning.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::model::ToyTransformer;
use super::train::{train_loop, CurvePoint, TrainConfig};
use crate::error::{Error, Result};
use crate::numerics::{log_softmax, softmax, Matrix};
use crate::optim::AdamWConfig;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PretrainConfig {
    /// Sampled prompts have `1..=prompt_len` columns.
    pub prompt_len: usize,
    /// Random prompts drawn per input.
    pub draws: usize,
    pub train: TrainConfig,
}

impl Default for PretrainConfig {
    fn default() -> Self {
        PretrainConfig {
            prompt_len: 2,
            draws: 4,
            train: TrainConfig {
                optimizer: AdamWConfig {
                    lr: 1e-3,
                    ..Default::default()
                },
                max_epochs: 20,
                patience: 200,
                ..Default::default()
            },
        }
    }
}

#[derive(Debug, Clone)]
pub struct PretrainReport {
    /// Task keys `U`, `tasks x d`.
    pub task_keys: Matrix,
    pub curve: Vec<CurvePoint>,
    /// Accuracy on the held-out items, over all tasks.
    pub accuracy: f64,
}

struct Item<'a> {
    input: &'a Matrix,
    prompt: Matrix,
    label: usize,
}

/// Index of the task selected by `prompt` under keys `u`.
pub fn prompt_task(u: &Matrix, prompt: &Matrix) -> usize {
    let mean: Vec<f64> = (0..prompt.rows())
        .map(|r| prompt.row(r).iter().sum::<f64>() / prompt.cols() as f64)
        .collect();
    super::argmax(&u.mul_vec(&mean))
}

/// Trains every block weight except the embedding table. `inputs` holds
/// `d x L` sequences with one label per task; the last fifth is held out
/// for early stopping.
pub fn pretrain_backbone(
    model: &mut ToyTransformer,
    inputs: &[(Matrix, Vec<usize>)],
    cfg: &PretrainConfig,
) -> Result<PretrainReport> {
    let n_classes = model.num_classes();
    if cfg.prompt_len == 0 || cfg.draws == 0 {
        return Err(Error::InvalidInput(
            "need a positive prompt length and at least one draw".into(),
        ));
    }
    if inputs.len() < 2 {
        return Err(Error::InvalidInput("need at least two pretraining inputs".into()));
    }
    let tasks = inputs[0].1.len();
    for (_, labels) in inputs {
        if labels.len() != tasks || tasks == 0 {
            return Err(Error::InvalidInput("every input needs one label per task".into()));
        }
        if labels.iter().any(|&l| l >= n_classes) {
            return Err(Error::InvalidInput(format!("label out of range for {n_classes} classes")));
        }
    }
    let d = model.d();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.train.seed ^ 0x7461_736b);
    let std = 1.0 / (d as f64).sqrt();
    let task_keys = Matrix::random_normal(tasks, d, 1.0, &mut rng);

    let mut items = Vec::with_capacity(inputs.len() * cfg.draws);
    for (input, labels) in inputs {
        for k in 0..cfg.draws {
            let len = 1 + k % cfg.prompt_len;
            let prompt = Matrix::random_normal(d, len, std, &mut rng);
            let task = prompt_task(&task_keys, &prompt);
            items.push(Item {
                input,
                prompt,
                label: labels[task],
            });
        }
    }
    let n_hold = (inputs.len() / 5).max(1) * cfg.draws;
    let (train, hold) = items.split_at(items.len() - n_hold);

    let mut work = model.clone();
    let loss_on = |m: &ToyTransformer, set: &[Item]| -> Result<(f64, f64)> {
        let mut loss = 0.0;
        let mut correct = 0usize;
        for it in set {
            let (logits, _) = m.forward(&it.prompt, it.input)?;
            loss -= log_softmax(&logits)[it.label];
            correct += usize::from(super::argmax(&logits) == it.label);
        }
        Ok((loss / set.len() as f64, correct as f64 / set.len() as f64))
    };

    let out = train_loop(
        model.block_params(),
        train.len(),
        &cfg.train,
        |params, idx| {
            work.set_block_params(params.to_vec());
            let mut grads: Option<Vec<Matrix>> = None;
            let mut loss = 0.0;
            for &i in idx {
                let it = &train[i];
                let (logits, trace) = work.forward(&it.prompt, it.input)?;
                let mut dl = softmax(&logits, 1.0);
                loss -= dl[it.label].max(f64::MIN_POSITIVE).ln();
                dl[it.label] -= 1.0;
                let g = work.backward_weights(&trace, &dl).0.into_vec();
                match &mut grads {
                    None => grads = Some(g),
                    Some(acc) => acc.iter_mut().zip(&g).for_each(|(a, b)| a.add_assign(b)),
                }
            }
            let n = idx.len() as f64;
            let grads = grads
                .unwrap_or_default()
                .into_iter()
                .map(|g| g.scale(1.0 / n))
                .collect();
            Ok((loss / n, grads))
        },
        |params| {
            let mut m = model.clone();
            m.set_block_params(params.to_vec());
            Ok(loss_on(&m, hold)?.0)
        },
    )?;
    model.set_block_params(out.params);
    let accuracy = loss_on(model, hold)?.1;
    log::info!("backbone pretraining: held-out accuracy {accuracy:.3} after {} steps", out.steps);
    Ok(PretrainReport {
        task_keys,
        curve: out.curve,
        accuracy,
    })
}
