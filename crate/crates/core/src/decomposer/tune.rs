use serde::{Deserialize, Serialize};

use super::fit::{Decomposition, Provenance, LSTSQ_RCOND};
use crate::embedding::{token_ids, CandidatePool, ConceptId};
use crate::error::{Error, Result};
use crate::numerics::{kl_unchecked, lstsq, softmax, Matrix};
use crate::submodular::SelectedSet;
use crate::transformer::{train_loop, CurvePoint, Example, ToyTransformer, TrainConfig};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TuneConfig {
    /// Weight of the fidelity term, in `[0, 1]`.
    pub mu: f64,
    pub train: TrainConfig,
    /// Keep `C` at its encoder initialization and train only `Q`.
    pub freeze_c: bool,
}

impl Default for TuneConfig {
    fn default() -> Self {
        TuneConfig {
            mu: 0.5,
            train: TrainConfig::default(),
            freeze_c: false,
        }
    }
}

impl TuneConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.mu) {
            return Err(Error::InvalidInput(format!("mu = {} is outside [0, 1]", self.mu)));
        }
        if !(self.train.optimizer.lr > 0.0) {
            return Err(Error::InvalidInput("learning rate must be positive".into()));
        }
        self.train.validate()
    }
}

/// Concepts aligned with the columns of `C`.
#[derive(Debug, Clone, PartialEq)]
pub struct ConceptBasis {
    pub ids: Vec<ConceptId>,
    pub classes: Vec<usize>,
    pub texts: Vec<String>,
}

impl ConceptBasis {
    /// Columns ordered by class (label order), then by selection order.
    pub fn from_selection(pool: &CandidatePool, selected: &[SelectedSet]) -> Result<Self> {
        let mut basis = ConceptBasis {
            ids: Vec::new(),
            classes: Vec::new(),
            texts: Vec::new(),
        };
        for (ci, label) in pool.labels().names().iter().enumerate() {
            for set in selected.iter().filter(|s| &s.class == label) {
                for &id in &set.ids {
                    let c = pool
                        .get(id)
                        .ok_or_else(|| Error::InvalidInput(format!("selected id {id} is not in the pool")))?;
                    if &c.class_label != label {
                        return Err(Error::InvalidInput(format!(
                            "concept {id} belongs to {:?}, selected for {label:?}",
                            c.class_label
                        )));
                    }
                    basis.ids.push(id);
                    basis.classes.push(ci);
                    basis.texts.push(c.text.clone());
                }
            }
        }
        if basis.ids.is_empty() {
            return Err(Error::InvalidInput("no concepts selected".into()));
        }
        Ok(basis)
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    /// Position of a concept id among the columns.
    pub fn column_of(&self, id: ConceptId) -> Option<usize> {
        self.ids.iter().position(|&i| i == id)
    }
}

/// Embeds texts in the model's input space as the mean of their token
/// embeddings, one column per text.
pub fn concept_embeddings(model: &ToyTransformer, texts: &[String]) -> Result<Matrix> {
    let vocab = model.config().vocab_size;
    let d = model.d();
    let mut c = Matrix::zeros(d, texts.len());
    for (j, t) in texts.iter().enumerate() {
        let ids = token_ids(t, vocab);
        if ids.is_empty() {
            return Err(Error::InvalidInput(format!("concept {t:?} has no tokens")));
        }
        let rows = model.embeddings.select_rows(&ids);
        for i in 0..d {
            let s: f64 = (0..rows.rows()).map(|r| rows[(r, i)]).sum();
            c[(i, j)] = s / ids.len() as f64;
        }
    }
    Ok(c)
}

/// `C` from the concept embeddings and `Q` from least squares against `P*`.
pub fn init_decomposition(model: &ToyTransformer, p_star: &Matrix, basis: &ConceptBasis) -> Result<Decomposition> {
    let c = concept_embeddings(model, &basis.texts)?;
    let q = lstsq(&c, p_star, LSTSQ_RCOND)?;
    Decomposition::new(c, q, basis.ids.clone(), basis.classes.clone(), Provenance::CdTuned)
}

/// Loss terms of a prompt against a teacher prompt on a dataset.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CdLoss {
    /// Mean `KL(p(y|X,P*) || p(y|X,CQ))`.
    pub fidelity: f64,
    /// Mean `-log p(y|X,CQ)`.
    pub task: f64,
    pub total: f64,
}

fn teacher_probs(model: &ToyTransformer, p_star: &Matrix, data: &[Example]) -> Result<Vec<Vec<f64>>> {
    let pc = model.prompt_cache(p_star)?;
    Ok(data
        .iter()
        .map(|ex| softmax(&model.logits(&pc, ex), 1.0))
        .collect())
}

fn loss_and_grad(
    model: &ToyTransformer,
    prompt: &Matrix,
    data: &[Example],
    teacher: &[Vec<f64>],
    idx: &[usize],
    mu: f64,
    want_grad: bool,
) -> Result<(CdLoss, Matrix)> {
    let pc = model.prompt_cache(prompt)?;
    let mut grad = Matrix::zeros(prompt.rows(), prompt.cols());
    let (mut fid, mut task) = (0.0, 0.0);
    for &i in idx {
        let ex = &data[i];
        let st = model.readout(&pc, ex);
        let q = softmax(&st.logits, 1.0);
        let t = &teacher[i];
        fid += kl_unchecked(t, &q);
        task -= q[ex.label].max(f64::MIN_POSITIVE).ln();
        if want_grad {
            // d/dz [mu KL(t || softmax z) - log softmax_y z] = mu (q - t) + (q - e_y)
            let mut dl: Vec<f64> = q.iter().zip(t).map(|(qi, ti)| mu * (qi - ti) + qi).collect();
            dl[ex.label] -= 1.0;
            grad.add_assign(&model.prompt_grad(&pc, ex, &st, &dl));
        }
    }
    let n = idx.len().max(1) as f64;
    let (fidelity, task) = (fid / n, task / n);
    Ok((
        CdLoss {
            fidelity,
            task,
            total: mu * fidelity + task,
        },
        grad.scale(1.0 / n),
    ))
}

/// Evaluates the CD objective of `prompt` with teacher `p_star`.
pub fn cd_loss(model: &ToyTransformer, p_star: &Matrix, prompt: &Matrix, data: &[Example], mu: f64) -> Result<CdLoss> {
    if data.is_empty() {
        return Err(Error::InvalidInput("empty dataset".into()));
    }
    let teacher = teacher_probs(model, p_star, data)?;
    let idx: Vec<usize> = (0..data.len()).collect();
    Ok(loss_and_grad(model, prompt, data, &teacher, &idx, mu, false)?.0)
}

#[derive(Debug, Clone)]
pub struct CdTuneResult {
    pub decomposition: Decomposition,
    /// Validation losses are the total CD objective.
    pub curve: Vec<CurvePoint>,
    pub initial: CdLoss,
    pub best: CdLoss,
    pub steps: usize,
}

/// Tunes `C` and `Q` so that `CQ` stays faithful to `P*` and solves the task.
pub fn cd_tune(
    model: &ToyTransformer,
    p_star: &Matrix,
    init: &Decomposition,
    train: &[Example],
    val: &[Example],
    cfg: &TuneConfig,
) -> Result<CdTuneResult> {
    cfg.validate()?;
    if init.n_concepts() == 0 {
        return Err(Error::InvalidInput("decomposition has no concepts".into()));
    }
    if init.c.rows() != p_star.rows() || init.q.cols() != p_star.cols() {
        return Err(Error::Shape("decomposition does not match the prompt shape".into()));
    }
    if train.is_empty() {
        return Err(Error::InvalidInput("empty training set".into()));
    }
    let val = if val.is_empty() { train } else { val };
    let t_train = teacher_probs(model, p_star, train)?;
    let t_val = teacher_probs(model, p_star, val)?;
    let val_idx: Vec<usize> = (0..val.len()).collect();
    let mu = cfg.mu;
    let val_loss = |c: &Matrix, q: &Matrix| -> Result<CdLoss> {
        Ok(loss_and_grad(model, &c.mul_unchecked(q), val, &t_val, &val_idx, mu, false)?.0)
    };
    let initial = val_loss(&init.c, &init.q)?;

    let frozen_c = init.c.clone();
    let params = if cfg.freeze_c {
        vec![init.q.clone()]
    } else {
        vec![init.c.clone(), init.q.clone()]
    };
    let split = |p: &[Matrix]| -> (Matrix, Matrix) {
        if p.len() == 1 {
            (frozen_c.clone(), p[0].clone())
        } else {
            (p[0].clone(), p[1].clone())
        }
    };
    let out = train_loop(
        params,
        train.len(),
        &cfg.train,
        |p, idx| {
            let (c, q) = split(p);
            let (loss, dp) = loss_and_grad(model, &c.mul_unchecked(&q), train, &t_train, idx, mu, true)?;
            let dq = c.t_mul(&dp);
            let grads = if p.len() == 1 {
                vec![dq]
            } else {
                vec![dp.mul_t(&q), dq]
            };
            Ok((loss.total, grads))
        },
        |p| {
            let (c, q) = split(p);
            Ok(val_loss(&c, &q)?.total)
        },
    )?;
    let (c, q) = split(&out.params);
    let best = val_loss(&c, &q)?;
    let decomposition = Decomposition::new(
        c,
        q,
        init.concept_ids.clone(),
        init.concept_classes.clone(),
        Provenance::CdTuned,
    )?;
    Ok(CdTuneResult {
        decomposition,
        curve: out.curve,
        initial,
        best,
        steps: out.steps,
    })
}
