use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::decomposer::Decomposition;
use crate::error::{Error, Result};
use crate::numerics::Matrix;
use crate::transformer::{argmax, Example, ToyTransformer};

/// A scalar function of the coefficient matrix `Q` with its gradient.
pub trait CoefficientObjective {
    fn value(&self, q: &Matrix) -> Result<f64>;
    fn grad(&self, q: &Matrix) -> Result<Matrix>;
}

/// Logit of a fixed class for one input, with prompt `C Q`.
pub struct LogitObjective<'a> {
    pub model: &'a ToyTransformer,
    pub c: &'a Matrix,
    pub example: &'a Example,
    pub class: usize,
}

impl<'a> LogitObjective<'a> {
    /// Targets the class predicted with the full prompt `CQ`.
    pub fn predicted(model: &'a ToyTransformer, dec: &'a Decomposition, example: &'a Example) -> Result<Self> {
        let pc = model.prompt_cache(&dec.prompt())?;
        Ok(LogitObjective {
            model,
            c: &dec.c,
            example,
            class: argmax(&model.logits(&pc, example)),
        })
    }
}

impl CoefficientObjective for LogitObjective<'_> {
    fn value(&self, q: &Matrix) -> Result<f64> {
        let pc = self.model.prompt_cache(&self.c.mul_unchecked(q))?;
        Ok(self.model.logits(&pc, self.example)[self.class])
    }

    fn grad(&self, q: &Matrix) -> Result<Matrix> {
        let pc = self.model.prompt_cache(&self.c.mul_unchecked(q))?;
        let st = self.model.readout(&pc, self.example);
        let mut e = vec![0.0; st.logits.len()];
        e[self.class] = 1.0;
        let dp = self.model.prompt_grad(&pc, self.example, &st, &e);
        Ok(self.c.t_mul(&dp))
    }
}

/// `f(Q) = sum_p w_p sum_q Q[p, q]`.
pub struct LinearObjective {
    pub weights: Vec<f64>,
}

impl CoefficientObjective for LinearObjective {
    fn value(&self, q: &Matrix) -> Result<f64> {
        if q.rows() != self.weights.len() {
            return Err(Error::Shape("weights do not match Q rows".into()));
        }
        Ok(q.row_sums().iter().zip(&self.weights).map(|(s, w)| s * w).sum())
    }

    fn grad(&self, q: &Matrix) -> Result<Matrix> {
        let mut g = Matrix::zeros(q.rows(), q.cols());
        for (p, &w) in self.weights.iter().enumerate() {
            g.row_mut(p).fill(w);
        }
        Ok(g)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Grad,
    Ig,
    Shapley,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttributionScores {
    pub method: Method,
    /// One score per concept, aligned with the columns of `C`.
    pub scores: Vec<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub ig_steps: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub mc_samples: Option<usize>,
    /// Largest 95% half-width over concepts, Monte Carlo Shapley only.
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub ci_half_width: Option<f64>,
}

fn row_dot(a: &Matrix, b: &Matrix) -> Vec<f64> {
    (0..a.rows())
        .map(|p| a.row(p).iter().zip(b.row(p)).map(|(x, y)| x * y).sum())
        .collect()
}

/// Gradient times input: `score_p = sum_q df/dQ[p,q] * Q[p,q]`.
pub fn grad_attribution(obj: &dyn CoefficientObjective, q: &Matrix) -> Result<AttributionScores> {
    let g = obj.grad(q)?;
    Ok(AttributionScores {
        method: Method::Grad,
        scores: row_dot(&g, q),
        ig_steps: None,
        mc_samples: None,
        ci_half_width: None,
    })
}

/// Integrated gradients from the zero matrix to `Q`, midpoint rule.
pub fn integrated_gradients(obj: &dyn CoefficientObjective, q: &Matrix, steps: usize) -> Result<AttributionScores> {
    if steps == 0 {
        return Err(Error::InvalidInput("integrated gradients needs at least one step".into()));
    }
    let mut acc = Matrix::zeros(q.rows(), q.cols());
    for s in 0..steps {
        let alpha = (s as f64 + 0.5) / steps as f64;
        acc.add_assign(&obj.grad(&q.scale(alpha))?);
    }
    let avg = acc.scale(1.0 / steps as f64);
    Ok(AttributionScores {
        method: Method::Ig,
        scores: row_dot(&avg, q),
        ig_steps: Some(steps),
        mc_samples: None,
        ci_half_width: None,
    })
}

/// Largest player count for exact Shapley values.
pub const EXACT_SHAPLEY_MAX: usize = 12;

/// Exact Shapley values of a coalition game over `n` players.
pub fn shapley_exact<F>(n: usize, mut game: F) -> Result<Vec<f64>>
where
    F: FnMut(&[bool]) -> Result<f64>,
{
    if n > EXACT_SHAPLEY_MAX {
        return Err(Error::Budget(format!(
            "exact Shapley over {n} players exceeds the limit of {EXACT_SHAPLEY_MAX}"
        )));
    }
    let total = 1usize << n;
    let mut values = Vec::with_capacity(total);
    let mut members = vec![false; n];
    for mask in 0..total {
        for (i, m) in members.iter_mut().enumerate() {
            *m = mask >> i & 1 == 1;
        }
        values.push(game(&members)?);
    }
    // weight(s) = s! (n - s - 1)! / n!
    let mut fact = vec![1.0f64; n + 1];
    for i in 1..=n {
        fact[i] = fact[i - 1] * i as f64;
    }
    let weight: Vec<f64> = (0..n)
        .map(|s| fact[s] * fact[n - s - 1] / fact[n])
        .collect();
    let mut phi = vec![0.0; n];
    for (i, p) in phi.iter_mut().enumerate() {
        let bit = 1usize << i;
        for mask in (0..total).filter(|m| m & bit == 0) {
            let s = mask.count_ones() as usize;
            *p += weight[s] * (values[mask | bit] - values[mask]);
        }
    }
    Ok(phi)
}

/// Monte Carlo Shapley values from `samples` permutations, drawn as
/// antithetic pairs (a permutation and its reverse). Returns the estimates
/// and the largest 95% half-width.
pub fn shapley_monte_carlo<F>(n: usize, samples: usize, seed: u64, mut game: F) -> Result<(Vec<f64>, f64)>
where
    F: FnMut(&[bool]) -> Result<f64>,
{
    if samples < 2 {
        return Err(Error::InvalidInput("need at least two permutations".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let empty = game(&vec![false; n])?;
    let pairs = samples / 2;
    let mut sum = vec![0.0; n];
    let mut sum_sq = vec![0.0; n];
    let mut perm: Vec<usize> = (0..n).collect();
    let mut members = vec![false; n];
    let mut contrib = vec![0.0; n];
    for _ in 0..pairs {
        perm.shuffle(&mut rng);
        let mut pair = vec![0.0; n];
        for order in [perm.clone(), perm.iter().rev().copied().collect()] {
            members.iter_mut().for_each(|m| *m = false);
            let mut prev = empty;
            for &i in &order {
                members[i] = true;
                let v = game(&members)?;
                contrib[i] = v - prev;
                prev = v;
            }
            for (p, c) in pair.iter_mut().zip(&contrib) {
                *p += 0.5 * c;
            }
        }
        // Antithetic pairs are averaged first, so the variance estimate is
        // over independent pair means.
        for i in 0..n {
            sum[i] += pair[i];
            sum_sq[i] += pair[i] * pair[i];
        }
    }
    let m = pairs as f64;
    let est: Vec<f64> = sum.iter().map(|s| s / m).collect();
    let half_width = (0..n)
        .map(|i| {
            let var = if pairs > 1 {
                ((sum_sq[i] - m * est[i] * est[i]) / (m - 1.0)).max(0.0)
            } else {
                0.0
            };
            1.96 * (var / m).sqrt()
        })
        .fold(0.0, f64::max);
    Ok((est, half_width))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "mode")]
pub enum ShapleyMode {
    Exact,
    MonteCarlo { samples: usize, seed: u64 },
}

/// Shapley values over concepts; a concept outside the coalition has its
/// row of `Q` zeroed.
pub fn shapley_attribution(obj: &dyn CoefficientObjective, q: &Matrix, mode: ShapleyMode) -> Result<AttributionScores> {
    let n = q.rows();
    let game = |members: &[bool]| -> Result<f64> {
        let mut masked = q.clone();
        for (p, &m) in members.iter().enumerate() {
            if !m {
                masked.row_mut(p).fill(0.0);
            }
        }
        obj.value(&masked)
    };
    let (scores, mc_samples, ci) = match mode {
        ShapleyMode::Exact => (shapley_exact(n, game)?, None, None),
        ShapleyMode::MonteCarlo { samples, seed } => {
            let (s, hw) = shapley_monte_carlo(n, samples, seed, game)?;
            (s, Some(samples), Some(hw))
        }
    };
    Ok(AttributionScores {
        method: Method::Shapley,
        scores,
        ig_steps: None,
        mc_samples,
        ci_half_width: ci,
    })
}
