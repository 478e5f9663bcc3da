use serde::{Deserialize, Serialize};

use crate::embedding::ConceptId;
use crate::error::{Error, Result};
use crate::numerics::{lstsq, svd, Matrix};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    FrobeniusFit,
    CdTuned,
}

/// `P ~ C Q` with `C` in `R^{d x N_c}` and `Q` in `R^{N_c x N_q}`.
#[derive(Debug, Clone, PartialEq)]
pub struct Decomposition {
    pub c: Matrix,
    pub q: Matrix,
    /// Concept id of each column of `C`.
    pub concept_ids: Vec<ConceptId>,
    /// Class index of each column of `C`.
    pub concept_classes: Vec<usize>,
    pub provenance: Provenance,
}

impl Decomposition {
    pub fn new(
        c: Matrix,
        q: Matrix,
        concept_ids: Vec<ConceptId>,
        concept_classes: Vec<usize>,
        provenance: Provenance,
    ) -> Result<Self> {
        if c.cols() != q.rows() {
            return Err(Error::Shape(format!(
                "C is {}x{} but Q is {}x{}",
                c.rows(),
                c.cols(),
                q.rows(),
                q.cols()
            )));
        }
        if concept_ids.len() != c.cols() || concept_classes.len() != c.cols() {
            return Err(Error::Shape(format!(
                "{} concept ids and {} classes for {} columns",
                concept_ids.len(),
                concept_classes.len(),
                c.cols()
            )));
        }
        c.ensure_finite("C")?;
        q.ensure_finite("Q")?;
        Ok(Decomposition {
            c,
            q,
            concept_ids,
            concept_classes,
            provenance,
        })
    }

    pub fn n_concepts(&self) -> usize {
        self.c.cols()
    }

    pub fn prompt(&self) -> Matrix {
        self.c.mul_unchecked(&self.q)
    }

    /// Column indices of the concepts belonging to `class`.
    pub fn class_columns(&self, class: usize) -> Vec<usize> {
        (0..self.n_concepts())
            .filter(|&i| self.concept_classes[i] == class)
            .collect()
    }
}

/// How `C` is obtained in [`frobenius_fit`].
#[derive(Debug, Clone, PartialEq)]
pub enum FitInit {
    /// Truncated SVD of `P`.
    Svd,
    /// `C` fixed to these columns; only `Q` is solved.
    Concepts(Matrix),
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitReport {
    pub decomposition: Decomposition,
    /// `||CQ - P||_F`.
    pub residual: f64,
    /// `||CQ - P||_F^2`, the quantity compared against epsilon.
    pub residual_sq: f64,
    /// Smallest achievable `||CQ - P||_F^2` for this `N_c` (Eckart–Young) or,
    /// with frozen `C`, for this `C`.
    pub optimum_sq: f64,
    /// Set when `residual_sq > epsilon`.
    pub not_within_epsilon: bool,
}

/// Relative cutoff for singular values treated as zero in least squares.
pub const LSTSQ_RCOND: f64 = 1e-12;

/// Factorizes `P` as `CQ` with `N_c` concepts.
///
/// With [`FitInit::Svd`], `C = U_k diag(s_k)` and `Q = V_k^T` for
/// `k = min(N_c, rank)`, padded with zero columns/rows up to `N_c`. With
/// frozen concepts, `Q` is the least-squares solution.
pub fn frobenius_fit(p: &Matrix, n_c: usize, epsilon: f64, init: &FitInit) -> Result<FitReport> {
    if n_c == 0 {
        return Err(Error::InvalidInput("N_c must be at least 1".into()));
    }
    if !(epsilon > 0.0) {
        return Err(Error::InvalidInput("epsilon must be positive".into()));
    }
    p.ensure_finite("P")?;
    let (d, n_q) = p.shape();
    let (c, q, optimum_sq) = match init {
        FitInit::Svd => {
            let s = svd(p)?;
            let k = n_c.min(s.singular_values.len());
            let mut c = Matrix::zeros(d, n_c);
            let mut q = Matrix::zeros(n_c, n_q);
            for j in 0..k {
                let sv = s.singular_values[j];
                for i in 0..d {
                    c[(i, j)] = s.u[(i, j)] * sv;
                }
                q.row_mut(j).copy_from_slice(s.v_t.row(j));
            }
            let tail = s.tail_energy(k);
            (c, q, tail * tail)
        }
        FitInit::Concepts(c) => {
            if c.rows() != d || c.cols() != n_c {
                return Err(Error::Shape(format!(
                    "concept matrix is {}x{}, expected {d}x{n_c}",
                    c.rows(),
                    c.cols()
                )));
            }
            let q = lstsq(c, p, LSTSQ_RCOND)?;
            let r = c.mul_unchecked(&q).sub(p).frobenius_norm();
            (c.clone(), q, r * r)
        }
    };
    let residual = c.mul_unchecked(&q).sub(p).frobenius_norm();
    let residual_sq = residual * residual;
    let ids = (0..n_c as ConceptId).collect();
    let decomposition = Decomposition::new(c, q, ids, vec![0; n_c], Provenance::FrobeniusFit)?;
    Ok(FitReport {
        decomposition,
        residual,
        residual_sq,
        optimum_sq,
        not_within_epsilon: residual_sq > epsilon,
    })
}

/// Plain gradient descent on `h(Q) = ||CQ - P||_F^2` with `C` frozen, step
/// `1 / L` where `L = 2 s_max(C)^2`. Returns the final `Q` and `h(Q)`.
pub fn solve_q_gd(c: &Matrix, p: &Matrix, q0: &Matrix, steps: usize) -> Result<(Matrix, f64)> {
    if c.rows() != p.rows() || q0.shape() != (c.cols(), p.cols()) {
        return Err(Error::Shape("solve_q_gd: incompatible shapes".into()));
    }
    let s_max = svd(c)?.singular_values.first().copied().unwrap_or(0.0);
    let lipschitz = 2.0 * s_max * s_max;
    let mut q = q0.clone();
    if lipschitz > 0.0 {
        let ctc = c.t_mul(c);
        let ctp = c.t_mul(p);
        for _ in 0..steps {
            // grad = 2 (C^T C Q - C^T P)
            let grad = ctc.mul_unchecked(&q).sub(&ctp).scale(2.0);
            q.axpy(-1.0 / lipschitz, &grad);
        }
    }
    let r = c.mul_unchecked(&q).sub(p).frobenius_norm();
    Ok((q, r * r))
}

/// `key(p) = sum_q Q[p, q]`, one value per concept.
pub fn concept_keys(dec: &Decomposition) -> Vec<f64> {
    dec.q.row_sums()
}
