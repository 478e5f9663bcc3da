//! Thin singular value decomposition by one-sided Jacobi rotations.
//!
//! One-sided Jacobi orthogonalizes the columns of a working copy of the
//! matrix; it is slow compared to bidiagonalization but converges to full
//! relative accuracy, which is what the factorization oracles need.

use super::matrix::{dot, Matrix};
use crate::error::{Error, Result};

#[derive(Debug, Clone)]
pub struct SvdResult {
    /// `rows x r` with orthonormal columns.
    pub u: Matrix,
    /// Non-increasing, non-negative, length `r = min(rows, cols)`.
    pub singular_values: Vec<f64>,
    /// `r x cols` with orthonormal rows.
    pub v_t: Matrix,
}

impl SvdResult {
    pub fn rank(&self, tol: f64) -> usize {
        let top = self.singular_values.first().copied().unwrap_or(0.0);
        self.singular_values
            .iter()
            .filter(|&&s| s > tol * top.max(1.0))
            .count()
    }

    /// `U_k diag(s_k) V_k^T`.
    pub fn reconstruct(&self, k: usize) -> Matrix {
        let k = k.min(self.singular_values.len());
        let mut us = self.u.col_range(0, k);
        for i in 0..us.rows() {
            for (j, s) in self.singular_values[..k].iter().enumerate() {
                us[(i, j)] *= s;
            }
        }
        us.mul_unchecked(&self.v_t.select_rows(&(0..k).collect::<Vec<_>>()))
    }

    /// Eckart–Young optimum: `sqrt(sum_{i >= k} s_i^2)`.
    pub fn tail_energy(&self, k: usize) -> f64 {
        self.singular_values
            .iter()
            .skip(k)
            .map(|s| s * s)
            .sum::<f64>()
            .sqrt()
    }
}

const MAX_SWEEPS: usize = 80;

pub fn svd(m: &Matrix) -> Result<SvdResult> {
    if !m.is_finite() {
        return Err(Error::InvalidInput("svd input contains non-finite values".into()));
    }
    if m.rows() >= m.cols() {
        Ok(jacobi_tall(m))
    } else {
        let t = jacobi_tall(&m.transpose());
        Ok(SvdResult {
            u: t.v_t.transpose(),
            singular_values: t.singular_values,
            v_t: t.u.transpose(),
        })
    }
}

/// Requires `rows >= cols`.
fn jacobi_tall(m: &Matrix) -> SvdResult {
    let (rows, n) = m.shape();
    // Work on columns: store A^T so each column is a contiguous row.
    let mut a = m.transpose();
    let mut v = Matrix::identity(n);
    let eps = f64::EPSILON;

    for _ in 0..MAX_SWEEPS {
        let mut rotated = false;
        for p in 0..n {
            for q in (p + 1)..n {
                let alpha = dot(a.row(p), a.row(p));
                let beta = dot(a.row(q), a.row(q));
                let gamma = dot(a.row(p), a.row(q));
                if gamma == 0.0 || gamma.abs() <= eps * (alpha * beta).sqrt() {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let t = if zeta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                rotate_rows(&mut a, p, q, c, s);
                rotate_rows(&mut v, p, q, c, s);
            }
        }
        if !rotated {
            break;
        }
    }

    let mut order: Vec<(usize, f64)> = (0..n).map(|j| (j, dot(a.row(j), a.row(j)).sqrt())).collect();
    // Stable: equal singular values keep column order.
    order.sort_by(|x, y| y.1.total_cmp(&x.1));

    let top = order.first().map_or(0.0, |o| o.1);
    let tiny = top * eps * (rows.max(n) as f64);
    let mut u = Matrix::zeros(rows, n);
    let mut v_t = Matrix::zeros(n, n);
    let mut sv = Vec::with_capacity(n);
    let mut filled = Vec::with_capacity(n);
    for (k, &(j, s)) in order.iter().enumerate() {
        v_t.row_mut(k).copy_from_slice(v.row(j));
        if s > tiny && s > 0.0 {
            let col: Vec<f64> = a.row(j).iter().map(|x| x / s).collect();
            u.set_col(k, &col);
            sv.push(s);
            filled.push(true);
        } else {
            sv.push(0.0);
            filled.push(false);
        }
    }
    complete_basis(&mut u, &filled);
    SvdResult {
        u,
        singular_values: sv,
        v_t,
    }
}

#[inline]
fn rotate_rows(m: &mut Matrix, p: usize, q: usize, c: f64, s: f64) {
    let cols = m.cols();
    let data = m.data_mut();
    let (head, tail) = data.split_at_mut(q * cols);
    let rp = &mut head[p * cols..(p + 1) * cols];
    let rq = &mut tail[..cols];
    for (x, y) in rp.iter_mut().zip(rq.iter_mut()) {
        let xp = *x;
        let yq = *y;
        *x = c * xp - s * yq;
        *y = s * xp + c * yq;
    }
}

/// Fills the columns of `u` not marked in `filled` with unit vectors
/// orthogonal to every other column (Gram–Schmidt against the standard basis).
fn complete_basis(u: &mut Matrix, filled: &[bool]) {
    let rows = u.rows();
    let mut basis: Vec<Vec<f64>> = filled
        .iter()
        .enumerate()
        .filter(|(_, &f)| f)
        .map(|(j, _)| u.col(j))
        .collect();
    let mut next_e = 0;
    for (j, &f) in filled.iter().enumerate() {
        if f {
            continue;
        }
        loop {
            assert!(next_e < rows, "cannot complete orthonormal basis");
            let mut cand = vec![0.0; rows];
            cand[next_e] = 1.0;
            next_e += 1;
            // Two passes of modified Gram–Schmidt for stability.
            for _ in 0..2 {
                for b in &basis {
                    let proj = dot(&cand, b);
                    for (c, bv) in cand.iter_mut().zip(b) {
                        *c -= proj * bv;
                    }
                }
            }
            let n = dot(&cand, &cand).sqrt();
            if n > 1e-6 {
                for c in cand.iter_mut() {
                    *c /= n;
                }
                u.set_col(j, &cand);
                basis.push(cand);
                break;
            }
        }
    }
}

/// Minimum-norm least-squares solution `X = pinv(A) B`.
///
/// Singular values below `rcond * s_max` are treated as zero.
pub fn lstsq(a: &Matrix, b: &Matrix, rcond: f64) -> Result<Matrix> {
    if a.rows() != b.rows() {
        return Err(Error::Shape(format!(
            "lstsq: A has {} rows, B has {}",
            a.rows(),
            b.rows()
        )));
    }
    let dec = svd(a)?;
    b.ensure_finite("lstsq right-hand side")?;
    let top = dec.singular_values.first().copied().unwrap_or(0.0);
    // pinv(A) = V diag(1/s) U^T
    let utb = dec.u.t_mul(b);
    let mut scaled = utb;
    for (k, &s) in dec.singular_values.iter().enumerate() {
        let inv = if s > rcond * top && s > 0.0 { 1.0 / s } else { 0.0 };
        for v in scaled.row_mut(k) {
            *v *= inv;
        }
    }
    Ok(dec.v_t.t_mul(&scaled))
}
