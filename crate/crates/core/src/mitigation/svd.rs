//! Dense SVD by one-sided (Hestenes) Jacobi rotations.
//!
//! Columns of a working copy of `A` are rotated pairwise until mutually
//! orthogonal; the accumulated rotations form `V`, column norms are the
//! singular values and normalized columns form `U`. Sized for small square
//! blocks (tens of rows), where it is accurate to machine precision.

use crate::error::{Error, Result};

/// Row-major dense matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::Dimension(format!(
                "matrix data length {} != {rows}x{cols}",
                data.len()
            )));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for c in 0..cols {
                data.push(f(r, c));
            }
        }
        Self { rows, cols, data }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn sub(&self, other: &Matrix) -> Matrix {
        Matrix {
            rows: self.rows,
            cols: self.cols,
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(a, b)| a - b)
                .collect(),
        }
    }
}

/// `A = U diag(sigma) Vᵀ` with `sigma` descending. `u` is `rows × n` and `v`
/// is `n × n`, both stored column-major (`n = cols`).
#[derive(Clone, Debug)]
pub struct Svd {
    pub rows: usize,
    pub n: usize,
    pub u: Vec<f64>,
    pub sigma: Vec<f64>,
    pub v: Vec<f64>,
    /// `U Σ` before normalization; column `j` is `sigma[j] * u_j`.
    scaled_u: Vec<f64>,
}

const MAX_SWEEPS: usize = 60;

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn two_columns(data: &mut [f64], len: usize, p: usize, q: usize) -> (&mut [f64], &mut [f64]) {
    debug_assert!(p < q);
    let (head, tail) = data.split_at_mut(q * len);
    (&mut head[p * len..(p + 1) * len], &mut tail[..len])
}

fn rotate(a: &mut [f64], b: &mut [f64], c: f64, s: f64) {
    for (x, y) in a.iter_mut().zip(b.iter_mut()) {
        let (xv, yv) = (*x, *y);
        *x = c * xv - s * yv;
        *y = s * xv + c * yv;
    }
}

impl Svd {
    pub fn compute(a: &Matrix) -> Result<Self> {
        if a.data.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numeric("matrix has non-finite entries".into()));
        }
        if a.rows < a.cols {
            return Err(Error::Dimension(format!(
                "svd expects rows >= cols, got {}x{}",
                a.rows, a.cols
            )));
        }
        let (m, n) = (a.rows, a.cols);
        let mut w = vec![0.0; m * n];
        for r in 0..m {
            for c in 0..n {
                w[c * m + r] = a.get(r, c);
            }
        }
        let mut v = vec![0.0; n * n];
        for i in 0..n {
            v[i * n + i] = 1.0;
        }

        let tol = f64::EPSILON * m as f64;
        for _ in 0..MAX_SWEEPS {
            let mut rotated = false;
            for p in 0..n {
                for q in p + 1..n {
                    let (wp, wq) = two_columns(&mut w, m, p, q);
                    let alpha = dot(wp, wp);
                    let beta = dot(wq, wq);
                    let gamma = dot(wp, wq);
                    if gamma == 0.0 || gamma.abs() <= tol * (alpha * beta).sqrt() {
                        continue;
                    }
                    rotated = true;
                    let zeta = (beta - alpha) / (2.0 * gamma);
                    let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                    let c = 1.0 / (1.0 + t * t).sqrt();
                    let s = c * t;
                    rotate(wp, wq, c, s);
                    let (vp, vq) = two_columns(&mut v, n, p, q);
                    rotate(vp, vq, c, s);
                }
            }
            if !rotated {
                break;
            }
        }

        let norms: Vec<f64> = (0..n)
            .map(|j| dot(&w[j * m..(j + 1) * m], &w[j * m..(j + 1) * m]).sqrt())
            .collect();
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&i, &j| norms[j].total_cmp(&norms[i]).then(i.cmp(&j)));

        let mut sigma = Vec::with_capacity(n);
        let mut scaled_u = Vec::with_capacity(m * n);
        let mut v_sorted = Vec::with_capacity(n * n);
        for &j in &order {
            sigma.push(norms[j]);
            scaled_u.extend_from_slice(&w[j * m..(j + 1) * m]);
            v_sorted.extend_from_slice(&v[j * n..(j + 1) * n]);
        }
        let u = orthonormal_left(&scaled_u, &sigma, m, n);
        Ok(Self {
            rows: m,
            n,
            u,
            sigma,
            v: v_sorted,
            scaled_u,
        })
    }

    /// Column `j` of `U`.
    pub fn u_col(&self, j: usize) -> &[f64] {
        &self.u[j * self.rows..(j + 1) * self.rows]
    }

    /// Column `j` of `V`.
    pub fn v_col(&self, j: usize) -> &[f64] {
        &self.v[j * self.n..(j + 1) * self.n]
    }

    /// Sum of the leading `rank` rank-one terms `σ_j u_j v_jᵀ`.
    pub fn reconstruct(&self, rank: usize) -> Matrix {
        let (m, n) = (self.rows, self.n);
        let mut out = Matrix::zeros(m, n);
        for j in 0..rank.min(n) {
            let us = &self.scaled_u[j * m..(j + 1) * m];
            let vj = self.v_col(j);
            for (row, &a) in out.data.chunks_exact_mut(n).zip(us) {
                for (o, &b) in row.iter_mut().zip(vj) {
                    *o += a * b;
                }
            }
        }
        out
    }
}

/// Normalizes the columns of `U Σ`; columns with negligible singular value are
/// replaced by Gram–Schmidt completions so `U` stays orthonormal.
fn orthonormal_left(scaled: &[f64], sigma: &[f64], m: usize, n: usize) -> Vec<f64> {
    let cutoff = sigma.first().copied().unwrap_or(0.0) * f64::EPSILON * m as f64;
    let mut u = vec![0.0; m * n];
    let mut pending = Vec::new();
    for j in 0..n {
        if sigma[j] > cutoff && sigma[j] > 0.0 {
            for r in 0..m {
                u[j * m + r] = scaled[j * m + r] / sigma[j];
            }
        } else {
            pending.push(j);
        }
    }
    let mut basis = 0;
    for j in pending {
        loop {
            let mut cand = vec![0.0; m];
            cand[basis % m] = 1.0;
            basis += 1;
            for _ in 0..2 {
                for k in 0..n {
                    if k == j {
                        continue;
                    }
                    let col = &u[k * m..(k + 1) * m];
                    let proj = dot(&cand, col);
                    for (c, x) in cand.iter_mut().zip(col) {
                        *c -= proj * x;
                    }
                }
            }
            let norm = dot(&cand, &cand).sqrt();
            if norm > 1e-8 {
                for r in 0..m {
                    u[j * m + r] = cand[r] / norm;
                }
                break;
            }
            if basis > 2 * m {
                break;
            }
        }
    }
    u
}
