//! Dense linear-algebra helpers shared by the dynamics, controllers and solver.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

/// Singular values below `PINV_RTOL * sigma_max` are treated as zero by every
/// pseudo-inverse in the crate.
pub const PINV_RTOL: f64 = 1e-8;

/// Result of a truncated pseudo-inverse.
#[derive(Debug, Clone)]
pub struct Pinv {
    pub matrix: DMatrix<f64>,
    pub rank: usize,
    /// Smallest singular value that survived truncation (0 when rank is 0).
    pub smallest_retained: f64,
}

/// Moore-Penrose pseudo-inverse with relative singular-value truncation.
pub fn pinv(a: &DMatrix<f64>) -> DMatrix<f64> {
    pinv_full(a).matrix
}

pub fn pinv_full(a: &DMatrix<f64>) -> Pinv {
    pinv_scaled(a, 0.0)
}

/// Pseudo-inverse whose truncation threshold is relative to
/// `max(sigma_max(a), reference)`. Projected matrices use the scale of their
/// unprojected counterpart as `reference`, so that a matrix consisting only
/// of round-off is recognized as zero.
pub fn pinv_scaled(a: &DMatrix<f64>, reference: f64) -> Pinv {
    let (r, c) = a.shape();
    if r == 0 || c == 0 {
        return Pinv {
            matrix: DMatrix::zeros(c, r),
            rank: 0,
            smallest_retained: 0.0,
        };
    }
    let svd = a.clone().svd(true, true);
    let u = svd.u.as_ref().expect("svd u");
    let v_t = svd.v_t.as_ref().expect("svd v_t");
    let sigma_max = svd.singular_values.iter().cloned().fold(0.0, f64::max);
    let cutoff = PINV_RTOL * sigma_max.max(reference);
    let mut out = DMatrix::zeros(c, r);
    let mut rank = 0;
    let mut smallest = f64::INFINITY;
    for (k, &s) in svd.singular_values.iter().enumerate() {
        if s > cutoff && s > 0.0 {
            rank += 1;
            smallest = smallest.min(s);
            // out += v_k * u_k^T / s
            let vk = v_t.row(k).transpose();
            let uk = u.column(k);
            out.ger(1.0 / s, &vk, &uk, 1.0);
        }
    }
    Pinv {
        matrix: out,
        rank,
        smallest_retained: if rank == 0 { 0.0 } else { smallest },
    }
}

/// Largest singular value.
pub fn spectral_norm(a: &DMatrix<f64>) -> f64 {
    if a.is_empty() {
        return 0.0;
    }
    a.clone().singular_values().iter().cloned().fold(0.0, f64::max)
}

/// Damped least-squares inverse `A^T (A A^T + lambda^2 I)^{-1}`.
pub fn damped_pinv(a: &DMatrix<f64>, lambda: f64) -> DMatrix<f64> {
    let (r, c) = a.shape();
    if r == 0 || c == 0 {
        return DMatrix::zeros(c, r);
    }
    let mut g = a * a.transpose();
    for i in 0..r {
        g[(i, i)] += lambda * lambda;
    }
    let inv = g
        .cholesky()
        .map(|ch| ch.inverse())
        .unwrap_or_else(|| DMatrix::zeros(r, r));
    a.transpose() * inv
}

pub fn sym(a: &DMatrix<f64>) -> DMatrix<f64> {
    (a + a.transpose()) * 0.5
}

/// Projects a symmetric matrix onto the positive semi-definite cone by
/// clipping negative eigenvalues to zero.
pub fn psd_project(a: &DMatrix<f64>) -> DMatrix<f64> {
    if a.nrows() == 0 {
        return a.clone();
    }
    let eig = SymmetricEigen::new(sym(a));
    let clipped = eig.eigenvalues.map(|l| l.max(0.0));
    let v = &eig.eigenvectors;
    sym(&(v * DMatrix::from_diagonal(&clipped) * v.transpose()))
}

pub fn min_eigenvalue(a: &DMatrix<f64>) -> f64 {
    if a.nrows() == 0 {
        return 0.0;
    }
    SymmetricEigen::new(sym(a)).eigenvalues.min()
}

/// Induced infinity norm (maximum absolute row sum).
pub fn inf_norm(a: &DMatrix<f64>) -> f64 {
    a.row_iter()
        .map(|r| r.iter().map(|x| x.abs()).sum::<f64>())
        .fold(0.0, f64::max)
}

pub fn vec_inf_norm(v: &DVector<f64>) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

/// Solves `K x = rhs`, falling back to a truncated pseudo-inverse when the LU
/// factorization is singular or leaves a large residual (redundant rows).
pub fn solve_robust(k: &DMatrix<f64>, rhs: &DVector<f64>) -> Option<DVector<f64>> {
    let scale = 1.0 + vec_inf_norm(rhs) + k.amax();
    if let Some(x) = k.clone().lu().solve(rhs) {
        if x.iter().all(|v| v.is_finite()) {
            let res = vec_inf_norm(&(k * &x - rhs));
            if res <= 1e-9 * scale {
                return Some(x);
            }
        }
    }
    let x = pinv(k) * rhs;
    if x.iter().all(|v| v.is_finite()) {
        Some(x)
    } else {
        None
    }
}

/// Selection matrix whose rows pick the listed coordinates out of `n`.
pub fn selection(indices: &[usize], n: usize) -> DMatrix<f64> {
    let mut s = DMatrix::zeros(indices.len(), n);
    for (r, &i) in indices.iter().enumerate() {
        s[(r, i)] = 1.0;
    }
    s
}

/// Vertically stacks matrices with equal column counts.
pub fn vstack(blocks: &[&DMatrix<f64>], ncols: usize) -> DMatrix<f64> {
    let rows: usize = blocks.iter().map(|b| b.nrows()).sum();
    let mut out = DMatrix::zeros(rows, ncols);
    let mut r = 0;
    for b in blocks {
        out.view_mut((r, 0), (b.nrows(), ncols)).copy_from(*b);
        r += b.nrows();
    }
    out
}

pub fn vstack_vec(parts: &[&DVector<f64>]) -> DVector<f64> {
    let n: usize = parts.iter().map(|p| p.len()).sum();
    let mut out = DVector::zeros(n);
    let mut r = 0;
    for p in parts {
        out.rows_mut(r, p.len()).copy_from(*p);
        r += p.len();
    }
    out
}

/// Block-diagonal matrix.
pub fn block_diag(blocks: &[&DMatrix<f64>]) -> DMatrix<f64> {
    let rows: usize = blocks.iter().map(|b| b.nrows()).sum();
    let cols: usize = blocks.iter().map(|b| b.ncols()).sum();
    let mut out = DMatrix::zeros(rows, cols);
    let (mut r, mut c) = (0, 0);
    for b in blocks {
        out.view_mut((r, c), b.shape()).copy_from(*b);
        r += b.nrows();
        c += b.ncols();
    }
    out
}
