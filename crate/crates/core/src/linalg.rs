//! Dense linear-algebra helpers shared by the estimation and selection code.
//!
//! Every pseudoinverse and rank decision goes through [`RANK_RTOL`]: singular
//! values below `RANK_RTOL * sigma_max` are treated as zero.

use nalgebra::{DMatrix, DVector};

/// Relative singular-value cutoff used for pseudoinverses and rank detection.
pub const RANK_RTOL: f64 = 1e-10;

/// Moore-Penrose pseudoinverse together with the retained rank.
///
/// Symmetric input is inverted through its eigendecomposition. Other input
/// goes through the SVD, whose factors are checked against the input: for
/// some highly degenerate matrices the SVD returns correct singular values
/// but inconsistent singular vectors, and then the pseudoinverse is taken
/// from the Gram matrix instead.
pub fn pinv_with_rank(m: &DMatrix<f64>) -> (DMatrix<f64>, usize) {
    let (rows, cols) = m.shape();
    if rows == 0 || cols == 0 || m.amax() == 0.0 {
        return (DMatrix::zeros(cols, rows), 0);
    }
    if is_symmetric(m) {
        return symmetric_pinv(m);
    }
    let svd = m.clone().svd(true, true);
    let u = svd.u.as_ref().expect("u requested");
    let v_t = svd.v_t.as_ref().expect("v_t requested");
    let s_max = svd.singular_values.max();
    let recon = u * DMatrix::from_diagonal(&svd.singular_values) * v_t;
    if (recon - m).amax() > FACTOR_CHECK_RTOL * s_max {
        return gram_pinv(m);
    }
    let cutoff = RANK_RTOL * s_max;
    let mut out = DMatrix::zeros(cols, rows);
    let mut rank = 0;
    for (idx, &s) in svd.singular_values.iter().enumerate() {
        if s > cutoff {
            rank += 1;
            let vi = v_t.row(idx).transpose();
            let ui = u.column(idx);
            out += (vi / s) * ui.transpose();
        }
    }
    (out, rank)
}

/// Largest tolerated factorization error, relative to the largest singular value.
const FACTOR_CHECK_RTOL: f64 = 1e-11;

fn is_symmetric(m: &DMatrix<f64>) -> bool {
    m.is_square() && (m - m.transpose()).amax() <= 1e-14 * m.amax()
}

/// Pseudoinverse of a symmetric matrix from its eigendecomposition; the
/// singular values are the absolute eigenvalues.
fn symmetric_pinv(m: &DMatrix<f64>) -> (DMatrix<f64>, usize) {
    let sym = (m + m.transpose()) * 0.5;
    let eig = sym.symmetric_eigen();
    let cutoff = RANK_RTOL * eig.eigenvalues.amax();
    let n = m.nrows();
    let mut out = DMatrix::zeros(n, n);
    let mut rank = 0;
    for (idx, &l) in eig.eigenvalues.iter().enumerate() {
        if l.abs() > cutoff {
            rank += 1;
            let v = eig.eigenvectors.column(idx);
            out += (v / l) * v.transpose();
        }
    }
    (out, rank)
}

/// `A^+ = (A'A)^+ A'` (or `A' (AA')^+` for wide input).
fn gram_pinv(m: &DMatrix<f64>) -> (DMatrix<f64>, usize) {
    if m.nrows() >= m.ncols() {
        let (g, rank) = symmetric_pinv(&(m.transpose() * m));
        (g * m.transpose(), rank)
    } else {
        let (g, rank) = symmetric_pinv(&(m * m.transpose()));
        (m.transpose() * g, rank)
    }
}

pub fn pinv(m: &DMatrix<f64>) -> DMatrix<f64> {
    pinv_with_rank(m).0
}

/// Number of singular values above the relative cutoff.
pub fn numerical_rank(m: &DMatrix<f64>) -> usize {
    pinv_with_rank(m).1
}

/// Euclidean norm of the least-squares residual of `v` against the columns of `a`.
pub fn span_residual(a: &DMatrix<f64>, v: &DVector<f64>) -> f64 {
    if a.ncols() == 0 {
        return v.norm();
    }
    let coef = pinv(a) * v;
    (v - a * coef).norm()
}

/// Stack `columns` side by side.
pub fn hstack(columns: &[DVector<f64>], nrows: usize) -> DMatrix<f64> {
    let mut m = DMatrix::zeros(nrows, columns.len());
    for (c, col) in columns.iter().enumerate() {
        m.set_column(c, col);
    }
    m
}

/// Orthonormal basis grown one vector at a time (modified Gram-Schmidt with
/// one re-orthogonalisation pass). Used for greedy independence extraction.
#[derive(Debug, Clone)]
pub struct IncrementalBasis {
    dim: usize,
    q: Vec<DVector<f64>>,
    rtol: f64,
}

impl IncrementalBasis {
    pub fn new(dim: usize) -> Self {
        Self {
            dim,
            q: Vec::new(),
            rtol: RANK_RTOL,
        }
    }

    pub fn rank(&self) -> usize {
        self.q.len()
    }

    fn residual(&self, v: &DVector<f64>) -> DVector<f64> {
        let mut r = v.clone();
        for _ in 0..2 {
            for q in &self.q {
                let c = q.dot(&r);
                r.axpy(-c, q, 1.0);
            }
        }
        r
    }

    /// Whether `v` lies (numerically) in the current span.
    pub fn contains(&self, v: &DVector<f64>) -> bool {
        let scale = v.norm();
        if scale == 0.0 {
            return true;
        }
        self.residual(v).norm() <= self.rtol * scale
    }

    /// Adds `v` if it is independent of the current span; returns whether it was added.
    pub fn try_push(&mut self, v: &DVector<f64>) -> bool {
        debug_assert_eq!(v.len(), self.dim);
        let scale = v.norm();
        if scale == 0.0 {
            return false;
        }
        let r = self.residual(v);
        let rn = r.norm();
        if rn <= self.rtol * scale {
            return false;
        }
        self.q.push(r / rn);
        true
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pinv_of_rank_deficient_matrix() {
        // Laplacian of the triangle graph: rank 2.
        let l = DMatrix::from_row_slice(3, 3, &[2.0, -1.0, -1.0, -1.0, 2.0, -1.0, -1.0, -1.0, 2.0]);
        let (p, rank) = pinv_with_rank(&l);
        assert_eq!(rank, 2);
        let back = &l * &p * &l;
        assert!((back - &l).norm() < 1e-12);
        // L+ = L / 9 for the complete graph on three nodes.
        assert!((p - l / 9.0).norm() < 1e-12);
    }

    #[test]
    fn incremental_basis_detects_dependence() {
        let mut b = IncrementalBasis::new(3);
        assert!(b.try_push(&DVector::from_vec(vec![1.0, 0.0, 0.0])));
        assert!(b.try_push(&DVector::from_vec(vec![1.0, 1.0, 0.0])));
        assert!(!b.try_push(&DVector::from_vec(vec![3.0, -2.0, 0.0])));
        assert!(b.contains(&DVector::from_vec(vec![0.0, 5.0, 0.0])));
        assert_eq!(b.rank(), 2);
    }

    #[test]
    fn residual_against_empty_span_is_norm() {
        let a = DMatrix::<f64>::zeros(3, 0);
        let v = DVector::from_vec(vec![3.0, 4.0, 0.0]);
        assert_eq!(span_residual(&a, &v), 5.0);
    }

    /// Gram matrix of all 3-cycles on 7 items: one eigenvalue 7 of
    /// multiplicity 15 and a 20-dimensional kernel.
    fn seven_item_cycle_gram() -> DMatrix<f64> {
        let k = 7;
        let pairs: Vec<(usize, usize)> = (0..k)
            .flat_map(|i| ((i + 1)..k).map(move |j| (i, j)))
            .collect();
        let row = |a: usize, b: usize| pairs.iter().position(|&p| p == (a, b)).unwrap();
        let mut cols = Vec::new();
        for i in 0..k {
            for j in (i + 1)..k {
                for l in (j + 1)..k {
                    let mut c = DVector::zeros(pairs.len());
                    c[row(i, j)] = 1.0;
                    c[row(j, l)] = 1.0;
                    c[row(i, l)] = -1.0;
                    cols.push(c);
                }
            }
        }
        let c = hstack(&cols, pairs.len());
        c.transpose() * c
    }

    #[test]
    fn pinv_of_highly_degenerate_gram() {
        let g = seven_item_cycle_gram();
        let (p, rank) = pinv_with_rank(&g);
        assert_eq!(rank, 15);
        assert!((&g * &p * &g - &g).amax() < 1e-12);
        assert!((&p * &g * &p - &p).amax() < 1e-12);
    }

    #[test]
    fn pinv_of_rectangular_matrices() {
        let a = DMatrix::from_row_slice(4, 2, &[1.0, 2.0, 0.0, 1.0, 1.0, 0.0, 2.0, 4.0]);
        let p = pinv(&a);
        assert!((&a * &p * &a - &a).amax() < 1e-12);
        assert!((&p * &a - DMatrix::<f64>::identity(2, 2)).amax() < 1e-12);
        let wide = a.transpose();
        let pw = pinv(&wide);
        assert!((&wide * &pw * &wide - &wide).amax() < 1e-12);
        assert_eq!(numerical_rank(&a), 2);
    }
}
