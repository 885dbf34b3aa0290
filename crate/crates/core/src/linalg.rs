//! Small dense complex linear-algebra helpers shared by the modules.

use nalgebra::{Complex, DMatrix, DVector, SymmetricEigen};

pub type C64 = Complex<f64>;
pub type CMat = DMatrix<C64>;
pub type CVec = DVector<C64>;

pub fn c(re: f64) -> C64 {
    Complex::new(re, 0.0)
}

pub fn zeros(n: usize) -> CMat {
    CMat::zeros(n, n)
}

pub fn identity(n: usize) -> CMat {
    CMat::identity(n, n)
}

/// `h h^H`.
pub fn outer(h: &CVec) -> CMat {
    h * h.adjoint()
}

/// `h^H W h`, the value of `Tr(h h^H W)` for Hermitian `W`.
pub fn quad(h: &CVec, w: &CMat) -> f64 {
    (h.adjoint() * w * h)[(0, 0)].re
}

/// Real part of `Tr(A B)` without forming the product.
pub fn trace_product(a: &CMat, b: &CMat) -> f64 {
    debug_assert_eq!(a.ncols(), b.nrows());
    debug_assert_eq!(a.nrows(), b.ncols());
    let mut acc = 0.0;
    for i in 0..a.nrows() {
        for k in 0..a.ncols() {
            let x = a[(i, k)] * b[(k, i)];
            acc += x.re;
        }
    }
    acc
}

pub fn trace_re(a: &CMat) -> f64 {
    (0..a.nrows()).map(|i| a[(i, i)].re).sum()
}

/// `(A + A^H) / 2`.
pub fn hermitize(a: &CMat) -> CMat {
    (a + a.adjoint()) * c(0.5)
}

/// Largest absolute deviation from Hermitian symmetry.
pub fn hermitian_defect(a: &CMat) -> f64 {
    let mut worst: f64 = 0.0;
    for i in 0..a.nrows() {
        for j in 0..a.ncols() {
            worst = worst.max((a[(i, j)] - a[(j, i)].conj()).norm());
        }
    }
    worst
}

/// Eigen-decomposition of a Hermitian matrix with eigenvalues sorted in
/// descending order and eigenvectors as matching columns.
pub fn eigh(a: &CMat) -> (Vec<f64>, CMat) {
    let n = a.nrows();
    if n == 0 {
        return (Vec::new(), CMat::zeros(0, 0));
    }
    let eig = SymmetricEigen::new(hermitize(a));
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[j].total_cmp(&eig.eigenvalues[i]));
    let values = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let mut vectors = CMat::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        vectors.set_column(dst, &eig.eigenvectors.column(src));
    }
    (values, vectors)
}

pub fn min_eigenvalue(a: &CMat) -> f64 {
    eigh(a).0.last().copied().unwrap_or(0.0)
}

pub fn max_eigenvalue(a: &CMat) -> f64 {
    eigh(a).0.first().copied().unwrap_or(0.0)
}

/// Number of eigenvalues above `rel_tol * lambda_max`; zero for a matrix
/// with no positive eigenvalue.
pub fn numerical_rank(a: &CMat, rel_tol: f64) -> usize {
    let (values, _) = eigh(a);
    let top = values.first().copied().unwrap_or(0.0);
    if top <= 0.0 {
        return 0;
    }
    values.iter().filter(|&&v| v > rel_tol * top).count()
}

/// Rebuilds `sum_i max(lambda_i, 0) u_i u_i^H`.
pub fn clamp_psd(a: &CMat) -> CMat {
    let n = a.nrows();
    let (values, vectors) = eigh(a);
    let mut out = CMat::zeros(n, n);
    for (i, &v) in values.iter().enumerate() {
        if v > 0.0 {
            let u = vectors.column(i).into_owned();
            out += outer(&u) * c(v);
        }
    }
    out
}

/// Rank-one truncation `lambda_max u u^H`.
pub fn dominant_rank_one(a: &CMat) -> CMat {
    let n = a.nrows();
    let (values, vectors) = eigh(a);
    match values.first() {
        Some(&top) if top > 0.0 => {
            let u = vectors.column(0).into_owned();
            outer(&u) * c(top)
        }
        _ => CMat::zeros(n, n),
    }
}

pub fn frobenius(a: &CMat) -> f64 {
    a.iter().map(|x| x.norm_sqr()).sum::<f64>().sqrt()
}

pub fn vec_norm(h: &CVec) -> f64 {
    h.iter().map(|x| x.norm_sqr()).sum::<f64>().sqrt()
}

/// Block-diagonal assembly of two square matrices.
pub fn block_diag(a: &CMat, b: &CMat) -> CMat {
    let (n, m) = (a.nrows(), b.nrows());
    let mut out = CMat::zeros(n + m, n + m);
    out.view_mut((0, 0), (n, n)).copy_from(a);
    out.view_mut((n, n), (m, m)).copy_from(b);
    out
}

/// Concatenation of two column vectors.
pub fn stack(a: &CVec, b: &CVec) -> CVec {
    CVec::from_iterator(a.len() + b.len(), a.iter().chain(b.iter()).copied())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn trace_product_matches_dense_product() {
        let a = CMat::from_row_slice(2, 2, &[c(1.0), C64::new(0.5, -0.2), C64::new(0.5, 0.2), c(3.0)]);
        let b = CMat::from_row_slice(2, 2, &[c(2.0), C64::new(-1.0, 0.7), C64::new(-1.0, -0.7), c(0.25)]);
        let dense = (&a * &b).trace().re;
        assert!((trace_product(&a, &b) - dense).abs() < 1e-14);
    }

    #[test]
    fn eigh_sorts_descending() {
        let a = CMat::from_diagonal(&CVec::from_vec(vec![c(0.5), c(2.0), c(-1.0)]));
        let (values, vectors) = eigh(&a);
        assert_eq!(values, vec![2.0, 0.5, -1.0]);
        assert!((vectors[(1, 0)].norm() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn rank_of_outer_product_is_one() {
        let h = CVec::from_vec(vec![C64::new(1.0, 2.0), C64::new(-0.3, 0.1), c(0.7)]);
        assert_eq!(numerical_rank(&outer(&h), 1e-6), 1);
        assert_eq!(numerical_rank(&zeros(3), 1e-6), 0);
    }

    #[test]
    fn clamp_removes_negative_dust() {
        let a = CMat::from_diagonal(&CVec::from_vec(vec![c(1.0), c(-1e-12)]));
        let clamped = clamp_psd(&a);
        assert_eq!(clamped[(1, 1)].re, 0.0);
        assert!((clamped[(0, 0)].re - 1.0).abs() < 1e-15);
    }
}
