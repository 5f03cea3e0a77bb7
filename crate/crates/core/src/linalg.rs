//! Thin wrappers over faer for the dense kernels used throughout.

use faer::linalg::matmul::matmul;
use faer::{c64, Accum, Mat, MatMut, MatRef, Par};

pub(crate) const ZERO: c64 = c64 { re: 0.0, im: 0.0 };
pub(crate) const ONE: c64 = c64 { re: 1.0, im: 0.0 };

pub fn par() -> Par {
    Par::Seq
}

pub fn frob(a: MatRef<'_, c64>) -> f64 {
    if a.nrows() == 0 || a.ncols() == 0 {
        return 0.0;
    }
    a.norm_l2()
}

/// `dst += alpha * a * b`
pub fn gemm_acc(dst: MatMut<'_, c64>, alpha: c64, a: MatRef<'_, c64>, b: MatRef<'_, c64>) {
    if a.ncols() == 0 || dst.nrows() == 0 || dst.ncols() == 0 {
        return;
    }
    matmul(dst, Accum::Add, a, b, alpha, par());
}

/// `dst += alpha * a^* b`
pub fn gemm_adj_acc(dst: MatMut<'_, c64>, alpha: c64, a: MatRef<'_, c64>, b: MatRef<'_, c64>) {
    if a.nrows() == 0 || dst.nrows() == 0 || dst.ncols() == 0 {
        return;
    }
    matmul(dst, Accum::Add, a.adjoint(), b, alpha, par());
}

pub fn mul(a: MatRef<'_, c64>, b: MatRef<'_, c64>) -> Mat<c64> {
    let mut c = Mat::zeros(a.nrows(), b.ncols());
    gemm_acc(c.as_mut(), ONE, a, b);
    c
}

/// `a^* b`
pub fn adj_mul(a: MatRef<'_, c64>, b: MatRef<'_, c64>) -> Mat<c64> {
    let mut c = Mat::zeros(a.ncols(), b.ncols());
    if a.nrows() > 0 && c.nrows() > 0 && c.ncols() > 0 {
        matmul(c.as_mut(), Accum::Replace, a.adjoint(), b, ONE, par());
    }
    c
}

/// `a b^*`
pub fn mul_adj(a: MatRef<'_, c64>, b: MatRef<'_, c64>) -> Mat<c64> {
    let mut c = Mat::zeros(a.nrows(), b.nrows());
    if a.ncols() > 0 && c.nrows() > 0 && c.ncols() > 0 {
        matmul(c.as_mut(), Accum::Replace, a, b.adjoint(), ONE, par());
    }
    c
}

pub fn adjoint(a: MatRef<'_, c64>) -> Mat<c64> {
    a.adjoint().to_owned()
}

pub fn hcat(a: MatRef<'_, c64>, b: MatRef<'_, c64>) -> Mat<c64> {
    debug_assert_eq!(a.nrows(), b.nrows());
    let mut c = Mat::zeros(a.nrows(), a.ncols() + b.ncols());
    c.as_mut().subcols_mut(0, a.ncols()).copy_from(a);
    c.as_mut().subcols_mut(a.ncols(), b.ncols()).copy_from(b);
    c
}

/// Thin QR, `a = q r` with `q` of size `m x min(m, n)`.
pub fn qr_thin(a: MatRef<'_, c64>) -> (Mat<c64>, Mat<c64>) {
    let (m, n) = a.shape();
    let k = m.min(n);
    if k == 0 {
        return (Mat::zeros(m, 0), Mat::zeros(0, n));
    }
    let qr = a.qr();
    let q = qr.compute_thin_Q();
    let r = qr.thin_R().to_owned();
    (q, r)
}

/// Thin SVD `a = u diag(s) v^*`, singular values in decreasing order.
pub fn svd_thin(a: MatRef<'_, c64>) -> (Mat<c64>, Vec<f64>, Mat<c64>) {
    let (m, n) = a.shape();
    if m == 0 || n == 0 {
        return (Mat::zeros(m, 0), Vec::new(), Mat::zeros(n, 0));
    }
    let svd = a.thin_svd().expect("SVD failed to converge");
    let s = (0..m.min(n)).map(|i| svd.S()[i].re).collect();
    (svd.U().to_owned(), s, svd.V().to_owned())
}

pub fn singular_values(a: MatRef<'_, c64>) -> Vec<f64> {
    if a.nrows() == 0 || a.ncols() == 0 {
        return Vec::new();
    }
    a.singular_values().expect("SVD failed to converge")
}

pub fn col_norm2(a: MatRef<'_, c64>, j: usize) -> f64 {
    a.col(j).iter().map(|z| z.norm_sqr()).sum()
}
