//! Small dense complex helpers on top of `nalgebra`.

use nalgebra::{Cholesky, DMatrix, Dyn};

pub use nalgebra::Complex;

pub type C64 = Complex<f64>;
pub type CMat = DMatrix<C64>;

pub fn c64(re: f64, im: f64) -> C64 {
    C64::new(re, im)
}

pub fn identity(n: usize) -> CMat {
    CMat::identity(n, n)
}

/// (M + M^H) / 2.
pub fn hermitize(m: &CMat) -> CMat {
    (m + m.adjoint()) * c64(0.5, 0.0)
}

pub fn cholesky(m: CMat) -> Option<Cholesky<C64, Dyn>> {
    Cholesky::new(m)
}

/// Log-determinant of a Hermitian positive definite matrix.
pub fn logdet_hpd(m: &CMat) -> Option<f64> {
    let chol = Cholesky::new(m.clone())?;
    Some(logdet_from_cholesky(&chol))
}

pub fn logdet_from_cholesky(chol: &Cholesky<C64, Dyn>) -> f64 {
    let l = chol.l_dirty();
    (0..l.nrows()).map(|i| 2.0 * l[(i, i)].re.ln()).sum()
}

/// Squared ratio of the extreme Cholesky pivots; a cheap lower bound on the
/// spectral condition number.
pub fn cholesky_condition(chol: &Cholesky<C64, Dyn>) -> f64 {
    let l = chol.l_dirty();
    let mut lo = f64::INFINITY;
    let mut hi = 0.0f64;
    for i in 0..l.nrows() {
        let p = l[(i, i)].re;
        lo = lo.min(p);
        hi = hi.max(p);
    }
    (hi / lo).powi(2)
}

/// Re tr(A B) without forming the product.
pub fn re_trace_product(a: &CMat, b: &CMat) -> f64 {
    debug_assert_eq!(a.ncols(), b.nrows());
    debug_assert_eq!(a.nrows(), b.ncols());
    let mut acc = 0.0;
    for i in 0..a.nrows() {
        for j in 0..a.ncols() {
            let x = a[(i, j)];
            let y = b[(j, i)];
            acc += x.re * y.re - x.im * y.im;
        }
    }
    acc
}

/// Squared Frobenius norm, i.e. tr(M M^H).
pub fn frobenius_sq(m: &CMat) -> f64 {
    m.iter().map(|z| z.norm_sqr()).sum()
}

pub fn all_finite(m: &CMat) -> bool {
    m.iter().all(|z| z.re.is_finite() && z.im.is_finite())
}

/// Σ_g V_g V_g^H over the given beamformers.
pub fn gram_sum<'a>(rows: usize, vs: impl IntoIterator<Item = &'a CMat>) -> CMat {
    let mut acc = CMat::zeros(rows, rows);
    for v in vs {
        acc.gemm(c64(1.0, 0.0), v, &v.adjoint(), c64(1.0, 0.0));
    }
    acc
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn logdet_of_diagonal() {
        let m = CMat::from_diagonal(&nalgebra::DVector::from_vec(vec![
            c64(2.0, 0.0),
            c64(3.0, 0.0),
        ]));
        assert!((logdet_hpd(&m).unwrap() - 6f64.ln()).abs() < 1e-14);
    }

    #[test]
    fn trace_product_matches_explicit() {
        let a = CMat::from_fn(2, 3, |i, j| c64(i as f64 + 0.5, j as f64 - 1.0));
        let b = CMat::from_fn(3, 2, |i, j| c64(j as f64 * 0.3, i as f64 + 0.1));
        let explicit = (&a * &b).trace().re;
        assert!((re_trace_product(&a, &b) - explicit).abs() < 1e-12);
    }
}
