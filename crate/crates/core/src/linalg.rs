//! Small dense complex linear-algebra helpers on top of `nalgebra`.
//!
//! Everything here works on `DMatrix<Complex64>`; the matrices in this crate
//! are at most a few dozen rows, so clarity wins over allocation tricks.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

pub type CMat = DMatrix<Complex64>;
pub type CVec = DVector<Complex64>;

pub const J: Complex64 = Complex64 { re: 0.0, im: 1.0 };

#[inline]
pub fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

#[inline]
pub fn cr(re: f64) -> Complex64 {
    Complex64::new(re, 0.0)
}

/// `(m + m^H) / 2`.
pub fn hermitize(m: &CMat) -> CMat {
    (m + m.adjoint()).scale(0.5)
}

/// `u v^T` (plain transpose, no conjugation).
pub fn outer_t(u: &CVec, v: &CVec) -> CMat {
    u * v.transpose()
}

/// `tr(a b)` without forming the product.
pub fn trace_prod(a: &CMat, b: &CMat) -> Complex64 {
    assert_eq!(a.ncols(), b.nrows());
    assert_eq!(a.nrows(), b.ncols());
    let mut acc = Complex64::new(0.0, 0.0);
    for i in 0..a.nrows() {
        for k in 0..a.ncols() {
            acc += a[(i, k)] * b[(k, i)];
        }
    }
    acc
}

pub fn real_trace(m: &CMat) -> f64 {
    m.diagonal().iter().map(|z| z.re).sum()
}

pub fn fro_norm(m: &CMat) -> f64 {
    m.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

pub fn vec_norm_sqr(v: &CVec) -> f64 {
    v.iter().map(|z| z.norm_sqr()).sum()
}

/// Hermitian eigendecomposition with eigenvalues sorted ascending.
#[derive(Debug, Clone)]
pub struct Eigh {
    pub values: Vec<f64>,
    pub vectors: CMat,
}

impl Eigh {
    pub fn new(m: &CMat) -> Self {
        let n = m.nrows();
        let h = hermitize(m);
        let eig = nalgebra::SymmetricEigen::new(h);
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
        let values = order.iter().map(|&i| eig.eigenvalues[i]).collect();
        let mut vectors = CMat::zeros(n, n);
        for (dst, &src) in order.iter().enumerate() {
            vectors.set_column(dst, &eig.eigenvectors.column(src));
        }
        Eigh { values, vectors }
    }

    pub fn min(&self) -> f64 {
        self.values[0]
    }

    pub fn max(&self) -> f64 {
        *self.values.last().unwrap()
    }

    /// Rebuild `V f(Λ) V^H`.
    pub fn map(&self, f: impl Fn(f64) -> f64) -> CMat {
        let n = self.values.len();
        let mut scaled = self.vectors.clone();
        for j in 0..n {
            let s = f(self.values[j]);
            for i in 0..n {
                scaled[(i, j)] *= s;
            }
        }
        &scaled * self.vectors.adjoint()
    }
}

/// Singular value decomposition with a full right basis.
///
/// `sigma` has one entry per column of the input (zeros padded when the matrix
/// is wide) sorted non-increasing, and `v` is square and unitary, so the
/// trailing columns span the null space.
#[derive(Debug, Clone)]
pub struct FullSvd {
    pub u: CMat,
    pub sigma: Vec<f64>,
    pub v: CMat,
}

impl FullSvd {
    pub fn new(h: &CMat) -> Self {
        let (rows, cols) = h.shape();
        let padded = if rows < cols {
            let mut p = CMat::zeros(cols, cols);
            p.view_mut((0, 0), (rows, cols)).copy_from(h);
            p
        } else {
            h.clone()
        };
        let svd = nalgebra::SVD::new(padded, true, true);
        let u_raw = svd.u.expect("left vectors requested");
        let vt = svd.v_t.expect("right vectors requested");
        let k = svd.singular_values.len();
        let mut order: Vec<usize> = (0..k).collect();
        order.sort_by(|&a, &b| svd.singular_values[b].total_cmp(&svd.singular_values[a]));

        let mut sigma = vec![0.0; cols];
        let mut v = CMat::zeros(cols, cols);
        let keep = rows.min(cols);
        let mut u = CMat::zeros(rows, keep);
        for (dst, &src) in order.iter().enumerate() {
            sigma[dst] = svd.singular_values[src];
            v.set_column(dst, &vt.row(src).adjoint());
            if dst < keep {
                u.set_column(dst, &u_raw.column(src).rows(0, rows));
            }
        }
        // Rows beyond the real matrix were zero padding; those singular values are exact zeros.
        for s in sigma.iter_mut().skip(keep) {
            *s = 0.0;
        }
        FullSvd { u, sigma, v }
    }

    pub fn reconstruct(&self) -> CMat {
        let k = self.u.ncols();
        let mut us = self.u.clone();
        for j in 0..k {
            for i in 0..us.nrows() {
                us[(i, j)] *= self.sigma[j];
            }
        }
        us * self.v.columns(0, k).adjoint()
    }
}

/// `V diag(p) V^H` for a unitary basis `V` and real weights `p`.
pub fn from_basis_diag(v: &CMat, p: &[f64]) -> CMat {
    let n = v.nrows();
    assert_eq!(v.ncols(), p.len());
    let mut scaled = v.clone();
    for (j, &pj) in p.iter().enumerate() {
        for i in 0..n {
            scaled[(i, j)] *= pj;
        }
    }
    &scaled * v.adjoint()
}

/// Diagonal of `V^H Q V`, i.e. the per-mode powers of `Q` in basis `V`.
pub fn diag_in_basis(v: &CMat, q: &CMat) -> Vec<f64> {
    let t = v.adjoint() * q * v;
    t.diagonal().iter().map(|z| z.re).collect()
}

/// Natural log-determinant of a Hermitian positive-definite matrix.
/// Falls back to eigenvalues when Cholesky rejects the matrix; non-positive
/// eigenvalues then give `-inf`.
pub fn ln_det_hpd(m: &CMat) -> f64 {
    let h = hermitize(m);
    if let Some(ch) = nalgebra::Cholesky::new(h.clone()) {
        let l = ch.l();
        return 2.0 * l.diagonal().iter().map(|z| z.re.ln()).sum::<f64>();
    }
    let e = Eigh::new(&h);
    e.values
        .iter()
        .map(|&x| if x > 0.0 { x.ln() } else { f64::NEG_INFINITY })
        .sum()
}

/// Eigenvalues and unit eigenvector for the minimum eigenvalue of a 2×2
/// Hermitian matrix `[a, b; conj(b), d]`.
pub fn min_eig_2x2(a: f64, b: Complex64, d: f64) -> (f64, [Complex64; 2]) {
    let mean = 0.5 * (a + d);
    let half = 0.5 * (a - d);
    let rad = (half * half + b.norm_sqr()).sqrt();
    let lmin = mean - rad;
    // (A - lmin I) z = 0 → pick the better conditioned of the two rows.
    let v = if b.norm() < 1e-300 {
        if a <= d {
            [cr(1.0), cr(0.0)]
        } else {
            [cr(0.0), cr(1.0)]
        }
    } else if (a - lmin).abs() >= (d - lmin).abs() {
        // row 1: (a - l) z1 + b z2 = 0 → z = [-b, a - l]
        [-b, cr(a - lmin)]
    } else {
        // row 2: conj(b) z1 + (d - l) z2 = 0 → z = [d - l, -conj(b)]
        [cr(d - lmin), -b.conj()]
    };
    let n = (v[0].norm_sqr() + v[1].norm_sqr()).sqrt();
    (lmin, [v[0] / n, v[1] / n])
}
