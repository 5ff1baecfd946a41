//! Dense complex matrices for small dimensions (N <= 8).
//!
//! Everything the physics modules need lives here: products, adjoints,
//! commutators, Frobenius norms, a cyclic Jacobi eigensolver for Hermitian
//! matrices and the unitary polar factor used by non-Abelian transport.
//!
//! Basis order is fixed: index 0 is the excited atomic state `|e>`, index 1
//! the ground state `|g>`.

use std::fmt;
use std::ops::{Add, AddAssign, Index, IndexMut, Mul, Neg, Sub};

use num_complex::Complex64;

use crate::error::{Error, Result};

pub type C64 = Complex64;

pub const ZERO: C64 = C64::new(0.0, 0.0);
pub const ONE: C64 = C64::new(1.0, 0.0);
pub const I: C64 = C64::new(0.0, 1.0);

/// Maximum number of Jacobi sweeps before giving up.
pub const MAX_SWEEPS: usize = 100;

/// Square complex matrix stored row-major.
#[derive(Clone, PartialEq)]
pub struct CMatrix {
    dim: usize,
    data: Vec<C64>,
}

impl fmt::Debug for CMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "CMatrix({}x{})", self.dim, self.dim)?;
        for i in 0..self.dim {
            let row: Vec<String> = (0..self.dim)
                .map(|j| {
                    let z = self[(i, j)];
                    format!("{:+.6e}{:+.6e}i", z.re, z.im)
                })
                .collect();
            writeln!(f, "  [{}]", row.join(", "))?;
        }
        Ok(())
    }
}

impl CMatrix {
    pub fn zeros(dim: usize) -> Self {
        assert!(dim > 0, "matrix dimension must be positive");
        CMatrix { dim, data: vec![ZERO; dim * dim] }
    }

    pub fn identity(dim: usize) -> Self {
        let mut m = Self::zeros(dim);
        for i in 0..dim {
            m[(i, i)] = ONE;
        }
        m
    }

    /// Builds a matrix from row-major entries; rejects non-square or non-finite input.
    pub fn from_vec(dim: usize, data: Vec<C64>) -> Result<Self> {
        if dim == 0 || data.len() != dim * dim {
            return Err(Error::DimMismatch { left: dim * dim, right: data.len() });
        }
        if data.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(Error::NonFinite("matrix entry".into()));
        }
        Ok(CMatrix { dim, data })
    }

    /// Convenience constructor for literal matrices; panics on ragged input.
    pub fn from_rows<R: AsRef<[C64]>>(rows: &[R]) -> Self {
        let dim = rows.len();
        let mut data = Vec::with_capacity(dim * dim);
        for r in rows {
            let r = r.as_ref();
            assert_eq!(r.len(), dim, "ragged matrix literal");
            data.extend_from_slice(r);
        }
        CMatrix { dim, data }
    }

    pub fn from_real_rows<R: AsRef<[f64]>>(rows: &[R]) -> Self {
        let cr: Vec<Vec<C64>> = rows
            .iter()
            .map(|r| r.as_ref().iter().map(|&x| C64::new(x, 0.0)).collect())
            .collect();
        Self::from_rows(&cr)
    }

    pub fn diag(entries: &[C64]) -> Self {
        let mut m = Self::zeros(entries.len());
        for (i, &z) in entries.iter().enumerate() {
            m[(i, i)] = z;
        }
        m
    }

    pub fn real_diag(entries: &[f64]) -> Self {
        let c: Vec<C64> = entries.iter().map(|&x| C64::new(x, 0.0)).collect();
        Self::diag(&c)
    }

    /// Matrix whose columns are the given vectors.
    pub fn from_columns(cols: &[Vec<C64>]) -> Self {
        let dim = cols.len();
        let mut m = Self::zeros(dim);
        for (j, c) in cols.iter().enumerate() {
            assert_eq!(c.len(), dim, "column length mismatch");
            for (i, &z) in c.iter().enumerate() {
                m[(i, j)] = z;
            }
        }
        m
    }

    /// Outer product `|a><b|`.
    pub fn outer(a: &[C64], b: &[C64]) -> Self {
        assert_eq!(a.len(), b.len());
        let dim = a.len();
        let mut m = Self::zeros(dim);
        for i in 0..dim {
            for j in 0..dim {
                m[(i, j)] = a[i] * b[j].conj();
            }
        }
        m
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn as_slice(&self) -> &[C64] {
        &self.data
    }

    pub fn column(&self, j: usize) -> Vec<C64> {
        (0..self.dim).map(|i| self[(i, j)]).collect()
    }

    pub fn set_column(&mut self, j: usize, v: &[C64]) {
        for (i, &z) in v.iter().enumerate() {
            self[(i, j)] = z;
        }
    }

    pub fn adjoint(&self) -> Self {
        let n = self.dim;
        let mut out = Self::zeros(n);
        for i in 0..n {
            for j in 0..n {
                out.data[j * n + i] = self.data[i * n + j].conj();
            }
        }
        out
    }

    pub fn matmul(&self, rhs: &CMatrix) -> CMatrix {
        assert_eq!(self.dim, rhs.dim, "matmul dimension mismatch");
        let n = self.dim;
        let mut out = vec![ZERO; n * n];
        for i in 0..n {
            for k in 0..n {
                let a = self.data[i * n + k];
                if a == ZERO {
                    continue;
                }
                let row = &rhs.data[k * n..k * n + n];
                let dst = &mut out[i * n..i * n + n];
                for (d, &b) in dst.iter_mut().zip(row) {
                    *d += a * b;
                }
            }
        }
        CMatrix { dim: n, data: out }
    }

    pub fn apply(&self, v: &[C64]) -> Vec<C64> {
        assert_eq!(v.len(), self.dim);
        let n = self.dim;
        (0..n)
            .map(|i| (0..n).map(|k| self.data[i * n + k] * v[k]).sum())
            .collect()
    }

    pub fn scale(&self, s: C64) -> CMatrix {
        CMatrix { dim: self.dim, data: self.data.iter().map(|&z| z * s).collect() }
    }

    pub fn scale_real(&self, s: f64) -> CMatrix {
        CMatrix { dim: self.dim, data: self.data.iter().map(|&z| z * s).collect() }
    }

    /// `self += s * other`
    pub fn add_scaled(&mut self, s: C64, other: &CMatrix) {
        assert_eq!(self.dim, other.dim);
        for (a, &b) in self.data.iter_mut().zip(&other.data) {
            *a += s * b;
        }
    }

    pub fn trace(&self) -> C64 {
        (0..self.dim).map(|i| self[(i, i)]).sum()
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    /// `(m + m^dagger) / 2`
    pub fn hermitian_part(&self) -> CMatrix {
        let adj = self.adjoint();
        let mut out = self.clone();
        for (a, &b) in out.data.iter_mut().zip(&adj.data) {
            *a = (*a + b) * 0.5;
        }
        out
    }

    pub fn hermiticity_residual(&self) -> f64 {
        let n = self.dim;
        let mut acc = 0.0;
        for i in 0..n {
            for j in 0..n {
                acc += (self.data[i * n + j] - self.data[j * n + i].conj()).norm_sqr();
            }
        }
        acc.sqrt()
    }

    pub fn unitarity_residual(&self) -> f64 {
        let p = self.adjoint().matmul(self);
        (&p - &CMatrix::identity(self.dim)).frobenius_norm()
    }

    /// Hermitian within `tol` relative to `max(1, |m|_F)`.
    pub fn is_hermitian(&self, tol: f64) -> bool {
        self.hermiticity_residual() <= tol * self.frobenius_norm().max(1.0)
    }

    pub fn is_unitary(&self, tol: f64) -> bool {
        self.unitarity_residual() <= tol
    }

    pub fn is_psd(&self, tol: f64) -> bool {
        if !self.is_hermitian(tol) {
            return false;
        }
        match eig_hermitian(&self.hermitian_part(), 1e-14) {
            Ok(e) => e.values[0] >= -tol,
            Err(_) => false,
        }
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|z| z.re.is_finite() && z.im.is_finite())
    }
}

impl Index<(usize, usize)> for CMatrix {
    type Output = C64;
    #[inline]
    fn index(&self, (i, j): (usize, usize)) -> &C64 {
        &self.data[i * self.dim + j]
    }
}

impl IndexMut<(usize, usize)> for CMatrix {
    #[inline]
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut C64 {
        &mut self.data[i * self.dim + j]
    }
}

impl Add for &CMatrix {
    type Output = CMatrix;
    fn add(self, rhs: &CMatrix) -> CMatrix {
        assert_eq!(self.dim, rhs.dim);
        CMatrix {
            dim: self.dim,
            data: self.data.iter().zip(&rhs.data).map(|(&a, &b)| a + b).collect(),
        }
    }
}

impl Sub for &CMatrix {
    type Output = CMatrix;
    fn sub(self, rhs: &CMatrix) -> CMatrix {
        assert_eq!(self.dim, rhs.dim);
        CMatrix {
            dim: self.dim,
            data: self.data.iter().zip(&rhs.data).map(|(&a, &b)| a - b).collect(),
        }
    }
}

impl Mul for &CMatrix {
    type Output = CMatrix;
    fn mul(self, rhs: &CMatrix) -> CMatrix {
        self.matmul(rhs)
    }
}

impl Neg for &CMatrix {
    type Output = CMatrix;
    fn neg(self) -> CMatrix {
        self.scale_real(-1.0)
    }
}

impl AddAssign<&CMatrix> for CMatrix {
    fn add_assign(&mut self, rhs: &CMatrix) {
        assert_eq!(self.dim, rhs.dim);
        for (a, &b) in self.data.iter_mut().zip(&rhs.data) {
            *a += b;
        }
    }
}

/// `<a|b>`
pub fn inner(a: &[C64], b: &[C64]) -> C64 {
    a.iter().zip(b).map(|(x, y)| x.conj() * y).sum()
}

pub fn vec_norm(a: &[C64]) -> f64 {
    a.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

pub fn commutator(a: &CMatrix, b: &CMatrix) -> CMatrix {
    &a.matmul(b) - &b.matmul(a)
}

pub fn anticommutator(a: &CMatrix, b: &CMatrix) -> CMatrix {
    &a.matmul(b) + &b.matmul(a)
}

pub fn frobenius_distance(a: &CMatrix, b: &CMatrix) -> Result<f64> {
    if a.dim != b.dim {
        return Err(Error::DimMismatch { left: a.dim, right: b.dim });
    }
    Ok(a.data
        .iter()
        .zip(&b.data)
        .map(|(&x, &y)| (x - y).norm_sqr())
        .sum::<f64>()
        .sqrt())
}

/// Unitarity tolerance used by [`conjugate`].
pub const UNITARY_TOL: f64 = 1e-9;

/// `u^dagger m u`.
pub fn conjugate(u: &CMatrix, m: &CMatrix) -> Result<CMatrix> {
    if u.dim != m.dim {
        return Err(Error::DimMismatch { left: u.dim, right: m.dim });
    }
    let residual = u.unitarity_residual();
    if residual > UNITARY_TOL {
        return Err(Error::NotUnitary { residual });
    }
    Ok(u.adjoint().matmul(&m.matmul(u)))
}

/// `u m u^dagger`, the inverse of [`conjugate`].
pub fn unconjugate(u: &CMatrix, m: &CMatrix) -> Result<CMatrix> {
    if u.dim != m.dim {
        return Err(Error::DimMismatch { left: u.dim, right: m.dim });
    }
    let residual = u.unitarity_residual();
    if residual > UNITARY_TOL {
        return Err(Error::NotUnitary { residual });
    }
    Ok(u.matmul(&m.matmul(&u.adjoint())))
}

pub fn pauli_x() -> CMatrix {
    CMatrix::from_real_rows(&[[0.0, 1.0], [1.0, 0.0]])
}

pub fn pauli_y() -> CMatrix {
    CMatrix::from_rows(&[[ZERO, -I], [I, ZERO]])
}

pub fn pauli_z() -> CMatrix {
    CMatrix::from_real_rows(&[[1.0, 0.0], [0.0, -1.0]])
}

/// `sigma_- = |g><e|` in the (e, g) basis.
pub fn sigma_minus() -> CMatrix {
    CMatrix::from_real_rows(&[[0.0, 0.0], [1.0, 0.0]])
}

/// Eigen-decomposition of a Hermitian matrix.
#[derive(Clone, Debug)]
pub struct Eigen {
    /// Ascending.
    pub values: Vec<f64>,
    /// Column `k` is the eigenvector of `values[k]`.
    pub vectors: CMatrix,
}

impl Eigen {
    pub fn vector(&self, k: usize) -> Vec<C64> {
        self.vectors.column(k)
    }
}

/// Cyclic complex Jacobi diagonalization.
///
/// Eigenvalues come back ascending. Each eigenvector is normalised and its
/// largest-magnitude component made real and nonnegative, so the output is
/// reproducible without any later gauge fixing.
pub fn eig_hermitian(m: &CMatrix, tol: f64) -> Result<Eigen> {
    if !m.is_finite() {
        return Err(Error::NonFinite("eig_hermitian input".into()));
    }
    let norm = m.frobenius_norm();
    let residual = m.hermiticity_residual();
    if residual > tol * norm.max(1.0) {
        return Err(Error::NotHermitian { residual });
    }
    let n = m.dim;
    let mut a = m.hermitian_part();
    let mut v = CMatrix::identity(n);
    let threshold = tol * norm;

    let off = |a: &CMatrix| -> f64 {
        let mut s = 0.0;
        for i in 0..n {
            for j in 0..n {
                if i != j {
                    s += a[(i, j)].norm_sqr();
                }
            }
        }
        s.sqrt()
    };

    let mut converged = off(&a) <= threshold;
    let mut sweep = 0;
    while !converged {
        if sweep == MAX_SWEEPS {
            return Err(Error::NoConvergence { sweeps: MAX_SWEEPS });
        }
        sweep += 1;
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = a[(p, q)];
                let mag = apq.norm();
                if mag == 0.0 {
                    continue;
                }
                let app = a[(p, p)].re;
                let aqq = a[(q, q)].re;
                // Rounding-level couplings are annihilated outright.
                if mag <= f64::EPSILON * 0.25 * (app.abs() + aqq.abs()) {
                    a[(p, q)] = ZERO;
                    a[(q, p)] = ZERO;
                    continue;
                }
                let phase = apq / mag;
                let theta = 0.5 * (2.0 * mag).atan2(app - aqq);
                let (s, c) = theta.sin_cos();
                let ph_conj = phase.conj();
                // J = [[c, -s], [e^{-i alpha} s, e^{-i alpha} c]] on (p, q).
                let jpp = C64::new(c, 0.0);
                let jpq = C64::new(-s, 0.0);
                let jqp = ph_conj * s;
                let jqq = ph_conj * c;
                for k in 0..n {
                    let akp = a[(k, p)];
                    let akq = a[(k, q)];
                    a[(k, p)] = akp * jpp + akq * jqp;
                    a[(k, q)] = akp * jpq + akq * jqq;
                    let vkp = v[(k, p)];
                    let vkq = v[(k, q)];
                    v[(k, p)] = vkp * jpp + vkq * jqp;
                    v[(k, q)] = vkp * jpq + vkq * jqq;
                }
                for k in 0..n {
                    let apk = a[(p, k)];
                    let aqk = a[(q, k)];
                    a[(p, k)] = jpp.conj() * apk + jqp.conj() * aqk;
                    a[(q, k)] = jpq.conj() * apk + jqq.conj() * aqk;
                }
                a[(p, q)] = ZERO;
                a[(q, p)] = ZERO;
                a[(p, p)] = C64::new(a[(p, p)].re, 0.0);
                a[(q, q)] = C64::new(a[(q, q)].re, 0.0);
            }
        }
        converged = off(&a) <= threshold;
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&x, &y| a[(x, x)].re.total_cmp(&a[(y, y)].re));
    let values: Vec<f64> = order.iter().map(|&k| a[(k, k)].re).collect();
    let mut vectors = CMatrix::zeros(n);
    for (dst, &src) in order.iter().enumerate() {
        let mut col = v.column(src);
        canonical_gauge(&mut col);
        vectors.set_column(dst, &col);
    }
    Ok(Eigen { values, vectors })
}

/// Normalises `v` and rotates its phase so the largest-magnitude entry
/// (first one on ties) is real and nonnegative.
pub fn canonical_gauge(v: &mut [C64]) {
    let norm = vec_norm(v);
    if norm == 0.0 {
        return;
    }
    let max = v.iter().map(|z| z.norm()).fold(0.0, f64::max);
    let pivot = v
        .iter()
        .position(|z| z.norm() >= max * (1.0 - 1e-12))
        .unwrap_or(0);
    let phase = v[pivot].conj() / v[pivot].norm();
    for z in v.iter_mut() {
        *z = *z * phase / norm;
    }
    v[pivot] = C64::new(v[pivot].re, 0.0);
}

/// Groups ascending eigenvalues into runs closer than `tol`; each entry is
/// the index range of one cluster.
pub fn degenerate_clusters(values: &[f64], tol: f64) -> Vec<std::ops::Range<usize>> {
    let mut clusters = Vec::new();
    if values.is_empty() {
        return clusters;
    }
    let mut start = 0;
    for k in 1..values.len() {
        if (values[k] - values[k - 1]).abs() >= tol {
            clusters.push(start..k);
            start = k;
        }
    }
    clusters.push(start..values.len());
    clusters
}

/// Unitary factor `U` of the polar decomposition `m = U P` with `P` positive.
pub fn unitary_polar_factor(m: &CMatrix) -> Result<CMatrix> {
    let gram = m.adjoint().matmul(m);
    let eig = eig_hermitian(&gram, 1e-12)?;
    let scale = eig.values.last().copied().unwrap_or(0.0).max(f64::MIN_POSITIVE);
    if eig.values[0] <= 1e-24 * scale || eig.values[0] <= 0.0 {
        return Err(Error::InvalidArgument(
            "polar factor of a singular matrix is not unique".into(),
        ));
    }
    let inv_sqrt: Vec<C64> = eig.values.iter().map(|&x| C64::new(x.sqrt().recip(), 0.0)).collect();
    let v = &eig.vectors;
    let p_inv = v.matmul(&CMatrix::diag(&inv_sqrt)).matmul(&v.adjoint());
    Ok(m.matmul(&p_inv))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    pub(crate) fn random_hermitian(rng: &mut impl Rng, n: usize) -> CMatrix {
        let mut m = CMatrix::zeros(n);
        for i in 0..n {
            m[(i, i)] = c(rng.gen_range(-2.0..2.0), 0.0);
            for j in (i + 1)..n {
                let z = c(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
                m[(i, j)] = z;
                m[(j, i)] = z.conj();
            }
        }
        m
    }

    fn reconstruct(e: &Eigen) -> CMatrix {
        let lam = CMatrix::real_diag(&e.values);
        e.vectors.matmul(&lam).matmul(&e.vectors.adjoint())
    }

    #[test]
    fn pauli_z_spectrum() {
        let e = eig_hermitian(&pauli_z(), 1e-14).unwrap();
        assert_eq!(e.values, vec![-1.0, 1.0]);
        assert_eq!(e.vector(0), vec![ZERO, ONE]);
        assert_eq!(e.vector(1), vec![ONE, ZERO]);
    }

    #[test]
    fn laser_hamiltonian_spectrum() {
        let (delta, omega) = (0.5, 1.0);
        let h = CMatrix::from_real_rows(&[[delta / 2.0, omega], [omega, -delta / 2.0]]);
        let e = eig_hermitian(&h, 1e-14).unwrap();
        let big_e = 1.0625f64.sqrt();
        assert!((e.values[0] + big_e).abs() < 1e-14);
        assert!((e.values[1] - big_e).abs() < 1e-14);
    }

    #[test]
    fn random_four_by_four_reconstructs() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..20 {
            let m = random_hermitian(&mut rng, 4);
            let e = eig_hermitian(&m, 1e-14).unwrap();
            assert!(frobenius_distance(&reconstruct(&e), &m).unwrap() < 1e-12);
            assert!(e.vectors.is_unitary(1e-12));
            assert!(e.values.windows(2).all(|w| w[0] <= w[1]));
        }
    }

    #[test]
    fn canonical_gauge_pivot_is_real_nonnegative() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let m = random_hermitian(&mut rng, 3);
        let e = eig_hermitian(&m, 1e-14).unwrap();
        for k in 0..3 {
            let col = e.vector(k);
            let max = col.iter().map(|z| z.norm()).fold(0.0, f64::max);
            let pivot = col.iter().find(|z| z.norm() >= max * (1.0 - 1e-12)).unwrap();
            assert_eq!(pivot.im, 0.0);
            assert!(pivot.re > 0.0);
        }
    }

    #[test]
    fn rejects_non_hermitian() {
        let m = CMatrix::from_real_rows(&[[0.0, 1.0], [0.0, 0.0]]);
        assert!(matches!(eig_hermitian(&m, 1e-12), Err(Error::NotHermitian { .. })));
    }

    #[test]
    fn zero_matrix_is_already_diagonal() {
        let e = eig_hermitian(&CMatrix::zeros(3), 1e-14).unwrap();
        assert_eq!(e.values, vec![0.0; 3]);
        assert_eq!(e.vectors, CMatrix::identity(3));
    }

    #[test]
    fn degenerate_matrix_gets_orthonormal_cluster() {
        let m = CMatrix::real_diag(&[1.0, 1.0, -1.0]);
        let u = {
            let mut rng = ChaCha8Rng::seed_from_u64(3);
            let h = random_hermitian(&mut rng, 3);
            eig_hermitian(&h, 1e-14).unwrap().vectors
        };
        let rotated = u.matmul(&m).matmul(&u.adjoint());
        let e = eig_hermitian(&rotated, 1e-14).unwrap();
        let clusters = degenerate_clusters(&e.values, 1e-9);
        assert_eq!(clusters, vec![0..1, 1..3]);
        assert!(e.vectors.is_unitary(1e-12));
        assert!(frobenius_distance(&reconstruct(&e), &rotated).unwrap() < 1e-12);
    }

    #[test]
    fn conjugate_identity_and_permutation() {
        let m = CMatrix::from_rows(&[[c(0.3, 0.0), c(0.1, 0.2)], [c(0.1, -0.2), c(0.7, 0.0)]]);
        assert_eq!(conjugate(&CMatrix::identity(2), &m).unwrap(), m);
        let a = 0.3;
        let d = CMatrix::real_diag(&[a, 1.0 - a]);
        let swapped = conjugate(&pauli_x(), &d).unwrap();
        assert_eq!(swapped, CMatrix::real_diag(&[1.0 - a, a]));
    }

    #[test]
    fn conjugate_errors() {
        let m = CMatrix::identity(2);
        let not_unitary = CMatrix::real_diag(&[2.0, 1.0]);
        assert!(matches!(conjugate(&not_unitary, &m), Err(Error::NotUnitary { .. })));
        assert!(matches!(
            conjugate(&CMatrix::identity(3), &m),
            Err(Error::DimMismatch { .. })
        ));
    }

    #[test]
    fn frobenius_distance_cases() {
        let a = CMatrix::zeros(2);
        assert_eq!(frobenius_distance(&a, &a).unwrap(), 0.0);
        let d = frobenius_distance(&a, &CMatrix::identity(2)).unwrap();
        assert!((d - 2f64.sqrt()).abs() < 1e-15);
        assert!(frobenius_distance(&a, &CMatrix::zeros(3)).is_err());
    }

    #[test]
    fn frobenius_distance_matches_direct_sum() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let a = random_hermitian(&mut rng, 4);
        let b = random_hermitian(&mut rng, 4);
        let mut acc = 0.0;
        for i in 0..4 {
            for j in 0..4 {
                let d = a[(i, j)] - b[(i, j)];
                acc += d.re * d.re + d.im * d.im;
            }
        }
        assert!((frobenius_distance(&a, &b).unwrap() - acc.sqrt()).abs() < 1e-14);
    }

    #[test]
    fn polar_factor_is_unitary_and_recovers_positive_part() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let h = random_hermitian(&mut rng, 3);
        let u = eig_hermitian(&h, 1e-14).unwrap().vectors;
        let p = CMatrix::real_diag(&[0.5, 1.0, 2.0]);
        let m = u.matmul(&p);
        let w = unitary_polar_factor(&m).unwrap();
        assert!(w.is_unitary(1e-12));
        let pos = w.adjoint().matmul(&m);
        assert!(pos.is_hermitian(1e-12));
        assert!(pos.is_psd(1e-12));
    }

    #[test]
    fn sigma_minus_lowers() {
        let e = vec![ONE, ZERO];
        assert_eq!(sigma_minus().apply(&e), vec![ZERO, ONE]);
    }

    fn hermitian_strategy() -> impl Strategy<Value = CMatrix> {
        (2usize..=4, any::<u64>()).prop_map(|(n, seed)| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            random_hermitian(&mut rng, n)
        })
    }

    proptest! {
        #[test]
        fn eigen_residual_bounded(m in hermitian_strategy()) {
            let tol = 1e-13;
            let e = eig_hermitian(&m, tol).unwrap();
            let lam = CMatrix::real_diag(&e.values);
            let residual = (&m.matmul(&e.vectors) - &e.vectors.matmul(&lam)).frobenius_norm();
            prop_assert!(residual <= 10.0 * tol * m.frobenius_norm().max(1e-300));
        }

        #[test]
        fn conjugation_preserves_spectrum(m in hermitian_strategy(), seed in any::<u64>()) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let u = eig_hermitian(&random_hermitian(&mut rng, m.dim()), 1e-14).unwrap().vectors;
            let before = eig_hermitian(&m, 1e-14).unwrap().values;
            let conj = conjugate(&u, &m).unwrap();
            prop_assert!((conj.trace() - m.trace()).norm() < 1e-12);
            prop_assert!(conj.hermiticity_residual() < 1e-12);
            let after = eig_hermitian(&conj.hermitian_part(), 1e-14).unwrap().values;
            for (x, y) in before.iter().zip(&after) {
                prop_assert!((x - y).abs() < 1e-10);
            }
        }

        #[test]
        fn eig_is_deterministic(m in hermitian_strategy()) {
            let a = eig_hermitian(&m, 1e-14).unwrap();
            let b = eig_hermitian(&m, 1e-14).unwrap();
            prop_assert_eq!(a.values, b.values);
            prop_assert_eq!(a.vectors, b.vectors);
        }
    }
}
