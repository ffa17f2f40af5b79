//! Dense linear algebra on the cone of positive-definite symmetric matrices.
//!
//! Everything here works with small dense matrices (rank up to about six).
//! The central pieces are the Cholesky factorization `y = t t*` and the two
//! maps it induces on symmetric matrices:
//!
//! ```text
//! pi(y)(x)     = t x t*
//! pi_inv(y)(x) = t^{-1} x (t*)^{-1}     ("x divided by y")
//! ```
//!
//! Positive definiteness is always decided by Cholesky pivots, never by
//! eigenvalues.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Relative asymmetry tolerated at construction before averaging.
pub const SYMMETRY_TOL: f64 = 1e-8;

const JACOBI_MAX_SWEEPS: usize = 100;

/// Square dense matrix, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    n: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(n: usize) -> Self {
        Self {
            n,
            data: vec![0.0; n * n],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n);
        for i in 0..n {
            m.data[i * n + i] = 1.0;
        }
        m
    }

    pub fn from_row_major(n: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != n * n {
            return Err(Error::Malformed(format!(
                "expected {} entries for a {n}x{n} matrix, got {}",
                n * n,
                data.len()
            )));
        }
        Ok(Self { n, data })
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.n + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.n + j] = v;
    }

    pub fn transpose(&self) -> Matrix {
        let n = self.n;
        let mut out = Matrix::zeros(n);
        for i in 0..n {
            for j in 0..n {
                out.data[j * n + i] = self.data[i * n + j];
            }
        }
        out
    }

    pub fn mul(&self, other: &Matrix) -> Matrix {
        let n = self.n;
        debug_assert_eq!(n, other.n);
        let mut out = Matrix::zeros(n);
        for i in 0..n {
            for k in 0..n {
                let a = self.data[i * n + k];
                if a == 0.0 {
                    continue;
                }
                for j in 0..n {
                    out.data[i * n + j] += a * other.data[k * n + j];
                }
            }
        }
        out
    }

    /// `self * x * self^T`, symmetrized.
    pub fn congruence(&self, x: &SymMatrix) -> Result<SymMatrix> {
        check_rank(self.n, x.rank())?;
        let prod = self.mul(&x.to_matrix()).mul(&self.transpose());
        Ok(SymMatrix::symmetrize(prod))
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }
}

/// Real symmetric matrix. Symmetry holds exactly.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<Vec<f64>>", into = "Vec<Vec<f64>>")]
pub struct SymMatrix {
    r: usize,
    data: Vec<f64>,
}

impl SymMatrix {
    /// Builds from row-major entries; asymmetry above [`SYMMETRY_TOL`]
    /// (relative to the largest entry) is rejected, smaller asymmetry is
    /// averaged away.
    pub fn new(rank: usize, data: Vec<f64>) -> Result<Self> {
        if rank == 0 {
            return Err(Error::Malformed("rank must be at least 1".into()));
        }
        let m = Matrix::from_row_major(rank, data)?;
        if m.data.iter().any(|v| !v.is_finite()) {
            return Err(Error::Malformed("non-finite entry".into()));
        }
        let scale = m.data.iter().fold(0.0_f64, |acc, v| acc.max(v.abs()));
        let mut worst = 0.0_f64;
        for i in 0..rank {
            for j in (i + 1)..rank {
                worst = worst.max((m.get(i, j) - m.get(j, i)).abs());
            }
        }
        let asymmetry = if scale > 0.0 { worst / scale } else { 0.0 };
        if asymmetry > SYMMETRY_TOL {
            return Err(Error::NotSymmetric { asymmetry });
        }
        Ok(Self::symmetrize(m))
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let r = rows.len();
        if rows.iter().any(|row| row.len() != r) {
            return Err(Error::Malformed("rows must form a square array".into()));
        }
        Self::new(r, rows.iter().flatten().copied().collect())
    }

    pub(crate) fn symmetrize(m: Matrix) -> Self {
        let n = m.n;
        let mut data = m.data;
        for i in 0..n {
            for j in (i + 1)..n {
                let avg = 0.5 * (data[i * n + j] + data[j * n + i]);
                data[i * n + j] = avg;
                data[j * n + i] = avg;
            }
        }
        Self { r: n, data }
    }

    pub fn identity(rank: usize) -> Self {
        Self::scaled_identity(rank, 1.0)
    }

    pub fn scaled_identity(rank: usize, c: f64) -> Self {
        let mut data = vec![0.0; rank * rank];
        for i in 0..rank {
            data[i * rank + i] = c;
        }
        Self { r: rank, data }
    }

    pub fn zeros(rank: usize) -> Self {
        Self::scaled_identity(rank, 0.0)
    }

    pub fn diag(values: &[f64]) -> Self {
        let r = values.len();
        let mut data = vec![0.0; r * r];
        for (i, v) in values.iter().enumerate() {
            data[i * r + i] = *v;
        }
        Self { r, data }
    }

    #[inline]
    pub fn rank(&self) -> usize {
        self.r
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.r + j]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn to_matrix(&self) -> Matrix {
        Matrix {
            n: self.r,
            data: self.data.clone(),
        }
    }

    pub fn rows(&self) -> Vec<Vec<f64>> {
        self.data.chunks(self.r).map(|c| c.to_vec()).collect()
    }

    /// Upper triangle, row-major: `m_11, m_12, ..., m_rr`.
    pub fn upper_triangle(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.r * (self.r + 1) / 2);
        for i in 0..self.r {
            for j in i..self.r {
                out.push(self.get(i, j));
            }
        }
        out
    }

    pub fn add(&self, other: &SymMatrix) -> Result<SymMatrix> {
        check_rank(self.r, other.r)?;
        let data = self
            .data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| a + b)
            .collect();
        Ok(Self { r: self.r, data })
    }

    pub fn sub(&self, other: &SymMatrix) -> Result<SymMatrix> {
        check_rank(self.r, other.r)?;
        let data = self
            .data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| a - b)
            .collect();
        Ok(Self { r: self.r, data })
    }

    pub fn scale(&self, c: f64) -> SymMatrix {
        Self {
            r: self.r,
            data: self.data.iter().map(|v| c * v).collect(),
        }
    }

    /// `e + self`.
    pub fn identity_plus(&self) -> SymMatrix {
        let mut out = self.clone();
        for i in 0..self.r {
            out.data[i * self.r + i] += 1.0;
        }
        out
    }

    /// `e - self`.
    pub fn identity_minus(&self) -> SymMatrix {
        let mut out = self.scale(-1.0);
        for i in 0..self.r {
            out.data[i * self.r + i] += 1.0;
        }
        out
    }

    pub fn trace(&self) -> f64 {
        (0..self.r).map(|i| self.get(i, i)).sum()
    }

    pub fn max_abs_diff(&self, other: &SymMatrix) -> f64 {
        self.data
            .iter()
            .zip(&other.data)
            .fold(0.0_f64, |acc, (a, b)| acc.max((a - b).abs()))
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0_f64, |acc, v| acc.max(v.abs()))
    }

    /// Determinant via the last principal minor.
    pub fn det(&self) -> f64 {
        principal_minors(self)[self.r - 1]
    }
}

impl TryFrom<Vec<Vec<f64>>> for SymMatrix {
    type Error = Error;

    fn try_from(rows: Vec<Vec<f64>>) -> Result<Self> {
        SymMatrix::from_rows(&rows)
    }
}

impl From<SymMatrix> for Vec<Vec<f64>> {
    fn from(m: SymMatrix) -> Self {
        m.rows()
    }
}

/// Lower-triangular matrix with strictly positive diagonal.
#[derive(Debug, Clone, PartialEq)]
pub struct LowerTriangular {
    m: Matrix,
}

impl LowerTriangular {
    #[inline]
    pub fn rank(&self) -> usize {
        self.m.n
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.m.get(i, j)
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.m.n).map(|i| self.m.get(i, i)).collect()
    }

    pub fn as_matrix(&self) -> &Matrix {
        &self.m
    }

    /// `t t*`.
    pub fn gram(&self) -> SymMatrix {
        SymMatrix::symmetrize(self.m.mul(&self.m.transpose()))
    }

    /// Builds from row-major data; entries above the diagonal must be zero and
    /// the diagonal strictly positive.
    pub fn from_row_major(n: usize, data: Vec<f64>) -> Result<Self> {
        let m = Matrix::from_row_major(n, data)?;
        for i in 0..n {
            if !(m.get(i, i) > 0.0) {
                return Err(Error::Malformed(format!(
                    "diagonal entry {i} is not positive"
                )));
            }
            for j in (i + 1)..n {
                if m.get(i, j) != 0.0 {
                    return Err(Error::Malformed(format!(
                        "entry ({i},{j}) above the diagonal"
                    )));
                }
            }
        }
        Ok(Self { m })
    }

    /// Solves `t z = b` for each column of `b`, returning `t^{-1} b`.
    fn solve_left(&self, b: &Matrix) -> Matrix {
        let n = self.m.n;
        let mut z = b.clone();
        for col in 0..n {
            for i in 0..n {
                let mut s = z.get(i, col);
                for k in 0..i {
                    s -= self.m.get(i, k) * z.get(k, col);
                }
                z.set(i, col, s / self.m.get(i, i));
            }
        }
        z
    }

    /// `t x t*`.
    pub fn apply(&self, x: &SymMatrix) -> Result<SymMatrix> {
        self.m.congruence(x)
    }

    /// `t^{-1} x (t*)^{-1}`.
    pub fn inv_apply(&self, x: &SymMatrix) -> Result<SymMatrix> {
        check_rank(self.m.n, x.rank())?;
        let a = self.solve_left(&x.to_matrix());
        let b = self.solve_left(&a.transpose());
        Ok(SymMatrix::symmetrize(b))
    }
}

fn check_rank(expected: usize, got: usize) -> Result<()> {
    if expected != got {
        Err(Error::RankMismatch { expected, got })
    } else {
        Ok(())
    }
}

/// Cholesky factorization `y = t t*` with strictly positive pivots.
pub fn cholesky(y: &SymMatrix) -> Result<LowerTriangular> {
    let n = y.rank();
    let mut t = Matrix::zeros(n);
    for j in 0..n {
        let mut d = y.get(j, j);
        for k in 0..j {
            d -= t.get(j, k) * t.get(j, k);
        }
        if !(d > 0.0) {
            return Err(Error::NotPositiveDefinite { pivot: j, value: d });
        }
        let djj = d.sqrt();
        t.set(j, j, djj);
        for i in (j + 1)..n {
            let mut s = y.get(i, j);
            for k in 0..j {
                s -= t.get(i, k) * t.get(j, k);
            }
            t.set(i, j, s / djj);
        }
    }
    Ok(LowerTriangular { m: t })
}

pub fn is_positive_definite(y: &SymMatrix) -> bool {
    cholesky(y).is_ok()
}

/// `pi(y)(x) = t x t*` where `y = t t*`.
pub fn pi_apply(y: &SymMatrix, x: &SymMatrix) -> Result<SymMatrix> {
    check_rank(y.rank(), x.rank())?;
    cholesky(y)?.apply(x)
}

/// `pi^{-1}(y)(x) = t^{-1} x (t*)^{-1}` where `y = t t*`.
pub fn pi_inv_apply(y: &SymMatrix, x: &SymMatrix) -> Result<SymMatrix> {
    check_rank(y.rank(), x.rank())?;
    cholesky(y)?.inv_apply(x)
}

/// `f(y)` through the spectral decomposition; `f` acts on eigenvalues.
pub fn spectral_map(y: &SymMatrix, f: impl Fn(f64) -> f64) -> Result<SymMatrix> {
    let (eigs, k) = symmetric_eigen(y)?;
    let mapped: Vec<f64> = eigs.into_iter().map(f).collect();
    from_spectrum(&k, &mapped)
}

/// `y^{1/2} x y^{1/2}` with the positive square root of `y`.
pub fn sqrt_apply(y: &SymMatrix, x: &SymMatrix) -> Result<SymMatrix> {
    check_rank(y.rank(), x.rank())?;
    cholesky(y)?;
    spectral_map(y, f64::sqrt)?.to_matrix().congruence(x)
}

/// `y^{-1/2} x y^{-1/2}`.
pub fn sqrt_inv_apply(y: &SymMatrix, x: &SymMatrix) -> Result<SymMatrix> {
    check_rank(y.rank(), x.rank())?;
    cholesky(y)?;
    spectral_map(y, |v| 1.0 / v.sqrt())?
        .to_matrix()
        .congruence(x)
}

/// Determinants of the leading `k x k` blocks, `k = 1..=r`.
pub fn principal_minors(x: &SymMatrix) -> Vec<f64> {
    let r = x.rank();
    (1..=r).map(|k| leading_block_det(x, k)).collect()
}

fn leading_block_det(x: &SymMatrix, k: usize) -> f64 {
    let mut a: Vec<f64> = (0..k)
        .flat_map(|i| (0..k).map(move |j| (i, j)))
        .map(|(i, j)| x.get(i, j))
        .collect();
    let mut det = 1.0;
    for col in 0..k {
        let (piv, pmax) =
            (col..k)
                .map(|row| (row, a[row * k + col].abs()))
                .fold(
                    (col, -1.0),
                    |best, cand| if cand.1 > best.1 { cand } else { best },
                );
        if pmax == 0.0 {
            return 0.0;
        }
        if piv != col {
            for j in 0..k {
                a.swap(piv * k + j, col * k + j);
            }
            det = -det;
        }
        let p = a[col * k + col];
        det *= p;
        for row in (col + 1)..k {
            let f = a[row * k + col] / p;
            if f != 0.0 {
                for j in col..k {
                    a[row * k + j] -= f * a[col * k + j];
                }
            }
        }
    }
    det
}

/// Generalized power `prod_k Delta_k(x)^{s_k - s_{k+1}}` with `s_{r+1} = 0`.
///
/// Computed from the Cholesky factor as `prod_k t_kk^{2 s_k}`.
pub fn gen_power(x: &SymMatrix, s: &[f64]) -> Result<f64> {
    Ok(log_gen_power(x, s)?.exp())
}

pub fn log_gen_power(x: &SymMatrix, s: &[f64]) -> Result<f64> {
    check_rank(x.rank(), s.len())?;
    let t = cholesky(x)?;
    Ok(t.diagonal()
        .iter()
        .zip(s)
        .map(|(d, sk)| 2.0 * sk * d.ln())
        .sum())
}

/// Log-determinant of a positive-definite matrix.
pub fn log_det(x: &SymMatrix) -> Result<f64> {
    let t = cholesky(x)?;
    Ok(t.diagonal().iter().map(|d| 2.0 * d.ln()).sum())
}

/// Eigen-decomposition by cyclic Jacobi rotations: eigenvalues in
/// nonincreasing order and the matching orthonormal eigenvectors (columns).
pub fn symmetric_eigen(x: &SymMatrix) -> Result<(Vec<f64>, Matrix)> {
    let n = x.rank();
    let mut a = x.to_matrix();
    let mut v = Matrix::identity(n);
    let norm = x.max_abs();
    if norm == 0.0 || n == 1 {
        return Ok(((0..n).map(|i| a.get(i, i)).collect(), v));
    }
    let mut converged = false;
    for _sweep in 0..JACOBI_MAX_SWEEPS {
        let off: f64 = (0..n)
            .flat_map(|i| ((i + 1)..n).map(move |j| (i, j)))
            .map(|(i, j)| a.get(i, j) * a.get(i, j))
            .sum();
        if off.sqrt() <= 1e-300 || off.sqrt() <= f64::EPSILON * 1e-2 * norm {
            converged = true;
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = a.get(p, q);
                if apq == 0.0 {
                    continue;
                }
                let theta = (a.get(q, q) - a.get(p, p)) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let akp = a.get(k, p);
                    let akq = a.get(k, q);
                    a.set(k, p, c * akp - s * akq);
                    a.set(k, q, s * akp + c * akq);
                }
                for k in 0..n {
                    let apk = a.get(p, k);
                    let aqk = a.get(q, k);
                    a.set(p, k, c * apk - s * aqk);
                    a.set(q, k, s * apk + c * aqk);
                }
                for k in 0..n {
                    let vkp = v.get(k, p);
                    let vkq = v.get(k, q);
                    v.set(k, p, c * vkp - s * vkq);
                    v.set(k, q, s * vkp + c * vkq);
                }
            }
        }
    }
    if !converged {
        return Err(Error::ConvergenceFailure {
            iterations: JACOBI_MAX_SWEEPS,
        });
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| a.get(j, j).total_cmp(&a.get(i, i)));
    let values = order.iter().map(|&i| a.get(i, i)).collect();
    let mut vecs = Matrix::zeros(n);
    for (col, &src) in order.iter().enumerate() {
        for k in 0..n {
            vecs.set(k, col, v.get(k, src));
        }
    }
    Ok((values, vecs))
}

/// Eigenvalues in nonincreasing order.
pub fn eigenvalues(x: &SymMatrix) -> Result<Vec<f64>> {
    symmetric_eigen(x).map(|(vals, _)| vals)
}

pub fn spectral_radius(x: &SymMatrix) -> Result<f64> {
    Ok(eigenvalues(x)?
        .iter()
        .fold(0.0_f64, |acc, v| acc.max(v.abs())))
}

/// True iff both `x` and `e - x` are positive definite.
pub fn in_unit_interval(x: &SymMatrix) -> bool {
    is_positive_definite(x) && is_positive_definite(&x.identity_minus())
}

/// Haar-distributed orthogonal matrix: QR of a Gaussian matrix with the
/// diagonal of R made positive.
pub fn random_orthogonal<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Matrix {
    loop {
        let mut cols: Vec<Vec<f64>> = (0..n)
            .map(|_| {
                (0..n)
                    .map(|_| rng.sample::<f64, _>(StandardNormal))
                    .collect()
            })
            .collect();
        let mut ok = true;
        for j in 0..n {
            for i in 0..j {
                let dot: f64 = cols[i].iter().zip(&cols[j]).map(|(a, b)| a * b).sum();
                let (head, tail) = cols.split_at_mut(j);
                for (x, qi) in tail[0].iter_mut().zip(&head[i]) {
                    *x -= dot * qi;
                }
            }
            let norm = cols[j].iter().map(|v| v * v).sum::<f64>().sqrt();
            if norm < 1e-12 {
                ok = false;
                break;
            }
            cols[j].iter_mut().for_each(|v| *v /= norm);
        }
        if ok {
            let mut q = Matrix::zeros(n);
            for (j, col) in cols.iter().enumerate() {
                for (i, v) in col.iter().enumerate() {
                    q.set(i, j, *v);
                }
            }
            return q;
        }
    }
}

/// `k diag(eigs) k*` for an orthogonal `k`.
pub fn from_spectrum(k: &Matrix, eigs: &[f64]) -> Result<SymMatrix> {
    k.congruence(&SymMatrix::diag(eigs))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn random_spd(r: usize, rng: &mut ChaCha8Rng) -> SymMatrix {
        let k = random_orthogonal(r, rng);
        let eigs: Vec<f64> = (0..r).map(|_| rng.random_range(0.2..3.0)).collect();
        from_spectrum(&k, &eigs).unwrap()
    }

    fn random_sym(r: usize, rng: &mut ChaCha8Rng) -> SymMatrix {
        let mut data = vec![0.0; r * r];
        for i in 0..r {
            for j in i..r {
                let v: f64 = rng.random_range(-1.0..1.0);
                data[i * r + j] = v;
                data[j * r + i] = v;
            }
        }
        SymMatrix::new(r, data).unwrap()
    }

    #[test]
    fn cholesky_examples() {
        let t = cholesky(&SymMatrix::identity(3)).unwrap();
        assert_eq!(t.gram(), SymMatrix::identity(3));
        assert_eq!(t.diagonal(), vec![1.0, 1.0, 1.0]);

        let t = cholesky(&SymMatrix::diag(&[4.0, 9.0])).unwrap();
        assert_eq!(t.diagonal(), vec![2.0, 3.0]);
        assert_eq!(t.get(1, 0), 0.0);

        let y = SymMatrix::from_rows(&[vec![2.0, 1.0], vec![1.0, 2.0]]).unwrap();
        let t = cholesky(&y).unwrap();
        let back = t.gram();
        for i in 0..2 {
            for j in 0..2 {
                assert!((back.get(i, j) - y.get(i, j)).abs() <= 1e-12 * y.get(i, j).abs().max(1.0));
            }
        }
        assert!(t.diagonal().iter().all(|d| *d > 0.0));
    }

    #[test]
    fn cholesky_reports_failing_pivot() {
        let y = SymMatrix::from_rows(&[vec![1.0, 2.0], vec![2.0, 1.0]]).unwrap();
        match cholesky(&y) {
            Err(Error::NotPositiveDefinite { pivot, .. }) => assert_eq!(pivot, 1),
            other => panic!("unexpected {other:?}"),
        }
        let y = SymMatrix::diag(&[0.0, 1.0]);
        assert!(matches!(
            cholesky(&y),
            Err(Error::NotPositiveDefinite { pivot: 0, .. })
        ));
    }

    #[test]
    fn symmetry_enforced() {
        assert!(matches!(
            SymMatrix::new(2, vec![1.0, 0.5, 0.4, 1.0]),
            Err(Error::NotSymmetric { .. })
        ));
        let m = SymMatrix::new(2, vec![1.0, 0.5, 0.5 + 1e-12, 1.0]).unwrap();
        assert_eq!(m.get(0, 1), m.get(1, 0));
    }

    #[test]
    fn pi_examples() {
        let x = SymMatrix::from_rows(&[vec![1.0, 1.0], vec![1.0, 1.0]]).unwrap();
        let e = SymMatrix::identity(2);
        assert_eq!(pi_apply(&e, &x).unwrap(), x);
        let y = SymMatrix::diag(&[4.0, 9.0]);
        assert_eq!(pi_apply(&y, &e).unwrap(), y);
        let got = pi_apply(&y, &x).unwrap();
        let want = SymMatrix::from_rows(&[vec![4.0, 6.0], vec![6.0, 9.0]]).unwrap();
        assert!(got.max_abs_diff(&want) < 1e-14);

        let id = pi_inv_apply(&y, &y).unwrap();
        assert!(id.max_abs_diff(&e) < 1e-14);
        assert_eq!(pi_inv_apply(&e, &x).unwrap(), x);
    }

    #[test]
    fn pi_round_trip_rank4() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..200 {
            let y = random_spd(4, &mut rng);
            let x = random_sym(4, &mut rng);
            let back = pi_inv_apply(&y, &pi_apply(&y, &x).unwrap()).unwrap();
            assert!(back.max_abs_diff(&x) <= 1e-10);
            let fwd = pi_apply(&y, &pi_inv_apply(&y, &x).unwrap()).unwrap();
            assert!(fwd.max_abs_diff(&x) <= 1e-10);
        }
    }

    #[test]
    fn rank_mismatch() {
        let e2 = SymMatrix::identity(2);
        let e3 = SymMatrix::identity(3);
        assert!(matches!(
            pi_apply(&e2, &e3),
            Err(Error::RankMismatch {
                expected: 2,
                got: 3
            })
        ));
    }

    #[test]
    fn minors_examples() {
        assert_eq!(
            principal_minors(&SymMatrix::identity(3)),
            vec![1.0, 1.0, 1.0]
        );
        assert_eq!(
            principal_minors(&SymMatrix::diag(&[2.0, 3.0])),
            vec![2.0, 6.0]
        );
        let x = SymMatrix::from_rows(&[vec![2.0, 1.0], vec![1.0, 2.0]]).unwrap();
        let m = principal_minors(&x);
        assert!((m[0] - 2.0).abs() < 1e-15 && (m[1] - 3.0).abs() < 1e-14);
        // indefinite input still yields signed minors
        let x = SymMatrix::from_rows(&[vec![1.0, 2.0], vec![2.0, 1.0]]).unwrap();
        assert!((principal_minors(&x)[1] + 3.0).abs() < 1e-14);
    }

    #[test]
    fn gen_power_examples() {
        assert!(
            (gen_power(&SymMatrix::identity(3), &[2.5, -1.0, 0.3]).unwrap() - 1.0).abs() < 1e-15
        );
        let (d1, d2, s1, s2) = (1.7_f64, 0.4_f64, 1.3_f64, -0.6_f64);
        let got = gen_power(&SymMatrix::diag(&[d1, d2]), &[s1, s2]).unwrap();
        let want = d1.powf(s1 - s2) * (d1 * d2).powf(s2);
        assert!((got / want - 1.0).abs() < 1e-13);

        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for r in 1..=5 {
            let x = random_spd(r, &mut rng);
            let p = 1.7;
            let got = gen_power(&x, &vec![p; r]).unwrap();
            assert!((got / x.det().powf(p) - 1.0).abs() < 1e-11);
        }
        let bad = SymMatrix::diag(&[1.0, -1.0]);
        assert!(matches!(
            gen_power(&bad, &[1.0, 1.0]),
            Err(Error::NotPositiveDefinite { .. })
        ));
    }

    #[test]
    fn eigen_examples() {
        assert_eq!(
            eigenvalues(&SymMatrix::diag(&[3.0, 1.0, 2.0])).unwrap(),
            vec![3.0, 2.0, 1.0]
        );
        assert_eq!(eigenvalues(&SymMatrix::identity(4)).unwrap(), vec![1.0; 4]);
        let x = SymMatrix::from_rows(&[vec![2.0, 1.0], vec![1.0, 2.0]]).unwrap();
        let ev = eigenvalues(&x).unwrap();
        assert!((ev[0] - 3.0).abs() < 1e-14 && (ev[1] - 1.0).abs() < 1e-14);
    }

    #[test]
    fn eigen_reconstruction() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for r in 1..=6 {
            for _ in 0..50 {
                let x = random_sym(r, &mut rng);
                let (vals, q) = symmetric_eigen(&x).unwrap();
                assert!(vals.windows(2).all(|w| w[0] >= w[1]));
                let back = from_spectrum(&q, &vals).unwrap();
                assert!(back.max_abs_diff(&x) <= 1e-10 * x.max_abs().max(1e-300));
            }
        }
    }

    #[test]
    fn unit_interval_examples() {
        assert!(in_unit_interval(&SymMatrix::scaled_identity(3, 0.5)));
        assert!(!in_unit_interval(&SymMatrix::identity(3)));
        assert!(!in_unit_interval(&SymMatrix::diag(&[0.5, 1.2])));
    }

    #[test]
    fn multiplicativity_under_triangular_group() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for trial in 0..1000 {
            let r = 1 + trial % 5;
            let y = random_spd(r, &mut rng);
            let x = random_spd(r, &mut rng);
            let s: Vec<f64> = (0..r).map(|_| rng.random_range(-2.0..2.0)).collect();
            let lhs = gen_power(&pi_apply(&y, &x).unwrap(), &s).unwrap();
            let rhs = gen_power(&y, &s).unwrap() * gen_power(&x, &s).unwrap();
            assert!(
                (lhs / rhs - 1.0).abs() <= 1e-9,
                "trial {trial}: {lhs} vs {rhs}"
            );
        }
    }

    #[test]
    fn beta_map_lands_in_unit_interval() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for r in 1..=5 {
            for _ in 0..100 {
                let y = random_spd(r, &mut rng);
                let z = pi_inv_apply(&y.identity_plus(), &y).unwrap();
                assert!(in_unit_interval(&z));
            }
        }
    }

    #[test]
    fn orthogonal_invariance() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        for r in 1..=5 {
            let x = random_spd(r, &mut rng);
            let k = random_orthogonal(r, &mut rng);
            let kt = k.mul(&k.transpose());
            assert!((0..r)
                .all(|i| (0..r)
                    .all(|j| (kt.get(i, j) - if i == j { 1.0 } else { 0.0 }).abs() < 1e-12)));
            let y = k.congruence(&x).unwrap();
            let p = 0.8;
            let a = gen_power(&x, &vec![p; r]).unwrap();
            let b = gen_power(&y, &vec![p; r]).unwrap();
            assert!((a / b - 1.0).abs() < 1e-10);
            assert!((x.det() / y.det() - 1.0).abs() < 1e-10);
            let ex = eigenvalues(&x).unwrap();
            let ey = eigenvalues(&y).unwrap();
            assert!(ex
                .iter()
                .zip(&ey)
                .all(|(u, v)| (u - v).abs() < 1e-10 * u.abs().max(1.0)));
        }
    }
}
