//! Dense linear algebra and seeded randomness.
//!
//! Everything is `f64`. Matrices are row-major and small enough (a few
//! thousand rows at most) that straightforward triple loops are adequate.

use std::fmt;
use std::ops::{Index, IndexMut};

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Dense row-major matrix.
#[derive(Clone, PartialEq, Serialize, Deserialize)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl fmt::Debug for Matrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "Matrix {}x{}", self.rows, self.cols)?;
        for r in 0..self.rows.min(8) {
            writeln!(f, "  {:?}", &self.row(r)[..self.cols.min(8)])?;
        }
        Ok(())
    }
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self { rows, cols, data: vec![0.0; rows * cols] }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = 1.0;
        }
        m
    }

    pub fn from_diag(diag: &[f64]) -> Self {
        let mut m = Self::zeros(diag.len(), diag.len());
        for (i, &d) in diag.iter().enumerate() {
            m[(i, i)] = d;
        }
        m
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if rows * cols != data.len() {
            return Err(Error::DimensionMismatch {
                context: "Matrix::from_vec",
                expected: rows * cols,
                got: data.len(),
            });
        }
        Ok(Self { rows, cols, data })
    }

    /// Builds a matrix from nested rows; panics on ragged input.
    pub fn from_rows(rows: &[Vec<f64>]) -> Self {
        let r = rows.len();
        let c = rows.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(r * c);
        for row in rows {
            assert_eq!(row.len(), c, "ragged rows");
            data.extend_from_slice(row);
        }
        Self { rows: r, cols: c, data }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn is_square(&self) -> bool {
        self.rows == self.cols
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn row_mut(&mut self, r: usize) -> &mut [f64] {
        &mut self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn column(&self, c: usize) -> Vec<f64> {
        (0..self.rows).map(|r| self[(r, c)]).collect()
    }

    pub fn transpose(&self) -> Matrix {
        let mut t = Matrix::zeros(self.cols, self.rows);
        for r in 0..self.rows {
            for c in 0..self.cols {
                t[(c, r)] = self[(r, c)];
            }
        }
        t
    }

    pub fn matmul(&self, other: &Matrix) -> Result<Matrix> {
        if self.cols != other.rows {
            return Err(Error::DimensionMismatch {
                context: "Matrix::matmul",
                expected: self.cols,
                got: other.rows,
            });
        }
        let mut out = Matrix::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            let out_row = &mut out.data[i * other.cols..(i + 1) * other.cols];
            for k in 0..self.cols {
                let a = self.data[i * self.cols + k];
                if a == 0.0 {
                    continue;
                }
                let other_row = &other.data[k * other.cols..(k + 1) * other.cols];
                for (o, &b) in out_row.iter_mut().zip(other_row) {
                    *o += a * b;
                }
            }
        }
        Ok(out)
    }

    pub fn matvec(&self, v: &[f64]) -> Result<Vec<f64>> {
        if v.len() != self.cols {
            return Err(Error::DimensionMismatch {
                context: "Matrix::matvec",
                expected: self.cols,
                got: v.len(),
            });
        }
        Ok((0..self.rows).map(|r| dot(self.row(r), v)).collect())
    }

    /// `self += alpha * u uᵀ`, lower and upper triangles both updated.
    pub fn add_outer(&mut self, alpha: f64, u: &[f64]) {
        debug_assert!(self.is_square() && u.len() == self.rows);
        let n = self.cols;
        for (i, &ui) in u.iter().enumerate() {
            let s = alpha * ui;
            if s == 0.0 {
                continue;
            }
            let row = &mut self.data[i * n..(i + 1) * n];
            for (r, &uj) in row.iter_mut().zip(u) {
                *r += s * uj;
            }
        }
    }

    /// Largest absolute entry.
    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn max_abs_diff(&self, other: &Matrix) -> f64 {
        self.data
            .iter()
            .zip(&other.data)
            .fold(0.0, |m, (a, b)| m.max((a - b).abs()))
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    fn mean_diagonal(&self) -> f64 {
        let n = self.rows.min(self.cols);
        if n == 0 {
            return 0.0;
        }
        (0..n).map(|i| self[(i, i)]).sum::<f64>() / n as f64
    }
}

impl Index<(usize, usize)> for Matrix {
    type Output = f64;

    #[inline]
    fn index(&self, (r, c): (usize, usize)) -> &f64 {
        &self.data[r * self.cols + c]
    }
}

impl IndexMut<(usize, usize)> for Matrix {
    #[inline]
    fn index_mut(&mut self, (r, c): (usize, usize)) -> &mut f64 {
        &mut self.data[r * self.cols + c]
    }
}

#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm2(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Jitter multipliers (relative to the mean diagonal) tried in order.
pub const JITTER_LADDER: [f64; 4] = [0.0, 1e-10, 1e-8, 1e-6];

/// Relative tolerance for the symmetry check in [`cholesky`].
pub const SYMMETRY_TOL: f64 = 1e-10;

/// Lower-triangular factor `L` with `L Lᵀ = A + jitter·I`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CholeskyFactor {
    l: Matrix,
    jitter: f64,
}

impl CholeskyFactor {
    /// Wraps an existing lower-triangular factor. The diagonal must be positive.
    pub fn from_lower(l: Matrix) -> Result<Self> {
        if !l.is_square() {
            return Err(Error::DimensionMismatch {
                context: "CholeskyFactor::from_lower",
                expected: l.rows(),
                got: l.cols(),
            });
        }
        for i in 0..l.rows() {
            if !(l[(i, i)] > 0.0) {
                return Err(Error::NotPositiveDefinite { dim: l.rows() });
            }
        }
        Ok(Self { l, jitter: 0.0 })
    }

    pub fn lower(&self) -> &Matrix {
        &self.l
    }

    /// Records the jitter a stored factor was computed with.
    pub fn with_jitter(mut self, jitter: f64) -> Self {
        self.jitter = jitter;
        self
    }

    /// Absolute jitter that was added to the diagonal before factorising.
    pub fn jitter(&self) -> f64 {
        self.jitter
    }

    pub fn dim(&self) -> usize {
        self.l.rows()
    }

    /// `L Lᵀ`.
    pub fn reconstruct(&self) -> Matrix {
        let n = self.dim();
        let mut a = Matrix::zeros(n, n);
        for i in 0..n {
            for j in 0..=i {
                let k = j + 1;
                let v = dot(&self.l.row(i)[..k], &self.l.row(j)[..k]);
                a[(i, j)] = v;
                a[(j, i)] = v;
            }
        }
        a
    }

    /// Solves `L x = b`.
    pub fn solve_lower(&self, b: &[f64]) -> Result<Vec<f64>> {
        self.check_len(b.len())?;
        let n = self.dim();
        let mut x = b.to_vec();
        for i in 0..n {
            let row = self.l.row(i);
            let s = dot(&row[..i], &x[..i]);
            x[i] = (x[i] - s) / row[i];
        }
        Ok(x)
    }

    /// Solves `Lᵀ x = b`.
    pub fn solve_upper(&self, b: &[f64]) -> Result<Vec<f64>> {
        self.check_len(b.len())?;
        let n = self.dim();
        let mut x = b.to_vec();
        for i in (0..n).rev() {
            x[i] /= self.l[(i, i)];
            let xi = x[i];
            let row = self.l.row(i);
            for (xj, &lij) in x[..i].iter_mut().zip(&row[..i]) {
                *xj -= lij * xi;
            }
        }
        Ok(x)
    }

    /// `log det(L Lᵀ)`.
    pub fn log_det(&self) -> f64 {
        2.0 * (0..self.dim()).map(|i| self.l[(i, i)].ln()).sum::<f64>()
    }

    /// Dense inverse `(L Lᵀ)⁻¹`; used only by tests and small problems.
    pub fn inverse(&self) -> Matrix {
        let n = self.dim();
        let mut inv = Matrix::zeros(n, n);
        let mut e = vec![0.0; n];
        for c in 0..n {
            e.iter_mut().for_each(|v| *v = 0.0);
            e[c] = 1.0;
            let col = solve_cholesky(self, &e).expect("dimension checked");
            for r in 0..n {
                inv[(r, c)] = col[r];
            }
        }
        inv
    }

    fn check_len(&self, len: usize) -> Result<()> {
        if len != self.dim() {
            return Err(Error::DimensionMismatch {
                context: "CholeskyFactor solve",
                expected: self.dim(),
                got: len,
            });
        }
        Ok(())
    }
}

fn try_factor(a: &Matrix, shift: f64) -> Option<Matrix> {
    let n = a.rows();
    let mut l = Matrix::zeros(n, n);
    for j in 0..n {
        let lj = l.row(j)[..j].to_vec();
        let d = a[(j, j)] + shift - dot(&lj, &lj);
        if !(d > 0.0) || !d.is_finite() {
            return None;
        }
        let djj = d.sqrt();
        l[(j, j)] = djj;
        for i in j + 1..n {
            let s = dot(&l.row(i)[..j], &lj);
            l[(i, j)] = (a[(i, j)] - s) / djj;
        }
    }
    Some(l)
}

/// Cholesky factorisation with an escalating diagonal jitter.
///
/// Tries each multiplier of [`JITTER_LADDER`] (scaled by the mean diagonal)
/// and returns the first factor that succeeds.
pub fn cholesky(a: &Matrix) -> Result<CholeskyFactor> {
    if !a.is_square() {
        return Err(Error::DimensionMismatch {
            context: "cholesky",
            expected: a.rows(),
            got: a.cols(),
        });
    }
    let n = a.rows();
    let scale = a.max_abs();
    for i in 0..n {
        for j in 0..i {
            if (a[(i, j)] - a[(j, i)]).abs() > SYMMETRY_TOL * scale {
                return Err(Error::NotSymmetric { row: i, col: j });
            }
        }
    }
    let mean_diag = a.mean_diagonal().abs();
    for &rel in &JITTER_LADDER {
        let shift = rel * mean_diag;
        if let Some(l) = try_factor(a, shift) {
            if shift > 0.0 {
                log::debug!("cholesky: factorised {n}x{n} with jitter {shift:.3e}");
            }
            return Ok(CholeskyFactor { l, jitter: shift });
        }
    }
    Err(Error::NotPositiveDefinite { dim: n })
}

/// Solves `(L Lᵀ) x = b`.
pub fn solve_cholesky(factor: &CholeskyFactor, b: &[f64]) -> Result<Vec<f64>> {
    let y = factor.solve_lower(b)?;
    factor.solve_upper(&y)
}

/// Maximum number of cyclic Jacobi sweeps before giving up.
const JACOBI_MAX_SWEEPS: usize = 100;

/// All eigenvalues of a symmetric matrix, ascending, by cyclic Jacobi rotations.
pub fn symmetric_eigenvalues(a: &Matrix) -> Result<Vec<f64>> {
    if !a.is_square() {
        return Err(Error::DimensionMismatch {
            context: "symmetric_eigenvalues",
            expected: a.rows(),
            got: a.cols(),
        });
    }
    let n = a.rows();
    let mut m = a.clone();
    // symmetrise to kill rounding asymmetry
    for i in 0..n {
        for j in 0..i {
            let s = 0.5 * (m[(i, j)] + m[(j, i)]);
            m[(i, j)] = s;
            m[(j, i)] = s;
        }
    }
    let scale = m.max_abs();
    if scale == 0.0 {
        return Ok(vec![0.0; n]);
    }
    let mut converged = n < 2;
    for _ in 0..JACOBI_MAX_SWEEPS {
        let off: f64 = (0..n)
            .flat_map(|i| (0..i).map(move |j| (i, j)))
            .map(|(i, j)| m[(i, j)] * m[(i, j)])
            .sum();
        if off.sqrt() <= 1e-15 * scale {
            converged = true;
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                let apq = m[(p, q)];
                if apq.abs() <= f64::MIN_POSITIVE {
                    continue;
                }
                let theta = (m[(q, q)] - m[(p, p)]) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let akp = m[(k, p)];
                    let akq = m[(k, q)];
                    m[(k, p)] = c * akp - s * akq;
                    m[(k, q)] = s * akp + c * akq;
                }
                for k in 0..n {
                    let apk = m[(p, k)];
                    let aqk = m[(q, k)];
                    m[(p, k)] = c * apk - s * aqk;
                    m[(q, k)] = s * apk + c * aqk;
                }
            }
        }
    }
    if !converged {
        return Err(Error::NonConvergence { what: "jacobi eigenvalue sweep", iterations: JACOBI_MAX_SWEEPS });
    }
    let mut eig: Vec<f64> = (0..n).map(|i| m[(i, i)]).collect();
    eig.sort_by(f64::total_cmp);
    Ok(eig)
}

/// Smallest eigenvalue of a symmetric matrix (full Jacobi eigensolve).
pub fn min_eigenvalue_symmetric(a: &Matrix) -> Result<f64> {
    Ok(symmetric_eigenvalues(a)?.first().copied().unwrap_or(0.0))
}

/// Seeded pseudo-random stream.
///
/// Backed by ChaCha8 (counter-based), so a seed gives the same draws on every
/// platform. Normals come from `rand_distr`'s ziggurat sampler.
#[derive(Clone, Debug)]
pub struct RngStream {
    seed: u64,
    inner: ChaCha8Rng,
}

impl RngStream {
    pub const ALGORITHM: &'static str = "chacha8";

    pub fn new(seed: u64) -> Self {
        Self { seed, inner: ChaCha8Rng::seed_from_u64(seed) }
    }

    /// Independent stream `id` under the same seed (ChaCha stream selector).
    pub fn substream(seed: u64, id: u64) -> Self {
        let mut inner = ChaCha8Rng::seed_from_u64(seed);
        inner.set_stream(id);
        Self { seed, inner }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    #[inline]
    pub fn normal(&mut self) -> f64 {
        StandardNormal.sample(&mut self.inner)
    }

    pub fn fill_normal(&mut self, out: &mut [f64]) {
        for v in out {
            *v = StandardNormal.sample(&mut self.inner);
        }
    }

    pub fn normal_vec(&mut self, n: usize) -> Vec<f64> {
        (0..n).map(|_| self.normal()).collect()
    }

    /// Uniform in `[0, 1)`.
    #[inline]
    pub fn uniform(&mut self) -> f64 {
        rand::Rng::random::<f64>(&mut self.inner)
    }

    /// Uniform in `[lo, hi]`.
    pub fn uniform_range(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.uniform()
    }

    /// Uniform integer in `[lo, hi]` inclusive.
    pub fn int_inclusive(&mut self, lo: usize, hi: usize) -> usize {
        rand::Rng::random_range(&mut self.inner, lo..=hi)
    }

    /// Uniform index in `[0, n)`.
    pub fn index(&mut self, n: usize) -> usize {
        rand::Rng::random_range(&mut self.inner, 0..n)
    }

    /// Fisher-Yates permutation of `0..n`.
    pub fn permutation(&mut self, n: usize) -> Vec<usize> {
        let mut p: Vec<usize> = (0..n).collect();
        for i in (1..n).rev() {
            let j = rand::Rng::random_range(&mut self.inner, 0..=i);
            p.swap(i, j);
        }
        p
    }
}

impl RngCore for RngStream {
    fn next_u32(&mut self) -> u32 {
        self.inner.next_u32()
    }

    fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    fn fill_bytes(&mut self, dst: &mut [u8]) {
        self.inner.fill_bytes(dst)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn random_spd(n: usize, seed: u64) -> Matrix {
        let mut rng = RngStream::new(seed);
        let b = Matrix::from_vec(n, n, rng.normal_vec(n * n)).unwrap();
        let mut a = b.transpose().matmul(&b).unwrap();
        for i in 0..n {
            a[(i, i)] += 1.0;
        }
        a
    }

    /// Gaussian elimination with partial pivoting, kept independent of the
    /// Cholesky path.
    fn gauss_solve(a: &Matrix, b: &[f64]) -> Vec<f64> {
        let n = a.rows();
        let mut m: Vec<Vec<f64>> = (0..n)
            .map(|i| {
                let mut r = a.row(i).to_vec();
                r.push(b[i]);
                r
            })
            .collect();
        for col in 0..n {
            let piv = (col..n)
                .max_by(|&i, &j| m[i][col].abs().total_cmp(&m[j][col].abs()))
                .unwrap();
            m.swap(col, piv);
            for r in col + 1..n {
                let f = m[r][col] / m[col][col];
                for c in col..=n {
                    m[r][c] -= f * m[col][c];
                }
            }
        }
        let mut x = vec![0.0; n];
        for i in (0..n).rev() {
            let s: f64 = (i + 1..n).map(|j| m[i][j] * x[j]).sum();
            x[i] = (m[i][n] - s) / m[i][i];
        }
        x
    }

    #[test]
    fn identity_factor_is_identity() {
        let f = cholesky(&Matrix::identity(3)).unwrap();
        assert_eq!(f.lower(), &Matrix::identity(3));
        assert_eq!(f.jitter(), 0.0);
    }

    #[test]
    fn two_by_two_by_hand() {
        let a = Matrix::from_rows(&[vec![4.0, 2.0], vec![2.0, 3.0]]);
        let f = cholesky(&a).unwrap();
        let l = f.lower();
        assert!((l[(0, 0)] - 2.0).abs() < 1e-15);
        assert_eq!(l[(0, 1)], 0.0);
        assert!((l[(1, 0)] - 1.0).abs() < 1e-15);
        assert!((l[(1, 1)] - 2f64.sqrt()).abs() < 1e-15);
        let x = solve_cholesky(&f, &[1.0, 0.0]).unwrap();
        assert!((x[0] - 0.375).abs() < 1e-15);
        assert!((x[1] + 0.25).abs() < 1e-15);
    }

    #[test]
    fn identity_solve_returns_rhs() {
        let f = cholesky(&Matrix::identity(4)).unwrap();
        let b = [1.5, -2.0, 0.25, 7.0];
        assert_eq!(solve_cholesky(&f, &b).unwrap(), b.to_vec());
    }

    #[test]
    fn reconstruct_random_spd() {
        for seed in 0..5 {
            let a = random_spd(12, seed);
            let f = cholesky(&a).unwrap();
            assert!(f.reconstruct().max_abs_diff(&a) < 1e-10);
        }
    }

    #[test]
    fn solve_matches_elimination_oracle() {
        for (seed, n) in [(1, 5), (2, 40), (3, 120)] {
            let a = random_spd(n, seed);
            let b = RngStream::new(seed + 100).normal_vec(n);
            let f = cholesky(&a).unwrap();
            let x = solve_cholesky(&f, &b).unwrap();
            let oracle = gauss_solve(&a, &b);
            let err: f64 = x.iter().zip(&oracle).map(|(p, q)| (p - q).powi(2)).sum::<f64>().sqrt();
            assert!(err / norm2(&oracle) < 1e-8, "n={n} rel err {err}");
            let resid: Vec<f64> = a.matvec(&x).unwrap().iter().zip(&b).map(|(p, q)| p - q).collect();
            assert!(norm2(&resid) <= 1e-8 * norm2(&b));
        }
    }

    #[test]
    fn solve_large_system() {
        let n = 500;
        let a = random_spd(n, 77);
        let b = RngStream::new(78).normal_vec(n);
        let f = cholesky(&a).unwrap();
        let x = solve_cholesky(&f, &b).unwrap();
        let oracle = gauss_solve(&a, &b);
        let err: f64 = x.iter().zip(&oracle).map(|(p, q)| (p - q).powi(2)).sum::<f64>().sqrt();
        assert!(err / norm2(&oracle) < 1e-8);
    }

    #[test]
    fn jitter_rescues_semidefinite() {
        // rank-one PSD matrix: exact factorisation fails, jitter succeeds
        let mut a = Matrix::zeros(3, 3);
        a.add_outer(1.0, &[1.0, 2.0, 3.0]);
        let f = cholesky(&a).unwrap();
        assert!(f.jitter() > 0.0);
        assert!(f.jitter() <= 1e-6 * 14.0 / 3.0 + 1e-18);
    }

    #[test]
    fn indefinite_is_rejected() {
        let a = Matrix::from_diag(&[1.0, -1.0]);
        assert!(matches!(cholesky(&a), Err(Error::NotPositiveDefinite { dim: 2 })));
    }

    #[test]
    fn asymmetric_is_rejected() {
        let a = Matrix::from_rows(&[vec![2.0, 1.0], vec![0.0, 2.0]]);
        assert!(matches!(cholesky(&a), Err(Error::NotSymmetric { .. })));
    }

    #[test]
    fn dimension_mismatch_on_solve() {
        let f = cholesky(&Matrix::identity(2)).unwrap();
        assert!(matches!(solve_cholesky(&f, &[1.0]), Err(Error::DimensionMismatch { .. })));
    }

    #[test]
    fn eigenvalue_examples() {
        assert!((min_eigenvalue_symmetric(&Matrix::identity(4)).unwrap() - 1.0).abs() < 1e-12);
        assert!((min_eigenvalue_symmetric(&Matrix::from_diag(&[3.0, -2.0])).unwrap() + 2.0).abs() < 1e-12);
        let mut rng = RngStream::new(9);
        let mut a = Matrix::zeros(6, 6);
        for _ in 0..3 {
            a.add_outer(1.0, &rng.normal_vec(6));
        }
        assert!(min_eigenvalue_symmetric(&a).unwrap() >= -1e-10);
    }

    #[test]
    fn eigenvalues_of_known_matrix() {
        // [[2,1],[1,2]] has eigenvalues 1 and 3
        let a = Matrix::from_rows(&[vec![2.0, 1.0], vec![1.0, 2.0]]);
        let e = symmetric_eigenvalues(&a).unwrap();
        assert!((e[0] - 1.0).abs() < 1e-12 && (e[1] - 3.0).abs() < 1e-12);
    }

    #[test]
    fn eigen_sum_matches_trace() {
        let a = random_spd(10, 4);
        let e = symmetric_eigenvalues(&a).unwrap();
        let tr: f64 = (0..10).map(|i| a[(i, i)]).sum();
        assert!((e.iter().sum::<f64>() - tr).abs() < 1e-8 * tr);
        let f = cholesky(&a).unwrap();
        let ld: f64 = e.iter().map(|v| v.ln()).sum();
        assert!((f.log_det() - ld).abs() < 1e-8);
    }

    #[test]
    fn rng_streams_reproduce() {
        let mut a = RngStream::new(42);
        let mut b = RngStream::new(42);
        for _ in 0..1_000_000 {
            assert_eq!(a.next_u64(), b.next_u64());
        }
        let mut c = RngStream::substream(42, 1);
        let mut d = RngStream::new(42);
        assert_ne!(c.next_u64(), d.next_u64());
    }

    #[test]
    fn permutation_is_a_permutation() {
        let mut p = RngStream::new(3).permutation(50);
        p.sort_unstable();
        assert_eq!(p, (0..50).collect::<Vec<_>>());
    }
}
