//! Small dense linear algebra: row-major matrices, LU with partial pivoting,
//! Householder QR, eigenvalues, one-sided Jacobi SVD and a Padé matrix
//! exponential. Everything here targets the small (k+s ≤ ~10) systems this
//! toolkit works with; no blocking, no SIMD.

mod eig;
mod expm;
mod svd;

pub use eig::{eigenvalues, Complex};
pub use expm::expm;
pub use svd::{jacobi_svd, Svd};

use std::ops::{Index, IndexMut};

/// Dense row-major matrix of f64.
#[derive(Clone, Debug, PartialEq)]
pub struct Mat {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Mat {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Mat {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Mat::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = 1.0;
        }
        m
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Self {
        let r = rows.len();
        let c = if r == 0 { 0 } else { rows[0].len() };
        let mut m = Mat::zeros(r, c);
        for (i, row) in rows.iter().enumerate() {
            assert_eq!(row.len(), c, "ragged rows");
            for (j, &v) in row.iter().enumerate() {
                m[(i, j)] = v;
            }
        }
        m
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut m = Mat::zeros(rows, cols);
        for i in 0..rows {
            for j in 0..cols {
                m[(i, j)] = f(i, j);
            }
        }
        m
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn col(&self, j: usize) -> Vec<f64> {
        (0..self.rows).map(|i| self[(i, j)]).collect()
    }

    pub fn transpose(&self) -> Mat {
        Mat::from_fn(self.cols, self.rows, |i, j| self[(j, i)])
    }

    pub fn matmul(&self, other: &Mat) -> Mat {
        assert_eq!(self.cols, other.rows, "dimension mismatch in matmul");
        let mut out = Mat::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let aik = self[(i, k)];
                if aik == 0.0 {
                    continue;
                }
                for j in 0..other.cols {
                    out[(i, j)] += aik * other[(k, j)];
                }
            }
        }
        out
    }

    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(self.cols, x.len(), "dimension mismatch in matvec");
        (0..self.rows)
            .map(|i| self.row(i).iter().zip(x).map(|(a, b)| a * b).sum())
            .collect()
    }

    pub fn scale(&self, s: f64) -> Mat {
        let mut out = self.clone();
        for v in &mut out.data {
            *v *= s;
        }
        out
    }

    pub fn add(&self, other: &Mat) -> Mat {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        let mut out = self.clone();
        for (a, b) in out.data.iter_mut().zip(&other.data) {
            *a += b;
        }
        out
    }

    pub fn sub(&self, other: &Mat) -> Mat {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        let mut out = self.clone();
        for (a, b) in out.data.iter_mut().zip(&other.data) {
            *a -= b;
        }
        out
    }

    /// Maximum absolute column sum.
    pub fn norm_one(&self) -> f64 {
        (0..self.cols)
            .map(|j| (0..self.rows).map(|i| self[(i, j)].abs()).sum::<f64>())
            .fold(0.0, f64::max)
    }

    /// Maximum absolute row sum.
    pub fn norm_inf(&self) -> f64 {
        (0..self.rows)
            .map(|i| self.row(i).iter().map(|v| v.abs()).sum::<f64>())
            .fold(0.0, f64::max)
    }

    pub fn norm_fro(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// Product of Euclidean row norms; used to scale degeneracy thresholds.
    pub fn row_norm_product(&self) -> f64 {
        (0..self.rows)
            .map(|i| self.row(i).iter().map(|v| v * v).sum::<f64>().sqrt())
            .product()
    }

    pub fn block(&self, r0: usize, c0: usize, rows: usize, cols: usize) -> Mat {
        Mat::from_fn(rows, cols, |i, j| self[(r0 + i, c0 + j)])
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }
}

impl Index<(usize, usize)> for Mat {
    type Output = f64;
    fn index(&self, (i, j): (usize, usize)) -> &f64 {
        debug_assert!(i < self.rows && j < self.cols);
        &self.data[i * self.cols + j]
    }
}

impl IndexMut<(usize, usize)> for Mat {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut f64 {
        debug_assert!(i < self.rows && j < self.cols);
        &mut self.data[i * self.cols + j]
    }
}

/// LU factorization with partial pivoting.
pub struct Lu {
    lu: Mat,
    perm: Vec<usize>,
    sign: f64,
    n: usize,
}

impl Lu {
    pub fn factor(m: &Mat) -> Lu {
        assert_eq!(m.rows(), m.cols(), "LU requires a square matrix");
        let n = m.rows();
        let mut lu = m.clone();
        let mut perm: Vec<usize> = (0..n).collect();
        let mut sign = 1.0;
        for k in 0..n {
            let mut piv = k;
            let mut max = lu[(k, k)].abs();
            for i in k + 1..n {
                let v = lu[(i, k)].abs();
                if v > max {
                    max = v;
                    piv = i;
                }
            }
            if piv != k {
                for j in 0..n {
                    let tmp = lu[(k, j)];
                    lu[(k, j)] = lu[(piv, j)];
                    lu[(piv, j)] = tmp;
                }
                perm.swap(k, piv);
                sign = -sign;
            }
            let pivot = lu[(k, k)];
            if pivot == 0.0 {
                continue;
            }
            for i in k + 1..n {
                let factor = lu[(i, k)] / pivot;
                lu[(i, k)] = factor;
                for j in k + 1..n {
                    let v = lu[(k, j)];
                    lu[(i, j)] -= factor * v;
                }
            }
        }
        Lu { lu, perm, sign, n }
    }

    pub fn det(&self) -> f64 {
        let mut d = self.sign;
        for i in 0..self.n {
            d *= self.lu[(i, i)];
        }
        d
    }

    /// Smallest |pivot| relative to the matrix scale; a cheap conditioning probe.
    pub fn min_pivot(&self) -> f64 {
        (0..self.n)
            .map(|i| self.lu[(i, i)].abs())
            .fold(f64::INFINITY, f64::min)
    }

    pub fn solve(&self, b: &[f64]) -> Option<Vec<f64>> {
        assert_eq!(b.len(), self.n);
        for i in 0..self.n {
            if self.lu[(i, i)] == 0.0 {
                return None;
            }
        }
        let mut x: Vec<f64> = self.perm.iter().map(|&p| b[p]).collect();
        for i in 1..self.n {
            let mut sum = x[i];
            for j in 0..i {
                sum -= self.lu[(i, j)] * x[j];
            }
            x[i] = sum;
        }
        for i in (0..self.n).rev() {
            let mut sum = x[i];
            for j in i + 1..self.n {
                sum -= self.lu[(i, j)] * x[j];
            }
            x[i] = sum / self.lu[(i, i)];
        }
        Some(x)
    }

    pub fn solve_mat(&self, b: &Mat) -> Option<Mat> {
        let mut out = Mat::zeros(self.n, b.cols());
        for j in 0..b.cols() {
            let col = self.solve(&b.col(j))?;
            for i in 0..self.n {
                out[(i, j)] = col[i];
            }
        }
        Some(out)
    }
}

/// Householder QR of an m×n matrix (m ≥ n), returning full Q (m×m) and R (m×n).
/// The last m−rank(A) columns of Q span the orthogonal complement of col(A),
/// which is how tangent-space bases are built from dgᵀ.
pub fn qr(a: &Mat) -> (Mat, Mat) {
    let m = a.rows();
    let n = a.cols();
    let mut r = a.clone();
    let mut q = Mat::identity(m);
    for k in 0..n.min(m.saturating_sub(1)) {
        let mut norm = 0.0;
        for i in k..m {
            norm += r[(i, k)] * r[(i, k)];
        }
        let norm = norm.sqrt();
        if norm == 0.0 {
            continue;
        }
        let alpha = if r[(k, k)] >= 0.0 { -norm } else { norm };
        let mut v = vec![0.0; m];
        for i in k..m {
            v[i] = r[(i, k)];
        }
        v[k] -= alpha;
        let vnorm2: f64 = v.iter().map(|x| x * x).sum();
        if vnorm2 == 0.0 {
            continue;
        }
        // R <- (I - 2vv^T/|v|^2) R
        for j in k..n {
            let dot: f64 = (k..m).map(|i| v[i] * r[(i, j)]).sum();
            let f = 2.0 * dot / vnorm2;
            for i in k..m {
                r[(i, j)] -= f * v[i];
            }
        }
        // Q <- Q (I - 2vv^T/|v|^2)
        for i in 0..m {
            let dot: f64 = (k..m).map(|j| q[(i, j)] * v[j]).sum();
            let f = 2.0 * dot / vnorm2;
            for j in k..m {
                q[(i, j)] -= f * v[j];
            }
        }
    }
    for i in 1..m {
        for j in 0..i.min(n) {
            r[(i, j)] = 0.0;
        }
    }
    (q, r)
}

/// Orthonormal basis of the kernel of `a` (rows may be rank deficient), as
/// columns. Uses QR of aᵀ; the trailing columns of Q beyond rank(a) span ker a.
pub fn kernel_basis(a: &Mat, rank_tol: f64) -> Mat {
    let at = a.transpose();
    let (q, r) = qr(&at);
    let n = at.rows();
    let scale = a.max_abs().max(1.0);
    let mut rank = 0;
    for j in 0..at.cols().min(n) {
        if r[(j, j)].abs() > rank_tol * scale {
            rank += 1;
        }
    }
    q.block(0, rank, n, n - rank)
}

/// Draw a Haar-ish random orthogonal matrix via QR of a Gaussian sample.
pub fn random_orthogonal(n: usize, rng: &mut impl rand::Rng) -> Mat {
    use rand_distr::StandardNormal;
    let g = Mat::from_fn(n, n, |_, _| rng.sample(StandardNormal));
    let (q, r) = qr(&g);
    // Fix signs so the distribution is Haar rather than half-Haar.
    let mut q = q;
    for j in 0..n {
        if r[(j, j)] < 0.0 {
            for i in 0..n {
                q[(i, j)] = -q[(i, j)];
            }
        }
    }
    q
}

/// Solve the complex system (ar + i·ai) z = br + i·bi via the equivalent
/// 2n×2n real system. Used by inverse-iteration checks on eigenpairs.
pub fn complex_solve(
    ar: &Mat,
    ai: &Mat,
    br: &[f64],
    bi: &[f64],
) -> Option<(Vec<f64>, Vec<f64>)> {
    let n = ar.rows();
    let mut big = Mat::zeros(2 * n, 2 * n);
    for i in 0..n {
        for j in 0..n {
            big[(i, j)] = ar[(i, j)];
            big[(i, j + n)] = -ai[(i, j)];
            big[(i + n, j)] = ai[(i, j)];
            big[(i + n, j + n)] = ar[(i, j)];
        }
    }
    let mut rhs = vec![0.0; 2 * n];
    rhs[..n].copy_from_slice(br);
    rhs[n..].copy_from_slice(bi);
    let sol = Lu::factor(&big).solve(&rhs)?;
    Some((sol[..n].to_vec(), sol[n..].to_vec()))
}

pub fn vec_norm_inf(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

pub fn vec_norm_2(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    #[test]
    fn lu_solves_and_det() {
        let a = Mat::from_rows(&[vec![2.0, 1.0, 1.0], vec![4.0, 3.0, 3.0], vec![8.0, 7.0, 9.0]]);
        let lu = Lu::factor(&a);
        assert!((lu.det() - 4.0).abs() < 1e-12);
        let x = lu.solve(&[4.0, 10.0, 24.0]).unwrap();
        let b = a.matvec(&x);
        for (bi, want) in b.iter().zip([4.0, 10.0, 24.0]) {
            assert!((bi - want).abs() < 1e-12);
        }
    }

    #[test]
    fn lu_reports_singularity_through_det() {
        let a = Mat::from_rows(&[vec![1.0, 2.0], vec![2.0, 4.0]]);
        let lu = Lu::factor(&a);
        assert!(lu.det().abs() < 1e-14);
        assert!(lu.solve(&[1.0, 1.0]).is_none());
    }

    #[test]
    fn qr_reconstructs_and_is_orthogonal() {
        let a = Mat::from_rows(&[
            vec![1.0, -1.0],
            vec![2.0, 3.0],
            vec![0.5, 0.25],
        ]);
        let (q, r) = qr(&a);
        let qr_prod = q.matmul(&r);
        assert!(qr_prod.sub(&a).max_abs() < 1e-12);
        let qtq = q.transpose().matmul(&q);
        assert!(qtq.sub(&Mat::identity(3)).max_abs() < 1e-12);
    }

    #[test]
    fn kernel_basis_spans_nullspace() {
        // rank-1 map (x, y, z) -> x + 2y + 3z: kernel is 2-dimensional
        let a = Mat::from_rows(&[vec![1.0, 2.0, 3.0]]);
        let k = kernel_basis(&a, 1e-12);
        assert_eq!((k.rows(), k.cols()), (3, 2));
        let prod = a.matmul(&k);
        assert!(prod.max_abs() < 1e-12);
        let ktk = k.transpose().matmul(&k);
        assert!(ktk.sub(&Mat::identity(2)).max_abs() < 1e-12);
    }

    #[test]
    fn random_orthogonal_is_orthogonal() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        let q = random_orthogonal(5, &mut rng);
        let qtq = q.transpose().matmul(&q);
        assert!(qtq.sub(&Mat::identity(5)).max_abs() < 1e-12);
    }

    #[test]
    fn complex_solve_roundtrip() {
        let ar = Mat::from_rows(&[vec![1.0, 2.0], vec![-1.0, 0.5]]);
        let ai = Mat::from_rows(&[vec![0.5, 0.0], vec![1.0, -2.0]]);
        let (zr, zi) = complex_solve(&ar, &ai, &[1.0, 0.0], &[0.0, 1.0]).unwrap();
        // verify A z = b in complex arithmetic
        for i in 0..2 {
            let mut re = 0.0;
            let mut im = 0.0;
            for j in 0..2 {
                re += ar[(i, j)] * zr[j] - ai[(i, j)] * zi[j];
                im += ar[(i, j)] * zi[j] + ai[(i, j)] * zr[j];
            }
            let (bre, bim) = if i == 0 { (1.0, 0.0) } else { (0.0, 1.0) };
            assert!((re - bre).abs() < 1e-12 && (im - bim).abs() < 1e-12);
        }
    }
}
