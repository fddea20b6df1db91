//! One-sided Jacobi SVD for small square matrices.

use super::{qr, Mat};

/// Result of a singular value decomposition a = u · diag(sigma) · vᵀ with
/// u, v orthogonal and sigma sorted in descending order.
#[derive(Clone, Debug)]
pub struct Svd {
    pub u: Mat,
    pub sigma: Vec<f64>,
    pub v: Mat,
}

/// One-sided Jacobi: rotate column pairs of a working copy of `a` until all
/// columns are mutually orthogonal; the column norms are the singular values.
/// Columns belonging to (numerically) zero singular values are completed to an
/// orthonormal basis of the left space via QR.
pub fn jacobi_svd(a: &Mat) -> Svd {
    let n = a.rows();
    assert_eq!(n, a.cols(), "jacobi_svd expects a square matrix");
    let mut w = a.clone();
    let mut v = Mat::identity(n);
    let tol = 1e-15;
    let max_sweeps = 60;
    for _ in 0..max_sweeps {
        let mut rotated = false;
        for p in 0..n {
            for q in p + 1..n {
                let mut app = 0.0;
                let mut aqq = 0.0;
                let mut apq = 0.0;
                for i in 0..n {
                    app += w[(i, p)] * w[(i, p)];
                    aqq += w[(i, q)] * w[(i, q)];
                    apq += w[(i, p)] * w[(i, q)];
                }
                if apq.abs() <= tol * (app * aqq).sqrt() || app == 0.0 || aqq == 0.0 {
                    continue;
                }
                rotated = true;
                let tau = (aqq - app) / (2.0 * apq);
                let t = tau.signum() / (tau.abs() + (1.0 + tau * tau).sqrt());
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                for i in 0..n {
                    let wp = w[(i, p)];
                    let wq = w[(i, q)];
                    w[(i, p)] = c * wp - s * wq;
                    w[(i, q)] = s * wp + c * wq;
                    let vp = v[(i, p)];
                    let vq = v[(i, q)];
                    v[(i, p)] = c * vp - s * vq;
                    v[(i, q)] = s * vp + c * vq;
                }
            }
        }
        if !rotated {
            break;
        }
    }
    let mut order: Vec<usize> = (0..n).collect();
    let norms: Vec<f64> = (0..n)
        .map(|j| (0..n).map(|i| w[(i, j)] * w[(i, j)]).sum::<f64>().sqrt())
        .collect();
    order.sort_by(|&a, &b| norms[b].partial_cmp(&norms[a]).unwrap_or(std::cmp::Ordering::Equal));
    let sigma: Vec<f64> = order.iter().map(|&j| norms[j]).collect();
    let v_sorted = Mat::from_fn(n, n, |i, j| v[(i, order[j])]);
    let mut u = Mat::zeros(n, n);
    let scale = sigma.first().copied().unwrap_or(0.0).max(1.0);
    let mut filled = 0;
    for j in 0..n {
        if sigma[j] > 1e-14 * scale {
            for i in 0..n {
                u[(i, j)] = w[(i, order[j])] / sigma[j];
            }
            filled = j + 1;
        }
    }
    if filled < n {
        // complete the zero-sigma columns to an orthonormal basis: QR of
        // [u_filled | I] and take the first n columns past the filled ones
        let m = Mat::from_fn(n, n + filled, |i, j| {
            if j < filled {
                u[(i, j)]
            } else if i == j - filled {
                1.0
            } else {
                0.0
            }
        });
        let (qfull, _) = qr(&m);
        for j in filled..n {
            for i in 0..n {
                u[(i, j)] = qfull[(i, j)];
            }
        }
    }
    Svd {
        u,
        sigma,
        v: v_sorted,
    }
}

impl Svd {
    /// Reconstruction u · diag(sigma) · vᵀ.
    pub fn reconstruct(&self) -> Mat {
        let n = self.sigma.len();
        let mut us = self.u.clone();
        for j in 0..n {
            for i in 0..n {
                us[(i, j)] *= self.sigma[j];
            }
        }
        us.matmul(&self.v.transpose())
    }

    /// Number of singular values above `tol · sigma_max`. Errors with the
    /// offending index when a value sits inside (0.1·tol, 10·tol) — no clear
    /// gap means the rank decision would be a guess.
    pub fn rank_with_gap(&self, tol: f64) -> Result<usize, (usize, f64)> {
        let smax = self.sigma.first().copied().unwrap_or(0.0);
        if smax == 0.0 {
            return Ok(0);
        }
        let cut = tol * smax;
        let mut rank = 0;
        for (i, &s) in self.sigma.iter().enumerate() {
            if s > 10.0 * cut {
                rank += 1;
            } else if s > 0.1 * cut {
                return Err((i, s));
            }
        }
        Ok(rank)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::random_orthogonal;
    use rand::SeedableRng;

    #[test]
    fn diag_matrix() {
        let e = Mat::from_rows(&[vec![2.0, 0.0], vec![0.0, 0.0]]);
        let svd = jacobi_svd(&e);
        assert!((svd.sigma[0] - 2.0).abs() < 1e-14);
        assert!(svd.sigma[1].abs() < 1e-14);
        assert!(svd.reconstruct().sub(&e).max_abs() < 1e-12);
        // P = Uᵀ, Q = Vᵀ are identity up to sign
        for j in 0..2 {
            assert!((svd.u[(j, j)].abs() - 1.0).abs() < 1e-12);
            assert!((svd.v[(j, j)].abs() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn nilpotent_shift() {
        let e = Mat::from_rows(&[vec![0.0, 1.0], vec![0.0, 0.0]]);
        let svd = jacobi_svd(&e);
        assert!((svd.sigma[0] - 1.0).abs() < 1e-14);
        assert!(svd.sigma[1].abs() < 1e-14);
        assert!(svd.reconstruct().sub(&e).max_abs() < 1e-12);
    }

    #[test]
    fn random_rank3_5x5() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        // rank-3 by construction: product of 5×3 and 3×5 factors
        let f1 = random_orthogonal(5, &mut rng).block(0, 0, 5, 3);
        let f2 = random_orthogonal(5, &mut rng).block(0, 0, 5, 3).transpose();
        let e = f1.matmul(&f2);
        let svd = jacobi_svd(&e);
        assert!(svd.sigma[0] > 1e-8 && svd.sigma[2] > 1e-8);
        assert!(svd.sigma[3] < 1e-12 && svd.sigma[4] < 1e-12);
        assert!(svd.reconstruct().sub(&e).max_abs() <= 1e-12 * e.norm_fro().max(1.0));
        let utu = svd.u.transpose().matmul(&svd.u);
        let vtv = svd.v.transpose().matmul(&svd.v);
        assert!(utu.sub(&Mat::identity(5)).max_abs() < 1e-12);
        assert!(vtv.sub(&Mat::identity(5)).max_abs() < 1e-12);
        assert_eq!(svd.rank_with_gap(1e-10).unwrap(), 3);
    }

    #[test]
    fn descending_order() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        let q1 = random_orthogonal(4, &mut rng);
        let q2 = random_orthogonal(4, &mut rng);
        let d = Mat::from_fn(4, 4, |i, j| {
            if i == j {
                [0.3, 7.0, 2.0, 0.001][i]
            } else {
                0.0
            }
        });
        let a = q1.matmul(&d).matmul(&q2);
        let svd = jacobi_svd(&a);
        let want = [7.0, 2.0, 0.3, 0.001];
        for (s, w) in svd.sigma.iter().zip(want) {
            assert!((s - w).abs() < 1e-10, "sigma {} vs {}", s, w);
        }
    }
}
