//! Eigenvalues of small real matrices: closed form for n ≤ 2, Householder
//! Hessenberg reduction followed by the Francis implicit double-shift QR
//! iteration for n ≥ 3.

use super::Mat;
use serde::Serialize;

/// A complex number as a plain (re, im) pair; enough for spectra and reports.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Complex {
    pub re: f64,
    pub im: f64,
}

impl Complex {
    pub fn new(re: f64, im: f64) -> Self {
        Complex { re, im }
    }

    pub fn abs(&self) -> f64 {
        self.re.hypot(self.im)
    }

    pub fn dist(&self, other: Complex) -> f64 {
        (self.re - other.re).hypot(self.im - other.im)
    }
}

/// Eigenvalues of a square matrix, in no particular order.
/// Fails only if the QR iteration stalls (budget 100·n iterations per matrix).
pub fn eigenvalues(m: &Mat) -> Result<Vec<Complex>, usize> {
    let n = m.rows();
    assert_eq!(n, m.cols(), "eigenvalues requires a square matrix");
    match n {
        0 => Ok(Vec::new()),
        1 => Ok(vec![Complex::new(m[(0, 0)], 0.0)]),
        2 => Ok(eig2(m[(0, 0)], m[(0, 1)], m[(1, 0)], m[(1, 1)]).to_vec()),
        _ => {
            let mut h = m.clone();
            hessenberg_in_place(&mut h);
            francis_qr(&mut h)
        }
    }
}

/// Closed-form 2×2 spectrum from trace and determinant.
fn eig2(a: f64, b: f64, c: f64, d: f64) -> [Complex; 2] {
    let half_tr = 0.5 * (a + d);
    let det = a * d - b * c;
    let disc = half_tr * half_tr - det;
    if disc >= 0.0 {
        let s = disc.sqrt();
        [
            Complex::new(half_tr + s, 0.0),
            Complex::new(half_tr - s, 0.0),
        ]
    } else {
        let s = (-disc).sqrt();
        [Complex::new(half_tr, s), Complex::new(half_tr, -s)]
    }
}

/// Householder reduction to upper Hessenberg form, in place.
fn hessenberg_in_place(a: &mut Mat) {
    let n = a.rows();
    for k in 0..n.saturating_sub(2) {
        let mut norm2 = 0.0;
        for i in k + 1..n {
            norm2 += a[(i, k)] * a[(i, k)];
        }
        if norm2 == 0.0 {
            continue;
        }
        let norm = norm2.sqrt();
        let alpha = if a[(k + 1, k)] >= 0.0 { -norm } else { norm };
        let mut v = vec![0.0; n];
        for i in k + 1..n {
            v[i] = a[(i, k)];
        }
        v[k + 1] -= alpha;
        let vnorm2: f64 = v.iter().map(|x| x * x).sum();
        if vnorm2 == 0.0 {
            continue;
        }
        // A <- H A, with H = I - 2 v v^T / |v|^2
        for j in k..n {
            let dot: f64 = (k + 1..n).map(|i| v[i] * a[(i, j)]).sum();
            let f = 2.0 * dot / vnorm2;
            for i in k + 1..n {
                a[(i, j)] -= f * v[i];
            }
        }
        // A <- A H
        for i in 0..n {
            let dot: f64 = (k + 1..n).map(|j| a[(i, j)] * v[j]).sum();
            let f = 2.0 * dot / vnorm2;
            for j in k + 1..n {
                a[(i, j)] -= f * v[j];
            }
        }
        a[(k + 1, k)] = alpha;
        for i in k + 2..n {
            a[(i, k)] = 0.0;
        }
    }
}

/// Francis double-shift QR on an upper Hessenberg matrix; returns the
/// spectrum. The matrix is destroyed. Classic EISPACK `hqr` scheme with
/// exceptional shifts every 10 stalled iterations.
#[allow(unused_assignments)] // p, q, r carry across the subdiagonal search by design
fn francis_qr(h: &mut Mat) -> Result<Vec<Complex>, usize> {
    const EPS: f64 = f64::EPSILON;
    let n = h.rows();
    let mut out: Vec<Complex> = Vec::with_capacity(n);
    let anorm: f64 = {
        let mut s = 0.0;
        for i in 0..n {
            for j in i.saturating_sub(1)..n {
                s += h[(i, j)].abs();
            }
        }
        s
    };
    if anorm == 0.0 {
        return Ok(vec![Complex::new(0.0, 0.0); n]);
    }
    let mut t = 0.0;
    let mut nn: isize = n as isize - 1;
    let budget = 100 * n;
    let mut total_its = 0usize;
    while nn >= 0 {
        let mut its = 0usize;
        loop {
            // Find a small subdiagonal element splitting the active block.
            let mut l = nn;
            while l >= 1 {
                let s = h[(l as usize - 1, l as usize - 1)].abs() + h[(l as usize, l as usize)].abs();
                let s = if s == 0.0 { anorm } else { s };
                if h[(l as usize, l as usize - 1)].abs() <= EPS * s {
                    h[(l as usize, l as usize - 1)] = 0.0;
                    break;
                }
                l -= 1;
            }
            let nnu = nn as usize;
            let x = h[(nnu, nnu)];
            if l == nn {
                out.push(Complex::new(x + t, 0.0));
                nn -= 1;
                break;
            }
            let y = h[(nnu - 1, nnu - 1)];
            let w = h[(nnu, nnu - 1)] * h[(nnu - 1, nnu)];
            if l == nn - 1 {
                let p = 0.5 * (y - x);
                let q = p * p + w;
                let z = q.abs().sqrt();
                let xx = x + t;
                if q >= 0.0 {
                    let z = p + z.copysign(p);
                    let l1 = xx + z;
                    let l2 = if z != 0.0 { xx - w / z } else { l1 };
                    out.push(Complex::new(l1, 0.0));
                    out.push(Complex::new(l2, 0.0));
                } else {
                    out.push(Complex::new(xx + p, z));
                    out.push(Complex::new(xx + p, -z));
                }
                nn -= 2;
                break;
            }
            if total_its >= budget {
                return Err(total_its);
            }
            let (mut x, mut y, mut w) = (x, y, w);
            if its > 0 && its % 10 == 0 {
                // Exceptional shift to break symmetric stalls.
                t += x;
                for i in 0..=nnu {
                    h[(i, i)] -= x;
                }
                let s = h[(nnu, nnu - 1)].abs() + h[(nnu - 1, nnu - 2)].abs();
                y = 0.75 * s;
                x = y;
                w = -0.4375 * s * s;
            }
            its += 1;
            total_its += 1;
            // Look for two consecutive small subdiagonals.
            let lu = l as usize;
            let mut m = nnu - 2;
            let (mut p, mut q, mut r) = (0.0, 0.0, 0.0);
            loop {
                let z = h[(m, m)];
                let rr = x - z;
                let ss = y - z;
                p = (rr * ss - w) / h[(m + 1, m)] + h[(m, m + 1)];
                q = h[(m + 1, m + 1)] - z - rr - ss;
                r = h[(m + 2, m + 1)];
                let s = p.abs() + q.abs() + r.abs();
                p /= s;
                q /= s;
                r /= s;
                if m == lu {
                    break;
                }
                let u = h[(m, m - 1)].abs() * (q.abs() + r.abs());
                let v = p.abs()
                    * (h[(m - 1, m - 1)].abs() + z.abs() + h[(m + 1, m + 1)].abs());
                if u <= EPS * v {
                    break;
                }
                m -= 1;
            }
            for i in m + 2..=nnu {
                h[(i, i - 2)] = 0.0;
                if i > m + 2 {
                    h[(i, i - 3)] = 0.0;
                }
            }
            // Double QR sweep over rows l..=nn, columns m..=nn.
            for k in m..=nnu - 1 {
                if k != m {
                    p = h[(k, k - 1)];
                    q = h[(k + 1, k - 1)];
                    r = if k != nnu - 1 { h[(k + 2, k - 1)] } else { 0.0 };
                    x = p.abs() + q.abs() + r.abs();
                    if x != 0.0 {
                        p /= x;
                        q /= x;
                        r /= x;
                    }
                }
                let s = (p * p + q * q + r * r).sqrt().copysign(p);
                if s == 0.0 {
                    continue;
                }
                if k == m {
                    if l != m as isize {
                        h[(k, k - 1)] = -h[(k, k - 1)];
                    }
                } else {
                    h[(k, k - 1)] = -s * x;
                }
                p += s;
                x = p / s;
                y = q / s;
                let z = r / s;
                q /= p;
                r /= p;
                for j in k..=nnu {
                    let mut pp = h[(k, j)] + q * h[(k + 1, j)];
                    if k != nnu - 1 {
                        pp += r * h[(k + 2, j)];
                        h[(k + 2, j)] -= pp * z;
                    }
                    h[(k + 1, j)] -= pp * y;
                    h[(k, j)] -= pp * x;
                }
                let mmin = if nnu < k + 3 { nnu } else { k + 3 };
                for i in lu..=mmin {
                    let mut pp = x * h[(i, k)] + y * h[(i, k + 1)];
                    if k != nnu - 1 {
                        pp += z * h[(i, k + 2)];
                        h[(i, k + 2)] -= pp * r;
                    }
                    h[(i, k + 1)] -= pp * q;
                    h[(i, k)] -= pp;
                }
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{complex_solve, random_orthogonal, vec_norm_2, Mat};
    use rand::SeedableRng;

    fn sort_spectrum(mut v: Vec<Complex>) -> Vec<Complex> {
        v.sort_by(|a, b| {
            (a.re, a.im)
                .partial_cmp(&(b.re, b.im))
                .unwrap_or(std::cmp::Ordering::Equal)
        });
        v
    }

    /// Companion matrix of a monic polynomial x^n + c[n-1] x^(n-1) + ... + c[0].
    fn companion(coeffs: &[f64]) -> Mat {
        let n = coeffs.len();
        Mat::from_fn(n, n, |i, j| {
            if j == n - 1 {
                -coeffs[i]
            } else if i == j + 1 {
                1.0
            } else {
                0.0
            }
        })
    }

    #[test]
    fn identity_2x2() {
        let m = Mat::identity(2);
        let eigs = eigenvalues(&m).unwrap();
        for e in eigs {
            assert!((e.re - 1.0).abs() < 1e-14 && e.im == 0.0);
        }
    }

    #[test]
    fn rotation_generator_has_pure_imaginary_pair() {
        let m = Mat::from_rows(&[vec![0.0, -1.0], vec![1.0, 0.0]]);
        let eigs = sort_spectrum(eigenvalues(&m).unwrap());
        assert!((eigs[0].re).abs() < 1e-14 && (eigs[0].im + 1.0).abs() < 1e-14);
        assert!((eigs[1].re).abs() < 1e-14 && (eigs[1].im - 1.0).abs() < 1e-14);
    }

    #[test]
    fn companion_4x4_known_spectrum() {
        // (x-1)(x-2)(x+3)(x-5) = x^4 - 5x^3 - 7x^2 + 41x - 30
        let m = companion(&[-30.0, 41.0, -7.0, -5.0]);
        let eigs = sort_spectrum(eigenvalues(&m).unwrap());
        let expect = [-3.0, 1.0, 2.0, 5.0];
        for (e, want) in eigs.iter().zip(expect) {
            assert!((e.re - want).abs() < 1e-8, "got {:?}, want {}", e, want);
            assert!(e.im.abs() < 1e-8);
        }
    }

    #[test]
    fn companion_with_complex_pairs() {
        // (x^2 + 1)(x^2 - 2x + 5): roots ±i, 1 ± 2i
        // expand: x^4 - 2x^3 + 6x^2 - 2x + 5
        let m = companion(&[5.0, -2.0, 6.0, -2.0]);
        let eigs = eigenvalues(&m).unwrap();
        let targets = [
            Complex::new(0.0, 1.0),
            Complex::new(0.0, -1.0),
            Complex::new(1.0, 2.0),
            Complex::new(1.0, -2.0),
        ];
        for t in targets {
            let best = eigs.iter().map(|e| e.dist(t)).fold(f64::INFINITY, f64::min);
            assert!(best < 1e-8, "eigenvalue {:?} missing (best dist {})", t, best);
        }
    }

    #[test]
    fn backward_error_via_inverse_iteration() {
        // For each eigenvalue, run a couple of inverse-iteration steps and
        // check ‖Av − λv‖ ≤ 1e-8 ‖A‖.
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(42);
        for trial in 0..5 {
            let n = 4 + trial % 3;
            let q = random_orthogonal(n, &mut rng);
            let d = Mat::from_fn(n, n, |i, j| {
                if i == j {
                    (i as f64) - 1.5
                } else if j == i + 1 && i % 2 == 0 {
                    2.0
                } else if i == j + 1 && j % 2 == 0 {
                    -2.0
                } else {
                    0.0
                }
            });
            let a = q.matmul(&d).matmul(&q.transpose());
            let norm = a.norm_one();
            let eigs = eigenvalues(&a).unwrap();
            for lam in eigs {
                // (A - λ I) with a tiny regularizing offset so the solve stays finite
                let mut ar = a.clone();
                for i in 0..n {
                    ar[(i, i)] -= lam.re + 1e-12;
                }
                let ai = Mat::from_fn(n, n, |i, j| if i == j { -lam.im } else { 0.0 });
                let mut vr = vec![1.0; n];
                let mut vi = vec![0.0; n];
                for _ in 0..3 {
                    if let Some((nr, ni)) = complex_solve(&ar, &ai, &vr, &vi) {
                        let scale = (vec_norm_2(&nr).powi(2) + vec_norm_2(&ni).powi(2)).sqrt();
                        if !scale.is_finite() || scale == 0.0 {
                            break;
                        }
                        vr = nr.iter().map(|x| x / scale).collect();
                        vi = ni.iter().map(|x| x / scale).collect();
                    }
                }
                // residual (A - λ)v
                let mut res2 = 0.0;
                for i in 0..n {
                    let mut rr = -lam.re * vr[i] + lam.im * vi[i];
                    let mut ri = -lam.re * vi[i] - lam.im * vr[i];
                    for j in 0..n {
                        rr += a[(i, j)] * vr[j];
                        ri += a[(i, j)] * vi[j];
                    }
                    res2 += rr * rr + ri * ri;
                }
                assert!(
                    res2.sqrt() <= 1e-8 * norm,
                    "backward error {} exceeds 1e-8·‖A‖ = {}",
                    res2.sqrt(),
                    1e-8 * norm
                );
            }
        }
    }

    #[test]
    fn spectrum_invariant_under_orthogonal_similarity() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let a = Mat::from_rows(&[
            vec![1.0, 2.0, 0.0, -1.0],
            vec![0.5, -1.0, 3.0, 0.0],
            vec![0.0, 1.0, 0.5, 2.0],
            vec![1.0, 0.0, -2.0, 1.5],
        ]);
        let q = random_orthogonal(4, &mut rng);
        let b = q.matmul(&a).matmul(&q.transpose());
        let ea = eigenvalues(&a).unwrap();
        let eb = eigenvalues(&b).unwrap();
        for t in ea {
            let best = eb.iter().map(|e| e.dist(t)).fold(f64::INFINITY, f64::min);
            assert!(best < 1e-8, "eigenvalue {:?} moved by {}", t, best);
        }
    }
}
