//! Matrix exponential by Padé(6,6) with scaling and squaring.

use super::{Lu, Mat};

// Padé(6,6) numerator coefficients of e^x; the denominator uses the same
// coefficients with alternating signs.
const PADE6: [f64; 7] = [
    1.0,
    0.5,
    5.0 / 44.0,
    1.0 / 66.0,
    1.0 / 792.0,
    1.0 / 15840.0,
    1.0 / 665280.0,
];

/// exp(a) for a square matrix. Squaring count is chosen from ‖a‖₁ so the
/// scaled norm is below 1/4.
pub fn expm(a: &Mat) -> Mat {
    let n = a.rows();
    assert_eq!(n, a.cols(), "expm expects a square matrix");
    let norm = a.norm_one();
    let s = if norm > 0.25 {
        (norm / 0.25).log2().ceil().max(0.0) as u32
    } else {
        0
    };
    let scaled = a.scale(0.5f64.powi(s as i32));
    // numerator N = Σ c_j A^j, denominator D = Σ (-1)^j c_j A^j
    let mut num = Mat::identity(n).scale(PADE6[0]);
    let mut den = num.clone();
    let mut power = Mat::identity(n);
    for (j, &c) in PADE6.iter().enumerate().skip(1) {
        power = power.matmul(&scaled);
        num = num.add(&power.scale(c));
        let sign = if j % 2 == 0 { 1.0 } else { -1.0 };
        den = den.add(&power.scale(sign * c));
    }
    let mut result = Lu::factor(&den)
        .solve_mat(&num)
        .expect("Padé denominator is singular; the scaling bound should prevent this");
    for _ in 0..s {
        result = result.matmul(&result);
    }
    result
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn scalar_case() {
        let a = Mat::from_rows(&[vec![1.5]]);
        let e = expm(&a);
        assert!((e[(0, 0)] - 1.5f64.exp()).abs() < 1e-12);
    }

    #[test]
    fn rotation_generator() {
        // exp(t J) with J = [[0,-1],[1,0]] is the rotation by t
        let t = 0.7;
        let a = Mat::from_rows(&[vec![0.0, -t], vec![t, 0.0]]);
        let e = expm(&a);
        assert!((e[(0, 0)] - t.cos()).abs() < 1e-12);
        assert!((e[(0, 1)] + t.sin()).abs() < 1e-12);
        assert!((e[(1, 0)] - t.sin()).abs() < 1e-12);
        assert!((e[(1, 1)] - t.cos()).abs() < 1e-12);
    }

    #[test]
    fn diagonalizable_3x3_large_norm() {
        // exp of diag(2, -1, 0.5) conjugated; exercises the squaring path
        let p = Mat::from_rows(&[
            vec![1.0, 1.0, 0.0],
            vec![0.0, 1.0, 1.0],
            vec![1.0, 0.0, 1.0],
        ]);
        let d = Mat::from_rows(&[
            vec![2.0, 0.0, 0.0],
            vec![0.0, -1.0, 0.0],
            vec![0.0, 0.0, 0.5],
        ]);
        let pinv = Lu::factor(&p).solve_mat(&Mat::identity(3)).unwrap();
        let a = p.matmul(&d).matmul(&pinv);
        let want = p
            .matmul(&Mat::from_rows(&[
                vec![2.0f64.exp(), 0.0, 0.0],
                vec![0.0, (-1.0f64).exp(), 0.0],
                vec![0.0, 0.0, 0.5f64.exp()],
            ]))
            .matmul(&pinv);
        let got = expm(&a);
        assert!(got.sub(&want).max_abs() < 1e-11 * want.max_abs());
    }
}
