//! The constraint manifold M = g⁻¹(0): solving g(p, q) = 0 for q, and the
//! tangent vector fields Ψ and Υ that define the equivalent ODE on M.

use crate::error::{Error, Result};
use crate::linalg::{vec_norm_2, vec_norm_inf, Lu, Mat};
use crate::model::{DaeProblem, PointKS};

pub const CONSTRAINT_TOL: f64 = 1e-10;
const NEWTON_TOL: f64 = 1e-12;
const NEWTON_MAX_ITER: usize = 50;
const SINGULAR_DET_TOL: f64 = 1e-12;

/// A point certified to lie on M (‖g‖_∞ at construction bounded by
/// `CONSTRAINT_TOL`).
#[derive(Clone, Debug)]
pub struct ManifoldPoint {
    pub z: PointKS,
    pub g_residual: f64,
}

impl ManifoldPoint {
    /// Wrap a point that is already on M; errors if the residual is above
    /// the constraint tolerance.
    pub fn new(prob: &DaeProblem, z: PointKS) -> Result<ManifoldPoint> {
        let res = prob.g_residual(&z.concat())?;
        if res > CONSTRAINT_TOL {
            return Err(Error::Precondition(format!(
                "point {z} is off the constraint manifold: ‖g‖ = {res:.3e}"
            )));
        }
        Ok(ManifoldPoint { z, g_residual: res })
    }

    /// Solve the constraint for q starting from q_guess, then wrap.
    pub fn project(prob: &DaeProblem, p: &[f64], q_guess: &[f64]) -> Result<ManifoldPoint> {
        let q = solve_constraint(prob, p, q_guess)?;
        let z = PointKS::new(p.to_vec(), q);
        let g_residual = prob.g_residual(&z.concat())?;
        Ok(ManifoldPoint { z, g_residual })
    }
}

/// A tangent vector at a point of M, split like the point itself.
#[derive(Clone, Debug)]
pub struct TangentVector {
    pub u: Vec<f64>,
    pub v: Vec<f64>,
}

impl TangentVector {
    pub fn concat(&self) -> Vec<f64> {
        let mut w = self.u.clone();
        w.extend_from_slice(&self.v);
        w
    }

    pub fn norm(&self) -> f64 {
        vec_norm_2(&self.concat())
    }
}

/// LU factor of ∂₂g with the singularity guard: |det| below the scaled
/// threshold raises SingularBlock instead of returning garbage.
pub(crate) fn factor_d2g(d2g: &Mat) -> Result<Lu> {
    let lu = Lu::factor(d2g);
    let det = lu.det();
    let scale = d2g.row_norm_product().max(f64::MIN_POSITIVE);
    if det.abs() < SINGULAR_DET_TOL * scale {
        return Err(Error::SingularBlock { det });
    }
    Ok(lu)
}

/// Newton iteration (with step damping) on q ↦ g(p, q) at fixed p.
/// Converges to ‖g‖_∞ ≤ 1e-12 or reports NoConvergence with the residual
/// history attached. ∂₂g is LU-factored each step; singular blocks and
/// domain exits are reported as such.
pub fn solve_constraint(prob: &DaeProblem, p: &[f64], q_guess: &[f64]) -> Result<Vec<f64>> {
    debug_assert_eq!(p.len(), prob.k());
    debug_assert_eq!(q_guess.len(), prob.s());
    let mut z: Vec<f64> = p.iter().chain(q_guess).copied().collect();
    if let Some(component) = prob.domain().violation(&z) {
        return Err(Error::LeftDomain {
            location: "constraint solve start".into(),
            component,
        });
    }
    let k = prob.k();
    let mut history = Vec::new();
    let mut g = prob.eval_g(&z)?;
    let mut res = vec_norm_inf(&g);
    history.push(res);
    for _ in 0..NEWTON_MAX_ITER {
        if res <= NEWTON_TOL {
            return Ok(z[k..].to_vec());
        }
        let blocks = prob.jac_blocks(&z)?;
        let lu = factor_d2g(&blocks.d2g)?;
        let neg_g: Vec<f64> = g.iter().map(|v| -v).collect();
        let delta = lu.solve(&neg_g).ok_or(Error::SingularBlock { det: lu.det() })?;
        // damped update: halve until the residual decreases
        let mut alpha = 1.0;
        let mut accepted = false;
        for _ in 0..30 {
            let mut z_try = z.clone();
            for (i, d) in delta.iter().enumerate() {
                z_try[k + i] += alpha * d;
            }
            if let Some(component) = prob.domain().violation(&z_try) {
                if alpha < 1e-12 {
                    return Err(Error::LeftDomain {
                        location: "constraint solve".into(),
                        component,
                    });
                }
                alpha *= 0.5;
                continue;
            }
            match prob.eval_g(&z_try) {
                Ok(g_try) => {
                    let res_try = vec_norm_inf(&g_try);
                    if res_try < res || alpha < 1e-12 {
                        z = z_try;
                        g = g_try;
                        res = res_try;
                        accepted = true;
                        break;
                    }
                }
                Err(_) if alpha >= 1e-12 => {}
                Err(e) => return Err(e),
            }
            alpha *= 0.5;
        }
        history.push(res);
        if !accepted {
            break;
        }
    }
    if res <= NEWTON_TOL {
        return Ok(z[k..].to_vec());
    }
    Err(Error::NoConvergence {
        what: "constraint solve".into(),
        iterations: history.len() - 1,
        residuals: history,
    })
}

/// Ψ(p, q) = (f, −[∂₂g]⁻¹ ∂₁g f): the lift of f tangent to M.
pub fn psi(prob: &DaeProblem, z: &ManifoldPoint) -> Result<TangentVector> {
    let zc = z.z.concat();
    let u = prob.eval_f(&zc)?;
    lift(prob, &zc, u)
}

/// Υ(t, p, q) = (h, −[∂₂g]⁻¹ ∂₁g h): the same lift applied to h(t, ·).
pub fn upsilon(prob: &DaeProblem, t: f64, z: &ManifoldPoint) -> Result<TangentVector> {
    let zc = z.z.concat();
    let u = prob.eval_h(t, &zc)?;
    lift(prob, &zc, u)
}

/// Combined field a(t)Ψ + λΥ evaluated in one block solve; this is the
/// right-hand side of the ODE on M.
pub fn combined_field(
    prob: &DaeProblem,
    t: f64,
    z: &[f64],
    lambda: f64,
) -> Result<TangentVector> {
    let a = prob.eval_a(t)?;
    let f = prob.eval_f(z)?;
    let mut u: Vec<f64> = f.iter().map(|v| a * v).collect();
    if lambda != 0.0 {
        let h = prob.eval_h(t, z)?;
        for (ui, hi) in u.iter_mut().zip(&h) {
            *ui += lambda * hi;
        }
    }
    lift(prob, z, u)
}

fn lift(prob: &DaeProblem, z: &[f64], u: Vec<f64>) -> Result<TangentVector> {
    let blocks = prob.jac_blocks(z)?;
    let lu = factor_d2g(&blocks.d2g)?;
    let rhs = blocks.d1g.matvec(&u);
    let neg_rhs: Vec<f64> = rhs.iter().map(|v| -v).collect();
    let v = lu
        .solve(&neg_rhs)
        .ok_or(Error::SingularBlock { det: lu.det() })?;
    Ok(TangentVector { u, v })
}

/// ‖∂₁g·u + ∂₂g·v‖_∞, the defect of tangency at z.
pub fn tangency_residual(prob: &DaeProblem, z: &[f64], tv: &TangentVector) -> Result<f64> {
    let blocks = prob.jac_blocks(z)?;
    let a = blocks.d1g.matvec(&tv.u);
    let b = blocks.d2g.matvec(&tv.v);
    Ok(a
        .iter()
        .zip(&b)
        .fold(0.0, |m, (x, y)| m.max((x + y).abs())))
}
