//! Cyclic coordinate descent for the Lasso in Gram form.
//!
//! Minimizes `½ bᵀGb − cᵀb + λ‖b‖₁` for positive semidefinite `G` with a
//! positive diagonal. With `G = AᵀA` and `c = Aᵀy` this is the usual
//! `½‖y − Ab‖² + λ‖b‖₁` up to a constant.

use crate::error::{Error, Result};
use crate::numerics::Matrix;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CdOptions {
    pub max_sweeps: usize,
    /// Max coordinate change in the last sweep.
    pub step_tol: f64,
    /// Max KKT violation, absolute. `None` means `1e-8·p`.
    pub kkt_tol: Option<f64>,
}

impl Default for CdOptions {
    fn default() -> Self {
        Self {
            max_sweeps: 10_000,
            step_tol: 1e-10,
            kkt_tol: None,
        }
    }
}

#[derive(Debug, Clone)]
pub struct LassoFit {
    pub coef: Vec<f64>,
    pub sweeps: usize,
    pub kkt_residual: f64,
}

#[inline]
pub fn soft_threshold(z: f64, lambda: f64) -> f64 {
    if z > lambda {
        z - lambda
    } else if z < -lambda {
        z + lambda
    } else {
        0.0
    }
}

/// Largest violation of the subgradient optimality conditions:
/// `g_j + λ·sign(b_j) = 0` if `b_j ≠ 0`, `|g_j| ≤ λ` otherwise, with `g = Gb − c`.
pub fn kkt_residual(gram: &Matrix, c: &[f64], lambda: f64, b: &[f64]) -> f64 {
    let p = c.len();
    let mut worst = 0.0_f64;
    for j in 0..p {
        let mut g = -c[j];
        for k in 0..p {
            g += gram[(j, k)] * b[k];
        }
        let v = if b[j] != 0.0 {
            (g + lambda * b[j].signum()).abs()
        } else {
            (g.abs() - lambda).max(0.0)
        };
        worst = worst.max(v);
    }
    worst
}

/// Objective `½ bᵀGb − cᵀb + λ‖b‖₁`.
pub fn objective(gram: &Matrix, c: &[f64], lambda: f64, b: &[f64]) -> f64 {
    let p = c.len();
    let mut quad = 0.0;
    for j in 0..p {
        for k in 0..p {
            quad += b[j] * gram[(j, k)] * b[k];
        }
    }
    let lin: f64 = (0..p).map(|j| c[j] * b[j]).sum();
    let l1: f64 = b.iter().map(|v| v.abs()).sum();
    0.5 * quad - lin + lambda * l1
}

pub fn lasso_gram(gram: &Matrix, c: &[f64], lambda: f64, opts: &CdOptions) -> Result<LassoFit> {
    let p = c.len();
    if gram.shape() != (p, p) {
        return Err(Error::dim(format!(
            "Gram is {:?}, linear term has length {p}",
            gram.shape()
        )));
    }
    if !(lambda >= 0.0) || !lambda.is_finite() {
        return Err(Error::param(format!("lambda {lambda} must be finite and >= 0")));
    }
    if c.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("lasso linear term"));
    }
    if let Some(j) = (0..p).find(|&j| !(gram[(j, j)] > 0.0)) {
        return Err(Error::Singular(format!("Gram diagonal entry {j} is not positive")));
    }
    let kkt_tol = opts.kkt_tol.unwrap_or(1e-8 * p.max(1) as f64);
    let mut b = vec![0.0; p];
    // grad = Gb − c, maintained incrementally
    let mut grad: Vec<f64> = c.iter().map(|v| -v).collect();
    let mut kkt = f64::INFINITY;
    for sweep in 1..=opts.max_sweeps {
        let mut max_change = 0.0_f64;
        for j in 0..p {
            let gjj = gram[(j, j)];
            let old = b[j];
            let z = gjj * old - grad[j];
            let new = soft_threshold(z, lambda) / gjj;
            let delta = new - old;
            if delta != 0.0 {
                b[j] = new;
                let col = gram.column(j);
                for (g, gk) in grad.iter_mut().zip(col.iter()) {
                    *g += gk * delta;
                }
                max_change = max_change.max(delta.abs());
            }
        }
        if max_change <= opts.step_tol {
            kkt = kkt_residual(gram, c, lambda, &b);
            if kkt <= kkt_tol {
                return Ok(LassoFit {
                    coef: b,
                    sweeps: sweep,
                    kkt_residual: kkt,
                });
            }
            // refresh the gradient to shed accumulated rounding
            for j in 0..p {
                grad[j] = -c[j] + (0..p).map(|k| gram[(j, k)] * b[k]).sum::<f64>();
            }
        }
    }
    if kkt.is_infinite() {
        kkt = kkt_residual(gram, c, lambda, &b);
    }
    Err(Error::NoConvergence {
        iterations: opts.max_sweeps,
        residual: kkt,
    })
}
