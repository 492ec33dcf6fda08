//! Semidefinite programs with a diagonal decision variable.
//!
//! Both problems needed by the constructions have the form
//!
//! ```text
//! minimize  cᵀd   subject to  σ·(diag(d) − M) ⪰ 0,  lo ≤ d ≤ hi
//! ```
//!
//! with `σ = +1` for the diagonal majorizer and `σ = −1` for the knockoff
//! `s`-vector (`diag(s) ⪯ 2Σ`). They are solved with a primal log-barrier
//! method: damped Newton centering on
//! `t·cᵀd − log det(σ(diag(d) − M)) − Σ log(d − lo) − Σ log(hi − d)`,
//! followed by `t ← 10t` until the duality gap `ν/t` is negligible, where `ν`
//! counts the barrier terms. Every iterate is strictly feasible.

use nalgebra::Cholesky;

use crate::error::{Error, Result};
use crate::numerics::{Matrix, SymMatrix, Vector};

/// Solution of a diagonal LMI program.
#[derive(Debug, Clone)]
pub struct DiagSdpSolution {
    pub d: Vec<f64>,
    pub objective: f64,
    /// Upper bound on `objective − optimum` from the barrier duality gap.
    pub gap: f64,
    pub newton_steps: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Side {
    /// `diag(d) − M ⪰ 0`
    Above,
    /// `M − diag(d) ⪰ 0`
    Below,
}

struct Problem<'a> {
    m: &'a SymMatrix,
    side: Side,
    cost: f64,
    lo: f64,
    hi: Option<f64>,
}

const MAX_NEWTON: usize = 200;
const MAX_OUTER: usize = 40;

impl Problem<'_> {
    fn nu(&self) -> f64 {
        let p = self.m.order() as f64;
        if self.hi.is_some() {
            3.0 * p
        } else {
            2.0 * p
        }
    }

    fn slack(&self, d: &[f64]) -> Matrix {
        let p = d.len();
        let mut s = match self.side {
            Side::Above => -self.m.as_matrix(),
            Side::Below => self.m.as_matrix().clone(),
        };
        for i in 0..p {
            match self.side {
                Side::Above => s[(i, i)] += d[i],
                Side::Below => s[(i, i)] -= d[i],
            }
        }
        s
    }

    fn in_box(&self, d: &[f64]) -> bool {
        d.iter()
            .all(|&v| v > self.lo && self.hi.is_none_or(|h| v < h))
    }

    /// Barrier value, or `None` outside the domain. Also returns the slack
    /// factorization for reuse.
    fn value(&self, t: f64, d: &[f64]) -> Option<(f64, Cholesky<f64, nalgebra::Dyn>)> {
        if !self.in_box(d) {
            return None;
        }
        let chol = self.slack(d).cholesky()?;
        let l = chol.l_dirty();
        let logdet: f64 = (0..d.len()).map(|i| 2.0 * l[(i, i)].ln()).sum();
        let mut v = t * self.cost * d.iter().sum::<f64>() - logdet;
        for &x in d {
            v -= (x - self.lo).ln();
            if let Some(h) = self.hi {
                v -= (h - x).ln();
            }
        }
        v.is_finite().then_some((v, chol))
    }

    fn solve(&self, start: Vec<f64>) -> Result<DiagSdpSolution> {
        let p = start.len();
        let mut d = start;
        let scale = 1.0 + self.m.max_abs();
        let (_, mut chol) = self
            .value(1.0, &d)
            .ok_or_else(|| Error::param("barrier start point is not strictly feasible"))?;
        let nu = self.nu();
        let obj0: f64 = self.cost * d.iter().sum::<f64>();
        let mut t = nu / obj0.abs().max(1e-3 * scale);
        let mut steps = 0usize;
        for _outer in 0..MAX_OUTER {
            // centering
            for _ in 0..MAX_NEWTON {
                let sinv = chol.inverse();
                let sign = match self.side {
                    Side::Above => 1.0,
                    Side::Below => -1.0,
                };
                let mut g = Vector::zeros(p);
                let mut h = Matrix::zeros(p, p);
                for i in 0..p {
                    let lo_gap = d[i] - self.lo;
                    g[i] = t * self.cost - sign * sinv[(i, i)] - 1.0 / lo_gap;
                    h[(i, i)] += 1.0 / (lo_gap * lo_gap);
                    if let Some(hi) = self.hi {
                        let hi_gap = hi - d[i];
                        g[i] += 1.0 / hi_gap;
                        h[(i, i)] += 1.0 / (hi_gap * hi_gap);
                    }
                    for j in 0..p {
                        h[(i, j)] += sinv[(i, j)] * sinv[(i, j)];
                    }
                }
                let step = match h.clone().cholesky() {
                    Some(hc) => -hc.solve(&g),
                    None => {
                        // diagonal fallback keeps the direction a descent direction
                        Vector::from_fn(p, |i, _| -g[i] / h[(i, i)].max(f64::MIN_POSITIVE))
                    }
                };
                let decrement = -g.dot(&step);
                if !(decrement > 1e-12) {
                    break;
                }
                let (f0, _) = self.value(t, &d).expect("iterate stays feasible");
                let mut alpha = 1.0;
                // largest step keeping the box constraints strict
                for i in 0..p {
                    if step[i] < 0.0 {
                        alpha = f64::min(alpha, 0.99 * (self.lo - d[i]) / step[i]);
                    } else if let (Some(hi), true) = (self.hi, step[i] > 0.0) {
                        alpha = f64::min(alpha, 0.99 * (hi - d[i]) / step[i]);
                    }
                }
                let mut accepted = None;
                for _ in 0..60 {
                    let trial: Vec<f64> = (0..p).map(|i| d[i] + alpha * step[i]).collect();
                    if let Some((f1, c1)) = self.value(t, &trial) {
                        if f1 <= f0 - 0.25 * alpha * decrement {
                            accepted = Some((trial, c1));
                            break;
                        }
                    }
                    alpha *= 0.5;
                }
                steps += 1;
                match accepted {
                    Some((trial, c1)) => {
                        d = trial;
                        chol = c1;
                    }
                    None => break,
                }
                if decrement < 1e-10 {
                    break;
                }
            }
            let objective = self.cost * d.iter().sum::<f64>();
            let gap = nu / t;
            if gap <= 1e-10 * (1.0 + objective.abs()) {
                return Ok(DiagSdpSolution {
                    d,
                    objective,
                    gap,
                    newton_steps: steps,
                });
            }
            t *= 10.0;
        }
        Err(Error::NoConvergence {
            iterations: steps,
            residual: nu / t,
        })
    }
}

/// Gershgorin point `d_i = max(floor, M_ii + Σ_{j≠i} |M_ij|)`. Always feasible
/// for the majorizer problem.
pub fn gershgorin_majorizer(m: &SymMatrix, floor: f64) -> Vec<f64> {
    let p = m.order();
    (0..p)
        .map(|i| {
            let off: f64 = (0..p).filter(|&j| j != i).map(|j| m.get(i, j).abs()).sum();
            floor.max(m.get(i, i) + off)
        })
        .collect()
}

/// Minimum-trace diagonal `d` with `diag(d) ⪰ M` and `d ≥ floor`.
///
/// Returns whichever of the barrier solution and the Gershgorin point has the
/// smaller trace, so the result is never worse than the fallback.
pub fn solve_diag_majorizer(m: &SymMatrix, floor: f64) -> Result<DiagSdpSolution> {
    if !(floor >= 0.0) || !floor.is_finite() {
        return Err(Error::param(format!("majorizer floor {floor} must be finite and >= 0")));
    }
    crate::numerics::check_finite(m.as_matrix(), "majorizer input")?;
    let fallback = gershgorin_majorizer(m, floor);
    let fallback_trace: f64 = fallback.iter().sum();
    let p = m.order();
    // diagonal M needs no solver
    let diagonal = (0..p).all(|i| (0..p).all(|j| i == j || m.get(i, j) == 0.0));
    if diagonal {
        return Ok(DiagSdpSolution {
            d: fallback,
            objective: fallback_trace,
            gap: 0.0,
            newton_steps: 0,
        });
    }
    let margin = 1e-2 * (1.0 + m.max_abs());
    let start: Vec<f64> = fallback.iter().map(|v| v + margin).collect();
    let problem = Problem {
        m,
        side: Side::Above,
        cost: 1.0,
        lo: floor,
        hi: None,
    };
    match problem.solve(start) {
        Ok(sol) if sol.objective <= fallback_trace => Ok(sol),
        _ => Ok(DiagSdpSolution {
            d: fallback,
            objective: fallback_trace,
            gap: f64::INFINITY,
            newton_steps: 0,
        }),
    }
}

/// Maximizes `Σ s_j` subject to `0 ≤ s ≤ 1` and `diag(s) ⪯ 2Σ`.
///
/// The returned `objective` is `Σ s_j` (not its negation).
pub fn solve_knockoff_sdp(sigma: &SymMatrix) -> Result<DiagSdpSolution> {
    let lmin = sigma.min_eigenvalue()?;
    if !(lmin > 0.0) {
        return Err(Error::param(format!(
            "Gram matrix is not positive definite (smallest eigenvalue {lmin:e})"
        )));
    }
    let two_sigma = sigma.scaled(2.0);
    let p = sigma.order();
    let s0 = 0.5 * f64::min(1.0, 2.0 * lmin);
    let problem = Problem {
        m: &two_sigma,
        side: Side::Below,
        cost: -1.0,
        lo: 0.0,
        hi: Some(1.0),
    };
    let mut sol = problem.solve(vec![s0; p])?;
    sol.objective = -sol.objective;
    Ok(sol)
}
