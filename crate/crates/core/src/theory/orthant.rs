//! Concentration of null signs under the orthogonal construction.
//!
//! Conditional on `η`, a null statistic `W_j = f(η)_j sign(ξ_j)` is positive
//! with probability 1/2 and pairs of them are correlated through the
//! normalized precision `Σ̃⁻¹`. The pairwise covariances follow from the
//! bivariate orthant probability.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::construct::construct_orthogonal;
use crate::datagen::{noise_vector, DesignEnsemble};
use crate::error::{Error, Result};
use crate::numerics::{chol_psd, eig_sym, Matrix, SymMatrix, PSD_TOL};
use crate::parallel::{map_indexed, Execution};
use crate::rng::{derive_seed, purpose, Gaussian};
use crate::stats::SplitSolver;

/// `(1 + 3π)/(2π) = 1/(2π) + 3/2`
pub const C0: f64 = 1.0 / (2.0 * PI) + 1.5;

/// `P(ξ_1 > 0, ξ_2 > 0) = 1/4 + arcsin(μ)/(2π)` for a standard bivariate
/// normal pair with correlation `μ`.
pub fn orthant_prob(mu: f64) -> Result<f64> {
    if !(-1.0..=1.0).contains(&mu) {
        return Err(Error::param(format!("correlation {mu} outside [-1, 1]")));
    }
    Ok(0.25 + mu.asin() / (2.0 * PI))
}

/// Gauss–Legendre nodes and weights on `[−1, 1]`.
pub fn gauss_legendre(order: usize) -> (Vec<f64>, Vec<f64>) {
    let mut nodes = vec![0.0; order];
    let mut weights = vec![0.0; order];
    let n = order as f64;
    for i in 0..order.div_ceil(2) {
        let mut x = (PI * (i as f64 + 0.75) / (n + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, x);
            for k in 2..=order {
                let kf = k as f64;
                let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
                p0 = p1;
                p1 = p2;
            }
            let pn = if order == 1 { x } else { p1 };
            let pm = if order == 1 { 1.0 } else { p0 };
            dp = n * (x * pn - pm) / (x * x - 1.0);
            let dx = pn / dp;
            x -= dx;
            if dx.abs() < 1e-15 {
                break;
            }
        }
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        nodes[i] = x;
        nodes[order - 1 - i] = -x;
        weights[i] = w;
        weights[order - 1 - i] = w;
    }
    (nodes, weights)
}

/// Orthant probability by composite Gauss–Legendre quadrature of the
/// bivariate normal density over `[0, 10]²`. Needs `|μ| < 1`.
pub fn orthant_prob_quadrature(mu: f64, panels: usize, order: usize) -> f64 {
    let (nodes, weights) = gauss_legendre(order);
    let h = 10.0 / panels as f64;
    let mut pts = Vec::with_capacity(panels * order);
    for k in 0..panels {
        for (x, w) in nodes.iter().zip(&weights) {
            pts.push((h * (k as f64 + (x + 1.0) / 2.0), w * h / 2.0));
        }
    }
    let det = 1.0 - mu * mu;
    let norm = 1.0 / (2.0 * PI * det.sqrt());
    let mut total = 0.0;
    for &(a, wa) in &pts {
        let mut row = 0.0;
        for &(b, wb) in &pts {
            row += wb * (-(a * a - 2.0 * mu * a * b + b * b) / (2.0 * det)).exp();
        }
        total += wa * row;
    }
    total * norm
}

/// `Cov(1{w_i ξ_i > 0}, 1{w_j ξ_j > 0}) = w_i w_j arcsin(μ)/(2π)`
pub fn sign_covariance(mu: f64, wi: f64, wj: f64) -> Result<f64> {
    Ok(wi * wj * (orthant_prob(mu)? - 0.25))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CovBoundCheck {
    pub evaluated: usize,
    pub violations: usize,
    /// `max(LHS − RHS)` over the grid; non-positive means no violation.
    pub max_violation: f64,
    pub pass: bool,
}

/// Checks `w_i w_j arcsin(μ)/(2π) ≤ w_i w_j μ/(2π) + 3μ²/2` on every grid
/// point and sign pair.
pub fn lemma_cov_bound_check(mu_grid: &[f64], w_pairs: &[(f64, f64)]) -> Result<CovBoundCheck> {
    let mut worst = f64::NEG_INFINITY;
    let mut violations = 0;
    for &mu in mu_grid {
        for &(wi, wj) in w_pairs {
            let lhs = sign_covariance(mu, wi, wj)?;
            let rhs = wi * wj * mu / (2.0 * PI) + 1.5 * mu * mu;
            let gap = lhs - rhs;
            if gap > 1e-12 {
                violations += 1;
            }
            worst = worst.max(gap);
        }
    }
    Ok(CovBoundCheck {
        evaluated: mu_grid.len() * w_pairs.len(),
        violations,
        max_violation: worst,
        pass: violations == 0,
    })
}

/// `μ_k = −1 + 2k/1000`, `k = 1..999`, and all four sign pairs.
pub fn default_cov_grid() -> (Vec<f64>, Vec<(f64, f64)>) {
    let grid = (1..1000).map(|k| -1.0 + 2.0 * k as f64 / 1000.0).collect();
    let pairs = vec![(1.0, 1.0), (1.0, -1.0), (-1.0, 1.0), (-1.0, -1.0)];
    (grid, pairs)
}

/// `D^{-1/2} Σ⁻¹ D^{-1/2}` with `D = diag(Σ⁻¹)`; here computed from `B`,
/// which has the same normalization.
pub fn normalized_precision(b: &SymMatrix) -> SymMatrix {
    let d: Vec<f64> = b.diagonal().iter().map(|v| 1.0 / v.sqrt()).collect();
    b.congruence_diag(&d)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ThmOrtRow {
    pub delta: f64,
    pub j: usize,
    pub lambda_max: f64,
    /// `(1 + 3π)λ_max/(πδ²j)`
    pub bound: f64,
    pub frequency: f64,
    pub se: f64,
    /// `frequency ≤ bound + 3·SE` when `bound < 1`; vacuous otherwise.
    pub pass: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct VarianceRow {
    pub j: usize,
    pub variance: f64,
    pub se: f64,
    /// `c₀ λ_max j`
    pub bound: f64,
    /// `2c₀ j`, meaningful when `Σ̃⁻¹` is diagonally dominant.
    pub refined_bound: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ThmOrtReport {
    pub trials: usize,
    pub diagonally_dominant: bool,
    pub rows: Vec<ThmOrtRow>,
    pub variance: Vec<VarianceRow>,
    pub pass: bool,
}

/// Conditional on one `η` drawn under the global null, simulates
/// `ξ ~ N(0, B)` for the orthogonal construction and counts the null signs of
/// `W = η ⊙ sign(ξ)` among the `j` largest `|η|`.
pub fn thm_ort_bound_check(
    design: &DesignEnsemble,
    trials: usize,
    deltas: &[f64],
    js: &[usize],
    seed: u64,
    mode: Execution,
) -> Result<ThmOrtReport> {
    let p = design.p;
    if let Some(&j) = js.iter().find(|&&j| j == 0 || j > p) {
        return Err(Error::param(format!("j = {j} outside 1..={p}")));
    }
    if deltas.iter().any(|d| !(*d > 0.0 && *d < 1.0)) {
        return Err(Error::param("delta must lie in (0, 1)"));
    }
    let pk = construct_orthogonal(design)?;
    let solver = SplitSolver::new(&design.x, &pk.xt)?;
    let y = noise_vector(design.n, derive_seed(seed, &[purpose::NOISE]));
    let eta = solver.split(&y)?.eta;
    let mut order: Vec<usize> = (0..p).collect();
    order.sort_by(|&a, &b| eta[b].abs().total_cmp(&eta[a].abs()));

    let tilde = normalized_precision(&pk.b);
    let dominant = (0..p).all(|i| (0..p).filter(|&k| k != i).map(|k| tilde.get(i, k).abs()).sum::<f64>() < 1.0);
    let lambda: Vec<f64> = js
        .iter()
        .map(|&j| eig_sym(&tilde.principal(&order[..j])).map(|e| e.values[0]))
        .collect::<Result<_>>()?;

    // ξ = Lz with LLᵀ = B; only the top max(j) coordinates are needed
    let l: Matrix = chol_psd(&pk.b, PSD_TOL)?;
    let jmax = *js.iter().max().unwrap_or(&0);
    let rows_l: Vec<Vec<f64>> = order[..jmax]
        .iter()
        .map(|&r| (0..=r).map(|c| l[(r, c)]).collect())
        .collect();
    let eta_sign: Vec<bool> = order[..jmax].iter().map(|&r| eta[r] > 0.0).collect();

    const CHUNK: usize = 500;
    let chunks = trials.div_ceil(CHUNK);
    // per chunk: exceedance counts per (delta, j), and Σv, Σv², Σv⁴-style moments per j
    let per_chunk = map_indexed(mode, chunks, |c| {
        let mut g = Gaussian::from_path(seed, &[purpose::MONTE_CARLO, 7, c as u64]);
        let count = CHUNK.min(trials - c * CHUNK);
        let mut exceed = vec![0usize; deltas.len() * js.len()];
        let mut moments = vec![[0.0f64; 4]; js.len()];
        let mut z = vec![0.0; p];
        let mut positive = vec![false; jmax];
        for _ in 0..count {
            g.fill(&mut z);
            for (k, row) in rows_l.iter().enumerate() {
                let xi: f64 = row.iter().zip(&z).map(|(a, b)| a * b).sum();
                positive[k] = (xi > 0.0) == eta_sign[k];
            }
            for (jj, &j) in js.iter().enumerate() {
                let vp = positive[..j].iter().filter(|b| **b).count() as f64;
                let vm = j as f64 - vp;
                for (dd, &d) in deltas.iter().enumerate() {
                    if vp * (1.0 - d) >= (1.0 + d) * vm {
                        exceed[dd * js.len() + jj] += 1;
                    }
                }
                let m = &mut moments[jj];
                m[0] += vp;
                m[1] += vp * vp;
                m[2] += vp * vp * vp;
                m[3] += vp * vp * vp * vp;
            }
        }
        (exceed, moments)
    });
    let mut exceed = vec![0usize; deltas.len() * js.len()];
    let mut moments = vec![[0.0f64; 4]; js.len()];
    for (e, m) in &per_chunk {
        for (a, b) in exceed.iter_mut().zip(e) {
            *a += b;
        }
        for (a, b) in moments.iter_mut().zip(m) {
            for k in 0..4 {
                a[k] += b[k];
            }
        }
    }

    let nf = trials as f64;
    let mut rows = Vec::new();
    for (dd, &delta) in deltas.iter().enumerate() {
        for (jj, &j) in js.iter().enumerate() {
            let frequency = exceed[dd * js.len() + jj] as f64 / nf;
            let se = (frequency * (1.0 - frequency) / nf).sqrt();
            let bound = (1.0 + 3.0 * PI) * lambda[jj] / (PI * delta * delta * j as f64);
            rows.push(ThmOrtRow {
                delta,
                j,
                lambda_max: lambda[jj],
                bound,
                frequency,
                se,
                pass: bound >= 1.0 || frequency <= bound + 3.0 * se,
            });
        }
    }
    let variance = js
        .iter()
        .enumerate()
        .map(|(jj, &j)| {
            let [s1, s2, s3, s4] = moments[jj];
            let mean = s1 / nf;
            let var = s2 / nf - mean * mean;
            // fourth central moment for the standard error of the variance
            let m4 = s4 / nf - 4.0 * mean * s3 / nf + 6.0 * mean * mean * s2 / nf - 3.0 * mean.powi(4);
            let se = ((m4 - var * var).max(0.0) / nf).sqrt();
            let bound = C0 * lambda[jj] * j as f64;
            let refined_bound = 2.0 * C0 * j as f64;
            let mut pass = var <= bound + 3.0 * se;
            if dominant {
                pass &= var <= refined_bound + 3.0 * se;
            }
            VarianceRow {
                j,
                variance: var,
                se,
                bound,
                refined_bound,
                pass,
            }
        })
        .collect::<Vec<_>>();
    let pass = rows.iter().all(|r| r.pass) && variance.iter().all(|v| v.pass);
    Ok(ThmOrtReport {
        trials,
        diagonally_dominant: dominant,
        rows,
        variance,
        pass,
    })
}
