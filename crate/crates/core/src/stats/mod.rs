//! Least-squares split, half-Lasso fit and feature statistics.
//!
//! With `A₊ = (X + X̃)/2` and `A₋ = (X − X̃)/2`, the pseudo-knockoff condition
//! makes `A₊ ⟂ A₋`, so the regression of `y` on `[X X̃]` splits into two
//! independent least-squares problems for `η = β̂ + β̃` and `ξ = β̂ − β̃`. The
//! half-Lasso penalizes only `β̂ + β̃`; its solution keeps `β̂ − β̃ = ξ` and
//! solves a Lasso on `A₊` for the sum.

pub mod lasso;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{Matrix, SpdFactor, SymMatrix, Vector};
use lasso::{lasso_gram, CdOptions};

/// Default multiplier in `λ = μ‖Uᵀy‖/√(n − 2p)`.
pub const DEFAULT_MU: f64 = 0.75;

/// Knockoff-baseline masking floor: features with `s_i` below it get `W = 0`.
pub const DEFAULT_MASK_FLOOR: f64 = 0.001;

/// Which feature statistic to form.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StatKind {
    /// `W_j = (β̂_j + β̃_j)·sign(β̂_j − β̃_j)`
    W1,
    /// `W_j = max(|β̂_j|, |β̃_j|)·sign(|β̂_j| − |β̃_j|)`
    W2,
    /// `W1` applied to the unpenalized split, `β̂ + β̃ = η`.
    LeastSquares,
    /// Joint Lasso on `[X X̃]` with the `W2` form (knockoff baselines).
    LassoSignMax,
}

impl StatKind {
    pub fn name(self) -> &'static str {
        match self {
            StatKind::W1 => "w1",
            StatKind::W2 => "w2",
            StatKind::LeastSquares => "least_squares",
            StatKind::LassoSignMax => "lasso_signmax",
        }
    }
}

impl std::fmt::Display for StatKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for StatKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "w1" | "W1" => Ok(StatKind::W1),
            "w2" | "W2" => Ok(StatKind::W2),
            "least_squares" | "ls" => Ok(StatKind::LeastSquares),
            "lasso_signmax" | "lasso" => Ok(StatKind::LassoSignMax),
            _ => Err(Error::param(format!("unknown statistic kind {s:?}"))),
        }
    }
}

/// `η`, `ξ` and the residual of `y` on `[X X̃]`.
#[derive(Debug, Clone)]
pub struct SplitCoefficients {
    pub eta: Vec<f64>,
    pub xi: Vec<f64>,
    /// `‖Uᵀy‖₂`, the norm of the residual of `y` on `[X X̃]`.
    pub residual_norm: f64,
    /// `n − 2p`
    pub dof: usize,
}

/// Factorizations of `A₊ᵀA₊` and `A₋ᵀA₋`, reused across responses.
#[derive(Debug, Clone)]
pub struct SplitSolver {
    a_plus: Matrix,
    a_minus: Matrix,
    gram_plus: Matrix,
    f_plus: SpdFactor,
    f_minus: SpdFactor,
    n: usize,
    p: usize,
}

impl SplitSolver {
    pub fn new(x: &Matrix, xt: &Matrix) -> Result<Self> {
        if x.shape() != xt.shape() {
            return Err(Error::dim("X and X̃ shapes differ"));
        }
        let (n, p) = x.shape();
        if n <= 2 * p {
            return Err(Error::dim(format!("need n > 2p, got n = {n}, p = {p}")));
        }
        let a_plus = (x + xt) * 0.5;
        let a_minus = (x - xt) * 0.5;
        let gp = SymMatrix::gram(&a_plus);
        let gm = SymMatrix::gram(&a_minus);
        let f_plus = SpdFactor::new(&gp)
            .map_err(|_| Error::Singular("(X + X̃) is rank deficient".into()))?;
        let f_minus = SpdFactor::new(&gm)
            .map_err(|_| Error::Singular("(X − X̃) is rank deficient".into()))?;
        Ok(Self {
            a_plus,
            a_minus,
            gram_plus: gp.into_inner(),
            f_plus,
            f_minus,
            n,
            p,
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn p(&self) -> usize {
        self.p
    }

    pub fn a_plus(&self) -> &Matrix {
        &self.a_plus
    }

    pub fn a_minus(&self) -> &Matrix {
        &self.a_minus
    }

    /// `A₊ᵀA₊`
    pub fn gram_plus(&self) -> &Matrix {
        &self.gram_plus
    }

    pub fn split(&self, y: &Vector) -> Result<SplitCoefficients> {
        if y.len() != self.n {
            return Err(Error::dim(format!("y has length {}, expected {}", y.len(), self.n)));
        }
        if y.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("response"));
        }
        let eta = self.f_plus.solve_vec(&self.a_plus.tr_mul(y));
        let xi = self.f_minus.solve_vec(&self.a_minus.tr_mul(y));
        let resid = y - &self.a_plus * &eta - &self.a_minus * &xi;
        Ok(SplitCoefficients {
            eta: eta.iter().copied().collect(),
            xi: xi.iter().copied().collect(),
            residual_norm: resid.norm(),
            dof: self.n - 2 * self.p,
        })
    }

    /// Half-Lasso: returns `(β̂ + β̃, β̂ − β̃)` and the coordinate-descent fit.
    pub fn half_lasso(&self, split: &SplitCoefficients, lambda: f64) -> Result<HalfLassoFit> {
        let eta = Vector::from_column_slice(&split.eta);
        let c = &self.gram_plus * eta;
        let fit = lasso_gram(&self.gram_plus, c.as_slice(), lambda, &CdOptions::default())?;
        Ok(HalfLassoFit {
            sum_coef: fit.coef,
            diff_coef: split.xi.clone(),
            sweeps: fit.sweeps,
            kkt_residual: fit.kkt_residual,
        })
    }

    /// Half-Lasso objective `½‖y − Xβ̂ − X̃β̃‖² + λ‖β̂ + β̃‖₁` written in
    /// `(sum, diff)` coordinates.
    pub fn half_objective(&self, y: &Vector, sum: &[f64], diff: &[f64], lambda: f64) -> f64 {
        let r = y - &self.a_plus * Vector::from_column_slice(sum) - &self.a_minus * Vector::from_column_slice(diff);
        0.5 * r.norm_squared() + lambda * sum.iter().map(|v| v.abs()).sum::<f64>()
    }
}

#[derive(Debug, Clone)]
pub struct HalfLassoFit {
    pub sum_coef: Vec<f64>,
    pub diff_coef: Vec<f64>,
    pub sweeps: usize,
    pub kkt_residual: f64,
}

/// Signed per-feature score; large positive values point to non-nulls.
#[derive(Debug, Clone)]
pub struct FeatureStatistics {
    pub w: Vec<f64>,
    pub kind: StatKind,
    pub lambda: f64,
    pub sum_coef: Vec<f64>,
    pub diff_coef: Vec<f64>,
    pub sweeps: usize,
}

pub fn least_squares_split(x: &Matrix, xt: &Matrix, y: &Vector) -> Result<SplitCoefficients> {
    SplitSolver::new(x, xt)?.split(y)
}

/// `λ = μ‖Uᵀy‖/√(n − 2p)`.
pub fn default_lambda(split: &SplitCoefficients, mu: f64) -> Result<f64> {
    if split.dof == 0 {
        return Err(Error::param("n − 2p must be positive"));
    }
    Ok(mu * split.residual_norm / (split.dof as f64).sqrt())
}

pub fn half_lasso(x: &Matrix, xt: &Matrix, y: &Vector, lambda: f64) -> Result<(Vec<f64>, Vec<f64>)> {
    let solver = SplitSolver::new(x, xt)?;
    let split = solver.split(y)?;
    let fit = solver.half_lasso(&split, lambda)?;
    Ok((fit.sum_coef, fit.diff_coef))
}

#[inline]
fn sign(v: f64) -> f64 {
    if v > 0.0 {
        1.0
    } else if v < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// Forms `W` from the sum and difference coefficients.
pub fn make_statistic(sum: &[f64], diff: &[f64], kind: StatKind) -> Result<Vec<f64>> {
    if sum.len() != diff.len() {
        return Err(Error::dim("sum and diff coefficient lengths differ"));
    }
    let w = sum
        .iter()
        .zip(diff)
        .map(|(&s, &d)| match kind {
            StatKind::W1 | StatKind::LeastSquares => s * sign(d),
            StatKind::W2 | StatKind::LassoSignMax => {
                let hat = 0.5 * (s + d);
                let tilde = 0.5 * (s - d);
                hat.abs().max(tilde.abs()) * sign(hat.abs() - tilde.abs())
            }
        })
        .collect();
    Ok(w)
}

/// Half-Lasso statistic (`W1` or `W2`) at penalty `lambda`.
pub fn half_lasso_statistic(
    solver: &SplitSolver,
    split: &SplitCoefficients,
    lambda: f64,
    kind: StatKind,
) -> Result<FeatureStatistics> {
    if !matches!(kind, StatKind::W1 | StatKind::W2) {
        return Err(Error::param(format!("{kind} is not a half-Lasso statistic")));
    }
    let fit = solver.half_lasso(split, lambda)?;
    let w = make_statistic(&fit.sum_coef, &fit.diff_coef, kind)?;
    Ok(FeatureStatistics {
        w,
        kind,
        lambda,
        sum_coef: fit.sum_coef,
        diff_coef: fit.diff_coef,
        sweeps: fit.sweeps,
    })
}

/// `W_j = η_j·sign(ξ_j)`.
pub fn least_squares_statistic(split: &SplitCoefficients) -> FeatureStatistics {
    let w = make_statistic(&split.eta, &split.xi, StatKind::LeastSquares).expect("equal lengths");
    FeatureStatistics {
        w,
        kind: StatKind::LeastSquares,
        lambda: 0.0,
        sum_coef: split.eta.clone(),
        diff_coef: split.xi.clone(),
        sweeps: 0,
    }
}

/// Joint Lasso on `[X X̃_P]`, `P = {i : s_i ≥ mask_floor}`, with the
/// sign-max statistic on `P` and `W = 0` elsewhere.
pub fn lasso_signmax_baseline(
    x: &Matrix,
    xt: &Matrix,
    y: &Vector,
    lambda: f64,
    s: &[f64],
    mask_floor: f64,
) -> Result<FeatureStatistics> {
    let (n, p) = x.shape();
    if xt.shape() != (n, p) || s.len() != p || y.len() != n {
        return Err(Error::dim("lasso baseline inputs have inconsistent shapes"));
    }
    let kept: Vec<usize> = (0..p).filter(|&i| s[i] >= mask_floor).collect();
    let q = p + kept.len();
    let mut z = Matrix::zeros(n, q);
    z.columns_mut(0, p).copy_from(x);
    for (a, &i) in kept.iter().enumerate() {
        z.column_mut(p + a).copy_from(&xt.column(i));
    }
    let gram = z.tr_mul(&z);
    let c = z.tr_mul(y);
    let fit = lasso_gram(&gram, c.as_slice(), lambda, &CdOptions::default())?;
    let hat = &fit.coef[..p];
    let mut tilde = vec![0.0; p];
    for (a, &i) in kept.iter().enumerate() {
        tilde[i] = fit.coef[p + a];
    }
    let mut mask = vec![false; p];
    for &i in &kept {
        mask[i] = true;
    }
    let sum: Vec<f64> = (0..p).map(|i| hat[i] + tilde[i]).collect();
    let diff: Vec<f64> = (0..p).map(|i| hat[i] - tilde[i]).collect();
    let mut w = make_statistic(&sum, &diff, StatKind::LassoSignMax)?;
    for i in 0..p {
        if !mask[i] {
            w[i] = 0.0;
        }
    }
    Ok(FeatureStatistics {
        w,
        kind: StatKind::LassoSignMax,
        lambda,
        sum_coef: sum,
        diff_coef: diff,
        sweeps: fit.sweeps,
    })
}
