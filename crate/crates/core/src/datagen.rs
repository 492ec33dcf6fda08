//! Covariance models, Gaussian designs, sparse signals and responses.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{chol_psd, eig_sym, Matrix, SymMatrix, Vector, PSD_TOL};
use crate::rng::{purpose, stream, Gaussian};

/// Population covariance of the design rows.
///
/// The `precision_*` kinds specify `Σ⁻¹` directly; `build_sigma` inverts it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum CovarianceModel {
    Identity,
    /// `Σ_ij = ρ^{|i−j|}`.
    Ar { rho: f64 },
    /// Consecutive groups of `group_size` features; `Σ_ij = ρ` within a group
    /// and `between·ρ` across groups.
    Group {
        #[serde(default = "default_group_size")]
        group_size: usize,
        rho: f64,
        #[serde(default)]
        between: f64,
    },
    /// Block-diagonal precision, blocks of `block` with unit diagonal and `ρ`
    /// off the diagonal.
    PrecisionA {
        rho: f64,
        #[serde(default = "default_group_size")]
        block: usize,
    },
    /// `(Σ⁻¹)_ij = ρ^{|i−j|}`.
    PrecisionB { rho: f64 },
    /// `(Σ⁻¹)_ii = 1`, `(Σ⁻¹)_ij = ρ`.
    PrecisionC { rho: f64 },
}

fn default_group_size() -> usize {
    5
}

impl CovarianceModel {
    /// Short label used in file names and reports.
    pub fn label(&self) -> String {
        match self {
            CovarianceModel::Identity => "identity".into(),
            CovarianceModel::Ar { rho } => format!("ar({rho})"),
            CovarianceModel::Group {
                group_size,
                rho,
                between,
            } => format!("group(size={group_size},rho={rho},between={between})"),
            CovarianceModel::PrecisionA { rho, block } => format!("precision_a(rho={rho},block={block})"),
            CovarianceModel::PrecisionB { rho } => format!("precision_b({rho})"),
            CovarianceModel::PrecisionC { rho } => format!("precision_c({rho})"),
        }
    }

    /// Natural feature grouping of the model, if it has one.
    pub fn natural_groups(&self, p: usize) -> Option<Vec<Vec<usize>>> {
        match self {
            CovarianceModel::Group { group_size, .. } | CovarianceModel::PrecisionA { block: group_size, .. } => {
                Some(contiguous_groups(p, *group_size))
            }
            _ => None,
        }
    }

    /// Returns a copy with the correlation parameter replaced.
    pub fn with_rho(&self, value: f64) -> CovarianceModel {
        let mut out = self.clone();
        match &mut out {
            CovarianceModel::Identity => {}
            CovarianceModel::Ar { rho }
            | CovarianceModel::Group { rho, .. }
            | CovarianceModel::PrecisionA { rho, .. }
            | CovarianceModel::PrecisionB { rho }
            | CovarianceModel::PrecisionC { rho } => *rho = value,
        }
        out
    }
}

/// Consecutive index blocks `{0..size}, {size..2size}, ...`; the last block may be short.
pub fn contiguous_groups(p: usize, size: usize) -> Vec<Vec<usize>> {
    let size = size.max(1);
    (0..p).step_by(size).map(|s| (s..(s + size).min(p)).collect()).collect()
}

fn check_rho(rho: f64, lo: f64, what: &str) -> Result<()> {
    if !rho.is_finite() || rho < lo || rho >= 1.0 {
        return Err(Error::param(format!("{what}: rho = {rho} outside [{lo}, 1)")));
    }
    Ok(())
}

fn require_pd(m: SymMatrix, what: &str) -> Result<SymMatrix> {
    let eig = eig_sym(&m)?;
    let lmin = *eig.values.last().expect("p >= 1");
    if !(lmin > 1e-12 * eig.values[0].abs().max(1.0)) {
        return Err(Error::param(format!(
            "{what} is not positive definite (smallest eigenvalue {lmin:e})"
        )));
    }
    Ok(m)
}

/// Population covariance `Σ` of dimension `p`.
pub fn build_sigma(model: &CovarianceModel, p: usize) -> Result<SymMatrix> {
    if p == 0 {
        return Err(Error::param("p must be positive"));
    }
    match *model {
        CovarianceModel::Identity => Ok(SymMatrix::identity(p)),
        CovarianceModel::Ar { rho } => {
            check_rho(rho, 0.0, "ar")?;
            let m = SymMatrix::from_lower_fn(p, |i, j| rho.powi((i - j) as i32));
            require_pd(m, "ar covariance")
        }
        CovarianceModel::Group {
            group_size,
            rho,
            between,
        } => {
            if group_size == 0 {
                return Err(Error::param("group_size must be positive"));
            }
            if !between.is_finite() || !(0.0..=1.0).contains(&between) {
                return Err(Error::param(format!("between-group factor {between} outside [0, 1]")));
            }
            check_rho(rho, 0.0, "group")?;
            let m = SymMatrix::from_lower_fn(p, |i, j| {
                if i == j {
                    1.0
                } else if i / group_size == j / group_size {
                    rho
                } else {
                    between * rho
                }
            });
            require_pd(m, "group covariance")
        }
        CovarianceModel::PrecisionA { rho, block } => {
            if block == 0 {
                return Err(Error::param("precision block size must be positive"));
            }
            check_rho(rho, -1.0 / (block.max(2) - 1) as f64, "precision_a")?;
            let prec = SymMatrix::from_lower_fn(p, |i, j| {
                if i == j {
                    1.0
                } else if i / block == j / block {
                    rho
                } else {
                    0.0
                }
            });
            invert_precision(prec, "precision_a")
        }
        CovarianceModel::PrecisionB { rho } => {
            check_rho(rho, 0.0, "precision_b")?;
            let prec = SymMatrix::from_lower_fn(p, |i, j| rho.powi((i - j) as i32));
            invert_precision(prec, "precision_b")
        }
        CovarianceModel::PrecisionC { rho } => {
            let lo = if p > 1 { -1.0 / (p - 1) as f64 } else { -1.0 };
            if rho <= lo {
                return Err(Error::param(format!(
                    "precision_c: rho = {rho} must exceed -1/(p-1) = {lo}"
                )));
            }
            check_rho(rho, lo, "precision_c")?;
            let prec = SymMatrix::from_lower_fn(p, |i, j| if i == j { 1.0 } else { rho });
            invert_precision(prec, "precision_c")
        }
    }
}

fn invert_precision(prec: SymMatrix, what: &str) -> Result<SymMatrix> {
    let prec = require_pd(prec, what)?;
    prec.inverse_spd()
}

/// Normalized Gaussian design and its Gram matrix.
#[derive(Debug, Clone)]
pub struct DesignEnsemble {
    pub x: Matrix,
    /// `XᵀX`
    pub sigma: SymMatrix,
    pub n: usize,
    pub p: usize,
    pub seed: u64,
}

impl DesignEnsemble {
    /// Wraps a user-supplied design. With `normalize` each column is scaled to
    /// unit Euclidean norm.
    pub fn from_matrix(mut x: Matrix, normalize: bool, seed: u64) -> Result<Self> {
        crate::numerics::check_finite(&x, "design matrix")?;
        let (n, p) = x.shape();
        if p == 0 {
            return Err(Error::dim("design has no columns"));
        }
        if n <= 2 * p {
            return Err(Error::dim(format!("need n > 2p, got n = {n}, p = {p}")));
        }
        if normalize {
            normalize_columns(&mut x)?;
        }
        let sigma = SymMatrix::gram(&x);
        Ok(Self { x, sigma, n, p, seed })
    }
}

fn normalize_columns(x: &mut Matrix) -> Result<()> {
    for (j, mut col) in x.column_iter_mut().enumerate() {
        let norm = col.norm();
        if !(norm > 0.0) {
            return Err(Error::Singular(format!("column {j} of the design is zero")));
        }
        col.unscale_mut(norm);
    }
    Ok(())
}

/// Draws `n` rows from `N(0, Σ)` and normalizes the columns.
pub fn sample_design(model: &CovarianceModel, n: usize, p: usize, seed: u64) -> Result<DesignEnsemble> {
    if n <= 2 * p {
        return Err(Error::dim(format!("need n > 2p, got n = {n}, p = {p}")));
    }
    let sigma = build_sigma(model, p)?;
    let l = chol_psd(&sigma, PSD_TOL)?;
    let mut z = Matrix::zeros(n, p);
    Gaussian::from_path(seed, &[purpose::DESIGN]).fill(z.as_mut_slice());
    let x = z * l.transpose();
    DesignEnsemble::from_matrix(x, true, seed)
}

/// Sparse coefficient vector with entries in `{0, ±A}`.
#[derive(Debug, Clone, PartialEq)]
pub struct SignalSpec {
    pub k: usize,
    pub amplitude: f64,
    pub beta: Vec<f64>,
    /// Indices with `β_j = 0`, ascending.
    pub nulls: Vec<usize>,
}

impl SignalSpec {
    pub fn from_beta(beta: Vec<f64>) -> Self {
        let nulls: Vec<usize> = (0..beta.len()).filter(|&j| beta[j] == 0.0).collect();
        let k = beta.len() - nulls.len();
        let amplitude = beta.iter().fold(0.0_f64, |a, b| a.max(b.abs()));
        Self {
            k,
            amplitude,
            beta,
            nulls,
        }
    }

    pub fn is_null(&self, j: usize) -> bool {
        self.beta[j] == 0.0
    }
}

/// Uniformly random support of size `k` with i.i.d. random signs.
pub fn sample_signal(p: usize, k: usize, amplitude: f64, seed: u64) -> Result<SignalSpec> {
    if k > p {
        return Err(Error::param(format!("sparsity k = {k} exceeds p = {p}")));
    }
    if !(amplitude >= 0.0) || !amplitude.is_finite() {
        return Err(Error::param(format!("amplitude {amplitude} must be finite and non-negative")));
    }
    let mut rng = stream(seed, &[purpose::SIGNAL]);
    let support = rand::seq::index::sample(&mut rng, p, k);
    let mut beta = vec![0.0; p];
    for j in support.iter() {
        beta[j] = if rng.random::<bool>() { amplitude } else { -amplitude };
    }
    // A = 0 leaves no non-null features
    let mut spec = SignalSpec::from_beta(beta);
    spec.amplitude = amplitude;
    Ok(spec)
}

/// The standard normal noise vector used by [`sample_response`] for `seed`.
pub fn noise_vector(n: usize, seed: u64) -> Vector {
    Vector::from_vec(Gaussian::from_path(seed, &[purpose::NOISE]).vector(n))
}

/// `y = Xβ + ε` with `ε ~ N(0, I_n)` drawn from `seed`.
pub fn sample_response(x: &Matrix, beta: &[f64], seed: u64) -> Result<Vector> {
    let mut y = noiseless_response(x, beta)?;
    y += noise_vector(x.nrows(), seed);
    Ok(y)
}

/// `y = Xβ` exactly.
pub fn noiseless_response(x: &Matrix, beta: &[f64]) -> Result<Vector> {
    if beta.len() != x.ncols() {
        return Err(Error::dim(format!(
            "beta has length {}, design has {} columns",
            beta.len(),
            x.ncols()
        )));
    }
    Ok(x * Vector::from_column_slice(beta))
}
