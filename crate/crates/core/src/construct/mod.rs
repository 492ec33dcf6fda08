//! Pseudo-knockoff and knockoff matrix constructions.
//!
//! A pseudo-knockoff `X̃` of a design `X` satisfies `(X + X̃)ᵀ(X − X̃) = 0`,
//! equivalently `X̃ᵀX̃ = XᵀX` with `XᵀX̃` symmetric. Its defining target is
//! `B = 4[(X − X̃)ᵀ(X − X̃)]⁻¹`, the covariance of `ξ = β̂ − β̃` at unit noise.
//! Every construction here chooses `B ⪰ Σ⁻¹` and realizes it through
//! [`build_xtilde_from_b`].

pub mod sdp;

use serde::{Deserialize, Serialize};

use crate::datagen::DesignEnsemble;
use crate::error::{Error, Result};
use crate::numerics::{
    chol_psd_scaled, eig_sym, max_abs, orthonormal_complement, svd_thin, Matrix, SymMatrix, PSD_TOL,
};
use crate::rng::{derive_seed, purpose};

pub use sdp::{gershgorin_majorizer, solve_diag_majorizer, solve_knockoff_sdp, DiagSdpSolution};

/// Construction method.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Orthogonal,
    BlockDiagonal,
    General,
    KnockoffEqui,
    KnockoffSdp,
}

impl Method {
    pub const ALL: [Method; 5] = [
        Method::Orthogonal,
        Method::BlockDiagonal,
        Method::General,
        Method::KnockoffEqui,
        Method::KnockoffSdp,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Method::Orthogonal => "orthogonal",
            Method::BlockDiagonal => "block_diagonal",
            Method::General => "general",
            Method::KnockoffEqui => "knockoff_equi",
            Method::KnockoffSdp => "knockoff_sdp",
        }
    }

    pub fn is_knockoff(self) -> bool {
        matches!(self, Method::KnockoffEqui | Method::KnockoffSdp)
    }
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .or(match s {
                "opk" => Some(Method::Orthogonal),
                "bdpk" => Some(Method::BlockDiagonal),
                "gpk" => Some(Method::General),
                _ => None,
            })
            .ok_or_else(|| Error::param(format!("unknown construction method {s:?}")))
    }
}

/// Tuning knobs for the constructions. Defaults follow the published recipe.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ConstructOptions {
    /// Contiguous group size for the block-diagonal construction.
    pub group_size: usize,
    /// Explicit groups for the block-diagonal construction; overrides `group_size`.
    pub groups: Option<Vec<Vec<usize>>>,
    /// Class count `m` for the general construction.
    pub m: usize,
    /// Explicit classes for the general construction; overrides `m`.
    pub classes: Option<Vec<Vec<usize>>>,
    /// Scaling of `Σ⁻¹` in the general construction.
    pub general_gamma: f64,
    /// Lower bound on the diagonal of each class block of `B`.
    pub floor: f64,
}

impl Default for ConstructOptions {
    fn default() -> Self {
        Self {
            group_size: 5,
            groups: None,
            m: 2,
            classes: None,
            general_gamma: 1.2,
            floor: 2.0,
        }
    }
}

/// A constructed companion matrix together with its covariance target.
#[derive(Debug, Clone)]
pub struct PseudoKnockoff {
    pub xt: Matrix,
    /// `B = 4[(X − X̃)ᵀ(X − X̃)]⁻¹`
    pub b: SymMatrix,
    /// `B⁻¹ = (X − X̃)ᵀ(X − X̃)/4`, stored to avoid re-inverting.
    pub b_inv: SymMatrix,
    pub method: Method,
    /// Groups `G_i` (block diagonal) or classes `C_j` (general); empty otherwise.
    pub partition: Vec<Vec<usize>>,
    pub gamma: Option<f64>,
    /// Knockoff `s`-vector (baselines only).
    pub s: Option<Vec<f64>>,
}

fn construction_seed(design: &DesignEnsemble) -> u64 {
    derive_seed(design.seed, &[purpose::CONSTRUCTION])
}

fn check_shape(design: &DesignEnsemble) -> Result<()> {
    if design.n < 2 * design.p {
        return Err(Error::dim(format!(
            "construction needs n >= 2p, got n = {}, p = {}",
            design.n, design.p
        )));
    }
    Ok(())
}

/// Checks that `partition` covers `0..p` exactly once.
pub fn check_partition(partition: &[Vec<usize>], p: usize) -> Result<()> {
    let mut seen = vec![false; p];
    for group in partition {
        if group.is_empty() {
            return Err(Error::param("partition contains an empty group"));
        }
        for &j in group {
            if j >= p || seen[j] {
                return Err(Error::param(format!(
                    "partition is not a partition of 0..{p} (index {j})"
                )));
            }
            seen[j] = true;
        }
    }
    if let Some(j) = seen.iter().position(|s| !s) {
        return Err(Error::param(format!("partition misses index {j}")));
    }
    Ok(())
}

/// Interleaved classes `C_k = {k, k + m, k + 2m, ...}` for `k = 0..m`.
pub fn interleaved_classes(p: usize, m: usize) -> Result<Vec<Vec<usize>>> {
    if m == 0 || m > p {
        return Err(Error::param(format!("class count m = {m} must be in 1..={p}")));
    }
    Ok((0..m).map(|k| (k..p).step_by(m).collect()).collect())
}

/// `X̃ = X(I − 2Σ⁻¹B⁻¹) + 2UR` with `RᵀR = B⁻¹ − B⁻¹Σ⁻¹B⁻¹` and `UᵀX = 0`.
///
/// Working with `B⁻¹` keeps the construction stable when `B` is large (tiny
/// knockoff `s`). `RᵀR = (CB⁻¹)ᵀ(CB⁻¹)` for any `C` with `CᵀC = B − Σ⁻¹`.
pub fn build_xtilde_from_b_inv(
    x: &Matrix,
    sigma_inv: &SymMatrix,
    b_inv: &SymMatrix,
    seed: u64,
) -> Result<Matrix> {
    let (n, p) = x.shape();
    if n < 2 * p {
        return Err(Error::dim(format!("need n >= 2p, got n = {n}, p = {p}")));
    }
    if sigma_inv.order() != p || b_inv.order() != p {
        return Err(Error::dim("Σ⁻¹ and B⁻¹ must be p x p"));
    }
    let sb = sigma_inv.as_matrix() * b_inv.as_matrix();
    let k = SymMatrix::symmetrize(b_inv.as_matrix() - b_inv.as_matrix() * &sb);
    let scale = b_inv.max_abs() * (1.0 + b_inv.max_abs() * sigma_inv.max_abs());
    let l = chol_psd_scaled(&k, PSD_TOL, Some(scale)).map_err(|e| match e {
        Error::NotPsd { min_eigenvalue, tolerance } => Error::param(format!(
            "B does not dominate Σ⁻¹: B⁻¹ − B⁻¹Σ⁻¹B⁻¹ has eigenvalue {min_eigenvalue:e} (tolerance {tolerance:e})"
        )),
        other => other,
    })?;
    let u = orthonormal_complement(x, p, seed)?;
    let mut xt = x - x * (&sb * 2.0);
    xt += (u * l.transpose()) * 2.0;
    Ok(xt)
}

/// Realizes the covariance target `B` (must dominate `Σ⁻¹`).
pub fn build_xtilde_from_b(x: &Matrix, sigma: &SymMatrix, b: &SymMatrix, seed: u64) -> Result<Matrix> {
    let sigma_inv = sigma.inverse_spd()?;
    let b_inv = b.inverse_spd()?;
    build_xtilde_from_b_inv(x, &sigma_inv, &b_inv, seed)
}

/// `X̃ = W D Vᵀ` with `X = U D Vᵀ` and `W ⟂ X`, giving `XᵀX̃ = 0`, `B = 2Σ⁻¹`.
pub fn construct_orthogonal(design: &DesignEnsemble) -> Result<PseudoKnockoff> {
    check_shape(design)?;
    let x = &design.x;
    let svd = svd_thin(x)?;
    let dmax = svd.singular_values[0];
    let dmin = *svd.singular_values.last().expect("p >= 1");
    if !(dmin > 1e-10 * dmax) {
        return Err(Error::Singular(format!(
            "design is rank deficient (singular values {dmax:e} .. {dmin:e})"
        )));
    }
    let w = orthonormal_complement(x, design.p, construction_seed(design))?;
    let mut wd = w;
    for (j, &dj) in svd.singular_values.iter().enumerate() {
        wd.column_mut(j).scale_mut(dj);
    }
    let xt = wd * svd.v.transpose();
    let sigma_inv = design.sigma.inverse_spd()?;
    Ok(PseudoKnockoff {
        xt,
        b: sigma_inv.scaled(2.0),
        b_inv: design.sigma.scaled(0.5),
        method: Method::Orthogonal,
        partition: Vec::new(),
        gamma: None,
        s: None,
    })
}

/// Symmetric inverse square root of a positive definite matrix.
fn inv_sqrt(m: &SymMatrix) -> Result<Matrix> {
    let eig = eig_sym(m)?;
    let lmin = *eig.values.last().expect("order >= 1");
    if !(lmin > 1e-12 * eig.values[0].abs().max(f64::MIN_POSITIVE)) {
        return Err(Error::Singular(format!(
            "within-group block has smallest eigenvalue {lmin:e}"
        )));
    }
    let mut v = eig.vectors.clone();
    for (j, &l) in eig.values.iter().enumerate() {
        v.column_mut(j).scale_mut(l.powf(-0.25));
    }
    Ok(&v * v.transpose())
}

/// `γ = min{1, 2λ_min(DΣD)}/1.2` with `D = blockdiag(Σ_{G_i G_i}^{-1/2})`.
pub fn block_gamma(sigma: &SymMatrix, groups: &[Vec<usize>]) -> Result<f64> {
    let p = sigma.order();
    check_partition(groups, p)?;
    let mut d = Matrix::zeros(p, p);
    for g in groups {
        let block = inv_sqrt(&sigma.principal(g))?;
        for (a, &i) in g.iter().enumerate() {
            for (b, &j) in g.iter().enumerate() {
                d[(i, j)] = block[(a, b)];
            }
        }
    }
    let dsd = SymMatrix::symmetrize(&d * sigma.as_matrix() * &d);
    let lmin = dsd.min_eigenvalue()?;
    Ok(f64::min(1.0, 2.0 * lmin) / 1.2)
}

/// Block-diagonal construction: `S_ii = γΣ_{G_i G_i}`, `B = 2·blockdiag(S_ii⁻¹)`,
/// so that `Σ − XᵀX̃ = blockdiag(S_ii)`.
pub fn construct_block_diagonal(design: &DesignEnsemble, groups: &[Vec<usize>]) -> Result<PseudoKnockoff> {
    check_shape(design)?;
    let sigma = &design.sigma;
    let p = design.p;
    let gamma = block_gamma(sigma, groups)?;
    let mut s_blocks = Matrix::zeros(p, p);
    let mut b = Matrix::zeros(p, p);
    for g in groups {
        let sg = sigma.principal(g).scaled(gamma);
        let sg_inv = sg.inverse_spd()?;
        for (a, &i) in g.iter().enumerate() {
            for (c, &j) in g.iter().enumerate() {
                s_blocks[(i, j)] = sg.get(a, c);
                b[(i, j)] = 2.0 * sg_inv.get(a, c);
            }
        }
    }
    let b_inv = SymMatrix::symmetrize(s_blocks * 0.5);
    let sigma_inv = sigma.inverse_spd()?;
    let xt = build_xtilde_from_b_inv(&design.x, &sigma_inv, &b_inv, construction_seed(design))?;
    Ok(PseudoKnockoff {
        xt,
        b: SymMatrix::symmetrize(b),
        b_inv,
        method: Method::BlockDiagonal,
        partition: groups.to_vec(),
        gamma: Some(gamma),
        s: None,
    })
}

/// General construction on explicit classes: `B = γΣ⁻¹` off the class blocks
/// and `B_{C_j C_j} = diag(d_j)`, the minimum-trace diagonal majorizer of
/// `γ(Σ⁻¹)_{C_j C_j}` with floor `floor`.
pub fn construct_general_with_classes(
    design: &DesignEnsemble,
    classes: &[Vec<usize>],
    gamma: f64,
    floor: f64,
) -> Result<PseudoKnockoff> {
    check_shape(design)?;
    check_partition(classes, design.p)?;
    if !(gamma >= 1.0) {
        return Err(Error::param(format!("general construction needs gamma >= 1, got {gamma}")));
    }
    let sigma_inv = design.sigma.inverse_spd()?;
    let target = sigma_inv.scaled(gamma);
    let mut b = target.as_matrix().clone();
    for class in classes {
        let block = target.principal(class);
        let sol = solve_diag_majorizer(&block, floor)?;
        for (a, &i) in class.iter().enumerate() {
            for &j in class {
                b[(i, j)] = 0.0;
            }
            b[(i, i)] = sol.d[a];
        }
    }
    let b = SymMatrix::symmetrize(b);
    let b_inv = b.inverse_spd()?;
    let xt = build_xtilde_from_b_inv(&design.x, &sigma_inv, &b_inv, construction_seed(design))?;
    Ok(PseudoKnockoff {
        xt,
        b,
        b_inv,
        method: Method::General,
        partition: classes.to_vec(),
        gamma: Some(gamma),
        s: None,
    })
}

/// General construction with interleaved classes `C_k = {im + k}`, `γ = 1.2`
/// and floor 2.
pub fn construct_general(design: &DesignEnsemble, m: usize) -> Result<PseudoKnockoff> {
    let classes = interleaved_classes(design.p, m)?;
    construct_general_with_classes(design, &classes, 1.2, 2.0)
}

/// How the knockoff `s`-vector is chosen.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum KnockoffMode {
    Equi,
    Sdp,
}

/// Classical knockoff with `XᵀX̃ = Σ − diag(s)`, realized with
/// `B⁻¹ = diag(s)/2`.
pub fn construct_knockoff_baseline(design: &DesignEnsemble, mode: KnockoffMode) -> Result<PseudoKnockoff> {
    check_shape(design)?;
    let sigma = &design.sigma;
    let lmin = sigma.min_eigenvalue()?;
    if !(lmin > 0.0) {
        return Err(Error::param(format!(
            "Gram matrix is not positive definite (smallest eigenvalue {lmin:e})"
        )));
    }
    let s = match mode {
        KnockoffMode::Equi => vec![f64::min(1.0, 2.0 * lmin); design.p],
        KnockoffMode::Sdp => solve_knockoff_sdp(sigma)?.d,
    };
    let b_inv = SymMatrix::from_diagonal(&s.iter().map(|v| 0.5 * v).collect::<Vec<_>>());
    let b = SymMatrix::from_diagonal(&s.iter().map(|v| 2.0 / v).collect::<Vec<_>>());
    let sigma_inv = sigma.inverse_spd()?;
    let xt = build_xtilde_from_b_inv(&design.x, &sigma_inv, &b_inv, construction_seed(design))?;
    Ok(PseudoKnockoff {
        xt,
        b,
        b_inv,
        method: match mode {
            KnockoffMode::Equi => Method::KnockoffEqui,
            KnockoffMode::Sdp => Method::KnockoffSdp,
        },
        partition: Vec::new(),
        gamma: None,
        s: Some(s),
    })
}

/// Dispatches on `method` with `opts`.
pub fn construct(design: &DesignEnsemble, method: Method, opts: &ConstructOptions) -> Result<PseudoKnockoff> {
    match method {
        Method::Orthogonal => construct_orthogonal(design),
        Method::BlockDiagonal => {
            let groups = match &opts.groups {
                Some(g) => g.clone(),
                None => crate::datagen::contiguous_groups(design.p, opts.group_size),
            };
            construct_block_diagonal(design, &groups)
        }
        Method::General => {
            let classes = match &opts.classes {
                Some(c) => c.clone(),
                None => interleaved_classes(design.p, opts.m)?,
            };
            construct_general_with_classes(design, &classes, opts.general_gamma, opts.floor)
        }
        Method::KnockoffEqui => construct_knockoff_baseline(design, KnockoffMode::Equi),
        Method::KnockoffSdp => construct_knockoff_baseline(design, KnockoffMode::Sdp),
    }
}

/// Max-abs residuals of the identities a construction must satisfy.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ConstructionReport {
    pub method: Method,
    /// `‖X̃ᵀX̃ − XᵀX‖`
    pub gram: f64,
    /// `‖XᵀX̃ − X̃ᵀX‖`
    pub cross_symmetry: f64,
    /// `‖(X + X̃)ᵀ(X − X̃)‖`
    pub orthogonality: f64,
    /// `‖(X − X̃)ᵀ(X − X̃) − 4B⁻¹‖`
    pub difference_gram: f64,
    /// Method-specific identity, see [`validate_construction`].
    pub structure: f64,
    pub tolerance: f64,
    pub pass: bool,
}

impl ConstructionReport {
    pub fn max_residual(&self) -> f64 {
        [
            self.gram,
            self.cross_symmetry,
            self.orthogonality,
            self.difference_gram,
            self.structure,
        ]
        .into_iter()
        .fold(0.0, f64::max)
    }

    /// Pass/fail of the two equivalent identity sets, `(X+X̃)ᵀ(X−X̃) = 0` versus
    /// `{X̃ᵀX̃ = XᵀX, XᵀX̃ symmetric}`.
    pub fn identity_sets(&self) -> (bool, bool) {
        (
            self.orthogonality <= self.tolerance,
            self.gram <= self.tolerance && self.cross_symmetry <= self.tolerance,
        )
    }
}

/// Residuals of the defining identities, all in max-abs norm. The structural
/// check is: orthogonal `XᵀX̃ = 0`; block diagonal `Σ − XᵀX̃ = 2B⁻¹` block
/// diagonal on the groups; general `B − γΣ⁻¹ ⪰ 0` (negative part of its
/// spectrum) and diagonal class blocks; knockoffs `XᵀX̃ = Σ − diag(s)`.
/// Passing means every residual is at most `1e-8·(1 + ‖Σ‖)`.
pub fn validate_construction(pk: &PseudoKnockoff, x: &Matrix) -> Result<ConstructionReport> {
    if pk.xt.shape() != x.shape() {
        return Err(Error::dim("X and X̃ shapes differ"));
    }
    let sigma = x.tr_mul(x);
    let xtx = x.tr_mul(&pk.xt);
    let gram = max_abs(&(pk.xt.tr_mul(&pk.xt) - &sigma));
    let cross_symmetry = max_abs(&(&xtx - xtx.transpose()));
    let plus = x + &pk.xt;
    let minus = x - &pk.xt;
    let orthogonality = max_abs(&plus.tr_mul(&minus));
    let difference_gram = max_abs(&(minus.tr_mul(&minus) - pk.b_inv.as_matrix() * 4.0));
    let p = x.ncols();
    let structure = match pk.method {
        Method::Orthogonal => max_abs(&xtx),
        Method::BlockDiagonal => {
            let mut group_of = vec![usize::MAX; p];
            for (g, idx) in pk.partition.iter().enumerate() {
                for &j in idx {
                    group_of[j] = g;
                }
            }
            let gap = &sigma - &xtx - pk.b_inv.as_matrix() * 2.0;
            let mut worst = max_abs(&gap);
            for i in 0..p {
                for j in 0..p {
                    if group_of[i] != group_of[j] {
                        worst = worst.max(pk.b_inv.get(i, j).abs());
                    }
                }
            }
            worst
        }
        Method::General => {
            let gamma = pk.gamma.unwrap_or(1.0);
            let sigma_inv = SymMatrix::symmetrize(sigma.clone()).inverse_spd()?;
            let excess = pk.b.sub(&sigma_inv.scaled(gamma));
            // relative to the scale of B
            let neg = (-excess.min_eigenvalue()?).max(0.0) / (1.0 + pk.b.max_abs());
            let mut off = 0.0_f64;
            for class in &pk.partition {
                for &i in class {
                    for &j in class {
                        if i != j {
                            off = off.max(pk.b.get(i, j).abs());
                        }
                    }
                }
            }
            neg.max(off)
        }
        Method::KnockoffEqui | Method::KnockoffSdp => {
            let s = pk.s.as_deref().ok_or_else(|| Error::param("knockoff without s-vector"))?;
            let mut target = sigma.clone();
            for (j, &sj) in s.iter().enumerate() {
                target[(j, j)] -= sj;
            }
            max_abs(&(xtx - target))
        }
    };
    let tolerance = 1e-8 * (1.0 + max_abs(&sigma));
    let mut report = ConstructionReport {
        method: pk.method,
        gram,
        cross_symmetry,
        orthogonality,
        difference_gram,
        structure,
        tolerance,
        pass: false,
    };
    report.pass = report.max_residual() <= tolerance;
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datagen::{sample_design, CovarianceModel};

    fn design(model: CovarianceModel, n: usize, p: usize, seed: u64) -> DesignEnsemble {
        sample_design(&model, n, p, seed).unwrap()
    }

    #[test]
    fn orthogonal_single_column() {
        let mut x = Matrix::zeros(3, 1);
        x[(0, 0)] = 1.0;
        let d = DesignEnsemble::from_matrix(x.clone(), false, 3).unwrap();
        let pk = construct_orthogonal(&d).unwrap();
        assert!((pk.xt.norm() - 1.0).abs() < 1e-12);
        assert!(x.tr_mul(&pk.xt)[(0, 0)].abs() < 1e-12);
    }

    #[test]
    fn orthogonal_residuals() {
        let d = design(CovarianceModel::Ar { rho: 0.5 }, 300, 100, 4);
        let pk = construct_orthogonal(&d).unwrap();
        let r = validate_construction(&pk, &d.x).unwrap();
        assert!(r.pass, "{r:?}");
        let minus = &d.x - &pk.xt;
        let b = SymMatrix::symmetrize(minus.tr_mul(&minus)).inverse_spd().unwrap().scaled(4.0);
        let rel = max_abs(&(b.as_matrix() - pk.b.as_matrix())) / pk.b.max_abs();
        assert!(rel < 1e-6);
    }

    #[test]
    fn block_gamma_examples() {
        assert!((block_gamma(&SymMatrix::identity(4), &[vec![0, 1], vec![2, 3]]).unwrap() - 1.0 / 1.2).abs() < 1e-12);
        let two = |rho: f64| SymMatrix::new(Matrix::from_row_slice(2, 2, &[1.0, rho, rho, 1.0])).unwrap();
        let g = block_gamma(&two(0.5), &[vec![0], vec![1]]).unwrap();
        assert!((g - 1.0 / 1.2).abs() < 1e-12);
        let g = block_gamma(&two(0.9), &[vec![0], vec![1]]).unwrap();
        assert!((g - 0.2 / 1.2).abs() < 1e-12);
    }

    #[test]
    fn block_diagonal_identity_singletons() {
        let d = design(CovarianceModel::Identity, 120, 30, 5);
        let groups: Vec<Vec<usize>> = (0..30).map(|j| vec![j]).collect();
        let pk = construct_block_diagonal(&d, &groups).unwrap();
        let r = validate_construction(&pk, &d.x).unwrap();
        assert!(r.pass, "{r:?}");
        let gamma = pk.gamma.unwrap();
        // XᵀX̃ = Σ − γ·diag(Σ) = Σ − γI on the unit-norm columns
        let xtx = d.x.tr_mul(&pk.xt);
        for j in 0..30 {
            assert!((xtx[(j, j)] - (1.0 - gamma)).abs() < 1e-8);
        }
    }

    #[test]
    fn block_diagonal_single_group() {
        let d = design(CovarianceModel::Ar { rho: 0.3 }, 90, 20, 6);
        let pk = construct_block_diagonal(&d, &[(0..20).collect()]).unwrap();
        assert!(validate_construction(&pk, &d.x).unwrap().pass);
    }

    #[test]
    fn general_m1_is_knockoff() {
        let d = design(CovarianceModel::Ar { rho: 0.5 }, 200, 40, 7);
        let pk = construct_general(&d, 1).unwrap();
        let r = validate_construction(&pk, &d.x).unwrap();
        assert!(r.pass, "{r:?}");
        let diff = d.sigma.as_matrix() - d.x.tr_mul(&pk.xt);
        for i in 0..40 {
            for j in 0..40 {
                if i != j {
                    assert!(diff[(i, j)].abs() < 1e-8);
                }
            }
        }
    }

    #[test]
    fn general_off_class_blocks_copy_scaled_precision() {
        let d = design(CovarianceModel::Ar { rho: 0.5 }, 300, 100, 8);
        let pk = construct_general(&d, 2).unwrap();
        assert!(validate_construction(&pk, &d.x).unwrap().pass);
        let sinv = d.sigma.inverse_spd().unwrap();
        for i in 0..100 {
            for j in 0..100 {
                if i % 2 != j % 2 {
                    assert_eq!(pk.b.get(i, j), 1.2 * sinv.get(i, j));
                }
            }
        }
    }

    #[test]
    fn general_identity_hits_floor() {
        let d = design(CovarianceModel::Identity, 200, 30, 9);
        let pk = construct_general(&d, 3).unwrap();
        assert!(validate_construction(&pk, &d.x).unwrap().pass);
        // empirical Σ⁻¹ is close to I, so the floor 2 binds on every class diagonal
        for j in 0..30 {
            assert!((pk.b.get(j, j) - 2.0).abs() < 0.5, "B_jj = {}", pk.b.get(j, j));
        }
    }

    #[test]
    fn from_b_recovers_orthogonal() {
        let d = design(CovarianceModel::Ar { rho: 0.4 }, 100, 20, 10);
        let b = d.sigma.inverse_spd().unwrap().scaled(2.0);
        let xt = build_xtilde_from_b(&d.x, &d.sigma, &b, 1).unwrap();
        assert!(max_abs(&d.x.tr_mul(&xt)) < 1e-8);
    }

    #[test]
    fn from_b_boundary() {
        let d = design(CovarianceModel::Ar { rho: 0.4 }, 100, 20, 11);
        let b = d.sigma.inverse_spd().unwrap();
        let xt = build_xtilde_from_b(&d.x, &d.sigma, &b, 1).unwrap();
        let minus = &d.x - &xt;
        let resid = max_abs(&(minus.tr_mul(&minus) - d.sigma.as_matrix() * 4.0));
        assert!(resid < 1e-8 * (1.0 + d.sigma.max_abs()));
    }

    #[test]
    fn from_b_rejects_undominated() {
        let d = design(CovarianceModel::Ar { rho: 0.4 }, 100, 20, 12);
        let b = d.sigma.inverse_spd().unwrap().scaled(0.5);
        assert!(build_xtilde_from_b(&d.x, &d.sigma, &b, 1).is_err());
    }

    #[test]
    fn knockoff_identity_and_equi() {
        let x = orthonormal_complement(&Matrix::zeros(40, 0), 8, 2).unwrap();
        let d = DesignEnsemble::from_matrix(x, false, 1).unwrap();
        let pk = construct_knockoff_baseline(&d, KnockoffMode::Sdp).unwrap();
        for s in pk.s.as_ref().unwrap() {
            assert!((s - 1.0).abs() < 1e-6);
        }
        assert!(validate_construction(&pk, &d.x).unwrap().pass);

        let rho: f64 = 0.6;
        let mut x = Matrix::zeros(10, 2);
        x[(0, 0)] = 1.0;
        x[(0, 1)] = rho;
        x[(1, 1)] = (1.0 - rho * rho).sqrt();
        let d = DesignEnsemble::from_matrix(x, false, 1).unwrap();
        let pk = construct_knockoff_baseline(&d, KnockoffMode::Equi).unwrap();
        for s in pk.s.as_ref().unwrap() {
            assert!((s - 0.8).abs() < 1e-12);
        }
        assert!(validate_construction(&pk, &d.x).unwrap().pass);
    }

    #[test]
    fn negative_controls_fail() {
        let d = design(CovarianceModel::Ar { rho: 0.5 }, 60, 10, 13);
        let mut pk = construct_orthogonal(&d).unwrap();
        pk.xt = d.x.clone();
        assert!(!validate_construction(&pk, &d.x).unwrap().pass);
        pk.xt = -d.x.clone();
        let r = validate_construction(&pk, &d.x).unwrap();
        assert!(r.orthogonality < r.tolerance);
        assert!(!r.pass);
    }
}
