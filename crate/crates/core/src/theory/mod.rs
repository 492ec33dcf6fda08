//! Numerical verifiers for the FDP bounds.
//!
//! [`bounds`] certifies the uniform constant by slicing, [`mc`] checks the
//! fixed-`t` and uniform expectations on null sign models by simulation, and
//! [`orthant`] covers the orthogonal-construction concentration result.

pub mod bounds;
pub mod mc;
pub mod orthant;

pub use bounds::{bound_b, hoeffding_tail, sup_bound_pipeline, xi_star, BoundCertificate, BoundPlan};
pub use mc::{mc_fixed_t_expectation, mc_sup_ratio, Coupling, McEstimate, NullSignModel};
pub use orthant::{lemma_cov_bound_check, orthant_prob, thm_ort_bound_check};

use serde::{Deserialize, Serialize};

use crate::datagen::{sample_design, CovarianceModel};
use crate::error::Result;
use crate::parallel::Execution;
use crate::rng::derive_seed;

/// One inequality check: `value ≤ bound` up to the stated allowance.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub value: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub se: Option<f64>,
    pub bound: f64,
    /// `bound − value`; negative values may still pass within the SE allowance.
    pub margin: f64,
    pub pass: bool,
}

impl Check {
    pub fn new(name: impl Into<String>, value: f64, se: Option<f64>, bound: f64, pass: bool) -> Self {
        Self {
            name: name.into(),
            value,
            se,
            bound,
            margin: bound - value,
            pass,
        }
    }

    fn mc_upper(name: impl Into<String>, est: McEstimate, bound: f64) -> Self {
        Self::new(name, est.mean, Some(est.se), bound, est.within(bound, 3.0))
    }

    fn mc_equal(name: impl Into<String>, est: McEstimate, target: f64) -> Self {
        let pass = (est.mean - target).abs() <= 3.0 * est.se;
        Self::new(name, est.mean, Some(est.se), target, pass)
    }
}

/// Trial counts for [`mc_suite`].
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct McBudget {
    pub fixed_t: usize,
    pub sup: usize,
    pub mgf: usize,
    pub orthogonal: usize,
}

impl Default for McBudget {
    fn default() -> Self {
        Self {
            fixed_t: 100_000,
            sup: 10_000,
            mgf: 100_000,
            orthogonal: 10_000,
        }
    }
}

/// Every Monte Carlo and closed-form check, seeded from `seed`.
pub fn mc_suite(seed: u64, budget: McBudget, mode: Execution) -> Result<Vec<Check>> {
    let s = |k: u64| derive_seed(seed, &[k]);
    let mut out = Vec::new();

    let pair = NullSignModel::single_group(2)?;
    out.push(Check::mc_equal(
        "fixed_t single group |C|=2 equals 3/4",
        mc_fixed_t_expectation(&pair, budget.fixed_t, s(1), mode),
        0.75,
    ));
    let five = NullSignModel::single_group(5)?;
    out.push(Check::mc_equal(
        "fixed_t single group |C|=5 equals 1 - 2^-5",
        mc_fixed_t_expectation(&five, budget.fixed_t, s(2), mode),
        1.0 - 0.5f64.powi(5),
    ));
    let groups = NullSignModel::independent_groups(5, 40)?;
    out.push(Check::mc_upper(
        "fixed_t m=5 groups of 40 at most 1",
        mc_fixed_t_expectation(&groups, budget.fixed_t, s(3), mode),
        1.0,
    ));
    let singles = NullSignModel::independent_groups(50, 1)?;
    out.push(Check::mc_upper(
        "fixed_t 50 groups of size 1 at most 1",
        mc_fixed_t_expectation(&singles, budget.fixed_t, s(4), mode),
        1.0,
    ));

    let copies = NullSignModel::copies(5, 40)?;
    out.push(Check::mc_upper(
        "sup ratio m=5 copies of 40 at most 3.9",
        mc_sup_ratio(&copies, budget.sup, s(5), mode),
        3.9,
    ));
    let iid = NullSignModel::single_group(500)?;
    out.push(Check::mc_upper(
        "sup ratio i.i.d. 500 at most 1.93",
        mc_sup_ratio(&iid, budget.sup, s(6), mode),
        1.93,
    ));

    let tail = mc::mc_tail_probability(&NullSignModel::single_group(200)?, 200, 2.0, budget.fixed_t, s(7), mode);
    out.push(Check::mc_upper("hoeffding i=200 m=1 t=2", tail, hoeffding_tail(200, 1, 2.0)));

    for c in mc::mgf_spot_checks(budget.mgf, s(8), mode)? {
        out.push(Check::new(
            format!("mgf theta={:.4} t={:.3} i={} j={}", c.theta, c.t, c.i, c.j),
            c.empirical.mean,
            Some(c.empirical.se),
            c.bound,
            c.pass,
        ));
    }

    let (grid, pairs) = orthant::default_cov_grid();
    let cov = lemma_cov_bound_check(&grid, &pairs)?;
    out.push(Check::new("covariance bound on 999 x 4 grid", cov.max_violation, None, 0.0, cov.pass));
    let worst = (0..21)
        .map(|k| {
            let mu = -0.95 + 0.095 * k as f64;
            Ok((orthant::orthant_prob_quadrature(mu, 40, 20) - orthant_prob(mu)?).abs())
        })
        .collect::<Result<Vec<f64>>>()?
        .into_iter()
        .fold(0.0, f64::max);
    out.push(Check::new("orthant closed form vs quadrature", worst, None, 1e-6, worst <= 1e-6));

    for (label, model) in [("identity", CovarianceModel::Identity), ("ar(0.5)", CovarianceModel::Ar { rho: 0.5 })] {
        let design = sample_design(&model, 200, 60, s(9))?;
        let rep = thm_ort_bound_check(&design, budget.orthogonal, &[0.4, 0.6], &[10, 30], s(10), mode)?;
        for r in &rep.rows {
            out.push(Check::new(
                format!("orthogonal {label} delta={} j={}", r.delta, r.j),
                r.frequency,
                Some(r.se),
                r.bound,
                r.pass,
            ));
        }
        for v in &rep.variance {
            let bound = if rep.diagonally_dominant { v.bound.min(v.refined_bound) } else { v.bound };
            out.push(Check::new(
                format!("orthogonal {label} Var(V+) j={}", v.j),
                v.variance,
                Some(v.se),
                bound,
                v.pass,
            ));
        }
    }
    Ok(out)
}
