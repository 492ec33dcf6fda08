//! Null sign models and Monte Carlo estimates of the FDP ratio expectations.
//!
//! A model lists the null statistics in decreasing order of magnitude and
//! draws their signs. Signs are i.i.d. fair within a group; across groups
//! they are either independent or exact copies of one another (the
//! adversarial case for the uniform bound).

use rand::RngCore;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::parallel::{map_indexed, Execution};
use crate::rng::{purpose, stream};

/// Trials per RNG substream.
const CHUNK: usize = 1000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Coupling {
    /// All signs independent.
    Independent,
    /// Every group repeats the first group's signs; magnitudes tie across
    /// groups, so each level holds one statistic from every group.
    Copies,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct NullSignModel {
    group_sizes: Vec<usize>,
    coupling: Coupling,
    positive_prob: f64,
}

/// Per-level sign counts for one draw, in decreasing magnitude order.
#[derive(Debug, Clone, Default)]
pub struct SignDraw {
    /// `(#positive, #negative)` at each distinct magnitude.
    pub levels: Vec<(u32, u32)>,
    /// Element-level signs in magnitude order, ties broken by group index.
    pub signs: Vec<bool>,
}

struct Bits<'a> {
    rng: &'a mut ChaCha8Rng,
    word: u64,
    left: u32,
}

impl Bits<'_> {
    fn next(&mut self) -> bool {
        if self.left == 0 {
            self.word = self.rng.next_u64();
            self.left = 64;
        }
        let b = self.word & 1 == 1;
        self.word >>= 1;
        self.left -= 1;
        b
    }
}

impl NullSignModel {
    /// Signs must be fair: a biased model breaks the symmetry that every
    /// bound here relies on and is rejected.
    pub fn new(group_sizes: Vec<usize>, coupling: Coupling, positive_prob: f64) -> Result<Self> {
        if group_sizes.is_empty() || group_sizes.contains(&0) {
            return Err(Error::param("null sign model needs non-empty groups"));
        }
        if positive_prob != 0.5 {
            return Err(Error::param(format!(
                "null signs must be symmetric, got P(positive) = {positive_prob}"
            )));
        }
        if coupling == Coupling::Copies && group_sizes.iter().any(|&s| s != group_sizes[0]) {
            return Err(Error::param("copied groups must have equal sizes"));
        }
        Ok(Self {
            group_sizes,
            coupling,
            positive_prob,
        })
    }

    /// One group of `n` i.i.d. signs.
    pub fn single_group(n: usize) -> Result<Self> {
        Self::new(vec![n], Coupling::Independent, 0.5)
    }

    /// `m` independent groups of `size` signs.
    pub fn independent_groups(m: usize, size: usize) -> Result<Self> {
        Self::new(vec![size; m], Coupling::Independent, 0.5)
    }

    /// `m` identical copies of `len` i.i.d. signs.
    pub fn copies(m: usize, len: usize) -> Result<Self> {
        Self::new(vec![len; m], Coupling::Copies, 0.5)
    }

    pub fn m(&self) -> usize {
        self.group_sizes.len()
    }

    pub fn len(&self) -> usize {
        self.group_sizes.iter().sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn coupling(&self) -> Coupling {
        self.coupling
    }

    pub fn draw_into(&self, rng: &mut ChaCha8Rng, out: &mut SignDraw) {
        out.levels.clear();
        out.signs.clear();
        let mut bits = Bits { rng, word: 0, left: 0 };
        match self.coupling {
            Coupling::Independent => {
                // magnitudes are distinct; order across groups is irrelevant
                for _ in 0..self.len() {
                    let s = bits.next();
                    out.signs.push(s);
                    out.levels.push(if s { (1, 0) } else { (0, 1) });
                }
            }
            Coupling::Copies => {
                let m = self.m() as u32;
                for _ in 0..self.group_sizes[0] {
                    let s = bits.next();
                    out.signs.extend(std::iter::repeat_n(s, m as usize));
                    out.levels.push(if s { (m, 0) } else { (0, m) });
                }
            }
        }
    }

    pub fn draw(&self, rng: &mut ChaCha8Rng) -> SignDraw {
        let mut out = SignDraw::default();
        self.draw_into(rng, &mut out);
        out
    }
}

/// Monte Carlo mean with its standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct McEstimate {
    pub mean: f64,
    pub se: f64,
    pub trials: usize,
}

impl McEstimate {
    fn from_sums(sum: f64, sumsq: f64, n: usize) -> Self {
        let nf = n as f64;
        let mean = sum / nf;
        let var = if n > 1 {
            ((sumsq - nf * mean * mean) / (nf - 1.0)).max(0.0)
        } else {
            0.0
        };
        Self {
            mean,
            se: (var / nf).sqrt(),
            trials: n,
        }
    }

    /// `mean ≤ bound + k·SE`
    pub fn within(&self, bound: f64, k: f64) -> bool {
        self.mean <= bound + k * self.se
    }
}

/// Averages `f` over `trials` draws. Trials are split into fixed chunks with
/// their own substreams and reduced in chunk order, so the result does not
/// depend on the number of workers.
fn mc_mean<F>(model: &NullSignModel, trials: usize, seed: u64, tag: u64, mode: Execution, f: F) -> McEstimate
where
    F: Fn(&SignDraw) -> f64 + Sync + Send,
{
    let chunks = trials.div_ceil(CHUNK);
    let sums = map_indexed(mode, chunks, |c| {
        let mut rng = stream(seed, &[purpose::MONTE_CARLO, tag, c as u64]);
        let mut draw = SignDraw::default();
        let count = CHUNK.min(trials - c * CHUNK);
        let (mut s, mut ss) = (0.0, 0.0);
        for _ in 0..count {
            model.draw_into(&mut rng, &mut draw);
            let v = f(&draw);
            s += v;
            ss += v * v;
        }
        (s, ss)
    });
    let (s, ss) = sums.iter().fold((0.0, 0.0), |a, b| (a.0 + b.0, a.1 + b.1));
    McEstimate::from_sums(s, ss, trials)
}

/// `#{W ≥ t}/(#{W ≤ −t} + m)` with every null statistic above `t`.
pub fn fixed_t_ratio(draw: &SignDraw, m: usize) -> f64 {
    let (p, n) = draw
        .levels
        .iter()
        .fold((0u32, 0u32), |a, l| (a.0 + l.0, a.1 + l.1));
    p as f64 / (n as f64 + m as f64)
}

/// `sup_t #{W ≥ t}/(#{W ≤ −t} + m)`, attained at one of the magnitudes.
pub fn sup_ratio(draw: &SignDraw, m: usize) -> f64 {
    let (mut p, mut n, mut best) = (0u32, 0u32, 0.0_f64);
    for &(lp, ln) in &draw.levels {
        p += lp;
        n += ln;
        best = best.max(p as f64 / (n as f64 + m as f64));
    }
    best
}

/// `E[#{W ≥ t}/(#{W ≤ −t} + m)]` with all nulls above `t`.
pub fn mc_fixed_t_expectation(model: &NullSignModel, trials: usize, seed: u64, mode: Execution) -> McEstimate {
    let m = model.m();
    mc_mean(model, trials, seed, 1, mode, |d| fixed_t_ratio(d, m))
}

/// `E[sup_t #{W ≥ t}/(#{W ≤ −t} + m)]`
pub fn mc_sup_ratio(model: &NullSignModel, trials: usize, seed: u64, mode: Execution) -> McEstimate {
    let m = model.m();
    mc_mean(model, trials, seed, 2, mode, |d| sup_ratio(d, m))
}

/// `P(V_i⁺/(V_i⁻ + m) > t)` over the top `i` statistics.
pub fn mc_tail_probability(
    model: &NullSignModel,
    i: usize,
    t: f64,
    trials: usize,
    seed: u64,
    mode: Execution,
) -> McEstimate {
    let m = model.m() as f64;
    mc_mean(model, trials, seed, 3, mode, |d| {
        let pos = d.signs[..i].iter().filter(|s| **s).count() as f64;
        let neg = i as f64 - pos;
        if pos / (neg + m) > t {
            1.0
        } else {
            0.0
        }
    })
}

/// One spot check of `E e^{θ(V_j⁺ + tV_i⁺ − (j + ti)/2)} ≤ cosh((1+t)mθ/2)^{i/m} cosh(mθ/2)^{(j−i)/m}`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MgfCheck {
    pub theta: f64,
    pub t: f64,
    pub i: usize,
    pub j: usize,
    pub empirical: McEstimate,
    pub bound: f64,
    pub pass: bool,
}

pub fn mgf_bound(m: usize, theta: f64, t: f64, i: usize, j: usize) -> f64 {
    let m = m as f64;
    let a = ((1.0 + t) * m * theta / 2.0).cosh().ln() * i as f64 / m;
    let b = (m * theta / 2.0).cosh().ln() * (j - i) as f64 / m;
    (a + b).exp()
}

#[allow(clippy::too_many_arguments)]
pub fn mgf_check(
    model: &NullSignModel,
    theta: f64,
    t: f64,
    i: usize,
    j: usize,
    trials: usize,
    seed: u64,
    mode: Execution,
) -> Result<MgfCheck> {
    if !(i <= j && j <= model.len()) {
        return Err(Error::param(format!("need i <= j <= {}, got i = {i}, j = {j}", model.len())));
    }
    let centre = (j as f64 + t * i as f64) / 2.0;
    let empirical = mc_mean(model, trials, seed, 4, mode, |d| {
        let vi = d.signs[..i].iter().filter(|s| **s).count() as f64;
        let vj = vi + d.signs[i..j].iter().filter(|s| **s).count() as f64;
        (theta * (vj + t * vi - centre)).exp()
    });
    let bound = mgf_bound(model.m(), theta, t, i, j);
    let rel = if empirical.mean > 0.0 { empirical.se / empirical.mean } else { 0.0 };
    Ok(MgfCheck {
        theta,
        t,
        i,
        j,
        empirical,
        bound,
        pass: empirical.mean <= bound * (1.0 + 5.0 * rel),
    })
}

/// Twenty `(model, θ, t, i, j)` spot checks drawn from `seed`.
pub fn mgf_spot_checks(trials: usize, seed: u64, mode: Execution) -> Result<Vec<MgfCheck>> {
    use rand::Rng;
    let mut rng = stream(seed, &[purpose::MONTE_CARLO, 5]);
    let mut out = Vec::with_capacity(20);
    for k in 0..20u64 {
        let m = rng.random_range(1..=4usize);
        let size = rng.random_range(5..=20usize);
        let model = if k % 2 == 0 {
            NullSignModel::copies(m, size)?
        } else {
            NullSignModel::independent_groups(m, size)?
        };
        let t = rng.random_range(1.2..4.0);
        // keep the exponent moderate so the estimator has a finite, small variance
        let theta = rng.random_range(0.05..1.0) / ((1.0 + t) * m as f64);
        let j = rng.random_range(1..=model.len());
        let i = rng.random_range(0..=j);
        out.push(mgf_check(&model, theta, t, i, j, trials, derive(seed, k), mode)?);
    }
    Ok(out)
}

fn derive(seed: u64, k: u64) -> u64 {
    crate::rng::derive_seed(seed, &[purpose::MONTE_CARLO, 6, k])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn biased_or_empty_models_are_rejected() {
        assert!(NullSignModel::new(vec![3], Coupling::Independent, 1.0).is_err());
        assert!(NullSignModel::new(vec![], Coupling::Independent, 0.5).is_err());
        assert!(NullSignModel::new(vec![2, 3], Coupling::Copies, 0.5).is_err());
    }

    #[test]
    fn exact_enumeration_single_group() {
        // mean of p/(n + 1) over all 2^n patterns is 1 − 2^{−n}
        for n in 1..=10usize {
            let mut total = 0.0;
            for mask in 0..(1u32 << n) {
                let p = mask.count_ones() as f64;
                total += p / (n as f64 - p + 1.0);
            }
            let exact = total / (1u32 << n) as f64;
            assert!((exact - (1.0 - 0.5f64.powi(n as i32))).abs() < 1e-12);
        }
    }

    #[test]
    fn sup_ratio_by_hand() {
        let d = SignDraw {
            levels: vec![(1, 0), (0, 1), (1, 0), (1, 0)],
            signs: vec![],
        };
        // cumulative ratios 1, 1/2, 2/2, 3/2
        assert_eq!(sup_ratio(&d, 1), 1.5);
        assert_eq!(fixed_t_ratio(&d, 1), 1.5);
        assert_eq!(sup_ratio(&SignDraw::default(), 1), 0.0);
    }

    #[test]
    fn copies_tie_within_levels() {
        let model = NullSignModel::copies(3, 4).unwrap();
        let d = model.draw(&mut stream(5, &[1]));
        assert_eq!(d.levels.len(), 4);
        assert_eq!(d.signs.len(), 12);
        for (k, l) in d.levels.iter().enumerate() {
            assert_eq!(l.0 + l.1, 3);
            assert!(d.signs[3 * k..3 * k + 3].iter().all(|&s| s == (l.0 == 3)));
        }
    }

    #[test]
    fn single_pair_mean() {
        let model = NullSignModel::single_group(2).unwrap();
        let est = mc_fixed_t_expectation(&model, 100_000, 7, Execution::Parallel);
        assert!((est.mean - 0.75).abs() <= 3.0 * est.se, "{est:?}");
    }

    #[test]
    fn worker_count_does_not_matter() {
        let model = NullSignModel::copies(5, 40).unwrap();
        let a = mc_sup_ratio(&model, 5000, 11, Execution::Sequential);
        let b = crate::parallel::with_jobs(Some(3), || mc_sup_ratio(&model, 5000, 11, Execution::Parallel));
        assert_eq!(a, b);
    }

    #[test]
    fn hoeffding_tail_dominates_simulation() {
        let model = NullSignModel::single_group(200).unwrap();
        let est = mc_tail_probability(&model, 200, 2.0, 100_000, 3, Execution::Parallel);
        assert!(est.mean <= super::super::bounds::hoeffding_tail(200, 1, 2.0));
    }

    #[test]
    fn mgf_single_sign_is_exact() {
        // one fair sign: E e^{θ(1+t)(1{+} − 1/2)} = cosh((1+t)θ/2)
        assert!((mgf_bound(1, 0.3, 2.0, 1, 1) - (0.45f64).cosh()).abs() < 1e-15);
    }
}
