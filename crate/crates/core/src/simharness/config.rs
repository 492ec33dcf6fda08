//! Experiment configuration and named presets.
//!
//! A config is a TOML document:
//!
//! ```toml
//! name = "sparsity"
//! seed = 2024
//! trials = 200
//! q = 0.2
//!
//! [design]
//! n = 300
//! p = 100
//! k = 10
//! amplitude = 3.5
//! covariance = { kind = "identity" }
//!
//! [sweep]
//! variable = "sparsity"
//! values = [5, 10, 20]
//!
//! [[methods]]
//! method = "orthogonal"
//! stat = "w2"
//!
//! [[methods]]
//! method = "general"
//! m = 2
//! ```
//!
//! Unknown keys are rejected.

use serde::{Deserialize, Serialize};

use crate::construct::{ConstructOptions, Method};
use crate::datagen::CovarianceModel;
use crate::error::{Error, Result};
use crate::stats::{StatKind, DEFAULT_MASK_FLOOR, DEFAULT_MU};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DesignSection {
    pub n: usize,
    pub p: usize,
    pub k: usize,
    pub amplitude: f64,
    pub covariance: CovarianceModel,
    /// Draw `β` once per grid point instead of once per trial.
    #[serde(default)]
    pub freeze_beta: bool,
}

impl Default for DesignSection {
    fn default() -> Self {
        Self {
            n: 300,
            p: 100,
            k: 10,
            amplitude: 3.5,
            covariance: CovarianceModel::Identity,
            freeze_beta: false,
        }
    }
}

/// The single quantity varied across grid points.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepVariable {
    /// `k`
    Sparsity,
    /// `A`
    Amplitude,
    /// `ρ` of the covariance model
    Correlation,
    /// `ℓ` with `n = 150ℓ`, `p = 50ℓ`, `k = 10ℓ`
    Scale,
    /// `ρ` of a group model
    WithinGroup,
    /// between-group factor of a group model
    BetweenGroup,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSection {
    pub variable: SweepVariable,
    pub values: Vec<f64>,
}

/// One construction paired with one statistic.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MethodSpec {
    pub method: Method,
    /// Defaults to `w2` for the orthogonal construction and `w1` otherwise.
    #[serde(default)]
    pub stat: Option<StatKind>,
    /// Class count for the general construction; overrides `construct.m`.
    #[serde(default)]
    pub m: Option<usize>,
    #[serde(default)]
    pub label: Option<String>,
}

impl MethodSpec {
    pub fn new(method: Method) -> Self {
        Self {
            method,
            stat: None,
            m: None,
            label: None,
        }
    }

    pub fn with_stat(mut self, stat: StatKind) -> Self {
        self.stat = Some(stat);
        self
    }

    pub fn with_m(mut self, m: usize) -> Self {
        self.m = Some(m);
        self
    }

    pub fn stat_kind(&self) -> StatKind {
        self.stat.unwrap_or(match self.method {
            Method::Orthogonal => StatKind::W2,
            _ => StatKind::W1,
        })
    }

    pub fn display_label(&self, opts: &ConstructOptions) -> String {
        if let Some(l) = &self.label {
            return l.clone();
        }
        let base = match self.method {
            Method::General => format!("general(m={})", self.m.unwrap_or(opts.m)),
            m => m.name().to_string(),
        };
        format!("{base}+{}", self.stat_kind())
    }

    /// Construction options with this spec's overrides applied.
    pub fn options(&self, base: &ConstructOptions) -> ConstructOptions {
        let mut o = base.clone();
        if let Some(m) = self.m {
            o.m = m;
        }
        o
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StatsSection {
    /// `λ = mu·‖Uᵀy‖/√(n − 2p)`
    pub mu: f64,
    /// Knockoff features with `s_i` below this are left out of the joint Lasso.
    pub mask_floor: f64,
}

impl Default for StatsSection {
    fn default() -> Self {
        Self {
            mu: DEFAULT_MU,
            mask_floor: DEFAULT_MASK_FLOOR,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default = "default_name")]
    pub name: String,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_trials")]
    pub trials: usize,
    #[serde(default = "default_q")]
    pub q: f64,
    #[serde(default)]
    pub design: DesignSection,
    pub sweep: SweepSection,
    pub methods: Vec<MethodSpec>,
    #[serde(default)]
    pub construct: ConstructOptions,
    #[serde(default)]
    pub stats: StatsSection,
}

fn default_name() -> String {
    "experiment".into()
}

fn default_trials() -> usize {
    200
}

fn default_q() -> f64 {
    0.2
}

/// Fully resolved setting at one grid point.
#[derive(Debug, Clone, PartialEq)]
pub struct GridPoint {
    pub index: usize,
    pub value: f64,
    pub n: usize,
    pub p: usize,
    pub k: usize,
    pub amplitude: f64,
    pub covariance: CovarianceModel,
}

fn as_count(v: f64, what: &str) -> Result<usize> {
    if v >= 0.0 && v.fract() == 0.0 && v.is_finite() {
        Ok(v as usize)
    } else {
        Err(Error::Config(format!("{what} value {v} is not a non-negative integer")))
    }
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_path(path: &std::path::Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_toml_str(&text).map_err(|e| match e {
            Error::Config(msg) => Error::Config(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        if self.trials == 0 {
            return Err(Error::Config("trials must be positive".into()));
        }
        if !(self.q > 0.0 && self.q < 1.0) {
            return Err(Error::Config(format!("q = {} outside (0, 1)", self.q)));
        }
        if self.methods.is_empty() {
            return Err(Error::Config("at least one [[methods]] entry is required".into()));
        }
        if self.sweep.values.is_empty() {
            return Err(Error::Config("sweep.values is empty".into()));
        }
        if !(self.stats.mu > 0.0) {
            return Err(Error::Config("stats.mu must be positive".into()));
        }
        for spec in &self.methods {
            if spec.stat_kind() == StatKind::LassoSignMax && !spec.method.is_knockoff() {
                return Err(Error::Config(format!(
                    "lasso_signmax needs a knockoff construction, got {}",
                    spec.method
                )));
            }
            if spec.m == Some(0) {
                return Err(Error::Config("m must be at least 1".into()));
            }
        }
        let mut labels: Vec<String> = self.methods.iter().map(|s| s.display_label(&self.construct)).collect();
        labels.sort();
        if labels.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::Config("two methods share a label; set `label` to tell them apart".into()));
        }
        for g in self.grid()? {
            if g.n <= 2 * g.p {
                return Err(Error::Config(format!(
                    "grid point {} ({}): need n > 2p, got n = {}, p = {}",
                    g.index, g.value, g.n, g.p
                )));
            }
            if g.k > g.p {
                return Err(Error::Config(format!("grid point {}: k = {} exceeds p = {}", g.index, g.k, g.p)));
            }
        }
        Ok(())
    }

    /// Resolves every grid point.
    pub fn grid(&self) -> Result<Vec<GridPoint>> {
        let d = &self.design;
        self.sweep
            .values
            .iter()
            .enumerate()
            .map(|(index, &value)| {
                let mut g = GridPoint {
                    index,
                    value,
                    n: d.n,
                    p: d.p,
                    k: d.k,
                    amplitude: d.amplitude,
                    covariance: d.covariance.clone(),
                };
                match self.sweep.variable {
                    SweepVariable::Sparsity => g.k = as_count(value, "sparsity")?,
                    SweepVariable::Amplitude => g.amplitude = value,
                    SweepVariable::Correlation | SweepVariable::WithinGroup => {
                        if matches!(d.covariance, CovarianceModel::Identity) {
                            return Err(Error::Config("cannot sweep the correlation of the identity model".into()));
                        }
                        if self.sweep.variable == SweepVariable::WithinGroup
                            && !matches!(d.covariance, CovarianceModel::Group { .. })
                        {
                            return Err(Error::Config("within_group sweep needs a group covariance".into()));
                        }
                        g.covariance = d.covariance.with_rho(value);
                    }
                    SweepVariable::Scale => {
                        let l = as_count(value, "scale")?;
                        g.n = 150 * l;
                        g.p = 50 * l;
                        g.k = 10 * l;
                    }
                    SweepVariable::BetweenGroup => match &mut g.covariance {
                        CovarianceModel::Group { between, .. } => *between = value,
                        _ => return Err(Error::Config("between_group sweep needs a group covariance".into())),
                    },
                }
                Ok(g)
            })
            .collect()
    }
}

/// Names accepted by [`preset`].
pub const PRESETS: [&str; 11] = [
    "sparsity",
    "amplitude",
    "correlation",
    "scale",
    "within_group",
    "between_group",
    "group_comparison",
    "decay_comparison",
    "precision_a",
    "precision_b",
    "precision_c",
];

fn figure_methods() -> Vec<MethodSpec> {
    vec![
        MethodSpec::new(Method::Orthogonal),
        MethodSpec::new(Method::BlockDiagonal),
        MethodSpec::new(Method::General).with_m(2),
    ]
}

fn comparison_methods() -> Vec<MethodSpec> {
    vec![
        MethodSpec::new(Method::Orthogonal),
        MethodSpec::new(Method::General).with_m(5),
        MethodSpec::new(Method::KnockoffSdp).with_stat(StatKind::W1),
        MethodSpec::new(Method::KnockoffSdp).with_stat(StatKind::LassoSignMax),
    ]
}

fn range(start: f64, step: f64, count: usize) -> Vec<f64> {
    // rounded so grid values print cleanly
    (0..count)
        .map(|i| ((start + step * i as f64) * 1e6).round() / 1e6)
        .collect()
}

/// A named experiment. Desk scale uses `p = 100`, `n = 300`, `k = 10`; the
/// `full_` prefix gives `p = 500`, `n = 1500`, `k = 30` with the full grids.
/// Letters `a`..`f` alias the six single-setting sweeps.
pub fn preset(name: &str) -> Result<ExperimentConfig> {
    let (full, base) = match name.strip_prefix("full_").or_else(|| name.strip_prefix("full-")) {
        Some(rest) => (true, rest),
        None => (false, name),
    };
    let base = match base {
        "a" => "sparsity",
        "b" => "amplitude",
        "c" => "correlation",
        "d" => "scale",
        "e" => "within_group",
        "f" => "between_group",
        other => other,
    };
    let base = base.replace('-', "_");
    let mut design = if full {
        DesignSection {
            n: 1500,
            p: 500,
            k: 30,
            ..DesignSection::default()
        }
    } else {
        DesignSection::default()
    };
    let group = |rho: f64, between: f64| CovarianceModel::Group {
        group_size: 5,
        rho,
        between,
    };
    let (variable, values, methods) = match base.as_str() {
        "sparsity" => (
            SweepVariable::Sparsity,
            if full { range(10.0, 10.0, 10) } else { vec![5.0, 10.0, 20.0] },
            figure_methods(),
        ),
        "amplitude" => (
            SweepVariable::Amplitude,
            if full { range(2.8, 0.1, 15) } else { vec![2.8, 3.5, 4.2] },
            figure_methods(),
        ),
        "correlation" => {
            design.covariance = CovarianceModel::Ar { rho: 0.0 };
            (
                SweepVariable::Correlation,
                if full { range(0.0, 0.1, 10) } else { vec![0.0, 0.5, 0.9] },
                figure_methods(),
            )
        }
        "scale" => (
            SweepVariable::Scale,
            if full { range(2.0, 1.0, 11) } else { vec![1.0, 2.0] },
            figure_methods(),
        ),
        "within_group" => {
            design.covariance = group(0.0, 0.0);
            (
                SweepVariable::WithinGroup,
                if full { range(0.0, 0.1, 10) } else { vec![0.5, 0.9] },
                figure_methods(),
            )
        }
        "between_group" => {
            design.covariance = group(0.5, 0.0);
            (
                SweepVariable::BetweenGroup,
                if full { range(0.0, 0.1, 10) } else { vec![0.0, 0.5, 0.9] },
                figure_methods(),
            )
        }
        "group_comparison" => {
            design.covariance = group(0.5, 0.0);
            design.amplitude = 5.0;
            let mut methods = comparison_methods();
            methods.insert(2, MethodSpec::new(Method::BlockDiagonal));
            (
                SweepVariable::WithinGroup,
                if full { range(0.5, 0.05, 10) } else { vec![0.5, 0.7, 0.9] },
                methods,
            )
        }
        "decay_comparison" => {
            design.covariance = CovarianceModel::Ar { rho: 0.5 };
            design.amplitude = 5.0;
            (
                SweepVariable::Correlation,
                if full { range(0.5, 0.05, 10) } else { vec![0.5, 0.7, 0.9] },
                comparison_methods(),
            )
        }
        "precision_a" | "precision_b" | "precision_c" => {
            design.amplitude = 5.0;
            design.covariance = match base.as_str() {
                "precision_a" => CovarianceModel::PrecisionA { rho: 0.5, block: 5 },
                "precision_b" => CovarianceModel::PrecisionB { rho: 0.5 },
                _ => CovarianceModel::PrecisionC { rho: 0.0 },
            };
            let values = match (base.as_str(), full) {
                ("precision_c", true) => range(0.0, 0.1, 10),
                ("precision_c", false) => vec![0.0, 0.5, 0.9],
                (_, true) => range(0.5, 0.05, 10),
                (_, false) => vec![0.5, 0.7, 0.9],
            };
            (SweepVariable::Correlation, values, comparison_methods())
        }
        _ => {
            return Err(Error::Config(format!(
                "unknown preset {name:?}; known: {} (optionally prefixed with full_)",
                PRESETS.join(", ")
            )))
        }
    };
    let cfg = ExperimentConfig {
        name: if full { format!("full_{base}") } else { base.clone() },
        seed: 20_170_101,
        trials: 200,
        q: 0.2,
        design,
        sweep: SweepSection { variable, values },
        methods,
        construct: ConstructOptions::default(),
        stats: StatsSection::default(),
    };
    cfg.validate()?;
    Ok(cfg)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn every_preset_is_valid() {
        for name in PRESETS {
            preset(name).unwrap();
            preset(&format!("full_{name}")).unwrap();
        }
        for letter in ["a", "b", "c", "d", "e", "f"] {
            preset(letter).unwrap();
        }
        assert!(preset("nope").is_err());
    }

    #[test]
    fn toml_round_trip() {
        let cfg = preset("within_group").unwrap();
        let text = cfg.to_toml_string().unwrap();
        assert_eq!(ExperimentConfig::from_toml_str(&text).unwrap(), cfg);
    }

    #[test]
    fn scale_sweep_keeps_ratios() {
        let cfg = preset("full_scale").unwrap();
        for g in cfg.grid().unwrap() {
            assert_eq!(g.n, 3 * g.p);
            assert_eq!(5 * g.k, g.p);
        }
    }

    #[test]
    fn bad_configs_are_rejected() {
        let base = r#"
            [sweep]
            variable = "sparsity"
            values = [5]
            [[methods]]
            method = "general"
        "#;
        assert!(ExperimentConfig::from_toml_str(base).is_ok());
        let unknown = format!("{base}\nbogus = 1");
        let err = ExperimentConfig::from_toml_str(&unknown).unwrap_err().to_string();
        assert!(err.contains("bogus"), "{err}");
        let narrow = base.replace("values = [5]", "values = [5]\n[design]\nn = 150\np = 100\nk = 5\namplitude = 3.5\ncovariance = { kind = \"identity\" }");
        assert!(ExperimentConfig::from_toml_str(&narrow).is_err());
        let frac = base.replace("values = [5]", "values = [5.5]");
        assert!(ExperimentConfig::from_toml_str(&frac).is_err());
        let lasso = base.replace("method = \"general\"", "method = \"general\"\nstat = \"lasso_signmax\"");
        assert!(ExperimentConfig::from_toml_str(&lasso).is_err());
    }

    #[test]
    fn default_statistics() {
        assert_eq!(MethodSpec::new(Method::Orthogonal).stat_kind(), StatKind::W2);
        assert_eq!(MethodSpec::new(Method::General).stat_kind(), StatKind::W1);
        let o = ConstructOptions::default();
        assert_eq!(MethodSpec::new(Method::General).with_m(5).display_label(&o), "general(m=5)+w1");
    }
}
