use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{BaseDistribution, MixingDistribution};
use crate::sphericity::{GammaVariant, TestMethod};

/// Value of the `schema` field accepted by this version.
pub const CONFIG_SCHEMA: &str = "mixspec.experiment.v1";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExperimentKind {
    /// Empirical sizes of the tests under spherical mixtures.
    SizeTable,
    /// Rejection rates under the two-level diagonal alternative, one cell per spread `x` in `grid`.
    PowerCurve,
    /// Size of the tests as the last atom of the mixing distribution moves over `grid`.
    TypeIExplosion,
    /// Eigenvalue histogram of one sample against the limiting density.
    EsdOverlay,
    /// Fluctuations of the first spectral moments against their corrected normal law.
    QqMoments,
    /// Monte Carlo behaviour of the mixing distribution estimator.
    EstimatorTable,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Dims {
    pub p: usize,
    pub n: usize,
}

impl Dims {
    pub fn ratio(&self) -> f64 {
        self.p as f64 / self.n as f64
    }
}

fn default_schema() -> String {
    CONFIG_SCHEMA.to_string()
}

fn default_bases() -> Vec<BaseDistribution> {
    vec![BaseDistribution::StandardNormal]
}

fn default_reps() -> usize {
    2000
}

fn default_alpha() -> f64 {
    0.05
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default = "default_schema")]
    pub schema: String,
    pub kind: ExperimentKind,
    /// Mixing distributions, crossed with `bases` and `dims`.
    pub mixings: Vec<MixingDistribution>,
    #[serde(default = "default_bases")]
    pub bases: Vec<BaseDistribution>,
    pub dims: Vec<Dims>,
    #[serde(default = "default_reps")]
    pub reps: usize,
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    #[serde(default)]
    pub seed: u64,
    /// Key of the coordinate permutations; derived from `seed` when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub perm_seed: Option<u64>,
    #[serde(default)]
    pub methods: Vec<TestMethod>,
    /// Spreads `x` for power curves, last-atom values for type-I explosion.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub grid: Vec<f64>,
    /// Kurtosis excess used by the tests and the moment law; the base law's value when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub delta: Option<f64>,
    #[serde(default)]
    pub gamma_variant: GammaVariant,
    /// Number of atoms fitted by the estimator.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub order: Option<usize>,
    /// Histogram bins of the overlay.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bins: Option<usize>,
    /// Number of spectral moments tracked by the moment fluctuation study.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub moments: Option<usize>,
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let config: ExperimentConfig = serde_json::from_str(text)?;
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        if self.schema != CONFIG_SCHEMA {
            return Err(Error::invalid(format!(
                "unsupported config schema {:?}, expected {CONFIG_SCHEMA:?}",
                self.schema
            )));
        }
        if self.reps == 0 {
            return Err(Error::invalid("reps must be at least 1"));
        }
        if self.dims.is_empty() {
            return Err(Error::invalid("dims must not be empty"));
        }
        if let Some(d) = self.dims.iter().find(|d| d.p == 0 || d.n < 2) {
            return Err(Error::invalid(format!("invalid dimensions p = {}, n = {}", d.p, d.n)));
        }
        if self.mixings.is_empty() {
            return Err(Error::invalid("at least one mixing distribution is required"));
        }
        if self.bases.is_empty() {
            return Err(Error::invalid("at least one base distribution is required"));
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::invalid(format!("alpha must lie in (0, 1), got {}", self.alpha)));
        }
        let testing = matches!(
            self.kind,
            ExperimentKind::SizeTable | ExperimentKind::PowerCurve | ExperimentKind::TypeIExplosion
        );
        if testing && self.methods.is_empty() {
            return Err(Error::invalid("test experiments need at least one method"));
        }
        match self.kind {
            ExperimentKind::PowerCurve => {
                if self.grid.is_empty() {
                    return Err(Error::invalid("power curves need a grid of spreads"));
                }
                if self.dims.iter().any(|d| d.p % 2 != 0) {
                    return Err(Error::invalid("power curves need even dimensions"));
                }
            }
            ExperimentKind::TypeIExplosion => {
                if self.grid.is_empty() || self.grid.iter().any(|s| !(s.is_finite() && *s > 0.0)) {
                    return Err(Error::invalid("type-I explosion needs a grid of positive atoms"));
                }
                if self.mixings.iter().any(|g| g.len() != 2) {
                    return Err(Error::invalid(
                        "type-I explosion templates must have exactly two atoms",
                    ));
                }
            }
            ExperimentKind::EstimatorTable => {
                if !matches!(self.order, Some(m) if m >= 1) {
                    return Err(Error::invalid("estimator tables need order ≥ 1"));
                }
            }
            ExperimentKind::QqMoments => {
                if matches!(self.moments, Some(0)) {
                    return Err(Error::invalid("moments must be at least 1"));
                }
            }
            ExperimentKind::EsdOverlay => {
                if matches!(self.bins, Some(b) if b < 2) {
                    return Err(Error::invalid("bins must be at least 2"));
                }
            }
            ExperimentKind::SizeTable => {}
        }
        Ok(())
    }
}
