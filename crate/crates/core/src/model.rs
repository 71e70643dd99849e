//! Domain types shared by every other module: discrete mixing and
//! population spectral distributions, the `(c, G, H)` model triple, and the
//! standardized base laws used to generate the i.i.d. coordinates.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const SIMPLEX_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Serialize, Deserialize)]
struct RawMeasure {
    atoms: Vec<f64>,
    weights: Vec<f64>,
}

/// Validated discrete measure: sorted distinct positive atoms with positive
/// weights summing to one.
#[derive(Debug, Clone, PartialEq)]
struct Discrete {
    atoms: Vec<f64>,
    weights: Vec<f64>,
}

impl Discrete {
    fn new(atoms: Vec<f64>, weights: Vec<f64>) -> Result<Self> {
        if atoms.is_empty() {
            return Err(Error::invalid("a discrete measure needs at least one atom"));
        }
        if atoms.len() != weights.len() {
            return Err(Error::invalid(format!(
                "{} atoms but {} weights",
                atoms.len(),
                weights.len()
            )));
        }
        if let Some(a) = atoms.iter().find(|a| !(a.is_finite() && **a > 0.0)) {
            return Err(Error::invalid(format!("atom {a} is not a positive finite real")));
        }
        if let Some(w) = weights.iter().find(|w| !(w.is_finite() && **w > 0.0)) {
            return Err(Error::invalid(format!("weight {w} is not a positive finite real")));
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > SIMPLEX_TOL {
            return Err(Error::invalid(format!("weights sum to {total}, not 1")));
        }

        let mut pairs: Vec<(f64, f64)> = atoms.into_iter().zip(weights).collect();
        pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
        let mut atoms: Vec<f64> = Vec::with_capacity(pairs.len());
        let mut weights: Vec<f64> = Vec::with_capacity(pairs.len());
        for (a, w) in pairs {
            match atoms.last() {
                Some(&last) if last == a => *weights.last_mut().unwrap() += w,
                _ => {
                    atoms.push(a);
                    weights.push(w);
                }
            }
        }
        let total: f64 = weights.iter().sum();
        weights.iter_mut().for_each(|w| *w /= total);
        Ok(Discrete { atoms, weights })
    }

    fn moment(&self, k: u32) -> f64 {
        self.atoms
            .iter()
            .zip(&self.weights)
            .map(|(a, w)| w * a.powi(k as i32))
            .sum()
    }
}

/// Law `G` of the squared mixing variable `w²`, a finite mixture of point
/// masses `Σ αⱼ δ_{σⱼ²}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawMeasure", into = "RawMeasure")]
pub struct MixingDistribution {
    inner: Discrete,
}

impl TryFrom<RawMeasure> for MixingDistribution {
    type Error = Error;

    fn try_from(raw: RawMeasure) -> Result<Self> {
        MixingDistribution::new(raw.atoms, raw.weights)
    }
}

impl From<MixingDistribution> for RawMeasure {
    fn from(g: MixingDistribution) -> Self {
        RawMeasure {
            atoms: g.inner.atoms,
            weights: g.inner.weights,
        }
    }
}

impl MixingDistribution {
    /// Builds `Σ weights[j] δ_{atoms[j]}`. Atoms are sorted and exact
    /// duplicates merged; weights within 1e-12 of the simplex are renormalized.
    pub fn new(atoms: Vec<f64>, weights: Vec<f64>) -> Result<Self> {
        Ok(MixingDistribution {
            inner: Discrete::new(atoms, weights)?,
        })
    }

    pub fn point_mass(atom: f64) -> Result<Self> {
        Self::new(vec![atom], vec![1.0])
    }

    /// Equal-weight measure on the realized `w_i²`, i.e. the empirical law `G_n`.
    pub fn empirical(w_squares: &[f64]) -> Result<Self> {
        if w_squares.is_empty() {
            return Err(Error::invalid("empirical distribution of an empty sample"));
        }
        let mut sorted = w_squares.to_vec();
        sorted.sort_by(f64::total_cmp);
        let n = sorted.len() as f64;
        let mut atoms = Vec::new();
        let mut counts: Vec<usize> = Vec::new();
        for x in sorted {
            match atoms.last() {
                Some(&last) if last == x => *counts.last_mut().unwrap() += 1,
                _ => {
                    atoms.push(x);
                    counts.push(1);
                }
            }
        }
        let weights = counts.into_iter().map(|k| k as f64 / n).collect();
        Self::new(atoms, weights)
    }

    pub fn atoms(&self) -> &[f64] {
        &self.inner.atoms
    }

    pub fn weights(&self) -> &[f64] {
        &self.inner.weights
    }

    pub fn len(&self) -> usize {
        self.inner.atoms.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn is_degenerate(&self) -> bool {
        self.len() == 1
    }

    /// `γ_k = Σ αⱼ (σⱼ²)^k`, summed in atom order.
    pub fn moment(&self, k: u32) -> f64 {
        self.inner.moment(k)
    }

    /// `γ_0, …, γ_kmax`.
    pub fn moments(&self, kmax: u32) -> Vec<f64> {
        (0..=kmax).map(|k| self.moment(k)).collect()
    }

    /// Multiplies every atom by `s > 0`.
    pub fn scale(&self, s: f64) -> Result<Self> {
        if !(s.is_finite() && s > 0.0) {
            return Err(Error::invalid(format!("scale factor {s} must be positive")));
        }
        Self::new(
            self.inner.atoms.iter().map(|a| a * s).collect(),
            self.inner.weights.clone(),
        )
    }

    pub fn iter(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.inner
            .atoms
            .iter()
            .copied()
            .zip(self.inner.weights.iter().copied())
    }
}

/// Limit `H` of the spectral distribution of `T_p²`. Normalized so that its
/// first moment is one (`tr(T_p²) = p`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawMeasure", into = "RawMeasure")]
pub struct PopulationSpectralDistribution {
    inner: Discrete,
}

impl TryFrom<RawMeasure> for PopulationSpectralDistribution {
    type Error = Error;

    fn try_from(raw: RawMeasure) -> Result<Self> {
        PopulationSpectralDistribution::new(raw.atoms, raw.weights)
    }
}

impl From<PopulationSpectralDistribution> for RawMeasure {
    fn from(h: PopulationSpectralDistribution) -> Self {
        RawMeasure {
            atoms: h.inner.atoms,
            weights: h.inner.weights,
        }
    }
}

impl PopulationSpectralDistribution {
    pub fn new(atoms: Vec<f64>, weights: Vec<f64>) -> Result<Self> {
        let inner = Discrete::new(atoms, weights)?;
        let mean = inner.moment(1);
        if (mean - 1.0).abs() > SIMPLEX_TOL {
            return Err(Error::invalid(format!(
                "population spectral distribution has mean {mean}, expected 1"
            )));
        }
        Ok(PopulationSpectralDistribution { inner })
    }

    /// `H = δ₁`.
    pub fn identity() -> Self {
        PopulationSpectralDistribution {
            inner: Discrete {
                atoms: vec![1.0],
                weights: vec![1.0],
            },
        }
    }

    pub fn atoms(&self) -> &[f64] {
        &self.inner.atoms
    }

    pub fn weights(&self) -> &[f64] {
        &self.inner.weights
    }

    pub fn moment(&self, k: u32) -> f64 {
        self.inner.moment(k)
    }

    pub fn iter(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.inner
            .atoms
            .iter()
            .copied()
            .zip(self.inner.weights.iter().copied())
    }

    pub fn is_identity(&self) -> bool {
        self.inner.atoms == [1.0]
    }
}

/// The triple `(c, G, H)` that determines the limiting spectral distribution.
/// A missing `psd` means `H = δ₁`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LsdModel {
    pub c: f64,
    pub mixing: MixingDistribution,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub psd: Option<PopulationSpectralDistribution>,
}

impl LsdModel {
    pub fn new(c: f64, mixing: MixingDistribution) -> Result<Self> {
        Self::with_psd(c, mixing, None)
    }

    pub fn with_psd(
        c: f64,
        mixing: MixingDistribution,
        psd: Option<PopulationSpectralDistribution>,
    ) -> Result<Self> {
        if !(c.is_finite() && c > 0.0) {
            return Err(Error::invalid(format!("dimensional ratio c = {c} must be positive")));
        }
        Ok(LsdModel { c, mixing, psd })
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.c.is_finite() && self.c > 0.0) {
            return Err(Error::invalid(format!(
                "dimensional ratio c = {} must be positive",
                self.c
            )));
        }
        Ok(())
    }

    /// True when `H = δ₁`, either implicitly or explicitly.
    pub fn is_spherical(&self) -> bool {
        self.psd.as_ref().is_none_or(|h| h.is_identity())
    }

    pub fn psd_or_identity(&self) -> PopulationSpectralDistribution {
        self.psd
            .clone()
            .unwrap_or_else(PopulationSpectralDistribution::identity)
    }

    /// `max(0, 1 − 1/c)`, the rank-deficiency mass at zero.
    pub fn mass_at_zero(&self) -> f64 {
        (1.0 - 1.0 / self.c).max(0.0)
    }
}

/// Standardized law of the i.i.d. coordinates `z_ij`. Every variant has mean
/// zero and unit variance.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BaseDistribution {
    StandardNormal,
    /// `√(4/6) · t₆`
    ScaledT6,
    /// `√(1/6) · (χ²₃ − 3)`
    StandardizedChiSq3,
    /// `U(−√3, √3)`
    Uniform,
}

impl BaseDistribution {
    pub const ALL: [BaseDistribution; 4] = [
        BaseDistribution::StandardNormal,
        BaseDistribution::ScaledT6,
        BaseDistribution::StandardizedChiSq3,
        BaseDistribution::Uniform,
    ];

    /// Kurtosis excess `Δ = E z⁴ − 3`.
    pub fn kurtosis_excess(self) -> f64 {
        match self {
            BaseDistribution::StandardNormal => 0.0,
            BaseDistribution::ScaledT6 => 3.0,
            BaseDistribution::StandardizedChiSq3 => 4.0,
            BaseDistribution::Uniform => -1.2,
        }
    }
}
