//! Moment estimator of a discrete mixing distribution of known order `m`.
//!
//! Sample spectral moments `β̂_0, …, β̂_{2m−1}` are mapped to mixing moments
//! `γ̂_0, …, γ̂_{2m−1}`, which are then inverted to `m` atoms and weights
//! through the Hankel pencil of the discrete moment problem.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::clt::beta_from_moments;
use crate::error::{Error, Result};
use crate::model::MixingDistribution;
use crate::sampler::{power_traces, SampleBatch};

/// Largest tolerated condition number of the moment matrix.
pub const MAX_CONDITION: f64 = 1e12;
/// Atoms closer than this are merged during projection.
pub const MERGE_DISTANCE: f64 = 1e-6;
/// Atoms are clamped to at least this value.
const MIN_ATOM: f64 = 1e-12;

/// Mixing moments `γ_0, γ_1, …` from spectral moments `β_0, β_1, …` of
/// `F^{c_n,G}` by solving the triangular moment recursion.
///
/// `betas[0]` is ignored and `γ_0 = 1` is returned in its place.
pub fn gamma_from_beta(betas: &[f64], c_n: f64) -> Result<Vec<f64>> {
    if !(c_n.is_finite() && c_n > 0.0) {
        return Err(Error::invalid(format!("ratio must be positive, got {c_n}")));
    }
    let mut gamma = Vec::with_capacity(betas.len().saturating_sub(1));
    for j in 1..betas.len() {
        // β_j is γ_j c^{j−1} plus terms in γ_1, …, γ_{j−1}.
        gamma.push(0.0);
        let rest = beta_from_moments(&gamma, c_n)[j - 1];
        gamma[j - 1] = (betas[j] - rest) / c_n.powi(j as i32 - 1);
    }
    let mut out = Vec::with_capacity(betas.len().max(1));
    out.push(1.0);
    out.extend(gamma);
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct ProjectionFlags {
    pub clamped_atoms: usize,
    pub clamped_weights: usize,
    pub merged_atoms: usize,
}

impl ProjectionFlags {
    pub fn any(&self) -> bool {
        self.clamped_atoms + self.clamped_weights + self.merged_atoms > 0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InversionDiagnostics {
    /// 2-norm condition number of the moment matrix `(γ_{i+j})`.
    pub hankel_condition: f64,
    /// Atoms and weights before projection.
    pub raw_atoms: Vec<f64>,
    pub raw_weights: Vec<f64>,
    pub projection: ProjectionFlags,
}

fn hankel(gammas: &[f64], m: usize, shift: usize) -> DMatrix<f64> {
    DMatrix::from_fn(m, m, |i, j| gammas[i + j + shift])
}

fn invert(gammas: &[f64], m: usize) -> Result<(MixingDistribution, InversionDiagnostics)> {
    if m == 0 {
        return Err(Error::invalid("order m must be at least 1"));
    }
    if gammas.len() < 2 * m {
        return Err(Error::invalid(format!(
            "order {m} needs {} moments, got {}",
            2 * m,
            gammas.len()
        )));
    }
    if let Some(g) = gammas.iter().find(|g| !g.is_finite()) {
        return Err(Error::invalid(format!("moment {g} is not finite")));
    }
    let h0 = hankel(gammas, m, 0);
    let h1 = hankel(gammas, m, 1);
    let sv = h0.singular_values();
    let condition = sv.max() / sv.min();
    if !(condition <= MAX_CONDITION) {
        return Err(Error::IllConditioned(condition));
    }
    // A valid moment sequence has a positive definite H₀, and then the pencil
    // (H₁, H₀) reduces to the symmetric matrix L⁻¹ H₁ L⁻ᵀ with real spectrum.
    let chol = h0.clone().cholesky().ok_or_else(|| {
        Error::InfeasibleMoments("moment matrix is not positive definite; atoms would be complex".into())
    })?;
    let l = chol.l();
    let l_inv = l
        .clone()
        .try_inverse()
        .ok_or_else(|| Error::IllConditioned(condition))?;
    let reduced = &l_inv * &h1 * l_inv.transpose();
    let reduced = (&reduced + reduced.transpose()) * 0.5;
    let mut raw_atoms: Vec<f64> = reduced.symmetric_eigenvalues().iter().copied().collect();
    raw_atoms.sort_by(f64::total_cmp);

    let vandermonde = DMatrix::from_fn(m, m, |k, j| raw_atoms[j].powi(k as i32));
    let rhs = DVector::from_column_slice(&gammas[..m]);
    let raw_weights: Vec<f64> = vandermonde
        .lu()
        .solve(&rhs)
        .ok_or_else(|| Error::InfeasibleMoments("repeated atoms in the moment inversion".into()))?
        .iter()
        .copied()
        .collect();

    let (g, projection) = project(&raw_atoms, &raw_weights)?;
    Ok((
        g,
        InversionDiagnostics {
            hankel_condition: condition,
            raw_atoms,
            raw_weights,
            projection,
        },
    ))
}

/// Clamps atoms positive and weights into `[0, 1]`, merges atoms closer than
/// [`MERGE_DISTANCE`] and renormalizes.
fn project(atoms: &[f64], weights: &[f64]) -> Result<(MixingDistribution, ProjectionFlags)> {
    let mut flags = ProjectionFlags::default();
    let mut pairs: Vec<(f64, f64)> = atoms
        .iter()
        .zip(weights)
        .map(|(&a, &w)| {
            let a2 = a.max(MIN_ATOM);
            let w2 = w.clamp(0.0, 1.0);
            flags.clamped_atoms += usize::from(a2 != a);
            flags.clamped_weights += usize::from(w2 != w);
            (a2, w2)
        })
        .filter(|&(_, w)| w > 0.0)
        .collect();
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut merged: Vec<(f64, f64)> = Vec::with_capacity(pairs.len());
    for (a, w) in pairs {
        match merged.last_mut() {
            Some((la, lw)) if a - *la < MERGE_DISTANCE => {
                *la = (*la * *lw + a * w) / (*lw + w);
                *lw += w;
                flags.merged_atoms += 1;
            }
            _ => merged.push((a, w)),
        }
    }
    let total: f64 = merged.iter().map(|p| p.1).sum();
    if !(total > 0.0) {
        return Err(Error::InfeasibleMoments("no atom keeps a positive weight".into()));
    }
    let (atoms, weights) = merged.into_iter().map(|(a, w)| (a, w / total)).unzip();
    Ok((MixingDistribution::new(atoms, weights)?, flags))
}

/// Inverts `γ_0, …, γ_{2m−1}` to an `m`-atom mixing distribution.
pub fn pmd_from_gamma(gammas: &[f64], m: usize) -> Result<MixingDistribution> {
    invert(gammas, m).map(|(g, _)| g)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PmdEstimate {
    pub mixing: MixingDistribution,
    /// `γ̂_0, …, γ̂_{2m−1}`.
    pub gamma_hat: Vec<f64>,
    pub diagnostics: InversionDiagnostics,
}

/// Estimates an `m`-atom mixing distribution from `β̂_0, …, β̂_{2m−1}`
/// (`β̂_0` is taken as 1).
pub fn estimate_pmd(betas: &[f64], c_n: f64, m: usize) -> Result<PmdEstimate> {
    if m == 0 {
        return Err(Error::invalid("order m must be at least 1"));
    }
    if betas.len() < 2 * m {
        return Err(Error::invalid(format!(
            "order {m} needs spectral moments of orders 0..{}",
            2 * m - 1
        )));
    }
    let gamma_hat = gamma_from_beta(&betas[..2 * m], c_n)?;
    let (mixing, diagnostics) = invert(&gamma_hat, m)?;
    Ok(PmdEstimate {
        mixing,
        gamma_hat,
        diagnostics,
    })
}

/// [`estimate_pmd`] applied to the sample spectral moments of a batch.
pub fn estimate_from_batch(batch: &SampleBatch, m: usize) -> Result<PmdEstimate> {
    if m == 0 {
        return Err(Error::invalid("order m must be at least 1"));
    }
    estimate_pmd(&power_traces(batch, 2 * m - 1), batch.ratio(), m)
}
