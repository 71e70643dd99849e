use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::StieltjesSolution;
use crate::error::{Error, Result};
use crate::model::LsdModel;

const ONE: Complex64 = Complex64::new(1.0, 0.0);

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GeneralSolverSettings {
    pub tol: f64,
    pub max_iter: usize,
    pub damping: f64,
}

impl Default for GeneralSolverSettings {
    fn default() -> Self {
        Self {
            tol: 1e-10,
            max_iter: 10_000,
            damping: 0.5,
        }
    }
}

struct Defects {
    mixing: Complex64,
    population: Complex64,
    coupling: Complex64,
}

impl Defects {
    fn max(&self) -> f64 {
        self.mixing
            .norm()
            .max(self.population.norm())
            .max(self.coupling.norm())
    }
}

fn defects(model: &LsdModel, z: Complex64, m: Complex64, p: Complex64, q: Complex64) -> Defects {
    let c = model.c;
    let zm = z * m;
    let mix: Complex64 = model
        .mixing
        .iter()
        .map(|(t, w)| w * p * t / (ONE + c * p * t))
        .sum();
    let pop: Complex64 = model
        .psd_or_identity()
        .iter()
        .map(|(t, w)| w / (ONE + q * t))
        .sum::<Complex64>();
    Defects {
        mixing: zm - (mix - 1.0),
        population: zm + pop,
        coupling: zm - (-ONE - z * p * q),
    }
}

/// Solves the coupled system
///
/// ```text
/// z m = −1 + ∫ p t/(1+cpt) dG(t)
/// z m = −∫ 1/(1+qt) dH(t)
/// z m = −1 − z p q
/// ```
///
/// by eliminating `m` into the pair `p = −(1/z)∫ t/(1+qt) dH`,
/// `q = −(1/z)∫ t/(1+cpt) dG` and running damped Gauss–Seidel sweeps from
/// `p = q = −1/z`.
pub fn solve_system_general(
    model: &LsdModel,
    z: Complex64,
    settings: &GeneralSolverSettings,
) -> Result<StieltjesSolution> {
    model.validate()?;
    if !(z.im > 0.0) {
        return Err(Error::invalid(format!("Im z must be positive, got {z}")));
    }
    if !(settings.damping > 0.0 && settings.damping <= 1.0) {
        return Err(Error::invalid("damping must lie in (0, 1]"));
    }
    let c = model.c;
    let h = model.psd_or_identity();
    let zinv = z.inv();
    let d = settings.damping;

    let mut p = -zinv;
    let mut q = -zinv;
    let m_of = |p: Complex64, q: Complex64| (-ONE - z * p * q) * zinv;
    let mut residual = f64::INFINITY;
    for _ in 0..settings.max_iter {
        let p_new: Complex64 = -zinv * h.iter().map(|(t, w)| w * t / (ONE + q * t)).sum::<Complex64>();
        p = (1.0 - d) * p + d * p_new;
        let q_new: Complex64 = -zinv
            * model
                .mixing
                .iter()
                .map(|(t, w)| w * t / (ONE + c * p * t))
                .sum::<Complex64>();
        q = (1.0 - d) * q + d * q_new;
        residual = defects(model, z, m_of(p, q), p, q).max();
        if !residual.is_finite() {
            break;
        }
        if residual < settings.tol {
            let m = m_of(p, q);
            let companion = -(1.0 - c) * zinv + c * m;
            if !((z * p).im > 0.0 && q.im > 0.0 && companion.im > 0.0) {
                return Err(Error::numerical(
                    "fixed point left the uniqueness region",
                    residual,
                ));
            }
            return Ok(StieltjesSolution {
                z,
                m,
                p: Some(p),
                q: Some(q),
                residual,
            });
        }
    }
    Err(Error::numerical(
        format!("general system did not converge at z = {z}"),
        residual,
    ))
}

/// Density at `x` traced through `z = x + iε`.
pub fn density_general(model: &LsdModel, x: f64, eps: f64) -> Result<f64> {
    if !(eps > 0.0) {
        return Err(Error::invalid("eps must be positive"));
    }
    let sol = solve_system_general(
        model,
        Complex64::new(x, eps),
        &GeneralSolverSettings::default(),
    )?;
    Ok(sol.m.im.max(0.0) / std::f64::consts::PI)
}
