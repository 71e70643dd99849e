use num_complex::Complex64;
use rayon::prelude::*;

use super::poly::Poly;
use super::{DensityCurve, DensityPiece, SpectralSupport, StieltjesSolution};
use crate::error::{Error, Result};
use crate::model::{LsdModel, MixingDistribution};

const ONE: Complex64 = Complex64::new(1.0, 0.0);

/// `z + 1/m − ∫ t/(1+ctm) dG(t)`, the defect of the defining equation.
pub fn stieltjes_defect(g: &MixingDistribution, c: f64, z: Complex64, m: Complex64) -> Complex64 {
    let mut acc = z + m.inv();
    for (t, w) in g.iter() {
        acc -= w * t / (ONE + c * t * m);
    }
    acc
}

fn defect_derivative(g: &MixingDistribution, c: f64, m: Complex64) -> Complex64 {
    let mut acc = -(m * m).inv();
    for (t, w) in g.iter() {
        let d = ONE + c * t * m;
        acc += w * c * t * t / (d * d);
    }
    acc
}

/// Polynomial in `m` obtained by multiplying the equation through by
/// `m Π(1+ctⱼm)`: `z m D(m) + D(m) − m Σ αⱼ tⱼ Π_{k≠j}(1+ct_k m)`.
fn cleared_polynomial(g: &MixingDistribution, c: f64, z: Complex64) -> Poly {
    let linear = |t: f64| Poly::real(&[1.0, c * t]);
    let mut d = Poly::real(&[1.0]);
    for &t in g.atoms() {
        d = d.mul(&linear(t));
    }
    let mut n = Poly::real(&[0.0]);
    for (j, (t, w)) in g.iter().enumerate() {
        let mut term = Poly::real(&[w * t]);
        for (k, &s) in g.atoms().iter().enumerate() {
            if k != j {
                term = term.mul(&linear(s));
            }
        }
        n = n.add(&term);
    }
    d.shift().scale(z).add(&d).add(&n.shift().scale(-ONE))
}

fn relative_residual(g: &MixingDistribution, c: f64, z: Complex64, m: Complex64) -> f64 {
    stieltjes_defect(g, c, z, m).norm() / z.norm().max(1.0)
}

/// Newton steps on the rational equation, keeping the best iterate.
fn polish(g: &MixingDistribution, c: f64, z: Complex64, m0: Complex64) -> (Complex64, f64) {
    let mut best = (m0, relative_residual(g, c, z, m0));
    let mut m = m0;
    for _ in 0..8 {
        let f = stieltjes_defect(g, c, z, m);
        let df = defect_derivative(g, c, m);
        let step = f / df;
        if !step.is_finite() {
            break;
        }
        m -= step;
        let r = relative_residual(g, c, z, m);
        if r < best.1 {
            best = (m, r);
        }
        if r == 0.0 || step.norm() <= 1e-16 * m.norm() {
            break;
        }
    }
    best
}

/// All roots of the cleared polynomial, polished, sorted by decreasing imaginary part.
fn candidate_roots(g: &MixingDistribution, c: f64, z: Complex64) -> Result<Vec<(Complex64, f64)>> {
    let poly = cleared_polynomial(g, c, z);
    let roots = poly
        .roots()
        .ok_or_else(|| Error::numerical("polynomial root finder did not converge", f64::NAN))?;
    let mut out: Vec<(Complex64, f64)> = roots
        .into_iter()
        .filter(|m| m.norm() > 0.0)
        .map(|m| polish(g, c, z, m))
        .collect();
    out.sort_by(|a, b| b.0.im.total_cmp(&a.0.im));
    Ok(out)
}

fn require_spherical(model: &LsdModel) -> Result<()> {
    model.validate()?;
    if !model.is_spherical() {
        return Err(Error::invalid(
            "the polynomial solver covers H = δ₁ only; use solve_system_general",
        ));
    }
    Ok(())
}

/// Stieltjes transform of `F^{c,G}` at `z` with `Im z > 0`.
///
/// The residual reported is `|defect| / max(1, |z|)`.
pub fn solve_m_spherical(model: &LsdModel, z: Complex64) -> Result<StieltjesSolution> {
    require_spherical(model)?;
    if !(z.im > 0.0) {
        return Err(Error::invalid(format!("Im z must be positive, got {z}")));
    }
    let roots = candidate_roots(&model.mixing, model.c, z)?;
    let (m, residual) = roots
        .first()
        .copied()
        .filter(|(m, _)| m.im > 0.0)
        .ok_or_else(|| Error::numerical("no root in the upper half plane", f64::NAN))?;
    Ok(StieltjesSolution {
        z,
        m,
        p: None,
        q: None,
        residual,
    })
}

/// Density `Im m(x)/π` on the real axis, taking the root of the cleared
/// polynomial with the largest imaginary part. Zero outside the support.
pub fn density_at(model: &LsdModel, x: f64) -> Result<f64> {
    require_spherical(model)?;
    let z = Complex64::new(x, 0.0);
    let roots = candidate_roots(&model.mixing, model.c, z)?;
    let Some(&(m, _)) = roots.first() else {
        return Ok(0.0);
    };
    // Roots that are real up to rounding come back with a tiny imaginary part.
    if m.im <= 1e-9 * m.norm().max(1e-12) {
        return Ok(0.0);
    }
    Ok(m.im / std::f64::consts::PI)
}

/// Density on a cosine-clustered grid of `points_per_interval` abscissae per
/// support interval; endpoints get density zero.
pub fn density(
    model: &LsdModel,
    support: &SpectralSupport,
    points_per_interval: usize,
) -> Result<DensityCurve> {
    require_spherical(model)?;
    if points_per_interval < 3 {
        return Err(Error::invalid("need at least three grid points per interval"));
    }
    let mut pieces = Vec::with_capacity(support.intervals.len());
    for iv in &support.intervals {
        let n = points_per_interval;
        let grid: Vec<f64> = (0..n)
            .map(|i| {
                let theta = std::f64::consts::PI * i as f64 / (n - 1) as f64;
                iv.left + iv.width() * (1.0 - theta.cos()) / 2.0
            })
            .collect();
        let values: Vec<f64> = grid
            .par_iter()
            .enumerate()
            .map(|(i, &x)| {
                if i == 0 || i == n - 1 || x <= iv.left || x >= iv.right {
                    Ok(0.0)
                } else {
                    density_at(model, x)
                }
            })
            .collect::<Result<_>>()?;
        let interior = &values[1..n - 1];
        if interior.iter().all(|&v| v == 0.0) {
            return Err(Error::numerical(
                format!(
                    "no root with positive imaginary part inside [{}, {}]",
                    iv.left, iv.right
                ),
                f64::NAN,
            ));
        }
        pieces.push(DensityPiece {
            interval: *iv,
            grid,
            values,
        });
    }
    Ok(DensityCurve {
        mass_at_zero: support.mass_at_zero,
        pieces,
        model: model.clone(),
    })
}
