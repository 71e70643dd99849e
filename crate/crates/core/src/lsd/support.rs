use num_complex::Complex64;

use super::poly::Poly;
use super::{Interval, SpectralSupport};
use crate::error::{Error, Result};
use crate::model::{LsdModel, MixingDistribution};

/// `u(x) = −1/x + ∫ t/(1+ctx) dG(t)`, the real inverse of the Stieltjes transform.
fn inverse_map(g: &MixingDistribution, c: f64, x: f64) -> f64 {
    -1.0 / x + g.iter().map(|(t, w)| w * t / (1.0 + c * t * x)).sum::<f64>()
}

/// `x² u′(x) = 1 − (1/c) ∫ (ctx/(1+ctx))² dG(t)`; same sign as `u′`.
fn scaled_slope(g: &MixingDistribution, c: f64, x: f64) -> f64 {
    1.0 - g
        .iter()
        .map(|(t, w)| {
            let y = c * t * x;
            w * (y / (1.0 + y)).powi(2)
        })
        .sum::<f64>()
        / c
}

/// Numerator of `x² u′(x)` after multiplying by `Π(1+ctⱼx)²`.
fn slope_numerator(g: &MixingDistribution, c: f64) -> Poly {
    let sq = |t: f64| Poly::real(&[1.0, 2.0 * c * t, (c * t).powi(2)]);
    let mut all = Poly::real(&[1.0]);
    for &t in g.atoms() {
        all = all.mul(&sq(t));
    }
    let mut acc = all;
    for (j, (t, w)) in g.iter().enumerate() {
        let mut term = Poly::real(&[0.0, 0.0, -w * c * t * t]);
        for (k, &s) in g.atoms().iter().enumerate() {
            if k != j {
                term = term.mul(&sq(s));
            }
        }
        acc = acc.add(&term);
    }
    acc
}

fn bisect(f: impl Fn(f64) -> f64, mut lo: f64, mut hi: f64) -> f64 {
    let mut flo = f(lo);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if hi - lo <= 1e-12 * mid.abs().max(1.0) || mid == lo || mid == hi {
            break;
        }
        let fm = f(mid);
        if (fm > 0.0) == (flo > 0.0) {
            lo = mid;
            flo = fm;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Cut {
    Pole,
    Origin,
    Root,
}

/// Points where `u′` changes sign or is undefined, sorted.
fn sign_change_points(g: &MixingDistribution, c: f64) -> Result<Vec<(f64, Cut)>> {
    let slope = |x: f64| scaled_slope(g, c, x);
    let roots = slope_numerator(g, c)
        .trimmed()
        .roots()
        .ok_or_else(|| Error::numerical("root finder failed on the slope polynomial", f64::NAN))?;
    let mut candidates: Vec<f64> = roots
        .iter()
        .filter(|r: &&Complex64| r.im.abs() <= 1e-6 * r.re.abs().max(1.0))
        .map(|r| r.re)
        .collect();

    let mut breaks: Vec<(f64, Cut)> = g.atoms().iter().map(|&t| (-1.0 / (c * t), Cut::Pole)).collect();
    breaks.push((0.0, Cut::Origin));
    breaks.sort_by(|a, b| a.0.total_cmp(&b.0));

    let span = breaks
        .iter()
        .map(|b| b.0.abs())
        .chain(candidates.iter().map(|x| x.abs()))
        .fold(1.0, f64::max);
    let far = 4.0 * span + 1.0;
    let mut edges: Vec<f64> = vec![-far];
    edges.extend(breaks.iter().map(|b| b.0));
    edges.push(far);

    candidates.sort_by(f64::total_cmp);
    let mut out = breaks.clone();
    for seg in edges.windows(2) {
        let (lo, hi) = (seg[0], seg[1]);
        let mut pts = vec![lo];
        pts.extend(candidates.iter().copied().filter(|&x| x > lo && x < hi));
        pts.push(hi);
        let probes: Vec<f64> = pts.windows(2).map(|w| 0.5 * (w[0] + w[1])).collect();
        for w in probes.windows(2) {
            let (a, b) = (w[0], w[1]);
            if (slope(a) > 0.0) != (slope(b) > 0.0) {
                out.push((bisect(slope, a, b), Cut::Root));
            }
        }
    }
    out.sort_by(|a, b| a.0.total_cmp(&b.0));
    Ok(out)
}

/// Image under `u` of one side of a cut point.
fn limit(g: &MixingDistribution, c: f64, cut: (f64, Cut), from_left: bool) -> f64 {
    match cut.1 {
        Cut::Root => inverse_map(g, c, cut.0),
        Cut::Origin => {
            if from_left {
                f64::INFINITY
            } else {
                f64::NEG_INFINITY
            }
        }
        Cut::Pole => {
            if from_left {
                f64::NEG_INFINITY
            } else {
                f64::INFINITY
            }
        }
    }
}

/// Support of `F^{c,G}` for `H = δ₁`: the complement in `[0, ∞)` of the set
/// where `u` is increasing, plus the atom at zero when `c > 1`.
pub fn find_support(model: &LsdModel) -> Result<SpectralSupport> {
    model.validate()?;
    if !model.is_spherical() {
        return Err(Error::invalid("support finder requires H = δ₁"));
    }
    let (g, c) = (&model.mixing, model.c);
    let cuts = sign_change_points(g, c)?;

    let n = cuts.len();
    let probe = |k: usize| -> f64 {
        // k = 0 is the segment left of the first cut, k = n the one right of the last.
        if k == 0 {
            cuts[0].0 - (1.0 + cuts[0].0.abs())
        } else if k == n {
            cuts[n - 1].0 + (1.0 + cuts[n - 1].0.abs())
        } else {
            0.5 * (cuts[k - 1].0 + cuts[k].0)
        }
    };
    let positive: Vec<bool> = (0..=n).map(|k| scaled_slope(g, c, probe(k)) > 0.0).collect();

    // Roots where u' touches zero without changing sign are not cuts, so each
    // positive segment is already a maximal increasing run of u.
    let mut increasing: Vec<(f64, f64)> = (0..=n)
        .filter(|&k| positive[k])
        .map(|k| {
            let lo = if k == 0 { 0.0 } else { limit(g, c, cuts[k - 1], false) };
            let hi = if k == n { 0.0 } else { limit(g, c, cuts[k], true) };
            (lo, hi)
        })
        .collect();

    increasing.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut intervals = Vec::new();
    let mut cursor = 0.0_f64;
    for (lo, hi) in increasing {
        if hi <= cursor {
            continue;
        }
        if lo > cursor {
            intervals.push(Interval {
                left: cursor,
                right: lo,
            });
        }
        cursor = cursor.max(hi);
    }
    if cursor.is_finite() {
        return Err(Error::numerical(
            "support is unbounded above; the increasing set does not cover a right tail",
            cursor,
        ));
    }
    intervals.retain(|iv: &Interval| iv.width() > 1e-12 * iv.right.abs().max(1.0));

    Ok(SpectralSupport {
        mass_at_zero: model.mass_at_zero(),
        intervals,
    })
}

/// Smallest ratio `c` at which a two-atom mixture splits the support in two.
pub fn critical_ratio_two_atoms(g: &MixingDistribution) -> Result<f64> {
    if g.len() != 2 {
        return Err(Error::invalid(format!(
            "critical ratio needs exactly two distinct atoms, got {}",
            g.len()
        )));
    }
    let (t1, t2) = (g.atoms()[0], g.atoms()[1]);
    let (a1, a2) = (g.weights()[0] * t1 * t1, g.weights()[1] * t2 * t2);
    // ∫ t²/(1+tx)³ dG = 0  ⇔  ((1+t₂x)/(1+t₁x))³ = −a₂/a₁.
    let r = -(a2 / a1).cbrt();
    let x = (r - 1.0) / (t2 - r * t1);
    Ok(g.iter()
        .map(|(t, w)| w * (t * x).powi(2) / (1.0 + t * x).powi(2))
        .sum())
}
