//! Limits and fluctuations of sample eigenvalue moments `β̂_j = tr(B_n^j)/p`.
//!
//! The covariance of the moment vector splits into a sampling part of order
//! `1/n` and a mixing part of order `1/√n`. Both reduce to Taylor
//! coefficients of `P(z)`, `Q(z)` and `R(z)` (see [`crate::series`]).

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lsd::{find_support, solve_m_spherical};
use crate::model::{LsdModel, MixingDistribution};
use crate::series::{default_order, p_power_over_square, qr_series, PowerSeries, UTable};

/// Square matrix stored row by row.
pub type Matrix = Vec<Vec<f64>>;

fn square(k: usize) -> Matrix {
    vec![vec![0.0; k]; k]
}

fn symmetrize(m: &mut Matrix) {
    let k = m.len();
    for i in 0..k {
        for j in i + 1..k {
            let avg = 0.5 * (m[i][j] + m[j][i]);
            m[i][j] = avg;
            m[j][i] = avg;
        }
    }
}

/// Visits every `(i₁, …, i_j)` with `i₁ + 2i₂ + … + j·i_j = j`.
fn for_each_partition(j: usize, f: &mut impl FnMut(&[usize])) {
    fn descend(part: usize, remaining: usize, counts: &mut Vec<usize>, f: &mut impl FnMut(&[usize])) {
        if part == 0 {
            if remaining == 0 {
                f(counts);
            }
            return;
        }
        for n in 0..=remaining / part {
            counts[part - 1] = n;
            descend(part - 1, remaining - n * part, counts, f);
        }
        counts[part - 1] = 0;
    }
    let mut counts = vec![0; j];
    descend(j, j, &mut counts, f);
}

fn ln_factorial(n: usize) -> f64 {
    (1..=n).map(|k| (k as f64).ln()).sum()
}

/// `j! / (i₁! ⋯ i_j! (j + 1 − Σi)!)`, an integer.
pub(crate) fn partition_weight(counts: &[usize]) -> f64 {
    let j = counts.len();
    let total: usize = counts.iter().sum();
    let ln = ln_factorial(j)
        - counts.iter().map(|&n| ln_factorial(n)).sum::<f64>()
        - ln_factorial(j + 1 - total);
    ln.exp().round()
}

/// Moments of `F^{c,G}` from the moments `γ_1, …, γ_k` of `G`.
pub fn beta_from_moments(gamma: &[f64], c: f64) -> Vec<f64> {
    (1..=gamma.len())
        .map(|j| {
            let mut acc = 0.0;
            for_each_partition(j, &mut |counts| {
                let total: usize = counts.iter().sum();
                let mut term = partition_weight(counts) * c.powi((j - total) as i32);
                for (l, &n) in counts.iter().enumerate() {
                    term *= gamma[l].powi(n as i32);
                }
                acc += term;
            });
            acc
        })
        .collect()
}

/// `β_1, …, β_k` of `F^{c_n,G}`.
pub fn beta_from_gamma(g: &MixingDistribution, c_n: f64, k: usize) -> Result<Vec<f64>> {
    if k == 0 {
        return Err(Error::invalid("need at least one moment"));
    }
    if !(c_n > 0.0) {
        return Err(Error::invalid(format!("ratio must be positive, got {c_n}")));
    }
    Ok(beta_from_moments(&g.moments(k as u32)[1..], c_n))
}

fn check_args(c: f64, k: usize) -> Result<()> {
    if k == 0 {
        return Err(Error::invalid("need at least one moment"));
    }
    if !(c.is_finite() && c > 0.0) {
        return Err(Error::invalid(format!("ratio must be positive, got {c}")));
    }
    Ok(())
}

/// Covariance of the mixing fluctuation `√n(β_{nj} − β_j)`.
pub fn psi2_matrix(g: &MixingDistribution, c: f64, k: usize) -> Result<Matrix> {
    check_args(c, k)?;
    let u = UTable::new(g, c, k + 1, default_order(k));
    let entry = |i: usize, j: usize| {
        let first: f64 = (0..=i).map(|l| u.u(i + 1, l) * u.u(j, i + j - l)).sum();
        let second: f64 = (0..i).map(|l| u.u(i, l) * u.u(j + 1, i + j - l)).sum();
        (first - second + u.u(i, i) * u.u(j, j)) / c
            - (u.u(i, i) + u.u(i + 1, i)) * (u.u(j, j) + u.u(j + 1, j))
    };
    let mut m = square(k);
    for i in 1..=k {
        for j in 1..=k {
            m[i - 1][j - 1] = entry(i, j);
        }
    }
    symmetrize(&mut m);
    Ok(m)
}

/// Covariance `Ψ₁` of the sampling fluctuation `n(β̂_{nj} − β_{nj})` and its
/// limiting mean `v`, for a base law with kurtosis excess `delta`.
pub fn psi1_matrix_and_v(
    g: &MixingDistribution,
    c: f64,
    delta: f64,
    k: usize,
) -> Result<(Matrix, Vec<f64>)> {
    check_args(c, k)?;
    let order = default_order(k);
    let u = UTable::new(g, c, k, order);
    let (q, r) = qr_series(g, c, order);
    let r_inv = r.recip()?;
    let qw = &q * &(&r_inv + &PowerSeries::constant(delta, order));

    let v: Vec<f64> = (1..=k)
        .map(|j| {
            if j < 2 {
                0.0
            } else {
                (u.power(j) * &qw).coeff(j - 2)
            }
        })
        .collect();

    // a[atom][i-1] = coefficient of z^{i-1} in P^i/(1+ctz)².
    let a: Vec<Vec<f64>> = g
        .atoms()
        .iter()
        .map(|&t| {
            (1..=k)
                .map(|i| p_power_over_square(u.power(i), c, t).coeff(i - 1))
                .collect()
        })
        .collect();

    let mut psi = square(k);
    for i in 1..=k {
        for j in 1..=k {
            let sampling: f64 = (0..i)
                .map(|l| (i - l) as f64 * u.u(i, l) * u.u(j, i + j - l))
                .sum();
            let kurt: f64 = g
                .iter()
                .zip(&a)
                .map(|((t, w), at)| w * t * t * at[i - 1] * at[j - 1])
                .sum();
            psi[i - 1][j - 1] = 2.0 * sampling / (c * c) + delta * kurt / c;
        }
    }
    symmetrize(&mut psi);
    Ok((psi, v))
}

/// Everything needed for the corrected CLT of the first `k` moments.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CltParams {
    pub k: usize,
    pub c: f64,
    pub delta: f64,
    pub beta: Vec<f64>,
    pub v: Vec<f64>,
    pub psi1: Matrix,
    pub psi2: Matrix,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n: Option<usize>,
}

impl CltParams {
    pub fn compute(g: &MixingDistribution, c: f64, delta: f64, k: usize) -> Result<Self> {
        let beta = beta_from_gamma(g, c, k)?;
        let (psi1, v) = psi1_matrix_and_v(g, c, delta, k)?;
        let psi2 = psi2_matrix(g, c, k)?;
        Ok(CltParams {
            k,
            c,
            delta,
            beta,
            v,
            psi1,
            psi2,
            n: None,
        })
    }

    pub fn with_n(mut self, n: usize) -> Self {
        self.n = Some(n);
        self
    }
}

/// Mean and covariance of `√n(β̂_{n1} − β_1, …, β̂_{nk} − β_k)` under the
/// finite-sample correction: `N(v/√n, Ψ₁/n + Ψ₂)`.
pub fn corrected_law(params: &CltParams, n: usize) -> Result<(Vec<f64>, Matrix)> {
    if n < 2 {
        return Err(Error::invalid(format!("sample size must be at least 2, got {n}")));
    }
    let nf = n as f64;
    let mean = params.v.iter().map(|v| v / nf.sqrt()).collect();
    let cov = params
        .psi1
        .iter()
        .zip(&params.psi2)
        .map(|(r1, r2)| r1.iter().zip(r2).map(|(a, b)| a / nf + b).collect())
        .collect();
    Ok((mean, cov))
}

/// Stieltjes transform and its derivative on a circle `|z| = radius`.
struct ContourSamples {
    z: Vec<Complex64>,
    m: Vec<Complex64>,
    dm: Vec<Complex64>,
}

impl ContourSamples {
    fn new(model: &LsdModel, radius: f64, nodes: usize) -> Result<Option<Self>> {
        let (g, c) = (&model.mixing, model.c);
        let tmax = g.atoms().iter().copied().fold(0.0, f64::max);
        let mut out = ContourSamples {
            z: Vec::with_capacity(nodes),
            m: Vec::with_capacity(nodes),
            dm: Vec::with_capacity(nodes),
        };
        // Half-step offset keeps every node off the real axis; lower-half values
        // follow from m(z̄) = conj m(z).
        let half = nodes / 2;
        let upper: Vec<(Complex64, Complex64)> = (0..half)
            .map(|k| {
                let theta = std::f64::consts::PI * (k as f64 + 0.5) / half as f64;
                let z = Complex64::from_polar(radius, theta);
                solve_m_spherical(model, z).map(|s| (z, s.m))
            })
            .collect::<Result<_>>()?;
        for (z, m) in upper.iter().copied().chain(upper.iter().map(|(z, m)| (z.conj(), m.conj()))) {
            if c * tmax * m.norm() >= 1.0 {
                return Ok(None);
            }
            // dz/dm from z = −1/m + ∫ t/(1+ctm) dG.
            let dz: Complex64 = (m * m).inv()
                - g.iter()
                    .map(|(t, w)| w * c * t * t / (1.0 + c * t * m).powi(2))
                    .sum::<Complex64>();
            out.z.push(z);
            out.m.push(m);
            out.dm.push(dz.inv());
        }
        Ok(Some(out))
    }

    /// Trapezoid weights `dz = i z dθ`.
    fn dz(&self) -> impl Iterator<Item = Complex64> + '_ {
        let dtheta = 2.0 * std::f64::consts::PI / self.z.len() as f64;
        self.z.iter().map(move |z| Complex64::new(0.0, dtheta) * z)
    }
}

const CONTOUR_NODES: usize = 512;

fn contours(model: &LsdModel) -> Result<(ContourSamples, ContourSamples)> {
    let support = find_support(model)?;
    let edge = support.right_edge();
    if !(edge > 0.0) {
        return Err(Error::invalid("support has no continuous part"));
    }
    let mut radius = 2.0 * edge;
    for _ in 0..40 {
        if let (Some(inner), Some(outer)) = (
            ContourSamples::new(model, radius, CONTOUR_NODES)?,
            ContourSamples::new(model, 1.3 * radius, CONTOUR_NODES)?,
        ) {
            if radius <= edge {
                return Err(Error::invalid("contour intersects the support"));
            }
            return Ok((inner, outer));
        }
        radius *= 1.25;
    }
    Err(Error::numerical(
        "could not find a contour with |c t m(z)| < 1",
        radius,
    ))
}

/// `Ψ₂` entries for `1 ≤ i, j ≤ k` by trapezoid quadrature of the three double
/// contour integrals, on two concentric circles enclosing the support.
pub fn contour_oracle_psi2_matrix(g: &MixingDistribution, c: f64, k: usize) -> Result<Matrix> {
    check_args(c, k)?;
    let model = LsdModel::new(c, g.clone())?;
    let (a, b) = contours(&model)?;
    let scale = 1.0 / (4.0 * std::f64::consts::PI.powi(2));

    let wa: Vec<Complex64> = a.dz().zip(&a.dm).map(|(d, dm)| d * dm).collect();
    let wb: Vec<Complex64> = b.dz().zip(&b.dm).map(|(d, dm)| d * dm).collect();

    // Kernel of the non-separable term, contracted against powers of z₂.
    let mut coupled = vec![vec![Complex64::new(0.0, 0.0); k + 1]; a.z.len()];
    for (ia, row) in coupled.iter_mut().enumerate() {
        for ib in 0..b.z.len() {
            let kern = wb[ib] * (a.z[ia] - b.z[ib]) / (c * (a.m[ia] - b.m[ib]));
            let mut zp = b.z[ib];
            for item in row.iter_mut().skip(1) {
                *item += kern * zp;
                zp *= b.z[ib];
            }
        }
    }

    let separable = |s: &ContourSamples, w: &[Complex64], power: usize, f: &dyn Fn(Complex64, Complex64) -> Complex64| {
        s.z.iter()
            .zip(&s.m)
            .zip(w)
            .map(|((&z, &m), &wt)| wt * z.powu(power as u32) * f(z, m))
            .sum::<Complex64>()
    };
    let recip = |_: Complex64, m: Complex64| m.inv();
    let shifted = |z: Complex64, m: Complex64| (1.0 + z * m) / m;

    let mut out = square(k);
    for i in 1..=k {
        for j in 1..=k {
            let first: Complex64 = (0..a.z.len())
                .map(|ia| wa[ia] * a.z[ia].powu(i as u32) * coupled[ia][j])
                .sum();
            let second = separable(&a, &wa, i, &recip) * separable(&b, &wb, j, &recip) / c;
            let third = separable(&a, &wa, i, &shifted) * separable(&b, &wb, j, &shifted);
            out[i - 1][j - 1] = (scale * (first - second + third)).re;
        }
    }
    symmetrize(&mut out);
    Ok(out)
}

/// Single entry of [`contour_oracle_psi2_matrix`].
pub fn contour_oracle_psi2(g: &MixingDistribution, c: f64, i: usize, j: usize) -> Result<f64> {
    if i == 0 || j == 0 {
        return Err(Error::invalid("moment indices start at 1"));
    }
    let m = contour_oracle_psi2_matrix(g, c, i.max(j))?;
    Ok(m[i - 1][j - 1])
}
