//! Truncated power series over `f64`.
//!
//! The moment CLT parameters are Taylor coefficients of products and powers
//! of `P(z)`, `Q(z)` and `1/R(z)` at the origin, so everything here works on
//! coefficient vectors cut at a fixed order `N`.

use std::ops::{Add, Mul, Neg, Sub};

use crate::error::{Error, Result};
use crate::model::MixingDistribution;

/// `a₀ + a₁z + … + a_N z^N`, truncated at order `N`.
#[derive(Debug, Clone, PartialEq)]
pub struct PowerSeries {
    coeffs: Vec<f64>,
}

impl PowerSeries {
    pub fn zero(order: usize) -> Self {
        PowerSeries {
            coeffs: vec![0.0; order + 1],
        }
    }

    pub fn constant(value: f64, order: usize) -> Self {
        let mut s = Self::zero(order);
        s.coeffs[0] = value;
        s
    }

    pub fn one(order: usize) -> Self {
        Self::constant(1.0, order)
    }

    /// Builds a series of the given order from leading coefficients; missing
    /// ones are zero and extra ones are dropped.
    pub fn from_coeffs(coeffs: &[f64], order: usize) -> Self {
        let mut s = Self::zero(order);
        for (dst, src) in s.coeffs.iter_mut().zip(coeffs) {
            *dst = *src;
        }
        s
    }

    pub fn order(&self) -> usize {
        self.coeffs.len() - 1
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    /// Coefficient of `z^k`, zero beyond the truncation order.
    pub fn coeff(&self, k: usize) -> f64 {
        self.coeffs.get(k).copied().unwrap_or(0.0)
    }

    fn check_order(&self, other: &PowerSeries) -> Result<()> {
        if self.order() != other.order() {
            return Err(Error::invalid(format!(
                "series orders differ: {} vs {}",
                self.order(),
                other.order()
            )));
        }
        Ok(())
    }

    pub fn try_add(&self, other: &PowerSeries) -> Result<PowerSeries> {
        self.check_order(other)?;
        Ok(PowerSeries {
            coeffs: self
                .coeffs
                .iter()
                .zip(&other.coeffs)
                .map(|(a, b)| a + b)
                .collect(),
        })
    }

    pub fn try_mul(&self, other: &PowerSeries) -> Result<PowerSeries> {
        self.check_order(other)?;
        Ok(self.mul_unchecked(other))
    }

    fn mul_unchecked(&self, other: &PowerSeries) -> PowerSeries {
        let n = self.order();
        let mut out = vec![0.0; n + 1];
        for (i, &a) in self.coeffs.iter().enumerate() {
            if a == 0.0 {
                continue;
            }
            for (j, &b) in other.coeffs[..=n - i].iter().enumerate() {
                out[i + j] += a * b;
            }
        }
        PowerSeries { coeffs: out }
    }

    pub fn scale(&self, s: f64) -> PowerSeries {
        PowerSeries {
            coeffs: self.coeffs.iter().map(|a| a * s).collect(),
        }
    }

    /// `self^s` by repeated squaring, truncating after every product.
    pub fn pow(&self, mut s: u32) -> PowerSeries {
        let mut result = PowerSeries::one(self.order());
        let mut base = self.clone();
        while s > 0 {
            if s & 1 == 1 {
                result = result.mul_unchecked(&base);
            }
            s >>= 1;
            if s > 0 {
                base = base.mul_unchecked(&base);
            }
        }
        result
    }

    /// Multiplicative inverse, defined when the constant term is nonzero.
    pub fn recip(&self) -> Result<PowerSeries> {
        let a0 = self.coeffs[0];
        if a0 == 0.0 {
            return Err(Error::SingularSeries);
        }
        let n = self.order();
        let mut b = vec![0.0; n + 1];
        b[0] = 1.0 / a0;
        for k in 1..=n {
            let acc: f64 = (1..=k).map(|i| self.coeffs[i] * b[k - i]).sum();
            b[k] = -acc / a0;
        }
        Ok(PowerSeries { coeffs: b })
    }
}

impl Add for &PowerSeries {
    type Output = PowerSeries;

    fn add(self, rhs: &PowerSeries) -> PowerSeries {
        self.try_add(rhs).expect("series order mismatch")
    }
}

impl Sub for &PowerSeries {
    type Output = PowerSeries;

    fn sub(self, rhs: &PowerSeries) -> PowerSeries {
        self.try_add(&-rhs).expect("series order mismatch")
    }
}

impl Mul for &PowerSeries {
    type Output = PowerSeries;

    fn mul(self, rhs: &PowerSeries) -> PowerSeries {
        self.try_mul(rhs).expect("series order mismatch")
    }
}

impl Neg for &PowerSeries {
    type Output = PowerSeries;

    fn neg(self) -> PowerSeries {
        self.scale(-1.0)
    }
}

/// Truncation order that covers every coefficient needed for moments up to `k`.
pub fn default_order(k: usize) -> usize {
    2 * k + 2
}

/// Taylor series of `P(m) = −1 + ∫ tm/(1+ctm) dG(t) = −1 − (1/c) Σ γ_k (−cm)^k`.
pub fn p_series(g: &MixingDistribution, c: f64, order: usize) -> PowerSeries {
    let mut s = PowerSeries::zero(order);
    s.coeffs[0] = -1.0;
    for k in 1..=order {
        s.coeffs[k] = -g.moment(k as u32) * (-c).powi(k as i32) / c;
    }
    s
}

/// Binomial series of `(1 + a z)^(−r)`.
fn inverse_binomial(a: f64, r: u32, order: usize) -> PowerSeries {
    let mut s = PowerSeries::zero(order);
    let mut coef = 1.0;
    for k in 0..=order {
        s.coeffs[k] = coef;
        // C(r+k, k+1) / C(r+k-1, k) = (r+k)/(k+1)
        coef *= -a * (r as f64 + k as f64) / (k as f64 + 1.0);
    }
    s
}

/// Series of `t^j / (1 + c t z)^r` integrated against `G`, termwise over atoms.
fn integrated_binomial(g: &MixingDistribution, c: f64, j: i32, r: u32, order: usize) -> PowerSeries {
    let mut acc = PowerSeries::zero(order);
    for (t, w) in g.iter() {
        let term = inverse_binomial(c * t, r, order).scale(w * t.powi(j));
        acc = &acc + &term;
    }
    acc
}

/// Taylor series of `Q(z) = ∫ t²/(1+ctz)³ dG` and `R(z) = 1 − c ∫ (zt)²/(1+ctz)² dG`.
pub fn qr_series(g: &MixingDistribution, c: f64, order: usize) -> (PowerSeries, PowerSeries) {
    let q = integrated_binomial(g, c, 2, 3, order);
    let inner = integrated_binomial(g, c, 2, 2, order);
    let mut r = PowerSeries::one(order);
    for k in 2..=order {
        r.coeffs[k] -= c * inner.coeffs[k - 2];
    }
    (q, r)
}

/// `P(z)^i / (1+ctz)²` for a single atom `t`.
pub(crate) fn p_power_over_square(p_pow: &PowerSeries, c: f64, t: f64) -> PowerSeries {
    p_pow * &inverse_binomial(c * t, 2, p_pow.order())
}

/// Table of `u_{s,t}`, the coefficient of `z^t` in `P(z)^s`, for
/// `s ≤ max_power` and `t ≤ order`.
#[derive(Debug, Clone)]
pub struct UTable {
    powers: Vec<PowerSeries>,
}

impl UTable {
    pub fn new(g: &MixingDistribution, c: f64, max_power: usize, order: usize) -> Self {
        let p = p_series(g, c, order);
        let mut powers = Vec::with_capacity(max_power + 1);
        powers.push(PowerSeries::one(order));
        for s in 1..=max_power {
            let next = &powers[s - 1] * &p;
            powers.push(next);
        }
        UTable { powers }
    }

    pub fn u(&self, s: usize, t: usize) -> f64 {
        self.powers[s].coeff(t)
    }

    /// The full series `P^s`.
    pub fn power(&self, s: usize) -> &PowerSeries {
        &self.powers[s]
    }
}

/// `u_{s,t}`: coefficient of `z^t` in the Taylor expansion of `P(z)^s`.
pub fn u_coeff(g: &MixingDistribution, c: f64, s: u32, t: usize) -> f64 {
    p_series(g, c, t.max(1)).pow(s).coeff(t)
}
