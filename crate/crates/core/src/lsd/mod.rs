//! Limiting spectral distribution of `B_n` under a scale mixture: Stieltjes
//! transform, support set and density.
//!
//! The spherical case `H = δ₁` is handled exactly by clearing denominators in
//! `z = −1/m + ∫ t/(1+ctm) dG(t)` and picking the root in the upper half
//! plane. A general population spectrum goes through the coupled
//! `(m, p, q)` system with a damped fixed-point iteration.

mod general;
mod mp;
pub(crate) mod poly;
mod spherical;
mod support;

use serde::{Deserialize, Serialize};

pub use general::{density_general, solve_system_general, GeneralSolverSettings};
pub use mp::{mp_reference, MarchenkoPastur};
pub use num_complex::Complex64;
pub use spherical::{density, density_at, solve_m_spherical, stieltjes_defect};
pub use support::{critical_ratio_two_atoms, find_support};

use crate::model::LsdModel;

/// Stieltjes transform value at `z`, with the auxiliary functions of the
/// general system when they were computed.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StieltjesSolution {
    pub z: Complex64,
    pub m: Complex64,
    pub p: Option<Complex64>,
    pub q: Option<Complex64>,
    pub residual: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub left: f64,
    pub right: f64,
}

impl Interval {
    pub fn contains(&self, x: f64) -> bool {
        self.left <= x && x <= self.right
    }

    pub fn width(&self) -> f64 {
        self.right - self.left
    }
}

/// `supp F` as an atom at zero plus disjoint closed intervals in increasing order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectralSupport {
    pub mass_at_zero: f64,
    pub intervals: Vec<Interval>,
}

impl SpectralSupport {
    pub fn contains(&self, x: f64) -> bool {
        (x == 0.0 && self.mass_at_zero > 0.0) || self.intervals.iter().any(|i| i.contains(x))
    }

    pub fn right_edge(&self) -> f64 {
        self.intervals.last().map_or(0.0, |i| i.right)
    }

    pub fn left_edge(&self) -> f64 {
        self.intervals.first().map_or(0.0, |i| i.left)
    }
}

/// Density sampled on one support interval.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DensityPiece {
    pub interval: Interval,
    pub grid: Vec<f64>,
    pub values: Vec<f64>,
}

impl DensityPiece {
    fn trapezoid(&self) -> f64 {
        self.grid
            .windows(2)
            .zip(self.values.windows(2))
            .map(|(x, f)| 0.5 * (x[1] - x[0]) * (f[0] + f[1]))
            .sum()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DensityCurve {
    pub mass_at_zero: f64,
    pub pieces: Vec<DensityPiece>,
    pub model: LsdModel,
}

impl DensityCurve {
    /// Trapezoid mass of the continuous part plus the atom at zero.
    pub fn total_mass(&self) -> f64 {
        self.mass_at_zero + self.pieces.iter().map(DensityPiece::trapezoid).sum::<f64>()
    }

    pub fn points(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.pieces
            .iter()
            .flat_map(|p| p.grid.iter().copied().zip(p.values.iter().copied()))
    }

    /// Cumulative distribution function obtained by trapezoid integration of the curve.
    pub fn cdf(&self) -> LsdCdf {
        let mut knots = Vec::new();
        let mut cum = Vec::new();
        let mut acc = self.mass_at_zero;
        for piece in &self.pieces {
            for (i, (&x, &f)) in piece.grid.iter().zip(&piece.values).enumerate() {
                if i > 0 {
                    acc += 0.5 * (x - piece.grid[i - 1]) * (f + piece.values[i - 1]);
                }
                knots.push(x);
                cum.push(acc);
            }
        }
        LsdCdf {
            mass_at_zero: self.mass_at_zero,
            knots,
            cum,
        }
    }
}

/// Piecewise-linear CDF of a limiting spectral distribution.
#[derive(Debug, Clone)]
pub struct LsdCdf {
    mass_at_zero: f64,
    knots: Vec<f64>,
    cum: Vec<f64>,
}

impl LsdCdf {
    pub fn eval(&self, x: f64) -> f64 {
        if x < 0.0 {
            return 0.0;
        }
        let idx = self.knots.partition_point(|&k| k <= x);
        if idx == 0 {
            return self.mass_at_zero;
        }
        if idx == self.knots.len() {
            return *self.cum.last().unwrap();
        }
        let (x0, x1) = (self.knots[idx - 1], self.knots[idx]);
        let (c0, c1) = (self.cum[idx - 1], self.cum[idx]);
        if x1 > x0 {
            c0 + (c1 - c0) * (x - x0) / (x1 - x0)
        } else {
            c0
        }
    }

    /// Kolmogorov distance between the empirical CDF of `sample` and this CDF.
    pub fn sup_distance(&self, sample: &[f64]) -> f64 {
        let mut xs = sample.to_vec();
        xs.sort_by(f64::total_cmp);
        let n = xs.len() as f64;
        xs.iter()
            .enumerate()
            .map(|(i, &x)| {
                let f = self.eval(x);
                let below = i as f64 / n;
                let above = (i + 1) as f64 / n;
                (f - below).abs().max((above - f).abs())
            })
            .fold(0.0, f64::max)
    }
}
