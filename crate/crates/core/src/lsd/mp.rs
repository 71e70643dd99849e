use num_complex::Complex64;

use super::{Interval, SpectralSupport};
use crate::error::{Error, Result};

/// Closed-form Marčenko–Pastur law with ratio `c` and scale `σ²`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MarchenkoPastur {
    pub c: f64,
    pub sigma2: f64,
}

impl MarchenkoPastur {
    pub fn edges(&self) -> (f64, f64) {
        let s = self.c.sqrt();
        (
            self.sigma2 * (1.0 - s).powi(2),
            self.sigma2 * (1.0 + s).powi(2),
        )
    }

    pub fn density(&self, x: f64) -> f64 {
        let (a, b) = self.edges();
        if x <= a || x >= b || x <= 0.0 {
            return 0.0;
        }
        ((b - x) * (x - a)).sqrt() / (2.0 * std::f64::consts::PI * self.c * self.sigma2 * x)
    }

    /// Root of `cσ²z m² + (z + σ²(c−1)) m + 1 = 0` in the upper half plane.
    pub fn stieltjes(&self, z: Complex64) -> Complex64 {
        let (c, s2) = (self.c, self.sigma2);
        let a = c * s2 * z;
        let b = z + s2 * (c - 1.0);
        let disc = (b * b - 4.0 * a).sqrt();
        let r1 = (-b + disc) / (2.0 * a);
        let r2 = (-b - disc) / (2.0 * a);
        if r1.im >= r2.im {
            r1
        } else {
            r2
        }
    }

    pub fn support(&self) -> SpectralSupport {
        let (a, b) = self.edges();
        SpectralSupport {
            mass_at_zero: (1.0 - 1.0 / self.c).max(0.0),
            intervals: vec![Interval { left: a, right: b }],
        }
    }
}

pub fn mp_reference(c: f64, sigma2: f64) -> Result<(SpectralSupport, MarchenkoPastur)> {
    if !(c > 0.0 && sigma2 > 0.0 && c.is_finite() && sigma2.is_finite()) {
        return Err(Error::invalid("Marčenko–Pastur parameters must be positive"));
    }
    let mp = MarchenkoPastur { c, sigma2 };
    Ok((mp.support(), mp))
}

#[cfg(test)]
mod tests {
    use super::*;

    /// ∫ f over [a, b] after x = a + (b−a)(1−cos θ)/2, which removes the
    /// square-root behaviour at both edges.
    fn cosine_quadrature(f: impl Fn(f64) -> f64, a: f64, b: f64, n: usize) -> f64 {
        let h = std::f64::consts::PI / n as f64;
        (0..n)
            .map(|k| {
                let theta = (k as f64 + 0.5) * h;
                let x = a + (b - a) * (1.0 - theta.cos()) / 2.0;
                f(x) * (b - a) * theta.sin() / 2.0 * h
            })
            .sum()
    }

    #[test]
    fn reference_supports() {
        let (s, _) = mp_reference(0.5, 1.0).unwrap();
        assert!((s.intervals[0].left - 0.0858).abs() < 5e-5);
        assert!((s.intervals[0].right - 2.9142).abs() < 5e-5);
        assert_eq!(s.mass_at_zero, 0.0);
        let (s, _) = mp_reference(1.0, 1.0).unwrap();
        assert_eq!(s.intervals[0], Interval { left: 0.0, right: 4.0 });
        let (s, _) = mp_reference(2.0, 1.0).unwrap();
        assert!((s.mass_at_zero - 0.5).abs() < 1e-15);
        assert!(mp_reference(0.0, 1.0).is_err());
    }

    #[test]
    fn density_integrates_to_continuous_mass() {
        for &(c, s2) in &[(0.5, 1.0), (1.0, 1.0), (2.0, 3.0), (0.1, 0.7)] {
            let (supp, mp) = mp_reference(c, s2).unwrap();
            let iv = supp.intervals[0];
            let mass = cosine_quadrature(|x| mp.density(x), iv.left, iv.right, 20_000);
            let expected = 1.0 - supp.mass_at_zero;
            assert!((mass - expected).abs() < 1e-4, "c={c}: {mass} vs {expected}");
        }
    }

    #[test]
    fn stieltjes_inverts_to_density() {
        let mp = MarchenkoPastur { c: 0.5, sigma2: 1.0 };
        for &x in &[0.3, 1.0, 2.5] {
            let m = mp.stieltjes(Complex64::new(x, 1e-10));
            assert!((m.im / std::f64::consts::PI - mp.density(x)).abs() < 1e-6);
        }
    }
}
