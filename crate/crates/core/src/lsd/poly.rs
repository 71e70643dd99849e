//! Dense polynomials with complex coefficients and a simultaneous
//! (Aberth–Ehrlich) root finder.

use num_complex::Complex64;

/// Coefficients in ascending order: `c[0] + c[1] x + …`.
#[derive(Debug, Clone, PartialEq)]
pub(crate) struct Poly(pub Vec<Complex64>);

impl Poly {
    pub fn real(coeffs: &[f64]) -> Self {
        Poly(coeffs.iter().map(|&c| Complex64::new(c, 0.0)).collect())
    }

    pub fn degree(&self) -> usize {
        self.0.len().saturating_sub(1)
    }

    pub fn mul(&self, other: &Poly) -> Poly {
        let mut out = vec![Complex64::new(0.0, 0.0); self.0.len() + other.0.len() - 1];
        for (i, a) in self.0.iter().enumerate() {
            for (j, b) in other.0.iter().enumerate() {
                out[i + j] += a * b;
            }
        }
        Poly(out)
    }

    pub fn add(&self, other: &Poly) -> Poly {
        let n = self.0.len().max(other.0.len());
        let zero = Complex64::new(0.0, 0.0);
        Poly(
            (0..n)
                .map(|k| self.0.get(k).unwrap_or(&zero) + other.0.get(k).unwrap_or(&zero))
                .collect(),
        )
    }

    pub fn scale(&self, s: Complex64) -> Poly {
        Poly(self.0.iter().map(|c| c * s).collect())
    }

    /// Multiplies by `x`.
    pub fn shift(&self) -> Poly {
        let mut v = Vec::with_capacity(self.0.len() + 1);
        v.push(Complex64::new(0.0, 0.0));
        v.extend_from_slice(&self.0);
        Poly(v)
    }

    /// Value and first derivative by Horner's scheme.
    pub fn eval_with_derivative(&self, x: Complex64) -> (Complex64, Complex64) {
        let mut p = Complex64::new(0.0, 0.0);
        let mut dp = Complex64::new(0.0, 0.0);
        for c in self.0.iter().rev() {
            dp = dp * x + p;
            p = p * x + c;
        }
        (p, dp)
    }

    /// Drops leading coefficients that are negligible against the largest one.
    pub fn trimmed(&self) -> Poly {
        let scale = self.0.iter().map(|c| c.norm()).fold(0.0, f64::max);
        let mut v = self.0.clone();
        while v.len() > 1 && v.last().unwrap().norm() <= 1e-14 * scale {
            v.pop();
        }
        Poly(v)
    }

    /// All complex roots. Returns `None` when the iteration fails to settle.
    pub fn roots(&self) -> Option<Vec<Complex64>> {
        let p = self.trimmed();
        let n = p.degree();
        if n == 0 {
            return Some(Vec::new());
        }
        let lead = p.0[n];
        let monic = Poly(p.0.iter().map(|c| c / lead).collect());

        // Initial guesses on a circle sized by the geometric mean of the roots,
        // bounded by Cauchy's radius.
        let cauchy = 1.0 + monic.0[..n].iter().map(|c| c.norm()).fold(0.0, f64::max);
        let mut radius = monic.0[0].norm().powf(1.0 / n as f64);
        if !(radius.is_finite() && radius > 0.0) || radius > cauchy {
            radius = cauchy.min(1.0);
        }
        let mut z: Vec<Complex64> = (0..n)
            .map(|k| {
                Complex64::from_polar(
                    radius,
                    2.0 * std::f64::consts::PI * k as f64 / n as f64 + 0.4,
                )
            })
            .collect();

        let mut converged = false;
        for _ in 0..2000 {
            let mut max_step: f64 = 0.0;
            for k in 0..n {
                let (val, der) = monic.eval_with_derivative(z[k]);
                if val.norm() == 0.0 {
                    continue;
                }
                let ratio = val / der;
                let repulsion: Complex64 = (0..n)
                    .filter(|&j| j != k)
                    .map(|j| {
                        let d = z[k] - z[j];
                        if d.norm() == 0.0 {
                            Complex64::new(0.0, 0.0)
                        } else {
                            d.inv()
                        }
                    })
                    .sum();
                let step = ratio / (Complex64::new(1.0, 0.0) - ratio * repulsion);
                if step.is_finite() {
                    z[k] -= step;
                    max_step = max_step.max(step.norm() / z[k].norm().max(1e-300));
                }
            }
            if max_step < 1e-15 {
                converged = true;
                break;
            }
        }
        if !converged {
            // Clustered roots stall at the square root of machine precision;
            // accept if every residual is tiny relative to the coefficients.
            let scale: f64 = monic.0.iter().map(|c| c.norm()).sum();
            let ok = z.iter().all(|&x| {
                let (v, _) = monic.eval_with_derivative(x);
                v.norm() <= 1e-8 * scale * x.norm().max(1.0).powi(n as i32)
            });
            if !ok {
                return None;
            }
        }
        Some(z)
    }
}
