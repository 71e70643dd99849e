//! Sphericity tests `H₀: Σ_p = σ² I_p` built on John's statistic and on the
//! permutation statistic `T_n = β̂_{n2} − β̌_{n2}`.
//!
//! All tests reject for large values of their standardized statistic.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::MixingDistribution;
use crate::sampler::MomentStats;
use crate::special::{chi2_sf, normal_quantile, normal_sf};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum TestMethod {
    /// Fixed-dimension chi-square calibration.
    #[serde(rename = "john")]
    JohnClassical,
    /// High-dimensional normal calibration `nU − p → N(Δ+1, 4)`.
    #[serde(rename = "john-corrected")]
    JohnCorrected,
    /// Calibration under a known mixing distribution.
    #[serde(rename = "john-oracle")]
    JohnOracle,
    #[serde(rename = "tn")]
    PermutationTn,
}

impl TestMethod {
    pub const ALL: [TestMethod; 4] = [
        TestMethod::JohnClassical,
        TestMethod::JohnCorrected,
        TestMethod::JohnOracle,
        TestMethod::PermutationTn,
    ];

    pub fn name(self) -> &'static str {
        match self {
            TestMethod::JohnClassical => "john",
            TestMethod::JohnCorrected => "john-corrected",
            TestMethod::JohnOracle => "john-oracle",
            TestMethod::PermutationTn => "tn",
        }
    }
}

impl std::str::FromStr for TestMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        TestMethod::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| Error::invalid(format!("unknown test method {s:?}")))
    }
}

/// Which estimate of `γ₂` scales `T_n`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GammaVariant {
    Hat,
    #[default]
    Check,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TestReport {
    pub method: TestMethod,
    pub statistic: f64,
    pub standardized: f64,
    pub p_value: f64,
    pub reject: bool,
    pub alpha: f64,
    pub ingredients: MomentStats,
}

fn report(method: TestMethod, statistic: f64, standardized: f64, p_value: f64, alpha: f64, stats: &MomentStats) -> TestReport {
    let p_value = p_value.clamp(0.0, 1.0);
    TestReport {
        method,
        statistic,
        standardized,
        p_value,
        reject: p_value < alpha,
        alpha,
        ingredients: *stats,
    }
}

fn check_alpha(alpha: f64) -> Result<()> {
    if alpha > 0.0 && alpha < 1.0 {
        Ok(())
    } else {
        Err(Error::invalid(format!("alpha must lie in (0, 1), got {alpha}")))
    }
}

/// John's statistic `U = β̂_{n2}/β̂_{n1}² − 1`.
pub fn john_u(stats: &MomentStats) -> Result<f64> {
    if !(stats.beta1_hat > 0.0) {
        return Err(Error::invalid("first spectral moment must be positive"));
    }
    Ok(stats.beta2_hat / (stats.beta1_hat * stats.beta1_hat) - 1.0)
}

/// Degrees of freedom `p(p+1)/2 − 1` of the fixed-dimension reference law.
pub fn john_classical_df(p: usize) -> f64 {
    (p * (p + 1)) as f64 / 2.0 - 1.0
}

/// `nU` against `2χ²_f/p`.
pub fn john_classical(stats: &MomentStats, alpha: f64) -> Result<TestReport> {
    check_alpha(alpha)?;
    let u = john_u(stats)?;
    let (p, n) = (stats.p as f64, stats.n as f64);
    let f = john_classical_df(stats.p);
    let nu = n * u;
    let chi = p * nu / 2.0;
    let standardized = (chi - f) / (2.0 * f).sqrt();
    Ok(report(TestMethod::JohnClassical, nu, standardized, chi2_sf(f, chi), alpha, stats))
}

/// `(nU − p − Δ − 1)/2` against `N(0, 1)`.
pub fn john_corrected(stats: &MomentStats, delta: f64, alpha: f64) -> Result<TestReport> {
    check_alpha(alpha)?;
    let u = john_u(stats)?;
    let (p, n) = (stats.p as f64, stats.n as f64);
    let statistic = n * u - p;
    let standardized = (statistic - delta - 1.0) / 2.0;
    Ok(report(TestMethod::JohnCorrected, statistic, standardized, normal_sf(standardized), alpha, stats))
}

/// Limiting law of John's statistic under a spherical mixture:
/// `√n(U − c γ₂/γ₁²) ≈ N(mean/√n, var_sampling/n + var_mixing)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct JohnMixtureLaw {
    /// `γ₂/γ₁²`.
    pub dispersion: f64,
    pub mean: f64,
    pub var_sampling: f64,
    pub var_mixing: f64,
}

impl JohnMixtureLaw {
    pub fn new(g: &MixingDistribution, c: f64, delta: f64) -> Result<Self> {
        if !(c > 0.0) {
            return Err(Error::invalid(format!("ratio must be positive, got {c}")));
        }
        let m = g.moments(4);
        let (g1, g2, g3, g4) = (m[1], m[2], m[3], m[4]);
        let g1_6 = g1.powi(6);
        let var_sampling = 4.0
            * (c * delta * (g1 * g1 * g4 - 2.0 * g1 * g2 * g3 + g2.powi(3))
                + (2.0 * c * g1 * g1 * g4 - 4.0 * c * g1 * g2 * g3
                    + 2.0 * c * g2.powi(3)
                    + g1 * g1 * g2 * g2))
            / g1_6;
        let var_mixing =
            c * c * (g1 * g1 * (g4 - g2 * g2) + 4.0 * (g2.powi(3) - g1 * g2 * g3)) / g1_6;
        Ok(JohnMixtureLaw {
            dispersion: g2 / (g1 * g1),
            mean: (1.0 + delta) * g2 / (g1 * g1),
            var_sampling,
            var_mixing,
        })
    }

    /// Standard deviation of `√n(U − c γ₂/γ₁²)` at sample size `n`.
    pub fn sd(&self, n: f64) -> f64 {
        (self.var_sampling / n + self.var_mixing).sqrt()
    }
}

/// John's test calibrated with the known mixing distribution.
pub fn john_oracle(stats: &MomentStats, g: &MixingDistribution, delta: f64, alpha: f64) -> Result<TestReport> {
    check_alpha(alpha)?;
    let u = john_u(stats)?;
    let n = stats.n as f64;
    let law = JohnMixtureLaw::new(g, stats.c_n, delta)?;
    let statistic = n.sqrt() * (u - stats.c_n * law.dispersion);
    let standardized = (statistic - law.mean / n.sqrt()) / law.sd(n);
    Ok(report(TestMethod::JohnOracle, statistic, standardized, normal_sf(standardized), alpha, stats))
}

/// Predicted rejection rate of [`john_corrected`] when the data come from a
/// spherical mixture with mixing distribution `g`.
pub fn john_corrected_type1(g: &MixingDistribution, p: usize, n: usize, delta: f64, alpha: f64) -> Result<f64> {
    check_alpha(alpha)?;
    let (pf, nf) = (p as f64, n as f64);
    let law = JohnMixtureLaw::new(g, pf / nf, delta)?;
    let z_alpha = normal_quantile(1.0 - alpha);
    let threshold = (2.0 * z_alpha + delta + 1.0 + pf * (1.0 - law.dispersion)) / nf.sqrt();
    Ok(normal_sf((threshold - law.mean / nf.sqrt()) / law.sd(nf)))
}

/// Permutation test: `nT_n/(√8 γ_{n2})` against `N(0, 1)`.
pub fn tn_test(stats: &MomentStats, variant: GammaVariant, alpha: f64) -> Result<TestReport> {
    check_alpha(alpha)?;
    let gamma2 = match variant {
        GammaVariant::Hat => stats.gamma2_hat,
        GammaVariant::Check => stats.gamma2_check,
    };
    if !(gamma2 > 0.0) {
        return Err(Error::numerical(
            "second mixing moment estimate is not positive",
            gamma2,
        ));
    }
    let tn = stats.beta2_hat - stats.beta2_check;
    let standardized = stats.n as f64 * tn / (8.0f64.sqrt() * gamma2);
    Ok(report(TestMethod::PermutationTn, tn, standardized, normal_sf(standardized), alpha, stats))
}

/// Expected value of `T_n` for population covariance `sigma`:
/// `((n−1)/(np)) [Σ(σ_ii − D)² + Σ_{i≠j}(σ_ij − R)²]`.
pub fn delta_n(sigma: &DMatrix<f64>, n: usize) -> Result<f64> {
    let p = sigma.nrows();
    if p == 0 || sigma.ncols() != p {
        return Err(Error::invalid("covariance must be a non-empty square matrix"));
    }
    let d = sigma.diagonal().mean();
    let off_count = (p * (p - 1)) as f64;
    let r = if p > 1 {
        (sigma.sum() - sigma.trace()) / off_count
    } else {
        0.0
    };
    let mut acc = 0.0;
    for i in 0..p {
        for j in 0..p {
            let centre = if i == j { d } else { r };
            acc += (sigma[(i, j)] - centre).powi(2);
        }
    }
    let nf = n as f64;
    Ok((nf - 1.0) / (nf * p as f64) * acc)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::clt::CltParams;

    fn stats(p: usize, n: usize, b1: f64, b2: f64) -> MomentStats {
        let c = p as f64 / n as f64;
        MomentStats {
            p,
            n,
            beta1_hat: b1,
            beta2_hat: b2,
            beta1_check: b1,
            beta2_check: b2,
            gamma2_hat: (b2 - b1 * b1) / c,
            gamma2_check: (b2 - b1 * b1) / c,
            c_n: c,
        }
    }

    #[test]
    fn john_u_arithmetic() {
        assert!((john_u(&stats(2, 10, 2.0, 5.0)).unwrap() - 0.25).abs() < 1e-15);
        assert_eq!(john_u(&stats(3, 10, 1.5, 2.25)).unwrap(), 0.0);
        assert!(john_u(&stats(3, 10, 0.0, 1.0)).is_err());
    }

    #[test]
    fn classical_median_gives_half() {
        let p = 4;
        assert_eq!(john_classical_df(p), 9.0);
        // Median of χ²₉.
        let median = 8.342_832_692_252_04;
        let n = 50;
        // nU = 2·median/p.
        let u = 2.0 * median / p as f64 / n as f64;
        let s = stats(p, n, 1.0, 1.0 + u);
        let r = john_classical(&s, 0.05).unwrap();
        assert!((r.p_value - 0.5).abs() < 1e-6, "{}", r.p_value);
        assert!(!r.reject);
    }

    #[test]
    fn corrected_boundary() {
        let (p, n, delta) = (200, 400, 0.0);
        let z = normal_quantile(0.95);
        let nu = 2.0 * z + delta + 1.0 + p as f64;
        let s = stats(p, n, 1.0, 1.0 + nu / n as f64);
        let r = john_corrected(&s, delta, 0.05).unwrap();
        assert!((r.standardized - z).abs() < 1e-9);
        assert!((r.p_value - 0.05).abs() < 1e-9);
    }

    #[test]
    fn degenerate_mixture_law() {
        let g = MixingDistribution::point_mass(2.0).unwrap();
        let law = JohnMixtureLaw::new(&g, 0.5, 3.0).unwrap();
        assert!((law.var_sampling - 4.0).abs() < 1e-12);
        assert!(law.var_mixing.abs() < 1e-12);
        assert!((law.mean - 4.0).abs() < 1e-12);
    }

    #[test]
    fn law_matches_delta_method_on_moment_clt() {
        let cases = [
            (vec![1.0, 3.0], vec![0.4, 0.6], 0.5, 0.0),
            (vec![1.0, 2.0, 3.0], vec![0.3, 0.4, 0.3], 2.0, 3.0),
            (vec![0.5, 1.0, 7.0], vec![0.2, 0.5, 0.3], 1.3, -1.2),
        ];
        for (atoms, weights, c, delta) in cases {
            let g = MixingDistribution::new(atoms, weights).unwrap();
            let params = CltParams::compute(&g, c, delta, 2).unwrap();
            let (b1, b2) = (params.beta[0], params.beta[1]);
            let grad = [-2.0 * b2 / b1.powi(3), 1.0 / (b1 * b1)];
            let quad = |m: &Vec<Vec<f64>>| {
                (0..2)
                    .map(|i| (0..2).map(|j| grad[i] * m[i][j] * grad[j]).sum::<f64>())
                    .sum::<f64>()
            };
            let law = JohnMixtureLaw::new(&g, c, delta).unwrap();
            assert!((law.var_mixing - quad(&params.psi2)).abs() < 1e-10 * law.var_mixing.max(1.0));
            assert!((law.var_sampling - quad(&params.psi1)).abs() < 1e-10 * law.var_sampling.max(1.0));
            assert!((law.mean - params.v[1] / (b1 * b1)).abs() < 1e-12);
        }
    }

    #[test]
    fn type1_curve_starts_at_alpha() {
        let g = MixingDistribution::point_mass(1.0).unwrap();
        let rate = john_corrected_type1(&g, 200, 400, 0.0, 0.05).unwrap();
        assert!((rate - 0.05).abs() < 1e-12);
        let mix = MixingDistribution::new(vec![1.0, 1.6], vec![0.5, 0.5]).unwrap();
        assert!(john_corrected_type1(&mix, 200, 400, 0.0, 0.05).unwrap() > 0.95);
    }

    #[test]
    fn tn_degenerate_and_errors() {
        let s = stats(1, 10, 2.0, 4.5);
        let r = tn_test(&s, GammaVariant::Check, 0.05).unwrap();
        assert_eq!(r.statistic, 0.0);
        assert_eq!(r.standardized, 0.0);
        assert!((r.p_value - 0.5).abs() < 1e-15);
        let flat = stats(3, 10, 1.0, 1.0);
        assert!(matches!(
            tn_test(&flat, GammaVariant::Hat, 0.05),
            Err(Error::NumericalFailure { .. })
        ));
    }

    #[test]
    fn delta_n_examples() {
        let p = 6;
        let cs = DMatrix::from_fn(p, p, |i, j| if i == j { 2.5 } else { 0.7 });
        assert!(delta_n(&cs, 50).unwrap().abs() < 1e-24);
        assert_eq!(delta_n(&DMatrix::identity(p, p), 50).unwrap(), 0.0);
        let x = 0.3;
        let n = 200;
        let diag = DMatrix::from_fn(400, 400, |i, j| {
            if i != j {
                0.0
            } else if i < 200 {
                1.0 - x
            } else {
                1.0 + x
            }
        });
        let d = delta_n(&diag, n).unwrap();
        assert!((d - (1.0 - 1.0 / n as f64) * x * x).abs() < 1e-12);
        assert!((d - 0.089_55).abs() < 1e-12);
    }

    #[test]
    fn method_names_round_trip() {
        for m in TestMethod::ALL {
            assert_eq!(m.name().parse::<TestMethod>().unwrap(), m);
            assert_eq!(serde_json::to_string(&m).unwrap(), format!("\"{}\"", m.name()));
        }
    }
}
