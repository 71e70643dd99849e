//! End-to-end acceptance checks. Each test prints one `criterion N: PASS|FAIL`
//! line with the numbers behind the verdict, then asserts.

use std::fs;
use std::path::Path;
use std::process::{Command, Output};
use std::time::Instant;

use mixspec::clt::{beta_from_gamma, contour_oracle_psi2_matrix, corrected_law, psi2_matrix, CltParams};
use mixspec::harness::{run, CellRecord, Dims, ExperimentConfig, ExperimentKind, ExperimentResult, RunOptions, CONFIG_SCHEMA};
use mixspec::lsd::{critical_ratio_two_atoms, density_at, find_support, SpectralSupport};
use mixspec::sampler::derive_seed;
use mixspec::sphericity::{GammaVariant, TestMethod};
use mixspec::{BaseDistribution, LsdModel, MixingDistribution};

fn verdict(criterion: u32, pass: bool, detail: &str) {
    println!(
        "criterion {criterion}: {} | {detail}",
        if pass { "PASS" } else { "FAIL" }
    );
    assert!(pass, "criterion {criterion} failed: {detail}");
}

fn mixing(atoms: &[f64], weights: &[f64]) -> MixingDistribution {
    MixingDistribution::new(atoms.to_vec(), weights.to_vec()).unwrap()
}

fn g1() -> MixingDistribution {
    mixing(&[1.0, 2.0], &[0.5, 0.5])
}

fn g2() -> MixingDistribution {
    mixing(&[1.0, 2.0, 3.0], &[0.3, 0.4, 0.3])
}

fn g3() -> MixingDistribution {
    mixing(&[1.0, 2.0, 3.0, 4.0], &[0.2, 0.3, 0.3, 0.2])
}

/// Uniform draw in `[lo, hi)` from a counter.
fn uniform(seed: u64, index: u64, lo: f64, hi: f64) -> f64 {
    let u = (derive_seed(seed, index) >> 11) as f64 / (1u64 << 53) as f64;
    lo + (hi - lo) * u
}

fn config(kind: ExperimentKind, mixings: Vec<MixingDistribution>, dims: Vec<Dims>, reps: usize) -> ExperimentConfig {
    ExperimentConfig {
        schema: CONFIG_SCHEMA.into(),
        kind,
        mixings,
        bases: vec![BaseDistribution::StandardNormal],
        dims,
        reps,
        alpha: 0.05,
        seed: 20_240_601,
        perm_seed: None,
        methods: vec![],
        grid: vec![],
        delta: None,
        gamma_variant: GammaVariant::Check,
        order: None,
        bins: None,
        moments: None,
    }
}

fn run_config(config: &ExperimentConfig) -> ExperimentResult {
    let result = run(config, &RunOptions::default()).unwrap();
    for rec in &result.records {
        if let Some(e) = &rec.error {
            println!("  note: {} {} p={} n={} failed {}: {e}", rec.target, rec.metric, rec.p, rec.n, rec.failed);
        }
    }
    result
}

fn support_matches(s: &SpectralSupport, expected: &[(f64, f64)], mass_at_zero: f64, tol: f64) -> bool {
    s.intervals.len() == expected.len()
        && (s.mass_at_zero - mass_at_zero).abs() < 1e-12
        && s.intervals
            .iter()
            .zip(expected)
            .all(|(iv, &(l, r))| (iv.left - l).abs() <= tol && (iv.right - r).abs() <= tol)
}

#[test]
fn criterion_01_support_fixtures() {
    let cases: [(f64, &[f64], &[f64], &[(f64, f64)], f64, f64); 5] = [
        (0.5, &[1.0, 9.0], &[0.5, 0.5], &[(0.2, 18.5)], 0.0, 0.05),
        (2.0, &[1.0, 9.0], &[0.5, 0.5], &[(0.26, 3.56), (5.14, 41.04)], 0.5, 0.005),
        (2.0, &[0.5, 5.0], &[0.4, 0.6], &[(0.1450, 1.5618), (2.3027, 24.1683)], 0.5, 5e-4),
        (10.0, &[0.2, 0.7, 1.0], &[0.3, 0.4, 0.3], &[(1.2223, 2.5178), (4.2013, 14.5272)], 0.9, 5e-4),
        (0.5, &[2.5, 0.5], &[0.25, 0.75], &[(0.0576, 4.0674)], 0.0, 5e-4),
    ];
    let start = Instant::now();
    let supports: Vec<SpectralSupport> = cases
        .iter()
        .map(|(c, a, w, ..)| find_support(&LsdModel::new(*c, mixing(a, w)).unwrap()).unwrap())
        .collect();
    let elapsed = start.elapsed().as_secs_f64();
    let mut pass = elapsed < 1.0;
    let mut detail = String::new();
    for (s, (c, a, _, expected, zero, tol)) in supports.iter().zip(&cases) {
        let ok = support_matches(s, expected, *zero, *tol);
        pass &= ok;
        let found: Vec<String> = s
            .intervals
            .iter()
            .map(|iv| format!("[{:.4}, {:.4}]", iv.left, iv.right))
            .collect();
        detail += &format!("c={c} atoms={a:?}: {} {}; ", found.join("∪"), if ok { "ok" } else { "MISMATCH" });
    }
    detail += &format!("time {elapsed:.3}s");
    verdict(1, pass, &detail);
}

#[test]
fn criterion_02_critical_ratio() {
    let c0 = critical_ratio_two_atoms(&mixing(&[1.0, 9.0], &[0.5, 0.5])).unwrap();
    verdict(2, (c0 - 1.1808).abs() <= 1e-3, &format!("critical ratio {c0:.6} vs 1.1808 ± 1e-3"));
}

#[test]
fn criterion_03_mp_degeneracy() {
    let mut worst_edge: f64 = 0.0;
    let mut worst_density: f64 = 0.0;
    for &(c, s2) in &[(0.3, 1.0), (0.8, 2.5), (2.0, 1.0), (0.5, 0.7)] {
        let model = LsdModel::new(c, MixingDistribution::point_mass(s2).unwrap()).unwrap();
        let support = find_support(&model).unwrap();
        let a = s2 * (1.0 - f64::sqrt(c)).powi(2);
        let b = s2 * (1.0 + f64::sqrt(c)).powi(2);
        assert_eq!(support.intervals.len(), 1);
        let iv = support.intervals[0];
        worst_edge = worst_edge.max((iv.left - a).abs()).max((iv.right - b).abs());
        for i in 0..1000 {
            let x = a + (b - a) * (i as f64 + 0.5) / 1000.0;
            let closed = ((b - x) * (x - a)).sqrt() / (2.0 * std::f64::consts::PI * s2 * c * x);
            let f = density_at(&model, x).unwrap();
            worst_density = worst_density.max((f - closed).abs());
        }
    }
    verdict(
        3,
        worst_edge <= 1e-8 && worst_density <= 1e-6,
        &format!("max edge error {worst_edge:.2e} (tol 1e-8), max density error {worst_density:.2e} on 4×1000 points (tol 1e-6)"),
    );
}

#[test]
fn criterion_04_clt_fixtures() {
    let g = mixing(&[1.0, 3.0], &[0.4, 0.6]);
    let c = 0.5;
    let mut pass = true;
    let mut detail = String::new();
    for delta in [0.0, 1.0, 4.0] {
        let prm = CltParams::compute(&g, c, delta, 2).unwrap();
        let checks = [
            ("psi211", prm.psi2[0][0], 0.96),
            ("psi222", prm.psi2[1][1], 39.3216),
            ("v2", prm.v[1], 5.8 * (1.0 + delta)),
            ("psi111", prm.psi1[0][0], 11.6 * (2.0 + delta)),
        ];
        for (name, got, want) in checks {
            if (got - want).abs() > 1e-3 {
                pass = false;
                detail += &format!("{name}(Δ={delta}) {got} vs {want}; ");
            }
        }
    }
    detail += "fixtures psi211/psi222/v2/psi111 checked at Δ∈{0,1,4}; ";

    // Limiting and corrected laws of √n(β̂_{n2} − β_2) at Δ = 4, (p, n) = (200, 400).
    let (p, n, delta) = (200usize, 400usize, 4.0);
    let prm = CltParams::compute(&g, c, delta, 2).unwrap();
    let (mean, cov) = corrected_law(&prm, n).unwrap();
    let limit_ok = (prm.psi2[1][1] - 39.32).abs() <= 0.01;
    let mean_ok = (mean[1] - 3.48).abs() <= 0.01;
    let var_ok = (cov[1][1] - 48.88).abs() <= 0.01;
    pass &= limit_ok && mean_ok && var_ok;
    detail += &format!(
        "limit N(0, {:.4}) vs N(0, 39.32) {}; corrected N({:.4}, {:.4}) vs N(3.48, 48.88): mean {}, variance {}; ",
        prm.psi2[1][1],
        if limit_ok { "ok" } else { "MISMATCH" },
        mean[1],
        cov[1][1],
        if mean_ok { "ok" } else { "MISMATCH" },
        if var_ok { "ok" } else { "MISMATCH" },
    );

    // psi122 against the Monte Carlo variance of √n(β̂_{n2} − β_2).
    let mut cfg = config(ExperimentKind::QqMoments, vec![g.clone()], vec![Dims { p, n }], 10_000);
    cfg.bases = vec![BaseDistribution::StandardizedChiSq3];
    cfg.moments = Some(2);
    let result = run_config(&cfg);
    let var = result.select("beta-2", "variance").next().unwrap();
    let mc_mean = result.select("beta-2", "mean").next().unwrap();
    let (v, se, theory) = (var.value.unwrap(), var.mc_se.unwrap(), var.theory.unwrap());
    let mc_ok = (v - theory).abs() <= 3.0 * se;
    pass &= mc_ok;
    detail += &format!(
        "MC ({} reps, Δ=4): variance {v:.3} ± {se:.3} vs psi122/n + psi222 = {theory:.3} {}; MC mean {:.3} ± {:.3}",
        var.reps,
        if mc_ok { "ok" } else { "MISMATCH" },
        mc_mean.value.unwrap(),
        mc_mean.mc_se.unwrap(),
    );
    verdict(4, pass, &detail);
}

#[test]
fn criterion_05_contour_oracle() {
    let start = Instant::now();
    let mut worst: f64 = 0.0;
    let models = 24;
    for k in 0..models {
        let a1 = uniform(5, 4 * k, 0.2, 3.0);
        let a2 = a1 + uniform(5, 4 * k + 1, 0.3, 6.0);
        let w = uniform(5, 4 * k + 2, 0.1, 0.9);
        let c = uniform(5, 4 * k + 3, 0.1, 3.0);
        let g = mixing(&[a1, a2], &[w, 1.0 - w]);
        let closed = psi2_matrix(&g, c, 3).unwrap();
        let oracle = contour_oracle_psi2_matrix(&g, c, 3).unwrap();
        let scale = closed.iter().flatten().fold(0.0f64, |m, x| m.max(x.abs()));
        for i in 0..3 {
            for j in 0..3 {
                let denom = closed[i][j].abs().max(1e-9 * scale);
                worst = worst.max((oracle[i][j] - closed[i][j]).abs() / denom);
            }
        }
    }
    let elapsed = start.elapsed().as_secs_f64();
    verdict(
        5,
        worst <= 1e-5 && elapsed < 30.0,
        &format!("{models} two-atom models, max relative error {worst:.2e} (tol 1e-5), time {elapsed:.2}s"),
    );
}

/// Spectral moments from the series fixed point `M = 1 + Σ_k c^{k−1} γ_k (sM)^k`,
/// where `M(s) = Σ β_j s^j`.
fn series_moments(gamma: &[f64], c: f64, order: usize) -> Vec<f64> {
    let mul = |a: &[f64], b: &[f64]| {
        let mut out = vec![0.0; order + 1];
        for (i, x) in a.iter().enumerate() {
            for (j, y) in b.iter().enumerate().take(order + 1 - i) {
                out[i + j] += x * y;
            }
        }
        out
    };
    let mut m = vec![0.0; order + 1];
    m[0] = 1.0;
    for _ in 0..=order {
        let mut sm = vec![0.0; order + 1];
        sm[1..].copy_from_slice(&m[..order]);
        let mut next = vec![0.0; order + 1];
        next[0] = 1.0;
        let mut power = sm.clone();
        for k in 1..=order {
            let coef = c.powi(k as i32 - 1) * gamma[k];
            for (n, p) in next.iter_mut().zip(&power) {
                *n += coef * p;
            }
            power = mul(&power, &sm);
        }
        m = next;
    }
    m
}

#[test]
fn criterion_06_moment_recursion() {
    let mut worst: f64 = 0.0;
    let trials = 40u64;
    for t in 0..trials {
        let atoms_n = 1 + (derive_seed(77, t) % 4) as usize;
        let atoms: Vec<f64> = (0..atoms_n).map(|i| uniform(78, 10 * t + i as u64, 0.1, 4.0)).collect();
        let weights: Vec<f64> = (0..atoms_n).map(|i| uniform(79, 10 * t + i as u64, 0.1, 1.0)).collect();
        let total: f64 = weights.iter().sum();
        let g = MixingDistribution::new(atoms, weights.iter().map(|w| w / total).collect()).unwrap();
        let c = uniform(80, t, 0.05, 5.0);
        let fast = beta_from_gamma(&g, c, 8).unwrap();
        let oracle = series_moments(&g.moments(8), c, 8);
        for j in 1..=8 {
            worst = worst.max((fast[j - 1] - oracle[j]).abs() / oracle[j].abs().max(1.0));
        }
    }
    verdict(
        6,
        worst <= 1e-12,
        &format!("{trials} random (G, c), orders 1..8, max relative gap {worst:.2e} (tol 1e-12)"),
    );
}

/// Table cells as `(method, base, p, n, [G1, G2, G3])` in percent.
const SIZE_TABLE: [(TestMethod, BaseDistribution, usize, usize, [f64; 3]); 12] = {
    use BaseDistribution::{ScaledT6 as T, StandardNormal as N};
    use TestMethod::{JohnOracle as J, PermutationTn as P};
    [
        (J, N, 200, 400, [5.05, 5.04, 5.08]),
        (J, N, 400, 400, [4.72, 4.92, 5.12]),
        (J, N, 400, 200, [4.40, 5.00, 4.78]),
        (P, N, 200, 400, [4.78, 4.74, 4.99]),
        (P, N, 400, 400, [5.38, 4.70, 5.01]),
        (P, N, 400, 200, [4.94, 4.89, 4.56]),
        (J, T, 200, 400, [6.46, 6.53, 6.19]),
        (J, T, 400, 400, [5.34, 5.71, 5.67]),
        (J, T, 400, 200, [5.67, 5.82, 5.27]),
        (P, T, 200, 400, [4.77, 4.72, 4.99]),
        (P, T, 400, 400, [4.44, 5.01, 5.35]),
        (P, T, 400, 200, [4.95, 4.85, 5.14]),
    ]
};

#[test]
fn criterion_07_size_table() {
    let mut cfg = config(
        ExperimentKind::SizeTable,
        vec![g1(), g2(), g3()],
        vec![Dims { p: 200, n: 400 }, Dims { p: 400, n: 400 }, Dims { p: 400, n: 200 }],
        2000,
    );
    cfg.bases = vec![BaseDistribution::StandardNormal, BaseDistribution::ScaledT6];
    cfg.methods = vec![TestMethod::JohnOracle, TestMethod::PermutationTn];
    let result = run_config(&cfg);
    let mut pass = true;
    let mut cells = 0;
    let mut worst: f64 = 0.0;
    let mut misses = Vec::new();
    for (method, base, p, n, expected) in SIZE_TABLE {
        for (gi, want) in expected.iter().enumerate() {
            let rec: &CellRecord = result
                .records
                .iter()
                .find(|r| r.target == method.name() && r.base == base && r.p == p && r.n == n && r.mixing == gi)
                .unwrap();
            let rate = rec.value.unwrap();
            let want = want / 100.0;
            let se = (want * (1.0 - want) / rec.reps as f64).sqrt();
            let z = (rate - want) / se;
            cells += 1;
            worst = worst.max(z.abs());
            if z.abs() > 3.0 || rec.failed > 0 {
                pass = false;
                misses.push(format!("{} {:?} G{} p={p} n={n}: {:.2}% vs {:.2}%", method.name(), base, gi + 1, 100.0 * rate, 100.0 * want));
            }
        }
    }
    verdict(
        7,
        pass,
        &format!("{cells} cells at 2000 reps, max |z| = {worst:.2} (tol 3); misses: {misses:?}"),
    );
}

#[test]
fn criterion_08_type1_explosion() {
    let mut cfg = config(
        ExperimentKind::TypeIExplosion,
        vec![mixing(&[1.0, 1.6], &[0.5, 0.5])],
        vec![Dims { p: 200, n: 400 }],
        2000,
    );
    cfg.methods = vec![TestMethod::JohnCorrected];
    cfg.grid = (0..=12).map(|i| 1.0 + 0.05 * i as f64).collect();
    let result = run_config(&cfg);
    let recs: Vec<&CellRecord> = result.select("john-corrected", "rejection-rate").collect();
    let first = recs[0].value.unwrap();
    let last = recs.last().unwrap().value.unwrap();
    let first_ok = (first - 0.05).abs() <= 3.0 * (0.05f64 * 0.95 / 2000.0).sqrt();
    let worst = recs
        .iter()
        .map(|r| (r.value.unwrap() - r.theory.unwrap()).abs())
        .fold(0.0, f64::max);
    let curve: Vec<String> = recs
        .iter()
        .map(|r| format!("{:.2}:{:.3}/{:.3}", r.param.unwrap(), r.value.unwrap(), r.theory.unwrap()))
        .collect();
    verdict(
        8,
        first_ok && last > 0.95 && worst <= 0.05,
        &format!("rate {first:.4} at σ²=1, {last:.4} at σ²=1.6, max |empirical − theory| {worst:.4} (tol 0.05); σ²:emp/theory {}", curve.join(" ")),
    );
}

#[test]
fn criterion_09_power() {
    let mut cfg = config(ExperimentKind::PowerCurve, vec![g3()], vec![Dims { p: 400, n: 200 }], 1000);
    cfg.methods = vec![TestMethod::PermutationTn, TestMethod::JohnOracle];
    cfg.grid = vec![0.3];
    let result = run_config(&cfg);
    let tn = result.select("tn", "rejection-rate").next().unwrap().value.unwrap();
    let oracle = result.select("john-oracle", "rejection-rate").next().unwrap().value.unwrap();
    verdict(
        9,
        tn > oracle && tn > 0.9 && oracle > 0.9,
        &format!("power at x = 0.3: tn {tn:.4}, john-oracle {oracle:.4}"),
    );
}

#[test]
fn criterion_10_estimator() {
    let mut cfg = config(
        ExperimentKind::EstimatorTable,
        vec![mixing(&[1.0, 2.0], &[0.8, 0.2])],
        vec![Dims { p: 300, n: 300 }, Dims { p: 500, n: 500 }, Dims { p: 800, n: 800 }],
        500,
    );
    cfg.order = Some(2);
    let result = run_config(&cfg);
    let targets = [("atom-1", 0.9982), ("atom-2", 2.0042), ("weight-1", 0.7989)];
    let mut pass = true;
    let mut detail = String::new();
    for (target, reference_mean) in targets {
        let mean = result
            .select(target, "mean")
            .find(|r| r.n == 800)
            .unwrap();
        let (m, se) = (mean.value.unwrap(), mean.mc_se.unwrap());
        let ok = (m - reference_mean).abs() <= 3.0 * se;
        pass &= ok;
        let sds: Vec<&CellRecord> = result.select(target, "sd").collect();
        let mono = sds.windows(2).all(|w| {
            let slack = 2.0 * (w[0].mc_se.unwrap().powi(2) + w[1].mc_se.unwrap().powi(2)).sqrt();
            w[1].value.unwrap() <= w[0].value.unwrap() + slack
        });
        pass &= mono;
        detail += &format!(
            "{target}: mean@800 {m:.4} ± {se:.4} vs {reference_mean} {}; sd over n=300,500,800 {:?} {}; ",
            if ok { "ok" } else { "MISMATCH" },
            sds.iter().map(|r| format!("{:.4}", r.value.unwrap())).collect::<Vec<_>>(),
            if mono { "decreasing" } else { "NOT DECREASING" },
        );
    }
    let failed: usize = result.select("all", "failed").map(|r| r.failed).sum();
    detail += &format!("failed fits {failed}");
    verdict(10, pass, &detail);
}

#[test]
fn criterion_11_esd_against_lsd() {
    let mut cfg = config(
        ExperimentKind::EsdOverlay,
        vec![mixing(&[1.0, 9.0], &[0.5, 0.5])],
        vec![Dims { p: 1000, n: 2000 }],
        1,
    );
    cfg.bins = Some(80);
    let result = run_config(&cfg);
    let ks = result.select("eigenvalues", "ks-distance").next().unwrap().value.unwrap();
    verdict(11, ks < 0.03, &format!("sup |ECDF − LSD CDF| = {ks:.5} (tol 0.03)"));
}

fn mixspec(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mixspec"))
        .args(args)
        .current_dir(dir)
        .env_remove("MIXSPEC_WORKERS")
        .output()
        .expect("binary runs")
}

#[test]
fn criterion_12_determinism() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let size = r#"{"schema":"mixspec.experiment.v1","kind":"size-table",
      "mixings":[{"atoms":[1,2],"weights":[0.5,0.5]},{"atoms":[1,2,3],"weights":[0.3,0.4,0.3]}],
      "bases":["standard-normal","scaled-t6"],"dims":[{"p":40,"n":80},{"p":60,"n":30}],
      "reps":40,"methods":["john","john-corrected","john-oracle","tn"],"seed":12}"#;
    let others = [
        r#"{"kind":"power-curve","mixings":[{"atoms":[1,2,3,4],"weights":[0.2,0.3,0.3,0.2]}],"dims":[{"p":40,"n":20}],"reps":30,"methods":["tn","john-oracle"],"grid":[0,0.2]}"#,
        r#"{"kind":"type-i-explosion","mixings":[{"atoms":[1,1.6],"weights":[0.5,0.5]}],"dims":[{"p":40,"n":80}],"reps":30,"methods":["john-corrected"],"grid":[1,1.3]}"#,
        r#"{"kind":"esd-overlay","mixings":[{"atoms":[1,9],"weights":[0.5,0.5]}],"dims":[{"p":60,"n":120}],"reps":1,"bins":20}"#,
        r#"{"kind":"qq-moments","mixings":[{"atoms":[1,3],"weights":[0.4,0.6]}],"bases":["standardized-chi-sq3"],"dims":[{"p":30,"n":60}],"reps":50,"moments":3}"#,
        r#"{"kind":"estimator-table","mixings":[{"atoms":[1,2],"weights":[0.8,0.2]}],"dims":[{"p":60,"n":60}],"reps":20,"order":2}"#,
    ];
    fs::write(d.join("size.json"), size).unwrap();
    for (i, text) in others.iter().enumerate() {
        fs::write(d.join(format!("cfg{i}.json")), text).unwrap();
    }
    let data: String = (0..50)
        .map(|i| {
            (0..20)
                .map(|j| format!("{:.6}", uniform(3, i * 20 + j, -1.0, 1.0) * if j % 2 == 0 { 1.0 } else { 1.5 }))
                .collect::<Vec<_>>()
                .join(",")
                + "\n"
        })
        .collect();
    fs::write(d.join("data.csv"), data).unwrap();

    let mut compared = 0;
    let mut mismatches = Vec::new();
    let mut configs = vec!["size.json".to_string()];
    configs.extend((0..others.len()).map(|i| format!("cfg{i}.json")));
    for (k, cfg) in configs.iter().enumerate() {
        let outs: Vec<String> = ["1", "4"].iter().map(|w| format!("sim{k}w{w}")).collect();
        for (w, out) in ["1", "4"].iter().zip(&outs) {
            let o = mixspec(&["--seed", "99", "--workers", w, "simulate", "--config", cfg, "--out", out], d);
            assert!(o.status.success(), "{cfg}: {}", String::from_utf8_lossy(&o.stderr));
        }
        for file in ["results.csv", "results.json"] {
            compared += 1;
            if fs::read(d.join(&outs[0]).join(file)).unwrap() != fs::read(d.join(&outs[1]).join(file)).unwrap() {
                mismatches.push(format!("simulate {cfg} {file}"));
            }
        }
    }
    let stdout_commands: Vec<Vec<&str>> = vec![
        vec!["lsd", "--atoms", "1,9", "--weights", "0.5,0.5", "--c", "2"],
        vec!["lsd", "--atoms", "1,2", "--weights", "0.5,0.5", "--c", "0.5", "--psd-atoms", "0.5,1.5", "--psd-weights", "0.5,0.5", "--points", "40"],
        vec!["clt", "--atoms", "1,3", "--weights", "0.4,0.6", "--c", "0.5", "--delta", "4", "--k", "4", "--n", "400"],
        vec!["--seed", "4", "test", "--method", "john", "--simulate", "size.json"],
        vec!["--seed", "4", "test", "--method", "john-corrected", "--simulate", "size.json"],
        vec!["--seed", "4", "test", "--method", "john-oracle", "--simulate", "size.json"],
        vec!["--seed", "4", "--perm-seed", "8", "test", "--method", "tn", "--simulate", "size.json"],
        vec!["--perm-seed", "8", "test", "--method", "tn", "--data", "data.csv"],
        vec!["test", "--method", "john-oracle", "--data", "data.csv", "--atoms", "1", "--weights", "1"],
        vec!["estimate", "--data", "data.csv", "--m", "1"],
    ];
    for args in &stdout_commands {
        let runs: Vec<Output> = ["1", "4"]
            .iter()
            .map(|w| {
                let mut full = vec!["--workers", *w];
                full.extend(args.iter().copied());
                mixspec(&full, d)
            })
            .collect();
        assert!(
            runs[0].status.code().is_some_and(|c| c == 0 || c == 3),
            "{args:?}: {}",
            String::from_utf8_lossy(&runs[0].stderr)
        );
        compared += 1;
        if runs[0].stdout != runs[1].stdout || runs[0].status.code() != runs[1].status.code() {
            mismatches.push(format!("{args:?}"));
        }
    }
    verdict(
        12,
        mismatches.is_empty(),
        &format!("{compared} outputs compared between 1 and 4 workers; mismatches {mismatches:?}"),
    );
}
