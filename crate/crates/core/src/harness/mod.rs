//! Monte Carlo experiments: sizes, power curves, spectral overlays, moment
//! fluctuations and estimator tables.
//!
//! A run is split into groups (mixing × base × dims × grid point). Group `g`
//! gets seed `derive_seed(seed, g)` and its replication `r` gets
//! `derive_seed(group_seed, r)`, so every replication is reproducible on its
//! own and the reduction happens in replication order whatever the number of
//! worker threads.

mod config;
mod emit;

use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use config::{Dims, ExperimentConfig, ExperimentKind, CONFIG_SCHEMA};
pub use emit::{emit, write_provenance, EmitFormat, RESULT_SCHEMA};

use crate::clt::{corrected_law, CltParams};
use crate::error::{Error, Result};
use crate::estimator::estimate_from_batch;
use crate::lsd::{density, density_at, find_support};
use crate::model::{BaseDistribution, LsdModel, MixingDistribution};
use crate::sampler::{
    derive_seed, eigenvalues, leading_moments, moment_stats, power_traces, sample, MomentStats,
    SampleBatch, Shape,
};
use crate::special::normal_quantile;
use crate::sphericity::{
    john_classical, john_corrected, john_corrected_type1, john_oracle, tn_test, TestMethod,
};

/// One output row: a cell coordinate, one metric and its Monte Carlo error.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellRecord {
    pub kind: ExperimentKind,
    /// Index into the configured mixing distributions.
    pub mixing: usize,
    pub base: BaseDistribution,
    pub p: usize,
    pub n: usize,
    /// Grid coordinate: spread, last atom, bin centre or quantile position.
    pub param: Option<f64>,
    /// Test method, tracked moment or estimated component.
    pub target: String,
    pub metric: String,
    pub value: Option<f64>,
    pub mc_se: Option<f64>,
    pub theory: Option<f64>,
    /// Replications that completed.
    pub reps: usize,
    pub failed: usize,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub seed: u64,
    pub perm_seed: Option<u64>,
    pub version: String,
    pub git_describe: Option<String>,
    pub wall_seconds: f64,
    pub workers: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentResult {
    pub config: ExperimentConfig,
    pub records: Vec<CellRecord>,
    pub provenance: Provenance,
}

impl ExperimentResult {
    /// Records of one metric, in output order.
    pub fn select<'a>(&'a self, target: &'a str, metric: &'a str) -> impl Iterator<Item = &'a CellRecord> + 'a {
        self.records
            .iter()
            .filter(move |r| r.target == target && r.metric == metric)
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct RunOptions {
    /// Worker threads; the global rayon pool when `None`.
    pub workers: Option<usize>,
}

/// `√(r(1−r)/reps)`.
pub fn rate_standard_error(rate: f64, reps: usize) -> f64 {
    (rate * (1.0 - rate) / reps as f64).sqrt()
}

struct Group {
    mixing_index: usize,
    mixing: MixingDistribution,
    base: BaseDistribution,
    dims: Dims,
    param: Option<f64>,
    seed: u64,
    perm_seed: u64,
}

impl Group {
    fn record(&self, kind: ExperimentKind, target: impl Into<String>, metric: &str) -> CellRecord {
        CellRecord {
            kind,
            mixing: self.mixing_index,
            base: self.base,
            p: self.dims.p,
            n: self.dims.n,
            param: self.param,
            target: target.into(),
            metric: metric.to_string(),
            value: None,
            mc_se: None,
            theory: None,
            reps: 0,
            failed: 0,
            error: None,
        }
    }

    fn rep_seed(&self, r: usize) -> u64 {
        derive_seed(self.seed, r as u64)
    }

    fn rep_perm_seed(&self, r: usize) -> u64 {
        derive_seed(self.perm_seed, r as u64)
    }
}

fn replace_last_atom(template: &MixingDistribution, atom: f64) -> Result<MixingDistribution> {
    let mut atoms = template.atoms().to_vec();
    *atoms.last_mut().expect("templates are non-empty") = atom;
    MixingDistribution::new(atoms, template.weights().to_vec())
}

fn groups(config: &ExperimentConfig) -> Vec<std::result::Result<Group, (Group, String)>> {
    let perm_key = config.perm_seed.unwrap_or(config.seed ^ 0x5045_524d_5554_4521);
    let grid: Vec<Option<f64>> = match config.kind {
        ExperimentKind::PowerCurve | ExperimentKind::TypeIExplosion => {
            config.grid.iter().copied().map(Some).collect()
        }
        _ => vec![None],
    };
    let mut out = Vec::new();
    for (mixing_index, template) in config.mixings.iter().enumerate() {
        for &base in &config.bases {
            for &dims in &config.dims {
                for &param in &grid {
                    let index = out.len() as u64;
                    let mut group = Group {
                        mixing_index,
                        mixing: template.clone(),
                        base,
                        dims,
                        param,
                        seed: derive_seed(config.seed, index),
                        perm_seed: derive_seed(perm_key, index),
                    };
                    if let (ExperimentKind::TypeIExplosion, Some(atom)) = (config.kind, param) {
                        match replace_last_atom(template, atom) {
                            Ok(g) => group.mixing = g,
                            Err(e) => {
                                out.push(Err((group, e.to_string())));
                                continue;
                            }
                        }
                    }
                    out.push(Ok(group));
                }
            }
        }
    }
    out
}

/// Runs every replication of every cell. Configuration errors are returned;
/// errors inside a cell are recorded on its rows and the run continues.
pub fn run(config: &ExperimentConfig, options: &RunOptions) -> Result<ExperimentResult> {
    config.validate()?;
    let start = Instant::now();
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(w) = options.workers {
        if w == 0 {
            return Err(Error::invalid("workers must be at least 1"));
        }
        builder = builder.num_threads(w);
    }
    let pool = builder
        .build()
        .map_err(|e| Error::invalid(format!("cannot start worker pool: {e}")))?;
    let workers = pool.current_num_threads();

    let records = pool.install(|| {
        let mut records = Vec::new();
        for group in groups(config) {
            match group {
                Ok(group) => records.extend(run_group(config, &group)),
                Err((group, message)) => records.extend(failed_group(config, &group, &message)),
            }
        }
        records
    });

    Ok(ExperimentResult {
        config: config.clone(),
        records,
        provenance: Provenance {
            seed: config.seed,
            perm_seed: config.perm_seed,
            version: env!("CARGO_PKG_VERSION").to_string(),
            git_describe: git_describe(),
            wall_seconds: start.elapsed().as_secs_f64(),
            workers,
        },
    })
}

fn git_describe() -> Option<String> {
    let out = std::process::Command::new("git")
        .args(["describe", "--always", "--dirty"])
        .output()
        .ok()?;
    out.status
        .success()
        .then(|| String::from_utf8_lossy(&out.stdout).trim().to_string())
        .filter(|s| !s.is_empty())
}

fn targets(config: &ExperimentConfig) -> Vec<(String, &'static str)> {
    match config.kind {
        ExperimentKind::SizeTable | ExperimentKind::PowerCurve | ExperimentKind::TypeIExplosion => config
            .methods
            .iter()
            .map(|m| (m.name().to_string(), "rejection-rate"))
            .collect(),
        _ => vec![("all".to_string(), "failed")],
    }
}

fn failed_group(config: &ExperimentConfig, group: &Group, message: &str) -> Vec<CellRecord> {
    targets(config)
        .into_iter()
        .map(|(target, metric)| {
            let mut rec = group.record(config.kind, target, metric);
            rec.failed = config.reps;
            rec.error = Some(message.to_string());
            rec
        })
        .collect()
}

fn run_group(config: &ExperimentConfig, group: &Group) -> Vec<CellRecord> {
    match config.kind {
        ExperimentKind::SizeTable | ExperimentKind::PowerCurve | ExperimentKind::TypeIExplosion => {
            run_tests(config, group)
        }
        ExperimentKind::EsdOverlay => {
            esd_overlay(config, group).unwrap_or_else(|e| failed_group(config, group, &e.to_string()))
        }
        ExperimentKind::QqMoments => {
            qq_moments(config, group).unwrap_or_else(|e| failed_group(config, group, &e.to_string()))
        }
        ExperimentKind::EstimatorTable => estimator_table(config, group),
    }
}

fn delta_for(config: &ExperimentConfig, base: BaseDistribution) -> f64 {
    config.delta.unwrap_or_else(|| base.kurtosis_excess())
}

fn shape_for(config: &ExperimentConfig, group: &Group) -> Result<Shape> {
    match (config.kind, group.param) {
        (ExperimentKind::PowerCurve, Some(x)) => Shape::two_level(group.dims.p, x),
        _ => Ok(Shape::Identity),
    }
}

fn draw(config: &ExperimentConfig, group: &Group, r: usize) -> Result<SampleBatch> {
    let shape = shape_for(config, group)?;
    sample(&group.mixing, group.base, &shape, group.dims.p, group.dims.n, group.rep_seed(r))
}

/// Statistics without the permuted copy; the check fields repeat the hat fields.
fn unpaired_stats(batch: &SampleBatch) -> MomentStats {
    let (beta1, beta2) = leading_moments(batch);
    let c_n = batch.ratio();
    let gamma2 = (beta2 - beta1 * beta1) / c_n;
    MomentStats {
        p: batch.p(),
        n: batch.dof(),
        beta1_hat: beta1,
        beta2_hat: beta2,
        beta1_check: beta1,
        beta2_check: beta2,
        gamma2_hat: gamma2,
        gamma2_check: gamma2,
        c_n,
    }
}

fn apply(config: &ExperimentConfig, group: &Group, method: TestMethod, stats: &MomentStats) -> Result<bool> {
    let delta = delta_for(config, group.base);
    let report = match method {
        TestMethod::JohnClassical => john_classical(stats, config.alpha)?,
        TestMethod::JohnCorrected => john_corrected(stats, delta, config.alpha)?,
        TestMethod::JohnOracle => john_oracle(stats, &group.mixing, delta, config.alpha)?,
        TestMethod::PermutationTn => tn_test(stats, config.gamma_variant, config.alpha)?,
    };
    Ok(report.reject)
}

fn run_tests(config: &ExperimentConfig, group: &Group) -> Vec<CellRecord> {
    let need_perm = config.methods.contains(&TestMethod::PermutationTn);
    let outcomes: Vec<Vec<std::result::Result<bool, String>>> = (0..config.reps)
        .into_par_iter()
        .map(|r| match draw(config, group, r) {
            Err(e) => vec![Err(e.to_string()); config.methods.len()],
            Ok(batch) => {
                let stats = if need_perm {
                    moment_stats(&batch, group.rep_perm_seed(r))
                } else {
                    unpaired_stats(&batch)
                };
                config
                    .methods
                    .iter()
                    .map(|&m| apply(config, group, m, &stats).map_err(|e| e.to_string()))
                    .collect()
            }
        })
        .collect();

    config
        .methods
        .iter()
        .enumerate()
        .map(|(k, &method)| {
            let mut rec = group.record(config.kind, method.name(), "rejection-rate");
            let mut rejections = 0usize;
            for outcome in &outcomes {
                match &outcome[k] {
                    Ok(reject) => {
                        rec.reps += 1;
                        rejections += usize::from(*reject);
                    }
                    Err(e) => {
                        rec.failed += 1;
                        rec.error.get_or_insert_with(|| e.clone());
                    }
                }
            }
            if rec.reps > 0 {
                let rate = rejections as f64 / rec.reps as f64;
                rec.value = Some(rate);
                rec.mc_se = Some(rate_standard_error(rate, rec.reps));
            }
            rec.theory = theory_rate(config, group, method);
            rec
        })
        .collect()
}

fn theory_rate(config: &ExperimentConfig, group: &Group, method: TestMethod) -> Option<f64> {
    match (config.kind, method) {
        (ExperimentKind::PowerCurve, _) => None,
        (ExperimentKind::TypeIExplosion, TestMethod::JohnCorrected) => john_corrected_type1(
            &group.mixing,
            group.dims.p,
            group.dims.n,
            delta_for(config, group.base),
            config.alpha,
        )
        .ok(),
        (_, TestMethod::JohnClassical) => None,
        _ => Some(config.alpha),
    }
}

/// Sample mean, sample variance and the fourth central moment.
fn summary(xs: &[f64]) -> (f64, f64, f64) {
    let k = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / k;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (k - 1.0).max(1.0);
    let m4 = xs.iter().map(|x| (x - mean).powi(4)).sum::<f64>() / k;
    (mean, var, m4)
}

fn esd_overlay(config: &ExperimentConfig, group: &Group) -> Result<Vec<CellRecord>> {
    let kind = config.kind;
    let batch = draw(config, group, 0)?;
    let eig = eigenvalues(&batch)?;
    let model = LsdModel::new(group.dims.ratio(), group.mixing.clone())?;
    let support = find_support(&model)?;
    let curve = density(&model, &support, 400)?;
    let cdf = curve.cdf();

    let bins = config.bins.unwrap_or(60);
    let top = eig.last().copied().unwrap_or(0.0).max(support.right_edge()) * 1.02;
    let width = top / bins as f64;
    let mut counts = vec![0usize; bins];
    for &x in &eig {
        let b = ((x.max(0.0) / width) as usize).min(bins - 1);
        counts[b] += 1;
    }
    let p = eig.len() as f64;
    let mut records = Vec::with_capacity(bins + curve.pieces.len() * 400 + 1);
    for (b, &count) in counts.iter().enumerate() {
        let centre = (b as f64 + 0.5) * width;
        let mut rec = group.record(kind, "eigenvalues", "histogram");
        rec.param = Some(centre);
        rec.value = Some(count as f64 / (p * width));
        rec.theory = if support.contains(centre) {
            density_at(&model, centre).ok()
        } else {
            Some(0.0)
        };
        rec.reps = 1;
        records.push(rec);
    }
    for (x, f) in curve.points() {
        let mut rec = group.record(kind, "lsd", "density");
        rec.param = Some(x);
        rec.value = Some(f);
        rec.reps = 1;
        records.push(rec);
    }
    let mut rec = group.record(kind, "eigenvalues", "ks-distance");
    rec.value = Some(cdf.sup_distance(&eig));
    rec.reps = 1;
    records.push(rec);
    Ok(records)
}

fn qq_moments(config: &ExperimentConfig, group: &Group) -> Result<Vec<CellRecord>> {
    let kind = config.kind;
    let k = config.moments.unwrap_or(2);
    let (p, n) = (group.dims.p, group.dims.n);
    let params = CltParams::compute(&group.mixing, group.dims.ratio(), delta_for(config, group.base), k)?;
    let (mean_law, cov_law) = corrected_law(&params, n)?;
    let root_n = (n as f64).sqrt();

    let draws: Vec<std::result::Result<Vec<f64>, String>> = (0..config.reps)
        .into_par_iter()
        .map(|r| {
            let batch = sample(&group.mixing, group.base, &Shape::Identity, p, n, group.rep_seed(r))
                .map_err(|e| e.to_string())?;
            let traces = power_traces(&batch, k);
            Ok((1..=k)
                .map(|j| root_n * (traces[j] - params.beta[j - 1]))
                .collect())
        })
        .collect();
    let failed = draws.iter().filter(|d| d.is_err()).count();
    let error = draws.iter().find_map(|d| d.as_ref().err().cloned());
    let ok: Vec<&Vec<f64>> = draws.iter().filter_map(|d| d.as_ref().ok()).collect();
    if ok.len() < 2 {
        return Err(Error::numerical("fewer than two completed replications", failed as f64));
    }

    let mut records = Vec::new();
    for j in 0..k {
        let target = format!("beta-{}", j + 1);
        let mut xs: Vec<f64> = ok.iter().map(|d| d[j]).collect();
        let (mean, var, m4) = summary(&xs);
        let reps = xs.len();
        let base_rec = |metric: &str| {
            let mut rec = group.record(kind, target.clone(), metric);
            rec.reps = reps;
            rec.failed = failed;
            rec.error = error.clone();
            rec
        };
        let mut rec = base_rec("mean");
        rec.value = Some(mean);
        rec.mc_se = Some((var / reps as f64).sqrt());
        rec.theory = Some(mean_law[j]);
        records.push(rec);

        let mut rec = base_rec("variance");
        rec.value = Some(var);
        rec.mc_se = Some(((m4 - var * var).max(0.0) / reps as f64).sqrt());
        rec.theory = Some(cov_law[j][j]);
        records.push(rec);

        let mut rec = base_rec("variance-limit");
        rec.value = Some(var);
        rec.theory = Some(params.psi2[j][j]);
        records.push(rec);

        xs.sort_by(f64::total_cmp);
        let sd_law = cov_law[j][j].sqrt();
        for (i, &x) in xs.iter().enumerate() {
            let q = normal_quantile((i as f64 + 0.5) / reps as f64);
            let mut rec = base_rec("qq");
            rec.param = Some(mean_law[j] + sd_law * q);
            rec.value = Some(x);
            records.push(rec);
        }
    }
    Ok(records)
}

fn estimator_table(config: &ExperimentConfig, group: &Group) -> Vec<CellRecord> {
    let kind = config.kind;
    let m = config.order.expect("validated");
    let fits: Vec<std::result::Result<(Vec<f64>, Vec<f64>), String>> = (0..config.reps)
        .into_par_iter()
        .map(|r| {
            let batch = draw(config, group, r).map_err(|e| e.to_string())?;
            let est = estimate_from_batch(&batch, m).map_err(|e| e.to_string())?;
            if est.mixing.len() != m {
                return Err(format!(
                    "estimate collapsed to {} atoms",
                    est.mixing.len()
                ));
            }
            Ok((est.mixing.atoms().to_vec(), est.mixing.weights().to_vec()))
        })
        .collect();
    let failed = fits.iter().filter(|f| f.is_err()).count();
    let error = fits.iter().find_map(|f| f.as_ref().err().cloned());
    let ok: Vec<&(Vec<f64>, Vec<f64>)> = fits.iter().filter_map(|f| f.as_ref().ok()).collect();
    let reps = ok.len();
    let truth = (group.mixing.len() == m).then_some(&group.mixing);

    let mut records = Vec::new();
    let mut status = group.record(kind, "all", "failed");
    status.value = Some(failed as f64 / config.reps as f64);
    status.reps = reps;
    status.failed = failed;
    status.error = error.clone();
    records.push(status);
    for (label, pick) in [("atom", 0usize), ("weight", 1usize)] {
        for i in 0..m {
            let target = format!("{label}-{}", i + 1);
            let xs: Vec<f64> = ok
                .iter()
                .map(|f| if pick == 0 { f.0[i] } else { f.1[i] })
                .collect();
            let true_value = truth.map(|g| if pick == 0 { g.atoms()[i] } else { g.weights()[i] });
            let mut mean_rec = group.record(kind, target.clone(), "mean");
            let mut sd_rec = group.record(kind, target, "sd");
            for rec in [&mut mean_rec, &mut sd_rec] {
                rec.reps = reps;
                rec.failed = failed;
                rec.error = error.clone();
            }
            if reps >= 2 {
                let (mean, var, m4) = summary(&xs);
                let sd = var.sqrt();
                mean_rec.value = Some(mean);
                mean_rec.mc_se = Some(sd / (reps as f64).sqrt());
                mean_rec.theory = true_value;
                sd_rec.value = Some(sd);
                // Delta method on the variance estimate.
                sd_rec.mc_se = Some(((m4 - var * var).max(0.0) / reps as f64).sqrt() / (2.0 * sd.max(f64::MIN_POSITIVE)));
            }
            records.push(mean_rec);
            records.push(sd_rec);
        }
    }
    records
}
