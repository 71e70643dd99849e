use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::{json, Value};

use mixspec::clt::{corrected_law, CltParams};
use mixspec::estimator::estimate_pmd;
use mixspec::harness::{self, EmitFormat, ExperimentConfig, RunOptions};
use mixspec::lsd::{self, critical_ratio_two_atoms, density_general, find_support};
use mixspec::sampler::{ingest_csv, moment_stats, power_traces, sample, SampleBatch, Shape};
use mixspec::sphericity::{
    john_classical, john_corrected, john_oracle, tn_test, GammaVariant, TestMethod, TestReport,
};
use mixspec::{LsdModel, MixingDistribution, PopulationSpectralDistribution};

/// Spectral analysis and sphericity testing under scale-mixture populations.
#[derive(Parser)]
#[command(name = "mixspec", version)]
struct Cli {
    /// Seed of the data streams.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Seed of the coordinate permutations used by the `tn` test.
    #[arg(long, global = true)]
    perm_seed: Option<u64>,
    /// Worker threads. Results do not depend on this value.
    #[arg(long, global = true, env = "MIXSPEC_WORKERS")]
    workers: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Support and density of the limiting spectral distribution.
    Lsd(LsdArgs),
    /// Centering, mean and covariance of the spectral moment CLT.
    Clt(CltArgs),
    /// Sphericity test on data or on one simulated sample.
    Test(TestArgs),
    /// Moment estimate of the mixing distribution.
    Estimate(EstimateArgs),
    /// Monte Carlo experiment from a JSON config.
    Simulate(SimulateArgs),
}

#[derive(Args)]
struct MixingArgs {
    /// Atoms of the mixing distribution, comma separated.
    #[arg(long, value_delimiter = ',', required = true)]
    atoms: Vec<f64>,
    /// Weights of the atoms, comma separated.
    #[arg(long, value_delimiter = ',', required = true)]
    weights: Vec<f64>,
}

impl MixingArgs {
    fn mixing(&self) -> Result<MixingDistribution> {
        Ok(MixingDistribution::new(self.atoms.clone(), self.weights.clone())?)
    }
}

#[derive(Args)]
struct LsdArgs {
    #[command(flatten)]
    mixing: MixingArgs,
    /// Dimension to sample size ratio.
    #[arg(long)]
    c: f64,
    /// Grid points per support interval.
    #[arg(long, default_value_t = 200)]
    points: usize,
    /// Population spectrum atoms; enables the general solver.
    #[arg(long, value_delimiter = ',', requires = "psd_weights")]
    psd_atoms: Option<Vec<f64>>,
    #[arg(long, value_delimiter = ',', requires = "psd_atoms")]
    psd_weights: Option<Vec<f64>>,
    /// Distance above the real axis for the general solver.
    #[arg(long, default_value_t = 1e-4)]
    eps: f64,
    /// Right end of the grid for the general solver.
    #[arg(long)]
    xmax: Option<f64>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct CltArgs {
    #[command(flatten)]
    mixing: MixingArgs,
    #[arg(long)]
    c: f64,
    /// Kurtosis excess of the base law.
    #[arg(long, default_value_t = 0.0)]
    delta: f64,
    /// Number of moments.
    #[arg(long, default_value_t = 2)]
    k: usize,
    /// Sample size for the corrected law.
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum MethodArg {
    John,
    JohnCorrected,
    JohnOracle,
    Tn,
}

impl From<MethodArg> for TestMethod {
    fn from(m: MethodArg) -> Self {
        match m {
            MethodArg::John => TestMethod::JohnClassical,
            MethodArg::JohnCorrected => TestMethod::JohnCorrected,
            MethodArg::JohnOracle => TestMethod::JohnOracle,
            MethodArg::Tn => TestMethod::PermutationTn,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum GammaArg {
    Hat,
    Check,
}

#[derive(Args)]
struct DataArgs {
    /// CSV file with one observation per row.
    #[arg(long)]
    data: Option<PathBuf>,
    /// Treat the first CSV row as a header.
    #[arg(long)]
    header: bool,
    /// Center the data before computing statistics.
    #[arg(long)]
    center: bool,
}

#[derive(Args)]
struct TestArgs {
    #[arg(long, value_enum)]
    method: MethodArg,
    #[command(flatten)]
    data: DataArgs,
    /// Experiment config whose first cell describes one simulated sample.
    #[arg(long, conflicts_with = "data")]
    simulate: Option<PathBuf>,
    #[arg(long, default_value_t = 0.05)]
    alpha: f64,
    /// Kurtosis excess; the simulated base law's value when omitted.
    #[arg(long)]
    delta: Option<f64>,
    #[arg(long, value_enum, default_value = "check")]
    gamma: GammaArg,
    /// Mixing atoms for the oracle test on data.
    #[arg(long, value_delimiter = ',', requires = "weights")]
    atoms: Option<Vec<f64>>,
    #[arg(long, value_delimiter = ',', requires = "atoms")]
    weights: Option<Vec<f64>>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct EstimateArgs {
    #[command(flatten)]
    data: DataArgs,
    /// Number of atoms.
    #[arg(long)]
    m: usize,
    /// Ratio p/n; taken from the data when omitted.
    #[arg(long)]
    cn: Option<f64>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum FormatArg {
    Csv,
    Json,
    Both,
}

#[derive(Args)]
struct SimulateArgs {
    #[arg(long)]
    config: PathBuf,
    /// Overrides the replication count of the config.
    #[arg(long)]
    reps: Option<usize>,
    #[arg(long, default_value = "results")]
    out: PathBuf,
    #[arg(long, value_enum, default_value = "both")]
    format: FormatArg,
}

fn write_json(value: &Value, out: Option<&Path>) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    match out {
        Some(path) => fs::write(path, text).with_context(|| format!("writing {}", path.display())),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn read_config(path: &Path) -> Result<ExperimentConfig> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    ExperimentConfig::from_json(&text).with_context(|| format!("parsing {}", path.display()))
}

fn load_data(args: &DataArgs) -> Result<SampleBatch> {
    let Some(path) = &args.data else {
        bail!("--data is required");
    };
    let batch = ingest_csv(path, args.header)?;
    Ok(if args.center { batch.centered()? } else { batch })
}

fn lsd_command(args: &LsdArgs) -> Result<Value> {
    let g = args.mixing.mixing()?;
    if let (Some(atoms), Some(weights)) = (&args.psd_atoms, &args.psd_weights) {
        let h = PopulationSpectralDistribution::new(atoms.clone(), weights.clone())?;
        let model = LsdModel::with_psd(args.c, g.clone(), Some(h.clone()))?;
        let tmax = g.atoms().iter().cloned().fold(0.0, f64::max) * h.atoms().iter().cloned().fold(0.0, f64::max);
        let xmax = args.xmax.unwrap_or(tmax * (1.0 + args.c.sqrt()).powi(2) * 1.2);
        let points = args.points.max(2);
        let curve = (0..points)
            .map(|i| {
                let x = xmax * (i as f64 + 0.5) / points as f64;
                Ok(json!([x, density_general(&model, x, args.eps)?]))
            })
            .collect::<Result<Vec<_>>>()?;
        return Ok(json!({ "model": model, "eps": args.eps, "density": curve }));
    }
    let model = LsdModel::new(args.c, g.clone())?;
    let support = find_support(&model)?;
    let curve = lsd::density(&model, &support, args.points)?;
    let critical = (g.len() == 2)
        .then(|| critical_ratio_two_atoms(&g))
        .transpose()?;
    Ok(json!({
        "model": model,
        "support": support,
        "critical_ratio": critical,
        "density": curve.points().map(|(x, f)| [x, f]).collect::<Vec<_>>(),
    }))
}

fn clt_command(args: &CltArgs) -> Result<Value> {
    let g = args.mixing.mixing()?;
    let params = CltParams::compute(&g, args.c, args.delta, args.k)?;
    let corrected = args
        .n
        .map(|n| corrected_law(&params, n))
        .transpose()?
        .map(|(mean, cov)| json!({ "n": args.n, "mean": mean, "covariance": cov }));
    Ok(json!({ "params": params, "corrected": corrected }))
}

fn run_test(
    method: TestMethod,
    batch: &SampleBatch,
    perm_seed: u64,
    g: Option<&MixingDistribution>,
    delta: f64,
    args: &TestArgs,
) -> Result<TestReport> {
    let stats = moment_stats(batch, perm_seed);
    let variant = match args.gamma {
        GammaArg::Hat => GammaVariant::Hat,
        GammaArg::Check => GammaVariant::Check,
    };
    Ok(match method {
        TestMethod::JohnClassical => john_classical(&stats, args.alpha)?,
        TestMethod::JohnCorrected => john_corrected(&stats, delta, args.alpha)?,
        TestMethod::JohnOracle => {
            let g = g.context("the oracle test needs the mixing distribution (--atoms/--weights)")?;
            john_oracle(&stats, g, delta, args.alpha)?
        }
        TestMethod::PermutationTn => tn_test(&stats, variant, args.alpha)?,
    })
}

fn test_command(args: &TestArgs, seed: Option<u64>, perm_seed: Option<u64>) -> Result<(Value, bool)> {
    let method = TestMethod::from(args.method);
    let given_g = match (&args.atoms, &args.weights) {
        (Some(a), Some(w)) => Some(MixingDistribution::new(a.clone(), w.clone())?),
        _ => None,
    };
    let (batch, g, delta, seed) = if let Some(path) = &args.simulate {
        let config = read_config(path)?;
        let seed = seed.unwrap_or(config.seed);
        let g = given_g.unwrap_or_else(|| config.mixings[0].clone());
        let base = config.bases[0];
        let dims = config.dims[0];
        let batch = sample(&g, base, &Shape::Identity, dims.p, dims.n, seed)?;
        let delta = args.delta.or(config.delta).unwrap_or_else(|| base.kurtosis_excess());
        (batch, Some(g), delta, seed)
    } else {
        let seed = seed.unwrap_or(0);
        (load_data(&args.data)?, given_g, args.delta.unwrap_or(0.0), seed)
    };
    let perm_seed = perm_seed.unwrap_or(seed);
    let report = run_test(method, &batch, perm_seed, g.as_ref(), delta, args)?;
    Ok((
        json!({ "report": report, "delta": delta, "perm_seed": perm_seed }),
        report.reject,
    ))
}

fn estimate_command(args: &EstimateArgs) -> Result<Value> {
    if args.m == 0 {
        bail!("--m must be at least 1");
    }
    let batch = load_data(&args.data)?;
    let cn = args.cn.unwrap_or_else(|| batch.ratio());
    let betas = power_traces(&batch, 2 * args.m - 1);
    let estimate = estimate_pmd(&betas, cn, args.m)?;
    Ok(json!({ "c_n": cn, "beta_hat": betas, "estimate": estimate }))
}

fn simulate_command(args: &SimulateArgs, cli: &Cli) -> Result<()> {
    let mut config = read_config(&args.config)?;
    if let Some(reps) = args.reps {
        config.reps = reps;
    }
    if let Some(seed) = cli.seed {
        config.seed = seed;
    }
    if let Some(perm_seed) = cli.perm_seed {
        config.perm_seed = Some(perm_seed);
    }
    let result = harness::run(&config, &RunOptions { workers: cli.workers })?;
    let formats: &[EmitFormat] = match args.format {
        FormatArg::Csv => &[EmitFormat::Csv],
        FormatArg::Json => &[EmitFormat::Json],
        FormatArg::Both => &[EmitFormat::Csv, EmitFormat::Json],
    };
    for &format in formats {
        let path = harness::emit(&result, &args.out, format)?;
        eprintln!("wrote {}", path.display());
    }
    harness::write_provenance(&result, &args.out)?;
    let failed = result.records.iter().filter(|r| r.error.is_some()).count();
    if failed > 0 {
        eprintln!("{failed} record(s) report failed replications");
    }
    Ok(())
}

fn execute(cli: &Cli) -> Result<ExitCode> {
    if let Some(w) = cli.workers {
        if w == 0 {
            bail!("--workers must be at least 1");
        }
        // Only fails if a pool already exists, which cannot happen this early.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(w).build_global();
    }
    match &cli.command {
        Command::Lsd(args) => write_json(&lsd_command(args)?, args.out.as_deref())?,
        Command::Clt(args) => write_json(&clt_command(args)?, args.out.as_deref())?,
        Command::Test(args) => {
            let (value, reject) = test_command(args, cli.seed, cli.perm_seed)?;
            write_json(&value, args.out.as_deref())?;
            return Ok(if reject { ExitCode::from(3) } else { ExitCode::SUCCESS });
        }
        Command::Estimate(args) => write_json(&estimate_command(args)?, args.out.as_deref())?,
        Command::Simulate(args) => simulate_command(args, cli)?,
    }
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(&cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
