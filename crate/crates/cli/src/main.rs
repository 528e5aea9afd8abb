mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use maxdiff::simbench::{ingest_csv, GeneratedSample, IngestOptions};
use maxdiff::{
    run_experiment, scan_tau, Case, Error, ErrorKind, Method, Prepared, ScenarioSpec, Setting, TauSpec,
    TestConfig,
};

#[derive(Parser)]
#[command(name = "maxdiff", version, about = "K-sample tests for high-dimensional data (MOD and CA-MOD)")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Test a CSV sample for equal group distributions.
    Test(TestArgs),
    /// Estimate size or power on simulated data.
    Simulate(SimulateArgs),
    /// Evaluate the threshold objective over candidate quantiles.
    Scan(ScanArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum Mode {
    Mod,
    Camod,
    Both,
}

#[derive(Clone, Copy, ValueEnum)]
pub(crate) enum Format {
    Json,
    Csv,
}

#[derive(Args)]
struct ConfigArgs {
    /// Quantile of the pairwise distances used as threshold.
    #[arg(long, default_value_t = 0.5)]
    tau_quantile: f64,
    /// Fixed distance threshold; overrides --tau-quantile.
    #[arg(long)]
    tau: Option<f64>,
    #[arg(long, default_value_t = 0.05)]
    alpha: f64,
    /// Outer Monte Carlo replications for MOD.
    #[arg(long, default_value_t = 100)]
    mc_outer: usize,
    /// Gaussian draws per outer replication.
    #[arg(long, default_value_t = 200)]
    mc_inner: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Worker threads (default: all cores). Results do not depend on it.
    #[arg(long)]
    threads: Option<usize>,
    /// Attach per-observation power diagnostics.
    #[arg(long)]
    diagnostics: bool,
}

impl ConfigArgs {
    fn config(&self) -> TestConfig {
        TestConfig {
            tau: match self.tau {
                Some(t) => TauSpec::Threshold(t),
                None => TauSpec::Quantile(self.tau_quantile),
            },
            alpha: self.alpha,
            mc_outer: self.mc_outer,
            mc_inner: self.mc_inner,
            seed: self.seed,
            diagnostics: self.diagnostics,
            ..TestConfig::default()
        }
    }
}

#[derive(Args)]
struct InputArgs {
    /// CSV file, one observation per row, with a header.
    #[arg(long)]
    input: PathBuf,
    /// Fit per-group least squares on the covariate columns and test the residuals.
    #[arg(long)]
    regression: bool,
    #[arg(long, default_value = "group")]
    group_column: String,
    #[arg(long, default_value = "w_")]
    covariate_prefix: String,
}

impl InputArgs {
    fn load(&self) -> maxdiff::Result<GeneratedSample> {
        let options = IngestOptions {
            group_column: self.group_column.clone(),
            covariate_prefix: self.covariate_prefix.clone(),
            regression: self.regression,
        };
        ingest_csv(&self.input, &options)
    }
}

#[derive(Args)]
struct TestArgs {
    #[command(flatten)]
    input: InputArgs,
    #[arg(long, value_enum, default_value_t = Mode::Both)]
    mode: Mode,
    #[arg(long, value_enum, default_value_t = Format::Json)]
    output: Format,
    #[command(flatten)]
    config: ConfigArgs,
}

#[derive(Args)]
struct SimulateArgs {
    #[arg(long, value_parser = parse_setting)]
    setting: Setting,
    /// 1, 2, 3, mixture or null.
    #[arg(long, value_parser = parse_case)]
    case: Case,
    #[arg(long)]
    n: usize,
    #[arg(long)]
    p: usize,
    /// Number of groups (setting II: 2 or 6).
    #[arg(long)]
    k: Option<usize>,
    /// Covariates for setting II.
    #[arg(long, default_value_t = 2)]
    d: usize,
    /// Case parameter: mu, theta, t degrees of freedom, or mixture fraction.
    #[arg(long)]
    signal: Option<f64>,
    #[arg(long, default_value_t = 200)]
    reps: usize,
    /// Comma-separated subset of mod,camod.
    #[arg(long, default_value = "mod,camod", value_delimiter = ',', value_parser = parse_method)]
    methods: Vec<Method>,
    #[arg(long, value_enum, default_value_t = Format::Json)]
    output: Format,
    /// Include wall-clock time in the output.
    #[arg(long)]
    timing: bool,
    #[command(flatten)]
    config: ConfigArgs,
}

#[derive(Args)]
struct ScanArgs {
    #[command(flatten)]
    input: InputArgs,
    /// Comma-separated candidate quantiles in [0.05, 0.95].
    #[arg(long, value_delimiter = ',', default_value = "0.1,0.25,0.5,0.75,0.9")]
    grid: Vec<f64>,
    #[arg(long)]
    threads: Option<usize>,
}

fn parse_setting(s: &str) -> Result<Setting, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

fn parse_case(s: &str) -> Result<Case, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

fn parse_method(s: &str) -> Result<Method, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

fn prepare(sample: &GeneratedSample, config: &TestConfig) -> maxdiff::Result<Prepared> {
    match sample {
        GeneratedSample::Pooled(s) => Prepared::new(s, config),
        GeneratedSample::Regression(r) => maxdiff::regression::regression_prepare(r, config),
    }
}

fn set_threads(threads: Option<usize>) -> maxdiff::Result<()> {
    if let Some(t) = threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(t)
            .build_global()
            .map_err(|e| Error::InvalidConfig(format!("thread pool: {e}")))?;
    }
    Ok(())
}

fn run(cli: Cli) -> maxdiff::Result<String> {
    match cli.command {
        Command::Test(args) => {
            set_threads(args.config.threads)?;
            let config = args.config.config();
            config.validate()?;
            let sample = args.input.load()?;
            let prepared = prepare(&sample, &config)?;
            let methods = match args.mode {
                Mode::Mod => vec![Method::Mod],
                Mode::Camod => vec![Method::Camod],
                Mode::Both => vec![Method::Mod, Method::Camod],
            };
            let reports = methods
                .into_iter()
                .map(|m| prepared.report(m, &config))
                .collect::<maxdiff::Result<Vec<_>>>()?;
            output::reports(&reports, args.output, matches!(args.mode, Mode::Both))
        }
        Command::Simulate(args) => {
            set_threads(args.config.threads)?;
            let config = args.config.config();
            let mut spec = ScenarioSpec::new(args.setting, args.case, args.n, args.p)
                .with_replications(args.reps)
                .with_seed(args.config.seed);
            if let Some(k) = args.k {
                spec = spec.with_k(k);
            }
            if let Some(signal) = args.signal {
                spec = spec.with_signal(signal);
            }
            spec.d = args.d;
            let table = run_experiment(&spec, &args.methods, &config)?;
            output::table(&table, args.output, args.timing)
        }
        Command::Scan(args) => {
            set_threads(args.threads)?;
            let sample = match args.input.load()? {
                GeneratedSample::Pooled(s) => s,
                GeneratedSample::Regression(r) => r.residual_sample()?,
            };
            let scan = scan_tau(&sample, &args.grid)?;
            output::scan(&scan)
        }
    }
}

fn exit_code(err: &Error) -> u8 {
    match err.kind() {
        ErrorKind::Input => 2,
        ErrorKind::Degenerate => 3,
        ErrorKind::Numerical => 4,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(text) => {
            print!("{text}");
            ExitCode::SUCCESS
        }
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(exit_code(&err))
        }
    }
}
