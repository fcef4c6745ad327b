use clap::{Args, Parser, Subcommand};
use shiftquant::bandwidth::TestMode;
use shiftquant::io::{read_sample_csv, sample_csv, write_atomic};
use shiftquant::quantile_fit::RegressionSample;
use shiftquant::report::{band_csv, config_hash, curve_csv, mc_table_csv, RunReport, ShiftSummary, TestReport};
use shiftquant::simulate::{make_example, monte_carlo, DgpSpec, ExampleId, McExperiment};
use shiftquant::testing::{estimate_pair, estimate_series, run_test, Dependence, TestConfig};
use shiftquant::{Error, Result};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "shiftquant", version, about = "Test whether two time-varying quantile curves agree up to a time shift")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fit one series and write its curve table.
    Fit(FitArgs),
    /// Fit two series, estimate the shift and write both curve tables.
    Shift(PairArgs),
    /// Integrated squared-norm test.
    Sit(PairArgs),
    /// Simultaneous confidence band test.
    Scb(PairArgs),
    /// Simulate one pair from a built-in example.
    Simulate(SimulateArgs),
    /// Monte Carlo rejection rates over built-in examples.
    McTable(McArgs),
}

#[derive(Args, Clone)]
struct Tuning {
    /// Quantile level; repeat for several levels.
    #[arg(long = "tau", default_values_t = [0.5])]
    tau: Vec<f64>,
    /// Bootstrap replicates.
    #[arg(long = "boot")]
    boot: Option<usize>,
    #[arg(long)]
    b1: Option<f64>,
    #[arg(long)]
    b2: Option<f64>,
    #[arg(long)]
    h1: Option<f64>,
    #[arg(long)]
    h2: Option<f64>,
    #[arg(long)]
    w: Option<f64>,
    /// Long-run variance window half-width.
    #[arg(long = "M")]
    m: Option<usize>,
    #[arg(long)]
    eta: Option<f64>,
    /// Number of time-grid points.
    #[arg(long)]
    grid: Option<usize>,
}

impl Tuning {
    fn config(&self, alpha: f64) -> Result<TestConfig> {
        let mut cfg = TestConfig { alpha, ..TestConfig::default() };
        if let Some(q) = self.boot {
            cfg.q_boot = q;
        }
        cfg.b = [self.b1, self.b2];
        cfg.h = [self.h1, self.h2];
        cfg.w = self.w;
        cfg.m = self.m;
        cfg.eta = self.eta;
        cfg.grid_size = self.grid;
        cfg.validate()?;
        for tau in &self.tau {
            check_tau(*tau)?;
        }
        Ok(cfg)
    }
}

#[derive(Args)]
struct FitArgs {
    /// CSV file with a header row.
    input: PathBuf,
    #[arg(long, value_delimiter = ',')]
    c: Option<Vec<f64>>,
    #[arg(long)]
    log_transform: bool,
    #[arg(long, value_parser = parse_mode, default_value = "sit")]
    mode: TestMode,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
    #[command(flatten)]
    tuning: Tuning,
}

#[derive(Args)]
struct PairArgs {
    input1: PathBuf,
    input2: PathBuf,
    #[arg(long, value_delimiter = ',')]
    c1: Option<Vec<f64>>,
    #[arg(long, value_delimiter = ',')]
    c2: Option<Vec<f64>>,
    /// Use the bootstrap for dependent series.
    #[arg(long)]
    dependent: bool,
    #[arg(long)]
    log_transform: bool,
    /// Significance level; repeat for several levels.
    #[arg(long = "alpha", default_values_t = [0.05])]
    alpha: Vec<f64>,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Report path for `sit`/`scb` (stdout when absent); output directory for `shift`.
    #[arg(long)]
    out: Option<PathBuf>,
    #[command(flatten)]
    tuning: Tuning,
}

#[derive(Args)]
struct SimulateArgs {
    #[arg(long, value_parser = parse_example)]
    example: ExampleId,
    #[arg(long, default_value_t = 100)]
    n: usize,
    #[arg(long, default_value_t = 0.5)]
    tau: f64,
    /// Draw the two error series from shared innovations.
    #[arg(long)]
    dependent: bool,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Output directory; receives series1.csv and series2.csv.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct McArgs {
    /// Example id; repeat for several.
    #[arg(long = "example", value_parser = parse_example, default_values = ["ex1"])]
    example: Vec<ExampleId>,
    /// Sample size; repeat for several.
    #[arg(long = "n", default_values_t = [100])]
    n: Vec<usize>,
    #[arg(long, value_parser = parse_mode, default_value = "sit")]
    mode: TestMode,
    /// Dependent errors and the dependent-series bootstrap.
    #[arg(long)]
    dependent: bool,
    #[arg(long = "alpha", default_values_t = [0.05])]
    alpha: Vec<f64>,
    #[arg(long, default_value_t = 200)]
    reps: usize,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// CSV path (stdout when absent).
    #[arg(long)]
    out: Option<PathBuf>,
    #[command(flatten)]
    tuning: Tuning,
}

fn parse_mode(s: &str) -> std::result::Result<TestMode, String> {
    s.parse()
}

fn parse_example(s: &str) -> std::result::Result<ExampleId, String> {
    s.parse().map_err(|e| format!("{e}"))
}

fn check_tau(tau: f64) -> Result<()> {
    if tau > 0.0 && tau < 1.0 {
        Ok(())
    } else {
        Err(Error::InvalidInput(format!("tau must lie in (0, 1), got {tau}")))
    }
}

fn coefficients(c: &Option<Vec<f64>>, p: usize) -> Vec<f64> {
    c.clone().unwrap_or_else(|| vec![1.0; p])
}

fn load(path: &Path, log: bool) -> Result<RegressionSample> {
    read_sample_csv(path, log).map_err(|e| e.at(format!("cli/read {}", path.display())))
}

/// Files are gathered first and written only after every run succeeded.
struct Outputs(Vec<(PathBuf, Vec<u8>)>);

impl Outputs {
    fn add(&mut self, path: PathBuf, bytes: impl Into<Vec<u8>>) {
        self.0.push((path, bytes.into()));
    }

    fn flush(self) -> Result<()> {
        for (path, bytes) in self.0 {
            if path.as_os_str() == "-" {
                print!("{}", String::from_utf8_lossy(&bytes));
            } else {
                if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
                    std::fs::create_dir_all(dir)?;
                }
                write_atomic(&path, &bytes)?;
            }
        }
        Ok(())
    }
}

fn tau_tag(tau: f64) -> String {
    format!("tau{tau}")
}

fn fit(args: FitArgs) -> Result<Outputs> {
    let cfg = args.tuning.config(0.05)?;
    let sample = load(&args.input, args.log_transform)?;
    let c = coefficients(&args.c, sample.p());
    let mut out = Outputs(Vec::new());
    for tau in &args.tuning.tau {
        let mut warnings = Vec::new();
        let fit = estimate_series(&sample, &c, *tau, args.mode, &cfg, 1, &mut warnings)?;
        out.add(args.out.join(format!("curve_{}.csv", tau_tag(*tau))), curve_csv(&fit));
        for w in warnings {
            eprintln!("warning: {}", serde_json::to_string(&w)?);
        }
    }
    Ok(out)
}

fn shift(args: PairArgs) -> Result<Outputs> {
    let cfg = args.tuning.config(args.alpha[0])?;
    let dir = args.out.clone().ok_or_else(|| Error::InvalidInput("shift needs --out <dir>".into()))?;
    let s1 = load(&args.input1, args.log_transform)?;
    let s2 = load(&args.input2, args.log_transform)?;
    let (c1, c2) = (coefficients(&args.c1, s1.p()), coefficients(&args.c2, s2.p()));
    let mut out = Outputs(Vec::new());
    let mut summaries = Vec::new();
    for tau in &args.tuning.tau {
        let pair = estimate_pair(&s1, &s2, &c1, &c2, *tau, TestMode::Sit, &cfg)?;
        for (s, fit) in pair.series.iter().enumerate() {
            out.add(dir.join(format!("curve{}_{}.csv", s + 1, tau_tag(*tau))), curve_csv(fit));
        }
        let se = &pair.shift;
        summaries.push((
            *tau,
            ShiftSummary {
                d_tilde: se.d_tilde,
                d_hat: se.d_hat,
                a_hat: se.a_hat,
                b_hat: se.b_hat,
                eta: se.eta,
                window_lo: se.window.0,
                window_hi: se.window.1,
            },
        ));
    }
    let mut text = serde_json::to_string_pretty(&summaries)?;
    text.push('\n');
    out.add(dir.join("shift.json"), text);
    Ok(out)
}

fn test(args: PairArgs, mode: TestMode, command: &str) -> Result<Outputs> {
    for a in &args.alpha {
        if !(0.0..1.0).contains(a) {
            return Err(Error::InvalidInput(format!("alpha must lie in [0, 1), got {a}")));
        }
    }
    let cfg = args.tuning.config(args.alpha[0])?;
    let s1 = load(&args.input1, args.log_transform)?;
    let s2 = load(&args.input2, args.log_transform)?;
    let (c1, c2) = (coefficients(&args.c1, s1.p()), coefficients(&args.c2, s2.p()));
    let dependence = if args.dependent { Dependence::Dependent } else { Dependence::Independent };
    let report_path = args.out.clone().unwrap_or_else(|| PathBuf::from("-"));
    let mut out = Outputs(Vec::new());
    let mut runs = Vec::new();
    for tau in &args.tuning.tau {
        let outcome = run_test(&s1, &s2, &c1, &c2, *tau, mode, dependence, &cfg, args.seed)?;
        let mut run = RunReport::from_outcome(&outcome, &args.alpha);
        if let (Some(scb), Some(band)) = (&outcome.scb, run.band.as_mut()) {
            if report_path.as_os_str() != "-" {
                let stem = report_path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
                let name = format!("{stem}_band_{}.csv", tau_tag(*tau));
                out.add(report_path.with_file_name(&name), band_csv(scb));
                band.band_csv = Some(name);
            }
        }
        runs.push(run);
    }
    let hash = config_hash(&(&cfg, &args.tuning.tau, &args.alpha, mode, dependence, &c1, &c2, args.log_transform))?;
    let report = TestReport::new(command, args.seed, hash, runs);
    out.add(report_path, report.to_json()?);
    Ok(out)
}

fn simulate(args: SimulateArgs) -> Result<Outputs> {
    check_tau(args.tau)?;
    let design = make_example(&DgpSpec {
        example: args.example,
        n: args.n,
        tau: args.tau,
        dependent_errors: args.dependent,
        seed: args.seed,
    })?;
    let mut out = Outputs(Vec::new());
    out.add(args.out.join("series1.csv"), sample_csv(&design.sample1));
    out.add(args.out.join("series2.csv"), sample_csv(&design.sample2));
    Ok(out)
}

fn mc_table(args: McArgs) -> Result<Outputs> {
    let cfg = args.tuning.config(args.alpha[0])?;
    let dependence = if args.dependent { Dependence::Dependent } else { Dependence::Independent };
    let mut results = Vec::new();
    for example in &args.example {
        for n in &args.n {
            for tau in &args.tuning.tau {
                let exp = McExperiment {
                    example: *example,
                    n: *n,
                    tau: *tau,
                    dependent_errors: args.dependent,
                    seed: args.seed,
                    reps: args.reps,
                    alphas: args.alpha.clone(),
                    mode: args.mode,
                    dependence,
                    config: cfg.clone(),
                };
                let r = monte_carlo(&exp)?;
                for (msg, count) in &r.failures {
                    eprintln!("{} n={n} tau={tau}: {count} replicates failed: {msg}", example.name());
                }
                results.push(r);
            }
        }
    }
    let mut out = Outputs(Vec::new());
    out.add(args.out.unwrap_or_else(|| PathBuf::from("-")), mc_table_csv(&results));
    Ok(out)
}

fn run(cli: Cli) -> Result<()> {
    let outputs = match cli.command {
        Command::Fit(a) => fit(a),
        Command::Shift(a) => shift(a),
        Command::Sit(a) => test(a, TestMode::Sit, "sit"),
        Command::Scb(a) => test(a, TestMode::Scb, "scb"),
        Command::Simulate(a) => simulate(a),
        Command::McTable(a) => mc_table(a),
    }?;
    outputs.flush()
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_degenerate() { 2 } else { 1 })
        }
    }
}
