use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::{json, Value};

use ampbench::bounds::{fidelity_margin, theorem1_margin};
use ampbench::channels::{random_operation, ChannelSpec, NlaConfig};
use ampbench::ensemble::{
    estimate_from_samples, fock_channel_for_grid, full_summary, read_samples_file, sample_errors, simulate_records,
    write_samples, EnsembleChannel, GaussianChain, IntegrationGrid, Prior, ShotSampler, Task, DEFAULT_GH_ORDER,
};
use ampbench::epr::distillation_certificate;
use ampbench::figures::{bounds_table, fig1a, fig1b, write_fig1a_csv, write_fig1b_csv};
use ampbench::nla::{nla_sweep, write_sweep_csv};
use ampbench::verify::{self, Suite};
use ampbench::Error;

/// Amplification-limit benchmarks for continuous-variable amplifiers.
#[derive(Parser)]
#[command(name = "ampbench", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Data series of the uncertainty-product plane (1a) or MSD versus gain (1b).
    Figure(FigureArgs),
    /// Closed-form limits at one (λ, η) point, as JSON.
    Bounds(BoundsArgs),
    /// Closed-form NLA performance over a parameter grid.
    NlaSweep(SweepArgs),
    /// Run the self-checking suites; exits nonzero when any check fails.
    Verify(VerifyArgs),
    /// Distillation certificate from homodyne samples at η = 1 + λ.
    Certify(CertifyArgs),
    /// Synthetic homodyne samples of a channel on the ensemble.
    Simulate(SimulateArgs),
    /// Ensemble MSDs, fidelity and bound margins of a channel.
    Evaluate(EvaluateArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum Which {
    #[value(name = "1a")]
    A,
    #[value(name = "1b")]
    B,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Csv,
    Json,
}

#[derive(Args)]
struct FigureArgs {
    #[arg(value_enum)]
    which: Which,
    #[arg(long, default_value_t = 0.4)]
    lambda: f64,
    /// Effective gain η′ = η/(1+λ) of the 1a boundary.
    #[arg(long, default_value_t = 1.3)]
    eta: f64,
    #[arg(long, default_value_t = 0.0)]
    eta_min: f64,
    #[arg(long, default_value_t = 3.0)]
    eta_max: f64,
    #[arg(long, default_value_t = 301)]
    eta_steps: usize,
    /// Half-width of the R range of 1a.
    #[arg(long, default_value_t = 2.0)]
    r_max: f64,
    #[arg(long, default_value_t = 201)]
    r_steps: usize,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Format::Csv)]
    format: Format,
}

#[derive(Args)]
struct BoundsArgs {
    #[arg(long)]
    lambda: f64,
    #[arg(long)]
    eta: f64,
    /// Also report the phase-conjugating entries under `selected`.
    #[arg(long)]
    conjugate: bool,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SweepArgs {
    #[arg(long, value_delimiter = ',', default_value = "0.4")]
    lambda: Vec<f64>,
    #[arg(long, value_delimiter = ',')]
    eta: Vec<f64>,
    #[arg(long)]
    eta_min: Option<f64>,
    #[arg(long)]
    eta_max: Option<f64>,
    #[arg(long, default_value_t = 11)]
    eta_steps: usize,
    #[arg(long, value_delimiter = ',', required = true)]
    g: Vec<f64>,
    #[arg(long = "N", value_delimiter = ',', required = true)]
    cutoff: Vec<usize>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Format::Csv)]
    format: Format,
}

#[derive(Args)]
struct VerifyArgs {
    #[arg(long, default_value = "all")]
    suite: String,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct CertifyArgs {
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    lambda: f64,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ChannelArgs {
    /// `identity`, `amp`, `nla`, `random`, or a channel as JSON.
    #[arg(long, default_value = "identity")]
    channel: String,
    /// Gain of `amp` or `nla`.
    #[arg(long, default_value_t = 1.0)]
    g: f64,
    /// NLA cutoff.
    #[arg(long = "N", default_value_t = 10)]
    cutoff: usize,
    /// Fock dimension of `random`.
    #[arg(long, default_value_t = 14)]
    dim: usize,
    #[arg(long, default_value_t = 1)]
    seed: u64,
}

impl ChannelArgs {
    fn spec(&self) -> Result<ChannelSpec, Error> {
        Ok(match self.channel.as_str() {
            "identity" => ChannelSpec::Identity,
            "amp" => ChannelSpec::GaussianAmp { gain: self.g },
            "nla" => ChannelSpec::Nla(NlaConfig::saturating(self.g, self.cutoff)?),
            "random" => ChannelSpec::Random {
                kraus: 2,
                trace_decreasing: true,
                seed: self.seed,
            },
            json_text => serde_json::from_str(json_text)
                .map_err(|e| Error::InvalidInput(format!("channel '{json_text}': {e}")))?,
        })
    }
}

#[derive(Args)]
struct SimulateArgs {
    #[command(flatten)]
    channel: ChannelArgs,
    #[arg(long, default_value_t = 0.4)]
    lambda: f64,
    #[arg(long, default_value_t = 100_000)]
    shots: usize,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct EvaluateArgs {
    #[command(flatten)]
    channel: ChannelArgs,
    #[arg(long, default_value_t = 0.4)]
    lambda: f64,
    /// Task gain; defaults to 1 + λ.
    #[arg(long)]
    eta: Option<f64>,
    #[arg(long)]
    conjugate: bool,
    #[arg(long, default_value_t = DEFAULT_GH_ORDER)]
    grid_order: usize,
    /// Use Monte Carlo integration with this many samples instead.
    #[arg(long)]
    mc_samples: Option<usize>,
    #[arg(long)]
    out: Option<PathBuf>,
}

fn output(path: Option<&Path>) -> io::Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(File::create(p)?)),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

fn write_json(path: Option<&Path>, value: &Value) -> Result<(), Error> {
    let mut w = output(path)?;
    serde_json::to_writer_pretty(&mut w, value)?;
    writeln!(w)?;
    w.flush()?;
    Ok(())
}

fn linspace(lo: f64, hi: f64, steps: usize) -> Vec<f64> {
    if steps < 2 {
        return vec![lo];
    }
    (0..steps).map(|i| lo + (hi - lo) * i as f64 / (steps - 1) as f64).collect()
}

fn figure(args: FigureArgs) -> Result<(), Error> {
    let out = args.out.as_deref();
    match args.which {
        Which::A => {
            let rows = fig1a(args.eta, args.lambda, args.r_max, args.r_steps)?;
            match args.format {
                Format::Csv => write_fig1a_csv(output(out)?, &rows),
                Format::Json => write_json(out, &serde_json::to_value(&rows)?),
            }
        }
        Which::B => {
            let rows = fig1b(args.lambda, args.eta_min, args.eta_max, args.eta_steps)?;
            match args.format {
                Format::Csv => write_fig1b_csv(output(out)?, &rows),
                Format::Json => write_json(out, &serde_json::to_value(&rows)?),
            }
        }
    }
}

fn bounds(args: BoundsArgs) -> Result<(), Error> {
    let mut table = bounds_table(args.eta, args.lambda)?;
    let key = if args.conjugate { "conj" } else { "normal" };
    table["selected"] = json!({
        "task": key,
        "theorem1_rhs": table["theorem1_rhs"][key],
        "symmetric_msd_bound": table["symmetric_msd_bound"][key],
        "fidelity_bound": table["fidelity_bound"][key],
        "aup_rhs": table["aup_rhs"][key],
    });
    write_json(args.out.as_deref(), &table)
}

fn nla_sweep_cmd(args: SweepArgs) -> Result<(), Error> {
    let etas = match (args.eta_min, args.eta_max) {
        (Some(lo), Some(hi)) => linspace(lo, hi, args.eta_steps),
        (None, None) if !args.eta.is_empty() => args.eta.clone(),
        _ => return Err(Error::InvalidInput("give --eta or both --eta-min and --eta-max".into())),
    };
    let rows = nla_sweep(&args.g, &args.cutoff, &args.lambda, &etas)?;
    let out = args.out.as_deref();
    match args.format {
        Format::Csv => write_sweep_csv(output(out)?, &rows),
        Format::Json => write_json(out, &serde_json::to_value(&rows)?),
    }
}

fn verify_cmd(args: VerifyArgs) -> Result<bool, Error> {
    let suite: Suite = args.suite.parse()?;
    let report = verify::run(suite, args.seed)?;
    for s in &report.suites {
        eprintln!(
            "{:<9} {} ({} checks, worst margin {:.3e})",
            s.suite.name(),
            if s.passed { "PASS" } else { "FAIL" },
            s.checks.len(),
            s.worst_margin()
        );
        for c in s.failures() {
            eprintln!("  failed: {} (value {:.6e}, margin {:.3e})", c.name, c.value, c.margin);
        }
    }
    write_json(args.out.as_deref(), &verify::report_json(&report))?;
    Ok(report.passed)
}

fn certify(args: CertifyArgs) -> Result<(), Error> {
    let records = read_samples_file(&args.input)?;
    if records.is_empty() {
        return Err(Error::InsufficientData(format!("{} holds no shots", args.input.display())));
    }
    let task = Task::symmetric(1.0 + args.lambda, false)?;
    let summary = estimate_from_samples(&records, &task, args.lambda)?;
    let errors = sample_errors(&records, &task)?;
    let cert = distillation_certificate(&summary)?;
    let mut v = cert.to_json(Some(&errors));
    v["shots"] = json!(records.len());
    write_json(args.out.as_deref(), &v)
}

fn simulate(args: SimulateArgs) -> Result<(), Error> {
    let spec = args.channel.spec()?;
    let prior = Prior::new(args.lambda)?;
    let records = match GaussianChain::from_spec(&spec)? {
        Some(chain) => simulate_records(&chain, &prior, args.shots, args.channel.seed)?,
        None => {
            let channel = match &spec {
                ChannelSpec::Random {
                    kraus,
                    trace_decreasing,
                    seed,
                } => random_operation(args.channel.dim, *kraus, *trace_decreasing, *seed)?,
                other => fock_channel_for_grid(other, &prior, &IntegrationGrid::default())?,
            };
            simulate_records(&channel as &dyn ShotSampler, &prior, args.shots, args.channel.seed)?
        }
    };
    write_samples(output(args.out.as_deref())?, &records)
}

fn evaluate(args: EvaluateArgs) -> Result<(), Error> {
    let spec = args.channel.spec()?;
    let prior = Prior::new(args.lambda)?;
    let grid = match args.mc_samples {
        Some(samples) => IntegrationGrid::MonteCarlo {
            samples,
            seed: args.channel.seed,
        },
        None => IntegrationGrid::GaussHermite { order: args.grid_order },
    };
    let eta = args.eta.unwrap_or(1.0 + args.lambda);
    let task = Task::symmetric(eta, args.conjugate)?;
    let gaussian = GaussianChain::from_spec(&spec)?;
    let fock = match (&gaussian, &spec) {
        (Some(_), _) => None,
        (
            None,
            ChannelSpec::Random {
                kraus,
                trace_decreasing,
                seed,
            },
        ) => Some(random_operation(args.channel.dim, *kraus, *trace_decreasing, *seed)?),
        (None, other) => Some(fock_channel_for_grid(other, &prior, &grid)?),
    };
    let channel: &dyn EnsembleChannel = match (&gaussian, &fock) {
        (Some(g), _) => g,
        (None, Some(f)) => f,
        (None, None) => unreachable!("one backend is always built"),
    };
    let summary = full_summary(channel, &task, &prior, &grid)?;
    let (vx, vp) = summary.conditional();
    let mut v = json!({
        "channel": spec,
        "backend": channel.describe(),
        "grid": grid,
        "summary": summary,
        "vbar_x_prob": vx,
        "vbar_p_prob": vp,
        "theorem1": theorem1_margin(&summary),
        "fidelity": fidelity_margin(&summary)?,
    });
    if !args.conjugate && (eta - (1.0 + args.lambda)).abs() <= 1e-12 * eta {
        v["certificate"] = distillation_certificate(&summary)?.to_json(None);
    }
    write_json(args.out.as_deref(), &v)
}

fn configure_threads() {
    if let Some(n) = std::env::var("AMPBENCH_THREADS").ok().and_then(|s| s.parse::<usize>().ok()) {
        if n > 0 {
            // a second initialization only happens in tests and is harmless
            let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    configure_threads();
    let result = match cli.command {
        Command::Figure(a) => figure(a).map(|_| true),
        Command::Bounds(a) => bounds(a).map(|_| true),
        Command::NlaSweep(a) => nla_sweep_cmd(a).map(|_| true),
        Command::Verify(a) => verify_cmd(a),
        Command::Certify(a) => certify(a).map(|_| true),
        Command::Simulate(a) => simulate(a).map(|_| true),
        Command::Evaluate(a) => evaluate(a).map(|_| true),
    };
    match result {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
