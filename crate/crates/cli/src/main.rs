use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use subnyq::experiments::{emit_outputs, run, with_workers, Experiment, ExperimentConfig};
use subnyq::io::{
    read_bundle, read_signal, write_bundle_binary, write_power_csv, write_trace_csv,
    MeasurementBundle,
};
use subnyq::multicoset::{white_signal, MultiCosetConfig, PowerEstimator};
use subnyq::rng::stream;
use subnyq::spectralcs::{
    recover, synthesize_signal, AmplitudeMethod, LineSpectrumModel, MeasurementSystem,
    RecoveryConfig, RootMusicConfig, StopRule,
};
use subnyq::{Error, Result};

#[derive(Parser)]
#[command(
    name = "subnyq",
    version,
    about = "Spectral estimation from sub-Nyquist and compressive data"
)]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Global {
    /// Run seed; overrides the config file.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Monte Carlo trials per grid point; overrides the config file.
    #[arg(long, global = true)]
    trials: Option<usize>,
    /// Output CSV path.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// TOML experiment configuration.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Worker threads (defaults to the available cores).
    #[arg(long, global = true)]
    workers: Option<usize>,
    /// Also write a gnuplot script next to the CSV.
    #[arg(long, global = true)]
    plot: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Analytical (and optionally empirical) correlogram variance versus N_x.
    Fig1,
    /// Recovery NMSE per iteration.
    Fig2,
    /// Recovery NMSE versus noise level.
    Fig3,
    /// Recovery NMSE versus measurement count.
    Fig4,
    /// Missed frequencies per iteration.
    Table1,
    /// Normalised Cramér-Rao bound versus noise level.
    Crb,
    /// Recover a line spectrum from one measurement bundle.
    Recover(RecoverArgs),
    /// Per-segment average power from multi-coset samples.
    Correlogram(CorrelogramArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum Method {
    Nested,
    Siht,
}

#[derive(Args)]
struct RecoverArgs {
    /// Binary bundle file or CSV bundle directory.
    #[arg(
        long,
        conflicts_with = "simulate",
        required_unless_present = "simulate"
    )]
    bundle: Option<PathBuf>,
    /// Draw a problem from the recovery settings and the run seed.
    #[arg(long)]
    simulate: bool,
    #[arg(long, value_enum, default_value = "nested")]
    method: Method,
    #[arg(long)]
    iterations: Option<usize>,
    #[arg(long)]
    music_window: Option<usize>,
    /// Noise standard deviation for --simulate.
    #[arg(long)]
    sigma: Option<f64>,
    /// Measurement count for --simulate.
    #[arg(long)]
    measurements: Option<usize>,
    /// Write the simulated problem as a binary bundle.
    #[arg(long, requires = "simulate")]
    save_bundle: Option<PathBuf>,
}

#[derive(Args)]
struct CorrelogramArgs {
    /// Nyquist-grid signal: .csv with re[,im] columns, otherwise raw little-endian f64.
    #[arg(
        long,
        conflicts_with = "simulate",
        required_unless_present = "simulate"
    )]
    signal: Option<PathBuf>,
    /// Use white circular Gaussian input.
    #[arg(long)]
    simulate: bool,
    #[arg(long, default_value_t = 51)]
    segments: usize,
    /// Channel count for randomly drawn offsets.
    #[arg(long, default_value_t = 12)]
    channels: usize,
    /// Explicit comma-separated offsets.
    #[arg(long, value_delimiter = ',')]
    offsets: Option<Vec<usize>>,
    #[arg(long, default_value_t = 4)]
    filter_len: usize,
    #[arg(long, default_value_t = 1000.0)]
    nyquist_rate: f64,
    /// Samples per channel for --simulate.
    #[arg(long, default_value_t = 128)]
    samples_per_channel: usize,
    /// Input power for --simulate.
    #[arg(long, default_value_t = 4.0)]
    sigma2: f64,
}

fn load_config(g: &Global) -> Result<ExperimentConfig> {
    let mut config = match &g.config {
        Some(path) => ExperimentConfig::load(path)?,
        None => ExperimentConfig::default(),
    };
    if let Some(seed) = g.seed {
        config.seed = seed;
    }
    if let Some(trials) = g.trials {
        config.trials = trials;
    }
    config.validate()?;
    Ok(config)
}

fn out_path(g: &Global, default: &str) -> PathBuf {
    g.out.clone().unwrap_or_else(|| PathBuf::from(default))
}

fn sibling(path: &Path, suffix: &str) -> PathBuf {
    let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or("out");
    path.with_file_name(format!("{stem}_{suffix}.csv"))
}

fn io_err(path: &Path, e: impl std::fmt::Display) -> Error {
    Error::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    }
}

fn run_experiment(g: &Global, experiment: Experiment) -> Result<()> {
    let config = load_config(g)?;
    let path = out_path(g, &format!("{}.csv", experiment.tag()));
    let table = with_workers(workers(g), || run(&config, experiment))??;
    emit_outputs(&table, &path, g.plot)?;
    println!("wrote {}", path.display());
    Ok(())
}

fn simulate_bundle(config: &ExperimentConfig, args: &RecoverArgs) -> Result<MeasurementBundle> {
    let r = &config.recovery;
    let sigma = args.sigma.unwrap_or(r.sigma);
    let m = args.measurements.unwrap_or(r.measurements);
    let mut rng = stream(config.seed, "recover", 0, 0);
    let model = LineSpectrumModel::random(
        r.order,
        r.spacing_factor * std::f64::consts::PI / r.length as f64,
        r.random_phase,
        &mut rng,
    )?;
    let system = MeasurementSystem::gaussian(m, r.length, sigma, &mut rng)?;
    let y = system.measure(&synthesize_signal(&model, r.length), &mut rng);
    Ok(MeasurementBundle {
        y,
        phi: system.phi,
        order: r.order,
        noise_sigma: sigma,
        truth: Some(model),
    })
}

fn run_recover(g: &Global, args: &RecoverArgs) -> Result<()> {
    let config = load_config(g)?;
    let bundle = match &args.bundle {
        Some(path) => read_bundle(path)?,
        None => simulate_bundle(&config, args)?,
    };
    if let Some(path) = &args.save_bundle {
        write_bundle_binary(path, &bundle)?;
    }
    let n = bundle.phi.cols();
    let window = args.music_window.unwrap_or(
        RootMusicConfig::DEFAULT_WINDOW
            .max(2 * bundle.order + 12)
            .min(n),
    );
    let recovery = RecoveryConfig {
        lambda: config.recovery.lambda,
        music: RootMusicConfig::new(window, bundle.order)?,
        stop: StopRule::Iterations(args.iterations.unwrap_or(config.recovery.iterations)),
        method: match args.method {
            Method::Nested => AmplitudeMethod::NestedLs,
            Method::Siht => AmplitudeMethod::Siht,
        },
    };
    let trace = with_workers(workers(g), || recover(&bundle.y, &bundle.phi, &recovery))??;
    let path = out_path(g, "recover.csv");
    write_trace_csv(&path, &trace, bundle.truth.as_ref())?;
    let estimates = sibling(&path, "estimates");
    let last = trace
        .iterations
        .last()
        .ok_or_else(|| Error::Config("recovery ran no iterations".into()))?;
    let mut text = String::from("index,omega,amplitude_re,amplitude_im\n");
    for (i, (w, d)) in last.omega_hat.iter().zip(&last.d_hat).enumerate() {
        text.push_str(&format!("{},{w},{},{}\n", i + 1, d.re, d.im));
    }
    std::fs::write(&estimates, text).map_err(|e| io_err(&estimates, e))?;
    println!("wrote {} and {}", path.display(), estimates.display());
    Ok(())
}

fn run_correlogram(g: &Global, args: &CorrelogramArgs) -> Result<()> {
    let seed = match &g.config {
        Some(_) => load_config(g)?.seed,
        None => g.seed.unwrap_or(ExperimentConfig::default().seed),
    };
    let signal = match &args.signal {
        Some(path) => Some(read_signal(path)?),
        None => None,
    };
    let geometry = |n: usize| match &args.offsets {
        Some(offsets) => MultiCosetConfig::new(
            args.nyquist_rate,
            args.segments,
            offsets.clone(),
            args.filter_len,
            n,
        ),
        None => {
            let mut rng = stream(seed, "correlogram-offsets", 0, 0);
            MultiCosetConfig::random(
                args.nyquist_rate,
                args.segments,
                args.channels,
                args.filter_len,
                n,
                &mut rng,
            )
        }
    };
    let probe = geometry(1)?;
    let n = match &signal {
        Some(x) => {
            let max_c = probe.offsets().iter().copied().max().unwrap_or(0);
            if x.len() <= max_c {
                return Err(Error::Bounds {
                    required: max_c + 1,
                    actual: x.len(),
                });
            }
            (x.len() - max_c - 1) / args.segments + 1
        }
        None => args.samples_per_channel,
    };
    let estimator = PowerEstimator::new(probe.with_samples_per_channel(n)?)?;
    let estimate = match signal {
        Some(x) => estimator.estimate(&x)?,
        None => {
            let mut rng = stream(seed, "correlogram-signal", 0, 0);
            let x = white_signal(estimator.config.nyquist_len(), args.sigma2, &mut rng);
            estimator.estimate(&x)?
        }
    };
    let path = out_path(g, "correlogram.csv");
    write_power_csv(&path, &estimate)?;
    println!("wrote {}", path.display());
    Ok(())
}

fn workers(g: &Global) -> usize {
    g.workers
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()))
        .max(1)
}

fn kind(e: &Error) -> &'static str {
    match e {
        Error::Config(_) => "config",
        Error::Bounds { .. } => "bounds",
        Error::Numerics(_) => "numerics",
        Error::DegenerateSubspace { .. } => "degenerate-subspace",
        Error::BoundUnavailable(_) => "bound-unavailable",
        Error::Io { .. } => "io",
        Error::Parse(_) => "parse",
    }
}

fn report(kind: &str, message: &str) {
    let escaped = message
        .trim()
        .replace('\\', "\\\\")
        .replace('"', "\\\"")
        .replace('\n', " ");
    eprintln!("error kind={kind} message=\"{escaped}\"");
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            report("usage", &e.to_string());
            return ExitCode::from(2);
        }
    };
    let g = &cli.global;
    let outcome = match &cli.command {
        Command::Fig1 => run_experiment(g, Experiment::Fig1),
        Command::Fig2 => run_experiment(g, Experiment::Fig2),
        Command::Fig3 => run_experiment(g, Experiment::Fig3),
        Command::Fig4 => run_experiment(g, Experiment::Fig4),
        Command::Table1 => run_experiment(g, Experiment::Table1),
        Command::Crb => run_experiment(g, Experiment::Crb),
        Command::Recover(args) => run_recover(g, args),
        Command::Correlogram(args) => run_correlogram(g, args),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            report(kind(&e), &e.to_string());
            ExitCode::FAILURE
        }
    }
}
