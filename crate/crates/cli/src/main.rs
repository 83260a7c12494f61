//! `fisherlat`: sample → posterior → train → metric → geodesic → evaluate, driven by one JSON
//! configuration file.

mod config;
mod pipeline;

use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use fisherlat::dynamics::{lyapunov_sweep, trajectory_divergence, write_sweep, TrajectoryConfig, VpMixtureSpec, DEFAULT_DELTA};
use fisherlat::geometry::{heatmap_svg, MetricField};
use fisherlat::ScalarField;

use config::ExperimentConfig;
use pipeline::{Pipeline, Stage};

const EXIT_CONFIG: u8 = 2;
const EXIT_STAGE: u8 = 3;

#[derive(Parser)]
#[command(name = "fisherlat", version, about = "Fisher metric reconstruction experiments")]
struct Cli {
    /// Experiment configuration (JSON).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the configured master seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Overrides the configured output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads (default: all cores).
    #[arg(long, global = true, env = "FISHERLAT_THREADS")]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the whole pipeline, or everything from `--stage` onward.
    Run {
        #[arg(long, value_enum)]
        stage: Option<Stage>,
    },
    /// Draw microstates and write the per-cell feature table.
    Sample,
    /// Turn features into the grid posterior.
    Posterior,
    /// Fit the potential network to the posterior.
    Train,
    /// Hessian metric and phase map of the trained potential.
    Metric,
    /// Geodesics between the configured endpoints.
    Geodesic,
    /// Reference free-energy field, where one exists.
    Groundtruth,
    /// Affine-invariant comparison against the reference field.
    Evaluate,
    /// Lyapunov exponent of the reverse-time ODE over a parameter sweep.
    Lyapunov {
        /// `sigma=lo:hi:n` or `beta=lo:hi:n`.
        #[arg(long)]
        sweep: String,
        /// Fixed beta when sweeping sigma.
        #[arg(long, default_value_t = 1.0)]
        beta: f64,
        /// Fixed sigma when sweeping beta.
        #[arg(long, default_value_t = 0.5)]
        sigma: f64,
        #[arg(long, default_value_t = 0.0)]
        t: f64,
        #[arg(long, default_value_t = DEFAULT_DELTA)]
        delta: f64,
        /// Also integrate trajectory pairs near x = 0 for each sweep point.
        #[arg(long)]
        trajectory: bool,
    },
    /// Render a scalar field or metric component as an SVG heatmap.
    Plot {
        #[arg(long)]
        input: PathBuf,
        /// Metric component to draw: g11, g12 or g22.
        #[arg(long, default_value = "g11")]
        component: String,
        /// Path CSV files to overlay.
        #[arg(long = "path")]
        paths: Vec<PathBuf>,
        /// Output SVG (default: input with an .svg extension).
        #[arg(long)]
        output: Option<PathBuf>,
    },
}

enum Failure {
    Config(String),
    Stage(String),
}

fn load_config(cli: &Cli) -> Result<ExperimentConfig, Failure> {
    let path = cli.config.as_ref().ok_or_else(|| Failure::Config("--config is required for this command".into()))?;
    let mut cfg = ExperimentConfig::load(path).map_err(Failure::Config)?;
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    if let Some(o) = &cli.out {
        cfg.output_dir = o.clone();
    }
    Ok(cfg)
}

fn parse_sweep(spec: &str) -> Result<(String, Vec<f64>), String> {
    let err = || format!("sweep '{spec}' must look like sigma=lo:hi:n or beta=lo:hi:n");
    let (key, range) = spec.split_once('=').ok_or_else(err)?;
    let parts: Vec<&str> = range.split(':').collect();
    if parts.len() != 3 || !matches!(key, "sigma" | "beta") {
        return Err(err());
    }
    let lo: f64 = parts[0].parse().map_err(|_| err())?;
    let hi: f64 = parts[1].parse().map_err(|_| err())?;
    let n: usize = parts[2].parse().map_err(|_| err())?;
    if n == 0 || !(lo > 0.0) || !(hi > 0.0) {
        return Err(format!("sweep '{spec}' needs n >= 1 and positive bounds"));
    }
    let values = if n == 1 { vec![lo] } else { (0..n).map(|k| lo + (hi - lo) * k as f64 / (n - 1) as f64).collect() };
    Ok((key.to_string(), values))
}

fn lyapunov(out: PathBuf, sweep: &str, beta: f64, sigma: f64, t: f64, delta: f64, trajectory: bool) -> Result<(), Failure> {
    let (key, values) = parse_sweep(sweep).map_err(Failure::Config)?;
    let rows = if key == "sigma" {
        lyapunov_sweep(&values, beta, t, delta)
    } else {
        values
            .iter()
            .map(|&b| lyapunov_sweep(&[sigma], b, t, delta).map(|r| r[0]))
            .collect()
    }
    .map_err(|e| Failure::Config(e.to_string()))?;
    fs::create_dir_all(&out).map_err(|e| Failure::Stage(format!("cannot create {}: {e}", out.display())))?;
    write_sweep(&out.join("lyapunov_sweep.csv"), &rows).map_err(|e| Failure::Stage(e.to_string()))?;
    if trajectory {
        let mut rates = String::from("sigma,beta,rate,lambda_closed\n");
        for (k, r) in rows.iter().enumerate() {
            let spec = VpMixtureSpec::new(r.sigma, r.beta).map_err(|e| Failure::Config(e.to_string()))?;
            let pair = trajectory_divergence(&spec, &TrajectoryConfig::default()).map_err(|e| Failure::Stage(e.to_string()))?;
            pair.write(&out.join(format!("trajectory_{k}.csv"))).map_err(|e| Failure::Stage(e.to_string()))?;
            rates.push_str(&format!("{},{},{},{}\n", r.sigma, r.beta, pair.rate, spec.lyapunov_closed(TrajectoryConfig::default().t_end)));
        }
        fs::write(out.join("trajectory_rates.csv"), rates).map_err(|e| Failure::Stage(e.to_string()))?;
    }
    Ok(())
}

fn plot(input: PathBuf, component: &str, paths: &[PathBuf], output: Option<PathBuf>) -> Result<(), Failure> {
    let stage = |e: String| Failure::Stage(e);
    let header = fs::read_to_string(&input)
        .map_err(|e| stage(format!("cannot read {}: {e}", input.display())))?
        .lines()
        .next()
        .unwrap_or("")
        .trim()
        .to_string();
    let field = match header.as_str() {
        "i,j,value" => ScalarField::read(&input).map_err(|e| stage(e.to_string()))?,
        "i,j,g11,g12,g22" => {
            let k = ["g11", "g12", "g22"]
                .iter()
                .position(|c| *c == component)
                .ok_or_else(|| Failure::Config(format!("unknown metric component '{component}'")))?;
            MetricField::read(&input).map_err(|e| stage(e.to_string()))?.component(k)
        }
        other => return Err(stage(format!("{}:1: unsupported header '{other}'", input.display()))),
    };
    let overlays = paths.iter().map(|p| pipeline::read_path(p).map_err(stage)).collect::<Result<Vec<_>, _>>()?;
    let refs: Vec<&[[f64; 2]]> = overlays.iter().map(|p| p.as_slice()).collect();
    let output = output.unwrap_or_else(|| input.with_extension("svg"));
    fs::write(&output, heatmap_svg(&field, &refs)).map_err(|e| stage(format!("cannot write {}: {e}", output.display())))
}

fn run(cli: Cli) -> Result<(), Failure> {
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Failure::Config(format!("thread pool: {e}")))?;
    }
    let stages: Vec<Stage> = match &cli.command {
        Command::Run { stage } => Stage::ALL.iter().copied().filter(|s| stage.is_none_or(|first| *s >= first)).collect(),
        Command::Sample => vec![Stage::Sample],
        Command::Posterior => vec![Stage::Posterior],
        Command::Train => vec![Stage::Train],
        Command::Metric => vec![Stage::Metric],
        Command::Geodesic => vec![Stage::Geodesic],
        Command::Groundtruth => vec![Stage::Groundtruth],
        Command::Evaluate => vec![Stage::Evaluate],
        Command::Lyapunov { sweep, beta, sigma, t, delta, trajectory } => {
            let out = cli.out.clone().unwrap_or_else(|| PathBuf::from("."));
            return lyapunov(out, sweep, *beta, *sigma, *t, *delta, *trajectory);
        }
        Command::Plot { input, component, paths, output } => return plot(input.clone(), component, paths, output.clone()),
    };
    let cfg = load_config(&cli)?;
    Pipeline::new(cfg).run(&stages).map_err(|e| Failure::Stage(e.to_string()))
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Config(m)) => {
            eprintln!("configuration error: {m}");
            ExitCode::from(EXIT_CONFIG)
        }
        Err(Failure::Stage(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(EXIT_STAGE)
        }
    }
}
