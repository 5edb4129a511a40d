use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use aem_core::emg::{design_butterworth, FilterKind};
use aem_core::sim::{load_config, oracle_sweep, run_simulation, write_csv, SimConfig, SimError, SweepResult};
use clap::{Parser, Subcommand, ValueEnum};

mod serve;

#[derive(Parser)]
#[command(name = "aem", version, about = "Extremum-seeking ellipse orientation simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one headless closed-loop experiment and write its telemetry CSV.
    Simulate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Overrides the seed in the config.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Brute-force steady-state performance over orientations.
    Sweep {
        #[arg(long)]
        config: PathBuf,
        /// Grid step in degrees, within [0.5, 5].
        #[arg(long)]
        step: f64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Real-time WebSocket server for the interactive exercise.
    Serve {
        #[arg(long)]
        config: PathBuf,
        /// TCP port; 0 picks a free one.
        #[arg(long)]
        port: u16,
        #[arg(long, default_value = "127.0.0.1")]
        bind: String,
    },
    /// Print a second-order Butterworth design and check its -3 dB point.
    Filters {
        #[arg(long)]
        fs: f64,
        #[arg(long)]
        fc: f64,
        #[arg(long, value_enum)]
        kind: Kind,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Kind {
    Lp,
    Hp,
}

#[derive(Debug)]
pub enum Failure {
    Config(String),
    Divergence(String),
    Other(anyhow::Error),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Other(_) => 1,
            Failure::Config(_) => 2,
            Failure::Divergence(_) => 3,
        }
    }
}

impl std::fmt::Display for Failure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Failure::Config(m) => write!(f, "config error: {m}"),
            Failure::Divergence(m) => write!(f, "{m}"),
            Failure::Other(e) => write!(f, "{e:#}"),
        }
    }
}

impl From<SimError> for Failure {
    fn from(e: SimError) -> Self {
        match e {
            SimError::Config(_) | SimError::Filter(_) | SimError::Robot(_) => Failure::Config(e.to_string()),
            SimError::Divergence { .. } => Failure::Divergence(e.to_string()),
            other => Failure::Other(other.into()),
        }
    }
}

impl From<io::Error> for Failure {
    fn from(e: io::Error) -> Self {
        Failure::Other(e.into())
    }
}

pub fn read_config(path: &Path) -> Result<SimConfig, Failure> {
    let text = std::fs::read_to_string(path).map_err(|e| Failure::Config(format!("{}: {e}", path.display())))?;
    load_config(&text).map_err(|e| Failure::Config(format!("{}: {e}", path.display())))
}

fn simulate(config: &Path, out: &Path, seed: Option<u64>) -> Result<(), Failure> {
    let mut config = read_config(config)?;
    if let Some(seed) = seed {
        config.seed = seed;
    }
    let (records, status) = run_simulation(&config)?;
    write_csv(&records, out)?;
    if status.converged {
        println!(
            "converged: solution {:.2} deg at t = {:.2} s ({} rows)",
            status.solution,
            status.convergence_time,
            records.len()
        );
    } else {
        let last = records.last().map_or(config.theta0_deg, |r| r.theta_hat_deg);
        println!("not converged: final theta_hat {last:.2} deg ({} rows)", records.len());
    }
    Ok(())
}

fn write_sweep(result: &SweepResult, out: &Path) -> Result<(), Failure> {
    let mut w = BufWriter::new(File::create(out)?);
    writeln!(w, "theta_deg,j_ss,local_max")?;
    for &(theta, j) in &result.grid {
        let is_max = result.maxima.contains(&theta);
        writeln!(w, "{theta},{j},{}", u8::from(is_max))?;
    }
    w.flush()?;
    Ok(())
}

fn sweep(config: &Path, step: f64, out: &Path) -> Result<(), Failure> {
    if !(0.5..=5.0).contains(&step) {
        return Err(Failure::Config(format!("--step must lie in [0.5, 5] degrees (got {step})")));
    }
    let config = read_config(config)?;
    let result = oracle_sweep(&config, step)?;
    write_sweep(&result, out)?;
    let (lo, hi) = result.range();
    println!("J_ss range [{lo:.6}, {hi:.6}]");
    let maxima: Vec<String> = result.maxima.iter().map(|m| format!("{m:.1}")).collect();
    println!("local maxima (deg): {}", maxima.join(", "));
    Ok(())
}

fn filters(fs: f64, fc: f64, kind: Kind) -> Result<(), Failure> {
    let kind = match kind {
        Kind::Lp => FilterKind::Lowpass,
        Kind::Hp => FilterKind::Highpass,
    };
    let c = design_butterworth(kind, fc, fs).map_err(|e| Failure::Config(e.to_string()))?;
    println!("b0 = {:.17e}", c.b0);
    println!("b1 = {:.17e}", c.b1);
    println!("b2 = {:.17e}", c.b2);
    println!("a1 = {:.17e}", c.a1);
    println!("a2 = {:.17e}", c.a2);
    println!("max pole modulus = {:.9}", c.max_pole_modulus());
    let db = 20.0 * c.magnitude(fc, fs).log10();
    let ok = (db + 3.0103).abs() <= 0.2;
    println!("gain at fc = {db:.4} dB ({})", if ok { "ok" } else { "FAIL" });
    if ok {
        Ok(())
    } else {
        Err(Failure::Other(anyhow::anyhow!("-3 dB check failed")))
    }
}

fn run(cli: Cli) -> Result<(), Failure> {
    match cli.command {
        Command::Simulate { config, out, seed } => simulate(&config, &out, seed),
        Command::Sweep { config, step, out } => sweep(&config, step, &out),
        Command::Serve { config, port, bind } => serve::serve(&read_config(&config)?, &bind, port),
        Command::Filters { fs, fc, kind } => filters(fs, fc, kind),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.code())
        }
    }
}
