use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use landscape_lab::config::{parse_architecture, parse_delta, parse_format};
use landscape_lab::run::{execute, workers, Command};
use landscape_lab::{fixture, ExperimentConfig, Format, LabError};

#[derive(Parser)]
#[command(name = "landscape", version, about = "Loss-landscape certification runs")]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Write the configured data pair as a fixture file.
    Gen(Overrides),
    /// Construct a global minimizer and report its certificate.
    Minimize(Overrides),
    /// Sample the gradient-dominance neighborhood.
    CheckGd(Overrides),
    /// Search and re-check the regularity radius.
    CheckRc(Overrides),
    /// Run gradient descent from inside the neighborhood.
    Descend(Overrides),
    /// All of the above in one report.
    Full(Overrides),
}

#[derive(Args)]
struct Overrides {
    /// Flat `key = value` configuration file.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    architecture: Option<String>,
    #[arg(long)]
    d: Option<String>,
    #[arg(long)]
    m: Option<String>,
    #[arg(long)]
    l: Option<String>,
    #[arg(long)]
    r: Option<String>,
    #[arg(long)]
    slope: Option<String>,
    #[arg(long)]
    fixture: Option<String>,
    #[arg(long)]
    seed: Option<String>,
    #[arg(long)]
    samples: Option<String>,
    #[arg(long)]
    gamma: Option<String>,
    /// `eta_min` or a positive number.
    #[arg(long)]
    delta: Option<String>,
    /// `json` or `csv`.
    #[arg(long)]
    format: Option<String>,
    #[arg(long)]
    output: Option<PathBuf>,
    /// Add the wall time to the report (breaks byte-for-byte reproducibility).
    #[arg(long)]
    timing: bool,
}

impl Overrides {
    fn config(&self) -> Result<ExperimentConfig, LabError> {
        let mut cfg = match &self.config {
            Some(p) => ExperimentConfig::load(p)?,
            None => ExperimentConfig::default(),
        };
        if let Some(v) = &self.architecture {
            cfg.architecture = parse_architecture(v)?;
        }
        for (key, v) in [
            ("d", &self.d),
            ("m", &self.m),
            ("l", &self.l),
            ("r", &self.r),
            ("slope", &self.slope),
            ("fixture", &self.fixture),
            ("seed", &self.seed),
            ("samples", &self.samples),
            ("gamma", &self.gamma),
        ] {
            if let Some(v) = v {
                cfg.set(key, v)?;
            }
        }
        if let Some(v) = &self.delta {
            cfg.delta = parse_delta(v)?;
        }
        if let Some(v) = &self.format {
            cfg.format = parse_format(v)?;
        }
        if let Some(p) = &self.output {
            cfg.output = Some(p.clone());
        }
        Ok(cfg)
    }
}

fn emit(cfg: &ExperimentConfig, text: &str) -> Result<(), LabError> {
    match &cfg.output {
        Some(p) => std::fs::write(p, text).map_err(|e| LabError::io(p, e)),
        None => std::io::stdout()
            .write_all(text.as_bytes())
            .map_err(|e| LabError::io(std::path::Path::new("<stdout>"), e)),
    }
}

fn run(cli: Cli) -> Result<i32, LabError> {
    let (command, ov) = match &cli.command {
        Cmd::Gen(o) => (Command::Gen, o),
        Cmd::Minimize(o) => (Command::Minimize, o),
        Cmd::CheckGd(o) => (Command::CheckGd, o),
        Cmd::CheckRc(o) => (Command::CheckRc, o),
        Cmd::Descend(o) => (Command::Descend, o),
        Cmd::Full(o) => (Command::Full, o),
    };
    let cfg = ov.config()?;
    if command == Command::Gen {
        let pair = landscape_lab::run::cmd_gen(&cfg)?;
        emit(&cfg, &fixture::to_string(&pair))?;
        return Ok(0);
    }
    let t0 = Instant::now();
    let mut report = execute(command, &cfg, workers())?;
    let ms = t0.elapsed().as_secs_f64() * 1e3;
    eprintln!("{}: {:.1} ms", command.name(), ms);
    if ov.timing {
        report.wall_time_ms = Some(ms);
    }
    for e in &report.errors {
        eprintln!("error: {e}");
    }
    if report.violations > 0 {
        eprintln!("{} inequality violation(s)", report.violations);
    }
    let text = match cfg.format {
        Format::Json => report.to_json()?,
        Format::Csv => report.to_csv(),
    };
    emit(&cfg, &text)?;
    Ok(report.exit_code())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
