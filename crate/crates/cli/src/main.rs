use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use emacreg::benchmarks::StudyAxis;
use emacreg_cli::commands::{self, ErrorMeasure};
use emacreg_cli::config::{parse_raw, resolve, RawConfig};
use emacreg_cli::{CliError, Result};

#[derive(Parser)]
#[command(name = "emacreg", version, about = "EMAC-regularized Navier-Stokes finite element experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one benchmark and write diagnostics.
    Run(Box<RunArgs>),
    /// Decaying-vortex convergence study.
    Converge {
        #[arg(long, default_value = "spatial")]
        axis: String,
        /// Report final-time errors or maxima over time.
        #[arg(long, value_enum, default_value = "final")]
        error: ErrorMeasure,
        #[arg(long = "T", default_value_t = 1.0)]
        end_time: f64,
    },
    /// Momentum probes of each convective form on a non-solenoidal pair.
    Probe {
        #[arg(long, default_value_t = 16)]
        n: usize,
    },
    /// List the available benchmarks.
    List,
}

#[derive(clap::Args)]
struct RunArgs {
    /// TOML file with the same keys as the flags below.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    benchmark: Option<String>,
    #[arg(long)]
    scheme: Option<String>,
    #[arg(long)]
    h: Option<f64>,
    #[arg(long)]
    dt: Option<f64>,
    #[arg(long = "T")]
    end_time: Option<f64>,
    #[arg(long)]
    nu: Option<f64>,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    integrator: Option<String>,
    #[arg(long)]
    newton_tol: Option<f64>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    every: Option<usize>,
    /// Comma-separated list of csv, vtu.
    #[arg(long, value_delimiter = ',')]
    formats: Option<Vec<String>>,
}

fn execute(cmd: Command) -> Result<()> {
    match cmd {
        Command::Run(a) => {
            let a = *a;
            let file = match &a.config {
                Some(p) => parse_raw(&std::fs::read_to_string(p).map_err(|e| CliError::Config(format!("{}: {e}", p.display())))?)?,
                None => RawConfig::default(),
            };
            let flags = RawConfig {
                benchmark: a.benchmark,
                scheme: a.scheme,
                h: a.h,
                dt: a.dt,
                end_time: a.end_time,
                nu: a.nu,
                alpha: a.alpha,
                integrator: a.integrator,
                newton_tol: a.newton_tol,
                newton_max: None,
                out: a.out,
                every: a.every,
                formats: a.formats,
            };
            let cfg = resolve(file.merge(flags))?;
            for w in &cfg.warnings {
                eprintln!("warning: {w}");
            }
            let summary = commands::run(&cfg)?;
            if let Some(last) = summary.records.last() {
                println!(
                    "t={} energy={:.10e} momentum=({:.3e}, {:.3e}) ang_momentum={:.10e} div_u={:.3e}",
                    last.t, last.energy_model, last.momentum[0], last.momentum[1], last.ang_momentum, last.div_u
                );
                if let Some(e) = last.err_l2_u {
                    println!("L2 error of u: {e:.6e}");
                }
            }
            println!("wrote {} file(s) to {}", summary.files.len() + 1, cfg.out.display());
        }
        Command::Converge { axis, error, end_time } => {
            let axis: StudyAxis = axis.parse().map_err(|e: emacreg::Error| CliError::Config(e.to_string()))?;
            let rows = commands::converge(axis, end_time)?;
            print!("{}", commands::format_convergence(&rows, error));
        }
        Command::Probe { n } => print!("{}", commands::format_probe(&commands::probe(n)?)),
        Command::List => print!("{}", commands::list()),
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    match execute(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
