//! `screwtransfer` command-line tool.
//!
//! Exit codes: 0 on success, 2 for usage and input errors, 3 when a pipeline
//! stage fails. Failures print a JSON object to stdout naming the stage.

mod commands;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use output::CliError;

#[derive(Parser, Debug)]
#[command(name = "screwtransfer", version, about = "Learn a screw-motion task from one demonstration and replay it")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

/// Segmentation tolerances.
#[derive(Args, Debug, Clone, Copy)]
pub struct FitArgs {
    /// Position tolerance of a constant-screw segment (m).
    #[arg(long, env = "SCREWTRANSFER_EPS_POS", default_value_t = 0.005)]
    pub eps_pos: f64,
    /// Rotation tolerance of a constant-screw segment (degrees).
    #[arg(long, env = "SCREWTRANSFER_EPS_ROT", default_value_t = 3.0)]
    pub eps_rot: f64,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Split a demonstration into constant screw segments.
    Segment {
        /// Trajectory file, one JSON sample per line.
        demo: PathBuf,
        #[command(flatten)]
        fit: FitArgs,
        /// Output file; stdout when omitted.
        #[arg(long, env = "SCREWTRANSFER_OUT")]
        out: Option<PathBuf>,
    },
    /// Transfer segmented constraints to a new task instance.
    Transfer(commands::TransferArgs),
    /// Plan joint motion through transferred waypoints.
    Plan(commands::PlanArgs),
    /// Run seeded transplant and harvest trials on the simulated panel.
    Simulate(commands::SimulateArgs),
    /// Summarize a simulation report.
    Report {
        report: PathBuf,
        /// Print the summary as JSON instead of a table.
        #[arg(long)]
        json: bool,
    },
    /// Write a recorded demonstration, task instances and a rendered view
    /// of the simulated panel for use with the other commands.
    Demo(commands::DemoArgs),
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            // help and version are not errors
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let (name, result) = match cli.command {
        Command::Segment { demo, fit, out } => ("segment", commands::segment(&demo, fit, out.as_deref())),
        Command::Transfer(a) => ("transfer", commands::transfer(&a)),
        Command::Plan(a) => ("plan", commands::plan(&a)),
        Command::Simulate(a) => ("simulate", commands::simulate(&a)),
        Command::Report { report, json } => ("report", commands::report(&report, json)),
        Command::Demo(a) => ("demo", commands::demo(&a)),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            println!("{}", e.to_json(name));
            ExitCode::from(e.exit_code())
        }
    }
}

pub(crate) type Result<T> = std::result::Result<T, CliError>;
