//! `flatbeck <command> --scene <path> [--seed N] [--scales lo..hi] [--out dir] [--budget N]`
//!
//! Exit status: 0 every check passed, 1 a verification failed, 2 bad input,
//! 3 unknown command, 4 budget exceeded.

mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use flatbeck::scene::{parse_scale_range, parse_scene};

use commands::{CliError, Report, COMMANDS};

const EXIT_FAIL: u8 = 1;
const EXIT_INPUT: u8 = 2;
const EXIT_UNKNOWN: u8 = 3;
const EXIT_BUDGET: u8 = 4;

#[derive(Debug, Parser)]
#[command(name = "flatbeck", version, about = "Exact checks for flats, measures, thin graphs and Beck-type dichotomies")]
struct Args {
    /// One of: analyze-flats, decompose, stability, beck, thin-verify,
    /// thin-prune, project, pushforward-dim.
    command: String,

    /// Scene file (JSON).
    #[arg(long)]
    scene: PathBuf,

    /// Seed for every random choice; overrides the scene's seed.
    #[arg(long)]
    seed: Option<u64>,

    /// Dyadic scales 2^-lo..2^-hi, written `lo..hi`.
    #[arg(long, value_parser = scales_arg)]
    scales: Option<(u32, u32)>,

    /// Directory for report.json and the per-scale CSV table.
    #[arg(long)]
    out: Option<PathBuf>,

    /// Enumeration / sampling budget.
    #[arg(long)]
    budget: Option<usize>,
}

fn scales_arg(s: &str) -> Result<(u32, u32), String> {
    parse_scale_range(s).ok_or_else(|| format!("expected lo..hi with lo <= hi < 63, got {s:?}"))
}

fn main() -> ExitCode {
    let args = match Args::try_parse() {
        Ok(a) => a,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_INPUT } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    if !COMMANDS.contains(&args.command.as_str()) {
        eprintln!("error: unknown command {:?} (expected one of: {})", args.command, COMMANDS.join(", "));
        return ExitCode::from(EXIT_UNKNOWN);
    }
    match run(&args) {
        Ok(report) => match emit(&args, &report) {
            Ok(()) => ExitCode::from(if report.passed { 0 } else { EXIT_FAIL }),
            Err(e) => {
                eprintln!("error: {e}");
                ExitCode::from(EXIT_INPUT)
            }
        },
        Err(CliError::Input(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(EXIT_INPUT)
        }
        Err(CliError::Budget(msg)) => {
            eprintln!("error: budget exceeded: {msg}");
            ExitCode::from(EXIT_BUDGET)
        }
    }
}

fn run(args: &Args) -> Result<Report, CliError> {
    let scene = parse_scene(&args.scene).map_err(|e| CliError::Input(e.to_string()))?;
    let ctx = commands::Ctx {
        seed: args.seed.or(scene.seed).unwrap_or(0),
        scales: args.scales,
        budget: args.budget,
        scene: &scene,
    };
    let mut report = commands::dispatch(&args.command, &ctx)?;
    let header = serde_json::json!({
        "command": args.command,
        "scene": args.scene.display().to_string(),
        "seed": ctx.seed,
    });
    report.json["header"] = header;
    report.json["passed"] = report.passed.into();
    Ok(report)
}

fn emit(args: &Args, report: &Report) -> std::io::Result<()> {
    let text = serde_json::to_string_pretty(&report.json).expect("reports are plain JSON") + "\n";
    match &args.out {
        None => print!("{text}"),
        Some(dir) => {
            std::fs::create_dir_all(dir)?;
            std::fs::write(dir.join("report.json"), text)?;
            if let Some(t) = &report.table {
                std::fs::write(dir.join(format!("{}.csv", args.command)), t)?;
            }
            println!("{}: {}", args.command, if report.passed { "pass" } else { "fail" });
        }
    }
    Ok(())
}
