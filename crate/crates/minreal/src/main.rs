//! Thin CLI over the experiment harness.
//!
//! ```text
//! minreal gen      --config <path> --out <dir> [--seed <int>]
//! minreal fit      --config <path> --data <dir> --out <dir> [--seed <int>] [--budget-s <float>]
//! minreal sweep    --config <path> --out <dir> [--data <dir>] [--seed <int>] [--budget-s <float>]
//! minreal spectrum --data <dir> --fit <dir> --out <dir>
//! ```
//!
//! Exit codes: 0 on success, 1 on configuration or usage errors, 2 when every
//! requested method diverged.

use std::path::PathBuf;
use std::process::ExitCode;

use minreal::harness::{cmd_fit, cmd_gen, cmd_spectrum, cmd_sweep, ExperimentConfig, RunOverrides};

const USAGE: &str = "\
minreal — minimal-order linear system identification experiments

USAGE:
    minreal <gen|fit|sweep|spectrum> [FLAGS]

FLAGS:
    --config <path>    experiment config file (gen, fit, sweep)
    --out <dir>        output directory (all commands)
    --data <dir>       dataset directory written by `gen` (fit, spectrum; sweep when sampling)
    --fit <dir>        completed fit directory (spectrum)
    --seed <int>       override generator and initialization seeds
    --budget-s <float> wall-clock budget per method, in seconds

Run `gen` first, then `fit` against the dataset; `sweep` repeats fits along a
configured axis; `spectrum` turns stored fit checkpoints into singular-value
tables.
";

struct Args {
    command: String,
    config: Option<PathBuf>,
    out: Option<PathBuf>,
    data: Option<PathBuf>,
    fit: Option<PathBuf>,
    overrides: RunOverrides,
}

fn parse_args(mut argv: std::env::Args) -> Result<Args, String> {
    let _bin = argv.next();
    let command = argv.next().ok_or_else(|| "missing subcommand".to_string())?;
    let mut args = Args {
        command,
        config: None,
        out: None,
        data: None,
        fit: None,
        overrides: RunOverrides::default(),
    };
    while let Some(flag) = argv.next() {
        let mut value = || argv.next().ok_or_else(|| format!("flag {flag} needs a value"));
        match flag.as_str() {
            "--config" => args.config = Some(PathBuf::from(value()?)),
            "--out" => args.out = Some(PathBuf::from(value()?)),
            "--data" => args.data = Some(PathBuf::from(value()?)),
            "--fit" => args.fit = Some(PathBuf::from(value()?)),
            "--seed" => {
                args.overrides.seed =
                    Some(value()?.parse().map_err(|_| "--seed expects an integer".to_string())?)
            }
            "--budget-s" => {
                args.overrides.budget_s =
                    Some(value()?.parse().map_err(|_| "--budget-s expects a number".to_string())?)
            }
            "--help" | "-h" => return Err(String::new()),
            other => return Err(format!("unknown flag `{other}`")),
        }
    }
    Ok(args)
}

fn out_dir(args: &Args, cfg: Option<&ExperimentConfig>) -> Result<PathBuf, String> {
    args.out
        .clone()
        .or_else(|| cfg.and_then(|c| c.output_dir.clone()))
        .ok_or_else(|| "--out (or output_dir in the config) is required".to_string())
}

fn run() -> Result<ExitCode, String> {
    let args = parse_args(std::env::args())?;
    let load_cfg = || -> Result<ExperimentConfig, String> {
        let path = args.config.as_ref().ok_or_else(|| "--config is required".to_string())?;
        ExperimentConfig::load(path).map_err(|e| e.to_string())
    };

    match args.command.as_str() {
        "gen" => {
            let cfg = load_cfg()?;
            let out = out_dir(&args, Some(&cfg))?;
            cmd_gen(&cfg, &out, &args.overrides).map_err(|e| e.to_string())?;
            println!("dataset written to {}", out.display());
            Ok(ExitCode::SUCCESS)
        }
        "fit" => {
            let cfg = load_cfg()?;
            let out = out_dir(&args, Some(&cfg))?;
            let data = args.data.as_ref().ok_or_else(|| "--data is required".to_string())?;
            let outcome = cmd_fit(&cfg, data, &out, &args.overrides).map_err(|e| e.to_string())?;
            for mo in &outcome.outcomes {
                match &mo.result {
                    Ok(report) => println!(
                        "{}: {} (rank {}, {} trace rows)",
                        mo.method,
                        report.certificate,
                        report.final_rank,
                        report.trace.len()
                    ),
                    Err(e) => eprintln!("{}: diverged: {e}", mo.method),
                }
            }
            if outcome.all_diverged() {
                eprintln!("every method diverged");
                return Ok(ExitCode::from(2));
            }
            println!("reports written to {}", out.display());
            Ok(ExitCode::SUCCESS)
        }
        "sweep" => {
            let cfg = load_cfg()?;
            let out = out_dir(&args, Some(&cfg))?;
            let table = cmd_sweep(&cfg, args.data.as_deref(), &out, &args.overrides)
                .map_err(|e| e.to_string())?;
            if table.points.is_empty() {
                eprintln!("every method diverged at every grid point");
                return Ok(ExitCode::from(2));
            }
            println!("sweep over {} written to {}", table.axis_name, out.display());
            Ok(ExitCode::SUCCESS)
        }
        "spectrum" => {
            let data = args.data.as_ref().ok_or_else(|| "--data is required".to_string())?;
            let fit = args.fit.as_ref().ok_or_else(|| "--fit is required".to_string())?;
            let out = out_dir(&args, None)?;
            cmd_spectrum(data, fit, &out).map_err(|e| e.to_string())?;
            println!("spectrum table written to {}", out.display());
            Ok(ExitCode::SUCCESS)
        }
        other => Err(format!("unknown subcommand `{other}`")),
    }
}

fn main() -> ExitCode {
    match run() {
        Ok(code) => code,
        Err(msg) => {
            if msg.is_empty() {
                println!("{USAGE}");
                ExitCode::SUCCESS
            } else {
                eprintln!("error: {msg}\n\n{USAGE}");
                ExitCode::from(1)
            }
        }
    }
}
