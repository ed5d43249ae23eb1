use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context;
use clap::{Parser, Subcommand};

use mabt_cli::bound::{cmd_bound, BoundRequest};
use mabt_cli::report::cmd_report;
use mabt_cli::simulate::{cmd_simulate, resolved_path};
use mabt_cli::{with_threads, CmdResult, Failure};
use mabt_core::methods::parse_methods;
use mabt_core::{MeasureKind, Rule};

/// Lower confidence bounds for the performance of a selected classifier.
#[derive(Parser)]
#[command(name = "mabt", version)]
struct Cli {
    /// Worker threads (default: all cores). Results do not depend on it.
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Bound the performance of the best model in a prediction CSV (`y,<model ids…>`).
    Bound {
        input: PathBuf,
        #[arg(long, default_value = "accuracy")]
        measure: MeasureKind,
        #[arg(long, default_value_t = 0.05)]
        alpha: f64,
        /// Bootstrap resamples (default 10000 for accuracy, 2000 for AUC).
        #[arg(long = "B")]
        resamples: Option<usize>,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        /// Comma-separated list from mabt, bt, wald, wilson, cp, delong, hm; append `+sidak` for a Šidák-adjusted level.
        #[arg(long, default_value = "mabt")]
        methods: String,
        /// Preselection rule that produced the columns; recorded in the report.
        #[arg(long, default_value = "single-best")]
        rule: Rule,
        /// JSON report path (default: stdout).
        #[arg(long)]
        out: Option<PathBuf>,
        /// Also write one CSV row per method here.
        #[arg(long)]
        csv: Option<PathBuf>,
    },
    /// Run the `[[experiment]]` tables of a TOML config and write per-run results as CSV.
    Simulate {
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Summarize a results CSV: coverage, MC error, liberal flag, mean bound, truth and tightness.
    Report {
        results: PathBuf,
        /// `.json` writes the structured summary, anything else CSV; default prints a table.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn write_output(path: Option<&Path>, text: &str) -> CmdResult<()> {
    let res = match path {
        Some(p) => std::fs::write(p, text).with_context(|| format!("cannot write {}", p.display())),
        None => std::io::stdout()
            .write_all(text.as_bytes())
            .context("stdout"),
    };
    res.map_err(Failure::input)
}

fn write_csv<T: serde::Serialize>(path: &Path, rows: &[T]) -> CmdResult<()> {
    let run = || -> anyhow::Result<()> {
        let mut w = csv::Writer::from_path(path)
            .with_context(|| format!("cannot write {}", path.display()))?;
        for r in rows {
            w.serialize(r)?;
        }
        w.flush()?;
        Ok(())
    };
    run().map_err(Failure::input)
}

fn run(cli: Cli) -> CmdResult<()> {
    match cli.command {
        Command::Bound {
            input,
            measure,
            alpha,
            resamples,
            seed,
            methods,
            rule,
            out,
            csv,
        } => {
            let req = BoundRequest {
                input,
                measure,
                methods: parse_methods(&methods)?,
                rule,
                alpha,
                resamples,
                seed,
            };
            let report = with_threads(cli.threads, || cmd_bound(&req))??;
            let json = serde_json::to_string_pretty(&report).map_err(Failure::input)?;
            write_output(out.as_deref(), &(json + "\n"))?;
            if let Some(path) = csv {
                write_csv(&path, &report.rows())?;
            }
        }
        Command::Simulate { config, out } => {
            let n = with_threads(cli.threads, || cmd_simulate(&config, &out))??;
            eprintln!(
                "wrote {n} rows to {} (config echoed to {})",
                out.display(),
                resolved_path(&out).display()
            );
        }
        Command::Report { results, out } => {
            let report = cmd_report(&results)?;
            match out {
                Some(p) if p.extension().is_some_and(|e| e == "json") => {
                    let json = serde_json::to_string_pretty(&report).map_err(Failure::input)?;
                    write_output(Some(&p), &(json + "\n"))?;
                }
                Some(p) => write_csv(&p, &report.rows())?,
                None => write_output(None, &report.to_table())?,
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {f}");
            ExitCode::from(f.code as u8)
        }
    }
}
