use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use cmra::audit::{audit_linear_prices, AuditRecord};
use cmra::par::Exec;
use cmra::scenario::{default_out_dir, export_figure_data, run_scenario, write_figure_csv, Scenario, OUT_DIR_VAR};
use cmra::verify::{run_check, VerifyOptions, CHECKS};

#[derive(Parser)]
#[command(name = "cmra", version, about = "CMRA simulation and verification engine")]
struct Cli {
    /// Seed for Monte Carlo checks.
    #[arg(long, global = true, default_value_t = 7)]
    seed: u64,
    /// Run every sweep and search on one thread.
    #[arg(long, global = true)]
    sequential: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a scenario file or a bundled scenario (lots-example, fig1-matrix).
    Run {
        scenario: String,
        /// Output directory; defaults to $CMRA_OUT_DIR or ./cmra-out.
        #[arg(long, env = OUT_DIR_VAR)]
        out: Option<PathBuf>,
    },
    /// Run a named verification check, or `all`.
    Verify {
        id: String,
        /// Type points per bidder in the deviation searches.
        #[arg(long)]
        grid: Option<usize>,
        /// Clock increment.
        #[arg(long)]
        eps: Option<f64>,
        /// Largest deviation gain accepted as no gain.
        #[arg(long)]
        tol: Option<f64>,
        /// Monte Carlo samples.
        #[arg(long, default_value_t = 100_000)]
        samples: usize,
        /// Also print the JSON report.
        #[arg(long)]
        json: bool,
    },
    /// Audit a bundled record (denmark-2016, denmark-2019, denmark-2021) or a
    /// record file for linear prices.
    Audit {
        record: String,
        #[arg(long)]
        json: bool,
    },
    /// Print bid functions and revenue curves at the given clock prices as CSV.
    ExportFig {
        scenario: String,
        #[arg(long, value_delimiter = ',', num_args = 1.., required = true)]
        prices: Vec<f64>,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}

fn run(cli: Cli) -> Result<bool, Box<dyn std::error::Error>> {
    let exec = if cli.sequential { Exec::Sequential } else { Exec::Parallel };
    let base = VerifyOptions { seed: cli.seed, exec, ..VerifyOptions::default() };
    match cli.command {
        Command::Run { scenario, out } => {
            let s = Scenario::load(&scenario)?;
            let out = out.unwrap_or_else(default_out_dir);
            let report = run_scenario(&s, &out, &base)?;
            for line in &report.lines {
                println!("{line}");
            }
            for f in &report.files {
                println!("wrote {}", f.display());
            }
            Ok(report.ok)
        }
        Command::Verify { id, grid, eps, tol, samples, json } => {
            let opts = VerifyOptions { grid, eps, tol, samples, ..base };
            let ids: Vec<&str> = if id == "all" { CHECKS.to_vec() } else { vec![id.as_str()] };
            let mut ok = true;
            for id in ids {
                let r = run_check(id, &opts)?;
                print!("{}", r.render());
                if let Some(t) = r.data.get("table").and_then(|t| t.as_str()) {
                    print!("{t}");
                }
                if json {
                    println!("{}", serde_json::to_string_pretty(&r)?);
                }
                ok &= r.passed();
            }
            Ok(ok)
        }
        Command::Audit { record, json } => {
            let rec = if AuditRecord::bundled_ids().any(|b| b == record) {
                AuditRecord::bundled(&record)?
            } else {
                AuditRecord::from_json(&std::fs::read_to_string(&record)?)?
            };
            let r = audit_linear_prices(&rec)?;
            print!("{}", r.render());
            if json {
                println!("{}", serde_json::to_string_pretty(&r)?);
            }
            Ok(true)
        }
        Command::ExportFig { scenario, prices } => {
            let s = Scenario::load(&scenario)?;
            let rows = export_figure_data(&s, &prices)?;
            write_figure_csv(&rows, std::io::stdout().lock())?;
            Ok(true)
        }
    }
}
