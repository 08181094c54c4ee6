use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use rkopt::harness::config::DatasetKind;
use rkopt::harness::fetch::fetch_data;
use rkopt::harness::verify::DEFAULT_H_LIST;
use rkopt::harness::{run, sweep, verify_orders, Grid, RunConfig};
use rkopt::Error;

const EXIT_CONFIG: u8 = 2;
const EXIT_DIVERGED: u8 = 3;
const EXIT_VERIFY: u8 = 4;

#[derive(Parser)]
#[command(name = "rkopt", version, about = "Runge-Kutta gradient updates: training runs, sweeps and order checks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train once from a config file.
    Run {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run the Cartesian product of a grid over a base config.
    Sweep {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        grid: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Check empirical convergence slopes of the built-in tableaux.
    VerifyOrders {
        /// Strictly decreasing step sizes, comma separated.
        #[arg(long, value_delimiter = ',')]
        h: Option<Vec<f64>>,
    },
    /// Download IDX archives and verify their checksums.
    FetchData {
        #[arg(long)]
        dataset: String,
        #[arg(long)]
        dir: PathBuf,
    },
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Config(_) | Error::InvalidInput(_) => EXIT_CONFIG,
        Error::Divergence { .. } => EXIT_DIVERGED,
        Error::Checksum { .. } => EXIT_VERIFY,
        _ => 1,
    }
}

fn fail(e: Error) -> ExitCode {
    eprintln!("error: {e}");
    ExitCode::from(exit_code(&e))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match cli.command {
        Command::Run { config, seed, out } => {
            let mut cfg = match RunConfig::from_path(&config) {
                Ok(c) => c,
                Err(e) => return fail(e),
            };
            if let Some(s) = seed {
                cfg.seed = s;
            }
            if let Some(o) = out {
                cfg.out_dir = o;
            }
            match run(&cfg) {
                Ok(s) => {
                    println!("metrics: {}", s.csv_path.display());
                    println!("steps: {}  grad evals: {}", s.steps_completed, s.grad_evals);
                    println!("final train loss: {}", s.final_train_loss);
                    if let Some(acc) = s.best_test_acc {
                        println!("best test acc: {acc} (step {})", s.best_step.unwrap_or(0));
                    }
                    if s.diverged {
                        eprintln!("diverged: {}", s.divergence.unwrap_or_default());
                        return ExitCode::from(EXIT_DIVERGED);
                    }
                    ExitCode::SUCCESS
                }
                Err(e) => fail(e),
            }
        }
        Command::Sweep { config, grid, out } => {
            let mut cfg = match RunConfig::from_path(&config) {
                Ok(c) => c,
                Err(e) => return fail(e),
            };
            if let Some(o) = out {
                cfg.out_dir = o;
            }
            let grid = match Grid::from_path(&grid) {
                Ok(g) => g,
                Err(e) => return fail(e),
            };
            match sweep(&cfg, &grid) {
                Ok(r) => {
                    for row in &r.rows {
                        let params: Vec<String> = row.params.iter().map(|(k, v)| format!("{k}={v}")).collect();
                        match &row.result {
                            Ok(s) => println!(
                                "run {:03} [{}] seed={} best_test_acc={} final_train_loss={}{}",
                                row.index,
                                params.join(" "),
                                row.seed,
                                s.best_test_acc.map_or("-".into(), |a| a.to_string()),
                                s.final_train_loss,
                                if s.diverged { " DIVERGED" } else { "" }
                            ),
                            Err(e) => println!("run {:03} [{}] FAILED: {e}", row.index, params.join(" ")),
                        }
                    }
                    println!("summary: {}", cfg.out_dir.join(rkopt::harness::sweep::SWEEP_FILE).display());
                    ExitCode::SUCCESS
                }
                Err(e) => fail(e),
            }
        }
        Command::VerifyOrders { h } => {
            let h = h.unwrap_or_else(|| DEFAULT_H_LIST.to_vec());
            match verify_orders(&h) {
                Ok(checks) => {
                    for c in &checks {
                        println!("{c}");
                    }
                    if checks.iter().all(|c| c.pass) {
                        ExitCode::SUCCESS
                    } else {
                        ExitCode::from(EXIT_VERIFY)
                    }
                }
                Err(e) => fail(e),
            }
        }
        Command::FetchData { dataset, dir } => {
            let kind: DatasetKind = match dataset.parse() {
                Ok(k) => k,
                Err(e) => return fail(e),
            };
            match fetch_data(kind, &dir) {
                Ok(files) => {
                    for f in files {
                        println!("ok {}", f.display());
                    }
                    ExitCode::SUCCESS
                }
                Err(e) => fail(e),
            }
        }
    }
}
