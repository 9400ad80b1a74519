//! Scenario runner: load a scenario file, execute verification checks,
//! emit a JSON report and CSV sweeps.
//!
//! Exit codes: 0 all requested checks passed, 1 a verification failed
//! (report still written), 2 configuration or parse error.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use fbmp::scenario::{run_to_dir, sweep, Scenario, SweepParam};

#[derive(Parser)]
#[command(
    name = "fbmp",
    version,
    about = "Verification runner for free-boundary maximum-principle geometry"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Override the scenario seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads (results are identical for any thread count).
    #[arg(long, global = true)]
    threads: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Run verification checks and write report.json.
    Run {
        /// Scenario file (JSON).
        file: PathBuf,
        /// Comma-separated subset of checks (default: all).
        #[arg(long, value_delimiter = ',')]
        checks: Option<Vec<String>>,
        /// Output directory for report.json.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Sweep one parameter and write a CSV with one row per value.
    Sweep {
        /// Scenario file (JSON).
        file: PathBuf,
        /// Parameter to vary: epsilon, fd_step or refine.
        #[arg(long)]
        param: String,
        /// Comma-separated values.
        #[arg(long, value_delimiter = ',', required = true)]
        values: Vec<f64>,
        /// Output CSV path (stdout when omitted).
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();

    if let Some(threads) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global()
        {
            eprintln!("fbmp: could not configure {threads} threads: {e}");
            return ExitCode::from(2);
        }
    }

    match run(cli) {
        Ok(all_passed) => {
            if all_passed {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(1)
            }
        }
        Err(e) => {
            eprintln!("fbmp: {e}");
            ExitCode::from(2)
        }
    }
}

fn run(cli: Cli) -> Result<bool, Box<dyn std::error::Error>> {
    match cli.command {
        Command::Run { file, checks, out } => {
            let mut scenario = Scenario::load(&file)?;
            if let Some(seed) = cli.seed {
                let mut f = scenario.file.clone();
                f.seed = seed;
                scenario = Scenario::build(f)?;
            }
            let report = run_to_dir(&scenario, checks.as_deref(), out.as_deref())?;
            for c in &report.checks {
                println!("{:24} {:?}  {}", c.name, c.verdict, c.detail);
            }
            if let Some(dir) = &out {
                println!("report written to {}", dir.join("report.json").display());
            }
            Ok(report.all_passed())
        }
        Command::Sweep {
            file,
            param,
            values,
            out,
        } => {
            let mut scenario = Scenario::load(&file)?;
            if let Some(seed) = cli.seed {
                let mut f = scenario.file.clone();
                f.seed = seed;
                scenario = Scenario::build(f)?;
            }
            let param: SweepParam = param.parse()?;
            let csv = sweep(&scenario, param, &values, out.as_deref())?;
            match &out {
                Some(path) => println!("sweep written to {}", path.display()),
                None => print!("{csv}"),
            }
            Ok(true)
        }
    }
}
