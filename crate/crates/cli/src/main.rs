use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use solida_cli::commands::{self, Overrides, RunArgs, SweepArgs};
use solida_core::CryptoKind;
use solida_simnet::scenario::MiningMode;

#[derive(Parser)]
#[command(name = "solida", version, about = "Simulate, sweep and audit a PoW-elected BFT committee")]
struct Cli {
    /// Signature provider; overrides the scenario file.
    #[arg(long, global = true, value_enum)]
    crypto: Option<Crypto>,
    /// Mining model; overrides the scenario file.
    #[arg(long, global = true, value_enum)]
    mining: Option<Mining>,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Clone, Copy, ValueEnum)]
enum Crypto {
    Sim,
    Real,
}

#[derive(Clone, Copy, ValueEnum)]
enum Mining {
    Rate,
    Pow,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run one scenario and check its invariants.
    Run {
        #[arg(long)]
        scenario: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        /// JSONL trace; the ledger export goes next to it unless --export is given.
        #[arg(long)]
        trace: Option<PathBuf>,
        #[arg(long)]
        export: Option<PathBuf>,
        /// Full JSON run report.
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Run a scenario template over a parameter grid and many seeds.
    Sweep {
        #[arg(long)]
        template: PathBuf,
        #[arg(long)]
        grid: PathBuf,
        #[arg(long, default_value_t = 1)]
        seeds: u64,
        #[arg(long, default_value_t = 1)]
        jobs: usize,
        /// Per-run CSV.
        #[arg(long)]
        out: PathBuf,
        /// Per-point CSV; defaults to the --out path with a .points.csv extension.
        #[arg(long)]
        points: Option<PathBuf>,
    },
    /// Re-verify an exported ledger, and optionally a trace.
    Audit {
        #[arg(long)]
        ledger: PathBuf,
        #[arg(long)]
        trace: Option<PathBuf>,
    },
    /// Required committee sizes as CSV, next to the published values.
    Table2 {
        #[arg(long)]
        out: Option<PathBuf>,
        /// Custom ρ′ rows (repeatable); defaults to the published rows.
        #[arg(long = "rho-prime")]
        rho_prime: Vec<f64>,
        /// Custom security parameters k (repeatable).
        #[arg(long)]
        k: Vec<u32>,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let ov = Overrides {
        crypto: cli.crypto.map(|c| match c {
            Crypto::Sim => CryptoKind::Sim,
            Crypto::Real => CryptoKind::Real,
        }),
        mining: cli.mining.map(|m| match m {
            Mining::Rate => MiningMode::Rate,
            Mining::Pow => MiningMode::Pow,
        }),
    };
    let code = match &cli.cmd {
        Cmd::Run { scenario, seed, trace, export, report } => commands::run(
            RunArgs {
                scenario,
                seed: *seed,
                trace: trace.as_deref(),
                export: export.as_deref(),
                report: report.as_deref(),
            },
            ov,
        ),
        Cmd::Sweep { template, grid, seeds, jobs, out, points } => commands::run_sweep(
            SweepArgs {
                template,
                grid,
                seeds: *seeds,
                jobs: *jobs,
                out,
                points_out: points.as_deref(),
            },
            ov,
        ),
        Cmd::Audit { ledger, trace } => {
            commands::run_audit(ledger, trace.as_deref(), ov.crypto.unwrap_or(CryptoKind::Sim))
        }
        Cmd::Table2 { out, rho_prime, k } => commands::run_table2(out.as_deref(), rho_prime, k),
    };
    ExitCode::from(code)
}
