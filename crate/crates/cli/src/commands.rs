//! Subcommand bodies. Each returns the process exit status.
//!
//! 0 means every requested check passed, 1 a failed check (safety
//! violation, audit failure), 2 unusable input.

use std::fs::File;
use std::io::{self, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use solida_core::audit::audit;
use solida_core::ledger::LedgerExport;
use solida_core::CryptoKind;
use solida_simnet::scenario::{MiningMode, TraceLevel};
use solida_simnet::{run_scenario, RunReport, Scenario};

use crate::grid::Grid;
use crate::sweep::sweep;
use crate::table;
use crate::trace_audit::audit_trace;

pub const OK: u8 = 0;
pub const FAILED: u8 = 1;
pub const BAD_INPUT: u8 = 2;

#[derive(Clone, Copy, Debug, Default)]
pub struct Overrides {
    pub crypto: Option<CryptoKind>,
    pub mining: Option<MiningMode>,
}

impl Overrides {
    fn apply(&self, sc: &mut Scenario) {
        if let Some(c) = self.crypto {
            sc.crypto = c;
        }
        if let Some(m) = self.mining {
            sc.mining = m;
        }
    }
}

fn create(path: &Path) -> io::Result<BufWriter<File>> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)?;
    }
    Ok(BufWriter::new(File::create(path)?))
}

/// `trace.jsonl` -> `trace.ledger.json`.
pub fn ledger_path_for(trace: &Path) -> PathBuf {
    trace.with_extension("ledger.json")
}

fn load_scenario(path: &Path, ov: Overrides) -> Result<Scenario, u8> {
    let mut sc = Scenario::load(path).map_err(|e| {
        eprintln!("error: {}: {e}", path.display());
        BAD_INPUT
    })?;
    ov.apply(&mut sc);
    sc.validate().map_err(|e| {
        eprintln!("error: {}: {e}", path.display());
        BAD_INPUT
    })?;
    Ok(sc)
}

pub fn print_report(r: &RunReport, out: &mut dyn Write) -> io::Result<()> {
    writeln!(out, "scenario   {} ({})", r.scenario, &r.scenario_digest[..16])?;
    writeln!(out, "seed       {}", r.seed)?;
    writeln!(out, "safety     {}", if r.safety_ok { "ok" } else { "VIOLATED" })?;
    writeln!(out, "slots      {}", r.slots_committed)?;
    writeln!(
        out,
        "reconfigs  {} (adversary won {}, seats {} adversarial / {} honest)",
        r.reconfig_count,
        r.adversary_wins(),
        r.adversary_seats,
        r.honest_seats
    )?;
    writeln!(out, "stopped    {} at {:.3}s", r.stop_reason, r.end_time)?;
    for c in &r.checks {
        let state = match (c.applicable, c.passed) {
            (false, _) => "skip",
            (true, true) => "pass",
            (true, false) => "FAIL",
        };
        writeln!(out, "  {state:4} {:16} {}", c.name, c.detail)?;
    }
    for v in &r.violations {
        writeln!(out, "  violation {}", serde_json::to_string(v).unwrap_or_default())?;
    }
    Ok(())
}

pub struct RunArgs<'a> {
    pub scenario: &'a Path,
    pub seed: Option<u64>,
    pub trace: Option<&'a Path>,
    pub export: Option<&'a Path>,
    pub report: Option<&'a Path>,
}

pub fn run(args: RunArgs<'_>, ov: Overrides) -> u8 {
    let mut sc = match load_scenario(args.scenario, ov) {
        Ok(sc) => sc,
        Err(code) => return code,
    };
    if let Some(s) = args.seed {
        sc.seed = s;
    }
    if args.trace.is_some() && sc.trace == TraceLevel::Off {
        sc.trace = TraceLevel::Events;
    }
    let out = match run_scenario(sc) {
        Ok(o) => o,
        Err(e) => {
            eprintln!("error: {e}");
            return BAD_INPUT;
        }
    };
    let summary = out.report.summary();
    let export = args.export.map(Path::to_path_buf).or_else(|| args.trace.map(ledger_path_for));
    let written = (|| -> io::Result<()> {
        if let Some(p) = args.trace {
            let mut w = create(p)?;
            out.trace.write_jsonl(&mut w, &summary)?;
            w.flush()?;
        }
        if let Some(p) = &export {
            let mut w = create(p)?;
            serde_json::to_writer(&mut w, &out.export)?;
            w.flush()?;
        }
        if let Some(p) = args.report {
            let mut w = create(p)?;
            serde_json::to_writer_pretty(&mut w, &out.report)?;
            w.flush()?;
        }
        Ok(())
    })();
    if let Err(e) = written {
        eprintln!("error: writing output: {e}");
        return BAD_INPUT;
    }
    let _ = print_report(&out.report, &mut io::stdout().lock());
    if out.report.safety_ok {
        OK
    } else {
        FAILED
    }
}

pub struct SweepArgs<'a> {
    pub template: &'a Path,
    pub grid: &'a Path,
    pub seeds: u64,
    pub jobs: usize,
    pub out: &'a Path,
    pub points_out: Option<&'a Path>,
}

pub fn points_path_for(out: &Path) -> PathBuf {
    out.with_extension("points.csv")
}

pub fn run_sweep(args: SweepArgs<'_>, ov: Overrides) -> u8 {
    let template = match load_scenario(args.template, ov) {
        Ok(sc) => sc,
        Err(code) => return code,
    };
    let grid = match std::fs::read_to_string(args.grid)
        .map_err(|e| e.to_string())
        .and_then(|s| Grid::from_toml_str(&s))
    {
        Ok(g) => g,
        Err(e) => {
            eprintln!("error: {}: {e}", args.grid.display());
            return BAD_INPUT;
        }
    };
    let res = sweep(&template, &grid, args.seeds, args.jobs);
    let points = args.points_out.map(Path::to_path_buf).unwrap_or_else(|| points_path_for(args.out));
    let written = create(args.out)
        .map_err(csv::Error::from)
        .and_then(|w| res.write_rows(w))
        .and_then(|_| create(&points).map_err(csv::Error::from))
        .and_then(|w| res.write_summaries(w));
    if let Err(e) = written {
        eprintln!("error: writing sweep output: {e}");
        return BAD_INPUT;
    }
    for line in res.report_lines() {
        println!("{line}");
    }
    let errors = res.rows.iter().filter(|r| r.error.is_some()).count();
    let unsafe_rows = res.rows.iter().filter(|r| r.safety_ok == Some(false)).count();
    println!("{} rows, {errors} errors, {unsafe_rows} safety violations", res.rows.len());
    if errors == 0 && unsafe_rows == 0 {
        OK
    } else {
        FAILED
    }
}

pub fn run_audit(ledger: &Path, trace: Option<&Path>, crypto: CryptoKind) -> u8 {
    let export: LedgerExport = match File::open(ledger)
        .map_err(|e| e.to_string())
        .and_then(|f| serde_json::from_reader(BufReader::new(f)).map_err(|e| e.to_string()))
    {
        Ok(e) => e,
        Err(e) => {
            eprintln!("integrity error: {}: {e}", ledger.display());
            return BAD_INPUT;
        }
    };
    let provider = crypto.provider();
    let mut code = OK;
    match audit(&export, provider.as_ref()) {
        Ok(r) => println!(
            "ledger ok: {} slots, {} transactions, {} reconfigurations, final configuration {}",
            r.slots, r.transactions, r.reconfigurations, r.final_config
        ),
        Err(e) => {
            println!("ledger FAILED at slot {}: {}", e.slot, e.reason);
            code = FAILED;
        }
    }
    if let Some(t) = trace {
        match File::open(t).map_err(|e| e.to_string()).and_then(|f| audit_trace(BufReader::new(f))) {
            Ok(v) => println!("trace ok: {} records, {} commits over {} slots", v.records, v.commits, v.slots),
            Err(e) => {
                println!("trace FAILED: {e}");
                code = FAILED;
            }
        }
    }
    code
}

pub fn run_table2(out: Option<&Path>, rho_primes: &[f64], ks: &[u32]) -> u8 {
    let rows = match table::rows(rho_primes, ks) {
        Ok(r) => r,
        Err(e) => {
            eprintln!("error: {e}");
            return BAD_INPUT;
        }
    };
    let res = match out {
        Some(p) => create(p).map_err(csv::Error::from).and_then(|w| table::write_csv(&rows, w)),
        None => table::write_csv(&rows, io::stdout().lock()),
    };
    if let Err(e) = res {
        eprintln!("error: writing table: {e}");
        return BAD_INPUT;
    }
    let compared: Vec<i64> = rows.iter().filter_map(table::Row::delta).collect();
    if !compared.is_empty() {
        let within = compared.iter().filter(|d| d.abs() <= 3).count();
        eprintln!("{within}/{} cells within ±3 of the printed table", compared.len());
    }
    OK
}
