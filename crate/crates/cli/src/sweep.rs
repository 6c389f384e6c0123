//! Batch execution of a scenario template over a grid and a seed range.
//!
//! Every (point, seed) pair runs in its own simulator. Rows come back in
//! grid order whatever the parallelism, and a failing row records its error
//! without stopping the sweep.

use std::io::Write;
use std::panic::{catch_unwind, AssertUnwindSafe};

use rayon::prelude::*;
use solida_simnet::cost::reconfig_latency;
use solida_simnet::mining::Population;
use solida_simnet::race::{race, RaceParams};
use solida_simnet::rng::stream;
use solida_simnet::{run_scenario, Scenario};

use crate::grid::{apply, describe, render, Experiment, Grid, Point};

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Row {
    pub point: usize,
    pub seed: u64,
    pub safety_ok: Option<bool>,
    pub checks_ok: Option<bool>,
    pub slots: Option<u64>,
    pub reconfigs: Option<u64>,
    pub adversary_seat_fraction: Option<f64>,
    /// Mean PoW-to-commit latency of this run's reconfigurations.
    pub reconfig_latency: Option<f64>,
    pub adversary_wins: Option<u64>,
    pub races: Option<u64>,
    pub hops: Option<u32>,
    pub error: Option<String>,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct PointSummary {
    pub point: usize,
    pub runs: usize,
    pub errors: usize,
    pub safety_violations: usize,
    pub adversary_seat_fraction: Option<f64>,
    pub mean_reconfig_latency: Option<f64>,
    pub adversary_win_fraction: Option<f64>,
}

pub struct SweepOutput {
    pub axes: Vec<String>,
    pub points: Vec<Point>,
    pub rows: Vec<Row>,
    pub summaries: Vec<PointSummary>,
}

fn mean(xs: impl Iterator<Item = f64>) -> Option<f64> {
    let (s, n) = xs.fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    (n > 0).then(|| s / n as f64)
}

fn run_one(exp: Experiment, sc: Scenario) -> Row {
    let mut row = Row { seed: sc.seed, ..Row::default() };
    match exp {
        Experiment::Run => match run_scenario(sc) {
            Ok(out) => {
                let r = out.report;
                let seats = r.adversary_seats + r.honest_seats;
                row.safety_ok = Some(r.safety_ok);
                row.checks_ok = Some(r.all_checks_passed());
                row.slots = Some(r.slots_committed);
                row.reconfigs = Some(r.reconfig_count);
                row.adversary_seat_fraction = (seats > 0).then(|| r.adversary_seats as f64 / seats as f64);
                row.reconfig_latency = mean(r.races.iter().map(|x| x.latency));
                row.adversary_wins = Some(r.adversary_wins() as u64);
                row.races = Some(r.races.len() as u64);
            }
            Err(e) => row.error = Some(e.to_string()),
        },
        Experiment::Cost => match reconfig_latency(sc.f, sc.network.bandwidth_bps, sc.network.size_model) {
            Ok(p) => {
                row.reconfig_latency = Some(p.latency);
                row.hops = Some(p.hops);
                row.reconfigs = Some(1);
            }
            Err(e) => row.error = Some(e.to_string()),
        },
        Experiment::Race => {
            let Some(d) = sc.d else {
                row.error = Some("race experiments need `d`".into());
                return row;
            };
            let mut rng = stream(sc.seed, "sweep-race");
            let o = race(&mut rng, &RaceParams { rho: sc.rho, delta: sc.delta, d });
            row.adversary_wins = Some(u64::from(o.winner == Population::Adversary));
            row.races = Some(1);
        }
    }
    row
}

fn guarded(exp: Experiment, sc: Scenario) -> Row {
    let seed = sc.seed;
    catch_unwind(AssertUnwindSafe(|| run_one(exp, sc))).unwrap_or_else(|p| {
        let msg = p
            .downcast_ref::<String>()
            .cloned()
            .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
            .unwrap_or_else(|| "panic".into());
        Row { seed, error: Some(format!("panicked: {msg}")), ..Row::default() }
    })
}

fn summarize(point: usize, rows: &[Row]) -> PointSummary {
    let ok = || rows.iter().filter(|r| r.error.is_none());
    let wins: u64 = ok().filter_map(|r| r.adversary_wins).sum();
    let races: u64 = ok().filter_map(|r| r.races).sum();
    PointSummary {
        point,
        runs: rows.len(),
        errors: rows.iter().filter(|r| r.error.is_some()).count(),
        safety_violations: rows.iter().filter(|r| r.safety_ok == Some(false)).count(),
        adversary_seat_fraction: mean(ok().filter_map(|r| r.adversary_seat_fraction)),
        mean_reconfig_latency: mean(ok().filter_map(|r| r.reconfig_latency)),
        adversary_win_fraction: (races > 0).then(|| wins as f64 / races as f64),
    }
}

/// Run `seeds` seeds (template seed onwards) at every grid point on `jobs`
/// worker threads.
pub fn sweep(template: &Scenario, grid: &Grid, seeds: u64, jobs: usize) -> SweepOutput {
    let points = grid.points();
    let tasks: Vec<(usize, u64)> = (0..points.len())
        .flat_map(|p| (0..seeds).map(move |s| (p, s)))
        .collect();
    let exec = |&(p, s): &(usize, u64)| -> Row {
        let seed = template.seed.wrapping_add(s);
        let mut row = match apply(template, &points[p]) {
            Ok(mut sc) => {
                sc.seed = seed;
                guarded(grid.experiment, sc)
            }
            Err(e) => Row { seed, error: Some(e.to_string()), ..Row::default() },
        };
        row.point = p;
        row
    };
    let rows: Vec<Row> = match rayon::ThreadPoolBuilder::new().num_threads(jobs.max(1)).build() {
        Ok(pool) => pool.install(|| tasks.par_iter().map(exec).collect()),
        Err(_) => tasks.iter().map(exec).collect(),
    };
    let summaries = (0..points.len())
        .map(|p| summarize(p, &rows[p * seeds as usize..(p + 1) * seeds as usize]))
        .collect();
    SweepOutput {
        axes: grid.axis_names().into_iter().map(String::from).collect(),
        points,
        rows,
        summaries,
    }
}

fn opt<T: ToString>(v: &Option<T>) -> String {
    v.as_ref().map_or_else(String::new, T::to_string)
}

impl SweepOutput {
    pub fn write_rows<W: Write>(&self, w: W) -> csv::Result<()> {
        let mut out = csv::Writer::from_writer(w);
        let mut header: Vec<String> = vec!["point".into()];
        header.extend(self.axes.iter().cloned());
        header.extend(
            [
                "seed",
                "safety_ok",
                "checks_ok",
                "slots",
                "reconfigs",
                "adversary_seat_fraction",
                "reconfig_latency",
                "adversary_wins",
                "races",
                "hops",
                "error",
            ]
            .map(String::from),
        );
        out.write_record(&header)?;
        for r in &self.rows {
            let mut rec = vec![r.point.to_string()];
            rec.extend(self.points[r.point].iter().map(|(_, v)| render(v)));
            rec.extend([
                r.seed.to_string(),
                opt(&r.safety_ok),
                opt(&r.checks_ok),
                opt(&r.slots),
                opt(&r.reconfigs),
                opt(&r.adversary_seat_fraction),
                opt(&r.reconfig_latency),
                opt(&r.adversary_wins),
                opt(&r.races),
                opt(&r.hops),
                r.error.clone().unwrap_or_default(),
            ]);
            out.write_record(&rec)?;
        }
        out.flush()?;
        Ok(())
    }

    pub fn write_summaries<W: Write>(&self, w: W) -> csv::Result<()> {
        let mut out = csv::Writer::from_writer(w);
        let mut header: Vec<String> = vec!["point".into()];
        header.extend(self.axes.iter().cloned());
        header.extend(
            [
                "runs",
                "errors",
                "safety_violations",
                "adversary_seat_fraction",
                "mean_reconfig_latency",
                "adversary_win_fraction",
            ]
            .map(String::from),
        );
        out.write_record(&header)?;
        for s in &self.summaries {
            let mut rec = vec![s.point.to_string()];
            rec.extend(self.points[s.point].iter().map(|(_, v)| render(v)));
            rec.extend([
                s.runs.to_string(),
                s.errors.to_string(),
                s.safety_violations.to_string(),
                opt(&s.adversary_seat_fraction),
                opt(&s.mean_reconfig_latency),
                opt(&s.adversary_win_fraction),
            ]);
            out.write_record(&rec)?;
        }
        out.flush()?;
        Ok(())
    }

    /// One line per point for the terminal.
    pub fn report_lines(&self) -> Vec<String> {
        self.summaries
            .iter()
            .map(|s| {
                format!(
                    "{}: {} runs, {} errors, {} safety violations, latency {}, adversary wins {}",
                    describe(&self.points[s.point]),
                    s.runs,
                    s.errors,
                    s.safety_violations,
                    s.mean_reconfig_latency.map_or("-".into(), |x| format!("{x:.4}s")),
                    s.adversary_win_fraction.map_or("-".into(), |x| format!("{x:.4}")),
                )
            })
            .collect()
    }
}
