//! The three subcommands. Each returns the text destined for stdout; files
//! are written only once everything has been computed.

use std::path::PathBuf;

use aks_core::aks_flow::{self, AksSystem, PhasePoint};
use aks_core::reduced_dynamics::{self, ComparisonReport};
use log::info;
use serde::Serialize;

use crate::battery::{self, BatteryReport, CheckEnv};
use crate::config::{build_system, RunConfig};
use crate::output::{self, DriftSummary, PointInfo, Row, SystemInfo};
use crate::Failure;

pub const TRAJECTORY_FILE: &str = "trajectory.csv";
pub const METADATA_FILE: &str = "run.json";
pub const DEFAULT_SIMULATE_DIR: &str = "aks-flow-out";

fn solver(e: aks_core::AksError) -> Failure {
    Failure::Solver(e.to_string())
}

/// Evenly spaced sample times on `[0, t_end]`; a single time when
/// `t_end = 0`.
pub fn sample_times(t_end: f64, samples: usize) -> Vec<f64> {
    if t_end == 0.0 {
        return vec![0.0];
    }
    let last = (samples - 1) as f64;
    (0..samples).map(|k| t_end * k as f64 / last).collect()
}

pub fn trajectory_rows(sys: &AksSystem, p0: &PhasePoint, times: &[f64]) -> Result<Vec<Row>, Failure> {
    let ctx = sys.ctx();
    let orbits = sys.reduced_flow_by_factorization(p0, times).map_err(solver)?;
    Ok(times
        .iter()
        .zip(orbits)
        .map(|(&t, orbit)| Row {
            t,
            hamiltonian: sys.reduced_hamiltonian(&orbit),
            constraint_residual: sys.constraint_residual(&sys.unreduced_flow(p0, t)),
            invariants: aks_flow::spectral_invariants(ctx, &orbit),
            orbit,
        })
        .collect())
}

#[derive(Serialize)]
struct RunMetadata<'a> {
    format: &'static str,
    command: &'static str,
    rng_seed: u64,
    system: SystemInfo,
    seed_point: PointInfo,
    t_end: f64,
    samples: usize,
    trajectory: &'static str,
    drift: DriftSummary,
    config: &'a RunConfig,
}

pub fn simulate(cfg: &RunConfig) -> Result<String, Failure> {
    let (sys, p0) = build_system(cfg)?;
    let times = sample_times(cfg.t_end, cfg.samples);
    info!("simulating {} samples on [0, {}]", times.len(), cfg.t_end);
    let rows = trajectory_rows(&sys, &p0, &times)?;
    let csv = output::trajectory_csv(&sys, &rows)?;
    let meta = RunMetadata {
        format: "aks-flow run v1",
        command: "simulate",
        rng_seed: cfg.rng_seed,
        system: SystemInfo::new(cfg, &sys),
        seed_point: PointInfo::new(&p0),
        t_end: cfg.t_end,
        samples: rows.len(),
        trajectory: TRAJECTORY_FILE,
        drift: output::drift_summary(&sys, &rows),
        config: cfg,
    };
    let json = output::to_json(&meta)?;
    let dir = cfg.out.clone().unwrap_or_else(|| PathBuf::from(DEFAULT_SIMULATE_DIR));
    output::write_all(&[(dir.join(TRAJECTORY_FILE), csv), (dir.join(METADATA_FILE), json.clone())])?;
    Ok(json)
}

#[derive(Serialize)]
struct CompareOutput<'a> {
    format: &'static str,
    command: &'static str,
    rng_seed: u64,
    system: SystemInfo,
    seed_point: PointInfo,
    t_end: f64,
    h: f64,
    report: &'a ComparisonReport,
}

pub fn compare(cfg: &RunConfig) -> Result<(String, ComparisonReport), Failure> {
    let (sys, p0) = build_system(cfg)?;
    let report = reduced_dynamics::compare_trajectories(&sys, &p0, cfg.t_end, cfg.h).map_err(solver)?;
    let json = output::to_json(&CompareOutput {
        format: "aks-flow compare v1",
        command: "compare",
        rng_seed: cfg.rng_seed,
        system: SystemInfo::new(cfg, &sys),
        seed_point: PointInfo::new(&p0),
        t_end: cfg.t_end,
        h: cfg.h,
        report: &report,
    })?;
    if let Some(path) = &cfg.out {
        output::write_all(&[(path.clone(), json.clone())])?;
    }
    Ok((json, report))
}

#[derive(Serialize)]
struct CheckOutput<'a> {
    format: &'static str,
    command: &'static str,
    system: SystemInfo,
    seed_point: PointInfo,
    battery: &'a BatteryReport,
}

pub fn check(cfg: &RunConfig, break_sign: bool) -> Result<(String, BatteryReport), Failure> {
    let (sys, p0) = build_system(cfg)?;
    let env = CheckEnv {
        sys: &sys,
        p0: &p0,
        cfg,
        break_sign,
    };
    let report = battery::run_battery(&env);
    let json = output::to_json(&CheckOutput {
        format: "aks-flow check v1",
        command: "check",
        system: SystemInfo::new(cfg, &sys),
        seed_point: PointInfo::new(&p0),
        battery: &report,
    })?;
    if let Some(path) = &cfg.out {
        output::write_all(&[(path.clone(), json.clone())])?;
    }
    Ok((json, report))
}

/// `check --list` text: one check per line.
pub fn list_checks() -> String {
    battery::list()
        .into_iter()
        .map(|(name, description, fd)| {
            let tag = if fd { " [--verify-fd]" } else { "" };
            format!("{name}\t{description}{tag}\n")
        })
        .collect()
}
