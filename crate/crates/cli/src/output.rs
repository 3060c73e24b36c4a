//! Trajectory CSV, run metadata, and all-or-nothing file output.

use std::fs;
use std::path::{Path, PathBuf};

use aks_core::aks_flow::{self, AksSystem, OrbitPoint, PhasePoint};
use aks_core::linalg;
use serde::Serialize;

use crate::config::RunConfig;
use crate::Failure;

pub const CSV_VERSION_LINE: &str = "# aks-flow csv v1";

/// One trajectory sample.
pub struct Row {
    pub t: f64,
    pub orbit: OrbitPoint,
    pub hamiltonian: f64,
    pub constraint_residual: f64,
    pub invariants: Vec<f64>,
}

pub fn csv_header(n: usize) -> Vec<String> {
    let mut cols = vec!["t".to_string()];
    for name in ["omega1", "omega2"] {
        for i in 0..n {
            for j in 0..n {
                cols.push(format!("{name}_{i}{j}"));
            }
        }
    }
    cols.push("hamiltonian".into());
    cols.push("constraint_residual".into());
    for k in 1..=n {
        cols.push(format!("trace_power_{k}"));
    }
    cols
}

/// CSV text: the version comment, a header row, then one row per sample.
/// Orbit components are written as row-major `♯ω₁`, `♯ω₂`.
pub fn trajectory_csv(sys: &AksSystem, rows: &[Row]) -> Result<String, Failure> {
    let ctx = sys.ctx();
    let mut w = csv::Writer::from_writer(Vec::new());
    let io = |e: csv::Error| Failure::Solver(format!("csv encoding failed: {e}"));
    w.write_record(csv_header(ctx.n())).map_err(io)?;
    for r in rows {
        let mut rec = vec![r.t.to_string()];
        for part in [&r.orbit.omega1, &r.orbit.omega2] {
            let m = ctx.sharp(part);
            rec.extend(linalg::vectorize(m.rep()).iter().map(|v| v.to_string()));
        }
        rec.push(r.hamiltonian.to_string());
        rec.push(r.constraint_residual.to_string());
        rec.extend(r.invariants.iter().map(|v| v.to_string()));
        w.write_record(&rec).map_err(io)?;
    }
    let body = w.into_inner().map_err(|e| Failure::Solver(e.to_string()))?;
    Ok(format!("{CSV_VERSION_LINE}\n{}", String::from_utf8_lossy(&body)))
}

#[derive(Serialize)]
pub struct SystemInfo {
    pub preset: &'static str,
    pub n: usize,
    pub algebra: String,
    pub splitting: String,
    pub mu: Vec<Vec<f64>>,
    pub nu: Vec<Vec<f64>>,
}

impl SystemInfo {
    pub fn new(cfg: &RunConfig, sys: &AksSystem) -> Self {
        let ctx = sys.ctx();
        Self {
            preset: cfg.preset.name(),
            n: ctx.n(),
            algebra: format!("{:?}", ctx.kind()).to_lowercase(),
            splitting: format!("{:?}", ctx.splitting().kind),
            mu: linalg::to_rows(sys.mu().rep()),
            nu: linalg::to_rows(sys.nu().rep()),
        }
    }
}

#[derive(Serialize)]
pub struct PointInfo {
    pub g: Vec<Vec<f64>>,
    pub sigma: Vec<Vec<f64>>,
}

impl PointInfo {
    pub fn new(p: &PhasePoint) -> Self {
        Self {
            g: linalg::to_rows(p.g.rep()),
            sigma: linalg::to_rows(p.sigma.rep()),
        }
    }
}

/// Largest deviation of conserved quantities from their initial values.
#[derive(Serialize)]
pub struct DriftSummary {
    /// Max matched distance between the Lax spectrum and the initial one.
    pub spectral_drift: f64,
    /// Max relative change of `tr(L^k)`.
    pub invariant_drift: f64,
    pub hamiltonian_drift: f64,
    pub max_constraint_residual: f64,
}

pub fn drift_summary(sys: &AksSystem, rows: &[Row]) -> DriftSummary {
    let ctx = sys.ctx();
    let first = &rows[0];
    let reference = aks_flow::lax_spectrum(ctx, &first.orbit);
    let mut d = DriftSummary {
        spectral_drift: 0.0,
        invariant_drift: 0.0,
        hamiltonian_drift: 0.0,
        max_constraint_residual: 0.0,
    };
    for r in rows {
        d.spectral_drift = d
            .spectral_drift
            .max(linalg::spectral_distance(&aks_flow::lax_spectrum(ctx, &r.orbit), &reference));
        for (a, b) in r.invariants.iter().zip(&first.invariants) {
            d.invariant_drift = d.invariant_drift.max((a - b).abs() / b.abs().max(1.0));
        }
        d.hamiltonian_drift = d.hamiltonian_drift.max((r.hamiltonian - first.hamiltonian).abs());
        d.max_constraint_residual = d.max_constraint_residual.max(r.constraint_residual);
    }
    d
}

pub fn to_json<T: Serialize>(value: &T) -> Result<String, Failure> {
    serde_json::to_string_pretty(value)
        .map(|s| s + "\n")
        .map_err(|e| Failure::Solver(format!("json encoding failed: {e}")))
}

/// Write all files or none: contents go to temporary siblings first and
/// are renamed into place only after every write succeeded.
pub fn write_all(files: &[(PathBuf, String)]) -> Result<(), Failure> {
    let mut staged: Vec<(PathBuf, PathBuf)> = Vec::new();
    let cleanup = |staged: &[(PathBuf, PathBuf)]| {
        for (tmp, _) in staged {
            let _ = fs::remove_file(tmp);
        }
    };
    for (path, content) in files {
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            if let Err(e) = fs::create_dir_all(dir) {
                cleanup(&staged);
                return Err(Failure::Config(format!("cannot create {}: {e}", dir.display())));
            }
        }
        let tmp = tmp_name(path);
        if let Err(e) = fs::write(&tmp, content) {
            cleanup(&staged);
            return Err(Failure::Config(format!("cannot write {}: {e}", tmp.display())));
        }
        staged.push((tmp, path.clone()));
    }
    for (k, (tmp, path)) in staged.iter().enumerate() {
        if let Err(e) = fs::rename(tmp, path) {
            for (_, done) in &staged[..k] {
                let _ = fs::remove_file(done);
            }
            cleanup(&staged[k..]);
            return Err(Failure::Config(format!("cannot write {}: {e}", path.display())));
        }
    }
    Ok(())
}

fn tmp_name(path: &Path) -> PathBuf {
    let mut name = path.file_name().map(|s| s.to_os_string()).unwrap_or_default();
    name.push(".partial");
    path.with_file_name(name)
}
