//! Run configuration: a JSON file merged with command-line overrides.

use std::path::{Path, PathBuf};

use aks_core::aks_flow::{self, AksSystem, PhasePoint, PresetKind};
use aks_core::{linalg, AlgebraKind, DualVector, LieContext};
use clap::Args;
use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::Failure;

pub const DEFAULT_N: usize = 3;
pub const DEFAULT_T_END: f64 = 1.0;
pub const DEFAULT_H: f64 = 1e-3;
pub const DEFAULT_SAMPLES: usize = 101;
pub const DEFAULT_SEED: u64 = 20240101;

/// Flags shared by every subcommand. Every field is optional so that unset
/// flags fall back to the config file and then to the defaults.
#[derive(Args, Clone, Debug, Default)]
pub struct CommonArgs {
    /// JSON config file; flags override its fields.
    #[arg(long, value_name = "FILE")]
    pub config: Option<PathBuf>,
    /// System preset: toda or gl-lu.
    #[arg(long)]
    pub preset: Option<PresetKind>,
    /// Matrix size.
    #[arg(long)]
    pub n: Option<usize>,
    /// Momentum μ ∈ b⁰ as a row-major nested JSON array, or @file.
    #[arg(long)]
    pub mu: Option<String>,
    /// Momentum ν ∈ a⁰ as a row-major nested JSON array, or @file.
    #[arg(long)]
    pub nu: Option<String>,
    /// Initial group element; σ is solved from the level set unless given.
    #[arg(long)]
    pub g0: Option<String>,
    /// Initial covector (requires the point to lie on the level set).
    #[arg(long)]
    pub sigma0: Option<String>,
    /// Final time; 0 gives the seed point only
    #[arg(long)]
    pub t_end: Option<f64>,
    /// RK4 step size.
    #[arg(long)]
    pub h: Option<f64>,
    /// Number of trajectory rows written by simulate.
    #[arg(long)]
    pub samples: Option<usize>,
    /// Seed for random presets and the check battery
    #[arg(long)]
    pub rng_seed: Option<u64>,
    /// Output location: a directory for simulate, a file for compare and check.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Also run the finite-difference cross-checks.
    #[arg(long)]
    pub verify_fd: bool,
}

/// The on-disk config format. Matrices are row-major nested arrays.
#[derive(Clone, Debug, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ConfigFile {
    pub preset: Option<PresetKind>,
    pub n: Option<usize>,
    pub mu: Option<Vec<Vec<f64>>>,
    pub nu: Option<Vec<Vec<f64>>>,
    pub g0: Option<Vec<Vec<f64>>>,
    pub sigma0: Option<Vec<Vec<f64>>>,
    pub t_end: Option<f64>,
    pub h: Option<f64>,
    pub samples: Option<usize>,
    pub rng_seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub verify_fd: Option<bool>,
}

/// Fully resolved configuration.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RunConfig {
    pub preset: PresetKind,
    pub n: usize,
    pub mu: Option<Vec<Vec<f64>>>,
    pub nu: Option<Vec<Vec<f64>>>,
    pub g0: Option<Vec<Vec<f64>>>,
    pub sigma0: Option<Vec<Vec<f64>>>,
    pub t_end: f64,
    pub h: f64,
    pub samples: usize,
    pub rng_seed: u64,
    #[serde(skip)]
    pub out: Option<PathBuf>,
    pub verify_fd: bool,
}

fn read_file(path: &Path) -> Result<String, Failure> {
    std::fs::read_to_string(path)
        .map_err(|e| Failure::Config(format!("cannot read {}: {e}", path.display())))
}

/// Parse a matrix flag: inline JSON or `@path`.
pub fn parse_matrix_arg(flag: &str, raw: &str) -> Result<Vec<Vec<f64>>, Failure> {
    let (text, origin) = match raw.strip_prefix('@') {
        Some(path) => (read_file(Path::new(path))?, format!("--{flag} file {path}")),
        None => (raw.to_string(), format!("--{flag}")),
    };
    serde_json::from_str(&text).map_err(|e| {
        Failure::Config(format!(
            "{origin}: expected a row-major nested array of numbers (line {}, column {}): {e}",
            e.line(),
            e.column()
        ))
    })
}

pub fn load_config_file(path: &Path) -> Result<ConfigFile, Failure> {
    let text = read_file(path)?;
    serde_json::from_str(&text).map_err(|e| {
        Failure::Config(format!(
            "{} line {}, column {}: {e}",
            path.display(),
            e.line(),
            e.column()
        ))
    })
}

impl RunConfig {
    pub fn resolve(args: &CommonArgs) -> Result<Self, Failure> {
        let file = match &args.config {
            Some(path) => load_config_file(path)?,
            None => ConfigFile::default(),
        };
        let matrix = |flag: &str, arg: &Option<String>, from_file: &Option<Vec<Vec<f64>>>| {
            match arg {
                Some(raw) => parse_matrix_arg(flag, raw).map(Some),
                None => Ok(from_file.clone()),
            }
        };
        let cfg = Self {
            preset: args.preset.or(file.preset).unwrap_or(PresetKind::Toda),
            n: args.n.or(file.n).unwrap_or(DEFAULT_N),
            mu: matrix("mu", &args.mu, &file.mu)?,
            nu: matrix("nu", &args.nu, &file.nu)?,
            g0: matrix("g0", &args.g0, &file.g0)?,
            sigma0: matrix("sigma0", &args.sigma0, &file.sigma0)?,
            t_end: args.t_end.or(file.t_end).unwrap_or(DEFAULT_T_END),
            h: args.h.or(file.h).unwrap_or(DEFAULT_H),
            samples: args.samples.or(file.samples).unwrap_or(DEFAULT_SAMPLES),
            rng_seed: args.rng_seed.or(file.rng_seed).unwrap_or(DEFAULT_SEED),
            out: args.out.clone().or(file.out),
            verify_fd: args.verify_fd || file.verify_fd.unwrap_or(false),
        };
        cfg.validate()?;
        Ok(cfg)
    }

    fn validate(&self) -> Result<(), Failure> {
        if !(2..=8).contains(&self.n) {
            return Err(Failure::Config(format!("n must be between 2 and 8, got {}", self.n)));
        }
        if !(self.t_end >= 0.0 && self.t_end.is_finite()) {
            return Err(Failure::Config(format!("t_end must be finite and nonnegative, got {}", self.t_end)));
        }
        if !(self.h > 0.0 && self.h.is_finite()) {
            return Err(Failure::Config(format!("h must be positive, got {}", self.h)));
        }
        if self.samples == 0 || (self.samples == 1 && self.t_end > 0.0) {
            return Err(Failure::Config(format!(
                "samples must be at least 2 when t_end > 0, got {}",
                self.samples
            )));
        }
        for (name, m) in [("mu", &self.mu), ("nu", &self.nu), ("g0", &self.g0), ("sigma0", &self.sigma0)] {
            if let Some(rows) = m {
                let ok = rows.len() == self.n && rows.iter().all(|r| r.len() == self.n);
                if !ok {
                    return Err(Failure::Config(format!("{name} must be a {n}×{n} matrix", n = self.n)));
                }
                if rows.iter().flatten().any(|v| !v.is_finite()) {
                    return Err(Failure::Config(format!("{name} has non-finite entries")));
                }
            }
        }
        Ok(())
    }

    /// Random stream dedicated to building the system.
    pub fn system_rng(&self) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(self.rng_seed)
    }

    /// Independent random stream number `k` (`k ≥ 1`) from the single seed.
    pub fn stream(&self, k: u64) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.rng_seed);
        rng.set_stream(k);
        rng
    }
}

fn to_matrix(rows: &[Vec<f64>]) -> DMatrix<f64> {
    linalg::from_rows(rows).expect("shape validated in RunConfig::resolve")
}

fn solver(e: aks_core::AksError) -> Failure {
    Failure::Solver(e.to_string())
}

/// Build the system and its initial point from the configuration.
pub fn build_system(cfg: &RunConfig) -> Result<(AksSystem, PhasePoint), Failure> {
    let n = cfg.n;
    let (sys, seed) = match cfg.preset {
        PresetKind::Toda => {
            let ctx = LieContext::qr_iwasawa(n, AlgebraKind::Sl).map_err(solver)?;
            let (_, default_seed) = aks_flow::toda(n).map_err(solver)?;
            let mu = match &cfg.mu {
                Some(m) => ctx.dual(to_matrix(m)).map_err(solver)?,
                None => DualVector::zeros(n),
            };
            let nu = match &cfg.nu {
                Some(m) => ctx.dual(to_matrix(m)).map_err(solver)?,
                None => default_seed.sigma.clone(),
            };
            let sys = AksSystem::new(ctx, mu, nu).map_err(|e| Failure::Config(e.to_string()))?;
            let seed = sys.seed_point();
            (sys, seed)
        }
        PresetKind::GlLu => {
            let (default_sys, _) = aks_flow::gl_lu(n, &mut cfg.system_rng()).map_err(solver)?;
            let ctx = default_sys.ctx().clone();
            let mu = match &cfg.mu {
                Some(m) => ctx.dual(to_matrix(m)).map_err(solver)?,
                None => default_sys.mu().clone(),
            };
            let nu = match &cfg.nu {
                Some(m) => ctx.dual(to_matrix(m)).map_err(solver)?,
                None => default_sys.nu().clone(),
            };
            let sys = AksSystem::new(ctx, mu, nu).map_err(|e| Failure::Config(e.to_string()))?;
            let seed = sys.seed_point();
            (sys, seed)
        }
    };
    let ctx = sys.ctx();
    let p0 = match (&cfg.g0, &cfg.sigma0) {
        (None, None) => seed,
        (g0, sigma0) => {
            let g = match g0 {
                Some(m) => ctx.group(to_matrix(m)).map_err(solver)?,
                None => ctx.identity(),
            };
            match sigma0 {
                None => sys.level_set_point(&g).map_err(solver)?,
                Some(m) => {
                    let p = PhasePoint {
                        g,
                        sigma: ctx.dual(to_matrix(m)).map_err(solver)?,
                    };
                    let r = sys.constraint_residual(&p);
                    if r > aks_flow::LEVEL_SET_TOL * p.sigma.norm().max(1.0) {
                        return Err(solver(aks_core::AksError::OffLevelSet { residual: r }));
                    }
                    p
                }
            }
        }
    };
    Ok((sys, p0))
}
