use nalgebra::DMatrix;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{AksSystem, PhasePoint};
use crate::error::{AksError, Result};
use crate::lie_core::{AlgebraKind, DualVector, LieContext};
use crate::linalg;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PresetKind {
    Toda,
    GlLu,
}

impl PresetKind {
    pub fn name(self) -> &'static str {
        match self {
            PresetKind::Toda => "toda",
            PresetKind::GlLu => "gl-lu",
        }
    }
}

impl std::str::FromStr for PresetKind {
    type Err = AksError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "toda" => Ok(PresetKind::Toda),
            "gl-lu" => Ok(PresetKind::GlLu),
            other => Err(AksError::InvalidArgument(format!(
                "unknown preset {other:?} (expected toda or gl-lu)"
            ))),
        }
    }
}

/// Jacobi matrix with zero diagonal and unit off-diagonals.
fn jacobi(n: usize) -> DMatrix<f64> {
    DMatrix::from_fn(n, n, |i, j| if i.abs_diff(j) == 1 { 1.0 } else { 0.0 })
}

/// Toda lattice: `sl(n)` with the QR splitting, `μ = 0` and `ν` the flat of
/// the standard Jacobi matrix. Returns the system and its seed point.
pub fn toda(n: usize) -> Result<(AksSystem, PhasePoint)> {
    toda_with_lax(jacobi(n))
}

/// Toda system whose seed Lax matrix is the given symmetric traceless matrix.
pub fn toda_with_lax(lax: DMatrix<f64>) -> Result<(AksSystem, PhasePoint)> {
    if !lax.is_square() || lax.nrows() < 2 {
        return Err(AksError::InvalidArgument(
            "Lax matrix must be square of size at least 2".into(),
        ));
    }
    let n = lax.nrows();
    let ctx = LieContext::qr_iwasawa(n, AlgebraKind::Sl)?;
    let nu = DualVector::from_matrix(lax);
    let sys = AksSystem::new(ctx, DualVector::zeros(n), nu)?;
    let seed = sys.seed_point();
    Ok((sys, seed))
}

/// Generic system: `gl(n)` with the LU splitting and small random
/// `μ ∈ b⁰`, `ν ∈ a⁰`.
pub fn gl_lu<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Result<(AksSystem, PhasePoint)> {
    if n < 2 {
        return Err(AksError::InvalidArgument("n must be at least 2".into()));
    }
    let ctx = LieContext::lu_gauss(n, AlgebraKind::Gl)?;
    let mu = ctx.project_b0(&DualVector::from_matrix(linalg::random_matrix(rng, n, 0.5)));
    let nu = ctx.project_a0(&DualVector::from_matrix(linalg::random_matrix(rng, n, 0.5)));
    let sys = AksSystem::new(ctx, mu, nu)?;
    let seed = sys.seed_point();
    Ok((sys, seed))
}
