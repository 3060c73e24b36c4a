use thiserror::Error;

/// Errors raised by the AKS machinery.
#[derive(Debug, Clone, Error, PartialEq)]
pub enum AksError {
    #[error("dimension mismatch: expected {expected}x{expected}, got {rows}x{cols}")]
    DimensionMismatch {
        expected: usize,
        rows: usize,
        cols: usize,
    },

    #[error("group element is singular (|det| = {det:e})")]
    SingularGroupElement { det: f64 },

    #[error("matrix is not in the special linear group/algebra (residual {residual:e})")]
    NotSpecial { residual: f64 },

    #[error("invalid splitting: {0}")]
    InvalidSplitting(String),

    #[error("pairing is degenerate on the algebra (Gram rank {rank} < {dim})")]
    SingularPairing { rank: usize, dim: usize },

    #[error("matrix is not factorizable: leading minor {minor} vanishes{}", fmt_time(*.time))]
    NotFactorizable { minor: usize, time: Option<f64> },

    #[error("factorization residual {residual:e} exceeds tolerance")]
    ResidualTooLarge { residual: f64 },

    #[error("Newton factorization did not converge after {iterations} iterations (residual {residual:e})")]
    NoConvergence { iterations: usize, residual: f64 },

    #[error("point is off the level set (residual {residual:e})")]
    OffLevelSet { residual: f64 },

    #[error("point is off the primary constraint surface (residual {residual:e})")]
    OffPrimarySurface { residual: f64 },

    #[error("integration step rejected at t = {t}: representative norm {norm:e} exceeds guard")]
    StepRejected { t: f64, norm: f64 },

    #[error("{what}: independent formulas disagree by {residual:e}")]
    FormulaMismatch { what: &'static str, residual: f64 },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

fn fmt_time(time: Option<f64>) -> String {
    match time {
        Some(t) => format!(" at t = {t}"),
        None => String::new(),
    }
}

impl AksError {
    /// Attach a flow time to a factorization failure.
    pub fn at_time(self, t: f64) -> Self {
        match self {
            AksError::NotFactorizable { minor, .. } => AksError::NotFactorizable {
                minor,
                time: Some(t),
            },
            other => other,
        }
    }
}

pub type Result<T> = std::result::Result<T, AksError>;
