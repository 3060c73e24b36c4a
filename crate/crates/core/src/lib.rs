//! Adler–Kostant–Symes integrable systems on factorizable matrix Lie groups.
//!
//! The reduced dynamics on a product of coadjoint orbits is solved exactly by
//! factorizing `g·exp(tσ♯) = g_A(t)·g_B(t)`, cross-checked against direct
//! integration of the reduced vector field, and the surrounding geometry
//! (momentum map, presymplectic constraint cascade, pullback of symplectic
//! forms) is verified numerically.

pub mod aks_flow;
pub mod constraint_gnh;
pub mod error;
pub mod factorization;
pub mod geometry_verify;
pub mod lie_core;
pub mod linalg;
pub mod reduced_dynamics;

pub use error::{AksError, Result};
pub use lie_core::{
    AlgebraKind, AlgebraVector, DualVector, GroupElement, LieContext, Pairing, Splitting,
    SplittingKind,
};
