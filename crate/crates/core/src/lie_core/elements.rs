use std::ops::{Add, AddAssign, Mul, Neg, Sub};

use nalgebra::DMatrix;

use crate::error::{AksError, Result};

macro_rules! matrix_newtype {
    ($name:ident) => {
        impl $name {
            /// Wrap a representative without any membership check.
            pub fn from_matrix(rep: DMatrix<f64>) -> Self {
                Self(rep)
            }

            pub fn zeros(n: usize) -> Self {
                Self(DMatrix::zeros(n, n))
            }

            pub fn rep(&self) -> &DMatrix<f64> {
                &self.0
            }

            pub fn into_rep(self) -> DMatrix<f64> {
                self.0
            }

            /// Matrix size `n`.
            pub fn size(&self) -> usize {
                self.0.nrows()
            }

            /// Frobenius norm of the representative.
            pub fn norm(&self) -> f64 {
                self.0.norm()
            }

            pub fn scale(&self, s: f64) -> Self {
                Self(&self.0 * s)
            }
        }

        impl Add for $name {
            type Output = $name;
            fn add(self, rhs: $name) -> $name {
                $name(self.0 + rhs.0)
            }
        }

        impl<'a> Add<&'a $name> for &'a $name {
            type Output = $name;
            fn add(self, rhs: &$name) -> $name {
                $name(&self.0 + &rhs.0)
            }
        }

        impl AddAssign<&$name> for $name {
            fn add_assign(&mut self, rhs: &$name) {
                self.0 += &rhs.0;
            }
        }

        impl Sub for $name {
            type Output = $name;
            fn sub(self, rhs: $name) -> $name {
                $name(self.0 - rhs.0)
            }
        }

        impl<'a> Sub<&'a $name> for &'a $name {
            type Output = $name;
            fn sub(self, rhs: &$name) -> $name {
                $name(&self.0 - &rhs.0)
            }
        }

        impl Neg for $name {
            type Output = $name;
            fn neg(self) -> $name {
                $name(-self.0)
            }
        }

        impl Neg for &$name {
            type Output = $name;
            fn neg(self) -> $name {
                $name(-&self.0)
            }
        }

        impl Mul<f64> for $name {
            type Output = $name;
            fn mul(self, s: f64) -> $name {
                $name(self.0 * s)
            }
        }

        impl Mul<f64> for &$name {
            type Output = $name;
            fn mul(self, s: f64) -> $name {
                $name(&self.0 * s)
            }
        }
    };
}

/// Element of the matrix Lie algebra.
#[derive(Clone, Debug, PartialEq)]
pub struct AlgebraVector(DMatrix<f64>);

/// Element of the dual algebra, stored by its representative `F` under the
/// pairing: the functional is `X ↦ B(F, X)`.
#[derive(Clone, Debug, PartialEq)]
pub struct DualVector(DMatrix<f64>);

matrix_newtype!(AlgebraVector);
matrix_newtype!(DualVector);

/// Invertible matrix together with its inverse.
#[derive(Clone, Debug, PartialEq)]
pub struct GroupElement {
    rep: DMatrix<f64>,
    inv: DMatrix<f64>,
}

impl GroupElement {
    /// Rejects non-square and numerically singular matrices (`|det| <= 1e-12`).
    pub fn new(rep: DMatrix<f64>) -> Result<Self> {
        if !rep.is_square() {
            return Err(AksError::DimensionMismatch {
                expected: rep.nrows(),
                rows: rep.nrows(),
                cols: rep.ncols(),
            });
        }
        let det = rep.determinant();
        if !det.is_finite() || det.abs() <= 1e-12 {
            return Err(AksError::SingularGroupElement { det });
        }
        let inv = rep
            .clone()
            .try_inverse()
            .ok_or(AksError::SingularGroupElement { det })?;
        Ok(Self { rep, inv })
    }

    /// Pair a matrix with an inverse known in closed form (e.g. `exp(-X)`
    /// for `exp(X)`), avoiding a numerical inversion.
    pub(crate) fn from_pair(rep: DMatrix<f64>, inv: DMatrix<f64>) -> Self {
        debug_assert!(rep.is_square() && rep.shape() == inv.shape());
        Self { rep, inv }
    }

    pub fn identity(n: usize) -> Self {
        Self {
            rep: DMatrix::identity(n, n),
            inv: DMatrix::identity(n, n),
        }
    }

    pub fn rep(&self) -> &DMatrix<f64> {
        &self.rep
    }

    pub fn inv_rep(&self) -> &DMatrix<f64> {
        &self.inv
    }

    pub fn size(&self) -> usize {
        self.rep.nrows()
    }

    pub fn inverse(&self) -> GroupElement {
        GroupElement {
            rep: self.inv.clone(),
            inv: self.rep.clone(),
        }
    }

    /// Group product `self · other`.
    pub fn mul(&self, other: &GroupElement) -> GroupElement {
        GroupElement {
            rep: &self.rep * &other.rep,
            inv: &other.inv * &self.inv,
        }
    }

    pub fn determinant(&self) -> f64 {
        self.rep.determinant()
    }
}
