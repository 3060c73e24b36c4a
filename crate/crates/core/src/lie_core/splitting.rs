use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::elements::{AlgebraVector, GroupElement};
use super::AlgebraKind;
use crate::linalg;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SplittingKind {
    /// Skew-symmetric ⊕ upper triangular (QR factorization).
    QrIwasawa,
    /// Strictly lower triangular ⊕ upper triangular (Gaussian elimination).
    LuGauss,
    /// Explicit bases; factorized by Newton iteration.
    Custom,
}

/// A vector-space splitting `g = a ⊕ b` given by spanning bases of the two
/// subalgebras. Validation happens when the splitting is installed in a
/// [`LieContext`](super::LieContext).
#[derive(Clone, Debug, PartialEq)]
pub struct Splitting {
    pub kind: SplittingKind,
    pub basis_a: Vec<DMatrix<f64>>,
    pub basis_b: Vec<DMatrix<f64>>,
}

fn unit(n: usize, i: usize, j: usize) -> DMatrix<f64> {
    let mut m = DMatrix::zeros(n, n);
    m[(i, j)] = 1.0;
    m
}

/// Frobenius-orthonormal basis of the traceless diagonal matrices.
pub(crate) fn traceless_diagonal_basis(n: usize) -> Vec<DMatrix<f64>> {
    (1..n)
        .map(|k| {
            let kf = k as f64;
            let norm = (kf * (kf + 1.0)).sqrt();
            let mut m = DMatrix::zeros(n, n);
            for i in 0..k {
                m[(i, i)] = 1.0 / norm;
            }
            m[(k, k)] = -kf / norm;
            m
        })
        .collect()
}

fn upper_triangular_basis(n: usize, kind: AlgebraKind) -> Vec<DMatrix<f64>> {
    let mut basis: Vec<DMatrix<f64>> = (0..n)
        .flat_map(|i| (i + 1..n).map(move |j| (i, j)))
        .map(|(i, j)| unit(n, i, j))
        .collect();
    match kind {
        AlgebraKind::Gl => basis.extend((0..n).map(|i| unit(n, i, i))),
        AlgebraKind::Sl => basis.extend(traceless_diagonal_basis(n)),
    }
    basis
}

impl Splitting {
    /// `a = so(n)`, `b` = upper triangular (traceless in `sl` mode).
    pub fn qr_iwasawa(n: usize, kind: AlgebraKind) -> Self {
        let s = std::f64::consts::FRAC_1_SQRT_2;
        let basis_a = (0..n)
            .flat_map(|i| (i + 1..n).map(move |j| (i, j)))
            .map(|(i, j)| (unit(n, i, j) - unit(n, j, i)) * s)
            .collect();
        Self {
            kind: SplittingKind::QrIwasawa,
            basis_a,
            basis_b: upper_triangular_basis(n, kind),
        }
    }

    /// `a` = strictly lower triangular, `b` = upper triangular with diagonal.
    pub fn lu_gauss(n: usize, kind: AlgebraKind) -> Self {
        let basis_a = (0..n)
            .flat_map(|i| (0..i).map(move |j| (i, j)))
            .map(|(i, j)| unit(n, i, j))
            .collect();
        Self {
            kind: SplittingKind::LuGauss,
            basis_a,
            basis_b: upper_triangular_basis(n, kind),
        }
    }

    pub fn custom(basis_a: Vec<DMatrix<f64>>, basis_b: Vec<DMatrix<f64>>) -> Self {
        Self {
            kind: SplittingKind::Custom,
            basis_a,
            basis_b,
        }
    }

    /// Decide whether `b ∩ Ad_g(a) = {0}`.
    ///
    /// Works on the raw bases, so it also reports on splittings that a
    /// context would reject.
    pub fn check_nondegeneracy(&self, g: &GroupElement) -> Nondegeneracy {
        let n = g.size();
        let k_b = self.basis_b.len();
        let cols = k_b + self.basis_a.len();
        let mut stacked = DMatrix::zeros(n * n, cols);
        for (c, b) in self.basis_b.iter().enumerate() {
            stacked.set_column(c, &linalg::vectorize(b));
        }
        for (c, a) in self.basis_a.iter().enumerate() {
            let moved = g.rep() * a * g.inv_rep();
            stacked.set_column(k_b + c, &linalg::vectorize(&moved));
        }
        let sv = linalg::singular_values(&stacked);
        let smax = sv.first().copied().unwrap_or(0.0);
        let smin = if sv.len() < cols {
            0.0
        } else {
            sv.last().copied().unwrap_or(0.0)
        };
        let null = linalg::nullspace(&stacked, 1e-10);
        if null.ncols() == 0 && smin > 1e-10 * smax {
            return Nondegeneracy {
                holds: true,
                witness: None,
                smallest_singular_value: smin,
            };
        }
        let coeffs = null.column(0);
        let mut witness = DMatrix::zeros(n, n);
        for (c, b) in self.basis_b.iter().enumerate() {
            witness += b * coeffs[c];
        }
        Nondegeneracy {
            holds: false,
            witness: Some(AlgebraVector::from_matrix(witness)),
            smallest_singular_value: smin,
        }
    }
}

/// Outcome of [`Splitting::check_nondegeneracy`].
#[derive(Clone, Debug)]
pub struct Nondegeneracy {
    pub holds: bool,
    /// Nonzero element of `b ∩ Ad_g(a)` when the check fails.
    pub witness: Option<AlgebraVector>,
    pub smallest_singular_value: f64,
}
