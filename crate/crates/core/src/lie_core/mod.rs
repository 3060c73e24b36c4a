//! Matrix Lie algebra arithmetic with a splitting `g = a ⊕ b`.
//!
//! Dual vectors are stored by matrix representatives under the invariant
//! pairing, so the coadjoint actions become matrix operations:
//! `ad♯_ξ φ ↔ [ξ, F]` and `Ad♯_g φ ↔ g F g⁻¹`, with
//! `(ad♯_ξ φ)(η) = φ([η, ξ])` and `(Ad♯_g φ)(ξ) = φ(Ad_{g⁻¹} ξ)`.

mod elements;
mod splitting;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

pub use elements::{AlgebraVector, DualVector, GroupElement};
pub use splitting::{Nondegeneracy, Splitting, SplittingKind};

use crate::error::{AksError, Result};
use crate::linalg::{self, commutator};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AlgebraKind {
    Gl,
    Sl,
}

/// Invariant bilinear form on the algebra.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Pairing {
    /// `B(X, Y) = tr(XY)`.
    Trace,
    /// Killing form: `2n·tr(XY) − 2·tr(X)·tr(Y)`. Degenerate on `gl(n)`.
    Killing,
}

/// Absolute tolerance for algebraic identities.
pub const ALGEBRA_TOL: f64 = 1e-12;

/// A matrix Lie algebra with its group, splitting and pairing.
#[derive(Clone, Debug)]
pub struct LieContext {
    n: usize,
    kind: AlgebraKind,
    pairing: Pairing,
    /// Pairing is `scale · tr(XY)` on the algebra.
    scale: f64,
    splitting: Splitting,
    tol: f64,
    /// Frobenius-orthonormal basis of the algebra.
    basis: Vec<DMatrix<f64>>,
    basis_mat: DMatrix<f64>,
    proj_a: DMatrix<f64>,
    proj_b: DMatrix<f64>,
    proj_a0: DMatrix<f64>,
    proj_b0: DMatrix<f64>,
}

impl LieContext {
    /// Build and validate a context with the trace pairing.
    pub fn new(n: usize, kind: AlgebraKind, splitting: Splitting) -> Result<Self> {
        Self::with_pairing(n, kind, splitting, Pairing::Trace)
    }

    pub fn qr_iwasawa(n: usize, kind: AlgebraKind) -> Result<Self> {
        Self::new(n, kind, Splitting::qr_iwasawa(n, kind))
    }

    pub fn lu_gauss(n: usize, kind: AlgebraKind) -> Result<Self> {
        Self::new(n, kind, Splitting::lu_gauss(n, kind))
    }

    pub fn with_pairing(
        n: usize,
        kind: AlgebraKind,
        splitting: Splitting,
        pairing: Pairing,
    ) -> Result<Self> {
        if n == 0 || (kind == AlgebraKind::Sl && n < 2) {
            return Err(AksError::InvalidArgument(format!(
                "matrix size {n} is too small for {kind:?}"
            )));
        }
        let basis = algebra_basis(n, kind);
        let dim = basis.len();
        let nn = n * n;
        let mut basis_mat = DMatrix::zeros(nn, dim);
        for (c, e) in basis.iter().enumerate() {
            basis_mat.set_column(c, &linalg::vectorize(e));
        }

        let scale = match (pairing, kind) {
            (Pairing::Trace, _) => 1.0,
            (Pairing::Killing, AlgebraKind::Sl) => 2.0 * n as f64,
            (Pairing::Killing, AlgebraKind::Gl) => {
                // Gram matrix of the Killing form over the basis.
                let gram = DMatrix::from_fn(dim, dim, |i, j| {
                    2.0 * n as f64 * (&basis[i] * &basis[j]).trace()
                        - 2.0 * basis[i].trace() * basis[j].trace()
                });
                let rank = linalg::rank(&gram, 1e-12);
                return Err(AksError::SingularPairing { rank, dim });
            }
        };

        let k_a = splitting.basis_a.len();
        let k_b = splitting.basis_b.len();
        for m in splitting.basis_a.iter().chain(&splitting.basis_b) {
            if m.shape() != (n, n) {
                return Err(AksError::DimensionMismatch {
                    expected: n,
                    rows: m.nrows(),
                    cols: m.ncols(),
                });
            }
            if kind == AlgebraKind::Sl && m.trace().abs() > ALGEBRA_TOL * m.norm().max(1.0) {
                return Err(AksError::InvalidSplitting(
                    "basis element is not traceless".into(),
                ));
            }
        }
        if k_a + k_b != dim {
            return Err(AksError::InvalidSplitting(format!(
                "dim a + dim b = {} + {} != dim g = {dim}",
                k_a, k_b
            )));
        }
        let mut stacked = DMatrix::zeros(nn, dim);
        for (c, m) in splitting
            .basis_a
            .iter()
            .chain(&splitting.basis_b)
            .enumerate()
        {
            stacked.set_column(c, &linalg::vectorize(m));
        }
        if linalg::rank(&stacked, 1e-12) != dim {
            return Err(AksError::InvalidSplitting("a ∩ b is nontrivial".into()));
        }
        // Left inverse through the Gram matrix; nalgebra's SVD-based
        // pseudo-inverse loses several digits on these stacked bases.
        let gram = stacked.transpose() * &stacked;
        let pinv = gram
            .cholesky()
            .ok_or_else(|| AksError::InvalidSplitting("bases are linearly dependent".into()))?
            .solve(&stacked.transpose());
        let proj_a = stacked.columns(0, k_a) * pinv.rows(0, k_a);
        let proj_b = stacked.columns(k_a, k_b) * pinv.rows(k_a, k_b);

        // φ ↦ φ∘π_b has representative K π_bᵀ K, K the transpose permutation.
        let transpose = commutation_matrix(n);
        let proj_a0 = &transpose * proj_b.transpose() * &transpose;
        let proj_b0 = &transpose * proj_a.transpose() * &transpose;

        let ctx = Self {
            n,
            kind,
            pairing,
            scale,
            splitting,
            tol: ALGEBRA_TOL,
            basis,
            basis_mat,
            proj_a,
            proj_b,
            proj_a0,
            proj_b0,
        };
        ctx.check_subalgebras()?;
        Ok(ctx)
    }

    fn check_subalgebras(&self) -> Result<()> {
        for (name, basis, proj) in [
            ("a", &self.splitting.basis_a, &self.proj_a),
            ("b", &self.splitting.basis_b, &self.proj_b),
        ] {
            for x in basis {
                for y in basis {
                    let z = linalg::vectorize(&commutator(x, y));
                    let resid = (&z - proj * &z).norm();
                    if resid > self.tol * (1.0 + x.norm() * y.norm()) {
                        return Err(AksError::InvalidSplitting(format!(
                            "{name} is not closed under the bracket (residual {resid:e})"
                        )));
                    }
                }
            }
        }
        Ok(())
    }

    /// Replace the tolerance used for algebraic identity checks.
    pub fn with_tolerance(mut self, tol: f64) -> Self {
        self.tol = tol;
        self
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn kind(&self) -> AlgebraKind {
        self.kind
    }

    pub fn pairing(&self) -> Pairing {
        self.pairing
    }

    pub fn splitting(&self) -> &Splitting {
        &self.splitting
    }

    pub fn tolerance(&self) -> f64 {
        self.tol
    }

    pub fn dim(&self) -> usize {
        self.basis.len()
    }

    pub fn dim_a(&self) -> usize {
        self.splitting.basis_a.len()
    }

    pub fn dim_b(&self) -> usize {
        self.splitting.basis_b.len()
    }

    /// Orthonormal basis of the whole algebra.
    pub fn basis(&self) -> Vec<AlgebraVector> {
        self.basis
            .iter()
            .cloned()
            .map(AlgebraVector::from_matrix)
            .collect()
    }

    pub fn basis_a(&self) -> Vec<AlgebraVector> {
        self.splitting
            .basis_a
            .iter()
            .cloned()
            .map(AlgebraVector::from_matrix)
            .collect()
    }

    pub fn basis_b(&self) -> Vec<AlgebraVector> {
        self.splitting
            .basis_b
            .iter()
            .cloned()
            .map(AlgebraVector::from_matrix)
            .collect()
    }

    // ---- construction with membership checks --------------------------

    fn check_shape(&self, m: &DMatrix<f64>) -> Result<()> {
        if m.shape() != (self.n, self.n) {
            return Err(AksError::DimensionMismatch {
                expected: self.n,
                rows: m.nrows(),
                cols: m.ncols(),
            });
        }
        Ok(())
    }

    pub fn algebra(&self, m: DMatrix<f64>) -> Result<AlgebraVector> {
        self.check_shape(&m)?;
        if self.kind == AlgebraKind::Sl {
            let tr = m.trace();
            if tr.abs() > self.tol * m.norm().max(1.0) {
                return Err(AksError::NotSpecial { residual: tr.abs() });
            }
        }
        Ok(AlgebraVector::from_matrix(m))
    }

    /// In `sl` mode the trace component is dropped, as it pairs to zero.
    pub fn dual(&self, m: DMatrix<f64>) -> Result<DualVector> {
        self.check_shape(&m)?;
        Ok(DualVector::from_matrix(self.remove_trace(m)))
    }

    pub fn group(&self, m: DMatrix<f64>) -> Result<GroupElement> {
        self.check_shape(&m)?;
        let g = GroupElement::new(m)?;
        if self.kind == AlgebraKind::Sl {
            let det = g.determinant();
            if (det - 1.0).abs() > 1e-9 {
                return Err(AksError::NotSpecial {
                    residual: (det - 1.0).abs(),
                });
            }
        }
        Ok(g)
    }

    fn remove_trace(&self, mut m: DMatrix<f64>) -> DMatrix<f64> {
        if self.kind == AlgebraKind::Sl {
            let shift = m.trace() / self.n as f64;
            for i in 0..self.n {
                m[(i, i)] -= shift;
            }
        }
        m
    }

    pub fn identity(&self) -> GroupElement {
        GroupElement::identity(self.n)
    }

    // ---- coordinates ---------------------------------------------------

    /// Coordinates of an algebra (or dual representative) matrix in the
    /// orthonormal basis.
    pub fn coords(&self, m: &DMatrix<f64>) -> DVector<f64> {
        self.basis_mat.transpose() * linalg::vectorize(m)
    }

    pub fn from_coords(&self, c: &DVector<f64>) -> DMatrix<f64> {
        linalg::unvectorize(&(&self.basis_mat * c), self.n)
    }

    pub fn algebra_from_coords(&self, c: &DVector<f64>) -> AlgebraVector {
        AlgebraVector::from_matrix(self.from_coords(c))
    }

    pub fn dual_from_coords(&self, c: &DVector<f64>) -> DualVector {
        DualVector::from_matrix(self.from_coords(c))
    }

    // ---- algebra operations ---------------------------------------------

    pub fn bracket(&self, x: &AlgebraVector, y: &AlgebraVector) -> Result<AlgebraVector> {
        self.check_shape(x.rep())?;
        self.check_shape(y.rep())?;
        Ok(AlgebraVector::from_matrix(commutator(x.rep(), y.rep())))
    }

    /// The invariant pairing `B(x, y)`.
    pub fn pairing_value(&self, x: &AlgebraVector, y: &AlgebraVector) -> f64 {
        self.scale * trace_of_product(x.rep(), y.rep())
    }

    /// Evaluate a dual vector on an algebra element.
    pub fn eval(&self, phi: &DualVector, x: &AlgebraVector) -> f64 {
        self.scale * trace_of_product(phi.rep(), x.rep())
    }

    /// `x♭ = B(x, ·)`.
    pub fn flat(&self, x: &AlgebraVector) -> DualVector {
        DualVector::from_matrix(self.remove_trace(x.rep().clone()))
    }

    /// Inverse of [`flat`](Self::flat).
    pub fn sharp(&self, phi: &DualVector) -> AlgebraVector {
        AlgebraVector::from_matrix(self.remove_trace(phi.rep().clone()))
    }

    fn apply(&self, proj: &DMatrix<f64>, m: &DMatrix<f64>) -> DMatrix<f64> {
        linalg::unvectorize(&(proj * linalg::vectorize(m)), self.n)
    }

    /// Projector onto `a` along `b`.
    pub fn project_a(&self, x: &AlgebraVector) -> AlgebraVector {
        AlgebraVector::from_matrix(self.apply(&self.proj_a, x.rep()))
    }

    /// Projector onto `b` along `a`.
    pub fn project_b(&self, x: &AlgebraVector) -> AlgebraVector {
        AlgebraVector::from_matrix(self.apply(&self.proj_b, x.rep()))
    }

    /// `φ ↦ φ∘π_b`, the component in the annihilator of `a`.
    pub fn project_a0(&self, phi: &DualVector) -> DualVector {
        DualVector::from_matrix(self.apply(&self.proj_a0, phi.rep()))
    }

    /// `φ ↦ φ∘π_a`, the component in the annihilator of `b`.
    pub fn project_b0(&self, phi: &DualVector) -> DualVector {
        DualVector::from_matrix(self.apply(&self.proj_b0, phi.rep()))
    }

    /// Orthonormal basis of `a⁰` (representatives).
    pub fn basis_a0(&self) -> Vec<DualVector> {
        self.range_basis(&self.proj_a0)
    }

    /// Orthonormal basis of `b⁰` (representatives).
    pub fn basis_b0(&self) -> Vec<DualVector> {
        self.range_basis(&self.proj_b0)
    }

    fn range_basis(&self, proj: &DMatrix<f64>) -> Vec<DualVector> {
        let nn = self.n * self.n;
        let complement = DMatrix::<f64>::identity(nn, nn) - proj;
        let cols = linalg::nullspace(&complement, 1e-10);
        cols.column_iter()
            .map(|c| DualVector::from_matrix(linalg::unvectorize(&c.into_owned(), self.n)))
            .collect()
    }

    /// Adjoint action `Ad_g x = g x g⁻¹`.
    pub fn adjoint(&self, g: &GroupElement, x: &AlgebraVector) -> AlgebraVector {
        AlgebraVector::from_matrix(g.rep() * x.rep() * g.inv_rep())
    }

    /// `ad♯_ξ φ`, defined by `(ad♯_ξ φ)(η) = φ([η, ξ])`; representative `[ξ, F]`.
    pub fn coad_ad(&self, xi: &AlgebraVector, phi: &DualVector) -> DualVector {
        DualVector::from_matrix(commutator(xi.rep(), phi.rep()))
    }

    /// `Ad♯_g φ`, defined by `(Ad♯_g φ)(ξ) = φ(Ad_{g⁻¹} ξ)`; representative `g F g⁻¹`.
    pub fn coad_action(&self, g: &GroupElement, phi: &DualVector) -> DualVector {
        DualVector::from_matrix(g.rep() * phi.rep() * g.inv_rep())
    }

    /// Group exponential (scaling and squaring with Padé approximants).
    pub fn exp(&self, x: &AlgebraVector) -> GroupElement {
        GroupElement::from_pair(x.rep().clone().exp(), (-x.rep()).exp())
    }

    pub fn check_nondegeneracy(&self, g: &GroupElement) -> Nondegeneracy {
        self.splitting.check_nondegeneracy(g)
    }

    // ---- structure residuals (used by the verification battery) ------

    /// Max over basis triples of `|B([z,x],y) + B(x,[z,y])|`.
    pub fn ad_invariance_residual(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for z in &self.basis {
            for x in &self.basis {
                let zx = commutator(z, x);
                for y in &self.basis {
                    let zy = commutator(z, y);
                    let r = self.scale * (trace_of_product(&zx, y) + trace_of_product(x, &zy));
                    worst = worst.max(r.abs());
                }
            }
        }
        worst
    }

    /// Rank of the pairing Gram matrix over the basis.
    pub fn pairing_rank(&self) -> usize {
        let d = self.dim();
        let gram = DMatrix::from_fn(d, d, |i, j| {
            self.scale * trace_of_product(&self.basis[i], &self.basis[j])
        });
        linalg::rank(&gram, 1e-12)
    }

    /// Max of `‖π_a + π_b − id‖`, `‖π_a² − π_a‖`, `‖π_b² − π_b‖`, `‖π_a π_b‖`
    /// evaluated on the basis.
    pub fn projector_residual(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for e in &self.basis {
            let v = linalg::vectorize(e);
            let pa = &self.proj_a * &v;
            let pb = &self.proj_b * &v;
            worst = worst
                .max((&pa + &pb - &v).norm())
                .max((&self.proj_a * &pa - &pa).norm())
                .max((&self.proj_b * &pb - &pb).norm())
                .max((&self.proj_a * &pb).norm());
        }
        worst
    }
}

fn trace_of_product(x: &DMatrix<f64>, y: &DMatrix<f64>) -> f64 {
    // tr(XY) = Σ_ij X_ij Y_ji
    let n = x.nrows();
    let mut s = 0.0;
    for i in 0..n {
        for j in 0..n {
            s += x[(i, j)] * y[(j, i)];
        }
    }
    s
}

/// Permutation with `vec(Xᵀ) = K vec(X)` for row-major vectorization.
fn commutation_matrix(n: usize) -> DMatrix<f64> {
    let mut k = DMatrix::zeros(n * n, n * n);
    for i in 0..n {
        for j in 0..n {
            k[(j * n + i, i * n + j)] = 1.0;
        }
    }
    k
}

fn algebra_basis(n: usize, kind: AlgebraKind) -> Vec<DMatrix<f64>> {
    let mut basis = Vec::with_capacity(n * n);
    for i in 0..n {
        for j in 0..n {
            if kind == AlgebraKind::Sl && i == j {
                continue;
            }
            let mut m = DMatrix::zeros(n, n);
            m[(i, j)] = 1.0;
            basis.push(m);
        }
    }
    if kind == AlgebraKind::Sl {
        basis.extend(splitting::traceless_diagonal_basis(n));
    }
    basis
}
