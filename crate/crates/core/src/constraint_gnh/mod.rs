//! The presymplectic space `(L_{t0}, ω₀)` of the canonical Lepage
//! equivalent, its Hamiltonian, and a pointwise numerical run of the
//! Gotay–Nester–Hinds constraint algorithm.
//!
//! Tangent vectors are `X = (ξ, δJ, δα, δβ, δσ)` with `ξ` left-trivialized:
//! the curve through `l` is `(g·exp(sξ), J + sδJ, α + sδα, β + sδβ, σ + sδσ)`.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::aks_flow::{AksSystem, IsotropySide, PhasePoint};
use crate::error::{AksError, Result};
use crate::lie_core::{AlgebraVector, DualVector, GroupElement, LieContext};
use crate::linalg;

/// Subspace tolerance for `α ∈ a`, `β ∈ b`.
pub const SUBSPACE_TOL: f64 = 1e-12;
/// Primary-surface tolerance accepted by [`stability_derivatives`].
pub const PRIMARY_TOL: f64 = 1e-8;
/// Relative agreement required between the two Hamiltonian formulas.
pub const HAMILTONIAN_AGREEMENT_TOL: f64 = 1e-11;
/// Stability derivatives at or below this count as vanishing.
pub const STABILITY_TOL: f64 = 1e-9;
/// Relative SVD threshold for tangent spaces and kernels.
pub const NULLSPACE_TOL: f64 = 1e-10;
/// Tolerance for the finite-difference cross-checks.
pub const FD_TOL: f64 = 1e-6;

/// A point `l = (g, J; α, β; σ)` of `L_{t0}`.
#[derive(Clone, Debug, PartialEq)]
pub struct ExtendedPoint {
    pub g: GroupElement,
    pub j: AlgebraVector,
    pub alpha: AlgebraVector,
    pub beta: AlgebraVector,
    pub sigma: DualVector,
}

impl ExtendedPoint {
    pub fn new(
        ctx: &LieContext,
        g: GroupElement,
        j: AlgebraVector,
        alpha: AlgebraVector,
        beta: AlgebraVector,
        sigma: DualVector,
    ) -> Result<Self> {
        let r_alpha = ctx.project_b(&alpha).norm();
        let r_beta = ctx.project_a(&beta).norm();
        if r_alpha > SUBSPACE_TOL * alpha.norm().max(1.0) {
            return Err(AksError::InvalidArgument(format!(
                "alpha is not in a (residual {r_alpha:e})"
            )));
        }
        if r_beta > SUBSPACE_TOL * beta.norm().max(1.0) {
            return Err(AksError::InvalidArgument(format!(
                "beta is not in b (residual {r_beta:e})"
            )));
        }
        Ok(Self {
            g,
            j,
            alpha,
            beta,
            sigma,
        })
    }

    /// The point `(g, σ♯; α, β; σ)` over a phase point.
    pub fn over(ctx: &LieContext, p: &PhasePoint, alpha: AlgebraVector, beta: AlgebraVector) -> Result<Self> {
        Self::new(ctx, p.g.clone(), ctx.sharp(&p.sigma), alpha, beta, p.sigma.clone())
    }

    pub fn phase_point(&self) -> PhasePoint {
        PhasePoint {
            g: self.g.clone(),
            sigma: self.sigma.clone(),
        }
    }

    /// Move along `X` for parameter `s`.
    pub fn displace(&self, ctx: &LieContext, x: &ExtendedTangent, s: f64) -> Self {
        Self {
            g: self.g.mul(&ctx.exp(&x.xi.scale(s))),
            j: &self.j + &x.dj.scale(s),
            alpha: &self.alpha + &x.dalpha.scale(s),
            beta: &self.beta + &x.dbeta.scale(s),
            sigma: &self.sigma + &x.dsigma.scale(s),
        }
    }
}

/// A tangent vector `X = (ξ, δJ, δα, δβ, δσ)` at a point of `L_{t0}`.
#[derive(Clone, Debug, PartialEq)]
pub struct ExtendedTangent {
    pub xi: AlgebraVector,
    pub dj: AlgebraVector,
    pub dalpha: AlgebraVector,
    pub dbeta: AlgebraVector,
    pub dsigma: DualVector,
}

impl ExtendedTangent {
    pub fn zeros(n: usize) -> Self {
        Self {
            xi: AlgebraVector::zeros(n),
            dj: AlgebraVector::zeros(n),
            dalpha: AlgebraVector::zeros(n),
            dbeta: AlgebraVector::zeros(n),
            dsigma: DualVector::zeros(n),
        }
    }

    pub fn scale(&self, s: f64) -> Self {
        Self {
            xi: self.xi.scale(s),
            dj: self.dj.scale(s),
            dalpha: self.dalpha.scale(s),
            dbeta: self.dbeta.scale(s),
            dsigma: self.dsigma.scale(s),
        }
    }

    pub fn add(&self, other: &Self) -> Self {
        Self {
            xi: &self.xi + &other.xi,
            dj: &self.dj + &other.dj,
            dalpha: &self.dalpha + &other.dalpha,
            dbeta: &self.dbeta + &other.dbeta,
            dsigma: &self.dsigma + &other.dsigma,
        }
    }

    pub fn norm(&self) -> f64 {
        [
            self.xi.norm(),
            self.dj.norm(),
            self.dalpha.norm(),
            self.dbeta.norm(),
            self.dsigma.norm(),
        ]
        .iter()
        .map(|v| v * v)
        .sum::<f64>()
        .sqrt()
    }
}

/// Coordinate basis of `T_l L_{t0}`: `ξ` and `δJ` over the orthonormal basis
/// of `g`, `δα`, `δβ` over the splitting bases, `δσ` over the flats of the
/// orthonormal basis. Its length is `4·dim g`.
pub fn tangent_basis(ctx: &LieContext) -> Vec<ExtendedTangent> {
    let n = ctx.n();
    let mut out = Vec::with_capacity(4 * ctx.dim());
    for e in ctx.basis() {
        out.push(ExtendedTangent {
            xi: e,
            ..ExtendedTangent::zeros(n)
        });
    }
    for e in ctx.basis() {
        out.push(ExtendedTangent {
            dj: e,
            ..ExtendedTangent::zeros(n)
        });
    }
    for e in ctx.basis_a() {
        out.push(ExtendedTangent {
            dalpha: e,
            ..ExtendedTangent::zeros(n)
        });
    }
    for e in ctx.basis_b() {
        out.push(ExtendedTangent {
            dbeta: e,
            ..ExtendedTangent::zeros(n)
        });
    }
    for e in ctx.basis() {
        out.push(ExtendedTangent {
            dsigma: ctx.flat(&e),
            ..ExtendedTangent::zeros(n)
        });
    }
    out
}

/// Linear combination of the tangent basis.
pub fn tangent_from_coords(basis: &[ExtendedTangent], c: &DVector<f64>) -> ExtendedTangent {
    let n = basis[0].xi.size();
    basis
        .iter()
        .zip(c.iter())
        .fold(ExtendedTangent::zeros(n), |acc, (b, &w)| acc.add(&b.scale(w)))
}

/// `ω₀(X, Y) = δσ_X(ξ_Y) − δσ_Y(ξ_X) − σ([ξ_X, ξ_Y])`.
pub fn omega0(ctx: &LieContext, l: &ExtendedPoint, x: &ExtendedTangent, y: &ExtendedTangent) -> f64 {
    let bracket = AlgebraVector::from_matrix(linalg::commutator(x.xi.rep(), y.xi.rep()));
    ctx.eval(&x.dsigma, &y.xi) - ctx.eval(&y.dsigma, &x.xi) - ctx.eval(&l.sigma, &bracket)
}

/// Gram matrix `Ω_{ij} = ω₀(e_i, e_j)` over a tangent basis.
pub fn omega0_matrix(ctx: &LieContext, l: &ExtendedPoint, basis: &[ExtendedTangent]) -> DMatrix<f64> {
    let k = basis.len();
    let mut m = DMatrix::zeros(k, k);
    for i in 0..k {
        for j in i + 1..k {
            let v = omega0(ctx, l, &basis[i], &basis[j]);
            m[(i, j)] = v;
            m[(j, i)] = -v;
        }
    }
    m
}

/// `H = σ(Ad_{g⁻¹}α + β − J) + ½B(J, J) − μ(α) − ν(β)`, checked against the
/// expanded form `−½σ(J) + ½(J♭ − σ)(J) + (Ad♯_g σ − μ)(α) + (σ − ν)(β)`.
pub fn extended_hamiltonian(sys: &AksSystem, l: &ExtendedPoint) -> Result<f64> {
    let ctx = sys.ctx();
    let moved_alpha = ctx.adjoint(&l.g.inverse(), &l.alpha);
    let direct = ctx.eval(&l.sigma, &(&(&moved_alpha + &l.beta) - &l.j))
        + 0.5 * ctx.pairing_value(&l.j, &l.j)
        - ctx.eval(sys.mu(), &l.alpha)
        - ctx.eval(sys.nu(), &l.beta);
    let expanded = -0.5 * ctx.eval(&l.sigma, &l.j)
        + 0.5 * ctx.eval(&(&ctx.flat(&l.j) - &l.sigma), &l.j)
        + ctx.eval(&(&ctx.coad_action(&l.g, &l.sigma) - sys.mu()), &l.alpha)
        + ctx.eval(&(&l.sigma - sys.nu()), &l.beta);
    let scale = 1.0
        + l.sigma.norm() * (l.j.norm() + moved_alpha.norm() + l.beta.norm())
        + l.j.norm().powi(2)
        + (sys.mu().norm() * l.alpha.norm())
        + (sys.nu().norm() * l.beta.norm());
    let residual = (direct - expanded).abs();
    if residual > HAMILTONIAN_AGREEMENT_TOL * scale {
        return Err(AksError::FormulaMismatch {
            what: "extended Hamiltonian",
            residual,
        });
    }
    Ok(direct)
}

/// `(J♭ − σ, π_{b⁰}(Ad♯_g σ − μ), π_{a⁰}(σ − ν))`.
pub fn primary_constraints(sys: &AksSystem, l: &ExtendedPoint) -> (DualVector, DualVector, DualVector) {
    let ctx = sys.ctx();
    (
        &ctx.flat(&l.j) - &l.sigma,
        ctx.project_b0(&(&ctx.coad_action(&l.g, &l.sigma) - sys.mu())),
        ctx.project_a0(&(&l.sigma - sys.nu())),
    )
}

/// Sum of the norms of the primary constraint residuals.
pub fn primary_residual(sys: &AksSystem, l: &ExtendedPoint) -> f64 {
    let (a, b, c) = primary_constraints(sys, l);
    a.norm() + b.norm() + c.norm()
}

/// `f₂^κ(l) = (π_{b⁰}(Ad♯_g σ) − μ)(κ)`.
pub fn constraint_f2(sys: &AksSystem, l: &ExtendedPoint, kappa: &AlgebraVector) -> f64 {
    let ctx = sys.ctx();
    let value = &ctx.project_b0(&ctx.coad_action(&l.g, &l.sigma)) - sys.mu();
    ctx.eval(&value, kappa)
}

/// `f₃^ω(l) = (π_{a⁰}(σ) − ν)(ω)`.
pub fn constraint_f3(sys: &AksSystem, l: &ExtendedPoint, omega: &AlgebraVector) -> f64 {
    let ctx = sys.ctx();
    ctx.eval(&(&ctx.project_a0(&l.sigma) - sys.nu()), omega)
}

/// `X_{f₂^κ} = (−Ad_{g⁻¹}π_a κ, 0; 0, 0; 0)`; satisfies `X ⌟ ω₀ = df₂^κ`.
pub fn generator_f2(ctx: &LieContext, l: &ExtendedPoint, kappa: &AlgebraVector) -> ExtendedTangent {
    ExtendedTangent {
        xi: -ctx.adjoint(&l.g.inverse(), &ctx.project_a(kappa)),
        ..ExtendedTangent::zeros(ctx.n())
    }
}

/// `X_{f₃^ω} = (π_b ω, 0; 0, 0; −ad♯_{π_b ω} σ)`; satisfies `X ⌟ ω₀ = −df₃^ω`.
pub fn generator_f3(ctx: &LieContext, l: &ExtendedPoint, omega: &AlgebraVector) -> ExtendedTangent {
    let p = ctx.project_b(omega);
    ExtendedTangent {
        dsigma: -ctx.coad_ad(&p, &l.sigma),
        xi: p,
        ..ExtendedTangent::zeros(ctx.n())
    }
}

/// Closed-form stability derivatives `((ad♯_α μ)(π_a κ), (π_{a⁰} ad♯_β ν)(π_b ω))`.
pub fn stability_derivatives(
    sys: &AksSystem,
    l: &ExtendedPoint,
    kappa: &AlgebraVector,
    omega: &AlgebraVector,
) -> Result<(f64, f64)> {
    let residual = primary_residual(sys, l);
    if residual > PRIMARY_TOL * l.sigma.norm().max(1.0) {
        return Err(AksError::OffPrimarySurface { residual });
    }
    let ctx = sys.ctx();
    let d2 = ctx.eval(&ctx.coad_ad(&l.alpha, sys.mu()), &ctx.project_a(kappa));
    let d3 = ctx.eval(
        &ctx.project_a0(&ctx.coad_ad(&l.beta, sys.nu())),
        &ctx.project_b(omega),
    );
    Ok((d2, d3))
}

/// Central difference of `f` along `X` at `l`.
pub fn directional_derivative<F>(ctx: &LieContext, l: &ExtendedPoint, x: &ExtendedTangent, h: f64, f: F) -> f64
where
    F: Fn(&ExtendedPoint) -> f64,
{
    (f(&l.displace(ctx, x, h)) - f(&l.displace(ctx, x, -h))) / (2.0 * h)
}

fn hamiltonian_fd(sys: &AksSystem, l: &ExtendedPoint, x: &ExtendedTangent) -> f64 {
    directional_derivative(sys.ctx(), l, x, 1e-5, |p| {
        extended_hamiltonian(sys, p).expect("Hamiltonian formulas agree near l")
    })
}

/// Images of the tangent basis under a linear map, as columns.
fn columns<F>(n: usize, basis: &[ExtendedTangent], blocks: usize, f: F) -> DMatrix<f64>
where
    F: Fn(&ExtendedTangent) -> Vec<DMatrix<f64>>,
{
    let mut m = DMatrix::zeros(blocks * n * n, basis.len());
    for (c, x) in basis.iter().enumerate() {
        let parts = f(x);
        let mut col = Vec::with_capacity(blocks * n * n);
        for p in &parts {
            col.extend(linalg::vectorize(p).iter());
        }
        m.set_column(c, &DVector::from_vec(col));
    }
    m
}

/// Analytic Jacobian of the primary constraints over the tangent basis:
/// `δJ♭ − δσ`, `π_{b⁰}(Ad♯_g(δσ + ad♯_ξ σ))`, `π_{a⁰}(δσ)`.
pub fn primary_jacobian(sys: &AksSystem, l: &ExtendedPoint, basis: &[ExtendedTangent]) -> DMatrix<f64> {
    let ctx = sys.ctx();
    columns(ctx.n(), basis, 3, |x| {
        let moved = ctx.coad_action(&l.g, &(&x.dsigma + &ctx.coad_ad(&x.xi, &l.sigma)));
        vec![
            (&ctx.flat(&x.dj) - &x.dsigma).into_rep(),
            ctx.project_b0(&moved).into_rep(),
            ctx.project_a0(&x.dsigma).into_rep(),
        ]
    })
}

/// Primary Jacobian with the secondary rows `π_{b⁰}(ad♯_{δα} μ)`,
/// `π_{a⁰}(ad♯_{δβ} ν)` appended.
pub fn secondary_jacobian(sys: &AksSystem, l: &ExtendedPoint, basis: &[ExtendedTangent]) -> DMatrix<f64> {
    let ctx = sys.ctx();
    let extra = columns(ctx.n(), basis, 2, |x| {
        vec![
            ctx.project_b0(&ctx.coad_ad(&x.dalpha, sys.mu())).into_rep(),
            ctx.project_a0(&ctx.coad_ad(&x.dbeta, sys.nu())).into_rep(),
        ]
    });
    let primary = primary_jacobian(sys, l, basis);
    let mut m = DMatrix::zeros(primary.nrows() + extra.nrows(), basis.len());
    m.rows_mut(0, primary.nrows()).copy_from(&primary);
    m.rows_mut(primary.nrows(), extra.nrows()).copy_from(&extra);
    m
}

/// Basis of `Ker ω₀|_l`.
pub fn kernel_omega0(ctx: &LieContext, l: &ExtendedPoint) -> Vec<ExtendedTangent> {
    let basis = tangent_basis(ctx);
    let omega = omega0_matrix(ctx, l, &basis);
    let null = linalg::nullspace(&omega, NULLSPACE_TOL);
    null.column_iter()
        .map(|c| tangent_from_coords(&basis, &c.into_owned()))
        .collect()
}

/// Symplectic complement `(TN)^⊥` of the column span of `t`, in tangent
/// coordinates.
pub fn symplectic_complement(omega: &DMatrix<f64>, t: &DMatrix<f64>) -> DMatrix<f64> {
    if t.ncols() == 0 {
        return DMatrix::identity(omega.nrows(), omega.nrows());
    }
    linalg::nullspace(&(t.transpose() * omega), NULLSPACE_TOL)
}

/// Dimension counts for one constraint surface at one point.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DimensionAudit {
    /// `dim P = 4·dim g`.
    pub ambient: usize,
    /// `dim T_l N`.
    pub tangent: usize,
    /// `dim (Ker ω₀ ∩ T_l N)`.
    pub kernel_in_tangent: usize,
    /// `dim (T_l N)^⊥`, computed directly.
    pub perp: usize,
    /// `dim P − dim N + dim (Ker ω₀ ∩ TN)`.
    pub formula: usize,
}

fn audit(omega: &DMatrix<f64>, t: &DMatrix<f64>) -> (DimensionAudit, DMatrix<f64>) {
    let ambient = omega.nrows();
    let perp = symplectic_complement(omega, t);
    let kernel_in_tangent = if t.ncols() == 0 {
        0
    } else {
        linalg::nullspace(&(omega * t), NULLSPACE_TOL).ncols()
    };
    (
        DimensionAudit {
            ambient,
            tangent: t.ncols(),
            kernel_in_tangent,
            perp: perp.ncols(),
            formula: ambient - t.ncols() + kernel_in_tangent,
        },
        perp,
    )
}

/// Whether two column spans coincide.
fn same_span(a: &DMatrix<f64>, b: &DMatrix<f64>) -> bool {
    if a.ncols() != b.ncols() {
        return false;
    }
    if a.ncols() == 0 {
        return true;
    }
    let mut both = DMatrix::zeros(a.nrows(), a.ncols() + b.ncols());
    both.columns_mut(0, a.ncols()).copy_from(a);
    both.columns_mut(a.ncols(), b.ncols()).copy_from(b);
    linalg::rank(&both, NULLSPACE_TOL) == a.ncols()
}

/// Distance from `x` to the span of `basis`.
fn distance_to_span(x: &AlgebraVector, basis: &[AlgebraVector]) -> f64 {
    if basis.is_empty() {
        return x.norm();
    }
    let n = x.size();
    let mut m = DMatrix::zeros(n * n, basis.len());
    for (c, b) in basis.iter().enumerate() {
        m.set_column(c, &linalg::vectorize(b.rep()));
    }
    let target = linalg::vectorize(x.rep());
    let coeffs = linalg::solve_least_squares(&m, &target, 1e-12);
    (&m * coeffs - target).norm()
}

/// Finite-difference diagnostics at one sample.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FdDiagnostics {
    /// Closed-form stability derivatives vs central differences of `H`.
    pub stability_error: f64,
    /// `X_f ⌟ ω₀ ∓ df` over random tangents.
    pub generator_error: f64,
    /// `dH` along pure `δJ, δα, δβ` directions (gauge insensitivity).
    pub gauge_sensitivity: f64,
    /// Analytic primary Jacobian vs finite differences.
    pub jacobian_error: f64,
    pub pass: bool,
}

/// Per-sample block of the cascade report.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GnhSample {
    pub index: usize,
    /// Norms of `J♭ − σ`, the `μ` constraint and the `ν` constraint.
    pub primary_residuals: [f64; 3],
    pub on_primary: bool,
    /// Distances of `α` to `a_μ` and `β` to `b_ν`.
    pub secondary_residuals: [f64; 2],
    pub on_secondary: bool,
    /// Stability derivatives over the basis of `a` (`f₂`) and `b` (`f₃`).
    pub stability_f2: Vec<f64>,
    pub stability_f3: Vec<f64>,
    pub max_stability: f64,
    pub kernel_dim: usize,
    /// Largest `ξ`/`δσ` component among the kernel basis vectors.
    pub kernel_leak: f64,
    pub primary_audit: Option<DimensionAudit>,
    pub secondary_audit: Option<DimensionAudit>,
    pub perp_spaces_equal: bool,
    /// Which of `alpha`, `beta` violate stability, if any.
    pub flags: Vec<String>,
    pub fd: Option<FdDiagnostics>,
}

/// Cascade report over a set of samples.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GnhReport {
    pub dim_g: usize,
    pub expected_kernel_dim: usize,
    pub expected_perp_dim: usize,
    pub samples: Vec<GnhSample>,
    /// Indices of samples whose stability derivatives do not vanish.
    pub flagged: Vec<usize>,
    /// True when every secondary-surface sample has vanishing stability
    /// derivatives, so the algorithm stops at the secondary surface.
    pub terminated: bool,
    pub verdict: String,
    /// Audits, kernel characterization and (if run) finite-difference
    /// checks all hold.
    pub consistent: bool,
}

fn fd_diagnostics<R: Rng + ?Sized>(sys: &AksSystem, l: &ExtendedPoint, rng: &mut R) -> FdDiagnostics {
    let ctx = sys.ctx();
    let basis = tangent_basis(ctx);
    let n = ctx.n();
    let mut stability_error: f64 = 0.0;
    let mut generator_error: f64 = 0.0;
    let zero = AlgebraVector::zeros(n);
    let mut probe = |x: &ExtendedTangent, closed: f64, f: &dyn Fn(&ExtendedPoint) -> f64, sign: f64, rng: &mut R| {
        stability_error = stability_error.max((hamiltonian_fd(sys, l, x) - closed).abs());
        for _ in 0..3 {
            let y = tangent_from_coords(&basis, &linalg::random_vector(rng, basis.len()));
            let df = directional_derivative(ctx, l, &y, 1e-5, f);
            generator_error = generator_error.max((omega0(ctx, l, x, &y) - sign * df).abs());
        }
    };
    for kappa in ctx.basis_a() {
        let closed = stability_derivatives(sys, l, &kappa, &zero).map_or(f64::NAN, |v| v.0);
        let x = generator_f2(ctx, l, &kappa);
        probe(&x, closed, &|p| constraint_f2(sys, p, &kappa), 1.0, rng);
    }
    for omega in ctx.basis_b() {
        let closed = stability_derivatives(sys, l, &zero, &omega).map_or(f64::NAN, |v| v.1);
        let x = generator_f3(ctx, l, &omega);
        probe(&x, closed, &|p| constraint_f3(sys, p, &omega), -1.0, rng);
    }
    let mut gauge_sensitivity: f64 = 0.0;
    for _ in 0..3 {
        let x = ExtendedTangent {
            dj: ctx.algebra_from_coords(&linalg::random_vector(rng, ctx.dim())),
            dalpha: ctx.project_a(&ctx.algebra_from_coords(&linalg::random_vector(rng, ctx.dim()))),
            dbeta: ctx.project_b(&ctx.algebra_from_coords(&linalg::random_vector(rng, ctx.dim()))),
            ..ExtendedTangent::zeros(n)
        };
        gauge_sensitivity = gauge_sensitivity.max(hamiltonian_fd(sys, l, &x).abs());
    }
    let analytic = primary_jacobian(sys, l, &basis);
    let mut jacobian_error: f64 = 0.0;
    for (c, x) in basis.iter().enumerate() {
        let h = 1e-6;
        let plus = primary_constraints(sys, &l.displace(ctx, x, h));
        let minus = primary_constraints(sys, &l.displace(ctx, x, -h));
        let fd: Vec<f64> = [
            (plus.0.rep() - minus.0.rep()) / (2.0 * h),
            (plus.1.rep() - minus.1.rep()) / (2.0 * h),
            (plus.2.rep() - minus.2.rep()) / (2.0 * h),
        ]
        .iter()
        .flat_map(|m| linalg::vectorize(m).iter().copied().collect::<Vec<_>>())
        .collect();
        let diff = (DVector::from_vec(fd) - analytic.column(c)).amax();
        jacobian_error = jacobian_error.max(diff);
    }
    let pass = [stability_error, generator_error, gauge_sensitivity, jacobian_error]
        .iter()
        .all(|e| e.is_finite() && *e <= FD_TOL);
    FdDiagnostics {
        stability_error,
        generator_error,
        gauge_sensitivity,
        jacobian_error,
        pass,
    }
}

/// Run the constraint algorithm pointwise on the given samples.
///
/// `fd_rng` enables the finite-difference cross-checks, drawing random test
/// tangents from it.
pub fn run_gnh<R: Rng + ?Sized>(
    sys: &AksSystem,
    samples: &[ExtendedPoint],
    mut fd_rng: Option<&mut R>,
) -> GnhReport {
    let ctx = sys.ctx();
    let d = ctx.dim();
    let a_mu = sys.isotropy_subalgebra(IsotropySide::AMu);
    let b_nu = sys.isotropy_subalgebra(IsotropySide::BNu);
    let basis = tangent_basis(ctx);
    let mut out = Vec::with_capacity(samples.len());
    for (index, l) in samples.iter().enumerate() {
        let (c1, c2, c3) = primary_constraints(sys, l);
        let primary_residuals = [c1.norm(), c2.norm(), c3.norm()];
        let on_primary = primary_residuals.iter().sum::<f64>() <= PRIMARY_TOL * l.sigma.norm().max(1.0);
        let secondary_residuals = [distance_to_span(&l.alpha, &a_mu), distance_to_span(&l.beta, &b_nu)];
        let on_secondary = on_primary
            && secondary_residuals
                .iter()
                .all(|r| *r <= 1e-10 * (1.0 + l.alpha.norm() + l.beta.norm()));

        let omega = omega0_matrix(ctx, l, &basis);
        let kernel = linalg::nullspace(&omega, NULLSPACE_TOL);
        let kernel_leak = kernel
            .column_iter()
            .map(|c| {
                let x = tangent_from_coords(&basis, &c.into_owned());
                x.xi.norm().max(x.dsigma.norm())
            })
            .fold(0.0, f64::max);

        let mut stability_f2 = Vec::new();
        let mut stability_f3 = Vec::new();
        let mut primary_audit = None;
        let mut secondary_audit = None;
        let mut perp_spaces_equal = false;
        let mut flags = Vec::new();
        let mut fd = None;
        if on_primary {
            let zero = AlgebraVector::zeros(ctx.n());
            for kappa in ctx.basis_a() {
                stability_f2.push(stability_derivatives(sys, l, &kappa, &zero).map(|v| v.0).unwrap_or(f64::NAN));
            }
            for omega in ctx.basis_b() {
                stability_f3.push(stability_derivatives(sys, l, &zero, &omega).map(|v| v.1).unwrap_or(f64::NAN));
            }
            let t1 = linalg::nullspace(&primary_jacobian(sys, l, &basis), NULLSPACE_TOL);
            let t2 = linalg::nullspace(&secondary_jacobian(sys, l, &basis), NULLSPACE_TOL);
            let (audit1, perp1) = audit(&omega, &t1);
            let (audit2, perp2) = audit(&omega, &t2);
            perp_spaces_equal = same_span(&perp1, &perp2);
            primary_audit = Some(audit1);
            secondary_audit = Some(audit2);
            if stability_f2.iter().any(|v| v.is_nan() || v.abs() > STABILITY_TOL) {
                flags.push("alpha".to_string());
            }
            if stability_f3.iter().any(|v| v.is_nan() || v.abs() > STABILITY_TOL) {
                flags.push("beta".to_string());
            }
            if let Some(rng) = fd_rng.as_deref_mut() {
                fd = Some(fd_diagnostics(sys, l, rng));
            }
        } else {
            flags.push("off primary surface".to_string());
        }
        let max_stability = stability_f2
            .iter()
            .chain(&stability_f3)
            .map(|v| v.abs())
            .fold(0.0, f64::max);
        out.push(GnhSample {
            index,
            primary_residuals,
            on_primary,
            secondary_residuals,
            on_secondary,
            stability_f2,
            stability_f3,
            max_stability,
            kernel_dim: kernel.ncols(),
            kernel_leak,
            primary_audit,
            secondary_audit,
            perp_spaces_equal,
            flags,
            fd,
        });
    }

    let flagged: Vec<usize> = out.iter().filter(|s| !s.flags.is_empty()).map(|s| s.index).collect();
    let secondary: Vec<&GnhSample> = out.iter().filter(|s| s.on_secondary).collect();
    let terminated = !secondary.is_empty() && secondary.iter().all(|s| s.max_stability <= STABILITY_TOL);
    let consistent = out.iter().all(|s| {
        let audits_ok = !s.on_primary
            || (s.primary_audit.as_ref().is_some_and(|a| a.perp == 3 * d && a.formula == a.perp)
                && s.secondary_audit.as_ref().is_some_and(|a| a.formula == a.perp)
                && s.perp_spaces_equal);
        s.kernel_dim == 2 * d
            && s.kernel_leak <= 1e-10
            && audits_ok
            && s.fd.as_ref().is_none_or(|f| f.pass)
    });
    let verdict = if terminated {
        "terminated: no more constraints beyond the secondary surface".to_string()
    } else if secondary.is_empty() {
        "undecided: no samples on the secondary surface".to_string()
    } else {
        "not terminated: stability derivatives do not vanish on the secondary surface".to_string()
    };
    GnhReport {
        dim_g: d,
        expected_kernel_dim: 2 * d,
        expected_perp_dim: 3 * d,
        samples: out,
        flagged,
        terminated,
        verdict,
        consistent,
    }
}

/// Random element of the span of `basis` with coefficients in `[-scale, scale]`.
fn random_in_span<R: Rng + ?Sized>(rng: &mut R, n: usize, basis: &[AlgebraVector], scale: f64) -> AlgebraVector {
    basis.iter().fold(AlgebraVector::zeros(n), |acc, b| {
        acc + b.scale(rng.random_range(-scale..scale))
    })
}

/// Random point of `Λ̃^(1)`: a level-set point, `J = σ♯` and arbitrary
/// `α ∈ a`, `β ∈ b`.
pub fn sample_primary<R: Rng + ?Sized>(sys: &AksSystem, rng: &mut R, scale: f64) -> Result<ExtendedPoint> {
    let ctx = sys.ctx();
    let p = sys.random_level_set_point(rng, scale)?;
    let alpha = random_in_span(rng, ctx.n(), &ctx.basis_a(), 1.0);
    let beta = random_in_span(rng, ctx.n(), &ctx.basis_b(), 1.0);
    ExtendedPoint::over(ctx, &p, alpha, beta)
}

/// Random point of `Λ̃^(2)`: as [`sample_primary`] with `α ∈ a_μ`, `β ∈ b_ν`.
pub fn sample_secondary<R: Rng + ?Sized>(sys: &AksSystem, rng: &mut R, scale: f64) -> Result<ExtendedPoint> {
    let ctx = sys.ctx();
    let p = sys.random_level_set_point(rng, scale)?;
    let alpha = random_in_span(rng, ctx.n(), &sys.isotropy_subalgebra(IsotropySide::AMu), 1.0);
    let beta = random_in_span(rng, ctx.n(), &sys.isotropy_subalgebra(IsotropySide::BNu), 1.0);
    // Isotropy bases are combinations of the splitting bases; clean rounding.
    let alpha = ctx.project_a(&alpha);
    let beta = ctx.project_b(&beta);
    ExtendedPoint::over(ctx, &p, alpha, beta)
}
