//! Numerical checks of the symplectic geometry around `Λ_{μν}`: the
//! canonical form on `G × g*`, tangent spaces of the level set, the
//! differential of the reduction map, the Kirillov–Kostant–Souriau form on
//! the orbit product, and the gauge directions of the restricted form.
//!
//! Tangent vectors `(ξ, η)` are left-trivialized: the curve through `(g, σ)`
//! is `(g·exp(sξ), σ + sη)`.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::aks_flow::{AksSystem, IsotropySide, OrbitPoint, PhasePoint, LEVEL_SET_TOL};
use crate::error::{AksError, Result};
use crate::factorization::{self, Factors};
use crate::lie_core::{AlgebraVector, DualVector, GroupElement, LieContext};
use crate::linalg;

/// Exact identities are checked to this tolerance.
pub const IDENTITY_TOL: f64 = 1e-9;
/// Relative SVD threshold for tangent spaces and ranks.
pub const RANK_TOL: f64 = 1e-10;
/// Tolerance for finite-difference generators.
pub const FD_TOL: f64 = 1e-6;

/// A left-trivialized tangent vector `(ξ, η)` of `G × g*`.
#[derive(Clone, Debug, PartialEq)]
pub struct PhaseTangent {
    pub xi: AlgebraVector,
    pub eta: DualVector,
}

impl PhaseTangent {
    pub fn zeros(n: usize) -> Self {
        Self {
            xi: AlgebraVector::zeros(n),
            eta: DualVector::zeros(n),
        }
    }

    pub fn scale(&self, s: f64) -> Self {
        Self {
            xi: self.xi.scale(s),
            eta: self.eta.scale(s),
        }
    }

    pub fn add(&self, other: &Self) -> Self {
        Self {
            xi: &self.xi + &other.xi,
            eta: &self.eta + &other.eta,
        }
    }

    pub fn norm(&self) -> f64 {
        self.xi.norm().hypot(self.eta.norm())
    }

    /// Linear combination of `basis` with coefficients `c`.
    pub fn combine(basis: &[PhaseTangent], c: &DVector<f64>) -> Self {
        let n = basis.first().map_or(0, |t| t.xi.size());
        basis
            .iter()
            .zip(c.iter())
            .fold(Self::zeros(n), |acc, (t, &k)| acc.add(&t.scale(k)))
    }
}

/// Per-check summary emitted by the verification battery.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VerificationSummary {
    pub name: String,
    pub samples: usize,
    pub max_residual: f64,
    pub pass: bool,
}

impl VerificationSummary {
    pub fn new(name: &str, samples: usize, max_residual: f64, tol: f64) -> Self {
        Self {
            name: name.to_string(),
            samples,
            max_residual,
            pass: max_residual.is_finite() && max_residual <= tol,
        }
    }
}

/// Sign of the orbit term in the product form: the correct `ω_μ − ω_ν` or
/// the deliberately wrong `ω_μ + ω_ν`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FormSign {
    Difference,
    Sum,
}

fn check_level_set(sys: &AksSystem, p: &PhasePoint) -> Result<()> {
    let residual = sys.constraint_residual(p);
    if residual > LEVEL_SET_TOL * p.sigma.norm().max(1.0) {
        return Err(AksError::OffLevelSet { residual });
    }
    Ok(())
}

fn to_algebra(m: &DMatrix<f64>) -> AlgebraVector {
    AlgebraVector::from_matrix(m.clone())
}

/// `ω(X, Y) = η_X(ξ_Y) − η_Y(ξ_X) − σ([ξ_X, ξ_Y])`.
pub fn canonical_form(ctx: &LieContext, p: &PhasePoint, x: &PhaseTangent, y: &PhaseTangent) -> f64 {
    let bracket = AlgebraVector::from_matrix(linalg::commutator(x.xi.rep(), y.xi.rep()));
    ctx.eval(&x.eta, &y.xi) - ctx.eval(&y.eta, &x.xi) - ctx.eval(&p.sigma, &bracket)
}

/// The two tangency conditions of `Λ_{μν}`:
/// `π_{b⁰}(Ad♯_g(ad♯_ξ σ + η))` and `π_{a⁰}(η)`.
pub fn tangency_conditions(sys: &AksSystem, p: &PhasePoint, v: &PhaseTangent) -> (DualVector, DualVector) {
    let ctx = sys.ctx();
    let inner = &ctx.coad_ad(&v.xi, &p.sigma) + &v.eta;
    (
        ctx.project_b0(&ctx.coad_action(&p.g, &inner)),
        ctx.project_a0(&v.eta),
    )
}

pub fn tangency_residual(sys: &AksSystem, p: &PhasePoint, v: &PhaseTangent) -> f64 {
    let (c1, c2) = tangency_conditions(sys, p, v);
    c1.norm() + c2.norm()
}

/// `π_{b⁰}(ad♯_{Ad_{g_B} ξ}(Ad♯_{g_B} σ) + Ad♯_{g_B} η)`.
pub fn conjugated_condition(ctx: &LieContext, p: &PhasePoint, f: &Factors, v: &PhaseTangent) -> DualVector {
    let moved_xi = ctx.adjoint(&f.b, &v.xi);
    let moved_sigma = ctx.coad_action(&f.b, &p.sigma);
    let moved_eta = ctx.coad_action(&f.b, &v.eta);
    ctx.project_b0(&(&ctx.coad_ad(&moved_xi, &moved_sigma) + &moved_eta))
}

/// Basis of `T_p Λ_{μν}`: the numeric nullspace of the tangency conditions
/// over the coordinates of `(ξ, η)`.
///
/// Every vector is also checked against the conjugated form of the first
/// condition, which requires `g` to factorize.
pub fn lambda_tangent_basis(sys: &AksSystem, p: &PhasePoint) -> Result<Vec<PhaseTangent>> {
    check_level_set(sys, p)?;
    let ctx = sys.ctx();
    let d = ctx.dim();
    let n = ctx.n();
    let basis = ctx.basis();
    let unit = |k: usize| {
        if k < d {
            PhaseTangent {
                xi: basis[k].clone(),
                eta: DualVector::zeros(n),
            }
        } else {
            PhaseTangent {
                xi: AlgebraVector::zeros(n),
                eta: DualVector::from_matrix(basis[k - d].rep().clone()),
            }
        }
    };
    let units: Vec<PhaseTangent> = (0..2 * d).map(unit).collect();
    let nn = n * n;
    let mut map = DMatrix::zeros(2 * nn, 2 * d);
    for (k, u) in units.iter().enumerate() {
        let (c1, c2) = tangency_conditions(sys, p, u);
        map.view_mut((0, k), (nn, 1)).copy_from(&linalg::vectorize(c1.rep()));
        map.view_mut((nn, k), (nn, 1)).copy_from(&linalg::vectorize(c2.rep()));
    }
    let null = linalg::nullspace(&map, RANK_TOL);
    let tangents: Vec<PhaseTangent> = null
        .column_iter()
        .map(|c| PhaseTangent::combine(&units, &c.into_owned()))
        .collect();

    let f = factorization::factorize(ctx, &p.g)?;
    let scale = 1.0 + p.sigma.norm() * f.b.rep().norm() * f.b.inv_rep().norm();
    for t in &tangents {
        let r = conjugated_condition(ctx, p, &f, t).norm();
        if r > IDENTITY_TOL * scale {
            return Err(AksError::FormulaMismatch {
                what: "conjugated tangency condition",
                residual: r,
            });
        }
    }
    Ok(tangents)
}

/// `(ξ_A, ξ_B) = (π_a(Ad_{g_B} ξ), π_b(Ad_{g_B} ξ))`.
pub fn split_generator(ctx: &LieContext, f: &Factors, xi: &AlgebraVector) -> (AlgebraVector, AlgebraVector) {
    let moved = ctx.adjoint(&f.b, xi);
    (ctx.project_a(&moved), ctx.project_b(&moved))
}

/// Generators `(−ξ_A, ξ_B)` presenting `M_*(v)` as the orbit tangent
/// `(π_{b⁰}(ad♯_{−ξ_A} ω₁), π_{a⁰}(ad♯_{ξ_B} ω₂))`.
pub fn orbit_generators(ctx: &LieContext, f: &Factors, v: &PhaseTangent) -> (AlgebraVector, AlgebraVector) {
    let (xa, xb) = split_generator(ctx, f, &v.xi);
    (-xa, xb)
}

/// The orbit tangent generated by `(ξ, ζ)` at `o`.
pub fn orbit_tangent(
    ctx: &LieContext,
    o: &OrbitPoint,
    xi: &AlgebraVector,
    zeta: &AlgebraVector,
) -> (DualVector, DualVector) {
    (
        ctx.project_b0(&ctx.coad_ad(xi, &o.omega1)),
        ctx.project_a0(&ctx.coad_ad(zeta, &o.omega2)),
    )
}

/// The differential of the reduction map, from the `μ, ν` expression:
/// `(−π_{b⁰}(ad♯_{ξ_A} Ad♯_{g_A⁻¹} μ), π_{a⁰}(ad♯_{ξ_B} Ad♯_{g_B} ν))`.
///
/// Fails if the `σ`-based expression
/// `(π_{b⁰}(ad♯_{ξ_B} Ad♯_{g_B}σ + Ad♯_{g_B}η), π_{a⁰}(ad♯_{ξ_B} Ad♯_{g_B}σ + Ad♯_{g_B}η))`
/// disagrees.
pub fn m_derivative(sys: &AksSystem, p: &PhasePoint, v: &PhaseTangent) -> Result<(DualVector, DualVector)> {
    check_level_set(sys, p)?;
    let ctx = sys.ctx();
    let f = factorization::factorize(ctx, &p.g)?;
    m_derivative_from_factors(sys, p, &f, v)
}

pub fn m_derivative_from_factors(
    sys: &AksSystem,
    p: &PhasePoint,
    f: &Factors,
    v: &PhaseTangent,
) -> Result<(DualVector, DualVector)> {
    let ctx = sys.ctx();
    let (xa, xb) = split_generator(ctx, f, &v.xi);
    let first = -ctx.project_b0(&ctx.coad_ad(&xa, &ctx.coad_action(&f.a.inverse(), sys.mu())));
    let second = ctx.project_a0(&ctx.coad_ad(&xb, &ctx.coad_action(&f.b, sys.nu())));

    let moved = &ctx.coad_ad(&xb, &ctx.coad_action(&f.b, &p.sigma)) + &ctx.coad_action(&f.b, &v.eta);
    let alt1 = ctx.project_b0(&moved);
    let alt2 = ctx.project_a0(&moved);
    let mismatch = (first.rep() - alt1.rep()).norm() + (second.rep() - alt2.rep()).norm();
    if mismatch > IDENTITY_TOL * (1.0 + moved.norm() + first.norm() + second.norm()) {
        return Err(AksError::FormulaMismatch {
            what: "reduction map differential",
            residual: mismatch,
        });
    }
    Ok((first, second))
}

fn isotropy(
    ctx: &LieContext,
    basis: &[AlgebraVector],
    image: impl Fn(&AlgebraVector) -> DualVector,
) -> Vec<AlgebraVector> {
    if basis.is_empty() {
        return Vec::new();
    }
    let nn = ctx.n() * ctx.n();
    let mut map = DMatrix::zeros(nn, basis.len());
    for (c, x) in basis.iter().enumerate() {
        map.set_column(c, &linalg::vectorize(image(x).rep()));
    }
    let null = if map.norm() == 0.0 {
        DMatrix::identity(basis.len(), basis.len())
    } else {
        linalg::nullspace(&map, RANK_TOL)
    };
    null.column_iter()
        .map(|c| {
            basis
                .iter()
                .zip(c.iter())
                .fold(AlgebraVector::zeros(ctx.n()), |acc, (x, &k)| acc + x.scale(k))
        })
        .collect()
}

/// Isotropy of `ω₁` in `a` and of `ω₂` in `b`.
pub fn orbit_isotropy(ctx: &LieContext, o: &OrbitPoint) -> (Vec<AlgebraVector>, Vec<AlgebraVector>) {
    let a = isotropy(ctx, &ctx.basis_a(), |x| ctx.project_b0(&ctx.coad_ad(x, &o.omega1)));
    let b = isotropy(ctx, &ctx.basis_b(), |x| ctx.project_a0(&ctx.coad_ad(x, &o.omega2)));
    (a, b)
}

/// `ω₁([ξ₁, ξ₂]) ∓ ω₂([ζ₁, ζ₂])` without the well-definedness check.
pub fn kks_form_signed(
    ctx: &LieContext,
    o: &OrbitPoint,
    u: (&AlgebraVector, &AlgebraVector),
    v: (&AlgebraVector, &AlgebraVector),
    sign: FormSign,
) -> f64 {
    let first = ctx.eval(&o.omega1, &to_algebra(&linalg::commutator(u.0.rep(), v.0.rep())));
    let second = ctx.eval(&o.omega2, &to_algebra(&linalg::commutator(u.1.rep(), v.1.rep())));
    match sign {
        FormSign::Difference => first - second,
        FormSign::Sum => first + second,
    }
}

/// The product form `ω_μ − ω_ν` on generator-presented tangents
/// `u = (ξ₁, ζ₁)`, `v = (ξ₂, ζ₂)`, `ξ ∈ a`, `ζ ∈ b`.
///
/// The value is recomputed with every generator shifted by isotropy
/// elements of its orbit point; a disagreement is reported as an error.
pub fn kks_form(
    ctx: &LieContext,
    o: &OrbitPoint,
    u: (&AlgebraVector, &AlgebraVector),
    v: (&AlgebraVector, &AlgebraVector),
) -> Result<f64> {
    let value = kks_form_signed(ctx, o, u, v, FormSign::Difference);
    let (iso_a, iso_b) = orbit_isotropy(ctx, o);
    let shift = |x: &AlgebraVector, iso: &[AlgebraVector], w: f64| {
        iso.iter()
            .enumerate()
            .fold(x.clone(), |acc, (k, e)| acc + e.scale(w / (k + 1) as f64))
    };
    let u0 = shift(u.0, &iso_a, 0.7);
    let u1 = shift(u.1, &iso_b, -0.4);
    let v0 = shift(v.0, &iso_a, -1.1);
    let v1 = shift(v.1, &iso_b, 0.9);
    let shifted = kks_form_signed(ctx, o, (&u0, &u1), (&v0, &v1), FormSign::Difference);
    let magnitude = o.omega1.norm() * u0.norm() * v0.norm() + o.omega2.norm() * u1.norm() * v1.norm();
    let r = (value - shifted).abs();
    if r > IDENTITY_TOL * (1.0 + magnitude) {
        return Err(AksError::FormulaMismatch {
            what: "orbit form under isotropy shift",
            residual: r,
        });
    }
    Ok(value)
}

/// Max over `trials` random tangent pairs `(u, v)` of
/// `|ω(u, v) − ω_{μν}(M_* u, M_* v)|`, the orbit side evaluated with
/// `sign`.
pub fn pullback_check<R: Rng + ?Sized>(
    sys: &AksSystem,
    p: &PhasePoint,
    trials: usize,
    rng: &mut R,
    sign: FormSign,
) -> Result<f64> {
    let ctx = sys.ctx();
    let basis = lambda_tangent_basis(sys, p)?;
    let f = factorization::factorize(ctx, &p.g)?;
    let o = sys.l_map_from_factors(p, &f)?;
    let mut worst: f64 = 0.0;
    for _ in 0..trials {
        let u = PhaseTangent::combine(&basis, &linalg::random_vector(rng, basis.len()));
        let v = PhaseTangent::combine(&basis, &linalg::random_vector(rng, basis.len()));
        worst = worst.max(pullback_residual(sys, p, &f, &o, &u, &v, sign)?);
    }
    Ok(worst)
}

/// `|ω(u, v) − ω_{μν}(M_* u, M_* v)|` for one pair.
///
/// Also confirms that the generators reproduce `M_*` before using them.
pub fn pullback_residual(
    sys: &AksSystem,
    p: &PhasePoint,
    f: &Factors,
    o: &OrbitPoint,
    u: &PhaseTangent,
    v: &PhaseTangent,
    sign: FormSign,
) -> Result<f64> {
    let ctx = sys.ctx();
    let lhs = canonical_form(ctx, p, u, v);
    let gu = orbit_generators(ctx, f, u);
    let gv = orbit_generators(ctx, f, v);
    for (t, g) in [(u, &gu), (v, &gv)] {
        let (d1, d2) = m_derivative_from_factors(sys, p, f, t)?;
        let (o1, o2) = orbit_tangent(ctx, o, &g.0, &g.1);
        let r = (d1.rep() - o1.rep()).norm() + (d2.rep() - o2.rep()).norm();
        if r > IDENTITY_TOL * (1.0 + d1.norm() + d2.norm()) {
            return Err(AksError::FormulaMismatch {
                what: "orbit generators",
                residual: r,
            });
        }
    }
    let rhs = match sign {
        FormSign::Difference => kks_form(ctx, o, (&gu.0, &gu.1), (&gv.0, &gv.1))?,
        FormSign::Sum => kks_form_signed(ctx, o, (&gu.0, &gu.1), (&gv.0, &gv.1), sign),
    };
    Ok((lhs - rhs).abs())
}

/// `X(κ, ω) = (Ad_{g⁻¹} κ − ω, ad♯_ω σ)`.
pub fn kernel_direction(ctx: &LieContext, p: &PhasePoint, kappa: &AlgebraVector, omega: &AlgebraVector) -> PhaseTangent {
    PhaseTangent {
        xi: &ctx.adjoint(&p.g.inverse(), kappa) - omega,
        eta: ctx.coad_ad(omega, &p.sigma),
    }
}

/// `{X(κ_i, 0)} ∪ {X(0, ω_j)}` over bases of `a_μ` and `b_ν`.
pub fn kernel_directions(sys: &AksSystem, p: &PhasePoint) -> Result<Vec<PhaseTangent>> {
    check_level_set(sys, p)?;
    let ctx = sys.ctx();
    let zero = AlgebraVector::zeros(ctx.n());
    let mut out: Vec<PhaseTangent> = sys
        .isotropy_subalgebra(IsotropySide::AMu)
        .iter()
        .map(|k| kernel_direction(ctx, p, k, &zero))
        .collect();
    out.extend(
        sys.isotropy_subalgebra(IsotropySide::BNu)
            .iter()
            .map(|w| kernel_direction(ctx, p, &zero, w)),
    );
    Ok(out)
}

/// Matrix of the canonical form on a list of tangents.
pub fn form_matrix(ctx: &LieContext, p: &PhasePoint, tangents: &[PhaseTangent]) -> DMatrix<f64> {
    let k = tangents.len();
    DMatrix::from_fn(k, k, |i, j| canonical_form(ctx, p, &tangents[i], &tangents[j]))
}

/// Rank of an antisymmetric form matrix. Singular values are compared with
/// the larger of the top singular value and `scale`, so a form that vanishes
/// up to rounding has rank zero.
pub fn form_rank(w: &DMatrix<f64>, scale: f64) -> usize {
    let sv = linalg::singular_values(w);
    let top = sv.first().copied().unwrap_or(0.0).max(scale);
    sv.iter().filter(|&&s| s > RANK_TOL * top).count()
}

/// Facts about the restriction of the canonical form to `T_p Λ_{μν}`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KernelReport {
    pub tangent_dim: usize,
    pub kernel_dim: usize,
    pub expected_kernel_dim: usize,
    /// Largest tangency residual among the kernel directions.
    pub max_tangency: f64,
    /// Largest `|ω(X, T)|` over kernel directions `X` and tangent basis `T`.
    pub max_contraction: f64,
}

impl KernelReport {
    pub fn pass(&self, tol: f64) -> bool {
        self.kernel_dim == self.expected_kernel_dim && self.max_tangency <= tol && self.max_contraction <= tol
    }
}

pub fn kernel_report(sys: &AksSystem, p: &PhasePoint) -> Result<KernelReport> {
    let ctx = sys.ctx();
    let basis = lambda_tangent_basis(sys, p)?;
    let dirs = kernel_directions(sys, p)?;
    let w = form_matrix(ctx, p, &basis);
    let rank = form_rank(&w, 1.0 + p.sigma.norm());
    let mut max_tangency: f64 = 0.0;
    let mut max_contraction: f64 = 0.0;
    for x in &dirs {
        max_tangency = max_tangency.max(tangency_residual(sys, p, x));
        for t in &basis {
            max_contraction = max_contraction.max(canonical_form(ctx, p, x, t).abs());
        }
    }
    Ok(KernelReport {
        tangent_dim: basis.len(),
        kernel_dim: basis.len() - rank,
        expected_kernel_dim: dirs.len(),
        max_tangency,
        max_contraction,
    })
}

/// `(a, b)·(g, σ) = (a g b⁻¹, Ad♯_b σ)`.
pub fn lifted_action(ctx: &LieContext, a: &GroupElement, b: &GroupElement, p: &PhasePoint) -> PhasePoint {
    PhasePoint {
        g: a.mul(&p.g).mul(&b.inverse()),
        sigma: ctx.coad_action(b, &p.sigma),
    }
}

/// Central-difference generator of `s ↦ (exp(sκ), exp(sω))·(g, σ)` at
/// `s = 0`, left-trivialized.
pub fn lifted_generator_fd(
    ctx: &LieContext,
    p: &PhasePoint,
    kappa: &AlgebraVector,
    omega: &AlgebraVector,
    h: f64,
) -> PhaseTangent {
    let at = |s: f64| lifted_action(ctx, &ctx.exp(&kappa.scale(s)), &ctx.exp(&omega.scale(s)), p);
    let plus = at(h);
    let minus = at(-h);
    let dg = (plus.g.rep() - minus.g.rep()) / (2.0 * h);
    PhaseTangent {
        xi: AlgebraVector::from_matrix(p.g.inv_rep() * dg),
        eta: DualVector::from_matrix((plus.sigma.rep() - minus.sigma.rep()) / (2.0 * h)),
    }
}

/// Max over basis pairs of `a_μ × b_ν` (and their sums) of the distance
/// between `X(κ, ω)` and its finite-difference counterpart.
pub fn lifted_action_residual(sys: &AksSystem, p: &PhasePoint, h: f64) -> f64 {
    let ctx = sys.ctx();
    let zero = AlgebraVector::zeros(ctx.n());
    let iso_a = sys.isotropy_subalgebra(IsotropySide::AMu);
    let iso_b = sys.isotropy_subalgebra(IsotropySide::BNu);
    let mut pairs: Vec<(AlgebraVector, AlgebraVector)> = Vec::new();
    pairs.extend(iso_a.iter().map(|k| (k.clone(), zero.clone())));
    pairs.extend(iso_b.iter().map(|w| (zero.clone(), w.clone())));
    for (k, w) in iso_a.iter().zip(iso_b.iter()) {
        pairs.push((k.clone(), w.clone()));
    }
    pairs
        .iter()
        .map(|(k, w)| {
            let exact = kernel_direction(ctx, p, k, w);
            let fd = lifted_generator_fd(ctx, p, k, w, h);
            exact.add(&fd.scale(-1.0)).norm()
        })
        .fold(0.0, f64::max)
}

/// The level-set point over `g·exp(tξ)`; its velocity at `t = 0` is `v`
/// whenever `v` is tangent to `Λ_{μν}`.
pub fn level_set_curve(sys: &AksSystem, p: &PhasePoint, v: &PhaseTangent, t: f64) -> Result<PhasePoint> {
    let g = p.g.mul(&sys.ctx().exp(&v.xi.scale(t)));
    sys.level_set_point(&g)
}

/// Central difference of the reduction map along [`level_set_curve`].
pub fn m_derivative_fd(sys: &AksSystem, p: &PhasePoint, v: &PhaseTangent, t: f64) -> Result<(DualVector, DualVector)> {
    let plus = sys.l_map(&level_set_curve(sys, p, v, t)?)?;
    let minus = sys.l_map(&level_set_curve(sys, p, v, -t)?)?;
    let k = 0.5 / t;
    Ok((
        DualVector::from_matrix((plus.omega1.rep() - minus.omega1.rep()) * k),
        DualVector::from_matrix((plus.omega2.rep() - minus.omega2.rep()) * k),
    ))
}

/// Constraint residual after the ambient step `(g·exp(sξ), σ + sη)`.
pub fn ambient_step_residual(sys: &AksSystem, p: &PhasePoint, v: &PhaseTangent, s: f64) -> f64 {
    let q = PhasePoint {
        g: p.g.mul(&sys.ctx().exp(&v.xi.scale(s))),
        sigma: &p.sigma + &v.eta.scale(s),
    };
    sys.constraint_residual(&q)
}

/// Left-trivialized differential of `exp` at `x` in direction `y`:
/// `exp(−x)·d/ds exp(x + s y)|₀`.
pub fn left_dexp(x: &DMatrix<f64>, y: &DMatrix<f64>) -> DMatrix<f64> {
    let n = x.nrows();
    let mut block = DMatrix::zeros(2 * n, 2 * n);
    block.view_mut((0, 0), (n, n)).copy_from(x);
    block.view_mut((n, n), (n, n)).copy_from(x);
    block.view_mut((0, n), (n, n)).copy_from(y);
    (-x).exp() * block.exp().view((0, n), (n, n))
}

/// Finite-difference exterior derivative of the canonical form in the
/// chart `(x, s) ↦ (g·exp(x), σ + s)` around `p`, maximized over `planes`
/// random coordinate triples.
pub fn closedness_defect<R: Rng + ?Sized>(ctx: &LieContext, p: &PhasePoint, planes: usize, rng: &mut R) -> f64 {
    let d = ctx.dim();
    let basis = ctx.basis();
    let form = |c: &DVector<f64>, i: usize, j: usize| {
        let x = ctx.from_coords(&c.rows(0, d).into_owned());
        let s = ctx.from_coords(&c.rows(d, d).into_owned());
        let point = PhasePoint {
            g: p.g.mul(&ctx.exp(&AlgebraVector::from_matrix(x.clone()))),
            sigma: &p.sigma + &DualVector::from_matrix(s),
        };
        let chart = |k: usize| {
            if k < d {
                PhaseTangent {
                    xi: AlgebraVector::from_matrix(left_dexp(&x, basis[k].rep())),
                    eta: DualVector::zeros(ctx.n()),
                }
            } else {
                PhaseTangent {
                    xi: AlgebraVector::zeros(ctx.n()),
                    eta: DualVector::from_matrix(basis[k - d].rep().clone()),
                }
            }
        };
        canonical_form(ctx, &point, &chart(i), &chart(j))
    };
    let h = 1e-4;
    let partial = |a: usize, i: usize, j: usize| {
        let mut plus = DVector::zeros(2 * d);
        let mut minus = DVector::zeros(2 * d);
        plus[a] = h;
        minus[a] = -h;
        (form(&plus, i, j) - form(&minus, i, j)) / (2.0 * h)
    };
    let mut worst: f64 = 0.0;
    for _ in 0..planes {
        let i = rng.random_range(0..2 * d);
        let j = rng.random_range(0..2 * d);
        let k = rng.random_range(0..2 * d);
        let dw = partial(i, j, k) - partial(j, i, k) + partial(k, i, j);
        worst = worst.max(dw.abs());
    }
    worst
}
