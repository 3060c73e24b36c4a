//! The AKS system on `G × g*`: momentum map, the level set `Λ_{μν}`, the
//! reduction map onto the orbit product and the exact reduced flow.

use nalgebra::{DMatrix, DVector};
use rand::Rng;

use crate::error::{AksError, Result};
use crate::factorization::{self, Factors};
use crate::lie_core::{AlgebraVector, DualVector, GroupElement, LieContext};
use crate::linalg;

mod presets;
pub use presets::{gl_lu, toda, toda_with_lax, PresetKind};

/// Membership tolerance for `μ ∈ b⁰`, `ν ∈ a⁰`.
pub const SYSTEM_TOL: f64 = 1e-12;
/// Default level-set tolerance accepted by [`AksSystem::l_map`].
pub const LEVEL_SET_TOL: f64 = 1e-8;
/// Required agreement of the two reduction formulas.
pub const L_MAP_AGREEMENT_TOL: f64 = 1e-9;
/// Membership tolerance for orbit points.
pub const ORBIT_TOL: f64 = 1e-10;

/// A point `(g, σ)` of the unreduced phase space.
#[derive(Clone, Debug, PartialEq)]
pub struct PhasePoint {
    pub g: GroupElement,
    pub sigma: DualVector,
}

/// A point `(ω₁, ω₂)` of the orbit product, `ω₁ ∈ b⁰`, `ω₂ ∈ a⁰`.
#[derive(Clone, Debug, PartialEq)]
pub struct OrbitPoint {
    pub omega1: DualVector,
    pub omega2: DualVector,
}

impl OrbitPoint {
    /// Validated constructor.
    pub fn new(ctx: &LieContext, omega1: DualVector, omega2: DualVector) -> Result<Self> {
        let o = Self { omega1, omega2 };
        let r = o.membership_residual(ctx);
        if r > ORBIT_TOL * (1.0 + o.omega1.norm() + o.omega2.norm()) {
            return Err(AksError::InvalidArgument(format!(
                "orbit point is off b⁰ × a⁰ (residual {r:e})"
            )));
        }
        Ok(o)
    }

    pub fn zeros(n: usize) -> Self {
        Self {
            omega1: DualVector::zeros(n),
            omega2: DualVector::zeros(n),
        }
    }

    /// `‖π_{a⁰} ω₁‖ + ‖π_{b⁰} ω₂‖`.
    pub fn membership_residual(&self, ctx: &LieContext) -> f64 {
        ctx.project_a0(&self.omega1).norm() + ctx.project_b0(&self.omega2).norm()
    }

    /// The Lax representative `♯(ω₁ + ω₂)`.
    pub fn lax(&self, ctx: &LieContext) -> AlgebraVector {
        ctx.sharp(&(&self.omega1 + &self.omega2))
    }

    /// Frobenius distance in the ambient product.
    pub fn distance(&self, other: &OrbitPoint) -> f64 {
        let d1 = (self.omega1.rep() - other.omega1.rep()).norm_squared();
        let d2 = (self.omega2.rep() - other.omega2.rep()).norm_squared();
        (d1 + d2).sqrt()
    }
}

/// Which isotropy subalgebra to compute.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum IsotropySide {
    /// `a_μ = {κ ∈ a : π_{b⁰}(ad♯_κ μ) = 0}`.
    AMu,
    /// `b_ν = {ω ∈ b : π_{a⁰}(ad♯_ω ν) = 0}`.
    BNu,
}

/// An AKS system: a factorizable context and a momentum value `(μ, ν)`.
#[derive(Clone, Debug)]
pub struct AksSystem {
    ctx: LieContext,
    mu: DualVector,
    nu: DualVector,
}

impl AksSystem {
    pub fn new(ctx: LieContext, mu: DualVector, nu: DualVector) -> Result<Self> {
        for (name, phi, off) in [
            ("mu", &mu, ctx.project_a0(&mu)),
            ("nu", &nu, ctx.project_b0(&nu)),
        ] {
            if phi.size() != ctx.n() {
                return Err(AksError::DimensionMismatch {
                    expected: ctx.n(),
                    rows: phi.size(),
                    cols: phi.size(),
                });
            }
            let r = off.norm();
            if r > SYSTEM_TOL * phi.norm().max(1.0) {
                let space = if name == "mu" { "b⁰" } else { "a⁰" };
                return Err(AksError::InvalidArgument(format!(
                    "{name} is not in {space} (residual {r:e})"
                )));
            }
        }
        if ctx.kind() == crate::AlgebraKind::Sl {
            for (name, phi) in [("mu", &mu), ("nu", &nu)] {
                if phi.rep().trace().abs() > SYSTEM_TOL * phi.norm().max(1.0) {
                    return Err(AksError::InvalidArgument(format!("{name} is not traceless")));
                }
            }
        }
        Ok(Self { ctx, mu, nu })
    }

    pub fn ctx(&self) -> &LieContext {
        &self.ctx
    }

    pub fn mu(&self) -> &DualVector {
        &self.mu
    }

    pub fn nu(&self) -> &DualVector {
        &self.nu
    }

    /// The canonical point `(e, μ + ν)` of `Λ_{μν}`.
    pub fn seed_point(&self) -> PhasePoint {
        PhasePoint {
            g: self.ctx.identity(),
            sigma: &self.mu + &self.nu,
        }
    }

    /// `J(g, σ) = (π_{b⁰}(Ad♯_g σ), π_{a⁰}(σ))`.
    pub fn momentum_map(&self, p: &PhasePoint) -> (DualVector, DualVector) {
        let ctx = &self.ctx;
        (
            ctx.project_b0(&ctx.coad_action(&p.g, &p.sigma)),
            ctx.project_a0(&p.sigma),
        )
    }

    /// `‖J₁ − μ‖ + ‖J₂ − ν‖`.
    pub fn constraint_residual(&self, p: &PhasePoint) -> f64 {
        let (j1, j2) = self.momentum_map(p);
        (j1.rep() - self.mu.rep()).norm() + (j2.rep() - self.nu.rep()).norm()
    }

    /// `H(g, σ) = ½ σ(σ♯)`.
    pub fn hamiltonian(&self, p: &PhasePoint) -> f64 {
        0.5 * self.ctx.eval(&p.sigma, &self.ctx.sharp(&p.sigma))
    }

    /// `(g·exp(tσ♯), σ)`.
    pub fn unreduced_flow(&self, p0: &PhasePoint, t: f64) -> PhasePoint {
        let step = self.ctx.exp(&(self.ctx.sharp(&p0.sigma) * t));
        PhasePoint {
            g: p0.g.mul(&step),
            sigma: p0.sigma.clone(),
        }
    }

    /// The reduction map `L_{μν}` with the default level-set tolerance.
    pub fn l_map(&self, p: &PhasePoint) -> Result<OrbitPoint> {
        self.l_map_with_tol(p, LEVEL_SET_TOL)
    }

    pub fn l_map_with_tol(&self, p: &PhasePoint, tol: f64) -> Result<OrbitPoint> {
        let residual = self.constraint_residual(p);
        if residual > tol * p.sigma.norm().max(1.0) {
            return Err(AksError::OffLevelSet { residual });
        }
        let f = factorization::factorize(&self.ctx, &p.g)?;
        self.l_map_from_factors(p, &f)
    }

    /// Both reduction formulas from a known factorization; fails if they
    /// disagree.
    pub fn l_map_from_factors(&self, p: &PhasePoint, f: &Factors) -> Result<OrbitPoint> {
        let ctx = &self.ctx;
        let omega1 = ctx.project_b0(&ctx.coad_action(&f.a.inverse(), &self.mu));
        let omega2 = ctx.project_a0(&ctx.coad_action(&f.b, &self.nu));
        let moved = ctx.coad_action(&f.b, &p.sigma);
        let alt1 = ctx.project_b0(&moved);
        let alt2 = ctx.project_a0(&moved);
        let mismatch =
            (omega1.rep() - alt1.rep()).norm() + (omega2.rep() - alt2.rep()).norm();
        if mismatch > L_MAP_AGREEMENT_TOL * moved.norm().max(1.0) {
            return Err(AksError::FormulaMismatch {
                what: "reduction map",
                residual: mismatch,
            });
        }
        Ok(OrbitPoint { omega1, omega2 })
    }

    /// `H_{μν} = ½ω₁(ω₁♯) + ½ω₂(ω₂♯) + ω₁(ω₂♯)`.
    pub fn reduced_hamiltonian(&self, o: &OrbitPoint) -> f64 {
        let ctx = &self.ctx;
        let s1 = ctx.sharp(&o.omega1);
        let s2 = ctx.sharp(&o.omega2);
        0.5 * ctx.eval(&o.omega1, &s1) + 0.5 * ctx.eval(&o.omega2, &s2) + ctx.eval(&o.omega1, &s2)
    }

    /// Exact reduced trajectory: factorize `g·exp(tσ♯)` at each requested time.
    pub fn reduced_flow_by_factorization(
        &self,
        p0: &PhasePoint,
        ts: &[f64],
    ) -> Result<Vec<OrbitPoint>> {
        let residual = self.constraint_residual(p0);
        if residual > LEVEL_SET_TOL * p0.sigma.norm().max(1.0) {
            return Err(AksError::OffLevelSet { residual });
        }
        let mut out = Vec::with_capacity(ts.len());
        let mut previous: Option<Factors> = None;
        for &t in ts {
            let p = self.unreduced_flow(p0, t);
            let f = factorization::factorize_warm(&self.ctx, &p.g, previous.as_ref())
                .map_err(|e| e.at_time(t))?;
            out.push(self.l_map_from_factors(&p, &f)?);
            previous = Some(f);
        }
        Ok(out)
    }

    /// Basis of `a_μ` or `b_ν`, as combinations of the splitting basis.
    pub fn isotropy_subalgebra(&self, side: IsotropySide) -> Vec<AlgebraVector> {
        let ctx = &self.ctx;
        let basis = match side {
            IsotropySide::AMu => ctx.basis_a(),
            IsotropySide::BNu => ctx.basis_b(),
        };
        if basis.is_empty() {
            return Vec::new();
        }
        let image = |x: &AlgebraVector| match side {
            IsotropySide::AMu => ctx.project_b0(&ctx.coad_ad(x, &self.mu)),
            IsotropySide::BNu => ctx.project_a0(&ctx.coad_ad(x, &self.nu)),
        };
        let nn = ctx.n() * ctx.n();
        let mut map = DMatrix::zeros(nn, basis.len());
        for (c, x) in basis.iter().enumerate() {
            map.set_column(c, &linalg::vectorize(image(x).rep()));
        }
        let null = if map.norm() == 0.0 {
            DMatrix::identity(basis.len(), basis.len())
        } else {
            linalg::nullspace(&map, 1e-10)
        };
        null.column_iter()
            .map(|c| {
                let mut m = DMatrix::zeros(ctx.n(), ctx.n());
                for (k, x) in basis.iter().enumerate() {
                    m += x.rep() * c[k];
                }
                AlgebraVector::from_matrix(m)
            })
            .collect()
    }

    /// The unique point `(g, σ)` of `Λ_{μν}` over `g`.
    ///
    /// `σ = ν + τ` with `τ ∈ b⁰` solving the linear system
    /// `π_{b⁰}(Ad♯_g τ) = μ − π_{b⁰}(Ad♯_g ν)`.
    pub fn level_set_point(&self, g: &GroupElement) -> Result<PhasePoint> {
        let ctx = &self.ctx;
        let b0 = ctx.basis_b0();
        let nn = ctx.n() * ctx.n();
        let mut system = DMatrix::zeros(nn, b0.len());
        for (c, tau) in b0.iter().enumerate() {
            let col = ctx.project_b0(&ctx.coad_action(g, tau));
            system.set_column(c, &linalg::vectorize(col.rep()));
        }
        let rhs = &self.mu - &ctx.project_b0(&ctx.coad_action(g, &self.nu));
        let rhs: DVector<f64> = linalg::vectorize(rhs.rep());
        let smallest = linalg::singular_values(&system).last().copied().unwrap_or(1.0);
        if !b0.is_empty() && smallest < 1e-10 {
            return Err(AksError::InvalidArgument(format!(
                "level set is not a graph over this g (smallest singular value {smallest:e})"
            )));
        }
        let coeffs = linalg::solve_least_squares(&system, &rhs, 1e-12);
        let mut sigma = self.nu.clone();
        for (k, tau) in b0.iter().enumerate() {
            sigma += &tau.scale(coeffs[k]);
        }
        let p = PhasePoint {
            g: g.clone(),
            sigma,
        };
        let residual = self.constraint_residual(&p);
        if residual > LEVEL_SET_TOL * p.sigma.norm().max(1.0) {
            return Err(AksError::OffLevelSet { residual });
        }
        Ok(p)
    }

    /// Level-set point over `g = exp(X)`, `X` uniform with entries in `[-scale, scale]`.
    pub fn random_level_set_point<R: Rng + ?Sized>(
        &self,
        rng: &mut R,
        scale: f64,
    ) -> Result<PhasePoint> {
        let x = linalg::random_vector(rng, self.ctx.dim()) * scale;
        let g = self.ctx.exp(&self.ctx.algebra_from_coords(&x));
        self.level_set_point(&g)
    }
}

/// Spectrum of the Lax representative, sorted.
pub fn lax_spectrum(ctx: &LieContext, o: &OrbitPoint) -> Vec<(f64, f64)> {
    linalg::eigenvalues(o.lax(ctx).rep())
}

/// `tr(L^k)`, `k = 1..=n`, for the Lax representative `L`.
pub fn spectral_invariants(ctx: &LieContext, o: &OrbitPoint) -> Vec<f64> {
    linalg::power_sums(o.lax(ctx).rep())
}
