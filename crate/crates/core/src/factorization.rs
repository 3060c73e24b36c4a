//! Group factorization `g = g_A · g_B` for the configured splitting.
//!
//! Normalizations: the QR triangular factor has a positive diagonal and the
//! LU lower factor has a unit diagonal, which makes both factorizations unique
//! and continuous along flows.

use nalgebra::DMatrix;

use crate::error::{AksError, Result};
use crate::lie_core::{AlgebraVector, GroupElement, LieContext, SplittingKind};
use crate::linalg;

/// Residual bound for every successful factorization.
pub const FACTOR_TOL: f64 = 1e-10;

/// Iteration cap for the Newton route.
pub const NEWTON_MAX_ITER: usize = 100;

/// A factorization `g = a · b` with `a ∈ A`, `b ∈ B`.
#[derive(Clone, Debug)]
pub struct Factors {
    pub a: GroupElement,
    pub b: GroupElement,
    /// Newton iterations spent (zero for the closed forms).
    pub iterations: usize,
}

impl Factors {
    /// `‖g − a·b‖_F`.
    pub fn residual(&self, g: &GroupElement) -> f64 {
        (g.rep() - self.a.rep() * self.b.rep()).norm()
    }
}

/// Factorize with the closed form of the splitting, or Newton for custom ones.
pub fn factorize(ctx: &LieContext, g: &GroupElement) -> Result<Factors> {
    let factors = match ctx.splitting().kind {
        SplittingKind::QrIwasawa => qr_positive(g.rep())?,
        SplittingKind::LuGauss => lu_unit_lower(g.rep())?,
        SplittingKind::Custom => {
            return factorize_newton(ctx, g, &(ctx.identity(), ctx.identity()));
        }
    };
    let scale = g.rep().norm().max(1.0);
    let residual = factors.residual(g);
    if residual > FACTOR_TOL * scale {
        return Err(AksError::ResidualTooLarge { residual });
    }
    let membership = membership_residual(ctx, &factors);
    if membership > FACTOR_TOL * scale {
        return Err(AksError::ResidualTooLarge {
            residual: membership,
        });
    }
    Ok(factors)
}

/// Like [`factorize`], but custom splittings start Newton from `previous`
/// (typically the factors at the preceding time of a flow).
pub fn factorize_warm(
    ctx: &LieContext,
    g: &GroupElement,
    previous: Option<&Factors>,
) -> Result<Factors> {
    match (ctx.splitting().kind, previous) {
        (SplittingKind::Custom, Some(f)) => factorize_newton(ctx, g, &(f.a.clone(), f.b.clone())),
        _ => factorize(ctx, g),
    }
}

/// Householder QR, re-signed so that `R` has a positive diagonal.
fn qr_positive(g: &DMatrix<f64>) -> Result<Factors> {
    let n = g.nrows();
    let qr = g.clone().qr();
    let mut q = qr.q();
    let mut r = qr.r();
    for k in 0..n {
        if r[(k, k)] < 0.0 {
            q.column_mut(k).neg_mut();
            r.row_mut(k).neg_mut();
        }
    }
    Ok(Factors {
        a: GroupElement::new(q)?,
        b: GroupElement::new(r)?,
        iterations: 0,
    })
}

/// Doolittle elimination without pivoting.
fn lu_unit_lower(g: &DMatrix<f64>) -> Result<Factors> {
    let n = g.nrows();
    let scale = g.amax().max(f64::MIN_POSITIVE);
    let mut l = DMatrix::<f64>::identity(n, n);
    let mut u = DMatrix::<f64>::zeros(n, n);
    for k in 0..n {
        for j in k..n {
            let s: f64 = (0..k).map(|p| l[(k, p)] * u[(p, j)]).sum();
            u[(k, j)] = g[(k, j)] - s;
        }
        if u[(k, k)].abs() <= 1e-12 * scale {
            return Err(AksError::NotFactorizable {
                minor: k + 1,
                time: None,
            });
        }
        for i in k + 1..n {
            let s: f64 = (0..k).map(|p| l[(i, p)] * u[(p, k)]).sum();
            l[(i, k)] = (g[(i, k)] - s) / u[(k, k)];
        }
    }
    Ok(Factors {
        a: GroupElement::new(l)?,
        b: GroupElement::new(u)?,
        iterations: 0,
    })
}

/// Distance of the factors from their subgroups, for the closed-form
/// splittings. Custom splittings are members by construction.
pub fn membership_residual(ctx: &LieContext, f: &Factors) -> f64 {
    let n = ctx.n();
    let a = f.a.rep();
    let b = f.b.rep();
    let strictly_lower_of = |m: &DMatrix<f64>| {
        let mut s = 0.0;
        for i in 0..n {
            for j in 0..i {
                s += m[(i, j)] * m[(i, j)];
            }
        }
        s.sqrt()
    };
    let negative_diag =
        |m: &DMatrix<f64>| (0..n).map(|k| (-m[(k, k)]).max(0.0)).fold(0.0, f64::max);
    match ctx.splitting().kind {
        SplittingKind::QrIwasawa => {
            let orth = (a.transpose() * a - DMatrix::identity(n, n)).norm();
            orth.max(strictly_lower_of(b)).max(negative_diag(b))
        }
        SplittingKind::LuGauss => {
            let upper_of_a = (a.upper_triangle() - DMatrix::identity(n, n)).norm();
            upper_of_a.max(strictly_lower_of(b))
        }
        SplittingKind::Custom => 0.0,
    }
}

/// Newton iteration on the defect `log(a⁻¹ g b⁻¹)`, split along `a ⊕ b`.
///
/// Each step updates `a ← a·exp(π_a X)`, `b ← exp(π_b X)·b` with
/// `X = log(a⁻¹ g b⁻¹)`, so the iterates stay in the subgroups.
pub fn factorize_newton(
    ctx: &LieContext,
    g: &GroupElement,
    guess: &(GroupElement, GroupElement),
) -> Result<Factors> {
    let scale = g.rep().norm().max(1.0);
    let stop = 1e-14 * scale;
    let (mut a, mut b) = guess.clone();
    let mut residual = (g.rep() - a.rep() * b.rep()).norm();
    let mut iterations = 0;
    while residual > stop {
        if iterations == NEWTON_MAX_ITER {
            if residual <= FACTOR_TOL * scale {
                break;
            }
            return Err(AksError::NoConvergence {
                iterations,
                residual,
            });
        }
        let defect = a.inv_rep() * g.rep() * b.inv_rep();
        let log = linalg::logm(&defect).ok_or(AksError::NoConvergence {
            iterations,
            residual,
        })?;
        let x = AlgebraVector::from_matrix(log);
        let step_a = ctx.project_a(&x);
        let step_b = ctx.project_b(&x);
        a = a.mul(&ctx.exp(&step_a));
        b = ctx.exp(&step_b).mul(&b);
        iterations += 1;
        let next = (g.rep() - a.rep() * b.rep()).norm();
        if !next.is_finite() {
            return Err(AksError::NoConvergence {
                iterations,
                residual: next,
            });
        }
        // Stagnation at roundoff level.
        if next >= residual && next <= FACTOR_TOL * scale {
            break;
        }
        residual = next;
    }
    Ok(Factors { a, b, iterations })
}
