//! Direct integration of the reduced Hamiltonian vector field on
//! `b⁰ × a⁰`, and its comparison with the exact factorization solution.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::aks_flow::{AksSystem, OrbitPoint, PhasePoint};
use crate::error::{AksError, Result};
use crate::lie_core::{DualVector, LieContext};

/// Representative norm beyond which a step is rejected.
pub const BLOWUP_GUARD: f64 = 1e8;
/// Allowed drift off `b⁰ × a⁰` after a step.
pub const PROJECTOR_TOL: f64 = 1e-12;
/// Step sizes used for the convergence-order estimate.
pub const ORDER_LADDER: [f64; 3] = [1e-2, 5e-3, 2.5e-3];

/// Hamiltonian vector field of `H_{μν}` at `(ω₁, ω₂)`, with `L = ♯(ω₁ + ω₂)`:
/// `(−π_{b⁰}(ad♯_{π_a L} ω₁), π_{a⁰}(ad♯_{π_b L} ω₂))`.
pub fn reduced_vector_field(ctx: &LieContext, o: &OrbitPoint) -> (DualVector, DualVector) {
    let lax = o.lax(ctx);
    let d1 = ctx.project_b0(&ctx.coad_ad(&ctx.project_a(&lax), &o.omega1));
    let d2 = ctx.project_a0(&ctx.coad_ad(&ctx.project_b(&lax), &o.omega2));
    (-d1, d2)
}

fn axpy(o: &OrbitPoint, h: f64, k: &(DualVector, DualVector)) -> OrbitPoint {
    OrbitPoint {
        omega1: &o.omega1 + &k.0.scale(h),
        omega2: &o.omega2 + &k.1.scale(h),
    }
}

fn guard(o: &OrbitPoint, t: f64) -> Result<()> {
    let norm = o.omega1.norm().max(o.omega2.norm());
    if !norm.is_finite() || norm > BLOWUP_GUARD {
        return Err(AksError::StepRejected { t, norm });
    }
    Ok(())
}

/// One classical RK4 step.
pub fn rk4_step(ctx: &LieContext, o: &OrbitPoint, t: f64, h: f64) -> Result<OrbitPoint> {
    let k1 = reduced_vector_field(ctx, o);
    let y2 = axpy(o, 0.5 * h, &k1);
    guard(&y2, t + 0.5 * h)?;
    let k2 = reduced_vector_field(ctx, &y2);
    let y3 = axpy(o, 0.5 * h, &k2);
    guard(&y3, t + 0.5 * h)?;
    let k3 = reduced_vector_field(ctx, &y3);
    let y4 = axpy(o, h, &k3);
    guard(&y4, t + h)?;
    let k4 = reduced_vector_field(ctx, &y4);
    let w = h / 6.0;
    let next = OrbitPoint {
        omega1: &o.omega1 + &(&k1.0 + &k2.0.scale(2.0) + k3.0.scale(2.0) + k4.0.clone()).scale(w),
        omega2: &o.omega2 + &(&k1.1 + &k2.1.scale(2.0) + k3.1.scale(2.0) + k4.1.clone()).scale(w),
    };
    guard(&next, t + h)?;
    Ok(next)
}

/// Time grid `0, h, 2h, …, t_end`; the last step is shortened if `h` does
/// not divide `t_end`.
pub fn time_grid(t_end: f64, h: f64) -> Result<Vec<f64>> {
    if !(h > 0.0 && h.is_finite()) {
        return Err(AksError::InvalidArgument(format!("step size must be positive, got {h}")));
    }
    if !(t_end >= 0.0 && t_end.is_finite()) {
        return Err(AksError::InvalidArgument(format!("t_end must be nonnegative, got {t_end}")));
    }
    let steps = (t_end / h - 1e-9).ceil().max(0.0) as usize;
    let mut ts: Vec<f64> = (0..steps).map(|k| k as f64 * h).collect();
    ts.push(t_end);
    Ok(ts)
}

/// Fixed-step RK4 trajectory of the reduced field from `o0`.
///
/// The field takes values in `b⁰ × a⁰`, so iterates stay there up to
/// rounding; this is re-checked after each step. Drift along the orbits is
/// not corrected.
pub fn integrate_reduced(
    ctx: &LieContext,
    o0: &OrbitPoint,
    t_end: f64,
    h: f64,
) -> Result<Vec<(f64, OrbitPoint)>> {
    let ts = time_grid(t_end, h)?;
    guard(o0, 0.0)?;
    let mut out = Vec::with_capacity(ts.len());
    let mut current = o0.clone();
    out.push((0.0, current.clone()));
    for w in ts.windows(2) {
        let (t, t_next) = (w[0], w[1]);
        current = rk4_step(ctx, &current, t, t_next - t)?;
        let drift = current.membership_residual(ctx);
        if drift > PROJECTOR_TOL * (1.0 + current.omega1.norm() + current.omega2.norm()) {
            return Err(AksError::FormulaMismatch {
                what: "annihilator membership after RK4 step",
                residual: drift,
            });
        }
        out.push((t_next, current.clone()));
    }
    Ok(out)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TimeDeviation {
    pub t: f64,
    pub deviation: f64,
}

/// Seconds of wall clock per unit of simulated time.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WallClock {
    pub factorization: f64,
    pub rk4: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ComparisonReport {
    pub sup_deviation: f64,
    pub per_time: Vec<TimeDeviation>,
    /// Least-squares slope of `log(deviation)` against `log(h)` over
    /// [`ORDER_LADDER`]; `None` when `t_end = 0`.
    pub order_estimate: Option<f64>,
    pub wall_clock: WallClock,
}

/// Pointwise deviation between the RK4 route and the factorization route on
/// the integrator grid.
pub fn deviation_profile(
    sys: &AksSystem,
    p0: &PhasePoint,
    t_end: f64,
    h: f64,
) -> Result<(Vec<TimeDeviation>, f64, f64)> {
    let ctx = sys.ctx();
    let start = Instant::now();
    let o0 = sys.l_map(p0)?;
    let rk = integrate_reduced(ctx, &o0, t_end, h)?;
    let rk_secs = start.elapsed().as_secs_f64();

    let ts: Vec<f64> = rk.iter().map(|(t, _)| *t).collect();
    let start = Instant::now();
    let exact = sys.reduced_flow_by_factorization(p0, &ts)?;
    let fact_secs = start.elapsed().as_secs_f64();

    let per_time = rk
        .iter()
        .zip(&exact)
        .map(|((t, o), e)| TimeDeviation {
            t: *t,
            deviation: o.distance(e),
        })
        .collect();
    Ok((per_time, fact_secs, rk_secs))
}

fn sup(per_time: &[TimeDeviation]) -> f64 {
    per_time.iter().map(|d| d.deviation).fold(0.0, f64::max)
}

/// Sup deviation over `[0, t_end]` for each step size in `hs`.
pub fn sup_deviations(sys: &AksSystem, p0: &PhasePoint, t_end: f64, hs: &[f64]) -> Result<Vec<f64>> {
    hs.iter()
        .map(|&h| deviation_profile(sys, p0, t_end, h).map(|(per_time, _, _)| sup(&per_time)))
        .collect()
}

/// Least-squares slope of `log(d)` against `log(h)`; `None` if fewer than
/// two points or a deviation is not positive.
pub fn fitted_order(hs: &[f64], deviations: &[f64]) -> Option<f64> {
    if hs.len() < 2 || hs.len() != deviations.len() || deviations.iter().any(|d| d.is_nan() || *d <= 0.0) {
        return None;
    }
    let pts: Vec<(f64, f64)> = hs.iter().zip(deviations).map(|(h, d)| (h.ln(), d.ln())).collect();
    let m = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / m;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / m;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    Some(sxy / sxx)
}

/// Least-squares slope of `log(sup deviation)` against `log(h)`.
pub fn order_estimate(sys: &AksSystem, p0: &PhasePoint, t_end: f64, hs: &[f64]) -> Result<Option<f64>> {
    if t_end == 0.0 || hs.len() < 2 {
        return Ok(None);
    }
    Ok(fitted_order(hs, &sup_deviations(sys, p0, t_end, hs)?))
}

/// Compare RK4 at step `h` with the factorization solution over `[0, t_end]`.
pub fn compare_trajectories(
    sys: &AksSystem,
    p0: &PhasePoint,
    t_end: f64,
    h: f64,
) -> Result<ComparisonReport> {
    let (per_time, fact_secs, rk_secs) = deviation_profile(sys, p0, t_end, h)?;
    let per_unit = |s: f64| if t_end > 0.0 { s / t_end } else { s };
    Ok(ComparisonReport {
        sup_deviation: sup(&per_time),
        per_time,
        order_estimate: order_estimate(sys, p0, t_end, &ORDER_LADDER)?,
        wall_clock: WallClock {
            factorization: per_unit(fact_secs),
            rk4: per_unit(rk_secs),
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::aks_flow::{gl_lu, toda, toda_with_lax};
    use nalgebra::DMatrix;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn gl_lu_system(n: usize, seed: u64) -> (AksSystem, PhasePoint) {
        gl_lu(n, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap()
    }

    #[test]
    fn field_vanishes_at_origin() {
        let (sys, _) = toda(3).unwrap();
        let (d1, d2) = reduced_vector_field(sys.ctx(), &OrbitPoint::zeros(3));
        assert_eq!(d1.norm() + d2.norm(), 0.0);
    }

    #[test]
    fn field_matches_derivative_of_factorization_flow() {
        let (sys, p0) = toda_with_lax(DMatrix::from_row_slice(2, 2, &[0.3, 0.8, 0.8, -0.3])).unwrap();
        let mut cases = vec![(sys, p0)];
        cases.push(gl_lu_system(2, 1));
        cases.push(gl_lu_system(3, 2));
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for (sys, _) in cases {
            let ctx = sys.ctx();
            for _ in 0..5 {
                let p = sys.random_level_set_point(&mut rng, 0.3).unwrap();
                let h = 1e-4;
                let traj = sys.reduced_flow_by_factorization(&p, &[-h, 0.0, h]).unwrap();
                let fd1 = (traj[2].omega1.rep() - traj[0].omega1.rep()) / (2.0 * h);
                let fd2 = (traj[2].omega2.rep() - traj[0].omega2.rep()) / (2.0 * h);
                let (d1, d2) = reduced_vector_field(ctx, &traj[1]);
                let err = (fd1 - d1.rep()).norm() + (fd2 - d2.rep()).norm();
                assert!(err < 1e-7, "{err:e}");
            }
        }
    }

    #[test]
    fn field_annihilates_its_hamiltonian() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for (sys, _) in [toda(3).unwrap(), gl_lu_system(3, 5)] {
            let ctx = sys.ctx();
            for _ in 0..5 {
                let o = sys.l_map(&sys.random_level_set_point(&mut rng, 0.3).unwrap()).unwrap();
                let v = reduced_vector_field(ctx, &o);
                let eps = 1e-5;
                let plus = sys.reduced_hamiltonian(&axpy(&o, eps, &v));
                let minus = sys.reduced_hamiltonian(&axpy(&o, -eps, &v));
                assert!(((plus - minus) / (2.0 * eps)).abs() <= 1e-8);
            }
        }
    }

    #[test]
    fn integration_from_origin_is_constant() {
        let (sys, _) = toda(3).unwrap();
        let traj = integrate_reduced(sys.ctx(), &OrbitPoint::zeros(3), 1.0, 0.1).unwrap();
        assert_eq!(traj.len(), 11);
        assert!(traj.iter().all(|(_, o)| o.omega1.norm() + o.omega2.norm() == 0.0));
    }

    #[test]
    fn time_grid_handles_uneven_division() {
        let ts = time_grid(1.0, 0.3).unwrap();
        assert_eq!(ts.len(), 5);
        assert_eq!(*ts.last().unwrap(), 1.0);
        assert_eq!(time_grid(0.0, 0.1).unwrap(), vec![0.0]);
        assert_eq!(time_grid(1.0, 1e-3).unwrap().len(), 1001);
        assert!(time_grid(1.0, 0.0).is_err());
        assert!(time_grid(-1.0, 0.1).is_err());
    }

    #[test]
    fn blowup_is_rejected() {
        let (sys, _) = gl_lu_system(2, 6);
        let ctx = sys.ctx();
        let huge = OrbitPoint {
            omega1: sys.mu().scale(1e9 / sys.mu().norm()),
            omega2: sys.nu().clone(),
        };
        assert!(matches!(
            integrate_reduced(ctx, &huge, 1.0, 0.1),
            Err(AksError::StepRejected { .. })
        ));
    }

    #[test]
    fn toda_sl3_rk4_agrees_with_factorization() {
        let (sys, p0) = toda(3).unwrap();
        let report = compare_trajectories(&sys, &p0, 1.0, 1e-3).unwrap();
        assert!(report.sup_deviation <= 1e-6, "{:e}", report.sup_deviation);
        let order = report.order_estimate.unwrap();
        assert!((3.7..=4.3).contains(&order), "order {order}");
        assert_eq!(report.per_time.len(), 1001);
    }

    #[test]
    fn gl_lu_rk4_agrees_with_factorization() {
        let (sys, p0) = gl_lu_system(3, 7);
        let report = compare_trajectories(&sys, &p0, 1.0, 1e-3).unwrap();
        assert!(report.sup_deviation <= 1e-6, "{:e}", report.sup_deviation);
    }

    #[test]
    fn zero_horizon_comparison() {
        let (sys, p0) = toda(3).unwrap();
        let report = compare_trajectories(&sys, &p0, 0.0, 1e-3).unwrap();
        assert_eq!(report.sup_deviation, 0.0);
        assert_eq!(report.order_estimate, None);
    }

    #[test]
    fn rk4_conserves_energy_and_spectrum_on_toda_sl3() {
        let (sys, p0) = toda(3).unwrap();
        let ctx = sys.ctx();
        let o0 = sys.l_map(&p0).unwrap();
        let h0 = sys.reduced_hamiltonian(&o0);
        let s0 = crate::aks_flow::spectral_invariants(ctx, &o0);
        for (_, o) in integrate_reduced(ctx, &o0, 1.0, 1e-3).unwrap() {
            assert!((sys.reduced_hamiltonian(&o) - h0).abs() <= 1e-9);
            let s = crate::aks_flow::spectral_invariants(ctx, &o);
            let drift = s.iter().zip(&s0).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
            assert!(drift <= 1e-7);
            assert!(o.membership_residual(ctx) <= 1e-12);
        }
    }
}
