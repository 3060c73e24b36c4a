//! Acceptance criteria, one PASS/FAIL line each. Runs without the libtest
//! harness so the lines are always printed.

use std::process::{Command, ExitCode};
use std::time::{Duration, Instant};

use aks_core::aks_flow::{self as presets, AksSystem, PhasePoint};
use aks_core::constraint_gnh;
use aks_core::factorization;
use aks_core::geometry_verify::{self as gv, FormSign};
use aks_core::reduced_dynamics;
use aks_core::{linalg, AlgebraKind, LieContext};
use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = Result<Vec<String>, String>;
type Criterion = (&'static str, fn() -> Outcome);

/// Collects named measurements against tolerances.
#[derive(Default)]
struct Tally {
    notes: Vec<String>,
    failures: Vec<String>,
}

impl Tally {
    fn at_most(&mut self, what: &str, value: f64, tol: f64) {
        let line = format!("{what} {value:.2e} (≤ {tol:e})");
        if value.is_finite() && value <= tol {
            self.notes.push(line);
        } else {
            self.failures.push(line);
        }
    }

    fn at_least(&mut self, what: &str, value: f64, tol: f64) {
        let line = format!("{what} {value:.2e} (≥ {tol:e})");
        if value >= tol {
            self.notes.push(line);
        } else {
            self.failures.push(line);
        }
    }

    fn holds(&mut self, what: &str, ok: bool) {
        if ok {
            self.notes.push(what.to_string());
        } else {
            self.failures.push(format!("not {what}"));
        }
    }

    fn finish(self) -> Outcome {
        if self.failures.is_empty() {
            Ok(self.notes)
        } else {
            Err(self.failures.join("; "))
        }
    }
}

fn err(e: impl std::fmt::Display) -> String {
    e.to_string()
}

fn rng(stream: u64) -> ChaCha8Rng {
    let mut r = ChaCha8Rng::seed_from_u64(0x5eed_acce);
    r.set_stream(stream);
    r
}

fn uniform(rng: &mut ChaCha8Rng, n: usize, scale: f64) -> DMatrix<f64> {
    DMatrix::from_fn(n, n, |_, _| rng.random_range(-scale..scale))
}

fn strict_lower(m: &DMatrix<f64>) -> DMatrix<f64> {
    DMatrix::from_fn(m.nrows(), m.ncols(), |i, j| if i > j { m[(i, j)] } else { 0.0 })
}

fn comm(x: &DMatrix<f64>, y: &DMatrix<f64>) -> DMatrix<f64> {
    x * y - y * x
}

/// Projection onto `a` written out entrywise for the two standard splittings.
fn explicit_project_a(ctx: &LieContext, x: &DMatrix<f64>) -> DMatrix<f64> {
    let l = strict_lower(x);
    match ctx.splitting().kind {
        aks_core::SplittingKind::LuGauss => l,
        _ => &l - l.transpose(),
    }
}

/// Exponential by scaling and squaring of a truncated Taylor series.
fn taylor_exp(x: &DMatrix<f64>) -> DMatrix<f64> {
    let n = x.nrows();
    let mut squarings = 0;
    let mut y = x.clone();
    while y.norm() > 0.1 {
        y /= 2.0;
        squarings += 1;
    }
    let mut sum = DMatrix::identity(n, n);
    let mut term = DMatrix::identity(n, n);
    for k in 1..20 {
        term = &term * &y / k as f64;
        sum += &term;
    }
    for _ in 0..squarings {
        sum = &sum * &sum;
    }
    sum
}

fn presets_under_test() -> Result<Vec<(&'static str, AksSystem, PhasePoint)>, String> {
    let (toda, toda_p) = presets::toda(3).map_err(err)?;
    let (gl, gl_p) = presets::gl_lu(2, &mut rng(99)).map_err(err)?;
    Ok(vec![("toda sl(3)", toda, toda_p), ("gl-lu gl(2)", gl, gl_p)])
}

fn level_set_points(sys: &AksSystem, p0: &PhasePoint, count: usize, rng: &mut ChaCha8Rng) -> Result<Vec<PhasePoint>, String> {
    let mut points = vec![p0.clone()];
    while points.len() < count {
        points.push(sys.random_level_set_point(rng, 0.5).map_err(err)?);
    }
    Ok(points)
}

fn structure_identities() -> Outcome {
    let mut t = Tally::default();
    let mut r = rng(1);
    for kind in [AlgebraKind::Gl, AlgebraKind::Sl] {
        for ctx in [LieContext::qr_iwasawa(3, kind), LieContext::lu_gauss(3, kind)] {
            let ctx = ctx.map_err(err)?;
            let label = format!("{:?} {:?}", kind, ctx.splitting().kind);
            let mut worst: f64 = 0.0;
            let mut ad_flat: f64 = 0.0;
            for _ in 0..1000 {
                let x = ctx.algebra_from_coords(&linalg::random_vector(&mut r, ctx.dim()));
                let y = ctx.algebra_from_coords(&linalg::random_vector(&mut r, ctx.dim()));
                let z = ctx.algebra_from_coords(&linalg::random_vector(&mut r, ctx.dim()));
                let phi = ctx.dual_from_coords(&linalg::random_vector(&mut r, ctx.dim()));
                let pa = ctx.project_a(&x);
                let pb = ctx.project_b(&x);
                worst = worst
                    .max((pa.rep() - explicit_project_a(&ctx, x.rep())).norm())
                    .max((pa.rep() + pb.rep() - x.rep()).norm())
                    .max((ctx.project_a(&pa).rep() - pa.rep()).norm())
                    .max(ctx.project_a(&pb).norm());
                // Annihilators, tested against the pairing directly.
                let a0 = ctx.project_a0(&phi);
                let b0 = ctx.project_b0(&phi);
                let ya = ctx.project_a(&y);
                let yb = ctx.project_b(&y);
                worst = worst
                    .max((a0.rep() + b0.rep() - phi.rep()).norm())
                    .max(ctx.eval(&a0, &ya).abs())
                    .max(ctx.eval(&b0, &yb).abs())
                    .max((ctx.eval(&phi, &y) - ctx.eval(&a0, &yb) - ctx.eval(&b0, &ya)).abs());
                // Invariance of tr(XY) under the bracket.
                let inv = (comm(z.rep(), x.rep()) * y.rep()).trace() + (x.rep() * comm(z.rep(), y.rep())).trace();
                worst = worst.max(inv.abs());
                worst = worst
                    .max((ctx.eval(&ctx.flat(&x), &y) - ctx.pairing_value(&x, &y)).abs())
                    .max((ctx.flat(&ctx.sharp(&phi)).rep() - phi.rep()).norm());
                // (ad♯_ξ φ)(η) = φ([η, ξ]).
                let coad = ctx.eval(&ctx.coad_ad(&z, &phi), &y) - ctx.eval(&phi, &ctx.bracket(&y, &z).map_err(err)?);
                worst = worst.max(coad.abs());
                ad_flat = ad_flat.max(ctx.coad_ad(&x, &ctx.flat(&x)).norm());
            }
            t.at_most(&format!("{label} identities"), worst, 1e-12);
            t.at_most(&format!("{label} ad♯_ξ ξ♭"), ad_flat, 1e-12);
        }
    }
    t.finish()
}

fn is_orthogonal(q: &DMatrix<f64>) -> f64 {
    (q.transpose() * q - DMatrix::identity(q.nrows(), q.nrows())).norm()
}

fn upper_defect(m: &DMatrix<f64>) -> f64 {
    strict_lower(m).norm()
}

fn factorization_roundtrip() -> Outcome {
    let mut t = Tally::default();
    let mut r = rng(2);
    let qr = LieContext::qr_iwasawa(3, AlgebraKind::Gl).map_err(err)?;
    let mut worst_qr: f64 = 0.0;
    let mut worst_member: f64 = 0.0;
    let mut newton_gap: f64 = 0.0;
    for k in 0..1000 {
        let g = qr.group(DMatrix::identity(3, 3) + uniform(&mut r, 3, 0.3)).map_err(err)?;
        let f = factorization::factorize(&qr, &g).map_err(err)?;
        worst_qr = worst_qr.max(f.residual(&g) / g.rep().norm());
        let diag_ok = (0..3).all(|i| f.b.rep()[(i, i)] > 0.0);
        worst_member = worst_member
            .max(is_orthogonal(f.a.rep()))
            .max(upper_defect(f.b.rep()))
            .max(if diag_ok { 0.0 } else { f64::INFINITY });
        if k % 10 == 0 {
            let nt = factorization::factorize_newton(&qr, &g, &(qr.identity(), qr.identity())).map_err(err)?;
            newton_gap = newton_gap.max((nt.a.rep() - f.a.rep()).norm() + (nt.b.rep() - f.b.rep()).norm());
        }
    }
    t.at_most("QR re-multiplication", worst_qr, 1e-10);
    t.at_most("QR subgroup membership", worst_member, 1e-10);

    // LU: build g = L·U so the unique factors are known in advance.
    let lu = LieContext::lu_gauss(3, AlgebraKind::Gl).map_err(err)?;
    let mut worst_lu: f64 = 0.0;
    let mut factor_gap: f64 = 0.0;
    for k in 0..1000 {
        let l = strict_lower(&uniform(&mut r, 3, 1.0)) + DMatrix::identity(3, 3);
        let mut u = uniform(&mut r, 3, 1.0);
        for i in 0..3 {
            for j in 0..i {
                u[(i, j)] = 0.0;
            }
            u[(i, i)] = u[(i, i)].signum() * (0.5 + u[(i, i)].abs());
        }
        let g = lu.group(&l * &u).map_err(err)?;
        let f = factorization::factorize(&lu, &g).map_err(err)?;
        let scale = g.rep().norm().max(1.0);
        worst_lu = worst_lu.max(f.residual(&g) / scale);
        factor_gap = factor_gap.max(((f.a.rep() - &l).norm() + (f.b.rep() - &u).norm()) / scale);
        if k % 10 == 0 {
            // Newton is a local method: compare it near the identity.
            let g = lu.group(DMatrix::identity(3, 3) + uniform(&mut r, 3, 0.3)).map_err(err)?;
            let f = factorization::factorize(&lu, &g).map_err(err)?;
            let nt = factorization::factorize_newton(&lu, &g, &(lu.identity(), lu.identity())).map_err(err)?;
            newton_gap = newton_gap.max((nt.a.rep() - f.a.rep()).norm() + (nt.b.rep() - f.b.rep()).norm());
        }
    }
    t.at_most("LU re-multiplication", worst_lu, 1e-10);
    t.at_most("LU factors vs generating L, U", factor_gap, 1e-10);
    t.at_most("Newton vs closed forms", newton_gap, 1e-9);
    t.finish()
}

fn conservation() -> Outcome {
    let mut t = Tally::default();
    let times: Vec<f64> = (0..200).map(|k| 5.0 * k as f64 / 199.0).collect();
    for (name, sys, p0) in presets_under_test()? {
        let ctx = sys.ctx();
        let (j1, j2) = sys.momentum_map(&p0);
        let h0 = sys.hamiltonian(&p0);
        let s = ctx.sharp(&p0.sigma);
        let mut drift: f64 = 0.0;
        let mut flow_gap: f64 = 0.0;
        for &time in &times {
            let p = sys.unreduced_flow(&p0, time);
            let (k1, k2) = sys.momentum_map(&p);
            drift = drift
                .max((k1.rep() - j1.rep()).norm())
                .max((k2.rep() - j2.rep()).norm())
                .max((sys.hamiltonian(&p) - h0).abs());
            let g = p0.g.rep() * taylor_exp(&(s.rep() * time));
            flow_gap = flow_gap.max((p.g.rep() - &g).norm() / g.norm());
        }
        t.at_most(&format!("{name} drift of J and H"), drift, 1e-9);
        t.at_most(&format!("{name} flow vs g·exp(tσ♯)"), flow_gap, 1e-9);
        // H = ½ tr(S²) for the trace form.
        t.at_most(&format!("{name} H at seed"), (h0 - 0.5 * (s.rep() * s.rep()).trace()).abs(), 1e-12);
    }
    t.finish()
}

fn dual_route() -> Outcome {
    let mut t = Tally::default();
    let (sys, p0) = presets::toda(3).map_err(err)?;
    let report = reduced_dynamics::compare_trajectories(&sys, &p0, 1.0, 1e-3).map_err(err)?;
    t.at_most("sup deviation at h = 1e-3", report.sup_deviation, 1e-6);
    let order = report.order_estimate.unwrap_or(f64::NAN);
    t.holds(&format!("order {order:.3} in [3.7, 4.3]"), (3.7..=4.3).contains(&order));
    t.finish()
}

fn isospectrality() -> Outcome {
    let mut t = Tally::default();
    let (sys, p0) = presets::toda(3).map_err(err)?;
    let times: Vec<f64> = (0..200).map(|k| 5.0 * k as f64 / 199.0).collect();
    let traj = sys.reduced_flow_by_factorization(&p0, &times).map_err(err)?;
    let reference = presets::lax_spectrum(sys.ctx(), &traj[0]);
    let drift = traj
        .iter()
        .map(|o| linalg::spectral_distance(&presets::lax_spectrum(sys.ctx(), o), &reference))
        .fold(0.0, f64::max);
    t.at_most("toda sl(3) spectral drift", drift, 1e-8);

    let mut worst: f64 = 0.0;
    for (a, b) in [(0.0, 1.0), (0.7, -0.4), (-1.3, 2.1), (2.0, 0.05)] {
        let (sys, p0) = presets::toda_with_lax(DMatrix::from_row_slice(2, 2, &[a, b, b, -a])).map_err(err)?;
        let r = f64::hypot(a, b);
        // cond(g(t)) grows like exp(2·r·t); stay where the factors are well conditioned.
        let times: Vec<f64> = (0..=40).map(|k| 0.05 * k as f64).collect();
        for o in sys.reduced_flow_by_factorization(&p0, &times).map_err(err)? {
            let l = o.lax(sys.ctx());
            let m = l.rep();
            // Closed-form 2×2 eigenvalues of a traceless matrix.
            let closed = (-(m[(0, 0)] * m[(1, 1)] - m[(0, 1)] * m[(1, 0)])).sqrt();
            let spec = presets::lax_spectrum(sys.ctx(), &o);
            let mut re: Vec<f64> = spec.iter().map(|e| e.0).collect();
            re.sort_by(f64::total_cmp);
            worst = worst
                .max((re[0] + r).abs())
                .max((re[1] - r).abs())
                .max((closed - r).abs())
                .max(spec.iter().map(|e| e.1.abs()).fold(0.0, f64::max));
        }
    }
    t.at_most("toda sl(2) eigenvalues vs ±√(a²+b²)", worst, 1e-10);
    t.finish()
}

fn pullback() -> Outcome {
    let mut t = Tally::default();
    for (k, (name, sys, p0)) in presets_under_test()?.into_iter().enumerate() {
        let mut r = rng(60 + k as u64);
        let points = level_set_points(&sys, &p0, 20, &mut r)?;
        let mut worst: f64 = 0.0;
        let mut flipped: f64 = f64::INFINITY;
        for p in &points {
            worst = worst.max(gv::pullback_check(&sys, p, 100, &mut r, FormSign::Difference).map_err(err)?);
        }
        for p in &points {
            flipped = flipped.min(gv::pullback_check(&sys, p, 100, &mut r, FormSign::Sum).map_err(err)?);
        }
        t.at_most(&format!("{name} |i*ω − M*ω_μν|"), worst, 1e-9);
        t.at_least(&format!("{name} sign-flip residual, weakest point"), flipped, 1e-2);
    }
    t.finish()
}

fn gnh_cascade() -> Outcome {
    let mut t = Tally::default();
    for (k, (name, sys, _)) in presets_under_test()?.into_iter().enumerate() {
        let mut r = rng(70 + k as u64);
        let ctx = sys.ctx();
        let d = ctx.dim();
        let mut samples = Vec::new();
        for _ in 0..10 {
            samples.push(constraint_gnh::sample_secondary(&sys, &mut r, 0.5).map_err(err)?);
        }
        for _ in 0..5 {
            samples.push(constraint_gnh::sample_primary(&sys, &mut r, 0.5).map_err(err)?);
        }
        // ω₀ kernel dimension straight from the Gram matrix.
        let basis = constraint_gnh::tangent_basis(ctx);
        let mut direct_kernel = true;
        for l in &samples {
            let w = constraint_gnh::omega0_matrix(ctx, l, &basis);
            direct_kernel &= basis.len() - linalg::rank(&w, 1e-10) == 2 * d;
        }
        t.holds(&format!("{name} rank deficiency of ω₀ is {}", 2 * d), direct_kernel);

        let report = constraint_gnh::run_gnh(&sys, &samples, Some(&mut r));
        let kernel_ok = report.samples.iter().all(|s| s.kernel_dim == 2 * d);
        let leak = report.samples.iter().map(|s| s.kernel_leak).fold(0.0, f64::max);
        let perp_ok = report
            .samples
            .iter()
            .filter_map(|s| s.primary_audit.as_ref())
            .all(|a| a.perp == 3 * d);
        let audited = report.samples.iter().filter(|s| s.primary_audit.is_some()).count();
        let fd = report
            .samples
            .iter()
            .map(|s| s.fd.as_ref().map_or(f64::INFINITY, |f| f.stability_error))
            .fold(0.0, f64::max);
        let secondary: Vec<_> = report.samples.iter().filter(|s| s.on_secondary).collect();
        let stability = secondary.iter().map(|s| s.max_stability).fold(0.0, f64::max);
        t.holds(&format!("{name} kernel dimension {}", 2 * d), kernel_ok);
        t.at_most(&format!("{name} kernel ξ, δσ components"), leak, 1e-10);
        t.holds(
            &format!("{name} primary complement dimension {} on {audited} samples", 3 * d),
            perp_ok && audited > 0,
        );
        t.at_most(&format!("{name} stability closed form vs central difference"), fd, 1e-6);
        t.holds(&format!("{name} {} secondary samples", secondary.len()), secondary.len() == 10);
        t.at_most(&format!("{name} stability on secondary surface"), stability, 1e-9);
        t.holds(&format!("{name} cascade terminates ({})", report.verdict), report.terminated);
    }
    t.finish()
}

fn kernel_directions() -> Outcome {
    let mut t = Tally::default();
    for (k, (name, sys, p0)) in presets_under_test()?.into_iter().enumerate() {
        let mut r = rng(80 + k as u64);
        let mut tangency: f64 = 0.0;
        let mut contraction: f64 = 0.0;
        let mut lifted: f64 = 0.0;
        let mut dims = true;
        for p in level_set_points(&sys, &p0, 20, &mut r)? {
            let report = gv::kernel_report(&sys, &p).map_err(err)?;
            tangency = tangency.max(report.max_tangency);
            contraction = contraction.max(report.max_contraction);
            dims &= report.kernel_dim == report.expected_kernel_dim;
            lifted = lifted.max(gv::lifted_action_residual(&sys, &p, 1e-5));
        }
        t.at_most(&format!("{name} tangency of X(κ,ω)"), tangency, 1e-9);
        t.at_most(&format!("{name} ω-orthogonality of X(κ,ω)"), contraction, 1e-9);
        t.holds(&format!("{name} kernel spanned by X(κ,ω)"), dims);
        t.at_most(&format!("{name} X(κ,ω) vs lifted-action generator"), lifted, 1e-6);
    }
    t.finish()
}

fn hamiltonian_descent() -> Outcome {
    let mut t = Tally::default();
    for (k, (name, sys, _)) in presets_under_test()?.into_iter().enumerate() {
        let mut r = rng(90 + k as u64);
        let mut worst: f64 = 0.0;
        for _ in 0..200 {
            let p = sys.random_level_set_point(&mut r, 0.5).map_err(err)?;
            let o = sys.l_map(&p).map_err(err)?;
            worst = worst.max((sys.reduced_hamiltonian(&o) - sys.hamiltonian(&p)).abs());
        }
        t.at_most(&format!("{name} |H_μν∘L − H|"), worst, 1e-10);
    }
    t.finish()
}

fn end_to_end_cli() -> Outcome {
    let mut t = Tally::default();
    let dir = std::env::temp_dir();
    let run = || -> Result<(std::process::Output, Duration), String> {
        let start = Instant::now();
        let out = Command::new(env!("CARGO_BIN_EXE_aks-flow"))
            .args(["check", "--preset", "toda", "--n", "3", "--verify-fd"])
            .current_dir(&dir)
            .output()
            .map_err(err)?;
        Ok((out, start.elapsed()))
    };
    let (first, elapsed) = run()?;
    let (second, _) = run()?;
    t.holds("exit status 0", first.status.code() == Some(0));
    t.at_most("wall clock seconds", elapsed.as_secs_f64(), 60.0);
    let report: serde_json::Value = serde_json::from_slice(&first.stdout).map_err(err)?;
    let checks = report["battery"]["checks"].as_array().cloned().unwrap_or_default();
    let passing = checks.iter().filter(|c| c["status"] == "pass").count();
    t.holds(
        &format!("{passing}/{} checks pass", checks.len()),
        !checks.is_empty() && passing == checks.len(),
    );
    t.holds("identical reports for a fixed seed", first.stdout == second.stdout);
    t.finish()
}

fn main() -> ExitCode {
    let criteria: [Criterion; 10] = [
        ("structure identities", structure_identities),
        ("factorization", factorization_roundtrip),
        ("conservation along the unreduced flow", conservation),
        ("factorization vs integration", dual_route),
        ("isospectrality", isospectrality),
        ("pullback of the orbit form", pullback),
        ("constraint cascade", gnh_cascade),
        ("kernel directions", kernel_directions),
        ("hamiltonian descent", hamiltonian_descent),
        ("end-to-end cli", end_to_end_cli),
    ];
    let mut failed = 0;
    for (k, (name, run)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let outcome = run();
        let secs = start.elapsed().as_secs_f64();
        match outcome {
            Ok(notes) => println!("PASS {:>2} {name} [{secs:.1}s]: {}", k + 1, notes.join("; ")),
            Err(why) => {
                failed += 1;
                println!("FAIL {:>2} {name} [{secs:.1}s]: {why}", k + 1);
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
