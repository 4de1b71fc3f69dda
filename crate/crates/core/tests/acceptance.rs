//! Acceptance suite: one line per criterion, nonzero exit on any failure.

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::sync::Arc;
use std::time::Instant;

use nalgebra::{DVector, Matrix3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use wg_divcurl::analysis::{
    convergence_rate, error_functions, infsup_function, infsup_rhs, norm_bar1, random_pressure, random_u0,
    residual_functionals, ERROR_NAMES,
};
use wg_divcurl::assembly::{assemble, Discretization, ProblemInstance};
use wg_divcurl::mesh::{Point, PolyMesh};
use wg_divcurl::polybasis::{project_qh, Space};
use wg_divcurl::solver::{solve, SolverOptions};
use wg_divcurl::study::{run_case, RunOptions};
use wg_divcurl::verification::{
    catalog, check_case_derivatives, check_compatibility, ExactCase, MeshFamily, PolyExact, ProblemKind, TrigCube,
    CASE_NAMES,
};
use wg_divcurl::weakops::Coefficients;

type Outcome = Result<String, String>;

fn ensure(ok: bool, msg: impl Into<String>) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg.into())
    }
}

fn e2s<E: std::fmt::Display>(e: E) -> String {
    e.to_string()
}

fn random_spd(rng: &mut ChaCha8Rng) -> Matrix3<f64> {
    let l = Matrix3::from_fn(|_, _| rng.random_range(-1.0..1.0));
    l * l.transpose() + Matrix3::identity() * 0.5
}

fn polynomial_exactness() -> Outcome {
    let start = Instant::now();
    let case = catalog("poly-exact", 1).map_err(e2s)?;
    let mut worst = 0.0f64;
    for family in [MeshFamily::Tet, MeshFamily::Hex] {
        let mesh = family.build(2).map_err(e2s)?;
        let run = run_case(&case, &mesh, &RunOptions::default()).map_err(e2s)?;
        for (i, e) in run.report.relative().iter().enumerate() {
            worst = worst.max(*e);
            ensure(*e <= 1e-8, format!("{family}: err_{} = {e:.3e} relative", ERROR_NAMES[i]))?;
        }
    }
    let secs = start.elapsed().as_secs_f64();
    ensure(secs < 10.0, format!("took {secs:.1} s"))?;
    Ok(format!("max relative error {worst:.2e}, {secs:.2} s"))
}

fn convergence_rates() -> Outcome {
    let start = Instant::now();
    let case = catalog("trig-cube", 1).map_err(e2s)?;
    let mut reports = Vec::new();
    for n in [2, 4, 8] {
        let mesh = MeshFamily::Tet.build(n).map_err(e2s)?;
        reports.push(run_case(&case, &mesh, &RunOptions::default()).map_err(e2s)?.report);
    }
    let bands = [(0, 0.85, 1.3), (2, 0.85, 1.6), (3, 1.8, 2.4), (4, 1.8, 2.4)];
    let mut line = String::new();
    for (i, lo, hi) in bands {
        let pairs: Vec<(f64, f64)> = reports.iter().map(|r| (r.h, r.errors[i])).collect();
        let all = convergence_rate(&pairs).map_err(e2s)?;
        let last = convergence_rate(&pairs[1..]).map_err(e2s)?;
        line.push_str(&format!("{}={all:.3} (last {last:.3}) ", ERROR_NAMES[i]));
        ensure((lo..=hi).contains(&all), format!("rate of {} = {all:.3} outside [{lo}, {hi}]", ERROR_NAMES[i]))?;
    }
    let secs = start.elapsed().as_secs_f64();
    ensure(secs < 300.0, format!("took {secs:.1} s"))?;
    Ok(format!("{line}, {secs:.1} s"))
}

fn commutativity() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(31);
    let mut worst = 0.0f64;
    let mut count = 0;
    for family in [MeshFamily::Tet, MeshFamily::Hex] {
        let mesh = family.build(2).map_err(e2s)?;
        for k in [1, 2] {
            let space = Space::new(&mesh, k).map_err(e2s)?;
            let np = space.dim_p();
            for _ in 0..20 {
                let mu = random_spd(&mut rng);
                let field = PolyExact::new(k + 1, rng.random());
                let coeffs = Coefficients { mu: vec![mu; mesh.num_cells()], kappa: vec![Matrix3::identity(); mesh.num_cells()] };
                let disc = Discretization::with_space(Space::new(&mesh, k).map_err(e2s)?, coeffs).map_err(e2s)?;
                let qhu = project_qh(&disc.space, &disc.coeffs.mu, &|x: &Point| field.u(x)).map_err(e2s)?;
                for c in 0..mesh.num_cells() {
                    let local = qhu.local(&mesh, c);
                    let div = disc.ops[c].weak_divergence(&local);
                    let curl = disc.ops[c].weak_curl(&local);
                    let pdiv = space.project_cell(c, np, |x| (mu * field.grad_u(x)).trace()).map_err(e2s)?;
                    let mut pcurl = DVector::zeros(3 * np);
                    for m in 0..3 {
                        let p = space.project_cell(c, np, |x| field.curl_u(x)[m]).map_err(e2s)?;
                        pcurl.rows_mut(m * np, np).copy_from(&p);
                    }
                    let scale = 1.0 + pdiv.amax().max(pcurl.amax());
                    let err = (div - pdiv).amax().max((curl - pcurl).amax()) / scale;
                    worst = worst.max(err);
                }
                count += 1;
            }
        }
    }
    ensure(worst <= 1e-11, format!("max coefficient mismatch {worst:.3e}"))?;
    Ok(format!("{count} fields, max relative mismatch {worst:.2e}"))
}

fn infsup_identity() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(41);
    let meshes = [("tet", MeshFamily::Tet.build(2)), ("hex", MeshFamily::Hex.build(2)), ("hollow", MeshFamily::Hollow.build(3))];
    let mut worst = 0.0f64;
    for (name, mesh) in meshes {
        let mesh = mesh.map_err(e2s)?;
        for k in [1, 2] {
            let coeffs = Coefficients::from_fn(&mesh, |x| {
                let s = if x.x < 0.5 { 1.0 } else { 2.5 };
                (Matrix3::identity() * s, Matrix3::identity())
            })
            .map_err(e2s)?;
            let disc = Discretization::new(&mesh, k, coeffs).map_err(e2s)?;
            for _ in 0..20 {
                let q = random_pressure(&disc, &mut rng);
                let v = infsup_function(&disc, &q).map_err(e2s)?;
                let lhs = disc.apply_b(&v, &q).map_err(e2s)?;
                let rhs = infsup_rhs(&disc, &q).map_err(e2s)?;
                let rel = (lhs - rhs).abs() / rhs.abs();
                worst = worst.max(rel);
                ensure(rel <= 1e-12, format!("{name}, k={k}: b(v_q,q) = {lhs:.15e} vs {rhs:.15e}"))?;
            }
        }
    }
    Ok(format!("max relative defect {worst:.2e}"))
}

fn error_equation() -> Outcome {
    let k = 1;
    let case: Arc<dyn ExactCase> = Arc::new(TrigCube);
    let mesh = MeshFamily::Tet.build(4).map_err(e2s)?;
    let opts = RunOptions { k, data_degree: Some(2 * k + 11), ..Default::default() };
    let run = run_case(&case, &mesh, &opts).map_err(e2s)?;
    let disc = &run.disc;
    let (e, eps) = error_functions(disc, case.as_ref(), &run.solution.u, &run.solution.p).map_err(e2s)?;
    let e_norm = norm_bar1(disc, &e).map_err(e2s)?;
    let mut rng = ChaCha8Rng::seed_from_u64(51);
    let mut worst = 0.0f64;
    for _ in 0..10 {
        let v = random_u0(disc, &mut rng);
        let lhs = disc.apply_a(&e, &v).map_err(e2s)? + disc.apply_b(&v, &eps).map_err(e2s)?;
        let phi = residual_functionals(disc, case.as_ref(), &v).map_err(e2s)?.phi;
        let bound = 1e-9 * (e_norm + 1.0) * norm_bar1(disc, &v).map_err(e2s)?;
        let defect = (lhs - phi).abs();
        worst = worst.max(defect / bound * 1e-9);
        ensure(defect <= bound, format!("a(e,v)+b(v,eps) = {lhs:.12e}, phi(v) = {phi:.12e}"))?;
    }
    let mut worst_b = 0.0f64;
    for _ in 0..10 {
        let q = random_pressure(disc, &mut rng);
        let b = disc.apply_b(&e, &q).map_err(e2s)?.abs();
        worst_b = worst_b.max(b);
        ensure(b <= 1e-10, format!("|b(e,q)| = {b:.3e}"))?;
    }
    Ok(format!("max scaled defect {worst:.2e}, max |b(e,q)| {worst_b:.2e}"))
}

fn well_posedness() -> Outcome {
    let meshes = [("tet", MeshFamily::Tet.build(2)), ("hex", MeshFamily::Hex.build(2)), ("hollow", MeshFamily::Hollow.build(3))];
    let mut worst = 0.0f64;
    for (name, mesh) in meshes {
        let mesh: PolyMesh = mesh.map_err(e2s)?;
        for k in [1, 2] {
            let instance = ProblemInstance::homogeneous(&mesh);
            let disc = Discretization::new(&mesh, k, instance.coeffs.clone()).map_err(e2s)?;
            let system = assemble(&disc, &instance).map_err(e2s)?;
            let sol = solve(&system, &SolverOptions::default()).map_err(e2s)?;
            let norm = (sol.u.to_vec().iter().chain(&sol.p.coeffs).chain(&sol.lambda).map(|x| x * x).sum::<f64>()).sqrt();
            worst = worst.max(norm);
            ensure(norm <= 1e-10, format!("{name}, k={k}: |x| = {norm:.3e}"))?;
            // the zero solution is only meaningful if the operator is invertible
            let mut rng = ChaCha8Rng::seed_from_u64(61);
            let rhs: Vec<f64> = (0..system.layout.size()).map(|_| rng.random_range(-1.0..1.0)).collect();
            let (_, stats) = wg_divcurl::solver::solve_linear(&system.matrix, &rhs, &SolverOptions::default()).map_err(e2s)?;
            ensure(stats.residual <= 1e-10, format!("{name}, k={k}: random right-hand side residual {:.3e}", stats.residual))?;
            if name == "hollow" {
                ensure(sol.lambda.len() == 1, "hollow cube must carry one flux multiplier")?;
            }
        }
    }
    Ok(format!("max solution norm {worst:.2e}"))
}

fn projection_rates() -> Outcome {
    let u = |x: &Point| TrigCube.u(x);
    let mut line = String::new();
    for family in [MeshFamily::Tet, MeshFamily::Hex] {
        for k in [1, 2] {
            let mut pairs = Vec::new();
            for n in [2, 4, 8] {
                let mesh = family.build(n).map_err(e2s)?;
                let space = Space::with_data_degree(&mesh, k, 2 * k + 6).map_err(e2s)?;
                let qhu = project_qh(&space, &vec![Matrix3::identity(); mesh.num_cells()], &u).map_err(e2s)?;
                let mut err2 = 0.0;
                for c in 0..mesh.num_cells() {
                    let rule = space.cell_data_rule(c).map_err(e2s)?;
                    err2 += rule.integrate(|x| (qhu.interior_value(&space, c, x) - u(x)).norm_squared());
                }
                pairs.push((mesh.h(), err2.sqrt()));
            }
            let rate = convergence_rate(&pairs).map_err(e2s)?;
            line.push_str(&format!("{family} k={k}: {rate:.3}; "));
            let target = (k + 1) as f64;
            ensure((rate - target).abs() <= 0.2, format!("{family}, k={k}: rate {rate:.3}, expected {target} ± 0.2"))?;
        }
    }
    Ok(line)
}

fn compatibility() -> Outcome {
    struct Corrupted;
    impl ExactCase for Corrupted {
        fn name(&self) -> String {
            "corrupted".into()
        }
        fn u(&self, x: &Point) -> Point {
            TrigCube.u(x)
        }
        fn grad_u(&self, x: &Point) -> Matrix3<f64> {
            TrigCube.grad_u(x)
        }
        fn p(&self, x: &Point) -> f64 {
            TrigCube.p(x)
        }
        fn grad_p(&self, x: &Point) -> Point {
            TrigCube.grad_p(x)
        }
        fn curl_kappa_curl_u(&self, x: &Point) -> Point {
            TrigCube.curl_kappa_curl_u(x)
        }
        fn f(&self, x: &Point) -> f64 {
            TrigCube.f(x) + 1.0 + x.x
        }
    }
    for name in CASE_NAMES {
        let case = catalog(name, 2).map_err(e2s)?;
        let oracle = check_case_derivatives(case.as_ref());
        ensure(oracle.passed(), format!("{name}: derivative oracle failed: {:?}", oracle.mismatches.first()))?;
        let n = if case.family() == MeshFamily::Hollow { 3 } else { 2 };
        let mesh = case.family().build(n).map_err(e2s)?;
        for kind in [ProblemKind::Model, ProblemKind::DivCurlNormal, ProblemKind::DivCurlTangential] {
            let r = check_compatibility(case.as_ref(), &mesh, kind).map_err(e2s)?;
            ensure(r.passed(), format!("{name} ({kind:?}): {:?}", r.violations))?;
        }
    }
    let mesh = MeshFamily::Tet.build(2).map_err(e2s)?;
    let r = check_compatibility(&Corrupted, &mesh, ProblemKind::DivCurlNormal).map_err(e2s)?;
    let v = r.violations.iter().find(|v| v.condition.starts_with("(f,1)")).ok_or("corrupted source not reported")?;
    ensure((v.magnitude - 1.5).abs() < 1e-10, format!("violation magnitude {} (expected 1.5)", v.magnitude))?;
    Ok(format!("{} cases consistent; corrupted source flagged with magnitude {:.3}", CASE_NAMES.len(), v.magnitude))
}

fn heterogeneous_media() -> Outcome {
    let case = catalog("two-material", 1).map_err(e2s)?;
    let mut errs: Vec<f64> = Vec::new();
    for n in [2, 4, 8] {
        let mesh = MeshFamily::Hex.build(n).map_err(e2s)?;
        let run = run_case(&case, &mesh, &RunOptions::default()).map_err(e2s)?;
        ensure(run.report.residual <= 1e-10, format!("n={n}: residual {:.3e}", run.report.residual))?;
        errs.push(run.report.errors[0]);
    }
    ensure(errs.windows(2).all(|w| w[1] < w[0]), format!("bar1 errors not decreasing: {errs:?}"))?;
    Ok(format!("bar1 errors {:.3e} > {:.3e} > {:.3e}", errs[0], errs[1], errs[2]))
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 9] = [
        ("polynomial exactness", polynomial_exactness),
        ("convergence rates", convergence_rates),
        ("commutativity", commutativity),
        ("inf-sup identity", infsup_identity),
        ("error equations", error_equation),
        ("well-posedness", well_posedness),
        ("projection rates", projection_rates),
        ("compatibility checks", compatibility),
        ("heterogeneous media", heterogeneous_media),
    ];
    let mut failed = 0;
    for (i, (name, f)) in criteria.iter().enumerate() {
        let outcome = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|p| {
            let msg = p.downcast_ref::<String>().cloned().or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()));
            Err(format!("panicked: {}", msg.unwrap_or_default()))
        });
        match outcome {
            Ok(detail) => println!("criterion {}: PASS  {name}: {detail}", i + 1),
            Err(detail) => {
                failed += 1;
                println!("criterion {}: FAIL  {name}: {detail}", i + 1);
            }
        }
    }
    if failed > 0 {
        println!("{failed} criteria failed");
        std::process::exit(1);
    }
    println!("all criteria passed");
}
