use std::sync::Arc;

use nalgebra::{DVector, Matrix3};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use wg_divcurl::analysis::{norm_bar, norm_bar1, random_pressure, random_u0, error_functions};
use wg_divcurl::assembly::{assemble, Discretization, ProblemInstance};
use wg_divcurl::mesh::{build_cube_hex_mesh, build_cube_tet_mesh, build_hollow_cube_mesh, FaceSpec, Point, PolyMesh};
use wg_divcurl::polybasis::project_qh;
use wg_divcurl::solver::{solve, solve_linear, SolverOptions};
use wg_divcurl::study::{run_case, RunOptions};
use wg_divcurl::verification::{catalog, ExactCase, PolyExact};
use wg_divcurl::weakops::Coefficients;

/// Moves every interior vertex of `mesh` by up to `amount` in each coordinate.
fn jiggle(mesh: &PolyMesh, amount: f64, seed: u64) -> PolyMesh {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut on_boundary = vec![false; mesh.vertices().len()];
    for f in mesh.boundary_faces() {
        for &v in &mesh.face(f).vertices {
            on_boundary[v] = true;
        }
    }
    let verts = mesh
        .vertices()
        .iter()
        .zip(&on_boundary)
        .map(|(p, b)| if *b { *p } else { p + Point::from_fn(|_, _| rng.random_range(-amount..amount)) })
        .collect();
    let faces = mesh.faces().iter().map(|f| FaceSpec { vertices: f.vertices.clone(), tag: f.tag }).collect();
    let cells = mesh.cells().iter().map(|c| c.faces.iter().map(|cf| (cf.face, cf.sign)).collect()).collect();
    PolyMesh::new(verts, faces, cells).unwrap()
}

fn random_spd(rng: &mut ChaCha8Rng) -> Matrix3<f64> {
    let l = Matrix3::from_fn(|_, _| rng.random_range(-1.0..1.0));
    l * l.transpose() + Matrix3::identity() * 0.3
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    #[test]
    fn constant_field_has_zero_net_flux(seed in 0u64..1000, n in 1usize..4) {
        let mesh = jiggle(&build_cube_tet_mesh(n).unwrap(), 0.1 / n as f64, seed);
        for c in mesh.cells() {
            let flux: Point = c.faces.iter().map(|cf| mesh.face(cf.face).normal * (cf.sign * mesh.face(cf.face).area)).sum();
            let scale = c.faces.iter().map(|cf| mesh.face(cf.face).area).sum::<f64>();
            prop_assert!(flux.norm() <= 1e-12 * scale);
        }
        for f in mesh.interior_faces() {
            let r = mesh.face_references(f);
            prop_assert_eq!(r.len(), 2);
            prop_assert_eq!(r[0].1, -r[1].1);
        }
    }

    #[test]
    fn commutativity_with_cellwise_mu(seed in 0u64..1000, k in 1usize..3, hex in proptest::bool::ANY) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let base = if hex { build_cube_hex_mesh(2, None).unwrap() } else { build_cube_tet_mesh(2).unwrap() };
        let mesh = if hex { base } else { jiggle(&base, 0.05, seed) };
        let (ma, mb) = (random_spd(&mut rng), random_spd(&mut rng));
        let pick = |x: &Point| if x.x + 0.3 * x.y < 0.6 { ma } else { mb };
        let coeffs = Coefficients::from_fn(&mesh, |x| (pick(x), Matrix3::identity())).unwrap();
        let disc = Discretization::new(&mesh, k, coeffs).unwrap();
        let field = PolyExact::new(k + 1, seed);
        let u = |x: &Point| field.u(x);
        let qa = project_qh(&disc.space, &vec![ma; mesh.num_cells()], &u).unwrap();
        let qb = project_qh(&disc.space, &vec![mb; mesh.num_cells()], &u).unwrap();
        let np = disc.space.dim_p();
        for c in 0..mesh.num_cells() {
            let mu = disc.coeffs.mu[c];
            let local = if mu == ma { qa.local(&mesh, c) } else { qb.local(&mesh, c) };
            let div = disc.ops[c].weak_divergence(&local);
            let pdiv = disc.space.project_cell(c, np, |x| (mu * field.grad_u(x)).trace()).unwrap();
            let curl = disc.ops[c].weak_curl(&local);
            let mut pcurl = DVector::zeros(3 * np);
            for m in 0..3 {
                pcurl.rows_mut(m * np, np).copy_from(&disc.space.project_cell(c, np, |x| field.curl_u(x)[m]).unwrap());
            }
            let scale = 1.0 + pdiv.amax().max(pcurl.amax());
            prop_assert!((div - pdiv).amax() <= 1e-11 * scale);
            prop_assert!((curl - pcurl).amax() <= 1e-11 * scale);
        }
    }

    #[test]
    fn operators_are_linear_and_local(seed in 0u64..1000) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mesh = build_cube_hex_mesh(2, None).unwrap();
        let disc = Discretization::new(&mesh, 2, Coefficients::identity(mesh.num_cells())).unwrap();
        let v = random_u0(&disc, &mut rng);
        let w = random_u0(&disc, &mut rng);
        let (a, b) = (rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0));
        let mut comb = v.clone();
        comb.interior.iter_mut().zip(&w.interior).for_each(|(x, y)| *x = a * *x + b * y);
        comb.faces.iter_mut().zip(&w.faces).for_each(|(x, y)| *x = a * *x + b * y);
        let op = &disc.ops[0];
        let lhs = op.weak_curl(&comb.local(&mesh, 0));
        let rhs = op.weak_curl(&v.local(&mesh, 0)) * a + op.weak_curl(&w.local(&mesh, 0)) * b;
        prop_assert!((lhs - &rhs).amax() <= 1e-13 * (1.0 + rhs.amax()));
        // faces not on cell 0 do not affect its operators
        let before = op.weak_divergence(&v.local(&mesh, 0));
        let mut far = v.clone();
        let own: Vec<usize> = mesh.cell(0).faces.iter().map(|cf| cf.face).collect();
        for f in (0..mesh.num_faces()).filter(|f| !own.contains(f)) {
            far.face_block_mut(f).iter_mut().for_each(|x| *x += 1.0);
        }
        prop_assert_eq!(before, op.weak_divergence(&far.local(&mesh, 0)));
    }

    #[test]
    fn energy_norm_is_the_a_form(seed in 0u64..1000) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mesh = build_hollow_cube_mesh(3).unwrap();
        let coeffs = Coefficients::from_fn(&mesh, |x| (Matrix3::identity() * (1.0 + x.x), Matrix3::identity() * (2.0 - x.y))).unwrap();
        let disc = Discretization::new(&mesh, 1, coeffs).unwrap();
        let v = random_u0(&disc, &mut rng);
        let a = disc.apply_a(&v, &v).unwrap();
        prop_assert_eq!(norm_bar(&disc, &v).unwrap(), a.sqrt());
        let mut kappa_one = disc.coeffs.clone();
        kappa_one.kappa = vec![Matrix3::identity(); mesh.num_cells()];
        let d1 = Discretization::new(&mesh, 1, kappa_one).unwrap();
        prop_assert!(norm_bar(&d1, &v).unwrap() <= norm_bar1(&d1, &v).unwrap() * (1.0 + 1e-14));
    }

    #[test]
    fn boundary_data_only_changes_the_right_hand_side(seed in 0u64..1000) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mesh = build_cube_tet_mesh(1).unwrap();
        let zero = ProblemInstance::homogeneous(&mesh);
        let c = Point::from_fn(|_, _| rng.random_range(-1.0..1.0));
        let mut data = zero.clone();
        data.xi = Arc::new(move |x| c.cross(x) + c);
        let disc = Discretization::new(&mesh, 1, zero.coeffs.clone()).unwrap();
        let s0 = assemble(&disc, &zero).unwrap();
        let s1 = assemble(&disc, &data).unwrap();
        prop_assert_eq!(&s0.matrix.values, &s1.matrix.values);
        prop_assert_eq!(&s0.layout.free_index, &s1.layout.free_index);
        prop_assert!(s0.rhs.iter().all(|v| *v == 0.0));
        prop_assert!(s1.layout.fixed_values.iter().any(|v| *v != 0.0));
        prop_assert_eq!(s0.layout.n_mult, 0);
    }

    #[test]
    fn solves_are_deterministic_and_linear(seed in 0u64..1000, alpha in 0.01f64..100.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mesh = build_hollow_cube_mesh(3).unwrap();
        let inst = ProblemInstance::homogeneous(&mesh);
        let disc = Discretization::new(&mesh, 1, inst.coeffs.clone()).unwrap();
        let sys = assemble(&disc, &inst).unwrap();
        let b: Vec<f64> = (0..sys.layout.size()).map(|_| rng.random_range(-1.0..1.0)).collect();
        let opts = SolverOptions::default();
        let (x1, _) = solve_linear(&sys.matrix, &b, &opts).unwrap();
        let (x2, _) = solve_linear(&sys.matrix, &b, &opts).unwrap();
        prop_assert_eq!(&x1, &x2);
        let ab: Vec<f64> = b.iter().map(|v| alpha * v).collect();
        let (xa, _) = solve_linear(&sys.matrix, &ab, &opts).unwrap();
        let scale = x1.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let dev = xa.iter().zip(&x1).fold(0.0f64, |m, (a, x)| m.max((a - alpha * x).abs()));
        prop_assert!(dev <= 1e-13 * alpha * scale, "deviation {dev}");
    }
}

#[test]
fn polynomial_fields_are_reproduced_on_every_mesh() {
    let meshes = [build_cube_tet_mesh(2).unwrap(), build_cube_hex_mesh(2, None).unwrap(), build_hollow_cube_mesh(3).unwrap()];
    for k in [1, 2] {
        let case = catalog("poly-exact", k).unwrap();
        for mesh in &meshes {
            let opts = RunOptions { k, ..Default::default() };
            let run = run_case(&case, mesh, &opts).unwrap();
            let r = &run.report;
            assert!(r.errors[0] <= 1e-8 * (1.0 + r.reference[0]), "k={k}: {:?}", r.errors);
        }
    }
}

#[test]
fn discrete_error_is_weakly_divergence_free() {
    let case = catalog("trig-hollow", 1).unwrap();
    let mesh = build_hollow_cube_mesh(3).unwrap();
    let run = run_case(&case, &mesh, &RunOptions::default()).unwrap();
    let (e, _) = error_functions(&run.disc, case.as_ref(), &run.solution.u, &run.solution.p).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for _ in 0..5 {
        let q = random_pressure(&run.disc, &mut rng);
        assert!(run.disc.apply_b(&e, &q).unwrap().abs() <= 1e-10);
    }
}

#[test]
fn homogeneous_system_has_the_zero_solution() {
    let mesh = build_hollow_cube_mesh(3).unwrap();
    let inst = ProblemInstance::homogeneous(&mesh);
    let disc = Discretization::new(&mesh, 2, inst.coeffs.clone()).unwrap();
    let sol = solve(&assemble(&disc, &inst).unwrap(), &SolverOptions::default()).unwrap();
    assert!(sol.u.max_abs() <= 1e-12 && sol.p.coeffs.iter().all(|v| v.abs() <= 1e-12));
    assert_eq!(sol.lambda.len(), 1);
}

#[test]
fn exact_case_trait_defaults() {
    let case = catalog("two-material", 1).unwrap();
    let x = Point::new(0.7, 0.2, 0.4);
    // f = ∇·(μu) computed from the Jacobian matches the closed form
    let expect = 2.0 * std::f64::consts::PI * (2.0 * std::f64::consts::PI * x.x).cos()
        * (std::f64::consts::PI * x.y).sin()
        * (std::f64::consts::PI * x.z).sin();
    assert!((case.f(&x) - expect).abs() < 1e-12);
    assert!(case.g(&x).iter().all(|v| v.is_finite()));
}
