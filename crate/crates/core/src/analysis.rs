//! Discrete norms, error functionals, the inf-sup test function and rate
//! extraction.

use nalgebra::DVector;
use rand::Rng;
use rayon::prelude::*;

use crate::assembly::{pairwise_sum, Discretization, PressureFunction, WeakFunction};
use crate::error::{Result, WgError};
use crate::mesh::Point;
use crate::polybasis::{project_pressure, project_qh};
use crate::verification::ExactCase;
use crate::weakops::kron;

/// Inner product inducing `|||·|||₁`: weak curl, weak divergence and the stabilizer.
pub fn inner_bar1(disc: &Discretization, v: &WeakFunction, w: &WeakFunction) -> Result<f64> {
    let s = disc.stabilizer(v, w)?;
    let mesh = disc.mesh();
    let cw = disc.sum_cells(|c| {
        let op = &disc.ops[c];
        let mp = &disc.space.mass_p[c];
        let (vl, wl) = (v.local(mesh, c), w.local(mesh, c));
        let (dv, dw) = (&op.div * &vl, &op.div * &wl);
        let (cv, cw) = (&op.curl * &vl, &op.curl * &wl);
        let mut acc = (dv.transpose() * mp * dw)[0];
        let np = mp.nrows();
        for m in 0..3 {
            let (a, b) = (cv.rows(m * np, np), cw.rows(m * np, np));
            acc += (a.transpose() * mp * b)[0];
        }
        acc
    });
    Ok(cw + s)
}

pub fn norm_bar1(disc: &Discretization, v: &WeakFunction) -> Result<f64> {
    Ok(inner_bar1(disc, v, v)?.max(0.0).sqrt())
}

/// `|||v||| = a(v, v)^{1/2}`.
pub fn norm_bar(disc: &Discretization, v: &WeakFunction) -> Result<f64> {
    Ok(disc.apply_a(v, v)?.max(0.0).sqrt())
}

/// `|v|_{1,h} = s(v, v)^{1/2}`.
pub fn seminorm_1h(disc: &Discretization, v: &WeakFunction) -> Result<f64> {
    Ok(disc.stabilizer(v, v)?.max(0.0).sqrt())
}

/// `‖v_0‖` in `L²(Ω)`.
pub fn norm_l2_interior(disc: &Discretization, v: &WeakFunction) -> Result<f64> {
    let z = disc.zero_velocity();
    if v.interior.len() != z.interior.len() {
        return Err(WgError::Mismatch("weak function does not match the discretization".into()));
    }
    let nk = disc.space.dim_k();
    Ok(disc
        .sum_cells(|c| {
            let b = v.cell_block(c);
            let m = &disc.space.mass_k[c];
            (0..3)
                .map(|comp| {
                    let x = DVector::from_column_slice(&b[comp * nk..(comp + 1) * nk]);
                    (x.transpose() * m * &x)[0]
                })
                .sum()
        })
        .max(0.0)
        .sqrt())
}

/// `‖v_b‖_{E_h} = (Σ_T h_T ‖v_b‖²_{∂T})^{1/2}`.
pub fn norm_eh(disc: &Discretization, v: &WeakFunction) -> Result<f64> {
    let z = disc.zero_velocity();
    if v.faces.len() != z.faces.len() {
        return Err(WgError::Mismatch("weak function does not match the discretization".into()));
    }
    let space = &disc.space;
    let mesh = disc.mesh();
    let face_sq: Vec<f64> = (0..mesh.num_faces())
        .into_par_iter()
        .map(|f| space.face_rule[f].integrate(|x| v.face_value(space, f, x).norm_squared()))
        .collect();
    Ok(disc
        .sum_cells(|c| {
            let cell = mesh.cell(c);
            cell.diameter * cell.faces.iter().map(|cf| face_sq[cf.face]).sum::<f64>()
        })
        .max(0.0)
        .sqrt())
}

/// Means `q̄_i` of `q` over each boundary component; `q̄_0 = 0`.
pub fn boundary_means(disc: &Discretization, q: &PressureFunction) -> Vec<f64> {
    let mesh = disc.mesh();
    let space = &disc.space;
    let mut sums = vec![0.0; mesh.num_boundary_components()];
    let mut areas = vec![0.0; mesh.num_boundary_components()];
    for f in mesh.boundary_faces() {
        let face = mesh.face(f);
        let Some(tag) = face.tag else { continue };
        if tag == 0 || tag >= sums.len() {
            continue;
        }
        sums[tag] += space.face_rule[f].integrate(|x| q.value(space, face.owner, x));
        areas[tag] += face.area;
    }
    sums.iter().zip(&areas).map(|(s, a)| if *a > 0.0 { s / a } else { 0.0 }).collect()
}

/// The three pieces of `‖q‖²_{W_h}` without their `h` weights:
/// `(Σ‖∇q‖², Σ_{interior}‖[q]‖², Σ_i‖q − q̄_i‖²_{Γ_i})`.
fn wh_parts(disc: &Discretization, q: &PressureFunction) -> (f64, f64, f64) {
    let mesh = disc.mesh();
    let space = &disc.space;
    let grad = disc.sum_cells(|c| {
        let cb = &space.cell_basis[c];
        space.cell_rule[c].integrate(|x| cb.gradient(q.cell_block(c), x).norm_squared())
    });
    let means = boundary_means(disc, q);
    let face_terms: Vec<(f64, f64)> = (0..mesh.num_faces())
        .into_par_iter()
        .map(|f| {
            let face = mesh.face(f);
            let rule = &space.face_rule[f];
            match face.neighbor {
                Some(nb) => (rule.integrate(|x| (q.value(space, face.owner, x) - q.value(space, nb, x)).powi(2)), 0.0),
                None => {
                    let mean = face.tag.and_then(|t| means.get(t).copied()).unwrap_or(0.0);
                    (0.0, rule.integrate(|x| (q.value(space, face.owner, x) - mean).powi(2)))
                }
            }
        })
        .collect();
    let jumps: Vec<f64> = face_terms.iter().map(|t| t.0).collect();
    let bnd: Vec<f64> = face_terms.iter().map(|t| t.1).collect();
    (grad, pairwise_sum(&jumps), pairwise_sum(&bnd))
}

/// `‖q‖_{W_h} = (h²Σ‖∇q‖² + hΣ‖[q]‖² + hΣ_i‖q − q̄_i‖²_{Γ_i})^{1/2}`.
pub fn norm_wh(disc: &Discretization, q: &PressureFunction) -> Result<f64> {
    check_pressure(disc, q)?;
    let h = disc.mesh().h();
    let (g, j, b) = wh_parts(disc, q);
    Ok((h * h * g + h * j + h * b).max(0.0).sqrt())
}

fn check_pressure(disc: &Discretization, q: &PressureFunction) -> Result<()> {
    if q.k != disc.k() || q.coeffs.len() != disc.zero_pressure().coeffs.len() {
        return Err(WgError::Mismatch("pressure function does not match the discretization".into()));
    }
    Ok(())
}

/// Right-hand side of the inf-sup identity:
/// `h²Σ(μ∇q, ∇q) + hΣ‖[q]‖² + hΣ_i‖q − q̄_i‖²_{Γ_i}`.
pub fn infsup_rhs(disc: &Discretization, q: &PressureFunction) -> Result<f64> {
    check_pressure(disc, q)?;
    let space = &disc.space;
    let h = disc.mesh().h();
    let grad = disc.sum_cells(|c| {
        let cb = &space.cell_basis[c];
        let mu = disc.coeffs.mu[c];
        space.cell_rule[c].integrate(|x| {
            let g = cb.gradient(q.cell_block(c), x);
            g.dot(&(mu * g))
        })
    });
    let (_, j, b) = wh_parts(disc, q);
    Ok(h * h * grad + h * j + h * b)
}

/// The test function `v_q = {−h²∇q; h v_{q,b}}` with `v_{q,b} = [q] n_e` on
/// interior faces and `(q − q̄_i) n` on boundary faces.
pub fn infsup_function(disc: &Discretization, q: &PressureFunction) -> Result<WeakFunction> {
    check_pressure(disc, q)?;
    let mesh = disc.mesh();
    let space = &disc.space;
    let h = mesh.h();
    let nk = space.dim_k();
    let means = boundary_means(disc, q);
    let mut v = disc.zero_velocity();
    let cells: Vec<Vec<f64>> = (0..mesh.num_cells())
        .into_par_iter()
        .map(|c| {
            let cb = &space.cell_basis[c];
            let mut out = vec![0.0; 3 * nk];
            for comp in 0..3 {
                let proj = space.project_cell(c, nk, |x| -h * h * cb.gradient(q.cell_block(c), x)[comp])?;
                out[comp * nk..(comp + 1) * nk].copy_from_slice(proj.as_slice());
            }
            Ok(out)
        })
        .collect::<Result<_>>()?;
    for (c, vals) in cells.into_iter().enumerate() {
        v.cell_block_mut(c).copy_from_slice(&vals);
    }
    let faces: Vec<DVector<f64>> = (0..mesh.num_faces())
        .into_par_iter()
        .map(|f| {
            let face = mesh.face(f);
            // the n-group holds v_b·n_f; the owner's outward normal is σ n_f
            let sigma = mesh.face_references(f).iter().find(|r| r.0 == face.owner).map_or(1.0, |r| r.1);
            match face.neighbor {
                Some(nb) => space.project_face(f, |x| h * sigma * (q.value(space, face.owner, x) - q.value(space, nb, x))),
                None => {
                    let mean = face.tag.and_then(|t| means.get(t).copied()).unwrap_or(0.0);
                    space.project_face(f, |x| h * sigma * (q.value(space, face.owner, x) - mean))
                }
            }
        })
        .collect();
    let ne = space.dim_e();
    for (f, a) in faces.into_iter().enumerate() {
        v.face_block_mut(f)[..ne].copy_from_slice(a.as_slice());
    }
    Ok(v)
}

/// Largest violation of the `U_h^0` constraints: tangential boundary groups
/// and the flux `⟨v_b·n_i, 1⟩` over each cavity boundary.
pub fn u0_violation(disc: &Discretization, v: &WeakFunction) -> f64 {
    let mesh = disc.mesh();
    let ne = disc.space.dim_e();
    let mut worst: f64 = 0.0;
    let mut flux = vec![0.0; mesh.num_boundary_components()];
    for f in mesh.boundary_faces() {
        let b = v.face_block(f);
        worst = b[ne..].iter().fold(worst, |m, x| m.max(x.abs()));
        let face = mesh.face(f);
        if let Some(t) = face.tag.filter(|&t| t > 0 && t < flux.len()) {
            let n = mesh.boundary_normal(f).expect("boundary face");
            flux[t] += disc.space.face_rule[f].integrate(|x| v.face_value(&disc.space, f, x).dot(&n));
        }
    }
    flux.iter().skip(1).fold(worst, |m, x| m.max(x.abs()))
}

/// A random element of `U_h^0`: uniform coefficients in `[-1, 1]`, tangential
/// boundary groups zeroed and the cavity fluxes removed through the constant
/// face mode.
pub fn random_u0(disc: &Discretization, rng: &mut impl Rng) -> WeakFunction {
    let mesh = disc.mesh();
    let ne = disc.space.dim_e();
    let mut v = disc.zero_velocity();
    v.interior.iter_mut().chain(v.faces.iter_mut()).for_each(|x| *x = rng.random_range(-1.0..1.0));
    for f in mesh.boundary_faces().collect::<Vec<_>>() {
        v.face_block_mut(f)[ne..].fill(0.0);
    }
    let m = mesh.num_boundary_components();
    let mut flux = vec![0.0; m];
    let mut area = vec![0.0; m];
    let cavity_faces: Vec<(usize, usize, f64)> = mesh
        .boundary_faces()
        .filter_map(|f| {
            let face = mesh.face(f);
            let t = face.tag.filter(|&t| t > 0 && t < m)?;
            // sign relating the face normal to the outward domain normal
            let s = mesh.boundary_normal(f).expect("boundary face").dot(&face.normal).signum();
            Some((f, t, s))
        })
        .collect();
    for &(f, t, s) in &cavity_faces {
        let fb = &disc.space.face_basis[f];
        flux[t] += s * disc.space.face_rule[f].integrate(|x| fb.evaluate(&v.face_block(f)[..ne], x));
        area[t] += mesh.face(f).area;
    }
    for &(f, t, s) in &cavity_faces {
        // the first face basis function is the constant 1
        v.face_block_mut(f)[0] -= s * flux[t] / area[t];
    }
    v
}

/// Random pressure with coefficients in `[-1, 1]`.
pub fn random_pressure(disc: &Discretization, rng: &mut impl Rng) -> PressureFunction {
    let mut q = disc.zero_pressure();
    q.coeffs.iter_mut().for_each(|x| *x = rng.random_range(-1.0..1.0));
    q
}

/// Values of the consistency functionals at one test function.
#[derive(Clone, Copy, Debug)]
pub struct Residuals {
    pub ell: f64,
    pub theta: f64,
    pub phi: f64,
}

/// `ℓ_u(v) = Σ_T⟨(𝐐_h − I)(κ∇×u), (v_0 − v_b)×n⟩_{∂T}`,
/// `θ_p(v) = Σ_T⟨p − 𝒬_h p, (μv_0 − v_b)·n⟩_{∂T}` and
/// `φ(v) = ℓ_u(v) + θ_p(v) + s(Q_h u, v)`, by data-degree quadrature.
pub fn residual_functionals(disc: &Discretization, case: &dyn ExactCase, v: &WeakFunction) -> Result<Residuals> {
    let space = &disc.space;
    let mesh = disc.mesh();
    let np = space.dim_p();
    let u = |x: &Point| case.u(x);
    let qhu = project_qh(space, &disc.coeffs.mu, &u)?;
    let qp = project_pressure(space, &|x: &Point| case.p(x))?;
    let parts: Vec<(f64, f64)> = (0..mesh.num_cells())
        .into_par_iter()
        .map(|c| {
            let kappa = disc.coeffs.kappa[c];
            let mu = disc.coeffs.mu[c];
            let cb = &space.cell_basis[c];
            let mut pw = Vec::with_capacity(3);
            for comp in 0..3 {
                pw.push(space.project_cell(c, np, |x| (kappa * case.curl_u(x))[comp])?);
            }
            let (mut ell, mut theta) = (0.0, 0.0);
            for cf in &mesh.cell(c).faces {
                let n = space.face_basis[cf.face].normal * cf.sign;
                let rule = space.face_data_rule(cf.face);
                for (x, w) in rule.points.iter().zip(&rule.weights) {
                    let v0 = v.interior_value(space, c, x);
                    let vb = v.face_value(space, cf.face, x);
                    let proj = Point::new(cb.evaluate(pw[0].as_slice(), x), cb.evaluate(pw[1].as_slice(), x), cb.evaluate(pw[2].as_slice(), x));
                    ell += w * (proj - kappa * case.curl_u(x)).dot(&(v0 - vb).cross(&n));
                    theta += w * (case.p(x) - qp.value(space, c, x)) * (mu * v0 - vb).dot(&n);
                }
            }
            Ok((ell, theta))
        })
        .collect::<Result<_>>()?;
    let ell = pairwise_sum(&parts.iter().map(|p| p.0).collect::<Vec<_>>());
    let theta = pairwise_sum(&parts.iter().map(|p| p.1).collect::<Vec<_>>());
    let s = disc.stabilizer(&qhu, v)?;
    Ok(Residuals { ell, theta, phi: ell + theta + s })
}

/// `(κ ⊗ M_p)`-weighted curl energy, kept for diagnostics.
pub fn curl_energy(disc: &Discretization, v: &WeakFunction) -> f64 {
    let mesh = disc.mesh();
    disc.sum_cells(|c| {
        let op = &disc.ops[c];
        let cv = &op.curl * v.local(mesh, c);
        (cv.transpose() * kron(&op.kappa, &disc.space.mass_p[c]) * &cv)[0]
    })
}

/// Least-squares slope of `log(error)` against `log(h)`.
pub fn convergence_rate(pairs: &[(f64, f64)]) -> Result<f64> {
    if pairs.len() < 2 {
        return Err(WgError::InvalidArgument("a rate needs at least two (h, error) pairs".into()));
    }
    if let Some((h, e)) = pairs.iter().find(|(h, e)| !(*h > 0.0 && *e > 0.0)) {
        return Err(WgError::InvalidArgument(format!("rate needs positive h and error, got ({h}, {e})")));
    }
    let n = pairs.len() as f64;
    let xs: Vec<f64> = pairs.iter().map(|p| p.0.ln()).collect();
    let ys: Vec<f64> = pairs.iter().map(|p| p.1.ln()).collect();
    let (mx, my) = (xs.iter().sum::<f64>() / n, ys.iter().sum::<f64>() / n);
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    if sxx == 0.0 {
        return Err(WgError::InvalidArgument("all mesh sizes are equal".into()));
    }
    Ok(sxy / sxx)
}

/// Names of the six error norms, in report order.
pub const ERROR_NAMES: [&str; 6] = ["bar1", "bar", "wh", "l2", "eh", "1h"];

/// Errors of one discrete solution against the projected exact solution.
#[derive(Clone, Debug, PartialEq)]
pub struct ErrorReport {
    pub h: f64,
    pub ndof: usize,
    /// `|||e_h|||₁, |||e_h|||, ‖ε_h‖_{W_h}, ‖e_0‖, ‖e_b‖_{E_h}, |e_h|_{1,h}`.
    pub errors: [f64; 6],
    /// The same norms of `(Q_h u, 𝒬_h p)`.
    pub reference: [f64; 6],
    pub residual: f64,
}

impl ErrorReport {
    pub const CSV_HEADER: &'static str = "h,ndof,err_bar1,err_bar,err_wh,err_l2,err_eh,err_1h,residual";

    pub fn relative(&self) -> [f64; 6] {
        std::array::from_fn(|i| self.errors[i] / (1.0 + self.reference[i]))
    }

    pub fn csv_row(&self) -> String {
        let e = &self.errors;
        format!("{:.6e},{},{:.6e},{:.6e},{:.6e},{:.6e},{:.6e},{:.6e},{:.3e}", self.h, self.ndof, e[0], e[1], e[2], e[3], e[4], e[5], self.residual)
    }
}

fn all_norms(disc: &Discretization, v: &WeakFunction, q: &PressureFunction) -> Result<[f64; 6]> {
    Ok([norm_bar1(disc, v)?, norm_bar(disc, v)?, norm_wh(disc, q)?, norm_l2_interior(disc, v)?, norm_eh(disc, v)?, seminorm_1h(disc, v)?])
}

/// `e_h = Q_h u − u_h` and `ε_h = 𝒬_h p − p_h`.
pub fn error_functions(disc: &Discretization, case: &dyn ExactCase, uh: &WeakFunction, ph: &PressureFunction) -> Result<(WeakFunction, PressureFunction)> {
    let qhu = project_qh(&disc.space, &disc.coeffs.mu, &|x: &Point| case.u(x))?;
    let qp = project_pressure(&disc.space, &|x: &Point| case.p(x))?;
    Ok((qhu.sub(uh), qp.sub(ph)))
}

/// All error norms of `(u_h, p_h)`.
pub fn error_report(disc: &Discretization, case: &dyn ExactCase, uh: &WeakFunction, ph: &PressureFunction, ndof: usize, residual: f64) -> Result<ErrorReport> {
    let qhu = project_qh(&disc.space, &disc.coeffs.mu, &|x: &Point| case.u(x))?;
    let qp = project_pressure(&disc.space, &|x: &Point| case.p(x))?;
    let errors = all_norms(disc, &qhu.sub(uh), &qp.sub(ph))?;
    let reference = all_norms(disc, &qhu, &qp)?;
    Ok(ErrorReport { h: disc.mesh().h(), ndof, errors, reference, residual })
}
