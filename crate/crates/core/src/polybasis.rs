//! Scaled monomial bases on cells and faces, and L² projections onto them.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn, Matrix3, SymmetricEigen};
use rayon::prelude::*;

use crate::assembly::{PressureFunction, WeakFunction};
use crate::error::{Result, WgError};
use crate::mesh::{face_frame, Point, PolyMesh};
use crate::quadrature::{cell_quadrature, face_quadrature, QuadRule};

/// `binom(k+3, 3)`: dimension of `P_k` in three variables.
pub fn dim_cell(k: usize) -> usize {
    (k + 1) * (k + 2) * (k + 3) / 6
}

/// `binom(k+2, 2)`: dimension of `P_k` in two variables.
pub fn dim_face(k: usize) -> usize {
    (k + 1) * (k + 2) / 2
}

/// Exponents of degree ≤ k, grouped by total degree; within a degree the
/// `x` exponent decreases first. The first `dim_cell(k-1)` entries span `P_{k-1}`.
pub fn exponents_3d(k: usize) -> Vec<[usize; 3]> {
    let mut out = Vec::with_capacity(dim_cell(k));
    for d in 0..=k {
        for a in (0..=d).rev() {
            for b in (0..=d - a).rev() {
                out.push([a, b, d - a - b]);
            }
        }
    }
    out
}

pub fn exponents_2d(k: usize) -> Vec<[usize; 2]> {
    let mut out = Vec::with_capacity(dim_face(k));
    for d in 0..=k {
        for a in (0..=d).rev() {
            out.push([a, d - a]);
        }
    }
    out
}

fn powers<const N: usize>(y: [f64; N], k: usize) -> [[f64; 16]; N] {
    assert!(k < 16, "polynomial degree too large");
    let mut p = [[0.0; 16]; N];
    for d in 0..N {
        p[d][0] = 1.0;
        for e in 1..=k {
            p[d][e] = p[d][e - 1] * y[d];
        }
    }
    p
}

/// `((x - x_T) / h_T)^α` for `|α| ≤ k`.
#[derive(Clone, Debug)]
pub struct CellBasis {
    pub degree: usize,
    pub center: Point,
    pub scale: f64,
    exps: Vec<[usize; 3]>,
}

impl CellBasis {
    pub fn new(center: Point, scale: f64, degree: usize) -> Self {
        Self { degree, center, scale, exps: exponents_3d(degree) }
    }

    pub fn for_cell(mesh: &PolyMesh, c: usize, degree: usize) -> Self {
        let cell = mesh.cell(c);
        Self::new(cell.centroid, cell.diameter, degree)
    }

    pub fn dim(&self) -> usize {
        self.exps.len()
    }

    fn local(&self, x: &Point) -> [f64; 3] {
        let y = (x - self.center) / self.scale;
        [y.x, y.y, y.z]
    }

    /// Values of all basis functions at `x`; `out.len() >= dim`.
    pub fn eval_into(&self, x: &Point, out: &mut [f64]) {
        let p = powers(self.local(x), self.degree);
        for (o, e) in out.iter_mut().zip(&self.exps) {
            *o = p[0][e[0]] * p[1][e[1]] * p[2][e[2]];
        }
    }

    pub fn eval(&self, x: &Point) -> Vec<f64> {
        let mut out = vec![0.0; self.dim()];
        self.eval_into(x, &mut out);
        out
    }

    /// Gradients of all basis functions at `x`.
    pub fn grad(&self, x: &Point) -> Vec<Point> {
        let p = powers(self.local(x), self.degree);
        let s = 1.0 / self.scale;
        let dp = |d: usize, e: usize| if e == 0 { 0.0 } else { e as f64 * p[d][e - 1] * s };
        self.exps
            .iter()
            .map(|e| {
                Point::new(
                    dp(0, e[0]) * p[1][e[1]] * p[2][e[2]],
                    p[0][e[0]] * dp(1, e[1]) * p[2][e[2]],
                    p[0][e[0]] * p[1][e[1]] * dp(2, e[2]),
                )
            })
            .collect()
    }

    /// Evaluates `Σ coeffs[i] ψ_i(x)`; `coeffs` may span any leading subset of the basis.
    pub fn evaluate(&self, coeffs: &[f64], x: &Point) -> f64 {
        let p = powers(self.local(x), self.degree);
        coeffs.iter().zip(&self.exps).map(|(c, e)| c * p[0][e[0]] * p[1][e[1]] * p[2][e[2]]).sum()
    }

    pub fn gradient(&self, coeffs: &[f64], x: &Point) -> Point {
        self.grad(x).iter().zip(coeffs).map(|(g, c)| g * *c).sum()
    }
}

/// 2D scaled monomials in the face-plane coordinates `((x - x_e)·t1, (x - x_e)·t2) / h_e`.
#[derive(Clone, Debug)]
pub struct FaceBasis {
    pub degree: usize,
    pub center: Point,
    pub scale: f64,
    pub normal: Point,
    pub t1: Point,
    pub t2: Point,
    exps: Vec<[usize; 2]>,
}

impl FaceBasis {
    pub fn for_face(mesh: &PolyMesh, f: usize, degree: usize) -> Self {
        let face = mesh.face(f);
        let (normal, t1, t2) = face_frame(&face.normal);
        Self { degree, center: face.centroid, scale: face.diameter, normal, t1, t2, exps: exponents_2d(degree) }
    }

    pub fn dim(&self) -> usize {
        self.exps.len()
    }

    pub fn local(&self, x: &Point) -> [f64; 2] {
        let y = (x - self.center) / self.scale;
        [y.dot(&self.t1), y.dot(&self.t2)]
    }

    pub fn eval_into(&self, x: &Point, out: &mut [f64]) {
        let p = powers(self.local(x), self.degree);
        for (o, e) in out.iter_mut().zip(&self.exps) {
            *o = p[0][e[0]] * p[1][e[1]];
        }
    }

    pub fn eval(&self, x: &Point) -> Vec<f64> {
        let mut out = vec![0.0; self.dim()];
        self.eval_into(x, &mut out);
        out
    }

    pub fn evaluate(&self, coeffs: &[f64], x: &Point) -> f64 {
        let p = powers(self.local(x), self.degree);
        coeffs.iter().zip(&self.exps).map(|(c, e)| c * p[0][e[0]] * p[1][e[1]]).sum()
    }

    /// Vector value of a face block stored as `[n | t1 | t2]` coefficient groups.
    pub fn evaluate_vector(&self, block: &[f64], x: &Point) -> Point {
        let m = self.dim();
        let vals = self.eval(x);
        let dot = |off: usize| -> f64 { vals.iter().zip(&block[off..off + m]).map(|(a, b)| a * b).sum() };
        self.normal * dot(0) + self.t1 * dot(m) + self.t2 * dot(2 * m)
    }
}

/// Gram matrix of the first `dim` values produced by `eval` under `rule`.
pub fn mass_matrix(rule: &QuadRule, dim: usize, eval: impl Fn(&Point, &mut [f64])) -> DMatrix<f64> {
    let mut m = DMatrix::zeros(dim, dim);
    let mut v = vec![0.0; dim];
    for (x, w) in rule.points.iter().zip(&rule.weights) {
        eval(x, &mut v);
        for j in 0..dim {
            let wj = w * v[j];
            for i in j..dim {
                m[(i, j)] += wj * v[i];
            }
        }
    }
    m.fill_upper_triangle_with_lower_triangle();
    m
}

/// 2-norm condition number of a symmetric positive definite matrix.
pub fn condition_number(m: &DMatrix<f64>) -> f64 {
    let ev = SymmetricEigen::new(m.clone()).eigenvalues;
    let (lo, hi) = ev.iter().fold((f64::INFINITY, 0.0f64), |(lo, hi), &e| (lo.min(e), hi.max(e)));
    if lo <= 0.0 {
        f64::INFINITY
    } else {
        hi / lo
    }
}

fn factor(m: DMatrix<f64>, what: impl FnOnce() -> String) -> Result<Cholesky<f64, Dyn>> {
    Cholesky::new(m).ok_or_else(|| WgError::Degenerate { what: what() })
}

/// Per-element bases, exact polynomial quadrature rules and factorized mass
/// matrices shared by the weak operators, assembly and norms.
pub struct Space<'m> {
    pub mesh: &'m PolyMesh,
    pub k: usize,
    /// Exactness degree used for integrals involving non-polynomial data.
    pub data_degree: usize,
    pub cell_basis: Vec<CellBasis>,
    pub face_basis: Vec<FaceBasis>,
    /// Rules of degree `2k` on each cell and face.
    pub cell_rule: Vec<QuadRule>,
    pub face_rule: Vec<QuadRule>,
    /// Mass matrices of `P_k(T)`, `P_{k-1}(T)` and `P_k(e)`.
    pub mass_k: Vec<DMatrix<f64>>,
    pub mass_p: Vec<DMatrix<f64>>,
    pub mass_face: Vec<DMatrix<f64>>,
    chol_k: Vec<Cholesky<f64, Dyn>>,
    chol_p: Vec<Cholesky<f64, Dyn>>,
    chol_face: Vec<Cholesky<f64, Dyn>>,
}

impl<'m> Space<'m> {
    pub fn new(mesh: &'m PolyMesh, k: usize) -> Result<Self> {
        Self::with_data_degree(mesh, k, 2 * k + 3)
    }

    pub fn with_data_degree(mesh: &'m PolyMesh, k: usize, data_degree: usize) -> Result<Self> {
        if k == 0 {
            return Err(WgError::InvalidArgument("polynomial degree k must be at least 1".into()));
        }
        let (nk, np) = (dim_cell(k), dim_cell(k - 1));
        let cells = (0..mesh.num_cells())
            .into_par_iter()
            .map(|c| {
                let basis = CellBasis::for_cell(mesh, c, k);
                let rule = cell_quadrature(mesh, c, 2 * k)?;
                let mk = mass_matrix(&rule, nk, |x, o| basis.eval_into(x, o));
                let mp = mk.view((0, 0), (np, np)).into_owned();
                let ck = factor(mk.clone(), || format!("cell {c}: singular P_k mass matrix"))?;
                let cp = factor(mp.clone(), || format!("cell {c}: singular P_(k-1) mass matrix"))?;
                Ok((basis, rule, mk, mp, ck, cp))
            })
            .collect::<Result<Vec<_>>>()?;
        let faces = (0..mesh.num_faces())
            .into_par_iter()
            .map(|f| {
                let basis = FaceBasis::for_face(mesh, f, k);
                let rule = face_quadrature(mesh, f, 2 * k);
                let m = mass_matrix(&rule, basis.dim(), |x, o| basis.eval_into(x, o));
                let ch = factor(m.clone(), || format!("face {f}: singular mass matrix"))?;
                Ok((basis, rule, m, ch))
            })
            .collect::<Result<Vec<_>>>()?;

        let mut s = Space {
            mesh,
            k,
            data_degree,
            cell_basis: Vec::with_capacity(cells.len()),
            face_basis: Vec::with_capacity(faces.len()),
            cell_rule: Vec::with_capacity(cells.len()),
            face_rule: Vec::with_capacity(faces.len()),
            mass_k: Vec::with_capacity(cells.len()),
            mass_p: Vec::with_capacity(cells.len()),
            mass_face: Vec::with_capacity(faces.len()),
            chol_k: Vec::with_capacity(cells.len()),
            chol_p: Vec::with_capacity(cells.len()),
            chol_face: Vec::with_capacity(faces.len()),
        };
        for (b, r, mk, mp, ck, cp) in cells {
            s.cell_basis.push(b);
            s.cell_rule.push(r);
            s.mass_k.push(mk);
            s.mass_p.push(mp);
            s.chol_k.push(ck);
            s.chol_p.push(cp);
        }
        for (b, r, m, ch) in faces {
            s.face_basis.push(b);
            s.face_rule.push(r);
            s.mass_face.push(m);
            s.chol_face.push(ch);
        }
        Ok(s)
    }

    /// Scalar dimensions: `P_k(T)`, `P_{k-1}(T)`, `P_k(e)`.
    pub fn dim_k(&self) -> usize {
        dim_cell(self.k)
    }

    pub fn dim_p(&self) -> usize {
        dim_cell(self.k - 1)
    }

    pub fn dim_e(&self) -> usize {
        dim_face(self.k)
    }

    pub fn solve_mass_k(&self, c: usize, b: DVector<f64>) -> DVector<f64> {
        self.chol_k[c].solve(&b)
    }

    pub fn solve_mass_p(&self, c: usize, b: DVector<f64>) -> DVector<f64> {
        self.chol_p[c].solve(&b)
    }

    pub fn solve_mass_face(&self, f: usize, b: DVector<f64>) -> DVector<f64> {
        self.chol_face[f].solve(&b)
    }

    pub fn cell_data_rule(&self, c: usize) -> Result<QuadRule> {
        cell_quadrature(self.mesh, c, self.data_degree)
    }

    pub fn face_data_rule(&self, f: usize) -> QuadRule {
        face_quadrature(self.mesh, f, self.data_degree)
    }

    /// L² projection of `field` onto the first `dim` cell basis functions
    /// (`dim_k` or `dim_p`), using the data rule.
    pub fn project_cell(&self, c: usize, dim: usize, field: impl Fn(&Point) -> f64) -> Result<DVector<f64>> {
        let rule = self.cell_data_rule(c)?;
        let b = moments(&rule, dim, |x, o| self.cell_basis[c].eval_into(x, o), &field);
        Ok(if dim == self.dim_k() { self.solve_mass_k(c, b) } else { self.solve_mass_p(c, b) })
    }

    pub fn project_face(&self, f: usize, field: impl Fn(&Point) -> f64) -> DVector<f64> {
        let rule = self.face_data_rule(f);
        let b = moments(&rule, self.dim_e(), |x, o| self.face_basis[f].eval_into(x, o), &field);
        self.solve_mass_face(f, b)
    }
}

/// `b_i = ∫ field ψ_i` under `rule`.
pub fn moments(
    rule: &QuadRule,
    dim: usize,
    eval: impl Fn(&Point, &mut [f64]),
    field: impl Fn(&Point) -> f64,
) -> DVector<f64> {
    let mut b = DVector::zeros(dim);
    let mut v = vec![0.0; dim];
    for (x, w) in rule.points.iter().zip(&rule.weights) {
        eval(x, &mut v);
        let fw = w * field(x);
        for i in 0..dim {
            b[i] += fw * v[i];
        }
    }
    b
}

/// L² projection of `field` onto `P_{k'}(T)` for cell `c`, with exactness
/// degree `2k'+3` (or more for the supplied `degree`).
pub fn l2_project_cell(
    mesh: &PolyMesh,
    c: usize,
    kp: usize,
    degree: usize,
    field: impl Fn(&Point) -> f64,
) -> Result<DVector<f64>> {
    let basis = CellBasis::for_cell(mesh, c, kp);
    let rule = cell_quadrature(mesh, c, degree.max(2 * kp))?;
    let m = mass_matrix(&rule, basis.dim(), |x, o| basis.eval_into(x, o));
    let b = moments(&rule, basis.dim(), |x, o| basis.eval_into(x, o), field);
    Ok(factor(m, || format!("cell {c}: singular mass matrix"))?.solve(&b))
}

/// L² projection of `field` onto `P_k(e)` for face `f`.
pub fn l2_project_face(
    mesh: &PolyMesh,
    f: usize,
    k: usize,
    degree: usize,
    field: impl Fn(&Point) -> f64,
) -> Result<DVector<f64>> {
    let basis = FaceBasis::for_face(mesh, f, k);
    let rule = face_quadrature(mesh, f, degree.max(2 * k));
    let m = mass_matrix(&rule, basis.dim(), |x, o| basis.eval_into(x, o));
    let b = moments(&rule, basis.dim(), |x, o| basis.eval_into(x, o), field);
    Ok(factor(m, || format!("face {f}: singular mass matrix"))?.solve(&b))
}

/// `Q_h u = {Q_0 u, 𝔔_b u}` with `𝔔_b u = Q_b(μu·n) n + Q_b(n×(u×n))`.
/// On a face shared by cells with different `μ`, the owner cell's value is used.
pub fn project_qh(space: &Space, mu: &[Matrix3<f64>], u: &(dyn Fn(&Point) -> Point + Sync)) -> Result<WeakFunction> {
    let mesh = space.mesh;
    let (nk, ne) = (space.dim_k(), space.dim_e());
    let mut w = WeakFunction::zeros_like(space);
    let cells = (0..mesh.num_cells())
        .into_par_iter()
        .map(|c| {
            let rule = space.cell_data_rule(c)?;
            let basis = &space.cell_basis[c];
            let mut b = [DVector::zeros(nk), DVector::zeros(nk), DVector::zeros(nk)];
            let mut psi = vec![0.0; nk];
            for (x, wt) in rule.points.iter().zip(&rule.weights) {
                basis.eval_into(x, &mut psi);
                let v = u(x) * *wt;
                for comp in 0..3 {
                    for i in 0..nk {
                        b[comp][i] += v[comp] * psi[i];
                    }
                }
            }
            Ok(b.map(|b| space.solve_mass_k(c, b)))
        })
        .collect::<Result<Vec<_>>>()?;
    for (c, parts) in cells.into_iter().enumerate() {
        let blk = w.cell_block_mut(c);
        for (comp, p) in parts.iter().enumerate() {
            blk[comp * nk..(comp + 1) * nk].copy_from_slice(p.as_slice());
        }
    }
    let faces: Vec<[DVector<f64>; 3]> = (0..mesh.num_faces())
        .into_par_iter()
        .map(|f| {
            let fb = &space.face_basis[f];
            let m = mu[mesh.face(f).owner];
            let rule = space.face_data_rule(f);
            let mut b = [DVector::zeros(ne), DVector::zeros(ne), DVector::zeros(ne)];
            let mut psi = vec![0.0; ne];
            for (x, wt) in rule.points.iter().zip(&rule.weights) {
                fb.eval_into(x, &mut psi);
                let v = u(x);
                let comps = [(m * v).dot(&fb.normal), v.dot(&fb.t1), v.dot(&fb.t2)];
                for g in 0..3 {
                    for j in 0..ne {
                        b[g][j] += wt * comps[g] * psi[j];
                    }
                }
            }
            b.map(|b| space.solve_mass_face(f, b))
        })
        .collect();
    for (f, parts) in faces.into_iter().enumerate() {
        let blk = w.face_block_mut(f);
        for (g, p) in parts.iter().enumerate() {
            blk[g * ne..(g + 1) * ne].copy_from_slice(p.as_slice());
        }
    }
    Ok(w)
}

/// Cellwise L² projection onto `P_{k-1}`.
pub fn project_pressure(space: &Space, p: &(dyn Fn(&Point) -> f64 + Sync)) -> Result<PressureFunction> {
    let np = space.dim_p();
    let blocks = (0..space.mesh.num_cells())
        .into_par_iter()
        .map(|c| space.project_cell(c, np, p))
        .collect::<Result<Vec<_>>>()?;
    let mut q = PressureFunction::zeros(space.k, space.mesh.num_cells());
    for (c, b) in blocks.iter().enumerate() {
        q.cell_block_mut(c).copy_from_slice(b.as_slice());
    }
    Ok(q)
}
