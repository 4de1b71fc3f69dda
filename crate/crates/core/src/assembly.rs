//! Global degrees of freedom, bilinear forms and the saddle-point system.
//!
//! Global ordering: interior blocks cell by cell, face blocks face by face,
//! then pressures cell by cell, then one multiplier per cavity boundary.
//! Tangential face groups (`t1`, `t2`) of boundary faces carry the essential
//! boundary condition and are eliminated from the linear system.

use std::fmt::Write as _;
use std::io::Write as _;
use std::path::Path;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::error::{Result, WgError};
use crate::mesh::{Point, PolyMesh};
use crate::polybasis::{dim_cell, dim_face, Space};
use crate::weakops::{build_operators, Coefficients, LocalOperators};

pub type ScalarField = Arc<dyn Fn(&Point) -> f64 + Send + Sync>;
pub type VectorField = Arc<dyn Fn(&Point) -> Point + Send + Sync>;

/// Discrete vector field `{v_0, v_b}`: one interior block per cell and one
/// single-valued block per face, stored in the face frame.
#[derive(Clone, Debug, PartialEq)]
pub struct WeakFunction {
    pub k: usize,
    pub interior: Vec<f64>,
    pub faces: Vec<f64>,
}

impl WeakFunction {
    pub fn zeros(k: usize, num_cells: usize, num_faces: usize) -> Self {
        Self { k, interior: vec![0.0; 3 * dim_cell(k) * num_cells], faces: vec![0.0; 3 * dim_face(k) * num_faces] }
    }

    pub fn zeros_like(space: &Space) -> Self {
        Self::zeros(space.k, space.mesh.num_cells(), space.mesh.num_faces())
    }

    pub fn cell_stride(&self) -> usize {
        3 * dim_cell(self.k)
    }

    pub fn face_stride(&self) -> usize {
        3 * dim_face(self.k)
    }

    pub fn cell_block(&self, c: usize) -> &[f64] {
        let s = self.cell_stride();
        &self.interior[c * s..(c + 1) * s]
    }

    pub fn cell_block_mut(&mut self, c: usize) -> &mut [f64] {
        let s = self.cell_stride();
        &mut self.interior[c * s..(c + 1) * s]
    }

    pub fn face_block(&self, f: usize) -> &[f64] {
        let s = self.face_stride();
        &self.faces[f * s..(f + 1) * s]
    }

    pub fn face_block_mut(&mut self, f: usize) -> &mut [f64] {
        let s = self.face_stride();
        &mut self.faces[f * s..(f + 1) * s]
    }

    /// Gathers the local DoF vector of cell `c`.
    pub fn local(&self, mesh: &PolyMesh, c: usize) -> DVector<f64> {
        let cell = mesh.cell(c);
        let mut v = Vec::with_capacity(self.cell_stride() + cell.faces.len() * self.face_stride());
        v.extend_from_slice(self.cell_block(c));
        for cf in &cell.faces {
            v.extend_from_slice(self.face_block(cf.face));
        }
        DVector::from_vec(v)
    }

    /// The full velocity vector in global ordering.
    pub fn to_vec(&self) -> Vec<f64> {
        self.interior.iter().chain(&self.faces).copied().collect()
    }

    pub fn from_vec(k: usize, num_cells: usize, v: &[f64]) -> Self {
        let ni = 3 * dim_cell(k) * num_cells;
        Self { k, interior: v[..ni].to_vec(), faces: v[ni..].to_vec() }
    }

    pub fn axpy(&mut self, a: f64, x: &WeakFunction) {
        for (y, x) in self.interior.iter_mut().zip(&x.interior).chain(self.faces.iter_mut().zip(&x.faces)) {
            *y += a * x;
        }
    }

    pub fn sub(&self, other: &WeakFunction) -> WeakFunction {
        let mut d = self.clone();
        d.axpy(-1.0, other);
        d
    }

    pub fn max_abs(&self) -> f64 {
        self.interior.iter().chain(&self.faces).fold(0.0, |m, v| m.max(v.abs()))
    }

    /// `v_0` at `x` in cell `c`.
    pub fn interior_value(&self, space: &Space, c: usize, x: &Point) -> Point {
        let nk = space.dim_k();
        let b = self.cell_block(c);
        let basis = &space.cell_basis[c];
        Point::new(
            basis.evaluate(&b[..nk], x),
            basis.evaluate(&b[nk..2 * nk], x),
            basis.evaluate(&b[2 * nk..], x),
        )
    }

    /// `v_b` at `x` on face `f`.
    pub fn face_value(&self, space: &Space, f: usize, x: &Point) -> Point {
        space.face_basis[f].evaluate_vector(self.face_block(f), x)
    }
}

/// Discrete pressure in `P_{k-1}` per cell.
#[derive(Clone, Debug, PartialEq)]
pub struct PressureFunction {
    pub k: usize,
    pub coeffs: Vec<f64>,
}

impl PressureFunction {
    pub fn zeros(k: usize, num_cells: usize) -> Self {
        Self { k, coeffs: vec![0.0; dim_cell(k - 1) * num_cells] }
    }

    pub fn stride(&self) -> usize {
        dim_cell(self.k - 1)
    }

    pub fn cell_block(&self, c: usize) -> &[f64] {
        let s = self.stride();
        &self.coeffs[c * s..(c + 1) * s]
    }

    pub fn cell_block_mut(&mut self, c: usize) -> &mut [f64] {
        let s = self.stride();
        &mut self.coeffs[c * s..(c + 1) * s]
    }

    pub fn value(&self, space: &Space, c: usize, x: &Point) -> f64 {
        space.cell_basis[c].evaluate(self.cell_block(c), x)
    }

    pub fn sub(&self, other: &PressureFunction) -> PressureFunction {
        let coeffs = self.coeffs.iter().zip(&other.coeffs).map(|(a, b)| a - b).collect();
        PressureFunction { k: self.k, coeffs }
    }
}

/// Space, coefficients and cached local operators of one discretization.
pub struct Discretization<'m> {
    pub space: Space<'m>,
    pub coeffs: Coefficients,
    pub ops: Vec<LocalOperators>,
}

impl<'m> Discretization<'m> {
    pub fn new(mesh: &'m PolyMesh, k: usize, coeffs: Coefficients) -> Result<Self> {
        Self::with_space(Space::new(mesh, k)?, coeffs)
    }

    pub fn with_space(space: Space<'m>, coeffs: Coefficients) -> Result<Self> {
        coeffs.check()?;
        let ops = build_operators(&space, &coeffs)?;
        Ok(Self { space, coeffs, ops })
    }

    pub fn mesh(&self) -> &'m PolyMesh {
        self.space.mesh
    }

    pub fn k(&self) -> usize {
        self.space.k
    }

    pub fn zero_velocity(&self) -> WeakFunction {
        WeakFunction::zeros_like(&self.space)
    }

    pub fn zero_pressure(&self) -> PressureFunction {
        PressureFunction::zeros(self.k(), self.mesh().num_cells())
    }

    fn check(&self, v: &WeakFunction) -> Result<()> {
        let w = self.zero_velocity();
        if v.k != w.k || v.interior.len() != w.interior.len() || v.faces.len() != w.faces.len() {
            return Err(WgError::Mismatch(format!(
                "weak function (k={}, {} + {} values) does not match the discretization (k={})",
                v.k,
                v.interior.len(),
                v.faces.len(),
                w.k
            )));
        }
        Ok(())
    }

    fn check_p(&self, q: &PressureFunction) -> Result<()> {
        if q.k != self.k() || q.coeffs.len() != self.zero_pressure().coeffs.len() {
            return Err(WgError::Mismatch("pressure function does not match the discretization".into()));
        }
        Ok(())
    }

    /// `a(v, w) = (κ∇_w×v, ∇_w×w) + s(v, w)`.
    pub fn apply_a(&self, v: &WeakFunction, w: &WeakFunction) -> Result<f64> {
        self.check(v)?;
        self.check(w)?;
        let mesh = self.mesh();
        Ok(self.sum_cells(|c| {
            let (vl, wl) = (v.local(mesh, c), w.local(mesh, c));
            let op = &self.ops[c];
            let mp = &self.space.mass_p[c];
            let (cv, cw) = (&op.curl * &vl, &op.curl * &wl);
            (cv.transpose() * crate::weakops::kron(&op.kappa, mp) * cw)[0] + (vl.transpose() * &op.stab * wl)[0]
        }))
    }

    /// `b(v, q) = (∇_w·(μv), q)`.
    pub fn apply_b(&self, v: &WeakFunction, q: &PressureFunction) -> Result<f64> {
        self.check(v)?;
        self.check_p(q)?;
        let mesh = self.mesh();
        Ok(self.sum_cells(|c| {
            let qc = DVector::from_column_slice(q.cell_block(c));
            (qc.transpose() * &self.ops[c].div_moments * v.local(mesh, c))[0]
        }))
    }

    /// The stabilizer `s(v, w)`.
    pub fn stabilizer(&self, v: &WeakFunction, w: &WeakFunction) -> Result<f64> {
        self.check(v)?;
        self.check(w)?;
        let mesh = self.mesh();
        Ok(self.sum_cells(|c| (v.local(mesh, c).transpose() * &self.ops[c].stab * w.local(mesh, c))[0]))
    }

    /// Deterministic parallel sum over cells.
    pub fn sum_cells(&self, f: impl Fn(usize) -> f64 + Sync + Send) -> f64 {
        let parts: Vec<f64> = (0..self.mesh().num_cells()).into_par_iter().map(f).collect();
        pairwise_sum(&parts)
    }

    /// Full velocity indices of the local DoFs of cell `c`.
    pub fn local_indices(&self, c: usize) -> Vec<usize> {
        let mesh = self.mesh();
        let (s_c, s_f) = (3 * self.space.dim_k(), 3 * self.space.dim_e());
        let ni = s_c * mesh.num_cells();
        let cell = mesh.cell(c);
        let mut idx: Vec<usize> = (c * s_c..(c + 1) * s_c).collect();
        for cf in &cell.faces {
            idx.extend(ni + cf.face * s_f..ni + (cf.face + 1) * s_f);
        }
        idx
    }
}

/// Pairwise (tree) summation: fixed order, reproducible.
pub fn pairwise_sum(v: &[f64]) -> f64 {
    match v.len() {
        0 => 0.0,
        1 => v[0],
        n if n <= 8 => v.iter().sum(),
        n => pairwise_sum(&v[..n / 2]) + pairwise_sum(&v[n / 2..]),
    }
}

/// Data of the model problem on one mesh.
#[derive(Clone)]
pub struct ProblemInstance {
    pub coeffs: Coefficients,
    /// Right-hand side of the first equation, tested against `v_0`.
    pub g: VectorField,
    /// Prescribed `∇·(μu)`.
    pub f: ScalarField,
    /// Boundary field whose tangential part is imposed on `u_b`.
    pub xi: VectorField,
    /// Prescribed fluxes `⟨μu·n_i, 1⟩` on the cavity boundaries.
    pub beta: Vec<f64>,
}

impl ProblemInstance {
    /// All data zero, identity coefficients.
    pub fn homogeneous(mesh: &PolyMesh) -> Self {
        Self {
            coeffs: Coefficients::identity(mesh.num_cells()),
            g: Arc::new(|_| Point::zeros()),
            f: Arc::new(|_| 0.0),
            xi: Arc::new(|_| Point::zeros()),
            beta: vec![0.0; mesh.num_cavities()],
        }
    }
}

/// Compressed sparse row matrix; symmetric systems store both triangles.
#[derive(Clone, Debug, PartialEq)]
pub struct SparseMatrix {
    pub n: usize,
    pub row_ptr: Vec<usize>,
    pub col_idx: Vec<usize>,
    pub values: Vec<f64>,
}

impl SparseMatrix {
    /// Builds from `(row, col, value)` triplets. Duplicates are summed in
    /// their input order, so equal input gives bit-identical output.
    pub fn from_triplets(n: usize, mut t: Vec<(u32, u32, f64)>) -> Self {
        t.sort_by_key(|&(i, j, _)| ((i as u64) << 32) | j as u64);
        let mut row_ptr = vec![0usize; n + 1];
        let mut col_idx = Vec::with_capacity(t.len() / 2);
        let mut values = Vec::with_capacity(t.len() / 2);
        let mut last: Option<(u32, u32)> = None;
        for (i, j, v) in t {
            if last == Some((i, j)) {
                *values.last_mut().unwrap() += v;
            } else {
                col_idx.push(j as usize);
                values.push(v);
                row_ptr[i as usize + 1] += 1;
                last = Some((i, j));
            }
        }
        for i in 0..n {
            row_ptr[i + 1] += row_ptr[i];
        }
        Self { n, row_ptr, col_idx, values }
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let cols = &self.col_idx[self.row_ptr[i]..self.row_ptr[i + 1]];
        match cols.binary_search(&j) {
            Ok(p) => self.values[self.row_ptr[i] + p],
            Err(_) => 0.0,
        }
    }

    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        (0..self.n)
            .into_par_iter()
            .map(|i| (self.row_ptr[i]..self.row_ptr[i + 1]).map(|p| self.values[p] * x[self.col_idx[p]]).sum())
            .collect()
    }

    /// `max |M_ij - M_ji|` over stored entries.
    pub fn max_asymmetry(&self) -> f64 {
        let mut m = 0.0f64;
        for i in 0..self.n {
            for p in self.row_ptr[i]..self.row_ptr[i + 1] {
                m = m.max((self.values[p] - self.get(self.col_idx[p], i)).abs());
            }
        }
        m
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let mut d = DMatrix::zeros(self.n, self.n);
        for i in 0..self.n {
            for p in self.row_ptr[i]..self.row_ptr[i + 1] {
                d[(i, self.col_idx[p])] = self.values[p];
            }
        }
        d
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.n).map(|i| self.get(i, i)).collect()
    }
}

/// Maps between the full DoF numbering and the unknowns of the linear system.
#[derive(Clone, Debug)]
pub struct SystemLayout {
    pub k: usize,
    pub num_cells: usize,
    pub num_faces: usize,
    /// Interior and face velocity DoFs before elimination.
    pub n_interior: usize,
    pub n_face: usize,
    /// Free velocity unknowns, pressures, multipliers.
    pub n_free: usize,
    pub n_pressure: usize,
    pub n_mult: usize,
    /// System index of each full velocity DoF, `None` if eliminated.
    pub free_index: Vec<Option<usize>>,
    /// Values of the eliminated DoFs (zero at free positions).
    pub fixed_values: Vec<f64>,
}

impl SystemLayout {
    pub fn size(&self) -> usize {
        self.n_free + self.n_pressure + self.n_mult
    }

    pub fn n_velocity(&self) -> usize {
        self.n_interior + self.n_face
    }

    pub fn num_fixed(&self) -> usize {
        self.n_velocity() - self.n_free
    }

    /// Splits a system solution into velocity, pressure and multipliers,
    /// reinserting the eliminated boundary values.
    pub fn expand(&self, x: &[f64]) -> (WeakFunction, PressureFunction, Vec<f64>) {
        let mut full = self.fixed_values.clone();
        for (i, fi) in self.free_index.iter().enumerate() {
            if let Some(fi) = fi {
                full[i] = x[*fi];
            }
        }
        let u = WeakFunction::from_vec(self.k, self.num_cells, &full);
        let p = PressureFunction { k: self.k, coeffs: x[self.n_free..self.n_free + self.n_pressure].to_vec() };
        let lambda = x[self.n_free + self.n_pressure..].to_vec();
        (u, p, lambda)
    }

    /// Packs functions into a system vector (eliminated values are dropped).
    pub fn restrict(&self, u: &WeakFunction, p: &PressureFunction, lambda: &[f64]) -> Vec<f64> {
        let mut x = vec![0.0; self.size()];
        for (i, v) in u.to_vec().into_iter().enumerate() {
            if let Some(fi) = self.free_index[i] {
                x[fi] = v;
            }
        }
        x[self.n_free..self.n_free + self.n_pressure].copy_from_slice(&p.coeffs);
        x[self.n_free + self.n_pressure..].copy_from_slice(lambda);
        x
    }

    /// Human-readable block layout, used as the sidecar of matrix dumps.
    pub fn describe(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "degree {}", self.k);
        let _ = writeln!(s, "cells {} faces {}", self.num_cells, self.num_faces);
        let _ = writeln!(s, "unknowns {}", self.size());
        let _ = writeln!(s, "velocity 0 {} (free of {} full dofs; {} boundary tangential eliminated)", self.n_free, self.n_velocity(), self.num_fixed());
        let _ = writeln!(s, "velocity_interior_full 0 {}", self.n_interior);
        let _ = writeln!(s, "velocity_face_full {} {}", self.n_interior, self.n_velocity());
        let _ = writeln!(s, "pressure {} {}", self.n_free, self.n_free + self.n_pressure);
        let _ = writeln!(s, "multiplier {} {}", self.n_free + self.n_pressure, self.size());
        s
    }
}

/// The symmetric indefinite system `[A Bᵀ Cᵀ; B 0 0; C 0 0] x = rhs`.
#[derive(Clone, Debug)]
pub struct SaddleSystem {
    pub matrix: SparseMatrix,
    pub rhs: Vec<f64>,
    pub layout: SystemLayout,
}

impl SaddleSystem {
    /// Writes `i j value` lines to `path` and the block layout to `path.layout`.
    pub fn write_debug(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let io = |e: std::io::Error| WgError::InvalidArgument(format!("cannot write {}: {e}", path.display()));
        let mut out = std::io::BufWriter::new(std::fs::File::create(path).map_err(io)?);
        let m = &self.matrix;
        for i in 0..m.n {
            for p in m.row_ptr[i]..m.row_ptr[i + 1] {
                writeln!(out, "{} {} {:e}", i, m.col_idx[p], m.values[p]).map_err(io)?;
            }
        }
        out.flush().map_err(io)?;
        let mut side = path.as_os_str().to_owned();
        side.push(".layout");
        std::fs::write(side, self.layout.describe()).map_err(io)
    }
}

struct CellContribution {
    idx: Vec<usize>,
    a: DMatrix<f64>,
    b: DMatrix<f64>,
    g: DVector<f64>,
    f: DVector<f64>,
}

/// Assembles the saddle-point system of the model problem.
pub fn assemble(disc: &Discretization, problem: &ProblemInstance) -> Result<SaddleSystem> {
    let space = &disc.space;
    let mesh = disc.mesh();
    let (nk, np, ne) = (space.dim_k(), space.dim_p(), space.dim_e());
    let m = mesh.num_cavities();
    if problem.beta.len() != m {
        return Err(WgError::Mismatch(format!("{} flux values given for {m} cavity boundaries", problem.beta.len())));
    }
    for i in 1..=m {
        if mesh.component_area(i) <= 0.0 {
            return Err(WgError::EmptyBoundaryComponent(i));
        }
    }

    // Eliminated boundary values: Q_b of the tangential frame components of ξ.
    let n_interior = 3 * nk * mesh.num_cells();
    let n_face = 3 * ne * mesh.num_faces();
    let mut fixed_values = vec![0.0; n_interior + n_face];
    let mut is_fixed = vec![false; n_interior + n_face];
    let boundary: Vec<usize> = mesh.boundary_faces().collect();
    let projected: Vec<(DVector<f64>, DVector<f64>)> = boundary
        .par_iter()
        .map(|&f| {
            let fb = &space.face_basis[f];
            let xi = &problem.xi;
            (space.project_face(f, |x| xi(x).dot(&fb.t1)), space.project_face(f, |x| xi(x).dot(&fb.t2)))
        })
        .collect();
    for (&f, (p1, p2)) in boundary.iter().zip(projected) {
        let off = n_interior + 3 * ne * f;
        for j in 0..ne {
            fixed_values[off + ne + j] = p1[j];
            fixed_values[off + 2 * ne + j] = p2[j];
            is_fixed[off + ne + j] = true;
            is_fixed[off + 2 * ne + j] = true;
        }
    }
    let mut free_index = vec![None; n_interior + n_face];
    let mut n_free = 0;
    for (i, fixed) in is_fixed.iter().enumerate() {
        if !fixed {
            free_index[i] = Some(n_free);
            n_free += 1;
        }
    }
    let n_pressure = np * mesh.num_cells();
    let layout = SystemLayout {
        k: space.k,
        num_cells: mesh.num_cells(),
        num_faces: mesh.num_faces(),
        n_interior,
        n_face,
        n_free,
        n_pressure,
        n_mult: m,
        free_index,
        fixed_values,
    };
    let n = layout.size();
    if n >= u32::MAX as usize {
        return Err(WgError::InvalidArgument(format!("system with {n} unknowns is too large")));
    }

    let contributions = (0..mesh.num_cells())
        .into_par_iter()
        .map(|c| {
            let op = &disc.ops[c];
            let rule = space.cell_data_rule(c)?;
            let basis = &space.cell_basis[c];
            let mut g = DVector::zeros(3 * nk);
            let mut f = DVector::zeros(np);
            let mut psi = vec![0.0; nk];
            for (x, w) in rule.points.iter().zip(&rule.weights) {
                basis.eval_into(x, &mut psi);
                let gv = (problem.g)(x) * *w;
                let fv = (problem.f)(x) * w;
                for i in 0..nk {
                    for comp in 0..3 {
                        g[comp * nk + i] += gv[comp] * psi[i];
                    }
                }
                for a in 0..np {
                    f[a] += fv * psi[a];
                }
            }
            Ok(CellContribution {
                idx: disc.local_indices(c),
                a: op.a_matrix(&space.mass_p[c]),
                b: op.div_moments.clone(),
                g,
                f,
            })
        })
        .collect::<Result<Vec<_>>>()?;

    let mut rhs = vec![0.0; n];
    let mut trip: Vec<(u32, u32, f64)> = Vec::new();
    let p0 = n_free;
    for (c, cc) in contributions.iter().enumerate() {
        for (l, &gi) in cc.idx.iter().enumerate().take(3 * nk) {
            rhs[layout.free_index[gi].expect("interior dofs are free")] += cc.g[l];
        }
        for a in 0..np {
            rhs[p0 + c * np + a] += cc.f[a];
        }
        for (lj, &gj) in cc.idx.iter().enumerate() {
            match layout.free_index[gj] {
                Some(fj) => {
                    for (li, &gi) in cc.idx.iter().enumerate() {
                        if let Some(fi) = layout.free_index[gi] {
                            let v = cc.a[(li, lj)];
                            if v != 0.0 {
                                trip.push((fi as u32, fj as u32, v));
                            }
                        }
                    }
                    for a in 0..np {
                        let v = cc.b[(a, lj)];
                        if v != 0.0 {
                            let pr = (p0 + c * np + a) as u32;
                            trip.push((pr, fj as u32, v));
                            trip.push((fj as u32, pr, v));
                        }
                    }
                }
                None => {
                    let xj = layout.fixed_values[gj];
                    if xj != 0.0 {
                        for (li, &gi) in cc.idx.iter().enumerate() {
                            if let Some(fi) = layout.free_index[gi] {
                                rhs[fi] -= cc.a[(li, lj)] * xj;
                            }
                        }
                        for a in 0..np {
                            rhs[p0 + c * np + a] -= cc.b[(a, lj)] * xj;
                        }
                    }
                }
            }
        }
    }

    // Flux constraints on cavity boundaries: ⟨v_b·n_i, 1⟩_{Γ_i}.
    let l0 = n_free + n_pressure;
    for f in mesh.boundary_faces() {
        let Some(tag) = mesh.face(f).tag else { continue };
        if tag == 0 {
            continue;
        }
        let sign = mesh.face_references(f)[0].1;
        let fb = &space.face_basis[f];
        let rule = &space.face_rule[f];
        let mut mom = vec![0.0; ne];
        for (x, w) in rule.points.iter().zip(&rule.weights) {
            for (j, v) in fb.eval(x).iter().enumerate() {
                mom[j] += w * v;
            }
        }
        let row = (l0 + tag - 1) as u32;
        for (j, v) in mom.iter().enumerate() {
            let col = layout.free_index[n_interior + 3 * ne * f + j].expect("normal groups are free") as u32;
            trip.push((row, col, sign * v));
            trip.push((col, row, sign * v));
        }
    }
    rhs[l0..].copy_from_slice(&problem.beta);

    Ok(SaddleSystem { matrix: SparseMatrix::from_triplets(n, trip), rhs, layout })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::{build_cube_hex_mesh, build_cube_tet_mesh, build_hollow_cube_mesh};

    #[test]
    fn single_cube_has_31_unknowns() {
        let mesh = build_cube_hex_mesh(1, None).unwrap();
        let disc = Discretization::new(&mesh, 1, Coefficients::identity(1)).unwrap();
        let sys = assemble(&disc, &ProblemInstance::homogeneous(&mesh)).unwrap();
        assert_eq!(sys.layout.size(), 31);
        assert_eq!((sys.layout.n_free, sys.layout.n_pressure, sys.layout.n_mult), (30, 1, 0));
        assert_eq!(sys.matrix.max_asymmetry(), 0.0);
    }

    #[test]
    fn assembled_matrix_is_exactly_symmetric() {
        let mesh = build_hollow_cube_mesh(3).unwrap();
        let coeffs = Coefficients::from_fn(&mesh, |x| {
            let s = if x.x < 0.5 { 1.0 } else { 2.0 };
            (nalgebra::Matrix3::identity() * s, nalgebra::Matrix3::identity())
        })
        .unwrap();
        let disc = Discretization::new(&mesh, 2, coeffs.clone()).unwrap();
        let mut prob = ProblemInstance::homogeneous(&mesh);
        prob.coeffs = coeffs;
        prob.xi = Arc::new(|x| Point::new(x.y, x.z * x.x, 1.0));
        let sys = assemble(&disc, &prob).unwrap();
        assert_eq!(sys.layout.n_mult, 1);
        assert_eq!(sys.matrix.max_asymmetry(), 0.0);
    }

    #[test]
    fn stabilizer_of_a_normal_face_mode() {
        let mesh = build_cube_hex_mesh(1, None).unwrap();
        let disc = Discretization::new(&mesh, 1, Coefficients::identity(1)).unwrap();
        let mut v = disc.zero_velocity();
        v.face_block_mut(0)[0] = 1.0;
        let s = disc.stabilizer(&v, &v).unwrap();
        assert!((s - 1.0 / 3f64.sqrt()).abs() < 1e-14);
    }

    #[test]
    fn forms_match_assembled_blocks() {
        let mesh = build_cube_tet_mesh(2).unwrap();
        let disc = Discretization::new(&mesh, 1, Coefficients::identity(mesh.num_cells())).unwrap();
        let sys = assemble(&disc, &ProblemInstance::homogeneous(&mesh)).unwrap();
        let l = &sys.layout;
        // random-ish functions with zero boundary tangential groups
        let mut x = vec![0.0; l.size()];
        for (i, v) in x.iter_mut().enumerate() {
            *v = ((i * 7919 % 113) as f64 / 56.0 - 1.0) * if i < l.n_free { 1.0 } else { 0.5 };
        }
        let (u, p, _) = l.expand(&x);
        let mut xu = x.clone();
        for v in &mut xu[l.n_free..] {
            *v = 0.0;
        }
        let mx = sys.matrix.matvec(&xu);
        let a_form: f64 = (0..l.n_free).map(|i| mx[i] * x[i]).sum();
        let b_form: f64 = (l.n_free..l.n_free + l.n_pressure).map(|i| mx[i] * x[i]).sum();
        let a = disc.apply_a(&u, &u).unwrap();
        let b = disc.apply_b(&u, &p).unwrap();
        assert!((a - a_form).abs() <= 1e-12 * a.abs());
        assert!((b - b_form).abs() <= 1e-12 * (1.0 + b.abs()));
        assert!(a >= 0.0);
    }

    #[test]
    fn debug_dump_has_sidecar() {
        let mesh = build_cube_hex_mesh(1, None).unwrap();
        let disc = Discretization::new(&mesh, 1, Coefficients::identity(1)).unwrap();
        let sys = assemble(&disc, &ProblemInstance::homogeneous(&mesh)).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("system.txt");
        sys.write_debug(&path).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert_eq!(text.lines().count(), sys.matrix.nnz());
        let layout = std::fs::read_to_string(dir.path().join("system.txt.layout")).unwrap();
        assert!(layout.contains("unknowns 31"));
    }

    #[test]
    fn mismatched_functions_are_rejected() {
        let mesh = build_cube_hex_mesh(1, None).unwrap();
        let disc = Discretization::new(&mesh, 1, Coefficients::identity(1)).unwrap();
        let v = WeakFunction::zeros(2, 1, 6);
        assert!(matches!(disc.apply_a(&v, &v), Err(WgError::Mismatch(_))));
    }
}
