//! Element-local weak divergence, weak curl and stabilizer matrices.
//!
//! Local DoF layout of a cell: the interior block (`3·dim P_k`, component
//! major) followed by one block per cell face in the order of `Cell::faces`,
//! each holding `[n | t1 | t2]` coefficient groups of `dim P_k(e)` scalars in
//! the face's own frame.

use nalgebra::{DMatrix, DVector, Matrix3};
use rayon::prelude::*;

use crate::error::{Result, WgError};
use crate::mesh::PolyMesh;
use crate::polybasis::Space;

/// Piecewise-constant material tensors, one per cell.
#[derive(Clone, Debug)]
pub struct Coefficients {
    pub mu: Vec<Matrix3<f64>>,
    pub kappa: Vec<Matrix3<f64>>,
}

impl Coefficients {
    pub fn identity(num_cells: usize) -> Self {
        Self { mu: vec![Matrix3::identity(); num_cells], kappa: vec![Matrix3::identity(); num_cells] }
    }

    /// Evaluates `(μ, κ)` at each cell centroid.
    pub fn from_fn(mesh: &PolyMesh, f: impl Fn(&crate::mesh::Point) -> (Matrix3<f64>, Matrix3<f64>)) -> Result<Self> {
        let (mu, kappa) = mesh.cells().iter().map(|c| f(&c.centroid)).unzip();
        let coeffs = Self { mu, kappa };
        coeffs.check()?;
        Ok(coeffs)
    }

    /// Both tensors must be symmetric positive definite on every cell.
    pub fn check(&self) -> Result<()> {
        for (c, (m, k)) in self.mu.iter().zip(&self.kappa).enumerate() {
            for (name, t) in [("mu", m), ("kappa", k)] {
                let asym = (t - t.transpose()).abs().max();
                if asym > 1e-14 * t.abs().max() || t.cholesky().is_none() {
                    return Err(WgError::InvalidArgument(format!("{name} on cell {c} is not symmetric positive definite")));
                }
            }
        }
        Ok(())
    }
}

/// Number of local DoFs of cell `c`.
pub fn local_dim(space: &Space, c: usize) -> usize {
    3 * space.dim_k() + 3 * space.dim_e() * space.mesh.cell(c).faces.len()
}

#[derive(Clone, Debug)]
pub struct LocalOperators {
    pub mu: Matrix3<f64>,
    pub kappa: Matrix3<f64>,
    /// Moment matrix of the weak divergence: rows are `P_{k-1}` test functions.
    /// It is also the local `b`-form block.
    pub div_moments: DMatrix<f64>,
    /// Coefficients of `∇_w·(μv)` in `P_{k-1}(T)`.
    pub div: DMatrix<f64>,
    /// Coefficients of `∇_w×v` in `[P_{k-1}(T)]³`, component major.
    pub curl: DMatrix<f64>,
    /// Local stabilizer matrix (including the `1/h_T` weight).
    pub stab: DMatrix<f64>,
}

impl LocalOperators {
    pub fn build(space: &Space, c: usize, mu: Matrix3<f64>, kappa: Matrix3<f64>) -> Result<Self> {
        let mesh = space.mesh;
        let cell = mesh.cell(c);
        let (nk, np, ne) = (space.dim_k(), space.dim_p(), space.dim_e());
        let n = local_dim(space, c);
        let basis = &space.cell_basis[c];

        let mut rd = DMatrix::zeros(np, n);
        let mut rc = DMatrix::zeros(3 * np, n);
        let rule = &space.cell_rule[c];
        for (x, w) in rule.points.iter().zip(&rule.weights) {
            let psi = basis.eval(x);
            let grad = basis.grad(x);
            for a in 0..np {
                let mg = mu * grad[a];
                for comp in 0..3 {
                    for i in 0..nk {
                        rd[(a, comp * nk + i)] -= w * psi[i] * mg[comp];
                    }
                }
                // ∇×(e_m φ_a) = ∇φ_a × e_m
                for m in 0..3 {
                    let mut e = crate::mesh::Point::zeros();
                    e[m] = 1.0;
                    let cv = grad[a].cross(&e);
                    for comp in 0..3 {
                        if cv[comp] != 0.0 {
                            for i in 0..nk {
                                rc[(m * np + a, comp * nk + i)] += w * psi[i] * cv[comp];
                            }
                        }
                    }
                }
            }
        }

        let mut stab = DMatrix::zeros(n, n);
        let inv_h = 1.0 / cell.diameter;
        let mut rn = DVector::zeros(n);
        let mut r1 = DVector::zeros(n);
        let mut r2 = DVector::zeros(n);
        for (j, cf) in cell.faces.iter().enumerate() {
            let off = 3 * nk + 3 * ne * j;
            let fb = &space.face_basis[cf.face];
            let s = cf.sign;
            let nt = fb.normal * s;
            let mun = mu * nt;
            let frule = &space.face_rule[cf.face];
            for (x, w) in frule.points.iter().zip(&frule.weights) {
                let psi_e = fb.eval(x);
                let psi = basis.eval(x);
                for a in 0..np {
                    for (jj, pe) in psi_e.iter().enumerate() {
                        let fm = w * pe * psi[a];
                        rd[(a, off + jj)] += s * fm;
                        for m in 0..3 {
                            rc[(m * np + a, off + ne + jj)] += s * fb.t2[m] * fm;
                            rc[(m * np + a, off + 2 * ne + jj)] -= s * fb.t1[m] * fm;
                        }
                    }
                }
                rn.fill(0.0);
                r1.fill(0.0);
                r2.fill(0.0);
                for comp in 0..3 {
                    for i in 0..nk {
                        rn[comp * nk + i] = mun[comp] * psi[i];
                        r1[comp * nk + i] = fb.t1[comp] * psi[i];
                        r2[comp * nk + i] = fb.t2[comp] * psi[i];
                    }
                }
                for (jj, pe) in psi_e.iter().enumerate() {
                    rn[off + jj] = -s * pe;
                    r1[off + ne + jj] = -pe;
                    r2[off + 2 * ne + jj] = -pe;
                }
                let wh = w * inv_h;
                stab.ger(wh, &rn, &rn, 1.0);
                stab.ger(wh, &r1, &r1, 1.0);
                stab.ger(wh, &r2, &r2, 1.0);
                for (jj, _) in psi_e.iter().enumerate() {
                    rn[off + jj] = 0.0;
                    r1[off + ne + jj] = 0.0;
                    r2[off + 2 * ne + jj] = 0.0;
                }
            }
        }
        symmetrize(&mut stab);

        let div = solve_columns(space, c, &rd, 1);
        let curl = solve_columns(space, c, &rc, 3);
        if !div.iter().chain(curl.iter()).all(|v| v.is_finite()) {
            return Err(WgError::Degenerate { what: format!("cell {c}: non-finite weak operator") });
        }
        Ok(Self { mu, kappa, div_moments: rd, div, curl, stab })
    }

    pub fn weak_divergence(&self, v_local: &DVector<f64>) -> DVector<f64> {
        &self.div * v_local
    }

    pub fn weak_curl(&self, v_local: &DVector<f64>) -> DVector<f64> {
        &self.curl * v_local
    }

    /// Local matrix of `a(·,·) = (κ∇_w×·, ∇_w×·)_T + s_T(·,·)`, exactly symmetric.
    pub fn a_matrix(&self, mass_p: &DMatrix<f64>) -> DMatrix<f64> {
        let mut a = &self.stab + self.curl.transpose() * (kron(&self.kappa, mass_p) * &self.curl);
        symmetrize(&mut a);
        a
    }
}

/// Applies the inverse `P_{k-1}` mass matrix to each of `blocks` row blocks.
fn solve_columns(space: &Space, c: usize, r: &DMatrix<f64>, blocks: usize) -> DMatrix<f64> {
    let np = space.dim_p();
    let mut out = DMatrix::zeros(r.nrows(), r.ncols());
    for b in 0..blocks {
        for j in 0..r.ncols() {
            let col = DVector::from_iterator(np, (0..np).map(|a| r[(b * np + a, j)]));
            let x = space.solve_mass_p(c, col);
            for a in 0..np {
                out[(b * np + a, j)] = x[a];
            }
        }
    }
    out
}

/// `κ ⊗ M`: block `(m, m')` equals `κ_{mm'} M`.
pub fn kron(kappa: &Matrix3<f64>, m: &DMatrix<f64>) -> DMatrix<f64> {
    let np = m.nrows();
    let mut out = DMatrix::zeros(3 * np, 3 * np);
    for i in 0..3 {
        for j in 0..3 {
            out.view_mut((i * np, j * np), (np, np)).copy_from(&(m * kappa[(i, j)]));
        }
    }
    out
}

pub fn symmetrize(a: &mut DMatrix<f64>) {
    let n = a.nrows();
    for i in 0..n {
        for j in 0..i {
            let v = 0.5 * (a[(i, j)] + a[(j, i)]);
            a[(i, j)] = v;
            a[(j, i)] = v;
        }
    }
}

/// Local operators of every cell, built in parallel.
pub fn build_operators(space: &Space, coeffs: &Coefficients) -> Result<Vec<LocalOperators>> {
    if coeffs.mu.len() != space.mesh.num_cells() || coeffs.kappa.len() != space.mesh.num_cells() {
        return Err(WgError::Mismatch("coefficient count differs from cell count".into()));
    }
    (0..space.mesh.num_cells())
        .into_par_iter()
        .map(|c| LocalOperators::build(space, c, coeffs.mu[c], coeffs.kappa[c]))
        .collect()
}
