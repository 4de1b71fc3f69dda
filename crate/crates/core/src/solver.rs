//! Direct and iterative solvers for the symmetric indefinite saddle system.

use faer::dyn_stack::{MemBuffer, MemStack};
use faer::linalg::solvers::SolveCore;
use faer::linalg::cholesky::ldlt::factor::LdltRegularization;
use faer::sparse::linalg::cholesky::{factorize_symbolic_cholesky, CholeskySymbolicParams, SymmetricOrdering};
use faer::sparse::linalg::SupernodalThreshold;
use faer::sparse::{SparseColMatRef, SymbolicSparseColMatRef};
use faer::{Conj, MatMut, Par, Side};

use crate::assembly::{PressureFunction, SaddleSystem, SparseMatrix, WeakFunction};
use crate::error::{Result, WgError};

/// Relative size of the pivot regularization of the LDLᵀ path.
const REGULARIZATION: f64 = 1e-10;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SolverMethod {
    /// Symmetric indefinite factorization, falling back to LU and then to MINRES.
    Auto,
    /// Supernodal LDLᵀ with sign-aware pivot regularization and iterative refinement.
    Ldlt,
    /// Sparse LU with partial pivoting.
    Lu,
    /// Diagonally scaled MINRES.
    Minres,
}

#[derive(Clone, Debug)]
pub struct SolverOptions {
    pub method: SolverMethod,
    /// Required relative residual `‖Mx − b‖ / ‖b‖`.
    pub tol: f64,
    /// Factor storage above this many bytes switches `Auto` to MINRES.
    pub memory_cap: usize,
    pub max_refinement_steps: usize,
    pub max_iterations: usize,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            method: SolverMethod::Auto,
            tol: 1e-10,
            memory_cap: 4 << 30,
            max_refinement_steps: 20,
            max_iterations: 200_000,
        }
    }
}

#[derive(Clone, Debug, Default)]
pub struct SolveStats {
    pub method: String,
    pub unknowns: usize,
    pub matrix_nnz: usize,
    pub factor_entries: usize,
    pub refinement_steps: usize,
    pub iterations: usize,
    pub residual: f64,
}

#[derive(Clone, Debug)]
pub struct Solution {
    pub u: WeakFunction,
    pub p: PressureFunction,
    pub lambda: Vec<f64>,
    /// Relative residual, or `‖x‖` for a zero right-hand side.
    pub residual: f64,
    pub stats: SolveStats,
}

/// Solves the saddle system and reinserts the eliminated boundary values.
pub fn solve(system: &SaddleSystem, opts: &SolverOptions) -> Result<Solution> {
    let (x, stats) = solve_linear(&system.matrix, &system.rhs, opts)?;
    let (u, p, lambda) = system.layout.expand(&x);
    Ok(Solution { u, p, lambda, residual: stats.residual, stats })
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn residual(m: &SparseMatrix, x: &[f64], b: &[f64]) -> Vec<f64> {
    m.matvec(x).iter().zip(b).map(|(mx, b)| b - mx).collect()
}

/// Relative residual, or the solution norm when `b = 0`.
fn measure(m: &SparseMatrix, x: &[f64], b: &[f64]) -> f64 {
    let nb = norm(b);
    if nb == 0.0 {
        norm(x)
    } else {
        norm(&residual(m, x, b)) / nb
    }
}

/// Solves `M x = b` for a symmetric matrix `M` stored with both triangles.
pub fn solve_linear(m: &SparseMatrix, b: &[f64], opts: &SolverOptions) -> Result<(Vec<f64>, SolveStats)> {
    if b.len() != m.n {
        return Err(WgError::Mismatch(format!("right-hand side of length {} for {} unknowns", b.len(), m.n)));
    }
    let mut stats = SolveStats { unknowns: m.n, matrix_nnz: m.nnz(), ..Default::default() };
    if m.n == 0 {
        stats.method = "empty".into();
        return Ok((Vec::new(), stats));
    }
    let methods: &[SolverMethod] = match opts.method {
        SolverMethod::Auto => &[SolverMethod::Ldlt, SolverMethod::Lu, SolverMethod::Minres],
        SolverMethod::Ldlt => &[SolverMethod::Ldlt],
        SolverMethod::Lu => &[SolverMethod::Lu],
        SolverMethod::Minres => &[SolverMethod::Minres],
    };
    let mut last = None;
    for &method in methods {
        let attempt = match method {
            SolverMethod::Ldlt => solve_ldlt(m, b, opts, &mut stats),
            SolverMethod::Lu => solve_lu(m, b, opts, &mut stats),
            _ => solve_minres(m, b, opts, &mut stats),
        };
        match attempt {
            Ok(x) if stats.residual <= opts.tol => return Ok((x, stats)),
            Ok(_) => {
                last = Some(WgError::SolverFailed { method: stats.method.clone(), residual: stats.residual, tol: opts.tol })
            }
            Err(e) => last = Some(e),
        }
    }
    Err(last.expect("at least one method was attempted"))
}

/// Refines `x` with the given approximate inverse until the residual target is met.
fn refine(
    m: &SparseMatrix,
    b: &[f64],
    x: &mut [f64],
    opts: &SolverOptions,
    stats: &mut SolveStats,
    apply: &dyn Fn(&mut [f64]),
) {
    stats.residual = measure(m, x, b);
    stats.refinement_steps = 0;
    while stats.residual > 0.01 * opts.tol && stats.refinement_steps < opts.max_refinement_steps {
        let mut r = residual(m, x, b);
        apply(&mut r);
        let trial: Vec<f64> = x.iter().zip(&r).map(|(x, d)| x + d).collect();
        let res = measure(m, &trial, b);
        stats.refinement_steps += 1;
        if !(res < stats.residual) {
            break;
        }
        x.copy_from_slice(&trial);
        stats.residual = res;
    }
}

fn csc(m: &SparseMatrix) -> SparseColMatRef<'_, usize, f64> {
    // A symmetric matrix in CSR form is its own CSC form.
    let sym = SymbolicSparseColMatRef::new_checked(m.n, m.n, &m.row_ptr, None, &m.col_idx);
    SparseColMatRef::new(sym, &m.values)
}

fn solve_ldlt(m: &SparseMatrix, b: &[f64], opts: &SolverOptions, stats: &mut SolveStats) -> Result<Vec<f64>> {
    stats.method = "ldlt".into();
    let a = csc(m);
    let params = CholeskySymbolicParams {
        supernodal_flop_ratio_threshold: SupernodalThreshold::FORCE_SUPERNODAL,
        ..Default::default()
    };
    let symbolic = factorize_symbolic_cholesky(a.symbolic(), Side::Lower, SymmetricOrdering::Amd, params)
        .map_err(|e| WgError::Factorization(format!("symbolic analysis failed: {e:?}")))?;
    stats.factor_entries = symbolic.len_val();
    if symbolic.len_val().saturating_mul(8) > opts.memory_cap {
        return Err(WgError::Factorization(format!(
            "factor needs {} entries, above the memory cap of {} bytes",
            symbolic.len_val(),
            opts.memory_cap
        )));
    }
    // Positive diagonals mark the velocity block; zero diagonals the
    // constraint rows. Pivots of the wrong sign or too close to zero are
    // replaced by ±δ and the perturbation is removed by refinement.
    let diag = m.diagonal();
    let scale = diag.iter().fold(0.0f64, |s, d| s.max(d.abs()));
    let signs: Vec<i8> = diag.iter().map(|&d| if d > 0.0 { 1 } else { -1 }).collect();
    let delta = REGULARIZATION * scale;
    let regularization = LdltRegularization {
        dynamic_regularization_signs: Some(&signs),
        dynamic_regularization_delta: delta,
        dynamic_regularization_epsilon: delta,
    };
    let par = Par::Seq;
    let mut values = vec![0.0f64; symbolic.len_val()];
    let ldlt = symbolic
        .factorize_numeric_ldlt(
            &mut values,
            a,
            Side::Lower,
            regularization,
            par,
            MemStack::new(&mut MemBuffer::new(symbolic.factorize_numeric_ldlt_scratch::<f64>(par, Default::default()))),
            Default::default(),
        )
        .map_err(|e| WgError::Factorization(format!("LDLᵀ factorization failed: {e:?}")))?;
    let scratch = ldlt.solve_in_place_scratch::<f64>(1, par);
    let apply = |v: &mut [f64]| {
        let len = v.len();
        let rhs = MatMut::from_column_major_slice_mut(v, len, 1);
        ldlt.solve_in_place_with_conj(Conj::No, rhs, par, MemStack::new(&mut MemBuffer::new(scratch)));
    };
    let mut x = b.to_vec();
    apply(&mut x);
    if !x.iter().all(|v| v.is_finite()) {
        stats.residual = f64::INFINITY;
        return Err(WgError::Factorization("LDLᵀ factorization produced non-finite values".into()));
    }
    refine(m, b, &mut x, opts, stats, &apply);
    Ok(x)
}

fn solve_lu(m: &SparseMatrix, b: &[f64], opts: &SolverOptions, stats: &mut SolveStats) -> Result<Vec<f64>> {
    stats.method = "lu".into();
    let lu = csc(m).sp_lu().map_err(|e| WgError::Factorization(format!("LU factorization failed: {e:?}")))?;
    let apply = |v: &mut [f64]| {
        let len = v.len();
        lu.solve_in_place_with_conj(Conj::No, MatMut::from_column_major_slice_mut(v, len, 1));
    };
    let mut x = b.to_vec();
    apply(&mut x);
    if !x.iter().all(|v| v.is_finite()) {
        stats.residual = f64::INFINITY;
        return Err(WgError::Factorization("LU factorization produced non-finite values".into()));
    }
    refine(m, b, &mut x, opts, stats, &apply);
    Ok(x)
}

/// MINRES on the symmetrically scaled system `S M S y = S b`, `x = S y`,
/// with `S = diag(|M_ii|)^{-1/2}` (unit scaling on zero diagonals).
fn solve_minres(m: &SparseMatrix, b: &[f64], opts: &SolverOptions, stats: &mut SolveStats) -> Result<Vec<f64>> {
    stats.method = "minres".into();
    let n = m.n;
    let s: Vec<f64> = m.diagonal().iter().map(|d| if d.abs() > 0.0 { 1.0 / d.abs().sqrt() } else { 1.0 }).collect();
    let op = |v: &[f64]| -> Vec<f64> {
        let sv: Vec<f64> = v.iter().zip(&s).map(|(v, s)| v * s).collect();
        m.matvec(&sv).iter().zip(&s).map(|(v, s)| v * s).collect()
    };
    let rhs: Vec<f64> = b.iter().zip(&s).map(|(b, s)| b * s).collect();
    let beta1 = norm(&rhs);
    let mut y = vec![0.0; n];
    if beta1 == 0.0 {
        stats.residual = 0.0;
        return Ok(y);
    }
    // Paige-Saunders recurrences
    let mut v_old = vec![0.0; n];
    let mut v: Vec<f64> = rhs.iter().map(|r| r / beta1).collect();
    let (mut w, mut w_old) = (vec![0.0; n], vec![0.0; n]);
    let (mut beta, mut eta) = (beta1, beta1);
    let (mut c_old, mut c, mut s_old, mut s_cur) = (1.0, 1.0, 0.0, 0.0);
    let target = 0.1 * opts.tol;
    let mut it = 0;
    while it < opts.max_iterations {
        it += 1;
        let mut av = op(&v);
        let alpha: f64 = av.iter().zip(&v).map(|(a, b)| a * b).sum();
        for i in 0..n {
            av[i] -= alpha * v[i] + beta * v_old[i];
        }
        let beta_new = norm(&av);
        let delta = c * alpha - c_old * s_cur * beta;
        let rho1 = (delta * delta + beta_new * beta_new).sqrt();
        let rho2 = s_cur * alpha + c_old * c * beta;
        let rho3 = s_old * beta;
        if rho1 == 0.0 {
            break;
        }
        let c_new = delta / rho1;
        let s_new = beta_new / rho1;
        for i in 0..n {
            let wn = (v[i] - rho3 * w_old[i] - rho2 * w[i]) / rho1;
            w_old[i] = w[i];
            w[i] = wn;
            y[i] += c_new * eta * wn;
        }
        eta *= -s_new;
        v_old = std::mem::take(&mut v);
        v = if beta_new > 0.0 { av.iter().map(|a| a / beta_new).collect() } else { vec![0.0; n] };
        beta = beta_new;
        c_old = c;
        c = c_new;
        s_old = s_cur;
        s_cur = s_new;
        if eta.abs() / beta1 < target || beta_new == 0.0 {
            break;
        }
    }
    stats.iterations = it;
    let x: Vec<f64> = y.iter().zip(&s).map(|(y, s)| y * s).collect();
    stats.residual = measure(m, &x, b);
    Ok(x)
}
