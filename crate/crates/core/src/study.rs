//! End-to-end runs: build the instance of a case on a mesh, solve, measure
//! errors; convergence tables over a mesh family.

use std::fmt::Write as _;
use std::sync::Arc;
use std::time::Instant;

use crate::analysis::{convergence_rate, error_report, ErrorReport, ERROR_NAMES};
use crate::assembly::{assemble, Discretization};
use crate::error::{Result, WgError};
use crate::mesh::PolyMesh;
use crate::polybasis::Space;
use crate::solver::{solve, Solution, SolverOptions};
use crate::verification::{check_case_derivatives, model_instance, tangential_case, ExactCase, MeshFamily};

/// Which instance of the case is solved.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Formulation {
    /// The model saddle problem with the case's own `κ`, `μ` and `p`.
    Model,
    /// The tangential div-curl problem (`κ = I`, data `∇×∇×u`).
    Tangential,
}

impl Formulation {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "model" => Ok(Self::Model),
            "tangential" => Ok(Self::Tangential),
            _ => Err(WgError::InvalidArgument(format!("unknown formulation '{s}' (expected model or tangential)"))),
        }
    }
}

#[derive(Clone, Debug)]
pub struct RunOptions {
    pub k: usize,
    /// Quadrature degree for data; `None` means `2k + 3`.
    pub data_degree: Option<usize>,
    pub formulation: Formulation,
    pub solver: SolverOptions,
}

impl Default for RunOptions {
    fn default() -> Self {
        Self { k: 1, data_degree: None, formulation: Formulation::Model, solver: SolverOptions::default() }
    }
}

/// Result of one solve on one mesh.
pub struct Run<'m> {
    pub disc: Discretization<'m>,
    pub solution: Solution,
    pub report: ErrorReport,
    pub seconds: f64,
}

/// Assembles and solves the case on `mesh`, then measures all errors.
pub fn run_case<'m>(case: &Arc<dyn ExactCase>, mesh: &'m PolyMesh, opts: &RunOptions) -> Result<Run<'m>> {
    let start = Instant::now();
    let data_degree = opts.data_degree.unwrap_or(2 * opts.k + 3);
    let case = match opts.formulation {
        Formulation::Model => case.clone(),
        Formulation::Tangential => tangential_case(case.clone())?,
    };
    let instance = model_instance(case.clone(), mesh, data_degree)?;
    let space = Space::with_data_degree(mesh, opts.k, data_degree)?;
    let disc = Discretization::with_space(space, instance.coeffs.clone())?;
    let system = assemble(&disc, &instance)?;
    let solution = solve(&system, &opts.solver)?;
    let report = error_report(&disc, case.as_ref(), &solution.u, &solution.p, system.layout.size(), solution.residual)?;
    Ok(Run { disc, solution, report, seconds: start.elapsed().as_secs_f64() })
}

/// Relative errors below this are reported as exact instead of given a rate.
pub const EXACT_FLOOR: f64 = 1e-10;

/// A convergence study over one mesh family.
#[derive(Clone, Debug)]
pub struct Study {
    pub case: String,
    pub family: MeshFamily,
    pub k: usize,
    pub levels: Vec<usize>,
    pub reports: Vec<ErrorReport>,
}

/// Observed rate of one norm.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Rate {
    Exact,
    Value(f64),
}

impl std::fmt::Display for Rate {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Rate::Exact => f.write_str("exact"),
            Rate::Value(r) => write!(f, "{r:.3}"),
        }
    }
}

impl Study {
    /// Rate of norm `i` from the last two levels and from all levels.
    pub fn rates(&self, i: usize) -> Result<(Rate, Rate)> {
        if self.reports.iter().any(|r| r.relative()[i] < EXACT_FLOOR) {
            return Ok((Rate::Exact, Rate::Exact));
        }
        let pairs: Vec<(f64, f64)> = self.reports.iter().map(|r| (r.h, r.errors[i])).collect();
        let last = convergence_rate(&pairs[pairs.len() - 2..])?;
        let all = convergence_rate(&pairs)?;
        Ok((Rate::Value(last), Rate::Value(all)))
    }

    pub fn csv(&self) -> String {
        let mut s = String::from(ErrorReport::CSV_HEADER);
        s.push('\n');
        for r in &self.reports {
            s.push_str(&r.csv_row());
            s.push('\n');
        }
        s
    }

    pub fn markdown(&self) -> Result<String> {
        let mut s = String::new();
        let _ = writeln!(s, "case `{}`, mesh `{}`, k = {}\n", self.case, self.family, self.k);
        let _ = write!(s, "| n | h | ndof |");
        for name in ERROR_NAMES {
            let _ = write!(s, " err_{name} |");
        }
        let _ = writeln!(s, " residual |");
        let _ = writeln!(s, "|{}", "---|".repeat(ERROR_NAMES.len() + 4));
        for (n, r) in self.levels.iter().zip(&self.reports) {
            let _ = write!(s, "| {n} | {:.4e} | {} |", r.h, r.ndof);
            for e in r.errors {
                let _ = write!(s, " {e:.4e} |");
            }
            let _ = writeln!(s, " {:.2e} |", r.residual);
        }
        let _ = writeln!(s, "\n| norm | rate (last two) | rate (all levels) |\n|---|---|---|");
        for (i, name) in ERROR_NAMES.iter().enumerate() {
            let (last, all) = self.rates(i)?;
            let _ = writeln!(s, "| {name} | {last} | {all} |");
        }
        Ok(s)
    }
}

/// Checks a refinement list: at least `min` levels, strictly increasing.
pub fn check_levels(levels: &[usize], min: usize) -> Result<()> {
    if levels.len() < min {
        return Err(WgError::InvalidArgument(format!("need ≥{min} levels, got {}", levels.len())));
    }
    if levels.windows(2).any(|w| w[0] >= w[1]) || levels.first() == Some(&0) {
        return Err(WgError::InvalidArgument(format!("refinement levels must be positive and strictly increasing: {levels:?}")));
    }
    Ok(())
}

/// Solves on each level (sequentially, or concurrently when `parallel`).
pub fn convergence_study(case: Arc<dyn ExactCase>, family: MeshFamily, levels: &[usize], opts: &RunOptions, parallel: bool) -> Result<Study> {
    check_levels(levels, 3)?;
    let oracle = check_case_derivatives(case.as_ref());
    if !oracle.passed() {
        let m = &oracle.mismatches[0];
        return Err(WgError::InvalidArgument(format!(
            "case '{}' fails the derivative check: {} at {:?} ({} vs {})",
            case.name(),
            m.quantity,
            m.point,
            m.analytic,
            m.finite_difference
        )));
    }
    let one = |n: usize| -> Result<ErrorReport> {
        let mesh = family.build(n)?;
        Ok(run_case(&case, &mesh, opts)?.report)
    };
    let reports = if parallel {
        use rayon::prelude::*;
        levels.par_iter().map(|&n| one(n)).collect::<Result<Vec<_>>>()?
    } else {
        levels.iter().map(|&n| one(n)).collect::<Result<Vec<_>>>()?
    };
    Ok(Study { case: case.describe(), family, k: opts.k, levels: levels.to_vec(), reports })
}
