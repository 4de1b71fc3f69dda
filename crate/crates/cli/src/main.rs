mod config;

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use clap::{Args, Parser, Subcommand};

use config::{ConfigFile, Overrides, StudyConfig};
use wg_divcurl::analysis::ERROR_NAMES;
use wg_divcurl::assembly::{assemble, Discretization};
use wg_divcurl::mesh::{load_mesh, validate, PolyMesh};
use wg_divcurl::polybasis::Space;
use wg_divcurl::study::{check_levels, convergence_study, run_case, Formulation};
use wg_divcurl::verification::{
    catalog, check_case_derivatives, check_compatibility, model_instance, tangential_case, ExactCase, ProblemKind,
};
use wg_divcurl::{MeshError, WgError};

#[derive(Parser)]
#[command(name = "wgdc", version, about = "Weak Galerkin solver for div-curl systems on polyhedral meshes")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve one case on one mesh and report all error norms.
    Solve(CommonArgs),
    /// Run a case over a refinement sequence and tabulate observed rates.
    Convergence(CommonArgs),
    /// Validate a mesh and print its statistics.
    MeshInfo(CommonArgs),
    /// Check the analytic derivatives and compatibility of a case's data.
    VerifyCase(CommonArgs),
}

#[derive(Args, Clone)]
struct CommonArgs {
    /// Manufactured solution: poly-exact, trig-cube, trig-hollow or two-material.
    #[arg(long)]
    case: Option<String>,
    /// Mesh family: tet, hex or hollow (default: the case's own).
    #[arg(long)]
    mesh: Option<String>,
    /// Mesh file in wgmesh format, used instead of a generated mesh.
    #[arg(long)]
    mesh_file: Option<PathBuf>,
    /// Refinement level(s), comma separated, e.g. 2,4,8.
    #[arg(long)]
    levels: Option<String>,
    /// Polynomial degree k ≥ 1.
    #[arg(long)]
    degree: Option<usize>,
    /// Output CSV path (a markdown summary is written next to it).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Required relative residual of the linear solve.
    #[arg(long)]
    solver_tol: Option<f64>,
    /// Linear solver: auto, ldlt, lu or minres.
    #[arg(long)]
    solver: Option<String>,
    /// Number of worker threads.
    #[arg(long)]
    threads: Option<usize>,
    /// Problem to solve: model or tangential.
    #[arg(long)]
    formulation: Option<String>,
    /// Solve the levels of a convergence study concurrently.
    #[arg(long)]
    parallel: bool,
    /// Flat key = value configuration file; flags take precedence.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Write the assembled system as `i j value` triplets (solve only).
    #[arg(long)]
    dump_system: Option<PathBuf>,
}

/// Failure with its exit code: 1 for numerical failures, 2 for bad input.
struct Failure {
    code: u8,
    message: String,
}

impl Failure {
    fn input(message: impl Into<String>) -> Self {
        Self { code: 2, message: message.into() }
    }

    fn numeric(message: impl Into<String>) -> Self {
        Self { code: 1, message: message.into() }
    }
}

impl From<WgError> for Failure {
    fn from(e: WgError) -> Self {
        let code = match &e {
            WgError::SolverFailed { .. } | WgError::Factorization(_) | WgError::Mismatch(_) => 1,
            _ => 2,
        };
        Self { code, message: e.to_string() }
    }
}

impl From<MeshError> for Failure {
    fn from(e: MeshError) -> Self {
        Self::input(e.to_string())
    }
}

type CmdResult = Result<(), Failure>;

fn resolve(args: &CommonArgs) -> Result<StudyConfig, Failure> {
    let file = match &args.config {
        Some(p) => ConfigFile::load(p).map_err(Failure::input)?,
        None => ConfigFile::default(),
    };
    let over = Overrides {
        case: args.case.clone(),
        mesh: args.mesh.clone(),
        mesh_file: args.mesh_file.clone(),
        levels: args.levels.clone(),
        degree: args.degree,
        out: args.out.clone(),
        solver: args.solver.clone(),
        solver_tol: args.solver_tol,
        threads: args.threads,
        formulation: args.formulation.clone(),
        parallel: args.parallel,
    };
    let cfg = StudyConfig::resolve(&file, over).map_err(Failure::input)?;
    if let Some(t) = cfg.threads {
        if t == 0 {
            return Err(Failure::input("--threads must be at least 1"));
        }
        // fails only if a pool already exists, which is harmless
        let _ = rayon::ThreadPoolBuilder::new().num_threads(t).build_global();
    }
    Ok(cfg)
}

fn write_file(path: &Path, text: &str) -> CmdResult {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| Failure::input(format!("{}: {e}", dir.display())))?;
    }
    std::fs::write(path, text).map_err(|e| Failure::input(format!("{}: {e}", path.display())))
}

/// Writes the CSV and its markdown companion, or prints the CSV.
fn emit(out: &Option<PathBuf>, csv: &str, markdown: &str) -> CmdResult {
    match out {
        Some(p) => {
            write_file(p, csv)?;
            write_file(&p.with_extension("md"), markdown)?;
            println!("wrote {} and {}", p.display(), p.with_extension("md").display());
        }
        None => print!("{csv}"),
    }
    Ok(())
}

fn case_of(cfg: &StudyConfig) -> Result<Arc<dyn ExactCase>, Failure> {
    Ok(catalog(&cfg.case, cfg.degree)?)
}

fn single_level(cfg: &StudyConfig, default: usize) -> Result<usize, Failure> {
    match cfg.levels.as_deref() {
        None => Ok(default),
        Some([n]) => Ok(*n),
        Some(l) => Err(Failure::input(format!("expected a single refinement level, got {l:?}"))),
    }
}

fn load_or_build(cfg: &StudyConfig, case: &dyn ExactCase, default_level: usize) -> Result<(PolyMesh, String), Failure> {
    if let Some(p) = &cfg.mesh_file {
        let mesh = load_mesh(p)?;
        let report = validate(&mesh);
        if !report.is_valid() {
            let lines: Vec<String> = report.violations.iter().take(5).map(|v| v.to_string()).collect();
            return Err(Failure::input(format!("{}: invalid mesh: {}", p.display(), lines.join("; "))));
        }
        return Ok((mesh, p.display().to_string()));
    }
    let family = cfg.mesh.unwrap_or(case.family());
    let n = single_level(cfg, default_level)?;
    Ok((family.build(n)?, format!("{family} n={n}")))
}

fn cmd_solve(args: &CommonArgs) -> CmdResult {
    let cfg = resolve(args)?;
    let case = case_of(&cfg)?;
    let (mesh, label) = load_or_build(&cfg, case.as_ref(), 4)?;
    if let Some(path) = &args.dump_system {
        let data_degree = 2 * cfg.degree + 3;
        let case = match cfg.run.formulation {
            Formulation::Model => case.clone(),
            Formulation::Tangential => tangential_case(case.clone())?,
        };
        let instance = model_instance(case, &mesh, data_degree)?;
        let disc = Discretization::with_space(Space::with_data_degree(&mesh, cfg.degree, data_degree)?, instance.coeffs.clone())?;
        assemble(&disc, &instance)?.write_debug(path)?;
    }
    let run = run_case(&case, &mesh, &cfg.run)?;
    let r = &run.report;
    let st = &run.solution.stats;
    let mut md = String::new();
    let _ = writeln!(md, "case      {}", case.describe());
    let _ = writeln!(md, "mesh      {label}: {} cells, {} faces, h = {:.4e}", mesh.num_cells(), mesh.num_faces(), mesh.h());
    let _ = writeln!(md, "degree    {}", cfg.degree);
    let _ = writeln!(md, "unknowns  {} ({} multipliers)", r.ndof, run.solution.lambda.len());
    let _ = writeln!(md, "solver    {} (refinement steps {}, iterations {}), residual {:.3e}", st.method, st.refinement_steps, st.iterations, r.residual);
    let _ = writeln!(md, "time      {:.2} s\n", run.seconds);
    let _ = writeln!(md, "| norm | error | relative |\n|---|---|---|");
    for (i, name) in ERROR_NAMES.iter().enumerate() {
        let _ = writeln!(md, "| {name} | {:.6e} | {:.3e} |", r.errors[i], r.relative()[i]);
    }
    print!("{md}");
    let csv = format!("{}\n{}\n", wg_divcurl::analysis::ErrorReport::CSV_HEADER, r.csv_row());
    emit(&cfg.out, &csv, &md)
}

fn cmd_convergence(args: &CommonArgs) -> CmdResult {
    let cfg = resolve(args)?;
    if cfg.mesh_file.is_some() {
        return Err(Failure::input("a convergence study needs a generated mesh family, not a mesh file"));
    }
    let case = case_of(&cfg)?;
    let family = cfg.mesh.unwrap_or(case.family());
    let levels = cfg.levels.clone().unwrap_or_else(|| match family {
        wg_divcurl::verification::MeshFamily::Hollow => vec![3, 6, 9],
        _ => vec![2, 4, 8],
    });
    check_levels(&levels, 3)?;
    let study = convergence_study(case, family, &levels, &cfg.run, cfg.parallel)?;
    let md = study.markdown()?;
    print!("{md}");
    emit(&cfg.out, &study.csv(), &md)
}

fn cmd_mesh_info(args: &CommonArgs) -> CmdResult {
    let cfg = resolve(args)?;
    let (mesh, label) = match &cfg.mesh_file {
        Some(p) => (load_mesh(p)?, p.display().to_string()),
        None => {
            let family = cfg.mesh.unwrap_or(wg_divcurl::verification::MeshFamily::Tet);
            let n = single_level(&cfg, 2)?;
            (family.build(n)?, format!("{family} n={n}"))
        }
    };
    let report = validate(&mesh);
    let m = &report.metrics;
    println!("mesh        {label}");
    println!("vertices    {}", mesh.vertices().len());
    println!("faces       {} ({} boundary)", mesh.num_faces(), mesh.boundary_faces().count());
    println!("cells       {}", mesh.num_cells());
    println!("h           {:.6e}", mesh.h());
    println!("volume      {:.12}", mesh.total_volume());
    println!("boundary    {} component(s)", mesh.num_boundary_components());
    for t in 0..mesh.num_boundary_components() {
        println!("  Γ_{t}       area {:.12}", mesh.component_area(t));
    }
    println!(
        "shape       min face area/h² {:.4}, min volume/h³ {:.4}, max aspect {:.3}",
        m.min_face_area_ratio, m.min_volume_ratio, m.max_aspect_ratio
    );
    if report.is_valid() {
        println!("valid       yes");
        Ok(())
    } else {
        for v in &report.violations {
            println!("violation   {v}");
        }
        Err(Failure::input(format!("{} invariant violation(s)", report.violations.len())))
    }
}

fn cmd_verify_case(args: &CommonArgs) -> CmdResult {
    let cfg = resolve(args)?;
    let case = case_of(&cfg)?;
    let default_level = if case.family() == wg_divcurl::verification::MeshFamily::Hollow { 3 } else { 2 };
    let (mesh, label) = load_or_build(&cfg, case.as_ref(), default_level)?;
    println!("case        {}", case.describe());
    let oracle = check_case_derivatives(case.as_ref());
    println!("derivatives {} points, max relative deviation {:.3e}", oracle.points, oracle.max_relative_error);
    let mut failures = oracle.mismatches.len();
    for m in oracle.mismatches.iter().take(5) {
        println!("  mismatch  {} at ({:.4}, {:.4}, {:.4}): {} vs {}", m.quantity, m.point.x, m.point.y, m.point.z, m.analytic, m.finite_difference);
    }
    for kind in [ProblemKind::Model, ProblemKind::DivCurlNormal, ProblemKind::DivCurlTangential] {
        let r = check_compatibility(case.as_ref(), &mesh, kind)?;
        println!(
            "{:<18} on {label}: (f,1) = {:.12e}, <mu u.n,1> = {:.12e}, max |div g| = {:.2e}",
            format!("{kind:?}"),
            r.volume_source,
            r.boundary_flux,
            r.max_div_g
        );
        for v in &r.violations {
            println!("  violation {}: {:.3e}", v.condition, v.magnitude);
        }
        failures += r.violations.len();
    }
    if failures > 0 {
        return Err(Failure::numeric(format!("case '{}' failed {failures} check(s)", case.name())));
    }
    println!("ok");
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Solve(a) => cmd_solve(a),
        Command::Convergence(a) => cmd_convergence(a),
        Command::MeshInfo(a) => cmd_mesh_info(a),
        Command::VerifyCase(a) => cmd_verify_case(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
