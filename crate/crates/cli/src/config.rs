//! Flat `key = value` study configuration; command-line flags override it.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use wg_divcurl::solver::{SolverMethod, SolverOptions};
use wg_divcurl::study::{Formulation, RunOptions};
use wg_divcurl::verification::MeshFamily;

pub const KEYS: [&str; 11] =
    ["case", "mesh", "mesh_file", "levels", "degree", "out", "solver", "solver_tol", "threads", "formulation", "parallel"];

#[derive(Debug, Default, Clone)]
pub struct ConfigFile(BTreeMap<String, String>);

impl ConfigFile {
    pub fn parse(text: &str) -> Result<Self, String> {
        let mut map = BTreeMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| format!("line {}: expected key = value", i + 1))?;
            let k = k.trim().replace('-', "_");
            if !KEYS.contains(&k.as_str()) {
                return Err(format!("line {}: unknown key '{k}'", i + 1));
            }
            map.insert(k, v.trim().to_string());
        }
        Ok(Self(map))
    }

    pub fn load(path: &Path) -> Result<Self, String> {
        let text = std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
        Self::parse(&text).map_err(|e| format!("{}: {e}", path.display()))
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.0.get(key).map(String::as_str)
    }
}

/// Values given on the command line; `None` falls back to the file, then to defaults.
#[derive(Debug, Default, Clone)]
pub struct Overrides {
    pub case: Option<String>,
    pub mesh: Option<String>,
    pub mesh_file: Option<PathBuf>,
    pub levels: Option<String>,
    pub degree: Option<usize>,
    pub out: Option<PathBuf>,
    pub solver: Option<String>,
    pub solver_tol: Option<f64>,
    pub threads: Option<usize>,
    pub formulation: Option<String>,
    pub parallel: bool,
}

#[derive(Debug, Clone)]
pub struct StudyConfig {
    pub case: String,
    /// `None`: the case's own mesh family.
    pub mesh: Option<MeshFamily>,
    pub mesh_file: Option<PathBuf>,
    pub levels: Option<Vec<usize>>,
    pub degree: usize,
    pub out: Option<PathBuf>,
    pub run: RunOptions,
    pub threads: Option<usize>,
    pub parallel: bool,
}

fn parse_levels(s: &str) -> Result<Vec<usize>, String> {
    s.split(',')
        .map(|t| t.trim().parse::<usize>().map_err(|_| format!("invalid refinement level '{}'", t.trim())))
        .collect()
}

fn parse_method(s: &str) -> Result<SolverMethod, String> {
    match s {
        "auto" => Ok(SolverMethod::Auto),
        "ldlt" => Ok(SolverMethod::Ldlt),
        "lu" => Ok(SolverMethod::Lu),
        "minres" => Ok(SolverMethod::Minres),
        _ => Err(format!("unknown solver '{s}' (expected auto, ldlt, lu or minres)")),
    }
}

fn parse_num<T: std::str::FromStr>(key: &str, s: &str) -> Result<T, String> {
    s.parse().map_err(|_| format!("invalid value '{s}' for {key}"))
}

impl StudyConfig {
    pub fn resolve(file: &ConfigFile, over: Overrides) -> Result<Self, String> {
        let pick = |flag: Option<String>, key: &str| flag.or_else(|| file.get(key).map(str::to_string));
        let case = pick(over.case, "case").unwrap_or_else(|| "trig-cube".into());
        let mesh = pick(over.mesh, "mesh").map(|m| MeshFamily::parse(&m).map_err(|e| e.to_string())).transpose()?;
        let mesh_file = over.mesh_file.or_else(|| file.get("mesh_file").map(PathBuf::from));
        let levels = pick(over.levels, "levels").map(|s| parse_levels(&s)).transpose()?;
        let degree = match over.degree {
            Some(d) => d,
            None => file.get("degree").map(|s| parse_num("degree", s)).transpose()?.unwrap_or(1),
        };
        if degree < 1 {
            return Err("degree must be at least 1".into());
        }
        let out = over.out.or_else(|| file.get("out").map(PathBuf::from));
        let mut solver = SolverOptions::default();
        if let Some(m) = pick(over.solver, "solver") {
            solver.method = parse_method(&m)?;
        }
        if let Some(t) = over.solver_tol.map(Ok).or_else(|| file.get("solver_tol").map(|s| parse_num("solver_tol", s))) {
            let t: f64 = t?;
            if !(t > 0.0) {
                return Err(format!("solver tolerance must be positive, got {t}"));
            }
            solver.tol = t;
        }
        let formulation = match pick(over.formulation, "formulation") {
            Some(f) => Formulation::parse(&f).map_err(|e| e.to_string())?,
            None => Formulation::Model,
        };
        let threads = match over.threads {
            Some(t) => Some(t),
            None => file.get("threads").map(|s| parse_num("threads", s)).transpose()?,
        };
        let parallel = over.parallel || file.get("parallel").is_some_and(|v| matches!(v, "1" | "true" | "yes"));
        Ok(Self {
            case,
            mesh,
            mesh_file,
            levels,
            degree,
            out,
            run: RunOptions { k: degree, data_degree: None, formulation, solver },
            threads,
            parallel,
        })
    }
}
