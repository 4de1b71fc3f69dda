//! Manufactured solutions, derived problem data, compatibility checks and
//! problem instances built from them.

use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use nalgebra::Matrix3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::assembly::ProblemInstance;
use crate::error::{Result, WgError};
use crate::mesh::{build_cube_hex_mesh, build_cube_tet_mesh, build_hollow_cube_mesh, Point, PolyMesh};
use crate::quadrature::{cell_quadrature, face_quadrature};
use crate::weakops::Coefficients;

/// Mesh families used by the studies.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MeshFamily {
    Tet,
    Hex,
    Hollow,
}

impl MeshFamily {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "tet" => Ok(Self::Tet),
            "hex" => Ok(Self::Hex),
            "hollow" => Ok(Self::Hollow),
            _ => Err(WgError::InvalidArgument(format!("unknown mesh family '{s}' (expected tet, hex or hollow)"))),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Self::Tet => "tet",
            Self::Hex => "hex",
            Self::Hollow => "hollow",
        }
    }

    pub fn build(self, n: usize) -> Result<PolyMesh> {
        Ok(match self {
            Self::Tet => build_cube_tet_mesh(n)?,
            Self::Hex => build_cube_hex_mesh(n, None)?,
            Self::Hollow => build_hollow_cube_mesh(n)?,
        })
    }
}

impl fmt::Display for MeshFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// An exact solution `(u, p)` with coefficients and analytic derivatives.
///
/// `μ` and `κ` are evaluated pointwise; they must be constant on each cell of
/// the meshes the case is used with.
pub trait ExactCase: Send + Sync {
    fn name(&self) -> String;
    fn u(&self, x: &Point) -> Point;
    /// `J_ij = ∂u_i/∂x_j`.
    fn grad_u(&self, x: &Point) -> Matrix3<f64>;
    fn p(&self, x: &Point) -> f64;
    fn grad_p(&self, x: &Point) -> Point;
    fn mu(&self, _x: &Point) -> Matrix3<f64> {
        Matrix3::identity()
    }
    fn kappa(&self, _x: &Point) -> Matrix3<f64> {
        Matrix3::identity()
    }
    /// `∇×(κ∇×u)`.
    fn curl_kappa_curl_u(&self, x: &Point) -> Point;
    /// `∇×∇×u`, needed by the tangential div-curl instance.
    fn curl_curl_u(&self, _x: &Point) -> Option<Point> {
        None
    }
    /// Mesh family the case is posed on.
    fn family(&self) -> MeshFamily {
        MeshFamily::Tet
    }
    /// Points closer than this to a material interface are skipped by the
    /// finite-difference oracle.
    fn interface_distance(&self, _x: &Point) -> f64 {
        f64::INFINITY
    }
    /// Parameters echoed into reports.
    fn describe(&self) -> String {
        self.name()
    }

    fn curl_u(&self, x: &Point) -> Point {
        let j = self.grad_u(x);
        Point::new(j[(2, 1)] - j[(1, 2)], j[(0, 2)] - j[(2, 0)], j[(1, 0)] - j[(0, 1)])
    }

    /// `f = ∇·(μu)` for piecewise constant `μ`.
    fn f(&self, x: &Point) -> f64 {
        (self.mu(x) * self.grad_u(x)).trace()
    }

    /// `g = ∇×(κ∇×u) − μ∇p`.
    fn g(&self, x: &Point) -> Point {
        self.curl_kappa_curl_u(x) - self.mu(x) * self.grad_p(x)
    }
}

/// Polynomial in `x, y, z` as a list of `(exponents, coefficient)` terms.
#[derive(Clone, Debug)]
struct Poly3(Vec<([usize; 3], f64)>);

impl Poly3 {
    fn eval(&self, x: &Point) -> f64 {
        self.0.iter().map(|(e, c)| c * x.x.powi(e[0] as i32) * x.y.powi(e[1] as i32) * x.z.powi(e[2] as i32)).sum()
    }

    fn deriv(&self, d: usize) -> Poly3 {
        Poly3(
            self.0
                .iter()
                .filter(|(e, _)| e[d] > 0)
                .map(|(e, c)| {
                    let mut e2 = *e;
                    e2[d] -= 1;
                    (e2, c * e[d] as f64)
                })
                .collect(),
        )
    }
}

/// Random `u ∈ [P_k]³` with `p = 0`; the scheme reproduces it exactly.
pub struct PolyExact {
    k: usize,
    seed: u64,
    u: [Poly3; 3],
    du: [[Poly3; 3]; 3],
    d2u: [[[Poly3; 3]; 3]; 3],
}

impl PolyExact {
    pub fn new(k: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let exps = crate::polybasis::exponents_3d(k);
        let u: [Poly3; 3] = std::array::from_fn(|_| Poly3(exps.iter().map(|e| (*e, rng.random_range(-1.0..1.0))).collect()));
        let du: [[Poly3; 3]; 3] = std::array::from_fn(|i| std::array::from_fn(|j| u[i].deriv(j)));
        let d2u = std::array::from_fn(|i| std::array::from_fn(|j| std::array::from_fn(|l| du[i][j].deriv(l))));
        Self { k, seed, u, du, d2u }
    }
}

impl ExactCase for PolyExact {
    fn name(&self) -> String {
        "poly-exact".into()
    }
    fn describe(&self) -> String {
        format!("poly-exact(k={}, seed={})", self.k, self.seed)
    }
    fn u(&self, x: &Point) -> Point {
        Point::new(self.u[0].eval(x), self.u[1].eval(x), self.u[2].eval(x))
    }
    fn grad_u(&self, x: &Point) -> Matrix3<f64> {
        Matrix3::from_fn(|i, j| self.du[i][j].eval(x))
    }
    fn p(&self, _x: &Point) -> f64 {
        0.0
    }
    fn grad_p(&self, _x: &Point) -> Point {
        Point::zeros()
    }
    fn curl_kappa_curl_u(&self, x: &Point) -> Point {
        // ∇×∇×u = ∇(∇·u) − Δu
        let h = |i: usize, j: usize, l: usize| self.d2u[i][j][l].eval(x);
        Point::from_fn(|i, _| (0..3).map(|j| h(j, j, i) - h(i, j, j)).sum())
    }
    fn curl_curl_u(&self, x: &Point) -> Option<Point> {
        Some(self.curl_kappa_curl_u(x))
    }
}

fn trig_u(x: &Point) -> Point {
    let (sx, sy, sz) = ((PI * x.x).sin(), (PI * x.y).sin(), (PI * x.z).sin());
    Point::new(sy * sz, sz * sx, sx * sy)
}

fn trig_grad_u(x: &Point) -> Matrix3<f64> {
    let (sx, sy, sz) = ((PI * x.x).sin(), (PI * x.y).sin(), (PI * x.z).sin());
    let (cx, cy, cz) = ((PI * x.x).cos(), (PI * x.y).cos(), (PI * x.z).cos());
    Matrix3::new(0.0, cy * sz, sy * cz, sz * cx, 0.0, cz * sx, cx * sy, sx * cy, 0.0) * PI
}

/// `u = (sin πy sin πz, sin πz sin πx, sin πx sin πy)`, which is
/// divergence free with `∇×∇×u = 2π² u`.
pub struct TrigCube;

impl ExactCase for TrigCube {
    fn name(&self) -> String {
        "trig-cube".into()
    }
    fn u(&self, x: &Point) -> Point {
        trig_u(x)
    }
    fn grad_u(&self, x: &Point) -> Matrix3<f64> {
        trig_grad_u(x)
    }
    fn p(&self, x: &Point) -> f64 {
        (PI * x.x).sin() * (PI * x.y).sin() * (PI * x.z).sin()
    }
    fn grad_p(&self, x: &Point) -> Point {
        let (sx, sy, sz) = ((PI * x.x).sin(), (PI * x.y).sin(), (PI * x.z).sin());
        let (cx, cy, cz) = ((PI * x.x).cos(), (PI * x.y).cos(), (PI * x.z).cos());
        Point::new(cx * sy * sz, sx * cy * sz, sx * sy * cz) * PI
    }
    fn curl_kappa_curl_u(&self, x: &Point) -> Point {
        trig_u(x) * (2.0 * PI * PI)
    }
    fn curl_curl_u(&self, x: &Point) -> Option<Point> {
        Some(self.curl_kappa_curl_u(x))
    }
}

/// The trigonometric field on the hollow cube. The pressure
/// `sin 3πx sin 3πy sin 3πz` vanishes on the outer boundary and on the cavity.
pub struct TrigHollow;

impl ExactCase for TrigHollow {
    fn name(&self) -> String {
        "trig-hollow".into()
    }
    fn family(&self) -> MeshFamily {
        MeshFamily::Hollow
    }
    fn u(&self, x: &Point) -> Point {
        trig_u(x)
    }
    fn grad_u(&self, x: &Point) -> Matrix3<f64> {
        trig_grad_u(x)
    }
    fn p(&self, x: &Point) -> f64 {
        (3.0 * PI * x.x).sin() * (3.0 * PI * x.y).sin() * (3.0 * PI * x.z).sin()
    }
    fn grad_p(&self, x: &Point) -> Point {
        let w = 3.0 * PI;
        let (sx, sy, sz) = ((w * x.x).sin(), (w * x.y).sin(), (w * x.z).sin());
        let (cx, cy, cz) = ((w * x.x).cos(), (w * x.y).cos(), (w * x.z).cos());
        Point::new(cx * sy * sz, sx * cy * sz, sx * sy * cz) * w
    }
    fn curl_kappa_curl_u(&self, x: &Point) -> Point {
        trig_u(x) * (2.0 * PI * PI)
    }
    fn curl_curl_u(&self, x: &Point) -> Option<Point> {
        Some(self.curl_kappa_curl_u(x))
    }
}

/// `μ = I` for `x < ½` and `2I` beyond, `κ = I`, `p = 0`, with
/// `u = (sin 2πx sin πy sin πz / μ, sin πz sin πx, sin πx sin πy)` so that
/// `μu·n` and `u×n` are continuous across the interface.
pub struct TwoMaterial;

impl TwoMaterial {
    fn s(x: &Point) -> f64 {
        if x.x < 0.5 {
            1.0
        } else {
            2.0
        }
    }
}

impl ExactCase for TwoMaterial {
    fn name(&self) -> String {
        "two-material".into()
    }
    fn describe(&self) -> String {
        "two-material(mu=1|2 at x=0.5)".into()
    }
    fn family(&self) -> MeshFamily {
        MeshFamily::Hex
    }
    fn mu(&self, x: &Point) -> Matrix3<f64> {
        Matrix3::identity() * Self::s(x)
    }
    fn interface_distance(&self, x: &Point) -> f64 {
        (x.x - 0.5).abs()
    }
    fn u(&self, x: &Point) -> Point {
        let (sx, sy, sz) = ((PI * x.x).sin(), (PI * x.y).sin(), (PI * x.z).sin());
        Point::new((2.0 * PI * x.x).sin() * sy * sz / Self::s(x), sz * sx, sx * sy)
    }
    fn grad_u(&self, x: &Point) -> Matrix3<f64> {
        let mut j = trig_grad_u(x);
        let (s2, c2) = ((2.0 * PI * x.x).sin(), (2.0 * PI * x.x).cos());
        let (sy, sz, cy, cz) = ((PI * x.y).sin(), (PI * x.z).sin(), (PI * x.y).cos(), (PI * x.z).cos());
        let s = Self::s(x);
        j[(0, 0)] = 2.0 * PI * c2 * sy * sz / s;
        j[(0, 1)] = PI * s2 * cy * sz / s;
        j[(0, 2)] = PI * s2 * sy * cz / s;
        j
    }
    fn p(&self, _x: &Point) -> f64 {
        0.0
    }
    fn grad_p(&self, _x: &Point) -> Point {
        Point::zeros()
    }
    fn curl_kappa_curl_u(&self, x: &Point) -> Point {
        // ∇(∇·u) − Δu on each side
        let u = self.u(x);
        let s = Self::s(x);
        let c2 = (2.0 * PI * x.x).cos();
        let (sy, sz, cy, cz) = ((PI * x.y).sin(), (PI * x.z).sin(), (PI * x.y).cos(), (PI * x.z).cos());
        let pp = PI * PI;
        Point::new(
            2.0 * pp * u.x,
            2.0 * pp * c2 * cy * sz / s + 2.0 * pp * u.y,
            2.0 * pp * c2 * sy * cz / s + 2.0 * pp * u.z,
        )
    }
    fn curl_curl_u(&self, x: &Point) -> Option<Point> {
        Some(self.curl_kappa_curl_u(x))
    }
}

pub type ScalarFn = Box<dyn Fn(&Point) -> f64 + Send + Sync>;
pub type VectorFn = Box<dyn Fn(&Point) -> Point + Send + Sync>;
pub type TensorFn = Box<dyn Fn(&Point) -> Matrix3<f64> + Send + Sync>;

/// A case assembled from user-supplied closures.
pub struct UserCase {
    pub name: String,
    pub u: VectorFn,
    pub grad_u: TensorFn,
    pub p: ScalarFn,
    pub grad_p: VectorFn,
    pub curl_kappa_curl_u: VectorFn,
    pub curl_curl_u: Option<VectorFn>,
    pub mu: TensorFn,
    pub kappa: TensorFn,
    pub family: MeshFamily,
}

impl UserCase {
    /// A case with `p = 0`, `μ = κ = I` and the given field and derivatives.
    pub fn new(name: &str, u: VectorFn, grad_u: TensorFn, curl_curl_u: VectorFn) -> Self {
        let ccu: Arc<dyn Fn(&Point) -> Point + Send + Sync> = Arc::from(curl_curl_u);
        let ccu2 = ccu.clone();
        Self {
            name: name.into(),
            u,
            grad_u,
            p: Box::new(|_| 0.0),
            grad_p: Box::new(|_| Point::zeros()),
            curl_kappa_curl_u: Box::new(move |x| ccu(x)),
            curl_curl_u: Some(Box::new(move |x| ccu2(x))),
            mu: Box::new(|_| Matrix3::identity()),
            kappa: Box::new(|_| Matrix3::identity()),
            family: MeshFamily::Tet,
        }
    }
}

impl ExactCase for UserCase {
    fn name(&self) -> String {
        self.name.clone()
    }
    fn family(&self) -> MeshFamily {
        self.family
    }
    fn u(&self, x: &Point) -> Point {
        (self.u)(x)
    }
    fn grad_u(&self, x: &Point) -> Matrix3<f64> {
        (self.grad_u)(x)
    }
    fn p(&self, x: &Point) -> f64 {
        (self.p)(x)
    }
    fn grad_p(&self, x: &Point) -> Point {
        (self.grad_p)(x)
    }
    fn mu(&self, x: &Point) -> Matrix3<f64> {
        (self.mu)(x)
    }
    fn kappa(&self, x: &Point) -> Matrix3<f64> {
        (self.kappa)(x)
    }
    fn curl_kappa_curl_u(&self, x: &Point) -> Point {
        (self.curl_kappa_curl_u)(x)
    }
    fn curl_curl_u(&self, x: &Point) -> Option<Point> {
        self.curl_curl_u.as_ref().map(|f| f(x))
    }
}

pub const CASE_NAMES: [&str; 4] = ["poly-exact", "trig-cube", "trig-hollow", "two-material"];

/// Seed of the random polynomial in `poly-exact`.
pub const POLY_SEED: u64 = 20141120;

pub fn catalog(name: &str, k: usize) -> Result<Arc<dyn ExactCase>> {
    Ok(match name {
        "poly-exact" => Arc::new(PolyExact::new(k, POLY_SEED)),
        "trig-cube" => Arc::new(TrigCube),
        "trig-hollow" => Arc::new(TrigHollow),
        "two-material" => Arc::new(TwoMaterial),
        _ => return Err(WgError::UnknownCase(name.into())),
    })
}

/// One failed derivative comparison of the finite-difference oracle.
#[derive(Clone, Debug)]
pub struct OracleMismatch {
    pub quantity: &'static str,
    pub point: Point,
    pub analytic: f64,
    pub finite_difference: f64,
}

#[derive(Clone, Debug, Default)]
pub struct OracleReport {
    pub points: usize,
    pub max_relative_error: f64,
    pub mismatches: Vec<OracleMismatch>,
}

impl OracleReport {
    pub fn passed(&self) -> bool {
        self.mismatches.is_empty()
    }
}

fn central<T>(f: impl Fn(&Point) -> T, x: &Point, d: usize, h: f64) -> T
where
    T: std::ops::Sub<Output = T> + std::ops::Div<f64, Output = T>,
{
    let mut e = Point::zeros();
    e[d] = h;
    (f(&(x + e)) - f(&(x - e))) / (2.0 * h)
}

/// Compares every analytic derivative of `case` with central differences at
/// `points` random points of the unit cube.
pub fn finite_difference_oracle(case: &dyn ExactCase, points: usize, step: f64, tol: f64, seed: u64) -> OracleReport {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut report = OracleReport::default();
    let check = |quantity: &'static str, point: Point, analytic: f64, fd: f64, scale: f64, report: &mut OracleReport| {
        let rel = (analytic - fd).abs() / (1.0 + scale);
        report.max_relative_error = report.max_relative_error.max(rel);
        if !(rel <= tol) {
            report.mismatches.push(OracleMismatch { quantity, point, analytic, finite_difference: fd });
        }
    };
    while report.points < points {
        let x = Point::new(rng.random(), rng.random(), rng.random());
        if case.interface_distance(&x) < 100.0 * step {
            continue;
        }
        report.points += 1;
        let j = case.grad_u(&x);
        let scale_j = j.abs().max();
        for d in 0..3 {
            let col = central(|y| case.u(y), &x, d, step);
            for i in 0..3 {
                check("grad u", x, j[(i, d)], col[i], scale_j, &mut report);
            }
            let gp = case.grad_p(&x);
            check("grad p", x, gp[d], central(|y| case.p(y), &x, d, step), gp.amax(), &mut report);
        }
        let kc = |y: &Point| case.kappa(y) * case.curl_u(y);
        let jk = Matrix3::from_columns(&[central(kc, &x, 0, step), central(kc, &x, 1, step), central(kc, &x, 2, step)]);
        let fd_ckc = Point::new(jk[(2, 1)] - jk[(1, 2)], jk[(0, 2)] - jk[(2, 0)], jk[(1, 0)] - jk[(0, 1)]);
        let ckc = case.curl_kappa_curl_u(&x);
        for i in 0..3 {
            check("curl kappa curl u", x, ckc[i], fd_ckc[i], ckc.amax(), &mut report);
        }
        if let Some(ccu) = case.curl_curl_u(&x) {
            let cu = |y: &Point| case.curl_u(y);
            let jc = Matrix3::from_columns(&[central(cu, &x, 0, step), central(cu, &x, 1, step), central(cu, &x, 2, step)]);
            let fd = Point::new(jc[(2, 1)] - jc[(1, 2)], jc[(0, 2)] - jc[(2, 0)], jc[(1, 0)] - jc[(0, 1)]);
            for i in 0..3 {
                check("curl curl u", x, ccu[i], fd[i], ccu.amax(), &mut report);
            }
        }
        let mu_u = |y: &Point| case.mu(y) * case.u(y);
        let fd_div = (0..3).map(|d| central(mu_u, &x, d, step)[d]).sum::<f64>();
        let f = case.f(&x);
        check("div mu u", x, f, fd_div, f.abs(), &mut report);
    }
    report
}

/// The oracle with the standard settings: 100 points, step `1e-5`, tolerance `1e-6`.
pub fn check_case_derivatives(case: &dyn ExactCase) -> OracleReport {
    finite_difference_oracle(case, 100, 1e-5, 1e-6, 7)
}

/// Which problem the compatibility conditions refer to.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ProblemKind {
    /// The model saddle problem: only finiteness of the data is required.
    Model,
    /// The div-curl system `∇·(μu) = f`, `∇×u = g`, `μu·n = ξ` on the boundary.
    DivCurlNormal,
    /// The div-curl system with tangential data `u×n` on the boundary.
    DivCurlTangential,
}

#[derive(Clone, Debug)]
pub struct CompatibilityViolation {
    pub condition: &'static str,
    pub magnitude: f64,
}

#[derive(Clone, Debug, Default)]
pub struct CompatibilityReport {
    /// `(f, 1)` and `⟨μu·n, 1⟩_Γ`.
    pub volume_source: f64,
    pub boundary_flux: f64,
    /// Largest `|∇·g|` seen by the oracle.
    pub max_div_g: f64,
    pub violations: Vec<CompatibilityViolation>,
}

impl CompatibilityReport {
    pub fn passed(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Checks the solvability conditions of the data derived from `case` on `mesh`.
pub fn check_compatibility(case: &dyn ExactCase, mesh: &PolyMesh, kind: ProblemKind) -> Result<CompatibilityReport> {
    let mut report = CompatibilityReport::default();
    let degree = 12;
    let mut finite = true;
    for c in 0..mesh.num_cells() {
        let rule = cell_quadrature(mesh, c, degree)?;
        for (x, w) in rule.points.iter().zip(&rule.weights) {
            let f = case.f(x);
            finite &= f.is_finite() && case.g(x).iter().all(|v| v.is_finite());
            report.volume_source += w * f;
        }
    }
    for f in mesh.boundary_faces() {
        let n = mesh.boundary_normal(f).expect("boundary face");
        let mu = case.mu(&mesh.cell(mesh.face(f).owner).centroid);
        let rule = face_quadrature(mesh, f, degree);
        for (x, w) in rule.points.iter().zip(&rule.weights) {
            let u = case.u(x);
            finite &= u.iter().all(|v| v.is_finite());
            report.boundary_flux += w * (mu * u).dot(&n);
        }
    }
    if !finite {
        report.violations.push(CompatibilityViolation { condition: "data finiteness", magnitude: f64::INFINITY });
    }
    if kind == ProblemKind::Model {
        return Ok(report);
    }

    let mismatch = (report.volume_source - report.boundary_flux).abs();
    if kind == ProblemKind::DivCurlNormal && mismatch > 1e-8 * (1.0 + report.boundary_flux.abs()) {
        report.violations.push(CompatibilityViolation { condition: "(f,1) = <mu u.n,1>", magnitude: mismatch });
    }
    // ∇·g = 0 for the curl data g = ∇×u
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let h = 1e-5;
    let mut checked = 0;
    while checked < 100 {
        let x = Point::new(rng.random(), rng.random(), rng.random());
        if case.interface_distance(&x) < 100.0 * h {
            continue;
        }
        checked += 1;
        let div: f64 = (0..3).map(|d| central(|y| case.curl_u(y), &x, d, h)[d]).sum();
        report.max_div_g = report.max_div_g.max(div.abs());
    }
    if report.max_div_g > 1e-8 {
        report.violations.push(CompatibilityViolation { condition: "div g = 0", magnitude: report.max_div_g });
    }
    Ok(report)
}

fn coefficients(case: &dyn ExactCase, mesh: &PolyMesh) -> Result<Coefficients> {
    Coefficients::from_fn(mesh, |x| (case.mu(x), case.kappa(x)))
}

/// `β_i = ⟨μu·n_i, 1⟩_{Γ_i}` by face quadrature, `n_i` the outward domain normal.
pub fn boundary_fluxes(case: &dyn ExactCase, mesh: &PolyMesh, coeffs: &Coefficients, degree: usize) -> Vec<f64> {
    let mut beta = vec![0.0; mesh.num_cavities()];
    for f in mesh.boundary_faces() {
        let face = mesh.face(f);
        let Some(tag) = face.tag.filter(|&t| t > 0) else { continue };
        let n = mesh.boundary_normal(f).expect("boundary face");
        let mu = coeffs.mu[face.owner];
        let rule = face_quadrature(mesh, f, degree);
        beta[tag - 1] += rule.integrate(|x| (mu * case.u(x)).dot(&n));
    }
    beta
}

/// The model problem whose exact solution is `(u, p)` of `case`.
pub fn model_instance(case: Arc<dyn ExactCase>, mesh: &PolyMesh, data_degree: usize) -> Result<ProblemInstance> {
    let coeffs = coefficients(case.as_ref(), mesh)?;
    let beta = boundary_fluxes(case.as_ref(), mesh, &coeffs, data_degree);
    let (c1, c2, c3) = (case.clone(), case.clone(), case);
    Ok(ProblemInstance {
        coeffs,
        g: Arc::new(move |x| c1.g(x)),
        f: Arc::new(move |x| c2.f(x)),
        xi: Arc::new(move |x| c3.u(x)),
        beta,
    })
}

/// The tangential div-curl problem seen as a model problem: `κ = I`, `p = 0`,
/// so that the first equation carries `∇×∇×u`.
struct Tangential(Arc<dyn ExactCase>);

impl ExactCase for Tangential {
    fn name(&self) -> String {
        self.0.name()
    }
    fn describe(&self) -> String {
        format!("{} (tangential)", self.0.describe())
    }
    fn family(&self) -> MeshFamily {
        self.0.family()
    }
    fn interface_distance(&self, x: &Point) -> f64 {
        self.0.interface_distance(x)
    }
    fn u(&self, x: &Point) -> Point {
        self.0.u(x)
    }
    fn grad_u(&self, x: &Point) -> Matrix3<f64> {
        self.0.grad_u(x)
    }
    fn p(&self, _x: &Point) -> f64 {
        0.0
    }
    fn grad_p(&self, _x: &Point) -> Point {
        Point::zeros()
    }
    fn mu(&self, x: &Point) -> Matrix3<f64> {
        self.0.mu(x)
    }
    fn curl_kappa_curl_u(&self, x: &Point) -> Point {
        self.0.curl_curl_u(x).expect("checked on construction")
    }
    fn curl_curl_u(&self, x: &Point) -> Option<Point> {
        self.0.curl_curl_u(x)
    }
}

/// The exact solution of the tangential div-curl problem built from `case`.
pub fn tangential_case(case: Arc<dyn ExactCase>) -> Result<Arc<dyn ExactCase>> {
    if case.curl_curl_u(&Point::repeat(0.5)).is_none() {
        return Err(WgError::InvalidArgument(format!("case '{}' has no analytic curl of its curl data", case.name())));
    }
    Ok(Arc::new(Tangential(case)))
}

/// The tangential div-curl problem as a model-problem instance: `κ = I`,
/// right-hand side `∇×g = ∇×∇×u`, tangential data `u×n`. Its exact solution is `(u, 0)`.
pub fn instance_tangential(case: Arc<dyn ExactCase>, mesh: &PolyMesh, data_degree: usize) -> Result<ProblemInstance> {
    model_instance(tangential_case(case)?, mesh, data_degree)
}

/// The saddle problem for the vector potential of the normal div-curl
/// problem: `κ = μ⁻¹`, right-hand side `g = ∇×u`, `f = 0`, `ξ = 0`, `β = 0`.
pub fn instance_normal_saddle(case: Arc<dyn ExactCase>, mesh: &PolyMesh) -> Result<ProblemInstance> {
    let mut coeffs = coefficients(case.as_ref(), mesh)?;
    coeffs.kappa = coeffs
        .mu
        .iter()
        .map(|m| m.try_inverse().ok_or_else(|| WgError::InvalidArgument("singular mu".into())))
        .collect::<Result<_>>()?;
    Ok(ProblemInstance {
        coeffs,
        g: Arc::new(move |x| case.curl_u(x)),
        f: Arc::new(|_| 0.0),
        xi: Arc::new(|_| Point::zeros()),
        beta: vec![0.0; mesh.num_cavities()],
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn catalog_cases_pass_the_oracle() {
        for name in CASE_NAMES {
            let case = catalog(name, 2).unwrap();
            let r = check_case_derivatives(case.as_ref());
            assert!(r.passed(), "{name}: {:?}", r.mismatches.first());
        }
        assert!(matches!(catalog("nope", 1), Err(WgError::UnknownCase(_))));
    }

    #[test]
    fn poly_exact_linear_has_zero_source() {
        let case = catalog("poly-exact", 1).unwrap();
        for x in [Point::new(0.1, 0.2, 0.3), Point::new(0.9, 0.5, 0.4)] {
            assert!(case.g(&x).norm() < 1e-14);
        }
    }

    #[test]
    fn trig_cube_is_divergence_free_and_has_no_cavities() {
        let case = TrigCube;
        let x = Point::new(0.3, 0.6, 0.2);
        assert!(case.f(&x).abs() < 1e-14);
        let mesh = build_cube_tet_mesh(2).unwrap();
        let inst = model_instance(Arc::new(TrigCube), &mesh, 5).unwrap();
        assert!(inst.beta.is_empty());
    }

    #[test]
    fn position_field_flux() {
        let case = UserCase::new(
            "position",
            Box::new(|x| *x),
            Box::new(|_| Matrix3::identity()),
            Box::new(|_| Point::zeros()),
        );
        let mesh = build_cube_hex_mesh(1, None).unwrap();
        let r = check_compatibility(&case, &mesh, ProblemKind::DivCurlNormal).unwrap();
        assert!((r.volume_source - 3.0).abs() < 1e-13);
        assert!((r.boundary_flux - 3.0).abs() < 1e-13);
        assert!(r.passed());
    }

    #[test]
    fn corrupted_source_is_reported() {
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
            fn p(&self, _: &Point) -> f64 {
                0.0
            }
            fn grad_p(&self, _: &Point) -> Point {
                Point::zeros()
            }
            fn curl_kappa_curl_u(&self, x: &Point) -> Point {
                TrigCube.curl_kappa_curl_u(x)
            }
            fn f(&self, x: &Point) -> f64 {
                TrigCube.f(x) + 0.25
            }
        }
        let mesh = build_cube_tet_mesh(2).unwrap();
        let r = check_compatibility(&Corrupted, &mesh, ProblemKind::DivCurlNormal).unwrap();
        let v = r.violations.iter().find(|v| v.condition.starts_with("(f,1)")).expect("violation");
        assert!((v.magnitude - 0.25).abs() < 1e-10);
    }

    #[test]
    fn hollow_flux_matches_divergence_theorem() {
        let mesh = build_hollow_cube_mesh(3).unwrap();
        let inst = model_instance(Arc::new(TrigHollow), &mesh, 9).unwrap();
        assert_eq!(inst.beta.len(), 1);
        // u is divergence free, so the cavity flux vanishes
        assert!(inst.beta[0].abs() < 1e-12);
    }
}
