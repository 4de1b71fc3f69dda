//! Quadrature on polyhedral cells and polygonal faces.
//!
//! Cells are split into the fan of tetrahedra joining the cell apex (vertex
//! average) to the fan triangles of each face; faces are split into the fan
//! of triangles around the face centroid. Each simplex carries a collapsed
//! (Duffy) tensor Gauss-Legendre rule, so the rules have positive weights
//! and arbitrary exactness degree.

use crate::error::{Result, WgError};
use crate::mesh::{Point, PolyMesh};

#[derive(Clone, Debug)]
pub struct QuadRule {
    pub points: Vec<Point>,
    pub weights: Vec<f64>,
    /// Total polynomial degree integrated exactly.
    pub degree: usize,
}

impl QuadRule {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn integrate(&self, f: impl Fn(&Point) -> f64) -> f64 {
        self.points.iter().zip(&self.weights).map(|(p, w)| w * f(p)).sum()
    }

    pub fn measure(&self) -> f64 {
        self.weights.iter().sum()
    }
}

/// Gauss-Legendre nodes and weights on `[0, 1]`.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    for i in 0..n {
        let mut t = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            // three-term recurrence for P_n and its derivative
            let (mut p0, mut p1) = (1.0, t);
            for k in 2..=n {
                let p2 = ((2 * k - 1) as f64 * t * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = p2;
            }
            let pn = if n == 0 { 1.0 } else { p1 };
            let pm = if n <= 1 { 1.0 } else { p0 };
            dp = n as f64 * (t * pn - pm) / (t * t - 1.0);
            let dt = pn / dp;
            t -= dt;
            if dt.abs() < 1e-16 {
                break;
            }
        }
        x[n - 1 - i] = 0.5 * (t + 1.0);
        w[n - 1 - i] = 1.0 / ((1.0 - t * t) * dp * dp);
    }
    (x, w)
}

/// Rule on the reference triangle `{x, y >= 0, x + y <= 1}`, exact to degree `d`.
pub fn reference_triangle(d: usize) -> Vec<([f64; 2], f64)> {
    let (xa, wa) = gauss_legendre((d + 2).div_ceil(2));
    let (xb, wb) = gauss_legendre((d + 1).div_ceil(2));
    let mut out = Vec::with_capacity(xa.len() * xb.len());
    for (a, wa) in xa.iter().zip(&wa) {
        for (b, wb) in xb.iter().zip(&wb) {
            out.push(([*a, (1.0 - a) * b], wa * wb * (1.0 - a)));
        }
    }
    out
}

/// Rule on the reference tetrahedron `{x, y, z >= 0, x + y + z <= 1}`, exact to degree `d`.
pub fn reference_tetrahedron(d: usize) -> Vec<([f64; 3], f64)> {
    let (xa, wa) = gauss_legendre((d + 3).div_ceil(2));
    let (xb, wb) = gauss_legendre((d + 2).div_ceil(2));
    let (xc, wc) = gauss_legendre((d + 1).div_ceil(2));
    let mut out = Vec::with_capacity(xa.len() * xb.len() * xc.len());
    for (a, wa) in xa.iter().zip(&wa) {
        for (b, wb) in xb.iter().zip(&wb) {
            for (c, wc) in xc.iter().zip(&wc) {
                let y = (1.0 - a) * b;
                let z = (1.0 - a) * (1.0 - b) * c;
                out.push(([*a, y, z], wa * wb * wc * (1.0 - a) * (1.0 - a) * (1.0 - b)));
            }
        }
    }
    out
}

fn push_tet(rule: &mut QuadRule, reference: &[([f64; 3], f64)], p: [Point; 4]) {
    let (e1, e2, e3) = (p[1] - p[0], p[2] - p[0], p[3] - p[0]);
    let det = e1.dot(&e2.cross(&e3)).abs();
    for (x, w) in reference {
        rule.points.push(p[0] + x[0] * e1 + x[1] * e2 + x[2] * e3);
        rule.weights.push(w * det);
    }
}

/// Rule exact to degree `d` on a single tetrahedron.
pub fn tet_quadrature(p: [Point; 4], d: usize) -> QuadRule {
    let mut rule = QuadRule { points: Vec::new(), weights: Vec::new(), degree: d };
    push_tet(&mut rule, &reference_tetrahedron(d), p);
    rule
}

/// Rule exact to degree `d` on cell `c`.
pub fn cell_quadrature(mesh: &PolyMesh, c: usize, d: usize) -> Result<QuadRule> {
    let cell = mesh.cell(c);
    let reference = reference_tetrahedron(d);
    let mut rule = QuadRule { points: Vec::new(), weights: Vec::new(), degree: d };
    for r in &cell.faces {
        for [ce, a, b] in mesh.face_triangles(r.face) {
            let vol = r.sign * (ce - cell.apex).dot(&(a - ce).cross(&(b - ce))) / 6.0;
            if vol <= 0.0 {
                return Err(WgError::NotStarShaped { cell: c, volume: vol });
            }
            push_tet(&mut rule, &reference, [cell.apex, ce, a, b]);
        }
    }
    Ok(rule)
}

/// Rule exact to degree `d` on face `f`.
pub fn face_quadrature(mesh: &PolyMesh, f: usize, d: usize) -> QuadRule {
    let reference = reference_triangle(d);
    let mut rule = QuadRule { points: Vec::new(), weights: Vec::new(), degree: d };
    for [c, a, b] in mesh.face_triangles(f) {
        let (e1, e2) = (a - c, b - c);
        let jac = e1.cross(&e2).norm();
        for (x, w) in &reference {
            rule.points.push(c + x[0] * e1 + x[1] * e2);
            rule.weights.push(w * jac);
        }
    }
    rule
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::{build_cube_hex_mesh, build_cube_tet_mesh};

    fn factorial(n: u32) -> f64 {
        (1..=n).map(f64::from).product()
    }

    #[test]
    fn gauss_legendre_moments() {
        for n in 1..=8 {
            let (x, w) = gauss_legendre(n);
            assert!(w.iter().all(|&w| w > 0.0));
            for p in 0..(2 * n) as i32 {
                let q: f64 = x.iter().zip(&w).map(|(x, w)| w * x.powi(p)).sum();
                assert!((q - 1.0 / (p as f64 + 1.0)).abs() < 1e-14, "n={n} p={p}");
            }
        }
    }

    #[test]
    fn reference_tet_monomials() {
        // ∫ x^a y^b z^c over the unit simplex = a! b! c! / (a+b+c+3)!
        for d in 0..=9u32 {
            let rule = reference_tetrahedron(d as usize);
            for a in 0..=d {
                for b in 0..=d - a {
                    let c = d - a - b;
                    let q: f64 = rule
                        .iter()
                        .map(|(x, w)| w * x[0].powi(a as i32) * x[1].powi(b as i32) * x[2].powi(c as i32))
                        .sum();
                    let exact = factorial(a) * factorial(b) * factorial(c) / factorial(d + 3);
                    assert!((q - exact).abs() <= 1e-13 * exact, "{a} {b} {c}");
                }
            }
        }
    }

    #[test]
    fn reference_triangle_monomials() {
        for d in 0..=9u32 {
            let rule = reference_triangle(d as usize);
            for a in 0..=d {
                let b = d - a;
                let q: f64 = rule.iter().map(|(x, w)| w * x[0].powi(a as i32) * x[1].powi(b as i32)).sum();
                let exact = factorial(a) * factorial(b) / factorial(d + 2);
                assert!((q - exact).abs() <= 1e-13 * exact);
            }
        }
    }

    #[test]
    fn unit_cube_cell_integrals() {
        let mesh = build_cube_hex_mesh(1, None).unwrap();
        let q2 = cell_quadrature(&mesh, 0, 2).unwrap();
        assert!((q2.integrate(|p| p.x) - 0.5).abs() < 1e-14);
        assert!((q2.integrate(|p| p.x * p.x) - 1.0 / 3.0).abs() < 1e-14);
        let q4 = cell_quadrature(&mesh, 0, 4).unwrap();
        assert!((q4.integrate(|p| p.x * p.x * p.y * p.y) - 1.0 / 9.0).abs() < 1e-14);
        assert!(q4.weights.iter().all(|&w| w > 0.0));
    }

    #[test]
    fn unit_tet_volume() {
        let tet = crate::mesh::mesh_from_str(
            "wgmesh 1\nvertices 4\n0 0 0\n1 0 0\n0 1 0\n0 0 1\nfaces 4\n3 0 2 1 0\n3 0 1 3 0\n3 0 3 2 0\n3 1 2 3 0\ncells 1\n4 0 1 2 3\n",
        )
        .unwrap();
        let q = cell_quadrature(&tet, 0, 1).unwrap();
        assert!((q.measure() - 1.0 / 6.0).abs() < 1e-15);
    }

    #[test]
    fn face_rules_measure_area() {
        let mesh = build_cube_tet_mesh(2).unwrap();
        for f in 0..mesh.num_faces() {
            let q = face_quadrature(&mesh, f, 3);
            assert!((q.measure() - mesh.face(f).area).abs() < 1e-15);
        }
    }
}
