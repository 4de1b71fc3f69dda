use std::collections::HashMap;

use super::{label_boundary_components, FaceSpec, Point, PolyMesh};
use crate::error::MeshError;

/// Half-open range of structured cell indices `[lo, hi)` along each axis.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct CellBox {
    pub lo: [usize; 3],
    pub hi: [usize; 3],
}

impl CellBox {
    fn contains(&self, ijk: [usize; 3]) -> bool {
        (0..3).all(|d| ijk[d] >= self.lo[d] && ijk[d] < self.hi[d])
    }
}

fn grid_vertices(n: usize) -> Vec<Point> {
    let mut v = Vec::with_capacity((n + 1).pow(3));
    for k in 0..=n {
        for j in 0..=n {
            for i in 0..=n {
                v.push(Point::new(i as f64, j as f64, k as f64) / n as f64);
            }
        }
    }
    v
}

fn grid_index(n: usize, i: usize, j: usize, k: usize) -> usize {
    i + (n + 1) * (j + (n + 1) * k)
}

/// Uniform partition of the unit cube into `6 n³` tetrahedra: each sub-cube is
/// split into the six Kuhn tetrahedra sharing its main diagonal.
pub fn build_cube_tet_mesh(n: usize) -> Result<PolyMesh, MeshError> {
    if n == 0 {
        return Err(MeshError::InvalidInput("subdivisions must be at least 1".into()));
    }
    const PERMS: [[usize; 3]; 6] = [[0, 1, 2], [0, 2, 1], [1, 0, 2], [1, 2, 0], [2, 0, 1], [2, 1, 0]];
    let vertices = grid_vertices(n);
    let mut cells = Vec::with_capacity(6 * n * n * n);
    for k in 0..n {
        for j in 0..n {
            for i in 0..n {
                for perm in PERMS {
                    let mut p = [i, j, k];
                    let mut path = vec![grid_index(n, p[0], p[1], p[2])];
                    for &axis in &perm {
                        p[axis] += 1;
                        path.push(grid_index(n, p[0], p[1], p[2]));
                    }
                    let [a, b, c, d] = [path[0], path[1], path[2], path[3]];
                    cells.push(vec![vec![a, b, c], vec![a, b, d], vec![a, c, d], vec![b, c, d]]);
                }
            }
        }
    }
    from_cell_polygons(vertices, cells)
}

/// Axis-aligned hexahedral partition of the unit cube into `n³` cells, with
/// the cells of `cavity` removed. A cavity must be nonempty and must not touch
/// the outer boundary; its faces form boundary component 1.
pub fn build_cube_hex_mesh(n: usize, cavity: Option<CellBox>) -> Result<PolyMesh, MeshError> {
    if n == 0 {
        return Err(MeshError::InvalidInput("subdivisions must be at least 1".into()));
    }
    if let Some(c) = cavity {
        for d in 0..3 {
            if c.lo[d] >= c.hi[d] {
                return Err(MeshError::InvalidInput(format!("empty cavity {c:?}")));
            }
            if c.lo[d] == 0 || c.hi[d] >= n {
                return Err(MeshError::InvalidInput(format!(
                    "cavity {c:?} touches the outer boundary of the {n}^3 grid"
                )));
            }
        }
    }
    let vertices = grid_vertices(n);
    let mut cells = Vec::new();
    for k in 0..n {
        for j in 0..n {
            for i in 0..n {
                if cavity.is_some_and(|c| c.contains([i, j, k])) {
                    continue;
                }
                let g = |a: usize, b: usize, c: usize| grid_index(n, i + a, j + b, k + c);
                cells.push(vec![
                    vec![g(0, 0, 0), g(0, 1, 0), g(0, 1, 1), g(0, 0, 1)],
                    vec![g(1, 0, 0), g(1, 1, 0), g(1, 1, 1), g(1, 0, 1)],
                    vec![g(0, 0, 0), g(1, 0, 0), g(1, 0, 1), g(0, 0, 1)],
                    vec![g(0, 1, 0), g(1, 1, 0), g(1, 1, 1), g(0, 1, 1)],
                    vec![g(0, 0, 0), g(1, 0, 0), g(1, 1, 0), g(0, 1, 0)],
                    vec![g(0, 0, 1), g(1, 0, 1), g(1, 1, 1), g(0, 1, 1)],
                ]);
            }
        }
    }
    from_cell_polygons(vertices, cells)
}

/// Hexahedral unit cube with the central third `[1/3, 2/3]³` removed.
/// `n` must be a positive multiple of 3.
pub fn build_hollow_cube_mesh(n: usize) -> Result<PolyMesh, MeshError> {
    if n == 0 || n % 3 != 0 {
        return Err(MeshError::InvalidInput(format!("hollow cube needs n divisible by 3, got {n}")));
    }
    let (a, b) = (n / 3, 2 * n / 3);
    build_cube_hex_mesh(n, Some(CellBox { lo: [a; 3], hi: [b; 3] }))
}

/// Builds a mesh from per-cell polygon loops of arbitrary orientation.
/// Shared polygons are merged, stored loops are oriented outward for the
/// first cell that uses them, and boundary faces are tagged by component.
fn from_cell_polygons(vertices: Vec<Point>, cells: Vec<Vec<Vec<usize>>>) -> Result<PolyMesh, MeshError> {
    let mut index: HashMap<Vec<usize>, usize> = HashMap::new();
    let mut faces: Vec<FaceSpec> = Vec::new();
    let mut normals: Vec<Point> = Vec::new();
    let mut cell_refs = Vec::with_capacity(cells.len());
    for polys in cells {
        let mut vs: Vec<usize> = polys.iter().flatten().copied().collect();
        vs.sort_unstable();
        vs.dedup();
        let center = vs.iter().fold(Point::zeros(), |a, &v| a + vertices[v]) / vs.len() as f64;
        let mut refs = Vec::with_capacity(polys.len());
        for mut loop_ in polys {
            let mut key = loop_.clone();
            key.sort_unstable();
            let (area_vec, centroid) = loop_normal(&vertices, &loop_);
            let outward = area_vec.dot(&(centroid - center)) > 0.0;
            match index.get(&key) {
                Some(&f) => {
                    let s = if normals[f].dot(&(centroid - center)) > 0.0 { 1.0 } else { -1.0 };
                    refs.push((f, s));
                }
                None => {
                    if !outward {
                        loop_.reverse();
                    }
                    let f = faces.len();
                    index.insert(key, f);
                    normals.push(if outward { area_vec } else { -area_vec });
                    faces.push(FaceSpec { vertices: loop_, tag: None });
                    refs.push((f, 1.0));
                }
            }
        }
        cell_refs.push(refs);
    }
    let mesh = PolyMesh::new(vertices, faces, cell_refs)?;
    let tags = label_boundary_components(&mesh);
    Ok(mesh.with_tags(&tags))
}

fn loop_normal(vertices: &[Point], loop_: &[usize]) -> (Point, Point) {
    let n = loop_.len();
    let avg = loop_.iter().fold(Point::zeros(), |a, &v| a + vertices[v]) / n as f64;
    let mut area = Point::zeros();
    for i in 0..n {
        area += (vertices[loop_[i]] - avg).cross(&(vertices[loop_[(i + 1) % n]] - avg));
    }
    (area, avg)
}
