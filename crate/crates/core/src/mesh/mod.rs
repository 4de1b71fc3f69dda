//! Polyhedral partitions of a bounded domain.
//!
//! A [`PolyMesh`] stores planar polygonal faces shared between cells and a
//! per-cell list of signed face references. A sign of `+1` means the stored
//! face normal points out of that cell. Every face has an owner cell (the one
//! that sees the stored normal as outward when such a cell exists) and, for
//! interior faces, a neighbor. Boundary faces carry the index of the
//! connected boundary component they belong to; component 0 is the exterior
//! boundary and components `1..=m` bound cavities.

mod generate;
mod io;
mod validate;

pub use generate::{build_cube_hex_mesh, build_cube_tet_mesh, build_hollow_cube_mesh, CellBox};
pub use io::{load_mesh, mesh_from_str, mesh_to_string, save_mesh};
pub use validate::{label_boundary_components, validate, MeshReport, ShapeMetrics, Violation, ViolationKind};

use nalgebra::Vector3;

use crate::error::MeshError;

pub type Point = Vector3<f64>;

/// Input description of a face: a vertex loop and an optional boundary tag.
#[derive(Clone, Debug, PartialEq)]
pub struct FaceSpec {
    pub vertices: Vec<usize>,
    pub tag: Option<usize>,
}

/// Signed reference from a cell to one of its faces.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CellFace {
    pub face: usize,
    /// `+1.0` when the stored face normal is outward for this cell.
    pub sign: f64,
}

#[derive(Clone, Debug)]
pub struct Face {
    pub vertices: Vec<usize>,
    /// Unit normal from the vertex loop (right-hand rule).
    pub normal: Point,
    pub centroid: Point,
    pub area: f64,
    pub diameter: f64,
    /// Maximum distance of a vertex from the face plane.
    pub plane_deviation: f64,
    pub owner: usize,
    pub neighbor: Option<usize>,
    pub tag: Option<usize>,
}

impl Face {
    pub fn is_boundary(&self) -> bool {
        self.neighbor.is_none()
    }
}

#[derive(Clone, Debug)]
pub struct Cell {
    pub faces: Vec<CellFace>,
    /// Average of the cell's distinct vertices; apex of the quadrature fan.
    pub apex: Point,
    pub centroid: Point,
    pub volume: f64,
    /// Smallest signed volume among the apex/face-centroid fan tetrahedra.
    pub min_fan_volume: f64,
    pub diameter: f64,
    pub vertices: Vec<usize>,
}

/// Immutable polyhedral mesh.
#[derive(Clone, Debug)]
pub struct PolyMesh {
    vertices: Vec<Point>,
    faces: Vec<Face>,
    cells: Vec<Cell>,
    face_refs: Vec<Vec<(usize, f64)>>,
    num_components: usize,
    h: f64,
}

impl PolyMesh {
    /// Builds a mesh and its derived geometry from raw connectivity.
    ///
    /// Only structural defects that make the connectivity unusable are
    /// errors here (bad indices, faces used by zero or more than two cells).
    /// Geometric and orientation defects are reported by [`validate`].
    pub fn new(
        vertices: Vec<Point>,
        face_specs: Vec<FaceSpec>,
        cell_specs: Vec<Vec<(usize, f64)>>,
    ) -> Result<Self, MeshError> {
        let nv = vertices.len();
        let nf = face_specs.len();
        for (fi, f) in face_specs.iter().enumerate() {
            if f.vertices.len() < 3 {
                return Err(MeshError::IndexOutOfRange(format!(
                    "face {fi} has {} vertices (need at least 3)",
                    f.vertices.len()
                )));
            }
            if let Some(&v) = f.vertices.iter().find(|&&v| v >= nv) {
                return Err(MeshError::IndexOutOfRange(format!("face {fi} uses vertex {v}, mesh has {nv}")));
            }
        }
        let mut face_refs: Vec<Vec<(usize, f64)>> = vec![Vec::new(); nf];
        for (ci, c) in cell_specs.iter().enumerate() {
            if c.len() < 4 {
                return Err(MeshError::IndexOutOfRange(format!("cell {ci} has {} faces (need at least 4)", c.len())));
            }
            for &(f, s) in c {
                if f >= nf {
                    return Err(MeshError::IndexOutOfRange(format!("cell {ci} uses face {f}, mesh has {nf}")));
                }
                face_refs[f].push((ci, s.signum()));
            }
        }
        for (fi, refs) in face_refs.iter().enumerate() {
            match refs.len() {
                0 => return Err(MeshError::OrphanFace { face: fi }),
                1 | 2 => {}
                count => return Err(MeshError::NonManifold { face: fi, count }),
            }
        }

        let faces: Vec<Face> = face_specs
            .into_iter()
            .zip(&face_refs)
            .map(|(spec, refs)| {
                let (owner, neighbor) = match refs.as_slice() {
                    [(a, _)] => (*a, None),
                    [(a, sa), (b, _)] => {
                        if *sa > 0.0 {
                            (*a, Some(*b))
                        } else {
                            (*b, Some(*a))
                        }
                    }
                    _ => unreachable!(),
                };
                face_geometry(&vertices, spec, owner, neighbor)
            })
            .collect();

        let cells: Vec<Cell> = cell_specs
            .into_iter()
            .map(|refs| {
                let faces_c: Vec<CellFace> = refs.into_iter().map(|(face, s)| CellFace { face, sign: s.signum() }).collect();
                cell_geometry(&vertices, &faces, faces_c)
            })
            .collect();

        let num_components = faces.iter().filter_map(|f| f.tag).map(|t| t + 1).max().unwrap_or(0);
        let h = cells.iter().map(|c| c.diameter).fold(0.0, f64::max);
        Ok(Self { vertices, faces, cells, face_refs, num_components, h })
    }

    pub fn vertices(&self) -> &[Point] {
        &self.vertices
    }

    pub fn faces(&self) -> &[Face] {
        &self.faces
    }

    pub fn cells(&self) -> &[Cell] {
        &self.cells
    }

    pub fn face(&self, i: usize) -> &Face {
        &self.faces[i]
    }

    pub fn cell(&self, i: usize) -> &Cell {
        &self.cells[i]
    }

    pub fn num_cells(&self) -> usize {
        self.cells.len()
    }

    pub fn num_faces(&self) -> usize {
        self.faces.len()
    }

    /// Mesh size: the largest cell diameter.
    pub fn h(&self) -> f64 {
        self.h
    }

    /// Number of boundary components (`m + 1`).
    pub fn num_boundary_components(&self) -> usize {
        self.num_components
    }

    /// Number of cavity components `m` (all components except the exterior one).
    pub fn num_cavities(&self) -> usize {
        self.num_components.saturating_sub(1)
    }

    pub fn boundary_faces(&self) -> impl Iterator<Item = usize> + '_ {
        self.faces.iter().enumerate().filter(|(_, f)| f.is_boundary()).map(|(i, _)| i)
    }

    pub fn interior_faces(&self) -> impl Iterator<Item = usize> + '_ {
        self.faces.iter().enumerate().filter(|(_, f)| !f.is_boundary()).map(|(i, _)| i)
    }

    /// The (cell, sign) pairs referencing face `f`, in cell order.
    pub fn face_references(&self, f: usize) -> &[(usize, f64)] {
        &self.face_refs[f]
    }

    /// Outward unit normal of face `f` with respect to the domain, for boundary faces.
    pub fn boundary_normal(&self, f: usize) -> Option<Point> {
        let face = &self.faces[f];
        if face.is_boundary() {
            Some(self.face_refs[f][0].1 * face.normal)
        } else {
            None
        }
    }

    /// Total area of the boundary component `tag`.
    pub fn component_area(&self, tag: usize) -> f64 {
        self.faces.iter().filter(|f| f.tag == Some(tag)).map(|f| f.area).sum()
    }

    pub fn total_volume(&self) -> f64 {
        self.cells.iter().map(|c| c.volume).sum()
    }

    /// Cell-relative fan triangles of a face: `(face centroid, v_i, v_{i+1})`.
    pub fn face_triangles(&self, f: usize) -> impl Iterator<Item = [Point; 3]> + '_ {
        let face = &self.faces[f];
        let n = face.vertices.len();
        (0..n).map(move |i| {
            [
                face.centroid,
                self.vertices[face.vertices[i]],
                self.vertices[face.vertices[(i + 1) % n]],
            ]
        })
    }

    pub(crate) fn with_tags(mut self, tags: &[Option<usize>]) -> Self {
        for (f, t) in self.faces.iter_mut().zip(tags) {
            f.tag = *t;
        }
        self.num_components = self.faces.iter().filter_map(|f| f.tag).map(|t| t + 1).max().unwrap_or(0);
        self
    }
}

fn face_geometry(vertices: &[Point], spec: FaceSpec, owner: usize, neighbor: Option<usize>) -> Face {
    let pts: Vec<Point> = spec.vertices.iter().map(|&v| vertices[v]).collect();
    let n = pts.len();
    let avg = pts.iter().fold(Point::zeros(), |a, p| a + p) / n as f64;
    let mut area_vec = Point::zeros();
    for i in 0..n {
        area_vec += (pts[i] - avg).cross(&(pts[(i + 1) % n] - avg));
    }
    area_vec *= 0.5;
    let area = area_vec.norm();
    let normal = if area > 0.0 { area_vec / area } else { Point::zeros() };
    let mut centroid = Point::zeros();
    let mut wsum = 0.0;
    for i in 0..n {
        let a = pts[i];
        let b = pts[(i + 1) % n];
        let w = 0.5 * (a - avg).cross(&(b - avg)).dot(&normal);
        centroid += w * (avg + a + b) / 3.0;
        wsum += w;
    }
    let centroid = if wsum.abs() > 0.0 { centroid / wsum } else { avg };
    let mut diameter: f64 = 0.0;
    for i in 0..n {
        for j in i + 1..n {
            diameter = diameter.max((pts[i] - pts[j]).norm());
        }
    }
    let plane_deviation = pts.iter().map(|p| (p - centroid).dot(&normal).abs()).fold(0.0, f64::max);
    Face {
        vertices: spec.vertices,
        normal,
        centroid,
        area,
        diameter,
        plane_deviation,
        owner,
        neighbor,
        tag: spec.tag,
    }
}

fn cell_geometry(vertices: &[Point], faces: &[Face], refs: Vec<CellFace>) -> Cell {
    let mut verts: Vec<usize> = refs.iter().flat_map(|r| faces[r.face].vertices.iter().copied()).collect();
    verts.sort_unstable();
    verts.dedup();
    let apex = verts.iter().fold(Point::zeros(), |a, &v| a + vertices[v]) / verts.len() as f64;
    let mut volume = 0.0;
    let mut moment = Point::zeros();
    let mut min_fan_volume = f64::INFINITY;
    for r in &refs {
        let face = &faces[r.face];
        let n = face.vertices.len();
        for i in 0..n {
            let a = vertices[face.vertices[i]];
            let b = vertices[face.vertices[(i + 1) % n]];
            let vol = r.sign * (face.centroid - apex).dot(&(a - face.centroid).cross(&(b - face.centroid))) / 6.0;
            min_fan_volume = min_fan_volume.min(vol);
            volume += vol;
            moment += vol * (apex + face.centroid + a + b) / 4.0;
        }
    }
    let centroid = if volume.abs() > 0.0 { moment / volume } else { apex };
    let mut diameter: f64 = 0.0;
    for (i, &a) in verts.iter().enumerate() {
        for &b in &verts[i + 1..] {
            diameter = diameter.max((vertices[a] - vertices[b]).norm());
        }
    }
    Cell { faces: refs, apex, centroid, volume, min_fan_volume, diameter, vertices: verts }
}

/// Right-handed orthonormal frame `(n, t1, t2)` attached to a face normal.
///
/// `t1` is the normalized projection of the coordinate axis least aligned
/// with `n` (lowest index on ties) and `t2 = n × t1`.
pub fn face_frame(n: &Point) -> (Point, Point, Point) {
    let mut axis = 0;
    for i in 1..3 {
        if n[i].abs() < n[axis].abs() {
            axis = i;
        }
    }
    let mut e = Point::zeros();
    e[axis] = 1.0;
    let t1 = (e - e.dot(n) * n).normalize();
    let t2 = n.cross(&t1);
    (*n, t1, t2)
}
