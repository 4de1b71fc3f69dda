use std::collections::HashMap;
use std::fmt;

use super::{Point, PolyMesh};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ViolationKind {
    OrientationMismatch,
    NormalNotOutward,
    DegenerateFace,
    NonPlanarFace,
    NonUnitNormal,
    NotStarShaped,
    FluxImbalance,
    VolumeMismatch,
    MissingBoundaryTag,
    InteriorFaceTagged,
    DisconnectedComponent,
    MixedComponent,
    MissingComponent,
    ExteriorComponent,
}

impl ViolationKind {
    pub fn name(self) -> &'static str {
        match self {
            Self::OrientationMismatch => "orientation mismatch",
            Self::NormalNotOutward => "normal not outward",
            Self::DegenerateFace => "degenerate face",
            Self::NonPlanarFace => "nonplanar face",
            Self::NonUnitNormal => "non-unit normal",
            Self::NotStarShaped => "not star-shaped",
            Self::FluxImbalance => "flux imbalance",
            Self::VolumeMismatch => "volume mismatch",
            Self::MissingBoundaryTag => "missing boundary tag",
            Self::InteriorFaceTagged => "interior face tagged",
            Self::DisconnectedComponent => "disconnected boundary component",
            Self::MixedComponent => "mixed boundary component",
            Self::MissingComponent => "missing boundary component",
            Self::ExteriorComponent => "exterior component",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Violation {
    pub kind: ViolationKind,
    pub cell: Option<usize>,
    pub face: Option<usize>,
    pub detail: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.kind.name())?;
        if let Some(c) = self.cell {
            write!(f, " (cell {c})")?;
        }
        if let Some(fc) = self.face {
            write!(f, " (face {fc})")?;
        }
        if !self.detail.is_empty() {
            write!(f, ": {}", self.detail)?;
        }
        Ok(())
    }
}

/// Shape-regularity indicators. No thresholds are enforced on them.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct ShapeMetrics {
    /// min over faces of area / h_T² (h_T of the owner cell)
    pub min_face_area_ratio: f64,
    /// min over cells of volume / h_T³
    pub min_volume_ratio: f64,
    /// max over cells of h_T / (estimated inscribed radius)
    pub max_aspect_ratio: f64,
}

#[derive(Clone, Debug)]
pub struct MeshReport {
    pub violations: Vec<Violation>,
    pub metrics: ShapeMetrics,
}

impl MeshReport {
    pub fn is_valid(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn has(&self, kind: ViolationKind) -> bool {
        self.violations.iter().any(|v| v.kind == kind)
    }
}

/// Checks every mesh invariant and collects all violations.
pub fn validate(mesh: &PolyMesh) -> MeshReport {
    let mut out = Vec::new();
    let mut push = |kind, cell, face, detail: String| out.push(Violation { kind, cell, face, detail });

    for (fi, face) in mesh.faces().iter().enumerate() {
        let refs = mesh.face_references(fi);
        let h_t = mesh.cell(face.owner).diameter;
        if refs.len() == 2 && refs[0].1 == refs[1].1 {
            push(
                ViolationKind::OrientationMismatch,
                None,
                Some(fi),
                format!("cells {} and {} both use sign {:+}", refs[0].0, refs[1].0, refs[0].1),
            );
        }
        match (face.is_boundary(), face.tag) {
            (true, None) => push(ViolationKind::MissingBoundaryTag, None, Some(fi), String::new()),
            (false, Some(t)) => push(ViolationKind::InteriorFaceTagged, None, Some(fi), format!("tag {t}")),
            _ => {}
        }
        if face.area <= 1e-14 * h_t * h_t {
            push(ViolationKind::DegenerateFace, None, Some(fi), format!("area {:e}", face.area));
            continue;
        }
        if face.plane_deviation > 1e-12 * h_t {
            push(
                ViolationKind::NonPlanarFace,
                None,
                Some(fi),
                format!("vertex off plane by {:e}", face.plane_deviation),
            );
        }
        if (face.normal.norm() - 1.0).abs() > 1e-14 {
            push(ViolationKind::NonUnitNormal, None, Some(fi), format!("|n| = {}", face.normal.norm()));
        }
    }

    for (ci, cell) in mesh.cells().iter().enumerate() {
        let mut outward = true;
        let mut flux = Point::zeros();
        let mut area_scale = 0.0;
        for r in &cell.faces {
            let face = mesh.face(r.face);
            if r.sign * face.normal.dot(&(face.centroid - cell.apex)) <= 0.0 {
                outward = false;
            }
            flux += r.sign * face.area * face.normal;
            area_scale += face.area;
        }
        if !outward {
            push(ViolationKind::NormalNotOutward, Some(ci), None, String::new());
        } else if cell.min_fan_volume <= 0.0 {
            push(
                ViolationKind::NotStarShaped,
                Some(ci),
                None,
                format!("fan tetrahedron volume {:e}", cell.min_fan_volume),
            );
        }
        let h_t = cell.diameter;
        if flux.norm() > 1e-12 * (h_t * h_t).max(area_scale) {
            push(ViolationKind::FluxImbalance, Some(ci), None, format!("|sum n dA| = {:e}", flux.norm()));
        }
    }

    // Enclosed volume from the boundary by the divergence theorem.
    let mut enclosed = 0.0;
    for f in mesh.boundary_faces() {
        let face = mesh.face(f);
        let n = mesh.boundary_normal(f).unwrap();
        enclosed += face.area * face.centroid.dot(&n) / 3.0;
    }
    let total = mesh.total_volume();
    if (total - enclosed).abs() > 1e-10 * total.abs().max(enclosed.abs()) {
        push(
            ViolationKind::VolumeMismatch,
            None,
            None,
            format!("cells sum to {total}, boundary encloses {enclosed}"),
        );
    }

    check_components(mesh, &mut out);

    MeshReport { violations: out, metrics: shape_metrics(mesh) }
}

fn check_components(mesh: &PolyMesh, out: &mut Vec<Violation>) {
    let comps = boundary_flood_fill(mesh);
    let ntags = mesh.num_boundary_components();
    let mut comp_of_tag: Vec<Vec<usize>> = vec![Vec::new(); ntags];
    for (ci, faces) in comps.iter().enumerate() {
        let mut tags: Vec<usize> = faces.iter().filter_map(|&f| mesh.face(f).tag).collect();
        tags.sort_unstable();
        tags.dedup();
        if tags.len() > 1 {
            out.push(Violation {
                kind: ViolationKind::MixedComponent,
                cell: None,
                face: Some(faces[0]),
                detail: format!("connected boundary piece carries tags {tags:?}"),
            });
        }
        for t in tags {
            comp_of_tag[t].push(ci);
        }
    }
    for (t, cs) in comp_of_tag.iter().enumerate() {
        match cs.len() {
            0 => out.push(Violation {
                kind: ViolationKind::MissingComponent,
                cell: None,
                face: None,
                detail: format!("no boundary face carries tag {t}"),
            }),
            1 => {}
            n => out.push(Violation {
                kind: ViolationKind::DisconnectedComponent,
                cell: None,
                face: None,
                detail: format!("tag {t} spans {n} edge-disconnected pieces"),
            }),
        }
    }
    if ntags > 1 {
        let bbox = |tag: usize| {
            let mut lo = Point::repeat(f64::INFINITY);
            let mut hi = Point::repeat(f64::NEG_INFINITY);
            for f in mesh.faces().iter().filter(|f| f.tag == Some(tag)) {
                for &v in &f.vertices {
                    lo = lo.inf(&mesh.vertices()[v]);
                    hi = hi.sup(&mesh.vertices()[v]);
                }
            }
            (lo, hi)
        };
        let (lo0, hi0) = bbox(0);
        for t in 1..ntags {
            let (lo, hi) = bbox(t);
            let inside = (0..3).all(|d| lo[d] >= lo0[d] && hi[d] <= hi0[d]);
            if !inside {
                out.push(Violation {
                    kind: ViolationKind::ExteriorComponent,
                    cell: None,
                    face: None,
                    detail: format!("component {t} is not enclosed by component 0"),
                });
            }
        }
    }
}

/// Edge-connected pieces of the boundary, each a sorted list of face indices.
fn boundary_flood_fill(mesh: &PolyMesh) -> Vec<Vec<usize>> {
    let mut edge_faces: HashMap<(usize, usize), Vec<usize>> = HashMap::new();
    let bfaces: Vec<usize> = mesh.boundary_faces().collect();
    for &f in &bfaces {
        let vs = &mesh.face(f).vertices;
        for i in 0..vs.len() {
            let (a, b) = (vs[i], vs[(i + 1) % vs.len()]);
            edge_faces.entry((a.min(b), a.max(b))).or_default().push(f);
        }
    }
    let mut visited = vec![false; mesh.num_faces()];
    let mut comps = Vec::new();
    for &start in &bfaces {
        if visited[start] {
            continue;
        }
        visited[start] = true;
        let mut stack = vec![start];
        let mut comp = Vec::new();
        while let Some(f) = stack.pop() {
            comp.push(f);
            let vs = &mesh.face(f).vertices;
            for i in 0..vs.len() {
                let (a, b) = (vs[i], vs[(i + 1) % vs.len()]);
                for &g in &edge_faces[&(a.min(b), a.max(b))] {
                    if !visited[g] {
                        visited[g] = true;
                        stack.push(g);
                    }
                }
            }
        }
        comp.sort_unstable();
        comps.push(comp);
    }
    comps
}

/// Tags boundary faces by edge-connected component. The component whose
/// bounding box is largest (the exterior boundary) gets tag 0; the remaining
/// components are numbered by their smallest face index.
pub fn label_boundary_components(mesh: &PolyMesh) -> Vec<Option<usize>> {
    let comps = boundary_flood_fill(mesh);
    let extent = |faces: &Vec<usize>| {
        let mut lo = Point::repeat(f64::INFINITY);
        let mut hi = Point::repeat(f64::NEG_INFINITY);
        for &f in faces {
            for &v in &mesh.face(f).vertices {
                lo = lo.inf(&mesh.vertices()[v]);
                hi = hi.sup(&mesh.vertices()[v]);
            }
        }
        (hi - lo).norm()
    };
    let mut exterior = 0;
    for i in 1..comps.len() {
        if extent(&comps[i]) > extent(&comps[exterior]) {
            exterior = i;
        }
    }
    let mut tags = vec![None; mesh.num_faces()];
    let mut next = 1;
    for (i, comp) in comps.iter().enumerate() {
        let t = if i == exterior {
            0
        } else {
            next += 1;
            next - 1
        };
        for &f in comp {
            tags[f] = Some(t);
        }
    }
    tags
}

fn shape_metrics(mesh: &PolyMesh) -> ShapeMetrics {
    let mut m = ShapeMetrics {
        min_face_area_ratio: f64::INFINITY,
        min_volume_ratio: f64::INFINITY,
        max_aspect_ratio: 0.0,
    };
    for face in mesh.faces() {
        let h = mesh.cell(face.owner).diameter;
        m.min_face_area_ratio = m.min_face_area_ratio.min(face.area / (h * h));
    }
    for cell in mesh.cells() {
        let h = cell.diameter;
        m.min_volume_ratio = m.min_volume_ratio.min(cell.volume / (h * h * h));
        let inradius = cell
            .faces
            .iter()
            .map(|r| {
                let f = mesh.face(r.face);
                r.sign * f.normal.dot(&(f.centroid - cell.centroid))
            })
            .fold(f64::INFINITY, f64::min);
        let ratio = if inradius > 0.0 { h / inradius } else { f64::INFINITY };
        m.max_aspect_ratio = m.max_aspect_ratio.max(ratio);
    }
    m
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::{build_cube_hex_mesh, build_cube_tet_mesh, CellBox, FaceSpec};

    #[test]
    fn structured_meshes_are_clean() {
        for mesh in [build_cube_tet_mesh(2).unwrap(), build_cube_hex_mesh(3, None).unwrap()] {
            let r = validate(&mesh);
            assert!(r.is_valid(), "{:?}", r.violations);
            assert!(r.metrics.min_volume_ratio > 0.0 && r.metrics.max_aspect_ratio.is_finite());
        }
    }

    #[test]
    fn inverted_cell_is_reported() {
        let mesh = build_cube_hex_mesh(1, None).unwrap();
        let faces: Vec<FaceSpec> = mesh
            .faces()
            .iter()
            .map(|f| FaceSpec { vertices: f.vertices.clone(), tag: f.tag })
            .collect();
        let cells = vec![mesh.cell(0).faces.iter().map(|r| (r.face, -r.sign)).collect()];
        let bad = PolyMesh::new(mesh.vertices().to_vec(), faces, cells).unwrap();
        let r = validate(&bad);
        let v = r.violations.iter().find(|v| v.kind == ViolationKind::NormalNotOutward).unwrap();
        assert_eq!(v.cell, Some(0));
        assert!(v.to_string().contains("normal not outward"));
    }

    #[test]
    fn degenerate_face_is_reported() {
        // Collapse the top of a unit tet onto the base plane.
        let v = vec![
            Point::new(0.0, 0.0, 0.0),
            Point::new(1.0, 0.0, 0.0),
            Point::new(0.0, 1.0, 0.0),
            Point::new(0.5, 0.5, 0.0),
        ];
        let faces = vec![
            FaceSpec { vertices: vec![0, 2, 1], tag: Some(0) },
            FaceSpec { vertices: vec![0, 1, 3], tag: Some(0) },
            FaceSpec { vertices: vec![0, 3, 2], tag: Some(0) },
            FaceSpec { vertices: vec![1, 2, 3], tag: Some(0) },
        ];
        let cells = vec![vec![(0, 1.0), (1, 1.0), (2, 1.0), (3, 1.0)]];
        let r = validate(&PolyMesh::new(v, faces, cells).unwrap());
        assert!(r.has(ViolationKind::DegenerateFace));
    }

    #[test]
    fn hollow_cube_components() {
        let mesh = build_cube_hex_mesh(3, Some(CellBox { lo: [1, 1, 1], hi: [2, 2, 2] })).unwrap();
        let tags = label_boundary_components(&mesh);
        for (f, face) in mesh.faces().iter().enumerate() {
            assert_eq!(tags[f], face.tag);
        }
        assert!(validate(&mesh).is_valid());
    }

    #[test]
    fn swapped_component_tags_are_reported() {
        let mesh = build_cube_hex_mesh(3, Some(CellBox { lo: [1, 1, 1], hi: [2, 2, 2] })).unwrap();
        let swapped: Vec<Option<usize>> = mesh.faces().iter().map(|f| f.tag.map(|t| 1 - t)).collect();
        let bad = mesh.with_tags(&swapped);
        assert!(validate(&bad).has(ViolationKind::ExteriorComponent));
    }
}
