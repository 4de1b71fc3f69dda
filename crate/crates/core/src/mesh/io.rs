//! Plain-text mesh format.
//!
//! ```text
//! wgmesh 1
//! vertices N
//! x y z                      (N lines)
//! faces N
//! k v1 ... vk tag            (N lines, tag = -1 for interior faces)
//! cells N
//! k f1 ... fk                (N lines, signed face indices)
//! ```
//!
//! Indices start at 0. A face reference written with a leading `-` (including
//! `-0`) is used with negative orientation by that cell. Blank lines and lines
//! starting with `#` are ignored.

use std::fmt::Write as _;
use std::path::Path;

use super::{validate, FaceSpec, Point, PolyMesh};
use crate::error::MeshError;

/// Reads and validates a mesh file.
pub fn load_mesh(path: impl AsRef<Path>) -> Result<PolyMesh, MeshError> {
    let text = std::fs::read_to_string(path)?;
    mesh_from_str(&text)
}

pub fn save_mesh(mesh: &PolyMesh, path: impl AsRef<Path>) -> Result<(), MeshError> {
    std::fs::write(path, mesh_to_string(mesh))?;
    Ok(())
}

pub fn mesh_to_string(mesh: &PolyMesh) -> String {
    let mut s = String::from("wgmesh 1\n");
    let _ = writeln!(s, "vertices {}", mesh.vertices().len());
    for v in mesh.vertices() {
        let _ = writeln!(s, "{} {} {}", v.x, v.y, v.z);
    }
    let _ = writeln!(s, "faces {}", mesh.num_faces());
    for f in mesh.faces() {
        let _ = write!(s, "{}", f.vertices.len());
        for v in &f.vertices {
            let _ = write!(s, " {v}");
        }
        match f.tag {
            Some(t) => {
                let _ = writeln!(s, " {t}");
            }
            None => s.push_str(" -1\n"),
        }
    }
    let _ = writeln!(s, "cells {}", mesh.num_cells());
    for c in mesh.cells() {
        let _ = write!(s, "{}", c.faces.len());
        for r in &c.faces {
            let sign = if r.sign < 0.0 { "-" } else { "" };
            let _ = write!(s, " {sign}{}", r.face);
        }
        s.push('\n');
    }
    s
}

struct Lines<'a> {
    inner: std::iter::Enumerate<std::str::Lines<'a>>,
    last: usize,
}

impl<'a> Lines<'a> {
    fn next_tokens(&mut self) -> Result<(usize, Vec<&'a str>), MeshError> {
        for (i, line) in self.inner.by_ref() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            self.last = i + 1;
            return Ok((i + 1, line.split_whitespace().collect()));
        }
        Err(MeshError::Parse { line: self.last + 1, message: "unexpected end of file".into() })
    }

    fn section(&mut self, name: &str) -> Result<usize, MeshError> {
        let (line, toks) = self.next_tokens()?;
        match toks.as_slice() {
            [kw, n] if *kw == name => parse_num(n, line),
            _ => Err(MeshError::Parse { line, message: format!("expected '{name} <count>'") }),
        }
    }
}

fn parse_num<T: std::str::FromStr>(tok: &str, line: usize) -> Result<T, MeshError> {
    tok.parse()
        .map_err(|_| MeshError::Parse { line, message: format!("invalid number '{tok}'") })
}

/// Parses and validates a mesh in the text format.
pub fn mesh_from_str(text: &str) -> Result<PolyMesh, MeshError> {
    let mut lines = Lines { inner: text.lines().enumerate(), last: 0 };
    let (line, header) = lines.next_tokens()?;
    if header != ["wgmesh", "1"] {
        return Err(MeshError::Parse { line, message: "expected header 'wgmesh 1'".into() });
    }

    let nv = lines.section("vertices")?;
    let mut vertices = Vec::with_capacity(nv);
    for _ in 0..nv {
        let (line, toks) = lines.next_tokens()?;
        if toks.len() != 3 {
            return Err(MeshError::Parse { line, message: format!("expected 3 coordinates, found {}", toks.len()) });
        }
        vertices.push(Point::new(parse_num(toks[0], line)?, parse_num(toks[1], line)?, parse_num(toks[2], line)?));
    }

    let nf = lines.section("faces")?;
    let mut faces = Vec::with_capacity(nf);
    for _ in 0..nf {
        let (line, toks) = lines.next_tokens()?;
        let k: usize = parse_num(toks[0], line)?;
        if toks.len() != k + 2 {
            return Err(MeshError::Parse { line, message: format!("face declares {k} vertices but has {} fields", toks.len()) });
        }
        let verts = toks[1..=k].iter().map(|t| parse_num(t, line)).collect::<Result<Vec<usize>, _>>()?;
        let tag: i64 = parse_num(toks[k + 1], line)?;
        let tag = match tag {
            -1 => None,
            t if t >= 0 => Some(t as usize),
            t => return Err(MeshError::Parse { line, message: format!("invalid boundary tag {t}") }),
        };
        faces.push(FaceSpec { vertices: verts, tag });
    }

    let nc = lines.section("cells")?;
    let mut cells = Vec::with_capacity(nc);
    for _ in 0..nc {
        let (line, toks) = lines.next_tokens()?;
        let k: usize = parse_num(toks[0], line)?;
        if toks.len() != k + 1 {
            return Err(MeshError::Parse { line, message: format!("cell declares {k} faces but has {} fields", toks.len()) });
        }
        let refs = toks[1..]
            .iter()
            .map(|t| {
                let (sign, digits) = match t.strip_prefix('-') {
                    Some(rest) => (-1.0, rest),
                    None => (1.0, *t),
                };
                parse_num::<usize>(digits, line).map(|f| (f, sign))
            })
            .collect::<Result<Vec<_>, _>>()?;
        cells.push(refs);
    }

    let mesh = PolyMesh::new(vertices, faces, cells)?;
    let report = validate(&mesh);
    if !report.is_valid() {
        return Err(MeshError::Invalid(report.violations.iter().map(|v| v.to_string()).collect()));
    }
    Ok(mesh)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::build_cube_tet_mesh;

    const UNIT_TET: &str = "wgmesh 1
vertices 4
0 0 0
1 0 0
0 1 0
0 0 1
faces 4
3 0 2 1 0
3 0 1 3 0
3 0 3 2 0
3 1 2 3 0
cells 1
4 0 1 2 3
";

    #[test]
    fn unit_tet_file() {
        let m = mesh_from_str(UNIT_TET).unwrap();
        assert_eq!(m.num_cells(), 1);
        assert!((m.total_volume() - 1.0 / 6.0).abs() < 1e-15);
    }

    #[test]
    fn negative_zero_face_reference() {
        // Same tet with face 0 stored in the opposite orientation.
        let text = UNIT_TET.replace("3 0 2 1 0", "3 0 1 2 0").replace("4 0 1 2 3", "4 -0 1 2 3");
        let m = mesh_from_str(&text).unwrap();
        assert_eq!(m.cell(0).faces[0].sign, -1.0);
        assert!(mesh_to_string(&m).contains("4 -0 1 2 3"));
    }

    #[test]
    fn face_used_by_three_cells() {
        let text = UNIT_TET.replace("cells 1\n4 0 1 2 3\n", "cells 3\n4 0 1 2 3\n4 -0 1 2 3\n4 0 1 2 3\n");
        let err = mesh_from_str(&text).unwrap_err();
        assert!(err.to_string().contains("nonmanifold face"), "{err}");
    }

    #[test]
    fn parse_errors_carry_line_numbers() {
        let text = UNIT_TET.replace("0 1 0\n", "0 x 0\n");
        match mesh_from_str(&text).unwrap_err() {
            MeshError::Parse { line, .. } => assert_eq!(line, 5),
            e => panic!("unexpected {e}"),
        }
        assert!(matches!(mesh_from_str("wgmesh 2\n"), Err(MeshError::Parse { line: 1, .. })));
    }

    #[test]
    fn invalid_orientation_names_the_invariant() {
        let text = UNIT_TET.replace("4 0 1 2 3", "4 -0 -1 -2 -3");
        let err = mesh_from_str(&text).unwrap_err();
        assert!(err.to_string().contains("normal not outward"), "{err}");
    }

    #[test]
    fn round_trip_preserves_connectivity() {
        let m = build_cube_tet_mesh(2).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("cube.wgmesh");
        save_mesh(&m, &path).unwrap();
        let r = load_mesh(&path).unwrap();
        assert_eq!(m.vertices(), r.vertices());
        for (a, b) in m.faces().iter().zip(r.faces()) {
            assert_eq!((&a.vertices, a.tag, a.owner, a.neighbor), (&b.vertices, b.tag, b.owner, b.neighbor));
        }
        for (a, b) in m.cells().iter().zip(r.cells()) {
            assert_eq!(a.faces, b.faces);
        }
    }
}
