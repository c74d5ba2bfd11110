//! OBJ, binary STL and binary PLY mesh loaders.

use std::collections::HashMap;
use std::path::Path;

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use super::mesh::{MeshError, TriangleMesh};
use super::Vec3;
use crate::ply::PlyFile;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MeshFormat {
    Obj,
    Stl,
    Ply,
}

impl MeshFormat {
    pub fn from_path(path: &Path) -> Option<Self> {
        match path.extension()?.to_str()?.to_ascii_lowercase().as_str() {
            "obj" => Some(Self::Obj),
            "stl" => Some(Self::Stl),
            "ply" => Some(Self::Ply),
            _ => None,
        }
    }
}

#[derive(Debug, Clone)]
pub struct LoadedMesh {
    pub mesh: TriangleMesh,
    /// Degenerate triangles dropped during construction.
    pub dropped: usize,
}

/// Loads a mesh and multiplies every coordinate by `scale`.
pub fn load_mesh(path: &Path, format: MeshFormat, scale: f64) -> Result<LoadedMesh, MeshError> {
    let bytes = std::fs::read(path).map_err(|source| MeshError::Io {
        path: path.display().to_string(),
        source,
    })?;
    let loaded = parse_mesh(&bytes, format, scale)?;
    if loaded.dropped > 0 {
        log::warn!("{}: dropped {} degenerate triangles", path.display(), loaded.dropped);
    }
    Ok(loaded)
}

pub fn parse_mesh(bytes: &[u8], format: MeshFormat, scale: f64) -> Result<LoadedMesh, MeshError> {
    let (vertices, triangles) = match format {
        MeshFormat::Obj => parse_obj(bytes)?,
        MeshFormat::Stl => parse_stl(bytes)?,
        MeshFormat::Ply => parse_ply(bytes)?,
    };
    if triangles.is_empty() {
        return Err(MeshError::Empty);
    }
    let vertices = vertices.into_iter().map(|v| v * scale).collect();
    let (mesh, dropped) = TriangleMesh::new(vertices, triangles)?;
    Ok(LoadedMesh { mesh, dropped })
}

type Raw = (Vec<Vec3>, Vec<[u32; 3]>);

fn obj_err(line: usize, message: impl Into<String>) -> MeshError {
    MeshError::Parse {
        format: "OBJ",
        location: format!("line {line}"),
        message: message.into(),
    }
}

fn parse_obj(bytes: &[u8]) -> Result<Raw, MeshError> {
    let text = std::str::from_utf8(bytes).map_err(|e| obj_err(0, format!("invalid UTF-8: {e}")))?;
    let mut vertices = Vec::new();
    let mut triangles = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let ln = i + 1;
        let mut tok = line.split_whitespace();
        match tok.next() {
            Some("v") => {
                let c: Vec<f64> = tok
                    .take(3)
                    .map(|t| t.parse::<f64>())
                    .collect::<Result<_, _>>()
                    .map_err(|e| obj_err(ln, format!("bad vertex coordinate: {e}")))?;
                if c.len() != 3 {
                    return Err(obj_err(ln, "vertex needs 3 coordinates"));
                }
                vertices.push(Vector3::new(c[0], c[1], c[2]));
            }
            Some("f") => {
                let mut idx = Vec::new();
                for t in tok {
                    let head = t.split('/').next().unwrap_or("");
                    let k: i64 = head
                        .parse()
                        .map_err(|_| obj_err(ln, format!("bad face index '{t}'")))?;
                    let n = vertices.len() as i64;
                    let abs = if k > 0 { k - 1 } else { n + k };
                    if k == 0 || abs < 0 || abs >= n {
                        return Err(obj_err(ln, format!("face index {k} out of range ({n} vertices)")));
                    }
                    idx.push(abs as u32);
                }
                if idx.len() < 3 {
                    return Err(obj_err(ln, "face needs at least 3 vertices"));
                }
                for j in 1..idx.len() - 1 {
                    triangles.push([idx[0], idx[j], idx[j + 1]]);
                }
            }
            _ => {}
        }
    }
    Ok((vertices, triangles))
}

fn parse_stl(bytes: &[u8]) -> Result<Raw, MeshError> {
    let stl_err = |offset: usize, message: String| MeshError::Parse {
        format: "STL",
        location: format!("byte {offset}"),
        message,
    };
    if bytes.len() < 84 {
        return Err(stl_err(bytes.len(), "truncated header (need 84 bytes)".into()));
    }
    let count = u32::from_le_bytes(bytes[80..84].try_into().unwrap()) as usize;
    let need = 84 + 50 * count;
    if bytes.len() < need {
        let offset = 84 + 50 * ((bytes.len() - 84) / 50);
        return Err(stl_err(
            offset,
            format!("truncated: header declares {count} triangles ({need} bytes), file has {}", bytes.len()),
        ));
    }
    let mut weld: HashMap<[u32; 3], u32> = HashMap::new();
    let mut vertices = Vec::new();
    let mut triangles = Vec::with_capacity(count);
    for t in 0..count {
        let base = 84 + 50 * t + 12;
        let mut tri = [0u32; 3];
        for (k, slot) in tri.iter_mut().enumerate() {
            let o = base + 12 * k;
            let f: [f32; 3] = std::array::from_fn(|j| f32::from_le_bytes(bytes[o + 4 * j..o + 4 * j + 4].try_into().unwrap()));
            let key = f.map(|x| if x == 0.0 { 0 } else { x.to_bits() });
            *slot = *weld.entry(key).or_insert_with(|| {
                vertices.push(Vector3::new(f[0] as f64, f[1] as f64, f[2] as f64));
                vertices.len() as u32 - 1
            });
        }
        triangles.push(tri);
    }
    Ok((vertices, triangles))
}

/// Binary PLY with double-precision vertices, readable by [`parse_mesh`].
pub fn mesh_to_ply(mesh: &TriangleMesh) -> Vec<u8> {
    use crate::ply::{Element, ScalarType};
    let v = mesh.vertices();
    let col = |k: usize| v.iter().map(|p| p[k]).collect();
    let vert = Element::new("vertex", v.len())
        .scalar("x", ScalarType::Double, col(0))
        .scalar("y", ScalarType::Double, col(1))
        .scalar("z", ScalarType::Double, col(2));
    let faces = mesh
        .triangles()
        .iter()
        .map(|t| t.iter().map(|&i| i as f64).collect())
        .collect();
    let face = Element::new("face", mesh.num_triangles()).list("vertex_indices", ScalarType::UChar, ScalarType::Int, faces);
    PlyFile {
        comments: Vec::new(),
        elements: vec![vert, face],
    }
    .to_bytes()
}

fn parse_ply(bytes: &[u8]) -> Result<Raw, MeshError> {
    let ply_err = |location: String, message: String| MeshError::Parse {
        format: "PLY",
        location,
        message,
    };
    let file = PlyFile::from_bytes(bytes).map_err(|e| ply_err(format!("byte {}", e.offset), e.message))?;
    let vert = file
        .element("vertex")
        .ok_or_else(|| ply_err("header".into(), "no vertex element".into()))?;
    let (Some(x), Some(y), Some(z)) = (vert.values("x"), vert.values("y"), vert.values("z")) else {
        return Err(ply_err("header".into(), "vertex element lacks x/y/z".into()));
    };
    let vertices = (0..vert.count).map(|i| Vector3::new(x[i], y[i], z[i])).collect();
    let mut triangles = Vec::new();
    if let Some(face) = file.element("face") {
        let col = face
            .column("vertex_indices")
            .or_else(|| face.column("vertex_index"))
            .ok_or_else(|| ply_err("header".into(), "face element lacks vertex_indices".into()))?;
        let crate::ply::Column::List { data, .. } = col else {
            return Err(ply_err("header".into(), "vertex_indices is not a list".into()));
        };
        for (fi, f) in data.iter().enumerate() {
            if f.len() < 3 || f.iter().any(|&i| i < 0.0) {
                return Err(ply_err(format!("face {fi}"), "invalid face".into()));
            }
            for j in 1..f.len() - 1 {
                triangles.push([f[0] as u32, f[j] as u32, f[j + 1] as u32]);
            }
        }
    }
    Ok((vertices, triangles))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geom::primitives;
    use crate::ply::{Element, ScalarType};

    const CUBE_OBJ: &str = "v 0 0 0\nv 1 0 0\nv 0 1 0\nv 1 1 0\nv 0 0 1\nv 1 0 1\nv 0 1 1\nv 1 1 1\n\
f 1 5 7\nf 1 7 3\nf 2 4 8\nf 2 8 6\nf 1 2 6\nf 1 6 5\nf 3 7 8\nf 3 8 4\nf 1 3 4\nf 1 4 2\nf 5 6 8\nf 5 8 7\n";

    fn stl_bytes(mesh: &TriangleMesh) -> Vec<u8> {
        let mut b = vec![0u8; 80];
        b.extend_from_slice(&(mesh.num_triangles() as u32).to_le_bytes());
        for i in 0..mesh.num_triangles() {
            let n = mesh.normals()[i];
            for c in [n.x, n.y, n.z] {
                b.extend_from_slice(&(c as f32).to_le_bytes());
            }
            for v in mesh.triangle(i) {
                for c in [v.x, v.y, v.z] {
                    b.extend_from_slice(&(c as f32).to_le_bytes());
                }
            }
            b.extend_from_slice(&[0, 0]);
        }
        b
    }

    #[test]
    fn obj_cube() {
        let m = parse_mesh(CUBE_OBJ.as_bytes(), MeshFormat::Obj, 1.0).unwrap();
        assert_eq!((m.mesh.num_triangles(), m.dropped), (12, 0));
        assert!(m.mesh.is_watertight());
    }

    #[test]
    fn obj_degenerate_dropped_and_errors_name_line() {
        let text = format!("{CUBE_OBJ}f 1 1 2\n");
        let m = parse_mesh(text.as_bytes(), MeshFormat::Obj, 1.0).unwrap();
        assert_eq!((m.mesh.num_triangles(), m.dropped), (12, 1));
        let bad = "v 0 0 0\nv 1 0 0\nf 1 2 9\n";
        let e = parse_mesh(bad.as_bytes(), MeshFormat::Obj, 1.0).unwrap_err();
        assert!(e.to_string().contains("line 3"), "{e}");
        assert!(matches!(
            parse_mesh(b"v 0 0 0\n", MeshFormat::Obj, 1.0),
            Err(MeshError::Empty)
        ));
    }

    #[test]
    fn obj_negative_indices_and_quads() {
        let text = "v 0 0 0\nv 1 0 0\nv 1 1 0\nv 0 1 0\nf -4 -3 -2 -1\n";
        let m = parse_mesh(text.as_bytes(), MeshFormat::Obj, 2.0).unwrap();
        assert_eq!(m.mesh.num_triangles(), 2);
        assert_eq!(m.mesh.vertices()[2], Vector3::new(2.0, 2.0, 0.0));
    }

    #[test]
    fn stl_round_trip_and_truncation() {
        let cube = primitives::cuboid(Vector3::new(1.0, 1.0, 1.0));
        let b = stl_bytes(&cube);
        let m = parse_mesh(&b, MeshFormat::Stl, 1.0).unwrap();
        assert_eq!(m.mesh.num_triangles(), 12);
        assert_eq!(m.mesh.vertices().len(), 8);
        assert!(m.mesh.is_watertight());
        let e = parse_mesh(&b[..84 + 50 * 5 + 7], MeshFormat::Stl, 1.0).unwrap_err();
        assert!(e.to_string().contains(&format!("byte {}", 84 + 50 * 5)), "{e}");
    }

    #[test]
    fn ply_mesh() {
        let cube = primitives::cuboid(Vector3::new(1.0, 1.0, 1.0));
        let v = cube.vertices();
        let file = PlyFile {
            comments: vec![],
            elements: vec![
                Element::new("vertex", v.len())
                    .scalar("x", ScalarType::Float, v.iter().map(|p| p.x).collect())
                    .scalar("y", ScalarType::Float, v.iter().map(|p| p.y).collect())
                    .scalar("z", ScalarType::Float, v.iter().map(|p| p.z).collect()),
                Element::new("face", cube.num_triangles()).list(
                    "vertex_indices",
                    ScalarType::UChar,
                    ScalarType::Int,
                    cube.triangles()
                        .iter()
                        .map(|t| t.iter().map(|&i| i as f64).collect())
                        .collect(),
                ),
            ],
        };
        let m = parse_mesh(&file.to_bytes(), MeshFormat::Ply, 1.0).unwrap();
        assert_eq!(m.mesh, cube);
    }

    #[test]
    fn mesh_writer_round_trip() {
        let s = primitives::icosphere(0.03, 2);
        let m = parse_mesh(&mesh_to_ply(&s), MeshFormat::Ply, 1.0).unwrap();
        assert_eq!(m.mesh, s);
    }
}
