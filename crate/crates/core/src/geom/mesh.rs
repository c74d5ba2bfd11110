use std::collections::HashMap;

use nalgebra::{Unit, Vector3};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::bvh::Aabb;
use super::{Pose, UnitVec3, Vec3};

#[derive(Debug, Error)]
pub enum MeshError {
    #[error("{format} parse error at {location}: {message}")]
    Parse {
        format: &'static str,
        location: String,
        message: String,
    },
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("mesh has no non-degenerate triangles")]
    Empty,
    #[error("triangle {triangle} references vertex {index} but the mesh has {vertex_count} vertices")]
    IndexOutOfRange {
        triangle: usize,
        index: u32,
        vertex_count: usize,
    },
    #[error("non-finite vertex coordinate at vertex {0}")]
    NonFinite(usize),
    #[error("closed mesh has negative signed volume {0:.3e} m^3; triangle winding is inverted (flip normals)")]
    NegativeVolume(f64),
}

/// Indexed triangle mesh with per-triangle outward unit normals.
///
/// Construction drops zero-area triangles and records whether every edge is
/// shared by exactly two triangles.
#[derive(Debug, Clone, PartialEq)]
pub struct TriangleMesh {
    vertices: Vec<Vec3>,
    triangles: Vec<[u32; 3]>,
    normals: Vec<UnitVec3>,
    watertight: bool,
}

impl TriangleMesh {
    /// Builds a mesh, returning it together with the number of degenerate
    /// triangles that were dropped.
    pub fn new(vertices: Vec<Vec3>, triangles: Vec<[u32; 3]>) -> Result<(Self, usize), MeshError> {
        if let Some(i) = vertices
            .iter()
            .position(|v| !(v.x.is_finite() && v.y.is_finite() && v.z.is_finite()))
        {
            return Err(MeshError::NonFinite(i));
        }
        let n = vertices.len();
        let mut kept = Vec::with_capacity(triangles.len());
        let mut normals = Vec::with_capacity(triangles.len());
        let mut dropped = 0;
        for (ti, t) in triangles.iter().enumerate() {
            for &idx in t {
                if idx as usize >= n {
                    return Err(MeshError::IndexOutOfRange {
                        triangle: ti,
                        index: idx,
                        vertex_count: n,
                    });
                }
            }
            let [a, b, c] = t.map(|i| vertices[i as usize]);
            let cross = (b - a).cross(&(c - a));
            let longest = (b - a)
                .norm_squared()
                .max((c - b).norm_squared())
                .max((a - c).norm_squared());
            if t[0] == t[1] || t[1] == t[2] || t[0] == t[2] || cross.norm() <= 1e-12 * longest {
                dropped += 1;
                continue;
            }
            kept.push(*t);
            normals.push(Unit::new_normalize(cross));
        }
        if kept.is_empty() {
            return Err(MeshError::Empty);
        }
        let watertight = edges_manifold(&kept);
        Ok((
            TriangleMesh {
                vertices,
                triangles: kept,
                normals,
                watertight,
            },
            dropped,
        ))
    }

    pub fn vertices(&self) -> &[Vec3] {
        &self.vertices
    }

    pub fn triangles(&self) -> &[[u32; 3]] {
        &self.triangles
    }

    pub fn normals(&self) -> &[UnitVec3] {
        &self.normals
    }

    pub fn num_triangles(&self) -> usize {
        self.triangles.len()
    }

    /// Every undirected edge is shared by exactly two triangles.
    pub fn is_watertight(&self) -> bool {
        self.watertight
    }

    pub fn triangle(&self, i: usize) -> [Vec3; 3] {
        self.triangles[i].map(|v| self.vertices[v as usize])
    }

    pub fn triangle_area(&self, i: usize) -> f64 {
        super::triangle::triangle_area(&self.triangle(i))
    }

    pub fn surface_area(&self) -> f64 {
        (0..self.triangles.len()).map(|i| self.triangle_area(i)).sum()
    }

    pub fn aabb(&self) -> Aabb {
        Aabb::from_points(self.vertices.iter())
    }

    /// Largest distance from `center` to any vertex.
    pub fn bounding_radius(&self, center: &Vec3) -> f64 {
        self.vertices
            .iter()
            .map(|v| (v - center).norm())
            .fold(0.0, f64::max)
    }

    /// Unique undirected edges as sorted vertex-index pairs, in first-seen order.
    pub fn edges(&self) -> Vec<[u32; 2]> {
        let mut seen = HashMap::new();
        let mut out = Vec::new();
        for t in &self.triangles {
            for k in 0..3 {
                let (a, b) = (t[k], t[(k + 1) % 3]);
                let e = [a.min(b), a.max(b)];
                if seen.insert(e, ()).is_none() {
                    out.push(e);
                }
            }
        }
        out
    }
}

fn edges_manifold(triangles: &[[u32; 3]]) -> bool {
    let mut count: HashMap<(u32, u32), u32> = HashMap::with_capacity(triangles.len() * 2);
    for t in triangles {
        for k in 0..3 {
            let (a, b) = (t[k], t[(k + 1) % 3]);
            *count.entry((a.min(b), a.max(b))).or_default() += 1;
        }
    }
    count.values().all(|&c| c == 2)
}

/// Rigidly transforms vertices and normals. The identity pose returns an
/// exact copy.
pub fn transform_mesh(mesh: &TriangleMesh, pose: &Pose) -> TriangleMesh {
    if pose.is_identity() {
        return mesh.clone();
    }
    TriangleMesh {
        vertices: mesh.vertices.iter().map(|v| pose.transform_point(v)).collect(),
        triangles: mesh.triangles.clone(),
        normals: mesh.normals.iter().map(|n| pose.transform_unit(n)).collect(),
        watertight: mesh.watertight,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MassProperties {
    /// kg
    pub mass: f64,
    pub centroid: Vec3,
    /// Signed enclosed volume, m^3. Meaningless when `watertight` is false.
    pub volume: f64,
    /// False when the mesh is open and the centroid fell back to the
    /// area-weighted surface centroid.
    pub watertight: bool,
}

/// Mass and centroid by divergence-theorem accumulation over origin-apex
/// tetrahedra. Open meshes get the surface-area centroid and a cleared
/// `watertight` flag.
pub fn mass_properties(mesh: &TriangleMesh, density: f64) -> Result<MassProperties, MeshError> {
    let mut volume = 0.0;
    let mut moment = Vector3::zeros();
    for i in 0..mesh.num_triangles() {
        let [a, b, c] = mesh.triangle(i);
        let v = a.dot(&b.cross(&c)) / 6.0;
        volume += v;
        moment += (a + b + c) * (v / 4.0);
    }
    if mesh.is_watertight() && volume > 0.0 {
        return Ok(MassProperties {
            mass: density * volume,
            centroid: moment / volume,
            volume,
            watertight: true,
        });
    }
    if mesh.is_watertight() {
        return Err(MeshError::NegativeVolume(volume));
    }
    log::warn!("mesh is not watertight; using surface-area centroid");
    let mut area = 0.0;
    let mut weighted = Vector3::zeros();
    for i in 0..mesh.num_triangles() {
        let t = mesh.triangle(i);
        let a = super::triangle::triangle_area(&t);
        area += a;
        weighted += (t[0] + t[1] + t[2]) * (a / 3.0);
    }
    Ok(MassProperties {
        mass: density * volume.abs(),
        centroid: weighted / area,
        volume,
        watertight: false,
    })
}
