//! Convex-hull facets of a mesh, grouped into planar faces.

use nalgebra::{Unit, Vector3};
use parry3d_f64::math::Vector3 as PVec;
use parry3d_f64::transformation::try_convex_hull;

use super::mesh::TriangleMesh;
use super::{UnitVec3, Vec3};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HullFace {
    /// Outward unit normal of the planar face.
    pub normal: UnitVec3,
    pub area: f64,
}

/// Planar faces of the convex hull of the mesh vertices, sorted by area
/// descending (ties by normal components). Coplanar hull triangles are merged
/// when their normals agree within `1e-6`.
pub fn hull_faces(mesh: &TriangleMesh) -> Vec<HullFace> {
    let pts: Vec<PVec> = mesh
        .vertices()
        .iter()
        .map(|v| PVec::new(v.x, v.y, v.z))
        .collect();
    let Ok((hv, hi)) = try_convex_hull(&pts) else {
        return Vec::new();
    };
    let hv: Vec<Vec3> = hv.iter().map(|p| Vector3::new(p.x, p.y, p.z)).collect();
    let center = hv.iter().sum::<Vec3>() / hv.len().max(1) as f64;
    let mut faces: Vec<HullFace> = Vec::new();
    for t in hi {
        let [a, b, c] = t.map(|i| hv[i as usize]);
        let cross = (b - a).cross(&(c - a));
        let area = cross.norm() / 2.0;
        if area <= 0.0 {
            continue;
        }
        let mut n = cross / (2.0 * area);
        if n.dot(&(a - center)) < 0.0 {
            n = -n;
        }
        match faces.iter_mut().find(|f| (f.normal.into_inner() - n).norm() < 1e-6) {
            Some(f) => f.area += area,
            None => faces.push(HullFace {
                normal: Unit::new_normalize(n),
                area,
            }),
        }
    }
    faces.sort_by(|x, y| {
        y.area.total_cmp(&x.area).then_with(|| {
            let (p, q) = (x.normal, y.normal);
            p.x.total_cmp(&q.x)
                .then(p.y.total_cmp(&q.y))
                .then(p.z.total_cmp(&q.z))
        })
    });
    faces
}
