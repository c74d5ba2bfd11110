//! Procedural closed meshes used by tests, the default bin and the built-in
//! object library.

use std::collections::HashMap;

use nalgebra::Vector3;

use super::mesh::TriangleMesh;
use super::Vec3;

/// Axis-aligned box spanning `min..max`.
pub fn box_from_corners(min: Vec3, max: Vec3) -> TriangleMesh {
    let vertices: Vec<Vec3> = (0..8)
        .map(|i| {
            Vector3::new(
                if i & 1 == 0 { min.x } else { max.x },
                if i & 2 == 0 { min.y } else { max.y },
                if i & 4 == 0 { min.z } else { max.z },
            )
        })
        .collect();
    let triangles = vec![
        [0, 4, 6],
        [0, 6, 2],
        [1, 3, 7],
        [1, 7, 5],
        [0, 1, 5],
        [0, 5, 4],
        [2, 6, 7],
        [2, 7, 3],
        [0, 2, 3],
        [0, 3, 1],
        [4, 5, 7],
        [4, 7, 6],
    ];
    TriangleMesh::new(vertices, triangles).expect("box is non-degenerate").0
}

/// Box with full edge lengths `extents`, centered at the origin.
pub fn cuboid(extents: Vec3) -> TriangleMesh {
    box_from_corners(-extents / 2.0, extents / 2.0)
}

/// Subdivided icosahedron projected onto a sphere of `radius` at the origin.
pub fn icosphere(radius: f64, subdivisions: u32) -> TriangleMesh {
    let t = (1.0 + 5f64.sqrt()) / 2.0;
    let mut verts: Vec<Vec3> = [
        [-1.0, t, 0.0],
        [1.0, t, 0.0],
        [-1.0, -t, 0.0],
        [1.0, -t, 0.0],
        [0.0, -1.0, t],
        [0.0, 1.0, t],
        [0.0, -1.0, -t],
        [0.0, 1.0, -t],
        [t, 0.0, -1.0],
        [t, 0.0, 1.0],
        [-t, 0.0, -1.0],
        [-t, 0.0, 1.0],
    ]
    .iter()
    .map(|v| Vector3::new(v[0], v[1], v[2]).normalize())
    .collect();
    let mut faces: Vec<[u32; 3]> = vec![
        [0, 11, 5],
        [0, 5, 1],
        [0, 1, 7],
        [0, 7, 10],
        [0, 10, 11],
        [1, 5, 9],
        [5, 11, 4],
        [11, 10, 2],
        [10, 7, 6],
        [7, 1, 8],
        [3, 9, 4],
        [3, 4, 2],
        [3, 2, 6],
        [3, 6, 8],
        [3, 8, 9],
        [4, 9, 5],
        [2, 4, 11],
        [6, 2, 10],
        [8, 6, 7],
        [9, 8, 1],
    ];
    for _ in 0..subdivisions {
        let mut cache: HashMap<(u32, u32), u32> = HashMap::new();
        let mut mid = |a: u32, b: u32, verts: &mut Vec<Vec3>| -> u32 {
            *cache.entry((a.min(b), a.max(b))).or_insert_with(|| {
                verts.push(((verts[a as usize] + verts[b as usize]) / 2.0).normalize());
                verts.len() as u32 - 1
            })
        };
        let mut next = Vec::with_capacity(faces.len() * 4);
        for [a, b, c] in faces {
            let ab = mid(a, b, &mut verts);
            let bc = mid(b, c, &mut verts);
            let ca = mid(c, a, &mut verts);
            next.extend_from_slice(&[[a, ab, ca], [b, bc, ab], [c, ca, bc], [ab, bc, ca]]);
        }
        faces = next;
    }
    let verts = verts.into_iter().map(|v| v * radius).collect();
    convex_closed(verts, faces)
}

/// Closed cylinder about +z, centered at the origin.
pub fn cylinder(radius: f64, height: f64, segments: u32) -> TriangleMesh {
    let segments = segments.max(3);
    let h = height / 2.0;
    let mut verts = Vec::with_capacity(2 * segments as usize + 2);
    for i in 0..segments {
        let a = std::f64::consts::TAU * i as f64 / segments as f64;
        verts.push(Vector3::new(radius * a.cos(), radius * a.sin(), -h));
        verts.push(Vector3::new(radius * a.cos(), radius * a.sin(), h));
    }
    let bottom = verts.len() as u32;
    verts.push(Vector3::new(0.0, 0.0, -h));
    verts.push(Vector3::new(0.0, 0.0, h));
    let top = bottom + 1;
    let mut faces = Vec::new();
    for i in 0..segments {
        let j = (i + 1) % segments;
        let (b0, t0, b1, t1) = (2 * i, 2 * i + 1, 2 * j, 2 * j + 1);
        faces.push([b0, b1, t1]);
        faces.push([b0, t1, t0]);
        faces.push([bottom, b1, b0]);
        faces.push([top, t0, t1]);
    }
    convex_closed(verts, faces)
}

/// Builds a mesh of a convex solid containing the origin, orienting every
/// face outward.
fn convex_closed(verts: Vec<Vec3>, mut faces: Vec<[u32; 3]>) -> TriangleMesh {
    for f in faces.iter_mut() {
        let [a, b, c] = f.map(|i| verts[i as usize]);
        if (b - a).cross(&(c - a)).dot(&(a + b + c)) < 0.0 {
            f.swap(1, 2);
        }
    }
    TriangleMesh::new(verts, faces).expect("primitive is non-degenerate").0
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geom::mass_properties;

    #[test]
    fn primitives_are_closed_and_outward() {
        for m in [
            cuboid(Vector3::new(0.1, 0.2, 0.3)),
            icosphere(0.02, 2),
            cylinder(0.01, 0.05, 16),
        ] {
            assert!(m.is_watertight());
            assert!(mass_properties(&m, 1.0).unwrap().volume > 0.0);
        }
    }

    #[test]
    fn cylinder_volume() {
        let m = cylinder(1.0, 2.0, 256);
        let v = mass_properties(&m, 1.0).unwrap().volume;
        assert!((v - 2.0 * std::f64::consts::PI).abs() / v < 1e-3);
    }
}
