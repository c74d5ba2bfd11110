use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::mesh::TriangleMesh;
use super::{UnitVec3, Vec3};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SurfaceSample {
    pub point: Vec3,
    /// Outward unit normal of the source triangle.
    pub normal: UnitVec3,
    pub triangle: usize,
}

/// Area-weighted uniform surface samples.
pub fn sample_surface(mesh: &TriangleMesh, count: usize, seed: u64) -> Vec<SurfaceSample> {
    if count == 0 {
        return Vec::new();
    }
    let mut cumulative = Vec::with_capacity(mesh.num_triangles());
    let mut total = 0.0;
    for i in 0..mesh.num_triangles() {
        total += mesh.triangle_area(i);
        cumulative.push(total);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|_| {
            let u = rng.random::<f64>() * total;
            let ti = cumulative
                .partition_point(|&c| c <= u)
                .min(cumulative.len() - 1);
            let [a, b, c] = mesh.triangle(ti);
            let s = rng.random::<f64>().sqrt();
            let r2 = rng.random::<f64>();
            SurfaceSample {
                point: a * (1.0 - s) + b * (s * (1.0 - r2)) + c * (s * r2),
                normal: mesh.normals()[ti],
                triangle: ti,
            }
        })
        .collect()
}
