//! Gripper-versus-mesh collision with oriented boxes and the separating-axis
//! triangle test.

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geom::{Aabb, Bvh, Pose, Vec3};
use crate::grasp::GripperModel;
use crate::scene::SceneGeometry;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OrientedBox {
    pub center: Vec3,
    pub half_extents: Vec3,
    /// Columns are the box axes in world coordinates.
    pub rotation: Matrix3<f64>,
}

impl OrientedBox {
    pub fn axis_aligned(center: Vec3, half_extents: Vec3) -> Self {
        OrientedBox {
            center,
            half_extents,
            rotation: Matrix3::identity(),
        }
    }

    pub fn transformed(&self, pose: &Pose) -> Self {
        OrientedBox {
            center: pose.transform_point(&self.center),
            half_extents: self.half_extents,
            rotation: pose.rotation * self.rotation,
        }
    }

    pub fn inflated(&self, margin: f64) -> Self {
        OrientedBox {
            half_extents: self.half_extents.add_scalar(margin),
            ..*self
        }
    }

    pub fn volume(&self) -> f64 {
        8.0 * self.half_extents.product()
    }

    pub fn corners(&self) -> [Vec3; 8] {
        std::array::from_fn(|i| {
            let s = Vector3::new(
                if i & 1 == 0 { -1.0 } else { 1.0 },
                if i & 2 == 0 { -1.0 } else { 1.0 },
                if i & 4 == 0 { -1.0 } else { 1.0 },
            );
            self.center + self.rotation * self.half_extents.component_mul(&s)
        })
    }

    pub fn aabb(&self) -> Aabb {
        let ext = self.rotation.abs() * self.half_extents;
        Aabb {
            min: self.center - ext,
            max: self.center + ext,
        }
    }

    pub fn contains(&self, p: &Vec3) -> bool {
        let local = self.rotation.transpose() * (p - self.center);
        (0..3).all(|a| local[a].abs() <= self.half_extents[a])
    }

    /// Separating-axis test; touching counts as intersecting.
    pub fn intersects_triangle(&self, tri: &[Vec3; 3]) -> bool {
        let rt = self.rotation.transpose();
        let v = tri.map(|p| rt * (p - self.center));
        triangle_aabb_overlap(&v, &self.half_extents)
    }
}

/// Triangle versus origin-centered box with half extents `h` (13 axes).
fn triangle_aabb_overlap(v: &[Vec3; 3], h: &Vec3) -> bool {
    let separated = |axis: &Vec3| -> bool {
        let p = [axis.dot(&v[0]), axis.dot(&v[1]), axis.dot(&v[2])];
        let r = h.x * axis.x.abs() + h.y * axis.y.abs() + h.z * axis.z.abs();
        let lo = p[0].min(p[1]).min(p[2]);
        let hi = p[0].max(p[1]).max(p[2]);
        lo > r || hi < -r
    };
    for a in 0..3 {
        let lo = v[0][a].min(v[1][a]).min(v[2][a]);
        let hi = v[0][a].max(v[1][a]).max(v[2][a]);
        if lo > h[a] || hi < -h[a] {
            return false;
        }
    }
    let e = [v[1] - v[0], v[2] - v[1], v[0] - v[2]];
    if separated(&e[0].cross(&e[1])) {
        return false;
    }
    let basis = [Vector3::x(), Vector3::y(), Vector3::z()];
    for edge in &e {
        for b in &basis {
            if separated(&b.cross(edge)) {
                return false;
            }
        }
    }
    true
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GripperBoxes {
    pub fingers: [OrientedBox; 2],
    pub base: OrientedBox,
    /// Region between the finger inner faces.
    pub closing: OrientedBox,
}

impl GripperBoxes {
    /// Fingers and base, the solid parts of the gripper.
    pub fn solid(&self) -> [OrientedBox; 3] {
        [self.fingers[0], self.fingers[1], self.base]
    }
}

/// Gripper volumes for opening `width` in the frame of
/// [`grasp_frame`](crate::grasp::grasp_frame): x = approach from the bottom
/// center, y = closing, z = orthogonal.
pub fn gripper_boxes(gripper: &GripperModel, frame: &Pose, width: f64) -> GripperBoxes {
    let fd = gripper.finger_depth;
    let th = gripper.finger_thickness;
    let fh = gripper.finger_height;
    let finger = |side: f64| {
        OrientedBox::axis_aligned(
            Vector3::new(fd / 2.0, side * (width / 2.0 + th / 2.0), 0.0),
            Vector3::new(fd / 2.0, th / 2.0, fh / 2.0),
        )
        .transformed(frame)
    };
    let base = OrientedBox::axis_aligned(
        Vector3::new(-gripper.base_depth / 2.0, 0.0, 0.0),
        Vector3::new(gripper.base_depth / 2.0, gripper.base_width / 2.0, gripper.base_height / 2.0),
    )
    .transformed(frame);
    let closing = OrientedBox::axis_aligned(
        Vector3::new(fd / 2.0, 0.0, 0.0),
        Vector3::new(fd / 2.0, width / 2.0, fh / 2.0),
    )
    .transformed(frame);
    GripperBoxes {
        fingers: [finger(-1.0), finger(1.0)],
        base,
        closing,
    }
}

/// Whether any box, inflated by `margin`, touches any triangle of the mesh.
pub fn check_collision_object(boxes: &[OrientedBox], bvh: &Bvh, margin: f64) -> bool {
    boxes.iter().any(|b| box_hits_mesh(&b.inflated(margin), bvh))
}

/// A box collides with a mesh when it touches a triangle or, for closed
/// meshes, lies entirely inside the solid.
fn box_hits_mesh(b: &OrientedBox, bvh: &Bvh) -> bool {
    let query = b.aabb();
    if !query.overlaps(&bvh.aabb()) {
        return false;
    }
    let mut hit = false;
    // query_aabb has no early exit; the flag short-circuits the SAT work.
    bvh.query_aabb(&query, |ti| {
        if !hit && b.intersects_triangle(bvh.triangle(ti)) {
            hit = true;
        }
    });
    hit || (bvh.is_closed() && bvh.contains_point(&b.center))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CollisionReport {
    pub collided: bool,
    /// Colliding instance indices, ascending.
    pub colliding: Vec<usize>,
    pub bin_hit: bool,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum CollisionError {
    #[error("target instance {target} out of range ({count} instances)")]
    UnknownTarget { target: usize, count: usize },
}

/// Tests the gripper against every instance and the bin. The closing region
/// is checked against everything except the target instance.
pub fn check_collision_scene(boxes: &GripperBoxes, scene: &SceneGeometry, target: usize, margin: f64) -> Result<CollisionReport, CollisionError> {
    let count = scene.instances.len();
    if target >= count {
        return Err(CollisionError::UnknownTarget { target, count });
    }
    let solid = boxes.solid();
    let all = [solid[0], solid[1], solid[2], boxes.closing];
    let colliding: Vec<usize> = (0..count)
        .filter(|&i| {
            let set: &[OrientedBox] = if i == target { &solid } else { &all };
            check_collision_object(set, &scene.instances[i], margin)
        })
        .collect();
    let bin_hit = check_collision_object(&all, &scene.bin, margin);
    Ok(CollisionReport {
        collided: bin_hit || !colliding.is_empty(),
        colliding,
        bin_hit,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geom::{primitives, random_rotation};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn brute(boxes: &[OrientedBox], bvh: &Bvh, margin: f64) -> bool {
        boxes.iter().any(|b| {
            let b = b.inflated(margin);
            (0..bvh.num_triangles()).any(|t| b.intersects_triangle(bvh.triangle(t))) || bvh.contains_point(&b.center)
        })
    }

    #[test]
    fn identity_frame_geometry() {
        let g = GripperModel::default();
        let b = gripper_boxes(&g, &Pose::identity(), 0.04);
        assert!((b.fingers[0].center.y + 0.025).abs() < 1e-15);
        assert!((b.fingers[1].center.y - 0.025).abs() < 1e-15);
        let wide = gripper_boxes(&g, &Pose::identity(), 0.02);
        assert_eq!(wide.fingers[0].volume(), b.fingers[0].volume());
        let inner = |bx: &GripperBoxes| bx.fingers[1].center.y - bx.fingers[1].half_extents.y;
        assert!((inner(&b) - 0.02).abs() < 1e-15 && (inner(&wide) - 0.01).abs() < 1e-15);
    }

    #[test]
    fn random_frame_is_rigid_copy() {
        let g = GripperModel::default();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let local = gripper_boxes(&g, &Pose::identity(), 0.03);
        for _ in 0..100 {
            let f = Pose::new(random_rotation(&mut rng), Vector3::new(rng.random(), rng.random(), rng.random()));
            let world = gripper_boxes(&g, &f, 0.03);
            for (a, b) in local.solid().iter().zip(world.solid().iter()) {
                let ca = a.corners().map(|c| f.transform_point(&c));
                for (p, q) in ca.iter().zip(b.corners().iter()) {
                    assert!((p - q).norm() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn outside_and_inside_cases() {
        let cube = Bvh::build(&primitives::cuboid(Vector3::new(0.1, 0.1, 0.1)));
        let far = OrientedBox::axis_aligned(Vector3::new(1.0, 0.0, 0.0), Vector3::new(0.01, 0.01, 0.01));
        assert!(!check_collision_object(&[far], &cube, 0.001));
        let inside = OrientedBox::axis_aligned(Vector3::zeros(), Vector3::new(0.02, 0.005, 0.01));
        assert!(check_collision_object(&[inside], &cube, 0.001));
        let straddle = OrientedBox::axis_aligned(Vector3::new(0.05, 0.0, 0.0), Vector3::new(0.01, 0.01, 0.01));
        assert!(check_collision_object(&[straddle], &cube, 0.0));
    }

    #[test]
    fn matches_brute_force_sat() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let meshes = [
            Bvh::build(&primitives::icosphere(0.04, 2)),
            Bvh::build(&primitives::cylinder(0.02, 0.08, 20)),
            Bvh::build(&primitives::cuboid(Vector3::new(0.05, 0.03, 0.07))),
        ];
        let mut hits = 0;
        for i in 0..10_000 {
            let m = &meshes[i % 3];
            let b = OrientedBox {
                center: Vector3::new(rng.random_range(-0.08..0.08), rng.random_range(-0.08..0.08), rng.random_range(-0.08..0.08)),
                half_extents: Vector3::new(rng.random_range(0.001..0.03), rng.random_range(0.001..0.03), rng.random_range(0.001..0.03)),
                rotation: random_rotation(&mut rng),
            };
            let got = check_collision_object(&[b], m, 0.001);
            assert_eq!(got, brute(&[b], m, 0.001));
            hits += got as usize;
        }
        assert!(hits > 1000 && hits < 9000, "{hits}");
    }

    #[test]
    fn monotone_in_margin() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let m = Bvh::build(&primitives::icosphere(0.03, 2));
        for _ in 0..2000 {
            let b = OrientedBox {
                center: Vector3::new(rng.random_range(-0.06..0.06), rng.random_range(-0.06..0.06), rng.random_range(-0.06..0.06)),
                half_extents: Vector3::new(0.005, 0.01, 0.002),
                rotation: random_rotation(&mut rng),
            };
            let m1: f64 = rng.random_range(0.0..0.005);
            if check_collision_object(&[b], &m, m1) {
                assert!(check_collision_object(&[b], &m, m1 + rng.random_range(0.0..0.005)));
            }
        }
    }
}
