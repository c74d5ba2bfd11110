//! Parallel-jaw gripper geometry, the grasp tuple, the grasp distance used
//! for pruning, and quality-ordered non-maximum suppression.

use std::collections::HashMap;

use nalgebra::{Matrix3, Unit};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geom::{angle_between, Pose, UnitVec3, Vec3};

#[derive(Debug, Error, PartialEq)]
pub enum GraspError {
    #[error("approach and closing axes are not orthogonal (|n·r| = {0:.3e})")]
    NotOrthogonal(f64),
    #[error("grasp width {width} outside (0, {max}]")]
    WidthOutOfRange { width: f64, max: f64 },
    #[error("contacts are {separation} apart, wider than the grasp width {width}")]
    ContactsTooWide { separation: f64, width: f64 },
    #[error("coincident contacts")]
    CoincidentContacts,
    #[error("negative or non-finite quality {0}")]
    BadQuality(f64),
    #[error("invalid gripper: {0}")]
    BadGripper(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GripperModel {
    pub max_width: f64,
    /// Length of the closing region along the approach axis.
    pub finger_depth: f64,
    pub finger_thickness: f64,
    /// Extent along the orthogonal axis.
    pub finger_height: f64,
    pub base_depth: f64,
    pub base_width: f64,
    pub base_height: f64,
}

impl Default for GripperModel {
    fn default() -> Self {
        GripperModel {
            max_width: 0.04,
            finger_depth: 0.04,
            finger_thickness: 0.01,
            finger_height: 0.02,
            base_depth: 0.02,
            base_width: 0.08,
            base_height: 0.02,
        }
    }
}

impl GripperModel {
    pub fn validate(&self) -> Result<(), GraspError> {
        let dims = [
            ("max_width", self.max_width),
            ("finger_depth", self.finger_depth),
            ("finger_thickness", self.finger_thickness),
            ("finger_height", self.finger_height),
            ("base_depth", self.base_depth),
            ("base_width", self.base_width),
            ("base_height", self.base_height),
        ];
        for (name, v) in dims {
            if !(v.is_finite() && v > 0.0) {
                return Err(GraspError::BadGripper(format!("{name} must be > 0, got {v}")));
            }
        }
        Ok(())
    }
}

/// A parallel-jaw grasp `(o, n, r, ω, c1, c2)` with quality `Q`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Grasp {
    /// Midpoint of the contacts.
    pub center: Vec3,
    pub approach: UnitVec3,
    pub closing: UnitVec3,
    pub width: f64,
    pub c1: Vec3,
    pub c2: Vec3,
    pub quality: f64,
}

impl Grasp {
    /// Builds a grasp from its contacts. The closing axis is `c2 − c1` with
    /// its sign canonicalized; `approach` should be orthogonal to it.
    pub fn from_contacts(c1: Vec3, c2: Vec3, approach: UnitVec3, width: f64, quality: f64) -> Result<Grasp, GraspError> {
        let d = c2 - c1;
        if d.norm() <= crate::geom::GEOM_EPS {
            return Err(GraspError::CoincidentContacts);
        }
        Ok(Grasp {
            center: (c1 + c2) / 2.0,
            approach,
            closing: canonical_closing(&Unit::new_normalize(d)),
            width,
            c1,
            c2,
            quality,
        })
    }

    pub fn validate(&self, gripper: &GripperModel) -> Result<(), GraspError> {
        let dot = self.approach.dot(&self.closing).abs();
        if !(dot < 1e-6) {
            return Err(GraspError::NotOrthogonal(dot));
        }
        if !(self.width > 0.0 && self.width <= gripper.max_width + 1e-12) {
            return Err(GraspError::WidthOutOfRange {
                width: self.width,
                max: gripper.max_width,
            });
        }
        let sep = (self.c1 - self.c2).norm();
        if sep > self.width + 1e-9 {
            return Err(GraspError::ContactsTooWide {
                separation: sep,
                width: self.width,
            });
        }
        if !(self.quality >= 0.0 && self.quality.is_finite()) {
            return Err(GraspError::BadQuality(self.quality));
        }
        Ok(())
    }

    /// The same grasp after a rigid motion; width and quality unchanged.
    pub fn transformed(&self, pose: &Pose) -> Grasp {
        if pose.is_identity() {
            return *self;
        }
        Grasp {
            center: pose.transform_point(&self.center),
            approach: pose.transform_unit(&self.approach),
            closing: pose.transform_unit(&self.closing),
            width: self.width,
            c1: pose.transform_point(&self.c1),
            c2: pose.transform_point(&self.c2),
            quality: self.quality,
        }
    }
}

/// Flips `r` so that its largest-magnitude component is positive (first
/// such component on ties).
pub fn canonical_closing(r: &UnitVec3) -> UnitVec3 {
    let i = r.iamax();
    if r[i] < 0.0 {
        -*r
    } else {
        *r
    }
}

/// Gripper frame: columns (approach, closing, approach × closing), origin at
/// the bottom center `o − finger_depth·n`.
pub fn grasp_frame(g: &Grasp, gripper: &GripperModel) -> Result<Pose, GraspError> {
    let n = g.approach.into_inner();
    let dot = n.dot(&g.closing);
    if !(dot.abs() < 1e-6) {
        return Err(GraspError::NotOrthogonal(dot.abs()));
    }
    let r = (g.closing.into_inner() - n * dot).normalize();
    let z = n.cross(&r);
    Ok(Pose::new(
        Matrix3::from_columns(&[n, r, z]),
        g.center - n * gripper.finger_depth,
    ))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GraspDistanceWeights {
    /// Per meter, on contact-midpoint distance.
    pub beta1: f64,
    /// On the sign-invariant closing-axis angle.
    pub beta2: f64,
    /// On the approach angle.
    pub beta3: f64,
}

impl Default for GraspDistanceWeights {
    fn default() -> Self {
        GraspDistanceWeights {
            beta1: 1.0,
            beta2: 0.03,
            beta3: 0.03,
        }
    }
}

/// `β1·‖m1 − m2‖ + β2·arccos|r1·r2|/π + β3·arccos(n1·n2)/π`, with `m` the
/// contact midpoints. Angles are evaluated with `atan2` for accuracy near 0.
pub fn grasp_distance(g1: &Grasp, g2: &Grasp, w: &GraspDistanceWeights) -> f64 {
    let m1 = (g1.c1 + g1.c2) / 2.0;
    let m2 = (g2.c1 + g2.c2) / 2.0;
    let (r1, r2) = (g1.closing.as_ref(), g2.closing.as_ref());
    let closing = r1.cross(r2).norm().atan2(r1.dot(r2).abs());
    let approach = angle_between(g1.approach.as_ref(), g2.approach.as_ref());
    w.beta1 * (m1 - m2).norm()
        + w.beta2 * closing / std::f64::consts::PI
        + w.beta3 * approach / std::f64::consts::PI
}

/// Greedy suppression: visit grasps by quality descending (stable on index),
/// keep one unless a kept grasp lies within `threshold`. Returns kept
/// indices in visiting order.
pub fn nms(grasps: &[Grasp], threshold: f64, w: &GraspDistanceWeights) -> Vec<usize> {
    let mut order: Vec<usize> = (0..grasps.len()).collect();
    order.sort_by(|&a, &b| grasps[b].quality.total_cmp(&grasps[a].quality));
    if w.beta1 <= 0.0 {
        let mut kept: Vec<usize> = Vec::new();
        for i in order {
            if kept
                .iter()
                .all(|&k| grasp_distance(&grasps[k], &grasps[i], w) > threshold)
            {
                kept.push(i);
            }
        }
        return kept;
    }
    // D ≥ β1·‖Δm‖, so only kept grasps in neighbouring cells can suppress.
    let cell = threshold / w.beta1 * (1.0 + 1e-6);
    let key = |g: &Grasp| {
        let m = (g.c1 + g.c2) / 2.0 / cell;
        [m.x.floor() as i64, m.y.floor() as i64, m.z.floor() as i64]
    };
    let mut grid: HashMap<[i64; 3], Vec<usize>> = HashMap::new();
    let mut kept = Vec::new();
    for i in order {
        let k = key(&grasps[i]);
        let mut suppressed = false;
        'scan: for dx in -1..=1 {
            for dy in -1..=1 {
                for dz in -1..=1 {
                    if let Some(list) = grid.get(&[k[0] + dx, k[1] + dy, k[2] + dz]) {
                        if list
                            .iter()
                            .any(|&j| grasp_distance(&grasps[j], &grasps[i], w) <= threshold)
                        {
                            suppressed = true;
                            break 'scan;
                        }
                    }
                }
            }
        }
        if !suppressed {
            grid.entry(k).or_default().push(i);
            kept.push(i);
        }
    }
    kept
}

/// Finger opening for a contact pair: separation plus clearance on both
/// sides, or `None` when it exceeds the gripper's maximum width.
pub fn compute_grasp_width(c1: &Vec3, c2: &Vec3, clearance: f64, gripper: &GripperModel) -> Option<f64> {
    let w = (c1 - c2).norm() + 2.0 * clearance;
    (w <= gripper.max_width).then_some(w)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geom::random_rotation;
    use nalgebra::Vector3;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn grasp(c1: Vec3, c2: Vec3, n: Vec3, q: f64) -> Grasp {
        Grasp::from_contacts(c1, c2, Unit::new_normalize(n), (c1 - c2).norm() + 0.004, q).unwrap()
    }

    fn random_grasp(rng: &mut impl Rng) -> Grasp {
        let rot = random_rotation(rng);
        let c = Vector3::new(rng.random_range(-0.05..0.05), rng.random_range(-0.05..0.05), rng.random_range(-0.05..0.05));
        let half = rng.random_range(0.002..0.018);
        let r = rot.column(1).into_owned();
        grasp(c - r * half, c + r * half, rot.column(0).into_owned(), rng.random_range(0.0..1.0))
    }

    fn reference_nms(g: &[Grasp], t: f64, w: &GraspDistanceWeights) -> Vec<usize> {
        let mut order: Vec<usize> = (0..g.len()).collect();
        order.sort_by(|&a, &b| g[b].quality.total_cmp(&g[a].quality));
        let mut alive = vec![true; g.len()];
        let mut out = Vec::new();
        for (p, &i) in order.iter().enumerate() {
            if !alive[i] {
                continue;
            }
            out.push(i);
            for &j in &order[p + 1..] {
                if grasp_distance(&g[i], &g[j], w) <= t {
                    alive[j] = false;
                }
            }
        }
        out
    }

    #[test]
    fn frame_axis_example() {
        let g = Grasp {
            center: Vector3::new(0.0, 0.0, 0.1),
            approach: Unit::new_normalize(Vector3::new(0.0, 0.0, -1.0)),
            closing: Vector3::x_axis(),
            width: 0.03,
            c1: Vector3::new(-0.01, 0.0, 0.1),
            c2: Vector3::new(0.01, 0.0, 0.1),
            quality: 0.1,
        };
        let f = grasp_frame(&g, &GripperModel::default()).unwrap();
        assert!((f.translation - Vector3::new(0.0, 0.0, 0.14)).norm() < 1e-15);
        assert_eq!(f.rotation.column(2).into_owned(), Vector3::new(0.0, -1.0, 0.0));
        assert!(f.rotation.iter().all(|v| *v == 0.0 || v.abs() == 1.0));
    }

    #[test]
    fn frame_rejects_non_orthogonal() {
        let mut g = grasp(Vector3::zeros(), Vector3::new(0.02, 0.0, 0.0), Vector3::z(), 0.5);
        g.approach = Unit::new_normalize(Vector3::new(0.1, 0.0, 1.0));
        assert!(matches!(grasp_frame(&g, &GripperModel::default()), Err(GraspError::NotOrthogonal(_))));
    }

    #[test]
    fn frame_orthonormal_for_random_grasps() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..1000 {
            let f = grasp_frame(&random_grasp(&mut rng), &GripperModel::default()).unwrap();
            assert!(f.orthonormality_error() < 1e-9);
        }
    }

    #[test]
    fn distance_hand_values() {
        let w = GraspDistanceWeights::default();
        let a = grasp(Vector3::zeros(), Vector3::new(0.0, 0.02, 0.0), Vector3::z(), 0.5);
        assert_eq!(grasp_distance(&a, &a, &w), 0.0);
        let mut b = a;
        b.approach = Vector3::x_axis();
        assert!((grasp_distance(&a, &b, &w) - 0.015).abs() < 1e-12);
        let c = a.transformed(&Pose::from_translation(Vector3::new(0.02, 0.0, 0.0)));
        assert!((grasp_distance(&a, &c, &w) - 0.02).abs() < 1e-12);
        // Closing-axis sign does not matter.
        let d = grasp(Vector3::new(0.0, 0.02, 0.0), Vector3::zeros(), Vector3::z(), 0.5);
        assert_eq!(grasp_distance(&a, &d, &w), 0.0);
    }

    #[test]
    fn width_rule() {
        let gm = GripperModel::default();
        let c1 = Vector3::zeros();
        let w = compute_grasp_width(&c1, &Vector3::new(0.03, 0.0, 0.0), 0.002, &gm).unwrap();
        assert!((w - 0.034).abs() < 1e-15);
        assert_eq!(compute_grasp_width(&c1, &Vector3::new(0.04, 0.0, 0.0), 0.002, &gm), None);
        assert_eq!(compute_grasp_width(&c1, &Vector3::new(0.025, 0.0, 0.0), 0.0, &gm), Some(0.025));
    }

    #[test]
    fn nms_basic_cases() {
        let w = GraspDistanceWeights::default();
        let a = grasp(Vector3::zeros(), Vector3::new(0.0, 0.02, 0.0), Vector3::z(), 0.4);
        let mut b = a;
        b.quality = 0.9;
        assert_eq!(nms(&[a, b], 0.02, &w), vec![1]);
        let far: Vec<Grasp> = (0..5)
            .map(|i| a.transformed(&Pose::from_translation(Vector3::new(0.05 * i as f64, 0.0, 0.0))))
            .collect();
        assert_eq!(nms(&far, 0.02, &w).len(), 5);
    }

    #[test]
    fn nms_matches_reference() {
        let w = GraspDistanceWeights::default();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for trial in 0..20 {
            let g: Vec<Grasp> = (0..200).map(|_| random_grasp(&mut rng)).collect();
            let t = 0.01 + 0.01 * trial as f64;
            assert_eq!(nms(&g, t, &w), reference_nms(&g, t, &w));
        }
    }

    proptest! {
        #[test]
        fn distance_symmetric_nonnegative(seed in any::<u64>()) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let (a, b) = (random_grasp(&mut rng), random_grasp(&mut rng));
            let w = GraspDistanceWeights::default();
            let d = grasp_distance(&a, &b, &w);
            prop_assert!(d >= 0.0);
            prop_assert_eq!(d, grasp_distance(&b, &a, &w));
            prop_assert_eq!(grasp_distance(&a, &a, &w), 0.0);
        }

        #[test]
        fn nms_kept_pairs_separated_and_discards_covered(seed in any::<u64>()) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let g: Vec<Grasp> = (0..60).map(|_| random_grasp(&mut rng)).collect();
            let w = GraspDistanceWeights::default();
            let kept = nms(&g, 0.03, &w);
            let best = (0..g.len()).max_by(|&a, &b| g[a].quality.total_cmp(&g[b].quality).then(b.cmp(&a))).unwrap();
            prop_assert_eq!(kept[0], best);
            for (i, &a) in kept.iter().enumerate() {
                for &b in &kept[i + 1..] {
                    prop_assert!(grasp_distance(&g[a], &g[b], &w) > 0.03);
                }
            }
            for j in 0..g.len() {
                if !kept.contains(&j) {
                    prop_assert!(kept.iter().any(|&k| g[k].quality >= g[j].quality && grasp_distance(&g[k], &g[j], &w) <= 0.03));
                }
            }
        }

        #[test]
        fn nms_order_invariant(seed in any::<u64>()) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let g: Vec<Grasp> = (0..50).map(|_| random_grasp(&mut rng)).collect();
            let mut perm: Vec<usize> = (0..g.len()).collect();
            for i in (1..perm.len()).rev() {
                perm.swap(i, rng.random_range(0..=i));
            }
            let shuffled: Vec<Grasp> = perm.iter().map(|&i| g[i]).collect();
            let w = GraspDistanceWeights::default();
            let mut a: Vec<usize> = nms(&g, 0.03, &w);
            let mut b: Vec<usize> = nms(&shuffled, 0.03, &w).into_iter().map(|i| perm[i]).collect();
            a.sort();
            b.sort();
            prop_assert_eq!(a, b);
        }
    }
}
