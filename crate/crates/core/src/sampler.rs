//! Single-object antipodal grasp generation: surface samples, friction-cone
//! directions, exit-surface contact search, the antipodal rule, gripper
//! collision, wrench quality and a final NMS pass.

use nalgebra::Unit;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::collision::{check_collision_object, gripper_boxes};
use crate::geom::{angle_between, mix_seed, orthonormal_basis, sample_surface, Bvh, UnitVec3, Vec3};
use crate::grasp::{compute_grasp_width, grasp_frame, nms, Grasp, GraspDistanceWeights, GripperModel};
use crate::object::ObjectModel;
use crate::quality::{ferrari_canny, grasp_wrenches, QualityConfig};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SamplerConfig {
    /// Surface contact samples N.
    pub points: usize,
    /// Cone directions k per contact.
    pub directions: usize,
    /// Friction coefficient γ.
    pub friction: f64,
    pub seed: u64,
    /// Approach directions tried per contact pair.
    pub approach_trials: usize,
    /// Added on each side of the contact separation to form the width.
    pub clearance: f64,
    pub collision_margin: f64,
    pub nms_threshold: f64,
    pub weights: GraspDistanceWeights,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        SamplerConfig {
            points: 16384,
            directions: 8,
            friction: 0.3,
            seed: 0,
            approach_trials: 8,
            clearance: 0.002,
            collision_margin: 0.001,
            nms_threshold: 0.02,
            weights: GraspDistanceWeights::default(),
        }
    }
}

impl SamplerConfig {
    pub fn validate(&self) -> Result<(), String> {
        if self.points == 0 || self.directions == 0 || self.approach_trials == 0 {
            return Err("points, directions and approach_trials must be > 0".into());
        }
        if !(self.friction >= 0.0 && self.friction.is_finite()) {
            return Err(format!("friction must be >= 0, got {}", self.friction));
        }
        if !(self.clearance >= 0.0 && self.collision_margin >= 0.0) {
            return Err("clearance and collision_margin must be >= 0".into());
        }
        if !(self.nms_threshold > 0.0) {
            return Err(format!("nms_threshold must be > 0, got {}", self.nms_threshold));
        }
        let w = &self.weights;
        if !(w.beta1 >= 0.0 && w.beta2 >= 0.0 && w.beta3 >= 0.0) {
            return Err("distance weights must be >= 0".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CandidateStatus {
    Positive,
    NegativeNoAntipodal,
    NegativeNotForceClosure,
    NegativeCollision,
    WidthRejected,
}

/// A rejected contact pair. `grasp` is present once both contacts and an
/// approach exist (collision and force-closure failures), with `Q = 0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NegativeCandidate {
    pub point: usize,
    pub c1: Vec3,
    pub c2: Option<Vec3>,
    pub grasp: Option<Grasp>,
    pub status: CandidateStatus,
}

/// Outcome counts over the `N·k` contact pairs.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct OutcomeCounts {
    pub positive_pairs: usize,
    pub no_antipodal: usize,
    pub not_force_closure: usize,
    pub collision: usize,
    pub width_rejected: usize,
    /// Collision-free positive grasps before suppression.
    pub positive_grasps_before_nms: usize,
}

impl OutcomeCounts {
    pub fn total_pairs(&self) -> usize {
        self.positive_pairs + self.no_antipodal + self.not_force_closure + self.collision + self.width_rejected
    }

    fn add(&mut self, o: &OutcomeCounts) {
        self.positive_pairs += o.positive_pairs;
        self.no_antipodal += o.no_antipodal;
        self.not_force_closure += o.not_force_closure;
        self.collision += o.collision;
        self.width_rejected += o.width_rejected;
        self.positive_grasps_before_nms += o.positive_grasps_before_nms;
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObjectGraspSet {
    pub object_id: String,
    /// NMS survivors, quality descending.
    pub positives: Vec<Grasp>,
    pub negatives: Vec<NegativeCandidate>,
    /// Sampled points with no positive pair, `p^F`.
    pub negative_points: Vec<Vec3>,
    pub negative_point_indices: Vec<usize>,
    pub positive_point_indices: Vec<usize>,
    pub counts: OutcomeCounts,
    pub sampled_points: usize,
    pub directions: usize,
}

/// `k` directions uniform over the spherical cap of half-angle `atan(γ)`
/// about `inward`.
pub fn sample_cone_directions(inward: &UnitVec3, gamma: f64, k: usize, seed: u64) -> Vec<UnitVec3> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let cos_max = 1.0 / (1.0 + gamma * gamma).sqrt();
    let (u, v) = orthonormal_basis(inward);
    (0..k)
        .map(|_| {
            let c = 1.0 - rng.random::<f64>() * (1.0 - cos_max);
            let s = (1.0 - c * c).max(0.0).sqrt();
            let phi = rng.random::<f64>() * std::f64::consts::TAU;
            if s == 0.0 {
                return *inward;
            }
            Unit::new_normalize(inward.into_inner() * c + (u * phi.cos() + v * phi.sin()) * s)
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ContactSearch {
    Found { c2: Vec3, n2: UnitVec3 },
    /// The ray leaves the body only beyond the travel limit.
    BeyondTravel,
    None,
}

/// Offset of the ray origin into the body.
const RAY_OFFSET: f64 = 1e-6;

/// Casts from `c1` along `direction` and returns the last exit-surface hit
/// within `max_travel` of `c1`.
pub fn find_antipodal_contact(bvh: &Bvh, c1: &Vec3, outward_normal: &UnitVec3, direction: &UnitVec3, max_travel: f64) -> ContactSearch {
    if direction.dot(outward_normal) >= -1e-6 {
        return ContactSearch::None;
    }
    let origin = c1 + direction.into_inner() * RAY_OFFSET;
    let limit = max_travel - RAY_OFFSET;
    let exits = |lo: f64, hi: f64| {
        bvh.raycast_all(&origin, direction, lo, hi)
            .into_iter()
            .filter(|h| h.normal.dot(direction) > 0.0)
            .last()
    };
    if let Some(h) = exits(0.0, limit) {
        return ContactSearch::Found { c2: h.point, n2: h.normal };
    }
    if exits(limit, f64::INFINITY).is_some() {
        ContactSearch::BeyondTravel
    } else {
        ContactSearch::None
    }
}

/// The contact line lies inside both friction cones.
pub fn is_antipodal(c1: &Vec3, n1: &UnitVec3, c2: &Vec3, n2: &UnitVec3, gamma: f64) -> bool {
    let alpha = gamma.atan();
    let line = c2 - c1;
    angle_between(&line, &-n1.into_inner()) <= alpha && angle_between(&-line, &-n2.into_inner()) <= alpha
}

struct PointResult {
    positives: Vec<Grasp>,
    negatives: Vec<NegativeCandidate>,
    counts: OutcomeCounts,
}

pub fn generate_grasps(object: &ObjectModel, gripper: &GripperModel, cfg: &SamplerConfig, quality: &QualityConfig) -> ObjectGraspSet {
    let samples = sample_surface(&object.mesh, cfg.points, mix_seed(cfg.seed, u64::MAX));
    let qcfg = quality.with_torque_scale(1.0 / object.bounding_radius.max(1e-9));
    let results: Vec<PointResult> = samples
        .par_iter()
        .enumerate()
        .map(|(i, s)| process_point(object, gripper, cfg, &qcfg, i, &s.point, &s.normal))
        .collect();

    let mut counts = OutcomeCounts::default();
    let mut all_pos = Vec::new();
    let mut negatives = Vec::new();
    let mut negative_points = Vec::new();
    let mut negative_point_indices = Vec::new();
    let mut positive_point_indices = Vec::new();
    for (i, r) in results.into_iter().enumerate() {
        counts.add(&r.counts);
        if r.positives.is_empty() {
            negative_points.push(samples[i].point);
            negative_point_indices.push(i);
        } else {
            positive_point_indices.push(i);
        }
        all_pos.extend(r.positives);
        negatives.extend(r.negatives);
    }
    let kept = nms(&all_pos, cfg.nms_threshold, &cfg.weights);
    ObjectGraspSet {
        object_id: object.id.clone(),
        positives: kept.into_iter().map(|i| all_pos[i]).collect(),
        negatives,
        negative_points,
        negative_point_indices,
        positive_point_indices,
        counts,
        sampled_points: cfg.points,
        directions: cfg.directions,
    }
}

fn process_point(
    object: &ObjectModel,
    gripper: &GripperModel,
    cfg: &SamplerConfig,
    qcfg: &QualityConfig,
    index: usize,
    c1: &Vec3,
    n1: &UnitVec3,
) -> PointResult {
    let seed = mix_seed(cfg.seed, index as u64);
    let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(seed, 1));
    let inward = -*n1;
    let mut out = PointResult {
        positives: Vec::new(),
        negatives: Vec::new(),
        counts: OutcomeCounts::default(),
    };
    let negative = |status, c2: Option<Vec3>, grasp: Option<Grasp>| NegativeCandidate {
        point: index,
        c1: *c1,
        c2,
        grasp,
        status,
    };
    for dir in sample_cone_directions(&inward, cfg.friction, cfg.directions, seed) {
        let (c2, n2) = match find_antipodal_contact(&object.bvh, c1, n1, &dir, gripper.max_width) {
            ContactSearch::Found { c2, n2 } => (c2, n2),
            ContactSearch::BeyondTravel => {
                out.counts.width_rejected += 1;
                out.negatives.push(negative(CandidateStatus::WidthRejected, None, None));
                continue;
            }
            ContactSearch::None => {
                out.counts.no_antipodal += 1;
                out.negatives.push(negative(CandidateStatus::NegativeNoAntipodal, None, None));
                continue;
            }
        };
        let Some(width) = compute_grasp_width(c1, &c2, cfg.clearance, gripper) else {
            out.counts.width_rejected += 1;
            out.negatives.push(negative(CandidateStatus::WidthRejected, Some(c2), None));
            continue;
        };
        if (c2 - c1).norm() <= crate::geom::GEOM_EPS {
            out.counts.no_antipodal += 1;
            out.negatives.push(negative(CandidateStatus::NegativeNoAntipodal, Some(c2), None));
            continue;
        }
        if !is_antipodal(c1, n1, &c2, &n2, cfg.friction) {
            out.counts.not_force_closure += 1;
            out.negatives.push(negative(CandidateStatus::NegativeNotForceClosure, Some(c2), None));
            continue;
        }
        let r = Unit::new_normalize(c2 - c1);
        let (u, v) = orthonormal_basis(&r);
        let mean_normal = (n1.into_inner() + n2.into_inner()) / 2.0;
        let mut free = Vec::new();
        let mut first: Option<Grasp> = None;
        for _ in 0..cfg.approach_trials {
            let phi = rng.random::<f64>() * std::f64::consts::TAU;
            let n = Unit::new_normalize(u * phi.cos() + v * phi.sin());
            if n.dot(&mean_normal) > 0.0 {
                continue;
            }
            let g = Grasp::from_contacts(*c1, c2, n, width, 0.0).expect("contacts are distinct");
            let frame = grasp_frame(&g, gripper).expect("approach is orthogonal by construction");
            let boxes = gripper_boxes(gripper, &frame, width);
            if check_collision_object(&boxes.solid(), &object.bvh, cfg.collision_margin) {
                first.get_or_insert(g);
            } else {
                free.push(g);
            }
        }
        if free.is_empty() {
            out.counts.collision += 1;
            out.negatives.push(negative(CandidateStatus::NegativeCollision, Some(c2), first));
            continue;
        }
        let wrenches = grasp_wrenches(&[(*c1, *n1), (c2, n2)], &object.mass.centroid, cfg.friction, qcfg);
        let q = ferrari_canny(&wrenches, qcfg);
        if q <= qcfg.tol {
            out.counts.not_force_closure += 1;
            out.negatives.push(negative(CandidateStatus::NegativeNotForceClosure, Some(c2), Some(free[0])));
            continue;
        }
        out.counts.positive_pairs += 1;
        out.counts.positive_grasps_before_nms += free.len();
        out.positives.extend(free.into_iter().map(|mut g| {
            g.quality = q;
            g
        }));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geom::primitives;
    use nalgebra::Vector3;

    fn sphere(diameter: f64) -> ObjectModel {
        ObjectModel::new("sphere", primitives::icosphere(diameter / 2.0, 3), 500.0, 0.3).unwrap()
    }

    #[test]
    fn cone_directions() {
        let inward = Unit::new_normalize(Vector3::new(0.2, -0.5, -0.8));
        for d in sample_cone_directions(&inward, 0.0, 10, 1) {
            assert_eq!(d, inward);
        }
        let dirs = sample_cone_directions(&inward, 0.3, 1000, 2);
        let bound = 0.3f64.atan();
        let max = dirs
            .iter()
            .map(|d| angle_between(d, &inward))
            .fold(0.0, f64::max);
        assert!(max <= bound + 1e-12);
        assert!(bound - max < 0.5f64.to_radians());
        assert_eq!(dirs, sample_cone_directions(&inward, 0.3, 1000, 2));
    }

    #[test]
    fn antipodal_search_on_sphere_and_plate() {
        let s = Bvh::build(&primitives::icosphere(1.0, 4));
        let x = Vector3::x_axis();
        // Nearest icosphere vertex direction is exact along axes? Use a
        // vertex of the base icosahedron instead of (1,0,0).
        let c1 = Vector3::new(1.0, 0.0, 0.0);
        match find_antipodal_contact(&s, &c1, &x, &-x, 3.0) {
            ContactSearch::Found { c2, .. } => assert!((c2 + c1).norm() < 2e-3, "{c2}"),
            o => panic!("{o:?}"),
        }
        let plate = Bvh::build(&primitives::cuboid(Vector3::new(0.1, 0.1, 0.002)));
        let top = Vector3::new(0.0, 0.0, 0.001);
        assert_eq!(
            find_antipodal_contact(&plate, &top, &Vector3::z_axis(), &Vector3::x_axis(), 1.0),
            ContactSearch::None
        );
    }

    #[test]
    fn exit_matches_brute_force_on_convex_mesh() {
        let m = primitives::cylinder(0.02, 0.05, 24);
        let bvh = Bvh::build(&m);
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        for s in sample_surface(&m, 500, 4) {
            let d = Unit::new_normalize(-s.normal.into_inner() + Vector3::new(rng.random_range(-0.3..0.3), rng.random_range(-0.3..0.3), rng.random_range(-0.3..0.3)));
            if d.dot(&s.normal) >= -1e-6 {
                continue;
            }
            let o = s.point + d.into_inner() * RAY_OFFSET;
            let far = (0..m.num_triangles())
                .filter_map(|t| crate::geom::triangle::ray_triangle(&o, &d, &m.triangle(t)).filter(|&t| t > 0.0))
                .fold(None, |a: Option<f64>, t| Some(a.map_or(t, |a| a.max(t))));
            match find_antipodal_contact(&bvh, &s.point, &s.normal, &d, 1.0) {
                ContactSearch::Found { c2, .. } => {
                    assert!(((c2 - o).norm() - far.unwrap()).abs() < 1e-12);
                }
                other => panic!("{other:?}"),
            }
        }
    }

    #[test]
    fn antipodal_rule_examples() {
        let x = Vector3::x_axis();
        let a = Vector3::new(1.0, 0.0, 0.0);
        assert!(is_antipodal(&a, &x, &-a, &-x, 0.3));
        assert!(is_antipodal(&a, &x, &-a, &-x, 0.0));
        // Adjacent cube faces: +x face and +y face.
        let c1 = Vector3::new(0.5, 0.2, 0.0);
        let c2 = Vector3::new(0.2, 0.5, 0.0);
        assert!(!is_antipodal(&c1, &x, &c2, &Vector3::y_axis(), 0.3));
    }

    #[test]
    fn small_sphere_is_graspable() {
        let obj = sphere(0.03);
        let cfg = SamplerConfig {
            points: 2000,
            directions: 8,
            seed: 5,
            ..Default::default()
        };
        let set = generate_grasps(&obj, &GripperModel::default(), &cfg, &QualityConfig::default());
        assert_eq!(set.counts.total_pairs(), 2000 * 8);
        assert_eq!(set.negatives.len() + set.counts.positive_pairs, 2000 * 8);
        assert!(set.positive_point_indices.len() as f64 > 0.95 * 2000.0, "{:?}", set.counts);
        assert_eq!(set.positive_point_indices.len() + set.negative_point_indices.len(), 2000);
        let gm = GripperModel::default();
        for g in &set.positives {
            g.validate(&gm).unwrap();
            assert!(g.quality > 0.0);
            assert!(g.width <= gm.max_width);
        }
        assert!(!set.positives.is_empty());
    }

    #[test]
    fn wide_sphere_is_all_width_rejected() {
        let obj = sphere(0.06);
        let cfg = SamplerConfig {
            points: 300,
            directions: 4,
            seed: 1,
            ..Default::default()
        };
        let set = generate_grasps(&obj, &GripperModel::default(), &cfg, &QualityConfig::default());
        assert!(set.positives.is_empty());
        assert_eq!(set.counts.width_rejected, 1200);
        assert_eq!(set.negative_points.len(), 300);
    }

    #[test]
    fn deterministic() {
        let obj = ObjectModel::new("box", primitives::cuboid(Vector3::new(0.03, 0.02, 0.05)), 500.0, 0.3).unwrap();
        let cfg = SamplerConfig {
            points: 200,
            directions: 4,
            seed: 9,
            ..Default::default()
        };
        let a = generate_grasps(&obj, &GripperModel::default(), &cfg, &QualityConfig::default());
        let b = generate_grasps(&obj, &GripperModel::default(), &cfg, &QualityConfig::default());
        assert_eq!(serde_json::to_string(&a).unwrap(), serde_json::to_string(&b).unwrap());
    }
}
