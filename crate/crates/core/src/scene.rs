//! Cluttered bin scenes: quasi-static settling of library objects into a
//! static bin, world-space geometry for rendering and collision, and rigid
//! transfer of per-object annotations into the scene.

use std::collections::HashMap;

use nalgebra::Vector3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geom::hull::hull_faces;
use crate::geom::primitives::box_from_corners;
use crate::geom::{
    mix_seed, random_rotation, rotation_between, rotation_z, transform_mesh, Bvh, Hit, Mat3, Pose, TriangleMesh, UnitVec3, Vec3,
};
use crate::grasp::Grasp;
use crate::object::ObjectModel;
use crate::sampler::ObjectGraspSet;

#[derive(Debug, Error, PartialEq)]
pub enum SceneError {
    #[error("object library is empty")]
    EmptyLibrary,
    #[error("object count must be >= 1")]
    NoObjects,
    #[error("unknown object id `{0}`")]
    UnknownObject(String),
    #[error("no grasp set for object `{0}`")]
    MissingGraspSet(String),
    #[error("invalid bin: {0}")]
    BadBin(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct BinSpec {
    extents: [f64; 3],
    wall_thickness: f64,
}

/// Open-top bin. The interior spans `[-x/2, x/2] × [-y/2, y/2] × [0, z]`
/// and the floor's top face is `z = 0`.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(from = "BinSpec", into = "BinSpec")]
pub struct BinModel {
    pub extents: Vec3,
    pub wall_thickness: f64,
    pub mesh: TriangleMesh,
}

impl From<BinSpec> for BinModel {
    fn from(s: BinSpec) -> Self {
        BinModel::build(Vector3::from(s.extents), s.wall_thickness)
    }
}

impl From<BinModel> for BinSpec {
    fn from(b: BinModel) -> Self {
        BinSpec {
            extents: b.extents.into(),
            wall_thickness: b.wall_thickness,
        }
    }
}

impl PartialEq for BinModel {
    fn eq(&self, o: &Self) -> bool {
        self.extents == o.extents && self.wall_thickness == o.wall_thickness
    }
}

impl Default for BinModel {
    fn default() -> Self {
        BinModel::build(Vector3::new(0.4, 0.3, 0.15), 0.01)
    }
}

impl BinModel {
    pub fn new(extents: Vec3, wall_thickness: f64) -> Result<Self, SceneError> {
        if !(extents.iter().all(|&e| e > 0.0 && e.is_finite()) && wall_thickness > 0.0 && wall_thickness.is_finite()) {
            return Err(SceneError::BadBin(format!("extents {extents:?}, wall {wall_thickness}")));
        }
        Ok(BinModel::build(extents, wall_thickness))
    }

    /// Floor plus four walls as disjoint closed boxes.
    fn build(extents: Vec3, w: f64) -> Self {
        let (hx, hy, h) = (extents.x / 2.0, extents.y / 2.0, extents.z);
        let parts = [
            box_from_corners(Vector3::new(-hx - w, -hy - w, -w), Vector3::new(hx + w, hy + w, 0.0)),
            box_from_corners(Vector3::new(-hx - w, hy, 0.0), Vector3::new(hx + w, hy + w, h)),
            box_from_corners(Vector3::new(-hx - w, -hy - w, 0.0), Vector3::new(hx + w, -hy, h)),
            box_from_corners(Vector3::new(hx, -hy, 0.0), Vector3::new(hx + w, hy, h)),
            box_from_corners(Vector3::new(-hx - w, -hy, 0.0), Vector3::new(-hx, hy, h)),
        ];
        let mut vertices = Vec::new();
        let mut triangles = Vec::new();
        for p in &parts {
            let base = vertices.len() as u32;
            vertices.extend_from_slice(p.vertices());
            triangles.extend(p.triangles().iter().map(|t| [t[0] + base, t[1] + base, t[2] + base]));
        }
        let mesh = TriangleMesh::new(vertices, triangles).expect("bin boxes are valid").0;
        BinModel {
            extents,
            wall_thickness: w,
            mesh,
        }
    }

    /// Closed-interval test against the interior expanded by `margin`.
    pub fn interior_contains(&self, p: &Vec3, margin: f64) -> bool {
        let (hx, hy) = (self.extents.x / 2.0 + margin, self.extents.y / 2.0 + margin);
        p.x >= -hx && p.x <= hx && p.y >= -hy && p.y <= hy && p.z >= -margin && p.z <= self.extents.z + margin
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ObjectInstance {
    pub object_id: String,
    /// Object mesh frame to world.
    pub pose: Pose,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scene {
    pub bin: BinModel,
    pub instances: Vec<ObjectInstance>,
    pub seed: u64,
    /// Instances asked for; larger than `instances.len()` when placements
    /// were skipped.
    pub requested: usize,
}

impl Scene {
    pub fn is_complete(&self) -> bool {
        self.instances.len() == self.requested
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SceneConfig {
    /// Inclusive range for the per-scene object count.
    pub count_range: [usize; 2],
    pub hull_area_fraction: f64,
    pub max_hull_candidates: usize,
    pub random_orientations: usize,
    pub perturbations: usize,
    pub attempts: usize,
    /// Spacing of the contact probes along mesh edges.
    pub probe_spacing: f64,
    /// Residual interpenetration allowed before the object is lifted.
    pub penetration_tol: f64,
}

impl Default for SceneConfig {
    fn default() -> Self {
        SceneConfig {
            count_range: [5, 12],
            hull_area_fraction: 0.05,
            max_hull_candidates: 6,
            random_orientations: 8,
            perturbations: 5,
            attempts: 10,
            probe_spacing: 0.001,
            penetration_tol: 0.0005,
        }
    }
}

impl SceneConfig {
    pub fn validate(&self) -> Result<(), String> {
        let [lo, hi] = self.count_range;
        if lo == 0 || lo > hi {
            return Err(format!("bad count_range [{lo}, {hi}]"));
        }
        if !(self.probe_spacing > 0.0 && self.penetration_tol >= 0.0) {
            return Err("probe_spacing must be > 0 and penetration_tol >= 0".into());
        }
        if self.attempts == 0 || self.max_hull_candidates + self.random_orientations == 0 {
            return Err("attempts and orientation candidates must be > 0".into());
        }
        Ok(())
    }

    /// Object count for one scene, uniform over `count_range`.
    pub fn draw_count(&self, seed: u64) -> usize {
        let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(seed, 0xC0));
        rng.random_range(self.count_range[0]..=self.count_range[1])
    }
}

/// World-space acceleration structures for a scene.
#[derive(Debug, Clone)]
pub struct SceneGeometry {
    pub instances: Vec<Bvh>,
    pub bin: Bvh,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Surface {
    Instance(usize),
    Bin,
}

impl SceneGeometry {
    pub fn build(scene: &Scene, library: &[ObjectModel]) -> Result<Self, SceneError> {
        let index = library_index(library);
        let instances = scene
            .instances
            .iter()
            .map(|inst| {
                let obj = lookup(&index, library, &inst.object_id)?;
                Ok(Bvh::build(&transform_mesh(&obj.mesh, &inst.pose)))
            })
            .collect::<Result<Vec<_>, SceneError>>()?;
        Ok(SceneGeometry {
            instances,
            bin: Bvh::build(&scene.bin.mesh),
        })
    }

    /// Nearest hit over all surfaces; ties go to the lowest instance, the
    /// bin last.
    pub fn raycast(&self, origin: &Vec3, dir: &UnitVec3, t_min: f64, t_max: f64) -> Option<(Hit, Surface)> {
        let mut best: Option<(Hit, Surface)> = None;
        let mut limit = t_max;
        let all = self
            .instances
            .iter()
            .enumerate()
            .map(|(i, b)| (b, Surface::Instance(i)))
            .chain(std::iter::once((&self.bin, Surface::Bin)));
        for (bvh, s) in all {
            if let Some(h) = bvh.raycast(origin, dir, t_min, limit) {
                if best.as_ref().is_none_or(|(b, _)| h.t < b.t) {
                    limit = h.t;
                    best = Some((h, s));
                }
            }
        }
        best
    }

    /// Distance to the nearest surface, searched up to `max_dist`.
    pub fn distance(&self, p: &Vec3, max_dist: f64) -> Option<f64> {
        self.instances
            .iter()
            .chain(std::iter::once(&self.bin))
            .filter_map(|b| b.closest_point(p, max_dist).map(|c| c.0))
            .reduce(f64::min)
    }
}

fn library_index(library: &[ObjectModel]) -> HashMap<&str, usize> {
    let mut m = HashMap::new();
    for (i, o) in library.iter().enumerate() {
        m.entry(o.id.as_str()).or_insert(i);
    }
    m
}

fn lookup<'a>(index: &HashMap<&str, usize>, library: &'a [ObjectModel], id: &str) -> Result<&'a ObjectModel, SceneError> {
    index
        .get(id)
        .map(|&i| &library[i])
        .ok_or_else(|| SceneError::UnknownObject(id.to_string()))
}

/// Vertices plus points every `spacing` along each edge.
pub fn probe_points(mesh: &TriangleMesh, spacing: f64) -> Vec<Vec3> {
    let v = mesh.vertices();
    let mut out = v.to_vec();
    for [a, b] in mesh.edges() {
        let (pa, pb) = (v[a as usize], v[b as usize]);
        let n = ((pb - pa).norm() / spacing).floor() as usize;
        for s in 1..=n {
            let t = s as f64 / (n + 1) as f64;
            out.push(pa + (pb - pa) * t);
        }
    }
    out
}

/// Largest depth of any probe of one body inside another, over all pairs
/// of instances.
pub fn max_penetration(geometry: &SceneGeometry, probes: &[Vec<Vec3>]) -> f64 {
    let mut worst: f64 = 0.0;
    for (i, pi) in probes.iter().enumerate() {
        for (j, bj) in geometry.instances.iter().enumerate() {
            if i == j || !bj.is_closed() {
                continue;
            }
            let bb = bj.aabb();
            for p in pi {
                if bb.contains(p) && bj.contains_point(p) {
                    if let Some((d, _, _)) = bj.closest_point(p, f64::INFINITY) {
                        worst = worst.max(d);
                    }
                }
            }
        }
    }
    worst
}

struct Placed {
    bvh: Bvh,
    probes: Vec<Vec3>,
}

struct Prepared<'a> {
    object: &'a ObjectModel,
    /// Mesh and probes with the centroid at the origin.
    centered: TriangleMesh,
    probes: Vec<Vec3>,
    hull_normals: Vec<UnitVec3>,
}

fn prepare<'a>(object: &'a ObjectModel, cfg: &SceneConfig) -> Prepared<'a> {
    let centered = transform_mesh(&object.mesh, &Pose::from_translation(-object.mass.centroid));
    let probes = probe_points(&centered, cfg.probe_spacing);
    let faces = hull_faces(&centered);
    let max_area = faces.first().map_or(0.0, |f| f.area);
    let hull_normals = faces
        .iter()
        .filter(|f| f.area >= cfg.hull_area_fraction * max_area)
        .take(cfg.max_hull_candidates)
        .map(|f| f.normal)
        .collect();
    Prepared {
        object,
        centered,
        probes,
        hull_normals,
    }
}

/// Result of lowering one orientation at one `(x, y)`.
struct Drop {
    rotation: Mat3,
    centroid: Vec3,
}

fn lower(p: &Prepared, rotation: &Mat3, xy: (f64, f64), placed: &[Placed], bin: &BinModel, cfg: &SceneConfig) -> Drop {
    let down = -Vector3::z_axis();
    let up = Vector3::z_axis();
    let world = |c: &Vec3| -> Vec<Vec3> { p.probes.iter().map(|q| rotation * q + c).collect() };
    let min_z = p.probes.iter().map(|q| (rotation * q).z).fold(f64::INFINITY, f64::min);
    let start_z = bin.extents.z + 2.0 * p.object.bounding_radius + 0.05;
    let start = Vector3::new(xy.0, xy.1, start_z);
    let probes = world(&start);
    let mut drop = start_z + min_z;

    let moving = Bvh::build(&transform_mesh(&p.centered, &Pose::new(*rotation, start)));
    let footprint = moving.aabb();
    for other in placed {
        let ob = other.bvh.aabb();
        if ob.min.x > footprint.max.x || ob.max.x < footprint.min.x || ob.min.y > footprint.max.y || ob.max.y < footprint.min.y {
            continue;
        }
        for q in &probes {
            if q.x < ob.min.x || q.x > ob.max.x || q.y < ob.min.y || q.y > ob.max.y {
                continue;
            }
            if let Some(h) = other.bvh.raycast(q, &down, 0.0, drop) {
                drop = h.t;
            }
        }
        for q in &other.probes {
            if q.x < footprint.min.x || q.x > footprint.max.x || q.y < footprint.min.y || q.y > footprint.max.y {
                continue;
            }
            if let Some(h) = moving.raycast(q, &up, 0.0, drop) {
                drop = h.t;
            }
        }
    }
    let mut centroid = Vector3::new(xy.0, xy.1, start_z - drop.max(0.0));

    // Probes only sample edges, so face-through-face contacts can leave a
    // small overlap; lift until the residual is within tolerance.
    for _ in 0..5 {
        let depth = overlap_depth(p, rotation, &centroid, placed);
        if depth <= cfg.penetration_tol {
            break;
        }
        centroid.z += depth;
    }
    Drop {
        rotation: *rotation,
        centroid,
    }
}

fn overlap_depth(p: &Prepared, rotation: &Mat3, centroid: &Vec3, placed: &[Placed]) -> f64 {
    let mut depth: f64 = 0.0;
    let mine: Vec<Vec3> = p.probes.iter().map(|q| rotation * q + centroid).collect();
    let bvh = Bvh::build(&transform_mesh(&p.centered, &Pose::new(*rotation, *centroid)));
    let bb = bvh.aabb();
    for other in placed {
        let ob = other.bvh.aabb();
        if !ob.overlaps(&bb) {
            continue;
        }
        for (pts, body, box_) in [(&mine, &other.bvh, &ob), (&other.probes, &bvh, &bb)] {
            if !body.is_closed() {
                continue;
            }
            for q in pts {
                if box_.contains(q) && body.contains_point(q) {
                    if let Some((d, _, _)) = body.closest_point(q, f64::INFINITY) {
                        depth = depth.max(d);
                    }
                }
            }
        }
    }
    depth
}

fn candidate_rotations(p: &Prepared, rng: &mut ChaCha8Rng, cfg: &SceneConfig) -> Vec<Mat3> {
    let down = -Vector3::z_axis();
    let mut out: Vec<Mat3> = p
        .hull_normals
        .iter()
        .map(|n| rotation_z(rng.random::<f64>() * std::f64::consts::TAU) * rotation_between(n, &down))
        .collect();
    out.extend((0..cfg.random_orientations).map(|_| random_rotation(rng)));
    out
}

fn settle(p: &Prepared, rng: &mut ChaCha8Rng, placed: &[Placed], bin: &BinModel, cfg: &SceneConfig) -> Option<Drop> {
    let r = p.object.bounding_radius;
    let (hx, hy) = (bin.extents.x / 2.0 - r, bin.extents.y / 2.0 - r);
    if hx < 0.0 || hy < 0.0 {
        return None;
    }
    let clamp = |v: f64, h: f64| v.clamp(-h, h);
    let xy = (rng.random_range(-hx..=hx), rng.random_range(-hy..=hy));
    let mut best = candidate_rotations(p, rng, cfg)
        .iter()
        .map(|rot| lower(p, rot, xy, placed, bin, cfg))
        .reduce(|a, b| if b.centroid.z < a.centroid.z { b } else { a })?;
    for _ in 0..cfg.perturbations {
        let nx = clamp(best.centroid.x + 0.01 * rng.sample::<f64, _>(StandardNormal), hx);
        let ny = clamp(best.centroid.y + 0.01 * rng.sample::<f64, _>(StandardNormal), hy);
        let yaw = 0.2 * rng.sample::<f64, _>(StandardNormal);
        let rot = rotation_z(yaw) * best.rotation;
        let cand = lower(p, &rot, (nx, ny), placed, bin, cfg);
        if cand.centroid.z <= best.centroid.z {
            best = cand;
        }
    }
    let top = p
        .probes
        .iter()
        .map(|q| (best.rotation * q).z)
        .fold(f64::NEG_INFINITY, f64::max)
        + best.centroid.z;
    (top <= bin.extents.z).then_some(best)
}

/// Drops `m` objects, drawn uniformly with replacement, one at a time.
pub fn compose_scene(library: &[ObjectModel], m: usize, bin: &BinModel, seed: u64, cfg: &SceneConfig) -> Result<Scene, SceneError> {
    if library.is_empty() {
        return Err(SceneError::EmptyLibrary);
    }
    if m == 0 {
        return Err(SceneError::NoObjects);
    }
    let mut cache: HashMap<usize, Prepared> = HashMap::new();
    let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(seed, 0x5CE));
    let mut placed: Vec<Placed> = Vec::new();
    let mut instances = Vec::new();
    for k in 0..m {
        let which = rng.random_range(0..library.len());
        let p = cache.entry(which).or_insert_with(|| prepare(&library[which], cfg));
        let mut done = None;
        for _ in 0..cfg.attempts {
            if let Some(d) = settle(p, &mut rng, &placed, bin, cfg) {
                done = Some(d);
                break;
            }
        }
        let Some(d) = done else {
            log::warn!("scene {seed}: could not place instance {k} ({}); skipped", p.object.id);
            continue;
        };
        let pose = Pose::new(d.rotation, d.centroid - d.rotation * p.object.mass.centroid);
        placed.push(Placed {
            bvh: Bvh::build(&transform_mesh(&p.centered, &Pose::new(d.rotation, d.centroid))),
            probes: p.probes.iter().map(|q| d.rotation * q + d.centroid).collect(),
        });
        instances.push(ObjectInstance {
            object_id: p.object.id.clone(),
            pose,
        });
    }
    Ok(Scene {
        bin: bin.clone(),
        instances,
        seed,
        requested: m,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SceneGrasp {
    pub instance: usize,
    /// Index into the object's positive list.
    pub source: usize,
    pub grasp: Grasp,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScenePoint {
    pub instance: usize,
    pub point: Vec3,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SceneAnnotations {
    pub grasps: Vec<SceneGrasp>,
    pub negative_points: Vec<ScenePoint>,
}

/// Moves every object's positives and unsuitable points by its instance
/// pose.
pub fn transform_annotations(scene: &Scene, grasp_sets: &[ObjectGraspSet]) -> Result<SceneAnnotations, SceneError> {
    let by_id: HashMap<&str, &ObjectGraspSet> = grasp_sets.iter().map(|s| (s.object_id.as_str(), s)).collect();
    let mut out = SceneAnnotations::default();
    for (i, inst) in scene.instances.iter().enumerate() {
        let set = by_id
            .get(inst.object_id.as_str())
            .ok_or_else(|| SceneError::MissingGraspSet(inst.object_id.clone()))?;
        out.grasps.extend(set.positives.iter().enumerate().map(|(s, g)| SceneGrasp {
            instance: i,
            source: s,
            grasp: g.transformed(&inst.pose),
        }));
        out.negative_points.extend(set.negative_points.iter().map(|p| ScenePoint {
            instance: i,
            point: inst.pose.transform_point(p),
        }));
    }
    Ok(out)
}
