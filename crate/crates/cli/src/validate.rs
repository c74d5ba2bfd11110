//! Re-checks every file of a dataset: checksums, schemas, per-record
//! invariants, and that derived files match a recomputation from their
//! inputs.

use std::collections::HashSet;
use std::path::Path;

use densegrasp::collision::{check_collision_scene, gripper_boxes};
use densegrasp::dataset::{self, cloud_to_ply, targets_to_ply, Splits};
use densegrasp::encoding::{decode_grasp, EncodedGrasp, EncodingConfig};
use densegrasp::geom::{transform_mesh, Vec3};
use densegrasp::grasp::{grasp_distance, grasp_frame, Grasp, GripperModel};
use densegrasp::labeler::{LabeledCloud, PointMask};
use densegrasp::object::ObjectModel;
use densegrasp::ply::PlyFile;
use densegrasp::sampler::ObjectGraspSet;
use densegrasp::scene::{max_penetration, probe_points, Scene, SceneGeometry, SceneGrasp};
use rayon::prelude::*;

use crate::config::RunConfig;
use crate::library::load_library;
use crate::stages::{self, SceneLabels};

/// Allowed interpenetration between resting objects.
pub const PENETRATION_LIMIT: f64 = 0.001;
/// Decoded targets must reproduce their grasp this closely.
const DECODE_TOL: f64 = 1e-8;

#[derive(Debug, Default)]
pub struct Report {
    pub violations: Vec<String>,
    pub files_checked: usize,
    pub max_penetration: f64,
    pub grasps_rechecked: usize,
}

impl Report {
    fn add(&mut self, file: &str, msg: impl std::fmt::Display) {
        self.violations.push(format!("{file}: {msg}"));
    }

    fn merge(&mut self, other: Report) {
        self.violations.extend(other.violations);
        self.files_checked += other.files_checked;
        self.max_penetration = self.max_penetration.max(other.max_penetration);
        self.grasps_rechecked += other.grasps_rechecked;
    }
}

/// Validates the dataset at `root` under the config recorded in its
/// manifest.
pub fn validate(root: &Path) -> Report {
    let mut r = Report::default();
    let manifest = match stages::read_manifest(root) {
        Ok(m) => m,
        Err(e) => {
            r.add(stages::MANIFEST_FILE, e);
            return r;
        }
    };
    let cfg: RunConfig = match serde_json::from_value(manifest.config.clone()) {
        Ok(c) => c,
        Err(e) => {
            r.add(stages::MANIFEST_FILE, format!("config snapshot: {e}"));
            return r;
        }
    };
    if let Err(e) = cfg.validate() {
        r.add(stages::MANIFEST_FILE, format!("config snapshot: {e}"));
    }
    for e in manifest.verify(root) {
        r.violations.push(e.to_string());
    }
    let ids = stages::object_ids(root);
    for rel in stages::expected_files(&cfg, &ids) {
        if !manifest.files.contains_key(&rel) {
            r.add(&rel, "not listed in the manifest");
        }
    }
    r.files_checked = manifest.files.len();
    if !r.violations.is_empty() {
        // Checksums already failed; the payload checks below would only
        // repeat the same failures with less precise messages.
        return r;
    }

    let objects = match load_library(root) {
        Ok((_, o)) => o,
        Err(e) => {
            r.add(crate::library::LIBRARY_FILE, e);
            return r;
        }
    };
    check_splits(&manifest.splits, &ids, &cfg, &mut r);
    let sets: Vec<ObjectGraspSet> = objects
        .iter()
        .filter_map(|o| {
            let rel = stages::grasps_path(&o.id);
            match dataset::read_json::<ObjectGraspSet>(&root.join(&rel)) {
                Ok(s) => {
                    check_grasp_set(&s, o, &cfg, &rel, &mut r);
                    Some(s)
                }
                Err(e) => {
                    r.add(&rel, e);
                    None
                }
            }
        })
        .collect();
    if sets.len() != objects.len() {
        return r;
    }
    for id in &ids {
        let rel = stages::viz_path(id);
        if let Err(e) = dataset::read_bytes(&root.join(&rel)).and_then(|b| PlyFile::from_bytes(&b).map_err(|source| dataset::DatasetError::Ply { path: rel.clone(), source })) {
            r.add(&rel, e);
        }
    }

    let reports: Vec<Report> = stages::scene_ids(&cfg)
        .par_iter()
        .map(|sid| {
            let mut sr = Report::default();
            check_scene(root, sid, &cfg, &objects, &sets, &mut sr);
            sr
        })
        .collect();
    for sr in reports {
        r.merge(sr);
    }

    match stages::compute_stats(&cfg, root) {
        Ok(st) => {
            if st.widths_out_of_range > 0 || st.max_width > cfg.gripper.max_width + 1e-12 {
                r.add(stages::STATS_JSON, format!("max width {} exceeds the gripper", st.max_width));
            }
            if st.width_histogram.iter().sum::<usize>() + st.widths_out_of_range != st.total_positive_grasps {
                r.add(stages::STATS_JSON, "histogram does not conserve the grasp count");
            }
            compare_bytes(root, stages::STATS_JSON, &dataset::to_versioned_json(&st), &mut r);
            compare_bytes(root, stages::STATS_TEXT, st.to_text().as_bytes(), &mut r);
        }
        Err(e) => r.add(stages::STATS_JSON, e),
    }
    r
}

fn compare_bytes(root: &Path, rel: &str, expected: &[u8], r: &mut Report) {
    match std::fs::read(root.join(rel)) {
        Ok(b) if b == expected => {}
        Ok(_) => r.add(rel, "differs from a recomputation from its inputs"),
        Err(e) => r.add(rel, e),
    }
}

fn check_splits(s: &Splits, ids: &[String], cfg: &RunConfig, r: &mut Report) {
    let f = stages::SPLITS_FILE;
    let partition = |a: &[String], b: &[String], all: &[String]| {
        let mut u: Vec<&String> = a.iter().chain(b).collect();
        u.sort();
        let mut want: Vec<&String> = all.iter().collect();
        want.sort();
        u == want
    };
    if !partition(&s.train_objects, &s.test_objects, ids) {
        r.add(f, "object splits do not partition the library");
    }
    if !partition(&s.train_scenes, &s.test_scenes, &stages::scene_ids(cfg)) {
        r.add(f, "scene splits do not partition the scenes");
    }
}

fn check_grasp(g: &Grasp, gripper: &GripperModel) -> Result<(), String> {
    g.validate(gripper).map_err(|e| e.to_string())?;
    if !(g.quality > 0.0) {
        return Err(format!("positive grasp with Q = {}", g.quality));
    }
    Ok(())
}

fn check_grasp_set(s: &ObjectGraspSet, o: &ObjectModel, cfg: &RunConfig, rel: &str, r: &mut Report) {
    if s.object_id != o.id {
        r.add(rel, format!("object_id `{}` does not match `{}`", s.object_id, o.id));
    }
    for (i, g) in s.positives.iter().enumerate() {
        if let Err(e) = check_grasp(g, &cfg.gripper) {
            r.add(rel, format!("positive {i}: {e}"));
        }
    }
    if s.positives.windows(2).any(|w| w[0].quality < w[1].quality) {
        r.add(rel, "positives are not sorted by quality");
    }
    let thr = cfg.sampler.nms_threshold;
    for i in 0..s.positives.len() {
        for j in 0..i {
            if grasp_distance(&s.positives[i], &s.positives[j], &cfg.sampler.weights) <= thr {
                r.add(rel, format!("positives {j} and {i} are within the NMS threshold"));
            }
        }
    }
    if s.sampled_points != cfg.sampler.points || s.directions != cfg.sampler.directions {
        r.add(rel, "sample counts differ from the config");
    }
    if s.counts.total_pairs() != s.sampled_points * s.directions {
        r.add(rel, format!("outcome counts sum to {}, expected {}", s.counts.total_pairs(), s.sampled_points * s.directions));
    }
    let mut seen: Vec<usize> = s.positive_point_indices.iter().chain(&s.negative_point_indices).copied().collect();
    seen.sort_unstable();
    if seen != (0..s.sampled_points).collect::<Vec<_>>() || s.negative_points.len() != s.negative_point_indices.len() {
        r.add(rel, "point indices do not partition the samples");
    }
}

fn check_scene(root: &Path, sid: &str, cfg: &RunConfig, objects: &[ObjectModel], sets: &[ObjectGraspSet], r: &mut Report) {
    let rel = stages::scene_path(sid);
    let scene: Scene = match dataset::read_json(&root.join(&rel)) {
        Ok(s) => s,
        Err(e) => return r.add(&rel, e),
    };
    if scene.bin != cfg.bin {
        r.add(&rel, "bin differs from the config");
    }
    let by_id: std::collections::HashMap<&str, &ObjectModel> = objects.iter().map(|o| (o.id.as_str(), o)).collect();
    let mut probes = Vec::new();
    for (i, inst) in scene.instances.iter().enumerate() {
        let Some(o) = by_id.get(inst.object_id.as_str()) else {
            return r.add(&rel, format!("instance {i}: unknown object `{}`", inst.object_id));
        };
        if !inst.pose.is_valid(1e-9) {
            r.add(&rel, format!("instance {i}: pose is not rigid"));
        }
        let mesh = transform_mesh(&o.mesh, &inst.pose);
        if let Some(v) = mesh.vertices().iter().find(|v| !scene.bin.interior_contains(v, 1e-6)) {
            r.add(&rel, format!("instance {i}: vertex {v:?} outside the bin"));
        }
        probes.push(probe_points(&mesh, cfg.scene.probe_spacing));
    }
    let geometry = match SceneGeometry::build(&scene, objects) {
        Ok(g) => g,
        Err(e) => return r.add(&rel, e),
    };
    let pen = max_penetration(&geometry, &probes);
    r.max_penetration = pen;
    if pen > PENETRATION_LIMIT {
        r.add(&rel, format!("objects interpenetrate by {pen:.5} m"));
    }

    let rrel = stages::render_path(sid);
    let points = match stages::read_render(&root.join(&rrel)) {
        Ok(p) => p,
        Err(e) => return r.add(&rrel, e),
    };
    if points.len() != cfg.labeling.cloud_points {
        r.add(&rrel, format!("{} points, expected {}", points.len(), cfg.labeling.cloud_points));
    }
    if let Some(p) = points.iter().find(|p| !scene.bin.interior_contains(p, cfg.labeling.crop_margin + 1e-6)) {
        r.add(&rrel, format!("point {p:?} outside the crop region"));
    }

    let lrel = stages::labels_path(sid);
    let labels: SceneLabels = match dataset::read_json(&root.join(&lrel)) {
        Ok(l) => l,
        Err(e) => return r.add(&lrel, e),
    };
    let crel = stages::cloud_path(sid);
    let cloud = match dataset::read_labeled_cloud(&root.join(&crel)) {
        Ok(c) => c,
        Err(e) => return r.add(&crel, e),
    };
    check_labels(&labels, &geometry, cfg, &lrel, r);
    check_cloud(&cloud, &points, &labels.g_pos, cfg, &crel, r);
    match stages::relabel(&scene, sets, &points, &labels.collided, cfg.labeling.radius) {
        Ok((relabeled, g_pos)) => {
            if g_pos != labels.g_pos {
                r.add(&lrel, "g_pos differs from the grasps left after removing the collided ones");
            }
            compare_bytes(root, &crel, &cloud_to_ply(&relabeled).to_bytes(), r);
        }
        Err(e) => r.add(&lrel, e),
    }

    let trel = stages::targets_path(sid);
    match dataset::read_targets(&root.join(&trel)) {
        Ok(t) => {
            check_targets(&t, &cloud, &labels.g_pos, &cfg.encoding, &trel, r);
            match stages::encode_targets(&cloud, &labels.g_pos, cfg) {
                Ok((again, _)) => compare_bytes(root, &trel, &targets_to_ply(&again).to_bytes(), r),
                Err(e) => r.add(&trel, e),
            }
        }
        Err(e) => r.add(&trel, e),
    }
    let vrel = stages::viz_path(sid);
    if let Err(e) = std::fs::read(root.join(&vrel)).map_err(|e| e.to_string()).and_then(|b| PlyFile::from_bytes(&b).map_err(|e| e.to_string())) {
        r.add(&vrel, e);
    }
}

/// Every kept grasp must pass the full-scene collision check.
fn check_labels(l: &SceneLabels, geometry: &SceneGeometry, cfg: &RunConfig, rel: &str, r: &mut Report) {
    let collided: HashSet<usize> = l.collided.iter().copied().collect();
    if collided.len() != l.collided.len() || l.collided.iter().any(|&i| i >= l.grasps_in_scene) {
        r.add(rel, "collided indices repeat or are out of range");
    }
    if l.g_pos.len() + l.collided.len() != l.grasps_in_scene {
        r.add(rel, "kept and collided grasps do not add up");
    }
    let errors: Vec<String> = l
        .g_pos
        .par_iter()
        .enumerate()
        .filter_map(|(i, sg): (usize, &SceneGrasp)| {
            if let Err(e) = check_grasp(&sg.grasp, &cfg.gripper) {
                return Some(format!("g_pos {i}: {e}"));
            }
            let frame = match grasp_frame(&sg.grasp, &cfg.gripper) {
                Ok(f) => f,
                Err(e) => return Some(format!("g_pos {i}: {e}")),
            };
            let boxes = gripper_boxes(&cfg.gripper, &frame, sg.grasp.width);
            match check_collision_scene(&boxes, geometry, sg.instance, cfg.labeling.collision_margin) {
                Ok(rep) if rep.collided => Some(format!("g_pos {i} collides with the scene")),
                Ok(_) => None,
                Err(e) => Some(format!("g_pos {i}: {e}")),
            }
        })
        .collect();
    r.grasps_rechecked += l.g_pos.len();
    for e in errors {
        r.add(rel, e);
    }
}

fn check_cloud(c: &LabeledCloud, points: &[Vec3], g_pos: &[SceneGrasp], cfg: &RunConfig, rel: &str, r: &mut Report) {
    if c.points != points {
        return r.add(rel, "points differ from the render");
    }
    let wmax = cfg.gripper.max_width as f32 as f64;
    for i in 0..c.len() {
        let bad = match (c.masks[i], &c.labels[i], c.grasp_refs[i]) {
            (PointMask::Positive, Some(l), Some(g)) => {
                if !(l.quality > 0.0) {
                    Some("positive point with Q = 0".to_string())
                } else if g as usize >= g_pos.len() {
                    Some(format!("grasp_ref {g} out of range"))
                } else if l.width > wmax {
                    Some(format!("width {} above the gripper's", l.width))
                } else {
                    let sg = &g_pos[g as usize].grasp;
                    let near = [sg.c1, sg.c2].iter().any(|q| (q - c.points[i]).norm() <= cfg.labeling.radius + 1e-6);
                    (!near).then(|| format!("farther than R from both contacts of grasp {g}"))
                }
            }
            (PointMask::Positive, _, _) => Some("positive point without label or grasp_ref".into()),
            (PointMask::Negative, Some(l), None) => (l.quality < 0.0).then(|| "negative Q".into()),
            (PointMask::Negative, _, _) => Some("negative point with a grasp_ref".into()),
            (PointMask::Unlabeled, None, None) => None,
            (PointMask::Unlabeled, _, _) => Some("unlabeled point with a grasp_ref".into()),
        };
        if let Some(b) = bad {
            r.add(rel, format!("point {i}: {b}"));
            return;
        }
    }
}

fn check_targets(t: &[Option<EncodedGrasp>], c: &LabeledCloud, g_pos: &[SceneGrasp], enc: &EncodingConfig, rel: &str, r: &mut Report) {
    if t.len() != c.len() {
        return r.add(rel, format!("{} targets for {} points", t.len(), c.len()));
    }
    let counts = [enc.center.count, enc.center.count, enc.center.count, enc.width.count, enc.theta1.count, enc.theta2.count, enc.theta3.count];
    for (i, e) in t.iter().enumerate() {
        let Some(e) = e else { continue };
        let fail = |m: String| format!("point {i}: {m}");
        if c.masks[i] != PointMask::Positive {
            return r.add(rel, fail("target on a non-positive point".into()));
        }
        for (f, &n) in e.fields().iter().zip(&counts) {
            if f.bin >= n || !(-0.5..=0.5).contains(&f.res) {
                return r.add(rel, fail(format!("bin {} / residual {} out of range", f.bin, f.res)));
            }
        }
        let Some(sg) = c.grasp_refs[i].and_then(|g| g_pos.get(g as usize)) else {
            return r.add(rel, fail("no grasp to compare with".into()));
        };
        let g = &sg.grasp;
        match decode_grasp(&c.points[i], e, enc) {
            Ok(d) => {
                let err = [
                    (d.center - g.center).amax(),
                    (d.width - g.width).abs(),
                    (d.approach.into_inner() - g.approach.into_inner()).amax(),
                    (d.closing.into_inner() - g.closing.into_inner()).amax().min((d.closing.into_inner() + g.closing.into_inner()).amax()),
                ];
                if err.iter().any(|&x| !(x <= DECODE_TOL)) {
                    return r.add(rel, fail(format!("decoded grasp is off by {err:?}")));
                }
            }
            Err(e) => return r.add(rel, fail(e.to_string())),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn missing_manifest_is_one_violation() {
        let dir = tempfile::tempdir().unwrap();
        let r = validate(dir.path());
        assert_eq!(r.violations.len(), 1);
        assert!(r.violations[0].starts_with("manifest.json"));
    }
}
