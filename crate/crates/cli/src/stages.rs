//! Pipeline stages. Each reads the previous stage's files under the dataset
//! root and writes its own; nothing is carried in memory between stages.

use std::path::Path;

use densegrasp::camera::{crop_to_bin, depth_to_cloud, downsample, render_depth};
use densegrasp::dataset::{self, DatasetManifest, PointTargets, SceneInput, Splits};
use densegrasp::encoding::encode_grasp;
use densegrasp::geom::{mix_seed, Vec3};
use densegrasp::labeler::{broadcast_labels, partition_grasps, scene_grasp_filter, LabeledCloud, PointMask};
use densegrasp::object::ObjectModel;
use densegrasp::ply::{Element, PlyFile, ScalarType};
use densegrasp::sampler::{generate_grasps, ObjectGraspSet};
use densegrasp::scene::{compose_scene, transform_annotations, Scene, SceneGeometry, SceneGrasp};
use nalgebra::Vector3;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::RunConfig;
use crate::library::{build_library, load_library, LIBRARY_FILE};
use crate::seeds::{sub_seed, DOWNSAMPLE, RENDER};

pub const MANIFEST_FILE: &str = "manifest.json";
pub const SPLITS_FILE: &str = "splits.json";
pub const STATS_JSON: &str = "stats.json";
pub const STATS_TEXT: &str = "stats.txt";

#[derive(Debug)]
pub enum CliError {
    /// Bad configuration or missing inputs, found before any work.
    Config(String),
    /// Per-item failures or invariant violations.
    Failed(Vec<String>),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Failed(_) => 1,
        }
    }
}

pub type StageResult = Result<(), CliError>;

pub fn config_err(e: impl ToString) -> CliError {
    CliError::Config(e.to_string())
}

pub fn grasps_path(id: &str) -> String {
    format!("grasps/{id}.json")
}
pub fn scene_path(id: &str) -> String {
    format!("scenes/{id}.json")
}
pub fn render_path(id: &str) -> String {
    format!("renders/{id}.ply")
}
pub fn cloud_path(id: &str) -> String {
    format!("clouds/{id}.ply")
}
pub fn labels_path(id: &str) -> String {
    format!("labels/{id}.json")
}
pub fn targets_path(id: &str) -> String {
    format!("targets/{id}.ply")
}
pub fn viz_path(id: &str) -> String {
    format!("viz/{id}.ply")
}

pub fn scene_ids(cfg: &RunConfig) -> Vec<String> {
    (0..cfg.scenes).map(|i| format!("scene_{i:04}")).collect()
}

/// Runs `f` over every item in parallel and gathers per-item failures.
fn for_each_item<T: Sync>(items: &[T], name: impl Fn(&T) -> String + Sync, f: impl Fn(&T) -> Result<(), String> + Sync) -> StageResult {
    let errors: Vec<String> = items
        .par_iter()
        .filter_map(|it| f(it).err().map(|e| format!("{}: {e}", name(it))))
        .collect();
    for e in &errors {
        log::error!("{e}");
    }
    if errors.is_empty() {
        Ok(())
    } else {
        Err(CliError::Failed(errors))
    }
}

fn require(path: &Path) -> StageResult {
    if path.is_file() {
        Ok(())
    } else {
        Err(CliError::Config(format!("missing input {}", path.display())))
    }
}

fn library(root: &Path) -> Result<Vec<ObjectModel>, CliError> {
    load_library(root).map(|(_, o)| o).map_err(CliError::Config)
}

pub fn load_grasp_sets(root: &Path, objects: &[ObjectModel]) -> Result<Vec<ObjectGraspSet>, String> {
    objects
        .iter()
        .map(|o| dataset::read_json(&root.join(grasps_path(&o.id))).map_err(|e| e.to_string()))
        .collect()
}

pub fn gen_grasps(cfg: &RunConfig, root: &Path) -> StageResult {
    build_library(cfg, root).map_err(CliError::Config)?;
    let objects = library(root)?;
    log::info!("generating grasps for {} objects", objects.len());
    for_each_item(
        &objects,
        |o| o.id.clone(),
        |o| {
            let mut sampler = cfg.sampler;
            sampler.seed = sub_seed(cfg.seed, &o.id);
            sampler.friction = o.friction;
            let set = generate_grasps(o, &cfg.gripper, &sampler, &cfg.quality);
            log::info!("{}: {} positives after NMS, {} unsuitable points", o.id, set.positives.len(), set.negative_points.len());
            dataset::write_json(&root.join(grasps_path(&o.id)), &set).map(|_| ()).map_err(|e| e.to_string())
        },
    )
}

/// Train scenes draw from train objects and test scenes from test objects;
/// an empty side falls back to the whole library.
pub fn splits(cfg: &RunConfig, object_ids: &[String]) -> Splits {
    let (train_objects, test_objects) = dataset::split_ids(object_ids, sub_seed(cfg.seed, "split/objects"));
    let (train_scenes, test_scenes) = dataset::split_ids(&scene_ids(cfg), sub_seed(cfg.seed, "split/scenes"));
    Splits {
        train_objects,
        test_objects,
        train_scenes,
        test_scenes,
    }
}

pub fn compose(cfg: &RunConfig, root: &Path) -> StageResult {
    let objects = library(root)?;
    let ids: Vec<String> = objects.iter().map(|o| o.id.clone()).collect();
    let sp = splits(cfg, &ids);
    dataset::write_json(&root.join(SPLITS_FILE), &sp).map_err(config_err)?;
    let pool = |names: &[String]| -> Vec<ObjectModel> {
        let p: Vec<ObjectModel> = objects.iter().filter(|o| names.contains(&o.id)).cloned().collect();
        if p.is_empty() {
            objects.clone()
        } else {
            p
        }
    };
    let (train, test) = (pool(&sp.train_objects), pool(&sp.test_objects));
    let scenes = scene_ids(cfg);
    log::info!("composing {} scenes", scenes.len());
    for_each_item(
        &scenes,
        |s| s.clone(),
        |sid| {
            let lib = if sp.test_scenes.contains(sid) { &test } else { &train };
            let seed = sub_seed(cfg.seed, sid);
            let m = cfg.scene.draw_count(seed);
            let scene = compose_scene(lib, m, &cfg.bin, seed, &cfg.scene).map_err(|e| e.to_string())?;
            if !scene.is_complete() {
                log::warn!("{sid}: placed {} of {} objects", scene.instances.len(), scene.requested);
            }
            dataset::write_json(&root.join(scene_path(sid)), &scene).map(|_| ()).map_err(|e| e.to_string())
        },
    )
}

pub fn read_scene(root: &Path, sid: &str) -> Result<Scene, String> {
    dataset::read_json(&root.join(scene_path(sid))).map_err(|e| e.to_string())
}

fn points_to_ply(points: &[Vec3], upsampled: bool) -> PlyFile {
    let col = |k: usize| points.iter().map(|p| p[k]).collect();
    PlyFile {
        comments: vec![format!("densegrasp render upsampled={upsampled}")],
        elements: vec![Element::new("vertex", points.len())
            .scalar("x", ScalarType::Float, col(0))
            .scalar("y", ScalarType::Float, col(1))
            .scalar("z", ScalarType::Float, col(2))],
    }
}

pub fn read_render(path: &Path) -> Result<Vec<Vec3>, String> {
    let bytes = dataset::read_bytes(path).map_err(|e| e.to_string())?;
    let file = PlyFile::from_bytes(&bytes).map_err(|e| format!("{}: {e}", path.display()))?;
    let v = file.element("vertex").ok_or_else(|| format!("{}: no vertex element", path.display()))?;
    let c = |n: &str| v.values(n).ok_or_else(|| format!("{}: no `{n}` property", path.display()));
    let (x, y, z) = (c("x")?, c("y")?, c("z")?);
    Ok((0..v.count).map(|i| Vector3::new(x[i], y[i], z[i])).collect())
}

/// Rounds through `f32`, the precision clouds are stored at, so every
/// later stage sees the same coordinates as a reader of the file.
fn quantize(points: &mut [Vec3]) {
    for p in points {
        p.apply(|v| *v = *v as f32 as f64);
    }
}

pub fn render(cfg: &RunConfig, root: &Path) -> StageResult {
    let objects = library(root)?;
    let scenes = scene_ids(cfg);
    for s in &scenes {
        require(&root.join(scene_path(s)))?;
    }
    let pose = cfg.camera.pose();
    log::info!("rendering {} scenes", scenes.len());
    for_each_item(
        &scenes,
        |s| s.clone(),
        |sid| {
            let scene = read_scene(root, sid)?;
            let geometry = SceneGeometry::build(&scene, &objects).map_err(|e| e.to_string())?;
            let image = render_depth(&geometry, &cfg.camera, &pose, mix_seed(scene.seed, RENDER));
            let raw = depth_to_cloud(&image, &cfg.camera.intrinsics, &pose);
            let cropped = crop_to_bin(&raw, &scene.bin, cfg.labeling.crop_margin, cfg.labeling.wall_distance);
            let (mut points, upsampled) = downsample(&cropped, cfg.labeling.cloud_points, mix_seed(scene.seed, DOWNSAMPLE));
            if upsampled {
                log::warn!("{sid}: {} cropped points, upsampled to {}", cropped.len(), points.len());
            }
            quantize(&mut points);
            let bytes = points_to_ply(&points, upsampled).to_bytes();
            dataset::atomic_write(&root.join(render_path(sid)), &bytes).map_err(|e| e.to_string())
        },
    )
}

/// Per-scene grasp bookkeeping written next to the labeled cloud.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SceneLabels {
    pub scene: String,
    /// Object positives moved into the scene.
    pub grasps_in_scene: usize,
    /// Indices of those that collided with the scene.
    pub collided: Vec<usize>,
    /// Pooled unsuitable points `p^F`.
    pub unsuitable_points: usize,
    /// Collision-free grasps; positive points refer to these by index.
    pub g_pos: Vec<SceneGrasp>,
}

/// Labels from stored collision verdicts. Shared by `label` and `validate`.
pub fn relabel(scene: &Scene, sets: &[ObjectGraspSet], points: &[Vec3], collided: &[usize], radius: f64) -> Result<(LabeledCloud, Vec<SceneGrasp>), String> {
    let ann = transform_annotations(scene, sets).map_err(|e| e.to_string())?;
    let mut verdicts = vec![false; ann.grasps.len()];
    for &i in collided {
        *verdicts.get_mut(i).ok_or_else(|| format!("collided index {i} out of range"))? = true;
    }
    let f = partition_grasps(&ann, &verdicts);
    Ok((broadcast_labels(points, &f.p_pos, &f.p_neg, radius), f.g_pos))
}

pub fn label(cfg: &RunConfig, root: &Path) -> StageResult {
    let objects = library(root)?;
    let scenes = scene_ids(cfg);
    for s in &scenes {
        require(&root.join(scene_path(s)))?;
        require(&root.join(render_path(s)))?;
    }
    let sets = load_grasp_sets(root, &objects).map_err(CliError::Config)?;
    log::info!("labeling {} scenes", scenes.len());
    for_each_item(
        &scenes,
        |s| s.clone(),
        |sid| {
            let scene = read_scene(root, sid)?;
            let geometry = SceneGeometry::build(&scene, &objects).map_err(|e| e.to_string())?;
            let ann = transform_annotations(&scene, &sets).map_err(|e| e.to_string())?;
            let filtered = scene_grasp_filter(&geometry, &ann, &cfg.gripper, cfg.labeling.collision_margin).map_err(|e| e.to_string())?;
            let points = read_render(&root.join(render_path(sid)))?;
            let cloud = broadcast_labels(&points, &filtered.p_pos, &filtered.p_neg, cfg.labeling.radius);
            log::info!(
                "{sid}: {} of {} grasps collision-free, {} positive points",
                filtered.g_pos.len(),
                ann.grasps.len(),
                cloud.count(PointMask::Positive)
            );
            let labels = SceneLabels {
                scene: sid.clone(),
                grasps_in_scene: ann.grasps.len(),
                collided: filtered.collided,
                unsuitable_points: ann.negative_points.len(),
                g_pos: filtered.g_pos,
            };
            dataset::write_labeled_cloud(&root.join(cloud_path(sid)), &cloud).map_err(|e| e.to_string())?;
            dataset::write_json(&root.join(labels_path(sid)), &labels).map(|_| ()).map_err(|e| e.to_string())
        },
    )
}

pub fn read_labels(root: &Path, sid: &str) -> Result<SceneLabels, String> {
    dataset::read_json(&root.join(labels_path(sid))).map_err(|e| e.to_string())
}

/// Targets for every positive point. Grasps approaching from below the
/// horizontal fall outside the elevation range and get no target.
pub fn encode_targets(cloud: &LabeledCloud, g_pos: &[SceneGrasp], cfg: &RunConfig) -> Result<(PointTargets, usize), String> {
    let mut skipped = 0;
    let mut out = Vec::with_capacity(cloud.len());
    for i in 0..cloud.len() {
        if cloud.masks[i] != PointMask::Positive {
            out.push(None);
            continue;
        }
        let r = cloud.grasp_refs[i].ok_or_else(|| format!("positive point {i} has no grasp ref"))? as usize;
        let g = &g_pos.get(r).ok_or_else(|| format!("point {i}: grasp ref {r} out of range"))?.grasp;
        if g.approach.z > 0.0 {
            skipped += 1;
            out.push(None);
            continue;
        }
        let e = encode_grasp(&cloud.points[i], &g.center, &g.approach, &g.closing, g.width, &cfg.encoding).map_err(|e| format!("point {i}: {e}"))?;
        out.push(Some(e));
    }
    Ok((out, skipped))
}

pub fn encode(cfg: &RunConfig, root: &Path) -> StageResult {
    let scenes = scene_ids(cfg);
    for s in &scenes {
        require(&root.join(cloud_path(s)))?;
        require(&root.join(labels_path(s)))?;
    }
    for_each_item(
        &scenes,
        |s| s.clone(),
        |sid| {
            let cloud = dataset::read_labeled_cloud(&root.join(cloud_path(sid))).map_err(|e| e.to_string())?;
            let labels = read_labels(root, sid)?;
            let (targets, skipped) = encode_targets(&cloud, &labels.g_pos, cfg)?;
            if skipped > 0 {
                log::info!("{sid}: {skipped} positive points approach from below, left without targets");
            }
            dataset::write_targets(&root.join(targets_path(sid)), &targets).map(|_| ()).map_err(|e| e.to_string())
        },
    )
}

pub fn compute_stats(cfg: &RunConfig, root: &Path) -> Result<dataset::DatasetStats, String> {
    let scenes = scene_ids(cfg);
    let loaded: Vec<(SceneLabels, LabeledCloud)> = scenes
        .par_iter()
        .map(|sid| {
            let cloud = dataset::read_labeled_cloud(&root.join(cloud_path(sid))).map_err(|e| e.to_string())?;
            Ok((read_labels(root, sid)?, cloud))
        })
        .collect::<Result<_, String>>()?;
    let inputs: Vec<SceneInput> = loaded
        .iter()
        .map(|(l, c)| SceneInput {
            id: &l.scene,
            widths: l.g_pos.iter().map(|g| g.grasp.width).collect(),
            qualities: l.g_pos.iter().map(|g| g.grasp.quality).collect(),
            collided: l.collided.len(),
            unsuitable: l.unsuitable_points,
            cloud: c,
        })
        .collect();
    Ok(dataset::dataset_stats(&inputs))
}

pub fn stats(cfg: &RunConfig, root: &Path) -> StageResult {
    for s in scene_ids(cfg) {
        require(&root.join(cloud_path(&s)))?;
        require(&root.join(labels_path(&s)))?;
    }
    let st = compute_stats(cfg, root).map_err(|e| CliError::Failed(vec![e]))?;
    let fail = |e: dataset::DatasetError| CliError::Failed(vec![e.to_string()]);
    dataset::write_json(&root.join(STATS_JSON), &st).map_err(fail)?;
    let text = st.to_text();
    dataset::atomic_write(&root.join(STATS_TEXT), text.as_bytes()).map_err(fail)?;
    print!("{text}");
    Ok(())
}

pub fn export_viz(cfg: &RunConfig, root: &Path) -> StageResult {
    let objects = library(root)?;
    let sets = load_grasp_sets(root, &objects).map_err(CliError::Config)?;
    let write = |id: &str, file: PlyFile| dataset::atomic_write(&root.join(viz_path(id)), &file.to_bytes()).map_err(|e| e.to_string());
    for_each_item(
        &objects.iter().zip(&sets).collect::<Vec<_>>(),
        |(o, _)| o.id.clone(),
        |(o, set)| {
            let shell = LabeledCloud::unlabeled(o.mesh.vertices().to_vec());
            write(&o.id, dataset::export_viz(Some(&shell), &set.positives, cfg.viz.top_k, &cfg.gripper))
        },
    )?;
    let scenes = scene_ids(cfg);
    for s in &scenes {
        require(&root.join(cloud_path(s)))?;
        require(&root.join(labels_path(s)))?;
    }
    for_each_item(
        &scenes,
        |s| s.clone(),
        |sid| {
            let cloud = dataset::read_labeled_cloud(&root.join(cloud_path(sid))).map_err(|e| e.to_string())?;
            let grasps: Vec<_> = read_labels(root, sid)?.g_pos.iter().map(|g| g.grasp).collect();
            write(sid, dataset::export_viz(Some(&cloud), &grasps, cfg.viz.top_k, &cfg.gripper))
        },
    )
}

/// Every payload path the config implies, in a fixed order.
pub fn expected_files(cfg: &RunConfig, object_ids: &[String]) -> Vec<String> {
    let mut v = vec![LIBRARY_FILE.to_string(), SPLITS_FILE.to_string()];
    for id in object_ids {
        v.push(format!("meshes/{id}.ply"));
        v.push(grasps_path(id));
        v.push(viz_path(id));
    }
    for s in scene_ids(cfg) {
        v.extend([scene_path(&s), render_path(&s), cloud_path(&s), labels_path(&s), targets_path(&s), viz_path(&s)]);
    }
    v.extend([STATS_JSON.to_string(), STATS_TEXT.to_string()]);
    v
}

pub fn object_ids(root: &Path) -> Vec<String> {
    dataset::read_json::<dataset::LibraryManifest>(&root.join(LIBRARY_FILE))
        .map(|m| m.objects.into_iter().map(|o| o.id).collect())
        .unwrap_or_default()
}

/// Records checksums of every present payload file.
pub fn write_manifest(cfg: &RunConfig, root: &Path) -> StageResult {
    let ids = object_ids(root);
    let mut files = std::collections::BTreeMap::new();
    for rel in expected_files(cfg, &ids) {
        let path = root.join(&rel);
        if path.is_file() {
            let bytes = dataset::read_bytes(&path).map_err(|e| CliError::Failed(vec![e.to_string()]))?;
            files.insert(rel, dataset::checksum_hex(&bytes));
        }
    }
    let splits = dataset::read_json(&root.join(SPLITS_FILE)).unwrap_or_else(|_| splits(cfg, &ids));
    let m = DatasetManifest {
        tool_version: env!("CARGO_PKG_VERSION").to_string(),
        seed: cfg.seed,
        config: cfg.snapshot(),
        splits,
        files,
    };
    dataset::write_json(&root.join(MANIFEST_FILE), &m).map(|_| ()).map_err(|e| CliError::Failed(vec![e.to_string()]))
}

pub fn read_manifest(root: &Path) -> Result<DatasetManifest, dataset::DatasetError> {
    dataset::read_json(&root.join(MANIFEST_FILE))
}

pub fn pipeline(cfg: &RunConfig, root: &Path) -> StageResult {
    type Stage = fn(&RunConfig, &Path) -> StageResult;
    let stages: [(&str, Stage); 7] = [
        ("gen-grasps", gen_grasps),
        ("compose", compose),
        ("render", render),
        ("label", label),
        ("encode", encode),
        ("stats", stats),
        ("export-viz", export_viz),
    ];
    for (name, stage) in stages {
        let t = std::time::Instant::now();
        stage(cfg, root)?;
        log::info!("{name} done in {:.1} s", t.elapsed().as_secs_f64());
    }
    write_manifest(cfg, root)
}
