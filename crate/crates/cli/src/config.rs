use std::path::{Path, PathBuf};

use densegrasp::camera::{CameraConfig, NoiseModel};
use densegrasp::encoding::EncodingConfig;
use densegrasp::grasp::GripperModel;
use densegrasp::quality::QualityConfig;
use densegrasp::sampler::SamplerConfig;
use densegrasp::scene::{BinModel, SceneConfig};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Paths {
    /// Dataset directory.
    #[serde(default)]
    pub out: Option<PathBuf>,
    /// Library manifest; a procedural library is built when absent.
    #[serde(default)]
    pub library: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LabelingConfig {
    /// Broadcast radius R.
    pub radius: f64,
    /// Gripper inflation for the in-scene collision check.
    pub collision_margin: f64,
    pub cloud_points: usize,
    pub crop_margin: f64,
    /// Drop points closer than this to the bin mesh.
    #[serde(default)]
    pub wall_distance: Option<f64>,
}

impl Default for LabelingConfig {
    fn default() -> Self {
        LabelingConfig {
            radius: 0.005,
            collision_margin: 0.001,
            cloud_points: 16384,
            crop_margin: 0.0,
            wall_distance: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VizConfig {
    pub top_k: usize,
}

impl Default for VizConfig {
    fn default() -> Self {
        VizConfig { top_k: 15 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub seed: u64,
    pub objects: usize,
    pub scenes: usize,
    /// Worker threads; 0 uses every core.
    pub jobs: Option<usize>,
    pub paths: Paths,
    pub gripper: GripperModel,
    pub sampler: SamplerConfig,
    pub quality: QualityConfig,
    pub scene: SceneConfig,
    pub bin: BinModel,
    pub camera: CameraConfig,
    pub labeling: LabelingConfig,
    pub encoding: EncodingConfig,
    pub viz: VizConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: 0,
            objects: 10,
            scenes: 50,
            jobs: None,
            paths: Paths::default(),
            gripper: GripperModel::default(),
            sampler: SamplerConfig::default(),
            quality: QualityConfig::default(),
            scene: SceneConfig::default(),
            bin: BinModel::default(),
            camera: CameraConfig::default(),
            labeling: LabelingConfig::default(),
            encoding: EncodingConfig::default(),
            viz: VizConfig::default(),
        }
    }
}

/// Command-line overrides, applied on top of the config file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub objects: Option<usize>,
    pub scenes: Option<usize>,
    pub seed: Option<u64>,
    pub jobs: Option<usize>,
    pub out: Option<PathBuf>,
    pub gripper_width: Option<f64>,
    pub friction: Option<f64>,
    pub radius: Option<f64>,
    pub no_noise: bool,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<RunConfig, String> {
        let bytes = std::fs::read(path).map_err(|e| format!("{}: {e}", path.display()))?;
        let mut cfg: RunConfig = serde_json::from_slice(&bytes).map_err(|e| format!("{}: {e}", path.display()))?;
        // A relative library path is relative to the config file.
        if let (Some(lib), Some(dir)) = (&cfg.paths.library, path.parent()) {
            if lib.is_relative() {
                cfg.paths.library = Some(dir.join(lib));
            }
        }
        Ok(cfg)
    }

    pub fn apply(&mut self, o: &Overrides) {
        if let Some(v) = o.objects {
            self.objects = v;
        }
        if let Some(v) = o.scenes {
            self.scenes = v;
        }
        if let Some(v) = o.seed {
            self.seed = v;
        }
        if let Some(v) = o.jobs {
            self.jobs = Some(v);
        }
        if let Some(v) = &o.out {
            self.paths.out = Some(v.clone());
        }
        if let Some(w) = o.gripper_width {
            self.gripper.max_width = w;
            // Keep the width bins spanning [0, w].
            self.encoding.width.range = w / 2.0;
            self.encoding.width.unit = w / self.encoding.width.count as f64;
        }
        if let Some(f) = o.friction {
            self.sampler.friction = f;
        }
        if let Some(r) = o.radius {
            self.labeling.radius = r;
        }
        if o.no_noise {
            self.camera.noise = NoiseModel::none();
        }
    }

    pub fn out_dir(&self) -> PathBuf {
        self.paths.out.clone().unwrap_or_else(|| PathBuf::from("dataset"))
    }

    /// Checks every group before any work starts.
    pub fn validate(&self) -> Result<(), String> {
        let group = |name: &str, r: Result<(), String>| r.map_err(|e| format!("{name}: {e}"));
        group("gripper", self.gripper.validate().map_err(|e| e.to_string()))?;
        group("sampler", self.sampler.validate())?;
        group("quality", self.quality.validate())?;
        group("scene", self.scene.validate())?;
        group("bin", BinModel::new(self.bin.extents, self.bin.wall_thickness).map(|_| ()).map_err(|e| e.to_string()))?;
        group("camera", self.camera.validate())?;
        group("encoding", self.encoding.validate().map_err(|e| e.to_string()))?;
        if self.objects == 0 {
            return Err("objects must be >= 1".into());
        }
        let l = &self.labeling;
        if !(l.radius > 0.0 && l.radius.is_finite()) {
            return Err(format!("labeling: radius must be > 0, got {}", l.radius));
        }
        if !(l.collision_margin >= 0.0 && l.crop_margin >= 0.0) {
            return Err("labeling: collision_margin and crop_margin must be >= 0".into());
        }
        if l.wall_distance.is_some_and(|d| !(d > 0.0)) {
            return Err("labeling: wall_distance must be > 0".into());
        }
        if l.cloud_points == 0 {
            return Err("labeling: cloud_points must be > 0".into());
        }
        let top = 2.0 * self.encoding.width.range;
        if top + 1e-12 < self.gripper.max_width {
            return Err(format!("encoding: width bins reach {top} m but the gripper opens to {} m", self.gripper.max_width));
        }
        // Contacts sit at most half a width from the grasp center, and the
        // broadcast adds R on top.
        let reach = self.gripper.max_width / 2.0 + l.radius;
        if reach > self.encoding.center.range {
            return Err(format!("encoding: center range {} m is smaller than ω/2 + R = {reach} m", self.encoding.center.range));
        }
        if let Some(lib) = &self.paths.library {
            if !lib.is_file() {
                return Err(format!("library manifest {} not found", lib.display()));
            }
        }
        Ok(())
    }

    /// The config as recorded in the manifest: output location and thread
    /// count do not affect payloads and are left out.
    pub fn snapshot(&self) -> serde_json::Value {
        let mut c = self.clone();
        c.paths.out = None;
        c.jobs = None;
        serde_json::to_value(&c).expect("config serializes")
    }
}
