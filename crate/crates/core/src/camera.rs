//! Pinhole depth rendering by raycasting, back-projection to a world-frame
//! cloud, bin cropping and fixed-size resampling.

use nalgebra::{Matrix3, Unit, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::geom::{mix_seed, Bvh, Pose, Vec3};
use crate::scene::{BinModel, SceneGeometry};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CameraIntrinsics {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: usize,
    pub height: usize,
}

impl Default for CameraIntrinsics {
    fn default() -> Self {
        CameraIntrinsics {
            fx: 600.0,
            fy: 600.0,
            cx: 320.0,
            cy: 240.0,
            width: 640,
            height: 480,
        }
    }
}

impl CameraIntrinsics {
    pub fn validate(&self) -> Result<(), String> {
        if !(self.fx > 0.0 && self.fy > 0.0 && self.fx.is_finite() && self.fy.is_finite()) {
            return Err("focal lengths must be > 0".into());
        }
        if !(self.cx >= 0.0 && self.cx < self.width as f64 && self.cy >= 0.0 && self.cy < self.height as f64) {
            return Err("principal point must lie inside the image".into());
        }
        Ok(())
    }

    /// Camera-frame ray through pixel `(u, v)` with unit z component.
    pub fn ray(&self, u: f64, v: f64) -> Vec3 {
        Vector3::new((u - self.cx) / self.fx, (v - self.cy) / self.fy, 1.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseModel {
    /// Gaussian depth sigma in meters.
    pub sigma: f64,
    pub dropout: f64,
}

impl Default for NoiseModel {
    fn default() -> Self {
        NoiseModel {
            sigma: 0.001,
            dropout: 0.005,
        }
    }
}

impl NoiseModel {
    pub fn none() -> Self {
        NoiseModel { sigma: 0.0, dropout: 0.0 }
    }

    pub fn validate(&self) -> Result<(), String> {
        if !(self.sigma >= 0.0 && self.sigma.is_finite()) {
            return Err(format!("noise sigma must be >= 0, got {}", self.sigma));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(format!("dropout must be in [0, 1), got {}", self.dropout));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CameraConfig {
    pub intrinsics: CameraIntrinsics,
    /// Height of the optical center above the bin floor.
    pub height: f64,
    pub near: f64,
    pub far: f64,
    pub noise: NoiseModel,
}

impl Default for CameraConfig {
    fn default() -> Self {
        CameraConfig {
            intrinsics: CameraIntrinsics::default(),
            height: 1.3,
            near: 0.1,
            far: 3.0,
            noise: NoiseModel::default(),
        }
    }
}

impl CameraConfig {
    pub fn validate(&self) -> Result<(), String> {
        self.intrinsics.validate()?;
        self.noise.validate()?;
        if !(self.near > 0.0 && self.far > self.near) {
            return Err(format!("need 0 < near < far, got {} and {}", self.near, self.far));
        }
        Ok(())
    }

    pub fn pose(&self) -> Pose {
        top_down_pose(self.height)
    }
}

/// Camera above the origin looking along world −z. Camera axes follow the
/// usual image convention: x right, y down, z forward.
pub fn top_down_pose(height: f64) -> Pose {
    Pose::new(
        Matrix3::new(1.0, 0.0, 0.0, 0.0, -1.0, 0.0, 0.0, 0.0, -1.0),
        Vector3::new(0.0, 0.0, height),
    )
}

/// Row-major depth along the optical axis; invalid pixels hold 0.
#[derive(Debug, Clone, PartialEq)]
pub struct DepthImage {
    pub width: usize,
    pub height: usize,
    pub depth: Vec<f64>,
}

impl DepthImage {
    pub fn get(&self, u: usize, v: usize) -> f64 {
        self.depth[v * self.width + u]
    }

    pub fn valid_count(&self) -> usize {
        self.depth.iter().filter(|&&d| d > 0.0).count()
    }
}

pub fn render_depth(geometry: &SceneGeometry, cam: &CameraConfig, camera_pose: &Pose, seed: u64) -> DepthImage {
    let k = &cam.intrinsics;
    let origin = camera_pose.translation;
    let mut depth: Vec<f64> = (0..k.height)
        .into_par_iter()
        .flat_map_iter(|v| {
            (0..k.width).map(move |u| {
                let ray = k.ray(u as f64, v as f64);
                let scale = ray.norm();
                let dir = Unit::new_normalize(camera_pose.rotation * ray);
                match geometry.raycast(&origin, &dir, 0.0, cam.far * scale) {
                    Some((h, _)) => {
                        let d = h.t / scale;
                        if d > cam.near && d < cam.far {
                            d
                        } else {
                            0.0
                        }
                    }
                    None => 0.0,
                }
            })
        })
        .collect();
    let noise = &cam.noise;
    if noise.sigma > 0.0 || noise.dropout > 0.0 {
        let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(seed, 0xDE97));
        for d in depth.iter_mut() {
            let drop = rng.random::<f64>() < noise.dropout;
            let n: f64 = rng.sample(StandardNormal);
            if *d == 0.0 {
                continue;
            }
            let noisy = *d + noise.sigma * n;
            *d = if drop || !(noisy > cam.near && noisy < cam.far) { 0.0 } else { noisy };
        }
    }
    DepthImage {
        width: k.width,
        height: k.height,
        depth,
    }
}

/// Valid pixels back-projected to world points, row-major.
pub fn depth_to_cloud(image: &DepthImage, intrinsics: &CameraIntrinsics, camera_pose: &Pose) -> Vec<Vec3> {
    let mut out = Vec::with_capacity(image.valid_count());
    for v in 0..image.height {
        for u in 0..image.width {
            let d = image.get(u, v);
            if d > 0.0 {
                out.push(camera_pose.transform_point(&(intrinsics.ray(u as f64, v as f64) * d)));
            }
        }
    }
    out
}

/// Pixel coordinates and depth of a world point.
pub fn project(p: &Vec3, intrinsics: &CameraIntrinsics, camera_pose: &Pose) -> (f64, f64, f64) {
    let c = camera_pose.inverse().transform_point(p);
    (intrinsics.fx * c.x / c.z + intrinsics.cx, intrinsics.fy * c.y / c.z + intrinsics.cy, c.z)
}

/// Keeps points inside the bin interior grown by `margin` (closed
/// intervals). With `wall_distance`, points that close to the bin mesh are
/// dropped as well.
pub fn crop_to_bin(cloud: &[Vec3], bin: &BinModel, margin: f64, wall_distance: Option<f64>) -> Vec<Vec3> {
    let walls = wall_distance.map(|d| (Bvh::build(&bin.mesh), d));
    cloud
        .iter()
        .filter(|p| bin.interior_contains(p, margin))
        .filter(|p| match &walls {
            Some((bvh, d)) => bvh.closest_point(p, *d).is_none(),
            None => true,
        })
        .copied()
        .collect()
}

/// Exactly `target` points. Larger clouds are subsampled without
/// replacement, keeping input order. Smaller ones keep every point and
/// are topped up with random repeats, returning `true`.
pub fn downsample(cloud: &[Vec3], target: usize, seed: u64) -> (Vec<Vec3>, bool) {
    let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(seed, 0xD5));
    if target == 0 {
        return (Vec::new(), false);
    }
    if cloud.len() >= target {
        let mut idx = rand::seq::index::sample(&mut rng, cloud.len(), target).into_vec();
        idx.sort_unstable();
        return (idx.into_iter().map(|i| cloud[i]).collect(), false);
    }
    if cloud.is_empty() {
        return (Vec::new(), true);
    }
    let mut out = cloud.to_vec();
    out.extend((cloud.len()..target).map(|_| cloud[rng.random_range(0..cloud.len())]));
    (out, true)
}
