use std::fmt::Write;

use serde::{Deserialize, Serialize};

use crate::labeler::{LabeledCloud, PointMask};

pub const WIDTH_BINS: usize = 8;
pub const WIDTH_BIN_SIZE: f64 = 0.005;

/// Counts of widths in `[0, 5 mm)`, `[5, 10 mm)` … `[35, 40 mm]`, plus the
/// number outside `[0, 40 mm]`. The last bin is closed. A width within
/// 1e-9 bin-widths of an edge counts in the upper bin, so decimal edges like
/// 15 mm are not split by rounding.
pub fn width_histogram(widths: impl IntoIterator<Item = f64>) -> ([usize; WIDTH_BINS], usize) {
    let mut h = [0; WIDTH_BINS];
    let mut outside = 0;
    let top = WIDTH_BIN_SIZE * WIDTH_BINS as f64;
    for w in widths {
        if !(w >= 0.0 && w <= top * (1.0 + 1e-12)) {
            outside += 1;
            continue;
        }
        let b = ((w / WIDTH_BIN_SIZE + 1e-9).floor() as usize).min(WIDTH_BINS - 1);
        h[b] += 1;
    }
    (h, outside)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneStats {
    pub scene: String,
    pub positive_grasps: usize,
    pub collided_grasps: usize,
    pub unsuitable_points: usize,
    pub points: usize,
    pub mask_positive: usize,
    pub mask_negative: usize,
    pub mask_unlabeled: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QualitySummary {
    pub count: usize,
    pub min: f64,
    pub mean: f64,
    pub median: f64,
    pub max: f64,
    /// Ten equal bins over `[0, max]`.
    pub histogram: Vec<usize>,
}

impl QualitySummary {
    fn of(mut q: Vec<f64>) -> Self {
        if q.is_empty() {
            return QualitySummary {
                count: 0,
                min: 0.0,
                mean: 0.0,
                median: 0.0,
                max: 0.0,
                histogram: vec![0; 10],
            };
        }
        q.sort_by(f64::total_cmp);
        let n = q.len();
        let max = q[n - 1];
        let median = if n % 2 == 1 { q[n / 2] } else { (q[n / 2 - 1] + q[n / 2]) / 2.0 };
        let mut histogram = vec![0; 10];
        for &v in &q {
            let b = if max > 0.0 { ((v / max) * 10.0).floor() as usize } else { 0 };
            histogram[b.min(9)] += 1;
        }
        QualitySummary {
            count: n,
            min: q[0],
            mean: q.iter().sum::<f64>() / n as f64,
            median,
            max,
            histogram,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetStats {
    /// Bin edges in meters.
    pub width_edges: Vec<f64>,
    pub width_histogram: [usize; WIDTH_BINS],
    pub widths_out_of_range: usize,
    pub max_width: f64,
    pub total_positive_grasps: usize,
    pub quality: QualitySummary,
    pub mask_fractions: MaskFractions,
    pub scenes: Vec<SceneStats>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MaskFractions {
    pub positive: f64,
    pub negative: f64,
    pub unlabeled: f64,
}

/// One scene's inputs: the collision-free grasp widths and qualities, the
/// collided grasp count, the unsuitable point count and the labeled cloud.
pub struct SceneInput<'a> {
    pub id: &'a str,
    pub widths: Vec<f64>,
    pub qualities: Vec<f64>,
    pub collided: usize,
    pub unsuitable: usize,
    pub cloud: &'a LabeledCloud,
}

pub fn dataset_stats(scenes: &[SceneInput]) -> DatasetStats {
    let widths: Vec<f64> = scenes.iter().flat_map(|s| s.widths.iter().copied()).collect();
    let (width_histogram, widths_out_of_range) = width_histogram(widths.iter().copied());
    let mut per = Vec::new();
    let (mut pos, mut neg, mut unl) = (0usize, 0usize, 0usize);
    for s in scenes {
        let st = SceneStats {
            scene: s.id.to_string(),
            positive_grasps: s.widths.len(),
            collided_grasps: s.collided,
            unsuitable_points: s.unsuitable,
            points: s.cloud.len(),
            mask_positive: s.cloud.count(PointMask::Positive),
            mask_negative: s.cloud.count(PointMask::Negative),
            mask_unlabeled: s.cloud.count(PointMask::Unlabeled),
        };
        pos += st.mask_positive;
        neg += st.mask_negative;
        unl += st.mask_unlabeled;
        per.push(st);
    }
    let total = (pos + neg + unl).max(1) as f64;
    DatasetStats {
        width_edges: (0..=WIDTH_BINS).map(|i| i as f64 * WIDTH_BIN_SIZE).collect(),
        width_histogram,
        widths_out_of_range,
        max_width: widths.iter().copied().fold(0.0, f64::max),
        total_positive_grasps: widths.len(),
        quality: QualitySummary::of(scenes.iter().flat_map(|s| s.qualities.iter().copied()).collect()),
        mask_fractions: MaskFractions {
            positive: pos as f64 / total,
            negative: neg as f64 / total,
            unlabeled: unl as f64 / total,
        },
        scenes: per,
    }
}

impl DatasetStats {
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "grasp width histogram ({} positive grasps)", self.total_positive_grasps);
        let peak = self.width_histogram.iter().copied().max().unwrap_or(0).max(1);
        for (i, &c) in self.width_histogram.iter().enumerate() {
            let (lo, hi) = (self.width_edges[i] * 100.0, self.width_edges[i + 1] * 100.0);
            let close = if i + 1 == WIDTH_BINS { ']' } else { ')' };
            let bar = "#".repeat((c * 40).div_ceil(peak));
            let _ = writeln!(s, "  [{lo:.1}, {hi:.1}{close} cm  {c:>8}  {bar}");
        }
        if self.widths_out_of_range > 0 {
            let _ = writeln!(s, "  out of range: {}", self.widths_out_of_range);
        }
        let _ = writeln!(s, "max width: {:.4} m", self.max_width);
        let q = &self.quality;
        let _ = writeln!(s, "quality: n={} min={:.4} median={:.4} mean={:.4} max={:.4}", q.count, q.min, q.median, q.mean, q.max);
        let m = &self.mask_fractions;
        let _ = writeln!(s, "mask coverage: positive {:.3}  negative {:.3}  unlabeled {:.3}", m.positive, m.negative, m.unlabeled);
        let _ = writeln!(s, "{:<14} {:>9} {:>9} {:>10} {:>8} {:>8} {:>8} {:>8}", "scene", "positive", "collided", "unsuitable", "points", "m=1", "m=0", "unlab");
        for sc in &self.scenes {
            let _ = writeln!(
                s,
                "{:<14} {:>9} {:>9} {:>10} {:>8} {:>8} {:>8} {:>8}",
                sc.scene, sc.positive_grasps, sc.collided_grasps, sc.unsuitable_points, sc.points, sc.mask_positive, sc.mask_negative, sc.mask_unlabeled
            );
        }
        s
    }
}
