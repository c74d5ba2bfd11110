//! Colored PLY export: mask-colored points plus gripper wireframes colored
//! on a red-to-green quality ramp.

use crate::collision::gripper_boxes;
use crate::grasp::{grasp_frame, Grasp, GripperModel};
use crate::labeler::{LabeledCloud, PointMask};
use crate::ply::{Element, PlyFile, ScalarType};

pub const POSITIVE: [u8; 3] = [135, 206, 250];
pub const NEGATIVE_COLLISION: [u8; 3] = [0, 0, 139];
pub const UNSUITABLE: [u8; 3] = [255, 165, 0];
pub const NEUTRAL: [u8; 3] = [160, 160, 160];

/// Unsuitable points are negatives whose label carries no approach.
pub fn mask_color(cloud: &LabeledCloud, i: usize) -> [u8; 3] {
    match cloud.masks[i] {
        PointMask::Positive => POSITIVE,
        PointMask::Negative => match cloud.labels[i] {
            Some(l) if l.approach.norm_squared() > 0.0 => NEGATIVE_COLLISION,
            _ => UNSUITABLE,
        },
        PointMask::Unlabeled => NEUTRAL,
    }
}

/// Red at 0, green at `max`.
pub fn quality_color(q: f64, max: f64) -> [u8; 3] {
    let t = if max > 0.0 { (q / max).clamp(0.0, 1.0) } else { 0.0 };
    [(255.0 * (1.0 - t)).round() as u8, (255.0 * t).round() as u8, 0]
}

const BOX_EDGES: [[usize; 2]; 12] = [
    [0, 1], [0, 2], [0, 4], [1, 3], [1, 5], [2, 3], [2, 6], [3, 7], [4, 5], [4, 6], [5, 7], [6, 7],
];

/// The `top_k` highest-quality grasps (ties by position) as wireframes,
/// after the cloud's points if one is given.
pub fn export_viz(cloud: Option<&LabeledCloud>, grasps: &[Grasp], top_k: usize, gripper: &GripperModel) -> PlyFile {
    let mut order: Vec<usize> = (0..grasps.len()).collect();
    order.sort_by(|&a, &b| grasps[b].quality.total_cmp(&grasps[a].quality).then(a.cmp(&b)));
    order.truncate(top_k);
    let qmax = order.iter().map(|&i| grasps[i].quality).fold(0.0, f64::max);

    let mut xyz: [Vec<f64>; 3] = Default::default();
    let mut rgb: [Vec<f64>; 3] = Default::default();
    let push = |xyz: &mut [Vec<f64>; 3], rgb: &mut [Vec<f64>; 3], p: &crate::geom::Vec3, c: [u8; 3]| {
        for k in 0..3 {
            xyz[k].push(p[k] as f32 as f64);
            rgb[k].push(c[k] as f64);
        }
    };
    if let Some(c) = cloud {
        for (i, p) in c.points.iter().enumerate() {
            push(&mut xyz, &mut rgb, p, mask_color(c, i));
        }
    }
    let mut edges: [Vec<f64>; 5] = Default::default();
    let mut base = xyz[0].len();
    for &gi in &order {
        let g = &grasps[gi];
        let Ok(frame) = grasp_frame(g, gripper) else { continue };
        let color = quality_color(g.quality, qmax);
        for b in gripper_boxes(gripper, &frame, g.width).solid() {
            for p in b.corners() {
                push(&mut xyz, &mut rgb, &p, color);
            }
            for [a, c] in BOX_EDGES {
                edges[0].push((base + a) as f64);
                edges[1].push((base + c) as f64);
                for k in 0..3 {
                    edges[2 + k].push(color[k] as f64);
                }
            }
            base += 8;
        }
    }
    let n = xyz[0].len();
    let [x, y, z] = xyz;
    let [r, g, b] = rgb;
    let vertex = Element::new("vertex", n)
        .scalar("x", ScalarType::Float, x)
        .scalar("y", ScalarType::Float, y)
        .scalar("z", ScalarType::Float, z)
        .scalar("red", ScalarType::UChar, r)
        .scalar("green", ScalarType::UChar, g)
        .scalar("blue", ScalarType::UChar, b);
    let [e1, e2, er, eg, eb] = edges;
    let edge = Element::new("edge", e1.len())
        .scalar("vertex1", ScalarType::Int, e1)
        .scalar("vertex2", ScalarType::Int, e2)
        .scalar("red", ScalarType::UChar, er)
        .scalar("green", ScalarType::UChar, eg)
        .scalar("blue", ScalarType::UChar, eb);
    PlyFile {
        comments: vec![format!("densegrasp viz: {} grasps", order.len())],
        elements: vec![vertex, edge],
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::{Unit, Vector3};

    fn grasp(q: f64, x: f64) -> Grasp {
        Grasp::from_contacts(Vector3::new(x, -0.01, 0.0), Vector3::new(x, 0.01, 0.0), Unit::new_normalize(Vector3::new(0.0, 0.0, -1.0)), 0.024, q).unwrap()
    }

    #[test]
    fn ramp_endpoints() {
        assert_eq!(quality_color(0.0, 0.7), [255, 0, 0]);
        assert_eq!(quality_color(0.7, 0.7), [0, 255, 0]);
    }

    #[test]
    fn top_k_and_colors() {
        let gs: Vec<Grasp> = (0..40).map(|i| grasp(i as f64 * 0.01, i as f64 * 0.1)).collect();
        let f = export_viz(None, &gs, 15, &GripperModel::default());
        assert_eq!(f.comments[0], "densegrasp viz: 15 grasps");
        let e = f.element("edge").unwrap();
        assert_eq!(e.count, 15 * 3 * 12);
        let v = f.element("vertex").unwrap();
        assert_eq!(v.count, 15 * 24);
        // First exported grasp is the best one: pure green.
        assert_eq!((v.values("red").unwrap()[0], v.values("green").unwrap()[0]), (0.0, 255.0));
        let worst = v.count - 1;
        assert_eq!(v.values("green").unwrap()[worst], (255.0f64 * 25.0 / 39.0).round());
        let _ = PlyFile::from_bytes(&f.to_bytes()).unwrap();
    }

    #[test]
    fn unlabeled_cloud_is_neutral() {
        let c = LabeledCloud::unlabeled(vec![Vector3::zeros(); 5]);
        let f = export_viz(Some(&c), &[], 15, &GripperModel::default());
        let v = f.element("vertex").unwrap();
        for k in 0..5 {
            assert_eq!([v.values("red").unwrap()[k], v.values("green").unwrap()[k], v.values("blue").unwrap()[k]], NEUTRAL.map(|c| c as f64));
        }
    }
}
