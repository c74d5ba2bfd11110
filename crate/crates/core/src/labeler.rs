//! Scene-level grasp filtering and per-point label broadcast.

use kiddo::{ImmutableKdTree, SquaredEuclidean};
use nalgebra::Vector3;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::collision::{check_collision_scene, gripper_boxes, CollisionError};
use crate::geom::Vec3;
use crate::grasp::{grasp_frame, GraspError, GripperModel};
use crate::scene::{SceneAnnotations, SceneGeometry, SceneGrasp};

/// Per-point regression target `[n, r, ω, Q]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PointLabel {
    pub approach: Vec3,
    pub closing: Vec3,
    pub width: f64,
    pub quality: f64,
}

impl PointLabel {
    /// Label carried by unsuitable points: zero directions, width and
    /// quality.
    pub fn empty() -> Self {
        PointLabel {
            approach: Vector3::zeros(),
            closing: Vector3::zeros(),
            width: 0.0,
            quality: 0.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
#[repr(u8)]
pub enum PointMask {
    Negative = 0,
    Positive = 1,
    Unlabeled = 2,
}

impl PointMask {
    pub fn from_u8(v: u8) -> Option<Self> {
        match v {
            0 => Some(PointMask::Negative),
            1 => Some(PointMask::Positive),
            2 => Some(PointMask::Unlabeled),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LabeledCloud {
    pub points: Vec<Vec3>,
    pub masks: Vec<PointMask>,
    pub labels: Vec<Option<PointLabel>>,
    /// Index into the scene's positive grasp list.
    pub grasp_refs: Vec<Option<u32>>,
}

impl LabeledCloud {
    pub fn unlabeled(points: Vec<Vec3>) -> Self {
        let n = points.len();
        LabeledCloud {
            points,
            masks: vec![PointMask::Unlabeled; n],
            labels: vec![None; n],
            grasp_refs: vec![None; n],
        }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn count(&self, mask: PointMask) -> usize {
        self.masks.iter().filter(|&&m| m == mask).count()
    }
}

/// A contact point with the label it broadcasts. For positives `index` is
/// the grasp's position in `g_pos`; for negatives it is the contact's
/// position in `p_neg`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LabeledContact {
    pub point: Vec3,
    pub label: PointLabel,
    pub index: usize,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct FilterResult {
    pub g_pos: Vec<SceneGrasp>,
    pub p_pos: Vec<LabeledContact>,
    pub p_neg: Vec<LabeledContact>,
    /// Indices into the input grasp list that collided.
    pub collided: Vec<usize>,
}

#[derive(Debug, thiserror::Error)]
pub enum LabelError {
    #[error(transparent)]
    Grasp(#[from] GraspError),
    #[error(transparent)]
    Collision(#[from] CollisionError),
}

/// Splits scene-transformed grasps by a full-scene collision check. Contacts
/// of colliding grasps keep their geometry but carry `Q = 0`.
pub fn scene_grasp_filter(
    geometry: &SceneGeometry,
    annotations: &SceneAnnotations,
    gripper: &GripperModel,
    margin: f64,
) -> Result<FilterResult, LabelError> {
    let verdicts = annotations
        .grasps
        .par_iter()
        .map(|sg| {
            let frame = grasp_frame(&sg.grasp, gripper)?;
            let boxes = gripper_boxes(gripper, &frame, sg.grasp.width);
            Ok(check_collision_scene(&boxes, geometry, sg.instance, margin)?.collided)
        })
        .collect::<Result<Vec<bool>, LabelError>>()?;
    Ok(partition_grasps(annotations, &verdicts))
}

/// The bookkeeping half of [`scene_grasp_filter`], given one collision
/// verdict per grasp.
pub fn partition_grasps(annotations: &SceneAnnotations, collided: &[bool]) -> FilterResult {
    assert_eq!(collided.len(), annotations.grasps.len(), "one verdict per grasp");
    let mut out = FilterResult::default();
    for (i, (sg, &collided)) in annotations.grasps.iter().zip(collided).enumerate() {
        let g = &sg.grasp;
        let mut label = PointLabel {
            approach: g.approach.into_inner(),
            closing: g.closing.into_inner(),
            width: g.width,
            quality: g.quality,
        };
        if collided {
            label.quality = 0.0;
            out.collided.push(i);
            for point in [g.c1, g.c2] {
                let index = out.p_neg.len();
                out.p_neg.push(LabeledContact { point, label, index });
            }
        } else {
            let index = out.g_pos.len();
            out.g_pos.push(*sg);
            for point in [g.c1, g.c2] {
                out.p_pos.push(LabeledContact { point, label, index });
            }
        }
    }
    for np in &annotations.negative_points {
        let index = out.p_neg.len();
        out.p_neg.push(LabeledContact {
            point: np.point,
            label: PointLabel::empty(),
            index,
        });
    }
    out
}

/// Total order on competing contacts: higher `Q`, then positive, then
/// lower index. Returns true if `a` beats `b`.
pub fn beats(a: (&LabeledContact, bool), b: (&LabeledContact, bool)) -> bool {
    let (ca, pa) = a;
    let (cb, pb) = b;
    if ca.label.quality != cb.label.quality {
        return ca.label.quality > cb.label.quality;
    }
    if pa != pb {
        return pa;
    }
    ca.index < cb.index
}

/// Every cloud point within `radius` of a contact takes that contact's
/// label and mask; the winner among several is decided by [`beats`].
pub fn broadcast_labels(cloud: &[Vec3], p_pos: &[LabeledContact], p_neg: &[LabeledContact], radius: f64) -> LabeledCloud {
    let mut out = LabeledCloud::unlabeled(cloud.to_vec());
    if cloud.is_empty() || !(radius > 0.0) {
        return out;
    }
    let pts: Vec<[f64; 3]> = cloud.iter().map(|p| [p.x, p.y, p.z]).collect();
    let tree: ImmutableKdTree<f64, 3> = ImmutableKdTree::new_from_slice(&pts).expect("finite cloud");
    let r2 = radius * radius;
    // Slightly widened query, then the exact `<=` test.
    let query_r2 = r2 * (1.0 + 1e-9) + 1e-18;

    let contacts: Vec<(&LabeledContact, bool)> = p_pos
        .iter()
        .map(|c| (c, true))
        .chain(p_neg.iter().map(|c| (c, false)))
        .collect();
    let hits: Vec<Vec<usize>> = contacts
        .par_iter()
        .map(|(c, _)| {
            let q = [c.point.x, c.point.y, c.point.z];
            let mut v: Vec<usize> = tree
                .query(&q)
                .within::<SquaredEuclidean<f64>>(query_r2)
                .unsorted()
                .execute()
                .into_iter()
                .map(|nn| nn.item as usize)
                .filter(|&i| (cloud[i] - c.point).norm_squared() <= r2)
                .collect();
            v.sort_unstable();
            v
        })
        .collect();

    let mut winner: Vec<Option<usize>> = vec![None; cloud.len()];
    for (ci, pts) in hits.iter().enumerate() {
        for &p in pts {
            match winner[p] {
                Some(w) if !beats(contacts[ci], contacts[w]) => {}
                _ => winner[p] = Some(ci),
            }
        }
    }
    for (p, w) in winner.into_iter().enumerate() {
        if let Some(ci) = w {
            let (c, positive) = contacts[ci];
            out.labels[p] = Some(c.label);
            if positive {
                out.masks[p] = PointMask::Positive;
                out.grasp_refs[p] = Some(c.index as u32);
            } else {
                out.masks[p] = PointMask::Negative;
            }
        }
    }
    out
}
