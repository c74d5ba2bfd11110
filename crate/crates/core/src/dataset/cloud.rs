//! Labeled clouds and encoded targets as binary little-endian PLY.

use std::path::Path;

use nalgebra::Vector3;

use super::{atomic_write, read_bytes, DatasetError};
use crate::encoding::{BinRes, EncodedGrasp};
use crate::labeler::{LabeledCloud, PointLabel, PointMask};
use crate::ply::{Element, PlyFile, ScalarType};

const FLOAT_FIELDS: [&str; 11] = ["x", "y", "z", "nx", "ny", "nz", "rx", "ry", "rz", "width", "quality"];

/// Values are stored as 32-bit floats; clouds whose values are already
/// `f32`-representable round-trip exactly.
pub fn cloud_to_ply(cloud: &LabeledCloud) -> PlyFile {
    let n = cloud.len();
    let mut cols: Vec<Vec<f64>> = vec![Vec::with_capacity(n); FLOAT_FIELDS.len()];
    for i in 0..n {
        let p = cloud.points[i];
        let l = cloud.labels[i].unwrap_or_else(PointLabel::empty);
        let row = [
            p.x, p.y, p.z, l.approach.x, l.approach.y, l.approach.z, l.closing.x, l.closing.y, l.closing.z, l.width, l.quality,
        ];
        for (c, v) in cols.iter_mut().zip(row) {
            c.push(v as f32 as f64);
        }
    }
    let mut el = Element::new("vertex", n);
    let mut cols = cols.into_iter();
    for name in &FLOAT_FIELDS[..3] {
        el = el.scalar(name, ScalarType::Float, cols.next().expect("column"));
    }
    el = el.scalar("mask", ScalarType::UChar, cloud.masks.iter().map(|&m| m as u8 as f64).collect());
    for name in &FLOAT_FIELDS[3..] {
        el = el.scalar(name, ScalarType::Float, cols.next().expect("column"));
    }
    el = el.scalar(
        "grasp_ref",
        ScalarType::Int,
        cloud.grasp_refs.iter().map(|r| r.map_or(-1.0, |v| v as f64)).collect(),
    );
    PlyFile {
        comments: vec!["densegrasp labeled cloud".into()],
        elements: vec![el],
    }
}

pub fn ply_to_cloud(file: &PlyFile, path: &Path) -> Result<LabeledCloud, DatasetError> {
    let v = file
        .element("vertex")
        .ok_or_else(|| DatasetError::schema(path, "no vertex element"))?;
    let col = |name: &str, ty: ScalarType| -> Result<&[f64], DatasetError> {
        match (v.values(name), v.scalar_type(name)) {
            (Some(c), Some(t)) if t == ty => Ok(c),
            _ => Err(DatasetError::schema(path, format!("missing or mistyped property `{name}` (want {ty})"))),
        }
    };
    let f: Vec<&[f64]> = FLOAT_FIELDS.iter().map(|n| col(n, ScalarType::Float)).collect::<Result<_, _>>()?;
    let mask = col("mask", ScalarType::UChar)?;
    let refs = col("grasp_ref", ScalarType::Int)?;
    let mut out = LabeledCloud::unlabeled(Vec::with_capacity(v.count));
    out.points.clear();
    out.masks.clear();
    out.labels.clear();
    out.grasp_refs.clear();
    for i in 0..v.count {
        let m = PointMask::from_u8(mask[i] as u8).ok_or_else(|| DatasetError::schema(path, format!("vertex {i}: mask {} not in 0..=2", mask[i])))?;
        out.points.push(Vector3::new(f[0][i], f[1][i], f[2][i]));
        out.masks.push(m);
        out.labels.push((m != PointMask::Unlabeled).then(|| PointLabel {
            approach: Vector3::new(f[3][i], f[4][i], f[5][i]),
            closing: Vector3::new(f[6][i], f[7][i], f[8][i]),
            width: f[9][i],
            quality: f[10][i],
        }));
        out.grasp_refs.push(if refs[i] < 0.0 { None } else { Some(refs[i] as u32) });
    }
    Ok(out)
}

pub fn write_labeled_cloud(path: &Path, cloud: &LabeledCloud) -> Result<Vec<u8>, DatasetError> {
    let bytes = cloud_to_ply(cloud).to_bytes();
    atomic_write(path, &bytes)?;
    Ok(bytes)
}

pub fn read_labeled_cloud(path: &Path) -> Result<LabeledCloud, DatasetError> {
    let file = PlyFile::from_bytes(&read_bytes(path)?).map_err(|source| DatasetError::Ply {
        path: path.display().to_string(),
        source,
    })?;
    ply_to_cloud(&file, path)
}

/// Per-point encoded targets; `None` where the point has no positive
/// grasp.
pub type PointTargets = Vec<Option<EncodedGrasp>>;

const TARGET_FIELDS: [&str; 7] = ["x", "y", "z", "width", "theta1", "theta2", "theta3"];

pub fn targets_to_ply(targets: &PointTargets) -> PlyFile {
    let n = targets.len();
    let mut el = Element::new("vertex", n).scalar("valid", ScalarType::UChar, targets.iter().map(|t| t.is_some() as u8 as f64).collect());
    for (k, name) in TARGET_FIELDS.iter().enumerate() {
        let pick = |t: &Option<EncodedGrasp>| t.map(|e| e.fields()[k]).unwrap_or(BinRes { bin: 0, res: 0.0 });
        el = el
            .scalar(&format!("{name}_bin"), ScalarType::UChar, targets.iter().map(|t| pick(t).bin as f64).collect())
            .scalar(&format!("{name}_res"), ScalarType::Double, targets.iter().map(|t| pick(t).res).collect());
    }
    PlyFile {
        comments: vec!["densegrasp encoded targets".into()],
        elements: vec![el],
    }
}

pub fn ply_to_targets(file: &PlyFile, path: &Path) -> Result<PointTargets, DatasetError> {
    let v = file
        .element("vertex")
        .ok_or_else(|| DatasetError::schema(path, "no vertex element"))?;
    let col = |name: &str| v.values(name).ok_or_else(|| DatasetError::schema(path, format!("missing property `{name}`")));
    let valid = col("valid")?;
    let mut cols = Vec::new();
    for name in TARGET_FIELDS {
        cols.push((col(&format!("{name}_bin"))?, col(&format!("{name}_res"))?));
    }
    Ok((0..v.count)
        .map(|i| {
            (valid[i] != 0.0).then(|| {
                let b = |k: usize| BinRes {
                    bin: cols[k].0[i] as u32,
                    res: cols[k].1[i],
                };
                EncodedGrasp {
                    x: b(0),
                    y: b(1),
                    z: b(2),
                    width: b(3),
                    theta1: b(4),
                    theta2: b(5),
                    theta3: b(6),
                }
            })
        })
        .collect())
}

pub fn write_targets(path: &Path, targets: &PointTargets) -> Result<Vec<u8>, DatasetError> {
    let bytes = targets_to_ply(targets).to_bytes();
    atomic_write(path, &bytes)?;
    Ok(bytes)
}

pub fn read_targets(path: &Path) -> Result<PointTargets, DatasetError> {
    let file = PlyFile::from_bytes(&read_bytes(path)?).map_err(|source| DatasetError::Ply {
        path: path.display().to_string(),
        source,
    })?;
    ply_to_targets(&file, path)
}
