//! Bin-plus-residual regression targets for per-point grasps, the angle
//! parameterization of (n, r), and gripper-frame region cropping.

use std::f64::consts::{FRAC_PI_2, FRAC_PI_6, PI, TAU};

use nalgebra::{Unit, Vector3};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geom::{Pose, UnitVec3, Vec3};
use crate::grasp::{grasp_frame, Grasp, GraspError, GripperModel};

#[derive(Debug, Error, PartialEq)]
pub enum EncodeError {
    #[error("value {value} outside [{lo}, {hi}]")]
    OutOfRange { value: f64, lo: f64, hi: f64 },
    #[error("closing axis is vertical; its azimuth is undefined")]
    VerticalClosing,
    #[error("closing azimuth cannot be made orthogonal to the approach")]
    DegenerateClosing,
    #[error("approach and closing axes are not orthogonal (|n·r| = {0:.3e})")]
    NotOrthogonal(f64),
    #[error("invalid bin spec: {0}")]
    BadSpec(String),
    #[error(transparent)]
    Grasp(#[from] GraspError),
}

const RANGE_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AngleBinSpec {
    pub start: f64,
    pub unit: f64,
    pub count: u32,
}

impl AngleBinSpec {
    pub fn end(&self) -> f64 {
        self.start + self.unit * self.count as f64
    }
}

/// Symmetric window `[-range, range]` split into `count` bins of `unit`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LinearBinSpec {
    pub unit: f64,
    pub range: f64,
    pub count: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BinRes {
    pub bin: u32,
    pub res: f64,
}

/// Shared core of both bin rules: `v` is the offset from the window start.
fn bin_of(v: f64, unit: f64, count: u32, lo: f64, hi: f64, value: f64) -> Result<BinRes, EncodeError> {
    let span = unit * count as f64;
    if !(v >= -RANGE_TOL && v <= span + RANGE_TOL) {
        return Err(EncodeError::OutOfRange { value, lo, hi });
    }
    let v = v.clamp(0.0, span);
    let bin = ((v / unit).floor() as i64).clamp(0, count as i64 - 1) as u32;
    let res = (v / unit - bin as f64 - 0.5).clamp(-0.5, 0.5);
    Ok(BinRes { bin, res })
}

pub fn encode_angle(theta: f64, spec: &AngleBinSpec) -> Result<BinRes, EncodeError> {
    bin_of(theta - spec.start, spec.unit, spec.count, spec.start, spec.end(), theta)
}

pub fn decode_angle(b: BinRes, spec: &AngleBinSpec) -> f64 {
    spec.start + b.bin as f64 * spec.unit + spec.unit / 2.0 + b.res * spec.unit
}

/// Bin of the offset `u_p − u_pc` in the window around the point.
pub fn encode_linear(u_p: f64, u_pc: f64, spec: &LinearBinSpec) -> Result<BinRes, EncodeError> {
    bin_of(u_p - u_pc + spec.range, spec.unit, spec.count, u_p - spec.range, u_p + spec.range, u_pc)
}

pub fn decode_linear(u_p: f64, b: BinRes, spec: &LinearBinSpec) -> f64 {
    u_p + spec.range - (b.bin as f64 + 0.5 + b.res) * spec.unit
}

/// Width is binned absolutely over `[0, 2·range]`.
pub fn encode_width(width: f64, spec: &LinearBinSpec) -> Result<BinRes, EncodeError> {
    bin_of(width, spec.unit, spec.count, 0.0, 2.0 * spec.range, width)
}

pub fn decode_width(b: BinRes, spec: &LinearBinSpec) -> f64 {
    (b.bin as f64 + 0.5 + b.res) * spec.unit
}

/// `(θ1, θ2, θ3)`: approach azimuth in `[0, 2π)`, downward approach
/// elevation in `[0, π/2]` and closing azimuth folded into `(−π/2, π/2]`.
pub fn grasp_to_angles(n: &UnitVec3, r: &UnitVec3) -> Result<(f64, f64, f64), EncodeError> {
    let dot = n.dot(r).abs();
    if dot >= 1e-6 {
        return Err(EncodeError::NotOrthogonal(dot));
    }
    let horiz = n.x.hypot(n.y);
    let theta2 = (-n.z).atan2(horiz).clamp(0.0, FRAC_PI_2);
    // Straight down: the azimuth is arbitrary and pinned to 0.
    let theta1 = if horiz == 0.0 { 0.0 } else { n.y.atan2(n.x).rem_euclid(TAU) };
    let theta1 = if theta1 >= TAU { 0.0 } else { theta1 };
    if r.x.hypot(r.y) < 1e-9 {
        return Err(EncodeError::VerticalClosing);
    }
    let mut theta3 = r.y.atan2(r.x);
    if theta3 > FRAC_PI_2 {
        theta3 -= PI;
    } else if theta3 <= -FRAC_PI_2 {
        theta3 += PI;
    }
    Ok((theta1, theta2, theta3))
}

/// Inverse of [`grasp_to_angles`]. The closing axis keeps azimuth `θ3`
/// exactly; its z component is whatever makes it orthogonal to `n`.
pub fn angles_to_directions(theta1: f64, theta2: f64, theta3: f64) -> Result<(UnitVec3, UnitVec3), EncodeError> {
    let (s2, c2) = theta2.sin_cos();
    let n = Vector3::new(c2 * theta1.cos(), c2 * theta1.sin(), -s2);
    let u = Vector3::new(theta3.cos(), theta3.sin(), 0.0);
    let un = u.dot(&n);
    let r = if n.z.abs() < 1e-12 {
        if un.abs() > 1e-9 {
            return Err(EncodeError::DegenerateClosing);
        }
        u
    } else {
        Vector3::new(u.x, u.y, -un / n.z)
    };
    let norm = r.norm();
    if !(norm.is_finite() && norm > 1e-12) {
        return Err(EncodeError::DegenerateClosing);
    }
    Ok((Unit::new_normalize(n), Unit::new_unchecked(r / norm)))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EncodingConfig {
    pub theta1: AngleBinSpec,
    pub theta2: AngleBinSpec,
    pub theta3: AngleBinSpec,
    pub center: LinearBinSpec,
    pub width: LinearBinSpec,
    /// Enlargement of the closing volume for region crops.
    pub epsilon: f64,
}

impl Default for EncodingConfig {
    fn default() -> Self {
        EncodingConfig {
            theta1: AngleBinSpec {
                start: 0.0,
                unit: FRAC_PI_6,
                count: 12,
            },
            theta2: AngleBinSpec {
                start: 0.0,
                unit: FRAC_PI_6,
                count: 3,
            },
            theta3: AngleBinSpec {
                start: -FRAC_PI_2,
                unit: FRAC_PI_6,
                count: 6,
            },
            center: LinearBinSpec {
                unit: 0.01,
                range: 0.04,
                count: 8,
            },
            width: LinearBinSpec {
                unit: 0.005,
                range: 0.02,
                count: 8,
            },
            epsilon: 1.2,
        }
    }
}

impl EncodingConfig {
    pub fn validate(&self) -> Result<(), EncodeError> {
        let close = |a: f64, b: f64| (a - b).abs() <= 1e-9 * (1.0 + b.abs());
        for (name, s, range) in [("theta1", self.theta1, TAU), ("theta2", self.theta2, FRAC_PI_2), ("theta3", self.theta3, PI)] {
            if !(s.unit > 0.0 && s.count > 0 && close(s.unit * s.count as f64, range)) {
                return Err(EncodeError::BadSpec(format!("{name} bins must cover {range} rad")));
            }
        }
        for (name, s) in [("center", self.center), ("width", self.width)] {
            if !(s.unit > 0.0 && s.count > 0 && close(s.unit * s.count as f64, 2.0 * s.range)) {
                return Err(EncodeError::BadSpec(format!("{name}: count·unit must equal 2·range")));
            }
        }
        if !(self.epsilon >= 1.0 && self.epsilon.is_finite()) {
            return Err(EncodeError::BadSpec(format!("epsilon must be >= 1, got {}", self.epsilon)));
        }
        Ok(())
    }
}

/// Targets for one point: center offsets, width and the three angles.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EncodedGrasp {
    pub x: BinRes,
    pub y: BinRes,
    pub z: BinRes,
    pub width: BinRes,
    pub theta1: BinRes,
    pub theta2: BinRes,
    pub theta3: BinRes,
}

impl EncodedGrasp {
    pub fn fields(&self) -> [BinRes; 7] {
        [self.x, self.y, self.z, self.width, self.theta1, self.theta2, self.theta3]
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DecodedGrasp {
    pub center: Vec3,
    pub width: f64,
    pub approach: UnitVec3,
    pub closing: UnitVec3,
}

pub fn encode_grasp(point: &Vec3, center: &Vec3, approach: &UnitVec3, closing: &UnitVec3, width: f64, cfg: &EncodingConfig) -> Result<EncodedGrasp, EncodeError> {
    let (t1, t2, t3) = grasp_to_angles(approach, closing)?;
    Ok(EncodedGrasp {
        x: encode_linear(point.x, center.x, &cfg.center)?,
        y: encode_linear(point.y, center.y, &cfg.center)?,
        z: encode_linear(point.z, center.z, &cfg.center)?,
        width: encode_width(width, &cfg.width)?,
        theta1: encode_angle(t1, &cfg.theta1)?,
        theta2: encode_angle(t2, &cfg.theta2)?,
        theta3: encode_angle(t3, &cfg.theta3)?,
    })
}

pub fn decode_grasp(point: &Vec3, e: &EncodedGrasp, cfg: &EncodingConfig) -> Result<DecodedGrasp, EncodeError> {
    let (approach, closing) = angles_to_directions(
        decode_angle(e.theta1, &cfg.theta1),
        decode_angle(e.theta2, &cfg.theta2),
        decode_angle(e.theta3, &cfg.theta3),
    )?;
    Ok(DecodedGrasp {
        center: Vector3::new(
            decode_linear(point.x, e.x, &cfg.center),
            decode_linear(point.y, e.y, &cfg.center),
            decode_linear(point.z, e.z, &cfg.center),
        ),
        width: decode_width(e.width, &cfg.width),
        approach,
        closing,
    })
}

/// World to gripper frame.
pub fn canonical_transform(g: &Grasp, gripper: &GripperModel) -> Result<Pose, GraspError> {
    Ok(grasp_frame(g, gripper)?.inverse())
}

#[derive(Debug, Clone, PartialEq)]
pub struct CanonicalRegion {
    pub points: Vec<Vec3>,
    pub indices: Vec<usize>,
    pub transform: Pose,
}

/// Points inside the closing volume `(finger_depth, ω, finger_height)`,
/// every extent scaled by `epsilon` about the volume's center, in gripper
/// coordinates. Faces count as inside.
pub fn crop_region(cloud: &[Vec3], g: &Grasp, gripper: &GripperModel, epsilon: f64) -> Result<CanonicalRegion, GraspError> {
    let t = canonical_transform(g, gripper)?;
    let half = Vector3::new(gripper.finger_depth, g.width, gripper.finger_height) * (epsilon / 2.0);
    let mid = Vector3::new(gripper.finger_depth / 2.0, 0.0, 0.0);
    let mut out = CanonicalRegion {
        points: Vec::new(),
        indices: Vec::new(),
        transform: t,
    };
    for (i, p) in cloud.iter().enumerate() {
        let q = t.transform_point(p);
        let d = q - mid;
        if d.x.abs() <= half.x && d.y.abs() <= half.y && d.z.abs() <= half.z {
            out.points.push(q);
            out.indices.push(i);
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    const S2: f64 = std::f64::consts::FRAC_1_SQRT_2;

    #[test]
    fn angle_examples() {
        let x = Vector3::x_axis();
        let y = Vector3::y_axis();
        assert_eq!(grasp_to_angles(&x, &y).unwrap(), (0.0, 0.0, FRAC_PI_2));
        let (t1, t2, t3) = grasp_to_angles(&x, &-y).unwrap();
        assert_eq!((t1, t2, t3), (0.0, 0.0, FRAC_PI_2));

        let n = Unit::new_normalize(Vector3::new(S2, 0.0, -S2));
        let (t1, t2, t3) = grasp_to_angles(&n, &y).unwrap();
        assert!(t1.abs() < 1e-15 && (t2 - PI / 4.0).abs() < 1e-15 && t3 == FRAC_PI_2);

        assert_eq!(angles_to_directions(0.0, 0.0, 0.0).unwrap_err(), EncodeError::DegenerateClosing);
        let (n, r) = angles_to_directions(0.0, 0.0, FRAC_PI_2).unwrap();
        assert!((n.into_inner() - Vector3::x()).norm() < 1e-15);
        assert!((r.into_inner() - Vector3::y()).norm() < 1e-15);
        let (n, _) = angles_to_directions(FRAC_PI_2, PI / 4.0, 0.0).unwrap();
        assert!((n.into_inner() - Vector3::new(0.0, S2, -S2)).norm() < 1e-15);

        let z = Vector3::z_axis();
        assert_eq!(grasp_to_angles(&x, &z).unwrap_err(), EncodeError::VerticalClosing);
    }

    #[test]
    fn bin_examples() {
        let s = AngleBinSpec {
            start: 0.3,
            unit: 0.2,
            count: 5,
        };
        let b = encode_angle(0.3 + 1.5 * 0.2, &s).unwrap();
        assert_eq!(b.bin, 1);
        assert!(b.res.abs() < 1e-12);
        assert_eq!(encode_angle(0.3, &s).unwrap(), BinRes { bin: 0, res: -0.5 });
        let b = encode_angle(0.3 + 1.75 * 0.2, &s).unwrap();
        assert_eq!(b.bin, 1);
        assert!((b.res - 0.25).abs() < 1e-12);
        assert_eq!(decode_angle(BinRes { bin: 0, res: 0.0 }, &s), 0.4);
        assert!(encode_angle(1.4, &s).is_err());
        let top = encode_angle(1.3, &s).unwrap();
        assert!(top.bin == 4 && (top.res - 0.5).abs() < 1e-12);

        let l = EncodingConfig::default().center;
        assert_eq!(encode_linear(0.2, 0.2, &l).unwrap(), BinRes { bin: 4, res: -0.5 });
        assert_eq!(encode_linear(0.04, 0.0, &l).unwrap(), BinRes { bin: 7, res: 0.5 });
        assert!(encode_linear(0.0, 0.05, &l).is_err());
        let w = EncodingConfig::default().width;
        assert_eq!(encode_width(0.012, &w).unwrap().bin, 2);
        assert_eq!(encode_width(0.04, &w).unwrap(), BinRes { bin: 7, res: 0.5 });
    }

    #[test]
    fn angle_fuzz_round_trip() {
        let cfg = EncodingConfig::default();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for s in [cfg.theta1, cfg.theta2, cfg.theta3] {
            for _ in 0..100_000 {
                let t = s.start + rng.random::<f64>() * s.unit * s.count as f64;
                let b = encode_angle(t, &s).unwrap();
                assert!((-0.5..=0.5).contains(&b.res));
                assert!((decode_angle(b, &s) - t).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn directions_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut done = 0;
        while done < 10_000 {
            let n: UnitVec3 = Unit::new_normalize(Vector3::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..0.0)));
            let t2 = (-n.z).atan2(n.x.hypot(n.y));
            if t2 >= FRAC_PI_2 - 1e-3 || t2 < 1e-3 {
                continue;
            }
            let (u, v) = crate::geom::orthonormal_basis(&n);
            let phi: f64 = rng.random_range(0.0..TAU);
            let r = Unit::new_normalize(u * phi.cos() + v * phi.sin());
            let Ok((a, b, c)) = grasp_to_angles(&n, &r) else { continue };
            let (n2, r2) = angles_to_directions(a, b, c).unwrap();
            assert!((n2.into_inner() - n.into_inner()).norm() < 1e-9);
            assert!(n2.dot(&r2).abs() < 1e-9);
            let e = (r2.into_inner() - r.into_inner()).norm().min((r2.into_inner() + r.into_inner()).norm());
            assert!(e < 1e-9, "{e}");
            done += 1;
        }
    }

    #[test]
    fn canonical_frame_examples() {
        let gm = GripperModel::default();
        let c1 = Vector3::new(0.1, 0.2, 0.3);
        let c2 = Vector3::new(0.1, 0.22, 0.31);
        let r = Unit::new_normalize(c2 - c1);
        let (u, _) = crate::geom::orthonormal_basis(&r);
        let g = Grasp::from_contacts(c1, c2, Unit::new_normalize(u), 0.03, 0.1).unwrap();
        let t = canonical_transform(&g, &gm).unwrap();
        let (a, b) = (t.transform_point(&c1), t.transform_point(&c2));
        let half = (c1 - c2).norm() / 2.0;
        assert!((a.y.abs() - half).abs() < 1e-12 && (b.y + a.y).abs() < 1e-12);
        assert!((a.x - b.x).abs() < 1e-12 && (a.z - b.z).abs() < 1e-12);
        assert!((t.transform_point(&g.center) - Vector3::new(gm.finger_depth, 0.0, 0.0)).norm() < 1e-12);
        let id = t.compose(&grasp_frame(&g, &gm).unwrap());
        assert!(id.orthonormality_error() < 1e-12 && id.translation.norm() < 1e-12);
        assert!((id.rotation - nalgebra::Matrix3::identity()).abs().max() < 1e-12);

        let frame = grasp_frame(&g, &gm).unwrap();
        let inside = frame.transform_point(&Vector3::new(0.02, 0.015 - 1e-12, 0.0));
        let outside = frame.transform_point(&Vector3::new(0.02, 0.015 + 1e-6, 0.0));
        let region = crop_region(&[g.center, inside, outside], &g, &gm, 1.0).unwrap();
        assert_eq!(region.indices, vec![0, 1]);
    }
}
