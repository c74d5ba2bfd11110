//! Geometry primitives: rigid poses, triangle meshes, a BVH for ray and box
//! queries, mesh loaders and area-weighted surface sampling.

pub mod bvh;
pub mod hull;
pub mod io;
pub mod mesh;
pub mod primitives;
pub mod sample;
pub mod triangle;

use nalgebra::{Matrix3, Rotation3, Unit, UnitQuaternion, Vector3, Vector4};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

pub use bvh::{Aabb, Bvh, Hit};
pub use io::{load_mesh, mesh_to_ply, parse_mesh, LoadedMesh, MeshFormat};
pub use mesh::{mass_properties, transform_mesh, MassProperties, MeshError, TriangleMesh};
pub use sample::{sample_surface, SurfaceSample};

pub type Vec3 = Vector3<f64>;
pub type UnitVec3 = Unit<Vector3<f64>>;
pub type Mat3 = Matrix3<f64>;

/// Geometric coincidence tolerance in meters.
pub const GEOM_EPS: f64 = 1e-7;

/// A rigid transform `p -> rotation * p + translation`.
///
/// The rotation is kept as an explicit 3x3 matrix so that serialized poses
/// round-trip bit-exactly.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(from = "PoseRepr", into = "PoseRepr")]
pub struct Pose {
    pub rotation: Mat3,
    pub translation: Vec3,
}

#[derive(Serialize, Deserialize)]
struct PoseRepr {
    /// Row-major.
    rotation: [[f64; 3]; 3],
    translation: [f64; 3],
}

impl From<PoseRepr> for Pose {
    fn from(r: PoseRepr) -> Self {
        let m = r.rotation;
        Pose {
            rotation: Matrix3::new(
                m[0][0], m[0][1], m[0][2], m[1][0], m[1][1], m[1][2], m[2][0], m[2][1], m[2][2],
            ),
            translation: Vector3::from(r.translation),
        }
    }
}

impl From<Pose> for PoseRepr {
    fn from(p: Pose) -> Self {
        let m = p.rotation;
        PoseRepr {
            rotation: [
                [m[(0, 0)], m[(0, 1)], m[(0, 2)]],
                [m[(1, 0)], m[(1, 1)], m[(1, 2)]],
                [m[(2, 0)], m[(2, 1)], m[(2, 2)]],
            ],
            translation: [p.translation.x, p.translation.y, p.translation.z],
        }
    }
}

impl Default for Pose {
    fn default() -> Self {
        Self::identity()
    }
}

impl Pose {
    pub fn identity() -> Self {
        Pose {
            rotation: Matrix3::identity(),
            translation: Vector3::zeros(),
        }
    }

    pub fn new(rotation: Mat3, translation: Vec3) -> Self {
        Pose {
            rotation,
            translation,
        }
    }

    pub fn from_translation(translation: Vec3) -> Self {
        Pose {
            rotation: Matrix3::identity(),
            translation,
        }
    }

    pub fn is_identity(&self) -> bool {
        self.rotation == Matrix3::identity() && self.translation == Vector3::zeros()
    }

    pub fn transform_point(&self, p: &Vec3) -> Vec3 {
        self.rotation * p + self.translation
    }

    pub fn transform_vector(&self, v: &Vec3) -> Vec3 {
        self.rotation * v
    }

    pub fn transform_unit(&self, v: &UnitVec3) -> UnitVec3 {
        Unit::new_normalize(self.rotation * v.into_inner())
    }

    pub fn inverse(&self) -> Pose {
        let rt = self.rotation.transpose();
        Pose {
            rotation: rt,
            translation: -(rt * self.translation),
        }
    }

    /// `self ∘ other`: apply `other` first.
    pub fn compose(&self, other: &Pose) -> Pose {
        Pose {
            rotation: self.rotation * other.rotation,
            translation: self.rotation * other.translation + self.translation,
        }
    }

    /// Max deviation of `R·Rᵀ` from identity and of `det R` from 1.
    pub fn orthonormality_error(&self) -> f64 {
        let r = self.rotation;
        let e = (r * r.transpose() - Matrix3::identity()).abs().max();
        e.max((r.determinant() - 1.0).abs())
    }

    pub fn is_valid(&self, tol: f64) -> bool {
        self.rotation.iter().all(|v| v.is_finite())
            && self.translation.iter().all(|v| v.is_finite())
            && self.orthonormality_error() <= tol
    }
}

/// Uniformly distributed random rotation (normalized Gaussian quaternion).
pub fn random_rotation<R: Rng + ?Sized>(rng: &mut R) -> Mat3 {
    loop {
        let q = Vector4::new(
            rng.sample::<f64, _>(StandardNormal),
            rng.sample::<f64, _>(StandardNormal),
            rng.sample::<f64, _>(StandardNormal),
            rng.sample::<f64, _>(StandardNormal),
        );
        let n = q.norm();
        if n > 1e-9 {
            let q = nalgebra::Quaternion::new(q[0], q[1], q[2], q[3]);
            return UnitQuaternion::from_quaternion(q)
                .to_rotation_matrix()
                .into_inner();
        }
    }
}

/// Rotation about +z by `angle` radians.
pub fn rotation_z(angle: f64) -> Mat3 {
    Rotation3::from_axis_angle(&Vector3::z_axis(), angle).into_inner()
}

/// Smallest rotation taking unit vector `from` onto unit vector `to`.
pub fn rotation_between(from: &UnitVec3, to: &UnitVec3) -> Mat3 {
    match Rotation3::rotation_between(from, to) {
        Some(r) => r.into_inner(),
        None => {
            // Antiparallel: half-turn about any axis orthogonal to `from`.
            let (u, _) = orthonormal_basis(from);
            Rotation3::from_axis_angle(&Unit::new_normalize(u), std::f64::consts::PI).into_inner()
        }
    }
}

/// Two unit vectors completing `n` to a right-handed orthonormal frame
/// `(u, v, n)`, continuous except at `n.z = -1`.
pub fn orthonormal_basis(n: &UnitVec3) -> (Vec3, Vec3) {
    let n = n.as_ref();
    let sign = 1.0_f64.copysign(n.z);
    let a = -1.0 / (sign + n.z);
    let b = n.x * n.y * a;
    let u = Vector3::new(1.0 + sign * n.x * n.x * a, sign * b, -sign * n.x);
    let v = Vector3::new(b, sign + n.y * n.y * a, -n.y);
    (u, v)
}

/// Angle in radians between two nonzero vectors, robust near 0 and π.
pub fn angle_between(a: &Vec3, b: &Vec3) -> f64 {
    a.cross(b).norm().atan2(a.dot(b))
}

/// Deterministic sub-seed derivation (SplitMix64 finalizer over a mixed key).
pub fn mix_seed(seed: u64, stream: u64) -> u64 {
    let mut z = seed
        .wrapping_add(0x9E37_79B9_7F4A_7C15)
        .wrapping_add(stream.wrapping_mul(0xD1B5_4A32_D192_ED03));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn basis_is_orthonormal() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..1000 {
            let n = Unit::new_normalize(Vector3::new(
                rng.random::<f64>() - 0.5,
                rng.random::<f64>() - 0.5,
                rng.random::<f64>() - 0.5,
            ));
            let (u, v) = orthonormal_basis(&n);
            assert!((u.norm() - 1.0).abs() < 1e-12);
            assert!((v.norm() - 1.0).abs() < 1e-12);
            assert!(u.dot(&v).abs() < 1e-12);
            assert!(u.dot(&n).abs() < 1e-12);
            assert!((u.cross(&v) - n.into_inner()).norm() < 1e-12);
        }
        let down = -Vector3::z_axis();
        let (u, v) = orthonormal_basis(&down);
        assert!(u.dot(&v).abs() < 1e-12 && u.dot(&down).abs() < 1e-12);
    }

    #[test]
    fn pose_inverse_and_serde() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let p = Pose::new(random_rotation(&mut rng), Vector3::new(0.1, -0.2, 0.3));
        assert!(p.is_valid(1e-12));
        let id = p.compose(&p.inverse());
        assert!((id.rotation - Matrix3::identity()).abs().max() < 1e-12);
        assert!(id.translation.norm() < 1e-12);

        let s = serde_json::to_string(&p).unwrap();
        let back: Pose = serde_json::from_str(&s).unwrap();
        assert_eq!(back, p);
    }

    #[test]
    fn rotation_between_antiparallel() {
        let z = Vector3::z_axis();
        let r = rotation_between(&z, &-z);
        assert!((r * z.into_inner() + z.into_inner()).norm() < 1e-12);
        assert!((r.determinant() - 1.0).abs() < 1e-12);
    }
}
