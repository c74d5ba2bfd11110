//! On-disk formats: versioned JSON for structured records, binary PLY for
//! point data, atomic writes and FNV-1a checksums.

mod cloud;
mod stats;
mod viz;

use std::collections::BTreeMap;
use std::hash::Hasher;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geom::MeshFormat;
use crate::grasp::GripperModel;
use crate::ply::PlyError;

pub use cloud::{cloud_to_ply, ply_to_cloud, ply_to_targets, read_labeled_cloud, read_targets, targets_to_ply, write_labeled_cloud, write_targets, PointTargets};
pub use stats::{dataset_stats, width_histogram, DatasetStats, MaskFractions, QualitySummary, SceneInput, SceneStats, WIDTH_BINS, WIDTH_BIN_SIZE};
pub use viz::{export_viz, mask_color, quality_color, NEUTRAL, NEGATIVE_COLLISION, POSITIVE, UNSUITABLE};

pub const FORMAT_VERSION: &str = "1.0";
const MAJOR: u64 = 1;

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("{path}: {message}")]
    Json { path: String, message: String },
    #[error("{path}: unsupported format_version {found} (this build reads {FORMAT_VERSION})")]
    Version { path: String, found: String },
    #[error("{path}: checksum mismatch (manifest {expected}, file {found})")]
    Checksum { path: String, expected: String, found: String },
    #[error("{path}: {source}")]
    Ply { path: String, source: PlyError },
    #[error("{path}: {message}")]
    Schema { path: String, message: String },
}

impl DatasetError {
    pub fn io(path: &Path, source: std::io::Error) -> Self {
        DatasetError::Io {
            path: path.display().to_string(),
            source,
        }
    }

    pub fn schema(path: &Path, message: impl Into<String>) -> Self {
        DatasetError::Schema {
            path: path.display().to_string(),
            message: message.into(),
        }
    }
}

/// 64-bit FNV-1a.
pub fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut h = fnv::FnvHasher::default();
    h.write(bytes);
    h.finish()
}

pub fn checksum_hex(bytes: &[u8]) -> String {
    format!("{:016x}", fnv1a64(bytes))
}

/// Writes through a temporary file in the target directory, then renames.
pub fn atomic_write(path: &Path, bytes: &[u8]) -> Result<(), DatasetError> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    std::fs::create_dir_all(dir).map_err(|e| DatasetError::io(dir, e))?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(|e| DatasetError::io(path, e))?;
    tmp.write_all(bytes).map_err(|e| DatasetError::io(path, e))?;
    // Temp files are created private; published payloads are not.
    #[cfg(unix)]
    {
        use std::os::unix::fs::PermissionsExt;
        tmp.as_file()
            .set_permissions(std::fs::Permissions::from_mode(0o644))
            .map_err(|e| DatasetError::io(path, e))?;
    }
    tmp.persist(path).map_err(|e| DatasetError::io(path, e.error))?;
    Ok(())
}

pub fn read_bytes(path: &Path) -> Result<Vec<u8>, DatasetError> {
    std::fs::read(path).map_err(|e| DatasetError::io(path, e))
}

/// JSON object with a leading `"format_version"` key.
pub fn to_versioned_json<T: Serialize>(value: &T) -> Vec<u8> {
    let body = serde_json::to_value(value).expect("records serialize");
    let mut map = serde_json::Map::new();
    map.insert("format_version".into(), FORMAT_VERSION.into());
    match body {
        serde_json::Value::Object(fields) => map.extend(fields),
        other => {
            map.insert("data".into(), other);
        }
    }
    let mut out = serde_json::to_vec_pretty(&serde_json::Value::Object(map)).expect("json");
    out.push(b'\n');
    out
}

pub fn from_versioned_json<T: DeserializeOwned>(bytes: &[u8], path: &Path) -> Result<T, DatasetError> {
    let json_err = |e: serde_json::Error| DatasetError::Json {
        path: path.display().to_string(),
        message: e.to_string(),
    };
    let mut v: serde_json::Value = serde_json::from_slice(bytes).map_err(json_err)?;
    let obj = v
        .as_object_mut()
        .ok_or_else(|| DatasetError::schema(path, "top level is not an object"))?;
    let version = match obj.remove("format_version") {
        Some(serde_json::Value::String(s)) => s,
        _ => return Err(DatasetError::schema(path, "missing format_version")),
    };
    let major = version.split('.').next().and_then(|m| m.parse::<u64>().ok());
    if major != Some(MAJOR) {
        return Err(DatasetError::Version {
            path: path.display().to_string(),
            found: version,
        });
    }
    if obj.len() == 1 && obj.contains_key("data") {
        v = obj.remove("data").expect("checked");
    }
    serde_json::from_value(v).map_err(json_err)
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<Vec<u8>, DatasetError> {
    let bytes = to_versioned_json(value);
    atomic_write(path, &bytes)?;
    Ok(bytes)
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T, DatasetError> {
    from_versioned_json(&read_bytes(path)?, path)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ObjectEntry {
    pub id: String,
    /// Relative to the manifest's directory.
    pub mesh: PathBuf,
    pub format: MeshFormat,
    #[serde(default = "one")]
    pub scale: f64,
    #[serde(default)]
    pub density: Option<f64>,
    #[serde(default)]
    pub friction: Option<f64>,
}

fn one() -> f64 {
    1.0
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LibraryDefaults {
    pub density: f64,
    pub friction: f64,
}

impl Default for LibraryDefaults {
    fn default() -> Self {
        LibraryDefaults {
            density: 500.0,
            friction: 0.3,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LibraryManifest {
    pub objects: Vec<ObjectEntry>,
    pub gripper: GripperModel,
    #[serde(default)]
    pub defaults: LibraryDefaults,
}

impl LibraryManifest {
    /// Unique ids, positive scales and, with `root`, existing mesh files.
    pub fn validate(&self, root: Option<&Path>) -> Result<(), String> {
        let mut seen = std::collections::HashSet::new();
        for o in &self.objects {
            if o.id.is_empty() || !seen.insert(o.id.as_str()) {
                return Err(format!("duplicate or empty object id `{}`", o.id));
            }
            if !(o.scale > 0.0 && o.scale.is_finite()) {
                return Err(format!("object `{}`: scale must be > 0", o.id));
            }
            if o.density.is_some_and(|d| !(d > 0.0)) || o.friction.is_some_and(|f| !(f >= 0.0)) {
                return Err(format!("object `{}`: density must be > 0 and friction >= 0", o.id));
            }
            if let Some(root) = root {
                let p = root.join(&o.mesh);
                if !p.is_file() {
                    return Err(format!("object `{}`: mesh {} not found", o.id, p.display()));
                }
            }
        }
        self.gripper.validate().map_err(|e| e.to_string())
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Splits {
    pub train_objects: Vec<String>,
    pub test_objects: Vec<String>,
    pub train_scenes: Vec<String>,
    pub test_scenes: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetManifest {
    pub tool_version: String,
    pub seed: u64,
    pub config: serde_json::Value,
    pub splits: Splits,
    /// Relative path to FNV-1a checksum, hex.
    pub files: BTreeMap<String, String>,
}

impl DatasetManifest {
    /// Every listed file exists and matches its checksum.
    pub fn verify(&self, root: &Path) -> Vec<DatasetError> {
        let mut errs = Vec::new();
        for (rel, expected) in &self.files {
            let path = root.join(rel);
            match std::fs::read(&path) {
                Ok(bytes) => {
                    let found = checksum_hex(&bytes);
                    if &found != expected {
                        errs.push(DatasetError::Checksum {
                            path: path.display().to_string(),
                            expected: expected.clone(),
                            found,
                        });
                    }
                }
                Err(e) => errs.push(DatasetError::io(&path, e)),
            }
        }
        errs
    }
}

/// Deterministic 80/20 split of `ids` by a seeded shuffle; each side keeps
/// the input order.
pub fn split_ids(ids: &[String], seed: u64) -> (Vec<String>, Vec<String>) {
    use rand::seq::SliceRandom;
    use rand::SeedableRng;
    let mut idx: Vec<usize> = (0..ids.len()).collect();
    idx.shuffle(&mut rand_chacha::ChaCha8Rng::seed_from_u64(seed));
    let n_test = ids.len() / 5;
    let mut test = idx[..n_test].to_vec();
    let mut train = idx[n_test..].to_vec();
    test.sort_unstable();
    train.sort_unstable();
    (train.into_iter().map(|i| ids[i].clone()).collect(), test.into_iter().map(|i| ids[i].clone()).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scene::{BinModel, Scene};

    #[test]
    fn fnv_vectors() {
        assert_eq!(fnv1a64(b""), 0xcbf2_9ce4_8422_2325);
        assert_eq!(fnv1a64(b"a"), 0xaf63_dc4c_8601_ec8c);
        assert_eq!(fnv1a64(b"foobar"), 0x8594_4171_f739_67e8);
    }

    #[test]
    fn versioned_json() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("s.json");
        let scene = Scene {
            bin: BinModel::default(),
            instances: vec![],
            seed: u64::MAX,
            requested: 0,
        };
        let bytes = write_json(&path, &scene).unwrap();
        assert!(String::from_utf8_lossy(&bytes).contains("\"format_version\": \"1.0\""));
        assert_eq!(read_json::<Scene>(&path).unwrap(), scene);

        let newer = String::from_utf8(bytes).unwrap().replace("\"1.0\"", "\"2.0\"");
        assert!(matches!(from_versioned_json::<Scene>(newer.as_bytes(), &path), Err(DatasetError::Version { .. })));
        let minor = to_versioned_json(&scene);
        let minor = String::from_utf8(minor).unwrap().replace("\"1.0\"", "\"1.3\"");
        assert!(from_versioned_json::<Scene>(minor.as_bytes(), &path).is_ok());
    }

    #[test]
    fn tamper_is_named() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("a.bin");
        atomic_write(&path, b"hello").unwrap();
        let m = DatasetManifest {
            tool_version: "0".into(),
            seed: 0,
            config: serde_json::Value::Null,
            splits: Splits::default(),
            files: [("a.bin".to_string(), checksum_hex(b"hello"))].into(),
        };
        assert!(m.verify(dir.path()).is_empty());
        std::fs::write(&path, b"hellp").unwrap();
        let errs = m.verify(dir.path());
        assert_eq!(errs.len(), 1);
        assert!(errs[0].to_string().contains("a.bin"));
    }

    #[test]
    fn splits_partition() {
        let ids: Vec<String> = (0..10).map(|i| format!("o{i}")).collect();
        let (tr, te) = split_ids(&ids, 3);
        assert_eq!((tr.len(), te.len()), (8, 2));
        let mut all = [tr.clone(), te.clone()].concat();
        all.sort();
        let mut want = ids.clone();
        want.sort();
        assert_eq!(all, want);
        assert_eq!(split_ids(&ids, 3), (tr, te));
    }
}
