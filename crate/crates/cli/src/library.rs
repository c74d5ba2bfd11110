//! Object libraries: a procedural set of graspable primitives, or meshes
//! from a user manifest, normalized into `meshes/` and `library.json`.

use std::path::Path;

use densegrasp::dataset::{self, LibraryDefaults, LibraryManifest, ObjectEntry};
use densegrasp::geom::{load_mesh, mesh_to_ply, primitives, MeshFormat, TriangleMesh};
use densegrasp::object::ObjectModel;
use nalgebra::Vector3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::config::RunConfig;
use crate::seeds::sub_seed;

pub const LIBRARY_FILE: &str = "library.json";

pub fn object_id(i: usize) -> String {
    format!("obj_{i:03}")
}

/// Shape family cycles with the index; sizes are drawn from the object's
/// own seed, so ids keep their shape when the library grows.
pub fn procedural_mesh(i: usize, seed: u64) -> TriangleMesh {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut u = |lo: f64, hi: f64| rng.random_range(lo..hi);
    match i % 5 {
        0 => primitives::cuboid(Vector3::new(u(0.015, 0.03), u(0.03, 0.06), u(0.04, 0.09))),
        1 => primitives::icosphere(u(0.010, 0.016), 3),
        2 => primitives::cylinder(u(0.008, 0.015), u(0.04, 0.10), 32),
        3 => {
            let a = u(0.02, 0.03);
            primitives::cuboid(Vector3::new(a, a * u(0.9, 1.1), a * u(0.9, 1.1)))
        }
        _ => primitives::cylinder(u(0.025, 0.035), u(0.012, 0.02), 40),
    }
}

/// Writes `meshes/<id>.ply` and `library.json` under `out` and returns the
/// manifest.
pub fn build_library(cfg: &RunConfig, out: &Path) -> Result<LibraryManifest, String> {
    let mut entries = Vec::new();
    let defaults = LibraryDefaults {
        friction: cfg.sampler.friction,
        ..LibraryDefaults::default()
    };
    let meshes: Vec<(ObjectEntry, TriangleMesh)> = match &cfg.paths.library {
        None => (0..cfg.objects)
            .map(|i| {
                let id = object_id(i);
                let mesh = procedural_mesh(i, sub_seed(cfg.seed, &id));
                let entry = ObjectEntry {
                    id,
                    mesh: Default::default(),
                    format: MeshFormat::Ply,
                    scale: 1.0,
                    density: Some(defaults.density),
                    friction: Some(defaults.friction),
                };
                (entry, mesh)
            })
            .collect(),
        Some(path) => {
            let src: LibraryManifest = dataset::read_json(path).map_err(|e| e.to_string())?;
            let root = path.parent().unwrap_or(Path::new("."));
            src.validate(Some(root))?;
            if cfg.objects > src.objects.len() {
                return Err(format!("{} objects requested but {} lists {}", cfg.objects, path.display(), src.objects.len()));
            }
            src.objects[..cfg.objects]
                .iter()
                .map(|o| {
                    let mesh = load_mesh(&root.join(&o.mesh), o.format, o.scale).map_err(|e| e.to_string())?.mesh;
                    let entry = ObjectEntry {
                        id: o.id.clone(),
                        mesh: Default::default(),
                        format: MeshFormat::Ply,
                        scale: 1.0,
                        density: Some(o.density.unwrap_or(src.defaults.density)),
                        friction: Some(o.friction.unwrap_or(src.defaults.friction)),
                    };
                    Ok((entry, mesh))
                })
                .collect::<Result<_, String>>()?
        }
    };
    for (mut entry, mesh) in meshes {
        let rel = format!("meshes/{}.ply", entry.id);
        dataset::atomic_write(&out.join(&rel), &mesh_to_ply(&mesh)).map_err(|e| e.to_string())?;
        entry.mesh = rel.into();
        entries.push(entry);
    }
    let manifest = LibraryManifest {
        objects: entries,
        gripper: cfg.gripper,
        defaults,
    };
    manifest.validate(Some(out))?;
    dataset::write_json(&out.join(LIBRARY_FILE), &manifest).map_err(|e| e.to_string())?;
    Ok(manifest)
}

/// Loads the normalized library written by [`build_library`].
pub fn load_library(out: &Path) -> Result<(LibraryManifest, Vec<ObjectModel>), String> {
    let path = out.join(LIBRARY_FILE);
    if !path.is_file() {
        return Err(format!("{} not found; run gen-grasps first", path.display()));
    }
    let manifest: LibraryManifest = dataset::read_json(&path).map_err(|e| e.to_string())?;
    manifest.validate(Some(out))?;
    let objects = manifest
        .objects
        .iter()
        .map(|o| {
            let mesh = load_mesh(&out.join(&o.mesh), o.format, o.scale).map_err(|e| e.to_string())?.mesh;
            let density = o.density.unwrap_or(manifest.defaults.density);
            let friction = o.friction.unwrap_or(manifest.defaults.friction);
            ObjectModel::new(o.id.clone(), mesh, density, friction).map_err(|e| format!("object `{}`: {e}", o.id))
        })
        .collect::<Result<Vec<_>, String>>()?;
    Ok((manifest, objects))
}
