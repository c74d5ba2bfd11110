use std::path::{Path, PathBuf};
use std::process::{Command, Output};

const BIN: &str = env!("CARGO_BIN_EXE_densegrasp");

/// Small enough to run a whole pipeline in a few seconds.
const TINY: &str = r#"{
  "objects": 2,
  "scenes": 2,
  "sampler": {
    "points": 96, "directions": 4, "friction": 0.3, "seed": 0, "approach_trials": 6,
    "clearance": 0.002, "collision_margin": 0.001, "nms_threshold": 0.006,
    "weights": { "beta1": 1.0, "beta2": 0.03, "beta3": 0.03 }
  },
  "quality": { "cone_edges": 8, "torque_scale": 1.0, "direction_samples": 256, "polish_seeds": 8, "tol": 1e-6, "torsion_radius": 0.005 },
  "scene": { "count_range": [2, 4], "hull_area_fraction": 0.05, "max_hull_candidates": 6, "random_orientations": 4,
             "perturbations": 3, "attempts": 10, "probe_spacing": 0.002, "penetration_tol": 0.0005 },
  "camera": { "intrinsics": { "fx": 200.0, "fy": 200.0, "cx": 100.0, "cy": 75.0, "width": 200, "height": 150 },
              "height": 1.3, "near": 0.1, "far": 3.0, "noise": { "sigma": 0.001, "dropout": 0.005 } },
  "labeling": { "radius": 0.005, "collision_margin": 0.001, "cloud_points": 2048, "crop_margin": 0.0 }
}"#;

fn tiny_config(dir: &Path) -> PathBuf {
    let p = dir.join("tiny.json");
    std::fs::write(&p, TINY).unwrap();
    p
}

fn run(args: &[&str]) -> Output {
    Command::new(BIN).args(args).env("RUST_LOG", "warn").output().unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn tree(root: &Path) -> Vec<(String, Vec<u8>)> {
    let mut out = Vec::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in std::fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                let rel = p.strip_prefix(root).unwrap().to_string_lossy().into_owned();
                out.push((rel, std::fs::read(&p).unwrap()));
            }
        }
    }
    out.sort();
    out
}

#[test]
fn pipeline_is_byte_identical_and_matches_stagewise_run() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = tiny_config(dir.path());
    let (a, b, c) = (dir.path().join("a"), dir.path().join("b"), dir.path().join("c"));
    for out in [&a, &b] {
        let o = run(&["pipeline", "--config", s(&cfg), "--objects", "3", "--scenes", "5", "--seed", "7", "--out", s(out)]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    }
    let ta = tree(&a);
    assert!(ta.iter().any(|(p, _)| p == "targets/scene_0004.ply"));
    assert_eq!(ta, tree(&b));

    for stage in ["gen-grasps", "compose", "render", "label", "encode", "stats", "export-viz"] {
        let o = run(&[stage, "--config", s(&cfg), "--objects", "3", "--scenes", "5", "--seed", "7", "--out", s(&c)]);
        assert!(o.status.success(), "{stage}: {}", String::from_utf8_lossy(&o.stderr));
    }
    assert_eq!(ta, tree(&c));

    // Stages after the first pick the config up from the manifest.
    let o = run(&["label", "--out", s(&c)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(ta, tree(&c));

    let o = run(&["validate", "--out", s(&a)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn validate_names_a_corrupted_file() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = tiny_config(dir.path());
    let out = dir.path().join("d");
    assert!(run(&["pipeline", "--config", s(&cfg), "--out", s(&out)]).status.success());
    let victim = out.join("clouds/scene_0001.ply");
    let mut bytes = std::fs::read(&victim).unwrap();
    let n = bytes.len();
    bytes[n - 7] ^= 0x40;
    std::fs::write(&victim, bytes).unwrap();
    let o = run(&["validate", "--out", s(&out)]);
    assert_eq!(o.status.code(), Some(1));
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("clouds/scene_0001.ply"), "{err}");
    assert!(!err.contains("scene_0000.ply"), "only the damaged file is reported: {err}");
}

#[test]
fn config_errors_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("d");
    let o = run(&["pipeline", "--radius=-0.001", "--out", s(&out)]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("radius"));
    assert!(!out.exists(), "nothing is written before validation");

    let o = run(&["gen-grasps", "--config", s(&dir.path().join("missing.json")), "--out", s(&out)]);
    assert_eq!(o.status.code(), Some(2));

    let o = run(&["label", "--out", s(&out)]);
    assert_eq!(o.status.code(), Some(2), "labeling without inputs is a config error");
}

#[test]
fn stats_prints_eight_width_bins() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = tiny_config(dir.path());
    let out = dir.path().join("d");
    assert!(run(&["pipeline", "--config", s(&cfg), "--out", s(&out)]).status.success());
    let o = run(&["stats", "--out", s(&out)]);
    assert!(o.status.success());
    let text = String::from_utf8_lossy(&o.stdout);
    let bins: Vec<&str> = text.lines().filter(|l| l.trim_start().starts_with('[')).collect();
    assert_eq!(bins.len(), 8, "{text}");
    assert!(bins[0].contains("[0.0, 0.5)") && bins[7].contains("[3.5, 4.0]"));
}

#[test]
fn flags_override_the_file() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = tiny_config(dir.path());
    let out = dir.path().join("d");
    let o = run(&["gen-grasps", "--config", s(&cfg), "--objects", "1", "--friction", "0.5", "--radius", "0.004", "--no-noise", "--out", s(&out)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let m: serde_json::Value = serde_json::from_slice(&std::fs::read(out.join("manifest.json")).unwrap()).unwrap();
    let c = &m["config"];
    assert_eq!(c["objects"], 1);
    assert_eq!(c["sampler"]["friction"], 0.5);
    assert_eq!(c["labeling"]["radius"], 0.004);
    assert_eq!(c["camera"]["noise"]["sigma"], 0.0);
    assert!(c["paths"]["out"].is_null(), "output location stays out of the snapshot");
    let lib: serde_json::Value = serde_json::from_slice(&std::fs::read(out.join("library.json")).unwrap()).unwrap();
    assert_eq!(lib["objects"][0]["friction"], 0.5);
}

fn schema(name: &str) -> jsonschema::Validator {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../docs/schemas").join(name);
    let v: serde_json::Value = serde_json::from_slice(&std::fs::read(&path).unwrap()).unwrap();
    jsonschema::validator_for(&v).unwrap_or_else(|e| panic!("{name}: {e}"))
}

fn conforms(validator: &jsonschema::Validator, doc: &serde_json::Value, what: &str) {
    let errors: Vec<String> = validator.iter_errors(doc).map(|e| format!("{} at {}", e, e.instance_path())).collect();
    assert!(errors.is_empty(), "{what}: {errors:?}");
}

#[test]
fn written_json_matches_the_shipped_schemas() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = tiny_config(dir.path());
    let out = dir.path().join("d");
    assert!(run(&["pipeline", "--config", s(&cfg), "--out", s(&out)]).status.success());
    let read = |p: &Path| -> serde_json::Value { serde_json::from_slice(&std::fs::read(p).unwrap()).unwrap() };
    let mut checked = 0;
    for (file, name) in [
        ("library.json", "library.schema.json"),
        ("splits.json", "splits.schema.json"),
        ("stats.json", "stats.schema.json"),
        ("manifest.json", "manifest.schema.json"),
    ] {
        conforms(&schema(name), &read(&out.join(file)), file);
        checked += 1;
    }
    for (sub, name) in [("grasps", "grasp-set.schema.json"), ("scenes", "scene.schema.json"), ("labels", "labels.schema.json")] {
        let v = schema(name);
        for e in std::fs::read_dir(out.join(sub)).unwrap() {
            let p = e.unwrap().path();
            conforms(&v, &read(&p), &p.display().to_string());
            checked += 1;
        }
    }
    let config = schema("run-config.schema.json");
    conforms(&config, &read(&out.join("manifest.json"))["config"], "config snapshot");
    conforms(&config, &read(&cfg), "tiny config");
    let desk = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs/desk.json");
    conforms(&config, &read(&desk), "desk config");
    assert_eq!(checked, 4 + 2 + 2 + 2);

    let mut bad = read(&out.join("scenes/scene_0000.json"));
    bad["instances"][0]["pose"]["translation"] = serde_json::json!([0.0, 0.0]);
    assert!(!schema("scene.schema.json").is_valid(&bad));
}
