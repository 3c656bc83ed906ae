use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use activeray::evolution::{evolve, seed_contour, EvolutionConfig};
use activeray::scene::{load_fields, save_fields};
use activeray::{FieldSet, ScalarField, Scene};
use serde_json::Value;

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_activeray"))
        .args(args)
        .env("ARE_THREADS", "1")
        .output()
        .expect("binary runs")
}

fn s(p: &Path) -> String {
    p.to_string_lossy().into_owned()
}

fn synth_one(root: &Path, extra: &[&str]) -> PathBuf {
    let out = root.join("synth");
    let out_arg = s(&out);
    let mut args = vec!["synth", "--out", &out_arg, "--seed", "11"];
    args.extend_from_slice(extra);
    let o = run(&args);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    out.join("scene_0000")
}

fn read_json(p: &Path) -> Value {
    serde_json::from_slice(&std::fs::read(p).expect("file exists")).expect("valid json")
}

#[test]
fn unknown_flag_is_a_usage_error() {
    assert_eq!(run(&["synth", "--bogus"]).status.code(), Some(2));
    assert_eq!(
        run(&["evolve", "--scene", "x", "--out", "y", "--L", "3"])
            .status
            .code(),
        Some(2)
    );
}

#[test]
fn missing_scene_is_an_io_error() {
    let tmp = tempfile::tempdir().unwrap();
    let o = run(&[
        "evolve",
        "--scene",
        &s(&tmp.path().join("nope")),
        "--out",
        &s(&tmp.path().join("o")),
    ]);
    assert_eq!(o.status.code(), Some(3));
    assert!(!o.stderr.is_empty());
}

#[test]
fn non_finite_evolution_is_a_numeric_error() {
    let tmp = tempfile::tempdir().unwrap();
    let scene = synth_one(tmp.path(), &[]);
    let fields = load_fields(&scene).unwrap();
    let (d, beta, kappa) = fields.into_parts();
    let huge = ScalarField::constant(beta.width(), beta.height(), f64::MAX);
    save_fields(&FieldSet::new(d, huge, kappa).unwrap(), &scene).unwrap();
    let o = run(&[
        "evolve",
        "--scene",
        &s(&scene),
        "--out",
        &s(&tmp.path().join("o")),
        "--dt",
        "0.5",
    ]);
    assert_eq!(
        o.status.code(),
        Some(4),
        "{}",
        String::from_utf8_lossy(&o.stderr)
    );
}

#[test]
fn zero_steps_returns_the_initialization() {
    let tmp = tempfile::tempdir().unwrap();
    let scene = synth_one(tmp.path(), &["--instances", "2"]);
    let out = tmp.path().join("o");
    assert!(run(&[
        "evolve",
        "--scene",
        &s(&scene),
        "--out",
        &s(&out),
        "--steps",
        "0"
    ])
    .status
    .success());
    let file = read_json(&out.join("contours.json"));
    for inst in file["instances"].as_array().unwrap() {
        assert_eq!(inst["initial"], inst["contours"]);
    }
    let manifest = read_json(&out.join("manifest.json"));
    assert_eq!(manifest["command"], "evolve");
}

#[test]
fn zero_train_steps_keeps_fields_byte_identical() {
    let tmp = tempfile::tempdir().unwrap();
    let scene = synth_one(tmp.path(), &[]);
    let out = tmp.path().join("t");
    assert!(run(&[
        "train",
        "--scene",
        &s(&scene),
        "--train-steps",
        "0",
        "--out",
        &s(&out)
    ])
    .status
    .success());
    for name in ["d.arf", "beta.arf", "kappa.arf"] {
        assert_eq!(
            std::fs::read(scene.join(name)).unwrap(),
            std::fs::read(out.join(name)).unwrap(),
            "{name}"
        );
    }
}

#[test]
fn eval_of_ground_truth_against_itself_is_perfect() {
    let tmp = tempfile::tempdir().unwrap();
    let scene = synth_one(tmp.path(), &["--instances", "3", "--shape", "star"]);
    let report = tmp.path().join("r.json");
    let curve = tmp.path().join("c.csv");
    let o = run(&[
        "eval",
        "--pred",
        &s(&scene),
        "--gt",
        &s(&scene),
        "--out",
        &s(&report),
        "--curve",
        &s(&curve),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let r = read_json(&report);
    assert_eq!(r["mean_iou"], 1.0);
    assert_eq!(r["weighted_coverage"], 1.0);
    assert_eq!(r["mean_boundf"], 1.0);
    assert!(tmp.path().join("r.json.manifest.json").exists());
    assert!(std::fs::read_to_string(curve)
        .unwrap()
        .starts_with("error,recall"));
}

#[test]
fn eval_of_empty_prediction_has_zero_coverage() {
    let tmp = tempfile::tempdir().unwrap();
    let scene = synth_one(tmp.path(), &[]);
    let pred = tmp.path().join("empty");
    std::fs::create_dir(&pred).unwrap();
    let file = serde_json::json!({
        "width": 64, "height": 64,
        "instances": [{ "instance": 0, "initial": [], "contours": [] }],
    });
    std::fs::write(pred.join("contours.json"), file.to_string()).unwrap();
    let report = tmp.path().join("r.json");
    assert!(run(&[
        "eval",
        "--pred",
        &s(&pred),
        "--gt",
        &s(&scene),
        "--out",
        &s(&report)
    ])
    .status
    .success());
    let r = read_json(&report);
    assert_eq!(r["weighted_coverage"], 0.0);
    assert_eq!(r["mean_iou"], 0.0);
}

#[test]
fn cli_evolution_matches_the_library() {
    let tmp = tempfile::tempdir().unwrap();
    let scene_dir = synth_one(tmp.path(), &[]);
    let out = tmp.path().join("o");
    let o = run(&[
        "evolve",
        "--scene",
        &s(&scene_dir),
        "--out",
        &s(&out),
        "--dt",
        "0.5",
        "--L",
        "24",
    ]);
    assert!(o.status.success());

    let scene = Scene::load(&scene_dir).unwrap();
    let init = seed_contour(&scene.instance_masks()[0], 24, 1.0)
        .unwrap()
        .unwrap();
    let cfg = EvolutionConfig {
        dt: 0.5,
        ..Default::default()
    };
    let (lib, _) = evolve(&init, &scene.fields, &cfg).unwrap();

    let file = read_json(&out.join("contours.json"));
    let radii: Vec<f64> = file["instances"][0]["contours"][0]["radii"]
        .as_array()
        .unwrap()
        .iter()
        .map(|v| v.as_f64().unwrap())
        .collect();
    assert_eq!(radii, lib.radii());
    let csv = std::fs::read_to_string(out.join("metrics.csv")).unwrap();
    assert!(csv.starts_with("instance,iou,gt_area,boundf"));
}

#[test]
fn synth_writes_one_directory_per_scene() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("s");
    assert!(run(&[
        "synth",
        "--out",
        &s(&out),
        "--count",
        "3",
        "--shape",
        "ushape"
    ])
    .status
    .success());
    for i in 0..3 {
        let dir = out.join(format!("scene_{i:04}"));
        let scene = Scene::load(&dir).unwrap();
        assert_eq!(scene.seed, i);
    }
    assert_eq!(read_json(&out.join("manifest.json"))["command"], "synth");
}
