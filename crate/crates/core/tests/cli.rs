use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;
use sha2::{Digest, Sha256};
use tempfile::TempDir;

fn clf(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_clf")).args(args).output().unwrap()
}

fn ok(args: &[&str]) -> String {
    let out = clf(args);
    assert!(out.status.success(), "clf {args:?}: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn json(path: &Path) -> Value {
    serde_json::from_slice(&fs::read(path).unwrap()).unwrap()
}

fn synth(dir: &Path, frames: usize, seed: u64) -> PathBuf {
    let bundle = dir.join(format!("bundle-{seed}"));
    ok(&[
        "synth",
        "--frames",
        &frames.to_string(),
        "--seed",
        &seed.to_string(),
        "--occluder",
        "0,0,0.3,invalid",
        "--occluder",
        "2,0.5,0.7,occlusion_valid",
        "--out",
        s(&bundle),
    ]);
    bundle
}

fn generate(bundle: &Path, out: &Path, extra: &[&str]) -> Value {
    let mut args = vec!["generate", "--input", s(bundle), "--out", s(out)];
    args.extend_from_slice(extra);
    ok(&args);
    json(&out.join("manifest.json"))
}

fn files_under(dir: &Path) -> Vec<(PathBuf, Vec<u8>)> {
    let mut out = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else if p.file_name().unwrap() != "manifest.json" {
                out.push((p.strip_prefix(dir).unwrap().to_path_buf(), fs::read(&p).unwrap()));
            }
        }
    }
    out.sort();
    out
}

#[test]
fn missing_input_exits_with_status_two() {
    let tmp = TempDir::new().unwrap();
    let bundle = synth(tmp.path(), 2, 0);
    let out = clf(&[
        "generate",
        "--input",
        s(&bundle),
        "--calibration",
        s(&tmp.path().join("nope.json")),
        "--out",
        s(&tmp.path().join("labels")),
    ]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("nope.json"));

    fs::write(bundle.join("map.cmap.json"), "{\"city\": 3}").unwrap();
    let out = clf(&["generate", "--input", s(&bundle), "--out", s(&tmp.path().join("l2"))]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("map.cmap.json"));
}

#[test]
fn invalid_settings_exit_with_status_one() {
    let tmp = TempDir::new().unwrap();
    let bundle = synth(tmp.path(), 1, 0);
    let config = tmp.path().join("run.json");
    fs::write(&config, r#"{"t_occ": -0.5}"#).unwrap();
    let out = clf(&["generate", "--config", s(&config), "--input", s(&bundle), "--out", s(&tmp.path().join("l"))]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("invalid configuration"));
}

#[test]
fn manifest_hash_is_reproducible() {
    let tmp = TempDir::new().unwrap();
    let bundle = synth(tmp.path(), 6, 3);
    let a = generate(&bundle, &tmp.path().join("a"), &["--jobs", "1"]);
    let b = generate(&bundle, &tmp.path().join("b"), &["--jobs", "4"]);
    assert_eq!(a["hash"], b["hash"]);
    assert_eq!(files_under(&tmp.path().join("a")), files_under(&tmp.path().join("b")));
    assert_eq!(a["counts"]["frames"], 6);

    let c = generate(&bundle, &tmp.path().join("c"), &["--t-occ", "0.2"]);
    assert_ne!(a["hash"], c["hash"]);

    for entry in a["outputs"].as_array().unwrap() {
        let bytes = fs::read(tmp.path().join("a").join(entry["path"].as_str().unwrap())).unwrap();
        assert_eq!(entry["sha256"].as_str().unwrap(), hex::encode(Sha256::digest(&bytes)));
    }
}

#[test]
fn rerun_from_manifest_is_byte_identical() {
    let tmp = TempDir::new().unwrap();
    let bundle = synth(tmp.path(), 4, 1);
    let first = generate(&bundle, &tmp.path().join("first"), &["--t-occ", "0.3", "--emit-heads"]);
    let manifest = tmp.path().join("first/manifest.json");
    ok(&["generate", "--config", s(&manifest), "--out", s(&tmp.path().join("again"))]);
    let again = json(&tmp.path().join("again/manifest.json"));
    assert_eq!(first["hash"], again["hash"]);
    assert_eq!(files_under(&tmp.path().join("first")), files_under(&tmp.path().join("again")));
}

#[test]
fn filter_matches_direct_generation() {
    let tmp = TempDir::new().unwrap();
    let bundle = synth(tmp.path(), 3, 2);
    generate(&bundle, &tmp.path().join("raw"), &["--t-occ", "none"]);
    generate(&bundle, &tmp.path().join("direct"), &["--t-occ", "0.2"]);
    ok(&[
        "filter",
        "--labels",
        s(&tmp.path().join("raw/labels")),
        "--calibration",
        s(&bundle.join("calibration.calib.json")),
        "--t-occ",
        "0.2",
        "--out",
        s(&tmp.path().join("filtered")),
    ]);
    assert_eq!(files_under(&tmp.path().join("direct/labels")), files_under(&tmp.path().join("filtered/labels")));

    let out = clf(&[
        "filter",
        "--labels",
        s(&tmp.path().join("direct/labels")),
        "--calibration",
        s(&bundle.join("calibration.calib.json")),
        "--t-occ",
        "0.4",
        "--out",
        s(&tmp.path().join("twice")),
    ]);
    assert!(!out.status.success());
}

#[test]
fn sample_train_picks_one_frame_per_window() {
    let tmp = TempDir::new().unwrap();
    let bundle = synth(tmp.path(), 40, 4);
    generate(&bundle, &tmp.path().join("l"), &[]);
    let labels = tmp.path().join("l/labels");
    let pick = |window: &str, seed: &str| -> Value {
        serde_json::from_str(&ok(&["sample-train", "--labels", s(&labels), "--window", window, "--seed", seed])).unwrap()
    };
    let two = pick("20", "9");
    let frames = two["frames"].as_array().unwrap();
    assert_eq!(frames.len(), 2);
    let stamps: Vec<i64> = frames
        .iter()
        .map(|f| f.as_str().unwrap().rsplit_once("__").unwrap().1.parse().unwrap())
        .collect();
    let mut all: Vec<i64> = fs::read_dir(&labels)
        .unwrap()
        .map(|e| {
            let name = e.unwrap().file_name().into_string().unwrap();
            name.trim_end_matches(".clabel.json").rsplit_once("__").unwrap().1.parse().unwrap()
        })
        .collect();
    all.sort();
    assert!(all[..20].contains(&stamps[0]) && all[20..].contains(&stamps[1]));
    assert_eq!(pick("20", "9"), two);
    assert_eq!(pick("40", "9")["frames"].as_array().unwrap().len(), 1);
    assert_eq!(pick("15", "9")["frames"].as_array().unwrap().len(), 3);
}

#[test]
fn stats_sum_over_splits() {
    let tmp = TempDir::new().unwrap();
    let mut manifests = Vec::new();
    let mut total = 0;
    for (seed, (split, frames)) in [("train", 5), ("val", 3), ("test", 2)].into_iter().enumerate() {
        let bundle = synth(tmp.path(), frames, seed as u64);
        let out = tmp.path().join(split);
        generate(&bundle, &out, &["--split", split, "--t-occ", "0.5"]);
        manifests.push(out.join("manifest.json"));
        total += frames;
    }
    let mut args = vec!["stats"];
    for m in &manifests {
        args.extend(["--manifest", s(m)]);
    }
    let report: Value = serde_json::from_str(&ok(&args)).unwrap();
    assert_eq!(report["total_frames"], total);
    assert_eq!(report["splits"]["train"], 5);
    assert_eq!(report["splits"]["val"], 3);
    assert_eq!(report["splits"]["test"], 2);
    let centerlines: u64 = manifests.iter().map(|m| json(m)["counts"]["centerlines"].as_u64().unwrap()).sum();
    assert_eq!(report["centerlines"], centerlines);
    let hist: u64 = report["r_occ_histogram"].as_array().unwrap().iter().map(|v| v.as_u64().unwrap()).sum();
    assert_eq!(hist, centerlines);
}

#[test]
fn decoded_perfect_heads_score_perfectly() {
    let tmp = TempDir::new().unwrap();
    let bundle = synth(tmp.path(), 3, 5);
    generate(&bundle, &tmp.path().join("gt"), &["--emit-heads", "--t-occ", "0.2"]);
    ok(&["decode", "--heads", s(&tmp.path().join("gt/heads")), "--out", s(&tmp.path().join("pred"))]);
    let report: Value = serde_json::from_str(&ok(&[
        "eval",
        "--pred",
        s(&tmp.path().join("pred/polylines")),
        "--gt",
        s(&tmp.path().join("gt/labels")),
    ]))
    .unwrap();
    assert_eq!(report["frames"], 3);
    assert_eq!(report["per_frame"].as_array().unwrap().len(), 3);
    assert_eq!(report["error_averaging"], "matched_points");
    assert_eq!(report["metrics"]["f1"], 1.0);
    assert!(report["metrics"]["tp"].as_u64().unwrap() > 0);
    assert!(report["metrics"]["x_err_near"].as_f64().unwrap() < 1e-6);
}

#[test]
fn render_writes_well_formed_svg() {
    let tmp = TempDir::new().unwrap();
    let bundle = synth(tmp.path(), 2, 6);
    generate(&bundle, &tmp.path().join("l"), &["--t-occ", "0.5"]);
    let out = tmp.path().join("svg");
    ok(&["render", "--labels", s(&tmp.path().join("l/labels")), "--image", "frame<&>.png", "--out", s(&out)]);
    let mut n = 0;
    for e in fs::read_dir(&out).unwrap() {
        let text = fs::read_to_string(e.unwrap().path()).unwrap();
        let doc = roxmltree::Document::parse(&text).unwrap();
        assert_eq!(doc.root_element().tag_name().name(), "svg");
        assert!(doc.descendants().any(|n| n.has_tag_name("polyline")));
        assert!(doc.descendants().any(|n| n.has_tag_name("circle")));
        n += 1;
    }
    assert_eq!(n, 2);
}
