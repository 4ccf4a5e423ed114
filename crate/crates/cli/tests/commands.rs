mod common;

use common::*;
use saa_cli::commands::{self, RunSummary, SUMMARY_FILE};
use saa_core::eval::{AblationTable, EvalReport, ManifestDocument};
use saa_core::{Backends, Mode};

#[test]
fn run_writes_one_triple_per_image() {
    let out = tempfile::tempdir().unwrap();
    let code = saa(&[
        "run", "--manifest", path_str(&desk_manifest()), "--profile", path_str(&desk_profile()),
        "--mode", "saa+", "--out", path_str(out.path()),
    ]);
    assert_eq!(code, 0);
    let names: Vec<String> = std::fs::read_dir(out.path())
        .unwrap()
        .map(|e| e.unwrap().file_name().into_string().unwrap())
        .collect();
    assert_eq!(names.len(), 18 * 3 + 1);
    for ext in [".bin", ".png", ".trace.json"] {
        assert_eq!(names.iter().filter(|n| n.ends_with(ext)).count(), 18, "{ext}");
    }
    let summary: RunSummary = serde_json::from_str(&std::fs::read_to_string(out.path().join(SUMMARY_FILE)).unwrap()).unwrap();
    assert_eq!(summary.mode, Mode::SaaPlus);
    assert_eq!(summary.images.len(), 18);
}

#[test]
fn eval_of_an_oracle_run_is_perfect_and_round_trips() {
    let pred = tempfile::tempdir().unwrap();
    let doc = commands::load_profile(&desk_profile()).unwrap();
    commands::run(&desk_manifest(), &doc, Mode::SaaPlus, pred.path(), &Backends::oracle(desk_fixture())).unwrap();
    let out = tempfile::tempdir().unwrap();
    let path = out.path().join("report.json");
    let report = commands::eval(pred.path(), &desk_manifest(), &path).unwrap();
    for c in &report.categories {
        assert_eq!(c.max_f1_pixel, 1.0, "{}", c.category);
    }
    assert_eq!(report.metadata.profile_hash, doc.hash_hex());
    let reread: EvalReport = serde_json::from_str(&std::fs::read_to_string(&path).unwrap()).unwrap();
    assert_eq!(reread, report);
    assert!(path.with_extension("txt").is_file() && path.with_extension("csv").is_file());
}

#[test]
fn eval_with_half_the_predictions_exits_2() {
    let pred = tempfile::tempdir().unwrap();
    let doc = commands::load_profile(&desk_profile()).unwrap();
    commands::run(&desk_manifest(), &doc, Mode::Saa, pred.path(), &Backends::oracle(desk_fixture())).unwrap();
    let m = saa_core::eval::load_manifest(&desk_manifest()).unwrap();
    for e in m.entries.iter().step_by(2) {
        std::fs::remove_file(pred.path().join(format!("{}.bin", e.id))).unwrap();
    }
    let err = commands::eval(pred.path(), &desk_manifest(), &pred.path().join("r.json")).unwrap_err();
    assert_eq!(err.exit_code(), 2);
    assert!(err.to_string().contains("candle_000"), "{err}");
    let out = tempfile::tempdir().unwrap();
    let code = saa(&["eval", "--pred", path_str(pred.path()), "--manifest", path_str(&desk_manifest()), "--out", path_str(&out.path().join("r.json"))]);
    assert_eq!(code, 2);
}

#[test]
fn ablate_writes_five_rows_in_order() {
    let out = tempfile::tempdir().unwrap();
    let path = out.path().join("ablation.json");
    let code = saa(&["ablate", "--manifest", path_str(&desk_manifest()), "--profile", path_str(&desk_profile()), "--out", path_str(&path)]);
    assert_eq!(code, 0);
    let table: AblationTable = serde_json::from_str(&std::fs::read_to_string(&path).unwrap()).unwrap();
    let labels: Vec<&str> = table.rows.iter().map(|r| r.label.as_str()).collect();
    assert_eq!(labels, ["w/o P^L", "w/o P^P", "w/o P^S", "w/o P^C", "Full Model (SAA+)"]);
    let full = table.full().unwrap().score().unwrap();
    assert!(table.rows.iter().all(|r| r.score().unwrap() <= full));
    let csv = std::fs::read_to_string(path.with_extension("csv")).unwrap();
    let first_col: Vec<&str> = csv.lines().map(|l| l.split(',').next().unwrap()).collect();
    assert_eq!(first_col, ["Model Variants", "w/o P^L", "w/o P^P", "w/o P^S", "w/o P^C", "Full Model (SAA+)"]);
}

#[test]
fn empty_manifest_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let m = dir.path().join("manifest.json");
    ManifestDocument::new("empty", ".", vec![]).write(&m).unwrap();
    let code = saa(&["ablate", "--manifest", path_str(&m), "--profile", path_str(&desk_profile()), "--out", path_str(&dir.path().join("a.json"))]);
    assert_eq!(code, 2);
}

#[test]
fn unknown_mode_exits_2() {
    let out = tempfile::tempdir().unwrap();
    let code = saa(&[
        "run", "--manifest", path_str(&desk_manifest()), "--profile", path_str(&desk_profile()),
        "--mode", "saa++", "--out", path_str(out.path()),
    ]);
    assert_eq!(code, 2);
}

#[test]
fn missing_profile_exits_2() {
    let out = tempfile::tempdir().unwrap();
    let code = saa(&[
        "run", "--manifest", path_str(&desk_manifest()), "--profile", "/nonexistent/profile.json",
        "--mode", "saa", "--out", path_str(out.path()),
    ]);
    assert_eq!(code, 2);
}

#[test]
fn adapter_down_exits_3_after_retries() {
    let out = tempfile::tempdir().unwrap();
    let url = format!("http://127.0.0.1:{}", dead_port());
    let code = saa(&[
        "run", "--manifest", path_str(&desk_manifest()), "--profile", path_str(&desk_profile()),
        "--mode", "saa+", "--out", path_str(out.path()), "--backend-url", &url, "--retries", "1",
    ]);
    assert_eq!(code, 3);
}

#[test]
fn remote_adapter_reproduces_the_oracle_maps() {
    let addr = spawn_adapter(2);
    let doc = commands::load_profile(&desk_profile()).unwrap();
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    commands::run(&desk_manifest(), &doc, Mode::SaaPlus, a.path(), &Backends::oracle(desk_fixture())).unwrap();
    let url = format!("http://{addr}");
    // The adapter rejects its first two requests; retries absorb them.
    let code = saa(&[
        "run", "--manifest", path_str(&desk_manifest()), "--profile", path_str(&desk_profile()),
        "--mode", "saa+", "--out", path_str(b.path()), "--backend-url", &url, "--retries", "3",
    ]);
    assert_eq!(code, 0);
    let m = saa_core::eval::load_manifest(&desk_manifest()).unwrap();
    for e in &m.entries {
        let x = std::fs::read(a.path().join(format!("{}.bin", e.id))).unwrap();
        let y = std::fs::read(b.path().join(format!("{}.bin", e.id))).unwrap();
        assert_eq!(x, y, "{}", e.id);
    }
}

#[test]
fn make_desk_matches_the_shipped_copy() {
    let out = tempfile::tempdir().unwrap();
    assert_eq!(saa(&["make-desk", "--out", path_str(out.path())]), 0);
    let m = saa_core::eval::load_manifest(&out.path().join("manifest.json")).unwrap();
    assert_eq!(m.entries.len(), 18);
    for name in ["manifest.json", "fixtures.json", "profile.json", "candle/test/defect/000.png"] {
        assert_eq!(std::fs::read(out.path().join(name)).unwrap(), std::fs::read(desk_dir().join(name)).unwrap(), "{name}");
    }
}

#[test]
fn manifest_command_builds_an_mvtec_manifest() {
    let out = tempfile::tempdir().unwrap();
    let root = out.path().join("data");
    std::fs::create_dir_all(root.join("toy/test/good")).unwrap();
    std::fs::copy(desk_dir().join("candle/test/good/004.png"), root.join("toy/test/good/000.png")).unwrap();
    let m = out.path().join("m.json");
    assert_eq!(saa(&["manifest", "--layout", "mvtec", "--root", path_str(&root), "--dataset", "toy", "--out", path_str(&m)]), 0);
    assert_eq!(saa_core::eval::load_manifest(&m).unwrap().entries[0].id, "toy_good_000");
}
