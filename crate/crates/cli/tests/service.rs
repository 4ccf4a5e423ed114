mod common;

use base64::engine::general_purpose::STANDARD;
use base64::Engine as _;
use common::*;
use saa_core::backends::RemoteConfig;
use saa_core::{AnomalyMap, Backends, ProfileDocument};
use serde_json::json;

fn store_with_desk_profile() -> tempfile::TempDir {
    let dir = tempfile::tempdir().unwrap();
    std::fs::copy(desk_profile(), dir.path().join("desk.json")).unwrap();
    dir
}

#[test]
fn lists_images_and_serves_pngs() {
    let store = store_with_desk_profile();
    let base = format!("http://{}", spawn_service(store.path(), Backends::oracle(desk_fixture())));
    let a = agent();
    let (status, health) = get_json(&a, &format!("{base}/api/health"));
    assert_eq!((status, health["status"].as_str()), (200, Some("ok")));
    assert_eq!(health["run_slots"], 2);
    let (status, list) = get_json(&a, &format!("{base}/api/images"));
    assert_eq!(status, 200);
    assert_eq!(list["images"].as_array().unwrap().len(), 18);
    assert_eq!(list["categories"], json!(["candle", "capsule", "pcb"]));
    let (status, img) = get_json(&a, &format!("{base}/api/images/pcb_003/png"));
    assert_eq!(status, 200);
    let png = STANDARD.decode(img["png"].as_str().unwrap()).unwrap();
    assert_eq!(&png[1..4], b"PNG");
    assert!(img["ground_truth_png"].is_string());
    let (status, err) = get_json(&a, &format!("{base}/api/images/nope/png"));
    assert_eq!(status, 404);
    assert!(err["error"].as_str().unwrap().contains("nope"));
    assert_eq!(get_json(&a, &format!("{base}/api/unknown")).0, 404);
}

#[test]
fn profile_put_get_round_trip_and_versioning() {
    let store = store_with_desk_profile();
    let base = format!("http://{}", spawn_service(store.path(), Backends::oracle(desk_fixture())));
    let a = agent();
    let (status, listing) = get_json(&a, &format!("{base}/api/profiles"));
    assert_eq!(status, 200);
    assert_eq!(listing["profiles"][0]["id"], "desk");

    let mut doc = saa_core::desk::profile();
    doc.id = "tuned".into();
    doc.display_name = "Tuned".into();
    doc.profile.theta_area = 0.25;
    let body = doc.to_json_pretty();
    let (status, put) = send_json(&a, "PUT", &format!("{base}/api/profiles/tuned"), &body);
    assert_eq!(status, 200, "{put}");
    let (status, got) = get_json(&a, &format!("{base}/api/profiles/tuned"));
    assert_eq!(status, 200);
    assert_eq!(ProfileDocument::parse(&got.to_string()).unwrap(), doc);
    assert_eq!(got, serde_json::from_str::<serde_json::Value>(&body).unwrap());

    // Same version again: conflict. Next version: accepted.
    assert_eq!(send_json(&a, "PUT", &format!("{base}/api/profiles/tuned"), &body).0, 409);
    doc.version = 2;
    assert_eq!(send_json(&a, "PUT", &format!("{base}/api/profiles/tuned"), &doc.to_json_pretty()).0, 200);
    doc.version = 5;
    assert_eq!(send_json(&a, "PUT", &format!("{base}/api/profiles/tuned"), &doc.to_json_pretty()).0, 409);

    assert_eq!(send_json(&a, "PUT", &format!("{base}/api/profiles/tuned"), "{\"id\": 3}").0, 400);
    assert_eq!(send_json(&a, "PUT", &format!("{base}/api/profiles/other"), &doc.to_json_pretty()).0, 400);
    assert_eq!(get_json(&a, &format!("{base}/api/profiles/missing")).0, 404);
}

#[test]
fn run_returns_map_trace_and_counts() {
    let store = store_with_desk_profile();
    let base = format!("http://{}", spawn_service(store.path(), Backends::oracle(desk_fixture())));
    let a = agent();
    let (status, r) = send_json(&a, "POST", &format!("{base}/api/run"), r#"{"image_id": "candle_000", "profile": "desk", "mode": "saa+"}"#);
    assert_eq!(status, 200, "{r}");
    for key in ["trace", "anomaly_map_png", "anomaly_map_raw", "stage_counts", "timings_ms"] {
        assert!(!r[key].is_null(), "{key}");
    }
    let raw = STANDARD.decode(r["anomaly_map_raw"].as_str().unwrap()).unwrap();
    let map = AnomalyMap::from_bytes(&raw).unwrap();
    assert_eq!(map.shape(), (400, 400));
    assert_eq!(r["stage_counts"]["fused"], 3);
    assert_eq!(r["trace"]["stages"].as_array().unwrap().len(), 6);

    let (status, saa) = send_json(&a, "POST", &format!("{base}/api/run"), r#"{"image_id": "candle_000", "profile": "desk", "mode": "saa"}"#);
    assert_eq!(status, 200);
    assert_eq!(saa["stage_counts"]["fused"], 5);
}

#[test]
fn run_rejects_bad_requests() {
    let store = store_with_desk_profile();
    let base = format!("http://{}", spawn_service(store.path(), Backends::oracle(desk_fixture())));
    let a = agent();
    let url = format!("{base}/api/run");
    assert_eq!(send_json(&a, "POST", &url, "not json").0, 400);
    assert_eq!(send_json(&a, "POST", &url, r#"{"image_id": 4, "profile": "desk"}"#).0, 400);
    assert_eq!(send_json(&a, "POST", &url, r#"{"image_id": "candle_000", "profile": "desk", "mode": "fast"}"#).0, 400);
    assert_eq!(send_json(&a, "POST", &url, r#"{"image_id": "candle_000", "profile": {"id": "x"}}"#).0, 400);
    assert_eq!(send_json(&a, "POST", &url, r#"{"image_id": "candle_000", "profile": "desk", "extra": 1}"#).0, 400);
    assert_eq!(send_json(&a, "POST", &url, r#"{"image_id": "nope", "profile": "desk"}"#).0, 404);
    assert_eq!(send_json(&a, "POST", &url, r#"{"image_id": "candle_000", "profile": "nope"}"#).0, 404);
}

#[test]
fn inline_profiles_run_too() {
    let store = store_with_desk_profile();
    let base = format!("http://{}", spawn_service(store.path(), Backends::oracle(desk_fixture())));
    let body = json!({ "image_id": "pcb_005", "profile": serde_json::to_value(saa_core::desk::profile()).unwrap() });
    let (status, r) = send_json(&agent(), "POST", &format!("{base}/api/run"), &body.to_string());
    assert_eq!(status, 200, "{r}");
    assert_eq!(r["stage_counts"]["fused"], 1);
}

#[test]
fn backend_transport_failure_is_502() {
    let store = store_with_desk_profile();
    let mut cfg = RemoteConfig::with_base(&format!("http://127.0.0.1:{}", dead_port()));
    cfg.retries = 0;
    let base = format!("http://{}", spawn_service(store.path(), Backends::remote(cfg)));
    let (status, r) = send_json(&agent(), "POST", &format!("{base}/api/run"), r#"{"image_id": "candle_000", "profile": "desk"}"#);
    assert_eq!(status, 502, "{r}");
}
