#![allow(dead_code)]

use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use saa_cli::adapter::{self, Adapter};
use saa_cli::service::{self, AppState};
use saa_core::backends::OracleFixture;
use saa_core::eval::load_manifest;
use saa_core::Backends;

pub fn desk_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../fixtures/desk")
}

pub fn desk_manifest() -> PathBuf {
    desk_dir().join("manifest.json")
}

pub fn desk_profile() -> PathBuf {
    desk_dir().join("profile.json")
}

pub fn desk_fixture() -> OracleFixture {
    OracleFixture::load(&desk_dir().join("fixtures.json")).unwrap()
}

pub fn saa(args: &[&str]) -> i32 {
    saa_cli::main_with(std::iter::once("saa").chain(args.iter().copied()))
}

pub fn path_str(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// Serves `router` on an ephemeral port from a background thread.
pub fn spawn(router: axum::Router) -> SocketAddr {
    let listener = std::net::TcpListener::bind("127.0.0.1:0").unwrap();
    listener.set_nonblocking(true).unwrap();
    let addr = listener.local_addr().unwrap();
    std::thread::spawn(move || {
        let rt = tokio::runtime::Builder::new_multi_thread().enable_all().build().unwrap();
        rt.block_on(async move {
            let l = tokio::net::TcpListener::from_std(listener).unwrap();
            axum::serve(l, router).await.unwrap();
        });
    });
    addr
}

pub fn spawn_adapter(fail_first: usize) -> SocketAddr {
    let m = load_manifest(&desk_manifest()).unwrap();
    let a = Adapter::new(&m, desk_fixture(), 400, fail_first).unwrap();
    spawn(adapter::router(Arc::new(a)))
}

pub fn spawn_service(profiles: &Path, backends: Backends) -> SocketAddr {
    let m = load_manifest(&desk_manifest()).unwrap();
    let state = Arc::new(AppState::new(m, profiles.to_path_buf(), backends, 2));
    spawn(service::router(state))
}

/// A port nothing listens on.
pub fn dead_port() -> u16 {
    let l = std::net::TcpListener::bind("127.0.0.1:0").unwrap();
    l.local_addr().unwrap().port()
}

pub fn agent() -> ureq::Agent {
    ureq::Agent::config_builder()
        .http_status_as_error(false)
        .build()
        .into()
}

pub fn get_json(agent: &ureq::Agent, url: &str) -> (u16, serde_json::Value) {
    let mut r = agent.get(url).call().unwrap();
    let status = r.status().as_u16();
    let text = r.body_mut().with_config().limit(1 << 30).read_to_string().unwrap();
    (status, serde_json::from_str(&text).unwrap())
}

pub fn send_json(agent: &ureq::Agent, method: &str, url: &str, body: &str) -> (u16, serde_json::Value) {
    let req = match method {
        "PUT" => agent.put(url),
        _ => agent.post(url),
    };
    let mut r = req.header("content-type", "application/json").send(body).unwrap();
    let status = r.status().as_u16();
    let text = r.body_mut().with_config().limit(1 << 30).read_to_string().unwrap();
    (status, serde_json::from_str(&text).unwrap())
}
