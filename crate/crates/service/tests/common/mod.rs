#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::sync::Arc;

use axum::body::Body;
use axum::http::{Request, StatusCode};
use axum::Router;
use http_body_util::BodyExt;
use tower::ServiceExt;

use aoglab::aog::save_aog;
use aoglab::eval::{generate_synthetic, write_synthetic, SyntheticConfig};
use aoglab::geometry::Rect;
use aoglab::miner::{mine, MinerConfig};
use aoglab::tensor_store::{Dataset, LayerGeometry, LayerGroups};
use aoglab_service::{router, AppState};

/// Small two-layer planted set; small enough for the brute-force parser.
pub fn tiny_config() -> SyntheticConfig {
    SyntheticConfig {
        seed: 7,
        width_px: 64,
        height_px: 64,
        layers: vec![
            LayerGeometry::new("low", 16, 16, 3, 4, 12, 2.0),
            LayerGeometry::new("high", 8, 8, 2, 8, 28, 4.0),
        ],
        layer_groups: LayerGroups {
            low: vec!["low".into()],
            high: vec!["high".into()],
            ..Default::default()
        },
        templates: 2,
        patterns_per_layer: 1,
        distractor_channels: 1,
        test_images: 4,
        part_box_px: 16.0,
        center_region: Rect::new(24.0, 24.0, 16.0, 16.0),
        jitter_px: 4.0,
        displacement_px: [8.0, 0.0, 12.0],
        ..Default::default()
    }
}

pub fn miner_config() -> MinerConfig {
    MinerConfig {
        part_name: "head".into(),
        patterns_per_layer: 1,
        deform_half_extent: Some(1),
        ..Default::default()
    }
}

/// Data root with `datasets/tiny/{manifest.json, aog.json, ...}`.
pub fn data_root() -> (tempfile::TempDir, PathBuf) {
    let dir = tempfile::tempdir().unwrap();
    let ds = dir.path().join("datasets").join("tiny");
    let manifest = write_synthetic(&generate_synthetic(&tiny_config()).unwrap(), &ds).unwrap();
    let data = Dataset::load(&manifest).unwrap();
    save_aog(&mine(&data, &miner_config()).unwrap(), ds.join("aog.json")).unwrap();
    (dir, manifest)
}

pub fn dataset(manifest: &Path) -> Dataset {
    Dataset::load(manifest).unwrap()
}

pub struct Harness {
    pub _dir: tempfile::TempDir,
    pub manifest: PathBuf,
    pub state: Arc<AppState>,
    pub app: Router,
}

pub fn harness() -> Harness {
    let (dir, manifest) = data_root();
    let state = Arc::new(AppState::open(dir.path()).unwrap());
    let app = router(state.clone());
    Harness {
        _dir: dir,
        manifest,
        state,
        app,
    }
}

pub struct Reply {
    pub status: StatusCode,
    pub content_type: Option<String>,
    pub headers: axum::http::HeaderMap,
    pub body: Vec<u8>,
}

impl Reply {
    pub fn json(&self) -> serde_json::Value {
        serde_json::from_slice(&self.body).unwrap_or_else(|e| panic!("{e}: {}", String::from_utf8_lossy(&self.body)))
    }
}

pub async fn call(app: &Router, method: &str, uri: &str, body: Option<serde_json::Value>) -> Reply {
    let mut req = Request::builder().method(method).uri(uri);
    let body = match body {
        Some(v) => {
            req = req.header("content-type", "application/json");
            Body::from(serde_json::to_vec(&v).unwrap())
        }
        None => Body::empty(),
    };
    let resp = app.clone().oneshot(req.body(body).unwrap()).await.unwrap();
    let status = resp.status();
    let headers = resp.headers().clone();
    let content_type = headers
        .get("content-type")
        .map(|v| v.to_str().unwrap().to_string());
    let body = resp.into_body().collect().await.unwrap().to_bytes().to_vec();
    Reply {
        status,
        content_type,
        headers,
        body,
    }
}

pub async fn open_session(app: &Router) -> String {
    let r = call(app, "POST", "/v1/sessions", Some(serde_json::json!({"dataset_id": "tiny", "aog": "aog.json"}))).await;
    assert_eq!(r.status, StatusCode::CREATED, "{}", String::from_utf8_lossy(&r.body));
    r.json()["session_id"].as_str().unwrap().to_string()
}
