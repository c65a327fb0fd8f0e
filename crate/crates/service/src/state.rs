//! Datasets, sessions and the parse cache behind the router.
//!
//! Layout under the data root:
//!
//! ```text
//! datasets/{dataset_id}/manifest.json
//! sessions/{session_id}.json
//! ```

use std::collections::HashMap;
use std::path::{Component, Path, PathBuf};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex, RwLock};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use aoglab::aog::{ParseTree, SemanticPartAOG};
use aoglab::interaction::InteractionSession;
use aoglab::tensor_store::{Dataset, DatasetManifest};

use crate::error::{ApiError, ApiResult};

/// One live session plus the references it was opened with.
#[derive(Debug, Clone)]
pub struct SessionEntry {
    pub dataset_id: String,
    /// File the base AOG came from (relative to the dataset), or `inline`.
    pub aog_ref: String,
    pub active_image: Option<String>,
    pub session: InteractionSession,
}

#[derive(Serialize, Deserialize)]
struct StoredSession {
    dataset_id: String,
    aog_ref: String,
    active_image: Option<String>,
    session: serde_json::Value,
}

impl SessionEntry {
    fn to_json(&self) -> ApiResult<String> {
        let stored = StoredSession {
            dataset_id: self.dataset_id.clone(),
            aog_ref: self.aog_ref.clone(),
            active_image: self.active_image.clone(),
            session: serde_json::to_value(&self.session).map_err(|e| ApiError::internal(e.to_string()))?,
        };
        serde_json::to_string_pretty(&stored).map_err(|e| ApiError::internal(e.to_string()))
    }

    fn from_json(text: &str) -> ApiResult<Self> {
        let stored: StoredSession = serde_json::from_str(text).map_err(|e| ApiError::internal(e.to_string()))?;
        Ok(Self {
            dataset_id: stored.dataset_id,
            aog_ref: stored.aog_ref,
            active_image: stored.active_image,
            session: InteractionSession::from_json(&stored.session.to_string())?,
        })
    }
}

pub type SharedSession = Arc<tokio::sync::Mutex<SessionEntry>>;

/// (dataset, image, AOG content hash).
type CacheKey = (String, String, String);

pub struct AppState {
    root: PathBuf,
    datasets: RwLock<HashMap<String, Arc<Dataset>>>,
    sessions: RwLock<HashMap<String, SharedSession>>,
    parse_cache: Mutex<HashMap<CacheKey, ParseTree>>,
    next_id: AtomicU64,
}

/// Hex SHA-256 of the AOG's JSON form.
pub fn aog_hash(aog: &SemanticPartAOG) -> String {
    let json = serde_json::to_vec(aog).expect("AOG serializes");
    hex::encode(Sha256::digest(&json))
}

// Ids become path components; keep them to a plain alphabet.
fn check_id(kind: &str, id: &str) -> ApiResult<()> {
    let ok = !id.is_empty()
        && id != "."
        && id != ".."
        && id.chars().all(|c| c.is_ascii_alphanumeric() || matches!(c, '_' | '-' | '.'));
    if ok {
        Ok(())
    } else {
        Err(ApiError::not_found(format!("unknown {kind} `{id}`")))
    }
}

impl AppState {
    /// Open a data root and load every stored session.
    pub fn open(root: impl Into<PathBuf>) -> ApiResult<Self> {
        let root = root.into();
        let state = Self {
            root,
            datasets: RwLock::default(),
            sessions: RwLock::default(),
            parse_cache: Mutex::default(),
            next_id: AtomicU64::new(0),
        };
        let dir = state.sessions_dir();
        let mut max_id = 0;
        if let Ok(entries) = std::fs::read_dir(&dir) {
            for e in entries.flatten() {
                let path = e.path();
                if path.extension().and_then(|x| x.to_str()) != Some("json") {
                    continue;
                }
                let text = std::fs::read_to_string(&path).map_err(|e| ApiError::internal(e.to_string()))?;
                let entry = SessionEntry::from_json(&text)?;
                let id = entry.session.session_id.clone();
                if let Some(n) = id.strip_prefix('s').and_then(|n| n.parse::<u64>().ok()) {
                    max_id = max_id.max(n + 1);
                }
                state
                    .sessions
                    .write()
                    .unwrap()
                    .insert(id, Arc::new(tokio::sync::Mutex::new(entry)));
            }
        }
        state.next_id.store(max_id, Ordering::SeqCst);
        Ok(state)
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    fn datasets_dir(&self) -> PathBuf {
        self.root.join("datasets")
    }

    fn sessions_dir(&self) -> PathBuf {
        self.root.join("sessions")
    }

    /// Dataset ids with a manifest, sorted.
    pub fn dataset_ids(&self) -> Vec<String> {
        let mut ids: Vec<String> = std::fs::read_dir(self.datasets_dir())
            .into_iter()
            .flatten()
            .flatten()
            .filter(|e| e.path().join("manifest.json").is_file())
            .filter_map(|e| e.file_name().into_string().ok())
            .collect();
        ids.sort();
        ids
    }

    pub fn manifest(&self, id: &str) -> ApiResult<DatasetManifest> {
        if let Some(d) = self.datasets.read().unwrap().get(id) {
            return Ok(d.manifest.clone());
        }
        check_id("dataset", id)?;
        let path = self.datasets_dir().join(id).join("manifest.json");
        if !path.is_file() {
            return Err(ApiError::not_found(format!("unknown dataset `{id}`")));
        }
        Ok(DatasetManifest::load(path)?)
    }

    /// Loaded (and normalized) dataset, cached after the first use.
    pub fn dataset(&self, id: &str) -> ApiResult<Arc<Dataset>> {
        if let Some(d) = self.datasets.read().unwrap().get(id) {
            return Ok(d.clone());
        }
        check_id("dataset", id)?;
        let path = self.datasets_dir().join(id).join("manifest.json");
        if !path.is_file() {
            return Err(ApiError::not_found(format!("unknown dataset `{id}`")));
        }
        let d = Arc::new(Dataset::load(path)?);
        self.datasets.write().unwrap().insert(id.to_string(), d.clone());
        Ok(d)
    }

    /// Resolve an AOG file relative to its dataset directory.
    pub fn load_aog(&self, dataset_id: &str, rel: &str) -> ApiResult<SemanticPartAOG> {
        check_id("dataset", dataset_id)?;
        let p = Path::new(rel);
        if rel.is_empty() || !p.components().all(|c| matches!(c, Component::Normal(_))) {
            return Err(ApiError::unprocessable("aog", "AOG path must be relative to the dataset directory"));
        }
        let path = self.datasets_dir().join(dataset_id).join(p);
        if !path.is_file() {
            return Err(ApiError::not_found(format!("unknown AOG `{rel}`")));
        }
        Ok(aoglab::aog::load_aog(path)?)
    }

    pub fn create_session(&self, entry: SessionEntry) -> ApiResult<String> {
        let id = entry.session.session_id.clone();
        self.persist(&entry)?;
        self.sessions
            .write()
            .unwrap()
            .insert(id.clone(), Arc::new(tokio::sync::Mutex::new(entry)));
        Ok(id)
    }

    pub fn fresh_session_id(&self) -> String {
        format!("s{:06}", self.next_id.fetch_add(1, Ordering::SeqCst))
    }

    pub fn session(&self, id: &str) -> ApiResult<SharedSession> {
        self.sessions
            .read()
            .unwrap()
            .get(id)
            .cloned()
            .ok_or_else(|| ApiError::not_found(format!("unknown session `{id}`")))
    }

    /// Write the session file (via a temporary file and rename).
    pub fn persist(&self, entry: &SessionEntry) -> ApiResult<()> {
        let dir = self.sessions_dir();
        std::fs::create_dir_all(&dir).map_err(|e| ApiError::internal(e.to_string()))?;
        let id = &entry.session.session_id;
        let tmp = dir.join(format!(".{id}.json.tmp"));
        std::fs::write(&tmp, entry.to_json()?).map_err(|e| ApiError::internal(e.to_string()))?;
        std::fs::rename(&tmp, dir.join(format!("{id}.json"))).map_err(|e| ApiError::internal(e.to_string()))
    }

    pub fn cached_parse(&self, dataset_id: &str, image_id: &str, hash: &str) -> Option<ParseTree> {
        self.parse_cache
            .lock()
            .unwrap()
            .get(&(dataset_id.to_string(), image_id.to_string(), hash.to_string()))
            .cloned()
    }

    pub fn cache_parse(&self, dataset_id: &str, hash: &str, tree: &ParseTree) {
        self.parse_cache.lock().unwrap().insert(
            (dataset_id.to_string(), tree.image_id.clone(), hash.to_string()),
            tree.clone(),
        );
    }

    pub fn cache_len(&self) -> usize {
        self.parse_cache.lock().unwrap().len()
    }
}
