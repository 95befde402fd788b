//! One JSON document per session, plus an optional posterior file.

use std::collections::HashMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex, RwLock};

use choicebo_core::inference::SurrogatePosterior;
use choicebo_core::mobo::BoSession;

use crate::ServiceError;

/// A live session and the outcome of its last background fit.
#[derive(Debug)]
pub struct Entry {
    pub session: BoSession,
    pub last_error: Option<String>,
}

pub type SharedEntry = Arc<Mutex<Entry>>;

#[derive(Debug)]
pub struct SessionStore {
    dir: PathBuf,
    sessions: RwLock<HashMap<String, SharedEntry>>,
}

/// Ids double as file names, so they are restricted to a safe alphabet.
pub fn valid_id(id: &str) -> bool {
    !id.is_empty() && id.len() <= 64 && id.bytes().all(|b| b.is_ascii_alphanumeric() || b == b'-' || b == b'_')
}

fn write_atomic(path: &Path, text: &str) -> std::io::Result<()> {
    let dir = path.parent().unwrap_or(Path::new("."));
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(text.as_bytes())?;
    tmp.as_file().sync_all()?;
    tmp.persist(path).map_err(|e| e.error)?;
    Ok(())
}

impl SessionStore {
    /// Opens `dir`, creating it if needed, and loads every session in it.
    pub fn open(dir: impl Into<PathBuf>) -> Result<Self, ServiceError> {
        let dir = dir.into();
        fs::create_dir_all(&dir)?;
        let mut sessions = HashMap::new();
        for entry in fs::read_dir(&dir)? {
            let path = entry?.path();
            let Some(name) = path.file_name().and_then(|n| n.to_str()) else { continue };
            let Some(id) = name.strip_suffix(".session.json") else { continue };
            let mut session: BoSession = serde_json::from_str(&fs::read_to_string(&path)?)?;
            let model = dir.join(format!("{id}.model.json"));
            if model.exists() {
                let post = SurrogatePosterior::from_json(&fs::read_to_string(&model)?)?;
                session.set_posterior(Some(post));
            }
            sessions.insert(id.to_string(), Arc::new(Mutex::new(Entry { session, last_error: None })));
        }
        Ok(Self { dir, sessions: RwLock::new(sessions) })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn get(&self, id: &str) -> Option<SharedEntry> {
        self.sessions.read().expect("store lock").get(id).cloned()
    }

    pub fn ids(&self) -> Vec<String> {
        let mut ids: Vec<String> = self.sessions.read().expect("store lock").keys().cloned().collect();
        ids.sort();
        ids
    }

    /// Registers a new session; fails if the id is taken.
    pub fn insert(&self, session: BoSession) -> Result<SharedEntry, ServiceError> {
        let mut map = self.sessions.write().expect("store lock");
        if map.contains_key(&session.id) {
            return Err(ServiceError::Conflict(format!("session '{}' already exists", session.id)));
        }
        self.persist(&session)?;
        let entry = Arc::new(Mutex::new(Entry { session, last_error: None }));
        map.insert(entry.lock().expect("entry lock").session.id.clone(), entry.clone());
        Ok(entry)
    }

    /// Writes the session document and, when a posterior exists, its model.
    pub fn persist(&self, session: &BoSession) -> Result<(), ServiceError> {
        if let Some(post) = session.posterior() {
            write_atomic(&self.dir.join(format!("{}.model.json", session.id)), &post.to_json()?)?;
        }
        let text = serde_json::to_string_pretty(session)?;
        write_atomic(&self.dir.join(format!("{}.session.json", session.id)), &text)?;
        Ok(())
    }
}
