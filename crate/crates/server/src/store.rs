//! File-backed campaign store. Each campaign lives in `<dir>/<id>.json`;
//! writes go through a temporary file and a rename so readers never see a
//! partial document.

use std::collections::HashMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};

use sparsebo::engine::Campaign;
use tokio::sync::{Mutex as AsyncMutex, OwnedMutexGuard};

use crate::error::ApiError;

/// Environment variable naming the default state directory.
pub const STATE_DIR_ENV: &str = "SPARSEBO_STATE_DIR";

#[derive(Debug)]
pub struct Store {
    dir: PathBuf,
    locks: Mutex<HashMap<String, Arc<AsyncMutex<()>>>>,
}

impl Store {
    pub fn open(dir: impl Into<PathBuf>) -> std::io::Result<Self> {
        let dir = dir.into();
        fs::create_dir_all(&dir)?;
        Ok(Self {
            dir,
            locks: Mutex::new(HashMap::new()),
        })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    fn path(&self, id: &str) -> PathBuf {
        self.dir.join(format!("{id}.json"))
    }

    /// Exclusive writer access to one campaign.
    pub async fn lock(&self, id: &str) -> OwnedMutexGuard<()> {
        let lock = {
            let mut locks = self.locks.lock().unwrap();
            locks.entry(id.to_string()).or_default().clone()
        };
        lock.lock_owned().await
    }

    pub fn exists(&self, id: &str) -> bool {
        valid_id(id) && self.path(id).is_file()
    }

    pub fn load(&self, id: &str) -> Result<Campaign, ApiError> {
        if !valid_id(id) {
            return Err(ApiError::not_found(id));
        }
        let text = match fs::read_to_string(self.path(id)) {
            Ok(t) => t,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Err(ApiError::not_found(id)),
            Err(e) => return Err(ApiError::internal(id, e)),
        };
        Campaign::load(&text).map_err(|e| ApiError::from_engine(id, e))
    }

    pub fn save(&self, campaign: &Campaign) -> Result<(), ApiError> {
        let id = &campaign.id;
        let text = campaign.save().map_err(|e| ApiError::from_engine(id, e))?;
        let tmp = self.dir.join(format!(".{id}.json.tmp"));
        let write = || -> std::io::Result<()> {
            let mut f = fs::File::create(&tmp)?;
            f.write_all(text.as_bytes())?;
            f.sync_all()?;
            fs::rename(&tmp, self.path(id))
        };
        write().map_err(|e| ApiError::internal(id, e))
    }

    pub fn delete(&self, id: &str) -> Result<(), ApiError> {
        if !self.exists(id) {
            return Err(ApiError::not_found(id));
        }
        fs::remove_file(self.path(id)).map_err(|e| ApiError::internal(id, e))
    }

    /// Ids of every stored campaign, sorted.
    pub fn list(&self) -> Result<Vec<String>, ApiError> {
        let mut ids = Vec::new();
        let entries = fs::read_dir(&self.dir).map_err(|e| ApiError::internal("", e))?;
        for entry in entries.flatten() {
            let name = entry.file_name();
            let name = name.to_string_lossy();
            if let Some(id) = name.strip_suffix(".json") {
                if valid_id(id) {
                    ids.push(id.to_string());
                }
            }
        }
        ids.sort();
        Ok(ids)
    }
}

fn valid_id(id: &str) -> bool {
    !id.is_empty() && id.chars().all(|c| c.is_ascii_alphanumeric() || c == '-' || c == '_')
}

#[cfg(test)]
mod tests {
    use super::*;
    use sparsebo::bench::Sense;
    use sparsebo::engine::{CampaignConfig, Strategy};

    #[test]
    fn save_load_delete() {
        let dir = tempfile::tempdir().unwrap();
        let store = Store::open(dir.path()).unwrap();
        let mut cfg = CampaignConfig::new(vec![[0.0, 1.0]], Sense::Maximize, Strategy::StandardBo, 3);
        cfg.id = Some("abc".into());
        let c = Campaign::new(cfg).unwrap();
        store.save(&c).unwrap();
        assert_eq!(store.load("abc").unwrap(), c);
        assert_eq!(store.list().unwrap(), vec!["abc".to_string()]);
        store.delete("abc").unwrap();
        assert_eq!(store.load("abc").unwrap_err().code, crate::error::ErrorCode::NotFound);
    }

    #[test]
    fn path_like_ids_are_not_found() {
        let dir = tempfile::tempdir().unwrap();
        let store = Store::open(dir.path()).unwrap();
        assert_eq!(store.load("../etc").unwrap_err().code, crate::error::ErrorCode::NotFound);
    }
}
