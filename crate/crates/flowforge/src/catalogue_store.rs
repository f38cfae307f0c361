//! Journaled catalogue: every register/unregister is appended to a JSON-lines
//! file and the in-memory index is rebuilt from it on open.

use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::{RwLock, RwLockReadGuard};

use flowforge_core::catalogue::{Catalogue, CatalogueEntryId, CatalogueError, ServiceDescriptor, ServiceFilter};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum JournalOp {
    Register,
    Unregister,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JournalRecord {
    pub op: JournalOp,
    pub descriptor: ServiceDescriptor,
}

#[derive(Debug, thiserror::Error)]
pub enum StoreError {
    #[error(transparent)]
    Catalogue(#[from] CatalogueError),
    #[error("catalogue journal {path} line {line}: {reason}")]
    Journal { path: String, line: usize, reason: String },
    #[error("catalogue journal io: {0}")]
    Io(#[from] std::io::Error),
}

/// Thread-safe catalogue with a single writer and concurrent readers.
#[derive(Debug)]
pub struct CatalogueStore {
    index: RwLock<Catalogue>,
    journal: Option<PathBuf>,
}

impl CatalogueStore {
    /// A catalogue that is never written to disk.
    pub fn in_memory() -> Self {
        CatalogueStore { index: RwLock::new(Catalogue::new()), journal: None }
    }

    pub fn open(path: impl Into<PathBuf>) -> Result<Self, StoreError> {
        let path = path.into();
        let index = replay(&path)?;
        Ok(CatalogueStore { index: RwLock::new(index), journal: Some(path) })
    }

    pub fn read(&self) -> RwLockReadGuard<'_, Catalogue> {
        self.index.read().unwrap_or_else(|e| e.into_inner())
    }

    fn append(&self, record: &JournalRecord) -> Result<(), StoreError> {
        let Some(path) = &self.journal else { return Ok(()) };
        let mut line = serde_json::to_vec(record).expect("descriptors serialize");
        line.push(b'\n');
        let mut file = OpenOptions::new().create(true).append(true).open(path)?;
        file.write_all(&line)?;
        file.sync_data()?;
        Ok(())
    }

    /// Validates, journals, then indexes. Nothing changes on error.
    pub fn register(&self, descriptor: ServiceDescriptor) -> Result<CatalogueEntryId, StoreError> {
        let mut index = self.index.write().unwrap_or_else(|e| e.into_inner());
        index.check_register(&descriptor)?;
        self.append(&JournalRecord { op: JournalOp::Register, descriptor: descriptor.clone() })?;
        Ok(index.register(descriptor)?)
    }

    pub fn get(&self, name: &str, version: Option<&str>) -> Result<ServiceDescriptor, CatalogueError> {
        self.read().get(name, version).cloned()
    }

    pub fn list(&self, filter: &ServiceFilter) -> Vec<ServiceDescriptor> {
        self.read().list(filter).into_iter().cloned().collect()
    }

    pub fn len(&self) -> usize {
        self.read().len()
    }

    pub fn is_empty(&self) -> bool {
        self.read().is_empty()
    }

    pub fn unregister(
        &self,
        name: &str,
        version: &str,
        in_use: impl FnOnce(&ServiceDescriptor) -> bool,
    ) -> Result<ServiceDescriptor, StoreError> {
        let mut index = self.index.write().unwrap_or_else(|e| e.into_inner());
        let mut trial = index.clone();
        let removed = trial.unregister(name, version, in_use)?;
        self.append(&JournalRecord { op: JournalOp::Unregister, descriptor: removed.clone() })?;
        *index = trial;
        Ok(removed)
    }
}

fn replay(path: &Path) -> Result<Catalogue, StoreError> {
    let mut index = Catalogue::new();
    let file = match File::open(path) {
        Ok(f) => f,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(index),
        Err(e) => return Err(e.into()),
    };
    let bad = |line: usize, reason: String| StoreError::Journal { path: path.display().to_string(), line, reason };
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let record: JournalRecord = serde_json::from_str(&line).map_err(|e| bad(i + 1, e.to_string()))?;
        let d = record.descriptor;
        match record.op {
            JournalOp::Register => index.register(d).map(drop),
            JournalOp::Unregister => index.unregister(&d.name, &d.version, |_| false).map(drop),
        }
        .map_err(|e| bad(i + 1, e.to_string()))?;
    }
    Ok(index)
}

#[cfg(test)]
mod tests {
    use super::*;
    use flowforge_core::catalogue::ServiceKind;

    #[test]
    fn journal_replays_on_open() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("catalogue.jsonl");
        {
            let store = CatalogueStore::open(&path).unwrap();
            store.register(ServiceDescriptor::new("a", "1.0.0", ServiceKind::Task)).unwrap();
            store.register(ServiceDescriptor::new("b", "1.0.0", ServiceKind::Task)).unwrap();
            store.unregister("a", "1.0.0", |_| false).unwrap();
            assert!(store.register(ServiceDescriptor::new("b", "1.0.0", ServiceKind::Task)).is_err());
        }
        let text = std::fs::read_to_string(&path).unwrap();
        assert_eq!(text.lines().count(), 3);
        assert!(text.starts_with(r#"{"op":"register","descriptor":{"name":"a""#));
        let store = CatalogueStore::open(&path).unwrap();
        assert_eq!(store.len(), 1);
        assert!(store.get("b", None).is_ok());
    }

    #[test]
    fn in_use_leaves_journal_untouched() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("catalogue.jsonl");
        let store = CatalogueStore::open(&path).unwrap();
        store.register(ServiceDescriptor::new("a", "1.0.0", ServiceKind::Task)).unwrap();
        let before = std::fs::read(&path).unwrap();
        assert!(matches!(store.unregister("a", "1.0.0", |_| true), Err(StoreError::Catalogue(CatalogueError::InUse(_)))));
        assert_eq!(std::fs::read(&path).unwrap(), before);
    }
}
