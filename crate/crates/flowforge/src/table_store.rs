//! Internal table store: one `<name>.jsonl` file per table, one frame envelope per line.

use std::fs::{self, File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use flowforge_core::{Field, FrameError, TableFrame};
use serde::{Deserialize, Serialize};

use crate::envelope;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TableInfo {
    pub name: String,
    pub columns: Vec<Field>,
    pub row_count: usize,
}

#[derive(Debug, thiserror::Error)]
pub enum TableStoreError {
    #[error("table `{0}` not found")]
    NotFound(String),
    #[error("invalid table name `{0}`")]
    InvalidName(String),
    #[error("table `{name}` is corrupt at line {line}: {reason}")]
    Corrupt { name: String, line: usize, reason: String },
    #[error(transparent)]
    Frame(#[from] FrameError),
    #[error("table store io: {0}")]
    Io(#[from] std::io::Error),
}

/// Names are restricted so they always map to a file inside the store directory.
pub fn is_table_name(name: &str) -> bool {
    !name.is_empty()
        && name.len() <= 128
        && !name.starts_with('.')
        && name.chars().all(|c| c.is_ascii_alphanumeric() || matches!(c, '_' | '-' | '.'))
}

#[derive(Debug)]
pub struct TableStore {
    dir: PathBuf,
    write_lock: Mutex<()>,
}

impl TableStore {
    pub fn open(dir: impl Into<PathBuf>) -> Result<Self, TableStoreError> {
        let dir = dir.into();
        fs::create_dir_all(&dir)?;
        Ok(TableStore { dir, write_lock: Mutex::new(()) })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    fn path(&self, name: &str) -> Result<PathBuf, TableStoreError> {
        if !is_table_name(name) {
            return Err(TableStoreError::InvalidName(name.to_string()));
        }
        Ok(self.dir.join(format!("{name}.jsonl")))
    }

    /// Replaces the table with `frame`. The file is written to a temporary name first.
    pub fn put(&self, name: &str, frame: &TableFrame) -> Result<(), TableStoreError> {
        let path = self.path(name)?;
        let _guard = self.write_lock.lock().expect("table store lock");
        let tmp = path.with_extension("jsonl.tmp");
        let mut file = File::create(&tmp)?;
        file.write_all(&envelope::encode_frame(frame))?;
        file.write_all(b"\n")?;
        file.sync_all()?;
        fs::rename(tmp, path)?;
        Ok(())
    }

    /// Appends a batch; the batch schema must equal the stored schema.
    pub fn append(&self, name: &str, frame: &TableFrame) -> Result<(), TableStoreError> {
        let path = self.path(name)?;
        let _guard = self.write_lock.lock().expect("table store lock");
        if let Some(existing) = first_schema(&path, name)? {
            if existing != frame.schema() {
                return Err(FrameError::SchemaMismatch.into());
            }
        }
        let mut file = OpenOptions::new().create(true).append(true).open(&path)?;
        let mut line = envelope::encode_frame(frame);
        line.push(b'\n');
        file.write_all(&line)?;
        Ok(())
    }

    pub fn get(&self, name: &str) -> Result<TableFrame, TableStoreError> {
        let path = self.path(name)?;
        let file = File::open(&path).map_err(|e| match e.kind() {
            std::io::ErrorKind::NotFound => TableStoreError::NotFound(name.to_string()),
            _ => e.into(),
        })?;
        let mut frames = Vec::new();
        for (i, line) in BufReader::new(file).lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let frame: TableFrame = serde_json::from_str(&line).map_err(|e| TableStoreError::Corrupt {
                name: name.to_string(),
                line: i + 1,
                reason: e.to_string(),
            })?;
            frames.push(frame);
        }
        TableFrame::concat(frames)?.ok_or_else(|| TableStoreError::Corrupt {
            name: name.to_string(),
            line: 0,
            reason: "no frames".into(),
        })
    }

    /// Raw file bytes, used for byte-identity checks between runs.
    pub fn raw(&self, name: &str) -> Result<Vec<u8>, TableStoreError> {
        fs::read(self.path(name)?).map_err(|e| match e.kind() {
            std::io::ErrorKind::NotFound => TableStoreError::NotFound(name.to_string()),
            _ => e.into(),
        })
    }

    pub fn remove(&self, name: &str) -> Result<(), TableStoreError> {
        let path = self.path(name)?;
        let _guard = self.write_lock.lock().expect("table store lock");
        fs::remove_file(path).map_err(|e| match e.kind() {
            std::io::ErrorKind::NotFound => TableStoreError::NotFound(name.to_string()),
            _ => e.into(),
        })
    }

    /// Tables sorted by name.
    pub fn list(&self) -> Result<Vec<TableInfo>, TableStoreError> {
        let mut names: Vec<String> = fs::read_dir(&self.dir)?
            .filter_map(|e| e.ok())
            .filter_map(|e| e.file_name().to_str().and_then(|n| n.strip_suffix(".jsonl")).map(String::from))
            .filter(|n| is_table_name(n))
            .collect();
        names.sort();
        names
            .into_iter()
            .map(|name| {
                let frame = self.get(&name)?;
                Ok(TableInfo { columns: frame.schema().to_vec(), row_count: frame.num_rows(), name })
            })
            .collect()
    }
}

fn first_schema(path: &Path, name: &str) -> Result<Option<Vec<Field>>, TableStoreError> {
    let file = match File::open(path) {
        Ok(f) => f,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(None),
        Err(e) => return Err(e.into()),
    };
    let mut line = String::new();
    BufReader::new(file).read_line(&mut line)?;
    if line.trim().is_empty() {
        return Ok(None);
    }
    let frame: TableFrame = serde_json::from_str(&line).map_err(|e| TableStoreError::Corrupt {
        name: name.to_string(),
        line: 1,
        reason: e.to_string(),
    })?;
    Ok(Some(frame.schema().to_vec()))
}
