//! Append-only, content-addressed artifact store on the local filesystem.
//!
//! Layout under the root:
//!
//! ```text
//! objects/ab/abcdef...      artifact bytes, keyed by sha256 hex
//! meta/abcdef....json       StoredArtifact record
//! submissions/{id}.json     submission index (first write wins)
//! notifications.log         one JSON NotificationRecord per line
//! ```
//!
//! Every file is written to a temporary name and hard-linked into place, so
//! a key is created at most once and never rewritten.

use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::sync::Mutex;
use std::sync::atomic::{AtomicU64, Ordering};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ArtifactKind {
    RawTranscript,
    Assessment,
    /// Machine-readable engagement report (report/v1 JSON).
    Metrics,
    /// Rendered student feedback document.
    Report,
    /// Class aggregate (aggregate/v1 JSON).
    Aggregate,
    ClassReport,
    DeadLetter,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Acl {
    StudentOnly,
    InstructorOnly,
    Both,
}

impl Acl {
    pub fn allows(self, reader: Reader) -> bool {
        matches!(
            (self, reader),
            (Acl::Both, _) | (Acl::StudentOnly, Reader::Student) | (Acl::InstructorOnly, Reader::Instructor)
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Reader {
    Student,
    Instructor,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StoredArtifact {
    pub key: String,
    pub kind: ArtifactKind,
    pub bytes_len: u64,
    pub created_at: i64,
    pub acl: Acl,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub submission_id: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub week_id: Option<String>,
}

/// What the caller knows about an artifact besides its bytes.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NewArtifact<'a> {
    pub kind: ArtifactKind,
    pub acl: Acl,
    pub created_at: i64,
    pub submission_id: Option<&'a str>,
    pub week_id: Option<&'a str>,
}

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("store I/O error at {path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error("corrupt store entry {0}")]
    Corrupt(String),
    #[error("invalid key `{0}`")]
    InvalidKey(String),
}

type Result<T> = std::result::Result<T, StoreError>;

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> StoreError + '_ {
    move |source| StoreError::Io {
        path: path.to_path_buf(),
        source,
    }
}

pub fn content_key(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

fn valid_key(key: &str) -> bool {
    key.len() == 64 && key.bytes().all(|b| b.is_ascii_digit() || (b'a'..=b'f').contains(&b))
}

/// The narrow storage contract the pipeline relies on.
pub trait ArtifactStore: Send + Sync {
    /// Stores `bytes` unless the key already exists; returns the record on
    /// disk either way.
    fn put(&self, bytes: &[u8], new: NewArtifact<'_>) -> Result<StoredArtifact>;
    fn get(&self, key: &str) -> Result<Option<(StoredArtifact, Vec<u8>)>>;
    fn list(&self) -> Result<Vec<StoredArtifact>>;
}

#[derive(Debug)]
pub struct LocalStore {
    root: PathBuf,
    tmp_seq: AtomicU64,
    log_lock: Mutex<()>,
}

impl LocalStore {
    pub fn open(root: impl Into<PathBuf>) -> Result<Self> {
        let root = root.into();
        for dir in ["objects", "meta", "submissions", "tmp"] {
            let p = root.join(dir);
            fs::create_dir_all(&p).map_err(io_err(&p))?;
        }
        Ok(LocalStore {
            root,
            tmp_seq: AtomicU64::new(0),
            log_lock: Mutex::new(()),
        })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    fn object_path(&self, key: &str) -> PathBuf {
        self.root.join("objects").join(&key[..2]).join(key)
    }

    fn meta_path(&self, key: &str) -> PathBuf {
        self.root.join("meta").join(format!("{key}.json"))
    }

    fn submission_path(&self, id: &str) -> PathBuf {
        self.root.join("submissions").join(format!("{id}.json"))
    }

    /// Writes `bytes` to `dest` unless it exists. Returns false when another
    /// writer got there first.
    fn create_once(&self, dest: &Path, bytes: &[u8]) -> Result<bool> {
        if dest.exists() {
            return Ok(false);
        }
        if let Some(parent) = dest.parent() {
            fs::create_dir_all(parent).map_err(io_err(parent))?;
        }
        let tmp = self.root.join("tmp").join(format!(
            "{}-{}",
            std::process::id(),
            self.tmp_seq.fetch_add(1, Ordering::Relaxed)
        ));
        {
            let mut f = fs::File::create(&tmp).map_err(io_err(&tmp))?;
            f.write_all(bytes).map_err(io_err(&tmp))?;
            f.sync_all().map_err(io_err(&tmp))?;
        }
        let linked = match fs::hard_link(&tmp, dest) {
            Ok(()) => Ok(true),
            Err(e) if e.kind() == io::ErrorKind::AlreadyExists => Ok(false),
            Err(e) => Err(io_err(dest)(e)),
        };
        let _ = fs::remove_file(&tmp);
        linked
    }

    fn read_meta(&self, key: &str) -> Result<Option<StoredArtifact>> {
        let path = self.meta_path(key);
        match fs::read(&path) {
            Ok(bytes) => serde_json::from_slice(&bytes)
                .map(Some)
                .map_err(|e| StoreError::Corrupt(format!("{}: {e}", path.display()))),
            Err(e) if e.kind() == io::ErrorKind::NotFound => Ok(None),
            Err(e) => Err(io_err(&path)(e)),
        }
    }

    pub fn meta(&self, key: &str) -> Result<Option<StoredArtifact>> {
        if !valid_key(key) {
            return Err(StoreError::InvalidKey(key.to_string()));
        }
        self.read_meta(key)
    }

    pub fn submission(&self, id: &str) -> Result<Option<SubmissionRecord>> {
        let path = self.submission_path(id);
        match fs::read(&path) {
            Ok(bytes) => serde_json::from_slice(&bytes)
                .map(Some)
                .map_err(|e| StoreError::Corrupt(format!("{}: {e}", path.display()))),
            Err(e) if e.kind() == io::ErrorKind::NotFound => Ok(None),
            Err(e) => Err(io_err(&path)(e)),
        }
    }

    /// Records the outcome of a submission. The first record wins; the
    /// stored record is returned.
    pub fn record_submission(&self, rec: &SubmissionRecord) -> Result<SubmissionRecord> {
        let path = self.submission_path(&rec.submission_id);
        let bytes = serde_json::to_vec_pretty(rec).expect("record serializes");
        if self.create_once(&path, &bytes)? {
            Ok(rec.clone())
        } else {
            self.submission(&rec.submission_id)?
                .ok_or_else(|| StoreError::Corrupt(path.display().to_string()))
        }
    }

    pub fn submissions(&self) -> Result<Vec<SubmissionRecord>> {
        let dir = self.root.join("submissions");
        let mut out = Vec::new();
        for entry in fs::read_dir(&dir).map_err(io_err(&dir))? {
            let entry = entry.map_err(io_err(&dir))?;
            let bytes = fs::read(entry.path()).map_err(io_err(&entry.path()))?;
            out.push(
                serde_json::from_slice(&bytes)
                    .map_err(|e| StoreError::Corrupt(format!("{}: {e}", entry.path().display())))?,
            );
        }
        out.sort_by(|a: &SubmissionRecord, b| a.submission_id.cmp(&b.submission_id));
        Ok(out)
    }

    pub fn append_notification(&self, n: &NotificationRecord) -> Result<()> {
        let path = self.root.join("notifications.log");
        let _guard = self.log_lock.lock().unwrap_or_else(|e| e.into_inner());
        let mut f = fs::OpenOptions::new()
            .create(true)
            .append(true)
            .open(&path)
            .map_err(io_err(&path))?;
        let line = serde_json::to_string(n).expect("notification serializes");
        writeln!(f, "{line}").map_err(io_err(&path))
    }

    pub fn notifications(&self) -> Result<Vec<NotificationRecord>> {
        let path = self.root.join("notifications.log");
        let text = match fs::read_to_string(&path) {
            Ok(t) => t,
            Err(e) if e.kind() == io::ErrorKind::NotFound => return Ok(Vec::new()),
            Err(e) => return Err(io_err(&path)(e)),
        };
        text.lines()
            .map(|l| serde_json::from_str(l).map_err(|e| StoreError::Corrupt(format!("notification: {e}"))))
            .collect()
    }
}

impl ArtifactStore for LocalStore {
    fn put(&self, bytes: &[u8], new: NewArtifact<'_>) -> Result<StoredArtifact> {
        let key = content_key(bytes);
        let record = StoredArtifact {
            key: key.clone(),
            kind: new.kind,
            bytes_len: bytes.len() as u64,
            created_at: new.created_at,
            acl: new.acl,
            submission_id: new.submission_id.map(str::to_string),
            week_id: new.week_id.map(str::to_string),
        };
        // object first: a meta record always points at existing bytes
        self.create_once(&self.object_path(&key), bytes)?;
        let meta = serde_json::to_vec_pretty(&record).expect("artifact record serializes");
        if self.create_once(&self.meta_path(&key), &meta)? {
            Ok(record)
        } else {
            self.read_meta(&key)?.ok_or(StoreError::Corrupt(key))
        }
    }

    fn get(&self, key: &str) -> Result<Option<(StoredArtifact, Vec<u8>)>> {
        let Some(meta) = self.meta(key)? else {
            return Ok(None);
        };
        let path = self.object_path(key);
        let bytes = fs::read(&path).map_err(io_err(&path))?;
        if content_key(&bytes) != key {
            return Err(StoreError::Corrupt(format!("object {key} fails its hash check")));
        }
        Ok(Some((meta, bytes)))
    }

    fn list(&self) -> Result<Vec<StoredArtifact>> {
        let dir = self.root.join("meta");
        let mut out = Vec::new();
        for entry in fs::read_dir(&dir).map_err(io_err(&dir))? {
            let entry = entry.map_err(io_err(&dir))?;
            let name = entry.file_name();
            let Some(key) = name.to_str().and_then(|n| n.strip_suffix(".json")) else {
                continue;
            };
            if let Some(meta) = self.read_meta(key)? {
                out.push(meta);
            }
        }
        out.sort_by(|a, b| a.key.cmp(&b.key));
        Ok(out)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum SubmissionStatus {
    Processed {
        assessment_key: String,
        metrics_key: String,
        report_key: String,
    },
    Failed {
        stage: String,
        error: String,
        dead_letter_key: String,
    },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SubmissionRecord {
    pub submission_id: String,
    pub payload_key: String,
    #[serde(flatten)]
    pub status: SubmissionStatus,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Channel {
    LogOnly,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NotificationRecord {
    pub submission_id: String,
    pub recipient_pseudonym: String,
    pub report_key: String,
    pub sent_at: i64,
    pub channel: Channel,
}

#[cfg(test)]
mod tests {
    use super::*;

    fn new(kind: ArtifactKind) -> NewArtifact<'static> {
        NewArtifact {
            kind,
            acl: Acl::InstructorOnly,
            created_at: 1,
            submission_id: Some("s1"),
            week_id: Some("w1"),
        }
    }

    #[test]
    fn put_is_content_addressed_and_idempotent() {
        let dir = tempfile::tempdir().unwrap();
        let store = LocalStore::open(dir.path()).unwrap();
        let a = store.put(b"hello", new(ArtifactKind::Assessment)).unwrap();
        assert_eq!(
            a.key,
            "2cf24dba5fb0a30e26e83b2ac5b9e29e1b161e5c1fa7425e73043362938b9824"
        );
        let mut later = new(ArtifactKind::Report);
        later.created_at = 99;
        let b = store.put(b"hello", later).unwrap();
        assert_eq!(a, b, "existing key is not rewritten");
        assert_eq!(store.list().unwrap().len(), 1);
        let (meta, bytes) = store.get(&a.key).unwrap().unwrap();
        assert_eq!(meta.kind, ArtifactKind::Assessment);
        assert_eq!(bytes, b"hello");
    }

    #[test]
    fn get_rejects_bad_keys_and_detects_tampering() {
        let dir = tempfile::tempdir().unwrap();
        let store = LocalStore::open(dir.path()).unwrap();
        assert!(matches!(store.get("../etc"), Err(StoreError::InvalidKey(_))));
        assert!(store.get(&content_key(b"absent")).unwrap().is_none());
        let a = store.put(b"data", new(ArtifactKind::Metrics)).unwrap();
        let path = store.object_path(&a.key);
        fs::remove_file(&path).unwrap();
        fs::write(&path, b"tampered").unwrap();
        assert!(matches!(store.get(&a.key), Err(StoreError::Corrupt(_))));
    }

    #[test]
    fn first_submission_record_wins() {
        let dir = tempfile::tempdir().unwrap();
        let store = LocalStore::open(dir.path()).unwrap();
        let rec = |k: &str| SubmissionRecord {
            submission_id: "s1".into(),
            payload_key: k.into(),
            status: SubmissionStatus::Failed {
                stage: "parse".into(),
                error: "x".into(),
                dead_letter_key: k.into(),
            },
        };
        assert_eq!(store.record_submission(&rec("a")).unwrap(), rec("a"));
        assert_eq!(store.record_submission(&rec("b")).unwrap(), rec("a"));
        assert_eq!(store.submissions().unwrap().len(), 1);
    }

    #[test]
    fn concurrent_puts_of_one_key() {
        let dir = tempfile::tempdir().unwrap();
        let store = LocalStore::open(dir.path()).unwrap();
        std::thread::scope(|s| {
            for i in 0..8 {
                let store = &store;
                s.spawn(move || {
                    let mut n = new(ArtifactKind::Report);
                    n.created_at = i;
                    store.put(b"same bytes", n).unwrap()
                });
            }
        });
        let list = store.list().unwrap();
        assert_eq!(list.len(), 1);
        assert_eq!(store.get(&list[0].key).unwrap().unwrap().0, list[0]);
    }

    #[test]
    fn acl_rules() {
        assert!(Acl::Both.allows(Reader::Student));
        assert!(!Acl::InstructorOnly.allows(Reader::Student));
        assert!(!Acl::StudentOnly.allows(Reader::Instructor));
    }
}
