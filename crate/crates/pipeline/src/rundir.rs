//! Run-directory persistence: canonical JSONL outputs written atomically,
//! append-only work logs for resume, and the manifest of completed stages.

use std::collections::BTreeMap;
use std::fs::{self, File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use chrono::{DateTime, Utc};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum RunError {
    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("malformed record in {path} line {line}: {message}")]
    Malformed {
        path: PathBuf,
        line: usize,
        message: String,
    },
    #[error("upstream stage {stage} is missing or stale: {detail}. Re-run `ffoundry {stage}` first.")]
    MissingUpstream { stage: String, detail: String },
    #[error("run is incomplete: {0}")]
    Incomplete(String),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("{0}")]
    Stage(String),
}

fn io(path: &Path) -> impl FnOnce(std::io::Error) -> RunError + '_ {
    move |source| RunError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// Writes via a temporary file and rename so readers never see partial files.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> std::io::Result<()> {
    let dir = path.parent().unwrap_or(Path::new("."));
    fs::create_dir_all(dir)?;
    static COUNTER: std::sync::atomic::AtomicUsize = std::sync::atomic::AtomicUsize::new(0);
    let n = COUNTER.fetch_add(1, std::sync::atomic::Ordering::Relaxed);
    let tmp = dir.join(format!(
        ".{}.tmp{}-{n}",
        path.file_name().and_then(|n| n.to_str()).unwrap_or("out"),
        std::process::id()
    ));
    {
        let mut f = File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
    }
    fs::rename(&tmp, path)
}

pub fn to_jsonl<T: Serialize>(items: &[T]) -> Vec<u8> {
    let mut out = Vec::new();
    for it in items {
        serde_json::to_writer(&mut out, it).expect("record serializes");
        out.push(b'\n');
    }
    out
}

pub fn read_jsonl_file<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>, RunError> {
    let f = File::open(path).map_err(io(path))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(f).lines().enumerate() {
        let line = line.map_err(io(path))?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|e| RunError::Malformed {
            path: path.to_path_buf(),
            line: i + 1,
            message: e.to_string(),
        })?);
    }
    Ok(out)
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct StageSummary {
    pub processed: usize,
    pub skipped: usize,
    pub failed: usize,
    /// Items held back by `--limit`.
    #[serde(default)]
    pub pending: usize,
    #[serde(default)]
    pub rejected: usize,
    #[serde(default)]
    pub parked: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageMarker {
    pub completed_at: DateTime<Utc>,
    pub inputs: BTreeMap<String, String>,
    pub outputs: BTreeMap<String, String>,
    pub summary: StageSummary,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub run_id: String,
    pub seed: u64,
    pub config_snapshot: String,
    pub stages: BTreeMap<String, StageMarker>,
}

pub struct RunDir {
    root: PathBuf,
}

impl RunDir {
    pub fn open(root: &Path) -> Result<Self, RunError> {
        for d in ["", "work", "transcripts"] {
            let p = root.join(d);
            fs::create_dir_all(&p).map_err(io(&p))?;
            // Temporaries left by an interrupted atomic write.
            for e in fs::read_dir(&p).map_err(io(&p))?.flatten() {
                let name = e.file_name();
                let name = name.to_string_lossy();
                if name.starts_with('.') && name.contains(".tmp") {
                    let _ = fs::remove_file(e.path());
                }
            }
        }
        Ok(Self {
            root: root.to_path_buf(),
        })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.root.join(name)
    }

    pub fn transcripts(&self) -> PathBuf {
        self.root.join("transcripts")
    }

    pub fn exists(&self, name: &str) -> bool {
        self.path(name).exists()
    }

    pub fn read_jsonl<T: DeserializeOwned>(&self, name: &str) -> Result<Vec<T>, RunError> {
        read_jsonl_file(&self.path(name))
    }

    /// Writes a canonical output file and returns its digest.
    pub fn write_jsonl<T: Serialize>(&self, name: &str, items: &[T]) -> Result<String, RunError> {
        self.write_bytes(name, &to_jsonl(items))
    }

    pub fn write_bytes(&self, name: &str, bytes: &[u8]) -> Result<String, RunError> {
        let p = self.path(name);
        write_atomic(&p, bytes).map_err(io(&p))?;
        Ok(ffoundry_core::ids::sha256_hex(bytes))
    }

    pub fn digest(&self, name: &str) -> Option<String> {
        fs::read(self.path(name))
            .ok()
            .map(|b| ffoundry_core::ids::sha256_hex(&b))
    }

    pub fn manifest(&self) -> Result<Manifest, RunError> {
        let p = self.path("manifest.json");
        if !p.exists() {
            return Ok(Manifest::default());
        }
        let text = fs::read_to_string(&p).map_err(io(&p))?;
        serde_json::from_str(&text).map_err(|e| RunError::Malformed {
            path: p,
            line: 1,
            message: e.to_string(),
        })
    }

    pub fn save_manifest(&self, m: &Manifest) -> Result<(), RunError> {
        let mut text = serde_json::to_string_pretty(m).expect("manifest serializes");
        text.push('\n');
        self.write_bytes("manifest.json", text.as_bytes()).map(|_| ())
    }

    /// Checks that `stage` has a marker whose recorded outputs still match the files.
    pub fn require(&self, stage: &str) -> Result<StageMarker, RunError> {
        let m = self.manifest()?;
        let marker = m.stages.get(stage).ok_or_else(|| RunError::MissingUpstream {
            stage: stage.to_string(),
            detail: "no completion marker".into(),
        })?;
        for (file, digest) in &marker.outputs {
            match self.digest(file) {
                Some(d) if d == *digest => {}
                Some(_) => {
                    return Err(RunError::MissingUpstream {
                        stage: stage.to_string(),
                        detail: format!("{file} does not match its recorded digest"),
                    })
                }
                None => {
                    return Err(RunError::MissingUpstream {
                        stage: stage.to_string(),
                        detail: format!("{file} is missing"),
                    })
                }
            }
        }
        Ok(marker.clone())
    }

    pub fn work_log(&self, stage: &str) -> Result<WorkLog, RunError> {
        WorkLog::open(&self.path(&format!("work/{stage}.jsonl")), stage)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WorkStatus {
    Ok,
    Failed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorkRecord {
    pub id: String,
    pub status: WorkStatus,
    #[serde(default, skip_serializing_if = "Value::is_null")]
    pub data: Value,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

/// Append-only per-stage log of finished work items. A torn final line left
/// by a crash is ignored on load.
pub struct WorkLog {
    path: PathBuf,
    stage: String,
    file: Mutex<File>,
    written: Mutex<usize>,
}

impl WorkLog {
    fn open(path: &Path, stage: &str) -> Result<Self, RunError> {
        if let Some(d) = path.parent() {
            fs::create_dir_all(d).map_err(io(d))?;
        }
        // Drop a torn tail so new records start on a fresh line.
        if let Ok(bytes) = fs::read(path) {
            if !bytes.is_empty() && bytes.last() != Some(&b'\n') {
                let keep = bytes.iter().rposition(|&b| b == b'\n').map_or(0, |i| i + 1);
                write_atomic(path, &bytes[..keep]).map_err(io(path))?;
            }
        }
        let file = OpenOptions::new()
            .create(true)
            .append(true)
            .open(path)
            .map_err(io(path))?;
        Ok(Self {
            path: path.to_path_buf(),
            stage: stage.to_string(),
            file: Mutex::new(file),
            written: Mutex::new(0),
        })
    }

    /// Latest record per id.
    pub fn load(&self) -> Result<BTreeMap<String, WorkRecord>, RunError> {
        let text = fs::read_to_string(&self.path).map_err(io(&self.path))?;
        let mut out = BTreeMap::new();
        for line in text.lines() {
            match serde_json::from_str::<WorkRecord>(line) {
                Ok(r) => {
                    out.insert(r.id.clone(), r);
                }
                Err(e) => tracing::warn!("ignoring unreadable work record in {}: {e}", self.path.display()),
            }
        }
        Ok(out)
    }

    pub fn append(&self, rec: &WorkRecord) -> Result<(), RunError> {
        let mut line = serde_json::to_vec(rec).expect("record serializes");
        line.push(b'\n');
        {
            let mut f = self.file.lock().expect("work log lock");
            f.write_all(&line).map_err(io(&self.path))?;
            f.flush().map_err(io(&self.path))?;
        }
        let n = {
            let mut w = self.written.lock().expect("work log lock");
            *w += 1;
            *w
        };
        crash::after_record(&self.stage, n);
        Ok(())
    }
}

/// Fault injection for resume tests.
///
/// `FFOUNDRY_CRASH_AFTER=<stage>:<n>` aborts once `n` work records of that
/// stage were written by this process; `FFOUNDRY_CRASH_BEFORE_MARKER=<stage>`
/// aborts after the stage's outputs are written but before its marker.
pub mod crash {
    pub fn after_record(stage: &str, n: usize) {
        if let Ok(spec) = std::env::var("FFOUNDRY_CRASH_AFTER") {
            if let Some((s, k)) = spec.split_once(':') {
                if s == stage && k.parse::<usize>().ok() == Some(n) {
                    eprintln!("crash injected in {stage} after {n} records");
                    std::process::abort();
                }
            }
        }
    }

    pub fn before_marker(stage: &str) {
        if std::env::var("FFOUNDRY_CRASH_BEFORE_MARKER").is_ok_and(|s| s == stage) {
            eprintln!("crash injected before the {stage} marker");
            std::process::abort();
        }
    }
}
