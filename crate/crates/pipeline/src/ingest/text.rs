//! Seeds from local files: a directory of text files or one JSONL file.

use std::fs;
use std::path::Path;

use chrono::{DateTime, Utc};
use ffoundry_core::{Seed, SeedSource};
use serde_json::Value;

use super::{truncate, IngestError};

/// One seed per non-empty file (sorted by name) or per JSONL record with a
/// `content` or `text` field. Other record fields are kept on the seed.
pub fn load_text_seeds(path: &Path, max_chars: usize, now: DateTime<Utc>) -> Result<Vec<Seed>, IngestError> {
    let io = |e: std::io::Error| IngestError::Io(format!("{}: {e}", path.display()));
    let mut seeds = Vec::new();
    if path.is_dir() {
        let mut files: Vec<_> = fs::read_dir(path)
            .map_err(io)?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.is_file())
            .collect();
        files.sort();
        for f in files {
            let text = fs::read_to_string(&f).map_err(|e| IngestError::Io(format!("{}: {e}", f.display())))?;
            let name = f.file_name().and_then(|n| n.to_str()).unwrap_or("").to_string();
            match Seed::new(SeedSource::Text, truncate(&text, max_chars), None, now) {
                Some(mut s) => {
                    s.extra.insert("file".into(), Value::String(name));
                    seeds.push(s);
                }
                None => tracing::warn!("skipping empty seed file {}", f.display()),
            }
        }
    } else {
        let text = fs::read_to_string(path).map_err(io)?;
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let mut rec: serde_json::Map<String, Value> = serde_json::from_str(line)
                .map_err(|e| IngestError::Io(format!("{} line {}: {e}", path.display(), i + 1)))?;
            let content = rec
                .remove("content")
                .or_else(|| rec.remove("text"))
                .and_then(|v| v.as_str().map(str::to_string))
                .unwrap_or_default();
            let url = rec.remove("url").and_then(|v| v.as_str().map(str::to_string));
            match Seed::new(SeedSource::Text, truncate(&content, max_chars), url, now) {
                Some(mut s) => {
                    rec.remove("id");
                    s.extra = rec;
                    seeds.push(s);
                }
                None => tracing::warn!("skipping empty seed on line {} of {}", i + 1, path.display()),
            }
        }
    }
    Ok(seeds)
}
