//! On-disk response cache that doubles as a replay log.
//!
//! Each completion is appended as one JSON line `{prompt_hash, model_id,
//! response}`. Reopening the log serves those prompts without calling the
//! inner backend, so a killed run resumes where it stopped and a finished run
//! can be replayed with no network access.

use std::collections::HashMap;
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use parking_lot::{Mutex, RwLock};
use serde::{Deserialize, Serialize};

use super::{count_tokens, prompt_hash, BackendError, CompletionBackend, CompletionResult};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReplayEntry {
    pub prompt_hash: String,
    pub model_id: String,
    pub response: String,
}

pub struct CachedBackend {
    inner: Option<Box<dyn CompletionBackend>>,
    model_id: String,
    entries: RwLock<HashMap<(String, String), String>>,
    log: Mutex<File>,
    path: PathBuf,
}

impl CachedBackend {
    /// Wraps `inner`, loading any entries already in `log_path`.
    pub fn open(inner: Box<dyn CompletionBackend>, log_path: impl AsRef<Path>) -> Result<Self> {
        let model_id = inner.model_id().to_string();
        Self::build(Some(inner), model_id, log_path.as_ref())
    }

    /// Serves only what the log holds; a miss is a `CacheMiss` error.
    pub fn replay_only(model_id: impl Into<String>, log_path: impl AsRef<Path>) -> Result<Self> {
        Self::build(None, model_id.into(), log_path.as_ref())
    }

    fn build(inner: Option<Box<dyn CompletionBackend>>, model_id: String, path: &Path) -> Result<Self> {
        let entries = load_entries(path)?;
        if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
            std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
        }
        let mut log = OpenOptions::new()
            .create(true)
            .append(true)
            .open(path)
            .map_err(|e| Error::io(path, e))?;
        let torn = std::fs::read(path)
            .map(|bytes| bytes.last().is_some_and(|b| *b != b'\n'))
            .unwrap_or(false);
        if torn {
            log.write_all(b"\n").map_err(|e| Error::io(path, e))?;
        }
        Ok(Self {
            inner,
            model_id,
            entries: RwLock::new(entries),
            log: Mutex::new(log),
            path: path.to_path_buf(),
        })
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn len(&self) -> usize {
        self.entries.read().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Rewrites the log with one line per entry in key order, so finished
    /// runs leave identical logs whatever order the responses arrived in.
    pub fn compact(&self) -> Result<()> {
        let entries = self.entries.read();
        let mut sorted: Vec<_> = entries.iter().collect();
        sorted.sort();
        let mut log = self.log.lock();
        let tmp = self.path.with_extension("jsonl.tmp");
        {
            let mut out = std::io::BufWriter::new(File::create(&tmp).map_err(|e| Error::io(&tmp, e))?);
            for ((model_id, prompt_hash), response) in sorted {
                let entry = ReplayEntry {
                    prompt_hash: prompt_hash.clone(),
                    model_id: model_id.clone(),
                    response: response.clone(),
                };
                let line = serde_json::to_string(&entry).expect("replay entry serializes");
                writeln!(out, "{line}").map_err(|e| Error::io(&tmp, e))?;
            }
            out.flush().map_err(|e| Error::io(&tmp, e))?;
        }
        std::fs::rename(&tmp, &self.path).map_err(|e| Error::io(&self.path, e))?;
        *log = OpenOptions::new()
            .append(true)
            .open(&self.path)
            .map_err(|e| Error::io(&self.path, e))?;
        Ok(())
    }

    fn cached(&self, text: String, prompt: &str) -> CompletionResult {
        CompletionResult {
            prompt_tokens: count_tokens(prompt),
            completion_tokens: count_tokens(&text),
            text,
            latency_ms: 0,
            attempt: 1,
            cached: true,
        }
    }
}

fn load_entries(path: &Path) -> Result<HashMap<(String, String), String>> {
    let mut entries = HashMap::new();
    if !path.exists() {
        return Ok(entries);
    }
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let entry: ReplayEntry = match serde_json::from_str(&line) {
            Ok(entry) => entry,
            // A run killed mid-write can leave a torn final line.
            Err(e) => {
                log::warn!("{}:{}: skipping unreadable replay entry: {e}", path.display(), i + 1);
                continue;
            }
        };
        entries
            .entry((entry.model_id, entry.prompt_hash))
            .or_insert(entry.response);
    }
    Ok(entries)
}

impl CompletionBackend for CachedBackend {
    fn model_id(&self) -> &str {
        &self.model_id
    }

    fn max_concurrency(&self) -> usize {
        self.inner.as_ref().map_or(1, |b| b.max_concurrency())
    }

    fn complete(&self, system_preamble: &str, user_prompt: &str) -> Result<CompletionResult, BackendError> {
        if user_prompt.trim().is_empty() {
            return Err(BackendError::EmptyPrompt);
        }
        let hash = prompt_hash(system_preamble, user_prompt);
        let key = (self.model_id.clone(), hash.clone());
        if let Some(text) = self.entries.read().get(&key) {
            return Ok(self.cached(text.clone(), user_prompt));
        }
        let Some(inner) = &self.inner else {
            return Err(BackendError::CacheMiss { prompt_hash: hash });
        };
        let result = inner.complete(system_preamble, user_prompt)?;

        let mut entries = self.entries.write();
        if let Some(existing) = entries.get(&key) {
            // Another worker finished the same prompt first; keep its answer.
            return Ok(self.cached(existing.clone(), user_prompt));
        }
        let entry = ReplayEntry {
            prompt_hash: hash,
            model_id: self.model_id.clone(),
            response: result.text.clone(),
        };
        let mut line = serde_json::to_string(&entry).expect("replay entry serializes");
        line.push('\n');
        {
            let mut log = self.log.lock();
            if let Err(e) = log.write_all(line.as_bytes()).and_then(|_| log.flush()) {
                log::warn!("failed to append to {}: {e}", self.path.display());
            }
        }
        entries.insert(key, result.text.clone());
        Ok(result)
    }
}
