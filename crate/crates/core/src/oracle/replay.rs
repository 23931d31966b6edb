use std::collections::{HashMap, HashSet};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Backend, OracleError, OracleRequest, OracleRole};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TranscriptEntry {
    pub digest: String,
    pub role: OracleRole,
    pub raw: String,
}

/// Recorded replies keyed by request digest, one entry per digest.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Transcript {
    entries: Vec<TranscriptEntry>,
    seen: HashSet<String>,
}

impl Transcript {
    pub fn entries(&self) -> &[TranscriptEntry] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Append unless the digest is already present. Returns whether it was added.
    pub fn push(&mut self, digest: String, role: OracleRole, raw: String) -> bool {
        if !self.seen.insert(digest.clone()) {
            return false;
        }
        self.entries.push(TranscriptEntry { digest, role, raw });
        true
    }

    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for e in &self.entries {
            out.push_str(&serde_json::to_string(e).expect("entry serializes"));
            out.push('\n');
        }
        out
    }

    pub fn from_jsonl(text: &str) -> Result<Transcript, OracleError> {
        let mut t = Transcript::default();
        for (i, line) in text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty()) {
            let e: TranscriptEntry = serde_json::from_str(line)
                .map_err(|err| OracleError::Config(format!("transcript line {}: {err}", i + 1)))?;
            if !t.push(e.digest.clone(), e.role, e.raw) {
                return Err(OracleError::Config(format!("transcript line {}: duplicate digest {}", i + 1, e.digest)));
            }
        }
        Ok(t)
    }

    pub fn save(&self, path: &Path) -> Result<(), OracleError> {
        std::fs::write(path, self.to_jsonl()).map_err(|e| OracleError::Config(format!("{}: {e}", path.display())))
    }

    pub fn load(path: &Path) -> Result<Transcript, OracleError> {
        let text =
            std::fs::read_to_string(path).map_err(|e| OracleError::Config(format!("{}: {e}", path.display())))?;
        Self::from_jsonl(&text)
    }
}

/// Answers from a transcript; any unrecorded request is a miss.
#[derive(Debug, Clone, Default)]
pub struct ReplayBackend {
    by_digest: HashMap<String, String>,
}

impl ReplayBackend {
    pub fn new(t: &Transcript) -> Self {
        ReplayBackend { by_digest: t.entries.iter().map(|e| (e.digest.clone(), e.raw.clone())).collect() }
    }
}

impl Backend for ReplayBackend {
    fn name(&self) -> &'static str {
        "replay"
    }

    fn complete(&self, req: &OracleRequest, _prompt: &str) -> Result<String, OracleError> {
        let d = req.digest();
        self.by_digest.get(&d).cloned().ok_or(OracleError::ReplayMiss(d))
    }
}
