//! One interface over every foundation-model role, with interchangeable
//! backends: a remote chat API, a recorded transcript, and a deterministic
//! rule engine for offline runs.

mod prompt;
mod remote;
mod replay;
pub mod rule;

#[cfg(test)]
mod tests;

use std::fmt;
use std::sync::Mutex;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use serde_json::Value as Json;
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::sim::{Bounds, SceneDescription};
use crate::skilldsl::SkillLibrary;
use crate::task::{Plan, TaskSpec};

pub use prompt::render_prompt;
pub use remote::{RemoteBackend, RemoteConfig};
pub use replay::{ReplayBackend, Transcript, TranscriptEntry};
pub use rule::{FaultConfig, RuleBased};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OracleRole {
    SceneDescriber,
    TaskGenerator,
    Planner,
    CodeVerifierGen,
    VisionVerifier,
    Reflector,
    PreconditionGen,
    Controller,
}

impl OracleRole {
    pub const ALL: [OracleRole; 8] = [
        OracleRole::SceneDescriber,
        OracleRole::TaskGenerator,
        OracleRole::Planner,
        OracleRole::CodeVerifierGen,
        OracleRole::VisionVerifier,
        OracleRole::Reflector,
        OracleRole::PreconditionGen,
        OracleRole::Controller,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            OracleRole::SceneDescriber => "scene_describer",
            OracleRole::TaskGenerator => "task_generator",
            OracleRole::Planner => "planner",
            OracleRole::CodeVerifierGen => "code_verifier_gen",
            OracleRole::VisionVerifier => "vision_verifier",
            OracleRole::Reflector => "reflector",
            OracleRole::PreconditionGen => "precondition_gen",
            OracleRole::Controller => "controller",
        }
    }
}

impl fmt::Display for OracleRole {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ErrorClass {
    Interpretation,
    Grounding,
}

/// What went wrong in the last attempt, as shown to the planner.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FailureReport {
    pub step_index: usize,
    pub class: ErrorClass,
    pub kind: String,
    pub message: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Speaker {
    User,
    Controller,
    Observer,
    Executor,
}

/// One entry of a deployment dialogue.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Turn {
    pub speaker: Speaker,
    pub text: String,
    #[serde(default, skip_serializing_if = "Json::is_null")]
    pub data: Json,
}

impl Turn {
    pub fn new(speaker: Speaker, text: impl Into<String>, data: Json) -> Self {
        Turn { speaker, text: text.into(), data }
    }
}

/// Structured inputs for a role. Only the fields a role needs are set.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Context {
    /// Current view of the workspace.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub observation: Option<SceneDescription>,
    /// View before the task was attempted.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub initial_observation: Option<SceneDescription>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub task: Option<TaskSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub plan: Option<Plan>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub failure: Option<FailureReport>,
    /// Set when only this step's code should be regenerated.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub failed_step: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub attempt: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub query: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub condition: Option<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub history: Vec<Turn>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_tasks: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bounds: Option<Bounds>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub image_ref: Option<String>,
    /// Correction appended when re-asking after an unusable reply.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OracleRequest {
    pub role: OracleRole,
    pub context: Context,
    pub library: SkillLibrary,
}

impl OracleRequest {
    pub fn new(role: OracleRole, context: Context, library: &SkillLibrary) -> Self {
        OracleRequest { role, context, library: library.clone() }
    }

    /// Stable hash of the role, the context and the library.
    pub fn digest(&self) -> String {
        let mut h = Sha256::new();
        h.update(self.role.as_str().as_bytes());
        h.update(b"\n");
        h.update(serde_json::to_string(&self.context).expect("context serializes").as_bytes());
        h.update(b"\n");
        h.update(self.library.to_json_string().as_bytes());
        hex::encode(h.finalize())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OracleResponse {
    pub raw: String,
    pub blocks: Vec<Json>,
    pub latency: Duration,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum OracleError {
    #[error("format error in block {block:?}: {message}")]
    Format { block: Option<usize>, message: String },
    #[error("{role} request is missing context field '{field}'")]
    MissingContextField { role: OracleRole, field: &'static str },
    #[error("transport error: {0}")]
    Transport(String),
    #[error("no recorded response for digest {0}")]
    ReplayMiss(String),
    #[error("rate limited after {0} attempts")]
    RateLimited(u32),
    #[error("unsupported scenario: {0}")]
    UnsupportedScenario(String),
    #[error("configuration error: {0}")]
    Config(String),
}

impl OracleError {
    pub fn format(block: Option<usize>, message: impl Into<String>) -> Self {
        OracleError::Format { block, message: message.into() }
    }
}

/// Parse every ```json fenced region of `raw`, in order. Prose outside the
/// fences is ignored.
pub fn extract_json_blocks(raw: &str) -> Result<Vec<Json>, OracleError> {
    const OPEN: &str = "```json";
    let mut out = Vec::new();
    let mut rest = raw;
    while let Some(start) = rest.find(OPEN) {
        let body_start = start + OPEN.len();
        let block = out.len();
        let Some(len) = rest[body_start..].find("```") else {
            return Err(OracleError::format(Some(block), "unterminated ```json fence"));
        };
        let body = &rest[body_start..body_start + len];
        let value: Json = serde_json::from_str(body.trim())
            .map_err(|e| OracleError::format(Some(block), format!("invalid JSON: {e}")))?;
        out.push(value);
        rest = &rest[body_start + len + 3..];
    }
    if out.is_empty() {
        return Err(OracleError::format(None, "reply contains no ```json block"));
    }
    Ok(out)
}

/// Produces the raw reply text for a request.
pub trait Backend: Send + Sync {
    fn name(&self) -> &'static str;
    fn complete(&self, req: &OracleRequest, prompt: &str) -> Result<String, OracleError>;
}

/// Front end used by the explorer and deployer: renders the prompt, calls
/// the backend, extracts JSON blocks, re-asks once on unusable replies and
/// optionally records every exchange.
pub struct Oracle {
    backend: Box<dyn Backend>,
    recorder: Option<Mutex<Transcript>>,
    max_reasks: u32,
}

impl Oracle {
    pub fn new(backend: impl Backend + 'static) -> Self {
        Oracle { backend: Box::new(backend), recorder: None, max_reasks: 1 }
    }

    pub fn boxed(backend: Box<dyn Backend>) -> Self {
        Oracle { backend, recorder: None, max_reasks: 1 }
    }

    /// Append every reply to a transcript.
    pub fn recording(mut self) -> Self {
        self.recorder = Some(Mutex::new(Transcript::default()));
        self
    }

    pub fn with_max_reasks(mut self, n: u32) -> Self {
        self.max_reasks = n;
        self
    }

    pub fn backend_name(&self) -> &'static str {
        self.backend.name()
    }

    pub fn transcript(&self) -> Option<Transcript> {
        self.recorder.as_ref().map(|m| m.lock().expect("transcript lock").clone())
    }

    /// One round trip, without re-asking.
    pub fn call_once(&self, req: &OracleRequest) -> Result<OracleResponse, OracleError> {
        let prompt = render_prompt(req.role, &req.context, &req.library)?;
        let started = Instant::now();
        let raw = self.backend.complete(req, &prompt)?;
        let latency = started.elapsed();
        if let Some(rec) = &self.recorder {
            rec.lock().expect("transcript lock").push(req.digest(), req.role, raw.clone());
        }
        let blocks = extract_json_blocks(&raw)?;
        Ok(OracleResponse { raw, blocks, latency })
    }

    pub fn call(&self, req: &OracleRequest) -> Result<OracleResponse, OracleError> {
        self.call_checked(req, |r| Ok(r.clone()))
    }

    /// Call and post-process the reply with `check`. A format error or a
    /// rejected reply triggers a re-ask carrying the complaint as a note.
    pub fn call_checked<T>(
        &self,
        req: &OracleRequest,
        check: impl Fn(&OracleResponse) -> Result<T, String>,
    ) -> Result<T, OracleError> {
        let mut req = req.clone();
        let mut asked = 0;
        loop {
            let complaint = match self.call_once(&req) {
                Ok(resp) => match check(&resp) {
                    Ok(v) => return Ok(v),
                    Err(msg) => OracleError::format(None, msg),
                },
                Err(e @ OracleError::Format { .. }) => e,
                Err(e) => return Err(e),
            };
            if asked >= self.max_reasks {
                return Err(complaint);
            }
            asked += 1;
            log::debug!("re-asking {} after: {complaint}", req.role);
            req.context.note = Some(format!(
                "Your previous reply was rejected ({complaint}). Answer again using only ```json fenced blocks in the requested format."
            ));
        }
    }
}

/// Decode every block of a reply into `T`.
pub fn decode_blocks<T: serde::de::DeserializeOwned>(resp: &OracleResponse) -> Result<Vec<T>, String> {
    resp.blocks
        .iter()
        .enumerate()
        .map(|(i, b)| serde_json::from_value(b.clone()).map_err(|e| format!("block {i}: {e}")))
        .collect()
}
