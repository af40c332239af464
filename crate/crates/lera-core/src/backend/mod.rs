//! Language backends.
//!
//! A backend answers one chat-style completion at a time: system text, user
//! text, an optional observation attachment, and pinned decode parameters
//! (temperature 0). Three implementations exist:
//!
//! * scripted: a deterministic rule engine that plays the role of a
//!   competent vision-language model; the default for tests and experiments.
//! * scripted with fault injection: wraps the scripted engine with a
//!   schedule of per-call faults (malformed reply, empty reply, transport
//!   error) to exercise retry and failure paths.
//! * http: a real chat-completions endpoint. Authentication comes from the
//!   `LERA_API_KEY` environment variable only; the key never appears in
//!   config files, traces, or logs.

pub mod http;
pub mod scripted;

use std::collections::VecDeque;
use std::fmt;
use std::sync::Mutex;
use std::sync::atomic::{AtomicU32, Ordering};

use serde::{Deserialize, Serialize};

use crate::world::RasterImage;

/// Environment variable holding the HTTP backend's bearer token.
pub const API_KEY_ENV: &str = "LERA_API_KEY";

/// Which pipeline stage a prompt belongs to. The scripted backend reads
/// this from the first line of the system text.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Look,
    Explain,
    Replan,
}

impl Stage {
    pub fn as_str(self) -> &'static str {
        match self {
            Stage::Look => "look",
            Stage::Explain => "explain",
            Stage::Replan => "replan",
        }
    }

    /// The marker line carried at the top of every system prompt.
    pub fn marker(self) -> String {
        format!("[stage: {self}]")
    }

    /// Reads the stage marker off a system prompt.
    pub fn of_system_text(system_text: &str) -> Option<Stage> {
        let first = system_text.lines().next()?.trim();
        [Stage::Look, Stage::Explain, Stage::Replan]
            .into_iter()
            .find(|s| s.marker() == first)
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// An observation payload attached to a request.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Attachment {
    /// Canonical JSON scene snapshot; what the scripted backend reads.
    Snapshot(String),
    /// Rendered table image; what the HTTP backend sends as image input.
    Raster(RasterImage),
}

/// Decode parameters. Temperature is pinned to zero everywhere so runs
/// stay reproducible; the field exists to make that explicit on the wire.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DecodeParams {
    pub temperature: f64,
    pub max_tokens: u32,
}

impl Default for DecodeParams {
    fn default() -> DecodeParams {
        DecodeParams { temperature: 0.0, max_tokens: 1024 }
    }
}

/// One completion request.
#[derive(Debug, Clone, PartialEq)]
pub struct BackendRequest {
    pub system_text: String,
    pub user_text: String,
    pub attachment: Option<Attachment>,
    pub decode: DecodeParams,
}

/// A per-call fault for the fault-injecting scripted backend.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FaultKind {
    /// Answer normally.
    Ok,
    /// Reply with a plan the parser must reject.
    MalformedPlan,
    /// Reply with an empty string.
    Empty,
    /// Fail the call with a transport error.
    TransportError,
}

#[derive(Debug, thiserror::Error)]
pub enum BackendError {
    #[error("transport failure after {attempts} attempt(s): {reason}")]
    Transport { attempts: u32, reason: String },
    #[error("backend returned HTTP {status}: {snippet}")]
    Http { status: u16, snippet: String },
    #[error("backend reply had no message content")]
    MalformedReply,
    #[error("{API_KEY_ENV} is not set; the HTTP backend reads its key from the environment")]
    MissingAuth,
    #[error("scripted backend: {0}")]
    Scripted(String),
}

impl BackendError {
    /// Transport-level failures are the ones the replanner may retry.
    pub fn is_transport(&self) -> bool {
        matches!(self, BackendError::Transport { .. })
    }
}

enum BackendKind {
    Scripted,
    ScriptedFaulty(Mutex<VecDeque<FaultKind>>),
    Http(http::HttpBackend),
}

/// A shareable handle to one backend. `complete` takes `&self`, so a single
/// handle serves all worker threads of a suite run.
pub struct BackendHandle {
    kind: BackendKind,
    calls: AtomicU32,
}

impl BackendHandle {
    /// The deterministic scripted backend.
    pub fn scripted() -> BackendHandle {
        BackendHandle { kind: BackendKind::Scripted, calls: AtomicU32::new(0) }
    }

    /// Scripted backend with a schedule of per-call faults. Calls past the
    /// end of the schedule behave normally.
    pub fn scripted_faulty(schedule: Vec<FaultKind>) -> BackendHandle {
        BackendHandle {
            kind: BackendKind::ScriptedFaulty(Mutex::new(schedule.into())),
            calls: AtomicU32::new(0),
        }
    }

    /// An HTTP chat-completions backend. Fails fast when `LERA_API_KEY` is
    /// absent from the environment.
    pub fn http(config: http::HttpConfig) -> Result<BackendHandle, BackendError> {
        Ok(BackendHandle {
            kind: BackendKind::Http(http::HttpBackend::from_env(config)?),
            calls: AtomicU32::new(0),
        })
    }

    /// Answers one completion request.
    pub fn complete(&self, request: &BackendRequest) -> Result<String, BackendError> {
        self.calls.fetch_add(1, Ordering::Relaxed);
        match &self.kind {
            BackendKind::Scripted => scripted::respond(request),
            BackendKind::ScriptedFaulty(schedule) => {
                let fault = schedule
                    .lock()
                    .expect("fault schedule lock")
                    .pop_front()
                    .unwrap_or(FaultKind::Ok);
                match fault {
                    FaultKind::Ok => scripted::respond(request),
                    FaultKind::MalformedPlan => Ok("fly(moon_rock)".to_string()),
                    FaultKind::Empty => Ok(String::new()),
                    FaultKind::TransportError => Err(BackendError::Transport {
                        attempts: 1,
                        reason: "injected fault".to_string(),
                    }),
                }
            }
            BackendKind::Http(http) => http.complete(request),
        }
    }

    /// True when the backend wants JSON snapshots rather than images.
    pub fn wants_snapshot(&self) -> bool {
        !matches!(self.kind, BackendKind::Http(_))
    }

    /// Upper bound on concurrent `complete` calls, when the backend has one.
    pub fn max_concurrency(&self) -> Option<usize> {
        match &self.kind {
            BackendKind::Http(http) => Some(http.config().max_concurrency),
            _ => None,
        }
    }

    /// Total completion calls served, including failed ones. Retries at the
    /// HTTP layer count as one call.
    pub fn call_count(&self) -> u32 {
        self.calls.load(Ordering::Relaxed)
    }
}

impl fmt::Debug for BackendHandle {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let label = match &self.kind {
            BackendKind::Scripted => "scripted",
            BackendKind::ScriptedFaulty(_) => "scripted+faults",
            BackendKind::Http(_) => "http",
        };
        f.debug_struct("BackendHandle").field("kind", &label).finish()
    }
}
