//! JSON-lines trace files: one line per event, episodes in run order.
//!
//! A trace file is the run's complete record: every executed action, every
//! replanning run with its prompts and replies, and per-episode outcomes.
//! It can be read back and grouped per episode for replay.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::agent::{ActionRecord, ReplanRecord, TraceEvent};

use super::SuiteRun;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum TraceLine {
    Start {
        episode: usize,
        task: String,
        agent: String,
        seed: u64,
        episode_seed: u64,
    },
    Action {
        episode: usize,
        #[serde(flatten)]
        record: ActionRecord,
    },
    Replan {
        episode: usize,
        #[serde(flatten)]
        record: ReplanRecord,
    },
    End {
        episode: usize,
        satisfied: u32,
        total: u32,
        success: bool,
        budget_exhausted: bool,
    },
    Error {
        episode: usize,
        message: String,
    },
}

impl TraceLine {
    pub fn episode(&self) -> usize {
        match self {
            TraceLine::Start { episode, .. }
            | TraceLine::Action { episode, .. }
            | TraceLine::Replan { episode, .. }
            | TraceLine::End { episode, .. }
            | TraceLine::Error { episode, .. } => *episode,
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum TraceError {
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("line {line}: {source}")]
    Parse {
        line: usize,
        source: serde_json::Error,
    },
    #[error("episode {0} has no start line")]
    MissingStart(usize),
}

/// Flattens a run into trace lines, in episode-index order.
pub fn lines_for(run: &SuiteRun) -> Vec<TraceLine> {
    let mut lines = Vec::new();
    for episode in &run.episodes {
        let key = &episode.key;
        lines.push(TraceLine::Start {
            episode: key.index,
            task: key.task.clone(),
            agent: key.agent.clone(),
            seed: key.seed,
            episode_seed: key.episode_seed,
        });
        match &episode.outcome {
            Ok(trace) => {
                for event in &trace.events {
                    lines.push(match event {
                        TraceEvent::Action(record) => TraceLine::Action {
                            episode: key.index,
                            record: record.clone(),
                        },
                        TraceEvent::Replan(record) => TraceLine::Replan {
                            episode: key.index,
                            record: record.clone(),
                        },
                    });
                }
                lines.push(TraceLine::End {
                    episode: key.index,
                    satisfied: trace.satisfied,
                    total: trace.total,
                    success: trace.success,
                    budget_exhausted: trace.budget_exhausted,
                });
            }
            Err(message) => {
                lines.push(TraceLine::Error {
                    episode: key.index,
                    message: message.clone(),
                });
            }
        }
    }
    lines
}

pub fn render_jsonl(lines: &[TraceLine]) -> String {
    let mut out = String::new();
    for line in lines {
        out.push_str(&serde_json::to_string(line).expect("trace lines always serialize"));
        out.push('\n');
    }
    out
}

pub fn read_jsonl(path: &Path) -> Result<Vec<TraceLine>, TraceError> {
    let text = std::fs::read_to_string(path)?;
    parse_jsonl(&text)
}

pub fn parse_jsonl(text: &str) -> Result<Vec<TraceLine>, TraceError> {
    let mut lines = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        if raw.trim().is_empty() {
            continue;
        }
        let line = serde_json::from_str(raw)
            .map_err(|source| TraceError::Parse { line: i + 1, source })?;
        lines.push(line);
    }
    Ok(lines)
}

/// One episode reassembled from trace lines.
#[derive(Debug, Clone, PartialEq)]
pub struct ReplayedEpisode {
    pub episode: usize,
    pub task: String,
    pub agent: String,
    pub seed: u64,
    pub episode_seed: u64,
    pub events: Vec<TraceEvent>,
    pub satisfied: Option<u32>,
    pub total: Option<u32>,
    pub success: Option<bool>,
    pub budget_exhausted: Option<bool>,
    pub error: Option<String>,
}

/// Groups a trace file back into episodes, ordered by index.
pub fn group_episodes(lines: &[TraceLine]) -> Result<Vec<ReplayedEpisode>, TraceError> {
    let mut episodes: BTreeMap<usize, ReplayedEpisode> = BTreeMap::new();
    for line in lines {
        match line {
            TraceLine::Start { episode, task, agent, seed, episode_seed } => {
                episodes.insert(
                    *episode,
                    ReplayedEpisode {
                        episode: *episode,
                        task: task.clone(),
                        agent: agent.clone(),
                        seed: *seed,
                        episode_seed: *episode_seed,
                        events: Vec::new(),
                        satisfied: None,
                        total: None,
                        success: None,
                        budget_exhausted: None,
                        error: None,
                    },
                );
            }
            TraceLine::Action { episode, record } => {
                episodes
                    .get_mut(episode)
                    .ok_or(TraceError::MissingStart(*episode))?
                    .events
                    .push(TraceEvent::Action(record.clone()));
            }
            TraceLine::Replan { episode, record } => {
                episodes
                    .get_mut(episode)
                    .ok_or(TraceError::MissingStart(*episode))?
                    .events
                    .push(TraceEvent::Replan(record.clone()));
            }
            TraceLine::End { episode, satisfied, total, success, budget_exhausted } => {
                let entry = episodes
                    .get_mut(episode)
                    .ok_or(TraceError::MissingStart(*episode))?;
                entry.satisfied = Some(*satisfied);
                entry.total = Some(*total);
                entry.success = Some(*success);
                entry.budget_exhausted = Some(*budget_exhausted);
            }
            TraceLine::Error { episode, message } => {
                episodes
                    .get_mut(episode)
                    .ok_or(TraceError::MissingStart(*episode))?
                    .error = Some(message.clone());
            }
        }
    }
    Ok(episodes.into_values().collect())
}
