//! Experiment suites: TOML configuration, the parallel episode runner,
//! deterministic episode seeding, and result aggregation.
//!
//! A suite enumerates episodes in a fixed order (agent, then task, then
//! seed) and derives every episode's seed from the suite seed plus the
//! coordinates, never from the enumeration index. Results are therefore
//! stable under reordering, subsetting, and any degree of parallelism.

pub mod trace;

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::agent::{run_episode, AgentConfig, CheckerConfig, EpisodeTrace};
use crate::backend::{http::HttpConfig, BackendError, BackendHandle};
use crate::metrics::{aggregate, emit_report, ReportFormat, SuiteResult};
use crate::replan::ReplanVariant;
use crate::rng::episode_seed;
use crate::tasks::{task_library, TaskSpec};
use crate::world::{FailureModel, Family};

#[derive(Debug, thiserror::Error)]
pub enum SuiteError {
    #[error("config: {0}")]
    Config(String),
    #[error("config parse: {0}")]
    Toml(#[from] toml::de::Error),
    #[error("unknown task selector: {0}")]
    UnknownTask(String),
    #[error("backend: {0}")]
    Backend(#[from] BackendError),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

/// Episode seeds: either an explicit list or the first `count` integers.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum SeedSpec {
    List(Vec<u64>),
    Count { count: u64 },
}

impl SeedSpec {
    pub fn resolve(&self) -> Vec<u64> {
        match self {
            SeedSpec::List(seeds) => seeds.clone(),
            SeedSpec::Count { count } => (0..*count).collect(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BackendChoice {
    #[default]
    Scripted,
    Http,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BackendConfig {
    pub kind: BackendChoice,
    pub http: HttpConfig,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Budgets {
    pub max_actions: u32,
    pub max_replans: u32,
}

impl Default for Budgets {
    fn default() -> Self {
        let base = AgentConfig::default();
        Budgets { max_actions: base.max_actions, max_replans: base.max_replans }
    }
}

/// One agent column in the experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AgentSpec {
    pub label: String,
    /// `None` turns replanning off; failed steps are skipped.
    #[serde(default)]
    pub variant: Option<ReplanVariant>,
    #[serde(default)]
    pub p_flip: f64,
    /// Overrides the task's own drop probability when set.
    #[serde(default)]
    pub p_drop: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SuiteConfig {
    pub suite_id: String,
    pub seed: u64,
    /// Task ids, or the selectors "all", "all-tabletop", "all-household".
    pub tasks: Vec<String>,
    pub seeds: SeedSpec,
    pub agents: Vec<AgentSpec>,
    #[serde(default)]
    pub backend: BackendConfig,
    #[serde(default)]
    pub budgets: Budgets,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("runs")
}

impl SuiteConfig {
    pub fn from_toml_str(text: &str) -> Result<SuiteConfig, SuiteError> {
        let config: SuiteConfig = toml::from_str(text)?;
        config.validate()?;
        Ok(config)
    }

    pub fn from_path(path: &Path) -> Result<SuiteConfig, SuiteError> {
        let text = std::fs::read_to_string(path)?;
        SuiteConfig::from_toml_str(&text)
    }

    pub fn validate(&self) -> Result<(), SuiteError> {
        if self.suite_id.trim().is_empty() {
            return Err(SuiteError::Config("suite_id must not be empty".into()));
        }
        if self.agents.is_empty() {
            return Err(SuiteError::Config("at least one agent is required".into()));
        }
        let mut labels = BTreeSet::new();
        for agent in &self.agents {
            if agent.label.trim().is_empty() {
                return Err(SuiteError::Config("agent labels must not be empty".into()));
            }
            if !labels.insert(agent.label.as_str()) {
                return Err(SuiteError::Config(format!(
                    "duplicate agent label: {}",
                    agent.label
                )));
            }
            if !(0.0..=1.0).contains(&agent.p_flip) {
                return Err(SuiteError::Config(format!(
                    "agent {}: p_flip must lie in [0, 1]",
                    agent.label
                )));
            }
            if let Some(p) = agent.p_drop {
                if !(0.0..=1.0).contains(&p) {
                    return Err(SuiteError::Config(format!(
                        "agent {}: p_drop must lie in [0, 1]",
                        agent.label
                    )));
                }
            }
        }
        if self.seeds.resolve().is_empty() {
            return Err(SuiteError::Config("at least one seed is required".into()));
        }
        self.resolve_tasks()?;
        Ok(())
    }

    /// Expands selectors against the task library, preserving order.
    pub fn resolve_tasks(&self) -> Result<Vec<TaskSpec>, SuiteError> {
        if self.tasks.is_empty() {
            return Err(SuiteError::Config("at least one task is required".into()));
        }
        let library = task_library();
        let mut out: Vec<TaskSpec> = Vec::new();
        let mut seen = BTreeSet::new();
        let mut push = |task: &TaskSpec, out: &mut Vec<TaskSpec>| -> Result<(), SuiteError> {
            if !seen.insert(task.id.clone()) {
                return Err(SuiteError::Config(format!("task listed twice: {}", task.id)));
            }
            out.push(task.clone());
            Ok(())
        };
        for entry in &self.tasks {
            match entry.as_str() {
                "all" => {
                    for task in &library {
                        push(task, &mut out)?;
                    }
                }
                "all-tabletop" => {
                    for task in library.iter().filter(|t| t.family == Family::Tabletop) {
                        push(task, &mut out)?;
                    }
                }
                "all-household" => {
                    for task in library.iter().filter(|t| t.family == Family::Household) {
                        push(task, &mut out)?;
                    }
                }
                id => {
                    let task = library
                        .iter()
                        .find(|t| t.id == id)
                        .ok_or_else(|| SuiteError::UnknownTask(id.to_string()))?;
                    push(task, &mut out)?;
                }
            }
        }
        Ok(out)
    }

    /// A stable digest of the fully resolved experiment definition.
    pub fn fingerprint(&self) -> Result<String, SuiteError> {
        let tasks: Vec<String> = self.resolve_tasks()?.into_iter().map(|t| t.id).collect();
        let resolved = serde_json::json!({
            "suite_id": self.suite_id,
            "seed": self.seed,
            "tasks": tasks,
            "seeds": self.seeds.resolve(),
            "agents": self.agents,
            "backend": self.backend,
            "budgets": self.budgets,
        });
        let bytes = serde_json::to_vec(&resolved)
            .map_err(|e| SuiteError::Config(format!("fingerprint serialization: {e}")))?;
        let digest = Sha256::digest(&bytes);
        let mut hex = String::with_capacity(7 + 64);
        hex.push_str("sha256:");
        for byte in digest {
            use std::fmt::Write;
            write!(hex, "{byte:02x}").expect("writing to a string cannot fail");
        }
        Ok(hex)
    }

    /// The backend this config asks for.
    pub fn make_backend(&self) -> Result<BackendHandle, SuiteError> {
        match self.backend.kind {
            BackendChoice::Scripted => Ok(BackendHandle::scripted()),
            BackendChoice::Http => Ok(BackendHandle::http(self.backend.http.clone())?),
        }
    }
}

/// Where one episode sits in the run.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EpisodeKey {
    pub index: usize,
    pub agent: String,
    pub task: String,
    pub seed: u64,
    pub episode_seed: u64,
}

#[derive(Debug, Clone)]
pub struct Episode {
    pub key: EpisodeKey,
    pub outcome: Result<EpisodeTrace, String>,
}

#[derive(Debug, Clone)]
pub struct SuiteRun {
    pub fingerprint: String,
    pub episodes: Vec<Episode>,
    pub result: SuiteResult,
}

/// Runs every episode of the suite, in parallel when `jobs` (or the
/// backend's concurrency cap) allows, and aggregates per-agent metrics.
pub fn run_suite(
    config: &SuiteConfig,
    backend: &BackendHandle,
    jobs: Option<usize>,
) -> Result<SuiteRun, SuiteError> {
    config.validate()?;
    let tasks = config.resolve_tasks()?;
    let seeds = config.seeds.resolve();
    let fingerprint = config.fingerprint()?;

    struct JobSpec<'a> {
        key: EpisodeKey,
        agent: &'a AgentSpec,
        task: &'a TaskSpec,
    }
    let mut jobs_list: Vec<JobSpec> = Vec::with_capacity(
        config.agents.len() * tasks.len() * seeds.len(),
    );
    for agent in &config.agents {
        for task in &tasks {
            for &seed in &seeds {
                jobs_list.push(JobSpec {
                    key: EpisodeKey {
                        index: jobs_list.len(),
                        agent: agent.label.clone(),
                        task: task.id.clone(),
                        seed,
                        episode_seed: episode_seed(config.seed, &task.id, seed, &agent.label),
                    },
                    agent,
                    task,
                });
            }
        }
    }

    let threads = jobs
        .or_else(|| backend.max_concurrency())
        .unwrap_or(0);
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| SuiteError::Config(format!("thread pool: {e}")))?;
    let budgets = config.budgets;
    let episodes: Vec<Episode> = pool.install(|| {
        jobs_list
            .par_iter()
            .map(|job| {
                let mut task = job.task.clone();
                if let Some(p_drop) = job.agent.p_drop {
                    task.failure = FailureModel::probability(p_drop);
                }
                let agent = AgentConfig {
                    replanner: job.agent.variant,
                    checker: CheckerConfig { p_flip: job.agent.p_flip },
                    max_actions: budgets.max_actions,
                    max_replans: budgets.max_replans,
                };
                let outcome = run_episode(&task, &agent, backend, job.key.episode_seed)
                    .map_err(|e| e.to_string());
                Episode { key: job.key.clone(), outcome }
            })
            .collect()
    });

    let per_agent = tasks.len() * seeds.len();
    let mut rows = Vec::with_capacity(config.agents.len());
    for (i, agent) in config.agents.iter().enumerate() {
        let slice = &episodes[i * per_agent..(i + 1) * per_agent];
        let traces: Vec<EpisodeTrace> = slice
            .iter()
            .filter_map(|e| e.outcome.as_ref().ok().cloned())
            .collect();
        let row = aggregate(&agent.label, &traces)
            .map_err(|e| SuiteError::Config(format!("agent {}: {e}", agent.label)))?;
        rows.push(row);
    }
    let result = SuiteResult {
        suite_id: config.suite_id.clone(),
        fingerprint: fingerprint.clone(),
        rows,
    };
    Ok(SuiteRun { fingerprint, episodes, result })
}

/// Writes report.csv, report.md, report.json and traces.jsonl into `dir`.
pub fn write_outputs(run: &SuiteRun, dir: &Path) -> Result<Vec<PathBuf>, SuiteError> {
    std::fs::create_dir_all(dir)?;
    let mut written = Vec::new();
    for (name, format) in [
        ("report.csv", ReportFormat::Csv),
        ("report.md", ReportFormat::Markdown),
        ("report.json", ReportFormat::Structured),
    ] {
        let path = dir.join(name);
        std::fs::write(&path, emit_report(&run.result, format))?;
        written.push(path);
    }
    let path = dir.join("traces.jsonl");
    std::fs::write(&path, trace::render_jsonl(&trace::lines_for(run)))?;
    written.push(path);
    Ok(written)
}
