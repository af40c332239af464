//! Core library for the lera replanning harness.
//!
//! The crate simulates a tabletop / household robot that executes symbolic
//! plans in a deterministic world, checks each step against the simulator
//! state, and asks a language backend to repair the plan when a step fails.
//! Everything downstream of a seed is reproducible: world noise, checker
//! noise, and the scripted backend are pure functions of their inputs.
//!
//! Module map:
//!
//! * [`rng`]: labeled deterministic random streams.
//! * [`plan`]: the line-oriented action grammar and plan containers.
//! * [`world`]: scene state, action execution, observations.
//! * [`tasks`]: the built-in task library.
//! * [`backend`]: scripted, fault-injecting, and HTTP chat backends.
//! * [`replan`]: the Look / Explain / Replan pipeline and its ablations.
//! * [`agent`]: the episode loop of executor, checker, and replan trigger.
//! * [`metrics`]: success-rate style aggregates over episode traces.
//! * [`suite`]: experiment configuration, parallel runner, trace files.

pub mod agent;
pub mod backend;
pub mod metrics;
pub mod plan;
pub mod replan;
pub mod rng;
pub mod suite;
pub mod tasks;
pub mod world;

pub use agent::{AgentConfig, CheckerConfig, EpisodeTrace, run_episode};
pub use backend::{BackendHandle, BackendRequest};
pub use plan::{Action, Plan, Verb, Vocabulary};
pub use replan::{ReplanRequest, ReplanResult, ReplanVariant};
pub use tasks::{Family, TaskSpec, task_library};
pub use world::{GoalCondition, ObjectId, Observation, Scene};
