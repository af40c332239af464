//! The agent: task planner, subtask executor, subtask checker, and the
//! replanning loop that ties them together for one episode.

mod checker;
mod episode;

pub use checker::{check, effect_holds, CheckerConfig, CheckerOutcome};
pub use episode::{
    run_episode, ActionRecord, AgentConfig, EpisodeError, EpisodeTrace, ReplanRecord, TraceEvent,
};
