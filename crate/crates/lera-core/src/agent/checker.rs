//! The subtask checker: a ground-truth oracle over world state whose
//! verdict can be flipped with a configurable probability to model an
//! imperfect success detector.
//!
//! Exactly one noise draw is consumed per call, whatever `p_flip` is, so
//! the set of flipped verdicts at a lower flip rate is a subset of the set
//! at a higher rate under the same seed.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::plan::{Action, Verb};
use crate::world::{ActionOutcome, FlagName, ObjectKind, OutcomeStatus, Placement, Scene};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CheckerConfig {
    /// Probability that a verdict is reported inverted.
    pub p_flip: f64,
}

impl Default for CheckerConfig {
    fn default() -> Self {
        CheckerConfig { p_flip: 0.0 }
    }
}

/// One verdict, with the ground truth kept alongside for traces.
#[derive(Debug, Clone, PartialEq)]
pub struct CheckerOutcome {
    pub passed: bool,
    pub ground_truth: bool,
    pub flipped: bool,
    /// What the checker tells the replanner. Empty for passing verdicts,
    /// and never more than externally observable symptoms: the checker
    /// sees state but reports like a gripper-and-eyes success detector.
    pub evidence: String,
}

/// Judges the action that turned `pre` into `post`.
pub fn check(
    config: &CheckerConfig,
    pre: &Scene,
    action: &Action,
    outcome: &ActionOutcome,
    post: &Scene,
    flips: &mut ChaCha8Rng,
) -> CheckerOutcome {
    let executed = outcome.status != OutcomeStatus::RejectedPrecondition;
    let ground_truth = executed && effect_holds(pre, action, post);
    let draw: f64 = flips.random();
    let flipped = draw < config.p_flip;
    let passed = ground_truth ^ flipped;
    let evidence = if passed {
        String::new()
    } else {
        evidence_for(pre, action, outcome, ground_truth)
    };
    CheckerOutcome { passed, ground_truth, flipped, evidence }
}

/// Whether the scene after the action shows its intended effect.
pub fn effect_holds(pre: &Scene, action: &Action, post: &Scene) -> bool {
    match action.verb {
        Verb::Locate | Verb::Goto => post.located.as_ref() == Some(action.arg()),
        Verb::Pick => post.gripper.as_ref() == Some(action.arg()),
        Verb::Place => {
            let target = action.arg();
            match &pre.gripper {
                Some(held) => matches!(
                    post.placement(held),
                    Some(Placement::In(t) | Placement::On(t)) if t == target
                ),
                None => false,
            }
        }
        Verb::Put => {
            post.placement(&action.args[0])
                == Some(&Placement::In(action.args[1].clone()))
        }
        Verb::Open => post.flag(action.arg(), FlagName::Open) == Some(true),
        Verb::Close => post.flag(action.arg(), FlagName::Open) == Some(false),
        Verb::ToggleOn => post.flag(action.arg(), FlagName::Powered) == Some(true),
        Verb::ToggleOff => post.flag(action.arg(), FlagName::Powered) == Some(false),
    }
}

/// The failure notice for a failed verdict. Deliberately confined to what
/// a gripper sensor and a glance at the target would reveal; hidden causes
/// like a closed door on the far side of the room are never spelled out.
fn evidence_for(
    pre: &Scene,
    action: &Action,
    outcome: &ActionOutcome,
    ground_truth: bool,
) -> String {
    if ground_truth {
        return format!("{action}: action may have failed");
    }
    match outcome.status {
        OutcomeStatus::RejectedPrecondition => {
            let symptom = match action.verb {
                Verb::Pick => match &pre.gripper {
                    Some(_) => ": the gripper is not empty",
                    None => "",
                },
                Verb::Place | Verb::Put => match &pre.gripper {
                    Some(held) => return format!(
                        "{action} could not be executed: still holding {held}"
                    ),
                    None => ": the gripper is empty",
                },
                _ => "",
            };
            format!("{action} could not be executed{symptom}")
        }
        OutcomeStatus::ExecutedWithDrop | OutcomeStatus::Executed => {
            let symptom = match action.verb {
                Verb::Pick => "the gripper is empty".to_string(),
                Verb::Place => match &pre.gripper {
                    Some(held) => {
                        let target = action.arg();
                        let relation = match pre.object(target).map(|o| o.kind) {
                            Some(ObjectKind::Block) => "on",
                            _ => "in",
                        };
                        format!("{held} is not {relation} {target}")
                    }
                    None => "its effect is not visible".to_string(),
                },
                Verb::Put => format!("{} is not in {}", action.args[0], action.args[1]),
                _ => "its effect is not visible".to_string(),
            };
            format!("{action} completed but {symptom}")
        }
    }
}
