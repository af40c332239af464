//! Action execution.
//!
//! [`apply_action`] checks an action's preconditions against the scene, then
//! either rejects it (leaving the scene untouched apart from the step
//! counter, which is not serialized) or applies its effects. Manipulation
//! verbs that move an object (`pick`, `place`, `put`) pass through the drop
//! model after their preconditions succeed: with probability `p_drop` the
//! object lands on a uniformly random free table cell instead.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::plan::{Action, Verb};
use crate::rng::{self, EpisodeStreams};

use super::{ActionOutcome, FailureModel, FlagName, ObjectId, ObjectKind, Placement, Scene};

/// The mutable noise state an episode threads through execution: the drop
/// decision stream, the drop destination stream, and the position in an
/// optional deterministic drop schedule.
pub struct ExecNoise {
    decide: ChaCha8Rng,
    destination: ChaCha8Rng,
    schedule_pos: usize,
}

impl ExecNoise {
    pub fn from_episode_seed(seed: u64) -> ExecNoise {
        let streams = EpisodeStreams::new(seed);
        ExecNoise::from_streams(streams.drops, streams.destinations)
    }

    pub fn from_streams(decide: ChaCha8Rng, destination: ChaCha8Rng) -> ExecNoise {
        ExecNoise { decide, destination, schedule_pos: 0 }
    }

    /// Decides the next drop opportunity. A schedule entry, when present,
    /// overrides sampling and consumes no randomness.
    fn should_drop(&mut self, failure: &FailureModel) -> bool {
        if let Some(schedule) = &failure.drop_schedule {
            if let Some(forced) = schedule.get(self.schedule_pos) {
                self.schedule_pos += 1;
                return *forced;
            }
        }
        if failure.p_drop <= 0.0 {
            return false;
        }
        self.decide.random::<f64>() < failure.p_drop
    }

    /// Picks the landing cell for a drop, uniform over the free cells.
    fn pick_destination(&mut self, free: &[u32]) -> u32 {
        free[self.destination.random_range(0..free.len())]
    }
}

impl Scene {
    /// Applies one action, mutating the scene only when it executes.
    pub fn apply(
        &mut self,
        action: &Action,
        failure: &FailureModel,
        noise: &mut ExecNoise,
    ) -> ActionOutcome {
        apply_action(self, action, failure, noise)
    }
}

pub fn apply_action(
    scene: &mut Scene,
    action: &Action,
    failure: &FailureModel,
    noise: &mut ExecNoise,
) -> ActionOutcome {
    scene.step += 1;
    if !scene.family.verbs().contains(&action.verb) {
        return ActionOutcome::rejected(format!(
            "verb {} is not available in the {} family",
            action.verb, scene.family
        ));
    }
    for arg in &action.args {
        if !scene.objects.contains_key(arg) {
            return ActionOutcome::rejected(format!("no such object: {arg}"));
        }
    }
    match action.verb {
        Verb::Locate | Verb::Goto => {
            let target = action.arg().clone();
            let message = if action.verb == Verb::Locate {
                format!("located {target}")
            } else {
                format!("moved to {target}")
            };
            scene.located = Some(target);
            ActionOutcome::executed(message)
        }
        Verb::Pick => pick(scene, action.arg().clone(), failure, noise),
        Verb::Place => place(scene, action.arg().clone(), failure, noise),
        Verb::Put => put(scene, action.args[0].clone(), action.args[1].clone(), failure, noise),
        Verb::Open => set_open(scene, action.arg().clone(), true),
        Verb::Close => set_open(scene, action.arg().clone(), false),
        Verb::ToggleOn => toggle_on(scene, action.arg().clone()),
        Verb::ToggleOff => toggle_off(scene, action.arg().clone()),
    }
}

fn located(scene: &Scene, target: &ObjectId) -> bool {
    scene.located.as_ref() == Some(target)
}

/// Moves `object` to a random free table cell, covering for the cell the
/// object itself may be vacating.
fn drop_to_table(scene: &mut Scene, object: &ObjectId, noise: &mut ExecNoise) -> Option<u32> {
    let previous = scene.objects[object].at.clone();
    scene.objects.get_mut(object).unwrap().at = Placement::Held;
    let free = scene.free_cells();
    if free.is_empty() {
        scene.objects.get_mut(object).unwrap().at = previous;
        return None;
    }
    let cell = noise.pick_destination(&free);
    scene.objects.get_mut(object).unwrap().at = Placement::OnTable(cell);
    Some(cell)
}

fn pick(
    scene: &mut Scene,
    target: ObjectId,
    failure: &FailureModel,
    noise: &mut ExecNoise,
) -> ActionOutcome {
    if scene.gripper.is_some() {
        return ActionOutcome::rejected("the gripper is not empty");
    }
    let object = &scene.objects[&target];
    if !object.kind.movable() {
        return ActionOutcome::rejected(format!("{target} is a {} and cannot be picked", object.kind));
    }
    if !located(scene, &target) {
        return ActionOutcome::rejected(format!("{target} has not been located"));
    }
    if let Placement::In(container) = &object.at {
        if scene.flag(container, FlagName::Open) == Some(false) {
            return ActionOutcome::rejected(format!(
                "{target} is inside {container}, which is closed"
            ));
        }
    }
    if !scene.supports(&target).is_empty() {
        return ActionOutcome::rejected(format!("{target} is underneath another object"));
    }
    if noise.should_drop(failure) {
        return match drop_to_table(scene, &target, noise) {
            Some(cell) => ActionOutcome::dropped(
                Placement::OnTable(cell),
                format!("picked {target} but dropped it onto cell {cell}"),
            ),
            None => finish_pick(scene, target),
        };
    }
    finish_pick(scene, target)
}

fn finish_pick(scene: &mut Scene, target: ObjectId) -> ActionOutcome {
    scene.objects.get_mut(&target).unwrap().at = Placement::Held;
    let message = format!("picked {target}");
    scene.gripper = Some(target);
    ActionOutcome::executed(message)
}

fn place(
    scene: &mut Scene,
    target: ObjectId,
    failure: &FailureModel,
    noise: &mut ExecNoise,
) -> ActionOutcome {
    let Some(held) = scene.gripper.clone() else {
        return ActionOutcome::rejected("the gripper is empty");
    };
    if !located(scene, &target) {
        return ActionOutcome::rejected(format!("{target} has not been located"));
    }
    if held == target {
        return ActionOutcome::rejected(format!("cannot place {held} onto itself"));
    }
    let destination = match scene.objects[&target].kind {
        ObjectKind::Bowl => Placement::In(target.clone()),
        ObjectKind::Block => {
            if !scene.supports(&target).is_empty() {
                return ActionOutcome::rejected(format!("another object is already on {target}"));
            }
            if matches!(scene.objects[&target].at, Placement::On(_)) {
                return ActionOutcome::rejected(format!(
                    "{target} is already stacked; towers are at most two blocks"
                ));
            }
            Placement::On(target.clone())
        }
        kind => {
            return ActionOutcome::rejected(format!("cannot place into {target}, a {kind}"));
        }
    };
    if noise.should_drop(failure) {
        if let Some(cell) = drop_to_table(scene, &held, noise) {
            scene.gripper = None;
            return ActionOutcome::dropped(
                Placement::OnTable(cell),
                format!("tried to place {held} but dropped it onto cell {cell}"),
            );
        }
    }
    let preposition = if matches!(destination, Placement::In(_)) { "in" } else { "on" };
    scene.objects.get_mut(&held).unwrap().at = destination;
    scene.gripper = None;
    ActionOutcome::executed(format!("placed {held} {preposition} {target}"))
}

fn put(
    scene: &mut Scene,
    item: ObjectId,
    target: ObjectId,
    failure: &FailureModel,
    noise: &mut ExecNoise,
) -> ActionOutcome {
    match &scene.gripper {
        None => return ActionOutcome::rejected("the gripper is empty"),
        Some(held) if *held != item => {
            return ActionOutcome::rejected(format!("the gripper is holding {held}, not {item}"));
        }
        Some(_) => {}
    }
    if !located(scene, &target) {
        return ActionOutcome::rejected(format!("{target} has not been located"));
    }
    let kind = scene.objects[&target].kind;
    if !matches!(kind, ObjectKind::Container | ObjectKind::Appliance) {
        return ActionOutcome::rejected(format!("cannot put into {target}, a {kind}"));
    }
    if scene.flag(&target, FlagName::Open) != Some(true) {
        return ActionOutcome::rejected(format!("{target} is not open"));
    }
    if noise.should_drop(failure) {
        if let Some(cell) = drop_to_table(scene, &item, noise) {
            scene.gripper = None;
            return ActionOutcome::dropped(
                Placement::OnTable(cell),
                format!("tried to put {item} in {target} but dropped it onto cell {cell}"),
            );
        }
    }
    scene.objects.get_mut(&item).unwrap().at = Placement::In(target.clone());
    scene.gripper = None;
    ActionOutcome::executed(format!("put {item} in {target}"))
}

fn set_open(scene: &mut Scene, target: ObjectId, value: bool) -> ActionOutcome {
    let verb = if value { "open" } else { "close" };
    match scene.flag(&target, FlagName::Open) {
        None => return ActionOutcome::rejected(format!("{target} cannot be {verb}ed")),
        Some(current) if current == value => {
            let state = if value { "open" } else { "closed" };
            return ActionOutcome::rejected(format!("{target} is already {state}"));
        }
        Some(_) => {}
    }
    if !located(scene, &target) {
        return ActionOutcome::rejected(format!("{target} has not been located"));
    }
    scene.set_flag(&target, FlagName::Open, value).unwrap();
    let past = if value { "opened" } else { "closed" };
    ActionOutcome::executed(format!("{past} {target}"))
}

fn toggle_on(scene: &mut Scene, target: ObjectId) -> ActionOutcome {
    if scene.objects[&target].kind != ObjectKind::Appliance {
        return ActionOutcome::rejected(format!("{target} is not an appliance"));
    }
    if !located(scene, &target) {
        return ActionOutcome::rejected(format!("{target} has not been located"));
    }
    if scene.flag(&target, FlagName::Open) == Some(true) {
        return ActionOutcome::rejected(format!("{target} must be closed before starting"));
    }
    if scene.flag(&target, FlagName::Powered) == Some(true) {
        return ActionOutcome::rejected(format!("{target} is already running"));
    }
    scene.set_flag(&target, FlagName::Powered, true).unwrap();
    let effect = scene.objects[&target].effect;
    let contents: Vec<ObjectId> = scene.contents(&target).into_iter().cloned().collect();
    for id in contents {
        let flag = match effect {
            Some(super::ApplianceEffect::Clean) => FlagName::Clean,
            _ => FlagName::Hot,
        };
        let _ = scene.set_flag(&id, flag, true);
    }
    ActionOutcome::executed(format!("{target} is running"))
}

fn toggle_off(scene: &mut Scene, target: ObjectId) -> ActionOutcome {
    if scene.objects[&target].kind != ObjectKind::Appliance {
        return ActionOutcome::rejected(format!("{target} is not an appliance"));
    }
    if !located(scene, &target) {
        return ActionOutcome::rejected(format!("{target} has not been located"));
    }
    if scene.flag(&target, FlagName::Powered) != Some(true) {
        return ActionOutcome::rejected(format!("{target} is not running"));
    }
    scene.set_flag(&target, FlagName::Powered, false).unwrap();
    ActionOutcome::executed(format!("{target} stopped"))
}

/// Convenience for tests and dry runs: a noise source with no schedule,
/// seeded from the episode seed's labeled streams.
pub fn noise_for_seed(seed: u64) -> ExecNoise {
    ExecNoise::from_streams(
        rng::labeled_stream(seed, rng::LABEL_DROPS),
        rng::labeled_stream(seed, rng::LABEL_DESTINATIONS),
    )
}
