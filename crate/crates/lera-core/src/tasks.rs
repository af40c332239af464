//! The built-in task library: ten tabletop pick-and-place tasks and six
//! household tasks.
//!
//! Tabletop tasks share one scene (four colored blocks, four colored bowls
//! on a 4x4 grid) and differ in how many block moves the instruction asks
//! for. Every move is four actions: locate the block, pick it, locate the
//! target, place it. Execution noise drops objects at `p_drop` 0.2.
//!
//! Household tasks run without drop noise but each carries a start-of-episode
//! perturbation: the ground truth plan assumes the container or appliance
//! door starts open, and the perturbation closes it, so the unaided plan
//! stalls at the `put` step and only replanning can finish the episode.

use serde::{Deserialize, Serialize};

use crate::plan::{Action, Plan, Verb};
use crate::world::exec::noise_for_seed;
use crate::world::{
    ApplianceEffect, Color, FailureModel, FlagName, GoalCondition, ObjectId, ObjectKind,
    Perturbation, Placement, Scene, WorldError,
};

pub use crate::world::Family;

/// Drop probability for the tabletop family.
pub const DEFAULT_P_DROP: f64 = 0.2;

/// A complete task definition: scene, instruction, ground truth plan, goals.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskSpec {
    pub id: String,
    pub family: Family,
    pub instruction: String,
    pub initial_scene: Scene,
    pub gt_plan: Plan,
    pub goals: Vec<GoalCondition>,
    pub perturbations: Vec<Perturbation>,
    pub failure: FailureModel,
}

impl TaskSpec {
    pub fn vocabulary(&self) -> crate::plan::Vocabulary {
        self.initial_scene.vocabulary()
    }

    /// Sanity-checks the task: the plan fits the vocabulary, and a
    /// noise-free, unperturbed run of the ground truth plan reaches every
    /// goal.
    pub fn validate(&self) -> Result<(), TaskError> {
        if self.instruction.trim().is_empty() {
            return Err(TaskError::EmptyInstruction);
        }
        if self.gt_plan.is_empty() {
            return Err(TaskError::EmptyPlan);
        }
        if self.goals.is_empty() {
            return Err(TaskError::NoGoals);
        }
        self.initial_scene.validate()?;
        self.gt_plan
            .validate(&self.vocabulary())
            .map_err(TaskError::InvalidPlan)?;
        for p in &self.perturbations {
            let mut probe = self.initial_scene.clone();
            probe.apply_perturbations(std::slice::from_ref(p))?;
        }

        let mut scene = self.initial_scene.clone();
        let failure = FailureModel::none();
        let mut noise = noise_for_seed(0);
        for (index, action) in self.gt_plan.actions().iter().enumerate() {
            let outcome = scene.apply(action, &failure, &mut noise);
            if outcome.rejected_precondition() {
                return Err(TaskError::DryRunRejected {
                    index,
                    action: action.clone(),
                    message: outcome.message,
                });
            }
        }
        let report = scene.check_goals(&self.goals);
        if !report.all() {
            return Err(TaskError::GoalsUnmet {
                satisfied: report.satisfied,
                total: report.total,
            });
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum TaskError {
    #[error("instruction is empty")]
    EmptyInstruction,
    #[error("ground truth plan is empty")]
    EmptyPlan,
    #[error("task has no goals")]
    NoGoals,
    #[error(transparent)]
    World(#[from] WorldError),
    #[error("ground truth plan: {0}")]
    InvalidPlan(crate::plan::ValidationError),
    #[error("dry run rejected action {index} ({action}): {message}")]
    DryRunRejected {
        index: usize,
        action: Action,
        message: String,
    },
    #[error("dry run satisfied {satisfied} of {total} goals")]
    GoalsUnmet { satisfied: u32, total: u32 },
}

fn oid(name: &str) -> ObjectId {
    ObjectId::new(name).expect("library names are valid")
}

/// The shared tabletop scene: blocks on cells 0..4, bowls on cells 4..8.
pub fn tabletop_scene() -> Scene {
    let mut scene = Scene::new(Family::Tabletop, 16);
    let blocks = [
        ("red_block", Color::Red, 0),
        ("green_block", Color::Green, 1),
        ("blue_block", Color::Blue, 2),
        ("yellow_block", Color::Yellow, 3),
    ];
    for (name, color, cell) in blocks {
        scene
            .add_object(oid(name), ObjectKind::Block, color, Placement::OnTable(cell))
            .unwrap();
    }
    let bowls = [
        ("red_bowl", Color::Red, 4),
        ("green_bowl", Color::Green, 5),
        ("blue_bowl", Color::Blue, 6),
        ("yellow_bowl", Color::Yellow, 7),
    ];
    for (name, color, cell) in bowls {
        scene
            .add_object(oid(name), ObjectKind::Bowl, color, Placement::OnTable(cell))
            .unwrap();
    }
    scene.validate().unwrap();
    scene
}

/// The four actions of one tabletop move: locate, pick, locate, place.
fn tabletop_move(block: &str, target: &str) -> Vec<Action> {
    vec![
        Action::unary(Verb::Locate, oid(block)),
        Action::unary(Verb::Pick, oid(block)),
        Action::unary(Verb::Locate, oid(target)),
        Action::unary(Verb::Place, oid(target)),
    ]
}

fn goal_in(object: &str, container: &str) -> GoalCondition {
    GoalCondition::In { object: oid(object), container: oid(container) }
}

fn goal_on(object: &str, support: &str) -> GoalCondition {
    GoalCondition::On { object: oid(object), support: oid(support) }
}

fn goal_flag(object: &str, flag: FlagName, value: bool) -> GoalCondition {
    GoalCondition::Flag { object: oid(object), flag, value }
}

fn tabletop_task(
    id: &str,
    instruction: &str,
    moves: &[(&str, &str)],
    goals: Vec<GoalCondition>,
) -> TaskSpec {
    let mut actions = Vec::new();
    for (block, target) in moves {
        actions.extend(tabletop_move(block, target));
    }
    TaskSpec {
        id: id.to_string(),
        family: Family::Tabletop,
        instruction: instruction.to_string(),
        initial_scene: tabletop_scene(),
        gt_plan: Plan::from_actions(actions),
        goals,
        perturbations: Vec::new(),
        failure: FailureModel::probability(DEFAULT_P_DROP),
    }
}

/// A household scene: one target item on cell 0, one distractor item on
/// cell 1, and one openable fixture on cell 4 whose door starts open.
fn household_scene(item: &str, distractor: &str, fixture: &str, kind: ObjectKind) -> Scene {
    let mut scene = Scene::new(Family::Household, 16);
    scene
        .add_object(oid(item), ObjectKind::Item, Color::None, Placement::OnTable(0))
        .unwrap();
    scene
        .add_object(oid(distractor), ObjectKind::Item, Color::None, Placement::OnTable(1))
        .unwrap();
    scene
        .add_object(oid(fixture), kind, Color::None, Placement::OnTable(4))
        .unwrap();
    scene.set_flag(&oid(fixture), FlagName::Open, true).unwrap();
    scene.validate().unwrap();
    scene
}

fn household_fetch(item: &str, fixture: &str) -> Vec<Action> {
    vec![
        Action::unary(Verb::Goto, oid(item)),
        Action::unary(Verb::Pick, oid(item)),
        Action::unary(Verb::Goto, oid(fixture)),
        Action::put(oid(item), oid(fixture)),
        Action::unary(Verb::Close, oid(fixture)),
    ]
}

/// Put an item into an appliance, close it, switch it on. The perturbation
/// closes the door up front, which blocks the `put` step.
fn appliance_task(
    id: &str,
    instruction: &str,
    item: &str,
    distractor: &str,
    fixture: &str,
    effect: ApplianceEffect,
) -> TaskSpec {
    let mut scene = household_scene(item, distractor, fixture, ObjectKind::Appliance);
    scene.set_appliance_effect(&oid(fixture), effect).unwrap();
    let mut actions = household_fetch(item, fixture);
    actions.push(Action::unary(Verb::ToggleOn, oid(fixture)));
    let result_flag = match effect {
        ApplianceEffect::Heat => FlagName::Hot,
        ApplianceEffect::Clean => FlagName::Clean,
    };
    TaskSpec {
        id: id.to_string(),
        family: Family::Household,
        instruction: instruction.to_string(),
        initial_scene: scene,
        gt_plan: Plan::from_actions(actions),
        goals: vec![
            goal_in(item, fixture),
            goal_flag(item, result_flag, true),
            goal_flag(fixture, FlagName::Open, false),
        ],
        perturbations: vec![Perturbation {
            target: oid(fixture),
            flag: FlagName::Open,
            value: false,
        }],
        failure: FailureModel::none(),
    }
}

/// Put an item into a container and close it; same perturbation shape.
fn container_task(
    id: &str,
    instruction: &str,
    item: &str,
    distractor: &str,
    fixture: &str,
) -> TaskSpec {
    TaskSpec {
        id: id.to_string(),
        family: Family::Household,
        instruction: instruction.to_string(),
        initial_scene: household_scene(item, distractor, fixture, ObjectKind::Container),
        gt_plan: Plan::from_actions(household_fetch(item, fixture)),
        goals: vec![goal_in(item, fixture), goal_flag(fixture, FlagName::Open, false)],
        perturbations: vec![Perturbation {
            target: oid(fixture),
            flag: FlagName::Open,
            value: false,
        }],
        failure: FailureModel::none(),
    }
}

/// All sixteen built-in tasks, tabletop first.
pub fn task_library() -> Vec<TaskSpec> {
    vec![
        tabletop_task(
            "tabletop_01",
            "Place red block in red bowl",
            &[("red_block", "red_bowl")],
            vec![goal_in("red_block", "red_bowl")],
        ),
        tabletop_task(
            "tabletop_02",
            "Place green block in blue bowl",
            &[("green_block", "blue_bowl")],
            vec![goal_in("green_block", "blue_bowl")],
        ),
        tabletop_task(
            "tabletop_03",
            "Place yellow block in green bowl",
            &[("yellow_block", "green_bowl")],
            vec![goal_in("yellow_block", "green_bowl")],
        ),
        tabletop_task(
            "tabletop_04",
            "Stack blue block on red block",
            &[("blue_block", "red_block")],
            vec![goal_on("blue_block", "red_block")],
        ),
        tabletop_task(
            "tabletop_05",
            "Place red block in yellow bowl and green block in red bowl",
            &[("red_block", "yellow_bowl"), ("green_block", "red_bowl")],
            vec![goal_in("red_block", "yellow_bowl"), goal_in("green_block", "red_bowl")],
        ),
        tabletop_task(
            "tabletop_06",
            "Place blue block in blue bowl and yellow block in yellow bowl",
            &[("blue_block", "blue_bowl"), ("yellow_block", "yellow_bowl")],
            vec![goal_in("blue_block", "blue_bowl"), goal_in("yellow_block", "yellow_bowl")],
        ),
        tabletop_task(
            "tabletop_07",
            "Build a tower in the green bowl: green block on red block",
            &[("red_block", "green_bowl"), ("green_block", "red_block")],
            vec![goal_in("red_block", "green_bowl"), goal_on("green_block", "red_block")],
        ),
        tabletop_task(
            "tabletop_08",
            "Place red, green and blue blocks in the yellow bowl",
            &[
                ("red_block", "yellow_bowl"),
                ("green_block", "yellow_bowl"),
                ("blue_block", "yellow_bowl"),
            ],
            vec![
                goal_in("red_block", "yellow_bowl"),
                goal_in("green_block", "yellow_bowl"),
                goal_in("blue_block", "yellow_bowl"),
            ],
        ),
        tabletop_task(
            "tabletop_09",
            "Build a tower in the blue bowl: yellow block on blue block, and place red block in the red bowl",
            &[
                ("blue_block", "blue_bowl"),
                ("yellow_block", "blue_block"),
                ("red_block", "red_bowl"),
            ],
            vec![
                goal_in("blue_block", "blue_bowl"),
                goal_on("yellow_block", "blue_block"),
                goal_in("red_block", "red_bowl"),
            ],
        ),
        tabletop_task(
            "tabletop_10",
            "Build two towers in bowls: blue on red, yellow on green",
            &[
                ("red_block", "red_bowl"),
                ("blue_block", "red_block"),
                ("green_block", "green_bowl"),
                ("yellow_block", "green_block"),
            ],
            vec![
                goal_in("red_block", "red_bowl"),
                goal_on("blue_block", "red_block"),
                goal_in("green_block", "green_bowl"),
                goal_on("yellow_block", "green_block"),
            ],
        ),
        appliance_task(
            "household_heat_01",
            "Heat the pizza in the microwave",
            "pizza",
            "apple",
            "microwave",
            ApplianceEffect::Heat,
        ),
        appliance_task(
            "household_heat_02",
            "Heat the soup in the microwave",
            "soup",
            "bread",
            "microwave",
            ApplianceEffect::Heat,
        ),
        container_task(
            "household_fridge_01",
            "Put the apple in the fridge",
            "apple",
            "banana",
            "fridge",
        ),
        container_task(
            "household_fridge_02",
            "Put the milk in the fridge",
            "milk",
            "juice",
            "fridge",
        ),
        appliance_task(
            "household_wash_01",
            "Wash the plate in the dishwasher",
            "plate",
            "cup",
            "dishwasher",
            ApplianceEffect::Clean,
        ),
        appliance_task(
            "household_wash_02",
            "Wash the mug in the dishwasher",
            "mug",
            "fork",
            "dishwasher",
            ApplianceEffect::Clean,
        ),
    ]
}

/// Looks a task up by id.
pub fn task_by_id(id: &str) -> Option<TaskSpec> {
    task_library().into_iter().find(|t| t.id == id)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn library_has_ten_tabletop_and_six_household_tasks() {
        let library = task_library();
        assert_eq!(library.len(), 16);
        assert_eq!(library.iter().filter(|t| t.family == Family::Tabletop).count(), 10);
        assert_eq!(library.iter().filter(|t| t.family == Family::Household).count(), 6);
    }

    #[test]
    fn every_task_validates() {
        for task in task_library() {
            task.validate().unwrap_or_else(|e| panic!("{}: {e}", task.id));
        }
    }

    #[test]
    fn task_ids_are_unique() {
        let library = task_library();
        for (i, a) in library.iter().enumerate() {
            for b in &library[i + 1..] {
                assert_ne!(a.id, b.id);
            }
        }
    }

    #[test]
    fn instructions_use_expected_phrasing() {
        assert_eq!(
            task_by_id("tabletop_01").unwrap().instruction,
            "Place red block in red bowl"
        );
        assert_eq!(
            task_by_id("tabletop_10").unwrap().instruction,
            "Build two towers in bowls: blue on red, yellow on green"
        );
    }

    #[test]
    fn tabletop_plans_are_four_actions_per_move() {
        let library = task_library();
        let lens: Vec<usize> = library
            .iter()
            .filter(|t| t.family == Family::Tabletop)
            .map(|t| t.gt_plan.len())
            .collect();
        assert_eq!(lens, vec![4, 4, 4, 4, 8, 8, 8, 12, 12, 16]);
    }

    #[test]
    fn tabletop_tasks_have_drop_noise_and_no_perturbations() {
        for task in task_library().into_iter().filter(|t| t.family == Family::Tabletop) {
            assert_eq!(task.failure.p_drop, DEFAULT_P_DROP, "{}", task.id);
            assert!(task.perturbations.is_empty(), "{}", task.id);
        }
    }

    #[test]
    fn household_tasks_close_a_door_the_plan_relies_on() {
        for task in task_library().into_iter().filter(|t| t.family == Family::Household) {
            assert_eq!(task.failure.p_drop, 0.0, "{}", task.id);
            assert_eq!(task.perturbations.len(), 1, "{}", task.id);
            let p = &task.perturbations[0];
            assert_eq!(p.flag, FlagName::Open);
            assert!(!p.value);
            // The door starts open, so the perturbation flips real state.
            assert_eq!(
                task.initial_scene.flag(&p.target, FlagName::Open),
                Some(true),
                "{}",
                task.id
            );
        }
    }

    #[test]
    fn perturbed_household_plan_stalls_without_replanning() {
        // Running the ground truth plan on the perturbed scene must fail the
        // put step and leave the main goal unsatisfied.
        let task = task_by_id("household_heat_01").unwrap();
        let mut scene = task.initial_scene.clone();
        scene.apply_perturbations(&task.perturbations).unwrap();
        let mut noise = noise_for_seed(0);
        let mut rejected = 0;
        for action in task.gt_plan.actions() {
            let outcome = scene.apply(action, &task.failure, &mut noise);
            if outcome.rejected_precondition() {
                rejected += 1;
            }
        }
        assert!(rejected > 0);
        let report = scene.check_goals(&task.goals);
        assert!(!report.all(), "{report:?}");
    }
}
