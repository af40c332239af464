//! World model: objects, scene state, goals, perturbations.
//!
//! A [`Scene`] is a table of cells with named objects on it, plus the robot's
//! gripper and its last located target. Scenes serialize to a canonical JSON
//! snapshot (sorted object keys, fixed field order), so two equal scenes
//! always produce byte-identical snapshots. Action execution lives in
//! [`exec`], observation rendering in [`observe`].

pub mod exec;
pub mod observe;

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::plan::Verb;

pub use exec::ExecNoise;
pub use observe::{Observation, RasterImage};

/// A validated object name: `[a-z][a-z0-9_]*`.
#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct ObjectId(String);

impl ObjectId {
    pub fn new(name: &str) -> Result<ObjectId, InvalidNameError> {
        let mut bytes = name.bytes();
        let head_ok = bytes.next().is_some_and(|b| b.is_ascii_lowercase());
        let tail_ok = bytes.all(|b| b.is_ascii_lowercase() || b.is_ascii_digit() || b == b'_');
        if head_ok && tail_ok {
            Ok(ObjectId(name.to_string()))
        } else {
            Err(InvalidNameError(name.to_string()))
        }
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for ObjectId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl fmt::Debug for ObjectId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "ObjectId({})", self.0)
    }
}

impl FromStr for ObjectId {
    type Err = InvalidNameError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        ObjectId::new(s)
    }
}

impl TryFrom<String> for ObjectId {
    type Error = InvalidNameError;

    fn try_from(value: String) -> Result<Self, Self::Error> {
        ObjectId::new(&value)
    }
}

impl From<ObjectId> for String {
    fn from(id: ObjectId) -> String {
        id.0
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("invalid object name {0:?}: names match [a-z][a-z0-9_]*")]
pub struct InvalidNameError(pub String);

/// Task family; decides the verb set and the wording of observations.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Family {
    Tabletop,
    Household,
}

impl Family {
    pub fn verbs(self) -> &'static [Verb] {
        match self {
            Family::Tabletop => &[Verb::Locate, Verb::Pick, Verb::Place],
            Family::Household => &[
                Verb::Goto,
                Verb::Pick,
                Verb::Open,
                Verb::Close,
                Verb::Put,
                Verb::ToggleOn,
                Verb::ToggleOff,
            ],
        }
    }

    /// The verb that aims the robot at an object before manipulation.
    pub fn locate_verb(self) -> Verb {
        match self {
            Family::Tabletop => Verb::Locate,
            Family::Household => Verb::Goto,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Family::Tabletop => "tabletop",
            Family::Household => "household",
        }
    }
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ObjectKind {
    Block,
    Bowl,
    Container,
    Item,
    Appliance,
}

impl ObjectKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ObjectKind::Block => "block",
            ObjectKind::Bowl => "bowl",
            ObjectKind::Container => "container",
            ObjectKind::Item => "item",
            ObjectKind::Appliance => "appliance",
        }
    }

    /// Kinds the gripper can pick up.
    pub fn movable(self) -> bool {
        matches!(self, ObjectKind::Block | ObjectKind::Item)
    }
}

impl fmt::Display for ObjectKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Color {
    Red,
    Green,
    Blue,
    Yellow,
    #[default]
    None,
}

impl Color {
    pub fn is_none(&self) -> bool {
        matches!(self, Color::None)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Color::Red => "red",
            Color::Green => "green",
            Color::Blue => "blue",
            Color::Yellow => "yellow",
            Color::None => "none",
        }
    }
}

impl fmt::Display for Color {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Boolean state dimensions an object may expose. `None` means the object
/// does not have that dimension at all.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StateFlags {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub open: Option<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub powered: Option<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub hot: Option<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub clean: Option<bool>,
}

impl StateFlags {
    pub fn is_empty(&self) -> bool {
        self.open.is_none() && self.powered.is_none() && self.hot.is_none() && self.clean.is_none()
    }

    pub fn get(&self, flag: FlagName) -> Option<bool> {
        match flag {
            FlagName::Open => self.open,
            FlagName::Powered => self.powered,
            FlagName::Hot => self.hot,
            FlagName::Clean => self.clean,
        }
    }

    /// Sets a flag the object already has; `None` if the dimension is absent.
    pub fn set(&mut self, flag: FlagName, value: bool) -> Option<()> {
        let slot = match flag {
            FlagName::Open => &mut self.open,
            FlagName::Powered => &mut self.powered,
            FlagName::Hot => &mut self.hot,
            FlagName::Clean => &mut self.clean,
        };
        slot.as_ref()?;
        *slot = Some(value);
        Some(())
    }

    /// The flag dimensions an object of the given kind starts with.
    pub fn defaults_for(kind: ObjectKind) -> StateFlags {
        match kind {
            ObjectKind::Block | ObjectKind::Bowl => StateFlags::default(),
            ObjectKind::Container => StateFlags {
                open: Some(false),
                ..StateFlags::default()
            },
            ObjectKind::Appliance => StateFlags {
                open: Some(false),
                powered: Some(false),
                ..StateFlags::default()
            },
            ObjectKind::Item => StateFlags {
                hot: Some(false),
                clean: Some(false),
                ..StateFlags::default()
            },
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FlagName {
    Open,
    Powered,
    Hot,
    Clean,
}

impl FlagName {
    pub fn as_str(self) -> &'static str {
        match self {
            FlagName::Open => "open",
            FlagName::Powered => "powered",
            FlagName::Hot => "hot",
            FlagName::Clean => "clean",
        }
    }
}

impl fmt::Display for FlagName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// What a powered-on appliance does to its contents.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ApplianceEffect {
    Heat,
    Clean,
}

/// Where an object currently is.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Placement {
    /// On the table, at a cell index in `0..table_cells`.
    OnTable(u32),
    /// Inside a bowl, container, or appliance.
    In(ObjectId),
    /// Stacked on top of a block.
    On(ObjectId),
    /// In the gripper.
    Held,
}

impl fmt::Display for Placement {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Placement::OnTable(cell) => write!(f, "on cell {cell}"),
            Placement::In(target) => write!(f, "in {target}"),
            Placement::On(target) => write!(f, "on top of {target}"),
            Placement::Held => f.write_str("held by the gripper"),
        }
    }
}

/// One object in a scene. Field order is the canonical snapshot order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SceneObject {
    pub kind: ObjectKind,
    #[serde(default, skip_serializing_if = "Color::is_none")]
    pub color: Color,
    pub at: Placement,
    #[serde(default, skip_serializing_if = "StateFlags::is_empty")]
    pub flags: StateFlags,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub effect: Option<ApplianceEffect>,
}

/// The full simulator state.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scene {
    pub family: Family,
    pub table_cells: u32,
    pub gripper: Option<ObjectId>,
    pub located: Option<ObjectId>,
    pub objects: BTreeMap<ObjectId, SceneObject>,
    /// Number of action applications so far; not part of the snapshot, so a
    /// rejected action leaves the serialized scene byte-identical.
    #[serde(skip)]
    pub step: u32,
}

impl Scene {
    pub fn new(family: Family, table_cells: u32) -> Scene {
        Scene {
            family,
            table_cells,
            gripper: None,
            located: None,
            objects: BTreeMap::new(),
            step: 0,
        }
    }

    /// Adds an object with the default flags for its kind.
    pub fn add_object(
        &mut self,
        id: ObjectId,
        kind: ObjectKind,
        color: Color,
        at: Placement,
    ) -> Result<(), WorldError> {
        if self.objects.contains_key(&id) {
            return Err(WorldError::DuplicateObject(id));
        }
        let held = at == Placement::Held;
        self.objects.insert(
            id.clone(),
            SceneObject {
                kind,
                color,
                at,
                flags: StateFlags::defaults_for(kind),
                effect: None,
            },
        );
        if held {
            self.gripper = Some(id);
        }
        Ok(())
    }

    /// Sets what a powered-on appliance does to its contents.
    pub fn set_appliance_effect(
        &mut self,
        id: &ObjectId,
        effect: ApplianceEffect,
    ) -> Result<(), WorldError> {
        let object = self
            .objects
            .get_mut(id)
            .ok_or_else(|| WorldError::UnknownObject(id.clone()))?;
        object.effect = Some(effect);
        Ok(())
    }

    /// Sets a state flag, failing if the object lacks that dimension.
    pub fn set_flag(&mut self, id: &ObjectId, flag: FlagName, value: bool) -> Result<(), WorldError> {
        let object = self
            .objects
            .get_mut(id)
            .ok_or_else(|| WorldError::UnknownObject(id.clone()))?;
        object
            .flags
            .set(flag, value)
            .ok_or_else(|| WorldError::UnsupportedFlag { object: id.clone(), flag })
    }

    pub fn object(&self, id: &ObjectId) -> Option<&SceneObject> {
        self.objects.get(id)
    }

    pub fn placement(&self, id: &ObjectId) -> Option<&Placement> {
        self.objects.get(id).map(|o| &o.at)
    }

    pub fn flag(&self, id: &ObjectId, flag: FlagName) -> Option<bool> {
        self.objects.get(id).and_then(|o| o.flags.get(flag))
    }

    /// Objects stacked directly on `id`.
    pub fn supports(&self, id: &ObjectId) -> Vec<&ObjectId> {
        self.objects
            .iter()
            .filter(|(_, o)| o.at == Placement::On(id.clone()))
            .map(|(other, _)| other)
            .collect()
    }

    /// Objects directly inside `id`.
    pub fn contents(&self, id: &ObjectId) -> Vec<&ObjectId> {
        self.objects
            .iter()
            .filter(|(_, o)| o.at == Placement::In(id.clone()))
            .map(|(other, _)| other)
            .collect()
    }

    /// Table cells not covered by any object, ascending.
    pub fn free_cells(&self) -> Vec<u32> {
        let mut free: Vec<u32> = (0..self.table_cells)
            .filter(|cell| {
                !self
                    .objects
                    .values()
                    .any(|o| o.at == Placement::OnTable(*cell))
            })
            .collect();
        free.sort_unstable();
        free
    }

    /// The verbs and object names plans for this scene may use.
    pub fn vocabulary(&self) -> crate::plan::Vocabulary {
        crate::plan::Vocabulary::for_family(self.family, self.objects.keys().cloned())
    }

    /// Structural invariants; scenes from builders and snapshots must pass.
    pub fn validate(&self) -> Result<(), WorldError> {
        let invalid = |reason: String| Err(WorldError::InvalidScene(reason));
        if self.table_cells == 0 {
            return invalid("table has no cells".into());
        }
        let mut seen_cells = BTreeMap::new();
        let mut held = Vec::new();
        for (id, object) in &self.objects {
            match &object.at {
                Placement::OnTable(cell) => {
                    if *cell >= self.table_cells {
                        return invalid(format!("{id} is on cell {cell}, past the table edge"));
                    }
                    if let Some(other) = seen_cells.insert(*cell, id.clone()) {
                        return invalid(format!("{other} and {id} share cell {cell}"));
                    }
                }
                Placement::In(target) => {
                    let Some(t) = self.objects.get(target) else {
                        return invalid(format!("{id} is in missing object {target}"));
                    };
                    if !matches!(
                        t.kind,
                        ObjectKind::Bowl | ObjectKind::Container | ObjectKind::Appliance
                    ) {
                        return invalid(format!("{id} is in {target}, which cannot contain"));
                    }
                }
                Placement::On(target) => {
                    let Some(t) = self.objects.get(target) else {
                        return invalid(format!("{id} is on missing object {target}"));
                    };
                    if t.kind != ObjectKind::Block {
                        return invalid(format!("{id} is stacked on {target}, which is not a block"));
                    }
                }
                Placement::Held => held.push(id.clone()),
            }
            if !object.kind.movable() && !matches!(object.at, Placement::OnTable(_)) {
                return invalid(format!("{id} is a {} and must sit on the table", object.kind));
            }
        }
        match (&self.gripper, held.as_slice()) {
            (None, []) => {}
            (Some(id), [only]) if id == only => {}
            (gripper, held) => {
                return invalid(format!("gripper {gripper:?} disagrees with held objects {held:?}"));
            }
        }
        if let Some(id) = &self.located {
            if !self.objects.contains_key(id) {
                return invalid(format!("located target {id} does not exist"));
            }
        }
        for id in self.objects.keys() {
            let mut hops = 0;
            let mut at = id;
            loop {
                let object = &self.objects[at];
                let next = match &object.at {
                    Placement::In(t) | Placement::On(t) => t,
                    _ => break,
                };
                if let Some(holder) = &self.gripper {
                    if next == holder {
                        return invalid(format!("{id} rests on held object {holder}"));
                    }
                }
                hops += 1;
                if hops > self.objects.len() {
                    return invalid(format!("containment cycle through {id}"));
                }
                at = next;
            }
        }
        Ok(())
    }

    /// True when a single goal condition holds.
    pub fn goal_satisfied(&self, goal: &GoalCondition) -> bool {
        match goal {
            GoalCondition::On { object, support } => {
                self.placement(object) == Some(&Placement::On(support.clone()))
            }
            GoalCondition::In { object, container } => {
                self.placement(object) == Some(&Placement::In(container.clone()))
            }
            GoalCondition::Flag { object, flag, value } => self.flag(object, *flag) == Some(*value),
        }
    }

    pub fn check_goals(&self, goals: &[GoalCondition]) -> GoalReport {
        let satisfied = goals.iter().filter(|g| self.goal_satisfied(g)).count() as u32;
        GoalReport { satisfied, total: goals.len() as u32 }
    }

    /// Applies start-of-episode perturbations. Only legal before the first
    /// action, and each (object, flag) pair may appear once.
    pub fn apply_perturbations(&mut self, perturbations: &[Perturbation]) -> Result<(), WorldError> {
        if self.step != 0 {
            return Err(WorldError::PerturbationAfterStart);
        }
        let mut seen = Vec::new();
        for p in perturbations {
            let key = (p.target.clone(), p.flag);
            if seen.contains(&key) {
                return Err(WorldError::DuplicatePerturbation {
                    object: p.target.clone(),
                    flag: p.flag,
                });
            }
            seen.push(key);
        }
        for p in perturbations {
            self.set_flag(&p.target, p.flag, p.value)?;
        }
        Ok(())
    }
}

/// Goal counts for one episode.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct GoalReport {
    pub satisfied: u32,
    pub total: u32,
}

impl GoalReport {
    pub fn all(&self) -> bool {
        self.satisfied == self.total
    }
}

/// A condition the final scene must satisfy.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GoalCondition {
    On { object: ObjectId, support: ObjectId },
    In { object: ObjectId, container: ObjectId },
    Flag { object: ObjectId, flag: FlagName, value: bool },
}

/// A start-of-episode surprise: a state flag forced to a value the ground
/// truth plan does not expect.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Perturbation {
    pub target: ObjectId,
    pub flag: FlagName,
    pub value: bool,
}

/// Stochastic execution failure settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FailureModel {
    /// Probability that a pick, place, or put execution drops its object.
    pub p_drop: f64,
    /// Optional deterministic override: entry `i` decides the `i`-th drop
    /// opportunity. When exhausted, sampling with `p_drop` resumes.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub drop_schedule: Option<Vec<bool>>,
}

impl FailureModel {
    pub fn none() -> FailureModel {
        FailureModel { p_drop: 0.0, drop_schedule: None }
    }

    pub fn probability(p_drop: f64) -> FailureModel {
        FailureModel { p_drop, drop_schedule: None }
    }

    pub fn scheduled(schedule: Vec<bool>) -> FailureModel {
        FailureModel { p_drop: 0.0, drop_schedule: Some(schedule) }
    }
}

/// How one action application went.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutcomeStatus {
    Executed,
    ExecutedWithDrop,
    RejectedPrecondition,
}

/// Result of applying one action to a scene.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ActionOutcome {
    pub status: OutcomeStatus,
    /// Where the object landed, when the action dropped it.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub drop_destination: Option<Placement>,
    /// Simulator diagnostic; for rejections, the precondition that failed.
    pub message: String,
}

impl ActionOutcome {
    pub fn executed(message: impl Into<String>) -> ActionOutcome {
        ActionOutcome {
            status: OutcomeStatus::Executed,
            drop_destination: None,
            message: message.into(),
        }
    }

    pub fn rejected(message: impl Into<String>) -> ActionOutcome {
        ActionOutcome {
            status: OutcomeStatus::RejectedPrecondition,
            drop_destination: None,
            message: message.into(),
        }
    }

    pub fn dropped(destination: Placement, message: impl Into<String>) -> ActionOutcome {
        ActionOutcome {
            status: OutcomeStatus::ExecutedWithDrop,
            drop_destination: Some(destination),
            message: message.into(),
        }
    }

    pub fn rejected_precondition(&self) -> bool {
        self.status == OutcomeStatus::RejectedPrecondition
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum WorldError {
    #[error(transparent)]
    InvalidName(#[from] InvalidNameError),
    #[error("unknown object {0}")]
    UnknownObject(ObjectId),
    #[error("duplicate object {0}")]
    DuplicateObject(ObjectId),
    #[error("object {object} does not support the {flag} flag")]
    UnsupportedFlag { object: ObjectId, flag: FlagName },
    #[error("duplicate perturbation for {object}.{flag}")]
    DuplicatePerturbation { object: ObjectId, flag: FlagName },
    #[error("perturbations must be applied before the first action")]
    PerturbationAfterStart,
    #[error("invalid scene: {0}")]
    InvalidScene(String),
    #[error("snapshot parse error: {0}")]
    SnapshotParse(String),
}
