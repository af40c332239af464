//! The scripted backend: a deterministic rule engine that answers look,
//! explain, and replan prompts the way a competent vision-language model
//! would.
//!
//! The engine reads the scene from the JSON snapshot attachment (never from
//! hidden simulator state), diagnoses the failed action against it, and
//! produces fixed-format prose whose downstream stages can be parsed back
//! losslessly. Replies are pure functions of the request, so episodes
//! using this backend replay bit-for-bit.

use std::collections::BTreeSet;

use crate::plan::{Action, Verb};
use crate::world::{Family, FlagName, ObjectId, ObjectKind, Placement, Scene};

use super::{Attachment, BackendError, BackendRequest, Stage};

/// Answers one request according to its stage marker.
pub(crate) fn respond(request: &BackendRequest) -> Result<String, BackendError> {
    let stage = Stage::of_system_text(&request.system_text).ok_or_else(|| {
        BackendError::Scripted("system text carries no stage marker".to_string())
    })?;
    let view = PromptView::parse(&request.user_text);
    match stage {
        Stage::Look => respond_look(request, &view),
        Stage::Explain => respond_explain(&view),
        Stage::Replan => respond_replan(request, &view),
    }
}

/// The fields the engine can read off a rendered prompt.
#[derive(Debug, Default)]
struct PromptView {
    attempted: Option<Action>,
    evidence: Option<String>,
    instruction: Option<String>,
    plan: Option<Vec<Action>>,
    notes: Option<String>,
    analysis: Option<String>,
}

impl PromptView {
    fn parse(user_text: &str) -> PromptView {
        let mut view = PromptView::default();
        let lines: Vec<&str> = user_text.lines().collect();
        let mut i = 0;
        while i < lines.len() {
            let line = lines[i].trim_end();
            if let Some(rest) = line.strip_prefix("The robot attempted: ") {
                view.attempted = Action::parse(rest).ok();
            } else if let Some(rest) = line.strip_prefix("Failure notice: ") {
                view.evidence = Some(rest.to_string());
            } else if let Some(rest) = line.strip_prefix("Instruction: ") {
                view.instruction = Some(rest.to_string());
            } else if line == "Remaining plan:" || line == "Current remaining plan:" {
                let mut actions = Vec::new();
                while i + 1 < lines.len() && !lines[i + 1].trim().is_empty() {
                    i += 1;
                    let text = lines[i].trim();
                    if text == crate::plan::DONE_MARKER {
                        continue;
                    }
                    if let Ok(action) = Action::parse(text) {
                        actions.push(action);
                    }
                }
                view.plan = Some(actions);
            } else if line == "Inspection notes:" {
                let mut notes = Vec::new();
                while i + 1 < lines.len() && !lines[i + 1].trim().is_empty() {
                    i += 1;
                    notes.push(lines[i].trim());
                }
                view.notes = Some(notes.join("\n"));
            } else if line == "Analysis:" {
                let mut body = Vec::new();
                while i + 1 < lines.len()
                    && !lines[i + 1].starts_with("Write the corrected plan")
                {
                    i += 1;
                    body.push(lines[i].trim_end());
                }
                while body.last().is_some_and(|l| l.trim().is_empty()) {
                    body.pop();
                }
                let text = body.join("\n");
                if !text.trim().is_empty() && text.trim() != "(none)" {
                    view.analysis = Some(text);
                }
            }
            i += 1;
        }
        view
    }
}

fn scene_from_attachment(request: &BackendRequest) -> Result<Scene, BackendError> {
    match &request.attachment {
        Some(Attachment::Snapshot(snapshot)) => Scene::from_snapshot(snapshot)
            .map_err(|e| BackendError::Scripted(format!("bad snapshot attachment: {e}"))),
        Some(Attachment::Raster(_)) => Err(BackendError::Scripted(
            "the scripted backend reads snapshots, not raster images".to_string(),
        )),
        None => Err(BackendError::Scripted("prompt carries no observation".to_string())),
    }
}

fn respond_look(request: &BackendRequest, view: &PromptView) -> Result<String, BackendError> {
    let scene = scene_from_attachment(request)?;
    let attempted = view
        .attempted
        .clone()
        .ok_or_else(|| BackendError::Scripted("look prompt names no attempted action".into()))?;
    let evidence = view
        .evidence
        .clone()
        .ok_or_else(|| BackendError::Scripted("look prompt carries no failure notice".into()))?;
    Ok(render_look(&analyze(&scene, &attempted, &evidence)))
}

fn respond_explain(view: &PromptView) -> Result<String, BackendError> {
    let plan = view
        .plan
        .clone()
        .ok_or_else(|| BackendError::Scripted("explain prompt carries no plan".into()))?;
    if plan.is_empty() {
        return Err(BackendError::Scripted("explain prompt has an empty plan".into()));
    }
    let notes = view
        .notes
        .clone()
        .ok_or_else(|| BackendError::Scripted("explain prompt carries no notes".into()))?;
    let discrepancy = parse_look(&notes)
        .unwrap_or_else(|| classify_evidence(&notes, &plan[0]));
    let steps = recipe(&discrepancy, &plan, view.instruction.as_deref());
    Ok(render_explain(&discrepancy, &steps))
}

fn respond_replan(request: &BackendRequest, view: &PromptView) -> Result<String, BackendError> {
    let plan = view
        .plan
        .clone()
        .ok_or_else(|| BackendError::Scripted("replan prompt carries no plan".into()))?;
    if plan.is_empty() {
        return Err(BackendError::Scripted("replan prompt has an empty plan".into()));
    }
    if let Some(analysis) = &view.analysis {
        if let Some(steps) = extract_proposed(analysis) {
            return Ok(render_plan(&steps));
        }
        if let Some(discrepancy) = parse_look(first_line(analysis)) {
            let steps = recipe(&discrepancy, &plan, view.instruction.as_deref());
            return Ok(render_plan(&steps));
        }
    }
    if let Some(Attachment::Snapshot(_)) = &request.attachment {
        let scene = scene_from_attachment(request)?;
        let evidence = view.evidence.clone().unwrap_or_default();
        let discrepancy = analyze(&scene, &plan[0], &evidence);
        let steps = recipe(&discrepancy, &plan, view.instruction.as_deref());
        return Ok(render_plan(&steps));
    }
    Ok(render_plan(&plan))
}

fn first_line(text: &str) -> &str {
    text.lines().next().unwrap_or_default()
}

fn render_plan(actions: &[Action]) -> String {
    if actions.is_empty() {
        return crate::plan::DONE_MARKER.to_string();
    }
    actions
        .iter()
        .map(Action::to_string)
        .collect::<Vec<_>>()
        .join("\n")
}

/// Lines following a "Proposed plan:" marker, parsed as actions.
fn extract_proposed(analysis: &str) -> Option<Vec<Action>> {
    let mut lines = analysis.lines();
    lines.by_ref().find(|l| l.trim() == "Proposed plan:")?;
    let mut actions = Vec::new();
    for line in lines {
        let text = line.trim();
        if text.is_empty() {
            break;
        }
        if text == crate::plan::DONE_MARKER {
            return Some(actions);
        }
        match Action::parse(text) {
            Ok(action) => actions.push(action),
            Err(_) => break,
        }
    }
    if actions.is_empty() { None } else { Some(actions) }
}

/// What the engine concluded from scene plus failure notice.
#[derive(Debug, Clone, PartialEq, Eq)]
enum Discrepancy {
    /// Scene already shows the expected outcome of a step the checker
    /// flagged with a vague notice; the notice is probably spurious.
    NoneFound { action: Action },
    /// The step was genuinely rejected, but its effect already holds.
    Redundant { action: Action },
    /// An object lies loose on the table instead of where it belongs.
    Dropped { object: ObjectId, cell: Option<u32> },
    /// A manipulation expects a held object, but the gripper is empty.
    EmptyGripper {
        action: Action,
        free: Vec<(ObjectId, u32)>,
        contents: Vec<ObjectId>,
    },
    /// The target must be open and is closed.
    Blocked { container: ObjectId, action: Action },
    /// The appliance must be closed before starting and is open.
    MustClose { appliance: ObjectId, action: Action },
    /// The pick target sits inside a closed container.
    InsideClosed { object: ObjectId, container: ObjectId },
    /// The step needs its target located first.
    NotLocated { target: ObjectId, action: Action },
    Unknown { action: Action },
}

/// Diagnoses a failed action against the observed scene.
fn analyze(scene: &Scene, failed: &Action, evidence: &str) -> Discrepancy {
    let generic = evidence.ends_with("action may have failed");
    let rejected = evidence.contains("could not be executed");
    if generic {
        return if effect_achieved(scene, failed) {
            Discrepancy::NoneFound { action: failed.clone() }
        } else {
            Discrepancy::Unknown { action: failed.clone() }
        };
    }
    if rejected && intrinsic_effect_achieved(scene, failed) {
        return Discrepancy::Redundant { action: failed.clone() };
    }
    let unknown = || Discrepancy::Unknown { action: failed.clone() };
    let not_located = |target: &ObjectId| Discrepancy::NotLocated {
        target: target.clone(),
        action: failed.clone(),
    };
    match failed.verb {
        Verb::Locate | Verb::Goto => unknown(),
        Verb::Pick => {
            let x = failed.arg();
            if rejected {
                if scene.gripper.is_some() {
                    return unknown();
                }
                if let Some(Placement::In(container)) = scene.placement(x) {
                    if scene.flag(container, FlagName::Open) == Some(false) {
                        return Discrepancy::InsideClosed {
                            object: x.clone(),
                            container: container.clone(),
                        };
                    }
                }
                if scene.located.as_ref() != Some(x) {
                    return not_located(x);
                }
                unknown()
            } else {
                match scene.placement(x) {
                    Some(Placement::OnTable(cell)) => Discrepancy::Dropped {
                        object: x.clone(),
                        cell: Some(*cell),
                    },
                    _ => unknown(),
                }
            }
        }
        Verb::Place => {
            let y = failed.arg();
            if rejected {
                if scene.gripper.is_none() {
                    return empty_gripper(scene, failed, ObjectKind::Block);
                }
                if scene.located.as_ref() != Some(y) {
                    return not_located(y);
                }
                unknown()
            } else {
                match dropped_object(scene, evidence) {
                    Some(d) => d,
                    None => unknown(),
                }
            }
        }
        Verb::Put => {
            let y = &failed.args[1];
            if rejected {
                if scene.flag(y, FlagName::Open) == Some(false) {
                    return Discrepancy::Blocked {
                        container: y.clone(),
                        action: failed.clone(),
                    };
                }
                if scene.located.as_ref() != Some(y) {
                    return not_located(y);
                }
                if scene.gripper.is_none() {
                    return empty_gripper(scene, failed, ObjectKind::Item);
                }
                unknown()
            } else {
                let x = &failed.args[0];
                match scene.placement(x) {
                    Some(Placement::OnTable(cell)) => Discrepancy::Dropped {
                        object: x.clone(),
                        cell: Some(*cell),
                    },
                    _ => unknown(),
                }
            }
        }
        Verb::Open | Verb::Close | Verb::ToggleOff => {
            let x = failed.arg();
            if scene.located.as_ref() != Some(x) {
                return not_located(x);
            }
            unknown()
        }
        Verb::ToggleOn => {
            let x = failed.arg();
            if scene.flag(x, FlagName::Open) == Some(true) {
                return Discrepancy::MustClose {
                    appliance: x.clone(),
                    action: failed.clone(),
                };
            }
            if scene.located.as_ref() != Some(x) {
                return not_located(x);
            }
            unknown()
        }
    }
}

/// The dropped object named by "completed but X is not in/on Y" evidence.
fn dropped_object(scene: &Scene, evidence: &str) -> Option<Discrepancy> {
    let tail = evidence.split("completed but ").nth(1)?;
    let name = tail.split(" is not ").next()?.trim();
    let object = ObjectId::new(name).ok()?;
    match scene.placement(&object) {
        Some(Placement::OnTable(cell)) => Some(Discrepancy::Dropped {
            object,
            cell: Some(*cell),
        }),
        _ => None,
    }
}

fn empty_gripper(scene: &Scene, failed: &Action, wanted: ObjectKind) -> Discrepancy {
    let free: Vec<(ObjectId, u32)> = scene
        .objects
        .iter()
        .filter_map(|(id, o)| match o.at {
            Placement::OnTable(cell) if o.kind == wanted => Some((id.clone(), cell)),
            _ => None,
        })
        .collect();
    let target = failed.target();
    let mut contents: Vec<ObjectId> = scene.contents(target).into_iter().cloned().collect();
    contents.extend(scene.supports(target).into_iter().cloned());
    contents.sort();
    Discrepancy::EmptyGripper { action: failed.clone(), free, contents }
}

/// True when the scene already shows the action's post-state, including the
/// existence heuristic for `place` (something is in or on the target).
fn effect_achieved(scene: &Scene, action: &Action) -> bool {
    if intrinsic_effect_achieved(scene, action) {
        return true;
    }
    if action.verb == Verb::Place {
        let y = action.arg();
        return scene.gripper.is_none()
            && (!scene.contents(y).is_empty() || !scene.supports(y).is_empty());
    }
    false
}

/// The strict effect check: only conditions tied to the action's own object,
/// safe to treat a rejected step as redundant on.
fn intrinsic_effect_achieved(scene: &Scene, action: &Action) -> bool {
    match action.verb {
        Verb::Locate | Verb::Goto => scene.located.as_ref() == Some(action.arg()),
        Verb::Pick => scene.gripper.as_ref() == Some(action.arg()),
        Verb::Place => false,
        Verb::Put => {
            scene.placement(&action.args[0]) == Some(&Placement::In(action.args[1].clone()))
        }
        Verb::Open => scene.flag(action.arg(), FlagName::Open) == Some(true),
        Verb::Close => scene.flag(action.arg(), FlagName::Open) == Some(false),
        Verb::ToggleOn => scene.flag(action.arg(), FlagName::Powered) == Some(true),
        Verb::ToggleOff => scene.flag(action.arg(), FlagName::Powered) == Some(false),
    }
}

/// Fallback diagnosis from the failure notice alone (no look stage): drops
/// are recognizable from "completed but" evidence, everything else is not.
fn classify_evidence(notes: &str, first: &Action) -> Discrepancy {
    if notes.contains("completed but the gripper is empty") && first.verb == Verb::Pick {
        return Discrepancy::Dropped { object: first.arg().clone(), cell: None };
    }
    if let Some(tail) = notes.split("completed but ").nth(1) {
        if let Some(name) = tail.split(" is not ").next() {
            if let Ok(object) = ObjectId::new(name.trim()) {
                return Discrepancy::Dropped { object, cell: None };
            }
        }
    }
    Discrepancy::Unknown { action: first.clone() }
}

fn render_look(d: &Discrepancy) -> String {
    match d {
        Discrepancy::NoneFound { action } => format!(
            "No discrepancy found; the scene matches the expected outcome of {action}."
        ),
        Discrepancy::Redundant { action } => format!(
            "Discrepancy: the effect of {action} already holds; the step is redundant."
        ),
        Discrepancy::Dropped { object, cell: Some(cell) } => format!(
            "Discrepancy: {object} was dropped and lies on table cell {cell}."
        ),
        Discrepancy::Dropped { object, cell: None } => format!(
            "Discrepancy: {object} was dropped and lies somewhere on the table."
        ),
        Discrepancy::EmptyGripper { action, free, contents } => {
            let free_text = if free.is_empty() {
                "none".to_string()
            } else {
                free.iter()
                    .map(|(id, cell)| format!("{id} (cell {cell})"))
                    .collect::<Vec<_>>()
                    .join(", ")
            };
            let contents_text = if contents.is_empty() {
                "nothing".to_string()
            } else {
                contents.iter().map(ObjectId::to_string).collect::<Vec<_>>().join(", ")
            };
            format!(
                "Discrepancy: the gripper is empty, but {action} requires holding an object. \
                 Loose candidates: {free_text}. Target contents: {contents_text}."
            )
        }
        Discrepancy::Blocked { container, action } => format!(
            "Discrepancy: {container} is closed, but {action} requires it to be open."
        ),
        Discrepancy::MustClose { appliance, action } => format!(
            "Discrepancy: {appliance} is open, but {action} requires it to be closed."
        ),
        Discrepancy::InsideClosed { object, container } => format!(
            "Discrepancy: {object} is inside {container}, which is closed."
        ),
        Discrepancy::NotLocated { target, action } => format!(
            "Discrepancy: {target} has not been located, which {action} requires."
        ),
        Discrepancy::Unknown { action } => format!(
            "The cause of the failure of {action} could not be determined from the scene."
        ),
    }
}

/// Inverts [`render_look`]. Returns `None` for text that is not a look
/// sentence (for example raw failure notices).
fn parse_look(text: &str) -> Option<Discrepancy> {
    let text = text.trim();
    let action = |s: &str| Action::parse(s).ok();
    let object = |s: &str| ObjectId::new(s).ok();

    if let Some(rest) = text.strip_prefix("No discrepancy found; the scene matches the expected outcome of ") {
        return Some(Discrepancy::NoneFound { action: action(rest.strip_suffix('.')?)? });
    }
    if let Some(rest) = text.strip_prefix("The cause of the failure of ") {
        let rest = rest.strip_suffix(" could not be determined from the scene.")?;
        return Some(Discrepancy::Unknown { action: action(rest)? });
    }
    let rest = text.strip_prefix("Discrepancy: ")?;
    if let Some(rest) = rest.strip_prefix("the effect of ") {
        let rest = rest.strip_suffix(" already holds; the step is redundant.")?;
        return Some(Discrepancy::Redundant { action: action(rest)? });
    }
    if let Some(rest) = rest.strip_prefix("the gripper is empty, but ") {
        let (act, tail) = rest.split_once(" requires holding an object. Loose candidates: ")?;
        let (free_text, contents_text) =
            tail.strip_suffix('.')?.split_once(". Target contents: ")?;
        let free = if free_text == "none" {
            Vec::new()
        } else {
            free_text
                .split(", ")
                .map(|entry| {
                    let (id, cell) = entry.split_once(" (cell ")?;
                    Some((object(id)?, cell.strip_suffix(')')?.parse().ok()?))
                })
                .collect::<Option<Vec<_>>>()?
        };
        let contents = if contents_text == "nothing" {
            Vec::new()
        } else {
            contents_text
                .split(", ")
                .map(object)
                .collect::<Option<Vec<_>>>()?
        };
        return Some(Discrepancy::EmptyGripper { action: action(act)?, free, contents });
    }
    if rest.contains(" was dropped and lies on table cell ") {
        let (id, tail) = rest.split_once(" was dropped and lies on table cell ")?;
        let cell = tail.strip_suffix('.')?.parse().ok()?;
        return Some(Discrepancy::Dropped { object: object(id)?, cell: Some(cell) });
    }
    if let Some(id) = rest.strip_suffix(" was dropped and lies somewhere on the table.") {
        return Some(Discrepancy::Dropped { object: object(id)?, cell: None });
    }
    if rest.contains(" is closed, but ") {
        let (container, tail) = rest.split_once(" is closed, but ")?;
        let act = tail.strip_suffix(" requires it to be open.")?;
        return Some(Discrepancy::Blocked {
            container: object(container)?,
            action: action(act)?,
        });
    }
    if rest.contains(" is open, but ") {
        let (appliance, tail) = rest.split_once(" is open, but ")?;
        let act = tail.strip_suffix(" requires it to be closed.")?;
        return Some(Discrepancy::MustClose {
            appliance: object(appliance)?,
            action: action(act)?,
        });
    }
    if rest.contains(" is inside ") {
        let (id, tail) = rest.split_once(" is inside ")?;
        let container = tail.strip_suffix(", which is closed.")?;
        return Some(Discrepancy::InsideClosed {
            object: object(id)?,
            container: object(container)?,
        });
    }
    if rest.contains(" has not been located, which ") {
        let (target, tail) = rest.split_once(" has not been located, which ")?;
        let act = tail.strip_suffix(" requires.")?;
        return Some(Discrepancy::NotLocated {
            target: object(target)?,
            action: action(act)?,
        });
    }
    None
}

/// Turns a diagnosis into a corrected remaining plan. `remaining[0]` is the
/// failed action.
fn recipe(d: &Discrepancy, remaining: &[Action], instruction: Option<&str>) -> Vec<Action> {
    let family = infer_family(remaining);
    let loc = family.locate_verb();
    let rest = remaining;
    match d {
        Discrepancy::NoneFound { .. } | Discrepancy::Unknown { .. } => rest.to_vec(),
        Discrepancy::Redundant { .. } => rest[1..].to_vec(),
        Discrepancy::Dropped { object, .. } => match rest[0].verb {
            Verb::Pick => {
                let mut out = vec![Action::unary(loc, object.clone())];
                out.extend_from_slice(rest);
                out
            }
            Verb::Place => {
                let y = rest[0].arg().clone();
                let mut out = vec![
                    Action::unary(loc, object.clone()),
                    Action::unary(Verb::Pick, object.clone()),
                    Action::unary(loc, y.clone()),
                    Action::unary(Verb::Place, y),
                ];
                out.extend_from_slice(&rest[1..]);
                out
            }
            Verb::Put => {
                let y = rest[0].args[1].clone();
                let mut out = vec![
                    Action::unary(loc, object.clone()),
                    Action::unary(Verb::Pick, object.clone()),
                    Action::unary(loc, y.clone()),
                    Action::put(object.clone(), y),
                ];
                out.extend_from_slice(&rest[1..]);
                out
            }
            _ => {
                let mut out = vec![
                    Action::unary(loc, object.clone()),
                    Action::unary(Verb::Pick, object.clone()),
                ];
                out.extend_from_slice(rest);
                out
            }
        },
        Discrepancy::EmptyGripper { free, contents, .. } => {
            let picked_later: BTreeSet<&ObjectId> = rest[1..]
                .iter()
                .filter_map(|a| match a.verb {
                    Verb::Pick => Some(a.arg()),
                    Verb::Put => Some(&a.args[0]),
                    _ => None,
                })
                .collect();
            let orphans: Vec<&ObjectId> = free
                .iter()
                .map(|(id, _)| id)
                .filter(|id| !picked_later.contains(*id))
                .collect();
            if let Some(chosen) = choose_orphan(&orphans, instruction) {
                match rest[0].verb {
                    Verb::Place => {
                        let y = rest[0].arg().clone();
                        let mut out = vec![
                            Action::unary(loc, chosen.clone()),
                            Action::unary(Verb::Pick, chosen.clone()),
                            Action::unary(loc, y.clone()),
                            Action::unary(Verb::Place, y),
                        ];
                        out.extend_from_slice(&rest[1..]);
                        out
                    }
                    Verb::Put => {
                        let y = rest[0].args[1].clone();
                        let mut out = vec![
                            Action::unary(loc, chosen.clone()),
                            Action::unary(Verb::Pick, chosen.clone()),
                            Action::unary(loc, y.clone()),
                            Action::put(chosen.clone(), y),
                        ];
                        out.extend_from_slice(&rest[1..]);
                        out
                    }
                    _ => rest.to_vec(),
                }
            } else if !contents.is_empty() {
                rest[1..].to_vec()
            } else {
                rest.to_vec()
            }
        }
        Discrepancy::Blocked { container, .. } => {
            let mut out = vec![Action::unary(Verb::Open, container.clone())];
            out.extend_from_slice(rest);
            out
        }
        Discrepancy::MustClose { appliance, .. } => {
            let mut out = vec![Action::unary(Verb::Close, appliance.clone())];
            out.extend_from_slice(rest);
            out
        }
        Discrepancy::InsideClosed { container, .. } => {
            let x = rest[0].arg().clone();
            let mut out = vec![
                Action::unary(loc, container.clone()),
                Action::unary(Verb::Open, container.clone()),
                Action::unary(loc, x),
            ];
            out.extend_from_slice(rest);
            out
        }
        Discrepancy::NotLocated { target, .. } => {
            let mut out = vec![Action::unary(loc, target.clone())];
            out.extend_from_slice(rest);
            out
        }
    }
}

fn infer_family(actions: &[Action]) -> Family {
    for action in actions {
        match action.verb {
            Verb::Locate | Verb::Place => return Family::Tabletop,
            Verb::Goto
            | Verb::Put
            | Verb::Open
            | Verb::Close
            | Verb::ToggleOn
            | Verb::ToggleOff => return Family::Household,
            Verb::Pick => {}
        }
    }
    Family::Tabletop
}

/// Among loose objects not needed later, the one whose name best matches
/// the instruction; ties go to name order.
fn choose_orphan<'a>(orphans: &[&'a ObjectId], instruction: Option<&str>) -> Option<&'a ObjectId> {
    if orphans.is_empty() {
        return None;
    }
    let words: BTreeSet<String> = instruction
        .unwrap_or_default()
        .split(|c: char| !c.is_ascii_alphanumeric())
        .filter(|w| !w.is_empty())
        .map(|w| w.to_ascii_lowercase().trim_end_matches('s').to_string())
        .collect();
    let score = |id: &ObjectId| {
        id.as_str()
            .split('_')
            .filter(|token| words.contains(token.trim_end_matches('s')))
            .count()
    };
    let mut best = orphans[0];
    let mut best_score = score(best);
    for candidate in &orphans[1..] {
        let s = score(candidate);
        if s > best_score {
            best = candidate;
            best_score = s;
        }
    }
    Some(best)
}

fn render_explain(d: &Discrepancy, steps: &[Action]) -> String {
    let cause = match d {
        Discrepancy::NoneFound { action } => format!(
            "The failure notice looks spurious: the scene already shows the expected outcome \
             of {action}. Keep the plan unchanged."
        ),
        Discrepancy::Redundant { action } => format!(
            "The step {action} is redundant: its effect already holds in the scene. Remove it \
             and continue with the rest of the plan."
        ),
        Discrepancy::Dropped { object, cell: Some(cell) } => format!(
            "{object} was dropped and now lies on table cell {cell}. Recover it: locate \
             {object} again to find it, pick {object} to regain it, then continue with the \
             original steps."
        ),
        Discrepancy::Dropped { object, cell: None } => format!(
            "{object} was dropped back onto the table. Recover it: locate {object} again to \
             find it, pick {object} to regain it, then continue with the original steps."
        ),
        Discrepancy::EmptyGripper { action, .. } => format!(
            "The gripper is empty although {action} expects to be holding an object, so an \
             earlier step must have silently failed. Fetch the missing object first, then redo \
             the placement."
        ),
        Discrepancy::Blocked { container, action } => format!(
            "{container} is closed, so {action} cannot succeed. Open {container} first, then \
             continue with the original steps."
        ),
        Discrepancy::MustClose { appliance, action } => format!(
            "{appliance} is open, so {action} cannot start it. Close {appliance} first, then \
             continue with the original steps."
        ),
        Discrepancy::InsideClosed { object, container } => format!(
            "{object} sits inside {container}, which is closed. Go to {container}, open it, \
             return to {object}, then continue with the original steps."
        ),
        Discrepancy::NotLocated { target, action } => format!(
            "{target} has not been located, so {action} cannot act on it. Locate {target} \
             first, then retry the step."
        ),
        Discrepancy::Unknown { action } => format!(
            "The cause of the failure of {action} is unclear from the scene. Keep the plan \
             unchanged and retry the step."
        ),
    };
    let mut out = cause;
    out.push_str("\nProposed plan:\n");
    out.push_str(&render_plan(steps));
    out
}
