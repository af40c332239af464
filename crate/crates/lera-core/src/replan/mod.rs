//! The look, explain, replan pipeline and its ablations.
//!
//! A replanning run is triggered by a failed subtask check. Depending on
//! the variant it issues up to three backend calls: an optional scene
//! inspection (look), an optional free-form causal analysis (explain), and
//! a final format-constrained rewrite of the remaining plan (replan). One
//! retry is shared across the run: either a repeated call after a
//! transport error, or a repeated replan after an unparseable reply.

mod prompts;

use serde::{Deserialize, Serialize};

use crate::backend::{Attachment, BackendHandle, BackendRequest, DecodeParams, Stage};
use crate::plan::{Plan, Vocabulary};
use crate::world::Observation;

/// Which stages run before the plan rewrite.
///
/// `LERa` is the full pipeline; `LRa`, `ERa` and `Ra` drop stages; a
/// `OneShotBaseline` makes a single call that sees the observation
/// directly but gets no structured analysis.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ReplanVariant {
    LERa,
    LRa,
    ERa,
    Ra,
    OneShotBaseline,
}

impl ReplanVariant {
    pub const ALL: [ReplanVariant; 5] = [
        ReplanVariant::LERa,
        ReplanVariant::LRa,
        ReplanVariant::ERa,
        ReplanVariant::Ra,
        ReplanVariant::OneShotBaseline,
    ];

    pub fn label(self) -> &'static str {
        match self {
            ReplanVariant::LERa => "LERa",
            ReplanVariant::LRa => "LRa",
            ReplanVariant::ERa => "ERa",
            ReplanVariant::Ra => "Ra",
            ReplanVariant::OneShotBaseline => "OneShotBaseline",
        }
    }

    /// Backend calls a run makes when nothing is retried.
    pub fn planned_calls(self) -> u32 {
        match self {
            ReplanVariant::LERa => 3,
            ReplanVariant::LRa | ReplanVariant::ERa => 2,
            ReplanVariant::Ra | ReplanVariant::OneShotBaseline => 1,
        }
    }

    fn uses_look(self) -> bool {
        matches!(self, ReplanVariant::LERa | ReplanVariant::LRa)
    }

    fn uses_explain(self) -> bool {
        matches!(self, ReplanVariant::LERa | ReplanVariant::ERa)
    }

    fn shows_observation_at_replan(self) -> bool {
        matches!(self, ReplanVariant::OneShotBaseline)
    }
}

impl std::fmt::Display for ReplanVariant {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.label())
    }
}

impl std::str::FromStr for ReplanVariant {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        ReplanVariant::ALL
            .into_iter()
            .find(|v| v.label().eq_ignore_ascii_case(s))
            .ok_or_else(|| format!("unknown replanner variant: {s}"))
    }
}

/// Everything a replanning run is allowed to see.
#[derive(Debug, Clone)]
pub struct ReplanRequest {
    pub instruction: String,
    pub observation: Observation,
    pub evidence: String,
    pub remaining_plan: Plan,
    pub vocabulary: Vocabulary,
}

/// One prompt as sent, kept for traces and audits.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptRecord {
    pub stage: Stage,
    pub system: String,
    pub user: String,
}

/// The outcome of one replanning run.
#[derive(Debug, Clone)]
pub struct ReplanResult {
    pub look: Option<String>,
    pub explain: Option<String>,
    pub raw_replan: Option<String>,
    /// The adopted plan; `None` when parsing or validation failed twice.
    pub plan: Option<Plan>,
    pub parsed_ok: bool,
    pub calls_made: u32,
    pub prompts: Vec<PromptRecord>,
    pub failure_reason: Option<String>,
}

impl ReplanResult {
    fn empty() -> ReplanResult {
        ReplanResult {
            look: None,
            explain: None,
            raw_replan: None,
            plan: None,
            parsed_ok: false,
            calls_made: 0,
            prompts: Vec::new(),
            failure_reason: None,
        }
    }
}

struct Runner<'a> {
    backend: &'a BackendHandle,
    result: ReplanResult,
    retry_left: bool,
}

impl Runner<'_> {
    /// Issues one backend call, spending the shared retry on a transport
    /// error. Returns the reply text or a failure reason.
    fn call(
        &mut self,
        stage: Stage,
        user: String,
        attachment: Option<Attachment>,
    ) -> Result<String, String> {
        let system = prompts::system_text(stage);
        self.result.prompts.push(PromptRecord {
            stage,
            system: system.clone(),
            user: user.clone(),
        });
        let request = BackendRequest {
            system_text: system,
            user_text: user,
            attachment,
            decode: DecodeParams::default(),
        };
        self.result.calls_made += 1;
        match self.backend.complete(&request) {
            Ok(text) => Ok(text),
            Err(e) if e.is_transport() && self.retry_left => {
                self.retry_left = false;
                self.result.calls_made += 1;
                self.backend.complete(&request).map_err(|e2| e2.to_string())
            }
            Err(e) => Err(e.to_string()),
        }
    }

    fn fail(mut self, reason: String) -> ReplanResult {
        self.result.failure_reason = Some(reason);
        self.result
    }
}

fn adopt(raw: &str, vocabulary: &Vocabulary) -> Result<Plan, String> {
    let plan = Plan::parse(raw).map_err(|e| e.to_string())?;
    plan.validate(vocabulary).map_err(|e| e.to_string())?;
    Ok(plan)
}

/// Runs one replanning pipeline against the backend and returns whatever it
/// produced. Never panics on backend trouble: a run that cannot finish
/// comes back with `parsed_ok == false` and a reason.
pub fn run_variant(
    variant: ReplanVariant,
    request: &ReplanRequest,
    backend: &BackendHandle,
) -> ReplanResult {
    let mut runner = Runner {
        backend,
        result: ReplanResult::empty(),
        retry_left: true,
    };

    let observation_attachment = if backend.wants_snapshot() {
        Attachment::Snapshot(request.observation.snapshot.clone())
    } else {
        Attachment::Raster(request.observation.raster.clone())
    };
    let plan_text = request.remaining_plan.serialize();
    let plan_slot = plan_text.trim_end().to_string();
    let failed_step = request
        .remaining_plan
        .current()
        .map(|a| a.to_string())
        .unwrap_or_else(|| crate::plan::DONE_MARKER.to_string());

    let look = if variant.uses_look() {
        let user = match prompts::look_user(
            &failed_step,
            &request.evidence,
            request.observation.text.trim_end(),
        ) {
            Ok(u) => u,
            Err(e) => return runner.fail(e),
        };
        match runner.call(Stage::Look, user, Some(observation_attachment.clone())) {
            Ok(text) => Some(text),
            Err(reason) => return runner.fail(reason),
        }
    } else {
        None
    };

    let explain = if variant.uses_explain() {
        let notes = look.clone().unwrap_or_else(|| request.evidence.clone());
        let user = match prompts::explain_user(&request.instruction, &plan_slot, &notes) {
            Ok(u) => u,
            Err(e) => return runner.fail(e),
        };
        match runner.call(Stage::Explain, user, None) {
            Ok(text) => Some(text),
            Err(reason) => return runner.fail(reason),
        }
    } else {
        None
    };

    runner.result.look = look.clone();
    runner.result.explain = explain.clone();

    let analysis = explain
        .or(look)
        .unwrap_or_else(|| "(none)".to_string());
    let observation_block = if variant.shows_observation_at_replan() {
        format!("Observation:\n{}\n\n", request.observation.text.trim_end())
    } else {
        String::new()
    };
    let vocabulary_block = request.vocabulary.prompt_block();
    let user = match prompts::replan_user(
        &request.instruction,
        &request.evidence,
        vocabulary_block.trim_end(),
        prompts::few_shots(request.vocabulary.family),
        &plan_slot,
        &observation_block,
        &analysis,
    ) {
        Ok(u) => u,
        Err(e) => return runner.fail(e),
    };
    let replan_attachment = variant
        .shows_observation_at_replan()
        .then(|| observation_attachment.clone());

    let raw = match runner.call(Stage::Replan, user.clone(), replan_attachment.clone()) {
        Ok(text) => text,
        Err(reason) => return runner.fail(reason),
    };
    runner.result.raw_replan = Some(raw.clone());

    match adopt(&raw, &request.vocabulary) {
        Ok(plan) => {
            runner.result.plan = Some(plan);
            runner.result.parsed_ok = true;
        }
        Err(why) if runner.retry_left => {
            runner.retry_left = false;
            let user_retry = format!(
                "{user}\nThe previous reply was rejected: {why}. Reply with actions only, \
                 one per line."
            );
            match runner.call(Stage::Replan, user_retry, replan_attachment) {
                Ok(raw_retry) => {
                    runner.result.raw_replan = Some(raw_retry.clone());
                    match adopt(&raw_retry, &request.vocabulary) {
                        Ok(plan) => {
                            runner.result.plan = Some(plan);
                            runner.result.parsed_ok = true;
                        }
                        Err(why_retry) => {
                            runner.result.failure_reason = Some(why_retry);
                        }
                    }
                }
                Err(reason) => return runner.fail(reason),
            }
        }
        Err(why) => {
            runner.result.failure_reason = Some(why);
        }
    }
    runner.result
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backend::FaultKind;
    use crate::plan::{Action, Verb};
    use crate::world::{Color, Family, ObjectId, ObjectKind, Placement, Scene};

    fn oid(s: &str) -> ObjectId {
        ObjectId::new(s).unwrap()
    }

    fn act(s: &str) -> Action {
        Action::parse(s).unwrap()
    }

    /// Pizza held, microwave closed and located: the classic blocked put.
    fn blocked_put_request() -> ReplanRequest {
        let mut scene = Scene::new(Family::Household, 16);
        scene
            .add_object(oid("pizza"), ObjectKind::Item, Color::None, Placement::Held)
            .unwrap();
        scene
            .add_object(
                oid("microwave"),
                ObjectKind::Appliance,
                Color::None,
                Placement::OnTable(4),
            )
            .unwrap();
        scene.located = Some(oid("microwave"));
        let remaining = Plan::from_actions(vec![
            act("put(pizza, microwave)"),
            act("close(microwave)"),
            act("toggle_on(microwave)"),
        ]);
        ReplanRequest {
            instruction: "Heat the pizza in the microwave".to_string(),
            observation: Observation::capture(&scene),
            evidence: "put(pizza, microwave) could not be executed: still holding pizza"
                .to_string(),
            remaining_plan: remaining,
            vocabulary: scene.vocabulary(),
        }
    }

    /// Red block dropped on cell 9 while carrying it to the red bowl.
    fn dropped_place_request() -> ReplanRequest {
        let mut scene = crate::tasks::tabletop_scene();
        scene.objects.get_mut(&oid("red_block")).unwrap().at = Placement::OnTable(9);
        scene.located = Some(oid("red_bowl"));
        ReplanRequest {
            instruction: "Place red block in red bowl".to_string(),
            observation: Observation::capture(&scene),
            evidence: "place(red_bowl) completed but red_block is not in red_bowl".to_string(),
            remaining_plan: Plan::from_actions(vec![act("place(red_bowl)")]),
            vocabulary: scene.vocabulary(),
        }
    }

    #[test]
    fn full_pipeline_fixes_a_blocked_put() {
        let backend = BackendHandle::scripted();
        let request = blocked_put_request();
        let result = run_variant(ReplanVariant::LERa, &request, &backend);
        assert!(result.parsed_ok);
        assert_eq!(result.calls_made, 3);
        assert!(result.look.as_ref().unwrap().contains("closed"));
        assert!(result.explain.as_ref().unwrap().contains("Proposed plan:"));
        let plan = result.plan.unwrap();
        assert_eq!(plan.actions()[0], act("open(microwave)"));
        assert_eq!(plan.actions().len(), 4);
        let stages: Vec<Stage> = result.prompts.iter().map(|p| p.stage).collect();
        assert_eq!(stages, vec![Stage::Look, Stage::Explain, Stage::Replan]);
    }

    #[test]
    fn look_only_pipeline_reaches_the_same_fix() {
        let backend = BackendHandle::scripted();
        let request = blocked_put_request();
        let result = run_variant(ReplanVariant::LRa, &request, &backend);
        assert!(result.parsed_ok);
        assert_eq!(result.calls_made, 2);
        assert!(result.explain.is_none());
        assert_eq!(result.plan.unwrap().actions()[0], act("open(microwave)"));
    }

    #[test]
    fn evidence_only_pipeline_cannot_see_the_closed_door() {
        let backend = BackendHandle::scripted();
        let request = blocked_put_request();
        let result = run_variant(ReplanVariant::ERa, &request, &backend);
        assert!(result.parsed_ok);
        assert_eq!(result.calls_made, 2);
        assert_eq!(
            result.plan.unwrap().actions(),
            request.remaining_plan.actions(),
            "without an observation the plan comes back unchanged"
        );
    }

    #[test]
    fn evidence_only_pipeline_still_recovers_drops() {
        let backend = BackendHandle::scripted();
        let request = dropped_place_request();
        let result = run_variant(ReplanVariant::ERa, &request, &backend);
        assert!(result.parsed_ok);
        let plan = result.plan.unwrap();
        assert_eq!(
            plan.actions()[..2],
            [act("locate(red_block)"), act("pick(red_block)")]
        );
    }

    #[test]
    fn replan_only_pipeline_returns_the_plan_unchanged() {
        let backend = BackendHandle::scripted();
        let request = blocked_put_request();
        let result = run_variant(ReplanVariant::Ra, &request, &backend);
        assert!(result.parsed_ok);
        assert_eq!(result.calls_made, 1);
        assert_eq!(result.plan.unwrap().actions(), request.remaining_plan.actions());
    }

    #[test]
    fn one_shot_baseline_sees_the_observation_and_fixes_the_plan() {
        let backend = BackendHandle::scripted();
        let request = blocked_put_request();
        let result = run_variant(ReplanVariant::OneShotBaseline, &request, &backend);
        assert!(result.parsed_ok);
        assert_eq!(result.calls_made, 1);
        assert!(result.prompts[0].user.contains("Observation:"));
        assert_eq!(result.plan.unwrap().actions()[0], act("open(microwave)"));
    }

    #[test]
    fn information_confinement_holds_per_variant() {
        let backend = BackendHandle::scripted();
        let request = blocked_put_request();
        let scene_line = "microwave (appliance)";

        let era = run_variant(ReplanVariant::ERa, &request, &backend);
        for prompt in &era.prompts {
            assert!(
                !prompt.user.contains(scene_line),
                "ERa prompts must not describe the scene"
            );
        }

        let ra = run_variant(ReplanVariant::Ra, &request, &backend);
        assert_eq!(ra.prompts.len(), 1);
        assert!(!ra.prompts[0].user.contains(scene_line));
        assert!(ra.prompts[0].user.contains("Analysis:\n(none)"));
    }

    #[test]
    fn planned_calls_match_actual_calls_without_retries() {
        let request = dropped_place_request();
        for variant in ReplanVariant::ALL {
            let backend = BackendHandle::scripted();
            let result = run_variant(variant, &request, &backend);
            assert!(result.parsed_ok, "{variant}");
            assert_eq!(result.calls_made, variant.planned_calls(), "{variant}");
            assert_eq!(backend.call_count(), variant.planned_calls(), "{variant}");
        }
    }

    #[test]
    fn malformed_reply_is_retried_once_then_reported() {
        let backend =
            BackendHandle::scripted_faulty(vec![FaultKind::MalformedPlan, FaultKind::MalformedPlan]);
        let request = blocked_put_request();
        let result = run_variant(ReplanVariant::Ra, &request, &backend);
        assert!(!result.parsed_ok);
        assert!(result.plan.is_none());
        assert_eq!(result.calls_made, 2);
        assert!(result.failure_reason.is_some());
        assert_eq!(result.prompts.len(), 2);
        assert!(result.prompts[1].user.contains("The previous reply was rejected"));
    }

    #[test]
    fn malformed_then_clean_reply_succeeds_on_the_retry() {
        let backend = BackendHandle::scripted_faulty(vec![FaultKind::MalformedPlan]);
        let request = blocked_put_request();
        let result = run_variant(ReplanVariant::Ra, &request, &backend);
        assert!(result.parsed_ok);
        assert_eq!(result.calls_made, 2);
    }

    #[test]
    fn transport_error_spends_the_shared_retry() {
        let backend = BackendHandle::scripted_faulty(vec![FaultKind::TransportError]);
        let request = blocked_put_request();
        let result = run_variant(ReplanVariant::Ra, &request, &backend);
        assert!(result.parsed_ok, "the retry lands on a healthy backend");
        assert_eq!(result.calls_made, 2);
    }

    #[test]
    fn transport_error_after_spent_retry_fails_the_run() {
        let backend = BackendHandle::scripted_faulty(vec![
            FaultKind::TransportError,
            FaultKind::TransportError,
        ]);
        let request = blocked_put_request();
        let result = run_variant(ReplanVariant::Ra, &request, &backend);
        assert!(!result.parsed_ok);
        assert_eq!(result.calls_made, 2);
        assert!(result.failure_reason.is_some());
    }

    #[test]
    fn adopted_plans_are_validated_against_the_vocabulary() {
        let backend = BackendHandle::scripted();
        let mut request = blocked_put_request();
        request.remaining_plan =
            Plan::from_actions(vec![Action::unary(Verb::Goto, oid("zebra"))]);
        let result = run_variant(ReplanVariant::Ra, &request, &backend);
        assert!(!result.parsed_ok, "a plan naming unknown objects is rejected");
        assert!(result.failure_reason.unwrap().contains("zebra"));
    }
}
