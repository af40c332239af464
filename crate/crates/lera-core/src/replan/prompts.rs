//! Prompt rendering for the three replanning stages.
//!
//! Templates live under `templates/` and use `{{slot}}` placeholders. A
//! render fails loudly if any slot is left unfilled, so prompt regressions
//! surface as failed replans instead of silently odd text.

use crate::backend::Stage;
use crate::world::Family;

const LOOK_TEMPLATE: &str = include_str!("../../templates/look.tmpl");
const EXPLAIN_TEMPLATE: &str = include_str!("../../templates/explain.tmpl");
const REPLAN_TEMPLATE: &str = include_str!("../../templates/replan.tmpl");

const TABLETOP_SHOTS: &str = "\
Example 1.
Plan before:
place(green_bowl)
Corrected plan:
locate(green_block)
pick(green_block)
locate(green_bowl)
place(green_bowl)

Example 2.
Plan before:
pick(green_block)
locate(green_bowl)
place(green_bowl)
Corrected plan:
locate(green_bowl)
place(green_bowl)";

const HOUSEHOLD_SHOTS: &str = "\
Example 1.
Plan before:
put(bread, fridge)
close(fridge)
Corrected plan:
open(fridge)
put(bread, fridge)
close(fridge)

Example 2.
Plan before:
pick(apple)
goto(fridge)
put(apple, fridge)
Corrected plan:
goto(apple)
pick(apple)
goto(fridge)
put(apple, fridge)

Example 3.
Plan before:
open(microwave)
put(soup, microwave)
Corrected plan:
put(soup, microwave)";

pub(crate) fn system_text(stage: Stage) -> String {
    let role = match stage {
        Stage::Look => {
            "You are the robot's scene inspector. Compare the observed scene with the \
             expected outcome of the attempted action and report any discrepancy."
        }
        Stage::Explain => {
            "You are the robot's failure analyst. Work out the cause of the failure from \
             the inspection notes and propose how the plan should change."
        }
        Stage::Replan => {
            "You are the robot's planner. Produce a corrected remaining plan that satisfies \
             the instruction, using only the available actions and objects."
        }
    };
    format!("{}\n{}", stage.marker(), role)
}

pub(crate) fn few_shots(family: Family) -> &'static str {
    match family {
        Family::Tabletop => TABLETOP_SHOTS,
        Family::Household => HOUSEHOLD_SHOTS,
    }
}

pub(crate) fn look_user(
    first_plan_step: &str,
    evidence: &str,
    observation_text: &str,
) -> Result<String, String> {
    render(
        LOOK_TEMPLATE,
        &[
            ("first_plan_step", first_plan_step),
            ("evidence", evidence),
            ("observation", observation_text),
        ],
    )
}

pub(crate) fn explain_user(
    instruction: &str,
    plan: &str,
    look_output: &str,
) -> Result<String, String> {
    render(
        EXPLAIN_TEMPLATE,
        &[
            ("instruction", instruction),
            ("plan", plan),
            ("look_output", look_output),
        ],
    )
}

#[allow(clippy::too_many_arguments)]
pub(crate) fn replan_user(
    instruction: &str,
    evidence: &str,
    action_vocabulary: &str,
    few_shots: &str,
    plan: &str,
    observation_block: &str,
    explain_output: &str,
) -> Result<String, String> {
    render(
        REPLAN_TEMPLATE,
        &[
            ("instruction", instruction),
            ("evidence", evidence),
            ("action_vocabulary", action_vocabulary),
            ("few_shots", few_shots),
            ("plan", plan),
            ("observation_block", observation_block),
            ("explain_output", explain_output),
        ],
    )
}

fn render(template: &str, slots: &[(&str, &str)]) -> Result<String, String> {
    let mut out = template.to_string();
    for (name, value) in slots {
        out = out.replace(&format!("{{{{{name}}}}}"), value);
    }
    if let Some(pos) = out.find("{{") {
        let tail: String = out[pos..].chars().take(40).collect();
        return Err(format!("unfilled template slot near {tail:?}"));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::plan::Action;

    #[test]
    fn every_template_renders_without_leftover_slots() {
        look_user("pick(red_block)", "notice", "scene text").unwrap();
        explain_user("do the thing", "pick(red_block)", "notes").unwrap();
        replan_user("do", "notice", "- pick(x)", TABLETOP_SHOTS, "pick(red_block)", "", "(none)")
            .unwrap();
    }

    #[test]
    fn unfilled_slot_is_reported() {
        let err = render("hello {{name}} and {{other}}", &[("name", "x")]).unwrap_err();
        assert!(err.contains("other"), "{err}");
    }

    #[test]
    fn system_text_leads_with_the_stage_marker() {
        for stage in [Stage::Look, Stage::Explain, Stage::Replan] {
            let text = system_text(stage);
            assert_eq!(Stage::of_system_text(&text), Some(stage));
        }
    }

    #[test]
    fn few_shot_lines_use_the_plan_grammar() {
        for shots in [TABLETOP_SHOTS, HOUSEHOLD_SHOTS] {
            let mut examples = 0;
            for line in shots.lines() {
                let line = line.trim();
                if line.starts_with("Example") {
                    examples += 1;
                    continue;
                }
                if line.is_empty() || line == "Plan before:" || line == "Corrected plan:" {
                    continue;
                }
                Action::parse(line).unwrap_or_else(|e| panic!("{line}: {e}"));
            }
            assert!(examples >= 2, "each family ships at least two examples");
        }
    }
}
