//! Aggregate metrics over episode traces and report rendering.
//!
//! Three headline numbers per agent: success rate (SR), goal-condition
//! success (GCS, the mean fraction of satisfied goal conditions), and
//! replanning success rate (SRep, the mean per-episode fraction of
//! replanning runs after which execution got moving again). Episodes
//! without any replanning run carry no SRep signal and are excluded from
//! its mean; when every episode is excluded the metric is undefined and
//! rendered as a dash.

use serde::{Deserialize, Serialize};

use crate::agent::EpisodeTrace;

#[derive(Debug, Clone, Copy, PartialEq, Eq, thiserror::Error)]
pub enum MetricsError {
    #[error("no traces to aggregate")]
    Empty,
}

/// Fraction of episodes that satisfied every goal within budget.
pub fn success_rate(traces: &[EpisodeTrace]) -> Result<f64, MetricsError> {
    if traces.is_empty() {
        return Err(MetricsError::Empty);
    }
    let hits = traces.iter().filter(|t| t.success).count();
    Ok(hits as f64 / traces.len() as f64)
}

/// Mean fraction of satisfied goal conditions per episode.
pub fn goal_condition_success(traces: &[EpisodeTrace]) -> Result<f64, MetricsError> {
    if traces.is_empty() {
        return Err(MetricsError::Empty);
    }
    let sum: f64 = traces
        .iter()
        .map(|t| {
            if t.total == 0 {
                1.0
            } else {
                f64::from(t.satisfied) / f64::from(t.total)
            }
        })
        .sum();
    Ok(sum / traces.len() as f64)
}

/// Mean per-episode fraction of successful replanning runs. `None` when no
/// episode replanned at all.
pub fn replanning_success(traces: &[EpisodeTrace]) -> Option<f64> {
    let mut sum = 0.0;
    let mut counted = 0usize;
    for trace in traces {
        let total = trace.replans().count();
        if total == 0 {
            continue;
        }
        let ok = trace.replans().filter(|r| r.success == Some(true)).count();
        sum += ok as f64 / total as f64;
        counted += 1;
    }
    (counted > 0).then(|| sum / counted as f64)
}

/// One agent's aggregate line in a report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentRow {
    pub label: String,
    pub episodes: usize,
    /// Total replanning runs across all episodes.
    pub replans: usize,
    pub sr: f64,
    pub gcs: f64,
    pub srep: Option<f64>,
}

/// Aggregates one agent's traces into a report row.
pub fn aggregate(label: &str, traces: &[EpisodeTrace]) -> Result<AgentRow, MetricsError> {
    Ok(AgentRow {
        label: label.to_string(),
        episodes: traces.len(),
        replans: traces.iter().map(|t| t.replans().count()).sum(),
        sr: success_rate(traces)?,
        gcs: goal_condition_success(traces)?,
        srep: replanning_success(traces),
    })
}

/// A whole run's report: one row per agent plus provenance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuiteResult {
    pub suite_id: String,
    pub fingerprint: String,
    pub rows: Vec<AgentRow>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Csv,
    Markdown,
    Structured,
}

impl std::str::FromStr for ReportFormat {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "csv" => Ok(ReportFormat::Csv),
            "markdown" | "md" => Ok(ReportFormat::Markdown),
            "structured" | "json" => Ok(ReportFormat::Structured),
            other => Err(format!("unknown report format: {other}")),
        }
    }
}

/// Ratios are reported in percent with two decimals: 0.19 renders "19.00".
pub fn percent(value: f64) -> String {
    format!("{:.2}", value * 100.0)
}

/// Like [`percent`], with an em dash for undefined values.
pub fn percent_or_dash(value: Option<f64>) -> String {
    value.map(percent).unwrap_or_else(|| "\u{2014}".to_string())
}

pub fn emit_report(result: &SuiteResult, format: ReportFormat) -> String {
    match format {
        ReportFormat::Csv => {
            let mut out = String::from("agent,episodes,replans,sr,gcs,srep\n");
            for row in &result.rows {
                out.push_str(&format!(
                    "{},{},{},{},{},{}\n",
                    row.label,
                    row.episodes,
                    row.replans,
                    percent(row.sr),
                    percent(row.gcs),
                    percent_or_dash(row.srep),
                ));
            }
            out.push_str(&format!("# fingerprint: {}\n", result.fingerprint));
            out
        }
        ReportFormat::Markdown => {
            let mut out = format!("# Suite {}\n\n", result.suite_id);
            out.push_str("| agent | episodes | replans | SR | GCS | SRep |\n");
            out.push_str("|---|---:|---:|---:|---:|---:|\n");
            for row in &result.rows {
                out.push_str(&format!(
                    "| {} | {} | {} | {} | {} | {} |\n",
                    row.label,
                    row.episodes,
                    row.replans,
                    percent(row.sr),
                    percent(row.gcs),
                    percent_or_dash(row.srep),
                ));
            }
            out.push_str(&format!("\nfingerprint: {}\n", result.fingerprint));
            out
        }
        ReportFormat::Structured => {
            let mut text =
                serde_json::to_string_pretty(result).expect("report serialization cannot fail");
            text.push('\n');
            text
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::agent::{ReplanRecord, TraceEvent};
    use crate::replan::ReplanVariant;

    fn replan_event(success: Option<bool>) -> TraceEvent {
        TraceEvent::Replan(ReplanRecord {
            variant: ReplanVariant::LERa,
            trigger_evidence: String::new(),
            request_plan: Vec::new(),
            look: None,
            explain: None,
            raw_replan: None,
            adopted_plan: None,
            parsed_ok: success.is_some(),
            calls_made: 3,
            success,
            prompts: Vec::new(),
            failure_reason: None,
        })
    }

    fn trace(success: bool, satisfied: u32, total: u32, replans: &[bool]) -> EpisodeTrace {
        EpisodeTrace {
            task_id: "t".to_string(),
            episode_seed: 0,
            events: replans.iter().map(|&ok| replan_event(Some(ok))).collect(),
            satisfied,
            total,
            success,
            budget_exhausted: false,
        }
    }

    #[test]
    fn empty_input_is_an_error() {
        assert_eq!(success_rate(&[]), Err(MetricsError::Empty));
        assert_eq!(goal_condition_success(&[]), Err(MetricsError::Empty));
        assert_eq!(replanning_success(&[]), None);
    }

    #[test]
    fn known_values_aggregate_exactly() {
        let traces = vec![
            trace(true, 3, 3, &[true, false]),
            trace(false, 1, 3, &[]),
            trace(false, 0, 3, &[false]),
            trace(true, 3, 3, &[true]),
        ];
        assert_eq!(success_rate(&traces).unwrap(), 0.5);
        let gcs = goal_condition_success(&traces).unwrap();
        assert!((gcs - (1.0 + 1.0 / 3.0 + 0.0 + 1.0) / 4.0).abs() < 1e-12);
        // Episodes with replans: 0.5, 0.0, 1.0; the zero-replan one is out.
        let srep = replanning_success(&traces).unwrap();
        assert!((srep - 0.5).abs() < 1e-12);
    }

    #[test]
    fn srep_is_undefined_without_any_replans() {
        let traces = vec![trace(true, 1, 1, &[]), trace(false, 0, 1, &[])];
        assert_eq!(replanning_success(&traces), None);
        let row = aggregate("oracle", &traces).unwrap();
        assert_eq!(row.srep, None);
        assert_eq!(row.replans, 0);
    }

    #[test]
    fn unjudged_replans_count_as_failures() {
        let traces = vec![EpisodeTrace {
            events: vec![replan_event(None), replan_event(Some(true))],
            ..trace(true, 1, 1, &[])
        }];
        let srep = replanning_success(&traces).unwrap();
        assert!((srep - 0.5).abs() < 1e-12);
    }

    #[test]
    fn ratios_render_as_percent_with_two_decimals() {
        assert_eq!(percent(0.19), "19.00");
        assert_eq!(percent(1.0), "100.00");
        assert_eq!(percent(0.0), "0.00");
        assert_eq!(percent(0.12345), "12.35");
        assert_eq!(percent_or_dash(None), "\u{2014}");
    }

    #[test]
    fn reports_carry_rows_and_fingerprint_in_all_formats() {
        let traces = vec![trace(true, 2, 2, &[true]), trace(false, 1, 2, &[false])];
        let result = SuiteResult {
            suite_id: "demo".to_string(),
            fingerprint: "sha256:abcd".to_string(),
            rows: vec![aggregate("lera", &traces).unwrap()],
        };
        let csv = emit_report(&result, ReportFormat::Csv);
        assert!(csv.starts_with("agent,episodes,replans,sr,gcs,srep\n"));
        assert!(csv.contains("lera,2,2,50.00,75.00,50.00\n"));
        assert!(csv.contains("# fingerprint: sha256:abcd"));

        let md = emit_report(&result, ReportFormat::Markdown);
        assert!(md.contains("| lera | 2 | 2 | 50.00 | 75.00 | 50.00 |"));
        assert!(md.contains("fingerprint: sha256:abcd"));

        let json = emit_report(&result, ReportFormat::Structured);
        let parsed: SuiteResult = serde_json::from_str(&json).unwrap();
        assert_eq!(parsed, result);
    }

    #[test]
    fn aggregation_is_permutation_invariant() {
        let mut traces: Vec<EpisodeTrace> = (0..40)
            .map(|i| {
                trace(
                    i % 3 == 0,
                    i % 4,
                    3.max(i % 4),
                    &[i % 2 == 0, i % 5 == 0][..(i % 3) as usize],
                )
            })
            .collect();
        let sr = success_rate(&traces).unwrap();
        let gcs = goal_condition_success(&traces).unwrap();
        let srep = replanning_success(&traces);
        traces.reverse();
        traces.rotate_left(7);
        assert!((success_rate(&traces).unwrap() - sr).abs() < 1e-12);
        assert!((goal_condition_success(&traces).unwrap() - gcs).abs() < 1e-12);
        match (replanning_success(&traces), srep) {
            (Some(a), Some(b)) => assert!((a - b).abs() < 1e-12),
            (a, b) => assert_eq!(a, b),
        }
    }
}
