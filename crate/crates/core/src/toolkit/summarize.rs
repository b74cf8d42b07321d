use std::collections::BTreeMap;
use std::fmt::Write;

use serde::{Deserialize, Serialize};

use super::ToolError;
use crate::llm::LlmBackend;
use crate::request::{format_area, yes_no, AnswerGroup, RequestType, PERCEPTION_ACK};

/// Compact, serializable view of one tool output. Scalars are kept
/// verbatim; rasters and detection lists are reduced to their shape.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum OutputSummary {
    Image { width: u32, height: u32 },
    Detections { total: usize, per_category: BTreeMap<String, usize> },
    Masks { width: u32, height: u32, pixels: BTreeMap<String, u64> },
    Count { value: u64 },
    Area { square_meters: f64 },
    Path { reachable: bool, length_m: Option<f64>, waypoints: usize },
    Text { value: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActionRecord {
    pub tool: String,
    /// Inputs as resolved: resource ids are rendered `id (kind)`, literals verbatim.
    pub inputs: Vec<String>,
    pub outputs: Vec<(String, OutputSummary)>,
}

pub enum SummarizerMode<'a> {
    /// Deterministic rendering of the last relevant tool result.
    Template,
    Llm { backend: &'a dyn LlmBackend, temperature: f64 },
}

pub const SUMMARY_TASK_DEFINITION: &str = "### Task Definition\n\
You are the summarizing agent of a disaster-scene interpretation system. Using the results of the \
actions below, give a short, direct final answer to the user request. Reply with the answer only.";

pub fn build_summary_prompt(request_text: &str, history: &[ActionRecord]) -> String {
    let mut p = String::from(SUMMARY_TASK_DEFINITION);
    p.push_str("\n\n### Action History\n");
    for (i, rec) in history.iter().enumerate() {
        let outputs: Vec<String> = rec
            .outputs
            .iter()
            .map(|(id, s)| format!("{id} = {}", serde_json::to_string(s).expect("summary serialize")))
            .collect();
        let _ = writeln!(p, "{}. {}({}) -> {}", i + 1, rec.tool, rec.inputs.join(", "), outputs.join("; "));
    }
    p.push_str("\n### User Request\n");
    p.push_str(request_text);
    p
}

fn last<'h, T>(history: &'h [ActionRecord], pick: impl Fn(&'h OutputSummary) -> Option<T>) -> Option<T> {
    history.iter().rev().flat_map(|r| r.outputs.iter().rev()).find_map(|(_, s)| pick(s))
}

fn render_path(reachable: bool, length_m: Option<f64>) -> String {
    match (reachable, length_m) {
        (true, Some(len)) => format!("yes; route length {len:.2} meters"),
        (r, _) => yes_no(r).to_string(),
    }
}

fn template(rtype: Option<RequestType>, history: &[ActionRecord]) -> Result<String, ToolError> {
    let area = || last(history, |s| if let OutputSummary::Area { square_meters } = s { Some(*square_meters) } else { None });
    let count = || last(history, |s| if let OutputSummary::Count { value } = s { Some(*value) } else { None });
    let path = || {
        last(history, |s| {
            if let OutputSummary::Path { reachable, length_m, .. } = s {
                Some((*reachable, *length_m))
            } else {
                None
            }
        })
    };
    let group = match rtype {
        Some(t) => t.group(),
        // Untyped request: answer from whatever the last recognition tool produced.
        None => match last(history, |s| match s {
            OutputSummary::Count { .. } => Some(AnswerGroup::Counting),
            OutputSummary::Area { .. } => Some(AnswerGroup::Area),
            OutputSummary::Path { .. } => Some(AnswerGroup::Path),
            _ => None,
        }) {
            Some(g) => g,
            None => AnswerGroup::Perception,
        },
    };
    match group {
        AnswerGroup::Perception => Ok(PERCEPTION_ACK.to_string()),
        AnswerGroup::Existence => match (area(), count()) {
            (Some(a), _) => Ok(yes_no(a > 0.0).to_string()),
            (None, Some(c)) => Ok(yes_no(c > 0).to_string()),
            (None, None) => Err(ToolError::MissingEvidence("area or count")),
        },
        AnswerGroup::Counting => count().map(|c| c.to_string()).ok_or(ToolError::MissingEvidence("count")),
        AnswerGroup::Area => area().map(format_area).ok_or(ToolError::MissingEvidence("area")),
        AnswerGroup::Path => path().map(|(r, l)| render_path(r, l)).ok_or(ToolError::MissingEvidence("path")),
    }
}

/// Final answer from the action history. Template mode renders
/// deterministically; LLM mode returns the model's completion verbatim.
pub fn summarize(
    request_text: &str,
    rtype: Option<RequestType>,
    history: &[ActionRecord],
    mode: &SummarizerMode<'_>,
) -> Result<String, ToolError> {
    match mode {
        SummarizerMode::Template => template(rtype, history),
        SummarizerMode::Llm { backend, temperature } => {
            Ok(backend.complete(&build_summary_prompt(request_text, history), *temperature)?)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::llm::{NullBackend, ScriptedBackend};

    fn rec(tool: &str, out: OutputSummary) -> ActionRecord {
        ActionRecord { tool: tool.into(), inputs: vec![], outputs: vec![("o".into(), out)] }
    }

    #[test]
    fn template_contract() {
        let t = |rtype, out| summarize("q", Some(rtype), &[rec("x", out)], &SummarizerMode::Template).unwrap();
        assert_eq!(t(RequestType::ObjCount, OutputSummary::Count { value: 3 }), "3");
        assert_eq!(t(RequestType::ObjExistence, OutputSummary::Area { square_meters: 0.0 }), "no");
        assert_eq!(t(RequestType::DmgExistence, OutputSummary::Area { square_meters: 0.09 }), "yes");
        assert_eq!(t(RequestType::ObjArea, OutputSummary::Area { square_meters: 25.0 }), "25.00 square meters");
        assert_eq!(
            t(RequestType::RescuePath, OutputSummary::Path { reachable: true, length_m: Some(12.5), waypoints: 9 }),
            "yes; route length 12.50 meters"
        );
        assert_eq!(
            t(RequestType::RescuePath, OutputSummary::Path { reachable: false, length_m: None, waypoints: 0 }),
            "no"
        );
    }

    #[test]
    fn missing_evidence() {
        let r = summarize("q", Some(RequestType::ObjCount), &[], &SummarizerMode::Template);
        assert!(matches!(r, Err(ToolError::MissingEvidence(_))));
    }

    #[test]
    fn untyped_infers_from_last_result() {
        let h = [rec("compute_area", OutputSummary::Area { square_meters: 1.5 })];
        assert_eq!(summarize("q", None, &h, &SummarizerMode::Template).unwrap(), "1.50 square meters");
    }

    #[test]
    fn llm_prompt_and_verbatim_reply() {
        let h = [rec("count_objects", OutputSummary::Count { value: 2 })];
        let prompt = build_summary_prompt("How many pools?", &h);
        assert!(prompt.find("### Task Definition").unwrap() < prompt.find("### Action History").unwrap());
        assert!(prompt.contains(r#"o = {"kind":"count","value":2}"#));
        assert!(prompt.ends_with("### User Request\nHow many pools?"));
        let b = ScriptedBackend::new().with_prompt(&prompt, "There are two pools.");
        let mode = SummarizerMode::Llm { backend: &b, temperature: 0.7 };
        assert_eq!(summarize("How many pools?", None, &h, &mode).unwrap(), "There are two pools.");
        let mode = SummarizerMode::Llm { backend: &NullBackend, temperature: 0.7 };
        assert!(matches!(summarize("x", None, &h, &mode), Err(ToolError::Backend(_))));
    }
}
