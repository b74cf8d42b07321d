//! Checks a raw action array against the registry and repairs what it can.
//!
//! Misspelled tool ids and resource references within the distance
//! threshold are rewritten to their closest match; anything farther is a
//! hallucination and the action is dropped.

use std::collections::BTreeMap;

use serde::Serialize;
use serde_json::Value;

use super::plan::{Action, Plan};
use super::registry::{closest_match, Registry, ValueKind};

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum RepairEntry {
    ToolTypo { index: usize, from: String, to: String, distance: usize },
    Hallucination { index: usize, tool: String, distance: usize },
    InputRepaired { index: usize, from: String, to: String, distance: usize },
    UnresolvedInput { index: usize, token: String },
    ArityMismatch { index: usize, tool: String, expected: usize, found: usize },
    OutputGenerated { index: usize, id: String },
    DuplicateOutput { index: usize, id: String },
    Malformed { index: usize, reason: String },
}

impl RepairEntry {
    pub fn drops_action(&self) -> bool {
        !matches!(
            self,
            RepairEntry::ToolTypo { .. } | RepairEntry::InputRepaired { .. } | RepairEntry::OutputGenerated { .. }
        )
    }
}

pub type RepairLog = Vec<RepairEntry>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum RepairError {
    #[error("plan is not a JSON array")]
    NotAnArray,
    #[error("no action survived repair")]
    EmptyPlanAfterRepair { log: RepairLog },
}

/// Validates and repairs `raw`. `initial_resources` are ids holding images
/// before the first action runs; `threshold` is the exclusive edit-distance
/// bound below which an identifier counts as a typo.
pub fn validate_and_repair_plan(
    raw: &Value,
    registry: &Registry,
    initial_resources: &[&str],
    threshold: usize,
) -> Result<(Plan, RepairLog), RepairError> {
    let items = raw.as_array().ok_or(RepairError::NotAnArray)?;
    let mut defined: BTreeMap<String, ValueKind> = BTreeMap::new();
    // Definition order, for deterministic tie-breaks during input repair.
    let mut order: Vec<String> = Vec::new();
    for id in initial_resources {
        if defined.insert(id.to_string(), ValueKind::Image).is_none() {
            order.push(id.to_string());
        }
    }

    let mut log = RepairLog::new();
    let mut actions = Vec::new();
    for (index, item) in items.iter().enumerate() {
        let parsed = match parse_action(item) {
            Ok(a) => a,
            Err(reason) => {
                log.push(RepairEntry::Malformed { index, reason });
                continue;
            }
        };

        let lowered = parsed.tool.trim().to_lowercase();
        let (spec, distance) = registry.closest(&lowered);
        if distance >= threshold {
            log.push(RepairEntry::Hallucination { index, tool: parsed.tool, distance });
            continue;
        }
        let mut entries = Vec::new();
        if spec.tool_id != parsed.tool {
            entries.push(RepairEntry::ToolTypo {
                index,
                from: parsed.tool.clone(),
                to: spec.tool_id.clone(),
                distance,
            });
        }

        if !spec.accepts_arity(parsed.inputs.len()) {
            log.extend(entries);
            log.push(RepairEntry::ArityMismatch {
                index,
                tool: spec.tool_id.clone(),
                expected: spec.inputs.len(),
                found: parsed.inputs.len(),
            });
            continue;
        }

        let mut inputs = Vec::with_capacity(parsed.inputs.len());
        let mut unresolved = None;
        for (pos, token) in parsed.inputs.iter().enumerate() {
            let kind = spec.input_kind(pos).expect("arity checked");
            if !kind.is_resource() || defined.contains_key(token) {
                inputs.push(token.clone());
                continue;
            }
            let candidates = order.iter().filter(|id| kind.accepts(defined[*id]));
            match closest_match(token, candidates, |s| s.as_str()) {
                Some((hit, d)) if d < threshold => {
                    entries.push(RepairEntry::InputRepaired {
                        index,
                        from: token.clone(),
                        to: hit.clone(),
                        distance: d,
                    });
                    inputs.push(hit.clone());
                }
                _ => {
                    unresolved = Some(token.clone());
                    break;
                }
            }
        }
        if let Some(token) = unresolved {
            log.extend(entries);
            log.push(RepairEntry::UnresolvedInput { index, token });
            continue;
        }

        let mut outputs = parsed.outputs;
        if outputs.is_empty() {
            let id = fresh_id(&format!("{}_{}", spec.tool_id, index), &defined);
            entries.push(RepairEntry::OutputGenerated { index, id: id.clone() });
            outputs = vec![id];
        }
        if outputs.len() != spec.outputs.len() {
            log.extend(entries);
            log.push(RepairEntry::ArityMismatch {
                index,
                tool: spec.tool_id.clone(),
                expected: spec.outputs.len(),
                found: outputs.len(),
            });
            continue;
        }
        if let Some(dup) = duplicate_output(&outputs, &defined) {
            log.extend(entries);
            log.push(RepairEntry::DuplicateOutput { index, id: dup });
            continue;
        }

        for (id, kind) in outputs.iter().zip(&spec.outputs) {
            defined.insert(id.clone(), *kind);
            order.push(id.clone());
        }
        log.extend(entries);
        actions.push(Action { tool: spec.tool_id.clone(), inputs, outputs });
    }

    if actions.is_empty() {
        return Err(RepairError::EmptyPlanAfterRepair { log });
    }
    Ok((Plan::new(actions), log))
}

struct RawAction {
    tool: String,
    inputs: Vec<String>,
    outputs: Vec<String>,
}

fn parse_action(item: &Value) -> Result<RawAction, String> {
    let obj = item.as_object().ok_or("action is not an object")?;
    let tool = obj.get("tool").and_then(Value::as_str).ok_or("missing string field `tool`")?;
    let strings = |field: &str| -> Result<Vec<String>, String> {
        match obj.get(field) {
            None | Some(Value::Null) => Ok(Vec::new()),
            Some(Value::Array(xs)) => xs
                .iter()
                .map(|x| match x {
                    Value::String(s) if !s.is_empty() => Ok(s.clone()),
                    Value::Number(n) => Ok(n.to_string()),
                    _ => Err(format!("`{field}` must hold non-empty strings")),
                })
                .collect(),
            Some(Value::String(s)) if !s.is_empty() => Ok(vec![s.clone()]),
            Some(_) => Err(format!("`{field}` must be an array of strings")),
        }
    };
    Ok(RawAction { tool: tool.to_string(), inputs: strings("inputs")?, outputs: strings("outputs")? })
}

fn fresh_id(base: &str, defined: &BTreeMap<String, ValueKind>) -> String {
    if !defined.contains_key(base) {
        return base.to_string();
    }
    (2..).map(|n| format!("{base}_{n}")).find(|id| !defined.contains_key(id)).expect("unbounded")
}

fn duplicate_output(outputs: &[String], defined: &BTreeMap<String, ValueKind>) -> Option<String> {
    for (i, id) in outputs.iter().enumerate() {
        if defined.contains_key(id) || outputs[..i].contains(id) {
            return Some(id.clone());
        }
    }
    None
}

/// True when every resource input is produced by an earlier action or is
/// initial, and no output id is reused.
pub fn is_topologically_consistent(plan: &Plan, registry: &Registry, initial_resources: &[&str]) -> bool {
    let mut defined: Vec<&str> = initial_resources.to_vec();
    for action in &plan.actions {
        let Some(spec) = registry.get(&action.tool) else { return false };
        if !spec.accepts_arity(action.inputs.len()) {
            return false;
        }
        for (pos, token) in action.inputs.iter().enumerate() {
            let kind = spec.input_kind(pos).expect("arity checked");
            if kind.is_resource() && !defined.contains(&token.as_str()) {
                return false;
            }
        }
        for out in &action.outputs {
            if defined.contains(&out.as_str()) {
                return false;
            }
            defined.push(out);
        }
    }
    true
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::planner::plan::INPUT_IMAGE;
    use crate::planner::registry::levenshtein;
    use serde_json::json;

    fn repair(raw: Value) -> Result<(Plan, RepairLog), RepairError> {
        validate_and_repair_plan(&raw, &Registry::standard(), &[INPUT_IMAGE], 8)
    }

    #[test]
    fn typo_is_corrected() {
        // The bare word sits 10 edits from the intended id and at least 9 from any id.
        assert_eq!(levenshtein("segmentaton", "semantic_segmentation"), 10);
        let err = repair(json!([{"tool": "segmentaton", "inputs": ["input_image"], "outputs": ["s"]}]));
        assert!(matches!(err, Err(RepairError::EmptyPlanAfterRepair { log })
            if matches!(log[0], RepairEntry::Hallucination { distance: 9, .. })));
        let (plan, log) = repair(json!([
            {"tool": "semantic_segmentaton", "inputs": ["input_image"], "outputs": ["seg1"]}
        ]))
        .unwrap();
        assert_eq!(plan.actions[0].tool, "semantic_segmentation");
        assert_eq!(
            log,
            vec![RepairEntry::ToolTypo {
                index: 0,
                from: "semantic_segmentaton".into(),
                to: "semantic_segmentation".into(),
                distance: 1
            }]
        );
    }

    #[test]
    fn casing_is_normalized() {
        let (plan, log) = repair(json!([
            {"tool": "Object_Detection", "inputs": ["input_image"], "outputs": ["d"]}
        ]))
        .unwrap();
        assert_eq!(plan.actions[0].tool, "object_detection");
        assert!(matches!(log[0], RepairEntry::ToolTypo { distance: 0, .. }));
    }

    #[test]
    fn hallucination_is_dropped() {
        let reg = Registry::standard();
        let min = reg.tools().iter().map(|t| levenshtein("summon_dragon", &t.tool_id)).min().unwrap();
        assert!(min >= 8, "min distance {min}");
        let (plan, log) = repair(json!([
            {"tool": "summon_dragon", "inputs": ["input_image"], "outputs": ["x"]},
            {"tool": "semantic_segmentation", "inputs": ["input_image"], "outputs": ["seg1"]}
        ]))
        .unwrap();
        assert_eq!(plan.len(), 1);
        assert!(matches!(&log[0], RepairEntry::Hallucination { index: 0, tool, .. } if tool == "summon_dragon"));
    }

    #[test]
    fn exact_plan_is_unchanged() {
        let raw = json!([
            {"tool": "semantic_segmentation", "inputs": ["input_image"], "outputs": ["seg1"]},
            {"tool": "compute_area", "inputs": ["seg1", "water"], "outputs": ["a1"]},
            {"tool": "summarize", "inputs": ["a1"], "outputs": ["ans"]}
        ]);
        let (plan, log) = repair(raw.clone()).unwrap();
        assert!(log.is_empty());
        assert_eq!(serde_json::to_value(&plan).unwrap(), raw);
    }

    #[test]
    fn resource_typo_repaired_against_matching_kind() {
        let (plan, log) = repair(json!([
            {"tool": "object_detection", "inputs": ["input_image"], "outputs": ["det1"]},
            {"tool": "semantic_segmentation", "inputs": ["input_image"], "outputs": ["seg1"]},
            {"tool": "compute_area", "inputs": ["seg2", "pool"], "outputs": ["a"]}
        ]))
        .unwrap();
        assert_eq!(plan.actions[2].inputs, vec!["seg1", "pool"]);
        assert!(matches!(&log[0], RepairEntry::InputRepaired { to, .. } if to == "seg1"));
    }

    #[test]
    fn unresolvable_input_drops_action() {
        let (plan, log) = repair(json!([
            {"tool": "object_detection", "inputs": ["input_image"], "outputs": ["det1"]},
            {"tool": "compute_area", "inputs": ["masks", "pool"], "outputs": ["a"]}
        ]))
        .unwrap();
        assert_eq!(plan.len(), 1);
        assert!(matches!(&log[0], RepairEntry::UnresolvedInput { index: 1, .. }));
    }

    #[test]
    fn errors() {
        assert_eq!(repair(json!({"tool": "x"})), Err(RepairError::NotAnArray));
        assert!(matches!(repair(json!([])), Err(RepairError::EmptyPlanAfterRepair { .. })));
        assert!(matches!(
            repair(json!([{"tool": "launch_rockets_now", "inputs": [], "outputs": []}])),
            Err(RepairError::EmptyPlanAfterRepair { .. })
        ));
    }

    #[test]
    fn outputs_generated_and_duplicates_dropped() {
        let (plan, log) = repair(json!([
            {"tool": "semantic_segmentation", "inputs": ["input_image"]},
            {"tool": "object_detection", "inputs": ["input_image"], "outputs": ["semantic_segmentation_0"]},
            {"tool": "count_objects"}
        ]))
        .unwrap();
        assert_eq!(plan.actions[0].outputs, vec!["semantic_segmentation_0"]);
        assert_eq!(plan.len(), 1);
        assert!(matches!(log[1], RepairEntry::DuplicateOutput { index: 1, .. }));
        assert!(matches!(log[2], RepairEntry::ArityMismatch { index: 2, .. }));
    }

    #[test]
    fn repair_is_idempotent_on_example() {
        let raw = json!([
            {"tool": "Semantic_Segmentaton", "inputs": ["input_image"]},
            {"tool": "summon_dragon", "inputs": [], "outputs": ["z"]},
            {"tool": "compute_aera", "inputs": ["semantic_segmentation_0", "tree"], "outputs": ["a"]},
            {"tool": "summarise", "inputs": ["b"], "outputs": ["ans"]}
        ]);
        let (once, _) = repair(raw).unwrap();
        let (twice, log) = repair(serde_json::to_value(&once).unwrap()).unwrap();
        assert_eq!(once, twice);
        assert!(log.is_empty());
        assert!(is_topologically_consistent(&once, &Registry::standard(), &[INPUT_IMAGE]));
    }
}
