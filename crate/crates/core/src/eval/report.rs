use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use serde_json::Value;

/// Headline numbers of a run, grouped as planning, perception and recognition.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub requests: usize,
    pub vr: Option<f64>,
    pub precision: Option<f64>,
    pub recall: Option<f64>,
    pub ca: u64,
    pub ua: u64,
    pub ma: u64,
    /// Exact-match rate over question-answering requests.
    pub exact: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gpt_score: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub miou: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ap50: Option<f64>,
    pub harness_errors: usize,
}

/// Rates restricted to one request type or answer group.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Breakdown {
    pub requests: usize,
    pub valid: usize,
    /// Number of requests scored for exact match.
    pub scored: usize,
    pub correct: usize,
    pub exact: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gpt_score: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub miou: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ap50: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RequestResult {
    pub request_id: String,
    pub scene_id: String,
    #[serde(rename = "type")]
    pub rtype: String,
    pub valid: bool,
    pub plan: Option<Vec<String>>,
    pub gt_plan: Vec<String>,
    pub final_answer: Option<String>,
    pub gt_answer: String,
    /// `None` for perception requests.
    pub correct: Option<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gpt_correct: Option<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub miou: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ap50: Option<f64>,
    /// Plan-invalid reason or execution failure, if any.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    /// Set when the harness itself failed on this request.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub harness_error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub summary: Summary,
    pub per_type: BTreeMap<String, Breakdown>,
    pub per_group: BTreeMap<String, Breakdown>,
    pub per_request: Vec<RequestResult>,
}

impl EvalReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serialize")
    }
}

fn check_rate(v: &Value, path: &str, required: bool, errors: &mut Vec<String>) {
    match v {
        Value::Null if !required => {}
        Value::Null => errors.push(format!("{path}: missing")),
        Value::Number(n) => match n.as_f64() {
            Some(x) if (0.0..=1.0).contains(&x) => {}
            _ => errors.push(format!("{path}: {n} is not a rate in [0, 1]")),
        },
        other => errors.push(format!("{path}: expected number or null, got {other}")),
    }
}

fn check_count(v: &Value, path: &str, errors: &mut Vec<String>) {
    if !v.is_u64() {
        errors.push(format!("{path}: expected a non-negative integer"));
    }
}

fn check_breakdowns(v: &Value, path: &str, errors: &mut Vec<String>) {
    let Some(map) = v.as_object() else {
        errors.push(format!("{path}: expected an object"));
        return;
    };
    for (k, b) in map {
        let p = format!("{path}.{k}");
        for field in ["requests", "valid", "scored", "correct"] {
            check_count(&b[field], &format!("{p}.{field}"), errors);
        }
        if b.get("exact").is_none() {
            errors.push(format!("{p}.exact: missing"));
        }
        for field in ["exact", "gpt_score", "miou", "ap50"] {
            check_rate(&b[field], &format!("{p}.{field}"), false, errors);
        }
    }
}

/// Checks a report against its schema: required keys, integer counts and
/// rates in [0, 1] or null. Returns every violation found.
pub fn validate_report_json(v: &Value) -> Result<(), Vec<String>> {
    let mut errors = Vec::new();
    let s = &v["summary"];
    if !s.is_object() {
        errors.push("summary: expected an object".into());
    } else {
        for field in ["requests", "ca", "ua", "ma", "harness_errors"] {
            check_count(&s[field], &format!("summary.{field}"), &mut errors);
        }
        for field in ["vr", "precision", "recall", "exact"] {
            if s.get(field).is_none() {
                errors.push(format!("summary.{field}: missing"));
            }
        }
        for field in ["vr", "precision", "recall", "exact", "gpt_score", "miou", "ap50"] {
            check_rate(&s[field], &format!("summary.{field}"), false, &mut errors);
        }
    }
    check_breakdowns(&v["per_type"], "per_type", &mut errors);
    check_breakdowns(&v["per_group"], "per_group", &mut errors);
    match v["per_request"].as_array() {
        None => errors.push("per_request: expected an array".into()),
        Some(items) => {
            for (i, r) in items.iter().enumerate() {
                let p = format!("per_request[{i}]");
                for field in ["request_id", "scene_id", "type", "gt_answer"] {
                    if !r[field].is_string() {
                        errors.push(format!("{p}.{field}: expected a string"));
                    }
                }
                if !r["valid"].is_boolean() {
                    errors.push(format!("{p}.valid: expected a boolean"));
                }
                if !r["gt_plan"].is_array() {
                    errors.push(format!("{p}.gt_plan: expected an array"));
                }
                for field in ["miou", "ap50"] {
                    check_rate(&r[field], &format!("{p}.{field}"), false, &mut errors);
                }
            }
            if let Some(n) = s["requests"].as_u64() {
                if n != items.len() as u64 {
                    errors.push(format!("summary.requests is {n} but per_request has {}", items.len()));
                }
            }
        }
    }
    if errors.is_empty() {
        Ok(())
    } else {
        Err(errors)
    }
}

fn cell(v: Option<f64>) -> String {
    v.map_or_else(|| "-".to_string(), |x| format!("{x:.3}"))
}

/// Fixed-width text tables of the summary and the breakdowns.
pub fn render_summary(report: &EvalReport) -> String {
    let s = &report.summary;
    let mut out = String::new();
    let _ = writeln!(out, "requests: {}   harness errors: {}", s.requests, s.harness_errors);
    let _ = writeln!(out);
    let _ = writeln!(out, "{:<12} {:>7} {:>7} {:>7}", "planning", "VR", "P", "R");
    let _ = writeln!(out, "{:<12} {:>7} {:>7} {:>7}", "", cell(s.vr), cell(s.precision), cell(s.recall));
    let _ = writeln!(out, "{:<12} {:>7} {:>7}", "perception", "mIoU", "AP50");
    let _ = writeln!(out, "{:<12} {:>7} {:>7}", "", cell(s.miou), cell(s.ap50));
    let _ = writeln!(out, "{:<12} {:>7} {:>7}", "recognition", "exact", "judge");
    let _ = writeln!(out, "{:<12} {:>7} {:>7}", "", cell(s.exact), cell(s.gpt_score));
    for (title, table) in [("by type", &report.per_type), ("by group", &report.per_group)] {
        let _ = writeln!(out);
        let _ = writeln!(
            out,
            "{:<16} {:>5} {:>5} {:>7} {:>7} {:>7} {:>7}",
            title, "n", "valid", "exact", "judge", "mIoU", "AP50"
        );
        for (k, b) in table {
            let _ = writeln!(
                out,
                "{:<16} {:>5} {:>5} {:>7} {:>7} {:>7} {:>7}",
                k,
                b.requests,
                b.valid,
                cell(b.exact),
                cell(b.gpt_score),
                cell(b.miou),
                cell(b.ap50)
            );
        }
    }
    out
}
