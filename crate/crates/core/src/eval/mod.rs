//! Planning, perception and recognition metrics, and the benchmark runner
//! that produces them.

mod metrics;
mod report;

use std::collections::BTreeMap;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};

pub use metrics::{
    area_matches, build_judge_prompt, detection_ap50, first_number, first_yes_no, gpt_score, mask_miou, match_answer,
    plan_metrics, PlanMetrics, PlanSample, AP_IOU_THRESHOLD, AREA_ABS_TOLERANCE_M2, AREA_EPSILON, AREA_REL_TOLERANCE,
};
pub use report::{render_summary, validate_report_json, Breakdown, EvalReport, RequestResult, Summary};

use crate::executor::{execute_plan, write_trace, ExecContext, ExecStatus, Execution, ResourceValue};
use crate::llm::LlmBackend;
use crate::par::{map_ordered, Parallelism};
use crate::planner::{generate_plan, rule_based_plan, PlanOutcome, PlannerConfig, Registry};
use crate::request::{read_requests, AnswerGroup, RequestRecord, RequestType};
use crate::scene::{load_scene, Scene};
use crate::toolkit::{OutputSummary, SummarizerMode, ToolConfig};

#[derive(Debug, thiserror::Error)]
pub enum EvalError {
    #[error("request ids do not line up: {0}")]
    IdMismatch(String),
    #[error("mask dimensions differ: predicted {pred:?}, ground truth {gt:?}")]
    DimensionMismatch { pred: (u32, u32), gt: (u32, u32) },
    #[error("unreadable dataset {path}: {message}")]
    Dataset { path: PathBuf, message: String },
    #[error("invalid configuration: {0}")]
    Config(String),
}

/// Requests plus every scene they refer to.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub dir: PathBuf,
    pub records: Vec<RequestRecord>,
    pub scenes: BTreeMap<String, Scene>,
}

/// Reads `dir/requests.jsonl` and `dir/scenes/<id>/manifest.json` for each
/// referenced scene.
pub fn load_dataset(dir: &Path) -> Result<Dataset, EvalError> {
    let fail = |path: &Path, message: String| EvalError::Dataset { path: path.to_path_buf(), message };
    let requests_path = dir.join("requests.jsonl");
    let records = read_requests(&requests_path).map_err(|e| fail(&requests_path, e.to_string()))?;
    let mut scenes = BTreeMap::new();
    for rec in &records {
        let id = &rec.request.scene_id;
        if scenes.contains_key(id) {
            continue;
        }
        let manifest = dir.join("scenes").join(id).join("manifest.json");
        let scene = load_scene(&manifest).map_err(|e| fail(&manifest, e.to_string()))?;
        if &scene.scene_id != id {
            return Err(fail(&manifest, format!("manifest declares scene {}, expected {id}", scene.scene_id)));
        }
        scenes.insert(id.clone(), scene);
    }
    Ok(Dataset { dir: dir.to_path_buf(), records, scenes })
}

pub enum PlannerMode<'a> {
    /// Fixed canonical plan per request type.
    RuleBased,
    Llm { backend: &'a dyn LlmBackend, config: PlannerConfig },
}

/// How the agent under test plans, perceives, answers and is judged.
pub struct AgentConfig<'a> {
    pub planner: PlannerMode<'a>,
    pub tools: ToolConfig,
    /// `None` renders answers from templates.
    pub summarizer: Option<(&'a dyn LlmBackend, f64)>,
    /// Judge for the model-graded correctness rate.
    pub judge: Option<&'a dyn LlmBackend>,
    pub parallelism: Parallelism,
}

impl<'a> AgentConfig<'a> {
    /// Rule-based planning, oracle perception and template answers.
    pub fn oracle() -> Self {
        Self {
            planner: PlannerMode::RuleBased,
            tools: ToolConfig::default(),
            summarizer: None,
            judge: None,
            parallelism: Parallelism::Auto,
        }
    }
}

struct Scored {
    result: RequestResult,
    judge_failed: bool,
}

fn last_output(execution: &Execution, want: fn(&OutputSummary) -> bool) -> Option<&ResourceValue> {
    execution
        .trace
        .records
        .iter()
        .rev()
        .flat_map(|r| r.outputs.iter().rev())
        .find(|(_, s)| want(s))
        .and_then(|(id, _)| execution.store.get(id))
}

fn score_request(
    rec: &RequestRecord,
    scene: &Scene,
    agent: &AgentConfig<'_>,
    registry: &Registry,
    traces: Option<&Path>,
) -> Scored {
    let req = &rec.request;
    let rtype = req.rtype;
    let mut result = RequestResult {
        request_id: req.request_id.clone(),
        scene_id: req.scene_id.clone(),
        rtype: rtype.to_string(),
        valid: false,
        plan: None,
        gt_plan: rec.truth.gt_plan.clone(),
        final_answer: None,
        gt_answer: rec.truth.gt_answer.render(),
        correct: None,
        gpt_correct: None,
        miou: None,
        ap50: None,
        error: None,
        harness_error: None,
    };
    let outcome = match &agent.planner {
        PlannerMode::RuleBased => Ok(PlanOutcome::Valid { plan: rule_based_plan(req), repairs: Vec::new() }),
        PlannerMode::Llm { backend, config } => generate_plan(req, scene, registry, *backend, config).map(|g| g.outcome),
    };
    let execution = match outcome {
        Ok(PlanOutcome::Valid { plan, .. }) => {
            result.valid = true;
            result.plan = Some(plan.tool_ids());
            let summarizer = match agent.summarizer {
                None => SummarizerMode::Template,
                Some((backend, temperature)) => SummarizerMode::Llm { backend, temperature },
            };
            let ctx = ExecContext { registry, tools: &agent.tools, summarizer };
            let execution = execute_plan(&plan, scene, req.into(), &ctx);
            if let ExecStatus::FailedAt { index, error } = &execution.trace.status {
                result.error = Some(format!("action {index} failed: {error}"));
            }
            if let Some(dir) = traces {
                if let Err(e) = write_trace(&execution, dir) {
                    result.harness_error = Some(format!("writing trace: {e}"));
                }
            }
            result.final_answer = execution.trace.final_answer.clone();
            Some(execution)
        }
        Ok(PlanOutcome::Invalid { reason }) => {
            result.error = Some(reason);
            None
        }
        Err(e) => {
            result.error = Some(e.to_string());
            None
        }
    };

    let mut judge_failed = false;
    if rtype.is_qa() {
        let answer = result.final_answer.as_deref();
        result.correct = Some(answer.is_some_and(|a| match_answer(a, &rec.truth.gt_answer, rtype)));
        if let Some(judge) = agent.judge {
            result.gpt_correct = match answer {
                None => Some(false),
                Some(a) => match gpt_score(a, &rec.truth.gt_answer, &req.text, judge) {
                    Ok(v) => Some(v),
                    Err(e) => {
                        log::warn!("judge failed on {}: {e}", req.request_id);
                        judge_failed = true;
                        None
                    }
                },
            };
        }
    }
    match rtype {
        RequestType::Segment => {
            let pred = execution
                .as_ref()
                .and_then(|e| last_output(e, |s| matches!(s, OutputSummary::Masks { .. })))
                .and_then(|v| if let ResourceValue::Masks(m) = v { Some(m) } else { None });
            result.miou = Some(match pred {
                Some(m) => mask_miou(m, &scene.masks()).unwrap_or(0.0),
                None => 0.0,
            });
        }
        RequestType::Detect => {
            let empty = Default::default();
            let pred = execution
                .as_ref()
                .and_then(|e| last_output(e, |s| matches!(s, OutputSummary::Detections { .. })))
                .and_then(|v| if let ResourceValue::Detections(d) = v { Some(d) } else { None })
                .unwrap_or(&empty);
            result.ap50 = detection_ap50(pred, &scene.detections);
        }
        _ => {}
    }
    Scored { result, judge_failed }
}

fn mean(values: impl Iterator<Item = f64>) -> Option<f64> {
    let (sum, n) = values.fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    (n > 0).then(|| sum / n as f64)
}

fn rate(hits: usize, n: usize) -> Option<f64> {
    (n > 0).then(|| hits as f64 / n as f64)
}

fn breakdown(results: &[&RequestResult], judged: bool) -> Breakdown {
    let scored: Vec<bool> = results.iter().filter_map(|r| r.correct).collect();
    let correct = scored.iter().filter(|c| **c).count();
    Breakdown {
        requests: results.len(),
        valid: results.iter().filter(|r| r.valid).count(),
        scored: scored.len(),
        correct,
        exact: rate(correct, scored.len()),
        gpt_score: if judged {
            let g: Vec<bool> = results.iter().filter_map(|r| r.gpt_correct).collect();
            rate(g.iter().filter(|c| **c).count(), g.len())
        } else {
            None
        },
        miou: mean(results.iter().filter_map(|r| r.miou)),
        ap50: mean(results.iter().filter_map(|r| r.ap50)),
    }
}

fn group_name(g: AnswerGroup) -> &'static str {
    match g {
        AnswerGroup::Perception => "perception",
        AnswerGroup::Existence => "existence",
        AnswerGroup::Counting => "counting",
        AnswerGroup::Area => "area",
        AnswerGroup::Path => "path",
    }
}

/// Plans, executes and scores every request of `dataset`. Per-request
/// failures are recorded in the report and never stop the run. Traces are
/// written under `traces` when given.
pub fn evaluate(dataset: &Dataset, agent: &AgentConfig<'_>, traces: Option<&Path>) -> Result<EvalReport, EvalError> {
    agent.tools.validate().map_err(EvalError::Config)?;
    if let PlannerMode::Llm { config, .. } = &agent.planner {
        config.validate().map_err(EvalError::Config)?;
    }
    let registry = Registry::standard();
    let scored = map_ordered(&dataset.records, agent.parallelism, |rec| {
        let scene = &dataset.scenes[&rec.request.scene_id];
        catch_unwind(AssertUnwindSafe(|| score_request(rec, scene, agent, &registry, traces))).unwrap_or_else(|panic| {
            let message = panic
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| panic.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panic".into());
            Scored {
                result: RequestResult {
                    request_id: rec.request.request_id.clone(),
                    scene_id: rec.request.scene_id.clone(),
                    rtype: rec.request.rtype.to_string(),
                    valid: false,
                    plan: None,
                    gt_plan: rec.truth.gt_plan.clone(),
                    final_answer: None,
                    gt_answer: rec.truth.gt_answer.render(),
                    correct: rec.request.rtype.is_qa().then_some(false),
                    gpt_correct: None,
                    miou: None,
                    ap50: None,
                    error: None,
                    harness_error: Some(message),
                },
                judge_failed: false,
            }
        })
    });
    let judged = agent.judge.is_some() && !scored.iter().any(|s| s.judge_failed);
    let results: Vec<RequestResult> = scored.into_iter().map(|s| s.result).collect();

    let samples: Vec<PlanSample> =
        results.iter().map(|r| PlanSample { request_id: &r.request_id, tools: r.plan.as_deref() }).collect();
    let gts: Vec<(&str, &[String])> = results.iter().map(|r| (r.request_id.as_str(), &r.gt_plan[..])).collect();
    let plan = plan_metrics(&samples, &gts)?;

    let all: Vec<&RequestResult> = results.iter().collect();
    let overall = breakdown(&all, judged);
    let mut per_type = BTreeMap::new();
    let mut per_group = BTreeMap::new();
    for t in RequestType::ALL {
        let of_type: Vec<&RequestResult> = results.iter().filter(|r| r.rtype == t.as_str()).collect();
        if !of_type.is_empty() {
            per_type.insert(t.to_string(), breakdown(&of_type, judged));
        }
    }
    for g in [AnswerGroup::Perception, AnswerGroup::Existence, AnswerGroup::Counting, AnswerGroup::Area, AnswerGroup::Path]
    {
        let of_group: Vec<&RequestResult> = results
            .iter()
            .filter(|r| r.rtype.parse::<RequestType>().is_ok_and(|t| t.group() == g))
            .collect();
        if !of_group.is_empty() {
            per_group.insert(group_name(g).to_string(), breakdown(&of_group, judged));
        }
    }

    let summary = Summary {
        requests: results.len(),
        vr: plan.vr,
        precision: plan.precision,
        recall: plan.recall,
        ca: plan.ca,
        ua: plan.ua,
        ma: plan.ma,
        exact: overall.exact,
        gpt_score: overall.gpt_score,
        miou: overall.miou,
        ap50: overall.ap50,
        harness_errors: results.iter().filter(|r| r.harness_error.is_some()).count(),
    };
    Ok(EvalReport { summary, per_type, per_group, per_request: results })
}

/// Loads the dataset under `dataset_dir` and evaluates it.
pub fn run_benchmark(
    dataset_dir: &Path,
    agent: &AgentConfig<'_>,
    traces: Option<&Path>,
) -> Result<EvalReport, EvalError> {
    evaluate(&load_dataset(dataset_dir)?, agent, traces)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::llm::ScriptedBackend;
    use crate::synth::{generate_dataset, SynthConfig};

    fn dataset(n: u32) -> (tempfile::TempDir, Dataset) {
        let dir = tempfile::tempdir().unwrap();
        generate_dataset(&SynthConfig::default(), n, dir.path(), Parallelism::Sequential).unwrap();
        let ds = load_dataset(dir.path()).unwrap();
        (dir, ds)
    }

    #[test]
    fn oracle_run_is_perfect() {
        let (_dir, ds) = dataset(4);
        let report = evaluate(&ds, &AgentConfig::oracle(), None).unwrap();
        let s = &report.summary;
        assert_eq!((s.vr, s.precision, s.recall, s.exact), (Some(1.0), Some(1.0), Some(1.0), Some(1.0)));
        assert_eq!(s.miou, Some(1.0));
        assert_eq!(s.ap50, Some(1.0));
        assert_eq!(s.harness_errors, 0);
        assert_eq!(s.gpt_score, None);
    }

    #[test]
    fn report_round_trips_schema() {
        let (_dir, ds) = dataset(2);
        let report = evaluate(&ds, &AgentConfig::oracle(), None).unwrap();
        let json: serde_json::Value = serde_json::from_str(&report.to_json()).unwrap();
        validate_report_json(&json).unwrap();
        let back: EvalReport = serde_json::from_value(json).unwrap();
        assert_eq!(back, report);
        assert!(validate_report_json(&serde_json::json!({"summary": {"vr": 2.0}})).is_err());
    }

    #[test]
    fn per_type_weighted_average_is_overall() {
        let (_dir, ds) = dataset(3);
        let judge = ScriptedBackend::new().with_default("no");
        let mut agent = AgentConfig::oracle();
        agent.judge = Some(&judge);
        let report = evaluate(&ds, &agent, None).unwrap();
        let (hits, n) = report.per_type.values().fold((0, 0), |(h, n), b| (h + b.correct, n + b.scored));
        assert_eq!(report.summary.exact, Some(hits as f64 / n as f64));
        assert_eq!(report.summary.gpt_score, Some(0.0));
    }

    #[test]
    fn unplannable_requests_are_invalid_not_fatal() {
        let (_dir, ds) = dataset(1);
        let backend = ScriptedBackend::new().with_default("I cannot help with that.");
        let agent = AgentConfig {
            planner: PlannerMode::Llm { backend: &backend, config: PlannerConfig::default() },
            ..AgentConfig::oracle()
        };
        let report = evaluate(&ds, &agent, None).unwrap();
        assert_eq!(report.summary.vr, Some(0.0));
        assert_eq!(report.summary.exact, Some(0.0));
        assert_eq!(report.summary.harness_errors, 0);
        assert_eq!(report.summary.precision, None);
    }

    #[test]
    fn missing_dataset() {
        assert!(matches!(load_dataset(Path::new("/nonexistent/ds")), Err(EvalError::Dataset { .. })));
    }
}
