//! Turns a request into a validated plan, either through a language model
//! (prompt, trailing-JSON recovery, temperature-escalating retries, repair)
//! or through the fixed per-type mapping.

pub mod plan;
pub mod prompt;
pub mod recovery;
pub mod registry;
pub mod repair;

use serde::{Deserialize, Serialize};

use crate::llm::{BackendError, LlmBackend};
use crate::request::{Request, RequestType};
use crate::scene::Scene;

pub use plan::{Action, Plan, INPUT_IMAGE};
pub use prompt::build_plan_prompt;
pub use recovery::{extract_trailing_json, NoJsonFound};
pub use registry::{levenshtein, InputKind, Registry, RegistryError, ToolKind, ToolSpec, ValueKind};
pub use repair::{validate_and_repair_plan, RepairEntry, RepairError, RepairLog};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PlannerConfig {
    pub initial_temperature: f64,
    pub temperature_step: f64,
    pub max_temperature: f64,
    pub max_attempts: u32,
    pub repair_distance_threshold: usize,
}

impl Default for PlannerConfig {
    fn default() -> Self {
        Self {
            initial_temperature: 0.7,
            temperature_step: 0.1,
            max_temperature: 1.2,
            max_attempts: 5,
            repair_distance_threshold: 8,
        }
    }
}

impl PlannerConfig {
    pub fn validate(&self) -> Result<(), String> {
        let finite = [self.initial_temperature, self.temperature_step, self.max_temperature]
            .iter()
            .all(|v| v.is_finite());
        if !finite {
            return Err("planner temperatures must be finite".into());
        }
        if !(0.0 <= self.initial_temperature && self.initial_temperature <= self.max_temperature) {
            return Err(format!(
                "need 0 <= initial_temperature ({}) <= max_temperature ({})",
                self.initial_temperature, self.max_temperature
            ));
        }
        if self.temperature_step < 0.0 {
            return Err("temperature_step must be non-negative".into());
        }
        if self.max_attempts < 1 {
            return Err("max_attempts must be at least 1".into());
        }
        Ok(())
    }

    /// Sampling temperature of the zero-based `attempt`.
    pub fn temperature(&self, attempt: u32) -> f64 {
        let t = self.initial_temperature + self.temperature_step * attempt as f64;
        // Keep the schedule on a 1e-6 grid so 0.7 + 0.1 prints as 0.80.
        ((t * 1e6).round() / 1e6).min(self.max_temperature)
    }
}

#[derive(Debug, thiserror::Error)]
pub enum PlanError {
    #[error("invalid planner config: {0}")]
    Config(String),
    #[error(transparent)]
    BackendUnreachable(BackendError),
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AttemptRecord {
    pub temperature: f64,
    /// `None` when the attempt produced a valid plan.
    pub failure: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum PlanOutcome {
    Valid { plan: Plan, repairs: RepairLog },
    Invalid { reason: String },
}

impl PlanOutcome {
    pub fn plan(&self) -> Option<&Plan> {
        match self {
            PlanOutcome::Valid { plan, .. } => Some(plan),
            PlanOutcome::Invalid { .. } => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Generation {
    pub outcome: PlanOutcome,
    pub attempts: Vec<AttemptRecord>,
}

/// Queries the backend until a response yields a repairable plan or
/// `max_attempts` responses have failed. Temperature grows by
/// `temperature_step` per failed attempt, capped at `max_temperature`.
pub fn generate_plan_for_text(
    request_text: &str,
    image_size: (u32, u32),
    registry: &Registry,
    backend: &dyn LlmBackend,
    config: &PlannerConfig,
) -> Result<Generation, PlanError> {
    config.validate().map_err(PlanError::Config)?;
    let prompt = build_plan_prompt(request_text, image_size, registry);
    let mut attempts = Vec::new();
    let mut last_failure = String::new();
    for attempt in 0..config.max_attempts {
        let temperature = config.temperature(attempt);
        let failure = match backend.complete(&prompt, temperature) {
            Err(e @ BackendError::BadResponse(_)) => e.to_string(),
            Err(e) => return Err(PlanError::BackendUnreachable(e)),
            Ok(text) => match extract_trailing_json(&text) {
                Err(e) => e.to_string(),
                Ok(raw) => {
                    match validate_and_repair_plan(&raw, registry, &[INPUT_IMAGE], config.repair_distance_threshold) {
                        Ok((plan, repairs)) => {
                            attempts.push(AttemptRecord { temperature, failure: None });
                            return Ok(Generation { outcome: PlanOutcome::Valid { plan, repairs }, attempts });
                        }
                        Err(e) => e.to_string(),
                    }
                }
            },
        };
        log::debug!("planning attempt {} at T={temperature} failed: {failure}", attempt + 1);
        attempts.push(AttemptRecord { temperature, failure: Some(failure.clone()) });
        last_failure = failure;
    }
    Ok(Generation {
        outcome: PlanOutcome::Invalid {
            reason: format!("no valid plan after {} attempts; last: {last_failure}", config.max_attempts),
        },
        attempts,
    })
}

pub fn generate_plan(
    request: &Request,
    scene: &Scene,
    registry: &Registry,
    backend: &dyn LlmBackend,
    config: &PlannerConfig,
) -> Result<Generation, PlanError> {
    generate_plan_for_text(&request.text, (scene.width, scene.height), registry, backend, config)
}

/// Tool sequence every request of a type needs.
pub fn canonical_tools(rtype: RequestType) -> &'static [ToolKind] {
    use ToolKind::*;
    match rtype {
        RequestType::Detect => &[ObjectDetection],
        RequestType::Segment => &[SemanticSegmentation],
        RequestType::ObjExistence | RequestType::DmgExistence | RequestType::ObjArea | RequestType::DmgArea => {
            &[SemanticSegmentation, ComputeArea, Summarize]
        }
        RequestType::ObjCount | RequestType::DmgCount => &[ObjectDetection, CountObjects, Summarize],
        RequestType::RescuePath => &[SemanticSegmentation, FindPath, Summarize],
    }
}

pub fn canonical_tool_ids(rtype: RequestType) -> Vec<String> {
    canonical_tools(rtype).iter().map(|t| t.id().to_string()).collect()
}

/// Deterministic plan for a typed request, wired with the request's
/// category or endpoints as literals.
pub fn rule_based_plan(request: &Request) -> Plan {
    let category = request.target_category.map_or_else(String::new, |c| c.name().to_string());
    let endpoints = request.endpoints.map_or_else(String::new, |[(x1, y1), (x2, y2)]| format!("{x1},{y1};{x2},{y2}"));
    let actions = match request.rtype {
        RequestType::Detect => vec![Action::new("object_detection", [INPUT_IMAGE], ["detections"])],
        RequestType::Segment => vec![Action::new("semantic_segmentation", [INPUT_IMAGE], ["masks"])],
        RequestType::ObjExistence | RequestType::DmgExistence | RequestType::ObjArea | RequestType::DmgArea => vec![
            Action::new("semantic_segmentation", [INPUT_IMAGE], ["masks"]),
            Action::new("compute_area", ["masks", category.as_str()], ["area"]),
            Action::new("summarize", ["area"], ["answer"]),
        ],
        RequestType::ObjCount | RequestType::DmgCount => vec![
            Action::new("object_detection", [INPUT_IMAGE], ["detections"]),
            Action::new("count_objects", ["detections", category.as_str()], ["count"]),
            Action::new("summarize", ["count"], ["answer"]),
        ],
        RequestType::RescuePath => vec![
            Action::new("semantic_segmentation", [INPUT_IMAGE], ["masks"]),
            Action::new("find_path", ["masks", endpoints.as_str()], ["path"]),
            Action::new("summarize", ["path"], ["answer"]),
        ],
    };
    Plan::new(actions)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::category::Category;
    use crate::llm::{NullBackend, ScriptedBackend};

    const VALID: &str = r#"Plan: [{"tool":"object_detection","inputs":["input_image"],"outputs":["d"]},{"tool":"count_objects","inputs":["d","vehicle"],"outputs":["c"]},{"tool":"summarize","inputs":["c"],"outputs":["a"]}]"#;

    fn gen(backend: &dyn LlmBackend) -> Result<Generation, PlanError> {
        generate_plan_for_text("How many vehicles?", (64, 64), &Registry::standard(), backend, &PlannerConfig::default())
    }

    #[test]
    fn first_try_success() {
        let b = ScriptedBackend::new().with_default(VALID);
        let g = gen(&b).unwrap();
        assert_eq!(g.outcome.plan().unwrap().len(), 3);
        assert_eq!(b.calls().len(), 1);
        assert_eq!(b.calls()[0].temperature, 0.7);
    }

    #[test]
    fn retry_with_higher_temperature() {
        let b = ScriptedBackend::new().with_key("*@0.70", "I cannot comply.").with_default(VALID);
        let g = gen(&b).unwrap();
        assert!(g.outcome.plan().is_some());
        let calls = b.calls();
        assert_eq!(calls.len(), 2);
        assert_eq!(calls[1].temperature, 0.8);
        assert_eq!(g.attempts.len(), 2);
    }

    #[test]
    fn exhaustion_is_invalid() {
        let b = ScriptedBackend::new().with_default("garbage");
        let g = gen(&b).unwrap();
        assert!(matches!(g.outcome, PlanOutcome::Invalid { .. }));
        let temps: Vec<f64> = b.calls().iter().map(|c| c.temperature).collect();
        assert_eq!(temps, vec![0.7, 0.8, 0.9, 1.0, 1.1]);
    }

    #[test]
    fn temperature_is_capped() {
        let cfg = PlannerConfig { max_attempts: 10, ..Default::default() };
        assert_eq!(cfg.temperature(9), 1.2);
        assert!((0..10).map(|a| cfg.temperature(a)).collect::<Vec<_>>().windows(2).all(|w| w[0] <= w[1]));
    }

    #[test]
    fn backend_failure_is_distinct() {
        assert!(matches!(gen(&NullBackend), Err(PlanError::BackendUnreachable(_))));
    }

    #[test]
    fn config_validation() {
        assert!(PlannerConfig::default().validate().is_ok());
        assert!(PlannerConfig { max_attempts: 0, ..Default::default() }.validate().is_err());
        assert!(PlannerConfig { initial_temperature: 2.0, ..Default::default() }.validate().is_err());
    }

    fn typed(rtype: RequestType) -> Request {
        Request {
            request_id: "r".into(),
            scene_id: "s".into(),
            rtype,
            text: String::new(),
            target_category: rtype.needs_category().then_some(Category::VEHICLE),
            endpoints: (rtype == RequestType::RescuePath).then_some([(1, 2), (3, 4)]),
        }
    }

    #[test]
    fn canonical_mapping() {
        let ids = |t| rule_based_plan(&typed(t)).tool_ids();
        assert_eq!(ids(RequestType::ObjCount), ["object_detection", "count_objects", "summarize"]);
        assert_eq!(ids(RequestType::Segment), ["semantic_segmentation"]);
        assert_eq!(ids(RequestType::RescuePath), ["semantic_segmentation", "find_path", "summarize"]);
        assert_eq!(rule_based_plan(&typed(RequestType::RescuePath)).actions[1].inputs[1], "1,2;3,4");
    }

    #[test]
    fn rule_plans_are_valid() {
        let reg = Registry::standard();
        for t in RequestType::ALL {
            let plan = rule_based_plan(&typed(t));
            assert_eq!(plan.tool_ids(), canonical_tool_ids(t));
            assert!(repair::is_topologically_consistent(&plan, &reg, &[INPUT_IMAGE]));
            let (again, log) =
                validate_and_repair_plan(&serde_json::to_value(&plan).unwrap(), &reg, &[INPUT_IMAGE], 8).unwrap();
            assert_eq!(again, plan);
            assert!(log.is_empty());
        }
    }
}
