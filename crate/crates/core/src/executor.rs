//! Runs a validated plan against a scene, one action at a time.

use std::collections::BTreeMap;
use std::path::Path;

use serde::Serialize;

use crate::category::Category;
use crate::planner::{InputKind, Plan, Registry, ToolKind, ValueKind, INPUT_IMAGE};
use crate::raster::{MaskSet, Point};
use crate::request::{Request, RequestType, PERCEPTION_ACK};
use crate::scene::{DetectionSet, Scene};
use crate::toolkit::{
    compute_area, count_objects, find_path, run_detection, run_segmentation, summarize, ActionRecord, OutputSummary,
    PathResult, SummarizerMode, ToolConfig, ToolError,
};

#[derive(Debug, Clone, PartialEq)]
pub enum ResourceValue {
    Image { width: u32, height: u32 },
    Detections(DetectionSet),
    Masks(MaskSet),
    Count(u64),
    Area(f64),
    Path(PathResult),
    Text(String),
}

impl ResourceValue {
    pub fn kind(&self) -> ValueKind {
        match self {
            ResourceValue::Image { .. } => ValueKind::Image,
            ResourceValue::Detections(_) => ValueKind::Detections,
            ResourceValue::Masks(_) => ValueKind::Masks,
            ResourceValue::Count(_) => ValueKind::Count,
            ResourceValue::Area(_) => ValueKind::Area,
            ResourceValue::Path(_) => ValueKind::Path,
            ResourceValue::Text(_) => ValueKind::Text,
        }
    }

    pub fn summary(&self) -> OutputSummary {
        match self {
            ResourceValue::Image { width, height } => OutputSummary::Image { width: *width, height: *height },
            ResourceValue::Detections(d) => {
                let mut per_category = BTreeMap::new();
                for item in &d.items {
                    *per_category.entry(item.category.name().to_string()).or_insert(0) += 1;
                }
                OutputSummary::Detections { total: d.len(), per_category }
            }
            ResourceValue::Masks(m) => {
                let (width, height) = m.dims();
                let pixels = m.iter().map(|(k, v)| (k.to_string(), v.count())).collect();
                OutputSummary::Masks { width, height, pixels }
            }
            ResourceValue::Count(value) => OutputSummary::Count { value: *value },
            ResourceValue::Area(a) => OutputSummary::Area { square_meters: *a },
            ResourceValue::Path(p) => OutputSummary::Path {
                reachable: p.reachable,
                length_m: p.length_m,
                waypoints: p.waypoints.as_ref().map_or(0, Vec::len),
            },
            ResourceValue::Text(t) => OutputSummary::Text { value: t.clone() },
        }
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ExecError {
    #[error("resource `{0}` is not defined")]
    ResourceMissing(String),
    #[error("resource `{0}` is already defined")]
    DuplicateResource(String),
    #[error("cannot parse literal `{token}` as {expected}")]
    LiteralParseError { token: String, expected: &'static str },
    #[error("`{token}` is a {found:?}, expected {expected:?}")]
    KindMismatch { token: String, expected: InputKind, found: ValueKind },
    #[error("tool `{0}` is not registered")]
    UnknownTool(String),
    #[error(transparent)]
    Tool(#[from] ToolError),
}

/// Write-once map from identifiers to intermediate results.
#[derive(Debug, Clone, PartialEq)]
pub struct ResourceStore {
    values: BTreeMap<String, ResourceValue>,
}

impl ResourceStore {
    /// Store holding only the scene image under [`INPUT_IMAGE`].
    pub fn seeded(width: u32, height: u32) -> Self {
        let mut values = BTreeMap::new();
        values.insert(INPUT_IMAGE.to_string(), ResourceValue::Image { width, height });
        Self { values }
    }

    pub fn insert(&mut self, id: &str, value: ResourceValue) -> Result<(), ExecError> {
        if self.values.contains_key(id) {
            return Err(ExecError::DuplicateResource(id.to_string()));
        }
        self.values.insert(id.to_string(), value);
        Ok(())
    }

    pub fn get(&self, id: &str) -> Option<&ResourceValue> {
        self.values.get(id)
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &ResourceValue)> {
        self.values.iter().map(|(k, v)| (k.as_str(), v))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Resolved<'s> {
    Resource(&'s ResourceValue),
    Category(Category),
    Points(Point, Point),
}

pub fn parse_point_pair(token: &str) -> Option<(Point, Point)> {
    let mut points = token.split(';').map(|p| {
        let (x, y) = p.split_once(',')?;
        Some((x.trim().parse().ok()?, y.trim().parse().ok()?))
    });
    let a = points.next()??;
    let b = points.next()??;
    points.next().is_none().then_some((a, b))
}

/// Resolves a plan input: an exact store key is a resource reference,
/// anything else is parsed as a literal of the expected kind.
pub fn resolve_input<'s>(token: &str, store: &'s ResourceStore, expected: InputKind) -> Result<Resolved<'s>, ExecError> {
    if let Some(value) = store.get(token) {
        return if expected.accepts(value.kind()) {
            Ok(Resolved::Resource(value))
        } else {
            Err(ExecError::KindMismatch { token: token.to_string(), expected, found: value.kind() })
        };
    }
    match expected {
        InputKind::Resource(_) | InputKind::AnyResource => Err(ExecError::ResourceMissing(token.to_string())),
        InputKind::CategoryLiteral => Category::from_name(token)
            .map(Resolved::Category)
            .map_err(|_| ExecError::LiteralParseError { token: token.to_string(), expected: "category name" }),
        InputKind::PointPairLiteral => parse_point_pair(token)
            .map(|(a, b)| Resolved::Points(a, b))
            .ok_or_else(|| ExecError::LiteralParseError { token: token.to_string(), expected: "point pair x,y;x,y" }),
    }
}

fn render_input(token: &str, resolved: &Resolved<'_>) -> String {
    match resolved {
        Resolved::Resource(v) => {
            let kind = serde_json::to_value(v.kind()).ok().and_then(|k| k.as_str().map(str::to_string));
            format!("{token} ({})", kind.unwrap_or_default())
        }
        Resolved::Category(c) => c.name().to_string(),
        Resolved::Points((x1, y1), (x2, y2)) => format!("{x1},{y1};{x2},{y2}"),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ExecStatus {
    Completed,
    FailedAt { index: usize, error: String },
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExecutionTrace {
    pub request_id: String,
    pub plan: Plan,
    pub records: Vec<ActionRecord>,
    /// `None` marks a missing answer (failed run, or a QA plan without a summarize step).
    pub final_answer: Option<String>,
    pub status: ExecStatus,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Execution {
    pub trace: ExecutionTrace,
    pub store: ResourceStore,
}

pub struct ExecContext<'a> {
    pub registry: &'a Registry,
    pub tools: &'a ToolConfig,
    pub summarizer: SummarizerMode<'a>,
}

/// Borrowed view of what the executor needs from a request.
#[derive(Debug, Clone, Copy)]
pub struct RequestView<'a> {
    pub request_id: &'a str,
    pub text: &'a str,
    pub rtype: Option<RequestType>,
}

impl<'a> From<&'a Request> for RequestView<'a> {
    fn from(r: &'a Request) -> Self {
        Self { request_id: &r.request_id, text: &r.text, rtype: Some(r.rtype) }
    }
}

fn run_action(
    tool: ToolKind,
    inputs: &[Resolved<'_>],
    scene: &Scene,
    request: RequestView<'_>,
    history: &[ActionRecord],
    ctx: &ExecContext<'_>,
) -> Result<ResourceValue, ExecError> {
    let category = || {
        inputs.iter().find_map(|r| if let Resolved::Category(c) = r { Some(*c) } else { None }).expect("arity checked")
    };
    let value = match tool {
        ToolKind::ObjectDetection => ResourceValue::Detections(run_detection(scene, ctx.tools)?),
        ToolKind::SemanticSegmentation => ResourceValue::Masks(run_segmentation(scene, ctx.tools)?),
        ToolKind::CountObjects => {
            let Resolved::Resource(ResourceValue::Detections(d)) = &inputs[0] else { unreachable!("kind checked") };
            ResourceValue::Count(count_objects(d, category().name())?)
        }
        ToolKind::ComputeArea => {
            let Resolved::Resource(ResourceValue::Masks(m)) = &inputs[0] else { unreachable!("kind checked") };
            ResourceValue::Area(compute_area(m, category().name(), scene.gsd)?)
        }
        ToolKind::FindPath => {
            let Resolved::Resource(ResourceValue::Masks(m)) = &inputs[0] else { unreachable!("kind checked") };
            let Resolved::Points(a, b) = inputs[1] else { unreachable!("kind checked") };
            let (w, h) = m.dims();
            let empty = crate::raster::BinaryMask::new(w, h);
            let road = m.get(Category::ROAD_CLEAR).unwrap_or(&empty);
            ResourceValue::Path(find_path(road, a, b, scene.gsd, ctx.tools.snap_radius)?)
        }
        ToolKind::Summarize => {
            ResourceValue::Text(summarize(request.text, request.rtype, history, &ctx.summarizer)?)
        }
    };
    Ok(value)
}

/// Executes `plan` strictly in order. The first failing action stops the
/// run and is reported as `FailedAt`; later actions are skipped.
pub fn execute_plan(plan: &Plan, scene: &Scene, request: RequestView<'_>, ctx: &ExecContext<'_>) -> Execution {
    let mut store = ResourceStore::seeded(scene.width, scene.height);
    let mut records: Vec<ActionRecord> = Vec::with_capacity(plan.len());
    let mut status = ExecStatus::Completed;

    for (index, action) in plan.actions.iter().enumerate() {
        let step = (|| -> Result<ActionRecord, ExecError> {
            let spec = ctx.registry.get(&action.tool).ok_or_else(|| ExecError::UnknownTool(action.tool.clone()))?;
            let tool: ToolKind = action.tool.parse().map_err(|_| ExecError::UnknownTool(action.tool.clone()))?;
            let resolved = action
                .inputs
                .iter()
                .enumerate()
                .map(|(pos, token)| {
                    let kind = spec.input_kind(pos).ok_or_else(|| ExecError::UnknownTool(action.tool.clone()))?;
                    resolve_input(token, &store, kind)
                })
                .collect::<Result<Vec<_>, _>>()?;
            let rendered = action.inputs.iter().zip(&resolved).map(|(t, r)| render_input(t, r)).collect();
            let value = run_action(tool, &resolved, scene, request, &records, ctx)?;
            let out_id = action.outputs.first().ok_or_else(|| ExecError::ResourceMissing("<output>".into()))?;
            let summary = value.summary();
            store.insert(out_id, value)?;
            Ok(ActionRecord { tool: action.tool.clone(), inputs: rendered, outputs: vec![(out_id.clone(), summary)] })
        })();
        match step {
            Ok(rec) => records.push(rec),
            Err(e) => {
                status = ExecStatus::FailedAt { index, error: e.to_string() };
                break;
            }
        }
    }

    let final_answer = match status {
        ExecStatus::FailedAt { .. } => None,
        ExecStatus::Completed => {
            let perception_only = !plan.is_empty()
                && plan.actions.iter().all(|a| a.tool.parse::<ToolKind>().is_ok_and(ToolKind::is_perception));
            match plan.actions.last() {
                Some(a) if a.tool == ToolKind::Summarize.id() => match store.get(&a.outputs[0]) {
                    Some(ResourceValue::Text(t)) => Some(t.clone()),
                    _ => None,
                },
                _ if perception_only => Some(PERCEPTION_ACK.to_string()),
                _ => None,
            }
        }
    };

    Execution {
        trace: ExecutionTrace { request_id: request.request_id.to_string(), plan: plan.clone(), records, final_answer, status },
        store,
    }
}

/// Writes `<request_id>.json` and, beside it, one label PGM per mask
/// artifact and one JSON file per detection artifact.
pub fn write_trace(execution: &Execution, dir: &Path) -> std::io::Result<()> {
    std::fs::create_dir_all(dir)?;
    let id = &execution.trace.request_id;
    let json = serde_json::to_string_pretty(&execution.trace).map_err(std::io::Error::from)?;
    std::fs::write(dir.join(format!("{id}.json")), json)?;
    for (key, value) in execution.store.iter() {
        match value {
            ResourceValue::Masks(m) => {
                m.to_labels().write_pgm(&dir.join(format!("{id}.{key}.pgm"))).map_err(|e| match e {
                    crate::raster::PgmError::Io(io) => io,
                    other => std::io::Error::other(other.to_string()),
                })?;
            }
            ResourceValue::Detections(d) => std::fs::write(dir.join(format!("{id}.{key}.detections.json")), d.to_json())?,
            _ => {}
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::planner::{rule_based_plan, Action};
    use crate::raster::LabelMask;
    use crate::scene::{BBox, Detection};

    fn scene() -> Scene {
        let mut labels = LabelMask::new(32, 32);
        for x in 0..32 {
            labels.set(x, 10, Category::ROAD_CLEAR.id());
        }
        let det = |x: f64| Detection { category: Category::VEHICLE, bbox: BBox::new(x, 0.0, x + 2.0, 2.0), score: 1.0 };
        Scene {
            scene_id: "s".into(),
            width: 32,
            height: 32,
            gsd: 0.5,
            mask_path: "mask.pgm".into(),
            detections_path: "detections.json".into(),
            labels,
            detections: DetectionSet::new(vec![det(0.0), det(5.0), det(10.0)]),
        }
    }

    fn request(rtype: RequestType) -> Request {
        Request {
            request_id: "r1".into(),
            scene_id: "s".into(),
            rtype,
            text: "q".into(),
            target_category: rtype.needs_category().then_some(Category::VEHICLE),
            endpoints: (rtype == RequestType::RescuePath).then_some([(0, 10), (31, 10)]),
        }
    }

    fn run(plan: &Plan, req: &Request) -> Execution {
        let reg = Registry::standard();
        let tools = ToolConfig::default();
        let ctx = ExecContext { registry: &reg, tools: &tools, summarizer: SummarizerMode::Template };
        execute_plan(plan, &scene(), req.into(), &ctx)
    }

    #[test]
    fn count_plan() {
        let req = request(RequestType::ObjCount);
        let ex = run(&rule_based_plan(&req), &req);
        assert_eq!(ex.trace.records.len(), 3);
        assert_eq!(ex.trace.final_answer.as_deref(), Some("3"));
        assert_eq!(ex.trace.status, ExecStatus::Completed);
        assert_eq!(ex.store.len(), 1 + 3);
    }

    #[test]
    fn segment_plan_yields_artifact() {
        let req = request(RequestType::Segment);
        let ex = run(&rule_based_plan(&req), &req);
        assert_eq!(ex.trace.records.len(), 1);
        assert!(matches!(ex.store.get("masks"), Some(ResourceValue::Masks(_))));
        assert_eq!(ex.trace.final_answer.as_deref(), Some(PERCEPTION_ACK));
    }

    #[test]
    fn path_plan() {
        let req = request(RequestType::RescuePath);
        let ex = run(&rule_based_plan(&req), &req);
        assert_eq!(ex.trace.final_answer.as_deref(), Some("yes; route length 15.50 meters"));
    }

    #[test]
    fn out_of_bounds_literal_fails_at_index() {
        let req = request(RequestType::RescuePath);
        let plan = Plan::new(vec![
            Action::new("semantic_segmentation", ["input_image"], ["m"]),
            Action::new("find_path", ["m", "0,10;99,10"], ["p"]),
            Action::new("summarize", ["p"], ["a"]),
        ]);
        let ex = run(&plan, &req);
        assert!(matches!(&ex.trace.status, ExecStatus::FailedAt { index: 1, error } if error.contains("outside")));
        assert_eq!(ex.trace.records.len(), 1);
        assert_eq!(ex.trace.final_answer, None);
    }

    #[test]
    fn qa_plan_without_summarize_has_no_answer() {
        let req = request(RequestType::ObjCount);
        let plan = Plan::new(vec![
            Action::new("object_detection", ["input_image"], ["d"]),
            Action::new("count_objects", ["d", "vehicle"], ["c"]),
        ]);
        let ex = run(&plan, &req);
        assert_eq!(ex.trace.status, ExecStatus::Completed);
        assert_eq!(ex.trace.final_answer, None);
    }

    #[test]
    fn resolve_rules() {
        let mut store = ResourceStore::seeded(4, 4);
        store.insert("seg1", ResourceValue::Masks(MaskSet::empty(4, 4))).unwrap();
        assert!(matches!(
            resolve_input("seg1", &store, InputKind::Resource(ValueKind::Masks)),
            Ok(Resolved::Resource(ResourceValue::Masks(_)))
        ));
        assert_eq!(resolve_input("water", &store, InputKind::CategoryLiteral), Ok(Resolved::Category(Category::WATER)));
        assert_eq!(
            resolve_input("12,34;56,78", &store, InputKind::PointPairLiteral),
            Ok(Resolved::Points((12, 34), (56, 78)))
        );
        assert!(matches!(resolve_input("1,2", &store, InputKind::PointPairLiteral), Err(ExecError::LiteralParseError { .. })));
        assert!(matches!(resolve_input("lava", &store, InputKind::CategoryLiteral), Err(ExecError::LiteralParseError { .. })));
        assert!(matches!(
            resolve_input("seg1", &store, InputKind::Resource(ValueKind::Detections)),
            Err(ExecError::KindMismatch { .. })
        ));
        assert!(matches!(
            resolve_input("nope", &store, InputKind::AnyResource),
            Err(ExecError::ResourceMissing(_))
        ));
    }

    #[test]
    fn store_is_write_once() {
        let mut store = ResourceStore::seeded(1, 1);
        assert!(matches!(store.insert(INPUT_IMAGE, ResourceValue::Count(1)), Err(ExecError::DuplicateResource(_))));
    }

    #[test]
    fn trace_files() {
        let dir = tempfile::tempdir().unwrap();
        let req = request(RequestType::Segment);
        let ex = run(&rule_based_plan(&req), &req);
        write_trace(&ex, dir.path()).unwrap();
        let json: serde_json::Value =
            serde_json::from_str(&std::fs::read_to_string(dir.path().join("r1.json")).unwrap()).unwrap();
        assert_eq!(json["status"], "completed");
        assert_eq!(json["plan"][0]["tool"], "semantic_segmentation");
        let labels = LabelMask::read_pgm(&dir.path().join("r1.masks.pgm")).unwrap();
        assert_eq!(labels, scene().labels);
    }
}
