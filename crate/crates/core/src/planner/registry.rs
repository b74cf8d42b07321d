use std::fmt;
use std::str::FromStr;

use serde::Serialize;

/// Kind of value held in the resource store.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ValueKind {
    Image,
    Detections,
    Masks,
    Count,
    Area,
    Path,
    Text,
}

/// What a tool expects in one input slot.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum InputKind {
    Resource(ValueKind),
    AnyResource,
    CategoryLiteral,
    PointPairLiteral,
}

impl InputKind {
    pub fn is_resource(self) -> bool {
        matches!(self, InputKind::Resource(_) | InputKind::AnyResource)
    }

    pub fn accepts(self, kind: ValueKind) -> bool {
        match self {
            InputKind::Resource(k) => k == kind,
            InputKind::AnyResource => true,
            _ => false,
        }
    }

    fn describe(self) -> &'static str {
        match self {
            InputKind::Resource(ValueKind::Image) => "image resource id",
            InputKind::Resource(ValueKind::Detections) => "detection result resource id",
            InputKind::Resource(ValueKind::Masks) => "segmentation result resource id",
            InputKind::Resource(_) => "resource id",
            InputKind::AnyResource => "resource id of any earlier result",
            InputKind::CategoryLiteral => "category name",
            InputKind::PointPairLiteral => "point pair \"x1,y1;x2,y2\"",
        }
    }
}

/// The six built-in tools.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub enum ToolKind {
    ObjectDetection,
    SemanticSegmentation,
    CountObjects,
    ComputeArea,
    FindPath,
    Summarize,
}

impl ToolKind {
    pub const ALL: [ToolKind; 6] = [
        ToolKind::ObjectDetection,
        ToolKind::SemanticSegmentation,
        ToolKind::CountObjects,
        ToolKind::ComputeArea,
        ToolKind::FindPath,
        ToolKind::Summarize,
    ];

    pub fn id(self) -> &'static str {
        match self {
            ToolKind::ObjectDetection => "object_detection",
            ToolKind::SemanticSegmentation => "semantic_segmentation",
            ToolKind::CountObjects => "count_objects",
            ToolKind::ComputeArea => "compute_area",
            ToolKind::FindPath => "find_path",
            ToolKind::Summarize => "summarize",
        }
    }

    pub fn is_perception(self) -> bool {
        matches!(self, ToolKind::ObjectDetection | ToolKind::SemanticSegmentation)
    }

    pub fn spec(self) -> ToolSpec {
        use InputKind::*;
        let (description, inputs, output) = match self {
            ToolKind::ObjectDetection => (
                "Detects objects in the image and returns a list of items, each with a category and a bounding box.",
                vec![Resource(ValueKind::Image)],
                ValueKind::Detections,
            ),
            ToolKind::SemanticSegmentation => (
                "Segments the image and returns one binary mask per category present in the scene.",
                vec![Resource(ValueKind::Image)],
                ValueKind::Masks,
            ),
            ToolKind::CountObjects => (
                "Counts the detected objects of the given category.",
                vec![Resource(ValueKind::Detections), CategoryLiteral],
                ValueKind::Count,
            ),
            ToolKind::ComputeArea => (
                "Computes the ground area in square meters covered by the given category in a segmentation result. An area of zero means the category is absent.",
                vec![Resource(ValueKind::Masks), CategoryLiteral],
                ValueKind::Area,
            ),
            ToolKind::FindPath => (
                "Uses A* search over clear-road pixels of a segmentation result to decide whether a route exists between two points.",
                vec![Resource(ValueKind::Masks), PointPairLiteral],
                ValueKind::Path,
            ),
            ToolKind::Summarize => (
                "Writes the final answer to the user request from the results of earlier actions.",
                vec![AnyResource],
                ValueKind::Text,
            ),
        };
        ToolSpec {
            tool_id: self.id().to_string(),
            description: description.to_string(),
            inputs,
            variadic_tail: self == ToolKind::Summarize,
            outputs: vec![output],
        }
    }
}

impl fmt::Display for ToolKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.id())
    }
}

impl FromStr for ToolKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        ToolKind::ALL.into_iter().find(|t| t.id() == s).ok_or_else(|| format!("unknown tool `{s}`"))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ToolSpec {
    pub tool_id: String,
    pub description: String,
    pub inputs: Vec<InputKind>,
    /// The last input kind may repeat one or more times.
    pub variadic_tail: bool,
    pub outputs: Vec<ValueKind>,
}

impl ToolSpec {
    pub fn accepts_arity(&self, n: usize) -> bool {
        if self.variadic_tail {
            n >= self.inputs.len()
        } else {
            n == self.inputs.len()
        }
    }

    pub fn input_kind(&self, position: usize) -> Option<InputKind> {
        self.inputs.get(position).copied().or_else(|| {
            if self.variadic_tail {
                self.inputs.last().copied()
            } else {
                None
            }
        })
    }

    pub fn describe(&self) -> String {
        let inputs: Vec<_> = self.inputs.iter().map(|k| k.describe()).collect();
        let mut inputs = inputs.join(", ");
        if self.variadic_tail {
            inputs.push_str(", ...");
        }
        let outputs: Vec<_> = self
            .outputs
            .iter()
            .map(|k| serde_json::to_value(k).ok().and_then(|v| v.as_str().map(str::to_string)).unwrap_or_default())
            .collect();
        format!(
            "- {}: {} Inputs ({}{}): {}. Outputs ({}): {}.",
            self.tool_id,
            self.description,
            self.inputs.len(),
            if self.variadic_tail { " or more" } else { "" },
            inputs,
            self.outputs.len(),
            outputs.join(", ")
        )
    }
}

impl ToolSpec {
    fn with_id(mut self, id: &str) -> Self {
        self.tool_id = id.to_string();
        self
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum RegistryError {
    #[error("registry is empty")]
    Empty,
    #[error("duplicate tool id `{0}`")]
    Duplicate(String),
    #[error("tool ids `{a}` and `{b}` are only {distance} edits apart (need {required})")]
    TooClose { a: String, b: String, distance: usize, required: usize },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Registry {
    tools: Vec<ToolSpec>,
}

impl Registry {
    /// Ids are lower-cased and must be pairwise at least `min_separation`
    /// edits apart so typo repair can never cross-correct.
    pub fn new(tools: Vec<ToolSpec>, min_separation: usize) -> Result<Self, RegistryError> {
        if tools.is_empty() {
            return Err(RegistryError::Empty);
        }
        let tools: Vec<ToolSpec> = tools
            .into_iter()
            .map(|t| {
                let id = t.tool_id.to_lowercase();
                t.with_id(&id)
            })
            .collect();
        for (i, a) in tools.iter().enumerate() {
            for b in &tools[i + 1..] {
                if a.tool_id == b.tool_id {
                    return Err(RegistryError::Duplicate(a.tool_id.clone()));
                }
                let distance = levenshtein(&a.tool_id, &b.tool_id);
                if distance < min_separation {
                    return Err(RegistryError::TooClose {
                        a: a.tool_id.clone(),
                        b: b.tool_id.clone(),
                        distance,
                        required: min_separation,
                    });
                }
            }
        }
        Ok(Self { tools })
    }

    pub fn standard() -> Self {
        Self::new(ToolKind::ALL.iter().map(|t| t.spec()).collect(), 8).expect("built-in registry is well separated")
    }

    pub fn tools(&self) -> &[ToolSpec] {
        &self.tools
    }

    pub fn get(&self, id: &str) -> Option<&ToolSpec> {
        self.tools.iter().find(|t| t.tool_id == id)
    }

    pub fn len(&self) -> usize {
        self.tools.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tools.is_empty()
    }

    /// Closest registry id to `candidate` by edit distance; ties go to the
    /// earlier registry entry.
    pub fn closest(&self, candidate: &str) -> (&ToolSpec, usize) {
        closest_match(candidate, self.tools.iter(), |t| &t.tool_id).expect("registry is non-empty")
    }
}

/// Minimum-distance candidate, first one wins ties.
pub fn closest_match<'a, T>(
    needle: &str,
    candidates: impl IntoIterator<Item = &'a T>,
    key: impl Fn(&T) -> &str,
) -> Option<(&'a T, usize)>
where
    T: ?Sized + 'a,
{
    let mut best: Option<(&'a T, usize)> = None;
    for c in candidates {
        let d = levenshtein(needle, key(c));
        if best.is_none_or(|(_, bd)| d < bd) {
            best = Some((c, d));
        }
    }
    best
}

/// Levenshtein distance over Unicode scalar values (unit-cost insert,
/// delete, substitute).
pub fn levenshtein(a: &str, b: &str) -> usize {
    let a: Vec<char> = a.chars().collect();
    let b: Vec<char> = b.chars().collect();
    if a.is_empty() {
        return b.len();
    }
    let mut prev: Vec<usize> = (0..=b.len()).collect();
    let mut cur = vec![0; b.len() + 1];
    for (i, ca) in a.iter().enumerate() {
        cur[0] = i + 1;
        for (j, cb) in b.iter().enumerate() {
            let sub = prev[j] + usize::from(ca != cb);
            cur[j + 1] = sub.min(prev[j + 1] + 1).min(cur[j] + 1);
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}
