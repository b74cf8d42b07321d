//! Typed requests, ground-truth answers, and the JSON-lines requests file.

use std::fmt;
use std::io::{BufRead, Write};
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::category::{Category, CategoryKind};
use crate::raster::Point;

/// Final answer for detect/segment requests, whose results are artifacts.
pub const PERCEPTION_ACK: &str = "Task completed; results attached.";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum RequestType {
    #[serde(rename = "detect")]
    Detect,
    #[serde(rename = "segment")]
    Segment,
    #[serde(rename = "obj-existence")]
    ObjExistence,
    #[serde(rename = "obj-count")]
    ObjCount,
    #[serde(rename = "obj-area")]
    ObjArea,
    #[serde(rename = "dmg-existence")]
    DmgExistence,
    #[serde(rename = "dmg-count")]
    DmgCount,
    #[serde(rename = "dmg-area")]
    DmgArea,
    #[serde(rename = "rescue-path")]
    RescuePath,
}

/// Coarse grouping used for per-group reporting.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum AnswerGroup {
    Perception,
    Existence,
    Counting,
    Area,
    Path,
}

impl RequestType {
    pub const ALL: [RequestType; 9] = [
        RequestType::Detect,
        RequestType::Segment,
        RequestType::ObjExistence,
        RequestType::ObjCount,
        RequestType::ObjArea,
        RequestType::DmgExistence,
        RequestType::DmgCount,
        RequestType::DmgArea,
        RequestType::RescuePath,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            RequestType::Detect => "detect",
            RequestType::Segment => "segment",
            RequestType::ObjExistence => "obj-existence",
            RequestType::ObjCount => "obj-count",
            RequestType::ObjArea => "obj-area",
            RequestType::DmgExistence => "dmg-existence",
            RequestType::DmgCount => "dmg-count",
            RequestType::DmgArea => "dmg-area",
            RequestType::RescuePath => "rescue-path",
        }
    }

    pub fn group(self) -> AnswerGroup {
        match self {
            RequestType::Detect | RequestType::Segment => AnswerGroup::Perception,
            RequestType::ObjExistence | RequestType::DmgExistence => AnswerGroup::Existence,
            RequestType::ObjCount | RequestType::DmgCount => AnswerGroup::Counting,
            RequestType::ObjArea | RequestType::DmgArea => AnswerGroup::Area,
            RequestType::RescuePath => AnswerGroup::Path,
        }
    }

    pub fn is_qa(self) -> bool {
        self.group() != AnswerGroup::Perception
    }

    pub fn needs_category(self) -> bool {
        matches!(self.group(), AnswerGroup::Existence | AnswerGroup::Counting | AnswerGroup::Area)
    }

    /// Kind of category the request's target must be.
    pub fn category_kind(self) -> Option<CategoryKind> {
        match self {
            RequestType::ObjExistence | RequestType::ObjCount | RequestType::ObjArea => {
                Some(CategoryKind::Semantic)
            }
            RequestType::DmgExistence | RequestType::DmgCount | RequestType::DmgArea => {
                Some(CategoryKind::DamageLevel)
            }
            _ => None,
        }
    }
}

impl fmt::Display for RequestType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for RequestType {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        RequestType::ALL
            .into_iter()
            .find(|t| t.as_str() == s)
            .ok_or_else(|| format!("unknown request type `{s}`"))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Request {
    pub request_id: String,
    pub scene_id: String,
    #[serde(rename = "type")]
    pub rtype: RequestType,
    pub text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub target_category: Option<Category>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub endpoints: Option<[Point; 2]>,
}

impl Request {
    pub fn check(&self) -> Result<(), String> {
        if self.endpoints.is_some() != (self.rtype == RequestType::RescuePath) {
            return Err(format!("{}: endpoints must be present iff type is rescue-path", self.request_id));
        }
        match (self.rtype.category_kind(), self.target_category) {
            (Some(kind), Some(c)) if c.kind() != kind => {
                Err(format!("{}: category {c} does not fit request type {}", self.request_id, self.rtype))
            }
            (Some(_), None) => Err(format!("{}: {} requires a target category", self.request_id, self.rtype)),
            _ => Ok(()),
        }
    }
}

/// Ground-truth answer; the variant is fixed by the request type.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Answer {
    None,
    Bool(bool),
    Count(u64),
    Area(f64),
}

impl Answer {
    /// Renders the way the template summarizer would answer.
    pub fn render(&self) -> String {
        match self {
            Answer::None => PERCEPTION_ACK.to_string(),
            Answer::Bool(b) => yes_no(*b).to_string(),
            Answer::Count(n) => n.to_string(),
            Answer::Area(a) => format_area(*a),
        }
    }

    pub fn fits(&self, rtype: RequestType) -> bool {
        matches!(
            (rtype.group(), self),
            (AnswerGroup::Perception, Answer::None)
                | (AnswerGroup::Existence | AnswerGroup::Path, Answer::Bool(_))
                | (AnswerGroup::Counting, Answer::Count(_))
                | (AnswerGroup::Area, Answer::Area(_))
        )
    }

    /// Integral area values come back from JSON as counts.
    fn coerce_for(self, rtype: RequestType) -> Self {
        match (rtype.group(), self) {
            (AnswerGroup::Area, Answer::Count(n)) => Answer::Area(n as f64),
            _ => self,
        }
    }
}

pub fn yes_no(b: bool) -> &'static str {
    if b {
        "yes"
    } else {
        "no"
    }
}

pub fn format_area(square_meters: f64) -> String {
    format!("{square_meters:.2} square meters")
}

impl Serialize for Answer {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        match self {
            Answer::None => s.serialize_none(),
            Answer::Bool(b) => s.serialize_bool(*b),
            Answer::Count(n) => s.serialize_u64(*n),
            Answer::Area(a) => s.serialize_f64(*a),
        }
    }
}

impl<'de> Deserialize<'de> for Answer {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        use serde_json::Value;
        match Value::deserialize(d)? {
            Value::Null => Ok(Answer::None),
            Value::Bool(b) => Ok(Answer::Bool(b)),
            Value::Number(n) => match n.as_u64() {
                Some(c) => Ok(Answer::Count(c)),
                None => n.as_f64().map(Answer::Area).ok_or_else(|| serde::de::Error::custom("bad number")),
            },
            other => Err(serde::de::Error::custom(format!("unsupported answer {other}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub gt_plan: Vec<String>,
    pub gt_answer: Answer,
}

/// One line of `requests.jsonl`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RequestRecord {
    #[serde(flatten)]
    pub request: Request,
    #[serde(flatten)]
    pub truth: GroundTruth,
}

#[derive(Debug, thiserror::Error)]
pub enum RequestFileError {
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
}

pub fn read_requests(path: &Path) -> Result<Vec<RequestRecord>, RequestFileError> {
    let file = std::io::BufReader::new(std::fs::File::open(path)?);
    let mut out = Vec::new();
    for (i, line) in file.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let mut rec: RequestRecord = serde_json::from_str(&line)
            .map_err(|e| RequestFileError::Parse { line: i + 1, message: e.to_string() })?;
        rec.truth.gt_answer = rec.truth.gt_answer.coerce_for(rec.request.rtype);
        rec.request.check().map_err(|message| RequestFileError::Parse { line: i + 1, message })?;
        if !rec.truth.gt_answer.fits(rec.request.rtype) {
            return Err(RequestFileError::Parse {
                line: i + 1,
                message: format!("gt_answer does not fit type {}", rec.request.rtype),
            });
        }
        out.push(rec);
    }
    Ok(out)
}

pub fn write_requests(path: &Path, records: &[RequestRecord]) -> Result<(), RequestFileError> {
    let mut file = std::io::BufWriter::new(std::fs::File::create(path)?);
    for rec in records {
        serde_json::to_writer(&mut file, rec).map_err(std::io::Error::from)?;
        file.write_all(b"\n")?;
    }
    file.flush()?;
    Ok(())
}
