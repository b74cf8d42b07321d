//! The six registered tools: perception (detection, segmentation) and
//! recognition (counting, area, path search, summarization).

mod path;
mod perception;
mod recognition;
mod summarize;

use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::llm::BackendError;
use crate::raster::Point;

pub use path::{find_path, path_cost_steps, snap_to_traversable, PathResult, SQRT_2};
pub use perception::{run_detection, run_segmentation};
pub use recognition::{compute_area, count_objects};
pub use summarize::{build_summary_prompt, summarize, ActionRecord, OutputSummary, SummarizerMode};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PerceptionMode {
    /// Perception outputs come straight from the scene's label files.
    #[default]
    Oracle,
    /// Perception outputs come from files exported by an external model
    /// runner under `adapter_dir/<scene_id>/`.
    Adapter,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ToolConfig {
    pub perception: PerceptionMode,
    pub adapter_dir: Option<PathBuf>,
    /// Overrides the mode's default detection score threshold.
    pub detection_threshold: Option<f64>,
    pub snap_radius: u32,
}

impl Default for ToolConfig {
    fn default() -> Self {
        Self { perception: PerceptionMode::Oracle, adapter_dir: None, detection_threshold: None, snap_radius: 10 }
    }
}

impl ToolConfig {
    pub fn detection_threshold(&self) -> f64 {
        self.detection_threshold.unwrap_or(match self.perception {
            PerceptionMode::Oracle => 0.0,
            PerceptionMode::Adapter => 0.5,
        })
    }

    pub fn validate(&self) -> Result<(), String> {
        if let Some(t) = self.detection_threshold {
            if !(0.0..=1.0).contains(&t) {
                return Err(format!("detection_threshold {t} outside [0, 1]"));
            }
        }
        if self.perception == PerceptionMode::Adapter && self.adapter_dir.is_none() {
            return Err("adapter perception needs adapter_dir".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ToolError {
    #[error("missing detections: {0}")]
    MissingDetections(String),
    #[error("missing mask: {0}")]
    MissingMask(String),
    #[error("unknown category `{0}`")]
    UnknownCategory(String),
    #[error("point {point:?} outside {width}x{height} image")]
    OutOfBounds { point: Point, width: u32, height: u32 },
    #[error("invalid perception artifact: {0}")]
    InvalidArtifact(String),
    #[error("no {0} result available to answer from")]
    MissingEvidence(&'static str),
    #[error(transparent)]
    Backend(#[from] BackendError),
}
