use std::path::PathBuf;

use super::{PerceptionMode, ToolConfig, ToolError};
use crate::raster::{LabelMask, MaskSet};
use crate::scene::{load_detections, validate_detections, DetectionSet, Scene, SceneError};

fn adapter_file(scene: &Scene, config: &ToolConfig, name: &str) -> PathBuf {
    config.adapter_dir.clone().unwrap_or_default().join(&scene.scene_id).join(name)
}

/// Detections filtered by the configured score threshold.
pub fn run_detection(scene: &Scene, config: &ToolConfig) -> Result<DetectionSet, ToolError> {
    let threshold = config.detection_threshold();
    match config.perception {
        PerceptionMode::Oracle => Ok(scene.detections.filter_score(threshold)),
        PerceptionMode::Adapter => {
            let path = adapter_file(scene, config, "detections.json");
            let dets = load_detections(&path).map_err(|e| match e {
                SceneError::MissingFile(p) => ToolError::MissingDetections(p.display().to_string()),
                other => ToolError::InvalidArtifact(other.to_string()),
            })?;
            if let Some(f) = validate_detections(&dets, scene.width, scene.height).first() {
                return Err(ToolError::InvalidArtifact(f.to_string()));
            }
            Ok(dets.filter_score(threshold))
        }
    }
}

/// One binary mask per foreground category present in the label raster.
pub fn run_segmentation(scene: &Scene, config: &ToolConfig) -> Result<MaskSet, ToolError> {
    match config.perception {
        PerceptionMode::Oracle => Ok(MaskSet::from_labels(&scene.labels)),
        PerceptionMode::Adapter => {
            let path = adapter_file(scene, config, "mask.pgm");
            if !path.exists() {
                return Err(ToolError::MissingMask(path.display().to_string()));
            }
            let labels = LabelMask::read_pgm(&path).map_err(|e| ToolError::InvalidArtifact(e.to_string()))?;
            if (labels.width(), labels.height()) != (scene.width, scene.height) {
                return Err(ToolError::InvalidArtifact(format!(
                    "adapter mask is {}x{}, scene is {}x{}",
                    labels.width(),
                    labels.height(),
                    scene.width,
                    scene.height
                )));
            }
            Ok(MaskSet::from_labels(&labels))
        }
    }
}
