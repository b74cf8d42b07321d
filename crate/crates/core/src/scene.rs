//! Scenes on disk: manifest, label mask, detections, and invariant checks.

use std::fmt;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::category::{Category, UnknownCategory};
use crate::raster::{LabelMask, MaskSet, PgmError};

/// Axis-aligned box `[x1, y1, x2, y2]` in pixels, half-open on the far edges.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct BBox(pub [f64; 4]);

impl BBox {
    pub fn new(x1: f64, y1: f64, x2: f64, y2: f64) -> Self {
        BBox([x1, y1, x2, y2])
    }

    pub fn x1(&self) -> f64 {
        self.0[0]
    }
    pub fn y1(&self) -> f64 {
        self.0[1]
    }
    pub fn x2(&self) -> f64 {
        self.0[2]
    }
    pub fn y2(&self) -> f64 {
        self.0[3]
    }

    pub fn area(&self) -> f64 {
        (self.x2() - self.x1()).max(0.0) * (self.y2() - self.y1()).max(0.0)
    }

    pub fn iou(&self, other: &BBox) -> f64 {
        let iw = (self.x2().min(other.x2()) - self.x1().max(other.x1())).max(0.0);
        let ih = (self.y2().min(other.y2()) - self.y1().max(other.y1())).max(0.0);
        let inter = iw * ih;
        let union = self.area() + other.area() - inter;
        if union > 0.0 {
            inter / union
        } else {
            0.0
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Detection {
    pub category: Category,
    pub bbox: BBox,
    pub score: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct DetectionSet {
    pub items: Vec<Detection>,
}

impl DetectionSet {
    pub fn new(items: Vec<Detection>) -> Self {
        Self { items }
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn filter_score(&self, threshold: f64) -> DetectionSet {
        DetectionSet { items: self.items.iter().filter(|d| d.score >= threshold).cloned().collect() }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("detections serialize")
    }
}

#[derive(Debug, thiserror::Error)]
pub enum SceneError {
    #[error("missing file {0}")]
    MissingFile(PathBuf),
    #[error("malformed manifest: {0}")]
    MalformedManifest(String),
    #[error("malformed mask: {0}")]
    MalformedMask(PgmError),
    #[error("malformed detections: {0}")]
    MalformedDetections(String),
    #[error("dimension mismatch: manifest says {expected:?}, mask is {actual:?}")]
    DimensionMismatch { expected: (u32, u32), actual: (u32, u32) },
    #[error("unknown category id: {0}")]
    UnknownCategoryId(String),
    #[error("scene fails validation: {0:?}")]
    Invalid(Vec<Finding>),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

/// On-disk manifest; paths are relative to the manifest's directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub scene_id: String,
    pub width: u32,
    pub height: u32,
    pub gsd_m_per_px: f64,
    pub mask: PathBuf,
    pub detections: PathBuf,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scene {
    pub scene_id: String,
    pub width: u32,
    pub height: u32,
    /// Ground sample distance in meters per pixel.
    pub gsd: f64,
    pub mask_path: PathBuf,
    pub detections_path: PathBuf,
    pub labels: LabelMask,
    pub detections: DetectionSet,
}

impl Scene {
    pub fn masks(&self) -> MaskSet {
        MaskSet::from_labels(&self.labels)
    }

    pub fn manifest(&self) -> Manifest {
        Manifest {
            scene_id: self.scene_id.clone(),
            width: self.width,
            height: self.height,
            gsd_m_per_px: self.gsd,
            mask: self.mask_path.clone(),
            detections: self.detections_path.clone(),
        }
    }
}

fn read_file(path: &Path) -> Result<Vec<u8>, SceneError> {
    std::fs::read(path).map_err(|e| match e.kind() {
        std::io::ErrorKind::NotFound => SceneError::MissingFile(path.to_path_buf()),
        _ => SceneError::Io(e),
    })
}

pub fn parse_detections(bytes: &[u8]) -> Result<DetectionSet, SceneError> {
    // Parse loosely first so unknown names surface as their own error.
    #[derive(Deserialize)]
    struct RawItem {
        category: String,
        bbox: BBox,
        score: f64,
    }
    let raw: Vec<RawItem> =
        serde_json::from_slice(bytes).map_err(|e| SceneError::MalformedDetections(e.to_string()))?;
    let items = raw
        .into_iter()
        .map(|r| {
            let category = Category::from_name(&r.category)
                .map_err(|UnknownCategory(name)| SceneError::UnknownCategoryId(name))?;
            Ok(Detection { category, bbox: r.bbox, score: r.score })
        })
        .collect::<Result<_, SceneError>>()?;
    Ok(DetectionSet { items })
}

pub fn load_detections(path: &Path) -> Result<DetectionSet, SceneError> {
    parse_detections(&read_file(path)?)
}

pub fn load_scene(manifest_path: &Path) -> Result<Scene, SceneError> {
    let bytes = read_file(manifest_path)?;
    let manifest: Manifest =
        serde_json::from_slice(&bytes).map_err(|e| SceneError::MalformedManifest(e.to_string()))?;
    if !manifest.gsd_m_per_px.is_finite() || manifest.gsd_m_per_px <= 0.0 {
        return Err(SceneError::MalformedManifest(format!(
            "gsd_m_per_px must be finite and positive, got {}",
            manifest.gsd_m_per_px
        )));
    }
    if manifest.width == 0 || manifest.height == 0 {
        return Err(SceneError::MalformedManifest("width and height must be positive".into()));
    }
    let base = manifest_path.parent().unwrap_or_else(|| Path::new("."));
    let mask_bytes = read_file(&base.join(&manifest.mask))?;
    let labels = LabelMask::decode_pgm(&mask_bytes).map_err(SceneError::MalformedMask)?;
    let detections = load_detections(&base.join(&manifest.detections))?;
    let scene = Scene {
        scene_id: manifest.scene_id,
        width: manifest.width,
        height: manifest.height,
        gsd: manifest.gsd_m_per_px,
        mask_path: manifest.mask,
        detections_path: manifest.detections,
        labels,
        detections,
    };
    let report = validate_scene(&scene);
    if let Some(f) = report.findings.first() {
        return Err(match f {
            Finding::DimensionMismatch { expected, actual } => {
                SceneError::DimensionMismatch { expected: *expected, actual: *actual }
            }
            Finding::UnknownCategoryId { value, .. } => SceneError::UnknownCategoryId(value.to_string()),
            _ => SceneError::Invalid(report.findings),
        });
    }
    Ok(scene)
}

/// Writes manifest, mask and detections under `dir` using the scene's
/// relative paths. Returns the manifest path.
pub fn write_scene(scene: &Scene, dir: &Path) -> Result<PathBuf, SceneError> {
    std::fs::create_dir_all(dir)?;
    scene.labels.write_pgm(&dir.join(&scene.mask_path)).map_err(SceneError::MalformedMask)?;
    std::fs::write(dir.join(&scene.detections_path), scene.detections.to_json())?;
    let manifest_path = dir.join("manifest.json");
    let manifest = serde_json::to_string_pretty(&scene.manifest()).expect("manifest serialize");
    std::fs::write(&manifest_path, manifest)?;
    Ok(manifest_path)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "finding", rename_all = "snake_case")]
pub enum Finding {
    NonPositiveGsd { gsd: f64 },
    DimensionMismatch { expected: (u32, u32), actual: (u32, u32) },
    UnknownCategoryId { value: u8, pixels: u64 },
    DegenerateBbox { index: usize },
    BboxOutOfBounds { index: usize },
    ScoreOutOfRange { index: usize, score: f64 },
    BackgroundDetection { index: usize },
}

impl fmt::Display for Finding {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Finding::NonPositiveGsd { gsd } => write!(f, "non-positive gsd {gsd}"),
            Finding::DimensionMismatch { expected, actual } => {
                write!(f, "dimension mismatch: expected {expected:?}, found {actual:?}")
            }
            Finding::UnknownCategoryId { value, pixels } => {
                write!(f, "unknown category id {value} ({pixels} pixels)")
            }
            Finding::DegenerateBbox { index } => write!(f, "degenerate bbox at detection {index}"),
            Finding::BboxOutOfBounds { index } => write!(f, "bbox out of bounds at detection {index}"),
            Finding::ScoreOutOfRange { index, score } => {
                write!(f, "score {score} out of [0,1] at detection {index}")
            }
            Finding::BackgroundDetection { index } => write!(f, "background detection at {index}"),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct ValidationReport {
    pub findings: Vec<Finding>,
}

impl ValidationReport {
    pub fn is_clean(&self) -> bool {
        self.findings.is_empty()
    }
}

pub fn validate_detections(dets: &DetectionSet, width: u32, height: u32) -> Vec<Finding> {
    let (w, h) = (width as f64, height as f64);
    let mut findings = Vec::new();
    for (index, d) in dets.items.iter().enumerate() {
        let [x1, y1, x2, y2] = d.bbox.0;
        if d.category.is_background() {
            findings.push(Finding::BackgroundDetection { index });
        }
        if !(x1 < x2 && y1 < y2) {
            findings.push(Finding::DegenerateBbox { index });
        }
        if !(x1 >= 0.0 && y1 >= 0.0 && x2 <= w && y2 <= h) {
            findings.push(Finding::BboxOutOfBounds { index });
        }
        if !(0.0..=1.0).contains(&d.score) {
            findings.push(Finding::ScoreOutOfRange { index, score: d.score });
        }
    }
    findings
}

pub fn validate_scene(scene: &Scene) -> ValidationReport {
    let mut findings = Vec::new();
    if !scene.gsd.is_finite() || scene.gsd <= 0.0 {
        findings.push(Finding::NonPositiveGsd { gsd: scene.gsd });
    }
    let actual = (scene.labels.width(), scene.labels.height());
    if actual != (scene.width, scene.height) {
        findings.push(Finding::DimensionMismatch { expected: (scene.width, scene.height), actual });
    }
    let hist = scene.labels.histogram();
    for (value, &pixels) in hist.iter().enumerate() {
        if pixels > 0 && Category::from_id(value as u8).is_err() {
            findings.push(Finding::UnknownCategoryId { value: value as u8, pixels });
        }
    }
    findings.extend(validate_detections(&scene.detections, scene.width, scene.height));
    ValidationReport { findings }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny_scene() -> Scene {
        let mut labels = LabelMask::new(64, 64);
        for x in 0..10 {
            labels.set(x, 0, Category::WATER.id());
        }
        Scene {
            scene_id: "t".into(),
            width: 64,
            height: 64,
            gsd: 0.5,
            mask_path: "mask.pgm".into(),
            detections_path: "detections.json".into(),
            labels,
            detections: DetectionSet::new(vec![Detection {
                category: Category::VEHICLE,
                bbox: BBox::new(1.0, 1.0, 4.0, 6.0),
                score: 1.0,
            }]),
        }
    }

    #[test]
    fn write_then_load_is_identity() {
        let dir = tempfile::tempdir().unwrap();
        let scene = tiny_scene();
        let manifest = write_scene(&scene, dir.path()).unwrap();
        let loaded = load_scene(&manifest).unwrap();
        assert_eq!(loaded, scene);
        let mask_bytes = std::fs::read(dir.path().join("mask.pgm")).unwrap();
        assert_eq!(mask_bytes, scene.labels.encode_pgm());
    }

    #[test]
    fn zero_gsd_is_malformed() {
        let dir = tempfile::tempdir().unwrap();
        let mut scene = tiny_scene();
        scene.gsd = 0.0;
        let manifest = write_scene(&scene, dir.path()).unwrap();
        assert!(matches!(load_scene(&manifest), Err(SceneError::MalformedManifest(_))));
    }

    #[test]
    fn missing_manifest_and_mask() {
        let dir = tempfile::tempdir().unwrap();
        assert!(matches!(load_scene(&dir.path().join("nope.json")), Err(SceneError::MissingFile(_))));
        let manifest = write_scene(&tiny_scene(), dir.path()).unwrap();
        std::fs::remove_file(dir.path().join("mask.pgm")).unwrap();
        assert!(matches!(load_scene(&manifest), Err(SceneError::MissingFile(_))));
    }

    #[test]
    fn dimension_mismatch_on_load() {
        let dir = tempfile::tempdir().unwrap();
        let mut scene = tiny_scene();
        scene.width = 32;
        let manifest = write_scene(&scene, dir.path()).unwrap();
        assert!(matches!(load_scene(&manifest), Err(SceneError::DimensionMismatch { .. })));
    }

    #[test]
    fn unknown_detection_category_on_load() {
        let dir = tempfile::tempdir().unwrap();
        let manifest = write_scene(&tiny_scene(), dir.path()).unwrap();
        std::fs::write(
            dir.path().join("detections.json"),
            r#"[{"category":"dragon","bbox":[0,0,1,1],"score":1.0}]"#,
        )
        .unwrap();
        assert!(matches!(load_scene(&manifest), Err(SceneError::UnknownCategoryId(n)) if n == "dragon"));
    }

    #[test]
    fn validation_findings() {
        let scene = tiny_scene();
        assert!(validate_scene(&scene).is_clean());

        let mut bad = scene.clone();
        bad.detections.items[0].bbox = BBox::new(3.0, 1.0, 3.0, 6.0);
        let report = validate_scene(&bad);
        assert_eq!(report.findings, vec![Finding::DegenerateBbox { index: 0 }]);
        assert!(report.findings[0].to_string().contains("degenerate bbox"));

        let mut bad = scene.clone();
        bad.labels.set(5, 5, 99);
        let report = validate_scene(&bad);
        assert_eq!(report.findings, vec![Finding::UnknownCategoryId { value: 99, pixels: 1 }]);
        assert!(report.findings[0].to_string().contains("unknown category id"));

        let mut bad = scene;
        bad.detections.items[0].bbox = BBox::new(60.0, 1.0, 65.0, 6.0);
        bad.detections.items[0].score = 1.5;
        assert_eq!(validate_scene(&bad).findings.len(), 2);
    }

    #[test]
    fn bbox_iou() {
        let a = BBox::new(0.0, 0.0, 2.0, 2.0);
        let b = BBox::new(1.0, 0.0, 3.0, 2.0);
        assert!((a.iou(&b) - 1.0 / 3.0).abs() < 1e-12);
        assert_eq!(a.iou(&BBox::new(5.0, 5.0, 6.0, 6.0)), 0.0);
    }
}
