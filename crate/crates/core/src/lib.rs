//! Agent orchestration and evaluation for disaster-scene interpretation.
//!
//! A request about an aerial scene is turned into a plan of tool calls
//! ([`planner`]), the plan is executed against the scene ([`executor`],
//! [`toolkit`]), and runs are scored for planning and answer accuracy
//! ([`eval`]). [`synth`] generates deterministic benchmark scenes with
//! exact ground truth.

pub mod category;
pub mod eval;
pub mod executor;
pub mod llm;
pub mod par;
pub mod planner;
pub mod raster;
pub mod request;
pub mod scene;
pub mod synth;
pub mod toolkit;

pub use category::{category_lookup, Category, CategoryInfo, CategoryKind};
pub use raster::{BinaryMask, LabelMask, MaskSet, Point};
pub use request::{Answer, GroundTruth, Request, RequestRecord, RequestType};
pub use scene::{load_scene, validate_scene, write_scene, Detection, DetectionSet, Scene};
