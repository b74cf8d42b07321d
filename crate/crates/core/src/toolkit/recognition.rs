use super::ToolError;
use crate::category::Category;
use crate::raster::MaskSet;
use crate::scene::DetectionSet;

fn foreground(name: &str) -> Result<Category, ToolError> {
    match Category::from_name(name) {
        Ok(c) if !c.is_background() => Ok(c),
        _ => Err(ToolError::UnknownCategory(name.to_string())),
    }
}

/// Number of detections of `category`. Overlapping boxes are not merged.
pub fn count_objects(dets: &DetectionSet, category: &str) -> Result<u64, ToolError> {
    let c = foreground(category)?;
    Ok(dets.items.iter().filter(|d| d.category == c).count() as u64)
}

/// Ground area in square meters: set pixels of the category's mask times
/// the squared ground sample distance. Absent categories cover 0 m².
pub fn compute_area(masks: &MaskSet, category: &str, gsd: f64) -> Result<f64, ToolError> {
    let c = foreground(category)?;
    let pixels = masks.get(c).map_or(0, |m| m.count());
    Ok(pixels as f64 * gsd * gsd)
}
