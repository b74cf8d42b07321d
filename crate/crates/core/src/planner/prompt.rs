use std::fmt::Write;

use super::plan::INPUT_IMAGE;
use super::registry::Registry;
use crate::category::Category;

pub const TASK_DEFINITION: &str = "### Task Definition\n\
You are the planning agent of a disaster-scene interpretation system. Given a user request about \
an aerial image of a disaster area, create an action plan: an ordered list of tool invocations \
whose results answer the request.";

/// Builds the planning prompt. Sections appear in a fixed order and the
/// request text is the final thing in the prompt.
pub fn build_plan_prompt(request_text: &str, image_size: (u32, u32), registry: &Registry) -> String {
    let mut p = String::new();
    p.push_str(TASK_DEFINITION);
    p.push_str("\n\n### Format Constraints\n");
    p.push_str(
        "Respond with an array of JSON objects, where each object is a single action. \
An action has the ID of the tool to use (\"tool\"), the identifiers of its inputs (\"inputs\") and \
fresh identifiers for its outputs (\"outputs\"). Every output identifier is a key under which the \
result is stored for later actions. Inputs are either identifiers defined earlier or literal values \
(category names, or point pairs written \"x1,y1;x2,y2\"). Answer questions by ending the plan with \
the summarize tool. You may reason first, but put the desired JSON at the end of your response.\n\
Example:\n[{\"tool\": \"semantic_segmentation\", \"inputs\": [\"input_image\"], \"outputs\": [\"seg1\"]}, \
{\"tool\": \"compute_area\", \"inputs\": [\"seg1\", \"water\"], \"outputs\": [\"area1\"]}, \
{\"tool\": \"summarize\", \"inputs\": [\"area1\"], \"outputs\": [\"answer\"]}]\n",
    );
    p.push_str("\n### Tool Descriptions\n");
    for tool in registry.tools() {
        p.push_str(&tool.describe());
        p.push('\n');
    }
    p.push_str("\n### Input Descriptions\n");
    let (w, h) = image_size;
    let _ = writeln!(p, "The input image has identifier \"{INPUT_IMAGE}\" and resolution {w}x{h} (width x height) pixels.");
    let names: Vec<&str> = Category::foreground().map(Category::name).collect();
    let _ = writeln!(p, "Valid category names: {}.", names.join(", "));
    p.push_str("Pixel coordinates start at the top-left corner, x to the right and y downward.\n");
    p.push_str("\n### User Request\n");
    p.push_str(request_text);
    p
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sections_in_order_and_request_last() {
        let text = "How many vehicles are there in the image?";
        let p = build_plan_prompt(text, (1024, 768), &Registry::standard());
        assert!(p.ends_with(text));
        let pos = |s: &str| p.find(s).unwrap();
        assert!(pos("### Task Definition") < pos("### Format Constraints"));
        assert!(pos("### Format Constraints") < pos("### Tool Descriptions"));
        assert!(pos("### Tool Descriptions") < pos("### Input Descriptions"));
        assert!(pos("### Input Descriptions") < pos("### User Request"));
        assert!(p.contains("put the desired JSON at the end"));
        assert!(p.contains("array of JSON objects"));
    }

    #[test]
    fn one_line_per_tool() {
        let p = build_plan_prompt("x", (8, 8), &Registry::standard());
        let tools = p.split("### Tool Descriptions\n").nth(1).unwrap().split("\n\n").next().unwrap();
        assert_eq!(tools.lines().filter(|l| l.starts_with("- ")).count(), 6);
    }

    #[test]
    fn input_description() {
        let p = build_plan_prompt("x", (1024, 768), &Registry::standard());
        let inputs = p.split("### Input Descriptions\n").nth(1).unwrap();
        assert!(inputs.contains("\"input_image\""));
        assert!(inputs.contains("1024x768"));
    }
}
