use serde::{Deserialize, Serialize};

/// Reserved id of the scene image in every resource store.
pub const INPUT_IMAGE: &str = "input_image";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Action {
    pub tool: String,
    pub inputs: Vec<String>,
    pub outputs: Vec<String>,
}

impl Action {
    pub fn new<I, O>(tool: &str, inputs: I, outputs: O) -> Self
    where
        I: IntoIterator,
        I::Item: Into<String>,
        O: IntoIterator,
        O::Item: Into<String>,
    {
        Self {
            tool: tool.to_string(),
            inputs: inputs.into_iter().map(Into::into).collect(),
            outputs: outputs.into_iter().map(Into::into).collect(),
        }
    }
}

/// Ordered list of actions. Serializes as the bare JSON array.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Plan {
    pub actions: Vec<Action>,
}

impl Plan {
    pub fn new(actions: Vec<Action>) -> Self {
        Self { actions }
    }

    pub fn len(&self) -> usize {
        self.actions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.actions.is_empty()
    }

    pub fn tool_ids(&self) -> Vec<String> {
        self.actions.iter().map(|a| a.tool.clone()).collect()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("plan serialize")
    }
}
