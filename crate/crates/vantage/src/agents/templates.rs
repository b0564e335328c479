//! Prompt templates and rendering.
//!
//! Bodies are fixed text with `{{name}}` slots. The question, when present,
//! is prepended as a `Question:` block so it sits above the instructions the
//! same way the input image does. The reasoning templates (perspective,
//! coordinates, answer, direct parameters) share one system prompt; the
//! extraction and baseline templates run without one.

use serde::{Deserialize, Serialize};

use super::{AgentError, AgentMessage, Role};

/// Identifies one of the six wire templates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum TemplateId {
    #[serde(rename = "P1_extract")]
    P1Extract,
    #[serde(rename = "P2_perspective")]
    P2Perspective,
    #[serde(rename = "P3_coords")]
    P3Coords,
    #[serde(rename = "P4_answer")]
    P4Answer,
    #[serde(rename = "P5_baseline")]
    P5Baseline,
    #[serde(rename = "P6_direct_params")]
    P6DirectParams,
}

impl TemplateId {
    pub fn as_str(&self) -> &'static str {
        match self {
            TemplateId::P1Extract => "P1_extract",
            TemplateId::P2Perspective => "P2_perspective",
            TemplateId::P3Coords => "P3_coords",
            TemplateId::P4Answer => "P4_answer",
            TemplateId::P5Baseline => "P5_baseline",
            TemplateId::P6DirectParams => "P6_direct_params",
        }
    }
}

impl std::fmt::Display for TemplateId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// System prompt shared by the perspective-transformation templates.
pub const REASONING_SYSTEM_PROMPT: &str = "\
Assume you are an expert with 3D spatial reasoning capabilities.

Your final goal is to correctly answer questions involving spatial understanding.

To help you solve these problems, I have broken the solution process into several steps.

Please follow my instructions strictly step by step, and put your answers inside the specified tags according to the required format.";

/// Sentinel injected into the knowledge slot when the knowledge base is
/// disabled.
pub const EMPTY_KB_SENTINEL: &str = "(no reference knowledge available)";

const P1_BODY: &str = "\
You are required to generate a structured JSON output for the subsequent 3D reconstruction tasks, based on the provided original image and the related question. Please strictly adhere to the following rules:

1. Keywords: Extract the core keywords directly from the question, retaining them in the original form.
2. Abbreviated keywords: Abbreviate the phrases in the keywords, retaining only the core nouns.
3. Expanded keywords: Based on an observation of the original image, generate distinct expanded descriptions from the following three perspectives:
   - Positional relationship: Describe the position of the object in the image (e.g., left, center, top) and the relative position to other objects or people in the scene (e.g., in front of ..., to the right of ..., occluded by ...).
   - Appearance features: Supplement the visual details such as the color, shape, material, and components of the object.
   - Synonym relationship: Use alternative synonyms or related concepts to describe the objects identified in the keywords.

Output format is as follows:
{
    \"Keywords\": [..., ..., ...],
    \"Abbreviated keywords\": [..., ..., ...],
    \"Expanded keywords\": [..., ..., ...]
}";

const P2_BODY: &str = "\
Input above: An original image, along with a question regarding the spatial understanding of the image.

Requirement: Based on the provided knowledge from the experience library and independent judgment, select the viewpoint position that is most conducive to answering the question.
The viewpoint position refers to the space in all directions around the center, with the scene in the image acting as the observation center.
Examples: behind a specific object, a position where the objects relevant to the question can be observed simultaneously, a top-down view of the scene, etc.

Knowledge from the library:
{{knowledge}}

Output json format requirement:
{
    \"Think\": ...,
    \"Perspective\": ...
}

Where:
1. The \"Think\" tag should contain the reasoning for selecting the viewpoint position. If similar problems and the corresponding viewpoint selections can be found in the experience library, please refer to them; otherwise, based on independent understanding and imagination, analyze the scene expected from different viewpoints and determine whether this scene can directly answer the question, thereby selecting the optimal viewpoint position.
2. The \"Perspective\" tag should contain a brief description of the selected viewpoint position.";

const P3_BODY: &str = "\
Input above: The first image is a top-down XY plane coordinate map of the 3D scene for the objects relevant to the question, which are extracted from the original image. The red line represents the X-axis, the green line represents the Y-axis, and the central position is the point (0, 0). The interval between any two parallel lines is 0.5. The white numbers on the principal axes indicate the values of the coordinates represented by the corresponding lines. The second image is a side view of the scene, displaying the vertical plane of the 3D scene. The end of the blue line marks the position of the camera, and the blue line represents the viewing line of the camera (i.e., from the end to the center). Different blue lines correspond to different angle values (pitch angles). The white numbers on the blue lines indicate the pitch angle represented by the respective line.

Requirements: Based on the perspective position description output in the previous round (i.e., {{perspective}}) and the evaluation of the new coordinate map, select the coordinates that match the described position, including the XY plane coordinates and the pitch angle, in order to look toward the center from these coordinates.

Notes:
1. The selected XY plane coordinates should not be located inside the object (e.g., [0, 0]), but rather outside the object at a distance of approximately one empty grid interval.
2. The value range of the pitch angle is [-90, 90].

Output json format requirements:
{
    \"Think\": ...,
    \"Coords\": [x, y, pitch]
}

Where:
1. The \"Think\" tag must include the sequential observation results of the plane coordinate map and the side view (i.e., state the coordinate position of each object). Select the coordinates in the plane map and the side view that match the description of the perspective position and the sequential requirements based on the observation results.
2. The \"Coords\" tag must contain the selected coordinate position.";

const P4_BODY: &str = "\
Input above: The last image is a perspective transformation image captured from the selected perspective position.

Requirements: Based on all the obtained images, provide the observations and the reasoning analysis for the question regarding the original image, and finally derive the answer.

Notes: Please analyze the final perspective transformation image and judge whether the following conditions are met in sequence. If any condition is not met, output the answer as \"None\":
1. All objects related to the question are present in the frame;
2. The displayed perspective is consistent with the perspective description obtained in Step 1 (i.e., {{perspective}});
3. There is no issue of incomplete display or overly small display regarding the objects. (Partial occlusion between objects is permitted.)

Output json format requirements:
{
    \"Observation\": ...,
    \"Reasoning\": ...,
    \"Answer\": ...
}

Where:
1. The \"Observation\" tag includes the observations of the original image, the plane coordinate map, the side view, and the perspective transformation image, providing a visual description related to the question for each image respectively.
2. The \"Reasoning\" tag includes the solution process for the question based on the observations, analyzes whether the perspective images meet all the aforementioned requirements and conditions, and finally infers the answer to the question.
3. The \"Answer\" tag contains the final answer to the question; output only \"None\" if any of the aforementioned conditions are not met upon analysis.";

// Variant without the verification conditions, used when view reselection is
// disabled: the first rendered view's answer is final.
const P4_BODY_NO_CONDITIONS: &str = "\
Input above: The last image is a perspective transformation image captured from the selected perspective position.

Requirements: Based on all the obtained images, provide the observations and the reasoning analysis for the question regarding the original image, and finally derive the answer.

Output json format requirements:
{
    \"Observation\": ...,
    \"Reasoning\": ...,
    \"Answer\": ...
}

Where:
1. The \"Observation\" tag includes the observations of the original image and the perspective transformation image, providing a visual description related to the question for each image respectively.
2. The \"Reasoning\" tag includes the solution process for the question based on the observations, and finally infers the answer to the question.
3. The \"Answer\" tag contains the final answer to the question.";

const P5_BODY: &str = "\
Please answer the question based on the image provided. You are required to generate a structured JSON output. Please strictly follow the rules below:

1. Reasoning: Briefly explain your reasoning.
2. Answer: Output your final single choice.

Output format is as follows:
{
    \"Reasoning\": \"...\",
    \"Answer\": \"A\"
}";

const P6_BODY: &str = "\
Input:
[Image: Side View]
The provided image is a side view illustrating the vertical plane of the 3D scene.

Requirement:
Using this side view as the initial reference perspective, determine the necessary viewpoint transformation parameters required to transition to the optimal target perspective previously described in Step 1 (i.e., {{perspective}}).

Notes (Coordinate System & Parameters):
Assume the scene is abstracted into a 3D coordinate system, where the xy-plane represents the ground level and the z-axis represents height. The camera viewpoint is constrained within a spherical coordinate space centered on the target object.
Consequently, the viewpoint transformation is defined by three parameters: yaw, pitch, and distance.
The detailed specifications for these parameters are as follows:
1. yaw: A continuous value in the range [-180, 180]. A negative degree indicates a leftward rotation around the target object from the current observation position, while a positive degree indicates a rightward rotation.
2. pitch: A continuous value in the range [-90, 90]. A positive value indicates looking down at the target object from above, while a negative value indicates looking up from below.
3. distance: A floating-point number with one decimal place in the range [0.0, 10.0]. A larger value pulls the camera further away from the object, while a smaller value brings it closer.

Output Format:
Please output your response strictly in the following JSON format:
{
    \"View_Analysis\": \"...\",
    \"View_Params\": [yaw, pitch, distance]
}

Where:
1. \"View_Analysis\": This field should contain your step-by-step spatial reasoning for calculating the parameter transformations needed to shift from the current viewpoint to the optimal target viewpoint.
2. \"View_Params\": This field should contain a list of the three calculated viewpoint transformation parameters to achieve the target perspective from Step 1. Note: Assume the camera's initial position in the provided side view corresponds to the default parameter state: [0, 0, 3].";

/// Values available to fill template slots. `question` is optional and, when
/// set, is prepended as a `Question:` block; the body slots (`knowledge`,
/// `perspective`) are required by the templates that reference them.
#[derive(Debug, Clone, Default)]
pub struct PromptSlots {
    pub question: Option<String>,
    pub knowledge: Option<String>,
    pub perspective: Option<String>,
    /// Render the answer template without its view-verification conditions.
    pub omit_view_conditions: bool,
}

fn required(
    template: TemplateId,
    slot: &'static str,
    value: &Option<String>,
) -> Result<String, AgentError> {
    value
        .clone()
        .ok_or(AgentError::MissingSlot { template, slot })
}

fn min_images(template: TemplateId, expected: usize, got: usize) -> Result<(), AgentError> {
    if got < expected {
        return Err(AgentError::MissingImages {
            template,
            expected,
            got,
        });
    }
    Ok(())
}

/// Render a template into the message list sent to the agent. Images are
/// attached to the user message in the given order; each template checks the
/// minimum it needs (coordinate selection wants both maps, the answer and
/// baseline templates at least one image, direct parameters the side view).
pub fn render_prompt(
    template: TemplateId,
    slots: &PromptSlots,
    images: Vec<Vec<u8>>,
) -> Result<Vec<AgentMessage>, AgentError> {
    let body = match template {
        TemplateId::P1Extract => {
            min_images(template, 1, images.len())?;
            P1_BODY.to_string()
        }
        TemplateId::P2Perspective => {
            min_images(template, 1, images.len())?;
            let knowledge = required(template, "knowledge", &slots.knowledge)?;
            P2_BODY.replace("{{knowledge}}", &knowledge)
        }
        TemplateId::P3Coords => {
            min_images(template, 2, images.len())?;
            let perspective = required(template, "perspective", &slots.perspective)?;
            P3_BODY.replace("{{perspective}}", &perspective)
        }
        TemplateId::P4Answer => {
            min_images(template, 1, images.len())?;
            if slots.omit_view_conditions {
                P4_BODY_NO_CONDITIONS.to_string()
            } else {
                let perspective = required(template, "perspective", &slots.perspective)?;
                P4_BODY.replace("{{perspective}}", &perspective)
            }
        }
        TemplateId::P5Baseline => {
            min_images(template, 1, images.len())?;
            P5_BODY.to_string()
        }
        TemplateId::P6DirectParams => {
            min_images(template, 1, images.len())?;
            let perspective = required(template, "perspective", &slots.perspective)?;
            P6_BODY.replace("{{perspective}}", &perspective)
        }
    };

    let text = match &slots.question {
        Some(q) => format!("Question: {q}\n\n{body}"),
        None => body,
    };
    debug_assert!(!has_unfilled_slots(&text));

    let mut messages = Vec::with_capacity(2);
    let system = match template {
        TemplateId::P2Perspective
        | TemplateId::P3Coords
        | TemplateId::P4Answer
        | TemplateId::P6DirectParams => Some(REASONING_SYSTEM_PROMPT),
        TemplateId::P1Extract | TemplateId::P5Baseline => None,
    };
    if let Some(s) = system {
        messages.push(AgentMessage {
            role: Role::System,
            text: s.to_string(),
            images: Vec::new(),
        });
    }
    messages.push(AgentMessage {
        role: Role::User,
        text,
        images,
    });
    Ok(messages)
}

/// True if any `{{name}}` slot marker is left in the rendered text.
pub fn has_unfilled_slots(text: &str) -> bool {
    let bytes = text.as_bytes();
    let mut i = 0;
    while i + 1 < bytes.len() {
        if bytes[i] == b'{' && bytes[i + 1] == b'{' {
            let rest = &text[i + 2..];
            if let Some(end) = rest.find("}}") {
                let name = &rest[..end];
                if !name.is_empty()
                    && name
                        .chars()
                        .all(|c| c.is_ascii_lowercase() || c == '_')
                {
                    return true;
                }
            }
        }
        i += 1;
    }
    false
}
