//! The end-to-end orchestration state machine: (optional reconstruction
//! front end) -> load scene -> perspective selection -> camera parameter
//! selection -> render -> geometric check -> agent validation and answer,
//! looping back to the camera-parameter step while views get rejected, until
//! acceptance or the retry budget runs out.

mod services;
mod trace;

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};
use serde_json::json;
use thiserror::Error;

use crate::agents::{
    parse_json_reply, render_prompt, AgentError, AgentHandle, AgentMessage, AgentSet, ParsedReply,
    PromptSlots, TemplateId, EMPTY_KB_SENTINEL, REPROMPT_TEXT,
};
use crate::camera::{
    look_at_extrinsics, spherical_to_world, AgentPose, CameraError, CameraSpherical, Intrinsics,
};
use crate::geometry::{load_scene, object_aabb, GeometryError, Scene};
use crate::knowledge::{self, KnowledgeBase};
use crate::masks::{self, MaskError};
use crate::render::{
    encode_png_bytes, geometric_view_check, rasterize, rasterize_with_ids, render_sideview_map,
    render_topdown_map, side_layout, RenderError, RenderOptions,
};

pub use services::{reconstruct, segment, ReconstructionReply, ServiceClients, ServiceEndpoint};
pub use trace::{
    check_trace, load_trace, write_result, PoseRecord, SampleResult, TraceCheckReport, TraceStep,
    TraceWriter, RESULT_FILE, TRACE_FILE,
};

/// Most rendered views ever attached to a single answer prompt.
pub const MAX_ANSWER_VIEWS: usize = 6;

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Camera(#[from] CameraError),
    #[error(transparent)]
    Render(#[from] RenderError),
    #[error(transparent)]
    Agent(#[from] AgentError),
    #[error(transparent)]
    Mask(#[from] MaskError),
    #[error("io error: {0}")]
    Io(String),
    #[error("service error: {0}")]
    Service(String),
    #[error("trace error: {0}")]
    Trace(String),
}

/// Which part of the pipeline to disable, mirroring the ablations.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AblationMode {
    #[default]
    Full,
    /// Accept the first rendered view's answer; the answer prompt omits the
    /// verification conditions.
    NoReselect,
    /// Fill the knowledge slot with a sentinel instead of retrieved items.
    NoKb,
    /// Replace coordinate-map selection with direct view-parameter
    /// prediction from a plain side view.
    NoCoordinateLayout,
}

impl std::str::FromStr for AblationMode {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "full" => Ok(AblationMode::Full),
            "no_reselect" => Ok(AblationMode::NoReselect),
            "no_kb" => Ok(AblationMode::NoKb),
            "no_coordinate_layout" => Ok(AblationMode::NoCoordinateLayout),
            other => Err(format!(
                "unknown ablation mode {other:?} (expected full, no_reselect, no_kb, no_coordinate_layout)"
            )),
        }
    }
}

impl AblationMode {
    pub fn as_str(&self) -> &'static str {
        match self {
            AblationMode::Full => "full",
            AblationMode::NoReselect => "no_reselect",
            AblationMode::NoKb => "no_kb",
            AblationMode::NoCoordinateLayout => "no_coordinate_layout",
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PipelineConfig {
    #[serde(default = "default_retry_limit")]
    pub retry_limit: u32,
    #[serde(default = "default_iou_threshold")]
    pub iou_threshold: f64,
    #[serde(default = "default_coverage_threshold")]
    pub coverage_threshold: f64,
    #[serde(default = "default_pitch_clamp")]
    pub pitch_clamp_degrees: f64,
    #[serde(default)]
    pub ablation_mode: AblationMode,
}

fn default_retry_limit() -> u32 {
    3
}
fn default_iou_threshold() -> f64 {
    masks::DEFAULT_IOU_THRESHOLD
}
fn default_coverage_threshold() -> f64 {
    crate::render::DEFAULT_COVERAGE_THRESHOLD
}
fn default_pitch_clamp() -> f64 {
    crate::camera::PITCH_CLAMP_DEGREES
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            retry_limit: default_retry_limit(),
            iou_threshold: default_iou_threshold(),
            coverage_threshold: default_coverage_threshold(),
            pitch_clamp_degrees: default_pitch_clamp(),
            ablation_mode: AblationMode::Full,
        }
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<(), PipelineError> {
        if self.retry_limit > 10 {
            return Err(PipelineError::Config(format!(
                "retry_limit {} exceeds 10",
                self.retry_limit
            )));
        }
        if !(self.iou_threshold > 0.0 && self.iou_threshold <= 1.0) {
            return Err(PipelineError::Config(format!(
                "iou_threshold {} outside (0, 1]",
                self.iou_threshold
            )));
        }
        if !(0.0..1.0).contains(&self.coverage_threshold) {
            return Err(PipelineError::Config(format!(
                "coverage_threshold {} outside [0, 1)",
                self.coverage_threshold
            )));
        }
        if !(self.pitch_clamp_degrees > 0.0
            && self.pitch_clamp_degrees <= crate::camera::PITCH_CLAMP_DEGREES)
        {
            return Err(PipelineError::Config(format!(
                "pitch_clamp_degrees {} outside (0, {}]",
                self.pitch_clamp_degrees,
                crate::camera::PITCH_CLAMP_DEGREES
            )));
        }
        Ok(())
    }
}

/// Keyword triple extracted from the question and image.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct KeywordSet {
    pub original: Vec<String>,
    pub abbreviated: Vec<String>,
    pub expanded: Vec<String>,
}

impl KeywordSet {
    /// All keywords in priority order (original, abbreviated, expanded) with
    /// duplicates removed, as segmentation queries.
    pub fn queries(&self) -> Vec<String> {
        let mut seen = std::collections::HashSet::new();
        self.original
            .iter()
            .chain(&self.abbreviated)
            .chain(&self.expanded)
            .filter(|k| !k.trim().is_empty() && seen.insert(k.trim().to_lowercase()))
            .map(|k| k.trim().to_string())
            .collect()
    }
}

/// The agent's viewpoint choice from the perspective-selection step.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PerspectiveChoice {
    pub think: String,
    pub description: String,
}

/// One prompt/reply exchange with an agent (a step may have two when the
/// first reply fails to parse and the agent is reprompted).
#[derive(Debug, Clone)]
pub struct StepAttempt {
    pub prompt: String,
    pub raw_reply: String,
    pub parsed: Option<serde_json::Value>,
    pub wall_ms: f64,
}

fn messages_text(messages: &[AgentMessage]) -> String {
    messages
        .iter()
        .map(|m| {
            let role = match m.role {
                crate::agents::Role::System => "system",
                crate::agents::Role::User => "user",
            };
            if m.images.is_empty() {
                format!("[{role}]\n{}", m.text)
            } else {
                format!("[{role}] ({} image(s) attached)\n{}", m.images.len(), m.text)
            }
        })
        .collect::<Vec<_>>()
        .join("\n\n")
}

/// Send a rendered prompt, parse the reply against the template schema, and
/// reprompt once on a malformed reply. Every exchange is appended to
/// `attempts` whether or not it succeeded.
fn chat_parsed(
    agent: &AgentHandle,
    template: TemplateId,
    sample: &str,
    mut messages: Vec<AgentMessage>,
    attempts: &mut Vec<StepAttempt>,
) -> Result<ParsedReply, PipelineError> {
    for attempt in 0..2 {
        let start = Instant::now();
        let prompt = messages_text(&messages);
        let raw = agent.chat(template, sample, &messages)?;
        let reply = parse_json_reply(&raw, template);
        attempts.push(StepAttempt {
            prompt,
            raw_reply: raw,
            parsed: reply
                .parsed
                .as_ref()
                .map(|p| serde_json::to_value(p).unwrap_or(serde_json::Value::Null)),
            wall_ms: start.elapsed().as_secs_f64() * 1000.0,
        });
        match (reply.parse_ok, reply.parsed) {
            (true, Some(parsed)) => return Ok(parsed),
            _ if attempt == 0 => {
                messages.push(AgentMessage::user(REPROMPT_TEXT.to_string(), Vec::new()));
            }
            _ => {
                return Err(AgentError::BadReply {
                    template,
                    reason: reply.error.unwrap_or_else(|| "unparseable reply".into()),
                }
                .into())
            }
        }
    }
    unreachable!("loop returns on second attempt")
}

/// Extract the keyword triple from the original image and question.
pub fn extract_keywords(
    original_png: &[u8],
    question: &str,
    agent: &AgentHandle,
    sample: &str,
    attempts: &mut Vec<StepAttempt>,
) -> Result<KeywordSet, PipelineError> {
    let slots = PromptSlots {
        question: Some(question.to_string()),
        ..Default::default()
    };
    let messages = render_prompt(TemplateId::P1Extract, &slots, vec![original_png.to_vec()])?;
    let parsed = chat_parsed(agent, TemplateId::P1Extract, sample, messages, attempts)?;
    match parsed {
        ParsedReply::Keywords {
            original,
            abbreviated,
            expanded,
        } => {
            if original.is_empty() {
                return Err(PipelineError::Agent(AgentError::BadReply {
                    template: TemplateId::P1Extract,
                    reason: "no target objects".into(),
                }));
            }
            Ok(KeywordSet {
                original,
                abbreviated,
                expanded,
            })
        }
        _ => unreachable!("parser returns the template's variant"),
    }
}

/// Ask the reasoner for the viewpoint best suited to the question, given the
/// serialized knowledge items (or the empty-base sentinel).
pub fn select_perspective(
    original_png: &[u8],
    question: &str,
    knowledge_text: &str,
    agent: &AgentHandle,
    sample: &str,
    attempts: &mut Vec<StepAttempt>,
) -> Result<PerspectiveChoice, PipelineError> {
    let slots = PromptSlots {
        question: Some(question.to_string()),
        knowledge: Some(knowledge_text.to_string()),
        ..Default::default()
    };
    let messages = render_prompt(TemplateId::P2Perspective, &slots, vec![original_png.to_vec()])?;
    let parsed = chat_parsed(agent, TemplateId::P2Perspective, sample, messages, attempts)?;
    match parsed {
        ParsedReply::Perspective { think, perspective } => Ok(PerspectiveChoice {
            think,
            description: perspective,
        }),
        _ => unreachable!("parser returns the template's variant"),
    }
}

// Ray/rectangle exit distance from the origin along `dir` (unit), in the xy
// plane. Returns the exit parameter when the ray passes through the rect.
fn ray_rect_exit(dir: (f64, f64), min: (f64, f64), max: (f64, f64)) -> Option<f64> {
    let mut t_lo = f64::NEG_INFINITY;
    let mut t_hi = f64::INFINITY;
    for (d, lo, hi) in [(dir.0, min.0, max.0), (dir.1, min.1, max.1)] {
        if d == 0.0 {
            if lo > 0.0 || hi < 0.0 {
                return None;
            }
        } else {
            let (a, b) = (lo / d, hi / d);
            t_lo = t_lo.max(a.min(b));
            t_hi = t_hi.min(a.max(b));
        }
    }
    if t_lo > t_hi || t_hi <= 0.0 {
        None
    } else {
        Some(t_hi)
    }
}

/// Apply the outside-the-object rule: when (x, y) lies inside any object's
/// top-down AABB footprint, push it radially outward to the farthest
/// footprint boundary along that ray plus half a grid interval (0.5).
pub fn push_out_of_footprints(scene: &Scene, x: f64, y: f64) -> (f64, f64) {
    let inside_any = scene.objects.iter().any(|o| {
        let bb = object_aabb(o);
        x >= bb.min.x && x <= bb.max.x && y >= bb.min.y && y <= bb.max.y
    });
    if !inside_any {
        return (x, y);
    }
    let len = x.hypot(y);
    if len == 0.0 {
        return (x, y); // the origin case errors later in planar_to_polar
    }
    let dir = (x / len, y / len);
    let mut t_exit = len;
    for o in &scene.objects {
        let bb = object_aabb(o);
        if let Some(t) = ray_rect_exit(dir, (bb.min.x, bb.min.y), (bb.max.x, bb.max.y)) {
            t_exit = t_exit.max(t);
        }
    }
    let new_len = t_exit + 0.5;
    (dir.0 * new_len, dir.1 * new_len)
}

/// Outcome of the coordinate-selection step.
#[derive(Debug, Clone)]
pub struct CoordsChoice {
    pub think: String,
    pub x: f64,
    pub y: f64,
    pub pitch_degrees: f64,
    pub adjusted_x: f64,
    pub adjusted_y: f64,
    pub pose: AgentPose,
}

fn build_pose_from_planar(
    scene: &Scene,
    x: f64,
    y: f64,
    pitch_degrees: f64,
    pitch_clamp_degrees: f64,
) -> Result<AgentPose, PipelineError> {
    let pre_clamped = pitch_degrees.clamp(-pitch_clamp_degrees, pitch_clamp_degrees);
    let mut pose = crate::camera::pose_from_agent_coords(x, y, pre_clamped, scene)?;
    pose.requested_pitch_degrees = pitch_degrees;
    Ok(pose)
}

/// Ask the reasoner for (x, y, pitch) on the coordinate maps and build the
/// camera pose, applying the push-out rule first. `feedback` carries the
/// failure description of the previous cycle as an extra user turn.
#[allow(clippy::too_many_arguments)]
pub fn select_coordinates(
    scene: &Scene,
    perspective: &str,
    topdown_png: &[u8],
    side_png: &[u8],
    agent: &AgentHandle,
    sample: &str,
    feedback: Option<&str>,
    pitch_clamp_degrees: f64,
    attempts: &mut Vec<StepAttempt>,
) -> Result<CoordsChoice, PipelineError> {
    let slots = PromptSlots {
        perspective: Some(perspective.to_string()),
        ..Default::default()
    };
    let mut messages = render_prompt(
        TemplateId::P3Coords,
        &slots,
        vec![topdown_png.to_vec(), side_png.to_vec()],
    )?;
    if let Some(reason) = feedback {
        messages.push(AgentMessage::user(reason.to_string(), Vec::new()));
    }
    let parsed = chat_parsed(agent, TemplateId::P3Coords, sample, messages, attempts)?;
    let ParsedReply::Coords {
        think,
        x,
        y,
        pitch_degrees,
    } = parsed
    else {
        unreachable!("parser returns the template's variant")
    };
    let (adjusted_x, adjusted_y) = push_out_of_footprints(scene, x, y);
    let pose = build_pose_from_planar(scene, adjusted_x, adjusted_y, pitch_degrees, pitch_clamp_degrees)?;
    Ok(CoordsChoice {
        think,
        x,
        y,
        pitch_degrees,
        adjusted_x,
        adjusted_y,
        pose,
    })
}

/// Outcome of the direct view-parameter step (coordinate-layout ablation).
#[derive(Debug, Clone)]
pub struct ViewParamsChoice {
    pub analysis: String,
    pub yaw_degrees: f64,
    pub pitch_degrees: f64,
    pub distance: f64,
    pub pose: AgentPose,
}

/// Ask the reasoner for (yaw, pitch, distance) relative to the side view's
/// default state [0, 0, 3] and build the camera pose.
#[allow(clippy::too_many_arguments)]
pub fn direct_view_params(
    scene: &Scene,
    perspective: &str,
    side_png: &[u8],
    agent: &AgentHandle,
    sample: &str,
    feedback: Option<&str>,
    pitch_clamp_degrees: f64,
    attempts: &mut Vec<StepAttempt>,
) -> Result<ViewParamsChoice, PipelineError> {
    let slots = PromptSlots {
        perspective: Some(perspective.to_string()),
        ..Default::default()
    };
    let mut messages = render_prompt(TemplateId::P6DirectParams, &slots, vec![side_png.to_vec()])?;
    if let Some(reason) = feedback {
        messages.push(AgentMessage::user(reason.to_string(), Vec::new()));
    }
    let parsed = chat_parsed(agent, TemplateId::P6DirectParams, sample, messages, attempts)?;
    let ParsedReply::ViewParams {
        analysis,
        yaw_degrees,
        pitch_degrees,
        distance,
    } = parsed
    else {
        unreachable!("parser returns the template's variant")
    };
    if distance <= 0.0 {
        return Err(PipelineError::Camera(CameraError::ZeroBaseline));
    }
    let mut yaw = yaw_degrees.to_radians();
    if yaw <= -std::f64::consts::PI {
        yaw += 2.0 * std::f64::consts::PI;
    }
    let effective_pitch = pitch_degrees.clamp(-pitch_clamp_degrees, pitch_clamp_degrees);
    let spherical = CameraSpherical::new(yaw, effective_pitch.to_radians(), distance)?;
    let (_, position) = spherical_to_world(spherical, scene.center);
    let extrinsics = look_at_extrinsics(position, scene.center, scene.up)?;
    Ok(ViewParamsChoice {
        analysis,
        yaw_degrees,
        pitch_degrees,
        distance,
        pose: AgentPose {
            spherical,
            extrinsics,
            requested_pitch_degrees: pitch_degrees,
            effective_pitch_degrees: effective_pitch,
        },
    })
}

/// The reasoner's verdict on a synthesized view.
#[derive(Debug, Clone)]
pub enum Verdict {
    Accept {
        answer: String,
        observation: String,
        reasoning: String,
    },
    Reject {
        observation: String,
        reasoning: String,
    },
}

/// Send the answer prompt over the accumulated images. With
/// `omit_conditions` (reselection disabled) the reply is always accepted,
/// whatever the answer text.
#[allow(clippy::too_many_arguments)]
pub fn validate_and_answer(
    question: &str,
    perspective: &str,
    images: Vec<Vec<u8>>,
    agent: &AgentHandle,
    sample: &str,
    omit_conditions: bool,
    attempts: &mut Vec<StepAttempt>,
) -> Result<Verdict, PipelineError> {
    let slots = PromptSlots {
        question: Some(question.to_string()),
        perspective: (!omit_conditions).then(|| perspective.to_string()),
        omit_view_conditions: omit_conditions,
        ..Default::default()
    };
    let messages = render_prompt(TemplateId::P4Answer, &slots, images)?;
    let parsed = chat_parsed(agent, TemplateId::P4Answer, sample, messages, attempts)?;
    let ParsedReply::Answer {
        observation,
        reasoning,
        answer,
    } = parsed
    else {
        unreachable!("parser returns the template's variant")
    };
    if !omit_conditions && answer.trim().eq_ignore_ascii_case("none") {
        Ok(Verdict::Reject {
            observation,
            reasoning,
        })
    } else {
        Ok(Verdict::Accept {
            answer,
            observation,
            reasoning,
        })
    }
}

/// Inputs for one pipeline run.
#[derive(Debug, Clone)]
pub struct SampleSpec<'a> {
    pub sample_id: &'a str,
    /// Pre-built scene manifest; `None` runs the reconstruction front end,
    /// which requires both service clients.
    pub scene_manifest: Option<&'a Path>,
    /// Original image (PNG).
    pub image: &'a Path,
    pub question: &'a str,
    /// Benchmark subtask used for knowledge retrieval, when known.
    pub subtask_hint: Option<&'a str>,
}

struct FsmOutcome {
    answered: bool,
    answer: Option<String>,
    retries_used: u32,
    error: Option<String>,
}

fn record_attempts(
    trace: &mut TraceWriter,
    step: &str,
    attempts: &[StepAttempt],
    pose: Option<PoseRecord>,
    images: Vec<String>,
    verdict: Option<String>,
) -> Result<(), PipelineError> {
    for (i, a) in attempts.iter().enumerate() {
        let last = i + 1 == attempts.len();
        trace.record(TraceStep {
            k: 0,
            step: step.to_string(),
            attempt: i,
            prompt: Some(a.prompt.clone()),
            reply: Some(a.raw_reply.clone()),
            parsed: a.parsed.clone(),
            pose: if last { pose.clone() } else { None },
            images: if last { images.clone() } else { Vec::new() },
            verdict: if last {
                verdict.clone()
            } else {
                Some("malformed_reply".to_string())
            },
            wall_ms: a.wall_ms,
        })?;
    }
    Ok(())
}

fn plain_step(step: &str) -> TraceStep {
    TraceStep {
        k: 0,
        step: step.to_string(),
        attempt: 0,
        prompt: None,
        reply: None,
        parsed: None,
        pose: None,
        images: Vec::new(),
        verdict: None,
        wall_ms: 0.0,
    }
}

/// Run the full pipeline for one sample, writing `trace.jsonl`, step images,
/// and `result.json` into `<out_root>/<sample_id>/`.
///
/// Errors are split in two classes: `Err` for setup problems (bad config,
/// unreadable inputs, missing scene and services), while agent misbehavior,
/// view rejection past the retry budget, and service failures mid-run yield
/// `Ok` with `answered = false` and the error recorded.
pub fn run_sample(
    spec: &SampleSpec,
    config: &PipelineConfig,
    agents: &AgentSet,
    kb: &KnowledgeBase,
    services: &ServiceClients,
    intrinsics: &Intrinsics,
    out_root: &Path,
) -> Result<SampleResult, PipelineError> {
    config.validate()?;
    let sample_dir = out_root.join(spec.sample_id);
    let mut trace = TraceWriter::create(&sample_dir)?;
    let original_png = fs::read(spec.image)
        .map_err(|e| PipelineError::Config(format!("cannot read image {}: {e}", spec.image.display())))?;

    // Front end: a provided manifest skips extraction / segmentation /
    // reconstruction entirely.
    let (manifest_path, front_end_error) = match spec.scene_manifest {
        Some(path) => {
            if !path.exists() {
                return Err(PipelineError::Config(format!(
                    "scene manifest not found: {}",
                    path.display()
                )));
            }
            let mut step = plain_step("frontend");
            step.verdict = Some("provided".to_string());
            step.parsed = Some(json!({ "manifest": path.display().to_string() }));
            trace.record(step)?;
            (Some(path.to_path_buf()), None)
        }
        None => match run_front_end(spec, config, agents, services, &original_png, &mut trace) {
            Ok(path) => (Some(path), None),
            Err(err @ PipelineError::Config(_)) => return Err(err),
            Err(err) => (None, Some(err.to_string())),
        },
    };

    let outcome = match (manifest_path, front_end_error) {
        (Some(manifest), None) => {
            let scene = load_scene(&manifest)?;
            let mut step = plain_step("load_scene");
            step.parsed = Some(json!({
                "objects": scene.objects.len(),
                "normalization_scale": scene.normalization_scale,
            }));
            trace.record(step)?;
            run_fsm(spec, config, agents, kb, intrinsics, &scene, &original_png, &mut trace)?
        }
        (_, error) => FsmOutcome {
            answered: false,
            answer: None,
            retries_used: 0,
            error: Some(error.unwrap_or_else(|| "reconstruction front end failed".into())),
        },
    };

    let result = SampleResult {
        sample_id: spec.sample_id.to_string(),
        answered: outcome.answered,
        answer: outcome.answer,
        retries_used: outcome.retries_used,
        trace: TRACE_FILE.to_string(),
        error: outcome.error,
    };
    write_result(&sample_dir, &result)?;
    Ok(result)
}

/// Keyword extraction, segmentation, dedup, reconstruction. Returns the
/// reconstructed manifest path.
fn run_front_end(
    spec: &SampleSpec,
    config: &PipelineConfig,
    agents: &AgentSet,
    services: &ServiceClients,
    original_png: &[u8],
    trace: &mut TraceWriter,
) -> Result<PathBuf, PipelineError> {
    let segmentation = services.segmentation.as_ref().ok_or_else(|| {
        PipelineError::Config(
            "no scene manifest provided and the segmentation service is unconfigured".into(),
        )
    })?;
    let reconstruction = services.reconstruction.as_ref().ok_or_else(|| {
        PipelineError::Config(
            "no scene manifest provided and the reconstruction service is unconfigured".into(),
        )
    })?;

    let mut attempts = Vec::new();
    let keywords = extract_keywords(
        original_png,
        spec.question,
        &agents.extractor,
        spec.sample_id,
        &mut attempts,
    );
    let verdict = match &keywords {
        Ok(k) => Some(format!("{} queries", k.queries().len())),
        Err(e) => Some(format!("error: {e}")),
    };
    record_attempts(trace, "extract_keywords", &attempts, None, Vec::new(), verdict)?;
    let keywords = keywords?;

    let mut mask_pngs = Vec::new();
    let mut mask_values = Vec::new();
    for query in keywords.queries() {
        let png = segment(segmentation, original_png, &query)
            .map_err(|e| PipelineError::Service(format!("segmentation for {query:?}: {e}")))?;
        let mask = masks::mask_from_png_bytes(&png, &query)?;
        mask_pngs.push(png);
        mask_values.push(mask);
    }
    let (kept, report) = masks::dedup_with_report(&mask_values, config.iou_threshold)?;
    let report_json = serde_json::to_value(&report)
        .map_err(|e| PipelineError::Trace(format!("dedup report: {e}")))?;
    fs::write(
        trace.dir().join("dedup_report.json"),
        serde_json::to_string_pretty(&report_json)
            .map_err(|e| PipelineError::Trace(format!("dedup report: {e}")))?
            + "\n",
    )
    .map_err(|e| PipelineError::Io(format!("write dedup report: {e}")))?;
    let mut step = plain_step("segmentation");
    step.parsed = Some(report_json);
    step.verdict = Some(format!(
        "kept {} of {} masks",
        kept.len(),
        mask_values.len()
    ));
    trace.record(step)?;

    let kept_pngs: Vec<Vec<u8>> = report
        .decisions
        .iter()
        .filter(|d| d.kept)
        .map(|d| mask_pngs[d.index].clone())
        .collect();
    let recon_dir = trace.dir().join("recon");
    let manifest = reconstruct(reconstruction, original_png, &kept_pngs, &recon_dir)?;
    let mut step = plain_step("reconstruction");
    step.parsed = Some(json!({ "manifest": manifest.display().to_string() }));
    trace.record(step)?;
    Ok(manifest)
}

#[allow(clippy::too_many_arguments)]
fn run_fsm(
    spec: &SampleSpec,
    config: &PipelineConfig,
    agents: &AgentSet,
    kb: &KnowledgeBase,
    intrinsics: &Intrinsics,
    scene: &Scene,
    original_png: &[u8],
    trace: &mut TraceWriter,
) -> Result<FsmOutcome, PipelineError> {
    let mode = config.ablation_mode;
    let fail = |retries_used: u32, error: String| FsmOutcome {
        answered: false,
        answer: None,
        retries_used,
        error: Some(error),
    };

    // Step 1: perspective selection.
    let knowledge_text = if mode == AblationMode::NoKb {
        EMPTY_KB_SENTINEL.to_string()
    } else {
        let items = knowledge::select_items(kb, spec.question, spec.subtask_hint);
        knowledge::serialize_items(&items)
    };
    let mut attempts = Vec::new();
    let perspective = select_perspective(
        original_png,
        spec.question,
        &knowledge_text,
        &agents.reasoner,
        spec.sample_id,
        &mut attempts,
    );
    let verdict = match &perspective {
        Ok(p) => Some(format!("perspective: {}", p.description)),
        Err(e) => Some(format!("error: {e}")),
    };
    record_attempts(trace, "select_perspective", &attempts, None, Vec::new(), verdict)?;
    let perspective = match perspective {
        Ok(p) => p,
        Err(e) => return Ok(fail(0, e.to_string())),
    };

    // Coordinate maps (or a plain side view for the layout ablation).
    let (topdown_png, side_png, map_images) = if mode == AblationMode::NoCoordinateLayout {
        let layout = side_layout(scene, intrinsics);
        let (_, position) = spherical_to_world(layout.camera, scene.center);
        let ext = look_at_extrinsics(position, scene.center, scene.up)?;
        let side = rasterize(scene, &ext, intrinsics, &RenderOptions::default());
        let name = trace.save_image("side", &side)?;
        (None, encode_png_bytes(&side)?, vec![name])
    } else {
        let topdown = render_topdown_map(scene, intrinsics);
        let (side, _, _) = render_sideview_map(scene, intrinsics);
        let topdown_name = trace.save_image("topdown", &topdown)?;
        let side_name = trace.save_image("side", &side)?;
        (
            Some(encode_png_bytes(&topdown)?),
            encode_png_bytes(&side)?,
            vec![topdown_name, side_name],
        )
    };
    let mut step = plain_step("render_maps");
    step.images = map_images.clone();
    trace.record(step)?;

    // Steps 2-3 loop: camera parameters -> render -> checks -> answer.
    let mut retries_used = 0u32;
    let mut cycle = 0usize;
    let mut views: Vec<Vec<u8>> = Vec::new();
    let mut view_names: Vec<String> = Vec::new();
    let mut feedback: Option<String> = None;
    loop {
        // Step 2: camera parameters.
        let mut attempts = Vec::new();
        let (pose, step_name, pose_summary) = if mode == AblationMode::NoCoordinateLayout {
            let choice = direct_view_params(
                scene,
                &perspective.description,
                &side_png,
                &agents.reasoner,
                spec.sample_id,
                feedback.as_deref(),
                config.pitch_clamp_degrees,
                &mut attempts,
            );
            match choice {
                Ok(c) => {
                    let summary = format!(
                        "params yaw={} pitch={} distance={}",
                        c.yaw_degrees, c.pitch_degrees, c.distance
                    );
                    (Ok(c.pose), "direct_view_params", summary)
                }
                Err(e) => (Err(e), "direct_view_params", String::new()),
            }
        } else {
            let choice = select_coordinates(
                scene,
                &perspective.description,
                topdown_png.as_deref().expect("maps rendered in this mode"),
                &side_png,
                &agents.reasoner,
                spec.sample_id,
                feedback.as_deref(),
                config.pitch_clamp_degrees,
                &mut attempts,
            );
            match choice {
                Ok(c) => {
                    let summary = format!(
                        "coords ({}, {}) pitch {}{}",
                        c.x,
                        c.y,
                        c.pitch_degrees,
                        if (c.adjusted_x, c.adjusted_y) != (c.x, c.y) {
                            format!(" adjusted to ({}, {})", c.adjusted_x, c.adjusted_y)
                        } else {
                            String::new()
                        }
                    );
                    (Ok(c.pose), "select_coordinates", summary)
                }
                Err(e) => (Err(e), "select_coordinates", String::new()),
            }
        };
        let (pose_record, verdict) = match &pose {
            Ok(p) => (Some(PoseRecord::from_agent_pose(p)), Some(pose_summary)),
            Err(e) => (None, Some(format!("error: {e}"))),
        };
        record_attempts(trace, step_name, &attempts, pose_record.clone(), Vec::new(), verdict)?;
        let pose = match pose {
            Ok(p) => p,
            Err(e) => return Ok(fail(retries_used, e.to_string())),
        };

        // Step 3: render the novel view.
        let kind = if cycle == 0 {
            "view".to_string()
        } else {
            format!("retry{cycle}")
        };
        let out = rasterize_with_ids(scene, &pose.extrinsics, intrinsics, &RenderOptions::default());
        let view_name = trace.save_image(&kind, &out.image)?;
        let mut step = plain_step("render_view");
        step.pose = Some(PoseRecord::from_agent_pose(&pose));
        step.images = vec![view_name.clone()];
        trace.record(step)?;
        views.push(encode_png_bytes(&out.image)?);
        view_names.push(view_name);

        // Geometric gate.
        let report = geometric_view_check(
            scene,
            &pose.extrinsics,
            intrinsics,
            &out.image,
            config.coverage_threshold,
        );
        let mut step = plain_step("geometric_check");
        step.parsed = Some(
            serde_json::to_value(&report)
                .map_err(|e| PipelineError::Trace(format!("view check: {e}")))?,
        );
        step.verdict = Some(if mode == AblationMode::NoReselect {
            "recorded".to_string()
        } else if report.pass {
            "pass".to_string()
        } else {
            format!(
                "fail: {}",
                report.failure_reason().unwrap_or_else(|| "unknown".into())
            )
        });
        trace.record(step)?;

        if !report.pass && mode != AblationMode::NoReselect {
            let reason = report
                .failure_reason()
                .unwrap_or_else(|| "geometric check failed".into());
            if retries_used < config.retry_limit {
                retries_used += 1;
                cycle += 1;
                feedback = Some(retry_feedback(&pose, &reason));
                continue;
            }
            return Ok(fail(
                retries_used,
                format!("retry limit exhausted; last geometric failure: {reason}"),
            ));
        }

        // Answer prompt over the accumulated views (capped).
        let mut p4_images = Vec::new();
        p4_images.push(original_png.to_vec());
        if let Some(topdown) = &topdown_png {
            p4_images.push(topdown.clone());
        }
        p4_images.push(side_png.clone());
        let tail = views.len().saturating_sub(MAX_ANSWER_VIEWS);
        p4_images.extend(views[tail..].iter().cloned());

        let mut attempts = Vec::new();
        let verdict = validate_and_answer(
            spec.question,
            &perspective.description,
            p4_images,
            &agents.reasoner,
            spec.sample_id,
            mode == AblationMode::NoReselect,
            &mut attempts,
        );
        // absolute so the reference stays resolvable from the sample dir
        let original_ref = fs::canonicalize(spec.image)
            .unwrap_or_else(|_| spec.image.to_path_buf())
            .display()
            .to_string();
        let mut step_images = vec![original_ref];
        step_images.extend(map_images.iter().cloned());
        step_images.extend(view_names[tail..].iter().cloned());
        let verdict_text = match &verdict {
            Ok(Verdict::Accept { answer, .. }) => Some(format!("accept: {answer}")),
            Ok(Verdict::Reject { .. }) => Some("reject".to_string()),
            Err(e) => Some(format!("error: {e}")),
        };
        record_attempts(
            trace,
            "validate_and_answer",
            &attempts,
            None,
            step_images,
            verdict_text,
        )?;
        match verdict {
            Err(e) => return Ok(fail(retries_used, e.to_string())),
            Ok(Verdict::Accept { answer, .. }) => {
                return Ok(FsmOutcome {
                    answered: true,
                    answer: Some(answer),
                    retries_used,
                    error: None,
                })
            }
            Ok(Verdict::Reject { reasoning, .. }) => {
                if retries_used < config.retry_limit {
                    retries_used += 1;
                    cycle += 1;
                    let short: String = reasoning.chars().take(200).collect();
                    feedback = Some(retry_feedback(
                        &pose,
                        &format!("the view was rejected by the answering step: {short}"),
                    ));
                    continue;
                }
                return Ok(fail(
                    retries_used,
                    "retry limit exhausted; every view was rejected".into(),
                ));
            }
        }
    }
}

fn retry_feedback(pose: &AgentPose, reason: &str) -> String {
    format!(
        "The previously selected camera parameters (yaw {:.1} deg, pitch {:.1} deg, distance {:.2}) \
         produced an unusable view: {reason}. Select different coordinates that still match the \
         perspective description.",
        pose.spherical.yaw.to_degrees(),
        pose.effective_pitch_degrees,
        pose.spherical.r
    )
}
