//! Append-only run traces: one JSONL line per step plus the PNGs the step
//! produced, all inside a per-sample directory.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::camera::{AgentPose, Extrinsics};
use crate::geometry::Vec3;
use crate::render::{encode_png, Image};

use super::PipelineError;

/// Pose snapshot stored in the trace, sufficient to re-validate the camera
/// invariants offline.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PoseRecord {
    pub yaw: f64,
    pub pitch: f64,
    pub r: f64,
    pub requested_pitch_degrees: f64,
    pub effective_pitch_degrees: f64,
    pub position: [f64; 3],
    pub rx: [f64; 3],
    pub ry: [f64; 3],
    pub rz: [f64; 3],
    pub translation: [f64; 3],
}

impl PoseRecord {
    pub fn from_agent_pose(pose: &AgentPose) -> Self {
        let e = &pose.extrinsics;
        Self {
            yaw: pose.spherical.yaw,
            pitch: pose.spherical.pitch,
            r: pose.spherical.r,
            requested_pitch_degrees: pose.requested_pitch_degrees,
            effective_pitch_degrees: pose.effective_pitch_degrees,
            position: e.position.to_array(),
            rx: e.rx.to_array(),
            ry: e.ry.to_array(),
            rz: e.rz.to_array(),
            translation: e.translation.to_array(),
        }
    }

    pub fn extrinsics(&self) -> Extrinsics {
        let v = |a: [f64; 3]| Vec3::new(a[0], a[1], a[2]);
        Extrinsics {
            rx: v(self.rx),
            ry: v(self.ry),
            rz: v(self.rz),
            position: v(self.position),
            translation: v(self.translation),
        }
    }

    /// Re-check the camera invariants: orthonormal right-handed basis and
    /// t = -R * P, all within 1e-9.
    pub fn validate(&self) -> Result<(), String> {
        let e = self.extrinsics();
        let defect = e.orthonormality_defect();
        if defect > 1e-9 {
            return Err(format!("basis orthonormality defect {defect:e}"));
        }
        let det = e.basis_determinant();
        if (det - 1.0).abs() > 1e-9 {
            return Err(format!("basis determinant {det}"));
        }
        let expect_t = Vec3::new(
            -e.rx.dot(e.position),
            -e.ry.dot(e.position),
            -e.rz.dot(e.position),
        );
        if expect_t.sub(e.translation).norm() > 1e-9 {
            return Err("translation does not equal -R*P".to_string());
        }
        if self.r <= 0.0 {
            return Err(format!("non-positive radius {}", self.r));
        }
        Ok(())
    }
}

/// One recorded pipeline step.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TraceStep {
    pub k: usize,
    pub step: String,
    /// Retry attempt within the step (0 for the first call, 1 for the
    /// reprompt after a malformed reply).
    #[serde(default)]
    pub attempt: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub prompt: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub reply: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub parsed: Option<serde_json::Value>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub pose: Option<PoseRecord>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub images: Vec<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub verdict: Option<String>,
    pub wall_ms: f64,
}

/// Final per-sample outcome. `answered` is false exactly when the retry
/// budget ran out or a hard agent error occurred.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SampleResult {
    pub sample_id: String,
    pub answered: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub answer: Option<String>,
    pub retries_used: u32,
    /// Trace file name relative to the sample directory.
    pub trace: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

/// Writes `trace.jsonl` and step images into one sample directory.
pub struct TraceWriter {
    dir: PathBuf,
    file: BufWriter<fs::File>,
    next_k: usize,
}

pub const TRACE_FILE: &str = "trace.jsonl";
pub const RESULT_FILE: &str = "result.json";

impl TraceWriter {
    pub fn create(sample_dir: &Path) -> Result<Self, PipelineError> {
        fs::create_dir_all(sample_dir)
            .map_err(|e| PipelineError::Io(format!("create {}: {e}", sample_dir.display())))?;
        let path = sample_dir.join(TRACE_FILE);
        let file = fs::File::create(&path)
            .map_err(|e| PipelineError::Io(format!("create {}: {e}", path.display())))?;
        Ok(Self {
            dir: sample_dir.to_path_buf(),
            file: BufWriter::new(file),
            next_k: 0,
        })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    /// Step index the next [`record`](Self::record) call will get.
    pub fn next_k(&self) -> usize {
        self.next_k
    }

    /// Save an image for the upcoming step as `step<k>_<kind>.png`; returns
    /// the file name recorded in the step.
    pub fn save_image(&self, kind: &str, image: &Image) -> Result<String, PipelineError> {
        let name = format!("step{}_{kind}.png", self.next_k);
        encode_png(image, &self.dir.join(&name))?;
        Ok(name)
    }

    pub fn record(&mut self, mut step: TraceStep) -> Result<(), PipelineError> {
        step.k = self.next_k;
        self.next_k += 1;
        let line = serde_json::to_string(&step)
            .map_err(|e| PipelineError::Trace(format!("serialize step: {e}")))?;
        writeln!(self.file, "{line}")
            .and_then(|_| self.file.flush())
            .map_err(|e| PipelineError::Io(format!("write trace: {e}")))?;
        Ok(())
    }
}

/// Read a `trace.jsonl` back into steps.
pub fn load_trace(sample_dir: &Path) -> Result<Vec<TraceStep>, PipelineError> {
    let path = sample_dir.join(TRACE_FILE);
    let text = fs::read_to_string(&path)
        .map_err(|e| PipelineError::Io(format!("read {}: {e}", path.display())))?;
    let mut steps = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let step: TraceStep = serde_json::from_str(line)
            .map_err(|e| PipelineError::Trace(format!("line {}: {e}", i + 1)))?;
        steps.push(step);
    }
    Ok(steps)
}

#[derive(Debug, Clone, Serialize)]
pub struct TraceCheckReport {
    pub steps: usize,
    pub poses_checked: usize,
    pub images_checked: usize,
    pub problems: Vec<String>,
}

impl TraceCheckReport {
    pub fn ok(&self) -> bool {
        self.problems.is_empty()
    }
}

/// Re-validate every pose and image reference in a sample trace.
pub fn check_trace(sample_dir: &Path) -> Result<TraceCheckReport, PipelineError> {
    let steps = load_trace(sample_dir)?;
    let mut report = TraceCheckReport {
        steps: steps.len(),
        poses_checked: 0,
        images_checked: 0,
        problems: Vec::new(),
    };
    for step in &steps {
        if let Some(pose) = &step.pose {
            report.poses_checked += 1;
            if let Err(reason) = pose.validate() {
                report
                    .problems
                    .push(format!("step {} ({}): {reason}", step.k, step.step));
            }
        }
        for image in &step.images {
            report.images_checked += 1;
            if !sample_dir.join(image).exists() {
                report.problems.push(format!(
                    "step {} ({}): missing image {image}",
                    step.k, step.step
                ));
            }
        }
    }
    Ok(report)
}

pub fn write_result(sample_dir: &Path, result: &SampleResult) -> Result<(), PipelineError> {
    let path = sample_dir.join(RESULT_FILE);
    let text = serde_json::to_string_pretty(result)
        .map_err(|e| PipelineError::Trace(format!("serialize result: {e}")))?;
    fs::write(&path, text + "\n")
        .map_err(|e| PipelineError::Io(format!("write {}: {e}", path.display())))
}
