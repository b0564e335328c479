//! Benchmark loading, batch execution, and accuracy aggregation.
//!
//! The overall number is the micro average (total correct over total
//! answered samples), which equals the subtask accuracies weighted by their
//! sample proportions; the macro (unweighted) mean is reported alongside for
//! transparency.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;
use std::sync::Mutex;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::agents::{
    parse_json_reply, render_prompt, AgentSet, ParsedReply, PromptSlots, TemplateId,
};
use crate::camera::Intrinsics;
use crate::knowledge::KnowledgeBase;
use crate::pipeline::{run_sample, PipelineConfig, SampleSpec, ServiceClients};

#[derive(Debug, Error)]
pub enum BenchError {
    #[error("cannot read benchmark {path}: {reason}")]
    Io { path: String, reason: String },
    #[error("benchmark {path} line {line}: {reason}")]
    Schema {
        path: String,
        line: usize,
        reason: String,
    },
    #[error("configuration error: {0}")]
    Config(String),
}

/// One labeled answer option.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OptionChoice {
    pub label: String,
    pub text: String,
}

/// One benchmark question.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BenchmarkSample {
    pub id: String,
    pub image: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scene: Option<String>,
    pub question: String,
    pub options: Vec<OptionChoice>,
    pub answer: String,
    pub subtask: String,
    pub benchmark: String,
}

impl BenchmarkSample {
    /// The question text sent to agents: the question plus labeled options.
    pub fn question_with_options(&self) -> String {
        let mut out = self.question.clone();
        out.push_str("\nOptions:");
        for opt in &self.options {
            out.push_str(&format!("\n{}. {}", opt.label, opt.text));
        }
        out
    }
}

/// Load a JSONL benchmark, one sample per line, validating the schema and
/// rejecting duplicate ids. An empty file is a valid empty benchmark.
pub fn load_benchmark(path: &Path) -> Result<Vec<BenchmarkSample>, BenchError> {
    let text = fs::read_to_string(path).map_err(|e| BenchError::Io {
        path: path.display().to_string(),
        reason: e.to_string(),
    })?;
    let mut samples = Vec::new();
    let mut seen = std::collections::HashSet::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        if raw.trim().is_empty() {
            continue;
        }
        let schema_err = |reason: String| BenchError::Schema {
            path: path.display().to_string(),
            line,
            reason,
        };
        let sample: BenchmarkSample =
            serde_json::from_str(raw).map_err(|e| schema_err(e.to_string()))?;
        if sample.options.len() < 2 {
            return Err(schema_err(format!(
                "sample {} has {} options, need at least 2",
                sample.id,
                sample.options.len()
            )));
        }
        if !sample.options.iter().any(|o| o.label == sample.answer) {
            return Err(schema_err(format!(
                "sample {}: answer label {:?} is not among the option labels",
                sample.id, sample.answer
            )));
        }
        if !seen.insert(sample.id.clone()) {
            return Err(schema_err(format!("duplicate sample id {:?}", sample.id)));
        }
        samples.push(sample);
    }
    Ok(samples)
}

/// Check a predicted answer against the ground-truth label: exact label
/// match after trimming and case-folding, or the full option text beginning
/// with the label followed by a delimiter.
pub fn answer_matches(predicted: &str, label: &str) -> bool {
    let predicted = predicted.trim().to_lowercase();
    let label = label.trim().to_lowercase();
    if predicted == label {
        return true;
    }
    if let Some(rest) = predicted.strip_prefix(&label) {
        if let Some(c) = rest.chars().next() {
            return matches!(c, '.' | ')' | ':' | '-' | ' ');
        }
    }
    false
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EvalMode {
    /// Full view-synthesis pipeline per sample.
    Pipeline,
    /// Single direct question over the raw image.
    Baseline,
}

impl EvalMode {
    pub fn as_str(&self) -> &'static str {
        match self {
            EvalMode::Pipeline => "pipeline",
            EvalMode::Baseline => "baseline",
        }
    }
}

impl std::str::FromStr for EvalMode {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "pipeline" => Ok(EvalMode::Pipeline),
            "baseline" => Ok(EvalMode::Baseline),
            other => Err(format!("unknown mode {other:?} (expected pipeline or baseline)")),
        }
    }
}

/// Per-sample outcome kept in the report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleVerdict {
    pub sample_id: String,
    pub subtask: String,
    pub expected: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub predicted: Option<String>,
    pub correct: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubtaskStats {
    pub n: usize,
    pub correct: usize,
    pub accuracy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub mode: String,
    pub per_subtask: BTreeMap<String, SubtaskStats>,
    pub overall: SubtaskStats,
    /// Unweighted mean of the subtask accuracies.
    pub macro_average: f64,
    pub verdicts: Vec<SampleVerdict>,
    pub config: serde_json::Value,
}

/// Proportion-weighted mean of (accuracy, weight) pairs; weights are
/// normalized so they need not sum to one.
pub fn weighted_average(rates: &[(f64, f64)]) -> f64 {
    let total: f64 = rates.iter().map(|(_, w)| w).sum();
    if total == 0.0 {
        return 0.0;
    }
    rates.iter().map(|(acc, w)| acc * w).sum::<f64>() / total
}

/// Fold verdicts into the per-subtask and overall statistics. Order of the
/// input does not matter: verdicts are sorted by sample id internally.
pub fn aggregate(
    verdicts: &[SampleVerdict],
    mode: EvalMode,
    config: serde_json::Value,
) -> EvalReport {
    let mut verdicts: Vec<SampleVerdict> = verdicts.to_vec();
    verdicts.sort_by(|a, b| a.sample_id.cmp(&b.sample_id));

    let mut per_subtask: BTreeMap<String, SubtaskStats> = BTreeMap::new();
    let mut overall = SubtaskStats {
        n: 0,
        correct: 0,
        accuracy: 0.0,
    };
    for v in &verdicts {
        let stats = per_subtask.entry(v.subtask.clone()).or_insert(SubtaskStats {
            n: 0,
            correct: 0,
            accuracy: 0.0,
        });
        stats.n += 1;
        overall.n += 1;
        if v.correct {
            stats.correct += 1;
            overall.correct += 1;
        }
    }
    for stats in per_subtask.values_mut() {
        stats.accuracy = stats.correct as f64 / stats.n as f64;
    }
    overall.accuracy = if overall.n == 0 {
        0.0
    } else {
        overall.correct as f64 / overall.n as f64
    };
    let macro_average = if per_subtask.is_empty() {
        0.0
    } else {
        per_subtask.values().map(|s| s.accuracy).sum::<f64>() / per_subtask.len() as f64
    };
    EvalReport {
        mode: mode.as_str().to_string(),
        per_subtask,
        overall,
        macro_average,
        verdicts,
        config,
    }
}

/// Render the report as an aligned text table: one column per subtask plus
/// the weighted average, accuracies in percent.
pub fn render_table(report: &EvalReport) -> String {
    let mut names: Vec<&str> = report.per_subtask.keys().map(String::as_str).collect();
    names.push("Avg.");
    let mut acc_row: Vec<String> = report
        .per_subtask
        .values()
        .map(|s| format!("{:.1}", s.accuracy * 100.0))
        .collect();
    acc_row.push(format!("{:.1}", report.overall.accuracy * 100.0));
    let mut n_row: Vec<String> = report
        .per_subtask
        .values()
        .map(|s| s.n.to_string())
        .collect();
    n_row.push(report.overall.n.to_string());

    let widths: Vec<usize> = names
        .iter()
        .enumerate()
        .map(|(i, name)| name.len().max(acc_row[i].len()).max(n_row[i].len()))
        .collect();
    let fmt_row = |cells: &[String]| {
        cells
            .iter()
            .enumerate()
            .map(|(i, c)| format!("{:>width$}", c, width = widths[i]))
            .collect::<Vec<_>>()
            .join("  ")
    };
    let header: Vec<String> = names.iter().map(|s| s.to_string()).collect();
    format!(
        "{}\n{}\n{}\nmacro average: {:.1}",
        fmt_row(&header),
        fmt_row(&acc_row),
        fmt_row(&n_row),
        report.macro_average * 100.0
    )
}

/// Everything an evaluation run needs besides the samples.
pub struct EvalContext<'a> {
    pub config: &'a PipelineConfig,
    pub agents: &'a AgentSet,
    pub kb: &'a KnowledgeBase,
    pub services: &'a ServiceClients,
    pub intrinsics: &'a Intrinsics,
    /// Directory sample-relative image/scene paths resolve against
    /// (usually the benchmark file's directory).
    pub base_dir: &'a Path,
    /// Output directory for per-sample trace directories (pipeline mode).
    pub out_dir: &'a Path,
}

fn eval_one(
    sample: &BenchmarkSample,
    mode: EvalMode,
    ctx: &EvalContext,
) -> SampleVerdict {
    let mut verdict = SampleVerdict {
        sample_id: sample.id.clone(),
        subtask: sample.subtask.clone(),
        expected: sample.answer.clone(),
        predicted: None,
        correct: false,
        error: None,
    };
    let image_path = ctx.base_dir.join(&sample.image);
    match mode {
        EvalMode::Baseline => {
            let question = sample.question_with_options();
            let original = match fs::read(&image_path) {
                Ok(bytes) => bytes,
                Err(e) => {
                    verdict.error = Some(format!("cannot read image: {e}"));
                    return verdict;
                }
            };
            let slots = PromptSlots {
                question: Some(question),
                ..Default::default()
            };
            let messages = match render_prompt(TemplateId::P5Baseline, &slots, vec![original]) {
                Ok(m) => m,
                Err(e) => {
                    verdict.error = Some(e.to_string());
                    return verdict;
                }
            };
            let raw = match ctx
                .agents
                .reasoner
                .chat(TemplateId::P5Baseline, &sample.id, &messages)
            {
                Ok(raw) => raw,
                Err(e) => {
                    verdict.error = Some(e.to_string());
                    return verdict;
                }
            };
            // any deviation from the required JSON format scores incorrect
            let reply = parse_json_reply(&raw, TemplateId::P5Baseline);
            match (reply.parse_ok, reply.parsed) {
                (true, Some(ParsedReply::Baseline { answer, .. })) => {
                    verdict.correct = answer_matches(&answer, &sample.answer);
                    verdict.predicted = Some(answer);
                }
                _ => {
                    verdict.error =
                        Some(reply.error.unwrap_or_else(|| "malformed reply".into()));
                }
            }
        }
        EvalMode::Pipeline => {
            let scene_path = sample.scene.as_ref().map(|s| ctx.base_dir.join(s));
            let question = sample.question_with_options();
            let spec = SampleSpec {
                sample_id: &sample.id,
                scene_manifest: scene_path.as_deref(),
                image: &image_path,
                question: &question,
                subtask_hint: Some(&sample.subtask),
            };
            match run_sample(
                &spec,
                ctx.config,
                ctx.agents,
                ctx.kb,
                ctx.services,
                ctx.intrinsics,
                ctx.out_dir,
            ) {
                Ok(result) => {
                    if result.answered {
                        let answer = result.answer.unwrap_or_default();
                        verdict.correct = answer_matches(&answer, &sample.answer);
                        verdict.predicted = Some(answer);
                    } else {
                        verdict.error = result.error;
                    }
                }
                Err(e) => verdict.error = Some(e.to_string()),
            }
        }
    }
    verdict
}

/// Evaluate samples with a fixed-size worker pool. Per-sample failures score
/// incorrect and are itemized in the verdicts; the report is identical for
/// any worker count.
pub fn run_eval(
    samples: &[BenchmarkSample],
    mode: EvalMode,
    ctx: &EvalContext,
    workers: usize,
) -> Result<EvalReport, BenchError> {
    if workers == 0 {
        return Err(BenchError::Config("workers must be at least 1".into()));
    }
    ctx.config
        .validate()
        .map_err(|e| BenchError::Config(e.to_string()))?;
    fs::create_dir_all(ctx.out_dir).map_err(|e| BenchError::Io {
        path: ctx.out_dir.display().to_string(),
        reason: e.to_string(),
    })?;

    let workers = workers.min(samples.len()).max(1);
    let slots: Mutex<Vec<Option<SampleVerdict>>> = Mutex::new(vec![None; samples.len()]);
    std::thread::scope(|scope| {
        for w in 0..workers {
            let slots = &slots;
            scope.spawn(move || {
                for (i, sample) in samples.iter().enumerate() {
                    if i % workers != w {
                        continue;
                    }
                    let verdict = eval_one(sample, mode, ctx);
                    slots.lock().expect("verdict slots")[i] = Some(verdict);
                }
            });
        }
    });
    let verdicts: Vec<SampleVerdict> = slots
        .into_inner()
        .expect("verdict slots")
        .into_iter()
        .map(|v| v.expect("every sample evaluated"))
        .collect();

    let config_echo = serde_json::json!({
        "mode": mode.as_str(),
        "pipeline": ctx.config,
        "intrinsics": ctx.intrinsics,
    });
    Ok(aggregate(&verdicts, mode, config_echo))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn verdict(id: &str, subtask: &str, correct: bool) -> SampleVerdict {
        SampleVerdict {
            sample_id: id.into(),
            subtask: subtask.into(),
            expected: "A".into(),
            predicted: Some(if correct { "A" } else { "B" }.into()),
            correct,
            error: None,
        }
    }

    #[test]
    fn load_rejects_bad_schema_with_line_numbers() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bench.jsonl");

        // answer label missing from the options
        fs::write(&path, r#"{"id":"a","image":"i.png","question":"q","options":[{"label":"A","text":"x"},{"label":"B","text":"y"}],"answer":"C","subtask":"s","benchmark":"b"}"#).unwrap();
        let err = load_benchmark(&path).unwrap_err();
        match err {
            BenchError::Schema { line, reason, .. } => {
                assert_eq!(line, 1);
                assert!(reason.contains("not among"));
            }
            other => panic!("unexpected {other}"),
        }

        // duplicate ids
        let one = r#"{"id":"a","image":"i.png","question":"q","options":[{"label":"A","text":"x"},{"label":"B","text":"y"}],"answer":"A","subtask":"s","benchmark":"b"}"#;
        fs::write(&path, format!("{one}\n{one}\n")).unwrap();
        let err = load_benchmark(&path).unwrap_err();
        match err {
            BenchError::Schema { line, reason, .. } => {
                assert_eq!(line, 2);
                assert!(reason.contains("duplicate"));
            }
            other => panic!("unexpected {other}"),
        }

        // one option only
        fs::write(&path, r#"{"id":"a","image":"i.png","question":"q","options":[{"label":"A","text":"x"}],"answer":"A","subtask":"s","benchmark":"b"}"#).unwrap();
        assert!(load_benchmark(&path).is_err());

        // empty file is a valid empty benchmark
        fs::write(&path, "").unwrap();
        assert!(load_benchmark(&path).unwrap().is_empty());
    }

    #[test]
    fn answer_matching_rules() {
        assert!(answer_matches("A", "A"));
        assert!(answer_matches("  b ", "B"));
        assert!(answer_matches("A. the red box", "A"));
        assert!(answer_matches("b) yes", "B"));
        assert!(!answer_matches("AB", "A"));
        assert!(!answer_matches("the red box", "A"));
        assert!(!answer_matches("", "A"));
    }

    #[test]
    fn aggregate_counts_and_weighted_average() {
        let mut verdicts = Vec::new();
        // 3 of 4 correct in s1, 1 of 2 in s2 -> overall 4/6
        for (i, c) in [true, true, true, false].iter().enumerate() {
            verdicts.push(verdict(&format!("a{i}"), "s1", *c));
        }
        for (i, c) in [true, false].iter().enumerate() {
            verdicts.push(verdict(&format!("b{i}"), "s2", *c));
        }
        let report = aggregate(&verdicts, EvalMode::Baseline, serde_json::Value::Null);
        assert_eq!(report.overall.n, 6);
        assert_eq!(report.overall.correct, 4);
        assert!((report.overall.accuracy - 4.0 / 6.0).abs() < 1e-12);
        assert_eq!(report.per_subtask["s1"].correct, 3);
        assert!((report.macro_average - (0.75 + 0.5) / 2.0).abs() < 1e-12);
        // micro equals the proportion-weighted mean of subtask accuracies
        let micro = weighted_average(&[(0.75, 4.0), (0.5, 2.0)]);
        assert!((report.overall.accuracy - micro).abs() < 1e-12);

        // permuting verdicts leaves the report identical
        let mut shuffled = verdicts.clone();
        shuffled.reverse();
        let report2 = aggregate(&shuffled, EvalMode::Baseline, serde_json::Value::Null);
        assert_eq!(
            serde_json::to_string(&report).unwrap(),
            serde_json::to_string(&report2).unwrap()
        );
    }

    #[test]
    fn published_rows_reproduce_within_tenth() {
        // subtask proportions 13.33 / 33.34 / 20.00 / 33.33
        let props = [0.1333, 0.3334, 0.2000, 0.3333];
        let rows = [
            ([68.3, 78.7, 52.8, 57.6], 65.1),
            ([64.0, 73.0, 57.7, 57.4], 63.5),
            ([59.7, 72.7, 48.4, 51.2], 58.9),
            ([68.6, 84.8, 54.9, 67.1], 70.7),
        ];
        for (accs, expected) in rows {
            let rates: Vec<(f64, f64)> =
                accs.iter().copied().zip(props.iter().copied()).collect();
            let got = weighted_average(&rates);
            assert!((got - expected).abs() <= 0.1, "{got} vs {expected}");
        }
        // the two-subtask split 99.24 / 0.76
        let got = weighted_average(&[(77.7, 0.9924), (68.4, 0.0076)]);
        assert!((got - 77.6).abs() <= 0.1, "{got}");
        // all-ones input stays exactly one
        let got = weighted_average(&[(1.0, 0.1333), (1.0, 0.3334), (1.0, 0.2), (1.0, 0.3333)]);
        assert!((got - 1.0).abs() < 1e-12);
    }

    #[test]
    fn reaggregating_persisted_verdicts_reproduces_the_report() {
        let verdicts = vec![
            verdict("a", "s1", true),
            verdict("b", "s1", false),
            verdict("c", "s2", true),
        ];
        let config = serde_json::json!({"mode": "baseline"});
        let report = aggregate(&verdicts, EvalMode::Baseline, config.clone());
        let persisted = serde_json::to_string_pretty(&report).unwrap();

        // read the verdicts back out of the persisted report and re-aggregate
        let parsed: EvalReport = serde_json::from_str(&persisted).unwrap();
        let again = aggregate(&parsed.verdicts, EvalMode::Baseline, config);
        assert_eq!(persisted, serde_json::to_string_pretty(&again).unwrap());
    }

    #[test]
    fn table_rendering_is_aligned() {
        let report = aggregate(
            &[
                verdict("a", "Height", true),
                verdict("b", "Location", false),
            ],
            EvalMode::Baseline,
            serde_json::Value::Null,
        );
        let table = render_table(&report);
        let lines: Vec<&str> = table.lines().collect();
        assert!(lines[0].contains("Height"));
        assert!(lines[0].contains("Avg."));
        assert!(lines[1].contains("50.0"));
        assert!(lines[3].contains("macro average"));
    }
}
