//! Strict parsing of agent replies: pull the first balanced JSON object out
//! of arbitrary prose (code fences included) and validate it against the
//! schema of the template that prompted it. Never panics on any input.

use serde::Serialize;
use serde_json::Value;

use super::templates::TemplateId;

/// A parsed reply carrying the raw text alongside the structured value.
#[derive(Debug, Clone, Serialize)]
pub struct AgentReply {
    pub raw_text: String,
    pub parse_ok: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub parsed: Option<ParsedReply>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

/// Schema-validated reply payloads, one variant per template.
#[derive(Debug, Clone, Serialize)]
#[serde(tag = "kind")]
pub enum ParsedReply {
    Keywords {
        original: Vec<String>,
        abbreviated: Vec<String>,
        expanded: Vec<String>,
    },
    Perspective {
        think: String,
        perspective: String,
    },
    Coords {
        think: String,
        x: f64,
        y: f64,
        pitch_degrees: f64,
    },
    Answer {
        observation: String,
        reasoning: String,
        answer: String,
    },
    Baseline {
        reasoning: String,
        answer: String,
    },
    ViewParams {
        analysis: String,
        yaw_degrees: f64,
        pitch_degrees: f64,
        distance: f64,
    },
}

/// Extract the first balanced top-level JSON object from `raw`, tolerating
/// surrounding prose and code fences.
pub fn extract_first_json_object(raw: &str) -> Option<Value> {
    let bytes = raw.as_bytes();
    let mut start = 0usize;
    while let Some(open) = raw[start..].find('{').map(|i| i + start) {
        if let Some(end) = balanced_end(bytes, open) {
            let candidate = &raw[open..=end];
            if let Ok(v @ Value::Object(_)) = serde_json::from_str::<Value>(candidate) {
                return Some(v);
            }
        }
        start = open + 1;
    }
    None
}

// Scan for the matching close brace, honoring strings and escapes. Returns
// the byte index of the closing brace.
fn balanced_end(bytes: &[u8], open: usize) -> Option<usize> {
    let mut depth = 0i32;
    let mut in_string = false;
    let mut escaped = false;
    for (i, &b) in bytes.iter().enumerate().skip(open) {
        if in_string {
            if escaped {
                escaped = false;
            } else if b == b'\\' {
                escaped = true;
            } else if b == b'"' {
                in_string = false;
            }
            continue;
        }
        match b {
            b'"' => in_string = true,
            b'{' => depth += 1,
            b'}' => {
                depth -= 1;
                if depth == 0 {
                    return Some(i);
                }
            }
            _ => {}
        }
    }
    None
}

fn get_string(obj: &Value, key: &str) -> Result<String, String> {
    match obj.get(key) {
        Some(Value::String(s)) => Ok(s.clone()),
        Some(_) => Err(format!("key {key:?} is not a string")),
        None => Err(format!("missing key {key:?}")),
    }
}

fn get_string_array(obj: &Value, key: &str) -> Result<Vec<String>, String> {
    match obj.get(key) {
        Some(Value::Array(items)) => items
            .iter()
            .map(|v| match v {
                Value::String(s) => Ok(s.clone()),
                other => Err(format!("key {key:?} contains non-string {other}")),
            })
            .collect(),
        Some(_) => Err(format!("key {key:?} is not an array")),
        None => Err(format!("missing key {key:?}")),
    }
}

fn get_number_array(obj: &Value, key: &str, len: usize) -> Result<Vec<f64>, String> {
    match obj.get(key) {
        Some(Value::Array(items)) => {
            if items.len() != len {
                return Err(format!("{key} length {} != {len}", items.len()));
            }
            items
                .iter()
                .map(|v| v.as_f64().ok_or_else(|| format!("{key} holds non-number {v}")))
                .collect()
        }
        Some(_) => Err(format!("key {key:?} is not an array")),
        None => Err(format!("missing key {key:?}")),
    }
}

fn validate(template: TemplateId, obj: &Value) -> Result<ParsedReply, String> {
    match template {
        TemplateId::P1Extract => Ok(ParsedReply::Keywords {
            original: get_string_array(obj, "Keywords")?,
            abbreviated: get_string_array(obj, "Abbreviated keywords")?,
            expanded: get_string_array(obj, "Expanded keywords")?,
        }),
        TemplateId::P2Perspective => Ok(ParsedReply::Perspective {
            think: get_string(obj, "Think")?,
            perspective: get_string(obj, "Perspective")?,
        }),
        TemplateId::P3Coords => {
            let think = get_string(obj, "Think")?;
            let coords = get_number_array(obj, "Coords", 3)?;
            let pitch = coords[2];
            if !(-90.0..=90.0).contains(&pitch) {
                return Err(format!("pitch {pitch} outside [-90, 90]"));
            }
            Ok(ParsedReply::Coords {
                think,
                x: coords[0],
                y: coords[1],
                pitch_degrees: pitch,
            })
        }
        TemplateId::P4Answer => Ok(ParsedReply::Answer {
            observation: get_string(obj, "Observation")?,
            reasoning: get_string(obj, "Reasoning")?,
            answer: get_string(obj, "Answer")?,
        }),
        TemplateId::P5Baseline => Ok(ParsedReply::Baseline {
            reasoning: get_string(obj, "Reasoning")?,
            answer: get_string(obj, "Answer")?,
        }),
        TemplateId::P6DirectParams => {
            let analysis = get_string(obj, "View_Analysis")?;
            let params = get_number_array(obj, "View_Params", 3)?;
            let (yaw, pitch, distance) = (params[0], params[1], params[2]);
            if !(-180.0..=180.0).contains(&yaw) {
                return Err(format!("yaw {yaw} outside [-180, 180]"));
            }
            if !(-90.0..=90.0).contains(&pitch) {
                return Err(format!("pitch {pitch} outside [-90, 90]"));
            }
            if !(0.0..=10.0).contains(&distance) {
                return Err(format!("distance {distance} outside [0, 10]"));
            }
            Ok(ParsedReply::ViewParams {
                analysis,
                yaw_degrees: yaw,
                pitch_degrees: pitch,
                distance,
            })
        }
    }
}

/// Parse a raw reply against the schema of `template`. Always returns a value
/// (parse failures are reported through `parse_ok` / `error`).
pub fn parse_json_reply(raw: &str, template: TemplateId) -> AgentReply {
    let Some(obj) = extract_first_json_object(raw) else {
        return AgentReply {
            raw_text: raw.to_string(),
            parse_ok: false,
            parsed: None,
            error: Some("no JSON object found".to_string()),
        };
    };
    match validate(template, &obj) {
        Ok(parsed) => AgentReply {
            raw_text: raw.to_string(),
            parse_ok: true,
            parsed: Some(parsed),
            error: None,
        },
        Err(reason) => AgentReply {
            raw_text: raw.to_string(),
            parse_ok: false,
            parsed: None,
            error: Some(reason),
        },
    }
}
