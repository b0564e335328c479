//! The spatial knowledge base: short task-tagged viewpoint strategies that
//! get injected into the perspective-selection prompt.
//!
//! The base is tiny and human-editable, so retrieval is a plain tag match: a
//! subtask hint that matches an item's task tag (case-insensitive substring,
//! either direction) selects that item plus the generalization item;
//! otherwise all items are returned and the agent generalizes.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// The default knowledge base shipped with the library (7 items).
pub const DEFAULT_KB_JSON: &str = include_str!("../assets/knowledge_base.json");

const GENERALIZATION_TAG: &str = "generalization";

#[derive(Debug, Error)]
pub enum KnowledgeError {
    #[error("failed to read knowledge base {path}: {reason}")]
    Io { path: String, reason: String },
    #[error("malformed knowledge base: {0}")]
    Parse(String),
    #[error("duplicate knowledge item id {0}")]
    DuplicateId(u32),
    #[error("missing generalization item")]
    MissingGeneralization,
    #[error("empty strategy")]
    EmptyStrategy,
}

/// One viewpoint strategy, tagged with the task family it was mined from.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct KnowledgeItem {
    pub id: u32,
    #[serde(rename = "task")]
    pub task_tag: String,
    pub strategy: String,
}

/// An ordered collection of knowledge items. The file format is a bare JSON
/// array of items; `version` is in-memory metadata.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct KnowledgeBase {
    pub items: Vec<KnowledgeItem>,
    pub version: String,
}

impl KnowledgeBase {
    fn validate(items: Vec<KnowledgeItem>) -> Result<Self, KnowledgeError> {
        let mut seen = std::collections::HashSet::new();
        for item in &items {
            if !seen.insert(item.id) {
                return Err(KnowledgeError::DuplicateId(item.id));
            }
            if item.strategy.trim().is_empty() {
                return Err(KnowledgeError::EmptyStrategy);
            }
        }
        if !items
            .iter()
            .any(|i| i.task_tag.to_lowercase().contains(GENERALIZATION_TAG))
        {
            return Err(KnowledgeError::MissingGeneralization);
        }
        Ok(Self {
            items,
            version: "1".to_string(),
        })
    }

    pub fn generalization_item(&self) -> &KnowledgeItem {
        self.items
            .iter()
            .find(|i| i.task_tag.to_lowercase().contains(GENERALIZATION_TAG))
            .expect("validated at construction")
    }
}

/// The built-in 7-item knowledge base.
pub fn default_kb() -> KnowledgeBase {
    parse_kb(DEFAULT_KB_JSON).expect("embedded knowledge base is valid")
}

fn parse_kb(text: &str) -> Result<KnowledgeBase, KnowledgeError> {
    let items: Vec<KnowledgeItem> =
        serde_json::from_str(text).map_err(|e| KnowledgeError::Parse(e.to_string()))?;
    KnowledgeBase::validate(items)
}

/// Load a knowledge base file (JSON array of items), preserving item order.
pub fn load_kb(path: &Path) -> Result<KnowledgeBase, KnowledgeError> {
    let text = fs::read_to_string(path).map_err(|e| KnowledgeError::Io {
        path: path.display().to_string(),
        reason: e.to_string(),
    })?;
    parse_kb(&text)
}

/// Persist a knowledge base as a pretty-printed JSON array.
pub fn save_kb(kb: &KnowledgeBase, path: &Path) -> Result<(), KnowledgeError> {
    let text = serde_json::to_string_pretty(&kb.items)
        .map_err(|e| KnowledgeError::Parse(e.to_string()))?;
    fs::write(path, text + "\n").map_err(|e| KnowledgeError::Io {
        path: path.display().to_string(),
        reason: e.to_string(),
    })
}

/// Select the items to inject into the perspective prompt. A matching subtask
/// hint narrows the result to the matched items plus the generalization item;
/// otherwise (or with no hint) the whole base is returned.
pub fn select_items<'a>(
    kb: &'a KnowledgeBase,
    _question: &str,
    subtask_hint: Option<&str>,
) -> Vec<&'a KnowledgeItem> {
    if let Some(hint) = subtask_hint {
        let hint = hint.trim().to_lowercase();
        if !hint.is_empty() {
            let matched: Vec<&KnowledgeItem> = kb
                .items
                .iter()
                .filter(|i| {
                    let tag = i.task_tag.to_lowercase();
                    tag.contains(&hint) || hint.contains(&tag)
                })
                .collect();
            let generalization = kb.generalization_item();
            if matched.iter().any(|i| i.id != generalization.id) {
                let mut out: Vec<&KnowledgeItem> = matched
                    .into_iter()
                    .filter(|i| i.id != generalization.id)
                    .collect();
                out.push(generalization);
                return out;
            }
        }
    }
    kb.items.iter().collect()
}

/// Append a new item with the next free id. Returns the grown base; persist
/// with [`save_kb`].
pub fn append_item(
    kb: &KnowledgeBase,
    task_tag: impl Into<String>,
    strategy: impl Into<String>,
) -> Result<KnowledgeBase, KnowledgeError> {
    let strategy = strategy.into();
    if strategy.trim().is_empty() {
        return Err(KnowledgeError::EmptyStrategy);
    }
    let next_id = kb.items.iter().map(|i| i.id).max().unwrap_or(0) + 1;
    let mut items = kb.items.clone();
    items.push(KnowledgeItem {
        id: next_id,
        task_tag: task_tag.into(),
        strategy,
    });
    KnowledgeBase::validate(items)
}

/// Serialize items as the numbered list used in the perspective prompt.
pub fn serialize_items(items: &[&KnowledgeItem]) -> String {
    items
        .iter()
        .enumerate()
        .map(|(i, item)| format!("{}. [{}] {}", i + 1, item.task_tag, item.strategy))
        .collect::<Vec<_>>()
        .join("\n")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_kb_has_seven_items_ending_in_generalization() {
        let kb = default_kb();
        assert_eq!(kb.items.len(), 7);
        assert_eq!(kb.items[6].task_tag, "generalization");
        assert_eq!(kb.items[0].id, 1);
        assert_eq!(kb.items[0].task_tag, "Height_Higher");
    }

    #[test]
    fn default_kb_strategies_golden() {
        let kb = default_kb();
        let expected: [(&str, &str); 7] = [
            ("Height_Higher", "When comparing heights, select a position where all objects are visible, view them at eye level, and compare which is the tallest."),
            ("multi_object_viewpoint_towards_object", "To determine which side an object is on (front, back, left, right), first identify the central object in question, then switch to a viewpoint behind it, i.e., transform into the coordinate system of that object."),
            ("multi_object_parallel", "To judge whether objects are parallel, select a viewpoint that clearly shows the long edges of the objects, and check if the two long edges are parallel."),
            ("location_closer_to_camera", "When the question relates to the camera, the camera position should be at least the same as in the original image."),
            ("location_above", "To judge whether an object is directly above another, use a top-down view and project the objects onto the horizontal plane; an occlusion relationship indicates that one is directly above the other."),
            ("location_next_to", "To determine whether two objects are close, choose the viewpoint that reveals their maximum distance, then check if this maximum distance exceeds the diameter of the objects; if so, the objects may be considered close."),
            ("generalization", "Generalize to other task types based on the prior knowledge above."),
        ];
        for (item, (tag, strategy)) in kb.items.iter().zip(expected) {
            assert_eq!(item.task_tag, tag);
            assert_eq!(item.strategy, strategy);
        }
    }

    #[test]
    fn load_rejects_duplicates_and_missing_generalization() {
        let dup = r#"[
            {"id":1,"task":"a","strategy":"s"},
            {"id":1,"task":"generalization","strategy":"s"}
        ]"#;
        assert!(matches!(
            parse_kb(dup),
            Err(KnowledgeError::DuplicateId(1))
        ));
        assert!(matches!(
            parse_kb("[]"),
            Err(KnowledgeError::MissingGeneralization)
        ));
        assert!(parse_kb("not json").is_err());
    }

    #[test]
    fn select_items_hint_matching() {
        let kb = default_kb();
        let picked = select_items(&kb, "Which is taller?", Some("Height_Higher"));
        assert_eq!(picked.len(), 2);
        assert_eq!(picked[0].id, 1);
        assert_eq!(picked[1].id, 7);
        assert!(picked[0].strategy.contains("view them at eye level"));

        // absent tag falls back to the full base
        let picked = select_items(&kb, "q", Some("reachability"));
        assert_eq!(picked.len(), 7);
        let picked = select_items(&kb, "q", None);
        assert_eq!(picked.len(), 7);
        // output always contains the generalization item
        assert!(picked.iter().any(|i| i.id == 7));
    }

    #[test]
    fn append_and_roundtrip() {
        let kb = default_kb();
        let grown = append_item(&kb, "reachability", "Use a side view to compare gaps.").unwrap();
        assert_eq!(grown.items.len(), 8);
        assert_eq!(grown.items[7].id, 8);
        assert!(matches!(
            append_item(&kb, "t", "   "),
            Err(KnowledgeError::EmptyStrategy)
        ));

        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("kb.json");
        save_kb(&grown, &path).unwrap();
        let loaded = load_kb(&path).unwrap();
        assert_eq!(loaded, grown);
    }

    #[test]
    fn serialize_items_is_a_numbered_list() {
        let kb = default_kb();
        let picked = select_items(&kb, "q", Some("location_above"));
        let text = serialize_items(&picked);
        assert!(text.starts_with("1. [location_above]"));
        assert!(text.lines().count() == 2);
        assert!(text.contains("2. [generalization]"));
    }
}
