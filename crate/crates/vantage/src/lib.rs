//! Spatial question answering over reconstructed 3D scenes.
//!
//! The library turns a per-object triangle-mesh scene, a natural-language
//! question, and a chat-style vision-language agent into an answer: it picks
//! an observation strategy from a small knowledge base, asks the agent for
//! camera coordinates on annotated coordinate maps, converts those into
//! look-at extrinsics, renders novel views with a built-in software
//! rasterizer, validates the views, and iterates until the agent commits to
//! an answer. A benchmark harness reproduces the usual subtask/weighted
//! accuracy bookkeeping for multiple-choice spatial QA sets.

pub mod agents;
pub mod camera;
pub mod evalbench;
pub mod fixtures;
pub mod geometry;
pub mod knowledge;
pub mod masks;
pub mod pipeline;
pub mod render;
