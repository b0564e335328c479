//! Geometric pre-validation of a synthesized view. This is the cheap gate in
//! front of the agent's semantic verdict: it catches frames where an object
//! falls outside the image, shrinks below the coverage floor, or where the
//! camera ended up inside an object.

use serde::Serialize;

use crate::camera::{project, Extrinsics, Intrinsics};
use crate::geometry::{object_aabb, Scene};

use super::raster::rasterize_with_ids;
use super::{Image, RenderOptions};

/// Minimum fraction of frame pixels each object must cover.
pub const DEFAULT_COVERAGE_THRESHOLD: f64 = 0.002;

#[derive(Debug, Clone, Serialize)]
pub struct ObjectViewStats {
    pub id: String,
    /// All eight AABB corners project in front of the camera and inside the
    /// frame.
    pub in_frame: bool,
    /// Fraction of frame pixels covered by this object.
    pub pixel_coverage: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct ViewCheckReport {
    pub objects: Vec<ObjectViewStats>,
    pub camera_inside_object: bool,
    pub coverage_threshold: f64,
    pub pass: bool,
}

impl ViewCheckReport {
    /// Human-readable reason for a failed check, used in retry prompts.
    pub fn failure_reason(&self) -> Option<String> {
        if self.pass {
            return None;
        }
        if self.camera_inside_object {
            return Some("the camera position is inside an object".to_string());
        }
        let mut reasons = Vec::new();
        for o in &self.objects {
            if !o.in_frame {
                reasons.push(format!("object '{}' is not fully in frame", o.id));
            } else if o.pixel_coverage < self.coverage_threshold {
                reasons.push(format!(
                    "object '{}' appears too small ({:.3}% of the frame)",
                    o.id,
                    o.pixel_coverage * 100.0
                ));
            }
        }
        Some(reasons.join("; "))
    }
}

/// Check a rendered view against the scene and pose it was produced from.
/// Coverage is recomputed from an object-id rasterization pass of the same
/// deterministic rasterizer that produced `rendered`.
pub fn geometric_view_check(
    scene: &Scene,
    ext: &Extrinsics,
    intr: &Intrinsics,
    rendered: &Image,
    coverage_threshold: f64,
) -> ViewCheckReport {
    debug_assert_eq!((rendered.width, rendered.height), (intr.width, intr.height));
    let ids = rasterize_with_ids(scene, ext, intr, &RenderOptions::default());

    let mut camera_inside = false;
    let objects: Vec<ObjectViewStats> = scene
        .objects
        .iter()
        .enumerate()
        .map(|(index, obj)| {
            let aabb = object_aabb(obj);
            if aabb.contains(ext.position) {
                camera_inside = true;
            }
            let in_frame = aabb.corners().iter().all(|c| match project(*c, ext, intr) {
                Ok((u, v, _)) => {
                    u >= 0.0 && u < intr.width as f64 && v >= 0.0 && v < intr.height as f64
                }
                Err(_) => false,
            });
            ObjectViewStats {
                id: obj.id.clone(),
                in_frame,
                pixel_coverage: ids.coverage(index),
            }
        })
        .collect();

    let pass = !camera_inside
        && objects
            .iter()
            .all(|o| o.in_frame && o.pixel_coverage >= coverage_threshold);
    ViewCheckReport {
        objects,
        camera_inside_object: camera_inside,
        coverage_threshold,
        pass,
    }
}
