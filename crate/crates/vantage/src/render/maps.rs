//! The two coordinate maps attached to the coordinate-selection prompt: a
//! top-down orthographic XY grid and a perspective side view overlaid with a
//! labeled pitch fan.

use crate::camera::{look_at_extrinsics, spherical_to_world, CameraSpherical, Extrinsics, Intrinsics};
use crate::geometry::Scene;

use super::font::{draw_text, text_height, text_width};
use super::raster::{fill_triangle_ortho_topdown, rasterize};
use super::{Image, RenderOptions};

/// World-unit size of the square orthographic window of the top-down map.
pub const TOPDOWN_WINDOW: f64 = 3.0;
/// World-unit spacing between adjacent grid lines.
pub const TOPDOWN_GRID_INTERVAL: f64 = 0.5;
/// Pitch values (degrees) of the side-view fan, drawn in this order.
pub const SIDE_FAN_PITCHES: [f64; 7] = [-90.0, -60.0, -30.0, 0.0, 30.0, 60.0, 90.0];

pub const MAP_BACKGROUND: [u8; 3] = [24, 26, 30];
pub const GRID_COLOR: [u8; 3] = [168, 168, 168];
pub const AXIS_X_COLOR: [u8; 3] = [255, 0, 0];
pub const AXIS_Y_COLOR: [u8; 3] = [0, 255, 0];
pub const FAN_COLOR: [u8; 3] = [40, 110, 255];
pub const LABEL_COLOR: [u8; 3] = [255, 255, 255];

const LABEL_SCALE: u32 = 2;

/// A numeric label placed on a map, anchored at the top-left of its glyph box.
#[derive(Debug, Clone)]
pub struct MapLabel {
    pub value: f64,
    pub text: String,
    pub anchor: (i32, i32),
}

/// Pixel geometry of the top-down map, exposed so callers (and tests) can
/// convert between world and pixel coordinates.
#[derive(Debug, Clone)]
pub struct TopdownLayout {
    pub center_px: (f64, f64),
    pub pixels_per_unit_x: f64,
    pub pixels_per_unit_y: f64,
    /// Pixel columns of vertical grid lines, left to right (world x = k*0.5).
    pub vertical_grid_px: Vec<u32>,
    /// Pixel rows of horizontal grid lines, top to bottom (world y = k*0.5).
    pub horizontal_grid_px: Vec<u32>,
    pub x_axis_labels: Vec<MapLabel>,
    pub y_axis_labels: Vec<MapLabel>,
}

impl TopdownLayout {
    /// World (x, y) to pixel (u, v): +x right, +y up.
    pub fn world_to_px(&self, x: f64, y: f64) -> (f64, f64) {
        (
            self.center_px.0 + x * self.pixels_per_unit_x,
            self.center_px.1 - y * self.pixels_per_unit_y,
        )
    }
}

/// Compute the top-down map layout for the given intrinsics.
pub fn topdown_layout(intr: &Intrinsics) -> TopdownLayout {
    let center_px = (intr.width as f64 / 2.0, intr.height as f64 / 2.0);
    let ppu_x = intr.width as f64 / TOPDOWN_WINDOW;
    let ppu_y = intr.height as f64 / TOPDOWN_WINDOW;

    let half_window = TOPDOWN_WINDOW / 2.0;
    let max_k = (half_window / TOPDOWN_GRID_INTERVAL).floor() as i32;

    let mut vertical = Vec::new();
    let mut horizontal = Vec::new();
    let mut x_labels = Vec::new();
    let mut y_labels = Vec::new();
    for k in -max_k..=max_k {
        let world = k as f64 * TOPDOWN_GRID_INTERVAL;
        let u = (center_px.0 + world * ppu_x).round();
        let v = (center_px.1 - world * ppu_y).round();
        if u >= 0.0 && u < intr.width as f64 {
            vertical.push(u as u32);
        }
        if v >= 0.0 && v < intr.height as f64 {
            horizontal.push(v as u32);
        }
        if k != 0 {
            let text = format!("{world:.1}");
            let w = text_width(&text, LABEL_SCALE) as i32;
            x_labels.push(MapLabel {
                value: world,
                text: text.clone(),
                anchor: (u as i32 - w / 2, center_px.1 as i32 + 5),
            });
            y_labels.push(MapLabel {
                value: world,
                text,
                anchor: (center_px.0 as i32 + 6, v as i32 - text_height(LABEL_SCALE) as i32 / 2),
            });
        }
    }
    TopdownLayout {
        center_px,
        pixels_per_unit_x: ppu_x,
        pixels_per_unit_y: ppu_y,
        vertical_grid_px: vertical,
        horizontal_grid_px: horizontal,
        x_axis_labels: x_labels,
        y_axis_labels: y_labels,
    }
}

fn draw_topdown_frame(img: &mut Image, layout: &TopdownLayout) {
    for &u in &layout.vertical_grid_px {
        for v in 0..img.height {
            img.put(u, v, GRID_COLOR);
        }
    }
    for &v in &layout.horizontal_grid_px {
        for u in 0..img.width {
            img.put(u, v, GRID_COLOR);
        }
    }
    // X axis: red horizontal line through the center; Y axis: green vertical
    let cy = layout.center_px.1.round() as u32;
    for u in 0..img.width {
        img.put(u, cy, AXIS_X_COLOR);
    }
    let cx = layout.center_px.0.round() as u32;
    for v in 0..img.height {
        img.put(cx, v, AXIS_Y_COLOR);
    }
}

fn draw_topdown_labels(img: &mut Image, layout: &TopdownLayout) {
    for label in layout.x_axis_labels.iter().chain(&layout.y_axis_labels) {
        draw_text(
            img,
            label.anchor.0,
            label.anchor.1,
            &label.text,
            LABEL_SCALE,
            LABEL_COLOR,
        );
    }
}

/// Grid, axes, and labels only (no objects). Used for pixel-level checks of
/// the frame geometry.
pub fn render_topdown_grid(intr: &Intrinsics) -> Image {
    let layout = topdown_layout(intr);
    let mut img = Image::new(intr.width, intr.height, MAP_BACKGROUND);
    draw_topdown_frame(&mut img, &layout);
    draw_topdown_labels(&mut img, &layout);
    img
}

/// Orthographic top-down map of a normalized scene: 0.5-unit grid, red X
/// axis, green Y axis, white coordinate labels, objects flat-shaded with the
/// palette, world (0,0) at the image center.
pub fn render_topdown_map(scene: &Scene, intr: &Intrinsics) -> Image {
    let layout = topdown_layout(intr);
    let mut img = Image::new(intr.width, intr.height, MAP_BACKGROUND);
    draw_topdown_frame(&mut img, &layout);

    let opts = RenderOptions::default();
    let mut depth = vec![f64::NEG_INFINITY; (intr.width * intr.height) as usize];
    for (index, obj) in scene.objects.iter().enumerate() {
        let color = opts.object_color(index);
        for face in &obj.faces {
            let verts = [
                obj.vertices[face[0]],
                obj.vertices[face[1]],
                obj.vertices[face[2]],
            ];
            let screen = verts.map(|w| {
                let (u, v) = layout.world_to_px(w.x, w.y);
                (u, v, w.z)
            });
            fill_triangle_ortho_topdown(&mut img, &mut depth, intr.width, intr.height, screen, color);
        }
    }

    draw_topdown_labels(&mut img, &layout);
    img
}

/// One line of the side-view pitch fan.
#[derive(Debug, Clone)]
pub struct FanEntry {
    pub pitch_degrees: f64,
    /// Outer end of the line in pixels.
    pub end_px: (f64, f64),
    pub label: String,
    pub label_anchor: (i32, i32),
}

/// Pixel geometry of the side-view map overlay.
#[derive(Debug, Clone)]
pub struct SideLayout {
    /// Projected scene center (the fan origin).
    pub center_px: (f64, f64),
    /// Line length in pixels (45% of the frame height).
    pub fan_length: f64,
    pub entries: Vec<FanEntry>,
    /// Camera pose the side view is rendered from.
    pub camera: CameraSpherical,
}

/// Compute the side-view camera (yaw 0, pitch 0, r = 2x bounding radius) and
/// the fan geometry: lines start at the projected center and extend at the
/// screen-space angle matching each pitch value, so pitch 0 is horizontal and
/// pitch 90 points straight up.
pub fn side_layout(scene: &Scene, intr: &Intrinsics) -> SideLayout {
    let r = (2.0 * scene.bounding_radius()).max(1e-3);
    let camera = CameraSpherical {
        yaw: 0.0,
        pitch: 0.0,
        r,
    };
    let center_px = (intr.cx, intr.cy);
    let fan_length = 0.45 * intr.height as f64;
    let entries = SIDE_FAN_PITCHES
        .iter()
        .map(|&pitch| {
            let rad = pitch.to_radians();
            let dir = (rad.cos(), -rad.sin()); // screen y grows downward
            let end_px = (
                center_px.0 + fan_length * dir.0,
                center_px.1 + fan_length * dir.1,
            );
            let label = format!("{pitch:.0}");
            let w = text_width(&label, LABEL_SCALE) as f64;
            let h = text_height(LABEL_SCALE) as f64;
            // centered slightly short of the endpoint so it stays in frame
            let lx = center_px.0 + (fan_length - 26.0) * dir.0 - w / 2.0;
            let ly = center_px.1 + (fan_length - 26.0) * dir.1 - h / 2.0;
            FanEntry {
                pitch_degrees: pitch,
                end_px,
                label,
                label_anchor: (lx.round() as i32, ly.round() as i32),
            }
        })
        .collect();
    SideLayout {
        center_px,
        fan_length,
        entries,
        camera,
    }
}

fn draw_line(img: &mut Image, a: (f64, f64), b: (f64, f64), color: [u8; 3], thickness: i32) {
    let dx = b.0 - a.0;
    let dy = b.1 - a.1;
    let steps = dx.abs().max(dy.abs()).ceil().max(1.0) as usize;
    for s in 0..=steps {
        let t = s as f64 / steps as f64;
        let x = a.0 + dx * t;
        let y = a.1 + dy * t;
        for oy in 0..thickness {
            for ox in 0..thickness {
                let px = x.round() as i32 + ox;
                let py = y.round() as i32 + oy;
                if px >= 0 && py >= 0 {
                    img.put(px as u32, py as u32, color);
                }
            }
        }
    }
}

/// Perspective side view of the scene with the blue pitch fan overlay: lines
/// run from the projected center outward, the outer end marking the camera
/// position for that pitch, each labeled with its degree value.
pub fn render_sideview_map(scene: &Scene, intr: &Intrinsics) -> (Image, SideLayout, Extrinsics) {
    let layout = side_layout(scene, intr);
    let (_, position) = spherical_to_world(layout.camera, scene.center);
    let ext = look_at_extrinsics(position, scene.center, scene.up)
        .expect("side view pose is never degenerate");
    let mut img = rasterize(scene, &ext, intr, &RenderOptions::default());
    for entry in &layout.entries {
        draw_line(&mut img, layout.center_px, entry.end_px, FAN_COLOR, 2);
    }
    for entry in &layout.entries {
        draw_text(
            &mut img,
            entry.label_anchor.0,
            entry.label_anchor.1,
            &entry.label,
            LABEL_SCALE,
            LABEL_COLOR,
        );
    }
    (img, layout, ext)
}
