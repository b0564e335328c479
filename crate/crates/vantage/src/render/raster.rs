//! Edge-function triangle rasterizer with a z-buffer.
//!
//! No anti-aliasing and no back-face culling; triangles crossing the near
//! plane are clipped before projection. Depth is interpolated as 1/z, which
//! is linear in screen space, and ties go to the earlier-drawn triangle so
//! output is a pure function of (scene, pose, intrinsics, options).

use crate::camera::{Extrinsics, Intrinsics};
use crate::geometry::{Scene, Vec3};

use super::{Image, RenderOptions};

/// Camera-space near clipping distance.
pub const NEAR_PLANE: f64 = 1e-3;

/// Rasterization result with per-pixel object ids (0 = background, i+1 for
/// object index i) and inverse-depth values (0 where uncovered).
pub struct RasterOutput {
    pub image: Image,
    pub object_ids: Vec<u32>,
    pub inv_depth: Vec<f64>,
}

impl RasterOutput {
    /// Fraction of frame pixels covered by the object at `index`.
    pub fn coverage(&self, index: usize) -> f64 {
        let id = index as u32 + 1;
        let covered = self.object_ids.iter().filter(|&&v| v == id).count();
        covered as f64 / self.object_ids.len() as f64
    }
}

#[derive(Clone, Copy)]
struct ScreenVertex {
    x: f64,
    y: f64,
    inv_z: f64,
}

#[inline]
fn edge(a: (f64, f64), b: (f64, f64), p: (f64, f64)) -> f64 {
    (p.0 - a.0) * (b.1 - a.1) - (p.1 - a.1) * (b.0 - a.0)
}

/// Clip a camera-space triangle against z >= NEAR_PLANE. Returns 0 to 4
/// vertices of the clipped polygon.
fn clip_near(tri: [Vec3; 3]) -> Vec<Vec3> {
    let mut out = Vec::with_capacity(4);
    for i in 0..3 {
        let cur = tri[i];
        let nxt = tri[(i + 1) % 3];
        let cur_in = cur.z >= NEAR_PLANE;
        let nxt_in = nxt.z >= NEAR_PLANE;
        if cur_in {
            out.push(cur);
        }
        if cur_in != nxt_in {
            let t = (NEAR_PLANE - cur.z) / (nxt.z - cur.z);
            out.push(cur.add(nxt.sub(cur).scale(t)));
        }
    }
    out
}

fn shade(base: [u8; 3], normal: Vec3, opts: &RenderOptions) -> [u8; 3] {
    if !opts.lambert {
        return base;
    }
    let light = match opts.light_dir.normalized() {
        Some(l) => l,
        None => return base,
    };
    // two-sided: meshes arrive with arbitrary winding
    let lambert = normal.dot(light.scale(-1.0)).abs();
    let intensity = 0.35 + 0.65 * lambert;
    [
        (base[0] as f64 * intensity).round().clamp(0.0, 255.0) as u8,
        (base[1] as f64 * intensity).round().clamp(0.0, 255.0) as u8,
        (base[2] as f64 * intensity).round().clamp(0.0, 255.0) as u8,
    ]
}

/// Render the scene and keep the id/depth buffers.
pub fn rasterize_with_ids(
    scene: &Scene,
    ext: &Extrinsics,
    intr: &Intrinsics,
    opts: &RenderOptions,
) -> RasterOutput {
    let width = intr.width;
    let height = intr.height;
    let mut image = Image::new(width, height, opts.background);
    let npix = (width * height) as usize;
    let mut object_ids = vec![0u32; npix];
    let mut inv_depth = vec![0.0f64; npix];

    for (obj_index, obj) in scene.objects.iter().enumerate() {
        let base = opts.object_color(obj_index);
        let cam_verts: Vec<Vec3> = obj
            .vertices
            .iter()
            .map(|v| ext.world_to_camera(*v))
            .collect();
        for face in &obj.faces {
            let world = [
                obj.vertices[face[0]],
                obj.vertices[face[1]],
                obj.vertices[face[2]],
            ];
            let cam = [cam_verts[face[0]], cam_verts[face[1]], cam_verts[face[2]]];
            if cam.iter().all(|v| v.z < NEAR_PLANE) {
                continue;
            }
            let normal = world[1]
                .sub(world[0])
                .cross(world[2].sub(world[0]))
                .normalized()
                .unwrap_or(Vec3::new(0.0, 0.0, 1.0));
            let color = shade(base, normal, opts);

            let poly = clip_near(cam);
            if poly.len() < 3 {
                continue;
            }
            let screen: Vec<ScreenVertex> = poly
                .iter()
                .map(|v| ScreenVertex {
                    x: intr.fx * (v.x / v.z) + intr.cx,
                    y: intr.fy * (v.y / v.z) + intr.cy,
                    inv_z: 1.0 / v.z,
                })
                .collect();
            for k in 1..screen.len() - 1 {
                fill_triangle(
                    &mut image,
                    &mut object_ids,
                    &mut inv_depth,
                    width,
                    height,
                    [screen[0], screen[k], screen[k + 1]],
                    color,
                    obj_index as u32 + 1,
                );
            }
        }
    }

    RasterOutput {
        image,
        object_ids,
        inv_depth,
    }
}

/// Render the scene to an image.
pub fn rasterize(
    scene: &Scene,
    ext: &Extrinsics,
    intr: &Intrinsics,
    opts: &RenderOptions,
) -> Image {
    rasterize_with_ids(scene, ext, intr, opts).image
}

#[allow(clippy::too_many_arguments)]
fn fill_triangle(
    image: &mut Image,
    ids: &mut [u32],
    inv_depth: &mut [f64],
    width: u32,
    height: u32,
    v: [ScreenVertex; 3],
    color: [u8; 3],
    id: u32,
) {
    let a = (v[0].x, v[0].y);
    let b = (v[1].x, v[1].y);
    let c = (v[2].x, v[2].y);
    let area = edge(a, b, c);
    if area == 0.0 {
        return;
    }
    let min_x = a.0.min(b.0).min(c.0).floor().max(0.0) as u32;
    let min_y = a.1.min(b.1).min(c.1).floor().max(0.0) as u32;
    let max_x = a.0.max(b.0).max(c.0).ceil().min((width - 1) as f64) as u32;
    let max_y = a.1.max(b.1).max(c.1).ceil().min((height - 1) as f64) as u32;
    if min_x > max_x || min_y > max_y {
        return;
    }
    let inv_area = 1.0 / area;
    for py in min_y..=max_y {
        let sy = py as f64 + 0.5;
        for px in min_x..=max_x {
            let sx = px as f64 + 0.5;
            let p = (sx, sy);
            let w0 = edge(b, c, p);
            let w1 = edge(c, a, p);
            let w2 = edge(a, b, p);
            let inside = (w0 >= 0.0 && w1 >= 0.0 && w2 >= 0.0)
                || (w0 <= 0.0 && w1 <= 0.0 && w2 <= 0.0);
            if !inside {
                continue;
            }
            let b0 = w0 * inv_area;
            let b1 = w1 * inv_area;
            let b2 = w2 * inv_area;
            let iz = b0 * v[0].inv_z + b1 * v[1].inv_z + b2 * v[2].inv_z;
            let idx = (py * width + px) as usize;
            if iz > inv_depth[idx] {
                inv_depth[idx] = iz;
                ids[idx] = id;
                image.put(px, py, color);
            }
        }
    }
}

/// Orthographic top-down fill used by the coordinate map: world (x, y) maps
/// linearly to pixels, larger world z wins the depth test.
pub(super) fn fill_triangle_ortho_topdown(
    image: &mut Image,
    depth: &mut [f64],
    width: u32,
    height: u32,
    verts: [(f64, f64, f64); 3], // (u px, v px, world z)
    color: [u8; 3],
) {
    let a = (verts[0].0, verts[0].1);
    let b = (verts[1].0, verts[1].1);
    let c = (verts[2].0, verts[2].1);
    let area = edge(a, b, c);
    if area == 0.0 {
        return;
    }
    let min_x = a.0.min(b.0).min(c.0).floor().max(0.0) as u32;
    let min_y = a.1.min(b.1).min(c.1).floor().max(0.0) as u32;
    let max_x = a.0.max(b.0).max(c.0).ceil().min((width - 1) as f64) as u32;
    let max_y = a.1.max(b.1).max(c.1).ceil().min((height - 1) as f64) as u32;
    if min_x > max_x || min_y > max_y {
        return;
    }
    let inv_area = 1.0 / area;
    for py in min_y..=max_y {
        for px in min_x..=max_x {
            let p = (px as f64 + 0.5, py as f64 + 0.5);
            let w0 = edge(b, c, p);
            let w1 = edge(c, a, p);
            let w2 = edge(a, b, p);
            let inside = (w0 >= 0.0 && w1 >= 0.0 && w2 >= 0.0)
                || (w0 <= 0.0 && w1 <= 0.0 && w2 <= 0.0);
            if !inside {
                continue;
            }
            let z = (w0 * verts[0].2 + w1 * verts[1].2 + w2 * verts[2].2) * inv_area;
            let idx = (py * width + px) as usize;
            if z > depth[idx] {
                depth[idx] = z;
                image.put(px, py, color);
            }
        }
    }
}
