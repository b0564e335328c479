//! Synthetic demo scenes and the 12-question benchmark fixture.
//!
//! Everything here is generated deterministically; the checked-in `fixtures/`
//! tree at the repository root is produced by the `gen_fixtures` example from
//! these builders.

use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use crate::camera::{look_at_extrinsics, spherical_to_world, CameraSpherical, Intrinsics};
use crate::geometry::{normalize_scene, Aabb, Scene, SceneObject, Vec3};
use crate::render::{encode_png, rasterize, RenderOptions};

/// Axis-aligned box mesh (12 triangles).
pub fn box_mesh(center: Vec3, half: Vec3) -> (Vec<Vec3>, Vec<[usize; 3]>) {
    let corners = Aabb {
        min: center.sub(half),
        max: center.add(half),
    }
    .corners()
    .to_vec();
    let faces = vec![
        [0, 1, 3],
        [0, 3, 2],
        [4, 5, 7],
        [4, 7, 6],
        [0, 1, 5],
        [0, 5, 4],
        [2, 3, 7],
        [2, 7, 6],
        [0, 2, 6],
        [0, 6, 4],
        [1, 3, 7],
        [1, 7, 5],
    ];
    (corners, faces)
}

/// Closed cylinder along +z with its base at `base_center`.
pub fn cylinder_mesh(
    base_center: Vec3,
    radius: f64,
    height: f64,
    segments: usize,
) -> (Vec<Vec3>, Vec<[usize; 3]>) {
    assert!(segments >= 3);
    let mut vertices = Vec::with_capacity(segments * 2 + 2);
    for ring in 0..2 {
        let z = base_center.z + ring as f64 * height;
        for s in 0..segments {
            let a = s as f64 / segments as f64 * std::f64::consts::TAU;
            vertices.push(Vec3::new(
                base_center.x + radius * a.cos(),
                base_center.y + radius * a.sin(),
                z,
            ));
        }
    }
    let bottom_center = vertices.len();
    vertices.push(base_center);
    let top_center = vertices.len();
    vertices.push(Vec3::new(
        base_center.x,
        base_center.y,
        base_center.z + height,
    ));

    let mut faces = Vec::new();
    for s in 0..segments {
        let n = (s + 1) % segments;
        let (b0, b1) = (s, n);
        let (t0, t1) = (segments + s, segments + n);
        faces.push([b0, b1, t1]);
        faces.push([b0, t1, t0]);
        faces.push([bottom_center, b1, b0]);
        faces.push([top_center, t0, t1]);
    }
    (vertices, faces)
}

fn object(id: &str, label: &str, mesh: (Vec<Vec3>, Vec<[usize; 3]>)) -> SceneObject {
    SceneObject::new(id, label, mesh.0, mesh.1, None).expect("fixture mesh is valid")
}

/// Three boxes of different heights on a common ground plane, normalized.
/// Object order matches the palette so the red box renders red, the blue box
/// blue, and the green (tallest) box green.
pub fn three_box_scene() -> Scene {
    let scene = Scene::from_objects(vec![
        object(
            "red_box",
            "red box",
            box_mesh(Vec3::new(-0.7, -0.2, 0.3), Vec3::new(0.25, 0.25, 0.3)),
        ),
        object(
            "blue_box",
            "blue box",
            box_mesh(Vec3::new(0.7, -0.3, 0.45), Vec3::new(0.25, 0.25, 0.45)),
        ),
        object(
            "green_box",
            "green box",
            box_mesh(Vec3::new(0.0, 0.4, 0.6), Vec3::new(0.25, 0.25, 0.6)),
        ),
    ])
    .expect("three box scene is valid");
    normalize_scene(&scene).expect("three box scene has extent")
}

/// A box floating directly above a cylinder, with a second box off to the
/// side, normalized.
pub fn stacked_scene() -> Scene {
    let scene = Scene::from_objects(vec![
        object(
            "drum",
            "drum",
            cylinder_mesh(Vec3::new(0.0, 0.0, 0.0), 0.4, 0.5, 16),
        ),
        object(
            "crate_top",
            "crate",
            box_mesh(Vec3::new(0.0, 0.0, 1.0), Vec3::new(0.25, 0.25, 0.2)),
        ),
        object(
            "crate_side",
            "crate",
            box_mesh(Vec3::new(1.0, 0.2, 0.25), Vec3::new(0.25, 0.25, 0.25)),
        ),
    ])
    .expect("stacked scene is valid");
    normalize_scene(&scene).expect("stacked scene has extent")
}

/// Two long boxes with parallel long edges plus a skewed third, normalized.
pub fn parallel_scene() -> Scene {
    // the skewed plank is an axis-aligned mesh rotated 30 degrees about z
    let rot = |v: Vec3, deg: f64| {
        let a = deg.to_radians();
        Vec3::new(
            v.x * a.cos() - v.y * a.sin(),
            v.x * a.sin() + v.y * a.cos(),
            v.z,
        )
    };
    let (mut verts, faces) = box_mesh(Vec3::ZERO, Vec3::new(0.6, 0.12, 0.12));
    for v in verts.iter_mut() {
        *v = rot(*v, 30.0).add(Vec3::new(0.1, 0.8, 0.12));
    }
    let scene = Scene::from_objects(vec![
        object(
            "plank_a",
            "plank",
            box_mesh(Vec3::new(0.0, -0.5, 0.12), Vec3::new(0.6, 0.12, 0.12)),
        ),
        object(
            "plank_b",
            "plank",
            box_mesh(Vec3::new(0.0, 0.1, 0.12), Vec3::new(0.6, 0.12, 0.12)),
        ),
        SceneObject::new("plank_c", "plank", verts, faces, None).expect("plank mesh"),
    ])
    .expect("parallel scene is valid");
    normalize_scene(&scene).expect("parallel scene has extent")
}

fn write_obj(path: &Path, vertices: &[Vec3], faces: &[[usize; 3]]) -> std::io::Result<()> {
    let mut out = fs::File::create(path)?;
    for v in vertices {
        writeln!(out, "v {} {} {}", v.x, v.y, v.z)?;
    }
    for f in faces {
        writeln!(out, "f {} {} {}", f[0] + 1, f[1] + 1, f[2] + 1)?;
    }
    Ok(())
}

/// Write a scene as one OBJ per object plus a JSON manifest; returns the
/// manifest path. The meshes are written pre-normalization coordinates as-is
/// (loading re-normalizes, which is idempotent for already-normalized data).
pub fn write_scene_manifest(scene: &Scene, dir: &Path, name: &str) -> std::io::Result<PathBuf> {
    fs::create_dir_all(dir)?;
    let mut entries = Vec::new();
    for obj in &scene.objects {
        let file = format!("{}_{}.obj", name, obj.id);
        write_obj(&dir.join(&file), &obj.vertices, &obj.faces)?;
        entries.push(serde_json::json!({
            "id": obj.id,
            "label": obj.label,
            "mesh": file,
        }));
    }
    let manifest = dir.join(format!("{name}.json"));
    fs::write(
        &manifest,
        serde_json::to_string_pretty(&serde_json::json!({ "objects": entries }))? + "\n",
    )?;
    Ok(manifest)
}

/// Render a small reference image of the scene (used as the "original image"
/// of fixture questions).
pub fn write_reference_image(scene: &Scene, path: &Path) -> std::io::Result<()> {
    let intr = Intrinsics::with_vertical_fov(256, 256, 60.0).expect("fixture intrinsics");
    let pose = CameraSpherical {
        yaw: -0.9,
        pitch: 0.35,
        r: 2.0 * scene.bounding_radius(),
    };
    let (_, p) = spherical_to_world(pose, scene.center);
    let ext = look_at_extrinsics(p, scene.center, scene.up).expect("fixture pose");
    let img = rasterize(scene, &ext, &intr, &RenderOptions::default());
    encode_png(&img, path).map_err(|e| std::io::Error::other(e.to_string()))
}

/// One fixture question as (id, scene name, subtask, question, options,
/// answer label).
pub type FixtureQuestion = (
    &'static str,
    &'static str,
    &'static str,
    &'static str,
    &'static [(&'static str, &'static str)],
    &'static str,
);

/// The 12 fixture questions over the three generated scenes: four subtasks,
/// three questions each.
pub const FIXTURE_QUESTIONS: [FixtureQuestion; 12] = [
    (
        "q01",
        "boxes",
        "Height_Higher",
        "Which box is the tallest?",
        &[("A", "the red box"), ("B", "the green box"), ("C", "the blue box")],
        "B",
    ),
    (
        "q02",
        "boxes",
        "Height_Higher",
        "Which box is the shortest?",
        &[("A", "the red box"), ("B", "the green box"), ("C", "the blue box")],
        "A",
    ),
    (
        "q03",
        "boxes",
        "Height_Higher",
        "Is the blue box taller than the red box?",
        &[("A", "yes"), ("B", "no")],
        "A",
    ),
    (
        "q04",
        "stacked",
        "location_above",
        "Is the crate directly above the drum?",
        &[("A", "yes"), ("B", "no")],
        "A",
    ),
    (
        "q05",
        "stacked",
        "location_above",
        "Which object is directly below the floating crate?",
        &[("A", "the drum"), ("B", "the side crate")],
        "A",
    ),
    (
        "q06",
        "stacked",
        "location_next_to",
        "Is the side crate next to the drum?",
        &[("A", "yes"), ("B", "no")],
        "A",
    ),
    (
        "q07",
        "planks",
        "multi_object_parallel",
        "Are the two lower planks parallel to each other?",
        &[("A", "yes"), ("B", "no")],
        "A",
    ),
    (
        "q08",
        "planks",
        "multi_object_parallel",
        "Is the upper plank parallel to the lower planks?",
        &[("A", "yes"), ("B", "no")],
        "B",
    ),
    (
        "q09",
        "planks",
        "multi_object_parallel",
        "How many planks share the same orientation?",
        &[("A", "two"), ("B", "three")],
        "A",
    ),
    (
        "q10",
        "boxes",
        "orientation_viewpoint",
        "Seen from above, is the green box behind the red box?",
        &[("A", "yes"), ("B", "no")],
        "A",
    ),
    (
        "q11",
        "stacked",
        "orientation_viewpoint",
        "Seen from the drum, is the side crate to its right when facing +x?",
        &[("A", "yes"), ("B", "no")],
        "B",
    ),
    (
        "q12",
        "planks",
        "orientation_viewpoint",
        "Does the upper plank point toward the viewer in the original image?",
        &[("A", "yes"), ("B", "no")],
        "B",
    ),
];

/// Generate the full benchmark fixture tree under `dir`:
///
/// ```text
/// dir/
///   scenes/<name>.json + *.obj     three scene manifests and meshes
///   images/<name>.png              one reference image per scene
///   bench.jsonl                    12 samples in the benchmark schema
/// ```
///
/// Returns the path of the JSONL file.
pub fn write_benchmark_fixture(dir: &Path) -> std::io::Result<PathBuf> {
    let scenes_dir = dir.join("scenes");
    let images_dir = dir.join("images");
    fs::create_dir_all(&scenes_dir)?;
    fs::create_dir_all(&images_dir)?;

    let named: [(&str, Scene); 3] = [
        ("boxes", three_box_scene()),
        ("stacked", stacked_scene()),
        ("planks", parallel_scene()),
    ];
    for (name, scene) in &named {
        write_scene_manifest(scene, &scenes_dir, name)?;
        write_reference_image(scene, &images_dir.join(format!("{name}.png")))?;
    }

    let bench = dir.join("bench.jsonl");
    let mut out = fs::File::create(&bench)?;
    for (id, scene_name, subtask, question, options, answer) in FIXTURE_QUESTIONS {
        let options: Vec<serde_json::Value> = options
            .iter()
            .map(|(label, text)| serde_json::json!({"label": label, "text": text}))
            .collect();
        let line = serde_json::json!({
            "id": id,
            "image": format!("images/{scene_name}.png"),
            "scene": format!("scenes/{scene_name}.json"),
            "question": question,
            "options": options,
            "answer": answer,
            "subtask": subtask,
            "benchmark": "fixture12",
        });
        writeln!(out, "{line}")?;
    }
    Ok(bench)
}
