//! Scene representation and frame handling.
//!
//! A scene is a set of per-object triangle meshes sharing one world frame.
//! The scene center is the midpoint of the union axis-aligned bounding box
//! over all objects; the object frame is the world frame translated so that
//! this center sits at the origin (axes unchanged, world up stays +z).

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Largest union-AABB dimension after load-time normalization. Chosen so the
/// 0.5-unit grid of the top-down coordinate map spans the scene with margin.
pub const NORMALIZED_MAX_EXTENT: f64 = 2.0;

#[derive(Debug, Error)]
pub enum GeometryError {
    #[error("mesh not found: {0}")]
    MeshNotFound(PathBuf),
    #[error("manifest not found: {0}")]
    ManifestNotFound(PathBuf),
    #[error("malformed manifest {path}: {reason}")]
    MalformedManifest { path: PathBuf, reason: String },
    #[error("malformed mesh {path}: line {line}: {reason}")]
    MalformedMesh {
        path: PathBuf,
        line: usize,
        reason: String,
    },
    #[error("object {id}: {reason}")]
    InvalidObject { id: String, reason: String },
    #[error("scene has zero objects")]
    EmptyScene,
    #[error("degenerate scene: zero extent on all axes")]
    DegenerateScene,
}

/// A point or direction in world coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Vec3 {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

#[allow(clippy::should_implement_trait)] // value-style math keeps call sites uniform
impl Vec3 {
    pub const ZERO: Vec3 = Vec3 {
        x: 0.0,
        y: 0.0,
        z: 0.0,
    };

    pub fn new(x: f64, y: f64, z: f64) -> Self {
        Self { x, y, z }
    }

    pub fn add(self, o: Vec3) -> Vec3 {
        Vec3::new(self.x + o.x, self.y + o.y, self.z + o.z)
    }

    pub fn sub(self, o: Vec3) -> Vec3 {
        Vec3::new(self.x - o.x, self.y - o.y, self.z - o.z)
    }

    pub fn scale(self, s: f64) -> Vec3 {
        Vec3::new(self.x * s, self.y * s, self.z * s)
    }

    pub fn dot(self, o: Vec3) -> f64 {
        self.x * o.x + self.y * o.y + self.z * o.z
    }

    pub fn cross(self, o: Vec3) -> Vec3 {
        Vec3::new(
            self.y * o.z - self.z * o.y,
            self.z * o.x - self.x * o.z,
            self.x * o.y - self.y * o.x,
        )
    }

    pub fn norm(self) -> f64 {
        self.dot(self).sqrt()
    }

    /// Unit vector in the same direction; `None` for (near-)zero input.
    pub fn normalized(self) -> Option<Vec3> {
        let n = self.norm();
        if n < 1e-12 {
            None
        } else {
            Some(self.scale(1.0 / n))
        }
    }

    pub fn min_components(self, o: Vec3) -> Vec3 {
        Vec3::new(self.x.min(o.x), self.y.min(o.y), self.z.min(o.z))
    }

    pub fn max_components(self, o: Vec3) -> Vec3 {
        Vec3::new(self.x.max(o.x), self.y.max(o.y), self.z.max(o.z))
    }

    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.z.is_finite()
    }

    pub fn to_array(self) -> [f64; 3] {
        [self.x, self.y, self.z]
    }
}

impl fmt::Display for Vec3 {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {}, {})", self.x, self.y, self.z)
    }
}

/// Axis-aligned bounding box given by its two diagonal corners.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Aabb {
    pub min: Vec3,
    pub max: Vec3,
}

impl Aabb {
    /// Componentwise min/max over a nonempty point set.
    pub fn from_points<'a, I: IntoIterator<Item = &'a Vec3>>(points: I) -> Option<Aabb> {
        let mut it = points.into_iter();
        let first = *it.next()?;
        let mut min = first;
        let mut max = first;
        for p in it {
            min = min.min_components(*p);
            max = max.max_components(*p);
        }
        Some(Aabb { min, max })
    }

    pub fn union(self, o: Aabb) -> Aabb {
        Aabb {
            min: self.min.min_components(o.min),
            max: self.max.max_components(o.max),
        }
    }

    pub fn center(self) -> Vec3 {
        self.min.add(self.max).scale(0.5)
    }

    pub fn extent(self) -> Vec3 {
        self.max.sub(self.min)
    }

    pub fn max_extent(self) -> f64 {
        let e = self.extent();
        e.x.max(e.y).max(e.z)
    }

    pub fn contains(self, p: Vec3) -> bool {
        p.x >= self.min.x
            && p.x <= self.max.x
            && p.y >= self.min.y
            && p.y <= self.max.y
            && p.z >= self.min.z
            && p.z <= self.max.z
    }

    pub fn corners(self) -> [Vec3; 8] {
        let (a, b) = (self.min, self.max);
        [
            Vec3::new(a.x, a.y, a.z),
            Vec3::new(b.x, a.y, a.z),
            Vec3::new(a.x, b.y, a.z),
            Vec3::new(b.x, b.y, a.z),
            Vec3::new(a.x, a.y, b.z),
            Vec3::new(b.x, a.y, b.z),
            Vec3::new(a.x, b.y, b.z),
            Vec3::new(b.x, b.y, b.z),
        ]
    }
}

/// One reconstructed object: a triangle mesh plus its identity.
#[derive(Debug, Clone)]
pub struct SceneObject {
    pub id: String,
    pub label: String,
    pub vertices: Vec<Vec3>,
    pub faces: Vec<[usize; 3]>,
    pub source_mask: Option<PathBuf>,
}

impl SceneObject {
    pub fn new(
        id: impl Into<String>,
        label: impl Into<String>,
        vertices: Vec<Vec3>,
        faces: Vec<[usize; 3]>,
        source_mask: Option<PathBuf>,
    ) -> Result<Self, GeometryError> {
        let id = id.into();
        if vertices.is_empty() {
            return Err(GeometryError::InvalidObject {
                id,
                reason: "no vertices".into(),
            });
        }
        if faces.is_empty() {
            return Err(GeometryError::InvalidObject {
                id,
                reason: "no faces".into(),
            });
        }
        if let Some(v) = vertices.iter().find(|v| !v.is_finite()) {
            return Err(GeometryError::InvalidObject {
                id,
                reason: format!("non-finite vertex {v}"),
            });
        }
        if let Some(f) = faces
            .iter()
            .find(|f| f.iter().any(|&i| i >= vertices.len()))
        {
            return Err(GeometryError::InvalidObject {
                id,
                reason: format!(
                    "face index out of range: {:?} with {} vertices",
                    f,
                    vertices.len()
                ),
            });
        }
        Ok(Self {
            id,
            label: label.into(),
            vertices,
            faces,
            source_mask,
        })
    }
}

/// Per-object bounding box: exact componentwise min/max over the vertex set.
pub fn object_aabb(obj: &SceneObject) -> Aabb {
    Aabb::from_points(&obj.vertices).expect("object has at least one vertex")
}

/// Midpoint of the union bounding box spanning all objects.
pub fn scene_center(objects: &[SceneObject]) -> Vec3 {
    union_aabb(objects).center()
}

fn union_aabb(objects: &[SceneObject]) -> Aabb {
    objects
        .iter()
        .map(object_aabb)
        .reduce(Aabb::union)
        .expect("scene has at least one object")
}

/// A full scene in a shared world frame.
///
/// `center` always equals the union-AABB midpoint of the current vertex data;
/// `up` is the world z-axis; `normalization_scale` records the uniform factor
/// applied by [`load_scene`] (1.0 for scenes built in memory).
#[derive(Debug, Clone)]
pub struct Scene {
    pub objects: Vec<SceneObject>,
    pub center: Vec3,
    pub up: Vec3,
    pub normalization_scale: f64,
}

impl Scene {
    pub fn from_objects(objects: Vec<SceneObject>) -> Result<Scene, GeometryError> {
        if objects.is_empty() {
            return Err(GeometryError::EmptyScene);
        }
        let center = scene_center(&objects);
        Ok(Scene {
            objects,
            center,
            up: Vec3::new(0.0, 0.0, 1.0),
            normalization_scale: 1.0,
        })
    }

    pub fn union_aabb(&self) -> Aabb {
        union_aabb(&self.objects)
    }

    /// Max distance from the scene center to a union-AABB corner.
    pub fn bounding_radius(&self) -> f64 {
        let aabb = self.union_aabb();
        aabb.corners()
            .iter()
            .map(|c| c.sub(self.center).norm())
            .fold(0.0, f64::max)
    }
}

/// Translate every vertex by -center so the scene center becomes the origin.
/// Axes are unchanged. Idempotent once applied.
pub fn to_object_frame(scene: &Scene) -> Scene {
    let c = scene.center;
    let objects = scene
        .objects
        .iter()
        .map(|o| SceneObject {
            id: o.id.clone(),
            label: o.label.clone(),
            vertices: o.vertices.iter().map(|v| v.sub(c)).collect(),
            faces: o.faces.clone(),
            source_mask: o.source_mask.clone(),
        })
        .collect::<Vec<_>>();
    let center = scene_center(&objects);
    Scene {
        objects,
        center,
        up: scene.up,
        normalization_scale: scene.normalization_scale,
    }
}

fn scale_scene(scene: &Scene, factor: f64) -> Scene {
    let objects = scene
        .objects
        .iter()
        .map(|o| SceneObject {
            id: o.id.clone(),
            label: o.label.clone(),
            vertices: o.vertices.iter().map(|v| v.scale(factor)).collect(),
            faces: o.faces.clone(),
            source_mask: o.source_mask.clone(),
        })
        .collect::<Vec<_>>();
    let center = scene_center(&objects);
    Scene {
        objects,
        center,
        up: scene.up,
        normalization_scale: scene.normalization_scale * factor,
    }
}

/// Center the scene at the origin and uniformly scale it so the union AABB's
/// largest dimension equals [`NORMALIZED_MAX_EXTENT`]. Records the applied
/// factor in `normalization_scale`. Rejects point scenes (zero extent on all
/// three axes); flat scenes are allowed.
pub fn normalize_scene(scene: &Scene) -> Result<Scene, GeometryError> {
    let extent = scene.union_aabb().max_extent();
    if extent <= 0.0 {
        return Err(GeometryError::DegenerateScene);
    }
    let centered = to_object_frame(scene);
    Ok(scale_scene(&centered, NORMALIZED_MAX_EXTENT / extent))
}

#[derive(Debug, Deserialize, Serialize)]
struct ManifestEntry {
    id: String,
    label: String,
    mesh: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    mask: Option<String>,
}

#[derive(Debug, Deserialize, Serialize)]
struct Manifest {
    objects: Vec<ManifestEntry>,
}

/// Load a scene from a JSON manifest binding object ids and labels to OBJ
/// mesh files (paths relative to the manifest), then normalize it: centered
/// at the origin, largest dimension scaled to [`NORMALIZED_MAX_EXTENT`].
pub fn load_scene(manifest_path: &Path) -> Result<Scene, GeometryError> {
    let text = fs::read_to_string(manifest_path)
        .map_err(|_| GeometryError::ManifestNotFound(manifest_path.to_path_buf()))?;
    let manifest: Manifest =
        serde_json::from_str(&text).map_err(|e| GeometryError::MalformedManifest {
            path: manifest_path.to_path_buf(),
            reason: e.to_string(),
        })?;
    if manifest.objects.is_empty() {
        return Err(GeometryError::EmptyScene);
    }
    let base = manifest_path.parent().unwrap_or_else(|| Path::new("."));
    let mut objects = Vec::with_capacity(manifest.objects.len());
    for entry in &manifest.objects {
        let mesh_path = base.join(&entry.mesh);
        let (vertices, faces) = parse_obj(&mesh_path)?;
        let mask = entry.mask.as_ref().map(|m| base.join(m));
        objects.push(SceneObject::new(
            entry.id.clone(),
            entry.label.clone(),
            vertices,
            faces,
            mask,
        )?);
    }
    let scene = Scene::from_objects(objects)?;
    normalize_scene(&scene)
}

/// Parse the OBJ subset used by scene manifests: `v x y z` records and
/// triangular `f` records (`f` entries may carry `v/vt/vn` syntax, only the
/// vertex index is taken). Indices are 1-based. Everything else is ignored.
pub fn parse_obj(path: &Path) -> Result<(Vec<Vec3>, Vec<[usize; 3]>), GeometryError> {
    let text =
        fs::read_to_string(path).map_err(|_| GeometryError::MeshNotFound(path.to_path_buf()))?;
    let malformed = |line: usize, reason: String| GeometryError::MalformedMesh {
        path: path.to_path_buf(),
        line,
        reason,
    };
    let mut vertices = Vec::new();
    let mut faces = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = raw.trim();
        let mut parts = line.split_whitespace();
        match parts.next() {
            Some("v") => {
                let mut coords = [0.0f64; 3];
                for c in coords.iter_mut() {
                    let tok = parts
                        .next()
                        .ok_or_else(|| malformed(line_no, "vertex needs 3 coordinates".into()))?;
                    *c = tok
                        .parse()
                        .map_err(|_| malformed(line_no, format!("bad coordinate {tok:?}")))?;
                }
                vertices.push(Vec3::new(coords[0], coords[1], coords[2]));
            }
            Some("f") => {
                let idxs: Vec<&str> = parts.collect();
                if idxs.len() != 3 {
                    return Err(malformed(
                        line_no,
                        format!("only triangular faces are supported, got {}", idxs.len()),
                    ));
                }
                let mut face = [0usize; 3];
                for (slot, tok) in face.iter_mut().zip(&idxs) {
                    let vtx = tok.split('/').next().unwrap_or("");
                    let one_based: usize = vtx
                        .parse()
                        .map_err(|_| malformed(line_no, format!("bad face index {tok:?}")))?;
                    if one_based == 0 || one_based > vertices.len() {
                        return Err(malformed(
                            line_no,
                            format!("face index {one_based} out of range"),
                        ));
                    }
                    *slot = one_based - 1;
                }
                faces.push(face);
            }
            _ => {}
        }
    }
    if vertices.is_empty() {
        return Err(malformed(0, "no vertices".into()));
    }
    if faces.is_empty() {
        return Err(malformed(0, "no faces".into()));
    }
    Ok((vertices, faces))
}
