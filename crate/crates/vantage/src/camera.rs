//! Camera pose math: planar-to-polar conversion, the yaw/pitch/radius orbit
//! parameterization, look-at extrinsic construction, and pinhole projection.
//!
//! Conventions. The camera basis is built from the viewing constraint "face
//! the scene center" with world up n = (0,0,1):
//!
//! ```text
//! Rz = Norm(-P')           forward (toward the center)
//! Rx = Norm(-n x Rz)       image right
//! Ry = Norm(Rz x Rx)       image down
//! ```
//!
//! The world-to-camera map is the row form `p_cam = R_row * (p - P)` where
//! `R_row` stacks Rx, Ry, Rz as rows; equivalently the extrinsic pair
//! `[R_row | t]` with `t = -R_row * P`. Under this reading the center C lands
//! on the +z optical axis at distance r, and image v grows downward so no
//! flip is needed when rasterizing.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{Scene, Vec3};

/// Hard ceiling on |pitch| used when building poses from agent coordinates.
/// Keeps the look-at construction away from its up-parallel singularity.
pub const PITCH_CLAMP_DEGREES: f64 = 89.5;

#[derive(Debug, Error)]
pub enum CameraError {
    #[error("camera coincides with center")]
    CoincidesWithCenter,
    #[error("zero baseline")]
    ZeroBaseline,
    #[error("gimbal: view parallel to up")]
    GimbalLock,
    #[error("pitch {0} degrees outside [-90, 90]")]
    PitchOutOfRange(f64),
    #[error("invalid camera parameter: {0}")]
    InvalidParameter(String),
    #[error("point behind camera")]
    BehindCamera,
}

/// Camera pose on the orbit sphere around a center point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CameraSpherical {
    /// Horizontal rotation in the xy plane, radians in (-pi, pi].
    pub yaw: f64,
    /// Elevation angle, radians in [-pi/2, pi/2].
    pub pitch: f64,
    /// Distance from the center, world units, positive.
    pub r: f64,
}

impl CameraSpherical {
    pub fn new(yaw: f64, pitch: f64, r: f64) -> Result<Self, CameraError> {
        if !yaw.is_finite() || yaw <= -std::f64::consts::PI || yaw > std::f64::consts::PI {
            return Err(CameraError::InvalidParameter(format!(
                "yaw {yaw} outside (-pi, pi]"
            )));
        }
        if !pitch.is_finite() || pitch.abs() > std::f64::consts::FRAC_PI_2 {
            return Err(CameraError::InvalidParameter(format!(
                "pitch {pitch} outside [-pi/2, pi/2]"
            )));
        }
        if !r.is_finite() || r <= 0.0 {
            return Err(CameraError::InvalidParameter(format!(
                "radius {r} not positive"
            )));
        }
        Ok(Self { yaw, pitch, r })
    }
}

/// Rigid camera pose: orthonormal basis (stored as the camera axes expressed
/// in world coordinates), world position, and the translation of the
/// world-to-camera map.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Extrinsics {
    /// Image-right axis.
    pub rx: Vec3,
    /// Image-down axis.
    pub ry: Vec3,
    /// Forward (optical) axis.
    pub rz: Vec3,
    /// Camera position P in world coordinates.
    pub position: Vec3,
    /// t = -R_row * P of the world-to-camera map.
    pub translation: Vec3,
}

impl Extrinsics {
    /// Map a world point into camera coordinates: `R_row * (p - P)`.
    pub fn world_to_camera(&self, p: Vec3) -> Vec3 {
        let d = p.sub(self.position);
        Vec3::new(self.rx.dot(d), self.ry.dot(d), self.rz.dot(d))
    }

    /// Determinant of the basis matrix; +1 for a proper rotation.
    pub fn basis_determinant(&self) -> f64 {
        self.rx.dot(self.ry.cross(self.rz))
    }

    /// Largest orthonormality defect: max of pairwise |dot| and |1 - |axis||.
    pub fn orthonormality_defect(&self) -> f64 {
        let dots = [
            self.rx.dot(self.ry).abs(),
            self.ry.dot(self.rz).abs(),
            self.rx.dot(self.rz).abs(),
        ];
        let norms = [
            (self.rx.norm() - 1.0).abs(),
            (self.ry.norm() - 1.0).abs(),
            (self.rz.norm() - 1.0).abs(),
        ];
        dots.iter()
            .chain(norms.iter())
            .fold(0.0_f64, |acc, v| acc.max(*v))
    }
}

/// Pinhole projection parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Intrinsics {
    pub width: u32,
    pub height: u32,
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
}

impl Intrinsics {
    pub fn new(
        width: u32,
        height: u32,
        fx: f64,
        fy: f64,
        cx: f64,
        cy: f64,
    ) -> Result<Self, CameraError> {
        if width < 16 || height < 16 {
            return Err(CameraError::InvalidParameter(format!(
                "image {width}x{height} below 16x16"
            )));
        }
        if fx <= 0.0 || fy <= 0.0 {
            return Err(CameraError::InvalidParameter(
                "non-positive focal length".into(),
            ));
        }
        if cx < 0.0 || cx >= width as f64 || cy < 0.0 || cy >= height as f64 {
            return Err(CameraError::InvalidParameter(
                "principal point outside image".into(),
            ));
        }
        Ok(Self {
            width,
            height,
            fx,
            fy,
            cx,
            cy,
        })
    }

    /// Image with the given vertical field of view and the principal point at
    /// the image center.
    pub fn with_vertical_fov(
        width: u32,
        height: u32,
        fov_degrees: f64,
    ) -> Result<Self, CameraError> {
        if !(1.0..180.0).contains(&fov_degrees) {
            return Err(CameraError::InvalidParameter(format!(
                "vertical fov {fov_degrees} degrees out of range"
            )));
        }
        let f = height as f64 / (2.0 * (fov_degrees.to_radians() / 2.0).tan());
        Self::new(width, height, f, f, width as f64 / 2.0, height as f64 / 2.0)
    }
}

impl Default for Intrinsics {
    /// 512x512, 60 degree vertical field of view.
    fn default() -> Self {
        Self::with_vertical_fov(512, 512, 60.0).expect("default intrinsics are valid")
    }
}

/// Planar camera coordinates to (distance, yaw): `r = sqrt(x^2 + y^2)`,
/// `yaw = arctan2(y, x)` in (-pi, pi].
pub fn planar_to_polar(x: f64, y: f64) -> Result<(f64, f64), CameraError> {
    if x == 0.0 && y == 0.0 {
        return Err(CameraError::CoincidesWithCenter);
    }
    let r = x.hypot(y);
    let mut yaw = y.atan2(x);
    if yaw <= -std::f64::consts::PI {
        yaw = std::f64::consts::PI;
    }
    Ok((r, yaw))
}

/// Orbit pose to camera positions: returns (P', P) where P' is the offset
/// from the center and P = P' + C is the absolute world position.
pub fn spherical_to_world(pose: CameraSpherical, center: Vec3) -> (Vec3, Vec3) {
    let p_rel = Vec3::new(
        pose.yaw.cos() * pose.pitch.cos(),
        pose.yaw.sin() * pose.pitch.cos(),
        pose.pitch.sin(),
    )
    .scale(pose.r);
    (p_rel, p_rel.add(center))
}

// Strictly-greater comparison against cos(0.5 deg), with a one-ulp guard so a
// pitch clamped to exactly 89.5 deg never trips the gimbal check.
fn gimbal_threshold() -> f64 {
    (0.5_f64.to_radians()).cos() + 1e-12
}

/// Build look-at extrinsics for a camera at P facing C with up vector n.
pub fn look_at_extrinsics(p: Vec3, c: Vec3, n: Vec3) -> Result<Extrinsics, CameraError> {
    let offset = p.sub(c);
    let forward = offset
        .scale(-1.0)
        .normalized()
        .ok_or(CameraError::ZeroBaseline)?;
    let up = n
        .normalized()
        .ok_or_else(|| CameraError::InvalidParameter("up vector has zero length".into()))?;
    if forward.dot(up).abs() > gimbal_threshold() {
        return Err(CameraError::GimbalLock);
    }
    let rz = forward;
    let rx = up
        .scale(-1.0)
        .cross(rz)
        .normalized()
        .ok_or(CameraError::GimbalLock)?;
    let ry = rz.cross(rx).normalized().ok_or(CameraError::GimbalLock)?;
    let translation = Vec3::new(-rx.dot(p), -ry.dot(p), -rz.dot(p));
    Ok(Extrinsics {
        rx,
        ry,
        rz,
        position: p,
        translation,
    })
}

/// A pose built from agent-chosen planar coordinates, retaining both the
/// requested and the effective (clamped) pitch for the trace.
#[derive(Debug, Clone, Copy)]
pub struct AgentPose {
    pub spherical: CameraSpherical,
    pub extrinsics: Extrinsics,
    pub requested_pitch_degrees: f64,
    pub effective_pitch_degrees: f64,
}

/// Compose the orbit pose from planar coordinates and a pitch angle in
/// degrees: planar-to-polar for (r, yaw), pitch clamped to
/// [`PITCH_CLAMP_DEGREES`], then spherical placement and look-at extrinsics
/// around the scene center.
pub fn pose_from_agent_coords(
    x: f64,
    y: f64,
    pitch_degrees: f64,
    scene: &Scene,
) -> Result<AgentPose, CameraError> {
    if !pitch_degrees.is_finite() || pitch_degrees.abs() > 90.0 {
        return Err(CameraError::PitchOutOfRange(pitch_degrees));
    }
    let (r, yaw) = planar_to_polar(x, y)?;
    let effective = pitch_degrees.clamp(-PITCH_CLAMP_DEGREES, PITCH_CLAMP_DEGREES);
    let spherical = CameraSpherical::new(yaw, effective.to_radians(), r)?;
    let (_, p) = spherical_to_world(spherical, scene.center);
    let extrinsics = look_at_extrinsics(p, scene.center, scene.up)?;
    Ok(AgentPose {
        spherical,
        extrinsics,
        requested_pitch_degrees: pitch_degrees,
        effective_pitch_degrees: effective,
    })
}

/// Inverse of [`spherical_to_world`]: recover (yaw, pitch, r) from a camera
/// position and center. At the poles yaw is defined as 0.
pub fn recover_spherical(p: Vec3, c: Vec3) -> Result<CameraSpherical, CameraError> {
    let rel = p.sub(c);
    let r = rel.norm();
    if r < 1e-15 {
        return Err(CameraError::ZeroBaseline);
    }
    let yaw = if rel.x == 0.0 && rel.y == 0.0 {
        0.0
    } else {
        rel.y.atan2(rel.x)
    };
    let pitch = (rel.z / r).clamp(-1.0, 1.0).asin();
    Ok(CameraSpherical { yaw, pitch, r })
}

/// Pinhole projection of a world point: pixel coordinates plus camera-space
/// depth. Points with non-positive depth are reported as behind the camera.
pub fn project(
    p: Vec3,
    ext: &Extrinsics,
    intr: &Intrinsics,
) -> Result<(f64, f64, f64), CameraError> {
    let cam = ext.world_to_camera(p);
    if cam.z <= 0.0 {
        return Err(CameraError::BehindCamera);
    }
    let u = intr.fx * (cam.x / cam.z) + intr.cx;
    let v = intr.fy * (cam.y / cam.z) + intr.cy;
    Ok((u, v, cam.z))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{Scene, SceneObject};
    use std::f64::consts::{FRAC_PI_2, FRAC_PI_4, PI};

    fn centered_scene() -> Scene {
        let obj = SceneObject::new(
            "o",
            "o",
            vec![
                Vec3::new(-0.5, -0.5, -0.5),
                Vec3::new(0.5, 0.5, 0.5),
                Vec3::new(0.5, -0.5, 0.5),
            ],
            vec![[0, 1, 2]],
            None,
        )
        .unwrap();
        Scene::from_objects(vec![obj]).unwrap()
    }

    #[test]
    fn planar_to_polar_axes_and_quadrants() {
        assert_eq!(planar_to_polar(1.0, 0.0).unwrap(), (1.0, 0.0));
        let (r, yaw) = planar_to_polar(0.0, 1.0).unwrap();
        assert!((r - 1.0).abs() < 1e-15 && (yaw - FRAC_PI_2).abs() < 1e-15);
        // reference arctan2 evaluations
        let (r, yaw) = planar_to_polar(-1.0, -1.0).unwrap();
        assert!((r - 2.0_f64.sqrt()).abs() < 1e-15);
        assert!((yaw - (-3.0 * FRAC_PI_4)).abs() < 1e-15);
        let (r, yaw) = planar_to_polar(3.0, 4.0).unwrap();
        assert!((r - 5.0).abs() < 1e-15);
        assert!((yaw - 4.0_f64.atan2(3.0)).abs() < 1e-15);
        assert!((yaw - 0.9272952180016122).abs() < 1e-12);
    }

    #[test]
    fn planar_to_polar_rejects_origin_and_stays_in_range() {
        assert!(matches!(
            planar_to_polar(0.0, 0.0),
            Err(CameraError::CoincidesWithCenter)
        ));
        // the -pi branch maps onto +pi
        let (_, yaw) = planar_to_polar(-1.0, -0.0).unwrap();
        assert!(yaw > -PI && yaw <= PI);
        assert!((yaw - PI).abs() < 1e-15);
    }

    #[test]
    fn spherical_to_world_axis_aligned_and_hand_case() {
        let pose = CameraSpherical::new(0.0, 0.0, 2.0).unwrap();
        let (p_rel, p) = spherical_to_world(pose, Vec3::ZERO);
        assert!(p_rel.sub(Vec3::new(2.0, 0.0, 0.0)).norm() < 1e-12);
        assert_eq!(p_rel, p);

        // yaw pi/2, pitch pi/4, r sqrt(2) -> (0, 1, 1)
        let pose = CameraSpherical::new(FRAC_PI_2, FRAC_PI_4, 2.0_f64.sqrt()).unwrap();
        let (p_rel, _) = spherical_to_world(pose, Vec3::ZERO);
        assert!(p_rel.sub(Vec3::new(0.0, 1.0, 1.0)).norm() < 1e-12);

        // the center translation is additive
        let c = Vec3::new(1.0, 0.0, 2.0);
        let (p_rel, p_abs) = spherical_to_world(pose, c);
        assert!(p_abs.sub(p_rel.add(c)).norm() < 1e-15);
        // |P'| = r
        assert!((p_rel.norm() - pose.r).abs() < 1e-9);
    }

    #[test]
    fn look_at_hand_derived_fixture() {
        let e = look_at_extrinsics(Vec3::new(2.0, 0.0, 0.0), Vec3::ZERO, Vec3::new(0.0, 0.0, 1.0))
            .unwrap();
        assert!(e.rx.sub(Vec3::new(0.0, 1.0, 0.0)).norm() < 1e-12);
        assert!(e.ry.sub(Vec3::new(0.0, 0.0, -1.0)).norm() < 1e-12);
        assert!(e.rz.sub(Vec3::new(-1.0, 0.0, 0.0)).norm() < 1e-12);
        assert!(e.translation.sub(Vec3::new(0.0, 0.0, 2.0)).norm() < 1e-12);
    }

    #[test]
    fn look_at_center_maps_to_optical_axis() {
        let e = look_at_extrinsics(Vec3::new(0.0, 3.0, 0.0), Vec3::ZERO, Vec3::new(0.0, 0.0, 1.0))
            .unwrap();
        let c_cam = e.world_to_camera(Vec3::ZERO);
        assert!(c_cam.sub(Vec3::new(0.0, 0.0, 3.0)).norm() < 1e-12);
    }

    #[test]
    fn look_at_degenerate_cases() {
        assert!(matches!(
            look_at_extrinsics(Vec3::ZERO, Vec3::ZERO, Vec3::new(0.0, 0.0, 1.0)),
            Err(CameraError::ZeroBaseline)
        ));
        assert!(matches!(
            look_at_extrinsics(
                Vec3::new(0.0, 0.0, 5.0),
                Vec3::ZERO,
                Vec3::new(0.0, 0.0, 1.0)
            ),
            Err(CameraError::GimbalLock)
        ));
    }

    #[test]
    fn pose_from_agent_coords_composition() {
        let scene = centered_scene();
        let pose = pose_from_agent_coords(1.5, 0.0, 0.0, &scene).unwrap();
        assert!((pose.spherical.r - 1.5).abs() < 1e-12);
        assert!(pose.spherical.yaw.abs() < 1e-12);
        assert!(pose.extrinsics.rz.sub(Vec3::new(-1.0, 0.0, 0.0)).norm() < 1e-12);

        // pitch 90 clamps to 89.5 and does not trip the gimbal guard
        let pose = pose_from_agent_coords(0.5, 0.5, 90.0, &scene).unwrap();
        assert!((pose.effective_pitch_degrees - PITCH_CLAMP_DEGREES).abs() < 1e-12);
        assert!((pose.requested_pitch_degrees - 90.0).abs() < 1e-12);

        assert!(matches!(
            pose_from_agent_coords(0.0, 0.0, 30.0, &scene),
            Err(CameraError::CoincidesWithCenter)
        ));
        assert!(matches!(
            pose_from_agent_coords(1.0, 0.0, 90.5, &scene),
            Err(CameraError::PitchOutOfRange(_))
        ));
    }

    #[test]
    fn recover_spherical_cases() {
        let pose = CameraSpherical::new(0.3, -0.7, 2.5).unwrap();
        let (_, p) = spherical_to_world(pose, Vec3::new(0.4, -0.2, 1.0));
        let got = recover_spherical(p, Vec3::new(0.4, -0.2, 1.0)).unwrap();
        assert!((got.yaw - 0.3).abs() < 1e-9);
        assert!((got.pitch + 0.7).abs() < 1e-9);
        assert!((got.r - 2.5).abs() < 1e-9);

        let pole = recover_spherical(Vec3::new(0.0, 0.0, 1.0), Vec3::ZERO).unwrap();
        assert_eq!(pole.yaw, 0.0);
        assert!((pole.pitch - FRAC_PI_2).abs() < 1e-12);
        assert!((pole.r - 1.0).abs() < 1e-12);

        let axis = recover_spherical(Vec3::new(2.0, 0.0, 0.0), Vec3::ZERO).unwrap();
        assert_eq!(axis.yaw, 0.0);
        assert_eq!(axis.pitch, 0.0);
        assert!((axis.r - 2.0).abs() < 1e-12);

        assert!(matches!(
            recover_spherical(Vec3::ZERO, Vec3::ZERO),
            Err(CameraError::ZeroBaseline)
        ));
    }

    #[test]
    fn project_center_hits_principal_point() {
        let intr = Intrinsics::default();
        let c = Vec3::new(0.2, -0.4, 0.6);
        let pose = CameraSpherical::new(1.1, 0.4, 3.0).unwrap();
        let (_, p) = spherical_to_world(pose, c);
        let ext = look_at_extrinsics(p, c, Vec3::new(0.0, 0.0, 1.0)).unwrap();
        let (u, v, depth) = project(c, &ext, &intr).unwrap();
        assert!((u - intr.cx).abs() < 1e-6);
        assert!((v - intr.cy).abs() < 1e-6);
        assert!((depth - 3.0).abs() < 1e-9);

        assert!(matches!(
            project(p, &ext, &intr),
            Err(CameraError::BehindCamera)
        ));
    }

    #[test]
    fn default_intrinsics_focal_length() {
        let intr = Intrinsics::default();
        assert_eq!(intr.width, 512);
        assert_eq!(intr.height, 512);
        assert!((intr.fx - 443.40500673763256).abs() < 1e-6);
        assert_eq!(intr.fx, intr.fy);
        assert_eq!(intr.cx, 256.0);
        assert_eq!(intr.cy, 256.0);
    }

    #[test]
    fn planar_to_polar_range_property() {
        let mut state = 0x51ed_270b_u64;
        let mut unit = move || {
            state ^= state << 13;
            state ^= state >> 7;
            state ^= state << 17;
            (state >> 11) as f64 / (1u64 << 53) as f64
        };
        for _ in 0..1000 {
            let x = (unit() * 2.0 - 1.0) * 10.0;
            let y = (unit() * 2.0 - 1.0) * 10.0;
            if x == 0.0 && y == 0.0 {
                continue;
            }
            let (r, yaw) = planar_to_polar(x, y).unwrap();
            assert!(r > 0.0);
            assert!(yaw > -PI && yaw <= PI, "yaw {yaw}");
        }
    }

    #[test]
    fn random_pose_invariants() {
        // deterministic LCG over the documented pitch range
        let mut state = 0xdead_beef_u64;
        let mut unit = move || {
            state = state
                .wrapping_mul(6364136223846793005)
                .wrapping_add(1442695040888963407);
            (state >> 11) as f64 / (1u64 << 53) as f64
        };
        for _ in 0..1000 {
            let yaw = (unit() * 2.0 - 1.0) * (PI - 1e-9);
            let pitch = (unit() * 2.0 - 1.0) * PITCH_CLAMP_DEGREES.to_radians();
            let r = 0.5 + unit() * 9.5;
            let c = Vec3::new(unit() * 4.0 - 2.0, unit() * 4.0 - 2.0, unit() * 4.0 - 2.0);
            let pose = CameraSpherical::new(yaw, pitch, r).unwrap();
            let (_, p) = spherical_to_world(pose, c);

            let rec = recover_spherical(p, c).unwrap();
            assert!((rec.yaw - yaw).abs() < 1e-6);
            assert!((rec.pitch - pitch).abs() < 1e-6);
            assert!((rec.r - r).abs() < 1e-6);

            let ext = look_at_extrinsics(p, c, Vec3::new(0.0, 0.0, 1.0)).unwrap();
            assert!(ext.orthonormality_defect() < 1e-9);
            assert!((ext.basis_determinant() - 1.0).abs() < 1e-9);

            let c_cam = ext.world_to_camera(c);
            assert!(c_cam.sub(Vec3::new(0.0, 0.0, r)).norm() < 1e-9);
        }
    }
}
