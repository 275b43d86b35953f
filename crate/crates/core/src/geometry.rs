//! Camera model and coordinate-frame conventions.
//!
//! World frame: right-handed, x east, y north, z up, meters. Camera frame:
//! z along the optical axis, x along pixel x (right), y along pixel y (down).
//! Euler angles are Z-Y-X intrinsic (yaw, pitch, roll), so
//! `R = Rz(yaw) * Ry(pitch) * Rx(roll)` maps camera coordinates to world
//! coordinates. A nadir camera with the flight direction toward the top of
//! the image has attitude `(roll = pi, pitch = 0, yaw = -heading)`.

#[cfg(not(feature = "std"))]
use num_traits::Float;

use nalgebra::{Matrix3, Unit, Vector2, Vector3};

/// Pitch magnitudes above this are rejected when extracting Euler angles.
pub const GIMBAL_LOCK_LIMIT_RAD: f64 = 89.9 * core::f64::consts::PI / 180.0;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum GeometryError {
    #[error("pixel ({0}, {1}) outside image bounds")]
    PixelOutOfBounds(f64, f64),
    #[error("ray ({0}, {1}, 1) projects outside the field of view")]
    ProjectionOutOfFrame(f64, f64),
    #[error("pitch {0} rad is inside the gimbal-lock band")]
    GimbalLock(f64),
    #[error("invalid camera intrinsics: {0}")]
    InvalidIntrinsics(&'static str),
}

/// Roll, pitch, yaw in radians.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct EulerAngles {
    pub roll: f64,
    pub pitch: f64,
    pub yaw: f64,
}

impl EulerAngles {
    pub fn new(roll: f64, pitch: f64, yaw: f64) -> Self {
        Self { roll, pitch, yaw }
    }
}

/// Pinhole camera with the principal point at the image center and no
/// distortion. The focal lengths are derived from the full field of view
/// along the long (width) and short (height) image sides.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CameraIntrinsics {
    pub width_px: u32,
    pub height_px: u32,
    pub fov_long_deg: f64,
    pub fov_short_deg: f64,
}

impl CameraIntrinsics {
    pub fn new(
        width_px: u32,
        height_px: u32,
        fov_long_deg: f64,
        fov_short_deg: f64,
    ) -> Result<Self, GeometryError> {
        if width_px < 2 || height_px < 2 {
            return Err(GeometryError::InvalidIntrinsics("image smaller than 2x2"));
        }
        for fov in [fov_long_deg, fov_short_deg] {
            if !(fov > 0.0 && fov < 180.0) {
                return Err(GeometryError::InvalidIntrinsics(
                    "field of view must lie in (0, 180) degrees",
                ));
            }
        }
        Ok(Self {
            width_px,
            height_px,
            fov_long_deg,
            fov_short_deg,
        })
    }

    /// Focal length in pixels along the long (width) side.
    pub fn f_long(&self) -> f64 {
        (self.width_px as f64 / 2.0) / (self.fov_long_deg.to_radians() / 2.0).tan()
    }

    /// Focal length in pixels along the short (height) side.
    pub fn f_short(&self) -> f64 {
        (self.height_px as f64 / 2.0) / (self.fov_short_deg.to_radians() / 2.0).tan()
    }

    pub fn principal_point(&self) -> Vector2<f64> {
        Vector2::new(self.width_px as f64 / 2.0, self.height_px as f64 / 2.0)
    }
}

/// Absolute camera state: position in the world frame and Euler attitude.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Pose {
    pub position: Vector3<f64>,
    pub attitude: EulerAngles,
}

impl Pose {
    pub fn new(position: Vector3<f64>, attitude: EulerAngles) -> Self {
        Self { position, attitude }
    }

    /// Camera-to-world rotation of this pose.
    pub fn rotation(&self) -> Matrix3<f64> {
        rotation_from_euler(self.attitude)
    }
}

/// Frame-to-frame motion: `X_c2 = R12 * X_c1 + p12`, with `p12` expressed in
/// the second camera frame and `R12 = rotation_from_euler(attitude_delta)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RelativeMotion {
    pub translation: Vector3<f64>,
    pub attitude_delta: EulerAngles,
}

impl RelativeMotion {
    pub fn new(translation: Vector3<f64>, attitude_delta: EulerAngles) -> Self {
        Self {
            translation,
            attitude_delta,
        }
    }

    pub fn rotation(&self) -> Matrix3<f64> {
        rotation_from_euler(self.attitude_delta)
    }

    /// Relative motion between two absolute poses.
    pub fn between(first: &Pose, second: &Pose) -> Self {
        let r1 = first.rotation();
        let r2 = second.rotation();
        let r12 = r2.transpose() * r1;
        let p12 = r2.transpose() * (first.position - second.position);
        // r12 is a product of rotations, so extraction cannot hit the
        // gimbal band unless the poses themselves are near it.
        let delta = euler_from_rotation(&r12).unwrap_or_default();
        Self::new(p12, delta)
    }

    /// Pose of the second camera given the first and this motion.
    pub fn compose(&self, first: &Pose) -> Result<Pose, GeometryError> {
        let r1 = first.rotation();
        let r12 = self.rotation();
        let r2 = r1 * r12.transpose();
        let p2 = first.position - r2 * self.translation;
        Ok(Pose::new(p2, euler_from_rotation(&r2)?))
    }
}

/// Homogeneous image ray in the camera frame, z component fixed at 1.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ImageRay {
    q: Vector3<f64>,
}

impl ImageRay {
    pub fn new(x: f64, y: f64) -> Self {
        Self {
            q: Vector3::new(x, y, 1.0),
        }
    }

    pub fn vector(&self) -> Vector3<f64> {
        self.q
    }
}

/// Camera-to-world rotation `Rz(yaw) * Ry(pitch) * Rx(roll)`.
pub fn rotation_from_euler(angles: EulerAngles) -> Matrix3<f64> {
    let (sr, cr) = angles.roll.sin_cos();
    let (sp, cp) = angles.pitch.sin_cos();
    let (sy, cy) = angles.yaw.sin_cos();
    Matrix3::new(
        cy * cp,
        cy * sp * sr - sy * cr,
        cy * sp * cr + sy * sr,
        sy * cp,
        sy * sp * sr + cy * cr,
        sy * sp * cr - cy * sr,
        -sp,
        cp * sr,
        cp * cr,
    )
}

/// Inverse of [`rotation_from_euler`]; rejects pitch within 0.1 degrees of
/// +-90 where roll and yaw are no longer separable.
pub fn euler_from_rotation(r: &Matrix3<f64>) -> Result<EulerAngles, GeometryError> {
    let pitch = (-r[(2, 0)]).clamp(-1.0, 1.0).asin();
    if pitch.abs() > GIMBAL_LOCK_LIMIT_RAD {
        return Err(GeometryError::GimbalLock(pitch));
    }
    let roll = r[(2, 1)].atan2(r[(2, 2)]);
    let yaw = r[(1, 0)].atan2(r[(0, 0)]);
    Ok(EulerAngles::new(roll, pitch, yaw))
}

/// Back-projects a pixel to its homogeneous camera-frame ray.
///
/// The continuous image footprint is `[0, width] x [0, height]`; a pixel on
/// the long-side edge (`u.x = width`) maps to `q.x = tan(fov_long / 2)`.
pub fn pixel_to_ray(
    intrinsics: &CameraIntrinsics,
    pixel: Vector2<f64>,
) -> Result<ImageRay, GeometryError> {
    let (w, h) = (intrinsics.width_px as f64, intrinsics.height_px as f64);
    if !(0.0..=w).contains(&pixel.x) || !(0.0..=h).contains(&pixel.y) {
        return Err(GeometryError::PixelOutOfBounds(pixel.x, pixel.y));
    }
    let c = intrinsics.principal_point();
    Ok(ImageRay::new(
        (pixel.x - c.x) / intrinsics.f_long(),
        (pixel.y - c.y) / intrinsics.f_short(),
    ))
}

/// Projects a camera-frame ray to pixel coordinates; inverse of
/// [`pixel_to_ray`] on the valid domain.
pub fn ray_to_pixel(
    intrinsics: &CameraIntrinsics,
    ray: &ImageRay,
) -> Result<Vector2<f64>, GeometryError> {
    let q = ray.vector();
    let half_long = (intrinsics.fov_long_deg.to_radians() / 2.0).tan();
    let half_short = (intrinsics.fov_short_deg.to_radians() / 2.0).tan();
    let eps = 1e-12;
    if q.x.abs() > half_long + eps || q.y.abs() > half_short + eps {
        return Err(GeometryError::ProjectionOutOfFrame(q.x, q.y));
    }
    let c = intrinsics.principal_point();
    Ok(Vector2::new(
        c.x + intrinsics.f_long() * q.x,
        c.y + intrinsics.f_short() * q.y,
    ))
}

/// World-frame unit direction of an image ray observed from `pose`.
pub fn camera_ray_to_world(pose: &Pose, ray: &ImageRay) -> Unit<Vector3<f64>> {
    Unit::new_normalize(pose.rotation() * ray.vector())
}

/// Smallest signed difference `a - b` wrapped to `(-pi, pi]`.
pub fn wrap_angle(a: f64, b: f64) -> f64 {
    let two_pi = 2.0 * core::f64::consts::PI;
    let mut d = (a - b) % two_pi;
    if d > core::f64::consts::PI {
        d -= two_pi;
    } else if d <= -core::f64::consts::PI {
        d += two_pi;
    }
    d
}
