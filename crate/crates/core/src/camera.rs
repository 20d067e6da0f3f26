//! Pinhole camera, pixel rays, and the perspective depth mapping.

use thiserror::Error;

use crate::math::{Point3, Vec3};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CameraError {
    #[error("near and far must satisfy 0 < near < far, got {near} and {far}")]
    DepthRange { near: f32, far: f32 },
    #[error("vertical field of view must lie in (0, 180) degrees, got {0}")]
    Fov(f32),
    #[error("image size must be non-zero, got {0}x{1}")]
    Size(u32, u32),
    #[error("camera position, target and up must be finite and not collinear")]
    Basis,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Camera {
    pub position: Point3,
    pub target: Point3,
    pub up: Vec3,
    pub fov_deg: f32,
    pub near: f32,
    pub far: f32,
    pub width: u32,
    pub height: u32,
}

/// Orthonormal camera frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CameraFrame {
    pub forward: Vec3,
    pub right: Vec3,
    pub up: Vec3,
    /// `tan(fov / 2)`
    pub tan_half: f32,
}

impl Camera {
    pub fn validate(&self) -> Result<(), CameraError> {
        if !(self.near > 0.0 && self.near < self.far && self.far.is_finite()) {
            return Err(CameraError::DepthRange { near: self.near, far: self.far });
        }
        if !(self.fov_deg > 0.0 && self.fov_deg < 180.0) {
            return Err(CameraError::Fov(self.fov_deg));
        }
        if self.width == 0 || self.height == 0 {
            return Err(CameraError::Size(self.width, self.height));
        }
        let f = self.target - self.position;
        if !(self.position.is_finite() && self.target.is_finite() && self.up.is_finite())
            || f.length() == 0.0
            || f.normalize().cross(self.up.normalize()).length() < 1e-6
        {
            return Err(CameraError::Basis);
        }
        Ok(())
    }

    pub fn frame(&self) -> CameraFrame {
        let forward = (self.target - self.position).normalize();
        let right = forward.cross(self.up).normalize();
        let up = right.cross(forward);
        CameraFrame { forward, right, up, tan_half: (self.fov_deg.to_radians() * 0.5).tan() }
    }

    pub fn aspect(&self) -> f32 {
        self.width as f32 / self.height as f32
    }

    /// Unit direction through image coordinates `(x, y)`, pixel centers at `i + 0.5`, y down.
    pub fn ray_dir(&self, frame: &CameraFrame, x: f32, y: f32) -> Vec3 {
        let sx = (2.0 * x / self.width as f32 - 1.0) * frame.tan_half * self.aspect();
        let sy = (1.0 - 2.0 * y / self.height as f32) * frame.tan_half;
        (frame.forward + frame.right * sx + frame.up * sy).normalize()
    }

    pub fn pixel_ray(&self, frame: &CameraFrame, px: u32, py: u32) -> Vec3 {
        self.ray_dir(frame, px as f32 + 0.5, py as f32 + 0.5)
    }

    /// Perspective depth mapping of a view-space depth to [0, 1].
    pub fn view_depth_to_ndc(&self, z: f32) -> f32 {
        let inv_near = 1.0 / self.near;
        (inv_near - 1.0 / z) / (inv_near - 1.0 / self.far)
    }

    pub fn ndc_to_view_depth(&self, ndc: f32) -> f32 {
        let inv_near = 1.0 / self.near;
        1.0 / (inv_near - ndc * (inv_near - 1.0 / self.far))
    }

    /// Projects a world point to continuous image coordinates; `None` behind the near plane.
    pub fn project(&self, frame: &CameraFrame, p: Point3) -> Option<(f32, f32)> {
        let v = p - self.position;
        let z = v.dot(frame.forward);
        if z < self.near {
            return None;
        }
        let sx = v.dot(frame.right) / (z * frame.tan_half * self.aspect());
        let sy = v.dot(frame.up) / (z * frame.tan_half);
        Some(((sx + 1.0) * 0.5 * self.width as f32, (1.0 - sy) * 0.5 * self.height as f32))
    }

    /// Camera looking at a bounding sphere from direction `from`, framing it fully.
    pub fn framing(center: Point3, radius: f32, from: Vec3, width: u32, height: u32) -> Camera {
        let fov_deg = 45.0f32;
        let half = fov_deg.to_radians() * 0.5;
        let aspect = (width as f32 / height as f32).min(1.0);
        let half_min = (half.tan() * aspect).atan();
        let dist = radius / half_min.sin() * 1.05;
        let position = center + from.normalize() * dist;
        let up = if from.normalize().cross(Vec3::Y).length() < 1e-3 { Vec3::Z } else { Vec3::Y };
        Camera {
            position,
            target: center,
            up,
            fov_deg,
            near: (dist - radius * 1.2).max(0.05 * dist).max(1e-3),
            far: dist + radius * 1.2,
            width,
            height,
        }
    }
}
