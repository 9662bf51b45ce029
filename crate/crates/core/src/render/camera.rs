use crate::error::{Error, Result};
use crate::math::{Aabb, Ray, Vec3};
use serde::{Deserialize, Serialize};
use std::path::Path;

/// Pinhole camera in world (voxel) space.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Camera {
    pub position: Vec3,
    pub target: Vec3,
    pub up: Vec3,
    /// Vertical field of view in degrees.
    pub fov: f32,
    pub width: u32,
    pub height: u32,
}

impl Camera {
    pub fn new(
        position: Vec3,
        target: Vec3,
        up: Vec3,
        fov: f32,
        width: u32,
        height: u32,
    ) -> Result<Self> {
        let c = Self {
            position,
            target,
            up,
            fov,
            width,
            height,
        };
        c.validate()?;
        Ok(c)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let c: Camera = serde_json::from_slice(&std::fs::read(path)?)?;
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.fov > 0.0 && self.fov < 180.0) {
            return Err(Error::Config(format!("fov {} outside (0, 180)", self.fov)));
        }
        if self.width == 0 || self.height == 0 {
            return Err(Error::Config("film size must be >= 1x1".into()));
        }
        let f = self.target - self.position;
        if !(f.length() > 0.0) || !self.position.is_finite() || !self.target.is_finite() {
            return Err(Error::Config(
                "camera position and target must differ".into(),
            ));
        }
        if self.up.cross(f).length() <= 1e-6 * f.length() * self.up.length() {
            return Err(Error::Config(
                "up vector is parallel to the view direction".into(),
            ));
        }
        Ok(())
    }

    /// Orthonormal `(forward, right, up)`.
    pub fn basis(&self) -> (Vec3, Vec3, Vec3) {
        let f = (self.target - self.position).normalized();
        let r = f.cross(self.up).normalized();
        let u = r.cross(f);
        (f, r, u)
    }

    /// Ray through film position `(x, y)` in pixels; pixel centers sit at
    /// half-integers and `y` grows downward.
    pub fn ray(&self, x: f32, y: f32) -> Ray {
        let (f, r, u) = self.basis();
        let tan = (self.fov.to_radians() * 0.5).tan();
        let aspect = self.width as f32 / self.height as f32;
        let sx = (2.0 * x / self.width as f32 - 1.0) * tan * aspect;
        let sy = (1.0 - 2.0 * y / self.height as f32) * tan;
        Ray::new(self.position, (f + r * sx + u * sy).normalized())
    }

    pub fn pixel_ray(&self, px: u32, py: u32) -> Ray {
        self.ray(px as f32 + 0.5, py as f32 + 0.5)
    }
}

/// A primary ray that hits the volume.
#[derive(Clone, Copy, Debug)]
pub struct ActiveRay {
    pub pixel: u32,
    pub ray: Ray,
    pub t_enter: f32,
    pub t_exit: f32,
}

/// One ray per pixel center, keeping only those that intersect `bounds`.
pub fn generate_rays(camera: &Camera, bounds: &Aabb) -> Vec<ActiveRay> {
    let mut out = Vec::new();
    for py in 0..camera.height {
        for px in 0..camera.width {
            let ray = camera.pixel_ray(px, py);
            if let Some((t_enter, t_exit)) = bounds.intersect(&ray) {
                out.push(ActiveRay {
                    pixel: py * camera.width + px,
                    ray,
                    t_enter,
                    t_exit,
                });
            }
        }
    }
    out
}
