use crate::error::{Error, Result};
use crate::math::Vec3;
use crate::render::Camera;
use serde::{Deserialize, Serialize};

/// Camera circling `center` about the +y axis at a fixed elevation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Orbit {
    pub center: Vec3,
    pub radius: f32,
    /// Degrees above the orbit plane.
    #[serde(default = "default_elevation")]
    pub elevation: f32,
    /// Frames per revolution; 0 keeps the camera at azimuth 0.
    pub period: u32,
    #[serde(default = "default_fov")]
    pub fov: f32,
    #[serde(default = "default_film")]
    pub width: u32,
    #[serde(default = "default_film")]
    pub height: u32,
}

fn default_elevation() -> f32 {
    20.0
}
fn default_fov() -> f32 {
    40.0
}
fn default_film() -> u32 {
    256
}

impl Orbit {
    pub fn new(center: Vec3, radius: f32, period: u32) -> Result<Self> {
        let o = Self {
            center,
            radius,
            elevation: default_elevation(),
            period,
            fov: default_fov(),
            width: default_film(),
            height: default_film(),
        };
        o.validate()?;
        Ok(o)
    }

    /// Orbit framing a volume of `dims` voxels.
    pub fn around(dims: [u32; 3], period: u32) -> Self {
        let d = Vec3::new(dims[0] as f32, dims[1] as f32, dims[2] as f32);
        Self::new(d * 0.5, 1.8 * d.x.max(d.y).max(d.z), period).expect("positive radius")
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.radius > 0.0 && self.radius.is_finite()) {
            return Err(Error::Config(format!(
                "orbit radius {} must be > 0",
                self.radius
            )));
        }
        if !(self.elevation.abs() < 89.0) {
            return Err(Error::Config(
                "orbit elevation must be within (-89, 89) degrees".into(),
            ));
        }
        Ok(())
    }

    pub fn azimuth(&self, frame: u32) -> f64 {
        if self.period == 0 {
            return 0.0;
        }
        let phase = (frame % self.period) as f64 / self.period as f64;
        std::f64::consts::TAU * phase
    }

    /// Camera position in double precision.
    pub fn position_f64(&self, frame: u32) -> [f64; 3] {
        let az = self.azimuth(frame);
        let el = (self.elevation as f64).to_radians();
        let r = self.radius as f64;
        let c = self.center;
        [
            c.x as f64 + r * el.cos() * az.cos(),
            c.y as f64 + r * el.sin(),
            c.z as f64 + r * el.cos() * az.sin(),
        ]
    }

    pub fn camera(&self, frame: u32) -> Camera {
        let [x, y, z] = self.position_f64(frame);
        Camera {
            position: Vec3::new(x as f32, y as f32, z as f32),
            target: self.center,
            up: Vec3::new(0.0, 1.0, 0.0),
            fov: self.fov,
            width: self.width,
            height: self.height,
        }
    }
}

/// One camera per frame over `frames` frames, one revolution per `frames`.
pub fn orbit_trajectory(center: Vec3, radius: f32, frames: u32) -> Result<Vec<Camera>> {
    let o = Orbit::new(center, radius, frames)?;
    Ok((0..frames).map(|i| o.camera(i)).collect())
}
