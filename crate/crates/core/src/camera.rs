//! Orbit cameras and rays.
//!
//! World is Z-up. Azimuth 0 puts the camera on the +X axis looking at the
//! origin; positive azimuth turns toward +Y and positive elevation lifts the
//! camera toward +Z. In the image, +u runs right and +v runs down.

use crate::error::{Error, Result};
use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

pub type Vec3 = Vector3<f32>;

/// Elevation/azimuth pair in degrees, relative to the input view.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CameraPose {
    pub elevation_deg: f32,
    pub azimuth_deg: f32,
}

impl CameraPose {
    pub fn new(elevation_deg: f32, azimuth_deg: f32) -> Result<Self> {
        if !(-90.0..=90.0).contains(&elevation_deg) || !azimuth_deg.is_finite() {
            return Err(Error::config(format!(
                "camera pose (elevation {elevation_deg}, azimuth {azimuth_deg}) out of range"
            )));
        }
        Ok(Self {
            elevation_deg,
            azimuth_deg: azimuth_deg.rem_euclid(360.0),
        })
    }

    /// The input view.
    pub fn origin() -> Self {
        Self {
            elevation_deg: 0.0,
            azimuth_deg: 0.0,
        }
    }

    /// Azimuth wrapped into `[0, 360)`.
    pub fn azimuth_wrapped(&self) -> f32 {
        let a = self.azimuth_deg.rem_euclid(360.0);
        if a >= 360.0 {
            0.0
        } else {
            a
        }
    }

    /// `count` poses evenly spaced in azimuth starting at 0.
    pub fn orbit(count: usize, elevation_deg: f32) -> Vec<CameraPose> {
        (0..count)
            .map(|i| CameraPose {
                elevation_deg,
                azimuth_deg: 360.0 * i as f32 / count as f32,
            })
            .collect()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OrbitCamera {
    pub radius: f32,
    pub fov_y_deg: f32,
}

impl Default for OrbitCamera {
    fn default() -> Self {
        Self {
            radius: 2.0,
            fov_y_deg: 33.8,
        }
    }
}

/// Camera frame for one pose: position plus orthonormal right/up/forward.
#[derive(Clone, Copy, Debug)]
pub struct CameraFrame {
    pub position: Vec3,
    pub right: Vec3,
    pub up: Vec3,
    pub forward: Vec3,
    pub tan_half_fov: f32,
}

impl OrbitCamera {
    pub fn frame(&self, pose: &CameraPose) -> CameraFrame {
        // Azimuth goes through sin/cos in f64 so a and a+360 agree bitwise.
        let a = (pose.azimuth_wrapped() as f64).to_radians();
        let e = (pose.elevation_deg as f64).to_radians();
        let dir = Vector3::new(e.cos() * a.cos(), e.cos() * a.sin(), e.sin());
        let position = (dir * self.radius as f64).cast::<f32>();
        let forward = (-dir).cast::<f32>();
        let world_up = Vec3::z();
        let mut right = forward.cross(&world_up);
        if right.norm() < 1e-6 {
            // Looking straight down/up: fall back to the azimuth tangent.
            right = Vec3::new(-(a.sin() as f32), a.cos() as f32, 0.0);
        }
        let right = right.normalize();
        let up = right.cross(&forward).normalize();
        CameraFrame {
            position,
            right,
            up,
            forward,
            tan_half_fov: (self.fov_y_deg.to_radians() * 0.5).tan(),
        }
    }

    /// Ray through the centre of pixel (`px`, `py`) of a `width` x `height` image.
    pub fn pixel_ray(&self, frame: &CameraFrame, px: f32, py: f32, width: usize, height: usize) -> (Vec3, Vec3) {
        let aspect = width as f32 / height as f32;
        let u = (2.0 * (px + 0.5) / width as f32 - 1.0) * frame.tan_half_fov * aspect;
        let v = (1.0 - 2.0 * (py + 0.5) / height as f32) * frame.tan_half_fov;
        let d = (frame.forward + frame.right * u + frame.up * v).normalize();
        (frame.position, d)
    }

    /// Projects a world point to continuous pixel coordinates.
    pub fn project(&self, frame: &CameraFrame, p: &Vec3, width: usize, height: usize) -> Option<(f32, f32)> {
        let rel = p - frame.position;
        let z = rel.dot(&frame.forward);
        if z <= 0.0 {
            return None;
        }
        let aspect = width as f32 / height as f32;
        let u = rel.dot(&frame.right) / (z * frame.tan_half_fov * aspect);
        let v = rel.dot(&frame.up) / (z * frame.tan_half_fov);
        Some(((u + 1.0) * 0.5 * width as f32 - 0.5, (1.0 - v) * 0.5 * height as f32 - 0.5))
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Ray {
    pub origin: Vec3,
    pub direction: Vec3,
    pub t_near: f32,
    pub t_far: f32,
}

impl Ray {
    /// Validated ray; the direction must be unit length to within 1e-6.
    pub fn new(origin: Vec3, direction: Vec3, t_near: f32, t_far: f32) -> Result<Self> {
        let r = Self {
            origin,
            direction,
            t_near,
            t_far,
        };
        r.validate()?;
        Ok(r)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.t_near < self.t_far) {
            return Err(Error::Geometry(format!(
                "degenerate ray interval [{}, {}]",
                self.t_near, self.t_far
            )));
        }
        if ((self.direction.norm() - 1.0).abs()) > 1e-6 {
            return Err(Error::Geometry(format!(
                "ray direction has norm {}",
                self.direction.norm()
            )));
        }
        Ok(())
    }

    pub fn at(&self, t: f32) -> Vec3 {
        self.origin + self.direction * t
    }
}

/// Slab intersection with the axis-aligned cube `[-half, half]^3`.
pub fn intersect_cube(origin: &Vec3, dir: &Vec3, half: f32) -> Option<(f32, f32)> {
    let mut t0 = f32::NEG_INFINITY;
    let mut t1 = f32::INFINITY;
    for i in 0..3 {
        if dir[i].abs() < 1e-12 {
            if origin[i].abs() > half {
                return None;
            }
            continue;
        }
        let inv = 1.0 / dir[i];
        let (a, b) = ((-half - origin[i]) * inv, (half - origin[i]) * inv);
        t0 = t0.max(a.min(b));
        t1 = t1.min(a.max(b));
    }
    let t0 = t0.max(0.0);
    (t1 > t0).then_some((t0, t1))
}
