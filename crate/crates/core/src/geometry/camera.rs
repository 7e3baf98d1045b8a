use serde::{Deserialize, Serialize};

use super::{Pose, Vec3};
use crate::error::{Error, Result};

/// Pinhole camera. `viewport` is the number of output pixels per unit of the
/// focal plane, so a camera-space point `(x, y, z)` lands at
/// `u = width/2 + focal*viewport*x/z`, `v = height/2 - focal*viewport*y/z`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Camera {
    pub focal: f64,
    pub viewport: f64,
    pub width: usize,
    pub height: usize,
}

/// Pixels per focal-plane unit, relative to the output width, for the desk
/// default: a unit cube at distance 5 covers roughly 40% of the image.
pub(crate) const DESK_VIEWPORT_PER_WIDTH: f64 = 2.85;

impl Camera {
    pub fn new(focal: f64, viewport: f64, width: usize, height: usize) -> Result<Self> {
        let cam = Self {
            focal,
            viewport,
            width,
            height,
        };
        cam.validate()?;
        Ok(cam)
    }

    /// Focal length 1 with the desk viewport scaled to the output width.
    pub fn desk(width: usize, height: usize) -> Self {
        Self {
            focal: 1.0,
            viewport: DESK_VIEWPORT_PER_WIDTH * width as f64,
            width,
            height,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.focal > 0.0) || !(self.viewport > 0.0) {
            return Err(Error::invalid("focal and viewport must be positive"));
        }
        if self.width < 8 || self.height < 8 {
            return Err(Error::invalid(format!(
                "output must be at least 8x8, got {}x{}",
                self.width, self.height
            )));
        }
        Ok(())
    }

    /// The same camera observing at `1/stride` of the resolution.
    pub fn downsampled(&self, stride: usize) -> Self {
        Self {
            focal: self.focal,
            viewport: self.viewport / stride as f64,
            width: self.width / stride,
            height: self.height / stride,
        }
    }

    pub fn pixel_count(&self) -> usize {
        self.width * self.height
    }

    /// Object-space point to camera space.
    pub fn to_camera(&self, pose: &Pose, p: [f64; 3]) -> Vec3 {
        pose.rotation() * Vec3::new(p[0], p[1], p[2]) + Vec3::new(0.0, 0.0, pose.distance)
    }

    /// Continuous image coordinates of a camera-space point.
    #[inline]
    pub fn project(&self, c: &Vec3) -> [f64; 2] {
        let s = self.focal * self.viewport / c.z;
        [
            self.width as f64 / 2.0 + s * c.x,
            self.height as f64 / 2.0 - s * c.y,
        ]
    }
}
