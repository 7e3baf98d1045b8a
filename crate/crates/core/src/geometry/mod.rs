//! Cuboid meshes, camera poses, and a z-buffer rasterizer.
//!
//! Coordinates: object space is right-handed with `y` up. Camera space has
//! `x` to the right, `y` up and `z` pointing away from the camera into the
//! scene, so a point is in front of the camera when its `z` is positive.
//! Image rows grow downwards.

mod camera;
mod mesh;
mod pose;
mod raster;

pub use camera::Camera;
pub use mesh::{build_cuboid, vertex_neighborhoods, CuboidMesh};
pub use pose::{
    axis_angle_rotation, check_rotation, pose_to_rotation, rotation_error, template_pose_grid,
    Pose,
};
pub use raster::{rasterize, RenderResult};

pub type Mat3 = nalgebra::Matrix3<f64>;
pub type Vec3 = nalgebra::Vector3<f64>;
