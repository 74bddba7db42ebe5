//! Single-view recovery of depth and albedo from images lit by a spotlight
//! that travels with the camera.
//!
//! The crate is organised bottom-up:
//!
//! * [`geometry`]: pinhole camera, per-pixel unit rays, surface points.
//! * [`photometry`]: spotlight model and the forward rendering equation.
//! * [`normals`]: surface normals from depth maps.
//! * [`losses`]: photometric, smoothness and specular losses.
//! * [`optim`]: gradient-based recovery of depth and albedo.
//! * [`synth`]: ray-cast scenes with exact ground truth.
//! * [`calib`]: fitting the light position and spread.
//! * [`metrics`]: depth, normal and image quality metrics.
//! * [`io`]: PFM/PPM readers and writers, scene bundles.

pub mod calib;
pub mod error;
pub mod field;
pub mod geometry;
pub mod io;
pub mod losses;
pub mod metrics;
pub mod normals;
pub mod optim;
pub mod photometry;
pub mod synth;

pub use error::{Error, Result};
pub use field::{AlbedoField, ColorImage, Grid, NormalMap, ScalarField, VectorField};
pub use geometry::{CameraModel, RayField};
pub use photometry::{AlbedoHS, LightModel};

pub use nalgebra::Vector3;

pub type Vec3 = nalgebra::Vector3<f64>;
