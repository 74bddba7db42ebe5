//! Pinhole camera, unit viewing rays and back-projected surface points.
//!
//! Pixel centres sit at integer coordinates with the origin at the top-left
//! pixel. The camera frame is right-handed with x right, y down and z forward.
//! Depth is the Euclidean distance along the unit ray, so a pixel with depth
//! `d` back-projects to `d * ray`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::Grid;
use crate::Vec3;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CameraModel {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: usize,
    pub height: usize,
}

impl CameraModel {
    pub fn new(fx: f64, fy: f64, cx: f64, cy: f64, width: usize, height: usize) -> Result<Self> {
        let cam = CameraModel {
            fx,
            fy,
            cx,
            cy,
            width,
            height,
        };
        cam.validate()?;
        Ok(cam)
    }

    /// A camera with square pixels and the principal point at the image centre.
    pub fn centered(focal: f64, width: usize, height: usize) -> Result<Self> {
        Self::new(
            focal,
            focal,
            (width as f64 - 1.0) / 2.0,
            (height as f64 - 1.0) / 2.0,
            width,
            height,
        )
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.fx > 0.0 && self.fy > 0.0 && self.fx.is_finite() && self.fy.is_finite()) {
            return Err(Error::domain(format!(
                "focal lengths must be positive, got fx={} fy={}",
                self.fx, self.fy
            )));
        }
        if !(self.cx.is_finite() && self.cy.is_finite()) {
            return Err(Error::domain("principal point must be finite"));
        }
        // Normals need a one-pixel border around at least one interior pixel.
        if self.width < 3 || self.height < 3 {
            return Err(Error::domain(format!(
                "camera must be at least 3x3 pixels, got {}x{}",
                self.width, self.height
            )));
        }
        Ok(())
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    /// Unit ray through the (possibly sub-pixel) image location `(u, v)`.
    pub fn inverse_project(&self, u: f64, v: f64) -> Result<Vec3> {
        let in_bounds = u >= 0.0 && v >= 0.0 && u < self.width as f64 && v < self.height as f64;
        if !in_bounds {
            return Err(Error::OutOfBounds {
                u,
                v,
                width: self.width,
                height: self.height,
            });
        }
        Ok(self.ray_unchecked(u, v))
    }

    #[inline]
    fn ray_unchecked(&self, u: f64, v: f64) -> Vec3 {
        Vec3::new((u - self.cx) / self.fx, (v - self.cy) / self.fy, 1.0).normalize()
    }

    /// Pinhole projection of a camera-frame point with `z > 0`.
    pub fn project(&self, p: &Vec3) -> (f64, f64) {
        (p.x / p.z * self.fx + self.cx, p.y / p.z * self.fy + self.cy)
    }
}

/// Unit ray for every pixel centre of a camera.
#[derive(Clone, Debug, PartialEq)]
pub struct RayField {
    directions: Grid<Vec3>,
}

impl RayField {
    pub fn build(cam: &CameraModel) -> Result<Self> {
        cam.validate()?;
        let (w, h) = cam.shape();
        let data: Vec<Vec3> = (0..w * h)
            .into_par_iter()
            .map(|i| cam.ray_unchecked((i % w) as f64, (i / w) as f64))
            .collect();
        Ok(RayField {
            directions: Grid::from_vec(w, h, data)?,
        })
    }

    #[inline]
    pub fn get(&self, u: usize, v: usize) -> &Vec3 {
        self.directions.get(u, v)
    }

    pub fn grid(&self) -> &Grid<Vec3> {
        &self.directions
    }

    pub fn width(&self) -> usize {
        self.directions.width()
    }

    pub fn height(&self) -> usize {
        self.directions.height()
    }

    pub fn shape(&self) -> (usize, usize) {
        self.directions.shape()
    }

    /// Back-projects a whole depth map.
    pub fn points(&self, depth: &Grid<f64>) -> Result<Grid<Vec3>> {
        self.directions.check_same_shape("rays", depth, "depth")?;
        let data = self
            .directions
            .as_slice()
            .iter()
            .zip(depth.as_slice())
            .map(|(r, &d)| r * d)
            .collect();
        Grid::from_vec(depth.width(), depth.height(), data)
    }
}

/// The 3D point at distance `depth` along a unit `ray`.
pub fn surface_point(ray: &Vec3, depth: f64) -> Result<Vec3> {
    if !(depth > 0.0) {
        return Err(Error::domain(format!("depth must be positive, got {depth}")));
    }
    Ok(ray * depth)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn cam100() -> CameraModel {
        CameraModel::new(100.0, 100.0, 50.0, 50.0, 101, 101).unwrap()
    }

    #[test]
    fn principal_point_is_optical_axis() {
        let r = cam100().inverse_project(50.0, 50.0).unwrap();
        assert_eq!(r, Vec3::new(0.0, 0.0, 1.0));
    }

    #[test]
    fn forty_five_degree_ray() {
        let cam = CameraModel::new(100.0, 100.0, 50.0, 50.0, 200, 101).unwrap();
        let r = cam.inverse_project(150.0, 50.0).unwrap();
        let s = std::f64::consts::FRAC_1_SQRT_2;
        assert!((r - Vec3::new(s, 0.0, s)).norm() < 1e-15);
    }

    #[test]
    fn anisotropic_focal_lengths() {
        let cam = CameraModel::new(200.0, 100.0, 64.0, 32.0, 128, 64).unwrap();
        let r = cam.inverse_project(84.0, 52.0).unwrap();
        // (0.1, 0.2, 1) / sqrt(1.05)
        let n = 1.05f64.sqrt();
        let expected = Vec3::new(0.1 / n, 0.2 / n, 1.0 / n);
        assert!((r - expected).norm() < 1e-15);
    }

    #[test]
    fn out_of_bounds_pixel_is_reported() {
        let err = cam100().inverse_project(101.0, 3.0).unwrap_err();
        match err {
            Error::OutOfBounds { u, v, .. } => assert_eq!((u, v), (101.0, 3.0)),
            other => panic!("unexpected {other:?}"),
        }
        assert!(cam100().inverse_project(-0.5, 3.0).is_err());
    }

    #[test]
    fn invalid_cameras_are_rejected() {
        assert!(CameraModel::new(0.0, 1.0, 1.0, 1.0, 3, 3).is_err());
        assert!(CameraModel::new(1.0, -1.0, 1.0, 1.0, 3, 3).is_err());
        assert!(CameraModel::new(1.0, 1.0, 1.0, 1.0, 2, 3).is_err());
    }

    #[test]
    fn ray_field_center_and_corner() {
        let cam = CameraModel::new(1.0, 1.0, 1.0, 1.0, 3, 3).unwrap();
        let rays = RayField::build(&cam).unwrap();
        assert_eq!(*rays.get(1, 1), Vec3::new(0.0, 0.0, 1.0));

        let cam = CameraModel::new(2.0, 2.0, 2.0, 2.0, 5, 5).unwrap();
        let rays = RayField::build(&cam).unwrap();
        let expected = Vec3::new(-1.0, -1.0, 1.0) / 3f64.sqrt();
        assert!((rays.get(0, 0) - expected).norm() < 1e-15);
        for r in rays.grid().iter() {
            assert!((r.norm() - 1.0).abs() < 1e-12);
            assert!(r.z > 0.0);
        }
    }

    #[test]
    fn ray_field_is_deterministic() {
        let cam = CameraModel::new(37.0, 41.0, 20.3, 11.9, 40, 25).unwrap();
        let a = RayField::build(&cam).unwrap();
        let b = RayField::build(&cam).unwrap();
        let bits = |r: &RayField| -> Vec<u64> {
            r.grid()
                .iter()
                .flat_map(|v| [v.x.to_bits(), v.y.to_bits(), v.z.to_bits()])
                .collect()
        };
        assert_eq!(bits(&a), bits(&b));
    }

    #[test]
    fn surface_points() {
        let z = Vec3::new(0.0, 0.0, 1.0);
        assert_eq!(surface_point(&z, 2.0).unwrap(), Vec3::new(0.0, 0.0, 2.0));
        assert_eq!(surface_point(&z, 1.0).unwrap(), z);
        let r = Vec3::new(1.0, 0.0, 1.0).normalize();
        let p = surface_point(&r, 2f64.sqrt()).unwrap();
        assert!((p - Vec3::new(1.0, 0.0, 1.0)).norm() < 1e-15);
        assert!(surface_point(&z, 0.0).is_err());
        assert!(surface_point(&z, -1.0).is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(1000))]
        #[test]
        fn projection_round_trip(u in 0.0f64..640.0, v in 0.0f64..480.0) {
            let cam = CameraModel::new(520.0, 515.0, 319.5, 239.5, 640, 480).unwrap();
            let r = cam.inverse_project(u, v).unwrap();
            prop_assert!((r.norm() - 1.0).abs() < 1e-12);
            let (pu, pv) = cam.project(&r);
            prop_assert!((pu - u).abs() < 1e-9 && (pv - v).abs() < 1e-9);
        }
    }
}
