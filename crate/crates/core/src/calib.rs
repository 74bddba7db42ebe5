//! Photometric calibration of the spotlight from images of known geometry.
//!
//! The light position and spread factor are fitted; the axis, maximum
//! radiance, gain and response curve are held at the values of the initial
//! guess. Observations should include at least two target depths or a
//! tilted target, otherwise spread and position are hard to separate and the
//! report carries a conditioning warning.

use nalgebra::{Matrix4, Vector4};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::{AlbedoField, ColorImage, NormalMap, ScalarField};
use crate::geometry::{CameraModel, RayField};
use crate::io::bundle::Bundle;
use crate::photometry::LightModel;
use crate::Vec3;

/// One image of a calibration target with its known geometry and albedo.
#[derive(Clone, Debug)]
pub struct CalibObservation {
    pub image: ColorImage,
    pub depth: ScalarField,
    pub normals: NormalMap,
    pub albedo: AlbedoField,
}

impl CalibObservation {
    pub fn new(
        image: ColorImage,
        depth: ScalarField,
        normals: NormalMap,
        albedo: AlbedoField,
    ) -> Result<Self> {
        let obs = Self { image, depth, normals, albedo };
        obs.validate()?;
        Ok(obs)
    }

    pub fn from_bundle(bundle: Bundle) -> Result<Self> {
        Self::new(bundle.image, bundle.depth, bundle.normals, bundle.albedo)
    }

    pub fn validate(&self) -> Result<()> {
        self.image.check_same_shape("image", &self.depth, "depth")?;
        self.image.check_same_shape("image", &self.normals, "normals")?;
        self.image.check_same_shape("image", &self.albedo, "albedo")?;
        self.depth.check_positive("depth")
    }
}

pub const QUIET_STEPS: usize = 20;

/// Optimiser settings for [`calibrate_light`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CalibConfig {
    pub max_iterations: usize,
    /// Initial step size; decays geometrically to `final_step_size`.
    pub step_size: f64,
    pub final_step_size: f64,
    /// Converged once [`QUIET_STEPS`] consecutive updates each moved every
    /// parameter by less than this.
    pub tolerance: f64,
    /// Condition number of the normal matrix above which the geometry is
    /// reported as degenerate.
    pub max_condition: f64,
}

impl Default for CalibConfig {
    fn default() -> Self {
        Self {
            max_iterations: 4000,
            step_size: 2e-2,
            final_step_size: 1e-10,
            tolerance: 1e-8,
            max_condition: 1e10,
        }
    }
}

impl CalibConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_iterations == 0 {
            return Err(Error::domain("max_iterations must be at least 1"));
        }
        if !(self.step_size > 0.0 && self.final_step_size > 0.0) {
            return Err(Error::domain("step sizes must be positive"));
        }
        if self.final_step_size > self.step_size {
            return Err(Error::domain("final_step_size must not exceed step_size"));
        }
        if !(self.tolerance >= 0.0) {
            return Err(Error::domain("tolerance must be non-negative"));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CalibReport {
    /// Root-mean-square colour residual of each observation in gray levels.
    pub rms_gray_levels: Vec<f64>,
    pub initial_rms_gray_levels: Vec<f64>,
    /// Mean squared residual over all observations at the returned model.
    pub loss: f64,
    pub initial_loss: f64,
    pub iterations: usize,
    pub converged: bool,
    pub condition_number: f64,
    pub warning: Option<String>,
}

struct Prepared {
    points: Vec<Vec3>,
    normals: Vec<Vec3>,
    albedo: Vec<Vec3>,
    image: Vec<Vec3>,
    width: usize,
}

impl Prepared {
    fn rows(&self) -> usize {
        self.points.len() / self.width
    }
}

/// Sums of squared residual, its gradient and the Gauss-Newton matrix in
/// (x, y, z, mu).
#[derive(Clone, Copy, Default)]
struct Accum {
    sse: f64,
    grad: Vector4<f64>,
    normal: Matrix4<f64>,
}

impl std::ops::Add for Accum {
    type Output = Self;
    fn add(self, o: Self) -> Self {
        Self { sse: self.sse + o.sse, grad: self.grad + o.grad, normal: self.normal + o.normal }
    }
}

fn light_with(base: &LightModel, p: &[f64; 4]) -> LightModel {
    LightModel { position: Vec3::new(p[0], p[1], p[2]), mu: p[3], ..*base }
}

fn accumulate(light: &LightModel, obs: &Prepared, with_normal: bool) -> Accum {
    let rows: Vec<Accum> = (0..obs.rows())
        .into_par_iter()
        .map(|v| {
            let mut acc = Accum::default();
            for i in v * obs.width..(v + 1) * obs.width {
                let irr = light.irradiance(&obs.points[i], &obs.normals[i]);
                let d_e = Vector4::new(-irr.d_point.x, -irr.d_point.y, -irr.d_point.z, irr.d_mu);
                let e = irr.value * light.gain;
                for k in 0..3 {
                    let scale = obs.albedo[i][k] * light.gain;
                    let rad = obs.albedo[i][k] * e;
                    let r = light.response(rad) - obs.image[i][k];
                    let j = d_e * (light.response_derivative(rad) * scale);
                    acc.sse += r * r;
                    acc.grad += j * (2.0 * r);
                    if with_normal {
                        acc.normal += j * j.transpose();
                    }
                }
            }
            acc
        })
        .collect();
    rows.into_iter().fold(Accum::default(), |a, b| a + b)
}

fn evaluate(light: &LightModel, prepared: &[Prepared], with_normal: bool) -> (Vec<Accum>, f64, usize) {
    let per: Vec<Accum> = prepared.iter().map(|o| accumulate(light, o, with_normal)).collect();
    let count: usize = prepared.iter().map(|o| o.points.len() * 3).sum();
    let sse: f64 = per.iter().map(|a| a.sse).sum();
    (per, sse / count as f64, count)
}

fn rms_gray(per: &[Accum], prepared: &[Prepared]) -> Vec<f64> {
    per.iter()
        .zip(prepared)
        .map(|(a, o)| 255.0 * (a.sse / (o.points.len() * 3) as f64).sqrt())
        .collect()
}

fn prepare(observations: &[CalibObservation], cam: &CameraModel) -> Result<Vec<Prepared>> {
    let rays = RayField::build(cam)?;
    observations
        .iter()
        .map(|obs| {
            obs.validate()?;
            obs.image.check_same_shape("image", rays.grid(), "camera")?;
            let points = rays.points(&obs.depth)?;
            Ok(Prepared {
                points: points.into_vec(),
                normals: obs.normals.as_slice().to_vec(),
                albedo: obs.albedo.iter().map(|a| a.to_rgb()).collect(),
                image: obs.image.as_slice().to_vec(),
                width: cam.width,
            })
        })
        .collect()
}

/// Fits the light position and spread factor to the observations.
pub fn calibrate_light(
    observations: &[CalibObservation],
    cam: &CameraModel,
    init: &LightModel,
    config: &CalibConfig,
) -> Result<(LightModel, CalibReport)> {
    calibrate(observations, cam, init, config, false)
}

/// Fits only the light position, holding the spread factor of `init`.
pub fn calibrate_position(
    observations: &[CalibObservation],
    cam: &CameraModel,
    init: &LightModel,
    config: &CalibConfig,
) -> Result<(LightModel, CalibReport)> {
    calibrate(observations, cam, init, config, true)
}

fn calibrate(
    observations: &[CalibObservation],
    cam: &CameraModel,
    init: &LightModel,
    config: &CalibConfig,
    fix_mu: bool,
) -> Result<(LightModel, CalibReport)> {
    if observations.is_empty() {
        return Err(Error::domain("calibration needs at least one observation"));
    }
    cam.validate()?;
    init.validate()?;
    config.validate()?;
    let prepared = prepare(observations, cam)?;
    let active = if fix_mu { 3 } else { 4 };

    let mut params = [init.position.x, init.position.y, init.position.z, init.mu];
    let (init_per, initial_loss, count) = evaluate(init, &prepared, false);
    let initial_rms = rms_gray(&init_per, &prepared);
    let mut best = (initial_loss, params);
    let mut adam = crate::optim::Adam::new(active, config.step_size);
    let decay = if config.max_iterations > 1 {
        (config.final_step_size / config.step_size).powf(1.0 / (config.max_iterations - 1) as f64)
    } else {
        1.0
    };

    let mut iterations = 0;
    let mut converged = initial_loss == 0.0;
    let mut quiet = 0;
    while !converged && iterations < config.max_iterations {
        let light = light_with(init, &params);
        let (per, loss, _) = evaluate(&light, &prepared, false);
        if !loss.is_finite() {
            break;
        }
        if loss < best.0 {
            best = (loss, params);
        }
        if loss == 0.0 {
            converged = true;
            break;
        }
        let grad: Vector4<f64> = per.iter().map(|a| a.grad).sum::<Vector4<f64>>() / count as f64;
        let before = params;
        adam.step(&mut params[..active], &grad.as_slice()[..active]);
        adam.learning_rate *= decay;
        iterations += 1;
        if params[3] < 0.0 {
            params[3] = 0.0;
        }
        let moved = (0..active).map(|k| (params[k] - before[k]).abs()).fold(0.0, f64::max);
        quiet = if moved < config.tolerance { quiet + 1 } else { 0 };
        converged = quiet >= QUIET_STEPS;
    }
    let last = light_with(init, &params);
    let (_, last_loss, _) = evaluate(&last, &prepared, false);
    if last_loss < best.0 {
        best = (last_loss, params);
    }

    let fitted = light_with(init, &best.1);
    let (per, loss, _) = evaluate(&fitted, &prepared, true);
    let normal: Matrix4<f64> = per.iter().map(|a| a.normal).sum();
    let condition_number = condition(&normal, active);
    let warning = (!(condition_number <= config.max_condition)).then(|| {
        format!(
            "poorly conditioned fit (condition number {condition_number:.3e}); \
             add target depths or a tilted target"
        )
    });
    let report = CalibReport {
        rms_gray_levels: rms_gray(&per, &prepared),
        initial_rms_gray_levels: initial_rms,
        loss,
        initial_loss,
        iterations,
        converged,
        condition_number,
        warning,
    };
    Ok((fitted, report))
}

fn condition(normal: &Matrix4<f64>, active: usize) -> f64 {
    let sub = normal.view((0, 0), (active, active)).clone_owned();
    let eig = sub.symmetric_eigenvalues();
    let max = eig.iter().cloned().fold(0.0, f64::max);
    let min = eig.iter().cloned().fold(f64::INFINITY, f64::min);
    if min <= 0.0 {
        f64::INFINITY
    } else {
        max / min
    }
}
