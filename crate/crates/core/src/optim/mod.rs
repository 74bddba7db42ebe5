//! Per-pixel recovery of depth and albedo by gradient descent on the total
//! loss.
//!
//! Depth and albedo are reparameterised so that every finite parameter
//! vector decodes to a valid scene: depth is `exp(log_depth)`, hue wraps the
//! raw value modulo one and saturation is a logistic squash.

mod adam;
mod gradient;

use std::path::PathBuf;

use serde::{Deserialize, Serialize};

pub use adam::Adam;
pub use gradient::{loss_gradient, Gradient, RecoveryProblem};

use crate::error::{Error, Result};
use crate::field::{AlbedoField, ColorImage, Grid, NormalMap, ScalarField};
use crate::geometry::CameraModel;
use crate::losses::{LossBreakdown, LossWeights};
use crate::photometry::{AlbedoHS, LightModel};

/// Saturation is kept this far from 0 and 1 when encoding, so its logit
/// stays finite.
const SATURATION_MARGIN: f64 = 1e-6;

#[derive(Clone, Debug, PartialEq)]
pub struct RecoveryState {
    pub log_depth: ScalarField,
    /// Raw `(hue, saturation)` parameters per pixel.
    pub albedo_logits: Grid<[f64; 2]>,
    pub step: usize,
    pub loss_history: Vec<LossBreakdown>,
}

#[inline]
pub(crate) fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

#[inline]
pub(crate) fn wrap_hue(raw: f64) -> f64 {
    let h = raw.rem_euclid(1.0);
    if h >= 1.0 {
        0.0
    } else {
        h
    }
}

fn encode_albedo(a: &AlbedoHS) -> [f64; 2] {
    let s = a.s.clamp(SATURATION_MARGIN, 1.0 - SATURATION_MARGIN);
    [a.h, (s / (1.0 - s)).ln()]
}

impl RecoveryState {
    pub fn from_fields(depth: &ScalarField, albedo: &AlbedoField) -> Result<Self> {
        depth.check_same_shape("depth", albedo, "albedo")?;
        depth.check_positive("initial depth")?;
        for a in albedo.iter() {
            a.validate()?;
        }
        Ok(RecoveryState {
            log_depth: depth.map(|d| d.ln()),
            albedo_logits: albedo.map(encode_albedo),
            step: 0,
            loss_history: Vec::new(),
        })
    }

    pub fn constant(width: usize, height: usize, depth: f64, albedo: AlbedoHS) -> Result<Self> {
        Self::from_fields(
            &Grid::filled(width, height, depth),
            &Grid::filled(width, height, albedo),
        )
    }

    pub fn shape(&self) -> (usize, usize) {
        self.log_depth.shape()
    }

    /// Decoded depth and albedo.
    pub fn decode(&self) -> (ScalarField, AlbedoField) {
        decode(self)
    }

    pub(crate) fn check_finite(&self) -> Result<()> {
        let w = self.log_depth.width();
        for (i, (q, a)) in self
            .log_depth
            .iter()
            .zip(self.albedo_logits.iter())
            .enumerate()
        {
            if !(q.is_finite() && a[0].is_finite() && a[1].is_finite()) {
                return Err(Error::NonFinite {
                    what: "recovery parameter",
                    u: i % w,
                    v: i / w,
                });
            }
        }
        Ok(())
    }

    pub(crate) fn to_flat(&self) -> Vec<f64> {
        let mut flat = Vec::with_capacity(self.log_depth.len() * 3);
        flat.extend(self.log_depth.iter().copied());
        flat.extend(self.albedo_logits.iter().map(|a| a[0]));
        flat.extend(self.albedo_logits.iter().map(|a| a[1]));
        flat
    }

    pub(crate) fn set_flat(&mut self, flat: &[f64]) {
        let n = self.log_depth.len();
        self.log_depth.as_mut_slice().copy_from_slice(&flat[..n]);
        for (i, a) in self.albedo_logits.as_mut_slice().iter_mut().enumerate() {
            *a = [flat[n + i], flat[2 * n + i]];
        }
    }
}

/// `depth = exp(log_depth)`, `h = fract(raw_h)`, `s = sigmoid(raw_s)`.
pub fn decode(state: &RecoveryState) -> (ScalarField, AlbedoField) {
    let depth = state.log_depth.map(|q| q.exp());
    let albedo = state.albedo_logits.map(|a| AlbedoHS {
        h: wrap_hue(a[0]),
        s: sigmoid(a[1]),
    });
    (depth, albedo)
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GradMode {
    #[default]
    Analytic,
    /// Central differences over every parameter. Slow; for validation.
    FiniteDifference,
}

fn default_saturation() -> f64 {
    0.5
}

/// Where the optimisation starts.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitSpec {
    /// Constant depth (mm) and uniform albedo.
    Constant {
        depth: f64,
        #[serde(default)]
        hue: f64,
        #[serde(default = "default_saturation")]
        saturation: f64,
    },
    /// Depth and albedo read from a bundle directory.
    Bundle { path: PathBuf },
}

impl Default for InitSpec {
    fn default() -> Self {
        InitSpec::Constant {
            depth: 50.0,
            hue: 0.0,
            saturation: default_saturation(),
        }
    }
}

impl InitSpec {
    pub fn build(&self, cam: &CameraModel) -> Result<RecoveryState> {
        match self {
            InitSpec::Constant {
                depth,
                hue,
                saturation,
            } => RecoveryState::constant(
                cam.width,
                cam.height,
                *depth,
                AlbedoHS::new(*hue, *saturation)?,
            ),
            InitSpec::Bundle { path } => {
                let bundle = crate::io::bundle::read_fields(path)?;
                RecoveryState::from_fields(&bundle.depth, &bundle.albedo)
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RecoveryConfig {
    pub steps: usize,
    pub step_size: f64,
    pub weights: LossWeights,
    pub grad_mode: GradMode,
    pub init: InitSpec,
}

impl Default for RecoveryConfig {
    fn default() -> Self {
        RecoveryConfig {
            steps: 20,
            step_size: 1e-2,
            weights: LossWeights::default(),
            grad_mode: GradMode::Analytic,
            init: InitSpec::default(),
        }
    }
}

impl RecoveryConfig {
    pub fn validate(&self) -> Result<()> {
        if self.steps < 1 {
            return Err(Error::domain("recovery needs at least one step"));
        }
        if !(self.step_size > 0.0 && self.step_size.is_finite()) {
            return Err(Error::domain(format!(
                "step size must be positive, got {}",
                self.step_size
            )));
        }
        self.weights.validate()
    }
}

#[derive(Clone, Debug)]
pub struct RecoveryOutput {
    pub depth: ScalarField,
    pub albedo: AlbedoField,
    pub normals: NormalMap,
    pub rendered: ColorImage,
    /// Loss before each update, one entry per step.
    pub history: Vec<LossBreakdown>,
    /// Loss at the returned fields.
    pub final_loss: LossBreakdown,
    pub state: RecoveryState,
}

/// Recovers depth and albedo from a single image, starting from
/// `config.init`.
pub fn recover(
    observed: &ColorImage,
    light: &LightModel,
    cam: &CameraModel,
    config: &RecoveryConfig,
) -> Result<RecoveryOutput> {
    let state = config.init.build(cam)?;
    recover_from(observed, light, cam, config, state)
}

/// Like [`recover`] but starting from an explicit state.
pub fn recover_from(
    observed: &ColorImage,
    light: &LightModel,
    cam: &CameraModel,
    config: &RecoveryConfig,
    mut state: RecoveryState,
) -> Result<RecoveryOutput> {
    config.validate()?;
    let problem = RecoveryProblem::new(observed, light, cam, config.weights)?;
    if state.shape() != cam.shape() {
        return Err(Error::Shape {
            left_name: "initial state",
            left: state.shape(),
            right_name: "camera",
            right: cam.shape(),
        });
    }
    let mut params = state.to_flat();
    let mut adam = Adam::new(params.len(), config.step_size);
    for step in 0..config.steps {
        let (loss, grad) = match config.grad_mode {
            GradMode::Analytic => problem.loss_gradient(&state)?,
            GradMode::FiniteDifference => problem.finite_difference_gradient(&state, 1e-5)?,
        };
        if !loss.total.is_finite() {
            return Err(Error::Divergence { step });
        }
        adam.step(&mut params, &grad.to_flat());
        if params.iter().any(|p| !p.is_finite()) {
            return Err(Error::Divergence { step });
        }
        state.set_flat(&params);
        state.loss_history.push(loss);
        state.step += 1;
        debug_assert_eq!(state.loss_history.len(), state.step);
    }
    let eval = problem.evaluate(&state)?;
    if !eval.loss.total.is_finite() {
        return Err(Error::Divergence {
            step: config.steps,
        });
    }
    let (depth, albedo) = state.decode();
    Ok(RecoveryOutput {
        depth,
        albedo,
        normals: eval.normals,
        rendered: eval.rendered,
        history: state.loss_history.clone(),
        final_loss: eval.loss,
        state,
    })
}
