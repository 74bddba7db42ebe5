//! Analytic gradient of the total loss with respect to the recovery
//! parameters.
//!
//! The forward chain is `log_depth -> depth -> points -> normals -> render`
//! plus `albedo logits -> hsv -> rgb -> render`, followed by the three loss
//! terms. Each pixel's normal depends on its six neighbours, so the depth
//! gradient has a seven-point stencil from the normal path on top of the
//! smoothness coupling. The clamped branches of the camera response and
//! of the incidence cosine contribute zero.

use rayon::prelude::*;

use super::{sigmoid, wrap_hue, RecoveryState};
use crate::error::{Error, Result};
use crate::field::{ColorImage, Grid, NormalMap, ScalarField};
use crate::geometry::{CameraModel, RayField};
use crate::losses::{smoothness_gradient, smoothness_loss, specular_terms, LossBreakdown, LossWeights};
use crate::normals::SixNeighborNormals;
use crate::photometry::{hsv_to_rgb_with_jacobian, LightModel};
use crate::Vec3;

/// Gradient of the total loss, shaped like [`RecoveryState`].
#[derive(Clone, Debug, PartialEq)]
pub struct Gradient {
    pub log_depth: ScalarField,
    pub albedo_logits: Grid<[f64; 2]>,
}

impl Gradient {
    pub fn to_flat(&self) -> Vec<f64> {
        let mut flat = Vec::with_capacity(self.log_depth.len() * 3);
        flat.extend(self.log_depth.iter().copied());
        flat.extend(self.albedo_logits.iter().map(|a| a[0]));
        flat.extend(self.albedo_logits.iter().map(|a| a[1]));
        flat
    }

    pub fn norm(&self) -> f64 {
        self.to_flat().iter().map(|g| g * g).sum::<f64>().sqrt()
    }
}

/// The fixed inputs of one recovery: observed image, light, rays, weights.
pub struct RecoveryProblem<'a> {
    observed: &'a ColorImage,
    light: LightModel,
    rays: RayField,
    weights: LossWeights,
}

pub(crate) struct Evaluation {
    pub loss: LossBreakdown,
    pub normals: NormalMap,
    pub rendered: ColorImage,
}

struct PixelGrad {
    sq_error: f64,
    color: Vec3,
    d_point: Vec3,
    d_normal: Vec3,
    d_raw_h: f64,
    d_raw_s: f64,
}

impl<'a> RecoveryProblem<'a> {
    pub fn new(
        observed: &'a ColorImage,
        light: &LightModel,
        cam: &CameraModel,
        weights: LossWeights,
    ) -> Result<Self> {
        light.validate()?;
        weights.validate()?;
        let rays = RayField::build(cam)?;
        rays.grid().check_same_shape("camera", observed, "observed image")?;
        Ok(RecoveryProblem {
            observed,
            light: *light,
            rays,
            weights,
        })
    }

    pub fn rays(&self) -> &RayField {
        &self.rays
    }

    fn check_state(&self, state: &RecoveryState) -> Result<()> {
        self.observed
            .check_same_shape("observed image", &state.log_depth, "state")?;
        state.check_finite()
    }

    /// Loss breakdown at `state`.
    pub fn loss(&self, state: &RecoveryState) -> Result<LossBreakdown> {
        Ok(self.evaluate(state)?.loss)
    }

    pub(crate) fn evaluate(&self, state: &RecoveryState) -> Result<Evaluation> {
        self.run(state, false).map(|(eval, _)| eval)
    }

    /// Loss breakdown and analytic gradient at `state`.
    pub fn loss_gradient(&self, state: &RecoveryState) -> Result<(LossBreakdown, Gradient)> {
        let (eval, grad) = self.run(state, true)?;
        Ok((eval.loss, grad.expect("gradient requested")))
    }

    fn run(&self, state: &RecoveryState, with_grad: bool) -> Result<(Evaluation, Option<Gradient>)> {
        self.check_state(state)?;
        let (w, h) = state.shape();
        let n = w * h;
        let light = &self.light;
        let depth = state.log_depth.map(|q| q.exp());
        let points = self.rays.points(&depth)?;
        for (i, p) in points.iter().enumerate() {
            if (p - light.position).norm() <= 1e-12 {
                return Err(Error::Degenerate(format!(
                    "surface point at pixel ({}, {}) coincides with the light",
                    i % w,
                    i / w
                )));
            }
        }
        let fans = SixNeighborNormals::compute(&points, &self.rays);
        let color_scale = 2.0 / (3 * n) as f64;

        let pixels: Vec<PixelGrad> = (0..n)
            .into_par_iter()
            .map(|i| {
                let logits = state.albedo_logits.as_slice()[i];
                let s = sigmoid(logits[1]);
                let (rgb, d_rgb_dh, d_rgb_ds) = hsv_to_rgb_with_jacobian(wrap_hue(logits[0]), s);
                let x = points.as_slice()[i];
                let normal = fans.normals.as_slice()[i];
                let irr = light.irradiance(&x, &normal);
                let e = irr.value * light.gain;
                let observed = self.observed.as_slice()[i];
                let mut color = Vec3::zeros();
                let mut sq_error = 0.0;
                let mut d_e = 0.0;
                let mut d_rgb = Vec3::zeros();
                for c in 0..3 {
                    let radiance = rgb[c] * e;
                    color[c] = light.response(radiance);
                    let residual = color[c] - observed[c];
                    sq_error += residual * residual;
                    let d_radiance = color_scale * residual * light.response_derivative(radiance);
                    d_e += d_radiance * rgb[c];
                    d_rgb[c] = d_radiance * e;
                }
                let d_e = d_e * light.gain;
                PixelGrad {
                    sq_error,
                    color,
                    d_point: irr.d_point * d_e,
                    d_normal: irr.d_normal * d_e,
                    d_raw_h: d_rgb.dot(&d_rgb_dh),
                    d_raw_s: d_rgb.dot(&d_rgb_ds) * s * (1.0 - s),
                }
            })
            .collect();

        let photometric = pixels.iter().map(|p| p.sq_error).sum::<f64>() / (3 * n) as f64;
        let smoothness = smoothness_loss(&depth, self.observed)?;
        let need_specular_grad = with_grad && self.weights.lambda_sp > 0.0;
        let specular = specular_terms(
            self.observed,
            &points,
            &fans.normals,
            &self.rays,
            light,
            self.weights.th,
            need_specular_grad,
        );
        let loss = LossBreakdown::new(photometric, smoothness, specular.loss, &self.weights);
        let rendered = Grid::from_vec(w, h, pixels.iter().map(|p| p.color).collect())?;

        let grad = with_grad.then(|| {
            let mut grad_points = Grid::from_vec(w, h, pixels.iter().map(|p| p.d_point).collect())
                .expect("shape");
            let mut grad_normals = Grid::from_vec(w, h, pixels.iter().map(|p| p.d_normal).collect())
                .expect("shape");
            if let (Some(gp), Some(gn)) = (&specular.grad_points, &specular.grad_normals) {
                let lambda = self.weights.lambda_sp;
                for i in 0..n {
                    grad_points.as_mut_slice()[i] += gp.as_slice()[i] * lambda;
                    grad_normals.as_mut_slice()[i] += gn.as_slice()[i] * lambda;
                }
            }
            let from_normals = fans.backward(&points, &grad_normals);
            let smooth_grad = (self.weights.lambda_s > 0.0)
                .then(|| smoothness_gradient(&depth, self.observed));
            let log_depth = Grid::from_fn(w, h, |u, v| {
                let i = v * w + u;
                let ray = self.rays.get(u, v);
                let mut d_depth = (grad_points.as_slice()[i] + from_normals.as_slice()[i]).dot(ray);
                if let Some(sg) = &smooth_grad {
                    d_depth += self.weights.lambda_s * sg.as_slice()[i];
                }
                d_depth * depth.as_slice()[i]
            });
            let albedo_logits = Grid::from_vec(
                w,
                h,
                pixels.iter().map(|p| [p.d_raw_h, p.d_raw_s]).collect(),
            )
            .expect("shape");
            Gradient {
                log_depth,
                albedo_logits,
            }
        });

        Ok((
            Evaluation {
                loss,
                normals: fans.normals,
                rendered,
            },
            grad,
        ))
    }

    /// Central-difference gradient with step `h` in parameter space. Costs
    /// two loss evaluations per parameter.
    pub fn finite_difference_gradient(
        &self,
        state: &RecoveryState,
        h: f64,
    ) -> Result<(LossBreakdown, Gradient)> {
        let loss = self.loss(state)?;
        let base = state.to_flat();
        let mut probe = state.clone();
        let mut flat_grad = Vec::with_capacity(base.len());
        for k in 0..base.len() {
            flat_grad.push(self.partial_derivative(&mut probe, &base, k, h)?);
        }
        let mut shaped = state.clone();
        shaped.set_flat(&flat_grad);
        Ok((
            loss,
            Gradient {
                log_depth: shaped.log_depth,
                albedo_logits: shaped.albedo_logits,
            },
        ))
    }

    /// Central difference of the total loss along flat parameter `k`.
    /// `probe` is scratch space and is restored to `base` on return.
    pub fn partial_derivative(
        &self,
        probe: &mut RecoveryState,
        base: &[f64],
        k: usize,
        h: f64,
    ) -> Result<f64> {
        let mut params = base.to_vec();
        params[k] = base[k] + h;
        probe.set_flat(&params);
        let plus = self.loss(probe)?.total;
        params[k] = base[k] - h;
        probe.set_flat(&params);
        let minus = self.loss(probe)?.total;
        probe.set_flat(base);
        Ok((plus - minus) / (2.0 * h))
    }
}

/// Loss and analytic gradient for one state.
pub fn loss_gradient(
    state: &RecoveryState,
    observed: &ColorImage,
    light: &LightModel,
    cam: &CameraModel,
    weights: LossWeights,
) -> Result<(LossBreakdown, Gradient)> {
    RecoveryProblem::new(observed, light, cam, weights)?.loss_gradient(state)
}
