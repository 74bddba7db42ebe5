//! Helpers shared by the integration tests.

#![allow(dead_code)]

use lumedepth_core::losses::LossWeights;
use lumedepth_core::optim::{RecoveryProblem, RecoveryState};
use lumedepth_core::{AlbedoHS, CameraModel, ColorImage, Grid, LightModel, Vec3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub struct Scene {
    pub cam: CameraModel,
    pub light: LightModel,
    pub observed: ColorImage,
    pub state: RecoveryState,
}

/// Small random scene. Depth is a tilted plane plus small noise, with the
/// tilt large enough that neighbouring depths never tie: the smoothness term
/// has a kink wherever they do, and a finite-difference step must not
/// straddle one. Albedo is random; the observation is random with a few
/// pixels over the specular threshold.
pub fn random_scene(seed: u64, gamma: f64) -> Scene {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let cam = CameraModel::centered(rng.random_range(6.0..10.0), 8, 8).unwrap();
    let light = LightModel {
        position: Vec3::new(rng.random_range(-1.5..1.5), rng.random_range(-1.5..1.5), 0.0),
        axis: Vec3::new(rng.random_range(-0.1..0.1), rng.random_range(-0.1..0.1), 1.0).normalize(),
        mu: rng.random_range(0.0..3.0),
        sigma0: 1.0,
        gain: 120.0,
        gamma,
    };
    let mut slope = || rng.random_range(0.2..0.4) * if rng.random_bool(0.5) { 1.0 } else { -1.0 };
    let (a, b) = (slope(), slope());
    let depth = Grid::from_fn(8, 8, |u, v| {
        18.0 + a * u as f64 + b * v as f64 + rng.random_range(-0.04..0.04)
    });
    let albedo = Grid::from_fn(8, 8, |_, _| {
        AlbedoHS::new(rng.random_range(0.0..1.0), rng.random_range(0.1..0.9)).unwrap()
    });
    let observed = Grid::from_fn(8, 8, |_, _| {
        if rng.random_bool(0.15) {
            Vec3::new(0.99, rng.random_range(0.5..1.0), rng.random_range(0.5..1.0))
        } else {
            Vec3::new(
                rng.random_range(0.0..0.9),
                rng.random_range(0.0..0.9),
                rng.random_range(0.0..0.9),
            )
        }
    });
    Scene {
        cam,
        light,
        observed,
        state: RecoveryState::from_fields(&depth, &albedo).unwrap(),
    }
}

/// Worst relative error over `coords` random flat coordinates.
pub fn worst_relative_error(scene: &Scene, weights: LossWeights, coords: usize, seed: u64) -> f64 {
    let problem = RecoveryProblem::new(&scene.observed, &scene.light, &scene.cam, weights).unwrap();
    let (_, grad) = problem.loss_gradient(&scene.state).unwrap();
    let analytic = grad.to_flat();
    let base = {
        let mut flat = Vec::new();
        flat.extend(scene.state.log_depth.iter().copied());
        flat.extend(scene.state.albedo_logits.iter().map(|a| a[0]));
        flat.extend(scene.state.albedo_logits.iter().map(|a| a[1]));
        flat
    };
    let mut probe = scene.state.clone();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = 0.0f64;
    for _ in 0..coords {
        let k = rng.random_range(0..analytic.len());
        let fd = problem.partial_derivative(&mut probe, &base, k, 1e-5).unwrap();
        let a = analytic[k];
        let denom = a.abs().max(fd.abs());
        let rel = if denom == 0.0 { 0.0 } else { (a - fd).abs() / denom };
        worst = worst.max(rel);
    }
    worst
}
