//! Self-supervision losses.
//!
//! All reductions are means rather than sums so the loss weights do not
//! depend on image resolution. Parallel reductions are tiled by image row:
//! each row is summed sequentially and row totals are added in row order.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::{sum_rows, AlbedoField, ColorImage, Grid, NormalMap, ScalarField};
use crate::geometry::RayField;
use crate::normals::normals_six_neighbor;
use crate::photometry::{render_image, LightModel};
use crate::Vec3;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LossWeights {
    pub lambda_s: f64,
    pub lambda_sp: f64,
    /// Specular mask threshold on the brightest colour channel.
    pub th: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        LossWeights {
            lambda_s: 0.1,
            lambda_sp: 1.0,
            th: 0.98,
        }
    }
}

impl LossWeights {
    pub fn validate(&self) -> Result<()> {
        if !(self.lambda_s >= 0.0 && self.lambda_sp >= 0.0) {
            return Err(Error::domain("loss weights must be non-negative"));
        }
        if !(0.0..=1.0).contains(&self.th) {
            return Err(Error::domain(format!(
                "specular threshold must lie in [0, 1], got {}",
                self.th
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub photometric: f64,
    pub smoothness: f64,
    pub specular: f64,
    pub total: f64,
}

impl LossBreakdown {
    pub fn new(photometric: f64, smoothness: f64, specular: f64, weights: &LossWeights) -> Self {
        LossBreakdown {
            photometric,
            smoothness,
            specular,
            total: photometric + weights.lambda_s * smoothness + weights.lambda_sp * specular,
        }
    }
}

/// Mean squared difference over pixels and channels.
pub fn photometric_loss(observed: &ColorImage, rendered: &ColorImage) -> Result<f64> {
    observed.check_same_shape("observed", rendered, "rendered")?;
    let w = observed.width();
    let total = sum_rows(observed.height(), |v| {
        (0..w)
            .map(|u| (observed[(u, v)] - rendered[(u, v)]).norm_squared())
            .sum()
    });
    Ok(total / (3 * observed.len()) as f64)
}

#[inline]
fn edge_weight(a: &Vec3, b: &Vec3) -> f64 {
    let grad = ((a.x - b.x).abs() + (a.y - b.y).abs() + (a.z - b.z).abs()) / 3.0;
    (-grad).exp()
}

/// Edge-aware depth smoothness: forward differences of depth, damped where
/// the image itself has strong gradients. Each direction is averaged over
/// the pixels that have a forward neighbour in that direction.
pub fn smoothness_loss(depth: &ScalarField, image: &ColorImage) -> Result<f64> {
    depth.check_same_shape("depth", image, "image")?;
    depth.check_positive("depth")?;
    Ok(smoothness_value(depth, image))
}

fn smoothness_value(depth: &ScalarField, image: &ColorImage) -> f64 {
    let (w, h) = depth.shape();
    let x_sum = sum_rows(h, |v| {
        (0..w.saturating_sub(1))
            .map(|u| {
                (depth[(u + 1, v)] - depth[(u, v)]).abs() * edge_weight(&image[(u + 1, v)], &image[(u, v)])
            })
            .sum()
    });
    let y_sum = sum_rows(h.saturating_sub(1), |v| {
        (0..w)
            .map(|u| {
                (depth[(u, v + 1)] - depth[(u, v)]).abs() * edge_weight(&image[(u, v + 1)], &image[(u, v)])
            })
            .sum()
    });
    let mean = |sum: f64, count: usize| if count == 0 { 0.0 } else { sum / count as f64 };
    mean(x_sum, w.saturating_sub(1) * h) + mean(y_sum, w * h.saturating_sub(1))
}

/// Gradient of [`smoothness_loss`] with respect to depth.
pub(crate) fn smoothness_gradient(depth: &ScalarField, image: &ColorImage) -> ScalarField {
    let (w, h) = depth.shape();
    let mut grad = Grid::filled(w, h, 0.0);
    if w > 1 {
        let scale = 1.0 / ((w - 1) * h) as f64;
        for v in 0..h {
            for u in 0..w - 1 {
                let diff = depth[(u + 1, v)] - depth[(u, v)];
                let g = diff.signum() * (diff != 0.0) as u8 as f64
                    * edge_weight(&image[(u + 1, v)], &image[(u, v)])
                    * scale;
                grad[(u + 1, v)] += g;
                grad[(u, v)] -= g;
            }
        }
    }
    if h > 1 {
        let scale = 1.0 / (w * (h - 1)) as f64;
        for v in 0..h - 1 {
            for u in 0..w {
                let diff = depth[(u, v + 1)] - depth[(u, v)];
                let g = diff.signum() * (diff != 0.0) as u8 as f64
                    * edge_weight(&image[(u, v + 1)], &image[(u, v)])
                    * scale;
                grad[(u, v + 1)] += g;
                grad[(u, v)] -= g;
            }
        }
    }
    grad
}

/// Mirror reflection of the surface-to-light direction `l` about `n`.
pub fn specular_direction(l: &Vec3, n: &Vec3) -> Result<Vec3> {
    for (name, vec) in [("l", l), ("n", n)] {
        if (vec.norm() - 1.0).abs() > 1e-6 {
            return Err(Error::domain(format!(
                "{name} must be a unit vector, norm is {}",
                vec.norm()
            )));
        }
    }
    Ok(reflect(l, n))
}

#[inline]
fn reflect(l: &Vec3, n: &Vec3) -> Vec3 {
    n * (2.0 * n.dot(l)) - l
}

/// Penalises saturated pixels whose mirror reflection does not point back
/// at the camera. Pixels are masked where the brightest channel of `image`
/// exceeds `th`; the residual is averaged over the mask.
pub fn specular_loss(
    image: &ColorImage,
    depth: &ScalarField,
    normals: &NormalMap,
    rays: &RayField,
    light: &LightModel,
    th: f64,
) -> Result<f64> {
    image.check_same_shape("image", depth, "depth")?;
    image.check_same_shape("image", normals, "normals")?;
    rays.grid().check_same_shape("rays", depth, "depth")?;
    depth.check_positive("depth")?;
    let points = rays.points(depth)?;
    Ok(specular_terms(image, &points, normals, rays, light, th, false).loss)
}

pub(crate) struct SpecularTerms {
    pub loss: f64,
    pub grad_points: Option<Grid<Vec3>>,
    pub grad_normals: Option<Grid<Vec3>>,
}

pub(crate) fn specular_mask(image: &ColorImage, th: f64) -> Vec<usize> {
    image
        .iter()
        .enumerate()
        .filter(|(_, c)| c.max() > th)
        .map(|(i, _)| i)
        .collect()
}

/// Specular loss and, when `with_grad`, its gradients with respect to the
/// surface points and normals.
pub(crate) fn specular_terms(
    image: &ColorImage,
    points: &Grid<Vec3>,
    normals: &NormalMap,
    rays: &RayField,
    light: &LightModel,
    th: f64,
    with_grad: bool,
) -> SpecularTerms {
    let mask = specular_mask(image, th);
    let (w, h) = image.shape();
    let mut grads = with_grad.then(|| {
        (
            Grid::filled(w, h, Vec3::zeros()),
            Grid::filled(w, h, Vec3::zeros()),
        )
    });
    if mask.is_empty() {
        return SpecularTerms {
            loss: 0.0,
            grad_points: grads.as_ref().map(|g| g.0.clone()),
            grad_normals: grads.map(|g| g.1),
        };
    }
    let scale = 1.0 / mask.len() as f64;
    let mut loss = 0.0;
    for &i in &mask {
        let x = points.as_slice()[i];
        let n = normals.as_slice()[i];
        let view = -rays.grid().as_slice()[i];
        let to_light = light.position - x;
        let dist = to_light.norm();
        let l = to_light / dist;
        let s = reflect(&l, &n);
        let residual = s.dot(&view) - 1.0;
        loss += residual * residual;
        if let Some((gp, gn)) = grads.as_mut() {
            let coeff = 2.0 * residual * scale;
            let nl = n.dot(&l);
            let nv = n.dot(&view);
            gn.as_mut_slice()[i] += (l * nv + view * nl) * (2.0 * coeff);
            let gl = (n * (2.0 * nv) - view) * coeff;
            let g_to_light = (gl - l * l.dot(&gl)) / dist;
            gp.as_mut_slice()[i] -= g_to_light;
        }
    }
    SpecularTerms {
        loss: loss * scale,
        grad_points: grads.as_ref().map(|g| g.0.clone()),
        grad_normals: grads.map(|g| g.1),
    }
}

/// Renders the scene implied by `depth` and `albedo` and evaluates every
/// loss term against `observed`.
pub fn total_loss(
    observed: &ColorImage,
    depth: &ScalarField,
    albedo: &AlbedoField,
    light: &LightModel,
    rays: &RayField,
    weights: &LossWeights,
) -> Result<LossBreakdown> {
    weights.validate()?;
    observed.check_same_shape("observed", depth, "depth")?;
    let normals = normals_six_neighbor(depth, rays)?;
    let rendered = render_image(light, rays, depth, albedo, &normals)?;
    let photometric = photometric_loss(observed, &rendered)?;
    let smoothness = smoothness_value(depth, observed);
    let specular = specular_loss(observed, depth, &normals, rays, light, weights.th)?;
    Ok(LossBreakdown::new(photometric, smoothness, specular, weights))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::CameraModel;
    use crate::photometry::AlbedoHS;
    use proptest::prelude::*;

    fn gray(w: usize, h: usize, values: &[f64]) -> ColorImage {
        Grid::from_vec(w, h, values.iter().map(|&g| Vec3::new(g, g, g)).collect()).unwrap()
    }

    #[test]
    fn photometric_examples() {
        let a = gray(2, 2, &[0.1, 0.2, 0.3, 0.4]);
        assert_eq!(photometric_loss(&a, &a).unwrap(), 0.0);
        let zeros = gray(2, 2, &[0.0; 4]);
        let ones = gray(2, 2, &[1.0; 4]);
        assert_eq!(photometric_loss(&zeros, &ones).unwrap(), 1.0);

        let observed = gray(2, 1, &[0.2, 0.2]);
        let rendered = Grid::from_vec(
            2,
            1,
            vec![Vec3::new(0.5, 0.3, 0.5), Vec3::new(0.3, 0.5, 0.3)],
        )
        .unwrap();
        // Squares: 0.09 0.01 0.09 | 0.01 0.09 0.01 -> 0.30 / 6
        let expected = (0.09 + 0.01 + 0.09 + 0.01 + 0.09 + 0.01) / 6.0;
        assert!((photometric_loss(&observed, &rendered).unwrap() - expected).abs() < 1e-15);
        assert!(photometric_loss(&observed, &a).is_err());
    }

    #[test]
    fn smoothness_examples() {
        let img = gray(5, 4, &[0.3; 20]);
        let flat = Grid::filled(5, 4, 12.0);
        assert_eq!(smoothness_loss(&flat, &img).unwrap(), 0.0);

        let slope = 0.7;
        let ramp = Grid::from_fn(5, 4, |u, _| 10.0 + slope * u as f64);
        let plain = smoothness_loss(&ramp, &img).unwrap();
        assert!((plain - slope).abs() < 1e-14);

        let striped = Grid::from_fn(5, 4, |u, _| {
            let g = if u % 2 == 0 { 0.0 } else { 1.0 };
            Vec3::new(g, g, g)
        });
        assert!(smoothness_loss(&ramp, &striped).unwrap() < plain);
    }

    #[test]
    fn smoothness_gradient_matches_differences() {
        let depth = Grid::from_fn(5, 4, |u, v| 10.0 + (u as f64 * 1.7).sin() + 0.3 * v as f64 * v as f64);
        let img = Grid::from_fn(5, 4, |u, v| Vec3::new(0.1 * u as f64, 0.05 * v as f64, 0.3));
        let grad = smoothness_gradient(&depth, &img);
        let eps = 1e-6;
        for v in 0..4 {
            for u in 0..5 {
                let mut p = depth.clone();
                p[(u, v)] += eps;
                let mut m = depth.clone();
                m[(u, v)] -= eps;
                let fd = (smoothness_value(&p, &img) - smoothness_value(&m, &img)) / (2.0 * eps);
                assert!((fd - grad[(u, v)]).abs() < 1e-8);
            }
        }
    }

    #[test]
    fn specular_direction_examples() {
        let n = Vec3::new(0.0, 0.0, -1.0);
        assert_eq!(specular_direction(&n, &n).unwrap(), n);
        let l = Vec3::new(1.0, 0.0, 0.0);
        assert_eq!(specular_direction(&l, &n).unwrap(), -l);
        let ray = Vec3::new(0.0, 0.0, 1.0);
        let s = specular_direction(&n, &n).unwrap();
        assert_eq!(s.dot(&-ray), 1.0);
        assert!(specular_direction(&(l * 2.0), &n).is_err());
    }

    fn single_pixel_specular(normal: Vec3, brightness: f64) -> f64 {
        let cam = CameraModel::centered(10.0, 3, 3).unwrap();
        let rays = RayField::build(&cam).unwrap();
        let depth = rays.grid().map(|r| 5.0 / r.z);
        let image = Grid::from_fn(3, 3, |u, v| {
            let g = if (u, v) == (1, 1) { brightness } else { 0.5 };
            Vec3::new(g, g, g)
        });
        let normals = Grid::filled(3, 3, normal);
        specular_loss(&image, &depth, &normals, &rays, &LightModel::colocated(), 0.98).unwrap()
    }

    #[test]
    fn specular_examples() {
        let frontal = Vec3::new(0.0, 0.0, -1.0);
        assert_eq!(single_pixel_specular(frontal, 0.5), 0.0);
        assert_eq!(single_pixel_specular(frontal, 0.99), 0.0);
        let tilt = 30f64.to_radians();
        let tilted = Vec3::new(tilt.sin(), 0.0, -tilt.cos());
        let loss = single_pixel_specular(tilted, 0.99);
        // Reflection deviates by twice the tilt: (cos 60 - 1)^2.
        assert!((loss - 0.25).abs() < 1e-12, "{loss}");
    }

    #[test]
    fn specular_gradient_matches_differences() {
        let cam = CameraModel::centered(6.0, 4, 4).unwrap();
        let rays = RayField::build(&cam).unwrap();
        let light = LightModel {
            position: Vec3::new(0.8, -0.3, 0.1),
            ..LightModel::colocated()
        };
        let points = Grid::from_fn(4, 4, |u, v| rays.get(u, v) * (8.0 + u as f64 * 0.4 - v as f64 * 0.2));
        let normals = Grid::from_fn(4, 4, |u, v| Vec3::new(0.1 * u as f64, -0.15 * v as f64, -1.0).normalize());
        let image = Grid::from_fn(4, 4, |u, v| {
            let g = if (u + v) % 2 == 0 { 0.99 } else { 0.4 };
            Vec3::new(g, 0.2, 0.2)
        });
        let terms = specular_terms(&image, &points, &normals, &rays, &light, 0.98, true);
        let (gp, gn) = (terms.grad_points.unwrap(), terms.grad_normals.unwrap());
        let eps = 1e-6;
        let eval = |p: &Grid<Vec3>, n: &Grid<Vec3>| specular_terms(&image, p, n, &rays, &light, 0.98, false).loss;
        for v in 0..4 {
            for u in 0..4 {
                for k in 0..3 {
                    let (mut pp, mut pm) = (points.clone(), points.clone());
                    pp[(u, v)][k] += eps;
                    pm[(u, v)][k] -= eps;
                    let fd = (eval(&pp, &normals) - eval(&pm, &normals)) / (2.0 * eps);
                    assert!((fd - gp[(u, v)][k]).abs() < 1e-8);
                    let (mut np, mut nm) = (normals.clone(), normals.clone());
                    np[(u, v)][k] += eps;
                    nm[(u, v)][k] -= eps;
                    let fd = (eval(&points, &np) - eval(&points, &nm)) / (2.0 * eps);
                    assert!((fd - gn[(u, v)][k]).abs() < 1e-8);
                }
            }
        }
    }

    #[test]
    fn total_loss_of_self_render() {
        let cam = CameraModel::centered(8.0, 9, 9).unwrap();
        let rays = RayField::build(&cam).unwrap();
        let depth = Grid::from_fn(9, 9, |u, v| 20.0 + 0.3 * u as f64 + 0.1 * (v * v) as f64);
        let albedo = Grid::filled(9, 9, AlbedoHS::new(0.03, 0.5).unwrap());
        let light = LightModel {
            gain: 200.0,
            mu: 1.0,
            ..LightModel::colocated()
        };
        let normals = normals_six_neighbor(&depth, &rays).unwrap();
        let observed = render_image(&light, &rays, &depth, &albedo, &normals).unwrap();
        let weights = LossWeights {
            lambda_s: 0.3,
            lambda_sp: 1.0,
            th: 0.98,
        };
        let b = total_loss(&observed, &depth, &albedo, &light, &rays, &weights).unwrap();
        assert_eq!(b.photometric, 0.0);
        assert!((b.total - 0.3 * b.smoothness).abs() < 1e-12);

        let unweighted = LossWeights {
            lambda_s: 0.0,
            lambda_sp: 0.0,
            th: 0.98,
        };
        let perturbed = depth.map(|d| d * 1.05);
        let b = total_loss(&observed, &perturbed, &albedo, &light, &rays, &unweighted).unwrap();
        assert_eq!(b.total, b.photometric);
        assert!(b.photometric > 0.0);
    }

    proptest! {
        #[test]
        fn reflection_properties(
            l in proptest::array::uniform3(-1.0f64..1.0),
            n in proptest::array::uniform3(-1.0f64..1.0),
        ) {
            let (l, n) = (Vec3::from(l), Vec3::from(n));
            prop_assume!(l.norm() > 0.1 && n.norm() > 0.1);
            let (l, n) = (l.normalize(), n.normalize());
            let s = specular_direction(&l, &n).unwrap();
            prop_assert!((s.norm() - 1.0).abs() < 1e-12);
            prop_assert!((reflect(&s, &n) - l).norm() < 1e-9);
        }

        #[test]
        fn photometric_is_channel_symmetric(values in proptest::collection::vec(0.0f64..1.0, 6 * 4 * 2)) {
            let a = Grid::from_fn(4, 3, |u, v| {
                let i = (v * 4 + u) * 2;
                Vec3::new(values[i], values[i + 1] * 0.5, values[i] * values[i + 1])
            });
            let b = Grid::from_fn(4, 3, |u, v| {
                let i = 24 + (v * 4 + u) * 2;
                Vec3::new(values[i], values[i + 1], 1.0 - values[i])
            });
            let perm = |img: &ColorImage| img.map(|c| Vec3::new(c.z, c.x, c.y));
            let base = photometric_loss(&a, &b).unwrap();
            prop_assert!(base >= 0.0);
            prop_assert!((base - photometric_loss(&perm(&a), &perm(&b)).unwrap()).abs() < 1e-15);
            prop_assert!(smoothness_loss(&Grid::from_fn(4, 3, |u, v| 1.0 + values[v * 4 + u]), &a).unwrap() >= 0.0);
        }
    }
}
