//! Spotlight illumination and the forward rendering equation.
//!
//! A point light at `position` emits with radial fall-off
//! `R(psi) = exp(-mu * (1 - cos psi))` about `axis`. Irradiance at a surface
//! point decays with the squared distance to the light and with the cosine of
//! the incidence angle. The camera applies a gain and a gamma curve:
//!
//! ```text
//! color = min(1, (sigma0 / |x - x_l|^2 * R(psi) * max(0, cos theta) * albedo * gain)^(1/gamma))
//! ```

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::{AlbedoField, ColorImage, Grid, NormalMap, ScalarField};
use crate::geometry::RayField;
use crate::Vec3;

const DEGENERATE_DISTANCE: f64 = 1e-12;

fn default_axis() -> Vec3 {
    Vec3::new(0.0, 0.0, 1.0)
}

fn one() -> f64 {
    1.0
}

fn default_gamma() -> f64 {
    2.2
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LightModel {
    /// Light position in the camera frame, millimetres.
    pub position: Vec3,
    /// Principal direction of the spotlight.
    #[serde(default = "default_axis")]
    pub axis: Vec3,
    /// Spread factor of the radial fall-off.
    pub mu: f64,
    #[serde(default = "one")]
    pub sigma0: f64,
    #[serde(default = "one")]
    pub gain: f64,
    #[serde(default = "default_gamma")]
    pub gamma: f64,
}

impl Default for LightModel {
    fn default() -> Self {
        LightModel {
            position: Vec3::zeros(),
            axis: default_axis(),
            mu: 0.0,
            sigma0: 1.0,
            gain: 1.0,
            gamma: default_gamma(),
        }
    }
}

impl LightModel {
    /// Light at the camera centre, pointing along the optical axis, no
    /// fall-off, unit radiance and gain, linear response.
    pub fn colocated() -> Self {
        LightModel {
            gamma: 1.0,
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !self.position.iter().all(|c| c.is_finite()) {
            return Err(Error::domain("light position must be finite"));
        }
        if !((self.axis.norm() - 1.0).abs() <= 1e-12) {
            return Err(Error::domain(format!(
                "light axis must be a unit vector, |axis| = {}",
                self.axis.norm()
            )));
        }
        if !(self.mu >= 0.0 && self.mu.is_finite()) {
            return Err(Error::domain(format!("spread mu must be >= 0, got {}", self.mu)));
        }
        if !(self.sigma0 > 0.0 && self.sigma0.is_finite()) {
            return Err(Error::domain(format!("sigma0 must be > 0, got {}", self.sigma0)));
        }
        if !(self.gain > 0.0 && self.gain.is_finite()) {
            return Err(Error::domain(format!("gain must be > 0, got {}", self.gain)));
        }
        if !(self.gamma >= 1.0 && self.gamma.is_finite()) {
            return Err(Error::domain(format!("gamma must be >= 1, got {}", self.gamma)));
        }
        Ok(())
    }

    /// `exp(-mu * (1 - cos psi))` for `psi` in `[0, pi]`.
    pub fn radial_attenuation(&self, psi: f64) -> Result<f64> {
        if !(0.0..=std::f64::consts::PI).contains(&psi) {
            return Err(Error::domain(format!(
                "off-axis angle must lie in [0, pi], got {psi}"
            )));
        }
        Ok((-self.mu * (1.0 - psi.cos())).exp())
    }

    /// Angle between the spotlight axis and the direction from the light to `x`.
    pub fn off_axis_angle(&self, x: &Vec3) -> Result<f64> {
        let to_point = self.direction_to(x)?;
        Ok(self.axis.dot(&to_point).clamp(-1.0, 1.0).acos())
    }

    /// Irradiance reaching `x` on a surface with unit normal `n`, before albedo
    /// and gain. Back-facing surfaces receive nothing.
    pub fn irradiance_geometry(&self, x: &Vec3, n: &Vec3) -> Result<f64> {
        if !((n.norm() - 1.0).abs() <= 1e-9) {
            return Err(Error::domain(format!("normal must be unit, |n| = {}", n.norm())));
        }
        self.direction_to(x)?;
        Ok(self.irradiance(x, n).value)
    }

    fn direction_to(&self, x: &Vec3) -> Result<Vec3> {
        let v = x - self.position;
        let dist = v.norm();
        if dist <= DEGENERATE_DISTANCE {
            return Err(Error::Degenerate(format!(
                "surface point {:?} coincides with the light",
                [x.x, x.y, x.z]
            )));
        }
        Ok(v / dist)
    }

    /// Irradiance and its partial derivatives. The caller guarantees
    /// `x != position`.
    pub(crate) fn irradiance(&self, x: &Vec3, n: &Vec3) -> Irradiance {
        let v = x - self.position;
        let dist2 = v.norm_squared();
        let dist = dist2.sqrt();
        let u = v / dist;
        let cos_psi = self.axis.dot(&u).clamp(-1.0, 1.0);
        let falloff = (-self.mu * (1.0 - cos_psi)).exp();
        let cos_theta = -u.dot(n);
        if cos_theta <= 0.0 {
            return Irradiance {
                value: 0.0,
                d_point: Vec3::zeros(),
                d_normal: Vec3::zeros(),
                d_mu: 0.0,
            };
        }
        let base = self.sigma0 / dist2;
        let value = base * falloff * cos_theta;
        let d_cos_psi = (self.axis - u * cos_psi) / dist;
        let d_cos_theta = -(n - u * u.dot(n)) / dist;
        let d_point = u * (-2.0 * value / dist)
            + d_cos_psi * (self.mu * value)
            + d_cos_theta * (base * falloff);
        Irradiance {
            value,
            d_point,
            d_normal: -u * (base * falloff),
            d_mu: -(1.0 - cos_psi) * value,
        }
    }

    /// Camera response applied to a linear radiance value.
    #[inline]
    pub fn response(&self, radiance: f64) -> f64 {
        if radiance <= 0.0 {
            0.0
        } else if self.gamma == 1.0 {
            radiance.min(1.0)
        } else {
            radiance.powf(1.0 / self.gamma).min(1.0)
        }
    }

    /// Derivative of [`LightModel::response`]; zero on both clamped branches.
    #[inline]
    pub(crate) fn response_derivative(&self, radiance: f64) -> f64 {
        if radiance <= 0.0 || radiance >= 1.0 {
            0.0
        } else if self.gamma == 1.0 {
            1.0
        } else {
            radiance.powf(1.0 / self.gamma - 1.0) / self.gamma
        }
    }
}

pub(crate) struct Irradiance {
    pub value: f64,
    /// d value / d surface point; the derivative with respect to the light
    /// position is the negation.
    pub d_point: Vec3,
    pub d_normal: Vec3,
    pub d_mu: f64,
}

/// Surface albedo as hue and saturation; value is fixed at one.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AlbedoHS {
    pub h: f64,
    pub s: f64,
}

impl AlbedoHS {
    pub fn new(h: f64, s: f64) -> Result<Self> {
        let a = AlbedoHS { h, s };
        a.validate()?;
        Ok(a)
    }

    pub const WHITE: AlbedoHS = AlbedoHS { h: 0.0, s: 0.0 };

    pub fn validate(&self) -> Result<()> {
        if !(0.0..1.0).contains(&self.h) {
            return Err(Error::domain(format!("hue must lie in [0, 1), got {}", self.h)));
        }
        if !(0.0..=1.0).contains(&self.s) {
            return Err(Error::domain(format!(
                "saturation must lie in [0, 1], got {}",
                self.s
            )));
        }
        Ok(())
    }

    pub fn to_rgb(&self) -> Vec3 {
        hsv_to_rgb(self)
    }
}

/// Hexcone HSV to RGB with `V = 1`.
pub fn hsv_to_rgb(albedo: &AlbedoHS) -> Vec3 {
    hsv_to_rgb_with_jacobian(albedo.h, albedo.s).0
}

/// RGB together with its derivatives in hue and saturation. Hue is taken
/// modulo one; at sector boundaries the derivative of the sector that
/// starts there is returned.
pub(crate) fn hsv_to_rgb_with_jacobian(h: f64, s: f64) -> (Vec3, Vec3, Vec3) {
    let h6 = h.rem_euclid(1.0) * 6.0;
    let sector = h6.floor();
    let f = h6 - sector;
    let p = 1.0 - s;
    let q = 1.0 - s * f;
    let t = 1.0 - s * (1.0 - f);
    // (value, d/dh, d/ds) for p, q, t and the constant channel.
    let pp = (p, 0.0, -1.0);
    let qq = (q, -6.0 * s, -f);
    let tt = (t, 6.0 * s, -(1.0 - f));
    let one = (1.0, 0.0, 0.0);
    let [r, g, b] = match sector as i64 {
        0 => [one, tt, pp],
        1 => [qq, one, pp],
        2 => [pp, one, tt],
        3 => [pp, qq, one],
        4 => [tt, pp, one],
        _ => [one, pp, qq],
    };
    (
        Vec3::new(r.0, g.0, b.0),
        Vec3::new(r.1, g.1, b.1),
        Vec3::new(r.2, g.2, b.2),
    )
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ShadingSample {
    /// Linear radiance per channel before the camera response.
    pub radiance_rgb: Vec3,
    /// Colour reported by the camera, in `[0, 1]`.
    pub color_rgb: Vec3,
}

/// Shades one pixel at depth `depth` along `ray`.
pub fn render_pixel(
    light: &LightModel,
    ray: &Vec3,
    depth: f64,
    albedo_rgb: &Vec3,
    normal: &Vec3,
) -> Result<ShadingSample> {
    if !(depth > 0.0) {
        return Err(Error::domain(format!("depth must be positive, got {depth}")));
    }
    let x = ray * depth;
    light.direction_to(&x)?;
    Ok(shade(light, &x, albedo_rgb, normal))
}

#[inline]
fn shade(light: &LightModel, x: &Vec3, albedo_rgb: &Vec3, normal: &Vec3) -> ShadingSample {
    let e = light.irradiance(x, normal).value * light.gain;
    let radiance_rgb = albedo_rgb * e;
    ShadingSample {
        radiance_rgb,
        color_rgb: radiance_rgb.map(|c| light.response(c)),
    }
}

/// Renders every pixel independently from depth, albedo and normals.
pub fn render_image(
    light: &LightModel,
    rays: &RayField,
    depth: &ScalarField,
    albedo: &AlbedoField,
    normals: &NormalMap,
) -> Result<ColorImage> {
    rays.grid().check_same_shape("rays", depth, "depth")?;
    depth.check_same_shape("depth", albedo, "albedo")?;
    depth.check_same_shape("depth", normals, "normals")?;
    depth.check_positive("depth")?;
    let (w, h) = depth.shape();
    let data = (0..w * h)
        .into_par_iter()
        .map(|i| {
            let (u, v) = (i % w, i / w);
            let x = rays.get(u, v) * depth.as_slice()[i];
            light.direction_to(&x)?;
            let rgb = hsv_to_rgb(&albedo.as_slice()[i]);
            Ok(shade(light, &x, &rgb, &normals.as_slice()[i]).color_rgb)
        })
        .collect::<Result<Vec<_>>>()?;
    Grid::from_vec(w, h, data)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::CameraModel;
    use proptest::prelude::*;
    use std::f64::consts::PI;

    const Z: Vec3 = Vec3::new(0.0, 0.0, 1.0);
    const TOWARD_CAMERA: Vec3 = Vec3::new(0.0, 0.0, -1.0);

    fn light_with_mu(mu: f64) -> LightModel {
        LightModel {
            mu,
            ..LightModel::colocated()
        }
    }

    #[test]
    fn radial_attenuation_values() {
        assert_eq!(light_with_mu(0.0).radial_attenuation(1.0).unwrap(), 1.0);
        for mu in [0.0, 0.5, 3.0, 40.0] {
            assert_eq!(light_with_mu(mu).radial_attenuation(0.0).unwrap(), 1.0);
        }
        let r = light_with_mu(2.0).radial_attenuation(PI / 3.0).unwrap();
        assert!((r - (-1.0f64).exp()).abs() < 1e-15);
        assert!((r - 0.3678794).abs() < 1e-7);
        assert!(light_with_mu(1.0).radial_attenuation(-0.1).is_err());
        assert!(light_with_mu(1.0).radial_attenuation(3.2).is_err());
    }

    #[test]
    fn off_axis_angles() {
        let light = LightModel::colocated();
        assert_eq!(light.off_axis_angle(&Vec3::new(0.0, 0.0, 5.0)).unwrap(), 0.0);
        let a = light.off_axis_angle(&Vec3::new(5.0, 0.0, 0.0)).unwrap();
        assert!((a - PI / 2.0).abs() < 1e-15);

        let offset = LightModel {
            position: Vec3::new(0.01, 0.0, 0.0),
            ..light
        };
        let a = offset.off_axis_angle(&Vec3::new(1.0, 0.0, 1.0)).unwrap();
        let expected = (1.0 / (0.99f64 * 0.99 + 1.0).sqrt()).acos();
        assert!((a - expected).abs() < 1e-14);

        assert!(matches!(
            light.off_axis_angle(&Vec3::zeros()),
            Err(Error::Degenerate(_))
        ));
    }

    #[test]
    fn irradiance_inverse_square_and_clamp() {
        let light = LightModel::colocated();
        let e1 = light.irradiance_geometry(&Z, &TOWARD_CAMERA).unwrap();
        assert_eq!(e1, 1.0);
        let e2 = light
            .irradiance_geometry(&Vec3::new(0.0, 0.0, 2.0), &TOWARD_CAMERA)
            .unwrap();
        assert_eq!(e2, 0.25);
        assert_eq!(light.irradiance_geometry(&Z, &Z).unwrap(), 0.0);
        assert!(light.irradiance_geometry(&Z, &Vec3::new(0.0, 0.0, -2.0)).is_err());
    }

    #[test]
    fn hsv_primaries() {
        assert_eq!(hsv_to_rgb(&AlbedoHS::new(0.0, 0.0).unwrap()), Vec3::new(1.0, 1.0, 1.0));
        let g = hsv_to_rgb(&AlbedoHS::new(1.0 / 3.0, 1.0).unwrap());
        assert!((g - Vec3::new(0.0, 1.0, 0.0)).norm() < 1e-15);
        let b = hsv_to_rgb(&AlbedoHS::new(2.0 / 3.0, 1.0).unwrap());
        assert!((b - Vec3::new(0.0, 0.0, 1.0)).norm() < 1e-15);
    }

    /// Reference conversion written as the textbook max/min/chroma table.
    fn reference_hsv(h: f64, s: f64) -> [f64; 3] {
        let c = s;
        let hp = h * 6.0;
        let x = c * (1.0 - ((hp % 2.0) - 1.0).abs());
        let (r, g, b) = if hp < 1.0 {
            (c, x, 0.0)
        } else if hp < 2.0 {
            (x, c, 0.0)
        } else if hp < 3.0 {
            (0.0, c, x)
        } else if hp < 4.0 {
            (0.0, x, c)
        } else if hp < 5.0 {
            (x, 0.0, c)
        } else {
            (c, 0.0, x)
        };
        let m = 1.0 - c;
        [r + m, g + m, b + m]
    }

    #[test]
    fn hsv_matches_reference_table() {
        let rgb = hsv_to_rgb(&AlbedoHS::new(0.05, 0.6).unwrap());
        // h=0.05 sits in sector 0: (1, 1 - 0.6*(1-0.3), 0.4)
        assert!((rgb - Vec3::new(1.0, 0.58, 0.4)).norm() < 1e-12);
        for i in 0..60 {
            for j in 0..=10 {
                let (h, s) = (i as f64 / 60.0 + 0.003, j as f64 / 10.0);
                let ours = hsv_to_rgb(&AlbedoHS::new(h, s).unwrap());
                let reference = reference_hsv(h, s);
                for c in 0..3 {
                    assert!((ours[c] - reference[c]).abs() < 1e-12, "h={h} s={s}");
                }
            }
        }
    }

    #[test]
    fn hsv_jacobian_matches_differences() {
        let eps = 1e-6;
        for &(h, s) in &[(0.05, 0.6), (0.21, 0.3), (0.4, 0.9), (0.61, 0.5), (0.77, 0.2), (0.93, 0.7)] {
            let (_, dh, ds) = hsv_to_rgb_with_jacobian(h, s);
            let fd_h = (hsv_to_rgb_with_jacobian(h + eps, s).0 - hsv_to_rgb_with_jacobian(h - eps, s).0)
                / (2.0 * eps);
            let fd_s = (hsv_to_rgb_with_jacobian(h, s + eps).0 - hsv_to_rgb_with_jacobian(h, s - eps).0)
                / (2.0 * eps);
            assert!((dh - fd_h).norm() < 1e-6);
            assert!((ds - fd_s).norm() < 1e-6);
        }
    }

    #[test]
    fn render_pixel_examples() {
        let light = LightModel::colocated();
        let white = Vec3::new(1.0, 1.0, 1.0);
        let s = render_pixel(&light, &Z, 1.0, &white, &TOWARD_CAMERA).unwrap();
        assert_eq!(s.color_rgb, white);
        let s = render_pixel(&light, &Z, 2.0, &white, &TOWARD_CAMERA).unwrap();
        assert_eq!(s.color_rgb, Vec3::new(0.25, 0.25, 0.25));

        let gamma = LightModel {
            gamma: 2.2,
            ..light
        };
        let s = render_pixel(&gamma, &Z, 2.0, &white, &TOWARD_CAMERA).unwrap();
        let expected = 0.25f64.powf(1.0 / 2.2);
        assert!((s.color_rgb.x - expected).abs() < 1e-15);
        assert!((expected - 0.5325).abs() < 1e-4);
        assert!(render_pixel(&light, &Z, 0.0, &white, &TOWARD_CAMERA).is_err());
    }

    #[test]
    fn irradiance_gradient_matches_differences() {
        let light = LightModel {
            position: Vec3::new(1.2, -0.4, 0.3),
            axis: Vec3::new(0.1, 0.05, 1.0).normalize(),
            mu: 1.7,
            ..LightModel::colocated()
        };
        let x = Vec3::new(3.0, 2.0, 20.0);
        let n = Vec3::new(-0.2, -0.3, -1.0).normalize();
        let g = light.irradiance(&x, &n);
        let eps = 1e-6;
        for k in 0..3 {
            let mut dx = Vec3::zeros();
            dx[k] = eps;
            let fd = (light.irradiance(&(x + dx), &n).value - light.irradiance(&(x - dx), &n).value)
                / (2.0 * eps);
            assert!((fd - g.d_point[k]).abs() <= 1e-6 * g.d_point.norm());
            let fdn = (light.irradiance(&x, &(n + dx)).value - light.irradiance(&x, &(n - dx)).value)
                / (2.0 * eps);
            assert!((fdn - g.d_normal[k]).abs() <= 1e-6 * g.d_normal.norm());
        }
        let up = LightModel { mu: light.mu + eps, ..light };
        let down = LightModel { mu: light.mu - eps, ..light };
        let fd = (up.irradiance(&x, &n).value - down.irradiance(&x, &n).value) / (2.0 * eps);
        assert!((fd - g.d_mu).abs() <= 1e-6 * g.d_mu.abs());
    }

    #[test]
    fn frontal_plane_render_is_radially_symmetric() {
        let cam = CameraModel::centered(10.0, 21, 21).unwrap();
        let rays = RayField::build(&cam).unwrap();
        let depth = rays.grid().map(|r| 5.0 / r.z);
        let albedo = Grid::filled(21, 21, AlbedoHS::WHITE);
        let normals = Grid::filled(21, 21, TOWARD_CAMERA);
        let img = render_image(&LightModel::colocated(), &rays, &depth, &albedo, &normals).unwrap();
        for v in 0..21 {
            for u in 0..21 {
                let c = img[(u, v)];
                assert!(c.iter().all(|x| (0.0..=1.0).contains(x)));
                // Mirror and transpose symmetry about the principal point.
                let mirrored = img[(20 - u, v)];
                let transposed = img[(v, u)];
                assert!((c - mirrored).norm() < 1e-15);
                assert!((c - transposed).norm() < 1e-15);
            }
        }
    }

    #[test]
    fn render_image_rejects_mismatched_shapes() {
        let cam = CameraModel::centered(10.0, 5, 4).unwrap();
        let rays = RayField::build(&cam).unwrap();
        let depth = Grid::filled(5, 4, 1.0);
        let albedo = Grid::filled(4, 4, AlbedoHS::WHITE);
        let normals = Grid::filled(5, 4, TOWARD_CAMERA);
        let err = render_image(&LightModel::colocated(), &rays, &depth, &albedo, &normals).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("5x4") && msg.contains("4x4"), "{msg}");
    }

    #[test]
    fn render_image_is_pixelwise_independent() {
        let cam = CameraModel::centered(8.0, 9, 7).unwrap();
        let rays = RayField::build(&cam).unwrap();
        let mut depth = Grid::from_fn(9, 7, |u, v| 10.0 + u as f64 * 0.3 + v as f64 * 0.1);
        let albedo = Grid::filled(9, 7, AlbedoHS::new(0.02, 0.4).unwrap());
        let normals = Grid::filled(9, 7, TOWARD_CAMERA);
        let light = LightModel { mu: 1.0, ..LightModel::colocated() };
        let before = render_image(&light, &rays, &depth, &albedo, &normals).unwrap();
        depth[(4, 3)] *= 1.3;
        let after = render_image(&light, &rays, &depth, &albedo, &normals).unwrap();
        for v in 0..7 {
            for u in 0..9 {
                assert_eq!(before[(u, v)] == after[(u, v)], (u, v) != (4, 3));
            }
        }
    }

    #[test]
    fn light_json_layout() {
        let light = LightModel {
            position: Vec3::new(1.0, 0.0, 0.0),
            mu: 2.0,
            ..Default::default()
        };
        let json = serde_json::to_value(light).unwrap();
        assert_eq!(json["position"], serde_json::json!([1.0, 0.0, 0.0]));
        assert_eq!(json["axis"], serde_json::json!([0.0, 0.0, 1.0]));
        let back: LightModel = serde_json::from_value(json).unwrap();
        assert_eq!(back, light);
    }

    proptest! {
        #[test]
        fn inverse_square_law(d in 0.1f64..500.0, k in 0.05f64..20.0) {
            let light = LightModel::colocated();
            let white = Vec3::new(1.0, 1.0, 1.0);
            let near = render_pixel(&light, &Z, d, &white, &TOWARD_CAMERA).unwrap();
            let far = render_pixel(&light, &Z, k * d, &white, &TOWARD_CAMERA).unwrap();
            let ratio = far.radiance_rgb.x / near.radiance_rgb.x;
            prop_assert!((ratio * k * k - 1.0).abs() < 1e-12);
        }

        #[test]
        fn color_is_monotone(d in 1.0f64..50.0, dd in 0.0f64..10.0, a in 0.0f64..1.0, da in 0.0f64..0.5,
                             gamma in 1.0f64..3.0) {
            let light = LightModel { gamma, mu: 0.5, position: Vec3::new(0.5, 0.0, 0.0), ..LightModel::colocated() };
            let ray = Vec3::new(0.1, -0.2, 1.0).normalize();
            let n = -ray;
            let alb = Vec3::new(a, a, a);
            let base = render_pixel(&light, &ray, d, &alb, &n).unwrap().color_rgb.x;
            let farther = render_pixel(&light, &ray, d + dd, &alb, &n).unwrap().color_rgb.x;
            let brighter = render_pixel(&light, &ray, d, &alb.add_scalar(da).map(|c| c.min(1.0)), &n)
                .unwrap().color_rgb.x;
            prop_assert!(farther <= base);
            prop_assert!(brighter >= base);
        }

        #[test]
        fn unit_gamma_is_clamped_radiance(d in 0.2f64..30.0, a in 0.0f64..1.0) {
            let light = LightModel::colocated();
            let s = render_pixel(&light, &Z, d, &Vec3::new(a, a, a), &TOWARD_CAMERA).unwrap();
            prop_assert_eq!(s.color_rgb.x, s.radiance_rgb.x.min(1.0));
        }

        #[test]
        fn falloff_is_bounded_and_decreasing(mu in 0.01f64..20.0, psi in 0.0f64..3.1, dpsi in 0.001f64..0.04) {
            let light = light_with_mu(mu);
            let r = light.radial_attenuation(psi).unwrap();
            let r2 = light.radial_attenuation(psi + dpsi).unwrap();
            prop_assert!(r > 0.0 && r <= 1.0);
            prop_assert!(r2 < r);
        }
    }
}
