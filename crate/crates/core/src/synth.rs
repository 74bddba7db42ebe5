//! Ray-cast scenes with exact ground truth.
//!
//! Every pixel ray is intersected analytically with a plane, a sphere or a
//! tube (a polyline of cylinder segments closed by a disc at its far end).
//! Depth and normals come from the intersection; the image is produced by
//! [`render_image`] from those same fields, so a bundle is always a fixed
//! point of the library renderer. Surfaces are Lambertian.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::field::{AlbedoField, ColorImage, Grid, NormalMap, ScalarField};
use crate::geometry::{CameraModel, RayField};
use crate::io::bundle::{Bundle, BundleManifest};
use crate::photometry::{render_image, AlbedoHS, LightModel};
use crate::Vec3;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum SceneGeometry {
    Plane { point: Vec3, normal: Vec3 },
    Sphere { center: Vec3, radius: f64 },
    /// Cylinder segments along `axis`, closed by a disc at the last vertex.
    Tube { axis: Vec<Vec3>, radius: f64 },
}

fn default_wobble() -> f64 {
    2.0
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum AlbedoTexture {
    Constant {
        h: f64,
        s: f64,
    },
    /// Two-tone vessel pattern: wavy stripes of `vessel` albedo over `base`.
    /// `frequency` is in stripes per millimetre of surface and `width` is
    /// the fraction of each period covered by a vessel.
    Stripes {
        base: AlbedoHS,
        vessel: AlbedoHS,
        frequency: f64,
        width: f64,
        #[serde(default = "default_wobble")]
        wobble: f64,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SceneSpec {
    pub geometry: SceneGeometry,
    pub albedo: AlbedoTexture,
    pub camera: CameraModel,
    pub light: LightModel,
    #[serde(default)]
    pub seed: u64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct GroundTruthBundle {
    pub image: ColorImage,
    pub depth: ScalarField,
    pub normals: NormalMap,
    pub albedo: AlbedoField,
}

impl GroundTruthBundle {
    /// Packs the ground truth into a bundle ready for writing.
    pub fn to_bundle(&self, spec: &SceneSpec) -> Bundle {
        let mut manifest = BundleManifest::new(spec.camera, spec.light);
        manifest.seed = Some(spec.seed);
        manifest.spec_hash = Some(spec.hash());
        Bundle {
            manifest,
            image: self.image.clone(),
            depth: self.depth.clone(),
            normals: self.normals.clone(),
            albedo: self.albedo.clone(),
        }
    }
}

struct Hit {
    t: f64,
    normal: Vec3,
    /// Surface coordinates in millimetres for texturing.
    uv: (f64, f64),
}

impl SceneSpec {
    /// SHA-256 of the canonical JSON encoding, hex.
    pub fn hash(&self) -> String {
        let json = serde_json::to_vec(self).expect("scene spec serializes");
        Sha256::digest(&json)
            .iter()
            .map(|b| format!("{b:02x}"))
            .collect()
    }

    pub fn validate(&self) -> Result<()> {
        self.camera.validate()?;
        self.light.validate()?;
        match &self.geometry {
            SceneGeometry::Plane { normal, .. } => {
                if !(normal.norm() > 0.0) {
                    return Err(Error::domain("plane normal must be non-zero"));
                }
            }
            SceneGeometry::Sphere { radius, .. } => {
                if !(*radius > 0.0) {
                    return Err(Error::domain(format!("sphere radius must be > 0, got {radius}")));
                }
            }
            SceneGeometry::Tube { axis, radius } => {
                if !(*radius > 0.0) {
                    return Err(Error::domain(format!("tube radius must be > 0, got {radius}")));
                }
                if axis.len() < 2 {
                    return Err(Error::domain("tube axis needs at least two points"));
                }
                if axis.windows(2).any(|w| (w[1] - w[0]).norm() == 0.0) {
                    return Err(Error::domain("tube axis has a zero-length segment"));
                }
            }
        }
        match &self.albedo {
            AlbedoTexture::Constant { h, s } => {
                AlbedoHS::new(*h, *s)?;
            }
            AlbedoTexture::Stripes {
                base,
                vessel,
                frequency,
                width,
                ..
            } => {
                base.validate()?;
                vessel.validate()?;
                if !(*frequency > 0.0) || !(0.0..=1.0).contains(width) {
                    return Err(Error::domain(
                        "stripes need frequency > 0 and width in [0, 1]",
                    ));
                }
            }
        }
        Ok(())
    }

    fn intersect(&self, ray: &Vec3) -> Option<Hit> {
        match &self.geometry {
            SceneGeometry::Plane { point, normal } => intersect_plane(ray, point, &normal.normalize()),
            SceneGeometry::Sphere { center, radius } => intersect_sphere(ray, center, *radius),
            SceneGeometry::Tube { axis, radius } => intersect_tube(ray, axis, *radius),
        }
    }

    fn texture(&self, uv: (f64, f64), phase: f64) -> AlbedoHS {
        match &self.albedo {
            AlbedoTexture::Constant { h, s } => AlbedoHS { h: *h, s: *s },
            AlbedoTexture::Stripes {
                base,
                vessel,
                frequency,
                width,
                wobble,
            } => {
                let (a, b) = uv;
                let coord = a + wobble * (b * 0.15 + phase).sin();
                if (coord * frequency).rem_euclid(1.0) < *width {
                    *vessel
                } else {
                    *base
                }
            }
        }
    }
}

/// Any unit vector perpendicular to `n`.
fn perpendicular(n: &Vec3) -> Vec3 {
    let helper = if n.x.abs() < 0.9 {
        Vec3::new(1.0, 0.0, 0.0)
    } else {
        Vec3::new(0.0, 1.0, 0.0)
    };
    n.cross(&helper).normalize()
}

fn intersect_plane(ray: &Vec3, point: &Vec3, normal: &Vec3) -> Option<Hit> {
    let denom = ray.dot(normal);
    if denom == 0.0 {
        return None;
    }
    let t = point.dot(normal) / denom;
    if !(t > 0.0) {
        return None;
    }
    let p = ray * t;
    let e1 = perpendicular(normal);
    let e2 = normal.cross(&e1);
    let rel = p - point;
    Some(Hit {
        t,
        normal: *normal,
        uv: (rel.dot(&e1), rel.dot(&e2)),
    })
}

fn intersect_sphere(ray: &Vec3, center: &Vec3, radius: f64) -> Option<Hit> {
    // |t r - c|^2 = R^2 with |r| = 1.
    let b = ray.dot(center);
    let disc = b * b - (center.norm_squared() - radius * radius);
    if disc < 0.0 {
        return None;
    }
    let sq = disc.sqrt();
    let t = [b - sq, b + sq].into_iter().find(|&t| t > 0.0)?;
    let p = ray * t;
    let normal = (p - center) / radius;
    let lat = normal.y.clamp(-1.0, 1.0).asin();
    let lon = normal.x.atan2(-normal.z);
    Some(Hit {
        t,
        normal,
        uv: (lat * radius, lon * radius),
    })
}

fn intersect_tube(ray: &Vec3, axis: &[Vec3], radius: f64) -> Option<Hit> {
    let mut best: Option<Hit> = None;
    let mut keep = |hit: Hit| {
        if best.as_ref().is_none_or(|b| hit.t < b.t) {
            best = Some(hit);
        }
    };
    let mut travelled = 0.0;
    for seg in axis.windows(2) {
        let (start, end) = (seg[0], seg[1]);
        let len = (end - start).norm();
        let dir = (end - start) / len;
        let e1 = perpendicular(&dir);
        let e2 = dir.cross(&e1);
        let w = -start;
        let r_perp = ray - dir * ray.dot(&dir);
        let w_perp = w - dir * w.dot(&dir);
        let a = r_perp.norm_squared();
        if a > 0.0 {
            let b = 2.0 * w_perp.dot(&r_perp);
            let c = w_perp.norm_squared() - radius * radius;
            let disc = b * b - 4.0 * a * c;
            if disc >= 0.0 {
                let sq = disc.sqrt();
                let roots = [(-b - sq) / (2.0 * a), (-b + sq) / (2.0 * a)];
                if let Some((t, s)) = roots
                    .into_iter()
                    .filter(|&t| t > 0.0)
                    .map(|t| (t, (ray * t - start).dot(&dir)))
                    .find(|&(_, s)| (0.0..=len).contains(&s))
                {
                    let radial = ray * t - (start + dir * s);
                    let angle = radial.dot(&e2).atan2(radial.dot(&e1));
                    keep(Hit {
                        t,
                        normal: radial / radius,
                        uv: (travelled + s, angle * radius),
                    });
                }
            }
        }
        travelled += len;
    }
    // Closing disc at the far end.
    let n = axis.len();
    let end = axis[n - 1];
    let dir = (end - axis[n - 2]).normalize();
    let denom = ray.dot(&dir);
    if denom > 0.0 {
        let t = end.dot(&dir) / denom;
        let rel = ray * t - end;
        let rho = rel.norm();
        if t > 0.0 && rho <= radius {
            let e1 = perpendicular(&dir);
            let e2 = dir.cross(&e1);
            keep(Hit {
                t,
                normal: dir,
                uv: (travelled + radius - rho, rel.dot(&e2).atan2(rel.dot(&e1)) * radius),
            });
        }
    }
    best
}

/// Casts every pixel ray into the scene and renders the ground-truth image.
pub fn cast(spec: &SceneSpec) -> Result<GroundTruthBundle> {
    spec.validate()?;
    let rays = RayField::build(&spec.camera)?;
    let (w, h) = rays.shape();
    let phase = ChaCha8Rng::seed_from_u64(spec.seed).random_range(0.0..std::f64::consts::TAU);
    let hits: Vec<Option<(f64, Vec3, AlbedoHS)>> = rays
        .grid()
        .as_slice()
        .par_iter()
        .map(|ray| {
            spec.intersect(ray).map(|hit| {
                let normal = if hit.normal.dot(ray) > 0.0 {
                    -hit.normal
                } else {
                    hit.normal
                };
                (hit.t, normal, spec.texture(hit.uv, phase))
            })
        })
        .collect();
    if let Some(i) = hits.iter().position(Option::is_none) {
        return Err(Error::Coverage { u: i % w, v: i / w });
    }
    let hits: Vec<_> = hits.into_iter().map(Option::unwrap).collect();
    let depth = Grid::from_vec(w, h, hits.iter().map(|h| h.0).collect())?;
    let normals = Grid::from_vec(w, h, hits.iter().map(|h| h.1).collect())?;
    let albedo = Grid::from_vec(w, h, hits.iter().map(|h| h.2).collect())?;
    let image = render_image(&spec.light, &rays, &depth, &albedo, &normals)?;
    Ok(GroundTruthBundle {
        image,
        depth,
        normals,
        albedo,
    })
}

/// Multiplies depth by `1 + amplitude * B`, where `B` is seeded uniform
/// noise blurred with a Gaussian of `smoothness` pixels, made mean-zero and
/// scaled so that `max |B| = 1`.
pub fn perturb_depth(
    depth: &ScalarField,
    amplitude: f64,
    smoothness: f64,
    seed: u64,
) -> Result<ScalarField> {
    if !(0.0..1.0).contains(&amplitude) {
        return Err(Error::domain(format!(
            "perturbation amplitude must lie in [0, 1), got {amplitude}"
        )));
    }
    if !(smoothness >= 0.0) {
        return Err(Error::domain("smoothness must be non-negative"));
    }
    if amplitude == 0.0 {
        return Ok(depth.clone());
    }
    let (w, h) = depth.shape();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise: Vec<f64> = (0..w * h).map(|_| rng.random_range(-1.0..1.0)).collect();
    let mut field = Grid::from_vec(w, h, noise)?;
    if smoothness > 0.0 {
        field = gaussian_blur(&field, smoothness);
    }
    let mean = field.iter().sum::<f64>() / field.len() as f64;
    let centered = field.map(|x| x - mean);
    let peak = centered.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    let scale = if peak > 0.0 { 1.0 / peak } else { 0.0 };
    Grid::from_vec(
        w,
        h,
        depth
            .iter()
            .zip(centered.iter())
            .map(|(d, b)| d * (1.0 + amplitude * b * scale))
            .collect(),
    )
}

/// Separable Gaussian blur with clamp-to-edge borders.
fn gaussian_blur(field: &ScalarField, sigma: f64) -> ScalarField {
    let radius = (3.0 * sigma).ceil() as isize;
    let kernel: Vec<f64> = (-radius..=radius)
        .map(|k| (-(k * k) as f64 / (2.0 * sigma * sigma)).exp())
        .collect();
    let norm: f64 = kernel.iter().sum();
    let (w, h) = field.shape();
    let pass = |src: &ScalarField, horizontal: bool| {
        Grid::from_fn(w, h, |u, v| {
            let mut acc = 0.0;
            for (j, k) in (-radius..=radius).enumerate() {
                let (su, sv) = if horizontal {
                    ((u as isize + k).clamp(0, w as isize - 1) as usize, v)
                } else {
                    (u, (v as isize + k).clamp(0, h as isize - 1) as usize)
                };
                acc += kernel[j] * src[(su, sv)];
            }
            acc / norm
        })
    };
    pass(&pass(field, true), false)
}

/// Scenes used by tests, examples and the command line.
pub mod presets {
    use super::*;

    /// A frontal plane `distance` mm away, white, co-located linear light.
    pub fn frontal_plane(size: usize, focal: f64, distance: f64) -> SceneSpec {
        SceneSpec {
            geometry: SceneGeometry::Plane {
                point: Vec3::new(0.0, 0.0, distance),
                normal: Vec3::new(0.0, 0.0, -1.0),
            },
            albedo: AlbedoTexture::Constant { h: 0.0, s: 0.0 },
            camera: CameraModel::centered(focal, size, size).expect("valid camera"),
            light: LightModel::colocated(),
            seed: 0,
        }
    }

    /// A sphere of radius 1 centred 3 mm in front of the camera.
    pub fn sphere(size: usize, focal: f64) -> SceneSpec {
        SceneSpec {
            geometry: SceneGeometry::Sphere {
                center: Vec3::new(0.0, 0.0, 3.0),
                radius: 1.0,
            },
            albedo: AlbedoTexture::Constant { h: 0.0, s: 0.0 },
            camera: CameraModel::centered(focal, size, size).expect("valid camera"),
            light: LightModel::colocated(),
            seed: 0,
        }
    }

    /// Straight closed tube of radius 20 mm and length `length` mm whose
    /// axis is the optical axis, lit by a spotlight 1 mm off the camera
    /// centre with spread 2 and linear response.
    pub fn straight_tube(size: usize, focal: f64, length: f64, gain: f64) -> SceneSpec {
        SceneSpec {
            geometry: SceneGeometry::Tube {
                axis: vec![Vec3::new(0.0, 0.0, -10.0), Vec3::new(0.0, 0.0, length)],
                radius: 20.0,
            },
            albedo: AlbedoTexture::Stripes {
                base: AlbedoHS { h: 0.02, s: 0.45 },
                vessel: AlbedoHS { h: 0.97, s: 0.75 },
                frequency: 0.08,
                width: 0.2,
                wobble: default_wobble(),
            },
            camera: CameraModel::centered(focal, size, size).expect("valid camera"),
            light: LightModel {
                position: Vec3::new(1.0, 0.0, 0.0),
                axis: Vec3::new(0.0, 0.0, 1.0),
                mu: 2.0,
                sigma0: 1.0,
                gain,
                gamma: 1.0,
            },
            seed: 7,
        }
    }
}
