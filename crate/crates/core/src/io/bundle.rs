//! A bundle is a directory holding one scene's image and per-pixel fields:
//!
//! ```text
//! image.ppm    8-bit colour image
//! depth.pfm    ray distance in mm (Pf)
//! normals.pfm  unit normals in the camera frame (PF)
//! albedo.pfm   hue, saturation, value=1 (PF)
//! meta.json    BundleManifest
//! ```

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{pfm, ppm, read_json, write_json};
use crate::error::{Error, Result};
use crate::field::{AlbedoField, ColorImage, NormalMap, ScalarField};
use crate::geometry::CameraModel;
use crate::optim::wrap_hue;
use crate::photometry::{AlbedoHS, LightModel};
use crate::Vec3;

pub const MANIFEST: &str = "meta.json";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BundleManifest {
    pub image: String,
    pub depth: String,
    pub normals: String,
    pub albedo: String,
    pub camera: CameraModel,
    pub light: LightModel,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub spec_hash: Option<String>,
}

impl BundleManifest {
    pub fn new(camera: CameraModel, light: LightModel) -> Self {
        BundleManifest {
            image: "image.ppm".into(),
            depth: "depth.pfm".into(),
            normals: "normals.pfm".into(),
            albedo: "albedo.pfm".into(),
            camera,
            light,
            seed: None,
            spec_hash: None,
        }
    }
}

#[derive(Clone, Debug)]
pub struct Bundle {
    pub manifest: BundleManifest,
    pub image: ColorImage,
    pub depth: ScalarField,
    pub normals: NormalMap,
    pub albedo: AlbedoField,
}

pub fn write_bundle(dir: impl AsRef<Path>, bundle: &Bundle) -> Result<()> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let m = &bundle.manifest;
    ppm::write_ppm(dir.join(&m.image), &bundle.image)?;
    pfm::write_scalar(dir.join(&m.depth), &bundle.depth)?;
    pfm::write_vectors(dir.join(&m.normals), &bundle.normals)?;
    pfm::write_vectors(
        dir.join(&m.albedo),
        &bundle.albedo.map(|a| Vec3::new(a.h, a.s, 1.0)),
    )?;
    write_json(dir.join(MANIFEST), m)
}

/// Reads every file of a bundle and checks that the shapes agree.
pub fn read_bundle(dir: impl AsRef<Path>) -> Result<Bundle> {
    let dir = dir.as_ref();
    let manifest: BundleManifest = read_json(dir.join(MANIFEST))?;
    manifest.camera.validate()?;
    manifest.light.validate()?;
    let image = ppm::read_ppm(dir.join(&manifest.image))?;
    let fields = read_fields_with(dir, &manifest)?;
    image.check_same_shape("image", &fields.depth, "depth")?;
    Ok(Bundle {
        image,
        ..fields
    })
}

/// Reads depth, normals and albedo without requiring the image file.
pub fn read_fields(dir: impl AsRef<Path>) -> Result<Bundle> {
    let dir = dir.as_ref();
    let manifest: BundleManifest = read_json(dir.join(MANIFEST))?;
    read_fields_with(dir, &manifest)
}

fn read_fields_with(dir: &Path, manifest: &BundleManifest) -> Result<Bundle> {
    let depth = pfm::read_scalar(dir.join(&manifest.depth))?;
    let normals = pfm::read_vectors(dir.join(&manifest.normals))?;
    let albedo_raw = pfm::read_vectors(dir.join(&manifest.albedo))?;
    depth.check_same_shape("depth", &normals, "normals")?;
    depth.check_same_shape("depth", &albedo_raw, "albedo")?;
    if depth.shape() != manifest.camera.shape() {
        return Err(Error::Shape {
            left_name: "depth",
            left: depth.shape(),
            right_name: "camera",
            right: manifest.camera.shape(),
        });
    }
    let albedo = albedo_raw.map(|c| AlbedoHS {
        h: wrap_hue(c.x),
        s: c.y.clamp(0.0, 1.0),
    });
    Ok(Bundle {
        manifest: manifest.clone(),
        image: ColorImage::filled(depth.width(), depth.height(), Vec3::zeros()),
        depth,
        normals,
        albedo,
    })
}

/// Sub-directories of `dir` that contain a bundle manifest, sorted by name.
pub fn list_bundles(dir: impl AsRef<Path>) -> Result<Vec<PathBuf>> {
    let dir = dir.as_ref();
    let mut found = Vec::new();
    for entry in fs::read_dir(dir).map_err(|e| Error::io(dir, e))? {
        let path = entry.map_err(|e| Error::io(dir, e))?.path();
        if path.join(MANIFEST).is_file() {
            found.push(path);
        }
    }
    found.sort();
    Ok(found)
}
