//! Python bindings. Fields cross the boundary as nested lists indexed
//! `[row][column]`; colours and vectors are 3-element lists and albedo is a
//! `[hue, saturation]` pair.

use lumedepth_core::calib::{calibrate_light, CalibConfig, CalibObservation};
use lumedepth_core::geometry::RayField;
use lumedepth_core::io::bundle;
use lumedepth_core::losses::{total_loss, LossWeights};
use lumedepth_core::metrics;
use lumedepth_core::normals;
use lumedepth_core::optim::{self, RecoveryConfig};
use lumedepth_core::photometry::render_image;
use lumedepth_core::synth::{self, SceneSpec};
use lumedepth_core::{AlbedoField, AlbedoHS, CameraModel, Error, Grid, LightModel, Vec3};
use pyo3::exceptions::{PyOSError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

type Rows<T> = Vec<Vec<T>>;

fn err(e: Error) -> PyErr {
    match e {
        Error::Io { .. } => PyOSError::new_err(e.to_string()),
        _ => PyValueError::new_err(e.to_string()),
    }
}

fn json_err(e: serde_json::Error) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn to_grid<T: Clone, U>(rows: Rows<U>, f: impl Fn(U) -> T) -> PyResult<Grid<T>> {
    let height = rows.len();
    let width = rows.first().map_or(0, Vec::len);
    if width == 0 {
        return Err(PyValueError::new_err("field must be a non-empty list of rows"));
    }
    let mut data = Vec::with_capacity(width * height);
    for (v, row) in rows.into_iter().enumerate() {
        if row.len() != width {
            return Err(PyValueError::new_err(format!(
                "row {v} has {} entries, expected {width}",
                row.len()
            )));
        }
        data.extend(row.into_iter().map(&f));
    }
    Grid::from_vec(width, height, data).map_err(err)
}

fn from_grid<T, U>(grid: &Grid<T>, f: impl Fn(&T) -> U) -> Rows<U> {
    grid.rows().map(|row| row.iter().map(&f).collect()).collect()
}

fn vec3(c: [f64; 3]) -> Vec3 {
    Vec3::new(c[0], c[1], c[2])
}

fn arr3(v: &Vec3) -> [f64; 3] {
    [v.x, v.y, v.z]
}

fn albedo_field(rows: Rows<[f64; 2]>) -> PyResult<AlbedoField> {
    let grid = to_grid(rows, |a| AlbedoHS { h: a[0], s: a[1] })?;
    if let Some(a) = grid.iter().find(|a| a.validate().is_err()) {
        return Err(PyValueError::new_err(format!("invalid albedo {a:?}")));
    }
    Ok(grid)
}

/// Pinhole camera intrinsics.
#[pyclass(name = "Camera", module = "lumedepth", from_py_object)]
#[derive(Clone)]
struct PyCamera {
    inner: CameraModel,
}

#[pymethods]
impl PyCamera {
    #[new]
    fn new(fx: f64, fy: f64, cx: f64, cy: f64, width: usize, height: usize) -> PyResult<Self> {
        Ok(Self { inner: CameraModel::new(fx, fy, cx, cy, width, height).map_err(err)? })
    }

    /// Square-pixel camera with the principal point at the image centre.
    #[staticmethod]
    fn centered(focal: f64, width: usize, height: usize) -> PyResult<Self> {
        Ok(Self { inner: CameraModel::centered(focal, width, height).map_err(err)? })
    }

    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        let inner: CameraModel = serde_json::from_str(text).map_err(json_err)?;
        inner.validate().map_err(err)?;
        Ok(Self { inner })
    }

    fn to_json(&self) -> String {
        serde_json::to_string(&self.inner).expect("camera serializes")
    }

    #[getter]
    fn width(&self) -> usize {
        self.inner.width
    }

    #[getter]
    fn height(&self) -> usize {
        self.inner.height
    }

    /// Unit ray through pixel (u, v).
    fn inverse_project(&self, u: f64, v: f64) -> PyResult<[f64; 3]> {
        Ok(arr3(&self.inner.inverse_project(u, v).map_err(err)?))
    }

    fn project(&self, point: [f64; 3]) -> (f64, f64) {
        self.inner.project(&vec3(point))
    }

    /// Every pixel's unit ray.
    fn rays(&self) -> PyResult<Rows<[f64; 3]>> {
        let rays = RayField::build(&self.inner).map_err(err)?;
        Ok(from_grid(rays.grid(), arr3))
    }

    fn __repr__(&self) -> String {
        let c = &self.inner;
        format!(
            "Camera(fx={}, fy={}, cx={}, cy={}, width={}, height={})",
            c.fx, c.fy, c.cx, c.cy, c.width, c.height
        )
    }
}

/// Spotlight and camera response.
#[pyclass(name = "Light", module = "lumedepth", from_py_object)]
#[derive(Clone)]
struct PyLight {
    inner: LightModel,
}

#[pymethods]
impl PyLight {
    #[new]
    #[pyo3(signature = (position=[0.0, 0.0, 0.0], axis=[0.0, 0.0, 1.0], mu=0.0, sigma0=1.0, gain=1.0, gamma=2.2))]
    fn new(position: [f64; 3], axis: [f64; 3], mu: f64, sigma0: f64, gain: f64, gamma: f64) -> PyResult<Self> {
        let inner = LightModel { position: vec3(position), axis: vec3(axis), mu, sigma0, gain, gamma };
        inner.validate().map_err(err)?;
        Ok(Self { inner })
    }

    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        let inner: LightModel = serde_json::from_str(text).map_err(json_err)?;
        inner.validate().map_err(err)?;
        Ok(Self { inner })
    }

    fn to_json(&self) -> String {
        serde_json::to_string(&self.inner).expect("light serializes")
    }

    #[getter]
    fn position(&self) -> [f64; 3] {
        arr3(&self.inner.position)
    }

    #[getter]
    fn mu(&self) -> f64 {
        self.inner.mu
    }

    #[getter]
    fn gain(&self) -> f64 {
        self.inner.gain
    }

    #[getter]
    fn gamma(&self) -> f64 {
        self.inner.gamma
    }

    /// Camera response applied to a linear radiance value.
    fn response(&self, radiance: f64) -> f64 {
        self.inner.response(radiance)
    }

    fn __repr__(&self) -> String {
        let l = &self.inner;
        format!(
            "Light(position={:?}, axis={:?}, mu={}, sigma0={}, gain={}, gamma={})",
            arr3(&l.position),
            arr3(&l.axis),
            l.mu,
            l.sigma0,
            l.gain,
            l.gamma
        )
    }
}

/// Image, depth, normals and albedo as a dict of nested lists.
fn fields_dict<'py>(
    py: Python<'py>,
    image: &Grid<Vec3>,
    depth: &Grid<f64>,
    normals: &Grid<Vec3>,
    albedo: &AlbedoField,
) -> PyResult<Bound<'py, PyDict>> {
    let d = PyDict::new(py);
    d.set_item("image", from_grid(image, arr3))?;
    d.set_item("depth", from_grid(depth, |&x| x))?;
    d.set_item("normals", from_grid(normals, arr3))?;
    d.set_item("albedo", from_grid(albedo, |a| [a.h, a.s]))?;
    Ok(d)
}

/// Ray-casts a scene description given as JSON. Returns the ground-truth
/// fields plus the parsed camera and light.
#[pyfunction]
fn cast_scene<'py>(py: Python<'py>, scene_json: &str) -> PyResult<Bound<'py, PyDict>> {
    let spec: SceneSpec = serde_json::from_str(scene_json).map_err(json_err)?;
    let gt = py.detach(|| synth::cast(&spec)).map_err(err)?;
    let d = fields_dict(py, &gt.image, &gt.depth, &gt.normals, &gt.albedo)?;
    d.set_item("camera", PyCamera { inner: spec.camera })?;
    d.set_item("light", PyLight { inner: spec.light })?;
    d.set_item("hash", spec.hash())?;
    Ok(d)
}

#[pyfunction]
fn render(
    camera: &PyCamera,
    light: &PyLight,
    depth: Rows<f64>,
    albedo: Rows<[f64; 2]>,
    normals: Rows<[f64; 3]>,
) -> PyResult<Rows<[f64; 3]>> {
    let rays = RayField::build(&camera.inner).map_err(err)?;
    let depth = to_grid(depth, |x| x)?;
    let albedo = albedo_field(albedo)?;
    let normals = to_grid(normals, vec3)?;
    let image = render_image(&light.inner, &rays, &depth, &albedo, &normals).map_err(err)?;
    Ok(from_grid(&image, arr3))
}

#[pyfunction]
fn normals_six_neighbor(camera: &PyCamera, depth: Rows<f64>) -> PyResult<Rows<[f64; 3]>> {
    let rays = RayField::build(&camera.inner).map_err(err)?;
    let n = normals::normals_six_neighbor(&to_grid(depth, |x| x)?, &rays).map_err(err)?;
    Ok(from_grid(&n, arr3))
}

#[pyfunction]
fn normals_cross_baseline(camera: &PyCamera, depth: Rows<f64>) -> PyResult<Rows<[f64; 3]>> {
    let rays = RayField::build(&camera.inner).map_err(err)?;
    let n = normals::normals_cross_baseline(&to_grid(depth, |x| x)?, &rays).map_err(err)?;
    Ok(from_grid(&n, arr3))
}

/// Loss terms of `depth` and `albedo` against `observed`.
#[pyfunction]
#[pyo3(signature = (observed, camera, light, depth, albedo, weights_json=None))]
fn loss<'py>(
    py: Python<'py>,
    observed: Rows<[f64; 3]>,
    camera: &PyCamera,
    light: &PyLight,
    depth: Rows<f64>,
    albedo: Rows<[f64; 2]>,
    weights_json: Option<&str>,
) -> PyResult<Bound<'py, PyDict>> {
    let weights: LossWeights = match weights_json {
        Some(text) => serde_json::from_str(text).map_err(json_err)?,
        None => LossWeights::default(),
    };
    let rays = RayField::build(&camera.inner).map_err(err)?;
    let l = total_loss(
        &to_grid(observed, vec3)?,
        &to_grid(depth, |x| x)?,
        &albedo_field(albedo)?,
        &light.inner,
        &rays,
        &weights,
    )
    .map_err(err)?;
    let d = PyDict::new(py);
    d.set_item("photometric", l.photometric)?;
    d.set_item("smoothness", l.smoothness)?;
    d.set_item("specular", l.specular)?;
    d.set_item("total", l.total)?;
    Ok(d)
}

/// Recovers depth and albedo from an image. `config_json` uses the same
/// layout as the command-line configuration file.
#[pyfunction]
#[pyo3(signature = (image, camera, light, config_json=None))]
fn recover<'py>(
    py: Python<'py>,
    image: Rows<[f64; 3]>,
    camera: &PyCamera,
    light: &PyLight,
    config_json: Option<&str>,
) -> PyResult<Bound<'py, PyDict>> {
    let config: RecoveryConfig = match config_json {
        Some(text) => serde_json::from_str(text).map_err(json_err)?,
        None => RecoveryConfig::default(),
    };
    let observed = to_grid(image, vec3)?;
    let (cam, light) = (camera.inner, light.inner);
    let out = py.detach(|| optim::recover(&observed, &light, &cam, &config)).map_err(err)?;
    let d = fields_dict(py, &out.rendered, &out.depth, &out.normals, &out.albedo)?;
    let history: Vec<f64> = out.history.iter().map(|l| l.total).collect();
    d.set_item("history", history)?;
    d.set_item("final_loss", out.final_loss.total)?;
    Ok(d)
}

/// All depth, normal and image metrics as a dict.
#[pyfunction]
fn evaluate(
    py: Python<'_>,
    pred_depth: Rows<f64>,
    gt_depth: Rows<f64>,
    pred_normals: Rows<[f64; 3]>,
    gt_normals: Rows<[f64; 3]>,
    pred_image: Rows<[f64; 3]>,
    gt_image: Rows<[f64; 3]>,
) -> PyResult<Py<PyAny>> {
    let report = metrics::evaluate(
        &to_grid(pred_depth, |x| x)?,
        &to_grid(gt_depth, |x| x)?,
        &to_grid(pred_normals, vec3)?,
        &to_grid(gt_normals, vec3)?,
        &to_grid(pred_image, vec3)?,
        &to_grid(gt_image, vec3)?,
    )
    .map_err(err)?;
    let text = serde_json::to_string(&report).expect("report serializes");
    let json = py.import("json")?;
    Ok(json.call_method1("loads", (text,))?.unbind())
}

/// Reads a bundle directory.
#[pyfunction]
fn read_bundle<'py>(py: Python<'py>, dir: &str) -> PyResult<Bound<'py, PyDict>> {
    let b = bundle::read_bundle(dir).map_err(err)?;
    let d = fields_dict(py, &b.image, &b.depth, &b.normals, &b.albedo)?;
    d.set_item("camera", PyCamera { inner: b.manifest.camera })?;
    d.set_item("light", PyLight { inner: b.manifest.light })?;
    Ok(d)
}

/// Fits light position and spread to bundles of known geometry. Returns the
/// fitted light and the per-bundle RMS residual in gray levels.
#[pyfunction]
fn calibrate(dirs: Vec<String>, init: &PyLight) -> PyResult<(PyLight, Vec<f64>)> {
    let mut camera = None;
    let mut obs = Vec::new();
    for dir in &dirs {
        let b = bundle::read_bundle(dir).map_err(err)?;
        camera.get_or_insert(b.manifest.camera);
        obs.push(CalibObservation::from_bundle(b).map_err(err)?);
    }
    let cam = camera.ok_or_else(|| PyValueError::new_err("at least one bundle is required"))?;
    let (light, report) = calibrate_light(&obs, &cam, &init.inner, &CalibConfig::default()).map_err(err)?;
    Ok((PyLight { inner: light }, report.rms_gray_levels))
}

#[pymodule]
fn lumedepth(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyCamera>()?;
    m.add_class::<PyLight>()?;
    m.add_function(wrap_pyfunction!(cast_scene, m)?)?;
    m.add_function(wrap_pyfunction!(render, m)?)?;
    m.add_function(wrap_pyfunction!(normals_six_neighbor, m)?)?;
    m.add_function(wrap_pyfunction!(normals_cross_baseline, m)?)?;
    m.add_function(wrap_pyfunction!(loss, m)?)?;
    m.add_function(wrap_pyfunction!(recover, m)?)?;
    m.add_function(wrap_pyfunction!(evaluate, m)?)?;
    m.add_function(wrap_pyfunction!(read_bundle, m)?)?;
    m.add_function(wrap_pyfunction!(calibrate, m)?)?;
    Ok(())
}
