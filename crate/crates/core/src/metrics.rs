//! Evaluation metrics for recovered depth, normals and rendered images.
//!
//! Depth metrics are computed after median scale alignment, which removes
//! the global scale ambiguity of single-view reconstructions. Medians of an
//! even number of values take the lower-middle element.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::{ColorImage, Grid, NormalMap, ScalarField};

pub const SSIM_WINDOW: usize = 11;
pub const SSIM_SIGMA: f64 = 1.5;
pub const SSIM_C1: f64 = 0.01 * 0.01;
pub const SSIM_C2: f64 = 0.03 * 0.03;

/// Lower-middle median. Panics on an empty slice.
pub fn median(values: &[f64]) -> f64 {
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    sorted[(sorted.len() - 1) / 2]
}

fn check_depths(pred: &ScalarField, gt: &ScalarField) -> Result<()> {
    pred.check_same_shape("prediction", gt, "ground truth")?;
    if pred.is_empty() {
        return Err(Error::domain("cannot evaluate empty depth maps"));
    }
    pred.check_positive("predicted depth")?;
    gt.check_positive("ground-truth depth")
}

/// Scales `pred` by `median(gt) / median(pred)`.
pub fn median_align(pred: &ScalarField, gt: &ScalarField) -> Result<(ScalarField, f64)> {
    check_depths(pred, gt)?;
    let scale = median(gt.as_slice()) / median(pred.as_slice());
    Ok((pred.map(|d| d * scale), scale))
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct DepthMetrics {
    /// Factor applied to the prediction before the errors were computed.
    pub scale: f64,
    pub mae: f64,
    pub medae: f64,
    pub rmse: f64,
    pub rmse_log: f64,
    pub abs_rel: f64,
    pub sq_rel: f64,
    pub delta1: f64,
    pub delta2: f64,
    pub delta3: f64,
}

/// Depth errors after median alignment.
pub fn depth_metrics(pred: &ScalarField, gt: &ScalarField) -> Result<DepthMetrics> {
    let (aligned, scale) = median_align(pred, gt)?;
    let mut m = depth_metrics_unaligned(&aligned, gt)?;
    m.scale = scale;
    Ok(m)
}

/// Depth errors of `pred` as given.
pub fn depth_metrics_unaligned(pred: &ScalarField, gt: &ScalarField) -> Result<DepthMetrics> {
    check_depths(pred, gt)?;
    let n = pred.len() as f64;
    let mut abs_errors = Vec::with_capacity(pred.len());
    let (mut sq, mut sq_log, mut abs_rel, mut sq_rel) = (0.0, 0.0, 0.0, 0.0);
    let mut within = [0usize; 3];
    for (&p, &g) in pred.iter().zip(gt.iter()) {
        let e = p - g;
        abs_errors.push(e.abs());
        sq += e * e;
        let le = p.ln() - g.ln();
        sq_log += le * le;
        abs_rel += e.abs() / g;
        sq_rel += e * e / g;
        let ratio = (p / g).max(g / p);
        for (k, count) in within.iter_mut().enumerate() {
            if ratio < 1.25f64.powi(k as i32 + 1) {
                *count += 1;
            }
        }
    }
    Ok(DepthMetrics {
        scale: 1.0,
        mae: abs_errors.iter().sum::<f64>() / n,
        medae: median(&abs_errors),
        rmse: (sq / n).sqrt(),
        rmse_log: (sq_log / n).sqrt(),
        abs_rel: abs_rel / n,
        sq_rel: sq_rel / n,
        delta1: within[0] as f64 / n,
        delta2: within[1] as f64 / n,
        delta3: within[2] as f64 / n,
    })
}

/// Mean angle between corresponding unit normals, in degrees.
pub fn normal_mae(pred: &NormalMap, gt: &NormalMap) -> Result<f64> {
    pred.check_same_shape("predicted normals", gt, "ground-truth normals")?;
    if pred.is_empty() {
        return Err(Error::domain("cannot evaluate empty normal maps"));
    }
    for (name, map) in [("predicted", pred), ("ground-truth", gt)] {
        if let Some(i) = map.iter().position(|n| (n.norm() - 1.0).abs() > 1e-6) {
            return Err(Error::domain(format!(
                "{name} normal at pixel ({}, {}) is not unit length",
                i % map.width(),
                i / map.width()
            )));
        }
    }
    let total: f64 = pred
        .iter()
        .zip(gt.iter())
        .map(|(a, b)| a.cross(b).norm().atan2(a.dot(b)).to_degrees())
        .sum();
    Ok(total / pred.len() as f64)
}

/// Mean absolute difference over pixels and channels.
pub fn image_mae(a: &ColorImage, b: &ColorImage) -> Result<f64> {
    a.check_same_shape("image", b, "reference")?;
    let total: f64 = a
        .iter()
        .zip(b.iter())
        .map(|(x, y)| (x - y).abs().sum())
        .sum();
    Ok(total / (3 * a.len()) as f64)
}

fn gaussian_window() -> Vec<f64> {
    let half = (SSIM_WINDOW / 2) as f64;
    let raw: Vec<f64> = (0..SSIM_WINDOW)
        .map(|i| {
            let x = i as f64 - half;
            (-x * x / (2.0 * SSIM_SIGMA * SSIM_SIGMA)).exp()
        })
        .collect();
    let total: f64 = raw.iter().sum();
    raw.into_iter().map(|k| k / total).collect()
}

/// Separable filtering restricted to windows that fit inside the image.
fn filter_valid(src: &Grid<f64>, kernel: &[f64]) -> Grid<f64> {
    let k = kernel.len();
    let (w, h) = src.shape();
    let (ow, oh) = (w + 1 - k, h + 1 - k);
    let horizontal = Grid::from_fn(ow, h, |u, v| (0..k).map(|j| kernel[j] * src[(u + j, v)]).sum::<f64>());
    Grid::from_fn(ow, oh, |u, v| (0..k).map(|j| kernel[j] * horizontal[(u, v + j)]).sum::<f64>())
}

/// Single-scale SSIM with an 11-tap Gaussian window (sigma 1.5), computed
/// per channel over fully-contained windows and averaged.
pub fn ssim(a: &ColorImage, b: &ColorImage) -> Result<f64> {
    a.check_same_shape("image", b, "reference")?;
    if a.width() < SSIM_WINDOW || a.height() < SSIM_WINDOW {
        return Err(Error::domain(format!(
            "SSIM needs images of at least {SSIM_WINDOW}x{SSIM_WINDOW}, got {}x{}",
            a.width(),
            a.height()
        )));
    }
    let kernel = gaussian_window();
    let mut total = 0.0;
    for c in 0..3 {
        let x = a.map(|p| p[c]);
        let y = b.map(|p| p[c]);
        let mu_x = filter_valid(&x, &kernel);
        let mu_y = filter_valid(&y, &kernel);
        let xx = filter_valid(&x.map(|v| v * v), &kernel);
        let yy = filter_valid(&y.map(|v| v * v), &kernel);
        let xy = filter_valid(
            &Grid::from_fn(x.width(), x.height(), |u, v| x[(u, v)] * y[(u, v)]),
            &kernel,
        );
        let mut sum = 0.0;
        for i in 0..mu_x.len() {
            let (mx, my) = (mu_x.as_slice()[i], mu_y.as_slice()[i]);
            let var_x = xx.as_slice()[i] - mx * mx;
            let var_y = yy.as_slice()[i] - my * my;
            let cov = xy.as_slice()[i] - mx * my;
            sum += ((2.0 * mx * my + SSIM_C1) * (2.0 * cov + SSIM_C2))
                / ((mx * mx + my * my + SSIM_C1) * (var_x + var_y + SSIM_C2));
        }
        total += sum / mu_x.len() as f64;
    }
    Ok(total / 3.0)
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub scale: f64,
    pub mae: f64,
    pub medae: f64,
    pub rmse: f64,
    pub rmse_log: f64,
    pub abs_rel: f64,
    pub sq_rel: f64,
    pub delta1: f64,
    pub delta2: f64,
    pub delta3: f64,
    pub normal_mae_deg: f64,
    pub ssim: f64,
    /// Mean absolute image error on `[0, 1]` data; multiply by 255 for gray
    /// levels.
    pub image_mae: f64,
}

/// Everything at once. Depth errors use median alignment.
pub fn evaluate(
    pred_depth: &ScalarField,
    gt_depth: &ScalarField,
    pred_normals: &NormalMap,
    gt_normals: &NormalMap,
    pred_image: &ColorImage,
    gt_image: &ColorImage,
) -> Result<MetricsReport> {
    let d = depth_metrics(pred_depth, gt_depth)?;
    Ok(MetricsReport {
        scale: d.scale,
        mae: d.mae,
        medae: d.medae,
        rmse: d.rmse,
        rmse_log: d.rmse_log,
        abs_rel: d.abs_rel,
        sq_rel: d.sq_rel,
        delta1: d.delta1,
        delta2: d.delta2,
        delta3: d.delta3,
        normal_mae_deg: normal_mae(pred_normals, gt_normals)?,
        ssim: ssim(pred_image, gt_image)?,
        image_mae: image_mae(pred_image, gt_image)?,
    })
}

impl MetricsReport {
    pub fn table(&self) -> String {
        self.to_string()
    }
}

/// Aligned plain-text table in the usual column order.
impl fmt::Display for MetricsReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let columns = [
            ("MAE", self.mae),
            ("MedAE", self.medae),
            ("RMSE", self.rmse),
            ("RMSE_log", self.rmse_log),
            ("Abs_Rel", self.abs_rel),
            ("Sq_Rel", self.sq_rel),
            ("d<1.25", self.delta1),
            ("d<1.25^2", self.delta2),
            ("d<1.25^3", self.delta3),
            ("Normals_MAE", self.normal_mae_deg),
            ("SSIM", self.ssim),
            ("Image_MAE", self.image_mae),
            ("Scale", self.scale),
        ];
        let header: Vec<String> = columns.iter().map(|(n, _)| format!("{n:>12}")).collect();
        let values: Vec<String> = columns.iter().map(|(_, v)| format!("{v:>12.6}")).collect();
        writeln!(f, "{}", header.join(" "))?;
        writeln!(f, "{}", values.join(" "))
    }
}
