//! Surface normals estimated from a depth map.
//!
//! The main estimator back-projects each interior pixel and its six
//! neighbours (N, NE, E, S, SW, W), forms the six triangles of the fan
//! around the centre and averages their camera-facing normals weighted by
//! triangle area. Since the area-weighted unit normal of a triangle is half
//! its edge cross product, the average reduces to a sum of oriented cross
//! products. Border pixels copy the nearest interior normal.

use rayon::prelude::*;

use crate::error::Result;
use crate::field::{Grid, NormalMap, ScalarField};
use crate::geometry::RayField;
use crate::Vec3;

/// Fan order around the centre pixel, as `(du, dv)` offsets.
pub(crate) const SIX_NEIGHBORS: [(isize, isize); 6] =
    [(0, -1), (1, -1), (1, 0), (0, 1), (-1, 1), (-1, 0)];

/// Six-neighbour area-weighted normals.
pub fn normals_six_neighbor(depth: &ScalarField, rays: &RayField) -> Result<NormalMap> {
    let points = checked_points(depth, rays)?;
    Ok(SixNeighborNormals::compute(&points, rays).normals)
}

/// Central-difference cross-product normals, used as a comparison baseline.
pub fn normals_cross_baseline(depth: &ScalarField, rays: &RayField) -> Result<NormalMap> {
    let points = checked_points(depth, rays)?;
    let (w, h) = points.shape();
    let interior = |u: usize, v: usize| {
        let ray = rays.get(u, v);
        let du = points[(u + 1, v)] - points[(u - 1, v)];
        let dv = points[(u, v + 1)] - points[(u, v - 1)];
        let m = du.cross(&dv);
        let m = if m.dot(ray) > 0.0 { -m } else { m };
        let norm = m.norm();
        if norm > 0.0 && m.dot(ray) < 0.0 {
            m / norm
        } else {
            -ray
        }
    };
    Ok(Grid::from_fn(w, h, |u, v| {
        let (iu, iv) = nearest_interior(u, v, w, h);
        interior(iu, iv)
    }))
}

fn checked_points(depth: &ScalarField, rays: &RayField) -> Result<Grid<Vec3>> {
    depth.check_positive("depth")?;
    rays.points(depth)
}

#[inline]
pub(crate) fn nearest_interior(u: usize, v: usize, w: usize, h: usize) -> (usize, usize) {
    (u.clamp(1, w - 2), v.clamp(1, h - 2))
}

#[inline]
fn offset(u: usize, v: usize, (du, dv): (isize, isize)) -> (usize, usize) {
    ((u as isize + du) as usize, (v as isize + dv) as usize)
}

/// Per-interior-pixel state kept for back-propagation.
#[derive(Clone, Copy, Debug)]
pub(crate) struct FanState {
    /// Sum of the oriented triangle cross products.
    sum: Vec3,
    /// +1 or -1 per triangle.
    signs: [f64; 6],
    /// The pixel fell back to `-ray`; its normal does not depend on depth.
    fallback: bool,
}

pub(crate) struct SixNeighborNormals {
    pub normals: NormalMap,
    fans: Grid<FanState>,
}

impl SixNeighborNormals {
    /// `points` must be the back-projected depth map for `rays`; shapes are
    /// assumed to agree and be at least 3x3.
    pub(crate) fn compute(points: &Grid<Vec3>, rays: &RayField) -> Self {
        let (w, h) = points.shape();
        let fan_at = |u: usize, v: usize| -> FanState {
            if u == 0 || v == 0 || u == w - 1 || v == h - 1 {
                return FanState {
                    sum: Vec3::zeros(),
                    signs: [0.0; 6],
                    fallback: true,
                };
            }
            let ray = rays.get(u, v);
            let center = points[(u, v)];
            let mut sum = Vec3::zeros();
            let mut signs = [0.0; 6];
            for k in 0..6 {
                let a = points[offset(u, v, SIX_NEIGHBORS[k])] - center;
                let b = points[offset(u, v, SIX_NEIGHBORS[(k + 1) % 6])] - center;
                let m = a.cross(&b);
                signs[k] = if m.dot(ray) > 0.0 { -1.0 } else { 1.0 };
                sum += m * signs[k];
            }
            let fallback = !(sum.norm() > 0.0 && sum.dot(ray) < 0.0);
            FanState {
                sum,
                signs,
                fallback,
            }
        };
        let fans_data: Vec<FanState> = (0..w * h)
            .into_par_iter()
            .map(|i| fan_at(i % w, i / w))
            .collect();
        let fans = Grid::from_vec(w, h, fans_data).expect("shape");
        let normals = Grid::from_fn(w, h, |u, v| {
            let (iu, iv) = nearest_interior(u, v, w, h);
            let fan = fans[(iu, iv)];
            if fan.fallback {
                -rays.get(iu, iv)
            } else {
                fan.sum.normalize()
            }
        });
        SixNeighborNormals { normals, fans }
    }

    /// Pulls a gradient on the normal map back onto the 3D points.
    pub(crate) fn backward(&self, points: &Grid<Vec3>, grad_normals: &Grid<Vec3>) -> Grid<Vec3> {
        let (w, h) = points.shape();
        // Border pixels copy an interior normal, so their gradient lands there.
        let mut grad_interior = Grid::filled(w, h, Vec3::zeros());
        for v in 0..h {
            for u in 0..w {
                let (iu, iv) = nearest_interior(u, v, w, h);
                grad_interior[(iu, iv)] += grad_normals[(u, v)];
            }
        }
        let mut grad_points = Grid::filled(w, h, Vec3::zeros());
        for v in 1..h - 1 {
            for u in 1..w - 1 {
                let fan = &self.fans[(u, v)];
                let g = grad_interior[(u, v)];
                if fan.fallback || g == Vec3::zeros() {
                    continue;
                }
                let norm = fan.sum.norm();
                let n = fan.sum / norm;
                let grad_sum = (g - n * n.dot(&g)) / norm;
                let center = points[(u, v)];
                for k in 0..6 {
                    let pk = offset(u, v, SIX_NEIGHBORS[k]);
                    let pk1 = offset(u, v, SIX_NEIGHBORS[(k + 1) % 6]);
                    let a = points[pk] - center;
                    let b = points[pk1] - center;
                    let gm = grad_sum * fan.signs[k];
                    let ga = b.cross(&gm);
                    let gb = gm.cross(&a);
                    grad_points[pk] += ga;
                    grad_points[pk1] += gb;
                    grad_points[(u, v)] -= ga + gb;
                }
            }
        }
        grad_points
    }
}
