use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::geometry::frame_center;
use crate::raster::{DisparityMap, Rect};

use super::stats::{mean_sd, ols};
use super::FitError;

/// Below this the fitted line cannot be extrapolated to a horizon.
const MIN_GROUND_SLOPE: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RansacParams {
    pub iterations: usize,
    /// Absolute residual tolerance in normalized disparity.
    pub inlier_tol: f64,
    pub min_inlier_frac: f64,
    pub seed: u64,
}

impl Default for RansacParams {
    fn default() -> Self {
        Self {
            iterations: 200,
            inlier_tol: 0.001,
            min_inlier_frac: 0.3,
            seed: 0,
        }
    }
}

/// Disparity as a linear function of the centered row `y`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LineFit {
    pub slope: f64,
    pub intercept: f64,
    pub inlier_count: usize,
    pub region: Rect,
}

impl LineFit {
    /// Row where the fitted disparity reaches zero.
    pub fn zero_crossing(&self) -> f64 {
        -self.intercept / self.slope
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HorizonEstimate {
    pub horizon_y: f64,
    pub spread: f64,
    pub repeats: usize,
}

fn region_points(map: &DisparityMap, region: Rect) -> Result<Vec<(f64, f64)>, FitError> {
    if region.area() == 0 || !region.fits_in(map.width(), map.height()) {
        return Err(FitError::Domain(format!(
            "region {region:?} does not fit a {}x{} map",
            map.width(),
            map.height()
        )));
    }
    let (_, cy) = frame_center(map.width(), map.height());
    let mut pts = Vec::with_capacity(region.area());
    for row in region.y0..region.y1() {
        let y = row as f64 - cy;
        for col in region.x0..region.x1() {
            // zero disparity is sky or beyond; it says nothing about the ground line
            if let Some(d) = map.valid_value(col, row).filter(|d| *d > 0.0) {
                pts.push((y, d));
            }
        }
    }
    Ok(pts)
}

fn count_inliers(pts: &[(f64, f64)], a: f64, b: f64, tol: f64) -> usize {
    pts.iter().filter(|&&(y, d)| (d - (a * y + b)).abs() <= tol).count()
}

pub fn fit_ground_line_ransac(
    map: &DisparityMap,
    region: Rect,
    params: &RansacParams,
) -> Result<LineFit, FitError> {
    if params.iterations == 0 || !(params.inlier_tol > 0.0) || !(0.0..=1.0).contains(&params.min_inlier_frac) {
        return Err(FitError::Domain(format!("invalid RANSAC parameters {params:?}")));
    }
    let pts = region_points(map, region)?;
    if pts.len() < 2 {
        return Err(FitError::InsufficientPixels {
            needed: 2,
            got: pts.len(),
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let mut best: Option<(usize, f64, f64)> = None;
    for _ in 0..params.iterations {
        let i = rng.random_range(0..pts.len());
        let mut pair = None;
        for _ in 0..16 {
            let j = rng.random_range(0..pts.len());
            if pts[j].0 != pts[i].0 {
                pair = Some(j);
                break;
            }
        }
        let Some(j) = pair else { continue };
        let (y0, d0) = pts[i];
        let (y1, d1) = pts[j];
        let a = (d1 - d0) / (y1 - y0);
        let b = d0 - a * y0;
        let n = count_inliers(&pts, a, b, params.inlier_tol);
        if best.is_none_or(|(m, _, _)| n > m) {
            best = Some((n, a, b));
        }
    }
    let Some((n_in, a, b)) = best else {
        return Err(FitError::DegenerateScene("region holds a single image row".into()));
    };
    let frac = n_in as f64 / pts.len() as f64;
    if frac < params.min_inlier_frac {
        return Err(FitError::DegenerateScene(format!(
            "inlier fraction {frac:.3} below minimum {}",
            params.min_inlier_frac
        )));
    }
    let inliers: Vec<(f64, f64)> = pts
        .iter()
        .copied()
        .filter(|&(y, d)| (d - (a * y + b)).abs() <= params.inlier_tol)
        .collect();
    let (slope, intercept) =
        ols(&inliers).map_err(|_| FitError::DegenerateScene("inliers span a single row".into()))?;
    if !(slope > MIN_GROUND_SLOPE) {
        return Err(FitError::DegenerateScene(format!(
            "ground slope {slope:e} is not positive; no horizon to extrapolate"
        )));
    }
    Ok(LineFit {
        slope,
        intercept,
        inlier_count: n_in,
        region,
    })
}

/// Horizon row averaged over `repeats` fits seeded `seed, seed + 1, ...`.
pub fn estimate_horizon(
    map: &DisparityMap,
    region: Rect,
    params: &RansacParams,
    repeats: usize,
) -> Result<HorizonEstimate, FitError> {
    if repeats == 0 {
        return Err(FitError::Domain("repeats must be at least 1".into()));
    }
    let mut ys = Vec::with_capacity(repeats);
    for k in 0..repeats {
        let p = RansacParams {
            seed: params.seed.wrapping_add(k as u64),
            ..*params
        };
        ys.push(fit_ground_line_ransac(map, region, &p)?.zero_crossing());
    }
    let (mean, sd) = mean_sd(&ys);
    Ok(HorizonEstimate {
        horizon_y: mean,
        spread: sd.unwrap_or(0.0),
        repeats,
    })
}
