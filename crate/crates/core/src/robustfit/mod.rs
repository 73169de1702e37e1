//! Robust fits on disparity maps: ground line and horizon by RANSAC, roll by
//! a Hough vote over an iso-disparity band, and outlier-trimmed regression.

mod hough;
mod ransac;
mod stats;

use thiserror::Error;

pub use crate::raster::DisparityMap;
use crate::raster::{BitMask, FracRect, Rect};

pub use hough::{estimate_roll, DisparityBand, HoughParams, RollEstimate};
pub use ransac::{estimate_horizon, fit_ground_line_ransac, HorizonEstimate, LineFit, RansacParams};
pub use stats::{mean_sd, ols, pearson_r, regress_with_outlier_rejection, RegressionSummary};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FitError {
    #[error("need at least {needed} valid pixels, found {got}")]
    InsufficientPixels { needed: usize, got: usize },
    #[error("degenerate scene: {0}")]
    DegenerateScene(String),
    #[error("only {got} pixels in disparity band [{lo}, {hi}], need {needed}")]
    BandEmpty {
        lo: f64,
        hi: f64,
        got: usize,
        needed: usize,
    },
    #[error("statistics error: {0}")]
    Statistics(String),
    #[error("{0}")]
    Domain(String),
}

/// The bottom-center sampling region: central half of the width, bottom 40%
/// of the height.
pub const GROUND_REGION: FracRect = FracRect {
    left: 0.25,
    right: 0.75,
    top: 0.60,
    bottom: 1.0,
};

pub fn ground_region(width: usize, height: usize) -> Rect {
    GROUND_REGION.resolve(width, height)
}

/// Mean of the valid disparities under `mask`.
pub fn region_mean_disparity(map: &DisparityMap, mask: &BitMask) -> Result<f64, FitError> {
    if mask.width() != map.width() || mask.height() != map.height() {
        return Err(FitError::Domain(format!(
            "mask is {}x{}, map is {}x{}",
            mask.width(),
            mask.height(),
            map.width(),
            map.height()
        )));
    }
    let (mut sum, mut n) = (0.0, 0usize);
    for (c, r) in mask.iter_set() {
        if let Some(d) = map.valid_value(c, r) {
            sum += d;
            n += 1;
        }
    }
    if n == 0 {
        return Err(FitError::Domain("measurement mask covers no valid pixels".into()));
    }
    Ok(sum / n as f64)
}


#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn region_mean_examples() {
        let m = DisparityMap::from_fn(4, 3, |_, _| 0.025).unwrap();
        let mask = BitMask::from_fn(4, 3, |c, r| (c + r) % 2 == 0);
        assert!((region_mean_disparity(&m, &mask).unwrap() - 0.025).abs() < 1e-15);

        let m = DisparityMap::from_fn(2, 1, |c, _| if c == 0 { 0.02 } else { 0.04 }).unwrap();
        let mask = BitMask::from_fn(2, 1, |_, _| true);
        assert!((region_mean_disparity(&m, &mask).unwrap() - 0.03).abs() < 1e-15);
    }

    #[test]
    fn region_mean_rejects_empty_and_misaligned() {
        let m = DisparityMap::from_fn(4, 3, |_, _| 0.01).unwrap();
        assert!(matches!(region_mean_disparity(&m, &BitMask::new(4, 3)), Err(FitError::Domain(_))));
        assert!(matches!(region_mean_disparity(&m, &BitMask::new(3, 3)), Err(FitError::Domain(_))));
    }

    #[test]
    fn invalid_pixels_are_skipped() {
        let m = DisparityMap::with_validity(2, 1, vec![0.02, 0.9], Some(vec![true, false])).unwrap();
        let mask = BitMask::from_fn(2, 1, |_, _| true);
        assert_eq!(region_mean_disparity(&m, &mask).unwrap(), 0.02);
    }

    #[test]
    fn default_region_on_default_frame() {
        let r = ground_region(1242, 375);
        assert_eq!((r.x0, r.x1(), r.y0, r.y1()), (310, 931, 225, 375));
    }
}
