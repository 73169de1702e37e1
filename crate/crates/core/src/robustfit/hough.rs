use serde::{Deserialize, Serialize};

use crate::geometry::CenteredCoord;
use crate::raster::DisparityMap;

use super::FitError;

/// Support pixels for the least-squares refinement must lie this close to
/// the current line.
const REFINE_HALF_WIDTH_PX: f64 = 6.0;
const REFINE_ROUNDS: usize = 2;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DisparityBand {
    pub lo: f64,
    pub hi: f64,
}

impl Default for DisparityBand {
    fn default() -> Self {
        Self { lo: 0.030, hi: 0.031 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct HoughParams {
    pub angle_res_deg: f64,
    pub angle_range_deg: f64,
    pub rho_res_px: f64,
    pub min_pixels: usize,
}

impl Default for HoughParams {
    fn default() -> Self {
        Self {
            angle_res_deg: 0.1,
            angle_range_deg: 10.0,
            rho_res_px: 1.0,
            min_pixels: 50,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RollEstimate {
    /// Tilt of the iso-disparity line, refined by a total least squares fit
    /// to the pixels supporting the Hough peak. Positive tilts the right
    /// end down (image `y` points down).
    pub angle_deg: f64,
    /// Angle of the raw accumulator peak.
    pub hough_angle_deg: f64,
    pub support: usize,
}

fn band_pixels(map: &DisparityMap, band: DisparityBand) -> Vec<CenteredCoord> {
    let (w, h) = (map.width(), map.height());
    let mut out = Vec::new();
    for row in 0..h {
        for col in 0..w {
            if let Some(d) = map.valid_value(col, row) {
                if d >= band.lo && d <= band.hi {
                    out.push(CenteredCoord::from_pixel(col as f64, row as f64, w, h));
                }
            }
        }
    }
    out
}

/// Signed distance of `p` along the normal of the line at `angle` rad.
#[inline]
fn rho(p: CenteredCoord, sin: f64, cos: f64) -> f64 {
    -p.x * sin + p.y * cos
}

/// Principal direction of `pts` near the line `(angle, rho0)`.
fn tls_refine(pts: &[CenteredCoord], mut angle: f64, mut rho0: f64) -> (f64, usize) {
    let mut support = 0;
    for _ in 0..REFINE_ROUNDS {
        let (s, c) = angle.sin_cos();
        let near: Vec<&CenteredCoord> = pts
            .iter()
            .filter(|p| (rho(**p, s, c) - rho0).abs() <= REFINE_HALF_WIDTH_PX)
            .collect();
        if near.len() < 2 {
            break;
        }
        let n = near.len() as f64;
        let mx = near.iter().map(|p| p.x).sum::<f64>() / n;
        let my = near.iter().map(|p| p.y).sum::<f64>() / n;
        let (mut sxx, mut syy, mut sxy) = (0.0, 0.0, 0.0);
        for p in &near {
            let (dx, dy) = (p.x - mx, p.y - my);
            sxx += dx * dx;
            syy += dy * dy;
            sxy += dx * dy;
        }
        angle = 0.5 * (2.0 * sxy).atan2(sxx - syy);
        let (s, c) = angle.sin_cos();
        rho0 = -mx * s + my * c;
        support = near.len();
    }
    (angle, support)
}

pub fn estimate_roll(
    map: &DisparityMap,
    band: DisparityBand,
    params: &HoughParams,
) -> Result<RollEstimate, FitError> {
    if !(params.angle_res_deg > 0.0)
        || !(params.rho_res_px > 0.0)
        || !(0.0..=45.0).contains(&params.angle_range_deg)
        || !(band.lo <= band.hi)
    {
        return Err(FitError::Domain(format!("invalid Hough parameters {params:?} / {band:?}")));
    }
    let pts = band_pixels(map, band);
    let needed = params.min_pixels.max(2);
    if pts.len() < needed {
        return Err(FitError::BandEmpty {
            lo: band.lo,
            hi: band.hi,
            got: pts.len(),
            needed,
        });
    }

    let n_angles = (2.0 * params.angle_range_deg / params.angle_res_deg).round() as usize + 1;
    let rho_max = 0.5 * (map.width() as f64).hypot(map.height() as f64) + params.rho_res_px;
    let n_rho = (2.0 * rho_max / params.rho_res_px).ceil() as usize + 1;
    let mut acc = vec![0u32; n_rho];
    // (votes, |angle|, angle index, rho bin); first max wins ties
    let mut best: Option<(u32, f64, usize, usize)> = None;
    for ai in 0..n_angles {
        let a_deg = -params.angle_range_deg + ai as f64 * params.angle_res_deg;
        let (s, c) = a_deg.to_radians().sin_cos();
        acc.iter_mut().for_each(|v| *v = 0);
        for p in &pts {
            let bin = ((rho(*p, s, c) + rho_max) / params.rho_res_px).floor() as usize;
            acc[bin] += 1;
        }
        for (bin, &votes) in acc.iter().enumerate() {
            let better = match best {
                None => true,
                Some((bv, babs, _, _)) => votes > bv || (votes == bv && a_deg.abs() < babs - 1e-12),
            };
            if better {
                best = Some((votes, a_deg.abs(), ai, bin));
            }
        }
    }
    let (_, _, ai, bin) = best.expect("at least one angle");
    let hough_deg = -params.angle_range_deg + ai as f64 * params.angle_res_deg;
    let rho_peak = (bin as f64 + 0.5) * params.rho_res_px - rho_max;
    let (angle, support) = tls_refine(&pts, hough_deg.to_radians(), rho_peak);
    if support < needed {
        return Err(FitError::BandEmpty {
            lo: band.lo,
            hi: band.hi,
            got: support,
            needed,
        });
    }
    Ok(RollEstimate {
        angle_deg: angle.to_degrees(),
        hough_angle_deg: hough_deg,
        support,
    })
}

#[cfg(test)]
mod tests {
    use super::super::testutil::{ground_map, plane};
    use super::*;
    use crate::imgsynth::{crop_roll_map, CropParams};
    use proptest::prelude::*;

    const W: usize = 1242;
    const H: usize = 375;

    #[test]
    fn level_ground_reads_zero() {
        let map = ground_map(&plane(0.0, 0.0), W, H);
        let est = estimate_roll(&map, DisparityBand::default(), &HoughParams::default()).unwrap();
        assert!(est.angle_deg.abs() <= 0.1, "{est:?}");
        assert!(est.support >= 50);
    }

    #[test]
    fn rolled_ground_recovered() {
        for roll in [-3.0, -2.0, -1.0, 1.0, 2.0, 3.0] {
            let map = ground_map(&plane(4.0, roll), W, H);
            let est = estimate_roll(&map, DisparityBand::default(), &HoughParams::default()).unwrap();
            assert!((est.angle_deg - roll).abs() <= 0.2, "roll {roll}: {est:?}");
        }
    }

    #[test]
    fn rolled_crop_of_level_ground() {
        // cropping a window rotated by +2 degrees makes the ground read -2
        let map = ground_map(&plane(0.0, 0.0), W, H);
        let crop = crop_roll_map(&map, 2.0, CropParams::ROLL).unwrap();
        let est = estimate_roll(&crop, DisparityBand::default(), &HoughParams::default()).unwrap();
        assert!((est.angle_deg + 2.0).abs() <= 0.2, "{est:?}");
    }

    #[test]
    fn band_outside_range_is_empty() {
        let map = ground_map(&plane(0.0, 0.0), W, H);
        let err = estimate_roll(&map, DisparityBand { lo: 0.5, hi: 0.6 }, &HoughParams::default()).unwrap_err();
        assert!(matches!(err, FitError::BandEmpty { got: 0, .. }));
    }

    #[test]
    fn bad_parameters() {
        let map = ground_map(&plane(0.0, 0.0), 64, 48);
        let p = HoughParams { angle_range_deg: 60.0, ..Default::default() };
        assert!(matches!(estimate_roll(&map, DisparityBand::default(), &p), Err(FitError::Domain(_))));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(16))]

        #[test]
        fn rotation_equivariance(roll in -8.0f64..8.0, h in -10.0f64..10.0) {
            let map = ground_map(&plane(h, roll), 900, 375);
            let est = estimate_roll(&map, DisparityBand::default(), &HoughParams::default()).unwrap();
            prop_assert!((est.angle_deg - roll).abs() <= 0.1, "{:?}", est);
            prop_assert!(est.angle_deg.abs() <= 45.0);
        }
    }
}
