//! Inputs shared by the benchmarks.

use depthcue::{CameraModel, CenteredCoord, DisparityMap, GroundPlaneModel};

pub const WIDTH: usize = 1242;
pub const HEIGHT: usize = 375;

/// Ground disparity of the default camera at `horizon_y`, rolled by `roll_deg`.
pub fn ground_map(horizon_y: f64, roll_deg: f64) -> DisparityMap {
    let plane = GroundPlaneModel::new(CameraModel::default(), horizon_y).with_roll(roll_deg);
    DisparityMap::from_fn(WIDTH, HEIGHT, |c, r| {
        plane.disparity_at(CenteredCoord::from_pixel(c as f64, r as f64, WIDTH, HEIGHT))
    })
    .expect("frame size is valid")
}

/// `map` with roughly `frac` of its pixels replaced by values in `[0, max)`.
/// Deterministic in `seed`.
pub fn corrupted(map: &DisparityMap, frac: f64, seed: u64) -> DisparityMap {
    let d_max = map.max_valid();
    let mut s = seed | 1;
    let mut next = move || {
        s ^= s << 13;
        s ^= s >> 7;
        s ^= s << 17;
        (s >> 11) as f64 / (1u64 << 53) as f64
    };
    let values = map
        .values()
        .iter()
        .map(|&v| if next() < frac { next() * d_max } else { v })
        .collect();
    DisparityMap::new(map.width(), map.height(), values).expect("same dimensions")
}
