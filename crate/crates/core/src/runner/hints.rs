//! Scene descriptions handed to oracle endpoints. Obstacle depths are always
//! re-derived from where the obstacle meets the ground in the frame the
//! model is shown, so a geometry-aware oracle follows every manipulation.

use crate::geometry::{CenteredCoord, GroundPlaneModel};
use crate::modelio::{Footprint, Obstacle, OracleMode, OracleSpec, SceneHint};
use crate::raster::BitMask;

use super::spec::ExperimentParams;

/// Obstacle whose depth is the ground depth at `contact`; `None` on or above
/// the horizon.
pub(crate) fn obstacle_at(plane: &GroundPlaneModel, footprint: BitMask, contact: CenteredCoord) -> Option<Obstacle> {
    let d = plane.disparity_at(contact);
    (d > 0.0).then(|| Obstacle {
        footprint: Footprint::Mask(footprint),
        depth_m: plane.camera.disparity_to_depth(d),
    })
}

/// Obstacle standing on the mask pixel lying deepest below the horizon.
pub(crate) fn obstacle_from_mask(plane: &GroundPlaneModel, mask: &BitMask) -> Option<Obstacle> {
    let (w, h) = (mask.width(), mask.height());
    let contact = mask
        .iter_set()
        .map(|(c, r)| CenteredCoord::from_pixel(c as f64, r as f64, w, h))
        .max_by(|a, b| plane.depth_below_horizon(*a).total_cmp(&plane.depth_below_horizon(*b)))?;
    obstacle_at(plane, mask.clone(), contact)
}

pub(crate) fn scene_hint(
    params: &ExperimentParams,
    plane: GroundPlaneModel,
    obstacles: Vec<Obstacle>,
    seed: u64,
) -> SceneHint {
    SceneHint {
        spec: OracleSpec {
            mode: OracleMode::GeometryAware,
            plane,
            obstacles,
            prior_plane: Some(GroundPlaneModel::new(params.camera, params.prior_horizon_y)),
            noise_sd: 0.0,
        },
        seed,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::CameraModel;

    #[test]
    fn mask_depth_comes_from_its_lowest_row() {
        let plane = GroundPlaneModel::new(CameraModel::default(), 0.0);
        let (w, h) = (40, 31);
        let mask = BitMask::from_fn(w, h, |c, r| (10..20).contains(&c) && (18..=25).contains(&r));
        let o = obstacle_from_mask(&plane, &mask).unwrap();
        // row 25 is 10 px below the horizon
        assert!((o.depth_m - 700.0 * 1.65 / 10.0).abs() < 1e-9);
        let above = BitMask::from_fn(w, h, |c, r| c == 3 && r < 10);
        assert!(obstacle_from_mask(&plane, &above).is_none());
        assert!(obstacle_from_mask(&plane, &BitMask::new(w, h)).is_none());
    }
}
