//! Pinhole cue formulas and the flat-ground disparity model.
//!
//! Image coordinates are [`CenteredCoord`]s: offsets in pixels from the image
//! center, `x` to the right and `y` downward. The horizon level `horizon_y`
//! uses the same convention. Disparities are normalized by the nominal image
//! width of the camera, so `d = f * B / (Z * W)`.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeometryError {
    #[error("{name} must be positive and finite, got {value}")]
    NonPositive { name: &'static str, value: f64 },
    #[error("ground contact at y={ground_y} is not below the horizon at y={horizon_y}")]
    AboveHorizon { ground_y: f64, horizon_y: f64 },
    #[error("principal point ({cx}, {cy}) outside a {w}x{h} frame")]
    PrincipalPoint { cx: f64, cy: f64, w: usize, h: usize },
}

fn positive(name: &'static str, value: f64) -> Result<f64, GeometryError> {
    if value.is_finite() && value > 0.0 {
        Ok(value)
    } else {
        Err(GeometryError::NonPositive { name, value })
    }
}

/// Intrinsics plus mounting height and stereo baseline.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CameraModel {
    pub f_px: f64,
    pub cx_px: f64,
    pub cy_px: f64,
    pub cam_height_m: f64,
    pub baseline_m: f64,
    pub image_w_px: usize,
    pub image_h_px: usize,
}

impl Default for CameraModel {
    /// KITTI-like magnitudes: 1242x375 frame, f = 700 px, 1.65 m mounting
    /// height, 0.54 m baseline.
    fn default() -> Self {
        Self {
            f_px: 700.0,
            cx_px: (1242.0 - 1.0) / 2.0,
            cy_px: (375.0 - 1.0) / 2.0,
            cam_height_m: 1.65,
            baseline_m: 0.54,
            image_w_px: 1242,
            image_h_px: 375,
        }
    }
}

impl CameraModel {
    pub fn validate(&self) -> Result<(), GeometryError> {
        positive("f_px", self.f_px)?;
        positive("cam_height_m", self.cam_height_m)?;
        positive("baseline_m", self.baseline_m)?;
        positive("image_w_px", self.image_w_px as f64)?;
        positive("image_h_px", self.image_h_px as f64)?;
        let inside = |v: f64, n: usize| v.is_finite() && v >= 0.0 && v < n as f64;
        if !inside(self.cx_px, self.image_w_px) || !inside(self.cy_px, self.image_h_px) {
            return Err(GeometryError::PrincipalPoint {
                cx: self.cx_px,
                cy: self.cy_px,
                w: self.image_w_px,
                h: self.image_h_px,
            });
        }
        Ok(())
    }

    /// `f * B / W`: the product `d * Z` for normalized disparity `d`.
    pub fn disparity_depth_product(&self) -> f64 {
        self.f_px * self.baseline_m / self.image_w_px as f64
    }

    /// Normalized disparity of a point at depth `depth_m`.
    pub fn depth_to_disparity(&self, depth_m: f64) -> f64 {
        self.disparity_depth_product() / depth_m
    }

    /// Depth of a normalized disparity; zero disparity maps to infinity.
    pub fn disparity_to_depth(&self, disparity: f64) -> f64 {
        self.disparity_depth_product() / disparity
    }

    pub fn to_pixel(&self, c: CenteredCoord) -> (f64, f64) {
        (c.x + self.cx_px, c.y + self.cy_px)
    }

    pub fn from_pixel(&self, col: f64, row: f64) -> CenteredCoord {
        CenteredCoord::new(col - self.cx_px, row - self.cy_px)
    }
}

/// Offset from the image center in pixels; `x` rightward, `y` downward.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CenteredCoord {
    pub x: f64,
    pub y: f64,
}

impl CenteredCoord {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    /// Centered coordinates of pixel `(col, row)` in a `width x height` frame.
    /// Pixel centers sit on integers; the frame center is `((w-1)/2, (h-1)/2)`.
    pub fn from_pixel(col: f64, row: f64, width: usize, height: usize) -> Self {
        let (cx, cy) = frame_center(width, height);
        Self::new(col - cx, row - cy)
    }

    pub fn to_pixel(self, width: usize, height: usize) -> (f64, f64) {
        let (cx, cy) = frame_center(width, height);
        (self.x + cx, self.y + cy)
    }

    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }

    /// Rotate by `angle_rad` about the origin (image center), in pixel
    /// coordinates with `y` down.
    pub fn rotated(self, angle_rad: f64) -> Self {
        let (s, c) = angle_rad.sin_cos();
        Self::new(c * self.x - s * self.y, s * self.x + c * self.y)
    }
}

pub fn frame_center(width: usize, height: usize) -> (f64, f64) {
    ((width as f64 - 1.0) / 2.0, (height as f64 - 1.0) / 2.0)
}

/// Flat ground seen by `camera`, with its horizon through `(0, horizon_y)`
/// tilted by `roll_deg` (direction `(cos, sin)` in y-down pixel coordinates).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GroundPlaneModel {
    pub horizon_y: f64,
    pub camera: CameraModel,
    #[serde(default)]
    pub roll_deg: f64,
}

impl GroundPlaneModel {
    pub fn new(camera: CameraModel, horizon_y: f64) -> Self {
        Self {
            horizon_y,
            camera,
            roll_deg: 0.0,
        }
    }

    pub fn with_roll(mut self, roll_deg: f64) -> Self {
        self.roll_deg = roll_deg;
        self
    }

    /// Signed distance of `p` below the horizon line, in pixels.
    pub fn depth_below_horizon(&self, p: CenteredCoord) -> f64 {
        let (s, c) = self.roll_deg.to_radians().sin_cos();
        (p.y - self.horizon_y) * c - p.x * s
    }

    /// Ground disparity at `p`; zero on and above the horizon.
    pub fn disparity_at(&self, p: CenteredCoord) -> f64 {
        let v = self.depth_below_horizon(p);
        if v <= 0.0 {
            0.0
        } else {
            self.disparity_slope() * v
        }
    }

    /// Disparity gradient along the horizon normal, per pixel.
    pub fn disparity_slope(&self) -> f64 {
        self.camera.baseline_m / (self.camera.cam_height_m * self.camera.image_w_px as f64)
    }

    /// The same ground seen through a window whose center moved down by
    /// `offset_px`.
    pub fn shifted(&self, offset_px: f64) -> Self {
        Self {
            horizon_y: self.horizon_y - offset_px,
            ..*self
        }
    }

    /// The same ground seen through a window rotated by `angle_deg` about the
    /// image center.
    pub fn rotated(&self, angle_deg: f64) -> Self {
        let roll = self.roll_deg.to_radians();
        let new_roll = roll - angle_deg.to_radians();
        Self {
            horizon_y: self.horizon_y * roll.cos() / new_roll.cos(),
            roll_deg: new_roll.to_degrees(),
            camera: self.camera,
        }
    }
}

/// Distance from the apparent size of an object of known height.
pub fn depth_from_apparent_size(
    camera: &CameraModel,
    apparent_h_px: f64,
    true_h_m: f64,
) -> Result<f64, GeometryError> {
    let h = positive("apparent_h_px", apparent_h_px)?;
    let big_h = positive("true_h_m", true_h_m)?;
    Ok(camera.f_px * big_h / h)
}

/// Distance from the image row of a ground contact point under flat ground.
pub fn depth_from_vertical_position(
    camera: &CameraModel,
    ground_y: f64,
    horizon_y: f64,
) -> Result<f64, GeometryError> {
    let dy = ground_y - horizon_y;
    if !(dy > 0.0) || !dy.is_finite() {
        return Err(GeometryError::AboveHorizon {
            ground_y,
            horizon_y,
        });
    }
    Ok(camera.f_px * camera.cam_height_m / dy)
}

/// Scale and ground contact of an object moved to `rel_dist` times its
/// original distance.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Placement {
    pub scale: f64,
    pub contact: CenteredCoord,
}

pub fn place_at_relative_distance(
    contact: CenteredCoord,
    horizon_y: f64,
    rel_dist: f64,
) -> Result<Placement, GeometryError> {
    positive("rel_dist_r", rel_dist)?;
    if !(contact.y > horizon_y) {
        return Err(GeometryError::AboveHorizon {
            ground_y: contact.y,
            horizon_y,
        });
    }
    let s = 1.0 / rel_dist;
    Ok(Placement {
        scale: s,
        contact: CenteredCoord::new(contact.x * s, horizon_y + (contact.y - horizon_y) * s),
    })
}

/// Normalized ground disparity for each row offset; zero at or above the
/// horizon. Roll is ignored (rows are taken at `x = 0`).
pub fn ground_disparity_profile(plane: &GroundPlaneModel, rows: &[f64]) -> Vec<f64> {
    let k = plane.disparity_slope();
    rows.iter()
        .map(|&y| {
            if y <= plane.horizon_y {
                0.0
            } else {
                k * (y - plane.horizon_y)
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn cam() -> CameraModel {
        CameraModel::default()
    }

    #[test]
    fn apparent_size_examples() {
        assert_eq!(depth_from_apparent_size(&cam(), 70.0, 1.5).unwrap(), 15.0);
        assert_eq!(depth_from_apparent_size(&cam(), 700.0, 1.0).unwrap(), 1.0);
        let a = depth_from_apparent_size(&cam(), 35.0, 1.7).unwrap();
        let b = depth_from_apparent_size(&cam(), 70.0, 1.7).unwrap();
        assert!((a - 2.0 * b).abs() < 1e-12);
        assert!(depth_from_apparent_size(&cam(), 0.0, 1.0).is_err());
        assert!(depth_from_apparent_size(&cam(), 10.0, -1.0).is_err());
    }

    #[test]
    fn vertical_position_examples() {
        let z = depth_from_vertical_position(&cam(), 100.0, 0.0).unwrap();
        assert!((z - 11.55).abs() < 1e-12);
        let z = depth_from_vertical_position(&cam(), 690.0, -10.0).unwrap();
        assert!((z - 1.65).abs() < 1e-12);
        assert!(matches!(
            depth_from_vertical_position(&cam(), 0.0, 0.0),
            Err(GeometryError::AboveHorizon { .. })
        ));
        assert!(depth_from_vertical_position(&cam(), -5.0, 0.0).is_err());
    }

    #[test]
    fn placement_examples() {
        let c = CenteredCoord::new(37.0, 44.0);
        let p = place_at_relative_distance(c, 3.0, 1.0).unwrap();
        assert_eq!(p.scale, 1.0);
        assert_eq!(p.contact, c);

        let p = place_at_relative_distance(CenteredCoord::new(100.0, 50.0), 10.0, 2.0).unwrap();
        assert_eq!(p.scale, 0.5);
        assert_eq!(p.contact, CenteredCoord::new(50.0, 30.0));

        assert!(place_at_relative_distance(c, 0.0, 0.0).is_err());
        assert!(place_at_relative_distance(c, 0.0, -1.0).is_err());
    }

    #[test]
    fn ground_profile_examples() {
        let plane = GroundPlaneModel::new(cam(), 4.0);
        let d = ground_disparity_profile(&plane, &[4.0, 104.0, -20.0]);
        assert_eq!(d[0], 0.0);
        assert_eq!(d[2], 0.0);
        // 0.54 * 100 / (1.65 * 1242), evaluated in 30-digit arithmetic: 0.0263504611330698287...
        assert!((d[1] - 0.026_350_461_133_069_83).abs() < 1e-15);

        let d = ground_disparity_profile(&plane, &[54.0, 104.0, 154.0]);
        assert!(((d[2] - d[1]) - (d[1] - d[0])).abs() < 1e-15);
    }

    #[test]
    fn camera_validation() {
        assert!(cam().validate().is_ok());
        let mut c = cam();
        c.cx_px = 1242.0;
        assert!(c.validate().is_err());
        let mut c = cam();
        c.baseline_m = 0.0;
        assert!(c.validate().is_err());
    }

    #[test]
    fn rotated_plane_matches_point_rotation() {
        let plane = GroundPlaneModel::new(cam(), -7.0).with_roll(1.0);
        let crop = plane.rotated(2.5);
        for &(u, v) in &[(10.0, 40.0), (-200.0, 90.0), (300.0, 5.0)] {
            let src = CenteredCoord::new(u, v).rotated(2.5f64.to_radians());
            let a = plane.depth_below_horizon(src);
            let b = crop.depth_below_horizon(CenteredCoord::new(u, v));
            assert!((a - b).abs() < 1e-9, "{a} vs {b}");
        }
    }

    proptest! {
        #[test]
        fn placement_round_trip(x in -600.0f64..600.0, dy in 1.0f64..180.0, h in -20.0f64..20.0, r in 0.05f64..20.0) {
            let c = CenteredCoord::new(x, h + dy);
            let z0 = depth_from_vertical_position(&cam(), c.y, h).unwrap();
            let p = place_at_relative_distance(c, h, r).unwrap();
            let z1 = depth_from_vertical_position(&cam(), p.contact.y, h).unwrap();
            prop_assert!((z1 - r * z0).abs() <= 1e-9 * r * z0);
        }

        #[test]
        fn placement_composes(x in -600.0f64..600.0, dy in 1.0f64..180.0, h in -20.0f64..20.0, a in 0.1f64..5.0, b in 0.1f64..5.0) {
            let c = CenteredCoord::new(x, h + dy);
            let ab = place_at_relative_distance(c, h, a * b).unwrap();
            let step = place_at_relative_distance(c, h, a).unwrap();
            let two = place_at_relative_distance(step.contact, h, b).unwrap();
            prop_assert!((two.contact.x - ab.contact.x).abs() <= 1e-9 * (1.0 + ab.contact.x.abs()));
            prop_assert!((two.contact.y - ab.contact.y).abs() <= 1e-9 * (1.0 + ab.contact.y.abs()));
            prop_assert!((step.scale * two.scale - ab.scale).abs() <= 1e-12);
        }

        #[test]
        fn profile_inverts_to_vertical_position(h in -20.0f64..20.0, dy in 0.5f64..200.0) {
            let plane = GroundPlaneModel::new(cam(), h);
            let d = ground_disparity_profile(&plane, &[h + dy])[0];
            let z = cam().disparity_to_depth(d);
            let z_ref = depth_from_vertical_position(&cam(), h + dy, h).unwrap();
            prop_assert!((z - z_ref).abs() <= 1e-9 * z_ref);
        }

        #[test]
        fn pixel_conversion_is_bijective(col in 0usize..1242, row in 0usize..375) {
            let c = CenteredCoord::from_pixel(col as f64, row as f64, 1242, 375);
            let (pc, pr) = c.to_pixel(1242, 375);
            prop_assert_eq!(pc, col as f64);
            prop_assert_eq!(pr, row as f64);
        }
    }
}
