//! Seeded synthetic street scenes with known geometry.
//!
//! Each scene is a sky/road frame with a jittered horizon, dashed lane
//! markings, up to two boxy obstacles standing in the side lanes and one
//! car cutout lying closer in the central lanes. Obstacles sit at
//! `|x|` in [330, 520] px and 12-35 m so they neither reach the default
//! horizon-fit region nor the default roll disparity band.

use std::collections::BTreeMap;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::geometry::{CameraModel, CenteredCoord, GroundPlaneModel};
use crate::imgsynth::library::{save_cutout, save_semantic};
use crate::imgsynth::{round_contact, ObjectCutout, SemanticMap};
use crate::modelio::{render_oracle, wire, OracleSpec};
use crate::pngio;
use crate::raster::{BitMask, DepthMap, ImageBuffer, Rgb, RgbaImage};

use super::dataset::{write_depth_png, DatasetLayout, SceneTruth};
use super::hints::obstacle_from_mask;
use super::RunnerError;

pub const LABEL_SKY: u16 = 0;
pub const LABEL_ROAD: u16 = 1;
pub const LABEL_VEGETATION: u16 = 2;
pub const LABEL_CAR: u16 = 3;

const LANE_LINES_M: [f64; 4] = [-5.25, -1.75, 1.75, 5.25];
const ROAD_HALF_WIDTH_M: f64 = 7.0;
const CAR_WIDTH_M: f64 = 1.8;
const CAR_HEIGHT_M: f64 = 1.5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthConfig {
    pub n_scenes: usize,
    pub seed: u64,
    pub camera: CameraModel,
    /// Horizon rows are drawn uniformly from `[-jitter, jitter]`.
    pub horizon_jitter_px: f64,
    pub max_obstacles: usize,
    /// The cutout's own scene plus the following scenes, cyclically.
    pub slots_per_cutout: usize,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            n_scenes: 20,
            seed: 0,
            camera: CameraModel::default(),
            horizon_jitter_px: 10.0,
            max_obstacles: 2,
            slots_per_cutout: 2,
        }
    }
}

pub fn scene_id(i: usize) -> String {
    format!("scene_{i:03}")
}

struct Scene {
    image: ImageBuffer,
    labels: Vec<u16>,
    truth: SceneTruth,
    obstacles: Vec<BitMask>,
    cutout: ObjectCutout,
}

fn palette() -> BTreeMap<u16, Rgb> {
    BTreeMap::from([
        (LABEL_SKY, Rgb([70, 130, 180])),
        (LABEL_ROAD, Rgb([128, 64, 128])),
        (LABEL_VEGETATION, Rgb([107, 142, 35])),
        (LABEL_CAR, Rgb([0, 0, 142])),
    ])
}

fn label_names() -> BTreeMap<u16, String> {
    BTreeMap::from([
        (LABEL_SKY, "sky".to_string()),
        (LABEL_ROAD, "road".to_string()),
        (LABEL_VEGETATION, "vegetation".to_string()),
        (LABEL_CAR, "car".to_string()),
    ])
}

fn jitter(rng: &mut ChaCha8Rng, base: [u8; 3], amp: i32) -> Rgb {
    Rgb(base.map(|c| (c as i32 + rng.random_range(-amp..=amp)).clamp(0, 255) as u8))
}

fn random_paint(rng: &mut ChaCha8Rng) -> [u8; 3] {
    [rng.random_range(40..220), rng.random_range(40..220), rng.random_range(40..220)]
}

fn background(rng: &mut ChaCha8Rng, cam: &CameraModel, h: f64) -> (ImageBuffer, Vec<u16>) {
    let (w, hh) = (cam.image_w_px, cam.image_h_px);
    let mut img = ImageBuffer::new(w, hh, Rgb::BLACK).expect("camera size is valid");
    let mut labels = vec![LABEL_SKY; w * hh];
    for row in 0..hh {
        for col in 0..w {
            let p = CenteredCoord::from_pixel(col as f64, row as f64, w, hh);
            let dy = p.y - h;
            let (px, label) = if dy <= 0.0 {
                let t = ((p.y + hh as f64 / 2.0) / hh as f64).clamp(0.0, 1.0);
                let base = [(90.0 + 60.0 * t) as u8, (150.0 + 40.0 * t) as u8, 225];
                (jitter(rng, base, 2), LABEL_SKY)
            } else {
                // lateral position on the ground, in meters
                let lateral = p.x * cam.cam_height_m / dy;
                let depth = cam.f_px * cam.cam_height_m / dy;
                if lateral.abs() > ROAD_HALF_WIDTH_M {
                    (jitter(rng, [70, 110, 45], 12), LABEL_VEGETATION)
                } else {
                    let on_line = LANE_LINES_M.iter().any(|&x| (lateral - x).abs() < 0.08);
                    let dashed = (depth / 4.0).floor() as i64 % 2 == 0;
                    if on_line && dashed {
                        (jitter(rng, [225, 225, 220], 6), LABEL_ROAD)
                    } else {
                        (jitter(rng, [100, 100, 104], 10), LABEL_ROAD)
                    }
                }
            };
            img.set(col, row, px);
            labels[row * w + col] = label;
        }
    }
    (img, labels)
}

/// Axis-aligned box on the pixel grid: columns `c0..c1`, rows `r0..=r_bottom`.
struct PixBox {
    c0: usize,
    c1: usize,
    r0: usize,
    r_bottom: usize,
}

fn standing_box(cam: &CameraModel, h: f64, x_center: f64, depth_m: f64) -> PixBox {
    let (w, hh) = (cam.image_w_px as f64, cam.image_h_px as f64);
    let ground_row = (hh - 1.0) / 2.0 + h + cam.f_px * cam.cam_height_m / depth_m;
    let r_bottom = ground_row.round() as usize;
    let hpx = (cam.f_px * CAR_HEIGHT_M / depth_m).round() as usize;
    let wpx = (cam.f_px * CAR_WIDTH_M / depth_m).round();
    let c0 = ((w - 1.0) / 2.0 + x_center - wpx / 2.0).round() as usize;
    PixBox {
        c0,
        c1: c0 + wpx as usize,
        r0: r_bottom + 1 - hpx,
        r_bottom,
    }
}

fn paint_obstacle(rng: &mut ChaCha8Rng, img: &mut ImageBuffer, labels: &mut [u16], b: &PixBox) -> BitMask {
    let paint = random_paint(rng);
    let window_row = b.r0 + (b.r_bottom - b.r0) * 2 / 5;
    let mut mask = BitMask::new(img.width(), img.height());
    for row in b.r0..=b.r_bottom {
        for col in b.c0..b.c1 {
            let base = if row < window_row { [40, 50, 60] } else { paint };
            img.set(col, row, jitter(rng, base, 4));
            labels[row * img.width() + col] = LABEL_CAR;
            mask.set(col, row, true);
        }
    }
    mask
}

fn car_cutout(rng: &mut ChaCha8Rng, cam: &CameraModel, h: f64, id: &str, slots: Vec<String>) -> ObjectCutout {
    let (w, hh) = (cam.image_w_px, cam.image_h_px);
    let depth = rng.random_range(7.0..10.0);
    let x = rng.random_range(-150.0..150.0);
    let contact = round_contact(
        CenteredCoord::new(x, h + cam.f_px * cam.cam_height_m / depth),
        w,
        hh,
    );
    let sw = (cam.f_px * CAR_WIDTH_M / depth).round() as usize;
    let sh = (cam.f_px * CAR_HEIGHT_M / depth).round() as usize;
    let half = ((sw - 1) / 2) as f64;
    let origin = CenteredCoord::new(contact.x - half, contact.y - (sh - 1) as f64);
    let paint = random_paint(rng);
    let (fw, fh) = (sw as f64, sh as f64);
    let sprite = RgbaImage::from_fn(sw, sh, |c, r| {
        let (u, v) = ((c as f64 + 0.5) / fw, (r as f64 + 0.5) / fh);
        let cabin = (0.08..0.45).contains(&v) && (0.18..0.82).contains(&u);
        let body = v >= 0.45;
        if !(cabin || body) {
            return [0, 0, 0, 0];
        }
        let wheel = v >= 0.86 && !(0.22..0.78).contains(&u);
        let px = if wheel {
            [20, 20, 20]
        } else if cabin && (0.24..0.76).contains(&u) && v >= 0.14 {
            [45, 60, 75]
        } else {
            paint
        };
        [px[0], px[1], px[2], 255]
    })
    .expect("sprite size is valid");
    let measure_mask = BitMask::from_fn(sw, sh, |c, r| {
        let (u, v) = ((c as f64 + 0.5) / fw, (r as f64 + 0.5) / fh);
        (0.55..0.80).contains(&v) && (0.30..0.70).contains(&u)
    });
    ObjectCutout {
        sprite,
        sprite_origin: origin,
        ground_contact: contact,
        source_id: id.to_string(),
        class_label: "car".to_string(),
        placement_slots: slots,
        measure_mask,
    }
}

fn scene(cfg: &SynthConfig, i: usize) -> Scene {
    let cam = &cfg.camera;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ (i as u64 + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15));
    let h = if cfg.horizon_jitter_px > 0.0 {
        rng.random_range(-cfg.horizon_jitter_px..=cfg.horizon_jitter_px)
    } else {
        0.0
    };
    let (mut image, mut labels) = background(&mut rng, cam, h);
    let n_obs = rng.random_range(0..=cfg.max_obstacles.min(2));
    let first_side = if rng.random_bool(0.5) { 1.0 } else { -1.0 };
    let mut obstacles = Vec::new();
    for k in 0..n_obs {
        let side = if k == 0 { first_side } else { -first_side };
        let depth = rng.random_range(12.0..35.0);
        let wpx = cam.f_px * CAR_WIDTH_M / depth;
        let x = side * (330.0 + wpx / 2.0 + rng.random_range(0.0..1.0) * (190.0 - wpx));
        let b = standing_box(cam, h, x, depth);
        obstacles.push(paint_obstacle(&mut rng, &mut image, &mut labels, &b));
    }
    let slots = (0..cfg.slots_per_cutout.clamp(1, cfg.n_scenes))
        .map(|k| scene_id((i + k) % cfg.n_scenes))
        .collect();
    let cutout = car_cutout(&mut rng, cam, h, &scene_id(i), slots);
    Scene {
        image,
        labels,
        truth: SceneTruth { horizon_y: h, roll_deg: 0.0 },
        obstacles,
        cutout,
    }
}

fn mkdir(p: &Path) -> Result<(), RunnerError> {
    std::fs::create_dir_all(p).map_err(|e| RunnerError::io(p, e))
}

/// Write `cfg.n_scenes` scenes under `root` in the conventional layout.
pub fn generate_dataset(root: &Path, cfg: &SynthConfig) -> Result<DatasetLayout, RunnerError> {
    if cfg.n_scenes == 0 {
        return Err(RunnerError::Config("n_scenes must be at least 1".into()));
    }
    cfg.camera.validate().map_err(|e| RunnerError::Config(e.to_string()))?;
    if cfg.camera != CameraModel::default() {
        log::warn!("synthetic scene layout is tuned for the default camera");
    }
    for sub in ["images", "cutouts", "semantic", "gt", "obstacles"] {
        mkdir(&root.join(sub))?;
    }
    let layout = DatasetLayout::from_root(root);
    let (w, h) = (cfg.camera.image_w_px, cfg.camera.image_h_px);
    for i in 0..cfg.n_scenes {
        let id = scene_id(i);
        let s = scene(cfg, i);
        let img_path = layout.images_dir.join(format!("{id}.png"));
        pngio::write_rgb(&img_path, &s.image).map_err(|e| RunnerError::Dataset(e.to_string()))?;

        let sem = SemanticMap::new(w, h, s.labels, palette())?;
        let sem_dir = root.join("semantic");
        save_semantic(&sem_dir.join(format!("{id}.png")), &sem_dir.join("labels.json"), &sem, &label_names())
            .map_err(|e| RunnerError::Dataset(e.to_string()))?;

        let gt_dir = root.join("gt");
        let truth_path = gt_dir.join(format!("{id}.json"));
        let truth = serde_json::to_vec_pretty(&s.truth).expect("truth serializes");
        std::fs::write(&truth_path, truth).map_err(|e| RunnerError::io(&truth_path, e))?;

        let plane = GroundPlaneModel::new(cfg.camera, s.truth.horizon_y);
        let mut spec = OracleSpec::geometry_aware(plane);
        spec.obstacles = s.obstacles.iter().filter_map(|m| obstacle_from_mask(&plane, m)).collect();
        let gt = render_oracle(&spec, w, h, 0)?;
        wire::write_disparity(&gt_dir, &id, &gt)?;
        let depth: Vec<f64> = gt
            .values()
            .iter()
            .map(|&d| if d > 0.0 { cfg.camera.disparity_to_depth(d) } else { 0.0 })
            .collect();
        write_depth_png(&gt_dir.join(format!("{id}.depth.png")), &DepthMap::new(w, h, depth)?)?;

        let obs_dir = root.join("obstacles").join(&id);
        mkdir(&obs_dir)?;
        for (k, m) in s.obstacles.iter().enumerate() {
            let p = obs_dir.join(format!("{k}.png"));
            pngio::write_mask(&p, m).map_err(|e| RunnerError::Dataset(e.to_string()))?;
        }
        save_cutout(&layout.cutouts_dir, &format!("car_{id}"), &s.cutout)
            .map_err(|e| RunnerError::Dataset(e.to_string()))?;
    }
    Ok(DatasetLayout::from_root(root))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::runner::dataset::Dataset;

    fn small(n: usize) -> SynthConfig {
        SynthConfig { n_scenes: n, seed: 3, ..SynthConfig::default() }
    }

    #[test]
    fn generated_dataset_opens_and_is_consistent() {
        let dir = tempfile::tempdir().unwrap();
        generate_dataset(dir.path(), &small(3)).unwrap();
        let ds = Dataset::open_root(dir.path()).unwrap();
        assert_eq!(ds.ids(), ["scene_000", "scene_001", "scene_002"]);
        let cuts = ds.cutouts().unwrap();
        assert_eq!(cuts.len(), 3);
        for (id, c) in ds.ids().iter().zip(&cuts) {
            c.validate().unwrap();
            assert_eq!(&c.source_id, id);
            assert_eq!(c.placement_slots.len(), 2);
            let t = ds.truth(id).unwrap().unwrap();
            assert!(t.horizon_y.abs() <= 10.0);
            // close enough for the vertical-position cue to survive rounding at r = 3
            assert!(c.ground_contact.y - t.horizon_y > 100.0);
            let sem = ds.semantic(id).unwrap().unwrap();
            assert_eq!((sem.width, sem.height), (1242, 375));
            for m in ds.obstacles(id, 1242, 375).unwrap() {
                let b = m.bounding_box().unwrap();
                let (left, right) = (b.x0 as f64 - 620.5, (b.x1() - 1) as f64 - 620.5);
                assert!(left.abs().min(right.abs()) >= 329.0, "{left} {right}");
                assert!(left.abs().max(right.abs()) <= 521.0, "{left} {right}");
            }
        }
    }

    #[test]
    fn generation_is_deterministic() {
        let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
        generate_dataset(a.path(), &small(2)).unwrap();
        generate_dataset(b.path(), &small(2)).unwrap();
        for rel in ["images/scene_001.png", "gt/scene_001.disp.png", "cutouts/car_scene_000.json"] {
            assert_eq!(std::fs::read(a.path().join(rel)).unwrap(), std::fs::read(b.path().join(rel)).unwrap());
        }
    }

    #[test]
    fn obstacle_disparities_stay_out_of_the_roll_band() {
        let cam = CameraModel::default();
        for depth in [12.0, 35.0] {
            let d = cam.depth_to_disparity(depth);
            assert!(d < 0.030 && d > 0.008, "{d}");
        }
    }
}
