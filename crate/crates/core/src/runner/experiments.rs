use std::collections::BTreeSet;
use std::sync::Arc;

use crate::geometry::GroundPlaneModel;
use crate::imgsynth::{
    add_shadow, apply_photometric, context_swap, crop_pitch, crop_pitch_mask, crop_roll, crop_roll_mask,
    edge_ablation, flip_vertical, paste_object, paste_shape, ClassColors, ObjectCutout, PlacementMode, ShapeFill,
};
use crate::modelio::Obstacle;
use crate::raster::{BitMask, ImageBuffer};

use super::dataset::{Dataset, SceneTruth};
use super::exec::{Family, Measure, Normalize};
use super::hints::{obstacle_at, obstacle_from_mask, scene_hint};
use super::spec::{ExperimentKind, ExperimentParams, ProbeDef};
use super::trial::TrialRecord;

/// What every planner loads for a scene.
struct SceneData {
    image: ImageBuffer,
    truth: Option<SceneTruth>,
    masks: Vec<BitMask>,
}

impl SceneData {
    fn load(data: &Dataset, id: &str) -> Result<Self, String> {
        let image = data.image(id).map_err(|e| e.to_string())?;
        let truth = data.truth(id).map_err(|e| e.to_string())?;
        let masks = data
            .obstacles(id, image.width(), image.height())
            .map_err(|e| e.to_string())?;
        Ok(Self { image, truth, masks })
    }

    fn plane(&self, p: &ExperimentParams) -> Option<GroundPlaneModel> {
        self.truth
            .map(|t| GroundPlaneModel::new(p.camera, t.horizon_y).with_roll(t.roll_deg))
    }
}

fn obstacles(plane: &GroundPlaneModel, masks: &[BitMask]) -> Vec<Obstacle> {
    masks.iter().filter_map(|m| obstacle_from_mask(plane, m)).collect()
}

fn flip_mask(m: &BitMask) -> BitMask {
    let h = m.height();
    BitMask::from_fn(m.width(), h, |c, r| m.get(c, h - 1 - r))
}

/// Pitch crops of one scene: horizon per crop, or obstacle disparity per
/// crop when `per_obstacle`.
pub(crate) fn plan_pitch(data: &Dataset, p: &ExperimentParams, id: &str, per_obstacle: bool) -> Family {
    let kind = if per_obstacle {
        ExperimentKind::PitchVsObstacleDisparity
    } else {
        ExperimentKind::PitchCrop
    };
    let template = TrialRecord::new(kind, id, id);
    let scene = match SceneData::load(data, id) {
        Ok(s) => s,
        Err(e) => return Family::failed(template, e),
    };
    if per_obstacle && scene.masks.is_empty() {
        return Family::failed(template, "scene has no obstacle masks");
    }
    let normalize = if per_obstacle {
        Normalize::OverReference
    } else {
        Normalize::Difference
    };
    let mut fam = Family::new(normalize);
    let plane = scene.plane(p);
    let n_obs = scene.masks.len();
    // trial index of the offset-0 trial of each obstacle (or the single horizon series)
    let slots = if per_obstacle { n_obs } else { 1 };
    let mut order: Vec<i64> = p.offsets_px.clone();
    order.sort_by_key(|o| *o != 0);
    let mut refs: Vec<Option<usize>> = vec![None; slots];
    for &off in &order {
        let trial = |k: usize| {
            let fam_name = if per_obstacle { format!("{id}/obstacle{k}") } else { id.to_string() };
            let mut t = TrialRecord::new(kind, id, fam_name);
            t.offset_px = Some(off);
            t.truth = Some(if per_obstacle { off as f64 } else { (-off) as f64 });
            t
        };
        let cropped = crop_pitch(&scene.image, off, p.pitch_crop).and_then(|img| {
            let masks = scene
                .masks
                .iter()
                .map(|m| crop_pitch_mask(m, off, p.pitch_crop))
                .collect::<Result<Vec<_>, _>>()?;
            Ok((img, masks))
        });
        let (img, masks) = match cropped {
            Ok(x) => x,
            Err(e) => {
                for k in 0..slots {
                    fam.push_skipped(trial(k), e.to_string());
                }
                continue;
            }
        };
        let hint = plane.map(|pl| {
            let shifted = pl.shifted(off as f64);
            scene_hint(p, shifted, obstacles(&shifted, &masks), 0)
        });
        let q = fam.push_query(img, hint);
        for k in 0..slots {
            let measure = if per_obstacle {
                if masks[k].is_empty() {
                    fam.push_skipped(trial(k), "obstacle left the crop");
                    continue;
                }
                Measure::MaskMean(masks[k].clone())
            } else {
                Measure::Horizon
            };
            let idx = fam.push_trial(trial(k), q, measure, refs[k]);
            if off == 0 {
                refs[k] = Some(idx);
                fam.trials[idx].reference = Some(idx);
            }
        }
    }
    fam
}

pub(crate) fn plan_pitch_natural(data: &Dataset, p: &ExperimentParams, id: &str) -> Family {
    let template = TrialRecord::new(ExperimentKind::PitchHorizonNatural, id, id);
    let scene = match SceneData::load(data, id) {
        Ok(s) => s,
        Err(e) => return Family::failed(template, e),
    };
    let Some(plane) = scene.plane(p) else {
        return Family::failed(template, "no ground-truth horizon");
    };
    let mut fam = Family::new(Normalize::None);
    let mut t = template;
    t.truth = Some(plane.horizon_y);
    let hint = scene_hint(p, plane, obstacles(&plane, &scene.masks), 0);
    let q = fam.push_query(scene.image, Some(hint));
    fam.push_trial(t, q, Measure::Horizon, None);
    fam
}

pub(crate) fn plan_roll(data: &Dataset, p: &ExperimentParams, id: &str) -> Family {
    let template = TrialRecord::new(ExperimentKind::RollCrop, id, id);
    let scene = match SceneData::load(data, id) {
        Ok(s) => s,
        Err(e) => return Family::failed(template, e),
    };
    let plane = scene.plane(p);
    let mut fam = Family::new(Normalize::Difference);
    let mut angles = p.roll_angles_deg.clone();
    angles.sort_by_key(|a| *a != 0.0);
    let mut reference = None;
    for &a in &angles {
        let mut t = TrialRecord::new(ExperimentKind::RollCrop, id, id);
        t.angle_deg = Some(a);
        t.truth = Some(0.0 - a);
        let cropped = crop_roll(&scene.image, a, p.roll_crop).and_then(|img| {
            let masks = scene
                .masks
                .iter()
                .map(|m| crop_roll_mask(m, a, p.roll_crop))
                .collect::<Result<Vec<_>, _>>()?;
            Ok((img, masks))
        });
        let (img, masks) = match cropped {
            Ok(x) => x,
            Err(e) => {
                fam.push_skipped(t, e.to_string());
                continue;
            }
        };
        let hint = plane.map(|pl| {
            let rolled = pl.rotated(a);
            scene_hint(p, rolled, obstacles(&rolled, &masks), 0)
        });
        let q = fam.push_query(img, hint);
        let idx = fam.push_trial(t, q, Measure::Roll, reference);
        if a == 0.0 {
            reference = Some(idx);
            fam.trials[idx].reference = Some(idx);
        }
    }
    fam
}

pub(crate) struct PasteKey {
    pub cutout: usize,
    pub slot: String,
    pub mode: PlacementMode,
}

pub(crate) fn paste_keys(cutouts: &[ObjectCutout], data: &Dataset, modes: &[PlacementMode]) -> Vec<PasteKey> {
    let mut keys = Vec::new();
    for (ci, c) in cutouts.iter().enumerate() {
        for slot in &c.placement_slots {
            if !data.contains(slot) {
                log::warn!("cutout {} names slot {slot}, which is not a dataset image", c.source_id);
                continue;
            }
            for &mode in modes {
                keys.push(PasteKey {
                    cutout: ci,
                    slot: slot.clone(),
                    mode,
                });
            }
        }
    }
    keys
}

pub(crate) fn plan_position(data: &Dataset, p: &ExperimentParams, cutouts: &[ObjectCutout], key: &PasteKey) -> Family {
    let cut = &cutouts[key.cutout];
    let family = format!("cutout{}:{}@{}/{}", key.cutout, cut.source_id, key.slot, key.mode);
    let template = TrialRecord::new(ExperimentKind::PositionVsScale, &key.slot, family.clone());
    let scene = match SceneData::load(data, &key.slot) {
        Ok(s) => s,
        Err(e) => return Family::failed(template, e),
    };
    let Some(plane) = scene.plane(p) else {
        return Family::failed(template, "no ground-truth horizon for the placement");
    };
    let scene_obs = obstacles(&plane, &scene.masks);
    let mut fam = Family::new(Normalize::ReferenceOver);
    let mut rs = p.r_values.clone();
    rs.sort_by_key(|r| *r != 1.0);
    let mut reference = None;
    for &r in &rs {
        let mut t = template.clone();
        t.r = Some(r);
        t.placement = Some(key.mode);
        t.truth = Some(r);
        let pasted = match paste_object(&scene.image, cut, key.mode, r, plane.horizon_y) {
            Ok(x) => x,
            Err(e) => {
                fam.push_skipped(t, e.to_string());
                continue;
            }
        };
        if pasted.measure_mask.is_empty() {
            fam.push_skipped(t, "measurement region left the frame");
            continue;
        }
        let mut obs = scene_obs.clone();
        obs.extend(obstacle_at(&plane, pasted.footprint.clone(), pasted.contact));
        let q = fam.push_query(pasted.image, Some(scene_hint(p, plane, obs, 0)));
        let idx = fam.push_trial(t, q, Measure::MaskMean(pasted.measure_mask), reference);
        if r == 1.0 {
            reference = Some(idx);
            fam.trials[idx].reference = Some(idx);
        }
    }
    fam
}

pub(crate) fn plan_photometric(
    data: &Dataset,
    p: &ExperimentParams,
    colors: Option<&ClassColors>,
    id: &str,
) -> Family {
    let template = TrialRecord::new(ExperimentKind::PhotometricSuite, id, id);
    let with_mode = |m| {
        let mut t = template.clone();
        t.photometric = Some(m);
        t
    };
    let mut fam = Family::new(Normalize::None);
    let loaded = SceneData::load(data, id).and_then(|s| {
        let gt = data.gt_map(id, p.eval.gt_kind).map_err(|e| e.to_string())?;
        let sem = data.semantic(id).map_err(|e| e.to_string())?;
        Ok((s, gt, sem))
    });
    let (scene, gt, sem) = match loaded {
        Ok(x) => x,
        Err(e) => {
            for &m in &p.photometric_modes {
                fam.push_skipped(with_mode(m), e.clone());
            }
            return fam;
        }
    };
    let Some(gt) = gt else {
        for &m in &p.photometric_modes {
            fam.push_skipped(with_mode(m), "no ground truth for this image");
        }
        return fam;
    };
    let gt = Arc::new(gt);
    let hint = scene.plane(p).map(|pl| scene_hint(p, pl, obstacles(&pl, &scene.masks), 0));
    for &m in &p.photometric_modes {
        match apply_photometric(&scene.image, m, sem.as_ref(), colors) {
            Ok(img) => {
                let q = fam.push_query(img, hint.clone());
                fam.push_trial(with_mode(m), q, Measure::Metrics(gt.clone()), None);
            }
            Err(e) => {
                fam.push_skipped(with_mode(m), e.to_string());
            }
        }
    }
    fam
}

pub(crate) enum ProbeKey {
    Scene { probe: usize, id: String },
    Cutout { probe: usize, cutout: usize },
}

pub(crate) fn probe_keys(probes: &[ProbeDef], cutouts: &[ObjectCutout], data: &Dataset) -> Vec<ProbeKey> {
    let mut keys = Vec::new();
    for (pi, def) in probes.iter().enumerate() {
        match def {
            ProbeDef::Shape { .. } => keys.extend(data.ids().iter().map(|id| ProbeKey::Scene { probe: pi, id: id.clone() })),
            _ => keys.extend((0..cutouts.len()).map(|ci| ProbeKey::Cutout { probe: pi, cutout: ci })),
        }
    }
    keys
}

/// The scene a cutout is shown on: its source when present, else its
/// first slot that is.
fn home_scene<'a>(cut: &'a ObjectCutout, data: &Dataset) -> Option<&'a str> {
    std::iter::once(&cut.source_id)
        .chain(&cut.placement_slots)
        .find(|id| data.contains(id))
        .map(|s| s.as_str())
}

pub(crate) fn plan_probe(
    data: &Dataset,
    p: &ExperimentParams,
    cutouts: &[ObjectCutout],
    key: &ProbeKey,
) -> Family {
    let (pi, id) = match key {
        ProbeKey::Scene { probe, id } => (*probe, id.clone()),
        ProbeKey::Cutout { probe, cutout } => match home_scene(&cutouts[*cutout], data) {
            Some(id) => (*probe, id.to_string()),
            None => {
                let def = &p.probes[*probe];
                let mut t = TrialRecord::new(ExperimentKind::RecognitionProbes, "", def.id());
                t.probe_id = Some(def.id().to_string());
                return Family::failed(t, "cutout has no scene in the dataset");
            }
        },
    };
    let def = &p.probes[pi];
    let family = match key {
        ProbeKey::Scene { .. } => format!("{}@{id}", def.id()),
        ProbeKey::Cutout { cutout, .. } => format!("{}:cutout{cutout}@{id}", def.id()),
    };
    let mut t = TrialRecord::new(ExperimentKind::RecognitionProbes, &id, family);
    t.probe_id = Some(def.id().to_string());
    let scene = match SceneData::load(data, &id) {
        Ok(s) => s,
        Err(e) => return Family::failed(t, e),
    };
    let plane = scene.plane(p);
    let horizon = plane.map_or(0.0, |pl| pl.horizon_y);
    let made = match (def, key) {
        (ProbeDef::Shape { polygon, color, .. }, _) => {
            paste_shape(&scene.image, polygon, &ShapeFill::Solid(*color)).map(|s| (s.image, s.mask, s.ground_contact))
        }
        (ProbeDef::EdgeAblation { keep, band_px, .. }, ProbeKey::Cutout { cutout, .. }) => {
            let cut = &cutouts[*cutout];
            let keep: BTreeSet<_> = keep.iter().copied().collect();
            paste_object(&scene.image, cut, PlacementMode::PositionAndScale, 1.0, horizon).and_then(|full| {
                let ab = edge_ablation(&scene.image, cut, &keep, *band_px)?;
                Ok((ab.image, full.footprint, full.contact))
            })
        }
        (ProbeDef::Shadow { shadow, .. }, ProbeKey::Cutout { cutout, .. }) => {
            paste_object(&scene.image, &cutouts[*cutout], PlacementMode::PositionAndScale, 1.0, horizon).and_then(|pasted| {
                let bbox = pasted
                    .footprint
                    .bounding_box()
                    .ok_or_else(|| crate::imgsynth::SynthError::Placement("object left the frame".into()))?;
                let img = add_shadow(&pasted.image, bbox, *shadow)?;
                Ok((img, pasted.footprint, pasted.contact))
            })
        }
        _ => unreachable!("cutout probes are keyed by cutout"),
    };
    let (img, footprint, contact) = match made {
        Ok(x) => x,
        Err(e) => return Family::failed(t, e.to_string()),
    };
    if footprint.is_empty() {
        return Family::failed(t, "probe footprint is empty");
    }
    let mut fam = Family::new(Normalize::None);
    fam.panels = true;
    let (bg_hint, probe_hint) = match plane {
        Some(pl) => {
            let scene_obs = obstacles(&pl, &scene.masks);
            let mut with = scene_obs.clone();
            if def.register() {
                with.extend(obstacle_at(&pl, footprint.clone(), contact));
            }
            let d = pl.disparity_at(contact);
            if d > 0.0 {
                t.implied_distance_m = Some(pl.camera.disparity_to_depth(d));
            }
            (Some(scene_hint(p, pl, scene_obs, 0)), Some(scene_hint(p, pl, with, 0)))
        }
        None => (None, None),
    };
    let bg = fam.push_query(scene.image, bg_hint);
    let q = fam.push_query(img, probe_hint);
    fam.push_trial(t, q, Measure::Detection { footprint, background: bg }, None);
    fam
}

pub(crate) enum ContextKey {
    Context(usize),
    Flip(String),
}

pub(crate) fn context_keys(cutouts: &[ObjectCutout], data: &Dataset) -> Vec<ContextKey> {
    (0..cutouts.len())
        .map(ContextKey::Context)
        .chain(data.ids().iter().map(|id| ContextKey::Flip(id.clone())))
        .collect()
}

pub(crate) fn plan_context(data: &Dataset, p: &ExperimentParams, cutouts: &[ObjectCutout], key: &ContextKey) -> Family {
    match key {
        ContextKey::Context(ci) => plan_context_swap(data, p, &cutouts[*ci], *ci),
        ContextKey::Flip(id) => plan_flip(data, p, id),
    }
}

fn plan_context_swap(data: &Dataset, p: &ExperimentParams, cut: &ObjectCutout, ci: usize) -> Family {
    let home = cut.source_id.as_str();
    let mut template = TrialRecord::new(ExperimentKind::ContextAndFlip, home, format!("cutout{ci}:{home}"));
    template.probe_id = Some("context_reference".into());
    if !data.contains(home) {
        return Family::failed(template, "cutout source scene is not in the dataset");
    }
    let mut fam = Family::new(Normalize::OverReference);
    let mut reference = None;
    let targets = std::iter::once(home).chain(cut.placement_slots.iter().map(|s| s.as_str()).filter(|s| *s != home));
    for target in targets {
        let mut t = template.clone();
        t.image_id = target.to_string();
        if target != home {
            t.probe_id = Some("context".into());
            t.family = format!("cutout{ci}:{home}->{target}");
        }
        if !data.contains(target) {
            fam.push_skipped(t, "slot is not a dataset image");
            continue;
        }
        if target != home && reference.is_none() {
            fam.push_skipped(t, "reference placement failed");
            continue;
        }
        let scene = match SceneData::load(data, target) {
            Ok(s) => s,
            Err(e) => {
                fam.push_skipped(t, e);
                continue;
            }
        };
        let Some(plane) = scene.plane(p) else {
            fam.push_skipped(t, "no ground-truth horizon");
            continue;
        };
        let pasted = if target == home {
            paste_object(&scene.image, cut, PlacementMode::PositionAndScale, 1.0, plane.horizon_y)
        } else {
            context_swap(cut, &scene.image, target, plane.horizon_y)
        };
        let pasted = match pasted {
            Ok(x) if !x.measure_mask.is_empty() => x,
            Ok(_) => {
                fam.push_skipped(t, "measurement region left the frame");
                continue;
            }
            Err(e) => {
                fam.push_skipped(t, e.to_string());
                continue;
            }
        };
        let mut obs = obstacles(&plane, &scene.masks);
        obs.extend(obstacle_at(&plane, pasted.footprint.clone(), pasted.contact));
        let q = fam.push_query(pasted.image, Some(scene_hint(p, plane, obs, 0)));
        let idx = fam.push_trial(t, q, Measure::MaskMean(pasted.measure_mask), reference);
        if target == home {
            reference = Some(idx);
            fam.trials[idx].reference = Some(idx);
        }
    }
    fam
}

fn plan_flip(data: &Dataset, p: &ExperimentParams, id: &str) -> Family {
    let mut template = TrialRecord::new(ExperimentKind::ContextAndFlip, id, format!("flip:{id}"));
    template.probe_id = Some("flip_reference".into());
    let scene = match SceneData::load(data, id) {
        Ok(s) => s,
        Err(e) => return Family::failed(template, e),
    };
    let (w, h) = (scene.image.width(), scene.image.height());
    let region = p.ground_region.resolve(w, h);
    let mask = BitMask::from_fn(w, h, |c, r| region.contains(c, r));
    let plane = scene.plane(p);
    let hints = plane.map(|pl| {
        // upside down: ground above the mirrored horizon
        let flipped = GroundPlaneModel {
            horizon_y: -pl.horizon_y,
            roll_deg: 180.0 - pl.roll_deg,
            camera: pl.camera,
        };
        let fmasks: Vec<BitMask> = scene.masks.iter().map(flip_mask).collect();
        (
            scene_hint(p, pl, obstacles(&pl, &scene.masks), 0),
            scene_hint(p, flipped, obstacles(&flipped, &fmasks), 0),
        )
    });
    let (h0, h1) = match hints {
        Some((a, b)) => (Some(a), Some(b)),
        None => (None, None),
    };
    let mut fam = Family::new(Normalize::OverReference);
    let flipped_img = flip_vertical(&scene.image);
    let q0 = fam.push_query(scene.image, h0);
    let q1 = fam.push_query(flipped_img, h1);
    let r = fam.push_trial(template.clone(), q0, Measure::MaskMean(mask.clone()), None);
    fam.trials[r].reference = Some(r);
    let mut t = template;
    t.probe_id = Some("flip".into());
    fam.push_trial(t, q1, Measure::MaskMean(flip_mask(&mask)), Some(r));
    fam
}
