//! Box-aware spatial augmentation with response regeneration, and CLAHE for
//! the train and eval preprocessing paths.

mod clahe;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bbox::{BoxError, NormBox, Rect};
use crate::record::InstructionInstance;
use crate::taskgen::render_instruction;

pub use clahe::{clahe, resize_bilinear, IntensityGrid};

pub const EVAL_CLAHE_CLIP: f64 = 3.0;
pub const EVAL_CLAHE_GRID: (usize, usize) = (8, 8);
pub const EVAL_SIZE: (usize, usize) = (448, 448);

/// Boxes narrower than this print as a zero dimension at two decimals.
const MIN_PRINTABLE: f64 = 0.005;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum AugError {
    #[error("tile grid {grid:?} too fine for a {width}x{height} image")]
    GridTooFine { width: usize, height: usize, grid: (usize, usize) },
    #[error("clip limit must be positive, got {0}")]
    InvalidClipLimit(f64),
    #[error("invalid intensity grid: {0}")]
    InvalidGrid(String),
    #[error("invalid augmentation policy: {0}")]
    InvalidPolicy(String),
    #[error("invalid crop rectangle: {0}")]
    InvalidCrop(String),
}

/// Translation as image fractions, per-axis scale, rotation in degrees.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AffineParams {
    pub tx: f64,
    pub ty: f64,
    pub sx: f64,
    pub sy: f64,
    pub theta: f64,
}

impl AffineParams {
    pub const IDENTITY: AffineParams = AffineParams { tx: 0.0, ty: 0.0, sx: 1.0, sy: 1.0, theta: 0.0 };

    pub fn translation(tx: f64, ty: f64) -> Self {
        AffineParams { tx, ty, ..Self::IDENTITY }
    }

    fn map(&self, x: f64, y: f64) -> (f64, f64) {
        let dx = (x - 0.5) * self.sx;
        let dy = (y - 0.5) * self.sy;
        if self.theta == 0.0 {
            return (dx + 0.5 + self.tx, dy + 0.5 + self.ty);
        }
        let (s, c) = self.theta.to_radians().sin_cos();
        (dx * c - dy * s + 0.5 + self.tx, dx * s + dy * c + 0.5 + self.ty)
    }
}

/// Transforms the corners about the image center (scale, rotate, translate)
/// and returns their axis-aligned hull clamped to the frame.
pub fn apply_affine_to_box(b: &NormBox, a: &AffineParams) -> Result<NormBox, BoxError> {
    affine_hull(b, a)?.clamp()
}

fn affine_hull(b: &NormBox, a: &AffineParams) -> Result<NormBox, BoxError> {
    if *a == AffineParams::IDENTITY {
        return Ok(*b);
    }
    let (x1, y1, x2, y2) = b.corners();
    let pts = [a.map(x1, y1), a.map(x2, y1), a.map(x1, y2), a.map(x2, y2)];
    let (mut lx, mut ly, mut hx, mut hy) = (f64::INFINITY, f64::INFINITY, f64::NEG_INFINITY, f64::NEG_INFINITY);
    for (x, y) in pts {
        lx = lx.min(x);
        ly = ly.min(y);
        hx = hx.max(x);
        hy = hy.max(y);
    }
    NormBox::from_corners(lx, ly, hx, hy)
}

/// Crop window in normalized corners; must lie in the frame with positive area.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CropRect {
    pub x1: f64,
    pub y1: f64,
    pub x2: f64,
    pub y2: f64,
}

impl CropRect {
    pub const FULL: CropRect = CropRect { x1: 0.0, y1: 0.0, x2: 1.0, y2: 1.0 };

    pub fn new(x1: f64, y1: f64, x2: f64, y2: f64) -> Result<Self, AugError> {
        let c = CropRect { x1, y1, x2, y2 };
        let finite = [x1, y1, x2, y2].iter().all(|v| v.is_finite());
        if !finite || x1 < 0.0 || y1 < 0.0 || x2 > 1.0 || y2 > 1.0 || x2 <= x1 || y2 <= y1 {
            return Err(AugError::InvalidCrop(format!("{c:?}")));
        }
        Ok(c)
    }

    fn rect(&self) -> Rect {
        Rect::new(self.x1, self.y1, self.x2, self.y2)
    }
}

/// Result of mapping a box list through a crop.
#[derive(Debug, Clone, PartialEq)]
pub struct CropOutcome {
    pub boxes: Vec<NormBox>,
    pub dropped: usize,
    /// Set when a non-empty input lost every box.
    pub fallback: bool,
}

/// Maps boxes into the crop window rescaled to the full frame. Boxes keeping
/// less than `min_visibility` of their area are dropped.
pub fn random_resized_crop(boxes: &[NormBox], crop: &CropRect, min_visibility: f64) -> CropOutcome {
    let cw = crop.x2 - crop.x1;
    let ch = crop.y2 - crop.y1;
    let mut out = Vec::with_capacity(boxes.len());
    for b in boxes {
        let kept = b.rect().intersect(&crop.rect()).filter(|r| r.area() / b.area() >= min_visibility).and_then(|r| {
            NormBox::from_corners((r.x1 - crop.x1) / cw, (r.y1 - crop.y1) / ch, (r.x2 - crop.x1) / cw, (r.y2 - crop.y1) / ch)
                .and_then(|nb| nb.clamp())
                .ok()
        });
        out.extend(kept);
    }
    CropOutcome { dropped: boxes.len() - out.len(), fallback: !boxes.is_empty() && out.is_empty(), boxes: out }
}

/// Training augmentation policy. Horizontal flip is not offered.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AugPolicy {
    pub p_clahe: f64,
    pub clahe_clip_range: [f64; 2],
    pub clahe_grid: (usize, usize),
    pub p_crop: f64,
    pub p_affine: f64,
    pub p_bypass: f64,
    pub min_box_visibility: f64,
    pub crop_scale: [f64; 2],
    pub crop_aspect: [f64; 2],
    pub max_translate: f64,
    pub scale_range: [f64; 2],
    pub max_rotation_deg: f64,
}

impl Default for AugPolicy {
    fn default() -> Self {
        AugPolicy {
            p_clahe: 0.5,
            clahe_clip_range: [1.0, 4.0],
            clahe_grid: (8, 8),
            p_crop: 0.3,
            p_affine: 0.5,
            p_bypass: 0.3,
            min_box_visibility: 0.25,
            crop_scale: [0.8, 1.0],
            crop_aspect: [0.9, 1.1],
            max_translate: 0.1,
            scale_range: [0.9, 1.1],
            max_rotation_deg: 15.0,
        }
    }
}

impl AugPolicy {
    pub fn validate(&self) -> Result<(), AugError> {
        let bad = |m: String| Err(AugError::InvalidPolicy(m));
        for (name, p) in [
            ("p_clahe", self.p_clahe),
            ("p_crop", self.p_crop),
            ("p_affine", self.p_affine),
            ("p_bypass", self.p_bypass),
            ("min_box_visibility", self.min_box_visibility),
        ] {
            if !(0.0..=1.0).contains(&p) {
                return bad(format!("{name} = {p} is outside [0, 1]"));
            }
        }
        for (name, [lo, hi]) in [
            ("clahe_clip_range", self.clahe_clip_range),
            ("crop_scale", self.crop_scale),
            ("crop_aspect", self.crop_aspect),
            ("scale_range", self.scale_range),
        ] {
            if !(lo.is_finite() && hi.is_finite() && lo > 0.0 && lo <= hi) {
                return bad(format!("{name} = [{lo}, {hi}] is not a positive range"));
            }
        }
        if self.crop_scale[1] > 1.0 {
            return bad("crop_scale upper bound exceeds 1".into());
        }
        if !(0.0..0.5).contains(&self.max_translate) || !(0.0..=180.0).contains(&self.max_rotation_deg) {
            return bad("translation or rotation bound out of range".into());
        }
        if self.clahe_grid.0 == 0 || self.clahe_grid.1 == 0 {
            return bad("clahe_grid has a zero dimension".into());
        }
        Ok(())
    }

    fn sample_crop(&self, rng: &mut ChaCha8Rng) -> CropRect {
        let scale = rng.random_range(self.crop_scale[0]..=self.crop_scale[1]);
        let (la, ha) = (self.crop_aspect[0].ln(), self.crop_aspect[1].ln());
        let aspect = rng.random_range(la..=ha).exp();
        let w = (scale * aspect).sqrt().min(1.0);
        let h = (scale / aspect).sqrt().min(1.0);
        let x1 = rng.random_range(0.0..=1.0 - w);
        let y1 = rng.random_range(0.0..=1.0 - h);
        CropRect { x1, y1, x2: (x1 + w).min(1.0), y2: (y1 + h).min(1.0) }
    }

    fn sample_affine(&self, rng: &mut ChaCha8Rng) -> AffineParams {
        let t = self.max_translate;
        let r = self.max_rotation_deg;
        AffineParams {
            tx: rng.random_range(-t..=t),
            ty: rng.random_range(-t..=t),
            sx: rng.random_range(self.scale_range[0]..=self.scale_range[1]),
            sy: rng.random_range(self.scale_range[0]..=self.scale_range[1]),
            theta: rng.random_range(-r..=r),
        }
    }
}

/// The transforms drawn for one instance. An image pipeline replays these on
/// the pixels; `crop` and `affine` are `None` whenever boxes were untouched.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AppliedAugmentation {
    pub seed: u64,
    pub bypass: bool,
    pub clahe_clip: Option<f64>,
    pub clahe_grid: (usize, usize),
    pub crop: Option<CropRect>,
    pub affine: Option<AffineParams>,
    pub fallback: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AugmentOutcome {
    pub instance: InstructionInstance,
    pub applied: AppliedAugmentation,
}

/// Full draw for `seed` under `policy`, before any box is touched.
pub fn draw_augmentation(policy: &AugPolicy, seed: u64) -> AppliedAugmentation {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut applied = AppliedAugmentation {
        seed,
        bypass: false,
        clahe_clip: None,
        clahe_grid: policy.clahe_grid,
        crop: None,
        affine: None,
        fallback: false,
    };
    if rng.random_bool(policy.p_bypass) {
        applied.bypass = true;
        applied.clahe_clip = Some(EVAL_CLAHE_CLIP);
        applied.clahe_grid = EVAL_CLAHE_GRID;
        return applied;
    }
    if rng.random_bool(policy.p_clahe) {
        applied.clahe_clip = Some(rng.random_range(policy.clahe_clip_range[0]..=policy.clahe_clip_range[1]));
    }
    if rng.random_bool(policy.p_crop) {
        applied.crop = Some(policy.sample_crop(&mut rng));
    }
    if rng.random_bool(policy.p_affine) {
        applied.affine = Some(policy.sample_affine(&mut rng));
    }
    applied
}

/// Crop then affine on one box list; `None` when a non-empty list loses
/// every box or a survivor would print with a zero dimension.
fn transform_boxes(boxes: &[NormBox], crop: Option<&CropRect>, affine: Option<&AffineParams>, min_vis: f64) -> Option<Vec<NormBox>> {
    if boxes.is_empty() {
        return Some(Vec::new());
    }
    let mut current = boxes.to_vec();
    if let Some(c) = crop {
        let out = random_resized_crop(&current, c, min_vis);
        if out.fallback {
            return None;
        }
        current = out.boxes;
    }
    if let Some(a) = affine {
        let mut next = Vec::with_capacity(current.len());
        for b in &current {
            let Ok(hull) = affine_hull(b, a) else { continue };
            let Ok(clamped) = hull.clamp() else { continue };
            if clamped.area() / hull.area() >= min_vis {
                next.push(clamped);
            }
        }
        current = next;
    }
    if current.is_empty() || current.iter().any(|b| b.w < MIN_PRINTABLE || b.h < MIN_PRINTABLE) {
        return None;
    }
    Some(current)
}

/// Augments one instance and regenerates its response from the transformed
/// structured record. Deterministic in `(inst, policy, seed)`.
pub fn augment_instance_traced(inst: &InstructionInstance, policy: &AugPolicy, seed: u64) -> AugmentOutcome {
    let applied = draw_augmentation(policy, seed);
    if applied.crop.is_none() && applied.affine.is_none() {
        return AugmentOutcome { instance: inst.clone(), applied };
    }
    let abandon = |mut applied: AppliedAugmentation| {
        applied.crop = None;
        applied.affine = None;
        applied.fallback = true;
        AugmentOutcome { instance: inst.clone(), applied }
    };
    let (crop, affine, vis) = (applied.crop.as_ref(), applied.affine.as_ref(), policy.min_box_visibility);
    let mut rec = inst.structured.clone();
    match transform_boxes(&rec.boxes, crop, affine, vis) {
        Some(b) => rec.boxes = b,
        None => return abandon(applied),
    }
    for f in rec.findings.iter_mut() {
        match transform_boxes(&f.boxes, crop, affine, vis) {
            Some(b) => f.boxes = b,
            None => return abandon(applied),
        }
    }
    match render_instruction(&rec) {
        Ok(instance) => AugmentOutcome { instance, applied },
        Err(_) => abandon(applied),
    }
}

/// [`augment_instance_traced`] without the record of applied transforms.
pub fn augment_instance(inst: &InstructionInstance, policy: &AugPolicy, seed: u64) -> InstructionInstance {
    augment_instance_traced(inst, policy, seed).instance
}

/// Metadata of the deterministic evaluation preprocessing.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PreprocessMeta {
    pub clahe_clip: f64,
    pub clahe_grid: (usize, usize),
    pub resize: (usize, usize),
}

impl Default for PreprocessMeta {
    fn default() -> Self {
        PreprocessMeta { clahe_clip: EVAL_CLAHE_CLIP, clahe_grid: EVAL_CLAHE_GRID, resize: EVAL_SIZE }
    }
}

/// Eval path: fixed CLAHE then bilinear resize to the model input size.
pub fn preprocess_eval(img: &IntensityGrid) -> Result<(IntensityGrid, PreprocessMeta), AugError> {
    let meta = PreprocessMeta::default();
    let eq = clahe(img, meta.clahe_clip, meta.clahe_grid)?;
    let out = resize_bilinear(&eq, meta.resize.0, meta.resize.1)?;
    Ok((out, meta))
}
