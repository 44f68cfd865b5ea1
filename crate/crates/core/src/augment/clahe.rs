//! Contrast-limited adaptive histogram equalization on integer intensity grids.

use serde::{Deserialize, Serialize};

use super::AugError;

/// Row-major grid of non-negative intensities bounded by `max_level`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct IntensityGrid {
    pub width: usize,
    pub height: usize,
    pub max_level: u16,
    pub values: Vec<u16>,
}

impl IntensityGrid {
    pub fn new(width: usize, height: usize, max_level: u16, values: Vec<u16>) -> Result<Self, AugError> {
        if values.len() != width * height {
            return Err(AugError::InvalidGrid(format!("{} values for a {width}x{height} grid", values.len())));
        }
        if let Some(v) = values.iter().find(|&&v| v > max_level) {
            return Err(AugError::InvalidGrid(format!("value {v} exceeds max level {max_level}")));
        }
        Ok(IntensityGrid { width, height, max_level, values })
    }

    pub fn filled(width: usize, height: usize, max_level: u16, value: u16) -> Self {
        IntensityGrid { width, height, max_level, values: vec![value.min(max_level); width * height] }
    }

    pub fn get(&self, x: usize, y: usize) -> u16 {
        self.values[y * self.width + x]
    }

    pub fn validate(&self) -> Result<(), AugError> {
        if self.values.len() != self.width * self.height || self.values.iter().any(|&v| v > self.max_level) {
            return Err(AugError::InvalidGrid("grid dimensions or levels are inconsistent".into()));
        }
        Ok(())
    }
}

/// Integer tile boundaries splitting `len` pixels into `n` non-empty tiles.
fn tile_bounds(len: usize, n: usize) -> Vec<usize> {
    (0..=n).map(|i| i * len / n).collect()
}

/// Mapping of one tile: clipped histogram, uniform redistribution of the
/// clipped excess, then the scaled CDF.
fn tile_lut(img: &IntensityGrid, xs: (usize, usize), ys: (usize, usize), clip_limit: f64) -> Vec<u16> {
    let bins = img.max_level as usize + 1;
    let mut hist = vec![0.0f64; bins];
    for y in ys.0..ys.1 {
        for &v in &img.values[y * img.width + xs.0..y * img.width + xs.1] {
            hist[v as usize] += 1.0;
        }
    }
    let n = ((xs.1 - xs.0) * (ys.1 - ys.0)) as f64;
    let limit = clip_limit * n / bins as f64;
    if limit.is_finite() {
        let mut excess = 0.0;
        for h in hist.iter_mut() {
            if *h > limit {
                excess += *h - limit;
                *h = limit;
            }
        }
        let share = excess / bins as f64;
        for h in hist.iter_mut() {
            *h += share;
        }
    }
    let max = img.max_level as f64;
    let mut cdf = 0.0;
    hist.iter()
        .map(|h| {
            cdf += h;
            (cdf * max / n).round().clamp(0.0, max) as u16
        })
        .collect()
}

/// Interpolation coordinate of pixel `p` along an axis with `tiles` tiles of
/// nominal size `size`: the two neighbouring tile indices and the weight of
/// the second. Pixels at a tile's center get weight 0 on its neighbour.
fn axis_weights(p: usize, size: f64, tiles: usize) -> (usize, usize, f64) {
    let f = p as f64 / size - 0.5;
    let lo = f.floor();
    let w = f - lo;
    let last = tiles as isize - 1;
    let t1 = (lo as isize).clamp(0, last) as usize;
    let t2 = (lo as isize + 1).clamp(0, last) as usize;
    (t1, t2, w)
}

/// CLAHE with `clip_limit` relative to the mean bin height and a `grid` of
/// `(tiles_x, tiles_y)`. `f64::INFINITY` disables clipping.
pub fn clahe(img: &IntensityGrid, clip_limit: f64, grid: (usize, usize)) -> Result<IntensityGrid, AugError> {
    let (gx, gy) = grid;
    if gx == 0 || gy == 0 || img.width < gx || img.height < gy {
        return Err(AugError::GridTooFine { width: img.width, height: img.height, grid });
    }
    if clip_limit.is_nan() || clip_limit <= 0.0 {
        return Err(AugError::InvalidClipLimit(clip_limit));
    }
    let bx = tile_bounds(img.width, gx);
    let by = tile_bounds(img.height, gy);
    let luts: Vec<Vec<u16>> = (0..gy)
        .flat_map(|ty| (0..gx).map(move |tx| (tx, ty)))
        .map(|(tx, ty)| tile_lut(img, (bx[tx], bx[tx + 1]), (by[ty], by[ty + 1]), clip_limit))
        .collect();
    let lut = |tx: usize, ty: usize, v: u16| luts[ty * gx + tx][v as usize] as f64;

    let tw = img.width as f64 / gx as f64;
    let th = img.height as f64 / gy as f64;
    let max = img.max_level as f64;
    let mut values = Vec::with_capacity(img.values.len());
    for y in 0..img.height {
        let (ty1, ty2, ya) = axis_weights(y, th, gy);
        for x in 0..img.width {
            let (tx1, tx2, xa) = axis_weights(x, tw, gx);
            let v = img.get(x, y);
            let top = (1.0 - xa) * lut(tx1, ty1, v) + xa * lut(tx2, ty1, v);
            let bottom = (1.0 - xa) * lut(tx1, ty2, v) + xa * lut(tx2, ty2, v);
            let out = (1.0 - ya) * top + ya * bottom;
            values.push(out.round().clamp(0.0, max) as u16);
        }
    }
    Ok(IntensityGrid { width: img.width, height: img.height, max_level: img.max_level, values })
}

/// Bilinear resize using pixel-center alignment.
pub fn resize_bilinear(img: &IntensityGrid, width: usize, height: usize) -> Result<IntensityGrid, AugError> {
    if width == 0 || height == 0 || img.width == 0 || img.height == 0 {
        return Err(AugError::InvalidGrid("cannot resize to or from an empty grid".into()));
    }
    let sx = img.width as f64 / width as f64;
    let sy = img.height as f64 / height as f64;
    let src = |p: usize, s: f64, len: usize| {
        let f = ((p as f64 + 0.5) * s - 0.5).clamp(0.0, (len - 1) as f64);
        let lo = f.floor() as usize;
        (lo, (lo + 1).min(len - 1), f - lo as f64)
    };
    let mut values = Vec::with_capacity(width * height);
    for y in 0..height {
        let (y1, y2, wy) = src(y, sy, img.height);
        for x in 0..width {
            let (x1, x2, wx) = src(x, sx, img.width);
            let top = (1.0 - wx) * img.get(x1, y1) as f64 + wx * img.get(x2, y1) as f64;
            let bottom = (1.0 - wx) * img.get(x1, y2) as f64 + wx * img.get(x2, y2) as f64;
            let v = (1.0 - wy) * top + wy * bottom;
            values.push(v.round().clamp(0.0, img.max_level as f64) as u16);
        }
    }
    Ok(IntensityGrid { width, height, max_level: img.max_level, values })
}
