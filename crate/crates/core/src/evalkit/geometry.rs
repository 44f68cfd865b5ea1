//! Exact union areas of axis-aligned rectangles and union-merge IoU.

use crate::bbox::{NormBox, Rect};

use super::EvalError;

/// Area of the union of `rects`, swept over the strips between consecutive
/// distinct x-edges. Each strip's covered y-length comes from merging the
/// y-intervals of the rectangles spanning it.
pub fn union_area(rects: &[Rect]) -> f64 {
    let rects: Vec<&Rect> = rects.iter().filter(|r| !r.is_empty()).collect();
    if rects.is_empty() {
        return 0.0;
    }
    let mut xs: Vec<f64> = rects.iter().flat_map(|r| [r.x1, r.x2]).collect();
    xs.sort_by(f64::total_cmp);
    xs.dedup();

    let mut spans: Vec<(f64, f64)> = Vec::with_capacity(rects.len());
    let mut area = 0.0;
    for strip in xs.windows(2) {
        let (a, b) = (strip[0], strip[1]);
        spans.clear();
        spans.extend(rects.iter().filter(|r| r.x1 <= a && r.x2 >= b).map(|r| (r.y1, r.y2)));
        if spans.is_empty() {
            continue;
        }
        spans.sort_by(|p, q| p.0.total_cmp(&q.0));
        let mut covered = 0.0;
        let (mut lo, mut hi) = spans[0];
        for &(y1, y2) in &spans[1..] {
            if y1 > hi {
                covered += hi - lo;
                lo = y1;
                hi = y2;
            } else if y2 > hi {
                hi = y2;
            }
        }
        covered += hi - lo;
        area += (b - a) * covered;
    }
    area
}

pub fn union_area_boxes(boxes: &[NormBox]) -> f64 {
    let rects: Vec<Rect> = boxes.iter().map(NormBox::rect).collect();
    union_area(&rects)
}

/// IoU between the union region of `gt` and the union region of `pred`.
/// An empty `pred` scores 0.
pub fn grounding_iou(gt: &[NormBox], pred: &[NormBox]) -> Result<f64, EvalError> {
    if gt.is_empty() {
        return Err(EvalError::EmptyGroundTruth);
    }
    if pred.is_empty() {
        return Ok(0.0);
    }
    let g: Vec<Rect> = gt.iter().map(NormBox::rect).collect();
    let p: Vec<Rect> = pred.iter().map(NormBox::rect).collect();
    let inters: Vec<Rect> = g.iter().flat_map(|a| p.iter().filter_map(|b| a.intersect(b))).collect();
    let inter = union_area(&inters);
    let all: Vec<Rect> = g.iter().chain(p.iter()).copied().collect();
    let union = union_area(&all);
    if union <= 0.0 {
        return Ok(0.0);
    }
    Ok((inter / union).clamp(0.0, 1.0))
}
