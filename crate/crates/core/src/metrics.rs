//! Segmentation metrics: IoU, weighted coverage, boundary F-score and the
//! recall versus alignment-error curve.

use serde::{Deserialize, Serialize};

use crate::error::MetricError;
use crate::fields::distance_transform;
use crate::geometry::{Mask, Point2, Polygon, RayContour};

/// Boundary F-score thresholds in pixels.
pub const BOUNDF_THRESHOLDS: [f64; 5] = [1.0, 2.0, 3.0, 4.0, 5.0];
/// Maximum spacing between consecutive boundary samples.
pub const DENSIFY_SPACING: f64 = 0.5;
/// Samples on each side of the tangent fitting window.
pub const TANGENT_HALF_WINDOW: usize = 3;
/// Default distance within which a predicted sample matches the ground truth.
pub const MATCH_THRESHOLD: f64 = 5.0;

fn check_dims(a: &Mask, b: &Mask) -> Result<(), MetricError> {
    if !a.same_shape(b) {
        return Err(MetricError::DimensionMismatch(
            a.width(),
            a.height(),
            b.width(),
            b.height(),
        ));
    }
    Ok(())
}

/// `|a & b| / |a | b|`, 1 when both are empty.
pub fn iou(a: &Mask, b: &Mask) -> Result<f64, MetricError> {
    check_dims(a, b)?;
    let (mut inter, mut union) = (0usize, 0usize);
    for (&x, &y) in a.bits().iter().zip(b.bits()) {
        inter += usize::from(x && y);
        union += usize::from(x || y);
    }
    Ok(if union == 0 {
        1.0
    } else {
        inter as f64 / union as f64
    })
}

fn best_iou(g: &Mask, preds: &[Mask]) -> Result<(f64, Option<usize>), MetricError> {
    let mut best = (0.0, None);
    for (i, p) in preds.iter().enumerate() {
        let v = iou(g, p)?;
        if best.1.is_none() || v > best.0 {
            best = (v, Some(i));
        }
    }
    Ok(best)
}

/// Area-weighted best IoU: `sum_g |g| max_p IoU(g, p) / sum_g |g|`.
/// Scores 0 without predictions.
pub fn weighted_coverage(
    gt_instances: &[Mask],
    pred_instances: &[Mask],
) -> Result<f64, MetricError> {
    if let Some(first) = gt_instances.first() {
        for m in gt_instances.iter().chain(pred_instances) {
            check_dims(first, m)?;
        }
    }
    let total: usize = gt_instances.iter().map(Mask::count).sum();
    if total == 0 {
        return Err(MetricError::EmptyInput);
    }
    let mut acc = 0.0;
    for g in gt_instances {
        acc += g.count() as f64 * best_iou(g, pred_instances)?.0;
    }
    Ok(acc / total as f64)
}

fn boundary_hits(from: &Mask, to_dist: &Option<crate::fields::ScalarField>, tau: f64) -> usize {
    let Some(dist) = to_dist else { return 0 };
    (0..from.height())
        .flat_map(|y| (0..from.width()).map(move |x| (x, y)))
        .filter(|&(x, y)| from.get(x, y) && dist.get(x, y) <= tau)
        .count()
}

/// Mean boundary F-score over thresholds of 1 to 5 pixels. Boundaries are
/// foreground pixels with a 4-adjacent background pixel. Two masks without
/// boundary score 1; one without boundary scores 0.
pub fn boundf(pred: &Mask, gt: &Mask) -> Result<f64, MetricError> {
    check_dims(pred, gt)?;
    let (bp, bg) = (pred.boundary(), gt.boundary());
    let (np, ng) = (bp.count(), bg.count());
    if np == 0 && ng == 0 {
        return Ok(1.0);
    }
    if np == 0 || ng == 0 {
        return Ok(0.0);
    }
    let to_gt = distance_transform(&bg).ok();
    let to_pred = distance_transform(&bp).ok();
    let mut total = 0.0;
    for tau in BOUNDF_THRESHOLDS {
        let precision = boundary_hits(&bp, &to_gt, tau) as f64 / np as f64;
        let recall = boundary_hits(&bg, &to_pred, tau) as f64 / ng as f64;
        if precision + recall > 0.0 {
            total += 2.0 * precision * recall / (precision + recall);
        }
    }
    Ok(total / BOUNDF_THRESHOLDS.len() as f64)
}

/// Points along a closed polyline with spacing at most [`DENSIFY_SPACING`].
pub fn densify(vertices: &[Point2]) -> Vec<Point2> {
    let n = vertices.len();
    let mut out = Vec::new();
    for i in 0..n {
        let (a, b) = (vertices[i], vertices[(i + 1) % n]);
        let pieces = (a.distance(b) / DENSIFY_SPACING).ceil().max(1.0) as usize;
        out.extend((0..pieces).map(|k| a.add(b.sub(a).scale(k as f64 / pieces as f64))));
    }
    out
}

/// Tangent angles from a total-least-squares line through each sample and
/// its [`TANGENT_HALF_WINDOW`] neighbours on either side.
pub fn tangents(samples: &[Point2]) -> Vec<f64> {
    let n = samples.len();
    let w = TANGENT_HALF_WINDOW.min(n.saturating_sub(1) / 2);
    (0..n)
        .map(|i| {
            let window: Vec<Point2> = (0..=2 * w).map(|k| samples[(i + n + k - w) % n]).collect();
            let m = window.len() as f64;
            let mean = window
                .iter()
                .fold(Point2::new(0.0, 0.0), |acc, &p| acc.add(p))
                .scale(1.0 / m);
            let (mut sxx, mut syy, mut sxy) = (0.0, 0.0, 0.0);
            for p in &window {
                let d = p.sub(mean);
                sxx += d.x * d.x;
                syy += d.y * d.y;
                sxy += d.x * d.y;
            }
            0.5 * (2.0 * sxy).atan2(sxx - syy)
        })
        .collect()
}

/// Recall as a function of alignment error, sorted by error.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AlignmentCurve {
    pub points: Vec<(f64, f64)>,
    /// Alignment error of every matched prediction sample.
    pub matched_errors: Vec<f64>,
    pub gt_samples: usize,
}

impl AlignmentCurve {
    /// Recall at alignment error `e`.
    pub fn recall_at(&self, e: f64) -> f64 {
        self.points
            .iter()
            .take_while(|(x, _)| *x <= e)
            .last()
            .map_or(0.0, |&(_, r)| r)
    }

    pub fn to_csv(&self) -> String {
        crate::io::csv_text(
            &["error", "recall"],
            self.points
                .iter()
                .map(|(e, r)| vec![e.to_string(), r.to_string()]),
        )
    }
}

/// Curve for closed polylines. Each predicted sample matches its nearest
/// ground-truth sample when within `threshold`; the alignment error is
/// `1 - |cos|` between the two tangents. A ground-truth sample counts as
/// recalled at error `e` once some prediction matched it with error `<= e`.
pub fn alignment_recall_polylines(
    pred: &[Vec<Point2>],
    gt: &[Vec<Point2>],
    threshold: f64,
) -> Result<AlignmentCurve, MetricError> {
    if pred.is_empty() || gt.is_empty() {
        return Err(MetricError::EmptyInput);
    }
    let sample = |lines: &[Vec<Point2>]| -> (Vec<Point2>, Vec<f64>) {
        lines
            .iter()
            .flat_map(|v| {
                let s = densify(v);
                let t = tangents(&s);
                s.into_iter().zip(t)
            })
            .unzip()
    };
    let (ps, pt) = sample(pred);
    let (gs, gtan) = sample(gt);
    if ps.is_empty() || gs.is_empty() {
        return Err(MetricError::EmptyInput);
    }
    let mut best = vec![f64::INFINITY; gs.len()];
    let mut matched_errors = Vec::new();
    for (p, tp) in ps.iter().zip(&pt) {
        let (j, d) = gs
            .iter()
            .enumerate()
            .map(|(j, g)| (j, p.distance(*g)))
            .fold(
                (0, f64::INFINITY),
                |acc, cur| if cur.1 < acc.1 { cur } else { acc },
            );
        if d <= threshold {
            let err = (1.0 - (tp - gtan[j]).cos().abs()).clamp(0.0, 1.0);
            matched_errors.push(err);
            best[j] = best[j].min(err);
        }
    }
    let mut recalled: Vec<f64> = best.into_iter().filter(|e| e.is_finite()).collect();
    recalled.sort_by(f64::total_cmp);
    let total = gs.len() as f64;
    let mut points: Vec<(f64, f64)> = Vec::new();
    for (k, e) in recalled.iter().enumerate() {
        let r = (k + 1) as f64 / total;
        match points.last_mut() {
            Some(last) if last.0 == *e => last.1 = r,
            _ => points.push((*e, r)),
        }
    }
    Ok(AlignmentCurve {
        points,
        matched_errors,
        gt_samples: gs.len(),
    })
}

/// [`alignment_recall_polylines`] for ray contours against polygons.
pub fn alignment_recall(
    pred_contours: &[RayContour],
    gt_polygons: &[Polygon],
    threshold: f64,
) -> Result<AlignmentCurve, MetricError> {
    let pred: Vec<Vec<Point2>> = pred_contours.iter().map(RayContour::points).collect();
    let gt: Vec<Vec<Point2>> = gt_polygons.iter().map(|p| p.vertices().to_vec()).collect();
    alignment_recall_polylines(&pred, &gt, threshold)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InstanceResult {
    pub iou: f64,
    pub gt_area: usize,
    pub boundf: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub instances: Vec<InstanceResult>,
    pub mean_iou: f64,
    pub weighted_coverage: f64,
    pub mean_boundf: f64,
}

impl MetricReport {
    /// Rows of `instance,iou,gt_area,boundf`.
    pub fn to_csv(&self) -> String {
        crate::io::csv_text(
            &["instance", "iou", "gt_area", "boundf"],
            self.instances.iter().enumerate().map(|(i, r)| {
                vec![
                    i.to_string(),
                    r.iou.to_string(),
                    r.gt_area.to_string(),
                    r.boundf.to_string(),
                ]
            }),
        )
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }
}

/// Per-instance best-IoU matching with boundary F-score against the matched
/// prediction, plus the aggregate means and weighted coverage.
pub fn evaluate_instances(gt: &[Mask], pred: &[Mask]) -> Result<MetricReport, MetricError> {
    let wcov = weighted_coverage(gt, pred)?;
    let mut instances = Vec::with_capacity(gt.len());
    for g in gt {
        let (iou, idx) = best_iou(g, pred)?;
        let empty = Mask::new(g.width(), g.height());
        let matched = idx.map_or(&empty, |i| &pred[i]);
        instances.push(InstanceResult {
            iou,
            gt_area: g.count(),
            boundf: boundf(matched, g)?,
        });
    }
    let n = instances.len() as f64;
    Ok(MetricReport {
        mean_iou: instances.iter().map(|r| r.iou).sum::<f64>() / n,
        mean_boundf: instances.iter().map(|r| r.boundf).sum::<f64>() / n,
        weighted_coverage: wcov,
        instances,
    })
}
