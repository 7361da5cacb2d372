//! Brute-force reference implementations backing the test suites.
//!
//! Everything here recomputes results along an independent route: scalar
//! loops with a single accumulator, an adjacency table restated from
//! scratch, finite differences instead of the analytic gradient, exact
//! integer rationals instead of float ceiling, and exhaustive assignment
//! enumeration instead of the greedy matcher. Shared data types come from
//! `posekit`; none of the computation does.

use posekit::dataset::Dataset;
use posekit::eval::PredictionInstance;
use posekit::heatmap::HeatmapStack;
use posekit::keypoints::PersonInstance;

/// Limb adjacency restated independently of `LimbGraph`: `(joint,
/// neighbors)` for the two chains.
pub const LIMB_ADJACENCY: [(usize, &[usize]); 12] = [
    (5, &[6, 7]),
    (6, &[5, 8]),
    (7, &[5, 9]),
    (8, &[6, 10]),
    (9, &[7]),
    (10, &[8]),
    (11, &[12, 13]),
    (12, &[11, 14]),
    (13, &[11, 15]),
    (14, &[12, 16]),
    (15, &[13]),
    (16, &[14]),
];

/// MSE by direct triple loop with one running sum.
pub fn mse_scalar_loop(pred: &HeatmapStack<f64>, gt: &HeatmapStack<f64>, mask: &[bool]) -> f64 {
    let (channels, height, width) = pred.shape();
    let mut sum = 0.0f64;
    let mut supervised = 0usize;
    for c in 0..channels {
        if !mask[c] {
            continue;
        }
        supervised += 1;
        for r in 0..height {
            for col in 0..width {
                let d = pred.at(c, r, col) - gt.at(c, r, col);
                sum += d * d;
            }
        }
    }
    sum / supervised as f64
}

/// Limb structure loss by explicit adjacency loops over [`LIMB_ADJACENCY`].
pub fn lsl_adjacency_loop(pred: &HeatmapStack<f64>, gt: &HeatmapStack<f64>) -> f64 {
    let (_, height, width) = pred.shape();
    let mut sum = 0.0f64;
    for &(joint, neighbors) in &LIMB_ADJACENCY {
        for r in 0..height {
            for col in 0..width {
                let mut p = pred.at(joint, r, col);
                let mut g = gt.at(joint, r, col);
                for &nbr in neighbors {
                    p += pred.at(nbr, r, col);
                    g += gt.at(nbr, r, col);
                }
                let d = p - g;
                sum += d * d;
            }
        }
    }
    sum
}

/// Structure row for one joint by explicit summation.
pub fn structure_row_brute(hm: &HeatmapStack<f64>, joint: usize) -> Vec<f64> {
    let (_, height, width) = hm.shape();
    let neighbors = LIMB_ADJACENCY
        .iter()
        .find(|&&(j, _)| j == joint)
        .map(|&(_, n)| n)
        .expect("joint must be a limb joint");
    let mut out = Vec::with_capacity(height * width);
    for r in 0..height {
        for col in 0..width {
            let mut v = hm.at(joint, r, col);
            for &nbr in neighbors {
                v += hm.at(nbr, r, col);
            }
            out.push(v);
        }
    }
    out
}

/// Central finite difference of `loss` with respect to one cell.
pub fn central_difference<F>(
    loss: F,
    base: &HeatmapStack<f64>,
    cell: (usize, usize, usize),
    h: f64,
) -> f64
where
    F: Fn(&HeatmapStack<f64>) -> f64,
{
    let (c, r, col) = cell;
    let width = base.width();
    let mut plus = base.clone();
    plus.channel_mut(c)[r * width + col] += h;
    let mut minus = base.clone();
    minus.channel_mut(c)[r * width + col] -= h;
    (loss(&plus) - loss(&minus)) / (2.0 * h)
}

/// Reference occlusion rectangle: block `beta * (h, w)` centered on the
/// joint, clipped to the image, floor/ceil to whole pixels. Returns
/// `(x_min, y_min, x_max, y_max, degenerate)`; an empty intersection
/// yields the zero rectangle.
pub fn rect_reference(
    joint: (f64, f64),
    bbox_hw: (f64, f64),
    beta: f64,
    image_wh: (u32, u32),
) -> (u32, u32, u32, u32, bool) {
    let half_w = beta * bbox_hw.1 / 2.0;
    let half_h = beta * bbox_hw.0 / 2.0;
    let (img_w, img_h) = (f64::from(image_wh.0), f64::from(image_wh.1));
    let left = joint.0 - half_w;
    let right = joint.0 + half_w;
    let top = joint.1 - half_h;
    let bottom = joint.1 + half_h;
    if right <= 0.0 || left >= img_w || bottom <= 0.0 || top >= img_h {
        return (0, 0, 0, 0, true);
    }
    let x_min = left.clamp(0.0, img_w).floor() as u32;
    let y_min = top.clamp(0.0, img_h).floor() as u32;
    let x_max = right.clamp(0.0, img_w).ceil() as u32;
    let y_max = bottom.clamp(0.0, img_h).ceil() as u32;
    let area = u64::from(x_max - x_min) * u64::from(y_max - y_min);
    (x_min, y_min, x_max, y_max, area <= 1)
}

/// Exact `ceil(k * v / denom)` in integer arithmetic.
pub fn ceil_ratio(k: u64, v: u64, denom: u64) -> u64 {
    (k * v + denom - 1) / denom
}

/// Standard per-joint OKS constants, restated: twice the published sigmas.
pub fn oks_constants() -> [f64; 17] {
    let sigmas = [
        0.026, 0.025, 0.025, 0.035, 0.035, 0.079, 0.079, 0.072, 0.072, 0.062, 0.062, 0.107,
        0.107, 0.087, 0.087, 0.089, 0.089,
    ];
    let mut k = [0.0; 17];
    for (out, s) in k.iter_mut().zip(sigmas) {
        *out = 2.0 * s;
    }
    k
}

/// OKS by direct loop.
pub fn oks_scalar(pred: &PredictionInstance, gt: &PersonInstance) -> f64 {
    let k = oks_constants();
    let s2 = gt.area();
    let mut sum = 0.0f64;
    let mut labeled = 0usize;
    for (j, gt_kp) in gt.keypoints().iter().enumerate() {
        if !gt_kp.vis.is_labeled() {
            continue;
        }
        labeled += 1;
        let dx = pred.keypoints[j].x - gt_kp.x;
        let dy = pred.keypoints[j].y - gt_kp.y;
        sum += (-(dx * dx + dy * dy) / (2.0 * s2 * k[j] * k[j])).exp();
    }
    sum / labeled as f64
}

/// Reference evaluation report (overall metrics only).
#[derive(Debug, Clone, PartialEq)]
pub struct ReferenceReport {
    pub ap: f64,
    pub ap50: f64,
    pub ap75: f64,
    pub ar: f64,
    pub ar50: f64,
    pub ar75: f64,
}

/// Evaluates by enumerating every injective prediction-to-ground-truth
/// assignment per image and keeping the unique greedy-consistent one
/// (panics if OKS ties make it ambiguous; test data must avoid ties).
pub fn evaluate_reference(
    preds: &[PredictionInstance],
    gts: &Dataset,
    thresholds: &[f64],
) -> ReferenceReport {
    let mut ap_sum = 0.0;
    let mut ar_sum = 0.0;
    for &t in thresholds {
        let (ap, ar) = ap_ar_at(preds, gts, t);
        ap_sum += ap;
        ar_sum += ar;
    }
    let (ap50, ar50) = ap_ar_at(preds, gts, 0.5);
    let (ap75, ar75) = ap_ar_at(preds, gts, 0.75);
    ReferenceReport {
        ap: ap_sum / thresholds.len() as f64,
        ap50,
        ap75,
        ar: ar_sum / thresholds.len() as f64,
        ar50,
        ar75,
    }
}

fn ap_ar_at(preds: &[PredictionInstance], gts: &Dataset, threshold: f64) -> (f64, f64) {
    // Pooled (score, input index, is_tp) over all images.
    let mut pooled: Vec<(f64, usize, bool)> = Vec::new();
    let mut num_gt = 0usize;
    for image in gts.images() {
        let gt_list: Vec<&PersonInstance> = gts
            .instances_for(image.id)
            .iter()
            .filter(|g| g.labeled_count() > 0)
            .collect();
        num_gt += gt_list.len();
        let mut pred_list: Vec<(f64, usize)> = preds
            .iter()
            .enumerate()
            .filter(|(_, p)| p.image_id == image.id)
            .map(|(i, p)| (p.score, i))
            .collect();
        pred_list.sort_by(|a, b| {
            b.0.partial_cmp(&a.0)
                .expect("finite scores")
                .then(a.1.cmp(&b.1))
        });
        if pred_list.is_empty() {
            continue;
        }

        let oks: Vec<Vec<f64>> = pred_list
            .iter()
            .map(|&(_, i)| gt_list.iter().map(|g| oks_scalar(&preds[i], g)).collect())
            .collect();

        let assignment = unique_greedy_assignment(&oks, threshold);
        for (local, &(score, idx)) in pred_list.iter().enumerate() {
            pooled.push((score, idx, assignment[local].is_some()));
        }
    }

    if num_gt == 0 {
        return (0.0, 0.0);
    }
    pooled.sort_by(|a, b| {
        b.0.partial_cmp(&a.0)
            .expect("finite scores")
            .then(a.1.cmp(&b.1))
    });
    let mut tp = 0usize;
    let mut fp = 0usize;
    let mut curve: Vec<(f64, f64)> = Vec::new();
    for &(_, _, is_tp) in &pooled {
        if is_tp {
            tp += 1;
        } else {
            fp += 1;
        }
        curve.push((tp as f64 / num_gt as f64, tp as f64 / (tp + fp) as f64));
    }
    for i in (0..curve.len().saturating_sub(1)).rev() {
        curve[i].1 = curve[i].1.max(curve[i + 1].1);
    }
    let mut ap = 0.0;
    for step in 0..=100 {
        let want = f64::from(step) / 100.0;
        let p = curve
            .iter()
            .find(|&&(r, _)| r >= want)
            .map_or(0.0, |&(_, p)| p);
        ap += p;
    }
    (ap / 101.0, tp as f64 / num_gt as f64)
}

/// Enumerates all injective assignments of predictions (in score order) to
/// ground truths or none, filters for greedy consistency, and asserts
/// uniqueness. Returns, per prediction, the matched ground-truth index.
fn unique_greedy_assignment(oks: &[Vec<f64>], threshold: f64) -> Vec<Option<usize>> {
    let num_preds = oks.len();
    let num_gts = oks.first().map_or(0, Vec::len);
    let mut all: Vec<Vec<Option<usize>>> = Vec::new();
    let mut partial: Vec<Option<usize>> = Vec::with_capacity(num_preds);
    enumerate_assignments(num_preds, num_gts, &mut partial, &mut all);

    let consistent: Vec<&Vec<Option<usize>>> = all
        .iter()
        .filter(|candidate| is_greedy_consistent(candidate, oks, threshold))
        .collect();
    assert!(
        !consistent.is_empty(),
        "no greedy-consistent assignment exists"
    );
    assert_eq!(
        consistent.len(),
        1,
        "OKS ties make the greedy assignment ambiguous; adjust the test data"
    );
    consistent[0].clone()
}

fn enumerate_assignments(
    num_preds: usize,
    num_gts: usize,
    partial: &mut Vec<Option<usize>>,
    all: &mut Vec<Vec<Option<usize>>>,
) {
    if partial.len() == num_preds {
        all.push(partial.clone());
        return;
    }
    partial.push(None);
    enumerate_assignments(num_preds, num_gts, partial, all);
    partial.pop();
    for g in 0..num_gts {
        if partial.iter().any(|&a| a == Some(g)) {
            continue;
        }
        partial.push(Some(g));
        enumerate_assignments(num_preds, num_gts, partial, all);
        partial.pop();
    }
}

fn is_greedy_consistent(assignment: &[Option<usize>], oks: &[Vec<f64>], threshold: f64) -> bool {
    let num_gts = oks.first().map_or(0, Vec::len);
    for (i, &assigned) in assignment.iter().enumerate() {
        let taken: Vec<usize> = assignment[..i].iter().flatten().copied().collect();
        let best_available = (0..num_gts)
            .filter(|g| !taken.contains(g))
            .map(|g| oks[i][g])
            .filter(|&v| v >= threshold)
            .fold(f64::NEG_INFINITY, f64::max);
        match assigned {
            Some(g) => {
                if taken.contains(&g) || oks[i][g] < threshold || oks[i][g] != best_available {
                    return false;
                }
            }
            None => {
                if best_available.is_finite() {
                    return false;
                }
            }
        }
    }
    true
}
