//! OKS similarity and AP/AR evaluation with per-image greedy matching.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::keypoints::{PersonInstance, JOINT_COUNT};

/// Standard COCO per-joint OKS constants (twice the published sigmas, so
/// the similarity term is `exp(-d^2 / (2 s^2 k^2))`).
pub const OKS_K: [f64; JOINT_COUNT] = [
    0.052, 0.050, 0.050, 0.070, 0.070, 0.158, 0.158, 0.144, 0.144, 0.124, 0.124, 0.214, 0.214,
    0.174, 0.174, 0.178, 0.178,
];

/// One predicted keypoint with its confidence.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PredictedKeypoint {
    pub x: f64,
    pub y: f64,
    pub confidence: f64,
}

/// One predicted person.
#[derive(Debug, Clone, PartialEq)]
pub struct PredictionInstance {
    pub image_id: u64,
    pub score: f64,
    pub keypoints: [PredictedKeypoint; JOINT_COUNT],
}

impl PredictionInstance {
    pub fn validate(&self) -> Result<()> {
        if !self.score.is_finite() {
            return Err(Error::Input(format!(
                "prediction for image {} has non-finite score",
                self.image_id
            )));
        }
        for kp in &self.keypoints {
            if !(kp.x.is_finite() && kp.y.is_finite() && kp.confidence.is_finite()) {
                return Err(Error::Input(format!(
                    "prediction for image {} has non-finite keypoints",
                    self.image_id
                )));
            }
        }
        Ok(())
    }
}

#[derive(Serialize, Deserialize)]
struct PredLine {
    image_id: u64,
    score: f64,
    keypoints: Vec<f64>,
}

/// Parses JSON-lines predictions: one object per line with `image_id`,
/// `score`, and `keypoints` as 51 numbers (x, y, confidence per joint).
pub fn parse_predictions_jsonl(bytes: &[u8]) -> Result<Vec<PredictionInstance>> {
    let text = std::str::from_utf8(bytes)
        .map_err(|_| Error::Input("predictions file is not UTF-8".into()))?;
    let mut out = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let raw: PredLine = serde_json::from_str(line).map_err(|e| {
            Error::Input(format!("predictions line {}: {e}", lineno + 1))
        })?;
        if raw.keypoints.len() != JOINT_COUNT * 3 {
            return Err(Error::Input(format!(
                "predictions line {}: `keypoints` must contain {} numbers, got {}",
                lineno + 1,
                JOINT_COUNT * 3,
                raw.keypoints.len()
            )));
        }
        let mut keypoints = [PredictedKeypoint {
            x: 0.0,
            y: 0.0,
            confidence: 0.0,
        }; JOINT_COUNT];
        for (j, kp) in keypoints.iter_mut().enumerate() {
            kp.x = raw.keypoints[3 * j];
            kp.y = raw.keypoints[3 * j + 1];
            kp.confidence = raw.keypoints[3 * j + 2];
        }
        let inst = PredictionInstance {
            image_id: raw.image_id,
            score: raw.score,
            keypoints,
        };
        inst.validate()?;
        out.push(inst);
    }
    Ok(out)
}

/// Serializes predictions to the JSON-lines wire format.
pub fn write_predictions_jsonl(preds: &[PredictionInstance]) -> String {
    let mut out = String::new();
    for pred in preds {
        let mut flat = Vec::with_capacity(JOINT_COUNT * 3);
        for kp in &pred.keypoints {
            flat.extend_from_slice(&[kp.x, kp.y, kp.confidence]);
        }
        let line = PredLine {
            image_id: pred.image_id,
            score: pred.score,
            keypoints: flat,
        };
        out.push_str(&serde_json::to_string(&line).expect("prediction serialization cannot fail"));
        out.push('\n');
    }
    out
}

/// Object keypoint similarity between a prediction and a ground truth:
/// Gaussian kernel over per-joint distances, normalized by object scale
/// (`s^2 = gt.area`) and the per-joint constants, averaged over labeled
/// joints.
pub fn oks(
    pred: &PredictionInstance,
    gt: &PersonInstance,
    k_constants: &[f64; JOINT_COUNT],
) -> Result<f64> {
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
        let d2 = dx * dx + dy * dy;
        let k = k_constants[j];
        sum += (-d2 / (2.0 * s2 * k * k)).exp();
    }
    if labeled == 0 {
        return Err(Error::Domain(
            "OKS requires a ground truth with at least one labeled joint".into(),
        ));
    }
    Ok(sum / labeled as f64)
}

/// Evaluation summary over the OKS thresholds in use.
///
/// `ap`/`ar` average over the supplied threshold list; the 0.50 / 0.75
/// variants are always computed at exactly those thresholds. Size-bucket
/// metrics are `None` when the bucket has no ground truths.
#[derive(Debug, Clone, Serialize)]
pub struct EvalReport {
    pub ap: f64,
    pub ap50: f64,
    pub ap75: f64,
    pub ar: f64,
    pub ar50: f64,
    pub ar75: f64,
    pub ap_medium: Option<f64>,
    pub ap_large: Option<f64>,
    /// Mean AP over thresholds per difficulty tag, for datasets that carry
    /// externally supplied tags.
    #[serde(skip_serializing_if = "BTreeMap::is_empty")]
    pub per_tag_ap: BTreeMap<String, f64>,
}

/// Default COCO threshold grid 0.50:0.05:0.95.
pub fn default_thresholds() -> Vec<f64> {
    (10..=19).map(|i| f64::from(i) / 20.0).collect()
}

const MEDIUM_MIN: f64 = 32.0 * 32.0;
const LARGE_MIN: f64 = 96.0 * 96.0;

#[derive(Debug)]
struct ImageEval {
    /// Ground truths in annotation order.
    gt_labeled: Vec<bool>,
    gt_area: Vec<f64>,
    /// Predictions as (score, global index), sorted score-descending with
    /// input order as the tie break.
    preds: Vec<(f64, usize)>,
    /// `oks_matrix[pred][gt]`, in the orders above; unlabeled ground truths
    /// hold zero.
    oks_matrix: Vec<Vec<f64>>,
    tag: Option<String>,
}

/// Greedy matching outcome for one pooled prediction.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Outcome {
    TruePositive,
    FalsePositive,
    /// Matched to an ignored ground truth; excluded from the curve.
    Ignored,
}

/// Evaluates predictions against ground truths.
///
/// Per image and threshold: predictions in score order greedily take the
/// unmatched ground truth with the highest OKS at or above the threshold.
/// Out-of-bucket ground truths are ignored rather than counted: matches to
/// them drop the prediction from the curve, following the COCO convention.
/// AP integrates the precision-recall curve at 101 recall points; AR is
/// the final recall, averaged over thresholds.
pub fn evaluate(
    preds: &[PredictionInstance],
    gts: &Dataset,
    thresholds: &[f64],
) -> Result<EvalReport> {
    if thresholds.is_empty() {
        return Err(Error::Domain("threshold list must not be empty".into()));
    }
    for &t in thresholds {
        if !(t > 0.0 && t <= 1.0) {
            return Err(Error::Domain(format!(
                "OKS thresholds must lie in (0, 1], got {t}"
            )));
        }
    }
    let known: BTreeSet<u64> = gts.images().iter().map(|im| im.id).collect();
    let unknown: BTreeSet<u64> = preds
        .iter()
        .map(|p| p.image_id)
        .filter(|id| !known.contains(id))
        .collect();
    if !unknown.is_empty() {
        let ids: Vec<String> = unknown.iter().map(u64::to_string).collect();
        return Err(Error::Input(format!(
            "predictions reference unknown image ids: {}",
            ids.join(", ")
        )));
    }
    for pred in preds {
        pred.validate()?;
    }

    let images = build_image_evals(preds, gts)?;
    let views: Vec<&ImageEval> = images.iter().collect();

    let all = |_: &ImageEval, _: usize| true;
    let ap = mean_ap(&views, thresholds, &all)?
        .ok_or_else(|| Error::Input("no evaluable ground truths".into()))?;
    let ap50 = mean_ap(&views, &[0.5], &all)?.expect("nonempty above");
    let ap75 = mean_ap(&views, &[0.75], &all)?.expect("nonempty above");
    let ar = mean_ar(&views, thresholds, &all)?.expect("nonempty above");
    let ar50 = mean_ar(&views, &[0.5], &all)?.expect("nonempty above");
    let ar75 = mean_ar(&views, &[0.75], &all)?.expect("nonempty above");

    let medium =
        |img: &ImageEval, g: usize| img.gt_area[g] >= MEDIUM_MIN && img.gt_area[g] < LARGE_MIN;
    let large = |img: &ImageEval, g: usize| img.gt_area[g] >= LARGE_MIN;
    let ap_medium = mean_ap(&views, thresholds, &medium)?;
    let ap_large = mean_ap(&views, thresholds, &large)?;

    let mut per_tag_ap = BTreeMap::new();
    let tags: BTreeSet<String> = images.iter().filter_map(|im| im.tag.clone()).collect();
    for tag in tags {
        let tagged: Vec<&ImageEval> = images
            .iter()
            .filter(|im| im.tag.as_deref() == Some(tag.as_str()))
            .collect();
        if let Some(value) = mean_ap(&tagged, thresholds, &all)? {
            per_tag_ap.insert(tag, value);
        }
    }

    Ok(EvalReport {
        ap,
        ap50,
        ap75,
        ar,
        ar50,
        ar75,
        ap_medium,
        ap_large,
        per_tag_ap,
    })
}

fn build_image_evals(preds: &[PredictionInstance], gts: &Dataset) -> Result<Vec<ImageEval>> {
    let mut by_image: BTreeMap<u64, Vec<(f64, usize)>> = BTreeMap::new();
    for (idx, pred) in preds.iter().enumerate() {
        by_image.entry(pred.image_id).or_default().push((pred.score, idx));
    }
    for list in by_image.values_mut() {
        list.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap_or(std::cmp::Ordering::Equal).then(a.1.cmp(&b.1)));
    }

    let mut images = Vec::new();
    for record in gts.images() {
        let instances = gts.instances_for(record.id);
        let pred_list = by_image.remove(&record.id).unwrap_or_default();
        if instances.is_empty() && pred_list.is_empty() {
            continue;
        }
        let gt_labeled: Vec<bool> = instances.iter().map(|g| g.labeled_count() > 0).collect();
        let gt_area: Vec<f64> = instances.iter().map(PersonInstance::area).collect();
        let mut oks_matrix = vec![vec![0.0f64; instances.len()]; pred_list.len()];
        for (pi, &(_, idx)) in pred_list.iter().enumerate() {
            for (gi, gt) in instances.iter().enumerate() {
                if gt_labeled[gi] {
                    oks_matrix[pi][gi] = oks(&preds[idx], gt, &OKS_K)?;
                }
            }
        }
        images.push(ImageEval {
            gt_labeled,
            gt_area,
            preds: pred_list,
            oks_matrix,
            tag: record.difficulty.clone(),
        });
    }
    Ok(images)
}

/// Greedy per-image matching at one threshold. `in_bucket` selects the
/// ground truths that count; the rest are ignored.
fn match_image(
    img: &ImageEval,
    threshold: f64,
    in_bucket: &dyn Fn(&ImageEval, usize) -> bool,
) -> Vec<(f64, usize, Outcome)> {
    let gt_count = img.gt_labeled.len();
    let counted: Vec<bool> = (0..gt_count)
        .map(|g| img.gt_labeled[g] && in_bucket(img, g))
        .collect();
    let mut taken = vec![false; gt_count];
    let mut out = Vec::with_capacity(img.preds.len());
    for (pi, &(score, idx)) in img.preds.iter().enumerate() {
        let best = |ignored_pool: bool| -> Option<usize> {
            let mut best: Option<(f64, usize)> = None;
            for g in 0..gt_count {
                if taken[g] || counted[g] == ignored_pool {
                    continue;
                }
                let value = img.oks_matrix[pi][g];
                if value < threshold {
                    continue;
                }
                let better = match best {
                    None => true,
                    Some((bv, _)) => value > bv,
                };
                if better {
                    best = Some((value, g));
                }
            }
            best.map(|(_, g)| g)
        };
        // Prefer counted ground truths; fall back to ignored ones so a
        // prediction of an out-of-bucket person is not penalized.
        let outcome = if let Some(g) = best(false) {
            taken[g] = true;
            Outcome::TruePositive
        } else if let Some(g) = best(true) {
            taken[g] = true;
            Outcome::Ignored
        } else {
            Outcome::FalsePositive
        };
        out.push((score, idx, outcome));
    }
    out
}

/// Pools matches across images and integrates the PR curve with 101-point
/// interpolation. Returns `(ap, final_recall)`, or `None` when the bucket
/// holds no ground truths.
fn ap_at_threshold(
    images: &[&ImageEval],
    threshold: f64,
    in_bucket: &dyn Fn(&ImageEval, usize) -> bool,
) -> Option<(f64, f64)> {
    let mut num_gt = 0usize;
    let mut pooled: Vec<(f64, usize, Outcome)> = Vec::new();
    for img in images {
        num_gt += (0..img.gt_labeled.len())
            .filter(|&g| img.gt_labeled[g] && in_bucket(img, g))
            .count();
        pooled.extend(match_image(img, threshold, in_bucket));
    }
    if num_gt == 0 {
        return None;
    }
    pooled.sort_by(|a, b| {
        b.0.partial_cmp(&a.0)
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(a.1.cmp(&b.1))
    });

    let mut tp = 0usize;
    let mut fp = 0usize;
    let mut curve: Vec<(f64, f64)> = Vec::with_capacity(pooled.len());
    for &(_, _, outcome) in &pooled {
        match outcome {
            Outcome::Ignored => continue,
            Outcome::TruePositive => tp += 1,
            Outcome::FalsePositive => fp += 1,
        }
        let recall = tp as f64 / num_gt as f64;
        let precision = tp as f64 / (tp + fp) as f64;
        curve.push((recall, precision));
    }
    // Precision envelope: monotone nonincreasing from the right.
    for i in (0..curve.len().saturating_sub(1)).rev() {
        curve[i].1 = curve[i].1.max(curve[i + 1].1);
    }
    let mut ap_sum = 0.0f64;
    for step in 0..=100 {
        let r = f64::from(step) / 100.0;
        let p = curve
            .iter()
            .find(|&&(recall, _)| recall >= r)
            .map_or(0.0, |&(_, precision)| precision);
        ap_sum += p;
    }
    let final_recall = tp as f64 / num_gt as f64;
    Some((ap_sum / 101.0, final_recall))
}

fn mean_ap(
    images: &[&ImageEval],
    thresholds: &[f64],
    in_bucket: &dyn Fn(&ImageEval, usize) -> bool,
) -> Result<Option<f64>> {
    let mut sum = 0.0f64;
    for &t in thresholds {
        match ap_at_threshold(images, t, in_bucket) {
            Some((ap, _)) => sum += ap,
            None => return Ok(None),
        }
    }
    Ok(Some(sum / thresholds.len() as f64))
}

fn mean_ar(
    images: &[&ImageEval],
    thresholds: &[f64],
    in_bucket: &dyn Fn(&ImageEval, usize) -> bool,
) -> Result<Option<f64>> {
    let mut sum = 0.0f64;
    for &t in thresholds {
        match ap_at_threshold(images, t, in_bucket) {
            Some((_, recall)) => sum += recall,
            None => return Ok(None),
        }
    }
    Ok(Some(sum / thresholds.len() as f64))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::parse_annotations;
    use crate::keypoints::Visibility;

    fn simple_dataset(num_instances: usize) -> Dataset {
        let mut annotations = Vec::new();
        for i in 0..num_instances {
            let offset = 120.0 * i as f64;
            let mut kps = Vec::new();
            for j in 0..JOINT_COUNT {
                kps.push(format!(
                    "{},{},2",
                    20.0 + offset + 3.0 * j as f64,
                    30.0 + 4.0 * j as f64
                ));
            }
            annotations.push(format!(
                r#"{{"id": {}, "image_id": 1, "bbox": [{}, 10, 100, 110], "keypoints": [{}]}}"#,
                i + 1,
                10.0 + offset,
                kps.join(",")
            ));
        }
        let doc = format!(
            r#"{{"images": [{{"id": 1, "file_name": "a.png", "width": 2000, "height": 300}}],
                "annotations": [{}]}}"#,
            annotations.join(",")
        );
        parse_annotations(doc.as_bytes()).unwrap()
    }

    fn perfect_pred(gt: &PersonInstance, image_id: u64, score: f64) -> PredictionInstance {
        let mut keypoints = [PredictedKeypoint {
            x: 0.0,
            y: 0.0,
            confidence: 1.0,
        }; JOINT_COUNT];
        for (j, kp) in gt.keypoints().iter().enumerate() {
            keypoints[j].x = kp.x;
            keypoints[j].y = kp.y;
        }
        PredictionInstance {
            image_id,
            score,
            keypoints,
        }
    }

    #[test]
    fn oks_is_one_for_exact_prediction() {
        let ds = simple_dataset(1);
        let gt = &ds.instances_for(1)[0];
        let pred = perfect_pred(gt, 1, 1.0);
        assert_eq!(oks(&pred, gt, &OKS_K).unwrap(), 1.0);
    }

    #[test]
    fn oks_vanishes_at_large_distance() {
        let ds = simple_dataset(1);
        let gt = &ds.instances_for(1)[0];
        let mut pred = perfect_pred(gt, 1, 1.0);
        for kp in &mut pred.keypoints {
            kp.x += 1e6;
        }
        assert!(oks(&pred, gt, &OKS_K).unwrap() < 1e-12);
    }

    #[test]
    fn oks_closed_form_single_joint() {
        // One labeled joint at distance d with d^2 = 2 s^2 k^2 gives e^-1.
        let doc = {
            let mut kps = vec!["0,0,0".to_string(); JOINT_COUNT];
            kps[0] = "50,60,2".into();
            format!(
                r#"{{"images": [{{"id": 1, "file_name": "a.png", "width": 400, "height": 300}}],
                    "annotations": [{{"id": 1, "image_id": 1, "bbox": [10, 10, 100, 100],
                                      "keypoints": [{}], "area": 10000.0}}]}}"#,
                kps.join(",")
            )
        };
        let ds = parse_annotations(doc.as_bytes()).unwrap();
        let gt = &ds.instances_for(1)[0];
        let k = OKS_K[0];
        let d = (2.0 * gt.area() * k * k).sqrt();
        let mut pred = perfect_pred(gt, 1, 1.0);
        pred.keypoints[0].x += d;
        let got = oks(&pred, gt, &OKS_K).unwrap();
        assert!((got - (-1.0f64).exp()).abs() < 1e-12, "got {got}");
    }

    #[test]
    fn oks_requires_labeled_gt() {
        let doc = {
            let kps = vec!["0,0,0"; JOINT_COUNT].join(",");
            format!(
                r#"{{"images": [{{"id": 1, "file_name": "a.png", "width": 400, "height": 300}}],
                    "annotations": [{{"id": 1, "image_id": 1, "bbox": [10, 10, 100, 100], "keypoints": [{kps}]}}]}}"#
            )
        };
        let ds = parse_annotations(doc.as_bytes()).unwrap();
        let gt = &ds.instances_for(1)[0];
        let pred = perfect_pred(gt, 1, 1.0);
        assert!(matches!(oks(&pred, gt, &OKS_K), Err(Error::Domain(_))));
    }

    #[test]
    fn oks_translation_invariant_and_monotone() {
        let ds = simple_dataset(1);
        let gt = &ds.instances_for(1)[0];
        let mut near = perfect_pred(gt, 1, 1.0);
        near.keypoints[4].x += 5.0;
        let mut far = near.clone();
        far.keypoints[4].x += 10.0;
        let oks_near = oks(&near, gt, &OKS_K).unwrap();
        let oks_far = oks(&far, gt, &OKS_K).unwrap();
        assert!(oks_far < oks_near);
    }

    #[test]
    fn perfect_predictions_score_one() {
        let ds = simple_dataset(3);
        let preds: Vec<PredictionInstance> = ds
            .instances_for(1)
            .iter()
            .map(|gt| perfect_pred(gt, 1, 1.0))
            .collect();
        let report = evaluate(&preds, &ds, &default_thresholds()).unwrap();
        assert_eq!(report.ap, 1.0);
        assert_eq!(report.ap50, 1.0);
        assert_eq!(report.ap75, 1.0);
        assert_eq!(report.ar, 1.0);
        assert!(report.ap <= report.ap50);
    }

    #[test]
    fn empty_predictions_score_zero() {
        let ds = simple_dataset(2);
        let report = evaluate(&[], &ds, &default_thresholds()).unwrap();
        assert_eq!(report.ap, 0.0);
        assert_eq!(report.ar, 0.0);
    }

    #[test]
    fn unknown_image_id_is_input_error() {
        let ds = simple_dataset(1);
        let gt = &ds.instances_for(1)[0];
        let pred = perfect_pred(gt, 77, 1.0);
        let err = evaluate(&[pred], &ds, &default_thresholds()).unwrap_err();
        match err {
            Error::Input(msg) => assert!(msg.contains("77"), "{msg}"),
            other => panic!("expected input error, got {other:?}"),
        }
    }

    #[test]
    fn duplicate_prediction_is_false_positive() {
        let ds = simple_dataset(1);
        let gt = &ds.instances_for(1)[0];
        let first = perfect_pred(gt, 1, 0.9);
        let second = perfect_pred(gt, 1, 0.8);
        let report = evaluate(&[first, second], &ds, &[0.5]).unwrap();
        // One TP then one FP: precision at full recall is 1.0 (TP first),
        // so AP stays 1.0 but the duplicate cannot add recall.
        assert_eq!(report.ar50, 1.0);
        assert_eq!(report.ap50, 1.0);
        // Reversing scores makes the FP come first; precision drops.
        let first = perfect_pred(gt, 1, 0.8);
        let mut decoy = perfect_pred(gt, 1, 0.9);
        for kp in &mut decoy.keypoints {
            kp.y += 500.0;
        }
        let report = evaluate(&[first, decoy], &ds, &[0.5]).unwrap();
        assert!(report.ap50 < 1.0);
    }

    #[test]
    fn score_ranking_only_matters() {
        let ds = simple_dataset(3);
        let gts = ds.instances_for(1).to_vec();
        let mut preds = Vec::new();
        for (i, gt) in gts.iter().enumerate() {
            let mut p = perfect_pred(gt, 1, 0.9 - 0.1 * i as f64);
            p.keypoints[0].x += 2.0 * i as f64;
            preds.push(p);
        }
        let base = evaluate(&preds, &ds, &default_thresholds()).unwrap();
        // Strictly monotone transform of the scores.
        let mut transformed = preds.clone();
        for p in &mut transformed {
            p.score = (p.score * 3.0).exp();
        }
        let after = evaluate(&transformed, &ds, &default_thresholds()).unwrap();
        assert_eq!(base.ap, after.ap);
        assert_eq!(base.ar, after.ar);
    }

    #[test]
    fn size_buckets_split_by_gt_area() {
        // One medium (64x64) and one large (200x200) ground truth.
        let mut kps_a = Vec::new();
        let mut kps_b = Vec::new();
        for j in 0..JOINT_COUNT {
            kps_a.push(format!("{},{},2", 20 + j, 25 + j));
            kps_b.push(format!("{},{},2", 400 + 5 * j, 50 + 5 * j));
        }
        let doc = format!(
            r#"{{"images": [{{"id": 1, "file_name": "a.png", "width": 1000, "height": 500}}],
                "annotations": [
                    {{"id": 1, "image_id": 1, "bbox": [10, 10, 64, 64], "keypoints": [{}]}},
                    {{"id": 2, "image_id": 1, "bbox": [390, 40, 200, 200], "keypoints": [{}]}}
                ]}}"#,
            kps_a.join(","),
            kps_b.join(",")
        );
        let ds = parse_annotations(doc.as_bytes()).unwrap();
        let gts = ds.instances_for(1).to_vec();
        // Predict the large person only.
        let preds = vec![perfect_pred(&gts[1], 1, 0.9)];
        let report = evaluate(&preds, &ds, &[0.5]).unwrap();
        assert_eq!(report.ap_large, Some(1.0));
        assert_eq!(report.ap_medium, Some(0.0));
    }

    #[test]
    fn per_tag_ap_groups_images() {
        let mut kps = Vec::new();
        for j in 0..JOINT_COUNT {
            kps.push(format!("{},{},2", 20 + j, 25 + j));
        }
        let kps = kps.join(",");
        let doc = format!(
            r#"{{"images": [
                    {{"id": 1, "file_name": "a.png", "width": 500, "height": 300, "difficulty": "easy"}},
                    {{"id": 2, "file_name": "b.png", "width": 500, "height": 300, "difficulty": "hard"}}
                ],
                "annotations": [
                    {{"id": 1, "image_id": 1, "bbox": [10, 10, 80, 90], "keypoints": [{kps}]}},
                    {{"id": 2, "image_id": 2, "bbox": [10, 10, 80, 90], "keypoints": [{kps}]}}
                ]}}"#
        );
        let ds = parse_annotations(doc.as_bytes()).unwrap();
        // Perfect on image 1, nothing on image 2.
        let preds = vec![perfect_pred(&ds.instances_for(1)[0], 1, 0.9)];
        let report = evaluate(&preds, &ds, &[0.5]).unwrap();
        assert_eq!(report.per_tag_ap.get("easy"), Some(&1.0));
        assert_eq!(report.per_tag_ap.get("hard"), Some(&0.0));
    }

    #[test]
    fn rejects_bad_thresholds() {
        let ds = simple_dataset(1);
        assert!(matches!(evaluate(&[], &ds, &[]), Err(Error::Domain(_))));
        assert!(matches!(evaluate(&[], &ds, &[0.0]), Err(Error::Domain(_))));
        assert!(matches!(evaluate(&[], &ds, &[1.2]), Err(Error::Domain(_))));
    }

    #[test]
    fn prediction_jsonl_round_trip() {
        let ds = simple_dataset(2);
        let preds: Vec<PredictionInstance> = ds
            .instances_for(1)
            .iter()
            .enumerate()
            .map(|(i, gt)| perfect_pred(gt, 1, 0.5 + 0.1 * i as f64))
            .collect();
        let text = write_predictions_jsonl(&preds);
        let back = parse_predictions_jsonl(text.as_bytes()).unwrap();
        assert_eq!(preds, back);
    }

    #[test]
    fn occluded_joints_count_for_oks() {
        let ds = simple_dataset(1);
        let gt = &ds.instances_for(1)[0];
        // Rebuild the same instance with one occluded joint.
        let mut kps = *gt.keypoints();
        kps[3].vis = Visibility::Occluded;
        let gt2 = PersonInstance::new(gt.id(), gt.bbox(), kps, Some(gt.area())).unwrap();
        let pred = perfect_pred(&gt2, 1, 1.0);
        assert_eq!(oks(&pred, &gt2, &OKS_K).unwrap(), 1.0);
    }
}
