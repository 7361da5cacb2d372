//! Desk-scale harness probing how the structure loss localizes a joint
//! that has no direct supervision.
//!
//! Instead of training a network, these experiments act on heatmap values
//! directly: all channels are frozen at their ground truth except one
//! designated "occluded" limb joint, whose channel is either swept over a
//! shift grid or optimized by gradient descent. Withholding the MSE target
//! for that channel (`structure_only`) stands in for occlusion: the joint
//! has no direct supervision and can only be pulled into place through the
//! structure rows it shares with its chain neighbors.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::augment::image_rng;
use crate::error::{Error, Result};
use crate::heatmap::{decode, encode, write_gaussian, HeatmapStack};
use crate::keypoints::{BBox, Keypoint, LimbGraph, PersonInstance, Visibility, JOINT_COUNT, LIMB_JOINTS};
use crate::loss::{dsl_gradient, dsl_loss, mse_loss};
use crate::schedule::{ScheduleSpec, Scheme};

/// Heatmap grid parameters for the synthetic experiments.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EncodeSpec {
    pub height: usize,
    pub width: usize,
    pub sigma: f64,
    pub stride: f64,
}

impl Default for EncodeSpec {
    fn default() -> Self {
        EncodeSpec {
            height: 64,
            width: 48,
            sigma: 2.0,
            stride: 4.0,
        }
    }
}

/// Square shift grid in heatmap cells; always covers (0, 0).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ShiftGridSpec {
    pub radius: u32,
    pub step: u32,
}

impl Default for ShiftGridSpec {
    fn default() -> Self {
        ShiftGridSpec { radius: 10, step: 1 }
    }
}

impl ShiftGridSpec {
    fn offsets(&self) -> Result<Vec<i64>> {
        if self.step == 0 {
            return Err(Error::Domain("shift grid step must be positive".into()));
        }
        let n = i64::from(self.radius / self.step);
        let step = i64::from(self.step);
        Ok((-n..=n).map(|k| k * step).collect())
    }
}

/// Stick-figure family: fixed segment lengths, joint angles sampled
/// uniformly within the ranges below. Lengths are input pixels; angles are
/// radians measured from straight down, mirrored for the right side.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PoseFamily {
    pub hip_center: (f64, f64),
    pub center_jitter: f64,
    pub hip_half_width: f64,
    pub shoulder_half_width: f64,
    pub torso_length: f64,
    pub upper_arm: f64,
    pub forearm: f64,
    pub thigh: f64,
    pub shin: f64,
    pub neck_to_nose: f64,
    pub eye_offset: (f64, f64),
    pub ear_offset: (f64, f64),
    pub shoulder_swing: (f64, f64),
    pub elbow_flex: (f64, f64),
    pub hip_swing: (f64, f64),
    pub knee_flex: (f64, f64),
}

impl Default for PoseFamily {
    fn default() -> Self {
        PoseFamily {
            hip_center: (96.0, 150.0),
            center_jitter: 8.0,
            hip_half_width: 13.0,
            shoulder_half_width: 20.0,
            torso_length: 55.0,
            upper_arm: 32.0,
            forearm: 28.0,
            thigh: 38.0,
            shin: 32.0,
            neck_to_nose: 22.0,
            eye_offset: (7.0, 5.0),
            ear_offset: (13.0, 2.0),
            shoulder_swing: (-0.6, 1.1),
            elbow_flex: (0.0, 1.6),
            hip_swing: (-0.3, 0.45),
            knee_flex: (0.0, 0.5),
        }
    }
}

impl PoseFamily {
    /// Samples one figure. Draw order is fixed: center jitter, left arm,
    /// right arm, left leg, right leg.
    fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> [Keypoint; JOINT_COUNT] {
        use crate::keypoints::joints::*;
        let j = self.center_jitter;
        let hip_x = self.hip_center.0 + rng.gen_range(-j..=j);
        let hip_y = self.hip_center.1 + rng.gen_range(-j..=j);
        let shoulder_y = hip_y - self.torso_length;
        let nose_y = shoulder_y - self.neck_to_nose;

        let mut pts = [(0.0f64, 0.0f64); JOINT_COUNT];
        pts[NOSE] = (hip_x, nose_y);
        pts[LEFT_EYE] = (hip_x + self.eye_offset.0, nose_y - self.eye_offset.1);
        pts[RIGHT_EYE] = (hip_x - self.eye_offset.0, nose_y - self.eye_offset.1);
        pts[LEFT_EAR] = (hip_x + self.ear_offset.0, nose_y - self.ear_offset.1);
        pts[RIGHT_EAR] = (hip_x - self.ear_offset.0, nose_y - self.ear_offset.1);
        pts[LEFT_SHOULDER] = (hip_x + self.shoulder_half_width, shoulder_y);
        pts[RIGHT_SHOULDER] = (hip_x - self.shoulder_half_width, shoulder_y);
        pts[LEFT_HIP] = (hip_x + self.hip_half_width, hip_y);
        pts[RIGHT_HIP] = (hip_x - self.hip_half_width, hip_y);

        let arm = |shoulder: (f64, f64), side: f64, rng: &mut R| {
            let swing = rng.gen_range(self.shoulder_swing.0..=self.shoulder_swing.1);
            let flex = rng.gen_range(self.elbow_flex.0..=self.elbow_flex.1);
            let elbow = (
                shoulder.0 + side * self.upper_arm * swing.sin(),
                shoulder.1 + self.upper_arm * swing.cos(),
            );
            let fore = swing - flex;
            let wrist = (
                elbow.0 + side * self.forearm * fore.sin(),
                elbow.1 + self.forearm * fore.cos(),
            );
            (elbow, wrist)
        };
        let (le, lw) = arm(pts[LEFT_SHOULDER], 1.0, rng);
        let (re, rw) = arm(pts[RIGHT_SHOULDER], -1.0, rng);
        pts[LEFT_ELBOW] = le;
        pts[LEFT_WRIST] = lw;
        pts[RIGHT_ELBOW] = re;
        pts[RIGHT_WRIST] = rw;

        let leg = |hip: (f64, f64), side: f64, rng: &mut R| {
            let swing = rng.gen_range(self.hip_swing.0..=self.hip_swing.1);
            let flex = rng.gen_range(self.knee_flex.0..=self.knee_flex.1);
            let knee = (
                hip.0 + side * self.thigh * swing.sin(),
                hip.1 + self.thigh * swing.cos(),
            );
            let shin = swing - flex;
            let ankle = (
                knee.0 + side * self.shin * shin.sin(),
                knee.1 + self.shin * shin.cos(),
            );
            (knee, ankle)
        };
        let (lk, la) = leg(pts[LEFT_HIP], 1.0, rng);
        let (rk, ra) = leg(pts[RIGHT_HIP], -1.0, rng);
        pts[LEFT_KNEE] = lk;
        pts[LEFT_ANKLE] = la;
        pts[RIGHT_KNEE] = rk;
        pts[RIGHT_ANKLE] = ra;

        let mut kps = [Keypoint::not_labeled(); JOINT_COUNT];
        for (i, &(x, y)) in pts.iter().enumerate() {
            kps[i] = Keypoint::new(x, y, Visibility::Visible);
        }
        kps
    }
}

/// One synthetic occluded sample: a fully labeled figure, the limb joint
/// treated as occluded, the sweep grid, and the start offset (in cells)
/// used by the descent experiments.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SyntheticInstance {
    pub person: PersonInstance,
    pub occluded: usize,
    pub encode_spec: EncodeSpec,
    pub shift_grid: ShiftGridSpec,
    pub init_shift: (f64, f64),
}

/// Margin (in cells) every joint keeps from the grid border, so encode,
/// decode refinement, and shifts up to three sigma all stay in-grid.
fn border_margin_cells(spec: &EncodeSpec) -> f64 {
    3.0 * spec.sigma + 1.0
}

impl SyntheticInstance {
    /// Samples a figure with every joint inside the grid margins, a random
    /// occluded limb joint, and a start offset 1..=3 sigma cells from the
    /// truth in a random direction.
    pub fn sample<R: Rng + ?Sized>(
        rng: &mut R,
        encode_spec: EncodeSpec,
        shift_grid: ShiftGridSpec,
    ) -> Result<Self> {
        let joint = LIMB_JOINTS[rng.gen_range(0..LIMB_JOINTS.len())];
        Self::sample_with_joint(rng, encode_spec, shift_grid, joint)
    }

    pub fn sample_with_joint<R: Rng + ?Sized>(
        rng: &mut R,
        encode_spec: EncodeSpec,
        shift_grid: ShiftGridSpec,
        occluded: usize,
    ) -> Result<Self> {
        if !LIMB_JOINTS.contains(&occluded) {
            return Err(Error::Domain(format!(
                "occluded joint must be a limb joint, got {occluded}"
            )));
        }
        let family = PoseFamily::default();
        let margin = border_margin_cells(&encode_spec) * encode_spec.stride;
        let max_x = encode_spec.width as f64 * encode_spec.stride - margin;
        let max_y = encode_spec.height as f64 * encode_spec.stride - margin;

        let mut kps = None;
        for _ in 0..200 {
            let candidate = family.sample(rng);
            let ok = candidate.iter().all(|kp| {
                kp.x >= margin && kp.x <= max_x && kp.y >= margin && kp.y <= max_y
            });
            if ok {
                kps = Some(candidate);
                break;
            }
        }
        let kps = kps.ok_or_else(|| {
            Error::Domain(format!(
                "pose family does not fit a {}x{} grid at stride {}",
                encode_spec.height, encode_spec.width, encode_spec.stride
            ))
        })?;

        let xs: Vec<f64> = kps.iter().map(|kp| kp.x).collect();
        let ys: Vec<f64> = kps.iter().map(|kp| kp.y).collect();
        let min = |v: &[f64]| v.iter().copied().fold(f64::INFINITY, f64::min);
        let max = |v: &[f64]| v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let pad = 8.0;
        let bbox = BBox {
            x0: min(&xs) - pad,
            y0: min(&ys) - pad,
            w: max(&xs) - min(&xs) + 2.0 * pad,
            h: max(&ys) - min(&ys) + 2.0 * pad,
        };
        let person = PersonInstance::new(1, bbox, kps, None)?;

        let magnitude = rng.gen_range(1.0..=3.0 * encode_spec.sigma);
        let angle = rng.gen_range(0.0..std::f64::consts::TAU);
        let init_shift = (magnitude * angle.cos(), magnitude * angle.sin());

        Ok(SyntheticInstance {
            person,
            occluded,
            encode_spec,
            shift_grid,
            init_shift,
        })
    }
}

/// Samples a deterministic suite keyed by `(seed, trial index)`.
pub fn sample_suite(
    seed: u64,
    count: usize,
    encode_spec: EncodeSpec,
    shift_grid: ShiftGridSpec,
) -> Result<Vec<SyntheticInstance>> {
    (0..count)
        .map(|i| {
            let mut rng = image_rng(seed, i as u64);
            SyntheticInstance::sample(&mut rng, encode_spec, shift_grid)
        })
        .collect()
}

/// Losses at one candidate shift of the occluded channel.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SweepEntry {
    pub dx: i64,
    pub dy: i64,
    /// False when the shifted center left the grid; losses are zeroed and
    /// the entry is excluded from argmins.
    pub valid: bool,
    pub l_mse: f64,
    pub l_lsl: f64,
    pub l_dsl: f64,
}

/// Exhaustive shift-grid evaluation with per-loss argmins.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepResult {
    pub lambda: f64,
    pub entries: Vec<SweepEntry>,
    pub argmin_mse: (i64, i64),
    pub argmin_lsl: (i64, i64),
    pub argmin_dsl: (i64, i64),
}

/// Sweeps the occluded joint's channel over the shift grid: the channel is
/// re-encoded at each offset while every other channel stays at ground
/// truth. Ties break by shift norm, then row-major grid order.
pub fn shift_sweep(
    inst: &SyntheticInstance,
    graph: &LimbGraph,
    lambda: f64,
) -> Result<SweepResult> {
    let spec = inst.encode_spec;
    let (gt, report) = encode::<f64>(
        &inst.person,
        (spec.height, spec.width),
        spec.sigma,
        spec.stride,
    )?;
    if !report.out_of_grid.is_empty() {
        return Err(Error::Internal(
            "synthetic instance has joints outside its own grid".into(),
        ));
    }
    let mask = inst.person.supervision_mask();
    let truth = inst.person.keypoint(inst.occluded);
    let base_u = (truth.x / spec.stride).round();
    let base_v = (truth.y / spec.stride).round();

    let offsets = inst.shift_grid.offsets()?;
    let mut pred = gt.clone();
    let mut entries = Vec::with_capacity(offsets.len() * offsets.len());
    for &dy in &offsets {
        for &dx in &offsets {
            let cu = base_u + dx as f64;
            let cv = base_v + dy as f64;
            let valid = cu >= 0.0
                && cv >= 0.0
                && cu < spec.width as f64
                && cv < spec.height as f64;
            if !valid {
                entries.push(SweepEntry {
                    dx,
                    dy,
                    valid: false,
                    l_mse: 0.0,
                    l_lsl: 0.0,
                    l_dsl: 0.0,
                });
                continue;
            }
            write_gaussian(pred.channel_mut(inst.occluded), spec.width, cu, cv, spec.sigma);
            let breakdown = dsl_loss(&pred, &gt, graph, lambda, &mask)?;
            entries.push(SweepEntry {
                dx,
                dy,
                valid: true,
                l_mse: breakdown.l_mse,
                l_lsl: breakdown.l_lsl,
                l_dsl: breakdown.l_dsl,
            });
        }
    }
    if !entries.iter().any(|e| e.valid) {
        return Err(Error::Domain("no valid shifts on the grid".into()));
    }

    let argmin = |key: fn(&SweepEntry) -> f64| -> (i64, i64) {
        let mut best: Option<(&SweepEntry, f64)> = None;
        for entry in entries.iter().filter(|e| e.valid) {
            let norm = (entry.dx * entry.dx + entry.dy * entry.dy) as f64;
            let better = match best {
                None => true,
                Some((b, bnorm)) => {
                    let (v, bv) = (key(entry), key(b));
                    v < bv || (v == bv && norm < bnorm)
                }
            };
            if better {
                best = Some((entry, norm));
            }
        }
        let entry = best.expect("at least one valid entry").0;
        (entry.dx, entry.dy)
    };

    Ok(SweepResult {
        lambda,
        argmin_mse: argmin(|e| e.l_mse),
        argmin_lsl: argmin(|e| e.l_lsl),
        argmin_dsl: argmin(|e| e.l_dsl),
        entries,
    })
}

/// Which loss terms see the occluded channel during descent.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Supervision {
    /// The channel keeps its MSE target.
    Full,
    /// The channel's MSE term is withheld; only structure rows touch it.
    StructureOnly,
}

/// Descent trace for the occluded channel.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OptimizeOutcome {
    /// Decoded channel position before the first step and after each step.
    pub trajectory: Vec<(f64, f64)>,
    pub init_distance: f64,
    pub final_distance: f64,
    /// Loss rose for ten consecutive steps (or the channel left the finite
    /// range); the run stops early and reports what it has.
    pub diverged: bool,
    pub steps_run: usize,
}

/// Gradient descent on the occluded joint's channel only, all other
/// channels frozen at ground truth.
pub fn optimize_occluded_channel(
    inst: &SyntheticInstance,
    graph: &LimbGraph,
    lambda: f64,
    steps: usize,
    rate: f64,
    supervision: Supervision,
) -> Result<OptimizeOutcome> {
    if steps == 0 {
        return Err(Error::Domain("steps must be at least 1".into()));
    }
    if !(rate > 0.0 && rate.is_finite()) {
        return Err(Error::Domain(format!("rate must be positive, got {rate}")));
    }
    let schedule = move |_step: usize| lambda;
    descend(inst, graph, &schedule, steps, rate, supervision, StructureKernel::Limb)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum StructureKernel {
    /// The two limb chains.
    Limb,
    /// Neighbor sums over a full 17-joint skeleton tree; the comparison
    /// baseline.
    SkeletonTree,
}

/// 16-edge spanning tree over all 17 joints: both limb chains, a torso
/// link, and the head fan attached at the nose.
const SKELETON_TREE_EDGES: [(usize, usize); 16] = [
    (9, 7),
    (7, 5),
    (5, 6),
    (6, 8),
    (8, 10),
    (15, 13),
    (13, 11),
    (11, 12),
    (12, 14),
    (14, 16),
    (5, 11),
    (1, 3),
    (0, 1),
    (0, 2),
    (2, 4),
    (0, 5),
];

fn skeleton_tree_adjacency() -> [Vec<usize>; JOINT_COUNT] {
    let mut adjacency: [Vec<usize>; JOINT_COUNT] = Default::default();
    for &(a, b) in &SKELETON_TREE_EDGES {
        adjacency[a].push(b);
        adjacency[b].push(a);
    }
    for list in adjacency.iter_mut() {
        list.sort_unstable();
    }
    adjacency
}

/// Structure loss over the skeleton tree: like the limb version but summed
/// over all 17 joints.
fn tree_structure_loss(pred: &HeatmapStack<f64>, gt: &HeatmapStack<f64>, adjacency: &[Vec<usize>; JOINT_COUNT]) -> f64 {
    let plane = pred.height() * pred.width();
    let mut total = 0.0f64;
    for joint in 0..JOINT_COUNT {
        let mut row_sum = 0.0f64;
        for cell in 0..plane {
            let mut p = pred.channel(joint)[cell];
            let mut g = gt.channel(joint)[cell];
            for &nbr in &adjacency[joint] {
                p += pred.channel(nbr)[cell];
                g += gt.channel(nbr)[cell];
            }
            let d = p - g;
            row_sum += d * d;
        }
        total += row_sum;
    }
    total
}

fn tree_structure_gradient(
    pred: &HeatmapStack<f64>,
    gt: &HeatmapStack<f64>,
    adjacency: &[Vec<usize>; JOINT_COUNT],
    lambda: f64,
    mask: &[bool],
) -> Vec<f64> {
    let (channels, height, width) = pred.shape();
    let plane = height * width;
    let supervised = mask.iter().filter(|&&m| m).count();
    let scale = 2.0 / supervised as f64;
    let mut grad = vec![0.0f64; channels * plane];
    for c in 0..channels {
        if !mask[c] {
            continue;
        }
        let row = &mut grad[c * plane..(c + 1) * plane];
        for (out, (p, g)) in row.iter_mut().zip(pred.channel(c).iter().zip(gt.channel(c))) {
            *out = scale * (p - g);
        }
    }
    if lambda > 0.0 {
        let mut residual = vec![0.0f64; plane];
        for joint in 0..JOINT_COUNT {
            for (cell, r) in residual.iter_mut().enumerate() {
                let mut p = pred.channel(joint)[cell];
                let mut g = gt.channel(joint)[cell];
                for &nbr in &adjacency[joint] {
                    p += pred.channel(nbr)[cell];
                    g += gt.channel(nbr)[cell];
                }
                *r = p - g;
            }
            for member in std::iter::once(joint).chain(adjacency[joint].iter().copied()) {
                let row = &mut grad[member * plane..(member + 1) * plane];
                for (out, r) in row.iter_mut().zip(&residual) {
                    *out += 2.0 * lambda * r;
                }
            }
        }
    }
    grad
}

fn descend(
    inst: &SyntheticInstance,
    graph: &LimbGraph,
    lambda_at_step: &dyn Fn(usize) -> f64,
    steps: usize,
    rate: f64,
    supervision: Supervision,
    kernel: StructureKernel,
) -> Result<OptimizeOutcome> {
    let spec = inst.encode_spec;
    let (gt, report) = encode::<f64>(
        &inst.person,
        (spec.height, spec.width),
        spec.sigma,
        spec.stride,
    )?;
    if !report.out_of_grid.is_empty() {
        return Err(Error::Internal(
            "synthetic instance has joints outside its own grid".into(),
        ));
    }

    let mut mask = inst.person.supervision_mask();
    if supervision == Supervision::StructureOnly {
        mask[inst.occluded] = false;
    }

    let truth = inst.person.keypoint(inst.occluded);
    let cu = (truth.x / spec.stride).round() + inst.init_shift.0;
    let cv = (truth.y / spec.stride).round() + inst.init_shift.1;
    let cu = cu.round();
    let cv = cv.round();
    if cu < 0.0 || cv < 0.0 || cu >= spec.width as f64 || cv >= spec.height as f64 {
        return Err(Error::Domain(
            "initial shift pushes the occluded joint off the grid".into(),
        ));
    }

    // Distances are measured against the decoded ground-truth channel, so
    // an unshifted start reads exactly zero instead of the encode
    // quantization error.
    let truth_decoded = decode(&gt)[inst.occluded];

    let mut pred = gt.clone();
    write_gaussian(pred.channel_mut(inst.occluded), spec.width, cu, cv, spec.sigma);

    let tree = skeleton_tree_adjacency();
    let plane = spec.height * spec.width;
    let distance_to_truth = |pred: &HeatmapStack<f64>| {
        let d = decode(pred)[inst.occluded];
        (
            (d.x, d.y),
            ((d.x - truth_decoded.x).powi(2) + (d.y - truth_decoded.y).powi(2)).sqrt(),
        )
    };

    let loss_at = |pred: &HeatmapStack<f64>, lambda: f64| -> Result<f64> {
        match kernel {
            StructureKernel::Limb => Ok(dsl_loss(pred, &gt, graph, lambda, &mask)?.l_dsl),
            StructureKernel::SkeletonTree => {
                Ok(mse_loss(pred, &gt, &mask)? + lambda * tree_structure_loss(pred, &gt, &tree))
            }
        }
    };

    let (init_pos, init_distance) = distance_to_truth(&pred);
    let mut trajectory = vec![init_pos];
    let mut prev_loss = loss_at(&pred, lambda_at_step(0))?;
    let mut rising = 0usize;
    let mut diverged = false;
    let mut steps_run = 0usize;

    for step in 0..steps {
        let lambda = lambda_at_step(step);
        let channel_grad: Vec<f64> = match kernel {
            StructureKernel::Limb => {
                let grad = dsl_gradient(&pred, &gt, graph, lambda, &mask)?;
                grad.channel(inst.occluded).to_vec()
            }
            StructureKernel::SkeletonTree => {
                let grad = tree_structure_gradient(&pred, &gt, &tree, lambda, &mask);
                grad[inst.occluded * plane..(inst.occluded + 1) * plane].to_vec()
            }
        };
        {
            let channel = pred.channel_mut(inst.occluded);
            for (value, g) in channel.iter_mut().zip(&channel_grad) {
                *value -= rate * g;
            }
            if channel.iter().any(|v| !v.is_finite()) {
                diverged = true;
                break;
            }
        }
        steps_run = step + 1;
        trajectory.push(distance_to_truth(&pred).0);

        let loss = loss_at(&pred, lambda)?;
        if loss > prev_loss {
            rising += 1;
            if rising >= 10 {
                diverged = true;
                break;
            }
        } else {
            rising = 0;
        }
        prev_loss = loss;
    }

    let (_, final_distance) = distance_to_truth(&pred);
    Ok(OptimizeOutcome {
        trajectory,
        init_distance,
        final_distance,
        diverged,
        steps_run,
    })
}

/// Loss variants compared by [`loss_comparison`]; all run with the
/// occluded channel's MSE target withheld.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossVariant {
    /// MSE only: the unsupervised channel receives no gradient at all.
    MseOnly,
    /// Neighbor-sum structure loss over the full skeleton tree.
    Sal,
    /// The limb-chain structure loss with the step weight schedule.
    LslDynamic,
}

impl LossVariant {
    pub fn name(self) -> &'static str {
        match self {
            LossVariant::MseOnly => "mse_only",
            LossVariant::Sal => "sal",
            LossVariant::LslDynamic => "lsl_dynamic",
        }
    }
}

/// One variant's aggregate over the suite.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ComparisonRow {
    pub variant: LossVariant,
    pub mean_final_distance: f64,
    pub final_distances: Vec<f64>,
    pub diverged_trials: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ComparisonTable {
    pub trials: usize,
    pub rows: Vec<ComparisonRow>,
}

impl ComparisonTable {
    pub fn row(&self, variant: LossVariant) -> Option<&ComparisonRow> {
        self.rows.iter().find(|r| r.variant == variant)
    }
}

/// Runs every variant over the same suite with identical settings and
/// reports final distances. The structure weight follows the step schedule
/// mapped onto the descent steps (zero for the first 139/210 of the run).
pub fn loss_comparison(
    suite: &[SyntheticInstance],
    variants: &[LossVariant],
    graph: &LimbGraph,
    lambda_max: f64,
    steps: usize,
    rate: f64,
) -> Result<ComparisonTable> {
    if suite.is_empty() {
        return Err(Error::Domain("suite must not be empty".into()));
    }
    if steps == 0 {
        return Err(Error::Domain("steps must be at least 1".into()));
    }
    let step_epoch = ((steps as f64) * 139.0 / 210.0).round() as u32;
    let schedule = ScheduleSpec {
        scheme: Scheme::Step,
        lambda_max,
        total_epochs: steps as u32,
        step_epoch,
        rate: 5.0,
    };
    let lambda_of = move |step: usize| {
        schedule
            .lambda_at(step as f64)
            .expect("descent step within schedule range")
    };
    let zero = |_: usize| 0.0;

    let mut rows = Vec::with_capacity(variants.len());
    for &variant in variants {
        let mut finals = Vec::with_capacity(suite.len());
        let mut diverged_trials = 0usize;
        for inst in suite {
            let outcome = match variant {
                LossVariant::MseOnly => descend(
                    inst,
                    graph,
                    &zero,
                    steps,
                    rate,
                    Supervision::StructureOnly,
                    StructureKernel::Limb,
                )?,
                LossVariant::Sal => descend(
                    inst,
                    graph,
                    &lambda_of,
                    steps,
                    rate,
                    Supervision::StructureOnly,
                    StructureKernel::SkeletonTree,
                )?,
                LossVariant::LslDynamic => descend(
                    inst,
                    graph,
                    &lambda_of,
                    steps,
                    rate,
                    Supervision::StructureOnly,
                    StructureKernel::Limb,
                )?,
            };
            diverged_trials += usize::from(outcome.diverged);
            finals.push(outcome.final_distance);
        }
        let mean = finals.iter().sum::<f64>() / finals.len() as f64;
        rows.push(ComparisonRow {
            variant,
            mean_final_distance: mean,
            final_distances: finals,
            diverged_trials,
        });
    }
    Ok(ComparisonTable {
        trials: suite.len(),
        rows,
    })
}

/// One-sided paired sign test: p-value for "xs tends to be smaller than
/// ys" under the null of symmetric signs. Ties are dropped.
pub fn sign_test_p_less(xs: &[f64], ys: &[f64]) -> f64 {
    assert_eq!(xs.len(), ys.len(), "sign test needs paired samples");
    let mut n = 0u32;
    let mut wins = 0u32;
    for (x, y) in xs.iter().zip(ys) {
        if x < y {
            wins += 1;
            n += 1;
        } else if x > y {
            n += 1;
        }
    }
    if n == 0 {
        return 1.0;
    }
    // P(Bin(n, 1/2) >= wins), computed stably via log factorials.
    let ln_fact = |m: u32| -> f64 { (1..=m).map(|v| f64::from(v).ln()).sum() };
    let mut p = 0.0f64;
    for k in wins..=n {
        let ln_choose = ln_fact(n) - ln_fact(k) - ln_fact(n - k);
        p += (ln_choose - f64::from(n) * 2.0f64.ln()).exp();
    }
    p.min(1.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_instance(seed: u64) -> SyntheticInstance {
        let mut rng = image_rng(seed, 0);
        SyntheticInstance::sample(
            &mut rng,
            EncodeSpec::default(),
            ShiftGridSpec { radius: 4, step: 1 },
        )
        .unwrap()
    }

    #[test]
    fn sampled_instances_fit_grid_and_know_truth() {
        for seed in 0..20 {
            let inst = small_instance(seed);
            let spec = inst.encode_spec;
            let margin = border_margin_cells(&spec) * spec.stride;
            for kp in inst.person.keypoints() {
                assert!(kp.vis == Visibility::Visible);
                assert!(kp.x >= margin && kp.x <= spec.width as f64 * spec.stride - margin);
                assert!(kp.y >= margin && kp.y <= spec.height as f64 * spec.stride - margin);
            }
            assert!(LIMB_JOINTS.contains(&inst.occluded));
            let norm = (inst.init_shift.0.powi(2) + inst.init_shift.1.powi(2)).sqrt();
            assert!(norm >= 1.0 - 1e-9 && norm <= 3.0 * spec.sigma + 1e-9);
        }
    }

    #[test]
    fn sweep_lsl_vanishes_only_at_origin() {
        let graph = LimbGraph::standard();
        let inst = small_instance(3);
        let sweep = shift_sweep(&inst, &graph, 1e-4).unwrap();
        assert_eq!(sweep.argmin_lsl, (0, 0));
        for entry in sweep.entries.iter().filter(|e| e.valid) {
            if (entry.dx, entry.dy) == (0, 0) {
                assert_eq!(entry.l_lsl, 0.0);
                assert_eq!(entry.l_mse, 0.0);
            } else {
                assert!(entry.l_lsl > 0.0, "lsl zero at {:?}", (entry.dx, entry.dy));
            }
        }
    }

    #[test]
    fn sweep_lambda_zero_matches_mse_argmin() {
        let graph = LimbGraph::standard();
        let inst = small_instance(5);
        let sweep = shift_sweep(&inst, &graph, 0.0).unwrap();
        assert_eq!(sweep.argmin_dsl, sweep.argmin_mse);
        for entry in sweep.entries.iter().filter(|e| e.valid) {
            assert_eq!(entry.l_dsl.to_bits(), entry.l_mse.to_bits());
        }
    }

    #[test]
    fn sweep_surfaces_compose_pointwise() {
        let graph = LimbGraph::standard();
        let inst = small_instance(7);
        let lambda = 1e-4;
        let sweep = shift_sweep(&inst, &graph, lambda).unwrap();
        for entry in sweep.entries.iter().filter(|e| e.valid) {
            let expect = entry.l_mse + lambda * entry.l_lsl;
            assert_eq!(entry.l_dsl.to_bits(), expect.to_bits());
        }
    }

    #[test]
    fn sweep_monotone_along_rays_near_origin() {
        let graph = LimbGraph::standard();
        let mut rng = image_rng(11, 0);
        let inst = SyntheticInstance::sample(
            &mut rng,
            EncodeSpec::default(),
            ShiftGridSpec { radius: 10, step: 1 },
        )
        .unwrap();
        let sweep = shift_sweep(&inst, &graph, 1e-4).unwrap();
        let side = 21i64;
        let at = |dx: i64, dy: i64| {
            let idx = ((dy + 10) * side + (dx + 10)) as usize;
            let e = &sweep.entries[idx];
            assert_eq!((e.dx, e.dy), (dx, dy));
            e
        };
        // Within three sigma of the origin the surfaces grow with distance.
        let within = 6i64;
        for &(sx, sy) in &[(1i64, 0i64), (-1, 0), (0, 1), (0, -1), (1, 1), (1, -1), (-1, 1), (-1, -1)] {
            let mut prev = at(0, 0);
            for k in 1..=within {
                let entry = at(sx * k, sy * k);
                if !entry.valid {
                    break;
                }
                assert!(
                    entry.l_mse >= prev.l_mse && entry.l_lsl >= prev.l_lsl,
                    "surface dipped along ray ({sx},{sy}) at k={k}"
                );
                prev = entry;
            }
        }
    }

    #[test]
    fn optimize_full_supervision_recovers_truth() {
        let graph = LimbGraph::standard();
        let inst = small_instance(13);
        let outcome =
            optimize_occluded_channel(&inst, &graph, 1e-4, 120, 4.0, Supervision::Full).unwrap();
        assert!(!outcome.diverged);
        assert!(outcome.final_distance <= inst.encode_spec.stride / 2.0 + 1e-9);
        assert_eq!(outcome.trajectory.len(), outcome.steps_run + 1);
    }

    #[test]
    fn optimize_structure_only_improves_with_positive_lambda() {
        let graph = LimbGraph::standard();
        let inst = small_instance(17);
        let outcome = optimize_occluded_channel(
            &inst,
            &graph,
            1e-4,
            200,
            1500.0,
            Supervision::StructureOnly,
        )
        .unwrap();
        assert!(!outcome.diverged);
        assert!(
            outcome.final_distance < outcome.init_distance,
            "no improvement: {} -> {}",
            outcome.init_distance,
            outcome.final_distance
        );
    }

    #[test]
    fn optimize_structure_only_lambda_zero_is_frozen() {
        let graph = LimbGraph::standard();
        let inst = small_instance(19);
        let outcome = optimize_occluded_channel(
            &inst,
            &graph,
            0.0,
            50,
            1500.0,
            Supervision::StructureOnly,
        )
        .unwrap();
        assert_eq!(outcome.final_distance, outcome.init_distance);
        assert!(outcome.trajectory.windows(2).all(|w| w[0] == w[1]));
    }

    #[test]
    fn optimize_is_deterministic() {
        let graph = LimbGraph::standard();
        let inst = small_instance(23);
        let a = optimize_occluded_channel(&inst, &graph, 1e-4, 60, 4.0, Supervision::Full).unwrap();
        let b = optimize_occluded_channel(&inst, &graph, 1e-4, 60, 4.0, Supervision::Full).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn comparison_prefers_structure_over_frozen_mse() {
        let graph = LimbGraph::standard();
        let suite = sample_suite(29, 8, EncodeSpec::default(), ShiftGridSpec::default()).unwrap();
        let table = loss_comparison(
            &suite,
            &[LossVariant::MseOnly, LossVariant::Sal, LossVariant::LslDynamic],
            &graph,
            1e-4,
            150,
            1500.0,
        )
        .unwrap();
        assert_eq!(table.rows.len(), 3);
        assert_eq!(table.trials, 8);
        let mse = table.row(LossVariant::MseOnly).unwrap();
        let lsl = table.row(LossVariant::LslDynamic).unwrap();
        assert!(lsl.mean_final_distance <= mse.mean_final_distance);
    }

    #[test]
    fn comparison_zero_init_is_already_optimal() {
        let graph = LimbGraph::standard();
        let mut suite = sample_suite(31, 3, EncodeSpec::default(), ShiftGridSpec::default()).unwrap();
        for inst in &mut suite {
            inst.init_shift = (0.0, 0.0);
        }
        let table = loss_comparison(
            &suite,
            &[LossVariant::MseOnly, LossVariant::LslDynamic],
            &graph,
            1e-4,
            50,
            1500.0,
        )
        .unwrap();
        for row in &table.rows {
            for &d in &row.final_distances {
                assert!(d <= 1e-9, "{:?} moved from an optimal start", row.variant);
            }
        }
    }

    #[test]
    fn sign_test_behaves() {
        let xs = vec![0.0; 20];
        let ys = vec![1.0; 20];
        assert!(sign_test_p_less(&xs, &ys) < 1e-5);
        assert_eq!(sign_test_p_less(&xs, &xs), 1.0);
        let p = sign_test_p_less(&ys, &xs);
        assert!(p > 0.999); // all pairs go the wrong way
    }
}
