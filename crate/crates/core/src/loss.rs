//! Heatmap losses: per-joint MSE, limb structure loss, and their weighted
//! combination with an analytic gradient.
//!
//! All reductions accumulate in `f64` with a fixed order (channel-major,
//! then row-major) regardless of storage precision, so results are
//! bit-reproducible and comparable against scalar-loop references at tight
//! tolerances.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::heatmap::HeatmapStack;
use crate::keypoints::{LimbGraph, JOINT_COUNT, LIMB_JOINTS};
use crate::scalar::Scalar;

/// The combined loss and its parts for one sample or batch.
///
/// `l_dsl = l_mse + lambda * l_lsl` holds exactly; there are no hidden
/// terms.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LossBreakdown {
    pub l_mse: f64,
    pub l_lsl: f64,
    pub lambda: f64,
    pub l_dsl: f64,
    /// Channels that entered the MSE term.
    pub joint_mask: Vec<bool>,
}

/// Borrowed batch element.
#[derive(Debug, Clone, Copy)]
pub struct LossSample<'a, T> {
    pub pred: &'a HeatmapStack<T>,
    pub gt: &'a HeatmapStack<T>,
    pub mask: &'a [bool],
}

fn check_shapes<T: Scalar>(pred: &HeatmapStack<T>, gt: &HeatmapStack<T>) -> Result<()> {
    if pred.shape() != gt.shape() {
        return Err(Error::Domain(format!(
            "stack shapes differ: {:?} vs {:?}",
            pred.shape(),
            gt.shape()
        )));
    }
    Ok(())
}

fn check_mask<T: Scalar>(pred: &HeatmapStack<T>, mask: &[bool]) -> Result<usize> {
    if mask.len() != pred.channels() {
        return Err(Error::Domain(format!(
            "mask length {} does not match {} channels",
            mask.len(),
            pred.channels()
        )));
    }
    let supervised = mask.iter().filter(|&&m| m).count();
    if supervised == 0 {
        return Err(Error::Domain(
            "at least one joint must be supervised".into(),
        ));
    }
    Ok(supervised)
}

/// Mean squared heatmap error over supervised joints:
/// `(1/N) * sum_i sum_cells (pred_i - gt_i)^2` with `N` the count of mask
/// entries set.
pub fn mse_loss<T: Scalar>(
    pred: &HeatmapStack<T>,
    gt: &HeatmapStack<T>,
    mask: &[bool],
) -> Result<f64> {
    check_shapes(pred, gt)?;
    let supervised = check_mask(pred, mask)?;
    let mut total = 0.0f64;
    for c in 0..pred.channels() {
        if !mask[c] {
            continue;
        }
        let mut channel_sum = 0.0f64;
        for (p, g) in pred.channel(c).iter().zip(gt.channel(c)) {
            let d = p.as_f64() - g.as_f64();
            channel_sum += d * d;
        }
        total += channel_sum;
    }
    Ok(total / supervised as f64)
}

/// Limb structure loss: squared error between predicted and ground-truth
/// structure rows, summed over the 12 limb joints. Deliberately not divided
/// by the row count; the weighting factor absorbs scale.
pub fn limb_structure_loss<T: Scalar>(
    pred: &HeatmapStack<T>,
    gt: &HeatmapStack<T>,
    graph: &LimbGraph,
) -> Result<f64> {
    check_shapes(pred, gt)?;
    if pred.channels() != JOINT_COUNT {
        return Err(Error::Domain(format!(
            "limb structure loss needs {JOINT_COUNT} channels, got {}",
            pred.channels()
        )));
    }
    let plane = pred.height() * pred.width();
    let mut total = 0.0f64;
    for &joint in &LIMB_JOINTS {
        let neighbors = graph.neighbors(joint)?;
        let mut row_sum = 0.0f64;
        for cell in 0..plane {
            let mut p = pred.channel(joint)[cell].as_f64();
            let mut g = gt.channel(joint)[cell].as_f64();
            for &nbr in neighbors {
                p += pred.channel(nbr)[cell].as_f64();
                g += gt.channel(nbr)[cell].as_f64();
            }
            let d = p - g;
            row_sum += d * d;
        }
        total += row_sum;
    }
    Ok(total)
}

/// Combined loss `l_mse + lambda * l_lsl` with its parts.
pub fn dsl_loss<T: Scalar>(
    pred: &HeatmapStack<T>,
    gt: &HeatmapStack<T>,
    graph: &LimbGraph,
    lambda: f64,
    mask: &[bool],
) -> Result<LossBreakdown> {
    check_lambda(lambda)?;
    let l_mse = mse_loss(pred, gt, mask)?;
    let l_lsl = limb_structure_loss(pred, gt, graph)?;
    Ok(LossBreakdown {
        l_mse,
        l_lsl,
        lambda,
        l_dsl: l_mse + lambda * l_lsl,
        joint_mask: mask.to_vec(),
    })
}

fn check_lambda(lambda: f64) -> Result<()> {
    if lambda >= 0.0 && lambda.is_finite() {
        Ok(())
    } else {
        Err(Error::Domain(format!(
            "lambda must be non-negative and finite, got {lambda}"
        )))
    }
}

/// Analytic gradient of the combined loss with respect to the prediction:
///
/// `d/d pred_j = (2/N)(pred_j - gt_j) * [j in mask]
///             + 2 lambda * sum over structure rows containing j of (P'_i - G'_i)`
///
/// Non-limb channels receive only the MSE term. Metadata (sigma, stride) is
/// copied from `pred`.
pub fn dsl_gradient<T: Scalar>(
    pred: &HeatmapStack<T>,
    gt: &HeatmapStack<T>,
    graph: &LimbGraph,
    lambda: f64,
    mask: &[bool],
) -> Result<HeatmapStack<T>> {
    check_lambda(lambda)?;
    check_shapes(pred, gt)?;
    let supervised = check_mask(pred, mask)?;
    if pred.channels() != JOINT_COUNT {
        return Err(Error::Domain(format!(
            "gradient needs {JOINT_COUNT} channels, got {}",
            pred.channels()
        )));
    }

    let (channels, height, width) = pred.shape();
    let plane = height * width;
    let mut grad = vec![0.0f64; channels * plane];

    let scale = 2.0 / supervised as f64;
    for c in 0..channels {
        if !mask[c] {
            continue;
        }
        let row = &mut grad[c * plane..(c + 1) * plane];
        for (out, (p, g)) in row.iter_mut().zip(pred.channel(c).iter().zip(gt.channel(c))) {
            *out = scale * (p.as_f64() - g.as_f64());
        }
    }

    if lambda > 0.0 {
        let mut residual = vec![0.0f64; plane];
        for &joint in &LIMB_JOINTS {
            let neighbors = graph.neighbors(joint)?;
            for (cell, r) in residual.iter_mut().enumerate() {
                let mut p = pred.channel(joint)[cell].as_f64();
                let mut g = gt.channel(joint)[cell].as_f64();
                for &nbr in neighbors {
                    p += pred.channel(nbr)[cell].as_f64();
                    g += gt.channel(nbr)[cell].as_f64();
                }
                *r = p - g;
            }
            // The row for `joint` differentiates through every member of
            // its structure sum.
            for &member in std::iter::once(&joint).chain(neighbors) {
                let row = &mut grad[member * plane..(member + 1) * plane];
                for (out, r) in row.iter_mut().zip(&residual) {
                    *out += 2.0 * lambda * r;
                }
            }
        }
    }

    HeatmapStack::from_vec(
        grad.into_iter().map(T::from_f64_lossy).collect(),
        channels,
        height,
        width,
        pred.sigma(),
        pred.stride(),
    )
}

/// Batch loss: arithmetic mean of per-sample losses. The recorded mask is
/// the union of per-sample masks.
pub fn dsl_loss_batch<T: Scalar>(
    samples: &[LossSample<'_, T>],
    graph: &LimbGraph,
    lambda: f64,
) -> Result<LossBreakdown> {
    if samples.is_empty() {
        return Err(Error::Domain("batch must contain at least one sample".into()));
    }
    let mut l_mse = 0.0f64;
    let mut l_lsl = 0.0f64;
    let mut union_mask = vec![false; samples[0].pred.channels()];
    for sample in samples {
        let one = dsl_loss(sample.pred, sample.gt, graph, lambda, sample.mask)?;
        l_mse += one.l_mse;
        l_lsl += one.l_lsl;
        for (u, &m) in union_mask.iter_mut().zip(sample.mask) {
            *u |= m;
        }
    }
    let n = samples.len() as f64;
    let l_mse = l_mse / n;
    let l_lsl = l_lsl / n;
    Ok(LossBreakdown {
        l_mse,
        l_lsl,
        lambda,
        l_dsl: l_mse + lambda * l_lsl,
        joint_mask: union_mask,
    })
}

/// Per-sample gradients of the batch-mean loss (each sample's gradient
/// scaled by `1 / batch`).
pub fn dsl_gradient_batch<T: Scalar>(
    samples: &[LossSample<'_, T>],
    graph: &LimbGraph,
    lambda: f64,
) -> Result<Vec<HeatmapStack<T>>> {
    if samples.is_empty() {
        return Err(Error::Domain("batch must contain at least one sample".into()));
    }
    let inv = 1.0 / samples.len() as f64;
    samples
        .iter()
        .map(|sample| {
            let grad = dsl_gradient(sample.pred, sample.gt, graph, lambda, sample.mask)?;
            let scaled: Vec<T> = grad
                .data()
                .iter()
                .map(|v| T::from_f64_lossy(v.as_f64() * inv))
                .collect();
            HeatmapStack::from_vec(
                scaled,
                grad.channels(),
                grad.height(),
                grad.width(),
                grad.sigma(),
                grad.stride(),
            )
        })
        .collect()
}
