//! Gaussian heatmap encoding/decoding and limb structure heatmaps.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::keypoints::{LimbGraph, PersonInstance, JOINT_COUNT, LIMB_JOINTS};
use crate::scalar::Scalar;

/// K x H x W grid of per-joint confidences with encode metadata.
///
/// `stride` is input pixels per heatmap cell; `sigma` is in heatmap cells.
/// Storage is generic over [`Scalar`]; gradient fields reuse the container,
/// so values are only required to be finite, not non-negative.
#[derive(Debug, Clone, PartialEq)]
pub struct HeatmapStack<T> {
    channels: usize,
    height: usize,
    width: usize,
    sigma: f64,
    stride: f64,
    data: Vec<T>,
}

impl<T: Scalar> HeatmapStack<T> {
    pub fn zeros(channels: usize, height: usize, width: usize, sigma: f64, stride: f64) -> Result<Self> {
        Self::from_vec(
            vec![T::zero(); channels * height * width],
            channels,
            height,
            width,
            sigma,
            stride,
        )
    }

    pub fn from_vec(
        data: Vec<T>,
        channels: usize,
        height: usize,
        width: usize,
        sigma: f64,
        stride: f64,
    ) -> Result<Self> {
        if channels == 0 {
            return Err(Error::Domain("stack needs at least one channel".into()));
        }
        if height < 2 || width < 2 {
            return Err(Error::Domain(format!(
                "heatmap grid must be at least 2x2, got {height}x{width}"
            )));
        }
        if !(sigma > 0.0 && sigma.is_finite()) {
            return Err(Error::Domain(format!("sigma must be positive, got {sigma}")));
        }
        if !(stride >= 1.0 && stride.is_finite()) {
            return Err(Error::Domain(format!("stride must be >= 1, got {stride}")));
        }
        if data.len() != channels * height * width {
            return Err(Error::Domain(format!(
                "data length {} does not match {channels}x{height}x{width}",
                data.len()
            )));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::Domain("heatmap values must be finite".into()));
        }
        Ok(HeatmapStack {
            channels,
            height,
            width,
            sigma,
            stride,
            data,
        })
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    pub fn stride(&self) -> f64 {
        self.stride
    }

    pub fn shape(&self) -> (usize, usize, usize) {
        (self.channels, self.height, self.width)
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn channel(&self, i: usize) -> &[T] {
        let plane = self.height * self.width;
        &self.data[i * plane..(i + 1) * plane]
    }

    pub fn channel_mut(&mut self, i: usize) -> &mut [T] {
        let plane = self.height * self.width;
        &mut self.data[i * plane..(i + 1) * plane]
    }

    pub fn at(&self, channel: usize, row: usize, col: usize) -> T {
        self.data[(channel * self.height + row) * self.width + col]
    }

    /// Converts storage precision, keeping metadata.
    pub fn cast<U: Scalar>(&self) -> HeatmapStack<U> {
        HeatmapStack {
            channels: self.channels,
            height: self.height,
            width: self.width,
            sigma: self.sigma,
            stride: self.stride,
            data: self.data.iter().map(|v| U::from_f64_lossy(v.as_f64())).collect(),
        }
    }
}

/// M x H x W stack of limb structure rows (joint plus chain neighbors),
/// M = 12, row order [`LIMB_JOINTS`].
#[derive(Debug, Clone, PartialEq)]
pub struct StructureStack<T> {
    height: usize,
    width: usize,
    sigma: f64,
    stride: f64,
    data: Vec<T>,
}

impl<T: Scalar> StructureStack<T> {
    pub fn rows(&self) -> usize {
        LIMB_JOINTS.len()
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    pub fn stride(&self) -> f64 {
        self.stride
    }

    /// Joint index whose structure sum lives in row `m`.
    pub fn joint_for_row(m: usize) -> usize {
        LIMB_JOINTS[m]
    }

    pub fn row(&self, m: usize) -> &[T] {
        let plane = self.height * self.width;
        &self.data[m * plane..(m + 1) * plane]
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }
}

/// Labeled joints whose quantized center fell outside the grid; their
/// channels are all-zero.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct EncodeReport {
    pub out_of_grid: Vec<usize>,
}

/// Encodes ground-truth keypoints as unnormalized Gaussians with peak 1.0
/// at the quantized joint cell. `grid` is `(height, width)`; joint cell is
/// `round(coordinate / stride)`. Unlabeled joints produce all-zero channels.
pub fn encode<T: Scalar>(
    inst: &PersonInstance,
    grid: (usize, usize),
    sigma: f64,
    stride: f64,
) -> Result<(HeatmapStack<T>, EncodeReport)> {
    let (height, width) = grid;
    let mut stack = HeatmapStack::<T>::zeros(JOINT_COUNT, height, width, sigma, stride)?;
    let mut report = EncodeReport::default();
    for (j, kp) in inst.keypoints().iter().enumerate() {
        if !kp.vis.is_labeled() {
            continue;
        }
        let cu = (kp.x / stride).round();
        let cv = (kp.y / stride).round();
        if cu < 0.0 || cv < 0.0 || cu >= width as f64 || cv >= height as f64 {
            report.out_of_grid.push(j);
            continue;
        }
        write_gaussian(stack.channel_mut(j), width, cu, cv, sigma);
    }
    Ok((stack, report))
}

/// Writes `exp(-((u-cu)^2 + (v-cv)^2) / (2 sigma^2))` over the channel.
pub(crate) fn write_gaussian<T: Scalar>(channel: &mut [T], width: usize, cu: f64, cv: f64, sigma: f64) {
    let denom = 2.0 * sigma * sigma;
    for (idx, out) in channel.iter_mut().enumerate() {
        let u = (idx % width) as f64;
        let v = (idx / width) as f64;
        let d2 = (u - cu) * (u - cu) + (v - cv) * (v - cv);
        *out = T::from_f64_lossy((-d2 / denom).exp());
    }
}

/// One decoded joint in input-pixel coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DecodedJoint {
    pub x: f64,
    pub y: f64,
    pub confidence: f64,
    /// Set for all-zero channels; coordinates are reported as (0, 0).
    pub missing: bool,
}

/// Argmax decoding with quarter-cell refinement toward the larger adjacent
/// value on each axis. Ties pick the first cell in row-major order.
pub fn decode<T: Scalar>(hm: &HeatmapStack<T>) -> Vec<DecodedJoint> {
    let (channels, height, width) = hm.shape();
    let mut out = Vec::with_capacity(channels);
    for c in 0..channels {
        let plane = hm.channel(c);
        if plane.iter().all(|v| *v == T::zero()) {
            out.push(DecodedJoint {
                x: 0.0,
                y: 0.0,
                confidence: 0.0,
                missing: true,
            });
            continue;
        }
        let mut best = 0usize;
        for (idx, v) in plane.iter().enumerate() {
            if *v > plane[best] {
                best = idx;
            }
        }
        let (row, col) = (best / width, best % width);
        let value = |r: usize, c: usize| plane[r * width + c].as_f64();
        let quarter = |diff: f64| {
            if diff > 0.0 {
                0.25
            } else if diff < 0.0 {
                -0.25
            } else {
                0.0
            }
        };
        let mut du = 0.0;
        if col >= 1 && col + 1 < width {
            du = quarter(value(row, col + 1) - value(row, col - 1));
        }
        let mut dv = 0.0;
        if row >= 1 && row + 1 < height {
            dv = quarter(value(row + 1, col) - value(row - 1, col));
        }
        out.push(DecodedJoint {
            x: (col as f64 + du) * hm.stride(),
            y: (row as f64 + dv) * hm.stride(),
            confidence: plane[best].as_f64(),
            missing: false,
        });
    }
    out
}

/// Builds the limb structure stack: row for joint `i` is `hm[i]` plus the
/// channels of its chain neighbors, with no clipping or renormalization.
pub fn structure_heatmap<T: Scalar>(hm: &HeatmapStack<T>, graph: &LimbGraph) -> Result<StructureStack<T>> {
    if hm.channels() != JOINT_COUNT {
        return Err(Error::Domain(format!(
            "structure heatmaps need {JOINT_COUNT} channels, got {}",
            hm.channels()
        )));
    }
    let plane = hm.height() * hm.width();
    let mut data = vec![T::zero(); LIMB_JOINTS.len() * plane];
    for (m, &joint) in LIMB_JOINTS.iter().enumerate() {
        let row = &mut data[m * plane..(m + 1) * plane];
        row.copy_from_slice(hm.channel(joint));
        for &nbr in graph.neighbors(joint)? {
            let src = hm.channel(nbr);
            for (dst, s) in row.iter_mut().zip(src) {
                *dst = *dst + *s;
            }
        }
    }
    Ok(StructureStack {
        height: hm.height(),
        width: hm.width(),
        sigma: hm.sigma(),
        stride: hm.stride(),
        data,
    })
}
