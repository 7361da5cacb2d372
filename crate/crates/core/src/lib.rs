//! Training-time tooling for occluded human pose estimation.
//!
//! The crate covers the data path and loss math of a heatmap-based pose
//! pipeline so that an external trainer only has to run the network:
//!
//! - [`keypoints`] / [`dataset`]: COCO-style 17-joint data model, the fixed
//!   two-chain limb graph, and annotation parsing.
//! - [`augment`]: limb joint occlusion augmentation (random constant-fill
//!   blocks over visible limb joints).
//! - [`heatmap`] / [`hms1`]: Gaussian target encoding, argmax decoding,
//!   limb structure heatmaps, and the `HMS1` binary interchange format.
//! - [`loss`]: heatmap MSE, limb structure loss, their weighted combination,
//!   and the analytic gradient of the combined loss.
//! - [`schedule`]: the four weighting-factor schedules (constant, step,
//!   linear, exponential).
//! - [`eval`]: OKS similarity and AP/AR evaluation with greedy matching.
//! - [`toyfit`]: a desk-scale harness that optimizes heatmaps directly to
//!   probe how the structure loss localizes an unsupervised joint.
//!
//! Heatmap storage is generic over the scalar type ([`Scalar`]: `f32` or
//! `f64`); all loss reductions accumulate in `f64` regardless of storage.

pub mod augment;
pub mod dataset;
pub mod error;
pub mod eval;
pub mod heatmap;
pub mod hms1;
pub mod keypoints;
pub mod loss;
pub mod raster;
pub mod scalar;
pub mod schedule;
pub mod toyfit;

pub use error::{Error, Result};
pub use scalar::Scalar;

pub use augment::{
    apply_occlusion, augment_instance, image_rng, occlusion_rect, select_occlusion_joints,
    AugmentConfig, ClippedRect, FillMode, OcclusionRecord, PixelRect,
};
pub use dataset::{parse_annotations, Dataset, ImageRecord, ParseWarnings};
pub use eval::{evaluate, oks, EvalReport, PredictionInstance, OKS_K};
pub use heatmap::{decode, encode, structure_heatmap, DecodedJoint, EncodeReport, HeatmapStack, StructureStack};
pub use keypoints::{joints, BBox, Keypoint, LimbGraph, PersonInstance, Visibility, JOINT_COUNT, LIMB_JOINTS};
pub use loss::{
    dsl_gradient, dsl_loss, dsl_loss_batch, limb_structure_loss, mse_loss, LossBreakdown,
    LossSample,
};
pub use raster::ImageBuf;
pub use schedule::{ScheduleSpec, Scheme};

/// Heatmap stack with `f32` storage, the `HMS1` on-disk precision.
pub type HeatmapF32 = HeatmapStack<f32>;
/// Heatmap stack with `f64` storage, used wherever oracle-grade accuracy matters.
pub type HeatmapF64 = HeatmapStack<f64>;
