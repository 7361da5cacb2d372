//! COCO-style annotation ingestion.
//!
//! The accepted subset is `images[].{id,file_name,width,height}` plus
//! `annotations[].{id,image_id,bbox,keypoints,area}`; unknown fields are
//! ignored. An optional free-form `difficulty` string on an image record
//! groups that image for per-tag evaluation.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::keypoints::{BBox, Keypoint, PersonInstance, Visibility, JOINT_COUNT};

/// One image entry from the annotation file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ImageRecord {
    pub id: u64,
    pub file_name: String,
    pub width: u32,
    pub height: u32,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub difficulty: Option<String>,
}

/// Non-fatal issues encountered while loading.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct ParseWarnings {
    /// Boxes that extended past their image and were clamped.
    pub clamped_bboxes: usize,
    /// Instances whose keypoint array was entirely zero (retained).
    pub zero_keypoint_instances: usize,
}

/// Parsed annotation set: image records plus per-image person instances.
#[derive(Debug, Clone)]
pub struct Dataset {
    images: Vec<ImageRecord>,
    instances: BTreeMap<u64, Vec<PersonInstance>>,
    warnings: ParseWarnings,
}

impl Dataset {
    /// Image records in file order.
    pub fn images(&self) -> &[ImageRecord] {
        &self.images
    }

    pub fn image(&self, id: u64) -> Option<&ImageRecord> {
        self.images.iter().find(|im| im.id == id)
    }

    /// Instances of one image, ascending by annotation id.
    pub fn instances_for(&self, image_id: u64) -> &[PersonInstance] {
        self.instances
            .get(&image_id)
            .map(Vec::as_slice)
            .unwrap_or(&[])
    }

    /// All `(image_id, instance)` pairs, ascending by image id then
    /// annotation id.
    pub fn all_instances(&self) -> impl Iterator<Item = (u64, &PersonInstance)> {
        self.instances
            .iter()
            .flat_map(|(&id, list)| list.iter().map(move |inst| (id, inst)))
    }

    pub fn instance_count(&self) -> usize {
        self.instances.values().map(Vec::len).sum()
    }

    pub fn warnings(&self) -> ParseWarnings {
        self.warnings
    }

    /// Normalized re-serialization of the accepted subset, for round-trip
    /// checks. Images keep file order; annotations are sorted by image id
    /// then annotation id.
    pub fn to_coco_json(&self) -> String {
        let annotations: Vec<RawAnnotation> = self
            .all_instances()
            .map(|(image_id, inst)| {
                let bbox = inst.bbox();
                let mut flat = Vec::with_capacity(JOINT_COUNT * 3);
                for kp in inst.keypoints() {
                    flat.push(kp.x);
                    flat.push(kp.y);
                    flat.push(f64::from(kp.vis.to_coco_flag()));
                }
                RawAnnotation {
                    id: inst.id(),
                    image_id,
                    bbox: [bbox.x0, bbox.y0, bbox.w, bbox.h],
                    keypoints: flat,
                    area: Some(inst.area()),
                }
            })
            .collect();
        let root = RawRoot {
            images: self.images.clone(),
            annotations,
        };
        serde_json::to_string_pretty(&root).expect("dataset serialization cannot fail")
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct RawRoot {
    images: Vec<ImageRecord>,
    annotations: Vec<RawAnnotation>,
}

#[derive(Debug, Serialize, Deserialize)]
struct RawAnnotation {
    id: u64,
    image_id: u64,
    bbox: [f64; 4],
    keypoints: Vec<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    area: Option<f64>,
}

/// Parses a COCO-style annotation file.
///
/// Visibility flags map 0/1/2 to not-labeled/occluded/visible. Boxes
/// reaching past the image are clamped (counted in the warnings); boxes
/// entirely outside are rejected. All-zero keypoint arrays are retained and
/// counted.
pub fn parse_annotations(bytes: &[u8]) -> Result<Dataset> {
    let root: RawRoot = serde_json::from_slice(bytes).map_err(|err| json_error(bytes, err))?;

    let mut images = Vec::with_capacity(root.images.len());
    let mut by_id: BTreeMap<u64, (u32, u32)> = BTreeMap::new();
    for image in root.images {
        if by_id.insert(image.id, (image.width, image.height)).is_some() {
            return Err(Error::Schema(format!("duplicate image id {}", image.id)));
        }
        if image.width == 0 || image.height == 0 {
            return Err(Error::Schema(format!(
                "image {} has zero width or height",
                image.id
            )));
        }
        images.push(image);
    }

    let mut warnings = ParseWarnings::default();
    let mut instances: BTreeMap<u64, Vec<PersonInstance>> = BTreeMap::new();
    for ann in root.annotations {
        let (img_w, img_h) = *by_id.get(&ann.image_id).ok_or_else(|| {
            Error::Schema(format!(
                "annotation {} references unknown image id {}",
                ann.id, ann.image_id
            ))
        })?;

        if ann.keypoints.len() != JOINT_COUNT * 3 {
            return Err(Error::Schema(format!(
                "annotation {}: `keypoints` must contain {} numbers, got {}",
                ann.id,
                JOINT_COUNT * 3,
                ann.keypoints.len()
            )));
        }
        if ann.keypoints.iter().all(|&v| v == 0.0) {
            warnings.zero_keypoint_instances += 1;
        }

        let mut keypoints = [Keypoint::not_labeled(); JOINT_COUNT];
        for j in 0..JOINT_COUNT {
            let x = ann.keypoints[3 * j];
            let y = ann.keypoints[3 * j + 1];
            let flag = ann.keypoints[3 * j + 2];
            if flag.fract() != 0.0 {
                return Err(Error::Schema(format!(
                    "annotation {}: `keypoints` visibility flag {flag} is not an integer",
                    ann.id
                )));
            }
            let vis = Visibility::from_coco_flag(flag as i64)
                .map_err(|e| Error::Schema(format!("annotation {}: {e}", ann.id)))?;
            keypoints[j] = Keypoint::new(x, y, vis);
        }

        let bbox = clamp_bbox(&ann, img_w, img_h, &mut warnings)?;
        let inst = PersonInstance::new(ann.id, bbox, keypoints, ann.area)
            .map_err(|e| Error::Schema(e.to_string()))?;
        let list = instances.entry(ann.image_id).or_default();
        list.push(inst);
    }
    for list in instances.values_mut() {
        list.sort_by_key(PersonInstance::id);
    }

    Ok(Dataset {
        images,
        instances,
        warnings,
    })
}

fn clamp_bbox(
    ann: &RawAnnotation,
    img_w: u32,
    img_h: u32,
    warnings: &mut ParseWarnings,
) -> Result<BBox> {
    let [x0, y0, w, h] = ann.bbox;
    if !(w > 0.0 && h > 0.0 && x0.is_finite() && y0.is_finite()) {
        return Err(Error::Schema(format!(
            "annotation {}: bbox must be finite with positive size",
            ann.id
        )));
    }
    let (img_w, img_h) = (f64::from(img_w), f64::from(img_h));
    let cx0 = x0.clamp(0.0, img_w);
    let cy0 = y0.clamp(0.0, img_h);
    let cx1 = (x0 + w).clamp(0.0, img_w);
    let cy1 = (y0 + h).clamp(0.0, img_h);
    if cx1 <= cx0 || cy1 <= cy0 {
        return Err(Error::Schema(format!(
            "annotation {}: bbox lies entirely outside its image",
            ann.id
        )));
    }
    if cx0 != x0 || cy0 != y0 || cx1 != x0 + w || cy1 != y0 + h {
        warnings.clamped_bboxes += 1;
    }
    Ok(BBox {
        x0: cx0,
        y0: cy0,
        w: cx1 - cx0,
        h: cy1 - cy0,
    })
}

fn json_error(bytes: &[u8], err: serde_json::Error) -> Error {
    if err.is_data() {
        return Error::Schema(err.to_string());
    }
    let (line, column) = (err.line(), err.column());
    Error::Parse {
        offset: byte_offset(bytes, line, column),
        line,
        column,
        message: err.to_string(),
    }
}

/// Byte offset of 1-based (line, column) in `bytes`.
fn byte_offset(bytes: &[u8], line: usize, column: usize) -> usize {
    if line == 0 {
        return 0;
    }
    let mut current_line = 1;
    let mut line_start = 0;
    for (i, &b) in bytes.iter().enumerate() {
        if current_line == line {
            line_start = i;
            break;
        }
        if b == b'\n' {
            current_line += 1;
            line_start = i + 1;
        }
    }
    (line_start + column.saturating_sub(1)).min(bytes.len())
}
