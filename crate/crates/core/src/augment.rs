//! Limb joint occlusion augmentation.
//!
//! Visible limb joints are sampled, a constant-fill block sized as a fixed
//! fraction of the person box is centered on each selected joint, and the
//! blocks are pasted over the image. Ground-truth annotations are never
//! modified: the model is supervised to predict the covered joints' true
//! positions.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::keypoints::{LimbGraph, PersonInstance};
use crate::raster::ImageBuf;

/// Fill value policy for occlusion blocks. One value is drawn per block and
/// applied to every channel, so blocks are always gray.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FillMode {
    /// Independent uniform draw from 0..=255 per block.
    RandomUniform,
    /// Fixed value; 169 reproduces the high-contrast visualization setting.
    Fixed(u8),
}

/// Occlusion augmentation parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AugmentConfig {
    /// Occlusion quantity ratio: fraction of visible limb joints to cover,
    /// rounded up.
    pub alpha: f64,
    /// Downscale ratio: block size as a fraction of the person box.
    pub beta: f64,
    pub seed: u64,
    pub fill_mode: FillMode,
}

impl Default for AugmentConfig {
    fn default() -> Self {
        AugmentConfig {
            alpha: 0.15,
            beta: 0.20,
            seed: 0,
            fill_mode: FillMode::RandomUniform,
        }
    }
}

impl AugmentConfig {
    pub fn validate(&self) -> Result<()> {
        check_ratio("alpha", self.alpha)?;
        check_ratio("beta", self.beta)
    }
}

fn check_ratio(name: &str, value: f64) -> Result<()> {
    if value > 0.0 && value <= 1.0 {
        Ok(())
    } else {
        Err(Error::Domain(format!(
            "{name} must lie in (0, 1], got {value}"
        )))
    }
}

/// Integer pixel rectangle, right-open: covers columns `x_min..x_max` and
/// rows `y_min..y_max`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PixelRect {
    pub x_min: u32,
    pub y_min: u32,
    pub x_max: u32,
    pub y_max: u32,
}

impl PixelRect {
    pub fn width(&self) -> u32 {
        self.x_max.saturating_sub(self.x_min)
    }

    pub fn height(&self) -> u32 {
        self.y_max.saturating_sub(self.y_min)
    }

    pub fn area(&self) -> u64 {
        u64::from(self.width()) * u64::from(self.height())
    }

    pub fn is_empty(&self) -> bool {
        self.x_min >= self.x_max || self.y_min >= self.y_max
    }

    pub fn contains(&self, x: u32, y: u32) -> bool {
        x >= self.x_min && x < self.x_max && y >= self.y_min && y < self.y_max
    }
}

/// An occlusion rectangle clipped to the image grid.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ClippedRect {
    pub rect: PixelRect,
    /// Set when the intersection with the image is empty or covers at most
    /// one pixel.
    pub degenerate: bool,
}

impl ClippedRect {
    pub fn is_empty(&self) -> bool {
        self.rect.is_empty()
    }
}

/// One pasted block: the covered joint, the clipped rectangle, the fill.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct OcclusionRecord {
    pub joint: usize,
    pub rect: PixelRect,
    pub fill: u8,
}

/// Per-image generator keyed by `(seed, image_id)`, so parallel runs and
/// any image visiting order produce identical draws.
pub fn image_rng(seed: u64, image_id: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(image_id);
    rng
}

/// Draws `ceil(alpha * len)` distinct joints uniformly without replacement,
/// returned ascending.
pub fn select_occlusion_joints<R: Rng + ?Sized>(
    visible: &[usize],
    alpha: f64,
    rng: &mut R,
) -> Result<Vec<usize>> {
    check_ratio("alpha", alpha)?;
    debug_assert!(
        (1..visible.len()).all(|i| !visible[..i].contains(&visible[i])),
        "visible joint list must not contain duplicates"
    );
    let count = (alpha * visible.len() as f64).ceil() as usize;
    if count == 0 {
        return Ok(Vec::new());
    }
    let mut picked: Vec<usize> = rand::seq::index::sample(rng, visible.len(), count)
        .into_iter()
        .map(|i| visible[i])
        .collect();
    picked.sort_unstable();
    Ok(picked)
}

/// Builds the occlusion rectangle for a joint: block size is
/// `beta * (bbox_h, bbox_w)` centered on the joint, clipped to the image
/// and rounded outward to whole pixels (floor the minima, ceil the maxima).
///
/// A joint entirely outside the image yields an empty rectangle with the
/// degenerate flag set; callers skip those.
pub fn occlusion_rect(
    joint_xy: (f64, f64),
    bbox_hw: (f64, f64),
    beta: f64,
    image_wh: (u32, u32),
) -> Result<ClippedRect> {
    check_ratio("beta", beta)?;
    let (x, y) = joint_xy;
    let (bbox_h, bbox_w) = bbox_hw;
    if !(bbox_h > 0.0 && bbox_w > 0.0 && bbox_h.is_finite() && bbox_w.is_finite()) {
        return Err(Error::Domain(format!(
            "bbox size must be positive and finite, got h={bbox_h} w={bbox_w}"
        )));
    }
    if !(x.is_finite() && y.is_finite()) {
        return Err(Error::Domain("joint coordinates must be finite".into()));
    }
    let (img_w, img_h) = (f64::from(image_wh.0), f64::from(image_wh.1));

    let block_h = beta * bbox_h;
    let block_w = beta * bbox_w;
    let raw_x0 = x - block_w / 2.0;
    let raw_y0 = y - block_h / 2.0;
    let raw_x1 = x + block_w / 2.0;
    let raw_y1 = y + block_h / 2.0;

    let x_min = raw_x0.max(0.0).min(img_w).floor() as u32;
    let y_min = raw_y0.max(0.0).min(img_h).floor() as u32;
    let x_max = raw_x1.min(img_w).max(0.0).ceil() as u32;
    let y_max = raw_y1.min(img_h).max(0.0).ceil() as u32;

    let outside = raw_x1 <= 0.0 || raw_x0 >= img_w || raw_y1 <= 0.0 || raw_y0 >= img_h;
    let rect = if outside {
        PixelRect {
            x_min: 0,
            y_min: 0,
            x_max: 0,
            y_max: 0,
        }
    } else {
        PixelRect {
            x_min,
            y_min,
            x_max,
            y_max,
        }
    };
    Ok(ClippedRect {
        degenerate: rect.area() <= 1,
        rect,
    })
}

/// Pastes the records onto the image in order; every pixel of a record's
/// rectangle is set to the record's fill on all channels.
pub fn apply_occlusion(image: &mut ImageBuf, records: &[OcclusionRecord]) -> Result<()> {
    for record in records {
        let rect = record.rect;
        if rect.x_max > image.width() || rect.y_max > image.height() {
            return Err(Error::Internal(format!(
                "occlusion rect {rect:?} exceeds image bounds {}x{}",
                image.width(),
                image.height()
            )));
        }
        if rect.is_empty() {
            continue;
        }
        let channels = image.channels() as usize;
        for y in rect.y_min..rect.y_max {
            let row = image.row_mut(y);
            let start = rect.x_min as usize * channels;
            let end = rect.x_max as usize * channels;
            row[start..end].fill(record.fill);
        }
    }
    Ok(())
}

/// Runs the full augmentation for one instance: joint selection, rectangle
/// construction, block pasting. Returns the augmented copy and the applied
/// records; the instance itself is never modified.
pub fn augment_instance<R: Rng + ?Sized>(
    image: &ImageBuf,
    inst: &PersonInstance,
    cfg: &AugmentConfig,
    rng: &mut R,
) -> Result<(ImageBuf, Vec<OcclusionRecord>)> {
    cfg.validate()?;
    let graph = LimbGraph::standard();
    let visible = inst.visible_limb_joints(&graph);
    let selected = select_occlusion_joints(&visible, cfg.alpha, rng)?;

    let bbox = inst.bbox();
    let mut records = Vec::with_capacity(selected.len());
    for joint in selected {
        let kp = inst.keypoint(joint);
        let clipped = occlusion_rect(
            (kp.x, kp.y),
            (bbox.h, bbox.w),
            cfg.beta,
            (image.width(), image.height()),
        )?;
        if clipped.is_empty() {
            continue;
        }
        let fill = match cfg.fill_mode {
            FillMode::RandomUniform => rng.gen_range(0..=255u8),
            FillMode::Fixed(v) => v,
        };
        records.push(OcclusionRecord {
            joint,
            rect: clipped.rect,
            fill,
        });
    }

    let mut out = image.clone();
    apply_occlusion(&mut out, &records)?;
    Ok((out, records))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::keypoints::{BBox, Keypoint, Visibility, JOINT_COUNT};

    fn test_instance() -> PersonInstance {
        let mut kps = [Keypoint::not_labeled(); JOINT_COUNT];
        for (j, kp) in kps.iter_mut().enumerate() {
            *kp = Keypoint::new(40.0 + 2.0 * j as f64, 30.0 + 3.0 * j as f64, Visibility::Visible);
        }
        PersonInstance::new(
            1,
            BBox {
                x0: 20.0,
                y0: 10.0,
                w: 60.0,
                h: 80.0,
            },
            kps,
            None,
        )
        .unwrap()
    }

    #[test]
    fn selection_count_follows_ceiling() {
        let mut rng = image_rng(7, 0);
        let twelve: Vec<usize> = (5..17).collect();
        assert_eq!(
            select_occlusion_joints(&twelve, 0.15, &mut rng).unwrap().len(),
            2
        );
        let seven: Vec<usize> = (5..12).collect();
        assert_eq!(
            select_occlusion_joints(&seven, 0.15, &mut rng).unwrap().len(),
            2
        );
        assert!(select_occlusion_joints(&[], 0.15, &mut rng).unwrap().is_empty());
    }

    #[test]
    fn selection_rejects_bad_alpha() {
        let mut rng = image_rng(7, 0);
        for bad in [0.0, -0.1, 1.5, f64::NAN] {
            assert!(matches!(
                select_occlusion_joints(&[5, 6], bad, &mut rng),
                Err(Error::Domain(_))
            ));
        }
    }

    #[test]
    fn selection_is_subset_without_duplicates() {
        let visible: Vec<usize> = (5..17).collect();
        for seed in 0..50 {
            let mut rng = image_rng(seed, 3);
            let picked = select_occlusion_joints(&visible, 0.4, &mut rng).unwrap();
            assert_eq!(picked.len(), 5); // ceil(0.4 * 12)
            assert!(picked.windows(2).all(|w| w[0] < w[1]));
            assert!(picked.iter().all(|j| visible.contains(j)));
        }
    }

    #[test]
    fn rect_matches_block_arithmetic() {
        let r = occlusion_rect((100.0, 150.0), (300.0, 200.0), 0.20, (10_000, 10_000)).unwrap();
        assert_eq!(
            r.rect,
            PixelRect {
                x_min: 80,
                y_min: 120,
                x_max: 120,
                y_max: 180
            }
        );
        assert!(!r.degenerate);
    }

    #[test]
    fn rect_clips_to_image() {
        let r = occlusion_rect((5.0, 5.0), (300.0, 200.0), 0.20, (640, 480)).unwrap();
        assert_eq!(
            r.rect,
            PixelRect {
                x_min: 0,
                y_min: 0,
                x_max: 25,
                y_max: 35
            }
        );
    }

    #[test]
    fn tiny_beta_gives_degenerate_rect() {
        let r = occlusion_rect((10.5, 10.5), (1.0, 1.0), 1e-9, (64, 64)).unwrap();
        assert!(r.degenerate);
        assert!(r.rect.area() <= 1);
    }

    #[test]
    fn outside_joint_gives_empty_flagged_rect() {
        let r = occlusion_rect((-500.0, 10.0), (20.0, 20.0), 0.5, (64, 64)).unwrap();
        assert!(r.is_empty());
        assert!(r.degenerate);
    }

    #[test]
    fn apply_noop_for_empty_records() {
        let img = ImageBuf::from_raw(8, 8, 1, (0..64).collect()).unwrap();
        let mut out = img.clone();
        apply_occlusion(&mut out, &[]).unwrap();
        assert_eq!(img, out);
    }

    #[test]
    fn apply_fills_exact_pixel_count() {
        let mut img = ImageBuf::new(32, 32, 3).unwrap();
        let rec = OcclusionRecord {
            joint: 5,
            rect: PixelRect {
                x_min: 4,
                y_min: 6,
                x_max: 14,
                y_max: 16,
            },
            fill: 169,
        };
        apply_occlusion(&mut img, &[rec]).unwrap();
        let changed = img.data().iter().filter(|&&v| v == 169).count();
        assert_eq!(changed, 100 * 3);
        for y in 0..32 {
            for x in 0..32 {
                let expect = if rec.rect.contains(x, y) { 169 } else { 0 };
                assert!(img.pixel(x, y).iter().all(|&v| v == expect));
            }
        }
    }

    #[test]
    fn overlapping_records_last_writer_wins() {
        let mut img = ImageBuf::new(16, 16, 1).unwrap();
        let a = OcclusionRecord {
            joint: 5,
            rect: PixelRect {
                x_min: 0,
                y_min: 0,
                x_max: 8,
                y_max: 8,
            },
            fill: 10,
        };
        let b = OcclusionRecord {
            joint: 6,
            rect: PixelRect {
                x_min: 4,
                y_min: 4,
                x_max: 12,
                y_max: 12,
            },
            fill: 200,
        };
        apply_occlusion(&mut img, &[a, b]).unwrap();
        assert_eq!(img.pixel(5, 5), &[200]);
        assert_eq!(img.pixel(1, 1), &[10]);
    }

    #[test]
    fn apply_rejects_out_of_bounds_rect() {
        let mut img = ImageBuf::new(8, 8, 1).unwrap();
        let rec = OcclusionRecord {
            joint: 5,
            rect: PixelRect {
                x_min: 0,
                y_min: 0,
                x_max: 9,
                y_max: 2,
            },
            fill: 0,
        };
        assert!(matches!(
            apply_occlusion(&mut img, &[rec]),
            Err(Error::Internal(_))
        ));
    }

    #[test]
    fn augment_no_visible_joints_is_identity() {
        let mut kps = [Keypoint::not_labeled(); JOINT_COUNT];
        kps[0] = Keypoint::new(50.0, 50.0, Visibility::Visible); // head joint only
        let inst = PersonInstance::new(
            1,
            BBox {
                x0: 10.0,
                y0: 10.0,
                w: 50.0,
                h: 60.0,
            },
            kps,
            None,
        )
        .unwrap();
        let img = ImageBuf::from_raw(100, 100, 1, vec![7; 10_000]).unwrap();
        let mut rng = image_rng(1, 1);
        let (out, records) = augment_instance(&img, &inst, &AugmentConfig::default(), &mut rng).unwrap();
        assert!(records.is_empty());
        assert_eq!(out, img);
    }

    #[test]
    fn augment_default_covers_two_joints_centered() {
        let inst = test_instance();
        let img = ImageBuf::new(200, 200, 3).unwrap();
        let cfg = AugmentConfig::default();
        let mut rng = image_rng(3, 9);
        let (_, records) = augment_instance(&img, &inst, &cfg, &mut rng).unwrap();
        assert_eq!(records.len(), 2);
        for rec in &records {
            let kp = inst.keypoint(rec.joint);
            // Far from the border, so the integer rect stays centered on the
            // joint to within the one-pixel outward rounding per side.
            let cx = f64::from(rec.rect.x_min + rec.rect.x_max) / 2.0;
            let cy = f64::from(rec.rect.y_min + rec.rect.y_max) / 2.0;
            assert!((cx - kp.x).abs() <= 1.0, "cx={cx} vs {}", kp.x);
            assert!((cy - kp.y).abs() <= 1.0);
            assert!((f64::from(rec.rect.width()) - 0.2 * 60.0).abs() <= 2.0);
            assert!((f64::from(rec.rect.height()) - 0.2 * 80.0).abs() <= 2.0);
        }
    }

    #[test]
    fn augment_is_deterministic() {
        let inst = test_instance();
        let img = ImageBuf::from_raw(128, 128, 3, (0..128u32 * 128 * 3).map(|v| (v % 251) as u8).collect())
            .unwrap();
        let cfg = AugmentConfig::default();
        let run = |seed| {
            let mut rng = image_rng(seed, 42);
            augment_instance(&img, &inst, &cfg, &mut rng).unwrap()
        };
        let (img_a, rec_a) = run(11);
        let (img_b, rec_b) = run(11);
        assert_eq!(img_a, img_b);
        assert_eq!(rec_a, rec_b);
        let (img_c, _) = run(12);
        assert_ne!(img_a, img_c);
    }

    #[test]
    fn augment_preserves_pixels_outside_rects() {
        let inst = test_instance();
        let img =
            ImageBuf::from_raw(128, 128, 1, (0..128u32 * 128).map(|v| (v % 253) as u8).collect())
                .unwrap();
        let mut rng = image_rng(5, 5);
        let (out, records) = augment_instance(&img, &inst, &AugmentConfig::default(), &mut rng).unwrap();
        for y in 0..128 {
            for x in 0..128 {
                let covered = records.iter().rev().find(|r| r.rect.contains(x, y));
                match covered {
                    Some(rec) => assert_eq!(out.pixel(x, y), &[rec.fill]),
                    None => assert_eq!(out.pixel(x, y), img.pixel(x, y)),
                }
            }
        }
    }
}
