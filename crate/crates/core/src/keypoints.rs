//! Keypoint, person and limb-graph data model (COCO 17-joint ordering).

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Number of joints per person in COCO order.
pub const JOINT_COUNT: usize = 17;

/// The 12 limb joints (shoulders, elbows, wrists, hips, knees, ankles),
/// ascending in COCO order. Head joints (0..=4) are never augmented or
/// structure-constrained.
pub const LIMB_JOINTS: [usize; 12] = [5, 6, 7, 8, 9, 10, 11, 12, 13, 14, 15, 16];

/// Canonical COCO joint names, indexed by joint id.
pub const JOINT_NAMES: [&str; JOINT_COUNT] = [
    "nose",
    "left_eye",
    "right_eye",
    "left_ear",
    "right_ear",
    "left_shoulder",
    "right_shoulder",
    "left_elbow",
    "right_elbow",
    "left_wrist",
    "right_wrist",
    "left_hip",
    "right_hip",
    "left_knee",
    "right_knee",
    "left_ankle",
    "right_ankle",
];

/// Named joint indices in COCO order.
pub mod joints {
    pub const NOSE: usize = 0;
    pub const LEFT_EYE: usize = 1;
    pub const RIGHT_EYE: usize = 2;
    pub const LEFT_EAR: usize = 3;
    pub const RIGHT_EAR: usize = 4;
    pub const LEFT_SHOULDER: usize = 5;
    pub const RIGHT_SHOULDER: usize = 6;
    pub const LEFT_ELBOW: usize = 7;
    pub const RIGHT_ELBOW: usize = 8;
    pub const LEFT_WRIST: usize = 9;
    pub const RIGHT_WRIST: usize = 10;
    pub const LEFT_HIP: usize = 11;
    pub const RIGHT_HIP: usize = 12;
    pub const LEFT_KNEE: usize = 13;
    pub const RIGHT_KNEE: usize = 14;
    pub const LEFT_ANKLE: usize = 15;
    pub const RIGHT_ANKLE: usize = 16;
}

/// COCO visibility flag.
///
/// `Occluded` (flag 1) counts as *not* visible for occlusion-joint selection
/// but *does* count for loss supervision and OKS.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Visibility {
    /// Flag 0: joint not annotated; coordinates are ignored by all consumers.
    NotLabeled,
    /// Flag 1: annotated but occluded.
    Occluded,
    /// Flag 2: annotated and visible.
    Visible,
}

impl Visibility {
    pub fn from_coco_flag(flag: i64) -> Result<Self> {
        match flag {
            0 => Ok(Visibility::NotLabeled),
            1 => Ok(Visibility::Occluded),
            2 => Ok(Visibility::Visible),
            other => Err(Error::Schema(format!(
                "visibility flag must be 0, 1 or 2, got {other}"
            ))),
        }
    }

    pub fn to_coco_flag(self) -> u8 {
        match self {
            Visibility::NotLabeled => 0,
            Visibility::Occluded => 1,
            Visibility::Visible => 2,
        }
    }

    /// Whether the joint carries an annotation (flag 1 or 2).
    pub fn is_labeled(self) -> bool {
        !matches!(self, Visibility::NotLabeled)
    }
}

/// One annotated joint in image coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Keypoint {
    pub x: f64,
    pub y: f64,
    pub vis: Visibility,
}

impl Keypoint {
    pub fn not_labeled() -> Self {
        Keypoint {
            x: 0.0,
            y: 0.0,
            vis: Visibility::NotLabeled,
        }
    }

    pub fn new(x: f64, y: f64, vis: Visibility) -> Self {
        Keypoint { x, y, vis }
    }
}

/// Axis-aligned person box; `(x0, y0)` is the top-left corner.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BBox {
    pub x0: f64,
    pub y0: f64,
    pub w: f64,
    pub h: f64,
}

impl BBox {
    pub fn x1(&self) -> f64 {
        self.x0 + self.w
    }

    pub fn y1(&self) -> f64 {
        self.y0 + self.h
    }
}

/// One annotated person: box, 17 keypoints, scale.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PersonInstance {
    id: u64,
    bbox: BBox,
    keypoints: [Keypoint; JOINT_COUNT],
    area: f64,
}

impl PersonInstance {
    /// Builds an instance, validating the box and labeled coordinates.
    /// `area` defaults to `w * h` when not supplied.
    pub fn new(
        id: u64,
        bbox: BBox,
        keypoints: [Keypoint; JOINT_COUNT],
        area: Option<f64>,
    ) -> Result<Self> {
        if !(bbox.w > 0.0 && bbox.h > 0.0 && bbox.w.is_finite() && bbox.h.is_finite()) {
            return Err(Error::Domain(format!(
                "instance {id}: bbox must have positive finite size, got {}x{}",
                bbox.w, bbox.h
            )));
        }
        if !(bbox.x0.is_finite() && bbox.y0.is_finite()) {
            return Err(Error::Domain(format!(
                "instance {id}: bbox origin must be finite"
            )));
        }
        for (j, kp) in keypoints.iter().enumerate() {
            if kp.vis.is_labeled() && !(kp.x.is_finite() && kp.y.is_finite()) {
                return Err(Error::Domain(format!(
                    "instance {id}: labeled joint {j} has non-finite coordinates"
                )));
            }
        }
        let area = area.unwrap_or(bbox.w * bbox.h);
        if !(area > 0.0 && area.is_finite()) {
            return Err(Error::Domain(format!(
                "instance {id}: area must be positive and finite, got {area}"
            )));
        }
        Ok(PersonInstance {
            id,
            bbox,
            keypoints,
            area,
        })
    }

    pub fn id(&self) -> u64 {
        self.id
    }

    pub fn bbox(&self) -> BBox {
        self.bbox
    }

    pub fn keypoints(&self) -> &[Keypoint; JOINT_COUNT] {
        &self.keypoints
    }

    pub fn keypoint(&self, joint: usize) -> Keypoint {
        self.keypoints[joint]
    }

    /// Object scale squared, in pixels²; defaults to the box area.
    pub fn area(&self) -> f64 {
        self.area
    }

    /// True when no joint carries an annotation.
    pub fn has_no_labeled_joints(&self) -> bool {
        self.keypoints.iter().all(|kp| !kp.vis.is_labeled())
    }

    /// Count of labeled joints (flag 1 or 2).
    pub fn labeled_count(&self) -> usize {
        self.keypoints.iter().filter(|kp| kp.vis.is_labeled()).count()
    }

    /// Per-joint supervision mask: labeled joints are supervised.
    pub fn supervision_mask(&self) -> [bool; JOINT_COUNT] {
        let mut mask = [false; JOINT_COUNT];
        for (j, kp) in self.keypoints.iter().enumerate() {
            mask[j] = kp.vis.is_labeled();
        }
        mask
    }

    /// Limb joints of this instance with flag 2, ascending. Its length is
    /// the visible count used to size the occlusion joint set.
    pub fn visible_limb_joints(&self, graph: &LimbGraph) -> Vec<usize> {
        graph
            .nodes()
            .iter()
            .copied()
            .filter(|&j| self.keypoints[j].vis == Visibility::Visible)
            .collect()
    }
}

/// Undirected adjacency over the 12 limb joints: two six-node chains,
/// one across the arms and one across the legs.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LimbGraph {
    nodes: Vec<usize>,
    edges: Vec<(usize, usize)>,
    adjacency: [Vec<usize>; JOINT_COUNT],
}

impl LimbGraph {
    /// The fixed graph: wrist-elbow-shoulder-shoulder-elbow-wrist and
    /// ankle-knee-hip-hip-knee-ankle.
    pub fn standard() -> Self {
        use joints::*;
        let edges = vec![
            (LEFT_WRIST, LEFT_ELBOW),
            (LEFT_ELBOW, LEFT_SHOULDER),
            (LEFT_SHOULDER, RIGHT_SHOULDER),
            (RIGHT_SHOULDER, RIGHT_ELBOW),
            (RIGHT_ELBOW, RIGHT_WRIST),
            (LEFT_ANKLE, LEFT_KNEE),
            (LEFT_KNEE, LEFT_HIP),
            (LEFT_HIP, RIGHT_HIP),
            (RIGHT_HIP, RIGHT_KNEE),
            (RIGHT_KNEE, RIGHT_ANKLE),
        ];

        let mut adjacency: [Vec<usize>; JOINT_COUNT] = Default::default();
        for &(a, b) in &edges {
            adjacency[a].push(b);
            adjacency[b].push(a);
        }
        for list in adjacency.iter_mut() {
            list.sort_unstable();
        }
        LimbGraph {
            nodes: LIMB_JOINTS.to_vec(),
            edges,
            adjacency,
        }
    }

    pub fn nodes(&self) -> &[usize] {
        &self.nodes
    }

    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn contains(&self, joint: usize) -> bool {
        self.nodes.contains(&joint)
    }

    /// Chain neighbors of `joint`, ascending: one entry for chain endpoints
    /// (wrists, ankles), two for interior joints.
    pub fn neighbors(&self, joint: usize) -> Result<&[usize]> {
        if !self.contains(joint) {
            return Err(Error::Domain(format!(
                "joint {joint} is not a limb joint"
            )));
        }
        Ok(&self.adjacency[joint])
    }
}

impl Default for LimbGraph {
    fn default() -> Self {
        LimbGraph::standard()
    }
}
