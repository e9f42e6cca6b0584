//! The seven spatial relation predicates and dataset relation statistics.

mod stats;

pub use stats::{collect_stats, conditional_distribution, observe_scene, PairStats, RelationObservation, RelationStats, STATS_VERSION};

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::geometry::{delta_z, half_space_fraction, intersection_volume, min_distance, overlap_xy, OrientedBoundingBox, Side, Vec3};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RelationType {
    SupportedBy,
    AttachedTo,
    LeftOf,
    RightOf,
    Nearby,
    Faces,
    OrientedWith,
    None,
}

impl RelationType {
    pub const COUNT: usize = 8;

    pub const ALL: [RelationType; 8] = [
        RelationType::SupportedBy,
        RelationType::AttachedTo,
        RelationType::LeftOf,
        RelationType::RightOf,
        RelationType::Nearby,
        RelationType::Faces,
        RelationType::OrientedWith,
        RelationType::None,
    ];

    /// Edge labels in the order `classify_pair` prefers them.
    pub const PRIORITY: [RelationType; 7] = [
        RelationType::SupportedBy,
        RelationType::AttachedTo,
        RelationType::Faces,
        RelationType::OrientedWith,
        RelationType::LeftOf,
        RelationType::RightOf,
        RelationType::Nearby,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Self> {
        Self::ALL.get(i).copied()
    }

    pub fn name(self) -> &'static str {
        match self {
            RelationType::SupportedBy => "supported_by",
            RelationType::AttachedTo => "attached_to",
            RelationType::LeftOf => "left_of",
            RelationType::RightOf => "right_of",
            RelationType::Nearby => "nearby",
            RelationType::Faces => "faces",
            RelationType::OrientedWith => "oriented_with",
            RelationType::None => "none",
        }
    }
}

impl fmt::Display for RelationType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for RelationType {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL
            .into_iter()
            .find(|r| r.name() == s)
            .ok_or_else(|| format!("unknown relation `{s}`"))
    }
}

/// A set of relation types, one bit per variant.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash)]
pub struct RelationSet(u8);

impl RelationSet {
    pub fn empty() -> Self {
        Self(0)
    }

    pub fn insert(&mut self, r: RelationType) {
        self.0 |= 1 << r.index();
    }

    pub fn contains(&self, r: RelationType) -> bool {
        self.0 & (1 << r.index()) != 0
    }

    pub fn is_empty(&self) -> bool {
        self.0 == 0
    }

    pub fn len(&self) -> usize {
        self.0.count_ones() as usize
    }

    pub fn iter(&self) -> impl Iterator<Item = RelationType> + '_ {
        RelationType::ALL.into_iter().filter(|r| self.contains(*r))
    }
}

impl FromIterator<RelationType> for RelationSet {
    fn from_iter<I: IntoIterator<Item = RelationType>>(iter: I) -> Self {
        let mut s = Self::empty();
        for r in iter {
            s.insert(r);
        }
        s
    }
}

/// Predicate thresholds plus the neighbor count used for statistics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ThresholdConfig {
    /// Minimum footprint overlap ratio for support and orientation.
    pub tau: f64,
    /// Largest base-to-top gap that still counts as support, meters.
    pub epsilon: f64,
    pub tau_att: f64,
    /// Minimum |cos| between principal axes for attachment.
    pub tau_dir: f64,
    pub tau_left: f64,
    pub tau_right: f64,
    /// Nearby distance, meters.
    pub t_near: f64,
    pub tau_face: f64,
    /// Minimum cosine between up normals for orientation.
    pub epsilon_pp: f64,
    pub knn_k: usize,
}

impl Default for ThresholdConfig {
    fn default() -> Self {
        Self {
            tau: 0.5,
            epsilon: 0.05,
            tau_att: 0.3,
            tau_dir: 0.9,
            tau_left: 0.6,
            tau_right: 0.6,
            t_near: 1.0,
            tau_face: 0.8,
            epsilon_pp: 0.9,
            knn_k: 10,
        }
    }
}

impl ThresholdConfig {
    /// Defaults with the larger outdoor nearby distance.
    pub fn outdoor() -> Self {
        Self {
            t_near: 5.0,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        let ratios = [
            ("tau", self.tau),
            ("tau_att", self.tau_att),
            ("tau_left", self.tau_left),
            ("tau_right", self.tau_right),
        ];
        for (name, v) in ratios {
            if !(v > 0.0 && v <= 1.0) {
                return Err(format!("{name} must be in (0, 1], got {v}"));
            }
        }
        for (name, v) in [("tau_dir", self.tau_dir), ("tau_face", self.tau_face), ("epsilon_pp", self.epsilon_pp)] {
            if !(v > -1.0 && v < 1.0) {
                return Err(format!("{name} must be in (-1, 1), got {v}"));
            }
        }
        if !(self.epsilon >= 0.0 && self.epsilon.is_finite()) {
            return Err(format!("epsilon must be non-negative, got {}", self.epsilon));
        }
        if !(self.t_near > 0.0 && self.t_near.is_finite()) {
            return Err(format!("t_near must be positive, got {}", self.t_near));
        }
        if self.knn_k == 0 {
            return Err("knn_k must be at least 1".into());
        }
        Ok(())
    }
}

/// Cosine of the angle between two vectors, 0 when either is zero.
pub fn cosine(u: &Vec3, v: &Vec3) -> f64 {
    let n = u.norm() * v.norm();
    if n <= 1e-12 {
        0.0
    } else {
        (u.dot(v) / n).clamp(-1.0, 1.0)
    }
}

/// Principal-axis alignment `|cos(d_A, d_B)|`.
pub fn axis_alignment(a: &OrientedBoundingBox, b: &OrientedBoundingBox) -> f64 {
    cosine(&a.axes[0], &b.axes[0]).abs()
}

/// Intersection volume over the smaller box volume.
pub fn attach_ratio(a: &OrientedBoundingBox, b: &OrientedBoundingBox) -> f64 {
    let denom = a.volume().min(b.volume());
    if denom <= 0.0 {
        0.0
    } else {
        (intersection_volume(a, b) / denom).clamp(0.0, 1.0)
    }
}

/// Cosine between `front(a)` and the direction from `a`'s center to `b`'s.
pub fn facing_cosine(a: &OrientedBoundingBox, b: &OrientedBoundingBox) -> f64 {
    cosine(&a.front, &(b.center - a.center))
}

/// Every predicate that holds for the ordered pair `(a, b)`.
///
/// ```
/// use orgsynth::geometry::{OrientedBoundingBox, Vec3};
/// use orgsynth::relations::{evaluate_predicates, RelationType, ThresholdConfig};
///
/// let table = OrientedBoundingBox::axis_aligned(Vec3::new(0.0, 0.0, 0.5), Vec3::repeat(0.5));
/// let vase = OrientedBoundingBox::axis_aligned(Vec3::new(0.0, 0.0, 1.2), Vec3::repeat(0.2));
/// let rels = evaluate_predicates(&vase, &table, &ThresholdConfig::default());
/// assert!(rels.contains(RelationType::SupportedBy));
/// ```
pub fn evaluate_predicates(a: &OrientedBoundingBox, b: &OrientedBoundingBox, cfg: &ThresholdConfig) -> RelationSet {
    let mut set = RelationSet::empty();
    let overlap = overlap_xy(a, b);
    if overlap > cfg.tau && delta_z(a, b) <= cfg.epsilon {
        set.insert(RelationType::SupportedBy);
    }
    if attach_ratio(a, b) > cfg.tau_att || axis_alignment(a, b) > cfg.tau_dir {
        set.insert(RelationType::AttachedTo);
    }
    if half_space_fraction(a, b, Side::Left) > cfg.tau_left {
        set.insert(RelationType::LeftOf);
    }
    if half_space_fraction(a, b, Side::Right) > cfg.tau_right {
        set.insert(RelationType::RightOf);
    }
    if min_distance(a, b) <= cfg.t_near {
        set.insert(RelationType::Nearby);
    }
    if facing_cosine(a, b) > cfg.tau_face {
        set.insert(RelationType::Faces);
    }
    if overlap > cfg.tau && cosine(&a.up_normal, &b.up_normal) > cfg.epsilon_pp {
        set.insert(RelationType::OrientedWith);
    }
    set
}

/// The highest-priority relation in `set`, or `None`.
pub fn strongest(set: RelationSet) -> RelationType {
    RelationType::PRIORITY
        .into_iter()
        .find(|r| set.contains(*r))
        .unwrap_or(RelationType::None)
}

/// Single edge label for the ordered pair `(a, b)`.
pub fn classify_pair(a: &OrientedBoundingBox, b: &OrientedBoundingBox, cfg: &ThresholdConfig) -> RelationType {
    strongest(evaluate_predicates(a, b, cfg))
}

/// Relation of `a` to the closest box in `targets`.
pub fn classify_against_nearest<'a>(
    a: &OrientedBoundingBox,
    targets: impl IntoIterator<Item = &'a OrientedBoundingBox>,
    cfg: &ThresholdConfig,
) -> Option<RelationType> {
    let mut best: Option<(f64, &OrientedBoundingBox)> = None;
    for t in targets {
        let d = min_distance(a, t);
        if best.is_none_or(|(bd, _)| d < bd) {
            best = Some((d, t));
        }
    }
    best.map(|(_, t)| classify_pair(a, t, cfg))
}
