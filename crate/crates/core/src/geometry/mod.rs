//! Point-cloud and oriented-box kernels.
//!
//! Everything here is pure. World frame is right-handed with `+z` up, units
//! are meters and radians.

mod footprint;
mod kdtree;
mod measure;
mod obb;
mod polytope;
mod pose;
mod ransac;

pub use footprint::{convex_hull_2d, polygon_area, polygon_intersection, Point2};
pub use kdtree::SpatialIndex;
pub use measure::{
    delta_z, half_space_fraction, intersection_volume, min_distance, overlap_xy, point_box_distance,
    Side,
};
pub use obb::{compute_obb, estimate_normals, OrientedBoundingBox};
pub use polytope::ConvexPolytope;
pub use pose::{apply_pose, posed_obb, wrap_angle, Pose, RigidTransform};
pub(crate) use footprint::inside_depth;
pub(crate) use obb::aabb_of;
pub use ransac::{ransac_plane, PlaneModel};

use nalgebra::Vector3;
use thiserror::Error;

pub type Vec3 = Vector3<f64>;

/// World vertical.
pub const UP: Vec3 = Vector3::new(0.0, 0.0, 1.0);

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeometryError {
    #[error("point cloud is empty")]
    EmptyCloud,
    #[error("point cloud is degenerate (covariance rank {rank} < 2)")]
    DegenerateCloud { rank: usize },
    #[error("need at least {needed} points, got {got}")]
    TooFewPoints { needed: usize, got: usize },
    #[error("point cloud channel `{0}` has the wrong length")]
    ChannelLength(&'static str),
    #[error("non-finite coordinate at point {0}")]
    NonFinite(usize),
}

/// A set of 3D points with optional per-point color and unit normal.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct PointCloud {
    pub points: Vec<Vec3>,
    pub colors: Option<Vec<[u8; 3]>>,
    pub normals: Option<Vec<Vec3>>,
}

impl PointCloud {
    pub fn new(points: Vec<Vec3>) -> Self {
        Self {
            points,
            colors: None,
            normals: None,
        }
    }

    pub fn with_normals(points: Vec<Vec3>, normals: Vec<Vec3>) -> Self {
        Self {
            points,
            colors: None,
            normals: Some(normals),
        }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Checks the channel lengths and that every coordinate is finite.
    pub fn validate(&self) -> Result<(), GeometryError> {
        if let Some(c) = &self.colors {
            if c.len() != self.points.len() {
                return Err(GeometryError::ChannelLength("color"));
            }
        }
        if let Some(n) = &self.normals {
            if n.len() != self.points.len() {
                return Err(GeometryError::ChannelLength("normal"));
            }
        }
        match self.points.iter().position(|p| !p.iter().all(|v| v.is_finite())) {
            Some(i) => Err(GeometryError::NonFinite(i)),
            None => Ok(()),
        }
    }

    /// Copies the points at `indices`, carrying attributes along.
    pub fn select(&self, indices: &[usize]) -> PointCloud {
        PointCloud {
            points: indices.iter().map(|&i| self.points[i]).collect(),
            colors: self
                .colors
                .as_ref()
                .map(|c| indices.iter().map(|&i| c[i]).collect()),
            normals: self
                .normals
                .as_ref()
                .map(|n| indices.iter().map(|&i| n[i]).collect()),
        }
    }

    /// Appends `other`. An attribute survives only if both clouds carry it
    /// (or `self` is empty).
    pub fn extend(&mut self, other: &PointCloud) {
        let was_empty = self.points.is_empty();
        self.points.extend_from_slice(&other.points);
        self.colors = match (self.colors.take(), &other.colors) {
            (Some(mut a), Some(b)) => {
                a.extend_from_slice(b);
                Some(a)
            }
            (None, Some(b)) if was_empty => Some(b.clone()),
            _ => None,
        };
        self.normals = match (self.normals.take(), &other.normals) {
            (Some(mut a), Some(b)) => {
                a.extend_from_slice(b);
                Some(a)
            }
            (None, Some(b)) if was_empty => Some(b.clone()),
            _ => None,
        };
    }

    /// Axis-aligned bounds `(min, max)`, `None` when empty.
    pub fn bounds(&self) -> Option<(Vec3, Vec3)> {
        let first = *self.points.first()?;
        Some(self.points.iter().fold((first, first), |(lo, hi), p| {
            (lo.inf(p), hi.sup(p))
        }))
    }

    pub fn centroid(&self) -> Option<Vec3> {
        if self.points.is_empty() {
            return None;
        }
        let sum: Vec3 = self.points.iter().sum();
        Some(sum / self.points.len() as f64)
    }
}
