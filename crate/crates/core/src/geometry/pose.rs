use std::f64::consts::PI;

use nalgebra::{Matrix3, Rotation3, Unit};
use serde::{Deserialize, Serialize};

use super::obb::OrientedBoundingBox;
use super::{PointCloud, Vec3};

/// Maps an angle onto `(-π, π]`.
pub fn wrap_angle(a: f64) -> f64 {
    let r = a.rem_euclid(2.0 * PI);
    if r > PI {
        r - 2.0 * PI
    } else {
        r
    }
}

/// Placement of an instance relative to its source box.
///
/// `(x, y, z)` is where the box center ends up. `theta` turns the instance
/// about the world vertical and `phi` tilts it about its own front axis,
/// both measured from the orientation the instance had in its source scene.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Pose {
    pub x: f64,
    pub y: f64,
    pub z: f64,
    pub theta: f64,
    pub phi: f64,
}

impl Pose {
    pub fn new(x: f64, y: f64, z: f64, theta: f64, phi: f64) -> Self {
        Self {
            x,
            y,
            z,
            theta: wrap_angle(theta),
            phi: wrap_angle(phi),
        }
    }

    /// The pose that leaves `obb` where it is.
    pub fn identity_for(obb: &OrientedBoundingBox) -> Self {
        Self::new(obb.center.x, obb.center.y, obb.center.z, 0.0, 0.0)
    }

    pub fn center(&self) -> Vec3 {
        Vec3::new(self.x, self.y, self.z)
    }

    pub fn to_array(&self) -> [f64; 5] {
        [self.x, self.y, self.z, self.theta, self.phi]
    }

    pub fn from_array(v: [f64; 5]) -> Self {
        Self::new(v[0], v[1], v[2], v[3], v[4])
    }

    pub fn is_finite(&self) -> bool {
        self.to_array().iter().all(|v| v.is_finite())
    }
}

/// `p ↦ rotation · p + translation`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RigidTransform {
    pub rotation: Matrix3<f64>,
    pub translation: Vec3,
}

impl RigidTransform {
    pub fn identity() -> Self {
        Self {
            rotation: Matrix3::identity(),
            translation: Vec3::zeros(),
        }
    }

    /// The transform that carries `source` to `pose`: tilt by `phi` about
    /// the source front axis, turn by `theta` about the vertical, both
    /// around the source center, then move the center to the pose position.
    pub fn from_pose(source: &OrientedBoundingBox, pose: &Pose) -> Self {
        let tilt = Rotation3::from_axis_angle(&Unit::new_normalize(source.front), pose.phi);
        let turn = Rotation3::from_axis_angle(&Vec3::z_axis(), pose.theta);
        let rotation = (turn * tilt).into_inner();
        Self {
            rotation,
            translation: pose.center() - rotation * source.center,
        }
    }

    pub fn inverse(&self) -> Self {
        let rt = self.rotation.transpose();
        Self {
            rotation: rt,
            translation: -(rt * self.translation),
        }
    }

    pub fn apply_point(&self, p: &Vec3) -> Vec3 {
        self.rotation * p + self.translation
    }

    pub fn apply_vector(&self, v: &Vec3) -> Vec3 {
        self.rotation * v
    }

    pub fn apply_obb(&self, b: &OrientedBoundingBox) -> OrientedBoundingBox {
        OrientedBoundingBox {
            center: self.apply_point(&b.center),
            half_extents: b.half_extents,
            axes: b.axes.map(|a| self.apply_vector(&a)),
            front: self.apply_vector(&b.front),
            up_normal: self.apply_vector(&b.up_normal),
        }
    }

    pub fn apply_cloud(&self, cloud: &PointCloud) -> PointCloud {
        PointCloud {
            points: cloud.points.iter().map(|p| self.apply_point(p)).collect(),
            colors: cloud.colors.clone(),
            normals: cloud
                .normals
                .as_ref()
                .map(|ns| ns.iter().map(|n| self.apply_vector(n)).collect()),
        }
    }
}

/// Box of an instance whose source box is `source`, placed at `pose`.
pub fn posed_obb(source: &OrientedBoundingBox, pose: &Pose) -> OrientedBoundingBox {
    RigidTransform::from_pose(source, pose).apply_obb(source)
}

/// Moves an instance cloud and its box rigidly to `pose`.
pub fn apply_pose(
    cloud: &PointCloud,
    obb: &OrientedBoundingBox,
    pose: &Pose,
) -> (PointCloud, OrientedBoundingBox) {
    let t = RigidTransform::from_pose(obb, pose);
    (t.apply_cloud(cloud), t.apply_obb(obb))
}
