use nalgebra::{Matrix3, SymmetricEigen};

use super::footprint::{convex_hull_2d, Point2};
use super::kdtree::SpatialIndex;
use super::{GeometryError, PointCloud, Vec3, UP};

/// Smallest half-extent a box may have. Planar clouds (walls, floors) would
/// otherwise produce zero-thickness boxes.
pub const MIN_HALF_EXTENT: f64 = 0.01;

/// An oriented box with the orientation vectors the relation predicates use.
///
/// `axes` are orthonormal and right-handed; `half_extents[i]` is measured
/// along `axes[i]`. `front` is the horizontal heading of the object and
/// `up_normal` its support-facing normal.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OrientedBoundingBox {
    pub center: Vec3,
    pub half_extents: Vec3,
    pub axes: [Vec3; 3],
    pub front: Vec3,
    pub up_normal: Vec3,
}

impl OrientedBoundingBox {
    /// Builds a box from a center, half-extents and an orthonormal frame,
    /// deriving `front` and `up_normal` from the frame.
    pub fn from_axes(center: Vec3, half_extents: Vec3, axes: [Vec3; 3]) -> Self {
        let front = derive_front(&axes);
        let up_normal = derive_up(&axes);
        Self {
            center,
            half_extents,
            axes,
            front,
            up_normal,
        }
    }

    pub fn axis_aligned(center: Vec3, half_extents: Vec3) -> Self {
        Self::from_axes(center, half_extents, [Vec3::x(), Vec3::y(), Vec3::z()])
    }

    /// Upright box rotated by `yaw` about the world vertical.
    pub fn upright(center: Vec3, half_extents: Vec3, yaw: f64) -> Self {
        let (s, c) = yaw.sin_cos();
        let ax = Vec3::new(c, s, 0.0);
        let ay = Vec3::new(-s, c, 0.0);
        Self::from_axes(center, half_extents, [ax, ay, Vec3::z()])
    }

    pub fn volume(&self) -> f64 {
        8.0 * self.half_extents.x * self.half_extents.y * self.half_extents.z
    }

    pub fn rotation(&self) -> Matrix3<f64> {
        Matrix3::from_columns(&self.axes)
    }

    pub fn corners(&self) -> [Vec3; 8] {
        let mut out = [Vec3::zeros(); 8];
        for (i, c) in out.iter_mut().enumerate() {
            let sx = if i & 1 == 0 { -1.0 } else { 1.0 };
            let sy = if i & 2 == 0 { -1.0 } else { 1.0 };
            let sz = if i & 4 == 0 { -1.0 } else { 1.0 };
            *c = self.center
                + self.axes[0] * (sx * self.half_extents.x)
                + self.axes[1] * (sy * self.half_extents.y)
                + self.axes[2] * (sz * self.half_extents.z);
        }
        out
    }

    /// The 12 edges as corner index pairs into [`Self::corners`].
    pub const EDGES: [(usize, usize); 12] = [
        (0, 1),
        (2, 3),
        (4, 5),
        (6, 7),
        (0, 2),
        (1, 3),
        (4, 6),
        (5, 7),
        (0, 4),
        (1, 5),
        (2, 6),
        (3, 7),
    ];

    /// Six half-spaces `n·x <= d` whose intersection is the box.
    pub fn planes(&self) -> [(Vec3, f64); 6] {
        let mut out = [(Vec3::zeros(), 0.0); 6];
        for i in 0..3 {
            let n = self.axes[i];
            let c = n.dot(&self.center);
            out[2 * i] = (n, c + self.half_extents[i]);
            out[2 * i + 1] = (-n, -c + self.half_extents[i]);
        }
        out
    }

    pub fn to_local(&self, p: &Vec3) -> Vec3 {
        let d = p - self.center;
        Vec3::new(
            d.dot(&self.axes[0]),
            d.dot(&self.axes[1]),
            d.dot(&self.axes[2]),
        )
    }

    pub fn contains(&self, p: &Vec3, tol: f64) -> bool {
        let l = self.to_local(p);
        (0..3).all(|i| l[i].abs() <= self.half_extents[i] + tol)
    }

    pub fn min_z(&self) -> f64 {
        self.center.z - self.vertical_half_height()
    }

    pub fn max_z(&self) -> f64 {
        self.center.z + self.vertical_half_height()
    }

    fn vertical_half_height(&self) -> f64 {
        (0..3)
            .map(|i| self.axes[i].z.abs() * self.half_extents[i])
            .sum()
    }

    /// Convex hull of the ground projection, counter-clockwise.
    pub fn footprint(&self) -> Vec<Point2> {
        let pts: Vec<Point2> = self
            .corners()
            .iter()
            .map(|c| Point2::new(c.x, c.y))
            .collect();
        convex_hull_2d(&pts)
    }

    pub fn footprint_area(&self) -> f64 {
        super::polygon_area(&self.footprint())
    }

    /// Radius of the smallest center-anchored disc containing the footprint.
    pub fn footprint_radius(&self) -> f64 {
        self.corners()
            .iter()
            .map(|c| ((c.x - self.center.x).powi(2) + (c.y - self.center.y).powi(2)).sqrt())
            .fold(0.0, f64::max)
    }

    /// Separating-axis test. Touching boxes count as intersecting.
    pub fn intersects(&self, other: &OrientedBoundingBox) -> bool {
        let t = other.center - self.center;
        let mut axes: Vec<Vec3> = Vec::with_capacity(15);
        axes.extend_from_slice(&self.axes);
        axes.extend_from_slice(&other.axes);
        for a in &self.axes {
            for b in &other.axes {
                let c = a.cross(b);
                if c.norm_squared() > 1e-12 {
                    axes.push(c.normalize());
                }
            }
        }
        axes.iter().all(|l| {
            let ra = self.projected_radius(l);
            let rb = other.projected_radius(l);
            t.dot(l).abs() <= ra + rb + 1e-12
        })
    }

    fn projected_radius(&self, l: &Vec3) -> f64 {
        (0..3)
            .map(|i| self.axes[i].dot(l).abs() * self.half_extents[i])
            .sum()
    }
}

/// Heading: the first axis flattened onto the ground plane, or the second
/// when the first is vertical.
pub(crate) fn derive_front(axes: &[Vec3; 3]) -> Vec3 {
    for a in &axes[..2] {
        let h = Vec3::new(a.x, a.y, 0.0);
        let n = h.norm();
        if n > 1e-9 {
            return h / n;
        }
    }
    Vec3::x()
}

/// The axis closest to vertical, signed upward.
pub(crate) fn derive_up(axes: &[Vec3; 3]) -> Vec3 {
    let a = axes
        .iter()
        .copied()
        .max_by(|a, b| a.z.abs().total_cmp(&b.z.abs()))
        .unwrap_or(UP);
    if a.z < 0.0 {
        -a
    } else {
        a
    }
}

/// Flips `v` so its first non-negligible component is positive.
fn canonical_sign(v: Vec3) -> Vec3 {
    for i in 0..3 {
        if v[i].abs() > 1e-9 {
            return if v[i] < 0.0 { -v } else { v };
        }
    }
    v
}

/// Eigen-decomposition of the centered covariance, sorted by descending
/// eigenvalue.
fn principal_axes(points: &[Vec3]) -> (Vec3, [f64; 3], [Vec3; 3]) {
    let n = points.len() as f64;
    let mean: Vec3 = points.iter().sum::<Vec3>() / n;
    let mut cov = Matrix3::zeros();
    for p in points {
        let d = p - mean;
        cov += d * d.transpose();
    }
    cov /= n;
    let eig = SymmetricEigen::new(cov);
    let mut order = [0usize, 1, 2];
    order.sort_by(|&i, &j| eig.eigenvalues[j].total_cmp(&eig.eigenvalues[i]));
    let values = order.map(|i| eig.eigenvalues[i].max(0.0));
    let vectors = order.map(|i| eig.eigenvectors.column(i).into_owned());
    (mean, values, vectors)
}

/// PCA-oriented bounding box enclosing every point of `cloud`.
///
/// A planar cloud gets its missing axis from the cross product of the two
/// principal axes and a thickness of `2 * MIN_HALF_EXTENT`.
pub fn compute_obb(cloud: &PointCloud) -> Result<OrientedBoundingBox, GeometryError> {
    if cloud.is_empty() {
        return Err(GeometryError::EmptyCloud);
    }
    let (mean, values, vectors) = principal_axes(&cloud.points);
    let scale = values[0];
    let rank = if scale <= 1e-18 {
        0
    } else {
        values.iter().filter(|&&v| v > 1e-10 * scale).count()
    };
    if rank < 2 {
        return Err(GeometryError::DegenerateCloud { rank });
    }
    let a0 = canonical_sign(vectors[0].normalize());
    let mut a1 = vectors[1] - a0 * a0.dot(&vectors[1]);
    a1 = canonical_sign(a1.normalize());
    let a2 = a0.cross(&a1);
    let axes = [a0, a1, a2];

    let mut lo = Vec3::repeat(f64::INFINITY);
    let mut hi = Vec3::repeat(f64::NEG_INFINITY);
    for p in &cloud.points {
        let d = p - mean;
        for i in 0..3 {
            let t = d.dot(&axes[i]);
            lo[i] = lo[i].min(t);
            hi[i] = hi[i].max(t);
        }
    }
    let mid = (lo + hi) * 0.5;
    let center = mean + axes[0] * mid.x + axes[1] * mid.y + axes[2] * mid.z;
    let half = ((hi - lo) * 0.5).map(|h| h.max(MIN_HALF_EXTENT));
    Ok(OrientedBoundingBox::from_axes(center, half, axes))
}

/// Axis-aligned fallback for clouds PCA cannot orient (one or two points,
/// collinear runs).
pub(crate) fn aabb_of(cloud: &PointCloud) -> Result<OrientedBoundingBox, GeometryError> {
    let (lo, hi) = cloud.bounds().ok_or(GeometryError::EmptyCloud)?;
    let half = ((hi - lo) * 0.5).map(|h| h.max(MIN_HALF_EXTENT));
    Ok(OrientedBoundingBox::axis_aligned((lo + hi) * 0.5, half))
}

/// Per-point normals from local PCA over `k` neighbors, each flipped to face
/// `toward`.
pub fn estimate_normals(points: &[Vec3], k: usize, toward: Vec3) -> Vec<Vec3> {
    if points.is_empty() {
        return Vec::new();
    }
    let index = SpatialIndex::build(points);
    points
        .iter()
        .map(|p| {
            let nbrs: Vec<Vec3> = index
                .knn(p, k.max(3))
                .into_iter()
                .map(|(i, _)| points[i])
                .collect();
            let n = if nbrs.len() < 3 {
                UP
            } else {
                let (_, _, vectors) = principal_axes(&nbrs);
                let v = vectors[2];
                if v.norm() > 0.0 {
                    v.normalize()
                } else {
                    UP
                }
            };
            if n.dot(&(toward - p)) < 0.0 {
                -n
            } else {
                n
            }
        })
        .collect()
}
