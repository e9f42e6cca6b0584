use nalgebra::{Matrix3, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{GeometryError, PointCloud, Vec3};

/// The plane `normal · p = offset`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlaneModel {
    pub normal: Vec3,
    pub offset: f64,
    pub inlier_count: usize,
}

impl PlaneModel {
    pub fn signed_distance(&self, p: &Vec3) -> f64 {
        self.normal.dot(p) - self.offset
    }

    pub fn inliers(&self, points: &[Vec3], tol: f64) -> Vec<usize> {
        points
            .iter()
            .enumerate()
            .filter(|(_, p)| self.signed_distance(p).abs() <= tol)
            .map(|(i, _)| i)
            .collect()
    }
}

/// Sign convention: upward normals, otherwise first significant component
/// positive.
fn orient(n: Vec3, offset: f64) -> (Vec3, f64) {
    let flip = if n.z.abs() > 1e-9 {
        n.z < 0.0
    } else if n.y.abs() > 1e-9 {
        n.y < 0.0
    } else {
        n.x < 0.0
    };
    if flip {
        (-n, -offset)
    } else {
        (n, offset)
    }
}

fn count_inliers(points: &[Vec3], n: &Vec3, d: f64, tol: f64) -> usize {
    points.iter().filter(|p| (n.dot(p) - d).abs() <= tol).count()
}

/// Least-squares plane through `points`.
fn fit_plane(points: &[Vec3]) -> Option<(Vec3, f64)> {
    if points.len() < 3 {
        return None;
    }
    let mean: Vec3 = points.iter().sum::<Vec3>() / points.len() as f64;
    let mut cov = Matrix3::zeros();
    for p in points {
        let d = p - mean;
        cov += d * d.transpose();
    }
    let eig = SymmetricEigen::new(cov);
    let i = eig.eigenvalues.imin();
    let n = eig.eigenvectors.column(i).into_owned();
    let len = n.norm();
    (len > 0.0).then(|| {
        let n = n / len;
        (n, n.dot(&mean))
    })
}

/// Seeded RANSAC plane search followed by a least-squares refit on the
/// winning inlier set. The refit is kept only if it does not lose inliers.
pub fn ransac_plane(
    cloud: &PointCloud,
    iterations: usize,
    inlier_tol: f64,
    rng_seed: u64,
) -> Result<PlaneModel, GeometryError> {
    let pts = &cloud.points;
    if pts.len() < 3 {
        return Err(GeometryError::TooFewPoints {
            needed: 3,
            got: pts.len(),
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    let mut best: Option<(Vec3, f64, usize)> = None;
    for _ in 0..iterations.max(1) {
        let i = rng.random_range(0..pts.len());
        let j = rng.random_range(0..pts.len());
        let k = rng.random_range(0..pts.len());
        if i == j || j == k || i == k {
            continue;
        }
        let n = (pts[j] - pts[i]).cross(&(pts[k] - pts[i]));
        let len = n.norm();
        if len < 1e-12 {
            continue;
        }
        let n = n / len;
        let d = n.dot(&pts[i]);
        let count = count_inliers(pts, &n, d, inlier_tol);
        if best.is_none_or(|(_, _, c)| count > c) {
            best = Some((n, d, count));
        }
    }
    let (mut n, mut d, mut count) = match best {
        Some(b) => b,
        None => {
            let (n, d) = fit_plane(pts).ok_or(GeometryError::DegenerateCloud { rank: 1 })?;
            (n, d, count_inliers(pts, &n, d, inlier_tol))
        }
    };
    let inliers: Vec<Vec3> = pts
        .iter()
        .filter(|p| (n.dot(p) - d).abs() <= inlier_tol)
        .copied()
        .collect();
    if let Some((rn, rd)) = fit_plane(&inliers) {
        let rc = count_inliers(pts, &rn, rd, inlier_tol);
        if rc >= count {
            (n, d, count) = (rn, rd, rc);
        }
    }
    let (normal, offset) = orient(n, d);
    Ok(PlaneModel {
        normal,
        offset,
        inlier_count: count,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn grid(n: usize, z: f64) -> Vec<Vec3> {
        (0..n * n)
            .map(|i| Vec3::new((i % n) as f64 * 0.1, (i / n) as f64 * 0.1, z))
            .collect()
    }

    #[test]
    fn exact_plane() {
        let cloud = PointCloud::new(grid(10, 0.0));
        let m = ransac_plane(&cloud, 100, 1e-6, 1).unwrap();
        assert_relative_eq!(m.normal, Vec3::z(), epsilon = 1e-9);
        assert_relative_eq!(m.offset, 0.0, epsilon = 1e-9);
        assert_eq!(m.inlier_count, 100);
    }

    #[test]
    fn larger_of_two_parallel_planes() {
        let mut pts: Vec<Vec3> = grid(10, 0.0).into_iter().take(70).collect();
        pts.extend(grid(10, 1.0).into_iter().take(30));
        let m = ransac_plane(&PointCloud::new(pts), 200, 0.01, 9).unwrap();
        assert_eq!(m.inlier_count, 70);
        assert_relative_eq!(m.offset, 0.0, epsilon = 1e-9);
    }

    #[test]
    fn too_few_points() {
        let cloud = PointCloud::new(vec![Vec3::zeros(), Vec3::x()]);
        assert_eq!(
            ransac_plane(&cloud, 10, 0.01, 0),
            Err(GeometryError::TooFewPoints { needed: 3, got: 2 })
        );
    }

    #[test]
    fn seeded_runs_repeat() {
        let mut pts = grid(20, 0.3);
        pts.extend((0..50).map(|i| Vec3::new(i as f64 * 0.03, 1.0, (i % 7) as f64 * 0.2)));
        let cloud = PointCloud::new(pts);
        assert_eq!(ransac_plane(&cloud, 50, 0.01, 4), ransac_plane(&cloud, 50, 0.01, 4));
    }
}
