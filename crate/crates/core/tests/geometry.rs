mod common;

use std::f64::consts::PI;

use approx::assert_relative_eq;
use common::*;
use nalgebra::Rotation3;
use orgsynth::geometry::{
    apply_pose, compute_obb, delta_z, half_space_fraction, intersection_volume, min_distance, overlap_xy,
    ransac_plane, OrientedBoundingBox, PointCloud, Pose, Side, SpatialIndex, Vec3,
};
use proptest::prelude::*;
use rand::Rng;

fn angle_deg(u: &Vec3, v: &Vec3) -> f64 {
    u.dot(v).abs().min(1.0).acos().to_degrees()
}

#[test]
fn rotated_cuboid_is_recovered() {
    // a cube has no preferred axes, so distinct extents stand in for it
    let rot = Rotation3::from_axis_angle(&Vec3::z_axis(), 30f64.to_radians());
    let half = Vec3::new(0.9, 0.6, 0.3);
    let mut pts = Vec::new();
    for i in 0..=8 {
        for j in 0..=8 {
            for k in 0..=8 {
                let l = Vec3::new(i as f64 / 4.0 - 1.0, j as f64 / 4.0 - 1.0, k as f64 / 4.0 - 1.0).component_mul(&half);
                pts.push(rot * l + Vec3::new(1.0, -2.0, 0.5));
            }
        }
    }
    let obb = compute_obb(&PointCloud::new(pts)).unwrap();
    let m = rot.matrix();
    for i in 0..3 {
        assert!(angle_deg(&obb.axes[i], &m.column(i).into_owned()) < 1.0, "axis {i}");
        assert!((obb.half_extents[i] - half[i]).abs() < 1e-6, "extent {i}");
    }
}

#[test]
fn long_axis_of_uniform_box_matches_dense_eigensolver() {
    let mut rng = rng(3);
    let pts: Vec<Vec3> = (0..1000)
        .map(|_| Vec3::new(rng.random_range(0.0..2.0), rng.random_range(0.0..1.0), rng.random_range(0.0..1.0)))
        .collect();
    let obb = compute_obb(&PointCloud::new(pts.clone())).unwrap();
    let mean = pts.iter().sum::<Vec3>() / pts.len() as f64;
    let mut c = [[0.0; 3]; 3];
    for p in &pts {
        let d = p - mean;
        for i in 0..3 {
            for j in 0..3 {
                c[i][j] += d[i] * d[j] / pts.len() as f64;
            }
        }
    }
    let (vals, vecs) = jacobi_eigen(c);
    let top = (0..3).max_by(|&i, &j| vals[i].total_cmp(&vals[j])).unwrap();
    let v = Vec3::new(vecs[0][top], vecs[1][top], vecs[2][top]);
    assert!(angle_deg(&obb.axes[0], &v) < 0.5);
    assert!(angle_deg(&obb.axes[0], &Vec3::x()) < 2.0);
    for p in &pts {
        assert!(obb.contains(p, 1e-9));
    }
}

#[test]
fn footprint_overlap_matches_raster() {
    let mut rng = rng(11);
    for _ in 0..20 {
        let a = OrientedBoundingBox::upright(
            Vec3::new(0.0, 0.0, 0.5),
            Vec3::new(rng.random_range(0.1..0.4), rng.random_range(0.1..0.4), 0.5),
            rng.random_range(-PI..PI),
        );
        let b = pca_box(
            Vec3::new(rng.random_range(-0.3..0.3), rng.random_range(-0.3..0.3), 0.5),
            Vec3::new(rng.random_range(0.1..0.4), rng.random_range(0.1..0.4), rng.random_range(0.1..0.4)),
            &random_rotation(&mut rng),
        );
        let want = raster_overlap_xy(&a, &b, 1e-3);
        let got = overlap_xy(&a, &b);
        assert!((got - want).abs() <= 1e-3, "{got} vs raster {want}");
    }
}

#[test]
fn delta_z_matches_corner_enumeration() {
    let mut rng = rng(12);
    for _ in 0..500 {
        let (a, b) = random_pair(&mut rng);
        let (got, want) = (delta_z(&a, &b), corner_delta_z(&a, &b));
        assert!((got - want).abs() <= 1e-12, "{got} vs {want}");
    }
    let b = OrientedBoundingBox::axis_aligned(Vec3::new(0.0, 0.0, 0.5), Vec3::repeat(0.5));
    let a = OrientedBoundingBox::axis_aligned(Vec3::new(0.0, 0.0, 1.7), Vec3::repeat(0.5));
    assert_relative_eq!(delta_z(&a, &b), 0.2, epsilon = 1e-12);
}

#[test]
fn intersection_volume_matches_monte_carlo() {
    let mut rng = rng(13);
    for _ in 0..30 {
        let b = random_box(&mut rng);
        let a = pca_box(
            b.center + Vec3::new(rng.random_range(-0.2..0.2), rng.random_range(-0.2..0.2), rng.random_range(-0.2..0.2)),
            Vec3::new(rng.random_range(0.2..0.8), rng.random_range(0.2..0.8), rng.random_range(0.2..0.8)),
            &random_rotation(&mut rng),
        );
        let want = mc_intersection_volume(&a, &b, 400_000, &mut rng);
        let got = intersection_volume(&a, &b);
        assert!((got - want).abs() <= 0.02 * want, "{got} vs {want}");
    }
}

#[test]
fn min_distance_matches_surface_sampling() {
    let mut rng = rng(14);
    for _ in 0..20 {
        let a = random_box(&mut rng);
        let mut b = random_box(&mut rng);
        b.center += Vec3::new(2.5, 0.0, 0.0);
        let got = min_distance(&a, &b);
        let want = sampled_distance(&a, &b, 100);
        // the sample grid only approaches the true minimum from above
        assert!(got <= want + 1e-12 && want - got <= 1e-3, "{got} vs {want}");
    }
    let a = OrientedBoundingBox::axis_aligned(Vec3::zeros(), Vec3::repeat(0.5));
    let b = OrientedBoundingBox::axis_aligned(Vec3::new(2.0, 0.0, 0.0), Vec3::repeat(0.5));
    assert_relative_eq!(min_distance(&a, &b), 1.0, epsilon = 1e-12);
}

#[test]
fn half_space_fraction_matches_monte_carlo() {
    let mut rng = rng(15);
    for _ in 0..50 {
        let (a, b) = random_pair(&mut rng);
        let left = Vec3::z().cross(&b.front).normalize();
        let want = mc_side_fraction(&a, &b, &left, 200_000, &mut rng);
        let got = half_space_fraction(&a, &b, Side::Left);
        assert!((got - want).abs() <= 0.02 * want.max(0.05), "{got} vs {want}");
    }
}

#[test]
fn ransac_recovers_plane_under_outliers() {
    let mut rng = rng(16);
    let mut pts = Vec::new();
    for _ in 0..900 {
        pts.push(Vec3::new(rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0), 1.0 + rng.random_range(-0.005..0.005)));
    }
    for _ in 0..100 {
        pts.push(Vec3::new(rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0), rng.random_range(-1.0..3.0)));
    }
    let plane = ransac_plane(&PointCloud::new(pts.clone()), 200, 0.02, 5).unwrap();
    let inliers = plane.inliers(&pts, 0.02);
    let recovered = inliers.iter().filter(|&&i| i < 900).count();
    assert!(recovered as f64 >= 0.99 * 900.0, "{recovered}");
    assert!(angle_deg(&plane.normal, &Vec3::z()) < 1.0);
}

#[test]
fn knn_matches_brute_force() {
    let mut rng = rng(17);
    let pts: Vec<Vec3> = (0..1000)
        .map(|_| Vec3::new(rng.random_range(0.0..1.0), rng.random_range(0.0..1.0), rng.random_range(0.0..1.0)))
        .collect();
    let index = SpatialIndex::build(&pts);
    for _ in 0..200 {
        let q = Vec3::new(rng.random_range(-0.2..1.2), rng.random_range(-0.2..1.2), rng.random_range(-0.2..1.2));
        let mut brute: Vec<(usize, f64)> = pts.iter().enumerate().map(|(i, p)| (i, (p - q).norm())).collect();
        brute.sort_by(|x, y| x.1.total_cmp(&y.1).then(x.0.cmp(&y.0)));
        let got = index.knn(&q, 10);
        let ids: Vec<usize> = got.iter().map(|g| g.0).collect();
        let want: Vec<usize> = brute[..10].iter().map(|g| g.0).collect();
        assert_eq!(ids, want);
        assert!(got.windows(2).all(|w| w[0].1 <= w[1].1));
    }
}

#[test]
fn pose_round_trip() {
    let mut rng = rng(18);
    for _ in 0..50 {
        let obb = random_box(&mut rng);
        let cloud = PointCloud::new(corners(&obb));
        let pose = Pose::new(
            rng.random_range(-3.0..3.0),
            rng.random_range(-3.0..3.0),
            rng.random_range(0.0..2.0),
            rng.random_range(-PI..PI),
            rng.random_range(-0.5..0.5),
        );
        let (moved, moved_box) = apply_pose(&cloud, &obb, &pose);
        assert!((moved_box.center - pose.center()).norm() < 1e-9);
        let t = orgsynth::geometry::RigidTransform::from_pose(&obb, &pose).inverse();
        let back = t.apply_cloud(&moved);
        for (p, q) in back.points.iter().zip(&cloud.points) {
            assert!((p - q).norm() < 1e-6);
        }
    }
}

fn arb_box() -> impl Strategy<Value = OrientedBoundingBox> {
    (
        (-1.0f64..1.0, -1.0f64..1.0, -1.0f64..1.0),
        (0.05f64..0.8, 0.05f64..0.8, 0.05f64..0.8),
        (-PI..PI, -PI..PI, -PI..PI),
    )
        .prop_map(|((x, y, z), (a, b, c), (r, p, w))| {
            pca_box(Vec3::new(x, y, z), Vec3::new(a, b, c), &Rotation3::from_euler_angles(r, p, w))
        })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn pair_measures_are_symmetric(a in arb_box(), b in arb_box()) {
        prop_assert_eq!(overlap_xy(&a, &b), overlap_xy(&b, &a));
        prop_assert_eq!(intersection_volume(&a, &b), intersection_volume(&b, &a));
        prop_assert!((min_distance(&a, &b) - min_distance(&b, &a)).abs() <= 1e-12);
    }

    #[test]
    fn intersection_is_bounded_by_smaller_volume(a in arb_box(), b in arb_box()) {
        let v = intersection_volume(&a, &b);
        prop_assert!(v >= 0.0);
        prop_assert!(v <= a.volume().min(b.volume()) * (1.0 + 1e-9));
    }

    #[test]
    fn contained_box_gives_its_own_volume(a in arb_box(), s in 0.1f64..0.9) {
        let inner = OrientedBoundingBox { half_extents: a.half_extents * s, ..a };
        prop_assert!((intersection_volume(&a, &inner) - inner.volume()).abs() <= 1e-9 * inner.volume().max(1e-9));
    }

    #[test]
    fn left_and_right_fractions_sum_to_one(a in arb_box(), b in arb_box()) {
        let l = half_space_fraction(&a, &b, Side::Left);
        let r = half_space_fraction(&a, &b, Side::Right);
        prop_assert!((l + r - 1.0).abs() <= 1e-9);
    }

    #[test]
    fn posing_is_rigid(a in arb_box(), x in -2.0f64..2.0, y in -2.0f64..2.0, th in -PI..PI, ph in -0.5f64..0.5) {
        let cloud = PointCloud::new(corners(&a));
        let (moved, _) = apply_pose(&cloud, &a, &Pose::new(x, y, 0.3, th, ph));
        for i in 0..8 {
            for j in 0..8 {
                let d0 = (cloud.points[i] - cloud.points[j]).norm();
                let d1 = (moved.points[i] - moved.points[j]).norm();
                prop_assert!((d0 - d1).abs() <= 1e-6);
            }
        }
    }
}
