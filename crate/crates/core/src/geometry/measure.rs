//! Pairwise box measurements used by the relation predicates and losses.

use super::footprint::{polygon_area, polygon_intersection};
use super::obb::OrientedBoundingBox;
use super::polytope::ConvexPolytope;
use super::{Vec3, UP};

/// Side of a reference box, relative to its heading.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Side {
    Left,
    Right,
}

/// Orders a pair so symmetric measurements are bit-identical under swap.
fn canonical<'a>(
    a: &'a OrientedBoundingBox,
    b: &'a OrientedBoundingBox,
) -> (&'a OrientedBoundingBox, &'a OrientedBoundingBox) {
    let key = |o: &OrientedBoundingBox| {
        [
            o.center.x,
            o.center.y,
            o.center.z,
            o.half_extents.x,
            o.half_extents.y,
            o.half_extents.z,
            o.axes[0].x,
            o.axes[0].y,
            o.axes[0].z,
            o.axes[1].x,
            o.axes[1].y,
            o.axes[1].z,
        ]
    };
    let (ka, kb) = (key(a), key(b));
    for (x, y) in ka.iter().zip(&kb) {
        match x.total_cmp(y) {
            std::cmp::Ordering::Less => return (a, b),
            std::cmp::Ordering::Greater => return (b, a),
            std::cmp::Ordering::Equal => {}
        }
    }
    (a, b)
}

/// Ground-plane footprint intersection area over the smaller footprint area.
pub fn overlap_xy(a: &OrientedBoundingBox, b: &OrientedBoundingBox) -> f64 {
    let (a, b) = canonical(a, b);
    let fa = a.footprint();
    let fb = b.footprint();
    let denom = polygon_area(&fa).min(polygon_area(&fb));
    if denom <= 0.0 {
        return 0.0;
    }
    (polygon_area(&polygon_intersection(&fa, &fb)) / denom).clamp(0.0, 1.0)
}

/// Vertical gap between the base of `a` and the top of `b`.
///
/// When `a`'s base sits inside `b`'s vertical span the boxes interpenetrate
/// and the gap is 0. When `a`'s base is below `b`'s base, `a` is not above
/// `b` at all and the result is how far the base would have to rise to reach
/// `b`'s top.
pub fn delta_z(a: &OrientedBoundingBox, b: &OrientedBoundingBox) -> f64 {
    let base = a.min_z();
    let top = b.max_z();
    if base >= top {
        base - top
    } else if base >= b.min_z() {
        0.0
    } else {
        top - base
    }
}

/// Volume of the intersection of two oriented boxes.
pub fn intersection_volume(a: &OrientedBoundingBox, b: &OrientedBoundingBox) -> f64 {
    let (a, b) = canonical(a, b);
    if !a.intersects(b) {
        return 0.0;
    }
    if a.corners().iter().all(|c| b.contains(c, 0.0)) {
        return a.volume();
    }
    if b.corners().iter().all(|c| a.contains(c, 0.0)) {
        return b.volume();
    }
    ConvexPolytope::from_obb(a)
        .clip_by_box(b)
        .volume()
        .min(a.volume().min(b.volume()))
}

/// Euclidean distance from a point to a solid box (0 inside).
pub fn point_box_distance(p: &Vec3, b: &OrientedBoundingBox) -> f64 {
    let l = b.to_local(p);
    let mut d2 = 0.0;
    for i in 0..3 {
        let excess = l[i].abs() - b.half_extents[i];
        if excess > 0.0 {
            d2 += excess * excess;
        }
    }
    d2.sqrt()
}

/// Closest distance between segments `p1q1` and `p2q2`.
fn segment_distance(p1: &Vec3, q1: &Vec3, p2: &Vec3, q2: &Vec3) -> f64 {
    let d1 = q1 - p1;
    let d2 = q2 - p2;
    let r = p1 - p2;
    let a = d1.dot(&d1);
    let e = d2.dot(&d2);
    let f = d2.dot(&r);
    let (s, t);
    if a <= 1e-300 && e <= 1e-300 {
        return r.norm();
    }
    if a <= 1e-300 {
        s = 0.0;
        t = (f / e).clamp(0.0, 1.0);
    } else {
        let c = d1.dot(&r);
        if e <= 1e-300 {
            t = 0.0;
            s = (-c / a).clamp(0.0, 1.0);
        } else {
            let b = d1.dot(&d2);
            let denom = a * e - b * b;
            let mut s0 = if denom > 1e-300 {
                ((b * f - c * e) / denom).clamp(0.0, 1.0)
            } else {
                0.0
            };
            let mut t0 = (b * s0 + f) / e;
            if t0 < 0.0 {
                t0 = 0.0;
                s0 = (-c / a).clamp(0.0, 1.0);
            } else if t0 > 1.0 {
                t0 = 1.0;
                s0 = ((b - c) / a).clamp(0.0, 1.0);
            }
            s = s0;
            t = t0;
        }
    }
    ((p1 + d1 * s) - (p2 + d2 * t)).norm()
}

/// Minimum distance between the two box solids; 0 when they intersect.
///
/// For disjoint convex polytopes the closest pair is realized by a vertex
/// against the other solid or by an edge against an edge, so those cases
/// are enumerated exhaustively.
pub fn min_distance(a: &OrientedBoundingBox, b: &OrientedBoundingBox) -> f64 {
    let (a, b) = canonical(a, b);
    if a.intersects(b) {
        return 0.0;
    }
    let ca = a.corners();
    let cb = b.corners();
    let mut best = f64::INFINITY;
    for c in &ca {
        best = best.min(point_box_distance(c, b));
    }
    for c in &cb {
        best = best.min(point_box_distance(c, a));
    }
    for &(i, j) in &OrientedBoundingBox::EDGES {
        for &(k, l) in &OrientedBoundingBox::EDGES {
            best = best.min(segment_distance(&ca[i], &ca[j], &cb[k], &cb[l]));
        }
    }
    best
}

/// Unit direction pointing to the left of `b`: `up × front(b)`.
pub(crate) fn left_direction(b: &OrientedBoundingBox) -> Option<Vec3> {
    let l = UP.cross(&b.front);
    let n = l.norm();
    (n > 1e-9).then(|| l / n)
}

/// Fraction of `a`'s volume on the given side of the vertical plane through
/// `b`'s center that contains `b`'s heading.
pub fn half_space_fraction(a: &OrientedBoundingBox, b: &OrientedBoundingBox, side: Side) -> f64 {
    let Some(left) = left_direction(b) else {
        return 0.5;
    };
    let dir = match side {
        Side::Left => left,
        Side::Right => -left,
    };
    // keep dir·(x - c_b) >= 0, i.e. (-dir)·x <= -dir·c_b
    let n = -dir;
    let offset = n.dot(&b.center);
    let corners = a.corners();
    if corners.iter().all(|c| n.dot(c) <= offset) {
        return 1.0;
    }
    if corners.iter().all(|c| n.dot(c) >= offset) {
        return 0.0;
    }
    let kept = ConvexPolytope::from_obb(a).clip(&n, offset).volume();
    (kept / a.volume()).clamp(0.0, 1.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn cube(c: Vec3) -> OrientedBoundingBox {
        OrientedBoundingBox::axis_aligned(c, Vec3::repeat(0.5))
    }

    #[test]
    fn overlap_identity_and_offset() {
        let a = cube(Vec3::zeros());
        assert_relative_eq!(overlap_xy(&a, &a), 1.0, epsilon = 1e-12);
        let b = cube(Vec3::new(0.5, 0.0, 3.0));
        assert_relative_eq!(overlap_xy(&a, &b), 0.5, epsilon = 1e-12);
        let far = cube(Vec3::new(5.0, 0.0, 0.0));
        assert_eq!(overlap_xy(&a, &far), 0.0);
    }

    #[test]
    fn delta_z_cases() {
        let bottom = cube(Vec3::new(0.0, 0.0, 0.5));
        let top = cube(Vec3::new(0.0, 0.0, 1.5));
        assert_relative_eq!(delta_z(&top, &bottom), 0.0, epsilon = 1e-12);
        let floating = OrientedBoundingBox::axis_aligned(Vec3::new(0.0, 0.0, 1.7), Vec3::repeat(0.5));
        assert_relative_eq!(delta_z(&floating, &bottom), 0.2, epsilon = 1e-12);
        let sunk = cube(Vec3::new(0.0, 0.0, 1.2));
        assert_eq!(delta_z(&sunk, &bottom), 0.0);
        // beneath: base 1 m below b's top
        assert_relative_eq!(delta_z(&bottom, &top), 2.0, epsilon = 1e-12);
    }

    #[test]
    fn volume_cases() {
        let a = cube(Vec3::zeros());
        assert_relative_eq!(intersection_volume(&a, &a), 1.0, epsilon = 1e-12);
        assert_eq!(intersection_volume(&a, &cube(Vec3::new(3.0, 0.0, 0.0))), 0.0);
        let b = cube(Vec3::new(0.5, 0.5, 0.0));
        assert_relative_eq!(intersection_volume(&a, &b), 0.25, epsilon = 1e-12);
        let inner = OrientedBoundingBox::upright(Vec3::zeros(), Vec3::repeat(0.1), 0.3);
        assert_relative_eq!(intersection_volume(&a, &inner), inner.volume(), epsilon = 1e-12);
    }

    #[test]
    fn distance_cases() {
        let a = cube(Vec3::zeros());
        assert_eq!(min_distance(&a, &cube(Vec3::new(1.0, 0.0, 0.0))), 0.0);
        assert_relative_eq!(min_distance(&a, &cube(Vec3::new(2.0, 0.0, 0.0))), 1.0, epsilon = 1e-12);
        // b turned 45°: a's vertical edge at (0.5, 0.5) faces a side of b
        let b = OrientedBoundingBox::upright(Vec3::new(2.0, 2.0, 0.0), Vec3::repeat(0.5), std::f64::consts::FRAC_PI_4);
        assert_relative_eq!(min_distance(&a, &b), 1.5 * 2f64.sqrt() - 0.5, epsilon = 1e-12);
        // crossed edges: a ridge along y under a ridge along x
        let s = std::f64::consts::FRAC_1_SQRT_2;
        let ridge_y = OrientedBoundingBox::from_axes(
            Vec3::zeros(),
            Vec3::repeat(0.5),
            [Vec3::new(s, 0.0, s), Vec3::y(), Vec3::new(-s, 0.0, s)],
        );
        let ridge_x = OrientedBoundingBox::from_axes(
            Vec3::new(0.0, 0.0, 2.0),
            Vec3::repeat(0.5),
            [Vec3::x(), Vec3::new(0.0, s, s), Vec3::new(0.0, -s, s)],
        );
        assert_relative_eq!(min_distance(&ridge_y, &ridge_x), 2.0 - 2f64.sqrt(), epsilon = 1e-12);
    }

    #[test]
    fn half_space_cases() {
        // b faces +x, so its left is +y
        let b = cube(Vec3::zeros());
        let left_box = cube(Vec3::new(0.0, 2.0, 0.0));
        assert_relative_eq!(half_space_fraction(&left_box, &b, Side::Left), 1.0);
        assert_relative_eq!(half_space_fraction(&left_box, &b, Side::Right), 0.0);
        let straddle = cube(Vec3::new(3.0, 0.0, 0.0));
        assert_relative_eq!(half_space_fraction(&straddle, &b, Side::Left), 0.5, epsilon = 1e-12);
        assert_relative_eq!(half_space_fraction(&straddle, &b, Side::Right), 0.5, epsilon = 1e-12);
    }
}
