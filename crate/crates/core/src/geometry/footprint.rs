//! Convex polygons on the ground plane.

use nalgebra::Vector2;

pub type Point2 = Vector2<f64>;

fn cross(o: &Point2, a: &Point2, b: &Point2) -> f64 {
    (a.x - o.x) * (b.y - o.y) - (a.y - o.y) * (b.x - o.x)
}

/// Andrew's monotone chain. Counter-clockwise, collinear points dropped.
pub fn convex_hull_2d(points: &[Point2]) -> Vec<Point2> {
    let mut pts = points.to_vec();
    pts.sort_by(|a, b| a.x.total_cmp(&b.x).then(a.y.total_cmp(&b.y)));
    pts.dedup_by(|a, b| (*a - *b).norm_squared() < 1e-24);
    if pts.len() < 3 {
        return pts;
    }
    let mut hull: Vec<Point2> = Vec::with_capacity(pts.len() * 2);
    for p in &pts {
        while hull.len() >= 2 && cross(&hull[hull.len() - 2], &hull[hull.len() - 1], p) <= 1e-15 {
            hull.pop();
        }
        hull.push(*p);
    }
    let lower_len = hull.len() + 1;
    for p in pts.iter().rev().skip(1) {
        while hull.len() >= lower_len
            && cross(&hull[hull.len() - 2], &hull[hull.len() - 1], p) <= 1e-15
        {
            hull.pop();
        }
        hull.push(*p);
    }
    hull.pop();
    hull
}

/// Shoelace area (absolute value).
pub fn polygon_area(poly: &[Point2]) -> f64 {
    if poly.len() < 3 {
        return 0.0;
    }
    let mut s = 0.0;
    for i in 0..poly.len() {
        let a = poly[i];
        let b = poly[(i + 1) % poly.len()];
        s += a.x * b.y - b.x * a.y;
    }
    0.5 * s.abs()
}

/// Intersection of two convex counter-clockwise polygons by
/// Sutherland–Hodgman clipping of `subject` against each edge of `clip`.
pub fn polygon_intersection(subject: &[Point2], clip: &[Point2]) -> Vec<Point2> {
    if subject.len() < 3 || clip.len() < 3 {
        return Vec::new();
    }
    let mut output = subject.to_vec();
    for i in 0..clip.len() {
        if output.is_empty() {
            break;
        }
        let a = clip[i];
        let b = clip[(i + 1) % clip.len()];
        let input = std::mem::take(&mut output);
        let side = |p: &Point2| cross(&a, &b, p);
        for j in 0..input.len() {
            let cur = input[j];
            let prev = input[(j + input.len() - 1) % input.len()];
            let (sc, sp) = (side(&cur), side(&prev));
            if sc >= 0.0 {
                if sp < 0.0 {
                    output.push(prev + (cur - prev) * (sp / (sp - sc)));
                }
                output.push(cur);
            } else if sp >= 0.0 {
                output.push(prev + (cur - prev) * (sp / (sp - sc)));
            }
        }
    }
    output
}

/// Signed distance from `p` to the boundary of a convex CCW polygon,
/// positive inside.
pub(crate) fn inside_depth(poly: &[Point2], p: &Point2) -> f64 {
    let mut depth = f64::INFINITY;
    for i in 0..poly.len() {
        let a = poly[i];
        let b = poly[(i + 1) % poly.len()];
        let e = b - a;
        let len = e.norm();
        if len < 1e-15 {
            continue;
        }
        depth = depth.min(cross(&a, &b, p) / len);
    }
    depth
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn square(x0: f64, y0: f64, s: f64) -> Vec<Point2> {
        vec![
            Point2::new(x0, y0),
            Point2::new(x0 + s, y0),
            Point2::new(x0 + s, y0 + s),
            Point2::new(x0, y0 + s),
        ]
    }

    #[test]
    fn hull_drops_interior_and_collinear() {
        let mut pts = square(0.0, 0.0, 1.0);
        pts.push(Point2::new(0.5, 0.5));
        pts.push(Point2::new(0.5, 0.0));
        pts.push(Point2::new(0.0, 0.0));
        let hull = convex_hull_2d(&pts);
        assert_eq!(hull.len(), 4);
        assert_relative_eq!(polygon_area(&hull), 1.0);
    }

    #[test]
    fn square_overlap() {
        let a = square(0.0, 0.0, 1.0);
        let b = square(0.5, 0.0, 1.0);
        assert_relative_eq!(polygon_area(&polygon_intersection(&a, &b)), 0.5, epsilon = 1e-12);
        let c = square(2.0, 0.0, 1.0);
        assert_eq!(polygon_area(&polygon_intersection(&a, &c)), 0.0);
    }

    #[test]
    fn depth_sign() {
        let a = square(0.0, 0.0, 2.0);
        assert_relative_eq!(inside_depth(&a, &Point2::new(1.0, 1.0)), 1.0);
        assert!(inside_depth(&a, &Point2::new(3.0, 1.0)) < 0.0);
    }
}
