use super::obb::OrientedBoundingBox;
use super::Vec3;

const ON_PLANE: f64 = 1e-12;

/// A convex polytope kept as its list of planar faces. Only what the box
/// clipping needs: half-space cuts and volume.
#[derive(Debug, Clone, Default)]
pub struct ConvexPolytope {
    faces: Vec<Vec<Vec3>>,
}

impl ConvexPolytope {
    pub fn from_obb(b: &OrientedBoundingBox) -> Self {
        let c = b.corners();
        // corner index bits: 1 = +x, 2 = +y, 4 = +z
        let quads = [
            [0, 2, 6, 4],
            [1, 3, 7, 5],
            [0, 1, 5, 4],
            [2, 3, 7, 6],
            [0, 1, 3, 2],
            [4, 5, 7, 6],
        ];
        Self {
            faces: quads
                .iter()
                .map(|q| q.iter().map(|&i| c[i]).collect())
                .collect(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.faces.is_empty()
    }

    pub fn faces(&self) -> &[Vec<Vec3>] {
        &self.faces
    }

    /// Keeps the part with `normal·x <= offset`.
    pub fn clip(&self, normal: &Vec3, offset: f64) -> ConvexPolytope {
        let all = self.faces.iter().flatten().map(|v| normal.dot(v) - offset);
        let (lo, hi) = all.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), s| {
            (lo.min(s), hi.max(s))
        });
        if hi <= ON_PLANE {
            return self.clone();
        }
        if lo >= -ON_PLANE {
            return ConvexPolytope::default();
        }
        let mut faces = Vec::with_capacity(self.faces.len() + 1);
        let mut cap: Vec<Vec3> = Vec::new();
        for face in &self.faces {
            let dist: Vec<f64> = face.iter().map(|v| normal.dot(v) - offset).collect();
            if dist.iter().all(|&s| s <= ON_PLANE) {
                cap.extend(
                    face.iter()
                        .zip(&dist)
                        .filter(|(_, s)| s.abs() <= ON_PLANE)
                        .map(|(v, _)| *v),
                );
                faces.push(face.clone());
                continue;
            }
            if dist.iter().all(|&s| s > ON_PLANE) {
                continue;
            }
            let mut out = Vec::with_capacity(face.len() + 1);
            for j in 0..face.len() {
                let i = (j + face.len() - 1) % face.len();
                let (sp, sc) = (dist[i], dist[j]);
                let (prev, cur) = (face[i], face[j]);
                if sc <= ON_PLANE {
                    if sp > ON_PLANE {
                        let x = prev + (cur - prev) * (sp / (sp - sc));
                        out.push(x);
                        cap.push(x);
                    }
                    if sc.abs() <= ON_PLANE {
                        cap.push(cur);
                    }
                    out.push(cur);
                } else if sp <= ON_PLANE {
                    let x = prev + (cur - prev) * (sp / (sp - sc));
                    out.push(x);
                    cap.push(x);
                }
            }
            if out.len() >= 3 {
                faces.push(out);
            }
        }
        if let Some(cap_face) = order_on_plane(cap, normal) {
            faces.push(cap_face);
        }
        ConvexPolytope { faces }
    }

    pub fn clip_by_box(&self, b: &OrientedBoundingBox) -> ConvexPolytope {
        let mut p = self.clone();
        for (n, d) in b.planes() {
            if p.is_empty() {
                break;
            }
            p = p.clip(&n, d);
        }
        p
    }

    /// Sum of face pyramids over an interior apex.
    pub fn volume(&self) -> f64 {
        let count: usize = self.faces.iter().map(Vec::len).sum();
        if count == 0 {
            return 0.0;
        }
        let apex = self.faces.iter().flatten().sum::<Vec3>() / count as f64;
        self.faces
            .iter()
            .map(|f| {
                let n = newell_normal(f);
                let area2 = n.norm();
                if area2 < 1e-300 {
                    return 0.0;
                }
                let height = (n / area2).dot(&(f[0] - apex)).abs();
                0.5 * area2 * height / 3.0
            })
            .sum()
    }
}

/// Twice the area-weighted normal of a planar polygon.
fn newell_normal(f: &[Vec3]) -> Vec3 {
    let mut n = Vec3::zeros();
    for i in 0..f.len() {
        let a = f[i];
        let b = f[(i + 1) % f.len()];
        n += a.cross(&b);
    }
    n
}

/// Sorts coplanar points by angle around their mean, dropping duplicates.
fn order_on_plane(mut pts: Vec<Vec3>, normal: &Vec3) -> Option<Vec<Vec3>> {
    if pts.len() < 3 {
        return None;
    }
    let mean = pts.iter().sum::<Vec3>() / pts.len() as f64;
    let seed = if normal.x.abs() < 0.9 { Vec3::x() } else { Vec3::y() };
    let u = normal.cross(&seed).normalize();
    let w = normal.normalize().cross(&u);
    let angle = |p: &Vec3| {
        let d = p - mean;
        d.dot(&w).atan2(d.dot(&u))
    };
    pts.sort_by(|a, b| angle(a).total_cmp(&angle(b)));
    pts.dedup_by(|a, b| (*a - *b).norm_squared() < 1e-24);
    if pts.len() >= 2 && (pts[0] - pts[pts.len() - 1]).norm_squared() < 1e-24 {
        pts.pop();
    }
    (pts.len() >= 3).then_some(pts)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn box_volume_and_halving() {
        let b = OrientedBoundingBox::upright(Vec3::new(0.3, 0.2, 1.0), Vec3::new(1.0, 0.5, 0.25), 0.4);
        let p = ConvexPolytope::from_obb(&b);
        assert_relative_eq!(p.volume(), b.volume(), epsilon = 1e-12);
        let half = p.clip(&Vec3::x(), 0.3);
        assert_relative_eq!(half.volume(), 0.5 * b.volume(), epsilon = 1e-12);
        let none = p.clip(&Vec3::z(), 0.0);
        assert!(none.is_empty());
        assert_eq!(none.volume(), 0.0);
    }

    #[test]
    fn corner_cut_is_a_tetrahedron() {
        let b = OrientedBoundingBox::axis_aligned(Vec3::repeat(0.5), Vec3::repeat(0.5));
        let n = Vec3::new(-1.0, -1.0, -1.0).normalize();
        // keep x + y + z >= 2.5 region near corner (1,1,1)
        let cut = ConvexPolytope::from_obb(&b).clip(&n, -2.5 / 3f64.sqrt());
        assert_relative_eq!(cut.volume(), 0.5f64.powi(3) / 6.0, epsilon = 1e-12);
    }
}
