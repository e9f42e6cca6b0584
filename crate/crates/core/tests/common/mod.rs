//! Independent reference implementations and fixtures shared by the
//! integration tests and the acceptance harness.
#![allow(dead_code)]

use std::f64::consts::PI;

use nalgebra::{Rotation3, Unit};
use orgsynth::decompose::{CategoryTaxonomy, LabeledInstance, Role, SceneRepository};
use orgsynth::geometry::{OrientedBoundingBox, PointCloud, Vec3};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand::SeedableRng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Box whose axes are listed longest first, the order PCA would give.
pub fn pca_box(center: Vec3, half: Vec3, rot: &Rotation3<f64>) -> OrientedBoundingBox {
    let m = rot.matrix();
    let mut cols: Vec<(f64, Vec3)> = (0..3).map(|i| (half[i], m.column(i).into_owned())).collect();
    cols.sort_by(|a, b| b.0.total_cmp(&a.0));
    let mut axes = [cols[0].1, cols[1].1, cols[2].1];
    if axes[0].cross(&axes[1]).dot(&axes[2]) < 0.0 {
        axes[2] = -axes[2];
    }
    OrientedBoundingBox::from_axes(center, Vec3::new(cols[0].0, cols[1].0, cols[2].0), axes)
}

pub fn random_rotation(rng: &mut ChaCha8Rng) -> Rotation3<f64> {
    // uniform unit quaternion
    let (u1, u2, u3): (f64, f64, f64) = (rng.random(), rng.random(), rng.random());
    let q = nalgebra::Quaternion::new(
        (1.0 - u1).sqrt() * (2.0 * PI * u2).sin(),
        (1.0 - u1).sqrt() * (2.0 * PI * u2).cos(),
        u1.sqrt() * (2.0 * PI * u3).sin(),
        u1.sqrt() * (2.0 * PI * u3).cos(),
    );
    Unit::new_normalize(q).to_rotation_matrix()
}

/// Mix of upright and freely rotated boxes in a 3 m region.
pub fn random_box(rng: &mut ChaCha8Rng) -> OrientedBoundingBox {
    let half = Vec3::new(rng.random_range(0.1..0.8), rng.random_range(0.1..0.8), rng.random_range(0.1..0.8));
    let center = Vec3::new(rng.random_range(-1.5..1.5), rng.random_range(-1.5..1.5), rng.random_range(0.0..1.5));
    let rot = if rng.random_bool(0.6) {
        Rotation3::from_axis_angle(&Vec3::z_axis(), rng.random_range(-PI..PI))
    } else {
        random_rotation(rng)
    };
    pca_box(center, half, &rot)
}

/// Random pair, a third of them stacked so support relations occur.
pub fn random_pair(rng: &mut ChaCha8Rng) -> (OrientedBoundingBox, OrientedBoundingBox) {
    let b = random_box(rng);
    if rng.random_bool(1.0 / 3.0) {
        let yaw = rng.random_range(-PI..PI);
        let half = Vec3::new(rng.random_range(0.1..0.6), rng.random_range(0.1..0.6), rng.random_range(0.1..0.6));
        let rot = Rotation3::from_axis_angle(&Vec3::z_axis(), yaw);
        let mut a = pca_box(Vec3::zeros(), half, &rot);
        let lift = a.center.z - a.min_z();
        let jitter = Vec3::new(rng.random_range(-0.4..0.4), rng.random_range(-0.4..0.4), 0.0);
        a.center = b.center + jitter;
        a.center.z = b.max_z() + lift + rng.random_range(-0.1..0.15);
        (a, b)
    } else {
        (random_box(rng), b)
    }
}

pub fn local(b: &OrientedBoundingBox, p: &Vec3) -> Vec3 {
    let d = p - b.center;
    Vec3::new(d.dot(&b.axes[0]), d.dot(&b.axes[1]), d.dot(&b.axes[2]))
}

pub fn inside(b: &OrientedBoundingBox, p: &Vec3) -> bool {
    let l = local(b, p);
    (0..3).all(|i| l[i].abs() <= b.half_extents[i])
}

pub fn sample_in(b: &OrientedBoundingBox, rng: &mut ChaCha8Rng) -> Vec3 {
    let mut p = b.center;
    for i in 0..3 {
        p += b.axes[i] * (rng.random_range(-1.0..1.0) * b.half_extents[i]);
    }
    p
}

pub fn corners(b: &OrientedBoundingBox) -> Vec<Vec3> {
    let mut out = Vec::with_capacity(8);
    for s in 0..8 {
        let mut p = b.center;
        for i in 0..3 {
            let sign = if s >> i & 1 == 1 { 1.0 } else { -1.0 };
            p += b.axes[i] * (sign * b.half_extents[i]);
        }
        out.push(p);
    }
    out
}

/// Monte Carlo volume of `a ∩ b`, sampling the axis-aligned overlap of the
/// two boxes' bounding boxes.
pub fn mc_intersection_volume(a: &OrientedBoundingBox, b: &OrientedBoundingBox, n: usize, rng: &mut ChaCha8Rng) -> f64 {
    let bound = |o: &OrientedBoundingBox| {
        let cs = corners(o);
        let lo = cs.iter().fold(Vec3::repeat(f64::INFINITY), |m, c| m.inf(c));
        let hi = cs.iter().fold(Vec3::repeat(f64::NEG_INFINITY), |m, c| m.sup(c));
        (lo, hi)
    };
    let (la, ha) = bound(a);
    let (lb, hb) = bound(b);
    let lo = la.sup(&lb);
    let hi = ha.inf(&hb);
    if (0..3).any(|i| lo[i] >= hi[i]) {
        return 0.0;
    }
    let vol = (hi - lo).iter().product::<f64>();
    let mut hits = 0usize;
    for _ in 0..n {
        let p = Vec3::new(
            rng.random_range(lo.x..hi.x),
            rng.random_range(lo.y..hi.y),
            rng.random_range(lo.z..hi.z),
        );
        if inside(a, &p) && inside(b, &p) {
            hits += 1;
        }
    }
    vol * hits as f64 / n as f64
}

/// Monte Carlo fraction of `a` on the side of the vertical plane through
/// `b`'s center given by `dir`.
pub fn mc_side_fraction(a: &OrientedBoundingBox, b: &OrientedBoundingBox, dir: &Vec3, n: usize, rng: &mut ChaCha8Rng) -> f64 {
    let mut hits = 0usize;
    for _ in 0..n {
        if dir.dot(&(sample_in(a, rng) - b.center)) >= 0.0 {
            hits += 1;
        }
    }
    hits as f64 / n as f64
}

/// Footprint test: is the ground point inside the projection of `b`?
/// A point is in the projection iff the vertical line through it meets
/// the box, found by clipping the line against the six slabs.
pub fn in_footprint(b: &OrientedBoundingBox, x: f64, y: f64) -> bool {
    let (mut t0, mut t1) = (f64::NEG_INFINITY, f64::INFINITY);
    let p = Vec3::new(x, y, 0.0);
    let l = local(b, &p);
    for i in 0..3 {
        let dz = b.axes[i].z;
        let (lo, hi) = (-b.half_extents[i] - l[i], b.half_extents[i] - l[i]);
        if dz.abs() < 1e-12 {
            if lo > 0.0 || hi < 0.0 {
                return false;
            }
        } else {
            let (a, c) = (lo / dz, hi / dz);
            t0 = t0.max(a.min(c));
            t1 = t1.min(a.max(c));
        }
    }
    t0 <= t1
}

fn footprint_bounds(b: &OrientedBoundingBox) -> (f64, f64, f64, f64) {
    let cs = corners(b);
    let f = |g: fn(&Vec3) -> f64, m: fn(f64, f64) -> f64, init| cs.iter().map(g).fold(init, m);
    (
        f(|c| c.x, f64::min, f64::INFINITY),
        f(|c| c.x, f64::max, f64::NEG_INFINITY),
        f(|c| c.y, f64::min, f64::INFINITY),
        f(|c| c.y, f64::max, f64::NEG_INFINITY),
    )
}

/// Footprint areas and overlap ratio by cell-center rasterization.
pub fn raster_overlap_xy(a: &OrientedBoundingBox, b: &OrientedBoundingBox, res: f64) -> f64 {
    let count = |pred: &dyn Fn(f64, f64) -> bool, bounds: (f64, f64, f64, f64)| {
        let (x0, x1, y0, y1) = bounds;
        let nx = ((x1 - x0) / res).ceil() as usize;
        let ny = ((y1 - y0) / res).ceil() as usize;
        let mut n = 0usize;
        for i in 0..nx {
            let x = x0 + (i as f64 + 0.5) * res;
            for j in 0..ny {
                if pred(x, y0 + (j as f64 + 0.5) * res) {
                    n += 1;
                }
            }
        }
        n
    };
    let (ba, bb) = (footprint_bounds(a), footprint_bounds(b));
    let area_a = count(&|x, y| in_footprint(a, x, y), ba);
    let area_b = count(&|x, y| in_footprint(b, x, y), bb);
    let both = (ba.0.max(bb.0), ba.1.min(bb.1), ba.2.max(bb.2), ba.3.min(bb.3));
    if both.0 >= both.1 || both.2 >= both.3 {
        return 0.0;
    }
    let inter = count(&|x, y| in_footprint(a, x, y) && in_footprint(b, x, y), both);
    inter as f64 / area_a.min(area_b) as f64
}

/// Monte Carlo footprint overlap ratio, sampling each footprint's bounds.
pub fn mc_overlap_xy(a: &OrientedBoundingBox, b: &OrientedBoundingBox, n: usize, rng: &mut ChaCha8Rng) -> f64 {
    let area = |o: &OrientedBoundingBox, rng: &mut ChaCha8Rng| {
        let (x0, x1, y0, y1) = footprint_bounds(o);
        let mut hits = 0usize;
        for _ in 0..n {
            if in_footprint(o, rng.random_range(x0..x1), rng.random_range(y0..y1)) {
                hits += 1;
            }
        }
        (x1 - x0) * (y1 - y0) * hits as f64 / n as f64
    };
    let (ba, bb) = (footprint_bounds(a), footprint_bounds(b));
    let (x0, x1, y0, y1) = (ba.0.max(bb.0), ba.1.min(bb.1), ba.2.max(bb.2), ba.3.min(bb.3));
    if x0 >= x1 || y0 >= y1 {
        return 0.0;
    }
    let mut hits = 0usize;
    for _ in 0..n {
        let (x, y) = (rng.random_range(x0..x1), rng.random_range(y0..y1));
        if in_footprint(a, x, y) && in_footprint(b, x, y) {
            hits += 1;
        }
    }
    let inter = (x1 - x0) * (y1 - y0) * hits as f64 / n as f64;
    inter / area(a, rng).min(area(b, rng))
}

/// Gap from `a`'s lowest corner to `b`'s highest, with the interpenetration
/// and below-base cases of the vertical-gap contract.
pub fn corner_delta_z(a: &OrientedBoundingBox, b: &OrientedBoundingBox) -> f64 {
    let za: Vec<f64> = corners(a).iter().map(|c| c.z).collect();
    let zb: Vec<f64> = corners(b).iter().map(|c| c.z).collect();
    let base = za.iter().copied().fold(f64::INFINITY, f64::min);
    let top = zb.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let bottom = zb.iter().copied().fold(f64::INFINITY, f64::min);
    if base >= top {
        base - top
    } else if base >= bottom {
        0.0
    } else {
        top - base
    }
}

/// Points on a box surface: a `per_side × per_side` grid on each face.
pub fn surface_samples(b: &OrientedBoundingBox, per_side: usize) -> Vec<Vec3> {
    let mut out = Vec::with_capacity(6 * per_side * per_side);
    for axis in 0..3 {
        let (u, v) = ((axis + 1) % 3, (axis + 2) % 3);
        for sign in [-1.0, 1.0] {
            for i in 0..per_side {
                for j in 0..per_side {
                    let s = -1.0 + 2.0 * i as f64 / (per_side - 1) as f64;
                    let t = -1.0 + 2.0 * j as f64 / (per_side - 1) as f64;
                    out.push(
                        b.center
                            + b.axes[axis] * (sign * b.half_extents[axis])
                            + b.axes[u] * (s * b.half_extents[u])
                            + b.axes[v] * (t * b.half_extents[v]),
                    );
                }
            }
        }
    }
    out
}

/// Distance from a point to a solid box by clamping in its local frame.
pub fn clamp_distance(b: &OrientedBoundingBox, p: &Vec3) -> f64 {
    let l = local(b, p);
    let mut d2 = 0.0;
    for i in 0..3 {
        let e = (l[i].abs() - b.half_extents[i]).max(0.0);
        d2 += e * e;
    }
    d2.sqrt()
}

/// Box distance from dense surface samples of both boxes against the other
/// solid box; 0 when a sample of one lies in the other.
pub fn sampled_distance(a: &OrientedBoundingBox, b: &OrientedBoundingBox, per_side: usize) -> f64 {
    let ab = surface_samples(a, per_side).iter().map(|p| clamp_distance(b, p)).fold(f64::INFINITY, f64::min);
    let ba = surface_samples(b, per_side).iter().map(|p| clamp_distance(a, p)).fold(f64::INFINITY, f64::min);
    ab.min(ba)
}

pub fn cos(u: &Vec3, v: &Vec3) -> f64 {
    let n = u.norm() * v.norm();
    if n < 1e-12 {
        0.0
    } else {
        u.dot(v) / n
    }
}

/// The seven indicator terms in declaration order (SupportedBy, AttachedTo,
/// LeftOf, RightOf, Nearby, Faces, OrientedWith), each with the measured
/// quantity and how far it sits from its threshold relative to the
/// oracle's own error band.
pub struct OracleOutcome {
    pub holds: [bool; 7],
    /// An indicator is ambiguous when the oracle's measurement lies inside
    /// its error band around the threshold, so either outcome is consistent.
    pub ambiguous: [bool; 7],
}

pub struct OracleBudget {
    pub volume_samples: usize,
    pub area_samples: usize,
    pub surface_grid: usize,
}

pub fn oracle_predicates(
    a: &OrientedBoundingBox,
    b: &OrientedBoundingBox,
    cfg: &orgsynth::relations::ThresholdConfig,
    budget: &OracleBudget,
    rng: &mut ChaCha8Rng,
) -> OracleOutcome {
    let mut holds = [false; 7];
    let mut ambiguous = [false; 7];
    // relative band for Monte Carlo volumes and areas
    let rel = 0.02;
    let near = |v: f64, t: f64, band: f64| (v - t).abs() <= band;

    let overlap = mc_overlap_xy(a, b, budget.area_samples, rng);
    let overlap_amb = near(overlap, cfg.tau, rel * cfg.tau);
    let dz = corner_delta_z(a, b);
    let dz_amb = near(dz, cfg.epsilon, 1e-9);
    holds[0] = overlap > cfg.tau && dz <= cfg.epsilon;
    ambiguous[0] = (overlap_amb && dz <= cfg.epsilon) || (dz_amb && overlap > cfg.tau) || (overlap_amb && dz_amb);

    let inter = mc_intersection_volume(a, b, budget.volume_samples, rng);
    let ratio = inter / a.volume().min(b.volume());
    let align = cos(&a.axes[0], &b.axes[0]).abs();
    holds[1] = ratio > cfg.tau_att || align > cfg.tau_dir;
    ambiguous[1] = near(ratio, cfg.tau_att, rel * cfg.tau_att) && align <= cfg.tau_dir;

    let left = Vec3::z().cross(&b.front);
    let left = if left.norm() > 1e-9 { left.normalize() } else { Vec3::zeros() };
    let fl = if left == Vec3::zeros() { 0.5 } else { mc_side_fraction(a, b, &left, budget.volume_samples, rng) };
    let fr = if left == Vec3::zeros() { 0.5 } else { 1.0 - fl };
    holds[2] = fl > cfg.tau_left;
    ambiguous[2] = near(fl, cfg.tau_left, rel * cfg.tau_left);
    holds[3] = fr > cfg.tau_right;
    ambiguous[3] = near(fr, cfg.tau_right, rel * cfg.tau_right);

    let spacing = 2.0 * a.half_extents.max().max(b.half_extents.max()) / (budget.surface_grid - 1) as f64;
    let dist = sampled_distance(a, b, budget.surface_grid);
    holds[4] = dist <= cfg.t_near;
    ambiguous[4] = near(dist, cfg.t_near, spacing);

    let face = cos(&a.front, &(b.center - a.center));
    holds[5] = face > cfg.tau_face;
    ambiguous[5] = near(face, cfg.tau_face, 1e-9);

    let up = cos(&a.up_normal, &b.up_normal);
    holds[6] = overlap > cfg.tau && up > cfg.epsilon_pp;
    ambiguous[6] = overlap_amb && up > cfg.epsilon_pp;
    OracleOutcome { holds, ambiguous }
}

pub const ORACLE_ORDER: [orgsynth::relations::RelationType; 7] = {
    use orgsynth::relations::RelationType::*;
    [SupportedBy, AttachedTo, LeftOf, RightOf, Nearby, Faces, OrientedWith]
};

// --- statistics corpus --------------------------------------------------

pub const FLOOR: u32 = 1;
pub const WALL: u32 = 2;
pub const CHAIR: u32 = 3;
pub const TABLE: u32 = 4;
pub const LAMP: u32 = 5;

pub fn taxonomy() -> CategoryTaxonomy {
    CategoryTaxonomy::new(
        "fixture",
        &[
            (FLOOR, "floor", Role::Floor),
            (WALL, "wall", Role::Background),
            (CHAIR, "chair", Role::Foreground),
            (TABLE, "table", Role::Foreground),
            (LAMP, "lamp", Role::Foreground),
        ],
    )
}

pub fn instance(cat: u32, id: i32, obb: OrientedBoundingBox, scene: &str) -> LabeledInstance {
    LabeledInstance {
        instance_id: id,
        category_id: cat,
        cloud: PointCloud::new(corners(&obb)),
        obb,
        source_scene: scene.into(),
    }
}

pub fn floor_box() -> OrientedBoundingBox {
    OrientedBoundingBox::from_axes(Vec3::new(2.0, 2.0, -0.01), Vec3::new(2.0, 2.0, 0.01), [Vec3::x(), Vec3::y(), Vec3::z()])
}

pub fn wall_box() -> OrientedBoundingBox {
    OrientedBoundingBox::from_axes(Vec3::new(-0.05, 2.0, 1.5), Vec3::new(2.0, 1.5, 0.05), [Vec3::y(), Vec3::z(), Vec3::x()])
}

/// Tall chair: longest axis vertical, heading +x.
pub fn chair_box(x: f64, y: f64) -> OrientedBoundingBox {
    OrientedBoundingBox::from_axes(Vec3::new(x, y, 0.45), Vec3::new(0.45, 0.25, 0.2), [Vec3::z(), Vec3::x(), Vec3::y()])
}

pub fn table_box() -> OrientedBoundingBox {
    OrientedBoundingBox::from_axes(Vec3::new(2.0, 2.0, 0.375), Vec3::new(0.6, 0.4, 0.375), [Vec3::x(), Vec3::y(), Vec3::z()])
}

/// Lamp hung high above the wall-floor seam, turned 45° so its axes line
/// up with nothing else in the room.
pub fn lamp_box() -> OrientedBoundingBox {
    let d = Vec3::new(1.0, 1.0, 0.0).normalize();
    let e = Vec3::new(-1.0, 1.0, 0.0).normalize();
    OrientedBoundingBox::from_axes(Vec3::new(-0.05, 2.0, 10.0), Vec3::new(0.3, 0.2, 0.1), [d, e, Vec3::z()])
}

fn room(name: &str) -> SceneRepository {
    let mut s = SceneRepository::new(taxonomy());
    s.push(Role::Floor, instance(FLOOR, 0, floor_box(), name));
    s.push(Role::Background, instance(WALL, 1, wall_box(), name));
    s
}

/// Ten scenes: four with a lone chair, four with a chair facing a table,
/// two with a chair and an unrelated lamp.
pub fn stats_corpus() -> Vec<SceneRepository> {
    let mut scenes = Vec::new();
    for k in 0..10 {
        let name = format!("scene_{k:02}");
        let mut s = room(&name);
        match k % 5 {
            0 | 1 => s.push(Role::Foreground, instance(CHAIR, 2, chair_box(2.0, 2.0), &name)),
            2 | 3 => {
                s.push(Role::Foreground, instance(CHAIR, 2, chair_box(1.1, 2.0), &name));
                s.push(Role::Foreground, instance(TABLE, 3, table_box(), &name));
            }
            _ => {
                s.push(Role::Foreground, instance(CHAIR, 2, chair_box(2.0, 2.0), &name));
                s.push(Role::Foreground, instance(LAMP, 3, lamp_box(), &name));
            }
        }
        scenes.push(s);
    }
    scenes
}

/// Cyclic Jacobi eigen-decomposition of a symmetric 3×3 matrix. Returns
/// eigenvalues with their eigenvectors (columns), unsorted.
pub fn jacobi_eigen(mut a: [[f64; 3]; 3]) -> ([f64; 3], [[f64; 3]; 3]) {
    let mut v = [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]];
    for _ in 0..100 {
        let off = a[0][1].powi(2) + a[0][2].powi(2) + a[1][2].powi(2);
        if off < 1e-30 {
            break;
        }
        for (p, q) in [(0, 1), (0, 2), (1, 2)] {
            if a[p][q].abs() < 1e-300 {
                continue;
            }
            let theta = (a[q][q] - a[p][p]) / (2.0 * a[p][q]);
            let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
            let t = if theta == 0.0 { 1.0 } else { t };
            let c = 1.0 / (t * t + 1.0).sqrt();
            let s = t * c;
            for k in 0..3 {
                let (akp, akq) = (a[k][p], a[k][q]);
                a[k][p] = c * akp - s * akq;
                a[k][q] = s * akp + c * akq;
            }
            for k in 0..3 {
                let (apk, aqk) = (a[p][k], a[q][k]);
                a[p][k] = c * apk - s * aqk;
                a[q][k] = s * apk + c * aqk;
            }
            for row in v.iter_mut() {
                let (vp, vq) = (row[p], row[q]);
                row[p] = c * vp - s * vq;
                row[q] = s * vp + c * vq;
            }
        }
    }
    ([a[0][0], a[1][1], a[2][2]], v)
}

// ScanNet-scale statistics: 565 scenes, 7402 furniture instances split over
// the benchmark categories in rough proportion to their frequency.
pub const SCANNET_FLOOR: u32 = 2;
pub const SCANNET_WALL: u32 = 1;
pub const SCANNET_PICTURE: u32 = 11;
pub const SCANNET_SCENES: usize = 565;
pub const SCANNET_FURNITURE: u64 = 7402;

pub fn scannet_totals() -> Vec<(u32, u64)> {
    vec![
        (3, 848),  // cabinet
        (4, 141),  // bed
        (5, 2031), // chair
        (6, 170),  // sofa
        (7, 678),  // table
        (8, 791),  // door
        (9, 452),  // window
        (10, 113), // bookshelf
        (11, 396), // picture
        (12, 85),  // counter
        (14, 283), // desk
        (16, 170), // curtain
        (24, 57),  // refrigerator
        (28, 45),  // shower curtain
        (33, 85),  // toilet
        (34, 113), // sink
        (36, 40),  // bathtub
        (39, 904), // otherfurniture
    ]
}

pub fn scannet_stats() -> orgsynth::relations::RelationStats {
    use orgsynth::relations::{PairStats, RelationStats, RelationType};
    let totals = scannet_totals();
    let mut stats = RelationStats::from_totals(SCANNET_SCENES, totals.clone());
    for (c, n) in totals {
        let on_wall = matches!(c, 8 | 9 | 11 | 16 | 28);
        let (anchor, rel) = if on_wall {
            (SCANNET_WALL, RelationType::AttachedTo)
        } else {
            (SCANNET_FLOOR, RelationType::SupportedBy)
        };
        let mut p = PairStats { count: n, subjects: n, ..Default::default() };
        p.relations[rel.index()] = n * 9 / 10;
        p.relations[RelationType::None.index()] = n - n * 9 / 10;
        stats.pairs.insert((c, anchor), p);
        stats.relation_totals[rel.index()] += n * 9 / 10;
    }
    stats
}

// S3DIS-scale statistics: 204 rooms, 5740 instances, 3856 of them standing
// on the floor.
pub const S3DIS_FLOOR: u32 = 1;
pub const S3DIS_WALL: u32 = 2;
pub const S3DIS_ROOMS: usize = 204;
pub const S3DIS_SUPPORTED: u64 = 3856;

pub fn s3dis_stats() -> orgsynth::relations::RelationStats {
    use orgsynth::relations::{PairStats, RelationStats, RelationType};
    // beam, column, window, door, table, chair, sofa, bookcase, board, clutter
    let totals: Vec<(u32, u64)> = vec![
        (3, 160),
        (4, 260),
        (5, 170),
        (6, 540),
        (7, 460),
        (8, 1370),
        (9, 60),
        (10, 580),
        (11, 140),
        (12, 2000),
    ];
    let all: u64 = totals.iter().map(|t| t.1).sum();
    assert_eq!(all, 5740);
    let mut stats = RelationStats::from_totals(S3DIS_ROOMS, totals.clone());
    for (c, n) in totals {
        let mut p = PairStats { count: n, subjects: n, ..Default::default() };
        let sb = n * S3DIS_SUPPORTED / all;
        p.relations[RelationType::SupportedBy.index()] = sb;
        p.relations[RelationType::Nearby.index()] = n - sb;
        stats.pairs.insert((c, S3DIS_FLOOR), p);
        // nearby walls never carry support
        let mut w = PairStats { count: n, subjects: n, ..Default::default() };
        w.relations[RelationType::Nearby.index()] = n;
        stats.pairs.insert((c, S3DIS_WALL), w);
    }
    stats
}

/// Largest |eigenvalue| of a symmetric matrix by power iteration.
pub fn power_iteration(m: &nalgebra::DMatrix<f64>, iters: usize) -> f64 {
    let n = m.nrows();
    let mut v = nalgebra::DVector::from_fn(n, |i, _| 1.0 + (i as f64 * 0.37).sin() * 0.5);
    for _ in 0..iters {
        // iterate on m^2 so that +/- pairs of eigenvalues do not oscillate
        let w = m * (m * &v);
        let norm = w.norm();
        if norm == 0.0 {
            return 0.0;
        }
        v = w / norm;
    }
    let mv = m * &v;
    mv.norm() / v.norm()
}

/// Exhaustive minimum-cost matching that pairs as many same-category
/// nodes as possible. Returns the cost and the `(target, current)` pairs.
pub fn brute_force_matching(
    zt: &orgsynth::embed::GraphEmbedding,
    zc: &orgsynth::embed::GraphEmbedding,
    gt: &orgsynth::org::ObjectRelationshipGraph,
    gc: &orgsynth::org::ObjectRelationshipGraph,
) -> (f64, Vec<(usize, usize)>) {
    use orgsynth::embed::substitution_cost;
    struct Search<'a> {
        zt: &'a orgsynth::embed::GraphEmbedding,
        zc: &'a orgsynth::embed::GraphEmbedding,
        gt: &'a orgsynth::org::ObjectRelationshipGraph,
        gc: &'a orgsynth::org::ObjectRelationshipGraph,
    }
    impl Search<'_> {
        fn go(&self, t: usize, used: &mut Vec<bool>) -> (usize, f64, Vec<(usize, usize)>) {
            if t == self.gt.len() {
                return (0, 0.0, Vec::new());
            }
            let mut best = self.go(t + 1, used);
            for c in 0..self.gc.len() {
                if used[c] || self.gc.nodes[c].category != self.gt.nodes[t].category {
                    continue;
                }
                used[c] = true;
                let (n, cost, mut pairs) = self.go(t + 1, used);
                used[c] = false;
                let cost = cost + substitution_cost(&self.zt.node_vectors[t], &self.zc.node_vectors[c]);
                if n + 1 > best.0 || (n + 1 == best.0 && cost < best.1) {
                    pairs.push((t, c));
                    best = (n + 1, cost, pairs);
                }
            }
            best
        }
    }
    let s = Search { zt, zc, gt, gc };
    let (_, cost, mut pairs) = s.go(0, &mut vec![false; gc.len()]);
    pairs.sort_unstable();
    (cost, pairs)
}

/// A scanned-looking labeled scene: surface samples of every instance box
/// with outward normals, labeled with the instance's category and id.
pub fn scene_cloud(scene: &SceneRepository, per_side: usize) -> orgsynth::io::LabeledCloud {
    let mut out = orgsynth::io::LabeledCloud::default();
    for (_, inst) in scene.iter() {
        let b = &inst.obb;
        let points = surface_samples(b, per_side);
        let normals = points
            .iter()
            .map(|p| {
                let l = local(b, p);
                let i = (0..3)
                    .max_by(|&i, &j| (l[i].abs() / b.half_extents[i]).total_cmp(&(l[j].abs() / b.half_extents[j])))
                    .unwrap();
                b.axes[i] * l[i].signum()
            })
            .collect();
        out.push_instance(&PointCloud::with_normals(points, normals), inst.category_id as i32, inst.instance_id);
    }
    out
}
