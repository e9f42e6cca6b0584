//! Layout losses: geometric, per-relation semantic, graph topology and
//! their weighted total.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::embed::{encode_graph, match_nodes, EmbedError, EncoderParams, NodeMatching};
use crate::geometry::{
    half_space_fraction, inside_depth, intersection_volume, min_distance, overlap_xy, delta_z, OrientedBoundingBox,
    Point2, Side, Vec3,
};
use crate::layout::{graph_of_layout, LayoutState};
use crate::org::ObjectRelationshipGraph;
use crate::relations::{attach_ratio, axis_alignment, cosine, facing_cosine, RelationType, ThresholdConfig};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LossError {
    #[error("relation `{0}` has no loss")]
    UnsupportedRelation(RelationType),
    #[error("target node {0} is not bound to a layout object")]
    UnboundNode(usize),
    #[error("loss is not finite ({0})")]
    NonFiniteLoss(f64),
    #[error(transparent)]
    Embed(#[from] EmbedError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SemanticWeights {
    /// Per-relation multipliers; missing relations weigh 1.
    pub alpha: BTreeMap<RelationType, f64>,
    pub lambda1: f64,
    pub lambda2: f64,
    pub mu_attach: f64,
    pub alpha_left: f64,
    pub alpha_right: f64,
    pub nu: f64,
    pub gamma: f64,
    pub rho1: f64,
    pub rho2: f64,
}

impl Default for SemanticWeights {
    fn default() -> Self {
        Self {
            alpha: BTreeMap::new(),
            lambda1: 1.0,
            lambda2: 1.0,
            mu_attach: 1.0,
            alpha_left: 1.0,
            alpha_right: 1.0,
            nu: 1.0,
            gamma: 1.0,
            rho1: 1.0,
            rho2: 1.0,
        }
    }
}

impl SemanticWeights {
    pub fn alpha(&self, r: RelationType) -> f64 {
        self.alpha.get(&r).copied().unwrap_or(1.0)
    }

    fn scalars(&self) -> [(&'static str, f64); 9] {
        [
            ("lambda1", self.lambda1),
            ("lambda2", self.lambda2),
            ("mu_attach", self.mu_attach),
            ("alpha_left", self.alpha_left),
            ("alpha_right", self.alpha_right),
            ("nu", self.nu),
            ("gamma", self.gamma),
            ("rho1", self.rho1),
            ("rho2", self.rho2),
        ]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TopologyWeights {
    pub lambda_ins: f64,
    pub lambda_del: f64,
    pub lambda_sub: f64,
    pub lambda_struct: f64,
}

impl Default for TopologyWeights {
    fn default() -> Self {
        Self {
            lambda_ins: 1.0,
            lambda_del: 1.0,
            lambda_sub: 0.5,
            lambda_struct: 0.1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TotalWeights {
    pub lambda_geo: f64,
    pub lambda_sem: f64,
    pub lambda_topo: f64,
}

impl Default for TotalWeights {
    fn default() -> Self {
        Self {
            lambda_geo: 1.0,
            lambda_sem: 1.0,
            lambda_topo: 0.1,
        }
    }
}

/// Every weight the total loss needs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LossWeights {
    pub total: TotalWeights,
    pub semantic: SemanticWeights,
    pub topology: TopologyWeights,
    /// Count overlaps with walls and other static structure as collisions.
    pub background_collision: bool,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self {
            total: TotalWeights::default(),
            semantic: SemanticWeights::default(),
            topology: TopologyWeights::default(),
            background_collision: true,
        }
    }
}

impl LossWeights {
    pub fn validate(&self) -> Result<(), String> {
        let t = &self.total;
        let p = &self.topology;
        let mut all: Vec<(String, f64)> = vec![
            ("lambda_geo".into(), t.lambda_geo),
            ("lambda_sem".into(), t.lambda_sem),
            ("lambda_topo".into(), t.lambda_topo),
            ("lambda_ins".into(), p.lambda_ins),
            ("lambda_del".into(), p.lambda_del),
            ("lambda_sub".into(), p.lambda_sub),
            ("lambda_struct".into(), p.lambda_struct),
        ];
        all.extend(self.semantic.scalars().iter().map(|(n, v)| (n.to_string(), *v)));
        all.extend(self.semantic.alpha.iter().map(|(r, v)| (format!("alpha.{r}"), *v)));
        if let Some((n, v)) = all.iter().find(|(_, v)| !(*v >= 0.0 && v.is_finite())) {
            return Err(format!("weight {n} must be non-negative, got {v}"));
        }
        if t.lambda_geo + t.lambda_sem + t.lambda_topo <= 0.0 {
            return Err("lambda_geo, lambda_sem and lambda_topo are all zero".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub collision: f64,
    pub alignment: f64,
    pub semantic: f64,
    pub topology: f64,
    pub total: f64,
}

impl LossBreakdown {
    pub fn combine(collision: f64, alignment: f64, semantic: f64, topology: f64, w: &TotalWeights) -> Self {
        Self {
            collision,
            alignment,
            semantic,
            topology,
            total: w.lambda_geo * (collision + alignment) + w.lambda_sem * semantic + w.lambda_topo * topology,
        }
    }

    pub fn is_finite(&self) -> bool {
        [self.collision, self.alignment, self.semantic, self.topology, self.total]
            .iter()
            .all(|v| v.is_finite())
    }
}

/// Summed pairwise overlap volume of the dynamic objects, plus their
/// overlap with static background structure when `background` is set.
pub fn collision_loss(layout: &LayoutState, background: bool) -> f64 {
    let boxes = layout.obbs();
    let mut sum = 0.0;
    for i in 0..boxes.len() {
        for j in i + 1..boxes.len() {
            sum += intersection_volume(&boxes[i], &boxes[j]);
        }
        if background {
            for s in &layout.background {
                sum += intersection_volume(&boxes[i], &s.obb);
            }
        }
    }
    sum
}

/// For each dynamic object, the dynamic object a target support edge puts
/// it on.
pub(crate) fn supports(layout: &LayoutState, target: &ObjectRelationshipGraph) -> Vec<Option<usize>> {
    let node_of: BTreeMap<usize, usize> = layout.binding.iter().map(|(&n, &k)| (k, n)).collect();
    (0..layout.dynamics.len())
        .map(|k| {
            let n = *node_of.get(&k)?;
            target
                .edges
                .iter()
                .filter(|e| e.src == n && e.relation == RelationType::SupportedBy)
                .find_map(|e| layout.binding.get(&e.dst).copied())
        })
        .collect()
}

pub(crate) fn alignment_term(b: &OrientedBoundingBox, support_normal: &Vec3) -> f64 {
    1.0 - b.up_normal.dot(support_normal).abs().min(1.0)
}

/// `sum_i 1 - |n_i . n_s|` where `n_s` is the up normal of the object a
/// target support edge puts it on, or the floor normal otherwise.
pub fn alignment_loss(layout: &LayoutState, target: &ObjectRelationshipGraph) -> f64 {
    let boxes = layout.obbs();
    supports(layout, target)
        .iter()
        .zip(&boxes)
        .map(|(s, b)| {
            let ns = s.map_or(layout.floor_normal, |j| boxes[j].up_normal);
            alignment_term(b, &ns)
        })
        .sum()
}

fn hinge(x: f64) -> f64 {
    x.max(0.0)
}

fn horizontal_center_distance(a: &OrientedBoundingBox, b: &OrientedBoundingBox) -> f64 {
    (a.center.xy() - b.center.xy()).norm()
}

fn support_gap_term(a: &OrientedBoundingBox, b: &OrientedBoundingBox, w: &SemanticWeights, cfg: &ThresholdConfig) -> f64 {
    w.lambda2 * (delta_z(a, b) - cfg.epsilon).abs()
}

/// The pairwise loss of relation `r` for the ordered pair `(a, b)`.
pub fn relation_loss(
    r: RelationType,
    a: &OrientedBoundingBox,
    b: &OrientedBoundingBox,
    w: &SemanticWeights,
    cfg: &ThresholdConfig,
) -> Result<f64, LossError> {
    let v = match r {
        RelationType::SupportedBy => {
            let area = a.footprint_area().min(b.footprint_area()).max(1e-12);
            w.lambda1 * hinge(horizontal_center_distance(a, b) / area.sqrt() - cfg.tau) + support_gap_term(a, b, w, cfg)
        }
        RelationType::AttachedTo => {
            let s = attach_ratio(a, b).max(axis_alignment(a, b));
            w.mu_attach * (1.0 - s).powi(2)
        }
        RelationType::LeftOf => w.alpha_left * (1.0 - half_space_fraction(a, b, Side::Left)).powi(2),
        RelationType::RightOf => w.alpha_right * (1.0 - half_space_fraction(a, b, Side::Right)).powi(2),
        RelationType::Nearby => w.nu * hinge(min_distance(a, b) - cfg.t_near),
        RelationType::Faces => w.gamma * (1.0 - facing_cosine(a, b)).powi(2),
        RelationType::OrientedWith => {
            w.rho1 * hinge(cfg.tau - overlap_xy(a, b)) + w.rho2 * hinge(cfg.epsilon_pp - cosine(&a.up_normal, &b.up_normal))
        }
        RelationType::None => return Err(LossError::UnsupportedRelation(r)),
    };
    Ok(v)
}

/// Support on the floor: the horizontal term measures how far `a`'s center
/// sits outside the floor footprint instead of its distance to the floor's
/// center.
pub fn floor_support_loss(
    a: &OrientedBoundingBox,
    floor: &OrientedBoundingBox,
    w: &SemanticWeights,
    cfg: &ThresholdConfig,
) -> f64 {
    let poly = floor.footprint();
    let outside = hinge(-inside_depth(&poly, &Point2::new(a.center.x, a.center.y)));
    let area = a.footprint_area().min(floor.footprint_area()).max(1e-12);
    w.lambda1 * hinge(outside / area.sqrt() - cfg.tau) + support_gap_term(a, floor, w, cfg)
}

fn nearest<'a>(a: &OrientedBoundingBox, boxes: &'a [OrientedBoundingBox]) -> Option<&'a OrientedBoundingBox> {
    boxes
        .iter()
        .map(|b| (min_distance(a, b), b))
        .min_by(|x, y| x.0.total_cmp(&y.0))
        .map(|(_, b)| b)
}

/// Loss of one target edge under the current layout. Edges to an anchor
/// the layout has no structure for cost nothing.
pub fn edge_loss(
    layout: &LayoutState,
    target: &ObjectRelationshipGraph,
    edge: usize,
    w: &SemanticWeights,
    cfg: &ThresholdConfig,
) -> Result<f64, LossError> {
    let e = &target.edges[edge];
    let obj = |n: usize| -> Result<OrientedBoundingBox, LossError> {
        let k = layout.binding.get(&n).ok_or(LossError::UnboundNode(n))?;
        Ok(layout.dynamics[*k].obb())
    };
    let dst_node = &target.nodes[e.dst];
    let src_node = &target.nodes[e.src];
    let v = match (src_node.anchor, dst_node.anchor) {
        (false, false) => relation_loss(e.relation, &obj(e.src)?, &obj(e.dst)?, w, cfg)?,
        (false, true) => {
            let a = obj(e.src)?;
            let boxes = layout.anchor_boxes(dst_node.category);
            let Some(b) = nearest(&a, &boxes) else {
                return Ok(0.0);
            };
            if e.relation == RelationType::SupportedBy && layout.anchors.floor == Some(dst_node.category) {
                floor_support_loss(&a, b, w, cfg)
            } else {
                relation_loss(e.relation, &a, b, w, cfg)?
            }
        }
        (true, false) => {
            let b = obj(e.dst)?;
            let boxes = layout.anchor_boxes(src_node.category);
            let Some(a) = nearest(&b, &boxes) else {
                return Ok(0.0);
            };
            relation_loss(e.relation, a, &b, w, cfg)?
        }
        // structure never moves
        (true, true) => 0.0,
    };
    Ok(w.alpha(e.relation) * v)
}

/// `sum over target edges of alpha_r * L_r(A, B)`.
pub fn semantic_loss(
    layout: &LayoutState,
    target: &ObjectRelationshipGraph,
    w: &SemanticWeights,
    cfg: &ThresholdConfig,
) -> Result<f64, LossError> {
    (0..target.edges.len()).map(|i| edge_loss(layout, target, i, w, cfg)).sum()
}

/// Frobenius distance between adjacency matrices after aligning the
/// current graph to the target by `m`. Unmatched nodes are compared
/// against empty rows and columns.
pub fn aligned_adjacency_distance(
    target: &ObjectRelationshipGraph,
    current: &ObjectRelationshipGraph,
    m: &NodeMatching,
) -> f64 {
    let at = target.adjacency();
    let ac = current.adjacency();
    let mut to_current = vec![None; target.len()];
    for &(t, c) in &m.pairs {
        to_current[t] = Some(c);
    }
    let mut sq = 0.0;
    for i in 0..target.len() {
        for j in 0..target.len() {
            let c = match (to_current[i], to_current[j]) {
                (Some(x), Some(y)) => ac[(x, y)],
                _ => 0.0,
            };
            sq += (at[(i, j)] - c).powi(2);
        }
    }
    let spare: Vec<bool> = {
        let mut s = vec![true; current.len()];
        for &(_, c) in &m.pairs {
            s[c] = false;
        }
        s
    };
    for x in 0..current.len() {
        for y in 0..current.len() {
            if spare[x] || spare[y] {
                sq += ac[(x, y)].powi(2);
            }
        }
    }
    sq.sqrt()
}

/// Graph-level loss between a target and the current graph.
pub fn topology_loss(
    target: &ObjectRelationshipGraph,
    current: &ObjectRelationshipGraph,
    params: &EncoderParams,
    w: &TopologyWeights,
) -> Result<f64, LossError> {
    let zt = encode_graph(target, params)?;
    let zc = encode_graph(current, params)?;
    let m = match_nodes(&zt, &zc, target, current);
    Ok(w.lambda_ins * m.insertions() as f64
        + w.lambda_del * m.deletions() as f64
        + w.lambda_sub * m.total_substitution_cost
        + w.lambda_struct * aligned_adjacency_distance(target, current, &m))
}

/// Every component and the weighted total.
pub fn total_loss(
    layout: &LayoutState,
    target: &ObjectRelationshipGraph,
    w: &LossWeights,
    cfg: &ThresholdConfig,
    params: &EncoderParams,
) -> Result<LossBreakdown, LossError> {
    let collision = collision_loss(layout, w.background_collision);
    let alignment = alignment_loss(layout, target);
    let semantic = semantic_loss(layout, target, &w.semantic, cfg)?;
    let topology = if w.total.lambda_topo > 0.0 {
        topology_loss(target, &graph_of_layout(layout, cfg), params, &w.topology)?
    } else {
        0.0
    };
    let b = LossBreakdown::combine(collision, alignment, semantic, topology, &w.total);
    if !b.total.is_finite() {
        return Err(LossError::NonFiniteLoss(b.total));
    }
    Ok(b)
}

/// Central-difference gradient of `f` with respect to the pose
/// `(x, y, z, theta, phi)` of dynamic object `k`.
pub fn pose_gradient<F>(f: F, layout: &LayoutState, k: usize, steps: [f64; 5]) -> Result<[f64; 5], LossError>
where
    F: Fn(&LayoutState) -> Result<f64, LossError>,
{
    let mut probe = layout.clone();
    let base = layout.dynamics[k].pose.to_array();
    let mut g = [0.0; 5];
    for d in 0..5 {
        let h = steps[d];
        let mut eval = |delta: f64| -> Result<f64, LossError> {
            let mut v = base;
            v[d] += delta;
            probe.dynamics[k].pose = crate::geometry::Pose::from_array(v);
            let y = f(&probe)?;
            if y.is_finite() {
                Ok(y)
            } else {
                Err(LossError::NonFiniteLoss(y))
            }
        };
        let plus = eval(h)?;
        let minus = eval(-h)?;
        g[d] = (plus - minus) / (2.0 * h);
    }
    Ok(g)
}
