//! Layout initialization, pose refinement and end-to-end scene synthesis.
//!
//! Refinement is coordinate descent over objects. Each object in turn takes
//! a normalized finite-difference gradient step on its share of the
//! geometric and semantic terms, falling back to single-coordinate steps
//! when that fails. A move is kept only if the total loss, topology
//! included, goes down. Kept steps grow back toward `step_size`, refused
//! ones shrink by `step_decay`, and the run stops once every object's step
//! is below `min_step`.
//!
//! Hinge and fraction terms are flat far from satisfaction, where the
//! gradient vanishes. An object stuck on such a plateau tries one-sided
//! probes at growing radii and pulls toward its relation partners instead.

use std::collections::{BTreeSet, HashMap};

use log::{debug, warn};
use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::decompose::{LabeledInstance, SceneRepository};
use crate::embed::{EmbedError, EncoderParams};
use crate::geometry::{
    apply_pose, inside_depth, intersection_volume, ransac_plane, OrientedBoundingBox, Point2, PointCloud, Pose, UP,
};
use crate::io::LabeledCloud;
use crate::losses::{
    alignment_loss, alignment_term, collision_loss, edge_loss, pose_gradient, semantic_loss, supports, topology_loss,
    LossBreakdown, LossError, LossWeights,
};
use crate::org::{build_target_graph, Anchors, GraphSamplingConfig, ObjectRelationshipGraph};
use crate::relations::{classify_against_nearest, classify_pair, RelationStats, RelationType, ThresholdConfig};

pub use crate::layout::{graph_of_layout, LayoutState, PlacedInstance};

#[derive(Debug, Error)]
pub enum OptimizeError {
    #[error("repository has no foreground instances")]
    EmptyRepository,
    #[error("repository has no floor")]
    NoFloor,
    #[error("no repository instance of category {0}")]
    MissingCategory(u32),
    #[error("invalid optimizer config: {0}")]
    InvalidConfig(String),
    #[error("loss became {value} while moving object {object} at iteration {iteration} to {pose:?}")]
    NonFiniteLoss {
        iteration: usize,
        object: usize,
        pose: Pose,
        value: f64,
    },
    #[error(transparent)]
    Loss(#[from] LossError),
    #[error(transparent)]
    Embed(#[from] EmbedError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OptimizerConfig {
    pub max_iters: usize,
    /// Converged once the total loss is at or below this.
    pub loss_threshold: f64,
    /// Initial and largest step, meters or radians.
    pub step_size: f64,
    pub step_decay: f64,
    /// An object whose step falls below this stops moving.
    pub min_step: f64,
    /// Finite-difference deltas for `(x, y, z, theta, phi)`.
    pub fd_steps: [f64; 5],
    pub phi_clamp: f64,
    pub rng_seed: u64,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        Self {
            max_iters: 500,
            loss_threshold: 1e-3,
            step_size: 0.1,
            step_decay: 0.7,
            min_step: 1e-4,
            fd_steps: [1e-2, 1e-2, 1e-2, 5e-3, 5e-3],
            phi_clamp: 0.2,
            rng_seed: 0,
        }
    }
}

impl OptimizerConfig {
    pub fn validate(&self) -> Result<(), String> {
        if self.max_iters == 0 {
            return Err("max_iters must be >= 1".into());
        }
        if !(self.step_size > 0.0) {
            return Err(format!("step_size must be positive, got {}", self.step_size));
        }
        if !(self.step_decay > 0.0 && self.step_decay < 1.0) {
            return Err(format!("step_decay must be in (0, 1), got {}", self.step_decay));
        }
        if !(self.min_step >= 0.0 && self.min_step < self.step_size) {
            return Err(format!("min_step must be in [0, step_size), got {}", self.min_step));
        }
        if self.fd_steps.iter().any(|h| !(*h > 0.0)) {
            return Err("fd_steps must all be positive".into());
        }
        if !(self.phi_clamp >= 0.0) || !self.loss_threshold.is_finite() {
            return Err("phi_clamp must be >= 0 and loss_threshold finite".into());
        }
        Ok(())
    }
}

/// What to do when the repository has no instance of a target category.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SubstitutionPolicy {
    /// Use a random instance of another foreground category.
    #[default]
    Substitute,
    Strict,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OptResult {
    pub final_layout: LayoutState,
    /// The starting loss, then one entry per iteration that moved something.
    pub loss_trace: Vec<LossBreakdown>,
    pub converged: bool,
    pub iterations_used: usize,
}

impl OptResult {
    pub fn final_loss(&self) -> &LossBreakdown {
        self.loss_trace.last().expect("trace starts with the initial loss")
    }
}

/// Places one repository instance per non-anchor target node on a floor
/// picked from a random source scene.
pub fn initialize_layout(
    target: &ObjectRelationshipGraph,
    repo: &SceneRepository,
    rng_seed: u64,
    policy: SubstitutionPolicy,
) -> Result<LayoutState, OptimizeError> {
    if repo.foregrounds.is_empty() && target.nodes.iter().any(|n| !n.anchor) {
        return Err(OptimizeError::EmptyRepository);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    let anchors = Anchors::from_taxonomy(&repo.taxonomy);
    let scene = pick_scene(repo, &anchors, &mut rng)?;
    let floors: Vec<LabeledInstance> = repo.floors.iter().filter(|i| i.source_scene == scene).cloned().collect();
    let background: Vec<LabeledInstance> =
        repo.backgrounds.iter().filter(|i| i.source_scene == scene).cloned().collect();

    let mut by_category: HashMap<u32, Vec<&LabeledInstance>> = HashMap::new();
    for inst in &repo.foregrounds {
        by_category.entry(inst.category_id).or_default().push(inst);
    }
    let mut available: Vec<u32> = by_category.keys().copied().collect();
    available.sort_unstable();

    let areas: Vec<f64> = floors.iter().map(|f| f.obb.footprint_area().max(1e-9)).collect();
    let floor_pick = WeightedIndex::new(&areas).map_err(|_| OptimizeError::NoFloor)?;

    let mut layout = LayoutState::new(floors, background, anchors);
    layout.floor_normal = floor_normal(&layout.floors, rng_seed);
    for node in target.nodes.iter().filter(|n| !n.anchor) {
        let pool = match by_category.get(&node.category) {
            Some(p) => p,
            None => {
                if policy == SubstitutionPolicy::Strict {
                    return Err(OptimizeError::MissingCategory(node.category));
                }
                let c = available[rng.random_range(0..available.len())];
                warn!("no instance of category {} in the repository, using category {c}", node.category);
                &by_category[&c]
            }
        };
        let inst = pool[rng.random_range(0..pool.len())].clone();
        let floor = &layout.floors[floor_pick.sample(&mut rng)].obb;
        let (x, y) = sample_on_floor(floor, inst.obb.footprint_radius(), &mut rng);
        let z = floor.max_z() + (inst.obb.center.z - inst.obb.min_z());
        let theta = rng.random_range(-std::f64::consts::PI..std::f64::consts::PI);
        layout.place(inst, Pose::new(x, y, z, theta, 0.0), Some(node.id));
    }
    Ok(layout)
}

/// A scene with a floor, preferring ones that also have every anchor.
fn pick_scene(repo: &SceneRepository, anchors: &Anchors, rng: &mut ChaCha8Rng) -> Result<String, OptimizeError> {
    let with_floor: BTreeSet<&str> = repo.floors.iter().map(|f| f.source_scene.as_str()).collect();
    if with_floor.is_empty() {
        return Err(OptimizeError::NoFloor);
    }
    let complete: Vec<&str> = with_floor
        .iter()
        .copied()
        .filter(|s| {
            anchors.wall.is_none_or(|w| {
                repo.backgrounds.iter().any(|b| b.source_scene == *s && b.category_id == w)
            })
        })
        .collect();
    let pool: Vec<&str> = if complete.is_empty() { with_floor.into_iter().collect() } else { complete };
    Ok(pool[rng.random_range(0..pool.len())].to_string())
}

/// Up normal of the dominant floor plane, or +z when the floor points do
/// not give a near-horizontal plane.
fn floor_normal(floors: &[LabeledInstance], seed: u64) -> crate::geometry::Vec3 {
    let mut cloud = PointCloud::default();
    for f in floors {
        cloud.extend(&f.cloud);
    }
    match ransac_plane(&cloud, 200, 0.01, seed) {
        Ok(m) if m.normal.z.abs() >= 30f64.to_radians().cos() => m.normal * m.normal.z.signum(),
        _ => UP,
    }
}

/// A point of the floor footprint at least `margin` from its edge, or the
/// deepest of the tries when the floor is too small for that.
fn sample_on_floor(floor: &OrientedBoundingBox, margin: f64, rng: &mut ChaCha8Rng) -> (f64, f64) {
    let poly = floor.footprint();
    let (mut x0, mut x1, mut y0, mut y1) = (f64::MAX, f64::MIN, f64::MAX, f64::MIN);
    for p in &poly {
        x0 = x0.min(p.x);
        x1 = x1.max(p.x);
        y0 = y0.min(p.y);
        y1 = y1.max(p.y);
    }
    let mut best = (floor.center.x, floor.center.y, f64::NEG_INFINITY);
    for _ in 0..256 {
        let p = Point2::new(rng.random_range(x0..=x1), rng.random_range(y0..=y1));
        let d = inside_depth(&poly, &p);
        if d >= margin {
            return (p.x, p.y);
        }
        if d > best.2 {
            best = (p.x, p.y, d);
        }
    }
    (best.0, best.1)
}

/// Edge list of a realized graph, used as the topology cache key.
type EdgeKey = Vec<(usize, usize, u8)>;

/// Realized relations of the dynamic objects, kept up to date one object
/// at a time.
#[derive(Clone)]
struct Relations {
    pair: Vec<Vec<RelationType>>,
    anchor: Vec<Vec<Option<RelationType>>>,
}

impl Relations {
    fn new(boxes: &[OrientedBoundingBox], anchors: &[(u32, Vec<OrientedBoundingBox>)], cfg: &ThresholdConfig) -> Self {
        let n = boxes.len();
        let mut r = Self {
            pair: vec![vec![RelationType::None; n]; n],
            anchor: vec![vec![None; anchors.len()]; n],
        };
        for k in 0..n {
            r.update(k, boxes, anchors, cfg);
        }
        r
    }

    fn update(&mut self, k: usize, boxes: &[OrientedBoundingBox], anchors: &[(u32, Vec<OrientedBoundingBox>)], cfg: &ThresholdConfig) {
        for j in 0..boxes.len() {
            if j != k {
                self.pair[k][j] = classify_pair(&boxes[k], &boxes[j], cfg);
                self.pair[j][k] = classify_pair(&boxes[j], &boxes[k], cfg);
            }
        }
        for (a, (_, structure)) in anchors.iter().enumerate() {
            self.anchor[k][a] = classify_against_nearest(&boxes[k], structure, cfg);
        }
    }

    /// Edges in the order `graph_of_layout` emits them.
    fn key(&self) -> EdgeKey {
        let first = self.anchor.first().map_or(0, Vec::len);
        let mut e = Vec::new();
        for (i, row) in self.pair.iter().enumerate() {
            for (j, r) in row.iter().enumerate() {
                if i != j && *r != RelationType::None {
                    e.push((first + i, first + j, r.index() as u8));
                }
            }
            for (a, r) in self.anchor[i].iter().enumerate() {
                if let Some(r) = r.filter(|r| *r != RelationType::None) {
                    e.push((first + i, a, r.index() as u8));
                }
            }
        }
        e
    }
}

/// Splits the total loss into per-object parts and caches topology by
/// realized edge set.
struct Scorer<'a> {
    target: &'a ObjectRelationshipGraph,
    weights: &'a LossWeights,
    thresholds: &'a ThresholdConfig,
    params: &'a EncoderParams,
    supports: Vec<Option<usize>>,
    /// Objects resting on each object.
    carried: Vec<Vec<usize>>,
    /// Target edges with an endpoint bound to each object.
    edges_of: Vec<Vec<usize>>,
    anchors: Vec<(u32, Vec<OrientedBoundingBox>)>,
    topo_cache: HashMap<EdgeKey, f64>,
}

impl<'a> Scorer<'a> {
    fn new(
        layout: &LayoutState,
        target: &'a ObjectRelationshipGraph,
        weights: &'a LossWeights,
        thresholds: &'a ThresholdConfig,
        params: &'a EncoderParams,
    ) -> Self {
        let n = layout.dynamics.len();
        let supports = supports(layout, target);
        let mut carried = vec![Vec::new(); n];
        for (k, s) in supports.iter().enumerate() {
            if let Some(j) = s {
                carried[*j].push(k);
            }
        }
        let mut edges_of = vec![Vec::new(); n];
        for (i, e) in target.edges.iter().enumerate() {
            let ends: BTreeSet<usize> = [e.src, e.dst].iter().filter_map(|v| layout.binding.get(v).copied()).collect();
            for k in ends {
                edges_of[k].push(i);
            }
        }
        let anchors = layout.anchors.categories().into_iter().map(|c| (c, layout.anchor_boxes(c))).collect();
        Self {
            target,
            weights,
            thresholds,
            params,
            supports,
            carried,
            edges_of,
            anchors,
            topo_cache: HashMap::new(),
        }
    }

    fn uses_topology(&self) -> bool {
        self.weights.total.lambda_topo != 0.0
    }

    /// Weighted geometric and semantic terms that depend on object `k`.
    fn local(&self, layout: &LayoutState, k: usize) -> Result<f64, LossError> {
        let tw = &self.weights.total;
        let mut v = 0.0;
        if tw.lambda_geo != 0.0 {
            let boxes = layout.obbs();
            let mut geo = 0.0;
            for (j, b) in boxes.iter().enumerate() {
                if j != k {
                    geo += intersection_volume(&boxes[k], b);
                }
            }
            if self.weights.background_collision {
                for s in &layout.background {
                    geo += intersection_volume(&boxes[k], &s.obb);
                }
            }
            let normal = |i: usize| self.supports[i].map_or(layout.floor_normal, |j| boxes[j].up_normal);
            geo += alignment_term(&boxes[k], &normal(k));
            for &i in &self.carried[k] {
                geo += alignment_term(&boxes[i], &normal(i));
            }
            v += tw.lambda_geo * geo;
        }
        if tw.lambda_sem != 0.0 {
            let mut sem = 0.0;
            for &e in &self.edges_of[k] {
                sem += edge_loss(layout, self.target, e, &self.weights.semantic, self.thresholds)?;
            }
            v += tw.lambda_sem * sem;
        }
        Ok(v)
    }

    fn topology(&mut self, layout: &LayoutState, rel: &Relations) -> Result<f64, LossError> {
        let key = rel.key();
        if let Some(v) = self.topo_cache.get(&key) {
            return Ok(*v);
        }
        let g = graph_of_layout(layout, self.thresholds);
        let v = topology_loss(self.target, &g, self.params, &self.weights.topology)?;
        self.topo_cache.insert(key, v);
        Ok(v)
    }

    fn breakdown(&mut self, layout: &LayoutState, rel: Option<&Relations>) -> Result<LossBreakdown, LossError> {
        let tw = &self.weights.total;
        let (c, a) = if tw.lambda_geo != 0.0 {
            (collision_loss(layout, self.weights.background_collision), alignment_loss(layout, self.target))
        } else {
            (0.0, 0.0)
        };
        let s = if tw.lambda_sem != 0.0 {
            semantic_loss(layout, self.target, &self.weights.semantic, self.thresholds)?
        } else {
            0.0
        };
        let t = match rel {
            Some(r) => self.topology(layout, r)?,
            None => 0.0,
        };
        let b = LossBreakdown::combine(c, a, s, t, &self.weights.total);
        if !b.is_finite() {
            return Err(LossError::NonFiniteLoss(b.total));
        }
        Ok(b)
    }

    /// Moves for an object whose loss is positive but locally flat:
    /// one-sided compass probes at growing radii, and horizontal pulls
    /// toward the objects it shares target edges with. Only moves that
    /// lower `local` are returned, best first.
    fn plateau_moves(&self, layout: &mut LayoutState, k: usize, base: f64, cfg: &OptimizerConfig) -> Result<Vec<Pose>, LossError> {
        let old = layout.dynamics[k].pose;
        let mut tries = Vec::new();
        for m in 1..=5 {
            for d in 0..5 {
                for sign in [-1.0, 1.0] {
                    let mut v = old.to_array();
                    v[d] += sign * cfg.fd_steps[d] * 4f64.powi(m);
                    tries.push(v);
                }
            }
        }
        for &e in &self.edges_of[k] {
            let edge = &self.target.edges[e];
            let other = if layout.binding.get(&edge.src) == Some(&k) { edge.dst } else { edge.src };
            let Some(&j) = layout.binding.get(&other) else {
                continue;
            };
            let to = layout.dynamics[j].obb().center;
            for f in [0.25, 0.5, 0.75, 1.0] {
                let mut v = old.to_array();
                v[0] += f * (to.x - old.x);
                v[1] += f * (to.y - old.y);
                tries.push(v);
            }
        }
        let mut found = Vec::new();
        for mut v in tries {
            v[4] = v[4].clamp(-cfg.phi_clamp, cfg.phi_clamp);
            let p = Pose::from_array(v);
            layout.dynamics[k].pose = p;
            let l = self.local(layout, k)?;
            if l < base {
                found.push((l, p));
            }
        }
        layout.dynamics[k].pose = old;
        found.sort_by(|a, b| a.0.total_cmp(&b.0));
        Ok(found.into_iter().map(|f| f.1).collect())
    }
}

/// Moves to try in order: the normalized gradient step, then one coordinate
/// at a time by falling slope.
fn gradient_moves(g: &[f64; 5], pose: &Pose, step: f64, phi_clamp: f64) -> Vec<Pose> {
    let norm = g.iter().map(|v| v * v).sum::<f64>().sqrt();
    let base = pose.to_array();
    let clamp = |mut v: [f64; 5]| {
        v[4] = v[4].clamp(-phi_clamp, phi_clamp);
        Pose::from_array(v)
    };
    let mut v = base;
    for d in 0..5 {
        v[d] -= step * g[d] / norm;
    }
    let mut out = vec![clamp(v)];
    let mut dims: Vec<usize> = (0..5).filter(|d| g[*d] != 0.0).collect();
    if dims.len() > 1 {
        dims.sort_by(|a, b| g[*b].abs().total_cmp(&g[*a].abs()));
        for d in dims {
            let mut v = base;
            v[d] -= step * g[d].signum();
            out.push(clamp(v));
        }
    }
    out
}

/// Drops every point cloud; the optimizer only needs boxes.
fn skeleton(layout: &LayoutState) -> LayoutState {
    let strip = |i: &LabeledInstance| LabeledInstance {
        cloud: PointCloud::default(),
        ..i.clone()
    };
    LayoutState {
        floors: layout.floors.iter().map(strip).collect(),
        background: layout.background.iter().map(strip).collect(),
        dynamics: layout
            .dynamics
            .iter()
            .map(|d| PlacedInstance {
                instance: strip(&d.instance),
                pose: d.pose,
            })
            .collect(),
        binding: layout.binding.clone(),
        anchors: layout.anchors,
        floor_normal: layout.floor_normal,
    }
}

/// Moves the dynamic objects of `layout` to lower the total loss against
/// `target`.
pub fn refine(
    layout: &LayoutState,
    target: &ObjectRelationshipGraph,
    weights: &LossWeights,
    cfg: &OptimizerConfig,
    thresholds: &ThresholdConfig,
    params: &EncoderParams,
) -> Result<OptResult, OptimizeError> {
    cfg.validate().map_err(OptimizeError::InvalidConfig)?;
    weights.validate().map_err(OptimizeError::InvalidConfig)?;
    for n in target.nodes.iter().filter(|n| !n.anchor) {
        match layout.binding.get(&n.id) {
            Some(&k) if k < layout.dynamics.len() => {}
            _ => return Err(LossError::UnboundNode(n.id).into()),
        }
    }
    let mut work = skeleton(layout);
    let mut scorer = Scorer::new(&work, target, weights, thresholds, params);
    let mut rel = scorer
        .uses_topology()
        .then(|| Relations::new(&work.obbs(), &scorer.anchors, thresholds));
    let mut current = scorer.breakdown(&work, rel.as_ref())?;
    let mut trace = vec![current];
    let n = work.dynamics.len();
    let mut steps = vec![cfg.step_size; n];
    let mut iterations = 0;
    let lambda_topo = weights.total.lambda_topo;

    while current.total > cfg.loss_threshold && iterations < cfg.max_iters {
        if steps.iter().all(|s| *s < cfg.min_step) {
            debug!("every step below {} after {iterations} iterations", cfg.min_step);
            break;
        }
        iterations += 1;
        let mut moved = false;
        for k in 0..n {
            if steps[k] < cfg.min_step {
                continue;
            }
            let nonfinite = |pose: Pose, value: f64| OptimizeError::NonFiniteLoss {
                iteration: iterations,
                object: k,
                pose,
                value,
            };
            let old = work.dynamics[k].pose;
            let before = scorer.local(&work, k)?;
            let g = match pose_gradient(|l| scorer.local(l, k), &work, k, cfg.fd_steps) {
                Ok(g) => g,
                Err(LossError::NonFiniteLoss(v)) => return Err(nonfinite(old, v)),
                Err(e) => return Err(e.into()),
            };
            if g.iter().any(|v| !v.is_finite()) {
                return Err(nonfinite(old, f64::NAN));
            }
            let gradient = g.iter().any(|v| *v != 0.0);
            let mut moves = if gradient {
                gradient_moves(&g, &old, steps[k], cfg.phi_clamp)
            } else if before > 0.0 {
                scorer.plateau_moves(&mut work, k, before, cfg)?
            } else {
                Vec::new()
            };
            let t_before = match &rel {
                Some(r) => scorer.topology(&work, r)?,
                None => 0.0,
            };
            let mut accepted = false;
            let mut fallback = gradient && before > 0.0;
            loop {
                for proposal in moves {
                    work.dynamics[k].pose = proposal;
                    let after = scorer.local(&work, k)?;
                    if !after.is_finite() {
                        return Err(nonfinite(proposal, after));
                    }
                    let mut delta = after - before;
                    let mut next_rel = None;
                    if let Some(r) = &rel {
                        let mut r2 = r.clone();
                        r2.update(k, &work.obbs(), &scorer.anchors, thresholds);
                        delta += lambda_topo * (scorer.topology(&work, &r2)? - t_before);
                        next_rel = Some(r2);
                    }
                    if delta < -1e-12 * current.total.max(1.0) {
                        if next_rel.is_some() {
                            rel = next_rel;
                        }
                        accepted = true;
                        break;
                    }
                }
                if accepted || !fallback {
                    break;
                }
                fallback = false;
                work.dynamics[k].pose = old;
                moves = scorer.plateau_moves(&mut work, k, before, cfg)?;
            }
            if accepted {
                moved = true;
                steps[k] = (steps[k] / cfg.step_decay).min(cfg.step_size);
            } else {
                work.dynamics[k].pose = old;
                steps[k] *= cfg.step_decay;
            }
        }
        if moved {
            current = scorer.breakdown(&work, rel.as_ref())?;
            trace.push(current);
        }
    }

    let mut final_layout = layout.clone();
    for (d, w) in final_layout.dynamics.iter_mut().zip(&work.dynamics) {
        d.pose = w.pose;
    }
    Ok(OptResult {
        final_layout,
        converged: current.total <= cfg.loss_threshold,
        loss_trace: trace,
        iterations_used: iterations,
    })
}

/// Shape of the frozen graph encoder used by the topology loss.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EncoderConfig {
    pub embedding_dim: usize,
    pub rounds: usize,
    pub seed: u64,
}

impl Default for EncoderConfig {
    fn default() -> Self {
        Self {
            embedding_dim: EncoderParams::DEFAULT_DIM,
            rounds: EncoderParams::DEFAULT_ROUNDS,
            seed: 0,
        }
    }
}

impl EncoderConfig {
    /// Frozen weights covering every category id of `repo`'s taxonomy.
    pub fn params(&self, repo: &SceneRepository) -> Result<EncoderParams, EmbedError> {
        let count = repo.taxonomy.categories.keys().last().map_or(0, |c| *c as usize + 1);
        EncoderParams::new(self.embedding_dim, self.rounds, self.seed, count)
    }
}

/// Every knob of the synthesis pipeline.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthesisConfig {
    pub thresholds: ThresholdConfig,
    pub sampling: GraphSamplingConfig,
    pub weights: LossWeights,
    pub optimizer: OptimizerConfig,
    pub encoder: EncoderConfig,
    pub substitution: SubstitutionPolicy,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthesizedScene {
    /// Static structure followed by the placed objects.
    pub cloud: LabeledCloud,
    pub target: ObjectRelationshipGraph,
    /// Graph of the final layout.
    pub realized: ObjectRelationshipGraph,
    pub result: OptResult,
    pub seed: u64,
}

/// Samples a target graph, lays it out, refines it and bakes the result
/// into one labeled cloud.
pub fn synthesize_scene(
    stats: &RelationStats,
    repo: &SceneRepository,
    cfg: &SynthesisConfig,
    seed: u64,
) -> Result<SynthesizedScene, OptimizeError> {
    let anchors = Anchors::from_taxonomy(&repo.taxonomy);
    let sampling = GraphSamplingConfig {
        rng_seed: seed,
        ..cfg.sampling.clone()
    };
    let target = build_target_graph(stats, &anchors, &sampling);
    let layout = initialize_layout(&target, repo, seed, cfg.substitution)?;
    let params = cfg.encoder.params(repo)?;
    let opt = OptimizerConfig {
        rng_seed: seed,
        ..cfg.optimizer.clone()
    };
    let result = refine(&layout, &target, &cfg.weights, &opt, &cfg.thresholds, &params)?;
    if !result.converged {
        debug!("scene {seed} stopped at loss {}", result.final_loss().total);
    }
    let cloud = bake(&result.final_layout);
    let realized = graph_of_layout(&result.final_layout, &cfg.thresholds);
    Ok(SynthesizedScene {
        cloud,
        target,
        realized,
        result,
        seed,
    })
}

/// Instance ids [`bake`] gives the dynamic objects: consecutive, starting
/// after the largest static id.
pub fn baked_object_ids(layout: &LayoutState) -> Vec<i32> {
    let first = layout
        .floors
        .iter()
        .chain(&layout.background)
        .map(|s| s.instance_id + 1)
        .max()
        .unwrap_or(0);
    (0..layout.dynamics.len() as i32).map(|k| first + k).collect()
}

/// Floors and background as they are, then each object's cloud moved to
/// its pose under the ids of [`baked_object_ids`].
pub fn bake(layout: &LayoutState) -> LabeledCloud {
    let mut out = LabeledCloud::default();
    for s in layout.floors.iter().chain(&layout.background) {
        out.push_instance(&s.cloud, s.category_id as i32, s.instance_id);
    }
    for (d, id) in layout.dynamics.iter().zip(baked_object_ids(layout)) {
        let (cloud, _) = apply_pose(&d.instance.cloud, &d.instance.obb, &d.pose);
        out.push_instance(&cloud, d.category() as i32, id);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::decompose::{CategoryTaxonomy, Role};
    use crate::geometry::Vec3;

    fn inst(cat: u32, id: i32, obb: OrientedBoundingBox) -> LabeledInstance {
        LabeledInstance {
            instance_id: id,
            category_id: cat,
            cloud: PointCloud::new(obb.corners().to_vec()),
            obb,
            source_scene: "s".into(),
        }
    }

    fn repo() -> SceneRepository {
        let t = CategoryTaxonomy::new(
            "t",
            &[(1, "floor", Role::Floor), (2, "wall", Role::Background), (3, "chair", Role::Foreground), (4, "table", Role::Foreground)],
        );
        let mut r = SceneRepository::new(t);
        r.push(Role::Floor, inst(1, 0, OrientedBoundingBox::axis_aligned(Vec3::new(2.0, 2.0, -0.01), Vec3::new(2.0, 2.0, 0.01))));
        r.push(Role::Background, inst(2, 1, OrientedBoundingBox::axis_aligned(Vec3::new(-0.05, 2.0, 1.5), Vec3::new(0.05, 2.0, 1.5))));
        r.push(Role::Foreground, inst(3, 2, OrientedBoundingBox::axis_aligned(Vec3::new(7.0, 7.0, 0.45), Vec3::new(0.25, 0.25, 0.45))));
        r
    }

    fn target(cats: &[u32]) -> ObjectRelationshipGraph {
        let mut g = ObjectRelationshipGraph::with_anchors(&Anchors { floor: Some(1), wall: Some(2) });
        for c in cats {
            g.push_node(*c, None, false);
        }
        g
    }

    #[test]
    fn single_chair_lands_on_floor() {
        let l = initialize_layout(&target(&[3]), &repo(), 4, SubstitutionPolicy::Strict).unwrap();
        assert_eq!(l.dynamics.len(), 1);
        let b = l.dynamics[0].obb();
        assert!(b.min_z().abs() <= 1e-3, "{}", b.min_z());
        assert_eq!(l.binding[&2], 0);
        assert_eq!(l.floor_normal, UP);
    }

    #[test]
    fn missing_category() {
        let err = initialize_layout(&target(&[4]), &repo(), 4, SubstitutionPolicy::Strict);
        assert!(matches!(err, Err(OptimizeError::MissingCategory(4))));
        let l = initialize_layout(&target(&[4]), &repo(), 4, SubstitutionPolicy::Substitute).unwrap();
        assert_eq!(l.dynamics[0].category(), 3);
    }

    #[test]
    fn incremental_relations_match_layout_graph() {
        let r = repo();
        let mut l = initialize_layout(&target(&[3, 3, 3, 3]), &r, 9, SubstitutionPolicy::Strict).unwrap();
        let cfg = ThresholdConfig::default();
        let w = LossWeights::default();
        let p = EncoderParams::with_categories(5, 0);
        let t = target(&[3, 3, 3, 3]);
        let scorer = Scorer::new(&l, &t, &w, &cfg, &p);
        let mut rel = Relations::new(&l.obbs(), &scorer.anchors, &cfg);
        for step in 0..8 {
            let k = step % 4;
            let p = l.dynamics[k].pose;
            l.dynamics[k].pose = Pose::new(p.x - 0.3, p.y + 0.2, p.z, p.theta + 0.4, 0.0);
            rel.update(k, &l.obbs(), &scorer.anchors, &cfg);
            let g = graph_of_layout(&l, &cfg);
            let want: EdgeKey = g.edges.iter().map(|e| (e.src, e.dst, e.relation.index() as u8)).collect();
            assert_eq!(rel.key(), want);
        }
    }

    #[test]
    fn bake_conserves_points() {
        let r = repo();
        let l = initialize_layout(&target(&[3, 3]), &r, 1, SubstitutionPolicy::Strict).unwrap();
        let c = bake(&l);
        assert_eq!(c.len(), 8 * 4);
        assert_eq!(&c.cloud.points[..16], &[r.floors[0].cloud.points.clone(), r.backgrounds[0].cloud.points.clone()].concat()[..]);
        assert_eq!(c.instances[16..].iter().collect::<BTreeSet<_>>().len(), 2);
        assert!(c.labels[16..].iter().all(|l| *l == 3));
    }
}
