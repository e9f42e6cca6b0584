use std::collections::BTreeMap;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand::distr::weighted::WeightedIndex;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal as StdNormal};

use super::{Anchors, ObjectRelationshipGraph, OrgError};
use crate::relations::{conditional_distribution, RelationStats, RelationType};

/// Knobs for target-graph sampling.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GraphSamplingConfig {
    /// Largest accepted JS divergence between a draw and the mean histogram.
    pub js_threshold: f64,
    pub max_resamples: usize,
    /// Minimum conditional co-occurrence probability for an edge.
    pub edge_tau: f64,
    /// Per-category multipliers on the mean count.
    pub gt_boost: BTreeMap<u32, f64>,
    /// Fixed standard deviation for every category; `None` uses `max(0.25, sqrt(mu))`.
    pub sigma: Option<f64>,
    /// Upper bound on sampled nodes as a multiple of the mean scene size.
    pub node_cap: f64,
    pub rng_seed: u64,
}

impl Default for GraphSamplingConfig {
    fn default() -> Self {
        Self {
            js_threshold: 0.35,
            max_resamples: 20,
            edge_tau: 0.2,
            gt_boost: BTreeMap::new(),
            sigma: None,
            node_cap: 4.0,
            rng_seed: 0,
        }
    }
}

impl GraphSamplingConfig {
    pub fn validate(&self) -> Result<(), OrgError> {
        let bad = |m: String| Err(OrgError::InvalidConfig(m));
        if !(0.0..=1.0).contains(&self.js_threshold) {
            return bad(format!("js_threshold must be in [0, 1], got {}", self.js_threshold));
        }
        if !(0.0..1.0).contains(&self.edge_tau) {
            return bad(format!("edge_tau must be in [0, 1), got {}", self.edge_tau));
        }
        if let Some((c, f)) = self.gt_boost.iter().find(|(_, f)| !(**f >= 1.0 && f.is_finite())) {
            return bad(format!("boost for category {c} must be >= 1, got {f}"));
        }
        if let Some(s) = self.sigma {
            if !(s >= 0.0 && s.is_finite()) {
                return bad(format!("sigma must be non-negative, got {s}"));
            }
        }
        if !(self.node_cap >= 1.0) {
            return bad(format!("node_cap must be >= 1, got {}", self.node_cap));
        }
        Ok(())
    }

    fn boost(&self, c: u32) -> f64 {
        self.gt_boost.get(&c).copied().unwrap_or(1.0)
    }
}

/// Dense co-occurrence weights with the category of each row/column.
#[derive(Debug, Clone, PartialEq)]
pub struct CooccurrenceMatrix {
    pub categories: Vec<u32>,
    pub w: DMatrix<f64>,
}

impl CooccurrenceMatrix {
    pub fn get(&self, i: u32, j: u32) -> f64 {
        let a = self.categories.binary_search(&i);
        let b = self.categories.binary_search(&j);
        match (a, b) {
            (Ok(a), Ok(b)) => self.w[(a, b)],
            _ => 0.0,
        }
    }
}

/// Pair counts over the total pair count.
pub fn cooccurrence_weights(stats: &RelationStats) -> Result<CooccurrenceMatrix, OrgError> {
    let total = stats.total_pair_count();
    if total == 0 {
        return Err(OrgError::EmptyStats);
    }
    let mut categories: Vec<u32> = stats.pairs.keys().flat_map(|&(i, j)| [i, j]).collect();
    categories.sort_unstable();
    categories.dedup();
    let n = categories.len();
    let mut w = DMatrix::zeros(n, n);
    for (&(i, j), p) in &stats.pairs {
        let a = categories.binary_search(&i).unwrap();
        let b = categories.binary_search(&j).unwrap();
        w[(a, b)] = p.count as f64 / total as f64;
    }
    Ok(CooccurrenceMatrix { categories, w })
}

/// `D^-1/2 W D^-1/2` with `D_ii` the row sums. Rows with zero degree stay zero.
///
/// ```
/// use nalgebra::DMatrix;
/// use orgsynth::org::normalize_weights;
///
/// let w = DMatrix::from_row_slice(2, 2, &[0.0, 4.0, 4.0, 0.0]);
/// assert_eq!(normalize_weights(&w), DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 1.0, 0.0]));
/// ```
pub fn normalize_weights(w: &DMatrix<f64>) -> DMatrix<f64> {
    let inv: Vec<f64> = w
        .row_iter()
        .map(|r| {
            let d = r.sum();
            if d > f64::EPSILON {
                1.0 / d.sqrt()
            } else {
                0.0
            }
        })
        .collect();
    DMatrix::from_fn(w.nrows(), w.ncols(), |i, j| {
        let dj = inv.get(j).copied().unwrap_or(0.0);
        inv[i] * w[(i, j)] * dj
    })
}

/// Jensen-Shannon divergence in bits.
pub fn js_divergence(p: &[f64], q: &[f64]) -> Result<f64, OrgError> {
    if p.len() != q.len() {
        return Err(OrgError::DimensionMismatch(p.len(), q.len()));
    }
    let kl = |a: f64, m: f64| if a > 0.0 { a * (a / m).log2() } else { 0.0 };
    let mut s = 0.0;
    for (&a, &b) in p.iter().zip(q) {
        let m = 0.5 * (a + b);
        s += 0.5 * kl(a, m) + 0.5 * kl(b, m);
    }
    Ok(s.clamp(0.0, 1.0))
}

/// Default per-category spread.
pub fn node_sigma(mu: f64) -> f64 {
    mu.sqrt().max(0.25)
}

/// Expected value of `round(max(0, N(m, sigma)))`.
fn rounded_mean(m: f64, sigma: f64) -> f64 {
    let n = StdNormal::new(0.0, 1.0).unwrap();
    let top = (m.max(0.0) + 12.0 * sigma + 2.0).ceil() as usize;
    (1..=top).map(|k| n.sf((k as f64 - 0.5 - m) / sigma)).sum()
}

/// Location `m` such that `round(max(0, N(m, sigma)))` has mean `mu`.
pub fn debiased_location(mu: f64, sigma: f64) -> f64 {
    if sigma <= 0.0 || mu <= 0.0 {
        return mu;
    }
    let (mut lo, mut hi) = (-12.0 * sigma - 1.0, mu + 1.0);
    for _ in 0..100 {
        let mid = 0.5 * (lo + hi);
        if rounded_mean(mid, sigma) < mu {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Sampled category counts and how the draw was chosen.
#[derive(Debug, Clone, PartialEq)]
pub struct NodeDraw {
    /// Non-zero counts only.
    pub counts: BTreeMap<u32, usize>,
    pub js: f64,
    pub attempts: usize,
    /// `true` when the draw met the JS threshold, `false` for the best-of fallback.
    pub accepted: bool,
}

impl NodeDraw {
    pub fn total(&self) -> usize {
        self.counts.values().sum()
    }
}

struct CategoryLaw {
    category: u32,
    mu: f64,
    normal: Option<Normal<f64>>,
}

fn laws(stats: &RelationStats, cfg: &GraphSamplingConfig) -> Vec<CategoryLaw> {
    stats
        .category_mean()
        .into_iter()
        .map(|(c, m)| {
            let mu = m * cfg.boost(c);
            let sigma = cfg.sigma.unwrap_or_else(|| node_sigma(mu));
            let normal = (sigma > 0.0 && mu > 0.0).then(|| Normal::new(debiased_location(mu, sigma), sigma).unwrap());
            CategoryLaw { category: c, mu, normal }
        })
        .collect()
}

fn histogram_js(counts: &[usize], reference: &[f64]) -> f64 {
    let n: usize = counts.iter().sum();
    if n == 0 {
        return 1.0;
    }
    let p: Vec<f64> = counts.iter().map(|&k| k as f64 / n as f64).collect();
    js_divergence(&p, reference).unwrap()
}

/// Per-category Gaussian counts, redrawn until the histogram is within
/// `js_threshold` of the mean histogram or `max_resamples` draws are spent.
pub fn sample_nodes<R: Rng + ?Sized>(stats: &RelationStats, cfg: &GraphSamplingConfig, rng: &mut R) -> NodeDraw {
    let laws = laws(stats, cfg);
    let mean_total: f64 = laws.iter().map(|l| l.mu).sum();
    if laws.is_empty() || mean_total <= 0.0 {
        return NodeDraw {
            counts: BTreeMap::new(),
            js: 0.0,
            attempts: 0,
            accepted: true,
        };
    }
    let reference: Vec<f64> = laws.iter().map(|l| l.mu / mean_total).collect();
    let cap = (cfg.node_cap * mean_total).ceil() as usize;
    let attempts_allowed = cfg.max_resamples.max(1);

    let mut best: Option<(f64, Vec<usize>)> = None;
    let mut attempts = 0;
    while attempts < attempts_allowed {
        attempts += 1;
        let counts: Vec<usize> = laws
            .iter()
            .map(|l| match &l.normal {
                Some(n) => n.sample(rng).max(0.0).round() as usize,
                None => l.mu.round() as usize,
            })
            .collect();
        if counts.iter().sum::<usize>() > cap {
            if best.is_none() && attempts == attempts_allowed {
                best = Some((f64::INFINITY, truncate(counts, cap)));
            }
            continue;
        }
        let js = histogram_js(&counts, &reference);
        if best.as_ref().is_none_or(|(b, _)| js < *b) {
            best = Some((js, counts));
        }
        if js <= cfg.js_threshold {
            break;
        }
    }
    let (js, counts) = best.unwrap();
    let js = if js.is_finite() { js } else { histogram_js(&counts, &reference) };
    NodeDraw {
        counts: laws
            .iter()
            .zip(counts)
            .filter(|(_, k)| *k > 0)
            .map(|(l, k)| (l.category, k))
            .collect(),
        js,
        attempts,
        accepted: js <= cfg.js_threshold,
    }
}

fn truncate(mut counts: Vec<usize>, cap: usize) -> Vec<usize> {
    while counts.iter().sum::<usize>() > cap {
        let i = (0..counts.len()).max_by_key(|&i| counts[i]).unwrap();
        counts[i] -= 1;
    }
    counts
}

/// Adds an edge for every ordered node pair whose co-occurrence probability
/// exceeds `edge_tau` and whose sampled relation is not `None`.
pub fn activate_edges<R: Rng + ?Sized>(
    graph: &mut ObjectRelationshipGraph,
    stats: &RelationStats,
    cfg: &GraphSamplingConfig,
    rng: &mut R,
) {
    let n = graph.len();
    for i in 0..n {
        for j in 0..n {
            if i == j {
                continue;
            }
            let (ci, cj) = (graph.nodes[i].category, graph.nodes[j].category);
            let p = stats.cooccurrence_probability(ci, cj);
            if p <= cfg.edge_tau {
                continue;
            }
            let dist = conditional_distribution(stats, ci, cj);
            let Ok(pick) = WeightedIndex::new(dist) else { continue };
            let r = RelationType::ALL[pick.sample(rng)];
            graph.push_edge(i, j, r, p);
        }
    }
}

/// Anchors, sampled nodes, then activated edges, all from `cfg.rng_seed`.
pub fn build_target_graph(stats: &RelationStats, anchors: &Anchors, cfg: &GraphSamplingConfig) -> ObjectRelationshipGraph {
    build_with_draw(stats, anchors, cfg).0
}

pub(crate) fn build_with_draw(
    stats: &RelationStats,
    anchors: &Anchors,
    cfg: &GraphSamplingConfig,
) -> (ObjectRelationshipGraph, NodeDraw) {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.rng_seed);
    let mut g = ObjectRelationshipGraph::with_anchors(anchors);
    let draw = sample_nodes(stats, cfg, &mut rng);
    for (&c, &k) in &draw.counts {
        for _ in 0..k {
            g.push_node(c, None, false);
        }
    }
    activate_edges(&mut g, stats, cfg, &mut rng);
    (g, draw)
}

/// `count` graphs, graph `k` seeded with `cfg.rng_seed + k`.
pub fn sample_graphs(
    stats: &RelationStats,
    anchors: &Anchors,
    cfg: &GraphSamplingConfig,
    count: usize,
) -> Vec<ObjectRelationshipGraph> {
    (0..count)
        .into_par_iter()
        .map(|k| {
            let c = GraphSamplingConfig {
                rng_seed: cfg.rng_seed.wrapping_add(k as u64),
                ..cfg.clone()
            };
            build_target_graph(stats, anchors, &c)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::relations::PairStats;

    #[test]
    fn js_extremes() {
        assert_eq!(js_divergence(&[0.3, 0.7], &[0.3, 0.7]).unwrap(), 0.0);
        assert_eq!(js_divergence(&[1.0, 0.0], &[0.0, 1.0]).unwrap(), 1.0);
        assert!(matches!(js_divergence(&[1.0], &[0.5, 0.5]), Err(OrgError::DimensionMismatch(1, 2))));
    }

    #[test]
    fn debiased_draws_hit_the_mean() {
        for mu in [0.1, 0.7, 3.0] {
            let s = node_sigma(mu);
            let m = debiased_location(mu, s);
            assert!((rounded_mean(m, s) - mu).abs() < 1e-9);
        }
    }

    #[test]
    fn weights_of_two_pairs() {
        let mut stats = RelationStats::from_totals(1, [(1, 4)]);
        for (j, n) in [(2, 3), (3, 1)] {
            let p = PairStats { count: n, subjects: n, ..Default::default() };
            stats.pairs.insert((1, j), p);
        }
        let w = cooccurrence_weights(&stats).unwrap();
        assert_eq!(w.get(1, 2), 0.75);
        assert_eq!(w.get(1, 3), 0.25);
        assert_eq!(w.w.sum(), 1.0);
        assert_eq!(cooccurrence_weights(&RelationStats::default()), Err(OrgError::EmptyStats));
    }

    #[test]
    fn degenerate_gaussian_is_exact() {
        let stats = RelationStats::from_totals(2, [(9, 6)]);
        let cfg = GraphSamplingConfig { sigma: Some(0.0), ..Default::default() };
        let d = sample_nodes(&stats, &cfg, &mut ChaCha8Rng::seed_from_u64(1));
        assert_eq!(d.counts.get(&9), Some(&3));
        assert!(d.accepted);
    }

    #[test]
    fn config_validation() {
        assert!(GraphSamplingConfig::default().validate().is_ok());
        let mut c = GraphSamplingConfig::default();
        c.gt_boost.insert(3, 0.5);
        assert!(c.validate().is_err());
        assert!(GraphSamplingConfig { edge_tau: 1.0, ..Default::default() }.validate().is_err());
    }
}
