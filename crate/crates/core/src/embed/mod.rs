//! A frozen graph encoder and node matching between two graphs.
//!
//! The encoder is a fixed message-passing network with seeded random
//! weights. Node state starts as a projection of the one-hot category and
//! is updated `rounds` times by
//!
//! `h_i <- tanh(S h_i + sum_{i->j} Out[r] h_j + sum_{j->i} In[r] h_j)`
//!
//! with one `Out`/`In` matrix pair per relation type. Edge weights are
//! ignored; only topology and labels enter the embedding.

mod hungarian;

pub use hungarian::assign;

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::org::ObjectRelationshipGraph;
use crate::relations::RelationType;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum EmbedError {
    #[error("node {node} has category {category}, encoder covers 0..{count}")]
    CategoryOutOfRange { node: usize, category: u32, count: usize },
    #[error("invalid encoder parameters: {0}")]
    InvalidParams(String),
}

/// Encoder shape and its frozen weights.
#[derive(Debug, Clone, PartialEq)]
pub struct EncoderParams {
    embedding_dim: usize,
    rounds: usize,
    seed: u64,
    category_count: usize,
    relation_count: usize,
    proj: DMatrix<f64>,
    self_w: DMatrix<f64>,
    out_w: Vec<DMatrix<f64>>,
    in_w: Vec<DMatrix<f64>>,
}

impl EncoderParams {
    pub const DEFAULT_DIM: usize = 32;
    pub const DEFAULT_ROUNDS: usize = 3;

    pub fn new(embedding_dim: usize, rounds: usize, seed: u64, category_count: usize) -> Result<Self, EmbedError> {
        if embedding_dim < 8 {
            return Err(EmbedError::InvalidParams(format!("embedding_dim must be >= 8, got {embedding_dim}")));
        }
        if rounds == 0 {
            return Err(EmbedError::InvalidParams("rounds must be >= 1".into()));
        }
        let relation_count = RelationType::COUNT;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let d = embedding_dim;
        let a = (3.0 / d as f64).sqrt();
        let square = |rng: &mut ChaCha8Rng| DMatrix::from_fn(d, d, |_, _| rng.random_range(-a..a));
        let proj = DMatrix::from_fn(d, category_count, |_, _| rng.random_range(-1.0..1.0));
        let self_w = square(&mut rng);
        let out_w = (0..relation_count).map(|_| square(&mut rng)).collect();
        let in_w = (0..relation_count).map(|_| square(&mut rng)).collect();
        Ok(Self {
            embedding_dim,
            rounds,
            seed,
            category_count,
            relation_count,
            proj,
            self_w,
            out_w,
            in_w,
        })
    }

    /// Default shape covering categories `0..category_count`.
    pub fn with_categories(category_count: usize, seed: u64) -> Self {
        Self::new(Self::DEFAULT_DIM, Self::DEFAULT_ROUNDS, seed, category_count).expect("defaults are valid")
    }

    pub fn embedding_dim(&self) -> usize {
        self.embedding_dim
    }

    pub fn rounds(&self) -> usize {
        self.rounds
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn category_count(&self) -> usize {
        self.category_count
    }

    pub fn relation_count(&self) -> usize {
        self.relation_count
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GraphEmbedding {
    /// Indexed by node id.
    pub node_vectors: Vec<DVector<f64>>,
    pub pooled: DVector<f64>,
}

pub fn encode_graph(g: &ObjectRelationshipGraph, params: &EncoderParams) -> Result<GraphEmbedding, EmbedError> {
    let d = params.embedding_dim;
    let mut h = Vec::with_capacity(g.len());
    for n in &g.nodes {
        if n.category as usize >= params.category_count {
            return Err(EmbedError::CategoryOutOfRange {
                node: n.id,
                category: n.category,
                count: params.category_count,
            });
        }
        h.push(params.proj.column(n.category as usize).into_owned());
    }
    for _ in 0..params.rounds {
        let mut next: Vec<DVector<f64>> = h.iter().map(|x| &params.self_w * x).collect();
        for e in &g.edges {
            let r = e.relation.index();
            next[e.src] += &params.out_w[r] * &h[e.dst];
            next[e.dst] += &params.in_w[r] * &h[e.src];
        }
        h = next.into_iter().map(|x| x.map(f64::tanh)).collect();
    }
    let mut pooled = DVector::zeros(d);
    for x in &h {
        pooled += x;
    }
    if !h.is_empty() {
        pooled /= h.len() as f64;
    }
    Ok(GraphEmbedding { node_vectors: h, pooled })
}

/// Optimal category-respecting node correspondence between a target and a
/// current graph.
#[derive(Debug, Clone, PartialEq)]
pub struct NodeMatching {
    /// `(target node, current node)`.
    pub pairs: Vec<(usize, usize)>,
    /// Target nodes with no partner; each needs an insertion into the current graph.
    pub unmatched_target: Vec<usize>,
    /// Current nodes with no partner; each needs a deletion.
    pub unmatched_current: Vec<usize>,
    pub total_substitution_cost: f64,
}

impl NodeMatching {
    pub fn insertions(&self) -> usize {
        self.unmatched_target.len()
    }

    pub fn deletions(&self) -> usize {
        self.unmatched_current.len()
    }

    /// Current node matched to target node `t`.
    pub fn current_of(&self, t: usize) -> Option<usize> {
        self.pairs.iter().find(|p| p.0 == t).map(|p| p.1)
    }
}

/// Squared Euclidean distance.
pub fn substitution_cost(a: &DVector<f64>, b: &DVector<f64>) -> f64 {
    (a - b).norm_squared()
}

/// Minimum total squared-distance matching. Only nodes of equal category
/// may pair, so the assignment is solved per category.
pub fn match_nodes(
    zt: &GraphEmbedding,
    zc: &GraphEmbedding,
    gt: &ObjectRelationshipGraph,
    gc: &ObjectRelationshipGraph,
) -> NodeMatching {
    let mut groups: BTreeMap<u32, (Vec<usize>, Vec<usize>)> = BTreeMap::new();
    for n in &gt.nodes {
        groups.entry(n.category).or_default().0.push(n.id);
    }
    for n in &gc.nodes {
        groups.entry(n.category).or_default().1.push(n.id);
    }
    let mut m = NodeMatching {
        pairs: Vec::new(),
        unmatched_target: Vec::new(),
        unmatched_current: Vec::new(),
        total_substitution_cost: 0.0,
    };
    for (ts, cs) in groups.values() {
        let transpose = ts.len() > cs.len();
        let (rows, cols) = if transpose { (cs, ts) } else { (ts, cs) };
        let mut cost = Vec::with_capacity(rows.len() * cols.len());
        for &r in rows {
            for &c in cols {
                let (t, k) = if transpose { (c, r) } else { (r, c) };
                cost.push(substitution_cost(&zt.node_vectors[t], &zc.node_vectors[k]));
            }
        }
        let (assigned, total) = assign(&cost, rows.len(), cols.len());
        m.total_substitution_cost += total;
        let mut taken = vec![false; cols.len()];
        for (ri, &ci) in assigned.iter().enumerate() {
            taken[ci] = true;
            let (t, k) = if transpose { (cols[ci], rows[ri]) } else { (rows[ri], cols[ci]) };
            m.pairs.push((t, k));
        }
        let spare = cols.iter().zip(&taken).filter(|(_, t)| !**t).map(|(c, _)| *c);
        if transpose {
            m.unmatched_target.extend(spare);
        } else {
            m.unmatched_current.extend(spare);
        }
    }
    m.pairs.sort_unstable();
    m.unmatched_target.sort_unstable();
    m.unmatched_current.sort_unstable();
    m
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::org::Anchors;

    fn small() -> ObjectRelationshipGraph {
        let mut g = ObjectRelationshipGraph::with_anchors(&Anchors {
            floor: Some(1),
            wall: Some(2),
        });
        let a = g.push_node(3, None, false);
        let b = g.push_node(4, None, false);
        g.push_edge(a, 0, RelationType::SupportedBy, 1.0);
        g.push_edge(b, 0, RelationType::SupportedBy, 1.0);
        g.push_edge(a, b, RelationType::Faces, 0.5);
        g
    }

    #[test]
    fn pooled_is_mean() {
        let p = EncoderParams::with_categories(8, 1);
        let e = encode_graph(&small(), &p).unwrap();
        let mut s = DVector::zeros(p.embedding_dim());
        for v in &e.node_vectors {
            s += v;
        }
        assert!((s / 4.0 - &e.pooled).norm() < 1e-12);
    }

    #[test]
    fn category_out_of_range() {
        let p = EncoderParams::with_categories(3, 1);
        assert!(matches!(encode_graph(&small(), &p), Err(EmbedError::CategoryOutOfRange { category: 3, .. })));
    }

    #[test]
    fn identical_graphs_match_perfectly() {
        let p = EncoderParams::with_categories(8, 1);
        let g = small();
        let e = encode_graph(&g, &p).unwrap();
        let m = match_nodes(&e, &e, &g, &g);
        assert_eq!(m.pairs, vec![(0, 0), (1, 1), (2, 2), (3, 3)]);
        assert_eq!(m.total_substitution_cost, 0.0);
        assert_eq!((m.insertions(), m.deletions()), (0, 0));
    }

    #[test]
    fn params_reject_small_dims() {
        assert!(EncoderParams::new(4, 3, 0, 5).is_err());
        assert!(EncoderParams::new(16, 0, 0, 5).is_err());
    }
}
