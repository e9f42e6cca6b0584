//! Object relationship graphs: built from relation statistics as sampling
//! targets, or read off a concrete layout.

mod sample;

pub use sample::{
    activate_edges, build_target_graph, cooccurrence_weights, debiased_location, js_divergence, node_sigma,
    normalize_weights, sample_graphs, sample_nodes, CooccurrenceMatrix, GraphSamplingConfig, NodeDraw,
};

use std::collections::BTreeSet;
use std::path::Path;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::OrientedBoundingBox;
use crate::io::{write_atomic, IoError};
use crate::relations::{classify_against_nearest, classify_pair, RelationType, ThresholdConfig};

pub const GRAPH_VERSION: &str = "1";

#[derive(Debug, Error, Clone, PartialEq)]
pub enum OrgError {
    #[error("relation statistics are empty")]
    EmptyStats,
    #[error("distributions have different lengths ({0} vs {1})")]
    DimensionMismatch(usize, usize),
    #[error("invalid sampling config: {0}")]
    InvalidConfig(String),
}

/// Categories of the two structural anchors every indoor graph starts with.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Anchors {
    pub floor: Option<u32>,
    pub wall: Option<u32>,
}

impl Anchors {
    pub fn from_taxonomy(t: &crate::decompose::CategoryTaxonomy) -> Self {
        Self {
            floor: t.floor_category(),
            wall: t.wall_category(),
        }
    }

    pub fn categories(&self) -> Vec<u32> {
        self.floor.into_iter().chain(self.wall).collect()
    }

    pub fn count(&self) -> usize {
        self.floor.is_some() as usize + self.wall.is_some() as usize
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OrgNode {
    pub id: usize,
    pub category: u32,
    /// Layout slot or repository instance the node is bound to.
    pub instance: Option<usize>,
    #[serde(default)]
    pub anchor: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OrgEdge {
    pub src: usize,
    pub dst: usize,
    pub relation: RelationType,
    pub weight: f64,
}

/// Categorized nodes with typed, weighted, directed edges. Node ids are
/// their positions in `nodes`; anchors come first.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ObjectRelationshipGraph {
    pub nodes: Vec<OrgNode>,
    pub edges: Vec<OrgEdge>,
}

impl ObjectRelationshipGraph {
    /// Graph holding only the anchors.
    pub fn with_anchors(anchors: &Anchors) -> Self {
        let mut g = Self::default();
        for c in anchors.categories() {
            g.push_node(c, None, true);
        }
        g
    }

    pub fn push_node(&mut self, category: u32, instance: Option<usize>, anchor: bool) -> usize {
        let id = self.nodes.len();
        self.nodes.push(OrgNode {
            id,
            category,
            instance,
            anchor,
        });
        id
    }

    /// Adds an edge unless it is `None` or the ordered pair already has one.
    pub fn push_edge(&mut self, src: usize, dst: usize, relation: RelationType, weight: f64) -> bool {
        if relation == RelationType::None || src == dst || self.edge(src, dst).is_some() {
            return false;
        }
        self.edges.push(OrgEdge {
            src,
            dst,
            relation,
            weight,
        });
        true
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn anchor_count(&self) -> usize {
        self.nodes.iter().filter(|n| n.anchor).count()
    }

    pub fn edge(&self, src: usize, dst: usize) -> Option<&OrgEdge> {
        self.edges.iter().find(|e| e.src == src && e.dst == dst)
    }

    pub fn relation(&self, src: usize, dst: usize) -> RelationType {
        self.edge(src, dst).map_or(RelationType::None, |e| e.relation)
    }

    /// `A[i][j] = 1` iff the ordered pair has a non-`None` edge.
    pub fn adjacency(&self) -> DMatrix<f64> {
        let n = self.nodes.len();
        let mut a = DMatrix::zeros(n, n);
        for e in &self.edges {
            if e.relation != RelationType::None {
                a[(e.src, e.dst)] = 1.0;
            }
        }
        a
    }

    pub fn count_relation(&self, r: RelationType) -> usize {
        self.edges.iter().filter(|e| e.relation == r).count()
    }

    /// Set of `(src, dst, relation)` triples, handy for comparisons.
    pub fn edge_set(&self) -> BTreeSet<(usize, usize, RelationType)> {
        self.edges.iter().map(|e| (e.src, e.dst, e.relation)).collect()
    }

    /// The same graph with node `i` moved to position `perm[i]`.
    pub fn permuted(&self, perm: &[usize]) -> Self {
        let mut nodes = self.nodes.clone();
        for (old, n) in self.nodes.iter().enumerate() {
            nodes[perm[old]] = OrgNode { id: perm[old], ..n.clone() };
        }
        let edges = self
            .edges
            .iter()
            .map(|e| OrgEdge {
                src: perm[e.src],
                dst: perm[e.dst],
                ..e.clone()
            })
            .collect();
        Self { nodes, edges }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&GraphFile {
            version: GRAPH_VERSION.into(),
            nodes: self.nodes.clone(),
            edges: self.edges.clone(),
        })
        .expect("graph serializes")
    }

    pub fn to_value(&self) -> serde_json::Value {
        serde_json::to_value(GraphFile {
            version: GRAPH_VERSION.into(),
            nodes: self.nodes.clone(),
            edges: self.edges.clone(),
        })
        .expect("graph serializes")
    }

    pub fn from_value(v: serde_json::Value, path: &Path) -> Result<Self, IoError> {
        match v.get("version").and_then(|x| x.as_str()) {
            Some(GRAPH_VERSION) => {}
            other => {
                return Err(IoError::format(
                    path,
                    format!("unsupported graph version {other:?}, expected \"{GRAPH_VERSION}\""),
                ))
            }
        }
        let f: GraphFile = serde_json::from_value(v).map_err(|e| IoError::format(path, e.to_string()))?;
        for (i, n) in f.nodes.iter().enumerate() {
            if n.id != i {
                return Err(IoError::format(path, format!("node {i} has id {}", n.id)));
            }
        }
        if let Some(e) = f.edges.iter().find(|e| e.src >= f.nodes.len() || e.dst >= f.nodes.len()) {
            return Err(IoError::format(path, format!("edge {} -> {} points past the node list", e.src, e.dst)));
        }
        Ok(Self {
            nodes: f.nodes,
            edges: f.edges,
        })
    }

    pub fn from_json(text: &str, path: &Path) -> Result<Self, IoError> {
        let v: serde_json::Value = serde_json::from_str(text).map_err(|e| IoError::format(path, e.to_string()))?;
        Self::from_value(v, path)
    }

    pub fn save(&self, path: &Path) -> Result<(), IoError> {
        write_atomic(path, self.to_json().as_bytes())
    }
}

#[derive(Serialize, Deserialize)]
struct GraphFile {
    version: String,
    nodes: Vec<OrgNode>,
    edges: Vec<OrgEdge>,
}

/// One placed object for [`graph_of_boxes`].
#[derive(Debug, Clone)]
pub struct PlacedObject {
    pub category: u32,
    pub obb: OrientedBoundingBox,
    pub instance: Option<usize>,
}

/// The realized graph of a layout: anchors first, then one node per object
/// in order. Object pairs are labeled by `classify_pair`, object-anchor
/// pairs by the relation to the nearest structure of that anchor.
pub fn graph_of_boxes(
    anchors: &[(u32, Vec<OrientedBoundingBox>)],
    objects: &[PlacedObject],
    cfg: &ThresholdConfig,
) -> ObjectRelationshipGraph {
    let mut g = ObjectRelationshipGraph::default();
    for (c, _) in anchors {
        g.push_node(*c, None, true);
    }
    let first = g.len();
    for o in objects {
        g.push_node(o.category, o.instance, false);
    }
    for (i, a) in objects.iter().enumerate() {
        for (j, b) in objects.iter().enumerate() {
            if i != j {
                g.push_edge(first + i, first + j, classify_pair(&a.obb, &b.obb, cfg), 1.0);
            }
        }
        for (k, (_, boxes)) in anchors.iter().enumerate() {
            if let Some(r) = classify_against_nearest(&a.obb, boxes, cfg) {
                g.push_edge(first + i, k, r, 1.0);
            }
        }
    }
    g
}
