//! Relation statistics gathered from decomposed scenes.

use std::collections::BTreeMap;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{classify_against_nearest, classify_pair, RelationType, ThresholdConfig};
use crate::decompose::SceneRepository;
use crate::geometry::SpatialIndex;
use crate::io::{write_atomic, IoError};

pub const STATS_VERSION: &str = "1";

/// One directed relation from a foreground instance to a neighbor or to a
/// static structure category.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RelationObservation {
    pub subject_category: u32,
    pub object_category: u32,
    pub subject_instance: i32,
    pub object_instance: i32,
    pub relation: RelationType,
    pub scene_id: String,
}

/// Counts for one ordered category pair.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct PairStats {
    /// Directed observations.
    pub count: u64,
    /// Distinct subject instances with at least one observation of the pair.
    pub subjects: u64,
    /// Observations per relation type, indexed by `RelationType::index`.
    pub relations: [u64; RelationType::COUNT],
}

impl PairStats {
    fn merge(&mut self, o: &PairStats) {
        self.count += o.count;
        self.subjects += o.subjects;
        for (a, b) in self.relations.iter_mut().zip(&o.relations) {
            *a += b;
        }
    }

    pub fn distribution(&self) -> [f64; RelationType::COUNT] {
        let mut d = [0.0; RelationType::COUNT];
        if self.count == 0 {
            d[RelationType::None.index()] = 1.0;
            return d;
        }
        for (p, &c) in d.iter_mut().zip(&self.relations) {
            *p = c as f64 / self.count as f64;
        }
        d
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct RelationStats {
    pub scene_count: usize,
    /// Foreground instances per category over all scenes.
    pub category_total: BTreeMap<u32, u64>,
    pub pairs: BTreeMap<(u32, u32), PairStats>,
    /// Every recorded observation by relation, excluded instances included.
    pub relation_totals: [u64; RelationType::COUNT],
    /// Instances left out of `pairs` because all their relations were `None`.
    pub excluded_instances: u64,
}

impl RelationStats {
    /// Statistics carrying only category occurrence totals.
    pub fn from_totals(scene_count: usize, totals: impl IntoIterator<Item = (u32, u64)>) -> Self {
        Self {
            scene_count,
            category_total: totals.into_iter().collect(),
            ..Default::default()
        }
    }

    pub fn is_empty(&self) -> bool {
        self.scene_count == 0 || self.category_total.values().all(|&c| c == 0)
    }

    /// Average instances per scene of category `c`.
    pub fn mean(&self, c: u32) -> f64 {
        if self.scene_count == 0 {
            return 0.0;
        }
        self.category_total.get(&c).copied().unwrap_or(0) as f64 / self.scene_count as f64
    }

    pub fn category_mean(&self) -> BTreeMap<u32, f64> {
        self.category_total.keys().map(|&c| (c, self.mean(c))).collect()
    }

    pub fn total_mean(&self) -> f64 {
        self.category_mean().values().sum()
    }

    pub fn pair(&self, i: u32, j: u32) -> Option<&PairStats> {
        self.pairs.get(&(i, j))
    }

    pub fn pair_count(&self, i: u32, j: u32) -> u64 {
        self.pair(i, j).map_or(0, |p| p.count)
    }

    pub fn total_pair_count(&self) -> u64 {
        self.pairs.values().map(|p| p.count).sum()
    }

    pub fn observation_count(&self) -> u64 {
        self.relation_totals.iter().sum()
    }

    /// Probability that an instance of `i` has a recorded relation to `j`.
    pub fn cooccurrence_probability(&self, i: u32, j: u32) -> f64 {
        let total = self.category_total.get(&i).copied().unwrap_or(0);
        match self.pair(i, j) {
            Some(p) if total > 0 => (p.subjects as f64 / total as f64).min(1.0),
            _ => 0.0,
        }
    }

    pub fn merge(&mut self, o: &RelationStats) {
        self.scene_count += o.scene_count;
        for (&c, &n) in &o.category_total {
            *self.category_total.entry(c).or_insert(0) += n;
        }
        for (k, p) in &o.pairs {
            self.pairs.entry(*k).or_default().merge(p);
        }
        for (a, b) in self.relation_totals.iter_mut().zip(&o.relation_totals) {
            *a += b;
        }
        self.excluded_instances += o.excluded_instances;
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&StatsFile::from(self)).expect("stats serialize")
    }

    pub fn from_json(text: &str, path: &Path) -> Result<Self, IoError> {
        let probe: serde_json::Value =
            serde_json::from_str(text).map_err(|e| IoError::format(path, e.to_string()))?;
        match probe.get("version").and_then(|v| v.as_str()) {
            Some(STATS_VERSION) => {}
            other => {
                return Err(IoError::format(
                    path,
                    format!("unsupported stats version {other:?}, expected \"{STATS_VERSION}\""),
                ))
            }
        }
        let file: StatsFile = serde_json::from_value(probe).map_err(|e| IoError::format(path, e.to_string()))?;
        file.try_into().map_err(|m: String| IoError::format(path, m))
    }

    pub fn save(&self, path: &Path) -> Result<(), IoError> {
        write_atomic(path, self.to_json().as_bytes())
    }

    pub fn load(path: &Path) -> Result<Self, IoError> {
        let text = std::fs::read_to_string(path).map_err(|e| IoError::io(path, e))?;
        Self::from_json(&text, path)
    }
}

/// Normalized relation distribution of the ordered pair, all mass on
/// `None` for pairs never observed.
pub fn conditional_distribution(stats: &RelationStats, i: u32, j: u32) -> [f64; RelationType::COUNT] {
    stats.pair(i, j).cloned().unwrap_or_default().distribution()
}

/// Directed observations of one scene. Each foreground instance is related
/// to its `knn_k` nearest foreground neighbors by center and to the nearest
/// instance of every floor and background category.
pub fn observe_scene(scene: &SceneRepository, cfg: &ThresholdConfig) -> Vec<RelationObservation> {
    let fg = &scene.foregrounds;
    let mut statics: BTreeMap<u32, Vec<&crate::decompose::LabeledInstance>> = BTreeMap::new();
    for inst in scene.floors.iter().chain(&scene.backgrounds) {
        statics.entry(inst.category_id).or_default().push(inst);
    }
    let centers: Vec<_> = fg.iter().map(|i| i.obb.center).collect();
    let index = SpatialIndex::build(&centers);
    let mut out = Vec::new();
    for (i, a) in fg.iter().enumerate() {
        let neighbors = if index.is_empty() {
            Vec::new()
        } else {
            index.knn(&a.obb.center, cfg.knn_k + 1)
        };
        for (j, _) in neighbors.into_iter().filter(|&(j, _)| j != i).take(cfg.knn_k) {
            let b = &fg[j];
            out.push(RelationObservation {
                subject_category: a.category_id,
                object_category: b.category_id,
                subject_instance: a.instance_id,
                object_instance: b.instance_id,
                relation: classify_pair(&a.obb, &b.obb, cfg),
                scene_id: a.source_scene.clone(),
            });
        }
        for (&cat, insts) in &statics {
            let nearest = insts
                .iter()
                .min_by(|x, y| {
                    crate::geometry::min_distance(&a.obb, &x.obb).total_cmp(&crate::geometry::min_distance(&a.obb, &y.obb))
                })
                .expect("non-empty group");
            let relation = classify_against_nearest(&a.obb, [&nearest.obb], cfg).expect("one target");
            out.push(RelationObservation {
                subject_category: a.category_id,
                object_category: cat,
                subject_instance: a.instance_id,
                object_instance: nearest.instance_id,
                relation,
                scene_id: a.source_scene.clone(),
            });
        }
    }
    out
}

fn scene_stats(scene: &SceneRepository, cfg: &ThresholdConfig) -> RelationStats {
    let mut stats = RelationStats {
        scene_count: 1,
        ..Default::default()
    };
    for inst in &scene.foregrounds {
        *stats.category_total.entry(inst.category_id).or_insert(0) += 1;
    }
    let obs = observe_scene(scene, cfg);
    // observations come grouped by subject, in foreground order
    let mut start = 0;
    while start < obs.len() {
        let s = (obs[start].subject_category, obs[start].subject_instance);
        let mut end = start;
        while end < obs.len() && (obs[end].subject_category, obs[end].subject_instance) == s {
            end += 1;
        }
        let group = &obs[start..end];
        for o in group {
            stats.relation_totals[o.relation.index()] += 1;
        }
        if group.iter().all(|o| o.relation == RelationType::None) {
            stats.excluded_instances += 1;
        } else {
            let mut seen: Vec<u32> = Vec::new();
            for o in group {
                let p = stats.pairs.entry((o.subject_category, o.object_category)).or_default();
                p.count += 1;
                p.relations[o.relation.index()] += 1;
                if !seen.contains(&o.object_category) {
                    seen.push(o.object_category);
                    p.subjects += 1;
                }
            }
        }
        start = end;
    }
    stats
}

/// Relation statistics over a corpus, one repository per scene.
pub fn collect_stats(scenes: &[SceneRepository], cfg: &ThresholdConfig) -> RelationStats {
    scenes
        .par_iter()
        .map(|s| scene_stats(s, cfg))
        .reduce(RelationStats::default, |mut a, b| {
            a.merge(&b);
            a
        })
}

#[derive(Serialize, Deserialize)]
struct PairRecord {
    cat_i: u32,
    cat_j: u32,
    count: u64,
    subjects: u64,
    counts: BTreeMap<RelationType, u64>,
    dist: BTreeMap<RelationType, f64>,
}

#[derive(Serialize, Deserialize)]
struct StatsFile {
    version: String,
    scene_count: usize,
    category_mean: BTreeMap<u32, f64>,
    category_total: BTreeMap<u32, u64>,
    relation_totals: BTreeMap<RelationType, u64>,
    excluded_instances: u64,
    pairs: Vec<PairRecord>,
}

impl From<&RelationStats> for StatsFile {
    fn from(s: &RelationStats) -> Self {
        let by_name = |v: &[u64; RelationType::COUNT]| {
            RelationType::ALL
                .iter()
                .filter(|r| v[r.index()] > 0)
                .map(|r| (*r, v[r.index()]))
                .collect()
        };
        Self {
            version: STATS_VERSION.into(),
            scene_count: s.scene_count,
            category_mean: s.category_mean(),
            category_total: s.category_total.clone(),
            relation_totals: RelationType::ALL.iter().map(|r| (*r, s.relation_totals[r.index()])).collect(),
            excluded_instances: s.excluded_instances,
            pairs: s
                .pairs
                .iter()
                .map(|(&(i, j), p)| {
                    let d = p.distribution();
                    PairRecord {
                        cat_i: i,
                        cat_j: j,
                        count: p.count,
                        subjects: p.subjects,
                        counts: by_name(&p.relations),
                        dist: RelationType::ALL
                            .iter()
                            .filter(|r| d[r.index()] > 0.0)
                            .map(|r| (*r, d[r.index()]))
                            .collect(),
                    }
                })
                .collect(),
        }
    }
}

impl TryFrom<StatsFile> for RelationStats {
    type Error = String;

    fn try_from(f: StatsFile) -> Result<Self, String> {
        let mut pairs = BTreeMap::new();
        for rec in f.pairs {
            let mut relations = [0; RelationType::COUNT];
            for (r, n) in rec.counts {
                relations[r.index()] = n;
            }
            if relations.iter().sum::<u64>() != rec.count {
                return Err(format!("pair ({}, {}) counts do not add up to {}", rec.cat_i, rec.cat_j, rec.count));
            }
            if pairs
                .insert(
                    (rec.cat_i, rec.cat_j),
                    PairStats {
                        count: rec.count,
                        subjects: rec.subjects,
                        relations,
                    },
                )
                .is_some()
            {
                return Err(format!("duplicate pair ({}, {})", rec.cat_i, rec.cat_j));
            }
        }
        let mut relation_totals = [0; RelationType::COUNT];
        for (r, n) in f.relation_totals {
            relation_totals[r.index()] = n;
        }
        Ok(Self {
            scene_count: f.scene_count,
            category_total: f.category_total,
            pairs,
            relation_totals,
            excluded_instances: f.excluded_instances,
        })
    }
}
