//! Batch commands over directories: decomposition, statistics, graph
//! sampling, scene synthesis and validation of synthesized scenes.
//!
//! Every JSON artifact is written atomically. Synthesized scenes are named
//! `scene_NNNNN.ply`, each with a `scene_NNNNN.json` sidecar, and the batch
//! gets a `summary.json`.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use log::{info, warn};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::decompose::{
    complete_instance, load_repository, partition_scene, BoundaryCompletionConfig, CategoryTaxonomy, DecomposeError,
    LabeledInstance, ObbRecord, Role, SceneRepository,
};
use crate::geometry::{OrientedBoundingBox, PointCloud, Pose};
use crate::io::{read_ply, write_atomic, write_ply, IoError, LabeledCloud, Precision};
use crate::layout::{graph_of_layout, LayoutState, PlacedInstance};
use crate::losses::{collision_loss, LossBreakdown, LossWeights};
use crate::optimize::{baked_object_ids, synthesize_scene, EncoderConfig, OptimizerConfig, SubstitutionPolicy, SynthesisConfig, SynthesizedScene};
use crate::org::{js_divergence, Anchors, GraphSamplingConfig, ObjectRelationshipGraph};
use crate::relations::{collect_stats, RelationStats, RelationType, ThresholdConfig};

pub const SIDECAR_VERSION: &str = "1";
pub const SUMMARY_VERSION: &str = "1";
pub const REPORT_VERSION: &str = "1";

/// Largest fraction of failed scenes a batch may have and still succeed.
pub const MAX_FAILURE_RATE: f64 = 0.1;

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("invalid config: {0}")]
    Config(String),
    #[error("{0}")]
    Input(String),
    #[error("relation statistics are empty: the repository has no foreground instances")]
    EmptyStats,
    #[error("scene {scene}: {source}")]
    Scene {
        scene: String,
        #[source]
        source: DecomposeError,
    },
    #[error(transparent)]
    Io(#[from] IoError),
    #[error(transparent)]
    Decompose(#[from] DecomposeError),
}

fn io_err(path: &Path, e: std::io::Error) -> IoError {
    IoError::Io {
        path: path.to_path_buf(),
        source: e,
    }
}

fn format_err(path: &Path, msg: impl Into<String>) -> IoError {
    IoError::Format {
        path: path.to_path_buf(),
        msg: msg.into(),
    }
}

/// Everything a pipeline run is configured by.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    /// Taxonomy JSON of the dataset.
    pub manifest: Option<PathBuf>,
    pub thresholds: ThresholdConfig,
    pub sampling: GraphSamplingConfig,
    pub weights: LossWeights,
    pub optimizer: OptimizerConfig,
    pub encoder: EncoderConfig,
    pub substitution: SubstitutionPolicy,
    pub completion: BoundaryCompletionConfig,
    /// Synthesized scenes per source scene in ratio mode.
    pub augmentation_ratio: f64,
    pub base_seed: u64,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            manifest: None,
            thresholds: ThresholdConfig::default(),
            sampling: GraphSamplingConfig::default(),
            weights: LossWeights::default(),
            optimizer: OptimizerConfig::default(),
            encoder: EncoderConfig::default(),
            substitution: SubstitutionPolicy::default(),
            completion: BoundaryCompletionConfig::default(),
            augmentation_ratio: 0.25,
            base_seed: 0,
        }
    }
}

impl PipelineConfig {
    pub fn from_json(text: &str) -> Result<Self, PipelineError> {
        let cfg: Self = serde_json::from_str(text).map_err(|e| PipelineError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, PipelineError> {
        let text = std::fs::read_to_string(path).map_err(|e| io_err(path, e))?;
        Self::from_json(&text).map_err(|e| match e {
            PipelineError::Config(m) => PipelineError::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    /// Applies `key=value` overrides, where `key` is a dotted path such as
    /// `optimizer.max_iters` and `value` is JSON (bare words are strings).
    pub fn with_overrides<S: AsRef<str>>(&self, sets: &[S]) -> Result<Self, PipelineError> {
        let mut v = serde_json::to_value(self).expect("config serializes");
        let mut applied = Vec::new();
        for s in sets {
            let s = s.as_ref();
            let (key, raw) = s
                .split_once('=')
                .ok_or_else(|| PipelineError::Config(format!("override {s:?} is not key=value")))?;
            let value = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()));
            let path: Vec<&str> = key.split('.').collect();
            set_path(&mut v, &path, value.clone()).map_err(PipelineError::Config)?;
            applied.push((key.to_string(), value));
        }
        let cfg: Self = serde_json::from_value(v).map_err(|e| PipelineError::Config(e.to_string()))?;
        let back = serde_json::to_value(&cfg).expect("config serializes");
        for (key, value) in applied {
            let got = key.split('.').try_fold(&back, |v, k| v.get(k));
            if !got.is_some_and(|g| same_value(g, &value)) {
                return Err(PipelineError::Config(format!("unknown config key {key:?}")));
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), PipelineError> {
        let bad = |m: String| Err(PipelineError::Config(m));
        if !(self.augmentation_ratio > 0.0 && self.augmentation_ratio.is_finite()) {
            return bad(format!("augmentation_ratio must be positive, got {}", self.augmentation_ratio));
        }
        self.thresholds.validate().or_else(|m| bad(format!("thresholds: {m}")))?;
        self.sampling.validate().or_else(|e| bad(e.to_string()))?;
        self.weights.validate().or_else(|m| bad(format!("weights: {m}")))?;
        self.optimizer.validate().or_else(|m| bad(format!("optimizer: {m}")))?;
        self.completion.validate().or_else(|m| bad(format!("completion: {m}")))?;
        Ok(())
    }

    pub fn synthesis(&self) -> SynthesisConfig {
        SynthesisConfig {
            thresholds: self.thresholds.clone(),
            sampling: self.sampling.clone(),
            weights: self.weights.clone(),
            optimizer: self.optimizer.clone(),
            encoder: self.encoder.clone(),
            substitution: self.substitution,
        }
    }

    /// SHA-256 of the compact JSON form, hex encoded.
    pub fn hash(&self) -> String {
        let bytes = serde_json::to_vec(self).expect("config serializes");
        hex::encode(Sha256::digest(&bytes))
    }

    /// Multiplies the sampling mean of the category named (or numbered)
    /// `name` by `factor`.
    pub fn boost(&mut self, taxonomy: &CategoryTaxonomy, name: &str, factor: f64) -> Result<(), PipelineError> {
        let id = taxonomy
            .id_of(name)
            .or_else(|| name.parse().ok().filter(|c| taxonomy.role(*c).is_some()))
            .ok_or_else(|| PipelineError::Config(format!("unknown category {name:?}")))?;
        self.sampling.gt_boost.insert(id, factor);
        self.sampling.validate().map_err(|e| PipelineError::Config(e.to_string()))
    }
}

fn set_path(v: &mut Value, path: &[&str], value: Value) -> Result<(), String> {
    let (last, parents) = path.split_last().expect("split yields one element");
    let mut at = v;
    for k in parents {
        at = at
            .get_mut(*k)
            .filter(|x| x.is_object())
            .ok_or_else(|| format!("unknown config key {:?}", path.join(".")))?;
    }
    match at {
        Value::Object(m) => {
            m.insert(last.to_string(), value);
            Ok(())
        }
        _ => Err(format!("unknown config key {:?}", path.join("."))),
    }
}

fn same_value(a: &Value, b: &Value) -> bool {
    match (a.as_f64(), b.as_f64()) {
        (Some(x), Some(y)) => x == y,
        _ => a == b,
    }
}

/// Parses `name=factor`.
pub fn parse_boost(s: &str) -> Result<(String, f64), PipelineError> {
    let (name, f) = s
        .split_once('=')
        .ok_or_else(|| PipelineError::Config(format!("boost {s:?} is not name=factor")))?;
    let f: f64 = f
        .parse()
        .map_err(|_| PipelineError::Config(format!("boost factor {f:?} is not a number")))?;
    Ok((name.to_string(), f))
}

/// Scenes to synthesize for `ratio` of a dataset of `scenes` scenes.
pub fn count_for_ratio(ratio: f64, scenes: usize) -> usize {
    (ratio * scenes as f64).round() as usize
}

fn write_json<T: Serialize>(path: &Path, v: &T) -> Result<(), IoError> {
    let mut text = serde_json::to_vec_pretty(v).expect("artifact serializes");
    text.push(b'\n');
    write_atomic(path, &text)
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T, IoError> {
    let text = std::fs::read(path).map_err(|e| io_err(path, e))?;
    serde_json::from_slice(&text).map_err(|e| format_err(path, e.to_string()))
}

fn check_version(path: &Path, got: &str, want: &str) -> Result<(), IoError> {
    if got == want {
        Ok(())
    } else {
        Err(format_err(path, format!("unsupported version {got:?}, expected \"{want}\"")))
    }
}

/// Instance totals of one decomposed scene.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneCounts {
    pub scene: String,
    pub floors: usize,
    pub backgrounds: usize,
    pub foregrounds: usize,
    /// Points added by boundary completion.
    pub completed_points: usize,
}

/// PLY files of a directory, sorted by name.
pub fn scene_files(dir: &Path) -> Result<Vec<PathBuf>, IoError> {
    let mut files: Vec<PathBuf> = std::fs::read_dir(dir)
        .map_err(|e| io_err(dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x.eq_ignore_ascii_case("ply")))
        .collect();
    files.sort();
    Ok(files)
}

/// Partitions every PLY scene of `input` and, when `completion` is given,
/// completes the floors and background of each against its scene.
/// Scenes are named after their file stems.
pub fn decompose_dataset(
    input: &Path,
    taxonomy: &CategoryTaxonomy,
    completion: Option<&BoundaryCompletionConfig>,
    seed: u64,
) -> Result<(SceneRepository, Vec<SceneCounts>), PipelineError> {
    let files = scene_files(input)?;
    if files.is_empty() {
        return Err(PipelineError::Input(format!("{}: no .ply scenes", input.display())));
    }
    let mut repo = SceneRepository::new(taxonomy.clone());
    let mut counts = Vec::new();
    let mut salt = seed;
    for file in files {
        let name = file.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
        let scene = read_ply(&file)?;
        let wrap = |source| PipelineError::Scene {
            scene: name.clone(),
            source,
        };
        let mut part = partition_scene(&scene, &name, taxonomy).map_err(wrap)?;
        let mut added = 0;
        if let Some(cfg) = completion {
            for inst in part.floors.iter_mut().chain(part.backgrounds.iter_mut()) {
                added += complete_instance(inst, &scene.cloud, cfg, salt).map_err(wrap)?;
                salt = salt.wrapping_add(1);
            }
        }
        let c = SceneCounts {
            scene: name,
            floors: part.floors.len(),
            backgrounds: part.backgrounds.len(),
            foregrounds: part.foregrounds.len(),
            completed_points: added,
        };
        info!(
            "{}: {} floor, {} background, {} foreground instances, {} points completed",
            c.scene, c.floors, c.backgrounds, c.foregrounds, c.completed_points
        );
        counts.push(c);
        repo.merge(part);
    }
    Ok((repo, counts))
}

/// Statistics over each source scene of `repo`.
pub fn repository_stats(repo: &SceneRepository, thresholds: &ThresholdConfig) -> Result<RelationStats, PipelineError> {
    let stats = collect_stats(&repo.split_by_scene(), thresholds);
    if stats.is_empty() {
        return Err(PipelineError::EmptyStats);
    }
    Ok(stats)
}

/// Loads a repository directory, with IO problems reported against the
/// offending file.
pub fn open_repository(dir: &Path) -> Result<SceneRepository, PipelineError> {
    load_repository(dir).map_err(|e| match e {
        DecomposeError::Io(io) => PipelineError::Io(io),
        other => PipelineError::Decompose(other),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StaticRecord {
    pub category: u32,
    pub instance: i32,
    pub role: Role,
    pub obb: ObbRecord,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObjectRecord {
    pub category: u32,
    /// Instance id of the object's points in the scene file.
    pub instance: i32,
    pub source_scene: String,
    pub source_instance: i32,
    /// Box of the object where it was cut out.
    pub source_obb: ObbRecord,
    pub pose: Pose,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceSummary {
    pub initial: Option<LossBreakdown>,
    #[serde(rename = "final")]
    pub last: LossBreakdown,
    pub accepted_sweeps: usize,
    pub iterations_used: usize,
    pub converged: bool,
}

/// Everything needed to rebuild the layout of a synthesized scene.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneSidecar {
    pub version: String,
    pub scene_file: String,
    pub seed: u64,
    pub config_hash: String,
    pub anchors: Anchors,
    pub statics: Vec<StaticRecord>,
    pub objects: Vec<ObjectRecord>,
    /// Target node id to index into `objects`.
    pub binding: BTreeMap<usize, usize>,
    pub target: Value,
    pub realized: Value,
    pub losses: TraceSummary,
}

impl SceneSidecar {
    pub fn new(scene_file: &str, layout: &LayoutState, target: &ObjectRelationshipGraph, realized: &ObjectRelationshipGraph, losses: TraceSummary, seed: u64, config_hash: &str) -> Self {
        let statics = layout
            .floors
            .iter()
            .map(|s| (Role::Floor, s))
            .chain(layout.background.iter().map(|s| (Role::Background, s)))
            .map(|(role, s)| StaticRecord {
                category: s.category_id,
                instance: s.instance_id,
                role,
                obb: (&s.obb).into(),
            })
            .collect();
        let objects = layout
            .dynamics
            .iter()
            .zip(baked_object_ids(layout))
            .map(|(d, id)| ObjectRecord {
                category: d.category(),
                instance: id,
                source_scene: d.instance.source_scene.clone(),
                source_instance: d.instance.instance_id,
                source_obb: (&d.instance.obb).into(),
                pose: d.pose,
            })
            .collect();
        Self {
            version: SIDECAR_VERSION.into(),
            scene_file: scene_file.into(),
            seed,
            config_hash: config_hash.into(),
            anchors: layout.anchors,
            statics,
            objects,
            binding: layout.binding.clone(),
            target: target.to_value(),
            realized: realized.to_value(),
            losses,
        }
    }

    pub fn load(path: &Path) -> Result<Self, IoError> {
        let s: Self = read_json(path)?;
        check_version(path, &s.version, SIDECAR_VERSION)?;
        Ok(s)
    }

    /// The layout with boxes and poses only; instance clouds are empty.
    pub fn layout(&self) -> LayoutState {
        let stub = |category, instance, obb: &ObbRecord, scene: &str| LabeledInstance {
            instance_id: instance,
            category_id: category,
            cloud: PointCloud::default(),
            obb: obb.into(),
            source_scene: scene.into(),
        };
        let mut l = LayoutState::new(Vec::new(), Vec::new(), self.anchors);
        for s in &self.statics {
            let inst = stub(s.category, s.instance, &s.obb, "");
            match s.role {
                Role::Floor => l.floors.push(inst),
                _ => l.background.push(inst),
            }
        }
        for o in &self.objects {
            l.dynamics.push(PlacedInstance {
                instance: stub(o.category, o.source_instance, &o.source_obb, &o.source_scene),
                pose: o.pose,
            });
        }
        l.binding = self.binding.clone();
        l
    }
}

fn trace_summary(s: &SynthesizedScene) -> TraceSummary {
    let r = &s.result;
    TraceSummary {
        initial: r.loss_trace.first().copied(),
        last: *r.final_loss(),
        accepted_sweeps: r.loss_trace.len().saturating_sub(1),
        iterations_used: r.iterations_used,
        converged: r.converged,
    }
}

/// Outcome of one scene of a batch.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneEntry {
    pub index: usize,
    pub seed: u64,
    pub scene_file: Option<String>,
    pub converged: bool,
    pub objects: usize,
    pub loss: Option<LossBreakdown>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchSummary {
    pub version: String,
    pub config_hash: String,
    pub config: PipelineConfig,
    pub base_seed: u64,
    pub requested: usize,
    pub written: usize,
    pub failed: usize,
    pub not_converged: usize,
    /// Mean final losses over written scenes.
    pub mean_loss: LossBreakdown,
    /// Foreground category distribution of the source dataset.
    pub dataset_distribution: BTreeMap<u32, f64>,
    pub scenes: Vec<SceneEntry>,
}

impl BatchSummary {
    pub fn load(path: &Path) -> Result<Self, IoError> {
        let s: Self = read_json(path)?;
        check_version(path, &s.version, SUMMARY_VERSION)?;
        Ok(s)
    }

    /// More than [`MAX_FAILURE_RATE`] of the requested scenes failed.
    pub fn failed_batch(&self) -> bool {
        self.failed as f64 > MAX_FAILURE_RATE * self.requested as f64
    }
}

pub fn scene_name(index: usize) -> String {
    format!("scene_{index:05}")
}

fn distribution(stats: &RelationStats) -> BTreeMap<u32, f64> {
    let total: u64 = stats.category_total.values().sum();
    stats
        .category_total
        .iter()
        .filter(|(_, n)| **n > 0)
        .map(|(c, n)| (*c, *n as f64 / total as f64))
        .collect()
}

/// Synthesizes `count` scenes into `out`, scene `k` seeded with
/// `cfg.base_seed + k`, on `jobs` worker threads (0 uses every core).
///
/// Failed scenes are logged and listed in the summary, which is written
/// last.
pub fn synthesize_batch(
    repo: &SceneRepository,
    stats: &RelationStats,
    cfg: &PipelineConfig,
    count: usize,
    jobs: usize,
    out: &Path,
) -> Result<BatchSummary, PipelineError> {
    cfg.validate()?;
    std::fs::create_dir_all(out).map_err(|e| io_err(out, e))?;
    let synthesis = cfg.synthesis();
    let hash = cfg.hash();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| PipelineError::Config(e.to_string()))?;
    let run = |k: usize| -> Result<SceneEntry, IoError> {
        let seed = cfg.base_seed.wrapping_add(k as u64);
        let name = scene_name(k);
        let mut entry = SceneEntry {
            index: k,
            seed,
            scene_file: None,
            converged: false,
            objects: 0,
            loss: None,
            error: None,
        };
        let s = match synthesize_scene(stats, repo, &synthesis, seed) {
            Ok(s) => s,
            Err(e) => {
                warn!("{name} (seed {seed}) failed: {e}");
                entry.error = Some(e.to_string());
                return Ok(entry);
            }
        };
        let file = format!("{name}.ply");
        write_ply(&out.join(&file), &s.cloud, Precision::F64)?;
        let summary = trace_summary(&s);
        let sidecar = SceneSidecar::new(&file, &s.result.final_layout, &s.target, &s.realized, summary.clone(), seed, &hash);
        write_json(&out.join(format!("{name}.json")), &sidecar)?;
        if !summary.converged {
            info!("{name} stopped at loss {:.3e} without converging", summary.last.total);
        }
        entry.scene_file = Some(file);
        entry.converged = summary.converged;
        entry.objects = s.result.final_layout.dynamics.len();
        entry.loss = Some(summary.last);
        Ok(entry)
    };
    let scenes = pool.install(|| (0..count).into_par_iter().map(run).collect::<Result<Vec<_>, _>>())?;
    let ok: Vec<&LossBreakdown> = scenes.iter().filter_map(|s| s.loss.as_ref()).collect();
    let mut mean = LossBreakdown::default();
    if !ok.is_empty() {
        let n = ok.len() as f64;
        mean.collision = ok.iter().map(|l| l.collision).sum::<f64>() / n;
        mean.alignment = ok.iter().map(|l| l.alignment).sum::<f64>() / n;
        mean.semantic = ok.iter().map(|l| l.semantic).sum::<f64>() / n;
        mean.topology = ok.iter().map(|l| l.topology).sum::<f64>() / n;
        mean.total = ok.iter().map(|l| l.total).sum::<f64>() / n;
    }
    let summary = BatchSummary {
        version: SUMMARY_VERSION.into(),
        config_hash: hash,
        config: cfg.clone(),
        base_seed: cfg.base_seed,
        requested: count,
        written: ok.len(),
        failed: count - ok.len(),
        not_converged: scenes.iter().filter(|s| s.loss.is_some() && !s.converged).count(),
        mean_loss: mean,
        dataset_distribution: distribution(stats),
        scenes,
    };
    write_json(&out.join("summary.json"), &summary)?;
    Ok(summary)
}

/// Writes `count` sampled target graphs as `graph_NNNNN.json`, graph `k`
/// seeded with `sampling.rng_seed + k`.
pub fn write_sampled_graphs(
    stats: &RelationStats,
    anchors: &Anchors,
    sampling: &GraphSamplingConfig,
    count: usize,
    out: &Path,
) -> Result<Vec<ObjectRelationshipGraph>, PipelineError> {
    if stats.is_empty() {
        return Err(PipelineError::EmptyStats);
    }
    std::fs::create_dir_all(out).map_err(|e| io_err(out, e))?;
    let graphs = crate::org::sample_graphs(stats, anchors, sampling, count);
    for (k, g) in graphs.iter().enumerate() {
        g.save(&out.join(format!("graph_{k:05}.json")))?;
    }
    Ok(graphs)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneValidation {
    pub scene_file: String,
    pub seed: u64,
    pub config_hash: String,
    /// Final losses recorded at synthesis time.
    pub recorded: LossBreakdown,
    pub converged: bool,
    /// Collision loss of the rebuilt layout.
    pub collision: f64,
    /// Fraction of target relations the realized graph carries.
    pub satisfaction: f64,
    /// The rebuilt layout's graph equals the recorded realized graph.
    pub reproduced: bool,
    pub mismatches: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub version: String,
    pub scenes: Vec<SceneValidation>,
    /// Objects per category over every scene.
    pub category_histogram: BTreeMap<u32, usize>,
    /// Between the histogram and the dataset distribution, when the
    /// batch summary is present.
    pub js_divergence: Option<f64>,
    /// Per relation: fraction of target edges realized.
    pub edge_realization: BTreeMap<String, f64>,
    pub mismatched_scenes: usize,
}

impl ValidationReport {
    pub fn all_consistent(&self) -> bool {
        self.mismatched_scenes == 0
    }
}

/// Tolerance on points lying inside their posed box, meters.
const POINT_SLACK: f64 = 1e-6;

fn inside(b: &OrientedBoundingBox, p: &crate::geometry::Vec3, slack: f64) -> bool {
    let d = p - b.center;
    (0..3).all(|i| d.dot(&b.axes[i]).abs() <= b.half_extents[i] + slack)
}

struct EdgeTally {
    total: [usize; RelationType::COUNT],
    hit: [usize; RelationType::COUNT],
}

fn satisfaction(target: &ObjectRelationshipGraph, realized: &ObjectRelationshipGraph, layout: &LayoutState, tally: &mut EdgeTally) -> f64 {
    let first = layout.anchors.count();
    let node = |t: usize| {
        if t < first {
            Some(t)
        } else {
            layout.binding.get(&t).map(|k| first + k)
        }
    };
    let (mut n, mut hit) = (0, 0);
    for e in target.edges.iter().filter(|e| e.relation != RelationType::None) {
        n += 1;
        tally.total[e.relation.index()] += 1;
        let ok = match (node(e.src), node(e.dst)) {
            (Some(s), Some(d)) => realized.relation(s, d) == e.relation,
            _ => false,
        };
        if ok {
            hit += 1;
            tally.hit[e.relation.index()] += 1;
        }
    }
    if n == 0 {
        1.0
    } else {
        hit as f64 / n as f64
    }
}

/// Checks one scene against its sidecar: the realized graph must follow from
/// the recorded poses, and every object's points must sit inside its posed
/// box with its category label.
pub fn validate_scene(sidecar: &SceneSidecar, scene: &LabeledCloud, thresholds: &ThresholdConfig, weights: &LossWeights, sidecar_path: &Path) -> Result<SceneValidation, IoError> {
    let target = ObjectRelationshipGraph::from_value(sidecar.target.clone(), sidecar_path)?;
    let recorded = ObjectRelationshipGraph::from_value(sidecar.realized.clone(), sidecar_path)?;
    let layout = sidecar.layout();
    let realized = graph_of_layout(&layout, thresholds);
    let mut mismatches = Vec::new();
    let reproduced = realized == recorded;
    if !reproduced {
        let diff = realized.edge_set().symmetric_difference(&recorded.edge_set()).count();
        mismatches.push(format!("realized graph differs from the recorded one in {diff} edges"));
    }
    let mut points: BTreeMap<i32, Vec<usize>> = BTreeMap::new();
    for (i, id) in scene.instances.iter().enumerate() {
        points.entry(*id).or_default().push(i);
    }
    for (k, (o, d)) in sidecar.objects.iter().zip(&layout.dynamics).enumerate() {
        let b = d.obb();
        let idx = points.get(&o.instance).map(Vec::as_slice).unwrap_or(&[]);
        if idx.is_empty() {
            mismatches.push(format!("object {k}: no points with instance id {}", o.instance));
            continue;
        }
        let slack = POINT_SLACK * (1.0 + b.half_extents.max());
        let outside = idx.iter().filter(|&&i| !inside(&b, &scene.cloud.points[i], slack)).count();
        if outside > 0 {
            mismatches.push(format!("object {k}: {outside} of {} points lie outside the posed box", idx.len()));
        }
        if idx.iter().any(|&i| scene.labels[i] != o.category as i32) {
            mismatches.push(format!("object {k}: points carry a label other than {}", o.category));
        }
    }
    let mut tally = EdgeTally {
        total: [0; RelationType::COUNT],
        hit: [0; RelationType::COUNT],
    };
    let sat = satisfaction(&target, &realized, &layout, &mut tally);
    Ok(SceneValidation {
        scene_file: sidecar.scene_file.clone(),
        seed: sidecar.seed,
        config_hash: sidecar.config_hash.clone(),
        recorded: sidecar.losses.last,
        converged: sidecar.losses.converged,
        collision: collision_loss(&layout, weights.background_collision),
        satisfaction: sat,
        reproduced,
        mismatches,
    })
}

/// Validates every `scene_*.json` sidecar in `dir` against its scene file.
pub fn validate_dir(dir: &Path, thresholds: &ThresholdConfig, weights: &LossWeights) -> Result<ValidationReport, PipelineError> {
    let mut sidecars: Vec<PathBuf> = std::fs::read_dir(dir)
        .map_err(|e| io_err(dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            p.extension().is_some_and(|x| x == "json")
                && p.file_name().is_some_and(|n| n.to_string_lossy().starts_with("scene_"))
        })
        .collect();
    sidecars.sort();
    let summary_path = dir.join("summary.json");
    let summary = if summary_path.exists() {
        Some(BatchSummary::load(&summary_path)?)
    } else {
        None
    };
    let mut tally = EdgeTally {
        total: [0; RelationType::COUNT],
        hit: [0; RelationType::COUNT],
    };
    let mut scenes = Vec::new();
    let mut histogram: BTreeMap<u32, usize> = BTreeMap::new();
    for path in sidecars {
        let sidecar = SceneSidecar::load(&path)?;
        let cloud = read_ply(&dir.join(&sidecar.scene_file))?;
        let v = validate_scene(&sidecar, &cloud, thresholds, weights, &path)?;
        let target = ObjectRelationshipGraph::from_value(sidecar.target.clone(), &path)?;
        let layout = sidecar.layout();
        satisfaction(&target, &graph_of_layout(&layout, thresholds), &layout, &mut tally);
        for o in &sidecar.objects {
            *histogram.entry(o.category).or_insert(0) += 1;
        }
        if !v.mismatches.is_empty() {
            warn!("{}: {}", v.scene_file, v.mismatches.join("; "));
        }
        scenes.push(v);
    }
    let js = summary.as_ref().and_then(|s| {
        let total: usize = histogram.values().sum();
        if total == 0 || s.dataset_distribution.is_empty() {
            return None;
        }
        let mut cats: Vec<u32> = histogram.keys().chain(s.dataset_distribution.keys()).copied().collect();
        cats.sort_unstable();
        cats.dedup();
        let p: Vec<f64> = cats.iter().map(|c| *histogram.get(c).unwrap_or(&0) as f64 / total as f64).collect();
        let q: Vec<f64> = cats.iter().map(|c| *s.dataset_distribution.get(c).unwrap_or(&0.0)).collect();
        js_divergence(&p, &q).ok()
    });
    let edge_realization = RelationType::PRIORITY
        .iter()
        .filter(|r| tally.total[r.index()] > 0)
        .map(|r| (r.name().to_string(), tally.hit[r.index()] as f64 / tally.total[r.index()] as f64))
        .collect();
    let mismatched_scenes = scenes.iter().filter(|s| !s.mismatches.is_empty()).count();
    Ok(ValidationReport {
        version: REPORT_VERSION.into(),
        scenes,
        category_histogram: histogram,
        js_divergence: js,
        edge_realization,
        mismatched_scenes,
    })
}

pub fn save_report(report: &ValidationReport, path: &Path) -> Result<(), IoError> {
    write_json(path, report)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn overrides_reach_nested_keys() {
        let c = PipelineConfig::default()
            .with_overrides(&["optimizer.max_iters=7", "weights.total.lambda_topo=0", "substitution=strict"])
            .unwrap();
        assert_eq!(c.optimizer.max_iters, 7);
        assert_eq!(c.weights.total.lambda_topo, 0.0);
        assert_eq!(c.substitution, SubstitutionPolicy::Strict);
    }

    #[test]
    fn unknown_keys_and_bad_values_are_rejected() {
        let d = PipelineConfig::default();
        assert!(d.with_overrides(&["optimizer.max_iter=7"]).is_err());
        assert!(d.with_overrides(&["nope.x=1"]).is_err());
        assert!(d.with_overrides(&["augmentation_ratio=0"]).is_err());
        assert!(d.with_overrides(&["optimizer.step_decay=1.5"]).is_err());
        assert!(d.with_overrides(&["no_equals"]).is_err());
        assert!(PipelineConfig::from_json(r#"{"bogus": 1}"#).is_err());
    }

    #[test]
    fn boost_map_accepts_new_keys() {
        let c = PipelineConfig::default().with_overrides(&["sampling.gt_boost.9=3"]).unwrap();
        assert_eq!(c.sampling.gt_boost.get(&9), Some(&3.0));
    }

    #[test]
    fn hash_tracks_content() {
        let a = PipelineConfig::default();
        let b = a.with_overrides(&["base_seed=1"]).unwrap();
        assert_eq!(a.hash(), PipelineConfig::default().hash());
        assert_ne!(a.hash(), b.hash());
        assert_eq!(a.hash().len(), 64);
    }

    #[test]
    fn ratio_counts() {
        assert_eq!(count_for_ratio(0.25, 204), 51);
        assert_eq!(count_for_ratio(1.0, 3), 3);
        assert_eq!(parse_boost("picture=3").unwrap(), ("picture".into(), 3.0));
        assert!(parse_boost("picture").is_err());
    }
}
