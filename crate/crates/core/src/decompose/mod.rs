//! Scene decomposition into floor, background and foreground instance pools,
//! plus boundary completion for the static structure.

mod poisson;
mod store;

pub use poisson::{poisson_complete, poisson_complete_traced, solve_grid, SolveTrace, VoxelGrid, SOURCE_GAIN};
pub use store::{load_repository, save_repository, ObbRecord, REPOSITORY_VERSION};

use std::collections::BTreeMap;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{compute_obb, estimate_normals, GeometryError, OrientedBoundingBox, PointCloud, SpatialIndex, Vec3};
use crate::io::{IoError, LabeledCloud};

#[derive(Debug, Error)]
pub enum DecomposeError {
    #[error("label {0} is not in the taxonomy")]
    UnknownCategory(i32),
    #[error("boundary point set is empty")]
    EmptyBoundary,
    #[error("point cloud has no normals")]
    MissingNormals,
    #[error("Poisson solve stalled at relative residual {residual:e} (tolerance {tolerance:e})")]
    SolverDiverged { residual: f64, tolerance: f64 },
    #[error("voxel grid of {0} cells is too large")]
    GridTooLarge(usize),
    #[error("invalid taxonomy: {0}")]
    InvalidTaxonomy(String),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Io(#[from] IoError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    Floor,
    Background,
    Foreground,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CategoryInfo {
    pub id: u32,
    pub name: String,
    pub role: Role,
}

/// Dataset manifest: which label ids exist and what role each plays.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "Manifest", into = "Manifest")]
pub struct CategoryTaxonomy {
    pub dataset_name: String,
    pub categories: BTreeMap<u32, CategoryInfo>,
}

#[derive(Serialize, Deserialize)]
struct Manifest {
    dataset: String,
    categories: Vec<CategoryInfo>,
}

impl TryFrom<Manifest> for CategoryTaxonomy {
    type Error = String;

    fn try_from(m: Manifest) -> Result<Self, String> {
        let mut categories = BTreeMap::new();
        for c in m.categories {
            let id = c.id;
            if categories.insert(id, c).is_some() {
                return Err(format!("category id {id} listed twice"));
            }
        }
        Ok(CategoryTaxonomy {
            dataset_name: m.dataset,
            categories,
        })
    }
}

impl From<CategoryTaxonomy> for Manifest {
    fn from(t: CategoryTaxonomy) -> Self {
        Manifest {
            dataset: t.dataset_name,
            categories: t.categories.into_values().collect(),
        }
    }
}

impl CategoryTaxonomy {
    pub fn new(dataset_name: &str, entries: &[(u32, &str, Role)]) -> Self {
        Self {
            dataset_name: dataset_name.to_string(),
            categories: entries
                .iter()
                .map(|&(id, name, role)| {
                    (
                        id,
                        CategoryInfo {
                            id,
                            name: name.to_string(),
                            role,
                        },
                    )
                })
                .collect(),
        }
    }

    pub fn from_json(text: &str) -> Result<Self, DecomposeError> {
        serde_json::from_str(text).map_err(|e| DecomposeError::InvalidTaxonomy(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self, DecomposeError> {
        let text = std::fs::read_to_string(path).map_err(|e| IoError::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| IoError::format(path, e.to_string()).into())
    }

    pub fn role(&self, id: u32) -> Option<Role> {
        self.categories.get(&id).map(|c| c.role)
    }

    pub fn name(&self, id: u32) -> Option<&str> {
        self.categories.get(&id).map(|c| c.name.as_str())
    }

    pub fn id_of(&self, name: &str) -> Option<u32> {
        self.categories
            .values()
            .find(|c| c.name.eq_ignore_ascii_case(name))
            .map(|c| c.id)
    }

    pub fn with_role(&self, role: Role) -> impl Iterator<Item = u32> + '_ {
        self.categories.values().filter(move |c| c.role == role).map(|c| c.id)
    }

    /// The floor anchor category: the lowest floor-role id.
    pub fn floor_category(&self) -> Option<u32> {
        self.with_role(Role::Floor).next()
    }

    /// The wall anchor category: a background category named `wall`, else
    /// the lowest background id.
    pub fn wall_category(&self) -> Option<u32> {
        self.categories
            .values()
            .find(|c| c.role == Role::Background && c.name.eq_ignore_ascii_case("wall"))
            .map(|c| c.id)
            .or_else(|| self.with_role(Role::Background).next())
    }
}

/// One object (or floor / wall piece) cut out of a scene.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledInstance {
    pub instance_id: i32,
    pub category_id: u32,
    pub cloud: PointCloud,
    pub obb: OrientedBoundingBox,
    pub source_scene: String,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct SceneRepository {
    pub taxonomy: CategoryTaxonomy,
    pub floors: Vec<LabeledInstance>,
    pub backgrounds: Vec<LabeledInstance>,
    pub foregrounds: Vec<LabeledInstance>,
}

impl SceneRepository {
    pub fn new(taxonomy: CategoryTaxonomy) -> Self {
        Self {
            taxonomy,
            ..Default::default()
        }
    }

    pub fn len(&self) -> usize {
        self.floors.len() + self.backgrounds.len() + self.foregrounds.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn list(&self, role: Role) -> &[LabeledInstance] {
        match role {
            Role::Floor => &self.floors,
            Role::Background => &self.backgrounds,
            Role::Foreground => &self.foregrounds,
        }
    }

    fn list_mut(&mut self, role: Role) -> &mut Vec<LabeledInstance> {
        match role {
            Role::Floor => &mut self.floors,
            Role::Background => &mut self.backgrounds,
            Role::Foreground => &mut self.foregrounds,
        }
    }

    /// All instances with their roles, floors first.
    pub fn iter(&self) -> impl Iterator<Item = (Role, &LabeledInstance)> {
        self.floors
            .iter()
            .map(|i| (Role::Floor, i))
            .chain(self.backgrounds.iter().map(|i| (Role::Background, i)))
            .chain(self.foregrounds.iter().map(|i| (Role::Foreground, i)))
    }

    pub fn push(&mut self, role: Role, inst: LabeledInstance) {
        self.list_mut(role).push(inst);
    }

    pub fn merge(&mut self, other: SceneRepository) {
        if self.taxonomy.categories.is_empty() {
            self.taxonomy = other.taxonomy;
        }
        self.floors.extend(other.floors);
        self.backgrounds.extend(other.backgrounds);
        self.foregrounds.extend(other.foregrounds);
    }

    /// One repository per source scene, ordered by scene name.
    pub fn split_by_scene(&self) -> Vec<SceneRepository> {
        let mut by: BTreeMap<&str, SceneRepository> = BTreeMap::new();
        for (role, inst) in self.iter() {
            by.entry(inst.source_scene.as_str())
                .or_insert_with(|| SceneRepository::new(self.taxonomy.clone()))
                .push(role, inst.clone());
        }
        by.into_values().collect()
    }

    pub fn scene_names(&self) -> Vec<String> {
        let mut names: Vec<String> = self.iter().map(|(_, i)| i.source_scene.clone()).collect();
        names.sort();
        names.dedup();
        names
    }
}

/// Groups the points of a labeled scene by (label, instance) and files each
/// group under its category's role.
pub fn partition_scene(
    scene: &LabeledCloud,
    scene_id: &str,
    taxonomy: &CategoryTaxonomy,
) -> Result<SceneRepository, DecomposeError> {
    let mut groups: BTreeMap<(u32, i32), Vec<usize>> = BTreeMap::new();
    for (i, (&label, &inst)) in scene.labels.iter().zip(&scene.instances).enumerate() {
        let cat = u32::try_from(label).map_err(|_| DecomposeError::UnknownCategory(label))?;
        if taxonomy.role(cat).is_none() {
            return Err(DecomposeError::UnknownCategory(label));
        }
        groups.entry((cat, inst)).or_default().push(i);
    }
    let mut repo = SceneRepository::new(taxonomy.clone());
    for ((cat, inst), idx) in groups {
        let cloud = scene.cloud.select(&idx);
        let obb = instance_obb(&cloud)?;
        let role = taxonomy.role(cat).expect("checked above");
        repo.push(
            role,
            LabeledInstance {
                instance_id: inst,
                category_id: cat,
                cloud,
                obb,
                source_scene: scene_id.to_string(),
            },
        );
    }
    Ok(repo)
}

/// PCA box, or an axis-aligned one for clouds too thin to orient.
pub fn instance_obb(cloud: &PointCloud) -> Result<OrientedBoundingBox, DecomposeError> {
    match compute_obb(cloud) {
        Ok(b) => Ok(b),
        Err(GeometryError::DegenerateCloud { .. }) => Ok(crate::geometry::aabb_of(cloud)?),
        Err(e) => Err(e.into()),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BoundaryCompletionConfig {
    /// Distance threshold for fake-boundary points, meters.
    pub mu: f64,
    /// Normal angle threshold, radians.
    pub theta_max: f64,
    pub voxel_size: f64,
    pub cg_tolerance: f64,
    pub cg_max_iters: usize,
    /// Perturbation standard deviation, meters.
    pub sigma: f64,
}

impl Default for BoundaryCompletionConfig {
    fn default() -> Self {
        Self {
            mu: 0.05,
            theta_max: 20f64.to_radians(),
            voxel_size: 0.05,
            cg_tolerance: 1e-6,
            cg_max_iters: 5000,
            sigma: 0.005,
        }
    }
}

impl BoundaryCompletionConfig {
    pub fn validate(&self) -> Result<(), String> {
        let positive = [
            ("mu", self.mu),
            ("theta_max", self.theta_max),
            ("voxel_size", self.voxel_size),
            ("cg_tolerance", self.cg_tolerance),
            ("sigma", self.sigma),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(format!("{name} must be positive"));
            }
        }
        if self.theta_max >= std::f64::consts::FRAC_PI_2 {
            return Err("theta_max must be below π/2".into());
        }
        if self.cg_max_iters == 0 {
            return Err("cg_max_iters must be at least 1".into());
        }
        Ok(())
    }
}

/// Indices of raw points within `mu` of the boundary whose normal is within
/// `theta_max` of the nearest boundary point's normal.
pub fn fake_boundary_indices(
    raw: &PointCloud,
    gt_boundary: &PointCloud,
    cfg: &BoundaryCompletionConfig,
) -> Result<Vec<usize>, DecomposeError> {
    if gt_boundary.is_empty() {
        return Err(DecomposeError::EmptyBoundary);
    }
    let raw_n = raw.normals.as_ref().ok_or(DecomposeError::MissingNormals)?;
    let gt_n = gt_boundary.normals.as_ref().ok_or(DecomposeError::MissingNormals)?;
    let index = SpatialIndex::build(&gt_boundary.points);
    let cos_max = cfg.theta_max.cos();
    Ok(raw
        .points
        .iter()
        .zip(raw_n)
        .enumerate()
        .filter_map(|(i, (p, n))| {
            let (j, d) = index.nearest(p)?;
            let cos = n.dot(&gt_n[j]) / (n.norm() * gt_n[j].norm());
            (d < cfg.mu && cos > cos_max).then_some(i)
        })
        .collect())
}

pub fn find_fake_boundary(
    raw: &PointCloud,
    gt_boundary: &PointCloud,
    cfg: &BoundaryCompletionConfig,
) -> Result<PointCloud, DecomposeError> {
    Ok(raw.select(&fake_boundary_indices(raw, gt_boundary, cfg)?))
}

/// Adds independent `N(0, sigma²)` noise to every coordinate.
pub fn perturb(cloud: &PointCloud, sigma: f64, rng_seed: u64) -> PointCloud {
    let mut out = cloud.clone();
    if sigma <= 0.0 {
        return out;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    let noise = Normal::new(0.0, sigma).expect("sigma is positive and finite");
    for p in &mut out.points {
        for v in p.iter_mut() {
            *v += noise.sample(&mut rng);
        }
    }
    out
}

/// Completes one static instance (floor or wall piece) against its scene.
///
/// Fake-boundary points are gathered from `scene`, the result is Poisson
/// completed, and only reconstructed points farther than half a voxel from
/// the original instance are kept, perturbed and appended. Returns the
/// number of points added.
pub fn complete_instance(
    inst: &mut LabeledInstance,
    scene: &PointCloud,
    cfg: &BoundaryCompletionConfig,
    rng_seed: u64,
) -> Result<usize, DecomposeError> {
    if inst.cloud.is_empty() {
        return Err(DecomposeError::EmptyBoundary);
    }
    let toward = scene.centroid().unwrap_or(Vec3::zeros());
    let scene_n;
    let scene = if scene.normals.is_some() {
        scene
    } else {
        scene_n = PointCloud::with_normals(scene.points.clone(), estimate_normals(&scene.points, 16, toward));
        &scene_n
    };
    if inst.cloud.normals.is_none() {
        inst.cloud.normals = Some(estimate_normals(&inst.cloud.points, 16, toward));
    }
    let coarse = find_fake_boundary(scene, &inst.cloud, cfg)?;
    let coarse = if coarse.is_empty() { inst.cloud.clone() } else { coarse };
    let filled = poisson_complete(&coarse, cfg)?;
    let index = SpatialIndex::build(&inst.cloud.points);
    let keep: Vec<usize> = filled
        .points
        .iter()
        .enumerate()
        .filter(|(_, p)| index.nearest(p).is_some_and(|(_, d)| d > 0.5 * cfg.voxel_size))
        .map(|(i, _)| i)
        .collect();
    let mut added = perturb(&filled.select(&keep), cfg.sigma, rng_seed);
    if let Some(colors) = &inst.cloud.colors {
        added.colors = Some(
            added
                .points
                .iter()
                .map(|p| index.nearest(p).map_or([0, 0, 0], |(j, _)| colors[j]))
                .collect(),
        );
    }
    let n = added.len();
    inst.cloud.extend(&added);
    inst.obb = instance_obb(&inst.cloud)?;
    Ok(n)
}
