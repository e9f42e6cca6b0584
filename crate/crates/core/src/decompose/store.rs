//! On-disk repository: `index.json` plus one PLY file per instance.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{CategoryTaxonomy, DecomposeError, LabeledInstance, Role, SceneRepository};
use crate::geometry::{OrientedBoundingBox, Vec3};
use crate::io::{read_ply, write_atomic, write_ply, IoError, LabeledCloud, Precision};

pub const REPOSITORY_VERSION: &str = "1";

/// Serialized form of an [`OrientedBoundingBox`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObbRecord {
    pub center: [f64; 3],
    pub half_extents: [f64; 3],
    /// One axis per row.
    pub axes: [[f64; 3]; 3],
    pub front: [f64; 3],
    pub up_normal: [f64; 3],
}

fn arr(v: &Vec3) -> [f64; 3] {
    [v.x, v.y, v.z]
}

fn vec(a: &[f64; 3]) -> Vec3 {
    Vec3::new(a[0], a[1], a[2])
}

impl From<&OrientedBoundingBox> for ObbRecord {
    fn from(b: &OrientedBoundingBox) -> Self {
        Self {
            center: arr(&b.center),
            half_extents: arr(&b.half_extents),
            axes: b.axes.map(|a| arr(&a)),
            front: arr(&b.front),
            up_normal: arr(&b.up_normal),
        }
    }
}

impl From<&ObbRecord> for OrientedBoundingBox {
    fn from(r: &ObbRecord) -> Self {
        OrientedBoundingBox {
            center: vec(&r.center),
            half_extents: vec(&r.half_extents),
            axes: r.axes.map(|a| vec(&a)),
            front: vec(&r.front),
            up_normal: vec(&r.up_normal),
        }
    }
}

#[derive(Serialize, Deserialize)]
struct InstanceRecord {
    id: usize,
    instance_id: i32,
    category: u32,
    role: Role,
    source_scene: String,
    file: String,
    points: usize,
    obb: ObbRecord,
}

#[derive(Serialize, Deserialize)]
struct Index {
    version: String,
    taxonomy: CategoryTaxonomy,
    instances: Vec<InstanceRecord>,
}

pub fn save_repository(repo: &SceneRepository, dir: &Path) -> Result<(), DecomposeError> {
    let inst_dir = dir.join("instances");
    std::fs::create_dir_all(&inst_dir).map_err(|e| IoError::io(&inst_dir, e))?;
    let mut records = Vec::with_capacity(repo.len());
    for (id, (role, inst)) in repo.iter().enumerate() {
        let file = format!("instances/{id:06}.ply");
        let n = inst.cloud.len();
        let data = LabeledCloud {
            cloud: inst.cloud.clone(),
            labels: vec![inst.category_id as i32; n],
            instances: vec![inst.instance_id; n],
        };
        write_ply(&dir.join(&file), &data, Precision::F64)?;
        records.push(InstanceRecord {
            id,
            instance_id: inst.instance_id,
            category: inst.category_id,
            role,
            source_scene: inst.source_scene.clone(),
            file,
            points: n,
            obb: (&inst.obb).into(),
        });
    }
    let index = Index {
        version: REPOSITORY_VERSION.to_string(),
        taxonomy: repo.taxonomy.clone(),
        instances: records,
    };
    let text = serde_json::to_vec_pretty(&index).expect("index serializes");
    write_atomic(&dir.join("index.json"), &text)?;
    Ok(())
}

pub fn load_repository(dir: &Path) -> Result<SceneRepository, DecomposeError> {
    let path = dir.join("index.json");
    let text = std::fs::read(&path).map_err(|e| IoError::io(&path, e))?;
    let probe: serde_json::Value =
        serde_json::from_slice(&text).map_err(|e| IoError::format(&path, e.to_string()))?;
    match probe.get("version").and_then(|v| v.as_str()) {
        Some(REPOSITORY_VERSION) => {}
        other => {
            return Err(IoError::format(
                &path,
                format!("unsupported repository version {other:?}, expected \"{REPOSITORY_VERSION}\""),
            )
            .into())
        }
    }
    let index: Index =
        serde_json::from_value(probe).map_err(|e| IoError::format(&path, e.to_string()))?;
    let mut repo = SceneRepository::new(index.taxonomy);
    for rec in index.instances {
        let file = dir.join(&rec.file);
        let data = read_ply(&file)?;
        if data.len() != rec.points {
            return Err(IoError::format(
                &file,
                format!("expected {} points, found {}", rec.points, data.len()),
            )
            .into());
        }
        repo.push(
            rec.role,
            LabeledInstance {
                instance_id: rec.instance_id,
                category_id: rec.category,
                cloud: data.cloud,
                obb: (&rec.obb).into(),
                source_scene: rec.source_scene,
            },
        );
    }
    Ok(repo)
}
