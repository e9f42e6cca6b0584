//! A scene under construction: fixed structure plus posed dynamic objects.

use std::collections::BTreeMap;

use crate::decompose::LabeledInstance;
use crate::geometry::{posed_obb, OrientedBoundingBox, Pose, Vec3, UP};
use crate::org::{graph_of_boxes, Anchors, ObjectRelationshipGraph, PlacedObject};
use crate::relations::ThresholdConfig;

#[derive(Debug, Clone, PartialEq)]
pub struct PlacedInstance {
    pub instance: LabeledInstance,
    pub pose: Pose,
}

impl PlacedInstance {
    /// Placed at its source position.
    pub fn in_place(instance: LabeledInstance) -> Self {
        let pose = Pose::identity_for(&instance.obb);
        Self { instance, pose }
    }

    pub fn obb(&self) -> OrientedBoundingBox {
        posed_obb(&self.instance.obb, &self.pose)
    }

    pub fn category(&self) -> u32 {
        self.instance.category_id
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayoutState {
    pub floors: Vec<LabeledInstance>,
    /// Walls and other static structure.
    pub background: Vec<LabeledInstance>,
    pub dynamics: Vec<PlacedInstance>,
    /// Target graph node id to index into `dynamics`.
    pub binding: BTreeMap<usize, usize>,
    pub anchors: Anchors,
    /// Up normal of the floor plane.
    pub floor_normal: Vec3,
}

impl LayoutState {
    pub fn new(floors: Vec<LabeledInstance>, background: Vec<LabeledInstance>, anchors: Anchors) -> Self {
        Self {
            floors,
            background,
            dynamics: Vec::new(),
            binding: BTreeMap::new(),
            anchors,
            floor_normal: UP,
        }
    }

    /// Adds a dynamic object, optionally bound to a target node.
    pub fn place(&mut self, instance: LabeledInstance, pose: Pose, node: Option<usize>) -> usize {
        let k = self.dynamics.len();
        self.dynamics.push(PlacedInstance { instance, pose });
        if let Some(n) = node {
            self.binding.insert(n, k);
        }
        k
    }

    pub fn obbs(&self) -> Vec<OrientedBoundingBox> {
        self.dynamics.iter().map(PlacedInstance::obb).collect()
    }

    /// Static boxes standing for the anchor of category `c`.
    pub fn anchor_boxes(&self, c: u32) -> Vec<OrientedBoundingBox> {
        let from = |v: &[LabeledInstance]| v.iter().filter(|i| i.category_id == c).map(|i| i.obb).collect();
        if self.anchors.floor == Some(c) {
            let mut b: Vec<_> = from(&self.floors);
            if b.is_empty() {
                b = self.floors.iter().map(|i| i.obb).collect();
            }
            b
        } else {
            from(&self.background)
        }
    }

    /// Floor footprint boxes, whatever their category.
    pub fn floor_boxes(&self) -> Vec<OrientedBoundingBox> {
        self.floors.iter().map(|i| i.obb).collect()
    }

    pub fn poses(&self) -> Vec<Pose> {
        self.dynamics.iter().map(|d| d.pose).collect()
    }

    pub fn is_finite(&self) -> bool {
        self.dynamics.iter().all(|d| d.pose.is_finite())
    }
}

/// The graph realized by the current poses: anchors first, then one node
/// per dynamic object in order.
pub fn graph_of_layout(layout: &LayoutState, cfg: &ThresholdConfig) -> ObjectRelationshipGraph {
    let anchors: Vec<(u32, Vec<OrientedBoundingBox>)> = layout
        .anchors
        .categories()
        .into_iter()
        .map(|c| (c, layout.anchor_boxes(c)))
        .collect();
    let objects: Vec<PlacedObject> = layout
        .dynamics
        .iter()
        .enumerate()
        .map(|(k, d)| PlacedObject {
            category: d.category(),
            obb: d.obb(),
            instance: Some(k),
        })
        .collect();
    graph_of_boxes(&anchors, &objects, cfg)
}
