use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::path::{LightState, PathId, RefPointKind, ReferencePath};
use super::vec2::Vec2;
use crate::error::{FormatError, GeometryError};

/// Identifies a reference point by its path and index in that path's sorted
/// point list.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct PointId {
    pub path: PathId,
    pub index: usize,
}

impl PointId {
    pub fn parse(s: &str) -> Option<Self> {
        let (path, idx) = s.rsplit_once('#')?;
        Some(Self { path: PathId::new(path), index: idx.parse().ok()? })
    }
}

impl std::fmt::Display for PointId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}#{}", self.path, self.index)
    }
}

/// The static environment: a set of reference paths plus declared
/// parallel-lane relations.
#[derive(Debug, Clone, PartialEq)]
pub struct RoadMap {
    paths: Vec<ReferencePath<f64>>,
    index: BTreeMap<PathId, usize>,
    parallel: BTreeMap<PathId, Vec<PathId>>,
}

impl RoadMap {
    /// `parallel` lists unordered pairs of paths declared side by side.
    pub fn new(paths: Vec<ReferencePath<f64>>, parallel: &[(PathId, PathId)]) -> Result<Self, GeometryError> {
        let mut index = BTreeMap::new();
        for (i, p) in paths.iter().enumerate() {
            if index.insert(p.id().clone(), i).is_some() {
                return Err(GeometryError::DuplicatePath(p.id().0.clone()));
            }
        }
        for p in &paths {
            for rp in p.ref_points() {
                if let Some(partner) = &rp.partner_path {
                    if !index.contains_key(partner) {
                        return Err(GeometryError::UnknownPath(partner.0.clone()));
                    }
                }
            }
        }
        let mut sets: BTreeMap<PathId, BTreeSet<PathId>> = BTreeMap::new();
        for (a, b) in parallel {
            for id in [a, b] {
                if !index.contains_key(id) {
                    return Err(GeometryError::UnknownPath(id.0.clone()));
                }
            }
            if a != b {
                sets.entry(a.clone()).or_default().insert(b.clone());
                sets.entry(b.clone()).or_default().insert(a.clone());
            }
        }
        let parallel = sets.into_iter().map(|(k, v)| (k, v.into_iter().collect())).collect();
        Ok(Self { paths, index, parallel })
    }

    pub fn paths(&self) -> &[ReferencePath<f64>] {
        &self.paths
    }

    pub fn path(&self, id: &PathId) -> Option<&ReferencePath<f64>> {
        self.index.get(id).map(|&i| &self.paths[i])
    }

    pub fn require(&self, id: &PathId) -> Result<&ReferencePath<f64>, GeometryError> {
        self.path(id).ok_or_else(|| GeometryError::UnknownPath(id.0.clone()))
    }

    pub fn parallel_to(&self, id: &PathId) -> &[PathId] {
        self.parallel.get(id).map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn point(&self, id: &PointId) -> Option<&super::path::ReferencePoint<f64>> {
        self.path(&id.path).and_then(|p| p.ref_points().get(id.index))
    }

    /// All traffic-light points of the map.
    pub fn traffic_lights(&self) -> Vec<PointId> {
        self.paths
            .iter()
            .flat_map(|p| {
                p.ref_points()
                    .iter()
                    .enumerate()
                    .filter(|(_, rp)| rp.kind == RefPointKind::TrafficLight)
                    .map(move |(index, _)| PointId { path: p.id().clone(), index })
            })
            .collect()
    }

    pub fn to_json(&self) -> String {
        let doc = SceneDoc {
            paths: self
                .paths
                .iter()
                .map(|p| PathDoc {
                    id: p.id().clone(),
                    waypoints: p.waypoints().iter().map(|w| [w.x, w.y]).collect(),
                    speed_limit: p.speed_limit(),
                    ref_points: p
                        .ref_points()
                        .iter()
                        .filter(|rp| !matches!(rp.kind, RefPointKind::VirtualStopLine | RefPointKind::Horizon))
                        .map(|rp| RefPointDoc {
                            kind: rp.kind,
                            location: [rp.location.x, rp.location.y],
                            partner_path: rp.partner_path.clone(),
                            light_state: rp.light_state,
                        })
                        .collect(),
                    parallel: self.parallel_to(p.id()).to_vec(),
                })
                .collect(),
        };
        serde_json::to_string_pretty(&doc).expect("scene document serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, FormatError> {
        let doc: SceneDoc = serde_json::from_str(text).map_err(|e| FormatError::Json(e.to_string()))?;
        let mut paths = Vec::with_capacity(doc.paths.len());
        let mut parallel = Vec::new();
        for pd in &doc.paths {
            let pts: Vec<Vec2<f64>> = pd.waypoints.iter().map(|w| Vec2::new(w[0], w[1])).collect();
            let mut path = ReferencePath::new(pd.id.clone(), &pts, pd.speed_limit)?;
            for rp in &pd.ref_points {
                path.add_reference_point(
                    rp.kind,
                    Vec2::new(rp.location[0], rp.location[1]),
                    rp.partner_path.clone(),
                    rp.light_state,
                )?;
            }
            for other in &pd.parallel {
                parallel.push((pd.id.clone(), other.clone()));
            }
            paths.push(path);
        }
        Ok(Self::new(paths, &parallel)?)
    }
}

#[derive(Serialize, Deserialize)]
struct SceneDoc {
    paths: Vec<PathDoc>,
}

#[derive(Serialize, Deserialize)]
struct PathDoc {
    id: PathId,
    waypoints: Vec<[f64; 2]>,
    speed_limit: f64,
    ref_points: Vec<RefPointDoc>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    parallel: Vec<PathId>,
}

#[derive(Serialize, Deserialize)]
struct RefPointDoc {
    kind: RefPointKind,
    location: [f64; 2],
    #[serde(default, skip_serializing_if = "Option::is_none")]
    partner_path: Option<PathId>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    light_state: Option<LightState>,
}
