use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::static_env::{FrenetPose, LightState, PathId, PointId, RefPointKind, ReferencePoint, RoadMap};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct AgentId(pub u32);

impl fmt::Display for AgentId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// One vehicle at one instant. `pose.s` is the rear bumper's arc length on
/// `path`; the front bumper sits at `pose.s + length`.
#[derive(Debug, Clone, PartialEq)]
pub struct AgentState {
    pub id: AgentId,
    pub path: PathId,
    pub pose: FrenetPose<f64>,
    pub v: f64,
    pub a: f64,
    pub length: f64,
}

impl AgentState {
    pub fn rear_s(&self) -> f64 {
        self.pose.s
    }

    pub fn front_s(&self) -> f64 {
        self.pose.s + self.length
    }
}

/// Thresholds and distances used by active-point selection and DIA
/// extraction.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DynamicEnvConfig {
    /// Distance of the synthetic active point ahead of the predicted vehicle.
    pub d_uo: f64,
    /// Offset of the virtual stop line before a stop or yield line.
    pub d_tr: f64,
    /// Speeds at or below this count as zero.
    pub v_eps: f64,
    /// Only agents within this distance upstream of the active point bound
    /// DIAs on other paths.
    pub observation_range: f64,
    /// Corridor half-width for projections onto other paths.
    pub corridor_half_width: f64,
}

impl Default for DynamicEnvConfig {
    fn default() -> Self {
        Self { d_uo: 30.0, d_tr: 5.0, v_eps: 0.1, observation_range: 100.0, corridor_half_width: 15.0 }
    }
}

/// Per-snapshot edits to the annotated reference points, produced by the
/// regulatory transform.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RegulatoryOverrides {
    pub suppressed: Vec<PointId>,
    pub virtual_points: Vec<(PathId, ReferencePoint<f64>)>,
}

/// Everything observed at one time step.
#[derive(Debug, Clone, PartialEq)]
pub struct SceneSnapshot {
    pub timestamp: f64,
    pub map: Arc<RoadMap>,
    pub agents: Vec<AgentState>,
    /// Current signal state per traffic-light point; falls back to the map
    /// annotation when absent.
    pub light_states: BTreeMap<PointId, LightState>,
    pub overrides: RegulatoryOverrides,
}

/// A reference point as seen in one snapshot.
#[derive(Debug, Clone, PartialEq)]
pub struct EffectivePoint {
    pub id: Option<PointId>,
    pub point: ReferencePoint<f64>,
}

impl SceneSnapshot {
    pub fn new(timestamp: f64, map: Arc<RoadMap>, agents: Vec<AgentState>) -> Self {
        Self { timestamp, map, agents, light_states: BTreeMap::new(), overrides: RegulatoryOverrides::default() }
    }

    pub fn agent(&self, id: AgentId) -> Option<&AgentState> {
        self.agents.iter().find(|a| a.id == id)
    }

    pub fn agents_on<'a>(&'a self, path: &'a PathId) -> impl Iterator<Item = &'a AgentState> + 'a {
        self.agents.iter().filter(move |a| &a.path == path)
    }

    pub fn light_state(&self, id: &PointId) -> Option<LightState> {
        self.light_states.get(id).copied().or_else(|| self.map.point(id).and_then(|p| p.light_state))
    }

    /// Reference points of `path` after overrides, sorted by arc length, with
    /// live light states filled in.
    pub fn effective_points(&self, path: &PathId) -> Vec<EffectivePoint> {
        let mut out = Vec::new();
        if let Some(p) = self.map.path(path) {
            for (index, rp) in p.ref_points().iter().enumerate() {
                let id = PointId { path: path.clone(), index };
                if self.overrides.suppressed.contains(&id) {
                    continue;
                }
                let mut point = rp.clone();
                if point.kind == RefPointKind::TrafficLight {
                    point.light_state = self.light_state(&id);
                }
                out.push(EffectivePoint { id: Some(id), point });
            }
        }
        for (p, rp) in &self.overrides.virtual_points {
            if p == path {
                out.push(EffectivePoint { id: None, point: rp.clone() });
            }
        }
        out.sort_by(|a, b| a.point.s_on_path.total_cmp(&b.point.s_on_path));
        out
    }
}
