use std::fmt;

use serde::{Deserialize, Serialize};

use super::scene::AgentId;
use crate::scalar::Scalar;
use crate::static_env::{PathId, Vec2};

/// Kinematic state of a DIA boundary. `s`/`d` are Frenet coordinates on the
/// DIA's reference path.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundaryState {
    pub position: Vec2<f64>,
    pub s: f64,
    pub d: f64,
    pub v: f64,
    pub a: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum BoundarySource {
    Agent(AgentId),
    StopLine,
    VirtualStopLine,
    ActiveRefPoint,
    SpeedLimitHorizon,
}

/// Identity of a DIA across frames: its path and the agent forming its
/// rear boundary.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct DiaKey {
    pub path: PathId,
    pub rear_agent: AgentId,
}

impl fmt::Display for DiaKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{}", self.path, self.rear_agent)
    }
}

/// A dynamic insertion area.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dia {
    pub key: DiaKey,
    pub ref_path: PathId,
    pub front: BoundaryState,
    pub rear: BoundaryState,
    pub front_source: BoundarySource,
    pub rear_source: BoundarySource,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum DiaState {
    Moving,
    PartiallyMoving,
    Stopped,
}

/// Motion state from the two boundary speeds.
pub fn dia_state(dia: &Dia, v_eps: f64) -> DiaState {
    match (dia.front.v > v_eps, dia.rear.v > v_eps) {
        (true, true) => DiaState::Moving,
        (false, false) => DiaState::Stopped,
        _ => DiaState::PartiallyMoving,
    }
}

pub const FEATURE_DIM: usize = 10;

/// The node attribute of a DIA. Longitudinal distances are measured along
/// the DIA's own path to the active reference point, positive while the
/// boundary has not reached it.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct DiaFeatures<T> {
    pub l: T,
    pub theta: T,
    pub v_f: T,
    pub v_r: T,
    pub a_f: T,
    pub a_r: T,
    pub d_lon_f: T,
    pub d_lon_r: T,
    pub d_lat_f: T,
    pub d_lat_r: T,
}

/// Physical quantity of each feature slot, used for normalization.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FeatureUnit {
    Distance,
    Angle,
    Speed,
    Acceleration,
}

pub const FEATURE_UNITS: [FeatureUnit; FEATURE_DIM] = [
    FeatureUnit::Distance,
    FeatureUnit::Angle,
    FeatureUnit::Speed,
    FeatureUnit::Speed,
    FeatureUnit::Acceleration,
    FeatureUnit::Acceleration,
    FeatureUnit::Distance,
    FeatureUnit::Distance,
    FeatureUnit::Distance,
    FeatureUnit::Distance,
];

pub const FEATURE_NAMES: [&str; FEATURE_DIM] =
    ["l", "theta", "v_f", "v_r", "a_f", "a_r", "d_lon_f", "d_lon_r", "d_lat_f", "d_lat_r"];

impl<T: Scalar> DiaFeatures<T> {
    pub fn to_array(&self) -> [T; FEATURE_DIM] {
        [
            self.l,
            self.theta,
            self.v_f,
            self.v_r,
            self.a_f,
            self.a_r,
            self.d_lon_f,
            self.d_lon_r,
            self.d_lat_f,
            self.d_lat_r,
        ]
    }

    pub fn from_array(v: [T; FEATURE_DIM]) -> Self {
        Self {
            l: v[0],
            theta: v[1],
            v_f: v[2],
            v_r: v[3],
            a_f: v[4],
            a_r: v[5],
            d_lon_f: v[6],
            d_lon_r: v[7],
            d_lat_f: v[8],
            d_lat_r: v[9],
        }
    }

    pub fn cast<U: Scalar>(&self) -> DiaFeatures<U> {
        DiaFeatures::from_array(self.to_array().map(|x| U::lit(x.to_f64_lossy())))
    }
}
