use serde::{Deserialize, Serialize};

use crate::dynamic_env::{
    extract_scene, AgentId, DiaFeatures, DiaKey, DynamicEnvConfig, Extraction, FeatureUnit, SceneSnapshot, FEATURE_DIM,
    FEATURE_UNITS,
};
use crate::error::GraphError;
use crate::scalar::{wrap_angle, Scalar};

/// Length of a relative node feature: the difference block followed by the
/// neighbor's absolute features.
pub const REL_FEATURE_DIM: usize = 2 * FEATURE_DIM;

/// Divisors applied to features before they enter the network.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Normalization {
    pub distance: f64,
    pub speed: f64,
    pub acceleration: f64,
    pub angle: f64,
}

impl Default for Normalization {
    fn default() -> Self {
        Self { distance: 50.0, speed: 15.0, acceleration: 5.0, angle: std::f64::consts::PI }
    }
}

impl Normalization {
    pub fn scale(&self, unit: FeatureUnit) -> f64 {
        match unit {
            FeatureUnit::Distance => self.distance,
            FeatureUnit::Speed => self.speed,
            FeatureUnit::Acceleration => self.acceleration,
            FeatureUnit::Angle => self.angle,
        }
    }

    pub fn absolute(&self, x: &DiaFeatures<f64>) -> [f64; FEATURE_DIM] {
        let mut v = x.to_array();
        for (v, unit) in v.iter_mut().zip(FEATURE_UNITS) {
            *v /= self.scale(unit);
        }
        v
    }

    pub fn relative(&self, rel: &[f64; REL_FEATURE_DIM]) -> [f64; REL_FEATURE_DIM] {
        let mut out = *rel;
        for (k, v) in out.iter_mut().enumerate() {
            *v /= self.scale(FEATURE_UNITS[k % FEATURE_DIM]);
        }
        out
    }
}

/// Feature of node `j` relative to the reference node `i`: `[x_j - x_i ; x_j]`,
/// with the heading difference wrapped to (-pi, pi].
pub fn relative_node_feature<T: Scalar>(xi: &DiaFeatures<T>, xj: &DiaFeatures<T>) -> [T; REL_FEATURE_DIM] {
    let a = xi.to_array();
    let b = xj.to_array();
    let mut out = [T::zero(); REL_FEATURE_DIM];
    for k in 0..FEATURE_DIM {
        out[k] = b[k] - a[k];
        out[FEATURE_DIM + k] = b[k];
    }
    out[1] = wrap_angle(out[1]);
    out
}

/// Slice form of [`relative_node_feature`] for features of unchecked length.
pub fn relative_node_feature_slice<T: Scalar>(xi: &[T], xj: &[T]) -> Result<Vec<T>, GraphError> {
    for x in [xi, xj] {
        if x.len() != FEATURE_DIM {
            return Err(GraphError::DimensionMismatch { expected: FEATURE_DIM, got: x.len() });
        }
    }
    let a = DiaFeatures::from_array(xi.try_into().expect("length checked"));
    let b = DiaFeatures::from_array(xj.try_into().expect("length checked"));
    Ok(relative_node_feature(&a, &b).to_vec())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GraphNode {
    pub key: DiaKey,
    pub features: DiaFeatures<f64>,
}

/// Spatial graph of the DIAs of one snapshot. Edges are implicit: every
/// ordered pair of nodes, self pairs included.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SemanticGraph2D {
    pub timestamp: f64,
    pub nodes: Vec<GraphNode>,
    /// Index of the DIA in front of the predicted vehicle.
    pub reference: usize,
}

impl SemanticGraph2D {
    pub fn from_extraction(ex: &Extraction) -> Result<Self, GraphError> {
        if ex.reference >= ex.dias.len() {
            return Err(GraphError::NoReferenceDia);
        }
        let nodes = ex
            .dias
            .iter()
            .zip(&ex.features)
            .map(|(d, f)| GraphNode { key: d.key.clone(), features: *f })
            .collect();
        Ok(Self { timestamp: ex.scene.timestamp, nodes, reference: ex.reference })
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn reference_node(&self) -> &GraphNode {
        &self.nodes[self.reference]
    }

    pub fn position(&self, key: &DiaKey) -> Option<usize> {
        self.nodes.iter().position(|n| &n.key == key)
    }

    pub fn edges(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        let n = self.nodes.len();
        (0..n).flat_map(move |a| (0..n).map(move |b| (a, b)))
    }
}

/// Extracts the DIAs of a snapshot and arranges them as a 2D semantic graph.
pub fn build_2dsg(scene: &SceneSnapshot, ego: AgentId, cfg: &DynamicEnvConfig) -> Result<SemanticGraph2D, GraphError> {
    SemanticGraph2D::from_extraction(&extract_scene(scene, ego, cfg)?)
}
