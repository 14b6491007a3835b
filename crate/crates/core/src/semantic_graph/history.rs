use serde::{Deserialize, Serialize};

use super::graph::{relative_node_feature, Normalization, SemanticGraph2D, REL_FEATURE_DIM};
use crate::dynamic_env::{AgentId, DiaKey, DynamicEnvConfig, SceneSnapshot, FEATURE_DIM};
use crate::error::GraphError;

pub const DEFAULT_MAX_HISTORY: usize = 2;

/// The most recent 2D graphs of one predicted vehicle, oldest first. Nodes
/// are matched across frames by their [`DiaKey`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GraphHistory {
    pub frames: Vec<SemanticGraph2D>,
    pub max_len: usize,
}

impl GraphHistory {
    pub fn new(max_len: usize) -> Self {
        Self { frames: Vec::new(), max_len: max_len.max(1) }
    }

    /// Appends the newest frame and drops the oldest beyond `max_len`.
    pub fn push(&mut self, graph: SemanticGraph2D) -> Result<(), GraphError> {
        if let Some(last) = self.frames.last() {
            if !(graph.timestamp > last.timestamp) {
                return Err(GraphError::NonMonotonicTime { prev: last.timestamp, next: graph.timestamp });
            }
        }
        self.frames.push(graph);
        if self.frames.len() > self.max_len {
            self.frames.remove(0);
        }
        Ok(())
    }

    pub fn current(&self) -> Option<&SemanticGraph2D> {
        self.frames.last()
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    /// For each node of the current frame, its index in every frame (`None`
    /// where the DIA did not exist yet).
    pub fn correspondence(&self) -> Vec<Vec<Option<usize>>> {
        let Some(cur) = self.current() else { return Vec::new() };
        cur.nodes.iter().map(|n| self.frames.iter().map(|f| f.position(&n.key)).collect()).collect()
    }

    /// Normalized network input. Nodes follow the current frame; nodes absent
    /// from an older frame are masked there.
    pub fn to_input(&self, norm: &Normalization) -> Result<GraphInput, GraphError> {
        let cur = self.current().ok_or(GraphError::NoReferenceDia)?;
        let corr = self.correspondence();
        let frames = self
            .frames
            .iter()
            .enumerate()
            .map(|(t, frame)| {
                let xi = &frame.reference_node().features;
                let relative = corr
                    .iter()
                    .map(|c| c[t].map(|j| norm.relative(&relative_node_feature(xi, &frame.nodes[j].features))))
                    .collect();
                Some(FrameInput { reference: norm.absolute(xi), relative })
            })
            .collect();
        Ok(GraphInput { frames, keys: cur.nodes.iter().map(|n| n.key.clone()).collect(), reference: cur.reference })
    }
}

/// Builds the graph history of `ego` from time-ordered snapshots, keeping the
/// newest `max_len`.
pub fn align_history(
    snapshots: &[SceneSnapshot],
    ego: AgentId,
    cfg: &DynamicEnvConfig,
    max_len: usize,
) -> Result<GraphHistory, GraphError> {
    for w in snapshots.windows(2) {
        if !(w[1].timestamp > w[0].timestamp) {
            return Err(GraphError::NonMonotonicTime { prev: w[0].timestamp, next: w[1].timestamp });
        }
    }
    let mut hist = GraphHistory::new(max_len);
    let start = snapshots.len().saturating_sub(hist.max_len);
    for s in &snapshots[start..] {
        hist.push(super::graph::build_2dsg(s, ego, cfg)?)?;
    }
    Ok(hist)
}

/// Normalized inputs of one frame: the reference node's absolute features and
/// each current node's relative feature (`None` when masked).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameInput {
    pub reference: [f64; FEATURE_DIM],
    pub relative: Vec<Option<[f64; REL_FEATURE_DIM]>>,
}

/// Everything the network consumes for one prediction. A `None` frame is
/// padding and leaves all recurrent states untouched.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GraphInput {
    pub frames: Vec<Option<FrameInput>>,
    pub keys: Vec<DiaKey>,
    pub reference: usize,
}

impl GraphInput {
    pub fn node_count(&self) -> usize {
        self.keys.len()
    }

    /// Prepends masked frames up to `len`.
    pub fn padded(&self, len: usize) -> Self {
        let mut out = self.clone();
        while out.frames.len() < len {
            out.frames.insert(0, None);
        }
        out
    }

    /// Reorders nodes by `perm` (new position `p` holds old node `perm[p]`).
    pub fn permuted(&self, perm: &[usize]) -> Self {
        let frames = self
            .frames
            .iter()
            .map(|f| {
                f.as_ref().map(|f| FrameInput {
                    reference: f.reference,
                    relative: perm.iter().map(|&j| f.relative[j]).collect(),
                })
            })
            .collect();
        let reference = perm.iter().position(|&j| j == self.reference).expect("perm is a permutation");
        Self { frames, keys: perm.iter().map(|&j| self.keys[j].clone()).collect(), reference }
    }

    pub fn validate(&self) -> Result<(), GraphError> {
        let n = self.keys.len();
        if n == 0 || self.reference >= n {
            return Err(GraphError::NoReferenceDia);
        }
        for f in self.frames.iter().flatten() {
            if f.relative.len() != n {
                return Err(GraphError::DimensionMismatch { expected: n, got: f.relative.len() });
            }
        }
        Ok(())
    }
}
