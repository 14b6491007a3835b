use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::graph::SemanticGraph2D;
use crate::error::GraphError;
use crate::sgn::GmmParams;

/// One spatio-temporal edge from the reference node `i` at `t_i` to node `j`
/// at the sampled insertion time `t_j`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Edge3D {
    pub i: usize,
    pub j: usize,
    pub t_i: f64,
    pub t_j: f64,
    /// Sampled `(y_s1, y_s2, y_t)`.
    pub y: [f64; 3],
    pub w: f64,
}

/// One sampled outcome of the scene's evolution.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SemanticGraph3D {
    pub base_time: f64,
    pub edges: Vec<Edge3D>,
}

/// Draws `n_samples` 3D graphs from per-candidate mixtures. Sampled
/// insertion times are clipped at zero so that `t_j >= t_i`.
pub fn assemble_3dsg(
    sg: &SemanticGraph2D,
    edge_outputs: &[(GmmParams<f64>, f64)],
    n_samples: usize,
    seed: u64,
) -> Result<Vec<SemanticGraph3D>, GraphError> {
    if edge_outputs.len() != sg.nodes.len() {
        return Err(GraphError::DimensionMismatch { expected: sg.nodes.len(), got: edge_outputs.len() });
    }
    for (g, w) in edge_outputs {
        g.validate().map_err(|e| GraphError::InvalidDistribution(e.to_string()))?;
        if !(0.0..=1.0).contains(w) {
            return Err(GraphError::InvalidDistribution(format!("insertion probability {w} outside [0, 1]")));
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(n_samples);
    for _ in 0..n_samples {
        let mut edges = Vec::with_capacity(edge_outputs.len());
        for (j, (g, w)) in edge_outputs.iter().enumerate() {
            let mut y = g.sample(&mut rng).map_err(|e| GraphError::InvalidDistribution(e.to_string()))?;
            y[2] = y[2].max(0.0);
            edges.push(Edge3D { i: sg.reference, j, t_i: sg.timestamp, t_j: sg.timestamp + y[2], y, w: *w });
        }
        out.push(SemanticGraph3D { base_time: sg.timestamp, edges });
    }
    Ok(out)
}

/// JSON export: one array of edges per sample.
pub fn export_3dsg_json(graphs: &[SemanticGraph3D]) -> String {
    let samples: Vec<&Vec<Edge3D>> = graphs.iter().map(|g| &g.edges).collect();
    serde_json::to_string_pretty(&samples).expect("graphs serialize")
}
