//! Semantic graphs over DIA nodes: per-snapshot 2D graphs, aligned histories
//! as network input, and sampled spatio-temporal 3D graphs.

mod graph;
mod history;
mod threed;

pub use graph::{
    build_2dsg, relative_node_feature, relative_node_feature_slice, GraphNode, Normalization, SemanticGraph2D,
    REL_FEATURE_DIM,
};
pub use history::{align_history, FrameInput, GraphHistory, GraphInput, DEFAULT_MAX_HISTORY};
pub use threed::{assemble_3dsg, export_3dsg_json, Edge3D, SemanticGraph3D};
