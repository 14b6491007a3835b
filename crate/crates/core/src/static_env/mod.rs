//! Static environment: reference paths, reference points, the Frenet frame
//! and topological relations between paths.

mod map;
mod overlap;
mod path;
mod vec2;

pub use map::{PointId, RoadMap};
pub use overlap::{classify_overlap, classify_overlap_within, Overlap, OverlapKind};
pub use path::{
    densify, fit_reference_path, FrenetPose, LightState, PathId, RefPointKind, ReferencePath, ReferencePoint,
    DEFAULT_CORRIDOR_HALF_WIDTH, REFERENCE_POINT_TOLERANCE,
};
pub use vec2::Vec2;
