//! Dynamic environment: dynamic insertion areas (DIAs), their features, the
//! active reference point and the regulatory two-stage transform.

mod dia;
mod extract;
mod scene;

pub use dia::{
    dia_state, BoundarySource, BoundaryState, Dia, DiaFeatures, DiaKey, DiaState, FeatureUnit, FEATURE_DIM,
    FEATURE_NAMES, FEATURE_UNITS,
};
pub use extract::{
    active_point_s_on, apply_regulatory_transform, dia_features, extract_dias, extract_scene, select_active_reference_point,
    ActivePoint, Extraction,
};
pub use scene::{AgentId, AgentState, DynamicEnvConfig, EffectivePoint, RegulatoryOverrides, SceneSnapshot};
