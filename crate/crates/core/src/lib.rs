//! Interaction-aware behavior prediction over dynamic insertion areas.

pub mod autodiff;
pub mod dynamic_env;
pub mod error;
pub mod scalar;
pub mod semantic_graph;
pub mod sgn;
pub mod sim;
pub mod static_env;
pub mod train;

pub use scalar::Scalar;

pub type ReferencePath64 = static_env::ReferencePath<f64>;
pub type ReferencePath32 = static_env::ReferencePath<f32>;
pub type SgnParams64 = sgn::SgnParams<f64>;
pub type SgnParams32 = sgn::SgnParams<f32>;
pub type GmmParams64 = sgn::GmmParams<f64>;
