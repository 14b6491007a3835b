//! The semantic graph network: recurrent node encoders, spatial attention,
//! predictor encoding, mixture-density head and insertion probabilities.

mod gmm;
mod model_file;
mod network;
mod params;

pub use gmm::{cholesky3, gmm_head, gmm_log_density_with_grad, GmmParams, Mat3, GMM_OUTPUTS_PER_COMPONENT};
pub use model_file::{decode_model, encode_model, load_model, save_model, FORMAT_VERSION, MAGIC};
pub use network::{
    encode_nodes, forward, forward_tape, gru_step, insertion_probs, loss, loss_terms, predictor_encode, record_loss,
    spatial_attention, Dropout, EdgeOutput, ForwardTrace, Prediction,
};
pub use params::{layout, Layers, Preset, SgnConfig, SgnParams, TensorSpec};
