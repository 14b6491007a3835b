use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::gmm::GMM_OUTPUTS_PER_COMPONENT;
use crate::autodiff::DenseRef;
use crate::dynamic_env::FEATURE_DIM;
use crate::error::ModelError;
use crate::scalar::Scalar;
use crate::semantic_graph::{Normalization, REL_FEATURE_DIM};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Preset {
    /// Recurrent 128, encoders 64, attention 128.
    Full,
    /// Every hidden size halved.
    Desk,
}

impl std::str::FromStr for Preset {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "full" => Ok(Self::Full),
            "desk" => Ok(Self::Desk),
            other => Err(format!("unknown preset `{other}` (expected full or desk)")),
        }
    }
}

/// Architecture and output conventions of a network. Serialized into model
/// files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SgnConfig {
    pub preset: Preset,
    /// Output size of the learned map applied to relative node features.
    pub rel_dim: usize,
    pub hidden_dim: usize,
    pub enc_dim: usize,
    pub att_dim: usize,
    pub mixtures: usize,
    pub k_reg: f64,
    pub dropout: f64,
    /// Uniform attention coefficients.
    pub ua_sgn: bool,
    /// Edge encoder sees the reference node's history only.
    pub nc_sgn: bool,
    /// Covariance built from raw outputs instead of a Cholesky factor.
    pub raw_sigma: bool,
    pub normalization: Normalization,
    /// Divisors applied to `(y_s1, y_s2, y_t)` before the mixture head.
    pub target_scale: [f64; 3],
}

impl SgnConfig {
    pub fn preset(preset: Preset) -> Self {
        let (rel_dim, hidden_dim, enc_dim, att_dim) = match preset {
            Preset::Full => (32, 128, 64, 128),
            Preset::Desk => (16, 64, 32, 64),
        };
        Self {
            preset,
            rel_dim,
            hidden_dim,
            enc_dim,
            att_dim,
            mixtures: 3,
            k_reg: 1e-3,
            dropout: 0.1,
            ua_sgn: false,
            nc_sgn: false,
            raw_sigma: false,
            normalization: Normalization::default(),
            target_scale: [20.0, 10.0, 5.0],
        }
    }

    /// A tiny network for exhaustive gradient checks.
    pub fn tiny() -> Self {
        Self { rel_dim: 4, hidden_dim: 6, enc_dim: 5, att_dim: 7, mixtures: 2, ..Self::preset(Preset::Desk) }
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        let dims = [self.rel_dim, self.hidden_dim, self.enc_dim, self.att_dim, self.mixtures];
        if dims.contains(&0) {
            return Err(ModelError::Format("all dimensions must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(ModelError::Format(format!("dropout {} outside [0, 1)", self.dropout)));
        }
        if !(self.k_reg >= 0.0) || self.target_scale.iter().any(|s| !(*s > 0.0)) {
            return Err(ModelError::Format("k_reg must be non-negative and target scales positive".into()));
        }
        Ok(())
    }
}

/// Name and shape of one stored tensor.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TensorSpec {
    pub name: String,
    pub rows: usize,
    pub cols: usize,
    pub offset: usize,
}

impl TensorSpec {
    pub fn len(&self) -> usize {
        self.rows * self.cols
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Offsets of every layer in the flat parameter buffer.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Layers {
    /// Learned linear map of relative node features.
    pub rel: DenseRef,
    pub rec1_zr: DenseRef,
    pub rec1_n: DenseRef,
    pub rec2_zr: DenseRef,
    pub rec2_n: DenseRef,
    pub enc1: DenseRef,
    /// `W_att` split into the halves acting on the attending and the
    /// attended node.
    pub att_left: DenseRef,
    pub att_right: DenseRef,
    pub att_score: DenseRef,
    pub enc2: DenseRef,
    pub pred: DenseRef,
    pub out1: DenseRef,
    pub out2: DenseRef,
}

struct LayoutBuilder {
    specs: Vec<TensorSpec>,
    offset: usize,
}

impl LayoutBuilder {
    fn tensor(&mut self, name: String, rows: usize, cols: usize) -> usize {
        let off = self.offset;
        self.specs.push(TensorSpec { name, rows, cols, offset: off });
        self.offset += rows * cols;
        off
    }

    fn dense(&mut self, name: &str, n_in: usize, n_out: usize, bias: bool) -> DenseRef {
        let w = self.tensor(format!("{name}.weight"), n_out, n_in);
        let b = bias.then(|| self.tensor(format!("{name}.bias"), n_out, 1));
        DenseRef { w, b, n_in, n_out }
    }
}

/// Tensor layout for a configuration, in storage order.
pub fn layout(cfg: &SgnConfig) -> (Layers, Vec<TensorSpec>) {
    let (r, h, e, a) = (cfg.rel_dim, cfg.hidden_dim, cfg.enc_dim, cfg.att_dim);
    let mut b = LayoutBuilder { specs: Vec::new(), offset: 0 };
    let layers = Layers {
        rel: b.dense("rel", REL_FEATURE_DIM, r, true),
        rec1_zr: b.dense("rec1.gates", r + h, 2 * h, true),
        rec1_n: b.dense("rec1.candidate", r + h, h, true),
        rec2_zr: b.dense("rec2.gates", FEATURE_DIM + h, 2 * h, true),
        rec2_n: b.dense("rec2.candidate", FEATURE_DIM + h, h, true),
        enc1: b.dense("enc1", h, e, true),
        att_left: b.dense("att.left", e, a, true),
        att_right: b.dense("att.right", e, a, false),
        att_score: b.dense("att.score", a, 1, false),
        enc2: b.dense("enc2", if cfg.nc_sgn { h } else { 2 * h }, e, true),
        pred: b.dense("pred", 2 * e, e, true),
        out1: b.dense("out1", e, GMM_OUTPUTS_PER_COMPONENT * cfg.mixtures, true),
        out2: b.dense("out2", e, 1, true),
    };
    (layers, b.specs)
}

/// All trainable tensors of a network, stored contiguously.
#[derive(Debug, Clone, PartialEq)]
pub struct SgnParams<T> {
    pub config: SgnConfig,
    pub layers: Layers,
    pub tensors: Vec<TensorSpec>,
    pub data: Vec<T>,
}

impl<T: Scalar> SgnParams<T> {
    /// Glorot-uniform weights and zero biases from a seeded generator.
    pub fn init(config: SgnConfig, seed: u64) -> Result<Self, ModelError> {
        config.validate()?;
        let (layers, tensors) = layout(&config);
        let total = tensors.iter().map(TensorSpec::len).sum();
        let mut data = vec![T::zero(); total];
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for t in &tensors {
            if t.name.ends_with(".bias") {
                continue;
            }
            let limit = (6.0 / (t.rows + t.cols) as f64).sqrt();
            for v in &mut data[t.offset..t.offset + t.len()] {
                *v = T::lit(rng.gen_range(-limit..limit));
            }
        }
        Ok(Self { config, layers, tensors, data })
    }

    pub fn from_data(config: SgnConfig, data: Vec<T>) -> Result<Self, ModelError> {
        config.validate()?;
        let (layers, tensors) = layout(&config);
        let total: usize = tensors.iter().map(TensorSpec::len).sum();
        if data.len() != total {
            return Err(ModelError::DimensionMismatch { expected: total, got: data.len() });
        }
        if data.iter().any(|x| !x.is_finite()) {
            return Err(ModelError::NonFinite("parameters".into()));
        }
        Ok(Self { config, layers, tensors, data })
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn tensor(&self, name: &str) -> Option<&[T]> {
        self.tensors.iter().find(|t| t.name == name).map(|t| &self.data[t.offset..t.offset + t.len()])
    }

    pub fn tensor_mut(&mut self, name: &str) -> Option<&mut [T]> {
        let t = self.tensors.iter().find(|t| t.name == name)?.clone();
        Some(&mut self.data[t.offset..t.offset + t.len()])
    }

    /// Name of the tensor holding flat index `i`.
    pub fn name_of(&self, i: usize) -> &str {
        self.tensors
            .iter()
            .find(|t| i >= t.offset && i < t.offset + t.len())
            .map(|t| t.name.as_str())
            .unwrap_or("?")
    }

    /// Flat index ranges of the attention scorer (`W_att` and `f_att`).
    pub fn attention_ranges(&self) -> Vec<std::ops::Range<usize>> {
        self.tensors
            .iter()
            .filter(|t| t.name.starts_with("att."))
            .map(|t| t.offset..t.offset + t.len())
            .collect()
    }

    pub fn cast<U: Scalar>(&self) -> SgnParams<U> {
        SgnParams {
            config: self.config.clone(),
            layers: self.layers,
            tensors: self.tensors.clone(),
            data: self.data.iter().map(|x| U::lit(x.to_f64_lossy())).collect(),
        }
    }
}
