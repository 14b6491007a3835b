use rand::Rng;

use super::gmm::{gmm_head, GmmParams};
use super::params::SgnParams;
use crate::autodiff::{DenseRef, NodeId, Tape};
use crate::dynamic_env::DiaKey;
use crate::error::ModelError;
use crate::scalar::Scalar;
use crate::semantic_graph::GraphInput;

/// Optional training-time dropout. Masks are drawn from the supplied
/// generator, so a fixed seed fixes every mask.
pub struct Dropout<'r, R: Rng + ?Sized> {
    pub rate: f64,
    pub rng: &'r mut R,
}

fn apply_dropout<T: Scalar, R: Rng + ?Sized>(tape: &mut Tape<T>, x: NodeId, d: &mut Option<Dropout<'_, R>>) -> NodeId {
    match d {
        Some(d) if d.rate > 0.0 => {
            let keep = T::lit(1.0 / (1.0 - d.rate));
            let n = tape.value(x).len();
            let mask = (0..n).map(|_| if d.rng.gen::<f64>() < d.rate { T::zero() } else { keep }).collect();
            tape.mask(x, mask)
        }
        _ => x,
    }
}

fn dense_tanh<T: Scalar>(tape: &mut Tape<T>, x: NodeId, l: DenseRef) -> NodeId {
    let y = tape.dense(x, l);
    tape.tanh(y)
}

/// One gated recurrent step: update gate `z`, reset gate `r`, candidate
/// `n = tanh(W [x; r * h] + b)`, new state `n + z * (h - n)`.
pub fn gru_step<T: Scalar>(tape: &mut Tape<T>, x: NodeId, h: NodeId, gates: DenseRef, cand: DenseRef) -> NodeId {
    let hd = cand.n_out;
    let xh = tape.concat(&[x, h]);
    let pre = tape.dense(xh, gates);
    let zr = tape.sigmoid(pre);
    let z = tape.slice(zr, 0, hd);
    let r = tape.slice(zr, hd, hd);
    let rh = tape.mul(r, h);
    let xrh = tape.concat(&[x, rh]);
    let n = dense_tanh(tape, xrh, cand);
    let diff = tape.sub(h, n);
    let zd = tape.mul(z, diff);
    tape.add(n, zd)
}

/// Tape nodes of one forward evaluation, kept for inspection and loss
/// construction. Per-node vectors follow the input's node order.
#[derive(Debug, Clone)]
pub struct ForwardTrace {
    /// Recurrent states of the relative node features.
    pub h_hat_rel: Vec<NodeId>,
    /// Recurrent state of the reference node.
    pub h_hat_ref: NodeId,
    /// Encoded relative features.
    pub h_rel: Vec<NodeId>,
    /// Normalized attention coefficients, row `j` over columns `k`.
    pub alpha: Vec<NodeId>,
    /// Attention-weighted aggregates.
    pub h_bar: Vec<NodeId>,
    /// Encoded edges.
    pub h_edge: Vec<NodeId>,
    pub o: Vec<NodeId>,
    /// Raw mixture-head outputs.
    pub out1: Vec<NodeId>,
    /// Insertion scores before the logistic.
    pub out2: Vec<NodeId>,
}

/// Runs both recurrent encoders over the history. Masked frames and absent
/// nodes leave their states untouched; states start at zero.
pub fn encode_nodes<T: Scalar>(
    tape: &mut Tape<T>,
    params: &SgnParams<T>,
    input: &GraphInput,
) -> Result<(Vec<NodeId>, NodeId), ModelError> {
    let l = &params.layers;
    let n = input.node_count();
    if input.frames.iter().all(Option::is_none) {
        return Err(ModelError::EmptyHistory);
    }
    if n == 0 || input.reference >= n {
        return Err(ModelError::EmptyNeighborhood);
    }
    let zero = tape.input(vec![T::zero(); params.config.hidden_dim]);
    let mut h_rel = vec![zero; n];
    let mut h_ref = zero;
    for frame in input.frames.iter().flatten() {
        if frame.relative.len() != n {
            return Err(ModelError::DimensionMismatch { expected: n, got: frame.relative.len() });
        }
        let x_ref = tape.input(frame.reference.iter().map(|&v| T::lit(v)).collect());
        h_ref = gru_step(tape, x_ref, h_ref, l.rec2_zr, l.rec2_n);
        for (j, rel) in frame.relative.iter().enumerate() {
            if let Some(rel) = rel {
                let raw = tape.input(rel.iter().map(|&v| T::lit(v)).collect());
                let x = tape.dense(raw, l.rel);
                h_rel[j] = gru_step(tape, x, h_rel[j], l.rec1_zr, l.rec1_n);
            }
        }
    }
    Ok((h_rel, h_ref))
}

/// Encodes each relative state, scores every ordered pair, normalizes the
/// scores over the attended node and aggregates. With `ua_sgn` the
/// coefficients are uniform and the scorer is not evaluated.
pub fn spatial_attention<T: Scalar, R: Rng + ?Sized>(
    tape: &mut Tape<T>,
    params: &SgnParams<T>,
    h_hat_rel: &[NodeId],
    dropout: &mut Option<Dropout<'_, R>>,
) -> Result<(Vec<NodeId>, Vec<NodeId>, Vec<NodeId>), ModelError> {
    let l = &params.layers;
    let n = h_hat_rel.len();
    if n == 0 {
        return Err(ModelError::EmptyNeighborhood);
    }
    let h: Vec<NodeId> = h_hat_rel
        .iter()
        .map(|&x| {
            let e = dense_tanh(tape, x, l.enc1);
            apply_dropout(tape, e, dropout)
        })
        .collect();
    let mut alpha = Vec::with_capacity(n);
    if params.config.ua_sgn {
        let u = tape.input(vec![T::one() / T::lit(n as f64); n]);
        alpha = vec![u; n];
    } else {
        let left: Vec<NodeId> = h.iter().map(|&x| tape.dense(x, l.att_left)).collect();
        let right: Vec<NodeId> = h.iter().map(|&x| tape.dense(x, l.att_right)).collect();
        for &lj in &left {
            let scores: Vec<NodeId> = right
                .iter()
                .map(|&rk| {
                    let s = tape.add(lj, rk);
                    let t = tape.tanh(s);
                    tape.dense(t, l.att_score)
                })
                .collect();
            let a = tape.concat(&scores);
            alpha.push(tape.softmax(a));
        }
    }
    let h_bar = alpha.iter().map(|&a| tape.weighted_sum(a, &h)).collect();
    Ok((h, alpha, h_bar))
}

/// Edge encoding and decoding for every candidate `j`:
/// `o_ij = f_pred([h_bar_j ; f_enc2([h_hat_j ; h_hat_i])])`. With `nc_sgn`
/// the edge encoder sees `h_hat_i` alone.
pub fn predictor_encode<T: Scalar, R: Rng + ?Sized>(
    tape: &mut Tape<T>,
    params: &SgnParams<T>,
    h_hat_rel: &[NodeId],
    h_hat_ref: NodeId,
    h_bar: &[NodeId],
    dropout: &mut Option<Dropout<'_, R>>,
) -> Result<(Vec<NodeId>, Vec<NodeId>), ModelError> {
    if h_hat_rel.len() != h_bar.len() {
        return Err(ModelError::DimensionMismatch { expected: h_hat_rel.len(), got: h_bar.len() });
    }
    let l = &params.layers;
    let mut edges = Vec::with_capacity(h_bar.len());
    let mut outs = Vec::with_capacity(h_bar.len());
    let nc_edge = if params.config.nc_sgn {
        let e = dense_tanh(tape, h_hat_ref, l.enc2);
        Some(e)
    } else {
        None
    };
    for (&hj, &bar) in h_hat_rel.iter().zip(h_bar) {
        let e = match nc_edge {
            Some(e) => e,
            None => {
                let cat = tape.concat(&[hj, h_hat_ref]);
                dense_tanh(tape, cat, l.enc2)
            }
        };
        let e = apply_dropout(tape, e, dropout);
        let cat = tape.concat(&[bar, e]);
        let o = dense_tanh(tape, cat, l.pred);
        let o = apply_dropout(tape, o, dropout);
        edges.push(e);
        outs.push(o);
    }
    Ok((edges, outs))
}

/// Records the full network on `tape`.
pub fn forward_tape<T: Scalar, R: Rng + ?Sized>(
    tape: &mut Tape<T>,
    params: &SgnParams<T>,
    input: &GraphInput,
    mut dropout: Option<Dropout<'_, R>>,
) -> Result<ForwardTrace, ModelError> {
    let (h_hat_rel, h_hat_ref) = encode_nodes(tape, params, input)?;
    let (h_rel, alpha, h_bar) = spatial_attention(tape, params, &h_hat_rel, &mut dropout)?;
    let (h_edge, o) = predictor_encode(tape, params, &h_hat_rel, h_hat_ref, &h_bar, &mut dropout)?;
    let l = &params.layers;
    let out1 = o.iter().map(|&x| tape.dense(x, l.out1)).collect();
    let out2 = o.iter().map(|&x| tape.dense(x, l.out2)).collect();
    Ok(ForwardTrace { h_hat_rel, h_hat_ref, h_rel, alpha, h_bar, h_edge, o, out1, out2 })
}

/// Normalized insertion probabilities from the scores: each raw
/// `1 / (1 + exp(score))` divided by their sum. Falls back to uniform when
/// every raw value underflows.
pub fn insertion_probs<T: Scalar>(scores: &[T]) -> Result<Vec<T>, ModelError> {
    if scores.is_empty() {
        return Err(ModelError::EmptyNeighborhood);
    }
    if scores.iter().any(|s| s.is_nan()) {
        return Err(ModelError::NonFinite("insertion score".into()));
    }
    let raw: Vec<T> = scores.iter().map(|&s| T::one() / (T::one() + s.exp())).collect();
    if raw.iter().all(|&w| w < T::lit(1e-30)) {
        log::warn!("all insertion probabilities underflow; using uniform weights");
        let n = T::lit(scores.len() as f64);
        return Ok(vec![T::one() / n; scores.len()]);
    }
    let sum: T = raw.iter().copied().sum();
    Ok(raw.into_iter().map(|w| w / sum).collect())
}

/// Network output for one candidate DIA.
#[derive(Debug, Clone, PartialEq)]
pub struct EdgeOutput<T> {
    pub key: DiaKey,
    /// Decoded edge vector.
    pub o: Vec<T>,
    /// Mixture over `(y_s1 [m], y_s2 [m], y_t [s])`.
    pub gmm: GmmParams<T>,
    /// Normalized insertion probability.
    pub w: T,
    /// Score fed to the logistic.
    pub score: T,
}

/// Inference result for one reference node.
#[derive(Debug, Clone, PartialEq)]
pub struct Prediction<T> {
    pub reference: usize,
    pub edges: Vec<EdgeOutput<T>>,
    /// Attention coefficients, row = attending node, column = attended node.
    pub attention: Vec<Vec<T>>,
}

impl<T: Scalar> Prediction<T> {
    /// Candidate with the largest insertion probability (first on ties).
    pub fn argmax(&self) -> usize {
        let mut best = 0;
        for (k, e) in self.edges.iter().enumerate() {
            if e.w > self.edges[best].w {
                best = k;
            }
        }
        best
    }
}

/// Inference: dropout off, mixtures in physical units.
pub fn forward<T: Scalar>(params: &SgnParams<T>, input: &GraphInput) -> Result<Prediction<T>, ModelError> {
    let mut tape = Tape::new(&params.data);
    let trace = forward_tape::<T, rand_chacha::ChaCha8Rng>(&mut tape, params, input, None)?;
    let cfg = &params.config;
    let scale = cfg.target_scale.map(T::lit);
    let scores: Vec<T> = trace.out2.iter().map(|&s| tape.scalar(s)).collect();
    let w = insertion_probs(&scores)?;
    let mut edges = Vec::with_capacity(scores.len());
    for (j, key) in input.keys.iter().enumerate() {
        let gmm = gmm_head(tape.value(trace.out1[j]), cfg.mixtures, T::lit(cfg.k_reg), cfg.raw_sigma)?.scaled(scale);
        let o = tape.value(trace.o[j]).to_vec();
        if o.iter().any(|x| !x.is_finite()) {
            return Err(ModelError::NonFinite("edge encoding".into()));
        }
        edges.push(EdgeOutput { key: key.clone(), o, gmm, w: w[j], score: scores[j] });
    }
    let attention = trace.alpha.iter().map(|&a| tape.value(a).to_vec()).collect();
    Ok(Prediction { reference: input.reference, edges, attention })
}

/// Records the loss of one labeled prediction on a tape that already holds
/// its forward pass: negative log density of the true candidate plus
/// `beta` times the negative log of its normalized insertion probability.
pub fn record_loss<T: Scalar>(
    tape: &mut Tape<T>,
    params: &SgnParams<T>,
    trace: &ForwardTrace,
    target: usize,
    y: [f64; 3],
    beta: T,
) -> Result<NodeId, ModelError> {
    let n = trace.out2.len();
    if target >= n {
        return Err(ModelError::InvalidLabel(format!("target {target} out of {n} candidates")));
    }
    let cfg = &params.config;
    let yn = [0, 1, 2].map(|k| T::lit(y[k] / cfg.target_scale[k]));
    let log_f = tape.gmm_log_density(trace.out1[target], yn, cfg.mixtures, T::lit(cfg.k_reg), cfg.raw_sigma)?;
    let scores = tape.concat(&trace.out2);
    // log of 1 / (1 + e^s) is -softplus(s)
    let sp = tape.softplus(scores);
    let log_raw = tape.scale(sp, -T::one());
    let log_w = tape.log_softmax(log_raw);
    let log_w_t = tape.slice(log_w, target, 1);
    let a = tape.scale(log_f, -T::one());
    let b = tape.scale(log_w_t, -beta);
    Ok(tape.add(a, b))
}

/// Loss of one graph given candidate densities `f`, one-hot labels `w_hat`
/// and normalized probabilities `w`:
/// `-log(sum_k w_hat_k f_k) - beta * sum_k w_hat_k log(w_k)`.
pub fn loss_terms<T: Scalar>(f: &[T], w_hat: &[T], w: &[T], beta: T) -> Result<T, ModelError> {
    if f.len() != w_hat.len() || w.len() != w_hat.len() {
        return Err(ModelError::DimensionMismatch { expected: w_hat.len(), got: f.len().min(w.len()) });
    }
    let ones = w_hat.iter().filter(|&&v| v == T::one()).count();
    let zeros = w_hat.iter().filter(|&&v| v == T::zero()).count();
    if ones != 1 || ones + zeros != w_hat.len() {
        return Err(ModelError::InvalidLabel("ground truth is not one-hot".into()));
    }
    let mix: T = f.iter().zip(w_hat).map(|(&f, &h)| h * f).sum();
    let ce: T = w.iter().zip(w_hat).filter(|(_, &h)| h != T::zero()).map(|(&w, &h)| h * w.ln()).sum();
    Ok(-mix.ln() - beta * ce)
}

/// Mean loss over labeled inputs, dropout off.
pub fn loss<T: Scalar>(
    params: &SgnParams<T>,
    batch: &[(&GraphInput, usize, [f64; 3])],
    beta: T,
) -> Result<T, ModelError> {
    if batch.is_empty() {
        return Err(ModelError::EmptyHistory);
    }
    let mut total = T::zero();
    for (input, target, y) in batch {
        let mut tape = Tape::new(&params.data);
        let trace = forward_tape::<T, rand_chacha::ChaCha8Rng>(&mut tape, params, input, None)?;
        let l = record_loss(&mut tape, params, &trace, *target, *y, beta)?;
        total += tape.scalar(l);
    }
    Ok(total / T::lit(batch.len() as f64))
}
