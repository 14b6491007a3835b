use serde::{Deserialize, Serialize};

use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OptimizerKind {
    Adam,
    Sgd,
}

/// First-order optimizer state over a flat parameter buffer.
#[derive(Debug, Clone)]
pub enum Optimizer<T> {
    Sgd { lr: T },
    Adam { lr: T, beta1: T, beta2: T, eps: T, m: Vec<T>, v: Vec<T>, t: i32 },
}

impl<T: Scalar> Optimizer<T> {
    pub fn new(kind: OptimizerKind, lr: f64, n: usize) -> Self {
        match kind {
            OptimizerKind::Sgd => Self::Sgd { lr: T::lit(lr) },
            OptimizerKind::Adam => Self::Adam {
                lr: T::lit(lr),
                beta1: T::lit(0.9),
                beta2: T::lit(0.999),
                eps: T::lit(1e-8),
                m: vec![T::zero(); n],
                v: vec![T::zero(); n],
                t: 0,
            },
        }
    }

    pub fn step(&mut self, params: &mut [T], grad: &[T]) {
        match self {
            Self::Sgd { lr } => {
                for (p, g) in params.iter_mut().zip(grad) {
                    *p -= *lr * *g;
                }
            }
            Self::Adam { lr, beta1, beta2, eps, m, v, t } => {
                *t += 1;
                let c1 = T::one() - beta1.powi(*t);
                let c2 = T::one() - beta2.powi(*t);
                for i in 0..params.len() {
                    let g = grad[i];
                    m[i] = *beta1 * m[i] + (T::one() - *beta1) * g;
                    v[i] = *beta2 * v[i] + (T::one() - *beta2) * g * g;
                    let mh = m[i] / c1;
                    let vh = v[i] / c2;
                    params[i] -= *lr * mh / (vh.sqrt() + *eps);
                }
            }
        }
    }
}

/// Scales `grad` in place so its Euclidean norm is at most `max_norm`;
/// returns the norm before clipping.
pub fn clip_global_norm<T: Scalar>(grad: &mut [T], max_norm: T) -> T {
    let norm = grad.iter().map(|&g| g * g).sum::<T>().sqrt();
    if norm > max_norm && norm > T::zero() {
        let s = max_norm / norm;
        for g in grad.iter_mut() {
            *g *= s;
        }
    }
    norm
}
