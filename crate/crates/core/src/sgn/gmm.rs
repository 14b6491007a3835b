use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::ModelError;
use crate::scalar::Scalar;

pub type Mat3<T> = [[T; 3]; 3];

/// Raw output values per mixture component: one mixing logit, three means and
/// six covariance parameters.
pub const GMM_OUTPUTS_PER_COMPONENT: usize = 10;

/// Lower Cholesky factor of a symmetric 3x3 matrix, `None` unless positive
/// definite.
pub fn cholesky3<T: Scalar>(a: &Mat3<T>) -> Option<Mat3<T>> {
    let mut l = [[T::zero(); 3]; 3];
    for i in 0..3 {
        for j in 0..=i {
            let mut s = a[i][j];
            for k in 0..j {
                s -= l[i][k] * l[j][k];
            }
            if i == j {
                if !(s > T::zero()) || !s.is_finite() {
                    return None;
                }
                l[i][i] = s.sqrt();
            } else {
                l[i][j] = s / l[j][j];
            }
        }
    }
    Some(l)
}

fn forward_sub<T: Scalar>(l: &Mat3<T>, b: [T; 3]) -> [T; 3] {
    let z0 = b[0] / l[0][0];
    let z1 = (b[1] - l[1][0] * z0) / l[1][1];
    let z2 = (b[2] - l[2][0] * z0 - l[2][1] * z1) / l[2][2];
    [z0, z1, z2]
}

fn back_sub_t<T: Scalar>(l: &Mat3<T>, z: [T; 3]) -> [T; 3] {
    let x2 = z[2] / l[2][2];
    let x1 = (z[1] - l[2][1] * x2) / l[1][1];
    let x0 = (z[0] - l[1][0] * x1 - l[2][0] * x2) / l[0][0];
    [x0, x1, x2]
}

/// Solves `(L L^T) x = b`.
fn chol_solve<T: Scalar>(l: &Mat3<T>, b: [T; 3]) -> [T; 3] {
    back_sub_t(l, forward_sub(l, b))
}

fn chol_inverse<T: Scalar>(l: &Mat3<T>) -> Mat3<T> {
    let mut inv = [[T::zero(); 3]; 3];
    for c in 0..3 {
        let mut e = [T::zero(); 3];
        e[c] = T::one();
        let x = chol_solve(l, e);
        for r in 0..3 {
            inv[r][c] = x[r];
        }
    }
    inv
}

fn log_2pi<T: Scalar>() -> T {
    T::lit((2.0 * std::f64::consts::PI).ln())
}

/// Log density of a trivariate normal given the Cholesky factor of its
/// covariance.
fn normal_log_density<T: Scalar>(y: [T; 3], mu: [T; 3], l: &Mat3<T>) -> T {
    let r = [y[0] - mu[0], y[1] - mu[1], y[2] - mu[2]];
    let z = forward_sub(l, r);
    let maha = z[0] * z[0] + z[1] * z[1] + z[2] * z[2];
    let log_det = T::lit(2.0) * (l[0][0].ln() + l[1][1].ln() + l[2][2].ln());
    T::lit(-0.5) * (maha + log_det + T::lit(3.0) * log_2pi::<T>())
}

fn log_sum_exp<T: Scalar>(v: &[T]) -> T {
    let m = v.iter().copied().fold(T::neg_infinity(), T::max);
    if !m.is_finite() {
        return m;
    }
    m + v.iter().map(|&x| (x - m).exp()).sum::<T>().ln()
}

fn softmax<T: Scalar>(v: &[T]) -> Vec<T> {
    let m = v.iter().copied().fold(T::neg_infinity(), T::max);
    let e: Vec<T> = v.iter().map(|&x| (x - m).exp()).collect();
    let s: T = e.iter().copied().sum();
    e.into_iter().map(|x| x / s).collect()
}

/// Gaussian mixture over `(y_s1, y_s2, y_t)`. `sigma` holds the regularized
/// covariances.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GmmParams<T> {
    pub alpha: Vec<T>,
    pub mu: Vec<[T; 3]>,
    pub sigma: Vec<Mat3<T>>,
}

/// Builds the covariance of one component from its six raw parameters.
/// Cholesky form: `L` has exponentiated diagonal and free lower entries.
/// Raw form: exponentiated standard deviations on the diagonal and the raw
/// values as covariances.
fn covariance<T: Scalar>(c: &[T], raw_sigma: bool) -> (Mat3<T>, Mat3<T>) {
    if raw_sigma {
        let d = [(c[0] + c[0]).exp(), (c[1] + c[1]).exp(), (c[2] + c[2]).exp()];
        let s = [[d[0], c[3], c[4]], [c[3], d[1], c[5]], [c[4], c[5], d[2]]];
        (s, [[T::zero(); 3]; 3])
    } else {
        let z = T::zero();
        let l = [[c[0].exp(), z, z], [c[3], c[1].exp(), z], [c[4], c[5], c[2].exp()]];
        let mut s = [[z; 3]; 3];
        for i in 0..3 {
            for j in 0..3 {
                s[i][j] = (0..3).map(|k| l[i][k] * l[j][k]).sum();
            }
        }
        (s, l)
    }
}

/// Maps the raw head output (layout: `M` logits, `3M` means, `6M`
/// covariance parameters) to mixture parameters, adding `k_reg` to every
/// covariance diagonal.
pub fn gmm_head<T: Scalar>(raw: &[T], m: usize, k_reg: T, raw_sigma: bool) -> Result<GmmParams<T>, ModelError> {
    if raw.len() != GMM_OUTPUTS_PER_COMPONENT * m || m == 0 {
        return Err(ModelError::DimensionMismatch { expected: GMM_OUTPUTS_PER_COMPONENT * m, got: raw.len() });
    }
    if raw.iter().any(|x| !x.is_finite()) {
        return Err(ModelError::NonFinite("mixture head output".into()));
    }
    let alpha = softmax(&raw[..m]);
    let mu = (0..m).map(|k| [raw[m + 3 * k], raw[m + 3 * k + 1], raw[m + 3 * k + 2]]).collect();
    let sigma = (0..m)
        .map(|k| {
            let (mut s, _) = covariance(&raw[4 * m + 6 * k..4 * m + 6 * k + 6], raw_sigma);
            for (i, row) in s.iter_mut().enumerate() {
                row[i] += k_reg;
            }
            s
        })
        .collect();
    let out = GmmParams { alpha, mu, sigma };
    if out.alpha.iter().chain(out.sigma.iter().flatten().flatten()).any(|x| !x.is_finite()) {
        return Err(ModelError::NonFinite("mixture parameters".into()));
    }
    Ok(out)
}

/// Log mixture density at `y` and its gradient with respect to the raw head
/// output, in one pass.
pub fn gmm_log_density_with_grad<T: Scalar>(
    raw: &[T],
    y: [T; 3],
    m: usize,
    k_reg: T,
    raw_sigma: bool,
) -> Result<(T, Vec<T>), ModelError> {
    let params = gmm_head(raw, m, k_reg, raw_sigma)?;
    let mut chols = Vec::with_capacity(m);
    for s in &params.sigma {
        chols.push(cholesky3(s).ok_or_else(|| ModelError::InvalidDistribution("covariance not positive definite".into()))?);
    }
    let comp: Vec<T> =
        (0..m).map(|k| params.alpha[k].ln() + normal_log_density(y, params.mu[k], &chols[k])).collect();
    let value = log_sum_exp(&comp);
    if !value.is_finite() {
        return Err(ModelError::NonFinite("mixture log density".into()));
    }
    let gamma: Vec<T> = comp.iter().map(|&c| (c - value).exp()).collect();
    let half = T::lit(0.5);
    let two = T::lit(2.0);
    let mut grad = vec![T::zero(); raw.len()];
    for k in 0..m {
        let g = gamma[k];
        grad[k] = g - params.alpha[k];
        let r = [y[0] - params.mu[k][0], y[1] - params.mu[k][1], y[2] - params.mu[k][2]];
        let u = chol_solve(&chols[k], r);
        for i in 0..3 {
            grad[m + 3 * k + i] = g * u[i];
        }
        let inv = chol_inverse(&chols[k]);
        let mut gs = [[T::zero(); 3]; 3];
        for i in 0..3 {
            for j in 0..3 {
                gs[i][j] = g * half * (u[i] * u[j] - inv[i][j]);
            }
        }
        let c = &raw[4 * m + 6 * k..4 * m + 6 * k + 6];
        let dc = &mut grad[4 * m + 6 * k..4 * m + 6 * k + 6];
        if raw_sigma {
            for i in 0..3 {
                dc[i] = gs[i][i] * two * (c[i] + c[i]).exp();
            }
            dc[3] = two * gs[1][0];
            dc[4] = two * gs[2][0];
            dc[5] = two * gs[2][1];
        } else {
            let (_, l) = covariance(c, false);
            // d/dL = 2 G L on the lower triangle
            let mut gl = [[T::zero(); 3]; 3];
            for i in 0..3 {
                for j in 0..=i {
                    gl[i][j] = two * (0..3).map(|q| gs[i][q] * l[q][j]).sum::<T>();
                }
            }
            for i in 0..3 {
                dc[i] = gl[i][i] * l[i][i];
            }
            dc[3] = gl[1][0];
            dc[4] = gl[2][0];
            dc[5] = gl[2][1];
        }
    }
    Ok((value, grad))
}

impl<T: Scalar> GmmParams<T> {
    pub fn components(&self) -> usize {
        self.alpha.len()
    }

    /// Checks simplex weights and positive-definite covariances.
    pub fn validate(&self) -> Result<(), ModelError> {
        let m = self.alpha.len();
        if m == 0 || self.mu.len() != m || self.sigma.len() != m {
            return Err(ModelError::InvalidDistribution("component count mismatch".into()));
        }
        let tol = T::lit(1e-9).max(T::epsilon() * T::lit(100.0));
        let sum: T = self.alpha.iter().copied().sum();
        if self.alpha.iter().any(|&a| !(a >= T::zero())) || (sum - T::one()).abs() > tol {
            return Err(ModelError::InvalidDistribution("mixing weights are not on the simplex".into()));
        }
        for s in &self.sigma {
            for i in 0..3 {
                for j in 0..i {
                    if (s[i][j] - s[j][i]).abs() > tol * (s[i][j].abs() + T::one()) {
                        return Err(ModelError::InvalidDistribution("covariance not symmetric".into()));
                    }
                }
            }
            if cholesky3(s).is_none() {
                return Err(ModelError::InvalidDistribution("covariance not positive definite".into()));
            }
        }
        if self.mu.iter().flatten().any(|x| !x.is_finite()) {
            return Err(ModelError::NonFinite("mixture means".into()));
        }
        Ok(())
    }

    pub fn log_pdf(&self, y: [T; 3]) -> Result<T, ModelError> {
        let mut comp = Vec::with_capacity(self.alpha.len());
        for k in 0..self.alpha.len() {
            let l = cholesky3(&self.sigma[k])
                .ok_or_else(|| ModelError::InvalidDistribution("covariance not positive definite".into()))?;
            comp.push(self.alpha[k].ln() + normal_log_density(y, self.mu[k], &l));
        }
        Ok(log_sum_exp(&comp))
    }

    pub fn pdf(&self, y: [T; 3]) -> Result<T, ModelError> {
        Ok(self.log_pdf(y)?.exp())
    }

    /// Mean of the mixture.
    pub fn mean(&self) -> [T; 3] {
        let mut out = [T::zero(); 3];
        for (a, mu) in self.alpha.iter().zip(&self.mu) {
            for i in 0..3 {
                out[i] += *a * mu[i];
            }
        }
        out
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<[T; 3], ModelError> {
        let u: f64 = rng.gen();
        let mut acc = 0.0;
        let mut k = self.alpha.len() - 1;
        for (i, a) in self.alpha.iter().enumerate() {
            acc += a.to_f64_lossy();
            if u < acc {
                k = i;
                break;
            }
        }
        let l = cholesky3(&self.sigma[k])
            .ok_or_else(|| ModelError::InvalidDistribution("covariance not positive definite".into()))?;
        let z: [T; 3] = [0; 3].map(|_| T::lit(rng.sample::<f64, _>(StandardNormal)));
        let mut y = self.mu[k];
        for i in 0..3 {
            for j in 0..=i {
                y[i] += l[i][j] * z[j];
            }
        }
        Ok(y)
    }

    /// Rescales every output axis: `y -> y * scale`.
    pub fn scaled(&self, scale: [T; 3]) -> Self {
        let mu = self.mu.iter().map(|m| [m[0] * scale[0], m[1] * scale[1], m[2] * scale[2]]).collect();
        let sigma = self
            .sigma
            .iter()
            .map(|s| {
                let mut o = *s;
                for i in 0..3 {
                    for j in 0..3 {
                        o[i][j] = s[i][j] * scale[i] * scale[j];
                    }
                }
                o
            })
            .collect();
        Self { alpha: self.alpha.clone(), mu, sigma }
    }

    pub fn cast<U: Scalar>(&self) -> GmmParams<U> {
        let c = |x: T| U::lit(x.to_f64_lossy());
        GmmParams {
            alpha: self.alpha.iter().map(|&a| c(a)).collect(),
            mu: self.mu.iter().map(|m| m.map(c)).collect(),
            sigma: self.sigma.iter().map(|s| s.map(|r| r.map(c))).collect(),
        }
    }
}
