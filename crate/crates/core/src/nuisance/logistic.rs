use alloc::vec;
use alloc::vec::Vec;

use crate::data::TreatmentArm;
use crate::dgp::sigmoid;
use crate::linalg::{dot, solve_spd, Matrix};
use crate::math;
use crate::{Error, Result};

/// Propensity model `sigmoid(w'x + b)` with predictions clipped to `[clip, 1 - clip]`.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct LogisticModel {
    pub weights: Vec<f64>,
    pub bias: f64,
    pub clip: f64,
    pub iterations: usize,
    pub converged: bool,
    /// Set when the data were separable and a ridge-stabilized fit was returned.
    pub separation_warning: bool,
}

impl LogisticModel {
    /// Unclipped probability.
    pub fn predict_raw(&self, x: &[f64]) -> f64 {
        sigmoid(dot(&self.weights, x) + self.bias)
    }

    pub fn predict(&self, x: &[f64]) -> f64 {
        self.predict_raw(x).clamp(self.clip, 1.0 - self.clip)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct LogisticConfig {
    pub max_iter: usize,
    pub tol: f64,
    pub clip: f64,
}

impl Default for LogisticConfig {
    fn default() -> Self {
        LogisticConfig { max_iter: 100, tol: 1e-10, clip: 0.01 }
    }
}

// Coefficient norm beyond which the likelihood is treated as unbounded.
const SEPARATION_NORM: f64 = 30.0;
const STABILIZING_PENALTY: f64 = 1.0;

/// Maximizes the Bernoulli log-likelihood by iteratively reweighted least
/// squares (Newton steps on `[1, x]`).
pub fn fit_logistic<R: AsRef<[f64]>>(xs: &[R], arms: &[TreatmentArm], cfg: &LogisticConfig) -> Result<LogisticModel> {
    if xs.len() != arms.len() {
        return Err(Error::LengthMismatch { expected: xs.len(), found: arms.len() });
    }
    for arm in TreatmentArm::BOTH {
        if !arms.contains(&arm) {
            return Err(Error::ArmMissing(arm.bit()));
        }
    }
    if !(cfg.clip > 0.0 && cfg.clip < 0.5) {
        return Err(Error::InvalidInput("clip must lie in (0, 0.5)".into()));
    }
    let d = xs[0].as_ref().len();
    if xs.iter().any(|x| x.as_ref().len() != d) {
        return Err(Error::InvalidInput("rows have inconsistent dimension".into()));
    }
    if xs.iter().any(|x| x.as_ref().iter().any(|v| !v.is_finite())) {
        return Err(Error::NonFinite("x"));
    }
    match irls(xs, arms, cfg, 0.0) {
        Ok(model) => Ok(model),
        Err(Error::Singular(_)) | Err(Error::Diverged(_)) => {
            let mut model = irls(xs, arms, cfg, STABILIZING_PENALTY)?;
            model.separation_warning = true;
            Ok(model)
        }
        Err(e) => Err(e),
    }
}

fn irls<R: AsRef<[f64]>>(xs: &[R], arms: &[TreatmentArm], cfg: &LogisticConfig, penalty: f64) -> Result<LogisticModel> {
    let d = xs[0].as_ref().len();
    let p = d + 1;
    // theta[0] is the bias
    let mut theta = vec![0.0; p];
    let mut converged = false;
    let mut iterations = 0;
    for it in 0..cfg.max_iter {
        iterations = it + 1;
        let mut hess = Matrix::zeros(p, p);
        let mut grad = vec![0.0; p];
        for (x, arm) in xs.iter().zip(arms) {
            let x = x.as_ref();
            let eta = theta[0] + dot(&theta[1..], x);
            let mu = sigmoid(eta);
            let w = mu * (1.0 - mu);
            let r = arm.indicator() - mu;
            let feature = |k: usize| if k == 0 { 1.0 } else { x[k - 1] };
            for i in 0..p {
                let fi = feature(i);
                grad[i] += fi * r;
                for j in 0..=i {
                    hess.add(i, j, w * fi * feature(j));
                }
            }
        }
        for i in 0..p {
            for j in 0..i {
                let v = hess.get(i, j);
                hess.set(j, i, v);
            }
        }
        for k in 1..p {
            grad[k] -= penalty * theta[k];
            hess.add(k, k, penalty);
        }
        let step = solve_spd(hess, &grad)?;
        let mut max_change: f64 = 0.0;
        for (t, s) in theta.iter_mut().zip(&step) {
            *t += s;
            max_change = max_change.max(math::abs(*s));
        }
        let norm = math::sqrt(dot(&theta, &theta));
        if !norm.is_finite() || norm > SEPARATION_NORM {
            return Err(Error::Diverged("coefficients diverge; data look separable".into()));
        }
        if max_change < cfg.tol {
            converged = true;
            break;
        }
    }
    Ok(LogisticModel {
        bias: theta[0],
        weights: theta[1..].to_vec(),
        clip: cfg.clip,
        iterations,
        converged,
        separation_warning: false,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;
    use TreatmentArm::{Control as C, Treated as T};

    #[test]
    fn needs_both_arms() {
        let xs = vec![vec![0.0], vec![1.0]];
        assert_eq!(fit_logistic(&xs, &[T, T], &LogisticConfig::default()), Err(Error::ArmMissing(0)));
    }

    #[test]
    fn separable_data_fall_back_to_penalized_fit() {
        let xs: Vec<Vec<f64>> = (0..10).map(|i| vec![i as f64 - 4.5]).collect();
        let arms: Vec<_> = (0..10).map(|i| if i < 5 { C } else { T }).collect();
        let m = fit_logistic(&xs, &arms, &LogisticConfig::default()).unwrap();
        assert!(m.separation_warning);
        assert!(m.weights[0] > 0.0 && m.weights[0].is_finite());
    }

    #[test]
    fn clipping_contract() {
        let m = LogisticModel {
            weights: vec![3.0],
            bias: 0.0,
            clip: 0.01,
            iterations: 0,
            converged: true,
            separation_warning: false,
        };
        assert_eq!(m.predict(&[100.0]), 0.99);
        assert_eq!(m.predict(&[-100.0]), 0.01);
        assert!((m.predict(&[0.0]) - 0.5).abs() < 1e-15);
    }
}
