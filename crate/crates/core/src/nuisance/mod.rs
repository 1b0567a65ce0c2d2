//! Nuisance functions fit on the covariates: per-arm outcome regressions
//! `mu_a(x)` and the propensity score `pi(x)`.

mod bundle;
mod logistic;
mod mlp;
mod oracle;
mod ridge;

pub use bundle::{fit_bundle, FoldModels, NuisanceBundle, NuisanceConfig, OutcomeModel, OutcomeModelKind};
pub use logistic::{fit_logistic, LogisticConfig, LogisticModel};
pub use mlp::{fit_mlp, MlpHyper, MlpRegressor, Network};
pub use oracle::OracleNuisance;
pub use ridge::{fit_ridge, RidgeModel};

/// Nuisance values for one record.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NuisancePrediction {
    pub mu0: f64,
    pub mu1: f64,
    pub pi: f64,
}

/// Anything that can supply nuisance predictions for training record `index`
/// with covariates `x`. Fitted bundles route `index` to an out-of-fold model.
pub trait NuisanceSource {
    fn predict_record(&self, index: usize, x: &[f64]) -> NuisancePrediction;
}
