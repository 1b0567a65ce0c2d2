use core::fmt;

use super::{NuisancePrediction, NuisanceSource};
use crate::data::TreatmentArm;
use crate::dgp::{logit, outcome_mean, propensity, sigmoid, DgpParams};

/// Nuisances taken from the data-generating process itself, optionally
/// corrupted on purpose to probe double robustness.
pub struct OracleNuisance<'a> {
    params: &'a DgpParams,
    clip: f64,
    logit_shift: f64,
    outcome_offset: Option<&'a dyn Fn(&[f64], TreatmentArm) -> f64>,
}

impl fmt::Debug for OracleNuisance<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("OracleNuisance")
            .field("clip", &self.clip)
            .field("logit_shift", &self.logit_shift)
            .field("outcome_offset", &self.outcome_offset.is_some())
            .finish()
    }
}

impl<'a> OracleNuisance<'a> {
    pub fn new(params: &'a DgpParams, clip: f64) -> Self {
        OracleNuisance { params, clip, logit_shift: 0.0, outcome_offset: None }
    }

    /// Replaces `pi(x)` by `sigmoid(logit(pi(x)) + shift)` before clipping.
    pub fn with_logit_shift(mut self, shift: f64) -> Self {
        self.logit_shift = shift;
        self
    }

    /// Adds `offset(x, a)` to each outcome surface.
    pub fn with_outcome_offset(mut self, offset: &'a dyn Fn(&[f64], TreatmentArm) -> f64) -> Self {
        self.outcome_offset = Some(offset);
        self
    }

    pub fn predict(&self, x: &[f64]) -> NuisancePrediction {
        let offset = |a| self.outcome_offset.map_or(0.0, |f| f(x, a));
        let p = propensity(x, self.params);
        let p = if self.logit_shift == 0.0 { p } else { sigmoid(logit(p) + self.logit_shift) };
        NuisancePrediction {
            mu0: outcome_mean(x, TreatmentArm::Control, self.params) + offset(TreatmentArm::Control),
            mu1: outcome_mean(x, TreatmentArm::Treated, self.params) + offset(TreatmentArm::Treated),
            pi: p.clamp(self.clip, 1.0 - self.clip),
        }
    }
}

impl NuisanceSource for OracleNuisance<'_> {
    fn predict_record(&self, _index: usize, x: &[f64]) -> NuisancePrediction {
        self.predict(x)
    }
}
