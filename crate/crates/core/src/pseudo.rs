//! Per-record pseudo-outcomes whose conditional mean given `X` is the CATE
//! when the nuisances are right.

use alloc::vec::Vec;

use crate::data::{TrainRecord, TreatmentArm};
use crate::nuisance::{NuisancePrediction, NuisanceSource};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub enum PseudoKind {
    /// Doubly robust.
    #[default]
    DR,
    /// Regression adjusted.
    RA,
    /// Propensity weighted.
    PW,
}

impl PseudoKind {
    pub fn name(self) -> &'static str {
        match self {
            PseudoKind::DR => "dr",
            PseudoKind::RA => "ra",
            PseudoKind::PW => "pw",
        }
    }
}

/// Terms of the DR form. `value == mu1_hat - mu0_hat + residual_term_1 - residual_term_0`.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct PseudoComponents {
    pub mu1_hat: f64,
    pub mu0_hat: f64,
    pub pi_hat: f64,
    pub residual_term_1: f64,
    pub residual_term_0: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct PseudoOutcome {
    pub value: f64,
    pub kind: PseudoKind,
    pub components: PseudoComponents,
}

impl PseudoComponents {
    pub fn reassemble(&self) -> f64 {
        self.mu1_hat - self.mu0_hat + self.residual_term_1 - self.residual_term_0
    }
}

fn finite(v: f64, field: &'static str) -> Result<f64> {
    if v.is_finite() {
        Ok(v)
    } else {
        Err(Error::NonFinite(field))
    }
}

fn propensity(pi: f64) -> Result<f64> {
    finite(pi, "pi_hat")?;
    if pi > 0.0 && pi < 1.0 {
        Ok(pi)
    } else {
        Err(Error::InvalidInput(alloc::format!("pi_hat must lie strictly inside (0, 1), got {pi}")))
    }
}

pub fn dr_pseudo(y: f64, a: TreatmentArm, mu1_hat: f64, mu0_hat: f64, pi_hat: f64) -> Result<PseudoOutcome> {
    let y = finite(y, "y")?;
    let mu1 = finite(mu1_hat, "mu1_hat")?;
    let mu0 = finite(mu0_hat, "mu0_hat")?;
    let pi = propensity(pi_hat)?;
    let (r1, r0) = match a {
        TreatmentArm::Treated => ((y - mu1) / pi, 0.0),
        TreatmentArm::Control => (0.0, (y - mu0) / (1.0 - pi)),
    };
    let components =
        PseudoComponents { mu1_hat: mu1, mu0_hat: mu0, pi_hat: pi, residual_term_1: r1, residual_term_0: r0 };
    Ok(PseudoOutcome { value: components.reassemble(), kind: PseudoKind::DR, components })
}

pub fn ra_pseudo(y: f64, a: TreatmentArm, mu1_hat: f64, mu0_hat: f64) -> Result<PseudoOutcome> {
    let y = finite(y, "y")?;
    let mu1 = finite(mu1_hat, "mu1_hat")?;
    let mu0 = finite(mu0_hat, "mu0_hat")?;
    let value = match a {
        TreatmentArm::Treated => y - mu0,
        TreatmentArm::Control => mu1 - y,
    };
    let components =
        PseudoComponents { mu1_hat: mu1, mu0_hat: mu0, pi_hat: f64::NAN, residual_term_1: 0.0, residual_term_0: 0.0 };
    Ok(PseudoOutcome { value, kind: PseudoKind::RA, components })
}

pub fn pw_pseudo(y: f64, a: TreatmentArm, pi_hat: f64) -> Result<PseudoOutcome> {
    let y = finite(y, "y")?;
    let pi = propensity(pi_hat)?;
    let value = match a {
        TreatmentArm::Treated => y / pi,
        TreatmentArm::Control => -y / (1.0 - pi),
    };
    let components =
        PseudoComponents { mu1_hat: f64::NAN, mu0_hat: f64::NAN, pi_hat: pi, residual_term_1: 0.0, residual_term_0: 0.0 };
    Ok(PseudoOutcome { value, kind: PseudoKind::PW, components })
}

pub fn pseudo_outcome(kind: PseudoKind, y: f64, a: TreatmentArm, n: &NuisancePrediction) -> Result<PseudoOutcome> {
    match kind {
        PseudoKind::DR => dr_pseudo(y, a, n.mu1, n.mu0, n.pi),
        PseudoKind::RA => ra_pseudo(y, a, n.mu1, n.mu0),
        PseudoKind::PW => pw_pseudo(y, a, n.pi),
    }
}

/// Pseudo-outcomes for every training record, with nuisances taken from
/// `source` (out-of-fold when `source` is a cross-fit bundle).
pub fn pseudo_outcomes(
    records: &[TrainRecord],
    source: &dyn NuisanceSource,
    kind: PseudoKind,
) -> Result<Vec<PseudoOutcome>> {
    records
        .iter()
        .enumerate()
        .map(|(i, r)| {
            let n = source.predict_record(i, r.x.as_slice());
            pseudo_outcome(kind, r.y, r.a, &n)
                .map_err(|e| Error::InvalidInput(alloc::format!("record {i}: {e}")))
        })
        .collect()
}
