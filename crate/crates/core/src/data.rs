//! Records and dataset containers shared by every module.

use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

use crate::rng::Split;
use crate::{Error, Result};

/// Free-form subgroup labels, e.g. `{"sex": "F", "age": "O"}`.
pub type GroupTags = BTreeMap<String, String>;

/// The full confounder vector observed at training time.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(transparent))]
pub struct CovariateVector(pub Vec<f64>);

impl CovariateVector {
    pub fn new(values: Vec<f64>) -> Self {
        CovariateVector(values)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|v| v.is_finite())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(into = "u8", try_from = "u8"))]
pub enum TreatmentArm {
    Control,
    Treated,
}

impl TreatmentArm {
    pub const BOTH: [TreatmentArm; 2] = [TreatmentArm::Control, TreatmentArm::Treated];

    pub fn from_bit(bit: u8) -> Option<Self> {
        match bit {
            0 => Some(TreatmentArm::Control),
            1 => Some(TreatmentArm::Treated),
            _ => None,
        }
    }

    pub fn bit(self) -> u8 {
        match self {
            TreatmentArm::Control => 0,
            TreatmentArm::Treated => 1,
        }
    }

    /// The arm as a 0.0 / 1.0 indicator.
    pub fn indicator(self) -> f64 {
        self.bit() as f64
    }

    pub fn is_treated(self) -> bool {
        self == TreatmentArm::Treated
    }
}

impl From<TreatmentArm> for u8 {
    fn from(arm: TreatmentArm) -> u8 {
        arm.bit()
    }
}

impl TryFrom<u8> for TreatmentArm {
    type Error = Error;

    fn try_from(bit: u8) -> Result<Self> {
        TreatmentArm::from_bit(bit)
            .ok_or_else(|| Error::InvalidInput(alloc::format!("treatment must be 0 or 1, got {bit}")))
    }
}

/// Training record: covariates, treatment, outcome, and (after surrogate
/// generation) the text rendered from the covariates.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainRecord {
    pub x: CovariateVector,
    pub a: TreatmentArm,
    pub y: f64,
    pub text: Option<String>,
    /// Noiseless CATE at `x`, present only for synthetic data.
    pub tau_true: Option<f64>,
    pub groups: Option<GroupTags>,
}

/// Inference-time record. The covariates are not observed.
#[derive(Debug, Clone, PartialEq)]
pub struct TestRecord {
    pub text: String,
    pub a: TreatmentArm,
    pub y: f64,
    pub tau_true: Option<f64>,
    pub groups: Option<GroupTags>,
}

impl TrainRecord {
    /// Drops the covariates. Fails if no text has been attached yet.
    pub fn to_test(&self) -> Result<TestRecord> {
        let text = self
            .text
            .clone()
            .ok_or_else(|| Error::InvalidInput("record has no text surrogate".into()))?;
        Ok(TestRecord {
            text,
            a: self.a,
            y: self.y,
            tau_true: self.tau_true,
            groups: self.groups.clone(),
        })
    }
}

/// Uniform access to the fields both record kinds share.
pub trait Record {
    fn arm(&self) -> TreatmentArm;
    fn outcome(&self) -> f64;
    fn covariates(&self) -> Option<&CovariateVector>;
    fn text(&self) -> Option<&str>;
    fn tau_true(&self) -> Option<f64>;
    fn groups(&self) -> Option<&GroupTags>;
}

impl Record for TrainRecord {
    fn arm(&self) -> TreatmentArm {
        self.a
    }
    fn outcome(&self) -> f64 {
        self.y
    }
    fn covariates(&self) -> Option<&CovariateVector> {
        Some(&self.x)
    }
    fn text(&self) -> Option<&str> {
        self.text.as_deref()
    }
    fn tau_true(&self) -> Option<f64> {
        self.tau_true
    }
    fn groups(&self) -> Option<&GroupTags> {
        self.groups.as_ref()
    }
}

impl Record for TestRecord {
    fn arm(&self) -> TreatmentArm {
        self.a
    }
    fn outcome(&self) -> f64 {
        self.y
    }
    fn covariates(&self) -> Option<&CovariateVector> {
        None
    }
    fn text(&self) -> Option<&str> {
        Some(&self.text)
    }
    fn tau_true(&self) -> Option<f64> {
        self.tau_true
    }
    fn groups(&self) -> Option<&GroupTags> {
        self.groups.as_ref()
    }
}

/// Generation parameters carried alongside a dataset.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct DatasetMeta {
    pub seed: Option<u64>,
    pub split: Option<Split>,
    pub knobs: BTreeMap<String, f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset<R> {
    pub records: Vec<R>,
    pub d_x: usize,
    pub meta: DatasetMeta,
}

impl<R: Record> Dataset<R> {
    pub fn new(records: Vec<R>, d_x: usize) -> Self {
        Dataset { records, d_x, meta: DatasetMeta::default() }
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn arm_counts(&self) -> [usize; 2] {
        let mut counts = [0usize; 2];
        for r in &self.records {
            counts[r.arm().bit() as usize] += 1;
        }
        counts
    }
}

impl Dataset<TrainRecord> {
    /// Inference-time view of this dataset: covariates removed, text kept.
    pub fn strip_covariates(&self) -> Result<Dataset<TestRecord>> {
        let records = self.records.iter().map(TrainRecord::to_test).collect::<Result<Vec<_>>>()?;
        Ok(Dataset { records, d_x: self.d_x, meta: self.meta.clone() })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Rule {
    Empty,
    ArmAbsent(TreatmentArm),
    DimensionMismatch { expected: usize, found: usize },
    NonFiniteX,
    NonFiniteY,
    NonFiniteTau,
    EmptyText,
}

/// One invariant violation; `index` is `None` for dataset-level rules.
#[derive(Debug, Clone, PartialEq)]
pub struct Violation {
    pub index: Option<usize>,
    pub rule: Rule,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let at = |f: &mut fmt::Formatter<'_>| match self.index {
            Some(i) => write!(f, " at index {i}"),
            None => Ok(()),
        };
        match &self.rule {
            Rule::Empty => write!(f, "dataset is empty"),
            Rule::ArmAbsent(arm) => write!(f, "arm {} absent", arm.bit()),
            Rule::DimensionMismatch { expected, found } => {
                write!(f, "x has dimension {found}, expected {expected}")?;
                at(f)
            }
            Rule::NonFiniteX => {
                write!(f, "non-finite x")?;
                at(f)
            }
            Rule::NonFiniteY => {
                write!(f, "non-finite y")?;
                at(f)
            }
            Rule::NonFiniteTau => {
                write!(f, "non-finite tau_true")?;
                at(f)
            }
            Rule::EmptyText => {
                write!(f, "empty text")?;
                at(f)
            }
        }
    }
}

/// Checks the dataset invariants. An empty list means the dataset is usable.
pub fn validate_dataset<R: Record>(ds: &Dataset<R>) -> Vec<Violation> {
    let mut out = Vec::new();
    if ds.records.is_empty() {
        out.push(Violation { index: None, rule: Rule::Empty });
        return out;
    }
    for (i, r) in ds.records.iter().enumerate() {
        if let Some(x) = r.covariates() {
            if x.dim() != ds.d_x {
                out.push(Violation {
                    index: Some(i),
                    rule: Rule::DimensionMismatch { expected: ds.d_x, found: x.dim() },
                });
            }
            if !x.is_finite() {
                out.push(Violation { index: Some(i), rule: Rule::NonFiniteX });
            }
        }
        if !r.outcome().is_finite() {
            out.push(Violation { index: Some(i), rule: Rule::NonFiniteY });
        }
        if matches!(r.tau_true(), Some(t) if !t.is_finite()) {
            out.push(Violation { index: Some(i), rule: Rule::NonFiniteTau });
        }
        if matches!(r.text(), Some(t) if t.is_empty()) {
            out.push(Violation { index: Some(i), rule: Rule::EmptyText });
        }
    }
    let counts = ds.arm_counts();
    for arm in TreatmentArm::BOTH {
        if counts[arm.bit() as usize] == 0 {
            out.push(Violation { index: None, rule: Rule::ArmAbsent(arm) });
        }
    }
    out
}
