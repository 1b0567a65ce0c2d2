//! End-to-end estimators: the three-stage text-confounding-aware learner
//! (TCA) and the naive text-only baselines (TBE-S, TBE-T).

use alloc::format;
use alloc::vec::Vec;

use crate::data::{Dataset, Record, TrainRecord, TreatmentArm};
use crate::encoder::{encode, Embedding, DEFAULT_DIM};
use crate::nuisance::{fit_bundle, fit_mlp, fit_ridge, MlpHyper, MlpRegressor, NuisanceBundle, NuisanceConfig, NuisanceSource, RidgeModel};
use crate::pseudo::{pseudo_outcomes, PseudoKind};
use crate::surrogate::{render_record, SurrogateConfig};
use crate::rng::Split;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "lowercase"))]
pub enum HeadKind {
    #[default]
    Ridge,
    Mlp,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct HeadConfig {
    pub kind: HeadKind,
    pub lambda: f64,
    pub mlp: MlpHyper,
}

impl Default for HeadConfig {
    fn default() -> Self {
        HeadConfig { kind: HeadKind::Ridge, lambda: 1e-2, mlp: MlpHyper::default() }
    }
}

/// Regressor over embeddings.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(tag = "kind", rename_all = "lowercase"))]
pub enum Head {
    Ridge(RidgeModel),
    Mlp(MlpRegressor),
}

impl Head {
    pub fn fit<R: AsRef<[f64]>>(xs: &[R], ys: &[f64], cfg: &HeadConfig) -> Result<Self> {
        Ok(match cfg.kind {
            HeadKind::Ridge => Head::Ridge(fit_ridge(xs, ys, cfg.lambda)?),
            HeadKind::Mlp => Head::Mlp(fit_mlp(xs, ys, &cfg.mlp)?),
        })
    }

    pub fn predict(&self, x: &[f64]) -> f64 {
        match self {
            Head::Ridge(m) => m.predict(x),
            Head::Mlp(m) => m.predict(x),
        }
    }

    pub fn input_dim(&self) -> usize {
        match self {
            Head::Ridge(m) => m.weights.len(),
            Head::Mlp(m) => m.x_mean.len(),
        }
    }
}

/// A CATE prediction from text. `empty_text` marks predictions made from the
/// zero embedding because the text had no tokens.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct TextPrediction {
    pub tau: f64,
    pub empty_text: bool,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct TcaConfig {
    pub nuisance: NuisanceConfig,
    pub surrogate: SurrogateConfig,
    pub d_emb: usize,
    pub head: HeadConfig,
    pub pseudo: PseudoKind,
}

impl Default for TcaConfig {
    fn default() -> Self {
        TcaConfig {
            nuisance: NuisanceConfig::default(),
            surrogate: SurrogateConfig::default(),
            d_emb: DEFAULT_DIM,
            head: HeadConfig::default(),
            pseudo: PseudoKind::DR,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct TcaModel {
    /// Absent when the nuisances were supplied from outside.
    pub bundle: Option<NuisanceBundle>,
    pub d_emb: usize,
    pub head: Head,
    pub lambda: f64,
    pub pseudo: PseudoKind,
}

/// Texts for every record: the attached one when present, otherwise a fresh
/// render keyed by the dataset seed.
fn training_texts(ds: &Dataset<TrainRecord>, cfg: &SurrogateConfig) -> Result<Vec<alloc::string::String>> {
    let seed = ds.meta.seed.unwrap_or(0);
    let split = ds.meta.split.unwrap_or(Split::Train);
    ds.records
        .iter()
        .enumerate()
        .map(|(i, r)| match &r.text {
            Some(t) => Ok(t.clone()),
            None => render_record(r.x.as_slice(), cfg, seed, split, i).map(|s| s.text),
        })
        .collect()
}

/// Fits all three stages, with nuisances learned on `ds` by cross-fitting.
pub fn tca_fit(ds: &Dataset<TrainRecord>, cfg: &TcaConfig) -> Result<TcaModel> {
    let bundle = fit_bundle(ds, &cfg.nuisance).map_err(|e| e.at_stage("stage 1 (nuisances)"))?;
    let mut model = tca_fit_with(ds, cfg, &bundle)?;
    model.bundle = Some(bundle);
    Ok(model)
}

/// Stages 2 and 3 with pseudo-outcomes built from the given nuisance source.
pub fn tca_fit_with(ds: &Dataset<TrainRecord>, cfg: &TcaConfig, source: &dyn NuisanceSource) -> Result<TcaModel> {
    if cfg.d_emb == 0 {
        return Err(Error::InvalidInput("d_emb must be positive".into()));
    }
    let targets: Vec<f64> = pseudo_outcomes(&ds.records, source, cfg.pseudo)
        .map_err(|e| e.at_stage("stage 1 (pseudo-outcomes)"))?
        .into_iter()
        .map(|p| p.value)
        .collect();
    let texts = training_texts(ds, &cfg.surrogate).map_err(|e| e.at_stage("stage 2 (surrogates)"))?;
    let features: Vec<Vec<f64>> = texts.iter().map(|t| encode(t, cfg.d_emb).values).collect();
    let head = Head::fit(&features, &targets, &cfg.head).map_err(|e| e.at_stage("stage 3 (text regression)"))?;
    Ok(TcaModel { bundle: None, d_emb: cfg.d_emb, head, lambda: cfg.head.lambda, pseudo: cfg.pseudo })
}

fn predict_embedding(head: &Head, e: &Embedding) -> f64 {
    head.predict(&e.values)
}

pub fn tca_predict(m: &TcaModel, text: &str) -> TextPrediction {
    let e = encode(text, m.d_emb);
    TextPrediction { tau: predict_embedding(&m.head, &e), empty_text: e.empty }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub enum TbeVariant {
    /// One model on the embedding with the arm indicator appended.
    S,
    /// One model per arm.
    T,
}

impl TbeVariant {
    pub fn name(self) -> &'static str {
        match self {
            TbeVariant::S => "TBE-S",
            TbeVariant::T => "TBE-T",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct TbeModel {
    pub variant: TbeVariant,
    pub d_emb: usize,
    /// `[pooled]` for S, `[control, treated]` for T.
    pub models: Vec<Head>,
}

fn with_arm(mut v: Vec<f64>, a: f64) -> Vec<f64> {
    v.push(a);
    v
}

/// Fits a naive text-only baseline on records that carry text.
pub fn tbe_fit<R: Record>(records: &[R], variant: TbeVariant, d_emb: usize, head: &HeadConfig) -> Result<TbeModel> {
    if d_emb == 0 {
        return Err(Error::InvalidInput("d_emb must be positive".into()));
    }
    let mut features = Vec::with_capacity(records.len());
    for (i, r) in records.iter().enumerate() {
        let text = r.text().ok_or_else(|| Error::InvalidInput(format!("record {i} has no text")))?;
        features.push(encode(text, d_emb).values);
    }
    for arm in TreatmentArm::BOTH {
        if !records.iter().any(|r| r.arm() == arm) {
            return Err(Error::ArmMissing(arm.bit()));
        }
    }
    let models = match variant {
        TbeVariant::S => {
            let xs: Vec<Vec<f64>> =
                features.into_iter().zip(records).map(|(f, r)| with_arm(f, r.arm().indicator())).collect();
            let ys: Vec<f64> = records.iter().map(|r| r.outcome()).collect();
            alloc::vec![Head::fit(&xs, &ys, head)?]
        }
        TbeVariant::T => {
            let mut out = Vec::with_capacity(2);
            for arm in TreatmentArm::BOTH {
                let (xs, ys): (Vec<&[f64]>, Vec<f64>) = features
                    .iter()
                    .zip(records)
                    .filter(|(_, r)| r.arm() == arm)
                    .map(|(f, r)| (f.as_slice(), r.outcome()))
                    .unzip();
                out.push(Head::fit(&xs, &ys, head)?);
            }
            out
        }
    };
    Ok(TbeModel { variant, d_emb, models })
}

pub fn tbe_predict(m: &TbeModel, text: &str) -> TextPrediction {
    let e = encode(text, m.d_emb);
    let tau = match m.variant {
        TbeVariant::S => {
            let treated = with_arm(e.values.clone(), 1.0);
            let control = with_arm(e.values.clone(), 0.0);
            m.models[0].predict(&treated) - m.models[0].predict(&control)
        }
        TbeVariant::T => predict_embedding(&m.models[1], &e) - predict_embedding(&m.models[0], &e),
    };
    TextPrediction { tau, empty_text: e.empty }
}
