use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use super::{
    fit_logistic, fit_mlp, fit_ridge, LogisticConfig, LogisticModel, MlpHyper, MlpRegressor, NuisancePrediction,
    NuisanceSource, RidgeModel,
};
use crate::data::{validate_dataset, Dataset, TrainRecord, TreatmentArm};
use crate::rng::{Purpose, Split, StreamRng};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "lowercase"))]
pub enum OutcomeModelKind {
    Ridge,
    Mlp,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct NuisanceConfig {
    pub outcome_model: OutcomeModelKind,
    pub ridge_lambda: f64,
    pub k_folds: usize,
    pub logistic: LogisticConfig,
    pub mlp: MlpHyper,
    pub fold_seed: u64,
}

impl Default for NuisanceConfig {
    fn default() -> Self {
        NuisanceConfig {
            outcome_model: OutcomeModelKind::Ridge,
            ridge_lambda: 1e-2,
            k_folds: 2,
            logistic: LogisticConfig::default(),
            mlp: MlpHyper::default(),
            fold_seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(tag = "kind", rename_all = "lowercase"))]
pub enum OutcomeModel {
    Ridge(RidgeModel),
    Mlp(MlpRegressor),
}

impl OutcomeModel {
    pub fn predict(&self, x: &[f64]) -> f64 {
        match self {
            OutcomeModel::Ridge(m) => m.predict(x),
            OutcomeModel::Mlp(m) => m.predict(x),
        }
    }

    fn fit(xs: &[&[f64]], ys: &[f64], cfg: &NuisanceConfig) -> Result<Self> {
        Ok(match cfg.outcome_model {
            OutcomeModelKind::Ridge => OutcomeModel::Ridge(fit_ridge(xs, ys, cfg.ridge_lambda)?),
            OutcomeModelKind::Mlp => OutcomeModel::Mlp(fit_mlp(xs, ys, &cfg.mlp)?),
        })
    }
}

/// Models fit on the complement of one fold.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct FoldModels {
    pub mu0: OutcomeModel,
    pub mu1: OutcomeModel,
    pub pi: LogisticModel,
}

impl FoldModels {
    pub fn predict(&self, x: &[f64]) -> NuisancePrediction {
        NuisancePrediction { mu0: self.mu0.predict(x), mu1: self.mu1.predict(x), pi: self.pi.predict(x) }
    }
}

/// Fitted `(mu0, mu1, pi)`. With `k_folds > 1`, `folds[f]` never saw the
/// records whose `fold_map` entry is `f`, and those records are predicted by it.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct NuisanceBundle {
    pub folds: Vec<FoldModels>,
    pub fold_map: Vec<usize>,
    pub k_folds: usize,
    /// Whether fold assignment had to be stratified by arm.
    pub stratified: bool,
}

impl NuisanceBundle {
    /// Prediction for a unit outside the training set: the average over folds.
    pub fn predict_new(&self, x: &[f64]) -> NuisancePrediction {
        let k = self.folds.len() as f64;
        let mut out = NuisancePrediction { mu0: 0.0, mu1: 0.0, pi: 0.0 };
        for fold in &self.folds {
            let p = fold.predict(x);
            out.mu0 += p.mu0 / k;
            out.mu1 += p.mu1 / k;
            out.pi += p.pi / k;
        }
        out
    }

    /// Whether training record `index` was part of the training set of `fold`.
    pub fn trained_on(&self, fold: usize, index: usize) -> bool {
        self.k_folds == 1 || self.fold_map[index] != fold
    }
}

impl NuisanceSource for NuisanceBundle {
    fn predict_record(&self, index: usize, x: &[f64]) -> NuisancePrediction {
        match self.fold_map.get(index) {
            Some(&f) => self.folds[f].predict(x),
            None => self.predict_new(x),
        }
    }
}

fn folds_have_both_arms(fold_map: &[usize], arms: &[TreatmentArm], k: usize) -> bool {
    let mut inside = vec![[0usize; 2]; k];
    let mut total = [0usize; 2];
    for (&f, a) in fold_map.iter().zip(arms) {
        inside[f][a.bit() as usize] += 1;
        total[a.bit() as usize] += 1;
    }
    inside.iter().all(|c| c[0] > 0 && c[1] > 0 && total[0] > c[0] && total[1] > c[1])
}

fn assign_folds(arms: &[TreatmentArm], k: usize, seed: u64) -> Result<(Vec<usize>, bool)> {
    let n = arms.len();
    if k <= 1 {
        return Ok((vec![0; n], false));
    }
    let mut rng = StreamRng::new(seed, Purpose::Folds, Split::Train);
    let mut order: Vec<usize> = (0..n).collect();
    rng.shuffle(&mut order);
    let mut fold_map = vec![0; n];
    for (pos, &i) in order.iter().enumerate() {
        fold_map[i] = pos % k;
    }
    if folds_have_both_arms(&fold_map, arms, k) {
        return Ok((fold_map, false));
    }
    // round-robin within each arm
    let mut pos = 0;
    for arm in TreatmentArm::BOTH {
        let mut members: Vec<usize> = (0..n).filter(|&i| arms[i] == arm).collect();
        rng.shuffle(&mut members);
        for i in members {
            fold_map[i] = pos % k;
            pos += 1;
        }
    }
    if !folds_have_both_arms(&fold_map, arms, k) {
        return Err(Error::InvalidInput(format!("too few records per arm for {k}-fold cross-fitting")));
    }
    Ok((fold_map, true))
}

/// Stage 1: per-arm outcome models and a propensity model, cross-fit over
/// `cfg.k_folds` folds.
pub fn fit_bundle(ds: &Dataset<TrainRecord>, cfg: &NuisanceConfig) -> Result<NuisanceBundle> {
    if let Some(v) = validate_dataset(ds).first() {
        return Err(Error::InvalidInput(format!("dataset violates invariants: {v}")));
    }
    let k = cfg.k_folds.max(1);
    let arms: Vec<TreatmentArm> = ds.records.iter().map(|r| r.a).collect();
    let (fold_map, stratified) = assign_folds(&arms, k, cfg.fold_seed)?;
    let mut folds = Vec::with_capacity(k);
    for f in 0..k {
        let train: Vec<&TrainRecord> =
            ds.records.iter().zip(&fold_map).filter(|(_, &g)| k == 1 || g != f).map(|(r, _)| r).collect();
        let arm_rows = |arm: TreatmentArm| -> (Vec<&[f64]>, Vec<f64>) {
            train.iter().filter(|r| r.a == arm).map(|r| (r.x.as_slice(), r.y)).unzip()
        };
        let (x0, y0) = arm_rows(TreatmentArm::Control);
        let (x1, y1) = arm_rows(TreatmentArm::Treated);
        let xs: Vec<&[f64]> = train.iter().map(|r| r.x.as_slice()).collect();
        let train_arms: Vec<TreatmentArm> = train.iter().map(|r| r.a).collect();
        folds.push(FoldModels {
            mu0: OutcomeModel::fit(&x0, &y0, cfg)?,
            mu1: OutcomeModel::fit(&x1, &y1, cfg)?,
            pi: fit_logistic(&xs, &train_arms, &cfg.logistic)?,
        });
    }
    Ok(NuisanceBundle { folds, fold_map, k_folds: k, stratified })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::CovariateVector;

    fn ds(arms: &[u8]) -> Dataset<TrainRecord> {
        let records = arms
            .iter()
            .enumerate()
            .map(|(i, &a)| TrainRecord {
                x: CovariateVector(vec![i as f64 * 0.1, (i % 3) as f64]),
                a: TreatmentArm::from_bit(a).unwrap(),
                y: i as f64 * 0.05 + a as f64,
                text: None,
                tau_true: None,
                groups: None,
            })
            .collect();
        Dataset::new(records, 2)
    }

    #[test]
    fn skewed_arms_force_stratification() {
        // two treated records among forty: a random split often leaves a fold without one
        let mut arms = vec![0u8; 40];
        arms[0] = 1;
        arms[1] = 1;
        let mut stratified_seen = false;
        for seed in 0..20 {
            let (map, stratified) = assign_folds(
                &arms.iter().map(|&a| TreatmentArm::from_bit(a).unwrap()).collect::<Vec<_>>(),
                2,
                seed,
            )
            .unwrap();
            assert_ne!(map[0], map[1]);
            stratified_seen |= stratified;
        }
        assert!(stratified_seen);
    }

    #[test]
    fn impossible_fold_count_is_an_error() {
        let arms: Vec<TreatmentArm> = [1u8, 0, 0, 0].iter().map(|&a| TreatmentArm::from_bit(a).unwrap()).collect();
        assert!(assign_folds(&arms, 2, 0).is_err());
    }

    #[test]
    fn single_fold_uses_full_fit() {
        let data = ds(&[0, 1, 0, 1, 0, 1, 0, 1, 1, 0]);
        let cfg = NuisanceConfig { k_folds: 1, ..Default::default() };
        let b = fit_bundle(&data, &cfg).unwrap();
        assert_eq!(b.folds.len(), 1);
        assert!(b.fold_map.iter().all(|f| *f == 0));
        assert!((0..data.len()).all(|i| b.trained_on(0, i)));
    }

    #[test]
    fn rejects_invalid_dataset() {
        let data = ds(&[1, 1, 1, 1]);
        assert!(fit_bundle(&data, &NuisanceConfig::default()).is_err());
    }
}
