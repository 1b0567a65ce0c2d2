//! Synthetic data-generating process with confounder-strength knobs.
//!
//! Covariates are i.i.d. standard normal. Treatment follows
//! `Pr(A=1|X) = sigmoid(kappa * xi'X)` and the outcome is
//! `Y = sigmoid(beta'X + g1*A + g2*A^2 + g3*sin(A)) + eta * (delta'X) * A + eps`.

use alloc::format;
use alloc::string::ToString;
use alloc::vec::Vec;

use crate::data::{CovariateVector, Dataset, DatasetMeta, GroupTags, TrainRecord, TreatmentArm};
use crate::math;
use crate::rng::{Purpose, Split, StreamRng};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct DgpParams {
    pub d_x: usize,
    pub beta: Vec<f64>,
    pub delta: Vec<f64>,
    pub gamma1: f64,
    pub gamma2: f64,
    pub gamma3: f64,
    /// Strength of the `(delta'X) * A` interaction.
    pub eta: f64,
    /// Strength of covariate influence on treatment assignment.
    pub kappa: f64,
    pub xi: Vec<f64>,
    pub noise_sd: f64,
    pub n: usize,
    pub seed: u64,
}

impl DgpParams {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("beta", &self.beta), ("delta", &self.delta), ("xi", &self.xi)] {
            if v.len() != self.d_x {
                return Err(Error::InvalidInput(format!(
                    "{name} has length {}, expected d_x = {}",
                    v.len(),
                    self.d_x
                )));
            }
            if v.iter().any(|c| !c.is_finite()) {
                return Err(Error::NonFinite(name));
            }
        }
        for (name, v) in [
            ("gamma1", self.gamma1),
            ("gamma2", self.gamma2),
            ("gamma3", self.gamma3),
            ("eta", self.eta),
            ("kappa", self.kappa),
            ("noise_sd", self.noise_sd),
        ] {
            if !v.is_finite() {
                return Err(Error::NonFinite(name));
            }
        }
        if self.noise_sd < 0.0 || self.eta < 0.0 || self.kappa < 0.0 {
            return Err(Error::InvalidInput("noise_sd, eta and kappa must be non-negative".into()));
        }
        Ok(())
    }

    /// All-zero coefficients with unit defaults elsewhere; useful as a base for tests.
    pub fn zeros(d_x: usize) -> Self {
        DgpParams {
            d_x,
            beta: alloc::vec![0.0; d_x],
            delta: alloc::vec![0.0; d_x],
            gamma1: 0.0,
            gamma2: 0.0,
            gamma3: 0.0,
            eta: 0.0,
            kappa: 0.0,
            xi: alloc::vec![0.0; d_x],
            noise_sd: 0.0,
            n: 1,
            seed: 0,
        }
    }
}

/// Logistic function, evaluated without overflow for large `|z|`.
pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + math::exp(-z))
    } else {
        let e = math::exp(z);
        e / (1.0 + e)
    }
}

pub fn logit(p: f64) -> f64 {
    math::ln(p / (1.0 - p))
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// `Pr(A = 1 | X = x)`.
pub fn propensity(x: &[f64], p: &DgpParams) -> f64 {
    sigmoid(p.kappa * dot(&p.xi, x))
}

/// Noiseless outcome surface `E[Y | X = x, A = a]`.
pub fn outcome_mean(x: &[f64], a: TreatmentArm, p: &DgpParams) -> f64 {
    let av = a.indicator();
    let base = dot(&p.beta, x) + p.gamma1 * av + p.gamma2 * av * av + p.gamma3 * math::sin(av);
    sigmoid(base) + p.eta * dot(&p.delta, x) * av
}

pub fn sample_treatment(x: &[f64], p: &DgpParams, rng: &mut StreamRng) -> TreatmentArm {
    if rng.bernoulli(propensity(x, p)) {
        TreatmentArm::Treated
    } else {
        TreatmentArm::Control
    }
}

pub fn sample_outcome(x: &[f64], a: TreatmentArm, p: &DgpParams, rng: &mut StreamRng) -> f64 {
    outcome_mean(x, a, p) + p.noise_sd * rng.normal()
}

/// Exact conditional effect `E[Y(1) - Y(0) | X = x]`.
pub fn true_cate(x: &[f64], p: &DgpParams) -> f64 {
    outcome_mean(x, TreatmentArm::Treated, p) - outcome_mean(x, TreatmentArm::Control, p)
}

/// Subgroup labels: sex from the sign of coordinate 0, age band from coordinate 1.
pub fn group_tags(x: &[f64]) -> GroupTags {
    let mut tags = GroupTags::new();
    if let Some(&s) = x.first() {
        tags.insert("sex".to_string(), if s >= 0.0 { "M" } else { "F" }.to_string());
    }
    if let Some(&age) = x.get(1) {
        tags.insert("age".to_string(), if age >= 0.0 { "O" } else { "Y" }.to_string());
    }
    tags
}

/// Training split of the synthetic dataset.
pub fn generate(p: &DgpParams) -> Result<Dataset<TrainRecord>> {
    generate_split(p, Split::Train)
}

/// Draws `p.n` records. Train and test splits use disjoint random streams,
/// so the test split is a fresh i.i.d. draw from the same distribution.
pub fn generate_split(p: &DgpParams, split: Split) -> Result<Dataset<TrainRecord>> {
    if p.n == 0 {
        return Err(Error::InvalidInput("n must be at least 1".into()));
    }
    p.validate()?;
    let mut cov_rng = StreamRng::new(p.seed, Purpose::Covariates, split);
    let mut treat_rng = StreamRng::new(p.seed, Purpose::Treatment, split);
    let mut noise_rng = StreamRng::new(p.seed, Purpose::Noise, split);
    let records = (0..p.n)
        .map(|_| {
            let x: Vec<f64> = (0..p.d_x).map(|_| cov_rng.normal()).collect();
            let a = sample_treatment(&x, p, &mut treat_rng);
            let y = sample_outcome(&x, a, p, &mut noise_rng);
            TrainRecord {
                tau_true: Some(true_cate(&x, p)),
                groups: Some(group_tags(&x)),
                x: CovariateVector(x),
                a,
                y,
                text: None,
            }
        })
        .collect();
    let mut meta = DatasetMeta { seed: Some(p.seed), split: Some(split), ..Default::default() };
    meta.knobs.insert("eta".to_string(), p.eta);
    meta.knobs.insert("kappa".to_string(), p.kappa);
    meta.knobs.insert("noise_sd".to_string(), p.noise_sd);
    Ok(Dataset { records, d_x: p.d_x, meta })
}

/// Unit vector drawn uniformly from the sphere in `d` dimensions.
pub fn unit_sphere(d: usize, rng: &mut StreamRng) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..d).map(|_| rng.normal()).collect();
        let norm = math::sqrt(dot(&v, &v));
        if norm > 1e-12 {
            return v.into_iter().map(|c| c / norm).collect();
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    #[test]
    fn sigmoid_values() {
        assert_eq!(sigmoid(0.0), 0.5);
        for z in [-30.0, -2.5, -0.1, 0.7, 4.0, 800.0] {
            assert!((sigmoid(z) + sigmoid(-z) - 1.0).abs() < 1e-15);
        }
        // 1 / (1 + e^-2), evaluated independently to 20 digits
        assert!((sigmoid(2.0) - 0.880_797_077_977_882_3).abs() < 1e-15);
        assert!(sigmoid(-800.0) >= 0.0 && sigmoid(800.0) <= 1.0);
    }

    #[test]
    fn sigmoid_is_monotone() {
        let mut prev = 0.0;
        for i in -400..=400 {
            let s = sigmoid(i as f64 * 0.05);
            assert!(s >= prev);
            prev = s;
        }
    }

    #[test]
    fn randomized_design_at_zero_kappa() {
        let mut p = DgpParams::zeros(3);
        p.xi = vec![5.0, -1.0, 2.0];
        assert_eq!(propensity(&[10.0, 3.0, -4.0], &p), 0.5);
        p.kappa = 1.0;
        let x = [0.2, 0.0, 0.0]; // xi.x = 1
        assert!((propensity(&x, &p) - 0.731_058_578_630_004_9).abs() < 1e-12);
        p.kappa = 200.0;
        assert!(propensity(&x, &p) > 1.0 - 1e-12);
    }

    #[test]
    fn outcome_formula_examples() {
        let p0 = DgpParams::zeros(2);
        let mut rng = StreamRng::new(0, Purpose::Noise, Split::Train);
        assert_eq!(sample_outcome(&[0.3, -1.0], TreatmentArm::Control, &p0, &mut rng), 0.5);

        let mut p = DgpParams::zeros(2);
        p.gamma1 = 1.0;
        let y1 = sample_outcome(&[0.3, -1.0], TreatmentArm::Treated, &p, &mut rng);
        assert!((y1 - 0.731_058_578_630_004_9).abs() < 1e-15);

        p.eta = 2.0;
        p.delta = vec![1.0, 0.0];
        let y2 = sample_outcome(&[0.3, -1.0], TreatmentArm::Treated, &p, &mut rng);
        assert!((y2 - (0.731_058_578_630_004_9 + 0.6)).abs() < 1e-12);
    }

    #[test]
    fn true_cate_examples() {
        assert_eq!(true_cate(&[1.0, 2.0], &DgpParams::zeros(2)), 0.0);
        let mut p = DgpParams::zeros(2);
        p.gamma1 = 1.0;
        // sigma(1) - sigma(0)
        assert!((true_cate(&[1.0, 2.0], &p) - 0.231_058_578_630_004_9).abs() < 1e-15);
    }

    #[test]
    fn generate_rejects_empty_and_bad_lengths() {
        let mut p = DgpParams::zeros(2);
        p.n = 0;
        assert!(generate(&p).is_err());
        p.n = 5;
        p.beta = vec![1.0];
        assert!(generate(&p).is_err());
    }

    #[test]
    fn group_tags_follow_signs() {
        let tags = group_tags(&[-0.1, 0.4, 9.0]);
        assert_eq!(tags["sex"], "F");
        assert_eq!(tags["age"], "O");
        let tags = group_tags(&[0.1, -0.4]);
        assert_eq!(tags["sex"], "M");
        assert_eq!(tags["age"], "Y");
    }
}
