//! Metrics and exact checks on enumerable worlds.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use crate::data::{GroupTags, TreatmentArm};
use crate::dgp::{generate, true_cate, DgpParams};
use crate::nuisance::OracleNuisance;
use crate::pseudo::{pseudo_outcomes, PseudoKind};
use crate::math;
use crate::rng::{Purpose, Split, StreamRng};
use crate::world::{discrete_world, JointTable, WorldSpec};
use crate::{Error, Result};

/// Tolerance for identities checked by exact enumeration.
pub const IDENTITY_TOL: f64 = 1e-12;

/// Root mean squared difference between predicted and true CATE.
pub fn pehe(pred: &[f64], truth: &[f64]) -> Result<f64> {
    if pred.len() != truth.len() {
        return Err(Error::LengthMismatch { expected: truth.len(), found: pred.len() });
    }
    if pred.is_empty() {
        return Err(Error::InvalidInput("pehe needs at least one prediction".into()));
    }
    let sse: f64 = pred.iter().zip(truth).map(|(p, t)| (p - t) * (p - t)).sum();
    let v = math::sqrt(sse / pred.len() as f64);
    if v.is_finite() {
        Ok(v)
    } else {
        Err(Error::NonFinite("pehe"))
    }
}

/// One text value of the confounding-bias decomposition.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct BiasRow {
    pub t: usize,
    pub naive_tau: f64,
    pub true_tau_t: f64,
    pub bias_observed: f64,
    /// `E[mu_1(X) | A=1, T=t] - E[mu_1(X) | T=t]`.
    pub bias_formula_term1: f64,
    /// `E[mu_0(X) | A=0, T=t] - E[mu_0(X) | T=t]`.
    pub bias_formula_term0: f64,
}

impl BiasRow {
    pub fn bias_formula(&self) -> f64 {
        self.bias_formula_term1 - self.bias_formula_term0
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct BiasReport {
    pub rows: Vec<BiasRow>,
}

fn mu_table(world: &JointTable, a: usize) -> Result<Vec<f64>> {
    (0..world.n_x()).map(|x| world.mu(a, x)).collect()
}

fn check_t(world: &JointTable, t: usize) -> Result<()> {
    if t >= world.n_t() {
        return Err(Error::InvalidInput(format!("t = {t} outside support of size {}", world.n_t())));
    }
    Ok(())
}

fn bias_row(world: &JointTable, t: usize) -> Result<BiasRow> {
    check_t(world, t)?;
    let naive_tau = world.naive_tau(t)?;
    let true_tau_t = world.tau_t_potential(t)?;
    let mu1 = mu_table(world, 1)?;
    let mu0 = mu_table(world, 0)?;
    let term1 = world.mean_of_x_given(|x| mu1[x], t, Some(1))? - world.mean_of_x_given(|x| mu1[x], t, None)?;
    let term0 = world.mean_of_x_given(|x| mu0[x], t, Some(0))? - world.mean_of_x_given(|x| mu0[x], t, None)?;
    Ok(BiasRow {
        t,
        naive_tau,
        true_tau_t,
        bias_observed: naive_tau - true_tau_t,
        bias_formula_term1: term1,
        bias_formula_term0: term0,
    })
}

/// Both sides of the text-level identification identity at `t`:
/// `E[tau(X) | T = t]` and `E[Y(1) - Y(0) | T = t]`.
fn identification_pair(world: &JointTable, t: usize) -> Result<(f64, f64)> {
    check_t(world, t)?;
    if world.p_t(t) <= 0.0 {
        return Err(Error::UndefinedConditional(format!("P(T={t}) = 0")));
    }
    let tau: Vec<f64> = (0..world.n_x()).map(|x| world.tau_x(x)).collect::<Result<_>>()?;
    Ok((world.mean_of_x_given(|x| tau[x], t, None)?, world.tau_t_potential(t)?))
}

/// Naive text-only contrast at `t` against the true text-level effect, with
/// the bias computed both directly and from the closed-form decomposition.
/// Fails if the two disagree by more than [`IDENTITY_TOL`].
pub fn lemma1_bias(world: &JointTable, t: usize) -> Result<BiasRow> {
    let row = bias_row(world, t)?;
    let gap = math::abs(row.bias_observed - row.bias_formula());
    if !(gap <= IDENTITY_TOL) {
        return Err(Error::IdentityViolation { what: "confounding bias", gap });
    }
    Ok(row)
}

pub fn lemma1_report(world: &JointTable) -> Result<BiasReport> {
    Ok(BiasReport { rows: (0..world.n_t()).map(|t| lemma1_bias(world, t)).collect::<Result<_>>()? })
}

/// `E[tau(X) | T = t]`, checked against the potential-outcome enumeration of
/// `E[Y(1) - Y(0) | T = t]`.
pub fn lemma2_oracle(world: &JointTable, t: usize) -> Result<f64> {
    let (via_x, direct) = identification_pair(world, t)?;
    let gap = math::abs(via_x - direct);
    if !(gap <= IDENTITY_TOL) {
        return Err(Error::IdentityViolation { what: "text-level effect", gap });
    }
    Ok(via_x)
}

/// Largest identity gaps found on one enumerable world.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WorldCheck {
    pub n_x: usize,
    pub n_t: usize,
    pub bias_gap: f64,
    pub identification_gap: f64,
}

/// Draws `n_worlds` strictly positive worlds with `|X|, |T|` in `2..=4` and
/// three outcome levels, and measures both identity gaps at every `t`.
pub fn random_world_sweep(n_worlds: usize, seed: u64) -> Result<Vec<WorldCheck>> {
    let mut rng = StreamRng::new(seed, Purpose::World, Split::Train);
    let mut out = Vec::with_capacity(n_worlds);
    for _ in 0..n_worlds {
        let n_x = 2 + rng.below(3);
        let n_t = 2 + rng.below(3);
        let world = discrete_world(WorldSpec::random(n_x, n_t, 3, &mut rng))?;
        let mut check = WorldCheck { n_x, n_t, bias_gap: 0.0, identification_gap: 0.0 };
        for t in 0..n_t {
            let row = bias_row(&world, t)?;
            check.bias_gap = check.bias_gap.max(math::abs(row.bias_observed - row.bias_formula()));
            let (via_x, direct) = identification_pair(&world, t)?;
            check.identification_gap = check.identification_gap.max(math::abs(via_x - direct));
        }
        out.push(check);
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct SubgroupTable {
    pub entries: BTreeMap<String, f64>,
    pub warnings: Vec<String>,
}

/// PEHE within each value of group tag `key`. Records lacking the tag are
/// skipped with a warning.
pub fn subgroup_table(pred: &[f64], truth: &[f64], groups: &[Option<&GroupTags>], key: &str) -> Result<SubgroupTable> {
    if pred.len() != truth.len() || groups.len() != truth.len() {
        let found = if pred.len() != truth.len() { pred.len() } else { groups.len() };
        return Err(Error::LengthMismatch { expected: truth.len(), found });
    }
    let mut buckets: BTreeMap<String, (Vec<f64>, Vec<f64>)> = BTreeMap::new();
    let mut missing = 0usize;
    for ((p, t), g) in pred.iter().zip(truth).zip(groups) {
        match g.and_then(|g| g.get(key)) {
            Some(v) => {
                let b = buckets.entry(v.clone()).or_default();
                b.0.push(*p);
                b.1.push(*t);
            }
            None => missing += 1,
        }
    }
    let mut out = SubgroupTable::default();
    if buckets.is_empty() {
        out.warnings.push(format!("no record carries group tag `{key}`"));
        return Ok(out);
    }
    if missing > 0 {
        out.warnings.push(format!("{missing} records lack group tag `{key}`"));
    }
    for (value, (p, t)) in buckets {
        out.entries.insert(value, pehe(&p, &t)?);
    }
    Ok(out)
}

/// Agreement between the pseudo-outcome mean and the true CATE mean in one bin.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BinStat {
    pub count: usize,
    pub pseudo_mean: f64,
    pub truth_mean: f64,
    /// Standard error of `pseudo_mean - truth_mean`.
    pub std_error: f64,
}

impl BinStat {
    pub fn z_score(&self) -> f64 {
        (self.pseudo_mean - self.truth_mean) / self.std_error
    }

    pub fn passes(&self, max_z: f64) -> bool {
        math::abs(self.z_score()) <= max_z
    }
}

/// Splits records into `n_bins` equal-count bins ordered by `key` and
/// compares, per bin, the mean of `pseudo` with the mean of `truth`.
pub fn binned_agreement(key: &[f64], pseudo: &[f64], truth: &[f64], n_bins: usize) -> Result<Vec<BinStat>> {
    let n = key.len();
    if pseudo.len() != n || truth.len() != n {
        return Err(Error::LengthMismatch { expected: n, found: pseudo.len().min(truth.len()) });
    }
    if n_bins == 0 || n < 2 * n_bins {
        return Err(Error::InvalidInput(format!("{n} records cannot fill {n_bins} bins of two")));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| key[i].total_cmp(&key[j]).then(i.cmp(&j)));
    let mut out = Vec::with_capacity(n_bins);
    for b in 0..n_bins {
        let members = &order[b * n / n_bins..(b + 1) * n / n_bins];
        let m = members.len() as f64;
        let diffs: Vec<f64> = members.iter().map(|&i| pseudo[i] - truth[i]).collect();
        let mean_diff = diffs.iter().sum::<f64>() / m;
        let var = diffs.iter().map(|d| (d - mean_diff) * (d - mean_diff)).sum::<f64>() / (m - 1.0);
        let truth_mean = members.iter().map(|&i| truth[i]).sum::<f64>() / m;
        out.push(BinStat {
            count: members.len(),
            pseudo_mean: truth_mean + mean_diff,
            truth_mean,
            std_error: math::sqrt(var / m),
        });
    }
    Ok(out)
}

/// Which nuisance the double-robustness probe corrupts.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DrCase {
    /// True outcome surfaces, propensity shifted by `+1` on the logit scale.
    PropensityWrong,
    /// True propensity, outcome surfaces offset by `0.5 sign(x0)`.
    OutcomeWrong,
    /// Both corruptions at once; the bins should disagree.
    BothWrong,
}

impl DrCase {
    pub fn name(self) -> &'static str {
        match self {
            DrCase::PropensityWrong => "propensity-wrong",
            DrCase::OutcomeWrong => "outcome-wrong",
            DrCase::BothWrong => "both-wrong",
        }
    }
}

/// Draws `p.n` records, forms DR pseudo-outcomes under the corrupted oracle
/// nuisances of `case` (propensity clipped at `clip`) and compares them with
/// the true CATE in equal-count bins of `x0`.
pub fn dr_robustness(p: &DgpParams, case: DrCase, clip: f64, n_bins: usize) -> Result<Vec<BinStat>> {
    if p.d_x == 0 {
        return Err(Error::InvalidInput("binning on x0 needs d_x >= 1".into()));
    }
    let ds = generate(p)?;
    let offset = |x: &[f64], _a: TreatmentArm| if x[0] >= 0.0 { 0.5 } else { -0.5 };
    let mut oracle = OracleNuisance::new(p, clip);
    if case != DrCase::OutcomeWrong {
        oracle = oracle.with_logit_shift(1.0);
    }
    if case != DrCase::PropensityWrong {
        oracle = oracle.with_outcome_offset(&offset);
    }
    let pseudo: Vec<f64> =
        pseudo_outcomes(&ds.records, &oracle, PseudoKind::DR)?.into_iter().map(|o| o.value).collect();
    let key: Vec<f64> = ds.records.iter().map(|r| r.x.as_slice()[0]).collect();
    let truth: Vec<f64> = ds.records.iter().map(|r| true_cate(r.x.as_slice(), p)).collect();
    binned_agreement(&key, &pseudo, &truth, n_bins)
}

/// Knob values a result row was produced under.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Knobs {
    pub eta: f64,
    pub kappa: f64,
    pub leak: f64,
    pub prompt_family: String,
    pub lambda: f64,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ExperimentResult {
    pub method: String,
    pub seed: u64,
    pub knobs: Knobs,
    pub pehe: f64,
    pub n_test: usize,
    /// Keyed by tag value, e.g. `"M"` under the `sex` tag.
    pub subgroup_pehe: BTreeMap<String, f64>,
    pub bias_diag: Option<BiasReport>,
}

/// Mean and sample standard deviation.
pub fn mean_sd(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    if values.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
    (mean, math::sqrt(var))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::world::{discrete_world, reference_world};

    #[test]
    fn pehe_examples() {
        assert_eq!(pehe(&[1.0, 2.0], &[1.0, 2.0]).unwrap(), 0.0);
        assert_eq!(pehe(&[2.0, 3.0], &[1.0, 2.0]).unwrap(), 1.0);
        assert_eq!(pehe(&[0.0, 2.0], &[1.0, 1.0]).unwrap(), 1.0);
        assert_eq!(pehe(&[0.0], &[1.0, 1.0]), Err(Error::LengthMismatch { expected: 2, found: 1 }));
    }

    #[test]
    fn reference_world_bias() {
        let w = discrete_world(reference_world()).unwrap();
        for t in 0..2 {
            let row = lemma1_bias(&w, t).unwrap();
            assert!(row.bias_observed.abs() > 0.1);
            assert!((lemma2_oracle(&w, t).unwrap() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn missing_tag_gives_empty_table() {
        let g = GroupTags::new();
        let t = subgroup_table(&[0.0], &[1.0], &[Some(&g)], "sex").unwrap();
        assert!(t.entries.is_empty());
        assert_eq!(t.warnings.len(), 1);
    }

    #[test]
    fn mean_sd_small() {
        assert_eq!(mean_sd(&[1.0, 3.0]), (2.0, core::f64::consts::SQRT_2));
    }
}
