//! Finite worlds over `(X, T, A, Y)` whose joint distribution is enumerated
//! exactly. They are the substrate for the identification checks in `eval`.
//!
//! The text is generated from `X` alone and treatment depends on `X` alone, so
//! the joint factorizes as `P(x) P(t|x) P(a|x) P(y|x,a)`. Potential outcomes
//! are independent given `X` with `P(Y(a) = y | x) = P(y | x, a)`.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::math;
use crate::rng::StreamRng;
use crate::{Error, Result};

pub const MAX_SUPPORT: usize = 16;
const STOCHASTIC_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct WorldSpec {
    pub p_x: Vec<f64>,
    /// `p_t_given_x[x][t]`.
    pub p_t_given_x: Vec<Vec<f64>>,
    /// `Pr(A = 1 | X = x)`.
    pub p_treat_given_x: Vec<f64>,
    pub y_values: Vec<f64>,
    /// `p_y_given_xa[x][a][k]` is the probability of `y_values[k]`.
    pub p_y_given_xa: Vec<[Vec<f64>; 2]>,
}

impl WorldSpec {
    /// Random world with every cell strictly positive.
    pub fn random(n_x: usize, n_t: usize, n_y: usize, rng: &mut StreamRng) -> Self {
        let simplex = |k: usize, rng: &mut StreamRng| -> Vec<f64> {
            let raw: Vec<f64> = (0..k).map(|_| 0.05 + rng.uniform()).collect();
            let s: f64 = raw.iter().sum();
            raw.into_iter().map(|v| v / s).collect()
        };
        let p_x = simplex(n_x, rng);
        let p_t_given_x = (0..n_x).map(|_| simplex(n_t, rng)).collect();
        let p_treat_given_x = (0..n_x).map(|_| 0.05 + 0.9 * rng.uniform()).collect();
        let y_values = (0..n_y).map(|_| 4.0 * rng.uniform() - 2.0).collect();
        let p_y_given_xa = (0..n_x).map(|_| [simplex(n_y, rng), simplex(n_y, rng)]).collect();
        WorldSpec { p_x, p_t_given_x, p_treat_given_x, y_values, p_y_given_xa }
    }

    pub fn n_x(&self) -> usize {
        self.p_x.len()
    }

    pub fn n_t(&self) -> usize {
        self.p_t_given_x.first().map_or(0, Vec::len)
    }

    pub fn n_y(&self) -> usize {
        self.y_values.len()
    }

    fn validate(&self) -> Result<()> {
        let (n_x, n_t, n_y) = (self.n_x(), self.n_t(), self.n_y());
        if n_x == 0 || n_x > MAX_SUPPORT || n_t == 0 || n_t > MAX_SUPPORT {
            return Err(Error::InvalidInput(format!(
                "|X| = {n_x} and |T| = {n_t} must lie in 1..={MAX_SUPPORT}"
            )));
        }
        if n_y == 0 || self.y_values.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("y_values must be non-empty and finite".into()));
        }
        if self.p_t_given_x.len() != n_x || self.p_treat_given_x.len() != n_x || self.p_y_given_xa.len() != n_x
        {
            return Err(Error::InvalidInput("conditional tables must have one row per x".into()));
        }
        check_row("p_x", &self.p_x, n_x)?;
        for x in 0..n_x {
            check_row("p_t_given_x", &self.p_t_given_x[x], n_t)?;
            let pa = self.p_treat_given_x[x];
            if !(0.0..=1.0).contains(&pa) {
                return Err(Error::InvalidInput(format!("p_treat_given_x[{x}] = {pa} outside [0, 1]")));
            }
            for a in 0..2 {
                check_row("p_y_given_xa", &self.p_y_given_xa[x][a], n_y)?;
            }
        }
        Ok(())
    }

    fn p_a_given_x(&self, a: usize, x: usize) -> f64 {
        if a == 1 {
            self.p_treat_given_x[x]
        } else {
            1.0 - self.p_treat_given_x[x]
        }
    }

    /// A world in which the text is an exact copy of the covariate.
    pub fn copy_channel(
        p_x: Vec<f64>,
        p_treat_given_x: Vec<f64>,
        y_values: Vec<f64>,
        p_y_given_xa: Vec<[Vec<f64>; 2]>,
    ) -> Self {
        let n = p_x.len();
        let p_t_given_x = (0..n).map(|x| (0..n).map(|t| if t == x { 1.0 } else { 0.0 }).collect()).collect();
        WorldSpec { p_x, p_t_given_x, p_treat_given_x, y_values, p_y_given_xa }
    }
}

fn check_row(name: &str, row: &[f64], len: usize) -> Result<()> {
    if row.len() != len {
        return Err(Error::InvalidInput(format!("{name} row has length {}, expected {len}", row.len())));
    }
    if row.iter().any(|p| !p.is_finite() || *p < 0.0) {
        return Err(Error::InvalidInput(format!("{name} has a negative or non-finite entry")));
    }
    let sum: f64 = row.iter().sum();
    if math::abs(sum - 1.0) > STOCHASTIC_TOL {
        return Err(Error::InvalidInput(format!("{name} row sums to {sum}, not 1")));
    }
    Ok(())
}

/// One sampled unit of a discrete world.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WorldDraw {
    pub x: usize,
    pub t: usize,
    pub a: usize,
    pub y: f64,
}

/// The full joint table `P(X, T, A, Y)`.
#[derive(Debug, Clone, PartialEq)]
pub struct JointTable {
    spec: WorldSpec,
    cells: Vec<f64>,
}

/// Builds the exhaustive joint table; rejects non-stochastic conditionals.
pub fn discrete_world(spec: WorldSpec) -> Result<JointTable> {
    spec.validate()?;
    let (n_x, n_t, n_y) = (spec.n_x(), spec.n_t(), spec.n_y());
    let mut cells = vec![0.0; n_x * n_t * 2 * n_y];
    for x in 0..n_x {
        for t in 0..n_t {
            for a in 0..2 {
                for k in 0..n_y {
                    cells[((x * n_t + t) * 2 + a) * n_y + k] = spec.p_x[x]
                        * spec.p_t_given_x[x][t]
                        * spec.p_a_given_x(a, x)
                        * spec.p_y_given_xa[x][a][k];
                }
            }
        }
    }
    Ok(JointTable { spec, cells })
}

impl JointTable {
    pub fn spec(&self) -> &WorldSpec {
        &self.spec
    }

    pub fn n_x(&self) -> usize {
        self.spec.n_x()
    }

    pub fn n_t(&self) -> usize {
        self.spec.n_t()
    }

    pub fn n_y(&self) -> usize {
        self.spec.n_y()
    }

    pub fn cells(&self) -> &[f64] {
        &self.cells
    }

    pub fn prob(&self, x: usize, t: usize, a: usize, k: usize) -> f64 {
        self.cells[((x * self.n_t() + t) * 2 + a) * self.n_y() + k]
    }

    pub fn total(&self) -> f64 {
        self.cells.iter().sum()
    }

    /// Sum of `P(x,t,a,y) * weight(x,y)` over cells accepted by `keep(x,t,a)`,
    /// together with the accepted mass.
    fn accumulate(
        &self,
        keep: impl Fn(usize, usize, usize) -> bool,
        weight: impl Fn(usize, f64) -> f64,
    ) -> (f64, f64) {
        let mut mass = 0.0;
        let mut acc = 0.0;
        for x in 0..self.n_x() {
            for t in 0..self.n_t() {
                for a in 0..2 {
                    if !keep(x, t, a) {
                        continue;
                    }
                    for k in 0..self.n_y() {
                        let p = self.prob(x, t, a, k);
                        mass += p;
                        acc += p * weight(x, self.spec.y_values[k]);
                    }
                }
            }
        }
        (acc, mass)
    }

    pub fn p_x(&self, x: usize) -> f64 {
        self.accumulate(|xx, _, _| xx == x, |_, _| 0.0).1
    }

    pub fn p_t(&self, t: usize) -> f64 {
        self.accumulate(|_, tt, _| tt == t, |_, _| 0.0).1
    }

    pub fn p_at(&self, a: usize, t: usize) -> f64 {
        self.accumulate(|_, tt, aa| tt == t && aa == a, |_, _| 0.0).1
    }

    /// `mu_a(x) = E[Y | X = x, A = a]`.
    pub fn mu(&self, a: usize, x: usize) -> Result<f64> {
        let (acc, mass) = self.accumulate(|xx, _, aa| xx == x && aa == a, |_, y| y);
        if mass <= 0.0 {
            return Err(Error::UndefinedConditional(format!("P(X={x}, A={a}) = 0")));
        }
        Ok(acc / mass)
    }

    /// `tau(x) = mu_1(x) - mu_0(x)`.
    pub fn tau_x(&self, x: usize) -> Result<f64> {
        Ok(self.mu(1, x)? - self.mu(0, x)?)
    }

    /// `E[Y | A = a, T = t]`.
    pub fn mean_y_given_at(&self, a: usize, t: usize) -> Result<f64> {
        let (acc, mass) = self.accumulate(|_, tt, aa| tt == t && aa == a, |_, y| y);
        if mass <= 0.0 {
            return Err(Error::UndefinedConditional(format!("P(A={a}, T={t}) = 0")));
        }
        Ok(acc / mass)
    }

    /// `E[f(X) | T = t]`, or `E[f(X) | A = a, T = t]` when `arm` is given.
    pub fn mean_of_x_given(&self, f: impl Fn(usize) -> f64, t: usize, arm: Option<usize>) -> Result<f64> {
        let (acc, mass) = self.accumulate(|_, tt, aa| tt == t && arm.is_none_or(|a| a == aa), |x, _| f(x));
        if mass <= 0.0 {
            return Err(Error::UndefinedConditional(format!("P(T={t}, A={arm:?}) = 0")));
        }
        Ok(acc / mass)
    }

    /// Text-only difference in arm means, `E[Y|A=1,T=t] - E[Y|A=0,T=t]`.
    pub fn naive_tau(&self, t: usize) -> Result<f64> {
        Ok(self.mean_y_given_at(1, t)? - self.mean_y_given_at(0, t)?)
    }

    /// `E[Y(1) - Y(0) | T = t]`, summed over the potential-outcome joint
    /// `P(x) P(t|x) P(Y(0)=y0|x) P(Y(1)=y1|x)` rather than the observational cells.
    pub fn tau_t_potential(&self, t: usize) -> Result<f64> {
        let s = &self.spec;
        let mut mass = 0.0;
        let mut acc = 0.0;
        for x in 0..s.n_x() {
            let pxt = s.p_x[x] * s.p_t_given_x[x][t];
            for (k0, y0) in s.y_values.iter().enumerate() {
                for (k1, y1) in s.y_values.iter().enumerate() {
                    let p = pxt * s.p_y_given_xa[x][0][k0] * s.p_y_given_xa[x][1][k1];
                    mass += p;
                    acc += p * (y1 - y0);
                }
            }
        }
        if mass <= 0.0 {
            return Err(Error::UndefinedConditional(format!("P(T={t}) = 0")));
        }
        Ok(acc / mass)
    }

    /// Shannon entropy of `X` in nats.
    pub fn entropy_x(&self) -> f64 {
        (0..self.n_x()).map(|x| self.p_x(x)).filter(|p| *p > 0.0).map(|p| -p * math::ln(p)).sum()
    }

    /// Mutual information `I(X; T)` in nats.
    pub fn mutual_information_xt(&self) -> f64 {
        let mut mi = 0.0;
        for x in 0..self.n_x() {
            let px = self.p_x(x);
            for t in 0..self.n_t() {
                let pxt = self.accumulate(|xx, tt, _| xx == x && tt == t, |_, _| 0.0).1;
                if pxt > 0.0 {
                    mi += pxt * math::ln(pxt / (px * self.p_t(t)));
                }
            }
        }
        mi
    }

    /// Draws `n` i.i.d. units by sequential inverse-CDF sampling.
    pub fn sample(&self, n: usize, rng: &mut StreamRng) -> Vec<WorldDraw> {
        let s = &self.spec;
        (0..n)
            .map(|_| {
                let x = pick(&s.p_x, rng.uniform());
                let t = pick(&s.p_t_given_x[x], rng.uniform());
                let a = usize::from(rng.uniform() < s.p_treat_given_x[x]);
                let k = pick(&s.p_y_given_xa[x][a], rng.uniform());
                WorldDraw { x, t, a, y: s.y_values[k] }
            })
            .collect()
    }
}

fn pick(probs: &[f64], u: f64) -> usize {
    let mut c = 0.0;
    for (i, p) in probs.iter().enumerate() {
        c += p;
        if u < c {
            return i;
        }
    }
    probs.len() - 1
}

/// The 2x2x2 reference world: `X ~ Bern(0.5)`, `T = X` with probability 0.7,
/// `Pr(A=1|X) = 0.8X + 0.1`, and `Y = X + A` deterministically.
pub fn reference_world() -> WorldSpec {
    let onehot = |k: usize| -> Vec<f64> { (0..3).map(|i| if i == k { 1.0 } else { 0.0 }).collect() };
    WorldSpec {
        p_x: vec![0.5, 0.5],
        p_t_given_x: vec![vec![0.7, 0.3], vec![0.3, 0.7]],
        p_treat_given_x: vec![0.1, 0.9],
        y_values: vec![0.0, 1.0, 2.0],
        p_y_given_xa: vec![[onehot(0), onehot(1)], [onehot(1), onehot(2)]],
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{Purpose, Split};

    #[test]
    fn rejects_non_stochastic_rows() {
        let mut spec = reference_world();
        spec.p_t_given_x[1] = vec![0.3, 0.7 + 1e-9];
        assert!(discrete_world(spec).is_err());
        let mut spec = reference_world();
        spec.p_x = vec![0.5; 3];
        assert!(discrete_world(spec).is_err());
        let mut spec = reference_world();
        spec.p_treat_given_x[0] = 1.5;
        assert!(discrete_world(spec).is_err());
    }

    #[test]
    fn rejects_oversized_support() {
        let mut rng = StreamRng::new(1, Purpose::World, Split::Train);
        let spec = WorldSpec::random(17, 2, 2, &mut rng);
        assert!(discrete_world(spec).is_err());
    }

    #[test]
    fn copy_channel_carries_all_of_x() {
        let onehot = |k: usize| -> Vec<f64> { (0..2).map(|i| if i == k { 1.0 } else { 0.0 }).collect() };
        let spec = WorldSpec::copy_channel(
            vec![0.2, 0.3, 0.5],
            vec![0.3, 0.5, 0.7],
            vec![0.0, 1.0],
            vec![[onehot(0), onehot(1)], [onehot(0), onehot(0)], [onehot(1), onehot(1)]],
        );
        let w = discrete_world(spec).unwrap();
        assert!((w.mutual_information_xt() - w.entropy_x()).abs() < 1e-12);
    }

    #[test]
    fn uniform_independent_world_has_uniform_conditionals() {
        let spec = WorldSpec {
            p_x: vec![0.5, 0.5],
            p_t_given_x: vec![vec![0.5, 0.5], vec![0.5, 0.5]],
            p_treat_given_x: vec![0.5, 0.5],
            y_values: vec![0.0, 1.0],
            p_y_given_xa: vec![[vec![0.5, 0.5], vec![0.5, 0.5]], [vec![0.5, 0.5], vec![0.5, 0.5]]],
        };
        let w = discrete_world(spec).unwrap();
        for c in w.cells() {
            assert_eq!(*c, 1.0 / 16.0);
        }
        assert_eq!(w.p_at(1, 0) / w.p_t(0), 0.5);
        assert!(w.mutual_information_xt().abs() < 1e-15);
    }

    #[test]
    fn reference_world_marginals_by_hand() {
        let w = discrete_world(reference_world()).unwrap();
        assert!((w.total() - 1.0).abs() < 1e-15);
        // P(T=1) = 0.5*0.3 + 0.5*0.7
        assert!((w.p_t(1) - 0.5).abs() < 1e-15);
        // P(A=1, T=1) = 0.5*0.3*0.1 + 0.5*0.7*0.9 = 0.015 + 0.315
        assert!((w.p_at(1, 1) - 0.33).abs() < 1e-15);
        // only Y = X + A cells carry mass
        assert_eq!(w.prob(0, 0, 0, 1), 0.0);
        assert!((w.prob(1, 1, 1, 2) - 0.315).abs() < 1e-15);
        assert_eq!(w.mu(1, 0).unwrap(), 1.0);
        assert_eq!(w.tau_x(1).unwrap(), 1.0);
    }

    #[test]
    fn empirical_frequencies_match_table() {
        let w = discrete_world(reference_world()).unwrap();
        let mut rng = StreamRng::new(4, Purpose::World, Split::Train);
        let n = 200_000;
        let draws = w.sample(n, &mut rng);
        let hits = draws.iter().filter(|d| d.a == 1 && d.t == 1).count() as f64 / n as f64;
        // binomial sd sqrt(0.33*0.67/2e5) ~ 1.05e-3
        assert!((hits - 0.33).abs() < 5e-3, "{hits}");
        assert!(draws.iter().all(|d| d.y == (d.x + d.a) as f64));
    }
}
