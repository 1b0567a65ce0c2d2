//! Identification and double-robustness checks with a pass/fail table.

use std::fmt;
use std::time::Instant;

use tca_core::dgp::DgpParams;
use tca_core::eval::{dr_robustness, random_world_sweep, BinStat, DrCase, IDENTITY_TOL};

use crate::error::Result;

pub const WORLDS: usize = 100;
pub const WORLD_SEED: u64 = 2024;
pub const DR_N: usize = 50_000;
pub const DR_BINS: usize = 20;
pub const DR_MAX_Z: f64 = 3.0;
pub const DR_CLIP: f64 = 0.01;
/// Share of bins that must fail when both nuisances are wrong.
pub const POWER_SHARE: f64 = 0.25;

#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
    pub seconds: f64,
}

impl fmt::Display for Check {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let status = if self.passed { "PASS" } else { "FAIL" };
        write!(f, "{status}  {:<28} {} ({:.2}s)", self.name, self.detail, self.seconds)
    }
}

/// Largest gaps of the two enumeration identities over the world sweep.
pub fn identity_checks() -> Result<[Check; 2]> {
    let start = Instant::now();
    let worlds = random_world_sweep(WORLDS, WORLD_SEED)?;
    let seconds = start.elapsed().as_secs_f64();
    let bias = worlds.iter().map(|w| w.bias_gap).fold(0.0, f64::max);
    let ident = worlds.iter().map(|w| w.identification_gap).fold(0.0, f64::max);
    Ok([
        Check {
            name: "confounding-bias identity",
            passed: bias <= IDENTITY_TOL,
            detail: format!("{WORLDS} worlds, max gap {bias:.2e} (tol {IDENTITY_TOL:e})"),
            seconds,
        },
        Check {
            name: "text-level identification",
            passed: ident <= IDENTITY_TOL,
            detail: format!("{WORLDS} worlds, max gap {ident:.2e} (tol {IDENTITY_TOL:e})"),
            seconds,
        },
    ])
}

fn worst_z(bins: &[BinStat]) -> f64 {
    bins.iter().map(|b| b.z_score().abs()).fold(0.0, f64::max)
}

/// Bin-mean agreement under one corrupted nuisance, or the power check when
/// both are corrupted.
pub fn dr_check(p: &DgpParams, case: DrCase) -> Result<Check> {
    let start = Instant::now();
    let p = DgpParams { n: DR_N, ..p.clone() };
    let bins = dr_robustness(&p, case, DR_CLIP, DR_BINS)?;
    let failing = bins.iter().filter(|b| !b.passes(DR_MAX_Z)).count();
    let seconds = start.elapsed().as_secs_f64();
    Ok(match case {
        DrCase::BothWrong => Check {
            name: "dr power (both wrong)",
            passed: failing as f64 >= POWER_SHARE * DR_BINS as f64,
            detail: format!("{failing}/{DR_BINS} bins beyond {DR_MAX_Z} SE (need >= {:.0}%)", POWER_SHARE * 100.0),
            seconds,
        },
        _ => Check {
            name: if case == DrCase::PropensityWrong { "dr case 1 (true outcomes)" } else { "dr case 2 (true propensity)" },
            passed: failing == 0,
            detail: format!("{failing}/{DR_BINS} bins beyond {DR_MAX_Z} SE, max |z| {:.2}", worst_z(&bins)),
            seconds,
        },
    })
}

pub fn run_suite(p: &DgpParams) -> Result<Vec<Check>> {
    let mut out: Vec<Check> = identity_checks()?.into();
    for case in [DrCase::PropensityWrong, DrCase::OutcomeWrong, DrCase::BothWrong] {
        out.push(dr_check(p, case)?);
    }
    Ok(out)
}
