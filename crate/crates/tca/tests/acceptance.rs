//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any criterion fails.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::{Command, ExitCode};
use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use tca::config::ExperimentConfig;
use tca::oracle_suite::{dr_check, identity_checks};
use tca::runner::{run_experiment, RunOptions};
use tca_core::data::TreatmentArm;
use tca_core::encoder::encode;
use tca_core::eval::{mean_sd, DrCase, ExperimentResult};
use tca_core::nuisance::{fit_logistic, fit_ridge, LogisticConfig, Network};
use tca_core::pseudo::{dr_pseudo, pw_pseudo, ra_pseudo};
use tca_core::rng::{Purpose, Split, StreamRng};

const IDENTITY_SECONDS: f64 = 5.0;
const DR_SECONDS: f64 = 30.0;
const BENCH_SECONDS: f64 = 600.0;
const SWEEP_SECONDS: f64 = 1800.0;
const CLAIM_RATIO: f64 = 0.8;
const NULL_GAP: f64 = 0.05;
const RIDGE_TOL: f64 = 1e-10;
const LOGISTIC_TOL: f64 = 1e-6;
const GRAD_TOL: f64 = 1e-5;
const PSEUDO_TOL: f64 = 1e-12;

struct Outcome {
    passed: bool,
    detail: String,
}

fn repo(rel: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../..").join(rel)
}

fn config(name: &str) -> ExperimentConfig {
    ExperimentConfig::load(&repo(&format!("configs/{name}.toml"))).expect("shipped config loads")
}

fn jobs() -> usize {
    std::thread::available_parallelism().map_or(1, |n| n.get())
}

/// Mean PEHE per (grid key, method) over seeds.
fn means(results: &[ExperimentResult], key: impl Fn(&ExperimentResult) -> String) -> BTreeMap<(String, String), f64> {
    let mut groups: BTreeMap<(String, String), Vec<f64>> = BTreeMap::new();
    for r in results {
        groups.entry((key(r), r.method.clone())).or_default().push(r.pehe);
    }
    groups.into_iter().map(|(k, v)| (k, mean_sd(&v).0)).collect()
}

fn run(cfg: &ExperimentConfig) -> Result<Vec<ExperimentResult>, String> {
    let out = run_experiment(cfg, &RunOptions { jobs: jobs(), offline: true, seed_override: None })
        .map_err(|e| e.to_string())?;
    if let Some(f) = out.failures.first() {
        return Err(format!("cell {} seed {} failed: {}", f.cell, f.seed, f.error));
    }
    Ok(out.results)
}

/// TCA mean against the better of the two baselines in one grid cell.
fn claim(m: &BTreeMap<(String, String), f64>, key: &str) -> (bool, String) {
    let get = |method: &str| m[&(key.to_string(), method.to_string())];
    let (tca, s, t) = (get("TCA"), get("TBE-S"), get("TBE-T"));
    let ratio = tca / s.min(t);
    (ratio <= CLAIM_RATIO, format!("TCA {tca:.4} TBE-S {s:.4} TBE-T {t:.4} ratio {ratio:.3} (<= {CLAIM_RATIO})"))
}

fn criterion_identity(which: usize) -> Outcome {
    match identity_checks() {
        Ok(checks) => {
            let c = &checks[which];
            Outcome {
                passed: c.passed && c.seconds < IDENTITY_SECONDS,
                detail: format!("{} in {:.2}s (< {IDENTITY_SECONDS}s)", c.detail, c.seconds),
            }
        }
        Err(e) => Outcome { passed: false, detail: e.to_string() },
    }
}

fn criterion_dr(cases: &[DrCase]) -> Outcome {
    let bench = config("benchmark");
    let cell = bench.cells().unwrap()[0];
    let p = bench.dgp_params(&cell, bench.seeds[0], 1);
    let mut passed = true;
    let mut parts = Vec::new();
    for &case in cases {
        match dr_check(&p, case) {
            Ok(c) => {
                passed &= c.passed && c.seconds < DR_SECONDS;
                parts.push(format!("{}: {} in {:.2}s", case.name(), c.detail, c.seconds));
            }
            Err(e) => {
                passed = false;
                parts.push(format!("{}: {e}", case.name()));
            }
        }
    }
    Outcome { passed, detail: parts.join("; ") }
}

fn timed(limit: f64, f: impl FnOnce() -> Result<(bool, String), String>) -> Outcome {
    let start = Instant::now();
    let res = f();
    let secs = start.elapsed().as_secs_f64();
    match res {
        Ok((ok, detail)) => Outcome { passed: ok && secs < limit, detail: format!("{detail} in {secs:.1}s (< {limit}s)") },
        Err(e) => Outcome { passed: false, detail: e },
    }
}

fn criterion_claim() -> Outcome {
    timed(BENCH_SECONDS, || {
        let results = run(&config("benchmark"))?;
        Ok(claim(&means(&results, |_| String::new()), ""))
    })
}

fn criterion_strength_trend() -> Outcome {
    timed(SWEEP_SECONDS, || {
        let cfg = config("strength_sweep");
        let results = run(&cfg)?;
        let m = means(&results, |r| format!("{:.3}", r.knobs.eta));
        let mut gaps = Vec::new();
        for eta in cfg.sweep.eta.clone().unwrap() {
            let k = format!("{eta:.3}");
            let get = |method: &str| m[&(k.clone(), method.to_string())];
            gaps.push((eta, get("TBE-S").min(get("TBE-T")) - get("TCA")));
        }
        let increasing = gaps.windows(2).all(|w| w[1].1 > w[0].1);
        let text: Vec<String> = gaps.iter().map(|(e, g)| format!("eta {e}: gap {g:.4}")).collect();
        Ok((increasing, format!("{} over {} seeds, strictly increasing", text.join(", "), cfg.seeds.len())))
    })
}

fn criterion_null() -> Outcome {
    timed(BENCH_SECONDS, || {
        let m = means(&run(&config("null_leak"))?, |_| String::new());
        let (tca, t) = (m[&(String::new(), "TCA".into())], m[&(String::new(), "TBE-T".into())]);
        let gap = (tca - t).abs();
        Ok((gap < NULL_GAP, format!("TCA {tca:.4} TBE-T {t:.4} |gap| {gap:.4} (< {NULL_GAP})")))
    })
}

fn criterion_families() -> Outcome {
    timed(SWEEP_SECONDS, || {
        let cfg = config("prompt_sweep");
        let m = means(&run(&cfg)?, |r| r.knobs.prompt_family.clone());
        let mut ok = true;
        let mut parts = Vec::new();
        for fam in cfg.sweep.prompt_family.clone().unwrap() {
            let (pass, detail) = claim(&m, &fam);
            ok &= pass;
            parts.push(format!("{fam}: {detail}"));
        }
        Ok((ok, parts.join("; ")))
    })
}

fn ridge_gap() -> f64 {
    let xs = [[1.0, 0.5], [2.0, -1.0], [0.3, 0.8], [-1.2, 2.2], [0.7, 0.1]];
    let ys = [1.1, 0.4, 2.0, -0.3, 0.9];
    let lambda = 0.1;
    let m = fit_ridge(&xs, &ys, lambda).unwrap();
    let z = DMatrix::from_fn(5, 3, |i, j| if j == 0 { 1.0 } else { xs[i][j - 1] });
    let mut lhs = z.transpose() * &z;
    lhs[(1, 1)] += lambda;
    lhs[(2, 2)] += lambda;
    let theta = lhs.lu().solve(&(z.transpose() * DVector::from_row_slice(&ys))).unwrap();
    [(m.bias - theta[0]).abs(), (m.weights[0] - theta[1]).abs(), (m.weights[1] - theta[2]).abs()]
        .into_iter()
        .fold(0.0, f64::max)
}

fn logistic_gap() -> f64 {
    let xs = [-2.0, -1.3, -0.4, 0.1, 0.5, 0.9, 1.6, 2.4];
    let bits = [0u8, 0, 1, 0, 1, 0, 1, 1];
    let arms: Vec<TreatmentArm> = bits.iter().map(|&b| TreatmentArm::from_bit(b).unwrap()).collect();
    let rows: Vec<[f64; 1]> = xs.iter().map(|&x| [x]).collect();
    let m = fit_logistic(&rows, &arms, &LogisticConfig::default()).unwrap();
    let (mut b, mut w) = (0.0f64, 0.0f64);
    for _ in 0..200_000 {
        let (mut gb, mut gw) = (0.0, 0.0);
        for (x, a) in xs.iter().zip(bits) {
            let p = 1.0 / (1.0 + (-(b + w * x)).exp());
            gb += a as f64 - p;
            gw += (a as f64 - p) * x;
        }
        b += 0.1 * gb;
        w += 0.1 * gw;
        if gb.abs() + gw.abs() < 1e-13 {
            break;
        }
    }
    (m.bias - b).abs().max((m.weights[0] - w).abs())
}

/// Largest relative error between backpropagated and central-difference gradients.
fn gradient_gap(sizes: Vec<usize>, n: usize, seed: u64) -> f64 {
    let mut rng = StreamRng::new(seed, Purpose::Init, Split::Train);
    let mut net = Network::initialize(sizes.clone(), &mut rng);
    for p in net.params.iter_mut() {
        *p += 0.3 * rng.normal();
    }
    let xs: Vec<Vec<f64>> = (0..n).map(|_| (0..sizes[0]).map(|_| rng.normal()).collect()).collect();
    let ys: Vec<f64> = (0..n).map(|_| rng.normal()).collect();
    let (_, grad) = net.loss_and_gradient(&xs, &ys, None);
    let h = 1e-6;
    let mut worst = 0.0f64;
    for k in 0..net.params.len() {
        let (mut plus, mut minus) = (net.clone(), net.clone());
        plus.params[k] += h;
        minus.params[k] -= h;
        let numeric = (plus.loss_and_gradient(&xs, &ys, None).0 - minus.loss_and_gradient(&xs, &ys, None).0) / (2.0 * h);
        worst = worst.max((numeric - grad[k]).abs() / numeric.abs().max(grad[k].abs()).max(1e-8));
    }
    worst
}

fn pseudo_gap() -> f64 {
    use TreatmentArm::{Control as C, Treated as T};
    [
        (dr_pseudo(2.0, T, 2.0, 1.0, 0.4).unwrap().value, 1.0),
        (dr_pseudo(3.0, T, 2.0, 1.0, 0.5).unwrap().value, 3.0),
        (dr_pseudo(1.5, C, 2.0, 1.0, 0.5).unwrap().value, 0.0),
        (ra_pseudo(3.0, T, 4.0, 1.0).unwrap().value, 2.0),
        (ra_pseudo(1.0, C, 2.0, 0.0).unwrap().value, 1.0),
        (pw_pseudo(2.0, T, 0.5).unwrap().value, 4.0),
        (pw_pseudo(2.0, C, 0.25).unwrap().value, -2.0 / 0.75),
    ]
    .iter()
    .map(|(a, b)| (a - b).abs())
    .fold(0.0, f64::max)
}

fn golden_stable() -> bool {
    let golden = std::fs::read_to_string(repo("crates/core/tests/fixtures/encoder_golden.tsv")).unwrap();
    let mut out = String::new();
    for line in golden.lines() {
        let mut parts = line.split('\t');
        let text = parts.next().unwrap();
        let d: usize = parts.next().unwrap().parse().unwrap();
        let values: Vec<String> = encode(text, d).values.iter().map(|v| format!("{v:?}")).collect();
        out.push_str(&format!("{text}\t{d}\t{}\n", values.join(",")));
    }
    out == golden
}

fn criterion_numerics() -> Outcome {
    let ridge = ridge_gap();
    let logistic = logistic_gap();
    let grad = gradient_gap(vec![2, 1, 1], 7, 3).max(gradient_gap(vec![3, 5, 4, 3, 1], 9, 11));
    let pseudo = pseudo_gap();
    let golden = golden_stable();
    Outcome {
        passed: ridge <= RIDGE_TOL && logistic <= LOGISTIC_TOL && grad <= GRAD_TOL && pseudo <= PSEUDO_TOL && golden,
        detail: format!(
            "ridge {ridge:.1e} (<= {RIDGE_TOL:e}), logistic {logistic:.1e} (<= {LOGISTIC_TOL:e}), \
             gradient rel {grad:.1e} (<= {GRAD_TOL:e}), pseudo {pseudo:.1e} (<= {PSEUDO_TOL:e}), encoder golden {}",
            if golden { "byte-stable" } else { "DRIFTED" }
        ),
    }
}

fn criterion_determinism() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let cfg = repo("configs/benchmark.toml");
    let mut csvs = Vec::new();
    for name in ["first", "second"] {
        let out = dir.path().join(name);
        let status = Command::new(env!("CARGO_BIN_EXE_tca"))
            .args(["run", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap(), "--offline"])
            .output()
            .expect("binary runs");
        if !status.status.success() {
            return Outcome { passed: false, detail: String::from_utf8_lossy(&status.stderr).into_owned() };
        }
        csvs.push(std::fs::read(out.join("results.csv")).unwrap());
    }
    let same = csvs[0] == csvs[1];
    let rows = csvs[0].iter().filter(|&&b| b == b'\n').count() - 1;
    Outcome {
        passed: same && rows > 0,
        detail: format!("two --offline runs, {rows} rows, results.csv {}", if same { "byte-identical" } else { "DIFFERS" }),
    }
}

fn main() -> ExitCode {
    let criteria: Vec<(&str, Box<dyn Fn() -> Outcome>)> = vec![
        ("1 confounding-bias identity", Box::new(|| criterion_identity(0))),
        ("2 text-level identification", Box::new(|| criterion_identity(1))),
        ("3 dr case 1 (true outcomes)", Box::new(|| criterion_dr(&[DrCase::PropensityWrong]))),
        ("4 dr case 2 + power", Box::new(|| criterion_dr(&[DrCase::OutcomeWrong, DrCase::BothWrong]))),
        ("5 TCA beats text baselines", Box::new(criterion_claim)),
        ("6 gap grows with eta", Box::new(criterion_strength_trend)),
        ("7 full-leak null", Box::new(criterion_null)),
        ("8 every prompt family", Box::new(criterion_families)),
        ("9 numerical oracles", Box::new(criterion_numerics)),
        ("10 offline determinism", Box::new(criterion_determinism)),
    ];
    let mut failed = 0;
    for (name, check) in &criteria {
        let o = check();
        failed += usize::from(!o.passed);
        println!("{}  {name}: {}", if o.passed { "PASS" } else { "FAIL" }, o.detail);
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
