//! Grid execution and report emission.

use std::collections::BTreeMap;
use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use serde::Serialize;
use tca_core::data::{Dataset, TestRecord, TrainRecord};
use tca_core::dgp::generate_split;
use tca_core::eval::{mean_sd, pehe, subgroup_table, ExperimentResult, Knobs};
use tca_core::learners::{tbe_fit, tca_fit, TbeVariant};
use tca_core::rng::Split;
use tca_core::surrogate::attach_surrogates;

use crate::config::{Cell, ExperimentConfig, Method};
use crate::error::{Error, Result};
use crate::io::FittedModel;
use crate::remote::{RemoteClient, RemoteSettings};

/// Result CSV columns, in order.
pub const RESULT_COLUMNS: [&str; 12] =
    ["method", "seed", "eta", "kappa", "leak", "prompt_family", "lambda", "pehe", "pehe_GM", "pehe_GF", "pehe_GY", "pehe_GO"];

/// Subgroup column suffixes and the `(tag key, tag value)` they select.
const SUBGROUPS: [(&str, &str, &str); 4] = [("GM", "sex", "M"), ("GF", "sex", "F"), ("GY", "age", "Y"), ("GO", "age", "O")];

#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    pub jobs: usize,
    pub offline: bool,
    pub seed_override: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Failure {
    pub cell: usize,
    pub seed: u64,
    pub method: Option<String>,
    pub error: String,
}

#[derive(Debug, Clone, Default)]
pub struct RunOutcome {
    pub results: Vec<ExperimentResult>,
    pub failures: Vec<Failure>,
    pub warnings: Vec<String>,
}

/// Train split with surrogates and the covariate-free test split of one
/// replicate.
pub struct Replicate {
    pub train: Dataset<TrainRecord>,
    pub test: Dataset<TestRecord>,
}

fn attach_remote(ds: &mut Dataset<TrainRecord>, client: &RemoteClient, cell: &Cell) -> Result<()> {
    let xs: Vec<&[f64]> = ds.records.iter().map(|r| r.x.as_slice()).collect();
    let texts = client.fetch_many(&xs, cell.prompt_family)?;
    for (r, s) in ds.records.iter_mut().zip(texts) {
        r.text = Some(s.text);
    }
    Ok(())
}

/// Generates both splits of replicate `seed` in `cell`.
pub fn build_replicate(cfg: &ExperimentConfig, cell: &Cell, seed: u64, remote: Option<&RemoteClient>) -> Result<Replicate> {
    let mut train = generate_split(&cfg.dgp_params(cell, seed, cfg.n_train), Split::Train)?;
    let mut test = generate_split(&cfg.dgp_params(cell, seed, cfg.n_test), Split::Test)?;
    match remote {
        Some(client) => {
            attach_remote(&mut train, client, cell)?;
            attach_remote(&mut test, client, cell)?;
        }
        None => {
            let sc = cfg.surrogate_config(cell);
            attach_surrogates(&mut train, &sc)?;
            attach_surrogates(&mut test, &sc)?;
        }
    }
    let test = test.strip_covariates()?;
    Ok(Replicate { train, test })
}

pub fn fit_method(cfg: &ExperimentConfig, cell: &Cell, method: Method, train: &Dataset<TrainRecord>) -> Result<FittedModel> {
    let head = cfg.head_config();
    Ok(match method {
        Method::Tca => FittedModel::Tca(tca_fit(train, &cfg.tca_config(cell))?),
        Method::TbeS => FittedModel::Tbe(tbe_fit(&train.records, TbeVariant::S, cfg.encoder.d_emb, &head)?),
        Method::TbeT => FittedModel::Tbe(tbe_fit(&train.records, TbeVariant::T, cfg.encoder.d_emb, &head)?),
    })
}

/// PEHE of `pred` on `test` overall and per subgroup column.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Evaluation {
    pub n_test: usize,
    pub pehe: f64,
    pub subgroup_pehe: BTreeMap<String, f64>,
    pub warnings: Vec<String>,
}

pub fn evaluate(pred: &[f64], test: &Dataset<TestRecord>) -> Result<Evaluation> {
    let truth = test
        .records
        .iter()
        .enumerate()
        .map(|(i, r)| r.tau_true.ok_or_else(|| Error::Format(format!("record {i} has no tau_true"))))
        .collect::<Result<Vec<f64>>>()?;
    let overall = pehe(pred, &truth)?;
    let groups: Vec<_> = test.records.iter().map(|r| r.groups.as_ref()).collect();
    let mut subgroup_pehe = BTreeMap::new();
    let mut warnings = Vec::new();
    for key in ["sex", "age"] {
        let table = subgroup_table(pred, &truth, &groups, key)?;
        warnings.extend(table.warnings.iter().cloned());
        for (name, k, v) in SUBGROUPS {
            if let Some(p) = table.entries.get(v).filter(|_| k == key) {
                subgroup_pehe.insert(name.to_string(), *p);
            }
        }
    }
    Ok(Evaluation { n_test: pred.len(), pehe: overall, subgroup_pehe, warnings })
}

pub fn score(
    method: &str,
    seed: u64,
    knobs: Knobs,
    pred: &[f64],
    test: &Dataset<TestRecord>,
    warnings: &mut Vec<String>,
) -> Result<ExperimentResult> {
    let e = evaluate(pred, test)?;
    warnings.extend(e.warnings);
    Ok(ExperimentResult {
        method: method.to_string(),
        seed,
        knobs,
        pehe: e.pehe,
        n_test: e.n_test,
        subgroup_pehe: e.subgroup_pehe,
        bias_diag: None,
    })
}

fn knobs(cfg: &ExperimentConfig, cell: &Cell) -> Knobs {
    Knobs {
        eta: cell.eta,
        kappa: cell.kappa,
        leak: cell.leak,
        prompt_family: cell.prompt_family.name().to_string(),
        lambda: cfg.head.lambda,
    }
}

type UnitOutput = (Vec<ExperimentResult>, Vec<Failure>, Vec<String>);

fn run_unit(cfg: &ExperimentConfig, cell_index: usize, cell: &Cell, seed: u64, remote: Option<&RemoteClient>) -> UnitOutput {
    let (mut results, mut failures, mut warnings) = (Vec::new(), Vec::new(), Vec::new());
    let rep = match build_replicate(cfg, cell, seed, remote) {
        Ok(r) => r,
        Err(e) => {
            failures.push(Failure { cell: cell_index, seed, method: None, error: e.to_string() });
            return (results, failures, warnings);
        }
    };
    for &method in &cfg.methods {
        let outcome = fit_method(cfg, cell, method, &rep.train).and_then(|model| {
            let pred: Vec<f64> = rep.test.records.iter().map(|r| model.predict(&r.text).tau).collect();
            score(method.name(), seed, knobs(cfg, cell), &pred, &rep.test, &mut warnings)
        });
        match outcome {
            Ok(r) => results.push(r),
            Err(e) => failures.push(Failure {
                cell: cell_index,
                seed,
                method: Some(method.name().to_string()),
                error: e.to_string(),
            }),
        }
    }
    (results, failures, warnings)
}

/// The remote client the config asks for, refused under `--offline`.
pub fn remote_client(cfg: &ExperimentConfig, offline: bool) -> Result<Option<RemoteClient>> {
    match &cfg.remote {
        Some(_) if offline => Err(Error::Config("config enables remote generation but --offline forbids it".into())),
        Some(section) => Ok(Some(RemoteClient::new(RemoteSettings::from_env(section)?))),
        None => Ok(None),
    }
}

/// Runs every (cell, seed) unit on a pool of `opts.jobs` workers. Output
/// order is cell, then seed, then method as listed in the config, whatever
/// the completion order.
pub fn run_experiment(cfg: &ExperimentConfig, opts: &RunOptions) -> Result<RunOutcome> {
    cfg.validate()?;
    let remote = remote_client(cfg, opts.offline)?;
    let cells = cfg.cells()?;
    let seeds = match opts.seed_override {
        Some(s) => vec![s],
        None => cfg.seeds.clone(),
    };
    let units: Vec<(usize, u64)> = (0..cells.len()).flat_map(|c| seeds.iter().map(move |&s| (c, s))).collect();
    let slots: Vec<Mutex<Option<UnitOutput>>> = units.iter().map(|_| Mutex::new(None)).collect();
    let next = AtomicUsize::new(0);
    let workers = opts.jobs.max(1).min(units.len());
    std::thread::scope(|s| {
        for _ in 0..workers {
            s.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                let Some(&(c, seed)) = units.get(i) else { break };
                let out = run_unit(cfg, c, &cells[c], seed, remote.as_ref());
                *slots[i].lock().unwrap() = Some(out);
            });
        }
    });
    let mut outcome = RunOutcome::default();
    for slot in slots {
        let (r, f, w) = slot.into_inner().unwrap().expect("every unit ran");
        outcome.results.extend(r);
        outcome.failures.extend(f);
        outcome.warnings.extend(w);
    }
    Ok(outcome)
}

fn fmt_opt(v: Option<&f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

fn csv_err(e: csv::Error) -> Error {
    Error::Format(e.to_string())
}

pub fn results_csv(results: &[ExperimentResult]) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(RESULT_COLUMNS).map_err(csv_err)?;
    for r in results {
        let mut row = vec![
            r.method.clone(),
            r.seed.to_string(),
            r.knobs.eta.to_string(),
            r.knobs.kappa.to_string(),
            r.knobs.leak.to_string(),
            r.knobs.prompt_family.clone(),
            r.knobs.lambda.to_string(),
            r.pehe.to_string(),
        ];
        row.extend(SUBGROUPS.iter().map(|(name, _, _)| fmt_opt(r.subgroup_pehe.get(*name))));
        w.write_record(&row).map_err(csv_err)?;
    }
    w.into_inner().map_err(|e| Error::Format(e.to_string()))
}

pub fn results_jsonl(results: &[ExperimentResult]) -> Result<Vec<u8>> {
    let mut out = Vec::new();
    for r in results {
        out.extend(serde_json::to_vec(r).map_err(|e| Error::Format(e.to_string()))?);
        out.push(b'\n');
    }
    Ok(out)
}

/// Mean and standard deviation of PEHE over seeds, grouped by the columns
/// `key` picks out, in first-seen order.
fn aggregate<K: Fn(&ExperimentResult) -> Vec<String>>(
    results: &[ExperimentResult],
    header: &[&str],
    key: K,
) -> Result<Vec<u8>> {
    let mut order: Vec<Vec<String>> = Vec::new();
    let mut groups: BTreeMap<Vec<String>, Vec<f64>> = BTreeMap::new();
    for r in results {
        let k = key(r);
        if !groups.contains_key(&k) {
            order.push(k.clone());
        }
        groups.entry(k).or_default().push(r.pehe);
    }
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut head: Vec<&str> = header.to_vec();
    head.extend(["n_seeds", "pehe_mean", "pehe_sd"]);
    w.write_record(&head).map_err(csv_err)?;
    for k in order {
        let v = &groups[&k];
        let (m, sd) = mean_sd(v);
        let mut row = k.clone();
        row.extend([v.len().to_string(), m.to_string(), sd.to_string()]);
        w.write_record(&row).map_err(csv_err)?;
    }
    w.into_inner().map_err(|e| Error::Format(e.to_string()))
}

pub fn summary_csv(results: &[ExperimentResult]) -> Result<Vec<u8>> {
    aggregate(results, &["method", "eta", "kappa", "leak", "prompt_family", "lambda"], |r| {
        vec![
            r.method.clone(),
            r.knobs.eta.to_string(),
            r.knobs.kappa.to_string(),
            r.knobs.leak.to_string(),
            r.knobs.prompt_family.clone(),
            r.knobs.lambda.to_string(),
        ]
    })
}

/// PEHE against confounder strength.
pub fn figure_strength_csv(results: &[ExperimentResult]) -> Result<Vec<u8>> {
    aggregate(results, &["eta", "kappa", "method"], |r| {
        vec![r.knobs.eta.to_string(), r.knobs.kappa.to_string(), r.method.clone()]
    })
}

/// PEHE against prompt family.
pub fn figure_prompt_csv(results: &[ExperimentResult]) -> Result<Vec<u8>> {
    aggregate(results, &["prompt_family", "method"], |r| vec![r.knobs.prompt_family.clone(), r.method.clone()])
}

#[derive(Serialize)]
struct Manifest<'a> {
    tool: &'static str,
    version: &'static str,
    config_hash: String,
    offline: bool,
    seeds: Vec<u64>,
    cells: usize,
    rows: usize,
    failures: &'a [Failure],
    warnings: Vec<&'a String>,
    config: &'a ExperimentConfig,
}

/// Manifest with every resolved config value. Contains nothing that varies
/// between runs of the same config.
pub fn manifest_json(cfg: &ExperimentConfig, opts: &RunOptions, outcome: &RunOutcome) -> Result<Vec<u8>> {
    let mut warnings: Vec<&String> = outcome.warnings.iter().collect();
    warnings.sort();
    warnings.dedup();
    let m = Manifest {
        tool: "tca",
        version: env!("CARGO_PKG_VERSION"),
        config_hash: cfg.hash(),
        offline: opts.offline,
        seeds: opts.seed_override.map_or_else(|| cfg.seeds.clone(), |s| vec![s]),
        cells: cfg.cells()?.len(),
        rows: outcome.results.len(),
        failures: &outcome.failures,
        warnings,
        config: cfg,
    };
    let mut out = serde_json::to_vec_pretty(&m).map_err(|e| Error::Format(e.to_string()))?;
    out.push(b'\n');
    Ok(out)
}

pub const ARTIFACTS: [&str; 6] =
    ["results.csv", "results.jsonl", "summary.csv", "figure_strength.csv", "figure_prompt.csv", "manifest.json"];

pub fn write_artifacts(dir: &Path, cfg: &ExperimentConfig, opts: &RunOptions, outcome: &RunOutcome) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let r = &outcome.results;
    let files = [
        results_csv(r)?,
        results_jsonl(r)?,
        summary_csv(r)?,
        figure_strength_csv(r)?,
        figure_prompt_csv(r)?,
        manifest_json(cfg, opts, outcome)?,
    ];
    for (name, bytes) in ARTIFACTS.iter().zip(files) {
        let path = dir.join(name);
        std::fs::write(&path, bytes).map_err(|e| Error::io(&path, e))?;
    }
    Ok(())
}
