use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use tca::config::{ExperimentConfig, Method};
use tca::io::{self, ModelFile, PredictionLine};
use tca::oracle_suite::run_suite;
use tca::runner::{self, RunOptions};
use tca::{Error, Result};

#[derive(Parser)]
#[command(name = "tca", version, about = "CATE estimation under inference-time text confounding")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum SplitArg {
    Train,
    Test,
}

#[derive(Subcommand)]
enum Command {
    /// Run the full grid and write results, summaries and a manifest.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Output directory; defaults to `output_dir` from the config.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Run this seed only.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        jobs: Option<usize>,
        /// Forbid remote endpoints.
        #[arg(long)]
        offline: bool,
    },
    /// Write one split of one replicate as JSONL. Test splits carry no covariates.
    Generate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, value_enum, default_value = "train")]
        split: SplitArg,
        /// Defaults to the first seed of the config.
        #[arg(long)]
        seed: Option<u64>,
        /// Index into the knob grid.
        #[arg(long, default_value_t = 0)]
        cell: usize,
        #[arg(long)]
        offline: bool,
    },
    /// Fit one method on a training JSONL and save the model as JSON.
    Fit {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        data: PathBuf,
        /// TCA, TBE-S or TBE-T.
        #[arg(long)]
        method: String,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 0)]
        cell: usize,
    },
    /// Predict the effect for every text of a JSONL dataset.
    Predict {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Score predictions against the true effects of a test JSONL.
    Evaluate {
        #[arg(long)]
        predictions: PathBuf,
        #[arg(long)]
        data: PathBuf,
        /// Also write the scores as JSON.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run the identification and double-robustness checks.
    OracleSuite {
        /// Take the data-generating process from this config.
        #[arg(long)]
        config: Option<PathBuf>,
    },
}

fn cell_of(cfg: &ExperimentConfig, index: usize) -> Result<tca::config::Cell> {
    let cells = cfg.cells()?;
    let n = cells.len();
    cells.into_iter().nth(index).ok_or_else(|| Error::Config(format!("cell {index} out of range (grid has {n})")))
}

fn default_jobs() -> usize {
    std::thread::available_parallelism().map_or(1, |n| n.get())
}

fn execute(command: Command) -> Result<ExitCode> {
    match command {
        Command::Run { config, out, seed, jobs, offline } => {
            let cfg = ExperimentConfig::load(&config)?;
            let opts = RunOptions { jobs: jobs.unwrap_or_else(default_jobs), offline, seed_override: seed };
            let outcome = runner::run_experiment(&cfg, &opts)?;
            let dir = out.unwrap_or_else(|| cfg.output_dir.clone());
            runner::write_artifacts(&dir, &cfg, &opts, &outcome)?;
            println!("{}", String::from_utf8_lossy(&runner::summary_csv(&outcome.results)?).trim_end());
            for f in &outcome.failures {
                eprintln!("failed: cell {} seed {} {}: {}", f.cell, f.seed, f.method.as_deref().unwrap_or("data"), f.error);
            }
            eprintln!("wrote {} rows to {}", outcome.results.len(), dir.display());
            Ok(if outcome.failures.is_empty() { ExitCode::SUCCESS } else { ExitCode::FAILURE })
        }
        Command::Generate { config, out, split, seed, cell, offline } => {
            let cfg = ExperimentConfig::load(&config)?;
            let cell = cell_of(&cfg, cell)?;
            let seed = seed.unwrap_or(cfg.seeds[0]);
            let remote = runner::remote_client(&cfg, offline)?;
            let rep = runner::build_replicate(&cfg, &cell, seed, remote.as_ref())?;
            match split {
                SplitArg::Train => io::save_train(&out, &rep.train)?,
                SplitArg::Test => io::save_test(&out, &rep.test)?,
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::Fit { config, data, method, out, cell } => {
            let cfg = ExperimentConfig::load(&config)?;
            let cell = cell_of(&cfg, cell)?;
            let method = Method::from_name(&method)
                .ok_or_else(|| Error::Config(format!("unknown method {method:?}; use TCA, TBE-S or TBE-T")))?;
            let train = io::load_train(&data)?;
            let fitted = runner::fit_method(&cfg, &cell, method, &train)?;
            ModelFile::new(fitted).save(&out)?;
            Ok(ExitCode::SUCCESS)
        }
        Command::Predict { model, data, out } => {
            let model = ModelFile::load(&model)?;
            let test = io::load_test(&data)?;
            let preds: Vec<PredictionLine> = test
                .records
                .iter()
                .enumerate()
                .map(|(index, r)| {
                    let p = model.fitted.predict(&r.text);
                    PredictionLine { index, tau_hat: p.tau, empty_text: p.empty_text }
                })
                .collect();
            let empty = preds.iter().filter(|p| p.empty_text).count();
            if empty > 0 {
                eprintln!("warning: {empty} texts had no tokens and were predicted from the zero embedding");
            }
            io::save_predictions(&out, &preds)?;
            Ok(ExitCode::SUCCESS)
        }
        Command::Evaluate { predictions, data, out } => {
            let preds = io::load_predictions(&predictions)?;
            let test = io::load_test(&data)?;
            let tau: Vec<f64> = preds.iter().map(|p| p.tau_hat).collect();
            let e = runner::evaluate(&tau, &test)?;
            println!("pehe\t{}", e.pehe);
            for (k, v) in &e.subgroup_pehe {
                println!("pehe_{k}\t{v}");
            }
            for w in &e.warnings {
                eprintln!("warning: {w}");
            }
            if let Some(path) = out {
                let json = serde_json::to_string_pretty(&e).map_err(|e| Error::Format(e.to_string()))?;
                std::fs::write(&path, json + "\n").map_err(|err| Error::io(&path, err))?;
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::OracleSuite { config } => {
            let cfg = match config {
                Some(path) => ExperimentConfig::load(&path)?,
                None => ExperimentConfig::default(),
            };
            let cell = cell_of(&cfg, 0)?;
            let checks = run_suite(&cfg.dgp_params(&cell, cfg.seeds[0], 1))?;
            for c in &checks {
                println!("{c}");
            }
            let failed = checks.iter().filter(|c| !c.passed).count();
            println!("{} passed, {failed} failed", checks.len() - failed);
            Ok(if failed == 0 { ExitCode::SUCCESS } else { ExitCode::FAILURE })
        }
    }
}

fn main() -> ExitCode {
    match execute(Cli::parse().command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
