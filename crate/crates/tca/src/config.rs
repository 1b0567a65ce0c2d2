//! Experiment configuration read from TOML.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use tca_core::dgp::DgpParams;
use tca_core::learners::{HeadConfig, HeadKind, TcaConfig};
use tca_core::nuisance::{LogisticConfig, MlpHyper, NuisanceConfig, OutcomeModelKind};
use tca_core::surrogate::{PromptFamily, SurrogateConfig};

use crate::error::{Error, Result};

/// Shared coefficient direction of the benchmark: a seeded draw on the unit
/// sphere over coordinates 1..8, with the sex coordinate held at zero.
const BENCH_U: [f64; 8] = [
    0.0,
    -0.02270722110369932,
    -0.3019543988623491,
    0.13169371066635352,
    -0.8204687360704506,
    -0.03198285754396811,
    0.4256496925924902,
    -0.18866684615626106,
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Method {
    #[serde(rename = "TCA")]
    Tca,
    #[serde(rename = "TBE-S")]
    TbeS,
    #[serde(rename = "TBE-T")]
    TbeT,
}

impl Method {
    pub const ALL: [Method; 3] = [Method::Tca, Method::TbeS, Method::TbeT];

    pub fn name(self) -> &'static str {
        match self {
            Method::Tca => "TCA",
            Method::TbeS => "TBE-S",
            Method::TbeT => "TBE-T",
        }
    }

    pub fn from_name(s: &str) -> Option<Self> {
        Method::ALL.into_iter().find(|m| m.name().eq_ignore_ascii_case(s))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DgpSection {
    pub d_x: usize,
    pub beta: Vec<f64>,
    pub delta: Vec<f64>,
    pub xi: Vec<f64>,
    pub gamma1: f64,
    pub gamma2: f64,
    pub gamma3: f64,
    pub eta: f64,
    pub kappa: f64,
    pub noise_sd: f64,
}

impl Default for DgpSection {
    fn default() -> Self {
        DgpSection {
            d_x: 8,
            beta: BENCH_U.to_vec(),
            delta: BENCH_U.iter().map(|u| 0.25 * u).collect(),
            xi: BENCH_U.iter().map(|u| 2.0 * u).collect(),
            gamma1: 1.0,
            gamma2: 0.5,
            gamma3: 0.5,
            eta: 1.0,
            kappa: 1.0,
            noise_sd: 0.1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SurrogateSection {
    pub prompt_family: String,
    pub leak_probability: f64,
    pub paraphrase_seed: u64,
}

impl Default for SurrogateSection {
    fn default() -> Self {
        SurrogateSection { prompt_family: "Narrative".into(), leak_probability: 0.6, paraphrase_seed: 0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EncoderSection {
    pub d_emb: usize,
}

impl Default for EncoderSection {
    fn default() -> Self {
        EncoderSection { d_emb: 256 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MlpSection {
    pub hidden: [usize; 3],
    pub dropout: f64,
    pub step_size: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub l2: f64,
    pub seed: u64,
}

impl Default for MlpSection {
    fn default() -> Self {
        let h = MlpHyper::default();
        MlpSection {
            hidden: h.hidden,
            dropout: h.dropout,
            step_size: h.step_size,
            epochs: h.epochs,
            batch_size: h.batch_size,
            l2: h.l2,
            seed: h.seed,
        }
    }
}

impl MlpSection {
    pub fn hyper(&self) -> MlpHyper {
        MlpHyper {
            hidden: self.hidden,
            dropout: self.dropout,
            step_size: self.step_size,
            epochs: self.epochs,
            batch_size: self.batch_size,
            l2: self.l2,
            seed: self.seed,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NuisanceSection {
    /// "ridge" or "mlp".
    pub outcome_model: String,
    pub ridge_lambda: f64,
    pub k_folds: usize,
    pub clip: f64,
    pub fold_seed: u64,
    pub logistic_max_iter: usize,
    pub logistic_tol: f64,
    pub mlp: MlpSection,
}

impl Default for NuisanceSection {
    fn default() -> Self {
        let n = NuisanceConfig::default();
        NuisanceSection {
            outcome_model: "ridge".into(),
            ridge_lambda: n.ridge_lambda,
            k_folds: n.k_folds,
            clip: n.logistic.clip,
            fold_seed: n.fold_seed,
            logistic_max_iter: n.logistic.max_iter,
            logistic_tol: n.logistic.tol,
            mlp: MlpSection::default(),
        }
    }
}

/// Stage-3 regressor, also used for both TBE baselines. An MLP head takes
/// its hyperparameters from `nuisance.mlp`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HeadSection {
    /// "ridge" or "mlp".
    pub kind: String,
    pub lambda: f64,
}

impl Default for HeadSection {
    fn default() -> Self {
        HeadSection { kind: "ridge".into(), lambda: 1e-3 }
    }
}

/// Grids over the knobs. An absent grid means the single base value.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepSection {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub eta: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub kappa: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub leak: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub prompt_family: Option<Vec<String>>,
}

/// Remote text generation. URL and token come from the environment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RemoteSection {
    pub model: String,
    pub cache_dir: PathBuf,
    pub max_concurrency: usize,
}

impl Default for RemoteSection {
    fn default() -> Self {
        RemoteSection { model: "gpt-4o-mini".into(), cache_dir: PathBuf::from("cache/remote"), max_concurrency: 4 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub n_train: usize,
    pub n_test: usize,
    pub seeds: Vec<u64>,
    pub methods: Vec<Method>,
    pub output_dir: PathBuf,
    pub dgp: DgpSection,
    pub surrogate: SurrogateSection,
    pub encoder: EncoderSection,
    pub nuisance: NuisanceSection,
    pub head: HeadSection,
    pub sweep: SweepSection,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub remote: Option<RemoteSection>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            n_train: 10_000,
            n_test: 2_000,
            seeds: vec![0, 1, 2, 3, 4],
            methods: Method::ALL.to_vec(),
            output_dir: PathBuf::from("results"),
            dgp: DgpSection::default(),
            surrogate: SurrogateSection::default(),
            encoder: EncoderSection::default(),
            nuisance: NuisanceSection::default(),
            head: HeadSection::default(),
            sweep: SweepSection::default(),
            remote: None,
        }
    }
}

/// One point of the knob grid.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Cell {
    pub eta: f64,
    pub kappa: f64,
    pub leak: f64,
    pub prompt_family: PromptFamily,
}

fn family(name: &str) -> Result<PromptFamily> {
    PromptFamily::from_name(name)
        .ok_or_else(|| Error::Config(format!("unknown prompt family {name:?}; use Factual, Narrative or SymptomFocused")))
}

fn grid<T: Clone>(name: &str, grid: &Option<Vec<T>>, base: T) -> Result<Vec<T>> {
    match grid {
        None => Ok(vec![base]),
        Some(g) if g.is_empty() => Err(Error::Config(format!("sweep.{name} is empty"))),
        Some(g) => Ok(g.clone()),
    }
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// Hex SHA-256 of the canonical JSON form, so formatting and key order in
    /// the source file do not matter.
    pub fn hash(&self) -> String {
        let json = serde_json::to_string(self).expect("config serializes");
        format!("{:x}", Sha256::digest(json.as_bytes()))
    }

    pub fn validate(&self) -> Result<()> {
        if self.methods.is_empty() {
            return Err(Error::Config("methods is empty".into()));
        }
        if self.seeds.is_empty() {
            return Err(Error::Config("seeds is empty".into()));
        }
        if self.n_train == 0 || self.n_test == 0 {
            return Err(Error::Config("n_train and n_test must be positive".into()));
        }
        if self.encoder.d_emb == 0 {
            return Err(Error::Config("encoder.d_emb must be positive".into()));
        }
        outcome_kind(&self.nuisance.outcome_model)?;
        head_kind(&self.head.kind)?;
        let cells = self.cells()?;
        for c in &cells {
            self.dgp_params(c, 0, 1).validate()?;
            self.surrogate_config(c).validate()?;
        }
        Ok(())
    }

    /// Knob grid, `eta` outermost and prompt family innermost.
    pub fn cells(&self) -> Result<Vec<Cell>> {
        let etas = grid("eta", &self.sweep.eta, self.dgp.eta)?;
        let kappas = grid("kappa", &self.sweep.kappa, self.dgp.kappa)?;
        let leaks = grid("leak", &self.sweep.leak, self.surrogate.leak_probability)?;
        let families = grid("prompt_family", &self.sweep.prompt_family, self.surrogate.prompt_family.clone())?
            .iter()
            .map(|f| family(f))
            .collect::<Result<Vec<_>>>()?;
        let mut cells = Vec::new();
        for &eta in &etas {
            for &kappa in &kappas {
                for &leak in &leaks {
                    for &prompt_family in &families {
                        cells.push(Cell { eta, kappa, leak, prompt_family });
                    }
                }
            }
        }
        Ok(cells)
    }

    pub fn dgp_params(&self, cell: &Cell, seed: u64, n: usize) -> DgpParams {
        let d = &self.dgp;
        DgpParams {
            d_x: d.d_x,
            beta: d.beta.clone(),
            delta: d.delta.clone(),
            gamma1: d.gamma1,
            gamma2: d.gamma2,
            gamma3: d.gamma3,
            eta: cell.eta,
            kappa: cell.kappa,
            xi: d.xi.clone(),
            noise_sd: d.noise_sd,
            n,
            seed,
        }
    }

    pub fn surrogate_config(&self, cell: &Cell) -> SurrogateConfig {
        SurrogateConfig {
            prompt_family: cell.prompt_family,
            leak_probability: cell.leak,
            paraphrase_seed: self.surrogate.paraphrase_seed,
        }
    }

    pub fn nuisance_config(&self) -> NuisanceConfig {
        let n = &self.nuisance;
        NuisanceConfig {
            outcome_model: outcome_kind(&n.outcome_model).unwrap_or(OutcomeModelKind::Ridge),
            ridge_lambda: n.ridge_lambda,
            k_folds: n.k_folds,
            logistic: LogisticConfig { max_iter: n.logistic_max_iter, tol: n.logistic_tol, clip: n.clip },
            mlp: n.mlp.hyper(),
            fold_seed: n.fold_seed,
        }
    }

    pub fn head_config(&self) -> HeadConfig {
        HeadConfig {
            kind: head_kind(&self.head.kind).unwrap_or(HeadKind::Ridge),
            lambda: self.head.lambda,
            mlp: self.nuisance.mlp.hyper(),
        }
    }

    pub fn tca_config(&self, cell: &Cell) -> TcaConfig {
        TcaConfig {
            nuisance: self.nuisance_config(),
            surrogate: self.surrogate_config(cell),
            d_emb: self.encoder.d_emb,
            head: self.head_config(),
            ..Default::default()
        }
    }
}

fn outcome_kind(s: &str) -> Result<OutcomeModelKind> {
    match s.to_ascii_lowercase().as_str() {
        "ridge" => Ok(OutcomeModelKind::Ridge),
        "mlp" => Ok(OutcomeModelKind::Mlp),
        _ => Err(Error::Config(format!("unknown nuisance.outcome_model {s:?}; use ridge or mlp"))),
    }
}

fn head_kind(s: &str) -> Result<HeadKind> {
    match s.to_ascii_lowercase().as_str() {
        "ridge" => Ok(HeadKind::Ridge),
        "mlp" => Ok(HeadKind::Mlp),
        _ => Err(Error::Config(format!("unknown head.kind {s:?}; use ridge or mlp"))),
    }
}
