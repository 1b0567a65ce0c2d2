//! JSONL datasets and predictions, JSON model files.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use tca_core::data::{CovariateVector, Dataset, GroupTags, TestRecord, TrainRecord, TreatmentArm};
use tca_core::learners::{TbeModel, TcaModel};

use crate::config::Method;
use crate::error::{Error, Result};

pub const MODEL_FORMAT_VERSION: u32 = 1;

/// One dataset line. Key order here is the order on disk.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RecordLine {
    pub x: Option<Vec<f64>>,
    pub a: u8,
    pub y: f64,
    pub t: Option<String>,
    pub tau_true: Option<f64>,
    pub groups: Option<GroupTags>,
}

impl RecordLine {
    pub fn from_train(r: &TrainRecord) -> Self {
        RecordLine {
            x: Some(r.x.0.clone()),
            a: r.a.bit(),
            y: r.y,
            t: r.text.clone(),
            tau_true: r.tau_true,
            groups: r.groups.clone(),
        }
    }

    pub fn from_test(r: &TestRecord) -> Self {
        RecordLine {
            x: None,
            a: r.a.bit(),
            y: r.y,
            t: Some(r.text.clone()),
            tau_true: r.tau_true,
            groups: r.groups.clone(),
        }
    }

    fn arm(&self) -> std::result::Result<TreatmentArm, String> {
        TreatmentArm::from_bit(self.a).ok_or_else(|| format!("\"a\" must be 0 or 1, got {}", self.a))
    }

    fn into_train(self) -> std::result::Result<TrainRecord, String> {
        let a = self.arm()?;
        let x = self.x.ok_or("training records need \"x\"")?;
        Ok(TrainRecord { x: CovariateVector(x), a, y: self.y, text: self.t, tau_true: self.tau_true, groups: self.groups })
    }

    fn into_test(self) -> std::result::Result<TestRecord, String> {
        let a = self.arm()?;
        let text = self.t.ok_or("test records need \"t\"")?;
        Ok(TestRecord { text, a, y: self.y, tau_true: self.tau_true, groups: self.groups })
    }

    fn check_finite(&self) -> Result<()> {
        let x_ok = self.x.as_ref().is_none_or(|x| x.iter().all(|v| v.is_finite()));
        if !x_ok || !self.y.is_finite() || !self.tau_true.is_none_or(f64::is_finite) {
            return Err(Error::Format("JSONL records must hold finite numbers".into()));
        }
        Ok(())
    }
}

fn write_lines<W: Write, T: Serialize>(mut w: W, items: impl Iterator<Item = T>) -> Result<()> {
    for item in items {
        let line = serde_json::to_string(&item).map_err(|e| Error::Format(e.to_string()))?;
        writeln!(w, "{line}").map_err(|e| Error::io("<output>", e))?;
    }
    w.flush().map_err(|e| Error::io("<output>", e))
}

fn parse_lines<R: BufRead, T, F>(r: R, source: &str, mut convert: F) -> Result<Vec<T>>
where
    F: FnMut(RecordLine) -> std::result::Result<T, String>,
{
    read_json_lines(r, source)?
        .into_iter()
        .map(|(line, rec)| convert(rec).map_err(|msg| Error::Parse { path: source.into(), line, msg }))
        .collect()
}

/// Parses every non-blank line as JSON, keeping 1-based line numbers.
fn read_json_lines<R: BufRead, T: for<'de> Deserialize<'de>>(r: R, source: &str) -> Result<Vec<(usize, T)>> {
    let mut out = Vec::new();
    for (i, line) in r.lines().enumerate() {
        let line = line.map_err(|e| Error::io(source, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let v = serde_json::from_str(&line).map_err(|e| Error::Parse {
            path: source.into(),
            line: i + 1,
            msg: e.to_string(),
        })?;
        out.push((i + 1, v));
    }
    Ok(out)
}

pub fn write_train_jsonl<W: Write>(w: W, ds: &Dataset<TrainRecord>) -> Result<()> {
    let lines: Vec<RecordLine> = ds.records.iter().map(RecordLine::from_train).collect();
    lines.iter().try_for_each(RecordLine::check_finite)?;
    write_lines(w, lines.iter())
}

pub fn write_test_jsonl<W: Write>(w: W, ds: &Dataset<TestRecord>) -> Result<()> {
    let lines: Vec<RecordLine> = ds.records.iter().map(RecordLine::from_test).collect();
    lines.iter().try_for_each(RecordLine::check_finite)?;
    write_lines(w, lines.iter())
}

/// Reads a training dataset; `d_x` is taken from the first record.
pub fn read_train_jsonl<R: BufRead>(r: R, source: &str) -> Result<Dataset<TrainRecord>> {
    let records = parse_lines(r, source, RecordLine::into_train)?;
    let d_x = records.first().map_or(0, |r| r.x.dim());
    Ok(Dataset::new(records, d_x))
}

/// Reads inference-time records. Covariates, if present, are ignored.
pub fn read_test_jsonl<R: BufRead>(r: R, source: &str) -> Result<Dataset<TestRecord>> {
    let records = parse_lines(r, source, RecordLine::into_test)?;
    Ok(Dataset::new(records, 0))
}

fn open(path: &Path) -> Result<BufReader<File>> {
    File::open(path).map(BufReader::new).map_err(|e| Error::io(path, e))
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    File::create(path).map(BufWriter::new).map_err(|e| Error::io(path, e))
}

pub fn save_train(path: &Path, ds: &Dataset<TrainRecord>) -> Result<()> {
    write_train_jsonl(create(path)?, ds)
}

pub fn save_test(path: &Path, ds: &Dataset<TestRecord>) -> Result<()> {
    write_test_jsonl(create(path)?, ds)
}

pub fn load_train(path: &Path) -> Result<Dataset<TrainRecord>> {
    read_train_jsonl(open(path)?, &path.display().to_string())
}

pub fn load_test(path: &Path) -> Result<Dataset<TestRecord>> {
    read_test_jsonl(open(path)?, &path.display().to_string())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PredictionLine {
    pub index: usize,
    pub tau_hat: f64,
    pub empty_text: bool,
}

pub fn save_predictions(path: &Path, preds: &[PredictionLine]) -> Result<()> {
    write_lines(create(path)?, preds.iter())
}

pub fn load_predictions(path: &Path) -> Result<Vec<PredictionLine>> {
    Ok(read_json_lines(open(path)?, &path.display().to_string())?.into_iter().map(|(_, p)| p).collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "method", content = "model")]
pub enum FittedModel {
    #[serde(rename = "TCA")]
    Tca(TcaModel),
    #[serde(rename = "TBE")]
    Tbe(TbeModel),
}

impl FittedModel {
    pub fn method(&self) -> Method {
        match self {
            FittedModel::Tca(_) => Method::Tca,
            FittedModel::Tbe(m) => match m.variant {
                tca_core::learners::TbeVariant::S => Method::TbeS,
                tca_core::learners::TbeVariant::T => Method::TbeT,
            },
        }
    }

    pub fn d_emb(&self) -> usize {
        match self {
            FittedModel::Tca(m) => m.d_emb,
            FittedModel::Tbe(m) => m.d_emb,
        }
    }

    pub fn predict(&self, text: &str) -> tca_core::learners::TextPrediction {
        match self {
            FittedModel::Tca(m) => tca_core::learners::tca_predict(m, text),
            FittedModel::Tbe(m) => tca_core::learners::tbe_predict(m, text),
        }
    }
}

/// Hashed unigram+bigram encoder settings stored next to the weights.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EncoderInfo {
    pub kind: String,
    pub d_emb: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelFile {
    pub version: u32,
    pub encoder: EncoderInfo,
    #[serde(flatten)]
    pub fitted: FittedModel,
}

impl ModelFile {
    pub fn new(fitted: FittedModel) -> Self {
        ModelFile {
            version: MODEL_FORMAT_VERSION,
            encoder: EncoderInfo { kind: "fnv1a-unigram-bigram-mean".into(), d_emb: fitted.d_emb() },
            fitted,
        }
    }

    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string(self).map_err(|e| Error::Format(e.to_string()))
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let v: serde_json::Value = serde_json::from_str(text).map_err(|e| Error::Format(format!("model file: {e}")))?;
        match v.get("version").and_then(|v| v.as_u64()) {
            Some(ver) if ver == MODEL_FORMAT_VERSION as u64 => {}
            Some(ver) => return Err(Error::Format(format!("model file version {ver} is not supported"))),
            None => return Err(Error::Format("model file has no \"version\" field".into())),
        }
        let m: ModelFile = serde_json::from_value(v).map_err(|e| Error::Format(format!("model file: {e}")))?;
        if m.encoder.d_emb != m.fitted.d_emb() {
            return Err(Error::Format("encoder d_emb disagrees with the model".into()));
        }
        Ok(m)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut w = create(path)?;
        w.write_all(self.to_json()?.as_bytes()).and_then(|_| w.flush()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?)
    }
}
