//! Text surrogates `g: X -> T`: covariates rendered into clinical-style text.
//!
//! Every coordinate of `x` has a clinical role (coordinate 0 is sex, 1 is age,
//! then vitals and labs). A coordinate is verbalized with probability
//! `leak_probability`; the rest are silently dropped. Three prompt families
//! differ in what a verbalized coordinate reveals:
//!
//! * `Factual` states a numeric value, quantized to a quarter of a standard
//!   deviation, so a fully leaked factual text is practically lossless.
//! * `Narrative` is a clinician's account with one qualitative phrase per role.
//! * `SymptomFocused` is a first-person description with no numbers at all.
//!
//! Qualitative phrases come in three bins split at z = -0.5 and z = +0.5, each
//! with two interchangeable wordings. The randomness of the generator is the
//! mask draw plus the wording choice; neither ever sees treatment or outcome.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt::Write;

use crate::data::{Dataset, TrainRecord};
use crate::math;
use crate::rng::{Purpose, Split, StreamRng};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub enum PromptFamily {
    Factual,
    Narrative,
    SymptomFocused,
}

impl PromptFamily {
    pub const ALL: [PromptFamily; 3] = [PromptFamily::Factual, PromptFamily::Narrative, PromptFamily::SymptomFocused];

    pub fn name(self) -> &'static str {
        match self {
            PromptFamily::Factual => "Factual",
            PromptFamily::Narrative => "Narrative",
            PromptFamily::SymptomFocused => "SymptomFocused",
        }
    }

    pub fn from_name(s: &str) -> Option<Self> {
        PromptFamily::ALL.into_iter().find(|f| f.name().eq_ignore_ascii_case(s))
    }
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct SurrogateConfig {
    pub prompt_family: PromptFamily,
    /// Per-coordinate probability of being verbalized, in `(0, 1]`.
    pub leak_probability: f64,
    pub paraphrase_seed: u64,
}

impl Default for SurrogateConfig {
    fn default() -> Self {
        SurrogateConfig { prompt_family: PromptFamily::Narrative, leak_probability: 0.6, paraphrase_seed: 0 }
    }
}

impl SurrogateConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.leak_probability > 0.0 && self.leak_probability <= 1.0) {
            return Err(Error::InvalidInput(format!(
                "leak_probability must lie in (0, 1], got {}",
                self.leak_probability
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TextSurrogate {
    pub text: String,
    /// Which coordinates influenced the text.
    pub leaked_mask: Vec<bool>,
    pub prompt_family: PromptFamily,
}

/// One clinical role in the template bank.
#[derive(Debug)]
pub struct Role {
    pub name: &'static str,
    pub label: &'static str,
    pub unit: &'static str,
    pub center: f64,
    /// Display units per quarter standard deviation.
    pub step: f64,
    pub narrative_lead: &'static str,
    /// `[bin][wording]`; binary roles only use bins 0 and 2.
    pub narrative: [[&'static str; 2]; 3],
    pub symptom: [[&'static str; 2]; 3],
    pub binary: bool,
}

const QUARTERS: f64 = 4.0;
const MAX_QUARTER: f64 = 12.0;
pub const BIN_THRESHOLD: f64 = 0.5;

impl Role {
    /// Bin index 0 (low), 1 (middle) or 2 (high).
    pub fn bin(&self, z: f64) -> usize {
        if self.binary {
            return if z >= 0.0 { 2 } else { 0 };
        }
        if z < -BIN_THRESHOLD {
            0
        } else if z > BIN_THRESHOLD {
            2
        } else {
            1
        }
    }

    /// Clinical-scale value for standardized `z`, quantized and clamped to +/-3 sd.
    pub fn clinical_value(&self, z: f64) -> f64 {
        let q = math::round(z * QUARTERS).clamp(-MAX_QUARTER, MAX_QUARTER);
        self.center + self.step * q
    }

    fn factual_sentence(&self, z: f64) -> String {
        if self.binary {
            return String::from(if z >= 0.0 { "Sex male." } else { "Sex female." });
        }
        format!("{} {} {}.", self.label, self.clinical_value(z) as i64, self.unit)
    }

    fn prompt_value(&self, z: f64) -> String {
        if self.binary {
            return String::from(if z >= 0.0 { "M" } else { "F" });
        }
        format!("{:.1}", self.clinical_value(z))
    }
}

macro_rules! role {
    ($name:expr, $label:expr, $unit:expr, $center:expr, $step:expr, $lead:expr,
     [$n0:expr, $n0b:expr], [$n1:expr, $n1b:expr], [$n2:expr, $n2b:expr],
     [$s0:expr, $s0b:expr], [$s1:expr, $s1b:expr], [$s2:expr, $s2b:expr], $binary:expr) => {
        Role {
            name: $name,
            label: $label,
            unit: $unit,
            center: $center,
            step: $step,
            narrative_lead: $lead,
            narrative: [[$n0, $n0b], [$n1, $n1b], [$n2, $n2b]],
            symptom: [[$s0, $s0b], [$s1, $s1b], [$s2, $s2b]],
            binary: $binary,
        }
    };
}

/// The frozen template bank. Coordinate `j` of `x` uses `ROLES[j]`.
pub static ROLES: [Role; 15] = [
    role!("gender", "Sex", "", 0.0, 0.0, "Regarding demographics,",
        ["the patient is a woman", "she is a female patient"], ["", ""], ["the patient is a man", "he is a male patient"],
        ["I am a woman", "speaking as a woman"], ["", ""], ["I am a man", "speaking as a man"], true),
    role!("age", "Age", "years", 60.0, 4.0, "In terms of age,",
        ["the patient is a younger adult", "this is a relatively young patient"],
        ["the patient is middle aged", "this is a middle aged adult"],
        ["the patient is elderly", "this is an older adult"],
        ["I am fairly young", "I am still young"],
        ["I am middle aged", "I am in my middle years"],
        ["I am getting old", "I am an older person"], false),
    role!("heart rate", "Pulse", "beats per minute", 85.0, 4.0, "On cardiovascular examination,",
        ["the heart rate is noticeably slow", "the pulse is sluggish and slow"],
        ["the heart rate is within the normal range", "the pulse is steady and regular"],
        ["the heart rate is clearly elevated", "the pulse is fast and bounding"],
        ["my heartbeat feels slow and weak", "my pulse seems sluggish"],
        ["my heartbeat feels normal", "my heart feels steady"],
        ["my heart is racing", "my heart keeps pounding"], false),
    role!("glucose", "Glucose", "mg/dL", 140.0, 10.0, "On metabolic review,",
        ["blood sugar is low", "there is evidence of hypoglycemia"],
        ["blood sugar is well controlled", "glucose is in the normal range"],
        ["blood sugar is markedly high", "there is significant hyperglycemia"],
        ["I feel shaky and sweaty", "I get trembly when I have not eaten"],
        ["my appetite and thirst are normal", "I do not feel unusually thirsty"],
        ["I am constantly thirsty", "I keep needing to drink water"], false),
    role!("respiratory rate", "Respirations", "breaths per minute", 18.0, 1.0, "On respiratory examination,",
        ["breathing is slow and shallow", "the respiratory rate is depressed"],
        ["breathing is unlabored", "the respiratory rate is normal"],
        ["breathing is rapid", "the patient is tachypneic"],
        ["my breathing feels very slow", "I barely notice myself breathing"],
        ["I can breathe comfortably", "my breathing feels fine"],
        ["I get short of breath", "I keep gasping for air"], false),
    role!("mean blood pressure", "Arterial", "mmHg", 85.0, 4.0, "Hemodynamically,",
        ["blood pressure is low", "the patient appears hypotensive"],
        ["blood pressure is stable", "blood pressure is in the normal range"],
        ["blood pressure is high", "the patient is hypertensive"],
        ["I feel lightheaded when I stand up", "I get dizzy when standing"],
        ["I have no dizziness", "my head feels clear"],
        ["I have a pounding headache", "my head throbs"], false),
    role!("creatinine", "Creatinine", "umol/L", 150.0, 10.0, "On renal assessment,",
        ["kidney markers are low", "creatinine is below the usual range"],
        ["kidney function appears preserved", "creatinine is normal"],
        ["kidney function looks impaired", "creatinine is raised"],
        ["I have lost a lot of muscle", "my muscles feel thin and weak"],
        ["I pass water normally", "my urine seems normal"],
        ["my legs are swollen", "I barely pass any urine"], false),
    role!("hemoglobin", "Hemoglobin", "g/L", 120.0, 5.0, "On hematologic review,",
        ["the patient is anemic", "hemoglobin is low"],
        ["hemoglobin is adequate", "there is no anemia"],
        ["hemoglobin is elevated", "red cell mass seems increased"],
        ["I feel tired all the time", "I am pale and exhausted"],
        ["my energy is okay", "I have my usual energy"],
        ["my face looks flushed", "my skin looks ruddy"], false),
    role!("sodium", "Sodium", "mEq/L", 140.0, 1.0, "Regarding electrolytes,",
        ["sodium is low", "there is hyponatremia"],
        ["electrolytes are balanced", "sodium is normal"],
        ["sodium is high", "there is hypernatremia"],
        ["I feel confused at times", "I get muddled"],
        ["my thinking is clear", "I feel mentally sharp"],
        ["my mouth is very dry", "I feel parched"], false),
    role!("blood urea nitrogen", "Urea", "mg/dL", 30.0, 2.0, "On further chemistry,",
        ["urea is low", "blood urea nitrogen is reduced"],
        ["urea is within limits", "blood urea nitrogen is normal"],
        ["urea is elevated", "blood urea nitrogen is raised"],
        ["I have not been eating much protein", "my diet has been light"],
        ["my stomach feels settled", "I have no nausea"],
        ["I feel nauseous", "I keep feeling sick to my stomach"], false),
    role!("platelets", "Platelets", "x10^9/L", 250.0, 15.0, "Regarding coagulation,",
        ["platelets are low", "there is thrombocytopenia"],
        ["platelet count is normal", "clotting appears normal"],
        ["platelets are elevated", "there is thrombocytosis"],
        ["I bruise very easily", "my gums bleed"],
        ["I do not bruise easily", "cuts stop bleeding normally"],
        ["my fingers tingle", "my hands feel numb at times"], false),
    role!("hematocrit", "Hematocrit", "percent", 38.0, 1.0, "On the blood count,",
        ["hematocrit is reduced", "the blood appears dilute"],
        ["hematocrit is normal", "blood concentration is typical"],
        ["hematocrit is high", "the blood appears concentrated"],
        ["I get breathless climbing stairs", "stairs wear me out"],
        ["I can climb stairs fine", "walking uphill is fine"],
        ["my vision is blurry", "things look hazy to me"], false),
    role!("bicarbonate", "Bicarbonate", "mEq/L", 24.0, 1.0, "On acid base assessment,",
        ["bicarbonate is low suggesting acidosis", "there is a metabolic acidosis"],
        ["acid base balance is normal", "bicarbonate is normal"],
        ["bicarbonate is high", "there is a metabolic alkalosis"],
        ["I am breathing deeply all the time", "I sigh and breathe deeply"],
        ["my muscles feel relaxed", "no cramps to speak of"],
        ["my muscles twitch", "I get muscle cramps"], false),
    role!("red blood cell count", "Erythrocytes", "per 10 nL", 450.0, 10.0, "On red cell indices,",
        ["red cell count is low", "erythrocytes are reduced"],
        ["red cell count is normal", "erythrocytes are normal"],
        ["red cell count is high", "erythrocytes are increased"],
        ["my hands and feet are always cold", "I feel cold all the time"],
        ["my temperature feels normal", "I feel warm enough"],
        ["I get itchy after a shower", "my skin itches after bathing"], false),
    role!("anion gap", "Gap", "mEq/L", 14.0, 1.0, "Finally,",
        ["the anion gap is narrow", "anion gap is below normal"],
        ["the anion gap is normal", "anion gap is unremarkable"],
        ["the anion gap is widened", "anion gap is elevated"],
        ["I feel a bit off", "something feels slightly off"],
        ["my stomach is fine", "nothing unusual in my belly"],
        ["my belly aches", "I have stomach pain"], false),
];

pub const MAX_ROLES: usize = 15;

const FACTUAL_OPENING: &str = "Patient information summary.";
const NARRATIVE_OPENING: &str = "This clinical narrative describes the presentation of a patient who was \
admitted to the hospital for further evaluation and management. The history was obtained from the patient \
and the accompanying records, and the findings below summarize the initial assessment. The patient was \
seen by the admitting physician on arrival, vital signs were recorded at the bedside, and a standard panel \
of laboratory tests was drawn before any treatment decision was made.";
const NARRATIVE_CLOSING: &str = "Overall, the admitting team documented these findings and arranged close \
monitoring, with a plan to reassess the patient after the first day of treatment. Family members were \
informed of the plan, and the nursing staff were asked to report any change in condition promptly.";
const SYMPTOM_OPENING: &str = "I have been feeling unwell lately and wanted to describe how I feel.";
const SYMPTOM_CLOSING: &str = "I just want to feel better and get back to my normal life.";

/// FNV-1a 64-bit over every string and number in the bank.
pub fn bank_checksum() -> u64 {
    let mut h = crate::encoder::FNV_OFFSET;
    let mut feed = |s: &str| {
        for b in s.bytes().chain(core::iter::once(0x1f)) {
            h ^= b as u64;
            h = h.wrapping_mul(crate::encoder::FNV_PRIME);
        }
    };
    for text in [FACTUAL_OPENING, NARRATIVE_OPENING, NARRATIVE_CLOSING, SYMPTOM_OPENING, SYMPTOM_CLOSING] {
        feed(text);
    }
    for role in &ROLES {
        feed(role.name);
        feed(role.label);
        feed(role.unit);
        feed(&format!("{}/{}/{}", role.center, role.step, role.binary));
        feed(role.narrative_lead);
        for bin in role.narrative.iter().chain(role.symptom.iter()) {
            for w in bin {
                feed(w);
            }
        }
    }
    h
}

fn check_dim(d: usize) -> Result<()> {
    if d == 0 || d > MAX_ROLES {
        return Err(Error::InvalidInput(format!("covariate dimension {d} must lie in 1..={MAX_ROLES}")));
    }
    Ok(())
}

/// Draws which coordinates are verbalized. At least one always is: if every
/// draw misses, the coordinate with the smallest draw is kept.
fn draw_mask(d: usize, leak: f64, rng: &mut StreamRng) -> Vec<bool> {
    let draws: Vec<f64> = (0..d).map(|_| rng.uniform()).collect();
    let mut mask: Vec<bool> = draws.iter().map(|u| *u < leak).collect();
    if !mask.iter().any(|m| *m) {
        let (best, _) = draws
            .iter()
            .enumerate()
            .fold((0, f64::INFINITY), |acc, (i, u)| if *u < acc.1 { (i, *u) } else { acc });
        mask[best] = true;
    }
    mask
}

fn capitalize(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    let mut chars = s.chars();
    if let Some(c) = chars.next() {
        out.extend(c.to_uppercase());
    }
    out.push_str(chars.as_str());
    out
}

/// Renders the surrogate for `x`. The mask comes from `mask_rng` and the
/// wording choices from `synonym_rng`, so the two noise sources can be varied
/// independently.
pub fn render(
    x: &[f64],
    cfg: &SurrogateConfig,
    mask_rng: &mut StreamRng,
    synonym_rng: &mut StreamRng,
) -> Result<TextSurrogate> {
    cfg.validate()?;
    check_dim(x.len())?;
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("x"));
    }
    let leaked_mask = draw_mask(x.len(), cfg.leak_probability, mask_rng);
    let mut text = String::new();
    let opening = match cfg.prompt_family {
        PromptFamily::Factual => FACTUAL_OPENING,
        PromptFamily::Narrative => NARRATIVE_OPENING,
        PromptFamily::SymptomFocused => SYMPTOM_OPENING,
    };
    text.push_str(opening);
    for (j, (&z, _)) in x.iter().zip(&leaked_mask).enumerate().filter(|(_, (_, m))| **m) {
        let role = &ROLES[j];
        let bin = role.bin(z);
        let wording = synonym_rng.below(2);
        text.push(' ');
        match cfg.prompt_family {
            PromptFamily::Factual => text.push_str(&role.factual_sentence(z)),
            PromptFamily::Narrative => {
                let _ = write!(text, "{} {}.", role.narrative_lead, role.narrative[bin][wording]);
            }
            PromptFamily::SymptomFocused => {
                let _ = write!(text, "{}.", capitalize(role.symptom[bin][wording]));
            }
        }
    }
    match cfg.prompt_family {
        PromptFamily::Factual => {}
        PromptFamily::Narrative => {
            text.push(' ');
            text.push_str(NARRATIVE_CLOSING);
        }
        PromptFamily::SymptomFocused => {
            text.push(' ');
            text.push_str(SYMPTOM_CLOSING);
        }
    }
    Ok(TextSurrogate { text, leaked_mask, prompt_family: cfg.prompt_family })
}

/// Renders record `index` of a dataset drawn with `seed`. Streams are
/// positioned per record, so the result does not depend on rendering order.
pub fn render_record(
    x: &[f64],
    cfg: &SurrogateConfig,
    seed: u64,
    split: Split,
    index: usize,
) -> Result<TextSurrogate> {
    let mut mask_rng = StreamRng::for_record(seed, Purpose::SurrogateMask, split, index as u64);
    let synonym_seed = seed ^ cfg.paraphrase_seed.rotate_left(32);
    let mut synonym_rng = StreamRng::for_record(synonym_seed, Purpose::Synonym, split, index as u64);
    render(x, cfg, &mut mask_rng, &mut synonym_rng)
}

/// The instruction sent to a remote text generator for covariates `x`.
pub fn prompt_text(x: &[f64], family: PromptFamily) -> Result<String> {
    check_dim(x.len())?;
    let names: Vec<&str> = ROLES[..x.len()].iter().map(|r| r.name).collect();
    let names = match names.len() {
        1 => String::from(names[0]),
        k => format!("{}, and {}", names[..k - 1].join(", "), names[k - 1]),
    };
    let values: Vec<String> = x.iter().zip(&ROLES).map(|(z, r)| r.prompt_value(*z)).collect();
    let values = values.join(",");
    Ok(match family {
        PromptFamily::Factual => format!(
            "Transfer this patient information into a paragraph of text. We have the patient clinical \
             information including {names}. The values are {values}."
        ),
        PromptFamily::Narrative => format!(
            "Write a detailed clinical narrative for a patient with these features: {names}. The values are \
             {values}."
        ),
        PromptFamily::SymptomFocused => format!(
            "Here is a patient current information (if this patient can use diagnostic equipment or has \
             access to healthcare facilities): The variables include {names}. The values are {values}. How \
             would this patient describe his/her symptoms via text with just partial diagnostic measurements?"
        ),
    })
}

/// Fills in the text of every record that has none, using the dataset seed.
pub fn attach_surrogates(ds: &mut Dataset<TrainRecord>, cfg: &SurrogateConfig) -> Result<()> {
    let seed = ds.meta.seed.unwrap_or(0);
    let split = ds.meta.split.unwrap_or(Split::Train);
    for (i, r) in ds.records.iter_mut().enumerate() {
        if r.text.is_none() {
            r.text = Some(render_record(r.x.as_slice(), cfg, seed, split, i)?.text);
        }
    }
    Ok(())
}
