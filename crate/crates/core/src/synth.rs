//! Synthetic survey cohorts with an optional planted need subgroup.
//!
//! A generator spec is TOML:
//!
//! ```toml
//! schema = "schema.toml"     # resolved relative to the spec file
//! n = 1000
//! need_fraction = 0.15
//! noise = 0.0                # probability a record gets corrupted
//! seed = 20240601
//!
//! [[question]]
//! id = "rooms"
//! base = [0.05, 0.10, 0.20, 0.30, 0.35]   # weights over codes 1..=5
//! need = [0.70, 0.20, 0.10, 0.00, 0.00]   # optional, defaults to base
//! ```
//!
//! Questions without an entry are uniform over their codes.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::baseline::BaselineLabel;
use crate::schema::{QuestionSpec, RespondentRecord, SchemaError, SurveySchema};

pub const PLANTED_REASON: &str = "planted";
const MAX_ATTEMPTS: usize = 10_000;

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("reading spec {path}: {source}")]
    Read { path: PathBuf, source: std::io::Error },
    #[error("spec: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("schema: {0}")]
    Schema(#[from] SchemaError),
    #[error("need_fraction must be in [0, 1], got {0}")]
    NeedFraction(f64),
    #[error("noise must be in [0, 1], got {0}")]
    Noise(f64),
    #[error("question {0:?} is not in the schema")]
    UnknownQuestion(String),
    #[error("question {id}: {which} weights have {got} entries, expected {want}")]
    WeightCount { id: String, which: &'static str, got: usize, want: usize },
    #[error("question {id}: {which} weights must be non-negative and sum to 1 (sum {sum})")]
    WeightSum { id: String, which: &'static str, sum: f64 },
    #[error("respondent {0}: no record satisfying the consistency rules after {MAX_ATTEMPTS} draws")]
    Infeasible(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QuestionWeights {
    pub id: String,
    pub base: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub need: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeneratorSpec {
    pub schema: PathBuf,
    pub n: usize,
    #[serde(default)]
    pub need_fraction: f64,
    #[serde(default)]
    pub noise: f64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default, rename = "question")]
    pub questions: Vec<QuestionWeights>,
}

impl GeneratorSpec {
    pub fn from_toml_str(src: &str) -> Result<Self, SynthError> {
        Ok(toml::from_str(src)?)
    }

    /// Loads a spec, making its schema path absolute relative to the file.
    pub fn load(path: impl AsRef<Path>) -> Result<Self, SynthError> {
        let path = path.as_ref();
        let src = std::fs::read_to_string(path).map_err(|source| SynthError::Read { path: path.into(), source })?;
        let mut spec = Self::from_toml_str(&src)?;
        if spec.schema.is_relative() {
            spec.schema = path.parent().unwrap_or(Path::new(".")).join(&spec.schema);
        }
        Ok(spec)
    }

    pub fn load_schema(&self) -> Result<SurveySchema, SynthError> {
        Ok(SurveySchema::load(&self.schema)?)
    }
}

fn check_weights(id: &str, which: &'static str, w: &[f64], want: usize) -> Result<(), SynthError> {
    if w.len() != want {
        return Err(SynthError::WeightCount { id: id.into(), which, got: w.len(), want });
    }
    let sum: f64 = w.iter().sum();
    if w.iter().any(|x| !x.is_finite() || *x < 0.0) || (sum - 1.0).abs() > 1e-9 {
        return Err(SynthError::WeightSum { id: id.into(), which, sum });
    }
    Ok(())
}

struct Sampler<'a> {
    question: &'a QuestionSpec,
    base: WeightedIndex<f64>,
    need: WeightedIndex<f64>,
}

impl Sampler<'_> {
    fn draw(&self, planted: bool, rng: &mut ChaCha8Rng) -> i64 {
        let d = if planted { &self.need } else { &self.base };
        self.question.kind.min_code() + d.sample(rng) as i64
    }
}

fn samplers<'a>(spec: &GeneratorSpec, schema: &'a SurveySchema) -> Result<Vec<Sampler<'a>>, SynthError> {
    if !(0.0..=1.0).contains(&spec.need_fraction) {
        return Err(SynthError::NeedFraction(spec.need_fraction));
    }
    if !(0.0..=1.0).contains(&spec.noise) {
        return Err(SynthError::Noise(spec.noise));
    }
    let by_id: BTreeMap<&str, &QuestionWeights> = spec.questions.iter().map(|q| (q.id.as_str(), q)).collect();
    for q in &spec.questions {
        if schema.question(&q.id).is_none() {
            return Err(SynthError::UnknownQuestion(q.id.clone()));
        }
    }
    schema
        .questions
        .iter()
        .map(|q| {
            let m = q.kind.n_codes();
            let (base, need) = match by_id.get(q.id.as_str()) {
                Some(w) => {
                    check_weights(&q.id, "base", &w.base, m)?;
                    let need = w.need.clone().unwrap_or_else(|| w.base.clone());
                    check_weights(&q.id, "need", &need, m)?;
                    (w.base.clone(), need)
                }
                None => (vec![1.0 / m as f64; m], vec![1.0 / m as f64; m]),
            };
            let mk = |w: &[f64], which| {
                WeightedIndex::new(w.iter().copied())
                    .map_err(|_| SynthError::WeightSum { id: q.id.clone(), which, sum: w.iter().sum() })
            };
            Ok(Sampler { question: q, base: mk(&base, "base")?, need: mk(&need, "need")? })
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Corruption {
    OutOfRange,
    Inconsistent,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthOutput {
    pub records: Vec<RespondentRecord>,
    /// Planted membership, uncorrupted. Planted respondents carry the single
    /// reason `planted`.
    pub truth: Vec<BaselineLabel>,
    pub corrupted: Vec<(String, Corruption)>,
}

impl SynthOutput {
    pub fn planted_count(&self) -> usize {
        self.truth.iter().filter(|l| l.is_flagged()).count()
    }
}

fn respondent_id(i: usize, n: usize) -> String {
    let width = n.to_string().len();
    format!("s{:0width$}", i + 1)
}

fn rules_hold(schema: &SurveySchema, answers: &BTreeMap<String, i64>) -> bool {
    schema.rules.iter().all(|r| r.holds(answers) != Some(false))
}

/// Breaks one consistency rule by redrawing its questions in range; falls
/// back to out-of-range when no rule can be broken.
fn corrupt(schema: &SurveySchema, rec: &mut RespondentRecord, rng: &mut ChaCha8Rng) -> Corruption {
    if rng.random_bool(0.5) && !schema.rules.is_empty() {
        let rule = &schema.rules[rng.random_range(0..schema.rules.len())];
        let involved: Vec<&QuestionSpec> = rule.involved().iter().filter_map(|id| schema.question(id)).collect();
        for _ in 0..200 {
            let mut trial = rec.answers.clone();
            for q in &involved {
                trial.insert(q.id.clone(), rng.random_range(q.kind.min_code()..=q.kind.max_code()));
            }
            if rule.holds(&trial) == Some(false) {
                rec.answers = trial;
                return Corruption::Inconsistent;
            }
        }
    }
    let q = &schema.questions[rng.random_range(0..schema.questions.len())];
    rec.answers.insert(q.id.clone(), q.kind.max_code() + 1);
    Corruption::OutOfRange
}

/// Draws each respondent from its own counter-based stream, so output does
/// not depend on scheduling.
pub fn generate(spec: &GeneratorSpec, schema: &SurveySchema) -> Result<SynthOutput, SynthError> {
    let samplers = samplers(spec, schema)?;
    let rows: Vec<(RespondentRecord, bool, Option<Corruption>)> = (0..spec.n)
        .into_par_iter()
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
            rng.set_stream(i as u64);
            let id = respondent_id(i, spec.n);
            let planted = rng.random::<f64>() < spec.need_fraction;
            let mut rec = None;
            for _ in 0..MAX_ATTEMPTS {
                let answers: BTreeMap<String, i64> =
                    samplers.iter().map(|s| (s.question.id.clone(), s.draw(planted, &mut rng))).collect();
                if rules_hold(schema, &answers) {
                    rec = Some(RespondentRecord { respondent_id: id.clone(), gender: None, answers });
                    break;
                }
            }
            let mut rec = rec.ok_or_else(|| SynthError::Infeasible(id.clone()))?;
            rec.gender = Some(rng.random_range(1..=2));
            let corruption = (spec.noise > 0.0 && rng.random::<f64>() < spec.noise).then(|| corrupt(schema, &mut rec, &mut rng));
            Ok((rec, planted, corruption))
        })
        .collect::<Result<_, SynthError>>()?;
    let mut out = SynthOutput { records: Vec::with_capacity(spec.n), truth: Vec::with_capacity(spec.n), corrupted: Vec::new() };
    for (rec, planted, corruption) in rows {
        out.truth.push(BaselineLabel {
            respondent_id: rec.respondent_id.clone(),
            reasons: if planted { vec![PLANTED_REASON.to_string()] } else { Vec::new() },
        });
        if let Some(c) = corruption {
            out.corrupted.push((rec.respondent_id.clone(), c));
        }
        out.records.push(rec);
    }
    Ok(out)
}
