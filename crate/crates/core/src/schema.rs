//! Typed survey vocabulary: questions, consistency rules, respondent records
//! and per-record validation.
//!
//! Schemas are stored as TOML. A minimal file looks like
//!
//! ```toml
//! name = "household survey"
//! baseline_set = ["rooms", "water"]
//!
//! [[questions]]
//! id = "rooms"
//! label = "Number of rooms in the home"
//! kind = "likert"
//! levels = 5
//! poverty_indicator = "quantile-lower-tail"
//! orientation = "lower-is-worse"
//! reason = "single-room"
//! reason_label = "Living in single room"
//!
//! [[questions]]
//! id = "water"
//! label = "Access to water"
//! kind = "binary"
//! poverty_indicator = "binary-lack"
//! orientation = "higher-is-worse"
//! reason = "no-water"
//!
//! [[rules]]
//! id = "sleep_vs_household"
//! predicate = "sleep_company <= household_size"
//! description = "people sharing the bedroom cannot exceed the household"
//! ```
//!
//! Binary questions use codes 1 (yes) and 2 (no). Likert questions use codes
//! `1..=levels` with `levels` of 4 or 5. Optional keys: `need_signal`
//! (whether the question enters need-cluster scoring; defaults to true for
//! questions with a poverty indicator) and `normality` (`"normal"` or
//! `"empirical"`, forcing the tail-threshold branch).

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::rule::{Predicate, RuleParseError};

#[derive(Debug, Error)]
pub enum SchemaError {
    #[error("failed to read schema {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed schema: {0}")]
    Parse(String),
    #[error("duplicate question id {0:?}")]
    DuplicateQuestion(String),
    #[error("duplicate rule id {0:?}")]
    DuplicateRule(String),
    #[error("question {id:?}: {msg}")]
    BadQuestion { id: String, msg: String },
    #[error("baseline set member {0:?} is not a schema question")]
    UnknownBaselineQuestion(String),
    #[error("baseline set member {0:?} has no poverty indicator")]
    BaselineWithoutIndicator(String),
    #[error("question {0:?} has a poverty indicator but is not in the baseline set")]
    IndicatorOutsideBaseline(String),
    #[error("rule {rule:?}: {source}")]
    RulePredicate {
        rule: String,
        #[source]
        source: RuleParseError,
    },
    #[error("rule {rule:?} references unknown question {question:?}")]
    RuleUnknownQuestion { rule: String, question: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum QuestionKind {
    /// Codes 1 = yes, 2 = no.
    Binary,
    /// Codes `1..=levels`.
    Likert { levels: u8 },
}

impl QuestionKind {
    pub fn min_code(self) -> i64 {
        1
    }

    pub fn max_code(self) -> i64 {
        match self {
            QuestionKind::Binary => 2,
            QuestionKind::Likert { levels } => i64::from(levels),
        }
    }

    pub fn admits(self, code: i64) -> bool {
        (self.min_code()..=self.max_code()).contains(&code)
    }

    pub fn n_codes(self) -> usize {
        (self.max_code() - self.min_code() + 1) as usize
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PovertyIndicator {
    QuantileLowerTail,
    BinaryLack,
    #[default]
    None,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Orientation {
    #[default]
    LowerIsWorse,
    HigherIsWorse,
}

/// Which tail-threshold branch to use for a quantile question.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Branch {
    Normal,
    Empirical,
}

impl fmt::Display for Branch {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Branch::Normal => "normal",
            Branch::Empirical => "empirical",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawQuestion", into = "RawQuestion")]
pub struct QuestionSpec {
    pub id: String,
    pub label: String,
    pub kind: QuestionKind,
    pub poverty_indicator: PovertyIndicator,
    pub orientation: Orientation,
    /// Short reason tag recorded on baseline labels; defaults to the id.
    pub reason: Option<String>,
    /// Row label used in contingency tables.
    pub reason_label: Option<String>,
    pub need_signal: Option<bool>,
    pub normality: Option<Branch>,
}

impl QuestionSpec {
    pub fn binary(id: &str) -> Self {
        Self::new(id, QuestionKind::Binary)
    }

    pub fn likert(id: &str, levels: u8) -> Self {
        Self::new(id, QuestionKind::Likert { levels })
    }

    fn new(id: &str, kind: QuestionKind) -> Self {
        QuestionSpec {
            id: id.to_string(),
            label: id.to_string(),
            kind,
            poverty_indicator: PovertyIndicator::None,
            orientation: Orientation::LowerIsWorse,
            reason: None,
            reason_label: None,
            need_signal: None,
            normality: None,
        }
    }

    pub fn with_indicator(mut self, indicator: PovertyIndicator) -> Self {
        self.poverty_indicator = indicator;
        self
    }

    pub fn with_orientation(mut self, orientation: Orientation) -> Self {
        self.orientation = orientation;
        self
    }

    pub fn with_reason(mut self, reason: &str) -> Self {
        self.reason = Some(reason.to_string());
        self
    }

    pub fn reason_tag(&self) -> &str {
        self.reason.as_deref().unwrap_or(&self.id)
    }

    pub fn reason_text(&self) -> &str {
        self.reason_label.as_deref().unwrap_or_else(|| self.reason_tag())
    }

    pub fn is_need_signal(&self) -> bool {
        self.need_signal.unwrap_or(self.poverty_indicator != PovertyIndicator::None)
    }

    /// Maps a code so that lower always means worse. Higher-is-worse codes are
    /// reflected within the valid range.
    pub fn oriented(&self, code: i64) -> i64 {
        match self.orientation {
            Orientation::LowerIsWorse => code,
            Orientation::HigherIsWorse => self.kind.min_code() + self.kind.max_code() - code,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
enum KindTag {
    Binary,
    Likert,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawQuestion {
    id: String,
    #[serde(default)]
    label: Option<String>,
    kind: KindTag,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    levels: Option<u8>,
    #[serde(default)]
    poverty_indicator: PovertyIndicator,
    #[serde(default)]
    orientation: Orientation,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    reason: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    reason_label: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    need_signal: Option<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    normality: Option<Branch>,
}

impl TryFrom<RawQuestion> for QuestionSpec {
    type Error = String;

    fn try_from(raw: RawQuestion) -> Result<Self, String> {
        let kind = match (raw.kind, raw.levels) {
            (KindTag::Binary, None) => QuestionKind::Binary,
            (KindTag::Binary, Some(_)) => {
                return Err(format!("question {:?}: binary questions take no `levels`", raw.id))
            }
            (KindTag::Likert, Some(levels)) => QuestionKind::Likert { levels },
            (KindTag::Likert, None) => {
                return Err(format!("question {:?}: likert questions need `levels`", raw.id))
            }
        };
        Ok(QuestionSpec {
            label: raw.label.unwrap_or_else(|| raw.id.clone()),
            id: raw.id,
            kind,
            poverty_indicator: raw.poverty_indicator,
            orientation: raw.orientation,
            reason: raw.reason,
            reason_label: raw.reason_label,
            need_signal: raw.need_signal,
            normality: raw.normality,
        })
    }
}

impl From<QuestionSpec> for RawQuestion {
    fn from(q: QuestionSpec) -> Self {
        let (kind, levels) = match q.kind {
            QuestionKind::Binary => (KindTag::Binary, None),
            QuestionKind::Likert { levels } => (KindTag::Likert, Some(levels)),
        };
        RawQuestion {
            id: q.id,
            label: Some(q.label),
            kind,
            levels,
            poverty_indicator: q.poverty_indicator,
            orientation: q.orientation,
            reason: q.reason,
            reason_label: q.reason_label,
            need_signal: q.need_signal,
            normality: q.normality,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawRule", into = "RawRule")]
pub struct ConsistencyRule {
    pub id: String,
    pub description: String,
    source: String,
    predicate: Predicate,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawRule {
    id: String,
    predicate: String,
    #[serde(default)]
    description: String,
}

impl TryFrom<RawRule> for ConsistencyRule {
    type Error = String;

    fn try_from(raw: RawRule) -> Result<Self, String> {
        ConsistencyRule::new(&raw.id, &raw.predicate, &raw.description).map_err(|e| e.to_string())
    }
}

impl From<ConsistencyRule> for RawRule {
    fn from(r: ConsistencyRule) -> Self {
        RawRule { id: r.id, predicate: r.source, description: r.description }
    }
}

impl ConsistencyRule {
    pub fn new(id: &str, predicate: &str, description: &str) -> Result<Self, SchemaError> {
        let parsed = Predicate::parse(predicate)
            .map_err(|source| SchemaError::RulePredicate { rule: id.to_string(), source })?;
        Ok(ConsistencyRule {
            id: id.to_string(),
            description: description.to_string(),
            source: predicate.to_string(),
            predicate: parsed,
        })
    }

    pub fn involved(&self) -> Vec<&str> {
        self.predicate.variables()
    }

    pub fn predicate_text(&self) -> &str {
        &self.source
    }

    /// `Some(true)` when the rule holds, `None` when an involved answer is absent.
    pub fn holds(&self, answers: &BTreeMap<String, i64>) -> Option<bool> {
        self.predicate.eval(answers)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SurveySchema {
    #[serde(default)]
    pub name: String,
    pub questions: Vec<QuestionSpec>,
    #[serde(default)]
    pub rules: Vec<ConsistencyRule>,
    pub baseline_set: Vec<String>,
}

impl SurveySchema {
    pub fn new(
        questions: Vec<QuestionSpec>,
        rules: Vec<ConsistencyRule>,
        baseline_set: Vec<String>,
    ) -> Result<Self, SchemaError> {
        let schema = SurveySchema { name: String::new(), questions, rules, baseline_set };
        schema.check()?;
        Ok(schema)
    }

    pub fn from_toml_str(src: &str) -> Result<Self, SchemaError> {
        let schema: SurveySchema =
            toml::from_str(src).map_err(|e| SchemaError::Parse(e.to_string()))?;
        schema.check()?;
        Ok(schema)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, SchemaError> {
        let path = path.as_ref();
        let src = std::fs::read_to_string(path)
            .map_err(|source| SchemaError::Io { path: path.display().to_string(), source })?;
        Self::from_toml_str(&src)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("schema serializes to TOML")
    }

    /// Checks every well-formedness invariant.
    pub fn check(&self) -> Result<(), SchemaError> {
        let mut seen = HashSet::new();
        for q in &self.questions {
            if !seen.insert(q.id.as_str()) {
                return Err(SchemaError::DuplicateQuestion(q.id.clone()));
            }
            if q.id.is_empty() || q.id == "respondent_id" || q.id == "gender" {
                return Err(SchemaError::BadQuestion {
                    id: q.id.clone(),
                    msg: "reserved or empty id".into(),
                });
            }
            if let QuestionKind::Likert { levels } = q.kind {
                if !(4..=5).contains(&levels) {
                    return Err(SchemaError::BadQuestion {
                        id: q.id.clone(),
                        msg: format!("likert questions have 4 or 5 levels, got {levels}"),
                    });
                }
            }
            if q.poverty_indicator == PovertyIndicator::BinaryLack && q.kind != QuestionKind::Binary {
                return Err(SchemaError::BadQuestion {
                    id: q.id.clone(),
                    msg: "binary-lack indicator requires a binary question".into(),
                });
            }
        }
        let baseline: BTreeSet<&str> = self.baseline_set.iter().map(String::as_str).collect();
        for id in &self.baseline_set {
            let q = self.question(id).ok_or_else(|| SchemaError::UnknownBaselineQuestion(id.clone()))?;
            if q.poverty_indicator == PovertyIndicator::None {
                return Err(SchemaError::BaselineWithoutIndicator(id.clone()));
            }
        }
        for q in &self.questions {
            if q.poverty_indicator != PovertyIndicator::None && !baseline.contains(q.id.as_str()) {
                return Err(SchemaError::IndicatorOutsideBaseline(q.id.clone()));
            }
        }
        let mut rule_ids = HashSet::new();
        for r in &self.rules {
            if !rule_ids.insert(r.id.as_str()) {
                return Err(SchemaError::DuplicateRule(r.id.clone()));
            }
            for v in r.involved() {
                if !seen.contains(v) {
                    return Err(SchemaError::RuleUnknownQuestion {
                        rule: r.id.clone(),
                        question: v.to_string(),
                    });
                }
            }
        }
        Ok(())
    }

    pub fn question(&self, id: &str) -> Option<&QuestionSpec> {
        self.questions.iter().find(|q| q.id == id)
    }

    pub fn question_ids(&self) -> Vec<&str> {
        self.questions.iter().map(|q| q.id.as_str()).collect()
    }

    pub fn baseline_questions(&self) -> impl Iterator<Item = &QuestionSpec> {
        self.baseline_set.iter().filter_map(|id| self.question(id))
    }

    /// Copy of the schema without consistency rules.
    pub fn without_rules(&self) -> Self {
        SurveySchema { rules: Vec::new(), ..self.clone() }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RespondentRecord {
    pub respondent_id: String,
    pub gender: Option<i64>,
    /// Absent keys are unanswered or unparseable cells.
    pub answers: BTreeMap<String, i64>,
}

impl RespondentRecord {
    pub fn new(respondent_id: impl Into<String>) -> Self {
        RespondentRecord { respondent_id: respondent_id.into(), gender: None, answers: BTreeMap::new() }
    }

    pub fn with(mut self, question: &str, code: i64) -> Self {
        self.answers.insert(question.to_string(), code);
        self
    }

    pub fn answer(&self, question: &str) -> Option<i64> {
        self.answers.get(question).copied()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum VerdictKind {
    Clean,
    OutOfRange,
    Inconsistent,
    Incomplete,
}

impl fmt::Display for VerdictKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            VerdictKind::Clean => "clean",
            VerdictKind::OutOfRange => "out_of_range",
            VerdictKind::Inconsistent => "inconsistent",
            VerdictKind::Incomplete => "incomplete",
        })
    }
}

/// Every violation found on one record. All categories are populated; the
/// reported kind follows out_of_range > inconsistent > incomplete.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ValidationVerdict {
    pub out_of_range: Vec<String>,
    pub inconsistent: Vec<String>,
    pub incomplete: Vec<String>,
}

impl ValidationVerdict {
    pub fn is_clean(&self) -> bool {
        self.kind() == VerdictKind::Clean
    }

    pub fn kind(&self) -> VerdictKind {
        if !self.out_of_range.is_empty() {
            VerdictKind::OutOfRange
        } else if !self.inconsistent.is_empty() {
            VerdictKind::Inconsistent
        } else if !self.incomplete.is_empty() {
            VerdictKind::Incomplete
        } else {
            VerdictKind::Clean
        }
    }
}

/// Validates one record. Rules are only evaluated when all of their answers
/// are present and in range; question lists are sorted by id so the verdict
/// does not depend on schema question order.
pub fn validate_record(record: &RespondentRecord, schema: &SurveySchema) -> ValidationVerdict {
    let mut verdict = ValidationVerdict::default();
    let mut usable: BTreeMap<String, i64> = BTreeMap::new();
    for q in &schema.questions {
        match record.answer(&q.id) {
            None => verdict.incomplete.push(q.id.clone()),
            Some(code) if !q.kind.admits(code) => verdict.out_of_range.push(q.id.clone()),
            Some(code) => {
                usable.insert(q.id.clone(), code);
            }
        }
    }
    for rule in &schema.rules {
        if rule.holds(&usable) == Some(false) {
            verdict.inconsistent.push(rule.id.clone());
        }
    }
    verdict.out_of_range.sort();
    verdict.incomplete.sort();
    verdict.inconsistent.sort();
    verdict
}
