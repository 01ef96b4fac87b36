//! Dichotomous need baseline.
//!
//! Binary-lack questions flag every respondent answering "no" (code 2).
//! Quantile questions flag the lower tail of their (oriented) distribution:
//! when the distribution passes the normality gate the cutoff is
//! `mean + z_alpha * sd`, otherwise it is the value at sorted position
//! `floor(alpha * (n + 1))`, and every respondent at or below the cutoff is
//! flagged. A respondent's flag is the union over all baseline questions.

use std::collections::BTreeMap;
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::schema::{Branch, PovertyIndicator, RespondentRecord, SurveySchema};

/// Slack added before flooring `alpha * (n + 1)` so that products that are
/// mathematically integral are not truncated by rounding.
const POSITION_EPS: f64 = 1e-9;

#[derive(Debug, Error)]
pub enum BaselineError {
    #[error("alpha must lie in (0, 0.5), got {0}")]
    AlphaOutOfRange(f64),
    #[error("no values to threshold")]
    Empty,
    #[error("schema baseline set is empty")]
    EmptyBaselineSet,
    #[error("labels file: {0}")]
    Csv(#[from] csv::Error),
    #[error("labels file: bad flag {flag:?} for {id:?}")]
    BadFlag { id: String, flag: String },
    #[error("labels file: respondent {0:?} has flag 1 but no reasons")]
    FlagWithoutReason(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Normality {
    Normal,
    NotNormal,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormalityVerdict {
    pub verdict: Normality,
    pub skewness: f64,
    pub excess_kurtosis: f64,
    pub warning: Option<String>,
}

pub const SKEW_GATE: f64 = 0.5;
pub const KURTOSIS_GATE: f64 = 1.0;

/// Moment-based normality gate: normal iff |skewness| < 0.5 and
/// |excess kurtosis| < 1, using population moments.
pub fn normality_check(values: &[f64]) -> NormalityVerdict {
    let n = values.len();
    if n < 3 {
        return NormalityVerdict {
            verdict: Normality::NotNormal,
            skewness: f64::NAN,
            excess_kurtosis: f64::NAN,
            warning: Some(format!("only {n} values; too few to judge normality")),
        };
    }
    let nf = n as f64;
    let mean = values.iter().sum::<f64>() / nf;
    let (mut m2, mut m3, mut m4) = (0.0, 0.0, 0.0);
    for &v in values {
        let d = v - mean;
        let d2 = d * d;
        m2 += d2;
        m3 += d2 * d;
        m4 += d2 * d2;
    }
    m2 /= nf;
    m3 /= nf;
    m4 /= nf;
    if m2 <= 0.0 {
        return NormalityVerdict {
            verdict: Normality::NotNormal,
            skewness: f64::NAN,
            excess_kurtosis: f64::NAN,
            warning: Some("zero variance".into()),
        };
    }
    let skewness = m3 / m2.powf(1.5);
    let excess_kurtosis = m4 / (m2 * m2) - 3.0;
    let verdict = if skewness.abs() < SKEW_GATE && excess_kurtosis.abs() < KURTOSIS_GATE {
        Normality::Normal
    } else {
        Normality::NotNormal
    };
    NormalityVerdict { verdict, skewness, excess_kurtosis, warning: None }
}

/// Standard normal quantile (Wichura's AS 241, PPND16), accurate to about
/// 1e-16 relative over (0, 1).
#[allow(clippy::excessive_precision)]
pub fn inverse_normal_cdf(p: f64) -> f64 {
    if p <= 0.0 {
        return f64::NEG_INFINITY;
    }
    if p >= 1.0 {
        return f64::INFINITY;
    }
    let q = p - 0.5;
    if q.abs() <= 0.425 {
        let r = 0.180625 - q * q;
        let num = (((((((2.509_080_928_730_122_7e3 * r + 3.343_057_558_358_813e4) * r
            + 6.726_577_092_700_87e4)
            * r
            + 4.592_195_393_154_987e4)
            * r
            + 1.373_169_376_550_946e4)
            * r
            + 1.971_590_950_306_551_3e3)
            * r
            + 1.331_416_678_917_843_8e2)
            * r
            + 3.387_132_872_796_366_5)
            * q;
        let den = ((((((5.226_495_278_852_545e3 * r + 2.872_908_573_572_194_3e4) * r
            + 3.930_789_580_009_271e4)
            * r
            + 2.121_379_430_158_659_7e4)
            * r
            + 5.394_196_021_424_751e3)
            * r
            + 6.871_870_074_920_579e2)
            * r
            + 4.231_333_070_160_091e1)
            * r
            + 1.0;
        return num / den;
    }
    let tail = if q < 0.0 { p } else { 1.0 - p };
    let mut r = (-tail.ln()).sqrt();
    let val = if r <= 5.0 {
        r -= 1.6;
        let num = ((((((7.745_450_142_783_414e-4 * r + 2.272_384_498_926_918_4e-2) * r
            + 2.417_807_251_774_506e-1)
            * r
            + 1.270_458_252_452_368_4)
            * r
            + 3.647_848_324_763_204_5)
            * r
            + 5.769_497_221_460_691)
            * r
            + 4.630_337_846_156_545)
            * r
            + 1.423_437_110_749_683_5;
        let den = ((((((1.050_750_071_644_416_9e-9 * r + 5.475_938_084_995_345e-4) * r
            + 1.519_866_656_361_645_7e-2)
            * r
            + 1.481_039_764_274_800_8e-1)
            * r
            + 6.897_673_349_851e-1)
            * r
            + 1.676_384_830_183_803_8)
            * r
            + 2.053_191_626_637_758_8)
            * r
            + 1.0;
        num / den
    } else {
        r -= 5.0;
        let num = ((((((2.010_334_399_292_288_1e-7 * r + 2.711_555_568_743_487_6e-5) * r
            + 1.242_660_947_388_078_4e-3)
            * r
            + 2.653_218_952_657_612_4e-2)
            * r
            + 2.965_605_718_285_048_7e-1)
            * r
            + 1.784_826_539_917_291_3)
            * r
            + 5.463_784_911_164_114)
            * r
            + 6.657_904_643_501_103;
        let den = ((((((2.044_263_103_389_939_7e-15 * r + 1.421_511_758_316_446e-7) * r
            + 1.846_318_317_510_054_8e-5)
            * r
            + 7.868_691_311_456_133e-4)
            * r
            + 1.487_536_129_085_061_5e-2)
            * r
            + 1.369_298_809_227_358e-1)
            * r
            + 5.998_322_065_558_88e-1)
            * r
            + 1.0;
        num / den
    };
    if q < 0.0 {
        -val
    } else {
        val
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TailThreshold {
    pub question: String,
    pub branch: Branch,
    pub alpha: f64,
    /// `None` on the empirical branch when the sample is too small for
    /// position 1, in which case nobody is flagged.
    pub cutoff_value: Option<f64>,
    /// 1-based sorted position used by the empirical branch.
    pub position: Option<usize>,
    pub n: usize,
    pub flagged_ids: Vec<String>,
}

pub fn check_alpha(alpha: f64) -> Result<(), BaselineError> {
    if alpha > 0.0 && alpha < 0.5 {
        Ok(())
    } else {
        Err(BaselineError::AlphaOutOfRange(alpha))
    }
}

/// Sorted position `floor(alpha * (n + 1))`.
pub fn empirical_position(alpha: f64, n: usize) -> usize {
    (alpha * (n as f64 + 1.0) + POSITION_EPS).floor() as usize
}

/// Flags the lower tail of already-oriented values (lower is worse). Ties at
/// the cutoff are all flagged. Flagged ids keep input order.
pub fn tail_threshold(
    question: &str,
    values: &[(String, f64)],
    alpha: f64,
    branch: Branch,
) -> Result<TailThreshold, BaselineError> {
    check_alpha(alpha)?;
    if values.is_empty() {
        return Err(BaselineError::Empty);
    }
    let n = values.len();
    let (cutoff, position) = match branch {
        Branch::Normal => {
            let nf = n as f64;
            let mean = values.iter().map(|(_, v)| v).sum::<f64>() / nf;
            let sd = if n > 1 {
                (values.iter().map(|(_, v)| (v - mean).powi(2)).sum::<f64>() / (nf - 1.0)).sqrt()
            } else {
                0.0
            };
            (Some(mean + inverse_normal_cdf(alpha) * sd), None)
        }
        Branch::Empirical => {
            let pos = empirical_position(alpha, n);
            if pos == 0 {
                (None, Some(0))
            } else {
                let mut sorted: Vec<f64> = values.iter().map(|&(_, v)| v).collect();
                sorted.sort_by(f64::total_cmp);
                (Some(sorted[pos - 1]), Some(pos))
            }
        }
    };
    let flagged_ids = match cutoff {
        Some(c) => values.iter().filter(|(_, v)| *v <= c).map(|(id, _)| id.clone()).collect(),
        None => Vec::new(),
    };
    Ok(TailThreshold { question: question.to_string(), branch, alpha, cutoff_value: cutoff, position, n, flagged_ids })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BaselineLabel {
    pub respondent_id: String,
    /// Reason tags in baseline-set order. Non-empty iff flagged.
    pub reasons: Vec<String>,
}

impl BaselineLabel {
    pub fn flag(&self) -> u8 {
        u8::from(!self.reasons.is_empty())
    }

    pub fn is_flagged(&self) -> bool {
        !self.reasons.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuestionOutcome {
    pub question: String,
    pub reason: String,
    pub indicator: PovertyIndicator,
    pub normality: Option<NormalityVerdict>,
    pub threshold: Option<TailThreshold>,
    pub flagged: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaselineOutcome {
    pub labels: Vec<BaselineLabel>,
    pub per_question: Vec<QuestionOutcome>,
    pub warnings: Vec<String>,
}

impl BaselineOutcome {
    pub fn flagged_count(&self) -> usize {
        self.labels.iter().filter(|l| l.is_flagged()).count()
    }
}

/// Labels a cleaned cohort. Missing answers never flag.
pub fn label_baseline(
    records: &[RespondentRecord],
    schema: &SurveySchema,
    alpha: f64,
) -> Result<BaselineOutcome, BaselineError> {
    check_alpha(alpha)?;
    if schema.baseline_set.is_empty() {
        return Err(BaselineError::EmptyBaselineSet);
    }
    let mut reasons: Vec<Vec<String>> = vec![Vec::new(); records.len()];
    let index: BTreeMap<&str, usize> =
        records.iter().enumerate().map(|(i, r)| (r.respondent_id.as_str(), i)).collect();
    let mut per_question = Vec::new();
    let mut warnings = Vec::new();

    for q in schema.baseline_questions() {
        let tag = q.reason_tag().to_string();
        let mut outcome = QuestionOutcome {
            question: q.id.clone(),
            reason: tag.clone(),
            indicator: q.poverty_indicator,
            normality: None,
            threshold: None,
            flagged: 0,
        };
        let flagged: Vec<usize> = match q.poverty_indicator {
            PovertyIndicator::BinaryLack => records
                .iter()
                .enumerate()
                .filter(|(_, r)| r.answer(&q.id) == Some(2))
                .map(|(i, _)| i)
                .collect(),
            PovertyIndicator::QuantileLowerTail => {
                let values: Vec<(String, f64)> = records
                    .iter()
                    .filter_map(|r| r.answer(&q.id).map(|c| (r.respondent_id.clone(), q.oriented(c) as f64)))
                    .collect();
                if values.is_empty() {
                    warnings.push(format!("{}: no answers, nothing flagged", q.id));
                    Vec::new()
                } else {
                    let raw: Vec<f64> = values.iter().map(|&(_, v)| v).collect();
                    let check = normality_check(&raw);
                    if let Some(w) = &check.warning {
                        warnings.push(format!("{}: {w}", q.id));
                    }
                    let branch = q.normality.unwrap_or(match check.verdict {
                        Normality::Normal => Branch::Normal,
                        Normality::NotNormal => Branch::Empirical,
                    });
                    let t = tail_threshold(&q.id, &values, alpha, branch)?;
                    if t.cutoff_value.is_none() {
                        warnings.push(format!(
                            "{}: n = {} too small for alpha = {alpha}, nothing flagged",
                            q.id, t.n
                        ));
                    }
                    let idx = t.flagged_ids.iter().map(|id| index[id.as_str()]).collect();
                    outcome.normality = Some(check);
                    outcome.threshold = Some(t);
                    idx
                }
            }
            PovertyIndicator::None => unreachable!("schema check guarantees indicators on baseline questions"),
        };
        outcome.flagged = flagged.len();
        for i in flagged {
            reasons[i].push(tag.clone());
        }
        per_question.push(outcome);
    }

    for w in &warnings {
        log::warn!("{w}");
    }
    let labels = records
        .iter()
        .zip(reasons)
        .map(|(r, reasons)| BaselineLabel { respondent_id: r.respondent_id.clone(), reasons })
        .collect();
    Ok(BaselineOutcome { labels, per_question, warnings })
}

/// Writes `respondent_id,flag,reasons` with reasons joined by `;`.
pub fn write_labels<W: Write>(writer: W, labels: &[BaselineLabel]) -> Result<(), BaselineError> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["respondent_id", "flag", "reasons"])?;
    for l in labels {
        w.write_record([l.respondent_id.as_str(), &l.flag().to_string(), &l.reasons.join(";")])?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_labels<R: Read>(reader: R) -> Result<Vec<BaselineLabel>, BaselineError> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let mut out = Vec::new();
    for row in rdr.records() {
        let row = row?;
        let id = row.get(0).unwrap_or("").to_string();
        let flag = row.get(1).unwrap_or("");
        let reasons: Vec<String> =
            row.get(2).unwrap_or("").split(';').filter(|s| !s.is_empty()).map(str::to_string).collect();
        match flag {
            "0" => out.push(BaselineLabel { respondent_id: id, reasons: Vec::new() }),
            "1" if reasons.is_empty() => return Err(BaselineError::FlagWithoutReason(id)),
            "1" => out.push(BaselineLabel { respondent_id: id, reasons }),
            other => return Err(BaselineError::BadFlag { id, flag: other.to_string() }),
        }
    }
    Ok(out)
}

pub fn read_labels_file(path: impl AsRef<Path>) -> Result<Vec<BaselineLabel>, BaselineError> {
    read_labels(std::fs::File::open(path)?)
}
