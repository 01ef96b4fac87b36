//! Reading survey exports and removing invalid respondents.
//!
//! Survey files are delimited text with a header row. The first column must
//! be `respondent_id`; an optional `gender` column may follow; every other
//! column is a schema question id. Cells hold integer codes. Empty or
//! unparseable cells become absent answers.

use std::collections::HashSet;
use std::fmt::Write as _;
use std::io::{Read, Write};
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::schema::{validate_record, RespondentRecord, SurveySchema, VerdictKind};

pub const ID_COLUMN: &str = "respondent_id";
pub const GENDER_COLUMN: &str = "gender";

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("cannot open {path}: {source}")]
    Open {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed delimited file: {0}")]
    Csv(#[from] csv::Error),
    #[error("header does not match schema: missing columns [{}], unknown columns [{}]", missing.join(", "), unknown.join(", "))]
    HeaderMismatch { missing: Vec<String>, unknown: Vec<String> },
    #[error("first header column must be `respondent_id`")]
    MissingIdColumn,
    #[error("duplicate respondent id {0:?}")]
    DuplicateRespondent(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

/// Parses a survey file against a schema.
pub fn parse_survey_file(
    path: impl AsRef<Path>,
    schema: &SurveySchema,
    delimiter: u8,
) -> Result<Vec<RespondentRecord>, IngestError> {
    let path = path.as_ref();
    let file = std::fs::File::open(path)
        .map_err(|source| IngestError::Open { path: path.display().to_string(), source })?;
    parse_survey(file, schema, delimiter)
}

pub fn parse_survey<R: Read>(
    reader: R,
    schema: &SurveySchema,
    delimiter: u8,
) -> Result<Vec<RespondentRecord>, IngestError> {
    let mut rdr = csv::ReaderBuilder::new()
        .delimiter(delimiter)
        .trim(csv::Trim::All)
        .flexible(true)
        .from_reader(reader);
    let header: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
    if header.first().map(String::as_str) != Some(ID_COLUMN) {
        return Err(IngestError::MissingIdColumn);
    }
    let data_cols: Vec<&str> = header[1..].iter().map(String::as_str).filter(|c| *c != GENDER_COLUMN).collect();
    let have: HashSet<&str> = data_cols.iter().copied().collect();
    let missing: Vec<String> =
        schema.question_ids().into_iter().filter(|q| !have.contains(q)).map(str::to_string).collect();
    let unknown: Vec<String> =
        data_cols.iter().filter(|c| schema.question(c).is_none()).map(|c| c.to_string()).collect();
    if !missing.is_empty() || !unknown.is_empty() {
        return Err(IngestError::HeaderMismatch { missing, unknown });
    }
    read_rows(&mut rdr, &header)
}

/// Reads a records file without a schema: every column other than the id and
/// gender is an integer-coded question.
pub fn parse_records_file(
    path: impl AsRef<Path>,
    delimiter: u8,
) -> Result<(Vec<String>, Vec<RespondentRecord>), IngestError> {
    let path = path.as_ref();
    let file = std::fs::File::open(path)
        .map_err(|source| IngestError::Open { path: path.display().to_string(), source })?;
    let mut rdr = csv::ReaderBuilder::new()
        .delimiter(delimiter)
        .trim(csv::Trim::All)
        .flexible(true)
        .from_reader(file);
    let header: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
    if header.first().map(String::as_str) != Some(ID_COLUMN) {
        return Err(IngestError::MissingIdColumn);
    }
    let questions = header[1..].iter().filter(|c| *c != GENDER_COLUMN).cloned().collect();
    Ok((questions, read_rows(&mut rdr, &header)?))
}

fn read_rows<R: Read>(
    rdr: &mut csv::Reader<R>,
    header: &[String],
) -> Result<Vec<RespondentRecord>, IngestError> {
    let mut seen = HashSet::new();
    let mut out = Vec::new();
    for row in rdr.records() {
        let row = row?;
        let id = row.get(0).unwrap_or("").to_string();
        if !seen.insert(id.clone()) {
            return Err(IngestError::DuplicateRespondent(id));
        }
        let mut rec = RespondentRecord::new(id);
        for (col, cell) in header.iter().zip(row.iter()).skip(1) {
            let code = cell.parse::<i64>().ok();
            if col == GENDER_COLUMN {
                rec.gender = code;
            } else if let Some(code) = code {
                rec.answers.insert(col.clone(), code);
            }
        }
        out.push(rec);
    }
    Ok(out)
}

/// Writes records with columns `respondent_id, gender, <questions...>`.
pub fn write_records<W: Write>(
    writer: W,
    questions: &[&str],
    records: &[RespondentRecord],
    delimiter: u8,
) -> Result<(), IngestError> {
    let mut w = csv::WriterBuilder::new().delimiter(delimiter).from_writer(writer);
    let mut header = vec![ID_COLUMN, GENDER_COLUMN];
    header.extend_from_slice(questions);
    w.write_record(&header)?;
    for r in records {
        let mut row = vec![r.respondent_id.clone(), r.gender.map(|g| g.to_string()).unwrap_or_default()];
        row.extend(questions.iter().map(|q| r.answer(q).map(|c| c.to_string()).unwrap_or_default()));
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_records_file(
    path: impl AsRef<Path>,
    questions: &[&str],
    records: &[RespondentRecord],
    delimiter: u8,
) -> Result<(), IngestError> {
    let file = std::fs::File::create(path.as_ref()).map_err(|source| IngestError::Open {
        path: path.as_ref().display().to_string(),
        source,
    })?;
    write_records(std::io::BufWriter::new(file), questions, records, delimiter)
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CleaningReport {
    pub total_in: usize,
    pub removed_out_of_range: Vec<String>,
    pub removed_inconsistent: Vec<String>,
    pub removed_incomplete: Vec<String>,
    pub total_out: usize,
}

impl CleaningReport {
    pub fn removed(&self) -> usize {
        self.removed_out_of_range.len() + self.removed_inconsistent.len() + self.removed_incomplete.len()
    }

    pub fn reconciles(&self) -> bool {
        self.total_in == self.total_out + self.removed()
    }

    pub fn render_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "Cleaning report");
        let _ = writeln!(s, "  respondents in:        {}", self.total_in);
        let _ = writeln!(s, "  removed out of range:  {}", self.removed_out_of_range.len());
        let _ = writeln!(s, "  removed inconsistent:  {}", self.removed_inconsistent.len());
        let _ = writeln!(s, "  removed incomplete:    {}", self.removed_incomplete.len());
        let _ = writeln!(s, "  respondents out:       {}", self.total_out);
        for (title, ids) in [
            ("out_of_range", &self.removed_out_of_range),
            ("inconsistent", &self.removed_inconsistent),
            ("incomplete", &self.removed_incomplete),
        ] {
            if !ids.is_empty() {
                let _ = writeln!(s, "{title}: {}", ids.join(", "));
            }
        }
        s
    }

    /// One `category,respondent_id` row per removal.
    pub fn write_rows<W: Write>(&self, writer: W) -> Result<(), IngestError> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["category", ID_COLUMN])?;
        for (cat, ids) in [
            (VerdictKind::OutOfRange, &self.removed_out_of_range),
            (VerdictKind::Inconsistent, &self.removed_inconsistent),
            (VerdictKind::Incomplete, &self.removed_incomplete),
        ] {
            for id in ids {
                w.write_record([cat.to_string().as_str(), id])?;
            }
        }
        w.flush()?;
        Ok(())
    }
}

/// Removes every record that does not validate clean. Each removed record is
/// listed once under its highest-precedence category; input order is kept.
pub fn clean_cohort(
    records: &[RespondentRecord],
    schema: &SurveySchema,
) -> (Vec<RespondentRecord>, CleaningReport) {
    let kinds: Vec<VerdictKind> =
        records.par_iter().map(|r| validate_record(r, schema).kind()).collect();
    let mut report = CleaningReport { total_in: records.len(), ..Default::default() };
    let mut kept = Vec::with_capacity(records.len());
    for (r, kind) in records.iter().zip(kinds) {
        match kind {
            VerdictKind::Clean => kept.push(r.clone()),
            VerdictKind::OutOfRange => report.removed_out_of_range.push(r.respondent_id.clone()),
            VerdictKind::Inconsistent => report.removed_inconsistent.push(r.respondent_id.clone()),
            VerdictKind::Incomplete => report.removed_incomplete.push(r.respondent_id.clone()),
        }
    }
    report.total_out = kept.len();
    (kept, report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::schema::{ConsistencyRule, QuestionSpec};

    fn schema() -> SurveySchema {
        SurveySchema::new(
            vec![
                QuestionSpec::binary("electricity"),
                QuestionSpec::likert("rooms", 5),
                QuestionSpec::likert("household_size", 5),
                QuestionSpec::likert("sleep_company", 5),
            ],
            vec![ConsistencyRule::new("sleep_vs_household", "sleep_company <= household_size", "").unwrap()],
            vec![],
        )
        .unwrap()
    }

    const HEADER: &str = "respondent_id,gender,electricity,rooms,household_size,sleep_company\n";

    #[test]
    fn three_rows() {
        let src = format!("{HEADER}a,1,1,3,3,2\nb,2,2,1,2,1\nc,,1,5,4,4\n");
        let recs = parse_survey(src.as_bytes(), &schema(), b',').unwrap();
        assert_eq!(recs.len(), 3);
        assert_eq!(recs[0].gender, Some(1));
        assert_eq!(recs[2].gender, None);
        assert_eq!(recs[1].answer("rooms"), Some(1));
    }

    #[test]
    fn missing_column_named() {
        let src = "respondent_id,electricity,household_size,sleep_company\na,1,3,2\n";
        match parse_survey(src.as_bytes(), &schema(), b',') {
            Err(IngestError::HeaderMismatch { missing, unknown }) => {
                assert_eq!(missing, vec!["rooms"]);
                assert!(unknown.is_empty());
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn unknown_column_named() {
        let src = HEADER.replace('\n', ",shoes\n");
        let err = parse_survey(src.as_bytes(), &schema(), b',').unwrap_err();
        assert!(err.to_string().contains("shoes"));
    }

    #[test]
    fn duplicate_id_is_fatal() {
        let src = format!("{HEADER}a,1,1,3,3,2\na,2,2,1,2,1\n");
        assert!(matches!(
            parse_survey(src.as_bytes(), &schema(), b','),
            Err(IngestError::DuplicateRespondent(id)) if id == "a"
        ));
    }

    #[test]
    fn unparseable_cell_becomes_incomplete() {
        let src = format!("{HEADER}a,1,1,abc,3,2\n");
        let recs = parse_survey(src.as_bytes(), &schema(), b',').unwrap();
        assert_eq!(recs[0].answer("rooms"), None);
        let v = validate_record(&recs[0], &schema());
        assert_eq!(v.kind(), VerdictKind::Incomplete);
        assert_eq!(v.incomplete, vec!["rooms"]);
    }

    #[test]
    fn semicolon_delimiter() {
        let src = HEADER.replace(',', ";") + "a;1;1;3;3;2\n";
        let recs = parse_survey(src.as_bytes(), &schema(), b';').unwrap();
        assert_eq!(recs[0].answer("sleep_company"), Some(2));
    }

    #[test]
    fn clean_mixed_cohort() {
        let src = format!(
            "{HEADER}ok1,1,1,3,3,2\nrange,1,3,3,3,2\nincons,1,1,3,3,4\nok2,2,2,1,2,1\nok3,1,1,5,5,5\n"
        );
        let recs = parse_survey(src.as_bytes(), &schema(), b',').unwrap();
        let (kept, report) = clean_cohort(&recs, &schema());
        assert_eq!(report.total_in, 5);
        assert_eq!(report.total_out, 3);
        assert_eq!(report.removed_out_of_range, vec!["range"]);
        assert_eq!(report.removed_inconsistent, vec!["incons"]);
        assert!(report.removed_incomplete.is_empty());
        assert!(report.reconciles());
        let ids: Vec<_> = kept.iter().map(|r| r.respondent_id.as_str()).collect();
        assert_eq!(ids, vec!["ok1", "ok2", "ok3"]);
    }

    #[test]
    fn overlap_counts_once_under_out_of_range() {
        let src = format!("{HEADER}both,1,3,3,2,5\n");
        let recs = parse_survey(src.as_bytes(), &schema(), b',').unwrap();
        let v = validate_record(&recs[0], &schema());
        assert!(!v.out_of_range.is_empty() && !v.inconsistent.is_empty());
        let (_, report) = clean_cohort(&recs, &schema());
        assert_eq!(report.removed_out_of_range, vec!["both"]);
        assert!(report.removed_inconsistent.is_empty());
    }

    #[test]
    fn all_clean_is_identity_and_idempotent() {
        let src = format!("{HEADER}a,1,1,3,3,2\nb,2,2,1,2,1\n");
        let recs = parse_survey(src.as_bytes(), &schema(), b',').unwrap();
        let (kept, report) = clean_cohort(&recs, &schema());
        assert_eq!(kept, recs);
        assert_eq!(report.removed(), 0);
        let (again, report2) = clean_cohort(&kept, &schema());
        assert_eq!(again, kept);
        assert_eq!(report2.removed(), 0);
    }

    #[test]
    fn write_then_read_back() {
        let src = format!("{HEADER}a,1,1,3,3,2\nb,,2,,2,1\n");
        let s = schema();
        let recs = parse_survey(src.as_bytes(), &s, b',').unwrap();
        let mut buf = Vec::new();
        write_records(&mut buf, &s.question_ids(), &recs, b',').unwrap();
        let back = parse_survey(buf.as_slice(), &s, b',').unwrap();
        assert_eq!(back, recs);
    }

    #[test]
    fn report_rows() {
        let report = CleaningReport {
            total_in: 3,
            removed_out_of_range: vec!["x".into()],
            removed_inconsistent: vec![],
            removed_incomplete: vec!["y".into()],
            total_out: 1,
        };
        let mut buf = Vec::new();
        report.write_rows(&mut buf).unwrap();
        assert_eq!(
            String::from_utf8(buf).unwrap(),
            "category,respondent_id\nout_of_range,x\nincomplete,y\n"
        );
        assert!(report.render_text().contains("removed incomplete:    1"));
    }
}
