//! Cluster profiles, need-cluster selection, reason-by-cluster contingency
//! tables, recall and cross-method comparison.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::io;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::baseline::BaselineLabel;
use crate::clustering::{column_modes, nearly_equal, ClusterModel, DataMatrix, Method};
use crate::schema::{Orientation, PovertyIndicator, SurveySchema};

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("respondent ids differ: {missing_left} not in {left}, {missing_right} not in {right} (e.g. {example})")]
    IdMismatch { left: &'static str, right: &'static str, missing_left: usize, missing_right: usize, example: String },
    #[error("cluster {cluster} does not exist (model has {n} clusters)")]
    BadCluster { cluster: usize, n: usize },
    #[error("no reports to compare")]
    NoReports,
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("i/o: {0}")]
    Io(#[from] io::Error),
}

fn id_mismatch<'a>(
    left: &'static str,
    a: impl Iterator<Item = &'a str>,
    right: &'static str,
    b: impl Iterator<Item = &'a str>,
) -> Option<EvalError> {
    let a: BTreeSet<&str> = a.collect();
    let b: BTreeSet<&str> = b.collect();
    if a == b {
        return None;
    }
    let only_b: Vec<&&str> = b.difference(&a).collect();
    let only_a: Vec<&&str> = a.difference(&b).collect();
    let example = only_b.first().or(only_a.first()).map(|s| s.to_string()).unwrap_or_default();
    Some(EvalError::IdMismatch { left, right, missing_left: only_b.len(), missing_right: only_a.len(), example })
}

pub fn method_title(m: Method) -> &'static str {
    match m {
        Method::Kmeans => "k-means",
        Method::Kmodes => "k-modes",
        Method::HclustComplete => "Complete linkage",
        Method::HclustSingle => "Single linkage",
        Method::HclustAverage => "Mean linkage",
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SummaryKind {
    Mean,
    Mode,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterProfile {
    pub method: Method,
    pub k: usize,
    pub question_ids: Vec<String>,
    pub sizes: Vec<usize>,
    pub kind: SummaryKind,
    /// One row per cluster, in cluster-index order.
    pub summaries: Vec<Vec<f64>>,
}

/// Means per cluster for centroid and hierarchical methods, modes for
/// k-modes. Always computed on raw codes.
pub fn profile_clusters(data: &DataMatrix, model: &ClusterModel) -> Result<ClusterProfile, EvalError> {
    if let Some(e) = id_mismatch(
        "model",
        model.respondent_ids.iter().map(String::as_str),
        "data",
        data.respondent_ids.iter().map(String::as_str),
    ) {
        return Err(e);
    }
    let assign = model.assignment_map();
    let kc = model.n_clusters();
    let mut members: Vec<Vec<&[i64]>> = vec![Vec::new(); kc];
    for (id, row) in data.respondent_ids.iter().zip(&data.codes) {
        members[assign[id.as_str()] - 1].push(row);
    }
    let kind = if model.method == Method::Kmodes { SummaryKind::Mode } else { SummaryKind::Mean };
    let p = data.p();
    let summaries = members
        .iter()
        .map(|rows| match kind {
            SummaryKind::Mode if !rows.is_empty() => column_modes(rows).into_iter().map(|c| c as f64).collect(),
            _ if rows.is_empty() => vec![f64::NAN; p],
            _ => (0..p).map(|j| rows.iter().map(|r| r[j] as f64).sum::<f64>() / rows.len() as f64).collect(),
        })
        .collect();
    Ok(ClusterProfile {
        method: model.method,
        k: model.k,
        question_ids: data.question_ids.clone(),
        sizes: members.iter().map(Vec::len).collect(),
        kind,
        summaries,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "policy", content = "cluster")]
pub enum NeedPolicy {
    #[default]
    Scored,
    Manual(usize),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NeedChoice {
    /// 1-based cluster index.
    pub cluster: usize,
    pub policy: NeedPolicy,
    pub scores: Vec<f64>,
    /// Questions that entered the score.
    pub scored_questions: Vec<String>,
    pub rationale: String,
}

/// +1 when a higher code means more need, -1 otherwise.
fn worse_direction(schema: &SurveySchema, id: &str) -> Option<f64> {
    let q = schema.question(id)?;
    if !q.is_need_signal() {
        return None;
    }
    Some(match (q.poverty_indicator, q.orientation) {
        (PovertyIndicator::BinaryLack, _) => 1.0,
        (_, Orientation::HigherIsWorse) => 1.0,
        (_, Orientation::LowerIsWorse) => -1.0,
    })
}

/// Need score per cluster: each need-signal question's summary is z-scored
/// across clusters, oriented so that worse is higher, and summed.
pub fn need_scores(profile: &ClusterProfile, schema: &SurveySchema) -> (Vec<f64>, Vec<String>) {
    let kc = profile.summaries.len();
    let mut scores = vec![0.0; kc];
    let mut used = Vec::new();
    for (j, q) in profile.question_ids.iter().enumerate() {
        let Some(dir) = worse_direction(schema, q) else { continue };
        used.push(q.clone());
        let col: Vec<f64> = profile.summaries.iter().map(|s| s[j]).filter(|x| x.is_finite()).collect();
        if col.len() < 2 {
            continue;
        }
        let mean = col.iter().sum::<f64>() / col.len() as f64;
        let sd = (col.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / col.len() as f64).sqrt();
        if sd == 0.0 {
            continue;
        }
        for (c, s) in profile.summaries.iter().enumerate() {
            if s[j].is_finite() {
                scores[c] += dir * (s[j] - mean) / sd;
            }
        }
    }
    (scores, used)
}

pub fn pick_need_cluster(
    profile: &ClusterProfile,
    schema: &SurveySchema,
    policy: NeedPolicy,
) -> Result<NeedChoice, EvalError> {
    let (scores, scored_questions) = need_scores(profile, schema);
    let kc = profile.sizes.len();
    if let NeedPolicy::Manual(c) = policy {
        if c == 0 || c > kc {
            return Err(EvalError::BadCluster { cluster: c, n: kc });
        }
        return Ok(NeedChoice {
            cluster: c,
            policy,
            scores,
            scored_questions,
            rationale: format!("cluster {c} chosen manually"),
        });
    }
    let top = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let tied: Vec<usize> = (0..kc).filter(|&c| nearly_equal(scores[c], top)).collect();
    let best = *tied.iter().min_by_key(|&&c| (profile.sizes[c], c)).expect("at least one cluster");
    let rationale = if tied.len() > 1 {
        format!(
            "tie on need score {top:.3} between clusters {}; smallest cluster {} ({} members) chosen",
            tied.iter().map(|c| (c + 1).to_string()).collect::<Vec<_>>().join(", "),
            best + 1,
            profile.sizes[best]
        )
    } else {
        format!("highest need score {top:.3} over {} questions", scored_questions.len())
    };
    Ok(NeedChoice { cluster: best + 1, policy, scores, scored_questions, rationale })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReasonRow {
    pub tag: String,
    pub label: String,
}

/// Reason rows in baseline order.
pub fn reason_rows(schema: &SurveySchema) -> Vec<ReasonRow> {
    schema
        .baseline_questions()
        .map(|q| ReasonRow { tag: q.reason_tag().to_string(), label: q.reason_text().to_string() })
        .collect()
}

/// Reasons by clusters. A respondent with several reasons counts once in
/// each of their rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContingencyTable {
    pub reasons: Vec<ReasonRow>,
    pub counts: Vec<Vec<usize>>,
    pub row_sums: Vec<usize>,
    pub col_sums: Vec<usize>,
    pub total: usize,
    /// Distinct flagged respondents per cluster.
    pub students: Vec<usize>,
    pub flagged_students: usize,
}

impl ContingencyTable {
    pub fn n_clusters(&self) -> usize {
        self.col_sums.len()
    }
}

/// Rows follow `rows`; reasons found in the labels but not listed are
/// appended in sorted order.
pub fn contingency(
    labels: &[BaselineLabel],
    model: &ClusterModel,
    rows: &[ReasonRow],
) -> Result<ContingencyTable, EvalError> {
    if let Some(e) = id_mismatch(
        "labels",
        labels.iter().map(|l| l.respondent_id.as_str()),
        "model",
        model.respondent_ids.iter().map(String::as_str),
    ) {
        return Err(e);
    }
    let mut reasons: Vec<ReasonRow> = rows.to_vec();
    let extra: BTreeSet<&str> = labels
        .iter()
        .flat_map(|l| l.reasons.iter().map(String::as_str))
        .filter(|r| !rows.iter().any(|row| row.tag == *r))
        .collect();
    reasons.extend(extra.into_iter().map(|t| ReasonRow { tag: t.into(), label: t.into() }));
    let index: BTreeMap<&str, usize> = reasons.iter().enumerate().map(|(i, r)| (r.tag.as_str(), i)).collect();
    let kc = model.n_clusters();
    let assign = model.assignment_map();
    let mut counts = vec![vec![0usize; kc]; reasons.len()];
    let mut students = vec![0usize; kc];
    for l in labels.iter().filter(|l| l.is_flagged()) {
        let c = assign[l.respondent_id.as_str()] - 1;
        students[c] += 1;
        for r in &l.reasons {
            counts[index[r.as_str()]][c] += 1;
        }
    }
    let row_sums: Vec<usize> = counts.iter().map(|r| r.iter().sum()).collect();
    let col_sums: Vec<usize> = (0..kc).map(|c| counts.iter().map(|r| r[c]).sum()).collect();
    Ok(ContingencyTable {
        total: row_sums.iter().sum(),
        flagged_students: students.iter().sum(),
        reasons,
        counts,
        row_sums,
        col_sums,
        students,
    })
}

/// `count` out of `of`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RecallCell {
    pub count: usize,
    pub of: usize,
}

impl RecallCell {
    pub fn fraction(&self) -> Option<f64> {
        (self.of > 0).then(|| self.count as f64 / self.of as f64)
    }

    /// `61 (50.8%)`, or `0 (n/a)` when nothing was findable.
    pub fn render(&self) -> String {
        match self.fraction() {
            Some(f) => format!("{} ({:.1}%)", self.count, 100.0 * f),
            None => format!("{} (n/a)", self.count),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecallReport {
    pub need_cluster: usize,
    pub per_reason: Vec<(String, RecallCell)>,
    pub total: RecallCell,
    /// Distinct flagged respondents captured.
    pub students: RecallCell,
}

pub fn recall_report(table: &ContingencyTable, need_cluster: usize) -> Result<RecallReport, EvalError> {
    let kc = table.n_clusters();
    if need_cluster == 0 || need_cluster > kc {
        return Err(EvalError::BadCluster { cluster: need_cluster, n: kc });
    }
    let c = need_cluster - 1;
    Ok(RecallReport {
        need_cluster,
        per_reason: table
            .reasons
            .iter()
            .zip(&table.counts)
            .zip(&table.row_sums)
            .map(|((r, row), &of)| (r.tag.clone(), RecallCell { count: row[c], of }))
            .collect(),
        total: RecallCell { count: table.col_sums[c], of: table.total },
        students: RecallCell { count: table.students[c], of: table.flagged_students },
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DegeneracyThresholds {
    pub max_share: f64,
    pub min_share: f64,
}

impl Default for DegeneracyThresholds {
    fn default() -> Self {
        DegeneracyThresholds { max_share: 0.80, min_share: 0.01 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub method: Method,
    pub k: usize,
    pub seed: Option<u64>,
    pub n: usize,
    pub profile: ClusterProfile,
    pub need: NeedChoice,
    pub table: ContingencyTable,
    pub recall: RecallReport,
    pub need_share: f64,
    pub largest_share: f64,
    pub degenerate: bool,
    pub warnings: Vec<String>,
}

/// A run is degenerate when its need cluster or its largest cluster holds
/// more than `max_share` of respondents, or its need cluster less than
/// `min_share`.
pub fn is_degenerate(sizes: &[usize], need_cluster: usize, t: &DegeneracyThresholds) -> (f64, f64, bool) {
    let n: usize = sizes.iter().sum();
    let n = n.max(1) as f64;
    let need = sizes[need_cluster - 1] as f64 / n;
    let largest = sizes.iter().copied().max().unwrap_or(0) as f64 / n;
    (need, largest, need > t.max_share || need < t.min_share || largest > t.max_share)
}

pub fn evaluate(
    data: &DataMatrix,
    model: &ClusterModel,
    labels: &[BaselineLabel],
    schema: &SurveySchema,
    policy: NeedPolicy,
    thresholds: &DegeneracyThresholds,
) -> Result<EvaluationReport, EvalError> {
    let profile = profile_clusters(data, model)?;
    let need = pick_need_cluster(&profile, schema, policy)?;
    let table = contingency(labels, model, &reason_rows(schema))?;
    let recall = recall_report(&table, need.cluster)?;
    let (need_share, largest_share, degenerate) = is_degenerate(&profile.sizes, need.cluster, thresholds);
    Ok(EvaluationReport {
        method: model.method,
        k: model.k,
        seed: model.seed,
        n: data.n(),
        profile,
        need,
        table,
        recall,
        need_share,
        largest_share,
        degenerate,
        warnings: model.warnings.clone(),
    })
}

fn number_word(k: usize) -> String {
    const W: [&str; 11] = ["zero", "one", "two", "three", "four", "five", "six", "seven", "eight", "nine", "ten"];
    W.get(k).map_or_else(|| k.to_string(), |w| w.to_string())
}

fn fmt_summary(v: f64, kind: SummaryKind) -> String {
    match kind {
        _ if !v.is_finite() => "-".into(),
        SummaryKind::Mode => format!("{}", v as i64),
        SummaryKind::Mean => format!("{v:.2}"),
    }
}

/// Plain-text grid: first column left-aligned, the rest right-aligned.
fn grid(rows: &[Vec<String>]) -> String {
    let cols = rows.iter().map(Vec::len).max().unwrap_or(0);
    let widths: Vec<usize> =
        (0..cols).map(|c| rows.iter().filter_map(|r| r.get(c)).map(|s| s.chars().count()).max().unwrap_or(0)).collect();
    let mut out = String::new();
    for r in rows {
        let mut line = String::new();
        for (c, cell) in r.iter().enumerate() {
            if c == 0 {
                let _ = write!(line, "{cell:<w$}", w = widths[0]);
            } else {
                let _ = write!(line, "  {cell:>w$}", w = widths[c]);
            }
        }
        out.push_str(line.trim_end());
        out.push('\n');
    }
    out
}

pub fn render_profile(profile: &ClusterProfile, need: &NeedChoice) -> String {
    let sizes = profile.sizes.iter().map(usize::to_string).collect::<Vec<_>>().join(", ");
    let mut s = format!(
        "{} clustering with {} clusters of size {sizes}\n\n",
        method_title(profile.method),
        number_word(profile.sizes.len())
    );
    let mut rows = vec![std::iter::once("Cluster".to_string()).chain(profile.question_ids.iter().cloned()).collect()];
    for (c, summ) in profile.summaries.iter().enumerate() {
        rows.push(
            std::iter::once((c + 1).to_string()).chain(summ.iter().map(|&v| fmt_summary(v, profile.kind))).collect(),
        );
    }
    s.push_str(&grid(&rows));
    let how = match need.policy {
        NeedPolicy::Scored => "scored",
        NeedPolicy::Manual(_) => "manual",
    };
    let _ = write!(s, "\nNote: Row cluster {} is most impoverished ({how}: {}).\n", need.cluster, need.rationale);
    s
}

/// Reasons by clusters with a SUM column and a SUM row.
pub fn render_contingency(table: &ContingencyTable) -> String {
    let kc = table.n_clusters();
    let mut rows = vec![std::iter::once("Reason for identification".to_string())
        .chain((1..=kc).map(|c| c.to_string()))
        .chain(std::iter::once("SUM".to_string()))
        .collect::<Vec<_>>()];
    for ((r, counts), sum) in table.reasons.iter().zip(&table.counts).zip(&table.row_sums) {
        rows.push(
            std::iter::once(r.label.clone())
                .chain(counts.iter().map(usize::to_string))
                .chain(std::iter::once(sum.to_string()))
                .collect(),
        );
    }
    rows.push(
        std::iter::once("SUM".to_string())
            .chain(table.col_sums.iter().map(usize::to_string))
            .chain(std::iter::once(table.total.to_string()))
            .collect(),
    );
    grid(&rows)
}

pub fn render_recall(report: &EvaluationReport) -> String {
    let mut rows = vec![vec!["Reason".to_string(), format!("Cluster {}", report.recall.need_cluster), "Max findable".into()]];
    for ((_, cell), r) in report.recall.per_reason.iter().zip(&report.table.reasons) {
        rows.push(vec![r.label.clone(), cell.render(), cell.of.to_string()]);
    }
    rows.push(vec!["Sum".into(), report.recall.total.render(), report.recall.total.of.to_string()]);
    rows.push(vec!["Students".into(), report.recall.students.render(), report.recall.students.of.to_string()]);
    let mut s = grid(&rows);
    let _ = writeln!(
        s,
        "\nNeed cluster share {:.1}%, largest cluster share {:.1}%{}",
        100.0 * report.need_share,
        100.0 * report.largest_share,
        if report.degenerate { " (degenerate)" } else { "" }
    );
    s
}

/// Side-by-side need-cluster recall for several methods at one k. The
/// reports must share the same reason rows.
pub fn render_comparison_table(reports: &[&EvaluationReport]) -> Result<String, EvalError> {
    let first = reports.first().ok_or(EvalError::NoReports)?;
    let mut rows = vec![std::iter::once("Reason for identification".to_string())
        .chain(reports.iter().map(|r| method_title(r.method).to_string()))
        .chain(std::iter::once("Max findable".to_string()))
        .collect::<Vec<_>>()];
    for (i, r) in first.table.reasons.iter().enumerate() {
        rows.push(
            std::iter::once(r.label.clone())
                .chain(reports.iter().map(|rep| rep.recall.per_reason[i].1.render()))
                .chain(std::iter::once(first.table.row_sums[i].to_string()))
                .collect(),
        );
    }
    rows.push(
        std::iter::once("Sum".to_string())
            .chain(reports.iter().map(|rep| rep.recall.total.render()))
            .chain(std::iter::once(first.table.total.to_string()))
            .collect(),
    );
    Ok(grid(&rows))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub method: Method,
    pub k: usize,
    pub seed: Option<u64>,
    pub need_cluster: usize,
    pub need_size: usize,
    pub n: usize,
    pub captured: usize,
    pub findable: usize,
    pub recall: Option<f64>,
    pub degenerate: bool,
}

/// One row per report, ordered by method, k and seed.
pub fn compare_methods(reports: &[EvaluationReport]) -> Result<Vec<ComparisonRow>, EvalError> {
    if reports.is_empty() {
        return Err(EvalError::NoReports);
    }
    let mut rows: Vec<ComparisonRow> = reports
        .iter()
        .map(|r| ComparisonRow {
            method: r.method,
            k: r.k,
            seed: r.seed,
            need_cluster: r.need.cluster,
            need_size: r.profile.sizes[r.need.cluster - 1],
            n: r.n,
            captured: r.recall.total.count,
            findable: r.recall.total.of,
            recall: r.recall.total.fraction(),
            degenerate: r.degenerate,
        })
        .collect();
    rows.sort_by_key(|r| (r.method, r.k, r.seed));
    Ok(rows)
}

pub fn write_series_csv<W: io::Write>(w: W, rows: &[ComparisonRow]) -> Result<(), EvalError> {
    let mut wr = csv::Writer::from_writer(w);
    wr.write_record(["method", "k", "seed", "need_cluster", "need_size", "n", "captured", "findable", "recall", "degenerate"])?;
    for r in rows {
        wr.write_record([
            r.method.to_string(),
            r.k.to_string(),
            r.seed.map_or(String::new(), |s| s.to_string()),
            r.need_cluster.to_string(),
            r.need_size.to_string(),
            r.n.to_string(),
            r.captured.to_string(),
            r.findable.to_string(),
            r.recall.map_or("NA".into(), |f| format!("{f:.6}")),
            r.degenerate.to_string(),
        ])?;
    }
    wr.flush()?;
    Ok(())
}

/// Mean recall per (method, k) over seeds, ignoring undefined recalls.
pub fn mean_recall_by_k(rows: &[ComparisonRow]) -> BTreeMap<Method, Vec<(usize, f64)>> {
    let mut acc: BTreeMap<(Method, usize), (f64, usize)> = BTreeMap::new();
    for r in rows {
        if let Some(f) = r.recall {
            let e = acc.entry((r.method, r.k)).or_default();
            e.0 += f;
            e.1 += 1;
        }
    }
    let mut out: BTreeMap<Method, Vec<(usize, f64)>> = BTreeMap::new();
    for ((m, k), (sum, cnt)) in acc {
        out.entry(m).or_default().push((k, sum / cnt as f64));
    }
    out
}

const COLORS: [&str; 5] = ["#1f77b4", "#2ca02c", "#d62728", "#9467bd", "#ff7f0e"];

/// Line chart of recall (percent) against k, one line per method.
pub fn render_svg_chart(rows: &[ComparisonRow]) -> String {
    let series = mean_recall_by_k(rows);
    let (w, h, left, right, top, bottom) = (640.0, 400.0, 60.0, 170.0, 30.0, 50.0);
    let ks: BTreeSet<usize> = series.values().flatten().map(|p| p.0).collect();
    let (kmin, kmax) = (ks.first().copied().unwrap_or(1) as f64, ks.last().copied().unwrap_or(1) as f64);
    let span = if kmax > kmin { kmax - kmin } else { 1.0 };
    let pw = w - left - right;
    let ph = h - top - bottom;
    let x = |k: f64| left + if kmax > kmin { (k - kmin) / span * pw } else { pw / 2.0 };
    let y = |pct: f64| top + (1.0 - pct / 100.0) * ph;
    let mut s = String::new();
    let _ = writeln!(s, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}">"#);
    let _ = writeln!(s, r#"<rect width="{w}" height="{h}" fill="white"/>"#);
    for pct in (0..=100).step_by(20) {
        let yy = y(pct as f64);
        let _ = writeln!(
            s,
            r##"<line x1="{left}" y1="{yy:.1}" x2="{:.1}" y2="{yy:.1}" stroke="#ddd"/><text x="{:.1}" y="{:.1}" font-size="11" text-anchor="end">{pct}%</text>"##,
            left + pw,
            left - 6.0,
            yy + 4.0
        );
    }
    for &k in &ks {
        let xx = x(k as f64);
        let _ = writeln!(
            s,
            r#"<text x="{xx:.1}" y="{:.1}" font-size="11" text-anchor="middle">{k}</text>"#,
            top + ph + 16.0
        );
    }
    let _ = writeln!(
        s,
        r#"<text x="{:.1}" y="{:.1}" font-size="12" text-anchor="middle">number of clusters k</text>"#,
        left + pw / 2.0,
        h - 10.0
    );
    let _ = writeln!(
        s,
        r#"<text x="14" y="{:.1}" font-size="12" text-anchor="middle" transform="rotate(-90 14 {:.1})">need-group recall</text>"#,
        top + ph / 2.0,
        top + ph / 2.0
    );
    for (i, (m, pts)) in series.iter().enumerate() {
        let color = COLORS[Method::ALL.iter().position(|x| x == m).unwrap_or(i) % COLORS.len()];
        let path: Vec<String> = pts.iter().map(|&(k, f)| format!("{:.1},{:.1}", x(k as f64), y(100.0 * f))).collect();
        let _ = writeln!(s, r#"<polyline fill="none" stroke="{color}" stroke-width="2" points="{}"/>"#, path.join(" "));
        for &(k, f) in pts {
            let _ = writeln!(s, r#"<circle cx="{:.1}" cy="{:.1}" r="3" fill="{color}"/>"#, x(k as f64), y(100.0 * f));
        }
        let ly = top + 14.0 + 18.0 * i as f64;
        let _ = writeln!(
            s,
            r#"<line x1="{:.1}" y1="{ly:.1}" x2="{:.1}" y2="{ly:.1}" stroke="{color}" stroke-width="2"/><text x="{:.1}" y="{:.1}" font-size="12">{}</text>"#,
            left + pw + 15.0,
            left + pw + 35.0,
            left + pw + 40.0,
            ly + 4.0,
            method_title(*m)
        );
    }
    s.push_str("</svg>\n");
    s
}
