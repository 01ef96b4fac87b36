//! Question-set reduction: correlation screening, collinearity pruning,
//! principal components with the Kaiser criterion, Varimax rotation and the
//! loading filter that selects the questions kept for clustering.

use std::collections::BTreeSet;
use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::linalg::{symmetric_eigen, EigenError, Matrix, SymmetricEigen};
use crate::schema::RespondentRecord;

#[derive(Debug, Error)]
pub enum ReductionError {
    #[error("need at least 2 records, got {0}")]
    TooFewRecords(usize),
    #[error("need at least 2 usable questions, got {0}")]
    TooFewQuestions(usize),
    #[error("correlation undefined for pairs: {}", .0.iter().map(|(a, b)| format!("{a}/{b}")).collect::<Vec<_>>().join(", "))]
    UndefinedEntries(Vec<(String, String)>),
    #[error("eigen-decomposition failed: {0}")]
    Eigen(#[from] EigenError),
    #[error("unknown question {0:?}")]
    UnknownQuestion(String),
    #[error("reduction config: {0}")]
    Config(String),
}

/// Pairwise Pearson correlations on integer codes, complete-case per pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrelationMatrix {
    pub question_ids: Vec<String>,
    pub values: Matrix,
    /// Records used for each pair.
    pub n_used: Vec<Vec<usize>>,
    /// Zero-variance questions left out of the matrix.
    pub excluded: Vec<String>,
    /// Pairs with fewer than two complete cases; their entry is NaN.
    pub undefined: Vec<(String, String)>,
}

impl CorrelationMatrix {
    pub fn get(&self, a: &str, b: &str) -> Option<f64> {
        let i = self.index(a)?;
        let j = self.index(b)?;
        Some(self.values[(i, j)])
    }

    pub fn index(&self, id: &str) -> Option<usize> {
        self.question_ids.iter().position(|q| q == id)
    }

    /// Mean |r| between question `i` and every other question.
    pub fn mean_abs_to_others(&self, i: usize) -> f64 {
        let p = self.question_ids.len();
        if p < 2 {
            return 0.0;
        }
        (0..p).filter(|&j| j != i).map(|j| self.values[(i, j)].abs()).filter(|x| x.is_finite()).sum::<f64>()
            / (p - 1) as f64
    }
}

fn column(records: &[RespondentRecord], id: &str) -> Vec<Option<f64>> {
    records.iter().map(|r| r.answer(id).map(|c| c as f64)).collect()
}

fn paired(a: &[Option<f64>], b: &[Option<f64>]) -> Vec<(f64, f64)> {
    a.iter().zip(b).filter_map(|(x, y)| Some(((*x)?, (*y)?))).collect()
}

fn pearson(pairs: &[(f64, f64)]) -> f64 {
    let n = pairs.len() as f64;
    let mx = pairs.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pairs.iter().map(|p| p.1).sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for &(x, y) in pairs {
        sxy += (x - mx) * (y - my);
        sxx += (x - mx).powi(2);
        syy += (y - my).powi(2);
    }
    if sxx == 0.0 || syy == 0.0 {
        return f64::NAN;
    }
    (sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0)
}

fn covariance(pairs: &[(f64, f64)]) -> f64 {
    let n = pairs.len() as f64;
    let mx = pairs.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pairs.iter().map(|p| p.1).sum::<f64>() / n;
    pairs.iter().map(|&(x, y)| (x - mx) * (y - my)).sum::<f64>() / n
}

fn has_variance(col: &[Option<f64>]) -> bool {
    let mut vals = col.iter().flatten();
    match vals.next() {
        Some(first) => vals.any(|v| v != first),
        None => false,
    }
}

pub fn correlation_matrix(
    records: &[RespondentRecord],
    question_ids: &[&str],
) -> Result<CorrelationMatrix, ReductionError> {
    if records.len() < 2 {
        return Err(ReductionError::TooFewRecords(records.len()));
    }
    let mut excluded = Vec::new();
    let mut kept = Vec::new();
    let mut cols = Vec::new();
    for &id in question_ids {
        let col = column(records, id);
        if has_variance(&col) {
            kept.push(id.to_string());
            cols.push(col);
        } else {
            log::warn!("question {id} has zero variance; excluded from correlation");
            excluded.push(id.to_string());
        }
    }
    let p = kept.len();
    let pairs: Vec<(usize, usize)> = (0..p).flat_map(|i| (i + 1..p).map(move |j| (i, j))).collect();
    let entries: Vec<(f64, usize)> = pairs
        .par_iter()
        .map(|&(i, j)| {
            let xy = paired(&cols[i], &cols[j]);
            let r = if xy.len() < 2 { f64::NAN } else { pearson(&xy) };
            (r, xy.len())
        })
        .collect();
    let mut values = Matrix::identity(p);
    let mut n_used = vec![vec![0; p]; p];
    let mut undefined = Vec::new();
    for (i, col) in cols.iter().enumerate() {
        n_used[i][i] = col.iter().flatten().count();
    }
    for (&(i, j), &(r, n)) in pairs.iter().zip(&entries) {
        values[(i, j)] = r;
        values[(j, i)] = r;
        n_used[i][j] = n;
        n_used[j][i] = n;
        if !r.is_finite() {
            undefined.push((kept[i].clone(), kept[j].clone()));
        }
    }
    Ok(CorrelationMatrix { question_ids: kept, values, n_used, excluded, undefined })
}

/// Population covariance matrix (divisor n, as `princomp` uses).
pub fn covariance_matrix(records: &[RespondentRecord], question_ids: &[&str]) -> Result<Matrix, ReductionError> {
    if records.len() < 2 {
        return Err(ReductionError::TooFewRecords(records.len()));
    }
    let cols: Vec<_> = question_ids.iter().map(|id| column(records, id)).collect();
    let p = cols.len();
    let mut m = Matrix::zeros(p, p);
    for i in 0..p {
        for j in i..p {
            let xy = paired(&cols[i], &cols[j]);
            let c = if xy.len() < 2 { f64::NAN } else { covariance(&xy) };
            m[(i, j)] = c;
            m[(j, i)] = c;
        }
    }
    Ok(m)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrelatedPair {
    pub a: String,
    pub b: String,
    pub r: f64,
}

/// Pairs with |r| strictly above `threshold`, sorted by |r| descending (ties
/// in matrix order).
pub fn high_correlation_pairs(m: &CorrelationMatrix, threshold: f64) -> Vec<CorrelatedPair> {
    let p = m.question_ids.len();
    let mut out = Vec::new();
    for i in 0..p {
        for j in i + 1..p {
            let r = m.values[(i, j)];
            if r.is_finite() && r.abs() > threshold {
                out.push((i, j, r));
            }
        }
    }
    out.sort_by(|x, y| y.2.abs().total_cmp(&x.2.abs()).then((x.0, x.1).cmp(&(y.0, y.1))));
    out.into_iter()
        .map(|(i, j, r)| CorrelatedPair { a: m.question_ids[i].clone(), b: m.question_ids[j].clone(), r })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrunePolicy {
    pub drop_threshold: f64,
    /// When set, exactly these questions are dropped and the threshold rule
    /// is not applied.
    pub manual_drop: Option<Vec<String>>,
}

impl Default for PrunePolicy {
    fn default() -> Self {
        PrunePolicy { drop_threshold: 0.5, manual_drop: None }
    }
}

/// Chooses questions to drop for multicollinearity. For each pair at or
/// above the drop threshold (strongest first) whose members are both still
/// present, the member with the larger mean |r| to all other questions goes;
/// on equal means the later question in matrix order goes.
pub fn prune_collinear(pairs: &[CorrelatedPair], m: &CorrelationMatrix, policy: &PrunePolicy) -> Vec<String> {
    if let Some(manual) = &policy.manual_drop {
        return manual.clone();
    }
    let mut dropped: Vec<String> = Vec::new();
    for pair in pairs.iter().filter(|p| p.r.abs() >= policy.drop_threshold) {
        if dropped.contains(&pair.a) || dropped.contains(&pair.b) {
            continue;
        }
        let (Some(ia), Some(ib)) = (m.index(&pair.a), m.index(&pair.b)) else { continue };
        let (ma, mb) = (m.mean_abs_to_others(ia), m.mean_abs_to_others(ib));
        let victim = if ma > mb || (ma == mb && ia > ib) { &pair.a } else { &pair.b };
        dropped.push(victim.clone());
    }
    dropped
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PcaBasis {
    #[default]
    Correlation,
    Covariance,
}

/// Full eigen-decomposition of the analysis matrix.
pub fn pca(
    records: &[RespondentRecord],
    question_ids: &[&str],
    basis: PcaBasis,
) -> Result<(Matrix, SymmetricEigen), ReductionError> {
    if question_ids.len() < 2 {
        return Err(ReductionError::TooFewQuestions(question_ids.len()));
    }
    let m = match basis {
        PcaBasis::Correlation => {
            let c = correlation_matrix(records, question_ids)?;
            if !c.undefined.is_empty() {
                return Err(ReductionError::UndefinedEntries(c.undefined));
            }
            if !c.excluded.is_empty() {
                return Err(ReductionError::UndefinedEntries(
                    c.excluded.iter().map(|q| (q.clone(), q.clone())).collect(),
                ));
            }
            c.values
        }
        PcaBasis::Covariance => covariance_matrix(records, question_ids)?,
    };
    let eig = symmetric_eigen(&m)?;
    Ok((m, eig))
}

/// Number of eigenvalues strictly greater than one.
pub fn kaiser_retain(eigenvalues: &[f64]) -> usize {
    eigenvalues.iter().filter(|&&v| v > 1.0).count()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VarimaxOptions {
    pub max_iter: usize,
    pub tol: f64,
    /// Kaiser row normalization before rotating.
    pub normalize: bool,
}

impl Default for VarimaxOptions {
    fn default() -> Self {
        VarimaxOptions { max_iter: 1000, tol: 1e-8, normalize: true }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VarimaxResult {
    pub rotated: Matrix,
    pub rotation: Matrix,
    pub iterations: usize,
    pub converged: bool,
    /// Criterion after each sweep, starting with the unrotated value.
    pub criterion: Vec<f64>,
}

/// Raw Varimax criterion: sum over factors of the variance of squared loadings.
pub fn varimax_criterion(loadings: &Matrix) -> f64 {
    let p = loadings.nrows() as f64;
    (0..loadings.ncols())
        .map(|c| {
            let sq: Vec<f64> = (0..loadings.nrows()).map(|r| loadings[(r, c)].powi(2)).collect();
            let m1 = sq.iter().sum::<f64>() / p;
            let m2 = sq.iter().map(|x| x * x).sum::<f64>() / p;
            m2 - m1 * m1
        })
        .sum()
}

/// Orthogonal Varimax rotation by sweeps of pairwise planar rotations. Each
/// planar step is the closed-form optimum for its factor pair, so the
/// criterion never decreases.
pub fn varimax(loadings: &Matrix, opts: &VarimaxOptions) -> VarimaxResult {
    let (p, k) = (loadings.nrows(), loadings.ncols());
    if k < 2 {
        return VarimaxResult {
            rotated: loadings.clone(),
            rotation: Matrix::identity(k),
            iterations: 0,
            converged: true,
            criterion: vec![varimax_criterion(loadings)],
        };
    }
    let weights: Vec<f64> = if opts.normalize {
        loadings.row_sums_of_squares().into_iter().map(|h| if h > 0.0 { h.sqrt() } else { 1.0 }).collect()
    } else {
        vec![1.0; p]
    };
    let mut work = loadings.clone();
    for r in 0..p {
        for c in 0..k {
            work[(r, c)] /= weights[r];
        }
    }
    let mut rotation = Matrix::identity(k);
    let mut criterion = vec![varimax_criterion(&work)];
    let pf = p as f64;
    let mut converged = false;
    let mut iterations = 0;
    while iterations < opts.max_iter {
        iterations += 1;
        for a in 0..k {
            for b in a + 1..k {
                let (mut sa, mut sb, mut sc, mut sd) = (0.0, 0.0, 0.0, 0.0);
                for r in 0..p {
                    let x = work[(r, a)];
                    let y = work[(r, b)];
                    let u = x * x - y * y;
                    let v = 2.0 * x * y;
                    sa += u;
                    sb += v;
                    sc += u * u - v * v;
                    sd += 2.0 * u * v;
                }
                let num = sd - 2.0 * sa * sb / pf;
                let den = sc - (sa * sa - sb * sb) / pf;
                let phi = num.atan2(den) / 4.0;
                if phi == 0.0 {
                    continue;
                }
                let (s, c) = phi.sin_cos();
                for r in 0..p {
                    let x = work[(r, a)];
                    let y = work[(r, b)];
                    work[(r, a)] = c * x + s * y;
                    work[(r, b)] = -s * x + c * y;
                }
                for r in 0..k {
                    let x = rotation[(r, a)];
                    let y = rotation[(r, b)];
                    rotation[(r, a)] = c * x + s * y;
                    rotation[(r, b)] = -s * x + c * y;
                }
            }
        }
        let v = varimax_criterion(&work);
        let gain = v - criterion.last().copied().unwrap_or(0.0);
        criterion.push(v);
        if gain < opts.tol {
            converged = true;
            break;
        }
    }
    let rotated = loadings.matmul(&rotation);
    VarimaxResult { rotated, rotation, iterations, converged, criterion }
}

/// Retains a question iff some factor loads on it with |loading| >= threshold.
pub fn loading_filter(rotated: &Matrix, question_ids: &[String], threshold: f64) -> (Vec<String>, Vec<String>) {
    let mut retained = Vec::new();
    let mut dropped = Vec::new();
    for (r, id) in question_ids.iter().enumerate() {
        if rotated.row(r).iter().any(|x| x.abs() >= threshold) {
            retained.push(id.clone());
        } else {
            dropped.push(id.clone());
        }
    }
    (retained, dropped)
}

/// How component loadings are scaled before rotation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LoadingScale {
    /// Unit-length eigenvectors (what `princomp(...)$loadings` reports).
    #[default]
    Eigenvector,
    /// Eigenvectors scaled by sqrt(eigenvalue): correlations between
    /// questions and components under the correlation basis.
    SqrtEigenvalue,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ReductionConfig {
    /// Candidate questions; all schema questions when absent.
    pub questions: Option<Vec<String>>,
    pub correlation_threshold: f64,
    pub drop_threshold: f64,
    pub manual_drop: Option<Vec<String>>,
    pub basis: PcaBasis,
    pub loading_scale: LoadingScale,
    pub loading_threshold: f64,
    pub varimax_max_iter: usize,
    pub varimax_tol: f64,
    pub varimax_normalize: bool,
}

impl ReductionConfig {
    pub fn from_toml_str(src: &str) -> Result<Self, ReductionError> {
        toml::from_str(src).map_err(|e: toml::de::Error| ReductionError::Config(e.message().to_string()))
    }
}

impl Default for ReductionConfig {
    fn default() -> Self {
        ReductionConfig {
            questions: None,
            correlation_threshold: 0.2,
            drop_threshold: 0.5,
            manual_drop: None,
            basis: PcaBasis::Correlation,
            loading_scale: LoadingScale::Eigenvector,
            loading_threshold: 0.30,
            varimax_max_iter: 1000,
            varimax_tol: 1e-8,
            varimax_normalize: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FactorModel {
    pub basis: PcaBasis,
    pub loading_scale: LoadingScale,
    pub loading_threshold: f64,
    /// Questions entering the PCA, in order.
    pub question_ids: Vec<String>,
    pub eigenvalues: Vec<f64>,
    pub components: Matrix,
    pub kaiser_count: usize,
    pub n_retained: usize,
    pub unrotated: Matrix,
    pub rotated: Matrix,
    pub rotation: Matrix,
    pub varimax_converged: bool,
    pub varimax_iterations: usize,
    pub ss_loadings: Vec<f64>,
    pub proportion_var: Vec<f64>,
    pub cumulative_var: Vec<f64>,
    pub retained_questions: Vec<String>,
    pub dropped_questions: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReductionOutcome {
    pub correlation: CorrelationMatrix,
    pub pairs: Vec<CorrelatedPair>,
    pub pruned: Vec<String>,
    pub model: FactorModel,
    pub warnings: Vec<String>,
}

impl ReductionOutcome {
    pub fn retained(&self) -> &[String] {
        &self.model.retained_questions
    }
}

/// Full reduction: correlate, prune, decompose, retain, rotate, filter.
pub fn reduce(
    records: &[RespondentRecord],
    candidates: &[&str],
    cfg: &ReductionConfig,
) -> Result<ReductionOutcome, ReductionError> {
    let mut warnings = Vec::new();
    let correlation = correlation_matrix(records, candidates)?;
    for q in &correlation.excluded {
        warnings.push(format!("{q}: zero variance, excluded"));
    }
    if !correlation.undefined.is_empty() {
        return Err(ReductionError::UndefinedEntries(correlation.undefined));
    }
    let pairs = high_correlation_pairs(&correlation, cfg.correlation_threshold);
    let policy = PrunePolicy { drop_threshold: cfg.drop_threshold, manual_drop: cfg.manual_drop.clone() };
    let pruned = prune_collinear(&pairs, &correlation, &policy);
    for q in &pruned {
        if correlation.index(q).is_none() && !correlation.excluded.contains(q) {
            return Err(ReductionError::UnknownQuestion(q.clone()));
        }
    }
    let pruned_set: BTreeSet<&str> = pruned.iter().map(String::as_str).collect();
    let analysed: Vec<&str> =
        correlation.question_ids.iter().map(String::as_str).filter(|q| !pruned_set.contains(q)).collect();
    let (matrix, eig) = pca(records, &analysed, cfg.basis)?;
    let trace = matrix.trace();

    let kaiser_count = kaiser_retain(&eig.values);
    let n_retained = if kaiser_count == 0 {
        warnings.push("no eigenvalue exceeds 1; retaining a single factor".into());
        1
    } else {
        kaiser_count
    };
    let p = analysed.len();
    let mut unrotated = eig.vectors.leading_columns(n_retained);
    if cfg.loading_scale == LoadingScale::SqrtEigenvalue {
        for c in 0..n_retained {
            let s = eig.values[c].max(0.0).sqrt();
            for r in 0..p {
                unrotated[(r, c)] *= s;
            }
        }
    }
    let vm = varimax(
        &unrotated,
        &VarimaxOptions { max_iter: cfg.varimax_max_iter, tol: cfg.varimax_tol, normalize: cfg.varimax_normalize },
    );
    if !vm.converged {
        warnings.push(format!("varimax stopped after {} sweeps without converging", vm.iterations));
    }
    let ss_loadings = vm.rotated.column_sums_of_squares();
    // Proportions follow R's loadings printout: SS / number of variables.
    let denom = match cfg.basis {
        PcaBasis::Correlation => p as f64,
        PcaBasis::Covariance if cfg.loading_scale == LoadingScale::SqrtEigenvalue => trace,
        PcaBasis::Covariance => p as f64,
    };
    let proportion_var: Vec<f64> = ss_loadings.iter().map(|s| s / denom).collect();
    let cumulative_var = proportion_var
        .iter()
        .scan(0.0, |acc, x| {
            *acc += x;
            Some(*acc)
        })
        .collect();
    let question_ids: Vec<String> = analysed.iter().map(|s| s.to_string()).collect();
    let (retained_questions, dropped_questions) = loading_filter(&vm.rotated, &question_ids, cfg.loading_threshold);
    for w in &warnings {
        log::warn!("{w}");
    }
    Ok(ReductionOutcome {
        correlation,
        pairs,
        pruned,
        warnings,
        model: FactorModel {
            basis: cfg.basis,
            loading_scale: cfg.loading_scale,
            loading_threshold: cfg.loading_threshold,
            question_ids,
            eigenvalues: eig.values,
            components: eig.vectors,
            kaiser_count,
            n_retained,
            unrotated,
            rotated: vm.rotated,
            rotation: vm.rotation,
            varimax_converged: vm.converged,
            varimax_iterations: vm.iterations,
            ss_loadings,
            proportion_var,
            cumulative_var,
            retained_questions,
            dropped_questions,
        },
    })
}

/// Correlated-pair listing: `Question_i  Question_j  Correlation`.
pub fn render_pairs_table(pairs: &[CorrelatedPair]) -> String {
    let wa = pairs.iter().map(|p| p.a.len()).max().unwrap_or(0).max("Question_i".len());
    let wb = pairs.iter().map(|p| p.b.len()).max().unwrap_or(0).max("Question_j".len());
    let mut s = String::new();
    let _ = writeln!(s, "{:<wa$}  {:<wb$}  {:>11}", "Question_i", "Question_j", "Correlation");
    for p in pairs {
        let _ = writeln!(s, "{:<wa$}  {:<wb$}  {:>11.6}", p.a, p.b, p.r);
    }
    s
}

const CELL: usize = 9;

/// Sparse loading table: one column per retained factor, three decimals,
/// blank cells where |loading| is below the threshold, followed by the
/// SS loadings, proportion and cumulative variance rows.
pub fn render_loading_table(model: &FactorModel) -> String {
    let k = model.n_retained;
    let footer = ["SS loadings", "Proportion var.", "Cumulative var."];
    let wl = model
        .question_ids
        .iter()
        .map(String::len)
        .chain(footer.iter().map(|f| f.len()))
        .max()
        .unwrap_or(0)
        .max("Loadings".len());
    let mut s = String::new();
    let _ = write!(s, "{:<wl$}", "Loadings");
    for c in 0..k {
        let _ = write!(s, " {:>CELL$}", format!("Factor {}", c + 1));
    }
    s.push('\n');
    for (r, id) in model.question_ids.iter().enumerate() {
        let mut line = format!("{id:<wl$}");
        for c in 0..k {
            let v = model.rotated[(r, c)];
            if v.abs() >= model.loading_threshold {
                let _ = write!(line, " {v:>CELL$.3}");
            } else {
                let _ = write!(line, " {:>CELL$}", "");
            }
        }
        s.push_str(line.trim_end());
        s.push('\n');
    }
    for (name, row) in footer.iter().zip([&model.ss_loadings, &model.proportion_var, &model.cumulative_var]) {
        let _ = write!(s, "{name:<wl$}");
        for v in row.iter().take(k) {
            let _ = write!(s, " {v:>CELL$.3}");
        }
        s.push('\n');
    }
    s
}
