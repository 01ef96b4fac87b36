//! k-means (Lloyd), k-modes (Huang, simple matching) and agglomerative
//! hierarchical clustering over integer-coded answers.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::schema::RespondentRecord;

#[derive(Debug, Error)]
pub enum ClusterError {
    #[error("k = {k} is out of range for {n} records")]
    BadK { k: usize, n: usize },
    #[error("vectors differ in length ({0} vs {1})")]
    LengthMismatch(usize, usize),
    #[error("respondent {id} has no answer for {question}")]
    MissingAnswer { id: String, question: String },
    #[error("hierarchical clustering needs at least 2 records, got {0}")]
    TooFewForHclust(usize),
    #[error("unknown method {0:?}")]
    UnknownMethod(String),
    #[error("unknown metric {0:?}")]
    UnknownMetric(String),
    #[error("data matrix is empty")]
    Empty,
}

/// Respondents by retained questions, all cells present.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DataMatrix {
    pub respondent_ids: Vec<String>,
    pub question_ids: Vec<String>,
    pub codes: Vec<Vec<i64>>,
}

impl DataMatrix {
    pub fn from_records(records: &[RespondentRecord], question_ids: &[String]) -> Result<Self, ClusterError> {
        let mut codes = Vec::with_capacity(records.len());
        for r in records {
            let row = question_ids
                .iter()
                .map(|q| {
                    r.answer(q)
                        .ok_or_else(|| ClusterError::MissingAnswer { id: r.respondent_id.clone(), question: q.clone() })
                })
                .collect::<Result<Vec<_>, _>>()?;
            codes.push(row);
        }
        Ok(DataMatrix {
            respondent_ids: records.iter().map(|r| r.respondent_id.clone()).collect(),
            question_ids: question_ids.to_vec(),
            codes,
        })
    }

    /// Unlabelled matrix; ids are `r1..rn`, questions `q1..qp`.
    pub fn from_codes(codes: Vec<Vec<i64>>) -> Self {
        let p = codes.first().map_or(0, Vec::len);
        DataMatrix {
            respondent_ids: (1..=codes.len()).map(|i| format!("r{i}")).collect(),
            question_ids: (1..=p).map(|j| format!("q{j}")).collect(),
            codes,
        }
    }

    pub fn n(&self) -> usize {
        self.codes.len()
    }

    pub fn p(&self) -> usize {
        self.question_ids.len()
    }

    pub fn real_rows(&self) -> Vec<Vec<f64>> {
        self.codes.iter().map(|r| r.iter().map(|&c| c as f64).collect()).collect()
    }

    /// Rows centred and scaled to unit (population) variance per column;
    /// constant columns are centred only.
    pub fn standardized_rows(&self) -> Vec<Vec<f64>> {
        let mut rows = self.real_rows();
        let n = rows.len() as f64;
        for j in 0..self.p() {
            let mean = rows.iter().map(|r| r[j]).sum::<f64>() / n;
            let sd = (rows.iter().map(|r| (r[j] - mean).powi(2)).sum::<f64>() / n).sqrt();
            for r in rows.iter_mut() {
                r[j] -= mean;
                if sd > 0.0 {
                    r[j] /= sd;
                }
            }
        }
        rows
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    Kmeans,
    Kmodes,
    HclustComplete,
    HclustSingle,
    HclustAverage,
}

impl Method {
    pub const ALL: [Method; 5] =
        [Method::Kmeans, Method::Kmodes, Method::HclustComplete, Method::HclustSingle, Method::HclustAverage];

    pub fn as_str(self) -> &'static str {
        match self {
            Method::Kmeans => "kmeans",
            Method::Kmodes => "kmodes",
            Method::HclustComplete => "hclust-complete",
            Method::HclustSingle => "hclust-single",
            Method::HclustAverage => "hclust-average",
        }
    }

    pub fn linkage(self) -> Option<Linkage> {
        match self {
            Method::HclustComplete => Some(Linkage::Complete),
            Method::HclustSingle => Some(Linkage::Single),
            Method::HclustAverage => Some(Linkage::Average),
            _ => None,
        }
    }

    pub fn is_seeded(self) -> bool {
        matches!(self, Method::Kmeans | Method::Kmodes)
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Method {
    type Err = ClusterError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Method::ALL.into_iter().find(|m| m.as_str() == s).ok_or_else(|| ClusterError::UnknownMethod(s.into()))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "values", rename_all = "kebab-case")]
pub enum Centers {
    Means(Vec<Vec<f64>>),
    Modes(Vec<Vec<i64>>),
    None,
}

/// A fitted partition. `assignments[i]` is the 1-based cluster of
/// `respondent_ids[i]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterModel {
    pub method: Method,
    pub k: usize,
    pub respondent_ids: Vec<String>,
    pub question_ids: Vec<String>,
    pub assignments: Vec<usize>,
    pub centers: Centers,
    pub iterations: usize,
    pub converged: bool,
    pub seed: Option<u64>,
    pub objective: Option<f64>,
    pub standardized: bool,
    /// Objective after each iteration (k-means SSE, k-modes cost).
    pub history: Vec<f64>,
    pub warnings: Vec<String>,
    pub dendrogram: Option<Dendrogram>,
}

impl ClusterModel {
    /// Number of clusters actually present.
    pub fn n_clusters(&self) -> usize {
        self.assignments.iter().copied().max().unwrap_or(0)
    }

    pub fn sizes(&self) -> Vec<usize> {
        let mut s = vec![0; self.n_clusters()];
        for &a in &self.assignments {
            s[a - 1] += 1;
        }
        s
    }

    pub fn assignment_map(&self) -> BTreeMap<&str, usize> {
        self.respondent_ids.iter().map(String::as_str).zip(self.assignments.iter().copied()).collect()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("model serializes")
    }

    pub fn from_json(s: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(s)
    }
}

pub fn squared_euclidean(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum()
}

pub fn simple_matching_distance(a: &[i64], b: &[i64]) -> Result<usize, ClusterError> {
    if a.len() != b.len() {
        return Err(ClusterError::LengthMismatch(a.len(), b.len()));
    }
    Ok(a.iter().zip(b).filter(|(x, y)| x != y).count())
}

fn check_k(k: usize, n: usize) -> Result<(), ClusterError> {
    if k == 0 || k > n {
        return Err(ClusterError::BadK { k, n });
    }
    Ok(())
}

/// Index of the minimum; the first one on ties.
fn argmin(values: impl Iterator<Item = f64>) -> usize {
    let mut best = (0, f64::INFINITY);
    for (i, v) in values.enumerate() {
        if v < best.1 {
            best = (i, v);
        }
    }
    best.0
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KMeansOptions {
    pub max_iter: usize,
    pub standardize: bool,
}

impl Default for KMeansOptions {
    fn default() -> Self {
        KMeansOptions { max_iter: 300, standardize: false }
    }
}

pub fn sse(rows: &[Vec<f64>], centers: &[Vec<f64>], assignments: &[usize]) -> f64 {
    rows.iter().zip(assignments).map(|(r, &a)| squared_euclidean(r, &centers[a])).sum()
}

fn means(rows: &[Vec<f64>], assignments: &[usize], k: usize) -> (Vec<Vec<f64>>, Vec<usize>) {
    let p = rows.first().map_or(0, Vec::len);
    let mut sums = vec![vec![0.0; p]; k];
    let mut counts = vec![0usize; k];
    for (r, &a) in rows.iter().zip(assignments) {
        counts[a] += 1;
        for (s, x) in sums[a].iter_mut().zip(r) {
            *s += x;
        }
    }
    for (s, &c) in sums.iter_mut().zip(&counts) {
        if c > 0 {
            for x in s.iter_mut() {
                *x /= c as f64;
            }
        }
    }
    (sums, counts)
}

/// Moves the point farthest from its own center (among clusters with more
/// than one member) into each empty cluster.
fn repair_empty(rows: &[Vec<f64>], assignments: &mut [usize], centers: &mut [Vec<f64>], counts: &mut [usize]) -> usize {
    let mut repaired = 0;
    while let Some(empty) = counts.iter().position(|&c| c == 0) {
        let far = (0..rows.len())
            .filter(|&i| counts[assignments[i]] > 1)
            .map(|i| (i, squared_euclidean(&rows[i], &centers[assignments[i]])))
            .fold(None::<(usize, f64)>, |best, (i, d)| match best {
                Some((_, bd)) if bd >= d => best,
                _ => Some((i, d)),
            });
        let Some((i, _)) = far else { break };
        counts[assignments[i]] -= 1;
        assignments[i] = empty;
        counts[empty] = 1;
        centers[empty] = rows[i].clone();
        repaired += 1;
    }
    repaired
}

/// Lloyd iteration from `k` seeded distinct-index starting centers.
///
/// A point changes cluster only when another center is strictly closer than
/// its current one, which keeps the SSE strictly decreasing on every
/// iteration that moves a point.
pub fn kmeans(data: &DataMatrix, k: usize, seed: u64, opts: &KMeansOptions) -> Result<ClusterModel, ClusterError> {
    let n = data.n();
    check_k(k, n)?;
    let rows = if opts.standardize { data.standardized_rows() } else { data.real_rows() };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut init: Vec<usize> = sample(&mut rng, n, k).into_vec();
    init.sort_unstable();
    let mut centers: Vec<Vec<f64>> = init.iter().map(|&i| rows[i].clone()).collect();
    let mut assignments: Vec<usize> = rows.iter().map(|r| argmin(centers.iter().map(|c| squared_euclidean(r, c)))).collect();
    let mut warnings = Vec::new();
    let mut history = Vec::new();
    let mut iterations = 0;
    let mut converged = false;
    while iterations < opts.max_iter {
        iterations += 1;
        let (mut new_centers, mut counts) = means(&rows, &assignments, k);
        // Keep the old center for an empty cluster until it is repaired.
        for j in 0..k {
            if counts[j] == 0 {
                new_centers[j] = centers[j].clone();
            }
        }
        let repaired = repair_empty(&rows, &mut assignments, &mut new_centers, &mut counts);
        if repaired > 0 {
            warnings.push(format!("iteration {iterations}: re-seeded {repaired} empty cluster(s)"));
            let (c, _) = means(&rows, &assignments, k);
            new_centers = c;
        }
        centers = new_centers;
        history.push(sse(&rows, &centers, &assignments));
        let mut moved = false;
        for (i, r) in rows.iter().enumerate() {
            let cur = assignments[i];
            let dcur = squared_euclidean(r, &centers[cur]);
            let best = argmin(centers.iter().map(|c| squared_euclidean(r, c)));
            if best != cur && squared_euclidean(r, &centers[best]) < dcur {
                assignments[i] = best;
                moved = true;
            }
        }
        if !moved {
            converged = true;
            break;
        }
    }
    if !converged {
        // Centers must describe the final assignment.
        centers = means(&rows, &assignments, k).0;
        warnings.push(format!("k-means stopped at max_iter = {} without converging", opts.max_iter));
    }
    let objective = sse(&rows, &centers, &assignments);
    for w in &warnings {
        log::warn!("{w}");
    }
    Ok(ClusterModel {
        method: Method::Kmeans,
        k,
        respondent_ids: data.respondent_ids.clone(),
        question_ids: data.question_ids.clone(),
        assignments: assignments.iter().map(|a| a + 1).collect(),
        centers: Centers::Means(centers),
        iterations,
        converged,
        seed: Some(seed),
        objective: Some(objective),
        standardized: opts.standardize,
        history,
        warnings,
        dendrogram: None,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ModesInit {
    /// k distinct records sampled by seed.
    #[default]
    Distinct,
    /// Huang's frequency-based initialization.
    Huang,
}

impl FromStr for ModesInit {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "distinct" => Ok(ModesInit::Distinct),
            "huang" => Ok(ModesInit::Huang),
            _ => Err(format!("unknown init {s:?} (expected distinct or huang)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KModesOptions {
    pub max_iter: usize,
    pub init: ModesInit,
}

impl Default for KModesOptions {
    fn default() -> Self {
        KModesOptions { max_iter: 100, init: ModesInit::Distinct }
    }
}

fn mismatch(a: &[i64], b: &[i64]) -> usize {
    a.iter().zip(b).filter(|(x, y)| x != y).count()
}

/// Coordinate-wise most frequent code; ties go to the lowest code.
pub fn column_modes(rows: &[&[i64]]) -> Vec<i64> {
    let p = rows.first().map_or(0, |r| r.len());
    (0..p)
        .map(|j| {
            let mut freq: BTreeMap<i64, usize> = BTreeMap::new();
            for r in rows {
                *freq.entry(r[j]).or_default() += 1;
            }
            let mut best = (i64::MAX, 0);
            for (code, c) in freq {
                if c > best.1 {
                    best = (code, c);
                }
            }
            best.0
        })
        .collect()
}

fn distinct_init(codes: &[Vec<i64>], k: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<i64>> {
    let mut uniq: Vec<&Vec<i64>> = Vec::new();
    for r in codes {
        if !uniq.contains(&r) {
            uniq.push(r);
        }
    }
    let m = k.min(uniq.len());
    let mut idx = sample(rng, uniq.len(), m).into_vec();
    idx.sort_unstable();
    let mut modes: Vec<Vec<i64>> = idx.into_iter().map(|i| uniq[i].clone()).collect();
    // Fewer distinct records than k: pad with duplicates so that the
    // assignment step leaves those modes without members.
    while modes.len() < k {
        modes.push(modes[modes.len() % m].clone());
    }
    modes
}

/// Huang's second initialization: for each cluster pick the most frequent
/// code per attribute in rotating frequency order, then replace each
/// candidate by its nearest distinct record.
fn huang_init(codes: &[Vec<i64>], k: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<i64>> {
    let p = codes[0].len();
    let mut by_freq: Vec<Vec<i64>> = Vec::with_capacity(p);
    for j in 0..p {
        let mut freq: BTreeMap<i64, usize> = BTreeMap::new();
        for r in codes {
            *freq.entry(r[j]).or_default() += 1;
        }
        let mut v: Vec<(i64, usize)> = freq.into_iter().collect();
        v.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(&b.0)));
        by_freq.push(v.into_iter().map(|x| x.0).collect());
    }
    let mut modes: Vec<Vec<i64>> = Vec::with_capacity(k);
    let mut used = vec![false; codes.len()];
    for c in 0..k {
        let cand: Vec<i64> = (0..p).map(|j| by_freq[j][c % by_freq[j].len()]).collect();
        let pick = (0..codes.len())
            .filter(|&i| !used[i] && !modes.contains(&codes[i]))
            .min_by_key(|&i| (mismatch(&codes[i], &cand), i));
        match pick {
            Some(i) => {
                used[i] = true;
                modes.push(codes[i].clone());
            }
            None => modes.push(distinct_init(codes, 1, rng).remove(0)),
        }
    }
    modes
}

pub fn kmodes_cost(codes: &[Vec<i64>], modes: &[Vec<i64>], assignments: &[usize]) -> usize {
    codes.iter().zip(assignments).map(|(r, &a)| mismatch(r, &modes[a])).sum()
}

/// Huang k-modes with simple-matching dissimilarity. Clusters that lose all
/// members are dropped and reported in the warnings, so the model can hold
/// fewer than `k` clusters.
pub fn kmodes(data: &DataMatrix, k: usize, seed: u64, opts: &KModesOptions) -> Result<ClusterModel, ClusterError> {
    let n = data.n();
    check_k(k, n)?;
    if data.p() == 0 {
        return Err(ClusterError::Empty);
    }
    let codes = &data.codes;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut modes = match opts.init {
        ModesInit::Distinct => distinct_init(codes, k, &mut rng),
        ModesInit::Huang => huang_init(codes, k, &mut rng),
    };
    let nearest = |r: &[i64], modes: &[Vec<i64>]| argmin(modes.iter().map(|m| mismatch(r, m) as f64));
    let mut assignments: Vec<usize> = codes.iter().map(|r| nearest(r, &modes)).collect();
    let mut history = vec![kmodes_cost(codes, &modes, &assignments) as f64];
    let mut iterations = 0;
    let mut converged = false;
    while iterations < opts.max_iter {
        iterations += 1;
        for (c, mode) in modes.iter_mut().enumerate() {
            let members: Vec<&[i64]> =
                codes.iter().zip(&assignments).filter(|(_, &a)| a == c).map(|(r, _)| r.as_slice()).collect();
            if !members.is_empty() {
                *mode = column_modes(&members);
            }
        }
        let mut moved = false;
        for (i, r) in codes.iter().enumerate() {
            let cur = assignments[i];
            let best = nearest(r, &modes);
            if best != cur && mismatch(r, &modes[best]) < mismatch(r, &modes[cur]) {
                assignments[i] = best;
                moved = true;
            }
        }
        history.push(kmodes_cost(codes, &modes, &assignments) as f64);
        if !moved {
            converged = true;
            break;
        }
    }
    // Final modes describe the final assignment.
    for (c, mode) in modes.iter_mut().enumerate() {
        let members: Vec<&[i64]> =
            codes.iter().zip(&assignments).filter(|(_, &a)| a == c).map(|(r, _)| r.as_slice()).collect();
        if !members.is_empty() {
            *mode = column_modes(&members);
        }
    }
    let mut warnings = Vec::new();
    if !converged {
        warnings.push(format!("k-modes stopped at max_iter = {} without converging", opts.max_iter));
    }
    let mut remap = vec![usize::MAX; k];
    let mut kept_modes = Vec::new();
    for (c, mode) in modes.into_iter().enumerate() {
        if assignments.contains(&c) {
            remap[c] = kept_modes.len();
            kept_modes.push(mode);
        }
    }
    if kept_modes.len() < k {
        warnings.push(format!(
            "{} of {k} modes have no closest record; returning {} clusters",
            k - kept_modes.len(),
            kept_modes.len()
        ));
    }
    let assignments: Vec<usize> = assignments.iter().map(|&a| remap[a]).collect();
    let cost = kmodes_cost(codes, &kept_modes, &assignments);
    for w in &warnings {
        log::warn!("{w}");
    }
    Ok(ClusterModel {
        method: Method::Kmodes,
        k,
        respondent_ids: data.respondent_ids.clone(),
        question_ids: data.question_ids.clone(),
        assignments: assignments.iter().map(|a| a + 1).collect(),
        centers: Centers::Modes(kept_modes),
        iterations,
        converged,
        seed: Some(seed),
        objective: Some(cost as f64),
        standardized: false,
        history,
        warnings,
        dendrogram: None,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Linkage {
    Complete,
    Single,
    Average,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Metric {
    #[default]
    Euclidean,
    SimpleMatching,
}

impl FromStr for Metric {
    type Err = ClusterError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "euclidean" => Ok(Metric::Euclidean),
            "simple-matching" => Ok(Metric::SimpleMatching),
            _ => Err(ClusterError::UnknownMetric(s.into())),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Merge {
    pub left: usize,
    pub right: usize,
    pub height: f64,
    pub size: usize,
}

/// Leaves are nodes `0..n`; the merge at step `s` creates node `n + s`.
/// Within a merge `left < right`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dendrogram {
    pub n_leaves: usize,
    pub merges: Vec<Merge>,
    pub linkage: Linkage,
    pub metric: Metric,
}

/// Two linkage values closer than this (relative) are treated as equal, so
/// tie-breaking does not depend on floating-point summation order.
pub const TIE_EPS: f64 = 1e-9;

pub fn nearly_equal(a: f64, b: f64) -> bool {
    (a - b).abs() <= TIE_EPS * a.abs().max(b.abs()).max(1.0)
}

/// `(d, lo, hi)` strictly precedes `best` in merge order.
pub fn merge_precedes(d: f64, pair: (usize, usize), best: Option<(f64, (usize, usize))>) -> bool {
    match best {
        None => true,
        Some((bd, bp)) => {
            if nearly_equal(d, bd) {
                pair < bp
            } else {
                d < bd
            }
        }
    }
}

pub fn pairwise_distances(data: &DataMatrix, metric: Metric) -> Vec<Vec<f64>> {
    let n = data.n();
    let rows = data.real_rows();
    let mut d = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in i + 1..n {
            let v = match metric {
                Metric::Euclidean => squared_euclidean(&rows[i], &rows[j]).sqrt(),
                Metric::SimpleMatching => mismatch(&data.codes[i], &data.codes[j]) as f64,
            };
            d[i][j] = v;
            d[j][i] = v;
        }
    }
    d
}

fn lance_williams(linkage: Linkage, d_ik: f64, d_jk: f64, n_i: usize, n_j: usize) -> f64 {
    match linkage {
        Linkage::Single => d_ik.min(d_jk),
        Linkage::Complete => d_ik.max(d_jk),
        Linkage::Average => (n_i as f64 * d_ik + n_j as f64 * d_jk) / (n_i + n_j) as f64,
    }
}

/// Agglomerative clustering over a precomputed distance matrix using
/// Lance-Williams updates and a per-cluster nearest-partner cache.
pub fn hclust_from_distances(dist: &[Vec<f64>], linkage: Linkage, metric: Metric) -> Result<Dendrogram, ClusterError> {
    let n = dist.len();
    if n < 2 {
        return Err(ClusterError::TooFewForHclust(n));
    }
    // Slot i holds the active cluster that currently owns row i of `d`.
    let mut d: Vec<Vec<f64>> = dist.to_vec();
    let mut node = (0..n).collect::<Vec<usize>>();
    let mut size = vec![1usize; n];
    let mut active = vec![true; n];
    // nn[i]: best partner among active slots with larger node id.
    let mut nn: Vec<Option<(f64, usize)>> = vec![None; n];
    let key = |a: usize, b: usize, node: &[usize]| {
        let (x, y) = (node[a], node[b]);
        if x < y {
            (x, y)
        } else {
            (y, x)
        }
    };
    let recompute = |i: usize, d: &[Vec<f64>], node: &[usize], active: &[bool]| -> Option<(f64, usize)> {
        let mut best: Option<(f64, (usize, usize))> = None;
        let mut slot = None;
        for j in 0..d.len() {
            if j == i || !active[j] || node[j] < node[i] {
                continue;
            }
            let pair = key(i, j, node);
            if merge_precedes(d[i][j], pair, best) {
                best = Some((d[i][j], pair));
                slot = Some(j);
            }
        }
        slot.map(|j| (d[i][j], j))
    };
    for i in 0..n {
        nn[i] = recompute(i, &d, &node, &active);
    }
    let mut merges = Vec::with_capacity(n - 1);
    for step in 0..n - 1 {
        let mut best: Option<(f64, (usize, usize))> = None;
        let mut best_slots = (0, 0);
        for i in 0..n {
            if !active[i] {
                continue;
            }
            if let Some((dv, j)) = nn[i] {
                let pair = key(i, j, &node);
                if merge_precedes(dv, pair, best) {
                    best = Some((dv, pair));
                    best_slots = (i, j);
                }
            }
        }
        let (height, (lo, hi)) = best.expect("an active pair exists");
        let (a, b) = best_slots;
        let (n_a, n_b) = (size[a], size[b]);
        for k in 0..n {
            if !active[k] || k == a || k == b {
                continue;
            }
            let v = lance_williams(linkage, d[a][k], d[b][k], n_a, n_b);
            d[a][k] = v;
            d[k][a] = v;
        }
        active[b] = false;
        node[a] = n + step;
        size[a] = n_a + n_b;
        merges.push(Merge { left: lo, right: hi, height, size: size[a] });
        // The merged cluster now has the largest node id, so it has no
        // partners of its own; others may need a refresh.
        nn[a] = None;
        nn[b] = None;
        for i in 0..n {
            if !active[i] || i == a {
                continue;
            }
            match nn[i] {
                Some((_, j)) if j == a || j == b => nn[i] = recompute(i, &d, &node, &active),
                Some((dv, j)) => {
                    let cand = d[i][a];
                    if merge_precedes(cand, key(i, a, &node), Some((dv, key(i, j, &node)))) {
                        nn[i] = Some((cand, a));
                    }
                }
                None => nn[i] = recompute(i, &d, &node, &active),
            }
        }
    }
    Ok(Dendrogram { n_leaves: n, merges, linkage, metric })
}

pub fn hclust(data: &DataMatrix, linkage: Linkage, metric: Metric) -> Result<Dendrogram, ClusterError> {
    if data.n() < 2 {
        return Err(ClusterError::TooFewForHclust(data.n()));
    }
    hclust_from_distances(&pairwise_distances(data, metric), linkage, metric)
}

/// Clusters after applying the first `n - k` merges. Labels are 1-based in
/// order of each cluster's smallest leaf.
pub fn cut_tree(d: &Dendrogram, k: usize) -> Result<Vec<usize>, ClusterError> {
    let n = d.n_leaves;
    check_k(k, n)?;
    let mut parent: Vec<usize> = (0..2 * n - 1).collect();
    fn find(parent: &mut [usize], mut x: usize) -> usize {
        while parent[x] != x {
            parent[x] = parent[parent[x]];
            x = parent[x];
        }
        x
    }
    for (s, m) in d.merges.iter().take(n - k).enumerate() {
        let id = n + s;
        let l = find(&mut parent, m.left);
        let r = find(&mut parent, m.right);
        parent[l] = id;
        parent[r] = id;
    }
    let mut label_of_root: BTreeMap<usize, usize> = BTreeMap::new();
    let mut out = Vec::with_capacity(n);
    for leaf in 0..n {
        let root = find(&mut parent, leaf);
        let next = label_of_root.len() + 1;
        out.push(*label_of_root.entry(root).or_insert(next));
    }
    Ok(out)
}

pub fn hclust_model(data: &DataMatrix, method: Method, k: usize, metric: Metric) -> Result<ClusterModel, ClusterError> {
    let linkage = method.linkage().ok_or_else(|| ClusterError::UnknownMethod(method.to_string()))?;
    check_k(k, data.n())?;
    let tree = hclust(data, linkage, metric)?;
    let assignments = cut_tree(&tree, k)?;
    Ok(ClusterModel {
        method,
        k,
        respondent_ids: data.respondent_ids.clone(),
        question_ids: data.question_ids.clone(),
        assignments,
        centers: Centers::None,
        iterations: tree.merges.len(),
        converged: true,
        seed: None,
        objective: None,
        standardized: false,
        history: Vec::new(),
        warnings: Vec::new(),
        dendrogram: Some(tree),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitOptions {
    pub kmeans: KMeansOptions,
    pub kmodes: KModesOptions,
    pub metric: Metric,
}

impl Default for FitOptions {
    fn default() -> Self {
        FitOptions { kmeans: KMeansOptions::default(), kmodes: KModesOptions::default(), metric: Metric::Euclidean }
    }
}

/// Dispatches to the method's fitting routine.
pub fn fit(data: &DataMatrix, method: Method, k: usize, seed: u64, opts: &FitOptions) -> Result<ClusterModel, ClusterError> {
    match method {
        Method::Kmeans => kmeans(data, k, seed, &opts.kmeans),
        Method::Kmodes => kmodes(data, k, seed, &opts.kmodes),
        _ => hclust_model(data, method, k, opts.metric),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn one_d(xs: &[i64]) -> DataMatrix {
        DataMatrix::from_codes(xs.iter().map(|&x| vec![x]).collect())
    }

    #[test]
    fn kmeans_two_groups() {
        let m = kmeans(&one_d(&[0, 0, 10, 10]), 2, 7, &KMeansOptions::default()).unwrap();
        assert_eq!(m.objective, Some(0.0));
        let Centers::Means(c) = &m.centers else { panic!() };
        let mut cs: Vec<f64> = c.iter().map(|v| v[0]).collect();
        cs.sort_by(f64::total_cmp);
        assert_eq!(cs, vec![0.0, 10.0]);
    }

    #[test]
    fn kmeans_k_equals_n_and_one() {
        let d = one_d(&[1, 4, 6, 9]);
        let m = kmeans(&d, 4, 1, &KMeansOptions::default()).unwrap();
        assert_eq!(m.objective, Some(0.0));
        let m = kmeans(&d, 1, 1, &KMeansOptions::default()).unwrap();
        // mean 5; squared deviations 16 + 1 + 1 + 16
        assert_eq!(m.objective, Some(34.0));
        assert!(kmeans(&d, 5, 1, &KMeansOptions::default()).is_err());
    }

    #[test]
    fn kmeans_repairs_empty_cluster() {
        // Identical starting centers leave cluster 2 empty after assignment.
        let d = one_d(&[0, 0, 0, 10]);
        for seed in 0..20 {
            let m = kmeans(&d, 2, seed, &KMeansOptions::default()).unwrap();
            assert_eq!(m.sizes().len(), 2, "seed {seed}");
            assert_eq!(m.objective, Some(0.0));
        }
    }

    #[test]
    fn kmeans_is_deterministic() {
        let d = DataMatrix::from_codes((0..40).map(|i| vec![i % 5, (i * 7) % 4, (i * 3) % 5]).collect());
        let a = kmeans(&d, 3, 42, &KMeansOptions::default()).unwrap();
        let b = kmeans(&d, 3, 42, &KMeansOptions::default()).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn matching_distance() {
        assert_eq!(simple_matching_distance(&[1, 2, 3], &[1, 2, 3]).unwrap(), 0);
        assert_eq!(simple_matching_distance(&[1, 2], &[2, 2]).unwrap(), 1);
        assert_eq!(simple_matching_distance(&[1, 1, 1, 1], &[2, 2, 2, 2]).unwrap(), 4);
        assert!(simple_matching_distance(&[1], &[1, 2]).is_err());
    }

    #[test]
    fn kmodes_small() {
        let d = DataMatrix::from_codes(vec![vec![1, 1], vec![1, 1], vec![2, 2]]);
        let m = kmodes(&d, 2, 3, &KModesOptions::default()).unwrap();
        assert_eq!(m.objective, Some(0.0));
        assert_eq!(m.assignments[0], m.assignments[1]);
        assert_ne!(m.assignments[0], m.assignments[2]);
    }

    #[test]
    fn kmodes_single_cluster_majority() {
        let d = DataMatrix::from_codes(vec![vec![1, 2], vec![1, 3], vec![1, 3], vec![2, 2]]);
        let m = kmodes(&d, 1, 0, &KModesOptions::default()).unwrap();
        assert_eq!(m.centers, Centers::Modes(vec![vec![1, 2]]));
        // column 2 ties 2 vs 3 at two each: lowest code wins; cost 1 + 1 + 1
        assert_eq!(m.objective, Some(3.0));
    }

    #[test]
    fn kmodes_identical_records_collapse() {
        let d = DataMatrix::from_codes(vec![vec![1, 1]; 4]);
        let m = kmodes(&d, 2, 9, &KModesOptions::default()).unwrap();
        assert_eq!(m.n_clusters(), 1);
        assert!(m.warnings.iter().any(|w| w.contains("no closest record")));
    }

    #[test]
    fn kmodes_huang_init_runs() {
        let d = DataMatrix::from_codes((0..30).map(|i| vec![i % 3 + 1, i % 2 + 1, (i / 10) + 1]).collect());
        let m = kmodes(&d, 3, 5, &KModesOptions { init: ModesInit::Huang, ..Default::default() }).unwrap();
        assert_eq!(m.assignments.len(), 30);
    }

    fn heights(d: &Dendrogram) -> Vec<f64> {
        d.merges.iter().map(|m| m.height).collect()
    }

    #[test]
    fn collinear_three_points() {
        let data = one_d(&[0, 1, 10]);
        for (linkage, second) in [(Linkage::Single, 9.0), (Linkage::Complete, 10.0), (Linkage::Average, 9.5)] {
            let d = hclust(&data, linkage, Metric::Euclidean).unwrap();
            assert_eq!(heights(&d), vec![1.0, second], "{linkage:?}");
            assert_eq!((d.merges[0].left, d.merges[0].right), (0, 1));
            assert_eq!((d.merges[1].left, d.merges[1].right), (2, 3));
        }
        let d = hclust(&data, Linkage::Complete, Metric::Euclidean).unwrap();
        assert_eq!(cut_tree(&d, 2).unwrap(), vec![1, 1, 2]);
        assert_eq!(cut_tree(&d, 1).unwrap(), vec![1, 1, 1]);
        assert_eq!(cut_tree(&d, 3).unwrap(), vec![1, 2, 3]);
        assert!(cut_tree(&d, 0).is_err());
    }

    #[test]
    fn two_points() {
        let d = hclust(&DataMatrix::from_codes(vec![vec![0, 0], vec![3, 4]]), Linkage::Average, Metric::Euclidean).unwrap();
        assert_eq!(d.merges, vec![Merge { left: 0, right: 1, height: 5.0, size: 2 }]);
    }

    #[test]
    fn equal_distance_tie_uses_lowest_pair() {
        let d = hclust(&one_d(&[0, 1, 2, 3]), Linkage::Single, Metric::Euclidean).unwrap();
        assert_eq!((d.merges[0].left, d.merges[0].right), (0, 1));
        assert_eq!((d.merges[1].left, d.merges[1].right), (2, 3));
        assert_eq!((d.merges[2].left, d.merges[2].right), (4, 5));
    }

    #[test]
    fn method_names_round_trip() {
        for m in Method::ALL {
            assert_eq!(m.as_str().parse::<Method>().unwrap(), m);
        }
        assert!("ward".parse::<Method>().is_err());
    }

    #[test]
    fn model_json_round_trip() {
        let m = kmeans(&one_d(&[0, 2, 9, 11]), 2, 1, &KMeansOptions::default()).unwrap();
        assert_eq!(ClusterModel::from_json(&m.to_json()).unwrap(), m);
    }
}
