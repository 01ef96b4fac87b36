//! Browser bindings. Every export takes plain values and returns a JSON
//! string; failures come back as `{"error": "..."}`.

use serde::Serialize;
use wasm_bindgen::prelude::*;

use survclust::baseline::{normality_check, tail_threshold, Normality};
use survclust::clustering::{self, DataMatrix, Linkage, Method, Metric};
use survclust::evaluation::{self, DegeneracyThresholds, NeedPolicy};
use survclust::ingest;
use survclust::pipeline::align_labels;
use survclust::reduction::{self, ReductionConfig};
use survclust::schema::{Branch, SurveySchema};
use survclust::synth::{self, GeneratorSpec};

const SCHEMA: &str = include_str!("../../../configs/schema.toml");
const SPEC: &str = include_str!("../../../configs/synthetic-demo.spec.toml");

fn to_json<T: Serialize>(r: Result<T, String>) -> String {
    match r {
        Ok(v) => serde_json::to_string(&v).expect("serializable"),
        Err(e) => serde_json::json!({ "error": e }).to_string(),
    }
}

#[derive(Serialize)]
pub struct MethodResult {
    pub method: String,
    pub sizes: Vec<usize>,
    pub need_cluster: usize,
    pub captured: usize,
    pub planted: usize,
    pub recall: f64,
    pub degenerate: bool,
}

#[derive(Serialize)]
pub struct ClusterDemo {
    pub n: usize,
    pub planted: usize,
    pub retained_questions: Vec<String>,
    pub results: Vec<MethodResult>,
}

pub fn run_cluster_demo(n: usize, need_fraction: f64, k: usize, seed: u64) -> Result<ClusterDemo, String> {
    let schema = SurveySchema::from_toml_str(SCHEMA).map_err(|e| e.to_string())?;
    let mut spec = GeneratorSpec::from_toml_str(SPEC).map_err(|e| e.to_string())?;
    spec.n = n;
    spec.need_fraction = need_fraction;
    spec.seed = seed;
    let out = synth::generate(&spec, &schema).map_err(|e| e.to_string())?;
    let (clean, _) = ingest::clean_cohort(&out.records, &schema);
    let red = reduction::reduce(&clean, &schema.question_ids(), &ReductionConfig::default()).map_err(|e| e.to_string())?;
    let data = DataMatrix::from_records(&clean, red.retained()).map_err(|e| e.to_string())?;
    let truth = align_labels(&out.truth, &data.respondent_ids);
    let planted = truth.iter().filter(|l| l.is_flagged()).count();
    let mut results = Vec::new();
    for method in [Method::Kmeans, Method::Kmodes, Method::HclustComplete, Method::HclustAverage] {
        let model = clustering::fit(&data, method, k, seed, &Default::default()).map_err(|e| e.to_string())?;
        let rep = evaluation::evaluate(&data, &model, &truth, &schema, NeedPolicy::Scored, &DegeneracyThresholds::default())
            .map_err(|e| e.to_string())?;
        results.push(MethodResult {
            method: evaluation::method_title(method).to_string(),
            sizes: rep.profile.sizes.clone(),
            need_cluster: rep.need.cluster,
            captured: rep.recall.total.count,
            planted,
            recall: rep.recall.total.fraction().unwrap_or(0.0),
            degenerate: rep.degenerate,
        });
    }
    Ok(ClusterDemo { n: data.n(), planted, retained_questions: red.retained().to_vec(), results })
}

/// Generates a cohort, clusters it four ways and reports how many planted
/// respondents land in each method's need cluster.
#[wasm_bindgen]
pub fn cluster_demo(n: usize, need_fraction: f64, k: usize, seed: u32) -> String {
    to_json(run_cluster_demo(n, need_fraction, k, seed as u64))
}

#[derive(Serialize)]
pub struct ThresholdDemo {
    pub n: usize,
    pub skewness: f64,
    pub excess_kurtosis: f64,
    pub branch: String,
    pub cutoff: Option<f64>,
    pub flagged: Vec<usize>,
}

pub fn run_threshold_demo(values: &str, alpha: f64) -> Result<ThresholdDemo, String> {
    let parsed: Vec<f64> = values
        .split(|c: char| c == ',' || c.is_whitespace())
        .filter(|t| !t.is_empty())
        .map(|t| t.parse::<f64>().map_err(|_| format!("not a number: {t:?}")))
        .collect::<Result<_, _>>()?;
    if parsed.is_empty() {
        return Err("no values".into());
    }
    let check = normality_check(&parsed);
    let branch = match check.verdict {
        Normality::Normal => Branch::Normal,
        Normality::NotNormal => Branch::Empirical,
    };
    let keyed: Vec<(String, f64)> = parsed.iter().enumerate().map(|(i, &v)| (i.to_string(), v)).collect();
    let t = tail_threshold("values", &keyed, alpha, branch).map_err(|e| e.to_string())?;
    Ok(ThresholdDemo {
        n: parsed.len(),
        skewness: check.skewness,
        excess_kurtosis: check.excess_kurtosis,
        branch: branch.to_string(),
        cutoff: t.cutoff_value,
        flagged: t.flagged_ids.iter().map(|id| id.parse().expect("index ids")).collect(),
    })
}

/// Lower-tail need threshold on a list of numbers (lower is worse).
#[wasm_bindgen]
pub fn threshold_demo(values: &str, alpha: f64) -> String {
    to_json(run_threshold_demo(values, alpha))
}

pub fn run_dendrogram(points: &str, linkage: &str) -> Result<clustering::Dendrogram, String> {
    let rows: Vec<Vec<i64>> = serde_json::from_str(points).map_err(|e| e.to_string())?;
    let linkage = match linkage {
        "complete" => Linkage::Complete,
        "single" => Linkage::Single,
        "average" => Linkage::Average,
        other => return Err(format!("unknown linkage {other:?}")),
    };
    if rows.iter().any(|r| r.len() != rows[0].len()) {
        return Err("points must all have the same length".into());
    }
    clustering::hclust(&DataMatrix::from_codes(rows), linkage, Metric::Euclidean).map_err(|e| e.to_string())
}

/// Merge list for integer points given as a JSON array of arrays.
#[wasm_bindgen]
pub fn dendrogram(points: &str, linkage: &str) -> String {
    to_json(run_dendrogram(points, linkage))
}
