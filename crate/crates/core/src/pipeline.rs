//! End-to-end run: clean, label, reduce, cluster, evaluate, compare, with a
//! manifest of input digests and artifact hashes.
//!
//! A pipeline config is TOML. Paths are relative to the config file.
//!
//! ```toml
//! schema = "schema.toml"
//! input = "survey.csv"            # or: synth_spec = "spec.toml"
//! output_dir = "out"
//! alpha = 0.05
//!
//! [reduction]
//! correlation_threshold = 0.2
//! drop_threshold = 0.5
//! basis = "correlation"
//! loading_threshold = 0.30
//!
//! [cluster]
//! methods = ["kmeans", "kmodes", "hclust-complete"]
//! k = [4, 5, 6]
//! seeds = [1]
//!
//! [evaluation]
//! against = "baseline"            # or "truth"
//! ```

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::baseline::{self, BaselineLabel};
use crate::clustering::{self, ClusterModel, DataMatrix, FitOptions, KMeansOptions, KModesOptions, Method, Metric, ModesInit};
use crate::evaluation::{self, DegeneracyThresholds, EvaluationReport, NeedPolicy};
use crate::ingest;
use crate::reduction::{self, ReductionConfig};
use crate::schema::{RespondentRecord, SurveySchema};
use crate::synth::{self, GeneratorSpec};

pub const TOOL: &str = "survclust";
pub const VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("config: {0}")]
    Config(String),
    #[error("stage {stage}: {message}")]
    Stage { stage: &'static str, message: String },
    #[error("i/o on {path}: {source}")]
    Io { path: PathBuf, source: io::Error },
}

impl PipelineError {
    pub fn exit_code(&self) -> i32 {
        match self {
            PipelineError::Config(_) => 2,
            PipelineError::Stage { .. } => 3,
            PipelineError::Io { .. } => 4,
        }
    }

    fn stage(stage: &'static str, e: impl std::fmt::Display) -> Self {
        PipelineError::Stage { stage, message: e.to_string() }
    }
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> PipelineError + '_ {
    move |source| PipelineError::Io { path: path.to_path_buf(), source }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ClusterStageConfig {
    pub methods: Vec<Method>,
    pub k: Vec<usize>,
    pub seeds: Vec<u64>,
    pub standardize: bool,
    pub metric: Metric,
    pub kmodes_init: ModesInit,
    pub kmeans_max_iter: usize,
    pub kmodes_max_iter: usize,
}

impl Default for ClusterStageConfig {
    fn default() -> Self {
        ClusterStageConfig {
            methods: vec![Method::Kmeans, Method::Kmodes, Method::HclustComplete],
            k: vec![4, 5, 6],
            seeds: vec![1],
            standardize: false,
            metric: Metric::Euclidean,
            kmodes_init: ModesInit::Distinct,
            kmeans_max_iter: 300,
            kmodes_max_iter: 100,
        }
    }
}

impl ClusterStageConfig {
    pub fn fit_options(&self) -> FitOptions {
        FitOptions {
            kmeans: KMeansOptions { max_iter: self.kmeans_max_iter, standardize: self.standardize },
            kmodes: KModesOptions { max_iter: self.kmodes_max_iter, init: self.kmodes_init },
            metric: self.metric,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LabelSource {
    #[default]
    Baseline,
    Truth,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvaluationConfig {
    pub against: LabelSource,
    /// Manual need cluster; scored when absent.
    pub need_cluster: Option<usize>,
    pub max_share: f64,
    pub min_share: f64,
}

impl Default for EvaluationConfig {
    fn default() -> Self {
        let t = DegeneracyThresholds::default();
        EvaluationConfig { against: LabelSource::Baseline, need_cluster: None, max_share: t.max_share, min_share: t.min_share }
    }
}

impl EvaluationConfig {
    pub fn policy(&self) -> NeedPolicy {
        self.need_cluster.map_or(NeedPolicy::Scored, NeedPolicy::Manual)
    }

    pub fn thresholds(&self) -> DegeneracyThresholds {
        DegeneracyThresholds { max_share: self.max_share, min_share: self.min_share }
    }
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("out")
}

fn default_delimiter() -> char {
    ','
}

fn default_alpha() -> f64 {
    0.05
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    pub schema: PathBuf,
    #[serde(default)]
    pub input: Option<PathBuf>,
    #[serde(default)]
    pub synth_spec: Option<PathBuf>,
    /// Planted-membership labels for `against = "truth"` with a given input.
    #[serde(default)]
    pub truth: Option<PathBuf>,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    #[serde(default = "default_delimiter")]
    pub delimiter: char,
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    #[serde(default)]
    pub reduction: ReductionConfig,
    #[serde(default)]
    pub cluster: ClusterStageConfig,
    #[serde(default)]
    pub evaluation: EvaluationConfig,
}

impl PipelineConfig {
    pub fn from_toml_str(src: &str) -> Result<Self, PipelineError> {
        toml::from_str(src).map_err(|e| PipelineError::Config(e.message().to_string()))
    }

    /// Parses a config file and resolves its relative paths against the
    /// file's directory.
    pub fn load(path: impl AsRef<Path>) -> Result<Self, PipelineError> {
        let path = path.as_ref();
        let src = fs::read_to_string(path).map_err(|e| PipelineError::Config(format!("{}: {e}", path.display())))?;
        let mut cfg = Self::from_toml_str(&src)?;
        let base = path.parent().unwrap_or(Path::new(""));
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        fix(&mut cfg.schema);
        fix(&mut cfg.output_dir);
        for p in [&mut cfg.input, &mut cfg.synth_spec, &mut cfg.truth].into_iter().flatten() {
            fix(p);
        }
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), PipelineError> {
        let bad = |m: String| Err(PipelineError::Config(m));
        match (&self.input, &self.synth_spec) {
            (None, None) => return bad("one of `input` or `synth_spec` is required".into()),
            (Some(_), Some(_)) => return bad("`input` and `synth_spec` are mutually exclusive".into()),
            _ => {}
        }
        if !(self.alpha > 0.0 && self.alpha < 0.5) {
            return bad(format!("`alpha` must be in (0, 0.5), got {}", self.alpha));
        }
        let r = &self.reduction;
        for (name, v) in [
            ("reduction.correlation_threshold", r.correlation_threshold),
            ("reduction.drop_threshold", r.drop_threshold),
            ("reduction.loading_threshold", r.loading_threshold),
            ("evaluation.max_share", self.evaluation.max_share),
            ("evaluation.min_share", self.evaluation.min_share),
        ] {
            if !(0.0..=1.0).contains(&v) {
                return bad(format!("`{name}` must be in [0, 1], got {v}"));
            }
        }
        let c = &self.cluster;
        if c.methods.is_empty() {
            return bad("`cluster.methods` needs at least one method".into());
        }
        if c.k.is_empty() || c.k.contains(&0) {
            return bad("`cluster.k` needs at least one positive k".into());
        }
        if c.seeds.is_empty() {
            return bad("`cluster.seeds` needs at least one seed".into());
        }
        if self.evaluation.against == LabelSource::Truth && self.synth_spec.is_none() && self.truth.is_none() {
            return bad("`evaluation.against = \"truth\"` needs `truth` or `synth_spec`".into());
        }
        for (name, p) in [("schema", Some(&self.schema)), ("input", self.input.as_ref()), ("synth_spec", self.synth_spec.as_ref()), ("truth", self.truth.as_ref())] {
            if let Some(p) = p {
                if !p.exists() {
                    return bad(format!("`{name}` path {} does not exist", p.display()));
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub tool: String,
    pub version: String,
    pub seeds: Vec<u64>,
    pub inputs: BTreeMap<String, String>,
    pub artifacts: BTreeMap<String, String>,
    /// Digest over everything above; the timestamp is excluded.
    pub content_hash: String,
    pub created_unix: u64,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

fn content_hash(tool: &str, version: &str, seeds: &[u64], inputs: &BTreeMap<String, String>, artifacts: &BTreeMap<String, String>) -> String {
    let canonical = serde_json::json!({
        "tool": tool,
        "version": version,
        "seeds": seeds,
        "inputs": inputs,
        "artifacts": artifacts,
    });
    sha256_hex(canonical.to_string().as_bytes())
}

impl Manifest {
    pub fn recompute_hash(&self) -> String {
        content_hash(&self.tool, &self.version, &self.seeds, &self.inputs, &self.artifacts)
    }
}

/// Writes files under the output directory and records their digests.
struct Artifacts {
    root: PathBuf,
    hashes: BTreeMap<String, String>,
}

impl Artifacts {
    fn write(&mut self, rel: &str, bytes: &[u8]) -> Result<(), PipelineError> {
        let path = self.root.join(rel);
        if let Some(dir) = path.parent() {
            fs::create_dir_all(dir).map_err(io_err(dir))?;
        }
        fs::write(&path, bytes).map_err(io_err(&path))?;
        self.hashes.insert(rel.to_string(), sha256_hex(bytes));
        Ok(())
    }
}

fn csv_bytes(f: impl FnOnce(&mut Vec<u8>) -> Result<(), String>) -> Result<Vec<u8>, String> {
    let mut buf = Vec::new();
    f(&mut buf)?;
    Ok(buf)
}

/// File stem for a fitted model.
pub fn model_stem(method: Method, k: usize, seed: Option<u64>) -> String {
    match seed {
        Some(s) => format!("{method}-k{k}-s{s}"),
        None => format!("{method}-k{k}"),
    }
}

/// Fits every (method, k, seed) combination. Dendrograms are built once per
/// linkage and cut for each k. Output order is deterministic.
pub fn fit_all(data: &DataMatrix, cfg: &ClusterStageConfig) -> Result<Vec<ClusterModel>, clustering::ClusterError> {
    let opts = cfg.fit_options();
    let mut methods: Vec<Method> = cfg.methods.clone();
    methods.sort();
    methods.dedup();
    let trees: BTreeMap<Method, clustering::Dendrogram> = methods
        .par_iter()
        .filter_map(|&m| m.linkage().map(|l| (m, l)))
        .map(|(m, l)| clustering::hclust(data, l, cfg.metric).map(|t| (m, t)))
        .collect::<Result<_, _>>()?;
    let mut jobs: Vec<(Method, usize, Option<u64>)> = Vec::new();
    for &m in &methods {
        for &k in &cfg.k {
            if m.is_seeded() {
                jobs.extend(cfg.seeds.iter().map(|&s| (m, k, Some(s))));
            } else {
                jobs.push((m, k, None));
            }
        }
    }
    jobs.par_iter()
        .map(|&(m, k, seed)| match seed {
            Some(s) => clustering::fit(data, m, k, s, &opts),
            None => {
                let tree = &trees[&m];
                let assignments = clustering::cut_tree(tree, k)?;
                Ok(ClusterModel {
                    method: m,
                    k,
                    respondent_ids: data.respondent_ids.clone(),
                    question_ids: data.question_ids.clone(),
                    assignments,
                    centers: clustering::Centers::None,
                    iterations: tree.merges.len(),
                    converged: true,
                    seed: None,
                    objective: None,
                    standardized: false,
                    history: Vec::new(),
                    warnings: Vec::new(),
                    dendrogram: Some(tree.clone()),
                })
            }
        })
        .collect()
}

/// Restricts labels to `ids`, in `ids` order; missing ids get no reasons.
pub fn align_labels(labels: &[BaselineLabel], ids: &[String]) -> Vec<BaselineLabel> {
    let by_id: BTreeMap<&str, &BaselineLabel> = labels.iter().map(|l| (l.respondent_id.as_str(), l)).collect();
    ids.iter()
        .map(|id| by_id.get(id.as_str()).map_or_else(|| BaselineLabel { respondent_id: id.clone(), reasons: vec![] }, |l| (*l).clone()))
        .collect()
}

/// Table-10-style comparison for each k, using the lowest seed per method.
pub fn comparison_tables(reports: &[EvaluationReport]) -> Result<BTreeMap<usize, String>, evaluation::EvalError> {
    let mut by_k: BTreeMap<usize, BTreeMap<Method, &EvaluationReport>> = BTreeMap::new();
    for r in reports {
        let slot = by_k.entry(r.k).or_default().entry(r.method).or_insert(r);
        if r.seed < slot.seed {
            *slot = r;
        }
    }
    by_k.into_iter()
        .map(|(k, m)| {
            let reps: Vec<&EvaluationReport> = m.into_values().collect();
            evaluation::render_comparison_table(&reps).map(|t| (k, t))
        })
        .collect()
}

pub fn run_pipeline(cfg: &PipelineConfig) -> Result<Manifest, PipelineError> {
    cfg.validate()?;
    let schema = SurveySchema::load(&cfg.schema).map_err(|e| PipelineError::Config(e.to_string()))?;
    let out = &cfg.output_dir;
    fs::create_dir_all(out).map_err(io_err(out))?;
    let mut art = Artifacts { root: out.clone(), hashes: BTreeMap::new() };
    let mut inputs = BTreeMap::new();
    let digest = |p: &Path| fs::read(p).map(|b| sha256_hex(&b)).map_err(io_err(p));
    inputs.insert("schema".to_string(), digest(&cfg.schema)?);
    let delim = u8::try_from(cfg.delimiter).map_err(|_| PipelineError::Config("`delimiter` must be ASCII".into()))?;

    // Input: a survey file or a generated cohort.
    let mut truth: Option<Vec<BaselineLabel>> = None;
    let records: Vec<RespondentRecord> = if let Some(spec_path) = &cfg.synth_spec {
        inputs.insert("synth_spec".to_string(), digest(spec_path)?);
        let spec = GeneratorSpec::load(spec_path).map_err(|e| PipelineError::Config(e.to_string()))?;
        let generated = synth::generate(&spec, &schema).map_err(|e| PipelineError::stage("synth", e))?;
        let ids: Vec<&str> = schema.question_ids();
        let bytes = csv_bytes(|b| ingest::write_records(b, &ids, &generated.records, delim).map_err(|e| e.to_string()))
            .map_err(|e| PipelineError::stage("synth", e))?;
        art.write("synth/records.csv", &bytes)?;
        let tbytes = csv_bytes(|b| baseline::write_labels(b, &generated.truth).map_err(|e| e.to_string()))
            .map_err(|e| PipelineError::stage("synth", e))?;
        art.write("synth/truth.csv", &tbytes)?;
        truth = Some(generated.truth);
        ingest::parse_survey(bytes.as_slice(), &schema, delim).map_err(|e| PipelineError::stage("synth", e))?
    } else {
        let input = cfg.input.as_ref().expect("validated");
        inputs.insert("input".to_string(), digest(input)?);
        ingest::parse_survey_file(input, &schema, delim).map_err(|e| match e {
            ingest::IngestError::Open { .. } | ingest::IngestError::Io(_) => PipelineError::Io {
                path: input.clone(),
                source: io::Error::other(e.to_string()),
            },
            e => PipelineError::stage("clean", e),
        })?
    };
    if let Some(t) = &cfg.truth {
        inputs.insert("truth".to_string(), digest(t)?);
        truth = Some(baseline::read_labels_file(t).map_err(|e| PipelineError::stage("evaluate", e))?);
    }

    // clean
    let (clean, report) = ingest::clean_cohort(&records, &schema);
    let qids: Vec<String> = schema.question_ids().into_iter().map(String::from).collect();
    let qrefs: Vec<&str> = qids.iter().map(String::as_str).collect();
    let bytes = csv_bytes(|b| ingest::write_records(b, &qrefs, &clean, delim).map_err(|e| e.to_string()))
        .map_err(|e| PipelineError::stage("clean", e))?;
    art.write("clean/clean.csv", &bytes)?;
    art.write("clean/report.txt", report.render_text().as_bytes())?;
    let rows = csv_bytes(|b| report.write_rows(b).map_err(|e| e.to_string())).map_err(|e| PipelineError::stage("clean", e))?;
    art.write("clean/report.csv", &rows)?;
    if clean.is_empty() {
        return Err(PipelineError::stage("clean", "no records left after cleaning"));
    }

    // label
    let labelled = baseline::label_baseline(&clean, &schema, cfg.alpha).map_err(|e| PipelineError::stage("label", e))?;
    let lbytes = csv_bytes(|b| baseline::write_labels(b, &labelled.labels).map_err(|e| e.to_string()))
        .map_err(|e| PipelineError::stage("label", e))?;
    art.write("label/labels.csv", &lbytes)?;
    art.write("label/summary.json", pretty(&labelled.per_question)?.as_bytes())?;

    // reduce
    let candidates: Vec<String> = cfg.reduction.questions.clone().unwrap_or_else(|| qids.clone());
    let cand: Vec<&str> = candidates.iter().map(String::as_str).collect();
    let reduced = reduction::reduce(&clean, &cand, &cfg.reduction).map_err(|e| PipelineError::stage("reduce", e))?;
    art.write("reduce/model.json", pretty(&reduced)?.as_bytes())?;
    let mut text = reduction::render_pairs_table(&reduced.pairs);
    text.push('\n');
    text.push_str(&reduction::render_loading_table(&reduced.model));
    art.write("reduce/report.txt", text.as_bytes())?;
    let retained = reduced.retained().to_vec();
    if retained.is_empty() {
        return Err(PipelineError::stage("reduce", "loading filter retained no questions"));
    }
    let rrefs: Vec<&str> = retained.iter().map(String::as_str).collect();
    let rbytes = csv_bytes(|b| ingest::write_records(b, &rrefs, &clean, delim).map_err(|e| e.to_string()))
        .map_err(|e| PipelineError::stage("reduce", e))?;
    art.write("reduce/reduced.csv", &rbytes)?;

    // cluster
    let data = DataMatrix::from_records(&clean, &retained).map_err(|e| PipelineError::stage("cluster", e))?;
    let models = fit_all(&data, &cfg.cluster).map_err(|e| PipelineError::stage("cluster", e))?;
    for m in &models {
        art.write(&format!("cluster/{}.json", model_stem(m.method, m.k, m.seed)), m.to_json().as_bytes())?;
    }

    // evaluate
    let labels = match cfg.evaluation.against {
        LabelSource::Baseline => labelled.labels.clone(),
        LabelSource::Truth => align_labels(truth.as_deref().unwrap_or_default(), &data.respondent_ids),
    };
    let reports: Vec<EvaluationReport> = models
        .par_iter()
        .map(|m| evaluation::evaluate(&data, m, &labels, &schema, cfg.evaluation.policy(), &cfg.evaluation.thresholds()))
        .collect::<Result<_, _>>()
        .map_err(|e| PipelineError::stage("evaluate", e))?;
    for r in &reports {
        let stem = model_stem(r.method, r.k, r.seed);
        for (name, body) in report_files(r)? {
            art.write(&format!("evaluate/{stem}/{name}"), body.as_bytes())?;
        }
    }

    // compare
    let series = evaluation::compare_methods(&reports).map_err(|e| PipelineError::stage("compare", e))?;
    let sbytes = csv_bytes(|b| evaluation::write_series_csv(b, &series).map_err(|e| e.to_string()))
        .map_err(|e| PipelineError::stage("compare", e))?;
    art.write("compare/series.csv", &sbytes)?;
    art.write("compare/recall.svg", evaluation::render_svg_chart(&series).as_bytes())?;
    for (k, table) in comparison_tables(&reports).map_err(|e| PipelineError::stage("compare", e))? {
        art.write(&format!("compare/table-k{k}.txt"), table.as_bytes())?;
    }

    let seeds = cfg.cluster.seeds.clone();
    let artifacts = art.hashes;
    let manifest = Manifest {
        tool: TOOL.into(),
        version: VERSION.into(),
        content_hash: content_hash(TOOL, VERSION, &seeds, &inputs, &artifacts),
        seeds,
        inputs,
        artifacts,
        created_unix: std::time::SystemTime::now()
            .duration_since(std::time::UNIX_EPOCH)
            .map(|d| d.as_secs())
            .unwrap_or(0),
    };
    let mpath = out.join("manifest.json");
    fs::write(&mpath, pretty(&manifest)?).map_err(io_err(&mpath))?;
    Ok(manifest)
}

/// The files making up one evaluation report directory.
pub fn report_files(r: &EvaluationReport) -> Result<Vec<(&'static str, String)>, PipelineError> {
    Ok(vec![
        ("report.json", pretty(r)?),
        ("profile.txt", evaluation::render_profile(&r.profile, &r.need)),
        ("contingency.txt", evaluation::render_contingency(&r.table)),
        ("recall.txt", evaluation::render_recall(r)),
    ])
}

fn pretty<T: Serialize>(v: &T) -> Result<String, PipelineError> {
    serde_json::to_string_pretty(v).map(|mut s| {
        s.push('\n');
        s
    })
    .map_err(|e| PipelineError::stage("serialize", e))
}

/// Every `report.json` below `dir`, in path order.
pub fn load_reports(dir: &Path) -> Result<Vec<EvaluationReport>, PipelineError> {
    let mut found = BTreeSet::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for entry in fs::read_dir(&d).map_err(io_err(&d))? {
            let p = entry.map_err(io_err(&d))?.path();
            if p.is_dir() {
                stack.push(p);
            } else if p.file_name().is_some_and(|n| n == "report.json") {
                found.insert(p);
            }
        }
    }
    found
        .into_iter()
        .map(|p| {
            let s = fs::read_to_string(&p).map_err(io_err(&p))?;
            serde_json::from_str(&s).map_err(|e| PipelineError::stage("compare", format!("{}: {e}", p.display())))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn missing_schema_is_named() {
        let e = PipelineConfig::from_toml_str("input = \"x.csv\"\n").unwrap_err();
        assert_eq!(e.exit_code(), 2);
        assert!(e.to_string().contains("schema"), "{e}");
    }

    #[test]
    fn defaults_follow_documented_values() {
        let c = PipelineConfig::from_toml_str("schema = \"s.toml\"\ninput = \"x.csv\"\n").unwrap();
        assert_eq!(c.alpha, 0.05);
        assert_eq!(c.reduction.correlation_threshold, 0.2);
        assert_eq!(c.reduction.loading_threshold, 0.30);
        assert_eq!(c.cluster.k, vec![4, 5, 6]);
        assert_eq!(c.cluster.kmeans_max_iter, 300);
        assert_eq!(c.cluster.kmodes_max_iter, 100);
        assert_eq!(c.evaluation.max_share, 0.80);
    }

    #[test]
    fn validation_messages() {
        let mut c = PipelineConfig::from_toml_str("schema = \"Cargo.toml\"\ninput = \"Cargo.toml\"\n").unwrap();
        assert!(c.validate().is_ok());
        c.cluster.methods.clear();
        assert!(c.validate().unwrap_err().to_string().contains("cluster.methods"));
        c.cluster.methods = vec![Method::Kmeans];
        c.alpha = 0.7;
        assert!(c.validate().unwrap_err().to_string().contains("alpha"));
    }

    #[test]
    fn manifest_hash_ignores_timestamp() {
        let inputs = BTreeMap::from([("schema".to_string(), "ab".to_string())]);
        let m = Manifest {
            tool: TOOL.into(),
            version: VERSION.into(),
            seeds: vec![1],
            inputs: inputs.clone(),
            artifacts: BTreeMap::new(),
            content_hash: content_hash(TOOL, VERSION, &[1], &inputs, &BTreeMap::new()),
            created_unix: 5,
        };
        let later = Manifest { created_unix: 99, ..m.clone() };
        assert_eq!(m.recompute_hash(), later.recompute_hash());
        assert_eq!(m.recompute_hash(), m.content_hash);
    }

    #[test]
    fn stems() {
        assert_eq!(model_stem(Method::Kmeans, 4, Some(3)), "kmeans-k4-s3");
        assert_eq!(model_stem(Method::HclustAverage, 5, None), "hclust-average-k5");
    }
}
