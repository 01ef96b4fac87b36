use std::collections::BTreeMap;
use std::fmt::Display;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use survclust::baseline;
use survclust::clustering::{self, ClusterModel, DataMatrix, FitOptions, Method, Metric, ModesInit};
use survclust::evaluation::{self, DegeneracyThresholds, NeedPolicy};
use survclust::ingest;
use survclust::pipeline::{self, LabelSource, PipelineConfig, PipelineError};
use survclust::reduction::{self, ReductionConfig};
use survclust::schema::{validate_record, SurveySchema, VerdictKind};
use survclust::synth::{self, GeneratorSpec};

#[derive(Parser)]
#[command(name = "survclust", version, about = "Survey cleaning, need labeling, factor reduction and cluster comparison")]
struct Cli {
    /// Log filter: error, warn, info, debug or trace.
    #[arg(long, env = "SURVCLUST_LOG", default_value = "warn", global = true)]
    log_level: String,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Check a schema and, optionally, report each record's verdict.
    Validate {
        #[arg(long)]
        schema: PathBuf,
        #[arg(long)]
        input: Option<PathBuf>,
        #[arg(long, default_value_t = ',')]
        delimiter: char,
    },
    /// Drop out-of-range, inconsistent and incomplete records.
    Clean {
        #[arg(long)]
        schema: PathBuf,
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Human-readable report.
        #[arg(long)]
        report: PathBuf,
        /// Delimited removal rows [default: report path with a .csv extension]
        #[arg(long)]
        report_rows: Option<PathBuf>,
        #[arg(long, default_value_t = ',')]
        delimiter: char,
    },
    /// Flag baseline need on a cleaned cohort.
    Label {
        #[arg(long)]
        schema: PathBuf,
        #[arg(long)]
        input: PathBuf,
        #[arg(long, default_value_t = 0.05)]
        alpha: f64,
        #[arg(long)]
        out: PathBuf,
        /// Per-question thresholds as JSON.
        #[arg(long)]
        summary: Option<PathBuf>,
        #[arg(long, default_value_t = ',')]
        delimiter: char,
    },
    /// Correlation screening, PCA, Varimax and the loading filter.
    Reduce {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        schema: PathBuf,
        /// TOML reduction settings; built-in defaults when absent.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out_model: PathBuf,
        #[arg(long)]
        out_report: PathBuf,
        /// Records restricted to the retained questions.
        #[arg(long)]
        out_data: Option<PathBuf>,
        #[arg(long, default_value_t = ',')]
        delimiter: char,
    },
    /// Fit one clustering model.
    Cluster {
        /// Records file, usually the reduced data.
        #[arg(long)]
        input: PathBuf,
        /// kmeans, kmodes, hclust-complete, hclust-single or hclust-average.
        #[arg(long)]
        method: Method,
        #[arg(long)]
        k: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
        /// z-score columns before k-means.
        #[arg(long)]
        standardize: bool,
        /// Hierarchical dissimilarity: euclidean or simple-matching.
        #[arg(long, default_value = "euclidean")]
        metric: Metric,
        /// k-modes starting modes: distinct or huang.
        #[arg(long, default_value = "distinct")]
        init: ModesInit,
        /// Iteration cap [default: 300 for kmeans, 100 for kmodes]
        #[arg(long)]
        max_iter: Option<usize>,
        #[arg(long, default_value_t = ',')]
        delimiter: char,
    },
    /// Profile a model, pick its need cluster and score it against labels.
    Evaluate {
        #[arg(long)]
        labels: PathBuf,
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        schema: PathBuf,
        /// Records the model was fitted on.
        #[arg(long)]
        input: PathBuf,
        /// Report directory.
        #[arg(long)]
        out: PathBuf,
        /// Use this cluster instead of the scored choice.
        #[arg(long)]
        need_cluster: Option<usize>,
        #[arg(long, default_value_t = 0.80)]
        max_share: f64,
        #[arg(long, default_value_t = 0.01)]
        min_share: f64,
        #[arg(long, default_value_t = ',')]
        delimiter: char,
    },
    /// Collect evaluation reports into a recall series.
    Compare {
        /// Directory searched recursively for report.json files.
        #[arg(long)]
        reports: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// SVG line chart of mean recall by k.
        #[arg(long)]
        plot: Option<PathBuf>,
    },
    /// Generate a synthetic cohort with planted need.
    Synth {
        #[arg(long)]
        spec: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        truth: PathBuf,
        /// Override the spec's seed.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, default_value_t = ',')]
        delimiter: char,
    },
    /// Run every stage from one config file. Flags override the file.
    Pipeline {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, env = "SURVCLUST_OUT_DIR")]
        output_dir: Option<PathBuf>,
        #[arg(long, value_delimiter = ',')]
        methods: Option<Vec<Method>>,
        #[arg(long, value_delimiter = ',')]
        k: Option<Vec<usize>>,
        #[arg(long, value_delimiter = ',')]
        seeds: Option<Vec<u64>>,
        #[arg(long)]
        alpha: Option<f64>,
        /// Label source for evaluation: baseline or truth.
        #[arg(long)]
        against: Option<String>,
    },
}

struct Failure {
    code: i32,
    message: String,
}

fn config_err(e: impl Display) -> Failure {
    Failure { code: 2, message: format!("config: {e}") }
}

fn stage_err(stage: &str) -> impl Fn(String) -> Failure + '_ {
    move |m| Failure { code: 3, message: format!("stage {stage}: {m}") }
}

fn io_err(path: &Path) -> impl Fn(std::io::Error) -> Failure + '_ {
    move |e| Failure { code: 4, message: format!("i/o on {}: {e}", path.display()) }
}

impl From<PipelineError> for Failure {
    fn from(e: PipelineError) -> Self {
        Failure { code: e.exit_code(), message: e.to_string() }
    }
}

type Result<T> = std::result::Result<T, Failure>;

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(io_err(path))
}

fn write(path: &Path, bytes: impl AsRef<[u8]>) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(io_err(dir))?;
    }
    fs::write(path, bytes).map_err(io_err(path))
}

fn delim(c: char) -> Result<u8> {
    u8::try_from(c).map_err(|_| config_err("delimiter must be ASCII"))
}

fn load_schema(path: &Path) -> Result<SurveySchema> {
    SurveySchema::from_toml_str(&read(path)?).map_err(|e| config_err(format!("{}: {e}", path.display())))
}

fn csv_bytes<E: Display>(f: impl FnOnce(&mut Vec<u8>) -> std::result::Result<(), E>, stage: &str) -> Result<Vec<u8>> {
    let mut buf = Vec::new();
    f(&mut buf).map_err(|e| stage_err(stage)(e.to_string()))?;
    Ok(buf)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    env_logger::Builder::new().parse_filters(&cli.log_level).format_timestamp(None).init();
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code as u8)
        }
    }
}

fn run(cmd: Command) -> Result<()> {
    match cmd {
        Command::Validate { schema, input, delimiter } => {
            let s = load_schema(&schema)?;
            println!(
                "schema ok: {} questions, {} rules, baseline set [{}]",
                s.questions.len(),
                s.rules.len(),
                s.baseline_set.join(", ")
            );
            if let Some(input) = input {
                let text = read(&input)?;
                let records = ingest::parse_survey(text.as_bytes(), &s, delim(delimiter)?)
                    .map_err(|e| stage_err("validate")(e.to_string()))?;
                let mut counts: BTreeMap<VerdictKind, usize> = BTreeMap::new();
                for r in &records {
                    let v = validate_record(r, &s);
                    *counts.entry(v.kind()).or_default() += 1;
                    if !v.is_clean() {
                        let detail: Vec<&str> =
                            v.out_of_range.iter().chain(&v.inconsistent).chain(&v.incomplete).map(String::as_str).collect();
                        println!("{}\t{}\t{}", r.respondent_id, v.kind(), detail.join(";"));
                    }
                }
                let summary: Vec<String> = counts.iter().map(|(k, n)| format!("{k} {n}")).collect();
                println!("{} records: {}", records.len(), summary.join(", "));
            }
        }
        Command::Clean { schema, input, out, report, report_rows, delimiter } => {
            let s = load_schema(&schema)?;
            let d = delim(delimiter)?;
            let records = ingest::parse_survey(read(&input)?.as_bytes(), &s, d)
                .map_err(|e| stage_err("clean")(e.to_string()))?;
            let (clean, rep) = ingest::clean_cohort(&records, &s);
            let ids = s.question_ids();
            write(&out, csv_bytes(|b| ingest::write_records(b, &ids, &clean, d), "clean")?)?;
            write(&report, rep.render_text())?;
            let rows_path = report_rows.unwrap_or_else(|| report.with_extension("csv"));
            write(&rows_path, csv_bytes(|b| rep.write_rows(b), "clean")?)?;
            eprintln!("{} in, {} removed, {} out", rep.total_in, rep.removed(), rep.total_out);
        }
        Command::Label { schema, input, alpha, out, summary, delimiter } => {
            let s = load_schema(&schema)?;
            let records = ingest::parse_survey(read(&input)?.as_bytes(), &s, delim(delimiter)?)
                .map_err(|e| stage_err("label")(e.to_string()))?;
            let outcome = baseline::label_baseline(&records, &s, alpha).map_err(|e| stage_err("label")(e.to_string()))?;
            write(&out, csv_bytes(|b| baseline::write_labels(b, &outcome.labels), "label")?)?;
            if let Some(p) = summary {
                write(&p, serde_json::to_string_pretty(&outcome.per_question).expect("serializable") + "\n")?;
            }
            for q in &outcome.per_question {
                eprintln!("{}: {} flagged", q.question, q.flagged);
            }
            eprintln!("{} of {} flagged", outcome.flagged_count(), outcome.labels.len());
        }
        Command::Reduce { input, schema, config, out_model, out_report, out_data, delimiter } => {
            let s = load_schema(&schema)?;
            let d = delim(delimiter)?;
            let cfg = match &config {
                Some(p) => ReductionConfig::from_toml_str(&read(p)?).map_err(config_err)?,
                None => ReductionConfig::default(),
            };
            let records = ingest::parse_survey(read(&input)?.as_bytes(), &s, d)
                .map_err(|e| stage_err("reduce")(e.to_string()))?;
            let candidates: Vec<String> =
                cfg.questions.clone().unwrap_or_else(|| s.question_ids().into_iter().map(String::from).collect());
            let cand: Vec<&str> = candidates.iter().map(String::as_str).collect();
            let outcome = reduction::reduce(&records, &cand, &cfg).map_err(|e| stage_err("reduce")(e.to_string()))?;
            write(&out_model, serde_json::to_string_pretty(&outcome).expect("serializable") + "\n")?;
            let mut text = reduction::render_pairs_table(&outcome.pairs);
            text.push('\n');
            text.push_str(&reduction::render_loading_table(&outcome.model));
            write(&out_report, text)?;
            if let Some(p) = out_data {
                let kept: Vec<&str> = outcome.retained().iter().map(String::as_str).collect();
                write(&p, csv_bytes(|b| ingest::write_records(b, &kept, &records, d), "reduce")?)?;
            }
            eprintln!("retained {} of {} questions", outcome.retained().len(), cand.len());
        }
        Command::Cluster { input, method, k, seed, out, standardize, metric, init, max_iter, delimiter } => {
            let data = read_data(&input, delimiter, None)?;
            let mut opts = FitOptions { metric, ..Default::default() };
            opts.kmeans.standardize = standardize;
            opts.kmodes.init = init;
            if let Some(m) = max_iter {
                opts.kmeans.max_iter = m;
                opts.kmodes.max_iter = m;
            }
            let model = clustering::fit(&data, method, k, seed, &opts).map_err(|e| stage_err("cluster")(e.to_string()))?;
            write(&out, model.to_json())?;
            let sizes: Vec<String> = model.sizes().iter().map(usize::to_string).collect();
            eprintln!("{method} k={k}: sizes {}", sizes.join(", "));
        }
        Command::Evaluate { labels, model, schema, input, out, need_cluster, max_share, min_share, delimiter } => {
            let s = load_schema(&schema)?;
            let m = ClusterModel::from_json(&read(&model)?).map_err(|e| config_err(format!("{}: {e}", model.display())))?;
            let data = read_data(&input, delimiter, Some(&m))?;
            let l = baseline::read_labels(read(&labels)?.as_bytes()).map_err(|e| stage_err("evaluate")(e.to_string()))?;
            let policy = need_cluster.map_or(NeedPolicy::Scored, NeedPolicy::Manual);
            let t = DegeneracyThresholds { max_share, min_share };
            let report = evaluation::evaluate(&data, &m, &l, &s, policy, &t).map_err(|e| stage_err("evaluate")(e.to_string()))?;
            for (name, body) in pipeline::report_files(&report)? {
                write(&out.join(name), body)?;
            }
            eprintln!(
                "need cluster {} captures {}{}",
                report.need.cluster,
                report.recall.total.render(),
                if report.degenerate { " (degenerate)" } else { "" }
            );
        }
        Command::Compare { reports, out, plot } => {
            let reps = pipeline::load_reports(&reports)?;
            let rows = evaluation::compare_methods(&reps).map_err(|e| stage_err("compare")(e.to_string()))?;
            write(&out, csv_bytes(|b| evaluation::write_series_csv(b, &rows), "compare")?)?;
            if let Some(p) = plot {
                write(&p, evaluation::render_svg_chart(&rows))?;
            }
            for (k, table) in pipeline::comparison_tables(&reps).map_err(|e| stage_err("compare")(e.to_string()))? {
                println!("k = {k}\n{table}");
            }
        }
        Command::Synth { spec, out, truth, seed, delimiter } => {
            let mut g = GeneratorSpec::load(&spec).map_err(config_err)?;
            if let Some(seed) = seed {
                g.seed = seed;
            }
            let s = g.load_schema().map_err(config_err)?;
            let generated = synth::generate(&g, &s).map_err(|e| stage_err("synth")(e.to_string()))?;
            let ids = s.question_ids();
            let d = delim(delimiter)?;
            write(&out, csv_bytes(|b| ingest::write_records(b, &ids, &generated.records, d), "synth")?)?;
            write(&truth, csv_bytes(|b| baseline::write_labels(b, &generated.truth), "synth")?)?;
            eprintln!(
                "{} records, {} planted, {} corrupted",
                generated.records.len(),
                generated.planted_count(),
                generated.corrupted.len()
            );
        }
        Command::Pipeline { config, output_dir, methods, k, seeds, alpha, against } => {
            let mut cfg = PipelineConfig::load(&config)?;
            if let Some(d) = output_dir {
                cfg.output_dir = d;
            }
            if let Some(m) = methods {
                cfg.cluster.methods = m;
            }
            if let Some(k) = k {
                cfg.cluster.k = k;
            }
            if let Some(s) = seeds {
                cfg.cluster.seeds = s;
            }
            if let Some(a) = alpha {
                cfg.alpha = a;
            }
            if let Some(a) = against {
                cfg.evaluation.against = match a.as_str() {
                    "baseline" => LabelSource::Baseline,
                    "truth" => LabelSource::Truth,
                    other => return Err(config_err(format!("`against` must be baseline or truth, got {other:?}"))),
                };
            }
            let manifest = pipeline::run_pipeline(&cfg)?;
            println!("{}", cfg.output_dir.join("manifest.json").display());
            eprintln!("{} artifacts, content hash {}", manifest.artifacts.len(), manifest.content_hash);
        }
    }
    Ok(())
}

/// Loads a records file as a data matrix. With a model, columns and row order
/// must match what it was fitted on.
fn read_data(path: &Path, delimiter: char, model: Option<&ClusterModel>) -> Result<DataMatrix> {
    let (questions, records) =
        ingest::parse_records_file(path, delim(delimiter)?).map_err(|e| match e {
            ingest::IngestError::Open { source, .. } => io_err(path)(source),
            e => stage_err("read")(e.to_string()),
        })?;
    let questions = model.map_or(questions, |m| m.question_ids.clone());
    let data = DataMatrix::from_records(&records, &questions).map_err(|e| stage_err("read")(e.to_string()))?;
    if let Some(m) = model {
        if data.respondent_ids != m.respondent_ids {
            return Err(stage_err("evaluate")(format!(
                "{} does not list the model's respondents in the model's order",
                path.display()
            )));
        }
    }
    Ok(data)
}
