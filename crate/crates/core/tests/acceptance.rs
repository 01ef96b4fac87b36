//! End-to-end acceptance checks. Each criterion prints one PASS/FAIL line and
//! the process exits nonzero if any fails.

#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::type_complexity)]

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use statrs::distribution::{ContinuousCDF, Normal};

use survclust::baseline::{inverse_normal_cdf, tail_threshold, BaselineLabel};
use survclust::clustering::{
    column_modes, hclust, kmeans, kmodes, simple_matching_distance, sse, Centers, DataMatrix, KMeansOptions,
    KModesOptions, Linkage, Method, Metric, ModesInit,
};
use survclust::evaluation::{
    contingency, evaluate, render_comparison_table, render_contingency, DegeneracyThresholds, NeedPolicy,
    ReasonRow,
};
use survclust::ingest::clean_cohort;
use survclust::linalg::{symmetric_eigen, Matrix};
use survclust::pipeline::{align_labels, fit_all, run_pipeline, ClusterStageConfig, PipelineConfig};
use survclust::reduction::{
    correlation_matrix, pca, reduce, render_loading_table, varimax, FactorModel, LoadingScale, PcaBasis,
    ReductionConfig, VarimaxOptions,
};
use survclust::schema::{Branch, PovertyIndicator, QuestionSpec, RespondentRecord, SurveySchema};
use survclust::synth::{generate, Corruption, GeneratorSpec};

type Outcome = Result<String, String>;

fn configs() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

fn golden_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/golden")
}

macro_rules! ensure {
    ($cond:expr, $($fmt:tt)+) => {
        if !$cond {
            return Err(format!($($fmt)+));
        }
    };
}

fn max_abs(a: &Matrix, b: &Matrix) -> f64 {
    a.max_abs_diff(b)
}

// ---------------------------------------------------------------- 1

#[derive(Debug, Clone, Copy, PartialEq)]
struct OracleMerge {
    left: usize,
    right: usize,
    height: f64,
    size: usize,
}

/// Re-scans every active pair each step and evaluates linkage straight from
/// leaf distances.
fn naive_hclust(dist: &[Vec<f64>], linkage: Linkage) -> Vec<OracleMerge> {
    let n = dist.len();
    let mut clusters: Vec<(usize, Vec<usize>)> = (0..n).map(|i| (i, vec![i])).collect();
    let mut out = Vec::new();
    for step in 0..n - 1 {
        let mut cands: Vec<(f64, usize, usize)> = Vec::new();
        for a in 0..clusters.len() {
            for b in a + 1..clusters.len() {
                let (ia, la) = &clusters[a];
                let (ib, lb) = &clusters[b];
                let ds: Vec<f64> = la.iter().flat_map(|&x| lb.iter().map(move |&y| dist[x][y])).collect();
                let d = match linkage {
                    Linkage::Single => ds.iter().copied().fold(f64::INFINITY, f64::min),
                    Linkage::Complete => ds.iter().copied().fold(f64::NEG_INFINITY, f64::max),
                    Linkage::Average => ds.iter().sum::<f64>() / ds.len() as f64,
                };
                cands.push((d, (*ia).min(*ib), (*ia).max(*ib)));
            }
        }
        let dmin = cands.iter().map(|c| c.0).fold(f64::INFINITY, f64::min);
        let tol = 1e-9 * dmin.abs().max(1.0);
        let &(d, lo, hi) = cands
            .iter()
            .filter(|c| c.0 - dmin <= tol)
            .min_by_key(|c| (c.1, c.2))
            .unwrap();
        let pa = clusters.iter().position(|c| c.0 == lo).unwrap();
        let mut leaves = clusters[pa].1.clone();
        let pb = clusters.iter().position(|c| c.0 == hi).unwrap();
        leaves.extend(&clusters[pb].1);
        clusters.retain(|c| c.0 != lo && c.0 != hi);
        let size = leaves.len();
        clusters.push((n + step, leaves));
        out.push(OracleMerge { left: lo, right: hi, height: d, size });
    }
    out
}

fn random_codes(rng: &mut ChaCha8Rng, n: usize, p: usize, max_code: i64) -> Vec<Vec<i64>> {
    (0..n).map(|_| (0..p).map(|_| rng.random_range(1..=max_code)).collect()).collect()
}

fn criterion_1() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut compared = 0;
    for f in 0..500 {
        let n = rng.random_range(2..=8);
        let p = rng.random_range(1..=4);
        let max_code = rng.random_range(2..=5);
        let data = DataMatrix::from_codes(random_codes(&mut rng, n, p, max_code));
        let metric = if f % 2 == 0 { Metric::Euclidean } else { Metric::SimpleMatching };
        let rows = data.real_rows();
        let dist: Vec<Vec<f64>> = (0..n)
            .map(|i| {
                (0..n)
                    .map(|j| match metric {
                        Metric::Euclidean => {
                            rows[i].iter().zip(&rows[j]).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt()
                        }
                        Metric::SimpleMatching => {
                            data.codes[i].iter().zip(&data.codes[j]).filter(|(a, b)| a != b).count() as f64
                        }
                    })
                    .collect()
            })
            .collect();
        for linkage in [Linkage::Complete, Linkage::Single, Linkage::Average] {
            let got = hclust(&data, linkage, metric).map_err(|e| e.to_string())?;
            let want = naive_hclust(&dist, linkage);
            for (s, (g, w)) in got.merges.iter().zip(&want).enumerate() {
                ensure!(
                    g.left == w.left
                        && g.right == w.right
                        && g.size == w.size
                        && (g.height - w.height).abs() <= 1e-9 * w.height.abs().max(1.0),
                    "fixture {f} {linkage:?} step {s}: got {g:?}, oracle {w:?}"
                );
            }
            compared += 1;
        }
    }
    let secs = start.elapsed().as_secs_f64();
    ensure!(secs < 10.0, "took {secs:.2}s (limit 10s)");
    Ok(format!("{compared} merge sequences match the re-scan oracle in {secs:.2}s"))
}

// ---------------------------------------------------------------- 2

/// Smallest SSE over every assignment of points to k labels.
fn exhaustive_min_sse(rows: &[Vec<f64>], k: usize) -> f64 {
    let n = rows.len();
    let mut best = f64::INFINITY;
    let mut labels = vec![0usize; n];
    loop {
        let mut sums = vec![vec![0.0; rows[0].len()]; k];
        let mut counts = vec![0usize; k];
        for (r, &l) in rows.iter().zip(&labels) {
            counts[l] += 1;
            for (s, x) in sums[l].iter_mut().zip(r) {
                *s += x;
            }
        }
        if counts.iter().all(|&c| c > 0) {
            let total: f64 = rows
                .iter()
                .zip(&labels)
                .map(|(r, &l)| r.iter().zip(&sums[l]).map(|(x, s)| (x - s / counts[l] as f64).powi(2)).sum::<f64>())
                .sum();
            best = best.min(total);
        }
        let mut i = 0;
        while i < n {
            labels[i] += 1;
            if labels[i] < k {
                break;
            }
            labels[i] = 0;
            i += 1;
        }
        if i == n {
            return best;
        }
    }
}

fn criterion_2() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let opts = KMeansOptions::default();
    for f in 0..200 {
        let n = rng.random_range(3..=40);
        let p = rng.random_range(1..=4);
        let k = rng.random_range(1..=n.min(6));
        let data = DataMatrix::from_codes(random_codes(&mut rng, n, p, 5));
        let seed = rng.random::<u64>();
        let m = kmeans(&data, k, seed, &opts).map_err(|e| e.to_string())?;
        for w in m.history.windows(2) {
            ensure!(w[1] <= w[0] + 1e-9, "fixture {f}: SSE rose {} -> {}", w[0], w[1]);
        }
        ensure!(m.iterations <= opts.max_iter, "fixture {f}: {} iterations", m.iterations);
        ensure!(m.converged, "fixture {f}: did not converge within {}", opts.max_iter);
        let Centers::Means(centers) = &m.centers else { return Err("k-means without means".into()) };
        let rows = data.real_rows();
        let zero_based: Vec<usize> = m.assignments.iter().map(|a| a - 1).collect();
        let recomputed: f64 = rows
            .iter()
            .zip(&zero_based)
            .map(|(r, &a)| r.iter().zip(&centers[a]).map(|(x, c)| (x - c) * (x - c)).sum::<f64>())
            .sum();
        let obj = m.objective.unwrap();
        ensure!((recomputed - obj).abs() <= 1e-9 * obj.max(1.0), "fixture {f}: SSE {obj} vs recomputed {recomputed}");
        for (c, center) in centers.iter().enumerate() {
            let members: Vec<&Vec<f64>> = rows.iter().zip(&zero_based).filter(|(_, &a)| a == c).map(|(r, _)| r).collect();
            ensure!(!members.is_empty(), "fixture {f}: cluster {} empty", c + 1);
            for j in 0..p {
                let mean = members.iter().map(|r| r[j]).sum::<f64>() / members.len() as f64;
                ensure!((mean - center[j]).abs() <= 1e-9, "fixture {f}: center {} is not its mean", c + 1);
            }
        }
        for (i, r) in rows.iter().enumerate() {
            let own: f64 = r.iter().zip(&centers[zero_based[i]]).map(|(x, c)| (x - c) * (x - c)).sum();
            for center in centers {
                let d: f64 = r.iter().zip(center).map(|(x, c)| (x - c) * (x - c)).sum();
                ensure!(own <= d + 1e-9, "fixture {f}: point {i} is closer to another center");
            }
        }
    }
    let tiny = DataMatrix::from_codes(vec![vec![0], vec![0], vec![10], vec![10]]);
    let optimum = exhaustive_min_sse(&tiny.real_rows(), 2);
    ensure!(optimum == 0.0, "exhaustive optimum {optimum}");
    for seed in 0..50 {
        let m = kmeans(&tiny, 2, seed, &opts).map_err(|e| e.to_string())?;
        let got = sse(&tiny.real_rows(), match &m.centers {
            Centers::Means(c) => c,
            _ => unreachable!(),
        }, &m.assignments.iter().map(|a| a - 1).collect::<Vec<_>>());
        ensure!((got - optimum).abs() <= 1e-9, "seed {seed}: SSE {got} on {{0,0,10,10}}");
    }
    Ok("200 fixtures monotone, converged, Voronoi-consistent; {0,0,10,10} reaches SSE 0".into())
}

// ---------------------------------------------------------------- 3

fn criterion_3() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for f in 0..200 {
        let n = rng.random_range(3..=40);
        let p = rng.random_range(1..=5);
        let k = rng.random_range(1..=n.min(6));
        let data = DataMatrix::from_codes(random_codes(&mut rng, n, p, 4));
        let init = if f % 2 == 0 { ModesInit::Distinct } else { ModesInit::Huang };
        let m = kmodes(&data, k, rng.random(), &KModesOptions { init, ..Default::default() })
            .map_err(|e| e.to_string())?;
        for w in m.history.windows(2) {
            ensure!(w[1] <= w[0], "fixture {f}: cost rose {} -> {}", w[0], w[1]);
        }
        let Centers::Modes(modes) = &m.centers else { return Err("k-modes without modes".into()) };
        for (c, mode) in modes.iter().enumerate() {
            let members: Vec<&Vec<i64>> =
                data.codes.iter().zip(&m.assignments).filter(|(_, &a)| a == c + 1).map(|(r, _)| r).collect();
            for j in 0..p {
                let mut freq: BTreeMap<i64, usize> = BTreeMap::new();
                for r in &members {
                    *freq.entry(r[j]).or_default() += 1;
                }
                let top = freq.values().copied().max().unwrap_or(0);
                ensure!(freq.get(&mode[j]).copied().unwrap_or(0) == top, "fixture {f}: mode {} column {j} not a majority", c + 1);
            }
        }
        let cost: usize = data
            .codes
            .iter()
            .zip(&m.assignments)
            .map(|(r, &a)| r.iter().zip(&modes[a - 1]).filter(|(x, y)| x != y).count())
            .sum();
        ensure!(Some(cost as f64) == m.objective, "fixture {f}: cost {cost} vs {:?}", m.objective);
    }

    // Two distinct records cannot feed three modes.
    let dup = DataMatrix::from_codes(vec![vec![1, 1], vec![1, 1], vec![2, 2], vec![2, 2], vec![1, 1]]);
    let m = kmodes(&dup, 3, 7, &KModesOptions::default()).map_err(|e| e.to_string())?;
    ensure!(m.n_clusters() == 2, "expected 2 clusters, got {}", m.n_clusters());
    ensure!(m.warnings.iter().any(|w| w.contains("no closest record")), "no warning: {:?}", m.warnings);
    ensure!(
        column_modes(&[&[1, 2][..], &[1, 3][..], &[2, 3][..]]) == vec![1, 3],
        "column_modes disagrees with hand majority"
    );

    for t in 0..10_000 {
        let p = rng.random_range(1..=8);
        let mut draw = || -> Vec<i64> { (0..p).map(|_| rng.random_range(1..=3)).collect() };
        let (a, b, c) = (draw(), draw(), draw());
        let d = |x: &[i64], y: &[i64]| simple_matching_distance(x, y).unwrap();
        ensure!(d(&a, &a) == 0, "triple {t}: d(a,a) != 0");
        ensure!(d(&a, &b) == d(&b, &a), "triple {t}: asymmetric");
        ensure!((d(&a, &b) == 0) == (a == b), "triple {t}: identity of indiscernibles");
        ensure!(d(&a, &c) <= d(&a, &b) + d(&b, &c), "triple {t}: triangle inequality");
    }
    Ok("200 fixtures monotone with majority modes; collapse warns; 10000 metric triples".into())
}

// ---------------------------------------------------------------- 4

fn box_muller(rng: &mut ChaCha8Rng) -> f64 {
    let u1: f64 = 1.0 - rng.random::<f64>();
    let u2: f64 = rng.random();
    (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
}

fn criterion_4() -> Outcome {
    let alpha = 0.05;
    let z = Normal::standard().inverse_cdf(alpha);
    ensure!((inverse_normal_cdf(alpha) - z).abs() < 1e-12, "z(0.05) {} vs oracle {z}", inverse_normal_cdf(alpha));
    ensure!((z + 1.6449).abs() < 1e-4, "oracle z {z}");

    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for f in 0..100 {
        let n = rng.random_range(20..=3000);
        let mut vals: BTreeSet<u64> = BTreeSet::new();
        while vals.len() < n {
            vals.insert(rng.random_range(0..1_000_000_000));
        }
        let mut vals: Vec<f64> = vals.into_iter().map(|v| v as f64 / 1e3).collect();
        for i in (1..n).rev() {
            vals.swap(i, rng.random_range(0..=i));
        }
        let values: Vec<(String, f64)> = vals.iter().enumerate().map(|(i, &v)| (format!("r{i}"), v)).collect();
        let t = tail_threshold("q", &values, alpha, Branch::Empirical).map_err(|e| e.to_string())?;
        let want = 5 * (n + 1) / 100;
        ensure!(t.flagged_ids.len() == want, "fixture {f}: n={n} flagged {} want {want}", t.flagged_ids.len());

        let transforms: [fn(f64) -> f64; 4] = [f64::exp, |x| x * x * x, |x| 2.0 * x + 7.0, f64::atan];
        for (ti, tf) in transforms.iter().enumerate() {
            let moved: Vec<(String, f64)> = values.iter().map(|(id, v)| (id.clone(), tf(*v / 1e6))).collect();
            let t2 = tail_threshold("q", &moved, alpha, Branch::Empirical).map_err(|e| e.to_string())?;
            ensure!(t2.flagged_ids == t.flagged_ids, "fixture {f}: transform {ti} changed the flagged set");
        }
    }

    for f in 0..50 {
        let n = rng.random_range(200..=5000);
        let mu = rng.random_range(-5.0..5.0);
        let sigma = rng.random_range(0.5..3.0);
        let values: Vec<(String, f64)> =
            (0..n).map(|i| (format!("r{i}"), mu + sigma * box_muller(&mut rng))).collect();
        let xs: Vec<f64> = values.iter().map(|v| v.1).collect();
        let mean = xs.iter().sum::<f64>() / n as f64;
        let sd = (xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n as f64 - 1.0)).sqrt();
        let t = tail_threshold("q", &values, alpha, Branch::Normal).map_err(|e| e.to_string())?;
        let cutoff = t.cutoff_value.unwrap();
        let want = mean - 1.6449 * sd;
        ensure!((cutoff - want).abs() < 1e-3, "fixture {f}: cutoff {cutoff} vs {want}");
        let exact = mean + z * sd;
        ensure!((cutoff - exact).abs() < 1e-9, "fixture {f}: cutoff {cutoff} vs oracle {exact}");
        let flagged = xs.iter().filter(|&&x| x <= cutoff).count();
        ensure!(flagged == t.flagged_ids.len(), "fixture {f}: flagged count");
    }
    Ok("empirical position exact on 100 tie-free sets; normal cutoff matches oracle; monotone-invariant".into())
}

// ---------------------------------------------------------------- 5

fn random_correlation(rng: &mut ChaCha8Rng, p: usize) -> Matrix {
    let n = p + rng.random_range(5..40);
    let ids: Vec<String> = (0..p).map(|j| format!("q{j}")).collect();
    let mix: Vec<Vec<f64>> = (0..p).map(|_| (0..p).map(|_| rng.random_range(-1.0..1.0)).collect()).collect();
    let recs: Vec<RespondentRecord> = (0..n)
        .map(|i| {
            let latent: Vec<f64> = (0..p).map(|_| box_muller(rng)).collect();
            ids.iter().enumerate().fold(RespondentRecord::new(format!("r{i}")), |r, (j, id)| {
                let v: f64 = mix[j].iter().zip(&latent).map(|(m, l)| m * l).sum();
                r.with(id, (v * 1000.0).round() as i64)
            })
        })
        .collect();
    let refs: Vec<&str> = ids.iter().map(String::as_str).collect();
    correlation_matrix(&recs, &refs).unwrap().values
}

fn criterion_5() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut worst = (0.0f64, 0.0f64, 0.0f64, 0.0f64);
    for f in 0..100 {
        let p = rng.random_range(2..=12);
        let m = random_correlation(&mut rng, p);
        let eig = symmetric_eigen(&m).map_err(|e| e.to_string())?;
        for c in 0..p {
            let v = eig.vectors.column(c);
            for r in 0..p {
                let mv: f64 = (0..p).map(|j| m[(r, j)] * v[j]).sum();
                let res = (mv - eig.values[c] * v[r]).abs();
                worst.0 = worst.0.max(res);
                ensure!(res <= 1e-8, "matrix {f}: residual {res}");
            }
        }
        let gram = eig.vectors.transpose().matmul(&eig.vectors);
        let orth = max_abs(&gram, &Matrix::identity(p));
        worst.1 = worst.1.max(orth);
        ensure!(orth <= 1e-10, "matrix {f}: orthonormality {orth}");

        let nm = DMatrix::from_fn(p, p, |r, c| m[(r, c)]);
        let mut oracle: Vec<f64> = nm.symmetric_eigen().eigenvalues.iter().copied().collect();
        oracle.sort_by(|a, b| b.total_cmp(a));
        for (a, b) in eig.values.iter().zip(&oracle) {
            ensure!((a - b).abs() <= 1e-8, "matrix {f}: eigenvalue {a} vs nalgebra {b}");
        }

        let k = rng.random_range(2..=p.clamp(2, 5));
        let mut loadings = eig.vectors.leading_columns(k);
        for r in 0..p {
            for c in 0..k {
                loadings[(r, c)] *= eig.values[c].max(0.0).sqrt();
            }
        }
        let vm = varimax(&loadings, &VarimaxOptions::default());
        let (h0, h1) = (loadings.row_sums_of_squares(), vm.rotated.row_sums_of_squares());
        let comm = h0.iter().zip(&h1).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        worst.2 = worst.2.max(comm);
        ensure!(comm <= 1e-6, "matrix {f}: communality drift {comm}");
        let rr = max_abs(&vm.rotation.transpose().matmul(&vm.rotation), &Matrix::identity(k));
        worst.3 = worst.3.max(rr);
        ensure!(rr <= 1e-8, "matrix {f}: rotation not orthogonal ({rr})");
        ensure!(max_abs(&loadings.matmul(&vm.rotation), &vm.rotated) <= 1e-8, "matrix {f}: rotated != L R");
    }

    let recs: Vec<RespondentRecord> =
        [1, 2, 3, 4, 5, 2].iter().enumerate().map(|(i, &v)| RespondentRecord::new(format!("r{i}")).with("a", v).with("b", v)).collect();
    let (_, eig) = pca(&recs, &["a", "b"], PcaBasis::Correlation).map_err(|e| e.to_string())?;
    ensure!(
        (eig.values[0] - 2.0).abs() <= 1e-10 && eig.values[1].abs() <= 1e-10,
        "rank-1 eigenvalues {:?}",
        eig.values
    );
    Ok(format!(
        "100 matrices: residual {:.1e}, orthonormality {:.1e}, communality {:.1e}, rotation {:.1e}; rank-1 gives {{2, 0}}",
        worst.0, worst.1, worst.2, worst.3
    ))
}

// ---------------------------------------------------------------- 6

fn criterion_6() -> Outcome {
    let start = Instant::now();
    let base = GeneratorSpec::load(configs().join("synthetic-demo.spec.toml")).map_err(|e| e.to_string())?;
    let schema = base.load_schema().map_err(|e| e.to_string())?;
    ensure!(base.n == 1000 && base.need_fraction == 0.15, "shipped spec has n={} need_fraction={}", base.n, base.need_fraction);
    let ks = [4usize, 5, 6];
    let mut wins = [0usize; 3];
    let mut single_deg = [0usize; 3];
    let mut average_deg = [0usize; 3];
    for s in 0..10u64 {
        let mut spec = base.clone();
        spec.seed = base.seed + s;
        let out = generate(&spec, &schema).map_err(|e| e.to_string())?;
        let (clean, _) = clean_cohort(&out.records, &schema);
        let qids = schema.question_ids();
        let red = reduce(&clean, &qids, &ReductionConfig::default()).map_err(|e| e.to_string())?;
        let data = DataMatrix::from_records(&clean, red.retained()).map_err(|e| e.to_string())?;
        let truth: Vec<BaselineLabel> = align_labels(&out.truth, &data.respondent_ids);
        let cfg = ClusterStageConfig { methods: Method::ALL.to_vec(), k: ks.to_vec(), seeds: vec![s], ..Default::default() };
        let models = fit_all(&data, &cfg).map_err(|e| e.to_string())?;
        let mut recall: BTreeMap<(Method, usize), f64> = BTreeMap::new();
        let mut largest: BTreeMap<(Method, usize), (f64, bool)> = BTreeMap::new();
        for m in &models {
            let rep = evaluate(&data, m, &truth, &schema, NeedPolicy::Scored, &DegeneracyThresholds::default())
                .map_err(|e| e.to_string())?;
            recall.insert((m.method, m.k), rep.recall.total.fraction().unwrap_or(0.0));
            largest.insert((m.method, m.k), (rep.largest_share, rep.degenerate));
        }
        for (i, &k) in ks.iter().enumerate() {
            let km = recall[&(Method::Kmeans, k)];
            if km > recall[&(Method::Kmodes, k)] && km > recall[&(Method::HclustComplete, k)] {
                wins[i] += 1;
            }
            let (ls, d) = largest[&(Method::HclustSingle, k)];
            if d && ls > 0.8 {
                single_deg[i] += 1;
            }
            let (ls, d) = largest[&(Method::HclustAverage, k)];
            if d && ls > 0.8 {
                average_deg[i] += 1;
            }
        }
    }
    let secs = start.elapsed().as_secs_f64();
    let detail = format!(
        "k-means wins {wins:?}, single degenerate {single_deg:?}, average degenerate {average_deg:?} of 10 at k=4,5,6 in {secs:.1}s"
    );
    ensure!(wins.iter().all(|&w| w >= 8), "{detail}");
    ensure!(single_deg.iter().chain(&average_deg).all(|&d| d >= 8), "{detail}");
    ensure!(secs < 60.0, "{detail}");
    Ok(detail)
}

// ---------------------------------------------------------------- 7

fn read_tree(root: &Path) -> BTreeMap<PathBuf, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else if p.file_name().is_some_and(|n| n != "manifest.json") {
                out.insert(p.strip_prefix(root).unwrap().to_path_buf(), fs::read(&p).unwrap());
            }
        }
    }
    out
}

fn criterion_7() -> Outcome {
    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    let mut hashes = Vec::new();
    let mut trees = Vec::new();
    for run in ["a", "b"] {
        let mut cfg = PipelineConfig::load(configs().join("synthetic-demo.toml")).map_err(|e| e.to_string())?;
        cfg.output_dir = tmp.path().join(run);
        let manifest = run_pipeline(&cfg).map_err(|e| e.to_string())?;
        ensure!(manifest.recompute_hash() == manifest.content_hash, "run {run}: manifest hash does not recompute");
        let on_disk: serde_json::Value =
            serde_json::from_slice(&fs::read(cfg.output_dir.join("manifest.json")).map_err(|e| e.to_string())?)
                .map_err(|e| e.to_string())?;
        ensure!(on_disk["content_hash"] == manifest.content_hash.as_str(), "run {run}: manifest.json disagrees");
        hashes.push(manifest.content_hash);
        trees.push((manifest.artifacts.len(), read_tree(&cfg.output_dir)));
    }
    ensure!(hashes[0] == hashes[1], "content hashes differ: {} vs {}", hashes[0], hashes[1]);
    ensure!(trees[0].1 == trees[1].1, "artifact bytes differ between runs");
    let stages: BTreeSet<String> = trees[0]
        .1
        .keys()
        .filter_map(|p| p.components().next().map(|c| c.as_os_str().to_string_lossy().into_owned()))
        .collect();
    Ok(format!(
        "two runs share content hash {}.. over {} artifacts in stages {:?}",
        &hashes[0][..12],
        trees[0].0,
        stages
    ))
}

// ---------------------------------------------------------------- 8

fn criterion_8() -> Outcome {
    let mut spec = GeneratorSpec::load(configs().join("synthetic-demo.spec.toml")).map_err(|e| e.to_string())?;
    let schema = spec.load_schema().map_err(|e| e.to_string())?;
    spec.noise = 0.12;
    spec.seed = 8;
    let out = generate(&spec, &schema).map_err(|e| e.to_string())?;
    ensure!(!out.corrupted.is_empty(), "no corruption was applied");
    let (clean, report) = clean_cohort(&out.records, &schema);
    ensure!(report.total_in == out.records.len(), "total_in {}", report.total_in);
    ensure!(report.total_in - report.removed() == report.total_out, "counts do not reconcile");
    ensure!(report.total_out == clean.len(), "total_out {} vs {} kept", report.total_out, clean.len());
    let expect = |kind: Corruption| -> BTreeSet<String> {
        out.corrupted.iter().filter(|(_, c)| *c == kind).map(|(id, _)| id.clone()).collect()
    };
    let as_set = |v: &[String]| v.iter().cloned().collect::<BTreeSet<String>>();
    ensure!(as_set(&report.removed_out_of_range) == expect(Corruption::OutOfRange), "out-of-range removals differ from injected");
    ensure!(as_set(&report.removed_inconsistent) == expect(Corruption::Inconsistent), "inconsistent removals differ from injected");
    let (again, second) = clean_cohort(&clean, &schema);
    ensure!(again == clean, "second cleaning changed the cohort");
    ensure!(second.removed() == 0 && second.total_in == second.total_out, "second cleaning removed records");
    Ok(format!(
        "{} in, {} out of range, {} inconsistent, {} incomplete, {} out; idempotent",
        report.total_in,
        report.removed_out_of_range.len(),
        report.removed_inconsistent.len(),
        report.removed_incomplete.len(),
        report.total_out
    ))
}

// ---------------------------------------------------------------- 9

fn check_golden(name: &str, got: &str) -> Result<(), String> {
    let path = golden_dir().join(name);
    if std::env::var_os("UPDATE_GOLDEN").is_some() {
        fs::create_dir_all(golden_dir()).map_err(|e| e.to_string())?;
        fs::write(&path, got).map_err(|e| e.to_string())?;
    }
    let want = fs::read_to_string(&path).map_err(|e| format!("{}: {e}", path.display()))?;
    ensure!(got == want, "{name} differs from golden:\n--- got\n{got}--- want\n{want}");
    Ok(())
}

const REASONS: [(&str, &str, &str); 5] = [
    ("rooms", "single-room", "Living in single room"),
    ("earners", "no-earners", "None of the family members constantly contributes to the family income"),
    ("meals", "one-meal", "Only one meal per day"),
    ("electricity", "no-electricity", "No electricity"),
    ("water", "no-water", "No access to water"),
];

fn table_schema() -> SurveySchema {
    let qs = REASONS
        .iter()
        .map(|(id, tag, label)| {
            let mut q = QuestionSpec::binary(id).with_indicator(PovertyIndicator::BinaryLack).with_reason(tag);
            q.reason_label = Some(label.to_string());
            q
        })
        .collect();
    SurveySchema::new(qs, vec![], REASONS.iter().map(|r| r.0.to_string()).collect()).unwrap()
}

/// Builds one single-reason respondent per counted cell, plus `extra`
/// unflagged respondents per cluster so every cluster is populated.
fn table_fixture(counts: &[[usize; 4]; 5], method: Method) -> (DataMatrix, survclust::clustering::ClusterModel, Vec<BaselineLabel>) {
    let mut ids = Vec::new();
    let mut assignments = Vec::new();
    let mut labels = Vec::new();
    let mut codes = Vec::new();
    for (r, row) in counts.iter().enumerate() {
        for (c, &n) in row.iter().enumerate() {
            for _ in 0..n {
                let id = format!("s{:04}", ids.len());
                labels.push(BaselineLabel { respondent_id: id.clone(), reasons: vec![REASONS[r].1.to_string()] });
                ids.push(id);
                assignments.push(c + 1);
                codes.push((0..5).map(|q| if q == r { 2 } else { 1 }).collect::<Vec<i64>>());
            }
        }
    }
    for c in 0..4 {
        for _ in 0..10 {
            let id = format!("s{:04}", ids.len());
            labels.push(BaselineLabel { respondent_id: id.clone(), reasons: vec![] });
            ids.push(id);
            assignments.push(c + 1);
            codes.push(vec![1; 5]);
        }
    }
    let mut data = DataMatrix::from_codes(codes);
    data.respondent_ids = ids.clone();
    data.question_ids = REASONS.iter().map(|r| r.0.to_string()).collect();
    let model = survclust::clustering::ClusterModel {
        method,
        k: 4,
        respondent_ids: ids,
        question_ids: data.question_ids.clone(),
        assignments,
        centers: Centers::None,
        iterations: 0,
        converged: true,
        seed: None,
        objective: None,
        standardized: false,
        history: vec![],
        warnings: vec![],
        dendrogram: None,
    };
    (data, model, labels)
}

fn sparse_loading_model() -> FactorModel {
    let ids = ["rooms", "sleep_company", "job", "early_meal", "household_size", "dad_work"];
    let rotated = Matrix::from_rows(&[
        vec![0.662, 0.120, 0.330],
        vec![-0.608, 0.05, 0.52],
        vec![0.01, 0.997, -0.02],
        vec![0.2999, -0.30, 0.0],
        vec![0.15, 0.10, -0.331],
        vec![0.312, -0.2999, 0.0],
    ]);
    let ss = rotated.column_sums_of_squares();
    let prop: Vec<f64> = ss.iter().map(|v| v / ids.len() as f64).collect();
    let cum: Vec<f64> = prop.iter().scan(0.0, |a, v| { *a += v; Some(*a) }).collect();
    FactorModel {
        basis: PcaBasis::Correlation,
        loading_scale: LoadingScale::Eigenvector,
        loading_threshold: 0.30,
        question_ids: ids.iter().map(|s| s.to_string()).collect(),
        eigenvalues: vec![],
        components: Matrix::identity(3),
        kaiser_count: 3,
        n_retained: 3,
        unrotated: rotated.clone(),
        rotated,
        rotation: Matrix::identity(3),
        varimax_converged: true,
        varimax_iterations: 0,
        ss_loadings: ss,
        proportion_var: prop,
        cumulative_var: cum,
        retained_questions: ids.iter().map(|s| s.to_string()).collect(),
        dropped_questions: vec![],
    }
}

fn criterion_9() -> Outcome {
    let loadings = render_loading_table(&sparse_loading_model());
    check_golden("loadings.txt", &loadings)?;
    // -0.30 is kept; 0.2999 would also print as 0.300 but must stay blank.
    ensure!(loadings.matches("0.300").count() == 1 && loadings.contains("-0.300"), "threshold edge");

    let kmeans_t4 = [[0, 0, 0, 36], [3, 10, 5, 11], [7, 11, 7, 7], [0, 1, 0, 3], [2, 8, 5, 4]];
    let kmodes_t4 = [[9, 13, 9, 5], [12, 6, 5, 6], [8, 4, 10, 10], [0, 3, 1, 0], [5, 0, 10, 4]];
    let complete_t4 = [[1, 22, 5, 8], [9, 7, 9, 4], [13, 1, 13, 5], [0, 3, 1, 0], [8, 1, 8, 2]];
    let schema = table_schema();
    let mut reports = Vec::new();
    for (counts, method, need) in
        [(kmeans_t4, Method::Kmeans, 4), (kmodes_t4, Method::Kmodes, 2), (complete_t4, Method::HclustComplete, 2)]
    {
        let (data, model, labels) = table_fixture(&counts, method);
        let rows: Vec<ReasonRow> = survclust::evaluation::reason_rows(&schema);
        let table = contingency(&labels, &model, &rows).map_err(|e| e.to_string())?;
        if method == Method::Kmeans {
            let text = render_contingency(&table);
            check_golden("contingency-kmeans-k4.txt", &text)?;
            ensure!(text.lines().last().unwrap().split_whitespace().collect::<Vec<_>>() == ["SUM", "12", "30", "17", "61", "120"], "SUM row");
        }
        let rep = evaluate(&data, &model, &labels, &schema, NeedPolicy::Manual(need), &DegeneracyThresholds::default())
            .map_err(|e| e.to_string())?;
        reports.push(rep);
    }
    let refs: Vec<_> = reports.iter().collect();
    let cmp = render_comparison_table(&refs).map_err(|e| e.to_string())?;
    check_golden("comparison-k4.txt", &cmp)?;
    let sum_line = cmp.lines().find(|l| l.starts_with("Sum")).unwrap_or_default();
    for cell in ["61 (50.8%)", "26 (21.7%)", "34 (28.3%)"] {
        ensure!(sum_line.contains(cell), "Sum row lacks {cell}: {sum_line}");
    }
    ensure!(cmp.contains("36 (100.0%)") && cmp.contains("3 (75.0%)"), "per-reason cells");
    Ok("sparse loadings, contingency with SUM row/column and count (percent) cells match goldens".into())
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 9] = [
        ("hclust matches re-scan oracle", criterion_1),
        ("k-means contract", criterion_2),
        ("k-modes contract", criterion_3),
        ("tail threshold properties", criterion_4),
        ("eigen and varimax numerics", criterion_5),
        ("synthetic replication", criterion_6),
        ("pipeline determinism", criterion_7),
        ("cleaning audit", criterion_8),
        ("report fidelity", criterion_9),
    ];
    let filter: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let mut failed = 0;
    for (i, (name, f)) in criteria.iter().enumerate() {
        let label = format!("criterion {} ({name})", i + 1);
        if !filter.is_empty() && !filter.iter().any(|x| label.contains(x.as_str())) {
            continue;
        }
        match f() {
            Ok(detail) => println!("PASS {label}: {detail}"),
            Err(why) => {
                failed += 1;
                println!("FAIL {label}: {why}");
            }
        }
    }
    if failed > 0 {
        std::process::exit(1);
    }
}
