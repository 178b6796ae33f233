//! The train -> encode -> cluster -> score pipeline, the method comparison
//! matrix, the alpha sweep, and result export.

use std::path::Path;

use microdl_core::cluster::spectral_cluster;
use microdl_core::micro::TrainingConfig;
use microdl_core::numerics::{Matrix, RngStream};
use microdl_core::stack::{encode, train_stack, StackSpec};
use microdl_core::stats::{
    clustering_accuracy, fm_index, friedman_aligned_ranks, jaccard_index, nemenyi_posthoc,
    pair_counts, rand_index,
};
use microdl_core::{Error, Result};
use serde::{Deserialize, Serialize};

use crate::config::{DatasetSpec, ExperimentConfig, Method};
use crate::dataset::{generate_blobs, load_csv, standardize, subsample, Dataset};

/// Aggregated metrics of one (dataset, method, alpha) cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub dataset: String,
    pub method: String,
    pub alpha: f64,
    pub repeats: usize,
    pub accuracy_mean: f64,
    pub accuracy_std: f64,
    pub jaccard_mean: f64,
    pub jaccard_std: f64,
    pub fm_mean: f64,
    pub fm_std: f64,
    pub rand_mean: f64,
    pub rand_std: f64,
    /// Root of the RNG stream family used by this cell, for replay.
    pub rng_stream: String,
    /// Set when the cell failed; metric fields are zero then.
    pub error: Option<String>,
}

/// Friedman aligned-ranks comparison across the method columns, when
/// requested and well-formed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FriedmanReport {
    pub methods: Vec<String>,
    pub column_rank_totals: Vec<f64>,
    pub t_statistic: f64,
    pub p_value: f64,
    pub nemenyi_p: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultsTable {
    pub rows: Vec<ResultRow>,
    pub friedman: Option<FriedmanReport>,
}

fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}

struct CellMetrics {
    accuracy: f64,
    jaccard: f64,
    fm: f64,
    rand: f64,
}

fn score(truth: &[usize], pred: &[usize]) -> Result<CellMetrics> {
    let counts = pair_counts(truth, pred)?;
    Ok(CellMetrics {
        accuracy: clustering_accuracy(truth, pred)?,
        jaccard: jaccard_index(&counts),
        fm: fm_index(&counts),
        rand: rand_index(&counts),
    })
}

fn load_dataset(spec: &DatasetSpec, sample_n: Option<usize>, sample_seed: u64) -> Result<Dataset> {
    let raw = match spec {
        DatasetSpec::Csv { path, label_column } => load_csv(path, label_column)?,
        DatasetSpec::Blobs {
            k,
            per_cluster,
            dim,
            separation,
            seed,
        } => generate_blobs(*k, *per_cluster, *dim, *separation, *seed)?,
    };
    match sample_n {
        Some(n) => subsample(&raw, n, sample_seed),
        None => Ok(raw),
    }
}

/// Run one pipeline cell: train (or skip for raw features), encode, cluster,
/// score. Each repeat owns a child stream whose id is logged for replay.
fn run_cell(
    data: &Dataset,
    method: Method,
    alpha: f64,
    cfg: &ExperimentConfig,
    cell_stream: &RngStream,
) -> Result<Vec<CellMetrics>> {
    let standardized = standardize(data)?;
    for &col in &standardized.dropped_features {
        log::warn!(
            "dataset {}: dropped zero-variance feature column {col}",
            data.name
        );
    }
    let features = &standardized.dataset.features;
    let labels = &standardized.dataset.labels;
    let k = standardized.dataset.class_count;

    let mut metrics = Vec::with_capacity(cfg.repeats);
    for repeat in 0..cfg.repeats {
        let mut stream = cell_stream.child(repeat as u64);
        log::info!(
            "cell dataset={} method={} alpha={} repeat={} rng_stream={}",
            data.name,
            method.name(),
            alpha,
            repeat,
            stream.id()
        );
        let train_seed = stream.next_u64();
        let cluster_seed = RngStream::from_seed(cfg.clustering_seed)
            .child(repeat as u64)
            .next_u64();
        let encoded: Matrix = match method {
            Method::RawFeatures => features.clone(),
            Method::MicroDl | Method::NMicroDl => {
                let training = TrainingConfig {
                    alpha,
                    seed: train_seed,
                    ..cfg.training.clone()
                };
                let spec = StackSpec::uniform(
                    cfg.layers,
                    features.cols(),
                    training,
                    method == Method::MicroDl,
                );
                let stack = train_stack(features, labels, &spec)?;
                encode(&stack, features)?
            }
        };
        let assignment = spectral_cluster(&encoded, k, cluster_seed)?;
        metrics.push(score(labels, assignment.labels())?);
    }
    Ok(metrics)
}

fn aggregate(
    dataset: &str,
    method: &str,
    alpha: f64,
    repeats: usize,
    stream_id: String,
    outcome: Result<Vec<CellMetrics>>,
) -> ResultRow {
    match outcome {
        Ok(metrics) => {
            let (accuracy_mean, accuracy_std) =
                mean_std(&metrics.iter().map(|m| m.accuracy).collect::<Vec<_>>());
            let (jaccard_mean, jaccard_std) =
                mean_std(&metrics.iter().map(|m| m.jaccard).collect::<Vec<_>>());
            let (fm_mean, fm_std) = mean_std(&metrics.iter().map(|m| m.fm).collect::<Vec<_>>());
            let (rand_mean, rand_std) =
                mean_std(&metrics.iter().map(|m| m.rand).collect::<Vec<_>>());
            ResultRow {
                dataset: dataset.into(),
                method: method.into(),
                alpha,
                repeats,
                accuracy_mean,
                accuracy_std,
                jaccard_mean,
                jaccard_std,
                fm_mean,
                fm_std,
                rand_mean,
                rand_std,
                rng_stream: stream_id,
                error: None,
            }
        }
        Err(e) => ResultRow {
            dataset: dataset.into(),
            method: method.into(),
            alpha,
            repeats,
            accuracy_mean: 0.0,
            accuracy_std: 0.0,
            jaccard_mean: 0.0,
            jaccard_std: 0.0,
            fm_mean: 0.0,
            fm_std: 0.0,
            rand_mean: 0.0,
            rand_std: 0.0,
            rng_stream: stream_id,
            error: Some(e.to_string()),
        },
    }
}

/// Execute the full comparison matrix: every dataset crossed with every
/// method (plus alpha-sweep rows), each averaged over the configured repeats.
/// A failed cell becomes an error row and the remaining cells continue.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ResultsTable> {
    cfg.validate()?;
    let root = RngStream::from_seed(cfg.training.seed);
    let mut rows = Vec::new();

    for (di, spec) in cfg.datasets.iter().enumerate() {
        let dataset_stream = root.child(di as u64);
        let data = match load_dataset(spec, cfg.sample_n, cfg.training.seed) {
            Ok(d) => d,
            Err(e) => {
                rows.push(aggregate(
                    &format!("dataset-{di}"),
                    "load",
                    cfg.training.alpha,
                    cfg.repeats,
                    dataset_stream.id(),
                    Err(e),
                ));
                continue;
            }
        };
        for (mi, &method) in cfg.methods.iter().enumerate() {
            let alpha = match method {
                Method::MicroDl => cfg.training.alpha,
                _ => 0.0,
            };
            let cell_stream = dataset_stream.child(mi as u64);
            let outcome = run_cell(&data, method, alpha, cfg, &cell_stream);
            rows.push(aggregate(
                &data.name,
                method.name(),
                alpha,
                cfg.repeats,
                cell_stream.id(),
                outcome,
            ));
        }
        for (ai, &alpha) in cfg.alpha_sweep.iter().enumerate() {
            let cell_stream = dataset_stream.child(100 + ai as u64);
            let outcome = run_cell(&data, Method::MicroDl, alpha, cfg, &cell_stream);
            rows.push(aggregate(
                &data.name,
                "micro-dl-sweep",
                alpha,
                cfg.repeats,
                cell_stream.id(),
                outcome,
            ));
        }
    }

    let friedman = if cfg.friedman {
        build_friedman(cfg, &rows)?
    } else {
        None
    };
    Ok(ResultsTable { rows, friedman })
}

/// Friedman aligned ranks over accuracy means, datasets x methods; skipped
/// (with a log note) when the table is too small or has failed cells.
fn build_friedman(cfg: &ExperimentConfig, rows: &[ResultRow]) -> Result<Option<FriedmanReport>> {
    let methods: Vec<&str> = cfg.methods.iter().map(|m| m.name()).collect();
    let datasets: Vec<&str> = {
        let mut seen = Vec::new();
        for r in rows {
            if r.error.is_none() && !seen.contains(&r.dataset.as_str()) {
                seen.push(r.dataset.as_str());
            }
        }
        seen
    };
    if methods.len() < 2 || datasets.len() < 2 {
        log::warn!("friedman skipped: needs at least 2 methods and 2 datasets");
        return Ok(None);
    }
    let mut values = Vec::with_capacity(datasets.len() * methods.len());
    for d in &datasets {
        for m in &methods {
            let row = rows
                .iter()
                .find(|r| r.dataset == *d && r.method == *m && r.error.is_none());
            match row {
                Some(r) => values.push(r.accuracy_mean),
                None => {
                    log::warn!("friedman skipped: missing cell ({d}, {m})");
                    return Ok(None);
                }
            }
        }
    }
    let table = friedman_aligned_ranks(&Matrix::from_vec(
        datasets.len(),
        methods.len(),
        values,
    )?)?;
    let nemenyi = nemenyi_posthoc(&table)?;
    Ok(Some(FriedmanReport {
        methods: methods.iter().map(|s| s.to_string()).collect(),
        column_rank_totals: table.column_totals.clone(),
        t_statistic: table.t_statistic,
        p_value: table.p_value,
        nemenyi_p: nemenyi,
    }))
}

/// Fixed CSV column order; documented in the README.
pub const RESULTS_CSV_HEADER: &str = "dataset,method,alpha,repeats,accuracy_mean,accuracy_std,jaccard_mean,jaccard_std,fm_mean,fm_std,rand_mean,rand_std,rng_stream,error";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExportFormat {
    Csv,
    Json,
}

pub fn export_results(table: &ResultsTable, path: &Path, format: ExportFormat) -> Result<()> {
    let bytes = match format {
        ExportFormat::Csv => results_to_csv(table).into_bytes(),
        ExportFormat::Json => serde_json::to_vec_pretty(table).map_err(Error::from)?,
    };
    std::fs::write(path, bytes)?;
    Ok(())
}

pub fn results_to_csv(table: &ResultsTable) -> String {
    let mut out = String::from(RESULTS_CSV_HEADER);
    out.push('\n');
    for r in &table.rows {
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{},{},{},{},{},{},{}\n",
            r.dataset,
            r.method,
            r.alpha,
            r.repeats,
            r.accuracy_mean,
            r.accuracy_std,
            r.jaccard_mean,
            r.jaccard_std,
            r.fm_mean,
            r.fm_std,
            r.rand_mean,
            r.rand_std,
            r.rng_stream,
            r.error.as_deref().unwrap_or("")
        ));
    }
    out
}

/// Parse a results file produced by [`export_results`]; format detected from
/// the extension (`.json` or `.csv`).
pub fn import_results(path: &Path) -> Result<ResultsTable> {
    let text = std::fs::read_to_string(path)?;
    if path.extension().is_some_and(|e| e == "json") {
        return serde_json::from_str(&text).map_err(Error::from);
    }
    results_from_csv(&text)
}

pub fn results_from_csv(text: &str) -> Result<ResultsTable> {
    let mut lines = text.lines();
    let header = lines
        .next()
        .ok_or_else(|| Error::Data("results csv is empty".into()))?;
    if header != RESULTS_CSV_HEADER {
        return Err(Error::Data("unrecognized results csv header".into()));
    }
    let mut rows = Vec::new();
    for (i, line) in lines.enumerate() {
        if line.is_empty() {
            continue;
        }
        let parts: Vec<&str> = line.split(',').collect();
        if parts.len() != 14 {
            return Err(Error::Data(format!(
                "results csv row {} has {} fields",
                i + 2,
                parts.len()
            )));
        }
        let f = |s: &str, what: &str| -> Result<f64> {
            s.parse()
                .map_err(|_| Error::Data(format!("row {}: bad {what} {s:?}", i + 2)))
        };
        rows.push(ResultRow {
            dataset: parts[0].into(),
            method: parts[1].into(),
            alpha: f(parts[2], "alpha")?,
            repeats: parts[3]
                .parse()
                .map_err(|_| Error::Data(format!("row {}: bad repeats", i + 2)))?,
            accuracy_mean: f(parts[4], "accuracy_mean")?,
            accuracy_std: f(parts[5], "accuracy_std")?,
            jaccard_mean: f(parts[6], "jaccard_mean")?,
            jaccard_std: f(parts[7], "jaccard_std")?,
            fm_mean: f(parts[8], "fm_mean")?,
            fm_std: f(parts[9], "fm_std")?,
            rand_mean: f(parts[10], "rand_mean")?,
            rand_std: f(parts[11], "rand_std")?,
            rng_stream: parts[12].into(),
            error: if parts[13].is_empty() {
                None
            } else {
                Some(parts[13].into())
            },
        });
    }
    Ok(ResultsTable {
        rows,
        friedman: None,
    })
}

/// One metric report record, the JSON shape named in the eval interface.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub dataset: String,
    pub algorithm: String,
    pub accuracy: f64,
    pub jaccard: f64,
    pub fm: f64,
    pub rand: f64,
    pub seed: u64,
}

pub fn metric_report(
    dataset: &str,
    algorithm: &str,
    truth: &[usize],
    pred: &[usize],
    seed: u64,
) -> Result<MetricReport> {
    let m = score(truth, pred)?;
    Ok(MetricReport {
        dataset: dataset.into(),
        algorithm: algorithm.into(),
        accuracy: m.accuracy,
        jaccard: m.jaccard,
        fm: m.fm,
        rand: m.rand,
        seed,
    })
}
