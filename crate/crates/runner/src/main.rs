use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};

use microdl_core::cluster::spectral_cluster;
use microdl_core::micro::{GradientMode, SpiScaling, TrainingConfig, EPOCH_LOG_HEADER};
use microdl_core::numerics::Matrix;
use microdl_core::stack::{encode, load_stack, save_stack, StackSpec, TrainedStack};
use microdl_core::{Error, Result};

use microdl_runner::config::{load_config, ExperimentConfig};
use microdl_runner::dataset::{load_csv, standardize};
use microdl_runner::experiment::{
    export_results, import_results, metric_report, run_experiment, ExportFormat,
};
use microdl_runner::plot::{render_plots, PlotKind};

/// Micro-supervised disturbance learning: train deep feature stacks with a
/// handful of labeled pairs, cluster the features, and score the result.
#[derive(Parser)]
#[command(name = "microdl", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum CliMode {
    Derived,
    PaperLiteral,
}

#[derive(Clone, Copy, ValueEnum)]
enum CliScaling {
    Objective,
    PaperLiteral,
}

#[derive(Clone, Copy, ValueEnum)]
enum CliPlotKind {
    GroupedBars,
    AlphaCurve,
}

#[derive(Subcommand)]
enum Command {
    /// Train a feature stack on a CSV dataset and save its checkpoint.
    Train {
        #[arg(long)]
        data: PathBuf,
        /// Name of the label column in the CSV header.
        #[arg(long, default_value = "label")]
        label_column: String,
        #[arg(long, default_value_t = 3)]
        layers: usize,
        #[arg(long, default_value_t = 0.3)]
        alpha: f64,
        #[arg(long, default_value_t = 0.02)]
        eps: f64,
        #[arg(long, default_value_t = 30)]
        epochs: usize,
        #[arg(long, default_value_t = 64)]
        batch_size: usize,
        #[arg(long, value_enum, default_value_t = CliMode::Derived)]
        mode: CliMode,
        #[arg(long, value_enum, default_value_t = CliScaling::Objective)]
        scaling: CliScaling,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Train the unsupervised twin (no disturbance terms).
        #[arg(long)]
        no_micro: bool,
        /// Stack checkpoint output path (JSON).
        #[arg(long)]
        out: PathBuf,
        /// Directory for per-layer epoch logs (CSV); omitted if not given.
        #[arg(long)]
        logs: Option<PathBuf>,
    },
    /// Encode a dataset through a trained stack into hidden features.
    Encode {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long, default_value = "label")]
        label_column: String,
        /// Features CSV output path.
        #[arg(long)]
        out: PathBuf,
    },
    /// Spectral-cluster a numeric feature CSV.
    Cluster {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        k: usize,
        #[arg(long, default_value_t = 7)]
        seed: u64,
        /// Assignment CSV output path (index,cluster).
        #[arg(long)]
        out: PathBuf,
    },
    /// Score a cluster assignment against the true labels.
    Eval {
        /// Original dataset CSV holding the truth labels.
        #[arg(long)]
        truth: PathBuf,
        #[arg(long, default_value = "label")]
        label_column: String,
        /// Assignment CSV produced by `cluster`.
        #[arg(long)]
        pred: PathBuf,
        #[arg(long, default_value = "dataset")]
        dataset: String,
        #[arg(long, default_value = "micro-dl")]
        algorithm: String,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Write the JSON report here instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run the full comparison matrix described by a config file.
    Experiment {
        #[arg(long)]
        config: PathBuf,
        /// Output directory for results.csv, results.json and plots.
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        alpha: Option<f64>,
        #[arg(long, value_enum)]
        mode: Option<CliMode>,
        #[arg(long, value_enum)]
        scaling: Option<CliScaling>,
        #[arg(long)]
        layers: Option<usize>,
        /// Seeded reservoir subsample of each dataset to this many rows.
        #[arg(long)]
        sample_n: Option<usize>,
    },
    /// Sweep the scale coefficient and export the metric-vs-alpha results.
    SweepAlpha {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Comma-separated alpha values; defaults to 0.1..0.9.
        #[arg(long)]
        alphas: Option<String>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, value_enum)]
        mode: Option<CliMode>,
        #[arg(long, value_enum)]
        scaling: Option<CliScaling>,
        #[arg(long)]
        layers: Option<usize>,
    },
    /// Render plots from an exported results file.
    Plot {
        /// results.json or results.csv from `experiment` / `sweep-alpha`.
        #[arg(long)]
        results: PathBuf,
        #[arg(long, value_enum)]
        kind: CliPlotKind,
        #[arg(long)]
        out: PathBuf,
    },
}

fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    if let Err(e) = run(cli.command) {
        eprintln!("error: {e}");
        std::process::exit(e.exit_code());
    }
}

fn run(command: Command) -> Result<()> {
    match command {
        Command::Train {
            data,
            label_column,
            layers,
            alpha,
            eps,
            epochs,
            batch_size,
            mode,
            scaling,
            seed,
            no_micro,
            out,
            logs,
        } => {
            let dataset = load_csv(&data, &label_column)?;
            let standardized = standardize(&dataset)?;
            warn_dropped(&standardized.dropped_features, &dataset.name);
            let training = TrainingConfig {
                alpha,
                eps,
                epochs,
                batch_size,
                gradient_mode: mode.into(),
                spi_scaling: scaling.into(),
                seed,
            };
            let spec = StackSpec::uniform(
                layers,
                standardized.dataset.features.cols(),
                training,
                !no_micro,
            );
            let stack = microdl_core::stack::train_stack(
                &standardized.dataset.features,
                &standardized.dataset.labels,
                &spec,
            )?;
            if let Some(dir) = logs {
                std::fs::create_dir_all(&dir)?;
                write_layer_logs(&stack, &dir)?;
            }
            save_stack(&stack, &out)?;
            println!(
                "trained {} layers on {} samples; checkpoint at {}",
                stack.depth(),
                standardized.dataset.samples(),
                out.display()
            );
            Ok(())
        }
        Command::Encode {
            model,
            data,
            label_column,
            out,
        } => {
            let stack = load_stack(&model)?;
            let dataset = load_csv(&data, &label_column)?;
            let standardized = standardize(&dataset)?;
            warn_dropped(&standardized.dropped_features, &dataset.name);
            let features = encode(&stack, &standardized.dataset.features)?;
            write_feature_csv(&features, &out)?;
            println!(
                "encoded {} samples into {} features at {}",
                features.rows(),
                features.cols(),
                out.display()
            );
            Ok(())
        }
        Command::Cluster { data, k, seed, out } => {
            let features = read_feature_csv(&data)?;
            let assignment = spectral_cluster(&features, k, seed)?;
            let mut text = String::from("index,cluster\n");
            for (i, &c) in assignment.labels().iter().enumerate() {
                text.push_str(&format!("{i},{c}\n"));
            }
            std::fs::write(&out, text)?;
            println!("clustered {} samples into {k} clusters", features.rows());
            Ok(())
        }
        Command::Eval {
            truth,
            label_column,
            pred,
            dataset,
            algorithm,
            seed,
            out,
        } => {
            let truth_data = load_csv(&truth, &label_column)?;
            let assignment = read_assignment_csv(&pred)?;
            let report = metric_report(&dataset, &algorithm, &truth_data.labels, &assignment, seed)?;
            let json = serde_json::to_string_pretty(&report).map_err(Error::from)?;
            match out {
                Some(path) => std::fs::write(path, json)?,
                None => println!("{json}"),
            }
            Ok(())
        }
        Command::Experiment {
            config,
            out,
            seed,
            alpha,
            mode,
            scaling,
            layers,
            sample_n,
        } => {
            let mut cfg = load_config(&config)?;
            apply_overrides(&mut cfg, seed, alpha, mode, scaling, layers);
            if sample_n.is_some() {
                cfg.sample_n = sample_n;
            }
            let table = run_experiment(&cfg)?;
            std::fs::create_dir_all(&out)?;
            export_results(&table, &out.join("results.csv"), ExportFormat::Csv)?;
            export_results(&table, &out.join("results.json"), ExportFormat::Json)?;
            render_plots(&table, PlotKind::GroupedBars, &out.join("bars.svg"))?;
            if table.rows.iter().any(|r| r.method == "micro-dl-sweep") {
                render_plots(&table, PlotKind::AlphaCurve, &out.join("alpha.svg"))?;
            }
            println!(
                "experiment finished: {} result rows in {}",
                table.rows.len(),
                out.display()
            );
            Ok(())
        }
        Command::SweepAlpha {
            config,
            out,
            alphas,
            seed,
            mode,
            scaling,
            layers,
        } => {
            let mut cfg = load_config(&config)?;
            apply_overrides(&mut cfg, seed, None, mode, scaling, layers);
            cfg.methods = Vec::new();
            cfg.alpha_sweep = match alphas {
                Some(list) => list
                    .split(',')
                    .map(|a| {
                        a.trim()
                            .parse::<f64>()
                            .map_err(|_| Error::Config(format!("bad alpha {a:?}")))
                    })
                    .collect::<Result<Vec<f64>>>()?,
                None => {
                    if cfg.alpha_sweep.is_empty() {
                        (1..=9).map(|i| i as f64 / 10.0).collect()
                    } else {
                        cfg.alpha_sweep
                    }
                }
            };
            let table = run_experiment(&cfg)?;
            std::fs::create_dir_all(&out)?;
            export_results(&table, &out.join("results.csv"), ExportFormat::Csv)?;
            export_results(&table, &out.join("results.json"), ExportFormat::Json)?;
            render_plots(&table, PlotKind::AlphaCurve, &out.join("alpha.svg"))?;
            println!(
                "alpha sweep finished: {} rows in {}",
                table.rows.len(),
                out.display()
            );
            Ok(())
        }
        Command::Plot { results, kind, out } => {
            let table = import_results(&results)?;
            render_plots(&table, kind.into(), &out)?;
            println!("wrote {}", out.display());
            Ok(())
        }
    }
}

impl From<CliMode> for GradientMode {
    fn from(m: CliMode) -> Self {
        match m {
            CliMode::Derived => GradientMode::Derived,
            CliMode::PaperLiteral => GradientMode::PaperLiteral,
        }
    }
}

impl From<CliScaling> for SpiScaling {
    fn from(s: CliScaling) -> Self {
        match s {
            CliScaling::Objective => SpiScaling::ObjectiveConsistent,
            CliScaling::PaperLiteral => SpiScaling::PaperLiteral,
        }
    }
}

impl From<CliPlotKind> for PlotKind {
    fn from(k: CliPlotKind) -> Self {
        match k {
            CliPlotKind::GroupedBars => PlotKind::GroupedBars,
            CliPlotKind::AlphaCurve => PlotKind::AlphaCurve,
        }
    }
}

fn apply_overrides(
    cfg: &mut ExperimentConfig,
    seed: Option<u64>,
    alpha: Option<f64>,
    mode: Option<CliMode>,
    scaling: Option<CliScaling>,
    layers: Option<usize>,
) {
    if let Some(s) = seed {
        cfg.training.seed = s;
    }
    if let Some(a) = alpha {
        cfg.training.alpha = a;
    }
    if let Some(m) = mode {
        cfg.training.gradient_mode = m.into();
    }
    if let Some(s) = scaling {
        cfg.training.spi_scaling = s.into();
    }
    if let Some(l) = layers {
        cfg.layers = l;
    }
}

fn warn_dropped(dropped: &[usize], name: &str) {
    for &col in dropped {
        log::warn!("dataset {name}: dropped zero-variance feature column {col}");
    }
}

fn write_layer_logs(stack: &TrainedStack, dir: &Path) -> Result<()> {
    for (i, log) in stack.logs.iter().enumerate() {
        let mut text = String::from(EPOCH_LOG_HEADER);
        text.push('\n');
        for row in log {
            text.push_str(&row.csv_row());
            text.push('\n');
        }
        std::fs::write(dir.join(format!("layer{i}.log.csv")), text)?;
    }
    Ok(())
}

fn write_feature_csv(features: &Matrix, path: &Path) -> Result<()> {
    let mut text = String::new();
    let header: Vec<String> = (0..features.cols()).map(|c| format!("h{c}")).collect();
    text.push_str(&header.join(","));
    text.push('\n');
    for r in 0..features.rows() {
        let row: Vec<String> = features.row(r).iter().map(|v| format!("{v}")).collect();
        text.push_str(&row.join(","));
        text.push('\n');
    }
    std::fs::write(path, text)?;
    Ok(())
}

fn read_feature_csv(path: &Path) -> Result<Matrix> {
    let text = std::fs::read_to_string(path)?;
    let mut lines = text.lines();
    let header = lines
        .next()
        .ok_or_else(|| Error::Data("feature csv is empty".into()))?;
    let cols = header.split(',').count();
    let mut data = Vec::new();
    let mut rows = 0;
    for (i, line) in lines.enumerate() {
        if line.is_empty() {
            continue;
        }
        let values: Vec<&str> = line.split(',').collect();
        if values.len() != cols {
            return Err(Error::Data(format!(
                "feature csv row {} has {} cells, header has {cols}",
                i + 2,
                values.len()
            )));
        }
        for v in values {
            data.push(
                v.parse::<f64>()
                    .map_err(|_| Error::Data(format!("feature csv row {}: bad value {v:?}", i + 2)))?,
            );
        }
        rows += 1;
    }
    Matrix::from_vec(rows, cols, data)
}

fn read_assignment_csv(path: &Path) -> Result<Vec<usize>> {
    let text = std::fs::read_to_string(path)?;
    let mut lines = text.lines();
    let header = lines
        .next()
        .ok_or_else(|| Error::Data("assignment csv is empty".into()))?;
    if header != "index,cluster" {
        return Err(Error::Data(
            "assignment csv must start with index,cluster".into(),
        ));
    }
    let mut labels = Vec::new();
    for (i, line) in lines.enumerate() {
        if line.is_empty() {
            continue;
        }
        let (_, cluster) = line
            .split_once(',')
            .ok_or_else(|| Error::Data(format!("assignment row {} malformed", i + 2)))?;
        labels.push(
            cluster
                .parse::<usize>()
                .map_err(|_| Error::Data(format!("assignment row {}: bad cluster id", i + 2)))?,
        );
    }
    Ok(labels)
}
