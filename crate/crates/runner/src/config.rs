//! Experiment configuration: a flat UTF-8 `key = value` file format plus the
//! structures it parses into. Keys are documented in the README; unknown keys
//! are rejected so typos fail fast.

use std::path::{Path, PathBuf};

use microdl_core::micro::{GradientMode, SpiScaling, TrainingConfig};
use microdl_core::{Error, Result};
use serde::{Deserialize, Serialize};

/// Where a dataset comes from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum DatasetSpec {
    /// `csv:<path>:<label column>`
    Csv { path: PathBuf, label_column: String },
    /// `blobs:k=3,per=100,dim=10,sep=6,seed=1`
    Blobs {
        k: usize,
        per_cluster: usize,
        dim: usize,
        separation: f64,
        seed: u64,
    },
}

/// Pipeline variants compared by an experiment.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Method {
    MicroDl,
    NMicroDl,
    RawFeatures,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::MicroDl => "micro-dl",
            Method::NMicroDl => "nmicro-dl",
            Method::RawFeatures => "raw-features",
        }
    }

    fn parse(s: &str) -> Result<Self> {
        match s {
            "micro-dl" => Ok(Method::MicroDl),
            "nmicro-dl" => Ok(Method::NMicroDl),
            "raw-features" => Ok(Method::RawFeatures),
            other => Err(Error::Config(format!("unknown method {other:?}"))),
        }
    }
}

/// Full experiment description.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub datasets: Vec<DatasetSpec>,
    pub layers: usize,
    pub training: TrainingConfig,
    pub clustering_seed: u64,
    pub repeats: usize,
    pub methods: Vec<Method>,
    pub alpha_sweep: Vec<f64>,
    pub sample_n: Option<usize>,
    pub friedman: bool,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            datasets: Vec::new(),
            layers: 3,
            training: TrainingConfig::default(),
            clustering_seed: 7,
            repeats: 1,
            methods: vec![Method::MicroDl, Method::NMicroDl, Method::RawFeatures],
            alpha_sweep: Vec::new(),
            sample_n: None,
            friedman: false,
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        if self.datasets.is_empty() {
            return Err(Error::Config("config names no datasets".into()));
        }
        if self.repeats == 0 {
            return Err(Error::Config("repeats must be at least 1".into()));
        }
        if self.layers == 0 {
            return Err(Error::Config("layers must be at least 1".into()));
        }
        if self
            .alpha_sweep
            .iter()
            .any(|&a| !(0.0..1.0).contains(&a) || a == 0.0)
        {
            return Err(Error::Config(
                "alpha sweep values must lie strictly inside (0,1)".into(),
            ));
        }
        self.training.validate()?;
        Ok(())
    }
}

/// Parse the flat `key = value` format. `#` starts a comment; blank lines are
/// skipped; `dataset` may repeat.
pub fn parse_config(text: &str) -> Result<ExperimentConfig> {
    let mut cfg = ExperimentConfig::default();
    for (lineno, raw_line) in text.lines().enumerate() {
        let line = match raw_line.find('#') {
            Some(pos) => &raw_line[..pos],
            None => raw_line,
        }
        .trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line.split_once('=').ok_or_else(|| {
            Error::Config(format!("line {}: expected key = value", lineno + 1))
        })?;
        let key = key.trim();
        let value = value.trim();
        let ctx = |what: &str| format!("line {}: bad {what} value {value:?}", lineno + 1);
        match key {
            // Presets mirror the two experimental protocols: deep image-like
            // stacks at 1e-4, shallower tabular stacks at 1e-8; hidden width
            // always equals the input width. Later keys may override.
            "preset" => match value {
                "image" => {
                    cfg.training.alpha = 0.3;
                    cfg.training.eps = 1e-4;
                    cfg.layers = 17;
                }
                "tabular" => {
                    cfg.training.alpha = 0.3;
                    cfg.training.eps = 1e-8;
                    cfg.layers = 6;
                }
                _ => {
                    return Err(Error::Config(format!(
                        "line {}: unknown preset {value:?} (expected image or tabular)",
                        lineno + 1
                    )))
                }
            },
            "dataset" => cfg.datasets.push(parse_dataset_spec(value, lineno + 1)?),
            "layers" => cfg.layers = value.parse().map_err(|_| Error::Config(ctx("layers")))?,
            "alpha" => {
                cfg.training.alpha = value.parse().map_err(|_| Error::Config(ctx("alpha")))?
            }
            "eps" => cfg.training.eps = value.parse().map_err(|_| Error::Config(ctx("eps")))?,
            "epochs" => {
                cfg.training.epochs = value.parse().map_err(|_| Error::Config(ctx("epochs")))?
            }
            "batch_size" => {
                cfg.training.batch_size =
                    value.parse().map_err(|_| Error::Config(ctx("batch_size")))?
            }
            "gradient_mode" => {
                cfg.training.gradient_mode = match value {
                    "derived" => GradientMode::Derived,
                    "paper-literal" => GradientMode::PaperLiteral,
                    _ => return Err(Error::Config(ctx("gradient_mode"))),
                }
            }
            "spi_scaling" => {
                cfg.training.spi_scaling = match value {
                    "objective" => SpiScaling::ObjectiveConsistent,
                    "paper-literal" => SpiScaling::PaperLiteral,
                    _ => return Err(Error::Config(ctx("spi_scaling"))),
                }
            }
            "seed" => cfg.training.seed = value.parse().map_err(|_| Error::Config(ctx("seed")))?,
            "clustering_seed" => {
                cfg.clustering_seed = value
                    .parse()
                    .map_err(|_| Error::Config(ctx("clustering_seed")))?
            }
            "repeats" => {
                cfg.repeats = value.parse().map_err(|_| Error::Config(ctx("repeats")))?
            }
            "methods" => {
                cfg.methods = value
                    .split(',')
                    .map(|m| Method::parse(m.trim()))
                    .collect::<Result<Vec<_>>>()?
            }
            "alpha_sweep" => {
                cfg.alpha_sweep = value
                    .split(',')
                    .map(|a| {
                        a.trim()
                            .parse::<f64>()
                            .map_err(|_| Error::Config(ctx("alpha_sweep")))
                    })
                    .collect::<Result<Vec<_>>>()?
            }
            "sample_n" => {
                cfg.sample_n =
                    Some(value.parse().map_err(|_| Error::Config(ctx("sample_n")))?)
            }
            "friedman" => {
                cfg.friedman = match value {
                    "true" => true,
                    "false" => false,
                    _ => return Err(Error::Config(ctx("friedman"))),
                }
            }
            other => {
                return Err(Error::Config(format!(
                    "line {}: unknown key {other:?}",
                    lineno + 1
                )))
            }
        }
    }
    Ok(cfg)
}

fn parse_dataset_spec(value: &str, lineno: usize) -> Result<DatasetSpec> {
    if let Some(rest) = value.strip_prefix("csv:") {
        let (path, label) = rest.rsplit_once(':').ok_or_else(|| {
            Error::Config(format!(
                "line {lineno}: csv dataset needs csv:<path>:<label column>"
            ))
        })?;
        return Ok(DatasetSpec::Csv {
            path: PathBuf::from(path),
            label_column: label.to_string(),
        });
    }
    if let Some(rest) = value.strip_prefix("blobs:") {
        let mut k = None;
        let mut per = None;
        let mut dim = None;
        let mut sep = None;
        let mut seed = None;
        for part in rest.split(',') {
            let (name, v) = part.trim().split_once('=').ok_or_else(|| {
                Error::Config(format!("line {lineno}: blob field {part:?} needs name=value"))
            })?;
            let bad = || Error::Config(format!("line {lineno}: bad blob field {part:?}"));
            match name.trim() {
                "k" => k = Some(v.parse().map_err(|_| bad())?),
                "per" => per = Some(v.parse().map_err(|_| bad())?),
                "dim" => dim = Some(v.parse().map_err(|_| bad())?),
                "sep" => sep = Some(v.parse().map_err(|_| bad())?),
                "seed" => seed = Some(v.parse().map_err(|_| bad())?),
                _ => return Err(bad()),
            }
        }
        let missing =
            |what: &str| Error::Config(format!("line {lineno}: blob spec missing {what}"));
        return Ok(DatasetSpec::Blobs {
            k: k.ok_or_else(|| missing("k"))?,
            per_cluster: per.ok_or_else(|| missing("per"))?,
            dim: dim.ok_or_else(|| missing("dim"))?,
            separation: sep.ok_or_else(|| missing("sep"))?,
            seed: seed.ok_or_else(|| missing("seed"))?,
        });
    }
    Err(Error::Config(format!(
        "line {lineno}: dataset must start with csv: or blobs:"
    )))
}

pub fn load_config(path: &Path) -> Result<ExperimentConfig> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
    parse_config(&text)
}
