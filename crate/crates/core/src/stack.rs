//! Greedy layer-wise construction of the deep architecture: one
//! Gaussian-visible layer followed by binary layers, each trained on the
//! hidden probabilities of the layer below. With the disturbance enabled the
//! same representative indices stimulate every layer; with it disabled the
//! identical construction is the unsupervised twin used as the comparison
//! baseline.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::ebm::{hidden_given_visible, RbmParams, VisibleKind};
use crate::error::{Error, Result};
use crate::micro::{
    select_representatives, train_layer, DisturbancePairs, EpochLog, LabelSource, TrainingConfig,
};
use crate::numerics::{Matrix, RngStream};

/// Architecture and training plan for a stack.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StackSpec {
    /// Hidden width per layer; the input width of layer `i+1` is this value
    /// for layer `i`.
    pub hidden_dims: Vec<usize>,
    /// One training configuration per layer. The first layer's seed also
    /// seeds representative selection for the whole stack.
    pub configs: Vec<TrainingConfig>,
    /// When false the stack trains without any disturbance terms.
    pub micro_enabled: bool,
}

impl StackSpec {
    /// Every hidden width equal to the input width, one shared config.
    pub fn uniform(layers: usize, input_dim: usize, cfg: TrainingConfig, micro: bool) -> Self {
        StackSpec {
            hidden_dims: vec![input_dim; layers],
            configs: vec![cfg; layers],
            micro_enabled: micro,
        }
    }

    pub fn layer_count(&self) -> usize {
        self.hidden_dims.len()
    }

    /// Check the whole plan before any training starts.
    pub fn validate(&self, input_dim: usize) -> Result<()> {
        if self.hidden_dims.is_empty() {
            return Err(Error::Config("stack needs at least one layer".into()));
        }
        if self.configs.len() != self.hidden_dims.len() {
            return Err(Error::Config(format!(
                "{} layer configs for {} layers",
                self.configs.len(),
                self.hidden_dims.len()
            )));
        }
        if input_dim == 0 {
            return Err(Error::Config("input dimension must be positive".into()));
        }
        if let Some(i) = self.hidden_dims.iter().position(|&d| d == 0) {
            return Err(Error::Config(format!("layer {i} has zero hidden units")));
        }
        for (i, cfg) in self.configs.iter().enumerate() {
            if self.micro_enabled {
                cfg.validate_micro()
            } else {
                cfg.validate()
            }
            .map_err(|e| Error::Config(format!("layer {i}: {e}")))?;
        }
        Ok(())
    }
}

/// Ordered trained layers with their per-epoch logs.
#[derive(Debug, Clone)]
pub struct TrainedStack {
    pub layers: Vec<RbmParams>,
    pub logs: Vec<Vec<EpochLog>>,
}

impl TrainedStack {
    pub fn depth(&self) -> usize {
        self.layers.len()
    }
}

/// Train the stack greedily: the first layer sees the raw data with Gaussian
/// visible units, every later layer sees the previous layer's hidden
/// probabilities with binary units. The representative pairs are selected
/// once and reused at every layer, re-encoded through the trained lower
/// layers.
pub fn train_stack(
    data: &Matrix,
    labels: &impl LabelSource,
    spec: &StackSpec,
) -> Result<TrainedStack> {
    spec.validate(data.cols())?;
    let root = RngStream::from_seed(spec.configs[0].seed);
    let pairs: Option<DisturbancePairs> = if spec.micro_enabled {
        Some(select_representatives(labels, &mut root.child(0))?)
    } else {
        None
    };

    let mut layers = Vec::with_capacity(spec.layer_count());
    let mut logs = Vec::with_capacity(spec.layer_count());
    let mut current = data.clone();
    for (i, (&hidden, cfg)) in spec.hidden_dims.iter().zip(&spec.configs).enumerate() {
        let kind = if i == 0 {
            VisibleKind::GaussianLinear
        } else {
            VisibleKind::Binary
        };
        let out = train_layer(
            &current,
            kind,
            hidden,
            pairs.as_ref(),
            cfg,
            &mut root.child(1 + i as u64),
        )?;
        current = hidden_given_visible(&out.params, &current)?;
        layers.push(out.params);
        logs.push(out.log);
    }
    Ok(TrainedStack { layers, logs })
}

/// Deterministic forward pass of hidden probabilities through every layer; no
/// sampling anywhere, so repeated calls agree bitwise.
pub fn encode(stack: &TrainedStack, data: &Matrix) -> Result<Matrix> {
    if stack.layers.is_empty() {
        return Err(Error::Config("stack has no layers".into()));
    }
    let mut current = hidden_given_visible(&stack.layers[0], data)?;
    for layer in &stack.layers[1..] {
        current = hidden_given_visible(layer, &current)?;
    }
    Ok(current)
}

const STACK_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct StackFile {
    version: u32,
    layer_count: usize,
    layers: Vec<RbmParams>,
}

pub fn stack_to_json(stack: &TrainedStack) -> Result<String> {
    let file = StackFile {
        version: STACK_VERSION,
        layer_count: stack.layers.len(),
        layers: stack.layers.clone(),
    };
    Ok(serde_json::to_string(&file)?)
}

pub fn stack_from_json(json: &str) -> Result<TrainedStack> {
    let file: StackFile = serde_json::from_str(json)?;
    if file.version != STACK_VERSION {
        return Err(Error::Data(format!(
            "unsupported stack checkpoint version {}",
            file.version
        )));
    }
    if file.layer_count != file.layers.len() {
        return Err(Error::Data("stack manifest layer count mismatch".into()));
    }
    for (i, layer) in file.layers.iter().enumerate() {
        layer.ensure_finite("stack checkpoint")?;
        if i > 0 && layer.visible_units() != file.layers[i - 1].hidden_units() {
            return Err(Error::Data(format!(
                "stack checkpoint layer {i} expects {} inputs but layer {} emits {}",
                layer.visible_units(),
                i - 1,
                file.layers[i - 1].hidden_units()
            )));
        }
    }
    Ok(TrainedStack {
        logs: vec![Vec::new(); file.layers.len()],
        layers: file.layers,
    })
}

pub fn save_stack(stack: &TrainedStack, path: &Path) -> Result<()> {
    std::fs::write(path, stack_to_json(stack)?)?;
    Ok(())
}

pub fn load_stack(path: &Path) -> Result<TrainedStack> {
    let json = std::fs::read_to_string(path)?;
    stack_from_json(&json)
}
