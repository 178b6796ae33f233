//! Plain RBM (binary visible units) and GRBM (Gaussian linear visible units)
//! with CD-1 statistics and the unperturbed update rules.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{bernoulli_sample, gaussian_sample, sigmoid_map, Matrix, RngStream};

/// Kind of visible units a model carries.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VisibleKind {
    Binary,
    GaussianLinear,
}

/// Parameters of one RBM/GRBM layer: weights `w` (visible x hidden), hidden
/// bias `b`, visible bias `c`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RbmParams {
    pub w: Matrix,
    pub hidden_bias: Vec<f64>,
    pub visible_bias: Vec<f64>,
    pub visible_kind: VisibleKind,
    /// Standard deviation of the Gaussian visible units; fixed at 1.0 and
    /// only meaningful for `GaussianLinear`.
    pub gaussian_sigma: f64,
}

impl RbmParams {
    /// Weights drawn from N(0, 0.01²), biases zero.
    pub fn init(visible: usize, hidden: usize, kind: VisibleKind, rng: &mut RngStream) -> Self {
        let w = gaussian_sample(&Matrix::zeros(visible, hidden), 0.01, rng)
            .expect("positive sigma");
        RbmParams {
            w,
            hidden_bias: vec![0.0; hidden],
            visible_bias: vec![0.0; visible],
            visible_kind: kind,
            gaussian_sigma: 1.0,
        }
    }

    pub fn visible_units(&self) -> usize {
        self.w.rows()
    }

    pub fn hidden_units(&self) -> usize {
        self.w.cols()
    }

    pub fn ensure_finite(&self, context: &str) -> Result<()> {
        self.w.ensure_finite(context)?;
        for (name, v) in [("b", &self.hidden_bias), ("c", &self.visible_bias)] {
            if let Some(i) = v.iter().position(|x| !x.is_finite()) {
                return Err(Error::Numeric(format!(
                    "{context}: non-finite {name}[{i}]"
                )));
            }
        }
        Ok(())
    }
}

/// Batch-averaged CD-1 sufficient statistics: `⟨·⟩₀` from the data pass,
/// `⟨·⟩₁` from the one-step reconstruction.
#[derive(Debug, Clone)]
pub struct Cd1Stats {
    pub vh_data: Matrix,
    pub vh_recon: Matrix,
    pub h_data: Vec<f64>,
    pub h_recon: Vec<f64>,
    pub v_data: Vec<f64>,
    pub v_recon: Vec<f64>,
}

impl Cd1Stats {
    /// All-zero statistics with shapes matching `params`; the identity input
    /// for [`cd1_update`].
    pub fn zeros(params: &RbmParams) -> Self {
        Cd1Stats {
            vh_data: Matrix::zeros(params.visible_units(), params.hidden_units()),
            vh_recon: Matrix::zeros(params.visible_units(), params.hidden_units()),
            h_data: vec![0.0; params.hidden_units()],
            h_recon: vec![0.0; params.hidden_units()],
            v_data: vec![0.0; params.visible_units()],
            v_recon: vec![0.0; params.visible_units()],
        }
    }

    fn ensure_finite(&self) -> Result<()> {
        self.vh_data.ensure_finite("cd1 stats vh_data")?;
        self.vh_recon.ensure_finite("cd1 stats vh_recon")?;
        let all = [&self.h_data, &self.h_recon, &self.v_data, &self.v_recon];
        if all.iter().any(|v| v.iter().any(|x| !x.is_finite())) {
            return Err(Error::Numeric("cd1 stats contain non-finite values".into()));
        }
        Ok(())
    }
}

/// Hidden activation probabilities `σ(b_j + Σ_i v_i w_ij)`, one row per batch
/// sample. The same formula serves both visible-unit kinds.
pub fn hidden_given_visible(params: &RbmParams, v: &Matrix) -> Result<Matrix> {
    if v.cols() != params.visible_units() {
        return Err(Error::Dimension(format!(
            "visible batch has {} columns, model expects {}",
            v.cols(),
            params.visible_units()
        )));
    }
    let pre = v.matmul(&params.w)?.add_row_broadcast(&params.hidden_bias)?;
    Ok(sigmoid_map(&pre))
}

/// Visible reconstruction probabilities `σ(c_i + Σ_j h_j w_ij)` for a binary
/// visible layer.
pub fn visible_given_hidden_binary(params: &RbmParams, h: &Matrix) -> Result<Matrix> {
    if params.visible_kind != VisibleKind::Binary {
        return Err(Error::Kind(
            "visible_given_hidden_binary called on a gaussian-linear model".into(),
        ));
    }
    let pre = visible_preactivation(params, h)?;
    Ok(sigmoid_map(&pre))
}

/// Visible reconstruction for Gaussian linear units: the mean `h·Wᵀ + c`,
/// plus `N(0, σ²)` noise when `sample` is set.
pub fn visible_given_hidden_gaussian(
    params: &RbmParams,
    h: &Matrix,
    rng: &mut RngStream,
    sample: bool,
) -> Result<Matrix> {
    if params.visible_kind != VisibleKind::GaussianLinear {
        return Err(Error::Kind(
            "visible_given_hidden_gaussian called on a binary model".into(),
        ));
    }
    let mean = visible_preactivation(params, h)?;
    if sample {
        gaussian_sample(&mean, params.gaussian_sigma, rng)
    } else {
        Ok(mean)
    }
}

fn visible_preactivation(params: &RbmParams, h: &Matrix) -> Result<Matrix> {
    if h.cols() != params.hidden_units() {
        return Err(Error::Dimension(format!(
            "hidden batch has {} columns, model expects {}",
            h.cols(),
            params.hidden_units()
        )));
    }
    h.matmul_bt(&params.w)?.add_row_broadcast(&params.visible_bias)
}

/// One step of the Gibbs chain with batch-averaged statistics.
///
/// Hidden states are sampled binary to drive the reconstruction, but the
/// `⟨·⟩` averages use the hidden probabilities, and the reconstruction enters
/// as probabilities (binary) or the distribution mean (gaussian); this is the
/// standard low-variance CD-1 estimator.
pub fn cd1_step(params: &RbmParams, v0: &Matrix, rng: &mut RngStream) -> Result<Cd1Stats> {
    if v0.rows() == 0 {
        return Err(Error::Data("cd1_step needs a nonempty batch".into()));
    }
    let h0_probs = hidden_given_visible(params, v0)?;
    let h0_states = bernoulli_sample(&h0_probs, rng);
    let v1 = match params.visible_kind {
        VisibleKind::Binary => visible_given_hidden_binary(params, &h0_states)?,
        VisibleKind::GaussianLinear => {
            visible_given_hidden_gaussian(params, &h0_states, rng, false)?
        }
    };
    let h1_probs = hidden_given_visible(params, &v1)?;

    let scale = 1.0 / v0.rows() as f64;
    Ok(Cd1Stats {
        vh_data: v0.matmul_at(&h0_probs)?.scale(scale),
        vh_recon: v1.matmul_at(&h1_probs)?.scale(scale),
        h_data: h0_probs.column_means(),
        h_recon: h1_probs.column_means(),
        v_data: v0.column_means(),
        v_recon: v1.column_means(),
    })
}

/// CD-1 parameter update:
/// `w += ε(⟨vh⟩₀−⟨vh⟩₁)`, `b += ε(⟨h⟩₀−⟨h⟩₁)`, `c += ε(⟨v⟩₀−⟨v⟩₁)`.
pub fn cd1_update(params: &RbmParams, stats: &Cd1Stats, eps: f64) -> Result<RbmParams> {
    if eps <= 0.0 {
        return Err(Error::Parameter(format!(
            "learning rate must be positive, got {eps}"
        )));
    }
    stats.ensure_finite()?;
    let mut out = params.clone();
    for (w, (d, r)) in out
        .w
        .data_mut()
        .iter_mut()
        .zip(stats.vh_data.data().iter().zip(stats.vh_recon.data()))
    {
        *w += eps * (d - r);
    }
    for (b, (d, r)) in out
        .hidden_bias
        .iter_mut()
        .zip(stats.h_data.iter().zip(&stats.h_recon))
    {
        *b += eps * (d - r);
    }
    for (c, (d, r)) in out
        .visible_bias
        .iter_mut()
        .zip(stats.v_data.iter().zip(&stats.v_recon))
    {
        *c += eps * (d - r);
    }
    out.ensure_finite("cd1_update")?;
    Ok(out)
}

/// Deterministic one-step reconstruction error: mean squared difference
/// between `data` and its reconstruction through hidden probabilities (no
/// sampling anywhere). Used for per-epoch trend logs.
pub fn reconstruction_error(params: &RbmParams, data: &Matrix) -> Result<f64> {
    let h = hidden_given_visible(params, data)?;
    let recon = match params.visible_kind {
        VisibleKind::Binary => sigmoid_map(&visible_preactivation(params, &h)?),
        VisibleKind::GaussianLinear => visible_preactivation(params, &h)?,
    };
    let diff = recon.sub(data)?;
    let n = (data.rows() * data.cols()) as f64;
    Ok(diff.data().iter().map(|x| x * x).sum::<f64>() / n)
}

const CHECKPOINT_VERSION: u32 = 1;

/// On-disk layer checkpoint. JSON with an explicit version and flat row-major
/// weights; field meanings documented in the README.
#[derive(Serialize, Deserialize)]
struct CheckpointFile {
    version: u32,
    visible: usize,
    hidden: usize,
    visible_kind: VisibleKind,
    gaussian_sigma: f64,
    w: Vec<f64>,
    b: Vec<f64>,
    c: Vec<f64>,
}

pub fn checkpoint_to_json(params: &RbmParams) -> Result<String> {
    let file = CheckpointFile {
        version: CHECKPOINT_VERSION,
        visible: params.visible_units(),
        hidden: params.hidden_units(),
        visible_kind: params.visible_kind,
        gaussian_sigma: params.gaussian_sigma,
        w: params.w.data().to_vec(),
        b: params.hidden_bias.clone(),
        c: params.visible_bias.clone(),
    };
    Ok(serde_json::to_string(&file)?)
}

pub fn checkpoint_from_json(json: &str) -> Result<RbmParams> {
    let file: CheckpointFile = serde_json::from_str(json)?;
    if file.version != CHECKPOINT_VERSION {
        return Err(Error::Data(format!(
            "unsupported checkpoint version {}",
            file.version
        )));
    }
    if file.b.len() != file.hidden || file.c.len() != file.visible {
        return Err(Error::Data("checkpoint bias lengths inconsistent".into()));
    }
    Ok(RbmParams {
        w: Matrix::from_vec(file.visible, file.hidden, file.w)?,
        hidden_bias: file.b,
        visible_bias: file.c,
        visible_kind: file.visible_kind,
        gaussian_sigma: file.gaussian_sigma,
    })
}

pub fn save_checkpoint(params: &RbmParams, path: &Path) -> Result<()> {
    std::fs::write(path, checkpoint_to_json(params)?)?;
    Ok(())
}

pub fn load_checkpoint(path: &Path) -> Result<RbmParams> {
    let json = std::fs::read_to_string(path)?;
    checkpoint_from_json(&json)
}
