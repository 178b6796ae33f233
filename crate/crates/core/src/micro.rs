//! Micro-supervised disturbance learning: representative pair selection, the
//! KL disturbance terms over hidden activation probabilities, their gradients
//! with respect to the model parameters, and the training loops that blend
//! them with CD-1.
//!
//! Two gradient conventions exist for the disturbance terms. The `Derived`
//! mode is the direct derivative of the KL sum and passes finite-difference
//! checks; the `PaperLiteral` mode reproduces the printed update rules, which
//! differ in the sign of the `ln h_g` term and in the subtrahend's factors.
//! Both are kept; `Derived` is the default.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::ebm::{cd1_step, cd1_update, hidden_given_visible, reconstruction_error, Cd1Stats, RbmParams, VisibleKind};
use crate::error::{Error, Result};
use crate::numerics::{clamp_scalar, kl_slices, Matrix, RngStream};

/// Source of (possibly partial) class labels. Training consumes a label only
/// when one exists, so a source that labels two samples per class is enough
/// supervision for the whole pipeline.
pub trait LabelSource {
    fn len(&self) -> usize;
    fn label(&self, index: usize) -> Option<usize>;
}

impl LabelSource for [usize] {
    fn len(&self) -> usize {
        <[usize]>::len(self)
    }
    fn label(&self, index: usize) -> Option<usize> {
        self.get(index).copied()
    }
}

impl LabelSource for Vec<usize> {
    fn len(&self) -> usize {
        <[usize]>::len(self)
    }
    fn label(&self, index: usize) -> Option<usize> {
        self.get(index).copied()
    }
}

/// Labels known only for an explicit subset of samples.
#[derive(Debug, Clone, Default)]
pub struct PartialLabels {
    len: usize,
    map: BTreeMap<usize, usize>,
}

impl PartialLabels {
    pub fn new(len: usize) -> Self {
        PartialLabels {
            len,
            map: BTreeMap::new(),
        }
    }

    pub fn insert(&mut self, index: usize, class: usize) {
        self.map.insert(index, class);
    }
}

impl LabelSource for PartialLabels {
    fn len(&self) -> usize {
        self.len
    }
    fn label(&self, index: usize) -> Option<usize> {
        self.map.get(&index).copied()
    }
}

/// Decorator that counts how many distinct samples had their label consumed.
pub struct CountingLabels<'a, S: LabelSource> {
    inner: &'a S,
    read: std::cell::RefCell<std::collections::BTreeSet<usize>>,
}

impl<'a, S: LabelSource> CountingLabels<'a, S> {
    pub fn new(inner: &'a S) -> Self {
        CountingLabels {
            inner,
            read: std::cell::RefCell::new(Default::default()),
        }
    }

    /// Number of distinct samples whose label was actually returned.
    pub fn labels_consumed(&self) -> usize {
        self.read.borrow().len()
    }
}

impl<'a, S: LabelSource> LabelSource for CountingLabels<'a, S> {
    fn len(&self) -> usize {
        self.inner.len()
    }
    fn label(&self, index: usize) -> Option<usize> {
        let l = self.inner.label(index);
        if l.is_some() {
            self.read.borrow_mut().insert(index);
        }
        l
    }
}

/// The micro-supervision: same-class representative pairs (SFD) whose hidden
/// distributions should agree, and cross-class pairs (DFD) whose hidden
/// distributions should diverge.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DisturbancePairs {
    sfd: Vec<(usize, usize)>,
    dfd: Vec<(usize, usize)>,
    class_of: BTreeMap<usize, usize>,
}

impl DisturbancePairs {
    /// Same-class pairs, one per class, ordered by ascending class label.
    pub fn sfd(&self) -> &[(usize, usize)] {
        &self.sfd
    }

    /// Cross-class pairs, one per unordered class pair.
    pub fn dfd(&self) -> &[(usize, usize)] {
        &self.dfd
    }

    /// Class labels of the selected representatives only.
    pub fn class_of(&self) -> &BTreeMap<usize, usize> {
        &self.class_of
    }

    pub fn k_s(&self) -> usize {
        self.sfd.len()
    }

    pub fn k_d(&self) -> usize {
        self.dfd.len()
    }

    fn max_index(&self) -> usize {
        self.class_of.keys().copied().max().unwrap_or(0)
    }
}

/// Draw one same-class pair per class: two distinct members chosen uniformly
/// among the labeled samples of that class. The cross-class set is then built
/// by [`build_dfd`].
pub fn select_representatives(
    labels: &impl LabelSource,
    rng: &mut RngStream,
) -> Result<DisturbancePairs> {
    let mut members: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for i in 0..labels.len() {
        if let Some(class) = labels.label(i) {
            members.entry(class).or_default().push(i);
        }
    }
    if members.is_empty() {
        return Err(Error::Data("no labeled samples available".into()));
    }
    let mut sfd = Vec::with_capacity(members.len());
    let mut class_of = BTreeMap::new();
    for (&class, idxs) in &members {
        if idxs.len() < 2 {
            return Err(Error::Data(format!(
                "class {class} has fewer than 2 labeled samples"
            )));
        }
        let a = idxs[rng.next_index(idxs.len())];
        let b = loop {
            let cand = idxs[rng.next_index(idxs.len())];
            if cand != a {
                break cand;
            }
        };
        class_of.insert(a, class);
        class_of.insert(b, class);
        sfd.push((a, b));
    }
    build_dfd(&DisturbancePairs {
        sfd,
        dfd: Vec::new(),
        class_of,
    })
}

/// Fill the cross-class set: one ordered pair per unordered class pair, using
/// each class's first representative, classes in ascending order. With a
/// single class the set stays empty, which training rejects once the
/// disturbance weight is positive.
pub fn build_dfd(pairs: &DisturbancePairs) -> Result<DisturbancePairs> {
    let mut firsts: Vec<(usize, usize)> = Vec::new(); // (class, first representative)
    for &(f, _) in &pairs.sfd {
        let class = *pairs.class_of.get(&f).ok_or_else(|| {
            Error::Data(format!("representative {f} missing from class map"))
        })?;
        firsts.push((class, f));
    }
    firsts.sort();
    let mut dfd = Vec::new();
    for i in 0..firsts.len() {
        for j in (i + 1)..firsts.len() {
            dfd.push((firsts[i].1, firsts[j].1));
        }
    }
    Ok(DisturbancePairs {
        sfd: pairs.sfd.clone(),
        dfd,
        class_of: pairs.class_of.clone(),
    })
}

/// Gradient form for the disturbance terms.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GradientMode {
    /// Direct derivative of the KL sum; agrees with finite differences.
    Derived,
    /// The printed update rule, kept for fidelity studies.
    PaperLiteral,
}

/// How the disturbance terms enter the parameter update.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SpiScaling {
    /// Plain gradient descent on the blended objective: the disturbance
    /// gradients are subtracted and carry the learning rate.
    ObjectiveConsistent,
    /// The printed rule: disturbance terms added without the learning rate,
    /// SFD with a plus sign.
    PaperLiteral,
}

/// Training hyperparameters shared by the shallow trainers and the deep
/// stack.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingConfig {
    /// Scale coefficient blending CD-1 with the disturbance terms.
    pub alpha: f64,
    /// Learning rate.
    pub eps: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub gradient_mode: GradientMode,
    pub spi_scaling: SpiScaling,
    pub seed: u64,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        TrainingConfig {
            alpha: 0.3,
            eps: 0.05,
            epochs: 30,
            batch_size: 64,
            gradient_mode: GradientMode::Derived,
            spi_scaling: SpiScaling::ObjectiveConsistent,
            seed: 0,
        }
    }
}

impl TrainingConfig {
    /// Shared validity checks; alpha 0 is allowed here so ablation runs can
    /// reuse the same plumbing.
    pub fn validate(&self) -> Result<()> {
        if !(0.0..1.0).contains(&self.alpha) {
            return Err(Error::Config(format!(
                "alpha must lie in [0,1), got {}",
                self.alpha
            )));
        }
        if self.eps <= 0.0 || !self.eps.is_finite() {
            return Err(Error::Config(format!(
                "learning rate must be positive, got {}",
                self.eps
            )));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be at least 1".into()));
        }
        Ok(())
    }

    /// Micro-supervised training additionally requires a strictly interior
    /// scale coefficient.
    pub fn validate_micro(&self) -> Result<()> {
        self.validate()?;
        if self.alpha <= 0.0 {
            return Err(Error::Config(format!(
                "micro-supervised training needs alpha in (0,1), got {}",
                self.alpha
            )));
        }
        Ok(())
    }
}

fn rep_hidden(params: &RbmParams, data: &Matrix, index: usize) -> Result<Vec<f64>> {
    if index >= data.rows() {
        return Err(Error::Dimension(format!(
            "representative index {} out of range for {} samples",
            index,
            data.rows()
        )));
    }
    let row = data.select_rows(&[index])?;
    let h = hidden_given_visible(params, &row)?;
    Ok(h.row(0).iter().map(|&p| clamp_scalar(p)).collect())
}

/// Mean same-class KL and mean cross-class KL of the current parameters.
pub fn spi_components(
    params: &RbmParams,
    data: &Matrix,
    pairs: &DisturbancePairs,
) -> Result<(f64, f64)> {
    if pairs.k_s() == 0 || pairs.k_d() == 0 {
        return Err(Error::Config(
            "disturbance terms need at least one SFD and one DFD pair".into(),
        ));
    }
    if pairs.max_index() >= data.rows() {
        return Err(Error::Dimension(
            "disturbance pair index out of range for dataset".into(),
        ));
    }
    let mut sfd = 0.0;
    for &(f, g) in pairs.sfd() {
        let hf = rep_hidden(params, data, f)?;
        let hg = rep_hidden(params, data, g)?;
        sfd += kl_slices(&hf, &hg);
    }
    let mut dfd = 0.0;
    for &(r, s) in pairs.dfd() {
        let hr = rep_hidden(params, data, r)?;
        let hs = rep_hidden(params, data, s)?;
        dfd += kl_slices(&hr, &hs);
    }
    Ok((sfd / pairs.k_s() as f64, dfd / pairs.k_d() as f64))
}

/// The disturbance objective: mean SFD KL minus mean DFD KL over hidden
/// activation probabilities.
pub fn spi_kl_term(params: &RbmParams, data: &Matrix, pairs: &DisturbancePairs) -> Result<f64> {
    let (sfd, dfd) = spi_components(params, data, pairs)?;
    Ok(sfd - dfd)
}

/// Gradient of one pair's KL term with respect to the weights.
pub fn spi_grad_w(
    params: &RbmParams,
    v_f: &[f64],
    v_g: &[f64],
    mode: GradientMode,
) -> Result<Matrix> {
    let (n, m) = (params.visible_units(), params.hidden_units());
    if v_f.len() != n || v_g.len() != n {
        return Err(Error::Dimension(format!(
            "pair rows have lengths {}/{}, model expects {}",
            v_f.len(),
            v_g.len(),
            n
        )));
    }
    let hf = pair_hidden(params, v_f)?;
    let hg = pair_hidden(params, v_g)?;
    let mut grad = Matrix::zeros(n, m);
    for j in 0..m {
        let (f, g) = (hf[j], hg[j]);
        let (lead, trail) = unit_grad_factors(f, g, mode);
        for i in 0..n {
            grad.set(i, j, v_f[i] * lead - v_g[i] * trail);
        }
    }
    Ok(grad)
}

/// Gradient of one pair's KL term with respect to the hidden bias; the weight
/// formula with the visible factors dropped.
pub fn spi_grad_b(
    params: &RbmParams,
    v_f: &[f64],
    v_g: &[f64],
    mode: GradientMode,
) -> Result<Vec<f64>> {
    let n = params.visible_units();
    if v_f.len() != n || v_g.len() != n {
        return Err(Error::Dimension(format!(
            "pair rows have lengths {}/{}, model expects {}",
            v_f.len(),
            v_g.len(),
            n
        )));
    }
    let hf = pair_hidden(params, v_f)?;
    let hg = pair_hidden(params, v_g)?;
    Ok(hf
        .iter()
        .zip(&hg)
        .map(|(&f, &g)| {
            let (lead, trail) = unit_grad_factors(f, g, mode);
            lead - trail
        })
        .collect())
}

/// The disturbance terms do not depend on the visible bias.
pub fn spi_grad_c(params: &RbmParams) -> Vec<f64> {
    vec![0.0; params.visible_units()]
}

fn pair_hidden(params: &RbmParams, v: &[f64]) -> Result<Vec<f64>> {
    let row = Matrix::from_vec(1, v.len(), v.to_vec())?;
    let h = hidden_given_visible(params, &row)?;
    Ok(h.row(0).to_vec())
}

/// Per-unit factors of the pair gradient: `lead` multiplies the first
/// sample's visible value, `trail` the second's.
///
/// The clamp guards only the log (and ratio) terms; the sigmoid-derivative
/// factors keep the raw probabilities so a saturated unit stops contributing,
/// exactly as the true gradient of the clamped objective does.
fn unit_grad_factors(hf: f64, hg: f64, mode: GradientMode) -> (f64, f64) {
    let hf_c = clamp_scalar(hf);
    let hg_c = clamp_scalar(hg);
    match mode {
        GradientMode::Derived => (
            hf * (1.0 - hf) * (hf_c.ln() - hg_c.ln() + 1.0),
            (hf_c / hg_c) * hg * (1.0 - hg),
        ),
        GradientMode::PaperLiteral => (
            hf * (1.0 - hf) * (hf_c.ln() + hg_c.ln() + 1.0),
            hg * (1.0 - hg),
        ),
    }
}

struct SpiGradSums {
    w_sfd: Matrix,
    w_dfd: Matrix,
    b_sfd: Vec<f64>,
    b_dfd: Vec<f64>,
}

fn spi_grad_sums(
    params: &RbmParams,
    data: &Matrix,
    pairs: &DisturbancePairs,
    mode: GradientMode,
) -> Result<SpiGradSums> {
    let (n, m) = (params.visible_units(), params.hidden_units());
    let mut sums = SpiGradSums {
        w_sfd: Matrix::zeros(n, m),
        w_dfd: Matrix::zeros(n, m),
        b_sfd: vec![0.0; m],
        b_dfd: vec![0.0; m],
    };
    let accumulate = |list: &[(usize, usize)],
                          w_acc: &mut Matrix,
                          b_acc: &mut Vec<f64>|
     -> Result<()> {
        for &(f, g) in list {
            let vf = data.select_rows(&[f])?;
            let vg = data.select_rows(&[g])?;
            let gw = spi_grad_w(params, vf.row(0), vg.row(0), mode)?;
            for (acc, &v) in w_acc.data_mut().iter_mut().zip(gw.data()) {
                *acc += v;
            }
            let gb = spi_grad_b(params, vf.row(0), vg.row(0), mode)?;
            for (acc, &v) in b_acc.iter_mut().zip(&gb) {
                *acc += v;
            }
        }
        Ok(())
    };
    accumulate(pairs.sfd(), &mut sums.w_sfd, &mut sums.b_sfd)?;
    accumulate(pairs.dfd(), &mut sums.w_dfd, &mut sums.b_dfd)?;
    Ok(sums)
}

/// One blended parameter update: the CD-1 step scaled by `1-α` plus the
/// disturbance terms, combined according to `cfg.spi_scaling`. With `α = 0`
/// this is exactly [`cd1_update`], which is the ablation identity the
/// framework comparison rests on.
pub fn micro_update(
    params: &RbmParams,
    stats: &Cd1Stats,
    data: &Matrix,
    pairs: &DisturbancePairs,
    cfg: &TrainingConfig,
) -> Result<RbmParams> {
    cfg.validate()?;
    if cfg.alpha == 0.0 {
        return cd1_update(params, stats, cfg.eps);
    }
    if pairs.k_s() == 0 || pairs.k_d() == 0 {
        return Err(Error::Config(
            "alpha > 0 requires nonempty SFD and DFD sets".into(),
        ));
    }
    let alpha = cfg.alpha;
    let eps = cfg.eps;
    let cd = cd1_update(params, stats, (1.0 - alpha) * eps)?;
    let sums = spi_grad_sums(params, data, pairs, cfg.gradient_mode)?;
    let ks = pairs.k_s() as f64;
    let kd = pairs.k_d() as f64;

    // Coefficients on the summed SFD/DFD gradients for each scaling rule.
    let (sfd_coef, dfd_coef) = match cfg.spi_scaling {
        SpiScaling::PaperLiteral => (alpha / ks, -alpha / kd),
        SpiScaling::ObjectiveConsistent => (-alpha * eps / ks, alpha * eps / kd),
    };

    let mut out = cd;
    for ((w, &gs), &gd) in out
        .w
        .data_mut()
        .iter_mut()
        .zip(sums.w_sfd.data())
        .zip(sums.w_dfd.data())
    {
        *w += sfd_coef * gs + dfd_coef * gd;
    }
    for ((b, &gs), &gd) in out
        .hidden_bias
        .iter_mut()
        .zip(&sums.b_sfd)
        .zip(&sums.b_dfd)
    {
        *b += sfd_coef * gs + dfd_coef * gd;
    }
    // Visible bias: the disturbance gradient is identically zero, so the CD
    // part already holds the full update.
    out.w.ensure_finite("micro_update weights")?;
    if out.hidden_bias.iter().any(|x| !x.is_finite()) {
        return Err(Error::Numeric("micro_update hidden bias non-finite".into()));
    }
    if out.visible_bias.iter().any(|x| !x.is_finite()) {
        return Err(Error::Numeric(
            "micro_update visible bias non-finite".into(),
        ));
    }
    Ok(out)
}

/// One row of the per-epoch training log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub reconstruction_error: f64,
    pub spi_sfd_kl: f64,
    pub spi_dfd_kl: f64,
    pub objective_proxy: f64,
}

pub const EPOCH_LOG_HEADER: &str =
    "epoch,reconstruction_error,spi_sfd_kl,spi_dfd_kl,objective_proxy";

impl EpochLog {
    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{}",
            self.epoch,
            self.reconstruction_error,
            self.spi_sfd_kl,
            self.spi_dfd_kl,
            self.objective_proxy
        )
    }
}

/// A trained layer plus its epoch log. Row 0 of the log describes the freshly
/// initialized model, rows 1..=epochs the state after each epoch.
#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub params: RbmParams,
    pub log: Vec<EpochLog>,
}

fn epoch_row(
    epoch: usize,
    params: &RbmParams,
    data: &Matrix,
    pairs: Option<&DisturbancePairs>,
    alpha: f64,
) -> Result<EpochLog> {
    let recon = reconstruction_error(params, data)?;
    let (sfd, dfd) = match pairs {
        Some(p) => spi_components(params, data, p)?,
        None => (0.0, 0.0),
    };
    Ok(EpochLog {
        epoch,
        reconstruction_error: recon,
        spi_sfd_kl: sfd,
        spi_dfd_kl: dfd,
        objective_proxy: (1.0 - alpha) * recon + alpha * (sfd - dfd),
    })
}

/// Shared epoch loop: initialize, then per epoch shuffle the sample order,
/// run CD-1 on each mini-batch and apply the blended update. `pairs = None`
/// trains the plain unsupervised model.
pub fn train_layer(
    data: &Matrix,
    kind: VisibleKind,
    hidden: usize,
    pairs: Option<&DisturbancePairs>,
    cfg: &TrainingConfig,
    rng: &mut RngStream,
) -> Result<TrainOutcome> {
    cfg.validate()?;
    if data.rows() == 0 {
        return Err(Error::Data("training data is empty".into()));
    }
    if let Some(p) = pairs {
        if p.max_index() >= data.rows() {
            return Err(Error::Dimension(
                "disturbance pair index out of range for dataset".into(),
            ));
        }
    }
    let alpha = if pairs.is_some() { cfg.alpha } else { 0.0 };
    let mut params = RbmParams::init(data.cols(), hidden, kind, rng);
    let mut log = Vec::with_capacity(cfg.epochs + 1);
    log.push(epoch_row(0, &params, data, pairs, alpha)?);

    let mut order: Vec<usize> = (0..data.rows()).collect();
    for epoch in 1..=cfg.epochs {
        rng.shuffle(&mut order);
        for batch_idx in order.chunks(cfg.batch_size) {
            let batch = data.select_rows(batch_idx)?;
            let stats = cd1_step(&params, &batch, rng)?;
            params = match pairs {
                Some(p) => micro_update(&params, &stats, data, p, cfg)?,
                None => cd1_update(&params, &stats, cfg.eps)?,
            };
        }
        log.push(epoch_row(epoch, &params, data, pairs, alpha)?);
    }
    Ok(TrainOutcome { params, log })
}

/// Micro-disturbance training of a binary-visible model: select one pair per
/// class, then run the blended CD-1 loop. Hidden width equals the visible
/// width, matching the experimental protocol.
pub fn train_micro_drbm(
    data: &Matrix,
    labels: &impl LabelSource,
    cfg: &TrainingConfig,
) -> Result<TrainOutcome> {
    train_micro(data, labels, cfg, VisibleKind::Binary)
}

/// Micro-disturbance training with Gaussian linear visible units, for
/// standardized real-valued data.
pub fn train_micro_dgrbm(
    data: &Matrix,
    labels: &impl LabelSource,
    cfg: &TrainingConfig,
) -> Result<TrainOutcome> {
    train_micro(data, labels, cfg, VisibleKind::GaussianLinear)
}

fn train_micro(
    data: &Matrix,
    labels: &impl LabelSource,
    cfg: &TrainingConfig,
    kind: VisibleKind,
) -> Result<TrainOutcome> {
    cfg.validate_micro()?;
    if labels.len() != data.rows() {
        return Err(Error::Dimension(format!(
            "label source covers {} samples, data has {}",
            labels.len(),
            data.rows()
        )));
    }
    let root = RngStream::from_seed(cfg.seed);
    let pairs = select_representatives(labels, &mut root.child(0))?;
    train_layer(data, kind, data.cols(), Some(&pairs), cfg, &mut root.child(1))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::bernoulli_sample;

    fn zero_model(n: usize, m: usize) -> RbmParams {
        RbmParams {
            w: Matrix::zeros(n, m),
            hidden_bias: vec![0.0; m],
            visible_bias: vec![0.0; n],
            visible_kind: VisibleKind::Binary,
            gaussian_sigma: 1.0,
        }
    }

    fn random_model(n: usize, m: usize, seed: u64) -> RbmParams {
        let mut rng = RngStream::from_seed(seed);
        let mut p = RbmParams::init(n, m, VisibleKind::Binary, &mut rng);
        p.w = p.w.map(|_| 2.0 * rng.next_f64() - 1.0);
        for b in &mut p.hidden_bias {
            *b = 2.0 * rng.next_f64() - 1.0;
        }
        p
    }

    /// Independent evaluation of one pair's KL term: explicit loops, own
    /// sigmoid, no shared code with the implementation path.
    fn oracle_pair_kl(params: &RbmParams, v_f: &[f64], v_g: &[f64]) -> f64 {
        let act = |v: &[f64], j: usize| {
            let mut pre = params.hidden_bias[j];
            for (i, &x) in v.iter().enumerate() {
                pre += x * params.w.get(i, j);
            }
            let p = 1.0 / (1.0 + (-pre).exp());
            p.clamp(1e-7, 1.0 - 1e-7)
        };
        (0..params.hidden_units())
            .map(|j| {
                let pf = act(v_f, j);
                let pg = act(v_g, j);
                pf * (pf / pg).ln()
            })
            .sum()
    }

    #[test]
    fn selection_three_classes_gives_three_pairs_each() {
        let labels = vec![0, 0, 0, 1, 1, 2, 2, 2];
        let pairs = select_representatives(&labels, &mut RngStream::from_seed(1)).unwrap();
        assert_eq!(pairs.k_s(), 3);
        assert_eq!(pairs.k_d(), 3);
        for &(f, g) in pairs.sfd() {
            assert_ne!(f, g);
            assert_eq!(labels[f], labels[g]);
        }
        for &(r, s) in pairs.dfd() {
            assert_ne!(labels[r], labels[s]);
        }
        assert_eq!(pairs.class_of().len(), 6);
    }

    #[test]
    fn selection_single_class_leaves_dfd_empty() {
        let labels = vec![0, 0, 0];
        let pairs = select_representatives(&labels, &mut RngStream::from_seed(1)).unwrap();
        assert_eq!(pairs.k_s(), 1);
        assert_eq!(pairs.k_d(), 0);
    }

    #[test]
    fn selection_is_deterministic_per_seed() {
        let labels = vec![0, 0, 1, 1, 2, 2, 2];
        let a = select_representatives(&labels, &mut RngStream::from_seed(9)).unwrap();
        let b = select_representatives(&labels, &mut RngStream::from_seed(9)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn selection_names_the_underfilled_class() {
        let labels = vec![0, 0, 1];
        let err = select_representatives(&labels, &mut RngStream::from_seed(1)).unwrap_err();
        assert!(err.to_string().contains("class 1"), "{err}");
    }

    #[test]
    fn dfd_counts_follow_class_pairs() {
        for (k, expected) in [(2usize, 1usize), (3, 3), (4, 6)] {
            let labels: Vec<usize> = (0..k).flat_map(|c| [c, c]).collect();
            let pairs = select_representatives(&labels, &mut RngStream::from_seed(3)).unwrap();
            assert_eq!(pairs.k_d(), expected, "k = {k}");
        }
    }

    #[test]
    fn dfd_ordering_is_by_ascending_class_pair() {
        let labels = vec![0, 0, 1, 1, 2, 2];
        let pairs = select_representatives(&labels, &mut RngStream::from_seed(4)).unwrap();
        let class_of_pair: Vec<(usize, usize)> = pairs
            .dfd()
            .iter()
            .map(|&(r, s)| (pairs.class_of()[&r], pairs.class_of()[&s]))
            .collect();
        assert_eq!(class_of_pair, vec![(0, 1), (0, 2), (1, 2)]);
        // every dfd endpoint is a first representative
        for &(r, s) in pairs.dfd() {
            assert!(pairs.sfd().iter().any(|&(f, _)| f == r));
            assert!(pairs.sfd().iter().any(|&(f, _)| f == s));
        }
    }

    #[test]
    fn spi_term_zero_for_uniform_activations() {
        // zero parameters push every hidden probability to 0.5
        let params = zero_model(2, 3);
        let data = Matrix::from_rows(&[
            vec![1.0, 0.0],
            vec![0.0, 1.0],
            vec![1.0, 1.0],
            vec![0.0, 0.0],
        ])
        .unwrap();
        let labels = vec![0, 0, 1, 1];
        let pairs = select_representatives(&labels, &mut RngStream::from_seed(5)).unwrap();
        let term = spi_kl_term(&params, &data, &pairs).unwrap();
        assert_eq!(term, 0.0);
    }

    #[test]
    fn spi_sfd_contribution_vanishes_for_identical_representatives() {
        let params = random_model(3, 2, 6);
        // same-class rows identical, cross-class rows differ
        let data = Matrix::from_rows(&[
            vec![1.0, 0.0, 1.0],
            vec![1.0, 0.0, 1.0],
            vec![0.0, 1.0, 0.0],
            vec![0.0, 1.0, 0.0],
        ])
        .unwrap();
        let labels = vec![0, 0, 1, 1];
        let pairs = select_representatives(&labels, &mut RngStream::from_seed(6)).unwrap();
        let (sfd, dfd) = spi_components(&params, &data, &pairs).unwrap();
        assert_eq!(sfd, 0.0);
        assert!(dfd > 0.0);
    }

    #[test]
    fn spi_term_matches_independent_oracle() {
        let params = random_model(4, 3, 7);
        let mut rng = RngStream::from_seed(8);
        let data = bernoulli_sample(&Matrix::zeros(6, 4).map(|_| 0.5), &mut rng);
        let labels = vec![0, 0, 0, 1, 1, 1];
        let pairs = select_representatives(&labels, &mut RngStream::from_seed(9)).unwrap();

        let mut expected_sfd = 0.0;
        for &(f, g) in pairs.sfd() {
            expected_sfd += oracle_pair_kl(&params, data.row(f), data.row(g));
        }
        expected_sfd /= pairs.k_s() as f64;
        let mut expected_dfd = 0.0;
        for &(r, s) in pairs.dfd() {
            expected_dfd += oracle_pair_kl(&params, data.row(r), data.row(s));
        }
        expected_dfd /= pairs.k_d() as f64;

        let got = spi_kl_term(&params, &data, &pairs).unwrap();
        assert!((got - (expected_sfd - expected_dfd)).abs() < 1e-12);
    }

    #[test]
    fn spi_term_requires_both_pair_sets() {
        let params = zero_model(1, 1);
        let data = Matrix::from_rows(&[vec![1.0], vec![0.0]]).unwrap();
        let labels = vec![0, 0];
        let pairs = select_representatives(&labels, &mut RngStream::from_seed(1)).unwrap();
        assert!(matches!(
            spi_kl_term(&params, &data, &pairs),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn derived_gradient_vanishes_for_identical_inputs() {
        let params = random_model(3, 4, 10);
        let v = [1.0, 0.0, 1.0];
        let gw = spi_grad_w(&params, &v, &v, GradientMode::Derived).unwrap();
        assert!(gw.data().iter().all(|&x| x.abs() < 1e-14));
        let gb = spi_grad_b(&params, &v, &v, GradientMode::Derived).unwrap();
        assert!(gb.iter().all(|&x| x.abs() < 1e-14));
    }

    #[test]
    fn worked_one_unit_case_pins_both_modes() {
        // w = b = 0, v_f = 1, v_g = 0 so h_f = h_g = 0.5
        let params = zero_model(1, 1);
        let derived = spi_grad_w(&params, &[1.0], &[0.0], GradientMode::Derived).unwrap();
        assert!((derived.get(0, 0) - 0.25).abs() < 1e-12);
        let literal = spi_grad_w(&params, &[1.0], &[0.0], GradientMode::PaperLiteral).unwrap();
        // 0.25 * (2 ln 0.5 + 1)
        assert!((literal.get(0, 0) - (-0.09657359027997264)).abs() < 1e-11);

        let derived_b = spi_grad_b(&params, &[1.0], &[0.0], GradientMode::Derived).unwrap();
        assert!(derived_b[0].abs() < 1e-12);
    }

    #[test]
    fn grad_c_is_zero_with_matching_length() {
        let params = zero_model(5, 2);
        let g = spi_grad_c(&params);
        assert_eq!(g, vec![0.0; 5]);
    }

    fn finite_difference_w(
        params: &RbmParams,
        v_f: &[f64],
        v_g: &[f64],
        i: usize,
        j: usize,
        h: f64,
    ) -> f64 {
        let eval = |delta: f64| {
            let mut p = params.clone();
            p.w.set(i, j, p.w.get(i, j) + delta);
            let hf: Vec<f64> = pair_hidden(&p, v_f).unwrap().iter().map(|&x| clamp_scalar(x)).collect();
            let hg: Vec<f64> = pair_hidden(&p, v_g).unwrap().iter().map(|&x| clamp_scalar(x)).collect();
            kl_slices(&hf, &hg)
        };
        (eval(h) - eval(-h)) / (2.0 * h)
    }

    fn finite_difference_b(
        params: &RbmParams,
        v_f: &[f64],
        v_g: &[f64],
        j: usize,
        h: f64,
    ) -> f64 {
        let eval = |delta: f64| {
            let mut p = params.clone();
            p.hidden_bias[j] += delta;
            let hf: Vec<f64> = pair_hidden(&p, v_f).unwrap().iter().map(|&x| clamp_scalar(x)).collect();
            let hg: Vec<f64> = pair_hidden(&p, v_g).unwrap().iter().map(|&x| clamp_scalar(x)).collect();
            kl_slices(&hf, &hg)
        };
        (eval(h) - eval(-h)) / (2.0 * h)
    }

    #[test]
    fn derived_gradients_match_central_differences() {
        let mut rng = RngStream::from_seed(123);
        for trial in 0..10 {
            let n = 2 + (trial % 3);
            let m = 2 + (trial % 2);
            let params = random_model(n, m, 200 + trial as u64);
            let v_f: Vec<f64> = (0..n).map(|_| rng.next_f64()).collect();
            let v_g: Vec<f64> = (0..n).map(|_| rng.next_f64()).collect();
            let gw = spi_grad_w(&params, &v_f, &v_g, GradientMode::Derived).unwrap();
            let gb = spi_grad_b(&params, &v_f, &v_g, GradientMode::Derived).unwrap();
            for i in 0..n {
                for j in 0..m {
                    let fd = finite_difference_w(&params, &v_f, &v_g, i, j, 1e-5);
                    let g = gw.get(i, j);
                    let denom = fd.abs().max(1e-3);
                    assert!(
                        ((g - fd) / denom).abs() < 1e-5,
                        "w[{i}][{j}] grad {g} vs fd {fd}"
                    );
                }
            }
            for j in 0..m {
                let fd = finite_difference_b(&params, &v_f, &v_g, j, 1e-5);
                let denom = fd.abs().max(1e-3);
                assert!(((gb[j] - fd) / denom).abs() < 1e-5, "b[{j}]");
            }
        }
    }

    fn small_problem() -> (Matrix, Vec<usize>, DisturbancePairs) {
        let data = Matrix::from_rows(&[
            vec![1.0, 1.0, 0.0, 0.0],
            vec![1.0, 0.0, 0.0, 0.0],
            vec![0.0, 0.0, 1.0, 1.0],
            vec![0.0, 1.0, 1.0, 1.0],
        ])
        .unwrap();
        let labels = vec![0, 0, 1, 1];
        let pairs = select_representatives(&labels, &mut RngStream::from_seed(2)).unwrap();
        (data, labels, pairs)
    }

    #[test]
    fn alpha_zero_update_equals_cd1_update_exactly() {
        let (data, _, pairs) = small_problem();
        for trial in 0..20 {
            let params = random_model(4, 3, 300 + trial);
            let mut rng = RngStream::from_seed(400 + trial);
            let stats = cd1_step(&params, &data, &mut rng).unwrap();
            let cfg = TrainingConfig {
                alpha: 0.0,
                eps: 0.01 + 0.01 * trial as f64,
                ..TrainingConfig::default()
            };
            let micro = micro_update(&params, &stats, &data, &pairs, &cfg).unwrap();
            let plain = cd1_update(&params, &stats, cfg.eps).unwrap();
            assert_eq!(micro, plain, "trial {trial}");
        }
    }

    #[test]
    fn identity_update_when_nothing_moves() {
        // zero CD statistics and all representatives identical: every SPI
        // gradient vanishes in derived mode, so the update is the identity
        let params = random_model(2, 2, 11);
        let labels = vec![0, 0, 1, 1];
        let pairs = select_representatives(&labels, &mut RngStream::from_seed(3)).unwrap();
        let data = Matrix::from_rows(&[
            vec![1.0, 0.0],
            vec![1.0, 0.0],
            vec![1.0, 0.0],
            vec![1.0, 0.0],
        ])
        .unwrap();
        let cfg = TrainingConfig {
            alpha: 0.3,
            ..TrainingConfig::default()
        };
        let stats = Cd1Stats::zeros(&params);
        let updated = micro_update(&params, &stats, &data, &pairs, &cfg).unwrap();
        assert_eq!(params, updated);
    }

    #[test]
    fn objective_consistent_updates_descend_the_spi_term() {
        let (data, _, pairs) = small_problem();
        let mut params = random_model(4, 3, 31);
        let cfg = TrainingConfig {
            alpha: 1.0 - 1e-9, // isolate the disturbance part
            eps: 0.05,
            gradient_mode: GradientMode::Derived,
            spi_scaling: SpiScaling::ObjectiveConsistent,
            ..TrainingConfig::default()
        };
        let zero = Cd1Stats::zeros(&params);
        let mut values = Vec::new();
        for _ in 0..100 {
            values.push(spi_kl_term(&params, &data, &pairs).unwrap());
            params = micro_update(&params, &zero, &data, &pairs, &cfg).unwrap();
        }
        let slope = least_squares_slope(&values);
        assert!(slope < 0.0, "spi trend slope {slope}");
    }

    fn least_squares_slope(values: &[f64]) -> f64 {
        let n = values.len() as f64;
        let mean_x = (n - 1.0) / 2.0;
        let mean_y = values.iter().sum::<f64>() / n;
        let mut num = 0.0;
        let mut den = 0.0;
        for (i, &y) in values.iter().enumerate() {
            let dx = i as f64 - mean_x;
            num += dx * (y - mean_y);
            den += dx * dx;
        }
        num / den
    }

    #[test]
    fn micro_update_rejects_missing_dfd_when_alpha_positive() {
        let params = zero_model(1, 1);
        let data = Matrix::from_rows(&[vec![1.0], vec![0.0]]).unwrap();
        let pairs = select_representatives(&vec![0, 0], &mut RngStream::from_seed(1)).unwrap();
        let stats = Cd1Stats::zeros(&params);
        let cfg = TrainingConfig {
            alpha: 0.3,
            ..TrainingConfig::default()
        };
        assert!(matches!(
            micro_update(&params, &stats, &data, &pairs, &cfg),
            Err(Error::Config(_))
        ));
    }

    fn two_cluster_binary(seed: u64, per_cluster: usize) -> (Matrix, Vec<usize>) {
        two_cluster_binary_dim(seed, per_cluster, 8)
    }

    fn two_cluster_binary_dim(seed: u64, per_cluster: usize, dim: usize) -> (Matrix, Vec<usize>) {
        let mut rng = RngStream::from_seed(seed);
        let mut rows = Vec::new();
        let mut labels = Vec::new();
        for c in 0..2usize {
            let proto: Vec<f64> = (0..dim)
                .map(|i| if (i < dim / 2) == (c == 0) { 0.9 } else { 0.1 })
                .collect();
            for _ in 0..per_cluster {
                let row: Vec<f64> = proto
                    .iter()
                    .map(|&p| if rng.next_f64() < p { 1.0 } else { 0.0 })
                    .collect();
                rows.push(row);
                labels.push(c);
            }
        }
        (Matrix::from_rows(&rows).unwrap(), labels)
    }

    #[test]
    fn training_zero_epochs_returns_the_initialization() {
        let (data, labels) = two_cluster_binary(50, 10);
        let cfg = TrainingConfig {
            epochs: 0,
            ..TrainingConfig::default()
        };
        let out = train_micro_drbm(&data, &labels, &cfg).unwrap();
        assert_eq!(out.log.len(), 1);
        assert_eq!(out.log[0].epoch, 0);
        // untouched initialization keeps the zero biases
        assert!(out.params.hidden_bias.iter().all(|&b| b == 0.0));
        assert!(out.params.visible_bias.iter().all(|&c| c == 0.0));
    }

    #[test]
    fn disturbance_tightens_within_class_kl() {
        // Gentle rate: a hard rate saturates the cross-class pairs first and
        // freezes the within-class gap before the similarity pull can act.
        let (data, labels) = two_cluster_binary_dim(51, 20, 16);
        let cfg = TrainingConfig {
            alpha: 0.3,
            eps: 0.01,
            epochs: 60,
            batch_size: 10,
            seed: 7,
            ..TrainingConfig::default()
        };
        let root = RngStream::from_seed(cfg.seed);
        let pairs = select_representatives(&labels, &mut root.child(0)).unwrap();

        let micro = train_layer(
            &data,
            VisibleKind::Binary,
            data.cols(),
            Some(&pairs),
            &cfg,
            &mut root.child(1),
        )
        .unwrap();
        let plain = train_layer(
            &data,
            VisibleKind::Binary,
            data.cols(),
            None,
            &cfg,
            &mut root.child(1),
        )
        .unwrap();

        let initial_sfd = micro.log[0].spi_sfd_kl;
        let final_sfd = micro.log.last().unwrap().spi_sfd_kl;
        let (plain_sfd, _) = spi_components(&plain.params, &data, &pairs).unwrap();
        assert!(
            final_sfd < initial_sfd,
            "final {final_sfd} vs initial {initial_sfd}"
        );
        assert!(
            final_sfd < plain_sfd,
            "micro {final_sfd} vs unperturbed {plain_sfd}"
        );
    }

    #[test]
    fn training_is_bitwise_deterministic() {
        let (data, labels) = two_cluster_binary(52, 12);
        let cfg = TrainingConfig {
            epochs: 5,
            batch_size: 8,
            seed: 99,
            ..TrainingConfig::default()
        };
        let a = train_micro_drbm(&data, &labels, &cfg).unwrap();
        let b = train_micro_drbm(&data, &labels, &cfg).unwrap();
        assert_eq!(a.params, b.params);
        assert_eq!(a.log, b.log);
    }

    #[test]
    fn training_consumes_only_the_available_labels() {
        let (data, labels) = two_cluster_binary(53, 15);
        // expose exactly two labels per class
        let mut partial = PartialLabels::new(labels.len());
        partial.insert(0, 0);
        partial.insert(3, 0);
        partial.insert(15, 1);
        partial.insert(20, 1);
        let counting = CountingLabels::new(&partial);
        let cfg = TrainingConfig {
            epochs: 3,
            seed: 5,
            ..TrainingConfig::default()
        };
        let out = train_micro_drbm(&data, &counting, &cfg).unwrap();
        assert_eq!(counting.labels_consumed(), 4); // 2K with K = 2
        assert_eq!(out.log.len(), 4);
    }

    #[test]
    fn micro_training_rejects_alpha_zero() {
        let (data, labels) = two_cluster_binary(54, 5);
        let cfg = TrainingConfig {
            alpha: 0.0,
            ..TrainingConfig::default()
        };
        assert!(matches!(
            train_micro_drbm(&data, &labels, &cfg),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn plain_cd1_reduces_reconstruction_error_on_trend() {
        // unperturbed substrate check: 4 visible, 2 hidden, 200 epochs
        let mut rng = RngStream::from_seed(60);
        let mut rows = Vec::new();
        for _ in 0..40 {
            let proto = if rng.next_f64() < 0.5 {
                [0.9, 0.9, 0.1, 0.1]
            } else {
                [0.1, 0.1, 0.9, 0.9]
            };
            rows.push(
                proto
                    .iter()
                    .map(|&p| if rng.next_f64() < p { 1.0 } else { 0.0 })
                    .collect::<Vec<f64>>(),
            );
        }
        let data = Matrix::from_rows(&rows).unwrap();
        let cfg = TrainingConfig {
            eps: 0.1,
            epochs: 200,
            batch_size: 10,
            seed: 61,
            ..TrainingConfig::default()
        };
        let out = train_layer(
            &data,
            VisibleKind::Binary,
            2,
            None,
            &cfg,
            &mut RngStream::from_seed(cfg.seed),
        )
        .unwrap();
        let errors: Vec<f64> = out.log.iter().map(|l| l.reconstruction_error).collect();
        let slope = least_squares_slope(&errors);
        assert!(slope < 0.0, "reconstruction error slope {slope}");
    }
}
