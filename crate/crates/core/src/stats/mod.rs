//! Clustering evaluation metrics (pair counting and optimal-assignment
//! accuracy) and the Friedman aligned-ranks test with Nemenyi post-hoc
//! comparisons.

mod hungarian;
mod special;

pub use special::{
    chi_square_sf, normal_cdf, normal_sf, reg_gamma_p, reg_gamma_q, studentized_range_sf,
};

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::Matrix;

/// Pairwise agreement counts between two partitions of the same samples.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PairCounts {
    /// Pairs together in both partitions.
    pub true_pos: u64,
    /// Pairs apart in truth but together in the prediction.
    pub false_pos: u64,
    /// Pairs together in truth but apart in the prediction.
    pub false_neg: u64,
    /// Pairs apart in both.
    pub true_neg: u64,
}

impl PairCounts {
    pub fn total(&self) -> u64 {
        self.true_pos + self.false_pos + self.false_neg + self.true_neg
    }
}

/// Count all unordered sample pairs by their together/apart status in the two
/// partitions.
pub fn pair_counts(truth: &[usize], pred: &[usize]) -> Result<PairCounts> {
    if truth.len() != pred.len() {
        return Err(Error::Dimension(format!(
            "label vectors have lengths {} and {}",
            truth.len(),
            pred.len()
        )));
    }
    if truth.len() < 2 {
        return Err(Error::Data("pair counting needs at least 2 samples".into()));
    }
    let mut counts = PairCounts {
        true_pos: 0,
        false_pos: 0,
        false_neg: 0,
        true_neg: 0,
    };
    for i in 0..truth.len() {
        for j in (i + 1)..truth.len() {
            let same_truth = truth[i] == truth[j];
            let same_pred = pred[i] == pred[j];
            match (same_truth, same_pred) {
                (true, true) => counts.true_pos += 1,
                (false, true) => counts.false_pos += 1,
                (true, false) => counts.false_neg += 1,
                (false, false) => counts.true_neg += 1,
            }
        }
    }
    Ok(counts)
}

/// Fraction of samples assigned to the correct class under the best
/// one-to-one map between predicted clusters and true classes (Hungarian
/// method on the negated contingency matrix).
pub fn clustering_accuracy(truth: &[usize], pred: &[usize]) -> Result<f64> {
    if truth.len() != pred.len() {
        return Err(Error::Dimension(format!(
            "label vectors have lengths {} and {}",
            truth.len(),
            pred.len()
        )));
    }
    if truth.is_empty() {
        return Err(Error::Data("accuracy needs at least one sample".into()));
    }
    let t_ids = dense_ids(truth);
    let p_ids = dense_ids(pred);
    let k = t_ids.len().max(p_ids.len());
    let mut contingency = vec![vec![0.0; k]; k];
    for (&t, &p) in truth.iter().zip(pred) {
        contingency[p_ids[&p]][t_ids[&t]] += 1.0;
    }
    let negated: Vec<Vec<f64>> = contingency
        .iter()
        .map(|row| row.iter().map(|&c| -c).collect())
        .collect();
    let assign = hungarian::min_cost_assignment(&negated);
    let matched: f64 = assign
        .iter()
        .enumerate()
        .map(|(p, &t)| contingency[p][t])
        .sum();
    Ok(matched / truth.len() as f64)
}

fn dense_ids(labels: &[usize]) -> BTreeMap<usize, usize> {
    let mut ids = BTreeMap::new();
    for &l in labels {
        let next = ids.len();
        ids.entry(l).or_insert(next);
    }
    ids
}

/// Pair-counting Jaccard: TP / (TP + FP + FN); 1 when there are no positive
/// pairs to disagree about.
pub fn jaccard_index(counts: &PairCounts) -> f64 {
    let denom = counts.true_pos + counts.false_pos + counts.false_neg;
    if denom == 0 {
        1.0
    } else {
        counts.true_pos as f64 / denom as f64
    }
}

/// Fowlkes-Mallows index: geometric mean of pair precision and recall.
pub fn fm_index(counts: &PairCounts) -> f64 {
    let pp = counts.true_pos + counts.false_pos;
    let pr = counts.true_pos + counts.false_neg;
    if pp == 0 && pr == 0 {
        return 1.0;
    }
    if counts.true_pos == 0 {
        return 0.0;
    }
    let precision = counts.true_pos as f64 / pp as f64;
    let recall = counts.true_pos as f64 / pr as f64;
    (precision * recall).sqrt()
}

/// Rand index: fraction of pair decisions both partitions agree on.
pub fn rand_index(counts: &PairCounts) -> f64 {
    (counts.true_pos + counts.true_neg) as f64 / counts.total() as f64
}

/// Output of the Friedman aligned-ranks procedure. Observations are aligned
/// by subtracting each dataset's mean, then all `n·m` values are ranked
/// jointly in descending order (rank 1 = best) with midranks for ties.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankTable {
    /// Aligned observations, datasets x algorithms.
    pub aligned: Matrix,
    /// Joint ranks, same shape.
    pub ranks: Matrix,
    /// Rank totals per algorithm.
    pub column_totals: Vec<f64>,
    /// Rank totals per dataset.
    pub row_totals: Vec<f64>,
    /// The aligned-ranks test statistic.
    pub t_statistic: f64,
    /// Chi-square survival probability of the statistic with n-1 degrees of
    /// freedom.
    pub p_value: f64,
}

impl RankTable {
    pub fn algorithms(&self) -> usize {
        self.aligned.cols()
    }

    pub fn datasets(&self) -> usize {
        self.aligned.rows()
    }

    pub fn average_column_ranks(&self) -> Vec<f64> {
        let m = self.datasets() as f64;
        self.column_totals.iter().map(|&t| t / m).collect()
    }
}

/// Friedman aligned-ranks test over a performance table with one row per
/// dataset and one column per algorithm.
pub fn friedman_aligned_ranks(values: &Matrix) -> Result<RankTable> {
    let m = values.rows();
    let n = values.cols();
    if n < 2 || m < 2 {
        return Err(Error::Parameter(format!(
            "aligned ranks need at least 2 algorithms and 2 datasets, got {n} x {m}"
        )));
    }
    if values.data().iter().any(|v| v.is_nan()) {
        return Err(Error::Data("performance table contains NaN".into()));
    }

    let mut aligned = values.clone();
    for i in 0..m {
        let mean: f64 = values.row(i).iter().sum::<f64>() / n as f64;
        for v in aligned.row_mut(i) {
            *v -= mean;
        }
    }

    let total = n * m;
    let mut order: Vec<usize> = (0..total).collect();
    // descending: the largest aligned value takes rank 1
    order.sort_by(|&a, &b| {
        aligned.data()[b]
            .partial_cmp(&aligned.data()[a])
            .expect("aligned values are finite")
    });
    let mut rank_flat = vec![0.0; total];
    let mut i = 0;
    while i < total {
        let mut j = i;
        while j < total && aligned.data()[order[j]] == aligned.data()[order[i]] {
            j += 1;
        }
        let midrank = (i + 1 + j) as f64 / 2.0;
        for &idx in &order[i..j] {
            rank_flat[idx] = midrank;
        }
        i = j;
    }
    let ranks = Matrix::from_vec(m, n, rank_flat)?;

    let column_totals: Vec<f64> = (0..n)
        .map(|j| (0..m).map(|i| ranks.get(i, j)).sum())
        .collect();
    let row_totals: Vec<f64> = (0..m).map(|i| ranks.row(i).iter().sum()).collect();

    let nf = n as f64;
    let mf = m as f64;
    let nm = nf * mf;
    let sum_col_sq: f64 = column_totals.iter().map(|&c| c * c).sum();
    let sum_row_sq: f64 = row_totals.iter().map(|&r| r * r).sum();
    let numerator = (nf - 1.0) * (sum_col_sq - nf * mf * mf * (nm + 1.0) * (nm + 1.0) / 4.0);
    let denominator = nm * (nm + 1.0) * (2.0 * nm + 1.0) / 6.0 - sum_row_sq / nf;
    if denominator <= 0.0 {
        return Err(Error::Numeric(
            "aligned-ranks denominator is not positive".into(),
        ));
    }
    let t_statistic = numerator / denominator;
    let p_value = chi_square_sf(t_statistic, n - 1);

    Ok(RankTable {
        aligned,
        ranks,
        column_totals,
        row_totals,
        t_statistic,
        p_value,
    })
}

/// Pairwise Nemenyi p-values over the aligned average ranks.
///
/// Under the joint-ranking null the variance of an average-rank difference is
/// `n(nm+1)/6`; the standardized difference times √2 is referred to the
/// studentized range distribution with `n` groups and infinite degrees of
/// freedom. Symmetric, diagonal exactly 1.
pub fn nemenyi_posthoc(table: &RankTable) -> Result<Vec<Vec<f64>>> {
    let n = table.algorithms();
    let m = table.datasets();
    if n < 2 {
        return Err(Error::Parameter(
            "nemenyi needs at least two algorithms".into(),
        ));
    }
    let avg = table.average_column_ranks();
    let nm = (n * m) as f64;
    let se = (n as f64 * (nm + 1.0) / 6.0).sqrt();
    let mut p = vec![vec![1.0; n]; n];
    for i in 0..n {
        for j in (i + 1)..n {
            let q = ((avg[i] - avg[j]).abs() / se) * std::f64::consts::SQRT_2;
            let pv = studentized_range_sf(q, n);
            p[i][j] = pv;
            p[j][i] = pv;
        }
    }
    Ok(p)
}
