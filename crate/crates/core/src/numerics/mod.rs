//! Deterministic random streams, elementwise nonlinearities, sampling
//! primitives and the KL divergence used by every other module.

mod matrix;
mod rng;

pub use matrix::Matrix;
pub use rng::RngStream;

use crate::error::{Error, Result};

/// Probabilities are clamped into `[PROB_EPS, 1 - PROB_EPS]` wherever a log
/// of them is taken, keeping gradients finite without visibly biasing
/// training.
pub const PROB_EPS: f64 = 1e-7;

/// Vector of probabilities, clamped into `[PROB_EPS, 1 - PROB_EPS]` on
/// construction.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbVector(Vec<f64>);

impl ProbVector {
    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// Clip raw values into the probability interval `[1e-7, 1 - 1e-7]`.
pub fn clamp_prob(raw: &[f64]) -> ProbVector {
    ProbVector(raw.iter().map(|&p| clamp_scalar(p)).collect())
}

#[inline]
pub(crate) fn clamp_scalar(p: f64) -> f64 {
    p.clamp(PROB_EPS, 1.0 - PROB_EPS)
}

#[inline]
pub(crate) fn sigmoid(x: f64) -> f64 {
    // Evaluate on the side that avoids overflow of exp.
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Elementwise logistic sigmoid `1 / (1 + e^(-x))`.
pub fn sigmoid_map(x: &Matrix) -> Matrix {
    x.map(sigmoid)
}

/// `Σ_x p(x) ln(p(x) / q(x))` over the given probability entries.
///
/// Natural log. The sum runs over the "=1" probabilities only, matching how
/// hidden-unit activation vectors are compared; it is not a full
/// Bernoulli-vector KL, so non-negativity is only guaranteed when `p` and `q`
/// each sum to 1.
pub fn kl_divergence(p: &ProbVector, q: &ProbVector) -> Result<f64> {
    if p.len() != q.len() {
        return Err(Error::Dimension(format!(
            "kl_divergence lengths {} vs {}",
            p.len(),
            q.len()
        )));
    }
    Ok(kl_slices(p.values(), q.values()))
}

/// KL sum over already-clamped slices; internal fast path.
pub(crate) fn kl_slices(p: &[f64], q: &[f64]) -> f64 {
    p.iter()
        .zip(q)
        .map(|(&pi, &qi)| {
            if pi == qi {
                0.0
            } else {
                pi * (pi / qi).ln()
            }
        })
        .sum()
}

/// Draw a 0/1 matrix with entrywise success probabilities `p`.
pub fn bernoulli_sample(p: &Matrix, rng: &mut RngStream) -> Matrix {
    p.map_with_rng(rng, |prob, r| if r.next_f64() < prob { 1.0 } else { 0.0 })
}

/// Draw entrywise from `N(mean, sigma²)`.
pub fn gaussian_sample(mean: &Matrix, sigma: f64, rng: &mut RngStream) -> Result<Matrix> {
    if sigma <= 0.0 {
        return Err(Error::Parameter(format!(
            "gaussian_sample sigma must be positive, got {sigma}"
        )));
    }
    Ok(mean.map_with_rng(rng, |m, r| m + sigma * r.next_standard_normal()))
}

impl Matrix {
    fn map_with_rng(&self, rng: &mut RngStream, f: impl Fn(f64, &mut RngStream) -> f64) -> Matrix {
        let data: Vec<f64> = self.data().iter().map(|&x| f(x, rng)).collect();
        Matrix::from_vec(self.rows(), self.cols(), data).expect("shape preserved")
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn sigmoid_at_zero_is_half() {
        let m = Matrix::from_vec(1, 1, vec![0.0]).unwrap();
        assert_eq!(sigmoid_map(&m).get(0, 0), 0.5);
    }

    #[test]
    fn sigmoid_saturates_toward_one() {
        let m = Matrix::from_vec(1, 1, vec![50.0]).unwrap();
        assert!((sigmoid_map(&m).get(0, 0) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn sigmoid_of_ln3_is_three_quarters() {
        // solve 1/(1+e^(-x)) = 0.75 -> x = ln 3
        let m = Matrix::from_vec(1, 1, vec![3.0_f64.ln()]).unwrap();
        assert!((sigmoid_map(&m).get(0, 0) - 0.75).abs() < 1e-12);
    }

    #[test]
    fn kl_of_equal_distributions_is_zero() {
        let p = clamp_prob(&[0.3, 0.7]);
        assert_eq!(kl_divergence(&p, &p).unwrap(), 0.0);
    }

    #[test]
    fn kl_direct_evaluation() {
        // 0.5 ln 2 + 0.5 ln(2/3)
        let p = clamp_prob(&[0.5, 0.5]);
        let q = clamp_prob(&[0.25, 0.75]);
        let expected = 0.14384103622589042;
        assert!((kl_divergence(&p, &q).unwrap() - expected).abs() < 1e-15);
    }

    #[test]
    fn kl_positive_for_proper_distribution_pair() {
        let p = clamp_prob(&[0.9, 0.1]);
        let q = clamp_prob(&[0.1, 0.9]);
        assert!(kl_divergence(&p, &q).unwrap() > 0.0);
    }

    #[test]
    fn kl_length_mismatch_errors() {
        let p = clamp_prob(&[0.5]);
        let q = clamp_prob(&[0.5, 0.5]);
        assert!(kl_divergence(&p, &q).is_err());
    }

    #[test]
    fn clamp_prob_examples() {
        let v = clamp_prob(&[0.0, 0.5, 1.0]);
        assert_eq!(v.values(), &[1e-7, 0.5, 1.0 - 1e-7]);
    }

    #[test]
    fn bernoulli_degenerate_probabilities() {
        let mut rng = RngStream::from_seed(3);
        let zeros = Matrix::zeros(4, 4);
        let ones = zeros.map(|_| 1.0);
        assert!(bernoulli_sample(&zeros, &mut rng)
            .data()
            .iter()
            .all(|&x| x == 0.0));
        assert!(bernoulli_sample(&ones, &mut rng)
            .data()
            .iter()
            .all(|&x| x == 1.0));
    }

    #[test]
    fn bernoulli_law_of_large_numbers() {
        let mut rng = RngStream::from_seed(11);
        let p = Matrix::zeros(1, 100_000).map(|_| 0.5);
        let s = bernoulli_sample(&p, &mut rng);
        let mean = s.data().iter().sum::<f64>() / s.data().len() as f64;
        assert!((mean - 0.5).abs() < 0.01, "mean {mean}");
    }

    #[test]
    fn gaussian_monte_carlo_moments() {
        let mut rng = RngStream::from_seed(13);
        let mean = Matrix::zeros(1, 100_000);
        let s = gaussian_sample(&mean, 1.0, &mut rng).unwrap();
        let n = s.data().len() as f64;
        let m = s.data().iter().sum::<f64>() / n;
        let var = s.data().iter().map(|x| (x - m) * (x - m)).sum::<f64>() / n;
        assert!(m.abs() < 0.02, "mean {m}");
        assert!((var - 1.0).abs() < 0.05, "var {var}");
    }

    #[test]
    fn gaussian_rejects_nonpositive_sigma() {
        let mut rng = RngStream::from_seed(1);
        let mean = Matrix::zeros(1, 1);
        assert!(gaussian_sample(&mean, 0.0, &mut rng).is_err());
        assert!(gaussian_sample(&mean, -1.0, &mut rng).is_err());
    }

    #[test]
    fn sampling_is_reproducible_under_the_same_seed() {
        let p = Matrix::zeros(3, 3).map(|_| 0.4);
        let a = bernoulli_sample(&p, &mut RngStream::from_seed(21));
        let b = bernoulli_sample(&p, &mut RngStream::from_seed(21));
        assert_eq!(a.data(), b.data());
        let g1 = gaussian_sample(&p, 2.0, &mut RngStream::from_seed(22)).unwrap();
        let g2 = gaussian_sample(&p, 2.0, &mut RngStream::from_seed(22)).unwrap();
        assert_eq!(g1.data(), g2.data());
    }

    proptest! {
        #[test]
        fn sigmoid_is_monotone_and_bounded(a in -30.0f64..30.0, b in -30.0f64..30.0) {
            let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
            let sl = sigmoid(lo);
            let sh = sigmoid(hi);
            prop_assert!(sl > 0.0 && sl < 1.0);
            prop_assert!(sh > 0.0 && sh < 1.0);
            prop_assert!(sl <= sh);
        }

        #[test]
        fn kl_self_is_zero_exactly(raw in proptest::collection::vec(0.0f64..=1.0, 1..20)) {
            let p = clamp_prob(&raw);
            prop_assert_eq!(kl_divergence(&p, &p).unwrap(), 0.0);
        }

        #[test]
        fn kl_nonnegative_when_both_sum_to_one(
            a in proptest::collection::vec(0.01f64..1.0, 2..8),
            b in proptest::collection::vec(0.01f64..1.0, 2..8),
        ) {
            let n = a.len().min(b.len());
            let sa: f64 = a[..n].iter().sum();
            let sb: f64 = b[..n].iter().sum();
            let p = clamp_prob(&a[..n].iter().map(|x| x / sa).collect::<Vec<_>>());
            let q = clamp_prob(&b[..n].iter().map(|x| x / sb).collect::<Vec<_>>());
            prop_assert!(kl_divergence(&p, &q).unwrap() >= -1e-12);
        }
    }
}
