//! Micro-supervised disturbance learning.
//!
//! Energy-based models (RBM / GRBM) trained by CD-1 whose learning is
//! perturbed by KL-divergence terms over a handful of labeled sample pairs,
//! stacked into a deep feature extractor and evaluated through spectral
//! clustering, pair-counting metrics, and Friedman aligned-ranks / Nemenyi
//! significance tests.

pub mod cluster;
pub mod ebm;
pub mod error;
pub mod micro;
pub mod numerics;
pub mod stack;
pub mod stats;

pub use error::{Error, Result};
