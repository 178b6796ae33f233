//! In-process integration of the full feature-learning pipeline: stack
//! training, encoding, spectral clustering, and scoring.

use microdl_core::cluster::spectral_cluster;
use microdl_core::micro::{GradientMode, SpiScaling, TrainingConfig};
use microdl_core::numerics::{Matrix, RngStream};
use microdl_core::stack::{encode, stack_from_json, stack_to_json, train_stack, StackSpec};
use microdl_core::stats::{clustering_accuracy, pair_counts, rand_index};

fn blobs(k: usize, per: usize, dim: usize, sep: f64, seed: u64) -> (Matrix, Vec<usize>) {
    let mut rng = RngStream::from_seed(seed);
    let mut rows = Vec::new();
    let mut labels = Vec::new();
    for c in 0..k {
        for _ in 0..per {
            // class pattern spans every dimension so the signal survives
            // per-feature standardization
            let row: Vec<f64> = (0..dim)
                .map(|d| {
                    let center = if (c + d) % k == 0 { sep } else { 0.0 };
                    center + rng.next_standard_normal()
                })
                .collect();
            rows.push(row);
            labels.push(c);
        }
    }
    // per-feature standardization, the precondition of the Gaussian layer
    let m = Matrix::from_rows(&rows).unwrap();
    let mut out = m.clone();
    for c in 0..m.cols() {
        let mean: f64 = (0..m.rows()).map(|r| m.get(r, c)).sum::<f64>() / m.rows() as f64;
        let var: f64 = (0..m.rows())
            .map(|r| (m.get(r, c) - mean) * (m.get(r, c) - mean))
            .sum::<f64>()
            / m.rows() as f64;
        let sd = var.sqrt();
        for r in 0..m.rows() {
            out.set(r, c, (m.get(r, c) - mean) / sd);
        }
    }
    (out, labels)
}

fn cfg(seed: u64) -> TrainingConfig {
    TrainingConfig {
        alpha: 0.3,
        eps: 0.02,
        epochs: 8,
        batch_size: 16,
        gradient_mode: GradientMode::Derived,
        spi_scaling: SpiScaling::ObjectiveConsistent,
        seed,
    }
}

#[test]
fn stack_features_of_separated_blobs_cluster_correctly() {
    let (data, labels) = blobs(3, 25, 6, 18.0, 42);
    let spec = StackSpec::uniform(1, data.cols(), cfg(7), true);
    let stack = train_stack(&data, &labels, &spec).unwrap();
    let features = encode(&stack, &data).unwrap();
    let assignment = spectral_cluster(&features, 3, 11).unwrap();
    let accuracy = clustering_accuracy(&labels, assignment.labels()).unwrap();
    assert_eq!(accuracy, 1.0, "separated blobs should cluster exactly");
    let counts = pair_counts(&labels, assignment.labels()).unwrap();
    assert_eq!(rand_index(&counts), 1.0);
}

#[test]
fn whole_pipeline_is_deterministic_end_to_end() {
    let (data, labels) = blobs(2, 20, 5, 10.0, 9);
    let spec = StackSpec::uniform(2, data.cols(), cfg(3), true);
    let run = || {
        let stack = train_stack(&data, &labels, &spec).unwrap();
        let features = encode(&stack, &data).unwrap();
        let assignment = spectral_cluster(&features, 2, 5).unwrap();
        (stack_to_json(&stack).unwrap(), assignment)
    };
    let (json_a, assign_a) = run();
    let (json_b, assign_b) = run();
    assert_eq!(json_a, json_b, "checkpoint bytes differ");
    assert_eq!(assign_a, assign_b);
}

#[test]
fn checkpointed_stack_reproduces_the_pipeline() {
    let (data, labels) = blobs(2, 15, 4, 12.0, 13);
    let spec = StackSpec::uniform(2, data.cols(), cfg(5), true);
    let stack = train_stack(&data, &labels, &spec).unwrap();
    let restored = stack_from_json(&stack_to_json(&stack).unwrap()).unwrap();
    let direct = encode(&stack, &data).unwrap();
    let via_checkpoint = encode(&restored, &data).unwrap();
    assert_eq!(direct, via_checkpoint);
}
