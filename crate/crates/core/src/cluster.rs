//! Spectral clustering of learned features: Gaussian affinities, the
//! symmetric normalized Laplacian, and k-means with k-means++ seeding on the
//! row-normalized eigenvector embedding.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::numerics::{Matrix, RngStream};

/// Symmetric non-negative similarity matrix with a zero diagonal.
#[derive(Debug, Clone)]
pub struct AffinityMatrix {
    values: Matrix,
}

impl AffinityMatrix {
    /// Validate symmetry (to 1e-12), non-negativity and the zero diagonal.
    pub fn new(values: Matrix) -> Result<Self> {
        if values.rows() != values.cols() {
            return Err(Error::Dimension("affinity matrix must be square".into()));
        }
        for i in 0..values.rows() {
            if values.get(i, i) != 0.0 {
                return Err(Error::Parameter("affinity diagonal must be zero".into()));
            }
            for j in 0..values.cols() {
                let v = values.get(i, j);
                if v < 0.0 {
                    return Err(Error::Parameter(format!(
                        "negative affinity at ({i},{j})"
                    )));
                }
                if (v - values.get(j, i)).abs() > 1e-12 {
                    return Err(Error::Parameter(format!(
                        "asymmetric affinity at ({i},{j})"
                    )));
                }
            }
        }
        Ok(AffinityMatrix { values })
    }

    pub fn size(&self) -> usize {
        self.values.rows()
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values.get(i, j)
    }
}

/// Cluster label per sample, labels in `0..k`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ClusterAssignment {
    labels: Vec<usize>,
    k: usize,
}

impl ClusterAssignment {
    pub fn new(labels: Vec<usize>, k: usize) -> Result<Self> {
        if k == 0 {
            return Err(Error::Parameter("cluster count must be positive".into()));
        }
        if labels.iter().any(|&l| l >= k) {
            return Err(Error::Parameter("cluster label out of range".into()));
        }
        Ok(ClusterAssignment { labels, k })
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn k(&self) -> usize {
        self.k
    }
}

fn squared_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Gaussian kernel affinities `exp(-‖x_i - x_j‖² / (2σ²))` with a zero
/// diagonal. With `sigma = None` the bandwidth is the median pairwise
/// distance.
pub fn gaussian_affinity(x: &Matrix, sigma: Option<f64>) -> Result<AffinityMatrix> {
    let m = x.rows();
    if m < 2 {
        return Err(Error::Data("affinity needs at least 2 samples".into()));
    }
    if let Some(s) = sigma {
        if s <= 0.0 {
            return Err(Error::Parameter(format!(
                "affinity sigma must be positive, got {s}"
            )));
        }
    }
    let mut sq = Matrix::zeros(m, m);
    let mut dists = Vec::with_capacity(m * (m - 1) / 2);
    for i in 0..m {
        for j in (i + 1)..m {
            let d2 = squared_distance(x.row(i), x.row(j));
            sq.set(i, j, d2);
            sq.set(j, i, d2);
            dists.push(d2.sqrt());
        }
    }
    let sigma = match sigma {
        Some(s) => s,
        None => {
            dists.sort_by(|a, b| a.partial_cmp(b).expect("finite distances"));
            let median = if dists.len() % 2 == 1 {
                dists[dists.len() / 2]
            } else {
                0.5 * (dists[dists.len() / 2 - 1] + dists[dists.len() / 2])
            };
            // all-coincident data would give a zero bandwidth
            if median > 0.0 {
                median
            } else {
                1.0
            }
        }
    };
    let denom = 2.0 * sigma * sigma;
    let mut values = sq.map(|d2| (-d2 / denom).exp());
    for i in 0..m {
        values.set(i, i, 0.0);
    }
    AffinityMatrix::new(values)
}

/// Eigenvalues of the symmetric normalized Laplacian, ascending. Exposed for
/// validation; `spectral_cluster` recomputes its own decomposition.
pub fn laplacian_eigenvalues(affinity: &AffinityMatrix) -> Vec<f64> {
    let (l, _) = laplacian_embedding_parts(affinity);
    let mut eig: Vec<f64> = nalgebra::SymmetricEigen::new(l)
        .eigenvalues
        .iter()
        .copied()
        .collect();
    eig.sort_by(|a, b| a.partial_cmp(b).expect("finite eigenvalues"));
    eig
}

fn laplacian_embedding_parts(affinity: &AffinityMatrix) -> (DMatrix<f64>, usize) {
    let m = affinity.size();
    let mut degrees = vec![0.0; m];
    for i in 0..m {
        for j in 0..m {
            degrees[i] += affinity.get(i, j);
        }
    }
    // zero-degree guard for disconnected isolated points
    let inv_sqrt: Vec<f64> = degrees
        .iter()
        .map(|&d| 1.0 / d.max(1e-12).sqrt())
        .collect();
    let mut l = DMatrix::<f64>::identity(m, m);
    for i in 0..m {
        for j in 0..m {
            if i != j {
                l[(i, j)] = -affinity.get(i, j) * inv_sqrt[i] * inv_sqrt[j];
            }
        }
    }
    (l, m)
}

/// Ng-Jordan-Weiss spectral clustering: normalized Laplacian, the k
/// smallest-eigenvalue eigenvectors row-normalized, then k-means++ with 20
/// restarts under the given seed.
pub fn spectral_cluster(x: &Matrix, k: usize, seed: u64) -> Result<ClusterAssignment> {
    let m = x.rows();
    if k == 0 {
        return Err(Error::Parameter("cluster count must be positive".into()));
    }
    if k > m {
        return Err(Error::Parameter(format!(
            "cannot form {k} clusters from {m} samples"
        )));
    }
    let affinity = gaussian_affinity(x, None)?;
    let (l, _) = laplacian_embedding_parts(&affinity);
    let eigen = nalgebra::SymmetricEigen::new(l);
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&a, &b| {
        eigen.eigenvalues[a]
            .partial_cmp(&eigen.eigenvalues[b])
            .expect("finite eigenvalues")
    });

    let mut embedding = Matrix::zeros(m, k);
    for (col, &idx) in order.iter().take(k).enumerate() {
        for row in 0..m {
            embedding.set(row, col, eigen.eigenvectors[(row, idx)]);
        }
    }
    for row in 0..m {
        let norm: f64 = embedding.row(row).iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm > 1e-12 {
            for v in embedding.row_mut(row) {
                *v /= norm;
            }
        }
    }
    kmeans(&embedding, k, seed, 20)
}

/// Lloyd's k-means with k-means++ seeding, best of `restarts` by inertia,
/// ties resolved toward the lower restart index.
pub fn kmeans(
    points: &Matrix,
    k: usize,
    seed: u64,
    restarts: usize,
) -> Result<ClusterAssignment> {
    let m = points.rows();
    if k == 0 || restarts == 0 {
        return Err(Error::Parameter(
            "cluster count and restarts must be positive".into(),
        ));
    }
    if k > m {
        return Err(Error::Parameter(format!(
            "cannot form {k} clusters from {m} points"
        )));
    }
    let root = RngStream::from_seed(seed);
    let mut best: Option<(f64, Vec<usize>)> = None;
    for restart in 0..restarts {
        let mut rng = root.child(restart as u64);
        let (inertia, labels) = lloyd_once(points, k, &mut rng);
        let better = match &best {
            None => true,
            Some((best_inertia, _)) => inertia < *best_inertia,
        };
        if better {
            best = Some((inertia, labels));
        }
    }
    let (_, labels) = best.expect("at least one restart");
    ClusterAssignment::new(labels, k)
}

fn lloyd_once(points: &Matrix, k: usize, rng: &mut RngStream) -> (f64, Vec<usize>) {
    let m = points.rows();
    let dim = points.cols();
    let mut centroids = plus_plus_seeding(points, k, rng);
    let mut labels = vec![0usize; m];

    for _ in 0..300 {
        // assignment step; ties go to the lowest centroid index
        for (i, label) in labels.iter_mut().enumerate() {
            let mut best_c = 0;
            let mut best_d = f64::INFINITY;
            for (c, centroid) in centroids.iter().enumerate() {
                let d = squared_distance(points.row(i), centroid);
                if d < best_d {
                    best_d = d;
                    best_c = c;
                }
            }
            *label = best_c;
        }

        // update step
        let mut sums = vec![vec![0.0; dim]; k];
        let mut counts = vec![0usize; k];
        for (i, &label) in labels.iter().enumerate() {
            counts[label] += 1;
            for (s, &v) in sums[label].iter_mut().zip(points.row(i)) {
                *s += v;
            }
        }
        let mut max_shift = 0.0f64;
        for c in 0..k {
            if counts[c] == 0 {
                // re-seed an empty cluster at the point farthest from its
                // assigned centroid
                let far = (0..m)
                    .max_by(|&a, &b| {
                        let da = squared_distance(points.row(a), &centroids[labels[a]]);
                        let db = squared_distance(points.row(b), &centroids[labels[b]]);
                        da.partial_cmp(&db).expect("finite distances")
                    })
                    .expect("nonempty points");
                centroids[c] = points.row(far).to_vec();
                max_shift = f64::INFINITY;
                continue;
            }
            let inv = 1.0 / counts[c] as f64;
            let mut shift = 0.0;
            for (d, s) in sums[c].iter().enumerate() {
                let next = s * inv;
                shift += (next - centroids[c][d]) * (next - centroids[c][d]);
                centroids[c][d] = next;
            }
            max_shift = max_shift.max(shift.sqrt());
        }
        if max_shift <= 1e-9 {
            break;
        }
    }

    // final assignment and inertia
    let mut inertia = 0.0;
    for (i, label) in labels.iter_mut().enumerate() {
        let mut best_c = 0;
        let mut best_d = f64::INFINITY;
        for (c, centroid) in centroids.iter().enumerate() {
            let d = squared_distance(points.row(i), centroid);
            if d < best_d {
                best_d = d;
                best_c = c;
            }
        }
        *label = best_c;
        inertia += best_d;
    }
    (inertia, labels)
}

fn plus_plus_seeding(points: &Matrix, k: usize, rng: &mut RngStream) -> Vec<Vec<f64>> {
    let m = points.rows();
    let mut centroids: Vec<Vec<f64>> = Vec::with_capacity(k);
    centroids.push(points.row(rng.next_index(m)).to_vec());
    let mut min_d2: Vec<f64> = (0..m)
        .map(|i| squared_distance(points.row(i), &centroids[0]))
        .collect();
    while centroids.len() < k {
        let total: f64 = min_d2.iter().sum();
        let chosen = if total > 0.0 {
            let target = rng.next_f64() * total;
            let mut acc = 0.0;
            let mut pick = m - 1;
            for (i, &d) in min_d2.iter().enumerate() {
                acc += d;
                if acc >= target {
                    pick = i;
                    break;
                }
            }
            pick
        } else {
            // all remaining points coincide with chosen centroids
            rng.next_index(m)
        };
        centroids.push(points.row(chosen).to_vec());
        for (i, d) in min_d2.iter_mut().enumerate() {
            let nd = squared_distance(points.row(i), centroids.last().expect("just pushed"));
            if nd < *d {
                *d = nd;
            }
        }
    }
    centroids
}
