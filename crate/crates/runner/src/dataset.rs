//! Dataset ingestion and preprocessing: CSV loading with ordinal encoding,
//! per-feature standardization, synthetic blob generation, and seeded
//! reservoir subsampling.

use std::path::Path;

use microdl_core::numerics::{Matrix, RngStream};
use microdl_core::{Error, Result};

/// A labeled dataset with dense class ids `0..class_count`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub name: String,
    pub features: Matrix,
    pub labels: Vec<usize>,
    pub class_count: usize,
}

impl Dataset {
    pub fn new(name: String, features: Matrix, labels: Vec<usize>) -> Result<Self> {
        if features.rows() != labels.len() {
            return Err(Error::Dimension(format!(
                "{} feature rows vs {} labels",
                features.rows(),
                labels.len()
            )));
        }
        let class_count = labels.iter().copied().max().map_or(0, |m| m + 1);
        let mut seen = vec![false; class_count];
        for &l in &labels {
            seen[l] = true;
        }
        if seen.iter().any(|&s| !s) {
            return Err(Error::Data("class ids are not dense".into()));
        }
        Ok(Dataset {
            name,
            features,
            labels,
            class_count,
        })
    }

    pub fn samples(&self) -> usize {
        self.features.rows()
    }
}

/// Load a CSV with a header row. Columns where every cell parses as f64 are
/// numeric; any other column is ordinal-encoded by first appearance. The
/// named label column is extracted and densely re-indexed by first
/// appearance.
pub fn load_csv(path: &Path, label_column: &str) -> Result<Dataset> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_path(path)
        .map_err(|e| Error::Data(format!("cannot open {}: {e}", path.display())))?;
    let headers: Vec<String> = reader
        .headers()
        .map_err(|e| Error::Data(format!("bad header: {e}")))?
        .iter()
        .map(str::to_owned)
        .collect();
    let label_idx = headers
        .iter()
        .position(|h| h == label_column)
        .ok_or_else(|| {
            Error::Config(format!(
                "label column {label_column:?} not found; header has {headers:?}"
            ))
        })?;

    let mut cells: Vec<Vec<String>> = Vec::new();
    for (row_idx, record) in reader.records().enumerate() {
        let record = record.map_err(|e| Error::Data(format!("row {}: {e}", row_idx + 2)))?;
        if record.len() != headers.len() {
            return Err(Error::Data(format!(
                "row {} has {} cells, header has {}",
                row_idx + 2,
                record.len(),
                headers.len()
            )));
        }
        cells.push(record.iter().map(str::to_owned).collect());
    }
    if cells.is_empty() {
        return Err(Error::Data(format!("{} has no data rows", path.display())));
    }

    for (r, row) in cells.iter().enumerate() {
        for (c, cell) in row.iter().enumerate() {
            if cell.trim().is_empty() {
                return Err(Error::Data(format!(
                    "unparseable empty cell at row {}, column {:?}",
                    r + 2,
                    headers[c]
                )));
            }
        }
    }

    let feature_cols: Vec<usize> = (0..headers.len()).filter(|&c| c != label_idx).collect();
    let mut columns: Vec<Vec<f64>> = Vec::with_capacity(feature_cols.len());
    for &c in &feature_cols {
        let raw: Vec<&str> = cells.iter().map(|row| row[c].trim()).collect();
        let numeric: Option<Vec<f64>> = raw.iter().map(|s| s.parse::<f64>().ok()).collect();
        let parsed = match numeric {
            Some(values) => {
                if let Some(bad) = values.iter().position(|v| !v.is_finite()) {
                    return Err(Error::Data(format!(
                        "non-finite value at row {}, column {:?}",
                        bad + 2,
                        headers[c]
                    )));
                }
                values
            }
            None => ordinal_encode(&raw),
        };
        columns.push(parsed);
    }

    let labels = dense_labels(&cells.iter().map(|r| r[label_idx].trim()).collect::<Vec<_>>());
    let rows = cells.len();
    let mut data = Vec::with_capacity(rows * columns.len());
    for r in 0..rows {
        for col in &columns {
            data.push(col[r]);
        }
    }
    let features = Matrix::from_vec(rows, columns.len(), data)?;
    let name = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "dataset".into());
    Dataset::new(name, features, labels)
}

fn ordinal_encode(raw: &[&str]) -> Vec<f64> {
    let mut ids: Vec<&str> = Vec::new();
    raw.iter()
        .map(|s| {
            if let Some(pos) = ids.iter().position(|k| k == s) {
                pos as f64
            } else {
                ids.push(s);
                (ids.len() - 1) as f64
            }
        })
        .collect()
}

fn dense_labels(raw: &[&str]) -> Vec<usize> {
    let mut ids: Vec<&str> = Vec::new();
    raw.iter()
        .map(|s| {
            if let Some(pos) = ids.iter().position(|k| k == s) {
                pos
            } else {
                ids.push(s);
                ids.len() - 1
            }
        })
        .collect()
}

/// Standardization result: the transformed dataset plus the indices of any
/// zero-variance features that had to be dropped.
#[derive(Debug, Clone)]
pub struct Standardized {
    pub dataset: Dataset,
    pub dropped_features: Vec<usize>,
}

/// Per-feature zero mean and unit population standard deviation.
/// Zero-variance features are dropped; the caller decides how to surface the
/// warning.
pub fn standardize(d: &Dataset) -> Result<Standardized> {
    let rows = d.features.rows();
    let cols = d.features.cols();
    let n = rows as f64;
    let mut kept: Vec<(usize, f64, f64)> = Vec::new(); // (col, mean, std)
    let mut dropped = Vec::new();
    for c in 0..cols {
        let mean: f64 = (0..rows).map(|r| d.features.get(r, c)).sum::<f64>() / n;
        let var: f64 = (0..rows)
            .map(|r| {
                let x = d.features.get(r, c) - mean;
                x * x
            })
            .sum::<f64>()
            / n;
        if var == 0.0 {
            dropped.push(c);
        } else {
            kept.push((c, mean, var.sqrt()));
        }
    }
    if kept.is_empty() {
        return Err(Error::Data("all features have zero variance".into()));
    }
    let mut data = Vec::with_capacity(rows * kept.len());
    for r in 0..rows {
        for &(c, mean, sd) in &kept {
            data.push((d.features.get(r, c) - mean) / sd);
        }
    }
    let features = Matrix::from_vec(rows, kept.len(), data)?;
    Ok(Standardized {
        dataset: Dataset {
            name: d.name.clone(),
            features,
            labels: d.labels.clone(),
            class_count: d.class_count,
        },
        dropped_features: dropped,
    })
}

/// `k` spherical unit-variance Gaussian clusters with centers pairwise at
/// least `separation` apart (centers sit on scaled coordinate axes).
pub fn generate_blobs(
    k: usize,
    per_cluster: usize,
    dim: usize,
    separation: f64,
    seed: u64,
) -> Result<Dataset> {
    if k < 2 {
        return Err(Error::Parameter("blobs need at least 2 clusters".into()));
    }
    if per_cluster == 0 || dim == 0 {
        return Err(Error::Parameter(
            "per_cluster and dim must be positive".into(),
        ));
    }
    if separation <= 0.0 {
        return Err(Error::Parameter("separation must be positive".into()));
    }
    let mut rng = RngStream::from_seed(seed);
    let mut rows = Vec::with_capacity(k * per_cluster);
    let mut labels = Vec::with_capacity(k * per_cluster);
    for c in 0..k {
        let axis = c % dim;
        let radius = (1 + c / dim) as f64 * separation;
        for _ in 0..per_cluster {
            let row: Vec<f64> = (0..dim)
                .map(|d| {
                    let center = if d == axis { radius } else { 0.0 };
                    center + rng.next_standard_normal()
                })
                .collect();
            rows.push(row);
            labels.push(c);
        }
    }
    Dataset::new(
        format!("blobs-k{k}-d{dim}-s{separation}"),
        Matrix::from_rows(&rows)?,
        labels,
    )
}

/// Seeded reservoir subsample of `n` rows, preserving encounter order of the
/// kept rows. Labels are re-densified afterwards.
pub fn subsample(d: &Dataset, n: usize, seed: u64) -> Result<Dataset> {
    if n == 0 {
        return Err(Error::Parameter("sample size must be positive".into()));
    }
    if n >= d.samples() {
        return Ok(d.clone());
    }
    let mut rng = RngStream::from_seed(seed);
    let mut reservoir: Vec<usize> = (0..n).collect();
    for i in n..d.samples() {
        let j = rng.next_index(i + 1);
        if j < n {
            reservoir[j] = i;
        }
    }
    reservoir.sort_unstable();
    let features = d.features.select_rows(&reservoir)?;
    let raw: Vec<usize> = reservoir.iter().map(|&i| d.labels[i]).collect();
    let mut ids: Vec<usize> = Vec::new();
    let labels: Vec<usize> = raw
        .iter()
        .map(|&l| {
            if let Some(pos) = ids.iter().position(|&k| k == l) {
                pos
            } else {
                ids.push(l);
                ids.len() - 1
            }
        })
        .collect();
    Dataset::new(format!("{}-n{n}", d.name), features, labels)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn write_csv(content: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::Builder::new().suffix(".csv").tempfile().unwrap();
        f.write_all(content.as_bytes()).unwrap();
        f.flush().unwrap();
        f
    }

    #[test]
    fn loads_numeric_features_and_dense_labels() {
        let f = write_csv("f1,f2,label\n1,2,a\n3,4,b\n");
        let d = load_csv(f.path(), "label").unwrap();
        assert_eq!(d.features.rows(), 2);
        assert_eq!(d.features.cols(), 2);
        assert_eq!(d.features.data(), &[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(d.labels, vec![0, 1]);
        assert_eq!(d.class_count, 2);
    }

    #[test]
    fn categorical_columns_are_ordinal_by_first_appearance() {
        let f = write_csv("size,label\nlow,a\nmed,a\nhigh,b\nlow,b\n");
        let d = load_csv(f.path(), "label").unwrap();
        assert_eq!(d.features.data(), &[0.0, 1.0, 2.0, 0.0]);
    }

    #[test]
    fn missing_label_column_is_a_config_error() {
        let f = write_csv("f1,f2\n1,2\n");
        let err = load_csv(f.path(), "label").unwrap_err();
        assert!(matches!(err, Error::Config(_)));
        assert!(err.to_string().contains("label"));
    }

    #[test]
    fn empty_cell_is_addressed_by_row_and_column() {
        let f = write_csv("f1,f2,label\n1,,a\n");
        let err = load_csv(f.path(), "label").unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("row 2"), "{msg}");
        assert!(msg.contains("f2"), "{msg}");
    }

    #[test]
    fn standardize_hits_unit_population_std() {
        let d = Dataset::new(
            "t".into(),
            Matrix::from_rows(&[vec![1.0], vec![3.0]]).unwrap(),
            vec![0, 1],
        )
        .unwrap();
        let s = standardize(&d).unwrap();
        assert_eq!(s.dataset.features.data(), &[-1.0, 1.0]);
        assert!(s.dropped_features.is_empty());
    }

    #[test]
    fn standardize_is_idempotent() {
        let d = generate_blobs(2, 30, 4, 5.0, 3).unwrap();
        let once = standardize(&d).unwrap().dataset;
        let twice = standardize(&once).unwrap().dataset;
        for (a, b) in once.features.data().iter().zip(twice.features.data()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn constant_features_are_dropped_with_notice() {
        let d = Dataset::new(
            "t".into(),
            Matrix::from_rows(&[vec![1.0, 5.0], vec![2.0, 5.0]]).unwrap(),
            vec![0, 1],
        )
        .unwrap();
        let s = standardize(&d).unwrap();
        assert_eq!(s.dropped_features, vec![1]);
        assert_eq!(s.dataset.features.cols(), 1);
    }

    #[test]
    fn blobs_are_reproducible_and_separated() {
        let a = generate_blobs(3, 10, 5, 20.0, 9).unwrap();
        let b = generate_blobs(3, 10, 5, 20.0, 9).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.samples(), 30);
        assert_eq!(a.class_count, 3);
        // pairwise center distance from construction is at least `separation`
        for c1 in 0..3usize {
            for c2 in (c1 + 1)..3 {
                let m1 = a.features.row(c1 * 10).to_vec();
                let m2 = a.features.row(c2 * 10).to_vec();
                let d2: f64 = m1.iter().zip(&m2).map(|(x, y)| (x - y) * (x - y)).sum();
                assert!(d2.sqrt() > 10.0, "clusters {c1} and {c2} too close");
            }
        }
    }

    #[test]
    fn blobs_validate_parameters() {
        assert!(generate_blobs(1, 10, 3, 5.0, 1).is_err());
        assert!(generate_blobs(2, 0, 3, 5.0, 1).is_err());
        assert!(generate_blobs(2, 10, 3, 0.0, 1).is_err());
    }

    #[test]
    fn subsample_is_seeded_and_densifies_labels() {
        let d = generate_blobs(3, 20, 3, 8.0, 4).unwrap();
        let a = subsample(&d, 15, 11).unwrap();
        let b = subsample(&d, 15, 11).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.samples(), 15);
        let max = a.labels.iter().copied().max().unwrap();
        assert_eq!(a.class_count, max + 1);
    }
}
