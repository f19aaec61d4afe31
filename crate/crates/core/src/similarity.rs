//! Performance-vector similarity: one minus the mean of the k largest
//! per-dataset accuracy differences between two models.

use std::collections::HashMap;

use crate::error::{Error, Result};
use crate::repo::PerformanceMatrix;

/// A model's benchmark performance vector, present cells only.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelVector {
    pub model_id: String,
    pub dims: Vec<(String, f64)>,
}

impl ModelVector {
    pub fn from_matrix(matrix: &PerformanceMatrix, model_id: &str) -> Result<Self> {
        let dims = matrix.present_cells(model_id)?;
        if dims.is_empty() {
            return Err(Error::NoData {
                model_id: model_id.into(),
            });
        }
        Ok(ModelVector {
            model_id: model_id.into(),
            dims,
        })
    }
}

/// Vectors for every model in the matrix, present cells only.
pub fn matrix_vectors(matrix: &PerformanceMatrix) -> Result<Vec<ModelVector>> {
    matrix
        .model_ids()
        .iter()
        .map(|m| ModelVector::from_matrix(matrix, m))
        .collect()
}

/// Full-dimensional vectors with absent cells imputed by the dataset's column
/// mean. Datasets with no present cell at all are dropped (no information).
pub fn imputed_vectors(matrix: &PerformanceMatrix) -> Result<Vec<ModelVector>> {
    let datasets: Vec<(String, f64)> = matrix
        .dataset_ids()
        .iter()
        .filter_map(|d| matrix.dataset_mean(d).map(|mean| (d.clone(), mean)))
        .collect();
    if datasets.is_empty() {
        return Err(Error::InvalidParams {
            detail: "matrix has no present cells to impute from".into(),
        });
    }
    Ok(matrix
        .model_ids()
        .iter()
        .map(|m| ModelVector {
            model_id: m.clone(),
            dims: datasets
                .iter()
                .map(|(d, mean)| (d.clone(), matrix.get(d, m).unwrap_or(*mean)))
                .collect(),
        })
        .collect())
}

/// Similarity of two models: 1 minus the mean of the k' largest absolute
/// accuracy differences over the shared present dimensions, with
/// k' = min(k, |shared|). Symmetric, in [0,1].
pub fn pair_similarity(a: &ModelVector, b: &ModelVector, k: usize) -> Result<f64> {
    if k == 0 {
        return Err(Error::InvalidParams {
            detail: "similarity k must be positive".into(),
        });
    }
    let b_index: HashMap<&str, f64> = b.dims.iter().map(|(d, v)| (d.as_str(), *v)).collect();
    let mut diffs: Vec<f64> = a
        .dims
        .iter()
        .filter_map(|(d, va)| b_index.get(d.as_str()).map(|vb| (va - vb).abs()))
        .collect();
    if diffs.is_empty() {
        return Err(Error::EmptyIntersection {
            a: a.model_id.clone(),
            b: b.model_id.clone(),
        });
    }
    diffs.sort_by(|x, y| y.partial_cmp(x).expect("accuracy diffs are finite"));
    let k_eff = k.min(diffs.len());
    let mean_top = diffs[..k_eff].iter().sum::<f64>() / k_eff as f64;
    Ok((1.0 - mean_top).clamp(0.0, 1.0))
}

/// Symmetric matrix of pairwise distances 1 - sim, zero diagonal.
#[derive(Debug, Clone, PartialEq)]
pub struct DistanceMatrix {
    pub ids: Vec<String>,
    dist: Vec<f64>,
}

impl DistanceMatrix {
    pub fn from_parts(ids: Vec<String>, dist: Vec<f64>) -> Result<Self> {
        let n = ids.len();
        if dist.len() != n * n {
            return Err(Error::DimensionMismatch {
                detail: format!("{} ids but {} distance entries", n, dist.len()),
            });
        }
        Ok(DistanceMatrix { ids, dist })
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.dist[i * self.ids.len() + j]
    }

    pub fn index_of(&self, id: &str) -> Option<usize> {
        self.ids.iter().position(|x| x == id)
    }
}

/// Loads an externally produced distance matrix (CSV, header
/// `model_id,<id_1>,...`, square). Validates symmetry, a zero diagonal, and
/// the [0,1] range.
pub fn load_distance_matrix(path: impl AsRef<std::path::Path>) -> Result<DistanceMatrix> {
    let path = path.as_ref();
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_path(path)
        .map_err(|e| Error::parse(path, e.to_string()))?;
    let headers = reader
        .headers()
        .map_err(|e| Error::parse(path, e.to_string()))?
        .clone();
    if headers.is_empty() || &headers[0] != "model_id" {
        return Err(Error::parse(path, "first header column must be model_id"));
    }
    let ids: Vec<String> = headers.iter().skip(1).map(str::to_string).collect();
    let n = ids.len();
    let mut dist = vec![0.0; n * n];
    for (row, record) in reader.records().enumerate() {
        let record = record.map_err(|e| Error::parse(path, e.to_string()))?;
        if row >= n {
            return Err(Error::parse(path, "more rows than header columns"));
        }
        let row_id = record.get(0).unwrap_or_default();
        if row_id != ids[row] {
            return Err(Error::parse(
                path,
                format!("row {} is {row_id:?}, expected {:?} (matrix must be square)", row + 2, ids[row]),
            ));
        }
        for col in 0..n {
            let field = record.get(col + 1).ok_or_else(|| {
                Error::parse(path, format!("row {}: missing column {}", row + 2, col + 2))
            })?;
            let value: f64 = field.parse().map_err(|_| {
                Error::parse(path, format!("row {}: not a number: {field:?}", row + 2))
            })?;
            if !(0.0..=1.0).contains(&value) {
                return Err(Error::parse(
                    path,
                    format!("row {}: distance {value} outside [0,1]", row + 2),
                ));
            }
            dist[row * n + col] = value;
        }
    }
    for i in 0..n {
        if dist[i * n + i] != 0.0 {
            return Err(Error::parse(path, format!("nonzero diagonal at {:?}", ids[i])));
        }
        for j in (i + 1)..n {
            if (dist[i * n + j] - dist[j * n + i]).abs() > 1e-12 {
                return Err(Error::parse(
                    path,
                    format!("asymmetry between {:?} and {:?}", ids[i], ids[j]),
                ));
            }
        }
    }
    DistanceMatrix::from_parts(ids, dist)
}

pub fn save_distance_matrix(
    matrix: &DistanceMatrix,
    path: impl AsRef<std::path::Path>,
) -> Result<()> {
    let path = path.as_ref();
    let mut writer = csv::Writer::from_path(path).map_err(|e| Error::parse(path, e.to_string()))?;
    let mut header = vec!["model_id".to_string()];
    header.extend(matrix.ids.iter().cloned());
    writer
        .write_record(&header)
        .map_err(|e| Error::parse(path, e.to_string()))?;
    for i in 0..matrix.len() {
        let mut row = vec![matrix.ids[i].clone()];
        for j in 0..matrix.len() {
            row.push(format!("{}", matrix.get(i, j)));
        }
        writer
            .write_record(&row)
            .map_err(|e| Error::parse(path, e.to_string()))?;
    }
    writer.flush().map_err(|e| Error::io(path, e))?;
    Ok(())
}

/// Pairwise distance matrix over the given vectors.
pub fn distance_matrix(vectors: &[ModelVector], k: usize) -> Result<DistanceMatrix> {
    if vectors.len() < 2 {
        return Err(Error::TooFewModels {
            needed: 2,
            got: vectors.len(),
        });
    }
    let n = vectors.len();
    let mut dist = vec![0.0; n * n];
    for i in 0..n {
        for j in (i + 1)..n {
            let d = 1.0 - pair_similarity(&vectors[i], &vectors[j], k)?;
            dist[i * n + j] = d;
            dist[j * n + i] = d;
        }
    }
    DistanceMatrix::from_parts(vectors.iter().map(|v| v.model_id.clone()).collect(), dist)
}
