//! Domain types and file ingestion: model repository, performance matrix,
//! training traces, and prediction dumps.

use std::collections::{BTreeMap, HashMap};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Tolerance for the probability-row sum check. Rows off by more than this
/// are rejected, never renormalized.
pub const DUMP_ROW_SUM_TOL: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelRecord {
    pub id: String,
    pub display_name: String,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub tags: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkDatasetRecord {
    pub id: String,
    pub task_kind: String,
}

/// The model repository plus the benchmark dataset list it is scored on.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Repository {
    pub models: Vec<ModelRecord>,
    pub datasets: Vec<BenchmarkDatasetRecord>,
}

impl Repository {
    pub fn new(models: Vec<ModelRecord>, datasets: Vec<BenchmarkDatasetRecord>) -> Result<Self> {
        let repo = Repository { models, datasets };
        repo.validate()?;
        Ok(repo)
    }

    fn validate(&self) -> Result<()> {
        let mut seen = HashMap::new();
        for m in &self.models {
            if m.id.is_empty() {
                return Err(Error::InvalidParams {
                    detail: "empty model id".into(),
                });
            }
            if seen.insert(m.id.clone(), ()).is_some() {
                return Err(Error::DuplicateId { id: m.id.clone() });
            }
        }
        let mut seen = HashMap::new();
        for d in &self.datasets {
            if d.id.is_empty() {
                return Err(Error::InvalidParams {
                    detail: "empty dataset id".into(),
                });
            }
            if seen.insert(d.id.clone(), ()).is_some() {
                return Err(Error::DuplicateId { id: d.id.clone() });
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.models.len()
    }

    pub fn is_empty(&self) -> bool {
        self.models.is_empty()
    }

    pub fn has_model(&self, id: &str) -> bool {
        self.models.iter().any(|m| m.id == id)
    }

    pub fn has_dataset(&self, id: &str) -> bool {
        self.datasets.iter().any(|d| d.id == id)
    }

    pub fn model_ids(&self) -> Vec<String> {
        self.models.iter().map(|m| m.id.clone()).collect()
    }

    pub fn dataset_ids(&self) -> Vec<String> {
        self.datasets.iter().map(|d| d.id.clone()).collect()
    }
}

/// Loads and validates a repository manifest (JSON).
pub fn load_repository(path: impl AsRef<Path>) -> Result<Repository> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let repo: Repository =
        serde_json::from_str(&text).map_err(|e| Error::parse(path, e.to_string()))?;
    repo.validate()?;
    Ok(repo)
}

pub fn save_repository(repo: &Repository, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let text = serde_json::to_string_pretty(repo).expect("repository serializes");
    std::fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
}

/// Test accuracies of models fine-tuned on benchmark datasets. Cells may be
/// absent: partial training of the matrix is allowed.
#[derive(Debug, Clone, PartialEq)]
pub struct PerformanceMatrix {
    models: Vec<String>,
    datasets: Vec<String>,
    model_index: HashMap<String, usize>,
    dataset_index: HashMap<String, usize>,
    /// Dataset-major: cells[d * n_models + m].
    cells: Vec<Option<f64>>,
}

impl PerformanceMatrix {
    pub fn new(models: Vec<String>, datasets: Vec<String>) -> Self {
        let model_index = models
            .iter()
            .enumerate()
            .map(|(i, id)| (id.clone(), i))
            .collect();
        let dataset_index = datasets
            .iter()
            .enumerate()
            .map(|(i, id)| (id.clone(), i))
            .collect();
        let cells = vec![None; models.len() * datasets.len()];
        PerformanceMatrix {
            models,
            datasets,
            model_index,
            dataset_index,
            cells,
        }
    }

    pub fn model_ids(&self) -> &[String] {
        &self.models
    }

    pub fn dataset_ids(&self) -> &[String] {
        &self.datasets
    }

    pub fn set(&mut self, dataset_id: &str, model_id: &str, acc: f64) -> Result<()> {
        if !(0.0..=1.0).contains(&acc) {
            return Err(Error::AccuracyOutOfRange {
                value: acc,
                context: format!("cell ({dataset_id}, {model_id})"),
            });
        }
        let d = self.dataset_idx(dataset_id)?;
        let m = self.model_idx(model_id)?;
        self.cells[d * self.models.len() + m] = Some(acc);
        Ok(())
    }

    pub fn get(&self, dataset_id: &str, model_id: &str) -> Option<f64> {
        let d = *self.dataset_index.get(dataset_id)?;
        let m = *self.model_index.get(model_id)?;
        self.cells[d * self.models.len() + m]
    }

    fn model_idx(&self, id: &str) -> Result<usize> {
        self.model_index.get(id).copied().ok_or(Error::UnknownId {
            id: id.into(),
            context: "performance matrix".into(),
        })
    }

    fn dataset_idx(&self, id: &str) -> Result<usize> {
        self.dataset_index
            .get(id)
            .copied()
            .ok_or(Error::UnknownId {
                id: id.into(),
                context: "performance matrix".into(),
            })
    }

    /// Present cells of one model as (dataset_id, accuracy) pairs, in dataset
    /// order.
    pub fn present_cells(&self, model_id: &str) -> Result<Vec<(String, f64)>> {
        let m = self.model_idx(model_id)?;
        Ok(self
            .datasets
            .iter()
            .enumerate()
            .filter_map(|(d, ds)| {
                self.cells[d * self.models.len() + m].map(|acc| (ds.clone(), acc))
            })
            .collect())
    }

    pub fn present_count(&self, model_id: &str) -> usize {
        match self.model_idx(model_id) {
            Ok(m) => self
                .datasets
                .iter()
                .enumerate()
                .filter(|(d, _)| self.cells[d * self.models.len() + m].is_some())
                .count(),
            Err(_) => 0,
        }
    }

    /// Arithmetic mean over the model's present cells only.
    pub fn model_avg_acc(&self, model_id: &str) -> Result<f64> {
        let cells = self.present_cells(model_id)?;
        if cells.is_empty() {
            return Err(Error::NoData {
                model_id: model_id.into(),
            });
        }
        Ok(cells.iter().map(|(_, a)| a).sum::<f64>() / cells.len() as f64)
    }

    /// Mean of a dataset's present cells, used for k-means imputation.
    /// `None` when the whole column is absent.
    pub fn dataset_mean(&self, dataset_id: &str) -> Option<f64> {
        let d = *self.dataset_index.get(dataset_id)?;
        let present: Vec<f64> = (0..self.models.len())
            .filter_map(|m| self.cells[d * self.models.len() + m])
            .collect();
        if present.is_empty() {
            None
        } else {
            Some(present.iter().sum::<f64>() / present.len() as f64)
        }
    }
}

/// Loads a performance matrix CSV (`model_id,<dataset_1>,...`; empty field =
/// absent cell) and validates every id against the repository.
pub fn load_performance_matrix(
    path: impl AsRef<Path>,
    repo: &Repository,
) -> Result<PerformanceMatrix> {
    let path = path.as_ref();
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(false)
        .from_path(path)
        .map_err(|e| Error::parse(path, e.to_string()))?;

    let headers = reader
        .headers()
        .map_err(|e| Error::parse(path, e.to_string()))?
        .clone();
    if headers.is_empty() || &headers[0] != "model_id" {
        return Err(Error::parse(path, "first header column must be model_id"));
    }
    let datasets: Vec<String> = headers.iter().skip(1).map(str::to_string).collect();
    for d in &datasets {
        if !repo.has_dataset(d) {
            return Err(Error::UnknownId {
                id: d.clone(),
                context: format!("matrix header in {}", path.display()),
            });
        }
    }

    let mut rows: Vec<(String, Vec<Option<f64>>)> = Vec::new();
    for (line, record) in reader.records().enumerate() {
        let record = record.map_err(|e| Error::parse(path, e.to_string()))?;
        let model_id = record
            .get(0)
            .ok_or_else(|| Error::parse(path, format!("row {}: missing model_id", line + 2)))?
            .to_string();
        if !repo.has_model(&model_id) {
            return Err(Error::UnknownId {
                id: model_id,
                context: format!("matrix row {} in {}", line + 2, path.display()),
            });
        }
        let mut cells = Vec::with_capacity(datasets.len());
        for (col, field) in record.iter().skip(1).enumerate() {
            if field.is_empty() {
                cells.push(None);
            } else {
                let acc: f64 = field.parse().map_err(|_| {
                    Error::parse(
                        path,
                        format!("row {}, column {}: not a number: {field:?}", line + 2, col + 2),
                    )
                })?;
                if !(0.0..=1.0).contains(&acc) {
                    return Err(Error::AccuracyOutOfRange {
                        value: acc,
                        context: format!("{} row {}", path.display(), line + 2),
                    });
                }
                cells.push(Some(acc));
            }
        }
        rows.push((model_id, cells));
    }

    let mut matrix =
        PerformanceMatrix::new(rows.iter().map(|(m, _)| m.clone()).collect(), datasets.clone());
    for (model_id, cells) in &rows {
        for (d, cell) in cells.iter().enumerate() {
            if let Some(acc) = cell {
                matrix.set(&datasets[d], model_id, *acc)?;
            }
        }
    }
    Ok(matrix)
}

pub fn save_performance_matrix(matrix: &PerformanceMatrix, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut writer = csv::Writer::from_path(path).map_err(|e| Error::parse(path, e.to_string()))?;
    let mut header = vec!["model_id".to_string()];
    header.extend(matrix.dataset_ids().iter().cloned());
    writer
        .write_record(&header)
        .map_err(|e| Error::parse(path, e.to_string()))?;
    for m in matrix.model_ids() {
        let mut row = vec![m.clone()];
        for d in matrix.dataset_ids() {
            row.push(match matrix.get(d, m) {
                Some(acc) => format!("{acc}"),
                None => String::new(),
            });
        }
        writer
            .write_record(&row)
            .map_err(|e| Error::parse(path, e.to_string()))?;
    }
    writer.flush().map_err(|e| Error::io(path, e))?;
    Ok(())
}

fn default_epochs_per_stage() -> f64 {
    1.0
}

/// Staged validation accuracies of one (model, dataset) fine-tuning run plus
/// the final test accuracy. `stage_len_steps` is the validation interval in
/// abstract training-step units.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingTrace {
    pub model_id: String,
    pub dataset_id: String,
    pub stage_val: Vec<f64>,
    pub final_test: f64,
    pub stage_len_steps: u32,
    #[serde(default = "default_epochs_per_stage")]
    pub epochs_per_stage: f64,
}

impl TrainingTrace {
    pub fn validate(&self) -> Result<()> {
        if self.stage_val.is_empty() {
            return Err(Error::InvalidParams {
                detail: format!(
                    "trace ({}, {}): stage_val must be non-empty",
                    self.model_id, self.dataset_id
                ),
            });
        }
        for (i, v) in self.stage_val.iter().enumerate() {
            if !(0.0..=1.0).contains(v) {
                return Err(Error::AccuracyOutOfRange {
                    value: *v,
                    context: format!(
                        "trace ({}, {}) stage {}",
                        self.model_id,
                        self.dataset_id,
                        i + 1
                    ),
                });
            }
        }
        if !(0.0..=1.0).contains(&self.final_test) {
            return Err(Error::AccuracyOutOfRange {
                value: self.final_test,
                context: format!("trace ({}, {}) final_test", self.model_id, self.dataset_id),
            });
        }
        if self.stage_len_steps == 0 {
            return Err(Error::InvalidParams {
                detail: "stage_len_steps must be positive".into(),
            });
        }
        if self.epochs_per_stage <= 0.0 {
            return Err(Error::InvalidParams {
                detail: "epochs_per_stage must be positive".into(),
            });
        }
        Ok(())
    }

    pub fn stages(&self) -> usize {
        self.stage_val.len()
    }
}

/// Loads a JSON array of training traces.
pub fn load_traces(path: impl AsRef<Path>) -> Result<Vec<TrainingTrace>> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let traces: Vec<TrainingTrace> =
        serde_json::from_str(&text).map_err(|e| Error::parse(path, e.to_string()))?;
    for t in &traces {
        t.validate()?;
    }
    Ok(traces)
}

pub fn save_traces(traces: &[TrainingTrace], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let text = serde_json::to_string_pretty(traces).expect("traces serialize");
    std::fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DumpRow {
    pub probs: Vec<f64>,
    pub label: usize,
}

/// Per-example source-model probability rows and target labels; input to the
/// transferability score.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionDump {
    pub target_dataset_id: String,
    pub source_label_count: usize,
    pub rows: Vec<DumpRow>,
}

impl PredictionDump {
    /// Number of target labels: labels must cover 0..Y-1 with no gaps.
    pub fn target_label_count(&self) -> usize {
        self.rows.iter().map(|r| r.label + 1).max().unwrap_or(0)
    }

    pub fn validate(&self) -> Result<()> {
        if self.rows.is_empty() {
            return Err(Error::InvalidParams {
                detail: format!("dump for {}: no rows", self.target_dataset_id),
            });
        }
        for (i, row) in self.rows.iter().enumerate() {
            if row.probs.len() != self.source_label_count {
                return Err(Error::InvalidDumpRow {
                    row: i + 1,
                    detail: format!(
                        "expected {} probabilities, got {}",
                        self.source_label_count,
                        row.probs.len()
                    ),
                });
            }
            if row.probs.iter().any(|p| *p < 0.0) {
                return Err(Error::InvalidDumpRow {
                    row: i + 1,
                    detail: "negative probability".into(),
                });
            }
            let sum: f64 = row.probs.iter().sum();
            if (sum - 1.0).abs() > DUMP_ROW_SUM_TOL {
                return Err(Error::InvalidDumpRow {
                    row: i + 1,
                    detail: format!("probabilities sum to {sum}, not 1 within {DUMP_ROW_SUM_TOL}"),
                });
            }
        }
        let y = self.target_label_count();
        let mut seen = vec![false; y];
        for row in &self.rows {
            seen[row.label] = true;
        }
        if let Some(missing) = seen.iter().position(|s| !s) {
            return Err(Error::InvalidParams {
                detail: format!(
                    "dump for {}: label {missing} never observed (labels must cover 0..{})",
                    self.target_dataset_id,
                    y - 1
                ),
            });
        }
        Ok(())
    }
}

/// Loads a prediction dump CSV with header `p_0,...,p_{Z-1},label`.
pub fn load_prediction_dump(
    path: impl AsRef<Path>,
    target_dataset_id: &str,
) -> Result<PredictionDump> {
    let path = path.as_ref();
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_path(path)
        .map_err(|e| Error::parse(path, e.to_string()))?;
    let headers = reader
        .headers()
        .map_err(|e| Error::parse(path, e.to_string()))?
        .clone();
    let n_cols = headers.len();
    if n_cols < 2 || &headers[n_cols - 1] != "label" {
        return Err(Error::parse(path, "header must be p_0,...,p_{Z-1},label"));
    }
    for (i, h) in headers.iter().take(n_cols - 1).enumerate() {
        if h != format!("p_{i}") {
            return Err(Error::parse(
                path,
                format!("header column {} must be p_{i}, got {h:?}", i + 1),
            ));
        }
    }
    let z = n_cols - 1;
    let mut rows = Vec::new();
    for (line, record) in reader.records().enumerate() {
        let record = record.map_err(|e| Error::parse(path, e.to_string()))?;
        let mut probs = Vec::with_capacity(z);
        for field in record.iter().take(z) {
            probs.push(field.parse::<f64>().map_err(|_| {
                Error::parse(path, format!("row {}: not a number: {field:?}", line + 2))
            })?);
        }
        let label: usize = record
            .get(z)
            .ok_or_else(|| Error::parse(path, format!("row {}: missing label", line + 2)))?
            .parse()
            .map_err(|_| Error::parse(path, format!("row {}: bad label", line + 2)))?;
        rows.push(DumpRow { probs, label });
    }
    let dump = PredictionDump {
        target_dataset_id: target_dataset_id.to_string(),
        source_label_count: z,
        rows,
    };
    dump.validate()?;
    Ok(dump)
}

pub fn save_prediction_dump(dump: &PredictionDump, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut writer = csv::Writer::from_path(path).map_err(|e| Error::parse(path, e.to_string()))?;
    let mut header: Vec<String> = (0..dump.source_label_count)
        .map(|i| format!("p_{i}"))
        .collect();
    header.push("label".into());
    writer
        .write_record(&header)
        .map_err(|e| Error::parse(path, e.to_string()))?;
    for row in &dump.rows {
        let mut record: Vec<String> = row.probs.iter().map(|p| format!("{p}")).collect();
        record.push(row.label.to_string());
        writer
            .write_record(&record)
            .map_err(|e| Error::parse(path, e.to_string()))?;
    }
    writer.flush().map_err(|e| Error::io(path, e))?;
    Ok(())
}

/// A target task bundle: replay traces per candidate model plus prediction
/// dumps per representative model.
#[derive(Debug, Clone, PartialEq)]
pub struct TargetTask {
    pub id: String,
    pub traces: BTreeMap<String, TrainingTrace>,
    pub dumps: BTreeMap<String, PredictionDump>,
}

impl TargetTask {
    pub fn validate(&self, repo: &Repository) -> Result<()> {
        for model_id in self.traces.keys().chain(self.dumps.keys()) {
            if !repo.has_model(model_id) {
                return Err(Error::UnknownId {
                    id: model_id.clone(),
                    context: format!("target task {}", self.id),
                });
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn write_temp(content: &str, suffix: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::Builder::new().suffix(suffix).tempfile().unwrap();
        f.write_all(content.as_bytes()).unwrap();
        f
    }

    fn manifest_json(ids: &[&str]) -> String {
        let models: Vec<String> = ids
            .iter()
            .map(|id| format!(r#"{{"id":"{id}","display_name":"{id}"}}"#))
            .collect();
        format!(
            r#"{{"models":[{}],"datasets":[{{"id":"d1","task_kind":"clf"}},{{"id":"d2","task_kind":"clf"}}]}}"#,
            models.join(",")
        )
    }

    #[test]
    fn manifest_round_trips() {
        let f = write_temp(&manifest_json(&["a", "b", "c"]), ".json");
        let repo = load_repository(f.path()).unwrap();
        assert_eq!(repo.len(), 3);

        let out = tempfile::Builder::new().suffix(".json").tempfile().unwrap();
        save_repository(&repo, out.path()).unwrap();
        let again = load_repository(out.path()).unwrap();
        assert_eq!(repo, again);
    }

    #[test]
    fn duplicate_model_id_rejected() {
        let f = write_temp(&manifest_json(&["bert-a", "bert-a"]), ".json");
        match load_repository(f.path()) {
            Err(Error::DuplicateId { id }) => assert_eq!(id, "bert-a"),
            other => panic!("expected duplicate-id error, got {other:?}"),
        }
    }

    #[test]
    fn forty_model_manifest_loads() {
        let ids: Vec<String> = (0..40).map(|i| format!("nlp-model-{i:02}")).collect();
        let refs: Vec<&str> = ids.iter().map(String::as_str).collect();
        let f = write_temp(&manifest_json(&refs), ".json");
        assert_eq!(load_repository(f.path()).unwrap().len(), 40);
    }

    fn small_repo() -> Repository {
        let f = write_temp(&manifest_json(&["m1", "m2"]), ".json");
        load_repository(f.path()).unwrap()
    }

    #[test]
    fn full_matrix_loads() {
        let repo = small_repo();
        let f = write_temp("model_id,d1,d2\nm1,0.5,0.5\nm2,0.5,0.5\n", ".csv");
        let matrix = load_performance_matrix(f.path(), &repo).unwrap();
        assert_eq!(matrix.present_count("m1") + matrix.present_count("m2"), 4);
        assert_eq!(matrix.get("d1", "m1"), Some(0.5));
    }

    #[test]
    fn absent_cell_is_legal_and_queryable() {
        let repo = small_repo();
        let f = write_temp("model_id,d1,d2\nm1,0.9,\nm2,0.5,0.5\n", ".csv");
        let matrix = load_performance_matrix(f.path(), &repo).unwrap();
        assert_eq!(matrix.get("d2", "m1"), None);
        assert_eq!(matrix.get("d1", "m1"), Some(0.9));
    }

    #[test]
    fn out_of_range_cell_rejected() {
        let repo = small_repo();
        let f = write_temp("model_id,d1,d2\nm1,1.2,0.5\nm2,0.5,0.5\n", ".csv");
        assert!(matches!(
            load_performance_matrix(f.path(), &repo),
            Err(Error::AccuracyOutOfRange { .. })
        ));
    }

    #[test]
    fn unknown_model_rejected() {
        let repo = small_repo();
        let f = write_temp("model_id,d1,d2\nmystery,0.5,0.5\n", ".csv");
        assert!(matches!(
            load_performance_matrix(f.path(), &repo),
            Err(Error::UnknownId { .. })
        ));
    }

    #[test]
    fn matrix_round_trips() {
        let repo = small_repo();
        let f = write_temp("model_id,d1,d2\nm1,0.9,\nm2,0.5,0.25\n", ".csv");
        let matrix = load_performance_matrix(f.path(), &repo).unwrap();
        let out = tempfile::Builder::new().suffix(".csv").tempfile().unwrap();
        save_performance_matrix(&matrix, out.path()).unwrap();
        let again = load_performance_matrix(out.path(), &repo).unwrap();
        assert_eq!(matrix, again);
    }

    #[test]
    fn avg_acc_mean_of_present_cells() {
        let repo = small_repo();
        let f = write_temp("model_id,d1,d2\nm1,0.8,0.6\nm2,,\n", ".csv");
        let matrix = load_performance_matrix(f.path(), &repo).unwrap();
        assert!((matrix.model_avg_acc("m1").unwrap() - 0.7).abs() < 1e-12);
        assert!(matches!(
            matrix.model_avg_acc("m2"),
            Err(Error::NoData { .. })
        ));
    }

    #[test]
    fn avg_acc_skips_absent() {
        // Oracle: direct summation over the present cells {0.9, 0.7}.
        let mut matrix = PerformanceMatrix::new(
            vec!["m".into()],
            vec!["d1".into(), "d2".into(), "d3".into()],
        );
        matrix.set("d1", "m", 0.9).unwrap();
        matrix.set("d3", "m", 0.7).unwrap();
        let expected = (0.9 + 0.7) / 2.0;
        assert!((matrix.model_avg_acc("m").unwrap() - expected).abs() < 1e-12);
        assert!((matrix.model_avg_acc("m").unwrap() - 0.8).abs() < 1e-12);
    }

    #[test]
    fn avg_acc_bounded_by_present_cells() {
        let mut matrix = PerformanceMatrix::new(
            vec!["m".into()],
            vec!["d1".into(), "d2".into(), "d3".into()],
        );
        matrix.set("d1", "m", 0.45).unwrap();
        matrix.set("d2", "m", 0.31).unwrap();
        matrix.set("d3", "m", 0.88).unwrap();
        let avg = matrix.model_avg_acc("m").unwrap();
        assert!(avg >= 0.31 && avg <= 0.88);
    }

    #[test]
    fn traces_load_and_round_trip() {
        let json = r#"[{"model_id":"m1","dataset_id":"d1","stage_val":[0.5,0.6],"final_test":0.7,"stage_len_steps":100}]"#;
        let f = write_temp(json, ".json");
        let traces = load_traces(f.path()).unwrap();
        assert_eq!(traces[0].epochs_per_stage, 1.0);
        let out = tempfile::Builder::new().suffix(".json").tempfile().unwrap();
        save_traces(&traces, out.path()).unwrap();
        assert_eq!(load_traces(out.path()).unwrap(), traces);
    }

    #[test]
    fn dump_loads_and_round_trips() {
        let f = write_temp("p_0,p_1,label\n0.9,0.1,0\n0.2,0.8,1\n", ".csv");
        let dump = load_prediction_dump(f.path(), "target").unwrap();
        assert_eq!(dump.source_label_count, 2);
        assert_eq!(dump.target_label_count(), 2);
        let out = tempfile::Builder::new().suffix(".csv").tempfile().unwrap();
        save_prediction_dump(&dump, out.path()).unwrap();
        assert_eq!(load_prediction_dump(out.path(), "target").unwrap(), dump);
    }

    #[test]
    fn dump_row_sum_enforced_not_renormalized() {
        // 1e-7 off: accepted verbatim.
        let f = write_temp("p_0,p_1,label\n0.9,0.0999999,0\n0.2,0.8,1\n", ".csv");
        let dump = load_prediction_dump(f.path(), "t").unwrap();
        assert!((dump.rows[0].probs[1] - 0.0999999).abs() < 1e-15);

        // 1e-3 off: rejected.
        let f = write_temp("p_0,p_1,label\n0.9,0.101,0\n0.2,0.8,1\n", ".csv");
        assert!(matches!(
            load_prediction_dump(f.path(), "t"),
            Err(Error::InvalidDumpRow { row: 1, .. })
        ));
    }

    #[test]
    fn dump_label_gap_rejected() {
        let f = write_temp("p_0,p_1,label\n0.9,0.1,0\n0.2,0.8,2\n", ".csv");
        assert!(load_prediction_dump(f.path(), "t").is_err());
    }
}
