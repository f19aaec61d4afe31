//! Python bindings for the two-phase model selection engine.
//!
//! The module mirrors the core surface: performance-vector similarity, the
//! transferability proxy score, clustering, and the three selection
//! schedulers over an on-disk bundle.

use std::collections::BTreeMap;
use std::path::PathBuf;

use pyo3::exceptions::{PyIOError, PyValueError};
use pyo3::prelude::*;

use modelsel::cluster::{ClusterMethod, CutRule};
use modelsel::leep::{leep_score_with, normalize_scores as normalize_core, LeepConfig, ProxyScore};
use modelsel::pipeline::{
    cluster_bundle, run_comparison, run_fine_selection, run_two_phase, write_bundle, Bundle,
    PipelineConfig,
};
use modelsel::repo::{DumpRow, PredictionDump};
use modelsel::select::{brute_force, successive_halving, SelectionLog};
use modelsel::similarity::{pair_similarity as pair_similarity_core, ModelVector};
use modelsel::synth::{generate_synthetic_scenario, presets, ScenarioSpec};
use modelsel::trend::TrendCount;

fn to_py_err(e: modelsel::Error) -> PyErr {
    match e {
        modelsel::Error::Io { .. } => PyIOError::new_err(e.to_string()),
        other => PyValueError::new_err(other.to_string()),
    }
}

/// Similarity of two models from their benchmark accuracies: one minus the
/// mean of the k largest absolute differences over shared datasets.
#[pyfunction]
#[pyo3(signature = (a, b, k = 5))]
fn pair_similarity(a: BTreeMap<String, f64>, b: BTreeMap<String, f64>, k: usize) -> PyResult<f64> {
    let to_vector = |id: &str, dims: BTreeMap<String, f64>| ModelVector {
        model_id: id.to_string(),
        dims: dims.into_iter().collect(),
    };
    pair_similarity_core(&to_vector("a", a), &to_vector("b", b), k).map_err(to_py_err)
}

/// Log expected empirical prediction score from per-example source
/// probability rows and target labels. Always non-positive.
#[pyfunction]
#[pyo3(signature = (probs, labels, likelihood_floor = None))]
fn leep_score(
    probs: Vec<Vec<f64>>,
    labels: Vec<usize>,
    likelihood_floor: Option<f64>,
) -> PyResult<f64> {
    if probs.len() != labels.len() {
        return Err(PyValueError::new_err(format!(
            "{} probability rows but {} labels",
            probs.len(),
            labels.len()
        )));
    }
    if probs.is_empty() {
        return Err(PyValueError::new_err("need at least one row"));
    }
    let dump = PredictionDump {
        target_dataset_id: "python".into(),
        source_label_count: probs[0].len(),
        rows: probs
            .into_iter()
            .zip(labels)
            .map(|(p, label)| DumpRow { probs: p, label })
            .collect(),
    };
    dump.validate().map_err(to_py_err)?;
    leep_score_with(&dump, &LeepConfig { likelihood_floor }).map_err(to_py_err)
}

/// Mines convergence trends from (stage validation, final test) pairs: a 1-D
/// clustering of the validations, each trend summarized as (mean validation,
/// mean final test), ordered by descending mean validation. `c` fixes the
/// trend count; omit it for the silhouette sweep.
#[pyfunction]
#[pyo3(signature = (stage_vals, finals, c = None))]
fn mine_convergence_trends(
    stage_vals: Vec<f64>,
    finals: Vec<f64>,
    c: Option<usize>,
) -> PyResult<Vec<(f64, f64)>> {
    if stage_vals.len() != finals.len() {
        return Err(PyValueError::new_err(format!(
            "{} validations but {} finals",
            stage_vals.len(),
            finals.len()
        )));
    }
    let traces: Vec<modelsel::repo::TrainingTrace> = stage_vals
        .iter()
        .zip(&finals)
        .enumerate()
        .map(|(i, (val, test))| modelsel::repo::TrainingTrace {
            model_id: "m".into(),
            dataset_id: format!("d{i:03}"),
            stage_val: vec![*val],
            final_test: *test,
            stage_len_steps: 1,
            epochs_per_stage: 1.0,
        })
        .collect();
    for trace in &traces {
        trace.validate().map_err(to_py_err)?;
    }
    let count = c.map(TrendCount::Fixed).unwrap_or(TrendCount::Auto);
    let ts = modelsel::trend::mine_trends("m", &traces, 1, count).map_err(to_py_err)?;
    Ok(ts.trends.iter().map(|t| (t.val_mean, t.test_mean)).collect())
}

/// Matches an observed validation accuracy against (val_mean, test_mean)
/// trends and returns (matched index, predicted final accuracy).
#[pyfunction]
fn predict_from_trends(trends: Vec<(f64, f64)>, observed: f64) -> PyResult<(usize, f64)> {
    if trends.is_empty() {
        return Err(PyValueError::new_err("need at least one trend"));
    }
    let ts = modelsel::trend::TrendSet {
        model_id: "m".into(),
        stage: 1,
        trends: trends
            .into_iter()
            .map(|(val_mean, test_mean)| modelsel::trend::Trend {
                val_mean,
                test_mean,
                members: Vec::new(),
            })
            .collect(),
    };
    let idx = modelsel::trend::match_trend(&ts, observed);
    Ok((idx, modelsel::trend::predict_final(&ts, observed)))
}

/// Min-max normalization preserving order; all values map to 1.0 when the
/// inputs are constant.
#[pyfunction]
fn normalize_scores(raws: Vec<f64>) -> PyResult<Vec<f64>> {
    let scores: Vec<ProxyScore> = raws
        .iter()
        .enumerate()
        .map(|(i, r)| ProxyScore::raw(format!("s{i}"), *r))
        .collect();
    Ok(normalize_core(&scores)
        .map_err(to_py_err)?
        .into_iter()
        .map(|s| s.normalized.expect("normalized set"))
        .collect())
}

/// Pipeline configuration; unset fields keep their defaults.
#[pyclass(name = "PipelineConfig", skip_from_py_object)]
#[derive(Clone)]
struct PyPipelineConfig {
    inner: PipelineConfig,
}

#[pymethods]
impl PyPipelineConfig {
    #[new]
    #[pyo3(signature = (
        k_sim = None, k_recall = None, total_steps = None, stage_steps = None,
        threshold = None, coarse_cost_per_eval = None, seed = None,
        cluster_method = None, cut_threshold = None, k_clusters = None,
        trend_clusters = None, leep_floor = None
    ))]
    #[allow(clippy::too_many_arguments)]
    fn new(
        k_sim: Option<usize>,
        k_recall: Option<usize>,
        total_steps: Option<u32>,
        stage_steps: Option<u32>,
        threshold: Option<f64>,
        coarse_cost_per_eval: Option<f64>,
        seed: Option<u64>,
        cluster_method: Option<String>,
        cut_threshold: Option<f64>,
        k_clusters: Option<usize>,
        trend_clusters: Option<usize>,
        leep_floor: Option<f64>,
    ) -> PyResult<Self> {
        let mut inner = PipelineConfig::default();
        if let Some(v) = k_sim {
            inner.k_sim = v;
        }
        if let Some(v) = k_recall {
            inner.k_recall = v;
        }
        if let Some(v) = total_steps {
            inner.total_steps = v;
        }
        if let Some(v) = stage_steps {
            inner.stage_steps = v;
        }
        if let Some(v) = threshold {
            inner.threshold = v;
        }
        if let Some(v) = coarse_cost_per_eval {
            inner.coarse_cost_per_eval = v;
        }
        if let Some(v) = seed {
            inner.seed = v;
        }
        if let Some(m) = cluster_method {
            inner.cluster_method = match m.as_str() {
                "hierarchical" => ClusterMethod::Hierarchical,
                "kmeans" => ClusterMethod::Kmeans,
                other => {
                    return Err(PyValueError::new_err(format!(
                        "unknown cluster method {other:?}"
                    )))
                }
            };
        }
        if let Some(tau) = cut_threshold {
            inner.cut = CutRule::Threshold(tau);
        }
        if let Some(k) = k_clusters {
            inner.k_clusters = Some(k);
        }
        if let Some(c) = trend_clusters {
            inner.trend_clusters = TrendCount::Fixed(c);
        }
        if let Some(f) = leep_floor {
            inner.leep_floor = Some(f);
        }
        inner.validate().map_err(to_py_err)?;
        Ok(PyPipelineConfig { inner })
    }

    #[getter]
    fn k_sim(&self) -> usize {
        self.inner.k_sim
    }

    #[getter]
    fn k_recall(&self) -> usize {
        self.inner.k_recall
    }

    #[getter]
    fn threshold(&self) -> f64 {
        self.inner.threshold
    }

    fn __repr__(&self) -> String {
        format!(
            "PipelineConfig(k_sim={}, k_recall={}, total_steps={}, stage_steps={}, threshold={})",
            self.inner.k_sim,
            self.inner.k_recall,
            self.inner.total_steps,
            self.inner.stage_steps,
            self.inner.threshold
        )
    }
}

/// An on-disk input bundle: repository, performance matrix, traces, dumps.
#[pyclass(name = "Bundle")]
struct PyBundle {
    inner: Bundle,
}

#[pymethods]
impl PyBundle {
    #[new]
    fn new(path: PathBuf) -> PyResult<Self> {
        Ok(PyBundle {
            inner: Bundle::load(path).map_err(to_py_err)?,
        })
    }

    #[getter]
    fn target_id(&self) -> String {
        self.inner.target_id.clone()
    }

    fn model_ids(&self) -> Vec<String> {
        self.inner.all_model_ids()
    }

    fn dataset_ids(&self) -> Vec<String> {
        self.inner.repository.dataset_ids()
    }

    fn model_avg_acc(&self, model_id: &str) -> PyResult<f64> {
        self.inner.matrix.model_avg_acc(model_id).map_err(to_py_err)
    }

    fn __repr__(&self) -> String {
        format!(
            "Bundle(models={}, datasets={}, target={:?})",
            self.inner.repository.len(),
            self.inner.repository.datasets.len(),
            self.inner.target_id
        )
    }
}

/// Clustering of the repository plus representatives and silhouette.
#[pyclass(name = "ClusterResult")]
struct PyClusterResult {
    #[pyo3(get)]
    clusters: Vec<Vec<String>>,
    #[pyo3(get)]
    representatives: Vec<String>,
    #[pyo3(get)]
    silhouette: f64,
}

#[pyfunction]
fn cluster_models(bundle: &PyBundle, config: &PyPipelineConfig) -> PyResult<PyClusterResult> {
    let (clustering, representatives, sil) =
        cluster_bundle(&bundle.inner, &config.inner).map_err(to_py_err)?;
    Ok(PyClusterResult {
        clusters: clustering.clusters,
        representatives,
        silhouette: sil,
    })
}

/// Outcome of one selection run.
#[pyclass(name = "SelectionResult", skip_from_py_object)]
#[derive(Clone)]
struct PySelectionResult {
    #[pyo3(get)]
    method: String,
    #[pyo3(get)]
    epochs: f64,
    #[pyo3(get)]
    winner: String,
    #[pyo3(get)]
    winner_test: f64,
    #[pyo3(get)]
    survivors_per_stage: Vec<usize>,
}

impl PySelectionResult {
    fn from_log(log: &SelectionLog) -> Self {
        PySelectionResult {
            method: log.method.to_string(),
            epochs: log.epoch_ledger,
            winner: log.winner.clone(),
            winner_test: log.winner_final_test,
            survivors_per_stage: log.stages.iter().map(|s| s.survivors_before.len()).collect(),
        }
    }
}

/// Runs one scheduler over the bundle: "bf", "sh", or "fs".
#[pyfunction]
fn run_selection(
    bundle: &PyBundle,
    config: &PyPipelineConfig,
    method: &str,
) -> PyResult<PySelectionResult> {
    let log = match method {
        "fs" => run_fine_selection(&bundle.inner, &config.inner).map_err(to_py_err)?,
        "bf" | "sh" => {
            let models = bundle.inner.all_model_ids();
            let sources = bundle.inner.sources_for(&models).map_err(to_py_err)?;
            let run = if method == "bf" {
                brute_force
            } else {
                successive_halving
            };
            run(
                &sources,
                &bundle.inner.target_id,
                config.inner.total_steps,
                config.inner.stage_steps,
            )
            .map_err(to_py_err)?
        }
        other => {
            return Err(PyValueError::new_err(format!(
                "unknown method {other:?}; expected bf, sh, or fs"
            )))
        }
    };
    Ok(PySelectionResult::from_log(&log))
}

/// Result of the full two-phase pipeline.
#[pyclass(name = "TwoPhaseResult")]
struct PyTwoPhaseResult {
    #[pyo3(get)]
    recalled: Vec<String>,
    #[pyo3(get)]
    proxy_evals: usize,
    #[pyo3(get)]
    coarse_epochs: f64,
    #[pyo3(get)]
    fine_epochs: f64,
    #[pyo3(get)]
    total_epochs: f64,
    #[pyo3(get)]
    winner: String,
    #[pyo3(get)]
    winner_test: f64,
}

#[pyfunction]
fn two_phase(bundle: &PyBundle, config: &PyPipelineConfig) -> PyResult<PyTwoPhaseResult> {
    let outcome = run_two_phase(&bundle.inner, &config.inner).map_err(to_py_err)?;
    Ok(PyTwoPhaseResult {
        recalled: outcome.coarse.recalled,
        proxy_evals: outcome.coarse.leep_evaluations,
        coarse_epochs: outcome.coarse_epochs,
        fine_epochs: outcome.selection.epoch_ledger,
        total_epochs: outcome.total_epochs,
        winner: outcome.selection.winner,
        winner_test: outcome.selection.winner_final_test,
    })
}

/// End-to-end comparison of brute force, successive halving, and two-phase.
#[pyclass(name = "ComparisonResult")]
struct PyComparisonResult {
    #[pyo3(get)]
    bf: PySelectionResult,
    #[pyo3(get)]
    sh: PySelectionResult,
    #[pyo3(get)]
    two_phase_epochs: f64,
    #[pyo3(get)]
    two_phase_winner: String,
    #[pyo3(get)]
    two_phase_winner_test: f64,
    #[pyo3(get)]
    speedup_vs_bf: f64,
    #[pyo3(get)]
    speedup_vs_sh: f64,
}

#[pyfunction]
fn compare(bundle: &PyBundle, config: &PyPipelineConfig) -> PyResult<PyComparisonResult> {
    let outcome = run_comparison(&bundle.inner, &config.inner).map_err(to_py_err)?;
    Ok(PyComparisonResult {
        bf: PySelectionResult::from_log(&outcome.bf_log),
        sh: PySelectionResult::from_log(&outcome.sh_log),
        two_phase_epochs: outcome.report.two_phase.runtime_epochs,
        two_phase_winner: outcome.report.two_phase.winner.clone(),
        two_phase_winner_test: outcome.report.two_phase.winner_test,
        speedup_vs_bf: outcome.report.speedup_vs_bf,
        speedup_vs_sh: outcome.report.speedup_vs_sh,
    })
}

/// Writes a synthetic bundle: a named preset, or a scenario spec JSON string
/// with a seed.
#[pyfunction]
#[pyo3(signature = (out, scenario = None, spec_json = None, seed = 0))]
fn generate_bundle(
    out: PathBuf,
    scenario: Option<String>,
    spec_json: Option<String>,
    seed: u64,
) -> PyResult<()> {
    let bundle = match (scenario, spec_json) {
        (Some(name), None) => presets::by_name(&name).map_err(to_py_err)?,
        (None, Some(json)) => {
            let spec: ScenarioSpec =
                serde_json::from_str(&json).map_err(|e| PyValueError::new_err(e.to_string()))?;
            generate_synthetic_scenario(&spec, seed).map_err(to_py_err)?
        }
        _ => {
            return Err(PyValueError::new_err(
                "pass exactly one of scenario or spec_json",
            ))
        }
    };
    write_bundle(&bundle, out).map_err(to_py_err)
}

#[pymodule]
fn modelsel_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_function(wrap_pyfunction!(pair_similarity, m)?)?;
    m.add_function(wrap_pyfunction!(leep_score, m)?)?;
    m.add_function(wrap_pyfunction!(normalize_scores, m)?)?;
    m.add_function(wrap_pyfunction!(mine_convergence_trends, m)?)?;
    m.add_function(wrap_pyfunction!(predict_from_trends, m)?)?;
    m.add_function(wrap_pyfunction!(cluster_models, m)?)?;
    m.add_function(wrap_pyfunction!(run_selection, m)?)?;
    m.add_function(wrap_pyfunction!(two_phase, m)?)?;
    m.add_function(wrap_pyfunction!(compare, m)?)?;
    m.add_function(wrap_pyfunction!(generate_bundle, m)?)?;
    m.add_class::<PyPipelineConfig>()?;
    m.add_class::<PyBundle>()?;
    m.add_class::<PyClusterResult>()?;
    m.add_class::<PySelectionResult>()?;
    m.add_class::<PyTwoPhaseResult>()?;
    m.add_class::<PyComparisonResult>()?;
    Ok(())
}
