//! End-to-end orchestration: pipeline configuration, on-disk bundle layout,
//! the two-phase run (cluster, proxy, recall, fine-select), epoch accounting
//! with the coarse-recall charge, and baseline comparison reports.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::cluster::{
    hierarchical_cluster, kmeans_cluster, select_representative, silhouette, ClusterMethod,
    ClusteringReport, CutRule, ModelClustering,
};
use crate::error::{Error, Result};
use crate::leep::{leep_score_with, normalize_scores, LeepConfig, ProxyScore};
use crate::recall::{recall_scores, RecallResult};
use crate::repo::{
    load_performance_matrix, load_prediction_dump, load_repository, load_traces,
    save_performance_matrix, save_prediction_dump, save_repository, save_traces,
    PerformanceMatrix, PredictionDump, Repository, TrainingTrace,
};
use crate::select::{
    brute_force, fine_selection, successive_halving, SelectionLog, SourceMap, TrainSource,
    TrendMap,
};
use crate::similarity::{distance_matrix, imputed_vectors, matrix_vectors};
use crate::synth::SyntheticBundle;
use crate::trend::{mine_trends, TrendCount};

fn default_k_sim() -> usize {
    5
}
fn default_k_recall() -> usize {
    10
}
fn default_total_steps() -> u32 {
    5
}
fn default_stage_steps() -> u32 {
    1
}
fn default_coarse_cost() -> f64 {
    0.5
}
fn default_cluster_method() -> ClusterMethod {
    ClusterMethod::Hierarchical
}
fn default_cut() -> CutRule {
    CutRule::Auto
}
fn default_trend_clusters() -> TrendCount {
    TrendCount::Auto
}

/// Knobs of the two-phase pipeline. Mirrors the JSON config file; CLI flags
/// override file values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PipelineConfig {
    /// Top-k parameter of the performance-vector similarity.
    pub k_sim: usize,
    pub cluster_method: ClusterMethod,
    /// Dendrogram cut rule for hierarchical clustering.
    pub cut: CutRule,
    /// Cluster count for k-means (defaults to the hierarchical auto count
    /// when absent).
    pub k_clusters: Option<usize>,
    /// Number of models the coarse phase recalls.
    pub k_recall: usize,
    /// Total training steps per model (T).
    pub total_steps: u32,
    /// Validation interval in steps (s).
    pub stage_steps: u32,
    /// Trend-filter threshold (theta), relative to the weaker prediction.
    pub threshold: f64,
    pub trend_clusters: TrendCount,
    /// Epochs charged per proxy evaluation in the coarse phase.
    pub coarse_cost_per_eval: f64,
    pub seed: u64,
    /// Optional likelihood floor for the proxy score.
    pub leep_floor: Option<f64>,
    /// Externally produced distance matrix (CSV) for the external cluster
    /// method, e.g. text-embedding distances computed elsewhere.
    pub external_distances: Option<PathBuf>,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            k_sim: default_k_sim(),
            cluster_method: default_cluster_method(),
            cut: default_cut(),
            k_clusters: None,
            k_recall: default_k_recall(),
            total_steps: default_total_steps(),
            stage_steps: default_stage_steps(),
            threshold: 0.0,
            trend_clusters: default_trend_clusters(),
            coarse_cost_per_eval: default_coarse_cost(),
            seed: 0,
            leep_floor: None,
            external_distances: None,
        }
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<()> {
        if self.k_sim == 0 || self.k_recall == 0 {
            return Err(Error::InvalidConfig {
                detail: "k_sim and k_recall must be positive".into(),
            });
        }
        if self.total_steps == 0 || self.stage_steps == 0 {
            return Err(Error::InvalidConfig {
                detail: "total_steps and stage_steps must be positive".into(),
            });
        }
        if self.threshold < 0.0 {
            return Err(Error::InvalidConfig {
                detail: format!("threshold {} must be non-negative", self.threshold),
            });
        }
        if self.coarse_cost_per_eval < 0.0 {
            return Err(Error::InvalidConfig {
                detail: "coarse_cost_per_eval must be non-negative".into(),
            });
        }
        if let Some(floor) = self.leep_floor {
            if floor <= 0.0 {
                return Err(Error::InvalidConfig {
                    detail: "leep_floor must be positive when set".into(),
                });
            }
        }
        if let CutRule::Threshold(tau) = self.cut {
            if tau < 0.0 {
                return Err(Error::InvalidConfig {
                    detail: "cut threshold must be non-negative".into(),
                });
            }
        }
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<PipelineConfig> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let config: PipelineConfig =
            serde_json::from_str(&text).map_err(|e| Error::parse(path, e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let text = serde_json::to_string_pretty(self).expect("config serializes");
        std::fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
    }

    pub fn stages(&self) -> usize {
        (self.total_steps / self.stage_steps) as usize
    }
}

/// On-disk input bundle. Prediction dumps are loaded lazily so that only the
/// representatives actually scored are ever read.
#[derive(Debug, Clone)]
pub struct Bundle {
    root: PathBuf,
    pub repository: Repository,
    pub matrix: PerformanceMatrix,
    pub benchmark_traces: Vec<TrainingTrace>,
    pub target_id: String,
    pub target_traces: BTreeMap<String, TrainingTrace>,
    dump_files: BTreeMap<String, String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct TargetManifest {
    id: String,
    #[serde(default)]
    dumps: BTreeMap<String, String>,
}

impl Bundle {
    pub fn load(dir: impl AsRef<Path>) -> Result<Bundle> {
        let root = dir.as_ref().to_path_buf();
        let repository = load_repository(root.join("repository.json"))?;
        let matrix = load_performance_matrix(root.join("matrix.csv"), &repository)?;
        let benchmark_traces = load_traces(root.join("benchmark_traces.json"))?;
        for trace in &benchmark_traces {
            if !repository.has_model(&trace.model_id) {
                return Err(Error::UnknownId {
                    id: trace.model_id.clone(),
                    context: "benchmark_traces.json".into(),
                });
            }
            if !repository.has_dataset(&trace.dataset_id) {
                return Err(Error::UnknownId {
                    id: trace.dataset_id.clone(),
                    context: "benchmark_traces.json".into(),
                });
            }
        }

        let manifest_path = root.join("target").join("task.json");
        let text =
            std::fs::read_to_string(&manifest_path).map_err(|e| Error::io(&manifest_path, e))?;
        let manifest: TargetManifest =
            serde_json::from_str(&text).map_err(|e| Error::parse(&manifest_path, e.to_string()))?;
        let mut target_traces = BTreeMap::new();
        for trace in load_traces(root.join("target").join("traces.json"))? {
            if !repository.has_model(&trace.model_id) {
                return Err(Error::UnknownId {
                    id: trace.model_id.clone(),
                    context: "target traces".into(),
                });
            }
            target_traces.insert(trace.model_id.clone(), trace);
        }
        for model_id in manifest.dumps.keys() {
            if !repository.has_model(model_id) {
                return Err(Error::UnknownId {
                    id: model_id.clone(),
                    context: "target dump manifest".into(),
                });
            }
        }
        Ok(Bundle {
            root,
            repository,
            matrix,
            benchmark_traces,
            target_id: manifest.id,
            target_traces,
            dump_files: manifest.dumps,
        })
    }

    /// Loads the prediction dump of one model from disk.
    pub fn load_dump(&self, model_id: &str) -> Result<PredictionDump> {
        let rel = self.dump_files.get(model_id).ok_or(Error::MissingDump {
            model_id: model_id.into(),
        })?;
        load_prediction_dump(self.root.join("target").join(rel), &self.target_id)
    }

    pub fn has_dump(&self, model_id: &str) -> bool {
        self.dump_files.contains_key(model_id)
    }

    /// Replay sources for the given models; every model needs a target trace.
    pub fn sources_for(&self, models: &[String]) -> Result<SourceMap> {
        let mut sources = SourceMap::new();
        for model_id in models {
            let trace = self
                .target_traces
                .get(model_id)
                .ok_or(Error::MissingTrace {
                    model_id: model_id.clone(),
                })?;
            sources.insert(model_id.clone(), TrainSource::Replay(trace.clone()));
        }
        Ok(sources)
    }

    pub fn all_model_ids(&self) -> Vec<String> {
        self.repository.model_ids()
    }
}

fn sanitize_filename(id: &str) -> String {
    id.chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '.' { c } else { '_' })
        .collect()
}

/// Writes a bundle tree: repository.json, matrix.csv, benchmark_traces.json,
/// target/task.json, target/traces.json, target/dumps/*.csv.
pub fn write_bundle(bundle: &SyntheticBundle, dir: impl AsRef<Path>) -> Result<()> {
    let root = dir.as_ref();
    let target_dir = root.join("target");
    let dumps_dir = target_dir.join("dumps");
    std::fs::create_dir_all(&dumps_dir).map_err(|e| Error::io(&dumps_dir, e))?;

    save_repository(&bundle.repository, root.join("repository.json"))?;
    save_performance_matrix(&bundle.matrix, root.join("matrix.csv"))?;
    save_traces(&bundle.benchmark_traces, root.join("benchmark_traces.json"))?;

    let traces: Vec<TrainingTrace> = bundle.target.traces.values().cloned().collect();
    save_traces(&traces, target_dir.join("traces.json"))?;

    let mut dump_files = BTreeMap::new();
    for (model_id, dump) in &bundle.target.dumps {
        let file = format!("dumps/{}.csv", sanitize_filename(model_id));
        save_prediction_dump(dump, target_dir.join(&file))?;
        dump_files.insert(model_id.clone(), file);
    }
    let manifest = TargetManifest {
        id: bundle.target.id.clone(),
        dumps: dump_files,
    };
    let text = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    std::fs::write(target_dir.join("task.json"), text + "\n")
        .map_err(|e| Error::io(target_dir.join("task.json"), e))?;
    Ok(())
}

/// Everything the coarse phase produced, kept for reports and assertions.
#[derive(Debug, Clone)]
pub struct CoarseOutcome {
    pub clustering: ModelClustering,
    pub representatives: Vec<String>,
    pub silhouette: f64,
    pub proxies: Vec<ProxyScore>,
    pub recall: RecallResult,
    pub recalled: Vec<String>,
    /// Dumps actually loaded and scored; equals the non-singleton cluster
    /// count by construction.
    pub leep_evaluations: usize,
}

/// Result of a full two-phase run.
#[derive(Debug, Clone)]
pub struct TwoPhaseOutcome {
    pub coarse: CoarseOutcome,
    pub selection: SelectionLog,
    pub coarse_epochs: f64,
    pub total_epochs: f64,
}

/// Clusters the repository per the configuration and picks representatives.
pub fn cluster_bundle(bundle: &Bundle, config: &PipelineConfig) -> Result<(ModelClustering, Vec<String>, f64)> {
    let clustering = match config.cluster_method {
        ClusterMethod::Hierarchical => {
            let vectors = matrix_vectors(&bundle.matrix)?;
            let distances = distance_matrix(&vectors, config.k_sim)?;
            hierarchical_cluster(&distances, config.cut)?
        }
        ClusterMethod::Kmeans => {
            let vectors = imputed_vectors(&bundle.matrix)?;
            let k = config.k_clusters.ok_or(Error::InvalidConfig {
                detail: "k_clusters is required for the kmeans method".into(),
            })?;
            kmeans_cluster(&vectors, k, config.seed)?
        }
        ClusterMethod::External => {
            let path = config
                .external_distances
                .as_ref()
                .ok_or(Error::InvalidConfig {
                    detail: "external cluster method requires external_distances".into(),
                })?;
            let distances = crate::similarity::load_distance_matrix(path)?;
            for id in distances.ids.iter() {
                if !bundle.repository.has_model(id) {
                    return Err(Error::UnknownId {
                        id: id.clone(),
                        context: "external distance matrix".into(),
                    });
                }
            }
            let mut clustering = hierarchical_cluster(&distances, config.cut)?;
            clustering.method = ClusterMethod::External;
            clustering
        }
    };
    let representatives = select_representative(&clustering, &bundle.matrix)?;
    let vectors = matrix_vectors(&bundle.matrix)?;
    let distances = distance_matrix(&vectors, config.k_sim)?;
    let sil = silhouette(&clustering, &distances)?;
    Ok((clustering, representatives, sil))
}

/// Runs the coarse phase: cluster, score non-singleton representatives with
/// the proxy, normalize, rank, and recall the top K.
pub fn coarse_recall(bundle: &Bundle, config: &PipelineConfig) -> Result<CoarseOutcome> {
    config.validate()?;
    let (clustering, representatives, sil) = cluster_bundle(bundle, config)?;

    let leep_config = LeepConfig {
        likelihood_floor: config.leep_floor,
    };
    let mut raw_scores = Vec::new();
    for &c in &clustering.non_singleton_indices() {
        let rep = &representatives[c];
        let dump = bundle.load_dump(rep)?;
        raw_scores.push(ProxyScore::raw(rep.clone(), leep_score_with(&dump, &leep_config)?));
    }
    let leep_evaluations = raw_scores.len();
    let proxies = if raw_scores.is_empty() {
        Vec::new()
    } else {
        normalize_scores(&raw_scores)?
    };

    let recall = recall_scores(
        &bundle.matrix,
        &clustering,
        &representatives,
        &proxies,
        config.k_sim,
    )?;
    debug_assert_eq!(recall.proxy_evals, leep_evaluations);
    let k = config.k_recall.min(recall.ranked.len());
    let recalled = recall.top_k(k)?;

    Ok(CoarseOutcome {
        clustering,
        representatives,
        silhouette: sil,
        proxies,
        recall,
        recalled,
        leep_evaluations,
    })
}

/// Mines per-stage trendsets for the given models from benchmark traces.
pub fn mine_trendsets(
    benchmark_traces: &[TrainingTrace],
    models: &[String],
    stages: usize,
    count: TrendCount,
) -> Result<TrendMap> {
    let mut map = TrendMap::new();
    for model_id in models {
        for t in 1..=stages {
            let ts = mine_trends(model_id, benchmark_traces, t, count)?;
            map.insert((model_id.clone(), t), ts);
        }
    }
    Ok(map)
}

/// The full two-phase pipeline. The coarse charge is
/// `coarse_cost_per_eval x proxy evaluations`; the fine phase runs the trend
/// filter over the recalled models only.
pub fn run_two_phase(bundle: &Bundle, config: &PipelineConfig) -> Result<TwoPhaseOutcome> {
    let coarse = coarse_recall(bundle, config)?;
    let sources = bundle.sources_for(&coarse.recalled)?;
    let trendsets = mine_trendsets(
        &bundle.benchmark_traces,
        &coarse.recalled,
        config.stages(),
        config.trend_clusters,
    )?;
    let selection = fine_selection(
        &sources,
        &bundle.target_id,
        config.total_steps,
        config.stage_steps,
        &trendsets,
        config.threshold,
    )?;
    let coarse_epochs = config.coarse_cost_per_eval * coarse.leep_evaluations as f64;
    let total_epochs = coarse_epochs + selection.epoch_ledger;
    Ok(TwoPhaseOutcome {
        coarse,
        selection,
        coarse_epochs,
        total_epochs,
    })
}

/// Runs fine selection alone over every model with a target trace.
pub fn run_fine_selection(bundle: &Bundle, config: &PipelineConfig) -> Result<SelectionLog> {
    run_fine_selection_detailed(bundle, config).map(|(log, _)| log)
}

/// As [`run_fine_selection`], also returning the mined trendsets.
pub fn run_fine_selection_detailed(
    bundle: &Bundle,
    config: &PipelineConfig,
) -> Result<(SelectionLog, TrendMap)> {
    config.validate()?;
    let models: Vec<String> = bundle.target_traces.keys().cloned().collect();
    let sources = bundle.sources_for(&models)?;
    let trendsets = mine_trendsets(
        &bundle.benchmark_traces,
        &models,
        config.stages(),
        config.trend_clusters,
    )?;
    let log = fine_selection(
        &sources,
        &bundle.target_id,
        config.total_steps,
        config.stage_steps,
        &trendsets,
        config.threshold,
    )?;
    Ok((log, trendsets))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodRow {
    pub method: String,
    pub runtime_epochs: f64,
    pub winner: String,
    pub winner_test: f64,
}

impl MethodRow {
    fn from_log(log: &SelectionLog, extra_epochs: f64, name: &str) -> MethodRow {
        MethodRow {
            method: name.into(),
            runtime_epochs: log.epoch_ledger + extra_epochs,
            winner: log.winner.clone(),
            winner_test: log.winner_final_test,
        }
    }
}

/// Side-by-side accounting of brute force, successive halving, and the
/// two-phase pipeline. Speedups are computed from the ledgers and rounded to
/// two decimals.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonReport {
    pub bf: MethodRow,
    pub sh: MethodRow,
    pub two_phase: MethodRow,
    pub speedup_vs_bf: f64,
    pub speedup_vs_sh: f64,
}

fn round2(x: f64) -> f64 {
    (x * 100.0).round() / 100.0
}

impl ComparisonReport {
    pub fn from_rows(bf: MethodRow, sh: MethodRow, two_phase: MethodRow) -> ComparisonReport {
        let speedup_vs_bf = round2(bf.runtime_epochs / two_phase.runtime_epochs);
        let speedup_vs_sh = round2(sh.runtime_epochs / two_phase.runtime_epochs);
        ComparisonReport {
            bf,
            sh,
            two_phase,
            speedup_vs_bf,
            speedup_vs_sh,
        }
    }

    /// CSV form: one row per method, speedups on the 2PH row.
    pub fn to_csv(&self) -> String {
        let mut out =
            String::from("method,runtime_epochs,winner,winner_test,speedup_vs_bf,speedup_vs_sh\n");
        for row in [&self.bf, &self.sh] {
            out.push_str(&format!(
                "{},{},{},{},,\n",
                row.method, row.runtime_epochs, row.winner, row.winner_test
            ));
        }
        out.push_str(&format!(
            "{},{},{},{},{:.2},{:.2}\n",
            self.two_phase.method,
            self.two_phase.runtime_epochs,
            self.two_phase.winner,
            self.two_phase.winner_test,
            self.speedup_vs_bf,
            self.speedup_vs_sh
        ));
        out
    }
}

/// Outcome of `run_comparison`: the report plus the logs it was derived from.
#[derive(Debug, Clone)]
pub struct ComparisonOutcome {
    pub report: ComparisonReport,
    pub bf_log: SelectionLog,
    pub sh_log: SelectionLog,
    pub two_phase: TwoPhaseOutcome,
}

/// Runs brute force and successive halving over the whole repository and the
/// two-phase pipeline with the given configuration.
pub fn run_comparison(bundle: &Bundle, config: &PipelineConfig) -> Result<ComparisonOutcome> {
    config.validate()?;
    let all_models = bundle.all_model_ids();
    let sources = bundle.sources_for(&all_models)?;
    let bf_log = brute_force(
        &sources,
        &bundle.target_id,
        config.total_steps,
        config.stage_steps,
    )?;
    let sh_log = successive_halving(
        &sources,
        &bundle.target_id,
        config.total_steps,
        config.stage_steps,
    )?;
    let two_phase = run_two_phase(bundle, config)?;

    let report = ComparisonReport::from_rows(
        MethodRow::from_log(&bf_log, 0.0, "BF"),
        MethodRow::from_log(&sh_log, 0.0, "SH"),
        MethodRow {
            method: "2PH".into(),
            runtime_epochs: two_phase.total_epochs,
            winner: two_phase.selection.winner.clone(),
            winner_test: two_phase.selection.winner_final_test,
        },
    );
    Ok(ComparisonOutcome {
        report,
        bf_log,
        sh_log,
        two_phase,
    })
}

/// Writers for the per-module export formats.
pub mod outputs {
    use super::*;

    pub fn write_clusters(
        path: impl AsRef<Path>,
        clustering: &ModelClustering,
        representatives: &[String],
        sil: f64,
    ) -> Result<()> {
        let report = ClusteringReport::build(clustering, representatives, sil);
        let text = serde_json::to_string_pretty(&report).expect("report serializes");
        std::fs::write(path.as_ref(), text + "\n").map_err(|e| Error::io(path.as_ref(), e))
    }

    /// `model_id,raw_leep,normalized` rows.
    pub fn write_proxies(path: impl AsRef<Path>, proxies: &[ProxyScore]) -> Result<()> {
        let mut out = String::from("model_id,raw_leep,normalized\n");
        for p in proxies {
            out.push_str(&format!(
                "{},{},{}\n",
                p.model_id,
                p.raw,
                p.normalized.map(|n| n.to_string()).unwrap_or_default()
            ));
        }
        std::fs::write(path.as_ref(), out).map_err(|e| Error::io(path.as_ref(), e))
    }

    pub fn write_recall(path: impl AsRef<Path>, recall: &RecallResult) -> Result<()> {
        std::fs::write(path.as_ref(), recall.to_csv()).map_err(|e| Error::io(path.as_ref(), e))
    }

    pub fn write_selection_log(path: impl AsRef<Path>, log: &SelectionLog) -> Result<()> {
        let text = serde_json::to_string_pretty(log).expect("log serializes");
        std::fs::write(path.as_ref(), text + "\n").map_err(|e| Error::io(path.as_ref(), e))
    }

    /// One-line summary `method,runtime_epochs,winner,winner_test`.
    pub fn write_summary(path: impl AsRef<Path>, log: &SelectionLog) -> Result<()> {
        let out = format!(
            "method,runtime_epochs,winner,winner_test\n{}\n",
            log.summary_csv_row()
        );
        std::fs::write(path.as_ref(), out).map_err(|e| Error::io(path.as_ref(), e))
    }

    pub fn write_report(path: impl AsRef<Path>, report: &ComparisonReport) -> Result<()> {
        std::fs::write(path.as_ref(), report.to_csv()).map_err(|e| Error::io(path.as_ref(), e))
    }

    /// Trend export: JSON list of {val_mean, test_mean, members} per
    /// (model, stage).
    pub fn write_trends(path: impl AsRef<Path>, trends: &TrendMap) -> Result<()> {
        #[derive(Serialize)]
        struct Entry<'a> {
            model_id: &'a str,
            stage: usize,
            trends: &'a [crate::trend::Trend],
        }
        let entries: Vec<Entry> = trends
            .iter()
            .map(|((m, t), ts)| Entry {
                model_id: m,
                stage: *t,
                trends: &ts.trends,
            })
            .collect();
        let text = serde_json::to_string_pretty(&entries).expect("trends serialize");
        std::fs::write(path.as_ref(), text + "\n").map_err(|e| Error::io(path.as_ref(), e))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::{generate_synthetic_scenario, presets, ScenarioSpec};

    #[test]
    fn config_round_trips_losslessly() {
        let config = PipelineConfig {
            k_sim: 3,
            cluster_method: ClusterMethod::Kmeans,
            cut: CutRule::Threshold(0.25),
            k_clusters: Some(4),
            k_recall: 7,
            total_steps: 8,
            stage_steps: 2,
            threshold: 0.05,
            trend_clusters: TrendCount::Fixed(3),
            coarse_cost_per_eval: 0.25,
            seed: 1234,
            leep_floor: Some(1e-9),
            external_distances: Some(PathBuf::from("distances.csv")),
        };
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("config.json");
        config.save(&path).unwrap();
        assert_eq!(PipelineConfig::load(&path).unwrap(), config);

        // Defaults fill absent fields.
        std::fs::write(&path, "{}").unwrap();
        let loaded = PipelineConfig::load(&path).unwrap();
        assert_eq!(loaded, PipelineConfig::default());
        assert_eq!(loaded.k_sim, 5);
        assert_eq!(loaded.k_recall, 10);
        assert_eq!(loaded.coarse_cost_per_eval, 0.5);
    }

    #[test]
    fn config_rejects_bad_values() {
        let mut config = PipelineConfig::default();
        config.threshold = -0.1;
        assert!(config.validate().is_err());
        let mut config = PipelineConfig::default();
        config.k_recall = 0;
        assert!(config.validate().is_err());
    }

    #[test]
    fn bundle_round_trips_through_disk() {
        let bundle = generate_synthetic_scenario(
            &ScenarioSpec::planted_two_blocks(4, 6, 3, 0.3, 0.01),
            5,
        )
        .unwrap();
        let dir = tempfile::tempdir().unwrap();
        write_bundle(&bundle, dir.path()).unwrap();
        let loaded = Bundle::load(dir.path()).unwrap();
        assert_eq!(loaded.repository, bundle.repository);
        assert_eq!(loaded.matrix, bundle.matrix);
        assert_eq!(loaded.benchmark_traces, bundle.benchmark_traces);
        assert_eq!(loaded.target_id, bundle.target.id);
        assert_eq!(loaded.target_traces.len(), bundle.target.traces.len());
        for (id, dump) in &bundle.target.dumps {
            assert_eq!(&loaded.load_dump(id).unwrap(), dump);
        }
        assert!(matches!(
            loaded.load_dump("no-such-model"),
            Err(Error::MissingDump { .. })
        ));
    }

    #[test]
    fn fixture_presets_round_trip_through_disk() {
        // Serialize each preset, reload it, and compare every part.
        for name in presets::PRESET_NAMES {
            let original = presets::by_name(name).unwrap();
            let dir = tempfile::tempdir().unwrap();
            write_bundle(&original, dir.path()).unwrap();
            let loaded = Bundle::load(dir.path()).unwrap();
            assert_eq!(loaded.repository, original.repository, "{name}");
            assert_eq!(loaded.matrix, original.matrix, "{name}");
            assert_eq!(loaded.benchmark_traces, original.benchmark_traces, "{name}");
            assert_eq!(loaded.target_id, original.target.id, "{name}");
            let traces: BTreeMap<String, TrainingTrace> = original
                .target
                .traces
                .iter()
                .map(|(k, v)| (k.clone(), v.clone()))
                .collect();
            assert_eq!(loaded.target_traces, traces, "{name}");
            for (id, dump) in &original.target.dumps {
                assert_eq!(&loaded.load_dump(id).unwrap(), dump, "{name}/{id}");
            }

            // Writing the reloaded bundle again produces identical bytes.
            let rebuilt = SyntheticBundle {
                repository: loaded.repository.clone(),
                matrix: loaded.matrix.clone(),
                benchmark_traces: loaded.benchmark_traces.clone(),
                target: crate::repo::TargetTask {
                    id: loaded.target_id.clone(),
                    traces: loaded.target_traces.clone(),
                    dumps: original
                        .target
                        .dumps
                        .keys()
                        .map(|id| (id.clone(), loaded.load_dump(id).unwrap()))
                        .collect(),
                },
            };
            let dir2 = tempfile::tempdir().unwrap();
            write_bundle(&rebuilt, dir2.path()).unwrap();
            for entry in std::fs::read_dir(dir.path()).unwrap() {
                let path = entry.unwrap().path();
                if path.is_file() {
                    let rel = path.file_name().unwrap();
                    assert_eq!(
                        std::fs::read(&path).unwrap(),
                        std::fs::read(dir2.path().join(rel)).unwrap(),
                        "{name}: {rel:?} differs after round trip"
                    );
                }
            }
        }
    }

    #[test]
    fn external_distances_drive_clustering() {
        let synthetic = generate_synthetic_scenario(
            &ScenarioSpec::planted_two_blocks(3, 6, 3, 0.4, 0.0),
            1,
        )
        .unwrap();
        let dir = tempfile::tempdir().unwrap();
        write_bundle(&synthetic, dir.path()).unwrap();
        let bundle = Bundle::load(dir.path()).unwrap();

        // Distance matrix asserting a partition that contradicts the
        // performance blocks: the external file wins.
        let ids = bundle.repository.model_ids();
        let n = ids.len();
        let mut dist = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..n {
                if i != j {
                    // Group by parity of the index instead of by block.
                    dist[i * n + j] = if i % 2 == j % 2 { 0.05 } else { 0.9 };
                }
            }
        }
        let external = crate::similarity::DistanceMatrix::from_parts(ids, dist).unwrap();
        let path = dir.path().join("distances.csv");
        crate::similarity::save_distance_matrix(&external, &path).unwrap();

        let config = PipelineConfig {
            cluster_method: ClusterMethod::External,
            external_distances: Some(path),
            ..PipelineConfig::default()
        };
        let (clustering, _, _) = cluster_bundle(&bundle, &config).unwrap();
        assert_eq!(clustering.method, ClusterMethod::External);
        assert_eq!(clustering.n_clusters(), 2);
        assert_eq!(clustering.clusters[0].len(), 3);

        // Missing path is a configuration error.
        let bad = PipelineConfig {
            cluster_method: ClusterMethod::External,
            ..PipelineConfig::default()
        };
        assert!(matches!(
            cluster_bundle(&bundle, &bad),
            Err(Error::InvalidConfig { .. })
        ));
    }

    #[test]
    fn tweet_fixture_end_to_end_arithmetic() {
        let dir = tempfile::tempdir().unwrap();
        write_bundle(&presets::tweet(), dir.path()).unwrap();
        let bundle = Bundle::load(dir.path()).unwrap();
        let config = PipelineConfig::default();

        let outcome = run_two_phase(&bundle, &config).unwrap();
        assert_eq!(outcome.coarse.clustering.n_clusters(), 20);
        assert_eq!(outcome.coarse.leep_evaluations, 10);
        assert_eq!(outcome.coarse.recall.proxy_evals, 10);
        assert_eq!(outcome.coarse_epochs, 5.0);
        assert_eq!(outcome.selection.epoch_ledger, 14.0);
        assert_eq!(outcome.total_epochs, 19.0);
        assert_eq!(outcome.selection.winner, "nlp-b0-m0");
        assert!(outcome.coarse.recalled.contains(&"nlp-b0-m0".to_string()));
        assert_eq!(outcome.coarse.recalled.len(), 10);

        let comparison = run_comparison(&bundle, &config).unwrap();
        assert_eq!(comparison.report.bf.runtime_epochs, 200.0);
        assert_eq!(comparison.report.sh.runtime_epochs, 77.0);
        assert_eq!(comparison.report.two_phase.runtime_epochs, 19.0);
        assert_eq!(comparison.report.speedup_vs_bf, 10.53);
        assert_eq!(comparison.report.speedup_vs_sh, 4.05);
    }

    #[test]
    fn only_representative_dumps_are_ever_read() {
        // Strip every dump except the ten block representatives': the run
        // must not notice, because singleton and non-representative dumps
        // are never loaded.
        let dir = tempfile::tempdir().unwrap();
        write_bundle(&presets::tweet(), dir.path()).unwrap();
        let reps: Vec<String> = (0..10).map(|i| format!("nlp-b{i}-m0")).collect();
        let manifest_path = dir.path().join("target").join("task.json");
        let mut manifest: TargetManifest =
            serde_json::from_str(&std::fs::read_to_string(&manifest_path).unwrap()).unwrap();
        for (model_id, rel) in manifest.dumps.clone() {
            if !reps.contains(&model_id) {
                std::fs::remove_file(dir.path().join("target").join(&rel)).unwrap();
                manifest.dumps.remove(&model_id);
            }
        }
        std::fs::write(
            &manifest_path,
            serde_json::to_string_pretty(&manifest).unwrap(),
        )
        .unwrap();

        let bundle = Bundle::load(dir.path()).unwrap();
        let outcome = run_two_phase(&bundle, &PipelineConfig::default()).unwrap();
        assert_eq!(outcome.coarse.leep_evaluations, 10);
        assert_eq!(outcome.total_epochs, 19.0);
    }

    #[test]
    fn missing_representative_dump_is_named() {
        let dir = tempfile::tempdir().unwrap();
        write_bundle(&presets::tweet(), dir.path()).unwrap();
        let manifest_path = dir.path().join("target").join("task.json");
        let mut manifest: TargetManifest =
            serde_json::from_str(&std::fs::read_to_string(&manifest_path).unwrap()).unwrap();
        manifest.dumps.remove("nlp-b0-m0");
        std::fs::write(
            &manifest_path,
            serde_json::to_string_pretty(&manifest).unwrap(),
        )
        .unwrap();

        let bundle = Bundle::load(dir.path()).unwrap();
        match run_two_phase(&bundle, &PipelineConfig::default()) {
            Err(Error::MissingDump { model_id }) => assert_eq!(model_id, "nlp-b0-m0"),
            other => panic!("expected missing-dump error, got {other:?}"),
        }
    }

    #[test]
    fn xray_fixture_end_to_end_arithmetic() {
        let dir = tempfile::tempdir().unwrap();
        write_bundle(&presets::xray(), dir.path()).unwrap();
        let bundle = Bundle::load(dir.path()).unwrap();
        let config = PipelineConfig {
            total_steps: 4,
            ..PipelineConfig::default()
        };

        let comparison = run_comparison(&bundle, &config).unwrap();
        assert_eq!(comparison.report.bf.runtime_epochs, 120.0);
        assert_eq!(comparison.report.sh.runtime_epochs, 55.0);
        assert_eq!(comparison.report.two_phase.runtime_epochs, 18.0);
        assert_eq!(comparison.report.speedup_vs_bf, 6.67);
        assert_eq!(comparison.report.speedup_vs_sh, 3.06);
        assert_eq!(comparison.two_phase.selection.winner, "cv-b0-m0");
    }

    #[test]
    fn threshold_fixture_sweep_is_monotone() {
        let dir = tempfile::tempdir().unwrap();
        write_bundle(&presets::threshold(), dir.path()).unwrap();
        let bundle = Bundle::load(dir.path()).unwrap();

        let mut results = Vec::new();
        for theta in [0.0, 0.01, 0.05, 0.10] {
            let config = PipelineConfig {
                threshold: theta,
                ..PipelineConfig::default()
            };
            let log = run_fine_selection(&bundle, &config).unwrap();
            results.push((theta, log.epoch_ledger, log.winner_final_test));
        }
        assert_eq!(results[0].1, 14.0);
        assert_eq!(results[1].1, 14.0);
        assert_eq!(results[2].1, 15.0);
        assert_eq!(results[3].1, 16.0);
        for pair in results.windows(2) {
            assert!(pair[1].1 >= pair[0].1, "runtime must not decrease: {results:?}");
            assert!(pair[1].2 >= pair[0].2, "accuracy must not decrease: {results:?}");
        }
        assert_eq!(results[0].2, 0.86);
        assert_eq!(results[3].2, 0.90);
    }
}
