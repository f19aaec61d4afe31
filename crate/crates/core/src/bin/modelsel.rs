//! Command-line interface: cluster, score, recall, select, simulate,
//! compare, and synthetic-bundle generation.

use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};

use modelsel::cluster::{ClusterMethod, CutRule};
use modelsel::pipeline::{
    cluster_bundle, coarse_recall, outputs, run_comparison, run_fine_selection,
    run_fine_selection_detailed, write_bundle, Bundle, PipelineConfig,
};
use modelsel::repo::load_repository;
use modelsel::select::{brute_force, successive_halving};
use modelsel::synth::{generate_synthetic_scenario, presets, ScenarioSpec};
use modelsel::trend::TrendCount;
use modelsel::{Error, Result};

#[derive(Parser)]
#[command(
    name = "modelsel",
    version,
    about = "Two-phase pre-trained model selection: clustered coarse recall plus trend-predictive successive halving"
)]
struct Cli {
    /// JSON config file mirroring the pipeline configuration; flags override
    /// file values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Seed controlling all randomness.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Emit machine-readable error JSON on stderr.
    #[arg(long, global = true)]
    json_errors: bool,

    /// Top-k parameter of the performance-vector similarity.
    #[arg(long, global = true)]
    k_sim: Option<usize>,

    /// Number of models the coarse phase recalls.
    #[arg(long, global = true)]
    k_recall: Option<usize>,

    /// Total training steps per model (T).
    #[arg(long, global = true)]
    total_steps: Option<u32>,

    /// Validation interval in steps (s).
    #[arg(long, global = true)]
    stage_steps: Option<u32>,

    /// Trend-filter threshold (theta).
    #[arg(long, global = true)]
    threshold: Option<f64>,

    /// Epochs charged per proxy evaluation in the coarse phase.
    #[arg(long, global = true)]
    coarse_cost: Option<f64>,

    #[arg(long, global = true, value_enum)]
    cluster_method: Option<ClusterMethodArg>,

    /// Dendrogram cut threshold; omit for the silhouette-maximizing cut.
    #[arg(long, global = true)]
    cut_threshold: Option<f64>,

    /// Cluster count for the kmeans method.
    #[arg(long, global = true)]
    k_clusters: Option<usize>,

    /// Fixed trend cluster count; omit for the silhouette sweep.
    #[arg(long, global = true)]
    trend_clusters: Option<usize>,

    /// Externally produced distance matrix CSV (with
    /// `--cluster-method external`).
    #[arg(long, global = true)]
    distances: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum ClusterMethodArg {
    Hierarchical,
    Kmeans,
    External,
}

#[derive(Clone, Copy, ValueEnum)]
enum MethodArg {
    Bf,
    Sh,
    Fs,
}

#[derive(Subcommand)]
enum Command {
    /// Cluster repository models by benchmark performance.
    Cluster {
        #[arg(long)]
        bundle: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Score non-singleton cluster representatives with the proxy.
    Leep {
        #[arg(long)]
        bundle: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Rank models by recall score.
    Recall {
        #[arg(long)]
        bundle: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Fine-selection over every model of the bundle's target task.
    Select {
        #[arg(long)]
        bundle: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run a single scheduler over the whole repository.
    Simulate {
        #[arg(long)]
        bundle: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, value_enum)]
        method: MethodArg,
    },
    /// Full end-to-end comparison: brute force, successive halving, and the
    /// two-phase pipeline.
    Compare {
        #[arg(long)]
        bundle: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Generate a deterministic synthetic input bundle.
    GenSynthetic {
        #[arg(long)]
        out: PathBuf,
        /// Named preset: tweet, xray, or threshold.
        #[arg(long, conflicts_with = "spec")]
        scenario: Option<String>,
        /// Scenario spec JSON for a randomized bundle.
        #[arg(long)]
        spec: Option<PathBuf>,
    },
    /// Validate a repository manifest.
    Validate {
        #[arg(long)]
        manifest: PathBuf,
    },
}

fn build_config(cli: &Cli) -> Result<PipelineConfig> {
    let mut config = match &cli.config {
        Some(path) => PipelineConfig::load(path)?,
        None => PipelineConfig::default(),
    };
    if let Some(v) = cli.seed {
        config.seed = v;
    }
    if let Some(v) = cli.k_sim {
        config.k_sim = v;
    }
    if let Some(v) = cli.k_recall {
        config.k_recall = v;
    }
    if let Some(v) = cli.total_steps {
        config.total_steps = v;
    }
    if let Some(v) = cli.stage_steps {
        config.stage_steps = v;
    }
    if let Some(v) = cli.threshold {
        config.threshold = v;
    }
    if let Some(v) = cli.coarse_cost {
        config.coarse_cost_per_eval = v;
    }
    if let Some(m) = cli.cluster_method {
        config.cluster_method = match m {
            ClusterMethodArg::Hierarchical => ClusterMethod::Hierarchical,
            ClusterMethodArg::Kmeans => ClusterMethod::Kmeans,
            ClusterMethodArg::External => ClusterMethod::External,
        };
    }
    if let Some(path) = &cli.distances {
        config.external_distances = Some(path.clone());
    }
    if let Some(tau) = cli.cut_threshold {
        config.cut = CutRule::Threshold(tau);
    }
    if let Some(k) = cli.k_clusters {
        config.k_clusters = Some(k);
    }
    if let Some(c) = cli.trend_clusters {
        config.trend_clusters = TrendCount::Fixed(c);
    }
    config.validate()?;
    Ok(config)
}

fn ensure_dir(path: &Path) -> Result<()> {
    std::fs::create_dir_all(path).map_err(|e| Error::io(path, e))
}

fn run(cli: &Cli) -> Result<()> {
    match &cli.command {
        Command::Cluster { bundle, out } => {
            let config = build_config(cli)?;
            let bundle = Bundle::load(bundle)?;
            let (clustering, representatives, sil) = cluster_bundle(&bundle, &config)?;
            ensure_dir(out)?;
            outputs::write_clusters(out.join("clusters.json"), &clustering, &representatives, sil)?;
            println!(
                "clustered {} models into {} clusters (silhouette {sil:.4}); wrote {}",
                bundle.repository.len(),
                clustering.n_clusters(),
                out.join("clusters.json").display()
            );
        }
        Command::Leep { bundle, out } => {
            let config = build_config(cli)?;
            let bundle = Bundle::load(bundle)?;
            let coarse = coarse_recall(&bundle, &config)?;
            ensure_dir(out)?;
            outputs::write_proxies(out.join("proxy.csv"), &coarse.proxies)?;
            println!(
                "scored {} representatives; wrote {}",
                coarse.leep_evaluations,
                out.join("proxy.csv").display()
            );
        }
        Command::Recall { bundle, out } => {
            let config = build_config(cli)?;
            let bundle = Bundle::load(bundle)?;
            let coarse = coarse_recall(&bundle, &config)?;
            ensure_dir(out)?;
            outputs::write_recall(out.join("recall.csv"), &coarse.recall)?;
            for w in &coarse.recall.warnings {
                eprintln!("warning: {w}");
            }
            println!(
                "recalled top {} of {} models; wrote {}",
                coarse.recalled.len(),
                coarse.recall.ranked.len(),
                out.join("recall.csv").display()
            );
        }
        Command::Select { bundle, out } => {
            let config = build_config(cli)?;
            let bundle = Bundle::load(bundle)?;
            let (log, trendsets) = run_fine_selection_detailed(&bundle, &config)?;
            ensure_dir(out)?;
            outputs::write_selection_log(out.join("selection_log.json"), &log)?;
            outputs::write_summary(out.join("summary.csv"), &log)?;
            outputs::write_trends(out.join("trends.json"), &trendsets)?;
            println!("{}", log.summary_csv_row());
        }
        Command::Simulate { bundle, out, method } => {
            let config = build_config(cli)?;
            let bundle = Bundle::load(bundle)?;
            let log = match method {
                MethodArg::Fs => run_fine_selection(&bundle, &config)?,
                MethodArg::Bf => {
                    let models = bundle.all_model_ids();
                    let sources = bundle.sources_for(&models)?;
                    brute_force(
                        &sources,
                        &bundle.target_id,
                        config.total_steps,
                        config.stage_steps,
                    )?
                }
                MethodArg::Sh => {
                    let models = bundle.all_model_ids();
                    let sources = bundle.sources_for(&models)?;
                    successive_halving(
                        &sources,
                        &bundle.target_id,
                        config.total_steps,
                        config.stage_steps,
                    )?
                }
            };
            ensure_dir(out)?;
            outputs::write_selection_log(out.join("selection_log.json"), &log)?;
            outputs::write_summary(out.join("summary.csv"), &log)?;
            println!("{}", log.summary_csv_row());
        }
        Command::Compare { bundle, out } => {
            let config = build_config(cli)?;
            let bundle = Bundle::load(bundle)?;
            let outcome = run_comparison(&bundle, &config)?;
            ensure_dir(out)?;
            let coarse = &outcome.two_phase.coarse;
            outputs::write_clusters(
                out.join("clusters.json"),
                &coarse.clustering,
                &coarse.representatives,
                coarse.silhouette,
            )?;
            outputs::write_proxies(out.join("proxy.csv"), &coarse.proxies)?;
            outputs::write_recall(out.join("recall.csv"), &coarse.recall)?;
            outputs::write_selection_log(
                out.join("selection_log.json"),
                &outcome.two_phase.selection,
            )?;
            outputs::write_report(out.join("report.csv"), &outcome.report)?;
            print!("{}", outcome.report.to_csv());
        }
        Command::GenSynthetic { out, scenario, spec } => {
            let seed = cli.seed.unwrap_or(0);
            let bundle = match (scenario, spec) {
                (Some(name), None) => presets::by_name(name)?,
                (None, Some(path)) => {
                    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
                    let spec: ScenarioSpec = serde_json::from_str(&text)
                        .map_err(|e| Error::parse(path, e.to_string()))?;
                    generate_synthetic_scenario(&spec, seed)?
                }
                _ => {
                    return Err(Error::InvalidConfig {
                        detail: "pass exactly one of --scenario or --spec".into(),
                    })
                }
            };
            write_bundle(&bundle, out)?;
            println!(
                "wrote bundle with {} models, {} benchmark traces to {}",
                bundle.repository.len(),
                bundle.benchmark_traces.len(),
                out.display()
            );
        }
        Command::Validate { manifest } => {
            let repo = load_repository(manifest)?;
            println!(
                "valid: {} models, {} benchmark datasets",
                repo.len(),
                repo.datasets.len()
            );
        }
    }
    Ok(())
}

fn main() {
    let cli = Cli::parse();
    if let Err(e) = run(&cli) {
        if cli.json_errors {
            eprintln!(
                "{}",
                serde_json::json!({ "kind": e.kind(), "error": e.to_string() })
            );
        } else {
            eprintln!("error: {e}");
        }
        std::process::exit(e.exit_code());
    }
}
