//! The trainer abstraction (trace replay and synthetic curves) and the three
//! selection schedulers: brute force, successive halving, and fine selection
//! with convergence-trend filtering. Cost is accounted in training epochs,
//! audited per stage.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::repo::TrainingTrace;
use crate::trend::{match_trend, predict_final, TrendSet};

/// Parameters of a saturating synthetic training curve:
/// val(t) = clamp(a * (1 - e^(-r t)) + N(0, sigma), 0, 1) at 1-based stage t,
/// final test = clamp(a + N(0, sigma), 0, 1).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SyntheticCurveParams {
    pub asymptote: f64,
    pub rate: f64,
    pub noise: f64,
    pub stages: usize,
}

impl SyntheticCurveParams {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.asymptote) {
            return Err(Error::InvalidParams {
                detail: format!("asymptote {} outside [0,1]", self.asymptote),
            });
        }
        if self.rate <= 0.0 {
            return Err(Error::InvalidParams {
                detail: format!("rate {} must be positive", self.rate),
            });
        }
        if self.noise < 0.0 {
            return Err(Error::InvalidParams {
                detail: format!("noise {} must be non-negative", self.noise),
            });
        }
        if self.stages == 0 {
            return Err(Error::InvalidParams {
                detail: "stages must be positive".into(),
            });
        }
        Ok(())
    }
}

/// Where a trainer's stage values come from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrainSource {
    Replay(TrainingTrace),
    Synthetic {
        params: SyntheticCurveParams,
        seed: u64,
    },
}

impl TrainSource {
    pub fn stages_available(&self) -> usize {
        match self {
            TrainSource::Replay(trace) => trace.stages(),
            TrainSource::Synthetic { params, .. } => params.stages,
        }
    }

    pub fn epochs_per_stage(&self) -> f64 {
        match self {
            TrainSource::Replay(trace) => trace.epochs_per_stage,
            TrainSource::Synthetic { .. } => 1.0,
        }
    }
}

pub type SourceMap = BTreeMap<String, TrainSource>;

pub(crate) fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    x = (x ^ (x >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    x ^ (x >> 31)
}

/// Standard normal draw derived purely from (seed, stream): the same pair
/// always produces the same value.
fn gaussian(seed: u64, stream: u64) -> f64 {
    let a = splitmix64(seed ^ splitmix64(stream.wrapping_mul(0x9e37_79b9_7f4a_7c15)));
    let b = splitmix64(a);
    let u1 = ((a >> 11) as f64 + 1.0) / (1u64 << 53) as f64; // in (0, 1]
    let u2 = (b >> 11) as f64 / (1u64 << 53) as f64;
    (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
}

fn synthetic_val(params: &SyntheticCurveParams, seed: u64, stage_index: usize) -> f64 {
    let t = (stage_index + 1) as f64;
    let mean = params.asymptote * (1.0 - (-params.rate * t).exp());
    let noise = if params.noise > 0.0 {
        params.noise * gaussian(seed, stage_index as u64)
    } else {
        0.0
    };
    (mean + noise).clamp(0.0, 1.0)
}

fn synthetic_final(params: &SyntheticCurveParams, seed: u64) -> f64 {
    let noise = if params.noise > 0.0 {
        params.noise * gaussian(seed, u64::MAX)
    } else {
        0.0
    };
    (params.asymptote + noise).clamp(0.0, 1.0)
}

/// A model being fine-tuned on the target dataset. `cursor` counts completed
/// validation stages.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainerHandle {
    pub model_id: String,
    pub target_id: String,
    pub cursor: usize,
    pub source: TrainSource,
}

impl TrainerHandle {
    pub fn new(
        model_id: impl Into<String>,
        target_id: impl Into<String>,
        source: TrainSource,
    ) -> Self {
        TrainerHandle {
            model_id: model_id.into(),
            target_id: target_id.into(),
            cursor: 0,
            source,
        }
    }

    pub fn total_stages(&self) -> usize {
        self.source.stages_available()
    }

    /// Trains one more stage and returns the validation accuracy at the new
    /// cursor. Replay returns the recorded value; synthetic curves draw
    /// deterministically from (params, seed, cursor).
    pub fn train_stage(&mut self) -> Result<f64> {
        if self.cursor >= self.total_stages() {
            return Err(Error::ExhaustedTrace {
                model_id: self.model_id.clone(),
                stages: self.total_stages(),
            });
        }
        let val = match &self.source {
            TrainSource::Replay(trace) => trace.stage_val[self.cursor],
            TrainSource::Synthetic { params, seed } => synthetic_val(params, *seed, self.cursor),
        };
        self.cursor += 1;
        Ok(val)
    }

    pub fn final_test(&self) -> f64 {
        match &self.source {
            TrainSource::Replay(trace) => trace.final_test,
            TrainSource::Synthetic { params, seed } => synthetic_final(params, *seed),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SelectionMethod {
    #[serde(rename = "BF")]
    BruteForce,
    #[serde(rename = "SH")]
    SuccessiveHalving,
    #[serde(rename = "FS")]
    FineSelection,
}

impl std::fmt::Display for SelectionMethod {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            SelectionMethod::BruteForce => write!(f, "BF"),
            SelectionMethod::SuccessiveHalving => write!(f, "SH"),
            SelectionMethod::FineSelection => write!(f, "FS"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RemovalReason {
    TrendFilter,
    Halving,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Removal {
    pub model_id: String,
    pub reason: RemovalReason,
}

/// What happened at one validation stage.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageRecord {
    pub stage: usize,
    pub survivors_before: Vec<String>,
    pub validations: BTreeMap<String, f64>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub matched_trends: BTreeMap<String, usize>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub predictions: BTreeMap<String, f64>,
    pub removals: Vec<Removal>,
    pub survivors_after: Vec<String>,
    pub epochs_charged: f64,
}

/// Full account of one selection run: per-stage records, the epoch ledger,
/// and the winner.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionLog {
    pub method: SelectionMethod,
    pub stages: Vec<StageRecord>,
    pub epoch_ledger: f64,
    pub winner: String,
    pub winner_final_test: f64,
}

impl SelectionLog {
    /// Recomputes the ledger from the per-stage survivor lists and the given
    /// per-model stage costs. Used as a self-audit: the stored ledger must
    /// match the recount exactly.
    pub fn recount_ledger(&self, epochs_per_stage: &BTreeMap<String, f64>) -> f64 {
        self.stages
            .iter()
            .map(|s| {
                s.survivors_before
                    .iter()
                    .map(|m| epochs_per_stage.get(m).copied().unwrap_or(1.0))
                    .sum::<f64>()
            })
            .sum()
    }

    /// Stage-by-stage trajectory equality ignoring method-specific fields
    /// (matched trends, predictions): survivor sets, removals, validations,
    /// ledger, and winner all identical.
    pub fn same_trajectory(&self, other: &SelectionLog) -> bool {
        self.epoch_ledger == other.epoch_ledger
            && self.winner == other.winner
            && self.winner_final_test == other.winner_final_test
            && self.stages.len() == other.stages.len()
            && self.stages.iter().zip(&other.stages).all(|(a, b)| {
                a.stage == b.stage
                    && a.survivors_before == b.survivors_before
                    && a.survivors_after == b.survivors_after
                    && a.removals == b.removals
                    && a.validations == b.validations
                    && a.epochs_charged == b.epochs_charged
            })
    }

    /// One-line CSV summary: `method,runtime_epochs,winner,winner_test`.
    pub fn summary_csv_row(&self) -> String {
        format!(
            "{},{},{},{}",
            self.method, self.epoch_ledger, self.winner, self.winner_final_test
        )
    }
}

/// Per-(model, 1-based stage) trendsets for fine selection; the trendset at
/// stage t is consulted right after survivors trained their t-th stage.
pub type TrendMap = BTreeMap<(String, usize), TrendSet>;

fn build_handles(
    sources: &SourceMap,
    target_id: &str,
    stages: usize,
) -> Result<BTreeMap<String, TrainerHandle>> {
    if sources.is_empty() {
        return Err(Error::TooFewModels { needed: 1, got: 0 });
    }
    let mut handles = BTreeMap::new();
    for (model_id, source) in sources {
        if source.stages_available() < stages {
            return Err(Error::ExhaustedTrace {
                model_id: model_id.clone(),
                stages: source.stages_available(),
            });
        }
        handles.insert(
            model_id.clone(),
            TrainerHandle::new(model_id.clone(), target_id, source.clone()),
        );
    }
    Ok(handles)
}

fn stage_count(total_steps: u32, stage_steps: u32) -> Result<usize> {
    if stage_steps == 0 || total_steps == 0 {
        return Err(Error::InvalidParams {
            detail: "total steps and stage steps must be positive".into(),
        });
    }
    let stages = (total_steps / stage_steps) as usize;
    if stages == 0 {
        return Err(Error::InvalidParams {
            detail: format!("no full stage fits: T={total_steps}, s={stage_steps}"),
        });
    }
    Ok(stages)
}

/// Sorts worst-first for removal: ascending validation, descending id, so
/// equal validations drop the lexicographically larger id first.
fn removal_order(ids: &[String], vals: &BTreeMap<String, f64>) -> Vec<String> {
    let mut order = ids.to_vec();
    order.sort_by(|a, b| {
        vals[a]
            .partial_cmp(&vals[b])
            .expect("finite validations")
            .then_with(|| b.cmp(a))
    });
    order
}

/// Fine-tunes every model for the full budget and picks the best final test
/// accuracy (ties to the lexicographically smaller id).
pub fn brute_force(
    sources: &SourceMap,
    target_id: &str,
    total_steps: u32,
    stage_steps: u32,
) -> Result<SelectionLog> {
    let stages = stage_count(total_steps, stage_steps)?;
    let mut handles = build_handles(sources, target_id, stages)?;
    let ids: Vec<String> = handles.keys().cloned().collect();

    let mut records = Vec::with_capacity(stages);
    let mut ledger = 0.0;
    for t in 0..stages {
        let mut validations = BTreeMap::new();
        let mut charged = 0.0;
        for id in &ids {
            let handle = handles.get_mut(id).expect("handle exists");
            validations.insert(id.clone(), handle.train_stage()?);
            charged += handle.source.epochs_per_stage();
        }
        ledger += charged;
        records.push(StageRecord {
            stage: t,
            survivors_before: ids.clone(),
            validations,
            matched_trends: BTreeMap::new(),
            predictions: BTreeMap::new(),
            removals: Vec::new(),
            survivors_after: ids.clone(),
            epochs_charged: charged,
        });
    }

    let winner = ids
        .iter()
        .max_by(|a, b| {
            handles[*a]
                .final_test()
                .partial_cmp(&handles[*b].final_test())
                .expect("finite final tests")
                .then_with(|| b.cmp(a))
        })
        .expect("at least one model")
        .clone();
    let winner_final_test = handles[&winner].final_test();
    Ok(SelectionLog {
        method: SelectionMethod::BruteForce,
        stages: records,
        epoch_ledger: ledger,
        winner,
        winner_final_test,
    })
}

/// Staged selection shared by successive halving and fine selection. The
/// trend filter runs only when `trendsets` is provided.
fn staged_selection(
    sources: &SourceMap,
    target_id: &str,
    total_steps: u32,
    stage_steps: u32,
    trendsets: Option<(&TrendMap, f64)>,
) -> Result<SelectionLog> {
    let stages = stage_count(total_steps, stage_steps)?;
    let mut handles = build_handles(sources, target_id, stages)?;
    let mut survivors: Vec<String> = handles.keys().cloned().collect();

    let mut records = Vec::with_capacity(stages);
    let mut ledger = 0.0;
    for t in 0..stages {
        let survivors_before = survivors.clone();
        let mut validations = BTreeMap::new();
        let mut charged = 0.0;
        for id in &survivors {
            let handle = handles.get_mut(id).expect("handle exists");
            validations.insert(id.clone(), handle.train_stage()?);
            charged += handle.source.epochs_per_stage();
        }
        ledger += charged;

        let mut matched_trends = BTreeMap::new();
        let mut predictions = BTreeMap::new();
        let mut removals = Vec::new();

        if survivors.len() > 1 {
            // Trend filter: walking up from the worst validation, drop any
            // model dominated by a survivor with better validation and a
            // predicted final better by more than the threshold margin.
            if let Some((trends, threshold)) = trendsets {
                for id in &survivors {
                    let ts = trends.get(&(id.clone(), t + 1)).ok_or_else(|| {
                        Error::MissingTrendset {
                            model_id: id.clone(),
                            stage: t + 1,
                        }
                    })?;
                    let val = validations[id];
                    let idx = match_trend(ts, val);
                    matched_trends.insert(id.clone(), idx);
                    predictions.insert(id.clone(), predict_final(ts, val));
                }

                let mut ascending = survivors.clone();
                ascending.sort_by(|a, b| {
                    validations[a]
                        .partial_cmp(&validations[b])
                        .expect("finite validations")
                        .then_with(|| a.cmp(b))
                });
                let mut removed: Vec<String> = Vec::new();
                for candidate in &ascending {
                    let dominated = ascending.iter().any(|other| {
                        other != candidate
                            && !removed.contains(other)
                            && validations[other] > validations[candidate]
                            && predictions[other] - predictions[candidate]
                                > threshold * predictions[candidate]
                    });
                    if dominated {
                        removed.push(candidate.clone());
                        removals.push(Removal {
                            model_id: candidate.clone(),
                            reason: RemovalReason::TrendFilter,
                        });
                    }
                }
                survivors.retain(|id| !removed.contains(id));
                debug_assert!(
                    !survivors.is_empty(),
                    "best-validation model cannot be dominated"
                );
            }

            // Halving clause: cut to half the stage's starting pool.
            let cap = survivors_before.len() / 2;
            if survivors.len() > cap {
                let order = removal_order(&survivors, &validations);
                for id in order {
                    if survivors.len() <= cap {
                        break;
                    }
                    survivors.retain(|s| s != &id);
                    removals.push(Removal {
                        model_id: id,
                        reason: RemovalReason::Halving,
                    });
                }
            }
            debug_assert!(survivors.len() <= survivors_before.len() / 2);
        }
        debug_assert!(!survivors.is_empty());

        records.push(StageRecord {
            stage: t,
            survivors_before,
            validations,
            matched_trends,
            predictions,
            removals,
            survivors_after: survivors.clone(),
            epochs_charged: charged,
        });
    }

    // A lone survivor has trained the full budget; if the stage budget ran
    // out before halving finished, take the best last validation.
    let winner = if survivors.len() == 1 {
        survivors[0].clone()
    } else {
        let last_vals = &records.last().expect("at least one stage").validations;
        survivors
            .iter()
            .max_by(|a, b| {
                last_vals[*a]
                    .partial_cmp(&last_vals[*b])
                    .expect("finite validations")
                    .then_with(|| b.cmp(a))
            })
            .expect("survivors non-empty")
            .clone()
    };
    let winner_final_test = handles[&winner].final_test();
    Ok(SelectionLog {
        method: if trendsets.is_some() {
            SelectionMethod::FineSelection
        } else {
            SelectionMethod::SuccessiveHalving
        },
        stages: records,
        epoch_ledger: ledger,
        winner,
        winner_final_test,
    })
}

/// Successive halving: train all survivors each stage, keep the better half,
/// and train the last survivor through the remaining budget.
pub fn successive_halving(
    sources: &SourceMap,
    target_id: &str,
    total_steps: u32,
    stage_steps: u32,
) -> Result<SelectionLog> {
    staged_selection(sources, target_id, total_steps, stage_steps, None)
}

/// Fine selection: successive halving plus the convergence-trend filter.
/// `trendsets` must hold an entry for every (survivor, stage) pair reached
/// while more than one model remains.
pub fn fine_selection(
    sources: &SourceMap,
    target_id: &str,
    total_steps: u32,
    stage_steps: u32,
    trendsets: &TrendMap,
    threshold: f64,
) -> Result<SelectionLog> {
    if threshold < 0.0 {
        return Err(Error::InvalidParams {
            detail: format!("threshold {threshold} must be non-negative"),
        });
    }
    staged_selection(
        sources,
        target_id,
        total_steps,
        stage_steps,
        Some((trendsets, threshold)),
    )
}
