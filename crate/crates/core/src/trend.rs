//! Convergence-trend mining: cluster a model's benchmark datasets by their
//! validation accuracy at a given stage, summarize each cluster as (mean
//! validation, mean final test), then match and predict a running model.

use serde::{Deserialize, Serialize};

use crate::cluster::kmeans_cluster;
use crate::error::{Error, Result};
use crate::repo::TrainingTrace;
use crate::similarity::{distance_matrix, ModelVector};

/// Seed for the deterministic 1-D k-means used by trend mining.
const TREND_KMEANS_SEED: u64 = 0x7261_6e64;

/// Default cap on the trend cluster count sweep.
pub const MAX_TREND_CLUSTERS: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrendCount {
    Auto,
    Fixed(usize),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trend {
    pub val_mean: f64,
    pub test_mean: f64,
    pub members: Vec<String>,
}

/// Convergence trends of one model at one validation stage. Trends are
/// ordered by descending mean validation accuracy.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrendSet {
    pub model_id: String,
    pub stage: usize,
    pub trends: Vec<Trend>,
}

impl TrendSet {
    /// A single-trend set pinning the prediction to a fixed value; useful to
    /// disable trend filtering (every model predicts the same) or to supply
    /// exact per-model predictions without benchmark traces.
    pub fn degenerate(model_id: impl Into<String>, stage: usize, val: f64, test: f64) -> Self {
        TrendSet {
            model_id: model_id.into(),
            stage,
            trends: vec![Trend {
                val_mean: val,
                test_mean: test,
                members: Vec::new(),
            }],
        }
    }
}

/// Mines the convergence trends of `model_id` at 1-based stage `t` from its
/// benchmark traces. Traces of other models are ignored; traces shorter than
/// `t` stages are excluded.
pub fn mine_trends(
    model_id: &str,
    traces: &[TrainingTrace],
    t: usize,
    c: TrendCount,
) -> Result<TrendSet> {
    if t == 0 {
        return Err(Error::InvalidParams {
            detail: "stage t is 1-based and must be positive".into(),
        });
    }
    let eligible: Vec<&TrainingTrace> = traces
        .iter()
        .filter(|tr| tr.model_id == model_id && tr.stages() >= t)
        .collect();
    if eligible.is_empty() {
        return Err(Error::NoEligibleTrace {
            model_id: model_id.into(),
            stage: t,
        });
    }

    // Scalar values at stage t, wrapped as 1-D vectors keyed by dataset id so
    // the shared k-means and silhouette machinery applies.
    let points: Vec<ModelVector> = eligible
        .iter()
        .map(|tr| ModelVector {
            model_id: tr.dataset_id.clone(),
            dims: vec![("val".to_string(), tr.stage_val[t - 1])],
        })
        .collect();

    let n = eligible.len();
    let chosen_k = match c {
        TrendCount::Fixed(k) => {
            if k == 0 {
                return Err(Error::InvalidParams {
                    detail: "trend cluster count must be positive".into(),
                });
            }
            k.min(n)
        }
        TrendCount::Auto => {
            if n < 2 {
                1
            } else {
                let dist = scalar_distances(&points)?;
                let mut best_k = 2;
                let mut best_sil = f64::NEG_INFINITY;
                for k in 2..=MAX_TREND_CLUSTERS.min(n) {
                    let clustering = kmeans_cluster(&points, k, TREND_KMEANS_SEED)?;
                    let sil = crate::cluster::silhouette(&clustering, &dist)?;
                    if sil > best_sil {
                        best_sil = sil;
                        best_k = k;
                    }
                }
                best_k
            }
        }
    };

    let assignments: Vec<Vec<String>> = if chosen_k == 1 || n == 1 {
        vec![points.iter().map(|p| p.model_id.clone()).collect()]
    } else {
        kmeans_cluster(&points, chosen_k, TREND_KMEANS_SEED)?.clusters
    };

    let mut trends: Vec<Trend> = assignments
        .into_iter()
        .map(|members| {
            let member_traces: Vec<&&TrainingTrace> = eligible
                .iter()
                .filter(|tr| members.contains(&tr.dataset_id))
                .collect();
            let val_mean = member_traces
                .iter()
                .map(|tr| tr.stage_val[t - 1])
                .sum::<f64>()
                / member_traces.len() as f64;
            let test_mean = member_traces.iter().map(|tr| tr.final_test).sum::<f64>()
                / member_traces.len() as f64;
            Trend {
                val_mean,
                test_mean,
                members,
            }
        })
        .collect();
    trends.sort_by(|a, b| {
        b.val_mean
            .partial_cmp(&a.val_mean)
            .expect("finite val means")
            .then(b.test_mean.partial_cmp(&a.test_mean).expect("finite test means"))
            .then(a.members.cmp(&b.members))
    });

    Ok(TrendSet {
        model_id: model_id.into(),
        stage: t,
        trends,
    })
}

fn scalar_distances(points: &[ModelVector]) -> Result<crate::similarity::DistanceMatrix> {
    distance_matrix(points, 1)
}

/// Index of the trend whose mean validation accuracy is closest to the
/// observed value; equidistant ties go to the trend with the larger mean
/// test accuracy.
pub fn match_trend(trendset: &TrendSet, val_t: f64) -> usize {
    let mut best = 0usize;
    let mut best_dist = f64::INFINITY;
    for (i, trend) in trendset.trends.iter().enumerate() {
        let dist = (trend.val_mean - val_t).abs();
        let better = dist < best_dist
            || (dist == best_dist && trend.test_mean > trendset.trends[best].test_mean);
        if better {
            best = i;
            best_dist = dist;
        }
    }
    best
}

/// Predicted final test accuracy: the mean final test of the matched trend.
pub fn predict_final(trendset: &TrendSet, val_t: f64) -> f64 {
    trendset.trends[match_trend(trendset, val_t)].test_mean
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn trace(dataset: &str, vals: &[f64], final_test: f64) -> TrainingTrace {
        TrainingTrace {
            model_id: "m".into(),
            dataset_id: dataset.into(),
            stage_val: vals.to_vec(),
            final_test,
            stage_len_steps: 100,
            epochs_per_stage: 1.0,
        }
    }

    /// Exhaustive oracle: best partition of scalars into c contiguous groups
    /// (sorted order) minimizing total within-group variance. Returns group
    /// means.
    fn optimal_1d_partition(values: &[f64], c: usize) -> Vec<Vec<f64>> {
        let mut sorted = values.to_vec();
        sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let n = sorted.len();
        let sse = |slice: &[f64]| -> f64 {
            let mean = slice.iter().sum::<f64>() / slice.len() as f64;
            slice.iter().map(|x| (x - mean) * (x - mean)).sum()
        };
        // Enumerate all split-point combinations.
        fn splits(n: usize, c: usize) -> Vec<Vec<usize>> {
            if c == 1 {
                return vec![vec![n]];
            }
            let mut out = Vec::new();
            for first in 1..=(n - c + 1) {
                for rest in splits(n - first, c - 1) {
                    let mut v = vec![first];
                    v.extend(rest);
                    out.push(v);
                }
            }
            out
        }
        let best = splits(n, c)
            .into_iter()
            .min_by(|a, b| {
                let cost = |sizes: &Vec<usize>| {
                    let mut start = 0;
                    let mut total = 0.0;
                    for &s in sizes {
                        total += sse(&sorted[start..start + s]);
                        start += s;
                    }
                    total
                };
                cost(a).partial_cmp(&cost(b)).unwrap()
            })
            .unwrap();
        let mut start = 0;
        best.into_iter()
            .map(|s| {
                let group = sorted[start..start + s].to_vec();
                start += s;
                group
            })
            .collect()
    }

    #[test]
    fn two_regime_mining_matches_exhaustive_oracle() {
        let traces = vec![
            trace("d0", &[0.80], 0.85),
            trace("d1", &[0.82], 0.87),
            trace("d2", &[0.50], 0.55),
            trace("d3", &[0.52], 0.57),
        ];
        let ts = mine_trends("m", &traces, 1, TrendCount::Fixed(2)).unwrap();
        assert_eq!(ts.trends.len(), 2);
        assert!((ts.trends[0].val_mean - 0.81).abs() < 1e-12);
        assert!((ts.trends[0].test_mean - 0.86).abs() < 1e-12);
        assert!((ts.trends[1].val_mean - 0.51).abs() < 1e-12);
        assert!((ts.trends[1].test_mean - 0.56).abs() < 1e-12);

        let oracle = optimal_1d_partition(&[0.80, 0.82, 0.50, 0.52], 2);
        let oracle_means: Vec<f64> = oracle
            .iter()
            .map(|g| g.iter().sum::<f64>() / g.len() as f64)
            .collect();
        assert!((oracle_means[0] - 0.51).abs() < 1e-12);
        assert!((oracle_means[1] - 0.81).abs() < 1e-12);
    }

    #[test]
    fn auto_count_recovers_two_regimes() {
        let traces = vec![
            trace("d0", &[0.80], 0.85),
            trace("d1", &[0.82], 0.87),
            trace("d2", &[0.50], 0.55),
            trace("d3", &[0.52], 0.57),
        ];
        let ts = mine_trends("m", &traces, 1, TrendCount::Auto).unwrap();
        assert_eq!(ts.trends.len(), 2);
        assert_eq!(ts.trends[0].members, vec!["d0", "d1"]);
    }

    #[test]
    fn single_trace_single_trend() {
        let traces = vec![trace("d0", &[0.6, 0.7], 0.75)];
        let ts = mine_trends("m", &traces, 2, TrendCount::Auto).unwrap();
        assert_eq!(ts.trends.len(), 1);
        assert_eq!(ts.trends[0].val_mean, 0.7);
        assert_eq!(ts.trends[0].test_mean, 0.75);
    }

    #[test]
    fn identical_values_collapse_to_one_trend() {
        let traces: Vec<TrainingTrace> = (0..5)
            .map(|i| trace(&format!("d{i}"), &[0.6], 0.7))
            .collect();
        for c in [TrendCount::Auto, TrendCount::Fixed(2), TrendCount::Fixed(4)] {
            let ts = mine_trends("m", &traces, 1, c).unwrap();
            assert_eq!(ts.trends.len(), 1, "count {c:?}");
            assert_eq!(ts.trends[0].members.len(), 5);
        }
    }

    #[test]
    fn short_traces_excluded_and_error_when_none() {
        let traces = vec![trace("d0", &[0.5], 0.6), trace("d1", &[0.5, 0.6], 0.6)];
        let ts = mine_trends("m", &traces, 2, TrendCount::Auto).unwrap();
        assert_eq!(ts.trends[0].members, vec!["d1"]);
        assert!(matches!(
            mine_trends("m", &traces, 3, TrendCount::Auto),
            Err(Error::NoEligibleTrace { .. })
        ));
    }

    #[test]
    fn matching_picks_nearest_trend() {
        let ts = TrendSet {
            model_id: "m".into(),
            stage: 1,
            trends: vec![
                Trend { val_mean: 0.81, test_mean: 0.86, members: vec![] },
                Trend { val_mean: 0.51, test_mean: 0.56, members: vec![] },
            ],
        };
        assert_eq!(match_trend(&ts, 0.79), 0);
        assert_eq!(match_trend(&ts, 0.51), 1);
        assert_eq!(predict_final(&ts, 0.79), 0.86);
    }

    #[test]
    fn equidistant_tie_goes_to_higher_test_mean() {
        let ts = TrendSet {
            model_id: "m".into(),
            stage: 1,
            trends: vec![
                Trend { val_mean: 0.7, test_mean: 0.6, members: vec![] },
                Trend { val_mean: 0.5, test_mean: 0.9, members: vec![] },
            ],
        };
        // 0.6 is equidistant from both trend means.
        assert_eq!(match_trend(&ts, 0.6), 1);
        assert_eq!(predict_final(&ts, 0.6), 0.9);
    }

    #[test]
    fn single_trend_prediction_ignores_val() {
        let ts = TrendSet::degenerate("m", 1, 0.5, 0.77);
        for val in [0.0, 0.3, 0.9, 1.0] {
            assert_eq!(predict_final(&ts, val), 0.77);
        }
    }

    fn two_regime_traces(seed: u64, n: usize) -> Vec<TrainingTrace> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n)
            .map(|i| {
                let high = i % 2 == 0;
                let base_val: f64 = if high { 0.8 } else { 0.5 };
                let base_test: f64 = if high { 0.85 } else { 0.55 };
                trace(
                    &format!("d{i}"),
                    &[(base_val + rng.random_range(-0.02..0.02)).clamp(0.0, 1.0)],
                    (base_test + rng.random_range(-0.02..0.02)).clamp(0.0, 1.0),
                )
            })
            .collect()
    }

    #[test]
    fn loo_cluster_prediction_beats_global_mean() {
        // Leave-one-out on two-regime traces: the matched-trend predictor
        // must beat predicting the global mean of final tests.
        let mut cluster_wins = 0;
        for seed in 0..50u64 {
            let traces = two_regime_traces(seed, 10);
            let mut cluster_err = 0.0;
            let mut mean_err = 0.0;
            for held in 0..traces.len() {
                let rest: Vec<TrainingTrace> = traces
                    .iter()
                    .enumerate()
                    .filter(|(i, _)| *i != held)
                    .map(|(_, t)| t.clone())
                    .collect();
                let ts = mine_trends("m", &rest, 1, TrendCount::Fixed(2)).unwrap();
                let actual = traces[held].final_test;
                let predicted = predict_final(&ts, traces[held].stage_val[0]);
                cluster_err += (predicted - actual).abs() / actual;
                let global = rest.iter().map(|t| t.final_test).sum::<f64>() / rest.len() as f64;
                mean_err += (global - actual).abs() / actual;
            }
            if cluster_err < mean_err {
                cluster_wins += 1;
            }
        }
        assert!(cluster_wins >= 48, "cluster predictor won only {cluster_wins}/50");
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]
        #[test]
        fn trends_partition_eligible_datasets(seed in 0u64..500, c in 1usize..5) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let traces: Vec<TrainingTrace> = (0..8)
                .map(|i| trace(&format!("d{i}"), &[rng.random_range(0.0..1.0)], rng.random_range(0.0..1.0)))
                .collect();
            let ts = mine_trends("m", &traces, 1, TrendCount::Fixed(c)).unwrap();
            let mut members: Vec<String> = ts.trends.iter().flat_map(|t| t.members.clone()).collect();
            members.sort();
            let mut expected: Vec<String> = (0..8).map(|i| format!("d{i}")).collect();
            expected.sort();
            prop_assert_eq!(members, expected);
        }

        #[test]
        fn prediction_within_matched_member_range(seed in 0u64..500, val in 0.0f64..1.0) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let traces: Vec<TrainingTrace> = (0..6)
                .map(|i| trace(&format!("d{i}"), &[rng.random_range(0.0..1.0)], rng.random_range(0.0..1.0)))
                .collect();
            let ts = mine_trends("m", &traces, 1, TrendCount::Fixed(3)).unwrap();
            let idx = match_trend(&ts, val);
            let members = &ts.trends[idx].members;
            let tests: Vec<f64> = traces
                .iter()
                .filter(|t| members.contains(&t.dataset_id))
                .map(|t| t.final_test)
                .collect();
            let pred = predict_final(&ts, val);
            let min = tests.iter().cloned().fold(f64::INFINITY, f64::min);
            let max = tests.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            prop_assert!(pred >= min - 1e-12 && pred <= max + 1e-12);
        }
    }
}
