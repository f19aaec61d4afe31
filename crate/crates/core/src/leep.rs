//! Log expected empirical prediction: the average log-likelihood of a
//! target-label predictor built from the source model's output distribution
//! through an empirical joint/conditional table.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::repo::PredictionDump;

/// Transferability score of one model on the target task. `raw` is the
/// average log-likelihood (always <= 0); `normalized` is set by
/// [`normalize_scores`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProxyScore {
    pub model_id: String,
    pub raw: f64,
    pub normalized: Option<f64>,
}

impl ProxyScore {
    pub fn raw(model_id: impl Into<String>, raw: f64) -> Self {
        ProxyScore {
            model_id: model_id.into(),
            raw,
            normalized: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct LeepConfig {
    /// Optional lower bound on per-row likelihoods. Disabled by default: a
    /// zero likelihood is reported as an error, not clamped silently.
    pub likelihood_floor: Option<f64>,
}

/// Computes the score with the default configuration (no likelihood floor).
pub fn leep_score(dump: &PredictionDump) -> Result<f64> {
    leep_score_with(dump, &LeepConfig::default())
}

/// Computes the average log expected-empirical-prediction likelihood.
///
/// With source distributions theta(x_i) over z and target labels y_i:
/// joint(y,z) = mean_i theta(x_i)_z over rows with y_i = y, cond(y|z) =
/// joint(y,z)/marginal(z), and the score is mean_i log sum_z cond(y_i|z)
/// theta(x_i)_z. Source labels z with zero marginal mass are skipped; they
/// can only carry zero theta mass.
///
/// Expects a dump that satisfies [`PredictionDump::validate`]; the loaders
/// enforce this. For a valid dump every row contributes mass to its own
/// label's joint cell, so the likelihood is positive and the score finite.
/// A zero likelihood (possible only for out-of-contract dumps or extreme
/// underflow) is a domain error unless a floor is configured.
pub fn leep_score_with(dump: &PredictionDump, config: &LeepConfig) -> Result<f64> {
    if dump.rows.is_empty() {
        return Err(Error::InvalidParams {
            detail: format!("dump for {}: no rows", dump.target_dataset_id),
        });
    }
    let n = dump.rows.len();
    let z_count = dump.source_label_count;
    let y_count = dump.target_label_count();

    let mut joint = vec![vec![0.0f64; z_count]; y_count];
    for row in &dump.rows {
        for (z, p) in row.probs.iter().enumerate() {
            joint[row.label][z] += p;
        }
    }
    for row in joint.iter_mut() {
        for cell in row.iter_mut() {
            *cell /= n as f64;
        }
    }
    let marginal: Vec<f64> = (0..z_count).map(|z| (0..y_count).map(|y| joint[y][z]).sum()).collect();

    let mut total = 0.0;
    for (i, row) in dump.rows.iter().enumerate() {
        let mut likelihood = 0.0;
        for (z, p) in row.probs.iter().enumerate() {
            if marginal[z] > 0.0 {
                likelihood += joint[row.label][z] / marginal[z] * p;
            }
        }
        // Rows are accepted when they sum to 1 within tolerance; cap at 1 so
        // the score stays a log-probability.
        likelihood = likelihood.min(1.0);
        if let Some(floor) = config.likelihood_floor {
            likelihood = likelihood.max(floor);
        }
        if likelihood <= 0.0 {
            return Err(Error::ZeroLikelihood { row: i + 1 });
        }
        total += likelihood.ln();
    }
    Ok(total / n as f64)
}

/// Min-max normalization over the given score set: (x - min) / (max - min),
/// with every value mapped to 1.0 when max = min. Preserves the ordering of
/// the raw scores.
pub fn normalize_scores(scores: &[ProxyScore]) -> Result<Vec<ProxyScore>> {
    if scores.is_empty() {
        return Err(Error::EmptyScores);
    }
    let min = scores.iter().map(|s| s.raw).fold(f64::INFINITY, f64::min);
    let max = scores.iter().map(|s| s.raw).fold(f64::NEG_INFINITY, f64::max);
    Ok(scores
        .iter()
        .map(|s| ProxyScore {
            model_id: s.model_id.clone(),
            raw: s.raw,
            normalized: Some(if max == min {
                1.0
            } else {
                (s.raw - min) / (max - min)
            }),
        })
        .collect())
}
