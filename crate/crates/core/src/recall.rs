//! Coarse recall: combine average benchmark accuracy with normalized proxy
//! scores into a recall score per model, propagate proxies to singleton
//! clusters through model similarity, and return the top-K candidates.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::cluster::ModelClustering;
use crate::error::{Error, Result};
use crate::leep::ProxyScore;
use crate::repo::PerformanceMatrix;
use crate::similarity::{pair_similarity, ModelVector};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecallEntry {
    pub model_id: String,
    pub score: f64,
    pub cluster_id: usize,
    pub is_singleton: bool,
}

/// Ranked recall result. `proxy_evals` is exactly the number of non-singleton
/// clusters: proxies are never computed for singletons or non-representative
/// members.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecallResult {
    pub ranked: Vec<RecallEntry>,
    pub proxy_evals: usize,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
}

impl RecallResult {
    /// First K ranked model ids.
    pub fn top_k(&self, k: usize) -> Result<Vec<String>> {
        if k == 0 || k > self.ranked.len() {
            return Err(Error::KTooLarge {
                k,
                n: self.ranked.len(),
            });
        }
        Ok(self.ranked[..k].iter().map(|e| e.model_id.clone()).collect())
    }

    /// CSV lines `rank,model_id,score,cluster_id,is_singleton`, 1-based rank.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("rank,model_id,score,cluster_id,is_singleton\n");
        for (i, e) in self.ranked.iter().enumerate() {
            out.push_str(&format!(
                "{},{},{},{},{}\n",
                i + 1,
                e.model_id,
                e.score,
                e.cluster_id,
                e.is_singleton
            ));
        }
        out
    }
}

/// Computes recall scores for every model.
///
/// Members of non-singleton clusters score acc(m) times the normalized proxy
/// of their cluster's representative. Singletons score acc(m) times the
/// similarity-weighted mean of all non-singleton representatives' proxies.
/// `proxies` must carry a normalized score for each non-singleton
/// representative; `k_sim` is the top-k parameter of the similarity.
pub fn recall_scores(
    matrix: &PerformanceMatrix,
    clustering: &ModelClustering,
    representatives: &[String],
    proxies: &[ProxyScore],
    k_sim: usize,
) -> Result<RecallResult> {
    if representatives.len() != clustering.n_clusters() {
        return Err(Error::InvalidConfig {
            detail: format!(
                "{} representatives for {} clusters",
                representatives.len(),
                clustering.n_clusters()
            ),
        });
    }
    let non_singleton = clustering.non_singleton_indices();
    let has_singletons = (0..clustering.n_clusters()).any(|c| clustering.is_singleton(c));
    if has_singletons && non_singleton.is_empty() {
        return Err(Error::NoPropagationSource);
    }

    let proxy_of = |model_id: &str| -> Result<f64> {
        proxies
            .iter()
            .find(|p| p.model_id == model_id)
            .and_then(|p| p.normalized)
            .ok_or_else(|| Error::MissingProxy {
                model_id: model_id.into(),
            })
    };

    // Proxy per non-singleton cluster, keyed by cluster index.
    let mut cluster_proxy: BTreeMap<usize, f64> = BTreeMap::new();
    for &c in &non_singleton {
        cluster_proxy.insert(c, proxy_of(&representatives[c])?);
    }

    let mut warnings = Vec::new();
    let mut ranked = Vec::new();
    for (c, members) in clustering.clusters.iter().enumerate() {
        let singleton = members.len() == 1;
        for model_id in members {
            let acc = matrix.model_avg_acc(model_id)?;
            let score = if !singleton {
                acc * cluster_proxy[&c]
            } else {
                let vector = ModelVector::from_matrix(matrix, model_id)?;
                let mut total = 0.0;
                for &nc in &non_singleton {
                    let rep = &representatives[nc];
                    let rep_vector = ModelVector::from_matrix(matrix, rep)?;
                    let sim = match pair_similarity(&vector, &rep_vector, k_sim) {
                        Ok(s) => s,
                        Err(Error::EmptyIntersection { .. }) => {
                            warnings.push(format!(
                                "singleton {model_id} shares no benchmark dimension with \
                                 representative {rep}; similarity term set to 0"
                            ));
                            0.0
                        }
                        Err(e) => return Err(e),
                    };
                    total += sim * cluster_proxy[&nc];
                }
                acc * total / non_singleton.len() as f64
            };
            debug_assert!((0.0..=1.0).contains(&score));
            ranked.push(RecallEntry {
                model_id: model_id.clone(),
                score,
                cluster_id: c,
                is_singleton: singleton,
            });
        }
    }

    ranked.sort_by(|a, b| {
        b.score
            .partial_cmp(&a.score)
            .expect("finite recall scores")
            .then_with(|| a.model_id.cmp(&b.model_id))
    });

    Ok(RecallResult {
        ranked,
        proxy_evals: non_singleton.len(),
        warnings,
    })
}
