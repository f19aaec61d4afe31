//! Model clustering over performance vectors: agglomerative hierarchical
//! clustering with average linkage, k-means with deterministic seeding,
//! silhouette scoring, and per-cluster representative selection.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::repo::PerformanceMatrix;
use crate::similarity::{DistanceMatrix, ModelVector};

pub const KMEANS_MAX_ITERS: usize = 100;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClusterMethod {
    Hierarchical,
    Kmeans,
    External,
}

/// How to cut the dendrogram: a fixed distance threshold, or the cut that
/// maximizes silhouette over all merge heights.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CutRule {
    Threshold(f64),
    Auto,
}

/// A partition of the model set. Members within a cluster are sorted by id;
/// clusters are ordered by their smallest member id.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelClustering {
    pub method: ClusterMethod,
    pub clusters: Vec<Vec<String>>,
}

impl ModelClustering {
    pub fn new(method: ClusterMethod, mut clusters: Vec<Vec<String>>) -> Self {
        for c in &mut clusters {
            c.sort();
        }
        clusters.retain(|c| !c.is_empty());
        clusters.sort();
        ModelClustering { method, clusters }
    }

    pub fn n_clusters(&self) -> usize {
        self.clusters.len()
    }

    pub fn cluster_of(&self, model_id: &str) -> Option<usize> {
        self.clusters
            .iter()
            .position(|c| c.iter().any(|m| m == model_id))
    }

    pub fn is_singleton(&self, cluster: usize) -> bool {
        self.clusters[cluster].len() == 1
    }

    /// Indices of clusters with more than one member.
    pub fn non_singleton_indices(&self) -> Vec<usize> {
        (0..self.clusters.len())
            .filter(|&i| self.clusters[i].len() > 1)
            .collect()
    }

    /// Checks the partition property against an expected id universe.
    pub fn validate_partition(&self, ids: &[String]) -> Result<()> {
        let mut seen = BTreeMap::new();
        for c in &self.clusters {
            for m in c {
                if seen.insert(m.clone(), ()).is_some() {
                    return Err(Error::DuplicateId { id: m.clone() });
                }
            }
        }
        for id in ids {
            if !seen.contains_key(id) {
                return Err(Error::UnknownId {
                    id: id.clone(),
                    context: "clustering does not cover model".into(),
                });
            }
        }
        if seen.len() != ids.len() {
            return Err(Error::InvalidParams {
                detail: format!(
                    "clustering covers {} models, expected {}",
                    seen.len(),
                    ids.len()
                ),
            });
        }
        Ok(())
    }
}

/// One merge step of the dendrogram.
struct Merge {
    height: f64,
    /// Partition after this merge, as member-index sets.
    partition: Vec<Vec<usize>>,
}

/// Agglomerative clustering with average linkage (UPGMA). Tied merge heights
/// are broken by the lexicographically smallest member ids of the candidate
/// pair, so runs are deterministic.
pub fn hierarchical_cluster(distances: &DistanceMatrix, cut: CutRule) -> Result<ModelClustering> {
    let n = distances.len();
    if n < 2 {
        return Err(Error::TooFewModels { needed: 2, got: n });
    }

    // Active clusters: member indices plus the smallest member id for
    // tie-breaking. Cluster-to-cluster distances kept as a map keyed by
    // active-slot pairs, updated with the UPGMA recurrence.
    let mut members: Vec<Vec<usize>> = (0..n).map(|i| vec![i]).collect();
    let mut min_ids: Vec<String> = distances.ids.clone();
    let mut active: Vec<bool> = vec![true; n + (n - 1)];
    active.truncate(n);
    let mut dist: BTreeMap<(usize, usize), f64> = BTreeMap::new();
    for i in 0..n {
        for j in (i + 1)..n {
            dist.insert((i, j), distances.get(i, j));
        }
    }

    let mut merges: Vec<Merge> = Vec::with_capacity(n - 1);
    let snapshot = |members: &Vec<Vec<usize>>, active: &Vec<bool>| -> Vec<Vec<usize>> {
        members
            .iter()
            .zip(active.iter())
            .filter(|(_, a)| **a)
            .map(|(m, _)| m.clone())
            .collect()
    };

    for _ in 0..(n - 1) {
        // Pick the closest active pair; ties by (min id, max id) of the pair.
        let mut best: Option<((usize, usize), f64)> = None;
        for (&(i, j), &d) in &dist {
            if !active[i] || !active[j] {
                continue;
            }
            let key_of = |i: usize, j: usize| {
                let (a, b) = if min_ids[i] <= min_ids[j] {
                    (&min_ids[i], &min_ids[j])
                } else {
                    (&min_ids[j], &min_ids[i])
                };
                (a.clone(), b.clone())
            };
            let better = match &best {
                None => true,
                Some(((bi, bj), bd)) => {
                    d < *bd - 1e-15
                        || ((d - *bd).abs() <= 1e-15 && key_of(i, j) < key_of(*bi, *bj))
                }
            };
            if better {
                best = Some(((i, j), d));
            }
        }
        let ((i, j), height) = best.expect("at least one active pair");

        // Merge j into a fresh slot alongside i.
        let new_slot = active.len();
        active[i] = false;
        active[j] = false;
        active.push(true);
        let mut merged = members[i].clone();
        merged.extend(&members[j]);
        merged.sort_unstable();
        let size_i = members[i].len() as f64;
        let size_j = members[j].len() as f64;
        members.push(merged);
        min_ids.push(if min_ids[i] <= min_ids[j] {
            min_ids[i].clone()
        } else {
            min_ids[j].clone()
        });

        // UPGMA distance update to every other active cluster.
        let others: Vec<usize> = (0..new_slot).filter(|&s| active[s]).collect();
        for s in others {
            let d_i = *dist
                .get(&(i.min(s), i.max(s)))
                .expect("distance to merged cluster");
            let d_j = *dist
                .get(&(j.min(s), j.max(s)))
                .expect("distance to merged cluster");
            let d_new = (size_i * d_i + size_j * d_j) / (size_i + size_j);
            dist.insert((s, new_slot), d_new);
        }

        merges.push(Merge {
            height,
            partition: snapshot(&members, &active),
        });
    }

    let to_clustering = |partition: &[Vec<usize>]| {
        ModelClustering::new(
            ClusterMethod::Hierarchical,
            partition
                .iter()
                .map(|c| c.iter().map(|&i| distances.ids[i].clone()).collect())
                .collect(),
        )
    };

    match cut {
        CutRule::Threshold(tau) => {
            // Keep merges strictly below the threshold; tau = 0 leaves every
            // model a singleton even when duplicates exist.
            let mut chosen: Vec<Vec<usize>> = (0..n).map(|i| vec![i]).collect();
            for m in &merges {
                if m.height < tau {
                    chosen = m.partition.clone();
                } else {
                    break;
                }
            }
            Ok(to_clustering(&chosen))
        }
        CutRule::Auto => {
            // Candidates: all-singletons plus the partition after each merge.
            // Highest silhouette wins; ties go to the coarser partition.
            let singletons: Vec<Vec<usize>> = (0..n).map(|i| vec![i]).collect();
            let mut best = to_clustering(&singletons);
            let mut best_sil = silhouette(&best, distances)?;
            for m in &merges {
                let cand = to_clustering(&m.partition);
                let sil = silhouette(&cand, distances)?;
                if sil >= best_sil {
                    best_sil = sil;
                    best = cand;
                }
            }
            Ok(best)
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct KMeansInfo {
    /// Within-cluster SSE recorded after each assignment pass.
    pub sse_history: Vec<f64>,
    pub iterations: usize,
}

/// Lloyd k-means on raw performance vectors with k-means++ seeding from
/// `seed`. Converges when assignments stabilize or after [`KMEANS_MAX_ITERS`]
/// iterations.
pub fn kmeans_cluster(
    vectors: &[ModelVector],
    k_clusters: usize,
    seed: u64,
) -> Result<ModelClustering> {
    kmeans_cluster_detailed(vectors, k_clusters, seed).map(|(c, _)| c)
}

pub fn kmeans_cluster_detailed(
    vectors: &[ModelVector],
    k_clusters: usize,
    seed: u64,
) -> Result<(ModelClustering, KMeansInfo)> {
    let n = vectors.len();
    if n == 0 || k_clusters == 0 || k_clusters > n {
        return Err(Error::InvalidParams {
            detail: format!("k_clusters {k_clusters} out of range for {n} vectors"),
        });
    }
    let dims: Vec<&str> = vectors[0].dims.iter().map(|(d, _)| d.as_str()).collect();
    for v in vectors {
        let vd: Vec<&str> = v.dims.iter().map(|(d, _)| d.as_str()).collect();
        if vd != dims {
            return Err(Error::DimensionMismatch {
                detail: format!(
                    "model {} has dimensions {:?}, expected {:?} (impute absent cells first)",
                    v.model_id, vd, dims
                ),
            });
        }
    }
    let points: Vec<Vec<f64>> = vectors
        .iter()
        .map(|v| v.dims.iter().map(|(_, x)| *x).collect())
        .collect();

    let sq_dist = |a: &[f64], b: &[f64]| -> f64 {
        a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
    };

    // k-means++ seeding.
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut centers: Vec<Vec<f64>> = Vec::with_capacity(k_clusters);
    centers.push(points[rng.random_range(0..n)].clone());
    while centers.len() < k_clusters {
        let d2: Vec<f64> = points
            .iter()
            .map(|p| {
                centers
                    .iter()
                    .map(|c| sq_dist(p, c))
                    .fold(f64::INFINITY, f64::min)
            })
            .collect();
        let total: f64 = d2.iter().sum();
        let next = if total > 0.0 {
            let mut draw = rng.random_range(0.0..total);
            let mut chosen = n - 1;
            for (i, w) in d2.iter().enumerate() {
                if draw < *w {
                    chosen = i;
                    break;
                }
                draw -= w;
            }
            chosen
        } else {
            // All points coincide with existing centers; take the first index
            // not yet used as a center.
            (0..n)
                .find(|&i| !centers.contains(&points[i]))
                .unwrap_or(centers.len())
        };
        centers.push(points[next].clone());
    }

    let assign = |centers: &[Vec<f64>]| -> (Vec<usize>, f64) {
        let mut assignment = vec![0usize; n];
        let mut sse = 0.0;
        for (i, p) in points.iter().enumerate() {
            let mut best = 0usize;
            let mut best_d = f64::INFINITY;
            for (c, center) in centers.iter().enumerate() {
                let d = sq_dist(p, center);
                if d < best_d {
                    best_d = d;
                    best = c;
                }
            }
            assignment[i] = best;
            sse += best_d;
        }
        (assignment, sse)
    };

    let (mut assignment, mut sse) = assign(&centers);
    let mut history = vec![sse];
    let mut iterations = 1;
    for _ in 1..KMEANS_MAX_ITERS {
        // Mean update; empty clusters are re-seeded at the point farthest
        // from its assigned center (lowest index on ties).
        let mut sums = vec![vec![0.0; dims.len()]; k_clusters];
        let mut counts = vec![0usize; k_clusters];
        for (i, &a) in assignment.iter().enumerate() {
            counts[a] += 1;
            for (s, x) in sums[a].iter_mut().zip(&points[i]) {
                *s += x;
            }
        }
        for c in 0..k_clusters {
            if counts[c] > 0 {
                for s in sums[c].iter_mut() {
                    *s /= counts[c] as f64;
                }
                centers[c] = sums[c].clone();
            } else {
                let far = (0..n)
                    .max_by(|&a, &b| {
                        let da = sq_dist(&points[a], &centers[assignment[a]]);
                        let db = sq_dist(&points[b], &centers[assignment[b]]);
                        da.partial_cmp(&db)
                            .expect("finite distances")
                            .then(b.cmp(&a))
                    })
                    .expect("nonempty points");
                centers[c] = points[far].clone();
            }
        }

        let (next_assignment, next_sse) = assign(&centers);
        history.push(next_sse);
        iterations += 1;
        let stable = next_assignment == assignment;
        assignment = next_assignment;
        sse = next_sse;
        if stable {
            break;
        }
    }
    let _ = sse;

    let mut groups: Vec<Vec<String>> = vec![Vec::new(); k_clusters];
    for (i, &a) in assignment.iter().enumerate() {
        groups[a].push(vectors[i].model_id.clone());
    }
    Ok((
        ModelClustering::new(ClusterMethod::Kmeans, groups),
        KMeansInfo {
            sse_history: history,
            iterations,
        },
    ))
}

/// Mean silhouette coefficient over all points. Singleton points contribute
/// 0; fewer than two clusters scores 0 by convention.
pub fn silhouette(clustering: &ModelClustering, distances: &DistanceMatrix) -> Result<f64> {
    if clustering.n_clusters() < 2 {
        return Ok(0.0);
    }
    let index_clusters: Vec<Vec<usize>> = clustering
        .clusters
        .iter()
        .map(|c| {
            c.iter()
                .map(|m| {
                    distances.index_of(m).ok_or_else(|| Error::UnknownId {
                        id: m.clone(),
                        context: "silhouette distance matrix".into(),
                    })
                })
                .collect::<Result<Vec<usize>>>()
        })
        .collect::<Result<Vec<_>>>()?;

    let mut total = 0.0;
    let mut count = 0usize;
    for (ci, cluster) in index_clusters.iter().enumerate() {
        for &i in cluster {
            count += 1;
            if cluster.len() < 2 {
                continue; // singleton contributes 0
            }
            let a = cluster
                .iter()
                .filter(|&&j| j != i)
                .map(|&j| distances.get(i, j))
                .sum::<f64>()
                / (cluster.len() - 1) as f64;
            let b = index_clusters
                .iter()
                .enumerate()
                .filter(|(cj, other)| *cj != ci && !other.is_empty())
                .map(|(_, other)| {
                    other.iter().map(|&j| distances.get(i, j)).sum::<f64>() / other.len() as f64
                })
                .fold(f64::INFINITY, f64::min);
            let denom = a.max(b);
            if denom > 0.0 {
                total += (b - a) / denom;
            }
        }
    }
    if count == 0 {
        return Ok(0.0);
    }
    Ok(total / count as f64)
}

/// Per cluster, the member with the highest average benchmark accuracy; ties
/// broken by lexicographically smallest id. Returned index-aligned with
/// `clustering.clusters`.
pub fn select_representative(
    clustering: &ModelClustering,
    matrix: &PerformanceMatrix,
) -> Result<Vec<String>> {
    clustering
        .clusters
        .iter()
        .map(|cluster| {
            let mut best: Option<(&String, f64)> = None;
            for m in cluster {
                let acc = matrix.model_avg_acc(m)?;
                best = match best {
                    None => Some((m, acc)),
                    Some((bm, bacc)) => {
                        if acc > bacc || (acc == bacc && m < bm) {
                            Some((m, acc))
                        } else {
                            Some((bm, bacc))
                        }
                    }
                };
            }
            Ok(best.expect("clusters are non-empty").0.clone())
        })
        .collect()
}

/// Export form of a clustering result.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusteringReport {
    pub method: ClusterMethod,
    pub clusters: Vec<ClusterEntry>,
    pub silhouette: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterEntry {
    pub members: Vec<String>,
    pub representative: String,
}

impl ClusteringReport {
    pub fn build(
        clustering: &ModelClustering,
        representatives: &[String],
        silhouette: f64,
    ) -> Self {
        ClusteringReport {
            method: clustering.method,
            clusters: clustering
                .clusters
                .iter()
                .zip(representatives)
                .map(|(members, rep)| ClusterEntry {
                    members: members.clone(),
                    representative: rep.clone(),
                })
                .collect(),
            silhouette,
        }
    }
}
