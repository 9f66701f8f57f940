//! Agglomerative clustering with Ward linkage.
//!
//! Bottom-up merging that always joins the pair of clusters whose union
//! causes the smallest increase in total within-cluster sum of squares,
//! maintained with the Lance-Williams recurrence on squared Euclidean
//! distances (a naive O(n²)-memory pairwise scan; fine at desk scale). The
//! full merge tree is always built; the requested `k` only selects which
//! intermediate partition is returned.

use serde::{Deserialize, Serialize};

use crate::cluster::{compact_labels, ClusterAssignment};
use crate::dataio::Dataset;
use crate::error::{Error, Result};
use crate::matrix::sq_dist;

/// One merge step: clusters `cluster_a` and `cluster_b` joined at a cost of
/// `ward_cost` (the increase in total within-cluster sum of squares),
/// producing a cluster of `new_size` rows.
///
/// Cluster ids follow the usual linkage convention: input rows are clusters
/// `0..n-1` and the merge at step `t` creates cluster `n + t`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Merge {
    pub cluster_a: usize,
    pub cluster_b: usize,
    pub ward_cost: f64,
    pub new_size: usize,
}

/// Complete Ward merge history: exactly `n - 1` merges for `n` input rows,
/// with non-decreasing `ward_cost`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LinkageTree {
    pub merges: Vec<Merge>,
}

/// Fit Ward agglomerative clustering and cut the tree at exactly `k`
/// clusters.
///
/// Ties in the minimum merge cost break toward the smallest (a, b) slot pair
/// in ascending scan order, anchored at each cluster's lowest original row
/// index, so runs are bit-reproducible.
pub fn agglomerative_fit(data: &Dataset, k: usize) -> Result<(LinkageTree, ClusterAssignment)> {
    let n = data.n_rows();
    if k < 1 || k > n {
        return Err(Error::Contract(format!(
            "k must be in 1..={n}, got {k}"
        )));
    }
    let points = data.features();

    // Slot state: slot i starts as the singleton cluster of row i and, after
    // a merge, carries the merged cluster (the higher slot is retired).
    // dist[i][j] tracks twice the Ward merge cost between the clusters in
    // slots i and j; for singletons that is the squared Euclidean distance.
    let mut dist = vec![0.0f64; n * n];
    for i in 0..n {
        for j in (i + 1)..n {
            let d = sq_dist(points.row(i), points.row(j));
            dist[i * n + j] = d;
            dist[j * n + i] = d;
        }
    }
    let mut active = vec![true; n];
    let mut size = vec![1usize; n];
    let mut id: Vec<usize> = (0..n).collect();
    let mut slot_of_row: Vec<usize> = (0..n).collect();

    let mut merges = Vec::with_capacity(n.saturating_sub(1));
    let mut cut_labels: Option<Vec<i64>> = if k == n {
        Some(slot_snapshot(&slot_of_row))
    } else {
        None
    };

    for step in 0..n.saturating_sub(1) {
        // Find the cheapest active pair; first hit wins on ties.
        let mut best = (usize::MAX, usize::MAX);
        let mut best_d = f64::INFINITY;
        for i in 0..n {
            if !active[i] {
                continue;
            }
            for j in (i + 1)..n {
                if !active[j] {
                    continue;
                }
                let d = dist[i * n + j];
                if d < best_d {
                    best_d = d;
                    best = (i, j);
                }
            }
        }
        let (i, j) = best;
        let (size_i, size_j) = (size[i] as f64, size[j] as f64);
        merges.push(Merge {
            cluster_a: id[i].min(id[j]),
            cluster_b: id[i].max(id[j]),
            ward_cost: best_d / 2.0,
            new_size: size[i] + size[j],
        });

        // Lance-Williams update of the merged cluster's distances.
        for h in 0..n {
            if !active[h] || h == i || h == j {
                continue;
            }
            let size_h = size[h] as f64;
            let updated = ((size_i + size_h) * dist[i * n + h]
                + (size_j + size_h) * dist[j * n + h]
                - size_h * best_d)
                / (size_i + size_j + size_h);
            dist[i * n + h] = updated;
            dist[h * n + i] = updated;
        }
        active[j] = false;
        size[i] += size[j];
        id[i] = n + step;
        for slot in slot_of_row.iter_mut() {
            if *slot == j {
                *slot = i;
            }
        }

        let clusters_left = n - 1 - step;
        if clusters_left == k {
            cut_labels = Some(slot_snapshot(&slot_of_row));
        }
    }

    let labels = cut_labels.expect("cut recorded when active count reached k");
    let assignment = ClusterAssignment::from_labels(labels, false)?;
    Ok((LinkageTree { merges }, assignment))
}

/// Dense labels from the current row → slot mapping, numbered by first
/// occurrence in row order.
fn slot_snapshot(slot_of_row: &[usize]) -> Vec<i64> {
    let raw: Vec<i64> = slot_of_row.iter().map(|&s| s as i64).collect();
    compact_labels(&raw)
}
