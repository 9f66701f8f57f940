//! Lloyd's K-means with k-means++ seeding.
//!
//! A single seeded initialization per call (no restarts); callers that want
//! model selection sweep seeds or k explicitly. Empty clusters arising during
//! an update are reseeded to the point farthest from the empty cluster's
//! previous centroid, keeping k constant.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::cluster::ClusterAssignment;
use crate::dataio::Dataset;
use crate::error::{Error, Result};
use crate::matrix::{sq_dist, Matrix};

/// Fitted K-means model.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KMeansModel {
    /// k x m centroid matrix.
    pub centroids: Matrix,
    /// Sum over rows of squared Euclidean distance to the nearest centroid.
    pub inertia: f64,
    /// Lloyd iterations executed before convergence or the iteration cap.
    pub iterations_run: usize,
    /// Inertia recorded after every assignment step (non-increasing); the
    /// final entry equals `inertia`.
    pub inertia_trace: Vec<f64>,
}

/// Fit K-means with `k` clusters.
///
/// Deterministic for a fixed seed: k-means++ initialization, nearest-centroid
/// assignment with ties broken toward the lower centroid index, and Lloyd
/// updates until the largest centroid shift drops below `tol` or `max_iter`
/// iterations have run.
pub fn kmeans_fit(
    data: &Dataset,
    k: usize,
    seed: u64,
    max_iter: usize,
    tol: f64,
) -> Result<(KMeansModel, ClusterAssignment)> {
    let n = data.n_rows();
    if k == 0 {
        return Err(Error::Contract("k must be at least 1".into()));
    }
    if k > n {
        return Err(Error::Contract(format!(
            "k = {k} exceeds the number of rows ({n})"
        )));
    }
    let points = data.features();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut centroids = plus_plus_init(points, k, &mut rng);

    let mut labels = vec![0i64; n];
    let mut inertia_trace = Vec::new();
    let mut iterations_run = 0usize;

    for _ in 0..max_iter.max(1) {
        iterations_run += 1;

        // Assignment step: nearest centroid, lowest index on ties.
        let mut inertia = 0.0;
        for (row, label) in labels.iter_mut().enumerate() {
            let (best, d) = nearest_centroid(points.row(row), &centroids);
            *label = best as i64;
            inertia += d;
        }
        inertia_trace.push(inertia);

        // Update step: means of each cluster's members.
        let m = points.n_cols();
        let mut sums = Matrix::zeros(k, m);
        let mut counts = vec![0usize; k];
        for (row, &label) in labels.iter().enumerate() {
            counts[label as usize] += 1;
            let sum_row = sums.row_mut(label as usize);
            for (s, v) in sum_row.iter_mut().zip(points.row(row)) {
                *s += v;
            }
        }
        let mut new_centroids = Matrix::zeros(k, m);
        for c in 0..k {
            if counts[c] > 0 {
                for col in 0..m {
                    new_centroids.set(c, col, sums.get(c, col) / counts[c] as f64);
                }
            }
        }
        // Reseed clusters that lost all members: move each to the point
        // farthest from the cluster's previous centroid. Only points whose
        // current cluster keeps at least one other member are eligible, so a
        // reseed can never orphan a different cluster; such a point always
        // exists because n >= k.
        for c in 0..k {
            if counts[c] > 0 {
                continue;
            }
            let old = centroids.row(c).to_vec();
            let mut best_row = usize::MAX;
            let mut best_d = f64::NEG_INFINITY;
            for row in 0..n {
                if counts[labels[row] as usize] <= 1 {
                    continue;
                }
                let d = sq_dist(points.row(row), &old);
                if d > best_d {
                    best_d = d;
                    best_row = row;
                }
            }
            counts[labels[best_row] as usize] -= 1;
            counts[c] = 1;
            labels[best_row] = c as i64;
            new_centroids.row_mut(c).copy_from_slice(points.row(best_row));
        }

        let shift = (0..k)
            .map(|c| sq_dist(centroids.row(c), new_centroids.row(c)).sqrt())
            .fold(0.0f64, f64::max);
        centroids = new_centroids;
        if shift < tol {
            break;
        }
    }

    // Final inertia consistent with the returned labels and centroids. Any
    // label forced by reseeding points at its own centroid (distance zero),
    // so this equals the nearest-centroid inertia.
    let inertia: f64 = labels
        .iter()
        .enumerate()
        .map(|(row, &label)| sq_dist(points.row(row), centroids.row(label as usize)))
        .sum();
    inertia_trace.push(inertia);

    let model = KMeansModel {
        centroids,
        inertia,
        iterations_run,
        inertia_trace,
    };
    let assignment = ClusterAssignment::from_labels(labels, false)?;
    Ok((model, assignment))
}

/// k-means++ seeding: first centroid uniform, each further centroid drawn
/// with probability proportional to squared distance from the nearest centroid
/// chosen so far. Falls back to the lowest-index unchosen point when all
/// remaining distances are zero (duplicate points).
fn plus_plus_init(points: &Matrix, k: usize, rng: &mut ChaCha8Rng) -> Matrix {
    let n = points.n_rows();
    let m = points.n_cols();
    let mut centroids = Matrix::zeros(k, m);
    let mut chosen = vec![false; n];

    let first = rng.gen_range(0..n);
    chosen[first] = true;
    centroids.row_mut(0).copy_from_slice(points.row(first));

    let mut best_sq = vec![f64::INFINITY; n];
    for c in 1..k {
        let prev = centroids.row(c - 1).to_vec();
        let mut total = 0.0;
        for row in 0..n {
            let d = sq_dist(points.row(row), &prev);
            if d < best_sq[row] {
                best_sq[row] = d;
            }
            if !chosen[row] {
                total += best_sq[row];
            }
        }
        let pick = if total > 0.0 {
            let target: f64 = rng.gen_range(0.0..total);
            let mut acc = 0.0;
            let mut pick = None;
            for row in 0..n {
                if chosen[row] {
                    continue;
                }
                acc += best_sq[row];
                if acc > target {
                    pick = Some(row);
                    break;
                }
            }
            // Floating-point accumulation may leave the target unreached;
            // take the last eligible point.
            pick.unwrap_or_else(|| (0..n).rev().find(|&r| !chosen[r]).expect("k <= n"))
        } else {
            (0..n).find(|&r| !chosen[r]).expect("k <= n")
        };
        chosen[pick] = true;
        centroids.row_mut(c).copy_from_slice(points.row(pick));
    }
    centroids
}

/// Index of and squared distance to the nearest centroid (lowest index wins
/// ties).
fn nearest_centroid(point: &[f64], centroids: &Matrix) -> (usize, f64) {
    let mut best = 0usize;
    let mut best_d = f64::INFINITY;
    for c in 0..centroids.n_rows() {
        let d = sq_dist(point, centroids.row(c));
        if d < best_d {
            best_d = d;
            best = c;
        }
    }
    (best, best_d)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataio::generate_toy_telemetry;

    fn four_points() -> Dataset {
        Dataset::from_features(
            &["x", "y"],
            Matrix::from_rows(&[
                vec![0.0, 0.0],
                vec![0.0, 1.0],
                vec![10.0, 0.0],
                vec![10.0, 1.0],
            ])
            .unwrap(),
        )
        .unwrap()
    }

    #[test]
    fn four_point_example_recovers_known_optimum() {
        let data = four_points();
        let (model, assignment) = kmeans_fit(&data, 2, 0, 100, 1e-9).unwrap();
        assert!((model.inertia - 1.0).abs() < 1e-12, "inertia {}", model.inertia);
        // Centroids are {(0, 0.5), (10, 0.5)} in some order.
        let mut rows: Vec<Vec<f64>> = (0..2).map(|c| model.centroids.row(c).to_vec()).collect();
        rows.sort_by(|a, b| a[0].partial_cmp(&b[0]).unwrap());
        assert_eq!(rows[0], vec![0.0, 0.5]);
        assert_eq!(rows[1], vec![10.0, 0.5]);
        let l = assignment.labels();
        assert_eq!(l[0], l[1]);
        assert_eq!(l[2], l[3]);
        assert_ne!(l[0], l[2]);
    }

    #[test]
    fn k_equals_n_gives_zero_inertia() {
        let data = four_points();
        let (model, assignment) = kmeans_fit(&data, 4, 7, 100, 1e-9).unwrap();
        assert_eq!(model.inertia, 0.0);
        assert_eq!(assignment.n_clusters(), 4);
        let mut sorted = assignment.labels().to_vec();
        sorted.sort_unstable();
        assert_eq!(sorted, vec![0, 1, 2, 3]);
    }

    #[test]
    fn parameter_errors() {
        let data = four_points();
        assert!(kmeans_fit(&data, 0, 0, 10, 1e-9).is_err());
        assert!(kmeans_fit(&data, 5, 0, 10, 1e-9).is_err());
    }

    #[test]
    fn inertia_trace_is_non_increasing_and_recomputable() {
        let (data, _) = generate_toy_telemetry(5, 120, 3, 4, 6.0).unwrap();
        let (model, assignment) = kmeans_fit(&data, 3, 13, 100, 1e-9).unwrap();
        for pair in model.inertia_trace.windows(2) {
            assert!(
                pair[1] <= pair[0] + 1e-9,
                "inertia increased: {} -> {}",
                pair[0],
                pair[1]
            );
        }
        assert_eq!(*model.inertia_trace.last().unwrap(), model.inertia);

        // Recompute inertia from centroids + nearest assignment.
        let mut recomputed = 0.0;
        for row in 0..data.n_rows() {
            let (_, d) = nearest_centroid(data.features().row(row), &model.centroids);
            recomputed += d;
        }
        let rel = (recomputed - model.inertia).abs() / model.inertia.max(1e-300);
        assert!(rel < 1e-9, "recomputed {recomputed} vs {}", model.inertia);
        assert_eq!(assignment.n_rows(), 120);
    }

    #[test]
    fn deterministic_for_fixed_seed() {
        let (data, _) = generate_toy_telemetry(6, 80, 2, 5, 8.0).unwrap();
        let a = kmeans_fit(&data, 2, 99, 100, 1e-9).unwrap();
        let b = kmeans_fit(&data, 2, 99, 100, 1e-9).unwrap();
        assert_eq!(a.0, b.0);
        assert_eq!(a.1, b.1);
    }

    #[test]
    fn duplicate_points_still_yield_k_clusters() {
        // Four identical points, k=3: every cluster must still be non-empty.
        let data = Dataset::from_features(
            &["x"],
            Matrix::from_rows(&[vec![1.0], vec![1.0], vec![1.0], vec![1.0]]).unwrap(),
        )
        .unwrap();
        let (model, assignment) = kmeans_fit(&data, 3, 0, 50, 1e-9).unwrap();
        assert_eq!(assignment.n_clusters(), 3);
        assert_eq!(model.inertia, 0.0);
    }

    #[test]
    fn toy_blobs_recovered() {
        let (data, truth) = generate_toy_telemetry(1, 200, 2, 15, 10.0).unwrap();
        let (_, assignment) = kmeans_fit(&data, 2, 42, 200, 1e-9).unwrap();
        // Perfect recovery up to label swap on well-separated blobs.
        let l = assignment.labels();
        let t = truth.labels();
        let direct = l.iter().zip(t).filter(|(a, b)| a == b).count();
        let agreement = direct.max(l.len() - direct) as f64 / l.len() as f64;
        assert!(agreement >= 0.99, "agreement {agreement}");
    }
}
