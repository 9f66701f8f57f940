//! Independent reference implementations used by the integration suites to
//! cross-check the library's numerics. Everything here is written straight
//! from the textbook definitions, favoring clarity over speed, and shares no
//! code with the modules under test.

#![allow(dead_code)] // each integration test binary uses a different subset

use std::collections::BTreeMap;

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;

/// Euclidean distance between two points.
pub fn euclid(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

/// Rows per cluster, ignoring noise rows (label `-1`).
fn members_by_cluster(labels: &[i64]) -> BTreeMap<i64, Vec<usize>> {
    let mut map: BTreeMap<i64, Vec<usize>> = BTreeMap::new();
    for (row, &label) in labels.iter().enumerate() {
        if label >= 0 {
            map.entry(label).or_default().push(row);
        }
    }
    map
}

fn centroid(points: &[Vec<f64>], rows: &[usize]) -> Vec<f64> {
    let m = points[rows[0]].len();
    let mut c = vec![0.0; m];
    for &r in rows {
        for (ci, xi) in c.iter_mut().zip(&points[r]) {
            *ci += xi;
        }
    }
    for ci in &mut c {
        *ci /= rows.len() as f64;
    }
    c
}

/// Mean silhouette coefficient over non-noise rows, from the definition:
/// per row `s = (b - a) / max(a, b)` with `a` the mean distance to the row's
/// own cluster (self excluded) and `b` the smallest mean distance to any
/// other cluster. Singleton-cluster rows and all-zero-distance rows score 0.
pub fn oracle_silhouette(points: &[Vec<f64>], labels: &[i64]) -> f64 {
    let clusters = members_by_cluster(labels);
    let kept: usize = clusters.values().map(Vec::len).sum();
    let mut total = 0.0;
    for (&own, rows) in &clusters {
        for &i in rows {
            if rows.len() == 1 {
                continue;
            }
            let a = rows
                .iter()
                .filter(|&&j| j != i)
                .map(|&j| euclid(&points[i], &points[j]))
                .sum::<f64>()
                / (rows.len() - 1) as f64;
            let b = clusters
                .iter()
                .filter(|(&other, _)| other != own)
                .map(|(_, other_rows)| {
                    other_rows
                        .iter()
                        .map(|&j| euclid(&points[i], &points[j]))
                        .sum::<f64>()
                        / other_rows.len() as f64
                })
                .fold(f64::INFINITY, f64::min);
            if a.max(b) > 0.0 {
                total += (b - a) / a.max(b);
            }
        }
    }
    total / kept as f64
}

/// Calinski-Harabasz score from the definition:
/// `(B / (k - 1)) / (W / (n - k))` where `B` is the between-cluster and `W`
/// the within-cluster sum of squared Euclidean distances over non-noise rows.
pub fn oracle_calinski_harabasz(points: &[Vec<f64>], labels: &[i64]) -> f64 {
    let clusters = members_by_cluster(labels);
    let k = clusters.len();
    let all_rows: Vec<usize> = clusters.values().flatten().copied().collect();
    let n = all_rows.len();
    let overall = centroid(points, &all_rows);

    let mut between = 0.0;
    let mut within = 0.0;
    for rows in clusters.values() {
        let c = centroid(points, rows);
        let gap = euclid(&c, &overall);
        between += rows.len() as f64 * gap * gap;
        for &r in rows {
            let d = euclid(&points[r], &c);
            within += d * d;
        }
    }
    if within == 0.0 {
        return f64::INFINITY;
    }
    (between / (k - 1) as f64) / (within / (n - k) as f64)
}

/// Davies-Bouldin score from the definition: the mean over clusters of the
/// worst `(s_i + s_j) / d(c_i, c_j)` ratio, where `s_i` is the mean distance
/// of cluster `i`'s rows to its centroid.
pub fn oracle_davies_bouldin(points: &[Vec<f64>], labels: &[i64]) -> f64 {
    let clusters = members_by_cluster(labels);
    let ids: Vec<i64> = clusters.keys().copied().collect();
    let cents: Vec<Vec<f64>> = ids.iter().map(|id| centroid(points, &clusters[id])).collect();
    let spreads: Vec<f64> = ids
        .iter()
        .zip(&cents)
        .map(|(id, c)| {
            let rows = &clusters[id];
            rows.iter().map(|&r| euclid(&points[r], c)).sum::<f64>() / rows.len() as f64
        })
        .collect();

    let k = ids.len();
    let mut total = 0.0;
    for i in 0..k {
        let mut worst = 0.0f64;
        for j in 0..k {
            if i == j {
                continue;
            }
            let spread = spreads[i] + spreads[j];
            let gap = euclid(&cents[i], &cents[j]);
            let ratio = if spread == 0.0 {
                0.0
            } else if gap == 0.0 {
                f64::INFINITY
            } else {
                spread / gap
            };
            worst = worst.max(ratio);
        }
        total += worst;
    }
    total / k as f64
}

/// Adjusted Rand index between two labelings of the same rows, from the
/// pair-counting contingency formula. Labels are treated as opaque
/// categories; the score is 1 for identical partitions (up to renaming) and
/// hovers near 0 for independent ones.
pub fn adjusted_rand_index(a: &[i64], b: &[i64]) -> f64 {
    assert_eq!(a.len(), b.len(), "labelings must cover the same rows");
    let n = a.len();
    let mut table: BTreeMap<(i64, i64), f64> = BTreeMap::new();
    let mut rows: BTreeMap<i64, f64> = BTreeMap::new();
    let mut cols: BTreeMap<i64, f64> = BTreeMap::new();
    for (&x, &y) in a.iter().zip(b) {
        *table.entry((x, y)).or_default() += 1.0;
        *rows.entry(x).or_default() += 1.0;
        *cols.entry(y).or_default() += 1.0;
    }
    let choose2 = |x: f64| x * (x - 1.0) / 2.0;
    let sum_ij: f64 = table.values().map(|&v| choose2(v)).sum();
    let sum_a: f64 = rows.values().map(|&v| choose2(v)).sum();
    let sum_b: f64 = cols.values().map(|&v| choose2(v)).sum();
    let expected = sum_a * sum_b / choose2(n as f64);
    let max_index = 0.5 * (sum_a + sum_b);
    if (max_index - expected).abs() < 1e-15 {
        return 1.0; // both partitions trivial and equal
    }
    (sum_ij - expected) / (max_index - expected)
}

/// Log-density of a diagonal Gaussian, written independently of the library.
fn log_normal_diag(x: &[f64], mean: &[f64], var: &[f64]) -> f64 {
    let mut total = 0.0;
    for ((&xi, &mu), &v) in x.iter().zip(mean).zip(var) {
        total += -0.5 * (2.0 * std::f64::consts::PI * v).ln() - (xi - mu) * (xi - mu) / (2.0 * v);
    }
    total
}

/// Best state path by brute force: enumerate every one of the
/// `n_states^len` paths and keep the highest joint log-probability. Paths
/// are visited in lexicographic order and ties keep the first (smallest)
/// path. Returns the winning path and its log-probability.
pub fn exhaustive_state_path(
    initial: &[f64],
    transition: &[Vec<f64>],
    means: &[Vec<f64>],
    vars: &[Vec<f64>],
    observations: &[Vec<f64>],
) -> (Vec<usize>, f64) {
    let s = initial.len();
    let n = observations.len();
    let total_paths = (s as u64).pow(n as u32);
    assert!(total_paths <= 10_000_000, "path space too large to enumerate");

    let log_emission: Vec<Vec<f64>> = observations
        .iter()
        .map(|obs| {
            (0..s)
                .map(|state| log_normal_diag(obs, &means[state], &vars[state]))
                .collect()
        })
        .collect();

    let mut best_path = vec![0usize; n];
    let mut best_score = f64::NEG_INFINITY;
    let mut path = vec![0usize; n];
    for index in 0..total_paths {
        let mut rest = index;
        // Digit order makes path[0] the most significant digit, so the
        // enumeration is lexicographic.
        for t in (0..n).rev() {
            path[t] = (rest % s as u64) as usize;
            rest /= s as u64;
        }
        let mut score = initial[path[0]].ln() + log_emission[0][path[0]];
        for t in 1..n {
            score += transition[path[t - 1]][path[t]].ln() + log_emission[t][path[t]];
        }
        if score > best_score {
            best_score = score;
            best_path.copy_from_slice(&path);
        }
    }
    (best_path, best_score)
}

/// `a` and `b` agree to `tol` relative to the larger magnitude (absolute for
/// values below 1).
pub fn rel_close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * a.abs().max(b.abs()).max(1.0)
}

pub fn assert_rel_close(what: &str, got: f64, want: f64, tol: f64) {
    assert!(
        rel_close(got, want, tol),
        "{what}: got {got}, want {want} (tol {tol} relative, diff {})",
        (got - want).abs()
    );
}

/// A seeded random clustered dataset: up to 200 rows of Gaussian blobs in up
/// to 6 dimensions, labeled by blob. Odd seeds mark a handful of rows as
/// noise (`-1`) to exercise noise exclusion; every cluster keeps at least
/// one member. Row order is shuffled.
pub fn random_labeled_points(seed: u64) -> (Vec<Vec<f64>>, Vec<i64>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = rng.gen_range(20..=200);
    let m = rng.gen_range(1..=6);
    let k = rng.gen_range(2..=5);

    let centers: Vec<Vec<f64>> = (0..k)
        .map(|_| (0..m).map(|_| rng.gen_range(-5.0..5.0)).collect())
        .collect();

    let mut points = Vec::with_capacity(n);
    let mut labels = Vec::with_capacity(n);
    for i in 0..n {
        let c = i % k;
        let point: Vec<f64> = centers[c]
            .iter()
            .map(|&mu| mu + rng.sample::<f64, _>(rand_distr::StandardNormal))
            .collect();
        points.push(point);
        labels.push(c as i64);
    }

    if seed % 2 == 1 {
        // Flip a few late rows to noise; rows 0..k stay put so every cluster
        // keeps at least one member.
        let flips = (n / 20).max(1);
        for _ in 0..flips {
            let row = rng.gen_range(k..n);
            labels[row] = -1;
        }
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng);
    let points: Vec<Vec<f64>> = order.iter().map(|&i| points[i].clone()).collect();
    let labels: Vec<i64> = order.iter().map(|&i| labels[i]).collect();
    (points, labels)
}
