//! Cluster-validation metrics — silhouette, Calinski-Harabasz, and
//! Davies-Bouldin — plus the model-selection procedures built on them: the
//! K-means k sweep and the DBSCAN (eps, min_pts) grid search.
//!
//! All metrics exclude noise rows (label `-1`) and are computed on the
//! surviving rows only; `n_effective_rows` records how many that is. Scores
//! can legitimately collapse to infinity on degenerate partitions (zero
//! within-cluster variance, coincident centroids); those serialize as the
//! JSON string token `"inf"` rather than failing.

use serde::{Deserialize, Serialize};

use crate::cluster::{dbscan_fit, kmeans_fit, ClusterAssignment, DbscanParams};
use crate::dataio::Dataset;
use crate::error::{Error, Result};
use crate::matrix::{dist, Matrix};

/// The three validation scores for one (data, labels) pair.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ValidationScores {
    #[serde(with = "metric_value")]
    pub silhouette: f64,
    #[serde(with = "metric_value")]
    pub calinski_harabasz: f64,
    #[serde(with = "metric_value")]
    pub davies_bouldin: f64,
    /// Rows included after noise exclusion.
    pub n_effective_rows: usize,
}

/// Serde adapter that writes positive infinity as the string token `"inf"`
/// (plain JSON numbers cannot represent it) and reads both forms back.
mod metric_value {
    use serde::de::{self, Visitor};
    use serde::{Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        if v.is_infinite() && *v > 0.0 {
            s.serialize_str("inf")
        } else {
            s.serialize_f64(*v)
        }
    }

    struct MetricVisitor;

    impl<'de> Visitor<'de> for MetricVisitor {
        type Value = f64;

        fn expecting(&self, f: &mut std::fmt::Formatter) -> std::fmt::Result {
            f.write_str("a number or the string \"inf\"")
        }

        fn visit_f64<E: de::Error>(self, v: f64) -> Result<f64, E> {
            Ok(v)
        }

        fn visit_i64<E: de::Error>(self, v: i64) -> Result<f64, E> {
            Ok(v as f64)
        }

        fn visit_u64<E: de::Error>(self, v: u64) -> Result<f64, E> {
            Ok(v as f64)
        }

        fn visit_str<E: de::Error>(self, v: &str) -> Result<f64, E> {
            match v {
                "inf" => Ok(f64::INFINITY),
                other => Err(E::custom(format!("unexpected metric token {other:?}"))),
            }
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        d.deserialize_any(MetricVisitor)
    }
}

/// Rows, labels, and cluster count after noise exclusion, shared by all three
/// metrics so they always agree on what was scored.
struct EffectiveView {
    /// Indices into the original dataset, ascending.
    rows: Vec<usize>,
    /// Dense labels per surviving row.
    labels: Vec<usize>,
    k: usize,
    /// Cluster ids ordered by first occurrence in row order. Per-cluster sums
    /// iterate in this order so results are bit-identical under any
    /// permutation of the label names.
    canonical: Vec<usize>,
}

fn effective_view(data: &Dataset, assignment: &ClusterAssignment) -> Result<EffectiveView> {
    if assignment.n_rows() != data.n_rows() {
        return Err(Error::Contract(format!(
            "assignment covers {} rows, data has {}",
            assignment.n_rows(),
            data.n_rows()
        )));
    }
    let rows = assignment.non_noise_rows();
    let labels: Vec<usize> = rows
        .iter()
        .map(|&r| assignment.labels()[r] as usize)
        .collect();
    let mut canonical = Vec::with_capacity(assignment.n_clusters());
    for &label in &labels {
        if !canonical.contains(&label) {
            canonical.push(label);
        }
    }
    Ok(EffectiveView {
        rows,
        labels,
        k: assignment.n_clusters(),
        canonical,
    })
}

/// Mean silhouette coefficient over non-noise rows.
///
/// Per row: `(b - a) / max(a, b)` with `a` the mean distance to the row's own
/// cluster (excluding itself) and `b` the smallest mean distance to any other
/// cluster. Rows in singleton clusters score 0 by convention, as does a row
/// whose distances are all zero (exact duplicates).
pub fn silhouette(data: &Dataset, assignment: &ClusterAssignment) -> Result<f64> {
    let view = effective_view(data, assignment)?;
    if view.k < 2 {
        return Err(Error::Numeric(format!(
            "silhouette undefined for {} cluster(s); need at least 2",
            view.k
        )));
    }
    let points = data.features();
    let counts = cluster_counts(&view);

    let mut total = 0.0;
    for (i, (&row_i, &label_i)) in view.rows.iter().zip(&view.labels).enumerate() {
        let mut sum_to_cluster = vec![0.0f64; view.k];
        for (j, (&row_j, &label_j)) in view.rows.iter().zip(&view.labels).enumerate() {
            if i == j {
                continue;
            }
            sum_to_cluster[label_j] += dist(points.row(row_i), points.row(row_j));
        }
        if counts[label_i] == 1 {
            continue; // singleton convention: contributes 0
        }
        let a = sum_to_cluster[label_i] / (counts[label_i] - 1) as f64;
        let b = (0..view.k)
            .filter(|&c| c != label_i)
            .map(|c| sum_to_cluster[c] / counts[c] as f64)
            .fold(f64::INFINITY, f64::min);
        let denom = a.max(b);
        if denom > 0.0 {
            total += (b - a) / denom;
        }
    }
    Ok(total / view.rows.len() as f64)
}

/// Calinski-Harabasz score: `(B / (k-1)) / (W / (n-k))` with `B` the
/// between-cluster and `W` the within-cluster sum of squared distances.
/// Returns positive infinity when every cluster is perfectly collapsed
/// (`W = 0`).
pub fn calinski_harabasz(data: &Dataset, assignment: &ClusterAssignment) -> Result<f64> {
    let view = effective_view(data, assignment)?;
    let n = view.rows.len();
    if view.k < 2 || view.k >= n {
        return Err(Error::Numeric(format!(
            "calinski-harabasz undefined for k = {} on {n} rows; need 2 <= k < n",
            view.k
        )));
    }
    let points = data.features();
    let centroids = cluster_centroids(points, &view);
    let counts = cluster_counts(&view);

    let mut overall = vec![0.0f64; points.n_cols()];
    for &row in &view.rows {
        for (o, v) in overall.iter_mut().zip(points.row(row)) {
            *o += v;
        }
    }
    for o in &mut overall {
        *o /= n as f64;
    }

    let mut between = 0.0;
    for &c in &view.canonical {
        between += counts[c] as f64 * crate::matrix::sq_dist(centroids.row(c), &overall);
    }
    let mut within = 0.0;
    for (&row, &label) in view.rows.iter().zip(&view.labels) {
        within += crate::matrix::sq_dist(points.row(row), centroids.row(label));
    }

    if within == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok((between / (view.k - 1) as f64) / (within / (n - view.k) as f64))
}

/// Davies-Bouldin score: mean over clusters of the worst
/// `(s_i + s_j) / d_ij` ratio, where `s_i` is the mean distance of cluster
/// `i`'s rows to its centroid and `d_ij` the distance between centroids.
/// A coincident centroid pair with any dispersion yields positive infinity;
/// with zero dispersion on both sides the pair contributes 0.
pub fn davies_bouldin(data: &Dataset, assignment: &ClusterAssignment) -> Result<f64> {
    let view = effective_view(data, assignment)?;
    if view.k < 2 {
        return Err(Error::Numeric(format!(
            "davies-bouldin undefined for {} cluster(s); need at least 2",
            view.k
        )));
    }
    let points = data.features();
    let centroids = cluster_centroids(points, &view);
    let counts = cluster_counts(&view);

    let mut dispersion = vec![0.0f64; view.k];
    for (&row, &label) in view.rows.iter().zip(&view.labels) {
        dispersion[label] += dist(points.row(row), centroids.row(label));
    }
    for (s, &count) in dispersion.iter_mut().zip(&counts) {
        *s /= count as f64;
    }

    let mut total = 0.0;
    for &i in &view.canonical {
        let mut worst = 0.0f64;
        for j in 0..view.k {
            if i == j {
                continue;
            }
            let spread = dispersion[i] + dispersion[j];
            let gap = dist(centroids.row(i), centroids.row(j));
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
    Ok(total / view.k as f64)
}

/// All three metrics over the same noise-excluded view.
pub fn score_all(data: &Dataset, assignment: &ClusterAssignment) -> Result<ValidationScores> {
    Ok(ValidationScores {
        silhouette: silhouette(data, assignment)?,
        calinski_harabasz: calinski_harabasz(data, assignment)?,
        davies_bouldin: davies_bouldin(data, assignment)?,
        n_effective_rows: data.n_rows() - assignment.noise_count(),
    })
}

/// Sweep K-means over `k_min..=k_max`, score each fit by silhouette, and
/// return the best k (ties toward smaller k) with the full sweep table.
pub fn select_kmeans_k(
    data: &Dataset,
    k_min: usize,
    k_max: usize,
    seed: u64,
) -> Result<(usize, Vec<(usize, f64)>)> {
    let n = data.n_rows();
    if k_min < 2 || k_min > k_max || k_max + 1 > n {
        return Err(Error::Contract(format!(
            "invalid k sweep range {k_min}..={k_max} for {n} rows; need 2 <= k_min <= k_max <= n-1"
        )));
    }
    let mut sweep = Vec::with_capacity(k_max - k_min + 1);
    let mut best = (0usize, f64::NEG_INFINITY);
    for k in k_min..=k_max {
        let (_, assignment) = kmeans_fit(data, k, seed, 300, 1e-9)?;
        let score = silhouette(data, &assignment)?;
        sweep.push((k, score));
        if score > best.1 {
            best = (k, score);
        }
    }
    Ok((best.0, sweep))
}

/// Grid-search DBSCAN parameters by silhouette over non-noise rows.
///
/// Grid points whose clustering yields fewer than two clusters (including
/// all-noise results) are skipped. Ties break toward smaller eps, then
/// smaller min_pts; if no grid point produces a scoreable clustering the
/// search fails.
pub fn select_dbscan_params(
    data: &Dataset,
    eps_grid: &[f64],
    minpts_grid: &[usize],
) -> Result<(DbscanParams, f64)> {
    if eps_grid.is_empty() || minpts_grid.is_empty() {
        return Err(Error::Contract("empty DBSCAN search grid".into()));
    }
    let mut eps_sorted = eps_grid.to_vec();
    eps_sorted.sort_by(|a, b| a.partial_cmp(b).expect("grid values must not be NaN"));
    eps_sorted.dedup();
    let mut minpts_sorted = minpts_grid.to_vec();
    minpts_sorted.sort_unstable();
    minpts_sorted.dedup();

    let mut best: Option<(DbscanParams, f64)> = None;
    for &eps in &eps_sorted {
        for &min_pts in &minpts_sorted {
            let params = DbscanParams::new(eps, min_pts)?;
            let assignment = dbscan_fit(data, &params);
            if assignment.n_clusters() < 2 {
                continue;
            }
            let score = silhouette(data, &assignment)?;
            // Strict comparison plus ascending scan order implements the
            // smaller-eps-then-smaller-min_pts tie rule.
            if best.map_or(true, |(_, s)| score > s) {
                best = Some((params, score));
            }
        }
    }
    best.ok_or_else(|| {
        Error::Numeric(
            "no DBSCAN grid point produced at least 2 clusters; widen the eps/min_pts grids"
                .into(),
        )
    })
}

fn cluster_counts(view: &EffectiveView) -> Vec<usize> {
    let mut counts = vec![0usize; view.k];
    for &label in &view.labels {
        counts[label] += 1;
    }
    counts
}

fn cluster_centroids(points: &Matrix, view: &EffectiveView) -> Matrix {
    let mut centroids = Matrix::zeros(view.k, points.n_cols());
    let counts = cluster_counts(view);
    for (&row, &label) in view.rows.iter().zip(&view.labels) {
        let target = centroids.row_mut(label);
        for (t, v) in target.iter_mut().zip(points.row(row)) {
            *t += v;
        }
    }
    for c in 0..view.k {
        for col in 0..points.n_cols() {
            centroids.set(c, col, centroids.get(c, col) / counts[c] as f64);
        }
    }
    centroids
}
