//! DBSCAN: density-based clustering with noise.
//!
//! Neighborhoods are Euclidean balls of radius `eps` (inclusive), computed by
//! brute-force pairwise distances — tractable at the row counts this crate
//! targets. A point whose neighborhood (itself included) holds at least
//! `min_pts` points is a core point; clusters are the maximal
//! density-connected sets of core points plus the border points they reach.
//! Everything else is noise, labeled `-1`.

use serde::{Deserialize, Serialize};

use crate::cluster::{ClusterAssignment, NOISE_LABEL};
use crate::dataio::Dataset;
use crate::error::{Error, Result};
use crate::matrix::sq_dist;

/// DBSCAN hyperparameters: neighborhood radius and core-point threshold.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DbscanParams {
    pub eps: f64,
    pub min_pts: usize,
}

impl DbscanParams {
    pub fn new(eps: f64, min_pts: usize) -> Result<Self> {
        if !(eps > 0.0) {
            return Err(Error::Contract(format!("eps must be positive, got {eps}")));
        }
        if min_pts < 1 {
            return Err(Error::Contract("min_pts must be at least 1".into()));
        }
        Ok(DbscanParams { eps, min_pts })
    }
}

/// Run DBSCAN over the continuous features.
///
/// Deterministic: seed points are scanned in ascending row index, expansion
/// proceeds breadth-first in ascending neighbor index, and a border point
/// keeps the label of the first cluster that reaches it.
pub fn dbscan_fit(data: &Dataset, params: &DbscanParams) -> ClusterAssignment {
    let n = data.n_rows();
    let points = data.features();
    let eps_sq = params.eps * params.eps;

    // Neighbor lists (self included), ascending index order by construction.
    let mut neighbors: Vec<Vec<usize>> = vec![Vec::new(); n];
    for i in 0..n {
        neighbors[i].push(i);
    }
    for i in 0..n {
        for j in (i + 1)..n {
            if sq_dist(points.row(i), points.row(j)) <= eps_sq {
                neighbors[i].push(j);
                neighbors[j].push(i);
            }
        }
    }
    for list in &mut neighbors {
        list.sort_unstable();
    }
    let core: Vec<bool> = neighbors.iter().map(|l| l.len() >= params.min_pts).collect();

    let mut labels = vec![NOISE_LABEL; n];
    let mut next_cluster = 0i64;
    for seed in 0..n {
        if labels[seed] != NOISE_LABEL || !core[seed] {
            continue;
        }
        let cluster = next_cluster;
        next_cluster += 1;
        labels[seed] = cluster;
        // Breadth-first expansion through core points; border points are
        // labeled but not expanded.
        let mut queue = std::collections::VecDeque::from([seed]);
        while let Some(point) = queue.pop_front() {
            for &nb in &neighbors[point] {
                if labels[nb] != NOISE_LABEL {
                    continue;
                }
                labels[nb] = cluster;
                if core[nb] {
                    queue.push_back(nb);
                }
            }
        }
    }

    ClusterAssignment::from_labels(labels, true)
        .expect("labels are dense 0..k-1 by construction")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataio::Dataset;
    use crate::matrix::Matrix;
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn blob_pair(n_per: usize, gap: f64, spread: f64, seed: u64) -> Dataset {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut rows = Vec::new();
        for i in 0..(2 * n_per) {
            let cx = if i < n_per { 0.0 } else { gap };
            rows.push(vec![
                cx + rng.gen_range(-spread..spread),
                rng.gen_range(-spread..spread),
            ]);
        }
        Dataset::from_features(&["x", "y"], Matrix::from_rows(&rows).unwrap()).unwrap()
    }

    #[test]
    fn params_are_validated() {
        assert!(DbscanParams::new(0.0, 5).is_err());
        assert!(DbscanParams::new(-1.0, 5).is_err());
        assert!(DbscanParams::new(0.5, 0).is_err());
        assert!(DbscanParams::new(0.5, 1).is_ok());
    }

    #[test]
    fn two_distant_blobs_two_clusters_no_noise() {
        let data = blob_pair(50, 20.0, 0.5, 3);
        let assignment = dbscan_fit(&data, &DbscanParams::new(1.0, 5).unwrap());
        assert_eq!(assignment.n_clusters(), 2);
        assert_eq!(assignment.noise_count(), 0);
        // Each blob maps to one cluster.
        let l = assignment.labels();
        assert!(l[..50].iter().all(|&v| v == l[0]));
        assert!(l[50..].iter().all(|&v| v == l[50]));
        assert_ne!(l[0], l[50]);
    }

    #[test]
    fn isolated_point_is_noise() {
        let mut rows: Vec<Vec<f64>> = (0..30)
            .map(|i| vec![(i % 6) as f64 * 0.1, (i / 6) as f64 * 0.1])
            .collect();
        rows.push(vec![100.0, 100.0]);
        let data =
            Dataset::from_features(&["x", "y"], Matrix::from_rows(&rows).unwrap()).unwrap();
        let assignment = dbscan_fit(&data, &DbscanParams::new(0.5, 4).unwrap());
        assert_eq!(assignment.labels()[30], NOISE_LABEL);
        assert_eq!(assignment.noise_count(), 1);
    }

    #[test]
    fn huge_eps_gives_one_cluster() {
        let data = blob_pair(20, 20.0, 0.5, 5);
        let assignment = dbscan_fit(&data, &DbscanParams::new(1e6, 5).unwrap());
        assert_eq!(assignment.n_clusters(), 1);
        assert_eq!(assignment.noise_count(), 0);
    }

    #[test]
    fn tiny_eps_makes_everything_noise() {
        let data = blob_pair(10, 20.0, 0.5, 7);
        let assignment = dbscan_fit(&data, &DbscanParams::new(1e-9, 3).unwrap());
        assert_eq!(assignment.n_clusters(), 0);
        assert_eq!(assignment.noise_count(), 20);
    }

    #[test]
    fn neighborhood_radius_is_inclusive() {
        // Five collinear points exactly 1 apart; eps = 1 must count immediate
        // neighbors, making interior points core at min_pts = 3.
        let rows: Vec<Vec<f64>> = (0..5).map(|i| vec![i as f64, 0.0]).collect();
        let data =
            Dataset::from_features(&["x", "y"], Matrix::from_rows(&rows).unwrap()).unwrap();
        let assignment = dbscan_fit(&data, &DbscanParams::new(1.0, 3).unwrap());
        assert_eq!(assignment.n_clusters(), 1);
        assert_eq!(assignment.noise_count(), 0);
    }

    #[test]
    fn core_points_within_eps_share_labels() {
        let data = blob_pair(40, 6.0, 1.5, 11);
        let params = DbscanParams::new(0.8, 4).unwrap();
        let assignment = dbscan_fit(&data, &params);
        let points = data.features();
        let eps_sq = params.eps * params.eps;
        let n = data.n_rows();
        let counts: Vec<usize> = (0..n)
            .map(|i| {
                (0..n)
                    .filter(|&j| sq_dist(points.row(i), points.row(j)) <= eps_sq)
                    .count()
            })
            .collect();
        for i in 0..n {
            for j in 0..n {
                if counts[i] >= params.min_pts
                    && counts[j] >= params.min_pts
                    && sq_dist(points.row(i), points.row(j)) <= eps_sq
                {
                    assert_eq!(
                        assignment.labels()[i],
                        assignment.labels()[j],
                        "core points {i} and {j} within eps must share a cluster"
                    );
                }
            }
        }
    }

    #[test]
    fn permutation_invariant_up_to_relabeling() {
        let data = blob_pair(25, 30.0, 0.5, 13);
        let params = DbscanParams::new(1.2, 4).unwrap();
        let base = dbscan_fit(&data, &params);

        // Reverse row order.
        let reversed_rows: Vec<Vec<f64>> = (0..data.n_rows())
            .rev()
            .map(|r| data.features().row(r).to_vec())
            .collect();
        let reversed = Dataset::from_features(
            &["x", "y"],
            Matrix::from_rows(&reversed_rows).unwrap(),
        )
        .unwrap();
        let perm = dbscan_fit(&reversed, &params);

        // Same partition after undoing the permutation, up to label names.
        let n = data.n_rows();
        let mut mapping = std::collections::BTreeMap::new();
        for i in 0..n {
            let a = base.labels()[i];
            let b = perm.labels()[n - 1 - i];
            assert_eq!(a == NOISE_LABEL, b == NOISE_LABEL);
            if a != NOISE_LABEL {
                let entry = mapping.entry(a).or_insert(b);
                assert_eq!(*entry, b, "partition changed under row permutation");
            }
        }
    }
}
