//! Unsupervised clustering algorithms: K-means (Lloyd with k-means++
//! seeding), DBSCAN, and agglomerative clustering with Ward linkage, plus the
//! shared [`ClusterAssignment`] label type every algorithm (and the Gaussian
//! HMM in [`crate::ghmm`]) produces.
//!
//! All algorithms use Euclidean distance on the continuous feature columns
//! and are deterministic: stochastic steps draw from a caller-provided seed
//! and every tie breaks toward the lowest index.

mod agglomerative;
mod dbscan;
mod kmeans;

pub use agglomerative::{agglomerative_fit, LinkageTree, Merge};
pub use dbscan::{dbscan_fit, DbscanParams};
pub use kmeans::{kmeans_fit, KMeansModel};

use std::io::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Noise marker used by DBSCAN for rows assigned to no cluster.
pub const NOISE_LABEL: i64 = -1;

/// Per-row integer cluster labels.
///
/// Labels lie in `{0..n_clusters-1}`, with `-1` marking noise rows when
/// `noise_allowed` is set. Every label in `{0..n_clusters-1}` occurs at least
/// once; construction enforces this.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClusterAssignment {
    labels: Vec<i64>,
    n_clusters: usize,
    noise_allowed: bool,
}

impl ClusterAssignment {
    /// Build an assignment from raw labels, deriving `n_clusters` as
    /// `max(label) + 1`.
    ///
    /// Fails if a label is negative other than the `-1` noise marker, if `-1`
    /// appears while `noise_allowed` is false, or if some label in
    /// `0..n_clusters-1` never occurs.
    pub fn from_labels(labels: Vec<i64>, noise_allowed: bool) -> Result<Self> {
        let max = labels.iter().copied().max().unwrap_or(-1);
        let n_clusters = if max < 0 { 0 } else { (max + 1) as usize };
        let mut seen = vec![false; n_clusters];
        for (row, &label) in labels.iter().enumerate() {
            if label == NOISE_LABEL {
                if !noise_allowed {
                    return Err(Error::Contract(format!(
                        "row {row} labeled noise (-1) but the assignment does not allow noise"
                    )));
                }
            } else if label < 0 {
                return Err(Error::Contract(format!(
                    "row {row} has invalid label {label}; labels must be >= -1"
                )));
            } else {
                seen[label as usize] = true;
            }
        }
        if let Some(missing) = seen.iter().position(|s| !s) {
            return Err(Error::Contract(format!(
                "label {missing} never occurs; labels must cover 0..{}",
                n_clusters - 1
            )));
        }
        Ok(ClusterAssignment {
            labels,
            n_clusters,
            noise_allowed,
        })
    }

    pub fn labels(&self) -> &[i64] {
        &self.labels
    }

    pub fn n_rows(&self) -> usize {
        self.labels.len()
    }

    pub fn n_clusters(&self) -> usize {
        self.n_clusters
    }

    pub fn noise_allowed(&self) -> bool {
        self.noise_allowed
    }

    /// Number of rows labeled with the noise marker.
    pub fn noise_count(&self) -> usize {
        self.labels.iter().filter(|&&l| l == NOISE_LABEL).count()
    }

    /// Indices of rows not labeled as noise, in ascending order.
    pub fn non_noise_rows(&self) -> Vec<usize> {
        (0..self.labels.len())
            .filter(|&i| self.labels[i] != NOISE_LABEL)
            .collect()
    }

    /// Serialize as a single-column CSV of integer labels.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut out = String::from("label\n");
        for label in &self.labels {
            out.push_str(&label.to_string());
            out.push('\n');
        }
        let mut file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        file.write_all(out.as_bytes()).map_err(|e| Error::io(path, e))?;
        Ok(())
    }

    /// Parse the single-column CSV written by [`Self::write_csv`].
    pub fn read_csv(path: &Path, noise_allowed: bool) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut lines = text.lines();
        match lines.next() {
            Some("label") => {}
            other => {
                return Err(Error::Data(format!(
                    "{}: expected header 'label', found {:?}",
                    path.display(),
                    other.unwrap_or("")
                )))
            }
        }
        let mut labels = Vec::new();
        for (i, line) in lines.enumerate() {
            let label: i64 = line.trim().parse().map_err(|_| {
                Error::Data(format!(
                    "{}: line {}: unparseable label {line:?}",
                    path.display(),
                    i + 2
                ))
            })?;
            labels.push(label);
        }
        ClusterAssignment::from_labels(labels, noise_allowed)
    }
}

/// Compact arbitrary cluster ids into dense labels `0..k-1` ordered by first
/// occurrence, leaving `-1` noise markers in place. Used by the algorithms to
/// satisfy the [`ClusterAssignment`] invariants deterministically.
pub(crate) fn compact_labels(raw: &[i64]) -> Vec<i64> {
    let mut mapping: Vec<(i64, i64)> = Vec::new();
    let mut out = Vec::with_capacity(raw.len());
    for &label in raw {
        if label == NOISE_LABEL {
            out.push(NOISE_LABEL);
            continue;
        }
        let dense = match mapping.iter().find(|(orig, _)| *orig == label) {
            Some((_, dense)) => *dense,
            None => {
                let dense = mapping.len() as i64;
                mapping.push((label, dense));
                dense
            }
        };
        out.push(dense);
    }
    out
}
