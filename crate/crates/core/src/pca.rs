//! Principal component analysis for the 2-D projections used by the scatter
//! plots: covariance eigendecomposition via a from-scratch cyclic Jacobi
//! rotation scheme, no external linear-algebra dependency.
//!
//! Components are rows of an orthonormal matrix, ordered by descending
//! explained variance. Each component's sign is normalized so its
//! largest-magnitude entry is positive, making fitted projections
//! reproducible across runs.

use serde::{Deserialize, Serialize};

use crate::dataio::Dataset;
use crate::error::{Error, Result};
use crate::matrix::Matrix;

/// Fitted projection: `p` orthonormal component rows over `m` features.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PcaModel {
    /// p x m; row i is the i-th principal axis.
    pub components: Matrix,
    /// Variance captured by each component, descending; length p.
    pub explained_variance: Vec<f64>,
    /// Per-feature training mean subtracted before projection; length m.
    pub mean: Vec<f64>,
}

const MAX_SWEEPS: usize = 100;

/// Eigendecomposition of a symmetric matrix by cyclic Jacobi rotations.
/// Returns (eigenvalues, eigenvectors-as-columns), unsorted.
fn jacobi_eigen(sym: &Matrix) -> Result<(Vec<f64>, Matrix)> {
    let m = sym.n_rows();
    let mut a = sym.clone();
    let mut v = Matrix::zeros(m, m);
    for i in 0..m {
        v.set(i, i, 1.0);
    }
    if m == 1 {
        return Ok((vec![a.get(0, 0)], v));
    }
    // Convergence scale: Frobenius norm of the input.
    let scale: f64 = sym.as_slice().iter().map(|x| x * x).sum::<f64>().sqrt();
    let threshold = scale * 1e-14 + f64::MIN_POSITIVE;

    for _ in 0..MAX_SWEEPS {
        let mut off_sq = 0.0;
        for p in 0..m {
            for q in p + 1..m {
                off_sq += a.get(p, q) * a.get(p, q);
            }
        }
        if off_sq.sqrt() <= threshold {
            break;
        }
        for p in 0..m - 1 {
            for q in p + 1..m {
                let apq = a.get(p, q);
                if apq == 0.0 {
                    continue;
                }
                let theta = (a.get(q, q) - a.get(p, p)) / (2.0 * apq);
                let t = if theta >= 0.0 {
                    1.0 / (theta + (theta * theta + 1.0).sqrt())
                } else {
                    1.0 / (theta - (theta * theta + 1.0).sqrt())
                };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;

                let app = a.get(p, p);
                let aqq = a.get(q, q);
                a.set(p, p, app - t * apq);
                a.set(q, q, aqq + t * apq);
                a.set(p, q, 0.0);
                a.set(q, p, 0.0);
                for r in 0..m {
                    if r == p || r == q {
                        continue;
                    }
                    let arp = a.get(r, p);
                    let arq = a.get(r, q);
                    a.set(r, p, c * arp - s * arq);
                    a.set(p, r, c * arp - s * arq);
                    a.set(r, q, s * arp + c * arq);
                    a.set(q, r, s * arp + c * arq);
                }
                for r in 0..m {
                    let vrp = v.get(r, p);
                    let vrq = v.get(r, q);
                    v.set(r, p, c * vrp - s * vrq);
                    v.set(r, q, s * vrp + c * vrq);
                }
            }
        }
    }
    let values: Vec<f64> = (0..m).map(|i| a.get(i, i)).collect();
    if values.iter().any(|x| !x.is_finite()) {
        return Err(Error::Numeric(
            "eigendecomposition produced non-finite eigenvalues".into(),
        ));
    }
    Ok((values, v))
}

/// Fit a `p`-component PCA on the dataset's continuous features.
///
/// The covariance matrix uses the unbiased `n - 1` divisor. Eigenvalues that
/// come out as small negatives through roundoff are clamped to zero.
pub fn pca_fit(data: &Dataset, p: usize) -> Result<PcaModel> {
    let n = data.n_rows();
    let m = data.n_features();
    if n < 2 {
        return Err(Error::Numeric(format!(
            "covariance undefined with {n} rows; need at least 2"
        )));
    }
    if p == 0 || p > m.min(n) {
        return Err(Error::Contract(format!(
            "component count {p} out of range 1..={}",
            m.min(n)
        )));
    }

    let points = data.features();
    let mean = points.row_mean()?;
    let mut centered = Matrix::zeros(n, m);
    for r in 0..n {
        for c in 0..m {
            centered.set(r, c, points.get(r, c) - mean[c]);
        }
    }
    let mut cov = centered.matmul_tn(&centered)?;
    let denom = (n - 1) as f64;
    for value in cov.as_mut_slice() {
        *value /= denom;
    }

    let (values, vectors) = jacobi_eigen(&cov)?;
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&i, &j| values[j].partial_cmp(&values[i]).unwrap().then(i.cmp(&j)));

    let mut components = Matrix::zeros(p, m);
    let mut explained = Vec::with_capacity(p);
    for (rank, &idx) in order.iter().take(p).enumerate() {
        explained.push(values[idx].max(0.0));
        let mut axis: Vec<f64> = (0..m).map(|r| vectors.get(r, idx)).collect();
        // Sign convention: the largest-magnitude entry is positive.
        let mut anchor = 0usize;
        for (d, value) in axis.iter().enumerate() {
            if value.abs() > axis[anchor].abs() {
                anchor = d;
            }
        }
        if axis[anchor] < 0.0 {
            for value in &mut axis {
                *value = -*value;
            }
        }
        components.row_mut(rank).copy_from_slice(&axis);
    }

    Ok(PcaModel {
        components,
        explained_variance: explained,
        mean,
    })
}

/// Fit a PCA keeping the smallest number of leading components whose
/// cumulative explained variance reaches `fraction` of the total (at least
/// one component). Used for the reduced metric-space option.
pub fn pca_fit_fraction(data: &Dataset, fraction: f64) -> Result<PcaModel> {
    if !(0.0..=1.0).contains(&fraction) {
        return Err(Error::Contract(format!(
            "variance fraction {fraction} outside [0, 1]"
        )));
    }
    let full = pca_fit(data, data.n_features().min(data.n_rows()))?;
    let total: f64 = full.explained_variance.iter().sum();
    let mut keep = 1usize;
    if total > 0.0 {
        let mut cumulative = 0.0;
        for (idx, &v) in full.explained_variance.iter().enumerate() {
            cumulative += v;
            keep = idx + 1;
            if cumulative >= fraction * total {
                break;
            }
        }
    }
    let mut components = Matrix::zeros(keep, full.components.n_cols());
    for r in 0..keep {
        components.row_mut(r).copy_from_slice(full.components.row(r));
    }
    Ok(PcaModel {
        components,
        explained_variance: full.explained_variance[..keep].to_vec(),
        mean: full.mean,
    })
}

/// Project a dataset into the fitted component space. The result has `p`
/// continuous columns named `pc0..pc{p-1}`; any label column is carried
/// over unchanged.
pub fn pca_transform(model: &PcaModel, data: &Dataset) -> Result<Dataset> {
    let m = model.components.n_cols();
    if data.n_features() != m {
        return Err(Error::Contract(format!(
            "projection expects {m} features, data has {}",
            data.n_features()
        )));
    }
    let points = data.features();
    let n = points.n_rows();
    let mut centered = Matrix::zeros(n, m);
    for r in 0..n {
        for c in 0..m {
            centered.set(r, c, points.get(r, c) - model.mean[c]);
        }
    }
    let scores = centered.matmul_nt(&model.components)?;
    let names: Vec<String> = (0..scores.n_cols()).map(|i| format!("pc{i}")).collect();
    let name_refs: Vec<&str> = names.iter().map(|s| s.as_str()).collect();
    let projected = Dataset::from_features(&name_refs, scores)?;
    match data.labels() {
        Some(labels) => projected.with_label_column("label", labels.to_vec()),
        None => Ok(projected),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataio::generate_toy_telemetry;

    fn axis_aligned_dataset() -> Dataset {
        // Column variances 16, 4, 1 on independent axes (exactly, by
        // symmetric placement around zero).
        let rows = vec![
            vec![4.0, 0.0, 0.0],
            vec![-4.0, 0.0, 0.0],
            vec![0.0, 2.0, 0.0],
            vec![0.0, -2.0, 0.0],
            vec![0.0, 0.0, 1.0],
            vec![0.0, 0.0, -1.0],
        ];
        Dataset::from_features(&["a", "b", "c"], Matrix::from_rows(&rows).unwrap()).unwrap()
    }

    #[test]
    fn axis_aligned_variances_recovered_in_order() {
        let data = axis_aligned_dataset();
        let model = pca_fit(&data, 3).unwrap();
        // Sample covariance diag: 32/5, 8/5, 2/5.
        let expected = [32.0 / 5.0, 8.0 / 5.0, 2.0 / 5.0];
        for (got, want) in model.explained_variance.iter().zip(expected) {
            assert!((got - want).abs() < 1e-9, "{got} vs {want}");
        }
        // First component is the x axis with positive sign.
        assert!((model.components.get(0, 0) - 1.0).abs() < 1e-9);
        assert!(model.components.get(0, 1).abs() < 1e-9);
        assert!(model.components.get(0, 2).abs() < 1e-9);
    }

    #[test]
    fn components_are_orthonormal() {
        let (data, _) = generate_toy_telemetry(31, 100, 3, 5, 4.0).unwrap();
        let model = pca_fit(&data, 5).unwrap();
        let gram = model.components.matmul_nt(&model.components).unwrap();
        for i in 0..5 {
            for j in 0..5 {
                let want = if i == j { 1.0 } else { 0.0 };
                assert!(
                    (gram.get(i, j) - want).abs() < 1e-9,
                    "gram[{i}][{j}] = {}",
                    gram.get(i, j)
                );
            }
        }
    }

    #[test]
    fn eigenvalue_sum_preserves_total_variance() {
        let (data, _) = generate_toy_telemetry(37, 80, 2, 4, 5.0).unwrap();
        let model = pca_fit(&data, 4).unwrap();
        let points = data.features();
        let mean = points.row_mean().unwrap();
        let n = points.n_rows();
        let mut total = 0.0;
        for c in 0..4 {
            let mut acc = 0.0;
            for r in 0..n {
                let diff = points.get(r, c) - mean[c];
                acc += diff * diff;
            }
            total += acc / (n - 1) as f64;
        }
        let sum: f64 = model.explained_variance.iter().sum();
        assert!((sum - total).abs() < 1e-9 * total.abs(), "{sum} vs {total}");
    }

    #[test]
    fn scores_have_diagonal_covariance_matching_explained_variance() {
        let (data, _) = generate_toy_telemetry(41, 120, 2, 3, 6.0).unwrap();
        let model = pca_fit(&data, 3).unwrap();
        let projected = pca_transform(&model, &data).unwrap();
        let scores = projected.features();
        let n = scores.n_rows();
        let mean = scores.row_mean().unwrap();
        for i in 0..3 {
            // Scores are centered because the model subtracts the training
            // mean of the same data.
            assert!(mean[i].abs() < 1e-9);
            for j in 0..3 {
                let mut acc = 0.0;
                for r in 0..n {
                    acc += scores.get(r, i) * scores.get(r, j);
                }
                acc /= (n - 1) as f64;
                let want = if i == j { model.explained_variance[i] } else { 0.0 };
                assert!(
                    (acc - want).abs() < 1e-8,
                    "score cov[{i}][{j}] = {acc}, want {want}"
                );
            }
        }
    }

    #[test]
    fn full_rank_projection_reconstructs_data() {
        let (data, _) = generate_toy_telemetry(43, 60, 2, 4, 5.0).unwrap();
        let model = pca_fit(&data, 4).unwrap();
        let projected = pca_transform(&model, &data).unwrap();
        // x ~= mean + scores * components.
        let back = projected.features().matmul(&model.components).unwrap();
        let points = data.features();
        for r in 0..data.n_rows() {
            for c in 0..4 {
                let rebuilt = back.get(r, c) + model.mean[c];
                assert!(
                    (rebuilt - points.get(r, c)).abs() < 1e-9,
                    "row {r} col {c}: {rebuilt} vs {}",
                    points.get(r, c)
                );
            }
        }
    }

    #[test]
    fn fit_is_deterministic() {
        let (data, _) = generate_toy_telemetry(47, 90, 3, 4, 4.0).unwrap();
        let a = pca_fit(&data, 2).unwrap();
        let b = pca_fit(&data, 2).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn parameter_errors() {
        let (data, _) = generate_toy_telemetry(53, 10, 2, 3, 4.0).unwrap();
        assert!(pca_fit(&data, 0).is_err());
        assert!(pca_fit(&data, 4).is_err());
        let one = Dataset::from_features(
            &["a"],
            Matrix::from_rows(&[vec![1.0]]).unwrap(),
        )
        .unwrap();
        assert!(pca_fit(&one, 1).is_err());

        let model = pca_fit(&data, 2).unwrap();
        let (wider, _) = generate_toy_telemetry(53, 10, 2, 4, 4.0).unwrap();
        assert!(pca_transform(&model, &wider).is_err());
    }

    #[test]
    fn transform_carries_labels_and_names_columns() {
        let (data, truth) = generate_toy_telemetry(59, 30, 2, 3, 5.0).unwrap();
        let labeled = data
            .with_label_column("label", truth.labels().to_vec())
            .unwrap();
        let model = pca_fit(&labeled, 2).unwrap();
        let projected = pca_transform(&model, &labeled).unwrap();
        assert_eq!(projected.feature_names(), vec!["pc0", "pc1"]);
        assert_eq!(projected.labels().unwrap(), truth.labels());
    }

    #[test]
    fn fraction_fit_keeps_enough_components() {
        let data = axis_aligned_dataset();
        // Variances 6.4, 1.6, 0.4 -> fractions 76.2%, 95.2%, 100%.
        let model = pca_fit_fraction(&data, 0.95).unwrap();
        assert_eq!(model.components.n_rows(), 2);
        let all = pca_fit_fraction(&data, 1.0).unwrap();
        assert_eq!(all.components.n_rows(), 3);
        let one = pca_fit_fraction(&data, 0.5).unwrap();
        assert_eq!(one.components.n_rows(), 1);
        assert!(pca_fit_fraction(&data, 1.5).is_err());
    }

    #[test]
    fn constant_columns_get_zero_variance_components() {
        // Two informative axes plus one constant; the constant axis must
        // rank last with explained variance exactly 0 after clamping.
        let rows = vec![
            vec![1.0, 5.0, 2.0],
            vec![-1.0, 5.0, -2.0],
            vec![2.0, 5.0, 1.0],
            vec![-2.0, 5.0, -1.0],
        ];
        let data =
            Dataset::from_features(&["a", "b", "c"], Matrix::from_rows(&rows).unwrap()).unwrap();
        let model = pca_fit(&data, 3).unwrap();
        assert!(model.explained_variance[2].abs() == 0.0);
        assert!(model.explained_variance[0] >= model.explained_variance[1]);
    }
}
