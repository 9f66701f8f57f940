//! Gaussian hidden Markov model over the dataset's rows treated as one
//! multivariate sequence in index order: Baum-Welch fitting, forward
//! log-likelihood, and Viterbi decoding into state labels.
//!
//! Emissions are diagonal-covariance Gaussians. The forward-backward pass
//! uses per-step normalization constants plus a per-row shift of the log
//! emission densities, so likelihoods stay finite on long sequences; genuine
//! underflow (a step with zero reachable probability mass) surfaces as a
//! numeric error rather than silent NaN.

use serde::{Deserialize, Serialize};

use crate::cluster::{kmeans_fit, ClusterAssignment};
use crate::dataio::Dataset;
use crate::error::{Error, Result};
use crate::matrix::Matrix;

/// Lower bound applied to every variance after each M-step; prevents
/// singular emissions on near-duplicate telemetry rows.
pub const VARIANCE_FLOOR: f64 = 1e-6;

/// Fitted Gaussian HMM with diagonal covariances.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GhmmModel {
    pub n_states: usize,
    /// Initial state distribution; sums to 1 within 1e-9.
    pub initial_probs: Vec<f64>,
    /// S x S row-stochastic transition matrix.
    pub transition: Matrix,
    /// S x m per-state emission means.
    pub means: Matrix,
    /// S x m per-state emission variances, all >= [`VARIANCE_FLOOR`].
    pub diag_vars: Matrix,
}

impl GhmmModel {
    /// Check the probabilistic invariants; returns a contract error naming
    /// the first violation. Useful after deserializing a checkpoint.
    pub fn validate(&self) -> Result<()> {
        let s = self.n_states;
        if self.initial_probs.len() != s
            || self.transition.n_rows() != s
            || self.transition.n_cols() != s
            || self.means.n_rows() != s
            || self.diag_vars.n_rows() != s
            || self.means.n_cols() != self.diag_vars.n_cols()
        {
            return Err(Error::Contract("model field shapes disagree".into()));
        }
        let pi_sum: f64 = self.initial_probs.iter().sum();
        if (pi_sum - 1.0).abs() > 1e-9 {
            return Err(Error::Contract(format!(
                "initial_probs sums to {pi_sum}, expected 1"
            )));
        }
        for row in 0..s {
            let sum: f64 = self.transition.row(row).iter().sum();
            if (sum - 1.0).abs() > 1e-9 {
                return Err(Error::Contract(format!(
                    "transition row {row} sums to {sum}, expected 1"
                )));
            }
        }
        if self
            .diag_vars
            .as_slice()
            .iter()
            .any(|&v| !(v >= VARIANCE_FLOOR))
        {
            return Err(Error::Contract(format!(
                "a variance is below the floor {VARIANCE_FLOOR}"
            )));
        }
        Ok(())
    }

    fn check_dims(&self, data: &Dataset) -> Result<()> {
        if self.means.n_cols() != data.n_features() {
            return Err(Error::Contract(format!(
                "model expects {} features, data has {}",
                self.means.n_cols(),
                data.n_features()
            )));
        }
        Ok(())
    }
}

/// Per-row log emission densities, n x S.
fn log_emissions(model: &GhmmModel, points: &Matrix) -> Matrix {
    let n = points.n_rows();
    let s = model.n_states;
    let m = points.n_cols();
    // Per-state constants: -0.5 * sum_d log(2 pi sigma^2_d).
    let mut constants = vec![0.0f64; s];
    for state in 0..s {
        let mut acc = 0.0;
        for d in 0..m {
            acc += (2.0 * std::f64::consts::PI * model.diag_vars.get(state, d)).ln();
        }
        constants[state] = -0.5 * acc;
    }
    let mut out = Matrix::zeros(n, s);
    for t in 0..n {
        let x = points.row(t);
        for state in 0..s {
            let mut quad = 0.0;
            for d in 0..m {
                let diff = x[d] - model.means.get(state, d);
                quad += diff * diff / model.diag_vars.get(state, d);
            }
            out.set(t, state, constants[state] - 0.5 * quad);
        }
    }
    out
}

/// Scaled forward pass. Returns the normalized forward variables, the
/// per-step normalizers `c_t`, the per-step shifts, and the log-likelihood.
struct ForwardPass {
    alpha: Matrix,
    scales: Vec<f64>,
    shifts: Vec<f64>,
    loglik: f64,
}

fn forward(model: &GhmmModel, log_b: &Matrix) -> Result<ForwardPass> {
    let n = log_b.n_rows();
    let s = model.n_states;
    let mut alpha = Matrix::zeros(n, s);
    let mut scales = Vec::with_capacity(n);
    let mut shifts = Vec::with_capacity(n);
    let mut loglik = 0.0;

    for t in 0..n {
        let shift = log_b
            .row(t)
            .iter()
            .fold(f64::NEG_INFINITY, |a, &b| a.max(b));
        if !shift.is_finite() {
            return Err(Error::Numeric(format!(
                "all emission densities vanished at step {t}"
            )));
        }
        shifts.push(shift);
        let mut c_t = 0.0;
        for j in 0..s {
            let b = (log_b.get(t, j) - shift).exp();
            let mass = if t == 0 {
                model.initial_probs[j]
            } else {
                let mut acc = 0.0;
                for i in 0..s {
                    acc += alpha.get(t - 1, i) * model.transition.get(i, j);
                }
                acc
            };
            let value = mass * b;
            alpha.set(t, j, value);
            c_t += value;
        }
        if !(c_t > 0.0) || !c_t.is_finite() {
            return Err(Error::Numeric(format!(
                "forward pass underflowed at step {t} (scale {c_t})"
            )));
        }
        for j in 0..s {
            alpha.set(t, j, alpha.get(t, j) / c_t);
        }
        scales.push(c_t);
        loglik += c_t.ln() + shift;
    }
    Ok(ForwardPass {
        alpha,
        scales,
        shifts,
        loglik,
    })
}

/// Scaled backward pass matching [`forward`]'s normalizers.
fn backward(model: &GhmmModel, log_b: &Matrix, fwd: &ForwardPass) -> Matrix {
    let n = log_b.n_rows();
    let s = model.n_states;
    let mut beta = Matrix::zeros(n, s);
    for j in 0..s {
        beta.set(n - 1, j, 1.0);
    }
    for t in (0..n - 1).rev() {
        for i in 0..s {
            let mut acc = 0.0;
            for j in 0..s {
                let b = (log_b.get(t + 1, j) - fwd.shifts[t + 1]).exp();
                acc += model.transition.get(i, j) * b * beta.get(t + 1, j);
            }
            beta.set(t, i, acc / fwd.scales[t + 1]);
        }
    }
    beta
}

/// Fit a Gaussian HMM by Baum-Welch (EM with scaled forward-backward).
///
/// Means initialize from a seeded K-means run; initial and transition
/// probabilities start uniform; variances start at the per-column sample
/// variance. Iteration stops when the log-likelihood improves by less than
/// `tol` or after `max_iter` EM steps. Returns the model and the
/// per-iteration log-likelihood trace (non-decreasing).
pub fn ghmm_fit(
    data: &Dataset,
    n_states: usize,
    seed: u64,
    max_iter: usize,
    tol: f64,
) -> Result<(GhmmModel, Vec<f64>)> {
    let n = data.n_rows();
    let m = data.n_features();
    if n_states == 0 {
        return Err(Error::Contract("n_states must be at least 1".into()));
    }
    if n_states > n {
        return Err(Error::Contract(format!(
            "n_states = {n_states} exceeds the number of rows ({n})"
        )));
    }
    let points = data.features();

    // Initialization: k-means centroids as means, pooled column variances,
    // uniform initial and transition probabilities.
    let (kmeans, _) = kmeans_fit(data, n_states, seed, 100, 1e-6)?;
    let means = kmeans.centroids.clone();
    let column_mean = points.row_mean()?;
    let mut pooled = vec![0.0f64; m];
    for t in 0..n {
        for d in 0..m {
            let diff = points.get(t, d) - column_mean[d];
            pooled[d] += diff * diff;
        }
    }
    let mut diag_vars = Matrix::zeros(n_states, m);
    for state in 0..n_states {
        for d in 0..m {
            diag_vars.set(state, d, (pooled[d] / n as f64).max(VARIANCE_FLOOR));
        }
    }
    let uniform = 1.0 / n_states as f64;
    let mut model = GhmmModel {
        n_states,
        initial_probs: vec![uniform; n_states],
        transition: {
            let mut t = Matrix::zeros(n_states, n_states);
            t.as_mut_slice().fill(uniform);
            t
        },
        means,
        diag_vars,
    };

    let mut fit_log = Vec::new();
    let mut previous = f64::NEG_INFINITY;
    for _ in 0..max_iter.max(1) {
        let log_b = log_emissions(&model, points);
        let fwd = forward(&model, &log_b)?;
        fit_log.push(fwd.loglik);

        let improvement = fwd.loglik - previous;
        if improvement.abs() < tol && previous.is_finite() {
            break;
        }
        previous = fwd.loglik;

        let beta = backward(&model, &log_b, &fwd);
        let s = n_states;

        // State posteriors gamma_t(i) = alpha_t(i) * beta_t(i).
        let mut gamma = Matrix::zeros(n, s);
        for t in 0..n {
            for i in 0..s {
                gamma.set(t, i, fwd.alpha.get(t, i) * beta.get(t, i));
            }
        }

        // M-step: initial probabilities.
        let mut new_pi: Vec<f64> = gamma.row(0).to_vec();
        let pi_sum: f64 = new_pi.iter().sum();
        for p in &mut new_pi {
            *p /= pi_sum;
        }

        // M-step: transitions from expected transition counts.
        let mut xi_sum = Matrix::zeros(s, s);
        for t in 0..n - 1 {
            for i in 0..s {
                let a = fwd.alpha.get(t, i);
                if a == 0.0 {
                    continue;
                }
                for j in 0..s {
                    let b = (log_b.get(t + 1, j) - fwd.shifts[t + 1]).exp();
                    let value = a * model.transition.get(i, j) * b * beta.get(t + 1, j)
                        / fwd.scales[t + 1];
                    xi_sum.set(i, j, xi_sum.get(i, j) + value);
                }
            }
        }
        let mut new_transition = Matrix::zeros(s, s);
        for i in 0..s {
            let row_sum: f64 = xi_sum.row(i).iter().sum();
            if row_sum > 0.0 {
                for j in 0..s {
                    new_transition.set(i, j, xi_sum.get(i, j) / row_sum);
                }
            } else {
                // State never leaves (or is never visited before the end);
                // keep it reachable with a uniform row.
                new_transition.row_mut(i).fill(uniform);
            }
        }

        // M-step: emission means and variances weighted by gamma.
        let mut new_means = Matrix::zeros(s, m);
        let mut new_vars = Matrix::zeros(s, m);
        for i in 0..s {
            let weight: f64 = (0..n).map(|t| gamma.get(t, i)).sum();
            if weight <= 0.0 {
                // Starved state: keep its previous parameters.
                new_means.row_mut(i).copy_from_slice(model.means.row(i));
                new_vars.row_mut(i).copy_from_slice(model.diag_vars.row(i));
                continue;
            }
            for d in 0..m {
                let mut acc = 0.0;
                for t in 0..n {
                    acc += gamma.get(t, i) * points.get(t, d);
                }
                new_means.set(i, d, acc / weight);
            }
            for d in 0..m {
                let mut acc = 0.0;
                for t in 0..n {
                    let diff = points.get(t, d) - new_means.get(i, d);
                    acc += gamma.get(t, i) * diff * diff;
                }
                new_vars.set(i, d, (acc / weight).max(VARIANCE_FLOOR));
            }
        }

        model.initial_probs = new_pi;
        model.transition = new_transition;
        model.means = new_means;
        model.diag_vars = new_vars;
    }

    model.validate()?;
    Ok((model, fit_log))
}

/// Viterbi decoding: the single most probable state path, computed in log
/// space. Ties break toward the lower state index. States absent from the
/// decoded path are compacted out (preserving ascending state order) so the
/// returned assignment's labels are dense.
pub fn ghmm_decode(model: &GhmmModel, data: &Dataset) -> Result<ClusterAssignment> {
    let path = ghmm_state_path(model, data)?;

    // Dense labels preserving state order: state indices stay themselves
    // whenever every state appears in the path.
    let mut visited: Vec<usize> = path.clone();
    visited.sort_unstable();
    visited.dedup();
    let labels: Vec<i64> = path
        .iter()
        .map(|state| visited.binary_search(state).expect("state visited") as i64)
        .collect();
    ClusterAssignment::from_labels(labels, false)
}

/// Most probable state sequence (Viterbi) as raw state indices, without the
/// dense relabeling [`ghmm_decode`] applies. Per-step ties resolve toward the
/// lower state index.
pub fn ghmm_state_path(model: &GhmmModel, data: &Dataset) -> Result<Vec<usize>> {
    model.check_dims(data)?;
    model.validate()?;
    let n = data.n_rows();
    let s = model.n_states;
    if n == 0 {
        return Err(Error::Contract("cannot decode an empty dataset".into()));
    }
    let log_b = log_emissions(model, data.features());

    let mut delta = vec![0.0f64; s];
    let mut backptr = Matrix::zeros(n, s);
    for j in 0..s {
        delta[j] = model.initial_probs[j].ln() + log_b.get(0, j);
    }
    for t in 1..n {
        let mut next = vec![f64::NEG_INFINITY; s];
        for j in 0..s {
            let mut best_i = 0usize;
            let mut best = f64::NEG_INFINITY;
            for i in 0..s {
                let score = delta[i] + model.transition.get(i, j).ln();
                if score > best {
                    best = score;
                    best_i = i;
                }
            }
            next[j] = best + log_b.get(t, j);
            backptr.set(t, j, best_i as f64);
        }
        delta = next;
    }

    let mut best_state = 0usize;
    let mut best = f64::NEG_INFINITY;
    for (j, &score) in delta.iter().enumerate() {
        if score > best {
            best = score;
            best_state = j;
        }
    }
    let mut path = vec![0usize; n];
    path[n - 1] = best_state;
    for t in (1..n).rev() {
        path[t - 1] = backptr.get(t, path[t]) as usize;
    }
    Ok(path)
}

/// Log-likelihood of the data under the model via the scaled forward
/// algorithm.
pub fn ghmm_loglik(model: &GhmmModel, data: &Dataset) -> Result<f64> {
    model.check_dims(data)?;
    model.validate()?;
    if data.n_rows() == 0 {
        return Err(Error::Contract("cannot score an empty dataset".into()));
    }
    let log_b = log_emissions(model, data.features());
    Ok(forward(model, &log_b)?.loglik)
}
