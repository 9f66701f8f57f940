//! Conditional tabular GAN: mode-specific normalization of continuous
//! columns, one-hot condition vectors built from cluster labels, alternating
//! adversarial training, and conditioned sampling of synthetic rows.
//!
//! The encoding follows the mode-specific convention for tabular data: each
//! continuous value becomes a scalar offset `alpha = (x - mu_k) / (4
//! sigma_k)` within a responsibility-sampled mixture mode `k`, clipped to
//! `[-1, 1]`, plus a one-hot mode indicator; the row's cluster label is
//! appended as a one-hot segment. The generator reproduces that layout
//! (tanh on offsets, softmax per one-hot segment) and the discriminator
//! scores encoded rows concatenated with their condition vector.

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::cluster::{ClusterAssignment, NOISE_LABEL};
use crate::dataio::{format_significant, Dataset};
use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::neural::{
    activation_vjp, adam_step, bce_with_logits, segment_ce_with_logits, Activation, AdamState,
    DenseNetwork, Gradients,
};

/// Smallest standard deviation a mixture mode may report. Chosen for
/// min-max normalized data, where column ranges are order 1.
pub const SIGMA_FLOOR: f64 = 1e-4;

/// Modes whose mixture weight falls below this are dropped and the
/// remaining weights renormalized.
pub const MODE_PRUNE_THRESHOLD: f64 = 0.005;

/// One Gaussian mode of a column's 1-D mixture.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Mode {
    pub weight: f64,
    pub mean: f64,
    pub std: f64,
}

/// Mixture model for one continuous column, modes sorted by ascending mean.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ColumnModes {
    pub modes: Vec<Mode>,
}

/// Per-column mixture models driving encode/decode of continuous values.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModeSpecificNormalizer {
    pub columns: Vec<ColumnModes>,
    pub prune_threshold: f64,
}

/// A continuous row in encoded form: per column `[alpha, mode one-hot...]`
/// blocks in column order, then the label one-hot segment.
#[derive(Clone, Debug, PartialEq)]
pub struct EncodedRow {
    pub values: Vec<f64>,
}

impl ModeSpecificNormalizer {
    pub fn n_columns(&self) -> usize {
        self.columns.len()
    }

    /// Start offset of each column's `[alpha, one-hot...]` block.
    fn column_offsets(&self) -> Vec<usize> {
        let mut offsets = Vec::with_capacity(self.columns.len());
        let mut at = 0usize;
        for column in &self.columns {
            offsets.push(at);
            at += 1 + column.modes.len();
        }
        offsets
    }

    /// Width of an encoded row including the label segment.
    pub fn encoded_width(&self, label_count: usize) -> usize {
        self.columns
            .iter()
            .map(|c| 1 + c.modes.len())
            .sum::<usize>()
            + label_count
    }

    /// `[start, end)` of the label one-hot segment.
    pub fn label_segment(&self, label_count: usize) -> (usize, usize) {
        let width = self.encoded_width(label_count);
        (width - label_count, width)
    }

    /// All one-hot segments (each column's mode indicator plus the label
    /// segment), for the generator's output activation.
    pub fn softmax_segments(&self, label_count: usize) -> Vec<(usize, usize)> {
        let mut segments = Vec::with_capacity(self.columns.len() + 1);
        for (offset, column) in self.column_offsets().into_iter().zip(&self.columns) {
            segments.push((offset + 1, offset + 1 + column.modes.len()));
        }
        segments.push(self.label_segment(label_count));
        segments
    }

    /// Check the mixture invariants: weights sum to 1 per column, every
    /// sigma at or above the floor, at least one mode per column.
    pub fn validate(&self) -> Result<()> {
        for (idx, column) in self.columns.iter().enumerate() {
            if column.modes.is_empty() {
                return Err(Error::Contract(format!("column {idx} has no modes")));
            }
            let total: f64 = column.modes.iter().map(|m| m.weight).sum();
            if (total - 1.0).abs() > 1e-9 {
                return Err(Error::Contract(format!(
                    "column {idx} mode weights sum to {total}, expected 1"
                )));
            }
            if column.modes.iter().any(|m| m.std < SIGMA_FLOOR) {
                return Err(Error::Contract(format!(
                    "column {idx} has a mode below the sigma floor"
                )));
            }
        }
        Ok(())
    }
}

/// Log density of `N(mean, std^2)` at `x`.
fn log_normal(x: f64, mean: f64, std: f64) -> f64 {
    let z = (x - mean) / std;
    -(std.ln() + 0.5 * (2.0 * std::f64::consts::PI).ln()) - 0.5 * z * z
}

/// EM fit of a `k`-component 1-D Gaussian mixture, k-means-seeded.
/// Returns the modes and the final log-likelihood.
fn fit_mixture_em(values: &[f64], k: usize, seed: u64) -> Result<(Vec<Mode>, f64)> {
    let n = values.len();
    let column = Matrix::from_vec(n, 1, values.to_vec())?;
    let data = Dataset::from_features(&["x"], column)?;
    let (kmeans, assignment) = crate::cluster::kmeans_fit(&data, k, seed, 100, 1e-9)?;

    // Seed the mixture from the k-means partition.
    let mut weights = vec![0.0f64; k];
    let mut means = vec![0.0f64; k];
    let mut vars = vec![0.0f64; k];
    let mut counts = vec![0usize; k];
    for (i, &label) in assignment.labels().iter().enumerate() {
        let c = label as usize;
        counts[c] += 1;
        vars[c] += (values[i] - kmeans.centroids.get(c, 0)).powi(2);
    }
    for c in 0..k {
        weights[c] = counts[c] as f64 / n as f64;
        means[c] = kmeans.centroids.get(c, 0);
        vars[c] = (vars[c] / counts[c] as f64).max(SIGMA_FLOOR * SIGMA_FLOOR);
    }

    let mut loglik = f64::NEG_INFINITY;
    let mut resp = vec![0.0f64; k];
    let mut resp_sum = vec![0.0f64; k];
    let mut resp_x = vec![0.0f64; k];
    let mut gammas = Matrix::zeros(n, k);
    for _ in 0..200 {
        // E-step with a per-point shift for stability.
        let mut new_loglik = 0.0;
        for (i, &x) in values.iter().enumerate() {
            let mut max_log = f64::NEG_INFINITY;
            for c in 0..k {
                let lw = if weights[c] > 0.0 {
                    weights[c].ln() + log_normal(x, means[c], vars[c].sqrt())
                } else {
                    f64::NEG_INFINITY
                };
                resp[c] = lw;
                max_log = max_log.max(lw);
            }
            let mut total = 0.0;
            for c in 0..k {
                resp[c] = (resp[c] - max_log).exp();
                total += resp[c];
            }
            for c in 0..k {
                gammas.set(i, c, resp[c] / total);
            }
            new_loglik += max_log + total.ln();
        }
        let improved = new_loglik - loglik;
        loglik = new_loglik;

        // M-step.
        resp_sum.fill(0.0);
        resp_x.fill(0.0);
        for i in 0..n {
            for c in 0..k {
                resp_sum[c] += gammas.get(i, c);
                resp_x[c] += gammas.get(i, c) * values[i];
            }
        }
        for c in 0..k {
            if resp_sum[c] <= f64::MIN_POSITIVE {
                // Starved component; its weight stays ~0 and pruning will
                // remove it.
                weights[c] = resp_sum[c] / n as f64;
                continue;
            }
            weights[c] = resp_sum[c] / n as f64;
            means[c] = resp_x[c] / resp_sum[c];
        }
        for c in 0..k {
            if resp_sum[c] <= f64::MIN_POSITIVE {
                continue;
            }
            let mut acc = 0.0;
            for i in 0..n {
                let diff = values[i] - means[c];
                acc += gammas.get(i, c) * diff * diff;
            }
            vars[c] = (acc / resp_sum[c]).max(SIGMA_FLOOR * SIGMA_FLOOR);
        }

        if improved.abs() < 1e-8 {
            break;
        }
    }
    let modes = (0..k)
        .map(|c| Mode {
            weight: weights[c],
            mean: means[c],
            std: vars[c].sqrt(),
        })
        .collect();
    Ok((modes, loglik))
}

/// Fit per-column 1-D Gaussian mixtures for mode-specific normalization.
///
/// For every continuous column the component count is chosen from
/// `1..=max_modes` by the Bayesian information criterion over k-means-seeded
/// EM fits (ties prefer fewer modes), then modes lighter than the pruning
/// threshold are dropped and the weights renormalized. Deterministic for a
/// given seed.
pub fn fit_mode_normalizer(
    data: &Dataset,
    max_modes: usize,
    seed: u64,
) -> Result<ModeSpecificNormalizer> {
    if max_modes == 0 {
        return Err(Error::Contract("max_modes must be at least 1".into()));
    }
    if data.n_features() == 0 {
        return Err(Error::Contract(
            "mode normalization needs at least one continuous column".into(),
        ));
    }
    let n = data.n_rows();
    if n == 0 {
        return Err(Error::Contract(
            "cannot fit a normalizer on an empty column".into(),
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let points = data.features();
    let mut columns = Vec::with_capacity(data.n_features());
    for col in 0..data.n_features() {
        let values = points.column(col);
        let mut best: Option<(f64, Vec<Mode>)> = None;
        for k in 1..=max_modes.min(n) {
            let sub_seed = rng.gen::<u64>();
            let (modes, loglik) = fit_mixture_em(&values, k, sub_seed)?;
            // BIC with 3k - 1 free parameters per k-component 1-D mixture.
            let bic = -2.0 * loglik + ((3 * k - 1) as f64) * (n as f64).ln();
            if best.as_ref().map_or(true, |(b, _)| bic < *b) {
                best = Some((bic, modes));
            }
        }
        let (_, mut modes) = best.expect("at least one candidate");

        // Prune featherweight modes, keeping at least the heaviest one.
        let heaviest = modes
            .iter()
            .map(|m| m.weight)
            .fold(f64::NEG_INFINITY, f64::max);
        modes.retain(|m| m.weight >= MODE_PRUNE_THRESHOLD || m.weight == heaviest);
        let total: f64 = modes.iter().map(|m| m.weight).sum();
        for mode in &mut modes {
            mode.weight /= total;
        }
        modes.sort_by(|a, b| a.mean.partial_cmp(&b.mean).unwrap());
        columns.push(ColumnModes { modes });
    }
    let normalizer = ModeSpecificNormalizer {
        columns,
        prune_threshold: MODE_PRUNE_THRESHOLD,
    };
    normalizer.validate()?;
    Ok(normalizer)
}

/// Encode one continuous row plus its cluster label.
///
/// Each column's mode is sampled with probability proportional to its
/// responsibility for the value; `alpha` is the 4-sigma-scaled offset within
/// the chosen mode, clipped to `[-1, 1]`.
pub fn encode_row(
    normalizer: &ModeSpecificNormalizer,
    features: &[f64],
    label: i64,
    label_count: usize,
    rng: &mut ChaCha8Rng,
) -> Result<EncodedRow> {
    if features.len() != normalizer.n_columns() {
        return Err(Error::Contract(format!(
            "row has {} values, normalizer expects {}",
            features.len(),
            normalizer.n_columns()
        )));
    }
    if label < 0 || label as usize >= label_count {
        return Err(Error::Contract(format!(
            "label {label} outside 0..{label_count}"
        )));
    }
    let width = normalizer.encoded_width(label_count);
    let mut values = vec![0.0f64; width];
    let mut at = 0usize;
    for (column, &x) in normalizer.columns.iter().zip(features) {
        if !x.is_finite() {
            return Err(Error::Numeric(format!(
                "cannot encode non-finite value {x}"
            )));
        }
        let k = column.modes.len();
        // Responsibilities in log space, shifted before exponentiating.
        let mut log_r: Vec<f64> = column
            .modes
            .iter()
            .map(|m| m.weight.ln() + log_normal(x, m.mean, m.std))
            .collect();
        let max_log = log_r.iter().fold(f64::NEG_INFINITY, |a, &b| a.max(b));
        let mut total = 0.0;
        for lr in &mut log_r {
            *lr = (*lr - max_log).exp();
            total += *lr;
        }
        let draw = rng.gen_range(0.0..1.0) * total;
        let mut chosen = k - 1;
        let mut cumulative = 0.0;
        for (idx, &r) in log_r.iter().enumerate() {
            cumulative += r;
            if draw < cumulative {
                chosen = idx;
                break;
            }
        }
        let mode = &column.modes[chosen];
        let alpha = ((x - mode.mean) / (4.0 * mode.std)).clamp(-1.0, 1.0);
        values[at] = alpha;
        values[at + 1 + chosen] = 1.0;
        at += 1 + k;
    }
    values[at + label as usize] = 1.0;
    Ok(EncodedRow { values })
}

/// Decode an encoded row back to continuous values and a label. Soft
/// one-hot segments (e.g. generator softmax output) resolve by argmax,
/// ties toward the lower index.
pub fn decode_row(
    normalizer: &ModeSpecificNormalizer,
    encoded: &EncodedRow,
    label_count: usize,
) -> Result<(Vec<f64>, i64)> {
    let width = normalizer.encoded_width(label_count);
    if encoded.values.len() != width {
        return Err(Error::Contract(format!(
            "encoded row has {} values, expected {width}",
            encoded.values.len()
        )));
    }
    let mut features = Vec::with_capacity(normalizer.n_columns());
    let mut at = 0usize;
    for column in &normalizer.columns {
        let k = column.modes.len();
        let alpha = encoded.values[at];
        let segment = &encoded.values[at + 1..at + 1 + k];
        let mut chosen = 0usize;
        for (idx, &value) in segment.iter().enumerate() {
            if value > segment[chosen] {
                chosen = idx;
            }
        }
        let mode = &column.modes[chosen];
        features.push(mode.mean + 4.0 * mode.std * alpha);
        at += 1 + k;
    }
    let label_values = &encoded.values[at..at + label_count];
    let mut label = 0usize;
    for (idx, &value) in label_values.iter().enumerate() {
        if value > label_values[label] {
            label = idx;
        }
    }
    Ok((features, label as i64))
}

/// Hyperparameters for adversarial training.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CtganConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub noise_dim: usize,
    pub hidden_sizes: Vec<usize>,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub max_modes: usize,
}

impl Default for CtganConfig {
    fn default() -> Self {
        CtganConfig {
            epochs: 300,
            batch_size: 64,
            noise_dim: 64,
            hidden_sizes: vec![128, 128],
            learning_rate: 2e-4,
            beta1: 0.5,
            beta2: 0.9,
            max_modes: 10,
        }
    }
}

impl CtganConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 || self.batch_size == 0 || self.noise_dim == 0 || self.max_modes == 0 {
            return Err(Error::Contract(
                "epochs, batch_size, noise_dim, and max_modes must be positive".into(),
            ));
        }
        if self.hidden_sizes.is_empty() || self.hidden_sizes.iter().any(|&h| h == 0) {
            return Err(Error::Contract(
                "hidden_sizes must be non-empty and positive".into(),
            ));
        }
        if !(self.learning_rate > 0.0) {
            return Err(Error::Contract("learning_rate must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return Err(Error::Contract("betas must lie in [0, 1)".into()));
        }
        Ok(())
    }
}

/// Trained GAN plus everything sampling needs: the normalizer, the label
/// vocabulary, and the empirical label distribution of the training rows.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CtganModel {
    pub generator: DenseNetwork,
    pub discriminator: DenseNetwork,
    pub normalizer: ModeSpecificNormalizer,
    pub noise_dim: usize,
    pub label_count: usize,
    /// Fraction of training rows per label; sampling without an explicit
    /// condition draws labels from this distribution.
    pub label_distribution: Vec<f64>,
    /// Continuous column names of the training data, for output schemas.
    pub feature_names: Vec<String>,
}

impl CtganModel {
    pub fn save_checkpoint(&self, path: &Path) -> Result<()> {
        let json = serde_json::to_string_pretty(self)
            .map_err(|e| Error::Data(format!("cannot serialize model: {e}")))?;
        std::fs::write(path, json).map_err(|e| Error::io(path, e))
    }

    pub fn load_checkpoint(path: &Path) -> Result<CtganModel> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let model: CtganModel = serde_json::from_str(&text)
            .map_err(|e| Error::Data(format!("invalid model checkpoint: {e}")))?;
        model.normalizer.validate()?;
        Ok(model)
    }
}

/// One logged training step.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainingStep {
    pub step: usize,
    pub epoch: usize,
    pub gen_loss: f64,
    pub disc_loss: f64,
}

/// Per-step loss history plus bookkeeping of rows excluded as noise.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainingLog {
    pub steps: Vec<TrainingStep>,
    pub noise_rows_dropped: usize,
}

impl TrainingLog {
    /// Write the loss curves as CSV: `step,epoch,gen_loss,disc_loss`.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut out = String::from("step,epoch,gen_loss,disc_loss\n");
        for step in &self.steps {
            out.push_str(&format!(
                "{},{},{},{}\n",
                step.step,
                step.epoch,
                format_significant(step.gen_loss, 12),
                format_significant(step.disc_loss, 12)
            ));
        }
        std::fs::write(path, out).map_err(|e| Error::io(path, e))
    }
}

fn add_gradients(into: &mut Gradients, other: &Gradients) {
    for (a, b) in into.weight_grads.iter_mut().zip(&other.weight_grads) {
        for (x, y) in a.as_mut_slice().iter_mut().zip(b.as_slice()) {
            *x += y;
        }
    }
    for (a, b) in into.bias_grads.iter_mut().zip(&other.bias_grads) {
        for (x, y) in a.iter_mut().zip(b) {
            *x += y;
        }
    }
}

/// Discriminator inputs get zero-mean Gaussian noise of this scale on both
/// the real and the generated side. Without it the discriminator wins by
/// keying on the crispness of real one-hot blocks — a signal the softmax
/// generator can never fully match — and stops policing the continuous
/// spread, which then collapses toward the mode centers as training runs.
const DISC_INPUT_NOISE_STD: f64 = 0.1;

/// One-sided label smoothing: real rows target this instead of 1.0, keeping
/// the discriminator from saturating and starving the generator of gradient.
const REAL_TARGET: f64 = 0.9;

/// The discriminator learns at this multiple of the configured learning
/// rate (a two-timescale update rule). The generator's pull toward the mode
/// centers is only balanced once the discriminator tracks the resulting
/// density change quickly enough to penalize it; at equal rates it lags and
/// the generated spread slowly collapses.
const DISC_LR_MULT: f64 = 4.0;

/// Train the conditional GAN on a clustered dataset.
///
/// Rows labeled as noise are dropped first (their count lands in the
/// returned log). Every step draws a condition batch by training-by-sampling
/// — a label uniformly at random, then a row uniformly among that label's
/// rows — updates the discriminator on real and generated encoded rows, then
/// updates the generator against the refreshed discriminator with the
/// non-saturating adversarial loss plus cross-entropy tying the generated
/// label segment to the requested condition. Losses are logged every step
/// and training always runs the configured number of epochs.
pub fn ctgan_train(
    data: &Dataset,
    labels: &ClusterAssignment,
    config: &CtganConfig,
    seed: u64,
) -> Result<(CtganModel, TrainingLog)> {
    config.validate()?;
    if labels.n_rows() != data.n_rows() {
        return Err(Error::Contract(format!(
            "assignment covers {} rows, dataset has {}",
            labels.n_rows(),
            data.n_rows()
        )));
    }
    if data.n_features() == 0 {
        return Err(Error::Contract(
            "training needs at least one continuous column".into(),
        ));
    }
    let label_count = labels.n_clusters();
    if label_count == 0 {
        return Err(Error::Contract(
            "no cluster labels to condition on (all rows are noise)".into(),
        ));
    }

    // Drop noise rows.
    let kept: Vec<usize> = labels
        .labels()
        .iter()
        .enumerate()
        .filter(|(_, &l)| l != NOISE_LABEL)
        .map(|(i, _)| i)
        .collect();
    let noise_rows_dropped = data.n_rows() - kept.len();
    let n = kept.len();
    if n < config.batch_size {
        return Err(Error::Contract(format!(
            "{n} usable rows is fewer than the batch size {}",
            config.batch_size
        )));
    }
    let mut rows_by_label: Vec<Vec<usize>> = vec![Vec::new(); label_count];
    for (local, &row) in kept.iter().enumerate() {
        rows_by_label[labels.labels()[row] as usize].push(local);
    }
    if let Some(empty) = rows_by_label.iter().position(|rows| rows.is_empty()) {
        return Err(Error::Contract(format!(
            "label {empty} has no rows left after dropping noise"
        )));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    // Normalizer fitted on the kept rows only.
    let feature_names = data.feature_names();
    let mut kept_features = Matrix::zeros(n, data.n_features());
    for (local, &row) in kept.iter().enumerate() {
        kept_features
            .row_mut(local)
            .copy_from_slice(data.features().row(row));
    }
    let kept_data = Dataset::from_features(&feature_names, kept_features)?;
    let normalizer_seed = rng.gen::<u64>();
    let normalizer = fit_mode_normalizer(&kept_data, config.max_modes, normalizer_seed)?;

    // Encode the kept rows once, consuming the shared stream.
    let width = normalizer.encoded_width(label_count);
    let mut encoded = Matrix::zeros(n, width);
    for (local, &row) in kept.iter().enumerate() {
        let enc = encode_row(
            &normalizer,
            data.features().row(row),
            labels.labels()[row],
            label_count,
            &mut rng,
        )?;
        encoded.row_mut(local).copy_from_slice(&enc.values);
    }

    let label_distribution: Vec<f64> = rows_by_label
        .iter()
        .map(|rows| rows.len() as f64 / n as f64)
        .collect();

    // Networks.
    let softmax_segments = normalizer.softmax_segments(label_count);
    let label_segment = normalizer.label_segment(label_count);
    let mut gen_sizes = vec![config.noise_dim + label_count];
    gen_sizes.extend(&config.hidden_sizes);
    gen_sizes.push(width);
    let mut gen_acts = vec![Activation::Relu; config.hidden_sizes.len()];
    gen_acts.push(Activation::SoftmaxSegments {
        segments: softmax_segments,
    });
    let gen_seed = rng.gen::<u64>();
    let mut generator = DenseNetwork::new(&gen_sizes, &gen_acts, gen_seed)?;

    let mut disc_sizes = vec![width + label_count];
    disc_sizes.extend(&config.hidden_sizes);
    disc_sizes.push(1);
    let mut disc_acts = vec![Activation::Relu; config.hidden_sizes.len()];
    disc_acts.push(Activation::Sigmoid);
    let disc_seed = rng.gen::<u64>();
    let mut discriminator = DenseNetwork::new(&disc_sizes, &disc_acts, disc_seed)?;

    let mut gen_adam = AdamState::new(&generator);
    let mut disc_adam = AdamState::new(&discriminator);

    let batch = config.batch_size;
    let steps_per_epoch = n.div_ceil(batch);
    let mut steps = Vec::with_capacity(config.epochs * steps_per_epoch);
    let ones = {
        let mut m = Matrix::zeros(batch, 1);
        m.as_mut_slice().fill(1.0);
        m
    };
    let smoothed = {
        let mut m = Matrix::zeros(batch, 1);
        m.as_mut_slice().fill(REAL_TARGET);
        m
    };
    let zeros = Matrix::zeros(batch, 1);
    let final_activation = generator.layers.last().expect("layers").activation.clone();

    let mut step_index = 0usize;
    for epoch in 0..config.epochs {
        for _ in 0..steps_per_epoch {
            // Conditions by training-by-sampling.
            let mut cond = Matrix::zeros(batch, label_count);
            let mut real = Matrix::zeros(batch, width);
            for b in 0..batch {
                let label = rng.gen_range(0..label_count);
                let rows = &rows_by_label[label];
                let row = rows[rng.gen_range(0..rows.len())];
                cond.set(b, label, 1.0);
                real.row_mut(b).copy_from_slice(encoded.row(row));
            }
            let mut noise = Matrix::zeros(batch, config.noise_dim);
            for value in noise.as_mut_slice() {
                *value = rng.sample(StandardNormal);
            }

            // Generator forward (cache reused for its update below).
            let gen_input = noise.hconcat(&cond)?;
            let gen_cache = generator.forward(&gen_input)?;
            let fake = gen_cache.output().clone();

            // Discriminator update on real (smoothed target) and fake
            // (target 0), both under instance noise.
            let mut disc_real_in = real.hconcat(&cond)?;
            let mut disc_fake_in = fake.hconcat(&cond)?;
            for value in disc_real_in.as_mut_slice() {
                *value += DISC_INPUT_NOISE_STD * rng.sample::<f64, _>(StandardNormal);
            }
            for value in disc_fake_in.as_mut_slice() {
                *value += DISC_INPUT_NOISE_STD * rng.sample::<f64, _>(StandardNormal);
            }
            let real_cache = discriminator.forward(&disc_real_in)?;
            let (loss_real, delta_real) =
                bce_with_logits(real_cache.final_pre_activation(), &smoothed)?;
            let mut disc_grads =
                discriminator.backward_from_final_delta(&real_cache, &delta_real)?;
            let fake_cache = discriminator.forward(&disc_fake_in)?;
            let (loss_fake, delta_fake) =
                bce_with_logits(fake_cache.final_pre_activation(), &zeros)?;
            let fake_grads =
                discriminator.backward_from_final_delta(&fake_cache, &delta_fake)?;
            add_gradients(&mut disc_grads, &fake_grads);
            adam_step(
                &mut discriminator,
                &disc_grads,
                &mut disc_adam,
                config.learning_rate * DISC_LR_MULT,
                config.beta1,
                config.beta2,
                1e-8,
            )?;

            // Generator update against the refreshed discriminator:
            // non-saturating adversarial term ...
            let adv_cache = discriminator.forward(&disc_fake_in)?;
            let (adv_loss, adv_delta) =
                bce_with_logits(adv_cache.final_pre_activation(), &ones)?;
            let through_disc = discriminator.backward_from_final_delta(&adv_cache, &adv_delta)?;
            let mut upstream = Matrix::zeros(batch, width);
            for b in 0..batch {
                upstream
                    .row_mut(b)
                    .copy_from_slice(&through_disc.input_grad.row(b)[..width]);
            }
            let mut gen_delta = activation_vjp(
                &final_activation,
                gen_cache.final_pre_activation(),
                gen_cache.output(),
                &upstream,
            )?;
            // ... plus cross-entropy pinning the label segment to the
            // condition (fused with its softmax).
            let mut label_targets = Matrix::zeros(batch, width);
            for b in 0..batch {
                for l in 0..label_count {
                    label_targets.set(b, label_segment.0 + l, cond.get(b, l));
                }
            }
            let (ce_loss, ce_delta) = segment_ce_with_logits(
                gen_cache.final_pre_activation(),
                &label_targets,
                &[label_segment],
            )?;
            for (a, b) in gen_delta
                .as_mut_slice()
                .iter_mut()
                .zip(ce_delta.as_slice())
            {
                *a += b;
            }
            let gen_grads = generator.backward_from_final_delta(&gen_cache, &gen_delta)?;
            adam_step(
                &mut generator,
                &gen_grads,
                &mut gen_adam,
                config.learning_rate,
                config.beta1,
                config.beta2,
                1e-8,
            )?;

            let gen_loss = adv_loss + ce_loss;
            let disc_loss = loss_real + loss_fake;
            if !gen_loss.is_finite() || !disc_loss.is_finite() {
                return Err(Error::Numeric(format!(
                    "non-finite loss at training step {step_index}"
                )));
            }
            steps.push(TrainingStep {
                step: step_index,
                epoch,
                gen_loss,
                disc_loss,
            });
            step_index += 1;
        }
    }

    let model = CtganModel {
        generator,
        discriminator,
        normalizer,
        noise_dim: config.noise_dim,
        label_count,
        label_distribution,
        feature_names: feature_names.iter().map(|s| s.to_string()).collect(),
    };
    let log = TrainingLog {
        steps,
        noise_rows_dropped,
    };
    Ok((model, log))
}

/// Generate `n` encoded rows and the condition labels used for them.
/// Exposed for diagnostics on the raw generator output (e.g. how often the
/// generated label segment agrees with the requested condition).
pub fn sample_encoded(
    model: &CtganModel,
    n: usize,
    condition: Option<i64>,
    seed: u64,
) -> Result<(Matrix, Vec<i64>)> {
    if let Some(c) = condition {
        if c < 0 || c as usize >= model.label_count {
            return Err(Error::Contract(format!(
                "condition {c} outside 0..{}",
                model.label_count
            )));
        }
    }
    let width = model.normalizer.encoded_width(model.label_count);
    if n == 0 {
        return Ok((Matrix::zeros(0, width), Vec::new()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut labels = Vec::with_capacity(n);
    let mut input = Matrix::zeros(n, model.noise_dim + model.label_count);
    for r in 0..n {
        let label = match condition {
            Some(c) => c as usize,
            None => {
                let draw = rng.gen_range(0.0..1.0);
                let mut cumulative = 0.0;
                let mut chosen = model.label_count - 1;
                for (idx, &p) in model.label_distribution.iter().enumerate() {
                    cumulative += p;
                    if draw < cumulative {
                        chosen = idx;
                        break;
                    }
                }
                chosen
            }
        };
        labels.push(label as i64);
        for d in 0..model.noise_dim {
            input.set(r, d, rng.sample(StandardNormal));
        }
        input.set(r, model.noise_dim + label, 1.0);
    }
    let cache = model.generator.forward(&input)?;
    Ok((cache.output().clone(), labels))
}

/// Sample a synthetic dataset from a trained model.
///
/// Conditions come from the explicit `condition` label when given, otherwise
/// from the empirical label distribution of the training rows. The output
/// label column carries the condition used for each row — exact by
/// construction — while continuous values decode from the generator output.
pub fn ctgan_sample(
    model: &CtganModel,
    n: usize,
    condition: Option<i64>,
    seed: u64,
) -> Result<Dataset> {
    let (encoded, labels) = sample_encoded(model, n, condition, seed)?;
    let names: Vec<&str> = model.feature_names.iter().map(|s| s.as_str()).collect();
    let mut features = Matrix::zeros(n, model.normalizer.n_columns());
    for r in 0..n {
        let row = EncodedRow {
            values: encoded.row(r).to_vec(),
        };
        let (values, _) = decode_row(&model.normalizer, &row, model.label_count)?;
        features.row_mut(r).copy_from_slice(&values);
    }
    Dataset::from_features(&names, features)?.with_label_column("label", labels)
}
