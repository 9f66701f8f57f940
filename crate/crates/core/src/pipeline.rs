//! End-to-end orchestration: cluster the real data with every configured
//! algorithm, train one conditional GAN per conditioning algorithm, re-cluster
//! each synthetic dataset with its conditioning algorithm, and compare the
//! cluster-validation scores of both sides in a similarity report.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::cluster::{
    agglomerative_fit, dbscan_fit, kmeans_fit, ClusterAssignment,
};
use crate::config::{stage_seed_map, Algorithm, MetricSpace, RunConfig};
use crate::ctgan::{ctgan_sample, ctgan_train, CtganModel, TrainingLog};
use crate::dataio::{
    inverse_normalize, load_csv, minmax_normalize, strip_quasi_identifiers, Dataset,
};
use crate::error::{Error, Result};
use crate::ghmm::{ghmm_decode, ghmm_fit};
use crate::matrix::Matrix;
use crate::metrics::{score_all, select_dbscan_params, select_kmeans_k, ValidationScores};
use crate::pca::{pca_fit, pca_fit_fraction, pca_transform};
use crate::plot::{write_loss_svg, write_projection_csv, write_scatter_svg};

/// Iteration cap and convergence tolerance for pipeline GHMM fits.
const GHMM_MAX_ITER: usize = 200;
const GHMM_TOL: f64 = 1e-6;
/// Iteration cap and tolerance for the final K-means fit at the selected k.
const KMEANS_MAX_ITER: usize = 300;
const KMEANS_TOL: f64 = 1e-9;
/// Cumulative-variance fraction kept by the reduced metric space.
const PCA_METRIC_FRACTION: f64 = 0.95;
/// Divisor guard for relative deviations on near-zero scores.
const REL_DIV_EPSILON: f64 = 1e-12;

/// Seeds consumed by one clustering suite; algorithms without internal
/// randomness ignore them.
#[derive(Clone, Copy, Debug)]
pub struct SuiteSeeds {
    pub kmeans: u64,
    pub ghmm: u64,
}

/// One algorithm's result within a clustering suite.
#[derive(Clone, Debug)]
pub struct SuiteEntry {
    pub algorithm: Algorithm,
    /// Human-readable selected hyperparameters, e.g. `k=2` or
    /// `eps=0.2, min_pts=5`.
    pub selection: String,
    pub assignment: ClusterAssignment,
    pub scores: ValidationScores,
}

/// Per-metric deviation between a real and a synthetic score set.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricDeviation {
    pub silhouette: f64,
    pub calinski_harabasz: f64,
    pub davies_bouldin: f64,
}

/// Real-versus-synthetic comparison for one algorithm.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AlgorithmComparison {
    pub real: ValidationScores,
    pub synthetic: ValidationScores,
    pub absolute_deviation: MetricDeviation,
    pub relative_deviation: MetricDeviation,
    /// Present iff a similarity threshold was configured: true when all
    /// three relative deviations are within it.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub preserved: Option<bool>,
}

/// Reproducibility record embedded in every report.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize, Default)]
pub struct Provenance {
    pub config_hash: String,
    pub metric_space: String,
    /// Stage tag → derived seed for every stochastic stage.
    pub seeds: BTreeMap<String, u64>,
    /// Conditioning algorithm → rows excluded from GAN training as noise.
    pub noise_rows_dropped: BTreeMap<String, usize>,
    /// Algorithm and side → selected hyperparameters.
    pub selection: BTreeMap<String, String>,
}

/// Complete output of one pipeline run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimilarityReport {
    /// RFC 3339 creation time; the only field excluded from byte-for-byte
    /// reproducibility comparisons.
    pub generated_at: String,
    pub provenance: Provenance,
    /// Algorithm name → score comparison, in sorted key order.
    pub algorithms: BTreeMap<String, AlgorithmComparison>,
}

impl SimilarityReport {
    /// Serialize with stable key order and a trailing newline.
    pub fn to_json(&self) -> String {
        let mut text = serde_json::to_string_pretty(self).expect("report serializes");
        text.push('\n');
        text
    }

    pub fn from_json(text: &str) -> Result<SimilarityReport> {
        serde_json::from_str(text)
            .map_err(|e| Error::Data(format!("malformed similarity report: {e}")))
    }
}

fn with_algorithm(alg: Algorithm, err: Error) -> Error {
    match err {
        Error::Usage(m) => Error::Usage(format!("{alg}: {m}")),
        Error::Data(m) => Error::Data(format!("{alg}: {m}")),
        Error::Contract(m) => Error::Contract(format!("{alg}: {m}")),
        Error::Numeric(m) => Error::Numeric(format!("{alg}: {m}")),
        io @ Error::Io { .. } => io,
    }
}

fn with_stage(stage: &str, err: Error) -> Error {
    match err {
        Error::Usage(m) => Error::Usage(format!("stage {stage}: {m}")),
        Error::Data(m) => Error::Data(format!("stage {stage}: {m}")),
        Error::Contract(m) => Error::Contract(format!("stage {stage}: {m}")),
        Error::Numeric(m) => Error::Numeric(format!("stage {stage}: {m}")),
        io @ Error::Io { .. } => io,
    }
}

/// Dataset on which validation metrics are computed: the data itself for the
/// full space, or its projection onto the leading principal components
/// covering ≥ 95% of the variance for the reduced space.
pub fn metric_view(data: &Dataset, space: MetricSpace) -> Result<Dataset> {
    match space {
        MetricSpace::Full => Ok(data.clone()),
        MetricSpace::PcaReduced => {
            let model = pca_fit_fraction(data, PCA_METRIC_FRACTION)?;
            pca_transform(&model, data)
        }
    }
}

fn cluster_one(
    data: &Dataset,
    config: &RunConfig,
    algorithm: Algorithm,
    seeds: SuiteSeeds,
) -> Result<(String, ClusterAssignment)> {
    match algorithm {
        Algorithm::KMeans => {
            let (k, _) = select_kmeans_k(data, config.k_min, config.k_max, seeds.kmeans)?;
            let (_, assignment) =
                kmeans_fit(data, k, seeds.kmeans, KMEANS_MAX_ITER, KMEANS_TOL)?;
            Ok((format!("k={k}"), assignment))
        }
        Algorithm::Dbscan => {
            let (params, _) =
                select_dbscan_params(data, &config.eps_grid, &config.minpts_grid)?;
            let assignment = dbscan_fit(data, &params);
            Ok((
                format!("eps={}, min_pts={}", params.eps, params.min_pts),
                assignment,
            ))
        }
        Algorithm::Ghmm => {
            let (model, _) =
                ghmm_fit(data, config.ghmm_states, seeds.ghmm, GHMM_MAX_ITER, GHMM_TOL)?;
            let assignment = ghmm_decode(&model, data)?;
            Ok((format!("states={}", config.ghmm_states), assignment))
        }
        Algorithm::Agglomerative => {
            let (_, assignment) = agglomerative_fit(data, config.agglomerative_k)?;
            Ok((format!("k={}", config.agglomerative_k), assignment))
        }
    }
}

/// Run every configured algorithm's selection procedure on `data` and score
/// the resulting partitions in the configured metric space.
///
/// Entries come back in config order; errors carry the algorithm's name.
pub fn run_clustering_suite(
    data: &Dataset,
    config: &RunConfig,
    seeds: SuiteSeeds,
) -> Result<Vec<SuiteEntry>> {
    config.validate()?;
    let scoring = metric_view(data, config.metric_space)?;
    let mut entries = Vec::with_capacity(config.algorithms.len());
    for &algorithm in &config.algorithms {
        let (selection, assignment) =
            cluster_one(data, config, algorithm, seeds).map_err(|e| with_algorithm(algorithm, e))?;
        let scores =
            score_all(&scoring, &assignment).map_err(|e| with_algorithm(algorithm, e))?;
        entries.push(SuiteEntry {
            algorithm,
            selection,
            assignment,
            scores,
        });
    }
    Ok(entries)
}

/// Train the conditional GAN on `data` conditioned on `labels`, then sample
/// a synthetic replacement dataset with as many rows as the real data had
/// non-noise rows. The synthetic label column records the condition each row
/// was generated under.
pub fn anonymize(
    data: &Dataset,
    labels: &ClusterAssignment,
    config: &RunConfig,
    train_seed: u64,
    sample_seed: u64,
) -> Result<(Dataset, CtganModel, TrainingLog)> {
    let (model, log) = ctgan_train(data, labels, &config.ctgan, train_seed)?;
    let n_synth = labels.n_rows() - labels.noise_count();
    let synthetic = ctgan_sample(&model, n_synth, None, sample_seed)?;
    Ok((synthetic, model, log))
}

fn deviations(real: &ValidationScores, synth: &ValidationScores) -> (MetricDeviation, MetricDeviation) {
    let abs = |r: f64, s: f64| (r - s).abs();
    let rel = |r: f64, s: f64| (r - s).abs() / r.abs().max(REL_DIV_EPSILON);
    (
        MetricDeviation {
            silhouette: abs(real.silhouette, synth.silhouette),
            calinski_harabasz: abs(real.calinski_harabasz, synth.calinski_harabasz),
            davies_bouldin: abs(real.davies_bouldin, synth.davies_bouldin),
        },
        MetricDeviation {
            silhouette: rel(real.silhouette, synth.silhouette),
            calinski_harabasz: rel(real.calinski_harabasz, synth.calinski_harabasz),
            davies_bouldin: rel(real.davies_bouldin, synth.davies_bouldin),
        },
    )
}

/// Compare real and synthetic score sets per algorithm. Both maps must have
/// identical keys. The returned report carries empty provenance; the
/// pipeline fills it in.
pub fn assess_similarity(
    real: &BTreeMap<String, ValidationScores>,
    synthetic: &BTreeMap<String, ValidationScores>,
    threshold: Option<f64>,
) -> Result<SimilarityReport> {
    let real_keys: Vec<&String> = real.keys().collect();
    let synth_keys: Vec<&String> = synthetic.keys().collect();
    if real_keys != synth_keys {
        return Err(Error::Contract(format!(
            "algorithm keys differ: real has [{}], synthetic has [{}]",
            real_keys.iter().map(|s| s.as_str()).collect::<Vec<_>>().join(", "),
            synth_keys.iter().map(|s| s.as_str()).collect::<Vec<_>>().join(", "),
        )));
    }
    let mut algorithms = BTreeMap::new();
    for (name, r) in real {
        let s = &synthetic[name];
        let (absolute, relative) = deviations(r, s);
        let preserved = threshold.map(|t| {
            relative.silhouette <= t
                && relative.calinski_harabasz <= t
                && relative.davies_bouldin <= t
        });
        algorithms.insert(
            name.clone(),
            AlgorithmComparison {
                real: *r,
                synthetic: *s,
                absolute_deviation: absolute,
                relative_deviation: relative,
                preserved,
            },
        );
    }
    Ok(SimilarityReport {
        generated_at: String::new(),
        provenance: Provenance::default(),
        algorithms,
    })
}

/// First two principal-component coordinates of `data` (second coordinate
/// zero when only one component exists), with the model computing
/// `config.pca_components` components.
fn projection_2d(data: &Dataset, config: &RunConfig) -> Result<Matrix> {
    let max_p = data.n_features().min(data.n_rows().saturating_sub(1)).max(1);
    let p = config.pca_components.min(max_p);
    let model = pca_fit(data, p)?;
    let scores = pca_transform(&model, data)?;
    let mut out = Matrix::zeros(data.n_rows(), 2);
    for r in 0..data.n_rows() {
        out.set(r, 0, scores.features().get(r, 0));
        if p > 1 {
            out.set(r, 1, scores.features().get(r, 1));
        }
    }
    Ok(out)
}

/// Tracks files written by a run so a failing stage can remove partial
/// output before the error propagates.
struct ArtifactSet {
    written: Vec<PathBuf>,
}

impl ArtifactSet {
    fn new() -> ArtifactSet {
        ArtifactSet { written: Vec::new() }
    }

    fn record(&mut self, path: PathBuf) {
        self.written.push(path);
    }

    fn remove_all(&self) {
        for path in &self.written {
            let _ = std::fs::remove_file(path);
        }
    }
}

/// Run the full anonymization pipeline and emit its artifacts into `out_dir`:
/// `report.json` plus, per conditioning algorithm, the synthetic dataset in
/// original units, real and synthetic 2-D projections (CSV and SVG), and the
/// GAN loss trace (CSV and SVG).
///
/// A stage failure names the stage and removes the files written so far.
pub fn run_pipeline(config: &RunConfig, out_dir: &Path) -> Result<SimilarityReport> {
    let mut artifacts = ArtifactSet::new();
    let result = run_pipeline_inner(config, out_dir, &mut artifacts);
    if result.is_err() {
        artifacts.remove_all();
    }
    result
}

fn run_pipeline_inner(
    config: &RunConfig,
    out_dir: &Path,
    artifacts: &mut ArtifactSet,
) -> Result<SimilarityReport> {
    config.validate().map_err(|e| with_stage("config", e))?;
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;

    // Load and prepare the real data.
    let raw = load_csv(&config.input_path, &config.schema).map_err(|e| with_stage("load", e))?;
    let stripped = strip_quasi_identifiers(&raw).map_err(|e| with_stage("prepare", e))?;
    let (normalized, norm_params) = minmax_normalize(&stripped);

    // Cluster the real data with every configured algorithm.
    let real_seeds = SuiteSeeds {
        kmeans: config.seed_for("kmeans"),
        ghmm: config.seed_for("ghmm"),
    };
    let real_suite = run_clustering_suite(&normalized, config, real_seeds)
        .map_err(|e| with_stage("real clustering", e))?;

    let mut provenance = Provenance {
        config_hash: config.hash(),
        metric_space: config.metric_space.name().to_string(),
        seeds: stage_seed_map(config),
        noise_rows_dropped: BTreeMap::new(),
        selection: BTreeMap::new(),
    };
    for entry in &real_suite {
        provenance
            .selection
            .insert(format!("{}_real", entry.algorithm), entry.selection.clone());
    }

    let mut real_scores = BTreeMap::new();
    let mut synth_scores = BTreeMap::new();

    // One anonymization branch per conditioning algorithm.
    for entry in &real_suite {
        let alg = entry.algorithm;
        let branch = |stage: &str| format!("{stage} [{alg}]");

        let (synthetic, _model, log) = anonymize(
            &normalized,
            &entry.assignment,
            config,
            config.seed_for(&format!("ctgan_{alg}")),
            config.seed_for(&format!("sample_{alg}")),
        )
        .map_err(|e| with_stage(&branch("anonymize"), e))?;
        provenance
            .noise_rows_dropped
            .insert(alg.name().to_string(), log.noise_rows_dropped);

        // Re-cluster the synthetic data with the same selection procedure.
        let mut synth_config = config.clone();
        synth_config.algorithms = vec![alg];
        let synth_seed = config.seed_for(&format!("synth_{alg}"));
        let synth_seeds = SuiteSeeds {
            kmeans: synth_seed,
            ghmm: synth_seed,
        };
        let synth_suite = run_clustering_suite(&synthetic, &synth_config, synth_seeds)
            .map_err(|e| with_stage(&branch("synthetic clustering"), e))?;
        let synth_entry = &synth_suite[0];
        provenance
            .selection
            .insert(format!("{alg}_synthetic"), synth_entry.selection.clone());

        real_scores.insert(alg.name().to_string(), entry.scores);
        synth_scores.insert(alg.name().to_string(), synth_entry.scores);

        // Branch artifacts: synthetic rows in original units, projections,
        // loss curves.
        let emit = |artifacts: &mut ArtifactSet, name: String, write: &dyn Fn(&Path) -> Result<()>| {
            let path = out_dir.join(name);
            write(&path).map_err(|e| with_stage(&branch("artifacts"), e))?;
            artifacts.record(path);
            Ok::<(), Error>(())
        };

        let denormalized = inverse_normalize(&synthetic, &norm_params)
            .map_err(|e| with_stage(&branch("artifacts"), e))?;
        emit(artifacts, format!("synthetic_{alg}.csv"), &|p| {
            denormalized.write_csv(p)
        })?;

        let real_proj = projection_2d(&normalized, config)
            .map_err(|e| with_stage(&branch("artifacts"), e))?;
        emit(artifacts, format!("pca_real_{alg}.csv"), &|p| {
            write_projection_csv(p, &real_proj, entry.assignment.labels())
        })?;
        emit(artifacts, format!("pca_real_{alg}.svg"), &|p| {
            write_scatter_svg(p, &format!("real data, {alg} clusters"), &real_proj, entry.assignment.labels())
        })?;

        let synth_proj = projection_2d(&synthetic, config)
            .map_err(|e| with_stage(&branch("artifacts"), e))?;
        emit(artifacts, format!("pca_synth_{alg}.csv"), &|p| {
            write_projection_csv(p, &synth_proj, synth_entry.assignment.labels())
        })?;
        emit(artifacts, format!("pca_synth_{alg}.svg"), &|p| {
            write_scatter_svg(p, &format!("synthetic data, {alg} clusters"), &synth_proj, synth_entry.assignment.labels())
        })?;

        emit(artifacts, format!("loss_{alg}.csv"), &|p| log.write_csv(p))?;
        emit(artifacts, format!("loss_{alg}.svg"), &|p| {
            write_loss_svg(p, &format!("adversarial losses, {alg} conditioning"), &log)
        })?;
    }

    // Assemble and emit the report.
    let mut report = assess_similarity(&real_scores, &synth_scores, config.threshold)
        .map_err(|e| with_stage("assess", e))?;
    report.generated_at = chrono::Utc::now().to_rfc3339();
    report.provenance = provenance;
    let report_path = out_dir.join("report.json");
    std::fs::write(&report_path, report.to_json()).map_err(|e| Error::io(&report_path, e))?;
    artifacts.record(report_path);

    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataio::generate_toy_telemetry;
    use tempfile::tempdir;

    fn scores(s: f64, ch: f64, db: f64) -> ValidationScores {
        ValidationScores {
            silhouette: s,
            calinski_harabasz: ch,
            davies_bouldin: db,
            n_effective_rows: 100,
        }
    }

    fn toy_config_sep(dir: &Path, algorithms: Vec<Algorithm>, separation: f64) -> RunConfig {
        let (data, _) = generate_toy_telemetry(11, 160, 2, 4, separation).unwrap();
        let input = dir.join("toy.csv");
        data.write_csv(&input).unwrap();
        let mut config = RunConfig::new(input, data.schema().clone());
        config.algorithms = algorithms;
        config.k_min = 2;
        config.k_max = 4;
        config.eps_grid = vec![0.1, 0.2, 0.3];
        config.minpts_grid = vec![3, 5];
        config.ghmm_states = 2;
        config.agglomerative_k = 2;
        config.ctgan.epochs = 3;
        config.ctgan.batch_size = 32;
        config.ctgan.noise_dim = 8;
        config.ctgan.hidden_sizes = vec![16];
        config.ctgan.max_modes = 2;
        config
    }

    fn toy_config(dir: &Path, algorithms: Vec<Algorithm>) -> RunConfig {
        toy_config_sep(dir, algorithms, 8.0)
    }

    #[test]
    fn identical_scores_give_zero_deviations_and_preserved() {
        let mut real = BTreeMap::new();
        real.insert("kmeans".to_string(), scores(0.6, 100.0, 0.5));
        let report = assess_similarity(&real, &real, Some(0.05)).unwrap();
        let cmp = &report.algorithms["kmeans"];
        assert_eq!(cmp.absolute_deviation.silhouette, 0.0);
        assert_eq!(cmp.relative_deviation.calinski_harabasz, 0.0);
        assert_eq!(cmp.preserved, Some(true));

        let no_threshold = assess_similarity(&real, &real, None).unwrap();
        assert_eq!(no_threshold.algorithms["kmeans"].preserved, None);
    }

    #[test]
    fn deviations_are_recomputable_from_embedded_scores() {
        let mut real = BTreeMap::new();
        let mut synth = BTreeMap::new();
        real.insert("kmeans".to_string(), scores(0.642, 23342.92, 0.599));
        synth.insert("kmeans".to_string(), scores(0.634, 23714.57, 0.598));
        let report = assess_similarity(&real, &synth, Some(0.05)).unwrap();
        let cmp = &report.algorithms["kmeans"];
        assert_eq!(
            cmp.absolute_deviation.silhouette,
            (cmp.real.silhouette - cmp.synthetic.silhouette).abs()
        );
        assert_eq!(
            cmp.relative_deviation.davies_bouldin,
            (cmp.real.davies_bouldin - cmp.synthetic.davies_bouldin).abs()
                / cmp.real.davies_bouldin.abs()
        );
        assert_eq!(cmp.preserved, Some(true));
    }

    #[test]
    fn mismatched_keys_are_rejected() {
        let mut real = BTreeMap::new();
        real.insert("kmeans".to_string(), scores(0.6, 100.0, 0.5));
        let mut synth = BTreeMap::new();
        synth.insert("dbscan".to_string(), scores(0.6, 100.0, 0.5));
        let err = assess_similarity(&real, &synth, None).unwrap_err().to_string();
        assert!(err.contains("kmeans") && err.contains("dbscan"), "{err}");
    }

    #[test]
    fn zero_real_score_uses_division_guard() {
        let mut real = BTreeMap::new();
        let mut synth = BTreeMap::new();
        real.insert("kmeans".to_string(), scores(0.0, 100.0, 0.5));
        synth.insert("kmeans".to_string(), scores(0.1, 100.0, 0.5));
        let report = assess_similarity(&real, &synth, None).unwrap();
        let rel = report.algorithms["kmeans"].relative_deviation.silhouette;
        assert_eq!(rel, 0.1 / REL_DIV_EPSILON);
    }

    #[test]
    fn suite_runs_only_selected_algorithms_in_config_order() {
        let dir = tempdir().unwrap();
        let config = toy_config(dir.path(), vec![Algorithm::Agglomerative, Algorithm::KMeans]);
        let data = load_csv(&config.input_path, &config.schema).unwrap();
        let (normalized, _) = minmax_normalize(&strip_quasi_identifiers(&data).unwrap());
        let seeds = SuiteSeeds { kmeans: 1, ghmm: 2 };
        let suite = run_clustering_suite(&normalized, &config, seeds).unwrap();
        assert_eq!(suite.len(), 2);
        assert_eq!(suite[0].algorithm, Algorithm::Agglomerative);
        assert_eq!(suite[1].algorithm, Algorithm::KMeans);
        // Two well-separated blobs: both algorithms should find k = 2 and
        // score it clearly better than chance.
        assert_eq!(suite[1].selection, "k=2");
        for entry in &suite {
            assert!(entry.scores.silhouette > 0.55, "{:?}", entry.scores);
        }
    }

    #[test]
    fn all_four_algorithms_score_strongly_on_separated_blobs() {
        // Min-max normalization stretches pure-noise axes to the full unit
        // interval, so a wide raw separation is needed for a high silhouette
        // in the normalized space.
        let dir = tempdir().unwrap();
        let config = toy_config_sep(dir.path(), Algorithm::ALL.to_vec(), 30.0);
        let data = load_csv(&config.input_path, &config.schema).unwrap();
        let (normalized, _) = minmax_normalize(&strip_quasi_identifiers(&data).unwrap());
        let seeds = SuiteSeeds { kmeans: 1, ghmm: 2 };
        let suite = run_clustering_suite(&normalized, &config, seeds).unwrap();
        assert_eq!(suite.len(), 4);
        for entry in &suite {
            assert!(
                entry.scores.silhouette >= 0.7,
                "{}: {:?}",
                entry.algorithm,
                entry.scores
            );
        }
    }

    #[test]
    fn suite_errors_name_the_algorithm() {
        let dir = tempdir().unwrap();
        let mut config = toy_config(dir.path(), vec![Algorithm::Dbscan]);
        // An eps far below any pairwise distance leaves every point as noise,
        // so the grid search cannot find a scoreable clustering.
        config.eps_grid = vec![1e-9];
        config.minpts_grid = vec![3];
        let data = load_csv(&config.input_path, &config.schema).unwrap();
        let (normalized, _) = minmax_normalize(&strip_quasi_identifiers(&data).unwrap());
        let err = run_clustering_suite(&normalized, &config, SuiteSeeds { kmeans: 1, ghmm: 2 })
            .unwrap_err()
            .to_string();
        assert!(err.contains("dbscan"), "{err}");
    }

    #[test]
    fn metric_view_reduces_dimensionality_when_asked() {
        let (data, _) = generate_toy_telemetry(3, 60, 2, 5, 9.0).unwrap();
        let full = metric_view(&data, MetricSpace::Full).unwrap();
        assert_eq!(full.n_features(), 5);
        let reduced = metric_view(&data, MetricSpace::PcaReduced).unwrap();
        assert!(reduced.n_features() < 5, "blob data concentrates variance");
        assert_eq!(reduced.n_rows(), data.n_rows());
    }

    #[test]
    fn anonymize_sizes_output_by_non_noise_count() {
        let dir = tempdir().unwrap();
        let config = toy_config(dir.path(), vec![Algorithm::KMeans]);
        let data = load_csv(&config.input_path, &config.schema).unwrap();
        let (normalized, _) = minmax_normalize(&strip_quasi_identifiers(&data).unwrap());
        let mut labels: Vec<i64> = vec![0; normalized.n_rows()];
        for l in labels.iter_mut().skip(100) {
            *l = 1;
        }
        labels[0] = -1;
        labels[1] = -1;
        let assignment = ClusterAssignment::from_labels(labels, true).unwrap();
        let (synthetic, model, log) =
            anonymize(&normalized, &assignment, &config, 5, 6).unwrap();
        assert_eq!(synthetic.n_rows(), normalized.n_rows() - 2);
        assert_eq!(log.noise_rows_dropped, 2);
        assert_eq!(model.label_count, 2);
        let synth_labels = synthetic.labels().unwrap();
        assert!(synth_labels.iter().all(|&l| l == 0 || l == 1));
        assert!(!log.steps.is_empty());
        assert!(log
            .steps
            .iter()
            .all(|s| s.gen_loss.is_finite() && s.disc_loss.is_finite()));
    }

    #[test]
    fn pipeline_emits_all_artifacts_and_is_reproducible_modulo_timestamp() {
        let dir = tempdir().unwrap();
        let mut config = toy_config(dir.path(), vec![Algorithm::KMeans]);
        config.threshold = Some(0.9);
        let out1 = dir.path().join("out1");
        let report1 = run_pipeline(&config, &out1).unwrap();

        for name in [
            "report.json",
            "synthetic_kmeans.csv",
            "pca_real_kmeans.csv",
            "pca_real_kmeans.svg",
            "pca_synth_kmeans.csv",
            "pca_synth_kmeans.svg",
            "loss_kmeans.csv",
            "loss_kmeans.svg",
        ] {
            assert!(out1.join(name).exists(), "missing artifact {name}");
        }

        let cmp = &report1.algorithms["kmeans"];
        assert!(cmp.preserved.is_some());
        assert_eq!(report1.provenance.config_hash, config.hash());
        assert_eq!(report1.provenance.metric_space, "full");
        assert_eq!(report1.provenance.noise_rows_dropped["kmeans"], 0);
        assert!(report1.provenance.seeds.contains_key("ctgan_kmeans"));
        assert!(report1.provenance.selection.contains_key("kmeans_real"));
        assert!(report1.provenance.selection.contains_key("kmeans_synthetic"));

        // Round trip through disk.
        let loaded =
            SimilarityReport::from_json(&std::fs::read_to_string(out1.join("report.json")).unwrap())
                .unwrap();
        assert_eq!(loaded, report1);

        // A second run reproduces everything except the timestamp.
        let out2 = dir.path().join("out2");
        let mut report2 = run_pipeline(&config, &out2).unwrap();
        assert_ne!(report2.generated_at, "");
        report2.generated_at = report1.generated_at.clone();
        assert_eq!(report2, report1);
        let synth1 = std::fs::read_to_string(out1.join("synthetic_kmeans.csv")).unwrap();
        let synth2 = std::fs::read_to_string(out2.join("synthetic_kmeans.csv")).unwrap();
        assert_eq!(synth1, synth2);
    }

    #[test]
    fn failing_stage_removes_partial_artifacts_and_names_the_stage() {
        let dir = tempdir().unwrap();
        let mut config = toy_config(dir.path(), vec![Algorithm::KMeans, Algorithm::Dbscan]);
        // Valid grid for validation, but hopeless for the toy data: every
        // point is noise, so the DBSCAN branch fails after the kmeans branch
        // has already written artifacts.
        config.eps_grid = vec![1e-9];
        let out = dir.path().join("out");
        let err = run_pipeline(&config, &out).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("stage"), "{msg}");
        assert!(msg.contains("dbscan"), "{msg}");
        let leftovers: Vec<_> = std::fs::read_dir(&out)
            .map(|d| d.filter_map(|e| e.ok()).map(|e| e.file_name()).collect())
            .unwrap_or_default();
        assert!(leftovers.is_empty(), "partial artifacts left: {leftovers:?}");
    }

    #[test]
    fn missing_input_file_fails_in_the_load_stage() {
        let dir = tempdir().unwrap();
        let mut config = toy_config(dir.path(), vec![Algorithm::KMeans]);
        config.input_path = dir.path().join("absent.csv");
        let err = run_pipeline(&config, &dir.path().join("out")).unwrap_err();
        assert!(err.to_string().contains("absent.csv"), "{err}");
    }
}
