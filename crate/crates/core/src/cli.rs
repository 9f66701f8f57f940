//! Command-line front end: subcommands for each pipeline stage plus the
//! end-to-end run, driven by an INI config file with per-flag overrides
//! (a flag always beats the file).
//!
//! Exit codes: 0 success, 1 usage or I/O problem, 2 malformed data or a
//! violated contract, 3 numeric breakdown.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand};

use crate::config::{load_config, Algorithm, MetricSpace, RunConfig};
use crate::ctgan::{ctgan_sample, ctgan_train, CtganModel};
use crate::dataio::{
    format_significant, generate_toy_telemetry, inverse_normalize, load_csv, minmax_normalize,
    strip_quasi_identifiers, ColumnKind, ColumnSpec, Dataset, NormalizationParams, Schema,
};
use crate::error::{Error, Result};
use crate::metrics::{select_kmeans_k, ValidationScores};
use crate::pipeline::{
    assess_similarity, run_clustering_suite, run_pipeline, SuiteEntry, SuiteSeeds,
};
use crate::plot::write_loss_svg;

#[derive(Parser)]
#[command(
    name = "anonymixer",
    version,
    about = "Replace tabular telemetry with cluster-preserving synthetic data",
    after_help = "Environment:\n  ANONYMIXER_LOG  quiet, info, or debug (default: info)"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Validate the input CSV and write the prepared (normalized) dataset
    Ingest(ConfigArgs),
    /// Cluster the prepared data with one algorithm and write its labels
    Cluster(AlgorithmArgs),
    /// Train the conditional GAN on one algorithm's cluster labels
    Train(AlgorithmArgs),
    /// Sample a synthetic dataset from a trained checkpoint
    Synthesize(SynthesizeArgs),
    /// Score every configured algorithm on the prepared data
    Evaluate(EvaluateArgs),
    /// Merge real and synthetic score files into a similarity report
    Report(ReportArgs),
    /// Run the whole pipeline and emit every artifact
    RunAll(RunArgs),
    /// Generate a seeded toy telemetry CSV
    GenToy(GenToyArgs),
}

/// Flags shared by every config-driven subcommand; each one overrides the
/// matching config-file setting.
#[derive(Args, Default)]
struct Overrides {
    /// Root seed for every stochastic stage
    #[arg(long)]
    seed: Option<u64>,
    /// Smallest k in the K-means silhouette sweep
    #[arg(long)]
    k_min: Option<usize>,
    /// Largest k in the K-means silhouette sweep
    #[arg(long)]
    k_max: Option<usize>,
    /// Comma-separated DBSCAN eps candidates
    #[arg(long)]
    eps_grid: Option<String>,
    /// Comma-separated DBSCAN min_pts candidates
    #[arg(long)]
    minpts_grid: Option<String>,
    /// Hidden-state count for the Gaussian HMM
    #[arg(long)]
    states: Option<usize>,
    /// GAN training epochs
    #[arg(long)]
    epochs: Option<usize>,
    /// GAN minibatch size
    #[arg(long)]
    batch: Option<usize>,
    /// Space for validation metrics: full or pca
    #[arg(long)]
    metric_space: Option<String>,
    /// Relative-deviation bound for the preserved flag
    #[arg(long)]
    threshold: Option<f64>,
}

#[derive(Args)]
struct ConfigArgs {
    /// Run configuration file
    #[arg(long)]
    config: PathBuf,
    /// Output directory
    #[arg(long, default_value = "out")]
    out: PathBuf,
    #[command(flatten)]
    overrides: Overrides,
}

#[derive(Args)]
struct AlgorithmArgs {
    #[command(flatten)]
    base: ConfigArgs,
    /// Algorithm: kmeans, dbscan, ghmm, or agglomerative
    #[arg(long)]
    algorithm: String,
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    base: ConfigArgs,
    /// Restrict the run to one algorithm
    #[arg(long)]
    algorithm: Option<String>,
}

#[derive(Args)]
struct EvaluateArgs {
    #[command(flatten)]
    base: ConfigArgs,
    /// Restrict the run to one algorithm
    #[arg(long)]
    algorithm: Option<String>,
    /// Score this CSV instead of the configured input
    #[arg(long)]
    input: Option<PathBuf>,
    /// Treat --input as a pipeline-produced synthetic CSV (continuous
    /// features plus a trailing label column)
    #[arg(long, requires = "input")]
    synthetic: bool,
}

#[derive(Args)]
struct SynthesizeArgs {
    #[command(flatten)]
    base: ConfigArgs,
    /// Trained model checkpoint to sample from
    #[arg(long)]
    checkpoint: PathBuf,
    /// Rows to sample (default: the input file's row count)
    #[arg(long)]
    n: Option<usize>,
    /// Conditioning algorithm name, used only to derive the sampling seed
    #[arg(long)]
    algorithm: Option<String>,
}

#[derive(Args)]
struct ReportArgs {
    /// Real-data score file (JSON map: algorithm -> scores)
    #[arg(long)]
    real: PathBuf,
    /// Synthetic-data score file (JSON map: algorithm -> scores)
    #[arg(long)]
    synth: PathBuf,
    /// Relative-deviation bound for the preserved flag
    #[arg(long)]
    threshold: Option<f64>,
    /// Run configuration; when given, its hash is recorded in provenance
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory
    #[arg(long, default_value = "out")]
    out: PathBuf,
}

#[derive(Args)]
struct GenToyArgs {
    /// Output directory
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Seed for blob placement and noise
    #[arg(long, default_value_t = 42)]
    seed: u64,
    /// Rows to generate
    #[arg(long, default_value_t = 400)]
    n: usize,
    /// Number of Gaussian blobs
    #[arg(long, default_value_t = 2)]
    k: usize,
    /// Feature count
    #[arg(long, default_value_t = 15)]
    m: usize,
    /// Minimum pairwise blob-center distance
    #[arg(long, default_value_t = 10.0)]
    separation: f64,
}

/// Parse argv and dispatch; returns the process exit code.
pub fn parse_and_dispatch<I: IntoIterator<Item = String>>(argv: I) -> i32 {
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(err) => {
            // --help/--version print to stdout and succeed; real parse
            // errors print usage to stderr and fail.
            let code = match err.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = err.print();
            return code;
        }
    };
    if let Err(err) = init_logging() {
        eprintln!("error: {err}");
        return err.exit_code();
    }
    match dispatch(cli.command) {
        Ok(()) => 0,
        Err(err) => {
            eprintln!("error: {err}");
            err.exit_code()
        }
    }
}

fn init_logging() -> Result<()> {
    let level = std::env::var("ANONYMIXER_LOG").unwrap_or_else(|_| "info".to_string());
    let filter = match level.as_str() {
        "quiet" => log::LevelFilter::Off,
        "info" => log::LevelFilter::Info,
        "debug" => log::LevelFilter::Debug,
        other => {
            return Err(Error::Usage(format!(
                "ANONYMIXER_LOG must be quiet, info, or debug, got {other:?}"
            )))
        }
    };
    let _ = env_logger::Builder::new()
        .filter_level(filter)
        .format_timestamp(None)
        .try_init();
    Ok(())
}

fn dispatch(command: Command) -> Result<()> {
    match command {
        Command::Ingest(args) => ingest(args),
        Command::Cluster(args) => cluster(args),
        Command::Train(args) => train(args),
        Command::Synthesize(args) => synthesize(args),
        Command::Evaluate(args) => evaluate(args),
        Command::Report(args) => report(args),
        Command::RunAll(args) => run_all(args),
        Command::GenToy(args) => gen_toy(args),
    }
}

fn parse_list<T: std::str::FromStr>(raw: &str, flag: &str) -> Result<Vec<T>> {
    let mut out = Vec::new();
    for part in raw.split(',') {
        let part = part.trim();
        if part.is_empty() {
            continue;
        }
        out.push(part.parse().map_err(|_| {
            Error::Usage(format!("--{flag} has an unparseable entry in {raw:?}"))
        })?);
    }
    if out.is_empty() {
        return Err(Error::Usage(format!("--{flag} must list at least one value")));
    }
    Ok(out)
}

fn parse_algorithm(raw: &str) -> Result<Algorithm> {
    raw.parse()
        .map_err(|_| Error::Usage(format!(
            "--algorithm must be kmeans, dbscan, ghmm, or agglomerative, got {raw:?}"
        )))
}

/// Load the config file and apply flag overrides (flags beat the file).
fn effective_config(args: &ConfigArgs) -> Result<RunConfig> {
    let mut config = load_config(&args.config)?;
    let o = &args.overrides;
    if let Some(seed) = o.seed {
        config.root_seed = seed;
    }
    if let Some(k) = o.k_min {
        config.k_min = k;
    }
    if let Some(k) = o.k_max {
        config.k_max = k;
    }
    if let Some(raw) = &o.eps_grid {
        config.eps_grid = parse_list(raw, "eps-grid")?;
    }
    if let Some(raw) = &o.minpts_grid {
        config.minpts_grid = parse_list(raw, "minpts-grid")?;
    }
    if let Some(states) = o.states {
        config.ghmm_states = states;
    }
    if let Some(epochs) = o.epochs {
        config.ctgan.epochs = epochs;
    }
    if let Some(batch) = o.batch {
        config.ctgan.batch_size = batch;
    }
    if let Some(raw) = &o.metric_space {
        config.metric_space = raw
            .parse::<MetricSpace>()
            .map_err(|_| Error::Usage(format!("--metric-space must be full or pca, got {raw:?}")))?;
    }
    if let Some(threshold) = o.threshold {
        config.threshold = Some(threshold);
    }
    config.validate()?;
    log::debug!("effective config:\n{}", config.canonical_string());
    Ok(config)
}

/// Restrict `config.algorithms` to one algorithm given by flag.
fn restrict_algorithm(config: &mut RunConfig, raw: Option<&str>) -> Result<()> {
    if let Some(raw) = raw {
        config.algorithms = vec![parse_algorithm(raw)?];
    }
    Ok(())
}

fn ensure_out_dir(out: &Path) -> Result<()> {
    std::fs::create_dir_all(out).map_err(|e| Error::io(out, e))
}

/// Load, strip quasi-identifiers, and min-max normalize the configured input.
fn prepare(config: &RunConfig) -> Result<(Dataset, Dataset, NormalizationParams)> {
    let raw = load_csv(&config.input_path, &config.schema)?;
    let stripped = strip_quasi_identifiers(&raw)?;
    let (normalized, params) = minmax_normalize(&stripped);
    Ok((raw, normalized, params))
}

fn real_suite_seeds(config: &RunConfig) -> SuiteSeeds {
    SuiteSeeds {
        kmeans: config.seed_for("kmeans"),
        ghmm: config.seed_for("ghmm"),
    }
}

fn print_config_hash(config: &RunConfig) {
    println!("config hash: {}", config.hash());
}

fn print_scores(prefix: &str, scores: &ValidationScores) {
    println!(
        "{prefix}silhouette = {}, calinski_harabasz = {}, davies_bouldin = {} \
         ({} effective rows)",
        format_significant(scores.silhouette, 6),
        format_significant(scores.calinski_harabasz, 6),
        format_significant(scores.davies_bouldin, 6),
        scores.n_effective_rows,
    );
}

fn ingest(args: ConfigArgs) -> Result<()> {
    let config = effective_config(&args)?;
    ensure_out_dir(&args.out)?;
    let (raw, normalized, _) = prepare(&config)?;
    let out_path = args.out.join("normalized.csv");
    normalized.write_csv(&out_path)?;
    print_config_hash(&config);
    let qids = config
        .schema
        .columns()
        .iter()
        .filter(|c| c.kind == ColumnKind::QuasiIdentifier)
        .count();
    println!(
        "ingested {} rows x {} columns; stripped {} quasi-identifier column(s); \
         kept {} continuous feature(s)",
        raw.n_rows(),
        config.schema.columns().len(),
        qids,
        normalized.n_features(),
    );
    println!("wrote {}", out_path.display());
    Ok(())
}

/// Run one algorithm via the suite machinery and return its entry.
fn cluster_single(
    normalized: &Dataset,
    config: &RunConfig,
    algorithm: Algorithm,
) -> Result<SuiteEntry> {
    let mut single = config.clone();
    single.algorithms = vec![algorithm];
    let mut suite = run_clustering_suite(normalized, &single, real_suite_seeds(config))?;
    Ok(suite.remove(0))
}

fn cluster(args: AlgorithmArgs) -> Result<()> {
    let config = effective_config(&args.base)?;
    let algorithm = parse_algorithm(&args.algorithm)?;
    ensure_out_dir(&args.base.out)?;
    let (_, normalized, _) = prepare(&config)?;
    print_config_hash(&config);

    if algorithm == Algorithm::KMeans {
        // Show the silhouette sweep behind the selection.
        let (selected, sweep) = select_kmeans_k(
            &normalized,
            config.k_min,
            config.k_max,
            config.seed_for("kmeans"),
        )?;
        println!("    k  silhouette");
        for (k, score) in &sweep {
            println!("{:>5}  {}", k, format_significant(*score, 6));
        }
        println!("selected k = {selected}");
    }

    let entry = cluster_single(&normalized, &config, algorithm)?;
    println!("{algorithm}: {}", entry.selection);
    println!(
        "clusters = {}, noise rows = {}",
        entry.assignment.n_clusters(),
        entry.assignment.noise_count()
    );
    print_scores("", &entry.scores);

    let labels_path = args.base.out.join(format!("labels_{algorithm}.csv"));
    entry.assignment.write_csv(&labels_path)?;
    println!("wrote {}", labels_path.display());
    Ok(())
}

fn train(args: AlgorithmArgs) -> Result<()> {
    let config = effective_config(&args.base)?;
    let algorithm = parse_algorithm(&args.algorithm)?;
    ensure_out_dir(&args.base.out)?;
    let (_, normalized, _) = prepare(&config)?;
    print_config_hash(&config);

    let entry = cluster_single(&normalized, &config, algorithm)?;
    log::info!("training GAN conditioned on {algorithm} labels");
    let (model, log) = ctgan_train(
        &normalized,
        &entry.assignment,
        &config.ctgan,
        config.seed_for(&format!("ctgan_{algorithm}")),
    )?;

    let checkpoint = args.base.out.join(format!("ctgan_{algorithm}.json"));
    model.save_checkpoint(&checkpoint)?;
    let loss_csv = args.base.out.join(format!("loss_{algorithm}.csv"));
    log.write_csv(&loss_csv)?;
    let loss_svg = args.base.out.join(format!("loss_{algorithm}.svg"));
    write_loss_svg(
        &loss_svg,
        &format!("adversarial losses, {algorithm} conditioning"),
        &log,
    )?;

    if let Some(last) = log.steps.last() {
        println!(
            "trained {} steps; final losses: generator = {}, discriminator = {}",
            log.steps.len(),
            format_significant(last.gen_loss, 6),
            format_significant(last.disc_loss, 6),
        );
    }
    println!("wrote {}", checkpoint.display());
    println!("wrote {}", loss_csv.display());
    println!("wrote {}", loss_svg.display());
    Ok(())
}

fn synthesize(args: SynthesizeArgs) -> Result<()> {
    let config = effective_config(&args.base)?;
    ensure_out_dir(&args.base.out)?;
    let model = CtganModel::load_checkpoint(&args.checkpoint)?;
    let (raw, _, params) = prepare(&config)?;

    let expected: Vec<&str> = model.feature_names.iter().map(|s| s.as_str()).collect();
    let stripped_names: Vec<String> = config
        .schema
        .columns()
        .iter()
        .filter(|c| c.kind == ColumnKind::Continuous)
        .map(|c| c.name.clone())
        .collect();
    if expected != stripped_names.iter().map(|s| s.as_str()).collect::<Vec<_>>() {
        return Err(Error::Contract(format!(
            "checkpoint was trained on columns [{}], config provides [{}]",
            expected.join(", "),
            stripped_names.join(", ")
        )));
    }

    let n = args.n.unwrap_or_else(|| raw.n_rows());
    let seed_tag = match &args.algorithm {
        Some(raw_alg) => format!("sample_{}", parse_algorithm(raw_alg)?),
        None => "sample".to_string(),
    };
    let synthetic = ctgan_sample(&model, n, None, config.seed_for(&seed_tag))?;
    let denormalized = inverse_normalize(&synthetic, &params)?;
    let out_path = args.base.out.join("synthetic.csv");
    denormalized.write_csv(&out_path)?;
    print_config_hash(&config);
    println!("sampled {n} synthetic rows from {}", args.checkpoint.display());
    println!("wrote {}", out_path.display());
    Ok(())
}

/// Schema for a pipeline-produced synthetic CSV: the config's continuous
/// features plus the trailing condition-label column.
fn synthetic_schema(config: &RunConfig) -> Result<Schema> {
    let mut columns: Vec<ColumnSpec> = config
        .schema
        .columns()
        .iter()
        .filter(|c| c.kind == ColumnKind::Continuous)
        .cloned()
        .collect();
    columns.push(ColumnSpec::new("label", ColumnKind::DiscreteLabel));
    Schema::new(columns)
}

fn evaluate(args: EvaluateArgs) -> Result<()> {
    let mut config = effective_config(&args.base)?;
    restrict_algorithm(&mut config, args.algorithm.as_deref())?;
    ensure_out_dir(&args.base.out)?;

    let normalized = match &args.input {
        None => prepare(&config)?.1,
        Some(path) => {
            let schema = if args.synthetic {
                synthetic_schema(&config)?
            } else {
                config.schema.clone()
            };
            let raw = load_csv(path, &schema)?;
            let stripped = strip_quasi_identifiers(&raw)?;
            minmax_normalize(&stripped).0
        }
    };

    let suite = run_clustering_suite(&normalized, &config, real_suite_seeds(&config))?;
    print_config_hash(&config);
    let mut scores = BTreeMap::new();
    for entry in &suite {
        println!("{} ({}):", entry.algorithm, entry.selection);
        print_scores("  ", &entry.scores);
        scores.insert(entry.algorithm.name().to_string(), entry.scores);
    }
    let out_path = args.base.out.join("scores.json");
    let mut text = serde_json::to_string_pretty(&scores)
        .map_err(|e| Error::Data(format!("score serialization failed: {e}")))?;
    text.push('\n');
    std::fs::write(&out_path, text).map_err(|e| Error::io(&out_path, e))?;
    println!("wrote {}", out_path.display());
    Ok(())
}

fn read_scores(path: &Path) -> Result<BTreeMap<String, ValidationScores>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| {
        Error::Data(format!(
            "{}: not a JSON map of algorithm to scores: {e}",
            path.display()
        ))
    })
}

fn report(args: ReportArgs) -> Result<()> {
    let real = read_scores(&args.real)?;
    let synth = read_scores(&args.synth)?;
    let mut report = assess_similarity(&real, &synth, args.threshold)?;
    report.generated_at = chrono::Utc::now().to_rfc3339();
    if let Some(config_path) = &args.config {
        let config = load_config(config_path)?;
        report.provenance.config_hash = config.hash();
        report.provenance.metric_space = config.metric_space.name().to_string();
        print_config_hash(&config);
    }
    ensure_out_dir(&args.out)?;
    let out_path = args.out.join("report.json");
    std::fs::write(&out_path, report.to_json()).map_err(|e| Error::io(&out_path, e))?;
    for (name, cmp) in &report.algorithms {
        let flag = match cmp.preserved {
            Some(true) => " [preserved]",
            Some(false) => " [not preserved]",
            None => "",
        };
        println!(
            "{name}: rel dev silhouette = {}, calinski_harabasz = {}, davies_bouldin = {}{flag}",
            format_significant(cmp.relative_deviation.silhouette, 6),
            format_significant(cmp.relative_deviation.calinski_harabasz, 6),
            format_significant(cmp.relative_deviation.davies_bouldin, 6),
        );
    }
    println!("wrote {}", out_path.display());
    Ok(())
}

fn run_all(args: RunArgs) -> Result<()> {
    let mut config = effective_config(&args.base)?;
    restrict_algorithm(&mut config, args.algorithm.as_deref())?;
    print_config_hash(&config);
    let report = run_pipeline(&config, &args.base.out)?;
    for (name, cmp) in &report.algorithms {
        let flag = match cmp.preserved {
            Some(true) => " [preserved]",
            Some(false) => " [not preserved]",
            None => "",
        };
        println!(
            "{name}: real ({}, {}, {}) vs synthetic ({}, {}, {}){flag}",
            format_significant(cmp.real.silhouette, 6),
            format_significant(cmp.real.calinski_harabasz, 6),
            format_significant(cmp.real.davies_bouldin, 6),
            format_significant(cmp.synthetic.silhouette, 6),
            format_significant(cmp.synthetic.calinski_harabasz, 6),
            format_significant(cmp.synthetic.davies_bouldin, 6),
        );
    }
    println!("artifacts in {}", args.base.out.display());
    Ok(())
}

fn gen_toy(args: GenToyArgs) -> Result<()> {
    let (data, _) = generate_toy_telemetry(args.seed, args.n, args.k, args.m, args.separation)?;
    ensure_out_dir(&args.out)?;
    let out_path = args.out.join("toy.csv");
    data.write_csv(&out_path)?;
    println!(
        "generated {} rows from {} blob(s) in {} dimensions (seed {})",
        args.n, args.k, args.m, args.seed
    );
    println!("wrote {}", out_path.display());
    println!("config schema section:");
    println!("[schema]");
    for c in 0..args.m {
        println!("f{c} = continuous");
    }
    println!("label = discrete_label");
    Ok(())
}
