//! Run configuration: INI-style config files, defaults, deterministic
//! per-stage seed expansion, and a canonical configuration hash.
//!
//! The file format is deliberately minimal — `[section]` headers and
//! `key = value` pairs — so parsing needs no dependency and the canonical
//! rendering that feeds the config hash is bit-stable. Comments start with
//! `#` or `;`, either on their own line or after whitespace at the end of a
//! value. Section and key order in the file does not matter; the canonical
//! rendering fixes its own order.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::ctgan::CtganConfig;
use crate::dataio::{ColumnKind, ColumnSpec, Schema};
use crate::error::{Error, Result};

/// Clustering algorithms the pipeline can run.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Algorithm {
    #[serde(rename = "kmeans")]
    KMeans,
    #[serde(rename = "dbscan")]
    Dbscan,
    #[serde(rename = "ghmm")]
    Ghmm,
    #[serde(rename = "agglomerative")]
    Agglomerative,
}

impl Algorithm {
    pub const ALL: [Algorithm; 4] = [
        Algorithm::KMeans,
        Algorithm::Dbscan,
        Algorithm::Ghmm,
        Algorithm::Agglomerative,
    ];

    /// Stable lowercase name used in config files, report keys, artifact
    /// file names, and seed tags.
    pub fn name(self) -> &'static str {
        match self {
            Algorithm::KMeans => "kmeans",
            Algorithm::Dbscan => "dbscan",
            Algorithm::Ghmm => "ghmm",
            Algorithm::Agglomerative => "agglomerative",
        }
    }
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Algorithm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "kmeans" => Ok(Algorithm::KMeans),
            "dbscan" => Ok(Algorithm::Dbscan),
            "ghmm" => Ok(Algorithm::Ghmm),
            "agglomerative" => Ok(Algorithm::Agglomerative),
            other => Err(Error::Contract(format!(
                "unknown algorithm {other:?}; expected kmeans, dbscan, ghmm, or agglomerative"
            ))),
        }
    }
}

/// Feature space in which cluster validation metrics are computed.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MetricSpace {
    /// Score clusterings on all normalized features (the default).
    Full,
    /// Score clusterings on the leading principal components covering at
    /// least 95% of the variance.
    PcaReduced,
}

impl MetricSpace {
    pub fn name(self) -> &'static str {
        match self {
            MetricSpace::Full => "full",
            MetricSpace::PcaReduced => "pca_reduced",
        }
    }
}

impl fmt::Display for MetricSpace {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for MetricSpace {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "full" => Ok(MetricSpace::Full),
            "pca" | "pca_reduced" | "pca-reduced" => Ok(MetricSpace::PcaReduced),
            other => Err(Error::Contract(format!(
                "unknown metric space {other:?}; expected full or pca"
            ))),
        }
    }
}

/// Complete description of one pipeline run. Every stochastic stage derives
/// its seed from `root_seed` via [`stage_seed`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    /// Input CSV path; relative paths resolve against the config file's
    /// directory.
    pub input_path: PathBuf,
    /// Column names and roles of the input CSV, in file order.
    pub schema: Schema,
    /// Conditioning algorithms to run, in config order.
    pub algorithms: Vec<Algorithm>,
    /// K-means silhouette sweep range (inclusive).
    pub k_min: usize,
    pub k_max: usize,
    /// DBSCAN grid-search candidates.
    pub eps_grid: Vec<f64>,
    pub minpts_grid: Vec<usize>,
    /// Hidden-state count for the Gaussian HMM.
    pub ghmm_states: usize,
    /// Cluster count for agglomerative (Ward) clustering.
    pub agglomerative_k: usize,
    /// Generator/discriminator training configuration.
    pub ctgan: CtganConfig,
    /// Component count for the emitted scatter projections.
    pub pca_components: usize,
    /// Space in which validation metrics are computed.
    pub metric_space: MetricSpace,
    /// Root seed expanded into per-stage seeds.
    pub root_seed: u64,
    /// Optional relative-deviation bound; when set, the report carries a
    /// per-algorithm `preserved` flag.
    pub threshold: Option<f64>,
}

impl RunConfig {
    /// Baseline configuration for the given input file and schema; every
    /// other field starts at its documented default.
    pub fn new(input_path: impl Into<PathBuf>, schema: Schema) -> RunConfig {
        RunConfig {
            input_path: input_path.into(),
            schema,
            algorithms: Algorithm::ALL.to_vec(),
            k_min: 2,
            k_max: 10,
            eps_grid: vec![0.05, 0.1, 0.15, 0.2, 0.3, 0.4, 0.5],
            minpts_grid: vec![3, 5, 10],
            ghmm_states: 3,
            agglomerative_k: 3,
            ctgan: CtganConfig::default(),
            pca_components: 2,
            metric_space: MetricSpace::Full,
            root_seed: 42,
            threshold: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.algorithms.is_empty() {
            return Err(Error::Contract("algorithm set must not be empty".into()));
        }
        for (i, a) in self.algorithms.iter().enumerate() {
            if self.algorithms[..i].contains(a) {
                return Err(Error::Contract(format!("duplicate algorithm {a}")));
            }
        }
        if self.k_min < 2 || self.k_min > self.k_max {
            return Err(Error::Contract(format!(
                "invalid k sweep range {}..={}; need 2 <= k_min <= k_max",
                self.k_min, self.k_max
            )));
        }
        if self.eps_grid.is_empty() || self.minpts_grid.is_empty() {
            return Err(Error::Contract("DBSCAN grids must not be empty".into()));
        }
        for &eps in &self.eps_grid {
            if !(eps > 0.0) || !eps.is_finite() {
                return Err(Error::Contract(format!(
                    "eps grid values must be positive and finite, got {eps}"
                )));
            }
        }
        for &mp in &self.minpts_grid {
            if mp < 1 {
                return Err(Error::Contract("min_pts grid values must be >= 1".into()));
            }
        }
        if self.ghmm_states < 1 {
            return Err(Error::Contract("ghmm states must be >= 1".into()));
        }
        if self.agglomerative_k < 1 {
            return Err(Error::Contract("agglomerative k must be >= 1".into()));
        }
        if self.pca_components < 1 {
            return Err(Error::Contract("pca components must be >= 1".into()));
        }
        if let Some(t) = self.threshold {
            if !(t > 0.0) || !t.is_finite() {
                return Err(Error::Contract(format!(
                    "similarity threshold must be positive and finite, got {t}"
                )));
            }
        }
        self.ctgan.validate()
    }

    /// Canonical one-line-per-field rendering. Field order is fixed here, so
    /// two configs render identically iff they are equal; the config hash is
    /// the SHA-256 of this string.
    pub fn canonical_string(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!("input={}\n", self.input_path.display()));
        let schema: Vec<String> = self
            .schema
            .columns()
            .iter()
            .map(|c| {
                let kind = match c.kind {
                    ColumnKind::Continuous => "continuous",
                    ColumnKind::QuasiIdentifier => "quasi_identifier",
                    ColumnKind::DiscreteLabel => "discrete_label",
                };
                format!("{}:{kind}", c.name)
            })
            .collect();
        out.push_str(&format!("schema={}\n", schema.join(",")));
        let algs: Vec<&str> = self.algorithms.iter().map(|a| a.name()).collect();
        out.push_str(&format!("algorithms={}\n", algs.join(",")));
        out.push_str(&format!("kmeans.k_min={}\n", self.k_min));
        out.push_str(&format!("kmeans.k_max={}\n", self.k_max));
        out.push_str(&format!("dbscan.eps_grid={}\n", join_f64(&self.eps_grid)));
        let minpts: Vec<String> = self.minpts_grid.iter().map(|m| m.to_string()).collect();
        out.push_str(&format!("dbscan.minpts_grid={}\n", minpts.join(",")));
        out.push_str(&format!("ghmm.states={}\n", self.ghmm_states));
        out.push_str(&format!("agglomerative.k={}\n", self.agglomerative_k));
        out.push_str(&format!("ctgan.epochs={}\n", self.ctgan.epochs));
        out.push_str(&format!("ctgan.batch_size={}\n", self.ctgan.batch_size));
        out.push_str(&format!("ctgan.noise_dim={}\n", self.ctgan.noise_dim));
        let hidden: Vec<String> = self.ctgan.hidden_sizes.iter().map(|h| h.to_string()).collect();
        out.push_str(&format!("ctgan.hidden={}\n", hidden.join(",")));
        out.push_str(&format!("ctgan.learning_rate={}\n", self.ctgan.learning_rate));
        out.push_str(&format!("ctgan.beta1={}\n", self.ctgan.beta1));
        out.push_str(&format!("ctgan.beta2={}\n", self.ctgan.beta2));
        out.push_str(&format!("ctgan.max_modes={}\n", self.ctgan.max_modes));
        out.push_str(&format!("pipeline.pca_components={}\n", self.pca_components));
        out.push_str(&format!("pipeline.metric_space={}\n", self.metric_space));
        match self.threshold {
            Some(t) => out.push_str(&format!("pipeline.threshold={t}\n")),
            None => out.push_str("pipeline.threshold=none\n"),
        }
        out.push_str(&format!("seeds.root={}\n", self.root_seed));
        out
    }

    /// Hex SHA-256 of the canonical rendering.
    pub fn hash(&self) -> String {
        let mut hasher = Sha256::new();
        hasher.update(self.canonical_string().as_bytes());
        let digest = hasher.finalize();
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }

    /// Seed for one named stage, derived from the root seed.
    pub fn seed_for(&self, tag: &str) -> u64 {
        stage_seed(self.root_seed, tag)
    }
}

fn join_f64(values: &[f64]) -> String {
    let parts: Vec<String> = values.iter().map(|v| format!("{v}")).collect();
    parts.join(",")
}

/// Expand a root seed and a stage tag into a stage seed (64-bit FNV-1a over
/// the little-endian root bytes followed by the tag bytes). Distinct tags
/// give independent, reproducible streams from one user-facing seed.
pub fn stage_seed(root: u64, tag: &str) -> u64 {
    const OFFSET_BASIS: u64 = 0xcbf2_9ce4_8422_2325;
    const PRIME: u64 = 0x0000_0100_0000_01b3;
    let mut hash = OFFSET_BASIS;
    for byte in root.to_le_bytes().iter().chain(tag.as_bytes()) {
        hash ^= *byte as u64;
        hash = hash.wrapping_mul(PRIME);
    }
    hash
}

/// One `key = value` line of a config file.
#[derive(Clone, Debug, PartialEq)]
pub struct IniEntry {
    pub key: String,
    pub value: String,
    pub line: usize,
}

/// One `[section]` with its entries, in file order.
#[derive(Clone, Debug, PartialEq)]
pub struct IniSection {
    pub name: String,
    pub line: usize,
    pub entries: Vec<IniEntry>,
}

impl IniSection {
    pub fn get(&self, key: &str) -> Option<&IniEntry> {
        self.entries.iter().find(|e| e.key == key)
    }
}

/// Parsed config file: sections in file order, order preserved within each.
#[derive(Clone, Debug, PartialEq, Default)]
pub struct IniDocument {
    pub sections: Vec<IniSection>,
}

impl IniDocument {
    pub fn section(&self, name: &str) -> Option<&IniSection> {
        self.sections.iter().find(|s| s.name == name)
    }
}

/// Strip a trailing comment (whitespace followed by `#` or `;`) and trim.
fn strip_inline_comment(text: &str) -> &str {
    let bytes = text.as_bytes();
    for i in 0..bytes.len() {
        if (bytes[i] == b'#' || bytes[i] == b';')
            && (i == 0 || bytes[i - 1].is_ascii_whitespace())
        {
            return text[..i].trim();
        }
    }
    text.trim()
}

/// Parse INI-style text into an order-preserving document. Errors carry
/// 1-based line numbers.
pub fn parse_ini(text: &str) -> Result<IniDocument> {
    let mut doc = IniDocument::default();
    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = strip_inline_comment(raw);
        if line.is_empty() {
            continue;
        }
        if let Some(rest) = line.strip_prefix('[') {
            let name = rest.strip_suffix(']').ok_or_else(|| {
                Error::Contract(format!("config line {line_no}: unclosed section header"))
            })?;
            let name = name.trim();
            if name.is_empty() {
                return Err(Error::Contract(format!(
                    "config line {line_no}: empty section name"
                )));
            }
            if doc.section(name).is_some() {
                return Err(Error::Contract(format!(
                    "config line {line_no}: duplicate section [{name}]"
                )));
            }
            doc.sections.push(IniSection {
                name: name.to_string(),
                line: line_no,
                entries: Vec::new(),
            });
            continue;
        }
        let (key, value) = line.split_once('=').ok_or_else(|| {
            Error::Contract(format!(
                "config line {line_no}: expected `key = value` or `[section]`, got {line:?}"
            ))
        })?;
        let key = key.trim();
        let value = value.trim();
        if key.is_empty() {
            return Err(Error::Contract(format!(
                "config line {line_no}: empty key"
            )));
        }
        let section = doc.sections.last_mut().ok_or_else(|| {
            Error::Contract(format!(
                "config line {line_no}: `{key}` appears before any [section] header"
            ))
        })?;
        if section.get(key).is_some() {
            return Err(Error::Contract(format!(
                "config line {line_no}: duplicate key `{key}` in [{}]",
                section.name
            )));
        }
        section.entries.push(IniEntry {
            key: key.to_string(),
            value: value.to_string(),
            line: line_no,
        });
    }
    Ok(doc)
}

fn parse_scalar<T: FromStr>(entry: &IniEntry, what: &str) -> Result<T> {
    entry.value.parse().map_err(|_| {
        Error::Contract(format!(
            "config line {}: `{}` must be {what}, got {:?}",
            entry.line, entry.key, entry.value
        ))
    })
}

fn parse_list<T: FromStr>(entry: &IniEntry, what: &str) -> Result<Vec<T>> {
    let mut out = Vec::new();
    for part in entry.value.split(',') {
        let part = part.trim();
        if part.is_empty() {
            continue;
        }
        out.push(part.parse().map_err(|_| {
            Error::Contract(format!(
                "config line {}: `{}` must be a comma-separated list of {what}, got {:?}",
                entry.line, entry.key, entry.value
            ))
        })?);
    }
    if out.is_empty() {
        return Err(Error::Contract(format!(
            "config line {}: `{}` must list at least one value",
            entry.line, entry.key
        )));
    }
    Ok(out)
}

fn reject_unknown_keys(section: &IniSection, known: &[&str]) -> Result<()> {
    for entry in &section.entries {
        if !known.contains(&entry.key.as_str()) {
            return Err(Error::Contract(format!(
                "config line {}: unknown key `{}` in [{}]; expected one of: {}",
                entry.line,
                entry.key,
                section.name,
                known.join(", ")
            )));
        }
    }
    Ok(())
}

const SECTIONS: [&str; 8] = [
    "input",
    "schema",
    "pipeline",
    "kmeans",
    "dbscan",
    "ghmm",
    "agglomerative",
    "ctgan",
];

/// Load and validate a [`RunConfig`] from a config file. Relative input
/// paths resolve against the config file's directory.
pub fn load_config(path: &Path) -> Result<RunConfig> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let doc = parse_ini(&text)?;
    let base_dir = path.parent().unwrap_or_else(|| Path::new("."));
    config_from_ini(&doc, base_dir)
}

/// Assemble a [`RunConfig`] from a parsed document: `[input]` and `[schema]`
/// are required, everything else falls back to the documented defaults.
pub fn config_from_ini(doc: &IniDocument, base_dir: &Path) -> Result<RunConfig> {
    for section in &doc.sections {
        if !SECTIONS.contains(&section.name.as_str()) && section.name != "seeds" {
            return Err(Error::Contract(format!(
                "config line {}: unknown section [{}]",
                section.line, section.name
            )));
        }
    }

    let input = doc
        .section("input")
        .ok_or_else(|| Error::Contract("config is missing the [input] section".into()))?;
    reject_unknown_keys(input, &["file"])?;
    let file = input
        .get("file")
        .ok_or_else(|| Error::Contract("[input] section is missing `file`".into()))?;
    let mut input_path = PathBuf::from(&file.value);
    if input_path.is_relative() {
        input_path = base_dir.join(input_path);
    }

    let schema_section = doc
        .section("schema")
        .ok_or_else(|| Error::Contract("config is missing the [schema] section".into()))?;
    let mut columns = Vec::with_capacity(schema_section.entries.len());
    for entry in &schema_section.entries {
        let kind = match entry.value.as_str() {
            "continuous" => ColumnKind::Continuous,
            "quasi_identifier" => ColumnKind::QuasiIdentifier,
            "discrete_label" => ColumnKind::DiscreteLabel,
            other => {
                return Err(Error::Contract(format!(
                    "config line {}: unknown column kind {other:?} for `{}`; expected \
                     continuous, quasi_identifier, or discrete_label",
                    entry.line, entry.key
                )))
            }
        };
        columns.push(ColumnSpec::new(entry.key.clone(), kind));
    }
    let schema = Schema::new(columns)?;

    let mut config = RunConfig::new(input_path, schema);

    if let Some(pipeline) = doc.section("pipeline") {
        reject_unknown_keys(
            pipeline,
            &["algorithms", "metric_space", "pca_components", "threshold"],
        )?;
        if let Some(entry) = pipeline.get("algorithms") {
            config.algorithms = parse_list(entry, "algorithm names")?;
        }
        if let Some(entry) = pipeline.get("metric_space") {
            config.metric_space = parse_scalar(entry, "full or pca")?;
        }
        if let Some(entry) = pipeline.get("pca_components") {
            config.pca_components = parse_scalar(entry, "a positive integer")?;
        }
        if let Some(entry) = pipeline.get("threshold") {
            config.threshold = Some(parse_scalar(entry, "a positive number")?);
        }
    }
    if let Some(kmeans) = doc.section("kmeans") {
        reject_unknown_keys(kmeans, &["k_min", "k_max"])?;
        if let Some(entry) = kmeans.get("k_min") {
            config.k_min = parse_scalar(entry, "a positive integer")?;
        }
        if let Some(entry) = kmeans.get("k_max") {
            config.k_max = parse_scalar(entry, "a positive integer")?;
        }
    }
    if let Some(dbscan) = doc.section("dbscan") {
        reject_unknown_keys(dbscan, &["eps_grid", "minpts_grid"])?;
        if let Some(entry) = dbscan.get("eps_grid") {
            config.eps_grid = parse_list(entry, "numbers")?;
        }
        if let Some(entry) = dbscan.get("minpts_grid") {
            config.minpts_grid = parse_list(entry, "positive integers")?;
        }
    }
    if let Some(ghmm) = doc.section("ghmm") {
        reject_unknown_keys(ghmm, &["states"])?;
        if let Some(entry) = ghmm.get("states") {
            config.ghmm_states = parse_scalar(entry, "a positive integer")?;
        }
    }
    if let Some(agg) = doc.section("agglomerative") {
        reject_unknown_keys(agg, &["k"])?;
        if let Some(entry) = agg.get("k") {
            config.agglomerative_k = parse_scalar(entry, "a positive integer")?;
        }
    }
    if let Some(ctgan) = doc.section("ctgan") {
        reject_unknown_keys(
            ctgan,
            &[
                "epochs",
                "batch_size",
                "noise_dim",
                "hidden",
                "learning_rate",
                "beta1",
                "beta2",
                "max_modes",
            ],
        )?;
        if let Some(entry) = ctgan.get("epochs") {
            config.ctgan.epochs = parse_scalar(entry, "a positive integer")?;
        }
        if let Some(entry) = ctgan.get("batch_size") {
            config.ctgan.batch_size = parse_scalar(entry, "a positive integer")?;
        }
        if let Some(entry) = ctgan.get("noise_dim") {
            config.ctgan.noise_dim = parse_scalar(entry, "a positive integer")?;
        }
        if let Some(entry) = ctgan.get("hidden") {
            config.ctgan.hidden_sizes = parse_list(entry, "positive integers")?;
        }
        if let Some(entry) = ctgan.get("learning_rate") {
            config.ctgan.learning_rate = parse_scalar(entry, "a positive number")?;
        }
        if let Some(entry) = ctgan.get("beta1") {
            config.ctgan.beta1 = parse_scalar(entry, "a number in [0, 1)")?;
        }
        if let Some(entry) = ctgan.get("beta2") {
            config.ctgan.beta2 = parse_scalar(entry, "a number in [0, 1)")?;
        }
        if let Some(entry) = ctgan.get("max_modes") {
            config.ctgan.max_modes = parse_scalar(entry, "a positive integer")?;
        }
    }
    if let Some(seeds) = doc.section("seeds") {
        reject_unknown_keys(seeds, &["root"])?;
        if let Some(entry) = seeds.get("root") {
            config.root_seed = parse_scalar(entry, "an unsigned 64-bit integer")?;
        }
    }

    config.validate()?;
    Ok(config)
}

/// The stage tags the pipeline draws seeds for, with their derived values —
/// recorded verbatim in report provenance. Only stochastic stages appear:
/// the real-suite fits for K-means and the GHMM, and per conditioning
/// algorithm the CTGAN training seed, the sampling seed, and (when that
/// algorithm is itself seeded) the synthetic re-clustering seed.
pub fn stage_seed_map(config: &RunConfig) -> BTreeMap<String, u64> {
    let mut map = BTreeMap::new();
    map.insert("root".to_string(), config.root_seed);
    if config.algorithms.contains(&Algorithm::KMeans) {
        map.insert("kmeans".to_string(), config.seed_for("kmeans"));
    }
    if config.algorithms.contains(&Algorithm::Ghmm) {
        map.insert("ghmm".to_string(), config.seed_for("ghmm"));
    }
    for alg in &config.algorithms {
        for stage in ["ctgan", "sample"] {
            let tag = format!("{stage}_{alg}");
            map.insert(tag.clone(), stage_seed(config.root_seed, &tag));
        }
        if matches!(alg, Algorithm::KMeans | Algorithm::Ghmm) {
            let tag = format!("synth_{alg}");
            map.insert(tag.clone(), stage_seed(config.root_seed, &tag));
        }
    }
    map
}
