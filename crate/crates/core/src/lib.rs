//! Cluster-preserving anonymization of multivariate tabular telemetry.
//!
//! The crate replaces a sensitive dataset with a synthetic one drawn from a
//! conditional tabular GAN, then checks that the replacement still tells the
//! same clustering story. The workflow has four stages:
//!
//! 1. **Ingest** ([`dataio`]): load a CSV against a declared schema, strip
//!    quasi-identifier columns, and min-max normalize the continuous features.
//! 2. **Cluster** ([`cluster`], [`ghmm`]): partition the real data with
//!    K-means, DBSCAN, a Gaussian hidden Markov model, and Ward agglomerative
//!    clustering, selecting hyperparameters by silhouette sweeps.
//! 3. **Anonymize** ([`ctgan`]): train a conditional GAN on the normalized
//!    rows, conditioning on cluster labels, and sample a synthetic dataset of
//!    matching size and label mix.
//! 4. **Assess** ([`metrics`], [`pipeline`]): re-cluster the synthetic data
//!    and compare cluster-validation scores (silhouette, Calinski-Harabasz,
//!    Davies-Bouldin) side by side in a similarity report.
//!
//! Supporting modules supply the plumbing: a small row-major [`matrix`], a
//! from-scratch dense [`neural`] network with Adam, [`pca`] projections for
//! plotting, SVG/CSV emitters in [`plot`], INI-style configuration in
//! [`config`], and the command-line front end in [`cli`].
//!
//! Every stochastic stage draws its seed deterministically from one root seed,
//! so a whole pipeline run is reproducible bit for bit.

pub mod cli;
pub mod cluster;
pub mod config;
pub mod ctgan;
pub mod dataio;
pub mod error;
pub mod ghmm;
pub mod matrix;
pub mod metrics;
pub mod neural;
pub mod pca;
pub mod pipeline;
pub mod plot;

pub use error::{Error, Result};
