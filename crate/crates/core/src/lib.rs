//! Market-state detection from daily sector correlation matrices.
//!
//! The pipeline turns a table of daily stock prices into a sequence of
//! market states and explains what drives each state:
//!
//! 1. [`ingest`]: load prices, filter by coverage, fill gaps, aggregate
//!    tickers into the ten GICS sector series and compute simple returns.
//! 2. [`preprocess`]: locally normalize returns and compute rolling
//!    Pearson correlation matrices, flattened into 45-entry feature vectors.
//! 3. [`clustering`]: k-means (k = 8 by default) over the feature vectors;
//!    each trading day is assigned to a market state.
//! 4. [`relevance`]: rewrite the fitted classifier as a small linear/min
//!    network and propagate each assignment's evidence back onto the 45
//!    sector correlations as per-instance relevance scores.
//! 5. [`aggregate`]: median and mode-mode aggregation of relevances per
//!    cluster, ascending elbow curves, and a Bayesian change-point scan
//!    that separates relevant from irrelevant correlations.
//! 6. [`surrogate`]: a from-scratch MLP trained to reproduce the cluster
//!    labels from a handful of selected correlations, with a seeded
//!    multi-run comparison of selection strategies.
//! 7. [`synth`]: seeded generators (planted clusters, synthetic prices)
//!    and brute-force oracles used by the test suites.
//!
//! With the `parallel` feature (default) the data-parallel inner loops fan
//! out over rayon; without it everything runs sequentially.

pub mod aggregate;
pub mod clustering;
pub mod error;
pub mod ingest;
pub mod par;
pub mod preprocess;
pub mod relevance;
pub mod sectors;
pub mod seed;
pub mod surrogate;
pub mod synth;

pub use error::{Error, Result};
