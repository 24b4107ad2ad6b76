//! Stage runners shared by the subcommands and the chained `pipeline`.
//! Each stage reads the artifacts of its predecessors from the output
//! directory (or the configured input paths) and writes its own.

use std::path::PathBuf;

use anyhow::{bail, Context, Result};

use mstates_core::aggregate::{
    aggregate_clusters, bayesian_changepoint, changepoint_scan, sort_curve,
    top_feature_per_cluster, write_aggregates, write_changepoints, write_elbow,
    AggregatedRelevance, AggregationMethod, ChangePointResult,
};
use mstates_core::clustering::{fit_kmeans, write_assignments, ClusterModel, KMeansConfig};
use mstates_core::ingest::{
    aggregate_sectors, compute_returns, filter_coverage, interpolate_missing, load_prices,
    ReturnTable,
};
use mstates_core::preprocess::{flatten, load_features, local_normalize, rolling_correlation,
    write_features};
use mstates_core::relevance::{load_relevance, relevance_all, write_relevance};
use mstates_core::sectors::{feature_names, SectorMap};
use mstates_core::surrogate::{
    compare_selections, train, write_runs_csv, write_summary_json, CompareOptions, NetworkSpec,
    SelectionSpec, TrainOptions,
};
use mstates_core::synth::{generate_planted, generate_prices, SyntheticPriceConfig};

use crate::config::PipelineConfig;

fn expect_input(path: PathBuf, what: &str, produced_by: &str) -> Result<PathBuf> {
    if path.exists() {
        Ok(path)
    } else {
        bail!(
            "{what} not found at {}; run `mstates {produced_by}` first or point the config at it",
            path.display()
        )
    }
}

fn prices_path(config: &PipelineConfig) -> Result<PathBuf> {
    expect_input(
        config
            .prices
            .clone()
            .unwrap_or_else(|| config.artifact("prices.csv")),
        "price table",
        "synth",
    )
}

fn sector_map_path(config: &PipelineConfig) -> Result<PathBuf> {
    expect_input(
        config
            .sector_map
            .clone()
            .unwrap_or_else(|| config.artifact("sectors.csv")),
        "sector map",
        "synth",
    )
}

pub fn synth_prices(config: &PipelineConfig) -> Result<()> {
    let synth_config = SyntheticPriceConfig {
        tickers_per_sector: config.synth.tickers_per_sector,
        days: config.synth.days,
        missing_prob: config.synth.missing_prob,
        idiosyncratic: config.synth.idiosyncratic,
        seed: config.synth_prices_seed(),
        ..SyntheticPriceConfig::default()
    };
    let table = generate_prices(&synth_config).context("synth: generating prices")?;
    table
        .write_csv(&config.artifact("prices.csv"))
        .context("synth: writing prices.csv")?;
    synth_config
        .sector_map()
        .write_csv(&config.artifact("sectors.csv"))
        .context("synth: writing sectors.csv")?;
    Ok(())
}

pub fn synth_planted(config: &PipelineConfig) -> Result<()> {
    let dataset = generate_planted(
        config.k,
        config.synth.planted_instances,
        &config.synth.planted_relevant,
        config.synth.planted_separation,
        config.synth.planted_noise,
        config.synth_planted_seed(),
    )
    .context("synth: generating planted dataset")?;
    let path = config.artifact("planted.csv");
    let mut body = format!("label,{}\n", feature_names().join(","));
    for (row, label) in dataset.features.iter().zip(&dataset.labels) {
        body.push_str(&label.to_string());
        for v in row {
            body.push(',');
            body.push_str(&v.to_string());
        }
        body.push('\n');
    }
    std::fs::write(&path, body).with_context(|| format!("synth: writing {}", path.display()))
}

pub fn ingest(config: &PipelineConfig) -> Result<()> {
    let prices = prices_path(config)?;
    let sectors = sector_map_path(config)?;
    let table = load_prices(&prices).context("ingest: loading prices")?;
    let map = SectorMap::load_csv(&sectors).context("ingest: loading sector map")?;
    let kept =
        filter_coverage(&table, config.min_coverage).context("ingest: filtering coverage")?;
    let filled = interpolate_missing(&kept).context("ingest: interpolating gaps")?;
    let sector_prices =
        aggregate_sectors(&filled, &map).context("ingest: aggregating sectors")?;
    let returns = compute_returns(&sector_prices).context("ingest: computing returns")?;
    sector_prices
        .write_csv(&config.artifact("sector_prices.csv"))
        .context("ingest: writing sector_prices.csv")?;
    returns
        .write_csv(&config.artifact("returns.csv"))
        .context("ingest: writing returns.csv")?;
    Ok(())
}

pub fn preprocess(config: &PipelineConfig) -> Result<()> {
    let returns_path = expect_input(config.artifact("returns.csv"), "return table", "ingest")?;
    let returns = ReturnTable::load_csv(&returns_path).context("preprocess: loading returns")?;
    let normalized =
        local_normalize(&returns, config.n).context("preprocess: normalizing returns")?;
    normalized
        .write_csv(&config.artifact("normalized.csv"))
        .context("preprocess: writing normalized.csv")?;
    let matrices = rolling_correlation(&normalized, config.tau)
        .context("preprocess: rolling correlation")?;
    let features: Vec<_> = matrices.iter().map(flatten).collect();
    write_features(&config.artifact("features.csv"), &features)
        .context("preprocess: writing features.csv")?;
    Ok(())
}

pub fn cluster(config: &PipelineConfig) -> Result<()> {
    let features_path =
        expect_input(config.artifact("features.csv"), "feature table", "preprocess")?;
    let features = load_features(&features_path).context("cluster: loading features")?;
    let kmeans_config = KMeansConfig {
        k: config.k,
        seed: config.kmeans_seed(),
        max_iter: config.kmeans.max_iter,
        tol: config.kmeans.tol,
        init: config.kmeans.init,
    };
    let (model, assignments) =
        fit_kmeans(&features, &kmeans_config).context("cluster: fitting k-means")?;
    model
        .save_json(&config.artifact("model.json"), &feature_names())
        .context("cluster: writing model.json")?;
    write_assignments(&config.artifact("assignments.csv"), &assignments)
        .context("cluster: writing assignments.csv")?;
    Ok(())
}

fn load_model(config: &PipelineConfig) -> Result<ClusterModel> {
    let path = expect_input(config.artifact("model.json"), "cluster model", "cluster")?;
    let (model, _) = ClusterModel::load_json(&path).context("loading cluster model")?;
    Ok(model)
}

pub fn explain(config: &PipelineConfig) -> Result<()> {
    let features_path =
        expect_input(config.artifact("features.csv"), "feature table", "preprocess")?;
    let features = load_features(&features_path).context("explain: loading features")?;
    let model = load_model(config)?;
    let relevances = relevance_all(&model, &features, config.beta_scope)
        .context("explain: computing relevance")?;
    write_relevance(&config.artifact("relevance.csv"), &relevances)
        .context("explain: writing relevance.csv")?;
    Ok(())
}

pub fn aggregate(config: &PipelineConfig) -> Result<()> {
    let relevance_path =
        expect_input(config.artifact("relevance.csv"), "relevance table", "explain")?;
    let relevances = load_relevance(&relevance_path).context("aggregate: loading relevance")?;
    let model = load_model(config)?;
    let mut aggregates = Vec::new();
    for &method in &config.methods {
        aggregates.extend(
            aggregate_clusters(&relevances, model.k, method)
                .with_context(|| format!("aggregate: {method} aggregation"))?,
        );
    }
    write_aggregates(&config.artifact("aggregates.csv"), &aggregates)
        .context("aggregate: writing aggregates.csv")?;
    Ok(())
}

pub fn changepoint(config: &PipelineConfig) -> Result<()> {
    let aggregates_path = expect_input(
        config.artifact("aggregates.csv"),
        "aggregated relevance",
        "aggregate",
    )?;
    let aggregates = mstates_core::aggregate::load_aggregates(&aggregates_path)
        .context("changepoint: loading aggregates")?;
    let mut results: Vec<ChangePointResult> = Vec::new();
    for agg in &aggregates {
        let curve = sort_curve(agg);
        let result = bayesian_changepoint(&curve).with_context(|| {
            format!(
                "changepoint: scanning cluster {} ({})",
                agg.cluster_id, agg.method
            )
        })?;
        let name = format!("elbow_{}_c{}.csv", agg.method, agg.cluster_id);
        write_elbow(&config.artifact(&name), &curve, &result)
            .with_context(|| format!("changepoint: writing {name}"))?;
        results.push(result);
    }
    write_changepoints(&config.artifact("changepoints.json"), &results)
        .context("changepoint: writing changepoints.json")?;
    Ok(())
}

/// Scan a standalone one-column curve file (optional `score` header).
pub fn changepoint_curve(config: &PipelineConfig, path: &std::path::Path) -> Result<()> {
    let body = std::fs::read_to_string(path)
        .with_context(|| format!("changepoint: reading {}", path.display()))?;
    let mut values = Vec::new();
    for (i, line) in body.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || (i == 0 && line.parse::<f64>().is_err()) {
            continue;
        }
        values.push(
            line.parse::<f64>()
                .with_context(|| format!("changepoint: bad value on line {}", i + 1))?,
        );
    }
    let (posterior, map_index) =
        changepoint_scan(&values).context("changepoint: scanning curve")?;
    #[derive(serde::Serialize)]
    struct CurveScan {
        length: usize,
        map_index: usize,
        posterior: Vec<f64>,
    }
    let out = config.artifact("changepoint_curve.json");
    let mut body = serde_json::to_string_pretty(&CurveScan {
        length: values.len(),
        map_index,
        posterior,
    })?;
    body.push('\n');
    std::fs::write(&out, body).with_context(|| format!("changepoint: writing {}", out.display()))
}

pub fn surrogate(config: &PipelineConfig) -> Result<()> {
    let features_path =
        expect_input(config.artifact("features.csv"), "feature table", "preprocess")?;
    let assignments_path = expect_input(
        config.artifact("assignments.csv"),
        "cluster assignments",
        "cluster",
    )?;
    let aggregates_path = expect_input(
        config.artifact("aggregates.csv"),
        "aggregated relevance",
        "aggregate",
    )?;

    let features = load_features(&features_path).context("surrogate: loading features")?;
    let assignments = mstates_core::clustering::load_assignments(&assignments_path)
        .context("surrogate: loading assignments")?;
    if features.len() != assignments.len() {
        bail!(
            "surrogate: features ({}) and assignments ({}) disagree; re-run cluster",
            features.len(),
            assignments.len()
        );
    }
    for (f, a) in features.iter().zip(&assignments) {
        if f.date != a.date {
            bail!("surrogate: features and assignments are out of sync at {}", f.date);
        }
    }
    let rows: Vec<Vec<f64>> = features.iter().map(|f| f.values.clone()).collect();
    let labels: Vec<usize> = assignments.iter().map(|a| a.cluster_id).collect();

    let aggregates = mstates_core::aggregate::load_aggregates(&aggregates_path)
        .context("surrogate: loading aggregates")?;
    let per_method = |method: AggregationMethod| -> Result<Vec<usize>> {
        let subset: Vec<AggregatedRelevance> = aggregates
            .iter()
            .filter(|a| a.method == method)
            .cloned()
            .collect();
        if subset.is_empty() {
            bail!("surrogate: no {method} aggregates found; run aggregate with both methods");
        }
        top_feature_per_cluster(&subset)
            .with_context(|| format!("surrogate: selecting top {method} features"))
    };
    let selections = SelectionSpec {
        mode_mode: per_method(AggregationMethod::ModeMode)?,
        median: per_method(AggregationMethod::Median)?,
    };

    if config.k > 8 {
        bail!("surrogate: the comparison network has 8 outputs; k = {} exceeds it", config.k);
    }
    let spec = NetworkSpec::reference(selections.mode_mode.len())
        .scaled(config.surrogate.width_divisor);
    let train_opts = TrainOptions {
        epochs: config.surrogate.epochs,
        batch_size: config.surrogate.batch_size,
        learning_rate: config.surrogate.learning_rate,
        optimizer: config.surrogate.optimizer,
        ..TrainOptions::default()
    };
    let opts = CompareOptions {
        runs: config.surrogate.runs,
        base_seed: config.surrogate_base_seed(),
        train: train_opts,
    };
    let reports = compare_selections(&rows, &labels, &spec, &selections, &opts)
        .context("surrogate: comparing selections")?;
    write_runs_csv(&config.artifact("surrogate_runs.csv"), &reports)
        .context("surrogate: writing surrogate_runs.csv")?;
    write_summary_json(&config.artifact("surrogate_summary.json"), &reports)
        .context("surrogate: writing surrogate_summary.json")?;

    // One reference network on the mode-mode selection, kept as an artifact.
    let sliced: Vec<Vec<f64>> = rows
        .iter()
        .map(|r| selections.mode_mode.iter().map(|&c| r[c]).collect())
        .collect();
    let outcome = train(&spec, &sliced, &labels, opts.base_seed, &train_opts)
        .context("surrogate: training the reference network")?;
    outcome
        .network
        .save_json(&config.artifact("network.json"))
        .context("surrogate: writing network.json")?;
    Ok(())
}

pub fn pipeline(config: &PipelineConfig) -> Result<()> {
    let have_prices = config
        .prices
        .clone()
        .unwrap_or_else(|| config.artifact("prices.csv"))
        .exists();
    if !have_prices {
        synth_prices(config)?;
    }
    ingest(config)?;
    preprocess(config)?;
    cluster(config)?;
    explain(config)?;
    aggregate(config)?;
    changepoint(config)?;
    surrogate(config)?;
    Ok(())
}
