//! Full-pipeline integration on generated prices: ingest through feature
//! aggregation, checking the stage contracts and end-to-end determinism.

use mstates_core::aggregate::{
    aggregate_clusters, bayesian_changepoint, select_relevant, sort_curve, AggregationMethod,
};
use mstates_core::clustering::{fit_kmeans, KMeansConfig};
use mstates_core::ingest::{
    aggregate_sectors, compute_returns, filter_coverage, interpolate_missing,
};
use mstates_core::preprocess::{flatten, local_normalize, rolling_correlation, FeatureVector};
use mstates_core::relevance::{relevance_all, BetaScope, RelevanceVector};
use mstates_core::sectors::{FEATURE_COUNT, SECTOR_COUNT};
use mstates_core::synth::{generate_prices, SyntheticPriceConfig};

const DAYS: usize = 700;
const NORM_WINDOW: usize = 13;
const CORR_WINDOW: usize = 40;

fn run_features(seed: u64) -> Vec<FeatureVector> {
    let config = SyntheticPriceConfig {
        tickers_per_sector: 3,
        days: DAYS,
        missing_prob: 0.01,
        seed,
        ..SyntheticPriceConfig::default()
    };
    let raw = generate_prices(&config).unwrap();
    let kept = filter_coverage(&raw, 0.9).unwrap();
    let filled = interpolate_missing(&kept).unwrap();
    let sectors = aggregate_sectors(&filled, &config.sector_map()).unwrap();
    let returns = compute_returns(&sectors).unwrap();
    let normalized = local_normalize(&returns, NORM_WINDOW).unwrap();
    let matrices = rolling_correlation(&normalized, CORR_WINDOW).unwrap();

    assert_eq!(returns.dates.len(), DAYS - 1);
    assert_eq!(normalized.dates.len(), DAYS - 1 - (NORM_WINDOW - 1));
    assert_eq!(matrices.len(), normalized.dates.len() - (CORR_WINDOW - 1));

    for m in &matrices {
        for i in 0..SECTOR_COUNT {
            assert_eq!(m.get(i, i), 1.0);
            for j in 0..SECTOR_COUNT {
                assert_eq!(m.get(i, j), m.get(j, i));
                assert!((-1.0..=1.0).contains(&m.get(i, j)));
            }
        }
        assert!(m.min_eigenvalue() >= -1e-8, "eigenvalue {}", m.min_eigenvalue());
    }

    matrices.iter().map(flatten).collect()
}

#[test]
fn prices_to_features_obey_stage_contracts() {
    let features = run_features(11);
    assert_eq!(features.len(), DAYS - 1 - (NORM_WINDOW - 1) - (CORR_WINDOW - 1));
    for f in &features {
        assert_eq!(f.values.len(), FEATURE_COUNT);
    }
    // Dates stay strictly increasing through every stage.
    for pair in features.windows(2) {
        assert!(pair[0].date < pair[1].date);
    }
}

#[test]
fn clustering_and_relevance_close_the_loop() {
    let features = run_features(11);
    let config = KMeansConfig {
        k: 8,
        seed: 4,
        ..KMeansConfig::default()
    };
    let (model, assignments) = fit_kmeans(&features, &config).unwrap();
    assert_eq!(assignments.len(), features.len());

    let mut used = [false; 8];
    for a in &assignments {
        used[a.cluster_id] = true;
    }
    assert!(used.iter().all(|&u| u), "all 8 states should be occupied");

    let relevances = relevance_all(&model, &features, BetaScope::ClusterMembers).unwrap();
    assert_eq!(relevances.len(), features.len());
    for (r, a) in relevances.iter().zip(&assignments) {
        assert_eq!(r.cluster_id, a.cluster_id);
        assert!(r.beta > 0.0);
        let total: f64 = r.rho.iter().sum();
        assert!(
            (total - r.f).abs() <= 1e-9 * r.f.abs().max(1.0),
            "relevance must add back up to the evidence"
        );
    }

    for method in [AggregationMethod::Median, AggregationMethod::ModeMode] {
        let aggregates = aggregate_clusters(&relevances, 8, method).unwrap();
        assert_eq!(aggregates.len(), 8);
        for agg in &aggregates {
            let curve = sort_curve(agg);
            for pair in curve.sorted_scores.windows(2) {
                assert!(pair[0] <= pair[1]);
            }
            let result = bayesian_changepoint(&curve).unwrap();
            let total: f64 = result.posterior.iter().sum();
            assert!((total - 1.0).abs() <= 1e-12);
            let selected = select_relevant(&result);
            assert_eq!(selected.len(), FEATURE_COUNT - result.map_index);
            assert!(!selected.is_empty());
        }
    }
}

#[test]
fn same_seed_reproduces_every_artifact() {
    let a = run_features(29);
    let b = run_features(29);
    assert_eq!(a, b);

    let config = KMeansConfig {
        k: 8,
        seed: 7,
        ..KMeansConfig::default()
    };
    let (model_a, assign_a) = fit_kmeans(&a, &config).unwrap();
    let (model_b, assign_b) = fit_kmeans(&b, &config).unwrap();
    assert_eq!(model_a.centroids, model_b.centroids);
    assert_eq!(assign_a, assign_b);

    let rel_a: Vec<RelevanceVector> =
        relevance_all(&model_a, &a, BetaScope::ClusterMembers).unwrap();
    let rel_b: Vec<RelevanceVector> =
        relevance_all(&model_b, &b, BetaScope::ClusterMembers).unwrap();
    assert_eq!(rel_a, rel_b);
}
