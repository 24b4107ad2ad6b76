//! Acceptance gate: one test per shipped claim, each at its stated
//! tolerance and runtime bound. The test name is the pass/fail line.

use std::collections::BTreeSet;
use std::time::{Duration, Instant};

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use mstates_core::aggregate::{
    aggregate_clusters, bayesian_changepoint, changepoint_scan, select_relevant, sort_curve,
    AggregationMethod,
};
use mstates_core::clustering::{brute_force_assign, fit_rows, KMeansConfig};
use mstates_core::ingest::{
    aggregate_sectors, compute_returns, filter_coverage, interpolate_missing,
};
use mstates_core::preprocess::{local_normalize, rolling_correlation};
use mstates_core::relevance::{neuralise, relevance_all, softmin_weights, BetaScope};
use mstates_core::sectors::{FEATURE_COUNT, SECTOR_COUNT};
use mstates_core::surrogate::{
    compare_selections, gradient_check, train, CompareOptions, NetworkSpec, SelectionMethod,
    SelectionSpec, TrainOptions,
};
use mstates_core::synth::{generate_planted, generate_prices, SyntheticPriceConfig};

fn assert_runtime(started: Instant, limit: Duration, what: &str) {
    let elapsed = started.elapsed();
    assert!(
        elapsed <= limit,
        "{what} took {elapsed:.2?}, over the {limit:.2?} budget"
    );
}

/// Shared dataset for criteria 1 and 2: well-separated planted blobs plus
/// the fitted model.
fn planted_fit() -> (Vec<Vec<f64>>, mstates_core::clustering::FitOutput) {
    let dataset = generate_planted(8, 5000, &[0, 5, 11, 18, 24, 30, 37, 43], 1.2, 0.2, 101)
        .expect("planted dataset");
    let fit = fit_rows(
        &dataset.features,
        &KMeansConfig {
            k: 8,
            seed: 3,
            ..KMeansConfig::default()
        },
    )
    .expect("k-means fit");
    (dataset.features, fit)
}

#[test]
fn criterion_1_classifier_equivalence() {
    let started = Instant::now();
    let (features, fit) = planted_fit();
    let classifiers: Vec<_> = (0..8)
        .map(|j| neuralise(&fit.model, j).expect("neuralise"))
        .collect();

    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let random_vectors: Vec<Vec<f64>> = (0..10_000)
        .map(|_| (0..FEATURE_COUNT).map(|_| rng.gen_range(-1.0..=1.0)).collect())
        .collect();

    let mut checked = 0usize;
    let mut ties = 0usize;
    for point in features.iter().chain(&random_vectors) {
        let assigned = brute_force_assign(&fit.model.centroids, point);
        for (j, classifier) in classifiers.iter().enumerate() {
            let f = classifier.evaluate_point(point).expect("evaluate").f;
            if f.abs() <= 1e-12 {
                ties += 1;
                continue;
            }
            assert_eq!(
                f > 0.0,
                assigned == j,
                "evidence sign disagrees with nearest-centroid assignment"
            );
            checked += 1;
        }
    }
    assert!(checked > 100_000, "only {checked} comparisons ran");
    println!("criterion 1: {checked} sign checks agree ({ties} ties skipped)");
    assert_runtime(started, Duration::from_secs(10), "classifier equivalence");
}

#[test]
fn criterion_2_lrp_conservation() {
    let started = Instant::now();
    let (features, fit) = planted_fit();
    let dates: Vec<chrono::NaiveDate> = (0..features.len())
        .map(|i| {
            chrono::NaiveDate::from_ymd_opt(2000, 1, 1).unwrap() + chrono::Days::new(i as u64)
        })
        .collect();
    let vectors: Vec<mstates_core::preprocess::FeatureVector> = features
        .iter()
        .zip(&dates)
        .map(|(values, &date)| mstates_core::preprocess::FeatureVector {
            date,
            values: values.clone(),
        })
        .collect();

    let relevances =
        relevance_all(&fit.model, &vectors, BetaScope::ClusterMembers).expect("relevance");
    let classifiers: Vec<_> = (0..8)
        .map(|j| neuralise(&fit.model, j).expect("neuralise"))
        .collect();
    for (r, v) in relevances.iter().zip(&vectors) {
        let total: f64 = r.rho.iter().sum();
        assert!(
            (total - r.f).abs() <= 1e-9 * r.f.abs().max(1.0),
            "conservation violated: sum {total} vs evidence {}",
            r.f
        );
        let eval = classifiers[r.cluster_id].evaluate(v).expect("evaluate");
        let weights = softmin_weights(&eval.h, r.beta).expect("softmin");
        let weight_sum: f64 = weights.iter().sum();
        assert!((weight_sum - 1.0).abs() <= 1e-12, "weights sum to {weight_sum}");
    }
    println!("criterion 2: conservation held for {} instances", relevances.len());
    assert_runtime(started, Duration::from_secs(10), "conservation check");
}

#[test]
fn criterion_3_planted_relevance_recovery() {
    let started = Instant::now();
    let mut successes = 0;
    for trial in 0..10u64 {
        // Fresh planted columns per trial; separation/noise = 4.
        let mut rng = ChaCha8Rng::seed_from_u64(9000 + trial);
        let mut planted = BTreeSet::new();
        while planted.len() < 8 {
            planted.insert(rng.gen_range(0..FEATURE_COUNT));
        }
        let relevant: Vec<usize> = planted.iter().copied().collect();
        let dataset =
            generate_planted(8, 1500, &relevant, 1.2, 0.3, trial).expect("planted dataset");
        // Best of several restarts by inertia, the usual guard against bad
        // k-means local optima (a split blob leaves twin centroids whose
        // mutual relevance is pure noise).
        let fit = (0..16u64)
            .map(|restart| {
                fit_rows(
                    &dataset.features,
                    &KMeansConfig {
                        k: 8,
                        seed: trial * 16 + restart,
                        ..KMeansConfig::default()
                    },
                )
                .expect("k-means fit")
            })
            .min_by(|a, b| {
                let inertia = |f: &mstates_core::clustering::FitOutput| {
                    f.distances.iter().map(|d| d * d).sum::<f64>()
                };
                inertia(a).total_cmp(&inertia(b))
            })
            .expect("at least one restart");
        let vectors: Vec<mstates_core::preprocess::FeatureVector> = dataset
            .features
            .iter()
            .enumerate()
            .map(|(i, values)| mstates_core::preprocess::FeatureVector {
                date: chrono::NaiveDate::from_ymd_opt(2000, 1, 1).unwrap()
                    + chrono::Days::new(i as u64),
                values: values.clone(),
            })
            .collect();
        let relevances =
            relevance_all(&fit.model, &vectors, BetaScope::ClusterMembers).expect("relevance");
        let aggregates =
            aggregate_clusters(&relevances, 8, AggregationMethod::ModeMode).expect("aggregate");

        let mut union = BTreeSet::new();
        for agg in &aggregates {
            let curve = sort_curve(agg);
            let result = bayesian_changepoint(&curve).expect("changepoint");
            union.extend(select_relevant(&result));
        }
        let covers = planted.iter().all(|c| union.contains(c));
        let spurious = union.difference(&planted).count();
        if covers && spurious <= 4 {
            successes += 1;
        } else {
            println!(
                "criterion 3 trial {trial}: covers={covers} spurious={spurious} union={union:?} planted={planted:?}"
            );
        }
    }
    assert!(successes >= 9, "only {successes}/10 trials recovered the planted set");
    println!("criterion 3: {successes}/10 trials recovered the planted columns");
    assert_runtime(started, Duration::from_secs(60), "planted recovery");
}

#[test]
fn criterion_4_changepoint_calibration() {
    let started = Instant::now();
    // 30 flat zeros, then a 15-point linear ramp from 0.2 to 1.0. The ramp
    // jumps at the break the way sorted per-feature count curves do. (A ramp
    // collinear with the plateau would make the split at 29 exactly as good
    // as the one at 30, and noise then scatters the maximum across both;
    // that degenerate shape is pinned down in the library's unit tests.)
    let noiseless: Vec<f64> = (0..45)
        .map(|i| {
            if i < 30 {
                0.0
            } else {
                0.2 + (i - 30) as f64 * (0.8 / 14.0)
            }
        })
        .collect();
    let (_, map_index) = changepoint_scan(&noiseless).expect("noiseless scan");
    assert_eq!(map_index, 30, "noiseless elbow must split exactly at the ramp");

    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let normal = rand_distr::Normal::new(0.0, 0.02).unwrap();
    let mut within = 0;
    for _ in 0..1000 {
        let noisy: Vec<f64> = noiseless
            .iter()
            .map(|v| v + rand_distr::Distribution::sample(&normal, &mut rng))
            .collect();
        let (_, m) = changepoint_scan(&noisy).expect("noisy scan");
        if (29..=31).contains(&m) {
            within += 1;
        }
    }
    assert!(within >= 950, "map within +-1 in only {within}/1000 trials");
    println!("criterion 4: noiseless exact; noisy within +-1 in {within}/1000 trials");
    assert_runtime(started, Duration::from_secs(30), "change-point calibration");
}

#[test]
fn criterion_5_correlation_validity() {
    let started = Instant::now();
    let config = SyntheticPriceConfig {
        days: 1000,
        ..SyntheticPriceConfig::default()
    };
    let table = generate_prices(&config).expect("prices");
    let kept = filter_coverage(&table, 0.8).expect("coverage");
    let filled = interpolate_missing(&kept).expect("interpolation");
    let sectors = aggregate_sectors(&filled, &config.sector_map()).expect("sectors");
    let returns = compute_returns(&sectors).expect("returns");
    let normalized = local_normalize(&returns, 13).expect("normalization");
    let matrices = rolling_correlation(&normalized, 40).expect("correlation");
    assert_eq!(matrices.len(), 1000 - 1 - 12 - 39);

    for m in &matrices {
        for i in 0..SECTOR_COUNT {
            assert_eq!(m.get(i, i), 1.0, "diagonal must be exactly one");
            for j in 0..SECTOR_COUNT {
                assert_eq!(m.get(i, j), m.get(j, i), "matrix must be exactly symmetric");
                assert!((-1.0..=1.0).contains(&m.get(i, j)));
            }
        }
        let lambda = m.min_eigenvalue();
        assert!(lambda >= -1e-8, "eigenvalue {lambda} below tolerance");
    }
    println!("criterion 5: {} matrices valid", matrices.len());
    assert_runtime(started, Duration::from_secs(30), "correlation validity");
}

#[test]
fn criterion_6_surrogate_self_consistency() {
    let started = Instant::now();
    let relevant = [2, 7, 13, 19, 26, 31, 38, 44];
    let dataset = generate_planted(8, 2000, &relevant, 1.2, 0.2, 606).expect("planted dataset");

    let spec = NetworkSpec::reference(8).scaled(4);
    let train_opts = TrainOptions::default();
    let opts = CompareOptions {
        runs: 20,
        base_seed: 0,
        train: train_opts,
    };
    let selections = SelectionSpec {
        mode_mode: relevant.to_vec(),
        median: relevant.to_vec(),
    };
    let reports = compare_selections(
        &dataset.features,
        &dataset.labels,
        &spec,
        &selections,
        &opts,
    )
    .expect("comparison");
    let mean_of = |method: SelectionMethod| {
        reports
            .iter()
            .find(|r| r.method == method)
            .expect("report present")
            .mean
    };
    let planted_mean = mean_of(SelectionMethod::ModeMode);
    let random_mean = mean_of(SelectionMethod::Random);
    assert!(
        planted_mean - random_mean >= 0.10,
        "planted-feature advantage only {:.4} (planted {planted_mean:.4}, random {random_mean:.4})",
        planted_mean - random_mean
    );

    // Chance level: shuffled labels carry no signal.
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    let mut shuffled = dataset.labels.clone();
    for i in (1..shuffled.len()).rev() {
        let j = rng.gen_range(0..=i);
        shuffled.swap(i, j);
    }
    let sliced: Vec<Vec<f64>> = dataset
        .features
        .iter()
        .map(|row| relevant.iter().map(|&c| row[c]).collect())
        .collect();
    let mut chance_sum = 0.0;
    for seed in 0..10 {
        chance_sum += train(&spec, &sliced, &shuffled, seed, &train_opts)
            .expect("chance training")
            .test_accuracy;
    }
    let chance = chance_sum / 10.0;
    assert!(
        (0.075..=0.175).contains(&chance),
        "chance-level accuracy {chance:.4} outside [0.075, 0.175]"
    );
    println!(
        "criterion 6: planted {planted_mean:.3} vs random {random_mean:.3}; chance {chance:.3}"
    );
    assert_runtime(started, Duration::from_secs(900), "surrogate comparison");
}

#[test]
fn criterion_7_gradient_correctness() {
    let started = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let x: Vec<f64> = (0..8).map(|_| rng.gen_range(-1.0..=1.0)).collect();

    let reduced = NetworkSpec::reference(8).scaled(8);
    let err = gradient_check(&reduced, &x, 3, 5).expect("reduced-network check");
    assert!(err <= 1e-4, "reduced network gradient error {err:e}");

    let linear = NetworkSpec {
        input_dim: 8,
        layers: vec![mstates_core::surrogate::LayerSpec::Dense {
            units: 8,
            activation: mstates_core::surrogate::Activation::Softmax,
        }],
    };
    let linear_err = gradient_check(&linear, &x, 3, 5).expect("linear check");
    assert!(linear_err <= 1e-6, "linear softmax gradient error {linear_err:e}");
    println!("criterion 7: gradient errors {err:.2e} (reduced), {linear_err:.2e} (linear)");
    assert_runtime(started, Duration::from_secs(60), "gradient correctness");
}

#[test]
fn criterion_8_end_to_end_determinism() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let config_path = dir.path().join("config.json");
    std::fs::write(
        &config_path,
        format!(
            concat!(
                "{{\n",
                "  \"out_dir\": {:?},\n",
                "  \"seed\": 13,\n",
                "  \"synth\": {{ \"days\": 300, \"tickers_per_sector\": 3 }},\n",
                "  \"surrogate\": {{ \"runs\": 2, \"epochs\": 4, \"width_divisor\": 8 }}\n",
                "}}\n"
            ),
            out.to_str().unwrap()
        ),
    )
    .unwrap();

    let run = || {
        let status = std::process::Command::new(env!("CARGO_BIN_EXE_mstates"))
            .args(["pipeline", "--config"])
            .arg(&config_path)
            .status()
            .expect("pipeline run");
        assert!(status.success());
        let mut files = std::collections::BTreeMap::new();
        for entry in std::fs::read_dir(&out).unwrap() {
            let entry = entry.unwrap();
            files.insert(
                entry.file_name().to_string_lossy().into_owned(),
                std::fs::read(entry.path()).unwrap(),
            );
        }
        files
    };
    let first = run();
    let second = run();
    assert_eq!(first.len(), second.len());
    for (name, bytes) in &first {
        assert_eq!(
            Some(bytes),
            second.get(name),
            "{name} differs between identical runs"
        );
    }
    println!("criterion 8: {} artifacts byte-identical across runs", first.len());
}

#[test]
fn criterion_9_paper_scale_reference() {
    let (Ok(prices), Ok(sectors)) = (
        std::env::var("MSTATES_REAL_PRICES"),
        std::env::var("MSTATES_REAL_SECTORS"),
    ) else {
        println!(
            "criterion 9: SKIP (set MSTATES_REAL_PRICES and MSTATES_REAL_SECTORS to a real price table and sector map to run the reference comparison)"
        );
        return;
    };

    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let config_path = dir.path().join("config.json");
    let runs: usize = std::env::var("MSTATES_REAL_RUNS")
        .ok()
        .and_then(|v| v.parse().ok())
        .unwrap_or(20);
    let divisor: usize = std::env::var("MSTATES_REAL_WIDTH_DIVISOR")
        .ok()
        .and_then(|v| v.parse().ok())
        .unwrap_or(4);
    std::fs::write(
        &config_path,
        format!(
            concat!(
                "{{\n",
                "  \"prices\": {:?},\n",
                "  \"sector_map\": {:?},\n",
                "  \"out_dir\": {:?},\n",
                "  \"surrogate\": {{ \"runs\": {}, \"width_divisor\": {} }}\n",
                "}}\n"
            ),
            prices,
            sectors,
            out.to_str().unwrap(),
            runs,
            divisor
        ),
    )
    .unwrap();
    let status = std::process::Command::new(env!("CARGO_BIN_EXE_mstates"))
        .args(["pipeline", "--config"])
        .arg(&config_path)
        .status()
        .expect("pipeline run");
    assert!(status.success());

    let features =
        mstates_core::preprocess::load_features(&out.join("features.csv")).unwrap();
    assert!(!features.is_empty());
    let (model, _) =
        mstates_core::clustering::ClusterModel::load_json(&out.join("model.json")).unwrap();
    assert_eq!(model.k, 8);
    let changepoints =
        mstates_core::aggregate::load_changepoints(&out.join("changepoints.json")).unwrap();
    assert_eq!(changepoints.len(), 16);

    let summary =
        mstates_core::surrogate::load_summary_json(&out.join("surrogate_summary.json")).unwrap();
    let mean_of = |m: SelectionMethod| summary.iter().find(|e| e.method == m).unwrap().mean;
    let mode = mean_of(SelectionMethod::ModeMode);
    let median = mean_of(SelectionMethod::Median);
    let random = mean_of(SelectionMethod::Random);
    assert!(
        mode >= median - 0.05,
        "mode-mode {mode:.4} fell more than 0.05 below median {median:.4}"
    );
    assert!(
        median > random - 0.05,
        "median {median:.4} fell more than 0.05 below random {random:.4}"
    );
    println!(
        "criterion 9: mode-mode {mode:.3}, median {median:.3}, random {random:.3} ({runs} runs)"
    );
}
