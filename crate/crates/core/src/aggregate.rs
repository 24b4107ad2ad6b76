//! Global per-cluster feature rankings and the relevant/irrelevant cutoff.
//!
//! Per-instance relevance scores are condensed per cluster either as the
//! per-feature median or by counting how often a feature is an instance's
//! single most relevant one (mode-mode). Sorting the condensed scores
//! ascendingly yields an elbow-shaped curve; a Bayesian two-segment
//! regression scan locates the kink, and everything right of it counts as
//! relevant.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::par;
use crate::relevance::RelevanceVector;
use crate::sectors::{feature_index_of_name, feature_names, FEATURE_COUNT};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AggregationMethod {
    Median,
    ModeMode,
}

impl fmt::Display for AggregationMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            AggregationMethod::Median => write!(f, "median"),
            AggregationMethod::ModeMode => write!(f, "mode-mode"),
        }
    }
}

impl FromStr for AggregationMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "median" => Ok(AggregationMethod::Median),
            "mode-mode" => Ok(AggregationMethod::ModeMode),
            other => Err(Error::InvalidParameter(format!(
                "unknown aggregation method {other:?} (expected median or mode-mode)"
            ))),
        }
    }
}

/// One cluster's condensed feature scores.
#[derive(Debug, Clone, PartialEq)]
pub struct AggregatedRelevance {
    pub cluster_id: usize,
    pub method: AggregationMethod,
    /// Median relevance per feature, or win counts for mode-mode.
    pub scores: Vec<f64>,
    pub instance_count: usize,
}

fn homogeneous_cluster(relevances: &[RelevanceVector]) -> Result<(usize, usize)> {
    let first = relevances.first().ok_or(Error::EmptyCluster(0))?;
    for r in relevances {
        if r.cluster_id != first.cluster_id {
            return Err(Error::InvalidParameter(format!(
                "aggregation input mixes clusters {} and {}",
                first.cluster_id, r.cluster_id
            )));
        }
        if r.rho.len() != first.rho.len() {
            return Err(Error::DimensionMismatch {
                expected: first.rho.len(),
                got: r.rho.len(),
            });
        }
    }
    Ok((first.cluster_id, first.rho.len()))
}

/// Per-feature median across the cluster; even counts take the midpoint of
/// the two central values.
pub fn median_aggregate(relevances: &[RelevanceVector]) -> Result<AggregatedRelevance> {
    let (cluster_id, dim) = homogeneous_cluster(relevances)?;
    let scores = par::map_range(0..dim, |i| {
        let mut column: Vec<f64> = relevances.iter().map(|r| r.rho[i]).collect();
        column.sort_by(|a, b| a.partial_cmp(b).expect("relevance scores must be finite"));
        let n = column.len();
        if n % 2 == 1 {
            column[n / 2]
        } else {
            (column[n / 2 - 1] + column[n / 2]) / 2.0
        }
    });
    Ok(AggregatedRelevance {
        cluster_id,
        method: AggregationMethod::Median,
        scores,
        instance_count: relevances.len(),
    })
}

/// Count per feature how often it is an instance's single most relevant
/// feature (highest signed score, ties to the lowest feature index).
pub fn mode_mode(relevances: &[RelevanceVector]) -> Result<AggregatedRelevance> {
    let (cluster_id, dim) = homogeneous_cluster(relevances)?;
    let mut counts = vec![0usize; dim];
    for r in relevances {
        let mut best = 0;
        for (i, &v) in r.rho.iter().enumerate() {
            if v > r.rho[best] {
                best = i;
            }
        }
        counts[best] += 1;
    }
    Ok(AggregatedRelevance {
        cluster_id,
        method: AggregationMethod::ModeMode,
        scores: counts.iter().map(|&c| c as f64).collect(),
        instance_count: relevances.len(),
    })
}

/// Group a mixed relevance set by cluster and aggregate each one. Every id
/// in `0..k` must be populated.
pub fn aggregate_clusters(
    relevances: &[RelevanceVector],
    k: usize,
    method: AggregationMethod,
) -> Result<Vec<AggregatedRelevance>> {
    let mut out = Vec::with_capacity(k);
    for j in 0..k {
        let members: Vec<RelevanceVector> = relevances
            .iter()
            .filter(|r| r.cluster_id == j)
            .cloned()
            .collect();
        if members.is_empty() {
            return Err(Error::EmptyCluster(j));
        }
        out.push(match method {
            AggregationMethod::Median => median_aggregate(&members)?,
            AggregationMethod::ModeMode => mode_mode(&members)?,
        });
    }
    Ok(out)
}

/// Scores sorted ascendingly with the feature index remembered per rank.
#[derive(Debug, Clone, PartialEq)]
pub struct RelevanceCurve {
    pub cluster_id: usize,
    pub method: AggregationMethod,
    pub sorted_scores: Vec<f64>,
    /// `permutation[rank]` is the feature index occupying that rank.
    pub permutation: Vec<usize>,
}

/// Stable ascending sort; tied scores keep feature-index order.
pub fn sort_curve(agg: &AggregatedRelevance) -> RelevanceCurve {
    let mut order: Vec<usize> = (0..agg.scores.len()).collect();
    order.sort_by(|&a, &b| {
        agg.scores[a]
            .partial_cmp(&agg.scores[b])
            .expect("scores must be finite")
    });
    RelevanceCurve {
        cluster_id: agg.cluster_id,
        method: agg.method,
        sorted_scores: order.iter().map(|&i| agg.scores[i]).collect(),
        permutation: order,
    }
}

/// Posterior over change positions plus the induced relevance mask.
#[derive(Debug, Clone, PartialEq)]
pub struct ChangePointResult {
    pub cluster_id: usize,
    pub method: AggregationMethod,
    /// Posterior over candidate positions m = 2 ..= N-2; entry p belongs
    /// to m = p + 2.
    pub posterior: Vec<f64>,
    /// The winning split position in the sorted curve.
    pub map_index: usize,
    /// Indexed by feature: true when the feature's rank is >= map_index.
    pub relevant_mask: Vec<bool>,
}

fn segment_rss(values: &[f64], start: usize, end: usize) -> f64 {
    let n = (end - start) as f64;
    let mut sx = 0.0;
    let mut sy = 0.0;
    for (i, &y) in values[start..end].iter().enumerate() {
        sx += (start + i) as f64;
        sy += y;
    }
    let mx = sx / n;
    let my = sy / n;
    let mut sxx = 0.0;
    let mut sxy = 0.0;
    let mut syy = 0.0;
    for (i, &y) in values[start..end].iter().enumerate() {
        let dx = (start + i) as f64 - mx;
        let dy = y - my;
        sxx += dx * dx;
        sxy += dx * dy;
        syy += dy * dy;
    }
    (syy - sxy * sxy / sxx).max(0.0)
}

/// Scan all candidate positions m (2 <= m <= N-2) for a slope change. Two
/// independent least-squares lines are fitted left and right of m; with the
/// Gaussian noise scale marginalized under a scale-invariant prior and a
/// uniform prior over m, the log-posterior is
/// `-(N-4)/2 * ln(RSS_left + RSS_right)` up to a constant.
///
/// Returns the normalized posterior (entry p for m = p + 2) and the maximum
/// a posteriori m; posterior ties break toward larger m, keeping the
/// relevant set small. An exactly piecewise-linear curve makes the combined
/// RSS vanish: those positions split the whole mass evenly.
pub fn changepoint_scan(values: &[f64]) -> Result<(Vec<f64>, usize)> {
    let n = values.len();
    if n < 5 {
        return Err(Error::CurveTooShort(n));
    }
    for &v in values {
        if !v.is_finite() {
            return Err(Error::InvalidParameter(
                "change-point scan needs finite values".into(),
            ));
        }
    }
    let candidates: Vec<usize> = (2..=n - 2).collect();
    let totals: Vec<f64> = candidates
        .iter()
        .map(|&m| segment_rss(values, 0, m) + segment_rss(values, m, n))
        .collect();

    // Zero detection is relative to the curve's overall variation so that
    // rounding crumbs from an exactly linear segment still count as zero.
    let mean = values.iter().sum::<f64>() / n as f64;
    let variation: f64 = values.iter().map(|v| (v - mean).powi(2)).sum();
    let zero_cut = 1e-9 * variation;
    let zeros: Vec<usize> = totals
        .iter()
        .enumerate()
        .filter(|(_, &t)| t <= zero_cut)
        .map(|(p, _)| p)
        .collect();

    if !zeros.is_empty() {
        let mut posterior = vec![0.0; candidates.len()];
        let share = 1.0 / zeros.len() as f64;
        for &p in &zeros {
            posterior[p] = share;
        }
        let map_index = candidates[*zeros.last().unwrap()];
        return Ok((posterior, map_index));
    }

    let exponent = (n as f64 - 4.0) / 2.0;
    let log_post: Vec<f64> = totals.iter().map(|&t| -exponent * t.ln()).collect();
    let peak = log_post.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let weights: Vec<f64> = log_post.iter().map(|&lp| (lp - peak).exp()).collect();
    let total: f64 = weights.iter().sum();
    let posterior: Vec<f64> = weights.into_iter().map(|w| w / total).collect();

    let mut best = 0;
    for (p, &prob) in posterior.iter().enumerate() {
        if prob >= posterior[best] {
            best = p;
        }
    }
    Ok((posterior, candidates[best]))
}

/// Run the change-point scan on a sorted curve and derive the per-feature
/// relevance mask.
pub fn bayesian_changepoint(curve: &RelevanceCurve) -> Result<ChangePointResult> {
    let (posterior, map_index) = changepoint_scan(&curve.sorted_scores)?;
    let mut relevant_mask = vec![false; curve.sorted_scores.len()];
    for (rank, &feature) in curve.permutation.iter().enumerate() {
        relevant_mask[feature] = rank >= map_index;
    }
    Ok(ChangePointResult {
        cluster_id: curve.cluster_id,
        method: curve.method,
        posterior,
        map_index,
        relevant_mask,
    })
}

/// Feature indices flagged relevant, ascending.
pub fn select_relevant(result: &ChangePointResult) -> Vec<usize> {
    result
        .relevant_mask
        .iter()
        .enumerate()
        .filter(|(_, &m)| m)
        .map(|(i, _)| i)
        .collect()
}

/// Sector-pair names of the relevant features.
pub fn select_relevant_names(result: &ChangePointResult) -> Result<Vec<String>> {
    if result.relevant_mask.len() != FEATURE_COUNT {
        return Err(Error::DimensionMismatch {
            expected: FEATURE_COUNT,
            got: result.relevant_mask.len(),
        });
    }
    let names = feature_names();
    Ok(select_relevant(result)
        .into_iter()
        .map(|i| names[i].clone())
        .collect())
}

/// The best feature of each cluster, one per cluster in ascending cluster
/// order. When clusters share a winner, later clusters fall back to their
/// next-best feature so the result holds distinct features.
pub fn top_feature_per_cluster(aggregates: &[AggregatedRelevance]) -> Result<Vec<usize>> {
    let mut sorted: Vec<&AggregatedRelevance> = aggregates.iter().collect();
    sorted.sort_by_key(|a| a.cluster_id);
    for pair in sorted.windows(2) {
        if pair[0].cluster_id == pair[1].cluster_id {
            return Err(Error::InvalidParameter(format!(
                "duplicate aggregate for cluster {}",
                pair[0].cluster_id
            )));
        }
    }
    let mut taken: Vec<usize> = Vec::with_capacity(sorted.len());
    for agg in &sorted {
        let mut ranking: Vec<usize> = (0..agg.scores.len()).collect();
        // Descending score; ties keep the lower feature index first.
        ranking.sort_by(|&a, &b| {
            agg.scores[b]
                .partial_cmp(&agg.scores[a])
                .expect("scores must be finite")
        });
        let pick = ranking
            .into_iter()
            .find(|f| !taken.contains(f))
            .ok_or_else(|| {
                Error::InvalidParameter(format!(
                    "cluster {} has no feature left to pick",
                    agg.cluster_id
                ))
            })?;
        taken.push(pick);
    }
    Ok(taken)
}

/// Write aggregates in long form: `cluster_id,method,feature,score`.
pub fn write_aggregates(path: &Path, aggregates: &[AggregatedRelevance]) -> Result<()> {
    let names = feature_names();
    let mut writer = csv::Writer::from_path(path).map_err(|e| Error::csv(path, e))?;
    writer
        .write_record(["cluster_id", "method", "feature", "score"])
        .map_err(|e| Error::csv(path, e))?;
    for agg in aggregates {
        if agg.scores.len() != FEATURE_COUNT {
            return Err(Error::DimensionMismatch {
                expected: FEATURE_COUNT,
                got: agg.scores.len(),
            });
        }
        for (i, score) in agg.scores.iter().enumerate() {
            writer
                .write_record([
                    agg.cluster_id.to_string(),
                    agg.method.to_string(),
                    names[i].clone(),
                    score.to_string(),
                ])
                .map_err(|e| Error::csv(path, e))?;
        }
    }
    writer.flush().map_err(|e| Error::io(path, e))?;
    Ok(())
}

/// Read aggregates written by [`write_aggregates`]. Instance counts are
/// recoverable for mode-mode (the counts sum to it) but not for median
/// aggregates, so they are restored as the count sum or zero respectively.
pub fn load_aggregates(path: &Path) -> Result<Vec<AggregatedRelevance>> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_path(path)
        .map_err(|e| Error::csv(path, e))?;
    let mut out: Vec<AggregatedRelevance> = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| Error::csv(path, e))?;
        let cluster_id = record
            .get(0)
            .unwrap_or("")
            .parse::<usize>()
            .map_err(|e| Error::Format(format!("bad cluster id: {e}")))?;
        let method: AggregationMethod = record.get(1).unwrap_or("").parse()?;
        let feature = feature_index_of_name(record.get(2).unwrap_or(""))?;
        let score = record
            .get(3)
            .unwrap_or("")
            .parse::<f64>()
            .map_err(|e| Error::Format(format!("bad score: {e}")))?;
        let slot = out
            .iter_mut()
            .find(|a| a.cluster_id == cluster_id && a.method == method);
        let agg = match slot {
            Some(a) => a,
            None => {
                out.push(AggregatedRelevance {
                    cluster_id,
                    method,
                    scores: vec![0.0; FEATURE_COUNT],
                    instance_count: 0,
                });
                out.last_mut().unwrap()
            }
        };
        agg.scores[feature] = score;
    }
    for agg in &mut out {
        if agg.method == AggregationMethod::ModeMode {
            agg.instance_count = agg.scores.iter().sum::<f64>() as usize;
        }
    }
    Ok(out)
}

/// On-disk form of a change-point result; the relevant set is stored by
/// feature name so the file reads without the permutation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChangePointFile {
    pub cluster_id: usize,
    pub method: AggregationMethod,
    pub map_index: usize,
    pub posterior: Vec<f64>,
    pub relevant: Vec<String>,
}

/// Write one change-point record per cluster as a JSON array.
pub fn write_changepoints(path: &Path, results: &[ChangePointResult]) -> Result<()> {
    let files: Vec<ChangePointFile> = results
        .iter()
        .map(|r| {
            Ok(ChangePointFile {
                cluster_id: r.cluster_id,
                method: r.method,
                map_index: r.map_index,
                posterior: r.posterior.clone(),
                relevant: select_relevant_names(r)?,
            })
        })
        .collect::<Result<_>>()?;
    let mut body = serde_json::to_string_pretty(&files).map_err(|e| Error::json(path, e))?;
    body.push('\n');
    std::fs::write(path, body).map_err(|e| Error::io(path, e))
}

/// Read back a change-point JSON artifact.
pub fn load_changepoints(path: &Path) -> Result<Vec<ChangePointFile>> {
    let body = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let files: Vec<ChangePointFile> =
        serde_json::from_str(&body).map_err(|e| Error::json(path, e))?;
    for file in &files {
        for name in &file.relevant {
            feature_index_of_name(name)?;
        }
    }
    Ok(files)
}

/// One row of the plot-ready elbow artifact.
#[derive(Debug, Clone, PartialEq)]
pub struct ElbowRow {
    pub rank: usize,
    pub feature: String,
    pub score: f64,
    pub is_relevant: bool,
}

/// Write one cluster's elbow curve: `rank,feature,score,is_relevant`.
pub fn write_elbow(path: &Path, curve: &RelevanceCurve, result: &ChangePointResult) -> Result<()> {
    if curve.sorted_scores.len() != FEATURE_COUNT {
        return Err(Error::DimensionMismatch {
            expected: FEATURE_COUNT,
            got: curve.sorted_scores.len(),
        });
    }
    let names = feature_names();
    let mut writer = csv::Writer::from_path(path).map_err(|e| Error::csv(path, e))?;
    writer
        .write_record(["rank", "feature", "score", "is_relevant"])
        .map_err(|e| Error::csv(path, e))?;
    for (rank, (&feature, score)) in curve
        .permutation
        .iter()
        .zip(&curve.sorted_scores)
        .enumerate()
    {
        writer
            .write_record([
                rank.to_string(),
                names[feature].clone(),
                score.to_string(),
                (rank >= result.map_index).to_string(),
            ])
            .map_err(|e| Error::csv(path, e))?;
    }
    writer.flush().map_err(|e| Error::io(path, e))?;
    Ok(())
}

/// Read back an elbow CSV artifact.
pub fn load_elbow(path: &Path) -> Result<Vec<ElbowRow>> {
    let mut reader = csv::Reader::from_path(path).map_err(|e| Error::csv(path, e))?;
    let header = reader.headers().map_err(|e| Error::csv(path, e))?;
    if header.iter().collect::<Vec<_>>() != ["rank", "feature", "score", "is_relevant"] {
        return Err(Error::MalformedHeader(header.iter().collect::<Vec<_>>().join(",")));
    }
    let mut rows = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| Error::csv(path, e))?;
        let field = |i: usize| -> Result<&str> {
            record
                .get(i)
                .ok_or_else(|| Error::Format(format!("elbow row {} is short", rows.len())))
        };
        let feature = field(1)?.to_string();
        feature_index_of_name(&feature)?;
        rows.push(ElbowRow {
            rank: field(0)?
                .parse()
                .map_err(|e| Error::Format(format!("bad rank: {e}")))?,
            feature,
            score: field(2)?
                .parse()
                .map_err(|e| Error::Format(format!("bad score: {e}")))?,
            is_relevant: field(3)?
                .parse()
                .map_err(|e| Error::Format(format!("bad flag: {e}")))?,
        });
    }
    Ok(rows)
}
