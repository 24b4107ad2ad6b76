//! Layer-wise relevance propagation for the fitted k-means classifier.
//!
//! The cluster assignment rule is rewritten as a small two-layer network:
//! for target cluster j and each competitor l, the linear score
//! `h_l = w_l . x + b_l` with `w_l = 2(C_j - C_l)` and
//! `b_l = ||C_l||^2 - ||C_j||^2` equals `||x - C_l||^2 - ||x - C_j||^2`,
//! and the evidence `f_j = min_l h_l` is positive exactly when x belongs to
//! cluster j. Relevance is then propagated back through a softmin over the
//! competitors and split across input features along each hyperplane.

use std::path::Path;

use chrono::NaiveDate;

use crate::clustering::ClusterModel;
use crate::error::{Error, Result};
use crate::par;
use crate::preprocess::FeatureVector;
use crate::sectors::{feature_names, FEATURE_COUNT};

/// The neuralised view of one target cluster: one linear unit per
/// competitor cluster, min-pooled into the evidence score.
#[derive(Debug, Clone, PartialEq)]
pub struct NeuralisedClassifier {
    pub target_cluster: usize,
    /// Competitor cluster ids, ascending; parallel to the triples below.
    pub competitors: Vec<usize>,
    pub weights: Vec<Vec<f64>>,
    pub biases: Vec<f64>,
    pub midpoints: Vec<Vec<f64>>,
}

/// The linear scores of one instance under one neuralised classifier.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassifierEvaluation {
    pub h: Vec<f64>,
    /// Evidence for the target cluster: the minimum of `h`.
    pub f: f64,
}

/// Per-feature relevance scores of a single instance.
#[derive(Debug, Clone, PartialEq)]
pub struct RelevanceVector {
    pub date: NaiveDate,
    pub cluster_id: usize,
    pub rho: Vec<f64>,
    pub f: f64,
    pub beta: f64,
}

/// Which instances the softmin inverse temperature is averaged over.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BetaScope {
    /// Mean evidence over the instances assigned to the target cluster.
    /// Safe default: those evidences are non-negative by construction.
    ClusterMembers,
    /// Mean evidence over every instance, members or not. Can fail with a
    /// non-positive mean because non-members have negative evidence.
    AllInstances,
}

/// Build the linear units for target cluster `j`.
pub fn neuralise(model: &ClusterModel, j: usize) -> Result<NeuralisedClassifier> {
    if j >= model.k {
        return Err(Error::InvalidCluster { id: j, k: model.k });
    }
    let cj = &model.centroids[j];
    let norm_j: f64 = cj.iter().map(|v| v * v).sum();
    let mut competitors = Vec::with_capacity(model.k - 1);
    let mut weights = Vec::with_capacity(model.k - 1);
    let mut biases = Vec::with_capacity(model.k - 1);
    let mut midpoints = Vec::with_capacity(model.k - 1);
    for (l, cl) in model.centroids.iter().enumerate() {
        if l == j {
            continue;
        }
        let w: Vec<f64> = cj.iter().zip(cl).map(|(a, b)| 2.0 * (a - b)).collect();
        let norm_l: f64 = cl.iter().map(|v| v * v).sum();
        let b = norm_l - norm_j;
        let m: Vec<f64> = cj.iter().zip(cl).map(|(a, b)| (a + b) / 2.0).collect();
        debug_assert!(
            (w.iter().zip(&m).map(|(wi, mi)| wi * mi).sum::<f64>() + b).abs() <= 1e-9,
            "decision hyperplane missed its midpoint"
        );
        competitors.push(l);
        weights.push(w);
        biases.push(b);
        midpoints.push(m);
    }
    Ok(NeuralisedClassifier {
        target_cluster: j,
        competitors,
        weights,
        biases,
        midpoints,
    })
}

impl NeuralisedClassifier {
    /// Linear scores `h_l` and evidence `f = min h_l` for one point.
    pub fn evaluate_point(&self, point: &[f64]) -> Result<ClassifierEvaluation> {
        let dim = self.weights[0].len();
        if point.len() != dim {
            return Err(Error::DimensionMismatch {
                expected: dim,
                got: point.len(),
            });
        }
        let h: Vec<f64> = self
            .weights
            .iter()
            .zip(&self.biases)
            .map(|(w, b)| w.iter().zip(point).map(|(wi, xi)| wi * xi).sum::<f64>() + b)
            .collect();
        let f = h.iter().copied().fold(f64::INFINITY, f64::min);
        Ok(ClassifierEvaluation { h, f })
    }

    pub fn evaluate(&self, vector: &FeatureVector) -> Result<ClassifierEvaluation> {
        self.evaluate_point(&vector.values)
    }
}

/// Inverse temperature: reciprocal of the mean evidence over `members`.
pub fn estimate_beta(
    classifier: &NeuralisedClassifier,
    members: &[FeatureVector],
) -> Result<f64> {
    if members.is_empty() {
        return Err(Error::EmptyCluster(classifier.target_cluster));
    }
    let mut sum = 0.0;
    for member in members {
        sum += classifier.evaluate(member)?.f;
    }
    let mean = sum / members.len() as f64;
    // NaN must land in the error branch too, hence partial_cmp.
    if mean.partial_cmp(&0.0) != Some(std::cmp::Ordering::Greater) {
        return Err(Error::NonPositiveMeanEvidence {
            mean,
            count: members.len(),
        });
    }
    Ok(1.0 / mean)
}

/// Max-shifted softmin weights `exp(-beta h_l) / sum exp(-beta h_l)`.
///
/// The shift keeps the exponentials representable even when `beta * h`
/// reaches magnitudes that would underflow or overflow naively.
pub fn softmin_weights(h: &[f64], beta: f64) -> Result<Vec<f64>> {
    if !(beta > 0.0 && beta.is_finite()) {
        return Err(Error::InvalidParameter(format!(
            "softmin temperature must be finite and positive, got {beta}"
        )));
    }
    let shift = h
        .iter()
        .map(|&hl| -beta * hl)
        .fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = h.iter().map(|&hl| (-beta * hl - shift).exp()).collect();
    let total: f64 = exps.iter().sum();
    Ok(exps.into_iter().map(|e| e / total).collect())
}

/// Distribute the evidence over the competitor units (softmin weighting).
pub fn lrp_cluster_layer(eval: &ClassifierEvaluation, beta: f64) -> Result<Vec<f64>> {
    let weights = softmin_weights(&eval.h, beta)?;
    Ok(weights.into_iter().map(|w| w * eval.f).collect())
}

/// Split each competitor's relevance across input features in proportion to
/// the term `(x_i - m_{i,l}) w_{i,l}`; the per-competitor denominator is
/// that sum, which algebraically equals `h_l`.
pub fn lrp_input_layer(
    rho_l: &[f64],
    point: &[f64],
    classifier: &NeuralisedClassifier,
    date: NaiveDate,
) -> Result<Vec<f64>> {
    let dim = classifier.weights[0].len();
    if point.len() != dim {
        return Err(Error::DimensionMismatch {
            expected: dim,
            got: point.len(),
        });
    }
    if rho_l.len() != classifier.weights.len() {
        return Err(Error::DimensionMismatch {
            expected: classifier.weights.len(),
            got: rho_l.len(),
        });
    }
    let mut rho = vec![0.0f64; dim];
    for (l, &rl) in rho_l.iter().enumerate() {
        if rl == 0.0 {
            continue;
        }
        let w = &classifier.weights[l];
        let m = &classifier.midpoints[l];
        let terms: Vec<f64> = (0..dim).map(|i| (point[i] - m[i]) * w[i]).collect();
        let denom: f64 = terms.iter().sum();
        if denom.abs() <= 1e-12 {
            return Err(Error::HyperplaneDenominator {
                date,
                competitor: classifier.competitors[l],
            });
        }
        for (ri, ti) in rho.iter_mut().zip(&terms) {
            *ri += rl * ti / denom;
        }
    }
    Ok(rho)
}

/// Fitted model plus everything needed to explain instances: one
/// neuralised classifier per cluster and one shared softmin temperature per
/// cluster. Instances can then be explained independently (and in
/// parallel); only the temperature estimation is a sequential reduction.
#[derive(Debug, Clone)]
pub struct RelevanceContext {
    model: ClusterModel,
    classifiers: Vec<NeuralisedClassifier>,
    betas: Vec<f64>,
}

impl RelevanceContext {
    /// Assign `dataset`, neuralise every cluster, and fix each cluster's
    /// softmin temperature according to `scope`.
    pub fn new(
        model: &ClusterModel,
        dataset: &[FeatureVector],
        scope: BetaScope,
    ) -> Result<Self> {
        if dataset.is_empty() {
            return Err(Error::InvalidParameter(
                "relevance needs a nonempty dataset".into(),
            ));
        }
        let labels = par::try_map(dataset, |v| model.nearest(&v.values).map(|(id, _)| id))?;
        let classifiers: Vec<NeuralisedClassifier> = (0..model.k)
            .map(|j| neuralise(model, j))
            .collect::<Result<_>>()?;
        let mut betas = Vec::with_capacity(model.k);
        for (j, classifier) in classifiers.iter().enumerate() {
            let scoped: Vec<FeatureVector> = match scope {
                BetaScope::ClusterMembers => dataset
                    .iter()
                    .zip(&labels)
                    .filter(|(_, &l)| l == j)
                    .map(|(v, _)| v.clone())
                    .collect(),
                BetaScope::AllInstances => dataset.to_vec(),
            };
            betas.push(estimate_beta(classifier, &scoped)?);
        }
        Ok(Self {
            model: model.clone(),
            classifiers,
            betas,
        })
    }

    pub fn beta(&self, cluster: usize) -> f64 {
        self.betas[cluster]
    }

    pub fn classifier(&self, cluster: usize) -> &NeuralisedClassifier {
        &self.classifiers[cluster]
    }

    /// Explain one instance with respect to its own cluster assignment.
    pub fn explain(&self, vector: &FeatureVector) -> Result<RelevanceVector> {
        let (j, _) = self.model.nearest(&vector.values)?;
        let classifier = &self.classifiers[j];
        let eval = classifier.evaluate(vector)?;
        let beta = self.betas[j];
        let rho_l = lrp_cluster_layer(&eval, beta)?;
        let rho = lrp_input_layer(&rho_l, &vector.values, classifier, vector.date)?;
        Ok(RelevanceVector {
            date: vector.date,
            cluster_id: j,
            rho,
            f: eval.f,
            beta,
        })
    }
}

/// Explain every instance in `dataset` against the model that clustered it.
pub fn relevance_all(
    model: &ClusterModel,
    dataset: &[FeatureVector],
    scope: BetaScope,
) -> Result<Vec<RelevanceVector>> {
    let ctx = RelevanceContext::new(model, dataset, scope)?;
    par::try_map(dataset, |v| ctx.explain(v))
}

/// Write relevance vectors as CSV: `date,cluster_id,f,beta` plus one column
/// per sector pair.
pub fn write_relevance(path: &Path, vectors: &[RelevanceVector]) -> Result<()> {
    let mut writer = csv::Writer::from_path(path).map_err(|e| Error::csv(path, e))?;
    let mut header = vec![
        "date".to_string(),
        "cluster_id".to_string(),
        "f".to_string(),
        "beta".to_string(),
    ];
    header.extend(feature_names());
    writer.write_record(&header).map_err(|e| Error::csv(path, e))?;
    for v in vectors {
        if v.rho.len() != FEATURE_COUNT {
            return Err(Error::DimensionMismatch {
                expected: FEATURE_COUNT,
                got: v.rho.len(),
            });
        }
        let mut record = vec![
            v.date.format("%Y-%m-%d").to_string(),
            v.cluster_id.to_string(),
            v.f.to_string(),
            v.beta.to_string(),
        ];
        record.extend(v.rho.iter().map(|x| x.to_string()));
        writer.write_record(&record).map_err(|e| Error::csv(path, e))?;
    }
    writer.flush().map_err(|e| Error::io(path, e))?;
    Ok(())
}

/// Read relevance vectors written by [`write_relevance`].
pub fn load_relevance(path: &Path) -> Result<Vec<RelevanceVector>> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_path(path)
        .map_err(|e| Error::csv(path, e))?;
    let mut out = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| Error::csv(path, e))?;
        let field = |i: usize| record.get(i).unwrap_or("").to_string();
        let date = NaiveDate::parse_from_str(&field(0), "%Y-%m-%d")
            .map_err(|e| Error::Format(format!("bad date in {}: {e}", path.display())))?;
        let cluster_id = field(1)
            .parse::<usize>()
            .map_err(|e| Error::Format(format!("bad cluster id: {e}")))?;
        let f = field(2)
            .parse::<f64>()
            .map_err(|e| Error::Format(format!("bad evidence: {e}")))?;
        let beta = field(3)
            .parse::<f64>()
            .map_err(|e| Error::Format(format!("bad temperature: {e}")))?;
        let mut rho = Vec::with_capacity(FEATURE_COUNT);
        for i in 0..FEATURE_COUNT {
            rho.push(
                field(i + 4)
                    .parse::<f64>()
                    .map_err(|e| Error::Format(format!("bad relevance value: {e}")))?,
            );
        }
        out.push(RelevanceVector {
            date,
            cluster_id,
            rho,
            f,
            beta,
        });
    }
    Ok(out)
}
