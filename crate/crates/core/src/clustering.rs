//! K-means market states: Lloyd's algorithm over daily correlation feature
//! vectors, one cluster per market state.

use std::collections::HashSet;
use std::path::Path;

use chrono::NaiveDate;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::par;
use crate::preprocess::FeatureVector;

/// How the initial centroids are chosen.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitMethod {
    /// Distance-weighted greedy seeding: after a uniform first pick, each
    /// further centroid is sampled proportionally to its squared distance
    /// from the closest centroid chosen so far. Far more robust than
    /// uniform choice at k=8 on strongly correlated data.
    GreedySpread,
    /// Plain uniform choice of k distinct input rows.
    Uniform,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KMeansConfig {
    pub k: usize,
    pub seed: u64,
    pub max_iter: usize,
    pub tol: f64,
    pub init: InitMethod,
}

impl Default for KMeansConfig {
    fn default() -> Self {
        Self {
            k: 8,
            seed: 0,
            max_iter: 300,
            tol: 1e-6,
            init: InitMethod::GreedySpread,
        }
    }
}

/// A fitted k-means model.
#[derive(Debug, Clone, PartialEq)]
pub struct ClusterModel {
    pub k: usize,
    pub centroids: Vec<Vec<f64>>,
    /// Sum of squared distances of every training point to its centroid.
    pub inertia: f64,
    pub seed: u64,
    pub tol: f64,
    pub iterations_run: usize,
}

/// One day mapped to its market state.
#[derive(Debug, Clone, PartialEq)]
pub struct Assignment {
    pub date: NaiveDate,
    pub cluster_id: usize,
    /// Euclidean distance to the winning centroid.
    pub distance: f64,
}

fn squared_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum()
}

/// Index and squared distance of the nearest centroid; ties go to the
/// lowest cluster id because the comparison is strict.
fn nearest_sq(centroids: &[Vec<f64>], point: &[f64]) -> (usize, f64) {
    let mut best = 0;
    let mut best_d = squared_distance(&centroids[0], point);
    for (l, c) in centroids.iter().enumerate().skip(1) {
        let d = squared_distance(c, point);
        if d < best_d {
            best = l;
            best_d = d;
        }
    }
    (best, best_d)
}

/// Deliberately naive independent checker: full distance table, lowest id
/// wins ties. Exists so tests do not share arithmetic with [`nearest_sq`].
pub fn brute_force_assign(centroids: &[Vec<f64>], point: &[f64]) -> usize {
    let distances: Vec<f64> = centroids
        .iter()
        .map(|c| {
            c.iter()
                .zip(point)
                .map(|(x, y)| (x - y) * (x - y))
                .sum::<f64>()
                .sqrt()
        })
        .collect();
    let mut best = 0;
    for (l, &d) in distances.iter().enumerate() {
        if d < distances[best] {
            best = l;
        }
    }
    best
}

impl ClusterModel {
    /// Nearest centroid id and Euclidean distance.
    pub fn nearest(&self, point: &[f64]) -> Result<(usize, f64)> {
        let dim = self.centroids[0].len();
        if point.len() != dim {
            return Err(Error::DimensionMismatch {
                expected: dim,
                got: point.len(),
            });
        }
        let (id, d2) = nearest_sq(&self.centroids, point);
        Ok((id, d2.sqrt()))
    }

    pub fn assign(&self, vector: &FeatureVector) -> Result<Assignment> {
        let (cluster_id, distance) = self.nearest(&vector.values)?;
        Ok(Assignment {
            date: vector.date,
            cluster_id,
            distance,
        })
    }
}

fn count_distinct(points: &[Vec<f64>]) -> usize {
    let mut distinct: Vec<&Vec<f64>> = Vec::new();
    for p in points {
        if !distinct.contains(&p) {
            distinct.push(p);
        }
    }
    distinct.len()
}

fn init_centroids(
    points: &[Vec<f64>],
    config: &KMeansConfig,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<Vec<f64>>> {
    match config.init {
        InitMethod::Uniform => {
            // Partial Fisher-Yates over indices: k distinct rows.
            let mut indices: Vec<usize> = (0..points.len()).collect();
            let mut chosen = Vec::with_capacity(config.k);
            for i in 0..config.k {
                let j = rng.gen_range(i..indices.len());
                indices.swap(i, j);
                chosen.push(points[indices[i]].clone());
            }
            Ok(chosen)
        }
        InitMethod::GreedySpread => {
            let first = rng.gen_range(0..points.len());
            let mut chosen = vec![points[first].clone()];
            let mut d2: Vec<f64> = points
                .iter()
                .map(|p| squared_distance(p, &chosen[0]))
                .collect();
            while chosen.len() < config.k {
                let total: f64 = d2.iter().sum();
                if total <= 0.0 {
                    // Every remaining point coincides with a chosen centroid.
                    return Err(Error::TooFewPoints {
                        k: config.k,
                        points: count_distinct(points),
                    });
                }
                let target = rng.gen::<f64>() * total;
                let mut acc = 0.0;
                let mut pick = points.len() - 1;
                for (i, &w) in d2.iter().enumerate() {
                    acc += w;
                    if acc >= target && w > 0.0 {
                        pick = i;
                        break;
                    }
                }
                let new = points[pick].clone();
                for (i, p) in points.iter().enumerate() {
                    let d = squared_distance(p, &new);
                    if d < d2[i] {
                        d2[i] = d;
                    }
                }
                chosen.push(new);
            }
            Ok(chosen)
        }
    }
}

/// Model plus the per-point result of the final Lloyd iteration.
#[derive(Debug, Clone, PartialEq)]
pub struct FitOutput {
    pub model: ClusterModel,
    pub labels: Vec<usize>,
    /// Euclidean distance of each point to its centroid.
    pub distances: Vec<f64>,
}

/// Lloyd's algorithm from explicit starting centroids. Exposed so the
/// empty-cluster repair path can be exercised with hand-built states.
pub fn fit_with_centroids(
    points: &[Vec<f64>],
    initial: Vec<Vec<f64>>,
    seed: u64,
    max_iter: usize,
    tol: f64,
) -> Result<FitOutput> {
    let k = initial.len();
    let mut centroids = initial;
    let assign_all = |cs: &[Vec<f64>]| -> Vec<(usize, f64)> {
        par::map(points, |p| nearest_sq(cs, p))
    };
    let mut assignment = assign_all(&centroids);
    let mut prev_inertia = f64::INFINITY;
    let mut iterations_run = 0;

    for _ in 0..max_iter {
        iterations_run += 1;
        let dim = centroids[0].len();
        let mut sums = vec![vec![0.0f64; dim]; k];
        let mut counts = vec![0usize; k];
        for (p, &(label, _)) in points.iter().zip(&assignment) {
            counts[label] += 1;
            for (s, &x) in sums[label].iter_mut().zip(p.iter()) {
                *s += x;
            }
        }
        let mut new_centroids = centroids.clone();
        for l in 0..k {
            if counts[l] > 0 {
                for (c, s) in new_centroids[l].iter_mut().zip(&sums[l]) {
                    *c = s / counts[l] as f64;
                }
            }
        }
        // Orphaned clusters grab the point currently farthest from its own
        // centroid; each repair consumes a distinct point.
        let mut used = HashSet::new();
        for l in 0..k {
            if counts[l] > 0 {
                continue;
            }
            let mut far = None;
            for (i, &(_, d2)) in assignment.iter().enumerate() {
                if used.contains(&i) {
                    continue;
                }
                match far {
                    Some((_, best)) if d2 <= best => {}
                    _ => far = Some((i, d2)),
                }
            }
            let (i, _) = far.expect("more clusters than points slipped past validation");
            new_centroids[l] = points[i].clone();
            used.insert(i);
            assignment[i] = (l, 0.0);
        }

        let displacement = centroids
            .iter()
            .zip(&new_centroids)
            .map(|(a, b)| squared_distance(a, b).sqrt())
            .fold(0.0f64, f64::max);
        centroids = new_centroids;
        assignment = assign_all(&centroids);

        let inertia: f64 = assignment.iter().map(|&(_, d2)| d2).sum();
        debug_assert!(
            inertia <= prev_inertia * (1.0 + 1e-12) + 1e-12,
            "inertia rose from {prev_inertia} to {inertia}"
        );
        prev_inertia = inertia;

        if displacement <= tol {
            break;
        }
    }

    for a in 0..k {
        for b in a + 1..k {
            if centroids[a] == centroids[b] {
                return Err(Error::DuplicateCentroids { a, b });
            }
        }
    }

    let inertia: f64 = assignment.iter().map(|&(_, d2)| d2).sum();
    let (labels, distances) = assignment
        .into_iter()
        .map(|(l, d2)| (l, d2.sqrt()))
        .unzip();
    Ok(FitOutput {
        model: ClusterModel {
            k,
            centroids,
            inertia,
            seed,
            tol,
            iterations_run,
        },
        labels,
        distances,
    })
}

/// Fit k-means to bare rows.
pub fn fit_rows(points: &[Vec<f64>], config: &KMeansConfig) -> Result<FitOutput> {
    if config.k < 2 {
        return Err(Error::InvalidParameter(format!(
            "need at least 2 clusters, got {}",
            config.k
        )));
    }
    if config.max_iter < 1 {
        return Err(Error::InvalidParameter("max_iter must be at least 1".into()));
    }
    if !(config.tol >= 0.0 && config.tol.is_finite()) {
        return Err(Error::InvalidParameter(format!(
            "tol must be finite and non-negative, got {}",
            config.tol
        )));
    }
    if points.len() < config.k {
        return Err(Error::TooFewPoints {
            k: config.k,
            points: points.len(),
        });
    }
    let dim = points[0].len();
    for p in points {
        if p.len() != dim {
            return Err(Error::DimensionMismatch {
                expected: dim,
                got: p.len(),
            });
        }
    }
    if dim == 0 {
        return Err(Error::InvalidParameter("points must have at least one column".into()));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let initial = init_centroids(points, config, &mut rng)?;
    fit_with_centroids(points, initial, config.seed, config.max_iter, config.tol)
}

/// Fit k-means to dated feature vectors.
pub fn fit_kmeans(
    vectors: &[FeatureVector],
    config: &KMeansConfig,
) -> Result<(ClusterModel, Vec<Assignment>)> {
    let rows: Vec<Vec<f64>> = vectors.iter().map(|v| v.values.clone()).collect();
    let fit = fit_rows(&rows, config)?;
    let assignments = vectors
        .iter()
        .zip(fit.labels.iter().zip(&fit.distances))
        .map(|(v, (&cluster_id, &distance))| Assignment {
            date: v.date,
            cluster_id,
            distance,
        })
        .collect();
    Ok((fit.model, assignments))
}

#[derive(Serialize, Deserialize)]
struct ModelFile {
    k: usize,
    seed: u64,
    tol: f64,
    inertia: f64,
    iterations_run: usize,
    index_map: Vec<String>,
    centroids: Vec<Vec<f64>>,
}

impl ClusterModel {
    /// Persist as JSON; `index_map` names the feature positions.
    pub fn save_json(&self, path: &Path, index_map: &[String]) -> Result<()> {
        if index_map.len() != self.centroids[0].len() {
            return Err(Error::DimensionMismatch {
                expected: self.centroids[0].len(),
                got: index_map.len(),
            });
        }
        let file = ModelFile {
            k: self.k,
            seed: self.seed,
            tol: self.tol,
            inertia: self.inertia,
            iterations_run: self.iterations_run,
            index_map: index_map.to_vec(),
            centroids: self.centroids.clone(),
        };
        let mut body = serde_json::to_string_pretty(&file)
            .map_err(|e| Error::json(path, e))?;
        body.push('\n');
        std::fs::write(path, body).map_err(|e| Error::io(path, e))
    }

    /// Load a model written by [`ClusterModel::save_json`]; returns the model
    /// and its feature index map.
    pub fn load_json(path: &Path) -> Result<(Self, Vec<String>)> {
        let body = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let file: ModelFile = serde_json::from_str(&body).map_err(|e| Error::json(path, e))?;
        if file.centroids.len() != file.k || file.k < 2 {
            return Err(Error::Format(format!(
                "model file {} declares k={} but holds {} centroids",
                path.display(),
                file.k,
                file.centroids.len()
            )));
        }
        for c in &file.centroids {
            if c.len() != file.index_map.len() || c.iter().any(|v| !v.is_finite()) {
                return Err(Error::Format(format!(
                    "model file {} has a malformed centroid",
                    path.display()
                )));
            }
        }
        for a in 0..file.k {
            for b in a + 1..file.k {
                if file.centroids[a] == file.centroids[b] {
                    return Err(Error::DuplicateCentroids { a, b });
                }
            }
        }
        Ok((
            ClusterModel {
                k: file.k,
                centroids: file.centroids,
                inertia: file.inertia,
                seed: file.seed,
                tol: file.tol,
                iterations_run: file.iterations_run,
            },
            file.index_map,
        ))
    }
}

/// Write assignments as CSV `date,cluster_id,distance`.
pub fn write_assignments(path: &Path, assignments: &[Assignment]) -> Result<()> {
    let mut writer = csv::Writer::from_path(path).map_err(|e| Error::csv(path, e))?;
    writer
        .write_record(["date", "cluster_id", "distance"])
        .map_err(|e| Error::csv(path, e))?;
    for a in assignments {
        writer
            .write_record([
                a.date.format("%Y-%m-%d").to_string(),
                a.cluster_id.to_string(),
                a.distance.to_string(),
            ])
            .map_err(|e| Error::csv(path, e))?;
    }
    writer.flush().map_err(|e| Error::io(path, e))?;
    Ok(())
}

/// Read assignments written by [`write_assignments`].
pub fn load_assignments(path: &Path) -> Result<Vec<Assignment>> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_path(path)
        .map_err(|e| Error::csv(path, e))?;
    let mut out = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| Error::csv(path, e))?;
        let date = NaiveDate::parse_from_str(record.get(0).unwrap_or(""), "%Y-%m-%d")
            .map_err(|e| Error::Format(format!("bad date in {}: {e}", path.display())))?;
        let cluster_id = record
            .get(1)
            .unwrap_or("")
            .parse::<usize>()
            .map_err(|e| Error::Format(format!("bad cluster id: {e}")))?;
        let distance = record
            .get(2)
            .unwrap_or("")
            .parse::<f64>()
            .map_err(|e| Error::Format(format!("bad distance: {e}")))?;
        out.push(Assignment {
            date,
            cluster_id,
            distance,
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn config(k: usize, seed: u64) -> KMeansConfig {
        KMeansConfig {
            k,
            seed,
            ..KMeansConfig::default()
        }
    }

    fn two_blobs() -> (Vec<Vec<f64>>, Vec<usize>) {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let mut points = Vec::new();
        let mut truth = Vec::new();
        for i in 0..60 {
            let center = if i % 2 == 0 { -3.0 } else { 3.0 };
            points.push(vec![
                center + 0.3 * rng.gen::<f64>(),
                center + 0.3 * rng.gen::<f64>(),
            ]);
            truth.push(i % 2);
        }
        (points, truth)
    }

    #[test]
    fn separated_blobs_recovered_with_perfect_purity() {
        let (points, truth) = two_blobs();
        let fit = fit_rows(&points, &config(2, 1)).unwrap();
        // Cluster ids are arbitrary; check the partition matches the truth.
        let relabel = fit.labels[0];
        for (label, t) in fit.labels.iter().zip(&truth) {
            assert_eq!((*label == relabel) as usize, (*t == truth[0]) as usize);
        }
    }

    #[test]
    fn k_equals_n_gives_zero_inertia() {
        let points = vec![vec![0.0, 0.0], vec![5.0, 0.0], vec![0.0, 5.0]];
        let fit = fit_rows(&points, &config(3, 42)).unwrap();
        assert_eq!(fit.model.inertia, 0.0);
        let mut ids: Vec<usize> = fit.labels.clone();
        ids.sort_unstable();
        ids.dedup();
        assert_eq!(ids.len(), 3);
        assert!(fit.distances.iter().all(|&d| d == 0.0));
    }

    #[test]
    fn same_seed_same_model() {
        let (points, _) = two_blobs();
        let a = fit_rows(&points, &config(2, 9)).unwrap();
        let b = fit_rows(&points, &config(2, 9)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn uniform_init_is_available_and_deterministic() {
        let (points, _) = two_blobs();
        let cfg = KMeansConfig {
            init: InitMethod::Uniform,
            ..config(2, 3)
        };
        let a = fit_rows(&points, &cfg).unwrap();
        let b = fit_rows(&points, &cfg).unwrap();
        assert_eq!(a.model.centroids, b.model.centroids);
    }

    #[test]
    fn tie_goes_to_lowest_cluster_id() {
        let model = ClusterModel {
            k: 2,
            centroids: vec![vec![0.0], vec![2.0]],
            inertia: 0.0,
            seed: 0,
            tol: 1e-6,
            iterations_run: 1,
        };
        let (id, d) = model.nearest(&[1.0]).unwrap();
        assert_eq!(id, 0);
        assert_eq!(d, 1.0);
    }

    #[test]
    fn exact_centroid_has_zero_distance() {
        let model = ClusterModel {
            k: 2,
            centroids: vec![vec![0.5, -0.25], vec![0.9, 0.1]],
            inertia: 0.0,
            seed: 0,
            tol: 1e-6,
            iterations_run: 1,
        };
        let (id, d) = model.nearest(&[0.9, 0.1]).unwrap();
        assert_eq!((id, d), (1, 0.0));
    }

    #[test]
    fn nearest_agrees_with_brute_force() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let centroids: Vec<Vec<f64>> = (0..8)
            .map(|_| (0..5).map(|_| rng.gen::<f64>() * 2.0 - 1.0).collect())
            .collect();
        let model = ClusterModel {
            k: 8,
            centroids: centroids.clone(),
            inertia: 0.0,
            seed: 0,
            tol: 1e-6,
            iterations_run: 1,
        };
        for _ in 0..1000 {
            let p: Vec<f64> = (0..5).map(|_| rng.gen::<f64>() * 2.0 - 1.0).collect();
            assert_eq!(model.nearest(&p).unwrap().0, brute_force_assign(&centroids, &p));
        }
    }

    #[test]
    fn orphaned_cluster_reseeds_to_farthest_point() {
        let points: Vec<Vec<f64>> =
            [0.0, 1.0, 9.0, 10.0, 20.0].iter().map(|&x| vec![x]).collect();
        // The third centroid starts so far out that nothing maps to it.
        let initial = vec![vec![0.5], vec![9.5], vec![100.0]];
        let fit = fit_with_centroids(&points, initial, 0, 300, 1e-6).unwrap();
        assert!(fit.model.centroids.contains(&vec![20.0]));
        let mut ids = fit.labels.clone();
        ids.sort_unstable();
        ids.dedup();
        assert_eq!(ids.len(), 3);
    }

    #[test]
    fn assign_reproduces_training_labels() {
        let (points, _) = two_blobs();
        let fit = fit_rows(&points, &config(2, 5)).unwrap();
        for (p, &label) in points.iter().zip(&fit.labels) {
            assert_eq!(nearest_sq(&fit.model.centroids, p).0, label);
        }
    }

    #[test]
    fn translation_does_not_change_assignment() {
        let model = ClusterModel {
            k: 2,
            centroids: vec![vec![0.1, 0.2], vec![0.8, -0.3]],
            inertia: 0.0,
            seed: 0,
            tol: 1e-6,
            iterations_run: 1,
        };
        let shifted = ClusterModel {
            centroids: model
                .centroids
                .iter()
                .map(|c| c.iter().map(|v| v + 5.0).collect())
                .collect(),
            ..model.clone()
        };
        let p = [0.4, 0.0];
        let ps = [5.4, 5.0];
        assert_eq!(model.nearest(&p).unwrap().0, shifted.nearest(&ps).unwrap().0);
    }

    #[test]
    fn too_few_points_rejected() {
        let points = vec![vec![1.0], vec![2.0]];
        assert!(matches!(
            fit_rows(&points, &config(3, 0)),
            Err(Error::TooFewPoints { k: 3, points: 2 })
        ));
    }

    #[test]
    fn too_few_distinct_points_rejected() {
        let points = vec![vec![1.0, 1.0], vec![1.0, 1.0], vec![2.0, 2.0]];
        assert!(matches!(
            fit_rows(&points, &config(3, 0)),
            Err(Error::TooFewPoints { k: 3, points: 2 })
        ));
    }

    #[test]
    fn dimension_mismatch_rejected() {
        let points = vec![vec![1.0, 2.0], vec![1.0]];
        assert!(matches!(
            fit_rows(&points, &config(2, 0)),
            Err(Error::DimensionMismatch { expected: 2, got: 1 })
        ));
        let model = ClusterModel {
            k: 2,
            centroids: vec![vec![0.0, 0.0], vec![1.0, 1.0]],
            inertia: 0.0,
            seed: 0,
            tol: 1e-6,
            iterations_run: 1,
        };
        assert!(model.nearest(&[1.0]).is_err());
    }

    #[test]
    fn model_json_round_trip() {
        let (points, _) = two_blobs();
        let fit = fit_rows(&points, &config(2, 5)).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.json");
        let names = vec!["a".to_string(), "b".to_string()];
        fit.model.save_json(&path, &names).unwrap();
        let (loaded, index_map) = ClusterModel::load_json(&path).unwrap();
        assert_eq!(loaded, fit.model);
        assert_eq!(index_map, names);
    }

    #[test]
    fn assignments_csv_round_trip() {
        let assignments = vec![
            Assignment {
                date: NaiveDate::from_ymd_opt(2001, 1, 2).unwrap(),
                cluster_id: 3,
                distance: 0.125,
            },
            Assignment {
                date: NaiveDate::from_ymd_opt(2001, 1, 3).unwrap(),
                cluster_id: 0,
                distance: 1.5,
            },
        ];
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("assignments.csv");
        write_assignments(&path, &assignments).unwrap();
        assert_eq!(load_assignments(&path).unwrap(), assignments);
    }
}
