//! Seeded synthetic data: planted cluster structure in feature space and a
//! sector-correlated price generator, so every pipeline stage can be
//! verified at desk scale without proprietary market data.

use chrono::NaiveDate;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

pub use crate::clustering::brute_force_assign;
use crate::error::{Error, Result};
use crate::ingest::PriceTable;
use crate::sectors::{SectorMap, ALL_SECTORS, FEATURE_COUNT, SECTOR_COUNT};

/// Feature vectors with a known cluster structure: clusters differ only on
/// the planted columns, everything else is one shared noise distribution.
#[derive(Debug, Clone, PartialEq)]
pub struct PlantedDataset {
    pub features: Vec<Vec<f64>>,
    pub labels: Vec<usize>,
    pub relevant_features: Vec<usize>,
    pub seed: u64,
}

/// Plant `k` Gaussian blobs in the subspace spanned by `relevant` columns.
///
/// Each blob center sits at `+-separation/2` on every relevant column; the
/// sign patterns are rotations of one aperiodic base pattern, so with at
/// least as many relevant columns as clusters all centers are pairwise
/// distinct and every relevant column separates some pair of clusters.
/// (Fewer relevant columns than clusters can make centers coincide; that is
/// permitted, the blobs then simply overlap.) Irrelevant columns carry the
/// same zero-centered noise for every cluster. Values are clipped to
/// `[-1, 1]` to stay inside correlation range.
pub fn generate_planted(
    k: usize,
    n: usize,
    relevant: &[usize],
    separation: f64,
    noise: f64,
    seed: u64,
) -> Result<PlantedDataset> {
    if k < 2 {
        return Err(Error::InvalidParameter(format!(
            "need at least 2 planted clusters, got {k}"
        )));
    }
    if n < k {
        return Err(Error::TooFewPoints { k, points: n });
    }
    if relevant.is_empty() {
        return Err(Error::InvalidParameter(
            "at least one relevant column is required".into(),
        ));
    }
    let mut dedup = relevant.to_vec();
    dedup.sort_unstable();
    dedup.dedup();
    if dedup.len() != relevant.len() {
        return Err(Error::InvalidParameter("relevant columns repeat".into()));
    }
    if let Some(&c) = relevant.iter().find(|&&c| c >= FEATURE_COUNT) {
        return Err(Error::InvalidParameter(format!(
            "relevant column {c} exceeds feature width {FEATURE_COUNT}"
        )));
    }
    if !(separation > 0.0 && separation.is_finite()) {
        return Err(Error::InvalidParameter(format!(
            "separation must be positive, got {separation}"
        )));
    }
    if !(noise >= 0.0 && noise.is_finite()) {
        return Err(Error::InvalidParameter(format!(
            "noise must be non-negative, got {noise}"
        )));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    // Aperiodic +/- base pattern; column idx uses it rotated by idx.
    let half = k.div_ceil(2);
    let base: Vec<f64> = (0..k).map(|j| if j < half { 1.0 } else { -1.0 }).collect();
    let flips: Vec<f64> = relevant
        .iter()
        .map(|_| if rng.gen::<bool>() { 1.0 } else { -1.0 })
        .collect();
    let mut row_of_cluster: Vec<usize> = (0..k).collect();
    for i in (1..k).rev() {
        let j = rng.gen_range(0..=i);
        row_of_cluster.swap(i, j);
    }

    let mut centers = vec![vec![0.0f64; FEATURE_COUNT]; k];
    for (cluster, center) in centers.iter_mut().enumerate() {
        for (idx, &col) in relevant.iter().enumerate() {
            let sign = base[(row_of_cluster[cluster] + idx) % k] * flips[idx];
            center[col] = sign * separation / 2.0;
        }
    }

    let mut labels: Vec<usize> = (0..n).map(|i| i % k).collect();
    for i in (1..n).rev() {
        let j = rng.gen_range(0..=i);
        labels.swap(i, j);
    }

    let normal = Normal::new(0.0, 1.0).expect("unit normal");
    let features: Vec<Vec<f64>> = labels
        .iter()
        .map(|&label| {
            (0..FEATURE_COUNT)
                .map(|col| {
                    let v = centers[label][col] + noise * normal.sample(&mut rng);
                    v.clamp(-1.0, 1.0)
                })
                .collect()
        })
        .collect();

    Ok(PlantedDataset {
        features,
        labels,
        relevant_features: relevant.to_vec(),
        seed,
    })
}

/// Geometric-random-walk price universe with sector-level common shocks.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticPriceConfig {
    pub tickers_per_sector: usize,
    pub days: usize,
    /// Daily log drift per sector.
    pub drift: Vec<f64>,
    /// Daily log volatility per sector, all positive.
    pub volatility: Vec<f64>,
    /// Loading of each sector's shock on the one global shock, in [0, 1];
    /// sectors s and s' end up with shock correlation roughly
    /// `shock_weights[s] * shock_weights[s']`.
    pub shock_weights: Vec<f64>,
    /// Per-ticker noise share in [0, 1): 0 means tickers move exactly with
    /// their sector.
    pub idiosyncratic: f64,
    /// Probability that a cell is masked out, at most 0.05.
    pub missing_prob: f64,
    pub seed: u64,
}

impl Default for SyntheticPriceConfig {
    fn default() -> Self {
        Self {
            tickers_per_sector: 4,
            days: 800,
            drift: vec![2e-4; SECTOR_COUNT],
            volatility: vec![0.01; SECTOR_COUNT],
            shock_weights: (0..SECTOR_COUNT)
                .map(|s| 0.25 + 0.05 * s as f64)
                .collect(),
            idiosyncratic: 0.5,
            missing_prob: 0.002,
            seed: 0,
        }
    }
}

impl SyntheticPriceConfig {
    fn validate(&self) -> Result<()> {
        if self.tickers_per_sector == 0 {
            return Err(Error::InvalidParameter(
                "tickers_per_sector must be positive".into(),
            ));
        }
        if self.days < 2 {
            return Err(Error::InvalidParameter(format!(
                "need at least 2 days, got {}",
                self.days
            )));
        }
        for (name, v) in [
            ("drift", &self.drift),
            ("volatility", &self.volatility),
            ("shock_weights", &self.shock_weights),
        ] {
            if v.len() != SECTOR_COUNT {
                return Err(Error::InvalidParameter(format!(
                    "{name} must list {SECTOR_COUNT} sectors, got {}",
                    v.len()
                )));
            }
            if v.iter().any(|x| !x.is_finite()) {
                return Err(Error::InvalidParameter(format!("{name} has a non-finite entry")));
            }
        }
        if self.volatility.iter().any(|&v| v <= 0.0) {
            return Err(Error::InvalidParameter("volatility must be positive".into()));
        }
        if self.shock_weights.iter().any(|&w| !(0.0..=1.0).contains(&w)) {
            return Err(Error::InvalidParameter(
                "shock weights must lie in [0, 1]".into(),
            ));
        }
        if !(0.0..1.0).contains(&self.idiosyncratic) {
            return Err(Error::InvalidParameter(
                "idiosyncratic share must lie in [0, 1)".into(),
            ));
        }
        if !(0.0..=0.05).contains(&self.missing_prob) {
            return Err(Error::InvalidParameter(
                "missing probability must lie in [0, 0.05]".into(),
            ));
        }
        Ok(())
    }

    /// Ticker names, sector-major: `E00, E01, ..., HC03`.
    pub fn tickers(&self) -> Vec<String> {
        let mut out = Vec::with_capacity(SECTOR_COUNT * self.tickers_per_sector);
        for sector in ALL_SECTORS {
            for i in 0..self.tickers_per_sector {
                out.push(format!("{}{:02}", sector.abbrev(), i));
            }
        }
        out
    }

    /// The matching ticker-to-sector assignment.
    pub fn sector_map(&self) -> SectorMap {
        let mut map = SectorMap::new();
        for (c, ticker) in self.tickers().into_iter().enumerate() {
            map.insert(ticker, ALL_SECTORS[c / self.tickers_per_sector]);
        }
        map
    }
}

/// Simulate the configured price universe.
///
/// Each day draws one global shock, one residual shock per sector and one
/// residual per ticker; the ticker's log return mixes them as
/// `drift + vol * (sqrt(1-i^2) * (g*w + sqrt(1-w^2)*e_s) + i * e_t)`,
/// so all shocks have unit variance and the cross-sector correlation is
/// controlled by the shock weights alone.
pub fn generate_prices(config: &SyntheticPriceConfig) -> Result<PriceTable> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let normal = Normal::new(0.0, 1.0).expect("unit normal");
    let tickers = config.tickers();
    let n_tickers = tickers.len();

    let mut levels: Vec<f64> = (0..n_tickers)
        .map(|_| 50.0 + 100.0 * rng.gen::<f64>())
        .collect();
    let iota = config.idiosyncratic;
    let common_share = (1.0 - iota * iota).sqrt();

    let mut prices: Vec<Option<f64>> = Vec::with_capacity(config.days * n_tickers);
    prices.extend(levels.iter().map(|&p| Some(p)));
    for _ in 1..config.days {
        let global = normal.sample(&mut rng);
        let sector_shocks: Vec<f64> = config
            .shock_weights
            .iter()
            .map(|&w| w * global + (1.0 - w * w).sqrt() * normal.sample(&mut rng))
            .collect();
        for (t, level) in levels.iter_mut().enumerate() {
            let s = t / config.tickers_per_sector;
            let shock = common_share * sector_shocks[s] + iota * normal.sample(&mut rng);
            *level *= (config.drift[s] + config.volatility[s] * shock).exp();
            prices.push(Some(*level));
        }
    }

    if config.missing_prob > 0.0 {
        for cell in prices.iter_mut() {
            if rng.gen::<f64>() < config.missing_prob {
                *cell = None;
            }
        }
    }

    let start = NaiveDate::from_ymd_opt(2001, 1, 1).expect("valid calendar date");
    let dates: Vec<NaiveDate> = (0..config.days)
        .map(|i| start + chrono::Days::new(i as u64))
        .collect();
    Ok(PriceTable::new(dates, tickers, prices))
}
