//! Pipeline configuration: JSON file, command-line overrides on top,
//! effective values echoed next to the artifacts.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};

use mstates_core::aggregate::AggregationMethod;
use mstates_core::clustering::InitMethod;
use mstates_core::relevance::BetaScope;
use mstates_core::seed;
use mstates_core::surrogate::Optimizer;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    /// Input price CSV. When absent, `pipeline` falls back to
    /// `<out_dir>/prices.csv`, generating it first if needed.
    pub prices: Option<PathBuf>,
    /// Ticker-to-sector CSV. Same fallback rule as `prices`.
    pub sector_map: Option<PathBuf>,
    pub out_dir: PathBuf,
    /// Global seed; every stage derives its own named stream from it.
    pub seed: u64,
    /// Tickers below this fraction of present values are dropped.
    pub min_coverage: f64,
    /// Local normalization window, in return days.
    pub n: usize,
    /// Correlation window, in trading days.
    pub tau: usize,
    /// Number of market states.
    pub k: usize,
    pub kmeans: KMeansSection,
    pub beta_scope: BetaScope,
    /// Aggregation methods to run, in output order.
    pub methods: Vec<AggregationMethod>,
    pub surrogate: SurrogateSection,
    pub synth: SynthSection,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            prices: None,
            sector_map: None,
            out_dir: PathBuf::from("out"),
            seed: 0,
            min_coverage: 0.8,
            n: 13,
            tau: 40,
            k: 8,
            kmeans: KMeansSection::default(),
            beta_scope: BetaScope::ClusterMembers,
            methods: vec![AggregationMethod::Median, AggregationMethod::ModeMode],
            surrogate: SurrogateSection::default(),
            synth: SynthSection::default(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct KMeansSection {
    /// Explicit clustering seed; derived from the global seed when null.
    pub seed: Option<u64>,
    pub tol: f64,
    pub max_iter: usize,
    pub init: InitMethod,
}

impl Default for KMeansSection {
    fn default() -> Self {
        Self {
            seed: None,
            tol: 1e-6,
            max_iter: 300,
            init: InitMethod::GreedySpread,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SurrogateSection {
    /// Trainings per selection method.
    pub runs: usize,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub optimizer: Optimizer,
    /// Divide every hidden layer width by this factor (1 = reference
    /// architecture). Useful to keep desk-scale runs short.
    pub width_divisor: usize,
    /// Explicit base training seed; derived from the global seed when null.
    pub base_seed: Option<u64>,
}

impl Default for SurrogateSection {
    fn default() -> Self {
        Self {
            runs: 100,
            epochs: 100,
            batch_size: 32,
            learning_rate: 1e-3,
            optimizer: Optimizer::Adam,
            width_divisor: 1,
            base_seed: None,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthSection {
    pub days: usize,
    pub tickers_per_sector: usize,
    pub missing_prob: f64,
    pub idiosyncratic: f64,
    /// Planted-dataset knobs, used by `synth --kind planted`.
    pub planted_instances: usize,
    pub planted_relevant: Vec<usize>,
    pub planted_separation: f64,
    pub planted_noise: f64,
}

impl Default for SynthSection {
    fn default() -> Self {
        Self {
            days: 800,
            tickers_per_sector: 4,
            missing_prob: 0.002,
            idiosyncratic: 0.5,
            planted_instances: 2000,
            planted_relevant: (0..8).collect(),
            planted_separation: 1.0,
            planted_noise: 0.1,
        }
    }
}

impl PipelineConfig {
    /// Defaults, then the file, then explicit flags.
    pub fn resolve(
        config_path: Option<&Path>,
        seed: Option<u64>,
        out: Option<&Path>,
    ) -> Result<Self> {
        let mut config = match config_path {
            Some(path) => {
                let body = std::fs::read_to_string(path)
                    .with_context(|| format!("reading config {}", path.display()))?;
                serde_json::from_str(&body)
                    .with_context(|| format!("parsing config {}", path.display()))?
            }
            None => Self::default(),
        };
        if let Some(seed) = seed {
            config.seed = seed;
        }
        if let Some(out) = out {
            config.out_dir = out.to_path_buf();
        }
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0 < self.min_coverage && self.min_coverage <= 1.0) {
            bail!("min_coverage must lie in (0, 1], got {}", self.min_coverage);
        }
        if self.n < 2 {
            bail!("normalization window n must be at least 2, got {}", self.n);
        }
        if self.tau < 2 {
            bail!("correlation window tau must be at least 2, got {}", self.tau);
        }
        if self.k < 2 {
            bail!("k must be at least 2, got {}", self.k);
        }
        if self.methods.is_empty() {
            bail!("at least one aggregation method is required");
        }
        if self.surrogate.runs == 0 {
            bail!("surrogate runs must be positive");
        }
        if self.surrogate.width_divisor == 0 {
            bail!("surrogate width_divisor must be positive");
        }
        Ok(())
    }

    /// Write the fully resolved config next to the artifacts.
    pub fn write_effective(&self) -> Result<()> {
        std::fs::create_dir_all(&self.out_dir)
            .with_context(|| format!("creating {}", self.out_dir.display()))?;
        let path = self.out_dir.join("config_effective.json");
        let mut body = serde_json::to_string_pretty(self)?;
        body.push('\n');
        std::fs::write(&path, body).with_context(|| format!("writing {}", path.display()))
    }

    pub fn artifact(&self, name: &str) -> PathBuf {
        self.out_dir.join(name)
    }

    pub fn synth_prices_seed(&self) -> u64 {
        seed::derive(self.seed, "synth.prices")
    }

    pub fn synth_planted_seed(&self) -> u64 {
        seed::derive(self.seed, "synth.planted")
    }

    pub fn kmeans_seed(&self) -> u64 {
        self.kmeans
            .seed
            .unwrap_or_else(|| seed::derive(self.seed, "cluster.kmeans"))
    }

    pub fn surrogate_base_seed(&self) -> u64 {
        self.surrogate
            .base_seed
            .unwrap_or_else(|| seed::derive(self.seed, "surrogate.base"))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    #[test]
    fn defaults_match_the_reference_setup() {
        let config = PipelineConfig::default();
        assert_eq!(config.n, 13);
        assert_eq!(config.tau, 40);
        assert_eq!(config.k, 8);
        assert_eq!(config.kmeans.max_iter, 300);
        assert_eq!(config.surrogate.runs, 100);
        assert_eq!(config.surrogate.epochs, 100);
        assert_eq!(config.methods.len(), 2);
        config.validate().unwrap();
    }

    #[test]
    fn file_then_flags_precedence() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("config.json");
        let mut f = std::fs::File::create(&path).unwrap();
        write!(f, "{{\"seed\": 9, \"k\": 4, \"out_dir\": \"from_file\"}}").unwrap();

        let config = PipelineConfig::resolve(Some(&path), None, None).unwrap();
        assert_eq!(config.seed, 9);
        assert_eq!(config.k, 4);
        assert_eq!(config.out_dir, PathBuf::from("from_file"));

        let flagged =
            PipelineConfig::resolve(Some(&path), Some(77), Some(Path::new("cli_out"))).unwrap();
        assert_eq!(flagged.seed, 77);
        assert_eq!(flagged.k, 4);
        assert_eq!(flagged.out_dir, PathBuf::from("cli_out"));
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("config.json");
        std::fs::write(&path, "{\"taus\": 40}").unwrap();
        assert!(PipelineConfig::resolve(Some(&path), None, None).is_err());
    }

    #[test]
    fn out_of_range_values_are_rejected() {
        let config = PipelineConfig {
            min_coverage: 0.0,
            ..PipelineConfig::default()
        };
        assert!(config.validate().is_err());
        let config = PipelineConfig {
            k: 1,
            ..PipelineConfig::default()
        };
        assert!(config.validate().is_err());
        let config = PipelineConfig {
            methods: Vec::new(),
            ..PipelineConfig::default()
        };
        assert!(config.validate().is_err());
    }

    #[test]
    fn derived_stage_seeds_differ_and_respect_overrides() {
        let config = PipelineConfig::default();
        let seeds = [
            config.synth_prices_seed(),
            config.synth_planted_seed(),
            config.kmeans_seed(),
            config.surrogate_base_seed(),
        ];
        for i in 0..seeds.len() {
            for j in i + 1..seeds.len() {
                assert_ne!(seeds[i], seeds[j]);
            }
        }
        let mut pinned = PipelineConfig::default();
        pinned.kmeans.seed = Some(5);
        pinned.surrogate.base_seed = Some(6);
        assert_eq!(pinned.kmeans_seed(), 5);
        assert_eq!(pinned.surrogate_base_seed(), 6);
    }
}
