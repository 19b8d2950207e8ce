//! Benchmark manifests and the parallel episode runner.

use std::collections::BTreeSet;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::executor::{run_generated, EpisodeConfig, EpisodeResult, SensingMode};
use crate::mcts::PlannerMode;
use crate::scene::SizeClass;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct EpisodeSpec {
    pub seed: u64,
    pub size_class: SizeClass,
    pub n_obstacles: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModePair {
    pub sensing: SensingMode,
    pub planner: PlannerMode,
}

impl std::fmt::Display for ModePair {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}/{}", self.sensing, self.planner)
    }
}

impl std::str::FromStr for ModePair {
    type Err = Error;

    /// `MAS/OR`, or a bare sensing mode with the OR planner.
    fn from_str(s: &str) -> Result<Self> {
        let (a, b) = s.split_once('/').unwrap_or((s, "OR"));
        Ok(Self { sensing: a.trim().parse()?, planner: b.trim().parse()? })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkManifest {
    pub episodes: Vec<EpisodeSpec>,
    pub configs: Vec<ModePair>,
}

impl BenchmarkManifest {
    /// Seeds `0..n`, alternating Small and Large shelves, five to eight
    /// obstacles.
    pub fn scenes(n: u64) -> Vec<EpisodeSpec> {
        (0..n)
            .map(|seed| EpisodeSpec {
                seed,
                size_class: if seed % 2 == 0 { SizeClass::Small } else { SizeClass::Large },
                n_obstacles: 5 + (seed % 4) as usize,
            })
            .collect()
    }

    /// The sensing rows with the OR planner, plus MAS with the SS planner.
    pub fn default_configs() -> Vec<ModePair> {
        let mut out: Vec<ModePair> = [SensingMode::Mas, SensingMode::IasFas, SensingMode::IasSas, SensingMode::Dias, SensingMode::Ias]
            .into_iter()
            .map(|sensing| ModePair { sensing, planner: PlannerMode::Or })
            .collect();
        out.push(ModePair { sensing: SensingMode::Mas, planner: PlannerMode::Ss });
        out
    }

    pub fn with_seeds(n: u64) -> Self {
        Self { episodes: Self::scenes(n), configs: Self::default_configs() }
    }

    pub fn validate(&self) -> Result<()> {
        let mut seen = BTreeSet::new();
        if let Some(dup) = self.episodes.iter().find(|e| !seen.insert(e.seed)) {
            return Err(Error::InvalidSpec(format!("duplicate seed {}", dup.seed)));
        }
        if self.configs.is_empty() {
            return Err(Error::InvalidSpec("manifest has no configurations".into()));
        }
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let m: Self = toml::from_str(&std::fs::read_to_string(path)?).map_err(|e| Error::Format(e.to_string()))?;
        m.validate()?;
        Ok(m)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Format(e.to_string()))
    }

    /// Episode configurations in manifest order: each scene under every
    /// mode pair.
    pub fn expand(&self, base: &EpisodeConfig) -> Vec<EpisodeConfig> {
        self.episodes
            .iter()
            .flat_map(|e| {
                self.configs.iter().map(move |m| EpisodeConfig {
                    seed: e.seed,
                    size_class: e.size_class,
                    n_obstacles: e.n_obstacles,
                    sensing_mode: m.sensing,
                    planner_mode: m.planner,
                    ..base.clone()
                })
            })
            .collect()
    }
}

impl Default for BenchmarkManifest {
    fn default() -> Self {
        Self::with_seeds(100)
    }
}

/// Runs every configuration on a pool of `workers` threads (0 = rayon's
/// default). Results come back in input order.
pub fn run_all(configs: &[EpisodeConfig], workers: usize) -> Result<Vec<EpisodeResult>> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| Error::InvalidSpec(e.to_string()))?;
    pool.install(|| configs.par_iter().map(|c| run_generated(c).map(|(_, r)| r)).collect())
}

/// File stem for an episode's trace, e.g. `s007_MAS_OR`.
pub fn trace_name(r: &EpisodeResult) -> String {
    let mode: String = r.sensing_mode.to_string().chars().map(|c| if c == '+' { '-' } else { c }).collect();
    format!("s{:03}_{}_{}", r.seed, mode, r.planner_mode)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_manifest_shape() {
        let m = BenchmarkManifest::default();
        m.validate().unwrap();
        assert_eq!(m.episodes.len(), 100);
        assert_eq!(m.configs.len(), 6);
        assert!(m.episodes.iter().all(|e| (5..=8).contains(&e.n_obstacles)));
        let back: BenchmarkManifest = toml::from_str(&m.to_toml().unwrap()).unwrap();
        assert_eq!(back, m);
    }

    #[test]
    fn duplicate_seeds_rejected() {
        let mut m = BenchmarkManifest::with_seeds(3);
        m.episodes.push(m.episodes[0]);
        assert!(m.validate().is_err());
    }

    #[test]
    fn mode_pair_parsing() {
        let p: ModePair = "ias+sas/ss".parse().unwrap();
        assert_eq!(p, ModePair { sensing: SensingMode::IasSas, planner: PlannerMode::Ss });
        assert_eq!("DIAS".parse::<ModePair>().unwrap().planner, PlannerMode::Or);
        assert_eq!(p.to_string(), "IAS+SAS/SS");
    }
}
