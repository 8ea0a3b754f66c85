//! Serializable experiment descriptions. One config file fully determines a
//! run: identical configs produce identical artifacts regardless of --jobs.

use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use mcident_core::{RngSeed, StochasticMatrix};
use mcident_testers::{
    biased_gsr_model, build_grid_chain, gsr_model, sparse_hard_instance, symmetric_hard_instance,
    ConstantsProfile, HardFamily, ShuffleModel, SparseChain,
};
use serde::{Deserialize, Serialize};

fn one_trial() -> usize {
    1
}

fn default_threshold() -> f64 {
    0.5
}

fn default_sample_constant() -> f64 {
    2.0
}

fn default_quantile() -> f64 {
    0.9
}

/// A complete experiment: the command, its inputs, the master seed, and the
/// trial budget.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Id used in result rows and the manifest; defaults to the command name.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub experiment: Option<String>,
    pub command: CommandSpec,
    /// Master seed. Resolution order: --seed flag, this field, MCIDENT_SEED, 0.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default = "one_trial")]
    pub trials: usize,
    /// Worker threads. Results do not depend on it; defaults to all cores.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub jobs: Option<usize>,
    /// Sample-size multipliers for the symmetric tester and its calibrator.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub constants: Option<ConstantsProfile>,
    /// Artifact path. Extensionless paths get .csv (or .json for calibrate);
    /// the manifest lands next to the artifact.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub out: Option<PathBuf>,
}

impl ExperimentConfig {
    pub fn from_path(path: &std::path::Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading config {}", path.display()))?;
        serde_json::from_str(&text).with_context(|| format!("parsing config {}", path.display()))
    }

    /// Name used in rows and the manifest.
    pub fn experiment_name(&self) -> String {
        self.experiment
            .clone()
            .unwrap_or_else(|| self.command.name().to_string())
    }
}

/// What to run, mirroring the CLI subcommands.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "cmd", rename_all = "kebab-case")]
pub enum CommandSpec {
    /// Spectral and word-distribution distances between two chains.
    Distance {
        p: ChainSource,
        q: ChainSource,
        /// Word length for the Hellinger report; defaults to the minimal
        /// distinguishing length when one exists, else 1.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        length: Option<u64>,
        /// Similarity cutoff defining the minimal distinguishing length.
        #[serde(default = "default_threshold")]
        threshold: f64,
        /// Require the length to work from every start state instead of the
        /// uniform common start.
        #[serde(default)]
        worst_start: bool,
    },
    /// Sample one trajectory per trial, space-separated state indices.
    Simulate {
        chain: ChainSource,
        steps: usize,
        /// Start state; omitted means the uniform start.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        start: Option<usize>,
    },
    /// Single-trajectory identity test against a symmetric reference chain.
    TestSymmetric {
        chain: ChainSource,
        epsilon: f64,
        /// Trajectory steps; omitted means the recommended length.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        m: Option<usize>,
        /// Chain trajectories are drawn from; omitted means the reference.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        alt: Option<ChainSource>,
        /// Fixed trajectory file (space-separated indices) instead of
        /// sampling; the visit plan still varies per trial.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        trajectory: Option<PathBuf>,
        /// Calibrated threshold table; omitted means the analytic fallback.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        thresholds: Option<PathBuf>,
    },
    /// Edge-count identity test for layered sparse chains.
    TestSparse {
        chain: SparseSource,
        epsilon: f64,
        /// Expected word count the statistic is Poissonized at.
        m: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        alt: Option<SparseSource>,
        /// Fixed word file (one word per line) instead of sampling.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        words: Option<PathBuf>,
        /// Calibrated cutoff; omitted means the analytic threshold.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        calibration: Option<PathBuf>,
    },
    /// Riffle-shuffle identity test from records or a sampled model.
    TestShuffle {
        cards: usize,
        epsilon: f64,
        /// Expected word count; omitted means sample_constant·n^{3/2}/ε².
        #[serde(default, skip_serializing_if = "Option::is_none")]
        m: Option<f64>,
        #[serde(default = "default_sample_constant")]
        sample_constant: f64,
        /// Null model; omitted means the unbiased riffle model.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        model: Option<ModelSource>,
        /// Model shuffles are drawn from; omitted means the null model.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        alt: Option<ModelSource>,
        /// Shuffle records, one "before;after" line per shuffle.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        records: Option<PathBuf>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        calibration: Option<PathBuf>,
    },
    /// Sample riffle shuffles as before;after records.
    ShuffleSimulate {
        cards: usize,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        model: Option<ModelSource>,
    },
    /// Error rates of a tester on its hard instance family over an m grid.
    Lowerbound {
        family: Family,
        n: usize,
        epsilon: f64,
        m_grid: Vec<usize>,
    },
    /// Calibrate a rejection threshold from null simulations.
    Calibrate {
        #[serde(flatten)]
        target: CalibrateTarget,
        #[serde(default = "default_quantile")]
        quantile: f64,
    },
}

impl CommandSpec {
    pub fn name(&self) -> &'static str {
        match self {
            CommandSpec::Distance { .. } => "distance",
            CommandSpec::Simulate { .. } => "simulate",
            CommandSpec::TestSymmetric { .. } => "test-symmetric",
            CommandSpec::TestSparse { .. } => "test-sparse",
            CommandSpec::TestShuffle { .. } => "test-shuffle",
            CommandSpec::ShuffleSimulate { .. } => "shuffle-simulate",
            CommandSpec::Lowerbound { .. } => "lowerbound",
            CommandSpec::Calibrate { .. } => "calibrate",
        }
    }
}

/// Which statistic a calibrate run measures null draws of.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum CalibrateTarget {
    /// Pooled identity statistic of the symmetric tester.
    Iid {
        chain: ChainSource,
        epsilon: f64,
        /// Trajectory steps; omitted means the recommended length.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        m: Option<usize>,
    },
    /// Edge chi-squared statistic of the sparse tester.
    Chi2Edge {
        chain: SparseSource,
        epsilon: f64,
        m: f64,
    },
}

/// Hard instance family for lower-bound experiments.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Family {
    Symmetric,
    Sparse,
}

impl From<Family> for HardFamily {
    fn from(f: Family) -> HardFamily {
        match f {
            Family::Symmetric => HardFamily::Symmetric,
            Family::Sparse => HardFamily::Sparse,
        }
    }
}

/// Side of a hard instance pair.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PairRole {
    P,
    Q,
}

/// Where a dense chain comes from: a JSON file or a built-in generator, so
/// configs can describe whole experiments without shipping data files.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ChainSource {
    Path(PathBuf),
    Generated(GeneratedChain),
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "kebab-case")]
pub enum GeneratedChain {
    /// Uniform walk on the complete graph with self-loops.
    Complete { n: usize },
    /// One side of the symmetric hard pair.
    HardSymmetric {
        n: usize,
        epsilon: f64,
        role: PairRole,
        /// Fixed generator seed; omitted means one derived per trial.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        seed: Option<u64>,
    },
}

impl ChainSource {
    /// `fallback_seed` feeds generators whose config omits a seed.
    pub fn resolve(&self, fallback_seed: u64) -> Result<StochasticMatrix> {
        match self {
            ChainSource::Path(p) => StochasticMatrix::from_path(p)
                .with_context(|| format!("loading chain {}", p.display())),
            ChainSource::Generated(GeneratedChain::Complete { n }) => {
                Ok(StochasticMatrix::complete_walk(*n)?)
            }
            ChainSource::Generated(GeneratedChain::HardSymmetric { n, epsilon, role, seed }) => {
                let inst =
                    symmetric_hard_instance(*n, *epsilon, RngSeed(seed.unwrap_or(fallback_seed)))?;
                Ok(match role {
                    PairRole::P => inst.p,
                    PairRole::Q => inst.q,
                })
            }
        }
    }

}

/// Where a layered sparse chain comes from.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
pub enum SparseSource {
    Path(PathBuf),
    Generated(GeneratedSparse),
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "kebab-case")]
pub enum GeneratedSparse {
    /// One side of the sparse hard pair.
    HardSparse {
        n: usize,
        epsilon: f64,
        role: PairRole,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        seed: Option<u64>,
    },
    /// Grid walk of the unbiased riffle model.
    GridGsr { cards: usize },
    /// Grid walk of a biased riffle model.
    GridBiased {
        cards: usize,
        cut_bias: f64,
        drop_bias: f64,
    },
}

impl SparseSource {
    pub fn resolve(&self, fallback_seed: u64) -> Result<SparseChain> {
        match self {
            SparseSource::Path(p) => SparseChain::from_path(p)
                .with_context(|| format!("loading sparse chain {}", p.display())),
            SparseSource::Generated(GeneratedSparse::HardSparse { n, epsilon, role, seed }) => {
                let inst =
                    sparse_hard_instance(*n, *epsilon, RngSeed(seed.unwrap_or(fallback_seed)))?;
                Ok(match role {
                    PairRole::P => inst.p,
                    PairRole::Q => inst.q,
                })
            }
            SparseSource::Generated(GeneratedSparse::GridGsr { cards }) => {
                Ok(build_grid_chain(&gsr_model(*cards)?)?)
            }
            SparseSource::Generated(GeneratedSparse::GridBiased { cards, cut_bias, drop_bias }) => {
                Ok(build_grid_chain(&biased_gsr_model(*cards, *cut_bias, *drop_bias)?)?)
            }
        }
    }

}

/// Where a riffle-shuffle model comes from. Generated variants take the card
/// count from the command so it is stated once.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ModelSource {
    Path(PathBuf),
    Generated(GeneratedModel),
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "model", rename_all = "kebab-case")]
pub enum GeneratedModel {
    Gsr,
    Biased { cut_bias: f64, drop_bias: f64 },
}

impl ModelSource {
    pub fn resolve(&self, cards: usize) -> Result<ShuffleModel> {
        let model = match self {
            ModelSource::Path(p) => {
                let text = std::fs::read_to_string(p)
                    .with_context(|| format!("reading shuffle model {}", p.display()))?;
                serde_json::from_str::<ShuffleModel>(&text)
                    .with_context(|| format!("parsing shuffle model {}", p.display()))?
            }
            ModelSource::Generated(GeneratedModel::Gsr) => gsr_model(cards)?,
            ModelSource::Generated(GeneratedModel::Biased { cut_bias, drop_bias }) => {
                biased_gsr_model(cards, *cut_bias, *drop_bias)?
            }
        };
        if model.n_cards() != cards {
            bail!(
                "shuffle model is for {} cards but the command says {}",
                model.n_cards(),
                cards
            );
        }
        Ok(model)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn config_round_trips_through_json() {
        let cfg = ExperimentConfig {
            experiment: Some("sym-null".into()),
            command: CommandSpec::TestSymmetric {
                chain: ChainSource::Generated(GeneratedChain::HardSymmetric {
                    n: 20,
                    epsilon: 0.124,
                    role: PairRole::Q,
                    seed: Some(5),
                }),
                epsilon: 0.25,
                m: None,
                alt: None,
                trajectory: None,
                thresholds: Some(PathBuf::from("profile.json")),
            },
            seed: Some(600),
            trials: 200,
            jobs: None,
            constants: Some(ConstantsProfile::default()),
            out: Some(PathBuf::from("out/sym-null")),
        };
        let text = serde_json::to_string_pretty(&cfg).unwrap();
        let back: ExperimentConfig = serde_json::from_str(&text).unwrap();
        assert_eq!(serde_json::to_string_pretty(&back).unwrap(), text);
        assert_eq!(back.experiment_name(), "sym-null");
    }

    #[test]
    fn command_tags_use_kebab_case() {
        let text = r#"{
            "command": {"cmd": "lowerbound", "family": "symmetric",
                        "n": 20, "epsilon": 0.1, "m_grid": [20]},
            "trials": 200
        }"#;
        let cfg: ExperimentConfig = serde_json::from_str(text).unwrap();
        assert_eq!(cfg.command.name(), "lowerbound");
        assert_eq!(cfg.trials, 200);
        assert_eq!(cfg.seed, None);
    }

    #[test]
    fn calibrate_flattens_kind_beside_cmd() {
        let text = r#"{
            "command": {"cmd": "calibrate", "kind": "chi2-edge",
                        "chain": {"family": "grid-gsr", "cards": 6},
                        "epsilon": 0.3, "m": 200.0},
            "trials": 500
        }"#;
        let cfg: ExperimentConfig = serde_json::from_str(text).unwrap();
        match &cfg.command {
            CommandSpec::Calibrate { target: CalibrateTarget::Chi2Edge { m, .. }, quantile } => {
                assert_eq!(*m, 200.0);
                assert_eq!(*quantile, 0.9);
            }
            other => panic!("parsed {:?}", other),
        }
        let text2 = serde_json::to_string(&cfg).unwrap();
        let back: ExperimentConfig = serde_json::from_str(&text2).unwrap();
        assert_eq!(back.command.name(), "calibrate");
    }

    #[test]
    fn chain_source_accepts_plain_path_or_generator() {
        let path: ChainSource = serde_json::from_str(r#""chains/q.json""#).unwrap();
        assert!(matches!(path, ChainSource::Path(_)));
        let generated: ChainSource =
            serde_json::from_str(r#"{"family": "complete", "n": 5}"#).unwrap();
        let q = generated.resolve(0).unwrap();
        assert_eq!(q.n(), 5);
    }

    #[test]
    fn hard_source_without_seed_varies_with_fallback() {
        let src: ChainSource = serde_json::from_str(
            r#"{"family": "hard-symmetric", "n": 6, "epsilon": 0.1, "role": "p"}"#,
        )
        .unwrap();
        let a = src.resolve(1).unwrap();
        let b = src.resolve(2).unwrap();
        assert_eq!(a.n(), 12);
        let differ = (0..a.n())
            .any(|i| (0..a.n()).any(|j| a.get(i, j) != b.get(i, j)));
        assert!(differ, "different fallback seeds should tilt different pairs");
    }

    #[test]
    fn grid_sources_build_round_chains() {
        let src: SparseSource =
            serde_json::from_str(r#"{"family": "grid-gsr", "cards": 5}"#).unwrap();
        let chain = src.resolve(0).unwrap();
        // Entry step to the cut state plus one drop per card.
        assert_eq!(chain.t_layers(), 6);
        let biased: SparseSource = serde_json::from_str(
            r#"{"family": "grid-biased", "cards": 5, "cut_bias": 0.5, "drop_bias": 2.0}"#,
        )
        .unwrap();
        biased.resolve(0).unwrap();
    }

    #[test]
    fn model_source_checks_card_count() {
        let src: ModelSource = serde_json::from_str(r#"{"model": "gsr"}"#).unwrap();
        assert_eq!(src.resolve(6).unwrap().n_cards(), 6);
        let tmp = std::env::temp_dir().join("mcident-cli-model-cards.json");
        let model = gsr_model(4).unwrap();
        std::fs::write(&tmp, serde_json::to_string(&model).unwrap()).unwrap();
        let from_file = ModelSource::Path(tmp.clone());
        assert!(from_file.resolve(6).is_err());
        assert_eq!(from_file.resolve(4).unwrap().n_cards(), 4);
        std::fs::remove_file(&tmp).ok();
    }
}
