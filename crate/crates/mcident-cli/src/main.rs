//! mcident: identity testing for finite Markov chains from sampled data.
//!
//! Runs either a subcommand with flags or a JSON experiment config
//! (--config); both paths build the same ExperimentConfig, so a flag run and
//! its config file produce identical artifacts.

mod config;
mod rows;
mod run;

use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use mcident_testers::ConstantsProfile;

use config::{
    CalibrateTarget, ChainSource, CommandSpec, ExperimentConfig, Family, ModelSource, SparseSource,
};

#[derive(Parser)]
#[command(
    name = "mcident",
    version,
    about = "Identity testing for Markov chains from a single trajectory"
)]
struct Cli {
    /// Experiment config file (JSON); alternative to a subcommand.
    #[arg(long, value_name = "FILE")]
    config: Option<PathBuf>,
    /// Master seed. Default: MCIDENT_SEED, then 0.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Independent trials (default 1).
    #[arg(long, global = true)]
    trials: Option<usize>,
    /// Worker threads; results do not depend on it. Default: all cores.
    #[arg(long, global = true)]
    jobs: Option<usize>,
    /// Constants profile (JSON) for the symmetric tester's budget formulas.
    #[arg(long, global = true, value_name = "FILE")]
    constants: Option<PathBuf>,
    /// Artifact path; a .manifest.json with a content hash lands next to it.
    #[arg(long, global = true, value_name = "PATH")]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Option<Command>,
}

#[derive(Subcommand)]
enum Command {
    /// Spectral and word-distribution distances between two chain files
    Distance {
        #[arg(long, value_name = "FILE")]
        p: PathBuf,
        #[arg(long, value_name = "FILE")]
        q: PathBuf,
        /// Word length for the Hellinger report (default: the minimal
        /// distinguishing length when finite, else 1)
        #[arg(long)]
        length: Option<u64>,
        /// Similarity cutoff defining the minimal distinguishing length
        #[arg(long, default_value_t = 0.5)]
        threshold: f64,
        /// Require the length to work from every start state
        #[arg(long)]
        worst_start: bool,
    },
    /// Sample trajectories, one line of state indices per trial
    Simulate {
        #[arg(long, value_name = "FILE")]
        chain: PathBuf,
        #[arg(long)]
        steps: usize,
        /// Start state (default: uniform start)
        #[arg(long)]
        start: Option<usize>,
    },
    /// Single-trajectory identity test against a symmetric chain
    TestSymmetric {
        #[arg(long, value_name = "FILE")]
        chain: PathBuf,
        #[arg(long)]
        epsilon: f64,
        /// Trajectory steps (default: recommended length)
        #[arg(long)]
        m: Option<usize>,
        /// Sample trajectories from this chain instead of the reference
        #[arg(long, value_name = "FILE")]
        alt: Option<PathBuf>,
        /// Test this fixed trajectory file instead of sampling
        #[arg(long, value_name = "FILE")]
        trajectory: Option<PathBuf>,
        /// Calibrated threshold table (JSON {s, epsilon, lambda, tau} entries)
        #[arg(long, value_name = "FILE")]
        thresholds: Option<PathBuf>,
    },
    /// Edge-count identity test for layered sparse chains
    TestSparse {
        #[arg(long, value_name = "FILE")]
        chain: PathBuf,
        #[arg(long)]
        epsilon: f64,
        /// Expected word count the statistic is Poissonized at
        #[arg(long)]
        m: f64,
        /// Sample words from this chain instead of the reference
        #[arg(long, value_name = "FILE")]
        alt: Option<PathBuf>,
        /// Test these fixed words (one per line) instead of sampling
        #[arg(long, value_name = "FILE")]
        words: Option<PathBuf>,
        /// Calibrated cutoff profile (JSON)
        #[arg(long, value_name = "FILE")]
        calibration: Option<PathBuf>,
    },
    /// Riffle-shuffle identity test from records or a sampled model
    TestShuffle {
        #[arg(long)]
        cards: usize,
        #[arg(long)]
        epsilon: f64,
        /// Expected shuffle count (default: sample-constant * cards^1.5 / epsilon^2)
        #[arg(long)]
        m: Option<f64>,
        #[arg(long, default_value_t = 2.0)]
        sample_constant: f64,
        /// Null shuffle model file (default: the unbiased riffle model)
        #[arg(long, value_name = "FILE")]
        model: Option<PathBuf>,
        /// Sample shuffles from this model instead of the null model
        #[arg(long, value_name = "FILE")]
        alt: Option<PathBuf>,
        /// Shuffle records, one "before;after" line per shuffle
        #[arg(long, value_name = "FILE")]
        records: Option<PathBuf>,
        /// Calibrated cutoff profile (JSON)
        #[arg(long, value_name = "FILE")]
        calibration: Option<PathBuf>,
    },
    /// Sample riffle shuffles as before;after records
    ShuffleSimulate {
        #[arg(long)]
        cards: usize,
        /// Shuffle model file (default: the unbiased riffle model)
        #[arg(long, value_name = "FILE")]
        model: Option<PathBuf>,
    },
    /// Tester error rates on the hard instance family over an m grid
    Lowerbound {
        #[arg(long, value_enum)]
        family: Family,
        #[arg(long)]
        n: usize,
        #[arg(long)]
        epsilon: f64,
        /// Comma-separated budgets, e.g. 100,200,400
        #[arg(long, value_delimiter = ',', required = true)]
        m_grid: Vec<usize>,
    },
    /// Calibrate a rejection threshold from null simulations (>= 500 trials)
    Calibrate {
        #[arg(long, value_enum)]
        kind: CalibrateKind,
        #[arg(long, value_name = "FILE")]
        chain: PathBuf,
        #[arg(long)]
        epsilon: f64,
        /// Budget: trajectory steps for iid, expected words for chi2-edge
        #[arg(long)]
        m: Option<f64>,
        /// Null quantile the threshold is read from
        #[arg(long, default_value_t = 0.9)]
        quantile: f64,
    },
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum CalibrateKind {
    Iid,
    Chi2Edge,
}

fn main() {
    let cli = Cli::parse();
    match run_cli(cli) {
        Ok(stdout) => print!("{stdout}"),
        Err(e) => {
            eprintln!("error: {e:#}");
            std::process::exit(1);
        }
    }
}

fn run_cli(cli: Cli) -> Result<String> {
    let mut cfg = match (cli.config, cli.command) {
        (Some(_), Some(_)) => bail!("give either --config or a subcommand, not both"),
        (Some(path), None) => ExperimentConfig::from_path(&path)?,
        (None, Some(cmd)) => bare_config(to_spec(cmd)?),
        (None, None) => bail!("nothing to run: give a subcommand or --config (try --help)"),
    };
    if let Some(s) = cli.seed {
        cfg.seed = Some(s);
    }
    if cfg.seed.is_none() {
        cfg.seed = seed_from_env()?;
    }
    if cfg.seed.is_none() {
        cfg.seed = Some(0);
    }
    if let Some(t) = cli.trials {
        cfg.trials = t;
    }
    if let Some(j) = cli.jobs {
        cfg.jobs = Some(j);
    }
    if let Some(path) = cli.constants {
        let profile = ConstantsProfile::load(&path)
            .with_context(|| format!("loading constants {}", path.display()))?;
        cfg.constants = Some(profile);
    }
    if let Some(o) = cli.out {
        cfg.out = Some(o);
    }
    Ok(run::run(&cfg)?.stdout)
}

fn seed_from_env() -> Result<Option<u64>> {
    match std::env::var("MCIDENT_SEED") {
        Ok(text) => {
            let parsed = text
                .trim()
                .parse::<u64>()
                .with_context(|| format!("parsing MCIDENT_SEED {text:?}"))?;
            Ok(Some(parsed))
        }
        Err(std::env::VarError::NotPresent) => Ok(None),
        Err(e) => Err(e).context("reading MCIDENT_SEED"),
    }
}

fn bare_config(command: CommandSpec) -> ExperimentConfig {
    ExperimentConfig {
        experiment: None,
        command,
        seed: None,
        trials: 1,
        jobs: None,
        constants: None,
        out: None,
    }
}

fn to_spec(cmd: Command) -> Result<CommandSpec> {
    Ok(match cmd {
        Command::Distance { p, q, length, threshold, worst_start } => CommandSpec::Distance {
            p: ChainSource::Path(p),
            q: ChainSource::Path(q),
            length,
            threshold,
            worst_start,
        },
        Command::Simulate { chain, steps, start } => CommandSpec::Simulate {
            chain: ChainSource::Path(chain),
            steps,
            start,
        },
        Command::TestSymmetric { chain, epsilon, m, alt, trajectory, thresholds } => {
            CommandSpec::TestSymmetric {
                chain: ChainSource::Path(chain),
                epsilon,
                m,
                alt: alt.map(ChainSource::Path),
                trajectory,
                thresholds,
            }
        }
        Command::TestSparse { chain, epsilon, m, alt, words, calibration } => {
            CommandSpec::TestSparse {
                chain: SparseSource::Path(chain),
                epsilon,
                m,
                alt: alt.map(SparseSource::Path),
                words,
                calibration,
            }
        }
        Command::TestShuffle {
            cards,
            epsilon,
            m,
            sample_constant,
            model,
            alt,
            records,
            calibration,
        } => CommandSpec::TestShuffle {
            cards,
            epsilon,
            m,
            sample_constant,
            model: model.map(ModelSource::Path),
            alt: alt.map(ModelSource::Path),
            records,
            calibration,
        },
        Command::ShuffleSimulate { cards, model } => CommandSpec::ShuffleSimulate {
            cards,
            model: model.map(ModelSource::Path),
        },
        Command::Lowerbound { family, n, epsilon, m_grid } => CommandSpec::Lowerbound {
            family,
            n,
            epsilon,
            m_grid,
        },
        Command::Calibrate { kind, chain, epsilon, m, quantile } => {
            let target = match kind {
                CalibrateKind::Iid => CalibrateTarget::Iid {
                    chain: ChainSource::Path(chain),
                    epsilon,
                    m: m.map(integral_m).transpose()?,
                },
                CalibrateKind::Chi2Edge => CalibrateTarget::Chi2Edge {
                    chain: SparseSource::Path(chain),
                    epsilon,
                    m: m.context("chi2-edge calibration needs --m")?,
                },
            };
            CommandSpec::Calibrate { target, quantile }
        }
    })
}

fn integral_m(m: f64) -> Result<usize> {
    if m < 1.0 || m.fract() != 0.0 || m > usize::MAX as f64 {
        bail!("iid calibration takes an integer trajectory length, got {m}");
    }
    Ok(m as usize)
}
