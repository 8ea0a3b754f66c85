//! Executes a config: resolves inputs, fans trials out over a thread pool,
//! and writes the artifact plus a manifest carrying its content hash.
//!
//! Every random draw is keyed by (master seed, trial index, stream tag), so
//! artifacts are byte-identical across reruns and worker counts.

use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{bail, Context, Result};
use mcident_core::{
    chain_distance, hellinger_sq_words, minimal_distinguishing_length,
    minimal_distinguishing_length_tv, sample_trajectory_rng, DistanceError, RngSeed, Start,
    StartMode, StateDistribution, Trajectory,
};
use mcident_testers::{
    build_grid_chain, calibrate_chi2_edge, calibrate_symmetric, chi2_edge_test, encode_shuffle,
    power_curve, recommended_trajectory_length, sample_shuffle_word, shuffle_once_traced,
    test_identity_symmetric, Chi2Calibration, ConstantsProfile, IidThresholds, Verdict, Word,
};
use rayon::prelude::*;
use serde_json::json;
use sha2::{Digest, Sha256};

use crate::config::{
    CalibrateTarget, ChainSource, CommandSpec, ExperimentConfig, Family, GeneratedModel,
    ModelSource, SparseSource,
};
use crate::rows::{
    reason_counts, to_csv, CurveRow, DistanceRow, SimRow, TestRow,
};

const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;

/// SplitMix finalizer; decorrelates nearby (seed, tag) pairs.
fn mix(base: u64, tag: u64) -> u64 {
    let mut z = base ^ tag.wrapping_mul(GOLDEN);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Per-trial stream seed: a function of (seed, trial, tag) only, so results
/// cannot depend on worker scheduling.
fn trial_seed(seed: u64, trial: usize, tag: u64) -> u64 {
    mix(mix(seed, trial as u64 + 1), tag)
}

/// Fresh hard instance per trial.
const TAG_GEN: u64 = 1;
/// Data sampling (trajectories, words, shuffles).
const TAG_DATA: u64 = 2;
/// The tester's own randomness (visit plan, Poisson subsample).
const TAG_TEST: u64 = 3;
/// Reference inputs resolved once per run, not per trial.
const TAG_REF: u64 = 71;

/// What a command produced, before any file is written.
struct Outcome {
    stdout: String,
    artifact: Artifact,
    rows: usize,
}

enum Artifact {
    Csv(String),
    Json(String),
    /// Shuffle records: "before;after" lines, comma-separated labels.
    Records(String),
}

impl Artifact {
    fn ext(&self) -> &'static str {
        match self {
            Artifact::Csv(_) | Artifact::Records(_) => "csv",
            Artifact::Json(_) => "json",
        }
    }

    fn bytes(&self) -> &[u8] {
        match self {
            Artifact::Csv(s) | Artifact::Json(s) | Artifact::Records(s) => s.as_bytes(),
        }
    }
}

pub struct RunOutput {
    pub stdout: String,
    /// Paths actually written; the flag path prints stdout and ignores them.
    #[allow(dead_code)]
    pub artifact_path: Option<PathBuf>,
    #[allow(dead_code)]
    pub manifest_path: Option<PathBuf>,
}

pub fn run(cfg: &ExperimentConfig) -> Result<RunOutput> {
    if cfg.trials == 0 {
        bail!("trials must be at least 1");
    }
    let started = Instant::now();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.jobs.unwrap_or(0))
        .build()
        .context("building worker pool")?;
    let outcome = pool.install(|| execute(cfg))?;
    let wall_ms = started.elapsed().as_millis() as u64;

    let (artifact_path, manifest_path) = match &cfg.out {
        None => (None, None),
        Some(out) => {
            let path = artifact_file(out, outcome.artifact.ext());
            if let Some(dir) = path.parent() {
                if !dir.as_os_str().is_empty() {
                    std::fs::create_dir_all(dir)
                        .with_context(|| format!("creating {}", dir.display()))?;
                }
            }
            std::fs::write(&path, outcome.artifact.bytes())
                .with_context(|| format!("writing {}", path.display()))?;
            let manifest = json!({
                "experiment": cfg.experiment_name(),
                "config": cfg,
                "artifact": path.file_name().map(|f| f.to_string_lossy().into_owned()),
                "sha256": hex(&Sha256::digest(outcome.artifact.bytes())),
                "rows": outcome.rows,
                "wall_ms": wall_ms,
            });
            let mpath = manifest_file(&path);
            std::fs::write(&mpath, pretty(manifest))
                .with_context(|| format!("writing {}", mpath.display()))?;
            (Some(path), Some(mpath))
        }
    };
    Ok(RunOutput {
        stdout: outcome.stdout,
        artifact_path,
        manifest_path,
    })
}

/// An extensionless out path gets the artifact's natural extension.
fn artifact_file(out: &Path, ext: &str) -> PathBuf {
    if out.extension().is_some() {
        out.to_path_buf()
    } else {
        out.with_extension(ext)
    }
}

fn manifest_file(artifact: &Path) -> PathBuf {
    let mut name = artifact.file_name().unwrap_or_default().to_os_string();
    name.push(".manifest.json");
    artifact.with_file_name(name)
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

fn pretty<T: serde::Serialize>(value: T) -> String {
    let mut s = serde_json::to_string_pretty(&value).expect("value serializes");
    s.push('\n');
    s
}

fn execute(cfg: &ExperimentConfig) -> Result<Outcome> {
    let seed = cfg.seed.unwrap_or(0);
    let name = cfg.experiment_name();
    let trials = cfg.trials;
    let constants = cfg.constants.clone().unwrap_or_default();
    match &cfg.command {
        CommandSpec::Distance { p, q, length, threshold, worst_start } => {
            exec_distance(&name, p, q, *length, *threshold, *worst_start, seed)
        }
        CommandSpec::Simulate { chain, steps, start } => {
            exec_simulate(chain, *steps, *start, seed, trials)
        }
        CommandSpec::TestSymmetric { chain, epsilon, m, alt, trajectory, thresholds } => {
            exec_test_symmetric(
                &name, chain, *epsilon, *m, alt, trajectory, thresholds, seed, trials, &constants,
            )
        }
        CommandSpec::TestSparse { chain, epsilon, m, alt, words, calibration } => {
            exec_test_sparse(&name, chain, *epsilon, *m, alt, words, calibration, seed, trials)
        }
        CommandSpec::TestShuffle {
            cards,
            epsilon,
            m,
            sample_constant,
            model,
            alt,
            records,
            calibration,
        } => exec_test_shuffle(
            &name,
            *cards,
            *epsilon,
            *m,
            *sample_constant,
            model,
            alt,
            records,
            calibration,
            seed,
            trials,
        ),
        CommandSpec::ShuffleSimulate { cards, model } => {
            exec_shuffle_simulate(*cards, model, seed, trials)
        }
        CommandSpec::Lowerbound { family, n, epsilon, m_grid } => {
            exec_lowerbound(&name, *family, *n, *epsilon, m_grid, seed, trials)
        }
        CommandSpec::Calibrate { target, quantile } => {
            exec_calibrate(target, *quantile, seed, trials, &constants)
        }
    }
}

fn exec_distance(
    name: &str,
    p: &ChainSource,
    q: &ChainSource,
    length: Option<u64>,
    threshold: f64,
    worst_start: bool,
    seed: u64,
) -> Result<Outcome> {
    let pm = p.resolve(mix(seed, TAG_REF))?;
    let qm = q.resolve(mix(seed, TAG_REF + 1))?;
    if pm.n() != qm.n() {
        bail!("chains have different sizes: {} vs {}", pm.n(), qm.n());
    }
    let spectral = chain_distance(&pm, &qm)?;
    let uniform = StateDistribution::uniform(pm.n())?;
    let mode = if worst_start {
        StartMode::Worst
    } else {
        StartMode::Average(uniform.clone())
    };

    let not_found = |e: DistanceError| match e {
        DistanceError::NoFiniteLength => Ok("no_finite_length"),
        DistanceError::LengthCapExceeded => Ok("search_cap_exceeded"),
        other => Err(other),
    };
    let (minimal_length, length_note) =
        match minimal_distinguishing_length(&pm, &qm, &mode, threshold) {
            Ok(l) => (Some(l), None),
            Err(e) => (None, Some(not_found(e)?)),
        };
    let minimal_tv = match minimal_distinguishing_length_tv(&pm, &qm, &mode, threshold) {
        Ok(interval) => Some(interval),
        Err(e) => {
            not_found(e)?;
            None
        }
    };

    let len = length.or(minimal_length).unwrap_or(1);
    let h2 = hellinger_sq_words(&pm, &qm, &uniform, &uniform, len)?;
    let tv_lower = h2;
    let tv_upper = (2.0 * h2).sqrt().min(1.0);

    let row = DistanceRow {
        experiment: name.to_string(),
        spectral_distance: spectral,
        length: len,
        hellinger_sq: h2,
        tv_lower,
        tv_upper,
        minimal_length,
        minimal_length_tv_lo: minimal_tv.map(|iv| iv.lo),
        minimal_length_tv_hi: minimal_tv.map(|iv| iv.hi),
    };
    let stdout = pretty(json!({
        "spectral_distance": spectral,
        "start_mode": if worst_start { "worst" } else { "average" },
        "threshold": threshold,
        "length": len,
        "hellinger_sq": h2,
        "tv_lower": tv_lower,
        "tv_upper": tv_upper,
        "minimal_length": minimal_length,
        "minimal_length_note": length_note,
        "minimal_length_tv": minimal_tv.map(|iv| json!({"lo": iv.lo, "hi": iv.hi})),
    }));
    Ok(Outcome {
        stdout,
        artifact: Artifact::Csv(to_csv(&[row])?),
        rows: 1,
    })
}

fn exec_simulate(
    chain: &ChainSource,
    steps: usize,
    start: Option<usize>,
    seed: u64,
    trials: usize,
) -> Result<Outcome> {
    let q = chain.resolve(mix(seed, TAG_REF))?;
    let start = match start {
        Some(s) => {
            if s >= q.n() {
                bail!("start state {s} is out of range for an {}-state chain", q.n());
            }
            Start::State(s)
        }
        None => Start::Dist(StateDistribution::uniform(q.n())?),
    };
    let lines = (0..trials)
        .into_par_iter()
        .map(|t| -> Result<String> {
            let mut rng = RngSeed(trial_seed(seed, t, TAG_DATA)).rng();
            let w = sample_trajectory_rng(&q, &start, steps, &mut rng)?;
            Ok(join_spaced(&w.states))
        })
        .collect::<Result<Vec<_>>>()?;
    let rows: Vec<SimRow> = lines
        .iter()
        .enumerate()
        .map(|(trial, states)| SimRow { trial, states: states.clone() })
        .collect();
    Ok(Outcome {
        stdout: lines.join("\n") + "\n",
        artifact: Artifact::Csv(to_csv(&rows)?),
        rows: rows.len(),
    })
}

#[allow(clippy::too_many_arguments)]
fn exec_test_symmetric(
    name: &str,
    chain: &ChainSource,
    epsilon: f64,
    m: Option<usize>,
    alt: &Option<ChainSource>,
    trajectory: &Option<PathBuf>,
    thresholds: &Option<PathBuf>,
    seed: u64,
    trials: usize,
    constants: &ConstantsProfile,
) -> Result<Outcome> {
    let q = chain.resolve(mix(seed, TAG_REF))?;
    let n = q.n();
    let m = match m {
        Some(m) => m,
        None => recommended_trajectory_length(&q, epsilon, constants)?,
    };
    let table = match thresholds {
        Some(path) => IidThresholds::load(path)
            .with_context(|| format!("loading thresholds {}", path.display()))?,
        None => IidThresholds::default(),
    };
    let fixed = trajectory
        .as_ref()
        .map(|path| parse_trajectory(path, n))
        .transpose()?;
    let uniform = Start::Dist(StateDistribution::uniform(n)?);

    let verdicts = (0..trials)
        .into_par_iter()
        .map(|t| -> Result<Verdict> {
            let w = match &fixed {
                Some(w) => w.clone(),
                None => {
                    let generated = match alt {
                        Some(src) => Some(src.resolve(trial_seed(seed, t, TAG_GEN))?),
                        None => None,
                    };
                    let from = generated.as_ref().unwrap_or(&q);
                    let mut rng = RngSeed(trial_seed(seed, t, TAG_DATA)).rng();
                    sample_trajectory_rng(from, &uniform, m, &mut rng)?
                }
            };
            Ok(test_identity_symmetric(
                &q,
                &w,
                epsilon,
                RngSeed(trial_seed(seed, t, TAG_TEST)),
                constants,
                &table,
            )?)
        })
        .collect::<Result<Vec<_>>>()?;
    test_outcome(TestRow::from_verdicts(name, n, epsilon, m as f64, &verdicts), &verdicts)
}

#[allow(clippy::too_many_arguments)]
fn exec_test_sparse(
    name: &str,
    chain: &SparseSource,
    epsilon: f64,
    m: f64,
    alt: &Option<SparseSource>,
    words: &Option<PathBuf>,
    calibration: &Option<PathBuf>,
    seed: u64,
    trials: usize,
) -> Result<Outcome> {
    let q = chain.resolve(mix(seed, TAG_REF))?;
    let calib = load_calibration(calibration)?;
    let fixed = words.as_ref().map(|path| parse_words(path)).transpose()?;
    let n_words = oversampled_count(m);

    let verdicts = (0..trials)
        .into_par_iter()
        .map(|t| -> Result<Verdict> {
            let ws = match &fixed {
                Some(ws) => ws.clone(),
                None => {
                    let generated = match alt {
                        Some(src) => Some(src.resolve(trial_seed(seed, t, TAG_GEN))?),
                        None => None,
                    };
                    let from = generated.as_ref().unwrap_or(&q);
                    let mut rng = RngSeed(trial_seed(seed, t, TAG_DATA)).rng();
                    (0..n_words).map(|_| from.sample_round_rng(&mut rng)).collect()
                }
            };
            Ok(chi2_edge_test(
                &q,
                &ws,
                m,
                epsilon,
                RngSeed(trial_seed(seed, t, TAG_TEST)),
                calib.as_ref(),
            )?)
        })
        .collect::<Result<Vec<_>>>()?;
    test_outcome(TestRow::from_verdicts(name, q.n_states(), epsilon, m, &verdicts), &verdicts)
}

#[allow(clippy::too_many_arguments)]
fn exec_test_shuffle(
    name: &str,
    cards: usize,
    epsilon: f64,
    m: Option<f64>,
    sample_constant: f64,
    model: &Option<ModelSource>,
    alt: &Option<ModelSource>,
    records: &Option<PathBuf>,
    calibration: &Option<PathBuf>,
    seed: u64,
    trials: usize,
) -> Result<Outcome> {
    let null_model = model
        .clone()
        .unwrap_or(ModelSource::Generated(GeneratedModel::Gsr))
        .resolve(cards)?;
    let q = build_grid_chain(&null_model)?;
    let m = m.unwrap_or(sample_constant * (cards as f64).powf(1.5) / (epsilon * epsilon));
    let calib = load_calibration(calibration)?;
    let fixed = records
        .as_ref()
        .map(|path| parse_records(path, cards))
        .transpose()?;
    let source_model = match alt {
        Some(src) => src.resolve(cards)?,
        None => null_model.clone(),
    };
    let n_words = oversampled_count(m);

    let verdicts = (0..trials)
        .into_par_iter()
        .map(|t| -> Result<Verdict> {
            let ws = match &fixed {
                Some(ws) => ws.clone(),
                None => {
                    let mut rng = RngSeed(trial_seed(seed, t, TAG_DATA)).rng();
                    (0..n_words)
                        .map(|_| sample_shuffle_word(&source_model, &mut rng))
                        .collect::<Result<Vec<_>, _>>()?
                }
            };
            Ok(chi2_edge_test(
                &q,
                &ws,
                m,
                epsilon,
                RngSeed(trial_seed(seed, t, TAG_TEST)),
                calib.as_ref(),
            )?)
        })
        .collect::<Result<Vec<_>>>()?;
    test_outcome(TestRow::from_verdicts(name, cards, epsilon, m, &verdicts), &verdicts)
}

fn exec_shuffle_simulate(
    cards: usize,
    model: &Option<ModelSource>,
    seed: u64,
    trials: usize,
) -> Result<Outcome> {
    let model = model
        .clone()
        .unwrap_or(ModelSource::Generated(GeneratedModel::Gsr))
        .resolve(cards)?;
    let deck: Vec<u32> = (1..=cards as u32).collect();
    let lines = (0..trials)
        .into_par_iter()
        .map(|t| -> Result<String> {
            let mut rng = RngSeed(trial_seed(seed, t, TAG_DATA)).rng();
            let (after, _) = shuffle_once_traced(&model, &deck, &mut rng)?;
            Ok(format!("{};{}", join_comma(&deck), join_comma(&after)))
        })
        .collect::<Result<Vec<_>>>()?;
    let text = lines.join("\n") + "\n";
    Ok(Outcome {
        stdout: text.clone(),
        artifact: Artifact::Records(text),
        rows: trials,
    })
}

fn exec_lowerbound(
    name: &str,
    family: Family,
    n: usize,
    epsilon: f64,
    m_grid: &[usize],
    seed: u64,
    trials: usize,
) -> Result<Outcome> {
    let points = power_curve(family.into(), n, epsilon, m_grid, trials, RngSeed(seed))?;
    let family_name = match family {
        Family::Symmetric => "symmetric",
        Family::Sparse => "sparse",
    };
    let rows: Vec<CurveRow> = points
        .iter()
        .map(|pt| CurveRow {
            experiment: name.to_string(),
            family: family_name.to_string(),
            n,
            epsilon,
            m: pt.m,
            trials: pt.trials,
            type_i: pt.type_i,
            type_ii: pt.type_ii,
        })
        .collect();
    Ok(Outcome {
        stdout: pretty(&points),
        artifact: Artifact::Csv(to_csv(&rows)?),
        rows: rows.len(),
    })
}

fn exec_calibrate(
    target: &CalibrateTarget,
    quantile: f64,
    seed: u64,
    trials: usize,
    constants: &ConstantsProfile,
) -> Result<Outcome> {
    if trials < 500 {
        bail!("calibration needs at least 500 trials, got {trials}");
    }
    match target {
        CalibrateTarget::Iid { chain, epsilon, m } => {
            let q = chain.resolve(mix(seed, TAG_REF))?;
            let m = match m {
                Some(m) => *m,
                None => recommended_trajectory_length(&q, *epsilon, constants)?,
            };
            let (entry, skipped) =
                calibrate_symmetric(&q, m, *epsilon, constants, trials, quantile, RngSeed(seed))?;
            let profile = IidThresholds { entries: vec![entry.clone()] };
            let stdout = pretty(json!({
                "kind": "iid",
                "entry": entry,
                "skipped_trials": skipped,
            }));
            Ok(Outcome {
                stdout,
                artifact: Artifact::Json(pretty(&profile)),
                rows: 1,
            })
        }
        CalibrateTarget::Chi2Edge { chain, epsilon, m } => {
            let q = chain.resolve(mix(seed, TAG_REF))?;
            let calib = calibrate_chi2_edge(&q, *m, *epsilon, trials, quantile, RngSeed(seed))?;
            let stdout = pretty(json!({
                "kind": "chi2-edge",
                "calibration": calib,
            }));
            Ok(Outcome {
                stdout,
                artifact: Artifact::Json(pretty(&calib)),
                rows: 1,
            })
        }
    }
}

/// Single trial prints the verdict itself; multi-trial runs print a summary
/// whose rates mirror the CSV row.
fn test_outcome(row: TestRow, verdicts: &[Verdict]) -> Result<Outcome> {
    let stdout = if verdicts.len() == 1 {
        pretty(&verdicts[0])
    } else {
        pretty(json!({
            "experiment": row.experiment,
            "n": row.n,
            "epsilon": row.epsilon,
            "m": row.m,
            "trials": row.trials,
            "accepts": row.accepts,
            "rejects": row.rejects,
            "accept_rate": row.accept_rate,
            "reject_rate": row.reject_rate,
            "reject_reasons": reason_counts(verdicts),
        }))
    };
    Ok(Outcome {
        stdout,
        artifact: Artifact::Csv(to_csv(&[row])?),
        rows: 1,
    })
}

fn load_calibration(path: &Option<PathBuf>) -> Result<Option<Chi2Calibration>> {
    path.as_ref()
        .map(|p| {
            Chi2Calibration::load(p)
                .with_context(|| format!("loading calibration {}", p.display()))
        })
        .transpose()
}

/// Words to supply per trial: the Poisson draw at m stays below m + 3·√m
/// except with about 1e-3 probability, and a shortfall is a loud error.
fn oversampled_count(m: f64) -> usize {
    (m + 3.0 * m.sqrt()).ceil().max(1.0) as usize
}

fn join_spaced(states: &[usize]) -> String {
    states.iter().map(|s| s.to_string()).collect::<Vec<_>>().join(" ")
}

fn join_comma(deck: &[u32]) -> String {
    deck.iter().map(|c| c.to_string()).collect::<Vec<_>>().join(",")
}

fn parse_trajectory(path: &Path, n: usize) -> Result<Trajectory> {
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("reading trajectory {}", path.display()))?;
    let states = text
        .split_whitespace()
        .map(|tok| {
            tok.parse::<usize>()
                .with_context(|| format!("bad state index {tok:?} in {}", path.display()))
        })
        .collect::<Result<Vec<_>>>()?;
    if states.is_empty() {
        bail!("trajectory file {} is empty", path.display());
    }
    if let Some(&s) = states.iter().find(|&&s| s >= n) {
        bail!("trajectory state {s} is out of range for an {n}-state chain");
    }
    Ok(Trajectory { states })
}

/// One word per line, space-separated state indices; blank lines are skipped.
fn parse_words(path: &Path) -> Result<Vec<Word>> {
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("reading words {}", path.display()))?;
    let mut words = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let word = line
            .split_whitespace()
            .map(|tok| {
                tok.parse::<usize>()
                    .with_context(|| format!("word {}: bad state index {tok:?}", i + 1))
            })
            .collect::<Result<Word>>()?;
        words.push(word);
    }
    if words.is_empty() {
        bail!("word file {} is empty", path.display());
    }
    Ok(words)
}

/// "before;after" lines with comma-separated card labels; each record is
/// decoded to its grid word, and a non-riffle record is an error.
fn parse_records(path: &Path, cards: usize) -> Result<Vec<Word>> {
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("reading records {}", path.display()))?;
    let mut words = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let (before, after) = line
            .split_once(';')
            .with_context(|| format!("record {}: expected \"before;after\"", i + 1))?;
        let before = parse_deck(before, i + 1)?;
        let after = parse_deck(after, i + 1)?;
        if before.len() != cards {
            bail!("record {}: {} cards, command says {}", i + 1, before.len(), cards);
        }
        let grid_path = encode_shuffle(&before, &after)
            .with_context(|| format!("record {}", i + 1))?;
        words.push(grid_path.to_word());
    }
    if words.is_empty() {
        bail!("record file {} is empty", path.display());
    }
    Ok(words)
}

fn parse_deck(text: &str, record: usize) -> Result<Vec<u32>> {
    text.split(',')
        .map(|tok| {
            tok.trim()
                .parse::<u32>()
                .with_context(|| format!("record {record}: bad card label {tok:?}"))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::GeneratedChain;

    #[test]
    fn trial_seeds_separate_trials_and_streams() {
        let a = trial_seed(5, 0, TAG_DATA);
        let b = trial_seed(5, 1, TAG_DATA);
        let c = trial_seed(5, 0, TAG_TEST);
        assert_ne!(a, b);
        assert_ne!(a, c);
        assert_eq!(a, trial_seed(5, 0, TAG_DATA));
    }

    #[test]
    fn oversampling_covers_the_poisson_tail() {
        assert_eq!(oversampled_count(100.0), 130);
        assert!(oversampled_count(0.5) >= 1);
    }

    #[test]
    fn artifact_paths_keep_explicit_extensions() {
        assert_eq!(artifact_file(Path::new("out/x"), "csv"), Path::new("out/x.csv"));
        assert_eq!(artifact_file(Path::new("out/x.json"), "csv"), Path::new("out/x.json"));
        assert_eq!(
            manifest_file(Path::new("out/x.csv")),
            Path::new("out/x.csv.manifest.json")
        );
    }

    #[test]
    fn distance_of_a_chain_with_itself_is_zero() {
        let cfg = ExperimentConfig {
            experiment: None,
            command: CommandSpec::Distance {
                p: ChainSource::Generated(GeneratedChain::Complete { n: 4 }),
                q: ChainSource::Generated(GeneratedChain::Complete { n: 4 }),
                length: Some(3),
                threshold: 0.5,
                worst_start: false,
            },
            seed: Some(0),
            trials: 1,
            jobs: Some(1),
            constants: None,
            out: None,
        };
        let out = run(&cfg).unwrap();
        let v: serde_json::Value = serde_json::from_str(&out.stdout).unwrap();
        assert_eq!(v["spectral_distance"].as_f64().unwrap(), 0.0);
        assert_eq!(v["minimal_length"], serde_json::Value::Null);
        assert_eq!(v["minimal_length_note"], "no_finite_length");
        assert_eq!(v["hellinger_sq"].as_f64().unwrap(), 0.0);
    }

    #[test]
    fn manifest_hash_matches_artifact_bytes() {
        let dir = tempfile::tempdir().unwrap();
        let out = dir.path().join("traj");
        let cfg = ExperimentConfig {
            experiment: Some("walk".into()),
            command: CommandSpec::Simulate {
                chain: ChainSource::Generated(GeneratedChain::Complete { n: 5 }),
                steps: 10,
                start: Some(0),
            },
            seed: Some(9),
            trials: 3,
            jobs: Some(1),
            constants: None,
            out: Some(out.clone()),
        };
        let result = run(&cfg).unwrap();
        let artifact = result.artifact_path.unwrap();
        assert_eq!(artifact, dir.path().join("traj.csv"));
        let bytes = std::fs::read(&artifact).unwrap();
        let manifest: serde_json::Value =
            serde_json::from_str(&std::fs::read_to_string(result.manifest_path.unwrap()).unwrap())
                .unwrap();
        assert_eq!(manifest["sha256"].as_str().unwrap(), hex(&Sha256::digest(&bytes)));
        assert_eq!(manifest["rows"], 3);
        assert_eq!(manifest["experiment"], "walk");
        assert_eq!(manifest["config"]["seed"], 9);
        assert_eq!(result.stdout.lines().count(), 3);
        for line in result.stdout.lines() {
            assert_eq!(line.split_whitespace().count(), 11);
        }
    }
}
