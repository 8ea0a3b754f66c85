//! Threshold calibration by null simulation.
//!
//! The sample-complexity theorems hide absolute constants, so rejection
//! cutoffs are set empirically: simulate the statistic under P = Q many
//! times, read off a high quantile (90th by default), and ship the result in
//! a profile. Trials that the production pipeline would reject before ever
//! consulting a threshold (out-of-bucket mass, pruning filter) count as
//! infinitely large draws so the quantile stays honest.

use crate::profile::{empirical_quantile, Chi2Calibration, IidThresholdEntry};
use crate::sparse::{
    chi2_edge_statistic, filter_samples, prune, SparseChain, SparseError, Word,
};
use crate::symmetric::{
    collect_edge_samples, draw_visit_plan_rng, flatten_chain, iid_statistic, SymError,
};
use crate::profile::ConstantsProfile;
use mcident_core::{
    sample_trajectory_rng, RngSeed, Start, StateDistribution, StochasticMatrix,
};
use rand::Rng;
use rand_distr::{Distribution, Poisson};
use rayon::prelude::*;

fn summarize(finite: &[f64]) -> (Option<f64>, Option<f64>) {
    if finite.is_empty() {
        return (None, None);
    }
    let mean = finite.iter().sum::<f64>() / finite.len() as f64;
    let var = finite.iter().map(|z| (z - mean).powi(2)).sum::<f64>()
        / (finite.len().max(2) - 1) as f64;
    (Some(mean), Some(var.sqrt()))
}

fn check_calibration_params(trials: usize, quantile: f64) -> Result<(), String> {
    if trials == 0 {
        return Err("need at least one trial".into());
    }
    if !(quantile > 0.0 && quantile < 1.0) {
        return Err(format!("quantile must lie in (0,1), got {quantile}"));
    }
    Ok(())
}

/// Draws `n_samples` i.i.d. indices from q per trial and calibrates the
/// pooled identity statistic's cutoff at the given null quantile.
pub fn calibrate_iid_multinomial(
    q: &[f64],
    n_samples: u64,
    epsilon: f64,
    trials: usize,
    quantile: f64,
    seed: RngSeed,
) -> Result<IidThresholdEntry, SymError> {
    check_calibration_params(trials, quantile).map_err(SymError::BadParams)?;
    if n_samples == 0 {
        return Err(SymError::EmptySample);
    }
    let total: f64 = q.iter().sum();
    if (total - 1.0).abs() > 1e-9 || q.iter().any(|&p| p < 0.0) {
        return Err(SymError::BadParams(format!(
            "reference must be a distribution, mass {total}"
        )));
    }
    let cdf: Vec<f64> = q
        .iter()
        .scan(0.0, |acc, &p| {
            *acc += p;
            Some(*acc)
        })
        .collect();

    let results: Vec<(f64, f64)> = (0..trials)
        .into_par_iter()
        .map(|trial| {
            let mut rng = seed.stream_rng(trial as u64);
            let samples: Vec<usize> = (0..n_samples)
                .map(|_| {
                    let u: f64 = rng.random();
                    match cdf.binary_search_by(|c| c.partial_cmp(&u).unwrap()) {
                        Ok(pos) | Err(pos) => pos.min(q.len() - 1),
                    }
                })
                .collect();
            let stat = iid_statistic(q, &samples, epsilon).expect("valid calibration inputs");
            (stat.z.unwrap_or(f64::INFINITY), stat.lambda)
        })
        .collect();

    let mut zs: Vec<f64> = results.iter().map(|&(z, _)| z).collect();
    zs.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let tau = empirical_quantile(&zs, quantile);
    let finite: Vec<f64> = zs.iter().copied().filter(|z| z.is_finite()).collect();
    let (null_mean, null_sd) = summarize(&finite);
    let lambda = results.iter().map(|&(_, l)| l).sum::<f64>() / trials as f64;
    Ok(IidThresholdEntry {
        s: q.len(),
        epsilon,
        lambda,
        tau,
        null_mean,
        null_sd,
        trials: Some(trials),
        percentile: Some(quantile),
    })
}

/// Calibrates the symmetric tester end to end: each null trial samples a
/// length-m trajectory of Q from a uniform start, draws a visit plan, pools
/// the collected edges, and records the identity statistic. Incomplete plans
/// contribute no draw (production rejects them before any threshold); their
/// count is returned alongside the entry.
pub fn calibrate_symmetric(
    q: &StochasticMatrix,
    m: usize,
    epsilon: f64,
    constants: &ConstantsProfile,
    trials: usize,
    quantile: f64,
    seed: RngSeed,
) -> Result<(IidThresholdEntry, usize), SymError> {
    check_calibration_params(trials, quantile).map_err(SymError::BadParams)?;
    let n = q.n();
    let flat = flatten_chain(q);
    let uniform = StateDistribution::uniform(n).expect("n >= 1");

    let results: Vec<Option<(f64, f64)>> = (0..trials)
        .into_par_iter()
        .map(|trial| {
            let mut rng = seed.stream_rng(trial as u64);
            let w = sample_trajectory_rng(q, &Start::Dist(uniform.clone()), m, &mut rng)
                .expect("valid chain");
            let plan = draw_visit_plan_rng(m, n, epsilon, constants.c_plan, &mut rng)
                .expect("plan parameters validated by caller sizes");
            let set = collect_edge_samples(&w, &plan).expect("trajectory stays in range");
            if !set.complete {
                return None;
            }
            let cells = set.pooled_cells(n);
            let stat = iid_statistic(&flat, &cells, epsilon).expect("nonempty pooled sample");
            Some((stat.z.unwrap_or(f64::INFINITY), stat.lambda))
        })
        .collect();

    let incomplete = results.iter().filter(|r| r.is_none()).count();
    let draws: Vec<(f64, f64)> = results.into_iter().flatten().collect();
    if draws.is_empty() {
        return Err(SymError::BadParams(format!(
            "every null trial left the visit plan unfilled at m={m}; calibrate with a longer trajectory"
        )));
    }
    let mut zs: Vec<f64> = draws.iter().map(|&(z, _)| z).collect();
    zs.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let tau = empirical_quantile(&zs, quantile);
    let finite: Vec<f64> = zs.iter().copied().filter(|z| z.is_finite()).collect();
    let (null_mean, null_sd) = summarize(&finite);
    let lambda = draws.iter().map(|&(_, l)| l).sum::<f64>() / draws.len() as f64;
    Ok((
        IidThresholdEntry {
            s: n * n,
            epsilon,
            lambda,
            tau,
            null_mean,
            null_sd,
            trials: Some(trials),
            percentile: Some(quantile),
        },
        incomplete,
    ))
}

/// Calibrates the edge test's cutoff: each null trial Poissonizes m, samples
/// that many rounds of Q, applies the pruning filter, and records the edge
/// statistic on the pruned support (filter rejections count as +inf).
pub fn calibrate_chi2_edge(
    q: &SparseChain,
    m: f64,
    epsilon: f64,
    trials: usize,
    quantile: f64,
    seed: RngSeed,
) -> Result<Chi2Calibration, SparseError> {
    check_calibration_params(trials, quantile).map_err(SparseError::BadParams)?;
    if !(m > 0.0) || !m.is_finite() {
        return Err(SparseError::BadParams(format!(
            "expected sample count must be positive, got {m}"
        )));
    }
    let (_pruned, table, _removed) = prune(q, epsilon, q.k())?;
    let poisson = Poisson::new(m).expect("positive finite mean");
    let filter_cut = 2.0 * m * epsilon * epsilon;

    let zs_unsorted: Vec<f64> = (0..trials)
        .into_par_iter()
        .map(|trial| {
            let mut rng = seed.stream_rng(trial as u64);
            let m_prime = poisson.sample(&mut rng).round() as u64;
            let words: Vec<Word> = (0..m_prime)
                .map(|_| q.sample_round_rng(&mut rng))
                .collect();
            let (kept, reject_count) = filter_samples(&words, &table);
            if reject_count as f64 > filter_cut {
                return f64::INFINITY;
            }
            let mut counts = table.clone();
            counts.clear_counts();
            counts.tally(&kept).expect("kept words lie in the table");
            chi2_edge_statistic(&counts, m).expect("pruned table has positive probabilities")
        })
        .collect();

    let mut zs = zs_unsorted;
    zs.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let tau = empirical_quantile(&zs, quantile);
    let finite: Vec<f64> = zs.iter().copied().filter(|z| z.is_finite()).collect();
    let (null_mean, null_sd) = summarize(&finite);
    Ok(Chi2Calibration {
        n: q.n_param(),
        epsilon,
        m,
        tau,
        null_mean,
        null_sd,
        trials: Some(trials),
        percentile: Some(quantile),
    })
}
