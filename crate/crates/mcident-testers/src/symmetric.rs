//! Identity testing for symmetric chains from a single trajectory.
//!
//! The pipeline: draw a visit plan (uniform state quotas), scan the trajectory
//! once and keep the first k_i observed successors of each state i, and feed
//! the pooled (state, successor) pairs to a chi-squared-style identity test
//! against the flattened reference chain q_(i,j) = Q_ij / n. Conditioned on
//! the plan filling up, the pooled pairs are i.i.d. from the flattened chain,
//! which is what makes a plain distribution test sound here.

use crate::profile::{ConstantsProfile, IidThresholds};
use crate::verdict::{Decision, Diagnostics, Reason, Verdict};
use mcident_core::{
    hitting_time, MatrixError, RngSeed, SimError, StochasticMatrix, Trajectory,
};
use rand::Rng;
use thiserror::Error;

/// Entrywise tolerance for the symmetry precondition.
pub const SYMMETRY_TOL: f64 = 1e-9;

#[derive(Debug, Error)]
pub enum SymError {
    #[error("bad parameters: {0}")]
    BadParams(String),
    #[error("chain is not symmetric (entrywise defect {defect:.3e} > {SYMMETRY_TOL:.0e})")]
    Asymmetric { defect: f64 },
    #[error("visit plan came out empty; trajectory length {m} is too small for n={n}, eps={epsilon}")]
    EmptyPlan { m: usize, n: usize, epsilon: f64 },
    #[error("identity test needs at least one sample")]
    EmptySample,
    #[error("trajectory state {state} out of range for n={n}")]
    StateOutOfRange { state: usize, n: usize },
    #[error(transparent)]
    Matrix(#[from] MatrixError),
    #[error("hitting time unavailable: {0}")]
    Hitting(#[from] SimError),
}

/// Per-state sampling quotas: the histogram of m' uniform state draws.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct VisitPlan {
    /// Quota k_i for each state.
    pub quotas: Vec<u64>,
    /// Total planned samples m' = sum of quotas.
    pub total: u64,
}

/// Successor states collected against a plan, at most k_i per state.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EdgeSampleSet {
    /// For each state, the successors recorded in trajectory order.
    pub samples: Vec<Vec<usize>>,
    /// True iff every state met its quota.
    pub complete: bool,
}

impl EdgeSampleSet {
    pub fn collected(&self) -> usize {
        self.samples.iter().map(Vec::len).sum()
    }

    /// Pools the per-state lists into flattened cell indices i*n + j.
    pub fn pooled_cells(&self, n: usize) -> Vec<usize> {
        let mut cells = Vec::with_capacity(self.collected());
        for (i, list) in self.samples.iter().enumerate() {
            for &j in list {
                cells.push(i * n + j);
            }
        }
        cells
    }
}

fn plan_size(m: usize, n: usize, epsilon: f64, c_plan: f64) -> Result<u64, SymError> {
    if m < 1 || n < 2 {
        return Err(SymError::BadParams(format!("need m >= 1 and n >= 2, got m={m}, n={n}")));
    }
    if !(epsilon > 0.0 && epsilon < 1.0) {
        return Err(SymError::BadParams(format!("epsilon must lie in (0,1), got {epsilon}")));
    }
    if !(c_plan > 0.0) {
        return Err(SymError::BadParams(format!("c_plan must be positive, got {c_plan}")));
    }
    let log2_ratio = (n as f64 / epsilon).ln().powi(2);
    let raw = c_plan * m as f64 / log2_ratio;
    if !raw.is_finite() || raw.ceil() < 1.0 {
        return Err(SymError::EmptyPlan { m, n, epsilon });
    }
    Ok(raw.ceil() as u64)
}

/// Draws the visit plan: quotas are the histogram of
/// m' = ceil(c_plan * m / ln^2(n/eps)) i.i.d. Uniform[n] draws.
pub fn draw_visit_plan(
    m: usize,
    n: usize,
    epsilon: f64,
    c_plan: f64,
    seed: RngSeed,
) -> Result<VisitPlan, SymError> {
    draw_visit_plan_rng(m, n, epsilon, c_plan, &mut seed.rng())
}

/// Same, drawing from a caller-managed RNG.
pub fn draw_visit_plan_rng(
    m: usize,
    n: usize,
    epsilon: f64,
    c_plan: f64,
    rng: &mut impl Rng,
) -> Result<VisitPlan, SymError> {
    let total = plan_size(m, n, epsilon, c_plan)?;
    let mut quotas = vec![0u64; n];
    for _ in 0..total {
        quotas[rng.random_range(0..n)] += 1;
    }
    Ok(VisitPlan { quotas, total })
}

/// Scans the trajectory once; each time state s_t still owes samples, its
/// observed successor s_{t+1} is recorded. Incompleteness is a flag on the
/// result, not an error.
pub fn collect_edge_samples(w: &Trajectory, plan: &VisitPlan) -> Result<EdgeSampleSet, SymError> {
    let n = plan.quotas.len();
    if let Some(&bad) = w.states.iter().find(|&&s| s >= n) {
        return Err(SymError::StateOutOfRange { state: bad, n });
    }
    let mut samples: Vec<Vec<usize>> = plan
        .quotas
        .iter()
        .map(|&k| Vec::with_capacity(k.min(1024) as usize))
        .collect();
    let mut owed = plan.total;
    for (s, t) in w.transitions() {
        if owed == 0 {
            break;
        }
        if (samples[s].len() as u64) < plan.quotas[s] {
            samples[s].push(t);
            owed -= 1;
        }
    }
    Ok(EdgeSampleSet {
        samples,
        complete: owed == 0,
    })
}

/// The flattened chain: a distribution over n^2 cells with
/// q_(i,j) = Q_ij / n at index i*n + j.
pub fn flatten_chain(q: &StochasticMatrix) -> Vec<f64> {
    let n = q.n();
    let scale = 1.0 / n as f64;
    let mut flat = Vec::with_capacity(n * n);
    for i in 0..n {
        for &v in q.row(i) {
            flat.push(v * scale);
        }
    }
    flat
}

/// Uncalibrated fallback cutoff: the null statistic has variance near
/// 2|A|, so this approximates its 90th percentile (the same quantile the
/// calibration procedure targets by default).
fn fallback_tau(bucket_size: usize) -> f64 {
    1.2816 * (2.0 * bucket_size as f64).sqrt()
}

/// The pieces of the pooled identity statistic, exposed separately so the
/// calibration loop can record null draws without re-deciding thresholds.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IidStat {
    pub bucket_size: usize,
    pub out_of_bucket: u64,
    /// Sample mass on the heavy bucket.
    pub lambda: f64,
    /// Out-of-bucket allowance 2*lambda*eps^2/25.
    pub allowance: f64,
    /// The chi-squared-style statistic; None when the out-of-bucket check
    /// already rejected (no statistic is computed on that path).
    pub z: Option<f64>,
}

/// Computes the identity statistic of `iid_identity_test` without deciding.
pub fn iid_statistic(q: &[f64], samples: &[usize], epsilon: f64) -> Result<IidStat, SymError> {
    let s = q.len();
    if s == 0 {
        return Err(SymError::BadParams("reference distribution is empty".into()));
    }
    if !(epsilon > 0.0 && epsilon < 1.0) {
        return Err(SymError::BadParams(format!("epsilon must lie in (0,1), got {epsilon}")));
    }
    if samples.is_empty() {
        return Err(SymError::EmptySample);
    }
    if let Some(&bad) = samples.iter().find(|&&x| x >= s) {
        return Err(SymError::StateOutOfRange { state: bad, n: s });
    }

    let cut = epsilon * epsilon / (50.0 * s as f64);
    let mut counts = vec![0u64; s];
    for &x in samples {
        counts[x] += 1;
    }
    let mut bucket_size = 0usize;
    let mut out_of_bucket = 0u64;
    for i in 0..s {
        if q[i] >= cut {
            bucket_size += 1;
        } else {
            out_of_bucket += counts[i];
        }
    }
    let lambda = (samples.len() as u64 - out_of_bucket) as f64;
    let allowance = 2.0 * lambda * epsilon * epsilon / 25.0;
    if out_of_bucket as f64 > allowance {
        return Ok(IidStat {
            bucket_size,
            out_of_bucket,
            lambda,
            allowance,
            z: None,
        });
    }
    let mut z = 0.0;
    for i in 0..s {
        if q[i] >= cut {
            let expect = lambda * q[i];
            let x = counts[i] as f64;
            let d = x - expect;
            z += (d * d - x) / expect;
        }
    }
    Ok(IidStat {
        bucket_size,
        out_of_bucket,
        lambda,
        allowance,
        z: Some(z),
    })
}

/// Identity test for i.i.d. draws against a known distribution q over s
/// elements. Low-mass elements (q_i < eps^2 / (50 s)) are excluded from the
/// statistic; if more than 2*lambda*eps^2/25 samples land on them the test
/// rejects outright. Otherwise it computes
/// Z = sum_{i in A} ((X_i - lambda q_i)^2 - X_i) / (lambda q_i)
/// with lambda the sample mass on the bucket A, and rejects iff Z exceeds the
/// calibrated threshold for (s, eps, lambda).
pub fn iid_identity_test(
    q: &[f64],
    samples: &[usize],
    epsilon: f64,
    thresholds: &IidThresholds,
) -> Result<Verdict, SymError> {
    let stat = iid_statistic(q, samples, epsilon)?;
    let Some(z) = stat.z else {
        return Ok(Verdict {
            decision: Decision::Reject,
            statistic: Some(stat.out_of_bucket as f64),
            reason: Reason::IidTest,
            diagnostics: Diagnostics {
                bucket_size: Some(stat.bucket_size),
                out_of_bucket: Some(stat.out_of_bucket),
                threshold: Some(stat.allowance),
                ..Diagnostics::default()
            },
        });
    };
    let bucket_size = stat.bucket_size;
    let out_of_bucket = stat.out_of_bucket;
    let tau = thresholds
        .lookup(q.len(), epsilon, stat.lambda)
        .unwrap_or_else(|| fallback_tau(bucket_size));
    let decision = if z > tau {
        Decision::Reject
    } else {
        Decision::Accept
    };
    Ok(Verdict {
        decision,
        statistic: Some(z),
        reason: Reason::IidTest,
        diagnostics: Diagnostics {
            bucket_size: Some(bucket_size),
            out_of_bucket: Some(out_of_bucket),
            threshold: Some(tau),
            ..Diagnostics::default()
        },
    })
}

/// End-to-end tester: is the trajectory w a walk of the symmetric chain Q, or
/// of some chain at distance at least eps from it?
pub fn test_identity_symmetric(
    q: &StochasticMatrix,
    w: &Trajectory,
    epsilon: f64,
    seed: RngSeed,
    constants: &ConstantsProfile,
    thresholds: &IidThresholds,
) -> Result<Verdict, SymError> {
    if !q.is_symmetric(SYMMETRY_TOL) {
        let n = q.n();
        let mut defect = 0.0f64;
        for i in 0..n {
            for j in 0..i {
                defect = defect.max((q.get(i, j) - q.get(j, i)).abs());
            }
        }
        return Err(SymError::Asymmetric { defect });
    }
    let n = q.n();
    let m = w.steps();
    let plan = draw_visit_plan(m, n, epsilon, constants.c_plan, seed)?;
    let set = collect_edge_samples(w, &plan)?;
    if !set.complete {
        return Ok(Verdict {
            decision: Decision::Reject,
            statistic: None,
            reason: Reason::InsufficientVisits,
            diagnostics: Diagnostics {
                planned_samples: Some(plan.total as usize),
                collected_samples: Some(set.collected()),
                ..Diagnostics::default()
            },
        });
    }
    let flat = flatten_chain(q);
    let cells = set.pooled_cells(n);
    let mut verdict = iid_identity_test(&flat, &cells, epsilon, thresholds)?;
    verdict.diagnostics.planned_samples = Some(plan.total as usize);
    verdict.diagnostics.collected_samples = Some(set.collected());
    Ok(verdict)
}

/// Trajectory length that makes the visit plan fill up with good probability:
/// m = c_hit * H(Q) * ln(H(Q)+2) * ln^2(n/eps) + c_lin * (n/eps) * ln^2(n/eps).
/// Refuses reducible chains (infinite hitting time).
pub fn recommended_trajectory_length(
    q: &StochasticMatrix,
    epsilon: f64,
    constants: &ConstantsProfile,
) -> Result<usize, SymError> {
    if !(epsilon > 0.0 && epsilon < 1.0) {
        return Err(SymError::BadParams(format!("epsilon must lie in (0,1), got {epsilon}")));
    }
    let n = q.n();
    let h = hitting_time(q)?;
    let log2_ratio = (n as f64 / epsilon).ln().powi(2);
    let m = constants.c_hit * h * (h + 2.0).ln() * log2_ratio
        + constants.c_lin * (n as f64 / epsilon) * log2_ratio;
    if !m.is_finite() {
        return Err(SymError::BadParams("trajectory length overflowed".into()));
    }
    Ok(m.ceil() as usize)
}
