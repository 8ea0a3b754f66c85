//! Distances between chains: the scale-free spectral distance, Hellinger
//! distance of ℓ-step word distributions, an exact enumeration oracle, and
//! the minimal distinguishing length.
//!
//! Conventions. A length-ℓ word is s₀s₁…s_ℓ (ℓ transitions). For word
//! distributions W_P^ℓ and W_Q^ℓ started from p and q,
//!
//!   1 − H²(W_P^ℓ, W_Q^ℓ) = √(p∘q)ᵀ · (√(P∘Q))^ℓ · 𝟙,
//!
//! evaluated with repeated vector–matrix products; the matrix power is never
//! formed. √(P∘Q) has row sums ≤ 1, so the similarity 1 − H² is nonincreasing
//! in ℓ, which is what makes the length search below a plain binary search.
//! TV and Hellinger sandwich each other: √2·H ≥ TV ≥ H².

use crate::geom::{geometric_mean, GeomMeanMatrix};
use crate::matrix::{check_same_n, MatrixError, StateDistribution, StochasticMatrix};
use crate::spectral::{spectral_radius, SpectralError, DEFAULT_SPECTRAL_TOL};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Word-count guard for exact enumeration.
const BRUTEFORCE_GUARD: u128 = 10_000_000;

/// Length cap for the distinguishing-length search.
const LENGTH_CAP: u64 = 100_000_000;

/// ρ this close to 1 means the chains share an essential class and no finite
/// length separates them.
const NO_FINITE_LENGTH_RHO: f64 = 1.0 - 1e-12;

#[derive(Debug, Error)]
pub enum DistanceError {
    #[error(transparent)]
    Matrix(#[from] MatrixError),
    #[error(transparent)]
    Spectral(#[from] SpectralError),
    #[error("state space too large to enumerate: n^ℓ = {words} words exceeds {BRUTEFORCE_GUARD}")]
    EnumerationGuard { words: u128 },
    #[error("threshold {0} outside (0, 1)")]
    BadThreshold(f64),
    #[error("no finite distinguishing length: ρ(√(P∘Q)) = 1 (shared essential class)")]
    NoFiniteLength,
    #[error("distinguishing length exceeds the {LENGTH_CAP} cap")]
    LengthCapExceeded,
}

/// Scale-free distance 1 − ρ(√(P∘Q)) ∈ [0, 1].
pub fn chain_distance(p: &StochasticMatrix, q: &StochasticMatrix) -> Result<f64, DistanceError> {
    let g = geometric_mean(p, q)?;
    let rho = spectral_radius(g.as_square(), DEFAULT_SPECTRAL_TOL)?;
    Ok((1.0 - rho).clamp(0.0, 1.0))
}

/// H² of the two ℓ-step word distributions with starts p and q.
pub fn hellinger_sq_words(
    pm: &StochasticMatrix,
    qm: &StochasticMatrix,
    p: &StateDistribution,
    q: &StateDistribution,
    len: u64,
) -> Result<f64, DistanceError> {
    check_same_n(pm.n(), qm.n())?;
    check_same_n(pm.n(), p.n())?;
    check_same_n(pm.n(), q.n())?;
    let g = geometric_mean(pm, qm)?;
    let mut v: Vec<f64> = p
        .mass()
        .iter()
        .zip(q.mass())
        .map(|(&a, &b)| (a * b).sqrt())
        .collect();
    for _ in 0..len {
        v = g.as_square().vec_mat(&v);
    }
    let bc: f64 = v.iter().sum();
    Ok((1.0 - bc).clamp(0.0, 1.0))
}

/// How the word distributions were started.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StartSpec {
    /// Both chains started from this state.
    State(usize),
    /// Both chains started from this common distribution.
    Distribution(Vec<f64>),
}

/// Distances between two ℓ-step word distributions.
///
/// `tv_lower`/`tv_upper` are the Hellinger sandwich bounds TV ≥ H² and
/// TV ≤ √2·H (clipped to 1); `tv_exact` is filled by the enumeration oracle
/// and must land inside them.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct WordDistanceReport {
    pub length: u64,
    pub hellinger_sq: f64,
    pub tv_lower: f64,
    pub tv_upper: f64,
    pub tv_exact: Option<f64>,
    pub start: StartSpec,
}

impl WordDistanceReport {
    fn from_hellinger(length: u64, hellinger_sq: f64, start: StartSpec) -> Self {
        Self {
            length,
            hellinger_sq,
            tv_lower: hellinger_sq,
            tv_upper: (2.0 * hellinger_sq).sqrt().min(1.0),
            tv_exact: None,
            start,
        }
    }
}

/// Exact TV and H² of the ℓ-step word distributions from a common start
/// state, by enumerating every word.
pub fn word_distances_bruteforce(
    pm: &StochasticMatrix,
    qm: &StochasticMatrix,
    s0: usize,
    len: u32,
) -> Result<WordDistanceReport, DistanceError> {
    let n = pm.n();
    if s0 >= n {
        return Err(MatrixError::StateOutOfRange { state: s0, n }.into());
    }
    let point = StateDistribution::point(n, s0)?;
    let mut report = word_distances_bruteforce_from(pm, qm, &point, &point, len)?;
    report.start = StartSpec::State(s0);
    Ok(report)
}

/// Enumeration oracle over arbitrary (possibly different) start
/// distributions.
pub fn word_distances_bruteforce_from(
    pm: &StochasticMatrix,
    qm: &StochasticMatrix,
    p: &StateDistribution,
    q: &StateDistribution,
    len: u32,
) -> Result<WordDistanceReport, DistanceError> {
    check_same_n(pm.n(), qm.n())?;
    check_same_n(pm.n(), p.n())?;
    check_same_n(pm.n(), q.n())?;
    let words = (pm.n() as u128)
        .checked_pow(len)
        .unwrap_or(u128::MAX);
    if words > BRUTEFORCE_GUARD {
        return Err(DistanceError::EnumerationGuard { words });
    }

    // DFS over the union support; words outside it have probability zero
    // under both chains and contribute nothing.
    struct Acc {
        l1: f64,
        bc: f64,
    }
    fn descend(
        pm: &StochasticMatrix,
        qm: &StochasticMatrix,
        state: usize,
        pr_p: f64,
        pr_q: f64,
        remaining: u32,
        acc: &mut Acc,
    ) {
        if remaining == 0 {
            acc.l1 += (pr_p - pr_q).abs();
            acc.bc += (pr_p * pr_q).sqrt();
            return;
        }
        for next in 0..pm.n() {
            let tp = pr_p * pm.get(state, next);
            let tq = pr_q * qm.get(state, next);
            if tp > 0.0 || tq > 0.0 {
                descend(pm, qm, next, tp, tq, remaining - 1, acc);
            }
        }
    }

    let mut acc = Acc { l1: 0.0, bc: 0.0 };
    for s0 in 0..pm.n() {
        let (a, b) = (p.get(s0), q.get(s0));
        if a > 0.0 || b > 0.0 {
            descend(pm, qm, s0, a, b, len, &mut acc);
        }
    }
    let hellinger_sq = (1.0 - acc.bc).clamp(0.0, 1.0);
    let mut report = WordDistanceReport::from_hellinger(
        len as u64,
        hellinger_sq,
        StartSpec::Distribution(p.mass().to_vec()),
    );
    report.tv_exact = Some((acc.l1 / 2.0).clamp(0.0, 1.0));
    Ok(report)
}

/// Start mode for the distinguishing-length search.
#[derive(Debug, Clone)]
pub enum StartMode {
    /// Maximize over all point-mass starts: the length must work from every
    /// state.
    Worst,
    /// Both chains start from this common distribution.
    Average(StateDistribution),
}

/// Interval answer for the TV-based length definition: TV ≥ t is possible
/// from `lo` on (√2·H reaches t) and guaranteed from `hi` on (H² reaches t).
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct LengthInterval {
    pub lo: u64,
    pub hi: u64,
}

/// Walks the similarity 1 − H²(ℓ) forward in ℓ for one start mode.
///
/// Worst mode tracks w = Gˡ𝟙, whose s-th entry is the similarity from the
/// point start s (√(e_s ∘ e_s) = e_s); average mode tracks vᵀ = √(p∘p)ᵀGˡ.
struct SimilarityWalker<'a> {
    g: &'a GeomMeanMatrix,
    vec: Vec<f64>,
    worst: bool,
}

impl<'a> SimilarityWalker<'a> {
    fn new(g: &'a GeomMeanMatrix, mode: &StartMode) -> Self {
        match mode {
            StartMode::Worst => Self {
                g,
                vec: vec![1.0; g.n()],
                worst: true,
            },
            StartMode::Average(p) => Self {
                g,
                vec: p.mass().to_vec(),
                worst: false,
            },
        }
    }

    fn step(&mut self) {
        self.vec = if self.worst {
            self.g.as_square().mat_vec(&self.vec)
        } else {
            self.g.as_square().vec_mat(&self.vec)
        };
    }

    fn similarity(&self) -> f64 {
        if self.worst {
            self.vec.iter().fold(0.0f64, |a, &v| a.max(v))
        } else {
            self.vec.iter().sum()
        }
    }
}

/// Smallest ℓ with 1 − H²(W_P^ℓ, W_Q^ℓ) ≤ threshold, for all point starts
/// (worst mode) or the given common start (average mode).
pub fn minimal_distinguishing_length(
    pm: &StochasticMatrix,
    qm: &StochasticMatrix,
    mode: &StartMode,
    threshold: f64,
) -> Result<u64, DistanceError> {
    if !(threshold > 0.0 && threshold < 1.0) {
        return Err(DistanceError::BadThreshold(threshold));
    }
    check_same_n(pm.n(), qm.n())?;
    if let StartMode::Average(p) = mode {
        check_same_n(pm.n(), p.n())?;
    }
    let g = geometric_mean(pm, qm)?;
    let rho = spectral_radius(g.as_square(), DEFAULT_SPECTRAL_TOL)?;
    if rho >= NO_FINITE_LENGTH_RHO {
        return Err(DistanceError::NoFiniteLength);
    }
    first_length_below(&g, mode, threshold)
}

/// TV-based variant: for a TV threshold t, the sandwich turns "TV ≥ t" into
/// an interval of candidate lengths rather than a single integer.
pub fn minimal_distinguishing_length_tv(
    pm: &StochasticMatrix,
    qm: &StochasticMatrix,
    mode: &StartMode,
    tv_threshold: f64,
) -> Result<LengthInterval, DistanceError> {
    if !(tv_threshold > 0.0 && tv_threshold < 1.0) {
        return Err(DistanceError::BadThreshold(tv_threshold));
    }
    check_same_n(pm.n(), qm.n())?;
    let g = geometric_mean(pm, qm)?;
    let rho = spectral_radius(g.as_square(), DEFAULT_SPECTRAL_TOL)?;
    if rho >= NO_FINITE_LENGTH_RHO {
        return Err(DistanceError::NoFiniteLength);
    }
    // TV ≥ t needs √(2·H²) ≥ t, i.e. similarity ≤ 1 − t²/2; it is implied by
    // H² ≥ t, i.e. similarity ≤ 1 − t.
    let lo = first_length_below(&g, mode, 1.0 - tv_threshold * tv_threshold / 2.0)?;
    let hi = first_length_below(&g, mode, 1.0 - tv_threshold)?;
    Ok(LengthInterval { lo, hi })
}

/// First ℓ with similarity(ℓ) ≤ threshold: doubling probe, then binary
/// search, stepping the walker incrementally from saved checkpoints.
fn first_length_below(
    g: &GeomMeanMatrix,
    mode: &StartMode,
    threshold: f64,
) -> Result<u64, DistanceError> {
    let mut walker = SimilarityWalker::new(g, mode);
    if walker.similarity() <= threshold {
        return Ok(0);
    }
    // Doubling phase: find the first probe with similarity below threshold.
    let mut lo: u64 = 0;
    let mut lo_vec = walker.vec.clone();
    let mut probe: u64 = 1;
    let mut at: u64 = 0;
    let hi = loop {
        while at < probe {
            walker.step();
            at += 1;
        }
        if walker.similarity() <= threshold {
            break probe;
        }
        lo = probe;
        lo_vec.clone_from(&walker.vec);
        if probe > LENGTH_CAP {
            return Err(DistanceError::LengthCapExceeded);
        }
        probe *= 2;
    };
    // Binary search in (lo, hi]: similarity is monotone nonincreasing in ℓ.
    let mut lo = lo;
    let mut hi = hi;
    while hi - lo > 1 {
        let mid = lo + (hi - lo) / 2;
        walker.vec.clone_from(&lo_vec);
        for _ in lo..mid {
            walker.step();
        }
        if walker.similarity() <= threshold {
            hi = mid;
        } else {
            lo = mid;
            lo_vec.clone_from(&walker.vec);
        }
    }
    Ok(hi)
}
