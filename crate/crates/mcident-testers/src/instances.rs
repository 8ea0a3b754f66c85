//! Hard-instance generators witnessing the testers' sample-cost floors.
//!
//! Both families follow the same recipe: pick a reference chain Q with a
//! highly symmetric transition structure, then hide independent random signs
//! in P that tilt probability mass between edges Q treats identically. Any
//! tester must localize enough of the signs to distinguish the two, which
//! costs a number of observations matching the upper bounds up to constants.
//!
//! Multi-edge constructions are realized in doubled simple-graph form: each
//! vertex that would carry parallel edges is split into two copies so every
//! (from, to) pair holds at most one probability. Collapsing the copies
//! recovers the original chain, and the collapse makes P and Q identical,
//! which is exactly what hides the signs from edge-blind statistics.

use crate::calibrate::{calibrate_chi2_edge, calibrate_symmetric};
use crate::profile::{ConstantsProfile, IidThresholds};
use crate::sparse::{chi2_edge_test, SparseChain, SparseError, SparseRow, Word};
use crate::symmetric::{test_identity_symmetric, SymError};
use mcident_core::{
    sample_trajectory_rng, MatrixError, RngSeed, SimError, Start, StateDistribution,
    StochasticMatrix,
};
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum InstanceError {
    #[error("bad instance parameters: {0}")]
    BadParams(String),
    #[error(transparent)]
    Matrix(#[from] MatrixError),
    #[error(transparent)]
    Sparse(#[from] SparseError),
    #[error(transparent)]
    Sym(#[from] SymError),
    #[error(transparent)]
    Sim(#[from] SimError),
}

/// Derives an independent child seed; distinct tags give streams that never
/// collide even when the child hands out its own sub-streams.
fn derive_seed(seed: RngSeed, tag: u64) -> RngSeed {
    let mut z = seed.0 ^ tag.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    RngSeed(z ^ (z >> 31))
}

/// A random member of the symmetric lower-bound family together with its
/// reference chain.
///
/// The base object is the complete graph on n vertices with doubled edges;
/// the doubled simple-graph form has 2n states, vertex i splitting into i
/// and i+n. Q walks it uniformly: every state has 2(n-1) neighbors of weight
/// 1/(2(n-1)), with no self loops and no edge between a vertex and its own
/// copy. P perturbs each base pair {i,j} by a sign sigma: the parallel edges
/// (i,j), (i',j') carry (1+sigma*x)/(2(n-1)) and the crossed edges (i,j'),
/// (i',j) carry (1-sigma*x)/(2(n-1)), where x = sqrt(8*epsilon). Collapsing
/// copies erases the signs, so P and Q have identical pair marginals.
#[derive(Debug, Clone)]
pub struct SymmetricHardInstance {
    pub p: StochasticMatrix,
    pub q: StochasticMatrix,
    pub epsilon: f64,
    /// One (i, j, sigma) per base pair i < j.
    pub signs: Vec<(usize, usize, i8)>,
}

impl SymmetricHardInstance {
    pub fn n_base(&self) -> usize {
        self.q.n() / 2
    }
}

/// Perron value of sqrt(P.Q) for every instance at this epsilon: the row
/// sums of the geometric-mean matrix are constant because
/// sqrt(1+sigma*x) + sqrt(1-sigma*x) does not depend on the sign, so the
/// all-ones vector is the Perron eigenvector.
pub fn symmetric_hard_radius(epsilon: f64) -> f64 {
    let x = (8.0 * epsilon).sqrt();
    ((1.0 + x).sqrt() + (1.0 - x).sqrt()) / 2.0
}

/// Draws an instance on 2n states. Requires n >= 3 and 0 <= epsilon < 1/8
/// (epsilon = 0 degenerates to P = Q; the distance guarantee needs
/// epsilon > 0).
pub fn symmetric_hard_instance(
    n: usize,
    epsilon: f64,
    seed: RngSeed,
) -> Result<SymmetricHardInstance, InstanceError> {
    if n < 3 {
        return Err(InstanceError::BadParams(format!(
            "need at least 3 base vertices, got {n}"
        )));
    }
    if !(epsilon >= 0.0 && epsilon < 0.125) {
        return Err(InstanceError::BadParams(format!(
            "epsilon must lie in [0, 1/8), got {epsilon}"
        )));
    }
    let x = (8.0 * epsilon).sqrt();
    let w = 1.0 / (2 * (n - 1)) as f64;
    let mut rng = seed.rng();
    let mut p = vec![vec![0.0; 2 * n]; 2 * n];
    let mut q = vec![vec![0.0; 2 * n]; 2 * n];
    let mut signs = Vec::with_capacity(n * (n - 1) / 2);
    for i in 0..n {
        for j in (i + 1)..n {
            let sigma: i8 = if rng.random::<bool>() { 1 } else { -1 };
            signs.push((i, j, sigma));
            let par = (1.0 + f64::from(sigma) * x) * w;
            let cross = (1.0 - f64::from(sigma) * x) * w;
            for (a, b, v) in [
                (i, j, par),
                (i + n, j + n, par),
                (i, j + n, cross),
                (i + n, j, cross),
            ] {
                p[a][b] = v;
                p[b][a] = v;
                q[a][b] = w;
                q[b][a] = w;
            }
        }
    }
    Ok(SymmetricHardInstance {
        p: StochasticMatrix::from_rows(p)?,
        q: StochasticMatrix::from_rows(q)?,
        epsilon,
        signs,
    })
}

/// A random member of the sparse lower-bound family.
///
/// The base object is a cycle of 2n positions alternating frequent and rare
/// vertices, walked once per round over T layers. Rare vertices carry a
/// doubled self transition at odd times; P tilts the two parallel copies by
/// (1 +- 4*epsilon*sigma)/2 while Q splits them evenly. A walk only sees a
/// sign when it pays the 2/n-per-step price of visiting a rare vertex, which
/// is what forces the Omega(n/eps^2) round count.
///
/// Doubled simple-graph form: one start state, n frequent states, and two
/// copies of each of the n rare states, 3n+1 in total. Layer 1 spreads the
/// start uniformly over frequent states; even layers let a frequent state
/// idle with probability 1-2/n or enter an adjacent rare vertex (always via
/// copy a) with probability 1/n each, while rare copies exit to their two
/// frequent neighbors; odd layers from 3 on hold frequent states and split
/// rare copy a between the two copies, which is where the signs live. A
/// final deterministic layer returns everything to the start, closing the
/// round without contributing any signal.
#[derive(Debug, Clone)]
pub struct SparseHardInstance {
    pub p: SparseChain,
    pub q: SparseChain,
    pub epsilon: f64,
    /// Number of frequent states (the family parameter n).
    pub n_frequent: usize,
    /// One (y, t, sigma) per rare vertex y and odd layer t >= 3.
    pub signs: Vec<(usize, usize, i8)>,
}

impl SparseHardInstance {
    /// States above the frequent block are rare copies.
    pub fn is_rare(&self, state: usize) -> bool {
        state > self.n_frequent
    }

    pub fn start(&self) -> usize {
        self.q.s0()
    }
}

fn sparse_hard_layers(n: usize, tilt: impl Fn(usize, usize) -> f64) -> Vec<Vec<SparseRow>> {
    let n_states = 3 * n + 1;
    let start = 0usize;
    let freq = |x: usize| 1 + x;
    let rare_a = |y: usize| 1 + n + 2 * y;
    let rare_b = |y: usize| 1 + n + 2 * y + 1;
    let mut layers = Vec::with_capacity(2 * n + 2);

    let mut entry = vec![Vec::new(); n_states];
    entry[start] = (0..n).map(|x| (freq(x), 1.0 / n as f64)).collect();
    layers.push(entry);

    for t in 2..=(2 * n + 1) {
        let mut layer = vec![Vec::new(); n_states];
        if t % 2 == 0 {
            for x in 0..n {
                layer[freq(x)] = vec![
                    (freq(x), 1.0 - 2.0 / n as f64),
                    (rare_a((x + n - 1) % n), 1.0 / n as f64),
                    (rare_a(x), 1.0 / n as f64),
                ];
            }
            for y in 0..n {
                let exits = vec![(freq(y), 0.5), (freq((y + 1) % n), 0.5)];
                layer[rare_a(y)] = exits.clone();
                layer[rare_b(y)] = exits;
            }
        } else {
            for x in 0..n {
                layer[freq(x)] = vec![(freq(x), 1.0)];
            }
            for y in 0..n {
                let d = tilt(y, t);
                layer[rare_a(y)] = vec![
                    (rare_a(y), (1.0 + d) / 2.0),
                    (rare_b(y), (1.0 - d) / 2.0),
                ];
            }
        }
        layers.push(layer);
    }

    layers.push(vec![vec![(start, 1.0)]; n_states]);
    layers
}

/// Draws an instance with n frequent states (3n+1 states, 2n+2 layers).
/// Requires n >= 3 and 0 <= epsilon < 1/4 (the tilted split must stay a
/// distribution; epsilon = 0 degenerates to P = Q).
pub fn sparse_hard_instance(
    n: usize,
    epsilon: f64,
    seed: RngSeed,
) -> Result<SparseHardInstance, InstanceError> {
    if n < 3 {
        return Err(InstanceError::BadParams(format!(
            "need at least 3 frequent states, got {n}"
        )));
    }
    if !(epsilon >= 0.0 && epsilon < 0.25) {
        return Err(InstanceError::BadParams(format!(
            "epsilon must lie in [0, 1/4), got {epsilon}"
        )));
    }
    let mut rng = seed.rng();
    let mut signs = Vec::with_capacity(n * n);
    for t in (3..=(2 * n + 1)).step_by(2) {
        for y in 0..n {
            let sigma: i8 = if rng.random::<bool>() { 1 } else { -1 };
            signs.push((y, t, sigma));
        }
    }
    let sign_of = |y: usize, t: usize| -> f64 {
        let idx = ((t - 3) / 2) * n + y;
        f64::from(signs[idx].2)
    };

    let n_states = 3 * n + 1;
    let n_param = 2 * n + 2;
    // The entry fan-out is the round's start distribution, not a transition
    // row; per-step sparsity beyond layer 1 is at most 3.
    let q =
        SparseChain::new(n_states, 0, n_param, sparse_hard_layers(n, |_, _| 0.0))?.with_k(3)?;
    let p = SparseChain::new(
        n_states,
        0,
        n_param,
        sparse_hard_layers(n, |y, t| 4.0 * epsilon * sign_of(y, t)),
    )?
    .with_k(3)?;
    Ok(SparseHardInstance {
        p,
        q,
        epsilon,
        n_frequent: n,
        signs,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HardFamily {
    Symmetric,
    Sparse,
}

/// One row of a power experiment: empirical error rates at trajectory or
/// round budget m.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct PowerPoint {
    pub m: usize,
    /// Fraction of null trials (data drawn from Q) the tester rejected.
    pub type_i: f64,
    /// Fraction of alternative trials (data drawn from a fresh P) the tester
    /// accepted.
    pub type_ii: f64,
    pub trials: usize,
}

/// Runs both arms of the identity test against a hard family over a grid of
/// sample budgets. For each m the rejection threshold is recalibrated from
/// max(500, trials) null simulations at the 90th percentile, then `trials`
/// null trials and `trials` alternative trials (a fresh sign draw each) are
/// scored. Default tester constants; every trial draws from its own RNG
/// stream, so results do not depend on thread scheduling.
pub fn power_curve(
    family: HardFamily,
    n: usize,
    epsilon: f64,
    m_grid: &[usize],
    trials: usize,
    seed: RngSeed,
) -> Result<Vec<PowerPoint>, InstanceError> {
    if m_grid.is_empty() {
        return Err(InstanceError::BadParams("empty m grid".into()));
    }
    if m_grid.windows(2).any(|w| w[1] <= w[0]) || m_grid[0] == 0 {
        return Err(InstanceError::BadParams(
            "m grid must be positive and strictly increasing".into(),
        ));
    }
    if trials == 0 {
        return Err(InstanceError::BadParams("need at least one trial".into()));
    }
    let calib_trials = trials.max(500);
    let quantile = 0.9;
    let mut out = Vec::with_capacity(m_grid.len());

    match family {
        HardFamily::Symmetric => {
            let q = symmetric_hard_instance(n, epsilon, derive_seed(seed, 0))?.q;
            let uniform = StateDistribution::uniform(q.n())?;
            let constants = ConstantsProfile::default();
            for (mi, &m) in m_grid.iter().enumerate() {
                let tag = (mi as u64 + 1) * 16;
                let (entry, _incomplete) = calibrate_symmetric(
                    &q,
                    m,
                    epsilon,
                    &constants,
                    calib_trials,
                    quantile,
                    derive_seed(seed, tag),
                )?;
                let thresholds = IidThresholds {
                    entries: vec![entry],
                };
                let null_walks = derive_seed(seed, tag + 1);
                let null_plans = derive_seed(seed, tag + 2);
                let alt_walks = derive_seed(seed, tag + 3);
                let alt_plans = derive_seed(seed, tag + 4);
                let alt_insts = derive_seed(seed, tag + 5);

                let null_rejects = (0..trials)
                    .into_par_iter()
                    .map(|trial| -> Result<bool, InstanceError> {
                        let mut rng = null_walks.stream_rng(trial as u64);
                        let w =
                            sample_trajectory_rng(&q, &Start::Dist(uniform.clone()), m, &mut rng)?;
                        let v = test_identity_symmetric(
                            &q,
                            &w,
                            epsilon,
                            derive_seed(null_plans, trial as u64),
                            &constants,
                            &thresholds,
                        )?;
                        Ok(v.is_reject())
                    })
                    .collect::<Result<Vec<_>, _>>()?
                    .into_iter()
                    .filter(|&r| r)
                    .count();

                let alt_accepts = (0..trials)
                    .into_par_iter()
                    .map(|trial| -> Result<bool, InstanceError> {
                        let inst =
                            symmetric_hard_instance(n, epsilon, derive_seed(alt_insts, trial as u64))?;
                        let mut rng = alt_walks.stream_rng(trial as u64);
                        let w = sample_trajectory_rng(
                            &inst.p,
                            &Start::Dist(uniform.clone()),
                            m,
                            &mut rng,
                        )?;
                        let v = test_identity_symmetric(
                            &q,
                            &w,
                            epsilon,
                            derive_seed(alt_plans, trial as u64),
                            &constants,
                            &thresholds,
                        )?;
                        Ok(v.is_accept())
                    })
                    .collect::<Result<Vec<_>, _>>()?
                    .into_iter()
                    .filter(|&a| a)
                    .count();

                out.push(PowerPoint {
                    m,
                    type_i: null_rejects as f64 / trials as f64,
                    type_ii: alt_accepts as f64 / trials as f64,
                    trials,
                });
            }
        }
        HardFamily::Sparse => {
            let q = sparse_hard_instance(n, epsilon, derive_seed(seed, 0))?.q;
            for (mi, &m) in m_grid.iter().enumerate() {
                let tag = (mi as u64 + 1) * 16;
                let m_f = m as f64;
                // Oversample far enough into the Poisson tail that the
                // tester never runs short of words.
                let n_words = (m_f + 8.0 * m_f.sqrt() + 20.0).ceil() as usize;
                let calibration = calibrate_chi2_edge(
                    &q,
                    m_f,
                    epsilon,
                    calib_trials,
                    quantile,
                    derive_seed(seed, tag),
                )?;
                let null_words = derive_seed(seed, tag + 1);
                let null_tests = derive_seed(seed, tag + 2);
                let alt_words = derive_seed(seed, tag + 3);
                let alt_tests = derive_seed(seed, tag + 4);
                let alt_insts = derive_seed(seed, tag + 5);

                let null_rejects = (0..trials)
                    .into_par_iter()
                    .map(|trial| -> Result<bool, InstanceError> {
                        let mut rng = null_words.stream_rng(trial as u64);
                        let words: Vec<Word> =
                            (0..n_words).map(|_| q.sample_round_rng(&mut rng)).collect();
                        let v = chi2_edge_test(
                            &q,
                            &words,
                            m_f,
                            epsilon,
                            derive_seed(null_tests, trial as u64),
                            Some(&calibration),
                        )?;
                        Ok(v.is_reject())
                    })
                    .collect::<Result<Vec<_>, _>>()?
                    .into_iter()
                    .filter(|&r| r)
                    .count();

                let alt_accepts = (0..trials)
                    .into_par_iter()
                    .map(|trial| -> Result<bool, InstanceError> {
                        let inst =
                            sparse_hard_instance(n, epsilon, derive_seed(alt_insts, trial as u64))?;
                        let mut rng = alt_words.stream_rng(trial as u64);
                        let words: Vec<Word> = (0..n_words)
                            .map(|_| inst.p.sample_round_rng(&mut rng))
                            .collect();
                        let v = chi2_edge_test(
                            &q,
                            &words,
                            m_f,
                            epsilon,
                            derive_seed(alt_tests, trial as u64),
                            Some(&calibration),
                        )?;
                        Ok(v.is_accept())
                    })
                    .collect::<Result<Vec<_>, _>>()?
                    .into_iter()
                    .filter(|&a| a)
                    .count();

                out.push(PowerPoint {
                    m,
                    type_i: null_rejects as f64 / trials as f64,
                    type_ii: alt_accepts as f64 / trials as f64,
                    trials,
                });
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sparse::dist_rounds_bruteforce;
    use approx::assert_abs_diff_eq;
    use mcident_core::{geometric_mean, spectral_radius, DEFAULT_SPECTRAL_TOL};

    #[test]
    fn symmetric_radius_matches_the_closed_form_for_every_seed() {
        for &n in &[3usize, 7, 20] {
            for s in 0..10u64 {
                let inst = symmetric_hard_instance(n, 0.05, RngSeed(s)).unwrap();
                let g = geometric_mean(&inst.p, &inst.q).unwrap();
                let rho = spectral_radius(g.as_square(), DEFAULT_SPECTRAL_TOL).unwrap();
                assert_abs_diff_eq!(rho, symmetric_hard_radius(0.05), epsilon = 1e-9);
            }
        }
    }

    #[test]
    fn symmetric_instance_is_symmetric_and_collapses_to_the_base_walk() {
        let n = 6;
        let inst = symmetric_hard_instance(n, 0.1, RngSeed(4)).unwrap();
        assert!(inst.p.is_symmetric(1e-12));
        assert!(inst.q.is_symmetric(1e-12));
        assert_eq!(inst.n_base(), n);
        let base_weight = 1.0 / (n - 1) as f64;
        for i in 0..n {
            for j in 0..n {
                if i == j {
                    assert_eq!(inst.p.get(i, j), 0.0);
                    assert_eq!(inst.p.get(i, j + n), 0.0);
                    continue;
                }
                // Collapsing copies j and j+n recovers the uniform walk on
                // the complete graph, so the signs vanish from pair marginals.
                let collapsed = inst.p.get(i, j) + inst.p.get(i, j + n);
                assert_abs_diff_eq!(collapsed, base_weight, epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn symmetric_instance_degenerates_at_zero_epsilon() {
        let inst = symmetric_hard_instance(4, 0.0, RngSeed(9)).unwrap();
        for i in 0..8 {
            for j in 0..8 {
                assert_eq!(inst.p.get(i, j), inst.q.get(i, j));
            }
        }
        assert_abs_diff_eq!(symmetric_hard_radius(0.0), 1.0, epsilon = 1e-15);
    }

    #[test]
    fn symmetric_instance_rejects_bad_parameters() {
        assert!(symmetric_hard_instance(2, 0.05, RngSeed(0)).is_err());
        assert!(symmetric_hard_instance(5, 0.125, RngSeed(0)).is_err());
        assert!(symmetric_hard_instance(5, -0.01, RngSeed(0)).is_err());
    }

    #[test]
    fn sparse_instance_has_the_doubled_shape() {
        let n = 4;
        let inst = sparse_hard_instance(n, 0.1, RngSeed(7)).unwrap();
        assert_eq!(inst.q.n_states(), 3 * n + 1);
        assert_eq!(inst.q.t_layers(), 2 * n + 2);
        assert_eq!(inst.q.k(), 3);
        assert_eq!(inst.q.n_param(), 2 * n + 2);
        assert_eq!(inst.signs.len(), n * n);
        let w = inst.q.sample_round(RngSeed(11));
        assert_eq!(w.len(), 2 * n + 3);
        assert_eq!(*w.last().unwrap(), inst.start());
    }

    #[test]
    fn sparse_tilts_cancel_under_collapse() {
        let n = 4;
        let inst = sparse_hard_instance(n, 0.2, RngSeed(3)).unwrap();
        for t in (3..=(2 * n + 1)).step_by(2) {
            for y in 0..n {
                let a = 1 + n + 2 * y;
                let total = inst.p.prob(t - 1, a, a) + inst.p.prob(t - 1, a, a + 1);
                assert_abs_diff_eq!(total, 1.0, epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn sparse_instance_degenerates_at_zero_epsilon() {
        let inst = sparse_hard_instance(3, 0.0, RngSeed(2)).unwrap();
        assert_eq!(inst.p.to_json(), inst.q.to_json());
    }

    #[test]
    fn sparse_instance_is_far_in_round_distance_for_tiny_n() {
        for s in 0..5u64 {
            let inst = sparse_hard_instance(3, 0.2, RngSeed(s)).unwrap();
            let tv = dist_rounds_bruteforce(&inst.p, &inst.q).unwrap();
            assert!(tv >= 0.2 - 1e-12, "seed {s}: round TV {tv} below epsilon");
        }
    }

    #[test]
    fn one_rare_excursion_per_round_is_common() {
        let n = 4;
        let inst = sparse_hard_instance(n, 0.1, RngSeed(13)).unwrap();
        let mut rng = RngSeed(17).rng();
        let trials = 20_000;
        let mut exactly_one = 0;
        for _ in 0..trials {
            let w = inst.q.sample_round_rng(&mut rng);
            let mut entries = 0;
            for t in 1..w.len() {
                if t % 2 == 0 && !inst.is_rare(w[t - 1]) && inst.is_rare(w[t]) {
                    entries += 1;
                }
            }
            if entries == 1 {
                exactly_one += 1;
            }
        }
        let rate = exactly_one as f64 / trials as f64;
        assert!(rate > 0.27, "rate {rate} not clear of 1/4");
    }

    #[test]
    fn power_curve_validates_its_grid() {
        let err = power_curve(HardFamily::Symmetric, 4, 0.1, &[100, 100], 10, RngSeed(0));
        assert!(matches!(err, Err(InstanceError::BadParams(_))));
        let err = power_curve(HardFamily::Symmetric, 4, 0.1, &[], 10, RngSeed(0));
        assert!(matches!(err, Err(InstanceError::BadParams(_))));
    }

    #[test]
    fn power_curve_is_deterministic_across_runs() {
        let points = power_curve(HardFamily::Sparse, 3, 0.2, &[120], 20, RngSeed(6)).unwrap();
        let again = power_curve(HardFamily::Sparse, 3, 0.2, &[120], 20, RngSeed(6)).unwrap();
        assert_eq!(points.len(), 1);
        assert_eq!(points[0].m, 120);
        assert_eq!(points[0].type_i, again[0].type_i);
        assert_eq!(points[0].type_ii, again[0].type_ii);
        assert!(points[0].type_i >= 0.0 && points[0].type_i <= 1.0);
        assert!(points[0].type_ii >= 0.0 && points[0].type_ii <= 1.0);
    }
}
