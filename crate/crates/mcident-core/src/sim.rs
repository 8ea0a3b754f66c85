//! Trajectory sampling and the two chain time scales the testers budget
//! against: worst-case expected hitting time and total-variation mixing time.

use crate::matrix::{MatrixError, StateDistribution, StochasticMatrix};
use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Iteration cap for the mixing-time scan.
const MIXING_CAP: u64 = 1_000_000;

#[derive(Debug, Error)]
pub enum SimError {
    #[error(transparent)]
    Matrix(#[from] MatrixError),
    #[error("state {target} is unreachable from state {from}: expected hitting time is infinite")]
    Unreachable { target: usize, from: usize },
    #[error("hitting-time linear system is singular for target {target}")]
    SingularSystem { target: usize },
    #[error("not a stationary distribution: |πᵀP − πᵀ|∞ = {defect}")]
    NotStationary { defect: f64 },
    #[error("mixing time exceeds the {MIXING_CAP} step cap")]
    MixingCapExceeded,
}

/// Root seed for an experiment. Trials derive independent streams from the
/// same root, so results are identical whether trials run serially or in
/// parallel.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RngSeed(pub u64);

impl RngSeed {
    pub fn rng(self) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(self.0)
    }

    /// Stream `stream` of this root seed. Streams with different indices are
    /// independent; the same (seed, stream) pair always yields the same
    /// draws.
    pub fn stream_rng(self, stream: u64) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.0);
        rng.set_stream(stream);
        rng
    }
}

/// Where a trajectory starts.
#[derive(Debug, Clone)]
pub enum Start {
    State(usize),
    Dist(StateDistribution),
}

/// A sampled path s₀, s₁, …; `states.len()` is the number of steps plus one.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Trajectory {
    pub states: Vec<usize>,
}

impl Trajectory {
    pub fn steps(&self) -> usize {
        self.states.len().saturating_sub(1)
    }

    /// Consecutive (from, to) transitions.
    pub fn transitions(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.states.windows(2).map(|w| (w[0], w[1]))
    }
}

/// Draws an index from an unnormalized-but-close categorical mass vector.
pub fn sample_index(mass: &[f64], rng: &mut impl Rng) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    let mut last_positive = 0;
    for (i, &w) in mass.iter().enumerate() {
        if w > 0.0 {
            last_positive = i;
            acc += w;
            if u < acc {
                return i;
            }
        }
    }
    // Row sums can fall a hair under 1 in floating point; land on the last
    // state with positive mass rather than off the support.
    last_positive
}

/// Samples an m-step trajectory (m + 1 states) with a fresh RNG for `seed`.
pub fn sample_trajectory(
    p: &StochasticMatrix,
    start: &Start,
    steps: usize,
    seed: RngSeed,
) -> Result<Trajectory, SimError> {
    sample_trajectory_rng(p, start, steps, &mut seed.rng())
}

/// Same, drawing from a caller-managed RNG (for multi-trial experiments that
/// hand each trial its own stream).
pub fn sample_trajectory_rng(
    p: &StochasticMatrix,
    start: &Start,
    steps: usize,
    rng: &mut impl Rng,
) -> Result<Trajectory, SimError> {
    let n = p.n();
    let s0 = match start {
        Start::State(s) => {
            if *s >= n {
                return Err(MatrixError::StateOutOfRange { state: *s, n }.into());
            }
            *s
        }
        Start::Dist(d) => {
            if d.n() != n {
                return Err(MatrixError::DimensionMismatch {
                    left: n,
                    right: d.n(),
                }
                .into());
            }
            sample_index(d.mass(), rng)
        }
    };
    let mut states = Vec::with_capacity(steps + 1);
    states.push(s0);
    let mut cur = s0;
    for _ in 0..steps {
        cur = sample_index(p.row(cur), rng);
        states.push(cur);
    }
    Ok(Trajectory { states })
}

/// Worst-case expected hitting time max_{r,s} E_s[min{t ≥ 0 : s_t = r}].
///
/// For each target r the expected times h from every other state solve
/// (I − P₋ᵣ)h = 𝟙 where P₋ᵣ drops row and column r. Reachability is checked
/// first (reverse reachability from r); an unreachable pair is an error, not
/// a large number.
pub fn hitting_time(p: &StochasticMatrix) -> Result<f64, SimError> {
    let n = p.n();
    if n == 1 {
        return Ok(0.0);
    }
    let mut worst = 0.0f64;
    for target in 0..n {
        // States that can reach `target`, by BFS over reversed edges.
        let mut can_reach = vec![false; n];
        can_reach[target] = true;
        let mut queue = vec![target];
        while let Some(v) = queue.pop() {
            for u in 0..n {
                if !can_reach[u] && p.get(u, v) > 0.0 {
                    can_reach[u] = true;
                    queue.push(u);
                }
            }
        }
        if let Some(from) = (0..n).find(|&u| !can_reach[u]) {
            return Err(SimError::Unreachable { target, from });
        }

        let others: Vec<usize> = (0..n).filter(|&s| s != target).collect();
        let m = others.len();
        let a = DMatrix::from_fn(m, m, |i, j| {
            let delta = if i == j { 1.0 } else { 0.0 };
            delta - p.get(others[i], others[j])
        });
        let b = DVector::from_element(m, 1.0);
        let h = a
            .lu()
            .solve(&b)
            .ok_or(SimError::SingularSystem { target })?;
        for &v in h.iter() {
            worst = worst.max(v);
        }
    }
    Ok(worst)
}

/// Total-variation mixing time to within 1/4: the least t with
/// max_s ‖(Pᵗ)ᵀe_s − π‖₁ ≤ 1/4, maximized over point starts.
///
/// `pi` must be stationary for `p` (checked to 1e-9). A chain that reaches a
/// Pᵗ⁺¹ = Pᵗ fixpoint while still unmixed (periodic or with the wrong π)
/// fails fast instead of walking to the cap.
pub fn mixing_time(p: &StochasticMatrix, pi: &StateDistribution) -> Result<u64, SimError> {
    let n = p.n();
    if pi.n() != n {
        return Err(MatrixError::DimensionMismatch {
            left: n,
            right: pi.n(),
        }
        .into());
    }
    let step = pi.mass().to_vec();
    let step = p.as_square().vec_mat(&step);
    let defect = step
        .iter()
        .zip(pi.mass())
        .fold(0.0f64, |a, (&x, &y)| a.max((x - y).abs()));
    if defect > 1e-9 {
        return Err(SimError::NotStationary { defect });
    }

    // power[s] is row s of Pᵗ, i.e. the law of s_t from the point start s.
    let worst_tv = |power: &[Vec<f64>]| -> f64 {
        power
            .iter()
            .map(|row| {
                row.iter()
                    .zip(pi.mass())
                    .map(|(&x, &y)| (x - y).abs())
                    .sum::<f64>()
                    / 2.0
            })
            .fold(0.0, f64::max)
    };
    let advance = |power: &[Vec<f64>]| -> Vec<Vec<f64>> {
        power.iter().map(|row| p.as_square().vec_mat(row)).collect()
    };

    let mut power: Vec<Vec<f64>> = (0..n)
        .map(|s| {
            let mut e = vec![0.0; n];
            e[s] = 1.0;
            e
        })
        .collect();
    for t in 0..=MIXING_CAP {
        if worst_tv(&power) <= 0.25 {
            return Ok(t);
        }
        let next = advance(&power);
        if next == power {
            // Fixpoint while unmixed: no later power changes anything.
            return Err(SimError::MixingCapExceeded);
        }
        power = next;
    }
    Err(SimError::MixingCapExceeded)
}
