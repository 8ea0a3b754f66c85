//! Layered sparse chains and the edge-count identity test.
//!
//! A sparse chain runs in rounds: from the fixed start s0, one transition per
//! layer matrix P_1 ... P_T, with the final layer routing everything back to
//! s0. A sample is one round word s0 ... s_T. Identity testing compares the
//! per-edge traversal frequencies of observed words against the reference
//! chain's exact traversal probabilities, after pruning edges too rare to
//! count reliably.

use crate::profile::Chi2Calibration;
use crate::verdict::{Decision, Diagnostics, Reason, Verdict};
use mcident_core::{spectral_radius, RngSeed, SpectralError, SquareMatrix};
use rand::Rng;
use rand_distr::{Distribution, Poisson};
use serde::{Deserialize, Serialize};
use std::collections::HashMap;
use std::path::Path;
use thiserror::Error;

/// Reachable-row stochasticity tolerance.
pub const ROW_SUM_TOL: f64 = 1e-9;
/// Per-layer edge-probability sums must hit 1 this tightly.
pub const EDGE_SUM_TOL: f64 = 1e-12;
/// Word cap for brute-force enumeration of round distributions.
pub const BRUTEFORCE_PATH_GUARD: u128 = 10_000_000;
/// Size cap states*(T+1) for the block-cyclic spectral check.
pub const BLOCK_CYCLIC_GUARD: usize = 200;

#[derive(Debug, Error)]
pub enum SparseError {
    #[error("invalid sparse chain: {0}")]
    BadChain(String),
    #[error("chains do not share a shape: {0}")]
    ShapeMismatch(String),
    #[error("round-word count {paths} exceeds the brute-force guard {BRUTEFORCE_PATH_GUARD}")]
    PathGuard { paths: u128 },
    #[error("lifted size {size} exceeds the block-cyclic guard {BLOCK_CYCLIC_GUARD}")]
    SizeGuard { size: usize },
    #[error("edge table holds a nonpositive probability at layer {t}, edge {from}->{to}")]
    ZeroEdgeProb { t: usize, from: usize, to: usize },
    #[error("pruning emptied the row of state {state} in layer {t}")]
    RowLostAllMass { t: usize, state: usize },
    #[error("Poissonized subsample needs {need} words but only {have} are available")]
    InsufficientWords { need: u64, have: usize },
    #[error("bad word: {0}")]
    BadWord(String),
    #[error("bad parameters: {0}")]
    BadParams(String),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Spectral(#[from] SpectralError),
}

/// Sparse row: (column, probability) entries sorted by column.
pub type SparseRow = Vec<(usize, f64)>;

/// A round word s0 ... s_T.
pub type Word = Vec<usize>;

/// A chain given by T layer matrices over a common state set, started at s0,
/// with the final layer routing every present row back to s0.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "SparseChainJson", into = "SparseChainJson")]
pub struct SparseChain {
    n_states: usize,
    s0: usize,
    /// layers[t][state] = sparse row of P_{t+1}; empty rows are states the
    /// layer does not serve (must be unreachable at that time).
    layers: Vec<Vec<SparseRow>>,
    /// Sparsity parameter of the thresholds: max nonzeros per reachable row,
    /// unless a builder overrides it (grid chains record the repeating-layer
    /// bound 2 and exempt the entry layer, which is a start distribution).
    k: usize,
    /// The "n" the thresholds are stated in. Grid chains set the card count
    /// (= layer count - 1); generic chains the paper-normalized layer count.
    n_param: usize,
    /// States reachable from s0 after 0..=T layers.
    #[serde(skip)]
    reachable: Vec<Vec<usize>>,
}

#[derive(Serialize, Deserialize)]
struct SparseChainJson {
    n_states: usize,
    s0: usize,
    k: usize,
    n_param: usize,
    layers: Vec<Vec<SparseRow>>,
}

impl From<SparseChain> for SparseChainJson {
    fn from(c: SparseChain) -> Self {
        SparseChainJson {
            n_states: c.n_states,
            s0: c.s0,
            k: c.k,
            n_param: c.n_param,
            layers: c.layers,
        }
    }
}

impl TryFrom<SparseChainJson> for SparseChain {
    type Error = SparseError;
    fn try_from(j: SparseChainJson) -> Result<Self, SparseError> {
        let chain = SparseChain::new(j.n_states, j.s0, j.n_param, j.layers)?;
        chain.with_k(j.k)
    }
}

impl SparseChain {
    /// Validates and builds a chain. Every present row must be sorted-able,
    /// positive, in range, and duplicate-free; rows of reachable states must
    /// sum to 1; the final layer must send every present row to s0; and the
    /// round must end exactly at s0. The sparsity field k is computed as the
    /// max nonzero count over reachable rows.
    pub fn new(
        n_states: usize,
        s0: usize,
        n_param: usize,
        mut layers: Vec<Vec<SparseRow>>,
    ) -> Result<Self, SparseError> {
        if n_states == 0 {
            return Err(SparseError::BadChain("no states".into()));
        }
        if s0 >= n_states {
            return Err(SparseError::BadChain(format!(
                "start state {s0} out of range for {n_states} states"
            )));
        }
        if layers.is_empty() {
            return Err(SparseError::BadChain("no layers".into()));
        }
        if n_param == 0 {
            return Err(SparseError::BadChain("n_param must be positive".into()));
        }
        let t_layers = layers.len();
        for (t, layer) in layers.iter_mut().enumerate() {
            if layer.len() != n_states {
                return Err(SparseError::BadChain(format!(
                    "layer {} has {} rows, expected {n_states}",
                    t + 1,
                    layer.len()
                )));
            }
            for (i, row) in layer.iter_mut().enumerate() {
                row.sort_by_key(|&(col, _)| col);
                for &(col, p) in row.iter() {
                    if col >= n_states {
                        return Err(SparseError::BadChain(format!(
                            "layer {} row {i} targets state {col} out of range",
                            t + 1
                        )));
                    }
                    if !(p > 0.0) || !p.is_finite() {
                        return Err(SparseError::BadChain(format!(
                            "layer {} row {i} has nonpositive weight {p} on column {col}",
                            t + 1
                        )));
                    }
                }
                if row.windows(2).any(|w| w[0].0 == w[1].0) {
                    return Err(SparseError::BadChain(format!(
                        "layer {} row {i} repeats a column",
                        t + 1
                    )));
                }
                if t + 1 == t_layers && !row.is_empty() && (row.len() != 1 || row[0].0 != s0) {
                    return Err(SparseError::BadChain(format!(
                        "final layer row {i} must route all mass to s0={s0}"
                    )));
                }
            }
        }

        // Forward reachability from s0; reachable rows must be stochastic.
        let mut reachable = Vec::with_capacity(t_layers + 1);
        let mut cur = vec![s0];
        reachable.push(cur.clone());
        for (t, layer) in layers.iter().enumerate() {
            let mut next_mask = vec![false; n_states];
            for &i in &cur {
                let row = &layer[i];
                if row.is_empty() {
                    return Err(SparseError::BadChain(format!(
                        "layer {} is missing the row of reachable state {i}",
                        t + 1
                    )));
                }
                let sum: f64 = row.iter().map(|&(_, p)| p).sum();
                if (sum - 1.0).abs() > ROW_SUM_TOL {
                    return Err(SparseError::BadChain(format!(
                        "layer {} row {i} sums to {sum}, expected 1",
                        t + 1
                    )));
                }
                for &(col, _) in row {
                    next_mask[col] = true;
                }
            }
            cur = (0..n_states).filter(|&s| next_mask[s]).collect();
            reachable.push(cur.clone());
        }
        if cur != [s0] {
            return Err(SparseError::BadChain(format!(
                "round must end exactly at s0={s0}, ends at {cur:?}"
            )));
        }

        let mut k = 1usize;
        for (t, layer) in layers.iter().enumerate() {
            for &i in &reachable[t] {
                k = k.max(layer[i].len());
            }
        }
        Ok(SparseChain {
            n_states,
            s0,
            layers,
            k,
            n_param,
            reachable,
        })
    }

    /// Overrides the sparsity parameter recorded on the chain.
    pub fn with_k(mut self, k: usize) -> Result<Self, SparseError> {
        if k == 0 {
            return Err(SparseError::BadChain("k must be positive".into()));
        }
        self.k = k;
        Ok(self)
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    pub fn s0(&self) -> usize {
        self.s0
    }

    /// Number of layer matrices T (a round word has T+1 states).
    pub fn t_layers(&self) -> usize {
        self.layers.len()
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn n_param(&self) -> usize {
        self.n_param
    }

    /// Sparse row of layer t (0-based) for the given state.
    pub fn row(&self, t0: usize, state: usize) -> &[(usize, f64)] {
        &self.layers[t0][state]
    }

    /// States reachable from s0 after `time` layers (time 0 is {s0}).
    pub fn reachable_at(&self, time: usize) -> &[usize] {
        &self.reachable[time]
    }

    /// Probability of the transition state->to in layer t (0-based), 0 when
    /// the edge is absent.
    pub fn prob(&self, t0: usize, state: usize, to: usize) -> f64 {
        self.layers[t0][state]
            .iter()
            .find(|&&(col, _)| col == to)
            .map_or(0.0, |&(_, p)| p)
    }

    /// Samples one round word s0 ... s_T.
    pub fn sample_round(&self, seed: RngSeed) -> Word {
        self.sample_round_rng(&mut seed.rng())
    }

    pub fn sample_round_rng(&self, rng: &mut impl Rng) -> Word {
        let mut word = Vec::with_capacity(self.t_layers() + 1);
        let mut cur = self.s0;
        word.push(cur);
        for layer in &self.layers {
            cur = sample_sparse(&layer[cur], rng);
            word.push(cur);
        }
        word
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("chain serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, SparseError> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn from_path(path: &Path) -> Result<Self, SparseError> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}

fn sample_sparse(row: &[(usize, f64)], rng: &mut impl Rng) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for &(col, p) in row {
        acc += p;
        if u < acc {
            return col;
        }
    }
    row.last().expect("reachable rows are nonempty").0
}

/// One edge of the layered support with its traversal probability and an
/// observed-count slot. `t` is 1-based to match the layer matrices P_1..P_T.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EdgeEntry {
    pub t: usize,
    pub from: usize,
    pub to: usize,
    /// Probability a round word traverses this edge.
    pub q: f64,
    pub count: u64,
}

/// Per-edge traversal probabilities of a chain, sorted by (t, from, to).
/// For each layer the probabilities sum to 1: a round crosses every layer
/// exactly once.
#[derive(Debug, Clone, PartialEq)]
pub struct EdgeTable {
    pub t_layers: usize,
    pub entries: Vec<EdgeEntry>,
    index: HashMap<(usize, usize, usize), usize>,
}

impl EdgeTable {
    fn from_entries(t_layers: usize, entries: Vec<EdgeEntry>) -> Self {
        let index = entries
            .iter()
            .enumerate()
            .map(|(pos, e)| ((e.t, e.from, e.to), pos))
            .collect();
        EdgeTable {
            t_layers,
            entries,
            index,
        }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn lookup(&self, t: usize, from: usize, to: usize) -> Option<&EdgeEntry> {
        self.index.get(&(t, from, to)).map(|&pos| &self.entries[pos])
    }

    /// True iff every transition of the word is an edge of this table.
    pub fn covers(&self, word: &[usize]) -> bool {
        word.windows(2)
            .enumerate()
            .all(|(t0, w)| self.index.contains_key(&(t0 + 1, w[0], w[1])))
    }

    pub fn clear_counts(&mut self) {
        for e in &mut self.entries {
            e.count = 0;
        }
    }

    /// Adds each word's transitions to the edge counts. Errors on a
    /// transition outside the table (callers filter first).
    pub fn tally(&mut self, words: &[Word]) -> Result<(), SparseError> {
        for word in words {
            for (t0, w) in word.windows(2).enumerate() {
                let pos = self
                    .index
                    .get(&(t0 + 1, w[0], w[1]))
                    .copied()
                    .ok_or_else(|| {
                        SparseError::BadWord(format!(
                            "transition {}->{} at layer {} is not in the edge table",
                            w[0],
                            w[1],
                            t0 + 1
                        ))
                    })?;
                self.entries[pos].count += 1;
            }
        }
        Ok(())
    }

    /// Per-layer probability sums (all should be 1).
    pub fn layer_sums(&self) -> Vec<f64> {
        let mut sums = vec![0.0; self.t_layers];
        for e in &self.entries {
            sums[e.t - 1] += e.q;
        }
        sums
    }
}

/// Exact per-edge traversal probabilities: a forward pass of the state
/// distribution, q_e = mu_{t-1}(i) * P_t(i,j).
pub fn edge_probs(chain: &SparseChain) -> EdgeTable {
    let n = chain.n_states();
    let mut mu = vec![0.0; n];
    mu[chain.s0()] = 1.0;
    let mut entries = Vec::new();
    for t0 in 0..chain.t_layers() {
        let mut next = vec![0.0; n];
        for i in 0..n {
            if mu[i] <= 0.0 {
                continue;
            }
            for &(j, p) in chain.row(t0, i) {
                entries.push(EdgeEntry {
                    t: t0 + 1,
                    from: i,
                    to: j,
                    q: mu[i] * p,
                    count: 0,
                });
                next[j] += mu[i] * p;
            }
        }
        mu = next;
    }
    entries.sort_by_key(|e| (e.t, e.from, e.to));
    let table = EdgeTable::from_entries(chain.t_layers(), entries);
    debug_assert!(table
        .layer_sums()
        .iter()
        .all(|&s| (s - 1.0).abs() <= EDGE_SUM_TOL));
    table
}

fn check_shapes(p: &SparseChain, q: &SparseChain) -> Result<(), SparseError> {
    if p.n_states() != q.n_states() {
        return Err(SparseError::ShapeMismatch(format!(
            "{} vs {} states",
            p.n_states(),
            q.n_states()
        )));
    }
    if p.t_layers() != q.t_layers() {
        return Err(SparseError::ShapeMismatch(format!(
            "{} vs {} layers",
            p.t_layers(),
            q.t_layers()
        )));
    }
    if p.s0() != q.s0() {
        return Err(SparseError::ShapeMismatch(format!(
            "start {} vs {}",
            p.s0(),
            q.s0()
        )));
    }
    Ok(())
}

/// Squared Hellinger distance between the round-word distributions, by the
/// product formula: 1 - H^2 = e_{s0}^T G_1 ... G_T 1 with G_t = sqrt(P_t o Q_t)
/// entrywise, evaluated as T sparse vector-matrix products.
pub fn hellinger_sq_rounds(p: &SparseChain, q: &SparseChain) -> Result<f64, SparseError> {
    check_shapes(p, q)?;
    let n = p.n_states();
    let mut v = vec![0.0; n];
    v[p.s0()] = 1.0;
    for t0 in 0..p.t_layers() {
        let mut next = vec![0.0; n];
        for i in 0..n {
            if v[i] <= 0.0 {
                continue;
            }
            for &(j, pp) in p.row(t0, i) {
                let qq = q.prob(t0, i, j);
                if qq > 0.0 {
                    next[j] += v[i] * (pp * qq).sqrt();
                }
            }
        }
        v = next;
    }
    let bc: f64 = v.iter().sum();
    Ok((1.0 - bc).clamp(0.0, 1.0))
}

fn union_cols(a: &[(usize, f64)], b: &[(usize, f64)]) -> Vec<usize> {
    let mut cols: Vec<usize> = a.iter().chain(b.iter()).map(|&(c, _)| c).collect();
    cols.sort_unstable();
    cols.dedup();
    cols
}

/// Exact TV distance between the round-word distributions by enumerating the
/// union support. Guarded: errors when the union holds more than 10^7 words.
pub fn dist_rounds_bruteforce(p: &SparseChain, q: &SparseChain) -> Result<f64, SparseError> {
    check_shapes(p, q)?;
    let n = p.n_states();
    // Word-count guard over the union support (an upper bound: positivity of
    // a specific prefix may prune deeper branches in the walk below).
    let mut counts = vec![0u128; n];
    counts[p.s0()] = 1;
    for t0 in 0..p.t_layers() {
        let mut next = vec![0u128; n];
        for i in 0..n {
            if counts[i] == 0 {
                continue;
            }
            for j in union_cols(p.row(t0, i), q.row(t0, i)) {
                next[j] = next[j]
                    .checked_add(counts[i])
                    .ok_or(SparseError::PathGuard { paths: u128::MAX })?;
            }
        }
        counts = next;
        let mut total: u128 = 0;
        for &c in &counts {
            total = total
                .checked_add(c)
                .ok_or(SparseError::PathGuard { paths: u128::MAX })?;
        }
        if total > BRUTEFORCE_PATH_GUARD {
            return Err(SparseError::PathGuard { paths: total });
        }
    }

    fn walk(
        p: &SparseChain,
        q: &SparseChain,
        t0: usize,
        state: usize,
        pp: f64,
        qq: f64,
        acc: &mut f64,
    ) {
        if t0 == p.t_layers() {
            *acc += (pp - qq).abs();
            return;
        }
        let p_row: &[(usize, f64)] = if pp > 0.0 { p.row(t0, state) } else { &[] };
        let q_row: &[(usize, f64)] = if qq > 0.0 { q.row(t0, state) } else { &[] };
        for j in union_cols(p_row, q_row) {
            let pj = if pp > 0.0 { pp * p.prob(t0, state, j) } else { 0.0 };
            let qj = if qq > 0.0 { qq * q.prob(t0, state, j) } else { 0.0 };
            if pj > 0.0 || qj > 0.0 {
                walk(p, q, t0 + 1, j, pj, qj, acc);
            }
        }
    }

    let mut l1 = 0.0;
    walk(p, q, 0, p.s0(), 1.0, 1.0, &mut l1);
    Ok((l1 / 2.0).clamp(0.0, 1.0))
}

/// Block-cyclic consistency check: lifts both chains to the cyclic state
/// space (state, time mod T), takes the entrywise geometric mean, and returns
/// the T-th power of its spectral radius alongside 1 - hellinger_sq_rounds.
/// The two agree because the final layer funnels every cycle of the lift
/// through (s0, 0).
pub fn block_cyclic_check(p: &SparseChain, q: &SparseChain) -> Result<(f64, f64), SparseError> {
    check_shapes(p, q)?;
    let t_layers = p.t_layers();
    let size = p.n_states() * (t_layers + 1);
    if size > BLOCK_CYCLIC_GUARD {
        return Err(SparseError::SizeGuard { size });
    }
    let n = p.n_states();
    let dim = n * t_layers;
    let mut lift = SquareMatrix::zeros(dim).expect("guarded size is positive");
    for t0 in 0..t_layers {
        let t_next = (t0 + 1) % t_layers;
        for i in 0..n {
            for &(j, pp) in p.row(t0, i) {
                let qq = q.prob(t0, i, j);
                if qq > 0.0 {
                    lift.set(t0 * n + i, t_next * n + j, (pp * qq).sqrt());
                }
            }
        }
    }
    let rho = spectral_radius(&lift, 1e-12)?;
    let product_formula = 1.0 - hellinger_sq_rounds(p, q)?;
    Ok((rho.powi(t_layers as i32), product_formula))
}

/// Removes edges the reference chain crosses too rarely to test: while any
/// traversal probability sits below eps^2/(k n^2), delete the smallest one
/// (ties by (t, from, to)), renormalize its source row, and recompute.
/// Returns the pruned chain, its edge table, and the removed edges.
pub fn prune(
    q: &SparseChain,
    epsilon: f64,
    k: usize,
) -> Result<(SparseChain, EdgeTable, Vec<(usize, usize, usize)>), SparseError> {
    if !(epsilon > 0.0 && epsilon < 1.0) {
        return Err(SparseError::BadParams(format!(
            "epsilon must lie in (0,1), got {epsilon}"
        )));
    }
    if k == 0 {
        return Err(SparseError::BadParams("k must be positive".into()));
    }
    let n = q.n_param() as f64;
    let floor = epsilon * epsilon / (k as f64 * n * n);
    let mut chain = q.clone();
    let mut removed = Vec::new();
    loop {
        let table = edge_probs(&chain);
        let victim = table
            .entries
            .iter()
            .filter(|e| e.q < floor)
            .min_by(|a, b| {
                a.q.partial_cmp(&b.q)
                    .unwrap()
                    .then_with(|| (a.t, a.from, a.to).cmp(&(b.t, b.from, b.to)))
            })
            .map(|e| (e.t, e.from, e.to));
        let Some((t, from, to)) = victim else {
            return Ok((chain, table, removed));
        };
        let mut layers = chain.layers.clone();
        let row = &mut layers[t - 1][from];
        row.retain(|&(col, _)| col != to);
        if row.is_empty() {
            return Err(SparseError::RowLostAllMass { t, state: from });
        }
        let sum: f64 = row.iter().map(|&(_, p)| p).sum();
        for entry in row.iter_mut() {
            entry.1 /= sum;
        }
        chain = SparseChain::new(chain.n_states, chain.s0, chain.n_param, layers)?
            .with_k(chain.k)?;
        removed.push((t, from, to));
    }
}

/// Splits words into those fully inside the edge set and a count of the rest.
/// Callers reject when the count exceeds 2 m eps^2.
pub fn filter_samples(words: &[Word], edges: &EdgeTable) -> (Vec<Word>, u64) {
    let mut kept = Vec::with_capacity(words.len());
    let mut rejects = 0u64;
    for word in words {
        if edges.covers(word) {
            kept.push(word.clone());
        } else {
            rejects += 1;
        }
    }
    (kept, rejects)
}

/// The edge statistic Z = sum_e ((n_e - q_e m)^2 - n_e) / (q_e m), exactly as
/// written, no clamping. m is the Poissonized mean sample count.
pub fn chi2_edge_statistic(table: &EdgeTable, m: f64) -> Result<f64, SparseError> {
    if !(m > 0.0) {
        return Err(SparseError::BadParams(format!(
            "Poissonized mean must be positive, got {m}"
        )));
    }
    let mut z = 0.0;
    for e in &table.entries {
        if !(e.q > 0.0) {
            return Err(SparseError::ZeroEdgeProb {
                t: e.t,
                from: e.from,
                to: e.to,
            });
        }
        let expect = e.q * m;
        let d = e.count as f64 - expect;
        z += (d * d - e.count as f64) / expect;
    }
    Ok(z)
}

/// Literal acceptance threshold of the edge test.
pub fn chi2_threshold(k: usize, n_param: usize) -> f64 {
    2.0 * (k as f64).sqrt() * (n_param as f64).powf(1.5)
}

/// The edge identity test. Draws m' ~ Poisson(m) and keeps the first m'
/// words (erroring if too few are supplied; callers oversample), prunes the
/// reference chain at eps, rejects if too many words leave the pruned
/// support, and otherwise compares the edge statistic against
/// 2 sqrt(k) n^{3/2}, or a calibrated cutoff when one is given.
pub fn chi2_edge_test(
    q: &SparseChain,
    words: &[Word],
    m: f64,
    epsilon: f64,
    seed: RngSeed,
    calibration: Option<&Chi2Calibration>,
) -> Result<Verdict, SparseError> {
    if !(m > 0.0) || !m.is_finite() {
        return Err(SparseError::BadParams(format!(
            "expected sample count must be positive, got {m}"
        )));
    }
    if !(epsilon > 0.0 && epsilon < 1.0) {
        return Err(SparseError::BadParams(format!(
            "epsilon must lie in (0,1), got {epsilon}"
        )));
    }
    let round_len = q.t_layers() + 1;
    for word in words {
        if word.len() != round_len {
            return Err(SparseError::BadWord(format!(
                "word length {} does not match round length {round_len}",
                word.len()
            )));
        }
        if word[0] != q.s0() {
            return Err(SparseError::BadWord(format!(
                "word starts at {}, round starts at {}",
                word[0],
                q.s0()
            )));
        }
    }

    let mut rng = seed.rng();
    let poisson = Poisson::new(m).expect("positive finite mean");
    let m_prime = poisson.sample(&mut rng).round() as u64;
    if m_prime as usize > words.len() {
        return Err(SparseError::InsufficientWords {
            need: m_prime,
            have: words.len(),
        });
    }
    let subsample = &words[..m_prime as usize];

    let (_pruned, mut table, removed) = prune(q, epsilon, q.k())?;
    let (kept, reject_count) = filter_samples(subsample, &table);
    let filter_cut = 2.0 * m * epsilon * epsilon;
    let mut diagnostics = Diagnostics {
        subsample_words: Some(m_prime),
        filtered_words: Some(reject_count),
        pruned_edges: Some(removed.len()),
        ..Diagnostics::default()
    };
    if reject_count as f64 > filter_cut {
        diagnostics.threshold = Some(filter_cut);
        return Ok(Verdict {
            decision: Decision::Reject,
            statistic: Some(reject_count as f64),
            reason: Reason::Pruning,
            diagnostics,
        });
    }

    table.clear_counts();
    table.tally(&kept)?;
    let z = chi2_edge_statistic(&table, m)?;
    let tau = calibration.map_or_else(|| chi2_threshold(q.k(), q.n_param()), |c| c.tau);
    diagnostics.threshold = Some(tau);
    let decision = if z <= tau {
        Decision::Accept
    } else {
        Decision::Reject
    };
    Ok(Verdict {
        decision,
        statistic: Some(z),
        reason: Reason::Chi2,
        diagnostics,
    })
}
