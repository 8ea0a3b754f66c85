//! Riffle-shuffle models and their grid-chain projection.
//!
//! A riffle is parameterized by the cut distribution and, for residual pile
//! sizes (a, b), the probability the next card drops from the left pile.
//! Forgetting card identities, one shuffle is a walk on the grid of pile
//! sizes: cut to (c, n-c), then step down to (0, 0) one card at a time. That
//! walk is exactly one round of a sparse layered chain, which is what the
//! edge tester consumes.
//!
//! Deck convention: decks are read top to bottom, the cut takes the top c
//! cards as the left pile, and drops come off pile bottoms onto the top of
//! the already-dropped stack. The first card dropped therefore ends up at
//! the bottom of the result, i.e. the result read bottom-to-top is the drop
//! order.

use crate::sparse::{SparseChain, SparseError, Word};
use mcident_core::RngSeed;
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ShuffleError {
    #[error("invalid shuffle model: {0}")]
    BadModel(String),
    #[error("invalid deck: {0}")]
    BadDeck(String),
    #[error("the after-deck is not a riffle of the before-deck")]
    NotARiffle,
    #[error("invalid grid path: {0}")]
    BadPath(String),
    #[error(transparent)]
    Sparse(#[from] SparseError),
}

/// A riffle-shuffle model: cut distribution plus the left-drop probability
/// for every residual pile-size pair, stored as a triangular table
/// drop_left[a][b] for a + b <= n_cards.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ShuffleModelJson", into = "ShuffleModelJson")]
pub struct ShuffleModel {
    n_cards: usize,
    cut_mass: Vec<f64>,
    drop_left: Vec<Vec<f64>>,
}

#[derive(Serialize, Deserialize)]
struct ShuffleModelJson {
    n_cards: usize,
    cut_mass: Vec<f64>,
    drop_left: Vec<Vec<f64>>,
}

impl From<ShuffleModel> for ShuffleModelJson {
    fn from(m: ShuffleModel) -> Self {
        ShuffleModelJson {
            n_cards: m.n_cards,
            cut_mass: m.cut_mass,
            drop_left: m.drop_left,
        }
    }
}

impl TryFrom<ShuffleModelJson> for ShuffleModel {
    type Error = ShuffleError;
    fn try_from(j: ShuffleModelJson) -> Result<Self, ShuffleError> {
        ShuffleModel::new(j.n_cards, j.cut_mass, j.drop_left)
    }
}

impl ShuffleModel {
    /// Validates the model: cut_mass a distribution over 0..=n cuts, and the
    /// drop table triangular with forced moves exact (drop_left(a,0)=1 for
    /// a>0, drop_left(0,b)=0 for b>0).
    pub fn new(
        n_cards: usize,
        cut_mass: Vec<f64>,
        drop_left: Vec<Vec<f64>>,
    ) -> Result<Self, ShuffleError> {
        if n_cards == 0 {
            return Err(ShuffleError::BadModel("need at least one card".into()));
        }
        if cut_mass.len() != n_cards + 1 {
            return Err(ShuffleError::BadModel(format!(
                "cut_mass has {} entries, expected {}",
                cut_mass.len(),
                n_cards + 1
            )));
        }
        if cut_mass.iter().any(|&p| !(0.0..=1.0).contains(&p) || !p.is_finite()) {
            return Err(ShuffleError::BadModel("cut_mass entries must lie in [0,1]".into()));
        }
        let total: f64 = cut_mass.iter().sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(ShuffleError::BadModel(format!("cut_mass sums to {total}, expected 1")));
        }
        if drop_left.len() != n_cards + 1 {
            return Err(ShuffleError::BadModel(format!(
                "drop_left has {} rows, expected {}",
                drop_left.len(),
                n_cards + 1
            )));
        }
        for (a, row) in drop_left.iter().enumerate() {
            if row.len() != n_cards + 1 - a {
                return Err(ShuffleError::BadModel(format!(
                    "drop_left row {a} has {} entries, expected {}",
                    row.len(),
                    n_cards + 1 - a
                )));
            }
            for (b, &p) in row.iter().enumerate() {
                if !(0.0..=1.0).contains(&p) || !p.is_finite() {
                    return Err(ShuffleError::BadModel(format!(
                        "drop_left({a},{b}) = {p} out of [0,1]"
                    )));
                }
                if a > 0 && b == 0 && p != 1.0 {
                    return Err(ShuffleError::BadModel(format!(
                        "drop_left({a},0) must be 1 (forced left drop), got {p}"
                    )));
                }
                if a == 0 && b > 0 && p != 0.0 {
                    return Err(ShuffleError::BadModel(format!(
                        "drop_left(0,{b}) must be 0 (forced right drop), got {p}"
                    )));
                }
            }
        }
        Ok(ShuffleModel {
            n_cards,
            cut_mass,
            drop_left,
        })
    }

    /// Builds the drop table from a rule; forced moves are filled in.
    pub fn from_rule(
        n_cards: usize,
        cut_mass: Vec<f64>,
        rule: impl Fn(usize, usize) -> f64,
    ) -> Result<Self, ShuffleError> {
        let mut table = Vec::with_capacity(n_cards + 1);
        for a in 0..=n_cards {
            let mut row = Vec::with_capacity(n_cards + 1 - a);
            for b in 0..=(n_cards - a) {
                let p = if b == 0 {
                    if a > 0 {
                        1.0
                    } else {
                        0.0
                    }
                } else if a == 0 {
                    0.0
                } else {
                    rule(a, b)
                };
                row.push(p);
            }
            table.push(row);
        }
        ShuffleModel::new(n_cards, cut_mass, table)
    }

    pub fn n_cards(&self) -> usize {
        self.n_cards
    }

    pub fn cut_mass(&self) -> &[f64] {
        &self.cut_mass
    }

    /// Probability the next drop comes from the left pile at sizes (a, b).
    pub fn drop_left(&self, a: usize, b: usize) -> f64 {
        self.drop_left[a][b]
    }
}

/// Exact binomial coefficient.
fn binomial(n: usize, k: usize) -> u128 {
    let k = k.min(n - k);
    let mut c: u128 = 1;
    for i in 1..=k {
        c = c * (n - k + i) as u128 / i as u128;
    }
    c
}

/// The Gilbert-Shannon-Reeds model: cut ~ Binomial(n, 1/2), drops
/// proportional to pile sizes.
pub fn gsr_model(n: usize) -> Result<ShuffleModel, ShuffleError> {
    if n == 0 {
        return Err(ShuffleError::BadModel("need at least one card".into()));
    }
    let denom = 2f64.powi(n as i32);
    let cut_mass = (0..=n).map(|c| binomial(n, c) as f64 / denom).collect();
    ShuffleModel::from_rule(n, cut_mass, |a, b| a as f64 / (a + b) as f64)
}

/// GSR with a biased coin in the cut binomial and a multiplicative tilt on
/// the left-drop odds: drop_left(a,b) = bias*a / (bias*a + b).
pub fn biased_gsr_model(n: usize, cut_bias: f64, drop_bias: f64) -> Result<ShuffleModel, ShuffleError> {
    if n == 0 {
        return Err(ShuffleError::BadModel("need at least one card".into()));
    }
    if !(cut_bias > 0.0 && cut_bias < 1.0) {
        return Err(ShuffleError::BadModel(format!(
            "cut_bias must lie in (0,1), got {cut_bias}"
        )));
    }
    if !(drop_bias > 0.0 && drop_bias.is_finite()) {
        return Err(ShuffleError::BadModel(format!(
            "drop_bias must be positive, got {drop_bias}"
        )));
    }
    let cut_mass = (0..=n)
        .map(|c| {
            binomial(n, c) as f64 * cut_bias.powi(c as i32) * (1.0 - cut_bias).powi((n - c) as i32)
        })
        .collect();
    ShuffleModel::from_rule(n, cut_mass, |a, b| {
        let left = drop_bias * a as f64;
        left / (left + b as f64)
    })
}

/// Index of grid state (a, b) in the layered chain: diagonals s = a+b are
/// laid out in order, so (0,0) is state 0.
pub fn grid_index(a: usize, b: usize) -> usize {
    let s = a + b;
    s * (s + 1) / 2 + a
}

/// Inverse of grid_index.
pub fn grid_coords(index: usize) -> (usize, usize) {
    let mut s = 0usize;
    while (s + 1) * (s + 2) / 2 <= index {
        s += 1;
    }
    let a = index - s * (s + 1) / 2;
    (a, s - a)
}

/// Number of grid states for n cards.
pub fn grid_state_count(n: usize) -> usize {
    (n + 1) * (n + 2) / 2
}

/// One shuffle as a grid walk: from the cut (a, b) with a+b = n down to
/// (0, 0), one card per step, in drop order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GridPath {
    states: Vec<(usize, usize)>,
}

impl GridPath {
    pub fn new(states: Vec<(usize, usize)>) -> Result<Self, ShuffleError> {
        let Some(&(a0, b0)) = states.first() else {
            return Err(ShuffleError::BadPath("empty path".into()));
        };
        let n = a0 + b0;
        if states.len() != n + 1 {
            return Err(ShuffleError::BadPath(format!(
                "path has {} states, expected {}",
                states.len(),
                n + 1
            )));
        }
        for w in states.windows(2) {
            let ((a, b), (a2, b2)) = (w[0], w[1]);
            let left_drop = a2 + 1 == a && b2 == b;
            let right_drop = b2 + 1 == b && a2 == a;
            if !(left_drop || right_drop) {
                return Err(ShuffleError::BadPath(format!(
                    "step ({a},{b}) -> ({a2},{b2}) does not drop exactly one card"
                )));
            }
        }
        Ok(GridPath { states })
    }

    pub fn states(&self) -> &[(usize, usize)] {
        &self.states
    }

    /// The cut position: size of the left pile at the top of the walk.
    pub fn cut(&self) -> usize {
        self.states[0].0
    }

    /// Drop choices in drop order; true = left pile.
    pub fn drops(&self) -> Vec<bool> {
        self.states
            .windows(2)
            .map(|w| w[1].0 + 1 == w[0].0)
            .collect()
    }

    /// The round word of the grid chain for this shuffle: start state, cut
    /// state, and every pile state down to (0,0).
    pub fn to_word(&self) -> Word {
        let mut word = Vec::with_capacity(self.states.len() + 1);
        word.push(grid_index(0, 0));
        word.extend(self.states.iter().map(|&(a, b)| grid_index(a, b)));
        word
    }
}

/// Projects a shuffle model onto its sparse layered chain: layer 1 is the
/// cut (zero-mass cuts omitted), layer t > 1 drops one card from piles of
/// total size n - t + 2. Records k = 2 (the repeating layers' row bound; the
/// entry layer is a start distribution, not a transition row) and
/// n_param = n_cards.
pub fn build_grid_chain(model: &ShuffleModel) -> Result<SparseChain, SparseError> {
    let n = model.n_cards();
    let n_states = grid_state_count(n);
    let s0 = grid_index(0, 0);
    let mut layers = Vec::with_capacity(n + 1);

    let cut_row: Vec<(usize, f64)> = (0..=n)
        .filter(|&c| model.cut_mass()[c] > 0.0)
        .map(|c| (grid_index(c, n - c), model.cut_mass()[c]))
        .collect();
    let mut first = vec![Vec::new(); n_states];
    first[s0] = cut_row;
    layers.push(first);

    // Layer t (2-based) serves the diagonal a + b = n - t + 2.
    for s in (1..=n).rev() {
        let mut layer = vec![Vec::new(); n_states];
        for a in 0..=s {
            let b = s - a;
            let pl = model.drop_left(a, b);
            let mut row = Vec::new();
            if a > 0 && pl > 0.0 {
                row.push((grid_index(a - 1, b), pl));
            }
            if b > 0 && pl < 1.0 {
                row.push((grid_index(a, b - 1), 1.0 - pl));
            }
            layer[grid_index(a, b)] = row;
        }
        layers.push(layer);
    }

    SparseChain::new(n_states, s0, n, layers)?.with_k(2)
}

fn validate_deck(model: &ShuffleModel, deck: &[u32]) -> Result<(), ShuffleError> {
    if deck.len() != model.n_cards() {
        return Err(ShuffleError::BadDeck(format!(
            "deck has {} cards, model expects {}",
            deck.len(),
            model.n_cards()
        )));
    }
    Ok(())
}

fn sample_cut(model: &ShuffleModel, rng: &mut impl Rng) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    let mut last_positive = 0;
    for (c, &p) in model.cut_mass().iter().enumerate() {
        if p > 0.0 {
            last_positive = c;
            acc += p;
            if u < acc {
                return c;
            }
        }
    }
    last_positive
}

/// Shuffles the deck once, also returning the grid walk that produced it.
pub fn shuffle_once_traced(
    model: &ShuffleModel,
    deck: &[u32],
    rng: &mut impl Rng,
) -> Result<(Vec<u32>, GridPath), ShuffleError> {
    validate_deck(model, deck)?;
    let n = model.n_cards();
    let cut = sample_cut(model, rng);
    let left = &deck[..cut];
    let right = &deck[cut..];
    let (mut a, mut b) = (cut, n - cut);
    let mut states = Vec::with_capacity(n + 1);
    states.push((a, b));
    let mut out = vec![0u32; n];
    // Drops fill the result from the bottom up.
    for slot in (0..n).rev() {
        let go_left = if a == 0 {
            false
        } else if b == 0 {
            true
        } else {
            rng.random::<f64>() < model.drop_left(a, b)
        };
        if go_left {
            a -= 1;
            out[slot] = left[a];
        } else {
            b -= 1;
            out[slot] = right[b];
        }
        states.push((a, b));
    }
    Ok((out, GridPath::new(states)?))
}

/// Shuffles the deck once with a fresh RNG for the seed.
pub fn shuffle_once(
    model: &ShuffleModel,
    deck: &[u32],
    seed: RngSeed,
) -> Result<Vec<u32>, ShuffleError> {
    Ok(shuffle_once_traced(model, deck, &mut seed.rng())?.0)
}

/// Samples one round word of the grid chain directly from the model by
/// walking a shuffle of the canonical deck.
pub fn sample_shuffle_word(model: &ShuffleModel, rng: &mut impl Rng) -> Result<Word, ShuffleError> {
    let deck: Vec<u32> = (1..=model.n_cards() as u32).collect();
    let (_, path) = shuffle_once_traced(model, &deck, rng)?;
    Ok(path.to_word())
}

/// Recovers the grid walk that turned `before` into `after`: tries each cut
/// and matches `after` top-down against the two piles (a riffle preserves
/// within-pile order, so the match is a two-pointer scan; distinct labels
/// make it unambiguous). The void shuffle (after == before) matches cut 0
/// first, which is its canonical encoding. Errors when no cut explains the
/// after-deck.
pub fn encode_shuffle(before: &[u32], after: &[u32]) -> Result<GridPath, ShuffleError> {
    let n = before.len();
    if n == 0 {
        return Err(ShuffleError::BadDeck("empty deck".into()));
    }
    if after.len() != n {
        return Err(ShuffleError::BadDeck(format!(
            "deck sizes differ: {} before vs {} after",
            n,
            after.len()
        )));
    }
    {
        let mut seen = before.to_vec();
        seen.sort_unstable();
        if seen.windows(2).any(|w| w[0] == w[1]) {
            return Err(ShuffleError::BadDeck("duplicate card labels".into()));
        }
        let mut after_sorted = after.to_vec();
        after_sorted.sort_unstable();
        if seen != after_sorted {
            return Err(ShuffleError::BadDeck(
                "after-deck is not a permutation of the before-deck".into(),
            ));
        }
    }

    'cut: for cut in 0..=n {
        let left = &before[..cut];
        let right = &before[cut..];
        let (mut lp, mut rp) = (0usize, 0usize);
        // Scan order is top-down, the reverse of drop order.
        let mut top_down = Vec::with_capacity(n);
        for &card in after {
            if lp < left.len() && left[lp] == card {
                top_down.push(true);
                lp += 1;
            } else if rp < right.len() && right[rp] == card {
                top_down.push(false);
                rp += 1;
            } else {
                continue 'cut;
            }
        }
        let (mut a, mut b) = (cut, n - cut);
        let mut states = Vec::with_capacity(n + 1);
        states.push((a, b));
        for &went_left in top_down.iter().rev() {
            if went_left {
                a -= 1;
            } else {
                b -= 1;
            }
            states.push((a, b));
        }
        return GridPath::new(states);
    }
    Err(ShuffleError::NotARiffle)
}
