//! Core machinery for comparing finite Markov chains from their trajectory
//! laws: validated stochastic matrices, the entrywise geometric mean
//! √(P∘Q) and its spectral radius, Hellinger/TV distances between ℓ-step
//! word distributions, minimal distinguishing lengths, and seeded
//! trajectory simulation with hitting- and mixing-time estimates.
//!
//! The one-line summary of the whole approach: two chains P and Q look alike
//! on long observation windows exactly when ρ(√(P∘Q)) is close to 1, and
//! 1 − ρ is a scale-free distance whose word-level meaning is pinned down by
//! the identity 1 − H²(W_P^ℓ, W_Q^ℓ) = √(p∘q)ᵀ(√(P∘Q))^ℓ𝟙.

pub mod classes;
pub mod distance;
pub mod geom;
pub mod matrix;
pub mod sim;
pub mod spectral;

pub use classes::{essential_classes, has_identical_essential_class, EssentialClassPartition};
pub use distance::{
    chain_distance, hellinger_sq_words, minimal_distinguishing_length,
    minimal_distinguishing_length_tv, word_distances_bruteforce, word_distances_bruteforce_from,
    DistanceError, LengthInterval, StartMode, StartSpec, WordDistanceReport,
};
pub use geom::{geometric_mean, GeomMeanMatrix};
pub use matrix::{MatrixError, SquareMatrix, StateDistribution, StochasticMatrix};
pub use sim::{
    hitting_time, mixing_time, sample_index, sample_trajectory, sample_trajectory_rng, RngSeed,
    SimError, Start, Trajectory,
};
pub use spectral::{spectral_radius, SpectralError, DEFAULT_SPECTRAL_TOL};
