//! Identity testers for Markov chains observed through a single trajectory,
//! plus the calibration machinery and lower-bound instance generators that
//! go with them.
//!
//! Two testing regimes are covered. For symmetric chains, a visit plan
//! subsamples the trajectory into near-independent edge observations and a
//! pooled chi-square-style statistic decides identity
//! ([`test_identity_symmetric`]). For sparse layered chains observed in
//! whole rounds, low-probability edges are pruned away and a per-edge
//! statistic does the same job ([`chi2_edge_test`]); riffle-shuffle models
//! compile into that representation via [`build_grid_chain`].
//!
//! Thresholds come from null simulation ([`calibrate`] module) and travel in
//! serializable profiles. The [`instances`] module draws the random families
//! that certify the testers' sample costs cannot be beaten by more than
//! constants.

pub mod calibrate;
pub mod instances;
pub mod profile;
pub mod shuffle;
pub mod sparse;
pub mod symmetric;
pub mod verdict;

pub use calibrate::{calibrate_chi2_edge, calibrate_iid_multinomial, calibrate_symmetric};
pub use instances::{
    power_curve, sparse_hard_instance, symmetric_hard_instance, symmetric_hard_radius,
    HardFamily, InstanceError, PowerPoint, SparseHardInstance, SymmetricHardInstance,
};
pub use profile::{
    empirical_quantile, Chi2Calibration, ConstantsProfile, IidThresholdEntry, IidThresholds,
    ProfileError,
};
pub use shuffle::{
    biased_gsr_model, encode_shuffle, grid_coords, grid_index, grid_state_count, gsr_model,
    sample_shuffle_word, shuffle_once, shuffle_once_traced, build_grid_chain, GridPath,
    ShuffleError, ShuffleModel,
};
pub use sparse::{
    block_cyclic_check, chi2_edge_statistic, chi2_edge_test, chi2_threshold,
    dist_rounds_bruteforce, edge_probs, filter_samples, hellinger_sq_rounds, prune, EdgeEntry,
    EdgeTable, SparseChain, SparseError, SparseRow, Word,
};
pub use symmetric::{
    collect_edge_samples, draw_visit_plan, draw_visit_plan_rng, flatten_chain, iid_identity_test,
    iid_statistic, recommended_trajectory_length, test_identity_symmetric, EdgeSampleSet,
    IidStat, SymError, VisitPlan,
};
pub use verdict::{Decision, Diagnostics, Reason, Verdict};
