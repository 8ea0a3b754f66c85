//! Tester outcomes and the diagnostics that travel with them.

use serde::{Deserialize, Serialize};

/// Final answer of an identity tester.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Decision {
    Accept,
    Reject,
}

/// Which stage of the tester produced the decision.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Reason {
    /// The trajectory did not fill the visit plan, so the pooled sample was
    /// refused before any statistic was computed.
    InsufficientVisits,
    /// Decision came from the pooled chi-squared identity test over flattened
    /// edge samples.
    IidTest,
    /// Decision came from the low-probability filter: too many observed edges
    /// fell outside the pruned reference support.
    Pruning,
    /// Decision came from comparing the edge chi-squared statistic against its
    /// threshold.
    Chi2,
}

/// Numbers worth reporting alongside a decision. Every field is optional:
/// a tester fills in only what its path actually computed.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    /// Pairs the visit plan asked for.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub planned_samples: Option<usize>,
    /// Pairs actually collected before the trajectory ran out.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub collected_samples: Option<usize>,
    /// Size of the heavy-element bucket the statistic summed over.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub bucket_size: Option<usize>,
    /// Observations that fell outside the heavy-element bucket.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub out_of_bucket: Option<u64>,
    /// Threshold the statistic was compared against.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub threshold: Option<f64>,
    /// Words discarded by the pruning filter.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub filtered_words: Option<u64>,
    /// Words the Poissonized subsample asked for.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub subsample_words: Option<u64>,
    /// Edges removed from the reference chain by pruning.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub pruned_edges: Option<usize>,
}

/// Decision plus the evidence for it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Verdict {
    pub decision: Decision,
    /// Value of the statistic that drove the decision, when one was computed.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub statistic: Option<f64>,
    pub reason: Reason,
    #[serde(default)]
    pub diagnostics: Diagnostics,
}

impl Verdict {
    pub fn is_reject(&self) -> bool {
        self.decision == Decision::Reject
    }

    pub fn is_accept(&self) -> bool {
        self.decision == Decision::Accept
    }
}
