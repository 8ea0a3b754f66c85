//! Result rows the harness writes. Aggregate columns are recomputable from
//! the per-trial verdict tokens, and that invariant is tested.

use std::collections::BTreeMap;

use anyhow::Result;
use mcident_testers::{Decision, Reason, Verdict};
use serde::Serialize;

/// Row for verdict-producing commands: one row per run, one token per trial
/// in `verdicts`, '|'-joined.
#[derive(Debug, Clone, Serialize)]
pub struct TestRow {
    pub experiment: String,
    pub n: usize,
    pub epsilon: f64,
    pub m: f64,
    pub trials: usize,
    pub accepts: usize,
    pub rejects: usize,
    pub accept_rate: f64,
    pub reject_rate: f64,
    pub verdicts: String,
}

impl TestRow {
    pub fn from_verdicts(
        experiment: &str,
        n: usize,
        epsilon: f64,
        m: f64,
        verdicts: &[Verdict],
    ) -> TestRow {
        let trials = verdicts.len();
        let accepts = verdicts.iter().filter(|v| v.is_accept()).count();
        let rejects = trials - accepts;
        let tokens: Vec<String> = verdicts.iter().map(verdict_token).collect();
        TestRow {
            experiment: experiment.to_string(),
            n,
            epsilon,
            m,
            trials,
            accepts,
            rejects,
            accept_rate: accepts as f64 / trials as f64,
            reject_rate: rejects as f64 / trials as f64,
            verdicts: tokens.join("|"),
        }
    }
}

/// One power-curve point.
#[derive(Debug, Clone, Serialize)]
pub struct CurveRow {
    pub experiment: String,
    pub family: String,
    pub n: usize,
    pub epsilon: f64,
    pub m: usize,
    pub trials: usize,
    pub type_i: f64,
    pub type_ii: f64,
}

/// Flat distance report, mirroring the JSON the command prints.
#[derive(Debug, Clone, Serialize)]
pub struct DistanceRow {
    pub experiment: String,
    pub spectral_distance: f64,
    pub length: u64,
    pub hellinger_sq: f64,
    pub tv_lower: f64,
    pub tv_upper: f64,
    pub minimal_length: Option<u64>,
    pub minimal_length_tv_lo: Option<u64>,
    pub minimal_length_tv_hi: Option<u64>,
}

/// One sampled trajectory.
#[derive(Debug, Clone, Serialize)]
pub struct SimRow {
    pub trial: usize,
    pub states: String,
}

/// "accept", or "reject:<reason>" with the reason's serialized name.
pub fn verdict_token(v: &Verdict) -> String {
    match v.decision {
        Decision::Accept => "accept".to_string(),
        Decision::Reject => format!("reject:{}", reason_name(v.reason)),
    }
}

pub fn reason_name(r: Reason) -> &'static str {
    match r {
        Reason::InsufficientVisits => "insufficient_visits",
        Reason::IidTest => "iid_test",
        Reason::Pruning => "pruning",
        Reason::Chi2 => "chi2",
    }
}

/// Reject reasons with counts, for the summary the multi-trial commands print.
pub fn reason_counts(verdicts: &[Verdict]) -> BTreeMap<String, usize> {
    let mut counts = BTreeMap::new();
    for v in verdicts {
        if v.is_reject() {
            *counts.entry(reason_name(v.reason).to_string()).or_insert(0) += 1;
        }
    }
    counts
}

/// Renders rows to CSV with a header line.
pub fn to_csv<T: Serialize>(rows: &[T]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for row in rows {
        w.serialize(row)?;
    }
    Ok(String::from_utf8(w.into_inner()?)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use mcident_testers::Diagnostics;

    /// Parses a `verdicts` column back into (accepts, rejects).
    fn recount_tokens(tokens: &str) -> (usize, usize) {
        let mut accepts = 0;
        let mut rejects = 0;
        for tok in tokens.split('|').filter(|t| !t.is_empty()) {
            if tok == "accept" {
                accepts += 1;
            } else {
                rejects += 1;
            }
        }
        (accepts, rejects)
    }

    fn verdict(decision: Decision, reason: Reason) -> Verdict {
        Verdict {
            decision,
            statistic: None,
            reason,
            diagnostics: Diagnostics::default(),
        }
    }

    #[test]
    fn reason_names_match_their_serde_spelling() {
        for r in [Reason::InsufficientVisits, Reason::IidTest, Reason::Pruning, Reason::Chi2] {
            let serde_name = serde_json::to_value(r).unwrap();
            assert_eq!(serde_name.as_str().unwrap(), reason_name(r));
        }
    }

    #[test]
    fn aggregates_recompute_from_tokens() {
        let verdicts = vec![
            verdict(Decision::Accept, Reason::IidTest),
            verdict(Decision::Reject, Reason::Chi2),
            verdict(Decision::Accept, Reason::IidTest),
            verdict(Decision::Reject, Reason::InsufficientVisits),
        ];
        let row = TestRow::from_verdicts("x", 5, 0.3, 100.0, &verdicts);
        assert_eq!((row.accepts, row.rejects), (2, 2));
        assert_eq!(recount_tokens(&row.verdicts), (2, 2));
        assert_eq!(row.accept_rate, 0.5);
        assert_eq!(row.verdicts, "accept|reject:chi2|accept|reject:insufficient_visits");
        let counts = reason_counts(&verdicts);
        assert_eq!(counts["chi2"], 1);
        assert_eq!(counts["insufficient_visits"], 1);
    }

    #[test]
    fn csv_rendering_is_stable() {
        let rows = vec![TestRow::from_verdicts(
            "x",
            5,
            0.3,
            100.0,
            &[verdict(Decision::Accept, Reason::IidTest)],
        )];
        let a = to_csv(&rows).unwrap();
        let b = to_csv(&rows).unwrap();
        assert_eq!(a, b);
        assert!(a.starts_with("experiment,n,epsilon,m,trials,"));
    }
}
