//! Sweep rows and the pass/fail checks behind `--check`.

use serde::{Deserialize, Serialize};

use dinfer_core::inference::{Decision, Verdict};
use dinfer_core::stats::median;

use crate::artifacts::CheckOutcome;

/// One line of a sweep CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub threat: String,
    pub overlap_fraction: Option<f64>,
    pub m: usize,
    pub features: usize,
    pub aggregated_p: f64,
    pub effect_size: f64,
    pub effect_ci_lo: f64,
    pub effect_ci_hi: f64,
    pub p_ci_lo: f64,
    pub p_ci_hi: f64,
    pub median_replicate_p: f64,
    pub max_replicate_p: f64,
    pub decision: Decision,
}

impl SweepRow {
    pub fn new(threat: &str, overlap_fraction: Option<f64>, features: usize, v: &Verdict) -> Self {
        Self {
            threat: threat.to_string(),
            overlap_fraction,
            m: v.m,
            features,
            aggregated_p: v.aggregated_p,
            effect_size: v.effect_size,
            effect_ci_lo: v.ci99.0,
            effect_ci_hi: v.ci99.1,
            p_ci_lo: v.p_ci99.0,
            p_ci_hi: v.p_ci99.1,
            median_replicate_p: if v.replicate_p.is_empty() { v.aggregated_p } else { median(&v.replicate_p) },
            max_replicate_p: v.replicate_p.iter().copied().fold(v.aggregated_p, f64::max),
            decision: v.decision,
        }
    }
}

fn outcome(failures: Vec<String>) -> CheckOutcome {
    CheckOutcome { passed: failures.is_empty(), failures }
}

/// Medians nonincreasing in `m` and a rejection at some `m <= 50`.
pub fn check_m_sweep(rows: &[SweepRow], alpha: f64) -> CheckOutcome {
    let mut f = Vec::new();
    for w in rows.windows(2) {
        if w[1].median_replicate_p > w[0].median_replicate_p {
            f.push(format!(
                "median p rises from m={} ({:.3e}) to m={} ({:.3e})",
                w[0].m, w[0].median_replicate_p, w[1].m, w[1].median_replicate_p
            ));
        }
    }
    if !rows.iter().any(|r| r.m <= 50 && r.aggregated_p < alpha) {
        f.push(format!("no m <= 50 reaches p < {alpha}"));
    }
    outcome(f)
}

/// Effect sizes may only fall between neighbours whose intervals overlap.
pub fn effect_nondecreasing_within_ci(rows: &[SweepRow], key: impl Fn(&SweepRow) -> String) -> Vec<String> {
    rows.windows(2)
        .filter(|w| w[1].effect_size < w[0].effect_size && w[1].effect_ci_hi < w[0].effect_ci_lo)
        .map(|w| format!("effect size drops from {} to {} with disjoint intervals", key(&w[0]), key(&w[1])))
        .collect()
}

pub fn check_overlap_sweep(rows: &[SweepRow], alpha: f64) -> CheckOutcome {
    let mut f = Vec::new();
    for r in rows {
        let lambda = r.overlap_fraction.unwrap_or(f64::NAN);
        if lambda == 0.0 && r.decision != Decision::Inconclusive {
            f.push(format!("lambda=0 flagged as stolen (p={:.3e})", r.aggregated_p));
        }
        if lambda > 0.0 && r.aggregated_p >= alpha {
            f.push(format!("lambda={lambda} not flagged (p={:.3e})", r.aggregated_p));
        }
    }
    f.extend(effect_nondecreasing_within_ci(rows, |r| format!("lambda={}", r.overlap_fraction.unwrap_or(f64::NAN))));
    outcome(f)
}

/// With all features a stealing threat must be flagged and an honest one not.
pub fn check_embed_sweep(rows: &[SweepRow], expect: Decision) -> CheckOutcome {
    let mut f = Vec::new();
    match rows.iter().max_by_key(|r| r.features) {
        Some(r) if r.decision != expect => {
            f.push(format!("{} features gave {:?}, expected {expect:?}", r.features, r.decision))
        }
        None => f.push("empty sweep".into()),
        _ => {}
    }
    outcome(f)
}

pub fn check_verdict(v: &Verdict, expect: Decision) -> CheckOutcome {
    let mut f = Vec::new();
    if v.decision != expect {
        f.push(format!("decision {:?} (p={:.3e}), expected {expect:?}", v.decision, v.aggregated_p));
    }
    outcome(f)
}
