use std::fmt;

use super::{CacheEntry, CacheKey};
use crate::ir::{parse_lhs, parse_optimization, CostModel};

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum RankPolicy {
    StaticCount,
    DynamicCount,
    /// LHS cost minus RHS cost.
    Benefit,
    /// Ranks by `then` after dropping LHSs with more than `max_nodes`
    /// instructions.
    ComplexityFiltered { max_nodes: usize, then: Box<RankPolicy> },
}

/// One line of a ranked report.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ReportRow {
    pub key: CacheKey,
    pub rhs: String,
    pub score: u64,
    pub lhs_cost: u32,
    pub rhs_cost: u32,
    pub nodes: usize,
    pub static_count: u64,
    pub dynamic_count: u64,
}

impl ReportRow {
    pub const HEADER: &'static str = "score\tstatic\tdynamic\tlhs_cost\trhs_cost\tnodes\tlhs\trhs";
}

/// Tab-separated, with the multi-line LHS and RHS joined by `; `.
impl fmt::Display for ReportRow {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let one_line = |s: &str| s.trim_end().replace('\n', "; ");
        write!(
            f,
            "{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}",
            self.score,
            self.static_count,
            self.dynamic_count,
            self.lhs_cost,
            self.rhs_cost,
            self.nodes,
            one_line(&self.key.lhs),
            one_line(&self.rhs)
        )
    }
}

/// Orders the entries that carry an optimization by descending score.
/// Ties keep the input order. Entries whose text no longer parses are
/// skipped with a warning.
pub fn rank(entries: &[(CacheKey, CacheEntry)], policy: &RankPolicy, model: &CostModel) -> Vec<ReportRow> {
    let max_nodes = max_nodes(policy);
    let by = innermost(policy);
    let mut rows = Vec::new();
    for (key, e) in entries {
        let Some(rhs) = &e.rhs else { continue };
        let (lhs, opt) = match (parse_lhs(&key.lhs), parse_optimization(&format!("{}{rhs}", key.lhs))) {
            (Ok(l), Ok(o)) => (l, o),
            _ => {
                log::warn!("skipping unparsable entry {key}");
                continue;
            }
        };
        let nodes = lhs.node_count();
        if nodes > max_nodes {
            continue;
        }
        let lhs_cost = model.lhs_cost(&lhs);
        let rhs_cost = model.rhs_cost(&opt);
        let score = match by {
            RankPolicy::StaticCount => e.static_count,
            RankPolicy::DynamicCount => e.dynamic_count,
            RankPolicy::Benefit => lhs_cost.saturating_sub(rhs_cost) as u64,
            RankPolicy::ComplexityFiltered { .. } => unreachable!(),
        };
        rows.push(ReportRow {
            key: key.clone(),
            rhs: rhs.clone(),
            score,
            lhs_cost,
            rhs_cost,
            nodes,
            static_count: e.static_count,
            dynamic_count: e.dynamic_count,
        });
    }
    rows.sort_by(|a, b| b.score.cmp(&a.score));
    rows
}

fn max_nodes(p: &RankPolicy) -> usize {
    match p {
        RankPolicy::ComplexityFiltered { max_nodes: m, then } => (*m).min(max_nodes(then)),
        _ => usize::MAX,
    }
}

fn innermost(p: &RankPolicy) -> &RankPolicy {
    match p {
        RankPolicy::ComplexityFiltered { then, .. } => innermost(then),
        p => p,
    }
}
