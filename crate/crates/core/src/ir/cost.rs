use std::collections::{BTreeMap, HashSet};

use super::dag::{Dag, InstId, LeftHandSide, Optimization};
use super::opcode::Opcode;

/// Per-opcode instruction weights.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct CostModel {
    default: u32,
    overrides: BTreeMap<Opcode, u32>,
}

impl Default for CostModel {
    fn default() -> Self {
        let mut overrides = BTreeMap::new();
        for &op in Opcode::ALL {
            if op.is_division() {
                overrides.insert(op, 3);
            }
            if op.base() == Opcode::Mul || matches!(op, Opcode::SMulWithOverflow | Opcode::UMulWithOverflow) {
                overrides.insert(op, 2);
            }
        }
        CostModel {
            default: 1,
            overrides,
        }
    }
}

impl CostModel {
    /// Every opcode costs 1.
    pub fn unit() -> CostModel {
        CostModel {
            default: 1,
            overrides: BTreeMap::new(),
        }
    }

    pub fn with_weight(mut self, op: Opcode, weight: u32) -> CostModel {
        self.overrides.insert(op, weight);
        self
    }

    pub fn weight(&self, op: Opcode) -> u32 {
        self.overrides.get(&op).copied().unwrap_or(self.default)
    }

    /// Stable text used in cache fingerprints.
    pub fn fingerprint(&self) -> String {
        let mut s = format!("default={}", self.default);
        for (op, w) in &self.overrides {
            s.push_str(&format!(",{op}={w}"));
        }
        s
    }

    fn sum(&self, dag: &Dag, ids: impl IntoIterator<Item = InstId>) -> u32 {
        ids.into_iter()
            .filter_map(|id| dag.get(id).opcode())
            .map(|op| self.weight(op))
            .sum()
    }

    /// Cost of computing the root of `lhs`; path conditions are free.
    pub fn lhs_cost(&self, lhs: &LeftHandSide) -> u32 {
        self.sum(&lhs.dag, lhs.dag.reachable([lhs.root]))
    }

    /// Cost of the instructions an optimization adds; values it reuses from
    /// the LHS are free.
    pub fn rhs_cost(&self, opt: &Optimization) -> u32 {
        let lhs: HashSet<InstId> = opt.lhs.reachable().into_iter().collect();
        let ids = opt.lhs.dag.reachable([opt.rhs]);
        self.sum(&opt.lhs.dag, ids.into_iter().filter(|id| !lhs.contains(id)))
    }
}
