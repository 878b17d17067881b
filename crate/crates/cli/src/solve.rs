use sopt_core::cache::rhs_text;
use sopt_core::ir::{LeftHandSide, Optimization};
use sopt_core::solver::Solver;
use sopt_core::synth::{synthesize, SynthConfig, SynthMode, SynthResult};

use crate::RunConfig;

/// What synthesis made of one LHS.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Resolution {
    Found { opt: Optimization, rhs: String, cost: u32 },
    /// Nothing cheaper exists within the search space. Cached as a null RHS.
    NotFound,
    Timeout,
    Error(String),
}

impl Resolution {
    /// The outcome to cache, if this resolution is definitive.
    pub fn cached(&self) -> Option<Option<&str>> {
        match self {
            Resolution::Found { rhs, .. } => Some(Some(rhs)),
            Resolution::NotFound => Some(None),
            Resolution::Timeout | Resolution::Error(_) => None,
        }
    }
}

/// Synthesizes a strictly cheaper RHS for the canonical `lhs`. An LHS that
/// costs nothing can still become a constant.
pub fn solve(lhs: &LeftHandSide, cfg: &RunConfig, solver: &Solver) -> Resolution {
    let base = cfg.synth_config();
    let synth = match base.cost_model.lhs_cost(lhs) {
        0 => SynthConfig {
            mode: SynthMode::ConstantsOnly,
            max_cost: 0,
            ..base
        },
        c => SynthConfig {
            max_cost: base.max_cost.min(c - 1),
            ..base
        },
    };
    match synthesize(solver, lhs, &synth) {
        Ok(o) => match o.result {
            SynthResult::Found { opt, cost } => Resolution::Found {
                rhs: rhs_text(&opt),
                opt,
                cost,
            },
            SynthResult::NotFound => Resolution::NotFound,
            SynthResult::Timeout => Resolution::Timeout,
        },
        Err(e) => Resolution::Error(e.to_string()),
    }
}
