//! The dataflow IR: instructions, left-hand sides, their textual form, and
//! the canonicalization and cost functions built on top of them.

mod canon;
mod cost;
mod dag;
pub mod gen;
mod opcode;
mod parse;
mod print;
mod typecheck;

pub use canon::canonicalize;
pub use cost::CostModel;
pub use dag::{
    BlockPc, Constant, Dag, Inst, InstId, InstKind, LeftHandSide, Optimization, PathCondition,
    Ty, Width, MAX_WIDTH,
};
pub(crate) use dag::{mask, sign_extend};
pub use opcode::{Arity, Opcode, OverflowFlags, UnknownOpcode};
pub use parse::{parse, parse_lhs, parse_optimization, Diagnostic, Parsed};
pub use print::{
    print_lhs, print_lhs_with_names, print_optimization, print_optimization_with_names, Names,
};
pub use typecheck::{typecheck, typecheck_dag, TypeError};
