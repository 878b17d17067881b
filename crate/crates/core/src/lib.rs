//! A synthesizing superoptimizer for a bitvector dataflow IR.

pub mod ir;
pub mod interp;
pub mod solver;
pub mod verify;
pub mod synth;
pub mod extract;
pub mod cache;
