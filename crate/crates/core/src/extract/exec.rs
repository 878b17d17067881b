//! A concrete executor for CFG functions. Extraction is tested against it:
//! whatever a candidate claims about a program point must hold on every run.

use std::collections::HashMap;

use super::cfg::{CfgFunction, FrontOp, Operand, Terminator};
use crate::interp::apply;
use crate::ir::{mask, Opcode};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ExecError {
    #[error("`%{0}` has no model")]
    Opaque(String),
    #[error("step limit exceeded")]
    StepLimit,
    #[error("expected {expected} arguments, got {got}")]
    Arity { expected: usize, got: usize },
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Execution {
    /// The most recent value of every executed definition and parameter,
    /// with the overflow bit of checked arithmetic.
    pub values: HashMap<String, (u64, bool)>,
    /// For each entered block, the predecessor index of its last entry.
    pub entered: HashMap<String, u32>,
    pub ret: u64,
}

/// Runs `f` on `args` for at most `max_steps` blocks. Poison and undefined
/// results simply carry their raw bit patterns.
pub fn execute(f: &CfgFunction, args: &[u64], max_steps: usize) -> Result<Execution, ExecError> {
    if args.len() != f.params.len() {
        return Err(ExecError::Arity {
            expected: f.params.len(),
            got: args.len(),
        });
    }
    let mut ex = Execution::default();
    for ((p, w), &v) in f.params.iter().zip(args) {
        ex.values.insert(p.clone(), (v & mask(*w), false));
    }
    let mut cur = 0;
    let mut prev: Option<usize> = None;
    for _ in 0..max_steps {
        let b = &f.blocks[cur];
        if let Some(p) = prev {
            let k = f.preds[cur].iter().position(|&x| x == p).unwrap();
            ex.entered.insert(b.label.clone(), k as u32);
            let chosen: Vec<(String, (u64, bool))> = b
                .phis
                .iter()
                .map(|phi| (phi.name.clone(), (get(&ex, &phi.incoming[k].0), false)))
                .collect();
            ex.values.extend(chosen);
        }
        for i in &b.insts {
            let a: Vec<u64> = i.args.iter().map(|o| get(&ex, o)).collect();
            let in_w = i.args.first().map_or(i.width, |o| width(f, o, i.width));
            let v = match i.op {
                FrontOp::Load | FrontOp::Call => return Err(ExecError::Opaque(i.name.clone())),
                FrontOp::Pass => (a[0] & mask(i.width), false),
                FrontOp::Gep => (a[0].wrapping_add(a[1].wrapping_mul(a[2])) & mask(i.width), false),
                FrontOp::Ugt => (apply(Opcode::Ult, 1, in_w, &[a[1], a[0]]).0, false),
                FrontOp::Sgt => (apply(Opcode::Slt, 1, in_w, &[a[1], a[0]]).0, false),
                FrontOp::Uge => (apply(Opcode::Ule, 1, in_w, &[a[1], a[0]]).0, false),
                FrontOp::Sge => (apply(Opcode::Sle, 1, in_w, &[a[1], a[0]]).0, false),
                FrontOp::Ir(Opcode::Select) => (if a[0] == 1 { a[1] } else { a[2] }, false),
                FrontOp::Ir(Opcode::ExtractValue) => {
                    let Operand::Value(t) = &i.args[0] else { unreachable!() };
                    let (v, flag) = ex.values[t];
                    (if a[1] == 0 { v } else { flag as u64 }, false)
                }
                FrontOp::Ir(op) => {
                    let (v, flag, _, _) = apply(op, i.width, in_w, &a);
                    (v, flag)
                }
            };
            ex.values.insert(i.name.clone(), v);
        }
        let next = match &b.term {
            Terminator::Ret(v) => {
                ex.ret = get(&ex, v);
                return Ok(ex);
            }
            Terminator::Jmp(t) => t,
            Terminator::Br(c, t, e) => {
                if get(&ex, c) == 1 {
                    t
                } else {
                    e
                }
            }
            Terminator::Switch(v, d, cases) => {
                let x = get(&ex, v);
                cases.iter().find(|(k, _)| k.value() == x).map_or(d, |(_, l)| l)
            }
        };
        prev = Some(cur);
        cur = f.block_index(next).unwrap();
    }
    Err(ExecError::StepLimit)
}

fn get(ex: &Execution, o: &Operand) -> u64 {
    match o {
        Operand::Value(n) => ex.values[n].0,
        Operand::Const(c) => c.value(),
        Operand::Undef(_) => 0,
    }
}

fn width(f: &CfgFunction, o: &Operand, fallback: u32) -> u32 {
    match o {
        Operand::Value(n) => {
            if let Some((_, w)) = f.params.iter().find(|(p, _)| p == n) {
                return *w;
            }
            for b in &f.blocks {
                if let Some(p) = b.phis.iter().find(|p| &p.name == n) {
                    return p.width;
                }
                if let Some(i) = b.insts.iter().find(|i| &i.name == n) {
                    return i.width;
                }
            }
            fallback
        }
        Operand::Const(c) => c.width().bits(),
        Operand::Undef(w) => *w,
    }
}
