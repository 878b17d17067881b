use std::fmt;

use super::dag::{Dag, InstId, InstKind, LeftHandSide, Ty, MAX_WIDTH};
use super::opcode::{Arity, Opcode};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TypeError {
    pub inst: Option<InstId>,
    pub message: String,
}

impl fmt::Display for TypeError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.inst {
            Some(id) => write!(f, "instruction #{}: {}", id.index(), self.message),
            None => f.write_str(&self.message),
        }
    }
}

fn err(inst: InstId, message: impl Into<String>) -> TypeError {
    TypeError {
        inst: Some(inst),
        message: message.into(),
    }
}

fn ty_name(ty: Ty) -> String {
    match ty {
        Ty::Bits(w) => format!("i{w}"),
        Ty::Tuple(w) => format!("{{i{w},i1}}"),
        Ty::Block => "block".to_string(),
    }
}

/// Checks the instructions `ids` of `dag` against the width rules.
pub fn typecheck_dag(dag: &Dag, ids: &[InstId]) -> Vec<TypeError> {
    let mut errors = Vec::new();
    for &id in ids {
        if let Err(e) = check_inst(dag, id) {
            errors.push(e);
        }
    }
    errors
}

/// Returns every rule violation in `lhs`; an empty list means well typed.
pub fn typecheck(lhs: &LeftHandSide) -> Vec<TypeError> {
    let mut errors = typecheck_dag(&lhs.dag, &lhs.reachable());
    let ty = |id: InstId| lhs.dag.get(id).ty();
    if !matches!(ty(lhs.root), Ty::Bits(_)) {
        errors.push(err(lhs.root, "the inferred value must be a bitvector"));
    }
    for pc in &lhs.pcs {
        match (ty(pc.lhs), ty(pc.rhs)) {
            (Ty::Bits(a), Ty::Bits(b)) if a == b => {}
            (a, b) => errors.push(err(
                pc.lhs,
                format!("pc compares {} with {}", ty_name(a), ty_name(b)),
            )),
        }
    }
    for bpc in &lhs.blockpcs {
        match lhs.dag.get(bpc.block).kind {
            InstKind::Block(n) if bpc.pred < n => {}
            InstKind::Block(n) => errors.push(err(
                bpc.block,
                format!("blockpc predecessor {} out of range for a block with {n}", bpc.pred),
            )),
            _ => errors.push(err(bpc.block, "blockpc must refer to a block")),
        }
        match (ty(bpc.value), ty(bpc.expected)) {
            (Ty::Bits(a), Ty::Bits(b)) if a == b => {}
            (a, b) => errors.push(err(
                bpc.value,
                format!("blockpc compares {} with {}", ty_name(a), ty_name(b)),
            )),
        }
    }
    errors
}

fn check_inst(dag: &Dag, id: InstId) -> Result<(), TypeError> {
    let inst = dag.get(id);
    let width = inst.width;
    let bits_ok = |w: u32| (1..=MAX_WIDTH).contains(&w);
    match inst.kind {
        InstKind::Var => {
            if !bits_ok(width) {
                return Err(err(id, format!("invalid width i{width}")));
            }
        }
        InstKind::Const(v) => {
            if !bits_ok(width) {
                return Err(err(id, format!("invalid width i{width}")));
            }
            if v & !super::dag::mask(width) != 0 {
                return Err(err(id, format!("constant {v} does not fit in i{width}")));
            }
        }
        InstKind::Block(n) => {
            if n == 0 {
                return Err(err(id, "a block needs at least one predecessor"));
            }
        }
        InstKind::Op(op) => check_op(dag, id, op)?,
    }
    Ok(())
}

fn check_op(dag: &Dag, id: InstId, op: Opcode) -> Result<(), TypeError> {
    let inst = dag.get(id);
    let w = inst.width;
    let ops = &inst.ops;
    let tys: Vec<Ty> = ops.iter().map(|&o| dag.get(o).ty()).collect();

    match op.arity() {
        Arity::Fixed(n) if ops.len() != n => {
            return Err(err(
                id,
                format!("{op} takes {n} operand(s), found {}", ops.len()),
            ));
        }
        Arity::Phi if ops.len() < 2 => {
            return Err(err(id, "phi needs a block and at least one value"));
        }
        _ => {}
    }
    if !(1..=MAX_WIDTH).contains(&w) {
        return Err(err(id, format!("invalid width i{w}")));
    }

    let expect_bits = |i: usize, want: u32| -> Result<(), TypeError> {
        match tys[i] {
            Ty::Bits(v) if v == want => Ok(()),
            t => Err(err(
                id,
                format!(
                    "operand {i} of {op} must be i{want}, found {}",
                    ty_name(t)
                ),
            )),
        }
    };
    let bits_of = |i: usize| -> Result<u32, TypeError> {
        match tys[i] {
            Ty::Bits(v) => Ok(v),
            t => Err(err(
                id,
                format!("operand {i} of {op} must be a bitvector, found {}", ty_name(t)),
            )),
        }
    };

    use Opcode::*;
    match op {
        Select => {
            if tys[0] != Ty::Bits(1) {
                return Err(err(
                    id,
                    "the first argument to select must be one bit wide",
                ));
            }
            expect_bits(1, w)?;
            expect_bits(2, w)?;
        }
        ZExt | SExt => {
            let v = bits_of(0)?;
            if w <= v {
                return Err(err(
                    id,
                    format!("{op} must widen its argument (i{v} to i{w})"),
                ));
            }
        }
        Trunc => {
            let v = bits_of(0)?;
            if w >= v {
                return Err(err(
                    id,
                    format!("trunc must narrow its argument (i{v} to i{w})"),
                ));
            }
        }
        Phi => {
            let n = match dag.get(ops[0]).kind {
                InstKind::Block(n) => n,
                _ => return Err(err(id, "the first operand of phi must be a block")),
            };
            if n as usize != ops.len() - 1 {
                return Err(err(
                    id,
                    format!("phi has {} values but its block has {n} predecessors", ops.len() - 1),
                ));
            }
            for i in 1..ops.len() {
                expect_bits(i, w)?;
            }
        }
        ExtractValue => {
            let tw = match tys[0] {
                Ty::Tuple(tw) => tw,
                t => {
                    return Err(err(
                        id,
                        format!("extractvalue needs a tuple, found {}", ty_name(t)),
                    ))
                }
            };
            let index = match dag.get(ops[1]).kind {
                InstKind::Const(v) => v,
                _ => return Err(err(id, "extractvalue index must be a constant")),
            };
            let want = match index {
                0 => tw,
                1 => 1,
                _ => return Err(err(id, format!("invalid extractvalue index {index}"))),
            };
            if w != want {
                return Err(err(
                    id,
                    format!("extractvalue {index} yields i{want}, declared i{w}"),
                ));
            }
        }
        BSwap => {
            expect_bits(0, w)?;
            if w % 16 != 0 {
                return Err(err(id, format!("bswap needs a multiple of 16 bits, found i{w}")));
            }
        }
        _ if op.is_unary_intrinsic() => expect_bits(0, w)?,
        _ if op.is_comparison() => {
            if w != 1 {
                return Err(err(id, format!("{op} returns i1, declared i{w}")));
            }
            let a = bits_of(0)?;
            expect_bits(1, a)?;
        }
        _ if op.is_with_overflow() => {
            expect_bits(0, w)?;
            expect_bits(1, w)?;
        }
        _ => {
            expect_bits(0, w)?;
            expect_bits(1, w)?;
        }
    }
    for (i, &o) in ops.iter().enumerate() {
        if matches!(dag.get(o).kind, InstKind::Block(_)) && !(op == Phi && i == 0) {
            return Err(err(id, "a block may only be used by phi"));
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ir::{Constant, Width};

    fn w(n: u32) -> Width {
        Width::new(n).unwrap()
    }

    #[test]
    fn mismatched_add() {
        let mut dag = Dag::new();
        let a = dag.var(w(8), None);
        let b = dag.var(w(16), None);
        let add = dag.op(Opcode::Add, 8, vec![a, b]);
        let errs = typecheck_dag(&dag, &[add]);
        assert_eq!(errs.len(), 1);
        assert_eq!(errs[0].inst, Some(add));
    }

    #[test]
    fn select_condition_must_be_one_bit() {
        let mut dag = Dag::new();
        let c = dag.var(w(8), None);
        let a = dag.var(w(8), None);
        let s = dag.op(Opcode::Select, 8, vec![c, a, a]);
        let errs = typecheck_dag(&dag, &[s]);
        assert!(errs[0].message.contains("must be one bit wide"));
    }

    #[test]
    fn extractvalue_index() {
        let mut dag = Dag::new();
        let a = dag.var(w(8), None);
        let t = dag.op(Opcode::UAddWithOverflow, 8, vec![a, a]);
        let two = dag.constant(Constant::new(2, w(32)));
        let one = dag.constant(Constant::new(1, w(32)));
        let bad = dag.op(Opcode::ExtractValue, 1, vec![t, two]);
        let good = dag.op(Opcode::ExtractValue, 1, vec![t, one]);
        assert_eq!(typecheck_dag(&dag, &[bad]).len(), 1);
        assert!(typecheck_dag(&dag, &[t, good]).is_empty());
    }

    #[test]
    fn tuples_only_feed_extractvalue() {
        let mut dag = Dag::new();
        let a = dag.var(w(8), None);
        let t = dag.op(Opcode::SMulWithOverflow, 8, vec![a, a]);
        let add = dag.op(Opcode::Add, 8, vec![t, a]);
        assert_eq!(typecheck_dag(&dag, &[add]).len(), 1);
    }

    #[test]
    fn casts_must_change_width() {
        let mut dag = Dag::new();
        let a = dag.var(w(1), None);
        let z = dag.op(Opcode::ZExt, 1, vec![a]);
        let t = dag.op(Opcode::Trunc, 1, vec![a]);
        assert_eq!(typecheck_dag(&dag, &[z, t]).len(), 2);
    }
}
