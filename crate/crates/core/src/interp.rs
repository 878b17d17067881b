//! Concrete evaluator: the reference semantics that the solver encoding is
//! tested against.
//!
//! Every instruction yields a raw bit pattern even when the result is
//! poison or undefined, with exactly the values the SMT-LIB operators
//! produce (`udiv x, 0` is all ones, an oversized shift is zero, and so on).
//! The status is tracked separately.

use std::collections::BTreeMap;
use std::fmt;

use crate::ir::{
    mask, sign_extend, Constant, Dag, InstId, InstKind, LeftHandSide, Opcode, Ty, Width,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Status {
    Ok,
    Poison,
    Ub,
}

/// Raw evaluation of one instruction.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Raw {
    pub value: u64,
    /// Overflow bit of a tuple; false otherwise.
    pub flag: bool,
    pub status: Status,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum EvalResult {
    Value(Constant),
    Tuple(Constant, Constant),
    Poison,
    ImmediateUB,
}

impl fmt::Display for EvalResult {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            EvalResult::Value(c) => write!(f, "{c}"),
            EvalResult::Tuple(v, o) => write!(f, "{{{v}, {o}}}"),
            EvalResult::Poison => f.write_str("poison"),
            EvalResult::ImmediateUB => f.write_str("undefined behavior"),
        }
    }
}

/// Bindings for the free inputs of a DAG: a value per variable and a chosen
/// predecessor per block.
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash)]
pub struct Env {
    pub vars: BTreeMap<InstId, u64>,
    pub blocks: BTreeMap<InstId, u32>,
}

impl Env {
    pub fn new() -> Env {
        Env::default()
    }

    pub fn with_var(mut self, id: InstId, value: u64) -> Env {
        self.vars.insert(id, value);
        self
    }

    pub fn with_block(mut self, id: InstId, pred: u32) -> Env {
        self.blocks.insert(id, pred);
        self
    }
}

/// Converts a raw evaluation of a value of type `ty` to a result.
pub fn eval_raw_result(raw: Raw, ty: Ty) -> EvalResult {
    match raw.status {
        Status::Poison => EvalResult::Poison,
        Status::Ub => EvalResult::ImmediateUB,
        Status::Ok => match ty {
            Ty::Bits(w) => EvalResult::Value(Constant::new(raw.value, Width::new(w).unwrap())),
            Ty::Tuple(w) => EvalResult::Tuple(
                Constant::new(raw.value, Width::new(w).unwrap()),
                Constant::new(raw.flag as u64, Width::new(1).unwrap()),
            ),
            Ty::Block => unreachable!("blocks are not values"),
        },
    }
}

fn sx(v: u64, w: u32) -> i128 {
    sign_extend(v, w) as i128
}

fn fits_signed(v: i128, w: u32) -> bool {
    let lo = -(1i128 << (w - 1));
    let hi = (1i128 << (w - 1)) - 1;
    (lo..=hi).contains(&v)
}

/// Raw value, overflow flag, own-poison and own-UB conditions of `op` applied
/// to raw operand values. `w` is the result width (the value width for
/// tuples) and `in_w` the width of the first operand.
pub(crate) fn apply(op: Opcode, w: u32, in_w: u32, args: &[u64]) -> (u64, bool, bool, bool) {
    use Opcode::*;
    let m = mask(w);
    let a = args.first().copied().unwrap_or(0);
    let b = args.get(1).copied().unwrap_or(0);
    let (sa, sb) = (sx(a, in_w), sx(b, in_w));
    let (ua, ub) = (a as u128, b as u128);
    let int_min = 1u64 << (in_w - 1);
    let mut poison = false;
    let mut undefined = false;
    let mut flag = false;
    let flags = op.overflow_flags();
    let value = match op.base() {
        Add => {
            poison = (flags.nsw() && !fits_signed(sa + sb, w)) || (flags.nuw() && ua + ub > m as u128);
            a.wrapping_add(b) & m
        }
        Sub => {
            poison = (flags.nsw() && !fits_signed(sa - sb, w)) || (flags.nuw() && ua < ub);
            a.wrapping_sub(b) & m
        }
        Mul => {
            let nsw = sa.checked_mul(sb).map_or(false, |p| fits_signed(p, w));
            poison = (flags.nsw() && !nsw) || (flags.nuw() && ua * ub > m as u128);
            a.wrapping_mul(b) & m
        }
        UDiv | URem => {
            let q = if b == 0 { m } else { a / b };
            let r = if b == 0 { a } else { a % b };
            undefined = b == 0;
            poison = op.is_exact() && b != 0 && r != 0;
            if op.base() == UDiv {
                q
            } else {
                r
            }
        }
        SDiv | SRem => {
            let (q, r) = if b == 0 {
                (if sa >= 0 { m } else { 1 }, a)
            } else {
                ((sa / sb) as u64 & m, (sa % sb) as u64 & m)
            };
            undefined = b == 0 || (a == int_min && b == m);
            poison = op.is_exact() && !undefined && r != 0;
            if op.base() == SDiv {
                q
            } else {
                r
            }
        }
        Shl => {
            if b >= w as u64 {
                poison = true;
                0
            } else {
                let v = (a << b) & m;
                poison = (flags.nsw() && sx(v, w) >> b != sa) || (flags.nuw() && v >> b != a);
                v
            }
        }
        LShr => {
            if b >= w as u64 {
                poison = true;
                0
            } else {
                poison = op.is_exact() && a & mask(b as u32) != 0;
                a >> b
            }
        }
        AShr => {
            if b >= w as u64 {
                poison = true;
                if sa < 0 {
                    m
                } else {
                    0
                }
            } else {
                poison = op.is_exact() && a & mask(b as u32) != 0;
                (sa >> b) as u64 & m
            }
        }
        And => a & b,
        Or => a | b,
        Xor => a ^ b,
        Select => {
            if a & 1 == 1 {
                b
            } else {
                args[2]
            }
        }
        ZExt => a,
        SExt => sa as u64 & m,
        Trunc => a & m,
        Eq => (a == b) as u64,
        Ne => (a != b) as u64,
        Ult => (a < b) as u64,
        Slt => (sa < sb) as u64,
        Ule => (a <= b) as u64,
        Sle => (sa <= sb) as u64,
        SAddWithOverflow => {
            flag = !fits_signed(sa + sb, w);
            a.wrapping_add(b) & m
        }
        UAddWithOverflow => {
            flag = ua + ub > m as u128;
            a.wrapping_add(b) & m
        }
        SSubWithOverflow => {
            flag = !fits_signed(sa - sb, w);
            a.wrapping_sub(b) & m
        }
        USubWithOverflow => {
            flag = a < b;
            a.wrapping_sub(b) & m
        }
        SMulWithOverflow => {
            flag = !sa.checked_mul(sb).map_or(false, |p| fits_signed(p, w));
            a.wrapping_mul(b) & m
        }
        UMulWithOverflow => {
            flag = ua * ub > m as u128;
            a.wrapping_mul(b) & m
        }
        CtPop => a.count_ones() as u64,
        CtTz => {
            if a == 0 {
                w as u64
            } else {
                a.trailing_zeros() as u64
            }
        }
        CtLz => (a.leading_zeros() - (64 - w)) as u64,
        BSwap => {
            let bytes = w / 8;
            let mut out = 0u64;
            for i in 0..bytes {
                out |= ((a >> (8 * i)) & 0xff) << (8 * (bytes - 1 - i));
            }
            out
        }
        Phi | ExtractValue => unreachable!("handled by the evaluator"),
        _ => unreachable!("base() never returns a flagged opcode"),
    };
    (value, flag, poison, undefined)
}

fn combine(statuses: impl Iterator<Item = Status>) -> Status {
    let mut out = Status::Ok;
    for s in statuses {
        match s {
            Status::Ub => return Status::Ub,
            Status::Poison => out = Status::Poison,
            Status::Ok => {}
        }
    }
    out
}

/// Applies `op` to raw operands. `w` is the result width and `in_w` the
/// width of the first operand; `extractvalue` reads its index from the
/// second operand. Phi has no meaning outside a DAG and is rejected.
pub fn apply_raw(op: Opcode, w: u32, in_w: u32, ins: &[Raw]) -> Raw {
    match op {
        Opcode::Phi => panic!("phi needs its block"),
        Opcode::Select => {
            let c = ins[0];
            let chosen = ins[if c.value == 1 { 1 } else { 2 }];
            Raw {
                value: chosen.value,
                flag: false,
                status: if c.status == Status::Ok {
                    chosen.status
                } else {
                    c.status
                },
            }
        }
        Opcode::ExtractValue => {
            let t = ins[0];
            Raw {
                value: if ins[1].value == 0 { t.value } else { t.flag as u64 },
                flag: false,
                status: t.status,
            }
        }
        _ => {
            let args: Vec<u64> = ins.iter().map(|r| r.value).collect();
            let (value, flag, own_poison, own_ub) = apply(op, w, in_w, &args);
            let status = match combine(ins.iter().map(|r| r.status)) {
                Status::Ok if own_ub => Status::Ub,
                Status::Ok if own_poison => Status::Poison,
                s => s,
            };
            Raw {
                value,
                flag,
                status,
            }
        }
    }
}

/// Raw values of the instructions reachable from `roots`, indexed by
/// instruction index. Panics if `env` leaves an input unbound.
pub fn eval_dag(dag: &Dag, roots: &[InstId], env: &Env) -> Vec<Option<Raw>> {
    let mut vals: Vec<Option<Raw>> = vec![None; dag.len()];
    for id in dag.reachable(roots.iter().copied()) {
        let inst = dag.get(id);
        let get = |o: InstId| vals[o.index()].expect("operands precede users");
        let raw = match &inst.kind {
            InstKind::Var => Raw {
                value: *env
                    .vars
                    .get(&id)
                    .unwrap_or_else(|| panic!("unbound variable #{}", id.index()))
                    & mask(inst.width),
                flag: false,
                status: Status::Ok,
            },
            InstKind::Const(v) => Raw {
                value: *v,
                flag: false,
                status: Status::Ok,
            },
            InstKind::Block(n) => {
                let choice = *env
                    .blocks
                    .get(&id)
                    .unwrap_or_else(|| panic!("unbound block #{}", id.index()));
                assert!(choice < *n, "block choice out of range");
                Raw {
                    value: choice as u64,
                    flag: false,
                    status: Status::Ok,
                }
            }
            InstKind::Op(Opcode::Phi) => {
                let choice = get(inst.ops[0]).value as usize;
                get(inst.ops[1 + choice])
            }
            InstKind::Op(op) => {
                let ins: Vec<Raw> = inst.ops.iter().map(|&o| get(o)).collect();
                apply_raw(*op, inst.width, dag.get(inst.ops[0]).width, &ins)
            }
        };
        vals[id.index()] = Some(raw);
    }
    vals
}

/// Evaluates `root` under `env`.
pub fn eval(dag: &Dag, root: InstId, env: &Env) -> EvalResult {
    let raw = eval_dag(dag, &[root], env)[root.index()].unwrap();
    eval_raw_result(raw, dag.get(root).ty())
}

/// Result of evaluating a whole LHS.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LhsEval {
    /// Every pc holds and every blockpc whose predecessor is the chosen one
    /// holds, with both sides well defined.
    pub constrained: bool,
    pub root: Raw,
    pub result: EvalResult,
}

pub fn eval_lhs_full(lhs: &LeftHandSide, env: &Env) -> LhsEval {
    let vals = eval_dag(&lhs.dag, &lhs.roots(), env);
    let get = |id: InstId| vals[id.index()].unwrap();
    let holds = |a: InstId, b: InstId| {
        let (x, y) = (get(a), get(b));
        x.status == Status::Ok && y.status == Status::Ok && x.value == y.value
    };
    let pcs = lhs.pcs.iter().all(|pc| holds(pc.lhs, pc.rhs));
    let bpcs = lhs.blockpcs.iter().all(|b| {
        get(b.block).value != b.pred as u64 || holds(b.value, b.expected)
    });
    let root = get(lhs.root);
    LhsEval {
        constrained: pcs && bpcs,
        root,
        result: eval_raw_result(root, lhs.dag.get(lhs.root).ty()),
    }
}

/// `(constrained, result)` for `lhs` under `env`.
pub fn eval_lhs(lhs: &LeftHandSide, env: &Env) -> (bool, EvalResult) {
    let e = eval_lhs_full(lhs, env);
    (e.constrained, e.result)
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("state space of {bits} bits exceeds the limit of {limit}")]
pub struct StateSpaceTooLarge {
    pub bits: u32,
    pub limit: u32,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Row {
    pub env: Env,
    pub constrained: bool,
    pub result: EvalResult,
}

pub const DEFAULT_MAX_BITS: u32 = 20;

/// Entropy of the inputs of `lhs`: variable bits plus `ceil(log2 n)` per
/// block.
pub fn input_bits(lhs: &LeftHandSide) -> u32 {
    let vars: u32 = lhs.vars().iter().map(|&v| lhs.dag.get(v).width).sum();
    let blocks: u32 = lhs
        .blocks()
        .iter()
        .map(|&b| match lhs.dag.get(b).kind {
            InstKind::Block(n) => 32 - (n - 1).leading_zeros(),
            _ => 0,
        })
        .sum();
    vars + blocks
}

/// Every environment of `lhs` in a fixed order, lowest variable varying
/// fastest.
pub fn all_envs(lhs: &LeftHandSide) -> impl Iterator<Item = Env> {
    let mut radix: Vec<(InstId, bool, u64)> = Vec::new();
    for v in lhs.vars() {
        radix.push((v, true, 1u64 << lhs.dag.get(v).width));
    }
    for b in lhs.blocks() {
        if let InstKind::Block(n) = lhs.dag.get(b).kind {
            radix.push((b, false, n as u64));
        }
    }
    let total: u64 = radix.iter().map(|r| r.2).product();
    (0..total).map(move |mut i| {
        let mut env = Env::new();
        for &(id, is_var, n) in &radix {
            let digit = i % n;
            i /= n;
            if is_var {
                env.vars.insert(id, digit);
            } else {
                env.blocks.insert(id, digit as u32);
            }
        }
        env
    })
}

/// Evaluates `lhs` in every environment.
pub fn exhaustive_table(lhs: &LeftHandSide, max_bits: u32) -> Result<Vec<Row>, StateSpaceTooLarge> {
    let bits = input_bits(lhs);
    if bits > max_bits {
        return Err(StateSpaceTooLarge {
            bits,
            limit: max_bits,
        });
    }
    Ok(all_envs(lhs)
        .map(|env| {
            let (constrained, result) = eval_lhs(lhs, &env);
            Row {
                env,
                constrained,
                result,
            }
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ir::{parse_lhs, Width};

    fn w(n: u32) -> Width {
        Width::new(n).unwrap()
    }

    fn eval_text(text: &str) -> EvalResult {
        let lhs = parse_lhs(text).unwrap();
        eval(&lhs.dag, lhs.root, &Env::new())
    }

    fn val(v: u64, width: u32) -> EvalResult {
        EvalResult::Value(Constant::new(v, w(width)))
    }

    #[test]
    fn addnsw_overflow_is_poison() {
        let mut dag = Dag::new();
        let a = dag.constant(Constant::new(127, w(8)));
        let b = dag.constant(Constant::new(1, w(8)));
        let add = dag.op(Opcode::AddNsw, 8, vec![a, b]);
        assert_eq!(eval(&dag, add, &Env::new()), EvalResult::Poison);
    }

    #[test]
    fn select_ignores_the_unselected_arm() {
        let mut dag = Dag::new();
        let c = dag.constant(Constant::new(1, w(1)));
        let five = dag.constant(Constant::new(5, w(8)));
        let big = dag.constant(Constant::new(127, w(8)));
        let one = dag.constant(Constant::new(1, w(8)));
        let poison = dag.op(Opcode::AddNsw, 8, vec![big, one]);
        let s = dag.op(Opcode::Select, 8, vec![c, five, poison]);
        assert_eq!(eval(&dag, s, &Env::new()), val(5, 8));
        let s2 = dag.op(Opcode::Select, 8, vec![c, poison, five]);
        assert_eq!(eval(&dag, s2, &Env::new()), EvalResult::Poison);
    }

    #[test]
    fn division_by_zero_is_immediate_ub() {
        let lhs = parse_lhs("%x:i8 = var\n%d = udiv %x, 0\ninfer %d\n").unwrap();
        let env = Env::new().with_var(InstId(0), 9);
        assert_eq!(eval(&lhs.dag, lhs.root, &env), EvalResult::ImmediateUB);
    }

    #[test]
    fn intrinsics() {
        assert_eq!(eval_text("%x:i8 = var\n%c = ctpop 11:i8\ninfer %c\n"), val(3, 8));
        assert_eq!(eval_text("%x:i8 = var\n%c = bswap 0x1234:i16\ninfer %c\n"), val(0x3412, 16));
        assert_eq!(eval_text("%x:i8 = var\n%c = cttz 8:i8\ninfer %c\n"), val(3, 8));
        assert_eq!(eval_text("%x:i8 = var\n%c = ctlz 8:i8\ninfer %c\n"), val(4, 8));
        assert_eq!(eval_text("%x:i8 = var\n%c = ctlz 0:i8\ninfer %c\n"), val(8, 8));
        assert_eq!(eval_text("%x:i8 = var\n%c = cttz 0:i8\ninfer %c\n"), val(8, 8));
    }

    #[test]
    fn checked_multiply() {
        let lhs = parse_lhs(
            "%x:i8 = var\n%t = umul.with.overflow 200:i8, 2:i8\n%v = extractvalue %t, 0\ninfer %v\n",
        )
        .unwrap();
        let t = lhs.dag.get(lhs.root).ops[0];
        assert_eq!(
            eval(&lhs.dag, t, &Env::new()),
            EvalResult::Tuple(Constant::new(144, w(8)), Constant::new(1, w(1)))
        );
        assert_eq!(eval(&lhs.dag, lhs.root, &Env::new()), val(144, 8));
    }

    #[test]
    fn smt_division_values() {
        let (v, _, _, ub) = apply(Opcode::SDiv, 8, 8, &[0x80, 0xff]);
        assert_eq!((v, ub), (0x80, true));
        let (v, _, _, ub) = apply(Opcode::SRem, 8, 8, &[0x80, 0xff]);
        assert_eq!((v, ub), (0, true));
        assert_eq!(apply(Opcode::SDiv, 8, 8, &[0xf0, 0]).0, 1);
        assert_eq!(apply(Opcode::SDiv, 8, 8, &[5, 0]).0, 0xff);
        assert_eq!(apply(Opcode::URem, 8, 8, &[5, 0]).0, 5);
        assert_eq!(apply(Opcode::SDiv, 8, 8, &[0xf9, 2]).0, 0xfd);
        assert_eq!(apply(Opcode::SRem, 8, 8, &[0xf9, 2]).0, 0xff);
    }

    #[test]
    fn shifts() {
        assert_eq!(apply(Opcode::Shl, 8, 8, &[1, 8]), (0, false, true, false));
        assert_eq!(apply(Opcode::AShr, 8, 8, &[0x80, 9]).0, 0xff);
        assert!(apply(Opcode::ShlNuw, 8, 8, &[0x81, 1]).2);
        assert!(!apply(Opcode::ShlNsw, 8, 8, &[0xc0, 1]).2);
        assert!(apply(Opcode::ShlNsw, 8, 8, &[0x40, 1]).2);
        assert!(apply(Opcode::LShrExact, 8, 8, &[3, 1]).2);
        assert!(!apply(Opcode::AShrExact, 8, 8, &[0x84, 2]).2);
    }

    #[test]
    fn eq_ne_constrained() {
        let lhs = parse_lhs(
            "%a:i64 = var\n%x:i64 = var\n%y:i64 = var\n%0 = eq %a, %x\n%1 = ne %a, %y\n\
             %r = and %0, %1\n%c = slt %x, %y\npc %c 1\ninfer %r\n",
        )
        .unwrap();
        let env = |a, x, y| {
            Env::new()
                .with_var(InstId(0), a)
                .with_var(InstId(1), x)
                .with_var(InstId(2), y)
        };
        assert_eq!(eval_lhs(&lhs, &env(3, 3, 9)), (true, val(1, 1)));
        assert!(!eval_lhs(&lhs, &env(3, 9, 3)).0);
        assert!(!eval_lhs(&lhs, &env(3, 3, u64::MAX)).0);
    }

    #[test]
    fn poison_pc_side_is_unconstrained() {
        let lhs = parse_lhs("%x:i8 = var\n%a = addnsw %x, 1\n%c = slt %x, %a\npc %c 1\ninfer %x\n").unwrap();
        assert!(eval_lhs(&lhs, &Env::new().with_var(InstId(0), 3)).0);
        assert!(!eval_lhs(&lhs, &Env::new().with_var(InstId(0), 127)).0);
    }

    #[test]
    fn table_sizes() {
        let lhs = parse_lhs("%x:i2 = var\ninfer %x\n").unwrap();
        assert_eq!(exhaustive_table(&lhs, DEFAULT_MAX_BITS).unwrap().len(), 4);
        let big = parse_lhs("%x:i16 = var\n%y:i9 = var\n%z:i16 = zext %y\n%s = add %x, %z\ninfer %s\n").unwrap();
        assert_eq!(
            exhaustive_table(&big, DEFAULT_MAX_BITS),
            Err(StateSpaceTooLarge { bits: 25, limit: 20 })
        );
    }
}
