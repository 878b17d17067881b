use std::fmt;

use super::opcode::Opcode;

/// Widest bitvector the IR accepts.
pub const MAX_WIDTH: u32 = 64;

/// A bitvector width in bits, between 1 and [`MAX_WIDTH`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Width(u32);

impl Width {
    pub fn new(bits: u32) -> Option<Width> {
        (1..=MAX_WIDTH).contains(&bits).then_some(Width(bits))
    }

    pub fn bits(self) -> u32 {
        self.0
    }

    pub fn mask(self) -> u64 {
        mask(self.0)
    }
}

pub(crate) fn mask(bits: u32) -> u64 {
    if bits >= 64 {
        u64::MAX
    } else {
        (1u64 << bits) - 1
    }
}

/// A bitvector literal, kept in two's-complement form `0 <= value < 2^width`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Constant {
    value: u64,
    width: Width,
}

impl Constant {
    pub fn new(value: u64, width: Width) -> Constant {
        Constant {
            value: value & width.mask(),
            width,
        }
    }

    /// Sign-aware construction, so `from_i64(-1, 8)` is `255:i8`.
    pub fn from_i64(value: i64, width: Width) -> Constant {
        Constant::new(value as u64, width)
    }

    pub fn value(self) -> u64 {
        self.value
    }

    pub fn width(self) -> Width {
        self.width
    }

    pub fn as_signed(self) -> i64 {
        sign_extend(self.value, self.width.bits())
    }
}

impl fmt::Display for Constant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:i{}", self.value, self.width.bits())
    }
}

pub(crate) fn sign_extend(value: u64, bits: u32) -> i64 {
    if bits >= 64 {
        value as i64
    } else {
        let shift = 64 - bits;
        ((value << shift) as i64) >> shift
    }
}

/// Index of an [`Inst`] inside a [`Dag`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct InstId(pub(crate) u32);

impl InstId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum InstKind {
    Var,
    Const(u64),
    /// A block value with the given number of predecessors.
    Block(u32),
    Op(Opcode),
}

/// The type of a value.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Ty {
    Bits(u32),
    /// `(W-bit value, 1-bit overflow flag)` produced by checked arithmetic.
    Tuple(u32),
    Block,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Inst {
    pub kind: InstKind,
    /// Bit width of the value; for tuples the width of the value half, and 0
    /// for blocks.
    pub width: u32,
    pub ops: Vec<InstId>,
    pub name: Option<String>,
}

impl Inst {
    pub fn ty(&self) -> Ty {
        match self.kind {
            InstKind::Block(_) => Ty::Block,
            InstKind::Op(op) if op.is_with_overflow() => Ty::Tuple(self.width),
            _ => Ty::Bits(self.width),
        }
    }

    pub fn opcode(&self) -> Option<Opcode> {
        match self.kind {
            InstKind::Op(op) => Some(op),
            _ => None,
        }
    }

    pub fn constant(&self) -> Option<Constant> {
        match self.kind {
            InstKind::Const(v) => Width::new(self.width).map(|w| Constant::new(v, w)),
            _ => None,
        }
    }

    pub fn is_const(&self) -> bool {
        matches!(self.kind, InstKind::Const(_))
    }
}

/// Append-only arena of instructions. Operands always refer to instructions
/// with a smaller index, so index order is a topological order.
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash)]
pub struct Dag {
    insts: Vec<Inst>,
}

impl Dag {
    pub fn new() -> Dag {
        Dag::default()
    }

    pub fn len(&self) -> usize {
        self.insts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.insts.is_empty()
    }

    pub fn get(&self, id: InstId) -> &Inst {
        &self.insts[id.index()]
    }

    pub fn ids(&self) -> impl Iterator<Item = InstId> {
        (0..self.insts.len() as u32).map(InstId)
    }

    pub fn iter(&self) -> impl Iterator<Item = (InstId, &Inst)> {
        self.insts
            .iter()
            .enumerate()
            .map(|(i, inst)| (InstId(i as u32), inst))
    }

    /// Appends an instruction. Panics if an operand does not already exist,
    /// which is what keeps the arena acyclic.
    pub fn push(&mut self, inst: Inst) -> InstId {
        let id = InstId(self.insts.len() as u32);
        for op in &inst.ops {
            assert!(op.0 < id.0, "operand {op:?} is not defined before {id:?}");
        }
        self.insts.push(inst);
        id
    }

    pub fn var(&mut self, width: Width, name: Option<&str>) -> InstId {
        self.push(Inst {
            kind: InstKind::Var,
            width: width.bits(),
            ops: vec![],
            name: name.map(str::to_string),
        })
    }

    pub fn constant(&mut self, c: Constant) -> InstId {
        self.push(Inst {
            kind: InstKind::Const(c.value()),
            width: c.width().bits(),
            ops: vec![],
            name: None,
        })
    }

    pub fn block(&mut self, preds: u32) -> InstId {
        self.push(Inst {
            kind: InstKind::Block(preds),
            width: 0,
            ops: vec![],
            name: None,
        })
    }

    pub fn op(&mut self, opcode: Opcode, width: u32, ops: Vec<InstId>) -> InstId {
        self.push(Inst {
            kind: InstKind::Op(opcode),
            width,
            ops,
            name: None,
        })
    }

    /// Every instruction reachable from `roots`, in ascending index order.
    pub fn reachable(&self, roots: impl IntoIterator<Item = InstId>) -> Vec<InstId> {
        let mut seen = vec![false; self.insts.len()];
        let mut stack: Vec<InstId> = roots.into_iter().collect();
        while let Some(id) = stack.pop() {
            if std::mem::replace(&mut seen[id.index()], true) {
                continue;
            }
            stack.extend(self.get(id).ops.iter().copied());
        }
        seen.iter()
            .enumerate()
            .filter(|(_, &s)| s)
            .map(|(i, _)| InstId(i as u32))
            .collect()
    }
}

/// `pc lhs rhs`: on every execution reaching the root, `lhs == rhs`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct PathCondition {
    pub lhs: InstId,
    pub rhs: InstId,
}

/// `blockpc block pred value expected`: whenever the phis of `block` pick
/// predecessor `pred`, `value == expected`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct BlockPc {
    pub block: InstId,
    pub pred: u32,
    pub value: InstId,
    pub expected: InstId,
}

/// The unit of extraction, caching and synthesis: a root value plus the
/// dataflow facts known at its program point.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct LeftHandSide {
    pub dag: Dag,
    pub pcs: Vec<PathCondition>,
    pub blockpcs: Vec<BlockPc>,
    pub root: InstId,
}

impl LeftHandSide {
    /// Roots of everything the LHS mentions: pcs and blockpcs first, then the
    /// inferred value.
    pub fn roots(&self) -> Vec<InstId> {
        let mut roots = Vec::new();
        for pc in &self.pcs {
            roots.push(pc.lhs);
            roots.push(pc.rhs);
        }
        for bpc in &self.blockpcs {
            roots.push(bpc.block);
            roots.push(bpc.value);
            roots.push(bpc.expected);
        }
        roots.push(self.root);
        roots
    }

    pub fn reachable(&self) -> Vec<InstId> {
        self.dag.reachable(self.roots())
    }

    pub fn root_width(&self) -> u32 {
        self.dag.get(self.root).width
    }

    /// Free inputs of the LHS, in index order.
    pub fn vars(&self) -> Vec<InstId> {
        self.reachable()
            .into_iter()
            .filter(|&id| self.dag.get(id).kind == InstKind::Var)
            .collect()
    }

    pub fn blocks(&self) -> Vec<InstId> {
        self.reachable()
            .into_iter()
            .filter(|&id| matches!(self.dag.get(id).kind, InstKind::Block(_)))
            .collect()
    }

    /// Number of printed (non-constant) instructions.
    pub fn node_count(&self) -> usize {
        self.reachable()
            .into_iter()
            .filter(|&id| !self.dag.get(id).is_const())
            .count()
    }
}

/// A LHS together with a replacement value. The RHS lives in the same arena
/// and may reuse LHS values.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Optimization {
    pub lhs: LeftHandSide,
    pub rhs: InstId,
}

impl Optimization {
    /// Instructions reachable from the RHS root but not from the LHS.
    pub fn rhs_only(&self) -> Vec<InstId> {
        let lhs: std::collections::HashSet<InstId> = self.lhs.reachable().into_iter().collect();
        self.lhs
            .dag
            .reachable([self.rhs])
            .into_iter()
            .filter(|id| !lhs.contains(id))
            .collect()
    }
}
