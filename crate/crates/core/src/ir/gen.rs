//! Random well-typed left-hand sides, used by property tests and oracle
//! cross-checks.

use rand::seq::SliceRandom;
use rand::Rng;

use super::dag::{BlockPc, Constant, Dag, InstId, LeftHandSide, PathCondition, Ty, Width};
use super::opcode::Opcode;

#[derive(Debug, Clone)]
pub struct GenConfig {
    pub widths: Vec<u32>,
    pub max_vars: usize,
    pub max_ops: usize,
    pub opcodes: Vec<Opcode>,
    /// Probability of adding a block value (phis are only generated then).
    pub block_prob: f64,
    pub max_pcs: usize,
    pub max_blockpcs: usize,
    /// Probability that an operand is a fresh constant.
    pub const_prob: f64,
}

impl GenConfig {
    /// Small widths and every opcode: the configuration for exhaustive
    /// cross-checks.
    pub fn small() -> GenConfig {
        GenConfig {
            widths: vec![1, 2, 3, 4],
            max_vars: 3,
            max_ops: 4,
            opcodes: Opcode::ALL.to_vec(),
            block_prob: 0.2,
            max_pcs: 1,
            max_blockpcs: 1,
            const_prob: 0.25,
        }
    }
}

struct Gen<'a, R> {
    rng: &'a mut R,
    cfg: &'a GenConfig,
    dag: Dag,
    pool: Vec<(InstId, Ty)>,
    block: Option<(InstId, u32)>,
}

impl<R: Rng> Gen<'_, R> {
    fn width(&mut self) -> u32 {
        *self.cfg.widths.choose(self.rng).expect("at least one width")
    }

    fn constant(&mut self, w: u32) -> InstId {
        let width = Width::new(w).unwrap();
        let v = match self.rng.gen_range(0..4) {
            0 => 0,
            1 => 1,
            2 => width.mask(),
            _ => self.rng.gen::<u64>(),
        };
        self.dag.constant(Constant::new(v, width))
    }

    fn operand(&mut self, w: u32) -> InstId {
        let candidates: Vec<InstId> = self
            .pool
            .iter()
            .filter(|(_, t)| *t == Ty::Bits(w))
            .map(|&(id, _)| id)
            .collect();
        if candidates.is_empty() || self.rng.gen_bool(self.cfg.const_prob) {
            self.constant(w)
        } else {
            *candidates.choose(self.rng).unwrap()
        }
    }

    fn add(&mut self, op: Opcode, width: u32, ops: Vec<InstId>) -> InstId {
        let id = self.dag.op(op, width, ops);
        let ty = self.dag.get(id).ty();
        self.pool.push((id, ty));
        id
    }

    fn try_op(&mut self, op: Opcode) -> Option<InstId> {
        use Opcode::*;
        let widths = self.cfg.widths.clone();
        match op {
            Phi => {
                let (block, n) = self.block?;
                let w = self.width();
                let mut ops = vec![block];
                for _ in 0..n {
                    ops.push(self.operand(w));
                }
                Some(self.add(op, w, ops))
            }
            Select => {
                if !widths.contains(&1) {
                    return None;
                }
                let w = self.width();
                let c = self.operand(1);
                let a = self.operand(w);
                let b = self.operand(w);
                Some(self.add(op, w, vec![c, a, b]))
            }
            ZExt | SExt | Trunc => {
                let mut pairs = Vec::new();
                for &a in &widths {
                    for &b in &widths {
                        if (op == Trunc && b < a) || (op != Trunc && b > a) {
                            pairs.push((a, b));
                        }
                    }
                }
                let &(from, to) = pairs.choose(self.rng)?;
                let x = self.operand(from);
                Some(self.add(op, to, vec![x]))
            }
            ExtractValue => {
                let tuples: Vec<(InstId, u32)> = self
                    .pool
                    .iter()
                    .filter_map(|&(id, t)| match t {
                        Ty::Tuple(w) => Some((id, w)),
                        _ => None,
                    })
                    .collect();
                let &(t, w) = tuples.choose(self.rng)?;
                let index = self.rng.gen_range(0..2u64);
                let idx = self.dag.constant(Constant::new(index, Width::new(32).unwrap()));
                Some(self.add(op, if index == 0 { w } else { 1 }, vec![t, idx]))
            }
            BSwap => {
                let even: Vec<u32> = widths.iter().copied().filter(|w| w % 16 == 0).collect();
                let &w = even.choose(self.rng)?;
                let x = self.operand(w);
                Some(self.add(op, w, vec![x]))
            }
            _ if op.is_unary_intrinsic() => {
                let w = self.width();
                let x = self.operand(w);
                Some(self.add(op, w, vec![x]))
            }
            _ if op.is_comparison() => {
                let w = self.width();
                let a = self.operand(w);
                let b = self.operand(w);
                Some(self.add(op, 1, vec![a, b]))
            }
            _ => {
                let w = self.width();
                let a = self.operand(w);
                let b = self.operand(w);
                Some(self.add(op, w, vec![a, b]))
            }
        }
    }

    fn any_bits(&mut self) -> (InstId, u32) {
        let bits: Vec<(InstId, u32)> = self
            .pool
            .iter()
            .filter_map(|&(id, t)| match t {
                Ty::Bits(w) => Some((id, w)),
                _ => None,
            })
            .collect();
        *bits.choose(self.rng).expect("at least one variable")
    }
}

/// Generates a random well-typed LHS.
pub fn random_lhs<R: Rng>(rng: &mut R, cfg: &GenConfig) -> LeftHandSide {
    let mut g = Gen {
        rng,
        cfg,
        dag: Dag::new(),
        pool: Vec::new(),
        block: None,
    };
    let nvars = g.rng.gen_range(1..=cfg.max_vars.max(1));
    for _ in 0..nvars {
        let w = g.width();
        let id = g.dag.var(Width::new(w).unwrap(), None);
        g.pool.push((id, Ty::Bits(w)));
    }
    if g.rng.gen_bool(cfg.block_prob) && cfg.opcodes.contains(&Opcode::Phi) {
        let n = g.rng.gen_range(1..=3);
        g.block = Some((g.dag.block(n), n));
    }
    let nops = g.rng.gen_range(1..=cfg.max_ops.max(1));
    let mut last = None;
    let mut attempts = 0;
    let mut made = 0;
    while made < nops && attempts < nops * 20 {
        attempts += 1;
        let op = *cfg.opcodes.choose(g.rng).expect("at least one opcode");
        if let Some(id) = g.try_op(op) {
            made += 1;
            if matches!(g.dag.get(id).ty(), Ty::Bits(_)) {
                last = Some(id);
            }
        }
    }
    let root = match last {
        Some(id) if g.rng.gen_bool(0.8) => id,
        _ => g.any_bits().0,
    };
    let mut pcs = Vec::new();
    for _ in 0..g.rng.gen_range(0..=cfg.max_pcs) {
        let (v, w) = g.any_bits();
        let c = g.constant(w);
        pcs.push(PathCondition { lhs: v, rhs: c });
    }
    let mut blockpcs = Vec::new();
    if let Some((block, n)) = g.block {
        for _ in 0..g.rng.gen_range(0..=cfg.max_blockpcs) {
            let (v, w) = g.any_bits();
            let c = g.constant(w);
            blockpcs.push(BlockPc {
                block,
                pred: g.rng.gen_range(0..n),
                value: v,
                expected: c,
            });
        }
    }
    LeftHandSide {
        dag: g.dag,
        pcs,
        blockpcs,
        root,
    }
}
