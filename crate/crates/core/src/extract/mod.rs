//! Harvesting left-hand sides from SSA control-flow graphs.
//!
//! Every integer-valued instruction becomes the root of a candidate. Its
//! dataflow is followed backwards to parameters and opaque values; facts
//! from the dominating branches become pcs, and facts known on each edge
//! into a merge block become blockpcs on that block's value.

mod cfg;
mod exec;

use std::collections::{HashMap, HashSet};
use std::fmt;

pub use cfg::{parse_cfg, BasicBlock, CfgFunction, FrontOp, Instr, Operand, Phi, Terminator};
pub use exec::{execute, ExecError, Execution};

use crate::ir::{
    canonicalize, print_lhs, typecheck, BlockPc, Constant, Dag, Diagnostic, Inst, InstId, InstKind,
    LeftHandSide, Opcode, PathCondition, Width,
};

pub const DEFAULT_MAX_BYTES: usize = 1024;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ExtractionConfig {
    /// Candidates whose printed LHS is longer are dropped.
    pub max_bytes: usize,
    /// Values further than this from the root become inputs.
    pub max_depth: Option<usize>,
    pub pcs: bool,
    pub blockpcs: bool,
}

impl Default for ExtractionConfig {
    fn default() -> Self {
        ExtractionConfig {
            max_bytes: DEFAULT_MAX_BYTES,
            max_depth: None,
            pcs: true,
            blockpcs: true,
        }
    }
}

/// Where a candidate's root lives: phis and instructions of a block are
/// numbered together, phis first.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Site {
    pub function: String,
    pub block: String,
    pub index: usize,
}

impl fmt::Display for Site {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}:{}", self.function, self.block, self.index)
    }
}

/// What an input of a candidate stands for in the function.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Origin {
    Param(String),
    /// A load, call, or other value with no model.
    Opaque(String),
    /// A value whose definition was cut off: a loop-carried phi, or a value
    /// beyond the depth limit.
    Cut(String),
    /// The predecessor choice of the named block.
    Block(String),
}

#[derive(Debug, Clone)]
pub struct Candidate {
    pub lhs: LeftHandSide,
    pub site: Site,
    /// Every var and block of `lhs`.
    pub inputs: Vec<(InstId, Origin)>,
    pub text: String,
}

#[derive(Debug, Clone, Default)]
pub struct Extraction {
    pub candidates: Vec<Candidate>,
    /// Candidates considered; `dropped` of them exceeded the size limit.
    pub total: usize,
    pub dropped: usize,
}

impl Extraction {
    fn merge(&mut self, other: Extraction) {
        self.candidates.extend(other.candidates);
        self.total += other.total;
        self.dropped += other.dropped;
    }
}

/// Parses `text` and extracts from every function in it.
pub fn extract_text(text: &str, cfg: &ExtractionConfig) -> Result<Extraction, Vec<Diagnostic>> {
    let mut out = Extraction::default();
    for f in parse_cfg(text)? {
        out.merge(extract_candidates(&f, cfg));
    }
    Ok(out)
}

pub fn extract_candidates(f: &CfgFunction, cfg: &ExtractionConfig) -> Extraction {
    let mut out = Extraction::default();
    for (bi, b) in f.blocks.iter().enumerate() {
        let roots = b.phis.iter().map(|p| &p.name).enumerate().chain(
            b.insts
                .iter()
                .enumerate()
                .filter(|(_, i)| !is_tuple(i))
                .map(|(k, i)| (b.phis.len() + k, &i.name)),
        );
        for (index, name) in roots {
            let Some(c) = harvest(f, cfg, bi, name) else {
                continue;
            };
            out.total += 1;
            if c.text.len() > cfg.max_bytes {
                out.dropped += 1;
                log::debug!("dropping {}: {} bytes", c.site, c.text.len());
                continue;
            }
            out.candidates.push(Candidate {
                site: Site {
                    function: f.name.clone(),
                    block: b.label.clone(),
                    index,
                },
                ..c
            });
        }
    }
    out
}

fn is_tuple(i: &Instr) -> bool {
    matches!(i.op, FrontOp::Ir(op) if op.is_with_overflow())
}

#[derive(Debug, Clone, Copy)]
enum Def {
    Param(u32),
    Phi(usize, usize),
    Inst(usize, usize),
}

#[derive(Debug, Clone)]
enum Fact {
    Eq(Operand, Constant),
    Ne(Operand, Constant),
}

fn bit(v: u64) -> Constant {
    Constant::new(v, Width::new(1).unwrap())
}

/// Facts that hold whenever control has just moved from `from` to `to`.
fn edge_facts(f: &CfgFunction, from: usize, to: usize) -> Vec<Fact> {
    let label = &f.blocks[to].label;
    match &f.blocks[from].term {
        Terminator::Br(c, t, e) if t != e => {
            vec![Fact::Eq(c.clone(), bit((t == label) as u64))]
        }
        Terminator::Switch(v, d, cases) => {
            let hits: Vec<Constant> = cases.iter().filter(|(_, l)| l == label).map(|(k, _)| *k).collect();
            match (d == label, hits.len()) {
                (false, 1) => vec![Fact::Eq(v.clone(), hits[0])],
                (true, 0) => cases.iter().map(|(k, _)| Fact::Ne(v.clone(), *k)).collect(),
                _ => vec![],
            }
        }
        _ => vec![],
    }
}

/// Facts from the edges into `b` and its dominators up to, not including,
/// `stop`: each such block with a single predecessor was entered along that
/// edge.
fn dominator_facts(f: &CfgFunction, b: usize, stop: Option<usize>) -> Vec<Fact> {
    let mut facts = Vec::new();
    let mut x = Some(b);
    while let Some(cur) = x {
        if Some(cur) == stop {
            break;
        }
        if let [p] = f.preds[cur][..] {
            facts.extend(edge_facts(f, p, cur));
        }
        x = f.idom(cur);
    }
    facts
}

struct Walk<'a> {
    f: &'a CfgFunction,
    cfg: &'a ExtractionConfig,
    defs: HashMap<&'a str, Def>,
    dag: Dag,
    memo: HashMap<String, InstId>,
    cuts: HashMap<String, InstId>,
    active: HashSet<String>,
    origins: HashMap<String, Origin>,
    blocks: Vec<(usize, InstId)>,
}

impl<'a> Walk<'a> {
    fn new(f: &'a CfgFunction, cfg: &'a ExtractionConfig) -> Walk<'a> {
        let mut defs = HashMap::new();
        for (p, w) in &f.params {
            defs.insert(p.as_str(), Def::Param(*w));
        }
        for (bi, b) in f.blocks.iter().enumerate() {
            for (k, p) in b.phis.iter().enumerate() {
                defs.insert(p.name.as_str(), Def::Phi(bi, k));
            }
            for (k, i) in b.insts.iter().enumerate() {
                defs.insert(i.name.as_str(), Def::Inst(bi, k));
            }
        }
        Walk {
            f,
            cfg,
            defs,
            dag: Dag::new(),
            memo: HashMap::new(),
            cuts: HashMap::new(),
            active: HashSet::new(),
            origins: HashMap::new(),
            blocks: Vec::new(),
        }
    }

    fn width(&self, name: &str) -> u32 {
        match self.defs[name] {
            Def::Param(w) => w,
            Def::Phi(b, k) => self.f.blocks[b].phis[k].width,
            Def::Inst(b, k) => self.f.blocks[b].insts[k].width,
        }
    }

    fn input(&mut self, name: &str, origin: Origin) -> InstId {
        let w = Width::new(self.width(name)).unwrap();
        let id = self.dag.var(w, Some(name));
        self.origins.insert(name.to_string(), origin);
        id
    }

    fn cut(&mut self, name: &str) -> InstId {
        if let Some(&id) = self.cuts.get(name) {
            return id;
        }
        let id = self.input(name, Origin::Cut(name.to_string()));
        self.cuts.insert(name.to_string(), id);
        id
    }

    fn constant(&mut self, c: Constant) -> InstId {
        self.dag.constant(c)
    }

    fn operand(&mut self, o: &Operand, depth: usize) -> InstId {
        match o {
            Operand::Value(n) => self.value(n, depth),
            Operand::Const(c) => self.constant(*c),
            Operand::Undef(w) => self.constant(Constant::new(0, Width::new(*w).unwrap())),
        }
    }

    fn block_value(&mut self, b: usize) -> InstId {
        if let Some(&(_, id)) = self.blocks.iter().find(|(x, _)| *x == b) {
            return id;
        }
        let id = self.dag.push(Inst {
            kind: InstKind::Block(self.f.preds[b].len() as u32),
            width: 0,
            ops: vec![],
            name: Some(self.f.blocks[b].label.clone()),
        });
        self.blocks.push((b, id));
        id
    }

    fn value(&mut self, name: &str, depth: usize) -> InstId {
        if let Some(&id) = self.memo.get(name) {
            return id;
        }
        if self.active.contains(name) || self.cfg.max_depth.is_some_and(|d| depth > d) {
            return self.cut(name);
        }
        self.active.insert(name.to_string());
        let f = self.f;
        let id = match self.defs[name] {
            Def::Param(_) => self.input(name, Origin::Param(name.to_string())),
            Def::Phi(b, _) if f.is_loop_entry(b) => self.cut(name),
            Def::Phi(b, k) => {
                let phi = &f.blocks[b].phis[k];
                let blk = self.block_value(b);
                let mut ops = vec![blk];
                for (o, _) in &phi.incoming {
                    ops.push(self.operand(o, depth + 1));
                }
                self.dag.op(Opcode::Phi, phi.width, ops)
            }
            Def::Inst(b, k) => self.lower(&f.blocks[b].insts[k], depth),
        };
        self.active.remove(name);
        self.memo.insert(name.to_string(), id);
        id
    }

    fn lower(&mut self, i: &Instr, depth: usize) -> InstId {
        let args = |w: &mut Self| -> Vec<InstId> { i.args.iter().map(|a| w.operand(a, depth + 1)).collect() };
        let swapped = |op| (op, true);
        let (op, swap) = match i.op {
            FrontOp::Load | FrontOp::Call => return self.input(&i.name, Origin::Opaque(i.name.clone())),
            FrontOp::Pass => {
                let a = args(self)[0];
                let aw = self.dag.get(a).width;
                return match aw.cmp(&i.width) {
                    std::cmp::Ordering::Equal => a,
                    std::cmp::Ordering::Less => self.dag.op(Opcode::ZExt, i.width, vec![a]),
                    std::cmp::Ordering::Greater => self.dag.op(Opcode::Trunc, i.width, vec![a]),
                };
            }
            FrontOp::Gep => {
                let a = args(self);
                let unit = matches!(i.args[2], Operand::Const(c) if c.value() == 1);
                let offset = if unit {
                    a[1]
                } else {
                    self.dag.op(Opcode::Mul, i.width, vec![a[1], a[2]])
                };
                return self.dag.op(Opcode::Add, i.width, vec![a[0], offset]);
            }
            FrontOp::Ugt => swapped(Opcode::Ult),
            FrontOp::Sgt => swapped(Opcode::Slt),
            FrontOp::Uge => swapped(Opcode::Ule),
            FrontOp::Sge => swapped(Opcode::Sle),
            FrontOp::Ir(op) => (op, false),
        };
        let mut a = args(self);
        if swap {
            a.swap(0, 1);
        }
        self.dag.op(op, i.width, a)
    }

    fn fact(&mut self, fact: &Fact) -> Option<(InstId, InstId)> {
        let (o, value, expected) = match fact {
            Fact::Eq(o, k) => (o, None, *k),
            Fact::Ne(o, k) => (o, Some(*k), bit(1)),
        };
        if !matches!(o, Operand::Value(_)) {
            return None;
        }
        let v = self.operand(o, 1);
        let lhs = match value {
            None => v,
            Some(k) => {
                let c = self.constant(k);
                self.dag.op(Opcode::Ne, 1, vec![v, c])
            }
        };
        let rhs = self.constant(expected);
        Some((lhs, rhs))
    }
}

fn harvest(f: &CfgFunction, cfg: &ExtractionConfig, root_block: usize, name: &str) -> Option<Candidate> {
    let mut w = Walk::new(f, cfg);
    let root = w.value(name, 0);
    if !matches!(w.dag.get(root).kind, InstKind::Op(_)) {
        return None;
    }
    let mut pcs = Vec::new();
    let mut seen: HashSet<(InstId, u64)> = HashSet::new();
    let mut dedup = |w: &Walk, lhs: InstId, rhs: InstId| {
        let c = w.dag.get(rhs).constant().unwrap().value();
        seen.insert((lhs, c))
    };
    if cfg.pcs {
        for fact in dominator_facts(f, root_block, None) {
            if let Some((l, r)) = w.fact(&fact) {
                if dedup(&w, l, r) {
                    pcs.push(PathCondition { lhs: l, rhs: r });
                }
            }
        }
    }
    let mut blockpcs = Vec::new();
    if cfg.blockpcs {
        let mut done = 0;
        let mut seen_b: HashSet<(InstId, u32, InstId, u64)> = HashSet::new();
        while done < w.blocks.len() {
            let (b, blk) = w.blocks[done];
            done += 1;
            if !f.dominates(b, root_block) {
                continue;
            }
            for (i, &p) in f.preds[b].iter().enumerate() {
                let mut facts = edge_facts(f, p, b);
                facts.extend(dominator_facts(f, p, f.idom(b)));
                for fact in facts {
                    if let Some((value, expected)) = w.fact(&fact) {
                        let c = w.dag.get(expected).constant().unwrap().value();
                        if seen_b.insert((blk, i as u32, value, c)) {
                            blockpcs.push(BlockPc {
                                block: blk,
                                pred: i as u32,
                                value,
                                expected,
                            });
                        }
                    }
                }
            }
        }
    }
    let lhs = canonicalize(&LeftHandSide {
        dag: w.dag,
        pcs,
        blockpcs,
        root,
    });
    debug_assert!(typecheck(&lhs).is_empty(), "{:?}", typecheck(&lhs));
    let mut inputs = Vec::new();
    for id in lhs.vars().into_iter().chain(lhs.blocks()) {
        let n = lhs.dag.get(id).name.clone().unwrap_or_default();
        let origin = match lhs.dag.get(id).kind {
            InstKind::Block(_) => Origin::Block(n),
            _ => w.origins[&n].clone(),
        };
        inputs.push((id, origin));
    }
    let text = print_lhs(&lhs);
    Some(Candidate {
        lhs,
        site: Site {
            function: f.name.clone(),
            block: f.blocks[root_block].label.clone(),
            index: 0,
        },
        inputs,
        text,
    })
}

/// One line per candidate, `site<TAB>file<TAB>bytes`, followed by
/// `#`-prefixed totals.
pub fn manifest(entries: &[(String, &Candidate)], total: usize, dropped: usize) -> String {
    let mut s = String::from("# site\tfile\tbytes\n");
    for (file, c) in entries {
        s.push_str(&format!("{}\t{}\t{}\n", c.site, file, c.text.len()));
    }
    s.push_str(&format!("# total\t{total}\n# emitted\t{}\n# dropped\t{dropped}\n", entries.len()));
    s
}
