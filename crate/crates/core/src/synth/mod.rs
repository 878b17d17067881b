//! Counterexample-guided synthesis of cheaper right-hand sides.
//!
//! Candidate programs are wirings of a component library: every component
//! gets a location in a straight-line program and every operand a location to
//! read from. The find query chooses locations and constants that agree with
//! the LHS on all counterexamples collected so far; the verify query then
//! checks the candidate on all inputs.

mod library;

use std::collections::HashMap;
use std::fmt::Write;
use std::time::{Duration, Instant};

pub use library::{adapt_widths, default_components, Component, ComponentKind, Library};

use crate::interp::{eval_lhs_full, Env};
use crate::ir::{Constant, CostModel, InstId, LeftHandSide, Opcode, Optimization, Ty, Width};
use crate::solver::encode::{and, bv, ite_bool, not, op_terms, or, sort, value_sort};
use crate::solver::{build_seed_query, model_env, Model, Query, QueryKind, Solver, SolverVerdict, UbPolicy};
use crate::verify::{check_kind, target_value, Verdict, VerifyError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SynthMode {
    #[default]
    Full,
    /// Only a single constant may replace the LHS.
    ConstantsOnly,
    /// Only one-bit roots are attempted.
    BoolRootsOnly,
}

#[derive(Debug, Clone)]
pub struct SynthConfig {
    pub max_cost: u32,
    pub mode: SynthMode,
    /// Free constants per width.
    pub num_const: usize,
    /// Opcode multiset; an opcode listed twice may be used twice.
    pub components: Vec<Opcode>,
    pub cost_model: CostModel,
    pub policy: UbPolicy,
    pub per_lhs_timeout: Duration,
    pub per_query_timeout: Duration,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            max_cost: 3,
            mode: SynthMode::Full,
            num_const: 1,
            components: default_components(),
            cost_model: CostModel::default(),
            policy: UbPolicy::Exploit,
            per_lhs_timeout: Duration::from_secs(60),
            per_query_timeout: Duration::from_secs(10),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum SynthResult {
    Found { opt: Optimization, cost: u32 },
    NotFound,
    Timeout,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct SynthStats {
    pub find_queries: u32,
    pub verify_queries: u32,
    pub counterexamples: u32,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Outcome {
    pub result: SynthResult,
    pub stats: SynthStats,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum SynthError {
    #[error("{0}")]
    Solver(String),
    #[error(transparent)]
    Verify(#[from] VerifyError),
    #[error("counterexample repeated; the find and verify encodings disagree")]
    NoProgress,
    #[error("cannot decode candidate: {0}")]
    Decode(String),
}

/// Searches for the cheapest RHS of cost at most `cfg.max_cost`.
///
/// Cost levels are tried in increasing order, so a result is minimal within
/// the component library. A query timeout abandons its cost level; the
/// result is then `Timeout` unless a later level succeeds.
pub fn synthesize(solver: &Solver, lhs: &LeftHandSide, cfg: &SynthConfig) -> Result<Outcome, SynthError> {
    let deadline = Instant::now() + cfg.per_lhs_timeout;
    let mut stats = SynthStats::default();
    let done = |result, stats| Ok(Outcome { result, stats });
    if cfg.mode == SynthMode::BoolRootsOnly && lhs.root_width() != 1 {
        return done(SynthResult::NotFound, stats);
    }
    let budget = || {
        let left = deadline.saturating_duration_since(Instant::now());
        (!left.is_zero()).then(|| left.min(cfg.per_query_timeout))
    };

    let Some(t) = budget() else {
        return done(SynthResult::Timeout, stats);
    };
    stats.find_queries += 1;
    let mut examples: Vec<Example> = match solver.check(&build_seed_query(lhs, cfg.policy), t) {
        SolverVerdict::Unsat => return done(SynthResult::NotFound, stats),
        SolverVerdict::Timeout => return done(SynthResult::Timeout, stats),
        SolverVerdict::SolverError(e) => return Err(SynthError::Solver(e)),
        SolverVerdict::Sat(m) => vec![Example::new(lhs, model_env(lhs, &m))],
    };

    let full = adapt_widths(lhs, &cfg.components, &cfg.cost_model, cfg.num_const);
    let levels = match cfg.mode {
        SynthMode::ConstantsOnly => 0..=0,
        _ => 0..=cfg.max_cost,
    };
    let mut timed_out = false;
    for cost in levels {
        let lib = match cfg.mode {
            SynthMode::ConstantsOnly => constants_only(lhs, cfg.num_const),
            _ => full.at_cost(cost),
        };
        let root_from_inputs = cfg.mode != SynthMode::ConstantsOnly;
        let mut blocked: Vec<String> = Vec::new();
        loop {
            let Some(t) = budget() else {
                return done(SynthResult::Timeout, stats);
            };
            let find = FindQuery::new(lhs, &lib, cost, root_from_inputs, &examples, &blocked);
            stats.find_queries += 1;
            let model = match solver.check(&find.query, t) {
                SolverVerdict::Unsat => break,
                SolverVerdict::Timeout => {
                    timed_out = true;
                    break;
                }
                SolverVerdict::SolverError(e) => return Err(SynthError::Solver(e)),
                SolverVerdict::Sat(m) => m,
            };
            let (opt, block) = find.decode(lhs, &model)?;
            log::debug!("candidate at cost {cost}:\n{}", crate::ir::print_optimization(&opt));
            let Some(t) = budget() else {
                return done(SynthResult::Timeout, stats);
            };
            stats.verify_queries += 1;
            match check_kind(solver, &opt, cfg.policy, t, QueryKind::CegisVerify)? {
                Verdict::Valid => {
                    let cost = cfg.cost_model.rhs_cost(&opt);
                    return done(SynthResult::Found { opt, cost }, stats);
                }
                Verdict::Invalid(ce) => {
                    if examples.iter().any(|e| e.env == ce.env) {
                        return Err(SynthError::NoProgress);
                    }
                    stats.counterexamples += 1;
                    examples.push(Example::new(lhs, ce.env));
                    blocked.push(block);
                }
                Verdict::Timeout => {
                    timed_out = true;
                    break;
                }
            }
        }
    }
    done(
        if timed_out {
            SynthResult::Timeout
        } else {
            SynthResult::NotFound
        },
        stats,
    )
}

fn constants_only(lhs: &LeftHandSide, num_const: usize) -> Library {
    Library {
        inputs: lhs.vars().into_iter().map(|id| (id, lhs.dag.get(id).ty())).collect(),
        components: (0..num_const.max(1))
            .map(|_| Component {
                kind: ComponentKind::Const,
                inputs: vec![],
                output: Ty::Bits(lhs.root_width()),
                weight: 0,
            })
            .collect(),
    }
}

/// An input on which the LHS has an obligation, with the value the RHS
/// must produce there.
#[derive(Debug, Clone)]
struct Example {
    env: Env,
    target: u64,
}

impl Example {
    fn new(lhs: &LeftHandSide, env: Env) -> Example {
        let target = target_value(&eval_lhs_full(lhs, &env));
        Example { env, target }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Source {
    Input(usize),
    Comp(usize),
}

struct FindQuery<'a> {
    lib: &'a Library,
    /// Locations at or past this one hold unused components.
    end: u64,
    query: Query,
}

const COST_BITS: u32 = 16;

fn lo(j: usize) -> String {
    format!("lo{j}")
}

fn li(j: usize, k: usize) -> String {
    format!("li{j}_{k}")
}

fn used(j: usize) -> String {
    format!("used{j}")
}

fn konst(j: usize) -> String {
    format!("k{j}")
}

/// `(ite c0 v0 (ite c1 v1 ... vn))` over non-empty `alts`; the last value
/// is the fallback.
fn ite_chain(alts: &[(String, String)]) -> String {
    let (_, last) = alts.last().unwrap();
    alts[..alts.len() - 1]
        .iter()
        .rev()
        .fold(last.clone(), |acc, (c, v)| format!("(ite {c} {v} {acc})"))
}

impl<'a> FindQuery<'a> {
    /// The program has `n_in` input lines followed by as many component
    /// lines as a program of cost `cost` can use. Each used component sits
    /// on its own line; an unused component `j` sits at `end + j`. Operands
    /// and the result read a line, and per example every line carries the
    /// value of whatever component sits there.
    fn new(
        lhs: &LeftHandSide,
        lib: &'a Library,
        cost: u32,
        root_from_inputs: bool,
        examples: &[Example],
        blocked: &[String],
    ) -> FindQuery<'a> {
        let n_in = lib.inputs.len();
        let comps = &lib.components;
        let free = comps.iter().filter(|c| c.weight == 0).count();
        let paid = comps
            .iter()
            .map(|c| c.weight)
            .filter(|&w| w > 0)
            .min()
            .map_or(0, |w| (cost / w) as usize)
            .min(comps.len() - free);
        let end = n_in + free + paid;
        let top = end + comps.len();
        let lw = (usize::BITS - top.leading_zeros()).max(1);
        let at = |i: usize| bv(i as u64, lw);
        let lines = n_in..end;
        let mut tys: Vec<Ty> = comps.iter().map(|c| c.output).collect();
        tys.sort_by_key(|t| format!("{t:?}"));
        tys.dedup();
        let ty_index = |ty: Ty| tys.iter().position(|&t| t == ty);
        let input_locs = |ty: Ty| -> Vec<usize> {
            lib.inputs
                .iter()
                .enumerate()
                .filter(|(_, (_, t))| *t == ty)
                .map(|(i, _)| i)
                .collect()
        };
        let producers = |ty: Ty, except: Option<usize>| -> Vec<usize> {
            (0..comps.len())
                .filter(|&m| comps[m].output == ty && Some(m) != except)
                .collect()
        };

        let mut t = String::from("(set-option :produce-models true)\n(set-logic QF_BV)\n");
        let mut var_order = Vec::new();
        let ls = sort(lw);
        for (j, c) in comps.iter().enumerate() {
            writeln!(t, "(declare-const {} {ls})", lo(j)).unwrap();
            writeln!(t, "(define-fun {} () Bool (bvult {} {}))", used(j), lo(j), at(end)).unwrap();
            writeln!(
                t,
                "(assert (and (bvule {} {}) (or {} (= {} {}))))",
                at(n_in),
                lo(j),
                used(j),
                lo(j),
                at(end + j)
            )
            .unwrap();
            var_order.push(lo(j));
            for k in 0..c.inputs.len() {
                writeln!(t, "(declare-const {} {ls})", li(j, k)).unwrap();
                var_order.push(li(j, k));
            }
            if c.kind == ComponentKind::Const {
                writeln!(t, "(declare-const {} {})", konst(j), sort(c.width())).unwrap();
                var_order.push(konst(j));
            }
        }
        writeln!(t, "(declare-const lr {ls})").unwrap();
        var_order.push("lr".into());
        if comps.len() > 1 {
            let all: Vec<String> = (0..comps.len()).map(lo).collect();
            writeln!(t, "(assert (distinct {}))", all.join(" ")).unwrap();
        }

        // A used component reads inputs or earlier components of the right
        // type; reading a line below `end` makes its occupant used.
        for (j, c) in comps.iter().enumerate() {
            for (k, &ty) in c.inputs.iter().enumerate() {
                let mut choice: Vec<String> = input_locs(ty)
                    .into_iter()
                    .map(|i| format!("(= {} {})", li(j, k), at(i)))
                    .collect();
                choice.extend(producers(ty, Some(j)).into_iter().map(|m| format!("(= {} {})", li(j, k), lo(m))));
                let choice: Vec<&str> = choice.iter().map(String::as_str).collect();
                writeln!(
                    t,
                    "(assert (=> {} {}))",
                    used(j),
                    and(&[&or(&choice), &format!("(bvult {} {})", li(j, k), lo(j))])
                )
                .unwrap();
            }
        }
        // Symmetry breaking: operands of commutative components are ordered,
        // and of several identical components the lower-numbered ones are
        // used first and sit earlier.
        for (j, c) in comps.iter().enumerate() {
            if matches!(c.kind, ComponentKind::Op(op) if op.is_commutative()) && c.inputs[0] == c.inputs[1] {
                writeln!(t, "(assert (bvule {} {}))", li(j, 0), li(j, 1)).unwrap();
            }
            if let Some(prev) = (0..j).rev().find(|&p| comps[p] == *c) {
                writeln!(
                    t,
                    "(assert (=> {} (and {} (bvult {} {}))))",
                    used(j),
                    used(prev),
                    lo(prev),
                    lo(j)
                )
                .unwrap();
            }
        }
        let root_ty = Ty::Bits(lhs.root_width());
        let root_inputs: Vec<usize> = if root_from_inputs { input_locs(root_ty) } else { vec![] };
        let mut choice: Vec<String> = root_inputs.iter().map(|&i| format!("(= lr {})", at(i))).collect();
        choice.extend(
            producers(root_ty, None)
                .into_iter()
                .map(|m| format!("(and {} (= lr {}))", used(m), lo(m))),
        );
        let choice: Vec<&str> = choice.iter().map(String::as_str).collect();
        writeln!(t, "(assert {})", or(&choice)).unwrap();
        let weighted: Vec<String> = comps
            .iter()
            .enumerate()
            .filter(|(_, c)| c.weight > 0)
            .map(|(j, c)| format!("(ite {} {} {})", used(j), bv(c.weight as u64, COST_BITS), bv(0, COST_BITS)))
            .collect();
        match weighted.len() {
            0 => {}
            1 => writeln!(t, "(assert (bvule {} {}))", weighted[0], bv(cost as u64, COST_BITS)).unwrap(),
            _ => writeln!(
                t,
                "(assert (bvule (bvadd {}) {}))",
                weighted.join(" "),
                bv(cost as u64, COST_BITS)
            )
            .unwrap(),
        }
        for b in blocked {
            writeln!(t, "(assert (not {b}))").unwrap();
        }

        // Behaviour on each example.
        for (e, ex) in examples.iter().enumerate() {
            let input = |i: usize| {
                let (id, ty) = lib.inputs[i];
                let Ty::Bits(w) = ty else {
                    unreachable!("inputs are variables")
                };
                bv(ex.env.vars[&id], w)
            };
            let line = |p: usize, ty: Ty| {
                let ti = ty_index(ty).unwrap();
                (format!("v{e}_{p}_{ti}"), format!("vb{e}_{p}_{ti}"))
            };
            for p in lines.clone() {
                for (ti, &ty) in tys.iter().enumerate() {
                    writeln!(t, "(declare-const v{e}_{p}_{ti} {})", value_sort(ty, None)).unwrap();
                    writeln!(t, "(declare-const vb{e}_{p}_{ti} Bool)").unwrap();
                }
            }
            // What operand `k` of component `j` reads.
            let operand = |j: usize, k: usize, ty: Ty| -> Option<(String, String)> {
                let mut vals = Vec::new();
                let mut bads = Vec::new();
                for i in input_locs(ty) {
                    let c = format!("(= {} {})", li(j, k), at(i));
                    vals.push((c.clone(), input(i)));
                    bads.push((c, "false".to_string()));
                }
                if ty_index(ty).is_some() {
                    for p in lines.clone() {
                        let c = format!("(= {} {})", li(j, k), at(p));
                        let (v, b) = line(p, ty);
                        vals.push((c.clone(), v));
                        bads.push((c, b));
                    }
                }
                (!vals.is_empty()).then(|| (ite_chain(&vals), ite_chain(&bads)))
            };
            let mut binding = String::new();
            for (j, c) in comps.iter().enumerate() {
                let mut args = Vec::new();
                let mut bads = Vec::new();
                let mut readable = true;
                for (k, &ty) in c.inputs.iter().enumerate() {
                    let (a, ab) = operand(j, k, ty).unwrap_or_else(|| {
                        readable = false;
                        (bv(0, 1), "false".to_string())
                    });
                    let name = format!("a{e}_{j}_{k}");
                    let bname = format!("ab{e}_{j}_{k}");
                    if readable {
                        writeln!(t, "(define-fun {name} () {} {a})", value_sort(ty, None)).unwrap();
                    } else {
                        writeln!(t, "(declare-const {name} {})", value_sort(ty, None)).unwrap();
                    }
                    writeln!(t, "(define-fun {bname} () Bool {ab})").unwrap();
                    args.push(name);
                    bads.push(bname);
                }
                if !readable && e == 0 {
                    writeln!(t, "(assert (not {}))", used(j)).unwrap();
                }
                let (value, bad) = match c.kind {
                    ComponentKind::Const => (konst(j), "false".to_string()),
                    ComponentKind::Extract(index) => {
                        let w = c.inputs[0];
                        let Ty::Tuple(tw) = w else { unreachable!() };
                        let (hi, lo_) = if index == 0 { (tw - 1, 0) } else { (tw, tw) };
                        (format!("((_ extract {hi} {lo_}) {})", args[0]), bads[0].clone())
                    }
                    ComponentKind::Op(Opcode::Select) => {
                        let cond = format!("(= {} #b1)", args[0]);
                        (
                            format!("(ite {cond} {} {})", args[1], args[2]),
                            or(&[&bads[0], &ite_bool(&cond, &bads[1], &bads[2])]),
                        )
                    }
                    ComponentKind::Op(op) => {
                        let in_w = match c.inputs[0] {
                            Ty::Bits(w) | Ty::Tuple(w) => w,
                            Ty::Block => unreachable!(),
                        };
                        let (v, p, u) = op_terms(op, c.width(), in_w, &args);
                        let mut all: Vec<&str> = bads.iter().map(String::as_str).collect();
                        all.push(&p);
                        all.push(&u);
                        (v, or(&all))
                    }
                };
                writeln!(t, "(define-fun o{e}_{j} () {} {value})", value_sort(c.output, None)).unwrap();
                writeln!(t, "(define-fun ob{e}_{j} () Bool {bad})").unwrap();
                for p in lines.clone() {
                    let (v, b) = line(p, c.output);
                    writeln!(
                        binding,
                        "(assert (=> (= {} {}) (and (= {v} o{e}_{j}) (= {b} ob{e}_{j}))))",
                        lo(j),
                        at(p)
                    )
                    .unwrap();
                }
            }
            t.push_str(&binding);
            let target = bv(ex.target, lhs.root_width());
            let mut reads: Vec<(usize, String, String)> =
                root_inputs.iter().map(|&i| (i, input(i), "false".to_string())).collect();
            if ty_index(root_ty).is_some() {
                reads.extend(lines.clone().map(|p| {
                    let (v, b) = line(p, root_ty);
                    (p, v, b)
                }));
            }
            for (p, v, b) in reads {
                writeln!(
                    t,
                    "(assert (=> (= lr {}) {}))",
                    at(p),
                    and(&[&format!("(= {v} {target})"), &not(&b)])
                )
                .unwrap();
            }
        }
        t.push_str("(check-sat)\n");
        writeln!(t, "(get-value ({}))", var_order.join(" ")).unwrap();
        FindQuery {
            lib,
            end: end as u64,
            query: Query {
                text: t,
                kind: QueryKind::CegisFind,
                var_order,
            },
        }
    }

    /// Builds the candidate a model describes, and a clause excluding the
    /// same wiring and constants.
    fn decode(&self, lhs: &LeftHandSide, m: &Model) -> Result<(Optimization, String), SynthError> {
        let get = |s: &str| {
            m.get(s)
                .ok_or_else(|| SynthError::Decode(format!("no value for {s}")))
        };
        let n_in = self.lib.inputs.len();
        let mut at: HashMap<u64, usize> = HashMap::new();
        for j in 0..self.lib.components.len() {
            let l = get(&lo(j))?.value();
            if l < self.end {
                at.insert(l, j);
            }
        }
        let source = |l: Constant| -> Result<Source, SynthError> {
            let v = l.value();
            if (v as usize) < n_in {
                Ok(Source::Input(v as usize))
            } else {
                at.get(&v)
                    .map(|&j| Source::Comp(j))
                    .ok_or_else(|| SynthError::Decode(format!("location {v} is empty")))
            }
        };
        let mut opt = Optimization {
            lhs: lhs.clone(),
            rhs: lhs.root,
        };
        let mut built: HashMap<usize, InstId> = HashMap::new();
        let mut block = vec![format!("(= lr {})", fmt_bv(get("lr")?))];
        let root = source(get("lr")?)?;
        opt.rhs = self.build(root, &mut opt, &mut built, &mut block, &source, &get)?;
        Ok((opt, format!("(and {})", block.join(" "))))
    }

    #[allow(clippy::too_many_arguments)]
    fn build(
        &self,
        s: Source,
        opt: &mut Optimization,
        built: &mut HashMap<usize, InstId>,
        block: &mut Vec<String>,
        source: &dyn Fn(Constant) -> Result<Source, SynthError>,
        get: &dyn Fn(&str) -> Result<Constant, SynthError>,
    ) -> Result<InstId, SynthError> {
        let j = match s {
            Source::Input(i) => return Ok(self.lib.inputs[i].0),
            Source::Comp(j) => j,
        };
        if let Some(&id) = built.get(&j) {
            return Ok(id);
        }
        let c = &self.lib.components[j];
        block.push(format!("(= {} {})", lo(j), fmt_bv(get(&lo(j))?)));
        let mut ops = Vec::new();
        for k in 0..c.inputs.len() {
            let l = get(&li(j, k))?;
            block.push(format!("(= {} {})", li(j, k), fmt_bv(l)));
            ops.push(self.build(source(l)?, opt, built, block, source, get)?);
        }
        let dag = &mut opt.lhs.dag;
        let id = match c.kind {
            ComponentKind::Const => {
                let k = get(&konst(j))?;
                block.push(format!("(= {} {})", konst(j), fmt_bv(k)));
                dag.constant(k)
            }
            ComponentKind::Extract(index) => {
                let idx = dag.constant(Constant::new(index, Width::new(32).unwrap()));
                dag.op(Opcode::ExtractValue, c.width(), vec![ops[0], idx])
            }
            ComponentKind::Op(op) => dag.op(op, c.width(), ops),
        };
        built.insert(j, id);
        Ok(id)
    }
}

fn fmt_bv(c: Constant) -> String {
    bv(c.value(), c.width().bits())
}
