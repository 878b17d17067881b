//! SMT-LIB query construction and the external solver interface.

pub mod encode;
mod process;
pub mod sexp;

use std::collections::BTreeMap;
use std::fmt::Write;
use std::time::Duration;

pub use encode::{Encoder, NodeTerms};
pub use process::{RunError, Solver, SolverConfig, SOLVER_ENV};

use crate::interp::Env;
use crate::ir::{Constant, InstId, InstKind, LeftHandSide, Optimization, Width};
use encode::{and, not, selector_width, sort};
use sexp::Sexp;

/// Whether verification may assume that the LHS is free of poison.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub enum UbPolicy {
    /// Inputs for which the LHS is poison or undefined impose no obligation.
    #[default]
    Exploit,
    /// The RHS must reproduce the LHS bit pattern even where the LHS is
    /// poison; only immediate UB in the LHS is assumed away.
    NoExploit,
}

impl UbPolicy {
    pub fn name(self) -> &'static str {
        match self {
            UbPolicy::Exploit => "exploit",
            UbPolicy::NoExploit => "no-exploit",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum QueryKind {
    Equivalence,
    CegisFind,
    CegisVerify,
}

impl QueryKind {
    fn tag(self) -> &'static str {
        match self {
            QueryKind::Equivalence => "equiv",
            QueryKind::CegisFind => "find",
            QueryKind::CegisVerify => "verify",
        }
    }
}

/// A complete solver script.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Query {
    pub text: String,
    pub kind: QueryKind,
    /// Symbols whose values are requested from a satisfying model.
    pub var_order: Vec<String>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Model(pub BTreeMap<String, Constant>);

impl Model {
    pub fn get(&self, sym: &str) -> Option<Constant> {
        self.0.get(sym).copied()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum SolverVerdict {
    Unsat,
    Sat(Model),
    Timeout,
    SolverError(String),
}

/// What an input symbol stands for.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Leaf {
    Var(InstId),
    Block(InstId),
}

/// The declarations and definitions describing a LHS.
#[derive(Debug, Clone)]
pub struct LhsEncoding {
    /// `declare-const`s and selector range assertions.
    pub decls: Vec<String>,
    pub defs: Vec<String>,
    pub root: NodeTerms,
    /// True iff every pc and applicable blockpc holds with defined sides.
    pub constrained: String,
    pub inputs: Vec<(String, Leaf)>,
    /// Terms of RHS instructions encoded with [`encode_lhs_and`].
    pub extra: Vec<NodeTerms>,
}

pub fn var_symbol(id: InstId) -> String {
    format!("x{}", id.index())
}

pub fn block_symbol(id: InstId) -> String {
    format!("b{}", id.index())
}

/// Encodes `lhs`; see [`LhsEncoding`].
pub fn encode_lhs(lhs: &LeftHandSide) -> LhsEncoding {
    encode_lhs_and(lhs, &[])
}

/// Encodes `lhs` together with further instructions of the same DAG, such
/// as a right-hand side.
pub fn encode_lhs_and(lhs: &LeftHandSide, extra: &[InstId]) -> LhsEncoding {
    let dag = &lhs.dag;
    let mut decls = Vec::new();
    let mut inputs = Vec::new();
    let mut roots = lhs.roots();
    roots.extend_from_slice(extra);
    for id in dag.reachable(roots.iter().copied()) {
        match dag.get(id).kind {
            InstKind::Var => {
                let s = var_symbol(id);
                decls.push(format!("(declare-const {s} {})", sort(dag.get(id).width)));
                inputs.push((s, Leaf::Var(id)));
            }
            InstKind::Block(n) => {
                let s = block_symbol(id);
                let k = selector_width(n);
                decls.push(format!("(declare-const {s} {})", sort(k)));
                if (n as u64) < (1u64 << k) {
                    decls.push(format!("(assert (bvult {s} {}))", encode::bv(n as u64, k)));
                }
                inputs.push((s, Leaf::Block(id)));
            }
            _ => {}
        }
    }
    let mut enc = Encoder::new(dag, "n", |id| match dag.get(id).kind {
        InstKind::Block(_) => block_symbol(id),
        _ => var_symbol(id),
    });
    enc.encode(&roots);
    let holds = |a: &NodeTerms, b: &NodeTerms| {
        and(&[
            &not(&a.poison),
            &not(&a.ub),
            &not(&b.poison),
            &not(&b.ub),
            &format!("(= {} {})", a.value, b.value),
        ])
    };
    let mut facts = Vec::new();
    for pc in &lhs.pcs {
        facts.push(holds(enc.terms(pc.lhs), enc.terms(pc.rhs)));
    }
    for bpc in &lhs.blockpcs {
        let k = match dag.get(bpc.block).kind {
            InstKind::Block(n) => selector_width(n),
            _ => unreachable!("blockpc on a non-block"),
        };
        facts.push(format!(
            "(=> (= {} {}) {})",
            block_symbol(bpc.block),
            encode::bv(bpc.pred as u64, k),
            holds(enc.terms(bpc.value), enc.terms(bpc.expected))
        ));
    }
    let constrained = and(&facts.iter().map(String::as_str).collect::<Vec<_>>());
    let root = enc.terms(lhs.root).clone();
    let extra = extra.iter().map(|&id| enc.terms(id).clone()).collect();
    LhsEncoding {
        decls,
        defs: std::mem::take(&mut enc.defs),
        root,
        constrained,
        inputs,
        extra,
    }
}

fn get_value(out: &mut String, syms: &[String]) {
    out.push_str("(check-sat)\n");
    if !syms.is_empty() {
        writeln!(out, "(get-value ({}))", syms.join(" ")).unwrap();
    }
}

/// Satisfiable iff some input satisfies the LHS facts (and, under
/// [`UbPolicy::Exploit`], makes the LHS well defined) while the RHS is
/// undefined or differs from the LHS.
pub fn build_equivalence_query(opt: &Optimization, policy: UbPolicy) -> Query {
    build_refinement_query(opt, policy, QueryKind::Equivalence)
}

pub(crate) fn build_refinement_query(opt: &Optimization, policy: UbPolicy, kind: QueryKind) -> Query {
    let enc = encode_lhs_and(&opt.lhs, &[opt.rhs]);
    let rhs = &enc.extra[0];
    let lhs = &enc.root;
    let mut text = String::new();
    text.push_str("(set-option :produce-models true)\n(set-logic BV)\n");
    for d in enc.decls.iter().chain(&enc.defs) {
        writeln!(text, "{d}").unwrap();
    }
    writeln!(text, "(assert {})", enc.constrained).unwrap();
    let hyp = match policy {
        UbPolicy::Exploit => and(&[&not(&lhs.poison), &not(&lhs.ub)]),
        UbPolicy::NoExploit => not(&lhs.ub),
    };
    writeln!(text, "(assert {hyp})").unwrap();
    let good = and(&[
        &not(&rhs.poison),
        &not(&rhs.ub),
        &format!("(= {} {})", lhs.value, rhs.value),
    ]);
    writeln!(text, "(assert {})", not(&good)).unwrap();
    let var_order: Vec<String> = enc.inputs.iter().map(|(s, _)| s.clone()).collect();
    get_value(&mut text, &var_order);
    Query {
        text,
        kind,
        var_order,
    }
}

/// Asks for any input that satisfies the LHS facts and on which the LHS is
/// well defined (or, under [`UbPolicy::NoExploit`], merely free of UB).
pub fn build_seed_query(lhs: &LeftHandSide, policy: UbPolicy) -> Query {
    let enc = encode_lhs(lhs);
    let mut text = String::new();
    text.push_str("(set-option :produce-models true)\n(set-logic QF_BV)\n");
    for d in enc.decls.iter().chain(&enc.defs) {
        writeln!(text, "{d}").unwrap();
    }
    writeln!(text, "(assert {})", enc.constrained).unwrap();
    let hyp = match policy {
        UbPolicy::Exploit => and(&[&not(&enc.root.poison), &not(&enc.root.ub)]),
        UbPolicy::NoExploit => not(&enc.root.ub),
    };
    writeln!(text, "(assert {hyp})").unwrap();
    let var_order: Vec<String> = enc.inputs.iter().map(|(s, _)| s.clone()).collect();
    get_value(&mut text, &var_order);
    Query {
        text,
        kind: QueryKind::CegisFind,
        var_order,
    }
}

/// Converts a model over LHS input symbols into an environment.
pub fn model_env(lhs: &LeftHandSide, model: &Model) -> Env {
    let mut env = Env::new();
    for id in lhs.vars() {
        let v = model.get(&var_symbol(id)).map_or(0, |c| c.value());
        env.vars.insert(id, v);
    }
    for id in lhs.blocks() {
        let v = model.get(&block_symbol(id)).map_or(0, |c| c.value());
        env.blocks.insert(id, v as u32);
    }
    env
}

/// Parses solver output for a query that ends in `check-sat` and
/// `get-value` over `var_order`.
pub fn parse_verdict(output: &str, var_order: &[String]) -> SolverVerdict {
    let mut lines = output.lines().filter(|l| !l.trim().is_empty());
    let first = lines.next().map(str::trim).unwrap_or("");
    match first {
        "unsat" => SolverVerdict::Unsat,
        "sat" => {
            let rest: Vec<&str> = lines.collect();
            match parse_model(&rest.join("\n"), var_order) {
                Ok(m) => SolverVerdict::Sat(m),
                Err(e) => SolverVerdict::SolverError(e),
            }
        }
        "unknown" => SolverVerdict::SolverError("solver answered unknown".into()),
        "" => SolverVerdict::SolverError("no output from solver".into()),
        other => SolverVerdict::SolverError(other.to_string()),
    }
}

pub(crate) fn parse_model(text: &str, var_order: &[String]) -> Result<Model, String> {
    let mut model = Model::default();
    if var_order.is_empty() {
        return Ok(model);
    }
    let parsed = sexp::parse_all(text).map_err(|e| e.to_string())?;
    for item in &parsed {
        let Sexp::List(pairs) = item else {
            return Err(format!("unexpected model text: {text}"));
        };
        for pair in pairs {
            match pair {
                Sexp::List(kv) if kv.len() == 2 => {
                    let Sexp::Atom(name) = &kv[0] else {
                        return Err(format!("unexpected model entry {pair:?}"));
                    };
                    let (v, w) = sexp::bitvector(&kv[1])
                        .ok_or_else(|| format!("unexpected model value {:?}", kv[1]))?;
                    let width = Width::new(w).ok_or_else(|| format!("bad width {w}"))?;
                    model.0.insert(name.clone(), Constant::new(v, width));
                }
                Sexp::Atom(a) if a == "error" => return Err(text.to_string()),
                _ => return Err(format!("unexpected model entry {pair:?}")),
            }
        }
    }
    for s in var_order {
        if !model.0.contains_key(s) {
            return Err(format!("model lacks a value for {s}"));
        }
    }
    Ok(model)
}

impl Solver {
    /// Runs `q` and interprets the answer.
    pub fn check(&self, q: &Query, timeout: Duration) -> SolverVerdict {
        match self.run_script(q.kind.tag(), &q.text, timeout) {
            Ok(out) => parse_verdict(&out, &q.var_order),
            Err(RunError::Timeout) => SolverVerdict::Timeout,
            Err(RunError::Failed(e)) => SolverVerdict::SolverError(e),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn verdict_parsing() {
        assert_eq!(parse_verdict("unsat\n(error \"model is not available\")\n", &["x0".into()]), SolverVerdict::Unsat);
        let SolverVerdict::Sat(m) = parse_verdict("sat\n((x0 #x03))\n", &["x0".into()]) else {
            panic!()
        };
        assert_eq!(m.get("x0").unwrap().value(), 3);
        assert!(matches!(
            parse_verdict("sat\n((x0 #x03))\n", &["x1".into()]),
            SolverVerdict::SolverError(_)
        ));
        assert!(matches!(parse_verdict("unknown\n", &[]), SolverVerdict::SolverError(_)));
    }

    #[test]
    fn queries_are_deterministic() {
        let opt = crate::ir::parse_optimization(
            "%x:i8 = var\n%y:i8 = var\n%d = udiv %x, %y\ninfer %d\nresult %x\n",
        )
        .unwrap();
        let a = build_equivalence_query(&opt, UbPolicy::Exploit);
        let b = build_equivalence_query(&opt, UbPolicy::Exploit);
        assert_eq!(a.text, b.text);
        assert!(a.text.contains("(= x1 (_ bv0 8))"), "{}", a.text);
    }

    #[test]
    fn single_var_encoding() {
        let lhs = crate::ir::parse_lhs("%x:i8 = var\ninfer %x\n").unwrap();
        let enc = encode_lhs(&lhs);
        assert_eq!(enc.root.value, "x0");
        assert_eq!(enc.root.poison, "false");
        assert_eq!(enc.root.ub, "false");
        assert_eq!(enc.constrained, "true");
    }
}
