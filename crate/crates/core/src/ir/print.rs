use std::collections::HashMap;
use std::fmt::Write;

use super::dag::{Dag, InstId, InstKind, LeftHandSide, Optimization, Ty};

/// The `%N` names assigned by the printer.
#[derive(Debug, Clone, Default)]
pub struct Names(HashMap<InstId, String>);

impl Names {
    pub fn get(&self, id: InstId) -> Option<&str> {
        self.0.get(&id).map(String::as_str)
    }
}

struct Printer<'a> {
    dag: &'a Dag,
    names: Names,
    out: String,
}

impl Printer<'_> {
    fn operand(&self, id: InstId) -> String {
        let inst = self.dag.get(id);
        match inst.constant() {
            Some(c) => c.to_string(),
            None => self.names.0[&id].clone(),
        }
    }

    fn define(&mut self, id: InstId) {
        let inst = self.dag.get(id);
        if inst.is_const() {
            return;
        }
        let name = format!("%{}", self.names.0.len());
        let ty = match inst.ty() {
            Ty::Bits(w) => format!(":i{w}"),
            Ty::Tuple(w) => format!(":{{i{w},i1}}"),
            Ty::Block => String::new(),
        };
        let body = match &inst.kind {
            InstKind::Var => "var".to_string(),
            InstKind::Block(n) => format!("block {n}"),
            InstKind::Op(op) => {
                let args: Vec<String> = inst.ops.iter().map(|&o| self.operand(o)).collect();
                format!("{op} {}", args.join(", "))
            }
            InstKind::Const(_) => unreachable!(),
        };
        writeln!(self.out, "{name}{ty} = {body}").unwrap();
        self.names.0.insert(id, name);
    }

    fn lhs(&mut self, lhs: &LeftHandSide) {
        for id in lhs.reachable() {
            self.define(id);
        }
        for pc in &lhs.pcs {
            let line = format!("pc {} {}", self.operand(pc.lhs), self.operand(pc.rhs));
            writeln!(self.out, "{line}").unwrap();
        }
        for bpc in &lhs.blockpcs {
            let line = format!(
                "blockpc {} {} {} {}",
                self.operand(bpc.block),
                bpc.pred,
                self.operand(bpc.value),
                self.operand(bpc.expected)
            );
            writeln!(self.out, "{line}").unwrap();
        }
        let root = self.operand(lhs.root);
        writeln!(self.out, "infer {root}").unwrap();
    }
}

/// Serializes a LHS, renumbering values `%0`, `%1`, ... in definition order.
pub fn print_lhs(lhs: &LeftHandSide) -> String {
    print_lhs_with_names(lhs).0
}

pub fn print_lhs_with_names(lhs: &LeftHandSide) -> (String, Names) {
    let mut p = Printer {
        dag: &lhs.dag,
        names: Names::default(),
        out: String::new(),
    };
    p.lhs(lhs);
    (p.out, p.names)
}

/// Serializes a complete optimization: the LHS followed by any new RHS
/// instructions and the `result` line.
pub fn print_optimization(opt: &Optimization) -> String {
    print_optimization_with_names(opt).0
}

pub fn print_optimization_with_names(opt: &Optimization) -> (String, Names) {
    let mut p = Printer {
        dag: &opt.lhs.dag,
        names: Names::default(),
        out: String::new(),
    };
    p.lhs(&opt.lhs);
    for id in opt.rhs_only() {
        p.define(id);
    }
    let result = p.operand(opt.rhs);
    writeln!(p.out, "result {result}").unwrap();
    (p.out, p.names)
}
