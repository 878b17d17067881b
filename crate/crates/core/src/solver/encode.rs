//! SMT-LIB terms for IR instructions.
//!
//! Each instruction gets a value term plus two Boolean terms, `p` (poison)
//! and `u` (immediate UB), that follow the interpreter's propagation rules
//! exactly. Tuples are bitvectors of `W+1` bits with the overflow flag on
//! top.

use crate::ir::{mask, Dag, InstId, InstKind, Opcode, Ty};

/// The three terms describing one instruction.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NodeTerms {
    pub value: String,
    pub poison: String,
    pub ub: String,
}

pub fn bv(value: u64, width: u32) -> String {
    format!("(_ bv{} {width})", value & mask(width))
}

pub fn sort(width: u32) -> String {
    format!("(_ BitVec {width})")
}

/// Width of the selector bitvector for a block with `n` predecessors.
pub fn selector_width(n: u32) -> u32 {
    (32 - n.saturating_sub(1).leading_zeros()).max(1)
}

/// Sort of an instruction's value term.
pub fn value_sort(ty: Ty, dag_block_preds: Option<u32>) -> String {
    match ty {
        Ty::Bits(w) => sort(w),
        Ty::Tuple(w) => sort(w + 1),
        Ty::Block => sort(selector_width(dag_block_preds.unwrap_or(1))),
    }
}

pub fn not(a: &str) -> String {
    match a {
        "true" => "false".into(),
        "false" => "true".into(),
        _ => format!("(not {a})"),
    }
}

pub fn and(terms: &[&str]) -> String {
    if terms.contains(&"false") {
        return "false".into();
    }
    let rest: Vec<&str> = terms.iter().copied().filter(|t| *t != "true").collect();
    match rest.len() {
        0 => "true".into(),
        1 => rest[0].into(),
        _ => format!("(and {})", rest.join(" ")),
    }
}

pub fn or(terms: &[&str]) -> String {
    if terms.contains(&"true") {
        return "true".into();
    }
    let rest: Vec<&str> = terms.iter().copied().filter(|t| *t != "false").collect();
    match rest.len() {
        0 => "false".into(),
        1 => rest[0].into(),
        _ => format!("(or {})", rest.join(" ")),
    }
}

pub fn ite_bool(c: &str, a: &str, b: &str) -> String {
    if a == b {
        a.into()
    } else {
        format!("(ite {c} {a} {b})")
    }
}

fn bit(cond: &str) -> String {
    format!("(ite {cond} #b1 #b0)")
}

fn zx(k: u32, a: &str) -> String {
    if k == 0 {
        a.into()
    } else {
        format!("((_ zero_extend {k}) {a})")
    }
}

fn sx(k: u32, a: &str) -> String {
    if k == 0 {
        a.into()
    } else {
        format!("((_ sign_extend {k}) {a})")
    }
}

fn extract(hi: u32, lo: u32, a: &str) -> String {
    format!("((_ extract {hi} {lo}) {a})")
}

/// `bvop` on operands widened by `k` bits disagrees with the widened
/// narrow result: the operation overflowed.
fn overflows(bvop: &str, signed: bool, k: u32, a: &str, b: &str) -> String {
    let ext = if signed { sx } else { zx };
    format!(
        "(not (= ({bvop} {} {}) {}))",
        ext(k, a),
        ext(k, b),
        ext(k, &format!("({bvop} {a} {b})"))
    )
}

/// Value term and own poison / own UB conditions of `op` applied to operand
/// value terms. `w` is the result width (value width for tuples) and `in_w`
/// the width of the first operand.
pub fn op_terms(op: Opcode, w: u32, in_w: u32, args: &[String]) -> (String, String, String) {
    use Opcode::*;
    let a = args.first().map(String::as_str).unwrap_or("");
    let b = args.get(1).map(String::as_str).unwrap_or("");
    let flags = op.overflow_flags();
    let mut poison = "false".to_string();
    let mut ub = "false".to_string();
    let zero = bv(0, in_w);
    let value = match op.base() {
        Add | Sub | Mul => {
            let (f, k) = match op.base() {
                Add => ("bvadd", 1),
                Sub => ("bvsub", 1),
                _ => ("bvmul", w),
            };
            let mut conds = Vec::new();
            if flags.nsw() {
                conds.push(overflows(f, true, k, a, b));
            }
            if flags.nuw() {
                conds.push(if op.base() == Sub {
                    format!("(bvult {a} {b})")
                } else {
                    overflows(f, false, k, a, b)
                });
            }
            poison = or(&conds.iter().map(String::as_str).collect::<Vec<_>>());
            format!("({f} {a} {b})")
        }
        UDiv | URem => {
            ub = format!("(= {b} {zero})");
            if op.is_exact() {
                poison = format!("(and (not (= {b} {zero})) (not (= (bvurem {a} {b}) {zero})))");
            }
            let f = if op.base() == UDiv { "bvudiv" } else { "bvurem" };
            format!("({f} {a} {b})")
        }
        SDiv | SRem => {
            ub = format!(
                "(or (= {b} {zero}) (and (= {a} {}) (= {b} {})))",
                bv(1 << (in_w - 1), in_w),
                bv(u64::MAX, in_w)
            );
            if op.is_exact() {
                poison = format!("(and (not {ub}) (not (= (bvsrem {a} {b}) {zero})))");
            }
            let f = if op.base() == SDiv { "bvsdiv" } else { "bvsrem" };
            format!("({f} {a} {b})")
        }
        Shl | LShr | AShr => {
            let f = match op.base() {
                Shl => "bvshl",
                LShr => "bvlshr",
                _ => "bvashr",
            };
            let v = format!("({f} {a} {b})");
            let mut conds = vec![format!("(bvuge {b} {})", bv(w as u64, w))];
            if flags.nsw() {
                conds.push(format!("(not (= (bvashr {v} {b}) {a}))"));
            }
            if flags.nuw() {
                conds.push(format!("(not (= (bvlshr {v} {b}) {a}))"));
            }
            if op.is_exact() {
                conds.push(format!("(not (= (bvshl {v} {b}) {a}))"));
            }
            poison = or(&conds.iter().map(String::as_str).collect::<Vec<_>>());
            v
        }
        And => format!("(bvand {a} {b})"),
        Or => format!("(bvor {a} {b})"),
        Xor => format!("(bvxor {a} {b})"),
        Select => format!("(ite (= {a} #b1) {b} {})", args[2]),
        ZExt => zx(w - in_w, a),
        SExt => sx(w - in_w, a),
        Trunc => extract(w - 1, 0, a),
        Eq => bit(&format!("(= {a} {b})")),
        Ne => bit(&format!("(not (= {a} {b}))")),
        Ult => bit(&format!("(bvult {a} {b})")),
        Slt => bit(&format!("(bvslt {a} {b})")),
        Ule => bit(&format!("(bvule {a} {b})")),
        Sle => bit(&format!("(bvsle {a} {b})")),
        SAddWithOverflow | UAddWithOverflow | SSubWithOverflow | USubWithOverflow
        | SMulWithOverflow | UMulWithOverflow => {
            let (f, signed) = match op {
                SAddWithOverflow => ("bvadd", true),
                UAddWithOverflow => ("bvadd", false),
                SSubWithOverflow => ("bvsub", true),
                USubWithOverflow => ("bvsub", false),
                SMulWithOverflow => ("bvmul", true),
                _ => ("bvmul", false),
            };
            let flag = if op == USubWithOverflow {
                format!("(bvult {a} {b})")
            } else {
                let k = if f == "bvmul" { w } else { 1 };
                overflows(f, signed, k, a, b)
            };
            format!("(concat {} ({f} {a} {b}))", bit(&flag))
        }
        CtPop => {
            let bits: Vec<String> = (0..w).map(|i| zx(w - 1, &extract(i, i, a))).collect();
            if bits.len() == 1 {
                bits[0].clone()
            } else {
                format!("(bvadd {})", bits.join(" "))
            }
        }
        CtTz | CtLz => {
            let mut t = bv(w as u64, w);
            let order: Vec<u32> = if op == CtTz {
                (0..w).rev().collect()
            } else {
                (0..w).collect()
            };
            for i in order {
                let count = if op == CtTz { i } else { w - 1 - i };
                t = format!("(ite (= {} #b1) {} {t})", extract(i, i, a), bv(count as u64, w));
            }
            t
        }
        BSwap => {
            let bytes: Vec<String> = (0..w / 8).map(|i| extract(8 * i + 7, 8 * i, a)).collect();
            if bytes.len() == 1 {
                bytes[0].clone()
            } else {
                format!("(concat {})", bytes.join(" "))
            }
        }
        Phi | ExtractValue => unreachable!("handled by the encoder"),
        _ => unreachable!("base() never returns a flagged opcode"),
    };
    (value, poison, ub)
}

/// Combines operand statuses with an instruction's own conditions.
pub fn propagate(ops: &[&NodeTerms], own_poison: &str, own_ub: &str) -> (String, String) {
    let any_p = or(&ops.iter().map(|t| t.poison.as_str()).collect::<Vec<_>>());
    let any_u = or(&ops.iter().map(|t| t.ub.as_str()).collect::<Vec<_>>());
    let u = or(&[&any_u, &and(&[&not(&any_p), own_ub])]);
    let p = and(&[
        &not(&any_u),
        &or(&[&any_p, &and(&[&not(own_ub), own_poison])]),
    ]);
    (p, u)
}

/// Emits `define-fun`s for instructions of one DAG.
///
/// Names are `{prefix}v{i}`, `{prefix}p{i}` and `{prefix}u{i}`; variables and
/// blocks are rendered by the `leaf` callback.
pub struct Encoder<'a> {
    dag: &'a Dag,
    prefix: String,
    leaf: Box<dyn Fn(InstId) -> String + 'a>,
    terms: Vec<Option<NodeTerms>>,
    pub defs: Vec<String>,
}

impl<'a> Encoder<'a> {
    pub fn new(dag: &'a Dag, prefix: &str, leaf: impl Fn(InstId) -> String + 'a) -> Encoder<'a> {
        Encoder {
            dag,
            prefix: prefix.to_string(),
            leaf: Box::new(leaf),
            terms: vec![None; dag.len()],
            defs: Vec::new(),
        }
    }

    pub fn terms(&self, id: InstId) -> &NodeTerms {
        self.terms[id.index()]
            .as_ref()
            .expect("instruction not encoded")
    }

    /// Encodes every instruction reachable from `roots`.
    pub fn encode(&mut self, roots: &[InstId]) {
        for id in self.dag.reachable(roots.iter().copied()) {
            if self.terms[id.index()].is_none() {
                let t = self.node(id);
                self.terms[id.index()] = Some(t);
            }
        }
    }

    fn define(&mut self, kind: char, id: InstId, sort: &str, term: String) -> String {
        if term == "true" || term == "false" || !term.starts_with('(') {
            return term;
        }
        let name = format!("{}{kind}{}", self.prefix, id.index());
        self.defs
            .push(format!("(define-fun {name} () {sort} {term})"));
        name
    }

    fn node(&mut self, id: InstId) -> NodeTerms {
        let inst = self.dag.get(id);
        let ok = |value: String| NodeTerms {
            value,
            poison: "false".into(),
            ub: "false".into(),
        };
        let (value, poison, ub) = match &inst.kind {
            InstKind::Var | InstKind::Block(_) => return ok((self.leaf)(id)),
            InstKind::Const(v) => return ok(bv(*v, inst.width)),
            InstKind::Op(Opcode::Phi) => {
                let n = inst.ops.len() - 1;
                let k = match self.dag.get(inst.ops[0]).kind {
                    InstKind::Block(n) => selector_width(n),
                    _ => unreachable!(),
                };
                let sel = self.terms(inst.ops[0]).value.clone();
                let arms: Vec<NodeTerms> =
                    inst.ops[1..].iter().map(|&o| self.terms(o).clone()).collect();
                let mut v = arms[n - 1].value.clone();
                let mut p = arms[n - 1].poison.clone();
                let mut u = arms[n - 1].ub.clone();
                for i in (0..n - 1).rev() {
                    let c = format!("(= {sel} {})", bv(i as u64, k));
                    v = format!("(ite {c} {} {v})", arms[i].value);
                    p = ite_bool(&c, &arms[i].poison, &p);
                    u = ite_bool(&c, &arms[i].ub, &u);
                }
                (v, p, u)
            }
            InstKind::Op(Opcode::Select) => {
                let c = self.terms(inst.ops[0]).clone();
                let a = self.terms(inst.ops[1]).clone();
                let b = self.terms(inst.ops[2]).clone();
                let cond = format!("(= {} #b1)", c.value);
                let v = format!("(ite {cond} {} {})", a.value, b.value);
                let arm_u = ite_bool(&cond, &a.ub, &b.ub);
                let arm_p = ite_bool(&cond, &a.poison, &b.poison);
                let u = or(&[&c.ub, &and(&[&not(&c.poison), &arm_u])]);
                let p = and(&[&not(&c.ub), &or(&[&c.poison, &arm_p])]);
                (v, p, u)
            }
            InstKind::Op(Opcode::ExtractValue) => {
                let t = self.terms(inst.ops[0]).clone();
                let tw = self.dag.get(inst.ops[0]).width;
                let index = self.dag.get(inst.ops[1]).constant().unwrap().value();
                let v = if index == 0 {
                    extract(tw - 1, 0, &t.value)
                } else {
                    extract(tw, tw, &t.value)
                };
                (v, t.poison, t.ub)
            }
            InstKind::Op(op) => {
                let ins: Vec<NodeTerms> = inst.ops.iter().map(|&o| self.terms(o).clone()).collect();
                let args: Vec<String> = ins.iter().map(|t| t.value.clone()).collect();
                let in_w = self.dag.get(inst.ops[0]).width;
                let (v, own_p, own_u) = op_terms(*op, inst.width, in_w, &args);
                let refs: Vec<&NodeTerms> = ins.iter().collect();
                let (p, u) = propagate(&refs, &own_p, &own_u);
                (v, p, u)
            }
        };
        let vs = value_sort(inst.ty(), None);
        NodeTerms {
            value: self.define('v', id, &vs, value),
            poison: self.define('p', id, "Bool", poison),
            ub: self.define('u', id, "Bool", ub),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn selector_widths() {
        assert_eq!(selector_width(1), 1);
        assert_eq!(selector_width(2), 1);
        assert_eq!(selector_width(3), 2);
        assert_eq!(selector_width(4), 2);
        assert_eq!(selector_width(5), 3);
    }

    #[test]
    fn constant_folding_of_connectives() {
        assert_eq!(and(&["true", "x"]), "x");
        assert_eq!(or(&["false", "false"]), "false");
        assert_eq!(not("true"), "false");
        assert_eq!(and(&["a", "b"]), "(and a b)");
    }
}
