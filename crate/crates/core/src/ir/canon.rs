use std::cmp::Ordering;
use std::collections::HashMap;

use super::dag::{BlockPc, Dag, Inst, InstId, LeftHandSide, PathCondition};

struct Rebuild<'a> {
    old: &'a Dag,
    new: Dag,
    map: HashMap<InstId, InstId>,
}

impl Rebuild<'_> {
    /// Orders commutative operands: values already rebuilt first (by new
    /// index), then unvisited values by old index, constants last.
    fn order(&self, a: InstId, b: InstId) -> Ordering {
        let key = |id: InstId| {
            let inst = self.old.get(id);
            if let Some(c) = inst.constant() {
                (2u8, c.width().bits() as u64, c.value())
            } else if let Some(&n) = self.map.get(&id) {
                (0, n.index() as u64, 0)
            } else {
                (1, id.index() as u64, 0)
            }
        };
        key(a).cmp(&key(b))
    }

    fn visit(&mut self, id: InstId) -> InstId {
        if let Some(&n) = self.map.get(&id) {
            return n;
        }
        let inst = self.old.get(id);
        let mut ops = inst.ops.clone();
        if inst.opcode().is_some_and(|op| op.is_commutative()) {
            ops.sort_by(|&a, &b| self.order(a, b));
        }
        let new_ops: Vec<InstId> = ops.into_iter().map(|o| self.visit(o)).collect();
        let n = self.new.push(Inst {
            kind: inst.kind.clone(),
            width: inst.width,
            ops: new_ops,
            name: inst.name.clone(),
        });
        self.map.insert(id, n);
        n
    }
}

/// Rebuilds `lhs` in canonical form: unreachable instructions are dropped,
/// instructions are renumbered in depth-first order from the root, and the
/// operands of commutative instructions are sorted.
pub fn canonicalize(lhs: &LeftHandSide) -> LeftHandSide {
    let mut rb = Rebuild {
        old: &lhs.dag,
        new: Dag::new(),
        map: HashMap::new(),
    };
    let root = rb.visit(lhs.root);
    let pcs = lhs
        .pcs
        .iter()
        .map(|pc| PathCondition {
            lhs: rb.visit(pc.lhs),
            rhs: rb.visit(pc.rhs),
        })
        .collect();
    let blockpcs = lhs
        .blockpcs
        .iter()
        .map(|b| BlockPc {
            block: rb.visit(b.block),
            pred: b.pred,
            value: rb.visit(b.value),
            expected: rb.visit(b.expected),
        })
        .collect();
    LeftHandSide {
        dag: rb.new,
        pcs,
        blockpcs,
        root,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ir::{parse_lhs, print_lhs};

    fn canon(text: &str) -> String {
        print_lhs(&canonicalize(&parse_lhs(text).unwrap()))
    }

    #[test]
    fn constants_go_last() {
        assert_eq!(
            canon("%x:i8 = var\n%y = add 1:i8, %x\ninfer %y\n"),
            "%0:i8 = var\n%1:i8 = add %0, 1:i8\ninfer %1\n"
        );
    }

    #[test]
    fn definition_order_breaks_ties() {
        assert_eq!(
            canon("%x:i8 = var\n%y:i8 = var\n%e = eq %y, %x\ninfer %e\n"),
            "%0:i8 = var\n%1:i8 = var\n%2:i1 = eq %0, %1\ninfer %2\n"
        );
    }

    #[test]
    fn non_commutative_operands_keep_their_order() {
        assert_eq!(
            canon("%x:i8 = var\n%y:i8 = var\n%e = sub %y, %x\ninfer %e\n"),
            "%0:i8 = var\n%1:i8 = var\n%2:i8 = sub %0, %1\ninfer %2\n"
        );
    }

    #[test]
    fn permuted_inputs_agree() {
        let a = canon("%a:i8 = var\n%b:i8 = var\n%s = add %a, %b\n%m = mul %s, %a\ninfer %m\n");
        let b = canon("%b:i8 = var\n%a:i8 = var\n%s = add %b, %a\n%m = mul %a, %s\ninfer %m\n");
        assert_eq!(a, b);
    }
}
