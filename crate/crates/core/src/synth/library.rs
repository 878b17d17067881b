//! Component libraries: the instruction instances CEGIS may wire together.

use crate::ir::{CostModel, InstId, InstKind, LeftHandSide, Opcode, Ty};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ComponentKind {
    Op(Opcode),
    /// `extractvalue` with a fixed index.
    Extract(u64),
    /// A free constant chosen by the solver.
    Const,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Component {
    pub kind: ComponentKind,
    pub inputs: Vec<Ty>,
    pub output: Ty,
    pub weight: u32,
}

impl Component {
    fn op(op: Opcode, inputs: Vec<Ty>, output: Ty, model: &CostModel) -> Component {
        Component {
            kind: ComponentKind::Op(op),
            inputs,
            output,
            weight: model.weight(op),
        }
    }

    /// Result width of the instruction this component becomes.
    pub fn width(&self) -> u32 {
        match self.output {
            Ty::Bits(w) | Ty::Tuple(w) => w,
            Ty::Block => 0,
        }
    }
}

/// Inputs of the LHS plus the components available to a right-hand side.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Library {
    pub inputs: Vec<(InstId, Ty)>,
    pub components: Vec<Component>,
}

impl Library {
    /// The components whose own weight does not exceed `cost`.
    pub fn at_cost(&self, cost: u32) -> Library {
        Library {
            inputs: self.inputs.clone(),
            components: self
                .components
                .iter()
                .filter(|c| c.weight <= cost)
                .cloned()
                .collect(),
        }
    }
}

/// The default component set: every opcode except phi and the flagged
/// variants, whose extra poison can never help a replacement that must be
/// well defined.
pub fn default_components() -> Vec<Opcode> {
    Opcode::ALL
        .iter()
        .copied()
        .filter(|&op| {
            op != Opcode::Phi
                && op.overflow_flags() == crate::ir::OverflowFlags::None
                && !op.is_exact()
        })
        .collect()
}

/// Instantiates `components` for `lhs`.
///
/// Every component works at the default width `W`, the widest of the LHS
/// inputs and root. Narrower inputs get `zext` and `sext` adapters, a wider
/// `W` gets a `trunc` to the root width, `select` gets a `trunc` to one bit
/// for its condition and comparisons get a `zext` from one bit. Casts are
/// only instantiated as these adapters, and only when the cast opcode is in
/// `components`.
pub fn adapt_widths(
    lhs: &LeftHandSide,
    components: &[Opcode],
    model: &CostModel,
    num_const: usize,
) -> Library {
    let inputs: Vec<(InstId, Ty)> = lhs
        .vars()
        .into_iter()
        .map(|id| (id, lhs.dag.get(id).ty()))
        .collect();
    debug_assert!(inputs
        .iter()
        .all(|&(id, _)| lhs.dag.get(id).kind == InstKind::Var));
    let root = lhs.root_width();
    let w = inputs
        .iter()
        .filter_map(|&(_, t)| match t {
            Ty::Bits(v) => Some(v),
            _ => None,
        })
        .chain([root])
        .max()
        .unwrap();
    let bits = Ty::Bits;
    let has = |op: Opcode| components.contains(&op);
    let mut out = Vec::new();
    let mut tuples = 0;
    for &op in components {
        match op {
            Opcode::Phi | Opcode::ExtractValue => {}
            _ if op.is_cast() => {}
            Opcode::Select => out.push(Component::op(op, vec![bits(1), bits(w), bits(w)], bits(w), model)),
            Opcode::BSwap if w % 16 != 0 => {}
            _ if op.is_unary_intrinsic() => out.push(Component::op(op, vec![bits(w)], bits(w), model)),
            _ if op.is_comparison() => out.push(Component::op(op, vec![bits(w), bits(w)], bits(1), model)),
            _ if op.is_with_overflow() => {
                tuples += 1;
                out.push(Component::op(op, vec![bits(w), bits(w)], Ty::Tuple(w), model));
            }
            _ => out.push(Component::op(op, vec![bits(w), bits(w)], bits(w), model)),
        }
    }
    for _ in 0..tuples {
        for (index, ty) in [(0, bits(w)), (1, bits(1))] {
            out.push(Component {
                kind: ComponentKind::Extract(index),
                inputs: vec![Ty::Tuple(w)],
                output: ty,
                weight: model.weight(Opcode::ExtractValue),
            });
        }
    }
    let mut narrow: Vec<u32> = inputs
        .iter()
        .filter_map(|&(_, t)| match t {
            Ty::Bits(v) if v < w => Some(v),
            _ => None,
        })
        .collect();
    narrow.sort_unstable();
    narrow.dedup();
    for v in narrow {
        for op in [Opcode::ZExt, Opcode::SExt] {
            if has(op) {
                out.push(Component::op(op, vec![bits(v)], bits(w), model));
            }
        }
    }
    if w > root && has(Opcode::Trunc) {
        out.push(Component::op(Opcode::Trunc, vec![bits(w)], bits(root), model));
    }
    if w > 1 && root != 1 && has(Opcode::Select) && has(Opcode::Trunc) {
        out.push(Component::op(Opcode::Trunc, vec![bits(w)], bits(1), model));
    }
    if w > 1 && components.iter().any(|op| op.is_comparison()) && has(Opcode::ZExt) {
        out.push(Component::op(Opcode::ZExt, vec![bits(1)], bits(w), model));
    }
    let mut const_widths = vec![w];
    if root != w {
        const_widths.push(root);
    }
    for cw in const_widths {
        for _ in 0..num_const {
            out.push(Component {
                kind: ComponentKind::Const,
                inputs: vec![],
                output: bits(cw),
                weight: 0,
            });
        }
    }
    Library {
        inputs,
        components: out,
    }
}
