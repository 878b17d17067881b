//! The instruction set.
//!
//! Every integer, scalar operation of the IR is a distinct opcode; flags such
//! as `nsw`, `nuw` and `exact` are folded into the opcode name rather than
//! carried as attributes.

use std::fmt;
use std::str::FromStr;

macro_rules! opcodes {
    ($($variant:ident => $name:literal,)*) => {
        #[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
        pub enum Opcode {
            $($variant,)*
        }

        impl Opcode {
            pub const ALL: &'static [Opcode] = &[$(Opcode::$variant,)*];

            pub fn name(self) -> &'static str {
                match self {
                    $(Opcode::$variant => $name,)*
                }
            }
        }

        impl FromStr for Opcode {
            type Err = UnknownOpcode;

            fn from_str(s: &str) -> Result<Self, Self::Err> {
                match s {
                    $($name => Ok(Opcode::$variant),)*
                    _ => Err(UnknownOpcode(s.to_string())),
                }
            }
        }
    };
}

opcodes! {
    Add => "add",
    AddNsw => "addnsw",
    AddNuw => "addnuw",
    AddNswNuw => "addnswnuw",
    Sub => "sub",
    SubNsw => "subnsw",
    SubNuw => "subnuw",
    SubNswNuw => "subnswnuw",
    Mul => "mul",
    MulNsw => "mulnsw",
    MulNuw => "mulnuw",
    MulNswNuw => "mulnswnuw",
    UDiv => "udiv",
    SDiv => "sdiv",
    UDivExact => "udivexact",
    SDivExact => "sdivexact",
    URem => "urem",
    SRem => "srem",
    Shl => "shl",
    ShlNsw => "shlnsw",
    ShlNuw => "shlnuw",
    ShlNswNuw => "shlnswnuw",
    LShr => "lshr",
    LShrExact => "lshrexact",
    AShr => "ashr",
    AShrExact => "ashrexact",
    And => "and",
    Or => "or",
    Xor => "xor",
    Select => "select",
    ZExt => "zext",
    SExt => "sext",
    Trunc => "trunc",
    Eq => "eq",
    Ne => "ne",
    Ult => "ult",
    Slt => "slt",
    Ule => "ule",
    Sle => "sle",
    Phi => "phi",
    SAddWithOverflow => "sadd.with.overflow",
    UAddWithOverflow => "uadd.with.overflow",
    SSubWithOverflow => "ssub.with.overflow",
    USubWithOverflow => "usub.with.overflow",
    SMulWithOverflow => "smul.with.overflow",
    UMulWithOverflow => "umul.with.overflow",
    ExtractValue => "extractvalue",
    CtPop => "ctpop",
    BSwap => "bswap",
    CtTz => "cttz",
    CtLz => "ctlz",
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("unknown opcode `{0}`")]
pub struct UnknownOpcode(pub String);

/// Operand-count requirement of an opcode.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Arity {
    Fixed(usize),
    /// A block followed by one value per predecessor.
    Phi,
}

/// Which arithmetic family a flagged opcode belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OverflowFlags {
    None,
    Nsw,
    Nuw,
    NswNuw,
}

impl OverflowFlags {
    pub fn nsw(self) -> bool {
        matches!(self, OverflowFlags::Nsw | OverflowFlags::NswNuw)
    }

    pub fn nuw(self) -> bool {
        matches!(self, OverflowFlags::Nuw | OverflowFlags::NswNuw)
    }
}

impl Opcode {
    pub fn arity(self) -> Arity {
        use Opcode::*;
        match self {
            Phi => Arity::Phi,
            Select => Arity::Fixed(3),
            ZExt | SExt | Trunc | CtPop | BSwap | CtTz | CtLz => Arity::Fixed(1),
            _ => Arity::Fixed(2),
        }
    }

    pub fn is_commutative(self) -> bool {
        use Opcode::*;
        matches!(
            self,
            Add | AddNsw
                | AddNuw
                | AddNswNuw
                | Mul
                | MulNsw
                | MulNuw
                | MulNswNuw
                | And
                | Or
                | Xor
                | Eq
                | Ne
                | SAddWithOverflow
                | UAddWithOverflow
                | SMulWithOverflow
                | UMulWithOverflow
        )
    }

    pub fn is_comparison(self) -> bool {
        use Opcode::*;
        matches!(self, Eq | Ne | Ult | Slt | Ule | Sle)
    }

    pub fn is_with_overflow(self) -> bool {
        use Opcode::*;
        matches!(
            self,
            SAddWithOverflow
                | UAddWithOverflow
                | SSubWithOverflow
                | USubWithOverflow
                | SMulWithOverflow
                | UMulWithOverflow
        )
    }

    pub fn is_cast(self) -> bool {
        matches!(self, Opcode::ZExt | Opcode::SExt | Opcode::Trunc)
    }

    pub fn is_division(self) -> bool {
        use Opcode::*;
        matches!(self, UDiv | SDiv | UDivExact | SDivExact | URem | SRem)
    }

    pub fn is_unary_intrinsic(self) -> bool {
        use Opcode::*;
        matches!(self, CtPop | BSwap | CtTz | CtLz)
    }

    /// Two-operand opcodes whose operands and result share one width.
    pub fn is_binary_arith(self) -> bool {
        matches!(self.arity(), Arity::Fixed(2))
            && !self.is_comparison()
            && !self.is_with_overflow()
            && self != Opcode::ExtractValue
    }

    /// Flags for add/sub/mul/shl families.
    pub fn overflow_flags(self) -> OverflowFlags {
        use Opcode::*;
        match self {
            AddNsw | SubNsw | MulNsw | ShlNsw => OverflowFlags::Nsw,
            AddNuw | SubNuw | MulNuw | ShlNuw => OverflowFlags::Nuw,
            AddNswNuw | SubNswNuw | MulNswNuw | ShlNswNuw => OverflowFlags::NswNuw,
            _ => OverflowFlags::None,
        }
    }

    pub fn is_exact(self) -> bool {
        use Opcode::*;
        matches!(self, UDivExact | SDivExact | LShrExact | AShrExact)
    }

    /// The flag-free opcode computing the same wrapped value.
    pub fn base(self) -> Opcode {
        use Opcode::*;
        match self {
            AddNsw | AddNuw | AddNswNuw => Add,
            SubNsw | SubNuw | SubNswNuw => Sub,
            MulNsw | MulNuw | MulNswNuw => Mul,
            ShlNsw | ShlNuw | ShlNswNuw => Shl,
            UDivExact => UDiv,
            SDivExact => SDiv,
            LShrExact => LShr,
            AShrExact => AShr,
            other => other,
        }
    }

    /// True when the opcode can produce poison or immediate UB from
    /// well-defined operands.
    pub fn may_be_undefined(self) -> bool {
        use Opcode::*;
        self.overflow_flags() != OverflowFlags::None
            || self.is_exact()
            || self.is_division()
            || matches!(self, Shl | LShr | AShr)
    }
}

impl fmt::Display for Opcode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}
