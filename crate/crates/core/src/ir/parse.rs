//! Parser for the textual IR.
//!
//! ```text
//! %x:i8 = var
//! %b = block 2
//! %p:i8 = phi %b, %x, 0:i8
//! %c = slt %x, %p          ; widths may be omitted where they follow from operands
//! pc %c 1:i1
//! blockpc %b 0 %c 1
//! infer %p
//! %r:i8 = and %x, 7        ; right-hand side definitions
//! result %r
//! ```

use std::collections::HashMap;
use std::fmt;

use super::dag::{
    BlockPc, Constant, Dag, Inst, InstId, InstKind, LeftHandSide, Optimization, PathCondition,
    Ty, Width, MAX_WIDTH,
};
use super::opcode::{Arity, Opcode};
use super::typecheck::{typecheck, typecheck_dag};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Diagnostic {
    pub line: usize,
    pub col: usize,
    pub message: String,
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}: {}", self.line, self.col, self.message)
    }
}

impl std::error::Error for Diagnostic {}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Parsed {
    Lhs(LeftHandSide),
    Optimization(Optimization),
}

/// Parses a left-hand side, optionally followed by a right-hand side.
pub fn parse(text: &str) -> Result<Parsed, Vec<Diagnostic>> {
    Parser::default().run(text)
}

/// Parses text that must contain a left-hand side and no `result`.
pub fn parse_lhs(text: &str) -> Result<LeftHandSide, Vec<Diagnostic>> {
    match parse(text)? {
        Parsed::Lhs(lhs) => Ok(lhs),
        Parsed::Optimization(_) => Err(vec![Diagnostic {
            line: 1,
            col: 1,
            message: "expected a left-hand side without `result`".into(),
        }]),
    }
}

/// Parses text that must contain a complete optimization.
pub fn parse_optimization(text: &str) -> Result<Optimization, Vec<Diagnostic>> {
    match parse(text)? {
        Parsed::Optimization(opt) => Ok(opt),
        Parsed::Lhs(_) => Err(vec![Diagnostic {
            line: text.lines().count().max(1),
            col: 1,
            message: "missing `result`".into(),
        }]),
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Name(String),
    Ident(String),
    Int(i128),
    Colon,
    Comma,
    Eq,
    LBrace,
    RBrace,
}

#[derive(Debug, Clone)]
struct Token {
    tok: Tok,
    col: usize,
}

fn lex(line: &str, lineno: usize) -> Result<Vec<Token>, Diagnostic> {
    let chars: Vec<char> = line.chars().collect();
    let mut out = Vec::new();
    let mut i = 0;
    let ident_char = |c: char| c.is_ascii_alphanumeric() || c == '_' || c == '.';
    while i < chars.len() {
        let c = chars[i];
        let col = i + 1;
        if c == ';' {
            break;
        }
        if c.is_whitespace() {
            i += 1;
            continue;
        }
        let single = match c {
            ':' => Some(Tok::Colon),
            ',' => Some(Tok::Comma),
            '=' => Some(Tok::Eq),
            '{' => Some(Tok::LBrace),
            '}' => Some(Tok::RBrace),
            _ => None,
        };
        if let Some(tok) = single {
            out.push(Token { tok, col });
            i += 1;
            continue;
        }
        if c == '%' {
            let start = i + 1;
            i = start;
            while i < chars.len() && ident_char(chars[i]) {
                i += 1;
            }
            if i == start {
                return Err(Diagnostic {
                    line: lineno,
                    col,
                    message: "expected a name after `%`".into(),
                });
            }
            out.push(Token {
                tok: Tok::Name(chars[start..i].iter().collect()),
                col,
            });
            continue;
        }
        if c == '-' || c.is_ascii_digit() {
            let start = i;
            i += 1;
            while i < chars.len() && chars[i].is_ascii_alphanumeric() {
                i += 1;
            }
            let text: String = chars[start..i].iter().collect();
            let (neg, digits) = match text.strip_prefix('-') {
                Some(rest) => (true, rest),
                None => (false, text.as_str()),
            };
            let parsed = match digits.strip_prefix("0x") {
                Some(hex) => i128::from_str_radix(hex, 16),
                None => digits.parse::<i128>(),
            };
            let value = parsed.map_err(|_| Diagnostic {
                line: lineno,
                col,
                message: format!("malformed integer `{text}`"),
            })?;
            out.push(Token {
                tok: Tok::Int(if neg { -value } else { value }),
                col,
            });
            continue;
        }
        if ident_char(c) {
            let start = i;
            while i < chars.len() && ident_char(chars[i]) {
                i += 1;
            }
            out.push(Token {
                tok: Tok::Ident(chars[start..i].iter().collect()),
                col,
            });
            continue;
        }
        return Err(Diagnostic {
            line: lineno,
            col,
            message: format!("unexpected character `{c}`"),
        });
    }
    Ok(out)
}

#[derive(Debug, Clone)]
enum Arg {
    Name(String, usize),
    Int(i128, Option<u32>, usize),
}

impl Arg {
    fn col(&self) -> usize {
        match self {
            Arg::Name(_, c) | Arg::Int(_, _, c) => *c,
        }
    }
}

#[derive(Debug, Clone, Copy)]
enum DeclTy {
    Bits(u32),
    Tuple(u32),
}

#[derive(Default)]
struct Parser {
    dag: Dag,
    names: HashMap<String, InstId>,
    origin: Vec<(usize, usize)>,
    pcs: Vec<PathCondition>,
    blockpcs: Vec<BlockPc>,
    infer: Option<InstId>,
    result: Option<InstId>,
    line: usize,
}

struct Cursor<'a> {
    toks: &'a [Token],
    pos: usize,
    line: usize,
    end_col: usize,
}

impl<'a> Cursor<'a> {
    fn peek(&self) -> Option<&Tok> {
        self.toks.get(self.pos).map(|t| &t.tok)
    }

    fn col(&self) -> usize {
        self.toks.get(self.pos).map_or(self.end_col, |t| t.col)
    }

    fn error(&self, message: impl Into<String>) -> Diagnostic {
        Diagnostic {
            line: self.line,
            col: self.col(),
            message: message.into(),
        }
    }

    fn next(&mut self) -> Option<Tok> {
        let t = self.toks.get(self.pos).map(|t| t.tok.clone());
        self.pos += 1;
        t
    }

    fn expect(&mut self, want: Tok, what: &str) -> Result<(), Diagnostic> {
        if self.peek() == Some(&want) {
            self.pos += 1;
            Ok(())
        } else {
            Err(self.error(format!("expected {what}")))
        }
    }

    fn eat(&mut self, want: &Tok) -> bool {
        if self.peek() == Some(want) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn done(&self) -> Result<(), Diagnostic> {
        if self.pos < self.toks.len() {
            Err(self.error("unexpected trailing tokens"))
        } else {
            Ok(())
        }
    }

    fn width(&mut self) -> Result<u32, Diagnostic> {
        let col = self.col();
        let line = self.line;
        match self.next() {
            Some(Tok::Ident(s)) => parse_width(&s).ok_or(Diagnostic {
                line,
                col,
                message: format!("invalid width `{s}` (expected i1 to i{MAX_WIDTH})"),
            }),
            _ => Err(Diagnostic {
                line,
                col,
                message: "expected a width such as `i32`".into(),
            }),
        }
    }

    fn decl_ty(&mut self) -> Result<DeclTy, Diagnostic> {
        if self.eat(&Tok::LBrace) {
            let w = self.width()?;
            self.expect(Tok::Comma, "`,`")?;
            let flag_col = self.col();
            let f = self.width()?;
            if f != 1 {
                return Err(Diagnostic {
                    line: self.line,
                    col: flag_col,
                    message: "the second tuple element must be i1".into(),
                });
            }
            self.expect(Tok::RBrace, "`}`")?;
            Ok(DeclTy::Tuple(w))
        } else {
            Ok(DeclTy::Bits(self.width()?))
        }
    }

    fn arg(&mut self) -> Result<Arg, Diagnostic> {
        let col = self.col();
        match self.next() {
            Some(Tok::Name(n)) => Ok(Arg::Name(n, col)),
            Some(Tok::Int(v)) => {
                let w = if self.eat(&Tok::Colon) {
                    Some(self.width()?)
                } else {
                    None
                };
                Ok(Arg::Int(v, w, col))
            }
            _ => {
                self.pos -= 1;
                Err(self.error("expected a value or a constant"))
            }
        }
    }

    fn int(&mut self, what: &str) -> Result<i128, Diagnostic> {
        match self.next() {
            Some(Tok::Int(v)) => Ok(v),
            _ => {
                self.pos -= 1;
                Err(self.error(format!("expected {what}")))
            }
        }
    }
}

fn parse_width(s: &str) -> Option<u32> {
    let n: u32 = s.strip_prefix('i')?.parse().ok()?;
    (1..=MAX_WIDTH).contains(&n).then_some(n)
}

impl Parser {
    fn run(mut self, text: &str) -> Result<Parsed, Vec<Diagnostic>> {
        for (i, line) in text.lines().enumerate() {
            self.line = i + 1;
            let toks = lex(line, self.line).map_err(|d| vec![d])?;
            if toks.is_empty() {
                continue;
            }
            if self.result.is_some() {
                return Err(vec![Diagnostic {
                    line: self.line,
                    col: toks[0].col,
                    message: "nothing may follow `result`".into(),
                }]);
            }
            let mut cur = Cursor {
                toks: &toks,
                pos: 0,
                line: self.line,
                end_col: line.len() + 1,
            };
            self.statement(&mut cur).map_err(|d| vec![d])?;
        }
        self.finish()
    }

    fn finish(self) -> Result<Parsed, Vec<Diagnostic>> {
        let last = self.line.max(1);
        let Some(root) = self.infer else {
            return Err(vec![Diagnostic {
                line: last,
                col: 1,
                message: "missing `infer`".into(),
            }]);
        };
        let lhs = LeftHandSide {
            dag: self.dag,
            pcs: self.pcs,
            blockpcs: self.blockpcs,
            root,
        };
        let origin = self.origin;
        let locate = |errs: Vec<super::typecheck::TypeError>| -> Vec<Diagnostic> {
            errs.into_iter()
                .map(|e| {
                    let (line, col) = e.inst.map_or((last, 1), |id| origin[id.index()]);
                    Diagnostic {
                        line,
                        col,
                        message: e.message,
                    }
                })
                .collect()
        };
        let mut errors = locate(typecheck(&lhs));
        let parsed = match self.result {
            None => Parsed::Lhs(lhs),
            Some(rhs) => {
                let opt = Optimization { lhs, rhs };
                let rhs_only = opt.rhs_only();
                errors.extend(locate(typecheck_dag(&opt.lhs.dag, &rhs_only)));
                for &id in &rhs_only {
                    if matches!(opt.lhs.dag.get(id).kind, InstKind::Var | InstKind::Block(_)) {
                        let (line, col) = origin[id.index()];
                        errors.push(Diagnostic {
                            line,
                            col,
                            message: "the right-hand side may not introduce inputs".into(),
                        });
                    }
                }
                let lw = opt.lhs.dag.get(opt.lhs.root).ty();
                let rw = opt.lhs.dag.get(rhs).ty();
                if lw != rw {
                    let (line, col) = origin[rhs.index()];
                    errors.push(Diagnostic {
                        line,
                        col,
                        message: format!("result type {rw:?} does not match inferred type {lw:?}"),
                    });
                }
                Parsed::Optimization(opt)
            }
        };
        if errors.is_empty() {
            Ok(parsed)
        } else {
            Err(errors)
        }
    }

    fn push(&mut self, inst: Inst, col: usize) -> InstId {
        self.origin.push((self.line, col));
        self.dag.push(inst)
    }

    fn lookup(&self, name: &str, col: usize) -> Result<InstId, Diagnostic> {
        self.names.get(name).copied().ok_or_else(|| Diagnostic {
            line: self.line,
            col,
            message: format!("use of undefined value %{name}"),
        })
    }

    fn ty_of(&self, arg: &Arg) -> Option<u32> {
        match arg {
            Arg::Name(n, _) => self.names.get(n).map(|&id| self.dag.get(id).width),
            Arg::Int(_, w, _) => *w,
        }
    }

    /// Materializes `arg`, using `hint` as the width of an untyped literal.
    fn value(&mut self, arg: &Arg, hint: Option<u32>) -> Result<InstId, Diagnostic> {
        match arg {
            Arg::Name(n, col) => self.lookup(n, *col),
            Arg::Int(v, w, col) => {
                let width = w.or(hint).ok_or_else(|| Diagnostic {
                    line: self.line,
                    col: *col,
                    message: format!("cannot infer the width of constant {v}"),
                })?;
                let c = self.literal(*v, width, *col)?;
                Ok(self.push(
                    Inst {
                        kind: InstKind::Const(c.value()),
                        width,
                        ops: vec![],
                        name: None,
                    },
                    *col,
                ))
            }
        }
    }

    fn literal(&self, v: i128, width: u32, col: usize) -> Result<Constant, Diagnostic> {
        let w = Width::new(width).expect("widths are validated while lexing");
        let lo = -(1i128 << (width - 1));
        let hi = 1i128 << width;
        if v < lo || v >= hi {
            return Err(Diagnostic {
                line: self.line,
                col,
                message: format!("constant {v} does not fit in i{width}"),
            });
        }
        Ok(Constant::new(v as u64, w))
    }

    fn statement(&mut self, cur: &mut Cursor) -> Result<(), Diagnostic> {
        let col = cur.col();
        match cur.next() {
            Some(Tok::Name(name)) => self.definition(cur, name, col),
            Some(Tok::Ident(kw)) if kw == "pc" => {
                let a = cur.arg()?;
                let b = cur.arg()?;
                cur.done()?;
                let hint = self.ty_of(&a).or(self.ty_of(&b));
                let lhs = self.value(&a, hint)?;
                let rhs = self.value(&b, hint)?;
                self.pcs.push(PathCondition { lhs, rhs });
                Ok(())
            }
            Some(Tok::Ident(kw)) if kw == "blockpc" => {
                let bcol = cur.col();
                let block = match cur.next() {
                    Some(Tok::Name(n)) => self.lookup(&n, bcol)?,
                    _ => {
                        cur.pos -= 1;
                        return Err(cur.error("expected a block name"));
                    }
                };
                let pred_col = cur.col();
                let pred = cur.int("a predecessor index")?;
                let pred = u32::try_from(pred).map_err(|_| Diagnostic {
                    line: self.line,
                    col: pred_col,
                    message: format!("invalid predecessor index {pred}"),
                })?;
                let a = cur.arg()?;
                let b = cur.arg()?;
                cur.done()?;
                let hint = self.ty_of(&a).or(self.ty_of(&b));
                let value = self.value(&a, hint)?;
                let expected = self.value(&b, hint)?;
                self.blockpcs.push(BlockPc {
                    block,
                    pred,
                    value,
                    expected,
                });
                Ok(())
            }
            Some(Tok::Ident(kw)) if kw == "infer" => {
                if self.infer.is_some() {
                    return Err(Diagnostic {
                        line: self.line,
                        col,
                        message: "duplicate `infer`".into(),
                    });
                }
                let a = cur.arg()?;
                cur.done()?;
                let Arg::Name(n, c) = a else {
                    return Err(Diagnostic {
                        line: self.line,
                        col: a.col(),
                        message: "`infer` needs a named value".into(),
                    });
                };
                self.infer = Some(self.lookup(&n, c)?);
                Ok(())
            }
            Some(Tok::Ident(kw)) if kw == "result" => {
                let Some(root) = self.infer else {
                    return Err(Diagnostic {
                        line: self.line,
                        col,
                        message: "`result` before `infer`".into(),
                    });
                };
                let a = cur.arg()?;
                cur.done()?;
                let hint = Some(self.dag.get(root).width);
                self.result = Some(self.value(&a, hint)?);
                Ok(())
            }
            _ => Err(Diagnostic {
                line: self.line,
                col,
                message: "expected a definition, `pc`, `blockpc`, `infer` or `result`".into(),
            }),
        }
    }

    fn definition(&mut self, cur: &mut Cursor, name: String, col: usize) -> Result<(), Diagnostic> {
        if self.names.contains_key(&name) {
            return Err(Diagnostic {
                line: self.line,
                col,
                message: format!("%{name} is already defined"),
            });
        }
        let decl = if cur.eat(&Tok::Colon) {
            Some(cur.decl_ty()?)
        } else {
            None
        };
        cur.expect(Tok::Eq, "`=`")?;
        let op_col = cur.col();
        let op_name = match cur.next() {
            Some(Tok::Ident(s)) => s,
            _ => {
                cur.pos -= 1;
                return Err(cur.error("expected an instruction"));
            }
        };
        let id = match op_name.as_str() {
            "var" => {
                cur.done()?;
                let width = match decl {
                    Some(DeclTy::Bits(w)) => w,
                    _ => {
                        return Err(Diagnostic {
                            line: self.line,
                            col,
                            message: "var needs an explicit integer width".into(),
                        })
                    }
                };
                self.push(
                    Inst {
                        kind: InstKind::Var,
                        width,
                        ops: vec![],
                        name: Some(name.clone()),
                    },
                    col,
                )
            }
            "block" => {
                let n = cur.int("a predecessor count")?;
                cur.done()?;
                if decl.is_some() {
                    return Err(Diagnostic {
                        line: self.line,
                        col,
                        message: "a block has no width".into(),
                    });
                }
                if !(1..=u32::MAX as i128).contains(&n) {
                    return Err(Diagnostic {
                        line: self.line,
                        col: op_col,
                        message: "a block needs at least one predecessor".into(),
                    });
                }
                self.push(
                    Inst {
                        kind: InstKind::Block(n as u32),
                        width: 0,
                        ops: vec![],
                        name: Some(name.clone()),
                    },
                    col,
                )
            }
            _ => {
                let op: Opcode = op_name.parse().map_err(|e: super::UnknownOpcode| Diagnostic {
                    line: self.line,
                    col: op_col,
                    message: e.to_string(),
                })?;
                let mut args = Vec::new();
                if cur.peek().is_some() {
                    args.push(cur.arg()?);
                    while cur.eat(&Tok::Comma) {
                        args.push(cur.arg()?);
                    }
                }
                cur.done()?;
                self.instruction(op, decl, args, name.clone(), col)?
            }
        };
        self.names.insert(name, id);
        Ok(())
    }

    fn instruction(
        &mut self,
        op: Opcode,
        decl: Option<DeclTy>,
        args: Vec<Arg>,
        name: String,
        col: usize,
    ) -> Result<InstId, Diagnostic> {
        let line = self.line;
        let err = |message: String| Diagnostic { line, col, message };
        match op.arity() {
            Arity::Fixed(n) if args.len() != n => {
                return Err(err(format!("{op} takes {n} operand(s), found {}", args.len())))
            }
            Arity::Phi if args.len() < 2 => {
                return Err(err("phi needs a block and at least one value".into()))
            }
            _ => {}
        }
        let declared = match decl {
            Some(DeclTy::Bits(w)) if op.is_with_overflow() => {
                return Err(err(format!("{op} produces {{i{w},i1}}, not i{w}")))
            }
            Some(DeclTy::Tuple(w)) if !op.is_with_overflow() => {
                return Err(err(format!("{op} does not produce a tuple {{i{w},i1}}")))
            }
            Some(DeclTy::Bits(w)) | Some(DeclTy::Tuple(w)) => Some(w),
            None => None,
        };

        let typed = |p: &Parser, range: std::ops::Range<usize>| {
            args[range].iter().find_map(|a| p.ty_of(a))
        };
        let mut ops = Vec::with_capacity(args.len());
        let width = match op {
            Opcode::Phi => {
                let hint = typed(self, 1..args.len()).or(declared);
                ops.push(self.value(&args[0], None)?);
                for a in &args[1..] {
                    ops.push(self.value(a, hint)?);
                }
                declared.or(hint)
            }
            Opcode::Select => {
                let hint = typed(self, 1..3).or(declared);
                ops.push(self.value(&args[0], Some(1))?);
                ops.push(self.value(&args[1], hint)?);
                ops.push(self.value(&args[2], hint)?);
                declared.or(hint)
            }
            Opcode::ExtractValue => {
                let t = self.value(&args[0], None)?;
                ops.push(t);
                let idx = self.value(&args[1], Some(32))?;
                ops.push(idx);
                let tw = match self.dag.get(t).ty() {
                    Ty::Tuple(w) => Some(w),
                    _ => None,
                };
                let infer = match self.dag.get(idx).kind {
                    InstKind::Const(0) => tw,
                    InstKind::Const(1) => Some(1),
                    _ => None,
                };
                declared.or(infer)
            }
            _ if op.is_cast() => {
                ops.push(self.value(&args[0], None)?);
                if declared.is_none() {
                    return Err(err(format!("{op} needs an explicit result width")));
                }
                declared
            }
            _ if op.is_comparison() => {
                let hint = typed(self, 0..2);
                for a in &args {
                    ops.push(self.value(a, hint)?);
                }
                Some(declared.unwrap_or(1))
            }
            _ => {
                let hint = typed(self, 0..args.len()).or(declared);
                for a in &args {
                    ops.push(self.value(a, hint)?);
                }
                declared.or(hint)
            }
        };
        let width = width.ok_or_else(|| err(format!("cannot infer the width of %{name}")))?;
        let id = self.push(
            Inst {
                kind: InstKind::Op(op),
                width,
                ops,
                name: Some(name),
            },
            col,
        );
        Ok(id)
    }
}
