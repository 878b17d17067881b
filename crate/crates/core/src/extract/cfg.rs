//! A small SSA control-flow-graph language that extraction reads.
//!
//! ```text
//! func @f(%cond:i1, %z:i32) -> i32 {
//! entry:
//!   br %cond, then, else
//! then:
//!   %x1 = mul %z, 3
//!   jmp end
//! else:
//!   %x2 = shl %z, 1
//!   jmp end
//! end:
//!   %x = phi [%x1, then], [%x2, else]
//!   %r = add %x, %z
//!   ret %r
//! }
//! ```
//!
//! Instructions use the IR opcode names plus a few frontend operations that
//! lowering removes: `ugt`, `sgt`, `uge`, `sge`, `gep base, index, scale`,
//! the value-preserving `bitcast`, `ptrtoint` and `inttoptr`, and the opaque
//! `load %p` and `call @g(args)`. `undef` may appear wherever a value can.
//! Switches are written `switch %v, default [0: a, 1: b]`.

use std::collections::{HashMap, HashSet};
use std::fmt;

use petgraph::algo::dominators::{simple_fast, Dominators};
use petgraph::graph::{DiGraph, NodeIndex};

use crate::ir::{Constant, Diagnostic, Opcode, Width, MAX_WIDTH};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FrontOp {
    Ir(Opcode),
    Ugt,
    Sgt,
    Uge,
    Sge,
    Gep,
    /// `bitcast`, `ptrtoint`, `inttoptr`.
    Pass,
    Load,
    Call,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Operand {
    Value(String),
    Const(Constant),
    Undef(u32),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Instr {
    pub name: String,
    /// Result width; the value width for overflow-checking tuples.
    pub width: u32,
    pub op: FrontOp,
    /// Callee of a `call`.
    pub callee: Option<String>,
    pub args: Vec<Operand>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Phi {
    pub name: String,
    pub width: u32,
    pub incoming: Vec<(Operand, String)>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Terminator {
    Br(Operand, String, String),
    Jmp(String),
    Switch(Operand, String, Vec<(Constant, String)>),
    Ret(Operand),
}

impl Terminator {
    pub fn targets(&self) -> Vec<&str> {
        match self {
            Terminator::Br(_, t, f) => vec![t, f],
            Terminator::Jmp(t) => vec![t],
            Terminator::Switch(_, d, cases) => {
                let mut v: Vec<&str> = vec![d];
                v.extend(cases.iter().map(|(_, l)| l.as_str()));
                v
            }
            Terminator::Ret(_) => vec![],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BasicBlock {
    pub label: String,
    pub phis: Vec<Phi>,
    pub insts: Vec<Instr>,
    pub term: Terminator,
}

/// A validated function together with its control-flow facts.
#[derive(Debug, Clone)]
pub struct CfgFunction {
    pub name: String,
    pub params: Vec<(String, u32)>,
    pub ret: u32,
    pub blocks: Vec<BasicBlock>,
    /// Distinct predecessors of each block in first-seen order; phi operands
    /// are stored in this order.
    pub preds: Vec<Vec<usize>>,
    idom: Vec<Option<usize>>,
    /// Edges `(from, to)` that close a cycle in a depth-first walk.
    retreating: HashSet<(usize, usize)>,
}

impl CfgFunction {
    pub fn block_index(&self, label: &str) -> Option<usize> {
        self.blocks.iter().position(|b| b.label == label)
    }

    pub fn idom(&self, b: usize) -> Option<usize> {
        self.idom[b]
    }

    /// Whether `a` dominates `b` (reflexively).
    pub fn dominates(&self, a: usize, mut b: usize) -> bool {
        loop {
            if a == b {
                return true;
            }
            match self.idom[b] {
                Some(p) => b = p,
                None => return false,
            }
        }
    }

    pub fn is_retreating(&self, from: usize, to: usize) -> bool {
        self.retreating.contains(&(from, to))
    }

    /// Whether control can enter `b` along a retreating edge.
    pub fn is_loop_entry(&self, b: usize) -> bool {
        self.preds[b].iter().any(|&p| self.is_retreating(p, b))
    }
}

impl fmt::Display for Operand {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Operand::Value(n) => write!(f, "%{n}"),
            Operand::Const(c) => write!(f, "{}", c.as_signed()),
            Operand::Undef(_) => write!(f, "undef"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Value(String),
    Global(String),
    Ident(String),
    Int(i128),
    Punct(char),
    Arrow,
}

fn diag(line: usize, col: usize, message: impl Into<String>) -> Diagnostic {
    Diagnostic {
        line,
        col,
        message: message.into(),
    }
}

fn lex(line: &str, lineno: usize) -> Result<Vec<(Tok, usize)>, Diagnostic> {
    let chars: Vec<char> = line.chars().collect();
    let word = |c: char| c.is_ascii_alphanumeric() || c == '_' || c == '.';
    let mut out = Vec::new();
    let mut i = 0;
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
        if c == '%' || c == '@' {
            let s = i + 1;
            i += 1;
            while i < chars.len() && word(chars[i]) {
                i += 1;
            }
            if i == s {
                return Err(diag(lineno, col, format!("expected a name after `{c}`")));
            }
            let name: String = chars[s..i].iter().collect();
            out.push((if c == '%' { Tok::Value(name) } else { Tok::Global(name) }, col));
            continue;
        }
        if c == '-' && chars.get(i + 1) == Some(&'>') {
            out.push((Tok::Arrow, col));
            i += 2;
            continue;
        }
        if c.is_ascii_digit() || (c == '-' && chars.get(i + 1).is_some_and(|d| d.is_ascii_digit())) {
            let s = i;
            i += 1;
            while i < chars.len() && chars[i].is_ascii_alphanumeric() {
                i += 1;
            }
            let text: String = chars[s..i].iter().collect();
            let (neg, body) = match text.strip_prefix('-') {
                Some(b) => (true, b),
                None => (false, text.as_str()),
            };
            let v = match body.strip_prefix("0x") {
                Some(h) => i128::from_str_radix(h, 16),
                None => body.parse::<i128>(),
            }
            .map_err(|_| diag(lineno, col, format!("bad integer `{text}`")))?;
            out.push((Tok::Int(if neg { -v } else { v }), col));
            continue;
        }
        if word(c) {
            let s = i;
            while i < chars.len() && word(chars[i]) {
                i += 1;
            }
            out.push((Tok::Ident(chars[s..i].iter().collect()), col));
            continue;
        }
        if "(){}[]:,=".contains(c) {
            out.push((Tok::Punct(c), col));
            i += 1;
            continue;
        }
        return Err(diag(lineno, col, format!("unexpected character `{c}`")));
    }
    Ok(out)
}

struct Cursor {
    toks: Vec<(Tok, usize)>,
    pos: usize,
    line: usize,
    end_col: usize,
}

impl Cursor {
    fn col(&self) -> usize {
        self.toks.get(self.pos).map_or(self.end_col, |t| t.1)
    }

    fn err(&self, m: impl Into<String>) -> Diagnostic {
        diag(self.line, self.col(), m)
    }

    fn peek(&self) -> Option<&Tok> {
        self.toks.get(self.pos).map(|t| &t.0)
    }

    fn next(&mut self) -> Option<Tok> {
        let t = self.toks.get(self.pos).map(|t| t.0.clone());
        self.pos += 1;
        t
    }

    fn eat(&mut self, c: char) -> bool {
        if self.peek() == Some(&Tok::Punct(c)) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn expect(&mut self, c: char) -> Result<(), Diagnostic> {
        if self.eat(c) {
            Ok(())
        } else {
            Err(self.err(format!("expected `{c}`")))
        }
    }

    fn ident(&mut self, what: &str) -> Result<String, Diagnostic> {
        match self.peek() {
            Some(Tok::Ident(s)) => {
                let s = s.clone();
                self.pos += 1;
                Ok(s)
            }
            _ => Err(self.err(format!("expected {what}"))),
        }
    }

    fn value_name(&mut self) -> Result<String, Diagnostic> {
        match self.peek() {
            Some(Tok::Value(s)) => {
                let s = s.clone();
                self.pos += 1;
                Ok(s)
            }
            _ => Err(self.err("expected a `%` value")),
        }
    }

    fn width(&mut self) -> Result<u32, Diagnostic> {
        let col = self.col();
        let s = self.ident("a type like `i32`")?;
        s.strip_prefix('i')
            .and_then(|n| n.parse::<u32>().ok())
            .filter(|w| (1..=MAX_WIDTH).contains(w))
            .ok_or_else(|| diag(self.line, col, format!("bad type `{s}`")))
    }

    fn done(&self) -> Result<(), Diagnostic> {
        if self.pos < self.toks.len() {
            Err(self.err("unexpected trailing input"))
        } else {
            Ok(())
        }
    }
}

/// An operand before widths are known.
#[derive(Debug, Clone)]
enum RawOp {
    Value(String),
    Int(i128),
    Undef,
}

#[derive(Debug, Clone)]
struct RawInstr {
    name: String,
    declared: Option<u32>,
    op: FrontOp,
    callee: Option<String>,
    args: Vec<RawOp>,
    line: usize,
}

#[derive(Debug, Clone)]
struct RawPhi {
    name: String,
    declared: Option<u32>,
    incoming: Vec<(RawOp, String)>,
    line: usize,
}

#[derive(Debug, Clone)]
enum RawTerm {
    Br(RawOp, String, String),
    Jmp(String),
    Switch(RawOp, String, Vec<(i128, String)>),
    Ret(RawOp),
}

#[derive(Debug, Clone)]
struct RawBlock {
    label: String,
    line: usize,
    phis: Vec<RawPhi>,
    insts: Vec<RawInstr>,
    term: Option<(RawTerm, usize)>,
}

#[derive(Debug, Clone)]
struct RawFunc {
    name: String,
    params: Vec<(String, u32)>,
    ret: u32,
    line: usize,
    blocks: Vec<RawBlock>,
}

fn front_op(name: &str) -> Option<FrontOp> {
    Some(match name {
        "ugt" => FrontOp::Ugt,
        "sgt" => FrontOp::Sgt,
        "uge" => FrontOp::Uge,
        "sge" => FrontOp::Sge,
        "gep" => FrontOp::Gep,
        "bitcast" | "ptrtoint" | "inttoptr" => FrontOp::Pass,
        "load" => FrontOp::Load,
        "call" => FrontOp::Call,
        _ => {
            let op: Opcode = name.parse().ok()?;
            if op == Opcode::Phi {
                return None;
            }
            FrontOp::Ir(op)
        }
    })
}

fn raw_operand(cur: &mut Cursor) -> Result<RawOp, Diagnostic> {
    match cur.next() {
        Some(Tok::Value(n)) => Ok(RawOp::Value(n)),
        Some(Tok::Int(v)) => Ok(RawOp::Int(v)),
        Some(Tok::Ident(s)) if s == "undef" => Ok(RawOp::Undef),
        _ => {
            cur.pos -= 1;
            Err(cur.err("expected an operand"))
        }
    }
}

/// Parses and validates every function in `text`.
pub fn parse_cfg(text: &str) -> Result<Vec<CfgFunction>, Vec<Diagnostic>> {
    let raws = parse_raw(text).map_err(|d| vec![d])?;
    let mut out = Vec::new();
    let mut errs = Vec::new();
    for raw in raws {
        match resolve(raw) {
            Ok(f) => out.push(f),
            Err(d) => errs.push(d),
        }
    }
    if errs.is_empty() {
        Ok(out)
    } else {
        Err(errs)
    }
}

fn parse_raw(text: &str) -> Result<Vec<RawFunc>, Diagnostic> {
    let mut funcs: Vec<RawFunc> = Vec::new();
    let mut cur_fn: Option<RawFunc> = None;
    for (i, line) in text.lines().enumerate() {
        let lineno = i + 1;
        let toks = lex(line, lineno)?;
        if toks.is_empty() {
            continue;
        }
        let mut c = Cursor {
            toks,
            pos: 0,
            line: lineno,
            end_col: line.len() + 1,
        };
        let Some(f) = cur_fn.as_mut() else {
            if c.ident("`func`").ok().as_deref() != Some("func") {
                return Err(diag(lineno, 1, "expected `func`"));
            }
            let Some(Tok::Global(name)) = c.next() else {
                c.pos -= 1;
                return Err(c.err("expected a function name like `@f`"));
            };
            c.expect('(')?;
            let mut params = Vec::new();
            if !c.eat(')') {
                loop {
                    let p = c.value_name()?;
                    c.expect(':')?;
                    params.push((p, c.width()?));
                    if c.eat(')') {
                        break;
                    }
                    c.expect(',')?;
                }
            }
            if c.next() != Some(Tok::Arrow) {
                c.pos -= 1;
                return Err(c.err("expected `->`"));
            }
            let ret = c.width()?;
            c.expect('{')?;
            c.done()?;
            cur_fn = Some(RawFunc {
                name,
                params,
                ret,
                line: lineno,
                blocks: Vec::new(),
            });
            continue;
        };
        if c.eat('}') {
            c.done()?;
            funcs.push(cur_fn.take().unwrap());
            continue;
        }
        if let (Some(Tok::Ident(label)), Some(Tok::Punct(':'))) = (c.toks.first().map(|t| &t.0), c.toks.get(1).map(|t| &t.0)) {
            if c.toks.len() == 2 {
                f.blocks.push(RawBlock {
                    label: label.clone(),
                    line: lineno,
                    phis: Vec::new(),
                    insts: Vec::new(),
                    term: None,
                });
                continue;
            }
        }
        let Some(block) = f.blocks.last_mut() else {
            return Err(diag(lineno, 1, "instruction outside a block"));
        };
        if block.term.is_some() {
            return Err(diag(lineno, 1, "instruction after the block terminator"));
        }
        match c.peek().cloned() {
            Some(Tok::Value(name)) => {
                c.pos += 1;
                let declared = if c.eat(':') { Some(c.width()?) } else { None };
                c.expect('=')?;
                let col = c.col();
                let opname = c.ident("an opcode")?;
                if opname == "phi" {
                    if !block.insts.is_empty() {
                        return Err(diag(lineno, col, "phi after a non-phi instruction"));
                    }
                    let mut incoming = Vec::new();
                    loop {
                        c.expect('[')?;
                        let v = raw_operand(&mut c)?;
                        c.expect(',')?;
                        let l = c.ident("a block label")?;
                        c.expect(']')?;
                        incoming.push((v, l));
                        if !c.eat(',') {
                            break;
                        }
                    }
                    c.done()?;
                    block.phis.push(RawPhi {
                        name,
                        declared,
                        incoming,
                        line: lineno,
                    });
                    continue;
                }
                let op = front_op(&opname)
                    .ok_or_else(|| diag(lineno, col, format!("unknown opcode `{opname}`")))?;
                let mut callee = None;
                let mut args = Vec::new();
                if op == FrontOp::Call {
                    let Some(Tok::Global(g)) = c.next() else {
                        c.pos -= 1;
                        return Err(c.err("expected a callee like `@g`"));
                    };
                    callee = Some(g);
                    c.expect('(')?;
                    if !c.eat(')') {
                        loop {
                            args.push(raw_operand(&mut c)?);
                            if c.eat(')') {
                                break;
                            }
                            c.expect(',')?;
                        }
                    }
                } else {
                    loop {
                        args.push(raw_operand(&mut c)?);
                        if !c.eat(',') {
                            break;
                        }
                    }
                }
                c.done()?;
                block.insts.push(RawInstr {
                    name,
                    declared,
                    op,
                    callee,
                    args,
                    line: lineno,
                });
            }
            Some(Tok::Ident(kw)) => {
                c.pos += 1;
                let term = match kw.as_str() {
                    "br" => {
                        let cond = raw_operand(&mut c)?;
                        c.expect(',')?;
                        let t = c.ident("a block label")?;
                        c.expect(',')?;
                        let e = c.ident("a block label")?;
                        RawTerm::Br(cond, t, e)
                    }
                    "jmp" => RawTerm::Jmp(c.ident("a block label")?),
                    "ret" => RawTerm::Ret(raw_operand(&mut c)?),
                    "switch" => {
                        let v = raw_operand(&mut c)?;
                        c.expect(',')?;
                        let d = c.ident("a block label")?;
                        c.expect('[')?;
                        let mut cases = Vec::new();
                        if !c.eat(']') {
                            loop {
                                let Some(Tok::Int(k)) = c.next() else {
                                    c.pos -= 1;
                                    return Err(c.err("expected a case value"));
                                };
                                c.expect(':')?;
                                cases.push((k, c.ident("a block label")?));
                                if c.eat(']') {
                                    break;
                                }
                                c.expect(',')?;
                            }
                        }
                        RawTerm::Switch(v, d, cases)
                    }
                    _ => return Err(diag(lineno, 1, format!("unknown terminator `{kw}`"))),
                };
                c.done()?;
                block.term = Some((term, lineno));
            }
            _ => return Err(c.err("expected an instruction")),
        }
    }
    if let Some(f) = cur_fn {
        return Err(diag(f.line, 1, format!("function @{} is not closed", f.name)));
    }
    Ok(funcs)
}

fn literal(v: i128, w: u32, line: usize) -> Result<Constant, Diagnostic> {
    let lo = -(1i128 << (w - 1));
    let hi = 1i128 << w;
    if v < lo || v >= hi {
        return Err(diag(line, 1, format!("constant {v} does not fit in i{w}")));
    }
    Ok(Constant::new(v as u64, Width::new(w).unwrap()))
}

/// Result width of an instruction given the widths of its named operands,
/// or `None` while those are still unknown.
fn infer_width(i: &RawInstr, widths: &HashMap<String, u32>) -> Result<Option<u32>, Diagnostic> {
    if let Some(w) = i.declared {
        return Ok(Some(w));
    }
    let of = |a: &RawOp| match a {
        RawOp::Value(n) => widths.get(n).copied(),
        _ => None,
    };
    let any = |args: &[RawOp]| args.iter().find_map(of);
    let need = |what: &str| Err(diag(i.line, 1, format!("`%{}`: {what} needs an explicit width", i.name)));
    Ok(match i.op {
        FrontOp::Ugt | FrontOp::Sgt | FrontOp::Uge | FrontOp::Sge => Some(1),
        FrontOp::Load | FrontOp::Call => return need("an opaque value"),
        FrontOp::Gep | FrontOp::Pass => any(&i.args),
        FrontOp::Ir(op) => match op {
            _ if op.is_comparison() => Some(1),
            _ if op.is_cast() => return need("a cast"),
            Opcode::Select => any(&i.args[1..]),
            Opcode::ExtractValue => match i.args.get(1) {
                Some(RawOp::Int(1)) => Some(1),
                _ => i.args.first().and_then(of),
            },
            _ => any(&i.args),
        },
    })
}

/// Sets of names in `b` whose widths are equal by construction.
fn width_groups(b: &RawBlock) -> Vec<Vec<&str>> {
    fn names(args: &[RawOp]) -> Vec<&str> {
        args.iter()
            .filter_map(|a| match a {
                RawOp::Value(n) => Some(n.as_str()),
                _ => None,
            })
            .collect()
    }
    let mut out = Vec::new();
    for p in &b.phis {
        let mut g: Vec<&str> = p
            .incoming
            .iter()
            .filter_map(|(a, _)| match a {
                RawOp::Value(n) => Some(n.as_str()),
                _ => None,
            })
            .collect();
        g.push(&p.name);
        out.push(g);
    }
    for i in &b.insts {
        let g = match i.op {
            FrontOp::Ugt | FrontOp::Sgt | FrontOp::Uge | FrontOp::Sge => names(&i.args),
            FrontOp::Ir(op) if op.is_comparison() => names(&i.args),
            FrontOp::Ir(Opcode::Select) if i.args.len() == 3 => {
                let mut g = names(&i.args[1..]);
                g.push(&i.name);
                g
            }
            FrontOp::Ir(op) if !op.is_cast() && op != Opcode::Select && op != Opcode::ExtractValue => {
                let mut g = names(&i.args);
                g.push(&i.name);
                g
            }
            _ => continue,
        };
        out.push(g);
    }
    out
}

struct Resolver<'a> {
    widths: &'a HashMap<String, u32>,
    line: usize,
}

impl Resolver<'_> {
    fn operand(&self, a: &RawOp, w: u32) -> Result<Operand, Diagnostic> {
        Ok(match a {
            RawOp::Value(n) => {
                let have = *self
                    .widths
                    .get(n)
                    .ok_or_else(|| diag(self.line, 1, format!("`%{n}` is not defined")))?;
                if have != w && w != 0 {
                    return Err(diag(self.line, 1, format!("`%{n}` is i{have}, expected i{w}")));
                }
                Operand::Value(n.clone())
            }
            RawOp::Int(v) => Operand::Const(literal(*v, w, self.line)?),
            RawOp::Undef => Operand::Undef(w),
        })
    }

    fn width_of(&self, a: &RawOp) -> Option<u32> {
        match a {
            RawOp::Value(n) => self.widths.get(n).copied(),
            _ => None,
        }
    }

    fn named(&self, a: &RawOp) -> Result<Operand, Diagnostic> {
        match a {
            RawOp::Value(_) => self.operand(a, 0),
            _ => Err(diag(self.line, 1, "cannot infer the width of a literal here")),
        }
    }
}

fn resolve(raw: RawFunc) -> Result<CfgFunction, Diagnostic> {
    let mut widths: HashMap<String, u32> = HashMap::new();
    for (p, w) in &raw.params {
        if widths.insert(p.clone(), *w).is_some() {
            return Err(diag(raw.line, 1, format!("parameter `%{p}` is repeated")));
        }
    }
    let mut defined: HashSet<String> = widths.keys().cloned().collect();
    for b in &raw.blocks {
        for name in b.phis.iter().map(|p| &p.name).chain(b.insts.iter().map(|i| &i.name)) {
            if !defined.insert(name.clone()) {
                return Err(diag(b.line, 1, format!("`%{name}` is defined more than once")));
            }
        }
    }
    // Widths may depend on values defined further down the text.
    loop {
        let mut progress = false;
        for b in &raw.blocks {
            for p in &b.phis {
                if widths.contains_key(&p.name) {
                    continue;
                }
                let w = p.declared.or_else(|| {
                    p.incoming.iter().find_map(|(a, _)| match a {
                        RawOp::Value(n) => widths.get(n).copied(),
                        _ => None,
                    })
                });
                if let Some(w) = w {
                    widths.insert(p.name.clone(), w);
                    progress = true;
                }
            }
            for i in &b.insts {
                if widths.contains_key(&i.name) {
                    continue;
                }
                if let Some(w) = infer_width(i, &widths)? {
                    widths.insert(i.name.clone(), w);
                    progress = true;
                }
            }
        }
        // Operands that must agree in width pass a known width on to the others.
        for group in raw.blocks.iter().flat_map(width_groups) {
            let Some(w) = group.iter().find_map(|n| widths.get(*n).copied()) else {
                continue;
            };
            for n in group {
                if defined.contains(n) && !widths.contains_key(n) {
                    widths.insert(n.to_string(), w);
                    progress = true;
                }
            }
        }
        if !progress {
            break;
        }
    }
    let labels: HashMap<&str, usize> = raw
        .blocks
        .iter()
        .enumerate()
        .map(|(i, b)| (b.label.as_str(), i))
        .collect();
    if labels.len() != raw.blocks.len() {
        return Err(diag(raw.line, 1, "duplicate block label"));
    }
    if raw.blocks.is_empty() {
        return Err(diag(raw.line, 1, "function has no blocks"));
    }

    let mut blocks = Vec::new();
    for b in &raw.blocks {
        let mut phis = Vec::new();
        for p in &b.phis {
            let w = *widths
                .get(&p.name)
                .ok_or_else(|| diag(p.line, 1, format!("cannot infer the width of `%{}`", p.name)))?;
            let r = Resolver {
                widths: &widths,
                line: p.line,
            };
            let mut incoming = Vec::new();
            for (a, l) in &p.incoming {
                if !labels.contains_key(l.as_str()) {
                    return Err(diag(p.line, 1, format!("unknown block `{l}`")));
                }
                incoming.push((r.operand(a, w)?, l.clone()));
            }
            phis.push(Phi {
                name: p.name.clone(),
                width: w,
                incoming,
            });
        }
        let mut insts = Vec::new();
        for i in &b.insts {
            let w = *widths
                .get(&i.name)
                .ok_or_else(|| diag(i.line, 1, format!("cannot infer the width of `%{}`", i.name)))?;
            insts.push(resolve_instr(i, w, &widths)?);
        }
        let (term, tline) = b
            .term
            .clone()
            .ok_or_else(|| diag(b.line, 1, format!("block `{}` has no terminator", b.label)))?;
        let r = Resolver {
            widths: &widths,
            line: tline,
        };
        let term = match term {
            RawTerm::Br(c, t, e) => Terminator::Br(r.operand(&c, 1)?, t, e),
            RawTerm::Jmp(t) => Terminator::Jmp(t),
            RawTerm::Ret(v) => Terminator::Ret(r.operand(&v, raw.ret)?),
            RawTerm::Switch(v, d, cases) => {
                let w = r
                    .width_of(&v)
                    .ok_or_else(|| diag(tline, 1, "switch needs a named value"))?;
                let mut cs = Vec::new();
                for (k, l) in cases {
                    let c = literal(k, w, tline)?;
                    if cs.iter().any(|(o, _)| *o == c) {
                        return Err(diag(tline, 1, format!("duplicate case {k}")));
                    }
                    cs.push((c, l));
                }
                Terminator::Switch(r.operand(&v, w)?, d, cs)
            }
        };
        for t in term.targets() {
            if !labels.contains_key(t) {
                return Err(diag(tline, 1, format!("unknown block `{t}`")));
            }
        }
        blocks.push(BasicBlock {
            label: b.label.clone(),
            phis,
            insts,
            term,
        });
    }
    validate(raw.name, raw.params, raw.ret, blocks, &raw.blocks)
}

fn resolve_instr(i: &RawInstr, w: u32, widths: &HashMap<String, u32>) -> Result<Instr, Diagnostic> {
    let r = Resolver { widths, line: i.line };
    let sibling = || i.args.iter().find_map(|a| r.width_of(a));
    let bad_arity = |n: usize| diag(i.line, 1, format!("`%{}` expects {n} operands", i.name));
    let args = match i.op {
        FrontOp::Ugt | FrontOp::Sgt | FrontOp::Uge | FrontOp::Sge => {
            if i.args.len() != 2 {
                return Err(bad_arity(2));
            }
            let ow = sibling().ok_or_else(|| diag(i.line, 1, "comparison of two literals"))?;
            i.args.iter().map(|a| r.operand(a, ow)).collect::<Result<_, _>>()?
        }
        FrontOp::Load | FrontOp::Call => i.args.iter().map(|a| r.named(a).or_else(|_| r.operand(a, 64))).collect::<Result<_, _>>()?,
        FrontOp::Pass => {
            if i.args.len() != 1 {
                return Err(bad_arity(1));
            }
            vec![r.named(&i.args[0]).or_else(|_| r.operand(&i.args[0], w))?]
        }
        FrontOp::Gep => {
            if i.args.len() != 3 {
                return Err(bad_arity(3));
            }
            vec![
                r.operand(&i.args[0], w)?,
                r.operand(&i.args[1], w)?,
                r.operand(&i.args[2], w)?,
            ]
        }
        FrontOp::Ir(op) => match op {
            Opcode::Select => {
                if i.args.len() != 3 {
                    return Err(bad_arity(3));
                }
                vec![
                    r.operand(&i.args[0], 1)?,
                    r.operand(&i.args[1], w)?,
                    r.operand(&i.args[2], w)?,
                ]
            }
            Opcode::ExtractValue => {
                if i.args.len() != 2 {
                    return Err(bad_arity(2));
                }
                vec![r.named(&i.args[0])?, r.operand(&i.args[1], 32)?]
            }
            _ if op.is_cast() => {
                if i.args.len() != 1 {
                    return Err(bad_arity(1));
                }
                vec![r.named(&i.args[0])?]
            }
            _ => {
                let ow = if op.is_comparison() || op.is_with_overflow() {
                    sibling().unwrap_or(w)
                } else {
                    w
                };
                i.args.iter().map(|a| r.operand(a, ow)).collect::<Result<_, _>>()?
            }
        },
    };
    Ok(Instr {
        name: i.name.clone(),
        width: w,
        op: i.op,
        callee: i.callee.clone(),
        args,
    })
}

fn validate(
    name: String,
    params: Vec<(String, u32)>,
    ret: u32,
    blocks: Vec<BasicBlock>,
    raw: &[RawBlock],
) -> Result<CfgFunction, Diagnostic> {
    let n = blocks.len();
    let index: HashMap<&str, usize> = blocks.iter().enumerate().map(|(i, b)| (b.label.as_str(), i)).collect();
    let mut graph: DiGraph<(), ()> = DiGraph::new();
    let nodes: Vec<NodeIndex> = (0..n).map(|_| graph.add_node(())).collect();
    let mut preds: Vec<Vec<usize>> = vec![Vec::new(); n];
    for (i, b) in blocks.iter().enumerate() {
        let mut seen = HashSet::new();
        for t in b.term.targets() {
            let j = index[t];
            if seen.insert(j) {
                graph.add_edge(nodes[i], nodes[j], ());
                preds[j].push(i);
            }
        }
    }
    if !preds[0].is_empty() {
        return Err(diag(raw[0].line, 1, "the entry block may not have predecessors"));
    }
    let doms: Dominators<NodeIndex> = simple_fast(&graph, nodes[0]);
    let mut idom = vec![None; n];
    for i in 1..n {
        match doms.immediate_dominator(nodes[i]) {
            Some(d) => idom[i] = Some(d.index()),
            None => return Err(diag(raw[i].line, 1, format!("block `{}` is unreachable", blocks[i].label))),
        }
    }

    let mut retreating = HashSet::new();
    let mut state = vec![0u8; n];
    let mut stack = vec![(0usize, 0usize)];
    state[0] = 1;
    while let Some(&mut (b, ref mut k)) = stack.last_mut() {
        let succs: Vec<usize> = graph.neighbors_directed(nodes[b], petgraph::Direction::Outgoing).map(|x| x.index()).collect();
        let mut succs = succs;
        succs.reverse();
        if *k < succs.len() {
            let s = succs[*k];
            *k += 1;
            match state[s] {
                0 => {
                    state[s] = 1;
                    stack.push((s, 0));
                }
                1 => {
                    retreating.insert((b, s));
                }
                _ => {}
            }
        } else {
            state[b] = 2;
            stack.pop();
        }
    }

    let mut f = CfgFunction {
        name,
        params,
        ret,
        blocks,
        preds,
        idom,
        retreating,
    };

    // Phi operands follow the predecessor order, one per predecessor.
    for (bi, b) in f.blocks.iter_mut().enumerate() {
        for (pi, p) in b.phis.iter_mut().enumerate() {
            let line = raw[bi].phis[pi].line;
            let mut ordered = Vec::new();
            for &pred in &f.preds[bi] {
                let label = &raw[pred].label;
                let mut hits = p.incoming.iter().filter(|(_, l)| l == label);
                let Some(hit) = hits.next() else {
                    return Err(diag(line, 1, format!("`%{}` has no value for predecessor `{label}`", p.name)));
                };
                if hits.next().is_some() {
                    return Err(diag(line, 1, format!("`%{}` names `{label}` twice", p.name)));
                }
                ordered.push(hit.clone());
            }
            if ordered.len() != p.incoming.len() {
                return Err(diag(line, 1, format!("`%{}` names a block that is not a predecessor", p.name)));
            }
            p.incoming = ordered;
        }
    }

    // Definitions dominate uses.
    let mut def_site: HashMap<&str, (usize, usize)> = HashMap::new();
    for (bi, b) in f.blocks.iter().enumerate() {
        for (k, p) in b.phis.iter().enumerate() {
            def_site.insert(&p.name, (bi, k));
        }
        for (k, i) in b.insts.iter().enumerate() {
            def_site.insert(&i.name, (bi, b.phis.len() + k));
        }
    }
    let params: HashSet<&str> = f.params.iter().map(|(p, _)| p.as_str()).collect();
    let check = |v: &Operand, at_block: usize, at_pos: usize, line: usize| -> Result<(), Diagnostic> {
        let Operand::Value(n) = v else { return Ok(()) };
        if params.contains(n.as_str()) {
            return Ok(());
        }
        let &(db, dp) = def_site
            .get(n.as_str())
            .ok_or_else(|| diag(line, 1, format!("`%{n}` is not defined")))?;
        let ok = if db == at_block { dp < at_pos } else { f.dominates(db, at_block) };
        if ok {
            Ok(())
        } else {
            Err(diag(line, 1, format!("`%{n}` does not dominate this use")))
        }
    };
    for (bi, b) in f.blocks.iter().enumerate() {
        for (pi, p) in b.phis.iter().enumerate() {
            for (k, (v, _)) in p.incoming.iter().enumerate() {
                let pred = f.preds[bi][k];
                check(v, pred, usize::MAX, raw[bi].phis[pi].line)?;
            }
        }
        for (k, i) in b.insts.iter().enumerate() {
            for a in &i.args {
                check(a, bi, b.phis.len() + k, raw[bi].insts[k].line)?;
            }
        }
        let tline = raw[bi].term.as_ref().map_or(raw[bi].line, |t| t.1);
        match &b.term {
            Terminator::Br(c, _, _) => check(c, bi, usize::MAX, tline)?,
            Terminator::Switch(v, _, _) | Terminator::Ret(v) => check(v, bi, usize::MAX, tline)?,
            Terminator::Jmp(_) => {}
        }
    }
    Ok(f)
}

#[cfg(test)]
mod tests {
    use super::*;

    const DIAMOND: &str = "\
func @f(%c:i1, %z:i32) -> i32 {
entry:
  br %c, a, b
a:
  %x = mul %z, 3
  jmp end
b:
  %y = shl %z, 1
  jmp end
end:
  %p = phi [%y, b], [%x, a]
  ret %p
}
";

    #[test]
    fn diamond() {
        let fs = parse_cfg(DIAMOND).unwrap();
        let f = &fs[0];
        assert_eq!(f.blocks.len(), 4);
        assert_eq!(f.preds[3], vec![1, 2]);
        // reordered to follow the predecessors
        assert_eq!(f.blocks[3].phis[0].incoming[0].1, "a");
        assert_eq!(f.idom(3), Some(0));
        assert!(f.dominates(0, 3));
        assert!(!f.dominates(1, 3));
        assert!(!f.is_loop_entry(3));
    }

    #[test]
    fn non_dominating_use() {
        let text = DIAMOND.replace("ret %p", "ret %x");
        let errs = parse_cfg(&text).unwrap_err();
        assert!(errs[0].message.contains("does not dominate"), "{errs:?}");
    }

    #[test]
    fn phi_must_cover_predecessors() {
        let text = DIAMOND.replace("[%y, b], [%x, a]", "[%x, a]");
        let errs = parse_cfg(&text).unwrap_err();
        assert!(errs[0].message.contains("no value for predecessor"), "{errs:?}");
    }

    #[test]
    fn widths_flow_backwards_through_the_text() {
        let text = "\
func @g(%a:i8) -> i8 {
entry:
  jmp second
third:
  %y = add %x, 1
  ret %y
second:
  %x = xor %a, -1
  jmp third
}
";
        let f = &parse_cfg(text).unwrap()[0];
        assert_eq!(f.blocks[1].insts[0].width, 8);
        assert_eq!(f.blocks[1].insts[0].args[1], Operand::Const(Constant::new(1, Width::new(8).unwrap())));
    }

    #[test]
    fn loops_have_retreating_edges() {
        let text = "\
func @h(%n:i8) -> i8 {
entry:
  jmp head
head:
  %i = phi [0, entry], [%j, head]
  %j = add %i, 1
  %c = ult %j, %n
  br %c, head, out
out:
  ret %j
}
";
        let f = &parse_cfg(text).unwrap()[0];
        assert!(f.is_retreating(1, 1));
        assert!(f.is_loop_entry(1));
    }

    #[test]
    fn unknown_opcode_has_a_position() {
        let errs = parse_cfg("func @f(%a:i8) -> i8 {\nentry:\n  %b = frob %a\n  ret %b\n}\n").unwrap_err();
        assert_eq!((errs[0].line, errs[0].col), (3, 8));
    }
}
