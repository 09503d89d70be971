//! Four-valued interpreter for the synthesizable subset this crate emits:
//! parameters, port/reg/wire declarations, continuous assigns (including
//! bit-select targets), `always_comb`/`always @*` blocks and edge-triggered
//! `always` blocks with `if`/`case` bodies.
//!
//! It is the reference runner used to verify generated artifacts at scale and
//! to produce VCD traces without an external simulator.

use std::collections::HashMap;
use std::fmt;
use std::fmt::Write as _;

use thiserror::Error;

use super::testbench::{StimulusPlan, TestbenchSpec};
use super::Direction;

#[derive(Debug, Error, PartialEq)]
pub enum InterpError {
    #[error("line {line}: {msg}")]
    Syntax { line: usize, msg: String },
    #[error("unsupported construct at line {line}: {what}")]
    Unsupported { line: usize, what: String },
    #[error("unknown signal `{0}`")]
    UnknownSignal(String),
    #[error("combinational logic did not settle")]
    CombLoop,
    #[error("`{0}` is not an input port")]
    NotInput(String),
}

/// A vector of up to 64 four-valued bits. Bits set in `x` are unknown;
/// their `val` bit is kept at 0.
#[derive(Clone, Copy, PartialEq, Eq, Hash)]
pub struct Logic {
    pub width: u32,
    pub val: u64,
    pub x: u64,
}

fn mask(width: u32) -> u64 {
    if width >= 64 {
        u64::MAX
    } else {
        (1u64 << width) - 1
    }
}

impl Logic {
    pub fn new(width: u32, val: u64) -> Self {
        let width = width.clamp(1, 64);
        Self { width, val: val & mask(width), x: 0 }
    }

    pub fn unknown(width: u32) -> Self {
        let width = width.clamp(1, 64);
        Self { width, val: 0, x: mask(width) }
    }

    pub fn bit(b: bool) -> Self {
        Self::new(1, u64::from(b))
    }

    pub fn is_known(&self) -> bool {
        self.x == 0
    }

    pub fn known_value(&self) -> Option<u64> {
        self.is_known().then_some(self.val)
    }

    pub fn resize(self, width: u32) -> Self {
        let m = mask(width.clamp(1, 64));
        Self { width: width.clamp(1, 64), val: self.val & m, x: self.x & m }
    }

    fn ones(&self) -> u64 {
        self.val & !self.x
    }

    fn zeros(&self) -> u64 {
        !self.val & !self.x & mask(self.width)
    }

    /// Three-valued truth: `Some(true)` if any bit is a known 1.
    fn truth(&self) -> Option<bool> {
        if self.ones() != 0 {
            Some(true)
        } else if self.x == 0 {
            Some(false)
        } else {
            None
        }
    }

    fn from_truth(t: Option<bool>) -> Self {
        match t {
            Some(b) => Self::bit(b),
            None => Self::unknown(1),
        }
    }

    fn from_parts(width: u32, ones: u64, zeros: u64) -> Self {
        let m = mask(width);
        let x = !(ones | zeros) & m;
        Self { width, val: ones & m & !x, x }
    }

    pub fn bit_at(&self, i: u32) -> Logic {
        if i >= self.width {
            return Self::unknown(1);
        }
        Self { width: 1, val: (self.val >> i) & 1, x: (self.x >> i) & 1 }
    }

    /// Single-character symbol for a 1-bit value.
    pub fn symbol(&self) -> char {
        if self.x & 1 == 1 {
            'x'
        } else if self.val & 1 == 1 {
            '1'
        } else {
            '0'
        }
    }

    /// MSB-first bit string with `x` for unknown bits.
    pub fn bits(&self) -> String {
        (0..self.width).rev().map(|i| self.bit_at(i).symbol()).collect()
    }
}

impl fmt::Debug for Logic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}'b{}", self.width, self.bits())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum UnOp {
    Not,
    LogNot,
    Neg,
    RedAnd,
    RedOr,
    RedXor,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum BinOp {
    And,
    Or,
    Xor,
    LogAnd,
    LogOr,
    Eq,
    Ne,
    CaseEq,
    CaseNe,
    Lt,
    Gt,
    Le,
    Ge,
    Add,
    Sub,
}

#[derive(Clone, Debug)]
enum Expr {
    Const(Logic),
    Sig(usize),
    Index(usize, Box<Expr>),
    Unary(UnOp, Box<Expr>),
    Binary(BinOp, Box<Expr>, Box<Expr>),
    Ternary(Box<Expr>, Box<Expr>, Box<Expr>),
}

#[derive(Clone, Debug)]
struct LValue {
    sig: usize,
    index: Option<Expr>,
}

#[derive(Clone, Debug)]
enum Stmt {
    Block(Vec<Stmt>),
    If(Expr, Box<Stmt>, Option<Box<Stmt>>),
    Assign { lv: LValue, expr: Expr, nonblocking: bool },
    Case { sel: Expr, arms: Vec<(Vec<Expr>, Stmt)>, default: Option<Box<Stmt>> },
    Empty,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Edge {
    Pos,
    Neg,
}

#[derive(Clone, Debug)]
struct SeqBlock {
    triggers: Vec<(Edge, usize)>,
    body: Stmt,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SignalInfo {
    pub name: String,
    pub width: u32,
    pub direction: Option<Direction>,
}

/// An elaborated module ready for simulation.
#[derive(Clone, Debug)]
pub struct Module {
    pub name: String,
    pub signals: Vec<SignalInfo>,
    /// Port names in header order.
    pub ports: Vec<String>,
    assigns: Vec<(LValue, Expr)>,
    comb: Vec<Stmt>,
    seq: Vec<SeqBlock>,
    index: HashMap<String, usize>,
}

impl Module {
    pub fn signal(&self, name: &str) -> Option<usize> {
        self.index.get(name).copied()
    }

    pub fn signal_info(&self, name: &str) -> Option<&SignalInfo> {
        self.signal(name).map(|i| &self.signals[i])
    }
}

// ---------------------------------------------------------------- lexer

#[derive(Clone, Debug, PartialEq)]
enum Tok {
    Ident(String),
    Number(String),
    Sym(&'static str),
}

const SYMBOLS: &[&str] = &[
    "===", "!==", "==", "!=", "<=", ">=", "&&", "||", "(", ")", "[", "]", "{", "}", ";", ",", ":", "=", "?", "~", "!",
    "&", "|", "^", "@", "#", ".", "+", "-", "*", "<", ">",
];

fn lex(src: &str) -> Result<Vec<(Tok, usize)>, InterpError> {
    let bytes = src.as_bytes();
    let mut out = Vec::new();
    let mut i = 0;
    let mut line = 1;
    while i < bytes.len() {
        let c = bytes[i] as char;
        if c == '\n' {
            line += 1;
            i += 1;
        } else if c.is_ascii_whitespace() {
            i += 1;
        } else if src[i..].starts_with("//") || c == '`' {
            while i < bytes.len() && bytes[i] != b'\n' {
                i += 1;
            }
        } else if src[i..].starts_with("/*") {
            let end = src[i + 2..]
                .find("*/")
                .ok_or(InterpError::Syntax { line, msg: "unterminated comment".into() })?;
            line += src[i..i + 2 + end].matches('\n').count();
            i += end + 4;
        } else if c.is_ascii_alphabetic() || c == '_' || c == '$' {
            let start = i;
            while i < bytes.len() && (bytes[i].is_ascii_alphanumeric() || bytes[i] == b'_' || bytes[i] == b'$') {
                i += 1;
            }
            out.push((Tok::Ident(src[start..i].to_string()), line));
        } else if c.is_ascii_digit() || c == '\'' {
            let start = i;
            while i < bytes.len() && (bytes[i].is_ascii_digit() || bytes[i] == b'_') {
                i += 1;
            }
            if i < bytes.len() && bytes[i] == b'\'' {
                i += 1;
                if i < bytes.len() && matches!(bytes[i], b's' | b'S') {
                    i += 1;
                }
                while i < bytes.len() && (bytes[i].is_ascii_alphanumeric() || bytes[i] == b'_' || bytes[i] == b'?') {
                    i += 1;
                }
            }
            out.push((Tok::Number(src[start..i].to_string()), line));
        } else if let Some(sym) = SYMBOLS.iter().find(|s| src[i..].starts_with(**s)) {
            out.push((Tok::Sym(sym), line));
            i += sym.len();
        } else {
            return Err(InterpError::Syntax { line, msg: format!("unexpected character {c:?}") });
        }
    }
    Ok(out)
}

fn parse_number(text: &str, line: usize) -> Result<Logic, InterpError> {
    let bad = || InterpError::Syntax { line, msg: format!("bad number {text:?}") };
    let Some(q) = text.find('\'') else {
        let v: u64 = text.replace('_', "").parse().map_err(|_| bad())?;
        return Ok(Logic::new(32, v));
    };
    let size = &text[..q];
    let mut rest = &text[q + 1..];
    if rest.starts_with(['s', 'S']) {
        rest = &rest[1..];
    }
    let unsized_fill = size.is_empty() && rest.len() == 1 && matches!(rest, "0" | "1" | "x" | "X" | "z" | "Z");
    if unsized_fill {
        return Ok(match rest {
            "0" => Logic::new(64, 0),
            "1" => Logic::new(64, u64::MAX),
            _ => Logic::unknown(64),
        });
    }
    let width: u32 = if size.is_empty() { 32 } else { size.replace('_', "").parse().map_err(|_| bad())? };
    if width == 0 || width > 64 || rest.is_empty() {
        return Err(bad());
    }
    let (radix_bits, digits) = match rest.as_bytes()[0].to_ascii_lowercase() {
        b'b' => (1u32, &rest[1..]),
        b'o' => (3, &rest[1..]),
        b'h' => (4, &rest[1..]),
        b'd' => (0, &rest[1..]),
        _ => return Err(bad()),
    };
    let digits = digits.replace('_', "");
    if digits.is_empty() {
        return Err(bad());
    }
    if radix_bits == 0 {
        if digits.chars().all(|c| matches!(c, 'x' | 'X' | 'z' | 'Z' | '?')) {
            return Ok(Logic::unknown(width));
        }
        let v: u64 = digits.parse().map_err(|_| bad())?;
        return Ok(Logic::new(width, v));
    }
    let (mut val, mut x) = (0u64, 0u64);
    for c in digits.chars() {
        val = val.checked_shl(radix_bits).unwrap_or(0);
        x = x.checked_shl(radix_bits).unwrap_or(0);
        let digit_mask = (1u64 << radix_bits) - 1;
        match c {
            'x' | 'X' | 'z' | 'Z' | '?' => x |= digit_mask,
            _ => {
                let d = c.to_digit(1 << radix_bits).ok_or_else(bad)? as u64;
                val |= d;
            }
        }
    }
    let m = mask(width);
    Ok(Logic { width, val: val & !x & m, x: x & m })
}

// ---------------------------------------------------------------- parser

struct Parser {
    toks: Vec<(Tok, usize)>,
    pos: usize,
    params: HashMap<String, Logic>,
    index: HashMap<String, usize>,
    signals: Vec<SignalInfo>,
}

impl Parser {
    fn line(&self) -> usize {
        self.toks.get(self.pos).or(self.toks.last()).map_or(0, |t| t.1)
    }

    fn peek(&self) -> Option<&Tok> {
        self.toks.get(self.pos).map(|t| &t.0)
    }

    fn syntax(&self, msg: impl Into<String>) -> InterpError {
        InterpError::Syntax { line: self.line(), msg: msg.into() }
    }

    fn unsupported(&self, what: impl Into<String>) -> InterpError {
        InterpError::Unsupported { line: self.line(), what: what.into() }
    }

    fn next(&mut self) -> Result<Tok, InterpError> {
        let t = self.toks.get(self.pos).map(|t| t.0.clone()).ok_or_else(|| self.syntax("unexpected end of input"))?;
        self.pos += 1;
        Ok(t)
    }

    fn is_sym(&self, s: &str) -> bool {
        matches!(self.peek(), Some(Tok::Sym(t)) if *t == s)
    }

    fn is_kw(&self, s: &str) -> bool {
        matches!(self.peek(), Some(Tok::Ident(t)) if t == s)
    }

    fn eat_sym(&mut self, s: &str) -> bool {
        if self.is_sym(s) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn eat_kw(&mut self, s: &str) -> bool {
        if self.is_kw(s) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn eat_any_kw(&mut self, kws: &[&str]) {
        for k in kws {
            if self.eat_kw(k) {
                return;
            }
        }
    }

    fn expect_sym(&mut self, s: &str) -> Result<(), InterpError> {
        if self.eat_sym(s) {
            Ok(())
        } else {
            Err(self.syntax(format!("expected `{s}`, found {:?}", self.peek())))
        }
    }

    fn expect_kw(&mut self, s: &str) -> Result<(), InterpError> {
        if self.eat_kw(s) {
            Ok(())
        } else {
            Err(self.syntax(format!("expected `{s}`, found {:?}", self.peek())))
        }
    }

    fn ident(&mut self) -> Result<String, InterpError> {
        match self.next()? {
            Tok::Ident(s) => Ok(s),
            t => Err(self.syntax(format!("expected identifier, found {t:?}"))),
        }
    }

    fn declare(&mut self, name: &str, width: u32, direction: Option<Direction>) -> Result<(), InterpError> {
        if let Some(&i) = self.index.get(name) {
            let s = &mut self.signals[i];
            // `output z;` followed by `reg z;` redeclares the same net.
            if direction.is_some() && s.direction.is_some() {
                return Err(self.syntax(format!("`{name}` declared twice")));
            }
            s.direction = s.direction.or(direction);
            s.width = s.width.max(width);
            return Ok(());
        }
        self.index.insert(name.to_string(), self.signals.len());
        self.signals.push(SignalInfo { name: name.to_string(), width, direction });
        Ok(())
    }

    fn const_eval(&mut self) -> Result<Logic, InterpError> {
        let e = self.expr()?;
        let v = eval(&e, &[]);
        if !v.is_known() {
            return Err(self.syntax("expected a constant expression"));
        }
        Ok(v)
    }

    fn opt_range(&mut self) -> Result<u32, InterpError> {
        if !self.eat_sym("[") {
            return Ok(1);
        }
        let msb = self.const_eval()?.val;
        self.expect_sym(":")?;
        let lsb = self.const_eval()?.val;
        self.expect_sym("]")?;
        if lsb != 0 || msb >= 64 {
            return Err(self.unsupported("ranges must be [N:0] with N < 64"));
        }
        Ok(msb as u32 + 1)
    }

    fn module(&mut self) -> Result<Module, InterpError> {
        while !self.is_kw("module") {
            if self.peek().is_none() {
                return Err(self.syntax("no module found"));
            }
            self.pos += 1;
        }
        self.expect_kw("module")?;
        let name = self.ident()?;
        if self.is_sym("#") {
            return Err(self.unsupported("module parameter ports"));
        }
        let mut ports = Vec::new();
        if self.eat_sym("(") {
            let mut dir: Option<Direction> = None;
            let mut width = 1;
            while !self.is_sym(")") {
                if self.eat_kw("input") {
                    dir = Some(Direction::Input);
                    self.eat_any_kw(&["wire", "logic"]);
                    width = self.opt_range()?;
                } else if self.eat_kw("output") {
                    dir = Some(Direction::Output);
                    self.eat_any_kw(&["reg", "wire", "logic"]);
                    width = self.opt_range()?;
                } else if self.is_kw("inout") {
                    return Err(self.unsupported("inout ports"));
                }
                let pname = self.ident()?;
                match dir {
                    Some(d) => self.declare(&pname, width, Some(d))?,
                    None => self.declare(&pname, 1, None)?,
                }
                ports.push(pname);
                if !self.eat_sym(",") {
                    break;
                }
            }
            self.expect_sym(")")?;
        }
        self.expect_sym(";")?;

        let mut assigns = Vec::new();
        let mut comb = Vec::new();
        let mut seq = Vec::new();
        loop {
            let kw = match self.peek() {
                Some(Tok::Ident(k)) => k.clone(),
                Some(t) => return Err(self.syntax(format!("unexpected {t:?} at module level"))),
                None => return Err(self.syntax("missing endmodule")),
            };
            self.pos += 1;
            match kw.as_str() {
                "endmodule" => break,
                "parameter" | "localparam" => loop {
                    let pname = self.ident()?;
                    self.expect_sym("=")?;
                    let v = self.const_eval()?;
                    self.params.insert(pname, v);
                    if !self.eat_sym(",") {
                        self.expect_sym(";")?;
                        break;
                    }
                },
                "input" | "output" | "reg" | "wire" | "logic" | "integer" => {
                    let dir = match kw.as_str() {
                        "input" => Some(Direction::Input),
                        "output" => Some(Direction::Output),
                        _ => None,
                    };
                    if dir.is_some() {
                        self.eat_any_kw(&["reg", "wire", "logic"]);
                    }
                    let width = if kw == "integer" { 32 } else { self.opt_range()? };
                    loop {
                        let n = self.ident()?;
                        if self.is_sym("=") {
                            return Err(self.unsupported("declaration initializers"));
                        }
                        self.declare(&n, width, dir)?;
                        if !self.eat_sym(",") {
                            break;
                        }
                    }
                    self.expect_sym(";")?;
                }
                "assign" => loop {
                    let lv = self.lvalue()?;
                    self.expect_sym("=")?;
                    let e = self.expr()?;
                    assigns.push((lv, e));
                    if !self.eat_sym(",") {
                        self.expect_sym(";")?;
                        break;
                    }
                },
                "always_comb" => comb.push(self.stmt()?),
                "always" | "always_ff" => {
                    self.expect_sym("@")?;
                    if self.eat_sym("*") {
                        comb.push(self.stmt()?);
                        continue;
                    }
                    self.expect_sym("(")?;
                    if self.eat_sym("*") {
                        self.expect_sym(")")?;
                        comb.push(self.stmt()?);
                        continue;
                    }
                    let mut triggers = Vec::new();
                    loop {
                        let edge = if self.eat_kw("posedge") {
                            Edge::Pos
                        } else if self.eat_kw("negedge") {
                            Edge::Neg
                        } else {
                            return Err(self.unsupported("level-sensitive event lists"));
                        };
                        let s = self.ident()?;
                        let idx = *self.index.get(&s).ok_or(InterpError::UnknownSignal(s))?;
                        triggers.push((edge, idx));
                        if !(self.eat_sym(",") || self.eat_kw("or")) {
                            break;
                        }
                    }
                    self.expect_sym(")")?;
                    let body = self.stmt()?;
                    seq.push(SeqBlock { triggers, body });
                }
                other => return Err(self.unsupported(format!("module item `{other}`"))),
            }
        }
        for s in &self.signals {
            if s.direction.is_none() && ports.contains(&s.name) {
                return Err(self.syntax(format!("port `{}` has no direction", s.name)));
            }
        }
        Ok(Module {
            name,
            signals: std::mem::take(&mut self.signals),
            ports,
            assigns,
            comb,
            seq,
            index: std::mem::take(&mut self.index),
        })
    }

    fn lvalue(&mut self) -> Result<LValue, InterpError> {
        if self.is_sym("{") {
            return Err(self.unsupported("concatenation targets"));
        }
        let name = self.ident()?;
        let sig = *self.index.get(&name).ok_or(InterpError::UnknownSignal(name))?;
        let index = if self.eat_sym("[") {
            let e = self.expr()?;
            if self.is_sym(":") {
                return Err(self.unsupported("part selects"));
            }
            self.expect_sym("]")?;
            Some(e)
        } else {
            None
        };
        Ok(LValue { sig, index })
    }

    fn stmt(&mut self) -> Result<Stmt, InterpError> {
        if self.eat_sym(";") {
            return Ok(Stmt::Empty);
        }
        if self.eat_kw("begin") {
            if self.eat_sym(":") {
                self.ident()?;
            }
            let mut body = Vec::new();
            while !self.eat_kw("end") {
                if self.peek().is_none() {
                    return Err(self.syntax("missing `end`"));
                }
                body.push(self.stmt()?);
            }
            return Ok(Stmt::Block(body));
        }
        if self.eat_kw("if") {
            self.expect_sym("(")?;
            let c = self.expr()?;
            self.expect_sym(")")?;
            let then = self.stmt()?;
            let els = if self.eat_kw("else") { Some(Box::new(self.stmt()?)) } else { None };
            return Ok(Stmt::If(c, Box::new(then), els));
        }
        if self.eat_kw("case") {
            self.expect_sym("(")?;
            let sel = self.expr()?;
            self.expect_sym(")")?;
            let mut arms = Vec::new();
            let mut default = None;
            while !self.eat_kw("endcase") {
                if self.peek().is_none() {
                    return Err(self.syntax("missing `endcase`"));
                }
                if self.eat_kw("default") {
                    self.eat_sym(":");
                    default = Some(Box::new(self.stmt()?));
                    continue;
                }
                let mut labels = vec![self.expr()?];
                while self.eat_sym(",") {
                    labels.push(self.expr()?);
                }
                self.expect_sym(":")?;
                arms.push((labels, self.stmt()?));
            }
            return Ok(Stmt::Case { sel, arms, default });
        }
        if let Some(Tok::Ident(k)) = self.peek() {
            if k.starts_with('$') || matches!(k.as_str(), "for" | "while" | "casez" | "casex" | "repeat" | "forever") {
                return Err(self.unsupported(format!("statement `{k}`")));
            }
        }
        let lv = self.lvalue()?;
        let nonblocking = if self.eat_sym("<=") {
            true
        } else {
            self.expect_sym("=")?;
            false
        };
        let expr = self.expr()?;
        self.expect_sym(";")?;
        Ok(Stmt::Assign { lv, expr, nonblocking })
    }

    fn expr(&mut self) -> Result<Expr, InterpError> {
        let c = self.binary(0)?;
        if self.eat_sym("?") {
            let a = self.expr()?;
            self.expect_sym(":")?;
            let b = self.expr()?;
            return Ok(Expr::Ternary(Box::new(c), Box::new(a), Box::new(b)));
        }
        Ok(c)
    }

    /// Precedence climbing over binary operators, lowest level first.
    fn binary(&mut self, level: usize) -> Result<Expr, InterpError> {
        const LEVELS: &[&[(&str, BinOp)]] = &[
            &[("||", BinOp::LogOr)],
            &[("&&", BinOp::LogAnd)],
            &[("|", BinOp::Or)],
            &[("^", BinOp::Xor)],
            &[("&", BinOp::And)],
            &[("===", BinOp::CaseEq), ("!==", BinOp::CaseNe), ("==", BinOp::Eq), ("!=", BinOp::Ne)],
            &[("<=", BinOp::Le), (">=", BinOp::Ge), ("<", BinOp::Lt), (">", BinOp::Gt)],
            &[("+", BinOp::Add), ("-", BinOp::Sub)],
        ];
        if level == LEVELS.len() {
            return self.unary();
        }
        let mut lhs = self.binary(level + 1)?;
        'outer: loop {
            for (sym, op) in LEVELS[level] {
                if self.eat_sym(sym) {
                    let rhs = self.binary(level + 1)?;
                    lhs = Expr::Binary(*op, Box::new(lhs), Box::new(rhs));
                    continue 'outer;
                }
            }
            return Ok(lhs);
        }
    }

    fn unary(&mut self) -> Result<Expr, InterpError> {
        const OPS: &[(&str, UnOp)] = &[
            ("~", UnOp::Not),
            ("!", UnOp::LogNot),
            ("-", UnOp::Neg),
            ("&", UnOp::RedAnd),
            ("|", UnOp::RedOr),
            ("^", UnOp::RedXor),
        ];
        for (sym, op) in OPS {
            if self.eat_sym(sym) {
                return Ok(Expr::Unary(*op, Box::new(self.unary()?)));
            }
        }
        self.primary()
    }

    fn primary(&mut self) -> Result<Expr, InterpError> {
        let line = self.line();
        match self.next()? {
            Tok::Number(n) => Ok(Expr::Const(parse_number(&n, line)?)),
            Tok::Sym("(") => {
                let e = self.expr()?;
                self.expect_sym(")")?;
                Ok(e)
            }
            Tok::Sym("{") => Err(self.unsupported("concatenation")),
            Tok::Ident(name) => {
                if let Some(v) = self.params.get(&name) {
                    return Ok(Expr::Const(*v));
                }
                let sig = *self.index.get(&name).ok_or(InterpError::UnknownSignal(name))?;
                if self.eat_sym("[") {
                    let idx = self.expr()?;
                    if self.is_sym(":") {
                        return Err(self.unsupported("part selects"));
                    }
                    self.expect_sym("]")?;
                    return Ok(Expr::Index(sig, Box::new(idx)));
                }
                Ok(Expr::Sig(sig))
            }
            t => Err(self.syntax(format!("unexpected {t:?} in expression"))),
        }
    }
}

/// Parses the first module in `src`.
pub fn parse_module(src: &str) -> Result<Module, InterpError> {
    let mut p =
        Parser { toks: lex(src)?, pos: 0, params: HashMap::new(), index: HashMap::new(), signals: Vec::new() };
    p.module()
}

// ---------------------------------------------------------------- evaluation

fn eval(e: &Expr, vals: &[Logic]) -> Logic {
    match e {
        Expr::Const(v) => *v,
        Expr::Sig(i) => vals[*i],
        Expr::Index(i, idx) => {
            let idx = eval(idx, vals);
            match idx.known_value() {
                Some(b) if b < 64 => vals[*i].bit_at(b as u32),
                _ => Logic::unknown(1),
            }
        }
        Expr::Unary(op, a) => {
            let a = eval(a, vals);
            match op {
                UnOp::Not => Logic { width: a.width, val: a.zeros(), x: a.x },
                UnOp::LogNot => Logic::from_truth(a.truth().map(|t| !t)),
                UnOp::Neg => {
                    if a.is_known() {
                        Logic::new(a.width, a.val.wrapping_neg())
                    } else {
                        Logic::unknown(a.width)
                    }
                }
                UnOp::RedAnd => Logic::from_truth(if a.zeros() != 0 {
                    Some(false)
                } else if a.is_known() {
                    Some(true)
                } else {
                    None
                }),
                UnOp::RedOr => Logic::from_truth(a.truth()),
                UnOp::RedXor => {
                    if a.is_known() {
                        Logic::bit(a.val.count_ones() % 2 == 1)
                    } else {
                        Logic::unknown(1)
                    }
                }
            }
        }
        Expr::Binary(op, a, b) => {
            let a = eval(a, vals);
            if let BinOp::LogAnd | BinOp::LogOr = op {
                let b = eval(b, vals);
                let (ta, tb) = (a.truth(), b.truth());
                return Logic::from_truth(match op {
                    BinOp::LogAnd => match (ta, tb) {
                        (Some(false), _) | (_, Some(false)) => Some(false),
                        (Some(true), Some(true)) => Some(true),
                        _ => None,
                    },
                    _ => match (ta, tb) {
                        (Some(true), _) | (_, Some(true)) => Some(true),
                        (Some(false), Some(false)) => Some(false),
                        _ => None,
                    },
                });
            }
            let b = eval(b, vals);
            let w = a.width.max(b.width);
            let (a, b) = (a.resize(w), b.resize(w));
            match op {
                BinOp::And => Logic::from_parts(w, a.ones() & b.ones(), a.zeros() | b.zeros()),
                BinOp::Or => Logic::from_parts(w, a.ones() | b.ones(), a.zeros() & b.zeros()),
                BinOp::Xor => {
                    let x = a.x | b.x;
                    Logic { width: w, val: (a.val ^ b.val) & !x, x }
                }
                BinOp::CaseEq => Logic::bit(a == b),
                BinOp::CaseNe => Logic::bit(a != b),
                _ if !(a.is_known() && b.is_known()) => match op {
                    BinOp::Add | BinOp::Sub => Logic::unknown(w),
                    _ => Logic::unknown(1),
                },
                BinOp::Eq => Logic::bit(a.val == b.val),
                BinOp::Ne => Logic::bit(a.val != b.val),
                BinOp::Lt => Logic::bit(a.val < b.val),
                BinOp::Gt => Logic::bit(a.val > b.val),
                BinOp::Le => Logic::bit(a.val <= b.val),
                BinOp::Ge => Logic::bit(a.val >= b.val),
                BinOp::Add => Logic::new(w, a.val.wrapping_add(b.val)),
                BinOp::Sub => Logic::new(w, a.val.wrapping_sub(b.val)),
                BinOp::LogAnd | BinOp::LogOr => unreachable!("handled above"),
            }
        }
        Expr::Ternary(c, a, b) => match eval(c, vals).truth() {
            Some(true) => eval(a, vals),
            Some(false) => eval(b, vals),
            None => {
                let (a, b) = (eval(a, vals), eval(b, vals));
                let w = a.width.max(b.width);
                let (a, b) = (a.resize(w), b.resize(w));
                Logic::from_parts(w, a.ones() & b.ones(), a.zeros() & b.zeros())
            }
        },
    }
}

/// Mutable signal state of one module instance.
#[derive(Clone, Debug)]
pub struct Simulator<'m> {
    module: &'m Module,
    vals: Vec<Logic>,
}

struct Pending {
    sig: usize,
    bit: Option<u32>,
    value: Logic,
}

impl<'m> Simulator<'m> {
    /// All signals start unknown; combinational logic is settled.
    pub fn new(module: &'m Module) -> Result<Self, InterpError> {
        let vals = module.signals.iter().map(|s| Logic::unknown(s.width)).collect();
        let mut sim = Self { module, vals };
        sim.settle()?;
        Ok(sim)
    }

    pub fn module(&self) -> &Module {
        self.module
    }

    pub fn get(&self, name: &str) -> Result<Logic, InterpError> {
        let i = self.module.signal(name).ok_or_else(|| InterpError::UnknownSignal(name.to_string()))?;
        Ok(self.vals[i])
    }

    /// Drives several inputs at the same instant, then settles logic and
    /// runs any edge-triggered blocks the change fires.
    pub fn set_inputs(&mut self, inputs: &[(&str, u64)]) -> Result<(), InterpError> {
        let before = self.vals.clone();
        for &(name, v) in inputs {
            let i = self.module.signal(name).ok_or_else(|| InterpError::UnknownSignal(name.to_string()))?;
            if self.module.signals[i].direction != Some(Direction::Input) {
                return Err(InterpError::NotInput(name.to_string()));
            }
            self.vals[i] = Logic::new(self.module.signals[i].width, v);
        }
        self.settle()?;
        self.fire_edges(before)
    }

    fn fire_edges(&mut self, mut before: Vec<Logic>) -> Result<(), InterpError> {
        for _ in 0..16 {
            let fired: Vec<usize> = self
                .module
                .seq
                .iter()
                .enumerate()
                .filter(|(_, b)| {
                    b.triggers.iter().any(|&(edge, s)| {
                        let (old, new) = (before[s].bit_at(0).symbol(), self.vals[s].bit_at(0).symbol());
                        match edge {
                            Edge::Pos => matches!((old, new), ('0', '1') | ('0', 'x') | ('x', '1')),
                            Edge::Neg => matches!((old, new), ('1', '0') | ('1', 'x') | ('x', '0')),
                        }
                    })
                })
                .map(|(i, _)| i)
                .collect();
            if fired.is_empty() {
                return Ok(());
            }
            before = self.vals.clone();
            let mut nba = Vec::new();
            for i in fired {
                let body = &self.module.seq[i].body;
                self.exec(body, &mut nba);
            }
            for p in nba {
                self.write(p.sig, p.bit, p.value);
            }
            self.settle()?;
        }
        Err(InterpError::CombLoop)
    }

    fn write(&mut self, sig: usize, bit: Option<u32>, value: Logic) -> bool {
        let cur = self.vals[sig];
        let new = match bit {
            None => value.resize(cur.width),
            Some(b) if b < cur.width => {
                let v = value.resize(1);
                let m = 1u64 << b;
                Logic { width: cur.width, val: (cur.val & !m) | (v.val << b), x: (cur.x & !m) | (v.x << b) }
            }
            Some(_) => cur,
        };
        if new != cur {
            self.vals[sig] = new;
            true
        } else {
            false
        }
    }

    fn target_bit(&self, lv: &LValue) -> Result<Option<u32>, ()> {
        match &lv.index {
            None => Ok(None),
            Some(e) => match eval(e, &self.vals).known_value() {
                Some(b) if b < 64 => Ok(Some(b as u32)),
                _ => Err(()),
            },
        }
    }

    /// Executes a statement. Blocking writes land immediately; nonblocking
    /// writes are queued. Returns whether any blocking write changed a value.
    fn exec(&mut self, s: &Stmt, nba: &mut Vec<Pending>) -> bool {
        match s {
            Stmt::Empty => false,
            Stmt::Block(v) => v.iter().fold(false, |acc, s| self.exec(s, nba) | acc),
            Stmt::If(c, a, b) => {
                if eval(c, &self.vals).truth() == Some(true) {
                    self.exec(a, nba)
                } else if let Some(b) = b {
                    self.exec(b, nba)
                } else {
                    false
                }
            }
            Stmt::Case { sel, arms, default } => {
                let v = eval(sel, &self.vals);
                for (labels, body) in arms {
                    let hit = labels.iter().any(|l| {
                        let l = eval(l, &self.vals);
                        let w = v.width.max(l.width);
                        v.resize(w) == l.resize(w)
                    });
                    if hit {
                        return self.exec(body, nba);
                    }
                }
                default.as_ref().is_some_and(|d| self.exec(d, nba))
            }
            Stmt::Assign { lv, expr, nonblocking } => {
                let value = eval(expr, &self.vals);
                let Ok(bit) = self.target_bit(lv) else { return false };
                if *nonblocking {
                    nba.push(Pending { sig: lv.sig, bit, value });
                    false
                } else {
                    self.write(lv.sig, bit, value)
                }
            }
        }
    }

    /// Re-evaluates continuous assigns and combinational blocks until stable.
    pub fn settle(&mut self) -> Result<(), InterpError> {
        let limit = 4 * (self.module.assigns.len() + self.module.comb.len()) + 16;
        for _ in 0..limit {
            let mut changed = false;
            for (lv, e) in &self.module.assigns {
                let v = eval(e, &self.vals);
                if let Ok(bit) = self.target_bit(lv) {
                    changed |= self.write(lv.sig, bit, v);
                }
            }
            let mut nba = Vec::new();
            for s in &self.module.comb {
                changed |= self.exec(s, &mut nba);
            }
            for p in nba {
                changed |= self.write(p.sig, p.bit, p.value);
            }
            if !changed {
                return Ok(());
            }
        }
        Err(InterpError::CombLoop)
    }
}

// ---------------------------------------------------------------- testbench runner

/// Timestamped value changes of a set of signals.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Recording {
    pub signals: Vec<(String, u32)>,
    pub changes: Vec<(u64, usize, Logic)>,
}

impl Recording {
    /// VCD text with a 1ns timescale and all signals in one scope.
    pub fn to_vcd(&self, scope: &str) -> String {
        let ids: Vec<String> = (0..self.signals.len()).map(vcd_id).collect();
        let mut out = String::from("$timescale 1ns $end\n");
        let _ = writeln!(out, "$scope module {scope} $end");
        for ((name, w), id) in self.signals.iter().zip(&ids) {
            let _ = writeln!(out, "$var wire {w} {id} {name} $end");
        }
        out += "$upscope $end\n$enddefinitions $end\n";
        let mut current: Option<u64> = None;
        for &(t, s, v) in &self.changes {
            if current != Some(t) {
                let _ = writeln!(out, "#{t}");
                current = Some(t);
            }
            if self.signals[s].1 == 1 {
                let _ = writeln!(out, "{}{}", v.symbol(), ids[s]);
            } else {
                let _ = writeln!(out, "b{} {}", v.bits(), ids[s]);
            }
        }
        out
    }
}

fn vcd_id(mut i: usize) -> String {
    let mut s = String::new();
    loop {
        s.push((b'!' + (i % 94) as u8) as char);
        i /= 94;
        if i == 0 {
            return s;
        }
        i -= 1;
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunOutcome {
    pub checks: usize,
    pub failures: usize,
    pub mismatches: Vec<String>,
    pub recording: Option<Recording>,
}

impl RunOutcome {
    pub fn passed(&self) -> bool {
        self.failures == 0
    }
}

struct Recorder {
    rec: Recording,
    sigs: Vec<usize>,
    last: Vec<Option<Logic>>,
}

impl Recorder {
    fn new(module: &Module, names: &[String]) -> Result<Self, InterpError> {
        let sigs = names
            .iter()
            .map(|n| module.signal(n).ok_or_else(|| InterpError::UnknownSignal(n.clone())))
            .collect::<Result<Vec<_>, _>>()?;
        let signals = names.iter().zip(&sigs).map(|(n, &i)| (n.clone(), module.signals[i].width)).collect();
        Ok(Self { rec: Recording { signals, changes: Vec::new() }, last: vec![None; sigs.len()], sigs })
    }

    fn sample(&mut self, t: u64, sim: &Simulator<'_>) {
        for (k, &i) in self.sigs.iter().enumerate() {
            let v = sim.vals[i];
            if self.last[k] != Some(v) {
                self.rec.changes.push((t, k, v));
                self.last[k] = Some(v);
            }
        }
    }
}

/// Runs a testbench plan against a parsed module with the same timing as
/// the rendered testbench: combinational steps are checked 1ns after each
/// drive, clocked outputs at each falling edge before the next drive.
pub fn run_testbench(module: &Module, tb: &TestbenchSpec, record: bool) -> Result<RunOutcome, InterpError> {
    let mut sim = Simulator::new(module)?;
    let mut recorder = if record { Some(Recorder::new(module, &tb.signal_order())?) } else { None };
    let mut out = RunOutcome { checks: 0, failures: 0, mismatches: Vec::new(), recording: None };
    let checked: Vec<usize> = tb
        .checked
        .iter()
        .map(|p| module.signal(&p.name).ok_or_else(|| InterpError::UnknownSignal(p.name.clone())))
        .collect::<Result<_, _>>()?;
    let drive = |sim: &mut Simulator<'_>, values: &[u64], extra: Option<(&str, u64)>| {
        let mut inputs: Vec<(&str, u64)> = tb.driven.iter().map(|p| p.name.as_str()).zip(values.iter().copied()).collect();
        inputs.extend(extra);
        sim.set_inputs(&inputs)
    };
    let check = |sim: &Simulator<'_>, step: usize, expect: &[Option<u64>], out: &mut RunOutcome| {
        for ((p, &i), e) in tb.checked.iter().zip(&checked).zip(expect) {
            let Some(e) = e else { continue };
            out.checks += 1;
            let got = sim.vals[i];
            if got != Logic::new(p.width as u32, *e) {
                out.failures += 1;
                out.mismatches.push(format!("step={step} {}={} expected={}", p.name, got.bits(), e));
            }
        }
    };
    let mut sample = |t: u64, sim: &Simulator<'_>| {
        if let Some(r) = recorder.as_mut() {
            r.sample(t, sim);
        }
    };
    match &tb.plan {
        StimulusPlan::Combinational { step_ns, steps } => {
            for (k, step) in steps.iter().enumerate() {
                drive(&mut sim, &step.drive, None)?;
                sample(k as u64 * step_ns, &sim);
                check(&sim, k, &step.expect, &mut out);
            }
        }
        StimulusPlan::Sequential { clock, period_ns, cycles } => {
            let half = period_ns / 2;
            for (k, cycle) in cycles.iter().enumerate() {
                let t = k as u64 * period_ns;
                if k == 0 {
                    drive(&mut sim, &cycle.drive, Some((clock.as_str(), 0)))?;
                } else {
                    drive(&mut sim, &cycle.drive, None)?;
                }
                sample(t, &sim);
                sim.set_inputs(&[(clock.as_str(), 1)])?;
                sample(t + half, &sim);
                sim.set_inputs(&[(clock.as_str(), 0)])?;
                sample(t + period_ns, &sim);
                check(&sim, k, &cycle.expect, &mut out);
            }
        }
    }
    out.recording = recorder.map(|r| r.rec);
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    const APPENDIX_MEALY: &str = "module top_module (
        input clk,
        input areset,
        input x,
        output z
);
        parameter A=2'b00, B=2'b01, C=2'b10, D=2'b11;
        reg [1:0] state;
        reg [1:0] next_state;
        always_comb begin
                case(state)
                        A: next_state = x ? C : D;
                        B: next_state = x ? B : C;
                        C: next_state = x ? D : C;
                        D: next_state = x ? B : C;
                        default: next_state = 'x;
                endcase
        end
        always @(posedge clk, posedge areset) begin
                if (areset) state <= A;
                else state <= next_state;
        end
        assign z = ( ( state == A & x ) || ( state == B & ~x ) || ( state == D & ~x ) );
endmodule
";

    #[test]
    fn numbers() {
        assert_eq!(parse_number("4'b0001", 1).unwrap(), Logic::new(4, 1));
        assert_eq!(parse_number("2'd3", 1).unwrap(), Logic::new(2, 3));
        assert_eq!(parse_number("12", 1).unwrap(), Logic::new(32, 12));
        assert_eq!(parse_number("'x", 1).unwrap(), Logic::unknown(64));
        assert_eq!(parse_number("3'b1x0", 1).unwrap(), Logic { width: 3, val: 0b100, x: 0b010 });
        assert_eq!(parse_number("8'hff", 1).unwrap(), Logic::new(8, 255));
        assert!(parse_number("4'q1", 1).is_err());
    }

    #[test]
    fn four_valued_ops() {
        let x = Logic::unknown(1);
        let zero = Logic::bit(false);
        let one = Logic::bit(true);
        let e = |op, a, b| eval(&Expr::Binary(op, Box::new(Expr::Const(a)), Box::new(Expr::Const(b))), &[]);
        assert_eq!(e(BinOp::And, x, zero), zero);
        assert_eq!(e(BinOp::And, x, one), x);
        assert_eq!(e(BinOp::Or, x, one), one);
        assert_eq!(e(BinOp::LogOr, x, one), one);
        assert_eq!(e(BinOp::Eq, x, one), x);
        assert_eq!(e(BinOp::CaseEq, x, x), one);
    }

    #[test]
    fn appendix_mealy_runs() {
        let m = parse_module(APPENDIX_MEALY).unwrap();
        let mut sim = Simulator::new(&m).unwrap();
        assert!(!sim.get("z").unwrap().is_known());
        sim.set_inputs(&[("clk", 0), ("areset", 1), ("x", 0)]).unwrap();
        assert_eq!(sim.get("state").unwrap(), Logic::new(2, 0));
        sim.set_inputs(&[("areset", 0)]).unwrap();
        // A --x=0 (z=0)--> D
        assert_eq!(sim.get("z").unwrap(), Logic::bit(false));
        sim.set_inputs(&[("clk", 1)]).unwrap();
        assert_eq!(sim.get("state").unwrap(), Logic::new(2, 3));
        assert_eq!(sim.get("z").unwrap(), Logic::bit(true));
    }

    #[test]
    fn rejects_missing_endmodule_and_unknown_names() {
        assert!(matches!(parse_module("module m(input a, output b); assign b = a;"), Err(InterpError::Syntax { .. })));
        assert_eq!(
            parse_module("module m(input a, output b); assign b = c; endmodule").unwrap_err(),
            InterpError::UnknownSignal("c".into())
        );
    }

    #[test]
    fn comb_loop_detected() {
        let m = parse_module("module m(input a, output b); wire c; assign c = ~c; assign b = c; endmodule").unwrap();
        // an x loop is stable; only a driven oscillation fails
        assert!(Simulator::new(&m).is_ok());
        let mut sim = Simulator::new(&m).unwrap();
        assert!(sim.set_inputs(&[("a", 1)]).is_ok());
        let m2 = parse_module("module m(input a, output b); wire c; assign c = a ? ~c : 1'b0; assign b = c; endmodule")
            .unwrap();
        let mut sim = Simulator::new(&m2).unwrap();
        sim.set_inputs(&[("a", 0)]).unwrap();
        assert_eq!(sim.set_inputs(&[("a", 1)]), Err(InterpError::CombLoop));
    }

    #[test]
    fn vcd_ids_are_unique() {
        let ids: std::collections::HashSet<String> = (0..500).map(vcd_id).collect();
        assert_eq!(ids.len(), 500);
        assert_eq!(vcd_id(0), "!");
    }
}
