//! Minimal arithmetic expressions over coordinates, used by JSON metric and
//! domain definitions.
//!
//! Grammar: `+ - * / ^`, unary minus, parentheses, numeric literals, the
//! constants `pi` and `e`, variables `q0 .. q{N-1}` (aliases `x`, `y`, `z`
//! for the first three), and the functions `sin cos tan asin acos atan
//! sinh cosh tanh exp ln log sqrt abs` plus `pow(a, b)`, `min(a, b)`,
//! `max(a, b)`.

use std::fmt;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
enum Node {
    Num(f64),
    Var(usize),
    Neg(Box<Node>),
    Bin(Op, Box<Node>, Box<Node>),
    Call(Func, Vec<Node>),
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Op {
    Add,
    Sub,
    Mul,
    Div,
    Pow,
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Func {
    Sin,
    Cos,
    Tan,
    Asin,
    Acos,
    Atan,
    Sinh,
    Cosh,
    Tanh,
    Exp,
    Ln,
    Sqrt,
    Abs,
    Pow,
    Min,
    Max,
}

impl Func {
    fn parse(name: &str) -> Option<(Func, usize)> {
        Some(match name {
            "sin" => (Func::Sin, 1),
            "cos" => (Func::Cos, 1),
            "tan" => (Func::Tan, 1),
            "asin" => (Func::Asin, 1),
            "acos" => (Func::Acos, 1),
            "atan" => (Func::Atan, 1),
            "sinh" => (Func::Sinh, 1),
            "cosh" => (Func::Cosh, 1),
            "tanh" => (Func::Tanh, 1),
            "exp" => (Func::Exp, 1),
            "ln" | "log" => (Func::Ln, 1),
            "sqrt" => (Func::Sqrt, 1),
            "abs" => (Func::Abs, 1),
            "pow" => (Func::Pow, 2),
            "min" => (Func::Min, 2),
            "max" => (Func::Max, 2),
            _ => return None,
        })
    }
}

/// A parsed expression in `dimension` variables.
#[derive(Clone, PartialEq)]
pub struct Expr {
    source: String,
    root: Node,
    dimension: usize,
}

impl fmt::Debug for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Expr({:?})", self.source)
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Num(f64),
    Ident(String),
    Sym(char),
}

fn lex(src: &str) -> Result<Vec<Tok>> {
    let mut out = Vec::new();
    let chars: Vec<char> = src.chars().collect();
    let mut i = 0;
    while i < chars.len() {
        let ch = chars[i];
        if ch.is_whitespace() {
            i += 1;
        } else if ch.is_ascii_digit() || ch == '.' {
            let start = i;
            while i < chars.len() && (chars[i].is_ascii_digit() || chars[i] == '.') {
                i += 1;
            }
            if i < chars.len() && (chars[i] == 'e' || chars[i] == 'E') {
                let mut j = i + 1;
                if j < chars.len() && (chars[j] == '+' || chars[j] == '-') {
                    j += 1;
                }
                if j < chars.len() && chars[j].is_ascii_digit() {
                    i = j;
                    while i < chars.len() && chars[i].is_ascii_digit() {
                        i += 1;
                    }
                }
            }
            let text: String = chars[start..i].iter().collect();
            let value = text
                .parse::<f64>()
                .map_err(|_| Error::Config(format!("bad number {text:?} in expression {src:?}")))?;
            out.push(Tok::Num(value));
        } else if ch.is_ascii_alphabetic() || ch == '_' {
            let start = i;
            while i < chars.len() && (chars[i].is_ascii_alphanumeric() || chars[i] == '_') {
                i += 1;
            }
            out.push(Tok::Ident(chars[start..i].iter().collect()));
        } else if "+-*/^(),".contains(ch) {
            out.push(Tok::Sym(ch));
            i += 1;
        } else {
            return Err(Error::Config(format!(
                "unexpected {ch:?} in expression {src:?}"
            )));
        }
    }
    Ok(out)
}

struct Parser<'a> {
    toks: Vec<Tok>,
    pos: usize,
    dimension: usize,
    names: Option<&'a [String]>,
    src: &'a str,
}

impl Parser<'_> {
    fn err(&self, msg: &str) -> Error {
        Error::Config(format!("{msg} in expression {:?}", self.src))
    }

    fn peek(&self) -> Option<&Tok> {
        self.toks.get(self.pos)
    }

    fn eat(&mut self, c: char) -> bool {
        if self.peek() == Some(&Tok::Sym(c)) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn expr(&mut self) -> Result<Node> {
        let mut lhs = self.term()?;
        loop {
            let op = if self.eat('+') {
                Op::Add
            } else if self.eat('-') {
                Op::Sub
            } else {
                return Ok(lhs);
            };
            let rhs = self.term()?;
            lhs = Node::Bin(op, Box::new(lhs), Box::new(rhs));
        }
    }

    fn term(&mut self) -> Result<Node> {
        let mut lhs = self.unary()?;
        loop {
            let op = if self.eat('*') {
                Op::Mul
            } else if self.eat('/') {
                Op::Div
            } else {
                return Ok(lhs);
            };
            let rhs = self.unary()?;
            lhs = Node::Bin(op, Box::new(lhs), Box::new(rhs));
        }
    }

    fn unary(&mut self) -> Result<Node> {
        if self.eat('-') {
            return Ok(Node::Neg(Box::new(self.unary()?)));
        }
        if self.eat('+') {
            return self.unary();
        }
        self.power()
    }

    // right associative, binds tighter than unary minus on its left
    fn power(&mut self) -> Result<Node> {
        let base = self.atom()?;
        if self.eat('^') {
            let exp = self.unary()?;
            return Ok(Node::Bin(Op::Pow, Box::new(base), Box::new(exp)));
        }
        Ok(base)
    }

    fn atom(&mut self) -> Result<Node> {
        match self.peek().cloned() {
            Some(Tok::Num(v)) => {
                self.pos += 1;
                Ok(Node::Num(v))
            }
            Some(Tok::Sym('(')) => {
                self.pos += 1;
                let e = self.expr()?;
                if !self.eat(')') {
                    return Err(self.err("missing ')'"));
                }
                Ok(e)
            }
            Some(Tok::Ident(name)) => {
                self.pos += 1;
                if self.eat('(') {
                    let (func, arity) = Func::parse(&name)
                        .ok_or_else(|| self.err(&format!("unknown function {name}")))?;
                    let mut args = vec![self.expr()?];
                    while self.eat(',') {
                        args.push(self.expr()?);
                    }
                    if !self.eat(')') {
                        return Err(self.err("missing ')'"));
                    }
                    if args.len() != arity {
                        return Err(self.err(&format!("{name} takes {arity} argument(s)")));
                    }
                    return Ok(Node::Call(func, args));
                }
                self.variable(&name)
            }
            _ => Err(self.err("unexpected end or symbol")),
        }
    }

    fn variable(&self, name: &str) -> Result<Node> {
        if let Some(names) = self.names {
            return match name {
                "pi" => Ok(Node::Num(std::f64::consts::PI)),
                "e" => Ok(Node::Num(std::f64::consts::E)),
                _ => names
                    .iter()
                    .position(|n| n == name)
                    .map(Node::Var)
                    .ok_or_else(|| self.err(&format!("unknown variable {name}"))),
            };
        }
        let idx = match name {
            "pi" => return Ok(Node::Num(std::f64::consts::PI)),
            "e" => return Ok(Node::Num(std::f64::consts::E)),
            "x" => 0,
            "y" => 1,
            "z" => 2,
            _ => name
                .strip_prefix('q')
                .and_then(|rest| rest.parse::<usize>().ok())
                .ok_or_else(|| self.err(&format!("unknown variable {name}")))?,
        };
        if idx >= self.dimension {
            return Err(self.err(&format!(
                "variable {name} exceeds dimension {}",
                self.dimension
            )));
        }
        Ok(Node::Var(idx))
    }
}

impl Expr {
    pub fn parse(src: &str, dimension: usize) -> Result<Self> {
        Self::parse_impl(src, dimension, None)
    }

    /// Parses with an explicit variable list; `eval` takes values in that
    /// order.
    pub fn parse_with_names(src: &str, names: &[String]) -> Result<Self> {
        Self::parse_impl(src, names.len(), Some(names))
    }

    fn parse_impl(src: &str, dimension: usize, names: Option<&[String]>) -> Result<Self> {
        let toks = lex(src)?;
        let mut p = Parser {
            toks,
            pos: 0,
            dimension,
            names,
            src,
        };
        let root = p.expr()?;
        if p.pos != p.toks.len() {
            return Err(p.err("trailing input"));
        }
        Ok(Self {
            source: src.to_string(),
            root,
            dimension,
        })
    }

    pub fn constant(value: f64, dimension: usize) -> Self {
        Self {
            source: value.to_string(),
            root: Node::Num(value),
            dimension,
        }
    }

    pub fn source(&self) -> &str {
        &self.source
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn is_constant(&self) -> bool {
        matches!(self.root, Node::Num(_))
    }

    pub fn eval(&self, q: &[f64]) -> f64 {
        eval(&self.root, q)
    }
}

fn eval(node: &Node, q: &[f64]) -> f64 {
    match node {
        Node::Num(v) => *v,
        Node::Var(i) => q[*i],
        Node::Neg(a) => -eval(a, q),
        Node::Bin(op, a, b) => {
            let (a, b) = (eval(a, q), eval(b, q));
            match op {
                Op::Add => a + b,
                Op::Sub => a - b,
                Op::Mul => a * b,
                Op::Div => a / b,
                Op::Pow => pow(a, b),
            }
        }
        Node::Call(f, args) => {
            let a = eval(&args[0], q);
            match f {
                Func::Sin => a.sin(),
                Func::Cos => a.cos(),
                Func::Tan => a.tan(),
                Func::Asin => a.asin(),
                Func::Acos => a.acos(),
                Func::Atan => a.atan(),
                Func::Sinh => a.sinh(),
                Func::Cosh => a.cosh(),
                Func::Tanh => a.tanh(),
                Func::Exp => a.exp(),
                Func::Ln => a.ln(),
                Func::Sqrt => a.sqrt(),
                Func::Abs => a.abs(),
                Func::Pow => pow(a, eval(&args[1], q)),
                Func::Min => a.min(eval(&args[1], q)),
                Func::Max => a.max(eval(&args[1], q)),
            }
        }
    }
}

fn pow(a: f64, b: f64) -> f64 {
    if b.fract() == 0.0 && b.abs() <= 64.0 {
        a.powi(b as i32)
    } else {
        a.powf(b)
    }
}
