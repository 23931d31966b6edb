use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};

/// Line/column (1-based) of a statement in its source text.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Location {
    pub line: usize,
    pub column: usize,
}

impl fmt::Display for Location {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.line, self.column)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
    Div,
}

impl BinOp {
    pub fn symbol(self) -> &'static str {
        match self {
            BinOp::Add => "+",
            BinOp::Sub => "-",
            BinOp::Mul => "*",
            BinOp::Div => "/",
        }
    }

    fn precedence(self) -> u8 {
        match self {
            BinOp::Add | BinOp::Sub => 1,
            BinOp::Mul | BinOp::Div => 2,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Num(f64),
    Str(String),
    Vec(Box<[Expr; 3]>),
    Var(String),
    Index(Box<Expr>, usize),
    Bin(BinOp, Box<Expr>, Box<Expr>),
    Call(Call),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Call {
    pub callee: String,
    pub args: Vec<Expr>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Stmt {
    Let(String, Expr),
    Call(Call),
    Comment(String),
}

/// A straight-line program. Equality ignores source locations.
#[derive(Debug, Clone, Default)]
pub struct Program {
    pub statements: Vec<Stmt>,
    pub locations: Vec<Location>,
}

impl PartialEq for Program {
    fn eq(&self, other: &Self) -> bool {
        self.statements == other.statements
    }
}

impl Program {
    pub fn new(statements: Vec<Stmt>) -> Self {
        let locations = (1..=statements.len()).map(|line| Location { line, column: 1 }).collect();
        Program { statements, locations }
    }

    pub fn is_empty(&self) -> bool {
        self.statements.is_empty()
    }

    pub fn location(&self, index: usize) -> Location {
        self.locations.get(index).copied().unwrap_or_default()
    }

    /// Number of non-comment statements.
    pub fn len_executable(&self) -> usize {
        self.statements.iter().filter(|s| !matches!(s, Stmt::Comment(_))).count()
    }

    /// Every function name called anywhere in the program.
    pub fn callees(&self) -> BTreeSet<String> {
        let mut out = BTreeSet::new();
        for s in &self.statements {
            match s {
                Stmt::Let(_, e) => collect_callees(e, &mut out),
                Stmt::Call(c) => collect_call(c, &mut out),
                Stmt::Comment(_) => {}
            }
        }
        out
    }

    /// Callees in order of first appearance.
    pub fn callees_in_order(&self) -> Vec<String> {
        let mut seen = Vec::new();
        let mut push = |name: &str| {
            if !seen.iter().any(|s: &String| s == name) {
                seen.push(name.to_string());
            }
        };
        fn walk(e: &Expr, push: &mut dyn FnMut(&str)) {
            match e {
                Expr::Vec(items) => items.iter().for_each(|i| walk(i, push)),
                Expr::Index(b, _) => walk(b, push),
                Expr::Bin(_, l, r) => {
                    walk(l, push);
                    walk(r, push);
                }
                Expr::Call(c) => {
                    push(&c.callee);
                    c.args.iter().for_each(|a| walk(a, push));
                }
                _ => {}
            }
        }
        for s in &self.statements {
            match s {
                Stmt::Let(_, e) => walk(e, &mut push),
                Stmt::Call(c) => {
                    push(&c.callee);
                    c.args.iter().for_each(|a| walk(a, &mut push));
                }
                Stmt::Comment(_) => {}
            }
        }
        seen
    }

    /// Canonical text: one statement per line.
    pub fn to_canonical(&self) -> String {
        self.to_string()
    }
}

fn collect_call(c: &Call, out: &mut BTreeSet<String>) {
    out.insert(c.callee.clone());
    c.args.iter().for_each(|a| collect_callees(a, out));
}

fn collect_callees(e: &Expr, out: &mut BTreeSet<String>) {
    match e {
        Expr::Vec(items) => items.iter().for_each(|i| collect_callees(i, out)),
        Expr::Index(b, _) => collect_callees(b, out),
        Expr::Bin(_, l, r) => {
            collect_callees(l, out);
            collect_callees(r, out);
        }
        Expr::Call(c) => collect_call(c, out),
        Expr::Num(_) | Expr::Str(_) | Expr::Var(_) => {}
    }
}

/// Decimal with at most six fractional digits and at least one.
pub fn format_number(v: f64) -> String {
    let v = if v == 0.0 { 0.0 } else { v };
    let mut s = format!("{v:.6}");
    while s.ends_with('0') && !s.ends_with(".0") {
        s.pop();
    }
    s
}

/// Round a literal to the precision the canonical form can express.
pub fn round_literal(v: f64) -> f64 {
    let r = (v * 1e6).round() / 1e6;
    r + 0.0
}

fn quote(s: &str) -> String {
    let mut out = String::with_capacity(s.len() + 2);
    out.push('\'');
    for c in s.chars() {
        match c {
            '\'' => out.push_str("\\'"),
            '\\' => out.push_str("\\\\"),
            '\n' => out.push_str("\\n"),
            c => out.push(c),
        }
    }
    out.push('\'');
    out
}

impl Expr {
    pub fn num(v: f64) -> Expr {
        Expr::Num(v)
    }

    pub fn str(s: impl Into<String>) -> Expr {
        Expr::Str(s.into())
    }

    pub fn var(s: impl Into<String>) -> Expr {
        Expr::Var(s.into())
    }

    pub fn vec3(a: Expr, b: Expr, c: Expr) -> Expr {
        Expr::Vec(Box::new([a, b, c]))
    }

    pub fn call(callee: impl Into<String>, args: Vec<Expr>) -> Expr {
        Expr::Call(Call { callee: callee.into(), args })
    }

    pub fn index(self, i: usize) -> Expr {
        Expr::Index(Box::new(self), i)
    }

    pub fn bin(op: BinOp, l: Expr, r: Expr) -> Expr {
        Expr::Bin(op, Box::new(l), Box::new(r))
    }

    fn precedence(&self) -> u8 {
        match self {
            Expr::Bin(op, ..) => op.precedence(),
            _ => 3,
        }
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Expr::Num(v) => f.write_str(&format_number(*v)),
            Expr::Str(s) => f.write_str(&quote(s)),
            Expr::Vec(items) => write!(f, "({}, {}, {})", items[0], items[1], items[2]),
            Expr::Var(v) => f.write_str(v),
            Expr::Index(base, i) => {
                if base.precedence() < 3 {
                    write!(f, "({base})[{i}]")
                } else {
                    write!(f, "{base}[{i}]")
                }
            }
            Expr::Bin(op, l, r) => {
                let p = op.precedence();
                if l.precedence() < p {
                    write!(f, "({l})")?;
                } else {
                    write!(f, "{l}")?;
                }
                write!(f, " {} ", op.symbol())?;
                if r.precedence() <= p {
                    write!(f, "({r})")
                } else {
                    write!(f, "{r}")
                }
            }
            Expr::Call(c) => c.fmt(f),
        }
    }
}

impl fmt::Display for Call {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}(", self.callee)?;
        for (i, a) in self.args.iter().enumerate() {
            if i > 0 {
                f.write_str(", ")?;
            }
            write!(f, "{a}")?;
        }
        f.write_str(")")
    }
}

impl fmt::Display for Stmt {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Stmt::Let(name, e) => write!(f, "{name} = {e}"),
            Stmt::Call(c) => c.fmt(f),
            Stmt::Comment(text) if text.is_empty() => f.write_str("#"),
            Stmt::Comment(text) => write!(f, "# {text}"),
        }
    }
}

impl fmt::Display for Program {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, s) in self.statements.iter().enumerate() {
            if i > 0 {
                f.write_str("\n")?;
            }
            write!(f, "{s}")?;
        }
        Ok(())
    }
}
