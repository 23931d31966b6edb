//! Tokenizer and recursive-descent parser. The grammar is published in
//! `docs/skill_language.ebnf`.

use super::ast::{round_literal, BinOp, Call, Expr, Location, Program, Stmt};
use super::{InterpError, InterpErrorKind, BOUNDS};

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Num(f64),
    Int(usize),
    Str(String),
    Ident(String),
    Comment(String),
    Op(BinOp),
    LParen,
    RParen,
    LBracket,
    RBracket,
    Comma,
    Assign,
    Sep,
    Eof,
}

#[derive(Debug, Clone)]
struct Token {
    tok: Tok,
    loc: Location,
}

fn lex(text: &str) -> Result<Vec<Token>, InterpError> {
    let chars: Vec<char> = text.chars().collect();
    let mut out = Vec::new();
    let (mut i, mut line, mut col) = (0usize, 1usize, 1usize);
    // parentheses/brackets open; newlines inside them are whitespace
    let mut depth = 0i32;

    while i < chars.len() {
        let c = chars[i];
        let loc = Location { line, column: col };
        let advance = |i: &mut usize, col: &mut usize, n: usize| {
            *i += n;
            *col += n;
        };
        match c {
            '\n' => {
                if depth == 0 {
                    out.push(Token { tok: Tok::Sep, loc });
                }
                i += 1;
                line += 1;
                col = 1;
            }
            ' ' | '\t' | '\r' => advance(&mut i, &mut col, 1),
            ';' => {
                out.push(Token { tok: Tok::Sep, loc });
                advance(&mut i, &mut col, 1);
            }
            '#' => {
                let start = i + 1;
                let mut j = start;
                while j < chars.len() && chars[j] != '\n' {
                    j += 1;
                }
                let body: String = chars[start..j].iter().collect();
                out.push(Token { tok: Tok::Comment(body.trim().to_string()), loc });
                col += j - i;
                i = j;
            }
            '(' | '[' => {
                depth += 1;
                out.push(Token { tok: if c == '(' { Tok::LParen } else { Tok::LBracket }, loc });
                advance(&mut i, &mut col, 1);
            }
            ')' | ']' => {
                depth -= 1;
                out.push(Token { tok: if c == ')' { Tok::RParen } else { Tok::RBracket }, loc });
                advance(&mut i, &mut col, 1);
            }
            ',' => {
                out.push(Token { tok: Tok::Comma, loc });
                advance(&mut i, &mut col, 1);
            }
            '=' => {
                out.push(Token { tok: Tok::Assign, loc });
                advance(&mut i, &mut col, 1);
            }
            '+' | '-' | '*' | '/' => {
                let op = match c {
                    '+' => BinOp::Add,
                    '-' => BinOp::Sub,
                    '*' => BinOp::Mul,
                    _ => BinOp::Div,
                };
                out.push(Token { tok: Tok::Op(op), loc });
                advance(&mut i, &mut col, 1);
            }
            '\'' | '"' => {
                let quote = c;
                let mut s = String::new();
                let mut j = i + 1;
                loop {
                    match chars.get(j) {
                        None | Some('\n') => return Err(parse_err(loc, "unterminated string literal")),
                        Some(&q) if q == quote => break,
                        Some('\\') => {
                            match chars.get(j + 1) {
                                Some('n') => s.push('\n'),
                                Some(&e @ ('\\' | '\'' | '"')) => s.push(e),
                                _ => return Err(parse_err(loc, "invalid escape in string literal")),
                            }
                            j += 2;
                        }
                        Some(&ch) => {
                            s.push(ch);
                            j += 1;
                        }
                    }
                }
                col += j + 1 - i;
                i = j + 1;
                out.push(Token { tok: Tok::Str(s), loc });
            }
            c if c.is_ascii_digit() || (c == '.' && chars.get(i + 1).is_some_and(|d| d.is_ascii_digit())) => {
                let mut j = i;
                while j < chars.len() && chars[j].is_ascii_digit() {
                    j += 1;
                }
                let mut is_int = true;
                if j < chars.len() && chars[j] == '.' {
                    is_int = false;
                    j += 1;
                    while j < chars.len() && chars[j].is_ascii_digit() {
                        j += 1;
                    }
                }
                if j < chars.len() && (chars[j] == 'e' || chars[j] == 'E') {
                    let mut k = j + 1;
                    if k < chars.len() && (chars[k] == '+' || chars[k] == '-') {
                        k += 1;
                    }
                    if k < chars.len() && chars[k].is_ascii_digit() {
                        is_int = false;
                        j = k;
                        while j < chars.len() && chars[j].is_ascii_digit() {
                            j += 1;
                        }
                    }
                }
                let text: String = chars[i..j].iter().collect();
                let tok = if is_int {
                    match text.parse::<usize>() {
                        Ok(n) => Tok::Int(n),
                        Err(_) => Tok::Num(text.parse::<f64>().map_err(|_| parse_err(loc, "bad number"))?),
                    }
                } else {
                    Tok::Num(text.parse::<f64>().map_err(|_| parse_err(loc, "bad number"))?)
                };
                out.push(Token { tok, loc });
                col += j - i;
                i = j;
            }
            c if c.is_alphabetic() || c == '_' => {
                let mut j = i;
                while j < chars.len() && (chars[j].is_alphanumeric() || chars[j] == '_') {
                    j += 1;
                }
                let ident: String = chars[i..j].iter().collect();
                out.push(Token { tok: Tok::Ident(ident), loc });
                col += j - i;
                i = j;
            }
            other => return Err(parse_err(loc, &format!("unexpected character '{other}'"))),
        }
    }
    out.push(Token { tok: Tok::Eof, loc: Location { line, column: col } });
    Ok(out)
}

fn parse_err(loc: Location, msg: &str) -> InterpError {
    InterpError { kind: InterpErrorKind::Parse, location: loc, message: msg.to_string() }
}

struct Parser {
    toks: Vec<Token>,
    pos: usize,
}

impl Parser {
    fn peek(&self) -> &Tok {
        &self.toks[self.pos].tok
    }

    fn peek_at(&self, n: usize) -> &Tok {
        let i = (self.pos + n).min(self.toks.len() - 1);
        &self.toks[i].tok
    }

    fn loc(&self) -> Location {
        self.toks[self.pos].loc
    }

    fn bump(&mut self) -> Tok {
        let t = self.toks[self.pos].tok.clone();
        if self.pos < self.toks.len() - 1 {
            self.pos += 1;
        }
        t
    }

    fn describe(tok: &Tok) -> String {
        match tok {
            Tok::Num(v) => format!("number {v}"),
            Tok::Int(v) => format!("number {v}"),
            Tok::Str(_) => "string literal".into(),
            Tok::Ident(s) => format!("'{s}'"),
            Tok::Comment(_) => "comment".into(),
            Tok::Op(op) => format!("'{}'", op.symbol()),
            Tok::LParen => "'('".into(),
            Tok::RParen => "')'".into(),
            Tok::LBracket => "'['".into(),
            Tok::RBracket => "']'".into(),
            Tok::Comma => "','".into(),
            Tok::Assign => "'='".into(),
            Tok::Sep => "end of statement".into(),
            Tok::Eof => "end of input".into(),
        }
    }

    fn expect(&mut self, want: Tok, what: &str) -> Result<(), InterpError> {
        if *self.peek() == want {
            self.bump();
            Ok(())
        } else {
            Err(parse_err(self.loc(), &format!("expected {what}, found {}", Self::describe(self.peek()))))
        }
    }

    fn program(&mut self) -> Result<Program, InterpError> {
        let mut statements = Vec::new();
        let mut locations = Vec::new();
        loop {
            while *self.peek() == Tok::Sep {
                self.bump();
            }
            if *self.peek() == Tok::Eof {
                break;
            }
            let loc = self.loc();
            let stmt = self.statement()?;
            statements.push(stmt);
            locations.push(loc);
            match self.peek() {
                Tok::Sep | Tok::Eof => {}
                // a trailing comment on the same line becomes its own statement
                Tok::Comment(_) => {}
                other => {
                    return Err(parse_err(
                        self.loc(),
                        &format!("expected end of statement, found {}", Self::describe(other)),
                    ))
                }
            }
        }
        Ok(Program { statements, locations })
    }

    fn statement(&mut self) -> Result<Stmt, InterpError> {
        let loc = self.loc();
        match self.peek().clone() {
            Tok::Comment(text) => {
                self.bump();
                Ok(Stmt::Comment(text))
            }
            Tok::Ident(name) if *self.peek_at(1) == Tok::Assign => {
                if name == BOUNDS {
                    return Err(parse_err(loc, "BOUNDS is a constant and cannot be assigned"));
                }
                self.bump();
                self.bump();
                Ok(Stmt::Let(name, self.expr()?))
            }
            Tok::Ident(_) if *self.peek_at(1) == Tok::LParen => match self.postfix()? {
                Expr::Call(c) => Ok(Stmt::Call(c)),
                _ => Err(parse_err(loc, "a statement must be an assignment or a call")),
            },
            other => Err(parse_err(
                loc,
                &format!("a statement must be an assignment or a call, found {}", Self::describe(&other)),
            )),
        }
    }

    fn expr(&mut self) -> Result<Expr, InterpError> {
        let mut lhs = self.term()?;
        while let Tok::Op(op @ (BinOp::Add | BinOp::Sub)) = *self.peek() {
            self.bump();
            let rhs = self.term()?;
            lhs = Expr::bin(op, lhs, rhs);
        }
        Ok(lhs)
    }

    fn term(&mut self) -> Result<Expr, InterpError> {
        let mut lhs = self.unary()?;
        while let Tok::Op(op @ (BinOp::Mul | BinOp::Div)) = *self.peek() {
            self.bump();
            let rhs = self.unary()?;
            lhs = Expr::bin(op, lhs, rhs);
        }
        Ok(lhs)
    }

    fn unary(&mut self) -> Result<Expr, InterpError> {
        if *self.peek() == Tok::Op(BinOp::Sub) && !matches!(self.peek_at(1), Tok::Num(_) | Tok::Int(_)) {
            self.bump();
            let inner = self.unary()?;
            return Ok(Expr::bin(BinOp::Sub, Expr::Num(0.0), inner));
        }
        self.postfix()
    }

    fn postfix(&mut self) -> Result<Expr, InterpError> {
        let mut e = self.primary()?;
        while *self.peek() == Tok::LBracket {
            let loc = self.loc();
            self.bump();
            let idx = match self.bump() {
                Tok::Int(n) => n,
                other => {
                    return Err(parse_err(loc, &format!("index must be an integer literal, found {}", Self::describe(&other))))
                }
            };
            if idx > 2 {
                return Err(parse_err(loc, &format!("index {idx} is outside 0..=2")));
            }
            self.expect(Tok::RBracket, "']'")?;
            e = e.index(idx);
        }
        Ok(e)
    }

    fn primary(&mut self) -> Result<Expr, InterpError> {
        let loc = self.loc();
        match self.bump() {
            Tok::Op(BinOp::Sub) => match self.bump() {
                Tok::Num(v) => Ok(Expr::Num(round_literal(-v))),
                Tok::Int(v) => Ok(Expr::Num(round_literal(-(v as f64)))),
                _ => unreachable!("unary handles the other cases"),
            },
            Tok::Num(v) => Ok(Expr::Num(round_literal(v))),
            Tok::Int(v) => Ok(Expr::Num(round_literal(v as f64))),
            Tok::Str(s) => Ok(Expr::Str(s)),
            Tok::Ident(name) => {
                if *self.peek() == Tok::LParen {
                    self.bump();
                    let args = self.list(Tok::RParen, "')'")?;
                    Ok(Expr::Call(Call { callee: name, args }))
                } else {
                    Ok(Expr::Var(name))
                }
            }
            open @ (Tok::LParen | Tok::LBracket) => {
                let (close, what) = if open == Tok::LParen { (Tok::RParen, "')'") } else { (Tok::RBracket, "']'") };
                let items = self.list(close, what)?;
                match (open, items.len()) {
                    (Tok::LParen, 1) => Ok(items.into_iter().next().unwrap()),
                    (_, 3) => {
                        let mut it = items.into_iter();
                        Ok(Expr::vec3(it.next().unwrap(), it.next().unwrap(), it.next().unwrap()))
                    }
                    (_, n) => Err(parse_err(loc, &format!("vector literal needs exactly 3 components, found {n}"))),
                }
            }
            other => Err(parse_err(loc, &format!("expected an expression, found {}", Self::describe(&other)))),
        }
    }

    fn list(&mut self, close: Tok, what: &str) -> Result<Vec<Expr>, InterpError> {
        let mut items = Vec::new();
        if *self.peek() == close {
            self.bump();
            return Ok(items);
        }
        loop {
            items.push(self.expr()?);
            if *self.peek() == Tok::Comma {
                self.bump();
                // tolerate a trailing comma
                if *self.peek() == close {
                    self.bump();
                    return Ok(items);
                }
                continue;
            }
            self.expect(close, what)?;
            return Ok(items);
        }
    }
}

/// Parse skill-language text. Callee and variable names are not resolved here.
pub fn parse(text: &str) -> Result<Program, InterpError> {
    let toks = lex(text)?;
    Parser { toks, pos: 0 }.program()
}

/// Parse a single expression (used for skill example calls and verifier snippets).
pub fn parse_expr(text: &str) -> Result<Expr, InterpError> {
    let toks: Vec<Token> = lex(text)?.into_iter().filter(|t| t.tok != Tok::Sep).collect();
    let mut p = Parser { toks, pos: 0 };
    let e = p.expr()?;
    if *p.peek() != Tok::Eof {
        return Err(parse_err(p.loc(), &format!("unexpected {} after expression", Parser::describe(p.peek()))));
    }
    Ok(e)
}
