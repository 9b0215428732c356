//! Text grammar for variable declarations and constraints.
//!
//! ```text
//! var a : bool
//! var n : int 0..4
//! var s : int {1, 3, 5}
//! var v1 : real -5..5
//! sat hard (a | !b) & (c)
//! fd soft weight=2 2*n - m <= 3
//! fd hard n in {1, 2, 4}
//! lr hard 1.5*v1 - 2*v2 <= 3.0
//! nl soft weight=2.0 sin(v1)*v2 <= 1.0
//! nl hard dist_union(v1, v2; [0,1]x[0,1], [2,3]x[4,5]) <= 0
//! ```
//!
//! Linear bodies accept any affine expression on either side of `<=` or
//! `>=`; nonlinear bodies accept any expression on either side.

use std::fmt;

use thiserror::Error;

use super::{
    BinOp, Constraint, ConstraintClass, ConstraintError, ConstraintSystem, Expr, Func, IntLinear, Literal, Payload,
    RealLinear, Severity,
};
use crate::geometry::IntervalBox;
use crate::space::{IntDomain, VarKind, Variable, VariableSpace};

#[derive(Debug, Clone, PartialEq, Error)]
#[error("column {column}: {kind}")]
pub struct ParseError {
    /// 1-based character column within the line.
    pub column: usize,
    pub kind: ParseErrorKind,
}

#[derive(Debug, Clone, PartialEq)]
pub enum ParseErrorKind {
    Syntax {
        expected: String,
        found: String,
    },
    UnknownVariable(String),
    UnknownFunction(String),
    KindMismatch {
        name: String,
        class: ConstraintClass,
        expected: &'static str,
        found: &'static str,
    },
    NonLinear,
    NonIntegral(f64),
    WeightOnHard,
    InvalidWeight(f64),
    InvalidDomain(String),
    DuplicateVariable(String),
    Arity {
        func: &'static str,
        expected: String,
        got: usize,
    },
    DimensionMismatch {
        expected: usize,
        got: usize,
    },
    DeclarationNotAllowed,
}

impl fmt::Display for ParseErrorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ParseErrorKind::Syntax { expected, found } => {
                write!(f, "expected {expected}, found {found}")
            }
            ParseErrorKind::UnknownVariable(n) => write!(f, "unknown variable `{n}`"),
            ParseErrorKind::UnknownFunction(n) => write!(f, "unknown function `{n}`"),
            ParseErrorKind::KindMismatch {
                name,
                class,
                expected,
                found,
            } => write!(
                f,
                "variable `{name}` is {found}, but {class:?} constraints need {expected}"
            ),
            ParseErrorKind::NonLinear => write!(f, "expression is not linear"),
            ParseErrorKind::NonIntegral(x) => write!(f, "finite-domain coefficient {x} is not an integer"),
            ParseErrorKind::WeightOnHard => write!(f, "hard constraints do not carry a weight"),
            ParseErrorKind::InvalidWeight(w) => write!(f, "weight must be positive, got {w}"),
            ParseErrorKind::InvalidDomain(m) => write!(f, "invalid domain: {m}"),
            ParseErrorKind::DuplicateVariable(n) => write!(f, "variable `{n}` declared twice"),
            ParseErrorKind::Arity { func, expected, got } => {
                write!(f, "`{func}` takes {expected} arguments, got {got}")
            }
            ParseErrorKind::DimensionMismatch { expected, got } => {
                write!(f, "box has {got} dimensions, point has {expected}")
            }
            ParseErrorKind::DeclarationNotAllowed => {
                write!(f, "variable declarations are not allowed here")
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Ident(String),
    Num(f64),
    LParen,
    RParen,
    LBrace,
    RBrace,
    LBracket,
    RBracket,
    Comma,
    Semi,
    Colon,
    Pipe,
    Amp,
    Bang,
    Plus,
    Minus,
    Star,
    Slash,
    Caret,
    Le,
    Ge,
    Eq,
    DotDot,
    End,
}

impl fmt::Display for Tok {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Tok::Ident(s) => write!(f, "`{s}`"),
            Tok::Num(x) => write!(f, "number {x}"),
            Tok::End => write!(f, "end of line"),
            other => {
                let s = match other {
                    Tok::LParen => "(",
                    Tok::RParen => ")",
                    Tok::LBrace => "{",
                    Tok::RBrace => "}",
                    Tok::LBracket => "[",
                    Tok::RBracket => "]",
                    Tok::Comma => ",",
                    Tok::Semi => ";",
                    Tok::Colon => ":",
                    Tok::Pipe => "|",
                    Tok::Amp => "&",
                    Tok::Bang => "!",
                    Tok::Plus => "+",
                    Tok::Minus => "-",
                    Tok::Star => "*",
                    Tok::Slash => "/",
                    Tok::Caret => "^",
                    Tok::Le => "<=",
                    Tok::Ge => ">=",
                    Tok::Eq => "=",
                    Tok::DotDot => "..",
                    _ => unreachable!(),
                };
                write!(f, "`{s}`")
            }
        }
    }
}

#[derive(Debug, Clone)]
struct Token {
    tok: Tok,
    column: usize,
}

fn lex(line: &str) -> Result<Vec<Token>, ParseError> {
    let chars: Vec<char> = line.chars().collect();
    let mut out = Vec::new();
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        let column = i + 1;
        if c.is_whitespace() {
            i += 1;
            continue;
        }
        if c.is_ascii_alphabetic() || c == '_' {
            let start = i;
            while i < chars.len() && (chars[i].is_ascii_alphanumeric() || chars[i] == '_') {
                i += 1;
            }
            out.push(Token {
                tok: Tok::Ident(chars[start..i].iter().collect()),
                column,
            });
            continue;
        }
        if c.is_ascii_digit() || (c == '.' && chars.get(i + 1).is_some_and(|d| d.is_ascii_digit())) {
            let start = i;
            while i < chars.len() && chars[i].is_ascii_digit() {
                i += 1;
            }
            if i < chars.len() && chars[i] == '.' && chars.get(i + 1).is_some_and(|d| d.is_ascii_digit()) {
                i += 1;
                while i < chars.len() && chars[i].is_ascii_digit() {
                    i += 1;
                }
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
            let value = text.parse::<f64>().map_err(|_| ParseError {
                column,
                kind: ParseErrorKind::Syntax {
                    expected: "number".into(),
                    found: format!("`{text}`"),
                },
            })?;
            out.push(Token {
                tok: Tok::Num(value),
                column,
            });
            continue;
        }
        let two = |next: char| chars.get(i + 1) == Some(&next);
        let (tok, width) = match c {
            '(' => (Tok::LParen, 1),
            ')' => (Tok::RParen, 1),
            '{' => (Tok::LBrace, 1),
            '}' => (Tok::RBrace, 1),
            '[' => (Tok::LBracket, 1),
            ']' => (Tok::RBracket, 1),
            ',' => (Tok::Comma, 1),
            ';' => (Tok::Semi, 1),
            ':' => (Tok::Colon, 1),
            '|' => (Tok::Pipe, 1),
            '&' => (Tok::Amp, 1),
            '!' => (Tok::Bang, 1),
            '+' => (Tok::Plus, 1),
            '-' => (Tok::Minus, 1),
            '*' => (Tok::Star, 1),
            '/' => (Tok::Slash, 1),
            '^' => (Tok::Caret, 1),
            '=' => (Tok::Eq, 1),
            '<' if two('=') => (Tok::Le, 2),
            '>' if two('=') => (Tok::Ge, 2),
            '.' if two('.') => (Tok::DotDot, 2),
            other => {
                return Err(ParseError {
                    column,
                    kind: ParseErrorKind::Syntax {
                        expected: "a token".into(),
                        found: format!("`{other}`"),
                    },
                })
            }
        };
        out.push(Token { tok, column });
        i += width;
    }
    out.push(Token {
        tok: Tok::End,
        column: chars.len() + 1,
    });
    Ok(out)
}

/// Returns the expected kind name when `kind` is not allowed in `class`.
pub(super) fn expected_kind(class: ConstraintClass, kind: &VarKind) -> Option<&'static str> {
    let ok = match class {
        ConstraintClass::Sat => matches!(kind, VarKind::Bool),
        ConstraintClass::Fd => matches!(kind, VarKind::Int { .. }),
        ConstraintClass::Lr => matches!(kind, VarKind::Real { .. }),
        ConstraintClass::Nl => !matches!(kind, VarKind::Bool),
    };
    if ok {
        None
    } else {
        Some(match class {
            ConstraintClass::Sat => "bool",
            ConstraintClass::Fd => "int",
            ConstraintClass::Lr => "real",
            ConstraintClass::Nl => "int or real",
        })
    }
}

struct Parser<'a> {
    toks: Vec<Token>,
    pos: usize,
    space: &'a VariableSpace,
    class: ConstraintClass,
}

type PResult<T> = Result<T, ParseError>;

impl<'a> Parser<'a> {
    fn new(line: &str, space: &'a VariableSpace) -> PResult<Self> {
        Ok(Parser {
            toks: lex(line)?,
            pos: 0,
            space,
            class: ConstraintClass::Nl,
        })
    }

    fn peek(&self) -> &Tok {
        &self.toks[self.pos].tok
    }

    fn peek_at(&self, offset: usize) -> &Tok {
        let i = (self.pos + offset).min(self.toks.len() - 1);
        &self.toks[i].tok
    }

    fn column(&self) -> usize {
        self.toks[self.pos].column
    }

    fn bump(&mut self) -> Tok {
        let t = self.toks[self.pos].tok.clone();
        if self.pos < self.toks.len() - 1 {
            self.pos += 1;
        }
        t
    }

    fn error(&self, kind: ParseErrorKind) -> ParseError {
        ParseError {
            column: self.column(),
            kind,
        }
    }

    fn unexpected(&self, expected: &str) -> ParseError {
        self.error(ParseErrorKind::Syntax {
            expected: expected.into(),
            found: self.peek().to_string(),
        })
    }

    fn expect(&mut self, tok: Tok, what: &str) -> PResult<()> {
        if *self.peek() == tok {
            self.bump();
            Ok(())
        } else {
            Err(self.unexpected(what))
        }
    }

    fn ident(&mut self, what: &str) -> PResult<String> {
        match self.peek().clone() {
            Tok::Ident(s) => {
                self.bump();
                Ok(s)
            }
            _ => Err(self.unexpected(what)),
        }
    }

    fn keyword(&mut self, word: &str) -> PResult<()> {
        match self.peek() {
            Tok::Ident(s) if s == word => {
                self.bump();
                Ok(())
            }
            _ => Err(self.unexpected(&format!("`{word}`"))),
        }
    }

    fn signed_number(&mut self) -> PResult<f64> {
        let neg = if *self.peek() == Tok::Minus {
            self.bump();
            true
        } else {
            false
        };
        match self.peek().clone() {
            Tok::Num(x) => {
                self.bump();
                Ok(if neg { -x } else { x })
            }
            _ => Err(self.unexpected("number")),
        }
    }

    fn signed_int(&mut self) -> PResult<i64> {
        let col = self.column();
        let x = self.signed_number()?;
        if x.fract() != 0.0 || x.abs() > i64::MAX as f64 / 2.0 {
            return Err(ParseError {
                column: col,
                kind: ParseErrorKind::Syntax {
                    expected: "integer".into(),
                    found: format!("number {x}"),
                },
            });
        }
        Ok(x as i64)
    }

    /// Resolves a variable name and checks its kind against the current class.
    fn variable(&mut self, name: &str, column: usize) -> PResult<usize> {
        let idx = self.space.index_of(name).ok_or(ParseError {
            column,
            kind: ParseErrorKind::UnknownVariable(name.to_string()),
        })?;
        let kind = &self.space.var(idx).kind;
        if let Some(expected) = expected_kind(self.class, kind) {
            return Err(ParseError {
                column,
                kind: ParseErrorKind::KindMismatch {
                    name: name.to_string(),
                    class: self.class,
                    expected,
                    found: kind.name(),
                },
            });
        }
        Ok(idx)
    }

    fn constraint(&mut self) -> PResult<Constraint> {
        let class = match self.ident("constraint class (sat, fd, lr, nl)")?.as_str() {
            "sat" => ConstraintClass::Sat,
            "fd" => ConstraintClass::Fd,
            "lr" => ConstraintClass::Lr,
            "nl" => ConstraintClass::Nl,
            other => {
                self.pos -= 1;
                return Err(self.error(ParseErrorKind::Syntax {
                    expected: "constraint class (sat, fd, lr, nl)".into(),
                    found: format!("`{other}`"),
                }));
            }
        };
        self.class = class;
        let hard = match self.ident("severity (hard, soft)")?.as_str() {
            "hard" => true,
            "soft" => false,
            other => {
                self.pos -= 1;
                return Err(self.error(ParseErrorKind::Syntax {
                    expected: "severity (hard, soft)".into(),
                    found: format!("`{other}`"),
                }));
            }
        };
        let mut weight = 1.0;
        if matches!(self.peek(), Tok::Ident(s) if s == "weight") && *self.peek_at(1) == Tok::Eq {
            if hard {
                return Err(self.error(ParseErrorKind::WeightOnHard));
            }
            self.bump();
            self.bump();
            let col = self.column();
            weight = self.signed_number()?;
            if !(weight.is_finite() && weight > 0.0) {
                return Err(ParseError {
                    column: col,
                    kind: ParseErrorKind::InvalidWeight(weight),
                });
            }
        }
        let payload = match class {
            ConstraintClass::Sat => self.sat_body()?,
            ConstraintClass::Fd => self.fd_body()?,
            ConstraintClass::Lr => self.lr_body()?,
            ConstraintClass::Nl => Payload::Nl(self.comparison()?.0),
        };
        if *self.peek() != Tok::End {
            return Err(self.unexpected("end of line"));
        }
        Ok(Constraint {
            severity: if hard {
                Severity::Hard
            } else {
                Severity::Soft { weight }
            },
            payload,
        })
    }

    fn sat_body(&mut self) -> PResult<Payload> {
        let mut clauses = vec![self.clause()?];
        while *self.peek() == Tok::Amp {
            self.bump();
            clauses.push(self.clause()?);
        }
        Ok(Payload::Sat(clauses))
    }

    fn clause(&mut self) -> PResult<Vec<Literal>> {
        let parenthesized = *self.peek() == Tok::LParen;
        if parenthesized {
            self.bump();
        }
        let mut lits = vec![self.literal()?];
        while *self.peek() == Tok::Pipe {
            self.bump();
            lits.push(self.literal()?);
        }
        if parenthesized {
            self.expect(Tok::RParen, "`)` or `|`")?;
        }
        Ok(lits)
    }

    fn literal(&mut self) -> PResult<Literal> {
        let mut negated = false;
        while *self.peek() == Tok::Bang {
            self.bump();
            negated = !negated;
        }
        let col = self.column();
        let name = self.ident("boolean variable")?;
        Ok(Literal {
            var: self.variable(&name, col)?,
            negated,
        })
    }

    fn fd_body(&mut self) -> PResult<Payload> {
        if matches!(self.peek(), Tok::Ident(_)) && matches!(self.peek_at(1), Tok::Ident(s) if s == "in") {
            let col = self.column();
            let name = self.ident("variable")?;
            let var = self.variable(&name, col)?;
            self.bump();
            self.expect(Tok::LBrace, "`{`")?;
            let mut set = vec![self.signed_int()?];
            while *self.peek() == Tok::Comma {
                self.bump();
                set.push(self.signed_int()?);
            }
            self.expect(Tok::RBrace, "`}` or `,`")?;
            set.sort_unstable();
            set.dedup();
            return Ok(Payload::FdMember { var, set });
        }
        let col = self.column();
        let (coeffs, constant) = self.linear_comparison(col)?;
        let mut terms = Vec::new();
        let mut span = 0.0;
        for (i, &a) in coeffs.iter().enumerate() {
            if a == 0.0 {
                continue;
            }
            if a.fract() != 0.0 {
                return Err(ParseError {
                    column: col,
                    kind: ParseErrorKind::NonIntegral(a),
                });
            }
            if let VarKind::Int { domain } = &self.space.var(i).kind {
                span += a.abs() * (domain.max() - domain.min()) as f64;
            }
            terms.push((a as i64, i));
        }
        if constant.fract() != 0.0 {
            return Err(ParseError {
                column: col,
                kind: ParseErrorKind::NonIntegral(constant),
            });
        }
        Ok(Payload::FdLinear(IntLinear {
            terms,
            bound: -constant as i64,
            span: span.max(1.0),
        }))
    }

    fn lr_body(&mut self) -> PResult<Payload> {
        let col = self.column();
        let (coeffs, constant) = self.linear_comparison(col)?;
        let terms = coeffs
            .into_iter()
            .enumerate()
            .filter(|(_, a)| *a != 0.0)
            .map(|(i, a)| (a, i))
            .collect();
        Ok(Payload::Lr(RealLinear {
            terms,
            bound: -constant,
        }))
    }

    /// `lhs cmp rhs` as `sum(c_i v_i) + k <= 0`.
    fn linear_comparison(&mut self, column: usize) -> PResult<(Vec<f64>, f64)> {
        let (expr, _) = self.comparison()?;
        expr.linearize(self.space.len()).ok_or(ParseError {
            column,
            kind: ParseErrorKind::NonLinear,
        })
    }

    /// Parses `lhs <= rhs` or `lhs >= rhs` into a single `e <= 0` expression.
    fn comparison(&mut self) -> PResult<(Expr, bool)> {
        let lhs = self.expr()?;
        let le = match self.peek() {
            Tok::Le => true,
            Tok::Ge => false,
            _ => return Err(self.unexpected("`<=` or `>=`")),
        };
        self.bump();
        let rhs = self.expr()?;
        let (big, small) = if le { (lhs, rhs) } else { (rhs, lhs) };
        let e = match small {
            Expr::Const(0.0) => big,
            other => Expr::binary(BinOp::Sub, big, other),
        };
        Ok((e, le))
    }

    fn expr(&mut self) -> PResult<Expr> {
        let mut lhs = self.term()?;
        loop {
            let op = match self.peek() {
                Tok::Plus => BinOp::Add,
                Tok::Minus => BinOp::Sub,
                _ => return Ok(lhs),
            };
            self.bump();
            let rhs = self.term()?;
            lhs = Expr::binary(op, lhs, rhs);
        }
    }

    fn term(&mut self) -> PResult<Expr> {
        let mut lhs = self.unary()?;
        loop {
            let op = match self.peek() {
                Tok::Star => BinOp::Mul,
                Tok::Slash => BinOp::Div,
                _ => return Ok(lhs),
            };
            self.bump();
            let rhs = self.unary()?;
            lhs = Expr::binary(op, lhs, rhs);
        }
    }

    fn unary(&mut self) -> PResult<Expr> {
        if *self.peek() == Tok::Minus {
            self.bump();
            let inner = self.unary()?;
            return Ok(match inner {
                Expr::Const(c) => Expr::Const(-c),
                other => Expr::Neg(Box::new(other)),
            });
        }
        let base = self.atom()?;
        if *self.peek() == Tok::Caret {
            self.bump();
            let exp = self.unary()?;
            return Ok(Expr::binary(BinOp::Pow, base, exp));
        }
        Ok(base)
    }

    fn atom(&mut self) -> PResult<Expr> {
        let col = self.column();
        match self.peek().clone() {
            Tok::Num(x) => {
                self.bump();
                Ok(Expr::Const(x))
            }
            Tok::LParen => {
                self.bump();
                let e = self.expr()?;
                self.expect(Tok::RParen, "`)`")?;
                Ok(e)
            }
            Tok::Ident(name) => {
                self.bump();
                if *self.peek() != Tok::LParen {
                    return Ok(Expr::Var(self.variable(&name, col)?));
                }
                self.bump();
                if name == "dist_union" {
                    return self.dist_union();
                }
                let func = Func::from_name(&name).ok_or(ParseError {
                    column: col,
                    kind: ParseErrorKind::UnknownFunction(name.clone()),
                })?;
                let mut args = vec![self.expr()?];
                while *self.peek() == Tok::Comma {
                    self.bump();
                    args.push(self.expr()?);
                }
                self.expect(Tok::RParen, "`)` or `,`")?;
                let arity_ok = match func.arity() {
                    Some(n) => args.len() == n,
                    None => args.len() >= 2,
                };
                if !arity_ok {
                    return Err(ParseError {
                        column: col,
                        kind: ParseErrorKind::Arity {
                            func: func.name(),
                            expected: func.arity().map_or("2 or more".into(), |n| n.to_string()),
                            got: args.len(),
                        },
                    });
                }
                Ok(Expr::Call(func, args))
            }
            _ => Err(self.unexpected("expression")),
        }
    }

    fn dist_union(&mut self) -> PResult<Expr> {
        let mut args = vec![self.expr()?];
        while *self.peek() == Tok::Comma {
            self.bump();
            args.push(self.expr()?);
        }
        self.expect(Tok::Semi, "`;` or `,`")?;
        let mut boxes = vec![self.interval_box(args.len())?];
        while *self.peek() == Tok::Comma {
            self.bump();
            boxes.push(self.interval_box(args.len())?);
        }
        self.expect(Tok::RParen, "`)` or `,`")?;
        Ok(Expr::DistUnion { args, boxes })
    }

    /// `[lo,hi]x[lo,hi]...`
    fn interval_box(&mut self, dim: usize) -> PResult<IntervalBox> {
        let col = self.column();
        let mut bounds = vec![self.interval()?];
        while matches!(self.peek(), Tok::Ident(s) if s == "x") {
            self.bump();
            bounds.push(self.interval()?);
        }
        if bounds.len() != dim {
            return Err(ParseError {
                column: col,
                kind: ParseErrorKind::DimensionMismatch {
                    expected: dim,
                    got: bounds.len(),
                },
            });
        }
        IntervalBox::from_bounds(&bounds).map_err(|e| ParseError {
            column: col,
            kind: ParseErrorKind::InvalidDomain(e.to_string()),
        })
    }

    fn interval(&mut self) -> PResult<(f64, f64)> {
        self.expect(Tok::LBracket, "`[`")?;
        let lo = self.signed_number()?;
        self.expect(Tok::Comma, "`,`")?;
        let hi = self.signed_number()?;
        self.expect(Tok::RBracket, "`]`")?;
        Ok((lo, hi))
    }

    fn declaration(&mut self) -> PResult<Variable> {
        self.keyword("var")?;
        let name = self.ident("variable name")?;
        self.expect(Tok::Colon, "`:`")?;
        let col = self.column();
        let kind = match self.ident("bool, int or real")?.as_str() {
            "bool" => VarKind::Bool,
            "int" => {
                if *self.peek() == Tok::LBrace {
                    self.bump();
                    let mut set = vec![self.signed_int()?];
                    while *self.peek() == Tok::Comma {
                        self.bump();
                        set.push(self.signed_int()?);
                    }
                    self.expect(Tok::RBrace, "`}` or `,`")?;
                    VarKind::Int {
                        domain: IntDomain::set(set),
                    }
                } else {
                    let lo = self.signed_int()?;
                    self.expect(Tok::DotDot, "`..`")?;
                    let hi = self.signed_int()?;
                    if lo > hi {
                        return Err(ParseError {
                            column: col,
                            kind: ParseErrorKind::InvalidDomain(format!("{lo}..{hi} is empty")),
                        });
                    }
                    VarKind::Int {
                        domain: IntDomain::Range { lo, hi },
                    }
                }
            }
            "real" => {
                let lo = self.signed_number()?;
                self.expect(Tok::DotDot, "`..`")?;
                let hi = self.signed_number()?;
                if lo > hi {
                    return Err(ParseError {
                        column: col,
                        kind: ParseErrorKind::InvalidDomain(format!("{lo}..{hi} is empty")),
                    });
                }
                VarKind::Real { lo, hi }
            }
            other => {
                return Err(ParseError {
                    column: col,
                    kind: ParseErrorKind::Syntax {
                        expected: "bool, int or real".into(),
                        found: format!("`{other}`"),
                    },
                })
            }
        };
        if *self.peek() != Tok::End {
            return Err(self.unexpected("end of line"));
        }
        Ok(Variable { name, kind })
    }
}

/// Parses a single constraint line against `space`.
pub fn parse_constraint(text: &str, space: &VariableSpace) -> Result<Constraint, ParseError> {
    Parser::new(text, space)?.constraint()
}

fn strip_comment(line: &str) -> &str {
    line.split('#').next().unwrap_or("").trim()
}

fn is_declaration(line: &str) -> bool {
    line.split_whitespace().next() == Some("var")
}

pub(super) fn parse_system(text: &str, space: Option<VariableSpace>) -> Result<ConstraintSystem, ConstraintError> {
    let empty = VariableSpace::new(Vec::new()).expect("empty space is valid");
    let declared = space.is_none();
    let mut vars = Vec::new();
    for (n, raw) in text.lines().enumerate() {
        let line = strip_comment(raw);
        if !is_declaration(line) {
            continue;
        }
        let wrap = |source| ConstraintError::Parse { line: n + 1, source };
        if !declared {
            return Err(wrap(ParseError {
                column: 1,
                kind: ParseErrorKind::DeclarationNotAllowed,
            }));
        }
        let var = Parser::new(line, &empty)
            .and_then(|mut p| p.declaration())
            .map_err(wrap)?;
        if vars.iter().any(|v: &Variable| v.name == var.name) {
            return Err(wrap(ParseError {
                column: 1,
                kind: ParseErrorKind::DuplicateVariable(var.name),
            }));
        }
        vars.push(var);
    }
    let space = match space {
        Some(s) => s,
        None => VariableSpace::new(vars)?,
    };
    let mut constraints = Vec::new();
    for (n, raw) in text.lines().enumerate() {
        let line = strip_comment(raw);
        if line.is_empty() || is_declaration(line) {
            continue;
        }
        let c = parse_constraint(line, &space).map_err(|source| ConstraintError::Parse { line: n + 1, source })?;
        constraints.push(c);
    }
    ConstraintSystem::new(space, constraints)
}
