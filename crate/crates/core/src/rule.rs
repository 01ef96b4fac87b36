//! Consistency-rule predicates.
//!
//! A rule is a boolean expression over answer codes that must hold for a
//! respondent to be considered consistent. The grammar is deliberately small:
//!
//! ```text
//! predicate  := disjunct ( "||" disjunct )*
//! disjunct   := atom ( "&&" atom )*
//! atom       := "(" predicate ")" | comparison
//! comparison := sum cmp sum           cmp: <= < >= > == !=
//! sum        := term ( ("+" | "-") term )*
//! term       := factor ( "*" factor )*
//! factor     := integer | identifier | "-" factor | "(" sum ")"
//! ```
//!
//! Identifiers are question ids. At most three distinct questions may appear
//! in one predicate.

use std::collections::BTreeMap;
use std::fmt;

use thiserror::Error;

pub const MAX_RULE_QUESTIONS: usize = 3;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum RuleParseError {
    #[error("unexpected character {ch:?} at offset {offset}")]
    UnexpectedChar { ch: char, offset: usize },
    #[error("unexpected end of predicate")]
    UnexpectedEnd,
    #[error("unexpected token {found:?}, expected {expected}")]
    UnexpectedToken { found: String, expected: &'static str },
    #[error("predicate references {0} questions, at most 3 are allowed")]
    TooManyQuestions(usize),
    #[error("integer literal {0:?} out of range")]
    BadInteger(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CmpOp {
    Le,
    Lt,
    Ge,
    Gt,
    Eq,
    Ne,
}

impl CmpOp {
    fn symbol(self) -> &'static str {
        match self {
            CmpOp::Le => "<=",
            CmpOp::Lt => "<",
            CmpOp::Ge => ">=",
            CmpOp::Gt => ">",
            CmpOp::Eq => "==",
            CmpOp::Ne => "!=",
        }
    }

    fn apply(self, a: i64, b: i64) -> bool {
        match self {
            CmpOp::Le => a <= b,
            CmpOp::Lt => a < b,
            CmpOp::Ge => a >= b,
            CmpOp::Gt => a > b,
            CmpOp::Eq => a == b,
            CmpOp::Ne => a != b,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Expr {
    Const(i64),
    Var(String),
    Neg(Box<Expr>),
    Add(Box<Expr>, Box<Expr>),
    Sub(Box<Expr>, Box<Expr>),
    Mul(Box<Expr>, Box<Expr>),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Predicate {
    Cmp(Expr, CmpOp, Expr),
    And(Box<Predicate>, Box<Predicate>),
    Or(Box<Predicate>, Box<Predicate>),
}

impl Expr {
    fn eval(&self, answers: &BTreeMap<String, i64>) -> Option<i64> {
        Some(match self {
            Expr::Const(c) => *c,
            Expr::Var(v) => *answers.get(v)?,
            Expr::Neg(e) => e.eval(answers)?.checked_neg()?,
            Expr::Add(a, b) => a.eval(answers)?.checked_add(b.eval(answers)?)?,
            Expr::Sub(a, b) => a.eval(answers)?.checked_sub(b.eval(answers)?)?,
            Expr::Mul(a, b) => a.eval(answers)?.checked_mul(b.eval(answers)?)?,
        })
    }

    fn collect_vars<'a>(&'a self, out: &mut Vec<&'a str>) {
        match self {
            Expr::Const(_) => {}
            Expr::Var(v) => {
                if !out.contains(&v.as_str()) {
                    out.push(v);
                }
            }
            Expr::Neg(e) => e.collect_vars(out),
            Expr::Add(a, b) | Expr::Sub(a, b) | Expr::Mul(a, b) => {
                a.collect_vars(out);
                b.collect_vars(out);
            }
        }
    }
}

impl Predicate {
    /// Parses a predicate and checks the question-count limit.
    pub fn parse(src: &str) -> Result<Self, RuleParseError> {
        let tokens = tokenize(src)?;
        let mut parser = Parser { tokens, pos: 0 };
        let pred = parser.predicate()?;
        if let Some(tok) = parser.peek() {
            return Err(RuleParseError::UnexpectedToken {
                found: tok.to_string(),
                expected: "end of predicate",
            });
        }
        let n = pred.variables().len();
        if n > MAX_RULE_QUESTIONS {
            return Err(RuleParseError::TooManyQuestions(n));
        }
        Ok(pred)
    }

    /// Distinct question ids in order of first appearance.
    pub fn variables(&self) -> Vec<&str> {
        let mut out = Vec::new();
        self.collect_vars(&mut out);
        out
    }

    fn collect_vars<'a>(&'a self, out: &mut Vec<&'a str>) {
        match self {
            Predicate::Cmp(a, _, b) => {
                a.collect_vars(out);
                b.collect_vars(out);
            }
            Predicate::And(a, b) | Predicate::Or(a, b) => {
                a.collect_vars(out);
                b.collect_vars(out);
            }
        }
    }

    /// Evaluates the predicate. `None` when an answer is missing or the
    /// arithmetic overflows.
    pub fn eval(&self, answers: &BTreeMap<String, i64>) -> Option<bool> {
        match self {
            Predicate::Cmp(a, op, b) => Some(op.apply(a.eval(answers)?, b.eval(answers)?)),
            Predicate::And(a, b) => Some(a.eval(answers)? && b.eval(answers)?),
            Predicate::Or(a, b) => Some(a.eval(answers)? || b.eval(answers)?),
        }
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Expr::Const(c) => write!(f, "{c}"),
            Expr::Var(v) => f.write_str(v),
            Expr::Neg(e) => write!(f, "-({e})"),
            Expr::Add(a, b) => write!(f, "({a} + {b})"),
            Expr::Sub(a, b) => write!(f, "({a} - {b})"),
            Expr::Mul(a, b) => write!(f, "({a} * {b})"),
        }
    }
}

impl fmt::Display for Predicate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Predicate::Cmp(a, op, b) => write!(f, "{a} {} {b}", op.symbol()),
            Predicate::And(a, b) => write!(f, "({a}) && ({b})"),
            Predicate::Or(a, b) => write!(f, "({a}) || ({b})"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
enum Token {
    Int(i64),
    Ident(String),
    Cmp(CmpOp),
    Plus,
    Minus,
    Star,
    And,
    Or,
    LParen,
    RParen,
}

impl fmt::Display for Token {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Token::Int(i) => write!(f, "{i}"),
            Token::Ident(s) => f.write_str(s),
            Token::Cmp(op) => f.write_str(op.symbol()),
            Token::Plus => f.write_str("+"),
            Token::Minus => f.write_str("-"),
            Token::Star => f.write_str("*"),
            Token::And => f.write_str("&&"),
            Token::Or => f.write_str("||"),
            Token::LParen => f.write_str("("),
            Token::RParen => f.write_str(")"),
        }
    }
}

fn tokenize(src: &str) -> Result<Vec<Token>, RuleParseError> {
    let chars: Vec<(usize, char)> = src.char_indices().collect();
    let mut out = Vec::new();
    let mut i = 0;
    while i < chars.len() {
        let (offset, ch) = chars[i];
        let next = chars.get(i + 1).map(|&(_, c)| c);
        match ch {
            c if c.is_whitespace() => i += 1,
            '0'..='9' => {
                let start = i;
                while i < chars.len() && chars[i].1.is_ascii_digit() {
                    i += 1;
                }
                let lit: String = chars[start..i].iter().map(|&(_, c)| c).collect();
                let v = lit.parse().map_err(|_| RuleParseError::BadInteger(lit.clone()))?;
                out.push(Token::Int(v));
            }
            c if c.is_ascii_alphabetic() || c == '_' => {
                let start = i;
                while i < chars.len() && (chars[i].1.is_ascii_alphanumeric() || chars[i].1 == '_') {
                    i += 1;
                }
                out.push(Token::Ident(chars[start..i].iter().map(|&(_, c)| c).collect()));
            }
            '<' | '>' | '=' | '!' => {
                let op = match (ch, next) {
                    ('<', Some('=')) => Some((CmpOp::Le, 2)),
                    ('>', Some('=')) => Some((CmpOp::Ge, 2)),
                    ('=', Some('=')) => Some((CmpOp::Eq, 2)),
                    ('!', Some('=')) => Some((CmpOp::Ne, 2)),
                    ('<', _) => Some((CmpOp::Lt, 1)),
                    ('>', _) => Some((CmpOp::Gt, 1)),
                    _ => None,
                };
                let (op, width) = op.ok_or(RuleParseError::UnexpectedChar { ch, offset })?;
                out.push(Token::Cmp(op));
                i += width;
            }
            '&' if next == Some('&') => {
                out.push(Token::And);
                i += 2;
            }
            '|' if next == Some('|') => {
                out.push(Token::Or);
                i += 2;
            }
            '+' => {
                out.push(Token::Plus);
                i += 1;
            }
            '-' => {
                out.push(Token::Minus);
                i += 1;
            }
            '*' => {
                out.push(Token::Star);
                i += 1;
            }
            '(' => {
                out.push(Token::LParen);
                i += 1;
            }
            ')' => {
                out.push(Token::RParen);
                i += 1;
            }
            _ => return Err(RuleParseError::UnexpectedChar { ch, offset }),
        }
    }
    Ok(out)
}

struct Parser {
    tokens: Vec<Token>,
    pos: usize,
}

impl Parser {
    fn peek(&self) -> Option<&Token> {
        self.tokens.get(self.pos)
    }

    fn next(&mut self) -> Result<Token, RuleParseError> {
        let tok = self.tokens.get(self.pos).cloned().ok_or(RuleParseError::UnexpectedEnd)?;
        self.pos += 1;
        Ok(tok)
    }

    fn expect(&mut self, want: Token, expected: &'static str) -> Result<(), RuleParseError> {
        let tok = self.next()?;
        if tok == want {
            Ok(())
        } else {
            Err(RuleParseError::UnexpectedToken { found: tok.to_string(), expected })
        }
    }

    fn predicate(&mut self) -> Result<Predicate, RuleParseError> {
        let mut lhs = self.disjunct()?;
        while self.peek() == Some(&Token::Or) {
            self.pos += 1;
            let rhs = self.disjunct()?;
            lhs = Predicate::Or(Box::new(lhs), Box::new(rhs));
        }
        Ok(lhs)
    }

    fn disjunct(&mut self) -> Result<Predicate, RuleParseError> {
        let mut lhs = self.atom()?;
        while self.peek() == Some(&Token::And) {
            self.pos += 1;
            let rhs = self.atom()?;
            lhs = Predicate::And(Box::new(lhs), Box::new(rhs));
        }
        Ok(lhs)
    }

    fn atom(&mut self) -> Result<Predicate, RuleParseError> {
        // A parenthesis may open either a nested predicate or an arithmetic
        // group; try the predicate reading first and backtrack on failure.
        if self.peek() == Some(&Token::LParen) {
            let save = self.pos;
            self.pos += 1;
            if let Ok(inner) = self.predicate() {
                if self.peek() == Some(&Token::RParen) {
                    self.pos += 1;
                    if !matches!(self.peek(), Some(Token::Cmp(_) | Token::Plus | Token::Minus | Token::Star)) {
                        return Ok(inner);
                    }
                }
            }
            self.pos = save;
        }
        let lhs = self.sum()?;
        let op = match self.next()? {
            Token::Cmp(op) => op,
            other => {
                return Err(RuleParseError::UnexpectedToken {
                    found: other.to_string(),
                    expected: "comparison operator",
                })
            }
        };
        let rhs = self.sum()?;
        Ok(Predicate::Cmp(lhs, op, rhs))
    }

    fn sum(&mut self) -> Result<Expr, RuleParseError> {
        let mut lhs = self.term()?;
        loop {
            match self.peek() {
                Some(Token::Plus) => {
                    self.pos += 1;
                    lhs = Expr::Add(Box::new(lhs), Box::new(self.term()?));
                }
                Some(Token::Minus) => {
                    self.pos += 1;
                    lhs = Expr::Sub(Box::new(lhs), Box::new(self.term()?));
                }
                _ => return Ok(lhs),
            }
        }
    }

    fn term(&mut self) -> Result<Expr, RuleParseError> {
        let mut lhs = self.factor()?;
        while self.peek() == Some(&Token::Star) {
            self.pos += 1;
            lhs = Expr::Mul(Box::new(lhs), Box::new(self.factor()?));
        }
        Ok(lhs)
    }

    fn factor(&mut self) -> Result<Expr, RuleParseError> {
        match self.next()? {
            Token::Int(v) => Ok(Expr::Const(v)),
            Token::Ident(name) => Ok(Expr::Var(name)),
            Token::Minus => Ok(Expr::Neg(Box::new(self.factor()?))),
            Token::LParen => {
                let inner = self.sum()?;
                self.expect(Token::RParen, "')'")?;
                Ok(inner)
            }
            other => Err(RuleParseError::UnexpectedToken {
                found: other.to_string(),
                expected: "number, question id or '('",
            }),
        }
    }
}
