//! Boolean comparison formulas over named parameters.
//!
//! Grammar (whitespace-insensitive):
//!
//! ```text
//! expr    := and (("|" | "||" | "or") and)*
//! and     := unary (("&" | "&&" | "and") unary)*
//! unary   := ("!" | "not") unary | primary
//! primary := "(" expr ")" | "true" | "false" | chain
//! chain   := operand (cmp operand)+
//! cmp     := "<" | "<=" | "≤" | "=" | "==" | ">=" | "≥" | ">"
//! operand := number | identifier | 'quoted level'
//! ```
//!
//! A chain such as `0 <= x < 10` means `0 <= x & x < 10`.
//!
//! Identifiers that name a declared parameter are parameter references. Any
//! other identifier (or a quoted string) is a level literal and must belong
//! to the level list of an ordinal parameter on the other side of the
//! comparison. Levels compile to their rank, so evaluation is purely numeric.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};

use super::StatespaceError;

/// Kind of a declared parameter.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum ParamKind {
    Numeric,
    /// Ordinal-categorical with the declared total order (lowest first).
    Ordinal { levels: Vec<String> },
}

/// Declared parameter vocabulary.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Schema {
    params: BTreeMap<String, ParamKind>,
}

impl Schema {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with_numeric(mut self, name: &str) -> Self {
        self.params.insert(name.to_string(), ParamKind::Numeric);
        self
    }

    pub fn with_ordinal<S: AsRef<str>>(mut self, name: &str, levels: &[S]) -> Self {
        self.params.insert(
            name.to_string(),
            ParamKind::Ordinal {
                levels: levels.iter().map(|l| l.as_ref().to_string()).collect(),
            },
        );
        self
    }

    pub fn insert(&mut self, name: String, kind: ParamKind) {
        self.params.insert(name, kind);
    }

    pub fn get(&self, name: &str) -> Option<&ParamKind> {
        self.params.get(name)
    }

    pub fn contains(&self, name: &str) -> bool {
        self.params.contains_key(name)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&String, &ParamKind)> {
        self.params.iter()
    }

    /// Rank of `level` in the ordinal parameter `param`.
    pub fn level_rank(&self, param: &str, level: &str) -> Option<usize> {
        match self.params.get(param)? {
            ParamKind::Ordinal { levels } => levels.iter().position(|l| l == level),
            ParamKind::Numeric => None,
        }
    }

    /// Encodes a raw textual value (number or level name) into the numeric
    /// domain used by evaluation.
    pub fn encode(&self, param: &str, raw: &str) -> Result<f64, StatespaceError> {
        let kind = self
            .params
            .get(param)
            .ok_or_else(|| StatespaceError::UnknownParameter(param.to_string()))?;
        match kind {
            ParamKind::Numeric => raw.trim().parse::<f64>().map_err(|_| StatespaceError::BadValue {
                parameter: param.to_string(),
                value: raw.to_string(),
            }),
            ParamKind::Ordinal { levels } => levels
                .iter()
                .position(|l| l == raw.trim())
                .map(|r| r as f64)
                .ok_or_else(|| StatespaceError::BadValue {
                    parameter: param.to_string(),
                    value: raw.to_string(),
                }),
        }
    }
}

/// Values for named parameters; ordinal levels are stored as their rank.
pub type Assignment = BTreeMap<String, f64>;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CmpOp {
    Lt,
    Le,
    Eq,
    Ge,
    Gt,
}

impl CmpOp {
    fn apply(self, a: f64, b: f64) -> bool {
        match self {
            CmpOp::Lt => a < b,
            CmpOp::Le => a <= b,
            CmpOp::Eq => a == b,
            CmpOp::Ge => a >= b,
            CmpOp::Gt => a > b,
        }
    }

    fn symbol(self) -> &'static str {
        match self {
            CmpOp::Lt => "<",
            CmpOp::Le => "<=",
            CmpOp::Eq => "=",
            CmpOp::Ge => ">=",
            CmpOp::Gt => ">",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Operand {
    Param(String),
    Const(f64),
}

impl Operand {
    fn value(&self, env: &Assignment) -> Result<f64, StatespaceError> {
        match self {
            Operand::Const(c) => Ok(*c),
            Operand::Param(p) => env
                .get(p)
                .copied()
                .ok_or_else(|| StatespaceError::MissingParameter(p.clone())),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Const(bool),
    Cmp(Operand, CmpOp, Operand),
    Not(Box<Expr>),
    And(Vec<Expr>),
    Or(Vec<Expr>),
}

impl Expr {
    pub fn eval(&self, env: &Assignment) -> Result<bool, StatespaceError> {
        match self {
            Expr::Const(b) => Ok(*b),
            Expr::Cmp(l, op, r) => Ok(op.apply(l.value(env)?, r.value(env)?)),
            Expr::Not(e) => Ok(!e.eval(env)?),
            Expr::And(es) => {
                for e in es {
                    if !e.eval(env)? {
                        return Ok(false);
                    }
                }
                Ok(true)
            }
            Expr::Or(es) => {
                for e in es {
                    if e.eval(env)? {
                        return Ok(true);
                    }
                }
                Ok(false)
            }
        }
    }

    fn collect_params(&self, out: &mut BTreeSet<String>) {
        match self {
            Expr::Const(_) => {}
            Expr::Cmp(l, _, r) => {
                for o in [l, r] {
                    if let Operand::Param(p) = o {
                        out.insert(p.clone());
                    }
                }
            }
            Expr::Not(e) => e.collect_params(out),
            Expr::And(es) | Expr::Or(es) => es.iter().for_each(|e| e.collect_params(out)),
        }
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fn operand(o: &Operand, f: &mut fmt::Formatter<'_>) -> fmt::Result {
            match o {
                Operand::Param(p) => write!(f, "{p}"),
                Operand::Const(c) => write!(f, "{c}"),
            }
        }
        match self {
            Expr::Const(b) => write!(f, "{b}"),
            Expr::Cmp(l, op, r) => {
                operand(l, f)?;
                write!(f, " {} ", op.symbol())?;
                operand(r, f)
            }
            Expr::Not(e) => write!(f, "!({e})"),
            Expr::And(es) | Expr::Or(es) => {
                let sep = if matches!(self, Expr::And(_)) { " & " } else { " | " };
                write!(f, "(")?;
                for (i, e) in es.iter().enumerate() {
                    if i > 0 {
                        write!(f, "{sep}")?;
                    }
                    write!(f, "{e}")?;
                }
                write!(f, ")")
            }
        }
    }
}

/// A named, compiled predicate. Keeps its source text for serialization.
#[derive(Debug, Clone)]
pub struct Predicate {
    pub name: String,
    source: String,
    expr: Expr,
    params: BTreeSet<String>,
}

impl PartialEq for Predicate {
    fn eq(&self, other: &Self) -> bool {
        self.name == other.name && self.source == other.source
    }
}

impl Predicate {
    pub fn parse(name: &str, source: &str, schema: &Schema) -> Result<Self, StatespaceError> {
        let tokens = lex(source)?;
        let mut parser = Parser {
            tokens,
            pos: 0,
            schema,
            source,
        };
        let expr = parser.expr()?;
        if let Some(tok) = parser.tokens.get(parser.pos) {
            return Err(syntax(source, tok.offset, "unexpected trailing input"));
        }
        let mut params = BTreeSet::new();
        expr.collect_params(&mut params);
        Ok(Self {
            name: name.to_string(),
            source: source.to_string(),
            expr,
            params,
        })
    }

    pub fn source(&self) -> &str {
        &self.source
    }

    pub fn expr(&self) -> &Expr {
        &self.expr
    }

    /// Parameters referenced anywhere in the formula.
    pub fn parameters(&self) -> &BTreeSet<String> {
        &self.params
    }

    pub fn eval(&self, env: &Assignment) -> Result<bool, StatespaceError> {
        // Report a missing parameter even when short-circuiting would skip it.
        if let Some(p) = self.params.iter().find(|p| !env.contains_key(*p)) {
            return Err(StatespaceError::MissingParameter(p.clone()));
        }
        self.expr.eval(env)
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    LParen,
    RParen,
    Not,
    And,
    Or,
    Cmp(CmpOp),
    Num(f64),
    Ident(String),
    Quoted(String),
}

#[derive(Debug, Clone)]
struct Token {
    tok: Tok,
    offset: usize,
}

fn syntax(source: &str, offset: usize, msg: &str) -> StatespaceError {
    StatespaceError::Syntax {
        expression: source.to_string(),
        position: offset,
        message: msg.to_string(),
    }
}

fn lex(src: &str) -> Result<Vec<Token>, StatespaceError> {
    let mut out = Vec::new();
    let chars: Vec<(usize, char)> = src.char_indices().collect();
    let mut i = 0;
    while i < chars.len() {
        let (off, c) = chars[i];
        let peek = chars.get(i + 1).map(|&(_, c)| c);
        let push = |out: &mut Vec<Token>, tok| out.push(Token { tok, offset: off });
        match c {
            c if c.is_whitespace() => i += 1,
            '(' => {
                push(&mut out, Tok::LParen);
                i += 1;
            }
            ')' => {
                push(&mut out, Tok::RParen);
                i += 1;
            }
            '!' | '¬' => {
                push(&mut out, Tok::Not);
                i += 1;
            }
            '&' | '∧' => {
                push(&mut out, Tok::And);
                i += if c == '&' && peek == Some('&') { 2 } else { 1 };
            }
            '|' | '∨' => {
                push(&mut out, Tok::Or);
                i += if c == '|' && peek == Some('|') { 2 } else { 1 };
            }
            '<' | '>' => {
                let strict = if c == '<' { CmpOp::Lt } else { CmpOp::Gt };
                let loose = if c == '<' { CmpOp::Le } else { CmpOp::Ge };
                if peek == Some('=') {
                    push(&mut out, Tok::Cmp(loose));
                    i += 2;
                } else {
                    push(&mut out, Tok::Cmp(strict));
                    i += 1;
                }
            }
            '≤' => {
                push(&mut out, Tok::Cmp(CmpOp::Le));
                i += 1;
            }
            '≥' => {
                push(&mut out, Tok::Cmp(CmpOp::Ge));
                i += 1;
            }
            '=' => {
                push(&mut out, Tok::Cmp(CmpOp::Eq));
                i += if peek == Some('=') { 2 } else { 1 };
            }
            '\'' | '"' => {
                let quote = c;
                let mut j = i + 1;
                let mut s = String::new();
                while j < chars.len() && chars[j].1 != quote {
                    s.push(chars[j].1);
                    j += 1;
                }
                if j == chars.len() {
                    return Err(syntax(src, off, "unterminated quoted level"));
                }
                push(&mut out, Tok::Quoted(s));
                i = j + 1;
            }
            c if c.is_ascii_digit() || c == '.' || (c == '-' && starts_number(peek)) => {
                let mut j = i + 1;
                while j < chars.len() {
                    let d = chars[j].1;
                    let exp_sign =
                        (d == '-' || d == '+') && matches!(chars[j - 1].1, 'e' | 'E');
                    if d.is_ascii_digit() || d == '.' || d == 'e' || d == 'E' || exp_sign {
                        j += 1;
                    } else {
                        break;
                    }
                }
                let end = chars.get(j).map(|&(o, _)| o).unwrap_or(src.len());
                let text = &src[off..end];
                let v = text
                    .parse::<f64>()
                    .map_err(|_| syntax(src, off, "malformed number"))?;
                push(&mut out, Tok::Num(v));
                i = j;
            }
            c if c.is_alphabetic() || c == '_' => {
                let mut j = i + 1;
                while j < chars.len() && (chars[j].1.is_alphanumeric() || matches!(chars[j].1, '_' | '.')) {
                    j += 1;
                }
                let end = chars.get(j).map(|&(o, _)| o).unwrap_or(src.len());
                let word = &src[off..end];
                let tok = match word {
                    "and" => Tok::And,
                    "or" => Tok::Or,
                    "not" => Tok::Not,
                    _ => Tok::Ident(word.to_string()),
                };
                push(&mut out, tok);
                i = j;
            }
            _ => return Err(syntax(src, off, &format!("unexpected character '{c}'"))),
        }
    }
    Ok(out)
}

fn starts_number(c: Option<char>) -> bool {
    matches!(c, Some(d) if d.is_ascii_digit() || d == '.')
}

enum RawOperand {
    Num(f64),
    Word(String, usize),
    Level(String, usize),
}

struct Parser<'a> {
    tokens: Vec<Token>,
    pos: usize,
    schema: &'a Schema,
    source: &'a str,
}

impl Parser<'_> {
    fn peek(&self) -> Option<&Tok> {
        self.tokens.get(self.pos).map(|t| &t.tok)
    }

    fn offset(&self) -> usize {
        self.tokens
            .get(self.pos)
            .map(|t| t.offset)
            .unwrap_or(self.source.len())
    }

    fn expr(&mut self) -> Result<Expr, StatespaceError> {
        let mut terms = vec![self.and()?];
        while self.peek() == Some(&Tok::Or) {
            self.pos += 1;
            terms.push(self.and()?);
        }
        Ok(if terms.len() == 1 { terms.pop().unwrap() } else { Expr::Or(terms) })
    }

    fn and(&mut self) -> Result<Expr, StatespaceError> {
        let mut terms = vec![self.unary()?];
        while self.peek() == Some(&Tok::And) {
            self.pos += 1;
            terms.push(self.unary()?);
        }
        Ok(if terms.len() == 1 { terms.pop().unwrap() } else { Expr::And(terms) })
    }

    fn unary(&mut self) -> Result<Expr, StatespaceError> {
        if self.peek() == Some(&Tok::Not) {
            self.pos += 1;
            return Ok(Expr::Not(Box::new(self.unary()?)));
        }
        self.primary()
    }

    fn primary(&mut self) -> Result<Expr, StatespaceError> {
        match self.peek() {
            Some(Tok::LParen) => {
                self.pos += 1;
                let e = self.expr()?;
                if self.peek() != Some(&Tok::RParen) {
                    return Err(syntax(self.source, self.offset(), "expected ')'"));
                }
                self.pos += 1;
                Ok(e)
            }
            Some(Tok::Ident(w)) if w == "true" || w == "false" => {
                let b = w == "true";
                self.pos += 1;
                Ok(Expr::Const(b))
            }
            _ => self.chain(),
        }
    }

    fn raw_operand(&mut self) -> Result<RawOperand, StatespaceError> {
        let offset = self.offset();
        let op = match self.peek() {
            Some(Tok::Num(v)) => RawOperand::Num(*v),
            Some(Tok::Ident(w)) => RawOperand::Word(w.clone(), offset),
            Some(Tok::Quoted(s)) => RawOperand::Level(s.clone(), offset),
            _ => return Err(syntax(self.source, offset, "expected operand")),
        };
        self.pos += 1;
        Ok(op)
    }

    fn chain(&mut self) -> Result<Expr, StatespaceError> {
        let mut operands = vec![self.raw_operand()?];
        let mut ops = Vec::new();
        while let Some(Tok::Cmp(op)) = self.peek() {
            ops.push(*op);
            self.pos += 1;
            operands.push(self.raw_operand()?);
        }
        if ops.is_empty() {
            return Err(syntax(self.source, self.offset(), "expected comparison operator"));
        }
        let mut cmps = Vec::with_capacity(ops.len());
        for (k, op) in ops.iter().enumerate() {
            let lhs = self.resolve(&operands[k], &operands[k + 1])?;
            let rhs = self.resolve(&operands[k + 1], &operands[k])?;
            cmps.push(Expr::Cmp(lhs, *op, rhs));
        }
        Ok(if cmps.len() == 1 { cmps.pop().unwrap() } else { Expr::And(cmps) })
    }

    /// Resolves `this` in the context of the operand it is compared with.
    fn resolve(&self, this: &RawOperand, other: &RawOperand) -> Result<Operand, StatespaceError> {
        let (level, offset) = match this {
            RawOperand::Num(v) => return Ok(Operand::Const(*v)),
            RawOperand::Word(w, _) if self.schema.contains(w) => {
                return Ok(Operand::Param(w.clone()))
            }
            RawOperand::Word(w, o) | RawOperand::Level(w, o) => (w, *o),
        };
        let param = match other {
            RawOperand::Word(p, _) if self.schema.contains(p) => p,
            RawOperand::Word(..) | RawOperand::Num(_) | RawOperand::Level(..) => {
                return Err(StatespaceError::UnknownIdentifier {
                    expression: self.source.to_string(),
                    position: offset,
                    identifier: level.clone(),
                })
            }
        };
        match self.schema.level_rank(param, level) {
            Some(rank) => Ok(Operand::Const(rank as f64)),
            None => Err(StatespaceError::UnknownIdentifier {
                expression: self.source.to_string(),
                position: offset,
                identifier: level.clone(),
            }),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn schema() -> Schema {
        Schema::new()
            .with_numeric("x")
            .with_numeric("y")
            .with_ordinal("stage", &["low", "mid", "high"])
    }

    fn env(pairs: &[(&str, f64)]) -> Assignment {
        pairs.iter().map(|(k, v)| (k.to_string(), *v)).collect()
    }

    #[test]
    fn chained_comparison_is_conjunction() {
        let p = Predicate::parse("k", "0 ≤ x < 10", &schema()).unwrap();
        assert!(p.eval(&env(&[("x", 0.0)])).unwrap());
        assert!(p.eval(&env(&[("x", 9.99)])).unwrap());
        assert!(!p.eval(&env(&[("x", 10.0)])).unwrap());
        assert!(!p.eval(&env(&[("x", -0.1)])).unwrap());
    }

    #[test]
    fn connectives_and_precedence() {
        let p = Predicate::parse("k", "x < 0 | x > 5 & !(y >= 1)", &schema()).unwrap();
        assert!(p.eval(&env(&[("x", -1.0), ("y", 3.0)])).unwrap());
        assert!(p.eval(&env(&[("x", 6.0), ("y", 0.0)])).unwrap());
        assert!(!p.eval(&env(&[("x", 6.0), ("y", 1.0)])).unwrap());
        let words = Predicate::parse("k", "not (x < 0) and (y = 2 or y = 3)", &schema()).unwrap();
        assert!(words.eval(&env(&[("x", 0.0), ("y", 3.0)])).unwrap());
    }

    #[test]
    fn parameter_to_parameter_comparison() {
        let p = Predicate::parse("k", "x <= y", &schema()).unwrap();
        assert!(p.eval(&env(&[("x", 1.0), ("y", 1.0)])).unwrap());
        assert!(!p.eval(&env(&[("x", 2.0), ("y", 1.0)])).unwrap());
    }

    #[test]
    fn ordinal_levels_compile_to_ranks() {
        let s = schema();
        let p = Predicate::parse("k", "stage >= mid", &s).unwrap();
        let q = Predicate::parse("k", "'high' = stage", &s).unwrap();
        let mid = s.encode("stage", "mid").unwrap();
        assert!(p.eval(&env(&[("stage", mid)])).unwrap());
        assert!(!q.eval(&env(&[("stage", mid)])).unwrap());
        assert!(!p.eval(&env(&[("stage", 0.0)])).unwrap());
    }

    #[test]
    fn unknown_identifier_and_level_rejected() {
        let s = schema();
        assert!(matches!(
            Predicate::parse("k", "z < 3", &s),
            Err(StatespaceError::UnknownIdentifier { .. })
        ));
        assert!(matches!(
            Predicate::parse("k", "stage = huge", &s),
            Err(StatespaceError::UnknownIdentifier { identifier, .. }) if identifier == "huge"
        ));
    }

    #[test]
    fn syntax_errors_carry_position() {
        match Predicate::parse("k", "x < 3 &", &schema()) {
            Err(StatespaceError::Syntax { position, .. }) => assert_eq!(position, 7),
            other => panic!("unexpected {other:?}"),
        }
        match Predicate::parse("k", "(x < 3", &schema()) {
            Err(StatespaceError::Syntax { position, .. }) => assert_eq!(position, 6),
            other => panic!("unexpected {other:?}"),
        }
        assert!(Predicate::parse("k", "x", &schema()).is_err());
        assert!(Predicate::parse("k", "x # 2", &schema()).is_err());
    }

    #[test]
    fn missing_parameter_reported_despite_short_circuit() {
        let p = Predicate::parse("k", "x < 0 | y < 0", &schema()).unwrap();
        assert!(matches!(
            p.eval(&env(&[("x", -1.0)])),
            Err(StatespaceError::MissingParameter(name)) if name == "y"
        ));
    }

    #[test]
    fn negative_and_exponent_literals() {
        let p = Predicate::parse("k", "x > -1.5e1 & x < 2E-1", &schema()).unwrap();
        assert!(p.eval(&env(&[("x", -14.0)])).unwrap());
        assert!(!p.eval(&env(&[("x", 0.3)])).unwrap());
    }
}
