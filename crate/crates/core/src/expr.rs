//! Expression trees for objective and constraint functions.
//!
//! Text is parsed against an ordered list of variable names; variables are
//! stored by index. Values and exact first derivatives come from a single
//! forward-mode sweep over the tree.
//!
//! Grammar (lowest to highest precedence):
//!
//! ```text
//! expr    := term   (('+' | '-') term)*
//! term    := unary  (('*' | '/') unary)*
//! unary   := ('-' | '+') unary | power
//! power   := primary ('^' unary)?          right-associative
//! primary := number | name | func '(' expr ')' | '(' expr ')'
//! func    := sin | cos | exp | log | sqrt
//! ```
//!
//! `^` binds tighter than unary minus, so `-x^2` reads as `-(x^2)`.

use std::fmt;

use thiserror::Error;

/// Dense vector of partial derivatives, one entry per problem variable.
pub type Gradient = Vec<f64>;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
    Div,
    Pow,
}

impl BinOp {
    fn symbol(self) -> &'static str {
        match self {
            BinOp::Add => "+",
            BinOp::Sub => "-",
            BinOp::Mul => "*",
            BinOp::Div => "/",
            BinOp::Pow => "^",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Func {
    Sin,
    Cos,
    Exp,
    Log,
    Sqrt,
}

impl Func {
    pub fn from_name(name: &str) -> Option<Func> {
        match name {
            "sin" => Some(Func::Sin),
            "cos" => Some(Func::Cos),
            "exp" => Some(Func::Exp),
            "log" => Some(Func::Log),
            "sqrt" => Some(Func::Sqrt),
            _ => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Func::Sin => "sin",
            Func::Cos => "cos",
            Func::Exp => "exp",
            Func::Log => "log",
            Func::Sqrt => "sqrt",
        }
    }
}

/// Syntax tree of a smooth scalar function of the problem variables.
#[derive(Debug, Clone, PartialEq)]
pub enum Expression {
    Const(f64),
    Var(usize),
    Neg(Box<Expression>),
    Binary(BinOp, Box<Expression>, Box<Expression>),
    Call(Func, Box<Expression>),
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ParseError {
    #[error("unexpected character '{ch}' at offset {offset}")]
    Lexical { ch: char, offset: usize },
    #[error("malformed number '{text}' at offset {offset}")]
    BadNumber { text: String, offset: usize },
    #[error("unknown identifier '{name}' at offset {offset}")]
    UnknownIdentifier { name: String, offset: usize },
    #[error("'{name}' takes exactly one argument (offset {offset})")]
    Arity { name: String, offset: usize },
    #[error("unbalanced parenthesis at offset {offset}")]
    UnbalancedParens { offset: usize },
    #[error("unexpected {found} at offset {offset}")]
    Unexpected { found: String, offset: usize },
}

impl ParseError {
    pub fn offset(&self) -> usize {
        match self {
            ParseError::Lexical { offset, .. }
            | ParseError::BadNumber { offset, .. }
            | ParseError::UnknownIdentifier { offset, .. }
            | ParseError::Arity { offset, .. }
            | ParseError::UnbalancedParens { offset }
            | ParseError::Unexpected { offset, .. } => *offset,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EvalError {
    #[error("log of non-positive argument {0}")]
    LogDomain(f64),
    #[error("sqrt of negative argument {0}")]
    SqrtDomain(f64),
    #[error("division by zero")]
    DivisionByZero,
    #[error("power {base}^{exponent} is undefined")]
    PowDomain { base: f64, exponent: f64 },
    #[error("non-finite intermediate value")]
    NonFinite,
    #[error("variable index {index} out of range for a point of length {len}")]
    Dimension { index: usize, len: usize },
}

impl Expression {
    pub fn constant(value: f64) -> Self {
        Expression::Const(value)
    }

    pub fn var(index: usize) -> Self {
        Expression::Var(index)
    }

    pub fn binary(op: BinOp, lhs: Expression, rhs: Expression) -> Self {
        Expression::Binary(op, Box::new(lhs), Box::new(rhs))
    }

    pub fn add(lhs: Expression, rhs: Expression) -> Self {
        Self::binary(BinOp::Add, lhs, rhs)
    }

    pub fn sub(lhs: Expression, rhs: Expression) -> Self {
        Self::binary(BinOp::Sub, lhs, rhs)
    }

    pub fn mul(lhs: Expression, rhs: Expression) -> Self {
        Self::binary(BinOp::Mul, lhs, rhs)
    }

    pub fn neg(inner: Expression) -> Self {
        Expression::Neg(Box::new(inner))
    }

    /// Sum of the given terms; the empty sum is the constant 0.
    pub fn sum<I: IntoIterator<Item = Expression>>(terms: I) -> Self {
        terms
            .into_iter()
            .reduce(Expression::add)
            .unwrap_or(Expression::Const(0.0))
    }

    /// Largest variable index referenced, if any.
    pub fn max_var(&self) -> Option<usize> {
        match self {
            Expression::Const(_) => None,
            Expression::Var(i) => Some(*i),
            Expression::Neg(e) | Expression::Call(_, e) => e.max_var(),
            Expression::Binary(_, a, b) => match (a.max_var(), b.max_var()) {
                (Some(x), Some(y)) => Some(x.max(y)),
                (x, y) => x.or(y),
            },
        }
    }

    /// True iff every referenced variable index is below `nvars`.
    pub fn references_within(&self, nvars: usize) -> bool {
        self.max_var().map_or(true, |m| m < nvars)
    }

    pub fn eval(&self, x: &[f64]) -> Result<f64, EvalError> {
        let v = match self {
            Expression::Const(c) => *c,
            Expression::Var(i) => *x.get(*i).ok_or(EvalError::Dimension {
                index: *i,
                len: x.len(),
            })?,
            Expression::Neg(e) => -e.eval(x)?,
            Expression::Binary(op, a, b) => {
                let a = a.eval(x)?;
                let b = b.eval(x)?;
                apply_binary(*op, a, b)?
            }
            Expression::Call(f, e) => apply_func(*f, e.eval(x)?)?,
        };
        if v.is_finite() {
            Ok(v)
        } else {
            Err(EvalError::NonFinite)
        }
    }

    pub fn grad(&self, x: &[f64]) -> Result<Gradient, EvalError> {
        Ok(self.eval_grad(x)?.1)
    }

    /// Value and gradient from one forward-mode sweep.
    pub fn eval_grad(&self, x: &[f64]) -> Result<(f64, Gradient), EvalError> {
        let d = self.forward(x)?;
        Ok((d.value, d.deriv))
    }

    fn forward(&self, x: &[f64]) -> Result<Dual, EvalError> {
        let n = x.len();
        let out = match self {
            Expression::Const(c) => Dual::constant(*c, n),
            Expression::Var(i) => {
                let value = *x.get(*i).ok_or(EvalError::Dimension { index: *i, len: n })?;
                let mut deriv = vec![0.0; n];
                deriv[*i] = 1.0;
                Dual { value, deriv }
            }
            Expression::Neg(e) => {
                let mut d = e.forward(x)?;
                d.value = -d.value;
                d.deriv.iter_mut().for_each(|g| *g = -*g);
                d
            }
            Expression::Binary(op, a, b) => {
                let a = a.forward(x)?;
                let b = b.forward(x)?;
                forward_binary(*op, a, b)?
            }
            Expression::Call(f, e) => {
                let inner = e.forward(x)?;
                let value = apply_func(*f, inner.value)?;
                let slope = match f {
                    Func::Sin => inner.value.cos(),
                    Func::Cos => -inner.value.sin(),
                    Func::Exp => value,
                    Func::Log => 1.0 / inner.value,
                    Func::Sqrt => 0.5 / value,
                };
                inner.chain(value, slope)
            }
        };
        if out.value.is_finite() && out.deriv.iter().all(|g| g.is_finite()) {
            Ok(out)
        } else {
            Err(EvalError::NonFinite)
        }
    }

    /// Fully parenthesized text that parses back to an evaluation-identical tree.
    pub fn to_text(&self, names: &[String]) -> String {
        let mut s = String::new();
        self.write_text(names, &mut s);
        s
    }

    fn write_text(&self, names: &[String], out: &mut String) {
        match self {
            Expression::Const(c) => {
                if *c < 0.0 {
                    out.push_str(&format!("(-{:?})", -c));
                } else {
                    out.push_str(&format!("{:?}", c));
                }
            }
            Expression::Var(i) => match names.get(*i) {
                Some(n) => out.push_str(n),
                None => out.push_str(&format!("<var{}>", i)),
            },
            Expression::Neg(e) => {
                out.push_str("(-");
                e.write_text(names, out);
                out.push(')');
            }
            Expression::Binary(op, a, b) => {
                out.push('(');
                a.write_text(names, out);
                out.push(' ');
                out.push_str(op.symbol());
                out.push(' ');
                b.write_text(names, out);
                out.push(')');
            }
            Expression::Call(f, e) => {
                out.push_str(f.name());
                out.push('(');
                e.write_text(names, out);
                out.push(')');
            }
        }
    }
}

impl fmt::Display for Expression {
    /// Renders variables positionally as `x[i]`; use [`Expression::to_text`] for round trips.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let names: Vec<String> = (0..=self.max_var().unwrap_or(0))
            .map(|i| format!("x[{}]", i))
            .collect();
        f.write_str(&self.to_text(&names))
    }
}

fn apply_binary(op: BinOp, a: f64, b: f64) -> Result<f64, EvalError> {
    match op {
        BinOp::Add => Ok(a + b),
        BinOp::Sub => Ok(a - b),
        BinOp::Mul => Ok(a * b),
        BinOp::Div => {
            if b == 0.0 {
                Err(EvalError::DivisionByZero)
            } else {
                Ok(a / b)
            }
        }
        BinOp::Pow => power(a, b),
    }
}

fn power(base: f64, exponent: f64) -> Result<f64, EvalError> {
    if base == 0.0 && exponent < 0.0 {
        return Err(EvalError::DivisionByZero);
    }
    if base < 0.0 && exponent.fract() != 0.0 {
        return Err(EvalError::PowDomain { base, exponent });
    }
    Ok(base.powf(exponent))
}

fn apply_func(f: Func, a: f64) -> Result<f64, EvalError> {
    match f {
        Func::Sin => Ok(a.sin()),
        Func::Cos => Ok(a.cos()),
        Func::Exp => Ok(a.exp()),
        Func::Log => {
            if a > 0.0 {
                Ok(a.ln())
            } else {
                Err(EvalError::LogDomain(a))
            }
        }
        Func::Sqrt => {
            if a >= 0.0 {
                Ok(a.sqrt())
            } else {
                Err(EvalError::SqrtDomain(a))
            }
        }
    }
}

#[derive(Debug, Clone)]
struct Dual {
    value: f64,
    deriv: Vec<f64>,
}

impl Dual {
    fn constant(value: f64, n: usize) -> Self {
        Dual {
            value,
            deriv: vec![0.0; n],
        }
    }

    fn is_constant(&self) -> bool {
        self.deriv.iter().all(|g| *g == 0.0)
    }

    fn chain(mut self, value: f64, slope: f64) -> Self {
        self.value = value;
        self.deriv.iter_mut().for_each(|g| *g *= slope);
        self
    }
}

fn forward_binary(op: BinOp, mut a: Dual, b: Dual) -> Result<Dual, EvalError> {
    let value = apply_binary(op, a.value, b.value)?;
    match op {
        BinOp::Add => {
            for (x, y) in a.deriv.iter_mut().zip(&b.deriv) {
                *x += y;
            }
        }
        BinOp::Sub => {
            for (x, y) in a.deriv.iter_mut().zip(&b.deriv) {
                *x -= y;
            }
        }
        BinOp::Mul => {
            for (x, y) in a.deriv.iter_mut().zip(&b.deriv) {
                *x = *x * b.value + a.value * y;
            }
        }
        BinOp::Div => {
            let inv = 1.0 / b.value;
            for (x, y) in a.deriv.iter_mut().zip(&b.deriv) {
                *x = (*x - value * y) * inv;
            }
        }
        BinOp::Pow => {
            if b.is_constant() {
                // d(u^c) = c u^(c-1) du
                let slope = if b.value == 0.0 {
                    0.0
                } else {
                    b.value * power(a.value, b.value - 1.0)?
                };
                a.deriv.iter_mut().for_each(|x| *x *= slope);
            } else {
                if a.value <= 0.0 {
                    return Err(EvalError::PowDomain {
                        base: a.value,
                        exponent: b.value,
                    });
                }
                // d(u^v) = u^v (v' ln u + v u'/u)
                let ln = a.value.ln();
                for (x, y) in a.deriv.iter_mut().zip(&b.deriv) {
                    *x = value * (y * ln + b.value * *x / a.value);
                }
            }
        }
    }
    a.value = value;
    Ok(a)
}

// ---------------------------------------------------------------------------
// Lexer / parser

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Num(f64),
    Ident(String),
    Op(char),
    LParen,
    RParen,
    Comma,
}

#[derive(Debug, Clone)]
struct Token {
    tok: Tok,
    offset: usize,
}

fn lex(text: &str) -> Result<Vec<Token>, ParseError> {
    let chars: Vec<char> = text.chars().collect();
    let mut out = Vec::new();
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        if c.is_whitespace() {
            i += 1;
            continue;
        }
        let start = i;
        let tok = match c {
            '+' | '-' | '*' | '/' | '^' => {
                i += 1;
                Tok::Op(c)
            }
            '(' => {
                i += 1;
                Tok::LParen
            }
            ')' => {
                i += 1;
                Tok::RParen
            }
            ',' => {
                i += 1;
                Tok::Comma
            }
            c if c.is_ascii_digit() || c == '.' => {
                while i < chars.len() && (chars[i].is_ascii_digit() || chars[i] == '.') {
                    i += 1;
                }
                if i < chars.len() && (chars[i] == 'e' || chars[i] == 'E') {
                    let mut j = i + 1;
                    if j < chars.len() && (chars[j] == '+' || chars[j] == '-') {
                        j += 1;
                    }
                    if j < chars.len() && chars[j].is_ascii_digit() {
                        while j < chars.len() && chars[j].is_ascii_digit() {
                            j += 1;
                        }
                        i = j;
                    }
                }
                let s: String = chars[start..i].iter().collect();
                let v = s.parse::<f64>().map_err(|_| ParseError::BadNumber {
                    text: s.clone(),
                    offset: start,
                })?;
                Tok::Num(v)
            }
            c if c.is_ascii_alphabetic() || c == '_' => {
                while i < chars.len() && (chars[i].is_ascii_alphanumeric() || chars[i] == '_') {
                    i += 1;
                }
                Tok::Ident(chars[start..i].iter().collect())
            }
            other => {
                return Err(ParseError::Lexical {
                    ch: other,
                    offset: start,
                })
            }
        };
        out.push(Token { tok, offset: start });
    }
    Ok(out)
}

struct Parser<'a> {
    tokens: Vec<Token>,
    pos: usize,
    end: usize,
    names: &'a [String],
}

impl Parser<'_> {
    fn peek(&self) -> Option<&Tok> {
        self.tokens.get(self.pos).map(|t| &t.tok)
    }

    fn offset(&self) -> usize {
        self.tokens.get(self.pos).map_or(self.end, |t| t.offset)
    }

    fn unexpected(&self) -> ParseError {
        match self.tokens.get(self.pos) {
            Some(Token {
                tok: Tok::RParen,
                offset,
            }) => ParseError::UnbalancedParens { offset: *offset },
            Some(t) => ParseError::Unexpected {
                found: format!("{:?}", t.tok),
                offset: t.offset,
            },
            None => ParseError::Unexpected {
                found: "end of input".into(),
                offset: self.end,
            },
        }
    }

    fn expr(&mut self) -> Result<Expression, ParseError> {
        let mut lhs = self.term()?;
        while let Some(Tok::Op(c @ ('+' | '-'))) = self.peek() {
            let op = if *c == '+' { BinOp::Add } else { BinOp::Sub };
            self.pos += 1;
            let rhs = self.term()?;
            lhs = Expression::binary(op, lhs, rhs);
        }
        Ok(lhs)
    }

    fn term(&mut self) -> Result<Expression, ParseError> {
        let mut lhs = self.unary()?;
        while let Some(Tok::Op(c @ ('*' | '/'))) = self.peek() {
            let op = if *c == '*' { BinOp::Mul } else { BinOp::Div };
            self.pos += 1;
            let rhs = self.unary()?;
            lhs = Expression::binary(op, lhs, rhs);
        }
        Ok(lhs)
    }

    fn unary(&mut self) -> Result<Expression, ParseError> {
        match self.peek() {
            Some(Tok::Op('-')) => {
                self.pos += 1;
                Ok(Expression::neg(self.unary()?))
            }
            Some(Tok::Op('+')) => {
                self.pos += 1;
                self.unary()
            }
            _ => self.power(),
        }
    }

    fn power(&mut self) -> Result<Expression, ParseError> {
        let base = self.primary()?;
        if let Some(Tok::Op('^')) = self.peek() {
            self.pos += 1;
            let exponent = self.unary()?;
            return Ok(Expression::binary(BinOp::Pow, base, exponent));
        }
        Ok(base)
    }

    fn primary(&mut self) -> Result<Expression, ParseError> {
        let offset = self.offset();
        match self.peek().cloned() {
            Some(Tok::Num(v)) => {
                self.pos += 1;
                Ok(Expression::Const(v))
            }
            Some(Tok::LParen) => {
                self.pos += 1;
                let inner = self.expr()?;
                self.close_paren(offset)?;
                Ok(inner)
            }
            Some(Tok::Ident(name)) => {
                self.pos += 1;
                if let Some(func) = Func::from_name(&name) {
                    if self.peek() != Some(&Tok::LParen) {
                        return Err(ParseError::Arity { name, offset });
                    }
                    let open = self.offset();
                    self.pos += 1;
                    if self.peek() == Some(&Tok::RParen) {
                        return Err(ParseError::Arity { name, offset });
                    }
                    let arg = self.expr()?;
                    if self.peek() == Some(&Tok::Comma) {
                        return Err(ParseError::Arity { name, offset });
                    }
                    self.close_paren(open)?;
                    return Ok(Expression::Call(func, Box::new(arg)));
                }
                match self.names.iter().position(|n| *n == name) {
                    Some(i) => Ok(Expression::Var(i)),
                    None => Err(ParseError::UnknownIdentifier { name, offset }),
                }
            }
            _ => Err(self.unexpected()),
        }
    }

    fn close_paren(&mut self, open: usize) -> Result<(), ParseError> {
        match self.peek() {
            Some(Tok::RParen) => {
                self.pos += 1;
                Ok(())
            }
            None => Err(ParseError::UnbalancedParens { offset: open }),
            _ => Err(self.unexpected()),
        }
    }
}

/// Parses `text` against the ordered `variable_names`.
pub fn parse_expression(text: &str, variable_names: &[String]) -> Result<Expression, ParseError> {
    let tokens = lex(text)?;
    let mut p = Parser {
        tokens,
        pos: 0,
        end: text.chars().count(),
        names: variable_names,
    };
    let e = p.expr()?;
    if p.pos < p.tokens.len() {
        return Err(p.unexpected());
    }
    Ok(e)
}
