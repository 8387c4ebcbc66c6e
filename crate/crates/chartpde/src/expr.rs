//! Arithmetic expressions over a fixed set of variables: parsing, evaluation,
//! symbolic differentiation and substitution.
//!
//! Expressions define metric components g_ij as functions of the chart
//! coordinates and the nonlinearities f, h as functions of the single
//! variable u. Everything handled here is smooth; there is no absolute
//! value, sign, or piecewise construct.

use std::fmt;
use std::sync::Arc;

use thiserror::Error;

/// Built-in unary functions.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Func {
    Sin,
    Cos,
    Tan,
    Exp,
    Log,
    Sqrt,
    Sinh,
    Cosh,
    Tanh,
    Atan,
}

impl Func {
    fn from_name(name: &str) -> Option<Func> {
        match name {
            "sin" => Some(Func::Sin),
            "cos" => Some(Func::Cos),
            "tan" => Some(Func::Tan),
            "exp" => Some(Func::Exp),
            "log" => Some(Func::Log),
            "sqrt" => Some(Func::Sqrt),
            "sinh" => Some(Func::Sinh),
            "cosh" => Some(Func::Cosh),
            "tanh" => Some(Func::Tanh),
            "atan" => Some(Func::Atan),
            _ => None,
        }
    }

    fn name(self) -> &'static str {
        match self {
            Func::Sin => "sin",
            Func::Cos => "cos",
            Func::Tan => "tan",
            Func::Exp => "exp",
            Func::Log => "log",
            Func::Sqrt => "sqrt",
            Func::Sinh => "sinh",
            Func::Cosh => "cosh",
            Func::Tanh => "tanh",
            Func::Atan => "atan",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
    Div,
    Pow,
}

/// Expression tree node. Variables are indices into the owning
/// [`Expr`]'s variable list.
#[derive(Debug, Clone, PartialEq)]
pub enum Ast {
    Num(f64),
    Var(usize),
    Neg(Box<Ast>),
    Bin(BinOp, Box<Ast>, Box<Ast>),
    App(Func, Box<Ast>),
}

#[derive(Debug, Clone, Error, PartialEq)]
#[error("parse error at offset {offset}: {message}")]
pub struct ParseError {
    pub offset: usize,
    pub message: String,
    /// Hint about what the parser was looking for.
    pub expected: Option<String>,
}

#[derive(Debug, Clone, Error, PartialEq)]
pub enum EvalError {
    #[error("log of nonpositive value {0}")]
    LogDomain(f64),
    #[error("sqrt of negative value {0}")]
    SqrtDomain(f64),
    #[error("division by zero")]
    DivByZero,
    #[error("power {0}^{1} undefined over the reals")]
    PowDomain(f64, f64),
    #[error("expected {expected} bindings, got {got}")]
    MissingBinding { expected: usize, got: usize },
    #[error("evaluation produced a non-finite value")]
    NonFinite,
}

/// A parsed expression together with the ordered variable list it was
/// parsed against. Immutable and cheap to share across threads.
#[derive(Debug, Clone)]
pub struct Expr {
    root: Ast,
    vars: Arc<Vec<String>>,
}

impl Expr {
    pub fn parse(source: &str, vars: &[&str]) -> Result<Expr, ParseError> {
        let vars: Arc<Vec<String>> = Arc::new(vars.iter().map(|s| s.to_string()).collect());
        let mut p = Parser::new(source, &vars)?;
        let root = fold_node(&p.parse_expr(0)?);
        if let Some(tok) = p.peek() {
            return Err(ParseError {
                offset: tok.offset,
                message: "trailing tokens".into(),
                expected: Some("end of input".into()),
            });
        }
        Ok(Expr { root, vars })
    }

    pub fn constant(value: f64, vars: &[&str]) -> Expr {
        Expr {
            root: Ast::Num(value),
            vars: Arc::new(vars.iter().map(|s| s.to_string()).collect()),
        }
    }

    pub fn vars(&self) -> &[String] {
        &self.vars
    }

    pub fn ast(&self) -> &Ast {
        &self.root
    }

    pub fn eval(&self, vals: &[f64]) -> Result<f64, EvalError> {
        if vals.len() != self.vars.len() {
            return Err(EvalError::MissingBinding {
                expected: self.vars.len(),
                got: vals.len(),
            });
        }
        let v = eval_node(&self.root, vals)?;
        if v.is_finite() {
            Ok(v)
        } else {
            Err(EvalError::NonFinite)
        }
    }

    /// Symbolic derivative with respect to `var`, with constant folding.
    pub fn differentiate(&self, var: &str) -> Expr {
        let idx = self.vars.iter().position(|v| v == var);
        let root = match idx {
            Some(i) => diff_node(&self.root, i),
            None => Ast::Num(0.0),
        };
        Expr {
            root,
            vars: self.vars.clone(),
        }
    }

    /// Replace `var` by a numeric literal, folding constants.
    pub fn substitute(&self, var: &str, value: f64) -> Expr {
        let idx = self.vars.iter().position(|v| v == var);
        let root = match idx {
            Some(i) => subst_node(&self.root, i, value),
            None => self.root.clone(),
        };
        Expr {
            root,
            vars: self.vars.clone(),
        }
    }

    /// True when the expression is a literal constant.
    pub fn as_constant(&self) -> Option<f64> {
        match self.root {
            Ast::Num(c) => Some(c),
            _ => None,
        }
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt_node(&self.root, &self.vars, 0, f)
    }
}

// precedence levels: + - (10), * / (20), unary - (25), ^ (30)
fn fmt_node(n: &Ast, vars: &[String], parent_bp: u8, f: &mut fmt::Formatter<'_>) -> fmt::Result {
    let bp = match n {
        Ast::Num(c) if *c < 0.0 => 25,
        Ast::Num(_) | Ast::Var(_) | Ast::App(..) => 40,
        Ast::Neg(_) => 25,
        Ast::Bin(BinOp::Add | BinOp::Sub, ..) => 10,
        Ast::Bin(BinOp::Mul | BinOp::Div, ..) => 20,
        Ast::Bin(BinOp::Pow, ..) => 30,
    };
    let parens = bp < parent_bp;
    if parens {
        write!(f, "(")?;
    }
    match n {
        Ast::Num(c) => write!(f, "{c}")?,
        Ast::Var(i) => write!(f, "{}", vars[*i])?,
        Ast::Neg(a) => {
            write!(f, "-")?;
            fmt_node(a, vars, 26, f)?;
        }
        Ast::App(func, a) => {
            write!(f, "{}(", func.name())?;
            fmt_node(a, vars, 0, f)?;
            write!(f, ")")?;
        }
        Ast::Bin(op, a, b) => {
            let (sym, la, ra) = match op {
                BinOp::Add => ("+", 10, 10),
                BinOp::Sub => ("-", 10, 11),
                BinOp::Mul => ("*", 20, 20),
                BinOp::Div => ("/", 20, 21),
                BinOp::Pow => ("^", 31, 30),
            };
            fmt_node(a, vars, la, f)?;
            write!(f, " {sym} ")?;
            fmt_node(b, vars, ra, f)?;
        }
    }
    if parens {
        write!(f, ")")?;
    }
    Ok(())
}

fn eval_node(n: &Ast, vals: &[f64]) -> Result<f64, EvalError> {
    Ok(match n {
        Ast::Num(c) => *c,
        Ast::Var(i) => vals[*i],
        Ast::Neg(a) => -eval_node(a, vals)?,
        Ast::App(func, a) => {
            let x = eval_node(a, vals)?;
            match func {
                Func::Sin => x.sin(),
                Func::Cos => x.cos(),
                Func::Tan => x.tan(),
                Func::Exp => x.exp(),
                Func::Log => {
                    if x <= 0.0 {
                        return Err(EvalError::LogDomain(x));
                    }
                    x.ln()
                }
                Func::Sqrt => {
                    if x < 0.0 {
                        return Err(EvalError::SqrtDomain(x));
                    }
                    x.sqrt()
                }
                Func::Sinh => x.sinh(),
                Func::Cosh => x.cosh(),
                Func::Tanh => x.tanh(),
                Func::Atan => x.atan(),
            }
        }
        Ast::Bin(op, a, b) => {
            let x = eval_node(a, vals)?;
            let y = eval_node(b, vals)?;
            match op {
                BinOp::Add => x + y,
                BinOp::Sub => x - y,
                BinOp::Mul => x * y,
                BinOp::Div => {
                    if y == 0.0 {
                        return Err(EvalError::DivByZero);
                    }
                    x / y
                }
                BinOp::Pow => pow_checked(x, y)?,
            }
        }
    })
}

fn pow_checked(base: f64, exp: f64) -> Result<f64, EvalError> {
    if base > 0.0 {
        Ok(base.powf(exp))
    } else if base == 0.0 {
        if exp > 0.0 {
            Ok(0.0)
        } else if exp == 0.0 {
            Ok(1.0)
        } else {
            Err(EvalError::DivByZero)
        }
    } else if exp.fract() == 0.0 && exp.abs() < i32::MAX as f64 {
        Ok(base.powi(exp as i32))
    } else {
        Err(EvalError::PowDomain(base, exp))
    }
}

// --- smart constructors with constant folding ---

fn num(c: f64) -> Ast {
    Ast::Num(c)
}

fn add(a: Ast, b: Ast) -> Ast {
    match (&a, &b) {
        (Ast::Num(x), Ast::Num(y)) => num(x + y),
        (Ast::Num(x), _) if *x == 0.0 => b,
        (_, Ast::Num(y)) if *y == 0.0 => a,
        _ => Ast::Bin(BinOp::Add, Box::new(a), Box::new(b)),
    }
}

fn sub(a: Ast, b: Ast) -> Ast {
    match (&a, &b) {
        (Ast::Num(x), Ast::Num(y)) => num(x - y),
        (_, Ast::Num(y)) if *y == 0.0 => a,
        (Ast::Num(x), _) if *x == 0.0 => neg(b),
        _ => Ast::Bin(BinOp::Sub, Box::new(a), Box::new(b)),
    }
}

fn mul(a: Ast, b: Ast) -> Ast {
    match (&a, &b) {
        (Ast::Num(x), Ast::Num(y)) => num(x * y),
        (Ast::Num(x), _) if *x == 0.0 => num(0.0),
        (_, Ast::Num(y)) if *y == 0.0 => num(0.0),
        (Ast::Num(x), _) if *x == 1.0 => b,
        (_, Ast::Num(y)) if *y == 1.0 => a,
        _ => Ast::Bin(BinOp::Mul, Box::new(a), Box::new(b)),
    }
}

fn div(a: Ast, b: Ast) -> Ast {
    match (&a, &b) {
        (Ast::Num(x), Ast::Num(y)) if *y != 0.0 => num(x / y),
        (Ast::Num(x), _) if *x == 0.0 => num(0.0),
        (_, Ast::Num(y)) if *y == 1.0 => a,
        _ => Ast::Bin(BinOp::Div, Box::new(a), Box::new(b)),
    }
}

fn pow(a: Ast, b: Ast) -> Ast {
    match (&a, &b) {
        (Ast::Num(x), Ast::Num(y)) => {
            if let Ok(v) = pow_checked(*x, *y) {
                return num(v);
            }
            Ast::Bin(BinOp::Pow, Box::new(a), Box::new(b))
        }
        (_, Ast::Num(y)) if *y == 0.0 => num(1.0),
        (_, Ast::Num(y)) if *y == 1.0 => a,
        _ => Ast::Bin(BinOp::Pow, Box::new(a), Box::new(b)),
    }
}

fn neg(a: Ast) -> Ast {
    match a {
        Ast::Num(c) => num(-c),
        Ast::Neg(inner) => *inner,
        _ => Ast::Neg(Box::new(a)),
    }
}

fn app(f: Func, a: Ast) -> Ast {
    if let Ast::Num(c) = a {
        let e = Expr {
            root: Ast::App(f, Box::new(num(c))),
            vars: Arc::new(vec![]),
        };
        if let Ok(v) = e.eval(&[]) {
            return num(v);
        }
    }
    Ast::App(f, Box::new(a))
}

fn diff_node(n: &Ast, var: usize) -> Ast {
    match n {
        Ast::Num(_) => num(0.0),
        Ast::Var(i) => num(if *i == var { 1.0 } else { 0.0 }),
        Ast::Neg(a) => neg(diff_node(a, var)),
        Ast::Bin(BinOp::Add, a, b) => add(diff_node(a, var), diff_node(b, var)),
        Ast::Bin(BinOp::Sub, a, b) => sub(diff_node(a, var), diff_node(b, var)),
        Ast::Bin(BinOp::Mul, a, b) => add(
            mul(diff_node(a, var), (**b).clone()),
            mul((**a).clone(), diff_node(b, var)),
        ),
        Ast::Bin(BinOp::Div, a, b) => {
            // (a/b)' = a'/b - a b' / b^2
            sub(
                div(diff_node(a, var), (**b).clone()),
                div(
                    mul((**a).clone(), diff_node(b, var)),
                    pow((**b).clone(), num(2.0)),
                ),
            )
        }
        Ast::Bin(BinOp::Pow, a, b) => {
            let da = diff_node(a, var);
            match **b {
                // x^c -> c x^(c-1) x'
                Ast::Num(c) => mul(mul(num(c), pow((**a).clone(), num(c - 1.0))), da),
                // a^b = exp(b log a); requires a > 0 at evaluation time
                _ => {
                    let db = diff_node(b, var);
                    mul(
                        pow((**a).clone(), (**b).clone()),
                        add(
                            mul(db, app(Func::Log, (**a).clone())),
                            mul((**b).clone(), div(da, (**a).clone())),
                        ),
                    )
                }
            }
        }
        Ast::App(f, a) => {
            let da = diff_node(a, var);
            let x = (**a).clone();
            let outer = match f {
                Func::Sin => app(Func::Cos, x),
                Func::Cos => neg(app(Func::Sin, x)),
                Func::Tan => div(num(1.0), pow(app(Func::Cos, x), num(2.0))),
                Func::Exp => app(Func::Exp, x),
                Func::Log => div(num(1.0), x),
                Func::Sqrt => div(num(1.0), mul(num(2.0), app(Func::Sqrt, x))),
                Func::Sinh => app(Func::Cosh, x),
                Func::Cosh => app(Func::Sinh, x),
                Func::Tanh => sub(num(1.0), pow(app(Func::Tanh, x), num(2.0))),
                Func::Atan => div(num(1.0), add(num(1.0), pow(x, num(2.0)))),
            };
            mul(outer, da)
        }
    }
}

/// Rebuild a tree through the folding constructors.
fn fold_node(n: &Ast) -> Ast {
    match n {
        Ast::Num(c) => num(*c),
        Ast::Var(i) => Ast::Var(*i),
        Ast::Neg(a) => neg(fold_node(a)),
        Ast::Bin(op, a, b) => {
            let (a, b) = (fold_node(a), fold_node(b));
            match op {
                BinOp::Add => add(a, b),
                BinOp::Sub => sub(a, b),
                BinOp::Mul => mul(a, b),
                BinOp::Div => div(a, b),
                BinOp::Pow => pow(a, b),
            }
        }
        Ast::App(f, a) => app(*f, fold_node(a)),
    }
}

fn subst_node(n: &Ast, var: usize, value: f64) -> Ast {
    match n {
        Ast::Num(c) => num(*c),
        Ast::Var(i) if *i == var => num(value),
        Ast::Var(i) => Ast::Var(*i),
        Ast::Neg(a) => neg(subst_node(a, var, value)),
        Ast::Bin(op, a, b) => {
            let a = subst_node(a, var, value);
            let b = subst_node(b, var, value);
            match op {
                BinOp::Add => add(a, b),
                BinOp::Sub => sub(a, b),
                BinOp::Mul => mul(a, b),
                BinOp::Div => div(a, b),
                BinOp::Pow => pow(a, b),
            }
        }
        Ast::App(f, a) => app(*f, subst_node(a, var, value)),
    }
}

// --- lexer and Pratt parser ---

#[derive(Debug, Clone, PartialEq)]
enum TokKind {
    Num(f64),
    Ident(String),
    Plus,
    Minus,
    Star,
    Slash,
    Caret,
    LParen,
    RParen,
}

#[derive(Debug, Clone)]
struct Tok {
    kind: TokKind,
    offset: usize,
}

struct Parser<'a> {
    toks: Vec<Tok>,
    pos: usize,
    end_offset: usize,
    vars: &'a [String],
}

impl<'a> Parser<'a> {
    fn new(source: &str, vars: &'a [String]) -> Result<Parser<'a>, ParseError> {
        let toks = lex(source)?;
        Ok(Parser {
            toks,
            pos: 0,
            end_offset: source.len(),
            vars,
        })
    }

    fn peek(&self) -> Option<&Tok> {
        self.toks.get(self.pos)
    }

    fn next(&mut self) -> Option<Tok> {
        let t = self.toks.get(self.pos).cloned();
        if t.is_some() {
            self.pos += 1;
        }
        t
    }

    fn parse_expr(&mut self, min_bp: u8) -> Result<Ast, ParseError> {
        let mut lhs = self.parse_prefix()?;
        loop {
            let (op, lbp, rbp) = match self.peek().map(|t| &t.kind) {
                Some(TokKind::Plus) => (BinOp::Add, 10, 11),
                Some(TokKind::Minus) => (BinOp::Sub, 10, 11),
                Some(TokKind::Star) => (BinOp::Mul, 20, 21),
                Some(TokKind::Slash) => (BinOp::Div, 20, 21),
                Some(TokKind::Caret) => (BinOp::Pow, 30, 30), // right-associative
                _ => break,
            };
            if lbp < min_bp {
                break;
            }
            self.next();
            let rhs = self.parse_expr(rbp)?;
            lhs = Ast::Bin(op, Box::new(lhs), Box::new(rhs));
        }
        Ok(lhs)
    }

    fn parse_prefix(&mut self) -> Result<Ast, ParseError> {
        let tok = match self.next() {
            Some(t) => t,
            None => {
                return Err(ParseError {
                    offset: self.end_offset,
                    message: "empty operand".into(),
                    expected: Some("number, variable, function or '('".into()),
                })
            }
        };
        match tok.kind {
            TokKind::Num(v) => Ok(Ast::Num(v)),
            TokKind::Minus => {
                // unary minus binds between '*' and '^'
                let inner = self.parse_expr(26)?;
                Ok(Ast::Neg(Box::new(inner)))
            }
            TokKind::LParen => {
                let inner = self.parse_expr(0)?;
                self.expect_rparen(tok.offset)?;
                Ok(inner)
            }
            TokKind::Ident(name) => {
                if let Some(f) = Func::from_name(&name) {
                    let open = match self.next() {
                        Some(Tok {
                            kind: TokKind::LParen,
                            offset,
                        }) => offset,
                        other => {
                            return Err(ParseError {
                                offset: other.map(|t| t.offset).unwrap_or(self.end_offset),
                                message: format!("function '{name}' requires parentheses"),
                                expected: Some("'('".into()),
                            })
                        }
                    };
                    let arg = self.parse_expr(0)?;
                    self.expect_rparen(open)?;
                    Ok(Ast::App(f, Box::new(arg)))
                } else if let Some(i) = self.vars.iter().position(|v| *v == name) {
                    Ok(Ast::Var(i))
                } else {
                    Err(ParseError {
                        offset: tok.offset,
                        message: format!("unknown identifier '{name}'"),
                        expected: Some(format!("one of the declared variables {:?}", self.vars)),
                    })
                }
            }
            TokKind::RParen => Err(ParseError {
                offset: tok.offset,
                message: "unbalanced parentheses".into(),
                expected: Some("expression".into()),
            }),
            _ => Err(ParseError {
                offset: tok.offset,
                message: "empty operand".into(),
                expected: Some("number, variable, function or '('".into()),
            }),
        }
    }

    fn expect_rparen(&mut self, open_offset: usize) -> Result<(), ParseError> {
        match self.next() {
            Some(Tok {
                kind: TokKind::RParen,
                ..
            }) => Ok(()),
            Some(t) => Err(ParseError {
                offset: t.offset,
                message: "expected ')'".into(),
                expected: Some("')'".into()),
            }),
            None => Err(ParseError {
                offset: self.end_offset,
                message: format!("unbalanced parentheses (opened at offset {open_offset})"),
                expected: Some("')'".into()),
            }),
        }
    }
}

fn lex(source: &str) -> Result<Vec<Tok>, ParseError> {
    let bytes = source.as_bytes();
    let mut toks = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        let c = bytes[i] as char;
        let offset = i;
        match c {
            ' ' | '\t' | '\n' | '\r' => {
                i += 1;
            }
            '+' => {
                toks.push(Tok {
                    kind: TokKind::Plus,
                    offset,
                });
                i += 1;
            }
            '-' => {
                toks.push(Tok {
                    kind: TokKind::Minus,
                    offset,
                });
                i += 1;
            }
            '*' => {
                toks.push(Tok {
                    kind: TokKind::Star,
                    offset,
                });
                i += 1;
            }
            '/' => {
                toks.push(Tok {
                    kind: TokKind::Slash,
                    offset,
                });
                i += 1;
            }
            '^' => {
                toks.push(Tok {
                    kind: TokKind::Caret,
                    offset,
                });
                i += 1;
            }
            '(' => {
                toks.push(Tok {
                    kind: TokKind::LParen,
                    offset,
                });
                i += 1;
            }
            ')' => {
                toks.push(Tok {
                    kind: TokKind::RParen,
                    offset,
                });
                i += 1;
            }
            '0'..='9' | '.' => {
                let start = i;
                while i < bytes.len() && (bytes[i].is_ascii_digit() || bytes[i] == b'.') {
                    i += 1;
                }
                // exponent part
                if i < bytes.len() && (bytes[i] == b'e' || bytes[i] == b'E') {
                    let mut j = i + 1;
                    if j < bytes.len() && (bytes[j] == b'+' || bytes[j] == b'-') {
                        j += 1;
                    }
                    if j < bytes.len() && bytes[j].is_ascii_digit() {
                        i = j;
                        while i < bytes.len() && bytes[i].is_ascii_digit() {
                            i += 1;
                        }
                    }
                }
                let text = &source[start..i];
                let v: f64 = text.parse().map_err(|_| ParseError {
                    offset: start,
                    message: format!("malformed number '{text}'"),
                    expected: Some("numeric literal".into()),
                })?;
                toks.push(Tok {
                    kind: TokKind::Num(v),
                    offset: start,
                });
            }
            c if c.is_ascii_alphabetic() || c == '_' => {
                let start = i;
                while i < bytes.len()
                    && ((bytes[i] as char).is_ascii_alphanumeric() || bytes[i] == b'_')
                {
                    i += 1;
                }
                toks.push(Tok {
                    kind: TokKind::Ident(source[start..i].to_string()),
                    offset: start,
                });
            }
            _ => {
                return Err(ParseError {
                    offset,
                    message: format!("unexpected character '{c}'"),
                    expected: None,
                })
            }
        }
    }
    Ok(toks)
}
