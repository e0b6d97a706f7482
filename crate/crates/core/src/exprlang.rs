//! Scalar expressions of one real variable `x`, used to specify drift and
//! diffusion coefficients.
//!
//! Grammar (highest precedence first):
//!
//! ```text
//! primary := number | x | pi | e | func '(' expr ')' | '(' expr ')'
//! power   := primary [ '^' unary ]          (right associative)
//! unary   := ('-' | '+') unary | power
//! term    := unary { ('*' | '/') unary }
//! expr    := term { ('+' | '-') term }
//! func    := exp | log | sqrt | tanh | sin | cos | abs
//! ```
//!
//! So `-x^2` is `-(x^2)` and `2^-x` is `2^(-x)`. A power whose exponent
//! evaluates to an integer is computed by repeated squaring; otherwise
//! `powf` is used, which yields NaN for a negative base.

use std::fmt;

use thiserror::Error;

use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
    Div,
    Pow,
}

impl BinOp {
    fn symbol(self) -> char {
        match self {
            BinOp::Add => '+',
            BinOp::Sub => '-',
            BinOp::Mul => '*',
            BinOp::Div => '/',
            BinOp::Pow => '^',
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Func {
    Exp,
    Log,
    Sqrt,
    Tanh,
    Sin,
    Cos,
    Abs,
}

impl Func {
    fn from_name(name: &str) -> Option<Self> {
        Some(match name {
            "exp" => Func::Exp,
            "log" => Func::Log,
            "sqrt" => Func::Sqrt,
            "tanh" => Func::Tanh,
            "sin" => Func::Sin,
            "cos" => Func::Cos,
            "abs" => Func::Abs,
            _ => return None,
        })
    }

    pub fn name(self) -> &'static str {
        match self {
            Func::Exp => "exp",
            Func::Log => "log",
            Func::Sqrt => "sqrt",
            Func::Tanh => "tanh",
            Func::Sin => "sin",
            Func::Cos => "cos",
            Func::Abs => "abs",
        }
    }

    #[inline]
    fn apply<T: Scalar>(self, v: T) -> T {
        match self {
            Func::Exp => v.exp(),
            Func::Log => v.ln(),
            Func::Sqrt => v.sqrt(),
            Func::Tanh => v.tanh(),
            Func::Sin => v.sin(),
            Func::Cos => v.cos(),
            Func::Abs => v.abs(),
        }
    }
}

/// Expression tree. Literals are kept as `f64` and converted on evaluation.
#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Const(f64),
    Var,
    Neg(Box<Expr>),
    Bin(BinOp, Box<Expr>, Box<Expr>),
    Call(Func, Box<Expr>),
}

impl Expr {
    pub fn eval<T: Scalar>(&self, x: T) -> T {
        match self {
            Expr::Const(c) => T::lit(*c),
            Expr::Var => x,
            Expr::Neg(a) => -a.eval(x),
            Expr::Bin(op, a, b) => {
                let l = a.eval(x);
                let r = b.eval(x);
                match op {
                    BinOp::Add => l + r,
                    BinOp::Sub => l - r,
                    BinOp::Mul => l * r,
                    BinOp::Div => l / r,
                    BinOp::Pow => pow(l, r),
                }
            }
            Expr::Call(f, a) => f.apply(a.eval(x)),
        }
    }

    fn is_constant(&self) -> bool {
        match self {
            Expr::Const(_) => true,
            Expr::Var => false,
            Expr::Neg(a) | Expr::Call(_, a) => a.is_constant(),
            Expr::Bin(_, a, b) => a.is_constant() && b.is_constant(),
        }
    }
}

fn pow<T: Scalar>(base: T, exponent: T) -> T {
    const MAX_INT_EXP: f64 = 1_048_576.0;
    if exponent.fract() == T::zero() && exponent.abs() <= T::lit(MAX_INT_EXP) {
        let n = exponent.abs().to_u64().unwrap_or(0);
        let p = powu(base, n);
        if exponent < T::zero() {
            T::one() / p
        } else {
            p
        }
    } else {
        base.powf(exponent)
    }
}

fn powu<T: Scalar>(mut base: T, mut n: u64) -> T {
    let mut acc = T::one();
    while n > 0 {
        if n & 1 == 1 {
            acc = acc * base;
        }
        n >>= 1;
        if n > 0 {
            base = base * base;
        }
    }
    acc
}

/// Fully parenthesized rendering; re-parsing it yields an identical tree.
impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Expr::Const(c) if c.is_sign_negative() => write!(f, "(-{})", -c),
            Expr::Const(c) => write!(f, "{c}"),
            Expr::Var => f.write_str("x"),
            Expr::Neg(a) => write!(f, "(-{a})"),
            Expr::Bin(op, a, b) => write!(f, "({a} {} {b})", op.symbol()),
            Expr::Call(func, a) => write!(f, "{}({a})", func.name()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ParseErrorKind {
    EmptyInput,
    UnexpectedChar(char),
    InvalidNumber(String),
    UnknownIdentifier(String),
    UnbalancedParenthesis,
    ExpectedOperand,
    ExpectedCallParenthesis(String),
    TrailingInput,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("{kind} at offset {offset}")]
pub struct ParseError {
    pub kind: ParseErrorKind,
    /// Byte offset into the source text.
    pub offset: usize,
}

impl fmt::Display for ParseErrorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ParseErrorKind::EmptyInput => f.write_str("empty expression"),
            ParseErrorKind::UnexpectedChar(c) => write!(f, "unexpected character '{c}'"),
            ParseErrorKind::InvalidNumber(s) => write!(f, "invalid number '{s}'"),
            ParseErrorKind::UnknownIdentifier(s) => write!(f, "unknown identifier '{s}'"),
            ParseErrorKind::UnbalancedParenthesis => f.write_str("unbalanced parenthesis"),
            ParseErrorKind::ExpectedOperand => f.write_str("expected operand"),
            ParseErrorKind::ExpectedCallParenthesis(name) => {
                write!(f, "expected '(' after function '{name}'")
            }
            ParseErrorKind::TrailingInput => f.write_str("unexpected trailing input"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Token {
    Num(f64),
    Ident(String),
    Op(char),
    LParen,
    RParen,
    End,
}

struct Lexer<'a> {
    src: &'a str,
    pos: usize,
}

impl<'a> Lexer<'a> {
    fn tokenize(src: &'a str) -> Result<Vec<(Token, usize)>, ParseError> {
        let mut lx = Lexer { src, pos: 0 };
        let mut out = Vec::new();
        loop {
            let (tok, at) = lx.next_token()?;
            let end = tok == Token::End;
            out.push((tok, at));
            if end {
                return Ok(out);
            }
        }
    }

    fn peek(&self) -> Option<char> {
        self.src[self.pos..].chars().next()
    }

    fn next_token(&mut self) -> Result<(Token, usize), ParseError> {
        while let Some(c) = self.peek() {
            if c.is_whitespace() {
                self.pos += c.len_utf8();
            } else {
                break;
            }
        }
        let start = self.pos;
        let Some(c) = self.peek() else {
            return Ok((Token::End, start));
        };
        let tok = match c {
            '0'..='9' | '.' => self.number()?,
            'a'..='z' | 'A'..='Z' | '_' => {
                while matches!(self.peek(), Some(c) if c.is_ascii_alphanumeric() || c == '_') {
                    self.pos += 1;
                }
                Token::Ident(self.src[start..self.pos].to_string())
            }
            '+' | '-' | '*' | '/' | '^' => {
                self.pos += 1;
                Token::Op(c)
            }
            '(' => {
                self.pos += 1;
                Token::LParen
            }
            ')' => {
                self.pos += 1;
                Token::RParen
            }
            other => {
                return Err(ParseError {
                    kind: ParseErrorKind::UnexpectedChar(other),
                    offset: start,
                })
            }
        };
        Ok((tok, start))
    }

    fn number(&mut self) -> Result<Token, ParseError> {
        let start = self.pos;
        let bytes = self.src.as_bytes();
        let digits = |p: &mut usize| {
            while *p < bytes.len() && bytes[*p].is_ascii_digit() {
                *p += 1;
            }
        };
        let mut p = self.pos;
        digits(&mut p);
        if p < bytes.len() && bytes[p] == b'.' {
            p += 1;
            digits(&mut p);
        }
        // Exponent only when followed by digits, so `2e` is not swallowed.
        if p < bytes.len() && (bytes[p] == b'e' || bytes[p] == b'E') {
            let mut q = p + 1;
            if q < bytes.len() && (bytes[q] == b'+' || bytes[q] == b'-') {
                q += 1;
            }
            if q < bytes.len() && bytes[q].is_ascii_digit() {
                p = q;
                digits(&mut p);
            }
        }
        self.pos = p;
        let text = &self.src[start..p];
        match text.parse::<f64>() {
            Ok(v) if v.is_finite() => Ok(Token::Num(v)),
            _ => Err(ParseError {
                kind: ParseErrorKind::InvalidNumber(text.to_string()),
                offset: start,
            }),
        }
    }
}

struct Parser {
    tokens: Vec<(Token, usize)>,
    idx: usize,
    depth: usize,
}

impl Parser {
    fn peek(&self) -> &Token {
        &self.tokens[self.idx].0
    }

    fn offset(&self) -> usize {
        self.tokens[self.idx].1
    }

    fn bump(&mut self) -> Token {
        let t = self.tokens[self.idx].0.clone();
        if self.idx + 1 < self.tokens.len() {
            self.idx += 1;
        }
        t
    }

    fn err(&self, kind: ParseErrorKind) -> ParseError {
        ParseError {
            kind,
            offset: self.offset(),
        }
    }

    fn expr(&mut self) -> Result<Expr, ParseError> {
        let mut lhs = self.term()?;
        loop {
            let op = match self.peek() {
                Token::Op('+') => BinOp::Add,
                Token::Op('-') => BinOp::Sub,
                _ => return Ok(lhs),
            };
            self.bump();
            let rhs = self.term()?;
            lhs = Expr::Bin(op, Box::new(lhs), Box::new(rhs));
        }
    }

    fn term(&mut self) -> Result<Expr, ParseError> {
        let mut lhs = self.unary()?;
        loop {
            let op = match self.peek() {
                Token::Op('*') => BinOp::Mul,
                Token::Op('/') => BinOp::Div,
                _ => return Ok(lhs),
            };
            self.bump();
            let rhs = self.unary()?;
            lhs = Expr::Bin(op, Box::new(lhs), Box::new(rhs));
        }
    }

    fn unary(&mut self) -> Result<Expr, ParseError> {
        match self.peek() {
            Token::Op('-') => {
                self.bump();
                Ok(Expr::Neg(Box::new(self.unary()?)))
            }
            Token::Op('+') => {
                self.bump();
                self.unary()
            }
            _ => self.power(),
        }
    }

    fn power(&mut self) -> Result<Expr, ParseError> {
        let base = self.primary()?;
        if matches!(self.peek(), Token::Op('^')) {
            self.bump();
            let exponent = self.unary()?;
            return Ok(Expr::Bin(BinOp::Pow, Box::new(base), Box::new(exponent)));
        }
        Ok(base)
    }

    fn primary(&mut self) -> Result<Expr, ParseError> {
        let at = self.offset();
        match self.bump() {
            Token::Num(v) => Ok(Expr::Const(v)),
            Token::Ident(name) => match name.as_str() {
                "x" => Ok(Expr::Var),
                "pi" => Ok(Expr::Const(std::f64::consts::PI)),
                "e" => Ok(Expr::Const(std::f64::consts::E)),
                _ => {
                    let Some(func) = Func::from_name(&name) else {
                        return Err(ParseError {
                            kind: ParseErrorKind::UnknownIdentifier(name),
                            offset: at,
                        });
                    };
                    if *self.peek() != Token::LParen {
                        return Err(self.err(ParseErrorKind::ExpectedCallParenthesis(name)));
                    }
                    self.bump();
                    let arg = self.nested()?;
                    Ok(Expr::Call(func, Box::new(arg)))
                }
            },
            Token::LParen => self.nested(),
            Token::RParen => Err(ParseError {
                kind: ParseErrorKind::UnbalancedParenthesis,
                offset: at,
            }),
            Token::End | Token::Op(_) => Err(ParseError {
                kind: ParseErrorKind::ExpectedOperand,
                offset: at,
            }),
        }
    }

    /// Parses `expr ')'` after an opening parenthesis has been consumed.
    fn nested(&mut self) -> Result<Expr, ParseError> {
        const MAX_DEPTH: usize = 256;
        self.depth += 1;
        if self.depth > MAX_DEPTH {
            return Err(self.err(ParseErrorKind::UnbalancedParenthesis));
        }
        let inner = self.expr()?;
        if *self.peek() != Token::RParen {
            return Err(self.err(ParseErrorKind::UnbalancedParenthesis));
        }
        self.bump();
        self.depth -= 1;
        Ok(inner)
    }
}

/// A parsed scalar function of `x`. Immutable once built.
#[derive(Debug, Clone, PartialEq)]
pub struct FunctionExpr {
    ast: Expr,
    source: String,
}

impl FunctionExpr {
    pub fn parse(source: &str) -> Result<Self, ParseError> {
        if source.trim().is_empty() {
            return Err(ParseError {
                kind: ParseErrorKind::EmptyInput,
                offset: 0,
            });
        }
        let tokens = Lexer::tokenize(source)?;
        let mut parser = Parser {
            tokens,
            idx: 0,
            depth: 0,
        };
        let ast = parser.expr()?;
        match parser.peek() {
            Token::End => {}
            Token::RParen => return Err(parser.err(ParseErrorKind::UnbalancedParenthesis)),
            _ => return Err(parser.err(ParseErrorKind::TrailingInput)),
        }
        Ok(Self {
            ast,
            source: source.to_string(),
        })
    }

    #[inline]
    pub fn eval<T: Scalar>(&self, x: T) -> T {
        self.ast.eval(x)
    }

    pub fn ast(&self) -> &Expr {
        &self.ast
    }

    pub fn source(&self) -> &str {
        &self.source
    }

    /// Canonical fully parenthesized text of the tree.
    pub fn serialize(&self) -> String {
        self.ast.to_string()
    }

    /// True when the expression does not depend on `x`.
    pub fn is_constant(&self) -> bool {
        self.ast.is_constant()
    }

    /// Structural equality of the parsed trees, ignoring whitespace and
    /// redundant parentheses in the source.
    pub fn same_function(&self, other: &FunctionExpr) -> bool {
        self.ast == other.ast
    }
}

impl fmt::Display for FunctionExpr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.source)
    }
}

impl std::str::FromStr for FunctionExpr {
    type Err = ParseError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::parse(s)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn p(s: &str) -> FunctionExpr {
        FunctionExpr::parse(s).unwrap()
    }

    #[test]
    fn neg_var_and_const() {
        assert_eq!(p("-x").ast(), &Expr::Neg(Box::new(Expr::Var)));
        assert_eq!(p("1").ast(), &Expr::Const(1.0));
    }

    #[test]
    fn unbalanced_paren_reports_end_offset() {
        let e = FunctionExpr::parse("2*(1+x").unwrap_err();
        assert_eq!(e.kind, ParseErrorKind::UnbalancedParenthesis);
        assert_eq!(e.offset, 6);
        let e = FunctionExpr::parse("x)").unwrap_err();
        assert_eq!(e.kind, ParseErrorKind::UnbalancedParenthesis);
        assert_eq!(e.offset, 1);
    }

    #[test]
    fn error_kinds() {
        assert_eq!(
            FunctionExpr::parse("   ").unwrap_err().kind,
            ParseErrorKind::EmptyInput
        );
        let e = FunctionExpr::parse("y + 1").unwrap_err();
        assert_eq!(e.kind, ParseErrorKind::UnknownIdentifier("y".into()));
        assert_eq!(e.offset, 0);
        let e = FunctionExpr::parse("x + $").unwrap_err();
        assert_eq!(
            e,
            ParseError {
                kind: ParseErrorKind::UnexpectedChar('$'),
                offset: 4
            }
        );
        assert_eq!(
            FunctionExpr::parse("exp x").unwrap_err().kind,
            ParseErrorKind::ExpectedCallParenthesis("exp".into())
        );
        assert_eq!(
            FunctionExpr::parse("x *").unwrap_err(),
            ParseError {
                kind: ParseErrorKind::ExpectedOperand,
                offset: 3
            }
        );
        assert_eq!(
            FunctionExpr::parse("x x").unwrap_err().kind,
            ParseErrorKind::TrailingInput
        );
        assert!(matches!(
            FunctionExpr::parse("1e999").unwrap_err().kind,
            ParseErrorKind::InvalidNumber(_)
        ));
    }

    #[test]
    fn evaluation_examples() {
        assert_eq!(p("-x").eval(2.0), -2.0);
        assert_eq!(p("exp(-(x^2))").eval(0.0), 1.0);
        // tanh(1) = 0.7615941559557649 (tabulated)
        let v: f64 = p("tanh(x)+0.5*x").eval(1.0);
        assert!((v - 1.261_594_155_955_764_9).abs() < 1e-15);
    }

    #[test]
    fn precedence_and_associativity() {
        assert_eq!(p("-x^2").eval(3.0), -9.0);
        assert_eq!(p("2^3^2").eval(0.0), 512.0);
        assert_eq!(p("2^-1").eval(0.0), 0.5);
        assert_eq!(p("8/4/2").eval(0.0), 1.0);
        assert_eq!(p("8-4-2").eval(0.0), 2.0);
        assert_eq!(p("2*x^2").eval(3.0), 18.0);
        assert_eq!(p("-2*x").eval(1.5), -3.0);
        assert_eq!(p("pi").eval(0.0), std::f64::consts::PI);
        assert_eq!(p("2e-1 + e").eval(0.0), 0.2 + std::f64::consts::E);
    }

    #[test]
    fn powers() {
        assert_eq!(p("x^3").eval(-2.0), -8.0);
        assert_eq!(p("x^-2").eval(2.0), 0.25);
        assert!(p("x^0.5").eval(-4.0_f64).is_nan());
        assert_eq!(p("x^0.5").eval(4.0), 2.0);
        assert_eq!(p("x^0").eval(0.0), 1.0);
        assert!(p("log(x)").eval(-1.0_f64).is_nan());
    }

    #[test]
    fn generic_f32_evaluation() {
        let v: f32 = p("-x^3 + 1").eval(2.0f32);
        assert_eq!(v, -7.0);
    }

    #[test]
    fn same_function_ignores_spacing() {
        assert!(p("-x").same_function(&p(" - ( x ) ")));
        assert!(!p("-x").same_function(&p("-2*x")));
        assert!(p("3*2").is_constant());
        assert!(!p("sin(x)").is_constant());
    }

    fn arb_expr() -> impl Strategy<Value = Expr> {
        let leaf = prop_oneof![
            (-50.0f64..50.0).prop_map(Expr::Const),
            (0u32..6).prop_map(|v| Expr::Const(v as f64)),
            Just(Expr::Var),
        ];
        leaf.prop_recursive(5, 32, 2, |inner| {
            prop_oneof![
                inner.clone().prop_map(|a| Expr::Neg(Box::new(a))),
                (
                    prop_oneof![
                        Just(BinOp::Add),
                        Just(BinOp::Sub),
                        Just(BinOp::Mul),
                        Just(BinOp::Div),
                        Just(BinOp::Pow)
                    ],
                    inner.clone(),
                    inner.clone()
                )
                    .prop_map(|(op, a, b)| Expr::Bin(op, Box::new(a), Box::new(b))),
                (
                    prop_oneof![
                        Just(Func::Exp),
                        Just(Func::Log),
                        Just(Func::Sqrt),
                        Just(Func::Tanh),
                        Just(Func::Sin),
                        Just(Func::Cos),
                        Just(Func::Abs)
                    ],
                    inner
                )
                    .prop_map(|(f, a)| Expr::Call(f, Box::new(a))),
            ]
        })
    }

    fn same_bits(a: f64, b: f64) -> bool {
        a.to_bits() == b.to_bits() || (a.is_nan() && b.is_nan())
    }

    proptest! {
        #[test]
        fn serialize_round_trip(ast in arb_expr()) {
            let text = ast.to_string();
            let f = FunctionExpr::parse(&text).unwrap();
            // Negative literals re-parse as Neg(Const); compare by value.
            let g = FunctionExpr::parse(&f.serialize()).unwrap();
            prop_assert_eq!(f.ast(), g.ast());
            for i in -20..=20 {
                let x = i as f64 * 0.37;
                prop_assert!(same_bits(f.eval(x), ast.eval(x)));
                prop_assert!(same_bits(g.eval(x), f.eval(x)));
            }
        }

        #[test]
        fn product_binds_tighter_than_sum(a in 0.0f64..100.0, b in 0.0f64..100.0, c in 0.0f64..100.0) {
            let lhs: f64 = p(&format!("{a}+{b}*{c}")).eval(0.0);
            let rhs: f64 = p(&format!("{a}+({b}*{c})")).eval(0.0);
            prop_assert_eq!(lhs.to_bits(), rhs.to_bits());
        }
    }
}
