//! Semilinear right-hand sides `f(q, u)`: built-in families, a small
//! expression language with symbolic u-differentiation, and the reduction
//! to base value 1.
//!
//! The solver consumes `f` through two callbacks, the value and the
//! u-derivative, plus the base value `f(p, 0)` at the chart origin. The
//! positivity of the base value is a hypothesis of the whole construction,
//! so it is enforced at every constructor.

use std::fmt;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

type Callback = Arc<dyn Fn(&[f64], f64) -> f64 + Sync + Send>;

/// A nonlinearity `f(q, u)` with its u-derivative and base value `f(p, 0)`.
#[derive(Clone)]
pub struct Nonlinearity {
    value: Callback,
    derivative: Callback,
    base: f64,
    label: String,
}

impl fmt::Debug for Nonlinearity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Nonlinearity")
            .field("label", &self.label)
            .field("base", &self.base)
            .finish()
    }
}

impl Nonlinearity {
    fn build(value: Callback, derivative: Callback, label: String, probe: usize) -> Result<Self> {
        let base = value(&vec![0.0; probe], 0.0);
        if !base.is_finite() || base <= 0.0 {
            return Err(Error::hypothesis(format!(
                "base value f(p, 0) = {base:.6e} of \"{label}\" must be positive"
            )));
        }
        Ok(Nonlinearity { value, derivative, base, label })
    }

    /// The torsion right-hand side `f = 1`.
    pub fn constant_one() -> Self {
        Nonlinearity {
            value: Arc::new(|_, _| 1.0),
            derivative: Arc::new(|_, _| 0.0),
            base: 1.0,
            label: "1".into(),
        }
    }

    /// `f(q, u) = 1 + u`.
    pub fn one_plus_u() -> Self {
        Nonlinearity {
            value: Arc::new(|_, u| 1.0 + u),
            derivative: Arc::new(|_, _| 1.0),
            base: 1.0,
            label: "1 + u".into(),
        }
    }

    /// `f(q, u) = c + u^2` with `c > 0`.
    pub fn quadratic(c: f64) -> Result<Self> {
        Self::build(
            Arc::new(move |_, u| c + u * u),
            Arc::new(|_, u| 2.0 * u),
            format!("{c} + u^2"),
            0,
        )
    }

    /// Wraps caller-supplied callbacks; `dimension` is the chart-point
    /// length the base evaluation probes with. The base value must be
    /// positive.
    pub fn from_callbacks<V, D>(
        value: V,
        derivative: D,
        label: &str,
        dimension: usize,
    ) -> Result<Self>
    where
        V: Fn(&[f64], f64) -> f64 + Sync + Send + 'static,
        D: Fn(&[f64], f64) -> f64 + Sync + Send + 'static,
    {
        Self::build(Arc::new(value), Arc::new(derivative), label.to_string(), dimension)
    }

    /// Parses an expression over `u`, `x1..xd`, `+ - * / ^`, `exp`, `sin`
    /// and numeric literals; the u-derivative is produced symbolically.
    pub fn parse(expression: &str, dimension: usize) -> Result<Self> {
        let tree = parse_expression(expression, dimension)?;
        let deriv = tree.d_du();
        let label = expression.trim().to_string();
        Self::build(
            Arc::new(move |q: &[f64], u: f64| tree.eval(q, u)),
            Arc::new(move |q: &[f64], u: f64| deriv.eval(q, u)),
            label,
            dimension,
        )
    }

    pub fn value(&self, q: &[f64], u: f64) -> f64 {
        (self.value)(q, u)
    }

    pub fn du(&self, q: &[f64], u: f64) -> f64 {
        (self.derivative)(q, u)
    }

    /// `f(p, 0)`, the value at the chart origin with zero state.
    pub fn base_value(&self) -> f64 {
        self.base
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    /// Compares the declared u-derivative against a centered difference at
    /// the supplied `(q, u)` samples and returns the worst deviation.
    /// Deviations beyond 1e-4 indicate inconsistent callbacks.
    pub fn check_derivative(&self, samples: &[(Vec<f64>, f64)]) -> Result<f64> {
        let h = 1e-6;
        let mut worst = 0.0_f64;
        for (q, u) in samples {
            let fd = (self.value(q, u + h) - self.value(q, u - h)) / (2.0 * h);
            let dev = (self.du(q, *u) - fd).abs();
            if dev > worst {
                worst = dev;
            }
            if dev > 1e-4 {
                return Err(Error::validation(format!(
                    "u-derivative of \"{}\" deviates from a centered difference by {dev:.3e} \
                     at q = {q:?}, u = {u}",
                    self.label
                )));
            }
        }
        Ok(worst)
    }

    /// Runs [`check_derivative`](Self::check_derivative) on seeded random
    /// samples with `|q| <= 1` and `|u| <= 1`.
    pub fn check_derivative_sampled(&self, dimension: usize, seed: u64) -> Result<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let samples: Vec<(Vec<f64>, f64)> = (0..100)
            .map(|_| {
                let q: Vec<f64> = (0..dimension).map(|_| rng.gen::<f64>() * 2.0 - 1.0).collect();
                (q, rng.gen::<f64>() * 2.0 - 1.0)
            })
            .collect();
        self.check_derivative(&samples)
    }
}

/// Rescales a nonlinearity to base value 1: with `B = f(p, 0)` the reduced
/// right-hand side is `g(q, v) = f(q, B v) / B`, and a solution `v` of the
/// reduced problem maps back to `u = B v`.
pub fn normalize_nonlinearity(nl: &Nonlinearity) -> Result<Nonlinearity> {
    let b = nl.base_value();
    if !b.is_finite() || b <= 0.0 {
        return Err(Error::hypothesis(format!(
            "cannot normalize \"{}\": base value {b:.6e} is not positive",
            nl.label
        )));
    }
    if b == 1.0 {
        return Ok(nl.clone());
    }
    let (value, derivative) = (nl.value.clone(), nl.derivative.clone());
    Ok(Nonlinearity {
        value: Arc::new(move |q: &[f64], v: f64| value(q, b * v) / b),
        // d/dv [f(q, Bv)/B] = f_u(q, Bv)
        derivative: Arc::new(move |q: &[f64], v: f64| derivative(q, b * v)),
        base: 1.0,
        label: format!("({}) / {b}", nl.label),
    })
}

// --------------------------------------------------------------------------
// Expression trees
// --------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq)]
enum Expr {
    Num(f64),
    U,
    X(usize),
    Add(Box<Expr>, Box<Expr>),
    Sub(Box<Expr>, Box<Expr>),
    Mul(Box<Expr>, Box<Expr>),
    Div(Box<Expr>, Box<Expr>),
    Pow(Box<Expr>, Box<Expr>),
    Neg(Box<Expr>),
    Exp(Box<Expr>),
    Sin(Box<Expr>),
    // Cos and Ln have no surface syntax; they appear in derivatives of
    // sin and of powers with u-dependent exponents.
    Cos(Box<Expr>),
    Ln(Box<Expr>),
}

impl Expr {
    fn eval(&self, q: &[f64], u: f64) -> f64 {
        match self {
            Expr::Num(c) => *c,
            Expr::U => u,
            Expr::X(i) => q[*i],
            Expr::Add(a, b) => a.eval(q, u) + b.eval(q, u),
            Expr::Sub(a, b) => a.eval(q, u) - b.eval(q, u),
            Expr::Mul(a, b) => a.eval(q, u) * b.eval(q, u),
            Expr::Div(a, b) => a.eval(q, u) / b.eval(q, u),
            Expr::Pow(a, b) => a.eval(q, u).powf(b.eval(q, u)),
            Expr::Neg(a) => -a.eval(q, u),
            Expr::Exp(a) => a.eval(q, u).exp(),
            Expr::Sin(a) => a.eval(q, u).sin(),
            Expr::Cos(a) => a.eval(q, u).cos(),
            Expr::Ln(a) => a.eval(q, u).ln(),
        }
    }

    fn contains_u(&self) -> bool {
        match self {
            Expr::Num(_) | Expr::X(_) => false,
            Expr::U => true,
            Expr::Add(a, b) | Expr::Sub(a, b) | Expr::Mul(a, b) | Expr::Div(a, b)
            | Expr::Pow(a, b) => a.contains_u() || b.contains_u(),
            Expr::Neg(a) | Expr::Exp(a) | Expr::Sin(a) | Expr::Cos(a) | Expr::Ln(a) => {
                a.contains_u()
            }
        }
    }

    fn d_du(&self) -> Expr {
        use Expr::*;
        match self {
            Num(_) | X(_) => Num(0.0),
            U => Num(1.0),
            Add(a, b) => simplify(Add(Box::new(a.d_du()), Box::new(b.d_du()))),
            Sub(a, b) => simplify(Sub(Box::new(a.d_du()), Box::new(b.d_du()))),
            Mul(a, b) => {
                let left = simplify(Mul(Box::new(a.d_du()), b.clone()));
                let right = simplify(Mul(a.clone(), Box::new(b.d_du())));
                simplify(Add(Box::new(left), Box::new(right)))
            }
            Div(a, b) => {
                let num = simplify(Sub(
                    Box::new(simplify(Mul(Box::new(a.d_du()), b.clone()))),
                    Box::new(simplify(Mul(a.clone(), Box::new(b.d_du())))),
                ));
                let den = simplify(Mul(b.clone(), b.clone()));
                simplify(Div(Box::new(num), Box::new(den)))
            }
            Pow(a, b) if !b.contains_u() => {
                // d/du a^c = c a^(c-1) a'
                let reduced = simplify(Pow(
                    a.clone(),
                    Box::new(simplify(Sub(b.clone(), Box::new(Num(1.0))))),
                ));
                let scaled = simplify(Mul(b.clone(), Box::new(reduced)));
                simplify(Mul(Box::new(scaled), Box::new(a.d_du())))
            }
            Pow(a, b) => {
                // d/du a^b = a^b (b' ln a + b a'/a)
                let term1 = simplify(Mul(Box::new(b.d_du()), Box::new(Ln(a.clone()))));
                let term2 = simplify(Div(
                    Box::new(simplify(Mul(b.clone(), Box::new(a.d_du())))),
                    a.clone(),
                ));
                simplify(Mul(
                    Box::new(Pow(a.clone(), b.clone())),
                    Box::new(simplify(Add(Box::new(term1), Box::new(term2)))),
                ))
            }
            Neg(a) => simplify(Neg(Box::new(a.d_du()))),
            Exp(a) => simplify(Mul(Box::new(Exp(a.clone())), Box::new(a.d_du()))),
            Sin(a) => simplify(Mul(Box::new(Cos(a.clone())), Box::new(a.d_du()))),
            Cos(a) => simplify(Neg(Box::new(simplify(Mul(
                Box::new(Sin(a.clone())),
                Box::new(a.d_du()),
            ))))),
            Ln(a) => simplify(Div(Box::new(a.d_du()), a.clone())),
        }
    }
}

/// Folds constants and drops additive/multiplicative identities so the
/// derivative trees stay small.
fn simplify(e: Expr) -> Expr {
    use Expr::*;
    match e {
        Add(a, b) => match (*a, *b) {
            (Num(x), Num(y)) => Num(x + y),
            (Num(z), other) | (other, Num(z)) if z == 0.0 => other,
            (a, b) => Add(Box::new(a), Box::new(b)),
        },
        Sub(a, b) => match (*a, *b) {
            (Num(x), Num(y)) => Num(x - y),
            (other, Num(z)) if z == 0.0 => other,
            (a, b) => Sub(Box::new(a), Box::new(b)),
        },
        Mul(a, b) => match (*a, *b) {
            (Num(x), Num(y)) => Num(x * y),
            (Num(z), _) | (_, Num(z)) if z == 0.0 => Num(0.0),
            (Num(o), other) | (other, Num(o)) if o == 1.0 => other,
            (a, b) => Mul(Box::new(a), Box::new(b)),
        },
        Div(a, b) => match (*a, *b) {
            (Num(z), _) if z == 0.0 => Num(0.0),
            (other, Num(o)) if o == 1.0 => other,
            (a, b) => Div(Box::new(a), Box::new(b)),
        },
        Pow(a, b) => match (*a, *b) {
            (a, Num(o)) if o == 1.0 => a,
            (_, Num(z)) if z == 0.0 => Num(1.0),
            (a, b) => Pow(Box::new(a), Box::new(b)),
        },
        Neg(a) => match *a {
            Num(x) => Num(-x),
            a => Neg(Box::new(a)),
        },
        other => other,
    }
}

// --------------------------------------------------------------------------
// Recursive-descent parser
// --------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq)]
enum Token {
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

fn tokenize(src: &str) -> Result<Vec<Token>> {
    let bytes = src.as_bytes();
    let mut out = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        let c = bytes[i] as char;
        match c {
            ' ' | '\t' | '\n' | '\r' => i += 1,
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
            '/' => {
                out.push(Token::Slash);
                i += 1;
            }
            '^' => {
                out.push(Token::Caret);
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
            '0'..='9' | '.' => {
                let start = i;
                while i < bytes.len()
                    && matches!(bytes[i] as char, '0'..='9' | '.' | 'e' | 'E')
                {
                    // Exponent signs belong to the literal only right after e/E.
                    i += 1;
                    if i < bytes.len()
                        && matches!(bytes[i] as char, '+' | '-')
                        && matches!(bytes[i - 1] as char, 'e' | 'E')
                    {
                        i += 1;
                    }
                }
                let text = &src[start..i];
                let num: f64 = text.parse().map_err(|_| {
                    Error::expression(format!("malformed number literal \"{text}\""))
                })?;
                out.push(Token::Num(num));
            }
            'a'..='z' | 'A'..='Z' => {
                let start = i;
                while i < bytes.len() && (bytes[i] as char).is_ascii_alphanumeric() {
                    i += 1;
                }
                out.push(Token::Ident(src[start..i].to_string()));
            }
            other => {
                return Err(Error::expression(format!(
                    "unexpected character '{other}' at byte {i}"
                )));
            }
        }
    }
    Ok(out)
}

struct Parser {
    tokens: Vec<Token>,
    pos: usize,
    dimension: usize,
}

impl Parser {
    fn peek(&self) -> Option<&Token> {
        self.tokens.get(self.pos)
    }

    fn next(&mut self) -> Option<Token> {
        let t = self.tokens.get(self.pos).cloned();
        if t.is_some() {
            self.pos += 1;
        }
        t
    }

    fn expect(&mut self, t: Token) -> Result<()> {
        match self.next() {
            Some(found) if found == t => Ok(()),
            found => Err(Error::expression(format!("expected {t:?}, found {found:?}"))),
        }
    }

    // expr := term (('+' | '-') term)*
    fn expr(&mut self) -> Result<Expr> {
        let mut acc = self.term()?;
        loop {
            match self.peek() {
                Some(Token::Plus) => {
                    self.pos += 1;
                    acc = Expr::Add(Box::new(acc), Box::new(self.term()?));
                }
                Some(Token::Minus) => {
                    self.pos += 1;
                    acc = Expr::Sub(Box::new(acc), Box::new(self.term()?));
                }
                _ => return Ok(acc),
            }
        }
    }

    // term := unary (('*' | '/') unary)*
    fn term(&mut self) -> Result<Expr> {
        let mut acc = self.unary()?;
        loop {
            match self.peek() {
                Some(Token::Star) => {
                    self.pos += 1;
                    acc = Expr::Mul(Box::new(acc), Box::new(self.unary()?));
                }
                Some(Token::Slash) => {
                    self.pos += 1;
                    acc = Expr::Div(Box::new(acc), Box::new(self.unary()?));
                }
                _ => return Ok(acc),
            }
        }
    }

    // unary := '-' unary | power
    fn unary(&mut self) -> Result<Expr> {
        if self.peek() == Some(&Token::Minus) {
            self.pos += 1;
            return Ok(Expr::Neg(Box::new(self.unary()?)));
        }
        self.power()
    }

    // power := atom ('^' unary)?, right associative
    fn power(&mut self) -> Result<Expr> {
        let base = self.atom()?;
        if self.peek() == Some(&Token::Caret) {
            self.pos += 1;
            let exp = self.unary()?;
            return Ok(Expr::Pow(Box::new(base), Box::new(exp)));
        }
        Ok(base)
    }

    fn atom(&mut self) -> Result<Expr> {
        match self.next() {
            Some(Token::Num(c)) => Ok(Expr::Num(c)),
            Some(Token::LParen) => {
                let inner = self.expr()?;
                self.expect(Token::RParen)?;
                Ok(inner)
            }
            Some(Token::Ident(name)) => self.ident(&name),
            found => Err(Error::expression(format!(
                "expected a value, found {found:?}"
            ))),
        }
    }

    fn ident(&mut self, name: &str) -> Result<Expr> {
        match name {
            "u" => Ok(Expr::U),
            "exp" | "sin" => {
                self.expect(Token::LParen)?;
                let arg = Box::new(self.expr()?);
                self.expect(Token::RParen)?;
                Ok(if name == "exp" { Expr::Exp(arg) } else { Expr::Sin(arg) })
            }
            _ => {
                if let Some(rest) = name.strip_prefix('x') {
                    if let Ok(k) = rest.parse::<usize>() {
                        if k >= 1 && k <= self.dimension {
                            return Ok(Expr::X(k - 1));
                        }
                        return Err(Error::expression(format!(
                            "coordinate {name} is out of range for dimension {}",
                            self.dimension
                        )));
                    }
                }
                Err(Error::expression(format!("unknown identifier \"{name}\"")))
            }
        }
    }
}

fn parse_expression(src: &str, dimension: usize) -> Result<Expr> {
    let tokens = tokenize(src)?;
    if tokens.is_empty() {
        return Err(Error::expression("empty expression"));
    }
    let mut parser = Parser { tokens, pos: 0, dimension };
    let tree = parser.expr()?;
    if parser.pos != parser.tokens.len() {
        return Err(Error::expression(format!(
            "trailing input starting at token {:?}",
            parser.tokens[parser.pos]
        )));
    }
    Ok(tree)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn builtins_evaluate_and_differentiate() {
        let one = Nonlinearity::constant_one();
        assert_eq!(one.value(&[3.0], 7.0), 1.0);
        assert_eq!(one.du(&[3.0], 7.0), 0.0);
        assert_eq!(one.base_value(), 1.0);

        let affine = Nonlinearity::one_plus_u();
        assert_eq!(affine.value(&[], 0.5), 1.5);
        assert_eq!(affine.du(&[], 0.5), 1.0);

        let quad = Nonlinearity::quadratic(2.0).unwrap();
        assert_eq!(quad.value(&[], 0.3), 2.09);
        assert_eq!(quad.du(&[], 0.3), 0.6);
        assert_eq!(quad.base_value(), 2.0);
    }

    #[test]
    fn nonpositive_base_is_a_hypothesis_error() {
        for c in [0.0, -1.0] {
            let err = Nonlinearity::quadratic(c).unwrap_err();
            assert!(err.to_string().contains("positive"), "{err}");
        }
        let err = Nonlinearity::from_callbacks(|_, u| u, |_, _| 1.0, "u", 2).unwrap_err();
        assert!(err.to_string().contains("f(p, 0)"), "{err}");
    }

    #[test]
    fn normalization_reduces_affine_shift_to_one_plus_v() {
        let f = Nonlinearity::from_callbacks(|_, u| 2.0 + u, |_, _| 1.0, "2 + u", 2).unwrap();
        let g = normalize_nonlinearity(&f).unwrap();
        assert_eq!(g.base_value(), 1.0);
        for v in [-0.5, 0.0, 0.3, 1.7] {
            assert_relative_eq!(g.value(&[], v), 1.0 + v, epsilon = 1e-15);
            assert_relative_eq!(g.du(&[], v), 1.0, epsilon = 1e-15);
        }
    }

    #[test]
    fn normalization_is_identity_at_base_one_and_scales_constants() {
        let one = Nonlinearity::constant_one();
        let same = normalize_nonlinearity(&one).unwrap();
        assert_eq!(same.value(&[1.0], 0.7), 1.0);

        let three = Nonlinearity::from_callbacks(|_, _| 3.0, |_, _| 0.0, "3", 2).unwrap();
        let g = normalize_nonlinearity(&three).unwrap();
        assert_eq!(g.value(&[], 0.4), 1.0);
        // The reduced solution carries back as u = 3 v.
        assert_relative_eq!(three.base_value() * 0.4, 1.2, epsilon = 1e-15);
    }

    #[test]
    fn normalized_derivative_follows_the_chain_rule() {
        let f = Nonlinearity::quadratic(2.0).unwrap();
        let g = normalize_nonlinearity(&f).unwrap();
        // g(v) = (2 + 4 v^2)/2 = 1 + 2 v^2, so g'(0.3) = 1.2.
        assert_relative_eq!(g.value(&[], 0.3), 1.18, epsilon = 1e-15);
        assert_relative_eq!(g.du(&[], 0.3), 1.2, epsilon = 1e-15);
        g.check_derivative_sampled(2, 5).unwrap();
    }

    #[test]
    fn parser_handles_precedence_and_associativity() {
        let f = Nonlinearity::parse("2 + 3 * 4 ^ 2", 2).unwrap();
        assert_eq!(f.value(&[0.0, 0.0], 0.0), 50.0);
        let f = Nonlinearity::parse("20 - 3 - 4", 2).unwrap();
        assert_eq!(f.value(&[0.0, 0.0], 0.0), 13.0);
        let f = Nonlinearity::parse("2 ^ 3 ^ 2 / 2", 2).unwrap();
        assert_eq!(f.value(&[0.0, 0.0], 0.0), 256.0);
        let f = Nonlinearity::parse("1 - -u", 2).unwrap();
        assert_eq!(f.value(&[0.0, 0.0], 0.25), 1.25);
    }

    #[test]
    fn parsed_quadratic_matches_builtin() {
        let parsed = Nonlinearity::parse("1 + u^2", 2).unwrap();
        let built = Nonlinearity::quadratic(1.0).unwrap();
        for u in [-1.0, -0.3, 0.0, 0.4, 2.0] {
            assert_relative_eq!(parsed.value(&[0.0, 0.0], u), built.value(&[], u));
            assert_relative_eq!(parsed.du(&[0.0, 0.0], u), built.du(&[], u));
        }
    }

    #[test]
    fn symbolic_derivative_handles_products_quotients_and_functions() {
        let f = Nonlinearity::parse("exp(u) * sin(x1) + 2", 2).unwrap();
        let q = [0.7, -0.4];
        assert_relative_eq!(f.du(&q, 0.3), 0.3_f64.exp() * 0.7_f64.sin(), epsilon = 1e-14);

        let g = Nonlinearity::parse("1 + u / (1 + u)", 1).unwrap();
        // d/du [u/(1+u)] = 1/(1+u)^2; samples stay away from the pole.
        assert_relative_eq!(g.du(&[0.0], 0.5), 1.0 / 2.25, epsilon = 1e-14);
        let samples: Vec<(Vec<f64>, f64)> =
            [-0.4, 0.0, 0.3, 1.2].iter().map(|&u| (vec![0.0], u)).collect();
        g.check_derivative(&samples).unwrap();
    }

    #[test]
    fn u_dependent_exponent_uses_the_general_power_rule() {
        let f = Nonlinearity::parse("1 + u ^ u", 1).unwrap();
        let u = 1.5_f64;
        let want = u.powf(u) * (u.ln() + 1.0);
        assert_relative_eq!(f.du(&[0.0], u), want, epsilon = 1e-13);
    }

    #[test]
    fn parser_rejects_malformed_input() {
        for bad in ["", "u +", "foo(u)", "x3", "u ) 2", "2 3", "1 + $"] {
            let err = Nonlinearity::parse(bad, 2).unwrap_err();
            assert!(
                matches!(err, Error::Expression(_)),
                "{bad:?} gave {err}"
            );
        }
        // x2 is fine in the plane, x3 is not.
        Nonlinearity::parse("1 + x2", 2).unwrap();
        Nonlinearity::parse("1 + x3", 3).unwrap();
    }

    #[test]
    fn derivative_check_catches_wrong_callbacks() {
        let wrong =
            Nonlinearity::from_callbacks(|_, u| 1.0 + u * u, |_, u| 3.0 * u, "bad", 2).unwrap();
        let err = wrong.check_derivative_sampled(2, 3).unwrap_err();
        assert!(err.to_string().contains("centered difference"), "{err}");

        let right = Nonlinearity::quadratic(1.0).unwrap();
        let worst = right.check_derivative_sampled(2, 3).unwrap();
        assert!(worst <= 1e-9, "worst deviation {worst:.3e}");
    }

    #[test]
    fn scientific_literals_parse() {
        let f = Nonlinearity::parse("1e-2 + u * 2.5E+1 + 1", 1).unwrap();
        assert_relative_eq!(f.value(&[0.0], 0.1), 0.01 + 2.5 + 1.0, epsilon = 1e-15);
    }
}
