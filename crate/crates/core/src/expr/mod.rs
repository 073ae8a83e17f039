//! Complex-analytic expressions in one variable `z` with an integer parameter `j`.
//!
//! Expressions are parsed once into an immutable [`ExprProgram`] and evaluated as
//! first-order jets ([`Jet1`]), so every evaluation also yields the complex
//! derivative by forward-mode differentiation.
//!
//! ```text
//! expr     := term (('+' | '-') term)*
//! term     := unary (('*' | '/') unary)*
//! unary    := '-' unary | power
//! power    := atom ('^' exponent)?
//! exponent := '-' exponent | power
//! atom     := number | imag | 'z' | 'j' | 'i' | 'exp' '(' expr ')' | '(' expr ')'
//! ```
//!
//! Exponents must be integer-valued expressions built from integer literals, `j`,
//! `+`, `-`, `*` and `^`; `(-1)^j` and `z^(j+1)` are both accepted.

mod jet;
mod parse;

use std::fmt;

use num_complex::Complex64;
use thiserror::Error;

pub use jet::{powu_complex, Jet1};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ExprError {
    #[error("syntax error at byte {offset}: {message}")]
    Syntax { offset: usize, message: String },
    #[error("unknown identifier `{name}` at byte {offset}")]
    UnknownIdentifier { offset: usize, name: String },
    #[error("exponent at byte {offset} is not an integer expression")]
    NonIntegerExponent { offset: usize },
    #[error("pole at z = {z}")]
    Pole { z: Complex64 },
    #[error("integer exponent out of range (j = {j})")]
    ExponentRange { j: i64 },
    #[error("expression is not a polynomial in z: {reason}")]
    NotPolynomial { reason: String },
}

/// Expression tree. Literals are non-negative; negation is explicit.
#[derive(Debug, Clone, PartialEq)]
pub enum Node {
    Real(f64),
    /// Imaginary literal `b i`.
    Imag(f64),
    /// The variable `z`.
    Var,
    /// The integer parameter `j`.
    Param,
    Neg(Box<Node>),
    Add(Box<Node>, Box<Node>),
    Sub(Box<Node>, Box<Node>),
    Mul(Box<Node>, Box<Node>),
    Div(Box<Node>, Box<Node>),
    /// Base raised to an integer-valued exponent expression.
    Pow(Box<Node>, Box<Node>),
    Exp(Box<Node>),
}

impl Node {
    fn depends_on_z(&self) -> bool {
        match self {
            Node::Var => true,
            Node::Real(_) | Node::Imag(_) | Node::Param => false,
            Node::Neg(a) | Node::Exp(a) => a.depends_on_z(),
            // exponents never contain z
            Node::Pow(a, _) => a.depends_on_z(),
            Node::Add(a, b) | Node::Sub(a, b) | Node::Mul(a, b) | Node::Div(a, b) => {
                a.depends_on_z() || b.depends_on_z()
            }
        }
    }

    fn depends_on_j(&self) -> bool {
        match self {
            Node::Param => true,
            Node::Real(_) | Node::Imag(_) | Node::Var => false,
            Node::Neg(a) | Node::Exp(a) => a.depends_on_j(),
            Node::Add(a, b)
            | Node::Sub(a, b)
            | Node::Mul(a, b)
            | Node::Div(a, b)
            | Node::Pow(a, b) => a.depends_on_j() || b.depends_on_j(),
        }
    }

    /// True if the subtree can only produce integers (given integer `j`).
    pub(crate) fn is_integer_valued(&self) -> bool {
        match self {
            Node::Real(x) => x.fract() == 0.0 && x.is_finite(),
            Node::Param => true,
            Node::Neg(a) => a.is_integer_valued(),
            Node::Add(a, b) | Node::Sub(a, b) | Node::Mul(a, b) | Node::Pow(a, b) => {
                a.is_integer_valued() && b.is_integer_valued()
            }
            Node::Imag(_) | Node::Var | Node::Div(..) | Node::Exp(_) => false,
        }
    }

    fn eval_int(&self, j: i64) -> Result<i64, ExprError> {
        let range = || ExprError::ExponentRange { j };
        Ok(match self {
            Node::Real(x) => {
                if x.abs() > 9.0e15 {
                    return Err(range());
                }
                *x as i64
            }
            Node::Param => j,
            Node::Neg(a) => a.eval_int(j)?.checked_neg().ok_or_else(range)?,
            Node::Add(a, b) => a.eval_int(j)?.checked_add(b.eval_int(j)?).ok_or_else(range)?,
            Node::Sub(a, b) => a.eval_int(j)?.checked_sub(b.eval_int(j)?).ok_or_else(range)?,
            Node::Mul(a, b) => a.eval_int(j)?.checked_mul(b.eval_int(j)?).ok_or_else(range)?,
            Node::Pow(a, b) => {
                let base = a.eval_int(j)?;
                let e = b.eval_int(j)?;
                if e < 0 {
                    match base {
                        1 => 1,
                        -1 => {
                            if e % 2 == 0 {
                                1
                            } else {
                                -1
                            }
                        }
                        _ => return Err(range()),
                    }
                } else if base == 1 {
                    1
                } else if base == -1 {
                    if e % 2 == 0 {
                        1
                    } else {
                        -1
                    }
                } else {
                    let e = u32::try_from(e).map_err(|_| range())?;
                    base.checked_pow(e).ok_or_else(range)?
                }
            }
            Node::Imag(_) | Node::Var | Node::Div(..) | Node::Exp(_) => return Err(range()),
        })
    }

    fn eval_value(&self, z: Complex64, j: i64) -> Result<Complex64, ExprError> {
        let zero = Complex64::new(0.0, 0.0);
        Ok(match self {
            Node::Real(x) => Complex64::new(*x, 0.0),
            Node::Imag(y) => Complex64::new(0.0, *y),
            Node::Var => z,
            Node::Param => Complex64::new(j as f64, 0.0),
            Node::Neg(a) => -a.eval_value(z, j)?,
            Node::Add(a, b) => a.eval_value(z, j)? + b.eval_value(z, j)?,
            Node::Sub(a, b) => a.eval_value(z, j)? - b.eval_value(z, j)?,
            Node::Mul(a, b) => a.eval_value(z, j)? * b.eval_value(z, j)?,
            Node::Div(a, b) => {
                let num = a.eval_value(z, j)?;
                let den = b.eval_value(z, j)?;
                if den == zero {
                    return Err(ExprError::Pole { z });
                }
                num / den
            }
            Node::Pow(a, b) => {
                let base = a.eval_value(z, j)?;
                let k = b.eval_int(j)?;
                let mag = u32::try_from(k.unsigned_abs()).map_err(|_| ExprError::ExponentRange { j })?;
                if k >= 0 {
                    powu_complex(base, mag)
                } else {
                    if base == zero {
                        return Err(ExprError::Pole { z });
                    }
                    Complex64::new(1.0, 0.0) / powu_complex(base, mag)
                }
            }
            Node::Exp(a) => a.eval_value(z, j)?.exp(),
        })
    }

    fn eval_jet(&self, z: Complex64, j: i64) -> Result<Jet1, ExprError> {
        Ok(match self {
            Node::Real(x) => Jet1::constant(Complex64::new(*x, 0.0)),
            Node::Imag(y) => Jet1::constant(Complex64::new(0.0, *y)),
            Node::Var => Jet1::variable(z),
            Node::Param => Jet1::constant(Complex64::new(j as f64, 0.0)),
            Node::Neg(a) => -a.eval_jet(z, j)?,
            Node::Add(a, b) => a.eval_jet(z, j)? + b.eval_jet(z, j)?,
            Node::Sub(a, b) => a.eval_jet(z, j)? - b.eval_jet(z, j)?,
            Node::Mul(a, b) => a.eval_jet(z, j)? * b.eval_jet(z, j)?,
            Node::Div(a, b) => {
                let num = a.eval_jet(z, j)?;
                let den = b.eval_jet(z, j)?;
                if den.value == Complex64::new(0.0, 0.0) {
                    return Err(ExprError::Pole { z });
                }
                num / den
            }
            Node::Pow(a, b) => {
                let base = a.eval_jet(z, j)?;
                let k = b.eval_int(j)?;
                let mag = u32::try_from(k.unsigned_abs()).map_err(|_| ExprError::ExponentRange { j })?;
                if k >= 0 {
                    base.powu(mag)
                } else {
                    if base.value == Complex64::new(0.0, 0.0) {
                        return Err(ExprError::Pole { z });
                    }
                    Jet1::ONE / base.powu(mag)
                }
            }
            Node::Exp(a) => a.eval_jet(z, j)?.exp(),
        })
    }

    fn to_poly(&self, j: i64) -> Result<Vec<Complex64>, ExprError> {
        let not_poly = |reason: &str| ExprError::NotPolynomial {
            reason: reason.to_string(),
        };
        if !self.depends_on_z() {
            // z-free subtrees are constants, including exp(...) and division
            let v = self.eval_jet(Complex64::new(0.0, 0.0), j)?.value;
            return Ok(vec![v]);
        }
        Ok(match self {
            Node::Var => vec![Complex64::new(0.0, 0.0), Complex64::new(1.0, 0.0)],
            Node::Neg(a) => a.to_poly(j)?.into_iter().map(|c| -c).collect(),
            Node::Add(a, b) => poly_add(&a.to_poly(j)?, &b.to_poly(j)?, 1.0),
            Node::Sub(a, b) => poly_add(&a.to_poly(j)?, &b.to_poly(j)?, -1.0),
            Node::Mul(a, b) => poly_mul(&a.to_poly(j)?, &b.to_poly(j)?),
            Node::Div(a, b) => {
                if b.depends_on_z() {
                    return Err(not_poly("division by a non-constant"));
                }
                let den = b.eval_jet(Complex64::new(0.0, 0.0), j)?.value;
                if den == Complex64::new(0.0, 0.0) {
                    return Err(not_poly("division by zero"));
                }
                a.to_poly(j)?.into_iter().map(|c| c / den).collect()
            }
            Node::Pow(a, b) => {
                let k = b.eval_int(j)?;
                if k < 0 {
                    return Err(not_poly("negative power of a non-constant"));
                }
                let base = a.to_poly(j)?;
                let mut acc = vec![Complex64::new(1.0, 0.0)];
                for _ in 0..k {
                    acc = poly_mul(&acc, &base);
                }
                acc
            }
            Node::Exp(_) => return Err(not_poly("exp of a non-constant")),
            Node::Real(_) | Node::Imag(_) | Node::Param => unreachable!("constant handled above"),
        })
    }
}

pub(crate) fn poly_add(a: &[Complex64], b: &[Complex64], sign: f64) -> Vec<Complex64> {
    let mut out = vec![Complex64::new(0.0, 0.0); a.len().max(b.len())];
    for (k, c) in a.iter().enumerate() {
        out[k] += c;
    }
    for (k, c) in b.iter().enumerate() {
        out[k] += c * sign;
    }
    out
}

pub(crate) fn poly_mul(a: &[Complex64], b: &[Complex64]) -> Vec<Complex64> {
    if a.is_empty() || b.is_empty() {
        return Vec::new();
    }
    let mut out = vec![Complex64::new(0.0, 0.0); a.len() + b.len() - 1];
    for (i, x) in a.iter().enumerate() {
        for (k, y) in b.iter().enumerate() {
            out[i + k] += x * y;
        }
    }
    out
}

impl fmt::Display for Node {
    /// Fully parenthesized form; parsing it back yields an identical tree.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Node::Real(x) => write!(f, "{x:?}"),
            Node::Imag(y) => write!(f, "{y:?}i"),
            Node::Var => write!(f, "z"),
            Node::Param => write!(f, "j"),
            Node::Neg(a) => write!(f, "(-{a})"),
            Node::Add(a, b) => write!(f, "({a} + {b})"),
            Node::Sub(a, b) => write!(f, "({a} - {b})"),
            Node::Mul(a, b) => write!(f, "({a} * {b})"),
            Node::Div(a, b) => write!(f, "({a} / {b})"),
            Node::Pow(a, b) => write!(f, "({a}^{b})"),
            Node::Exp(a) => write!(f, "exp({a})"),
        }
    }
}

/// A parsed expression together with its source text. Immutable after parsing.
#[derive(Debug, Clone)]
pub struct ExprProgram {
    ast: Node,
    source: String,
    uses_z: bool,
    uses_j: bool,
}

impl PartialEq for ExprProgram {
    fn eq(&self, other: &Self) -> bool {
        self.ast == other.ast
    }
}

impl ExprProgram {
    pub fn parse(text: &str) -> Result<Self, ExprError> {
        let ast = parse::parse(text)?;
        Ok(Self::from_ast(ast, text.to_string()))
    }

    pub fn from_ast(ast: Node, source: String) -> Self {
        let uses_z = ast.depends_on_z();
        let uses_j = ast.depends_on_j();
        ExprProgram {
            ast,
            source,
            uses_z,
            uses_j,
        }
    }

    pub fn ast(&self) -> &Node {
        &self.ast
    }

    pub fn source(&self) -> &str {
        &self.source
    }

    pub fn depends_on_z(&self) -> bool {
        self.uses_z
    }

    pub fn depends_on_j(&self) -> bool {
        self.uses_j
    }

    /// Value and `d/dz` at `z` with the parameter `j` bound.
    pub fn eval_jet(&self, z: Complex64, j: i64) -> Result<Jet1, ExprError> {
        self.ast.eval_jet(z, j)
    }

    pub fn eval(&self, z: Complex64, j: i64) -> Result<Complex64, ExprError> {
        self.ast.eval_value(z, j)
    }

    /// `log |value|^2`, taken from the exponent directly when the root is `exp(...)`
    /// so that large exponents neither overflow nor underflow.
    pub fn log_abs_sq(&self, z: Complex64, j: i64) -> Result<f64, ExprError> {
        match &self.ast {
            Node::Exp(a) => Ok(2.0 * a.eval_value(z, j)?.re),
            node => Ok(2.0 * node.eval_value(z, j)?.norm().ln()),
        }
    }

    /// Monomial coefficients `c_0..c_d` in `z` with `j` bound, or `NotPolynomial`.
    pub fn to_poly(&self, j: i64) -> Result<Vec<Complex64>, ExprError> {
        let mut p = self.ast.to_poly(j)?;
        while p.len() > 1 && p.last() == Some(&Complex64::new(0.0, 0.0)) {
            p.pop();
        }
        Ok(p)
    }
}

impl fmt::Display for ExprProgram {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.ast)
    }
}

impl std::str::FromStr for ExprProgram {
    type Err = ExprError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        ExprProgram::parse(s)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn eval(text: &str, z: Complex64) -> Complex64 {
        ExprProgram::parse(text).unwrap().eval(z, 0).unwrap()
    }

    #[test]
    fn value_path_matches_jet_path() {
        for text in ["exp(((-1)^j/(j + 1))*z)", "z^-3 + 2*j", "(z - i)/(z + 1)^2", "-z^2"] {
            let p = ExprProgram::parse(text).unwrap();
            for j in 0..5 {
                let z = c(0.3 + 0.1 * j as f64, -0.7);
                assert_eq!(p.eval(z, j).unwrap(), p.eval_jet(z, j).unwrap().value, "{text}");
            }
        }
    }

    #[test]
    fn log_abs_sq_reads_the_exponent() {
        let p = ExprProgram::parse("exp(j*z)").unwrap();
        let z = c(0.4, 2.0);
        assert!((p.log_abs_sq(z, 3).unwrap() - 2.0 * p.eval(z, 3).unwrap().norm().ln()).abs() < 1e-12);
        assert_eq!(p.log_abs_sq(c(1.0, 0.0), 1000).unwrap(), 2000.0);
        let q = ExprProgram::parse("j + 1").unwrap();
        assert!((q.log_abs_sq(z, 2).unwrap() - 9f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn simple_values() {
        assert_eq!(eval("z^2 + 1", c(2.0, 0.0)), c(5.0, 0.0));
        let at_i = eval("(z - (0+1i)) * (z + (0+1i))", c(0.0, 1.0));
        assert_eq!(at_i, c(0.0, 0.0));
        assert_eq!(eval("2+3i", c(0.0, 0.0)), c(2.0, 3.0));
        assert_eq!(eval("i*i", c(0.0, 0.0)), c(-1.0, 0.0));
    }

    #[test]
    fn exp_jet_at_origin() {
        let p = ExprProgram::parse("exp(z)").unwrap();
        let jet = p.eval_jet(c(0.0, 0.0), 0).unwrap();
        assert_eq!(jet, Jet1::new(c(1.0, 0.0), c(1.0, 0.0)));
    }

    #[test]
    fn cube_jet() {
        let p = ExprProgram::parse("z^3").unwrap();
        let jet = p.eval_jet(c(2.0, 0.0), 0).unwrap();
        assert_eq!(jet, Jet1::new(c(8.0, 0.0), c(12.0, 0.0)));
    }

    #[test]
    fn reciprocal_pole() {
        let p = ExprProgram::parse("1/z").unwrap();
        assert_eq!(
            p.eval_jet(c(0.0, 0.0), 0),
            Err(ExprError::Pole { z: c(0.0, 0.0) })
        );
        let q = ExprProgram::parse("z^-2").unwrap();
        assert!(matches!(q.eval(c(0.0, 0.0), 0), Err(ExprError::Pole { .. })));
        assert_eq!(q.eval(c(2.0, 0.0), 0).unwrap(), c(0.25, 0.0));
    }

    #[test]
    fn parameter_family() {
        let p = ExprProgram::parse("exp(((-1)^j/(j+1))*z)").unwrap();
        assert!(p.depends_on_j() && p.depends_on_z());
        let z = c(0.5, -0.25);
        for j in 0..6 {
            let s = if j % 2 == 0 { 1.0 } else { -1.0 } / (j as f64 + 1.0);
            let expected = (z * s).exp();
            assert!((p.eval(z, j).unwrap() - expected).norm() < 1e-15);
        }
        let power = ExprProgram::parse("z^(j+1)").unwrap();
        assert_eq!(power.eval(c(2.0, 0.0), 3).unwrap(), c(16.0, 0.0));
    }

    #[test]
    fn unary_minus_binds_looser_than_power() {
        assert_eq!(eval("-z^2", c(3.0, 0.0)), c(-9.0, 0.0));
        assert_eq!(eval("(-z)^2", c(3.0, 0.0)), c(9.0, 0.0));
        assert_eq!(eval("z^2^2", c(2.0, 0.0)), c(16.0, 0.0));
        assert_eq!(eval("2*-z", c(3.0, 0.0)), c(-6.0, 0.0));
    }

    #[test]
    fn parse_errors() {
        assert!(matches!(
            ExprProgram::parse("z +"),
            Err(ExprError::Syntax { offset: 3, .. })
        ));
        assert!(matches!(
            ExprProgram::parse("sin(z)"),
            Err(ExprError::UnknownIdentifier { offset: 0, .. })
        ));
        assert!(matches!(
            ExprProgram::parse("1 + w"),
            Err(ExprError::UnknownIdentifier { offset: 4, .. })
        ));
        assert!(matches!(
            ExprProgram::parse("z^2.5"),
            Err(ExprError::NonIntegerExponent { offset: 2 })
        ));
        assert!(matches!(
            ExprProgram::parse("z^z"),
            Err(ExprError::NonIntegerExponent { .. })
        ));
        assert!(matches!(ExprProgram::parse("(z"), Err(ExprError::Syntax { .. })));
        assert!(matches!(ExprProgram::parse("z)"), Err(ExprError::Syntax { .. })));
        assert!(matches!(ExprProgram::parse(""), Err(ExprError::Syntax { .. })));
        assert!(matches!(ExprProgram::parse("2z"), Err(ExprError::Syntax { .. })));
    }

    #[test]
    fn print_round_trip() {
        for text in [
            "z^2 + 1",
            "exp(((-1)^j/(j+1))*z)",
            "(z - (0+1i)) * (z + 2.5i) / 3e-7",
            "-z^-3 - j*z",
        ] {
            let p = ExprProgram::parse(text).unwrap();
            let q = ExprProgram::parse(&p.to_string()).unwrap();
            assert_eq!(p.ast(), q.ast(), "{text}");
        }
    }

    #[test]
    fn polynomial_expansion() {
        let p = ExprProgram::parse("(z+1)^3 - 2*z/4 + exp(0)").unwrap();
        let coeffs = p.to_poly(0).unwrap();
        assert_eq!(
            coeffs,
            vec![c(2.0, 0.0), c(2.5, 0.0), c(3.0, 0.0), c(1.0, 0.0)]
        );
        let fam = ExprProgram::parse("(j+1)*z^j").unwrap();
        assert_eq!(fam.to_poly(2).unwrap(), vec![c(0.0, 0.0), c(0.0, 0.0), c(3.0, 0.0)]);
        for bad in ["exp(z)", "1/(z+1)", "z^-1"] {
            let q = ExprProgram::parse(bad).unwrap();
            assert!(matches!(q.to_poly(0), Err(ExprError::NotPolynomial { .. })), "{bad}");
        }
    }
}
