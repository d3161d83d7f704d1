//! Closed-form scalar expressions in named variables.
//!
//! Expressions are parsed once and then evaluated over any [`Scalar`]:
//! plain `f64`, [`Jet2`] (value, gradient, Hessian) or [`Taylor4`]
//! (univariate Taylor coefficients to order four). Derivatives come from jet
//! arithmetic, never from finite differences.
//!
//! Supported syntax: decimal literals (with optional exponent), the variables
//! passed to [`Expr::parse`], `pi`, binary `+ - * /`, unary `-`, `^` with a
//! constant exponent, and the functions `sin cos tan exp log sqrt atan sinh
//! cosh tanh`. A non-constant power `f^g` must be written `exp(g*log(f))`.

mod jet;
mod parse;

use std::fmt;

use crate::error::{Error, Result};
pub use jet::{Jet2, Scalar, Taylor4};

/// Elementary functions understood by the parser.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Func {
    Sin,
    Cos,
    Tan,
    Exp,
    Log,
    Sqrt,
    Atan,
    Sinh,
    Cosh,
    Tanh,
}

impl Func {
    pub const ALL: [Func; 10] = [
        Func::Sin,
        Func::Cos,
        Func::Tan,
        Func::Exp,
        Func::Log,
        Func::Sqrt,
        Func::Atan,
        Func::Sinh,
        Func::Cosh,
        Func::Tanh,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Func::Sin => "sin",
            Func::Cos => "cos",
            Func::Tan => "tan",
            Func::Exp => "exp",
            Func::Log => "log",
            Func::Sqrt => "sqrt",
            Func::Atan => "atan",
            Func::Sinh => "sinh",
            Func::Cosh => "cosh",
            Func::Tanh => "tanh",
        }
    }

    pub fn from_name(name: &str) -> Option<Func> {
        Func::ALL.into_iter().find(|f| f.name() == name)
    }

    /// `[f(x), f'(x), ..., f''''(x)]`, or a domain error.
    fn derivatives(self, x: f64, order: usize) -> Result<[f64; 5]> {
        let d = match self {
            Func::Sin => {
                let (s, c) = x.sin_cos();
                [s, c, -s, -c, s]
            }
            Func::Cos => {
                let (s, c) = x.sin_cos();
                [c, -s, -c, s, c]
            }
            Func::Tan => {
                if x.cos() == 0.0 {
                    return Err(Error::Domain(format!("tan at its pole {x}")));
                }
                let t = x.tan();
                let u = 1.0 + t * t;
                [
                    t,
                    u,
                    2.0 * t * u,
                    2.0 * u * u + 4.0 * t * t * u,
                    16.0 * t * u * u + 8.0 * t * t * t * u,
                ]
            }
            Func::Exp => [x.exp(); 5],
            Func::Log => {
                if x <= 0.0 {
                    return Err(Error::Domain(format!("log of non-positive value {x}")));
                }
                let r = 1.0 / x;
                [x.ln(), r, -r * r, 2.0 * r * r * r, -6.0 * r * r * r * r]
            }
            Func::Sqrt => {
                if x < 0.0 || (x == 0.0 && order > 0) {
                    return Err(Error::Domain(format!("sqrt of value {x}")));
                }
                let r = x.sqrt();
                if order == 0 {
                    [r, 0.0, 0.0, 0.0, 0.0]
                } else {
                    let r3 = r * x;
                    let r5 = r3 * x;
                    let r7 = r5 * x;
                    [r, 0.5 / r, -0.25 / r3, 0.375 / r5, -0.9375 / r7]
                }
            }
            Func::Atan => {
                let w = 1.0 / (1.0 + x * x);
                [
                    x.atan(),
                    w,
                    -2.0 * x * w * w,
                    -2.0 * w * w + 8.0 * x * x * w * w * w,
                    24.0 * x * w * w * w - 48.0 * x * x * x * w * w * w * w,
                ]
            }
            Func::Sinh => {
                let (s, c) = (x.sinh(), x.cosh());
                [s, c, s, c, s]
            }
            Func::Cosh => {
                let (s, c) = (x.sinh(), x.cosh());
                [c, s, c, s, c]
            }
            Func::Tanh => {
                let t = x.tanh();
                let u = 1.0 - t * t;
                [
                    t,
                    u,
                    -2.0 * t * u,
                    -2.0 * u * u + 4.0 * t * t * u,
                    16.0 * t * u * u - 8.0 * t * t * t * u,
                ]
            }
        };
        if d[0].is_finite() {
            Ok(d)
        } else {
            Err(Error::Domain(format!("{} overflows at {x}", self.name())))
        }
    }
}

/// Abstract syntax tree of a parsed expression.
#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Num(f64),
    /// Reference to the `index`-th declared variable.
    Var { index: usize, name: String },
    Neg(Box<Expr>),
    Add(Box<Expr>, Box<Expr>),
    Sub(Box<Expr>, Box<Expr>),
    Mul(Box<Expr>, Box<Expr>),
    Div(Box<Expr>, Box<Expr>),
    /// Power with a constant exponent.
    Pow(Box<Expr>, f64),
    Func(Func, Box<Expr>),
}

impl Expr {
    /// Parses `text`; identifiers other than function names and `pi` must
    /// appear in `vars`, and their position becomes the variable index.
    pub fn parse(text: &str, vars: &[&str]) -> Result<Expr> {
        parse::parse(text, vars)
    }

    pub fn num(v: f64) -> Expr {
        Expr::Num(v)
    }

    pub fn var(index: usize, name: impl Into<String>) -> Expr {
        Expr::Var {
            index,
            name: name.into(),
        }
    }

    /// Value of a variable-free expression.
    pub fn constant_value(&self) -> Option<f64> {
        if self.max_var().is_some() {
            return None;
        }
        self.eval(&[]).ok()
    }

    /// Largest variable index referenced, if any.
    pub fn max_var(&self) -> Option<usize> {
        match self {
            Expr::Num(_) => None,
            Expr::Var { index, .. } => Some(*index),
            Expr::Neg(a) | Expr::Pow(a, _) | Expr::Func(_, a) => a.max_var(),
            Expr::Add(a, b) | Expr::Sub(a, b) | Expr::Mul(a, b) | Expr::Div(a, b) => {
                match (a.max_var(), b.max_var()) {
                    (Some(x), Some(y)) => Some(x.max(y)),
                    (x, y) => x.or(y),
                }
            }
        }
    }

    /// Renames and re-indexes variables; `f` receives the old index.
    pub fn map_vars(&self, f: &impl Fn(usize, &str) -> (usize, String)) -> Expr {
        self.rewrite(&|index, name| {
            let (index, name) = f(index, name);
            Expr::Var { index, name }
        })
    }

    /// Replaces every variable `i` by `with[i]`.
    pub fn substitute(&self, with: &[Expr]) -> Expr {
        self.rewrite(&|index, _| with[index].clone())
    }

    fn rewrite(&self, leaf: &impl Fn(usize, &str) -> Expr) -> Expr {
        let b = |e: &Expr| Box::new(e.rewrite(leaf));
        match self {
            Expr::Num(v) => Expr::Num(*v),
            Expr::Var { index, name } => leaf(*index, name),
            Expr::Neg(a) => Expr::Neg(b(a)),
            Expr::Add(x, y) => Expr::Add(b(x), b(y)),
            Expr::Sub(x, y) => Expr::Sub(b(x), b(y)),
            Expr::Mul(x, y) => Expr::Mul(b(x), b(y)),
            Expr::Div(x, y) => Expr::Div(b(x), b(y)),
            Expr::Pow(x, p) => Expr::Pow(b(x), *p),
            Expr::Func(f, x) => Expr::Func(*f, b(x)),
        }
    }

    /// Evaluates over an arbitrary scalar type; `vars[i]` is the value of
    /// variable `i`.
    pub fn eval_with<S: Scalar>(&self, vars: &[S], shape: S::Shape) -> Result<S> {
        Ok(match self {
            Expr::Num(v) => S::constant(*v, shape),
            Expr::Var { index, name } => vars
                .get(*index)
                .cloned()
                .ok_or_else(|| Error::Dimension(format!("no value for variable `{name}`")))?,
            Expr::Neg(a) => a.eval_with(vars, shape)?.neg(),
            Expr::Add(a, b) => a.eval_with(vars, shape)?.add(&b.eval_with(vars, shape)?),
            Expr::Sub(a, b) => a.eval_with(vars, shape)?.sub(&b.eval_with(vars, shape)?),
            Expr::Mul(a, b) => a.eval_with(vars, shape)?.mul(&b.eval_with(vars, shape)?),
            Expr::Div(a, b) => {
                let num = a.eval_with(vars, shape)?;
                num.mul(&recip(&b.eval_with(vars, shape)?)?)
            }
            Expr::Pow(a, p) => pow(&a.eval_with(vars, shape)?, *p, shape)?,
            Expr::Func(f, a) => {
                let x = a.eval_with(vars, shape)?;
                let d = f.derivatives(x.value(), S::ORDER)?;
                x.compose(&d)
            }
        })
    }

    pub fn eval(&self, point: &[f64]) -> Result<f64> {
        let v = self.eval_with(point, ())?;
        if v.is_finite() {
            Ok(v)
        } else {
            Err(Error::Domain(format!("non-finite value at {point:?}")))
        }
    }

    /// Value, gradient and Hessian at `point`.
    pub fn eval_jet2(&self, point: &[f64]) -> Result<Jet2> {
        self.eval_with(&Jet2::seed(point), point.len())
    }

    /// Taylor coefficients to order four in the single variable (index 0)
    /// at `t0`.
    pub fn eval_taylor4(&self, t0: f64) -> Result<Taylor4> {
        if let Some(i) = self.max_var().filter(|&i| i > 0) {
            return Err(Error::Dimension(format!(
                "univariate evaluation of an expression using variable {i}"
            )));
        }
        self.eval_with(&[Taylor4::variable(t0)], ())
    }
}

fn recip<S: Scalar>(x: &S) -> Result<S> {
    let v = x.value();
    if v == 0.0 {
        return Err(Error::Domain("division by zero".into()));
    }
    let r = 1.0 / v;
    let r2 = r * r;
    Ok(x.compose(&[r, -r2, 2.0 * r2 * r, -6.0 * r2 * r2, 24.0 * r2 * r2 * r]))
}

fn powi<S: Scalar>(x: &S, mut n: u64, shape: S::Shape) -> S {
    let mut acc = S::constant(1.0, shape);
    let mut base = x.clone();
    let mut first = true;
    while n > 0 {
        if n & 1 == 1 {
            acc = if first { base.clone() } else { acc.mul(&base) };
            first = false;
        }
        n >>= 1;
        if n > 0 {
            base = base.mul(&base);
        }
    }
    acc
}

fn pow<S: Scalar>(x: &S, p: f64, shape: S::Shape) -> Result<S> {
    if p.fract() == 0.0 && p.abs() < 1024.0 {
        let n = p.abs() as u64;
        let xn = powi(x, n, shape);
        return if p < 0.0 { recip(&xn) } else { Ok(xn) };
    }
    let v = x.value();
    if v < 0.0 || (v == 0.0 && (p < 0.0 || S::ORDER > 0)) {
        return Err(Error::Domain(format!("{v} raised to non-integer power {p}")));
    }
    let mut d = [0.0; 5];
    let mut coef = 1.0;
    for (k, dk) in d.iter_mut().enumerate() {
        *dk = coef * v.powf(p - k as f64);
        coef *= p - k as f64;
    }
    if v == 0.0 {
        d = [0.0; 5];
    }
    Ok(x.compose(&d))
}

/// Fully parenthesized rendering that re-parses to the same tree.
impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Expr::Num(v) => write!(f, "{v:?}"),
            Expr::Var { name, .. } => f.write_str(name),
            Expr::Neg(a) => write!(f, "(-{a})"),
            Expr::Add(a, b) => write!(f, "({a} + {b})"),
            Expr::Sub(a, b) => write!(f, "({a} - {b})"),
            Expr::Mul(a, b) => write!(f, "({a} * {b})"),
            Expr::Div(a, b) => write!(f, "({a} / {b})"),
            Expr::Pow(a, p) => write!(f, "({a} ^ ({p:?}))"),
            Expr::Func(func, a) => write!(f, "{}({a})", func.name()),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn p(text: &str, vars: &[&str]) -> Expr {
        Expr::parse(text, vars).unwrap()
    }

    fn v(i: usize, n: &str) -> Box<Expr> {
        Box::new(Expr::var(i, n))
    }

    #[test]
    fn builds_expected_tree() {
        let e = p("y1^2 + sin(y2)", &["y1", "y2"]);
        let want = Expr::Add(
            Box::new(Expr::Pow(v(0, "y1"), 2.0)),
            Box::new(Expr::Func(Func::Sin, v(1, "y2"))),
        );
        assert_eq!(e, want);
    }

    #[test]
    fn precedence_and_associativity() {
        assert_eq!(p("2*y1+3", &["y1"]).eval(&[5.0]).unwrap(), 13.0);
        assert_eq!(p("8-3-2", &[]).eval(&[]).unwrap(), 3.0);
        assert_eq!(p("8/4/2", &[]).eval(&[]).unwrap(), 1.0);
        assert_eq!(p("-2^2", &[]).eval(&[]).unwrap(), -4.0);
        assert_eq!(p("2^3^2", &[]).eval(&[]).unwrap(), 512.0);
        assert_eq!(p("2^-1", &[]).eval(&[]).unwrap(), 0.5);
        assert_eq!(p("x^(1/2)", &["x"]).eval(&[9.0]).unwrap(), 3.0);
        assert_eq!(p("1.5e2 + .5", &[]).eval(&[]).unwrap(), 150.5);
    }

    #[test]
    fn errors_carry_offsets() {
        assert_eq!(
            Expr::parse("y3", &["y1", "y2"]),
            Err(Error::UnknownIdentifier {
                name: "y3".into(),
                offset: 0
            })
        );
        assert_eq!(
            Expr::parse("y1 ^ y2", &["y1", "y2"]),
            Err(Error::NonConstantExponent { offset: 5 })
        );
        match Expr::parse("1 + * 2", &[]) {
            Err(Error::Syntax { offset, .. }) => assert_eq!(offset, 4),
            other => panic!("{other:?}"),
        }
        match Expr::parse("sin(1", &[]) {
            Err(Error::Syntax { offset, .. }) => assert_eq!(offset, 5),
            other => panic!("{other:?}"),
        }
        match Expr::parse("1 $ 2", &[]) {
            Err(Error::Syntax { offset, .. }) => assert_eq!(offset, 2),
            other => panic!("{other:?}"),
        }
        assert!(matches!(Expr::parse("  ", &[]), Err(Error::Syntax { .. })));
    }

    #[test]
    fn domain_errors() {
        assert!(matches!(p("log(x)", &["x"]).eval(&[0.0]), Err(Error::Domain(_))));
        assert!(matches!(p("1/x", &["x"]).eval_jet2(&[0.0]), Err(Error::Domain(_))));
        assert!(matches!(p("sqrt(x)", &["x"]).eval(&[-1.0]), Err(Error::Domain(_))));
        assert!(matches!(p("x^0.5", &["x"]).eval_taylor4(-1.0), Err(Error::Domain(_))));
    }

    #[test]
    fn jet2_examples() {
        let j = p("y1*y2", &["y1", "y2"]).eval_jet2(&[2.0, 3.0]).unwrap();
        assert_eq!(j.value(), 6.0);
        assert_eq!(j.grad(), &[3.0, 2.0]);
        assert_eq!(j.hessian(), vec![vec![0.0, 1.0], vec![1.0, 0.0]]);
        let j = p("sin(y1)", &["y1"]).eval_jet2(&[0.0]).unwrap();
        assert_eq!((j.value(), j.grad()[0], j.hess(0, 0)), (0.0, 1.0, 0.0));
    }

    #[test]
    fn taylor4_examples() {
        let c = p("t^3", &["t"]).eval_taylor4(1.0).unwrap();
        assert_eq!(c.0, [1.0, 3.0, 3.0, 1.0, 0.0]);
        let c = p("exp(t)", &["t"]).eval_taylor4(0.0).unwrap();
        let want = [1.0, 1.0, 0.5, 1.0 / 6.0, 1.0 / 24.0];
        for k in 0..5 {
            assert!((c.0[k] - want[k]).abs() < 1e-15);
        }
    }

    /// Central differences of orders 1..4 with a step balancing truncation
    /// and rounding error.
    fn fd_derivatives(f: impl Fn(f64) -> f64, t: f64) -> [f64; 5] {
        let h = 1e-2;
        let v = |k: f64| f(t + k * h);
        let d1 = (v(-2.0) - 8.0 * v(-1.0) + 8.0 * v(1.0) - v(2.0)) / (12.0 * h);
        let d2 = (-v(-2.0) + 16.0 * v(-1.0) - 30.0 * v(0.0) + 16.0 * v(1.0) - v(2.0))
            / (12.0 * h * h);
        let d3 = (v(-3.0) - 8.0 * v(-2.0) + 13.0 * v(-1.0) - 13.0 * v(1.0) + 8.0 * v(2.0)
            - v(3.0))
            / (8.0 * h.powi(3));
        let d4 = (-v(-3.0) + 12.0 * v(-2.0) - 39.0 * v(-1.0) + 56.0 * v(0.0) - 39.0 * v(1.0)
            + 12.0 * v(2.0)
            - v(3.0))
            / (6.0 * h.powi(4));
        [v(0.0), d1, d2, d3, d4]
    }

    #[test]
    fn taylor4_matches_finite_differences() {
        let cases = [
            ("cos(t)", 0.0),
            ("cos(t)", 0.7),
            ("tan(t)", 0.4),
            ("atan(t)", 0.8),
            ("tanh(t)", -0.3),
            ("sqrt(1 + t^2)", 1.2),
            ("log(2 + sin(t))", 0.1),
            ("(2*t + 1)/(t + 1)", 0.5),
            ("t^(2/3)", 1.5),
            ("exp(-t^2)*sinh(t) + cosh(t)", 0.3),
        ];
        for (text, t0) in cases {
            let e = p(text, &["t"]);
            let c = e.eval_taylor4(t0).unwrap();
            let fd = fd_derivatives(|t| e.eval(&[t]).unwrap(), t0);
            for k in 0..5 {
                let tol = [1e-14, 1e-7, 1e-6, 1e-4, 1e-3][k] * (1.0 + fd[k].abs());
                assert!(
                    (c.derivative(k) - fd[k]).abs() < tol,
                    "{text} order {k}: {} vs {}",
                    c.derivative(k),
                    fd[k]
                );
            }
        }
    }

    fn arb_expr(nvars: usize) -> impl Strategy<Value = Expr> {
        let names = ["y1", "y2", "y3"];
        let leaf = prop_oneof![
            (0.0f64..4.0).prop_map(Expr::Num),
            (0..nvars).prop_map(move |i| Expr::var(i, names[i])),
        ];
        leaf.prop_recursive(5, 40, 2, |inner| {
            prop_oneof![
                inner.clone().prop_map(|a| Expr::Neg(Box::new(a))),
                (inner.clone(), inner.clone())
                    .prop_map(|(a, b)| Expr::Add(Box::new(a), Box::new(b))),
                (inner.clone(), inner.clone())
                    .prop_map(|(a, b)| Expr::Sub(Box::new(a), Box::new(b))),
                (inner.clone(), inner.clone())
                    .prop_map(|(a, b)| Expr::Mul(Box::new(a), Box::new(b))),
                (inner.clone(), 1u32..4).prop_map(|(a, n)| Expr::Pow(Box::new(a), n as f64)),
                (inner.clone(), 0usize..3).prop_map(|(a, f)| {
                    Expr::Func([Func::Sin, Func::Cos, Func::Atan][f], Box::new(a))
                }),
                (inner.clone(), inner).prop_map(|(a, b)| Expr::Div(
                    Box::new(a),
                    Box::new(Expr::Add(
                        Box::new(Expr::Num(2.0)),
                        Box::new(Expr::Func(Func::Sin, Box::new(b)))
                    ))
                )),
            ]
        })
    }

    fn random_polynomial(nvars: usize) -> impl Strategy<Value = Expr> {
        let names = ["y1", "y2", "y3"];
        let monomial = (
            -2.0f64..2.0,
            proptest::collection::vec(0u32..4, nvars),
        )
            .prop_map(move |(c, pows)| {
                pows.iter().enumerate().fold(Expr::Num(c), |acc, (i, &k)| {
                    Expr::Mul(
                        Box::new(acc),
                        Box::new(Expr::Pow(Box::new(Expr::var(i, names[i])), k as f64)),
                    )
                })
            });
        proptest::collection::vec(monomial, 1..6).prop_map(|ms| {
            ms.into_iter()
                .reduce(|a, b| Expr::Add(Box::new(a), Box::new(b)))
                .unwrap()
        })
    }

    proptest! {
        #[test]
        fn display_round_trips(e in arb_expr(3)) {
            let text = e.to_string();
            let back = Expr::parse(&text, &["y1", "y2", "y3"]).unwrap();
            prop_assert_eq!(back, e);
        }

        #[test]
        fn gradient_matches_central_differences(
            e in arb_expr(3),
            pt in proptest::array::uniform3(-1.5f64..1.5),
        ) {
            let Ok(j) = e.eval_jet2(&pt) else { return Ok(()) };
            prop_assume!(j.value().abs() < 1e6);
            for i in 0..3 {
                let h = 1e-5 * pt[i].abs().max(1.0);
                let central = |h: f64| {
                    let (mut a, mut b) = (pt, pt);
                    a[i] += h;
                    b[i] -= h;
                    Some((e.eval(&a).ok()? - e.eval(&b).ok()?) / (2.0 * h))
                };
                let (Some(fd), Some(fd2)) = (central(h), central(2.0 * h)) else { return Ok(()) };
                let scale = j.grad()[i].abs().max(1.0);
                // Skip points where the difference quotient itself is not
                // resolved (rapid oscillation such as sin(y^9)).
                prop_assume!((fd - fd2).abs() < 1e-7 * scale);
                prop_assert!((fd - j.grad()[i]).abs() < 1e-6 * scale,
                    "{} d{}: {} vs {}", e, i, j.grad()[i], fd);
            }
        }

        #[test]
        fn polynomial_jets_match_finite_differences(
            e in random_polynomial(2),
            pt in proptest::array::uniform2(-1.0f64..1.0),
        ) {
            let j = e.eval_jet2(&pt).unwrap();
            let f = |q: [f64; 2]| e.eval(&q).unwrap();
            let h = 1e-4;
            for i in 0..2 {
                for k in 0..2 {
                    let shift = |di: f64, dk: f64| {
                        let mut q = pt;
                        q[i] += di;
                        q[k] += dk;
                        f(q)
                    };
                    let fd = (shift(h, h) - shift(h, -h) - shift(-h, h) + shift(-h, -h))
                        / (4.0 * h * h);
                    prop_assert!((fd - j.hess(i, k)).abs() < 1e-5 * j.hess(i, k).abs().max(1.0));
                }
            }
        }

        #[test]
        fn sum_rule_is_exact(a in arb_expr(2), b in arb_expr(2),
                             pt in proptest::array::uniform2(-1.0f64..1.0)) {
            let (Ok(ja), Ok(jb)) = (a.eval_jet2(&pt), b.eval_jet2(&pt)) else { return Ok(()) };
            let sum = Expr::Add(Box::new(a), Box::new(b)).eval_jet2(&pt).unwrap();
            prop_assert_eq!(sum, Scalar::add(&ja, &jb));
        }

        #[test]
        fn product_rule_holds(a in arb_expr(2), b in arb_expr(2),
                              pt in proptest::array::uniform2(-1.0f64..1.0)) {
            let (Ok(ja), Ok(jb)) = (a.eval_jet2(&pt), b.eval_jet2(&pt)) else { return Ok(()) };
            prop_assume!(ja.value().abs() < 1e4 && jb.value().abs() < 1e4);
            let prod = Expr::Mul(Box::new(a), Box::new(b)).eval_jet2(&pt).unwrap();
            for i in 0..2 {
                let want = ja.value() * jb.grad()[i] + jb.value() * ja.grad()[i];
                let scale = (ja.value() * jb.grad()[i]).abs()
                    + (jb.value() * ja.grad()[i]).abs() + 1.0;
                prop_assert!((prod.grad()[i] - want).abs() < 1e-12 * scale);
            }
        }

        #[test]
        fn affine_reparametrization_is_chain_rule(
            coeffs in proptest::collection::vec(-3i32..4, 1..6),
            a in -3i32..4, b in -3i32..4, t0 in -4i32..5,
        ) {
            prop_assume!(a != 0);
            // Polynomial in t with integer coefficients, and small dyadic
            // parameters, so every operation below is exact.
            let text = coeffs.iter().enumerate()
                .map(|(k, c)| format!("({c})*t^{k}"))
                .collect::<Vec<_>>()
                .join(" + ");
            let e = p(&text, &["t"]);
            let (a, b, t0) = (a as f64 / 2.0, b as f64, t0 as f64 / 4.0);
            let affine = Expr::parse(&format!("({a})*t + ({b})"), &["t"]).unwrap();
            let composed = e.substitute(&[affine]).eval_taylor4(t0).unwrap();
            let pulled = e.eval_taylor4(a * t0 + b).unwrap().affine_pullback(a);
            prop_assert_eq!(composed, pulled);
        }
    }

    #[test]
    fn map_vars_reindexes() {
        let e = p("y1 * y2", &["y1", "y2"]);
        let shifted = e.map_vars(&|i, n| (i + 1, n.to_string()));
        assert_eq!(shifted.eval(&[100.0, 2.0, 3.0]).unwrap(), 6.0);
        assert_eq!(shifted.max_var(), Some(2));
    }
}
