use crate::error::{Error, Result};
use crate::expr::Expr;

/// Linear fractional map `t ↦ (a t + b)/(c t + d)`, normalized so that
/// `|ad − bc| = 1`; `(a,b,c,d)` and `(−a,−b,−c,−d)` are the same map.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Mobius {
    a: f64,
    b: f64,
    c: f64,
    d: f64,
}

impl Mobius {
    pub fn new(a: f64, b: f64, c: f64, d: f64) -> Result<Self> {
        let det = a * d - b * c;
        if !(det.abs() > 0.0) || !det.is_finite() {
            return Err(Error::Invalid(format!(
                "degenerate Mobius matrix ({a}, {b}; {c}, {d})"
            )));
        }
        let r = det.abs().sqrt();
        Ok(Self {
            a: a / r,
            b: b / r,
            c: c / r,
            d: d / r,
        })
    }

    pub fn identity() -> Self {
        Self {
            a: 1.0,
            b: 0.0,
            c: 0.0,
            d: 1.0,
        }
    }

    pub fn matrix(&self) -> [f64; 4] {
        [self.a, self.b, self.c, self.d]
    }

    pub fn determinant(&self) -> f64 {
        self.a * self.d - self.b * self.c
    }

    /// The parameter value sent to infinity, if any.
    pub fn pole(&self) -> Option<f64> {
        (self.c != 0.0).then(|| -self.d / self.c)
    }

    pub fn apply(&self, t: f64) -> Result<f64> {
        let den = self.c * t + self.d;
        if den == 0.0 {
            return Err(Error::Pole { t });
        }
        Ok((self.a * t + self.b) / den)
    }

    /// Composition `self ∘ other`.
    pub fn compose(&self, other: &Mobius) -> Mobius {
        let [a, b, c, d] = self.matrix();
        let [e, f, g, h] = other.matrix();
        Mobius::new(a * e + b * g, a * f + b * h, c * e + d * g, c * f + d * h)
            .expect("product of invertible matrices is invertible")
    }

    /// The map as an expression in the variable `t` (index 0).
    pub fn to_expr(&self) -> Expr {
        let t = || Box::new(Expr::var(0, "t"));
        let num = Expr::Add(
            Box::new(Expr::Mul(Box::new(Expr::Num(self.a)), t())),
            Box::new(Expr::Num(self.b)),
        );
        if self.c == 0.0 {
            return Expr::Div(Box::new(num), Box::new(Expr::Num(self.d)));
        }
        let den = Expr::Add(
            Box::new(Expr::Mul(Box::new(Expr::Num(self.c)), t())),
            Box::new(Expr::Num(self.d)),
        );
        Expr::Div(Box::new(num), Box::new(den))
    }
}

/// Schwarzian derivative `f'''/f' − (3/2)(f''/f')²` of a univariate
/// expression, from exact Taylor jets.
pub fn schwarzian(f: &Expr, t: f64) -> Result<f64> {
    let j = f.eval_taylor4(t)?;
    let (d1, d2, d3) = (j.derivative(1), j.derivative(2), j.derivative(3));
    if d1 == 0.0 {
        return Err(Error::Domain(format!("critical point of the map at t = {t}")));
    }
    Ok(d3 / d1 - 1.5 * (d2 / d1).powi(2))
}

/// Checks that the Schwarzian of `f` vanishes (to `1e-8`, relative to the
/// size of `f''/f'` squared) at five points away from the pole.
pub fn schwarzian_is_zero(f: &Mobius) -> bool {
    let e = f.to_expr();
    let mut checked = 0;
    for t in [-2.0, -1.0, 0.0, 0.5, 1.0, 2.0, 3.0, -3.0] {
        if checked == 5 {
            break;
        }
        if f.pole().is_some_and(|p| (t - p).abs() < 0.1) {
            continue;
        }
        let Ok(j) = e.eval_taylor4(t) else { continue };
        let Ok(s) = schwarzian(&e, t) else { return false };
        let scale = 1.0 + (j.derivative(2) / j.derivative(1)).powi(2);
        if s.abs() > 1e-8 * scale {
            return false;
        }
        checked += 1;
    }
    checked == 5
}
