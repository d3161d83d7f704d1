//! Truncated jet arithmetic used to differentiate parsed expressions.
//!
//! [`Jet2`] carries value, gradient and Hessian of a function of several
//! variables; [`Taylor4`] carries the degree-4 Taylor polynomial of a
//! univariate function. Both implement [`Scalar`], so a single evaluator
//! serves plain `f64`, second-order and fourth-order evaluation.

use std::ops::{Add, Mul, Neg, Sub};

/// Number-like type an expression can be evaluated over.
pub trait Scalar: Clone + Sized {
    /// Highest derivative order carried by the type.
    const ORDER: usize;
    /// Whatever is needed to build a constant of the same kind.
    type Shape: Copy;

    fn shape(&self) -> Self::Shape;
    fn constant(c: f64, shape: Self::Shape) -> Self;
    fn value(&self) -> f64;

    fn add(&self, other: &Self) -> Self;
    fn sub(&self, other: &Self) -> Self;
    fn mul(&self, other: &Self) -> Self;
    fn neg(&self) -> Self;

    /// Applies a univariate function `f` given `derivs[k] = f^(k)(self.value())`.
    fn compose(&self, derivs: &[f64; 5]) -> Self;
}

impl Scalar for f64 {
    const ORDER: usize = 0;
    type Shape = ();

    fn shape(&self) {}
    fn constant(c: f64, _: ()) -> Self {
        c
    }
    fn value(&self) -> f64 {
        *self
    }
    fn add(&self, other: &Self) -> Self {
        self + other
    }
    fn sub(&self, other: &Self) -> Self {
        self - other
    }
    fn mul(&self, other: &Self) -> Self {
        self * other
    }
    fn neg(&self) -> Self {
        -self
    }
    fn compose(&self, derivs: &[f64; 5]) -> Self {
        derivs[0]
    }
}

/// Value, gradient and Hessian of a scalar function of `n` variables.
///
/// The Hessian is stored once as a packed upper triangle, so symmetry holds
/// exactly.
#[derive(Debug, Clone, PartialEq)]
pub struct Jet2 {
    value: f64,
    grad: Vec<f64>,
    hess: Vec<f64>,
}

#[inline]
fn packed_index(n: usize, i: usize, j: usize) -> usize {
    let (i, j) = if i <= j { (i, j) } else { (j, i) };
    // Row i starts after n + (n-1) + ... + (n-i+1) entries.
    i * (2 * n - i + 1) / 2 + (j - i)
}

impl Jet2 {
    /// The `index`-th coordinate function evaluated at `at`.
    pub fn variable(index: usize, at: f64, n: usize) -> Self {
        let mut grad = vec![0.0; n];
        grad[index] = 1.0;
        Self {
            value: at,
            grad,
            hess: vec![0.0; n * (n + 1) / 2],
        }
    }

    /// Independent coordinate jets for every component of `point`.
    pub fn seed(point: &[f64]) -> Vec<Self> {
        let n = point.len();
        point
            .iter()
            .enumerate()
            .map(|(i, &p)| Self::variable(i, p, n))
            .collect()
    }

    pub fn dim(&self) -> usize {
        self.grad.len()
    }

    pub fn value(&self) -> f64 {
        self.value
    }

    pub fn grad(&self) -> &[f64] {
        &self.grad
    }

    pub fn hess(&self, i: usize, j: usize) -> f64 {
        self.hess[packed_index(self.grad.len(), i, j)]
    }

    /// Full symmetric Hessian as rows.
    pub fn hessian(&self) -> Vec<Vec<f64>> {
        let n = self.dim();
        (0..n)
            .map(|i| (0..n).map(|j| self.hess(i, j)).collect())
            .collect()
    }
}

impl Scalar for Jet2 {
    const ORDER: usize = 2;
    type Shape = usize;

    fn shape(&self) -> usize {
        self.grad.len()
    }

    fn constant(c: f64, n: usize) -> Self {
        Self {
            value: c,
            grad: vec![0.0; n],
            hess: vec![0.0; n * (n + 1) / 2],
        }
    }

    fn value(&self) -> f64 {
        self.value
    }

    fn add(&self, other: &Self) -> Self {
        Self {
            value: self.value + other.value,
            grad: zip_with(&self.grad, &other.grad, |a, b| a + b),
            hess: zip_with(&self.hess, &other.hess, |a, b| a + b),
        }
    }

    fn sub(&self, other: &Self) -> Self {
        Self {
            value: self.value - other.value,
            grad: zip_with(&self.grad, &other.grad, |a, b| a - b),
            hess: zip_with(&self.hess, &other.hess, |a, b| a - b),
        }
    }

    fn mul(&self, other: &Self) -> Self {
        let n = self.dim();
        let (a, b) = (self.value, other.value);
        let grad = zip_with(&self.grad, &other.grad, |ga, gb| a * gb + b * ga);
        let mut hess = Vec::with_capacity(self.hess.len());
        for i in 0..n {
            for j in i..n {
                let k = hess.len();
                hess.push(
                    a * other.hess[k]
                        + b * self.hess[k]
                        + self.grad[i] * other.grad[j]
                        + self.grad[j] * other.grad[i],
                );
            }
        }
        Self {
            value: a * b,
            grad,
            hess,
        }
    }

    fn neg(&self) -> Self {
        Self {
            value: -self.value,
            grad: self.grad.iter().map(|g| -g).collect(),
            hess: self.hess.iter().map(|h| -h).collect(),
        }
    }

    fn compose(&self, d: &[f64; 5]) -> Self {
        let n = self.dim();
        let grad = self.grad.iter().map(|g| d[1] * g).collect();
        let mut hess = Vec::with_capacity(self.hess.len());
        for i in 0..n {
            for j in i..n {
                let k = hess.len();
                hess.push(d[1] * self.hess[k] + d[2] * self.grad[i] * self.grad[j]);
            }
        }
        Self {
            value: d[0],
            grad,
            hess,
        }
    }
}

fn zip_with(a: &[f64], b: &[f64], f: impl Fn(f64, f64) -> f64) -> Vec<f64> {
    a.iter().zip(b).map(|(&x, &y)| f(x, y)).collect()
}

/// Degree-4 Taylor polynomial `c0 + c1 h + ... + c4 h^4` of a univariate
/// function at a base point; the k-th derivative is `k! * c_k`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Taylor4(pub [f64; 5]);

const FACTORIAL: [f64; 5] = [1.0, 1.0, 2.0, 6.0, 24.0];

impl Taylor4 {
    /// The identity function `t` expanded at `t0`.
    pub fn variable(t0: f64) -> Self {
        Taylor4([t0, 1.0, 0.0, 0.0, 0.0])
    }

    pub fn coefficients(&self) -> [f64; 5] {
        self.0
    }

    /// `k`-th derivative at the base point.
    pub fn derivative(&self, k: usize) -> f64 {
        FACTORIAL[k] * self.0[k]
    }

    /// Expansion of `t -> f(a t + b)` at `t0` given this expansion of `f` at
    /// `a t0 + b`.
    pub fn affine_pullback(&self, a: f64) -> Self {
        let mut c = self.0;
        let mut p = 1.0;
        for ck in c.iter_mut() {
            *ck *= p;
            p *= a;
        }
        Taylor4(c)
    }
}

impl Scalar for Taylor4 {
    const ORDER: usize = 4;
    type Shape = ();

    fn shape(&self) {}

    fn constant(c: f64, _: ()) -> Self {
        Taylor4([c, 0.0, 0.0, 0.0, 0.0])
    }

    fn value(&self) -> f64 {
        self.0[0]
    }

    fn add(&self, o: &Self) -> Self {
        Taylor4(std::array::from_fn(|k| self.0[k] + o.0[k]))
    }

    fn sub(&self, o: &Self) -> Self {
        Taylor4(std::array::from_fn(|k| self.0[k] - o.0[k]))
    }

    fn mul(&self, o: &Self) -> Self {
        Taylor4(std::array::from_fn(|k| {
            (0..=k).map(|i| self.0[i] * o.0[k - i]).sum()
        }))
    }

    fn neg(&self) -> Self {
        Taylor4(self.0.map(|c| -c))
    }

    fn compose(&self, d: &[f64; 5]) -> Self {
        // f(c0 + h) = sum_k f^(k)(c0) / k! * h^k with h nilpotent of order 5.
        let mut h = *self;
        h.0[0] = 0.0;
        let mut out = Taylor4::constant(d[0], ());
        let mut hk = Taylor4::constant(1.0, ());
        for k in 1..5 {
            hk = Scalar::mul(&hk, &h);
            let w = d[k] / FACTORIAL[k];
            for (o, c) in out.0.iter_mut().zip(hk.0) {
                *o += w * c;
            }
        }
        out
    }
}

impl Add for Taylor4 {
    type Output = Taylor4;
    fn add(self, rhs: Self) -> Self {
        Scalar::add(&self, &rhs)
    }
}

impl Sub for Taylor4 {
    type Output = Taylor4;
    fn sub(self, rhs: Self) -> Self {
        Scalar::sub(&self, &rhs)
    }
}

impl Mul for Taylor4 {
    type Output = Taylor4;
    fn mul(self, rhs: Self) -> Self {
        Scalar::mul(&self, &rhs)
    }
}

impl Neg for Taylor4 {
    type Output = Taylor4;
    fn neg(self) -> Self {
        Scalar::neg(&self)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn packed_layout_is_row_major_upper() {
        let n = 4;
        let mut k = 0;
        for i in 0..n {
            for j in i..n {
                assert_eq!(packed_index(n, i, j), k);
                assert_eq!(packed_index(n, j, i), k);
                k += 1;
            }
        }
    }

    #[test]
    fn jet2_product_rule() {
        let v = Jet2::seed(&[2.0, 3.0]);
        let p = Scalar::mul(&v[0], &v[1]);
        assert_eq!(p.value(), 6.0);
        assert_eq!(p.grad(), &[3.0, 2.0]);
        assert_eq!(p.hess(0, 1), 1.0);
        assert_eq!(p.hess(0, 0), 0.0);
        assert_eq!(p.hess(1, 1), 0.0);
    }

    #[test]
    fn taylor_compose_exp() {
        let t = Taylor4::variable(0.0);
        let e = t.compose(&[1.0; 5]);
        let want = [1.0, 1.0, 0.5, 1.0 / 6.0, 1.0 / 24.0];
        for (a, b) in e.0.iter().zip(want) {
            assert!((a - b).abs() < 1e-15);
        }
    }
}
