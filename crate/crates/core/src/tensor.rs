//! Pointwise curvature of a metric given on one coordinate chart.
//!
//! Components are parsed expressions in `y1..yn`; all derivatives come from
//! [`Jet2`] evaluation, so Christoffel symbols are exact to roundoff and the
//! Riemann tensor needs no nested differencing. Indefinite metrics are
//! supported throughout: inverses use LU with partial pivoting and the
//! declared signature is checked at every evaluation point.

use nalgebra::{DMatrix, SymmetricEigen};

use crate::error::{Error, Result};
use crate::expr::{Expr, Jet2};

/// Condition number above which a metric is treated as singular.
pub const MAX_CONDITION: f64 = 1e12;

/// Dense rank-3 array `a[i][j][k]`, each index in `0..n`.
#[derive(Debug, Clone, PartialEq)]
pub struct Array3 {
    n: usize,
    data: Vec<f64>,
}

impl Array3 {
    pub fn zeros(n: usize) -> Self {
        Self {
            n,
            data: vec![0.0; n * n * n],
        }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize, k: usize) -> f64 {
        self.data[(i * self.n + j) * self.n + k]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, k: usize, v: f64) {
        self.data[(i * self.n + j) * self.n + k] = v;
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// `Γ(u, v)^i = a[i][j][k] u^j v^k`.
    pub fn contract(&self, u: &[f64], v: &[f64]) -> Vec<f64> {
        let n = self.n;
        (0..n)
            .map(|i| {
                let mut s = 0.0;
                for j in 0..n {
                    for k in 0..n {
                        s += self.get(i, j, k) * u[j] * v[k];
                    }
                }
                s
            })
            .collect()
    }
}

/// Dense rank-4 array `a[i][j][k][l]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Array4 {
    n: usize,
    data: Vec<f64>,
}

impl Array4 {
    pub fn zeros(n: usize) -> Self {
        Self {
            n,
            data: vec![0.0; n * n * n * n],
        }
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize, k: usize, l: usize) -> f64 {
        self.data[((i * self.n + j) * self.n + k) * self.n + l]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, k: usize, l: usize, v: f64) {
        self.data[((i * self.n + j) * self.n + k) * self.n + l] = v;
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }
}

/// A symmetric matrix of expressions `g_ij(y)` on a single chart.
#[derive(Debug, Clone)]
pub struct ChartMetric {
    n: usize,
    vars: Vec<String>,
    /// Upper triangle, row-major.
    upper: Vec<Expr>,
    signature: (usize, usize),
    schouten: Option<Vec<Expr>>,
}

/// Metric and inverse at a point.
#[derive(Debug, Clone)]
pub struct MetricPoint {
    pub g: DMatrix<f64>,
    pub g_inv: DMatrix<f64>,
}

/// First-order connection data at a point.
#[derive(Debug, Clone)]
pub struct Connection {
    pub g: DMatrix<f64>,
    pub g_inv: DMatrix<f64>,
    /// `dg[m][(i, j)] = ∂_m g_ij`.
    pub dg: Vec<DMatrix<f64>>,
    /// `Γ^i_jk` stored as `gamma.get(i, j, k)`.
    pub gamma: Array3,
    /// `∂_m Γ^i_jk` stored as `dgamma[m].get(i, j, k)`.
    pub dgamma: Vec<Array3>,
}

/// Full curvature stack at a point.
#[derive(Debug, Clone)]
pub struct CurvaturePoint {
    pub y: Vec<f64>,
    pub g: DMatrix<f64>,
    pub g_inv: DMatrix<f64>,
    pub gamma: Array3,
    pub dgamma: Vec<Array3>,
    /// `R^i_jkl` stored as `riemann.get(i, j, k, l)`.
    pub riemann: Array4,
    pub ricci: DMatrix<f64>,
    pub scalar: f64,
    pub schouten: DMatrix<f64>,
}

/// Curvature without the Schouten tensor (available in every dimension).
#[derive(Debug, Clone)]
pub struct Intrinsic {
    pub connection: Connection,
    pub riemann: Array4,
    pub ricci: DMatrix<f64>,
    pub scalar: f64,
}

fn upper_index(n: usize, i: usize, j: usize) -> usize {
    let (i, j) = if i <= j { (i, j) } else { (j, i) };
    i * (2 * n - i + 1) / 2 + (j - i)
}

fn default_vars(n: usize) -> Vec<String> {
    (1..=n).map(|i| format!("y{i}")).collect()
}

impl ChartMetric {
    /// Builds a metric from the upper triangle (row-major, `n(n+1)/2`
    /// entries) of expressions in the variables `vars`.
    pub fn new(
        vars: Vec<String>,
        upper: Vec<Expr>,
        signature: (usize, usize),
    ) -> Result<Self> {
        let n = vars.len();
        if n < 2 {
            return Err(Error::Dimension(format!("chart dimension {n} < 2")));
        }
        if upper.len() != n * (n + 1) / 2 {
            return Err(Error::Dimension(format!(
                "expected {} upper-triangle components, got {}",
                n * (n + 1) / 2,
                upper.len()
            )));
        }
        if signature.0 + signature.1 != n {
            return Err(Error::Dimension(format!(
                "signature {signature:?} does not sum to {n}"
            )));
        }
        if let Some(bad) = upper.iter().filter_map(Expr::max_var).find(|&i| i >= n) {
            return Err(Error::Dimension(format!("component uses variable index {bad}")));
        }
        Ok(Self {
            n,
            vars,
            upper,
            signature,
            schouten: None,
        })
    }

    /// Parses upper-triangle component strings in `y1..yn`.
    pub fn parse(n: usize, signature: (usize, usize), upper: &[&str]) -> Result<Self> {
        let vars = default_vars(n);
        let names: Vec<&str> = vars.iter().map(String::as_str).collect();
        let exprs = upper
            .iter()
            .map(|s| Expr::parse(s, &names))
            .collect::<Result<Vec<_>>>()?;
        Self::new(vars, exprs, signature)
    }

    fn diagonal(n: usize, signature: (usize, usize), diag: &[String]) -> Self {
        let mut upper = Vec::new();
        for i in 0..n {
            for j in i..n {
                upper.push(if i == j { diag[i].clone() } else { "0".into() });
            }
        }
        let refs: Vec<&str> = upper.iter().map(String::as_str).collect();
        Self::parse(n, signature, &refs).expect("built-in metric parses")
    }

    /// Euclidean metric on ℝⁿ.
    pub fn flat(n: usize) -> Self {
        Self::diagonal(n, (n, 0), &vec!["1".into(); n])
    }

    /// `diag(-1, 1, ..., 1)`; `y1` is the time coordinate.
    pub fn minkowski(n: usize) -> Self {
        let mut d = vec!["1".to_string(); n];
        d[0] = "-1".into();
        Self::diagonal(n, (n - 1, 1), &d)
    }

    /// Unit round sphere in hyperspherical angles:
    /// `dy1² + sin²y1 dy2² + sin²y1 sin²y2 dy3² + ...`.
    pub fn round_sphere_polar(n: usize) -> Self {
        let d: Vec<String> = (0..n)
            .map(|i| {
                if i == 0 {
                    "1".to_string()
                } else {
                    (1..=i)
                        .map(|k| format!("sin(y{k})^2"))
                        .collect::<Vec<_>>()
                        .join(" * ")
                }
            })
            .collect();
        Self::diagonal(n, (n, 0), &d)
    }

    /// Unit round sphere in stereographic coordinates, `4|dy|²/(1+|y|²)²`.
    pub fn round_sphere_stereographic(n: usize) -> Self {
        let r2 = (1..=n).map(|k| format!("y{k}^2")).collect::<Vec<_>>().join(" + ");
        let c = format!("4 / (1 + {r2})^2");
        Self::diagonal(n, (n, 0), &vec![c; n])
    }

    /// Hyperbolic upper half-space `|dy|²/y1²`, defined for `y1 > 0`.
    pub fn hyperbolic_upper_half(n: usize) -> Self {
        Self::diagonal(n, (n, 0), &vec!["1 / y1^2".to_string(); n])
    }

    /// Looks up a built-in metric by name.
    pub fn builtin(name: &str, n: usize) -> Option<Self> {
        if n < 2 {
            return None;
        }
        Some(match name {
            "flat" => Self::flat(n),
            "minkowski" => Self::minkowski(n),
            "round_sphere_polar" | "sphere_polar" => Self::round_sphere_polar(n),
            "round_sphere_stereographic" | "sphere_stereographic" => {
                Self::round_sphere_stereographic(n)
            }
            "hyperbolic_upper_half" | "hyperbolic" => Self::hyperbolic_upper_half(n),
            _ => return None,
        })
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn signature(&self) -> (usize, usize) {
        self.signature
    }

    pub fn var_names(&self) -> &[String] {
        &self.vars
    }

    pub fn component(&self, i: usize, j: usize) -> &Expr {
        &self.upper[upper_index(self.n, i, j)]
    }

    /// Component `(i, j)` of a supplied Schouten tensor.
    pub fn schouten_override_component(&self, i: usize, j: usize) -> Option<&Expr> {
        self.schouten.as_ref().map(|p| &p[upper_index(self.n, i, j)])
    }

    pub fn has_schouten_override(&self) -> bool {
        self.schouten.is_some()
    }

    /// Whether a Schouten tensor is available (computed for `n ≥ 3`,
    /// supplied for `n = 2`).
    pub fn has_schouten(&self) -> bool {
        self.n >= 3 || self.schouten.is_some()
    }

    fn check(&self, y: &[f64]) -> Result<()> {
        if y.len() != self.n {
            return Err(Error::Dimension(format!(
                "point has {} coordinates, chart has {}",
                y.len(),
                self.n
            )));
        }
        if y.iter().any(|v| !v.is_finite()) {
            return Err(Error::Domain(format!("non-finite point {y:?}")));
        }
        Ok(())
    }

    fn invert(&self, g: &DMatrix<f64>, y: &[f64]) -> Result<DMatrix<f64>> {
        let eig = SymmetricEigen::new(g.clone());
        let abs: Vec<f64> = eig.eigenvalues.iter().map(|v| v.abs()).collect();
        let max = abs.iter().cloned().fold(0.0, f64::max);
        let min = abs.iter().cloned().fold(f64::INFINITY, f64::min);
        let condition = if min > 0.0 { max / min } else { f64::INFINITY };
        if !(condition <= MAX_CONDITION) {
            return Err(Error::SingularMetric {
                point: y.to_vec(),
                condition,
            });
        }
        let found_pos = eig.eigenvalues.iter().filter(|&&v| v > 0.0).count();
        let found_neg = self.n - found_pos;
        if (found_pos, found_neg) != self.signature {
            return Err(Error::SignatureMismatch {
                point: y.to_vec(),
                pos: self.signature.0,
                neg: self.signature.1,
                found_pos,
                found_neg,
            });
        }
        let inv = g.clone().lu().try_inverse().ok_or(Error::SingularMetric {
            point: y.to_vec(),
            condition,
        })?;
        // Symmetrize away roundoff from the pivoted solve.
        Ok((&inv + inv.transpose()) * 0.5)
    }

    /// Metric and its inverse at `y`.
    pub fn metric_at(&self, y: &[f64]) -> Result<MetricPoint> {
        self.check(y)?;
        let n = self.n;
        let mut g = DMatrix::zeros(n, n);
        for i in 0..n {
            for j in i..n {
                let v = self.component(i, j).eval(y)?;
                g[(i, j)] = v;
                g[(j, i)] = v;
            }
        }
        let g_inv = self.invert(&g, y)?;
        Ok(MetricPoint { g, g_inv })
    }

    /// Christoffel symbols `Γ^i_jk` at `y`.
    pub fn christoffel(&self, y: &[f64]) -> Result<Array3> {
        Ok(self.connection_at(y)?.gamma)
    }

    /// Metric, first derivatives, Christoffel symbols and their derivatives.
    pub fn connection_at(&self, y: &[f64]) -> Result<Connection> {
        self.check(y)?;
        let n = self.n;
        let jets = self
            .upper
            .iter()
            .map(|e| e.eval_jet2(y))
            .collect::<Result<Vec<Jet2>>>()?;
        let jet = |i: usize, j: usize| &jets[upper_index(n, i, j)];
        let g = DMatrix::from_fn(n, n, |i, j| jet(i, j).value());
        let g_inv = self.invert(&g, y)?;
        let dg: Vec<DMatrix<f64>> = (0..n)
            .map(|m| DMatrix::from_fn(n, n, |i, j| jet(i, j).grad()[m]))
            .collect();
        // ddg(m, p, i, j) = ∂_m ∂_p g_ij
        let ddg = |m: usize, p: usize, i: usize, j: usize| jet(i, j).hess(m, p);

        // Christoffel symbols of the first kind and their derivatives:
        // Γ_ljk = ½(∂_j g_lk + ∂_k g_lj − ∂_l g_jk).
        let mut first = Array3::zeros(n);
        let mut dfirst: Vec<Array3> = (0..n).map(|_| Array3::zeros(n)).collect();
        for l in 0..n {
            for j in 0..n {
                for k in 0..n {
                    first.set(
                        l,
                        j,
                        k,
                        0.5 * (dg[j][(l, k)] + dg[k][(l, j)] - dg[l][(j, k)]),
                    );
                    for (m, dm) in dfirst.iter_mut().enumerate() {
                        dm.set(
                            l,
                            j,
                            k,
                            0.5 * (ddg(m, j, l, k) + ddg(m, k, l, j) - ddg(m, l, j, k)),
                        );
                    }
                }
            }
        }
        // ∂_m g^{il} = −g^{ia} ∂_m g_ab g^{bl}
        let dg_inv: Vec<DMatrix<f64>> = dg.iter().map(|d| -(&g_inv * d * &g_inv)).collect();

        let mut gamma = Array3::zeros(n);
        let mut dgamma: Vec<Array3> = (0..n).map(|_| Array3::zeros(n)).collect();
        for i in 0..n {
            for j in 0..n {
                for k in j..n {
                    let mut v = 0.0;
                    for l in 0..n {
                        v += g_inv[(i, l)] * first.get(l, j, k);
                    }
                    gamma.set(i, j, k, v);
                    gamma.set(i, k, j, v);
                    for m in 0..n {
                        let mut d = 0.0;
                        for l in 0..n {
                            d += dg_inv[m][(i, l)] * first.get(l, j, k)
                                + g_inv[(i, l)] * dfirst[m].get(l, j, k);
                        }
                        dgamma[m].set(i, j, k, d);
                        dgamma[m].set(i, k, j, d);
                    }
                }
            }
        }
        Ok(Connection {
            g,
            g_inv,
            dg,
            gamma,
            dgamma,
        })
    }

    /// Riemann, Ricci and scalar curvature (no Schouten tensor needed).
    pub fn intrinsic_at(&self, y: &[f64]) -> Result<Intrinsic> {
        let connection = self.connection_at(y)?;
        let n = self.n;
        let (ga, dga) = (&connection.gamma, &connection.dgamma);
        let mut riemann = Array4::zeros(n);
        for i in 0..n {
            for j in 0..n {
                for k in 0..n {
                    for l in (k + 1)..n {
                        let mut v = dga[k].get(i, l, j) - dga[l].get(i, k, j);
                        for m in 0..n {
                            v += ga.get(i, k, m) * ga.get(m, l, j) - ga.get(i, l, m) * ga.get(m, k, j);
                        }
                        riemann.set(i, j, k, l, v);
                        riemann.set(i, j, l, k, -v);
                    }
                }
            }
        }
        let mut ricci = DMatrix::from_fn(n, n, |j, l| (0..n).map(|i| riemann.get(i, j, i, l)).sum());
        ricci = (&ricci + ricci.transpose()) * 0.5;
        let scalar = connection.g_inv.component_mul(&ricci).sum();
        Ok(Intrinsic {
            connection,
            riemann,
            ricci,
            scalar,
        })
    }

    /// Full curvature stack including the Schouten tensor.
    pub fn curvature_at(&self, y: &[f64]) -> Result<CurvaturePoint> {
        let intr = self.intrinsic_at(y)?;
        let schouten = match &self.schouten {
            Some(p) => self.override_at(p, y)?,
            None if self.n >= 3 => schouten_from_ricci(&intr.ricci, intr.scalar, &intr.connection.g),
            None => return Err(Error::UnsupportedSchouten),
        };
        let Intrinsic {
            connection,
            riemann,
            ricci,
            scalar,
        } = intr;
        Ok(CurvaturePoint {
            y: y.to_vec(),
            g: connection.g,
            g_inv: connection.g_inv,
            gamma: connection.gamma,
            dgamma: connection.dgamma,
            riemann,
            ricci,
            scalar,
            schouten,
        })
    }

    /// Schouten tensor `P_ij` at `y`.
    pub fn schouten_at(&self, y: &[f64]) -> Result<DMatrix<f64>> {
        match &self.schouten {
            Some(p) => {
                self.check(y)?;
                self.override_at(p, y)
            }
            None if self.n >= 3 => {
                let c = self.intrinsic_at(y)?;
                Ok(schouten_from_ricci(&c.ricci, c.scalar, &c.connection.g))
            }
            None => Err(Error::UnsupportedSchouten),
        }
    }

    /// `P` and its coordinate derivatives `∂_m P_ij`: exact jets for an
    /// override, central differences with step `1e-5` otherwise.
    pub fn schouten_with_derivatives(&self, y: &[f64]) -> Result<(DMatrix<f64>, Vec<DMatrix<f64>>)> {
        let n = self.n;
        if let Some(p) = &self.schouten {
            self.check(y)?;
            let jets = p.iter().map(|e| e.eval_jet2(y)).collect::<Result<Vec<_>>>()?;
            let at = |i, j| &jets[upper_index(n, i, j)];
            let val = DMatrix::from_fn(n, n, |i, j| at(i, j).value());
            let d = (0..n)
                .map(|m| DMatrix::from_fn(n, n, |i, j| at(i, j).grad()[m]))
                .collect();
            return Ok((val, d));
        }
        let val = self.schouten_at(y)?;
        let h = 1e-5;
        let mut d = Vec::with_capacity(n);
        for m in 0..n {
            let (mut a, mut b) = (y.to_vec(), y.to_vec());
            a[m] += h;
            b[m] -= h;
            d.push((self.schouten_at(&a)? - self.schouten_at(&b)?) / (2.0 * h));
        }
        Ok((val, d))
    }

    fn override_at(&self, p: &[Expr], y: &[f64]) -> Result<DMatrix<f64>> {
        let n = self.n;
        let mut out = DMatrix::zeros(n, n);
        for i in 0..n {
            for j in i..n {
                let v = p[upper_index(n, i, j)].eval(y)?;
                out[(i, j)] = v;
                out[(j, i)] = v;
            }
        }
        Ok(out)
    }

    /// Attaches a user-supplied Schouten tensor (upper triangle) to a
    /// two-dimensional chart and validates the trace identity
    /// `tr_g P = R/2` and the divergence identity `∇^j P_ij = ∇_i tr_g P` at
    /// each sample point.
    pub fn with_schouten_override(mut self, p: Vec<Expr>, samples: &[Vec<f64>]) -> Result<Self> {
        if self.n != 2 {
            return Err(Error::Dimension(format!(
                "a Schouten override needs a two-dimensional chart, got {}",
                self.n
            )));
        }
        if p.len() != 3 {
            return Err(Error::Dimension(format!("expected 3 Schouten components, got {}", p.len())));
        }
        if let Some(bad) = p.iter().filter_map(Expr::max_var).find(|&i| i >= 2) {
            return Err(Error::Dimension(format!("Schouten component uses variable index {bad}")));
        }
        self.schouten = Some(p);
        for y in samples {
            self.validate_override(y)?;
        }
        Ok(self)
    }

    /// Parsing convenience for [`Self::with_schouten_override`].
    pub fn schouten_override(self, upper: &[&str], samples: &[Vec<f64>]) -> Result<Self> {
        let names: Vec<&str> = self.vars.iter().map(String::as_str).collect();
        let p = upper
            .iter()
            .map(|s| Expr::parse(s, &names))
            .collect::<Result<Vec<_>>>()?;
        self.with_schouten_override(p, samples)
    }

    fn validate_override(&self, y: &[f64]) -> Result<()> {
        let intr = self.intrinsic_at(y)?;
        let c = &intr.connection;
        let (p, dp) = self.schouten_with_derivatives(y)?;
        let n = self.n;
        let tr = c.g_inv.component_mul(&p).sum();
        let half_r = 0.5 * intr.scalar;
        let scale = 1.0 + half_r.abs() + p.abs().max() * c.g_inv.abs().max();
        if (tr - half_r).abs() > 1e-8 * scale {
            return Err(Error::SchoutenIdentity {
                identity: "trace identity tr P = R/2",
                point: y.to_vec(),
                lhs: tr,
                rhs: half_r,
            });
        }
        // ∇_k P_ij = ∂_k P_ij − Γ^m_ki P_mj − Γ^m_kj P_im
        let nabla = |k: usize, i: usize, j: usize| {
            let mut v = dp[k][(i, j)];
            for m in 0..n {
                v -= c.gamma.get(m, k, i) * p[(m, j)] + c.gamma.get(m, k, j) * p[(i, m)];
            }
            v
        };
        let dg_inv: Vec<DMatrix<f64>> = c.dg.iter().map(|d| -(&c.g_inv * d * &c.g_inv)).collect();
        for i in 0..n {
            let mut div = 0.0;
            for j in 0..n {
                for k in 0..n {
                    div += c.g_inv[(j, k)] * nabla(k, i, j);
                }
            }
            let dtr = dg_inv[i].component_mul(&p).sum() + c.g_inv.component_mul(&dp[i]).sum();
            let scale = 1.0 + div.abs() + dtr.abs();
            if (div - dtr).abs() > 1e-8 * scale {
                return Err(Error::SchoutenIdentity {
                    identity: "divergence identity div P = d tr P",
                    point: y.to_vec(),
                    lhs: div,
                    rhs: dtr,
                });
            }
        }
        Ok(())
    }
}

/// `P = (Ric − R g / (2(n−1))) / (n−2)` for `n ≥ 3`.
pub fn schouten_from_ricci(ricci: &DMatrix<f64>, scalar: f64, g: &DMatrix<f64>) -> DMatrix<f64> {
    let n = g.nrows() as f64;
    (ricci - g * (scalar / (2.0 * (n - 1.0)))) / (n - 2.0)
}

/// Lowers all indices: `R_ijkl = g_im R^m_jkl`.
pub fn lower_riemann(riemann: &Array4, g: &DMatrix<f64>) -> Array4 {
    let n = g.nrows();
    let mut out = Array4::zeros(n);
    for i in 0..n {
        for j in 0..n {
            for k in 0..n {
                for l in 0..n {
                    let v = (0..n).map(|m| g[(i, m)] * riemann.get(m, j, k, l)).sum();
                    out.set(i, j, k, l, v);
                }
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;
    use std::f64::consts::PI;

    #[test]
    fn flat_and_minkowski_inverses() {
        let m = ChartMetric::flat(3).metric_at(&[0.3, -2.0, 7.0]).unwrap();
        assert_eq!(m.g, DMatrix::identity(3, 3));
        assert_eq!(m.g_inv, DMatrix::identity(3, 3));
        let m = ChartMetric::minkowski(3).metric_at(&[1.0, 2.0, 3.0]).unwrap();
        assert_eq!(m.g, m.g_inv);
        assert_eq!(m.g[(0, 0)], -1.0);
    }

    #[test]
    fn polar_sphere_inverse() {
        let m = ChartMetric::round_sphere_polar(2).metric_at(&[PI / 4.0, 0.3]).unwrap();
        assert_relative_eq!(m.g_inv[(0, 0)], 1.0, epsilon = 1e-14);
        assert_relative_eq!(m.g_inv[(1, 1)], 2.0, epsilon = 1e-14);
        assert_eq!(m.g_inv[(0, 1)], 0.0);
    }

    #[test]
    fn singular_and_signature_errors() {
        let err = ChartMetric::round_sphere_polar(2).metric_at(&[0.0, 0.0]).unwrap_err();
        assert!(matches!(err, Error::SingularMetric { .. }));
        let err = ChartMetric::flat(2).metric_at(&[0.0]).unwrap_err();
        assert!(matches!(err, Error::Dimension(_)));
        let wrong = ChartMetric::parse(2, (2, 0), &["-1", "0", "1"]).unwrap();
        assert!(matches!(
            wrong.metric_at(&[0.0, 0.0]).unwrap_err(),
            Error::SignatureMismatch { found_pos: 1, found_neg: 1, .. }
        ));
    }

    #[test]
    fn christoffel_closed_forms() {
        assert_eq!(ChartMetric::flat(3).christoffel(&[1.0, 2.0, 3.0]).unwrap().max_abs(), 0.0);

        let th = 0.7;
        let g = ChartMetric::round_sphere_polar(2).christoffel(&[th, 1.1]).unwrap();
        assert_relative_eq!(g.get(0, 1, 1), -th.sin() * th.cos(), epsilon = 1e-14);
        assert_relative_eq!(g.get(1, 0, 1), th.cos() / th.sin(), epsilon = 1e-14);
        assert_relative_eq!(g.get(1, 1, 0), th.cos() / th.sin(), epsilon = 1e-14);
        assert_eq!(g.get(0, 0, 0), 0.0);

        let s = 0.4;
        let g = ChartMetric::hyperbolic_upper_half(2).christoffel(&[s, 3.0]).unwrap();
        assert_relative_eq!(g.get(0, 0, 0), -1.0 / s, epsilon = 1e-14);
        assert_relative_eq!(g.get(0, 1, 1), 1.0 / s, epsilon = 1e-14);
        assert_relative_eq!(g.get(1, 0, 1), -1.0 / s, epsilon = 1e-14);
    }

    #[test]
    fn constant_curvature_values() {
        let flat = ChartMetric::flat(3).curvature_at(&[0.1, 0.2, 0.3]).unwrap();
        assert_eq!(flat.riemann.max_abs(), 0.0);
        assert_eq!(flat.schouten.abs().max(), 0.0);

        let c = ChartMetric::round_sphere_polar(3).curvature_at(&[1.0, 0.8, 0.2]).unwrap();
        assert_relative_eq!(c.scalar, 6.0, epsilon = 1e-12);
        assert!((&c.schouten - &c.g * 0.5).abs().max() < 1e-12);

        let h = ChartMetric::hyperbolic_upper_half(2).intrinsic_at(&[0.7, -1.0]).unwrap();
        assert_relative_eq!(h.scalar, -2.0, epsilon = 1e-12);
    }

    #[test]
    fn two_dimensional_schouten_needs_override() {
        let m = ChartMetric::flat(2);
        assert_eq!(m.curvature_at(&[0.0, 0.0]).unwrap_err(), Error::UnsupportedSchouten);
        let samples = vec![vec![0.0, 0.0], vec![1.0, -2.0]];
        let ok = m.clone().schouten_override(&["0", "0", "0"], &samples).unwrap();
        assert_eq!(ok.curvature_at(&[0.3, 0.3]).unwrap().schouten.abs().max(), 0.0);
        let bad = m.schouten_override(&["1", "0", "1"], &samples).unwrap_err();
        assert!(matches!(bad, Error::SchoutenIdentity { .. }));

        let sphere = ChartMetric::round_sphere_polar(2);
        let samples = vec![vec![0.5, 0.1], vec![1.3, 2.0]];
        let s2 = sphere
            .schouten_override(&["0.5", "0", "0.5*sin(y1)^2"], &samples)
            .unwrap();
        let c = s2.curvature_at(&[0.9, 0.0]).unwrap();
        assert_relative_eq!(c.scalar, 2.0, epsilon = 1e-12);
        assert_relative_eq!(c.g_inv.component_mul(&c.schouten).sum(), 1.0, epsilon = 1e-12);

        // Trace-free but not divergence-free on the flat plane.
        let flat = ChartMetric::flat(2);
        let err = flat.schouten_override(&["y2", "0", "-y2"], &samples).unwrap_err();
        assert!(matches!(err, Error::SchoutenIdentity { identity, .. } if identity.starts_with("divergence")));
    }

    fn builtins() -> Vec<(ChartMetric, f64)> {
        vec![
            (ChartMetric::flat(3), 0.0),
            (ChartMetric::minkowski(3), 0.0),
            (ChartMetric::round_sphere_polar(3), 1.0),
            (ChartMetric::round_sphere_stereographic(3), 1.0),
            (ChartMetric::hyperbolic_upper_half(3), -1.0),
            (ChartMetric::round_sphere_polar(2), 1.0),
            (ChartMetric::hyperbolic_upper_half(2), -1.0),
        ]
    }

    /// Map a unit-cube sample into the chart domain of `m`.
    fn chart_point(idx: usize, u: [f64; 3], n: usize) -> Vec<f64> {
        let u = &u[..n];
        match idx {
            2 | 5 => u.iter().map(|v| 0.3 + 2.5 * v).collect(),
            4 | 6 => {
                let mut y: Vec<f64> = u.iter().map(|v| 4.0 * v - 2.0).collect();
                y[0] = 0.1 + 2.0 * u[0];
                y
            }
            _ => u.iter().map(|v| 4.0 * v - 2.0).collect(),
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(100))]

        #[test]
        fn metric_compatibility(u in proptest::array::uniform3(0.0f64..1.0), which in 0usize..7) {
            let (m, _) = &builtins()[which];
            let y = chart_point(which, u, m.dim());
            let c = m.connection_at(&y).unwrap();
            let n = m.dim();
            let scale = 1.0 + c.dg.iter().map(|d| d.abs().max()).fold(0.0, f64::max);
            for i in 0..n { for j in 0..n { for k in 0..n {
                let mut rhs = 0.0;
                for l in 0..n {
                    rhs += c.g[(l, j)] * c.gamma.get(l, k, i) + c.g[(i, l)] * c.gamma.get(l, k, j);
                }
                prop_assert!((c.dg[k][(i, j)] - rhs).abs() < 1e-10 * scale);
                prop_assert_eq!(c.gamma.get(i, j, k), c.gamma.get(i, k, j));
            }}}
            let id = &c.g * &c.g_inv;
            prop_assert!((id - DMatrix::identity(n, n)).abs().max() < 1e-12 * c.g.abs().max().max(1.0));
        }

        #[test]
        fn constant_curvature_pattern(u in proptest::array::uniform3(0.0f64..1.0), which in 0usize..7) {
            let (m, kappa) = &builtins()[which];
            let y = chart_point(which, u, m.dim());
            let c = m.intrinsic_at(&y).unwrap();
            let g = &c.connection.g;
            let low = lower_riemann(&c.riemann, g);
            let n = m.dim();
            let scale = g.abs().max().powi(2).max(1e-300);
            for i in 0..n { for j in 0..n { for k in 0..n { for l in 0..n {
                let want = kappa * (g[(i, k)] * g[(j, l)] - g[(i, l)] * g[(j, k)]);
                prop_assert!((low.get(i, j, k, l) - want).abs() < 1e-9 * scale);
                // First Bianchi identity and pair antisymmetries.
                let bianchi = low.get(i, j, k, l) + low.get(i, k, l, j) + low.get(i, l, j, k);
                prop_assert!(bianchi.abs() < 1e-10 * scale);
                prop_assert!((low.get(i, j, k, l) + low.get(j, i, k, l)).abs() < 1e-10 * scale);
            }}}}
            prop_assert!((&c.ricci - c.ricci.transpose()).abs().max() == 0.0);
        }

        #[test]
        fn schouten_trace_on_perturbed_metrics(
            coeffs in proptest::array::uniform6(-0.1f64..0.1),
            y in proptest::array::uniform3(-1.0f64..1.0),
        ) {
            let [a, b, c, d, e, f] = coeffs;
            let m = ChartMetric::parse(3, (3, 0), &[
                &format!("1 + {a}*y1^2 + {b}*y2*y3"), &format!("{c}*y1*y2"), "0",
                &format!("1 + {d}*y3^2*y1"), &format!("{e}*y2"),
                &format!("1 + {f}*y1*y2*y3 + 0.05*y2^2"),
            ]).unwrap();
            let cp = m.curvature_at(&y).unwrap();
            let tr = cp.g_inv.component_mul(&cp.schouten).sum();
            let want = cp.scalar / 4.0;
            prop_assert!((tr - want).abs() < 1e-10 * want.abs().max(1e-3));
        }
    }

    #[test]
    fn contracted_bianchi_spot_check() {
        // ∇^j P_ij = ∇_i tr P on a non-symmetric 3-metric, derivatives of P by
        // a fourth-order difference stencil.
        let m = ChartMetric::parse(
            3,
            (3, 0),
            &["1 + 0.2*y1^2*y2", "0.1*y3", "0", "1 + 0.1*sin(y1)", "0.05*y1*y2", "exp(0.1*y2)"],
        )
        .unwrap();
        let y = [0.3, -0.4, 0.5];
        let n = 3;
        let h = 1e-3;
        let p_at = |y: &[f64]| m.schouten_at(y).unwrap();
        let dp: Vec<DMatrix<f64>> = (0..n)
            .map(|k| {
                let shift = |d: f64| {
                    let mut z = y.to_vec();
                    z[k] += d * h;
                    p_at(&z)
                };
                (shift(-2.0) - shift(-1.0) * 8.0 + shift(1.0) * 8.0 - shift(2.0)) / (12.0 * h)
            })
            .collect();
        let c = m.connection_at(&y).unwrap();
        let p = p_at(&y);
        let tr_at = |y: &[f64]| {
            let g = m.metric_at(y).unwrap();
            g.g_inv.component_mul(&p_at(y)).sum()
        };
        for i in 0..n {
            let mut div = 0.0;
            for j in 0..n {
                for k in 0..n {
                    let mut nab = dp[k][(i, j)];
                    for l in 0..n {
                        nab -= c.gamma.get(l, k, i) * p[(l, j)] + c.gamma.get(l, k, j) * p[(i, l)];
                    }
                    div += c.g_inv[(j, k)] * nab;
                }
            }
            let shift = |d: f64| {
                let mut z = y.to_vec();
                z[i] += d * h;
                tr_at(&z)
            };
            let dtr = (shift(-2.0) - 8.0 * shift(-1.0) + 8.0 * shift(1.0) - shift(2.0)) / (12.0 * h);
            assert!((div - dtr).abs() < 1e-8, "i={i}: {div} vs {dtr}");
        }
    }
}
