//! Normal-form targets `g₊ = (dx² + g_x)/x²` over a boundary chart.
//!
//! Coordinates on the target are `(x, y1, ..., yn)` with index 0 for `x`.
//! Christoffel symbols use the block structure of the normal form and exact
//! boundary jets; only the Schouten derivatives of a computed (not
//! supplied) Schouten tensor involve a difference quotient.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::expr::Expr;
use crate::tensor::{Array3, Array4, ChartMetric};

/// How `g_x` depends on `x`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AmbientMode {
    /// `g_x = g` over a flat Riemannian boundary: hyperbolic space.
    ExactHyperbolicUpperHalf,
    /// `g_x = (1 − x²/4)² g` over the unit round sphere: the Poincaré ball.
    ExactBall,
    /// `g_x = g` over a flat Lorentzian boundary: anti-de Sitter space.
    ExactAdS,
    /// `g_x = g − x² P`, the Einstein expansion truncated after `x²`.
    Truncated2,
}

impl AmbientMode {
    pub fn from_name(name: &str) -> Option<Self> {
        Some(match name {
            "exact_hyperbolic" | "exact_hyperbolic_upper_half" | "hyperbolic" => {
                Self::ExactHyperbolicUpperHalf
            }
            "exact_ball" | "ball" => Self::ExactBall,
            "exact_ads" | "ads" => Self::ExactAdS,
            "truncated2" | "truncated" => Self::Truncated2,
            _ => return None,
        })
    }

    pub fn name(self) -> &'static str {
        match self {
            Self::ExactHyperbolicUpperHalf => "exact_hyperbolic",
            Self::ExactBall => "exact_ball",
            Self::ExactAdS => "exact_ads",
            Self::Truncated2 => "truncated2",
        }
    }

    pub fn is_exact(self) -> bool {
        self != Self::Truncated2
    }

    /// `f(x)` and `f'(x)` for the modes with `g_x = f(x) g`.
    fn factor(self, x: f64) -> Option<(f64, f64)> {
        match self {
            Self::ExactHyperbolicUpperHalf | Self::ExactAdS => Some((1.0, 0.0)),
            Self::ExactBall => {
                let q = 1.0 - 0.25 * x * x;
                Some((q * q, -x * q))
            }
            Self::Truncated2 => None,
        }
    }
}

/// A normal-form target metric.
#[derive(Debug, Clone)]
pub struct AmbientMetric {
    boundary: ChartMetric,
    mode: AmbientMode,
}

/// Leading-order Christoffel predictions at `(x, y)`.
#[derive(Debug, Clone)]
pub struct LeadingChristoffel {
    /// `Γ^0_00 = −1/x`
    pub g0_00: f64,
    /// `Γ^0_jk ≈ g_jk/x`
    pub g0_jk: DMatrix<f64>,
    /// `Γ^i_0k ≈ −δ^i_k/x − x P^i_k`
    pub gi_0k: DMatrix<f64>,
    /// `Γ^i_jk ≈ (Γ^g)^i_jk`
    pub gi_jk: Array3,
}

struct Slice {
    h: DMatrix<f64>,
    h_inv: DMatrix<f64>,
    dh_dx: DMatrix<f64>,
    gamma_h: Array3,
}

fn check_x(x: f64) -> Result<()> {
    if x > 0.0 && x.is_finite() {
        Ok(())
    } else {
        Err(Error::NonPositiveCoordinate(x))
    }
}

impl AmbientMetric {
    pub fn new(boundary: ChartMetric, mode: AmbientMode) -> Result<Self> {
        if mode == AmbientMode::Truncated2 && !boundary.has_schouten() {
            return Err(Error::UnsupportedSchouten);
        }
        Ok(Self { boundary, mode })
    }

    pub fn boundary(&self) -> &ChartMetric {
        &self.boundary
    }

    pub fn mode(&self) -> AmbientMode {
        self.mode
    }

    /// Boundary dimension `n`; the target has dimension `n + 1`.
    pub fn n(&self) -> usize {
        self.boundary.dim()
    }

    /// `g_x(y)`.
    pub fn gx_at(&self, x: f64, y: &[f64]) -> Result<DMatrix<f64>> {
        let g = self.boundary.metric_at(y)?.g;
        Ok(match self.mode.factor(x) {
            Some((f, _)) => g * f,
            None => g - self.boundary.schouten_at(y)? * (x * x),
        })
    }

    /// `g₊` at `(x, y)` as an `(n+1) × (n+1)` matrix.
    pub fn gplus_at(&self, x: f64, y: &[f64]) -> Result<DMatrix<f64>> {
        check_x(x)?;
        let gx = self.gx_at(x, y)?;
        Ok(block(&gx, x))
    }

    fn slice(&self, x: f64, y: &[f64]) -> Result<Slice> {
        let c = self.boundary.connection_at(y)?;
        let n = self.n();
        Ok(match self.mode.factor(x) {
            Some((f, df)) => Slice {
                h: &c.g * f,
                h_inv: &c.g_inv / f,
                dh_dx: &c.g * df,
                // A constant rescaling in y leaves the connection unchanged.
                gamma_h: c.gamma,
            },
            None => {
                let (p, dp) = self.boundary.schouten_with_derivatives(y)?;
                let x2 = x * x;
                let h = &c.g - &p * x2;
                let h_inv = h.clone().lu().try_inverse().ok_or_else(|| Error::SingularMetric {
                    point: std::iter::once(x).chain(y.iter().cloned()).collect(),
                    condition: f64::INFINITY,
                })?;
                let dh: Vec<DMatrix<f64>> = (0..n).map(|m| &c.dg[m] - &dp[m] * x2).collect();
                let mut gamma_h = Array3::zeros(n);
                for i in 0..n {
                    for j in 0..n {
                        for k in j..n {
                            let v: f64 = (0..n)
                                .map(|l| {
                                    0.5 * h_inv[(i, l)]
                                        * (dh[j][(l, k)] + dh[k][(l, j)] - dh[l][(j, k)])
                                })
                                .sum();
                            gamma_h.set(i, j, k, v);
                            gamma_h.set(i, k, j, v);
                        }
                    }
                }
                Slice {
                    h,
                    h_inv,
                    dh_dx: -(p * (2.0 * x)),
                    gamma_h,
                }
            }
        })
    }

    /// Christoffel symbols of `g₊`, indices `0..=n` with 0 for `x`.
    ///
    /// Writing `g₊ = x⁻²(dx² + h)`:
    /// `Γ^0_00 = −1/x`, `Γ^0_ij = h_ij/x − ½∂_x h_ij`,
    /// `Γ^i_0j = ½h^{ik}∂_x h_kj − δ^i_j/x`, `Γ^i_jk = Γ(h)^i_jk`,
    /// and the remaining components vanish.
    pub fn christoffel_gplus(&self, x: f64, y: &[f64]) -> Result<Array3> {
        check_x(x)?;
        let n = self.n();
        let s = self.slice(x, y)?;
        let mut out = Array3::zeros(n + 1);
        out.set(0, 0, 0, -1.0 / x);
        let hx = &s.h_inv * &s.dh_dx;
        for i in 0..n {
            for j in 0..n {
                out.set(0, i + 1, j + 1, s.h[(i, j)] / x - 0.5 * s.dh_dx[(i, j)]);
                let mixed = 0.5 * hx[(i, j)] - if i == j { 1.0 / x } else { 0.0 };
                out.set(i + 1, 0, j + 1, mixed);
                out.set(i + 1, j + 1, 0, mixed);
                for k in 0..n {
                    out.set(i + 1, j + 1, k + 1, s.gamma_h.get(i, j, k));
                }
            }
        }
        Ok(out)
    }

    /// Leading-order asymptotic forms of the Christoffel symbols, built
    /// from boundary data only.
    pub fn leading_christoffel(&self, x: f64, y: &[f64]) -> Result<LeadingChristoffel> {
        check_x(x)?;
        let c = self.boundary.connection_at(y)?;
        let n = self.n();
        let p_mixed = if self.boundary.has_schouten() {
            &c.g_inv * self.boundary.schouten_at(y)?
        } else {
            DMatrix::zeros(n, n)
        };
        Ok(LeadingChristoffel {
            g0_00: -1.0 / x,
            g0_jk: &c.g / x,
            gi_0k: -DMatrix::identity(n, n) / x - p_mixed * x,
            gi_jk: c.gamma,
        })
    }

    /// Largest `g₊`-relative entry `|E_IJ| / sqrt(|g_II g_JJ|)` of
    /// `E = Ric(g₊) + n g₊`, with the Ricci tensor obtained by nested
    /// central differences of [`Self::gplus_at`].
    pub fn einstein_residual(&self, x: f64, y: &[f64]) -> Result<f64> {
        check_x(x)?;
        let n = self.n();
        let dim = n + 1;
        let hx = 1e-4 * x;
        let hy = 1e-4;
        if hx < 1e-12 {
            return Err(Error::StepUnderflow { t: x });
        }
        let step = |k: usize| if k == 0 { hx } else { hy };
        let at = |z: &[f64]| self.gplus_at(z[0], &z[1..]);
        let shifted = |z: &[f64], k: usize, d: f64| {
            let mut w = z.to_vec();
            w[k] += d;
            w
        };
        // Christoffel symbols at z from central differences of g₊.
        let gamma_fd = |z: &[f64]| -> Result<Array3> {
            let g = at(z)?;
            let g_inv = g.clone().lu().try_inverse().ok_or_else(|| Error::SingularMetric {
                point: z.to_vec(),
                condition: f64::INFINITY,
            })?;
            let dg = (0..dim)
                .map(|k| {
                    let h = step(k);
                    Ok((at(&shifted(z, k, h))? - at(&shifted(z, k, -h))?) / (2.0 * h))
                })
                .collect::<Result<Vec<DMatrix<f64>>>>()?;
            let mut out = Array3::zeros(dim);
            for i in 0..dim {
                for j in 0..dim {
                    for k in 0..dim {
                        let v = (0..dim)
                            .map(|l| 0.5 * g_inv[(i, l)] * (dg[j][(l, k)] + dg[k][(l, j)] - dg[l][(j, k)]))
                            .sum();
                        out.set(i, j, k, v);
                    }
                }
            }
            Ok(out)
        };
        let z: Vec<f64> = std::iter::once(x).chain(y.iter().cloned()).collect();
        let gamma = gamma_fd(&z)?;
        let dgamma = (0..dim)
            .map(|m| {
                let h = step(m);
                let (p, q) = (gamma_fd(&shifted(&z, m, h))?, gamma_fd(&shifted(&z, m, -h))?);
                let mut d = Array3::zeros(dim);
                for i in 0..dim {
                    for j in 0..dim {
                        for k in 0..dim {
                            d.set(i, j, k, (p.get(i, j, k) - q.get(i, j, k)) / (2.0 * h));
                        }
                    }
                }
                Ok(d)
            })
            .collect::<Result<Vec<_>>>()?;
        let mut ricci = DMatrix::zeros(dim, dim);
        for j in 0..dim {
            for l in 0..dim {
                let mut v = 0.0;
                for i in 0..dim {
                    v += dgamma[i].get(i, l, j) - dgamma[l].get(i, i, j);
                    for m in 0..dim {
                        v += gamma.get(i, i, m) * gamma.get(m, l, j) - gamma.get(i, l, m) * gamma.get(m, i, j);
                    }
                }
                ricci[(j, l)] = v;
            }
        }
        let g = at(&z)?;
        let e = ricci + &g * (n as f64);
        let mut worst = 0.0f64;
        for i in 0..dim {
            for j in 0..dim {
                worst = worst.max(e[(i, j)].abs() / (g[(i, i)] * g[(j, j)]).abs().sqrt());
            }
        }
        Ok(worst)
    }

    /// The target as a chart metric in `(x, y1..yn)`, for the exact modes
    /// and for a truncated target over a supplied Schouten tensor.
    pub fn as_chart_metric(&self) -> Result<ChartMetric> {
        let n = self.n();
        let shift = |e: &Expr| e.map_vars(&|i, name| (i + 1, name.to_string()));
        let x = || Box::new(Expr::var(0, "x"));
        let inv_x2 = || {
            Box::new(Expr::Div(
                Box::new(Expr::Num(1.0)),
                Box::new(Expr::Pow(x(), 2.0)),
            ))
        };
        let slice_factor: Option<Expr> = match self.mode {
            AmbientMode::ExactHyperbolicUpperHalf | AmbientMode::ExactAdS => None,
            AmbientMode::ExactBall => Some(Expr::parse("(1 - x^2/4)^2", &["x"])?),
            AmbientMode::Truncated2 => {
                if !self.boundary.has_schouten_override() {
                    return Err(Error::Invalid(
                        "a truncated target needs a supplied Schouten tensor to be exported".into(),
                    ));
                }
                None
            }
        };
        let p_exprs = if self.mode == AmbientMode::Truncated2 {
            Some(self.schouten_override_exprs())
        } else {
            None
        };
        let mut upper = Vec::new();
        for i in 0..=n {
            for j in i..=n {
                let e = if i == 0 && j == 0 {
                    *inv_x2()
                } else if i == 0 {
                    Expr::Num(0.0)
                } else {
                    let mut h = shift(self.boundary.component(i - 1, j - 1));
                    if let Some(f) = &slice_factor {
                        h = Expr::Mul(Box::new(f.clone()), Box::new(h));
                    }
                    if let Some(p) = &p_exprs {
                        let pij = shift(&p[(i - 1, j - 1)]);
                        h = Expr::Sub(
                            Box::new(h),
                            Box::new(Expr::Mul(Box::new(Expr::Pow(x(), 2.0)), Box::new(pij))),
                        );
                    }
                    Expr::Mul(inv_x2(), Box::new(h))
                };
                upper.push(e);
            }
        }
        let mut vars = vec!["x".to_string()];
        vars.extend(self.boundary.var_names().iter().cloned());
        let (p, q) = self.boundary.signature();
        ChartMetric::new(vars, upper, (p + 1, q))
    }

    fn schouten_override_exprs(&self) -> DMatrix<Expr> {
        let n = self.n();
        DMatrix::from_fn(n, n, |i, j| {
            self.boundary
                .schouten_override_component(i, j)
                .cloned()
                .unwrap_or(Expr::Num(0.0))
        })
    }
}

fn block(gx: &DMatrix<f64>, x: f64) -> DMatrix<f64> {
    let n = gx.nrows();
    let inv_x2 = 1.0 / (x * x);
    let mut g = DMatrix::zeros(n + 1, n + 1);
    g[(0, 0)] = inv_x2;
    for i in 0..n {
        for j in 0..n {
            g[(i + 1, j + 1)] = gx[(i, j)] * inv_x2;
        }
    }
    g
}

/// Sectional curvature of the plane spanned by `u, w`, from a lowered
/// Riemann tensor.
pub fn sectional_curvature(low: &Array4, g: &DMatrix<f64>, u: &[f64], w: &[f64]) -> f64 {
    let n = u.len();
    let mut num = 0.0;
    for i in 0..n {
        for j in 0..n {
            for k in 0..n {
                for l in 0..n {
                    num += low.get(i, j, k, l) * u[i] * w[j] * u[k] * w[l];
                }
            }
        }
    }
    let dot = |a: &[f64], b: &[f64]| -> f64 {
        let mut s = 0.0;
        for i in 0..n {
            for j in 0..n {
                s += g[(i, j)] * a[i] * b[j];
            }
        }
        s
    };
    num / (dot(u, u) * dot(w, w) - dot(u, w).powi(2))
}
