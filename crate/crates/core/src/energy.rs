//! Renormalized Dirichlet energy of maps from ℍ² over a window of the
//! boundary, and its first variation.
//!
//! `E(ε) = ∫_{t0}^{t1} ∫_ε^{s_max} e(u) s⁻² ds dt` is computed by
//! tensor-product Gauss–Legendre quadrature on panels that are dyadic in
//! `s`, then fitted as `c1/ε + E_ren + c ε`.

use gauss_quad::GaussLegendre;
use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::ambient::AmbientMetric;
use crate::error::{Error, Result};
use crate::expr::Expr;
use crate::hmap::{Adjust, Coef, Domain, ExpansionMap, MapJet, SurfaceMap};

/// Gauss–Legendre order per panel and direction.
pub const PANEL_ORDER: usize = 10;

/// Relative agreement between successive refinements that ends the
/// quadrature.
pub const QUADRATURE_TOL: f64 = 1e-12;

const MAX_LEVEL: u32 = 5;

/// Boundary window `[t0, t1]` and upper cut `s_max`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Window {
    pub t0: f64,
    pub t1: f64,
    pub s_max: f64,
}

impl Window {
    pub fn new(t0: f64, t1: f64, s_max: f64) -> Result<Self> {
        if !(t1 > t0) || !(s_max > 0.0) {
            return Err(Error::Invalid(format!("empty energy window [{t0}, {t1}] x (0, {s_max}]")));
        }
        Ok(Self { t0, t1, s_max })
    }
}

/// The geometric ladder `ε = s_max 2^{−k}`, `k = first..=last`.
pub fn epsilon_ladder(window: &Window, first: i32, last: i32) -> Vec<f64> {
    (first..=last).map(|k| window.s_max * 2f64.powi(-k)).collect()
}

/// Energy density `e(u) = ½ s²[(∂_s x)² + (∂_t x)² + g_x(∂_s y, ∂_s y)
/// + g_x(∂_t y, ∂_t y)]/x²` for a map from ℍ², with `g_x` at `x = u⁰`.
pub fn energy_density<M: SurfaceMap + ?Sized>(m: &M, ambient: &AmbientMetric, s: f64, t: f64) -> Result<f64> {
    if m.domain() != Domain::H2 {
        return Err(Error::Invalid("the energy is defined for maps from H2".into()));
    }
    density_of_jet(&m.jet(s, t)?, ambient)
}

fn density_of_jet(jet: &MapJet, ambient: &AmbientMetric) -> Result<f64> {
    let x = jet.u[0];
    if !(x > 0.0) {
        return Err(Error::MapExitsChart { s: jet.s, t: jet.t, u0: x });
    }
    let g = ambient.gx_at(x, &jet.u[1..])?;
    let n = g.nrows();
    let q = |w: &[f64]| {
        let mut acc = 0.0;
        for i in 0..n {
            for j in 0..n {
                acc += g[(i, j)] * w[i + 1] * w[j + 1];
            }
        }
        acc
    };
    let s = jet.s;
    Ok(0.5 * s * s * (jet.du_s[0].powi(2) + jet.du_t[0].powi(2) + q(&jet.du_s) + q(&jet.du_t)) / (x * x))
}

/// Panel layout for `E(ε)`: `s`-panels between consecutive breakpoints,
/// each split into `2^level` pieces, and `t_panels · 2^level` panels in `t`.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadPlan {
    breakpoints: Vec<f64>,
    t_panels: usize,
    level: u32,
}

impl QuadPlan {
    /// Breakpoints at every `ε`, at `s_max 2^{−j}`, and at `extra` points.
    pub fn new(window: &Window, epsilons: &[f64], extra: &[f64]) -> Result<Self> {
        let eps_min = epsilons.iter().cloned().fold(f64::INFINITY, f64::min);
        if epsilons.is_empty() || !(eps_min > 0.0) || epsilons.iter().any(|&e| e >= window.s_max) {
            return Err(Error::Invalid("epsilons must lie in (0, s_max)".into()));
        }
        let mut b: Vec<f64> = epsilons.to_vec();
        b.push(window.s_max);
        let mut d = window.s_max;
        while d > eps_min {
            b.push(d);
            d *= 0.5;
        }
        b.extend(extra.iter().filter(|&&e| e > eps_min && e < window.s_max));
        b.sort_by(f64::total_cmp);
        b.dedup_by(|a, c| (*a - *c).abs() <= 1e-14 * c.abs());
        Ok(Self {
            breakpoints: b,
            t_panels: ((window.t1 - window.t0).ceil() as usize).max(1),
            level: 0,
        })
    }

    fn refined(&self) -> Self {
        Self {
            level: self.level + 1,
            ..self.clone()
        }
    }

    pub fn level(&self) -> u32 {
        self.level
    }

    /// Integrals over `[b_k, b_{k+1}] × [t0, t1]`, one per breakpoint gap.
    fn panel_integrals<M: SurfaceMap + ?Sized>(
        &self,
        m: &M,
        ambient: &AmbientMetric,
        window: &Window,
        rule: &GaussLegendre,
    ) -> Result<Vec<f64>> {
        let split = 1usize << self.level;
        let nt = self.t_panels * split;
        let dt = (window.t1 - window.t0) / nt as f64;
        let nodes = rule.as_node_weight_pairs();
        let pieces: Vec<(usize, f64, f64)> = self
            .breakpoints
            .windows(2)
            .enumerate()
            .flat_map(|(k, w)| {
                let ds = (w[1] - w[0]) / split as f64;
                (0..split).map(move |j| (k, w[0] + j as f64 * ds, w[0] + (j + 1) as f64 * ds))
            })
            .collect();
        let values: Vec<(usize, f64)> = pieces
            .par_iter()
            .map(|&(k, a, b)| {
                let (hs, cs) = (0.5 * (b - a), 0.5 * (b + a));
                let mut sum = 0.0;
                for it in 0..nt {
                    let ta = window.t0 + it as f64 * dt;
                    let (ht, ct) = (0.5 * dt, ta + 0.5 * dt);
                    for &(xs, ws) in nodes {
                        let s = cs + hs * xs;
                        for &(xt, wt) in nodes {
                            let t = ct + ht * xt;
                            let e = density_of_jet(&m.jet(s, t)?, ambient)?;
                            sum += ws * wt * e / (s * s);
                        }
                    }
                    let _ = ht;
                }
                Ok((k, sum * hs * 0.5 * dt))
            })
            .collect::<Result<_>>()?;
        let mut out = vec![0.0; self.breakpoints.len() - 1];
        for (k, v) in values {
            out[k] += v;
        }
        Ok(out)
    }

    /// `E(ε)` for each requested `ε` (each must be a breakpoint).
    pub fn truncated_energies<M: SurfaceMap + ?Sized>(
        &self,
        m: &M,
        ambient: &AmbientMetric,
        window: &Window,
        epsilons: &[f64],
    ) -> Result<Vec<f64>> {
        if m.domain() != Domain::H2 {
            return Err(Error::Invalid("the energy is defined for maps from H2".into()));
        }
        let rule = GaussLegendre::new(PANEL_ORDER).map_err(|e| Error::Quadrature(e.to_string()))?;
        let panels = self.panel_integrals(m, ambient, window, &rule)?;
        // Suffix sums: tail[k] = ∫ from breakpoint k to s_max.
        let mut tail = vec![0.0; panels.len() + 1];
        for k in (0..panels.len()).rev() {
            tail[k] = tail[k + 1] + panels[k];
        }
        epsilons
            .iter()
            .map(|&e| {
                let k = self
                    .breakpoints
                    .iter()
                    .position(|&b| (b - e).abs() <= 1e-14 * e)
                    .ok_or_else(|| Error::Quadrature(format!("epsilon {e} is not a panel breakpoint")))?;
                Ok(tail[k])
            })
            .collect()
    }

    /// Refines until two successive levels agree to [`QUADRATURE_TOL`]
    /// and returns the finer plan with its energies.
    pub fn adapt<M: SurfaceMap + ?Sized>(
        mut self,
        m: &M,
        ambient: &AmbientMetric,
        window: &Window,
        epsilons: &[f64],
    ) -> Result<(Self, Vec<f64>)> {
        let mut prev = self.truncated_energies(m, ambient, window, epsilons)?;
        while self.level < MAX_LEVEL {
            let next_plan = self.refined();
            let next = next_plan.truncated_energies(m, ambient, window, epsilons)?;
            let agree = prev
                .iter()
                .zip(&next)
                .all(|(a, b)| (a - b).abs() <= QUADRATURE_TOL * b.abs().max(1.0));
            self = next_plan;
            if agree {
                return Ok((self, next));
            }
            prev = next;
        }
        Err(Error::Quadrature(format!(
            "no agreement to {QUADRATURE_TOL:e} after {MAX_LEVEL} refinements"
        )))
    }
}

/// Renormalized energy over a window.
#[derive(Debug, Clone, PartialEq)]
pub struct EnergyReport {
    pub window: Window,
    pub epsilons: Vec<f64>,
    pub energies: Vec<f64>,
    /// Coefficient of `1/ε`.
    pub c1: f64,
    /// Constant term.
    pub e_ren: f64,
    /// Coefficient of the `ε` correction.
    pub c_lin: f64,
    /// Root-mean-square residual of the fit.
    pub fit_residual: f64,
    pub quadrature_level: u32,
}

/// Least-squares fit of `E(ε) = c1/ε + e_ren + c ε`.
pub fn fit_energy(epsilons: &[f64], energies: &[f64]) -> Result<(f64, f64, f64, f64)> {
    if epsilons.len() < 4 || epsilons.len() != energies.len() {
        return Err(Error::Invalid("the energy fit needs at least four epsilons".into()));
    }
    let k = epsilons.len();
    let a = DMatrix::from_fn(k, 3, |i, j| match j {
        0 => 1.0 / epsilons[i],
        1 => 1.0,
        _ => epsilons[i],
    });
    let b = DVector::from_column_slice(energies);
    let x = a
        .clone()
        .svd(true, true)
        .solve(&b, 1e-15)
        .map_err(|e| Error::Quadrature(e.to_string()))?;
    let r = &a * &x - &b;
    Ok((x[0], x[1], x[2], (r.norm_squared() / k as f64).sqrt()))
}

pub fn renormalized_energy<M: SurfaceMap + ?Sized>(
    m: &M,
    ambient: &AmbientMetric,
    window: &Window,
    epsilons: &[f64],
) -> Result<EnergyReport> {
    let (plan, energies) = QuadPlan::new(window, epsilons, &[])?.adapt(m, ambient, window, epsilons)?;
    report(window, epsilons, energies, plan.level())
}

fn report(window: &Window, epsilons: &[f64], energies: Vec<f64>, level: u32) -> Result<EnergyReport> {
    let (c1, e_ren, c_lin, fit_residual) = fit_energy(epsilons, &energies)?;
    Ok(EnergyReport {
        window: *window,
        epsilons: epsilons.to_vec(),
        energies,
        c1,
        e_ren,
        c_lin,
        fit_residual,
        quadrature_level: level,
    })
}

/// Whether the coefficients at `t` follow the even pattern: `x` in odd
/// powers `s, s³`, `y` in even powers `1, s²` plus `s³`, with no logarithms.
pub fn is_even_expansion(m: &ExpansionMap, t: f64) -> Result<bool> {
    let c = m.coefficients(t)?;
    Ok(c.x2 == 0.0 && c.v0 == 0.0 && c.y1.iter().chain(&c.v).all(|&v| v == 0.0))
}

/// Smooth cutoff: `1` on `s ≤ a`, `0` on `s ≥ b`, quintic in between.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Cutoff {
    pub a: f64,
    pub b: f64,
}

impl Cutoff {
    /// `(χ, χ', χ'')` at `s`.
    pub fn eval(&self, s: f64) -> (f64, f64, f64) {
        if s <= self.a {
            return (1.0, 0.0, 0.0);
        }
        if s >= self.b {
            return (0.0, 0.0, 0.0);
        }
        let w = self.b - self.a;
        let r = (s - self.a) / w;
        let p = r * r * r * (10.0 - 15.0 * r + 6.0 * r * r);
        let dp = 30.0 * r * r * (1.0 - r) * (1.0 - r);
        let ddp = 60.0 * r * (1.0 - r) * (1.0 - 2.0 * r);
        (1.0 - p, -dp / w, -ddp / (w * w))
    }
}

/// `u + h χ(s) δφ(t)` in the boundary directions.
pub struct VariedMap<'a, M: ?Sized> {
    pub base: &'a M,
    pub h: f64,
    pub dphi: &'a [Expr],
    pub cutoff: Cutoff,
}

impl<M: SurfaceMap + ?Sized> SurfaceMap for VariedMap<'_, M> {
    fn domain(&self) -> Domain {
        self.base.domain()
    }

    fn jet(&self, s: f64, t: f64) -> Result<MapJet> {
        let mut j = self.base.jet(s, t)?;
        let (c, dc, ddc) = self.cutoff.eval(s);
        for (i, e) in self.dphi.iter().enumerate() {
            let f = e.eval_taylor4(t)?;
            let (p, dp, ddp) = (f.derivative(0), f.derivative(1), f.derivative(2));
            let h = self.h;
            let k = i + 1;
            j.u[k] += h * c * p;
            j.du_s[k] += h * dc * p;
            j.du_t[k] += h * c * dp;
            j.d_ss[k] += h * ddc * p;
            j.d_st[k] += h * dc * dp;
            j.d_tt[k] += h * c * ddp;
        }
        Ok(j)
    }
}

/// Numeric and predicted first variation of the renormalized energy.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FirstVariation {
    pub numeric: f64,
    pub predicted: f64,
}

/// Step used for the central difference in the variation parameter.
pub const VARIATION_STEP: f64 = 1e-4;

/// Compares `[E_ren(u + hχδφ) − E_ren(u − hχδφ)]/(2h)` for the map with
/// `y3 = u3` against `−3 ∫ ⟨u3, δφ⟩_g / |γ̇|²_g dt` over the window.
///
/// The cutoff `χ` equals 1 for `s ≤ s_max/4` and vanishes for
/// `s ≥ s_max/2`, so the variation leaves the upper edge of the window
/// untouched; `δφ` should vanish near `t0`, `t1` unless the map is
/// invariant under translation in `t`.
pub fn first_variation_check(
    base: &ExpansionMap,
    u3: &[Expr],
    dphi: &[Expr],
    ambient: &AmbientMetric,
    window: &Window,
    epsilons: &[f64],
    h: f64,
) -> Result<FirstVariation> {
    let n = base.curve().dim();
    if u3.len() != n || dphi.len() != n {
        return Err(Error::Dimension(format!("u3 and the variation need {n} components")));
    }
    let m = base.clone().with_override(Coef::Y3, Adjust::Set(u3.to_vec()))?;
    let cutoff = Cutoff {
        a: 0.25 * window.s_max,
        b: 0.5 * window.s_max,
    };
    let varied = |h: f64| VariedMap {
        base: &m,
        h,
        dphi,
        cutoff,
    };
    let plan0 = QuadPlan::new(window, epsilons, &[cutoff.a, cutoff.b])?;
    let (plan, _) = plan0.adapt(&varied(h), ambient, window, epsilons)?;
    let plus = plan.truncated_energies(&varied(h), ambient, window, epsilons)?;
    let minus = plan.truncated_energies(&varied(-h), ambient, window, epsilons)?;
    let diff: Vec<f64> = plus.iter().zip(&minus).map(|(p, q)| (p - q) / (2.0 * h)).collect();
    let (_, numeric, _, _) = fit_energy(epsilons, &diff)?;

    let rule = GaussLegendre::new(PANEL_ORDER).map_err(|e| Error::Quadrature(e.to_string()))?;
    let panels = ((window.t1 - window.t0).ceil() as usize).max(1) * 4;
    let dt = (window.t1 - window.t0) / panels as f64;
    let mut predicted = 0.0;
    for p in 0..panels {
        let ta = window.t0 + p as f64 * dt;
        for &(x, w) in rule.as_node_weight_pairs() {
            let t = ta + 0.5 * dt * (1.0 + x);
            let k = m.kinematics(t)?;
            let a = u3.iter().map(|e| e.eval(&[t])).collect::<Result<Vec<f64>>>()?;
            let b = dphi.iter().map(|e| e.eval(&[t])).collect::<Result<Vec<f64>>>()?;
            predicted += -3.0 * k.dot(&a, &b) / k.norm2.abs() * w * 0.5 * dt;
        }
    }
    Ok(FirstVariation { numeric, predicted })
}
