//! Asymptotic expansions of harmonic maps from ℍ² or AdS₂ into a
//! normal-form target, and the geometric quantities used to certify them.
//!
//! The domain is the upper half-plane `(s, t)`, `s > 0`, with metric
//! `(ds² ± dt²)/s²`; the upper sign is ℍ², the lower AdS₂.

use std::collections::BTreeMap;
use std::fmt;

use nalgebra::DMatrix;
use rayon::prelude::*;

use crate::ambient::AmbientMetric;
use crate::error::{Error, Result};
use crate::expr::Expr;
use crate::geodesic::{Causal, CurveSpec, Kinematics};

/// Domain of the map: ℍ² pairs with spacelike curves, AdS₂ with timelike.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Domain {
    H2,
    AdS2,
}

impl Domain {
    /// `+1` for ℍ², `−1` for AdS₂.
    pub fn sign(self) -> f64 {
        match self {
            Domain::H2 => 1.0,
            Domain::AdS2 => -1.0,
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        match name.to_ascii_lowercase().as_str() {
            "h2" | "hyperbolic" => Some(Domain::H2),
            "ads2" | "ads" => Some(Domain::AdS2),
            _ => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Domain::H2 => "H2",
            Domain::AdS2 => "AdS2",
        }
    }

    fn causal(self) -> Causal {
        match self {
            Domain::H2 => Causal::Spacelike,
            Domain::AdS2 => Causal::Timelike,
        }
    }
}

/// Expansion coefficients of
/// `x = s x1 + s² x2 + s³ x3 + s³ log s · v0`,
/// `y = γ + s y1 + s² y2 + s³ y3 + s³ log s · v`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Coef {
    X1,
    X2,
    X3,
    V0,
    Y1,
    Y2,
    Y3,
    V,
}

impl Coef {
    pub const ALL: [Coef; 8] = [Coef::X1, Coef::X2, Coef::X3, Coef::V0, Coef::Y1, Coef::Y2, Coef::Y3, Coef::V];

    pub fn is_vector(self) -> bool {
        matches!(self, Coef::Y1 | Coef::Y2 | Coef::Y3 | Coef::V)
    }

    pub fn name(self) -> &'static str {
        match self {
            Coef::X1 => "x1",
            Coef::X2 => "x2",
            Coef::X3 => "x3",
            Coef::V0 => "v0",
            Coef::Y1 => "y1",
            Coef::Y2 => "y2",
            Coef::Y3 => "y3",
            Coef::V => "v",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        Coef::ALL.into_iter().find(|c| c.name() == name)
    }
}

impl fmt::Display for Coef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// A change to one coefficient, as expressions in `t` (one for a scalar
/// coefficient, `n` for a vector one).
#[derive(Debug, Clone)]
pub enum Adjust {
    Set(Vec<Expr>),
    Shift(Vec<Expr>),
}

impl Adjust {
    fn exprs(&self) -> &[Expr] {
        match self {
            Adjust::Set(e) | Adjust::Shift(e) => e,
        }
    }

    /// A constant shift of a scalar coefficient.
    pub fn shift_scalar(delta: f64) -> Self {
        Adjust::Shift(vec![Expr::num(delta)])
    }

    /// A constant value of a scalar coefficient.
    pub fn set_scalar(value: f64) -> Self {
        Adjust::Set(vec![Expr::num(value)])
    }

    pub fn set_vector(values: &[f64]) -> Self {
        Adjust::Set(values.iter().map(|&v| Expr::num(v)).collect())
    }

    pub fn shift_vector(values: &[f64]) -> Self {
        Adjust::Shift(values.iter().map(|&v| Expr::num(v)).collect())
    }
}

/// Coefficient values at one parameter value.
#[derive(Debug, Clone, PartialEq)]
pub struct Coefficients {
    pub x1: f64,
    pub x2: f64,
    pub x3: f64,
    pub v0: f64,
    pub y1: Vec<f64>,
    pub y2: Vec<f64>,
    pub y3: Vec<f64>,
    pub v: Vec<f64>,
}

impl Coefficients {
    fn scalar_mut(&mut self, c: Coef) -> &mut f64 {
        match c {
            Coef::X1 => &mut self.x1,
            Coef::X2 => &mut self.x2,
            Coef::X3 => &mut self.x3,
            Coef::V0 => &mut self.v0,
            _ => unreachable!("vector coefficient"),
        }
    }

    fn vector_mut(&mut self, c: Coef) -> &mut Vec<f64> {
        match c {
            Coef::Y1 => &mut self.y1,
            Coef::Y2 => &mut self.y2,
            Coef::Y3 => &mut self.y3,
            Coef::V => &mut self.v,
            _ => unreachable!("scalar coefficient"),
        }
    }

    /// `Σ w_k c_k / div`.
    fn combine(parts: &[(f64, &Coefficients)], div: f64) -> Coefficients {
        let n = parts[0].1.y1.len();
        let sc = |f: fn(&Coefficients) -> f64| parts.iter().map(|(w, c)| w * f(c)).sum::<f64>() / div;
        let vc = |f: fn(&Coefficients) -> &Vec<f64>| {
            (0..n).map(|i| parts.iter().map(|(w, c)| w * f(c)[i]).sum::<f64>() / div).collect::<Vec<f64>>()
        };
        Coefficients {
            x1: sc(|c| c.x1),
            x2: sc(|c| c.x2),
            x3: sc(|c| c.x3),
            v0: sc(|c| c.v0),
            y1: vc(|c| &c.y1),
            y2: vc(|c| &c.y2),
            y3: vc(|c| &c.y3),
            v: vc(|c| &c.v),
        }
    }
}

/// Value and first and second partial derivatives of a map at `(s, t)`.
/// Index 0 is the normal coordinate `x`, `1..=n` are the `y^i`.
#[derive(Debug, Clone, PartialEq)]
pub struct MapJet {
    pub s: f64,
    pub t: f64,
    pub u: Vec<f64>,
    pub du_s: Vec<f64>,
    pub du_t: Vec<f64>,
    pub d_ss: Vec<f64>,
    pub d_st: Vec<f64>,
    pub d_tt: Vec<f64>,
}

/// A map from the half-plane into the target chart.
pub trait SurfaceMap: Sync {
    fn domain(&self) -> Domain;
    fn jet(&self, s: f64, t: f64) -> Result<MapJet>;
}

/// The explicit expansion determined by a boundary curve, with optional
/// coefficient changes.
#[derive(Debug, Clone)]
pub struct ExpansionMap {
    curve: CurveSpec,
    domain: Domain,
    overrides: BTreeMap<Coef, Adjust>,
}

/// Checks a curve against a domain and target and returns the expansion
/// with the coefficients that make the map harmonic to the order shown:
/// `x1 = λ`, `x2 = 0`, `x3 = −¼λ³|α|²`, `y1 = 0`, `y2 = ½λ²α^♯`, `y3 = 0`,
/// `v0 = v = 0`.
pub fn build_expansion(
    curve: &CurveSpec,
    domain: Domain,
    ambient: &AmbientMetric,
    sample_times: &[f64],
) -> Result<ExpansionMap> {
    if ambient.n() != curve.dim() {
        return Err(Error::Dimension(format!(
            "target boundary has dimension {} but the curve has {}",
            ambient.n(),
            curve.dim()
        )));
    }
    let m = ExpansionMap {
        curve: curve.clone(),
        domain,
        overrides: BTreeMap::new(),
    };
    for &t in sample_times {
        m.kinematics(t)?;
    }
    Ok(m)
}

fn stencil(h: f64, f: &[Coefficients; 5]) -> (Coefficients, Coefficients) {
    // Integer weights first, so constant coefficients difference to zero.
    let d1 = Coefficients::combine(&[(1.0, &f[0]), (-8.0, &f[1]), (8.0, &f[3]), (-1.0, &f[4])], 12.0 * h);
    let d2 = Coefficients::combine(
        &[(-1.0, &f[0]), (16.0, &f[1]), (-30.0, &f[2]), (16.0, &f[3]), (-1.0, &f[4])],
        12.0 * h * h,
    );
    (d1, d2)
}

impl ExpansionMap {
    pub fn curve(&self) -> &CurveSpec {
        &self.curve
    }

    pub fn overrides(&self) -> &BTreeMap<Coef, Adjust> {
        &self.overrides
    }

    /// Whether every coefficient takes its harmonic-map value.
    pub fn theorem_coefficients(&self) -> bool {
        self.overrides.is_empty()
    }

    /// Replaces or shifts one coefficient.
    pub fn with_override(mut self, coef: Coef, adjust: Adjust) -> Result<Self> {
        let want = if coef.is_vector() { self.curve.dim() } else { 1 };
        let got = adjust.exprs();
        if got.len() != want {
            return Err(Error::Dimension(format!("coefficient {coef} needs {want} components, got {}", got.len())));
        }
        if got.iter().any(|e| e.max_var().is_some_and(|v| v > 0)) {
            return Err(Error::Invalid(format!("coefficient {coef} may depend on t only")));
        }
        self.overrides.insert(coef, adjust);
        Ok(self)
    }

    /// Curve kinematics at `t`, checked against the domain's causal type.
    pub fn kinematics(&self, t: f64) -> Result<Kinematics> {
        let k = self.curve.kinematics(t)?;
        match k.causal {
            Causal::Null => Err(Error::NullVelocity { t }),
            c if c != self.domain.causal() => Err(Error::CausalMismatch {
                t,
                message: format!("{} domain needs a {:?} curve, found {:?}", self.domain.name(), self.domain.causal(), c),
            }),
            _ => Ok(k),
        }
    }

    /// Coefficient values at `t`.
    pub fn coefficients(&self, t: f64) -> Result<Coefficients> {
        let k = self.kinematics(t)?;
        let n = self.curve.dim();
        let lambda = k.lambda();
        let alpha = k.alpha_sharp()?;
        let alpha2 = k.dot(&alpha, &alpha);
        let mut c = Coefficients {
            x1: lambda,
            x2: 0.0,
            x3: -0.25 * lambda.powi(3) * alpha2,
            v0: 0.0,
            y1: vec![0.0; n],
            y2: alpha.iter().map(|a| 0.5 * lambda * lambda * a).collect(),
            y3: vec![0.0; n],
            v: vec![0.0; n],
        };
        for (&coef, adjust) in &self.overrides {
            let vals = adjust.exprs().iter().map(|e| e.eval(&[t])).collect::<Result<Vec<f64>>>()?;
            let shift = matches!(adjust, Adjust::Shift(_));
            if coef.is_vector() {
                let target = c.vector_mut(coef);
                for (x, v) in target.iter_mut().zip(vals) {
                    *x = if shift { *x + v } else { v };
                }
            } else {
                let target = c.scalar_mut(coef);
                *target = if shift { *target + vals[0] } else { vals[0] };
            }
        }
        Ok(c)
    }

    /// Step used for the `t`-derivatives of the coefficients.
    pub fn t_step(t: f64) -> f64 {
        1e-4 * t.abs().max(1.0)
    }
}

impl SurfaceMap for ExpansionMap {
    fn domain(&self) -> Domain {
        self.domain
    }

    fn jet(&self, s: f64, t: f64) -> Result<MapJet> {
        eval_map(self, s, t)
    }
}

/// Evaluates the expansion and its derivatives at `(s, t)`.
///
/// `s`-derivatives are exact; `t`-derivatives of the coefficients use
/// five-point central differences, those of `γ` are exact.
pub fn eval_map(m: &ExpansionMap, s: f64, t: f64) -> Result<MapJet> {
    if !(s > 0.0) {
        return Err(Error::NonPositiveCoordinate(s));
    }
    let h = ExpansionMap::t_step(t);
    let c: [Coefficients; 5] = [
        m.coefficients(t - 2.0 * h)?,
        m.coefficients(t - h)?,
        m.coefficients(t)?,
        m.coefficients(t + h)?,
        m.coefficients(t + 2.0 * h)?,
    ];
    let (c1, c2) = stencil(h, &c);
    let c0 = &c[2];
    let jets = m.curve.jets(t)?;
    let n = m.curve.dim();
    let l = s.ln();
    // Basis functions of s and their first two derivatives.
    let b = [s, s * s, s.powi(3), s.powi(3) * l];
    let bs = [1.0, 2.0 * s, 3.0 * s * s, s * s * (3.0 * l + 1.0)];
    let bss = [0.0, 2.0, 6.0 * s, s * (6.0 * l + 5.0)];
    let xs = |c: &Coefficients| [c.x1, c.x2, c.x3, c.v0];
    let ys = |c: &Coefficients, i: usize| [c.y1[i], c.y2[i], c.y3[i], c.v[i]];
    let dot4 = |a: [f64; 4], w: &[f64; 4]| a.iter().zip(w).map(|(p, q)| p * q).sum::<f64>();

    let mut jet = MapJet {
        s,
        t,
        u: vec![0.0; n + 1],
        du_s: vec![0.0; n + 1],
        du_t: vec![0.0; n + 1],
        d_ss: vec![0.0; n + 1],
        d_st: vec![0.0; n + 1],
        d_tt: vec![0.0; n + 1],
    };
    jet.u[0] = dot4(xs(c0), &b);
    jet.du_s[0] = dot4(xs(c0), &bs);
    jet.d_ss[0] = dot4(xs(c0), &bss);
    jet.du_t[0] = dot4(xs(&c1), &b);
    jet.d_st[0] = dot4(xs(&c1), &bs);
    jet.d_tt[0] = dot4(xs(&c2), &b);
    for i in 0..n {
        let k = i + 1;
        jet.u[k] = jets.d[0][i] + dot4(ys(c0, i), &b);
        jet.du_s[k] = dot4(ys(c0, i), &bs);
        jet.d_ss[k] = dot4(ys(c0, i), &bss);
        jet.du_t[k] = jets.d[1][i] + dot4(ys(&c1, i), &b);
        jet.d_st[k] = dot4(ys(&c1, i), &bs);
        jet.d_tt[k] = jets.d[2][i] + dot4(ys(&c2, i), &b);
    }
    Ok(jet)
}

fn in_chart(jet: &MapJet) -> Result<()> {
    if jet.u[0] > 0.0 {
        Ok(())
    } else {
        Err(Error::MapExitsChart {
            s: jet.s,
            t: jet.t,
            u0: jet.u[0],
        })
    }
}

fn add(a: &[f64], b: &[f64], wb: f64) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x + wb * y).collect()
}

/// Tension field components
/// `τ^I = s²[∂_s²u ± ∂_t²u + Γ(∂_su, ∂_su) ± Γ(∂_tu, ∂_tu)]`.
pub fn tension<M: SurfaceMap + ?Sized>(m: &M, ambient: &AmbientMetric, s: f64, t: f64) -> Result<Vec<f64>> {
    let jet = m.jet(s, t)?;
    in_chart(&jet)?;
    let eps = m.domain().sign();
    let gamma = ambient.christoffel_gplus(jet.u[0], &jet.u[1..])?;
    let gs = gamma.contract(&jet.du_s, &jet.du_s);
    let gt = gamma.contract(&jet.du_t, &jet.du_t);
    Ok((0..jet.u.len())
        .map(|i| s * s * (jet.d_ss[i] + eps * jet.d_tt[i] + gs[i] + eps * gt[i]))
        .collect())
}

/// Components `∇_AΦ_B^I` of the second fundamental form; `st = ts`.
#[derive(Debug, Clone, PartialEq)]
pub struct SecondFundamentalForm {
    pub ss: Vec<f64>,
    pub st: Vec<f64>,
    pub tt: Vec<f64>,
}

impl SecondFundamentalForm {
    pub fn max_abs(&self) -> f64 {
        self.ss.iter().chain(&self.st).chain(&self.tt).fold(0.0, |m, x| m.max(x.abs()))
    }
}

/// `∇_AΦ_B^I = ∂_AΦ_B^I − Γ^C_AB Φ_C^I + Γ^I_JK Φ_A^J Φ_B^K`, with domain
/// symbols `Γ^s_ss = −1/s`, `Γ^s_tt = ±1/s`, `Γ^t_st = −1/s`.
pub fn second_fundamental_form<M: SurfaceMap + ?Sized>(
    m: &M,
    ambient: &AmbientMetric,
    s: f64,
    t: f64,
) -> Result<SecondFundamentalForm> {
    let jet = m.jet(s, t)?;
    in_chart(&jet)?;
    let eps = m.domain().sign();
    let gamma = ambient.christoffel_gplus(jet.u[0], &jet.u[1..])?;
    let ss = add(&add(&jet.d_ss, &jet.du_s, 1.0 / s), &gamma.contract(&jet.du_s, &jet.du_s), 1.0);
    let st = add(&add(&jet.d_st, &jet.du_t, 1.0 / s), &gamma.contract(&jet.du_s, &jet.du_t), 1.0);
    let tt = add(&add(&jet.d_tt, &jet.du_s, -eps / s), &gamma.contract(&jet.du_t, &jet.du_t), 1.0);
    Ok(SecondFundamentalForm { ss, st, tt })
}

/// Coordinate components of `u*g₊ − h₊`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Pullback {
    pub ss: f64,
    pub st: f64,
    pub tt: f64,
}

impl Pullback {
    pub fn max_abs(&self) -> f64 {
        self.ss.abs().max(self.st.abs()).max(self.tt.abs())
    }
}

pub fn pullback<M: SurfaceMap + ?Sized>(m: &M, ambient: &AmbientMetric, s: f64, t: f64) -> Result<Pullback> {
    let jet = m.jet(s, t)?;
    in_chart(&jet)?;
    let eps = m.domain().sign();
    let g = ambient.gplus_at(jet.u[0], &jet.u[1..])?;
    let q = |a: &[f64], b: &[f64]| {
        let (a, b) = (DMatrix::from_column_slice(a.len(), 1, a), DMatrix::from_column_slice(b.len(), 1, b));
        (a.transpose() * &g * b)[(0, 0)]
    };
    let inv_s2 = 1.0 / (s * s);
    Ok(Pullback {
        ss: q(&jet.du_s, &jet.du_s) - inv_s2,
        st: q(&jet.du_s, &jet.du_t),
        tt: q(&jet.du_t, &jet.du_t) - eps * inv_s2,
    })
}

/// `|w|_{g₊}` at the image point, for `w` tangent to the target.
pub fn gplus_norm(ambient: &AmbientMetric, u: &[f64], w: &[f64]) -> Result<f64> {
    let g = ambient.gplus_at(u[0], &u[1..])?;
    let mut q = 0.0;
    for i in 0..w.len() {
        for j in 0..w.len() {
            q += g[(i, j)] * w[i] * w[j];
        }
    }
    Ok(q.abs().sqrt())
}

/// Predicted `s`-coefficients of the second fundamental form components
/// for given `x3`, `y3`, built from the boundary curve alone:
/// `∇_sΦ_s^0 ≈ s(4x3 + λ³|α|²)`, `∇_tΦ_t^0 ≈ ∓s(4x3 + λ³|α|²)`,
/// `∇_sΦ_t^0 ≈ 3sλ⁻¹⟨γ̇, y3⟩`, `∇_sΦ_s^i ≈ 3s y3^i`, `∇_tΦ_t^i ≈ ∓3s y3^i`,
/// `∇_sΦ_t^i ≈ s(−2λ⁻¹x3 γ̇ + λ²∇_γ̇α^♯ − λ²α(γ̇)α^♯ − λ²P(γ̇)^♯)^i`.
#[derive(Debug, Clone, PartialEq)]
pub struct SffLeading {
    pub ss: Vec<f64>,
    pub st: Vec<f64>,
    pub tt: Vec<f64>,
}

impl SffLeading {
    pub fn max_abs(&self) -> f64 {
        self.ss.iter().chain(&self.st).chain(&self.tt).fold(0.0, |m, x| m.max(x.abs()))
    }
}

pub fn sff_leading_coefficients(
    curve: &CurveSpec,
    domain: Domain,
    t: f64,
    x3: f64,
    y3: &[f64],
) -> Result<SffLeading> {
    let k = curve.kinematics(t)?;
    if k.causal == Causal::Null {
        return Err(Error::NullVelocity { t });
    }
    let eps = domain.sign();
    let lambda = k.lambda();
    let l2 = lambda * lambda;
    let alpha = k.alpha_sharp()?;
    let alpha2 = k.dot(&alpha, &alpha);
    let alpha_v = k.dot(&alpha, &k.v);
    let nabla_alpha = k.nabla_alpha_sharp()?;
    let pv = k.schouten_v_sharp()?;
    let normal = 4.0 * x3 + lambda.powi(3) * alpha2;
    let mixed: Vec<f64> = (0..k.v.len())
        .map(|i| -2.0 * x3 / lambda * k.v[i] + l2 * nabla_alpha[i] - l2 * alpha_v * alpha[i] - l2 * pv[i])
        .collect();
    let mut ss = vec![normal];
    ss.extend(y3.iter().map(|y| 3.0 * y));
    let mut st = vec![3.0 * k.dot(&k.v, y3) / lambda];
    st.extend(mixed);
    let mut tt = vec![-eps * normal];
    tt.extend(y3.iter().map(|y| -eps * 3.0 * y));
    Ok(SffLeading { ss, st, tt })
}

/// Limit of `u*g₊ − h₊` as `s → 0` predicted from the boundary data:
/// `ss = (4λx3 + λ⁴|α|²)/λ²`, `st = 3⟨γ̇, y3⟩/λ²`, and
/// `tt = [(∂_tλ)² ∓ 2λx3 + 2λ(∂_tλ)α(γ̇) + λ²(∇_γ̇α)(γ̇) − λ²P(γ̇, γ̇)]/λ²`.
pub fn pullback_leading(curve: &CurveSpec, domain: Domain, t: f64, x3: f64, y3: &[f64]) -> Result<Pullback> {
    let k = curve.kinematics(t)?;
    if k.causal == Causal::Null {
        return Err(Error::NullVelocity { t });
    }
    let eps = domain.sign();
    let lambda = k.lambda();
    let l2 = lambda * lambda;
    let alpha = k.alpha_sharp()?;
    let alpha2 = k.dot(&alpha, &alpha);
    let alpha_v = k.dot(&alpha, &k.v);
    let dl = k.lambda_dot()?;
    let nabla_alpha_v = k.dot(&k.nabla_alpha_sharp()?, &k.v);
    let pvv = k.dot(&k.schouten_v_sharp()?, &k.v);
    Ok(Pullback {
        ss: (4.0 * lambda * x3 + l2 * l2 * alpha2) / l2,
        st: 3.0 * k.dot(&k.v, y3) / l2,
        tt: (dl * dl - eps * 2.0 * lambda * x3 + 2.0 * lambda * dl * alpha_v + l2 * nabla_alpha_v - l2 * pvv) / l2,
    })
}

/// All certified quantities at one `(s, t)`.
#[derive(Debug, Clone, PartialEq)]
pub struct LadderSample {
    pub s: f64,
    pub t: f64,
    pub tension: Vec<f64>,
    pub sff: SecondFundamentalForm,
    pub pullback: Pullback,
}

impl LadderSample {
    pub fn tension_max(&self) -> f64 {
        self.tension.iter().fold(0.0, |m, x| m.max(x.abs()))
    }
}

/// Evaluates tension, second fundamental form and pullback on the grid
/// `s_values × t_values`, in parallel; the result is ordered by `s`, then `t`.
pub fn ladder<M: SurfaceMap + ?Sized>(
    m: &M,
    ambient: &AmbientMetric,
    s_values: &[f64],
    t_values: &[f64],
) -> Result<Vec<LadderSample>> {
    let grid: Vec<(f64, f64)> = s_values
        .iter()
        .flat_map(|&s| t_values.iter().map(move |&t| (s, t)))
        .collect();
    grid.par_iter()
        .map(|&(s, t)| {
            Ok(LadderSample {
                s,
                t,
                tension: tension(m, ambient, s, t)?,
                sff: second_fundamental_form(m, ambient, s, t)?,
                pullback: pullback(m, ambient, s, t)?,
            })
        })
        .collect()
}

/// Reduces a ladder to `(s, max over t of f)` pairs in ladder order.
pub fn ladder_max(samples: &[LadderSample], f: impl Fn(&LadderSample) -> f64) -> Vec<(f64, f64)> {
    let mut out: Vec<(f64, f64)> = Vec::new();
    for smp in samples {
        let v = f(smp);
        match out.last_mut() {
            Some(last) if last.0 == smp.s => last.1 = last.1.max(v),
            _ => out.push((smp.s, v)),
        }
    }
    out
}
