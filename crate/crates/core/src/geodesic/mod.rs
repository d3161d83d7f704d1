//! Conformal geodesics: curve kinematics, the first-order `(γ, α)` system,
//! the reduced third-order equation, adaptive integration of both, and
//! Möbius reparametrization.
//!
//! Index conventions follow [`crate::tensor`]: `Γ^i_jk` is
//! `gamma.get(i, j, k)`. Along a curve with velocity `v` the covariant
//! acceleration is `A = γ̈ + Γ(v, v)` and the covariant jerk is
//! `B = ∇_v A = dA/dt + Γ(v, A)`.

pub mod dopri;
mod mobius;

use std::io::Write;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::expr::Expr;
use crate::tensor::{Array3, ChartMetric, Connection};

pub use dopri::{Options, Stats};
pub use mobius::{schwarzian, schwarzian_is_zero, Mobius};

/// Relative threshold below which `|v|²` counts as null.
pub const NULL_THRESHOLD: f64 = 1e-10;

/// Drift of `|v|²` tolerated along a null trajectory.
pub const NULL_DRIFT: f64 = 1e-6;

/// Sign of `|γ̇|²`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Causal {
    Spacelike,
    Timelike,
    Null,
}

impl Causal {
    /// `+1`, `−1` or `0`.
    pub fn sign(self) -> f64 {
        match self {
            Causal::Spacelike => 1.0,
            Causal::Timelike => -1.0,
            Causal::Null => 0.0,
        }
    }

    /// Classifies `norm2 = g(v, v)` with the scale-free null test
    /// `|norm2| < 1e-10 · max(1, |v|²_euclid)`.
    pub fn classify(norm2: f64, v: &[f64]) -> Causal {
        let e2: f64 = v.iter().map(|x| x * x).sum();
        if norm2.abs() < NULL_THRESHOLD * e2.max(1.0) {
            Causal::Null
        } else if norm2 > 0.0 {
            Causal::Spacelike
        } else {
            Causal::Timelike
        }
    }
}

fn dot(g: &DMatrix<f64>, u: &[f64], v: &[f64]) -> f64 {
    let n = u.len();
    let mut s = 0.0;
    for i in 0..n {
        for j in 0..n {
            s += g[(i, j)] * u[i] * v[j];
        }
    }
    s
}

fn mat_vec(m: &DMatrix<f64>, v: &[f64]) -> Vec<f64> {
    (m * DVector::from_column_slice(v)).iter().cloned().collect()
}

fn lin(terms: &[(f64, &[f64])]) -> Vec<f64> {
    let n = terms[0].1.len();
    let mut out = vec![0.0; n];
    for (c, v) in terms {
        for (o, x) in out.iter_mut().zip(v.iter()) {
            *o += c * x;
        }
    }
    out
}

/// `(∂_m Γ^i_jk) w^m` as a rank-3 array.
fn dgamma_along(dgamma: &[Array3], w: &[f64]) -> Array3 {
    let n = w.len();
    let mut out = Array3::zeros(n);
    for i in 0..n {
        for j in 0..n {
            for k in 0..n {
                let v = (0..n).map(|m| dgamma[m].get(i, j, k) * w[m]).sum();
                out.set(i, j, k, v);
            }
        }
    }
    out
}

/// A parametrized curve: one expression in `t` per chart coordinate.
#[derive(Debug, Clone)]
pub struct CurveSpec {
    chart: ChartMetric,
    components: Vec<Expr>,
}

/// Derivatives of a curve at one parameter value; `d[k]` is the k-th
/// derivative (`d[0] = γ`).
#[derive(Debug, Clone, PartialEq)]
pub struct CurveJets {
    pub t: f64,
    pub d: [Vec<f64>; 5],
}

impl CurveSpec {
    pub fn new(chart: ChartMetric, components: Vec<Expr>) -> Result<Self> {
        if components.len() != chart.dim() {
            return Err(Error::Dimension(format!(
                "curve has {} components, chart has dimension {}",
                components.len(),
                chart.dim()
            )));
        }
        if components.iter().any(|c| c.max_var().is_some_and(|i| i > 0)) {
            return Err(Error::Dimension("curve components must depend on t only".into()));
        }
        Ok(Self { chart, components })
    }

    /// Parses component expressions in the variable `t`.
    pub fn parse(chart: ChartMetric, components: &[&str]) -> Result<Self> {
        let exprs = components
            .iter()
            .map(|c| Expr::parse(c, &["t"]))
            .collect::<Result<Vec<_>>>()?;
        Self::new(chart, exprs)
    }

    pub fn chart(&self) -> &ChartMetric {
        &self.chart
    }

    pub fn components(&self) -> &[Expr] {
        &self.components
    }

    pub fn dim(&self) -> usize {
        self.components.len()
    }

    /// Exact derivatives of order 0..4 at `t`.
    pub fn jets(&self, t: f64) -> Result<CurveJets> {
        let n = self.dim();
        let mut d: [Vec<f64>; 5] = std::array::from_fn(|_| vec![0.0; n]);
        for (i, c) in self.components.iter().enumerate() {
            let j = c.eval_taylor4(t)?;
            for (k, dk) in d.iter_mut().enumerate() {
                dk[i] = j.derivative(k);
            }
        }
        Ok(CurveJets { t, d })
    }

    pub fn point(&self, t: f64) -> Result<Vec<f64>> {
        self.components.iter().map(|c| c.eval(&[t])).collect()
    }

    pub fn causal_at(&self, t: f64) -> Result<Causal> {
        let j = self.jets(t)?;
        let m = self.chart.metric_at(&j.d[0])?;
        Ok(Causal::classify(dot(&m.g, &j.d[1], &j.d[1]), &j.d[1]))
    }

    pub fn kinematics(&self, t: f64) -> Result<Kinematics> {
        Kinematics::new(&self.chart, &self.jets(t)?)
    }

    /// The curve `t ↦ γ(f(t))` for a reparametrization `f` given as an
    /// expression in `t`.
    pub fn reparametrize(&self, f: &Expr) -> Result<CurveSpec> {
        let comps = self.components.iter().map(|c| c.substitute(std::slice::from_ref(f))).collect();
        CurveSpec::new(self.chart.clone(), comps)
    }
}

/// Everything about a curve at one point that the conformal geodesic
/// equations need.
#[derive(Debug, Clone)]
pub struct Kinematics {
    pub t: f64,
    pub gamma: Vec<f64>,
    /// `γ̇`
    pub v: Vec<f64>,
    /// `γ̈` (coordinate)
    pub acc: Vec<f64>,
    /// `γ⃛` (coordinate)
    pub jerk: Vec<f64>,
    pub connection: Connection,
    /// Covariant acceleration `A = ∇_v v`.
    pub cov_acc: Vec<f64>,
    /// Covariant jerk `B = ∇_v ∇_v v`.
    pub cov_jerk: Vec<f64>,
    /// `|v|²`
    pub norm2: f64,
    pub causal: Causal,
    /// Schouten tensor at `γ`, when the chart provides one.
    pub schouten: Option<DMatrix<f64>>,
}

impl Kinematics {
    pub fn new(chart: &ChartMetric, jets: &CurveJets) -> Result<Self> {
        let gamma = jets.d[0].clone();
        let (v, acc, jerk) = (jets.d[1].clone(), jets.d[2].clone(), jets.d[3].clone());
        let connection = chart.connection_at(&gamma)?;
        let ga = &connection.gamma;
        let gvv = ga.contract(&v, &v);
        let cov_acc = lin(&[(1.0, &acc), (1.0, &gvv)]);
        // dA/dt = γ⃛ + (∂_m Γ v^m)(v, v) + 2 Γ(γ̈, v)
        let dgv = dgamma_along(&connection.dgamma, &v).contract(&v, &v);
        let gav = ga.contract(&acc, &v);
        let gva = ga.contract(&v, &cov_acc);
        let cov_jerk = lin(&[(1.0, &jerk), (1.0, &dgv), (2.0, &gav), (1.0, &gva)]);
        let norm2 = dot(&connection.g, &v, &v);
        let causal = Causal::classify(norm2, &v);
        let schouten = if chart.has_schouten() {
            Some(chart.schouten_at(&gamma)?)
        } else {
            None
        };
        Ok(Self {
            t: jets.t,
            gamma,
            v,
            acc,
            jerk,
            connection,
            cov_acc,
            cov_jerk,
            norm2,
            causal,
            schouten,
        })
    }

    pub fn g(&self) -> &DMatrix<f64> {
        &self.connection.g
    }

    pub fn dot(&self, u: &[f64], w: &[f64]) -> f64 {
        dot(&self.connection.g, u, w)
    }

    fn require_non_null(&self) -> Result<()> {
        if self.causal == Causal::Null {
            Err(Error::NullVelocity { t: self.t })
        } else {
            Ok(())
        }
    }

    fn require_schouten(&self) -> Result<&DMatrix<f64>> {
        self.schouten.as_ref().ok_or(Error::UnsupportedSchouten)
    }

    /// `λ = sqrt(||γ̇|²|)`.
    pub fn lambda(&self) -> f64 {
        self.norm2.abs().sqrt()
    }

    /// `∂_t λ = ⟨v, A⟩/(±λ)`.
    pub fn lambda_dot(&self) -> Result<f64> {
        self.require_non_null()?;
        Ok(self.dot(&self.v, &self.cov_acc) / (self.causal.sign() * self.lambda()))
    }

    /// `α^♯ = (A − 2⟨v, A⟩ v/|v|²)/|v|²`.
    pub fn alpha_sharp(&self) -> Result<Vec<f64>> {
        self.require_non_null()?;
        let n2 = self.norm2;
        let va = self.dot(&self.v, &self.cov_acc);
        Ok(lin(&[(1.0 / n2, &self.cov_acc), (-2.0 * va / (n2 * n2), &self.v)]))
    }

    /// `α` as a covector.
    pub fn alpha(&self) -> Result<Vec<f64>> {
        Ok(mat_vec(&self.connection.g, &self.alpha_sharp()?))
    }

    /// `∇_v α^♯`, differentiating the defining formula along the curve.
    pub fn nabla_alpha_sharp(&self) -> Result<Vec<f64>> {
        self.require_non_null()?;
        let n2 = self.norm2;
        let (v, a, b) = (&self.v, &self.cov_acc, &self.cov_jerk);
        let va = self.dot(v, a);
        let aa = self.dot(a, a);
        let vb = self.dot(v, b);
        Ok(lin(&[
            (1.0 / n2, b),
            (-2.0 * (aa + vb) / (n2 * n2) + 8.0 * va * va / (n2 * n2 * n2), v),
            (-4.0 * va / (n2 * n2), a),
        ]))
    }

    /// `P(v, ·)^♯`.
    pub fn schouten_v_sharp(&self) -> Result<Vec<f64>> {
        let p = self.require_schouten()?;
        Ok(mat_vec(&self.connection.g_inv, &mat_vec(p, &self.v)))
    }

    /// Third-order conformal geodesic residual
    /// `B − 3⟨v,A⟩A/|v|² + (3|A|²/(2|v|²)) v + 2P(v,v) v − |v|² P(v,·)^♯`.
    pub fn cg_residual(&self) -> Result<Vec<f64>> {
        self.require_non_null()?;
        let p = self.require_schouten()?;
        let n2 = self.norm2;
        let (v, a, b) = (&self.v, &self.cov_acc, &self.cov_jerk);
        let va = self.dot(v, a);
        let aa = self.dot(a, a);
        let pvv = dot(p, v, v);
        let pv = self.schouten_v_sharp()?;
        Ok(lin(&[
            (1.0, b),
            (-3.0 * va / n2, a),
            (1.5 * aa / n2 + 2.0 * pvv, v),
            (-n2, &pv),
        ]))
    }
}

/// `α` (as a covector) of a non-null curve from its jets.
pub fn alpha_from_curve(chart: &ChartMetric, jets: &CurveJets) -> Result<Vec<f64>> {
    Kinematics::new(chart, jets)?.alpha()
}

/// Third-order residual of a non-null curve from its jets.
pub fn cg_residual_third_order(chart: &ChartMetric, jets: &CurveJets) -> Result<Vec<f64>> {
    Kinematics::new(chart, jets)?.cg_residual()
}

/// State of the first-order system: position, velocity and the 1-form `α`
/// (covector components).
#[derive(Debug, Clone, PartialEq)]
pub struct CGState {
    pub t: f64,
    pub gamma: Vec<f64>,
    pub v: Vec<f64>,
    pub a: Vec<f64>,
}

impl CGState {
    pub fn new(t: f64, gamma: Vec<f64>, v: Vec<f64>, a: Vec<f64>) -> Result<Self> {
        if gamma.len() != v.len() || v.len() != a.len() {
            return Err(Error::Dimension("state components have different lengths".into()));
        }
        Ok(Self { t, gamma, v, a })
    }

    /// Initial data taken from a non-null curve at `t`.
    pub fn from_curve(curve: &CurveSpec, t: f64) -> Result<Self> {
        let k = curve.kinematics(t)?;
        Ok(Self {
            t,
            gamma: k.gamma.clone(),
            v: k.v.clone(),
            a: k.alpha()?,
        })
    }

    pub fn dim(&self) -> usize {
        self.gamma.len()
    }

    fn pack(&self) -> Vec<f64> {
        [self.gamma.as_slice(), &self.v, &self.a].concat()
    }

    fn unpack(t: f64, y: &[f64]) -> Self {
        let n = y.len() / 3;
        Self {
            t,
            gamma: y[..n].to_vec(),
            v: y[n..2 * n].to_vec(),
            a: y[2 * n..].to_vec(),
        }
    }
}

/// Time derivative of a [`CGState`], in the same layout.
#[derive(Debug, Clone, PartialEq)]
pub struct CGDerivative {
    pub gamma: Vec<f64>,
    pub v: Vec<f64>,
    pub a: Vec<f64>,
}

/// Right-hand side of the first-order system
///
/// ```text
/// γ' = v
/// v' = −Γ(v, v) − 2α(v) v + |v|² α^♯
/// (∇_v α) = P(v, ·) + α(v) α − ½|α|² v♭,   a'_i = (∇_v α)_i + Γ^k_ji v^j a_k
/// ```
///
/// No division by `|v|²` occurs, so null velocities are allowed.
pub fn cg_rhs_first_order(chart: &ChartMetric, s: &CGState) -> Result<CGDerivative> {
    let n = chart.dim();
    if s.dim() != n {
        return Err(Error::Dimension(format!("state dimension {} vs chart {n}", s.dim())));
    }
    let c = chart.connection_at(&s.gamma)?;
    let p = chart.schouten_at(&s.gamma)?;
    let (v, a) = (&s.v, &s.a);
    let alpha_sharp = mat_vec(&c.g_inv, a);
    let alpha_v: f64 = a.iter().zip(v).map(|(x, y)| x * y).sum();
    let alpha2: f64 = a.iter().zip(&alpha_sharp).map(|(x, y)| x * y).sum();
    let norm2 = dot(&c.g, v, v);
    let gvv = c.gamma.contract(v, v);
    let vdot = lin(&[(-1.0, &gvv), (-2.0 * alpha_v, v), (norm2, &alpha_sharp)]);
    let v_flat = mat_vec(&c.g, v);
    let pv = mat_vec(&p, v);
    let mut adot = lin(&[(1.0, &pv), (alpha_v, a), (-0.5 * alpha2, &v_flat)]);
    for (i, ai) in adot.iter_mut().enumerate() {
        for j in 0..n {
            for k in 0..n {
                *ai += c.gamma.get(k, j, i) * v[j] * a[k];
            }
        }
    }
    Ok(CGDerivative {
        gamma: v.clone(),
        v: vdot,
        a: adot,
    })
}

/// `λ` and `∂_t λ` of a non-null state, the latter from
/// `∂_t|v|² = 2⟨v, ∇_v v⟩` with `∇_v v` read off the system.
pub fn lambda_from_state(chart: &ChartMetric, s: &CGState) -> Result<(f64, f64)> {
    let d = cg_rhs_first_order(chart, s)?;
    let c = chart.connection_at(&s.gamma)?;
    let norm2 = dot(&c.g, &s.v, &s.v);
    let causal = Causal::classify(norm2, &s.v);
    if causal == Causal::Null {
        return Err(Error::NullVelocity { t: s.t });
    }
    let cov_acc = lin(&[(1.0, &d.v), (1.0, &c.gamma.contract(&s.v, &s.v))]);
    let lambda = norm2.abs().sqrt();
    Ok((lambda, causal.sign() * dot(&c.g, &s.v, &cov_acc) / lambda))
}

/// Right-hand side of the second λ-identity,
/// `3λ α(v)² − λ (∇_v α)(v) ∓ λ³|α|²`, with `∇_v α` from the system.
pub fn lambda_second_derivative(chart: &ChartMetric, s: &CGState) -> Result<f64> {
    let c = chart.connection_at(&s.gamma)?;
    let p = chart.schouten_at(&s.gamma)?;
    let (v, a) = (&s.v, &s.a);
    let norm2 = dot(&c.g, v, v);
    let causal = Causal::classify(norm2, v);
    if causal == Causal::Null {
        return Err(Error::NullVelocity { t: s.t });
    }
    let lambda = norm2.abs().sqrt();
    let alpha_v: f64 = a.iter().zip(v).map(|(x, y)| x * y).sum();
    let alpha2 = dot(&c.g_inv, a, a);
    let nabla_alpha_v = dot(&p, v, v) + alpha_v * alpha_v - 0.5 * alpha2 * norm2;
    Ok(3.0 * lambda * alpha_v * alpha_v
        - lambda * nabla_alpha_v
        - causal.sign() * lambda.powi(3) * alpha2)
}

/// Third-order residual of a state of the first-order system. `γ̈` comes
/// from the system and `γ⃛` from a centred difference of the system along
/// its own flow, so this measures how well a state satisfies the reduced
/// equation. `None` for null states.
pub fn state_residual(chart: &ChartMetric, s: &CGState) -> Result<Option<f64>> {
    let n = s.dim();
    let c = chart.connection_at(&s.gamma)?;
    if Causal::classify(dot(&c.g, &s.v, &s.v), &s.v) == Causal::Null {
        return Ok(None);
    }
    let d = cg_rhs_first_order(chart, s)?;
    let y = s.pack();
    let dy = [d.gamma.as_slice(), &d.v, &d.a].concat();
    let scale = y.iter().chain(&dy).fold(1.0f64, |m, x| m.max(x.abs()));
    let h = 1e-5 / scale;
    let shifted = |sign: f64| -> Result<Vec<f64>> {
        let z: Vec<f64> = y.iter().zip(&dy).map(|(a, b)| a + sign * h * b).collect();
        Ok(cg_rhs_first_order(chart, &CGState::unpack(s.t, &z))?.v)
    };
    let (plus, minus) = (shifted(1.0)?, shifted(-1.0)?);
    let jerk: Vec<f64> = plus.iter().zip(&minus).map(|(p, m)| (p - m) / (2.0 * h)).collect();
    let jets = CurveJets {
        t: s.t,
        d: [s.gamma.clone(), s.v.clone(), d.v, jerk, vec![0.0; n]],
    };
    let r = Kinematics::new(chart, &jets)?.cg_residual()?;
    Ok(Some(r.iter().map(|x| x * x).sum::<f64>().sqrt()))
}

/// One output sample of an integrated trajectory.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectorySample {
    pub state: CGState,
    /// Euclidean norm of the third-order residual (`None` when null).
    pub residual_norm: Option<f64>,
}

/// Sampled solution of the first-order system.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub samples: Vec<TrajectorySample>,
    pub stats: Stats,
}

impl Trajectory {
    pub fn states(&self) -> impl Iterator<Item = &CGState> {
        self.samples.iter().map(|s| &s.state)
    }

    /// CSV with columns `t, gamma_i..., v_i..., a_i..., residual_norm`.
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        let n = self.samples.first().map_or(0, |s| s.state.dim());
        let mut header = vec!["t".to_string()];
        for prefix in ["gamma", "v", "a"] {
            header.extend((1..=n).map(|i| format!("{prefix}{i}")));
        }
        header.push("residual_norm".into());
        writeln!(w, "{}", header.join(","))?;
        for s in &self.samples {
            let st = &s.state;
            let mut row = vec![format!("{:.16e}", st.t)];
            row.extend(st.gamma.iter().chain(&st.v).chain(&st.a).map(|x| format!("{x:.16e}")));
            row.push(s.residual_norm.map_or_else(|| "nan".into(), |r| format!("{r:.16e}")));
            writeln!(w, "{}", row.join(","))?;
        }
        Ok(())
    }
}

/// Monitors the causal character along a trajectory: a non-null start
/// must keep its sign, a null start must stay within [`NULL_DRIFT`].
struct CausalMonitor {
    start: Causal,
}

impl CausalMonitor {
    fn check(&self, chart: &ChartMetric, t: f64, gamma: &[f64], v: &[f64]) -> Result<()> {
        let g = chart.metric_at(gamma)?.g;
        let norm2 = dot(&g, v, v);
        let e2: f64 = v.iter().map(|x| x * x).sum();
        let ok = match self.start {
            Causal::Null => norm2.abs() <= NULL_DRIFT * e2.max(1.0),
            c => Causal::classify(norm2, v) == c,
        };
        if ok {
            Ok(())
        } else {
            Err(Error::CausalFlip { t })
        }
    }
}

/// Splits `times` around `t0` and integrates forward and backward.
fn integrate_both_ways<F, M>(
    f: F,
    monitor: M,
    t0: f64,
    y0: &[f64],
    times: &[f64],
    opts: &Options,
) -> Result<(Vec<(f64, Vec<f64>)>, Stats)>
where
    F: Fn(f64, &[f64]) -> Result<Vec<f64>>,
    M: Fn(f64, &[f64]) -> Result<()>,
{
    if times.iter().any(|t| !t.is_finite()) {
        return Err(Error::Invalid("non-finite sample time".into()));
    }
    let mut fwd: Vec<f64> = times.iter().cloned().filter(|&t| t >= t0).collect();
    let mut bwd: Vec<f64> = times.iter().cloned().filter(|&t| t < t0).collect();
    fwd.sort_by(f64::total_cmp);
    bwd.sort_by(|a, b| b.total_cmp(a));
    let mut stats = Stats::default();
    let mut out = Vec::new();
    for (ts, t_end) in [(&bwd, bwd.last().copied()), (&fwd, fwd.last().copied())] {
        let Some(t_end) = t_end else { continue };
        let (ys, st) = dopri::integrate(&f, t0, y0, t_end, ts, opts, &monitor)?;
        stats.accepted += st.accepted;
        stats.rejected += st.rejected;
        stats.evaluations += st.evaluations;
        out.extend(ts.iter().cloned().zip(ys));
    }
    out.sort_by(|a, b| a.0.total_cmp(&b.0));
    Ok((out, stats))
}

/// Integrates the first-order system from `s0` and reports the state at
/// each of `times` (which may lie on both sides of `s0.t`).
pub fn integrate_cg(
    chart: &ChartMetric,
    s0: &CGState,
    times: &[f64],
    opts: &Options,
) -> Result<Trajectory> {
    let n = chart.dim();
    if s0.dim() != n {
        return Err(Error::Dimension(format!("state dimension {} vs chart {n}", s0.dim())));
    }
    let monitor = CausalMonitor {
        start: Causal::classify(dot(&chart.metric_at(&s0.gamma)?.g, &s0.v, &s0.v), &s0.v),
    };
    let rhs = |t: f64, y: &[f64]| -> Result<Vec<f64>> {
        let d = cg_rhs_first_order(chart, &CGState::unpack(t, y))?;
        Ok([d.gamma, d.v, d.a].concat())
    };
    let mon = |t: f64, y: &[f64]| monitor.check(chart, t, &y[..n], &y[n..2 * n]);
    let (raw, stats) = integrate_both_ways(rhs, mon, s0.t, &s0.pack(), times, opts)?;
    let samples = raw
        .into_iter()
        .map(|(t, y)| {
            let state = CGState::unpack(t, &y);
            let residual_norm = state_residual(chart, &state)?;
            Ok(TrajectorySample {
                state,
                residual_norm,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Trajectory { samples, stats })
}

/// Sample of the reduced third-order equation: `(t, γ, γ̇, γ̈)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ThirdOrderSample {
    pub t: f64,
    pub gamma: Vec<f64>,
    pub v: Vec<f64>,
    pub acc: Vec<f64>,
}

/// `γ⃛` solving the reduced equation for given `(γ, γ̇, γ̈)`.
pub fn third_order_rhs(chart: &ChartMetric, t: f64, gamma: &[f64], v: &[f64], acc: &[f64]) -> Result<Vec<f64>> {
    let c = chart.connection_at(gamma)?;
    let p = chart.schouten_at(gamma)?;
    let norm2 = dot(&c.g, v, v);
    if Causal::classify(norm2, v) == Causal::Null {
        return Err(Error::NullVelocity { t });
    }
    let a = lin(&[(1.0, acc), (1.0, &c.gamma.contract(v, v))]);
    let va = dot(&c.g, v, &a);
    let aa = dot(&c.g, &a, &a);
    let pv = mat_vec(&c.g_inv, &mat_vec(&p, v));
    let b_target = lin(&[
        (3.0 * va / norm2, &a),
        (-1.5 * aa / norm2 - 2.0 * dot(&p, v, v), v),
        (norm2, &pv),
    ]);
    // γ⃛ = B − Γ(v, A) − (∂Γ·v)(v, v) − 2Γ(γ̈, v)
    let gva = c.gamma.contract(v, &a);
    let dgv = dgamma_along(&c.dgamma, v).contract(v, v);
    let gav = c.gamma.contract(acc, v);
    Ok(lin(&[(1.0, &b_target), (-1.0, &gva), (-1.0, &dgv), (-2.0, &gav)]))
}

/// Integrates the reduced third-order equation from `(γ, γ̇, γ̈)` at `t0`.
pub fn integrate_cg_third_order(
    chart: &ChartMetric,
    t0: f64,
    gamma: &[f64],
    v: &[f64],
    acc: &[f64],
    times: &[f64],
    opts: &Options,
) -> Result<Vec<ThirdOrderSample>> {
    let n = chart.dim();
    if gamma.len() != n || v.len() != n || acc.len() != n {
        return Err(Error::Dimension("initial data does not match chart dimension".into()));
    }
    let start = Causal::classify(dot(&chart.metric_at(gamma)?.g, v, v), v);
    if start == Causal::Null {
        return Err(Error::NullVelocity { t: t0 });
    }
    let monitor = CausalMonitor { start };
    let rhs = |t: f64, y: &[f64]| -> Result<Vec<f64>> {
        let jerk = third_order_rhs(chart, t, &y[..n], &y[n..2 * n], &y[2 * n..])?;
        Ok([&y[n..], &jerk].concat())
    };
    let mon = |t: f64, y: &[f64]| monitor.check(chart, t, &y[..n], &y[n..2 * n]);
    let y0 = [gamma, v, acc].concat();
    let (raw, _) = integrate_both_ways(rhs, mon, t0, &y0, times, opts)?;
    Ok(raw
        .into_iter()
        .map(|(t, y)| ThirdOrderSample {
            t,
            gamma: y[..n].to_vec(),
            v: y[n..2 * n].to_vec(),
            acc: y[2 * n..].to_vec(),
        })
        .collect())
}

/// Outcome of a reparametrization test.
#[derive(Debug, Clone, PartialEq)]
pub struct ReparamReport {
    /// Largest third-order residual of `γ` at the mapped parameters `f(t_i)`.
    pub input_max_residual: f64,
    /// Largest third-order residual of `γ ∘ f` at the samples `t_i`.
    pub output_max_residual: f64,
    pub samples: Vec<(f64, f64)>,
}

/// Residual tolerance for accepting the input curve as a conformal geodesic.
pub const INPUT_CG_TOL: f64 = 1e-8;

fn residual_norm(curve: &CurveSpec, t: f64) -> Result<f64> {
    let r = curve.kinematics(t)?.cg_residual()?;
    Ok(r.iter().map(|x| x * x).sum::<f64>().sqrt())
}

/// Checks whether reparametrizing the conformal geodesic `curve` by `f`
/// (an expression in `t`) keeps the third-order residual at zero. The input
/// must itself be a conformal geodesic at every `f(t_i)`.
pub fn reparametrization_check(curve: &CurveSpec, f: &Expr, samples: &[f64]) -> Result<ReparamReport> {
    let mut input_max = 0.0f64;
    for &t in samples {
        let ft = f.eval(&[t]).map_err(|_| Error::Pole { t })?;
        let r = residual_norm(curve, ft)?;
        if !(r < INPUT_CG_TOL) {
            return Err(Error::NotConformalGeodesic { t: ft, residual: r });
        }
        input_max = input_max.max(r);
    }
    let composed = curve.reparametrize(f)?;
    let mut out = Vec::with_capacity(samples.len());
    let mut output_max = 0.0f64;
    for &t in samples {
        let r = residual_norm(&composed, t)?;
        output_max = output_max.max(r);
        out.push((t, r));
    }
    Ok(ReparamReport {
        input_max_residual: input_max,
        output_max_residual: output_max,
        samples: out,
    })
}

#[cfg(test)]
mod tests;
