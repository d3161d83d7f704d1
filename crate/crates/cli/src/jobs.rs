//! The job kinds: curvature, geodesic, verify, energy, report.

use std::fmt::Write;

use cgholo::asym::{dyadic_ladder, estimate_order, extract_coefficient};
use cgholo::energy::{self, Window};
use cgholo::geodesic::{
    integrate_cg, integrate_cg_third_order, lambda_from_state, CGState, Causal, Options,
};
use cgholo::hmap::{
    build_expansion, ladder, ladder_max, pullback_leading, sff_leading_coefficients, Adjust, Coef, Domain,
    ExpansionMap, LadderSample,
};
use cgholo::Error;
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};
use serde_json::{Map, Value};

use crate::config::Section;
use crate::plot::{self, Series};
use crate::report::{num, nums, Claim, JobOutcome};
use crate::setup::{t_exprs, Setup};
use crate::RunError;

const TENSION: &str = "holds if and only if";
const SFF: &str = "second fundamental form condition";
const PULLBACK: &str = "To close the circle of ideas";
const CG: &str = "is a conformal geodesic if and only if";
const LAMBDA: &str = "For later computations, we remark that";
const SCHOUTEN: &str = "is the Schouten tensor";
const SCALAR: &str = "being the scalar curvature of";
const EINSTEIN: &str = "is a complete smooth Einstein metric";
const ENERGY: &str = "the renormalized energy of";
const CRITICAL: &str = "the formally undetermined coefficient";
const EXPANSION: &str = "has an expansion of the form";

/// Run-wide options from the command line.
#[derive(Debug, Clone, Copy, Default)]
pub struct RunOptions {
    pub plots: bool,
    pub ladder_depth: Option<i32>,
    pub seed: u64,
}

pub fn run_job(job: &Section, setup: &Setup, opts: &RunOptions) -> Result<JobOutcome, RunError> {
    let kind = job.require("kind")?;
    let mut out = JobOutcome {
        name: job.name.clone(),
        kind: kind.to_string(),
        ..Default::default()
    };
    match kind {
        "curvature" => curvature(job, setup, opts, &mut out)?,
        "geodesic" => geodesic(job, setup, opts, &mut out)?,
        "verify" => verify(job, setup, opts, &mut out)?,
        "energy" => energy_job(job, setup, &mut out)?,
        "report" => report(job, setup, &mut out)?,
        other => {
            return Err(job
                .error("kind", format!("unknown job kind `{other}` (curvature, geodesic, verify, energy, report)"))
                .into())
        }
    }
    Ok(out)
}

fn f(x: f64) -> String {
    format!("{x:.16e}")
}

fn linspace(a: f64, b: f64, n: usize) -> Vec<f64> {
    if n < 2 {
        return vec![a];
    }
    (0..n).map(|i| a + (b - a) * i as f64 / (n - 1) as f64).collect()
}

fn curvature(job: &Section, setup: &Setup, opts: &RunOptions, out: &mut JobOutcome) -> Result<(), RunError> {
    job.check_keys(&[
        "kind",
        "points",
        "random_points",
        "box",
        "expect_scalar",
        "expect_schouten_factor",
        "tol",
        "trace_tol",
        "einstein_x",
        "einstein_tol",
    ])?;
    let chart = &setup.chart;
    let n = chart.dim();
    let mut points = job.points("points")?.unwrap_or_default();
    if let Some(bad) = points.iter().find(|p| p.len() != n) {
        return Err(job.error("points", format!("point {bad:?} does not have {n} coordinates")).into());
    }
    let count = job.usize_or("random_points", 0)?;
    if count > 0 {
        let (lo, hi) = job.f64_pair("box")?.unwrap_or((-0.5, 0.5));
        if !(lo < hi) {
            return Err(job.error("box", "needs lo < hi").into());
        }
        let mut rng = StdRng::seed_from_u64(opts.seed);
        points.extend((0..count).map(|_| (0..n).map(|_| rng.random_range(lo..hi)).collect::<Vec<f64>>()));
    }
    if points.is_empty() {
        return Err(job.error("points", "needs points or random_points").into());
    }
    let tol = job.f64_or("tol", 1e-9)?;
    let mut csv = String::new();
    let coords: Vec<String> = chart.var_names().to_vec();
    let _ = writeln!(csv, "{},scalar,trace_schouten,trace_residual", coords.join(","));
    let (mut scalar_err, mut trace_err, mut factor_err) = (0.0f64, 0.0f64, 0.0f64);
    let expect_scalar = job.f64_opt("expect_scalar")?;
    let factor = job.f64_opt("expect_schouten_factor")?;
    let mut scalars = Vec::new();
    for y in &points {
        let intr = chart.intrinsic_at(y)?;
        let r = intr.scalar;
        scalars.push(r);
        if let Some(c) = expect_scalar {
            scalar_err = scalar_err.max((r - c).abs());
        }
        let (tr, resid) = if chart.has_schouten() {
            let p = chart.schouten_at(y)?;
            let g_inv = &intr.connection.g_inv;
            let tr = (0..n).flat_map(|i| (0..n).map(move |j| (i, j))).map(|(i, j)| g_inv[(i, j)] * p[(i, j)]).sum::<f64>();
            let resid = (tr - r / (2.0 * (n as f64 - 1.0))).abs();
            trace_err = trace_err.max(resid);
            if let Some(c) = factor {
                factor_err = factor_err.max((p - c * &intr.connection.g).amax());
            }
            (tr, resid)
        } else {
            (f64::NAN, f64::NAN)
        };
        let row: Vec<String> = y.iter().chain([r, tr, resid].iter()).map(|&x| f(x)).collect();
        let _ = writeln!(csv, "{}", row.join(","));
    }
    if let Some(c) = expect_scalar {
        out.claims.push(Claim::at_most("scalar_curvature", SCALAR, scalar_err, tol).with("expected", num(c)));
    }
    if chart.has_schouten() {
        out.claims.push(Claim::at_most("schouten_trace", SCHOUTEN, trace_err, job.f64_or("trace_tol", 1e-8)?));
        if let Some(c) = factor {
            out.claims.push(Claim::at_most("schouten_factor", SCHOUTEN, factor_err, tol).with("factor", num(c)));
        }
    }
    if let Some(xs) = job.f64_list("einstein_x")? {
        let amb = setup.ambient()?;
        let mut worst = 0.0f64;
        let mut per_x = Vec::new();
        for &x in &xs {
            let mut m = 0.0f64;
            for y in &points {
                m = m.max(amb.einstein_residual(x, y)?);
            }
            per_x.push(m);
            worst = worst.max(m);
        }
        out.claims.push(
            Claim::at_most("einstein_residual", EINSTEIN, worst, job.f64_or("einstein_tol", 1e-5)?)
                .with("x", nums(&xs))
                .with("per_x", nums(&per_x))
                .with("mode", Value::String(amb.mode().name().into())),
        );
    }
    out.results.insert("points".into(), Value::from(points.len()));
    out.results.insert("scalar_min".into(), num(scalars.iter().cloned().fold(f64::INFINITY, f64::min)));
    out.results.insert("scalar_max".into(), num(scalars.iter().cloned().fold(f64::NEG_INFINITY, f64::max)));
    out.csv = csv;
    Ok(())
}

fn geodesic(job: &Section, setup: &Setup, opts: &RunOptions, out: &mut JobOutcome) -> Result<(), RunError> {
    job.check_keys(&[
        "kind",
        "t0",
        "span",
        "steps",
        "tol",
        "compare",
        "match_tol",
        "residual_tol",
        "lambda_tol",
        "third_order",
        "third_order_tol",
    ])?;
    let curve = setup.curve()?;
    let chart = curve.chart();
    let t0 = job.f64_or("t0", 0.0)?;
    let (a, b) = job.f64_pair("span")?.unwrap_or((-3.0, 3.0));
    if !(a <= t0 && t0 <= b && a < b) {
        return Err(job.error("span", "needs lo < hi with t0 inside").into());
    }
    let times = linspace(a, b, job.usize_or("steps", 61)?);
    let integ = Options::with_tol(job.f64_or("tol", 1e-10)?);
    let s0 = CGState::from_curve(curve, t0)?;
    let traj = integrate_cg(chart, &s0, &times, &integ)?;

    let mut match_err = 0.0f64;
    let mut resid = 0.0f64;
    let mut lam_err = 0.0f64;
    let mut non_null = false;
    for smp in &traj.samples {
        let st = &smp.state;
        let exact = curve.point(st.t)?;
        match_err = match_err.max(st.gamma.iter().zip(&exact).fold(0.0, |m, (x, y)| m.max((x - y).abs())));
        if let Some(r) = smp.residual_norm {
            resid = resid.max(r);
            non_null = true;
            let (lam, lam_dot) = lambda_from_state(chart, st)?;
            let alpha_v: f64 = st.a.iter().zip(&st.v).map(|(x, y)| x * y).sum();
            lam_err = lam_err.max((lam_dot + lam * alpha_v).abs());
        }
    }
    if job.bool_or("compare", true)? {
        out.claims.push(Claim::at_most("closed_form_match", CG, match_err, job.f64_or("match_tol", 1e-8)?));
    }
    if non_null {
        out.claims.push(Claim::at_most("cg_residual", CG, resid, job.f64_or("residual_tol", 1e-6)?));
        out.claims.push(Claim::at_most("lambda_identity", LAMBDA, lam_err, job.f64_or("lambda_tol", 1e-7)?));
    }
    if job.bool_or("third_order", false)? {
        let k = curve.kinematics(t0)?;
        let third = integrate_cg_third_order(chart, t0, &k.gamma, &k.v, &k.acc, &times, &integ)?;
        let diff = third.iter().zip(&traj.samples).fold(0.0f64, |m, (p, q)| {
            p.gamma.iter().zip(&q.state.gamma).fold(m, |m, (x, y)| m.max((x - y).abs()))
        });
        out.claims.push(Claim::at_most("third_order_agreement", CG, diff, job.f64_or("third_order_tol", 1e-7)?));
    }
    out.results.insert("accepted_steps".into(), Value::from(traj.stats.accepted));
    out.results.insert("rejected_steps".into(), Value::from(traj.stats.rejected));
    out.results.insert("max_closed_form_error".into(), num(match_err));
    let mut buf = Vec::new();
    traj.write_csv(&mut buf).map_err(|e| RunError::Io(e.to_string()))?;
    out.csv = String::from_utf8(buf).expect("csv is utf-8");
    if opts.plots && chart.dim() >= 2 {
        let pts = |g: &dyn Fn(f64) -> Option<Vec<f64>>| -> Vec<(f64, f64)> {
            times.iter().filter_map(|&t| g(t)).map(|p| (p[0], p[1])).collect()
        };
        let integrated: Vec<(f64, f64)> = traj.states().map(|s| (s.gamma[0], s.gamma[1])).collect();
        let exact = pts(&|t| curve.point(t).ok());
        out.plots.push((
            format!("{}_trajectory", out.name),
            plot::lines(
                "trajectory",
                "coordinate 1",
                "coordinate 2",
                &[
                    Series { label: "integrated", points: integrated },
                    Series { label: "closed form", points: exact },
                ],
            ),
        ));
    }
    Ok(())
}

/// Applies `x2 = …` (set) and `delta_x2 = …` (shift) keys to a map.
fn apply_overrides(job: &Section, mut m: ExpansionMap) -> Result<ExpansionMap, RunError> {
    for c in Coef::ALL {
        for (key, shift) in [(c.name().to_string(), false), (format!("delta_{}", c.name()), true)] {
            if let Some(e) = t_exprs(job, &key)? {
                let adj = if shift { Adjust::Shift(e) } else { Adjust::Set(e) };
                m = m.with_override(c, adj).map_err(|e| job.error(&key, e.to_string()))?;
            }
        }
    }
    Ok(m)
}

const COEF_KEYS: [&str; 16] = [
    "x1", "x2", "x3", "v0", "y1", "y2", "y3", "v", "delta_x1", "delta_x2", "delta_x3", "delta_v0", "delta_y1",
    "delta_y2", "delta_y3", "delta_v",
];

fn slope_claim(name: &str, anchor: &'static str, series: &[(f64, f64)], min: f64, floor: f64, r2_min: f64) -> Claim {
    let max = series.iter().fold(0.0f64, |m, p| m.max(p.1));
    match estimate_order(series, floor) {
        Ok(fit) => Claim::new(name, anchor, fit.slope, min, fit.slope >= min && fit.r2 >= r2_min)
            .with("r2", num(fit.r2))
            .with("r2_min", num(r2_min))
            .with("intercept", num(fit.intercept))
            .with("used_points", Value::from(fit.used_points))
            .with("log_correction_suspected", Value::Bool(fit.curvature_flag)),
        // Everything at the noise floor: the quantity vanishes to working precision.
        Err(Error::AtNoiseFloor { used }) => Claim::new(name, anchor, f64::NAN, min, true)
            .with("at_noise_floor", Value::Bool(true))
            .with("used_points", Value::from(used))
            .with("max_value", num(max)),
        Err(e) => Claim::new(name, anchor, f64::NAN, min, false).with("error", Value::String(e.to_string())),
    }
}

fn verify(job: &Section, setup: &Setup, opts: &RunOptions, out: &mut JobOutcome) -> Result<(), RunError> {
    let mut allowed = vec![
        "kind",
        "ladder",
        "times",
        "claims",
        "noise_floor",
        "r2_min",
        "zero_tol",
        "tension_slope_min",
        "sff_slope_min",
        "pullback_slope_min",
        "coefficient",
        "coefficient_rtol",
    ];
    allowed.extend(COEF_KEYS);
    job.check_keys(&allowed)?;
    let curve = setup.curve()?;
    let ambient = setup.ambient()?;
    let domain = setup.domain()?;
    let times = job.f64_list("times")?.unwrap_or_else(|| setup.samples.clone());
    let m = apply_overrides(job, build_expansion(curve, domain, ambient, &times)?)?;
    let (k0, mut k1) = job.int_range("ladder")?.unwrap_or((3, 10));
    if let Some(d) = opts.ladder_depth {
        k1 = d;
    }
    if k1 < k0 + 2 {
        return Err(job.error("ladder", "needs at least three rungs").into());
    }
    let s = dyadic_ladder(k0, k1);
    let samples = ladder(&m, ambient, &s, &times)?;

    let floor = job.f64_or("noise_floor", 1e-15)?;
    let r2_min = job.f64_or("r2_min", 0.999)?;
    let zero_tol = job.f64_or("zero_tol", 1e-12)?;
    let tension = ladder_max(&samples, LadderSample::tension_max);
    let sff = ladder_max(&samples, |x| x.sff.max_abs());
    let pb = ladder_max(&samples, |x| x.pullback.max_abs());
    let max_of = |v: &[(f64, f64)]| v.iter().fold(0.0f64, |m, p| m.max(p.1));

    let claims = job
        .list("claims")
        .unwrap_or_else(|| vec!["tension_slope".into(), "sff_slope".into(), "pullback_decay".into()]);
    for c in &claims {
        let claim = match c.as_str() {
            "tension_zero" => Claim::at_most("tension_zero", TENSION, max_of(&tension), zero_tol),
            "sff_zero" => Claim::at_most("sff_zero", SFF, max_of(&sff), zero_tol),
            "pullback_zero" => Claim::at_most("pullback_zero", PULLBACK, max_of(&pb), zero_tol),
            "tension_slope" => {
                slope_claim(c, TENSION, &tension, job.f64_or("tension_slope_min", 3.5)?, floor, r2_min)
            }
            "sff_slope" => {
                let claim = slope_claim(c, SFF, &sff, job.f64_or("sff_slope_min", 1.5)?, floor, r2_min);
                lemma_extras(claim, &m, domain, &samples, times[0])?
            }
            "pullback_decay" => {
                let claim = slope_claim(c, PULLBACK, &pb, job.f64_or("pullback_slope_min", 0.5)?, floor, r2_min);
                let co = m.coefficients(times[0])?;
                let lead = pullback_leading(curve, domain, times[0], co.x3, &co.y3)?;
                claim.with("predicted_limit", nums(&[lead.ss, lead.st, lead.tt]))
            }
            "tension_coefficient" => coefficient_claim(job, &samples, times[0])?,
            "even_expansion" => {
                let odd = times.iter().map(|&t| energy::is_even_expansion(&m, t)).collect::<cgholo::Result<Vec<bool>>>()?;
                let bad = odd.iter().filter(|&&e| !e).count();
                Claim::at_most("even_expansion", EXPANSION, bad as f64, 0.0)
            }
            other => return Err(job.error("claims", format!("unknown claim `{other}`")).into()),
        };
        out.claims.push(claim);
    }

    out.results.insert("domain".into(), Value::String(domain.name().into()));
    out.results.insert("ambient".into(), Value::String(ambient.mode().name().into()));
    out.results.insert("theorem_coefficients".into(), Value::Bool(m.theorem_coefficients()));
    out.results.insert("ladder".into(), nums(&s));
    out.results.insert("times".into(), nums(&times));
    out.results.insert("tension_max".into(), nums(&tension.iter().map(|p| p.1).collect::<Vec<_>>()));
    out.results.insert("sff_max".into(), nums(&sff.iter().map(|p| p.1).collect::<Vec<_>>()));
    out.results.insert("pullback_max".into(), nums(&pb.iter().map(|p| p.1).collect::<Vec<_>>()));

    let n = curve.dim();
    let mut csv = String::new();
    let mut header = vec!["s".to_string(), "t".to_string()];
    header.extend((0..=n).map(|i| format!("tension{i}")));
    for part in ["ss", "st", "tt"] {
        header.extend((0..=n).map(|i| format!("sff_{part}{i}")));
    }
    header.extend(["pullback_ss", "pullback_st", "pullback_tt"].map(String::from));
    let _ = writeln!(csv, "{}", header.join(","));
    for x in &samples {
        let row: Vec<String> = [x.s, x.t]
            .iter()
            .chain(&x.tension)
            .chain(&x.sff.ss)
            .chain(&x.sff.st)
            .chain(&x.sff.tt)
            .chain([x.pullback.ss, x.pullback.st, x.pullback.tt].iter())
            .map(|&v| f(v))
            .collect();
        let _ = writeln!(csv, "{}", row.join(","));
    }
    out.csv = csv;
    if opts.plots {
        out.plots.push((
            format!("{}_decay", out.name),
            plot::log_log(
                "decay along the ladder",
                &[
                    Series { label: "tension", points: tension.clone() },
                    Series { label: "second fundamental form", points: sff.clone() },
                    Series { label: "pullback defect", points: pb.clone() },
                ],
            ),
        ));
    }
    Ok(())
}

/// Adds the extracted and predicted `s`-coefficient of the mixed second
/// fundamental form component at `t`.
fn lemma_extras(
    claim: Claim,
    m: &ExpansionMap,
    domain: Domain,
    samples: &[LadderSample],
    t: f64,
) -> Result<Claim, RunError> {
    let at_t: Vec<&LadderSample> = samples.iter().filter(|x| x.t == t).collect();
    let n = m.curve().dim();
    let mut extracted = Vec::with_capacity(n + 1);
    for i in 0..=n {
        let series: Vec<(f64, f64)> = at_t.iter().map(|x| (x.s, x.sff.st[i])).collect();
        extracted.push(extract_coefficient(&series, 1).map_or(f64::NAN, |c| c.value));
    }
    let co = m.coefficients(t)?;
    let lead = sff_leading_coefficients(m.curve(), domain, t, co.x3, &co.y3)?;
    Ok(claim
        .with("coefficient_t", num(t))
        .with("extracted_mixed_coefficient", nums(&extracted))
        .with("predicted_mixed_coefficient", nums(&lead.st)))
}

/// `coefficient = component, power, expected`: the extracted coefficient of
/// `s^power` in the tension component at the first sample time.
fn coefficient_claim(job: &Section, samples: &[LadderSample], t: f64) -> Result<Claim, RunError> {
    let spec = job
        .f64_list("coefficient")?
        .filter(|v| v.len() == 3 && v[0] >= 0.0 && v[0].fract() == 0.0 && v[1].fract() == 0.0)
        .ok_or_else(|| job.error("coefficient", "expected `component, power, expected value`"))?;
    let (comp, power, expected) = (spec[0] as usize, spec[1] as i32, spec[2]);
    let series: Vec<(f64, f64)> = samples
        .iter()
        .filter(|x| x.t == t)
        .map(|x| x.tension.get(comp).copied().ok_or(()))
        .zip(samples.iter().filter(|x| x.t == t))
        .map(|(v, x)| v.map(|v| (x.s, v)))
        .collect::<Result<_, ()>>()
        .map_err(|_| job.error("coefficient", format!("no tension component {comp}")))?;
    let rtol = job.f64_or("coefficient_rtol", 0.02)?;
    let c = extract_coefficient(&series, power);
    Ok(match c {
        Ok(c) => {
            let rel = (c.value - expected).abs() / expected.abs().max(f64::MIN_POSITIVE);
            Claim::at_most("tension_coefficient", TENSION, rel, rtol)
                .with("extracted", num(c.value))
                .with("expected", num(expected))
                .with("power", Value::from(power))
                .with("component", Value::from(comp))
        }
        Err(e) => Claim::new("tension_coefficient", TENSION, f64::NAN, rtol, false).with("error", Value::String(e.to_string())),
    })
}

fn energy_job(job: &Section, setup: &Setup, out: &mut JobOutcome) -> Result<(), RunError> {
    let mut allowed = vec![
        "kind",
        "window",
        "s_max",
        "eps",
        "expect_c1",
        "expect_e_ren",
        "energy_tol",
        "u3",
        "dphi",
        "variation_rtol",
        "variation_atol",
    ];
    allowed.extend(COEF_KEYS);
    job.check_keys(&allowed)?;
    let curve = setup.curve()?;
    let ambient = setup.ambient()?;
    if setup.domain()? != Domain::H2 {
        return Err(job.error("kind", "energy jobs need the H2 domain").into());
    }
    let (t0, t1) = job.f64_pair("window")?.unwrap_or((0.0, 1.0));
    let w = Window::new(t0, t1, job.f64_or("s_max", 1.0)?)?;
    let (k0, k1) = job.int_range("eps")?.unwrap_or((3, 10));
    if k0 < 1 || k1 < k0 + 3 {
        return Err(job.error("eps", "needs at least four rungs below s_max").into());
    }
    let eps = energy::epsilon_ladder(&w, k0, k1);
    let mut times: Vec<f64> = setup.samples.iter().cloned().filter(|t| (t0..=t1).contains(t)).collect();
    times.extend([t0, 0.5 * (t0 + t1), t1]);
    let m = apply_overrides(job, build_expansion(curve, Domain::H2, ambient, &times)?)?;
    let rep = energy::renormalized_energy(&m, ambient, &w, &eps)?;

    out.claims.push(Claim::at_most(
        "fit_residual",
        ENERGY,
        rep.fit_residual,
        1e-4 * rep.c1.abs().max(1.0),
    ));
    let tol = job.f64_or("energy_tol", 1e-8)?;
    if let Some(c) = job.f64_opt("expect_c1")? {
        out.claims.push(Claim::at_most("c1", ENERGY, (rep.c1 - c).abs(), tol).with("expected", num(c)));
    }
    if let Some(c) = job.f64_opt("expect_e_ren")? {
        out.claims.push(Claim::at_most("e_ren", ENERGY, (rep.e_ren - c).abs(), tol).with("expected", num(c)));
    }
    let odd = times
        .iter()
        .map(|&t| energy::is_even_expansion(&m, t))
        .collect::<cgholo::Result<Vec<bool>>>()?
        .iter()
        .filter(|&&e| !e)
        .count();
    out.claims.push(Claim::at_most("even_expansion", EXPANSION, odd as f64, 0.0));

    match (t_exprs(job, "u3")?, t_exprs(job, "dphi")?) {
        (Some(u3), Some(dphi)) => {
            let v = energy::first_variation_check(&m, &u3, &dphi, ambient, &w, &eps, energy::VARIATION_STEP)?;
            let thr = (job.f64_or("variation_rtol", 0.01)? * v.predicted.abs()).max(job.f64_or("variation_atol", 1e-6)?);
            out.claims.push(
                Claim::at_most("first_variation", CRITICAL, (v.numeric - v.predicted).abs(), thr)
                    .with("numeric", num(v.numeric))
                    .with("predicted", num(v.predicted)),
            );
        }
        (None, None) => {}
        _ => return Err(job.error("u3", "u3 and dphi go together").into()),
    }

    let mut r = Map::new();
    r.insert("window".into(), nums(&[w.t0, w.t1, w.s_max]));
    r.insert("c1".into(), num(rep.c1));
    r.insert("e_ren".into(), num(rep.e_ren));
    r.insert("c_lin".into(), num(rep.c_lin));
    r.insert("fit_residual".into(), num(rep.fit_residual));
    r.insert("quadrature_level".into(), Value::from(rep.quadrature_level));
    out.results = r;
    let mut csv = String::from("epsilon,energy\n");
    for (e, v) in rep.epsilons.iter().zip(&rep.energies) {
        let _ = writeln!(csv, "{},{}", f(*e), f(*v));
    }
    out.csv = csv;
    Ok(())
}

fn report(job: &Section, setup: &Setup, out: &mut JobOutcome) -> Result<(), RunError> {
    job.check_keys(&["kind", "times", "cg_tol"])?;
    let curve = setup.curve()?;
    let times = job.f64_list("times")?.unwrap_or_else(|| setup.samples.clone());
    let mut csv = String::from("t,causal,lambda,residual_norm\n");
    let mut worst = 0.0f64;
    let mut any = false;
    for &t in &times {
        let k = curve.kinematics(t)?;
        let (lam, res) = if k.causal == Causal::Null {
            (0.0, f64::NAN)
        } else {
            let r = k.cg_residual()?;
            let norm = r.iter().map(|x| x * x).sum::<f64>().sqrt();
            worst = worst.max(norm);
            any = true;
            (k.lambda(), norm)
        };
        let _ = writeln!(csv, "{},{},{},{}", f(t), causal_name(k.causal), f(lam), f(res));
    }
    if let Some(tol) = job.f64_opt("cg_tol")? {
        if !any {
            return Err(job.error("cg_tol", "the residual is undefined at null points").into());
        }
        out.claims.push(Claim::at_most("conformal_geodesic", CG, worst, tol));
    }
    out.results.insert("max_residual_norm".into(), num(if any { worst } else { f64::NAN }));
    out.csv = csv;
    Ok(())
}

fn causal_name(c: Causal) -> &'static str {
    match c {
        Causal::Spacelike => "spacelike",
        Causal::Timelike => "timelike",
        Causal::Null => "null",
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::Config;

    const BASE: &str = "[metric]\nbuiltin = flat\nschouten11 = 0\n\
        [curve]\ngamma1 = t\ngamma2 = 0\nsamples = -0.3, 0, 0.4\n\
        [ambient]\nmode = exact_hyperbolic\n[domain]\ntype = H2\n";

    fn run(job: &str) -> Result<JobOutcome, RunError> {
        let cfg = Config::parse(&format!("{BASE}[job j]\n{job}")).unwrap();
        let setup = Setup::build(&cfg).unwrap();
        run_job(&cfg.jobs[0], &setup, &RunOptions::default())
    }

    #[test]
    fn line_control_has_vanishing_tension() {
        let o = run("kind = verify\nclaims = tension_zero, sff_zero, pullback_zero, tension_slope").unwrap();
        assert!(o.pass(), "{:?}", o.claims);
        assert_eq!(o.claims[3].extras["at_noise_floor"], Value::Bool(true));
        assert_eq!(o.csv.lines().count(), 1 + 8 * 3);
    }

    #[test]
    fn surgery_coefficient_through_config() {
        let o = run("kind = verify\ndelta_x2 = 0.1\nclaims = tension_coefficient\ncoefficient = 0, 2, -0.2").unwrap();
        assert!(o.pass(), "{:?}", o.claims);
    }

    #[test]
    fn energy_of_plane() {
        let o = run("kind = energy\nexpect_c1 = 1\nexpect_e_ren = -1").unwrap();
        assert!(o.pass(), "{:?}", o.claims);
        assert_eq!(o.csv.lines().count(), 9);
    }

    #[test]
    fn report_and_curvature_jobs() {
        let o = run("kind = report\ncg_tol = 1e-12").unwrap();
        assert!(o.pass());
        let o = run("kind = curvature\npoints = 0, 0; 1, 2\nexpect_scalar = 0").unwrap();
        assert!(o.pass(), "{:?}", o.claims);
        assert_eq!(o.claims.len(), 2);
    }

    #[test]
    fn geodesic_job_on_line() {
        let o = run("kind = geodesic\nspan = -1, 1\nsteps = 5\nthird_order = true").unwrap();
        assert!(o.pass(), "{:?}", o.claims);
    }

    #[test]
    fn bad_jobs_are_errors() {
        assert!(run("kind = nope").is_err());
        assert!(run("kind = verify\nclaims = whatever").is_err());
        assert!(run("kind = verify\nunknown_key = 1").is_err());
        assert!(run("kind = verify\nladder = 3, 4").is_err());
        assert!(run("kind = energy\nu3 = 0, 0").is_err());
        assert!(run("kind = verify\nx2 = 1, 2").is_err());
    }
}
