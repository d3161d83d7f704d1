//! Dormand–Prince 5(4) with PI step-size control and the method's own
//! quartic continuous extension for dense output.

use crate::error::{Error, Result};

const C2: f64 = 1.0 / 5.0;
const C3: f64 = 3.0 / 10.0;
const C4: f64 = 4.0 / 5.0;
const C5: f64 = 8.0 / 9.0;

const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const A71: f64 = 35.0 / 384.0;
const A73: f64 = 500.0 / 1113.0;
const A74: f64 = 125.0 / 192.0;
const A75: f64 = -2187.0 / 6784.0;
const A76: f64 = 11.0 / 84.0;

const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;

const D1: f64 = -12715105075.0 / 11282082432.0;
const D3: f64 = 87487479700.0 / 32700410799.0;
const D4: f64 = -10690763975.0 / 1880347072.0;
const D5: f64 = 701980252875.0 / 199316789632.0;
const D6: f64 = -1453857185.0 / 822651844.0;
const D7: f64 = 69997945.0 / 29380423.0;

const SAFETY: f64 = 0.9;
const BETA: f64 = 0.04;
const FAC_MIN: f64 = 0.2;
const FAC_MAX: f64 = 10.0;

/// Integrator settings.
#[derive(Debug, Clone)]
pub struct Options {
    pub rtol: f64,
    pub atol: f64,
    /// Initial step magnitude; chosen automatically when `None`.
    pub h_init: Option<f64>,
    pub h_max: f64,
    pub max_steps: usize,
    /// Shorten steps so that every requested output time is a step end,
    /// instead of interpolating.
    pub land_on_samples: bool,
}

impl Default for Options {
    fn default() -> Self {
        Self {
            rtol: 1e-10,
            atol: 1e-10,
            h_init: None,
            h_max: f64::INFINITY,
            max_steps: 1_000_000,
            land_on_samples: false,
        }
    }
}

impl Options {
    pub fn with_tol(tol: f64) -> Self {
        Self {
            rtol: tol,
            atol: tol,
            ..Self::default()
        }
    }
}

/// Counters from one integration.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct Stats {
    pub accepted: usize,
    pub rejected: usize,
    pub evaluations: usize,
}

fn axpy(y: &[f64], h: f64, terms: &[(f64, &[f64])]) -> Vec<f64> {
    let mut out = y.to_vec();
    for (c, k) in terms {
        let w = h * c;
        for (o, ki) in out.iter_mut().zip(k.iter()) {
            *o += w * ki;
        }
    }
    out
}

fn error_norm(err: &[f64], y0: &[f64], y1: &[f64], opts: &Options) -> f64 {
    let n = err.len() as f64;
    let sum: f64 = err
        .iter()
        .zip(y0.iter().zip(y1))
        .map(|(e, (a, b))| {
            let sk = opts.atol + opts.rtol * a.abs().max(b.abs());
            (e / sk).powi(2)
        })
        .sum();
    (sum / n).sqrt()
}

/// Integrates `y' = f(t, y)` from `(t0, y0)` to `t_end` (either direction),
/// returning the solution at every time in `outputs` (which must lie
/// between `t0` and `t_end`, in integration order). `monitor` sees every
/// accepted step end and may abort the run.
pub fn integrate<F, M>(
    mut f: F,
    t0: f64,
    y0: &[f64],
    t_end: f64,
    outputs: &[f64],
    opts: &Options,
    mut monitor: M,
) -> Result<(Vec<Vec<f64>>, Stats)>
where
    F: FnMut(f64, &[f64]) -> Result<Vec<f64>>,
    M: FnMut(f64, &[f64]) -> Result<()>,
{
    if !(opts.rtol > 0.0 && opts.atol > 0.0) {
        return Err(Error::Invalid("tolerances must be positive".into()));
    }
    let dir = if t_end >= t0 { 1.0 } else { -1.0 };
    for w in outputs.windows(2) {
        if (w[1] - w[0]) * dir < 0.0 {
            return Err(Error::Invalid("output times are not in integration order".into()));
        }
    }
    if outputs
        .iter()
        .any(|&t| (t - t0) * dir < 0.0 || (t - t_end) * dir > 0.0)
    {
        return Err(Error::Invalid("output time outside the integration span".into()));
    }

    let mut stats = Stats::default();
    let mut out = Vec::with_capacity(outputs.len());
    let mut next = 0;
    while next < outputs.len() && outputs[next] == t0 {
        out.push(y0.to_vec());
        next += 1;
    }
    if t_end == t0 {
        return Ok((out, stats));
    }

    let mut t = t0;
    let mut y = y0.to_vec();
    let mut k1 = f(t, &y)?;
    stats.evaluations += 1;
    let span = (t_end - t0).abs();
    let mut h = match opts.h_init {
        Some(h) => h.abs().min(span),
        None => initial_step(&mut f, t, &y, &k1, dir, opts, &mut stats)?.min(span),
    }
    .min(opts.h_max);
    let mut facold: f64 = 1e-4;
    let expo1 = 0.2 - BETA * 0.75;
    let mut reject_streak = false;

    loop {
        if stats.accepted + stats.rejected >= opts.max_steps {
            return Err(Error::TooManySteps { t });
        }
        let mut last = false;
        // Exact end time of this step when it must hit a prescribed time.
        let mut landing = None;
        let remaining = (t_end - t).abs();
        if h >= remaining {
            h = remaining;
            last = true;
            landing = Some(t_end);
        }
        if opts.land_on_samples && next < outputs.len() {
            let to_sample = (outputs[next] - t).abs();
            if h >= to_sample && to_sample > 0.0 && to_sample < remaining {
                h = to_sample;
                last = false;
                landing = Some(outputs[next]);
            }
        }
        if h < 1e-14 * t.abs().max(1.0) {
            return Err(Error::StepUnderflow { t });
        }
        let hs = h * dir;

        let k2 = f(t + C2 * hs, &axpy(&y, hs, &[(A21, &k1)]))?;
        let k3 = f(t + C3 * hs, &axpy(&y, hs, &[(A31, &k1), (A32, &k2)]))?;
        let k4 = f(
            t + C4 * hs,
            &axpy(&y, hs, &[(A41, &k1), (A42, &k2), (A43, &k3)]),
        )?;
        let k5 = f(
            t + C5 * hs,
            &axpy(&y, hs, &[(A51, &k1), (A52, &k2), (A53, &k3), (A54, &k4)]),
        )?;
        let ysti = axpy(
            &y,
            hs,
            &[(A61, &k1), (A62, &k2), (A63, &k3), (A64, &k4), (A65, &k5)],
        );
        let t_new = landing.unwrap_or(t + hs);
        let k6 = f(t_new, &ysti)?;
        let y1 = axpy(
            &y,
            hs,
            &[(A71, &k1), (A73, &k3), (A74, &k4), (A75, &k5), (A76, &k6)],
        );
        let k7 = f(t_new, &y1)?;
        stats.evaluations += 6;

        let err: Vec<f64> = (0..y.len())
            .map(|i| hs * (E1 * k1[i] + E3 * k3[i] + E4 * k4[i] + E5 * k5[i] + E6 * k6[i] + E7 * k7[i]))
            .collect();
        let e = error_norm(&err, &y, &y1, opts);
        if !e.is_finite() {
            stats.rejected += 1;
            h *= 0.1;
            reject_streak = true;
            continue;
        }
        let fac11 = e.powf(expo1);
        if e <= 1.0 {
            // Dense output on [t, t_new].
            let dense = |theta: f64| -> Vec<f64> {
                let theta1 = 1.0 - theta;
                (0..y.len())
                    .map(|i| {
                        let r1 = y[i];
                        let r2 = y1[i] - y[i];
                        let r3 = hs * k1[i] - r2;
                        let r4 = r2 - hs * k7[i] - r3;
                        let r5 = hs
                            * (D1 * k1[i] + D3 * k3[i] + D4 * k4[i] + D5 * k5[i] + D6 * k6[i]
                                + D7 * k7[i]);
                        r1 + theta * (r2 + theta1 * (r3 + theta * (r4 + theta1 * r5)))
                    })
                    .collect()
            };
            while next < outputs.len() && (outputs[next] - t_new) * dir <= 0.0 {
                let ts = outputs[next];
                out.push(if ts == t_new {
                    y1.clone()
                } else {
                    dense((ts - t) / hs)
                });
                next += 1;
            }
            monitor(t_new, &y1)?;
            stats.accepted += 1;
            t = t_new;
            y = y1;
            k1 = k7;
            if last || t == t_end {
                while next < outputs.len() {
                    out.push(y.clone());
                    next += 1;
                }
                return Ok((out, stats));
            }
            let fac = (fac11 / facold.powf(BETA) / SAFETY).clamp(1.0 / FAC_MAX, 1.0 / FAC_MIN);
            facold = e.max(1e-4);
            let mut h_new = h / fac;
            if reject_streak {
                h_new = h_new.min(h);
            }
            reject_streak = false;
            h = h_new.min(opts.h_max);
        } else {
            stats.rejected += 1;
            reject_streak = true;
            h /= (fac11 / SAFETY).min(1.0 / FAC_MIN);
        }
    }
}

/// Starting step from the usual two-evaluation heuristic.
fn initial_step<F>(
    f: &mut F,
    t: f64,
    y: &[f64],
    f0: &[f64],
    dir: f64,
    opts: &Options,
    stats: &mut Stats,
) -> Result<f64>
where
    F: FnMut(f64, &[f64]) -> Result<Vec<f64>>,
{
    let n = y.len() as f64;
    let sk: Vec<f64> = y.iter().map(|v| opts.atol + opts.rtol * v.abs()).collect();
    let rms = |v: &[f64]| (v.iter().zip(&sk).map(|(a, s)| (a / s).powi(2)).sum::<f64>() / n).sqrt();
    let dnf = rms(f0);
    let dny = rms(y);
    let mut h = if dnf <= 1e-10 || dny <= 1e-10 {
        1e-6
    } else {
        0.01 * dny / dnf
    };
    h = h.min(opts.h_max);
    let y1 = axpy(y, h * dir, &[(1.0, f0)]);
    let f1 = f(t + h * dir, &y1)?;
    stats.evaluations += 1;
    let diff: Vec<f64> = f1.iter().zip(f0).map(|(a, b)| a - b).collect();
    let der2 = rms(&diff) / h;
    let der12 = der2.max(dnf);
    let h1 = if der12 <= 1e-15 {
        (h * 1e-3).max(1e-6)
    } else {
        (0.01 / der12).powf(0.2)
    };
    Ok((100.0 * h).min(h1).min(opts.h_max))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exponential_decay_to_tolerance() {
        let ts: Vec<f64> = (0..=10).map(|i| i as f64 * 0.5).collect();
        let (ys, stats) = integrate(
            |_, y| Ok(vec![-y[0]]),
            0.0,
            &[1.0],
            5.0,
            &ts,
            &Options::default(),
            |_, _| Ok(()),
        )
        .unwrap();
        for (t, y) in ts.iter().zip(&ys) {
            assert!((y[0] - (-t).exp()).abs() < 1e-9, "t={t}");
        }
        assert!(stats.accepted > 5);
    }

    #[test]
    fn harmonic_oscillator_backward_with_dense_output() {
        let ts: Vec<f64> = (0..=40).map(|i| -0.25 * i as f64).collect();
        let (ys, _) = integrate(
            |_, y| Ok(vec![y[1], -y[0]]),
            0.0,
            &[0.0, 1.0],
            -10.0,
            &ts,
            &Options::default(),
            |_, _| Ok(()),
        )
        .unwrap();
        for (t, y) in ts.iter().zip(&ys) {
            assert!((y[0] - t.sin()).abs() < 1e-8, "t={t}: {}", y[0] - t.sin());
            assert!((y[1] - t.cos()).abs() < 1e-8);
        }
    }

    #[test]
    fn landing_mode_hits_sample_times() {
        let ts = [0.1, 0.2, 0.7];
        let mut hits = Vec::new();
        integrate(
            |_, y| Ok(vec![y[0]]),
            0.0,
            &[1.0],
            1.0,
            &ts,
            &Options {
                land_on_samples: true,
                ..Options::default()
            },
            |t, _| {
                hits.push(t);
                Ok(())
            },
        )
        .unwrap();
        for s in ts {
            assert!(hits.contains(&s));
        }
    }

    #[test]
    fn blow_up_underflows() {
        let r = integrate(
            |_, y| Ok(vec![y[0] * y[0]]),
            0.0,
            &[1.0],
            2.0,
            &[],
            &Options::default(),
            |_, _| Ok(()),
        );
        match r {
            Err(Error::StepUnderflow { t }) | Err(Error::TooManySteps { t }) => {
                assert!(t < 1.0 && t > 0.99)
            }
            other => panic!("{other:?}"),
        }
    }
}
