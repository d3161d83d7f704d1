//! Asymptotic order estimation and coefficient extraction on geometric
//! ladders `s_k → 0`.

use crate::error::{Error, Result};

/// Minimum number of samples above the noise floor for a fit.
pub const MIN_USED_POINTS: usize = 3;

/// Drift in local slopes across the ladder above which a monotone slope
/// trend is reported as a likely logarithmic correction.
pub const CURVATURE_DRIFT: f64 = 0.05;

/// The dyadic ladder `s = 2^{−k}`, `k = first..=last`, in decreasing `s`.
pub fn dyadic_ladder(first: i32, last: i32) -> Vec<f64> {
    (first..=last).map(|k| 2f64.powi(-k)).collect()
}

/// Least-squares fit of `log value` against `log s`.
#[derive(Debug, Clone, PartialEq)]
pub struct OrderFit {
    pub samples: Vec<(f64, f64)>,
    pub slope: f64,
    pub intercept: f64,
    pub r2: f64,
    pub noise_floor: f64,
    pub used_points: usize,
    /// Slopes between consecutive used points, in ladder order.
    pub local_slopes: Vec<f64>,
    /// Local slopes drift monotonically, the signature of a `log s` factor.
    pub curvature_flag: bool,
}

fn check_ladder(samples: &[(f64, f64)]) -> Result<()> {
    for w in samples.windows(2) {
        if !(w[1].0 < w[0].0) {
            return Err(Error::Invalid("ladder must be strictly decreasing in s".into()));
        }
    }
    if samples.iter().any(|&(s, _)| !(s > 0.0)) {
        return Err(Error::Invalid("ladder values of s must be positive".into()));
    }
    Ok(())
}

/// Fits `value ≈ C s^slope` using the samples with `value > 10·noise_floor`.
///
/// Fails with [`Error::AtNoiseFloor`] when fewer than three samples are
/// usable; for claims of vanishing that outcome counts as success.
pub fn estimate_order(samples: &[(f64, f64)], noise_floor: f64) -> Result<OrderFit> {
    check_ladder(samples)?;
    let used: Vec<(f64, f64)> = samples
        .iter()
        .filter(|&&(_, v)| v.is_finite() && v > 10.0 * noise_floor && v > 0.0)
        .map(|&(s, v)| (s.ln(), v.ln()))
        .collect();
    if used.len() < MIN_USED_POINTS {
        return Err(Error::AtNoiseFloor { used: used.len() });
    }
    let m = used.len() as f64;
    let mx = used.iter().map(|p| p.0).sum::<f64>() / m;
    let my = used.iter().map(|p| p.1).sum::<f64>() / m;
    let sxx: f64 = used.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = used.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let syy: f64 = used.iter().map(|p| (p.1 - my).powi(2)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let sse: f64 = used.iter().map(|p| (p.1 - intercept - slope * p.0).powi(2)).sum();
    let r2 = if syy > 0.0 { 1.0 - sse / syy } else { 1.0 };
    let local_slopes: Vec<f64> = used.windows(2).map(|w| (w[1].1 - w[0].1) / (w[1].0 - w[0].0)).collect();
    let curvature_flag = local_slopes.len() >= 2 && {
        let d: Vec<f64> = local_slopes.windows(2).map(|w| w[1] - w[0]).collect();
        let monotone = d.iter().all(|&x| x > 0.0) || d.iter().all(|&x| x < 0.0);
        let drift = (local_slopes[local_slopes.len() - 1] - local_slopes[0]).abs();
        monotone && drift > CURVATURE_DRIFT
    };
    Ok(OrderFit {
        samples: samples.to_vec(),
        slope,
        intercept,
        r2,
        noise_floor,
        used_points: used.len(),
        local_slopes,
        curvature_flag,
    })
}

/// Extrapolated limit of `value/s^k` with an error estimate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Coefficient {
    pub value: f64,
    pub error: f64,
}

/// Richardson extrapolation of `value/s^k` to `s = 0` on a geometric
/// ladder, assuming corrections in integer powers of `s`.
///
/// The extrapolation level with the smallest difference to its
/// predecessor is reported. Fails with [`Error::NonConvergent`] when the
/// raw ratios diverge along the ladder.
pub fn extract_coefficient(samples: &[(f64, f64)], k: i32) -> Result<Coefficient> {
    check_ladder(samples)?;
    if samples.len() < 3 {
        return Err(Error::Invalid("coefficient extraction needs at least 3 samples".into()));
    }
    let q = samples[0].0 / samples[1].0;
    for w in samples.windows(2) {
        if ((w[0].0 / w[1].0) / q - 1.0).abs() > 1e-9 {
            return Err(Error::Invalid("coefficient extraction needs a geometric ladder".into()));
        }
    }
    let r: Vec<f64> = samples.iter().map(|&(s, v)| v / s.powi(k)).collect();
    let scale = r.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    let n = r.len();
    // Convergent ratios shrink their increments by about 1/q per step; a
    // single growing increment can come from cancellation, two cannot.
    let d: Vec<f64> = r.windows(2).map(|w| (w[1] - w[0]).abs()).collect();
    let m = d.len();
    let growing = |i: usize| d[i] > 0.75 * q * d[i - 1] && d[i] > 1e-12 * scale;
    if m >= 3 && growing(m - 1) && growing(m - 2) {
        return Err(Error::NonConvergent { estimate: r[n - 1] });
    }
    // table[m][j]: level-m extrapolant from samples j..=j+m.
    let mut table = vec![r.clone()];
    for m in 1..n {
        let prev = &table[m - 1];
        let f = q.powi(m as i32);
        let next: Vec<f64> = (0..n - m).map(|j| (f * prev[j + 1] - prev[j]) / (f - 1.0)).collect();
        table.push(next);
    }
    let diag: Vec<f64> = (0..n).map(|m| table[m][n - 1 - m]).collect();
    let mut best = Coefficient {
        value: diag[1],
        error: (diag[1] - diag[0]).abs(),
    };
    for m in 2..n {
        let e = (diag[m] - diag[m - 1]).abs();
        if e < best.error {
            best = Coefficient { value: diag[m], error: e };
        }
    }
    Ok(best)
}
